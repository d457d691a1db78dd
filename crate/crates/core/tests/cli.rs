use std::path::Path;
use std::process::Command;

use stokes2p::io::{parse_diagnostics_csv, parse_table_csv};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_stokes2p"))
}

fn write_config(dir: &Path, text: &str) -> std::path::PathBuf {
    let p = dir.join("run.cfg");
    std::fs::write(&p, text).unwrap();
    p
}

#[test]
fn selftest_filter_exits_zero() {
    let out = bin()
        .args(["selftest", "--filter", "shoelace"])
        .output()
        .unwrap();
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let text = String::from_utf8_lossy(&out.stdout);
    assert!(text.starts_with("PASS shoelace_area"), "{text}");
}

#[test]
fn unknown_selftest_is_a_config_error() {
    let out = bin()
        .args(["selftest", "--filter", "nothing_matches"])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn invalid_config_lists_every_problem() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "problem = stationary_bubble\nh_f = 0.5\nh_c = 0.25\ntau = -1\nbogus = 3\n",
    );
    let out = bin()
        .args(["run", "--config"])
        .arg(&cfg)
        .arg("--out")
        .arg(dir.path().join("o"))
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    for needle in ["h_f", "h_c", "tau", "bogus"] {
        assert!(err.contains(needle), "missing {needle}: {err}");
    }
    assert!(!dir.path().join("o").join("diagnostics.csv").exists());
}

#[test]
fn stationary_run_with_enrichment_has_no_spurious_velocity() {
    let dir = tempfile::tempdir().unwrap();
    let text = "problem = stationary_bubble\nelement = p2p1\nxfem = on\nn_gamma = 64\nh = 0.35355339059327373\ntau = 1e-2\nt_end = 0.2\ndump_every = 10\n";
    let cfg = write_config(dir.path(), text);
    let outs: Vec<_> = ["a", "b"]
        .iter()
        .map(|name| {
            let o = dir.path().join(name);
            let out = bin()
                .args(["run", "--config"])
                .arg(&cfg)
                .arg("--out")
                .arg(&o)
                .output()
                .unwrap();
            assert!(out.status.success());
            o
        })
        .collect();
    let csv = std::fs::read_to_string(outs[0].join("diagnostics.csv")).unwrap();
    let rows = parse_diagnostics_csv(&csv).unwrap();
    assert_eq!(rows.len(), 21);
    assert!(rows.iter().all(|r| r.umax <= 1e-10));
    assert_eq!(
        csv,
        std::fs::read_to_string(outs[1].join("diagnostics.csv")).unwrap()
    );
    assert!(outs[0].join("interface_000020.txt").exists());
}

#[test]
fn converge_writes_a_rate_table() {
    let dir = tempfile::tempdir().unwrap();
    let text = "problem = stationary_bubble\nelement = p2p1\nn_gamma = 16\nh = 0.7071067811865476\ntau = 1e-2\nt_end = 0.05\n";
    let cfg = write_config(dir.path(), text);
    let out = dir.path().join("conv");
    let res = bin()
        .args(["converge", "--config"])
        .arg(&cfg)
        .args(["--levels", "0,1"])
        .arg("--out")
        .arg(&out)
        .output()
        .unwrap();
    assert!(res.status.success());
    let table = parse_table_csv(&std::fs::read_to_string(out.join("table.csv")).unwrap()).unwrap();
    assert_eq!(table.rows.len(), 3);
    assert!(table.value(1, "rate_X").unwrap().is_some());
}

#[test]
fn shipped_configs_parse() {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs");
    let mut n = 0;
    for entry in std::fs::read_dir(dir).unwrap() {
        let path = entry.unwrap().path();
        let text = std::fs::read_to_string(&path).unwrap();
        stokes2p::config::parse_config(&text).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
        n += 1;
    }
    assert_eq!(n, 3);
}
