//! Artifact files: atomic writes, diagnostics and table CSVs, run orchestration.

use std::fmt::Write as _;
use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use crate::config::RunConfig;
use crate::error::{Error, Result};
use crate::stepper::{initial_state, run, StepDiagnostics};
use crate::verification::{
    convergence_study, ErrorAccumulator, ErrorReport, ErrorRow, LevelErrors, LevelSpec,
};

pub const DIAGNOSTICS_HEADER: &str =
    "m,t,length,dissipation,work,area,umax,kmin,kmax,equi_ratio,vol_proj_res";

/// Writes through a temporary file in the target directory and renames it into place.
pub fn write_atomic(path: &Path, contents: &[u8]) -> Result<()> {
    let dir = path
        .parent()
        .filter(|p| !p.as_os_str().is_empty())
        .unwrap_or(Path::new("."));
    fs::create_dir_all(dir)?;
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    tmp.write_all(contents)?;
    tmp.as_file().sync_all()?;
    tmp.persist(path).map_err(|e| Error::Io(e.error))?;
    Ok(())
}

pub fn diagnostics_to_csv(rows: &[StepDiagnostics]) -> String {
    let mut s = String::from(DIAGNOSTICS_HEADER);
    s.push('\n');
    for d in rows {
        let _ = write!(s, "{}", d.m);
        for v in [
            d.t,
            d.length,
            d.dissipation,
            d.work,
            d.area,
            d.umax,
            d.kmin,
            d.kmax,
            d.equi_ratio,
            d.vol_proj_res,
        ] {
            let _ = write!(s, ",{v:.16e}");
        }
        s.push('\n');
    }
    s
}

pub fn parse_diagnostics_csv(text: &str) -> Result<Vec<StepDiagnostics>> {
    let mut rdr = csv::Reader::from_reader(text.as_bytes());
    let header: Vec<String> = rdr
        .headers()
        .map_err(|e| Error::Parse(e.to_string()))?
        .iter()
        .map(str::to_string)
        .collect();
    if header.join(",") != DIAGNOSTICS_HEADER {
        return Err(Error::Parse(format!(
            "unexpected diagnostics header '{}'",
            header.join(",")
        )));
    }
    let mut out = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| Error::Parse(e.to_string()))?;
        let bad =
            |c: usize| Error::Parse(format!("row {}: bad value in column {}", i + 1, header[c]));
        let m = rec[0].parse::<usize>().map_err(|_| bad(0))?;
        let mut v = [0.0; 10];
        for (c, slot) in v.iter_mut().enumerate() {
            *slot = rec
                .get(c + 1)
                .ok_or_else(|| bad(c + 1))?
                .parse::<f64>()
                .map_err(|_| bad(c + 1))?;
        }
        out.push(StepDiagnostics {
            m,
            t: v[0],
            length: v[1],
            dissipation: v[2],
            work: v[3],
            area: v[4],
            umax: v[5],
            kmin: v[6],
            kmax: v[7],
            equi_ratio: v[8],
            vol_proj_res: v[9],
        });
    }
    Ok(out)
}

/// A parsed table CSV: header names and rows of optional numbers (labels kept as text).
#[derive(Clone, Debug, PartialEq)]
pub struct Table {
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn column(&self, name: &str) -> Option<usize> {
        self.header.iter().position(|h| h == name)
    }

    /// Numeric value of a cell; empty cells are `None`.
    pub fn value(&self, row: usize, name: &str) -> Result<Option<f64>> {
        let c = self
            .column(name)
            .ok_or_else(|| Error::Parse(format!("no column '{name}'")))?;
        let cell = self.rows[row].get(c).map(String::as_str).unwrap_or("");
        if cell.is_empty() {
            return Ok(None);
        }
        cell.parse::<f64>().map(Some).map_err(|_| {
            Error::Parse(format!(
                "row {row}: '{cell}' in column '{name}' is not a number"
            ))
        })
    }
}

pub fn parse_table_csv(text: &str) -> Result<Table> {
    let mut rdr = csv::Reader::from_reader(text.as_bytes());
    let header = rdr
        .headers()
        .map_err(|e| Error::Parse(e.to_string()))?
        .iter()
        .map(str::to_string)
        .collect::<Vec<_>>();
    let mut rows = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| Error::Parse(e.to_string()))?;
        if rec.len() != header.len() {
            return Err(Error::Parse(format!(
                "row has {} cells, header has {}",
                rec.len(),
                header.len()
            )));
        }
        rows.push(rec.iter().map(str::to_string).collect());
    }
    Ok(Table { header, rows })
}

/// Everything `run` produced.
#[derive(Clone, Debug)]
pub struct RunOutcome {
    pub diagnostics: Vec<StepDiagnostics>,
    pub errors: Option<LevelErrors>,
    pub files: Vec<PathBuf>,
}

fn dump_path(dir: &Path, kind: &str, m: usize) -> PathBuf {
    dir.join(format!("{kind}_{m:06}.txt"))
}

/// Runs one configured simulation and writes its artifacts below `out`.
///
/// Files: `diagnostics.csv`; `interface_<m>.txt` and `bulk_<m>.txt` every `dump_every` steps
/// (the bulk dump is the mesh the step to `t_m` was solved on, with element labels);
/// `errors.csv` when the problem has an exact solution.
pub fn run_config(cfg: &RunConfig, out: &Path) -> Result<RunOutcome> {
    let setup = cfg.setup()?;
    let iface = cfg.initial_interface()?;
    let exact = cfg.exact_solution()?;
    let mut acc = exact
        .clone()
        .map(|s| ErrorAccumulator::new(s, cfg.tau, cfg.pressure_mode(), cfg.xfem))
        .transpose()?;
    let mut files = Vec::new();
    if cfg.dump_every > 0 {
        let st = initial_state(&setup, iface.clone())?;
        let labels = st.bulk.classify_elements(&st.interface)?;
        let p = dump_path(out, "interface", 0);
        write_atomic(&p, st.interface.to_text().as_bytes())?;
        files.push(p);
        let p = dump_path(out, "bulk", 0);
        write_atomic(&p, st.bulk.to_text(Some(&labels)).as_bytes())?;
        files.push(p);
    }
    let summary = run(&setup, iface, |rec| {
        if let Some(a) = acc.as_mut() {
            a.observe(rec)?;
        }
        let m = rec.diagnostics.m;
        if cfg.dump_every > 0 && m % cfg.dump_every == 0 {
            let p = dump_path(out, "interface", m);
            write_atomic(&p, rec.new_interface.to_text().as_bytes())?;
            files.push(p);
            let p = dump_path(out, "bulk", m);
            write_atomic(&p, rec.bulk.to_text(Some(&rec.classification)).as_bytes())?;
            files.push(p);
        }
        Ok(())
    })?;
    let p = out.join("diagnostics.csv");
    write_atomic(&p, diagnostics_to_csv(&summary.diagnostics).as_bytes())?;
    files.push(p);
    let errors = acc.map(|a| a.finish());
    if let Some(e) = errors {
        let report = ErrorReport::from_rows(
            vec![ErrorRow {
                level: 0,
                h_label: cfg.h_label(),
                h: cfg.h_f,
                tau: cfg.tau,
                errors: e,
                rates: [None; 3],
            }],
            e.err_pc.is_some(),
        );
        let p = out.join("errors.csv");
        write_atomic(&p, report.to_csv().as_bytes())?;
        files.push(p);
    }
    Ok(RunOutcome {
        diagnostics: summary.diagnostics,
        errors,
        files,
    })
}

/// Runs the given refinement levels of a bubble problem and writes `table.csv` below `out`.
pub fn converge_config(
    cfg: &RunConfig,
    levels: &[u32],
    out: &Path,
    parallel: bool,
) -> Result<ErrorReport> {
    let sol = cfg.exact_solution()?.ok_or_else(|| {
        Error::config("converge needs problem = stationary_bubble or expanding_bubble")
    })?;
    if levels.is_empty() {
        return Err(Error::config("no levels given"));
    }
    let specs = levels
        .iter()
        .map(|&k| {
            let c = cfg.level(k);
            Ok(LevelSpec {
                h_label: c.h_label(),
                h: c.h_f,
                setup: c.setup()?,
                interface: c.initial_interface()?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let report = convergence_study(&specs, &sol, cfg.pressure_mode(), parallel)?;
    write_atomic(&out.join("table.csv"), report.to_csv().as_bytes())?;
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::parse_config;

    #[test]
    fn atomic_write_replaces_and_leaves_no_temp() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("sub").join("a.txt");
        write_atomic(&p, b"one").unwrap();
        write_atomic(&p, b"two").unwrap();
        assert_eq!(fs::read_to_string(&p).unwrap(), "two");
        assert_eq!(fs::read_dir(p.parent().unwrap()).unwrap().count(), 1);
    }

    #[test]
    fn diagnostics_round_trip() {
        let rows = vec![
            StepDiagnostics {
                m: 0,
                t: 0.0,
                length: std::f64::consts::PI,
                kmin: f64::INFINITY,
                kmax: f64::NEG_INFINITY,
                ..Default::default()
            },
            StepDiagnostics {
                m: 1,
                t: 0.01,
                length: 3.1,
                dissipation: 1e-300,
                work: -2.5e-17,
                area: std::f64::consts::FRAC_PI_4,
                umax: 1.0 / 3.0,
                kmin: -2.0,
                kmax: -1.9,
                equi_ratio: 1.0000001,
                vol_proj_res: 4e-18,
            },
        ];
        let text = diagnostics_to_csv(&rows);
        assert!(text.starts_with(DIAGNOSTICS_HEADER));
        assert_eq!(parse_diagnostics_csv(&text).unwrap(), rows);
        assert!(parse_diagnostics_csv("m,t\n0,1\n").is_err());
    }

    #[test]
    fn stationary_run_writes_artifacts_deterministically() {
        let cfg = parse_config(
            "problem = stationary_bubble\nxfem = on\nn_gamma = 32\nh = 0.5\ntau = 1e-2\nt_end = 3e-2\ndump_every = 2\n",
        )
        .unwrap();
        let a = tempfile::tempdir().unwrap();
        let b = tempfile::tempdir().unwrap();
        let out = run_config(&cfg, a.path()).unwrap();
        run_config(&cfg, b.path()).unwrap();
        assert_eq!(out.diagnostics.len(), 4);
        assert!(out.diagnostics[1..].iter().all(|d| d.umax <= 1e-10));
        for name in [
            "diagnostics.csv",
            "errors.csv",
            "interface_000000.txt",
            "bulk_000002.txt",
        ] {
            let x = fs::read(a.path().join(name)).unwrap();
            assert_eq!(x, fs::read(b.path().join(name)).unwrap(), "{name}");
        }
        let d =
            parse_diagnostics_csv(&fs::read_to_string(a.path().join("diagnostics.csv")).unwrap())
                .unwrap();
        assert_eq!(d, out.diagnostics);
        let t = parse_table_csv(&fs::read_to_string(a.path().join("errors.csv")).unwrap()).unwrap();
        assert!(t.value(0, "err_U").unwrap().unwrap() <= 1e-10);
        assert!(t.column("err_lambda").is_some());
        let iface = crate::interface::InterfaceMesh::from_text(
            &fs::read_to_string(a.path().join("interface_000002.txt")).unwrap(),
        )
        .unwrap();
        assert_eq!(iface.num_vertices(), 32);
        let (v, t, labels) = crate::bulk::BulkMesh::parse_text(
            &fs::read_to_string(a.path().join("bulk_000002.txt")).unwrap(),
        )
        .unwrap();
        assert!(!v.is_empty() && labels.unwrap().len() == t.len());
    }

    #[test]
    fn converge_writes_table() {
        let cfg = parse_config(
            "problem = stationary_bubble\nn_gamma = 16\nh = 1.0\ntau = 1e-2\nt_end = 2e-2\n",
        )
        .unwrap();
        let dir = tempfile::tempdir().unwrap();
        let rep = converge_config(&cfg, &[0, 1], dir.path(), true).unwrap();
        assert_eq!(rep.rows.len(), 2);
        let t =
            parse_table_csv(&fs::read_to_string(dir.path().join("table.csv")).unwrap()).unwrap();
        assert_eq!(t.rows.len(), 3);
        assert_eq!(t.rows[2][0], "fit");
        assert!(t.value(1, "rate_X").unwrap().is_some());
    }
}
