//! Flat `key = value` run configuration.

use std::collections::BTreeMap;
use std::path::PathBuf;
use std::str::FromStr;

use crate::assembly::Scheme;
use crate::bulk::{Domain, DEFAULT_ELEMENT_BUDGET};
use crate::error::{Error, Result};
use crate::fe::ElementPair;
use crate::interface::InterfaceMesh;
use crate::solver::DEFAULT_TOL;
use crate::stepper::{make_initial_interface, InitialInterface, Setup};
use crate::verification::{ExactSolution, PressureMode};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Problem {
    StationaryBubble,
    ExpandingBubble,
    Relaxation,
    Custom,
}

impl FromStr for Problem {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "stationary_bubble" => Ok(Problem::StationaryBubble),
            "expanding_bubble" => Ok(Problem::ExpandingBubble),
            "relaxation" => Ok(Problem::Relaxation),
            "custom" => Ok(Problem::Custom),
            _ => Err(format!("unknown problem '{s}'")),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum DomainKind {
    Square,
    Hole,
}

impl DomainKind {
    pub fn domain(self) -> Domain {
        match self {
            DomainKind::Square => Domain::unit_square(),
            DomainKind::Hole => Domain::square_with_hole(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum InitialShape {
    Uniform,
    Fig4,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub problem: Problem,
    pub element: ElementPair,
    pub xfem: bool,
    pub scheme: Scheme,
    pub domain: DomainKind,
    pub mu_minus: f64,
    pub mu_plus: f64,
    pub gamma: f64,
    pub alpha: f64,
    pub n_gamma: usize,
    pub radius: f64,
    pub initial: InitialShape,
    pub h_f: f64,
    pub h_c: f64,
    pub tau: f64,
    pub t_end: f64,
    pub out: PathBuf,
    /// Interface and bulk dumps every this many steps; 0 disables them.
    pub dump_every: usize,
    pub solver_tol: f64,
    pub eliminate: bool,
    pub element_budget: usize,
    /// Factor applied to `tau` per level in a convergence study.
    pub level_tau_factor: f64,
    pub pressure_errors: Option<PressureMode>,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            problem: Problem::Custom,
            element: ElementPair::P2P1,
            xfem: false,
            scheme: Scheme::Main,
            domain: DomainKind::Square,
            mu_minus: 1.0,
            mu_plus: 1.0,
            gamma: 1.0,
            alpha: 0.15,
            n_gamma: 64,
            radius: 0.5,
            initial: InitialShape::Uniform,
            h_f: 0.0,
            h_c: 0.0,
            tau: 0.0,
            t_end: 0.0,
            out: PathBuf::from("out"),
            dump_every: 0,
            solver_tol: DEFAULT_TOL,
            eliminate: false,
            element_budget: DEFAULT_ELEMENT_BUDGET,
            level_tau_factor: 1.0,
            pressure_errors: None,
        }
    }
}

const KEYS: &[&str] = &[
    "problem",
    "element",
    "xfem",
    "scheme",
    "domain",
    "mu_minus",
    "mu_plus",
    "mu",
    "gamma",
    "alpha",
    "n_gamma",
    "radius",
    "initial",
    "h",
    "h_f",
    "h_c",
    "tau",
    "t_end",
    "out",
    "dump_every",
    "solver_tol",
    "eliminate",
    "element_budget",
    "level_tau_factor",
    "pressure_errors",
];

fn parse_bool(s: &str) -> std::result::Result<bool, String> {
    match s {
        "on" | "true" | "yes" | "1" => Ok(true),
        "off" | "false" | "no" | "0" => Ok(false),
        _ => Err(format!("expected on/off, got '{s}'")),
    }
}

fn parse_mode(s: &str) -> std::result::Result<PressureMode, String> {
    match s {
        "none" => Ok(PressureMode::None),
        "full" => Ok(PressureMode::Full),
        "split" => Ok(PressureMode::Split),
        _ => Err(format!("expected none/full/split, got '{s}'")),
    }
}

/// Parses and validates a configuration, reporting every problem at once.
pub fn parse_config(text: &str) -> Result<RunConfig> {
    let mut errs = Vec::new();
    let mut map: BTreeMap<String, (usize, String)> = BTreeMap::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let Some((k, v)) = line.split_once('=') else {
            errs.push(format!("line {}: expected key = value", i + 1));
            continue;
        };
        let (k, v) = (k.trim().to_string(), v.trim().to_string());
        if !KEYS.contains(&k.as_str()) {
            errs.push(format!("line {}: unknown key '{k}'", i + 1));
            continue;
        }
        if map.insert(k.clone(), (i + 1, v)).is_some() {
            errs.push(format!("line {}: duplicate key '{k}'", i + 1));
        }
    }

    let mut c = RunConfig::default();
    macro_rules! field {
        ($key:literal, $target:expr, $parse:expr) => {
            if let Some((line, v)) = map.get($key) {
                match $parse(v.as_str()) {
                    Ok(x) => $target = x,
                    Err(e) => errs.push(format!("line {}: {}: {}", line, $key, e)),
                }
            }
        };
    }
    let num = |s: &str| {
        s.parse::<f64>()
            .map_err(|_| format!("expected a number, got '{s}'"))
    };
    let int = |s: &str| {
        s.parse::<usize>()
            .map_err(|_| format!("expected a nonnegative integer, got '{s}'"))
    };
    let domain = |s: &str| match s {
        "square" => Ok(DomainKind::Square),
        "hole" => Ok(DomainKind::Hole),
        _ => Err(format!("expected square/hole, got '{s}'")),
    };
    let initial = |s: &str| match s {
        "uniform" => Ok(InitialShape::Uniform),
        "fig4" => Ok(InitialShape::Fig4),
        _ => Err(format!("expected uniform/fig4, got '{s}'")),
    };

    match map.get("problem") {
        None => errs.push("missing key 'problem'".into()),
        Some((line, v)) => match v.parse::<Problem>() {
            Ok(p) => c.problem = p,
            Err(e) => errs.push(format!("line {line}: problem: {e}")),
        },
    }
    match c.problem {
        Problem::ExpandingBubble => c.domain = DomainKind::Hole,
        Problem::Relaxation => c.initial = InitialShape::Fig4,
        _ => {}
    }
    field!("element", c.element, |s: &str| s.parse::<ElementPair>());
    field!("xfem", c.xfem, parse_bool);
    field!("scheme", c.scheme, |s: &str| s.parse::<Scheme>());
    field!("domain", c.domain, domain);
    let mut mu = None;
    field!("mu", mu, |s| num(s).map(Some));
    if let Some(m) = mu {
        c.mu_minus = m;
        c.mu_plus = m;
    }
    field!("mu_minus", c.mu_minus, num);
    field!("mu_plus", c.mu_plus, num);
    field!("gamma", c.gamma, num);
    field!("alpha", c.alpha, num);
    field!("n_gamma", c.n_gamma, int);
    field!("radius", c.radius, num);
    field!("initial", c.initial, initial);
    let mut h = None;
    field!("h", h, |s| num(s).map(Some));
    if let Some(h) = h {
        c.h_f = h;
        c.h_c = h;
    }
    field!("h_f", c.h_f, num);
    field!("h_c", c.h_c, num);
    field!("tau", c.tau, num);
    field!("t_end", c.t_end, num);
    field!("out", c.out, |s: &str| Ok::<_, String>(PathBuf::from(s)));
    field!("dump_every", c.dump_every, int);
    field!("solver_tol", c.solver_tol, num);
    field!("eliminate", c.eliminate, parse_bool);
    field!("element_budget", c.element_budget, int);
    field!("level_tau_factor", c.level_tau_factor, num);
    field!("pressure_errors", c.pressure_errors, |s| parse_mode(s)
        .map(Some));

    for key in ["n_gamma", "tau", "t_end"] {
        if !map.contains_key(key) {
            errs.push(format!("missing key '{key}'"));
        }
    }
    let has_h = map.contains_key("h");
    if !has_h && !(map.contains_key("h_f") && map.contains_key("h_c")) {
        errs.push("missing mesh size: give 'h' or both 'h_f' and 'h_c'".into());
    }
    errs.extend(c.violations(&map));
    if errs.is_empty() {
        Ok(c)
    } else {
        Err(Error::Config(errs))
    }
}

impl RunConfig {
    fn violations(&self, map: &BTreeMap<String, (usize, String)>) -> Vec<String> {
        let set = |k: &str| map.contains_key(k);
        let mut v = Vec::new();
        if (set("mu_minus") || set("mu")) && !(self.mu_minus > 0.0) {
            v.push(format!("mu_minus = {} must be positive", self.mu_minus));
        }
        if (set("mu_plus") || set("mu")) && !(self.mu_plus > 0.0) {
            v.push(format!("mu_plus = {} must be positive", self.mu_plus));
        }
        if set("gamma") && !(self.gamma >= 0.0) {
            v.push(format!("gamma = {} must be nonnegative", self.gamma));
        }
        if set("tau") && !(self.tau > 0.0) {
            v.push(format!("tau = {} must be positive", self.tau));
        }
        if set("t_end") && !(self.t_end >= 0.0) {
            v.push(format!("t_end = {} must be nonnegative", self.t_end));
        }
        if set("n_gamma") && self.n_gamma < 8 {
            v.push(format!("n_gamma = {} must be at least 8", self.n_gamma));
        }
        if set("radius") && !(self.radius > 0.0) {
            v.push(format!("radius = {} must be positive", self.radius));
        }
        if (set("h") || set("h_f") || set("h_c")) && !(self.h_f > 0.0 && self.h_c > 0.0) {
            v.push("mesh sizes must be positive".into());
        }
        if self.h_f > self.h_c {
            v.push(format!("h_f = {} exceeds h_c = {}", self.h_f, self.h_c));
        }
        if set("solver_tol") && !(self.solver_tol > 0.0) {
            v.push(format!("solver_tol = {} must be positive", self.solver_tol));
        }
        if set("level_tau_factor") && !(self.level_tau_factor > 0.0) {
            v.push(format!(
                "level_tau_factor = {} must be positive",
                self.level_tau_factor
            ));
        }
        if self.problem == Problem::ExpandingBubble && self.domain != DomainKind::Hole {
            v.push("expanding_bubble requires domain = hole (origin excluded)".into());
        }
        if self.pressure_errors == Some(PressureMode::Split) && !self.xfem {
            v.push("pressure_errors = split requires xfem = on".into());
        }
        v
    }

    /// Exact solution for the bubble problems.
    pub fn exact_solution(&self) -> Result<Option<ExactSolution>> {
        let d = self.domain.domain();
        Ok(match self.problem {
            Problem::StationaryBubble => {
                Some(ExactSolution::stationary(self.radius, self.gamma, d))
            }
            Problem::ExpandingBubble => Some(ExactSolution::expanding(
                self.radius,
                self.alpha,
                self.gamma,
                self.mu_minus,
                self.mu_plus,
                d,
            )?),
            _ => None,
        })
    }

    pub fn pressure_mode(&self) -> PressureMode {
        self.pressure_errors.unwrap_or(if self.xfem {
            PressureMode::Split
        } else {
            PressureMode::Full
        })
    }

    pub fn setup(&self) -> Result<Setup> {
        let mut s = Setup::new(self.domain.domain(), self.tau, self.t_end, self.h_c);
        s.h_f = self.h_f;
        s.pair = self.element;
        s.xfem = self.xfem;
        s.scheme = self.scheme;
        s.mu_minus = self.mu_minus;
        s.mu_plus = self.mu_plus;
        s.gamma = self.gamma;
        s.solver_tol = self.solver_tol;
        s.eliminate_curvature = self.eliminate;
        s.element_budget = self.element_budget;
        if let Some(sol) = self.exact_solution()? {
            s.boundary = sol.boundary_field();
        }
        Ok(s)
    }

    pub fn initial_interface(&self) -> Result<InterfaceMesh> {
        make_initial_interface(match self.initial {
            InitialShape::Uniform => InitialInterface::UniformCircle {
                n: self.n_gamma,
                radius: self.radius,
            },
            InitialShape::Fig4 => InitialInterface::Fig4Nonuniform {
                n: self.n_gamma,
                radius: self.radius,
            },
        })
    }

    /// Level `k` of a convergence study: mesh sizes halved and `n_gamma` doubled `k` times,
    /// `tau` scaled by `level_tau_factor^k`.
    pub fn level(&self, k: u32) -> RunConfig {
        let f = 0.5f64.powi(k as i32);
        RunConfig {
            h_f: self.h_f * f,
            h_c: self.h_c * f,
            n_gamma: self.n_gamma << k,
            tau: self.tau * self.level_tau_factor.powi(k as i32),
            out: self.out.join(format!("level{k}")),
            ..self.clone()
        }
    }

    /// Table label of a level: `1/h_f`, to six significant digits.
    pub fn h_label(&self) -> String {
        format!("{:.6}", 1.0 / self.h_f)
            .trim_end_matches('0')
            .trim_end_matches('.')
            .to_string()
    }
}
