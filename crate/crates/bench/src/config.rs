//! JSON experiment configuration.
//!
//! A config names an environment, a case and a method; everything else is
//! optional and filled from per-environment defaults by [`load_config`].
//! Obstacle layouts and initial states are figure-read reconstructions,
//! not published numbers.

use std::f64::consts::PI;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use trajsqp::{GammaSchedule, HessianMode, Method, SolverOptions};

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{path}: {source}")]
    Parse { path: PathBuf, source: serde_json::Error },
    #[error("invalid config: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EnvName {
    Car,
    Acrobot,
    Quadpend,
}

impl EnvName {
    pub fn cases(self) -> usize {
        match self {
            EnvName::Car => 3,
            EnvName::Acrobot => 1,
            EnvName::Quadpend => 2,
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            EnvName::Car => "car",
            EnvName::Acrobot => "acrobot",
            EnvName::Quadpend => "quadpend",
        }
    }
}

mod method_str {
    use serde::{Deserialize, Deserializer, Serializer};
    use trajsqp::Method;

    pub fn serialize<S: Serializer>(m: &Method, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(m.label())
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Method, D::Error> {
        String::deserialize(d)?.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, rename_all = "snake_case", tag = "schedule")]
pub enum GammaConfig {
    Fixed { value: f64 },
    Geometric { start: f64, factor: f64, floor: f64 },
}

impl GammaConfig {
    fn schedule(self) -> GammaSchedule<f64> {
        match self {
            GammaConfig::Fixed { value } => GammaSchedule::Fixed(value),
            GammaConfig::Geometric { start, factor, floor } => GammaSchedule::Geometric { start, factor, floor },
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HessianName {
    Full,
    GaussNewton,
}

/// Solver settings after defaults are applied.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverConfig {
    pub max_iters: usize,
    pub tol_primal: f64,
    pub tol_dual: f64,
    pub gamma: GammaConfig,
    pub hessian: HessianName,
    pub eps_psd: f64,
    pub recenter_charts: bool,
    /// Run the exact recursion for reconstruction errors under every method.
    pub diagnose_exact: bool,
    pub record_merit_checks: bool,
    /// Write wall-clock timings; when off the timing columns are zero so
    /// repeated runs give byte-identical CSVs.
    pub record_timing: bool,
}

/// User-facing solver section: every field optional.
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct SolverOverrides {
    max_iters: Option<usize>,
    tol_primal: Option<f64>,
    tol_dual: Option<f64>,
    gamma: Option<GammaConfig>,
    hessian: Option<HessianName>,
    eps_psd: Option<f64>,
    recenter_charts: Option<bool>,
    diagnose_exact: Option<bool>,
    record_merit_checks: Option<bool>,
    record_timing: Option<bool>,
}

impl SolverConfig {
    pub fn defaults_for(env: EnvName) -> Self {
        let (gamma, hessian) = match env {
            EnvName::Car => (GammaConfig::Fixed { value: 1e-4 }, HessianName::Full),
            EnvName::Acrobot => (GammaConfig::Fixed { value: 1e-4 }, HessianName::GaussNewton),
            EnvName::Quadpend => (GammaConfig::Geometric { start: 1e-3, factor: 0.1, floor: 1e-5 }, HessianName::Full),
        };
        Self {
            max_iters: 100,
            tol_primal: 1e-3,
            tol_dual: if env == EnvName::Quadpend { 1e-2 } else { 1e-3 },
            gamma,
            hessian,
            eps_psd: 1e-6,
            recenter_charts: true,
            diagnose_exact: false,
            record_merit_checks: false,
            record_timing: true,
        }
    }

    fn apply(mut self, o: SolverOverrides) -> Self {
        macro_rules! take {
            ($($f:ident),*) => { $(if let Some(v) = o.$f { self.$f = v; })* };
        }
        take!(max_iters, tol_primal, tol_dual, gamma, hessian, eps_psd, recenter_charts, diagnose_exact, record_merit_checks, record_timing);
        self
    }

    pub fn options(&self, method: Method) -> SolverOptions {
        SolverOptions {
            method,
            max_iters: self.max_iters,
            tol_primal: self.tol_primal,
            tol_dual: self.tol_dual,
            gamma: self.gamma.schedule(),
            hessian_mode: match self.hessian {
                HessianName::Full => HessianMode::Full,
                HessianName::GaussNewton => HessianMode::GaussNewton,
            },
            eps_psd: self.eps_psd,
            recenter_charts: self.recenter_charts,
            diagnose_exact: self.diagnose_exact,
            record_merit_checks: self.record_merit_checks,
            ..SolverOptions::default()
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Circle {
    pub center: [f64; 2],
    pub radius: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CarConfig {
    pub horizon: usize,
    pub dt: f64,
    /// Stage cost is `stage_scale · uᵀ diag(r) u`.
    pub stage_scale: f64,
    pub r: [f64; 2],
    /// Terminal cost is `(x − goal)ᵀ diag(q_terminal) (x − goal)`.
    pub q_terminal: [f64; 4],
    pub goal: [f64; 4],
    pub obstacles: Vec<Circle>,
    /// Filled from the case when absent.
    pub x0: Option<[f64; 4]>,
}

impl Default for CarConfig {
    fn default() -> Self {
        Self {
            horizon: 40,
            dt: 0.05,
            stage_scale: 0.05,
            r: [0.2, 0.1],
            q_terminal: [50.0, 50.0, 50.0, 10.0],
            goal: [3.0, 3.0, PI / 2.0, 0.0],
            obstacles: vec![
                Circle { center: [1.0, 1.0], radius: 0.5 },
                Circle { center: [2.2, 2.2], radius: 0.4 },
                Circle { center: [1.2, 2.5], radius: 0.35 },
            ],
            x0: None,
        }
    }
}

impl CarConfig {
    pub fn case_x0(case: usize) -> [f64; 4] {
        match case {
            1 => [-0.4, 0.2, 0.15, 0.0],
            2 => [0.3, 1.0, 0.0, 0.0],
            _ => [-1.5, -1.75, 0.0, 0.0],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AcrobotLinks {
    pub m1: f64,
    pub m2: f64,
    pub l1: f64,
    pub lc1: f64,
    pub lc2: f64,
    pub i1: f64,
    pub i2: f64,
    pub g: f64,
}

impl Default for AcrobotLinks {
    fn default() -> Self {
        let p = trajsqp::models::AcrobotParams::<f64>::default();
        Self { m1: p.m1, m2: p.m2, l1: p.l1, lc1: p.lc1, lc2: p.lc2, i1: p.i1, i2: p.i2, g: p.g }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AcrobotConfig {
    pub horizon: usize,
    pub dt: f64,
    pub weights: [f64; 3],
    pub goal: [f64; 4],
    pub terminal_radius: f64,
    /// Assumed textbook link parameters.
    pub links: AcrobotLinks,
    pub x0: Option<[f64; 4]>,
}

impl Default for AcrobotConfig {
    fn default() -> Self {
        Self {
            horizon: 150,
            dt: 0.05,
            weights: [0.1, 0.01, 10.0],
            goal: [PI, 0.0, 0.0, 0.0],
            terminal_radius: 0.2,
            links: AcrobotLinks::default(),
            x0: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct QuadpendConfig {
    pub horizon: usize,
    pub dt: f64,
    pub weights: [f64; 3],
    pub goal: [f64; 4],
    pub q_terminal: [f64; 8],
    /// Obstacles as circles in the `(p_x, p_z)` plane.
    pub obstacles: Vec<Circle>,
    /// Circumscribing disc of the body, added to each obstacle radius.
    pub body_radius: f64,
    /// Points along the pole (fractions of its length) kept outside obstacles.
    pub pole_points: Vec<f64>,
    pub px_bounds: [f64; 2],
    pub pz_bounds: [f64; 2],
    pub theta_limit: f64,
    pub x0: Option<[f64; 8]>,
}

impl Default for QuadpendConfig {
    fn default() -> Self {
        Self {
            horizon: 160,
            dt: 0.025,
            weights: [0.01, 0.05, 5.0],
            goal: [3.0, -1.5, 0.0, PI],
            q_terminal: [10.0, 10.0, 1.0, 1.0, 1.0, 1.0, 1.0, 1.0],
            obstacles: vec![Circle { center: [0.0, -0.6], radius: 0.6 }, Circle { center: [1.8, 0.2], radius: 0.5 }],
            body_radius: 0.3,
            pole_points: vec![0.5, 1.0],
            px_bounds: [-4.0, 4.0],
            pz_bounds: [-2.0, 2.0],
            theta_limit: 0.75 * PI,
            x0: None,
        }
    }
}

impl QuadpendConfig {
    pub fn case_x0(case: usize) -> [f64; 8] {
        match case {
            1 => [-2.5, 1.5, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0],
            _ => [-2.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0],
        }
    }
}

/// A fully resolved experiment configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BenchConfig {
    pub env: EnvName,
    pub case: usize,
    #[serde(with = "method_str")]
    pub method: Method,
    pub seed: u64,
    pub out: Option<PathBuf>,
    pub solver: SolverConfig,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub car: Option<CarConfig>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub acrobot: Option<AcrobotConfig>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub quadpend: Option<QuadpendConfig>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    env: EnvName,
    case: usize,
    #[serde(with = "method_str")]
    method: Method,
    #[serde(default)]
    seed: u64,
    #[serde(default)]
    out: Option<PathBuf>,
    #[serde(default)]
    solver: SolverOverrides,
    car: Option<CarConfig>,
    acrobot: Option<AcrobotConfig>,
    quadpend: Option<QuadpendConfig>,
}

impl BenchConfig {
    /// Defaults for an environment, case and method.
    pub fn new(env: EnvName, case: usize, method: Method) -> Result<Self, ConfigError> {
        Self::resolve(RawConfig {
            env,
            case,
            method,
            seed: 0,
            out: None,
            solver: SolverOverrides::default(),
            car: None,
            acrobot: None,
            quadpend: None,
        })
    }

    fn resolve(raw: RawConfig) -> Result<Self, ConfigError> {
        let env = raw.env;
        if raw.case == 0 || raw.case > env.cases() {
            return Err(ConfigError::Invalid(format!(
                "{} has cases 1..={}, got {}",
                env.label(),
                env.cases(),
                raw.case
            )));
        }
        let foreign = match env {
            EnvName::Car => raw.acrobot.is_some() || raw.quadpend.is_some(),
            EnvName::Acrobot => raw.car.is_some() || raw.quadpend.is_some(),
            EnvName::Quadpend => raw.car.is_some() || raw.acrobot.is_some(),
        };
        if foreign {
            return Err(ConfigError::Invalid(format!("only the `{}` section is allowed", env.label())));
        }
        let case = raw.case;
        let mut cfg = BenchConfig {
            env,
            case,
            method: raw.method,
            seed: raw.seed,
            out: raw.out,
            solver: SolverConfig::defaults_for(env).apply(raw.solver),
            car: None,
            acrobot: None,
            quadpend: None,
        };
        match env {
            EnvName::Car => {
                let mut c = raw.car.unwrap_or_default();
                c.x0.get_or_insert(CarConfig::case_x0(case));
                cfg.car = Some(c);
            }
            EnvName::Acrobot => {
                let mut c = raw.acrobot.unwrap_or_default();
                c.x0.get_or_insert([0.0; 4]);
                cfg.acrobot = Some(c);
            }
            EnvName::Quadpend => {
                let mut c = raw.quadpend.unwrap_or_default();
                c.x0.get_or_insert(QuadpendConfig::case_x0(case));
                cfg.quadpend = Some(c);
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }

    fn validate(&self) -> Result<(), ConfigError> {
        let s = &self.solver;
        let positive = [("tol_primal", s.tol_primal), ("tol_dual", s.tol_dual), ("eps_psd", s.eps_psd)];
        if let Some((name, _)) = positive.iter().find(|(_, v)| !(*v > 0.0)) {
            return Err(ConfigError::Invalid(format!("solver.{name} must be positive")));
        }
        let gamma_ok = match s.gamma {
            GammaConfig::Fixed { value } => value > 0.0,
            GammaConfig::Geometric { start, factor, floor } => start > 0.0 && factor > 0.0 && floor > 0.0,
        };
        if !gamma_ok {
            return Err(ConfigError::Invalid("barrier weights must be positive".into()));
        }
        let (horizon, dt) = match (&self.car, &self.acrobot, &self.quadpend) {
            (Some(c), _, _) => (c.horizon, c.dt),
            (_, Some(c), _) => (c.horizon, c.dt),
            (_, _, Some(c)) => (c.horizon, c.dt),
            _ => unreachable!("resolve fills the environment section"),
        };
        if horizon == 0 || !(dt > 0.0) {
            return Err(ConfigError::Invalid("horizon and dt must be positive".into()));
        }
        let radii = self.car.iter().flat_map(|c| &c.obstacles).chain(self.quadpend.iter().flat_map(|c| &c.obstacles));
        if radii.into_iter().any(|o| !(o.radius > 0.0)) {
            return Err(ConfigError::Invalid("obstacle radii must be positive".into()));
        }
        Ok(())
    }

    pub fn options(&self) -> SolverOptions {
        self.solver.options(self.method)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    /// Short content hash of the resolved config. The output directory is
    /// left out so that reruns elsewhere keep the same hash.
    pub fn hash(&self) -> String {
        let keyed = BenchConfig { out: None, ..self.clone() };
        let digest = Sha256::digest(serde_json::to_vec(&keyed).expect("config serializes"));
        digest.iter().take(6).map(|b| format!("{b:02x}")).collect()
    }
}

/// Parses a config from JSON text and fills in defaults.
pub fn parse_config(text: &str, origin: &Path) -> Result<BenchConfig, ConfigError> {
    let raw: RawConfig =
        serde_json::from_str(text).map_err(|e| ConfigError::Parse { path: origin.to_path_buf(), source: e })?;
    BenchConfig::resolve(raw)
}

pub fn load_config(path: &Path) -> Result<BenchConfig, ConfigError> {
    let text = std::fs::read_to_string(path).map_err(|e| ConfigError::Io { path: path.to_path_buf(), source: e })?;
    parse_config(&text, path)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(s: &str) -> Result<BenchConfig, ConfigError> {
        parse_config(s, Path::new("test.json"))
    }

    #[test]
    fn hash_ignores_output_directory_only() {
        let a = parse(r#"{"env": "car", "case": 3, "method": "OL", "out": "runs/a"}"#).unwrap();
        let b = parse(r#"{"env": "car", "case": 3, "method": "OL", "out": "runs/b"}"#).unwrap();
        let c = parse(r#"{"env": "car", "case": 3, "method": "CL", "out": "runs/a"}"#).unwrap();
        assert_eq!(a.hash(), b.hash());
        assert_ne!(a.hash(), c.hash());
    }

    #[test]
    fn minimal_config_gets_defaults() {
        let c = parse(r#"{"env": "car", "case": 3, "method": "OL"}"#).unwrap();
        assert_eq!(c.method, Method::OpenLoop);
        assert_eq!(c.solver.max_iters, 100);
        assert_eq!(c.solver.gamma, GammaConfig::Fixed { value: 1e-4 });
        let car = c.car.unwrap();
        assert_eq!(car.horizon, 40);
        assert_eq!(car.x0, Some(CarConfig::case_x0(3)));
    }

    #[test]
    fn bad_method_names_the_choices() {
        let e = parse(r#"{"env": "car", "case": 1, "method": "DDP"}"#).unwrap_err().to_string();
        assert!(e.contains("OL, CL, CLG"), "{e}");
        assert!(e.contains("line 1"), "{e}");
    }

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(parse(r#"{"env": "car", "case": 1, "method": "CL", "colour": 1}"#).is_err());
        assert!(parse(r#"{"env": "car", "case": 1, "method": "CL", "solver": {"max_iter": 3}}"#).is_err());
    }

    #[test]
    fn case_and_section_are_checked() {
        assert!(parse(r#"{"env": "acrobot", "case": 2, "method": "CLG"}"#).is_err());
        assert!(parse(r#"{"env": "car", "case": 1, "method": "CLG", "acrobot": {}}"#).is_err());
        assert!(parse(r#"{"env": "car", "case": 1, "method": "CLG", "solver": {"tol_dual": 0}}"#).is_err());
    }

    #[test]
    fn defaults_round_trip() {
        for (env, case) in [(EnvName::Car, 2), (EnvName::Acrobot, 1), (EnvName::Quadpend, 1)] {
            let c = BenchConfig::new(env, case, Method::ClosedLoopGamma).unwrap();
            let back = parse(&c.to_json()).unwrap();
            assert_eq!(back, c);
            assert_eq!(back.hash(), c.hash());
        }
    }

    #[test]
    fn quadpend_gets_a_decaying_gamma_and_acrobot_gauss_newton() {
        let q = BenchConfig::new(EnvName::Quadpend, 2, Method::ClosedLoopGamma).unwrap();
        assert!(matches!(q.solver.gamma, GammaConfig::Geometric { .. }));
        let a = BenchConfig::new(EnvName::Acrobot, 1, Method::OpenLoop).unwrap();
        assert_eq!(a.options().hessian_mode, HessianMode::GaussNewton);
    }
}
