//! Run configuration: flat `section.key = value` text, one transformation
//! experiment per file.
//!
//! ```text
//! potential.name = harmonic
//! potential.params = 1.0
//! grid.x_min = -10
//! grid.x_max = 10
//! grid.n = 20001
//! transform.k = 0
//! transform.alpha1 = 1.5
//! transform.alpha2 = 2.5
//! transform.u1 = target_nodes:2
//! transform.u2 = target_nodes:1
//! spectrum.k_max = 7
//! output.dir = out/case_a
//! ```
//!
//! `#` starts a comment; keys are case-sensitive; unknown keys are rejected.
//! Tabulated seeds use `potential.file = <csv>` instead of name/params.

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};

use darboux_core::regularity::USelector;
use serde::Serialize;

#[derive(Debug)]
pub struct ConfigError(pub String);

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "config error: {}", self.0)
    }
}

impl std::error::Error for ConfigError {}

#[derive(Debug, Clone, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum PotentialSpec {
    Builtin { name: String, params: Vec<f64> },
    File { path: PathBuf },
}

/// Verification tolerances with documented defaults.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct Tolerances {
    /// Eigenvalue bisection tolerance (solver).
    pub energy: f64,
    /// Log-derivative matching defect accepted per level.
    pub defect: f64,
    /// Level-by-level partner spectrum match.
    pub level_match: f64,
    /// Intertwining and factorization residuals.
    pub algebra: f64,
    /// Kernel annihilation ‖Lu‖ relative to term scale.
    pub annihilation: f64,
    /// W′ identity residual.
    pub w_identity: f64,
    /// Adjoint-kernel annihilation ‖L⁺v_j‖ relative to term scale.
    pub adjoint_kernel: f64,
    /// Eigen-residual of the kernel functions against h₂.
    pub kernel_eigen: f64,
    /// Tail deviation of V₂ − V₀ from the asymptotic model.
    pub reversion: f64,
    /// Final completeness reconstruction residual.
    pub completeness: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Tolerances {
            energy: 1e-9,
            defect: 1e-6,
            level_match: 1e-5,
            algebra: 1e-4,
            annihilation: 1e-8,
            w_identity: 1e-4,
            adjoint_kernel: 1e-6,
            kernel_eigen: 1e-5,
            reversion: 1e-3,
            completeness: 1e-2,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum CompletenessMode {
    /// Run for the two-created and double-deletion cases only.
    Auto,
    On,
    Off,
}

#[derive(Debug, Clone, Serialize)]
pub struct RunConfig {
    pub potential: PotentialSpec,
    pub x_min: f64,
    pub x_max: f64,
    pub n: usize,
    pub k: usize,
    pub alpha1: f64,
    pub alpha2: f64,
    pub u1_selector: USelector,
    pub u2_selector: USelector,
    pub k_max: usize,
    pub output_dir: PathBuf,
    pub tolerances: Tolerances,
    pub completeness: CompletenessMode,
    pub completeness_m_max: usize,
}

impl RunConfig {
    pub fn from_file(path: &Path) -> Result<RunConfig, ConfigError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| ConfigError(format!("{}: {e}", path.display())))?;
        let mut cfg = Self::from_str_checked(&text)?;
        // Relative paths resolve against the config file location.
        let base = path.parent().unwrap_or_else(|| Path::new("."));
        if let PotentialSpec::File { path: p } = &mut cfg.potential {
            if p.is_relative() {
                *p = base.join(&p);
            }
        }
        if cfg.output_dir.is_relative() {
            cfg.output_dir = base.join(&cfg.output_dir);
        }
        Ok(cfg)
    }

    pub fn from_str_checked(text: &str) -> Result<RunConfig, ConfigError> {
        let mut map: BTreeMap<String, String> = BTreeMap::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                ConfigError(format!("line {}: expected `key = value`", lineno + 1))
            })?;
            let key = key.trim().to_string();
            let value = value.trim().to_string();
            if map.insert(key.clone(), value).is_some() {
                return Err(ConfigError(format!("duplicate key `{key}`")));
            }
        }
        Self::from_map(map)
    }

    fn from_map(mut map: BTreeMap<String, String>) -> Result<RunConfig, ConfigError> {
        let mut take = |k: &str| map.remove(k);
        let req = |v: Option<String>, k: &str| {
            v.ok_or_else(|| ConfigError(format!("missing required key `{k}`")))
        };
        let parse_f64 = |s: &str, k: &str| {
            s.parse::<f64>()
                .map_err(|_| ConfigError(format!("`{k}`: not a number: `{s}`")))
        };
        let parse_usize = |s: &str, k: &str| {
            s.parse::<usize>()
                .map_err(|_| ConfigError(format!("`{k}`: not a non-negative integer: `{s}`")))
        };

        let potential = match (take("potential.name"), take("potential.file")) {
            (Some(name), None) => {
                let params = match take("potential.params") {
                    Some(p) => p
                        .split(',')
                        .map(|t| parse_f64(t.trim(), "potential.params"))
                        .collect::<Result<Vec<f64>, _>>()?,
                    None => Vec::new(),
                };
                PotentialSpec::Builtin { name, params }
            }
            (None, Some(file)) => {
                let path = PathBuf::from(file);
                PotentialSpec::File { path }
            }
            (Some(_), Some(_)) => {
                return Err(ConfigError(
                    "give either potential.name or potential.file, not both".into(),
                ))
            }
            (None, None) => {
                return Err(ConfigError(
                    "missing potential.name or potential.file".into(),
                ))
            }
        };

        let x_min = parse_f64(&req(take("grid.x_min"), "grid.x_min")?, "grid.x_min")?;
        let x_max = parse_f64(&req(take("grid.x_max"), "grid.x_max")?, "grid.x_max")?;
        let n = parse_usize(&req(take("grid.n"), "grid.n")?, "grid.n")?;
        let k = parse_usize(&req(take("transform.k"), "transform.k")?, "transform.k")?;
        let alpha1 = parse_f64(
            &req(take("transform.alpha1"), "transform.alpha1")?,
            "transform.alpha1",
        )?;
        let alpha2 = parse_f64(
            &req(take("transform.alpha2"), "transform.alpha2")?,
            "transform.alpha2",
        )?;
        let u1_selector = parse_selector(&req(take("transform.u1"), "transform.u1")?)?;
        let u2_selector = parse_selector(&req(take("transform.u2"), "transform.u2")?)?;
        let k_max = parse_usize(
            &req(take("spectrum.k_max"), "spectrum.k_max")?,
            "spectrum.k_max",
        )?;
        let output_dir = PathBuf::from(req(take("output.dir"), "output.dir")?);

        let mut tol = Tolerances::default();
        let tol_keys: [(&str, &mut f64); 10] = [
            ("tolerance.energy", &mut tol.energy),
            ("tolerance.defect", &mut tol.defect),
            ("tolerance.level_match", &mut tol.level_match),
            ("tolerance.algebra", &mut tol.algebra),
            ("tolerance.annihilation", &mut tol.annihilation),
            ("tolerance.w_identity", &mut tol.w_identity),
            ("tolerance.adjoint_kernel", &mut tol.adjoint_kernel),
            ("tolerance.kernel_eigen", &mut tol.kernel_eigen),
            ("tolerance.reversion", &mut tol.reversion),
            ("tolerance.completeness", &mut tol.completeness),
        ];
        for (key, slot) in tol_keys {
            if let Some(v) = take(key) {
                let parsed = parse_f64(&v, key)?;
                if !(parsed > 0.0) {
                    return Err(ConfigError(format!("`{key}` must be positive, got {v}")));
                }
                *slot = parsed;
            }
        }

        let completeness = match take("completeness.enabled").as_deref() {
            None | Some("auto") => CompletenessMode::Auto,
            Some("on") => CompletenessMode::On,
            Some("off") => CompletenessMode::Off,
            Some(other) => {
                return Err(ConfigError(format!(
                    "completeness.enabled: expected auto|on|off, got `{other}`"
                )))
            }
        };
        let completeness_m_max = match take("completeness.m_max") {
            Some(v) => parse_usize(&v, "completeness.m_max")?,
            None => 16,
        };

        if let Some(stray) = map.keys().next() {
            return Err(ConfigError(format!("unknown key `{stray}`")));
        }

        let cfg = RunConfig {
            potential,
            x_min,
            x_max,
            n,
            k,
            alpha1,
            alpha2,
            u1_selector,
            u2_selector,
            k_max,
            output_dir,
            tolerances: tol,
            completeness,
            completeness_m_max,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    /// Static validation (no numerics): ordering, ranges, referenced files.
    pub fn validate(&self) -> Result<(), ConfigError> {
        if !(self.alpha2 > self.alpha1) {
            return Err(ConfigError(format!(
                "transform.alpha2 ({}) must exceed transform.alpha1 ({})",
                self.alpha2, self.alpha1
            )));
        }
        if !(self.x_min < 0.0 && 0.0 < self.x_max) {
            return Err(ConfigError(format!(
                "grid [{}, {}] must straddle the origin",
                self.x_min, self.x_max
            )));
        }
        if self.n < 11 {
            return Err(ConfigError(format!(
                "grid.n = {} too small (need >= 11)",
                self.n
            )));
        }
        if self.k_max < self.k + 1 {
            return Err(ConfigError(format!(
                "spectrum.k_max = {} must cover the gap index + 1 = {}",
                self.k_max,
                self.k + 1
            )));
        }
        if self.completeness_m_max < 4 {
            return Err(ConfigError("completeness.m_max must be at least 4".into()));
        }
        if let PotentialSpec::File { path } = &self.potential {
            if !path.exists() {
                return Err(ConfigError(format!(
                    "potential.file does not exist: {}",
                    path.display()
                )));
            }
        }
        Ok(())
    }

    /// CLI flag overrides.
    pub fn apply_overrides(
        &mut self,
        grid_n: Option<usize>,
        x_max: Option<f64>,
        k_max: Option<usize>,
    ) {
        if let Some(n) = grid_n {
            self.n = n;
        }
        if let Some(x) = x_max {
            self.x_max = x;
            self.x_min = -x;
        }
        if let Some(k) = k_max {
            self.k_max = k;
        }
    }
}

fn parse_selector(text: &str) -> Result<USelector, ConfigError> {
    let (head, arg) = match text.split_once(':') {
        Some((h, a)) => (h.trim(), Some(a.trim())),
        None => (text.trim(), None),
    };
    match (head, arg) {
        ("eigenstate", None) => Ok(USelector::Eigenstate),
        ("pure_left", None) => Ok(USelector::PureLeft),
        ("pure_right", None) => Ok(USelector::PureRight),
        ("mixed", Some(theta)) => {
            let t: f64 = theta
                .parse()
                .map_err(|_| ConfigError(format!("mixed:<theta>: bad angle `{theta}`")))?;
            Ok(USelector::Mixed(t))
        }
        ("target_nodes", Some(nodes)) => {
            let n: usize = nodes
                .parse()
                .map_err(|_| ConfigError(format!("target_nodes:<n>: bad count `{nodes}`")))?;
            Ok(USelector::TargetNodes(n))
        }
        _ => Err(ConfigError(format!(
            "bad selector `{text}` (expected eigenstate, pure_left, pure_right, mixed:<theta>, target_nodes:<n>)"
        ))),
    }
}
