//! Experiment configuration: JSON schema, defaults, validation and sweeps.

use std::fmt;

use serde::{Deserialize, Serialize};

use ocpuu::PreconditionerKind;

pub const SCHEMA_VERSION: u32 = 1;

fn default_tol() -> f64 {
    1e-6
}
fn default_maxit() -> usize {
    200
}
fn default_n() -> usize {
    32
}
fn default_gamma() -> f64 {
    0.1
}
fn default_corr_len2() -> f64 {
    0.5
}
fn default_m_terms() -> usize {
    3
}
fn default_k_it() -> usize {
    2
}
fn default_lanczos_iters() -> usize {
    80
}
fn default_seed() -> u64 {
    1
}
fn default_cap() -> usize {
    ocpuu::krylov::DEFAULT_DENSE_CAP
}
fn default_power_iters() -> usize {
    ocpuu::precond::DEFAULT_POWER_ITERS
}
fn default_power_seed() -> u64 {
    ocpuu::precond::DEFAULT_POWER_SEED
}
fn default_exact_cap() -> usize {
    ocpuu::precond::DEFAULT_EXACT_CAP
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "model", rename_all = "snake_case", deny_unknown_fields)]
pub enum FieldConfig {
    Bounded {
        sigma2: f64,
    },
    LogNormal {
        sigma2: f64,
        #[serde(default = "default_corr_len2")]
        corr_len2: f64,
        #[serde(default = "default_m_terms")]
        m_terms: usize,
    },
}

impl FieldConfig {
    pub fn name(&self) -> &'static str {
        match self {
            FieldConfig::Bounded { .. } => "bounded",
            FieldConfig::LogNormal { .. } => "log_normal",
        }
    }

    pub fn sigma2(&self) -> f64 {
        match *self {
            FieldConfig::Bounded { sigma2 } | FieldConfig::LogNormal { sigma2, .. } => sigma2,
        }
    }
}

/// Collocation source: a tensor Gauss grid (Legendre for the bounded field,
/// Hermite for the log-normal one) or Monte Carlo samples.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "rule", rename_all = "snake_case", deny_unknown_fields)]
pub enum CollocationConfig {
    Tensor { m: usize },
    MonteCarlo { samples: usize, seed: u64 },
}

impl Default for CollocationConfig {
    fn default() -> Self {
        CollocationConfig::Tensor { m: 3 }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum ControlSpaceConfig {
    L2,
    H1,
}

impl ControlSpaceConfig {
    pub fn space(self) -> ocpuu::ControlSpace {
        match self {
            ControlSpaceConfig::L2 => ocpuu::ControlSpace::L2,
            ControlSpaceConfig::H1 => ocpuu::ControlSpace::H1,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KindName {
    Ptilde,
    PlrExact,
    PlrMean,
    PlrCheb,
    PopMean,
    PopCheb,
}

impl KindName {
    pub fn is_chebyshev(self) -> bool {
        matches!(self, KindName::PlrCheb | KindName::PopCheb)
    }

    pub fn kind(self, k_it: usize) -> PreconditionerKind {
        match self {
            KindName::Ptilde => PreconditionerKind::PTilde,
            KindName::PlrExact => PreconditionerKind::PLRExact,
            KindName::PlrMean => PreconditionerKind::PLRMean,
            KindName::PlrCheb => PreconditionerKind::PLRCheb { k_it },
            KindName::PopMean => PreconditionerKind::POPMean,
            KindName::PopCheb => PreconditionerKind::POPCheb { k_it },
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PreconditionerConfig {
    pub kind: KindName,
    /// Chebyshev steps; only meaningful for the Chebyshev kinds.
    #[serde(default = "default_k_it")]
    pub k_it: usize,
    #[serde(default = "default_power_iters")]
    pub power_iters: usize,
    #[serde(default = "default_power_seed")]
    pub power_seed: u64,
    #[serde(default = "default_exact_cap")]
    pub exact_cap: usize,
}

impl Default for PreconditionerConfig {
    fn default() -> Self {
        PreconditionerConfig {
            kind: KindName::PlrCheb,
            k_it: default_k_it(),
            power_iters: default_power_iters(),
            power_seed: default_power_seed(),
            exact_cap: default_exact_cap(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PcgPreconditionerConfig {
    Jacobi,
    MeanFactor,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case", deny_unknown_fields)]
pub enum InnerConfig {
    #[default]
    Direct,
    Pcg {
        tol: f64,
        maxit: usize,
        preconditioner: PcgPreconditionerConfig,
    },
}

impl InnerConfig {
    pub fn label(&self) -> String {
        match self {
            InnerConfig::Direct => "direct".into(),
            InnerConfig::Pcg { tol, preconditioner, .. } => {
                let p = match preconditioner {
                    PcgPreconditionerConfig::Jacobi => "jacobi",
                    PcgPreconditionerConfig::MeanFactor => "mean_factor",
                };
                format!("pcg_{p}_{tol:e}")
            }
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case", deny_unknown_fields)]
pub enum MassConfig {
    #[default]
    Direct,
    Chebyshev { steps: usize },
}

impl MassConfig {
    pub fn label(&self) -> String {
        match self {
            MassConfig::Direct => "direct".into(),
            MassConfig::Chebyshev { steps } => format!("chebyshev_{steps}"),
        }
    }
}

/// Which spectrum a `spectrum` run reports.
///
/// `reduced` uses the `N_h × N_h` eigenproblem (mean-based Schur approximation
/// only); `dense` and `lanczos` work on the preconditioned Schur complement for
/// L² kinds and on the preconditioned reduced operator for the operator kinds.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "method", rename_all = "snake_case", deny_unknown_fields)]
pub enum SpectrumConfig {
    Reduced {
        #[serde(default = "default_cap")]
        cap: usize,
    },
    Dense {
        #[serde(default = "default_cap")]
        cap: usize,
    },
    Lanczos {
        #[serde(default = "default_lanczos_iters")]
        iters: usize,
        #[serde(default = "default_seed")]
        seed: u64,
    },
}

impl Default for SpectrumConfig {
    fn default() -> Self {
        SpectrumConfig::Lanczos {
            iters: default_lanczos_iters(),
            seed: default_seed(),
        }
    }
}

impl SpectrumConfig {
    pub fn name(&self) -> &'static str {
        match self {
            SpectrumConfig::Reduced { .. } => "reduced",
            SpectrumConfig::Dense { .. } => "dense",
            SpectrumConfig::Lanczos { .. } => "lanczos",
        }
    }
}

/// Lists of values for scalar parameters; the run covers their Cartesian
/// product, keys in alphabetical order with the last key varying fastest.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Sweep {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub beta: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub corr_len2: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub gamma: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub k_it: Option<Vec<usize>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub m: Option<Vec<usize>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub m_terms: Option<Vec<usize>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub maxit: Option<Vec<usize>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub n: Option<Vec<usize>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub samples: Option<Vec<usize>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<Vec<u64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sigma2: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub tol: Option<Vec<f64>>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub schema_version: u32,
    pub field: FieldConfig,
    pub beta: f64,
    #[serde(default = "default_gamma")]
    pub gamma: f64,
    #[serde(default = "default_n")]
    pub n: usize,
    #[serde(default)]
    pub collocation: CollocationConfig,
    /// Defaults to the space required by the preconditioner.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub control_space: Option<ControlSpaceConfig>,
    #[serde(default)]
    pub preconditioner: PreconditionerConfig,
    #[serde(default)]
    pub inner_solver: InnerConfig,
    #[serde(default)]
    pub mass_solver: MassConfig,
    #[serde(default = "default_tol")]
    pub tol: f64,
    #[serde(default = "default_maxit")]
    pub maxit: usize,
    #[serde(default)]
    pub spectrum: SpectrumConfig,
    #[serde(default)]
    pub sweep: Sweep,
    /// CSV destination; standard output when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output: Option<String>,
}

/// A config error with the JSON path and, for syntax and type errors, the
/// source position.
#[derive(Clone, Debug, PartialEq)]
pub struct Diagnostic {
    pub path: String,
    pub line: Option<usize>,
    pub column: Option<usize>,
    pub message: String,
}

impl fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if let (Some(l), Some(c)) = (self.line, self.column) {
            write!(f, "line {l}, column {c}: ")?;
        }
        if self.path.is_empty() || self.path == "." {
            write!(f, "{}", self.message)
        } else {
            write!(f, "at `{}`: {}", self.path, self.message)
        }
    }
}

impl std::error::Error for Diagnostic {}

fn diag(path: &str, message: impl Into<String>) -> Diagnostic {
    Diagnostic {
        path: path.into(),
        line: None,
        column: None,
        message: message.into(),
    }
}

/// Parses and validates a config, filling defaults.
pub fn validate_config(raw: &str) -> Result<ExperimentConfig, Diagnostic> {
    let de = &mut serde_json::Deserializer::from_str(raw);
    let cfg: ExperimentConfig = serde_path_to_error::deserialize(de).map_err(|e| {
        let inner = e.inner();
        let mut d = Diagnostic {
            path: e.path().to_string(),
            line: Some(inner.line()),
            column: Some(inner.column()),
            message: strip_position(&inner.to_string()),
        };
        if let Some((path, message)) = variant::locate(raw, &d.path) {
            d.path = path;
            d.message = message;
        }
        d
    })?;
    cfg.check()?;
    Ok(cfg)
}

/// Tagged enums buffer their content before deserializing it, which hides
/// the offending key. These plain structs re-read a variant's object so the
/// diagnostic can name it.
mod variant {
    #![allow(dead_code)]

    use serde::de::DeserializeOwned;
    use serde::Deserialize;
    use serde_json::Value;

    #[derive(Deserialize)]
    #[serde(deny_unknown_fields)]
    struct Bounded {
        sigma2: f64,
    }

    #[derive(Deserialize)]
    #[serde(deny_unknown_fields)]
    struct LogNormal {
        sigma2: f64,
        corr_len2: Option<f64>,
        m_terms: Option<usize>,
    }

    #[derive(Deserialize)]
    #[serde(deny_unknown_fields)]
    struct Tensor {
        m: usize,
    }

    #[derive(Deserialize)]
    #[serde(deny_unknown_fields)]
    struct MonteCarlo {
        samples: usize,
        seed: u64,
    }

    #[derive(Deserialize)]
    #[serde(deny_unknown_fields)]
    struct Direct {}

    #[derive(Deserialize)]
    #[serde(deny_unknown_fields)]
    struct Pcg {
        tol: f64,
        maxit: usize,
        preconditioner: super::PcgPreconditionerConfig,
    }

    #[derive(Deserialize)]
    #[serde(deny_unknown_fields)]
    struct Chebyshev {
        steps: usize,
    }

    #[derive(Deserialize)]
    #[serde(deny_unknown_fields)]
    struct Capped {
        cap: Option<usize>,
    }

    #[derive(Deserialize)]
    #[serde(deny_unknown_fields)]
    struct Lanczos {
        iters: Option<usize>,
        seed: Option<u64>,
    }

    fn check<T: DeserializeOwned>(path: &str, obj: Value) -> Option<(String, String)> {
        serde_path_to_error::deserialize::<_, T>(obj).err().map(|e| {
            let inner = e.path().to_string();
            let full = if inner == "." { path.to_string() } else { format!("{path}.{inner}") };
            (full, e.into_inner().to_string())
        })
    }

    /// Path and message of the first error inside the tagged object at
    /// top-level key `path`, if the tag is recognised.
    pub(super) fn locate(raw: &str, path: &str) -> Option<(String, String)> {
        let tag = match path {
            "field" => "model",
            "collocation" => "rule",
            "inner_solver" | "mass_solver" => "mode",
            "spectrum" => "method",
            _ => return None,
        };
        let root: Value = serde_json::from_str(raw).ok()?;
        let mut obj = root.get(path)?.clone();
        let name = obj.as_object_mut()?.remove(tag)?;
        match (path, name.as_str()?) {
            ("field", "bounded") => check::<Bounded>(path, obj),
            ("field", "log_normal") => check::<LogNormal>(path, obj),
            ("collocation", "tensor") => check::<Tensor>(path, obj),
            ("collocation", "monte_carlo") => check::<MonteCarlo>(path, obj),
            ("inner_solver" | "mass_solver", "direct") => check::<Direct>(path, obj),
            ("inner_solver", "pcg") => check::<Pcg>(path, obj),
            ("mass_solver", "chebyshev") => check::<Chebyshev>(path, obj),
            ("spectrum", "reduced" | "dense") => check::<Capped>(path, obj),
            ("spectrum", "lanczos") => check::<Lanczos>(path, obj),
            _ => None,
        }
    }
}

fn strip_position(msg: &str) -> String {
    match msg.rfind(" at line ") {
        Some(i) => msg[..i].to_string(),
        None => msg.to_string(),
    }
}

fn positive(path: &str, v: f64) -> Result<(), Diagnostic> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(diag(path, format!("must be positive and finite, got {v}")))
    }
}

fn at_least(path: &str, v: usize, min: usize) -> Result<(), Diagnostic> {
    if v >= min {
        Ok(())
    } else {
        Err(diag(path, format!("must be at least {min}, got {v}")))
    }
}

impl ExperimentConfig {
    /// Consistency checks beyond the schema, on the base point and on every
    /// sweep list.
    pub fn check(&self) -> Result<(), Diagnostic> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(diag(
                "schema_version",
                format!("unsupported version {}, expected {SCHEMA_VERSION}", self.schema_version),
            ));
        }
        self.check_sweep()?;
        for point in self.points() {
            point.check_point()?;
        }
        Ok(())
    }

    fn check_sweep(&self) -> Result<(), Diagnostic> {
        let s = &self.sweep;
        let lens = [
            ("beta", s.beta.as_ref().map(Vec::len)),
            ("corr_len2", s.corr_len2.as_ref().map(Vec::len)),
            ("gamma", s.gamma.as_ref().map(Vec::len)),
            ("k_it", s.k_it.as_ref().map(Vec::len)),
            ("m", s.m.as_ref().map(Vec::len)),
            ("m_terms", s.m_terms.as_ref().map(Vec::len)),
            ("maxit", s.maxit.as_ref().map(Vec::len)),
            ("n", s.n.as_ref().map(Vec::len)),
            ("samples", s.samples.as_ref().map(Vec::len)),
            ("seed", s.seed.as_ref().map(Vec::len)),
            ("sigma2", s.sigma2.as_ref().map(Vec::len)),
            ("tol", s.tol.as_ref().map(Vec::len)),
        ];
        for (key, len) in lens {
            if len == Some(0) {
                return Err(diag(&format!("sweep.{key}"), "sweep list is empty"));
            }
        }
        let tensor = matches!(self.collocation, CollocationConfig::Tensor { .. });
        if tensor && (s.samples.is_some() || s.seed.is_some()) {
            return Err(diag("sweep", "`samples` and `seed` sweeps need Monte Carlo collocation"));
        }
        if !tensor && s.m.is_some() {
            return Err(diag("sweep.m", "`m` sweeps need tensor collocation"));
        }
        let log_normal = matches!(self.field, FieldConfig::LogNormal { .. });
        if !log_normal && (s.corr_len2.is_some() || s.m_terms.is_some()) {
            return Err(diag("sweep", "`corr_len2` and `m_terms` sweeps need the log-normal field"));
        }
        if s.k_it.is_some() && !self.preconditioner.kind.is_chebyshev() {
            return Err(diag("sweep.k_it", "`k_it` applies only to plr_cheb and pop_cheb"));
        }
        Ok(())
    }

    fn check_point(&self) -> Result<(), Diagnostic> {
        positive("beta", self.beta)?;
        if !(self.gamma >= 0.0 && self.gamma.is_finite()) {
            return Err(diag("gamma", format!("must be non-negative, got {}", self.gamma)));
        }
        positive("tol", self.tol)?;
        at_least("maxit", self.maxit, 1)?;
        at_least("n", self.n, 2)?;
        positive("field.sigma2", self.field.sigma2())?;
        if let FieldConfig::LogNormal { corr_len2, m_terms, .. } = self.field {
            positive("field.corr_len2", corr_len2)?;
            at_least("field.m_terms", m_terms, 1)?;
        }
        match self.collocation {
            CollocationConfig::Tensor { m } => at_least("collocation.m", m, 1)?,
            CollocationConfig::MonteCarlo { samples, .. } => at_least("collocation.samples", samples, 1)?,
        }
        let kind = self.kind();
        if let Err(e) = kind.validate() {
            return Err(diag("preconditioner.k_it", e.to_string()));
        }
        at_least("preconditioner.power_iters", self.preconditioner.power_iters, 1)?;
        if self.control() != kind.control() {
            return Err(diag(
                "control_space",
                format!(
                    "{} requires the {} control space",
                    kind.name(),
                    kind.control().name()
                ),
            ));
        }
        if let InnerConfig::Pcg { tol, maxit, .. } = self.inner_solver {
            positive("inner_solver.tol", tol)?;
            at_least("inner_solver.maxit", maxit, 1)?;
        }
        if let MassConfig::Chebyshev { steps } = self.mass_solver {
            at_least("mass_solver.steps", steps, 1)?;
        }
        match self.spectrum {
            SpectrumConfig::Reduced { .. } if kind != PreconditionerKind::PTilde => {
                return Err(diag("spectrum.method", "the reduced eigenproblem applies only to ptilde"));
            }
            SpectrumConfig::Lanczos { iters, .. } => at_least("spectrum.iters", iters, 1)?,
            _ => {}
        }
        Ok(())
    }

    pub fn kind(&self) -> PreconditionerKind {
        self.preconditioner.kind.kind(self.preconditioner.k_it)
    }

    pub fn control(&self) -> ocpuu::ControlSpace {
        match self.control_space {
            Some(c) => c.space(),
            None => self.kind().control(),
        }
    }

    /// Number of points in the sweep.
    pub fn num_points(&self) -> usize {
        let s = &self.sweep;
        [
            s.beta.as_ref().map(Vec::len),
            s.corr_len2.as_ref().map(Vec::len),
            s.gamma.as_ref().map(Vec::len),
            s.k_it.as_ref().map(Vec::len),
            s.m.as_ref().map(Vec::len),
            s.m_terms.as_ref().map(Vec::len),
            s.maxit.as_ref().map(Vec::len),
            s.n.as_ref().map(Vec::len),
            s.samples.as_ref().map(Vec::len),
            s.seed.as_ref().map(Vec::len),
            s.sigma2.as_ref().map(Vec::len),
            s.tol.as_ref().map(Vec::len),
        ]
        .into_iter()
        .map(|l| l.unwrap_or(1))
        .product()
    }

    /// One config per sweep point, without sweeps, in row order.
    pub fn points(&self) -> Vec<ExperimentConfig> {
        let mut base = self.clone();
        base.sweep = Sweep::default();
        let mut points = vec![base];
        let s = &self.sweep;
        macro_rules! expand {
            ($key:ident, $set:expr) => {
                if let Some(values) = &s.$key {
                    points = points
                        .into_iter()
                        .flat_map(|p| {
                            values.iter().map(move |&v| {
                                let mut q = p.clone();
                                #[allow(clippy::redundant_closure_call)]
                                ($set)(&mut q, v);
                                q
                            })
                        })
                        .collect();
                }
            };
        }
        expand!(beta, |q: &mut ExperimentConfig, v| q.beta = v);
        expand!(corr_len2, |q: &mut ExperimentConfig, v| {
            if let FieldConfig::LogNormal { corr_len2, .. } = &mut q.field {
                *corr_len2 = v;
            }
        });
        expand!(gamma, |q: &mut ExperimentConfig, v| q.gamma = v);
        expand!(k_it, |q: &mut ExperimentConfig, v| q.preconditioner.k_it = v);
        expand!(m, |q: &mut ExperimentConfig, v| q.collocation = CollocationConfig::Tensor { m: v });
        expand!(m_terms, |q: &mut ExperimentConfig, v| {
            if let FieldConfig::LogNormal { m_terms, .. } = &mut q.field {
                *m_terms = v;
            }
        });
        expand!(maxit, |q: &mut ExperimentConfig, v| q.maxit = v);
        expand!(n, |q: &mut ExperimentConfig, v| q.n = v);
        expand!(samples, |q: &mut ExperimentConfig, v| {
            if let CollocationConfig::MonteCarlo { samples, .. } = &mut q.collocation {
                *samples = v;
            }
        });
        expand!(seed, |q: &mut ExperimentConfig, v| {
            if let CollocationConfig::MonteCarlo { seed, .. } = &mut q.collocation {
                *seed = v;
            }
        });
        expand!(sigma2, |q: &mut ExperimentConfig, v| match &mut q.field {
            FieldConfig::Bounded { sigma2 } | FieldConfig::LogNormal { sigma2, .. } => *sigma2 = v,
        });
        expand!(tol, |q: &mut ExperimentConfig, v| q.tol = v);
        points
    }
}
