//! Sweep execution: system assembly per point, spectra, MINRES solves and
//! matrix export.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use log::info;
use nalgebra::DMatrix;

use ocpuu::fem::FeSpace;
use ocpuu::krylov::{
    lanczos_extremal, minres, operator_spectrum, schur_spectrum, tilde_schur_spectrum, SpectrumMethod,
};
use ocpuu::linalg::write_dense_matrix_market;
use ocpuu::precond::PcgPreconditioner;
use ocpuu::quadrature::{
    gauss_hermite_1d, gauss_legendre_1d, monte_carlo, tensorize, SampleDistribution, DEFAULT_NODE_CAP,
};
use ocpuu::random_field::FieldModel;
use ocpuu::saddle::dense_from_operator;
use ocpuu::{
    InnerSolver, MassSolver, PrecondOptions, Preconditioner, ReducedSystem, SaddleSystem, SolveReport, SpectrumReport,
    SystemParams,
};

use crate::config::{
    CollocationConfig, ExperimentConfig, FieldConfig, InnerConfig, MassConfig, PcgPreconditionerConfig,
    SpectrumConfig,
};

/// Header and rows of a result table.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Table {
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn to_csv(&self) -> String {
        let mut out = self.header.join(",");
        out.push('\n');
        for row in &self.rows {
            out.push_str(&row.join(","));
            out.push('\n');
        }
        out
    }
}

/// Outcome of a solve sweep.
#[derive(Clone, Debug, Default)]
pub struct SolveOutcome {
    pub table: Table,
    pub reports: Vec<SolveReport>,
}

impl SolveOutcome {
    pub fn all_converged(&self) -> bool {
        self.reports.iter().all(|r| r.converged)
    }
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum Mode {
    Solve,
    Spectrum,
}

/// Config columns in alphabetical order; `maxit`/`tol` only for solves and
/// `spectrum_method` only for spectra.
fn config_columns(mode: Mode) -> Vec<&'static str> {
    let mut cols = vec![
        "beta",
        "collocation",
        "control_space",
        "corr_len2",
        "field",
        "gamma",
        "inner_solver",
        "k_it",
        "m",
        "m_terms",
        "mass_solver",
        "maxit",
        "n",
        "preconditioner",
        "samples",
        "seed",
        "sigma2",
        "spectrum_method",
        "tol",
    ];
    match mode {
        Mode::Solve => cols.retain(|c| *c != "spectrum_method"),
        Mode::Spectrum => cols.retain(|c| *c != "maxit" && *c != "tol"),
    }
    cols
}

fn config_value(p: &ExperimentConfig, col: &str) -> String {
    let e = |v: f64| format!("{v:e}");
    match col {
        "beta" => e(p.beta),
        "collocation" => match p.collocation {
            CollocationConfig::Tensor { .. } => "tensor".into(),
            CollocationConfig::MonteCarlo { .. } => "monte_carlo".into(),
        },
        "control_space" => p.control().name().into(),
        "corr_len2" => match p.field {
            FieldConfig::LogNormal { corr_len2, .. } => e(corr_len2),
            FieldConfig::Bounded { .. } => String::new(),
        },
        "field" => p.field.name().into(),
        "gamma" => e(p.gamma),
        "inner_solver" => p.inner_solver.label(),
        "k_it" => p.kind().k_it().map(|k| k.to_string()).unwrap_or_default(),
        "m" => match p.collocation {
            CollocationConfig::Tensor { m } => m.to_string(),
            CollocationConfig::MonteCarlo { .. } => String::new(),
        },
        "m_terms" => match p.field {
            FieldConfig::LogNormal { m_terms, .. } => m_terms.to_string(),
            FieldConfig::Bounded { .. } => String::new(),
        },
        "mass_solver" => p.mass_solver.label(),
        "maxit" => p.maxit.to_string(),
        "n" => p.n.to_string(),
        "preconditioner" => p.kind().name().into(),
        "samples" => match p.collocation {
            CollocationConfig::MonteCarlo { samples, .. } => samples.to_string(),
            CollocationConfig::Tensor { .. } => String::new(),
        },
        "seed" => match p.collocation {
            CollocationConfig::MonteCarlo { seed, .. } => seed.to_string(),
            CollocationConfig::Tensor { .. } => String::new(),
        },
        "sigma2" => e(p.field.sigma2()),
        "spectrum_method" => p.spectrum.name().into(),
        "tol" => e(p.tol),
        _ => unreachable!("unknown column {col}"),
    }
}

fn header(mode: Mode, results: &str) -> Vec<String> {
    config_columns(mode)
        .into_iter()
        .map(String::from)
        .chain(["nh".to_string(), "n_samples".to_string()])
        .chain(results.split(',').map(String::from))
        .collect()
}

fn row(mode: Mode, p: &ExperimentConfig, sys: &SaddleSystem<f64>, results: &str) -> Vec<String> {
    config_columns(mode)
        .into_iter()
        .map(|c| config_value(p, c))
        .chain([sys.nh().to_string(), sys.n_samples().to_string()])
        .chain(results.split(',').map(String::from))
        .collect()
}

/// Assembles the collocated system of one sweep point.
pub fn build_system(p: &ExperimentConfig) -> Result<SaddleSystem<f64>> {
    let space = FeSpace::unit_square(p.n)?;
    let (model, family) = match p.field {
        FieldConfig::Bounded { sigma2 } => (FieldModel::bounded(sigma2), SampleDistribution::Uniform),
        FieldConfig::LogNormal {
            sigma2,
            corr_len2,
            m_terms,
        } => (
            FieldModel::log_normal(&space, sigma2, corr_len2, m_terms)?,
            SampleDistribution::StandardNormal,
        ),
    };
    let dims = model.param_dim();
    let colloc = match (p.collocation.clone(), family) {
        (CollocationConfig::Tensor { m }, SampleDistribution::Uniform) => {
            tensorize(&gauss_legendre_1d(m)?, dims, DEFAULT_NODE_CAP)?
        }
        (CollocationConfig::Tensor { m }, SampleDistribution::StandardNormal) => {
            tensorize(&gauss_hermite_1d(m)?, dims, DEFAULT_NODE_CAP)?
        }
        (CollocationConfig::MonteCarlo { samples, seed }, dist) => monte_carlo(dims, samples, seed, dist)?,
    };
    let mass_solver = match p.mass_solver {
        MassConfig::Direct => MassSolver::Direct,
        MassConfig::Chebyshev { steps } => MassSolver::Chebyshev { steps },
    };
    let params = SystemParams::new(p.beta, p.gamma)
        .with_control(p.control())
        .with_mass_solver(mass_solver);
    Ok(SaddleSystem::assemble(&space, &model, &colloc, params, None, None)?)
}

pub fn precond_options(p: &ExperimentConfig) -> PrecondOptions<f64> {
    let inner = match p.inner_solver {
        InnerConfig::Direct => InnerSolver::Direct,
        InnerConfig::Pcg {
            tol,
            maxit,
            preconditioner,
        } => InnerSolver::Pcg {
            tol,
            maxit,
            preconditioner: match preconditioner {
                PcgPreconditionerConfig::Jacobi => PcgPreconditioner::Jacobi,
                PcgPreconditionerConfig::MeanFactor => PcgPreconditioner::MeanFactor,
            },
        },
    };
    PrecondOptions {
        inner,
        power_iters: p.preconditioner.power_iters,
        seed: p.preconditioner.power_seed,
        exact_cap: p.preconditioner.exact_cap,
    }
}

fn spectrum_of(p: &ExperimentConfig, sys: &SaddleSystem<f64>) -> Result<SpectrumReport> {
    if let SpectrumConfig::Reduced { cap } = p.spectrum {
        return Ok(tilde_schur_spectrum(sys, cap)?);
    }
    let pc = Preconditioner::new(sys, p.kind(), &precond_options(p))?;
    let report = match (p.kind().is_operator(), &p.spectrum) {
        (false, SpectrumConfig::Dense { cap }) => schur_spectrum(&pc, SpectrumMethod::Dense { cap: *cap })?,
        (false, SpectrumConfig::Lanczos { iters, seed }) => schur_spectrum(
            &pc,
            SpectrumMethod::Lanczos {
                iters: *iters,
                seed: *seed,
            },
        )?,
        (true, SpectrumConfig::Dense { cap }) => operator_spectrum(&pc, *cap)?,
        (true, SpectrumConfig::Lanczos { iters, seed }) => {
            let red = ReducedSystem::new(sys)?;
            lanczos_extremal(|x| red.apply(x), |r| pc.apply(r), red.dim(), *iters, *seed)?
        }
        (_, SpectrumConfig::Reduced { .. }) => unreachable!(),
    };
    Ok(report)
}

/// One row per sweep point with the extremal eigenvalues of the requested
/// preconditioned operator.
pub fn run_spectrum_experiment(cfg: &ExperimentConfig) -> Result<Table> {
    let mut table = Table {
        header: header(Mode::Spectrum, SpectrumReport::CSV_HEADER),
        rows: vec![],
    };
    for (k, p) in cfg.points().iter().enumerate() {
        let sys = build_system(p).with_context(|| format!("assembling sweep point {k}"))?;
        let report = spectrum_of(p, &sys).with_context(|| format!("spectrum of sweep point {k}"))?;
        info!("point {k}: [{:e}, {:e}]", report.lambda_min, report.lambda_max);
        table.rows.push(row(Mode::Spectrum, p, &sys, &report.csv_row()));
    }
    Ok(table)
}

fn solve_point(p: &ExperimentConfig, sys: &SaddleSystem<f64>) -> Result<SolveReport> {
    let pc = Preconditioner::new(sys, p.kind(), &precond_options(p))?;
    let (_, report) = if p.kind().is_operator() {
        let red = ReducedSystem::new(sys)?;
        let rhs = red.rhs()?;
        minres(|x| red.apply(x), |r| pc.apply(r), &rhs, p.tol, p.maxit)?
    } else {
        let rhs = sys.rhs().to_flat();
        minres(|x| sys.apply_saddle_flat(x), |r| pc.apply(r), &rhs, p.tol, p.maxit)?
    };
    Ok(report)
}

/// One row per sweep point with the MINRES outcome; rows that did not
/// converge are kept. With `timing` off the time column is left empty so
/// that reruns are byte-identical.
pub fn run_solve_experiment(cfg: &ExperimentConfig, timing: bool) -> Result<SolveOutcome> {
    let mut out = SolveOutcome {
        table: Table {
            header: header(Mode::Solve, SolveReport::CSV_HEADER),
            rows: vec![],
        },
        reports: vec![],
    };
    for (k, p) in cfg.points().iter().enumerate() {
        let sys = build_system(p).with_context(|| format!("assembling sweep point {k}"))?;
        let report = solve_point(p, &sys).with_context(|| format!("solving sweep point {k}"))?;
        info!("point {k}: {} iterations, converged {}", report.iterations, report.converged);
        let mut cells = report.csv_row();
        if !timing {
            cells.truncate(cells.rfind(',').map_or(0, |i| i + 1));
        }
        out.table.rows.push(row(Mode::Solve, p, &sys, &cells));
        out.reports.push(report);
    }
    Ok(out)
}

/// Sidecar path of the residual history of sweep point `k`.
pub fn history_path(output: &Path, k: usize) -> PathBuf {
    let stem = output.file_stem().and_then(|s| s.to_str()).unwrap_or("results");
    output.with_file_name(format!("{stem}.point{k}.history.csv"))
}

pub fn write_histories(output: &Path, reports: &[SolveReport]) -> Result<()> {
    for (k, r) in reports.iter().enumerate() {
        let path = history_path(output, k);
        fs::write(&path, r.history_csv()).with_context(|| format!("writing {}", path.display()))?;
    }
    Ok(())
}

/// Writes the system operator, the preconditioner and the right-hand side of every sweep point as Matrix
/// Market files; refuses operators larger than `cap`.
pub fn export_matrices(cfg: &ExperimentConfig, cap: usize, dir: &Path) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    let mut written = vec![];
    for (k, p) in cfg.points().iter().enumerate() {
        let sys = build_system(p)?;
        let pc = Preconditioner::new(&sys, p.kind(), &precond_options(p))?;
        let (op, rhs) = if p.kind().is_operator() {
            let red = ReducedSystem::new(&sys)?;
            (red.dense(cap)?, red.rhs()?)
        } else {
            (sys.dense_saddle(cap)?, sys.rhs().to_flat())
        };
        let pinv = dense_from_operator(op.nrows(), cap, "preconditioner", |r| pc.apply(r))?;
        let rhs = DMatrix::from_column_slice(rhs.len(), 1, &rhs);
        for (name, matrix) in [("system", &op), ("precond_inverse", &pinv), ("rhs", &rhs)] {
            let path = dir.join(format!("point{k}_{name}.mtx"));
            let file = fs::File::create(&path).with_context(|| format!("creating {}", path.display()))?;
            write_dense_matrix_market(matrix, std::io::BufWriter::new(file))?;
            written.push(path);
        }
    }
    Ok(written)
}
