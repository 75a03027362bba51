use std::fmt::Write as _;

use crate::{Error, Result};

/// Outcome of an iterative solve.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct SolveReport {
    pub iterations: usize,
    pub converged: bool,
    /// Relative unpreconditioned residual `‖b − Ax‖/‖b‖`, starting with iteration 0.
    pub residual_history: Vec<f64>,
    /// Wall time in seconds.
    pub wall_time: f64,
}

impl SolveReport {
    pub fn final_residual(&self) -> f64 {
        self.residual_history.last().copied().unwrap_or(0.0)
    }

    /// Turns a non-converged report into [`Error::MaxIterationsExceeded`].
    pub fn ensure_converged(self) -> Result<Self> {
        if self.converged {
            Ok(self)
        } else {
            Err(Error::MaxIterationsExceeded {
                iterations: self.iterations,
                residual: self.final_residual(),
            })
        }
    }

    pub const CSV_HEADER: &'static str = "iterations,converged,final_residual,time_s";

    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{:e},{:.6}",
            self.iterations,
            self.converged,
            self.final_residual(),
            self.wall_time
        )
    }

    /// Residual history as `iteration,residual` lines with a header.
    pub fn history_csv(&self) -> String {
        let mut s = String::from("iteration,relative_residual\n");
        for (k, r) in self.residual_history.iter().enumerate() {
            let _ = writeln!(s, "{k},{r:e}");
        }
        s
    }
}

/// Extremal eigenvalues of a (preconditioned) operator.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct SpectrumReport {
    /// Smallest real part.
    pub lambda_min: f64,
    /// Largest real part.
    pub lambda_max: f64,
    /// Smallest modulus.
    pub abs_min: f64,
    /// Largest modulus.
    pub abs_max: f64,
    /// Largest imaginary part in absolute value (zero for symmetric reductions).
    pub max_imag: f64,
    /// Number of eigenvalues within [`NEAR_ONE_TOL`](super::NEAR_ONE_TOL) of 1.
    pub near_one: usize,
    /// Full spectrum (real parts, ascending) when computed densely.
    pub eigenvalues: Option<Vec<f64>>,
    /// Lanczos steps taken; zero for dense reports.
    pub iterations: usize,
    /// Lanczos stopped early on an invariant subspace.
    pub breakdown: bool,
}

impl SpectrumReport {
    pub(crate) fn from_values(mut real: Vec<f64>, max_imag: f64, moduli: &[f64]) -> Self {
        real.sort_by(|a, b| a.total_cmp(b));
        let near_one = real
            .iter()
            .filter(|&&l| (l - 1.0).abs() < super::NEAR_ONE_TOL)
            .count();
        SpectrumReport {
            lambda_min: real.first().copied().unwrap_or(f64::NAN),
            lambda_max: real.last().copied().unwrap_or(f64::NAN),
            abs_min: moduli.iter().copied().fold(f64::INFINITY, f64::min),
            abs_max: moduli.iter().copied().fold(0.0, f64::max),
            max_imag,
            near_one,
            eigenvalues: Some(real),
            iterations: 0,
            breakdown: false,
        }
    }

    /// Eigenvalues within `tol` of `value`; `None` without a full spectrum.
    pub fn count_near(&self, value: f64, tol: f64) -> Option<usize> {
        self.eigenvalues
            .as_ref()
            .map(|ev| ev.iter().filter(|&&l| (l - value).abs() < tol).count())
    }

    pub const CSV_HEADER: &'static str = "lambda_min,lambda_max,abs_min,abs_max,max_imag,near_one";

    pub fn csv_row(&self) -> String {
        format!(
            "{:e},{:e},{:e},{:e},{:e},{}",
            self.lambda_min, self.lambda_max, self.abs_min, self.abs_max, self.max_imag, self.near_one
        )
    }
}
