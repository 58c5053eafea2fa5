//! Power-law fits, convergence sweeps over the opacity and the
//! error-at-origin curve.

use std::sync::Arc;

use rayon::prelude::*;

use crate::grid::{l2_relative_error, ProblemSpec, RadialGrid};
use crate::oracle::{exact_moments, MomentTriple, DEFAULT_TOLERANCE};
use crate::original::{SolverConfig, TwoComponentState};
use crate::reformed::{
    err0, new_idsa_stationary_closed_form, reconstruct_hk, ClosureSet, Reconstruction, ReformedScheme, Variant,
};
use crate::{Error, Result};

/// Least-squares line `log y = exponent * log x + intercept`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FitResult {
    pub exponent: f64,
    pub intercept: f64,
    pub points_used: usize,
}

pub fn fit_power_law(xs: &[f64], ys: &[f64]) -> Result<FitResult> {
    if xs.len() != ys.len() {
        return Err(Error::InvalidArgument(format!(
            "{} abscissae but {} ordinates",
            xs.len(),
            ys.len()
        )));
    }
    if xs.len() < 2 {
        return Err(Error::InvalidArgument("a fit needs at least 2 points".into()));
    }
    if let Some((x, y)) = xs
        .iter()
        .zip(ys)
        .find(|(&x, &y)| !(x > 0.0 && y > 0.0 && x.is_finite() && y.is_finite()))
    {
        return Err(Error::Domain(format!(
            "power-law fit needs positive finite data, got ({x}, {y})"
        )));
    }
    let n = xs.len() as f64;
    let lx: Vec<f64> = xs.iter().map(|x| x.ln()).collect();
    let ly: Vec<f64> = ys.iter().map(|y| y.ln()).collect();
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let sxx: f64 = lx.iter().map(|x| (x - mx) * (x - mx)).sum();
    if sxx == 0.0 {
        return Err(Error::Domain("all abscissae coincide".into()));
    }
    let sxy: f64 = lx.iter().zip(&ly).map(|(x, y)| (x - mx) * (y - my)).sum();
    let exponent = sxy / sxx;
    Ok(FitResult {
        exponent,
        intercept: my - exponent * mx,
        points_used: xs.len(),
    })
}

/// Shell-weighted relative L2 errors of the reconstructed moments at one
/// opacity.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConvergenceRecord {
    pub kappa: f64,
    pub err_j: f64,
    pub err_h: f64,
    pub err_k: f64,
}

/// A sweep point that could not be evaluated.
#[derive(Debug)]
pub struct SweepFailure {
    pub kappa: f64,
    pub error: Error,
}

/// Records sorted by opacity, plus the points that failed.
#[derive(Debug, Default)]
pub struct ConvergenceSweep {
    pub records: Vec<ConvergenceRecord>,
    pub failures: Vec<SweepFailure>,
}

impl ConvergenceSweep {
    pub fn kappas(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.kappa).collect()
    }

    /// Power-law fits of `err_j`, `err_h`, `err_k` against `kappa`.
    pub fn fits(&self) -> Result<[FitResult; 3]> {
        let xs = self.kappas();
        let col = |f: fn(&ConvergenceRecord) -> f64| self.records.iter().map(f).collect::<Vec<_>>();
        Ok([
            fit_power_law(&xs, &col(|r| r.err_j))?,
            fit_power_law(&xs, &col(|r| r.err_h))?,
            fit_power_law(&xs, &col(|r| r.err_k))?,
        ])
    }
}

/// How the stationary state of a reformed scheme is obtained.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum StationaryMethod {
    /// Closed form for the New IDSA, one direct solve for the Old IDSA.
    Direct,
    /// Backward Euler from zero data with the scheme's solver settings.
    Marched,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SweepOptions {
    pub oracle_tol: f64,
    pub method: StationaryMethod,
    pub solver: SolverConfig,
}

impl Default for SweepOptions {
    fn default() -> Self {
        Self {
            oracle_tol: DEFAULT_TOLERANCE,
            method: StationaryMethod::Direct,
            solver: SolverConfig {
                t_end: 1e5,
                ..SolverConfig::default()
            },
        }
    }
}

pub const DEFAULT_KAPPAS: [f64; 7] = [1.0, 2.0, 5.0, 10.0, 20.0, 50.0, 100.0];

/// Errors of reconstructed moments against the exact ones.
pub fn convergence_record(kappa: f64, approx: &Reconstruction, exact: &MomentTriple) -> Result<ConvergenceRecord> {
    Ok(ConvergenceRecord {
        kappa,
        err_j: l2_relative_error(&approx.j, &exact.j)?,
        err_h: l2_relative_error(&approx.h, &exact.h)?,
        err_k: l2_relative_error(&approx.k, &exact.k)?,
    })
}

/// Stationary state of `variant` for the sphere `spec` on `grid`.
pub fn stationary_state(
    variant: Variant,
    spec: &ProblemSpec,
    grid: &Arc<RadialGrid>,
    opts: &SweepOptions,
) -> Result<TwoComponentState> {
    let scheme = ReformedScheme::new(variant, *spec, grid.clone(), opts.solver)?;
    match (opts.method, variant) {
        (StationaryMethod::Direct, Variant::New) => new_idsa_stationary_closed_form(grid, spec),
        (StationaryMethod::Direct, Variant::Old) => scheme.stationary(),
        (StationaryMethod::Marched, _) => {
            let out = scheme.run_to_stationary()?;
            if !out.stationary {
                return Err(Error::InvalidArgument(format!(
                    "not stationary by t_end = {}",
                    opts.solver.t_end
                )));
            }
            Ok(out.state)
        }
    }
}

fn sweep_point(
    kappa: f64,
    radius: f64,
    b: f64,
    grid: &Arc<RadialGrid>,
    variant: Variant,
    opts: &SweepOptions,
) -> Result<ConvergenceRecord> {
    let spec = ProblemSpec::homogeneous_sphere(kappa, radius, b)?;
    let state = stationary_state(variant, &spec, grid, opts)?;
    let closures = ClosureSet::for_sphere(grid, radius)?;
    let approx = reconstruct_hk(&state, &closures)?;
    let exact = exact_moments(grid, &spec, opts.oracle_tol)?;
    convergence_record(kappa, &approx, &exact)
}

/// Errors of the reformed scheme `variant` against the exact solution for
/// every opacity in `kappas`. Points are evaluated in parallel; failures are
/// collected instead of aborting the sweep.
pub fn convergence_sweep(
    kappas: &[f64],
    radius: f64,
    b: f64,
    grid: &Arc<RadialGrid>,
    variant: Variant,
    opts: &SweepOptions,
) -> Result<ConvergenceSweep> {
    if let Some(&k) = kappas.iter().find(|&&k| !(k > 0.0 && k.is_finite())) {
        return Err(Error::InvalidArgument(format!("kappa must be positive, got {k}")));
    }
    let results: Vec<(f64, Result<ConvergenceRecord>)> = kappas
        .par_iter()
        .map(|&k| (k, sweep_point(k, radius, b, grid, variant, opts)))
        .collect();
    let mut sweep = ConvergenceSweep::default();
    for (kappa, res) in results {
        match res {
            Ok(r) => sweep.records.push(r),
            Err(error) => sweep.failures.push(SweepFailure { kappa, error }),
        }
    }
    sweep.records.sort_by(|a, b| a.kappa.total_cmp(&b.kappa));
    sweep.failures.sort_by(|a, b| a.kappa.total_cmp(&b.kappa));
    Ok(sweep)
}

/// `(kappa R, Err0)` for every entry of `kappa_r`.
pub fn err0_curve(kappa_r: &[f64]) -> Result<Vec<(f64, f64)>> {
    kappa_r.iter().map(|&x| Ok((x, err0(x)?))).collect()
}
