//! The two failure modes of the original IDSA: spurious trapped particles
//! in a weakly absorbing envelope, and the coupling instability at the
//! sphere surface on fine grids.

use std::sync::Arc;

use rayon::prelude::*;

use super::{IdsaSolver, SigmaMode, SolverConfig, DEFAULT_MAX_ITER};
use crate::diagnostics::{fit_power_law, FitResult};
use crate::grid::{ProblemSpec, RadialGrid};
use crate::{Error, Result};

/// `n` points from `a` to `b` equally spaced in `log10`.
pub fn log_spaced(a: f64, b: f64, n: usize) -> Result<Vec<f64>> {
    if !(a > 0.0 && b > 0.0) || n < 2 {
        return Err(Error::InvalidArgument(format!(
            "log_spaced needs positive bounds and n >= 2 (got {a}, {b}, {n})"
        )));
    }
    let (la, lb) = (a.log10(), b.log10());
    Ok((0..n)
        .map(|i| {
            let x = la + (lb - la) * i as f64 / (n - 1) as f64;
            10f64.powf(x)
        })
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpuriousConfig {
    /// Defaults to the implicit source: with the lagged one the weakly
    /// absorbing envelope keeps flipping between regimes and never settles.
    pub solver: SolverConfig,
    /// Runs without takeover are censored at this time.
    pub horizon: f64,
    /// Takeover needs `Jt / (Jt + Js)` above this in every cell with `r >= R`.
    pub trapped_fraction: f64,
    /// ... and the relative change per step below this.
    pub stationarity_tol: f64,
}

impl Default for SpuriousConfig {
    fn default() -> Self {
        Self {
            solver: SolverConfig {
                sigma: SigmaMode::Implicit {
                    max_iter: DEFAULT_MAX_ITER,
                },
                ..SolverConfig::default()
            },
            horizon: 1e6,
            trapped_fraction: 0.5,
            stationarity_tol: 1e-8,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TakeoverTime {
    pub eps: f64,
    /// `None` when the horizon was reached first.
    pub time: Option<f64>,
}

fn trapped_dominates(solver: &IdsaSolver, radius: f64, threshold: f64) -> bool {
    let s = solver.state();
    let first = s.grid().count_below(radius);
    (first..s.jt.len()).all(|i| {
        let j = s.jt[i] + s.js[i];
        j > 0.0 && s.jt[i] / j > threshold
    })
}

/// Time until the envelope `r >= R` is stationary and dominated by trapped
/// particles, for the sphere `base` with `kappa_outside = eps`.
pub fn takeover_time(
    eps: f64,
    base: &ProblemSpec,
    grid: Arc<RadialGrid>,
    cfg: &SpuriousConfig,
) -> Result<TakeoverTime> {
    let spec = base.with_kappa_outside(eps)?;
    let mut solver = IdsaSolver::new(spec, grid, cfg.solver)?;
    while solver.state().t < cfg.horizon {
        let change = solver.step()?;
        if change < cfg.stationarity_tol && trapped_dominates(&solver, spec.radius, cfg.trapped_fraction)
        {
            return Ok(TakeoverTime {
                eps,
                time: Some(solver.state().t),
            });
        }
        if change == 0.0 {
            // frozen, nothing can change any more
            break;
        }
    }
    Ok(TakeoverTime { eps, time: None })
}

/// Takeover times for every `eps`, computed in parallel and returned in
/// input order.
pub fn run_spurious_trapped_experiment(
    eps_list: &[f64],
    base: &ProblemSpec,
    grid: Arc<RadialGrid>,
    cfg: &SpuriousConfig,
) -> Result<Vec<TakeoverTime>> {
    if let Some(&e) = eps_list.iter().find(|&&e| !(e >= 0.0)) {
        return Err(Error::InvalidArgument(format!("eps must be >= 0, got {e}")));
    }
    eps_list
        .par_iter()
        .map(|&eps| takeover_time(eps, base, grid.clone(), cfg))
        .collect()
}

/// Power-law exponent of takeover time against `eps`, after dropping the
/// `exclude_largest` largest `eps` and all censored runs.
pub fn takeover_exponent(results: &[TakeoverTime], exclude_largest: usize) -> Result<FitResult> {
    let mut sorted: Vec<&TakeoverTime> = results.iter().collect();
    sorted.sort_by(|a, b| b.eps.total_cmp(&a.eps));
    let (xs, ys): (Vec<f64>, Vec<f64>) = sorted
        .into_iter()
        .skip(exclude_largest)
        .filter_map(|r| r.time.map(|t| (r.eps, t)))
        .unzip();
    fit_power_law(&xs, &ys)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InstabilityConfig {
    pub solver: SolverConfig,
    /// Interval between recorded diagnostics.
    pub record_every: f64,
    /// `Jt` above `threshold * B` counts as populated for the virtual boundary.
    pub boundary_threshold: f64,
    /// An increase of `Jt` by more than `monotone_tol * B` between neighbouring
    /// cells inside the sphere flags non-monotonicity.
    pub monotone_tol: f64,
    /// `sup(Jt + Js) > (1 + bound_slack) B` is a hard failure.
    pub bound_slack: f64,
}

impl Default for InstabilityConfig {
    fn default() -> Self {
        Self {
            solver: SolverConfig::default(),
            record_every: 1.0,
            boundary_threshold: 0.9,
            monotone_tol: 1e-9,
            bound_slack: 1e-6,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InstabilityRecord {
    pub t: f64,
    /// Largest cell center with `Jt > threshold * B`, 0 if none. Behind it
    /// the trapped field has left its near-equilibrium plateau.
    pub virtual_boundary: f64,
    pub non_monotone: bool,
    pub sup_norm: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct InstabilityReport {
    pub records: Vec<InstabilityRecord>,
    pub first_non_monotone: Option<f64>,
    /// Largest recorded virtual boundary, reached once the sphere has filled.
    pub peak_virtual_boundary: f64,
    pub final_virtual_boundary: f64,
    pub max_sup_norm: f64,
    /// Largest cell center strictly below `R`, the undisturbed boundary.
    pub last_inner_center: f64,
}

fn diagnose(solver: &IdsaSolver, cfg: &InstabilityConfig) -> InstabilityRecord {
    let s = solver.state();
    let spec = solver.spec();
    let centers = s.grid().centers();
    let threshold = cfg.boundary_threshold * spec.b;
    let virtual_boundary = (0..s.jt.len())
        .rev()
        .find(|&i| s.jt[i] > threshold)
        .map_or(0.0, |i| centers[i]);
    let inside = s.grid().count_below(spec.radius);
    let non_monotone = (1..inside).any(|i| s.jt[i] - s.jt[i - 1] > cfg.monotone_tol * spec.b);
    let sup_norm = (0..s.jt.len())
        .map(|i| s.jt[i] + s.js[i])
        .fold(0.0, f64::max);
    InstabilityRecord {
        t: s.t,
        virtual_boundary,
        non_monotone,
        sup_norm,
    }
}

/// Marches the sphere from zero data to `t_end`, checking monotonicity and
/// the bound every step and recording diagnostics every `record_every`.
pub fn run_instability_experiment(
    spec: &ProblemSpec,
    grid: Arc<RadialGrid>,
    cfg: &InstabilityConfig,
) -> Result<InstabilityReport> {
    if !(cfg.record_every > 0.0) {
        return Err(Error::InvalidArgument("record_every must be positive".into()));
    }
    let last_inner_center = match grid.count_below(spec.radius) {
        0 => 0.0,
        k => grid.centers()[k - 1],
    };
    let mut solver = IdsaSolver::new(*spec, grid, cfg.solver)?;
    let bound = (1.0 + cfg.bound_slack) * spec.b;
    let t_end = cfg.solver.t_end;
    let dt = cfg.solver.dt;
    let mut records = vec![diagnose(&solver, cfg)];
    let mut next_record = cfg.record_every;
    let mut first_non_monotone = None;
    let mut peak_vb: f64 = 0.0;
    let mut max_sup: f64 = 0.0;
    while solver.state().t < t_end - 0.5 * dt {
        solver.step()?;
        let rec = diagnose(&solver, cfg);
        if rec.sup_norm > bound {
            return Err(Error::Unbounded {
                time: rec.t,
                value: rec.sup_norm,
            });
        }
        if rec.non_monotone && first_non_monotone.is_none() {
            first_non_monotone = Some(rec.t);
        }
        peak_vb = peak_vb.max(rec.virtual_boundary);
        max_sup = max_sup.max(rec.sup_norm);
        if rec.t >= next_record - 1e-9 * dt {
            records.push(rec);
            while next_record <= rec.t + 1e-9 * dt {
                next_record += cfg.record_every;
            }
        }
    }
    let final_virtual_boundary = diagnose(&solver, cfg).virtual_boundary;
    Ok(InstabilityReport {
        records,
        first_non_monotone,
        peak_virtual_boundary: peak_vb,
        final_virtual_boundary,
        max_sup_norm: max_sup,
        last_inner_center,
    })
}
