//! The original IDSA: a trapped component `Jt` and a streaming component `Js`
//! exchanging particles through the min-max diffusion source
//!
//! `Sigma = min(max(-D[Jt] + kappa_a Js, 0), kappa_a B)`,
//!
//! where `D` is the spherical diffusion operator. Each time step updates the
//! trapped field by backward Euler with `Sigma` held fixed, then solves the
//! stationary streaming equation `(1/r^2) d(r^2 h Js)/dr = Sigma - kappa_a Js`
//! by an outward sweep.
//!
//! With [`StreamingSource::Fresh`] the streaming solve sees a source
//! recomputed from the new trapped field instead; the exchange between the
//! components is then no longer balanced and `Jt + Js` can overshoot `B`
//! on fine grids.

pub mod experiments;

use std::fmt;
use std::sync::Arc;

use crate::grid::{ProblemSpec, RadialField, RadialGrid};
use crate::oracle::free_streaming_flux_ratio;
use crate::tridiag::Tridiagonal;
use crate::{Error, Result};

pub const DEFAULT_KAPPA_FLOOR: f64 = 1e-30;

/// Relative slack below zero tolerated in the trapped update before it is
/// reported as a negativity failure.
pub const NEGATIVITY_SLACK: f64 = 1e-12;
/// Newton iterations allowed per step in [`SigmaMode::Implicit`]; the first
/// step from zero data on a fine grid needs a few hundred.
pub const DEFAULT_MAX_ITER: usize = 10_000;

/// How the diffusion source enters a time step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SigmaMode {
    /// Evaluated from the previous time level and held fixed.
    Lagged,
    /// Self-consistent in `Jt`: the source is evaluated at the new time level
    /// and the resulting piecewise-linear system is solved by a damped Newton
    /// iteration over the regimes, at most `max_iter` iterations per step.
    Implicit { max_iter: usize },
}

impl SigmaMode {
    pub fn name(&self) -> &'static str {
        match self {
            SigmaMode::Lagged => "lagged",
            SigmaMode::Implicit { .. } => "implicit",
        }
    }
}

/// Source handed to the streaming solve in a lagged step.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StreamingSource {
    /// The same `Sigma` that drove the trapped update, so particles leaving
    /// the trapped component are exactly those entering the streaming one.
    Trapped,
    /// `Sigma` re-evaluated from the updated trapped field.
    Fresh,
}

impl StreamingSource {
    pub fn name(&self) -> &'static str {
        match self {
            StreamingSource::Trapped => "trapped",
            StreamingSource::Fresh => "fresh",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverConfig {
    pub dt: f64,
    pub t_end: f64,
    /// A run stops early once the relative change per step falls below this.
    pub stationarity_tol: f64,
    pub sigma: SigmaMode,
    pub streaming_source: StreamingSource,
    pub kappa_floor: f64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            dt: 0.1,
            t_end: 1000.0,
            stationarity_tol: 1e-10,
            sigma: SigmaMode::Lagged,
            streaming_source: StreamingSource::Trapped,
            kappa_floor: DEFAULT_KAPPA_FLOOR,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = |name: &str, v: f64| {
            if v.is_finite() && v > 0.0 {
                Ok(())
            } else {
                Err(Error::InvalidArgument(format!("{name} must be positive, got {v}")))
            }
        };
        positive("dt", self.dt)?;
        positive("stationarity_tol", self.stationarity_tol)?;
        positive("kappa_floor", self.kappa_floor)?;
        if !(self.t_end >= 0.0) {
            return Err(Error::InvalidArgument(format!(
                "t_end must be >= 0, got {}",
                self.t_end
            )));
        }
        if let SigmaMode::Implicit { max_iter: 0 } = self.sigma {
            return Err(Error::InvalidArgument("sigma max_iter must be >= 1".into()));
        }
        Ok(())
    }
}

/// Which branch of the min-max source is active in a cell.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Regime {
    /// The inner `max(., 0)` clipped the source to zero.
    Reaction,
    Diffusion,
    /// The outer `min(., kappa_a B)` capped the source.
    FreeStreaming,
}

impl Regime {
    pub fn as_str(&self) -> &'static str {
        match self {
            Regime::Reaction => "reaction",
            Regime::Diffusion => "diffusion",
            Regime::FreeStreaming => "free_streaming",
        }
    }
}

impl fmt::Display for Regime {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Trapped and streaming zeroth moments at time `t`.
#[derive(Debug, Clone)]
pub struct TwoComponentState {
    pub jt: RadialField,
    pub js: RadialField,
    pub t: f64,
}

impl TwoComponentState {
    pub fn zeros(grid: Arc<RadialGrid>) -> Self {
        Self {
            jt: RadialField::zeros(grid.clone()),
            js: RadialField::zeros(grid),
            t: 0.0,
        }
    }

    pub fn new(jt: RadialField, js: RadialField, t: f64) -> Result<Self> {
        jt.check_same_grid(&js)?;
        Ok(Self { jt, js, t })
    }

    pub fn grid(&self) -> &Arc<RadialGrid> {
        self.jt.grid()
    }

    /// `J = Jt + Js`.
    pub fn total(&self) -> RadialField {
        self.jt
            .zip_with(&self.js, |a, b| a + b)
            .expect("components share a grid")
    }

    /// Proportion of trapped particles `Jt / (Jt + Js)`, `None` where both vanish.
    pub fn trapped_fraction(&self) -> Vec<Option<f64>> {
        self.jt
            .values()
            .iter()
            .zip(self.js.values())
            .map(|(&t, &s)| {
                let j = t + s;
                (j > 0.0).then(|| t / j)
            })
            .collect()
    }
}

fn opacities(spec: &ProblemSpec, grid: &RadialGrid) -> (Vec<f64>, Vec<f64>) {
    grid.centers()
        .iter()
        .map(|&r| (spec.kappa_a(r), spec.kappa_total(r)))
        .unzip()
}

/// Conservative discrete `(1/r^2) d/dr (r^2/(3 kappa) dJ/dr)` at cell centers.
///
/// Face opacities are the mean of the two neighbours, floored at
/// `kappa_floor`; both boundary faces carry zero flux.
pub fn diffusion_operator(jt: &RadialField, kappa_total: &[f64], kappa_floor: f64) -> Result<Vec<f64>> {
    let grid = jt.grid();
    let n = grid.n_cells();
    if kappa_total.len() != n {
        return Err(Error::InvalidArgument(format!(
            "{} opacities for {n} cells",
            kappa_total.len()
        )));
    }
    let (dr, edges, centers, j) = (grid.dr(), grid.edges(), grid.centers(), jt.values());
    let mut flux = vec![0.0; n + 1];
    for f in 1..n {
        let kappa = (0.5 * (kappa_total[f - 1] + kappa_total[f])).max(kappa_floor);
        flux[f] = edges[f] * edges[f] / (3.0 * kappa) * (j[f] - j[f - 1]) / dr;
    }
    Ok((0..n)
        .map(|i| (flux[i + 1] - flux[i]) / (centers[i] * centers[i] * dr))
        .collect())
}

fn classify(raw: f64, cap: f64) -> (f64, Regime) {
    if !(raw > 0.0) {
        (0.0, Regime::Reaction)
    } else if raw >= cap {
        (cap, Regime::FreeStreaming)
    } else {
        (raw, Regime::Diffusion)
    }
}

/// The min-max diffusion source and the branch taken in every cell.
pub fn diffusion_source(
    jt: &RadialField,
    js: &RadialField,
    spec: &ProblemSpec,
    kappa_floor: f64,
) -> Result<(RadialField, Vec<Regime>)> {
    jt.check_same_grid(js)?;
    let grid = jt.grid().clone();
    let (kappa_a, kappa_t) = opacities(spec, &grid);
    let d = diffusion_operator(jt, &kappa_t, kappa_floor)?;
    let (sigma, tags) = (0..grid.n_cells())
        .map(|i| classify(-d[i] + kappa_a[i] * js[i], kappa_a[i] * spec.b))
        .unzip();
    Ok((RadialField::new(grid, sigma)?, tags))
}

/// One backward-Euler step of `dJt/dt = kappa_a (B - Jt) - Sigma` with
/// `Sigma` fixed.
pub fn step_trapped(
    state: &TwoComponentState,
    sigma: &RadialField,
    spec: &ProblemSpec,
    dt: f64,
) -> Result<RadialField> {
    state.jt.check_same_grid(sigma)?;
    let grid = state.grid().clone();
    let t_new = state.t + dt;
    let mut out = Vec::with_capacity(grid.n_cells());
    for (i, &r) in grid.centers().iter().enumerate() {
        let ka = spec.kappa_a(r);
        let v = (state.jt[i] + dt * (ka * spec.b - sigma[i])) / (1.0 + dt * ka);
        if v < -NEGATIVITY_SLACK * spec.b {
            return Err(Error::Negativity {
                field: "Jt",
                time: t_new,
                index: i,
                value: v,
            });
        }
        out.push(v);
    }
    RadialField::new(grid, out)
}

/// Backward-Euler trapped update with the regimes `tags` frozen and the
/// diffusion branch taken implicitly: in `Diffusion` cells
/// `(1 + dt kappa_a) Jt - dt D[Jt] = Jt_old + dt kappa_a (B - Js)`.
pub fn step_trapped_implicit(
    state: &TwoComponentState,
    tags: &[Regime],
    spec: &ProblemSpec,
    dt: f64,
    kappa_floor: f64,
) -> Result<RadialField> {
    let jt = frozen_solve(state, tags, spec, dt, kappa_floor)?;
    if let Some(i) = jt.iter().position(|&v| v < -NEGATIVITY_SLACK * spec.b) {
        return Err(Error::Negativity {
            field: "Jt",
            time: state.t + dt,
            index: i,
            value: jt[i],
        });
    }
    RadialField::new(state.grid().clone(), jt)
}

fn frozen_solve(
    state: &TwoComponentState,
    tags: &[Regime],
    spec: &ProblemSpec,
    dt: f64,
    kappa_floor: f64,
) -> Result<Vec<f64>> {
    let grid = state.grid();
    let n = grid.n_cells();
    if tags.len() != n {
        return Err(Error::InvalidArgument(format!("{} regimes for {n} cells", tags.len())));
    }
    let (kappa_a, kappa_t) = opacities(spec, grid);
    let (dr, edges, centers) = (grid.dr(), grid.edges(), grid.centers());
    // D[J]_i = w_lo (J_{i-1} - J_i) + w_hi (J_{i+1} - J_i)
    let face = |f: usize| {
        if f == 0 || f == n {
            0.0
        } else {
            let kappa = (0.5 * (kappa_t[f - 1] + kappa_t[f])).max(kappa_floor);
            edges[f] * edges[f] / (3.0 * kappa * dr)
        }
    };
    let mut a = Tridiagonal::zeros(n);
    let mut rhs = vec![0.0; n];
    for i in 0..n {
        let ka = kappa_a[i];
        a.diag[i] = 1.0 + dt * ka;
        rhs[i] = state.jt[i] + dt * ka * spec.b;
        match tags[i] {
            Regime::Reaction => {}
            Regime::FreeStreaming => rhs[i] -= dt * ka * spec.b,
            Regime::Diffusion => {
                let vol = centers[i] * centers[i] * dr;
                let (lo, hi) = (face(i) / vol, face(i + 1) / vol);
                a.diag[i] += dt * (lo + hi);
                a.lower[i] = -dt * lo;
                a.upper[i] = -dt * hi;
                rhs[i] -= dt * ka * state.js[i];
            }
        }
    }
    a.solve(&rhs)
}

fn implicit_residual(
    old: &TwoComponentState,
    jt: &RadialField,
    spec: &ProblemSpec,
    dt: f64,
    floor: f64,
) -> Result<(Vec<f64>, RadialField, Vec<Regime>)> {
    let (sigma, tags) = diffusion_source(jt, &old.js, spec, floor)?;
    let res = jt
        .grid()
        .centers()
        .iter()
        .enumerate()
        .map(|(i, &r)| {
            let ka = spec.kappa_a(r);
            (1.0 + dt * ka) * jt[i] - old.jt[i] - dt * (ka * spec.b - sigma[i])
        })
        .collect();
    Ok((res, sigma, tags))
}

/// Diffusion weight of every row, 0 where the source vanishes identically.
fn diffusion_weights(grid: &RadialGrid, spec: &ProblemSpec, floor: f64) -> Vec<f64> {
    let (kappa_a, kappa_t) = opacities(spec, grid);
    let (dr, edges, centers) = (grid.dr(), grid.edges(), grid.centers());
    let n = grid.n_cells();
    let face = |f: usize| {
        if f == 0 || f == n {
            0.0
        } else {
            edges[f] * edges[f] / (3.0 * (0.5 * (kappa_t[f - 1] + kappa_t[f])).max(floor) * dr)
        }
    };
    (0..n)
        .map(|i| {
            if kappa_a[i] > 0.0 {
                (face(i) + face(i + 1)) / (centers[i] * centers[i] * dr)
            } else {
                0.0
            }
        })
        .collect()
}

fn norm2(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Solves `(1 + dt kappa_a) Jt = Jt_old + dt (kappa_a B - Sigma(Jt, Js_old))`
/// for `Jt`. Each Newton step is the frozen-regime solve of
/// [`step_trapped_implicit`]; the step length is halved until the residual
/// norm decreases, which stops the regimes from cycling. Returns the new
/// field with its source and regimes.
pub fn solve_implicit_trapped(
    old: &TwoComponentState,
    spec: &ProblemSpec,
    dt: f64,
    floor: f64,
    max_iter: usize,
) -> Result<(RadialField, RadialField, Vec<Regime>)> {
    // rows carry terms of size dt * weight * Jt, so roundoff scales with it
    let scale = old.jt.max().max(spec.b).max(f64::MIN_POSITIVE);
    let tol: Vec<f64> = diffusion_weights(old.grid(), spec, floor)
        .iter()
        .map(|w| 1e-13 * scale * (1.0 + dt * w))
        .collect();
    let within = |r: &[f64]| r.iter().zip(&tol).all(|(x, t)| x.abs() <= *t);
    // start from the lagged step, which is usually close
    let (lagged, _) = diffusion_source(&old.jt, &old.js, spec, floor)?;
    let mut jt = step_trapped(old, &lagged, spec, dt).unwrap_or_else(|_| old.jt.clone());
    let (res, mut sigma, mut tags) = implicit_residual(old, &jt, spec, dt, floor)?;
    let mut norm = norm2(&res);
    let mut converged = within(&res);
    for _ in 0..max_iter {
        if converged {
            break;
        }
        // intermediate iterates may dip below zero, only the final one counts
        let target = RadialField::new(jt.grid().clone(), frozen_solve(old, &tags, spec, dt, floor)?)?;
        let mut lambda = 1.0;
        loop {
            let trial = jt.zip_with(&target, |a, b| a + lambda * (b - a))?;
            let (r, s, t) = implicit_residual(old, &trial, spec, dt, floor)?;
            let n = norm2(&r);
            if n <= (1.0 - 1e-4 * lambda) * norm || lambda < 1e-12 {
                // a full step that keeps its regimes solved the system exactly
                converged = (lambda == 1.0 && t == tags) || within(&r);
                jt = trial;
                (sigma, tags, norm) = (s, t, n);
                break;
            }
            lambda *= 0.5;
        }
    }
    if !converged {
        return Err(Error::SourceIteration {
            time: old.t + dt,
            iterations: max_iter,
        });
    }
    if let Some(i) = jt.values().iter().position(|&v| v < -NEGATIVITY_SLACK * spec.b) {
        return Err(Error::Negativity {
            field: "Jt",
            time: old.t + dt,
            index: i,
            value: jt[i],
        });
    }
    Ok((jt, sigma, tags))
}

/// Stationary streaming field for a given source.
///
/// The flux `Phi = r^2 h Js` is swept outward from `Phi(0) = 0`; each cell
/// balances its inflow and source against the outflow through its outer face
/// and its own absorption, so `Js_i = (Phi_in + dV Sigma_i) / (A_out + dV kappa_a)`
/// with `A_out = r_out^2 h(r_out)` and `dV = r_i^2 dr`.
pub fn solve_streaming_stationary(source: &RadialField, spec: &ProblemSpec) -> Result<RadialField> {
    let grid = source.grid().clone();
    if let Some(i) = source.values().iter().position(|&s| s < 0.0) {
        return Err(Error::InvalidArgument(format!(
            "negative streaming source {} at cell {i}",
            source[i]
        )));
    }
    let (dr, edges, centers) = (grid.dr(), grid.edges(), grid.centers());
    let mut phi = 0.0;
    let mut js = Vec::with_capacity(grid.n_cells());
    for (i, &r) in centers.iter().enumerate() {
        let outer = edges[i + 1];
        let area = outer * outer * free_streaming_flux_ratio(outer, spec.radius);
        let dv = r * r * dr;
        let v = (phi + dv * source[i]) / (area + dv * spec.kappa_a(r));
        if v < 0.0 {
            return Err(Error::Negativity {
                field: "Js",
                time: f64::NAN,
                index: i,
                value: v,
            });
        }
        phi = area * v;
        js.push(v);
    }
    RadialField::new(grid, js)
}

/// `max_i (|dJt_i| + |dJs_i|) / max_i (Jt_i + Js_i)` between two states.
pub fn relative_change(old: &TwoComponentState, new: &TwoComponentState) -> f64 {
    let mut num: f64 = 0.0;
    let mut den: f64 = 0.0;
    for i in 0..new.jt.len() {
        num = num.max((new.jt[i] - old.jt[i]).abs() + (new.js[i] - old.js[i]).abs());
        den = den.max(new.jt[i] + new.js[i]);
    }
    if num == 0.0 {
        0.0
    } else if den == 0.0 {
        f64::INFINITY
    } else {
        num / den
    }
}

/// Time stepper for the original IDSA.
#[derive(Debug, Clone)]
pub struct IdsaSolver {
    spec: ProblemSpec,
    cfg: SolverConfig,
    state: TwoComponentState,
    tags: Vec<Regime>,
    last_change: f64,
    steps: usize,
}

impl IdsaSolver {
    /// Starts from zero trapped and streaming fields.
    pub fn new(spec: ProblemSpec, grid: Arc<RadialGrid>, cfg: SolverConfig) -> Result<Self> {
        Self::with_state(spec, cfg, TwoComponentState::zeros(grid))
    }

    pub fn with_state(spec: ProblemSpec, cfg: SolverConfig, state: TwoComponentState) -> Result<Self> {
        spec.validate()?;
        cfg.validate()?;
        let (_, tags) = diffusion_source(&state.jt, &state.js, &spec, cfg.kappa_floor)?;
        Ok(Self {
            spec,
            cfg,
            state,
            tags,
            last_change: f64::INFINITY,
            steps: 0,
        })
    }

    pub fn state(&self) -> &TwoComponentState {
        &self.state
    }

    /// Regimes selected for the streaming solve of the latest step.
    pub fn tags(&self) -> &[Regime] {
        &self.tags
    }

    pub fn spec(&self) -> &ProblemSpec {
        &self.spec
    }

    pub fn config(&self) -> &SolverConfig {
        &self.cfg
    }

    /// Relative change produced by the latest step (infinite before the first).
    pub fn last_change(&self) -> f64 {
        self.last_change
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn is_stationary(&self) -> bool {
        self.last_change < self.cfg.stationarity_tol
    }

    /// Advances by one `dt`; returns the relative change.
    pub fn step(&mut self) -> Result<f64> {
        let (spec, floor, dt) = (&self.spec, self.cfg.kappa_floor, self.cfg.dt);
        let old = &self.state;
        let (jt, js, tags) = match self.cfg.sigma {
            SigmaMode::Lagged => {
                let (sigma, _) = diffusion_source(&old.jt, &old.js, spec, floor)?;
                let jt = step_trapped(old, &sigma, spec, dt)?;
                let (fresh, tags) = diffusion_source(&jt, &old.js, spec, floor)?;
                let js = match self.cfg.streaming_source {
                    StreamingSource::Trapped => solve_streaming_stationary(&sigma, spec)?,
                    StreamingSource::Fresh => solve_streaming_stationary(&fresh, spec)?,
                };
                (jt, js, tags)
            }
            SigmaMode::Implicit { max_iter } => {
                let (jt, fresh, tags) = solve_implicit_trapped(old, spec, dt, floor, max_iter)?;
                let js = solve_streaming_stationary(&fresh, spec)?;
                (jt, js, tags)
            }
        };
        let new = TwoComponentState {
            jt,
            js,
            t: old.t + dt,
        };
        self.last_change = relative_change(old, &new);
        self.state = new;
        self.tags = tags;
        self.steps += 1;
        Ok(self.last_change)
    }
}

#[derive(Debug, Clone)]
pub struct Snapshot {
    pub state: TwoComponentState,
    pub tags: Vec<Regime>,
}

#[derive(Debug, Clone)]
pub struct Trajectory {
    /// States at the requested times that were reached before the run ended.
    pub snapshots: Vec<Snapshot>,
    pub last: Snapshot,
    pub steps: usize,
    pub stationary: bool,
}

/// Steps from zero initial data until `t_end` or stationarity, recording
/// the state at the first step reaching each of `snapshot_times`.
pub fn run_to_time(
    spec: &ProblemSpec,
    grid: Arc<RadialGrid>,
    cfg: &SolverConfig,
    snapshot_times: &[f64],
) -> Result<Trajectory> {
    let mut solver = IdsaSolver::new(*spec, grid, *cfg)?;
    let mut wanted: Vec<f64> = snapshot_times.to_vec();
    wanted.sort_by(f64::total_cmp);
    let mut wanted = wanted.into_iter().peekable();
    let mut snapshots = Vec::new();
    let eps = 1e-9 * cfg.dt;
    let snap = |s: &IdsaSolver| Snapshot {
        state: s.state().clone(),
        tags: s.tags().to_vec(),
    };
    while wanted.peek().is_some_and(|&t| t <= eps) {
        wanted.next();
        snapshots.push(snap(&solver));
    }
    while solver.state().t < cfg.t_end - 0.5 * cfg.dt {
        solver.step()?;
        let t = solver.state().t;
        while wanted.peek().is_some_and(|&w| w <= t + eps) {
            wanted.next();
            snapshots.push(snap(&solver));
        }
        if solver.is_stationary() {
            break;
        }
    }
    Ok(Trajectory {
        snapshots,
        last: snap(&solver),
        steps: solver.steps(),
        stationary: solver.is_stationary(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid(n: usize) -> Arc<RadialGrid> {
        Arc::new(RadialGrid::uniform(18.0, n).unwrap())
    }

    fn sphere(kappa: f64) -> ProblemSpec {
        ProblemSpec::homogeneous_sphere(kappa, 6.0, 1.0).unwrap()
    }

    #[test]
    fn source_with_zero_absorption_vanishes() {
        let g = grid(30);
        let jt = RadialField::from_fn(g.clone(), |r| (-r).exp()).unwrap();
        let js = RadialField::constant(g.clone(), 0.2);
        let (sigma, _) = diffusion_source(&jt, &js, &sphere(1.0), DEFAULT_KAPPA_FLOOR).unwrap();
        for (i, &r) in g.centers().iter().enumerate() {
            if r >= 6.0 {
                assert_eq!(sigma[i], 0.0);
            }
        }
    }

    #[test]
    fn flat_trapped_field_regimes() {
        let g = grid(20);
        let spec = ProblemSpec::new(1.0, 6.0, 1e-3, 1e-3, 0.0).unwrap();
        let jt = RadialField::constant(g.clone(), 0.5);
        let js = RadialField::constant(g.clone(), 0.3);
        let (sigma, tags) = diffusion_source(&jt, &js, &spec, DEFAULT_KAPPA_FLOOR).unwrap();
        assert!(sigma.values().iter().all(|&s| s == 1e-3 * 0.3));
        assert!(tags.iter().all(|&t| t == Regime::Diffusion));

        let zero = RadialField::zeros(g);
        let (sigma, tags) = diffusion_source(&jt, &zero, &spec, DEFAULT_KAPPA_FLOOR).unwrap();
        assert!(sigma.values().iter().all(|&s| s == 0.0));
        assert!(tags.iter().all(|&t| t == Regime::Reaction));
    }

    #[test]
    fn diffusion_operator_is_conservative_and_exact_on_quadratics() {
        let g = grid(60);
        let kt = vec![2.0; 60];
        let jt = RadialField::from_fn(g.clone(), |r| 40.0 - r * r).unwrap();
        let d = diffusion_operator(&jt, &kt, DEFAULT_KAPPA_FLOOR).unwrap();
        // continuum value -2/k = -1, plus the discrete dr^2/(12 r^2) term
        let dr = g.dr();
        for (i, &r) in g.centers().iter().enumerate().take(59).skip(1) {
            assert!((d[i] + 1.0 + dr * dr / (12.0 * r * r)).abs() < 1e-12, "{}", d[i]);
        }
        let total: f64 = g
            .centers()
            .iter()
            .zip(&d)
            .map(|(&r, &v)| r * r * v)
            .sum();
        assert!(total.abs() < 1e-9);
    }

    #[test]
    fn trapped_step_cases() {
        let g = grid(10);
        let spec = sphere(2.0);
        let state = TwoComponentState::zeros(g.clone());
        let sigma = RadialField::zeros(g.clone());
        let jt = step_trapped(&state, &sigma, &spec, 0.1).unwrap();
        assert!((jt[0] - 0.1 * 2.0 / 1.2).abs() < 1e-16);
        assert_eq!(jt[9], 0.0); // no absorption outside

        // free streaming: Sigma = kappa_a B, decay as (1 + dt kappa_a)^-n
        let spec = sphere(1.0);
        let mut state = TwoComponentState::new(
            RadialField::constant(g.clone(), 0.7),
            RadialField::zeros(g.clone()),
            0.0,
        )
        .unwrap();
        let cap = RadialField::from_fn(g.clone(), |r| spec.kappa_a(r) * spec.b).unwrap();
        for _ in 0..5 {
            state.jt = step_trapped(&state, &cap, &spec, 0.1).unwrap();
            state.t += 0.1;
        }
        assert!((state.jt[0] - 0.7 * 1.1f64.powi(-5)).abs() < 1e-15);
        assert_eq!(state.jt[9], 0.7);
    }

    #[test]
    fn trapped_step_reports_negativity() {
        let g = grid(4);
        let state = TwoComponentState::zeros(g.clone());
        let sigma = RadialField::constant(g, 5.0);
        let err = step_trapped(&state, &sigma, &sphere(1.0), 0.1).unwrap_err();
        assert!(matches!(err, Error::Negativity { field: "Jt", index: 0, .. }));
    }

    #[test]
    fn streaming_with_no_source_is_zero() {
        let g = grid(40);
        let js = solve_streaming_stationary(&RadialField::zeros(g), &sphere(3.0)).unwrap();
        assert!(js.values().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn point_source_streams_freely() {
        let g = grid(40);
        let spec = ProblemSpec::homogeneous_sphere(1e-300, 6.0, 1.0).unwrap();
        let mut s = vec![0.0; 40];
        s[0] = 3.0;
        let js = solve_streaming_stationary(&RadialField::new(g.clone(), s).unwrap(), &spec).unwrap();
        let e = g.edges();
        let phi0 = js[0] * e[1] * e[1] * 0.5;
        for i in 1..40 {
            let area = e[i + 1] * e[i + 1] * free_streaming_flux_ratio(e[i + 1], 6.0);
            assert!((js[i] * area / phi0 - 1.0).abs() < 1e-13);
        }
    }

    #[test]
    fn opaque_sphere_streaming_profile() {
        // Sigma = kappa_a B with large kappa: Js -> B inside and the flux
        // leaving the surface is conserved outside.
        let g = grid(180);
        let spec = sphere(1e6);
        let src = RadialField::from_fn(g.clone(), |r| spec.kappa_a(r)).unwrap();
        let js = solve_streaming_stationary(&src, &spec).unwrap();
        let inside = g.count_below(6.0);
        assert!((js[inside - 1] - 1.0).abs() < 1e-4);
        let e = g.edges();
        let phi = |i: usize| js[i] * e[i + 1] * e[i + 1] * free_streaming_flux_ratio(e[i + 1], 6.0);
        for i in inside..180 {
            assert!((phi(i) / phi(inside - 1) - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn prop_source_never_free_streams_for_flat_partial_fields() {
        let g = grid(12);
        for &(js_level, ka) in &[(0.3, 1e-3), (0.01, 1.0), (0.99, 5.0)] {
            let spec = ProblemSpec::new(1.0, 6.0, ka, ka, 0.0).unwrap();
            let jt = RadialField::constant(g.clone(), 0.4);
            let js = RadialField::constant(g.clone(), js_level);
            let (_, tags) = diffusion_source(&jt, &js, &spec, DEFAULT_KAPPA_FLOOR).unwrap();
            assert!(tags.iter().all(|&t| t != Regime::FreeStreaming));
        }
    }

    #[test]
    fn vanishing_absorption_keeps_the_trajectory_near_zero() {
        let g = grid(20);
        let spec = ProblemSpec::new(1.0, 6.0, 1e-12, 0.0, 0.0).unwrap();
        let cfg = SolverConfig {
            t_end: 2.0,
            stationarity_tol: 1e-300,
            ..SolverConfig::default()
        };
        let traj = run_to_time(&spec, g, &cfg, &[0.0, 1.0, 1.5]).unwrap();
        assert!(traj.last.state.jt.values().iter().all(|&v| v <= 2e-12));
        assert!(traj.last.state.js.values().iter().all(|&v| v <= 1e-10));
        let times: Vec<f64> = traj.snapshots.iter().map(|s| s.state.t).collect();
        assert_eq!(times.len(), 3);
        assert_eq!(times[0], 0.0);
        assert!((times[1] - 1.0).abs() < 1e-9 && (times[2] - 1.5).abs() < 1e-9);
    }

    #[test]
    fn opaque_sphere_fills_with_trapped_particles() {
        let g = grid(36);
        let spec = sphere(1e4);
        let cfg = SolverConfig {
            t_end: 5.0,
            ..SolverConfig::default()
        };
        let traj = run_to_time(&spec, g.clone(), &cfg, &[]).unwrap();
        let inside = g.count_below(6.0);
        for i in 0..inside - 1 {
            assert!((traj.last.state.jt[i] - 1.0).abs() < 1e-6);
            assert!(traj.last.state.js[i] < 1e-3);
        }
    }

    #[test]
    fn coarse_sphere_reaches_a_stationary_state() {
        let g = grid(50);
        let cfg = SolverConfig {
            t_end: 2000.0,
            stationarity_tol: 1e-12,
            ..SolverConfig::default()
        };
        let traj = run_to_time(&sphere(1.0), g.clone(), &cfg, &[]).unwrap();
        assert!(traj.stationary);
        let s = &traj.last.state;
        let inside = g.count_below(6.0);
        for i in 1..inside {
            assert!(s.jt[i] <= s.jt[i - 1] + 1e-12);
        }
        assert!(s.total().max() <= 1.0);
    }

    #[test]
    fn implicit_and_lagged_agree_at_stationarity() {
        let g = grid(50);
        let base = SolverConfig {
            t_end: 2000.0,
            stationarity_tol: 1e-12,
            ..SolverConfig::default()
        };
        let implicit = SolverConfig {
            sigma: SigmaMode::Implicit { max_iter: DEFAULT_MAX_ITER },
            ..base
        };
        let a = run_to_time(&sphere(1.0), g.clone(), &base, &[]).unwrap();
        let b = run_to_time(&sphere(1.0), g, &implicit, &[]).unwrap();
        let ja = a.last.state.total();
        let jb = b.last.state.total();
        for i in 0..50 {
            assert!((ja[i] - jb[i]).abs() < 1e-8, "cell {i}: {} vs {}", ja[i], jb[i]);
        }
    }

    #[test]
    fn config_validation() {
        let bad = SolverConfig {
            dt: 0.0,
            ..SolverConfig::default()
        };
        assert!(bad.validate().is_err());
        let bad = SolverConfig {
            kappa_floor: -1.0,
            ..SolverConfig::default()
        };
        assert!(bad.validate().is_err());
        assert!(SolverConfig::default().validate().is_ok());
    }
}
