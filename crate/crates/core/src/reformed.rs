//! Reformulated IDSA schemes that split the domain at the sphere radius `R`
//! instead of selecting regimes through the diffusion source.
//!
//! Inside the sphere the trapped field obeys a diffusion equation with a
//! zero-flux condition at the origin and `Jt(R) = 0`; outside, `Jt = 0` and
//! the streaming field is the divergence-free continuation
//! `Js(r) = Js(R) (1 - sqrt(1 - (R/r)^2))`.
//!
//! - **Old**: `dJt/dt = kappa (B - Jt) + D[Jt] + (2/3) dJt/dr`, with
//!   `Js = -(2/(3 kappa)) dJt/dr` inside.
//! - **New**: `dJt/dt = kappa (B - Jt) + D[Jt]`, with `Js` proportional to
//!   `dJt/dr` and scaled so that `Js(R)` equals the exact surface value.
//!
//! The Dirichlet condition is imposed at `R` itself, which in general falls
//! between two cell centers: the last interior cell is cut off at `R` and its
//! outer flux is taken from the quadratic through the last two cells and
//! `(R, 0)`. Radial derivatives use centered differences, except in the last
//! interior cell and at `R`, where that quadratic is differentiated.

use std::sync::Arc;

use crate::grid::{ProblemSpec, RadialField, RadialGrid};
use crate::oracle::{free_streaming_eddington_factor, free_streaming_flux_ratio, surface_intensity, tangent_cosine};
use crate::original::{relative_change, SolverConfig, TwoComponentState, NEGATIVITY_SLACK};
use crate::tridiag::Tridiagonal;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Variant {
    Old,
    New,
}

impl Variant {
    pub fn name(&self) -> &'static str {
        match self {
            Variant::Old => "old",
            Variant::New => "new",
        }
    }
}

/// One reformed scheme on one grid.
#[derive(Debug, Clone)]
pub struct ReformedScheme {
    variant: Variant,
    spec: ProblemSpec,
    grid: Arc<RadialGrid>,
    cfg: SolverConfig,
    inside: usize,
    // distance from the last interior center to R
    gap: f64,
}

impl ReformedScheme {
    pub fn new(variant: Variant, spec: ProblemSpec, grid: Arc<RadialGrid>, cfg: SolverConfig) -> Result<Self> {
        spec.validate()?;
        cfg.validate()?;
        if spec.kappa_outside != 0.0 || spec.kappa_s != 0.0 {
            return Err(Error::InvalidArgument(
                "reformed schemes need kappa_outside = 0 and kappa_s = 0".into(),
            ));
        }
        let inside = grid.count_below(spec.radius);
        if inside < 3 {
            return Err(Error::InvalidArgument(format!(
                "need at least 3 cell centers below R = {}, got {inside}",
                spec.radius
            )));
        }
        if spec.radius > grid.r_max() {
            return Err(Error::InvalidArgument(format!(
                "R = {} lies beyond r_max = {}",
                spec.radius,
                grid.r_max()
            )));
        }
        let gap = spec.radius - grid.centers()[inside - 1];
        Ok(Self {
            variant,
            spec,
            grid,
            cfg,
            inside,
            gap,
        })
    }

    pub fn variant(&self) -> Variant {
        self.variant
    }

    pub fn spec(&self) -> &ProblemSpec {
        &self.spec
    }

    pub fn grid(&self) -> &Arc<RadialGrid> {
        &self.grid
    }

    pub fn config(&self) -> &SolverConfig {
        &self.cfg
    }

    /// Number of cells with center below `R`.
    pub fn inside(&self) -> usize {
        self.inside
    }

    /// Interior trapped operator `L` as a tridiagonal matrix, with
    /// `dJt/dt = L Jt + kappa B`.
    pub fn trapped_operator(&self) -> Tridiagonal {
        let n = self.inside;
        let kappa = self.spec.kappa;
        let radius = self.spec.radius;
        let dr = self.grid.dr();
        let (edges, centers) = (self.grid.edges(), self.grid.centers());
        let mut a = Tridiagonal::zeros(n);
        for i in 0..n {
            let last = i + 1 == n;
            // exact shell volumes; the last cell ends at R
            let outer = if last { radius } else { edges[i + 1] };
            let vol = (outer.powi(3) - edges[i].powi(3)) / 3.0;
            a.diag[i] = -kappa;
            if i > 0 {
                let w = edges[i] * edges[i] / (3.0 * kappa * dr) / vol;
                a.lower[i] += w;
                a.diag[i] -= w;
            }
            if last {
                // flux through R from the same quadratic as `trapped_gradient`
                let (lo, hi) = surface_slope_weights(centers[i - 1], centers[i], radius);
                let w = radius * radius / (3.0 * kappa) / vol;
                a.lower[i] += w * lo;
                a.diag[i] += w * hi;
            } else {
                let w = edges[i + 1] * edges[i + 1] / (3.0 * kappa * dr) / vol;
                a.diag[i] -= w;
                a.upper[i] += w;
            }
            if self.variant == Variant::Old {
                // upwind (2/3) dJ/dr, information travels inward
                let spacing = if last { self.gap } else { dr };
                let c = 2.0 / 3.0 / spacing;
                a.diag[i] -= c;
                if !last {
                    a.upper[i] += c;
                }
            }
        }
        a
    }

    /// `dJt/dr` at the interior centers and at `R`; near `R` from the cubic
    /// through the last three cells and `(R, 0)`.
    pub fn trapped_gradient(&self, jt: &[f64]) -> (Vec<f64>, f64) {
        let n = self.inside;
        let dr = self.grid.dr();
        let c = self.grid.centers();
        let mut g = vec![0.0; n];
        g[0] = (jt[1] - jt[0]) / (2.0 * dr);
        for i in 1..n - 1 {
            g[i] = (jt[i + 1] - jt[i - 1]) / (2.0 * dr);
        }
        let xs = [c[n - 3], c[n - 2], c[n - 1], self.spec.radius];
        let fs = [jt[n - 3], jt[n - 2], jt[n - 1], 0.0];
        g[n - 1] = lagrange_slope(&xs, &fs, xs[2]);
        (g, lagrange_slope(&xs, &fs, xs[3]))
    }

    /// Streaming field on the whole grid for the interior trapped values.
    pub fn streaming_from_trapped(&self, jt: &[f64]) -> Result<Vec<f64>> {
        let (grad, grad_r) = self.trapped_gradient(jt);
        let (factor, js_r) = match self.variant {
            Variant::Old => {
                let f = -2.0 / (3.0 * self.spec.kappa);
                (f, f * grad_r)
            }
            Variant::New => {
                if grad_r == 0.0 {
                    return Err(Error::NormalizationSingularity);
                }
                let js_r = surface_intensity(self.spec.kappa, self.spec.radius, self.spec.b);
                (js_r / grad_r, js_r)
            }
        };
        let inner: Vec<f64> = grad.iter().map(|g| factor * g).collect();
        // a flat stretch of Jt has a gradient at roundoff level only; the
        // roundoff of the tridiagonal sweep grows like sqrt(cells)
        let jt_max = jt.iter().fold(0.0, |m: f64, v| m.max(v.abs()));
        let sweep = (self.inside as f64).sqrt();
        let noise = 8.0 * f64::EPSILON * sweep * jt_max / self.grid.dr() * factor.abs();
        let floor = -NEGATIVITY_SLACK * self.spec.b - noise;
        if let Some(i) = inner.iter().position(|&v| v < floor) {
            return Err(Error::NegativeStreaming { index: i });
        }
        if js_r < floor {
            return Err(Error::NegativeStreaming { index: self.inside });
        }
        let mut js = inner;
        js.extend(
            self.grid.centers()[self.inside..]
                .iter()
                .map(|&r| js_r * (1.0 - tangent_cosine(r, self.spec.radius))),
        );
        Ok(js)
    }

    fn assemble(&self, jt_inside: Vec<f64>, t: f64) -> Result<TwoComponentState> {
        let js = self.streaming_from_trapped(&jt_inside)?;
        let mut jt = jt_inside;
        jt.resize(self.grid.n_cells(), 0.0);
        TwoComponentState::new(
            RadialField::new(self.grid.clone(), jt)?,
            RadialField::new(self.grid.clone(), js)?,
            t,
        )
    }

    /// One backward-Euler step of length `cfg.dt`.
    pub fn step(&self, state: &TwoComponentState) -> Result<TwoComponentState> {
        if !self.grid.same_as(state.grid()) {
            return Err(Error::GridMismatch);
        }
        let dt = self.cfg.dt;
        let mut a = self.trapped_operator();
        for i in 0..self.inside {
            a.lower[i] *= -dt;
            a.upper[i] *= -dt;
            a.diag[i] = 1.0 - dt * a.diag[i];
        }
        let rhs: Vec<f64> = (0..self.inside)
            .map(|i| state.jt[i] + dt * self.spec.kappa * self.spec.b)
            .collect();
        let jt = a.solve(&rhs)?;
        let t = state.t + dt;
        if let Some(i) = jt.iter().position(|&v| v < -NEGATIVITY_SLACK * self.spec.b) {
            return Err(Error::Negativity {
                field: "Jt",
                time: t,
                index: i,
                value: jt[i],
            });
        }
        self.assemble(jt, t)
    }

    /// Stationary state from one direct solve of `L Jt = -kappa B`.
    pub fn stationary(&self) -> Result<TwoComponentState> {
        let mut a = self.trapped_operator();
        for i in 0..self.inside {
            a.lower[i] = -a.lower[i];
            a.upper[i] = -a.upper[i];
            a.diag[i] = -a.diag[i];
        }
        let rhs = vec![self.spec.kappa * self.spec.b; self.inside];
        let jt = a.solve(&rhs)?;
        self.assemble(jt, f64::INFINITY)
    }

    /// Marches from zero data until the relative change per step drops
    /// below `cfg.stationarity_tol`, or `cfg.t_end` is reached.
    pub fn run_to_stationary(&self) -> Result<MarchOutcome> {
        let mut state = TwoComponentState::zeros(self.grid.clone());
        let mut steps = 0;
        let dt = self.cfg.dt;
        while state.t < self.cfg.t_end - 0.5 * dt {
            let next = self.step(&state)?;
            let change = relative_change(&state, &next);
            state = next;
            steps += 1;
            if change < self.cfg.stationarity_tol {
                return Ok(MarchOutcome {
                    state,
                    steps,
                    stationary: true,
                });
            }
        }
        Ok(MarchOutcome {
            state,
            steps,
            stationary: false,
        })
    }
}

#[derive(Debug, Clone)]
pub struct MarchOutcome {
    pub state: TwoComponentState,
    pub steps: usize,
    pub stationary: bool,
}

/// Weights `(w0, w1)` with `dJ/dr(x2) = w0 J(x0) + w1 J(x1)` for the
/// quadratic through `(x0, J0)`, `(x1, J1)` and `(x2, 0)`.
fn surface_slope_weights(x0: f64, x1: f64, x2: f64) -> (f64, f64) {
    (
        (x2 - x1) / ((x0 - x1) * (x0 - x2)),
        (x2 - x0) / ((x1 - x0) * (x1 - x2)),
    )
}

/// Derivative at `x` of the interpolating polynomial through `(xs, fs)`.
fn lagrange_slope(xs: &[f64], fs: &[f64], x: f64) -> f64 {
    let mut total = 0.0;
    for (k, (&xk, &fk)) in xs.iter().zip(fs).enumerate() {
        if fk == 0.0 {
            continue;
        }
        let denom: f64 = xs.iter().enumerate().filter(|&(l, _)| l != k).map(|(_, &xl)| xk - xl).product();
        let mut num = 0.0;
        for m in (0..xs.len()).filter(|&m| m != k) {
            num += xs
                .iter()
                .enumerate()
                .filter(|&(l, _)| l != k && l != m)
                .map(|(_, &xl)| x - xl)
                .product::<f64>();
        }
        total += fk * num / denom;
    }
    total
}

/// One Old-IDSA step.
pub fn step_old_idsa(state: &TwoComponentState, scheme: &ReformedScheme) -> Result<TwoComponentState> {
    if scheme.variant() != Variant::Old {
        return Err(Error::InvalidArgument("scheme is not the Old IDSA".into()));
    }
    scheme.step(state)
}

/// One New-IDSA step.
pub fn step_new_idsa(state: &TwoComponentState, scheme: &ReformedScheme) -> Result<TwoComponentState> {
    if scheme.variant() != Variant::New {
        return Err(Error::InvalidArgument("scheme is not the New IDSA".into()));
    }
    scheme.step(state)
}

/// `sinh(a) / sinh(b)` for `0 <= a <= b`, without overflow.
fn sinh_ratio(a: f64, b: f64) -> f64 {
    (a - b).exp() * (-2.0 * a).exp_m1() / (-2.0 * b).exp_m1()
}

/// `cosh(a) / sinh(b)` for `0 <= a <= b`, `b > 0`.
fn cosh_sinh_ratio(a: f64, b: f64) -> f64 {
    (a - b).exp() * (1.0 + (-2.0 * a).exp()) / -(-2.0 * b).exp_m1()
}

/// `x / sinh(x)` for `x > 0`.
fn x_over_sinh(x: f64) -> f64 {
    2.0 * x * (-x).exp() / -(-2.0 * x).exp_m1()
}

/// `(sinh(y)/y^2 - cosh(y)/y) / sinh(b)` for `0 < y <= b`.
fn gradient_shape(y: f64, b: f64) -> f64 {
    if y < 0.5 {
        // -sum_{n>=1} 2n y^(2n-1) / (2n+1)!
        let mut term = y / 3.0; // n = 1
        let mut sum = term;
        let y2 = y * y;
        for n in 2..12 {
            let n = n as f64;
            term *= y2 * n / ((n - 1.0) * (2.0 * n) * (2.0 * n + 1.0));
            sum += term;
        }
        -sum * 2.0 * (-b).exp() / -(-2.0 * b).exp_m1()
    } else {
        sinh_ratio(y, b) / (y * y) - cosh_sinh_ratio(y, b) / y
    }
}

/// Stationary New-IDSA `(Jt, Js)` at radius `r`.
pub fn new_idsa_stationary_at(r: f64, spec: &ProblemSpec) -> (f64, f64) {
    let (b, radius, kappa) = (spec.b, spec.radius, spec.kappa);
    let x = 3f64.sqrt() * kappa;
    let xr = x * radius;
    let js_r = surface_intensity(kappa, radius, b);
    if r >= radius {
        return (0.0, js_r * (1.0 - tangent_cosine(r, radius)));
    }
    // dJt/dr at R is (B/R)(1 - xR coth(xR))
    let coth = 1.0 + 2.0 / (2.0 * xr).exp_m1();
    let grad_r = b / radius * (1.0 - xr * coth);
    let y = x * r;
    let jt = if r == 0.0 {
        b * (1.0 - x_over_sinh(xr))
    } else {
        b * (1.0 - radius / r * sinh_ratio(y, xr))
    };
    let grad = b * radius * x * x * gradient_shape(y, xr);
    let js = if grad_r == 0.0 { 0.0 } else { js_r * grad / grad_r };
    (jt, js)
}

/// Stationary New-IDSA state in closed form at the grid centers.
pub fn new_idsa_stationary_closed_form(grid: &Arc<RadialGrid>, spec: &ProblemSpec) -> Result<TwoComponentState> {
    spec.validate()?;
    let (jt, js) = grid.centers().iter().map(|&r| new_idsa_stationary_at(r, spec)).unzip();
    TwoComponentState::new(
        RadialField::new(grid.clone(), jt)?,
        RadialField::new(grid.clone(), js)?,
        f64::INFINITY,
    )
}

/// Relative error of the New IDSA at the origin,
/// `(y/sinh(y) - e^{-kappa R}) / (1 - e^{-kappa R})` with `y = sqrt(3) kappa R`.
pub fn err0(kappa_r: f64) -> Result<f64> {
    if !(kappa_r > 0.0 && kappa_r.is_finite()) {
        return Err(Error::InvalidArgument(format!("kappa R must be positive, got {kappa_r}")));
    }
    let y = 3f64.sqrt() * kappa_r;
    let e = (-kappa_r).exp();
    Ok((x_over_sinh(y) - e) / -(-kappa_r).exp_m1())
}

/// Flux-factor closures of the trapped and streaming components.
#[derive(Debug, Clone)]
pub struct ClosureSet {
    pub h_t: f64,
    pub k_t: f64,
    pub h_s: RadialField,
    pub k_s: RadialField,
}

impl ClosureSet {
    /// `h_t = 0`, `k_t = 1/3`; `h_s`, `k_s` are the infinite-sphere values
    /// outside and `1/2`, `1/3` inside.
    pub fn for_sphere(grid: &Arc<RadialGrid>, radius: f64) -> Result<Self> {
        Ok(Self {
            h_t: 0.0,
            k_t: 1.0 / 3.0,
            h_s: RadialField::from_fn(grid.clone(), |r| free_streaming_flux_ratio(r, radius))?,
            k_s: RadialField::from_fn(grid.clone(), |r| free_streaming_eddington_factor(r, radius))?,
        })
    }
}

/// Reconstructed moments and flux factors of a two-component state.
#[derive(Debug, Clone)]
pub struct Reconstruction {
    pub j: RadialField,
    pub h: RadialField,
    pub k: RadialField,
    /// `H / J`, `None` where `J = 0`.
    pub flux_ratio: Vec<Option<f64>>,
    /// `K / J`, `None` where `J = 0`.
    pub eddington: Vec<Option<f64>>,
}

pub fn reconstruct_hk(state: &TwoComponentState, closures: &ClosureSet) -> Result<Reconstruction> {
    state.jt.check_same_grid(&closures.h_s)?;
    let j = state.total();
    let h = RadialField::new(
        state.grid().clone(),
        (0..j.len())
            .map(|i| closures.h_t * state.jt[i] + closures.h_s[i] * state.js[i])
            .collect(),
    )?;
    let k = RadialField::new(
        state.grid().clone(),
        (0..j.len())
            .map(|i| closures.k_t * state.jt[i] + closures.k_s[i] * state.js[i])
            .collect(),
    )?;
    let ratio = |m: &RadialField| -> Vec<Option<f64>> {
        (0..j.len()).map(|i| (j[i] > 0.0).then(|| m[i] / j[i])).collect()
    };
    Ok(Reconstruction {
        flux_ratio: ratio(&h),
        eddington: ratio(&k),
        j,
        h,
        k,
    })
}
