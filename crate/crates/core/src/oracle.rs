//! Exact stationary solution of the homogeneous sphere and its moments.
//!
//! The sphere absorbs and emits with opacity `kappa` for `r < R` and is
//! vacuum outside. Along a ray the distribution is
//! `f = B (1 - exp(-kappa s))` where `s` is the chord length through the
//! sphere behind the point. The moments `J`, `H`, `K` are the `mu^0..2`
//! averages of `f`; they reduce to one-dimensional integrals over `mu`
//! which are evaluated by adaptive quadrature.
//!
//! Inside the sphere the integrands contain `cosh(kappa r mu) e^{-kappa R G}`
//! and the `sinh` analogue. Both factors overflow separately for large
//! `kappa`, so they are combined into `(e^{kappa(r mu - R G)} ± e^{-kappa(r mu + R G)}) / 2`,
//! where `r mu - R G < 0` for every `r < R`.

use std::sync::Arc;

use rayon::prelude::*;

use crate::grid::{ProblemSpec, RadialField, RadialGrid};
use crate::quadrature::{integrate_graded, QuadratureOptions};
use crate::{Error, Result};

/// Default absolute/relative tolerance for the moment integrals.
pub const DEFAULT_TOLERANCE: f64 = 1e-10;

// Endpoint layers have width ~ 1/(kappa R)^2 in mu at worst.
const GRADING_LEVELS: u32 = 12;

// Slack for radicands that are zero in exact arithmetic.
const RADICAND_SLACK: f64 = 1e-12;

/// Zeroth, first and second angular moments on a grid.
#[derive(Debug, Clone)]
pub struct MomentTriple {
    pub j: RadialField,
    pub h: RadialField,
    pub k: RadialField,
}

/// Flux ratio `h = H/J` and variable Eddington factor `k = K/J`.
#[derive(Debug, Clone)]
pub struct FluxFactors {
    pub h: RadialField,
    pub k: RadialField,
}

impl MomentTriple {
    /// Flux factors of these moments; fails where `J` vanishes.
    pub fn flux_factors(&self) -> Result<FluxFactors> {
        if let Some(i) = self.j.values().iter().position(|&j| j == 0.0) {
            return Err(Error::DivisionByZero { index: i });
        }
        Ok(FluxFactors {
            h: self.h.zip_with(&self.j, |h, j| h / j)?,
            k: self.k.zip_with(&self.j, |k, j| k / j)?,
        })
    }
}

/// `G(r, mu) = sqrt(1 - (r/R)^2 (1 - mu^2))`.
pub fn geometry_factor(r: f64, mu: f64, radius: f64) -> Result<f64> {
    let q = r / radius;
    let radicand = 1.0 - q * q * (1.0 - mu * mu);
    if radicand < -RADICAND_SLACK {
        return Err(Error::Domain(format!(
            "negative radicand {radicand:e} in G(r={r}, mu={mu}, R={radius})"
        )));
    }
    Ok(radicand.max(0.0).sqrt())
}

/// Cosine of the tangent direction `sqrt(1 - (R/r)^2)`; rays from `r >= R`
/// hit the sphere only for `mu` above it.
pub fn tangent_cosine(r: f64, radius: f64) -> f64 {
    if r <= radius {
        return 0.0;
    }
    let q = radius / r;
    (1.0 - q * q).max(0.0).sqrt()
}

/// Chord length `s(r, mu)` of the backward ray inside the sphere.
pub fn path_length(r: f64, mu: f64, radius: f64) -> Result<f64> {
    if !(-1.0..=1.0).contains(&mu) {
        return Err(Error::Domain(format!("mu = {mu} outside [-1, 1]")));
    }
    if r < radius {
        Ok(r * mu + radius * geometry_factor(r, mu, radius)?)
    } else {
        let mu_min = tangent_cosine(r, radius);
        if mu < mu_min - RADICAND_SLACK {
            return Err(Error::Domain(format!(
                "mu = {mu} outside the cone mu > {mu_min} at r = {r}"
            )));
        }
        Ok(2.0 * radius * geometry_factor(r, mu, radius)?)
    }
}

/// `f(r, mu) = B (1 - exp(-kappa s(r, mu)))`, zero for rays missing the sphere.
pub fn exact_distribution(r: f64, mu: f64, spec: &ProblemSpec) -> f64 {
    match path_length(r, mu, spec.radius) {
        Ok(s) => -spec.b * (-spec.kappa * s).exp_m1(),
        Err(_) => 0.0,
    }
}

fn require_pure_sphere(spec: &ProblemSpec) -> Result<()> {
    spec.validate()?;
    if spec.kappa_outside != 0.0 || spec.kappa_s != 0.0 {
        return Err(Error::InvalidArgument(
            "the closed-form solution needs kappa_outside = 0 and kappa_s = 0".into(),
        ));
    }
    Ok(())
}

fn quadrature_failure(radius: f64, error: [f64; 3]) -> Error {
    Error::QuadratureFailure {
        radius,
        error: error.iter().copied().fold(0.0, f64::max),
    }
}

/// `(J, H, K)` of the exact solution at a single radius.
pub fn moments_at(r: f64, spec: &ProblemSpec, tol: f64) -> Result<[f64; 3]> {
    require_pure_sphere(spec)?;
    if !(tol > 0.0) {
        return Err(Error::InvalidArgument(format!("tolerance must be positive, got {tol}")));
    }
    if !(r >= 0.0 && r.is_finite()) {
        return Err(Error::InvalidArgument(format!("radius must be >= 0, got {r}")));
    }
    let opts = QuadratureOptions::with_tolerance(tol);
    let (b, big_r, kappa) = (spec.b, spec.radius, spec.kappa);
    let q2 = (r / big_r).powi(2);
    let g = |mu: f64| (1.0 - q2 * (1.0 - mu * mu)).max(0.0).sqrt();

    if r < big_r {
        let integrand = |mu: f64| {
            let rg = big_r * g(mu);
            let grow = (kappa * (r * mu - rg)).exp();
            let decay = (-kappa * (r * mu + rg)).exp();
            let c = 0.5 * (grow + decay);
            let s = 0.5 * (grow - decay);
            [c, mu * s, mu * mu * c]
        };
        let est = integrate_graded(integrand, 0.0, 1.0, GRADING_LEVELS, &opts)
            .map_err(|e| quadrature_failure(r, e.best.error))?;
        let [ic, is, ic2] = est.value;
        Ok([b * (1.0 - ic), b * is, b * (1.0 / 3.0 - ic2)])
    } else {
        let mu_min = tangent_cosine(r, big_r);
        let ratio2 = (big_r / r).powi(2);
        // 1 - mu_min without cancellation at large r
        let one_minus = ratio2 / (1.0 + mu_min);
        let integrand = |mu: f64| {
            let e = (-2.0 * kappa * big_r * g(mu)).exp();
            [e, mu * e, mu * mu * e]
        };
        let est = integrate_graded(integrand, mu_min, 1.0, GRADING_LEVELS, &opts)
            .map_err(|e| quadrature_failure(r, e.best.error))?;
        let [i0, i1, i2] = est.value;
        let one_minus_cube = one_minus * (1.0 + mu_min + mu_min * mu_min);
        Ok([
            0.5 * b * (one_minus - i0),
            0.5 * b * (0.5 * ratio2 - i1),
            b / 6.0 * (one_minus_cube - 3.0 * i2),
        ])
    }
}

/// Exact moments at every cell center, evaluated in parallel.
pub fn exact_moments(grid: &Arc<RadialGrid>, spec: &ProblemSpec, tol: f64) -> Result<MomentTriple> {
    require_pure_sphere(spec)?;
    let results: Vec<Result<[f64; 3]>> = grid
        .centers()
        .par_iter()
        .map(|&r| moments_at(r, spec, tol))
        .collect();

    let mut worst: Option<Error> = None;
    let mut n = Vec::with_capacity(results.len());
    for res in results {
        match res {
            Ok(m) => n.push(m),
            Err(e @ Error::QuadratureFailure { .. }) => {
                let replace = match (&worst, &e) {
                    (
                        Some(Error::QuadratureFailure { error: old, .. }),
                        Error::QuadratureFailure { error: new, .. },
                    ) => new > old,
                    _ => true,
                };
                if replace {
                    worst = Some(e);
                }
            }
            Err(e) => return Err(e),
        }
    }
    if let Some(e) = worst {
        return Err(e);
    }
    let column = |c: usize| RadialField::new(grid.clone(), n.iter().map(|m| m[c]).collect());
    Ok(MomentTriple {
        j: column(0)?,
        h: column(1)?,
        k: column(2)?,
    })
}

/// Closed-form values of `J` and `H` at the center and at the surface.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpecialValues {
    pub j0: f64,
    pub jr: f64,
    pub h0: f64,
    pub hr: f64,
}

/// `J(R) = (B/2)(1 + (e^{-2 kappa R} - 1)/(2 kappa R))`.
pub fn surface_intensity(kappa: f64, radius: f64, b: f64) -> f64 {
    let x = 2.0 * kappa * radius;
    0.5 * b * (1.0 + (-x).exp_m1() / x)
}

pub fn special_values(spec: &ProblemSpec) -> SpecialValues {
    let (b, kr) = (spec.b, spec.kappa_r());
    let x = 2.0 * kr;
    // (e^{-x}(1 + x) - 1) / x^2, with its Taylor series near 0
    let tail = if x < 1e-3 {
        -0.5 + x / 3.0 - x * x / 8.0 + x * x * x / 30.0
    } else {
        ((-x).exp() * (1.0 + x) - 1.0) / (x * x)
    };
    SpecialValues {
        j0: -b * (-kr).exp_m1(),
        jr: surface_intensity(spec.kappa, spec.radius, b),
        h0: 0.0,
        hr: 0.5 * b * (0.5 + tail),
    }
}

/// Flux ratio of the infinitely opaque sphere seen from outside,
/// `(1 + sqrt(1 - (R/r)^2)) / 2`, and `1/2` inside.
pub fn free_streaming_flux_ratio(r: f64, radius: f64) -> f64 {
    if r < radius {
        0.5
    } else {
        0.5 * (1.0 + tangent_cosine(r, radius))
    }
}

/// Variable Eddington factor of the streaming field around an infinitely
/// opaque sphere: `1/3` inside, `(2 - (R/r)^2 + sqrt(1 - (R/r)^2)) / 3` outside.
pub fn free_streaming_eddington_factor(r: f64, radius: f64) -> f64 {
    if r < radius {
        1.0 / 3.0
    } else {
        let q2 = (radius / r).powi(2);
        (2.0 - q2 + tangent_cosine(r, radius)) / 3.0
    }
}

/// Moments of the infinitely opaque sphere (`kappa -> infinity`).
pub fn limit_moments_infinite_kappa(grid: &Arc<RadialGrid>, radius: f64, b: f64) -> Result<MomentTriple> {
    if !(radius > 0.0) {
        return Err(Error::InvalidArgument(format!("R must be positive, got {radius}")));
    }
    let j = RadialField::from_fn(grid.clone(), |r| {
        if r < radius {
            b
        } else {
            let q2 = (radius / r).powi(2);
            0.5 * b * q2 / (1.0 + tangent_cosine(r, radius))
        }
    })?;
    let h = RadialField::from_fn(grid.clone(), |r| {
        if r < radius {
            0.0
        } else {
            0.25 * b * (radius / r).powi(2)
        }
    })?;
    let k = RadialField::from_fn(grid.clone(), |r| {
        if r < radius {
            b / 3.0
        } else {
            let mu = tangent_cosine(r, radius);
            let one_minus = (radius / r).powi(2) / (1.0 + mu);
            b / 6.0 * one_minus * (1.0 + mu + mu * mu)
        }
    })?;
    Ok(MomentTriple { j, h, k })
}

/// Flux factors `h_R`, `k_R` of the infinitely opaque sphere.
pub fn flux_factors_infinite(grid: &Arc<RadialGrid>, radius: f64) -> Result<FluxFactors> {
    if !(radius > 0.0) {
        return Err(Error::InvalidArgument(format!("R must be positive, got {radius}")));
    }
    let h = RadialField::from_fn(grid.clone(), |r| {
        if r < radius {
            0.0
        } else {
            free_streaming_flux_ratio(r, radius)
        }
    })?;
    let k = RadialField::from_fn(grid.clone(), |r| free_streaming_eddington_factor(r, radius))?;
    Ok(FluxFactors { h, k })
}

/// Radius where the optical depth reaches 2/3: `R - 2/(3 kappa)`.
pub fn neutrinosphere_radius(spec: &ProblemSpec) -> Result<f64> {
    spec.validate()?;
    if spec.kappa_outside != 0.0 {
        return Err(Error::InvalidArgument(
            "optical depth diverges when kappa_outside > 0".into(),
        ));
    }
    let kr = spec.kappa_r();
    if kr <= 2.0 / 3.0 {
        return Err(Error::NoNeutrinosphere { kappa_r: kr });
    }
    Ok(spec.radius - 2.0 / (3.0 * spec.kappa))
}
