//! Radial meshes, scalar fields on them and the problem definition.
//!
//! All solvers work on a uniform cell-centered mesh over `[0, r_max]`. No
//! cell center sits at the origin, so the `1/r` and `1/r^2` factors of the
//! spherical operators never need special treatment.

use std::ops::Index;
use std::sync::Arc;

use crate::{Error, Result};

/// Ratio between the default outer radius and the sphere radius.
pub const DEFAULT_RMAX_FACTOR: f64 = 3.0;

/// Uniform cell-centered radial mesh.
#[derive(Debug, Clone)]
pub struct RadialGrid {
    r_max: f64,
    dr: f64,
    edges: Vec<f64>,
    centers: Vec<f64>,
}

impl RadialGrid {
    /// Uniform mesh with `n_cells` cells on `[0, r_max]`.
    pub fn uniform(r_max: f64, n_cells: usize) -> Result<Self> {
        if !(r_max.is_finite() && r_max > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "r_max must be positive and finite, got {r_max}"
            )));
        }
        if n_cells < 2 {
            return Err(Error::InvalidArgument(format!(
                "need at least 2 cells, got {n_cells}"
            )));
        }
        let dr = r_max / n_cells as f64;
        let mut edges: Vec<f64> = (0..=n_cells).map(|i| i as f64 * dr).collect();
        edges[n_cells] = r_max;
        let centers = edges.windows(2).map(|w| 0.5 * (w[0] + w[1])).collect();
        Ok(Self {
            r_max,
            dr,
            edges,
            centers,
        })
    }

    /// Mesh over `[0, 3R]`, the default domain for a sphere of radius `radius`.
    pub fn for_sphere(radius: f64, n_cells: usize) -> Result<Self> {
        Self::uniform(DEFAULT_RMAX_FACTOR * radius, n_cells)
    }

    pub fn r_max(&self) -> f64 {
        self.r_max
    }

    pub fn n_cells(&self) -> usize {
        self.centers.len()
    }

    pub fn dr(&self) -> f64 {
        self.dr
    }

    /// Cell edges, `n_cells + 1` values from 0 to `r_max`.
    pub fn edges(&self) -> &[f64] {
        &self.edges
    }

    /// Cell midpoints.
    pub fn centers(&self) -> &[f64] {
        &self.centers
    }

    /// Number of leading cells whose center lies strictly below `radius`.
    ///
    /// A center that coincides with `radius` counts as outside, matching the
    /// step opacity `kappa * 1{r < R}`.
    pub fn count_below(&self, radius: f64) -> usize {
        self.centers.partition_point(|&c| c < radius)
    }

    /// Same-mesh test used before combining fields.
    pub fn same_as(&self, other: &RadialGrid) -> bool {
        self.n_cells() == other.n_cells() && self.r_max == other.r_max
    }
}

impl PartialEq for RadialGrid {
    fn eq(&self, other: &Self) -> bool {
        self.same_as(other)
    }
}

/// Scalar profile sampled at the cell centers of a grid.
#[derive(Debug, Clone)]
pub struct RadialField {
    grid: Arc<RadialGrid>,
    values: Vec<f64>,
}

impl RadialField {
    pub fn new(grid: Arc<RadialGrid>, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.n_cells() {
            return Err(Error::InvalidArgument(format!(
                "field has {} values but grid has {} cells",
                values.len(),
                grid.n_cells()
            )));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "non-finite field value {} at cell {i}",
                values[i]
            )));
        }
        Ok(Self { grid, values })
    }

    pub fn zeros(grid: Arc<RadialGrid>) -> Self {
        let n = grid.n_cells();
        Self {
            grid,
            values: vec![0.0; n],
        }
    }

    pub fn constant(grid: Arc<RadialGrid>, value: f64) -> Self {
        let n = grid.n_cells();
        Self {
            grid,
            values: vec![value; n],
        }
    }

    /// Samples `f(r)` at every cell center.
    pub fn from_fn(grid: Arc<RadialGrid>, f: impl Fn(f64) -> f64) -> Result<Self> {
        let values = grid.centers().iter().map(|&r| f(r)).collect();
        Self::new(grid, values)
    }

    pub fn grid(&self) -> &Arc<RadialGrid> {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Cellwise `f(a, b)` of two fields on the same grid.
    pub fn zip_with(&self, other: &RadialField, f: impl Fn(f64, f64) -> f64) -> Result<Self> {
        self.check_same_grid(other)?;
        let values = self
            .values
            .iter()
            .zip(&other.values)
            .map(|(&a, &b)| f(a, b))
            .collect();
        Self::new(self.grid.clone(), values)
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Result<Self> {
        Self::new(self.grid.clone(), self.values.iter().map(|&v| f(v)).collect())
    }

    pub fn max(&self) -> f64 {
        self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub(crate) fn check_same_grid(&self, other: &RadialField) -> Result<()> {
        if Arc::ptr_eq(&self.grid, &other.grid) || self.grid.same_as(&other.grid) {
            Ok(())
        } else {
            Err(Error::GridMismatch)
        }
    }
}

impl Index<usize> for RadialField {
    type Output = f64;

    fn index(&self, i: usize) -> &f64 {
        &self.values[i]
    }
}

/// Physical scenario: a sphere of radius `radius` with absorption opacity
/// `kappa` inside, `kappa_outside` beyond, constant scattering `kappa_s` and
/// equilibrium intensity `b`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProblemSpec {
    pub b: f64,
    pub radius: f64,
    pub kappa: f64,
    pub kappa_outside: f64,
    pub kappa_s: f64,
}

impl ProblemSpec {
    pub fn new(b: f64, radius: f64, kappa: f64, kappa_outside: f64, kappa_s: f64) -> Result<Self> {
        let spec = Self {
            b,
            radius,
            kappa,
            kappa_outside,
            kappa_s,
        };
        spec.validate()?;
        Ok(spec)
    }

    /// The pure homogeneous sphere: no opacity outside, no scattering.
    pub fn homogeneous_sphere(kappa: f64, radius: f64, b: f64) -> Result<Self> {
        Self::new(b, radius, kappa, 0.0, 0.0)
    }

    pub fn with_kappa_outside(mut self, eps: f64) -> Result<Self> {
        self.kappa_outside = eps;
        self.validate()?;
        Ok(self)
    }

    /// `B = 0` is accepted as the degenerate empty-radiation case.
    pub fn validate(&self) -> Result<()> {
        let bad = |what: &str, v: f64| {
            Err(Error::InvalidArgument(format!("{what} out of range: {v}")))
        };
        if !(self.kappa.is_finite() && self.kappa > 0.0) {
            return bad("kappa", self.kappa);
        }
        if !(self.kappa_outside.is_finite() && self.kappa_outside >= 0.0) {
            return bad("kappa_outside", self.kappa_outside);
        }
        if !(self.kappa_s.is_finite() && self.kappa_s >= 0.0) {
            return bad("kappa_s", self.kappa_s);
        }
        if !(self.b.is_finite() && self.b >= 0.0) {
            return bad("B", self.b);
        }
        if !(self.radius.is_finite() && self.radius > 0.0) {
            return bad("R", self.radius);
        }
        Ok(())
    }

    /// Absorption opacity `kappa 1{r<R} + kappa_outside 1{r>=R}`.
    pub fn kappa_a(&self, r: f64) -> f64 {
        if r < self.radius {
            self.kappa
        } else {
            self.kappa_outside
        }
    }

    /// Total opacity `kappa_a + kappa_s`.
    pub fn kappa_total(&self, r: f64) -> f64 {
        self.kappa_a(r) + self.kappa_s
    }

    pub fn kappa_r(&self) -> f64 {
        self.kappa * self.radius
    }
}

/// Shell-weighted relative L2 error
/// `sqrt(sum r^2 (a - e)^2 dr) / sqrt(sum r^2 e^2 dr)` over the whole grid.
pub fn l2_relative_error(approx: &RadialField, exact: &RadialField) -> Result<f64> {
    approx.check_same_grid(exact)?;
    let (num, den) = approx
        .grid
        .centers()
        .iter()
        .zip(approx.values.iter().zip(&exact.values))
        .fold((0.0, 0.0), |(num, den), (&r, (&a, &e))| {
            let w = r * r;
            (num + w * (a - e) * (a - e), den + w * e * e)
        });
    if den == 0.0 {
        return Err(Error::DegenerateNorm);
    }
    // dr cancels between numerator and denominator.
    Ok((num / den).sqrt())
}

/// Cellwise `|a - e| / |e|`.
pub fn pointwise_relative_error(approx: &RadialField, exact: &RadialField) -> Result<RadialField> {
    approx.check_same_grid(exact)?;
    let mut out = Vec::with_capacity(approx.len());
    for (i, (&a, &e)) in approx.values.iter().zip(&exact.values).enumerate() {
        if e == 0.0 {
            return Err(Error::DivisionByZero { index: i });
        }
        out.push((a - e).abs() / e.abs());
    }
    RadialField::new(approx.grid.clone(), out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid(r_max: f64, n: usize) -> Arc<RadialGrid> {
        Arc::new(RadialGrid::uniform(r_max, n).unwrap())
    }

    #[test]
    fn uniform_grid_centers() {
        let g = RadialGrid::uniform(12.0, 4).unwrap();
        assert_eq!(g.centers(), &[1.5, 4.5, 7.5, 10.5]);
        assert_eq!(g.edges()[0], 0.0);
        assert_eq!(g.edges()[4], 12.0);
    }

    #[test]
    fn fine_grid_spacing() {
        let g = RadialGrid::uniform(12.0, 10_000).unwrap();
        assert!((g.dr() - 1.2e-3).abs() < 1e-15);
        assert!((g.centers()[0] - 6e-4).abs() < 1e-15);
        assert!(g.edges().windows(2).all(|w| w[1] > w[0]));
        assert!(g.centers().iter().all(|&c| c > 0.0));
    }

    #[test]
    fn rejects_bad_grids() {
        assert!(matches!(
            RadialGrid::uniform(12.0, 1),
            Err(Error::InvalidArgument(_))
        ));
        assert!(RadialGrid::uniform(0.0, 10).is_err());
        assert!(RadialGrid::uniform(-1.0, 10).is_err());
        assert!(RadialGrid::uniform(f64::NAN, 10).is_err());
    }

    #[test]
    fn count_below_treats_center_at_radius_as_outside() {
        let g = RadialGrid::uniform(4.0, 4).unwrap();
        // centers 0.5 1.5 2.5 3.5
        assert_eq!(g.count_below(2.5), 2);
        assert_eq!(g.count_below(2.6), 3);
        assert_eq!(g.count_below(0.1), 0);
    }

    #[test]
    fn field_rejects_non_finite_and_wrong_length() {
        let g = grid(1.0, 3);
        assert!(RadialField::new(g.clone(), vec![1.0, f64::NAN, 0.0]).is_err());
        assert!(RadialField::new(g, vec![1.0, 2.0]).is_err());
    }

    #[test]
    fn l2_identity_and_constant_offset() {
        let g = grid(5.0, 50);
        let e = RadialField::constant(g.clone(), 1.0);
        assert_eq!(l2_relative_error(&e, &e).unwrap(), 0.0);
        let a = RadialField::constant(g, 1.1);
        assert!((l2_relative_error(&a, &e).unwrap() - 0.1).abs() < 1e-14);
    }

    #[test]
    fn l2_degenerate_and_mismatch() {
        let g = grid(5.0, 10);
        let z = RadialField::zeros(g.clone());
        assert_eq!(l2_relative_error(&z, &z), Err(Error::DegenerateNorm));
        let other = RadialField::zeros(grid(5.0, 11));
        assert_eq!(l2_relative_error(&z, &other), Err(Error::GridMismatch));
    }

    #[test]
    fn pointwise_error_cases() {
        let g = grid(2.0, 4);
        let e = RadialField::from_fn(g.clone(), |r| 1.0 + r).unwrap();
        let same = pointwise_relative_error(&e, &e).unwrap();
        assert!(same.values().iter().all(|&v| v == 0.0));
        let twice = e.map(|v| 2.0 * v).unwrap();
        let ones = pointwise_relative_error(&twice, &e).unwrap();
        assert!(ones.values().iter().all(|&v| v == 1.0));
        let mut vals = e.values().to_vec();
        vals[2] = 0.0;
        let with_zero = RadialField::new(g, vals).unwrap();
        assert_eq!(
            pointwise_relative_error(&e, &with_zero).unwrap_err(),
            Error::DivisionByZero { index: 2 }
        );
    }

    #[test]
    fn step_opacity_profile() {
        let spec = ProblemSpec::new(1.0, 6.0, 1.0, 1e-3, 0.0).unwrap();
        assert_eq!(spec.kappa_a(5.999), 1.0);
        assert_eq!(spec.kappa_a(6.0), 1e-3);
        assert_eq!(spec.kappa_total(7.0), 1e-3);
        assert!(ProblemSpec::homogeneous_sphere(-1.0, 6.0, 1.0).is_err());
        assert!(ProblemSpec::homogeneous_sphere(1.0, 0.0, 1.0).is_err());
        assert!(ProblemSpec::new(1.0, 6.0, 1.0, -1.0, 0.0).is_err());
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn l2_error_is_homogeneous(
                scale in -50.0f64..50.0,
                amp in 0.1f64..3.0,
                phase in 0.0f64..6.0,
            ) {
                let g = grid(10.0, 64);
                let exact = RadialField::from_fn(g.clone(), |r| 1.0 + amp * (r + phase).sin().abs()).unwrap();
                let diff = RadialField::from_fn(g.clone(), |r| (0.3 * r + phase).cos()).unwrap();
                let a1 = exact.zip_with(&diff, |e, d| e + d).unwrap();
                let ac = exact.zip_with(&diff, |e, d| e + scale * d).unwrap();
                let e1 = l2_relative_error(&a1, &exact).unwrap();
                let ec = l2_relative_error(&ac, &exact).unwrap();
                prop_assert!((ec - scale.abs() * e1).abs() <= 1e-12 * (1.0 + ec));
            }
        }
    }
}
