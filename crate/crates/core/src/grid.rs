//! Uniform mesh on the unit interval, difference operators and discrete norms.
//!
//! Grid functions always carry all `N + 2` nodes, boundary included, so that
//! the discrete sums run over `l = 0..=N+1` literally. The forward difference
//! stores `0` at node `N+1` and the backward difference stores `0` at node `0`;
//! nothing downstream reads those entries as data.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GridError {
    #[error("grid mismatch: N = {left} vs N = {right}")]
    Mismatch { left: usize, right: usize },
    #[error("grids are not nested: N_fine + 1 = {fine} is not a multiple of N_coarse + 1 = {coarse}")]
    NotNested { fine: usize, coarse: usize },
    #[error("expected {expected} values for the grid, got {got}")]
    Length { expected: usize, got: usize },
    #[error("non-finite value at node {node}")]
    NonFinite { node: usize },
    #[error("grid with N = {n} is too small for difference order {order}")]
    TooSmall { n: usize, order: usize },
    #[error("a grid needs at least one interior node")]
    Empty,
}

/// Uniform partition `0 = x_0 < x_1 < ... < x_{N+1} = 1` with `h = 1/(N+1)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct UniformGrid {
    n_interior: usize,
}

impl UniformGrid {
    pub fn new(n_interior: usize) -> Result<Self, GridError> {
        if n_interior == 0 {
            return Err(GridError::Empty);
        }
        Ok(Self { n_interior })
    }

    pub fn n_interior(&self) -> usize {
        self.n_interior
    }

    /// Total node count `N + 2`.
    pub fn len(&self) -> usize {
        self.n_interior + 2
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn step(&self) -> f64 {
        1.0 / self.intervals() as f64
    }

    /// Number of cells, `N + 1`.
    pub fn intervals(&self) -> usize {
        self.n_interior + 1
    }

    /// Node coordinate `x_l = l / (N + 1)`.
    ///
    /// Computed as a single correctly rounded quotient of integers, so a node
    /// shared by two nested grids has bit-identical coordinates on both.
    pub fn node(&self, l: usize) -> f64 {
        l as f64 / self.intervals() as f64
    }

    pub fn nodes(&self) -> Vec<f64> {
        (0..self.len()).map(|l| self.node(l)).collect()
    }

    /// Ratio `(N_fine + 1) / (N_coarse + 1)` when `self` refines `coarse`.
    pub fn refinement_of(&self, coarse: &UniformGrid) -> Result<usize, GridError> {
        let (fine, c) = (self.intervals(), coarse.intervals());
        if fine % c != 0 {
            return Err(GridError::NotNested { fine, coarse: c });
        }
        Ok(fine / c)
    }
}

/// Complex values on the `N + 2` nodes of a [`UniformGrid`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridFunction {
    grid: UniformGrid,
    values: Vec<Complex64>,
}

impl GridFunction {
    pub fn new(grid: UniformGrid, values: Vec<Complex64>) -> Result<Self, GridError> {
        if values.len() != grid.len() {
            return Err(GridError::Length {
                expected: grid.len(),
                got: values.len(),
            });
        }
        if let Some(node) = values.iter().position(|z| !(z.re.is_finite() && z.im.is_finite())) {
            return Err(GridError::NonFinite { node });
        }
        Ok(Self { grid, values })
    }

    pub fn zeros(grid: UniformGrid) -> Self {
        Self {
            grid,
            values: vec![Complex64::new(0.0, 0.0); grid.len()],
        }
    }

    /// Samples `f` at every node, boundary included.
    pub fn from_fn(grid: UniformGrid, f: impl Fn(f64) -> Complex64) -> Self {
        let values = (0..grid.len()).map(|l| f(grid.node(l))).collect();
        Self { grid, values }
    }

    /// Samples `f` at interior nodes and pins both boundary values to zero.
    pub fn dirichlet_from_fn(grid: UniformGrid, f: impl Fn(f64) -> Complex64) -> Self {
        let mut g = Self::from_fn(grid, f);
        g.zero_boundary();
        g
    }

    pub fn from_real(grid: UniformGrid, values: &[f64]) -> Result<Self, GridError> {
        Self::new(grid, values.iter().map(|&v| Complex64::new(v, 0.0)).collect())
    }

    pub fn grid(&self) -> &UniformGrid {
        &self.grid
    }

    pub fn values(&self) -> &[Complex64] {
        &self.values
    }

    /// Mutable access for in-place updates. Callers are responsible for
    /// keeping values finite; see [`GridFunction::is_finite`].
    pub fn values_mut(&mut self) -> &mut [Complex64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<Complex64> {
        self.values
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|z| z.re.is_finite() && z.im.is_finite())
    }

    pub fn is_dirichlet(&self) -> bool {
        let zero = Complex64::new(0.0, 0.0);
        self.values[0] == zero && self.values[self.grid.n_interior + 1] == zero
    }

    pub fn zero_boundary(&mut self) {
        let last = self.values.len() - 1;
        self.values[0] = Complex64::new(0.0, 0.0);
        self.values[last] = Complex64::new(0.0, 0.0);
    }

    pub fn map(&self, f: impl Fn(Complex64) -> Complex64) -> Self {
        Self {
            grid: self.grid,
            values: self.values.iter().map(|&z| f(z)).collect(),
        }
    }

    pub fn scale(&self, factor: Complex64) -> Self {
        self.map(|z| z * factor)
    }

    /// Global phase rotation `u ↦ e^{iθ} u`.
    pub fn rotate(&self, theta: f64) -> Self {
        self.scale(Complex64::from_polar(1.0, theta))
    }

    pub fn add(&self, other: &GridFunction) -> Result<Self, GridError> {
        self.zip_with(other, |a, b| a + b)
    }

    pub fn sub(&self, other: &GridFunction) -> Result<Self, GridError> {
        self.zip_with(other, |a, b| a - b)
    }

    pub fn zip_with(
        &self,
        other: &GridFunction,
        f: impl Fn(Complex64, Complex64) -> Complex64,
    ) -> Result<Self, GridError> {
        self.same_grid(other)?;
        Ok(Self {
            grid: self.grid,
            values: self.values.iter().zip(&other.values).map(|(&a, &b)| f(a, b)).collect(),
        })
    }

    fn same_grid(&self, other: &GridFunction) -> Result<(), GridError> {
        if self.grid != other.grid {
            return Err(GridError::Mismatch {
                left: self.grid.n_interior,
                right: other.grid.n_interior,
            });
        }
        Ok(())
    }

    /// `δ₊f(l) = (f(l+1) − f(l)) / h` for `l = 0..=N`; node `N+1` holds 0.
    pub fn forward_diff(&self) -> Self {
        let inv_h = self.grid.intervals() as f64;
        let mut out = vec![Complex64::new(0.0, 0.0); self.values.len()];
        for (o, w) in out.iter_mut().zip(self.values.windows(2)) {
            *o = (w[1] - w[0]) * inv_h;
        }
        Self {
            grid: self.grid,
            values: out,
        }
    }

    /// `δ₋f(l) = (f(l) − f(l−1)) / h` for `l = 1..=N+1`; node `0` holds 0.
    pub fn backward_diff(&self) -> Self {
        let inv_h = self.grid.intervals() as f64;
        let mut out = vec![Complex64::new(0.0, 0.0); self.values.len()];
        for (o, w) in out[1..].iter_mut().zip(self.values.windows(2)) {
            *o = (w[1] - w[0]) * inv_h;
        }
        Self {
            grid: self.grid,
            values: out,
        }
    }

    /// `δ₊δ₋f` at interior nodes, zero on the boundary.
    pub fn laplacian(&self) -> Self {
        let inv_h2 = (self.grid.intervals() as f64).powi(2);
        let mut out = vec![Complex64::new(0.0, 0.0); self.values.len()];
        for (o, w) in out[1..].iter_mut().zip(self.values.windows(3)) {
            *o = (w[2] - w[1] * 2.0 + w[0]) * inv_h2;
        }
        Self {
            grid: self.grid,
            values: out,
        }
    }

    /// `⟨f, g⟩_h = h Σ_{l=0}^{N+1} Re[conj(f(l)) g(l)]`.
    pub fn inner_h(&self, other: &GridFunction) -> Result<f64, GridError> {
        self.same_grid(other)?;
        let sum: f64 = self
            .values
            .iter()
            .zip(&other.values)
            .map(|(f, g)| f.re * g.re + f.im * g.im)
            .sum();
        Ok(sum * self.grid.step())
    }

    pub fn norm_h_sqr(&self) -> f64 {
        self.values.iter().map(|z| z.norm_sqr()).sum::<f64>() * self.grid.step()
    }

    pub fn norm_h(&self) -> f64 {
        self.norm_h_sqr().sqrt()
    }

    pub fn norm_l4h(&self) -> f64 {
        let s: f64 = self.values.iter().map(|z| z.norm_sqr().powi(2)).sum();
        (s * self.grid.step()).powf(0.25)
    }

    pub fn norm_linf(&self) -> f64 {
        self.values.iter().map(|z| z.norm()).fold(0.0, f64::max)
    }

    /// Injection onto a nested coarse grid: coarse node `l` takes the fine
    /// value at node `l · (N_fine+1)/(N_coarse+1)`.
    pub fn restrict(&self, coarse: &UniformGrid) -> Result<Self, GridError> {
        let ratio = self.grid.refinement_of(coarse)?;
        Ok(Self {
            grid: *coarse,
            values: self.values.iter().step_by(ratio).copied().collect(),
        })
    }

    /// `‖restrict(self) − coarse‖_h` without materializing the restriction.
    pub fn restricted_distance_h(&self, coarse: &GridFunction) -> Result<f64, GridError> {
        let ratio = self.grid.refinement_of(&coarse.grid)?;
        let s: f64 = self
            .values
            .iter()
            .step_by(ratio)
            .zip(&coarse.values)
            .map(|(&f, &c)| (f - c).norm_sqr())
            .sum();
        Ok((s * coarse.grid.step()).sqrt())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn c(re: f64) -> Complex64 {
        Complex64::new(re, 0.0)
    }

    fn grid(n: usize) -> UniformGrid {
        UniformGrid::new(n).unwrap()
    }

    fn spike() -> GridFunction {
        GridFunction::from_real(grid(1), &[0.0, 1.0, 0.0]).unwrap()
    }

    #[test]
    fn grid_nodes_cover_unit_interval() {
        for n in [1, 3, 7, 63, 100, 511] {
            let g = grid(n);
            assert_eq!(g.step() * g.intervals() as f64, 1.0);
            let x = g.nodes();
            assert_eq!(x[0], 0.0);
            assert_eq!(x[n + 1], 1.0);
            assert!(x.windows(2).all(|w| w[0] < w[1]));
        }
        assert_eq!(UniformGrid::new(0), Err(GridError::Empty));
    }

    #[test]
    fn shared_nodes_are_bit_identical() {
        let (fine, coarse) = (grid(511), grid(63));
        for l in 0..coarse.len() {
            assert_eq!(fine.node(8 * l).to_bits(), coarse.node(l).to_bits());
        }
    }

    #[test]
    fn constructor_rejects_bad_values() {
        let g = grid(2);
        assert!(matches!(
            GridFunction::from_real(g, &[0.0, 1.0]),
            Err(GridError::Length { expected: 4, got: 2 })
        ));
        assert!(matches!(
            GridFunction::from_real(g, &[0.0, f64::NAN, 0.0, 0.0]),
            Err(GridError::NonFinite { node: 1 })
        ));
    }

    #[test]
    fn forward_diff_examples() {
        assert!(GridFunction::zeros(grid(5)).forward_diff().values().iter().all(|z| *z == c(0.0)));

        let g = grid(3);
        let lin = GridFunction::from_fn(g, c);
        let d = lin.forward_diff();
        for l in 0..=3 {
            assert_eq!(d.values()[l], c(1.0));
        }

        let d = spike().forward_diff();
        assert_eq!(d.values()[0], c(2.0));
        assert_eq!(d.values()[1], c(-2.0));
        assert_eq!(d.values()[2], c(0.0));
    }

    #[test]
    fn backward_diff_examples() {
        assert!(GridFunction::zeros(grid(5)).backward_diff().values().iter().all(|z| *z == c(0.0)));

        let g = grid(3);
        let d = GridFunction::from_fn(g, c).backward_diff();
        assert_eq!(d.values()[0], c(0.0));
        for l in 1..=4 {
            assert_eq!(d.values()[l], c(1.0));
        }

        // δ₋δ₊ of x² is exactly 2 in the interior on a dyadic grid.
        let q = GridFunction::from_fn(g, |x| c(x * x));
        let dd = q.forward_diff().backward_diff();
        for l in 1..=3 {
            assert_eq!(dd.values()[l], c(2.0));
        }
    }

    #[test]
    fn laplacian_examples() {
        assert!(GridFunction::zeros(grid(4)).laplacian().values().iter().all(|z| *z == c(0.0)));

        // x² with the right boundary forced to 0: exact 2 away from that boundary.
        let g = grid(7);
        let mut q = GridFunction::from_fn(g, |x| c(x * x));
        q.zero_boundary();
        let lap = q.laplacian();
        for l in 1..=6 {
            assert_eq!(lap.values()[l], c(2.0));
        }
        assert_eq!(lap.values()[0], c(0.0));
        assert_eq!(lap.values()[8], c(0.0));

        // sin(πx): eigenfunction with eigenvalue (2cos(πh) − 2)/h².
        let g = grid(31);
        let h = g.step();
        let s = GridFunction::from_fn(g, |x| c((std::f64::consts::PI * x).sin()));
        let eig = (2.0 * (std::f64::consts::PI * h).cos() - 2.0) / (h * h);
        let lap = s.laplacian();
        for l in 1..=31 {
            assert_relative_eq!(lap.values()[l].re, eig * s.values()[l].re, max_relative = 1e-10);
        }
    }

    #[test]
    fn laplacian_exact_on_cubics() {
        let g = grid(15);
        let f = GridFunction::from_fn(g, |x| c(2.0 * x * x * x - x * x + 0.5 * x + 0.25));
        let lap = f.laplacian();
        for l in 1..=15 {
            let x = g.node(l);
            assert_relative_eq!(lap.values()[l].re, 12.0 * x - 2.0, epsilon = 1e-9);
        }
    }

    #[test]
    fn inner_and_norm_examples() {
        let g = grid(3);
        let one = GridFunction::dirichlet_from_fn(g, |_| c(1.0));
        let zero = GridFunction::zeros(g);
        assert_eq!(zero.inner_h(&one).unwrap(), 0.0);
        assert_eq!(one.inner_h(&one).unwrap(), 0.75);
        assert_relative_eq!(one.norm_h(), 0.75f64.sqrt());

        let f = GridFunction::from_fn(g, |x| Complex64::new(x.sin(), 1.0 - x));
        let jf = f.scale(Complex64::i());
        assert!(f.inner_h(&jf).unwrap().abs() < 1e-16);

        let s = spike();
        assert_relative_eq!(s.norm_h(), 0.5f64.sqrt());
        assert_relative_eq!(s.norm_l4h(), 0.5f64.powf(0.25));
        assert_eq!(s.norm_linf(), 1.0);

        assert_eq!(zero.norm_h(), 0.0);
        assert_eq!(zero.norm_l4h(), 0.0);
        assert_eq!(zero.norm_linf(), 0.0);

        assert!(matches!(
            one.inner_h(&GridFunction::zeros(grid(4))),
            Err(GridError::Mismatch { left: 3, right: 4 })
        ));
    }

    #[test]
    fn restriction_examples() {
        let g = grid(7);
        let f = GridFunction::from_fn(g, |x| Complex64::new(x, x * x));
        assert_eq!(f.restrict(&g).unwrap(), f);

        let coarse = grid(3);
        let r = f.restrict(&coarse).unwrap();
        for l in 0..coarse.len() {
            assert_eq!(r.values()[l], f.values()[2 * l]);
        }
        assert_eq!(GridFunction::zeros(g).restrict(&coarse).unwrap(), GridFunction::zeros(coarse));
        assert!(matches!(f.restrict(&grid(4)), Err(GridError::NotNested { fine: 8, coarse: 5 })));
    }

    #[test]
    fn restricted_distance_matches_restrict_then_norm() {
        let fine = GridFunction::from_fn(grid(31), |x| Complex64::new((3.0 * x).sin(), x));
        let coarse = GridFunction::from_fn(grid(7), |x| Complex64::new(x, 0.5));
        let direct = fine.restrict(coarse.grid()).unwrap().sub(&coarse).unwrap().norm_h();
        assert_relative_eq!(fine.restricted_distance_h(&coarse).unwrap(), direct, max_relative = 1e-15);
    }

    #[test]
    fn gn_worked_instance() {
        let s = spike();
        let lhs = s.norm_linf().powi(2);
        let rhs = 2.0 * s.norm_h() * s.forward_diff().norm_h();
        assert_eq!(lhs, 1.0);
        assert_relative_eq!(rhs, 2.0 * 2f64.sqrt(), max_relative = 1e-15);
    }

    fn dirichlet_strategy() -> impl Strategy<Value = GridFunction> {
        (1usize..40).prop_flat_map(|n| {
            proptest::collection::vec((-3.0f64..3.0, -3.0f64..3.0), n)
                .prop_map(move |v| dirichlet_values(n, v))
        })
    }

    fn dirichlet_values(n: usize, v: Vec<(f64, f64)>) -> GridFunction {
        let mut vals = vec![Complex64::new(0.0, 0.0)];
        vals.extend(v.into_iter().map(|(a, b)| Complex64::new(a, b)));
        vals.push(Complex64::new(0.0, 0.0));
        GridFunction::new(UniformGrid::new(n).unwrap(), vals).unwrap()
    }

    fn pair_strategy() -> impl Strategy<Value = (GridFunction, GridFunction)> {
        (1usize..30).prop_flat_map(|n| {
            let side = proptest::collection::vec((-2.0f64..2.0, -2.0f64..2.0), n);
            (side.clone(), side)
                .prop_map(move |(a, b)| (dirichlet_values(n, a), dirichlet_values(n, b)))
        })
    }

    proptest! {
        #[test]
        fn laplacian_is_symmetric((f, g) in pair_strategy()) {
            let lhs = f.laplacian().inner_h(&g).unwrap();
            let rhs = f.inner_h(&g.laplacian()).unwrap();
            let scale = f.laplacian().norm_h() * g.norm_h() + 1.0;
            prop_assert!((lhs - rhs).abs() <= 1e-12 * scale);
        }

        #[test]
        fn summation_by_parts((f, g) in pair_strategy()) {
            let lhs = f.laplacian().inner_h(&g).unwrap();
            let rhs = -f.forward_diff().inner_h(&g.forward_diff()).unwrap();
            let scale = f.forward_diff().norm_h() * g.forward_diff().norm_h() + 1.0;
            prop_assert!((lhs - rhs).abs() <= 1e-12 * scale);
        }

        #[test]
        fn skewness(f in dirichlet_strategy()) {
            let lap = f.laplacian().scale(Complex64::i());
            let cubic = f.map(|z| z * z.norm_sqr() * Complex64::i());
            let scale = f.norm_h() * (f.laplacian().norm_h() + cubic.norm_h()) + 1.0;
            prop_assert!(f.inner_h(&lap).unwrap().abs() <= 1e-13 * scale);
            prop_assert!(f.inner_h(&cubic).unwrap().abs() <= 1e-13 * scale);
        }

        #[test]
        fn discrete_gagliardo_nirenberg(f in dirichlet_strategy()) {
            let lhs = f.norm_linf().powi(2);
            let rhs = 2.0 * f.norm_h() * f.forward_diff().norm_h();
            prop_assert!(rhs - lhs >= -1e-12);
        }

        #[test]
        fn norm_ordering(f in dirichlet_strategy()) {
            let (h, l4, inf) = (f.norm_h(), f.norm_l4h(), f.norm_linf());
            prop_assert!(h <= inf * (1.0 + 1e-14));
            prop_assert!(l4 <= (inf * h).sqrt() * (1.0 + 1e-14));
        }
    }
}
