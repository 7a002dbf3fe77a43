//! Concrete smooth functionals on ℝᵏ.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;

use crate::malliavin::SmoothFunctional;

/// `F(x) = x_axis`.
#[derive(Debug, Clone)]
pub struct Coordinate {
    dim: usize,
    axis: usize,
}

impl Coordinate {
    pub fn new(dim: usize, axis: usize) -> Self {
        assert!(axis < dim, "axis {axis} out of range for dimension {dim}");
        Self { dim, axis }
    }
}

impl SmoothFunctional for Coordinate {
    fn dim(&self) -> usize {
        self.dim
    }
    fn value(&self, x: &[f64]) -> f64 {
        x[self.axis]
    }
    fn grad(&self, _x: &[f64]) -> DVector<f64> {
        let mut g = DVector::zeros(self.dim);
        g[self.axis] = 1.0;
        g
    }
    fn hess(&self, _x: &[f64]) -> DMatrix<f64> {
        DMatrix::zeros(self.dim, self.dim)
    }
}

/// `F(x) = x_axis² / 2`; `{F ≥ a²/2}` is the two-sided slab complement.
#[derive(Debug, Clone)]
pub struct HalfCoordinateSq {
    dim: usize,
    axis: usize,
}

impl HalfCoordinateSq {
    pub fn new(dim: usize, axis: usize) -> Self {
        assert!(axis < dim, "axis {axis} out of range for dimension {dim}");
        Self { dim, axis }
    }
}

impl SmoothFunctional for HalfCoordinateSq {
    fn dim(&self) -> usize {
        self.dim
    }
    fn value(&self, x: &[f64]) -> f64 {
        0.5 * x[self.axis] * x[self.axis]
    }
    fn grad(&self, x: &[f64]) -> DVector<f64> {
        let mut g = DVector::zeros(self.dim);
        g[self.axis] = x[self.axis];
        g
    }
    fn hess(&self, _x: &[f64]) -> DMatrix<f64> {
        let mut h = DMatrix::zeros(self.dim, self.dim);
        h[(self.axis, self.axis)] = 1.0;
        h
    }
}

/// `F(x) = ‖x‖`.
#[derive(Debug, Clone)]
pub struct Norm {
    dim: usize,
}

impl Norm {
    pub fn new(dim: usize) -> Self {
        Self { dim }
    }
}

impl SmoothFunctional for Norm {
    fn dim(&self) -> usize {
        self.dim
    }
    fn value(&self, x: &[f64]) -> f64 {
        x.iter().map(|v| v * v).sum::<f64>().sqrt()
    }
    fn grad(&self, x: &[f64]) -> DVector<f64> {
        let r = self.value(x);
        if r == 0.0 {
            return DVector::zeros(self.dim);
        }
        DVector::from_column_slice(x) / r
    }
    fn hess(&self, x: &[f64]) -> DMatrix<f64> {
        let r = self.value(x);
        if r == 0.0 {
            return DMatrix::zeros(self.dim, self.dim);
        }
        let u = DVector::from_column_slice(x) / r;
        (DMatrix::identity(self.dim, self.dim) - &u * u.transpose()) / r
    }
}

/// `F(x) = ‖x‖² / 2`.
#[derive(Debug, Clone)]
pub struct HalfNormSq {
    dim: usize,
}

impl HalfNormSq {
    pub fn new(dim: usize) -> Self {
        Self { dim }
    }
}

impl SmoothFunctional for HalfNormSq {
    fn dim(&self) -> usize {
        self.dim
    }
    fn value(&self, x: &[f64]) -> f64 {
        0.5 * x.iter().map(|v| v * v).sum::<f64>()
    }
    fn grad(&self, x: &[f64]) -> DVector<f64> {
        DVector::from_column_slice(x)
    }
    fn hess(&self, _x: &[f64]) -> DMatrix<f64> {
        DMatrix::identity(self.dim, self.dim)
    }
}

/// `F(x) = ½ xᵀAx + bᵀx` with symmetric `A`.
#[derive(Debug, Clone)]
pub struct Quadratic {
    a: DMatrix<f64>,
    b: DVector<f64>,
}

impl Quadratic {
    pub fn new(a: DMatrix<f64>, b: DVector<f64>) -> Self {
        assert_eq!(a.nrows(), b.len());
        let a = (&a + a.transpose()) * 0.5;
        Self { a, b }
    }

    /// Random positive-definite quadratic (convex sub-level sets).
    pub fn random<R: Rng + ?Sized>(dim: usize, rng: &mut R) -> Self {
        let m = DMatrix::from_fn(dim, dim, |_, _| rng.sample::<f64, _>(StandardNormal));
        let a = m.transpose() * &m / dim as f64 + DMatrix::identity(dim, dim) * 0.1;
        let b = DVector::from_fn(dim, |_, _| 0.3 * rng.sample::<f64, _>(StandardNormal));
        Self::new(a, b)
    }
}

impl SmoothFunctional for Quadratic {
    fn dim(&self) -> usize {
        self.b.len()
    }
    fn value(&self, x: &[f64]) -> f64 {
        let x = DVector::from_column_slice(x);
        0.5 * x.dot(&(&self.a * &x)) + self.b.dot(&x)
    }
    fn grad(&self, x: &[f64]) -> DVector<f64> {
        &self.a * DVector::from_column_slice(x) + &self.b
    }
    fn hess(&self, _x: &[f64]) -> DMatrix<f64> {
        self.a.clone()
    }
}

/// `−F`; turns an excursion set of `F` into a sub-level set.
#[derive(Debug, Clone)]
pub struct Negated<F>(pub F);

impl<F: SmoothFunctional> SmoothFunctional for Negated<F> {
    fn dim(&self) -> usize {
        self.0.dim()
    }
    fn value(&self, x: &[f64]) -> f64 {
        -self.0.value(x)
    }
    fn grad(&self, x: &[f64]) -> DVector<f64> {
        -self.0.grad(x)
    }
    fn hess(&self, x: &[f64]) -> DMatrix<f64> {
        -self.0.hess(x)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::malliavin::check_derivatives;
    use crate::rng;

    #[test]
    fn derivatives_match_finite_differences() {
        let mut r = rng::stream(2);
        let fs: Vec<Box<dyn SmoothFunctional>> = vec![
            Box::new(Coordinate::new(4, 2)),
            Box::new(HalfCoordinateSq::new(3, 0)),
            Box::new(Norm::new(5)),
            Box::new(HalfNormSq::new(4)),
            Box::new(Quadratic::random(6, &mut r)),
            Box::new(Negated(Norm::new(3))),
        ];
        for f in &fs {
            let c = check_derivatives(f.as_ref(), 50, 1.0, 7);
            assert!(c.grad_rel_err < 1e-5, "{c:?}");
            assert!(c.hess_rel_err < 1e-5, "{c:?}");
            assert!(c.hess_asymmetry < 1e-10);
        }
    }
}
