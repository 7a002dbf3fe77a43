//! Finite-dimensional Gaussian calculus on (ℝᵏ, γ_k).
//!
//! The divergence here is the adjoint of the gradient under the canonical
//! Gaussian measure, `δ(V)(x) = ⟨V(x), x⟩ − div V(x)`. Carleman–Fredholm
//! determinants are handled two ways: exactly as `det(I+ρA)·exp(−ρ tr A)`
//! for point evaluation, and as a power series in ρ through trace powers
//! for coefficient extraction.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng;
use crate::series::TruncSeries;

/// Gradient norms below this are treated as degenerate points.
pub const DEFAULT_GRAD_FLOOR: f64 = 1e-10;

/// A scalar functional on ℝᵏ with gradient and Hessian oracles.
///
/// Implementations must be stateless: Monte Carlo loops evaluate them from
/// several threads at once.
pub trait SmoothFunctional: Send + Sync {
    fn dim(&self) -> usize;
    fn value(&self, x: &[f64]) -> f64;
    fn grad(&self, x: &[f64]) -> DVector<f64>;
    fn hess(&self, x: &[f64]) -> DMatrix<f64>;
}

impl<F: SmoothFunctional + ?Sized> SmoothFunctional for Arc<F> {
    fn dim(&self) -> usize {
        (**self).dim()
    }
    fn value(&self, x: &[f64]) -> f64 {
        (**self).value(x)
    }
    fn grad(&self, x: &[f64]) -> DVector<f64> {
        (**self).grad(x)
    }
    fn hess(&self, x: &[f64]) -> DMatrix<f64> {
        (**self).hess(x)
    }
}

/// A vector field on ℝᵏ with its Jacobian `J_ij = ∂V_i/∂x_j`.
pub trait VectorField: Send + Sync {
    fn dim(&self) -> usize;
    fn value(&self, x: &[f64]) -> DVector<f64>;
    fn jacobian(&self, x: &[f64]) -> DMatrix<f64>;
}

/// Which side of a level set a region lies on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RegionKind {
    /// `{F ≤ u}`, outward normal `+∇F/‖∇F‖`.
    SubLevel,
    /// `{F ≥ u}`, outward normal `−∇F/‖∇F‖`.
    Excursion,
}

impl RegionKind {
    pub fn sign(self) -> f64 {
        match self {
            RegionKind::SubLevel => 1.0,
            RegionKind::Excursion => -1.0,
        }
    }

    pub fn contains(self, value: f64, level: f64) -> bool {
        match self {
            RegionKind::SubLevel => value <= level,
            RegionKind::Excursion => value >= level,
        }
    }

    pub fn complement(self) -> Self {
        match self {
            RegionKind::SubLevel => RegionKind::Excursion,
            RegionKind::Excursion => RegionKind::SubLevel,
        }
    }
}

/// `δ(V)(x) = Σ V_i(x) x_i − Σ ∂V_i/∂x_i(x)`.
pub fn divergence(field: &dyn VectorField, x: &[f64]) -> f64 {
    let v = field.value(x);
    let jac = field.jacobian(x);
    v.iter().zip(x).map(|(a, b)| a * b).sum::<f64>() - jac.trace()
}

/// Outward unit normal of a level set and its exact derivative.
#[derive(Debug, Clone)]
pub struct UnitNormal {
    pub eta: DVector<f64>,
    pub jacobian: DMatrix<f64>,
    pub grad_norm: f64,
}

fn normal_from_parts(grad: &DVector<f64>, hess: &DMatrix<f64>, sign: f64, floor: f64) -> Result<UnitNormal> {
    let g = grad.norm();
    if !(g >= floor) {
        return Err(Error::DegeneratePoint { grad_norm: g, floor });
    }
    let nu = grad / g;
    // s/g · (I − ννᵀ) H
    let nu_t_h = nu.transpose() * hess;
    let mut jac = hess - &nu * nu_t_h;
    jac *= sign / g;
    Ok(UnitNormal {
        eta: nu * sign,
        jacobian: jac,
        grad_norm: g,
    })
}

/// `η = s·∇F/‖∇F‖` at `x` together with `∇η`.
pub fn unit_normal(functional: &dyn SmoothFunctional, kind: RegionKind, x: &[f64], floor: f64) -> Result<UnitNormal> {
    let grad = functional.grad(x);
    let hess = functional.hess(x);
    normal_from_parts(&grad, &hess, kind.sign(), floor)
}

/// `tr(A^m)` for `m = 0..=max_power`.
///
/// Only `A^1..A^⌈max/2⌉` are formed; the rest come from `tr(XY) = Σ X_ij Y_ji`.
pub fn trace_powers(a: &DMatrix<f64>, max_power: usize) -> Vec<f64> {
    let k = a.nrows();
    let mut out = vec![k as f64];
    if max_power == 0 {
        return out;
    }
    out.push(a.trace());
    let half = max_power.div_ceil(2);
    let mut powers: Vec<DMatrix<f64>> = Vec::with_capacity(half);
    powers.push(a.clone());
    while powers.len() < half {
        let next = powers.last().unwrap() * a;
        powers.push(next);
    }
    for m in 2..=max_power {
        let p = m / 2;
        let q = m - p;
        out.push(trace_of_product(&powers[p - 1], &powers[q - 1]));
    }
    out
}

fn trace_of_product(x: &DMatrix<f64>, y: &DMatrix<f64>) -> f64 {
    // Σ_ij X_ij Y_ji; column-major storage makes x^T·y columns contiguous
    x.transpose().component_mul(y).sum()
}

/// Exponent series `Σ_{m=2..J} (−1)^{m+1} tr(A^m) ρ^m / m` of `det₂(I+ρA)`.
fn log_det2_coeffs(traces: &[f64], order: usize) -> Vec<f64> {
    let mut c = vec![0.0; order + 1];
    for m in 2..=order {
        let sign = if m % 2 == 0 { -1.0 } else { 1.0 };
        c[m] = sign * traces[m] / m as f64;
    }
    c
}

/// Power series of `ρ ↦ det₂(I+ρA) = Π (1+ρλ_i) e^{−ρλ_i}`.
pub fn det2_series(a: &DMatrix<f64>, order: usize) -> TruncSeries {
    let traces = trace_powers(a, order);
    TruncSeries::new(log_det2_coeffs(&traces, order))
        .and_then(|s| s.exp())
        .expect("log det2 has zero constant term")
}

/// `det₂(I+ρA) = det(I+ρA)·exp(−ρ tr A)`, evaluated exactly.
pub fn det2_exact(a: &DMatrix<f64>, rho: f64) -> f64 {
    let k = a.nrows();
    let m = DMatrix::identity(k, k) + a * rho;
    m.determinant() * (-rho * a.trace()).exp()
}

/// Ramer density `Y^η_ρ(x) = det₂(I+ρ∇η)·exp(−ρδ(η) − ρ²‖η‖²/2)`.
///
/// This is the Jacobian-weighted density ratio of the map `x ↦ x + ρη(x)`,
/// so `E[g(x + ρη(x))·Y(x)] = E[g(x)]` whenever the map is injective. The
/// determinant is not taken in absolute value; a non-positive factor means
/// `ρ` is outside the validity radius and is reported as an error.
pub fn ramer_density(eta: &dyn VectorField, rho: f64, x: &[f64]) -> Result<f64> {
    let e = eta.value(x);
    let jac = eta.jacobian(x);
    let d2 = det2_exact(&jac, rho);
    if !(d2 > 0.0) {
        return Err(Error::NonPositiveDet2 { value: d2 });
    }
    let delta = e.iter().zip(x).map(|(a, b)| a * b).sum::<f64>() - jac.trace();
    Ok(d2 * (-rho * delta - 0.5 * rho * rho * e.norm_squared()).exp())
}

/// Series of `ρ ↦ det₂(I+ρ∇η)·exp(−ρδ(η) − ρ²/2)` from a unit normal.
pub fn normal_series(normal: &UnitNormal, x: &[f64], order: usize) -> TruncSeries {
    let mut a = vec![0.0; order + 1];
    if order >= 1 {
        let traces = trace_powers(&normal.jacobian, order);
        let delta = normal.eta.iter().zip(x).map(|(e, xi)| e * xi).sum::<f64>() - traces[1];
        a = log_det2_coeffs(&traces, order);
        a[1] = -delta;
        if order >= 2 {
            a[2] -= 0.5;
        }
    }
    TruncSeries::new(a).and_then(|s| s.exp()).expect("zero constant term")
}

/// Curvature series at a smooth point of `F`; coefficient 0 is always 1.
pub fn jacobian_series(
    functional: &dyn SmoothFunctional,
    kind: RegionKind,
    x: &[f64],
    order: usize,
    floor: f64,
) -> Result<TruncSeries> {
    let normal = unit_normal(functional, kind, x, floor)?;
    Ok(normal_series(&normal, x, order))
}

/// Cheaper variant used by the Monte Carlo loop: the Hessian is only
/// evaluated when `order ≥ 1`.
pub(crate) fn surface_jet(
    functional: &dyn SmoothFunctional,
    kind: RegionKind,
    x: &[f64],
    grad: DVector<f64>,
    order: usize,
    floor: f64,
) -> Result<(f64, TruncSeries)> {
    let g = grad.norm();
    if !(g >= floor) {
        return Err(Error::DegeneratePoint { grad_norm: g, floor });
    }
    if order == 0 {
        return Ok((g, TruncSeries::one(0)));
    }
    let hess = functional.hess(x);
    let normal = normal_from_parts(&grad, &hess, kind.sign(), floor)?;
    Ok((g, normal_series(&normal, x, order)))
}

/// Constant vector field `x ↦ h`.
#[derive(Debug, Clone)]
pub struct ConstantField(pub DVector<f64>);

impl VectorField for ConstantField {
    fn dim(&self) -> usize {
        self.0.len()
    }
    fn value(&self, _x: &[f64]) -> DVector<f64> {
        self.0.clone()
    }
    fn jacobian(&self, _x: &[f64]) -> DMatrix<f64> {
        DMatrix::zeros(self.0.len(), self.0.len())
    }
}

/// Linear vector field `x ↦ A x`.
#[derive(Debug, Clone)]
pub struct LinearField(pub DMatrix<f64>);

impl VectorField for LinearField {
    fn dim(&self) -> usize {
        self.0.nrows()
    }
    fn value(&self, x: &[f64]) -> DVector<f64> {
        &self.0 * DVector::from_column_slice(x)
    }
    fn jacobian(&self, _x: &[f64]) -> DMatrix<f64> {
        self.0.clone()
    }
}

/// The outward unit normal field of a region, as a [`VectorField`].
pub struct NormalField<F> {
    pub functional: F,
    pub kind: RegionKind,
}

impl<F: SmoothFunctional> VectorField for NormalField<F> {
    fn dim(&self) -> usize {
        self.functional.dim()
    }
    fn value(&self, x: &[f64]) -> DVector<f64> {
        let g = self.functional.grad(x);
        let n = g.norm();
        g * (self.kind.sign() / n)
    }
    fn jacobian(&self, x: &[f64]) -> DMatrix<f64> {
        unit_normal(&self.functional, self.kind, x, 0.0)
            .map(|n| n.jacobian)
            .unwrap_or_else(|_| DMatrix::zeros(self.dim(), self.dim()))
    }
}

/// Worst relative discrepancies between analytic derivatives and central
/// finite differences over Gaussian probes.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DerivativeCheck {
    pub grad_rel_err: f64,
    pub hess_rel_err: f64,
    pub hess_asymmetry: f64,
}

fn rel_err(approx: &DVector<f64>, exact: &DVector<f64>) -> f64 {
    let d = (approx - exact).norm();
    let n = exact.norm();
    if n > 0.0 {
        d / n
    } else {
        d
    }
}

fn fd_step(x: &[f64]) -> f64 {
    1e-4 * (1.0 + x.iter().map(|v| v * v).sum::<f64>().sqrt())
}

fn probe(rng: &mut rng::StreamRng, dim: usize, scale: f64) -> Vec<f64> {
    (0..dim).map(|_| scale * rng.sample::<f64, _>(StandardNormal)).collect()
}

/// Compares `grad`/`hess` against central differences of `value`/`grad`.
///
/// Errors are norm-wise relative errors (Euclidean for gradients, Frobenius
/// over Hessian columns); `scale` stretches the Gaussian probes.
pub fn check_derivatives(functional: &dyn SmoothFunctional, probes: usize, scale: f64, seed: u64) -> DerivativeCheck {
    let dim = functional.dim();
    let mut rng = rng::stream(rng::derive_seed(seed, "fd-check", 0));
    let mut out = DerivativeCheck {
        grad_rel_err: 0.0,
        hess_rel_err: 0.0,
        hess_asymmetry: 0.0,
    };
    for _ in 0..probes {
        let x = probe(&mut rng, dim, scale);
        let h = fd_step(&x);
        let grad = functional.grad(&x);
        let hess = functional.hess(&x);
        let mut fd_grad = DVector::zeros(dim);
        let mut fd_hess = DMatrix::zeros(dim, dim);
        let mut xp = x.clone();
        for i in 0..dim {
            xp[i] = x[i] + h;
            let (fp, gp) = (functional.value(&xp), functional.grad(&xp));
            xp[i] = x[i] - h;
            let (fm, gm) = (functional.value(&xp), functional.grad(&xp));
            xp[i] = x[i];
            fd_grad[i] = (fp - fm) / (2.0 * h);
            fd_hess.set_column(i, &((gp - gm) / (2.0 * h)));
        }
        out.grad_rel_err = out.grad_rel_err.max(rel_err(&fd_grad, &grad));
        let (fd_flat, flat) = (
            DVector::from_column_slice(fd_hess.as_slice()),
            DVector::from_column_slice(hess.as_slice()),
        );
        out.hess_rel_err = out.hess_rel_err.max(rel_err(&fd_flat, &flat));
        out.hess_asymmetry = out.hess_asymmetry.max((&hess - hess.transpose()).amax());
    }
    out
}

/// Worst relative error of a vector field's Jacobian against central
/// differences of its values.
pub fn check_field_jacobian(field: &dyn VectorField, probes: usize, scale: f64, seed: u64) -> f64 {
    let dim = field.dim();
    let mut rng = rng::stream(rng::derive_seed(seed, "fd-check-field", 0));
    let mut worst: f64 = 0.0;
    for _ in 0..probes {
        let x = probe(&mut rng, dim, scale);
        let h = fd_step(&x);
        let jac = field.jacobian(&x);
        let mut fd = DMatrix::zeros(dim, dim);
        let mut xp = x.clone();
        for j in 0..dim {
            xp[j] = x[j] + h;
            let vp = field.value(&xp);
            xp[j] = x[j] - h;
            let vm = field.value(&xp);
            xp[j] = x[j];
            fd.set_column(j, &((vp - vm) / (2.0 * h)));
        }
        worst = worst.max(rel_err(
            &DVector::from_column_slice(fd.as_slice()),
            &DVector::from_column_slice(jac.as_slice()),
        ));
    }
    worst
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::functional::{Coordinate, HalfNormSq, Norm, Quadratic};
    use crate::rng::Moments;
    use approx::assert_relative_eq;

    fn diag(vals: &[f64]) -> DMatrix<f64> {
        DMatrix::from_diagonal(&DVector::from_column_slice(vals))
    }

    #[test]
    fn divergence_examples() {
        let x = [0.3, -1.2, 2.0];
        let h = DVector::from_column_slice(&[1.0, 2.0, -0.5]);
        assert_relative_eq!(
            divergence(&ConstantField(h.clone()), &x),
            h.dot(&DVector::from_column_slice(&x))
        );
        let id = LinearField(DMatrix::identity(3, 3));
        let r2: f64 = x.iter().map(|v| v * v).sum();
        assert_relative_eq!(divergence(&id, &x), r2 - 3.0, epsilon = 1e-14);
        let a = DMatrix::from_row_slice(3, 3, &[1.0, 2.0, 0.0, -1.0, 0.5, 3.0, 0.2, 0.0, -2.0]);
        let xv = DVector::from_column_slice(&x);
        let want = xv.dot(&(&a * &xv)) - a.trace();
        assert_relative_eq!(divergence(&LinearField(a), &x), want, epsilon = 1e-13);
    }

    #[test]
    fn unit_normal_of_coordinate() {
        let f = Coordinate::new(4, 0);
        let n = unit_normal(&f, RegionKind::Excursion, &[0.5, 1.0, 2.0, 3.0], DEFAULT_GRAD_FLOOR).unwrap();
        assert_eq!(n.eta.as_slice(), &[-1.0, 0.0, 0.0, 0.0]);
        assert_eq!(n.jacobian.amax(), 0.0);
    }

    #[test]
    fn unit_normal_of_sphere() {
        let f = HalfNormSq::new(3);
        let x = [1.0, 2.0, -2.0];
        let r = 3.0;
        let n = unit_normal(&f, RegionKind::SubLevel, &x, DEFAULT_GRAD_FLOOR).unwrap();
        let eta = DVector::from_column_slice(&x) / r;
        assert_relative_eq!(n.eta, eta.clone(), epsilon = 1e-15);
        let want = (DMatrix::identity(3, 3) - &eta * eta.transpose()) / r;
        assert_relative_eq!(n.jacobian, want, epsilon = 1e-14);
    }

    #[test]
    fn normal_jacobian_annihilates_normal() {
        let mut rng = rng::stream(5);
        for _ in 0..20 {
            let q = Quadratic::random(5, &mut rng);
            let x = probe(&mut rng, 5, 1.0);
            let n = unit_normal(&q, RegionKind::SubLevel, &x, DEFAULT_GRAD_FLOOR).unwrap();
            let v = n.jacobian.transpose() * &n.eta;
            assert!(v.norm() < 1e-10 * (1.0 + n.jacobian.norm()));
        }
    }

    #[test]
    fn normal_field_jacobian_matches_finite_differences() {
        let field = NormalField {
            functional: Norm::new(3),
            kind: RegionKind::SubLevel,
        };
        assert!(check_field_jacobian(&field, 20, 1.5, 3) < 1e-5);
        let mut rng = rng::stream(8);
        let field = NormalField {
            functional: Quadratic::random(4, &mut rng),
            kind: RegionKind::Excursion,
        };
        assert!(check_field_jacobian(&field, 20, 1.0, 4) < 1e-5);
    }

    #[test]
    fn degenerate_point_rejected() {
        let f = HalfNormSq::new(2);
        let err = unit_normal(&f, RegionKind::SubLevel, &[0.0, 0.0], DEFAULT_GRAD_FLOOR).unwrap_err();
        assert!(matches!(err, Error::DegeneratePoint { .. }));
    }

    #[test]
    fn trace_powers_match_explicit_powers() {
        let a = DMatrix::from_row_slice(3, 3, &[0.3, -0.2, 0.1, 0.5, 0.1, -0.4, 0.0, 0.7, -0.3]);
        let t = trace_powers(&a, 7);
        let mut p = DMatrix::identity(3, 3);
        for tm in &t {
            assert_relative_eq!(*tm, p.trace(), epsilon = 1e-14);
            p = &p * &a;
        }
    }

    #[test]
    fn det2_series_examples() {
        assert_eq!(
            det2_series(&DMatrix::zeros(3, 3), 4).coeffs(),
            &[1.0, 0.0, 0.0, 0.0, 0.0]
        );
        // (1+ρ)² e^{−2ρ} = 1 − ρ² + ...
        let s = det2_series(&DMatrix::identity(2, 2), 2);
        assert_relative_eq!(s.coeff(0), 1.0);
        assert_eq!(s.coeff(1), 0.0);
        assert_relative_eq!(s.coeff(2), -1.0, epsilon = 1e-15);
    }

    #[test]
    fn det2_series_against_eigenvalue_product() {
        // (1+ρλ)e^{−ρλ} has coefficients (−λ)^m (1−m)/m!
        let lambdas: [f64; 4] = [0.7, -0.3, 1.2, 0.05];
        let order = 6;
        let mut prod = vec![0.0; order + 1];
        prod[0] = 1.0;
        for &l in &lambdas {
            let mut factor = vec![0.0; order + 1];
            let mut fact = 1.0;
            for (m, f) in factor.iter_mut().enumerate() {
                if m > 0 {
                    fact *= m as f64;
                }
                *f = (-l).powi(m as i32) * (1.0 - m as f64) / fact;
            }
            let mut next = vec![0.0; order + 1];
            for i in 0..=order {
                for j in 0..=order - i {
                    next[i + j] += prod[i] * factor[j];
                }
            }
            prod = next;
        }
        let s = det2_series(&diag(&lambdas), order);
        for (a, b) in s.coeffs().iter().zip(&prod) {
            assert!((a - b).abs() < 1e-13);
        }
    }

    #[test]
    fn det2_exact_and_series_agree_for_small_rho() {
        let a = DMatrix::from_row_slice(3, 3, &[0.2, 0.1, 0.0, -0.1, 0.3, 0.2, 0.05, 0.0, -0.25]);
        let s = det2_series(&a, 12);
        for rho in [0.01, 0.1, 0.3] {
            assert_relative_eq!(s.eval(rho), det2_exact(&a, rho), epsilon = 1e-10);
        }
    }

    #[test]
    fn ramer_density_examples() {
        let x = [0.4, -1.1, 0.7];
        let h = DVector::from_column_slice(&[0.6, 0.0, 0.8]);
        let hx = 0.6 * 0.4 + 0.8 * 0.7;
        let y = ramer_density(&ConstantField(h.clone()), 0.3, &x).unwrap();
        assert_relative_eq!(y, (-0.3 * hx - 0.045f64).exp(), epsilon = 1e-15);
        assert_eq!(ramer_density(&ConstantField(h), 0.0, &x).unwrap(), 1.0);
    }

    #[test]
    fn shift_identity_for_first_coordinate() {
        // g = x₁, η ≡ e₁: E[g(x+ρe₁)] = ρ, E[g(x+ρe₁)·Y] = E[g] = 0
        let rho = 0.4;
        let e1 = ConstantField(DVector::from_column_slice(&[1.0, 0.0]));
        let back = ConstantField(DVector::from_column_slice(&[-1.0, 0.0]));
        let mut rng = rng::stream(5);
        let n = 200_000;
        let (mut fwd, mut bwd) = (Moments::default(), Moments::default());
        for _ in 0..n {
            let x = probe(&mut rng, 2, 1.0);
            fwd.push((x[0] + rho) * ramer_density(&e1, rho, &x).unwrap());
            bwd.push(x[0] * ramer_density(&back, rho, &x).unwrap());
        }
        assert!(fwd.mean.abs() < 4.0 * fwd.stderr());
        assert!((bwd.mean - rho).abs() < 4.0 * bwd.stderr());
    }

    #[test]
    fn ramer_density_is_jacobian_times_density_ratio() {
        // Y(x) = det(I+ρ∇η)·φ(x+ρη)/φ(x): two independent det2 routes.
        let mut rng = rng::stream(11);
        let field = NormalField {
            functional: Quadratic::random(4, &mut rng),
            kind: RegionKind::SubLevel,
        };
        for _ in 0..50 {
            let x = probe(&mut rng, 4, 1.0);
            let rho = 0.05;
            let e = field.value(&x);
            let jac = field.jacobian(&x);
            let det = (DMatrix::identity(4, 4) + &jac * rho).determinant();
            let xv = DVector::from_column_slice(&x);
            let shifted = &xv + &e * rho;
            let ratio = (-(shifted.norm_squared() - xv.norm_squared()) / 2.0).exp();
            let y = ramer_density(&field, rho, &x).unwrap();
            assert_relative_eq!(y, det * ratio, max_relative = 1e-12);
        }
    }

    #[test]
    fn ramer_flags_nonpositive_det() {
        let field = LinearField(DMatrix::identity(3, 3) * -2.0);
        assert!(matches!(
            ramer_density(&field, 1.0, &[0.1, 0.2, 0.3]),
            Err(Error::NonPositiveDet2 { .. })
        ));
    }

    #[test]
    fn jacobian_series_linear_is_hermite_generating_function() {
        let f = Coordinate::new(3, 0);
        let x1 = 1.3;
        let s = jacobian_series(&f, RegionKind::Excursion, &[x1, 0.2, -0.4], 3, DEFAULT_GRAD_FLOOR).unwrap();
        let want = [1.0, x1, (x1 * x1 - 1.0) / 2.0, (x1.powi(3) - 3.0 * x1) / 6.0];
        for (a, b) in s.coeffs().iter().zip(want) {
            assert_relative_eq!(*a, b, epsilon = 1e-14);
        }
    }

    #[test]
    fn jacobian_series_flat_normal_is_plain_exponential() {
        let f = Coordinate::new(2, 1);
        let x = [0.3, -0.8];
        let s = jacobian_series(&f, RegionKind::SubLevel, &x, 5, DEFAULT_GRAD_FLOOR).unwrap();
        let delta = -0.8; // δ(e₂) = x₂
        let want = TruncSeries::new(vec![0.0, -delta, -0.5, 0.0, 0.0, 0.0])
            .unwrap()
            .exp()
            .unwrap();
        assert_eq!(s, want);
    }

    #[test]
    fn jacobian_series_circle() {
        // F = ‖x‖ in ℝ², x = (r, 0): δ(η) = r − 1/r, tr(∇η)^m = r^{−m}
        let r = 1.7;
        let s = jacobian_series(&Norm::new(2), RegionKind::SubLevel, &[r, 0.0], 4, DEFAULT_GRAD_FLOOR).unwrap();
        let mut a = vec![0.0, -(r - 1.0 / r), -0.5, 0.0, 0.0];
        for m in 2..=4 {
            let sign = if m % 2 == 0 { -1.0 } else { 1.0 };
            a[m] += sign * r.powi(-(m as i32)) / m as f64;
        }
        let want = TruncSeries::new(a).unwrap().exp().unwrap();
        for (x, y) in s.coeffs().iter().zip(want.coeffs()) {
            assert_relative_eq!(*x, *y, epsilon = 1e-14);
        }
        // closed form: (1+ρ/r) e^{−ρ r − ρ²/2}
        let closed = |rho: f64| (1.0 + rho / r) * (-rho * r - rho * rho / 2.0).exp();
        assert_relative_eq!(s.eval(1e-3), closed(1e-3), epsilon = 1e-12);
    }
}
