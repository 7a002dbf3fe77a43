//! Truncated power series in the tube radius ρ and the Gaussian special
//! functions every GMF is built from.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Default truncation order for GMF series.
pub const DEFAULT_ORDER: usize = 6;

const INV_SQRT_2PI: f64 = 0.398_942_280_401_432_7;

/// Probabilists' Hermite polynomial `He_n(y)`.
pub fn hermite(n: usize, y: f64) -> f64 {
    let (mut prev, mut cur) = (1.0, y);
    match n {
        0 => 1.0,
        _ => {
            for k in 1..n {
                let next = y * cur - k as f64 * prev;
                prev = cur;
                cur = next;
            }
            cur
        }
    }
}

/// `[He_0(y), ..., He_n(y)]`.
pub fn hermite_all(n: usize, y: f64) -> Vec<f64> {
    let mut out = Vec::with_capacity(n + 1);
    out.push(1.0);
    if n >= 1 {
        out.push(y);
    }
    for k in 1..n {
        let next = y * out[k] - k as f64 * out[k - 1];
        out.push(next);
    }
    out
}

/// Standard normal density φ.
pub fn gaussian_pdf(u: f64) -> f64 {
    INV_SQRT_2PI * (-0.5 * u * u).exp()
}

/// Standard normal tail Ψ(u) = P(Z ≥ u).
pub fn gaussian_tail(u: f64) -> f64 {
    0.5 * libm::erfc(u / std::f64::consts::SQRT_2)
}

/// Coefficients `c_0..c_J` of a power series in ρ, truncated at order `J`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TruncSeries {
    coeffs: Vec<f64>,
}

impl TruncSeries {
    pub fn new(coeffs: Vec<f64>) -> Result<Self> {
        if coeffs.is_empty() {
            return Err(crate::error::invalid("a series needs at least one coefficient"));
        }
        Ok(Self { coeffs })
    }

    pub fn zero(order: usize) -> Self {
        Self {
            coeffs: vec![0.0; order + 1],
        }
    }

    pub fn one(order: usize) -> Self {
        let mut s = Self::zero(order);
        s.coeffs[0] = 1.0;
        s
    }

    pub fn order(&self) -> usize {
        self.coeffs.len() - 1
    }

    pub fn coeffs(&self) -> &[f64] {
        &self.coeffs
    }

    pub fn coeff(&self, j: usize) -> f64 {
        self.coeffs.get(j).copied().unwrap_or(0.0)
    }

    pub fn coeff_mut(&mut self, j: usize) -> &mut f64 {
        &mut self.coeffs[j]
    }

    pub fn into_coeffs(self) -> Vec<f64> {
        self.coeffs
    }

    fn check_order(&self, other: &Self) -> Result<()> {
        if self.order() != other.order() {
            return Err(Error::OrderMismatch {
                left: self.order(),
                right: other.order(),
            });
        }
        Ok(())
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        self.check_order(other)?;
        let coeffs = self.coeffs.iter().zip(&other.coeffs).map(|(a, b)| a + b).collect();
        Ok(Self { coeffs })
    }

    /// Cauchy product, terms above the common order dropped.
    pub fn mul(&self, other: &Self) -> Result<Self> {
        self.check_order(other)?;
        let order = self.order();
        let mut out = vec![0.0; order + 1];
        for (i, a) in self.coeffs.iter().enumerate() {
            if *a == 0.0 {
                continue;
            }
            for (j, b) in other.coeffs[..=order - i].iter().enumerate() {
                out[i + j] += a * b;
            }
        }
        Ok(Self { coeffs: out })
    }

    pub fn scale(&self, s: f64) -> Self {
        Self {
            coeffs: self.coeffs.iter().map(|c| c * s).collect(),
        }
    }

    /// `exp(a(ρ))` for a series with `a(0) = 0`, via
    /// `b_m = (1/m) Σ_{k=1..m} k a_k b_{m-k}`.
    pub fn exp(&self) -> Result<Self> {
        if self.coeffs[0] != 0.0 {
            return Err(Error::NonZeroConstant(self.coeffs[0]));
        }
        let a = &self.coeffs;
        let mut b = vec![0.0; a.len()];
        b[0] = 1.0;
        for m in 1..a.len() {
            let acc: f64 = (1..=m).map(|k| k as f64 * a[k] * b[m - k]).sum();
            b[m] = acc / m as f64;
        }
        Ok(Self { coeffs: b })
    }

    /// Horner evaluation at `rho`.
    pub fn eval(&self, rho: f64) -> f64 {
        self.coeffs.iter().rev().fold(0.0, |acc, c| acc * rho + c)
    }
}
