use std::sync::Arc;

use super::basis::{product_table, MonomialBasis};
use super::PolyError;

/// A homogeneous polynomial: one coefficient per basis monomial.
#[derive(Debug, Clone, PartialEq)]
pub struct HomogeneousPoly {
    basis: Arc<MonomialBasis>,
    coeffs: Vec<f64>,
}

impl HomogeneousPoly {
    pub fn zeros(n: usize, degree: usize) -> Result<Self, PolyError> {
        let basis = MonomialBasis::shared(n, degree)?;
        let coeffs = vec![0.0; basis.len()];
        Ok(Self { basis, coeffs })
    }

    pub fn from_coeffs(n: usize, degree: usize, coeffs: Vec<f64>) -> Result<Self, PolyError> {
        let basis = MonomialBasis::shared(n, degree)?;
        if coeffs.len() != basis.len() {
            return Err(PolyError::DimensionMismatch {
                expected: basis.len(),
                found: coeffs.len(),
            });
        }
        Ok(Self { basis, coeffs })
    }

    pub fn n(&self) -> usize {
        self.basis.n()
    }

    pub fn degree(&self) -> usize {
        self.basis.degree()
    }

    pub fn basis(&self) -> &MonomialBasis {
        &self.basis
    }

    pub fn coeffs(&self) -> &[f64] {
        &self.coeffs
    }

    pub fn coeffs_mut(&mut self) -> &mut [f64] {
        &mut self.coeffs
    }

    pub fn coeff(&self, exp: &[u32]) -> f64 {
        self.basis.index_of(exp).map_or(0.0, |i| self.coeffs[i])
    }

    pub fn is_zero(&self) -> bool {
        self.coeffs.iter().all(|&c| c == 0.0)
    }

    pub fn max_abs(&self) -> f64 {
        self.coeffs.iter().fold(0.0, |m, c| m.max(c.abs()))
    }

    pub fn scale(&mut self, s: f64) {
        self.coeffs.iter_mut().for_each(|c| *c *= s);
    }

    pub fn add_scaled(&mut self, other: &HomogeneousPoly, s: f64) {
        debug_assert_eq!(self.basis, other.basis);
        for (a, b) in self.coeffs.iter_mut().zip(&other.coeffs) {
            *a += s * b;
        }
    }

    /// Accumulate `self * other` into `out`, whose degree must be the sum.
    pub(crate) fn mul_into(&self, other: &HomogeneousPoly, out: &mut HomogeneousPoly) {
        let n = self.n();
        debug_assert_eq!(out.degree(), self.degree() + other.degree());
        let table = product_table(n, self.degree(), other.degree());
        let lb = other.coeffs.len();
        for (i, &a) in self.coeffs.iter().enumerate() {
            if a == 0.0 {
                continue;
            }
            let row = &table[i * lb..(i + 1) * lb];
            for (&idx, &b) in row.iter().zip(&other.coeffs) {
                if b != 0.0 {
                    out.coeffs[idx as usize] += a * b;
                }
            }
        }
    }

    /// Evaluate given per-variable power tables (`powers[v][e] = x_v^e`).
    pub(crate) fn eval_powers(&self, powers: &[Vec<f64>]) -> f64 {
        let mut acc = 0.0;
        for (exp, &c) in self.basis.iter().zip(&self.coeffs) {
            if c == 0.0 {
                continue;
            }
            let mut term = c;
            for (v, &e) in exp.iter().enumerate() {
                if e > 0 {
                    term *= powers[v][e as usize];
                }
            }
            acc += term;
        }
        acc
    }

    /// Accumulate the gradient into `grad`.
    pub(crate) fn grad_powers(&self, powers: &[Vec<f64>], grad: &mut [f64]) {
        let n = self.n();
        for (exp, &c) in self.basis.iter().zip(&self.coeffs) {
            if c == 0.0 {
                continue;
            }
            for i in 0..n {
                let ei = exp[i] as usize;
                if ei == 0 {
                    continue;
                }
                let mut term = c * ei as f64 * powers[i][ei - 1];
                for (v, &e) in exp.iter().enumerate() {
                    if v != i && e > 0 {
                        term *= powers[v][e as usize];
                    }
                }
                grad[i] += term;
            }
        }
    }
}
