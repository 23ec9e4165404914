//! Sum-of-squares extension of a truncated value function.
//!
//! In coordinates `z = T'x` that diagonalise the quadratic part,
//! `V(Tz) = sum_j (lambda_j / 2) z_j^2 + ...`. Each square is grown one
//! degree at a time: `delta_j = z_j + ...`, where the degree-`e` block of
//! `delta_j` absorbs the degree-`e+1` coefficients of the remaining residual
//! whose first variable is `z_j`. The completed `W = sum_j (lambda_j / 2)
//! delta_j^2` agrees with `V` through degree `d + 1` and is nonnegative.

use std::fmt::Write as _;

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

use crate::model::TerminalCost;
use crate::poly::{PolyBundle, PolyError};

#[derive(Debug, Error)]
pub enum SosError {
    #[error("quadratic part is not positive definite: eigenvalue {index} is {value:e}")]
    NotPositiveDefinite { index: usize, value: f64 },
    #[error("value polynomial must start at degree 2 and have a quadratic part, got {0}")]
    BadDegrees(String),
    #[error(transparent)]
    Poly(#[from] PolyError),
}

#[derive(Debug, Clone)]
pub struct SquareCompletion {
    /// Orthogonal, with `P = T diag(lambda) T'`.
    pub t: DMatrix<f64>,
    /// Descending.
    pub lambda: Vec<f64>,
    /// `delta_j(z)`, degrees `1..=d`.
    pub deltas: Vec<PolyBundle>,
    /// The completion in the original coordinates, degrees `2..=2d`.
    pub w: PolyBundle,
    pub degree: usize,
}

/// Complete `v` (degrees `2..=d+1`) to a sum of squares of degree `2d`.
pub fn complete_squares(v: &PolyBundle) -> Result<SquareCompletion, SosError> {
    let n = v.n();
    let Some((lo, hi)) = v.degree_range() else {
        return Err(SosError::BadDegrees("the zero polynomial".into()));
    };
    for deg in lo..2.min(hi + 1) {
        if v.term(deg).is_some_and(|t| !t.is_zero()) {
            return Err(SosError::BadDegrees(format!("a nonzero degree-{deg} term")));
        }
    }
    if hi < 2 {
        return Err(SosError::BadDegrees(format!("top degree {hi}")));
    }
    let d = hi - 1;

    let p = crate::model::hessian_of_quadratic(&v.truncate(2, 2));
    let eig = p.symmetric_eigen();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let lambda: Vec<f64> = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    if let Some(idx) = lambda.iter().position(|&l| !(l > 0.0)) {
        return Err(SosError::NotPositiveDefinite {
            index: idx,
            value: lambda[idx],
        });
    }
    let t = DMatrix::from_fn(n, n, |r, c| eig.eigenvectors[(r, order[c])]);

    let vz = v.truncate(2, hi).compose_linear(&t)?;
    let mut deltas: Vec<PolyBundle> =
        (0..n).map(|j| PolyBundle::variable(n, j)).collect::<Result<_, _>>()?;

    for e in 2..=d {
        let mut sum = PolyBundle::zero(n);
        for (dj, &lj) in deltas.iter().zip(&lambda) {
            sum.add_scaled(&dj.mul_trunc(dj, e + 1)?, 0.5 * lj)?;
        }
        let residual = vz.truncate(e + 1, e + 1).sub(&sum.truncate(e + 1, e + 1))?;
        let Some(r) = residual.term(e + 1) else {
            continue;
        };
        let mut exp_lower = vec![0u32; n];
        for (exp, &gamma) in r.basis().iter().zip(r.coeffs()) {
            if gamma == 0.0 {
                continue;
            }
            let j = exp.iter().position(|&k| k > 0).expect("degree >= 3");
            exp_lower.copy_from_slice(exp);
            exp_lower[j] -= 1;
            let dj = &mut deltas[j];
            dj.term_mut(e);
            let prev = dj.coeff(&exp_lower);
            dj.set_coeff(&exp_lower, prev + gamma / lambda[j])?;
        }
    }

    let mut wz = PolyBundle::zero(n);
    for (dj, &lj) in deltas.iter().zip(&lambda) {
        wz.add_scaled(&dj.mul_trunc(dj, 2 * d)?, 0.5 * lj)?;
    }
    let w = wz.compose_linear(&t.transpose())?;
    Ok(SquareCompletion {
        t,
        lambda,
        deltas,
        w,
        degree: d,
    })
}

/// Largest coefficient difference between `c.w` and `v` over degrees
/// `2..=d+1`.
pub fn truncation_check(c: &SquareCompletion, v: &PolyBundle) -> f64 {
    let mut worst = 0.0f64;
    for deg in 2..=c.degree + 1 {
        let basis = match crate::poly::MonomialBasis::shared(v.n(), deg) {
            Ok(b) => b,
            Err(_) => continue,
        };
        for exp in basis.iter() {
            worst = worst.max((c.w.coeff(exp) - v.coeff(exp)).abs());
        }
    }
    worst
}

impl SquareCompletion {
    pub fn state_dim(&self) -> usize {
        self.t.nrows()
    }

    fn to_z(&self, x: &DVector<f64>) -> Vec<f64> {
        (self.t.transpose() * x).as_slice().to_vec()
    }

    /// `W(x)` as the sum of squares; never negative.
    pub fn eval(&self, x: &DVector<f64>) -> f64 {
        let z = self.to_z(x);
        self.deltas
            .iter()
            .zip(&self.lambda)
            .map(|(dj, &lj)| {
                let v = dj.eval(&z).expect("dimension checked at construction");
                0.5 * lj * v * v
            })
            .sum()
    }

    /// `T` and `lambda` as a plain-text block: `n` rows of `T`, then one row
    /// of eigenvalues.
    pub fn dump_transform(&self) -> String {
        let mut s = String::new();
        let n = self.state_dim();
        let _ = writeln!(s, "T {n}x{n}");
        for r in 0..n {
            let row: Vec<String> = (0..n).map(|c| format!("{:.16e}", self.t[(r, c)])).collect();
            let _ = writeln!(s, "{}", row.join(" "));
        }
        let lam: Vec<String> = self.lambda.iter().map(|l| format!("{l:.16e}")).collect();
        let _ = writeln!(s, "lambda {}", lam.join(" "));
        s
    }
}

impl TerminalCost for SquareCompletion {
    fn value(&self, x: &DVector<f64>) -> f64 {
        self.eval(x)
    }

    fn gradient(&self, x: &DVector<f64>) -> DVector<f64> {
        let z = self.to_z(x);
        let mut gz = DVector::zeros(z.len());
        for (dj, &lj) in self.deltas.iter().zip(&self.lambda) {
            let (v, g) = dj.eval_grad(&z).expect("dimension checked at construction");
            for (acc, gi) in gz.iter_mut().zip(g) {
                *acc += lj * v * gi;
            }
        }
        &self.t * gz
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn already_a_sum_of_squares() {
        let mut v = PolyBundle::zero(2);
        v.set_coeff(&[2, 0], 1.0).unwrap();
        v.set_coeff(&[0, 2], 1.0).unwrap();
        let c = complete_squares(&v).unwrap();
        assert_eq!(c.degree, 1);
        assert!(truncation_check(&c, &v) < 1e-12);
        assert!(c.w.sub(&v).unwrap().terms().iter().all(|t| t.max_abs() < 1e-12));
        for dj in &c.deltas {
            assert_eq!(dj.hi(), 1);
        }
    }

    #[test]
    fn scalar_cubic() {
        // z^2 + z^3 = (2/2)(z + z^2/2)^2 - z^4/4
        let mut v = PolyBundle::zero(1);
        v.set_coeff(&[2], 1.0).unwrap();
        v.set_coeff(&[3], 1.0).unwrap();
        let c = complete_squares(&v).unwrap();
        assert!((c.lambda[0] - 2.0).abs() < 1e-14);
        let s = c.t[(0, 0)];
        // delta is in z = s x; its z^2 coefficient is gamma / lambda in z-coordinates
        assert!((c.deltas[0].coeff(&[2]) - 0.5 * s).abs() < 1e-14);
        assert!((c.w.coeff(&[2]) - 1.0).abs() < 1e-14);
        assert!((c.w.coeff(&[3]) - 1.0).abs() < 1e-14);
        assert!((c.w.coeff(&[4]) - 0.25).abs() < 1e-14);
    }

    #[test]
    fn rejects_indefinite() {
        let mut v = PolyBundle::zero(2);
        v.set_coeff(&[2, 0], 1.0).unwrap();
        v.set_coeff(&[0, 2], -0.5).unwrap();
        v.set_coeff(&[3, 0], 1.0).unwrap();
        match complete_squares(&v) {
            Err(SosError::NotPositiveDefinite { index, value }) => {
                assert_eq!(index, 1);
                assert!((value + 1.0).abs() < 1e-12);
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn rejects_linear_terms() {
        let mut v = PolyBundle::zero(1);
        v.set_coeff(&[1], 1.0).unwrap();
        v.set_coeff(&[2], 1.0).unwrap();
        assert!(matches!(complete_squares(&v), Err(SosError::BadDegrees(_))));
    }

    #[test]
    fn perturbed_completion_is_detected() {
        let mut v = PolyBundle::zero(2);
        v.set_coeff(&[2, 0], 1.0).unwrap();
        v.set_coeff(&[0, 2], 2.0).unwrap();
        v.set_coeff(&[2, 1], 0.3).unwrap();
        let mut c = complete_squares(&v).unwrap();
        assert!(truncation_check(&c, &v) < 1e-10);
        let old = c.w.coeff(&[1, 2]);
        c.w.set_coeff(&[1, 2], old + 1.0).unwrap();
        assert!((truncation_check(&c, &v) - 1.0).abs() < 1e-10);
    }
}
