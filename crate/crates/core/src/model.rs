//! Evaluable model pieces shared by the optimiser, the controller and the
//! series diagnostics.

use nalgebra::{DMatrix, DVector};

use crate::numeric::Scalar;
use crate::poly::{jet_lift_many, Expr, PolyBundle, PolyError, TaylorMap};

/// Discrete-time dynamics `x+ = f(x, u)` with first derivatives.
pub trait Dynamics: Sync {
    fn state_dim(&self) -> usize;
    fn control_dim(&self) -> usize;
    fn step(&self, x: &DVector<f64>, u: &DVector<f64>) -> DVector<f64>;
    /// `(df/dx, df/du)` at `(x, u)`.
    fn jacobians(&self, x: &DVector<f64>, u: &DVector<f64>) -> (DMatrix<f64>, DMatrix<f64>);
}

/// Running cost `l(x, u)` with gradients.
pub trait StageCost: Sync {
    fn value(&self, x: &DVector<f64>, u: &DVector<f64>) -> f64;
    /// `(dl/dx, dl/du)` at `(x, u)`.
    fn gradients(&self, x: &DVector<f64>, u: &DVector<f64>) -> (DVector<f64>, DVector<f64>);
}

/// Terminal cost `V_f(x)` with gradient.
pub trait TerminalCost: Sync {
    fn value(&self, x: &DVector<f64>) -> f64;
    fn gradient(&self, x: &DVector<f64>) -> DVector<f64>;
}

/// State feedback `u = kappa(x)`.
pub trait Feedback: Sync {
    fn control(&self, x: &DVector<f64>) -> DVector<f64>;
}

/// Dynamics that can be evaluated in any [`Scalar`] type, e.g. extended
/// precision or dual numbers.
pub trait ScalarDynamics {
    fn state_dim(&self) -> usize;
    fn control_dim(&self) -> usize;
    fn step_scalar<T: Scalar>(&self, x: &[T], u: &[T]) -> Vec<T>;
}

/// Running cost evaluable in any [`Scalar`] type.
pub trait ScalarStageCost {
    fn value_scalar<T: Scalar>(&self, x: &[T], u: &[T]) -> T;
}

/// Taylor expansion of `x+ = f(x, u)` about the origin in the stacked
/// variables `(x, u)`, degrees `1..=d`.
pub fn taylor_expand<D: ScalarDynamics>(dynamics: &D, d: usize) -> Result<TaylorMap, PolyError> {
    let (n, m) = (dynamics.state_dim(), dynamics.control_dim());
    let x: Vec<Expr> = (0..n).map(Expr::var).collect();
    let u: Vec<Expr> = (n..n + m).map(Expr::var).collect();
    let next = dynamics.step_scalar(&x, &u);
    let rows = jet_lift_many(&next, &vec![0.0; n + m], d)?;
    Ok(TaylorMap::new(rows)?.truncate(1, d))
}

fn mat_vec<T: Scalar>(m: &DMatrix<f64>, v: &[T]) -> Vec<T> {
    (0..m.nrows())
        .map(|i| {
            v.iter()
                .enumerate()
                .fold(T::constant(0.0), |acc, (j, vj)| {
                    acc + T::constant(m[(i, j)]) * vj.clone()
                })
        })
        .collect()
}

fn dot<T: Scalar>(a: &[T], b: &[T]) -> T {
    a.iter()
        .zip(b)
        .fold(T::constant(0.0), |acc, (x, y)| acc + x.clone() * y.clone())
}

/// `x+ = A x + B u`.
#[derive(Debug, Clone)]
pub struct LinearDynamics {
    pub a: DMatrix<f64>,
    pub b: DMatrix<f64>,
}

impl Dynamics for LinearDynamics {
    fn state_dim(&self) -> usize {
        self.a.nrows()
    }
    fn control_dim(&self) -> usize {
        self.b.ncols()
    }
    fn step(&self, x: &DVector<f64>, u: &DVector<f64>) -> DVector<f64> {
        &self.a * x + &self.b * u
    }
    fn jacobians(&self, _x: &DVector<f64>, _u: &DVector<f64>) -> (DMatrix<f64>, DMatrix<f64>) {
        (self.a.clone(), self.b.clone())
    }
}

impl ScalarDynamics for LinearDynamics {
    fn state_dim(&self) -> usize {
        self.a.nrows()
    }
    fn control_dim(&self) -> usize {
        self.b.ncols()
    }
    fn step_scalar<T: Scalar>(&self, x: &[T], u: &[T]) -> Vec<T> {
        mat_vec(&self.a, x)
            .into_iter()
            .zip(mat_vec(&self.b, u))
            .map(|(p, q)| p + q)
            .collect()
    }
}

/// `l(x, u) = (x'Qx + 2x'Su + u'Ru) / 2`.
#[derive(Debug, Clone)]
pub struct QuadraticCost {
    pub q: DMatrix<f64>,
    pub s: DMatrix<f64>,
    pub r: DMatrix<f64>,
}

impl QuadraticCost {
    /// `(w/2)(|x|^2 + |u|^2)`.
    pub fn isotropic(n: usize, m: usize, w: f64) -> Self {
        Self {
            q: DMatrix::identity(n, n) * w,
            s: DMatrix::zeros(n, m),
            r: DMatrix::identity(m, m) * w,
        }
    }

    /// The cost as a polynomial in the stacked variables `(x, u)`.
    pub fn to_poly(&self) -> Result<PolyBundle, PolyError> {
        let n = self.q.nrows();
        let m = self.r.nrows();
        let mut h = DMatrix::zeros(n + m, n + m);
        h.view_mut((0, 0), (n, n)).copy_from(&self.q);
        h.view_mut((0, n), (n, m)).copy_from(&self.s);
        h.view_mut((n, 0), (m, n)).copy_from(&self.s.transpose());
        h.view_mut((n, n), (m, m)).copy_from(&self.r);
        quadratic_form(&h)
    }
}

impl StageCost for QuadraticCost {
    fn value(&self, x: &DVector<f64>, u: &DVector<f64>) -> f64 {
        0.5 * (x.dot(&(&self.q * x)) + 2.0 * x.dot(&(&self.s * u)) + u.dot(&(&self.r * u)))
    }
    fn gradients(&self, x: &DVector<f64>, u: &DVector<f64>) -> (DVector<f64>, DVector<f64>) {
        let gx = 0.5 * (&self.q + self.q.transpose()) * x + &self.s * u;
        let gu = self.s.transpose() * x + 0.5 * (&self.r + self.r.transpose()) * u;
        (gx, gu)
    }
}

impl ScalarStageCost for QuadraticCost {
    fn value_scalar<T: Scalar>(&self, x: &[T], u: &[T]) -> T {
        let qx = dot(x, &mat_vec(&self.q, x));
        let sx = dot(x, &mat_vec(&self.s, u));
        let ru = dot(u, &mat_vec(&self.r, u));
        T::constant(0.5) * (qx + T::constant(2.0) * sx + ru)
    }
}

/// `V(x) = x'Px / 2`.
#[derive(Debug, Clone)]
pub struct QuadraticTerminal {
    pub p: DMatrix<f64>,
}

impl TerminalCost for QuadraticTerminal {
    fn value(&self, x: &DVector<f64>) -> f64 {
        0.5 * x.dot(&(&self.p * x))
    }
    fn gradient(&self, x: &DVector<f64>) -> DVector<f64> {
        0.5 * (&self.p + self.p.transpose()) * x
    }
}

/// `u = K x`.
#[derive(Debug, Clone)]
pub struct LinearFeedback {
    pub k: DMatrix<f64>,
}

impl Feedback for LinearFeedback {
    fn control(&self, x: &DVector<f64>) -> DVector<f64> {
        &self.k * x
    }
}

/// `u_c = kappa_c(x)` with one polynomial per control channel.
#[derive(Debug, Clone)]
pub struct PolynomialFeedback {
    pub rows: Vec<PolyBundle>,
}

impl Feedback for PolynomialFeedback {
    fn control(&self, x: &DVector<f64>) -> DVector<f64> {
        DVector::from_iterator(
            self.rows.len(),
            self.rows.iter().map(|r| r.eval(x.as_slice()).unwrap_or(f64::NAN)),
        )
    }
}

/// Zero terminal cost.
#[derive(Debug, Clone, Copy, Default)]
pub struct NoTerminalCost;

impl TerminalCost for NoTerminalCost {
    fn value(&self, _x: &DVector<f64>) -> f64 {
        0.0
    }
    fn gradient(&self, x: &DVector<f64>) -> DVector<f64> {
        DVector::zeros(x.len())
    }
}

/// `z'Hz / 2` as a homogeneous quadratic polynomial.
pub fn quadratic_form(h: &DMatrix<f64>) -> Result<PolyBundle, PolyError> {
    let n = h.nrows();
    let mut p = PolyBundle::zeros(n, 2, 2)?;
    let mut exp = vec![0u32; n];
    for i in 0..n {
        for j in i..n {
            exp.iter_mut().for_each(|e| *e = 0);
            exp[i] += 1;
            exp[j] += 1;
            let c = if i == j {
                0.5 * h[(i, i)]
            } else {
                0.5 * (h[(i, j)] + h[(j, i)])
            };
            p.set_coeff(&exp, c)?;
        }
    }
    Ok(p)
}

/// Symmetric `H` with `p(z) = z'Hz / 2` for the degree-2 part of `p`.
pub fn hessian_of_quadratic(p: &PolyBundle) -> DMatrix<f64> {
    let n = p.n();
    let mut h = DMatrix::zeros(n, n);
    let mut exp = vec![0u32; n];
    for i in 0..n {
        for j in i..n {
            exp.iter_mut().for_each(|e| *e = 0);
            exp[i] += 1;
            exp[j] += 1;
            let c = p.coeff(&exp);
            if i == j {
                h[(i, i)] = 2.0 * c;
            } else {
                h[(i, j)] = c;
                h[(j, i)] = c;
            }
        }
    }
    h
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quadratic_form_round_trip() {
        let h = DMatrix::from_row_slice(3, 3, &[2.0, 0.5, -1.0, 0.5, 3.0, 0.25, -1.0, 0.25, 1.0]);
        let p = quadratic_form(&h).unwrap();
        let z = [0.3, -0.7, 1.1];
        let zv = DVector::from_column_slice(&z);
        assert!((p.eval(&z).unwrap() - 0.5 * zv.dot(&(&h * &zv))).abs() < 1e-14);
        assert!((hessian_of_quadratic(&p) - h).abs().max() < 1e-15);
    }

    #[test]
    fn quadratic_cost_poly_matches_value() {
        let c = QuadraticCost {
            q: DMatrix::from_row_slice(2, 2, &[1.0, 0.2, 0.2, 2.0]),
            s: DMatrix::from_row_slice(2, 1, &[0.1, -0.3]),
            r: DMatrix::from_element(1, 1, 0.5),
        };
        let p = c.to_poly().unwrap();
        let x = DVector::from_vec(vec![0.4, -1.0]);
        let u = DVector::from_vec(vec![2.0]);
        let v = p.eval(&[0.4, -1.0, 2.0]).unwrap();
        assert!((v - c.value(&x, &u)).abs() < 1e-14);
        let (gx, gu) = c.gradients(&x, &u);
        let (_, g) = p.eval_grad(&[0.4, -1.0, 2.0]).unwrap();
        assert!((gx[0] - g[0]).abs() < 1e-14 && (gx[1] - g[1]).abs() < 1e-14);
        assert!((gu[0] - g[2]).abs() < 1e-14);
    }
}
