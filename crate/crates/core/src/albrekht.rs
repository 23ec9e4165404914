//! Taylor polynomials of the infinite-horizon optimal cost and feedback.
//!
//! The quadratic cost and linear gain come from the discrete algebraic
//! Riccati equation
//!
//! ```text
//! P = F'PF - (F'PG + S)(R + G'PG)^-1 (G'PF + S') + Q
//! K = -(R + G'PG)^-1 (G'PF + S')
//! ```
//!
//! Higher degrees are found one at a time from the stationarity form of the
//! Bellman equation
//!
//! ```text
//! V(x) = V(f(x, k(x))) + l(x, k(x))
//! 0    = dV/dx(f(x, k(x))) df/du(x, k(x)) + dl/du(x, k(x))
//! ```
//!
//! At degree `j + 1` (resp. `j`) the unknown `V[j+1]` (resp. `k[j]`) enters
//! only through `V[j+1](x) - V[j+1]((F+GK)x)` (resp. `k[j]'(R + G'PG)`);
//! everything else is obtained by substituting the partial series into the
//! equations with the unknown set to zero and reading off the residual.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use thiserror::Error;

use crate::model::{hessian_of_quadratic, quadratic_form, ScalarDynamics, ScalarStageCost};
use crate::numeric::{DoubleDouble, Dual, Scalar};
use crate::poly::{MonomialBasis, PolyBundle, PolyError, Substitution, TaylorMap};

/// Max-norm residual accepted for a Riccati solution.
pub const DARE_RESIDUAL_TOL: f64 = 1e-9;

#[derive(Debug, Error)]
pub enum AlbrekhtError {
    #[error("invalid problem data: {0}")]
    InvalidInput(String),
    #[error("R is not positive definite")]
    RNotPositiveDefinite,
    #[error("Riccati iteration did not converge: spectral radius {spectral_radius:.6}, residual {residual:.3e}")]
    NoConvergence { spectral_radius: f64, residual: f64 },
    #[error("operator V -> V - V((F+GK)x) is singular at degree {degree}")]
    SingularLyapunov { degree: usize },
    #[error("R + G'PG is singular")]
    SingularGain,
    #[error(transparent)]
    Poly(#[from] PolyError),
}

/// Linear-quadratic data: `f = Fx + Gu`, `l = (x'Qx + 2x'Su + u'Ru)/2`.
#[derive(Debug, Clone)]
pub struct LqrData {
    pub f: DMatrix<f64>,
    pub g: DMatrix<f64>,
    pub q: DMatrix<f64>,
    pub s: DMatrix<f64>,
    pub r: DMatrix<f64>,
}

fn is_symmetric(m: &DMatrix<f64>) -> bool {
    let scale = 1.0 + m.abs().max();
    (m - m.transpose()).abs().max() <= 1e-12 * scale
}

impl LqrData {
    pub fn state_dim(&self) -> usize {
        self.f.nrows()
    }

    pub fn control_dim(&self) -> usize {
        self.g.ncols()
    }

    pub fn validate(&self) -> Result<(), AlbrekhtError> {
        let n = self.f.nrows();
        let m = self.g.ncols();
        let shape = |name: &str, mat: &DMatrix<f64>, r: usize, c: usize| {
            if mat.shape() == (r, c) {
                Ok(())
            } else {
                Err(AlbrekhtError::InvalidInput(format!(
                    "{name} is {:?}, expected ({r}, {c})",
                    mat.shape()
                )))
            }
        };
        shape("F", &self.f, n, n)?;
        shape("G", &self.g, n, m)?;
        shape("Q", &self.q, n, n)?;
        shape("S", &self.s, n, m)?;
        shape("R", &self.r, m, m)?;
        if !is_symmetric(&self.q) {
            return Err(AlbrekhtError::InvalidInput("Q is not symmetric".into()));
        }
        if !is_symmetric(&self.r) {
            return Err(AlbrekhtError::InvalidInput("R is not symmetric".into()));
        }
        if self.r.clone().cholesky().is_none() {
            return Err(AlbrekhtError::RNotPositiveDefinite);
        }
        Ok(())
    }

    /// Linear part of `f` and quadratic part of `l`, with the stacked
    /// variables ordered `(x, u)` and `n` states.
    pub fn from_taylor(f: &TaylorMap, l: &PolyBundle, n: usize) -> Result<Self, AlbrekhtError> {
        if f.n_out() != n || f.n_in() <= n || l.n() != f.n_in() {
            return Err(AlbrekhtError::InvalidInput(format!(
                "dynamics map {}->{} and cost in {} variables do not fit {n} states",
                f.n_in(),
                f.n_out(),
                l.n()
            )));
        }
        let m = f.n_in() - n;
        let lin = f.linear_part();
        let h = hessian_of_quadratic(&l.truncate(2, 2));
        Ok(Self {
            f: lin.columns(0, n).into_owned(),
            g: lin.columns(n, m).into_owned(),
            q: h.view((0, 0), (n, n)).into_owned(),
            s: h.view((0, n), (n, m)).into_owned(),
            r: h.view((n, n), (m, m)).into_owned(),
        })
    }

    /// `-(R + G'PG)^-1 (G'PF + S')`.
    pub fn gain(&self, p: &DMatrix<f64>) -> Result<DMatrix<f64>, AlbrekhtError> {
        let lhs = &self.r + self.g.transpose() * p * &self.g;
        let rhs = self.g.transpose() * p * &self.f + self.s.transpose();
        let chol = lhs.cholesky().ok_or(AlbrekhtError::SingularGain)?;
        Ok(-chol.solve(&rhs))
    }

    /// Max-norm residual of the Riccati equation at `p`.
    pub fn residual(&self, p: &DMatrix<f64>) -> f64 {
        let (f, g) = (&self.f, &self.g);
        let lhs = &self.r + g.transpose() * p * g;
        let cross = f.transpose() * p * g + &self.s;
        let Some(chol) = lhs.cholesky() else {
            return f64::INFINITY;
        };
        let res = f.transpose() * p * f - &cross * chol.solve(&cross.transpose()) + &self.q - p;
        res.abs().max()
    }
}

pub fn spectral_radius(a: &DMatrix<f64>) -> f64 {
    a.complex_eigenvalues()
        .iter()
        .map(|l| l.norm())
        .fold(0.0, f64::max)
}

#[derive(Debug, Clone)]
pub struct RiccatiSolution {
    pub p: DMatrix<f64>,
    pub k: DMatrix<f64>,
}

impl RiccatiSolution {
    pub fn closed_loop(&self, lqr: &LqrData) -> DMatrix<f64> {
        &lqr.f + &lqr.g * &self.k
    }
}

fn symmetrize(m: &DMatrix<f64>) -> DMatrix<f64> {
    0.5 * (m + m.transpose())
}

/// Structure-preserving doubling, then Newton (Hewer) refinement.
pub fn solve_dare(lqr: &LqrData) -> Result<RiccatiSolution, AlbrekhtError> {
    lqr.validate()?;
    let n = lqr.state_dim();
    let r_chol = lqr.r.clone().cholesky().ok_or(AlbrekhtError::RNotPositiveDefinite)?;
    let rinv_st = r_chol.solve(&lqr.s.transpose());
    let rinv_gt = r_chol.solve(&lqr.g.transpose());

    // remove the cross term: u = v - R^-1 S' x
    let mut a = &lqr.f - &lqr.g * &rinv_st;
    let mut gg = symmetrize(&(&lqr.g * &rinv_gt));
    let mut hh = symmetrize(&(&lqr.q - &lqr.s * &rinv_st));
    let eye = DMatrix::<f64>::identity(n, n);
    for _ in 0..100 {
        let w = (&eye + &gg * &hh).lu();
        let (Some(wa), Some(wg)) = (w.solve(&a), w.solve(&gg)) else {
            break;
        };
        let h_next = symmetrize(&(&hh + a.transpose() * &hh * &wa));
        let g_next = symmetrize(&(&gg + &a * wg * a.transpose()));
        a = &a * wa;
        let delta = (&h_next - &hh).abs().max();
        hh = h_next;
        gg = g_next;
        if !hh.iter().all(|v| v.is_finite()) {
            break;
        }
        if delta <= 1e-14 * (1.0 + hh.abs().max()) {
            break;
        }
    }

    let mut p = hh;
    let mut best: Option<(f64, DMatrix<f64>)> = None;
    for _ in 0..6 {
        if !p.iter().all(|v| v.is_finite()) {
            break;
        }
        let res = lqr.residual(&p);
        if best.as_ref().is_none_or(|(r, _)| res < *r) {
            best = Some((res, p.clone()));
        }
        if res <= 1e-3 * DARE_RESIDUAL_TOL {
            break;
        }
        let Ok(k) = lqr.gain(&p) else { break };
        let acl = &lqr.f + &lqr.g * &k;
        let c = &lqr.q
            + &lqr.s * &k
            + k.transpose() * lqr.s.transpose()
            + k.transpose() * &lqr.r * &k;
        match solve_stein(&acl, &symmetrize(&c)) {
            Some(next) => p = symmetrize(&next),
            None => break,
        }
    }

    let (residual, p) = best.unwrap_or((f64::INFINITY, p));
    let k = lqr.gain(&p).unwrap_or_else(|_| DMatrix::zeros(lqr.control_dim(), n));
    let rho = spectral_radius(&(&lqr.f + &lqr.g * &k));
    if residual > DARE_RESIDUAL_TOL || !(rho < 1.0) {
        return Err(AlbrekhtError::NoConvergence {
            spectral_radius: rho,
            residual,
        });
    }
    Ok(RiccatiSolution { p, k })
}

/// Solve `X = A'XA + C` through its Kronecker form.
fn solve_stein(a: &DMatrix<f64>, c: &DMatrix<f64>) -> Option<DMatrix<f64>> {
    let n = a.nrows();
    let at = a.transpose();
    let lhs = DMatrix::<f64>::identity(n * n, n * n) - at.kronecker(&at);
    let rhs = DVector::from_column_slice(c.as_slice());
    let x = lhs.lu().solve(&rhs)?;
    Some(DMatrix::from_column_slice(n, n, x.as_slice()))
}

/// Matrix of `p -> p - p(Ax)` on homogeneous polynomials of degree `k` in
/// the graded-lex basis (column `j` is the image of monomial `j`).
pub fn lyapunov_operator(a: &DMatrix<f64>, k: usize) -> Result<DMatrix<f64>, AlbrekhtError> {
    if !a.is_square() {
        return Err(AlbrekhtError::InvalidInput(format!(
            "operator matrix must be square, got {:?}",
            a.shape()
        )));
    }
    let n = a.nrows();
    let basis = MonomialBasis::shared(n, k)?;
    let forms = (0..n)
        .map(|i| PolyBundle::linear(&a.row(i).iter().copied().collect::<Vec<_>>()))
        .collect::<Result<Vec<_>, _>>()?;
    let mut sub = Substitution::new(forms)?;
    let len = basis.len();
    let mut op = DMatrix::<f64>::identity(len, len);
    for (j, exp) in basis.iter().enumerate() {
        let image = sub.monomial(exp, k)?;
        if let Some(t) = image.term(k) {
            for (i, &c) in t.coeffs().iter().enumerate() {
                op[(i, j)] -= c;
            }
        }
    }
    Ok(op)
}

fn solve_lyapunov_degree(
    acl: &DMatrix<f64>,
    degree: usize,
    rhs: &[f64],
) -> Result<Vec<f64>, AlbrekhtError> {
    let op = lyapunov_operator(acl, degree)?;
    let lu = op.lu();
    let u = lu.u();
    let diag_max = u.diagonal().abs().max();
    let diag_min = u.diagonal().abs().min();
    if !(diag_min > 1e-13 * diag_max.max(1.0)) {
        return Err(AlbrekhtError::SingularLyapunov { degree });
    }
    let sol = lu
        .solve(&DVector::from_column_slice(rhs))
        .ok_or(AlbrekhtError::SingularLyapunov { degree })?;
    Ok(sol.as_slice().to_vec())
}

/// Dense row-major matrix of double-doubles, just enough for refinement.
#[derive(Clone)]
struct DdMatrix {
    rows: usize,
    cols: usize,
    data: Vec<DoubleDouble>,
}

impl DdMatrix {
    fn from_parts(hi: &DMatrix<f64>, lo: Option<&DMatrix<f64>>) -> Self {
        let (rows, cols) = hi.shape();
        let mut data = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                let l = lo.map_or(0.0, |m| m[(i, j)]);
                data.push(DoubleDouble::new(hi[(i, j)]) + DoubleDouble::new(l));
            }
        }
        Self { rows, cols, data }
    }

    fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![DoubleDouble::ZERO; rows * cols],
        }
    }

    fn set(&mut self, i: usize, j: usize, v: DoubleDouble) {
        self.data[i * self.cols + j] = v;
    }

    fn of(m: &DMatrix<f64>) -> Self {
        Self::from_parts(m, None)
    }

    fn at(&self, i: usize, j: usize) -> DoubleDouble {
        self.data[i * self.cols + j]
    }

    fn map2(&self, o: &Self, f: impl Fn(DoubleDouble, DoubleDouble) -> DoubleDouble) -> Self {
        let data = self.data.iter().zip(&o.data).map(|(&a, &b)| f(a, b)).collect();
        Self { data, ..*self }
    }

    fn add(&self, o: &Self) -> Self {
        self.map2(o, |a, b| a + b)
    }

    fn sub(&self, o: &Self) -> Self {
        self.map2(o, |a, b| a - b)
    }

    fn mul(&self, o: &Self) -> Self {
        let mut data = vec![DoubleDouble::ZERO; self.rows * o.cols];
        for i in 0..self.rows {
            for j in 0..o.cols {
                let mut acc = DoubleDouble::ZERO;
                for k in 0..self.cols {
                    acc = acc + self.at(i, k) * o.at(k, j);
                }
                data[i * o.cols + j] = acc;
            }
        }
        Self {
            rows: self.rows,
            cols: o.cols,
            data,
        }
    }

    fn transpose(&self) -> Self {
        let mut data = Vec::with_capacity(self.data.len());
        for j in 0..self.cols {
            for i in 0..self.rows {
                data.push(self.at(i, j));
            }
        }
        Self {
            rows: self.cols,
            cols: self.rows,
            data,
        }
    }

    /// Rounded `self - base`.
    fn tail(&self, base: &DMatrix<f64>) -> DMatrix<f64> {
        DMatrix::from_fn(self.rows, self.cols, |i, j| {
            (self.at(i, j) - DoubleDouble::new(base[(i, j)])).to_f64()
        })
    }

    fn rounded(&self) -> DMatrix<f64> {
        DMatrix::from_fn(self.rows, self.cols, |i, j| self.at(i, j).to_f64())
    }
}

/// Mixed-precision refinement of a Riccati solution: residuals of the gain
/// and Stein equations are formed in double-double and the corrections
/// solved in `f64`.
fn refine_riccati(
    f: &DdMatrix,
    g: &DdMatrix,
    lqr: &LqrData,
    p0: &DMatrix<f64>,
    k0: &DMatrix<f64>,
) -> Result<(DdMatrix, DdMatrix), AlbrekhtError> {
    let (q, s, r) = (DdMatrix::of(&lqr.q), DdMatrix::of(&lqr.s), DdMatrix::of(&lqr.r));
    let mut p = DdMatrix::of(p0);
    let mut k = DdMatrix::of(k0);
    let gt = g.transpose();
    for _ in 0..4 {
        let h = r.add(&gt.mul(&p).mul(g));
        let rhs = gt.mul(&p).mul(f).add(&s.transpose());
        let chol = h.rounded().cholesky().ok_or(AlbrekhtError::SingularGain)?;
        for _ in 0..2 {
            // (R + G'PG) K = -(G'PF + S')
            let res = rhs.add(&h.mul(&k));
            k = k.sub(&DdMatrix::of(&chol.solve(&res.rounded())));
        }
        let acl = f.add(&g.mul(&k));
        let kt = k.transpose();
        let c = q
            .add(&s.mul(&k))
            .add(&kt.mul(&s.transpose()))
            .add(&kt.mul(&r).mul(&k));
        let res = c.add(&acl.transpose().mul(&p).mul(&acl)).sub(&p);
        let res = symmetrize(&res.rounded());
        let Some(dp) = solve_stein(&acl.rounded(), &res) else {
            break;
        };
        p = p.add(&DdMatrix::of(&symmetrize(&dp)));
        let half = DoubleDouble::new(0.5);
        let pt = p.transpose();
        p = p.map2(&pt, |a, b| half * (a + b));
    }
    Ok((p, k))
}

/// `(df/dx, df/du)` at the origin in double-double, by forward
/// differentiation of the exact dynamics.
fn linearize_extended<D: ScalarDynamics>(dynamics: &D) -> (DdMatrix, DdMatrix) {
    type Dd = DoubleDouble;
    let (n, m) = (dynamics.state_dim(), dynamics.control_dim());
    let column = |var: usize| {
        let seeded = |i: usize| {
            if i == var {
                Dual::seed(Dd::ZERO)
            } else {
                Dual::constant_of(Dd::ZERO)
            }
        };
        let x: Vec<Dual<Dd>> = (0..n).map(seeded).collect();
        let u: Vec<Dual<Dd>> = (n..n + m).map(seeded).collect();
        dynamics.step_scalar(&x, &u)
    };
    let mut f = DdMatrix::zeros(n, n);
    let mut g = DdMatrix::zeros(n, m);
    for var in 0..n + m {
        for (i, out) in column(var).into_iter().enumerate() {
            if var < n {
                f.set(i, var, out.deriv);
            } else {
                g.set(i, var - n, out.deriv);
            }
        }
    }
    (f, g)
}

/// Taylor polynomials of the optimal cost (degrees `2..=d+1`) and feedback
/// (degrees `1..=d`).
#[derive(Debug, Clone)]
pub struct ValueFeedbackSeries {
    pub v: PolyBundle,
    pub kappa: Vec<PolyBundle>,
    pub p: DMatrix<f64>,
    pub k: DMatrix<f64>,
    /// Low-order parts of `P` and `K`: the quadratic value and linear gain
    /// are `p + p_tail` and `k + k_tail` to roughly 30 digits.
    pub p_tail: DMatrix<f64>,
    pub k_tail: DMatrix<f64>,
    pub degree: usize,
}

impl ValueFeedbackSeries {
    pub fn state_dim(&self) -> usize {
        self.v.n()
    }

    pub fn feedback(&self, x: &[f64]) -> Result<Vec<f64>, PolyError> {
        self.kappa.iter().map(|k| k.eval(x)).collect()
    }

    /// Recompute `P` and `K` in extended precision against the exact
    /// linearization of `dynamics`, storing the difference from the `f64`
    /// coefficients in `p_tail` and `k_tail`. `cost` supplies `Q`, `S`, `R`.
    ///
    /// Only the residual diagnostics use the tails; without them the series
    /// residual bottoms out near `1e-16 |P| |x|^2`.
    pub fn refine_quadratic<D: ScalarDynamics>(
        &mut self,
        dynamics: &D,
        cost: &LqrData,
    ) -> Result<(), AlbrekhtError> {
        let (f, g) = linearize_extended(dynamics);
        let (p, k) = refine_riccati(&f, &g, cost, &self.p, &self.k)?;
        self.p_tail = p.tail(&self.p);
        self.k_tail = k.tail(&self.k);
        Ok(())
    }

    /// `V(x)` in any scalar type, with the quadratic part taken from the
    /// extended-precision `P`.
    pub fn value_scalar<T: Scalar>(&self, x: &[T]) -> Result<T, PolyError> {
        let n = self.state_dim();
        let mut acc = self.v.truncate(3, usize::MAX).eval_scalar(x)?;
        let mut quad = T::constant(0.0);
        for i in 0..n {
            let mut row = T::constant(0.0);
            for j in 0..n {
                let pij = T::constant(self.p[(i, j)]) + T::constant(self.p_tail[(i, j)]);
                row = row + pij * x[j].clone();
            }
            quad = quad + row * x[i].clone();
        }
        acc = acc + T::constant(0.5) * quad;
        Ok(acc)
    }

    /// `kappa(x)` in any scalar type, with the linear part taken from the
    /// extended-precision `K`.
    pub fn feedback_scalar<T: Scalar>(&self, x: &[T]) -> Result<Vec<T>, PolyError> {
        self.kappa
            .iter()
            .enumerate()
            .map(|(c, kc)| {
                let mut acc = kc.truncate(2, usize::MAX).eval_scalar(x)?;
                for (j, xj) in x.iter().enumerate() {
                    let kcj = T::constant(self.k[(c, j)]) + T::constant(self.k_tail[(c, j)]);
                    acc = acc + kcj * xj.clone();
                }
                Ok(acc)
            })
            .collect()
    }

    /// Coefficient dumps for `V` and each feedback channel as
    /// `(file stem, contents)` pairs.
    pub fn dump_files(&self) -> Vec<(String, String)> {
        let header = format!("n={}\nd={}\n", self.state_dim(), self.degree);
        let mut out = vec![("V".to_string(), format!("{header}{}", self.v.dump()))];
        for (i, k) in self.kappa.iter().enumerate() {
            out.push((format!("kappa_{}", i + 1), format!("{header}{}", k.dump())));
        }
        out
    }
}

/// Degree-by-degree solution for dynamics `f` (degrees `1..=d` in the stacked
/// `(x, u)` variables, `n` states) and running cost `l` (degrees `2..=d+1`).
pub fn albrekht(
    f: &TaylorMap,
    l: &PolyBundle,
    n: usize,
    d: usize,
) -> Result<ValueFeedbackSeries, AlbrekhtError> {
    if d == 0 {
        return Err(AlbrekhtError::InvalidInput("degree must be at least 1".into()));
    }
    let lqr = LqrData::from_taylor(f, l, n)?;
    let m = lqr.control_dim();
    let riccati = solve_dare(&lqr)?;
    let acl = riccati.closed_loop(&lqr);
    let gain_matrix = &lqr.r + lqr.g.transpose() * &riccati.p * &lqr.g;
    let gain_chol = gain_matrix.cholesky().ok_or(AlbrekhtError::SingularGain)?;

    let mut v = quadratic_form(&riccati.p)?;
    let mut kappa: Vec<PolyBundle> = (0..m)
        .map(|c| PolyBundle::linear(&riccati.k.row(c).iter().copied().collect::<Vec<_>>()))
        .collect::<Result<_, _>>()?;

    // derivatives of the dynamics and cost in the control directions
    let f_u: Vec<Vec<PolyBundle>> = f
        .rows()
        .iter()
        .map(|row| (0..m).map(|c| row.derivative(n + c)).collect())
        .collect::<Result<_, _>>()?;
    let l_u: Vec<PolyBundle> = (0..m).map(|c| l.derivative(n + c)).collect::<Result<_, _>>()?;

    for j in 2..=d {
        // x -> (x, kappa(x)) with the current partial feedback
        let mut inner: Vec<PolyBundle> =
            (0..n).map(|i| PolyBundle::variable(n, i)).collect::<Result<_, _>>()?;
        inner.extend(kappa.iter().cloned());
        let mut closed = Substitution::new(inner)?;

        // value equation at degree j + 1
        let f_closed: Vec<PolyBundle> = f
            .rows()
            .iter()
            .map(|row| closed.apply(row, j))
            .collect::<Result<_, _>>()?;
        let l_closed = closed.apply(l, j + 1)?;
        let mut next = Substitution::new(f_closed.clone())?;
        let v_next = next.apply(&v, j + 1)?;
        let residual = v.sub(&v_next)?.sub(&l_closed)?;
        let rhs: Vec<f64> = match residual.term(j + 1) {
            Some(t) => t.coeffs().iter().map(|c| -c).collect(),
            None => vec![0.0; MonomialBasis::shared(n, j + 1)?.len()],
        };
        let coeffs = solve_lyapunov_degree(&acl, j + 1, &rhs)?;
        v.term_mut(j + 1).coeffs_mut().copy_from_slice(&coeffs);

        // stationarity at degree j
        let grad_v: Vec<PolyBundle> = (0..n)
            .map(|i| v.derivative(i).and_then(|g| next.apply(&g, j)))
            .collect::<Result<_, _>>()?;
        let len_j = MonomialBasis::shared(n, j)?.len();
        let mut stationarity = DMatrix::<f64>::zeros(m, len_j);
        for c in 0..m {
            let mut acc = closed.apply(&l_u[c], j)?;
            for i in 0..n {
                let fu = closed.apply(&f_u[i][c], j)?;
                acc.add_scaled(&grad_v[i].mul_trunc(&fu, j)?, 1.0)?;
            }
            if let Some(t) = acc.term(j) {
                for (idx, &val) in t.coeffs().iter().enumerate() {
                    stationarity[(c, idx)] = val;
                }
            }
        }
        let solution = -gain_chol.solve(&stationarity);
        for (c, kc) in kappa.iter_mut().enumerate() {
            let t = kc.term_mut(j);
            for idx in 0..len_j {
                t.coeffs_mut()[idx] = solution[(c, idx)];
            }
        }
    }

    Ok(ValueFeedbackSeries {
        v,
        kappa,
        p: riccati.p,
        k: riccati.k,
        p_tail: DMatrix::zeros(n, n),
        k_tail: DMatrix::zeros(m, n),
        degree: d,
    })
}

/// Residuals of the value and stationarity equations at `x`, evaluated with
/// the exact dynamics and cost:
///
/// `r1 = V(x) - V(f(x, k(x))) - l(x, k(x))`,
/// `r2 = dV/dx(f(x, k(x))) df/du(x, k(x)) + dl/du(x, k(x))`.
///
/// Both are computed in double-double arithmetic (`r2` as the forward
/// derivative of `V(f(x, u)) + l(x, u)` in each control direction) so that
/// residuals far below `f64` rounding of `V` remain resolvable.
pub fn sbdp_residuals<D, L>(
    series: &ValueFeedbackSeries,
    dynamics: &D,
    cost: &L,
    x: &DVector<f64>,
) -> Result<(f64, DVector<f64>), PolyError>
where
    D: ScalarDynamics,
    L: ScalarStageCost,
{
    type Dd = DoubleDouble;
    let xd: Vec<Dd> = x.iter().map(|&v| Dd::new(v)).collect();
    let ud: Vec<Dd> = series.feedback_scalar(&xd)?;
    let next = dynamics.step_scalar(&xd, &ud);
    let r1 = series.value_scalar(&xd)? - series.value_scalar(&next)? - cost.value_scalar(&xd, &ud);

    let xdual: Vec<Dual<Dd>> = xd.iter().map(|&v| Dual::constant_of(v)).collect();
    let mut r2 = DVector::zeros(ud.len());
    for c in 0..ud.len() {
        let udual: Vec<Dual<Dd>> = ud
            .iter()
            .enumerate()
            .map(|(i, &v)| if i == c { Dual::seed(v) } else { Dual::constant_of(v) })
            .collect();
        let next = dynamics.step_scalar(&xdual, &udual);
        let total = series.value_scalar(&next)? + cost.value_scalar(&xdual, &udual);
        r2[c] = total.deriv.to_f64();
    }
    Ok((r1.to_f64(), r2))
}

/// Worst residuals at each sampled radius and the log-log slopes fitted
/// through them.
#[derive(Debug, Clone)]
pub struct ResidualOrder {
    /// `(radius, max |r1|, max |r2|)` per radius.
    pub samples: Vec<(f64, f64, f64)>,
    pub slope_r1: f64,
    pub slope_r2: f64,
}

/// `count` unit vectors in `R^n`, uniformly distributed on the sphere.
pub fn unit_directions(n: usize, count: usize, seed: u64) -> Vec<DVector<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|_| loop {
            let v = DVector::from_fn(n, |_, _| rng.sample::<f64, _>(StandardNormal));
            let norm = v.norm();
            if norm > 1e-8 {
                break v / norm;
            }
        })
        .collect()
}

fn log_log_slope(points: &[(f64, f64)]) -> f64 {
    let pts: Vec<(f64, f64)> = points
        .iter()
        .filter(|(_, y)| *y > 0.0)
        .map(|&(x, y)| (x.ln(), y.ln()))
        .collect();
    if pts.len() < 2 {
        return f64::NAN;
    }
    let k = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / k;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / k;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    sxy / sxx
}

/// Sample [`sbdp_residuals`] on spheres of the given radii and fit the
/// order of decay.
pub fn residual_order<D, L>(
    series: &ValueFeedbackSeries,
    dynamics: &D,
    cost: &L,
    radii: &[f64],
    directions: &[DVector<f64>],
) -> Result<ResidualOrder, PolyError>
where
    D: ScalarDynamics,
    L: ScalarStageCost,
{
    let mut samples = Vec::with_capacity(radii.len());
    for &radius in radii {
        let (mut m1, mut m2) = (0.0f64, 0.0f64);
        for dir in directions {
            let (r1, r2) = sbdp_residuals(series, dynamics, cost, &(dir * radius))?;
            m1 = m1.max(r1.abs());
            m2 = m2.max(r2.norm());
        }
        samples.push((radius, m1, m2));
    }
    let r1: Vec<_> = samples.iter().map(|s| (s.0, s.1)).collect();
    let r2: Vec<_> = samples.iter().map(|s| (s.0, s.2)).collect();
    Ok(ResidualOrder {
        slope_r1: log_log_slope(&r1),
        slope_r2: log_log_slope(&r2),
        samples,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{LinearDynamics, QuadraticCost};

    fn scalar(f: f64, g: f64, q: f64, s: f64, r: f64) -> LqrData {
        let e = |v| DMatrix::from_element(1, 1, v);
        LqrData {
            f: e(f),
            g: e(g),
            q: e(q),
            s: e(s),
            r: e(r),
        }
    }

    #[test]
    fn scalar_golden_ratio() {
        let lqr = scalar(1.0, 1.0, 1.0, 0.0, 1.0);
        let sol = solve_dare(&lqr).unwrap();
        let phi = (1.0 + 5f64.sqrt()) / 2.0;
        assert!((sol.p[(0, 0)] - phi).abs() < 1e-12);
        assert!((sol.k[(0, 0)] + 1.0 / phi).abs() < 1e-12);
        assert!((sol.closed_loop(&lqr)[(0, 0)] - (1.0 - 1.0 / phi)).abs() < 1e-12);
        assert!(lqr.residual(&sol.p) < 1e-12);
    }

    #[test]
    fn zero_dynamics_gives_q() {
        let q = DMatrix::from_row_slice(2, 2, &[2.0, 0.5, 0.5, 1.0]);
        let lqr = LqrData {
            f: DMatrix::zeros(2, 2),
            g: DMatrix::from_row_slice(2, 1, &[1.0, -3.0]),
            q: q.clone(),
            s: DMatrix::zeros(2, 1),
            r: DMatrix::from_element(1, 1, 0.7),
        };
        let sol = solve_dare(&lqr).unwrap();
        assert!((&sol.p - q).abs().max() < 1e-12);
        assert!(sol.k.abs().max() < 1e-12);
    }

    #[test]
    fn rejects_indefinite_r() {
        let lqr = scalar(1.0, 1.0, 1.0, 0.0, -1.0);
        assert!(matches!(solve_dare(&lqr), Err(AlbrekhtError::RNotPositiveDefinite)));
    }

    #[test]
    fn unstabilizable_reports_spectral_radius() {
        // unstable mode the input cannot reach
        let lqr = LqrData {
            f: DMatrix::from_row_slice(2, 2, &[2.0, 0.0, 0.0, 0.5]),
            g: DMatrix::from_row_slice(2, 1, &[0.0, 1.0]),
            q: DMatrix::identity(2, 2),
            s: DMatrix::zeros(2, 1),
            r: DMatrix::identity(1, 1),
        };
        match solve_dare(&lqr) {
            Err(AlbrekhtError::NoConvergence { spectral_radius, .. }) => {
                assert!(spectral_radius >= 1.0)
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn cross_term_matches_substitution() {
        // with S the solution equals the one for F - G R^-1 S', Q - S R^-1 S'
        let lqr = LqrData {
            f: DMatrix::from_row_slice(2, 2, &[1.1, 0.2, -0.3, 0.9]),
            g: DMatrix::from_row_slice(2, 1, &[0.0, 1.0]),
            q: DMatrix::from_row_slice(2, 2, &[2.0, 0.1, 0.1, 1.0]),
            s: DMatrix::from_row_slice(2, 1, &[0.2, -0.1]),
            r: DMatrix::from_element(1, 1, 1.0),
        };
        let sol = solve_dare(&lqr).unwrap();
        assert!(lqr.residual(&sol.p) < 1e-12);
        assert!(spectral_radius(&sol.closed_loop(&lqr)) < 1.0);
    }

    #[test]
    fn lyapunov_operator_scalar() {
        let a = DMatrix::from_element(1, 1, 0.7);
        let op = lyapunov_operator(&a, 3).unwrap();
        assert_eq!(op.shape(), (1, 1));
        assert!((op[(0, 0)] - (1.0 - 0.343)).abs() < 1e-15);
    }

    #[test]
    fn lyapunov_operator_zero_matrix_is_identity() {
        for k in 1..=4 {
            let op = lyapunov_operator(&DMatrix::zeros(3, 3), k).unwrap();
            assert_eq!(op, DMatrix::identity(op.nrows(), op.ncols()));
        }
    }

    /// `x+ = x + u + x^2`, `l = (x^2 + u^2)/2`.
    fn scalar_quadratic_map() -> (TaylorMap, PolyBundle) {
        let mut row = PolyBundle::zero(2);
        row.set_coeff(&[1, 0], 1.0).unwrap();
        row.set_coeff(&[0, 1], 1.0).unwrap();
        row.set_coeff(&[2, 0], 1.0).unwrap();
        let f = TaylorMap::new(vec![row]).unwrap();
        let l = QuadraticCost::isotropic(1, 1, 1.0).to_poly().unwrap();
        (f, l)
    }

    #[test]
    fn scalar_cubic_value_coefficient() {
        let (f, l) = scalar_quadratic_map();
        let s = albrekht(&f, &l, 1, 2).unwrap();
        let p = s.p[(0, 0)];
        let a = 1.0 + s.k[(0, 0)];
        let expected = p * a / (1.0 - a.powi(3));
        assert!((s.v.coeff(&[3]) - expected).abs() < 1e-12);
        assert!((s.v.coeff(&[3]) - 0.6546).abs() < 1e-3);
    }

    #[test]
    fn linear_quadratic_has_no_higher_terms() {
        let lin = LinearDynamics {
            a: DMatrix::from_row_slice(2, 2, &[1.0, 0.1, 0.2, 0.95]),
            b: DMatrix::from_row_slice(2, 1, &[0.0, 0.1]),
        };
        let rows = (0..2)
            .map(|i| {
                let mut coeffs = lin.a.row(i).iter().copied().collect::<Vec<_>>();
                coeffs.extend(lin.b.row(i).iter().copied());
                PolyBundle::linear(&coeffs).unwrap()
            })
            .collect();
        let f = TaylorMap::new(rows).unwrap();
        let cost = QuadraticCost::isotropic(2, 1, 1.0);
        let l = cost.to_poly().unwrap();
        let s = albrekht(&f, &l, 2, 3).unwrap();
        for deg in [3, 4] {
            assert!(s.v.term(deg).unwrap().max_abs() < 1e-13);
        }
        for k in &s.kappa {
            for deg in [2, 3] {
                assert!(k.term(deg).unwrap().max_abs() < 1e-13);
            }
        }
        for x in [[0.3, -0.2], [1.5, 2.0]] {
            let (r1, r2) = sbdp_residuals(&s, &lin, &cost, &DVector::from_column_slice(&x)).unwrap();
            assert!(r1.abs() < 1e-10 && r2.norm() < 1e-10);
        }
        let (r1, r2) = sbdp_residuals(&s, &lin, &cost, &DVector::zeros(2)).unwrap();
        assert_eq!(r1, 0.0);
        assert_eq!(r2.norm(), 0.0);
    }

    #[test]
    fn dump_files_have_headers() {
        let (f, l) = scalar_quadratic_map();
        let s = albrekht(&f, &l, 1, 2).unwrap();
        let files = s.dump_files();
        assert_eq!(files.len(), 2);
        assert_eq!(files[0].0, "V");
        assert!(files[0].1.starts_with("n=1\nd=2\n"));
        let back = PolyBundle::parse_dump(1, &files[0].1).unwrap();
        assert_eq!(back, s.v);
    }
}
