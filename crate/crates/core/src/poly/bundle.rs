use std::fmt::Write as _;

use nalgebra::DMatrix;

use super::basis::MonomialBasis;
use crate::numeric::Scalar;
use super::homogeneous::HomogeneousPoly;
use super::PolyError;

/// A polynomial with homogeneous terms over a contiguous degree range.
///
/// An empty term list is the zero polynomial.
#[derive(Debug, Clone, PartialEq)]
pub struct PolyBundle {
    n: usize,
    lo: usize,
    terms: Vec<HomogeneousPoly>,
}

impl PolyBundle {
    pub fn zero(n: usize) -> Self {
        Self {
            n,
            lo: 0,
            terms: Vec::new(),
        }
    }

    /// Zero coefficients over degrees `lo..=hi`.
    pub fn zeros(n: usize, lo: usize, hi: usize) -> Result<Self, PolyError> {
        let terms = (lo..=hi)
            .map(|d| HomogeneousPoly::zeros(n, d))
            .collect::<Result<Vec<_>, _>>()?;
        Ok(Self { n, lo, terms })
    }

    pub fn constant(n: usize, c: f64) -> Result<Self, PolyError> {
        Ok(Self {
            n,
            lo: 0,
            terms: vec![HomogeneousPoly::from_coeffs(n, 0, vec![c])?],
        })
    }

    /// The coordinate function `x_i`.
    pub fn variable(n: usize, i: usize) -> Result<Self, PolyError> {
        if i >= n {
            return Err(PolyError::UnknownVariable { index: i, n });
        }
        let mut coeffs = vec![0.0; n];
        coeffs[i] = 1.0;
        Ok(Self {
            n,
            lo: 1,
            terms: vec![HomogeneousPoly::from_coeffs(n, 1, coeffs)?],
        })
    }

    /// The linear form `sum_j row[j] x_j`.
    pub fn linear(row: &[f64]) -> Result<Self, PolyError> {
        let n = row.len();
        Ok(Self {
            n,
            lo: 1,
            terms: vec![HomogeneousPoly::from_coeffs(n, 1, row.to_vec())?],
        })
    }

    /// Build from consecutive homogeneous terms, lowest degree first.
    pub fn from_terms(terms: Vec<HomogeneousPoly>) -> Result<Self, PolyError> {
        let Some(first) = terms.first() else {
            return Err(PolyError::ZeroVariables);
        };
        let n = first.n();
        let lo = first.degree();
        for (k, t) in terms.iter().enumerate() {
            if t.n() != n {
                return Err(PolyError::DimensionMismatch {
                    expected: n,
                    found: t.n(),
                });
            }
            if t.degree() != lo + k {
                return Err(PolyError::NonContiguous {
                    lo,
                    hi: lo + k,
                    other_lo: t.degree(),
                    other_hi: t.degree(),
                });
            }
        }
        Ok(Self { n, lo, terms })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn is_zero(&self) -> bool {
        self.terms.iter().all(HomogeneousPoly::is_zero)
    }

    /// Stored degree range, `None` for the empty bundle.
    pub fn degree_range(&self) -> Option<(usize, usize)> {
        if self.terms.is_empty() {
            None
        } else {
            Some((self.lo, self.lo + self.terms.len() - 1))
        }
    }

    pub fn lo(&self) -> usize {
        self.lo
    }

    /// Highest stored degree (0 for the empty bundle).
    pub fn hi(&self) -> usize {
        self.degree_range().map_or(0, |(_, hi)| hi)
    }

    pub fn terms(&self) -> &[HomogeneousPoly] {
        &self.terms
    }

    pub fn term(&self, degree: usize) -> Option<&HomogeneousPoly> {
        degree
            .checked_sub(self.lo)
            .and_then(|k| self.terms.get(k))
    }

    /// Mutable access to one degree, widening the stored range if needed.
    pub fn term_mut(&mut self, degree: usize) -> &mut HomogeneousPoly {
        self.widen(degree, degree);
        &mut self.terms[degree - self.lo]
    }

    pub fn coeff(&self, exp: &[u32]) -> f64 {
        let d: u32 = exp.iter().sum();
        self.term(d as usize).map_or(0.0, |t| t.coeff(exp))
    }

    pub fn set_coeff(&mut self, exp: &[u32], value: f64) -> Result<(), PolyError> {
        if exp.len() != self.n {
            return Err(PolyError::DimensionMismatch {
                expected: self.n,
                found: exp.len(),
            });
        }
        let d = exp.iter().sum::<u32>() as usize;
        let t = self.term_mut(d);
        let idx = t.basis().index_of(exp).expect("degree matches");
        t.coeffs_mut()[idx] = value;
        Ok(())
    }

    fn widen(&mut self, lo: usize, hi: usize) {
        let n = self.n;
        if self.terms.is_empty() {
            self.lo = lo;
            self.terms = (lo..=hi)
                .map(|d| HomogeneousPoly::zeros(n, d).expect("n >= 1"))
                .collect();
            return;
        }
        let cur_hi = self.hi();
        if lo < self.lo {
            let mut front: Vec<_> = (lo..self.lo)
                .map(|d| HomogeneousPoly::zeros(n, d).expect("n >= 1"))
                .collect();
            front.append(&mut self.terms);
            self.terms = front;
            self.lo = lo;
        }
        for d in cur_hi + 1..=hi {
            self.terms.push(HomogeneousPoly::zeros(n, d).expect("n >= 1"));
        }
    }

    fn check_n(&self, other: &PolyBundle) -> Result<(), PolyError> {
        if self.n != other.n {
            return Err(PolyError::DimensionMismatch {
                expected: self.n,
                found: other.n,
            });
        }
        Ok(())
    }

    /// `self += s * other`.
    pub fn add_scaled(&mut self, other: &PolyBundle, s: f64) -> Result<(), PolyError> {
        self.check_n(other)?;
        let Some((lo, hi)) = other.degree_range() else {
            return Ok(());
        };
        self.widen(lo, hi);
        for t in &other.terms {
            let k = t.degree() - self.lo;
            self.terms[k].add_scaled(t, s);
        }
        Ok(())
    }

    pub fn add(&self, other: &PolyBundle) -> Result<PolyBundle, PolyError> {
        let mut out = self.clone();
        out.add_scaled(other, 1.0)?;
        Ok(out)
    }

    pub fn sub(&self, other: &PolyBundle) -> Result<PolyBundle, PolyError> {
        let mut out = self.clone();
        out.add_scaled(other, -1.0)?;
        Ok(out)
    }

    pub fn scaled(&self, s: f64) -> PolyBundle {
        let mut out = self.clone();
        out.terms.iter_mut().for_each(|t| t.scale(s));
        out
    }

    /// Keep only degrees in `lo..=hi`.
    pub fn truncate(&self, lo: usize, hi: usize) -> PolyBundle {
        let terms: Vec<_> = self
            .terms
            .iter()
            .filter(|t| (lo..=hi).contains(&t.degree()))
            .cloned()
            .collect();
        let lo = terms.first().map_or(0, |t| t.degree());
        PolyBundle {
            n: self.n,
            lo,
            terms,
        }
    }

    /// Product with every term of degree above `d_max` dropped.
    pub fn mul_trunc(&self, other: &PolyBundle, d_max: usize) -> Result<PolyBundle, PolyError> {
        self.check_n(other)?;
        let mut out = PolyBundle::zero(self.n);
        let (Some((alo, _)), Some((blo, _))) = (self.degree_range(), other.degree_range()) else {
            return Ok(out);
        };
        if alo + blo > d_max {
            return Ok(out);
        }
        let hi = (self.hi() + other.hi()).min(d_max);
        out.widen(alo + blo, hi);
        for a in &self.terms {
            for b in &other.terms {
                let d = a.degree() + b.degree();
                if d > d_max {
                    break;
                }
                let k = d - out.lo;
                a.mul_into(b, &mut out.terms[k]);
            }
        }
        Ok(out)
    }

    fn powers(&self, x: &[f64]) -> Vec<Vec<f64>> {
        let hi = self.hi();
        x.iter()
            .map(|&xi| {
                let mut p = Vec::with_capacity(hi + 1);
                let mut acc = 1.0;
                for _ in 0..=hi {
                    p.push(acc);
                    acc *= xi;
                }
                p
            })
            .collect()
    }

    pub fn eval(&self, x: &[f64]) -> Result<f64, PolyError> {
        if x.len() != self.n {
            return Err(PolyError::DimensionMismatch {
                expected: self.n,
                found: x.len(),
            });
        }
        let powers = self.powers(x);
        Ok(self.terms.iter().map(|t| t.eval_powers(&powers)).sum())
    }

    /// Value and gradient at `x`.
    pub fn eval_grad(&self, x: &[f64]) -> Result<(f64, Vec<f64>), PolyError> {
        if x.len() != self.n {
            return Err(PolyError::DimensionMismatch {
                expected: self.n,
                found: x.len(),
            });
        }
        let powers = self.powers(x);
        let value = self.terms.iter().map(|t| t.eval_powers(&powers)).sum();
        let mut grad = vec![0.0; self.n];
        for t in &self.terms {
            t.grad_powers(&powers, &mut grad);
        }
        Ok((value, grad))
    }

    /// Evaluate in any scalar type (coefficients are lifted with
    /// [`Scalar::constant`]).
    pub fn eval_scalar<T: Scalar>(&self, x: &[T]) -> Result<T, PolyError> {
        if x.len() != self.n {
            return Err(PolyError::DimensionMismatch {
                expected: self.n,
                found: x.len(),
            });
        }
        let hi = self.hi();
        let powers: Vec<Vec<T>> = x
            .iter()
            .map(|xi| {
                let mut p = vec![T::constant(1.0)];
                for e in 1..=hi {
                    let next = p[e - 1].clone() * xi.clone();
                    p.push(next);
                }
                p
            })
            .collect();
        let mut acc = T::constant(0.0);
        for t in &self.terms {
            for (exp, &c) in t.basis().iter().zip(t.coeffs()) {
                if c == 0.0 {
                    continue;
                }
                let mut term = T::constant(c);
                for (v, &e) in exp.iter().enumerate() {
                    if e > 0 {
                        term = term * powers[v][e as usize].clone();
                    }
                }
                acc = acc + term;
            }
        }
        Ok(acc)
    }

    /// Partial derivative with respect to variable `var`.
    pub fn derivative(&self, var: usize) -> Result<PolyBundle, PolyError> {
        if var >= self.n {
            return Err(PolyError::UnknownVariable {
                index: var,
                n: self.n,
            });
        }
        let mut out = PolyBundle::zero(self.n);
        let mut buf = vec![0u32; self.n];
        for t in &self.terms {
            if t.degree() == 0 {
                continue;
            }
            let target = out.term_mut(t.degree() - 1);
            for (exp, &c) in t.basis().iter().zip(t.coeffs()) {
                if c == 0.0 || exp[var] == 0 {
                    continue;
                }
                buf.copy_from_slice(exp);
                buf[var] -= 1;
                let idx = super::rank(&buf);
                target.coeffs_mut()[idx] += c * exp[var] as f64;
            }
        }
        Ok(out)
    }

    /// `q(z) = p(A z)`: `A` has one row per variable of `self` and one column
    /// per new variable.
    pub fn compose_linear(&self, a: &DMatrix<f64>) -> Result<PolyBundle, PolyError> {
        if a.nrows() != self.n {
            return Err(PolyError::DimensionMismatch {
                expected: self.n,
                found: a.nrows(),
            });
        }
        let maps = (0..a.nrows())
            .map(|i| PolyBundle::linear(&a.row(i).iter().copied().collect::<Vec<_>>()))
            .collect::<Result<Vec<_>, _>>()?;
        let mut sub = Substitution::new(maps)?;
        sub.apply(self, self.hi())
    }

    /// Substitute `maps[i]` for variable `i`, truncating at `d_max`.
    pub fn compose(&self, maps: &[PolyBundle], d_max: usize) -> Result<PolyBundle, PolyError> {
        Substitution::new(maps.to_vec())?.apply(self, d_max)
    }

    /// Plain-text dump, one line per term: `degree (e1,..,en) coefficient`.
    pub fn dump(&self) -> String {
        let mut s = String::new();
        for t in &self.terms {
            for (exp, c) in t.basis().iter().zip(t.coeffs()) {
                let tuple: Vec<String> = exp.iter().map(u32::to_string).collect();
                let _ = writeln!(s, "{} ({}) {:.16e}", t.degree(), tuple.join(","), c);
            }
        }
        s
    }

    /// Parse the output of [`PolyBundle::dump`] for `n` variables. Lines that
    /// are blank or start with `#` or contain `=` are skipped.
    pub fn parse_dump(n: usize, text: &str) -> Result<PolyBundle, PolyError> {
        let mut out = PolyBundle::zero(n);
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') || line.contains('=') {
                continue;
            }
            let err = |reason: &str| PolyError::Parse {
                line: lineno + 1,
                reason: reason.to_string(),
            };
            let mut parts = line.split_whitespace();
            let (Some(deg), Some(tuple), Some(coeff), None) =
                (parts.next(), parts.next(), parts.next(), parts.next())
            else {
                return Err(err("expected three fields"));
            };
            let deg: usize = deg.parse().map_err(|_| err("bad degree"))?;
            let exp = tuple
                .strip_prefix('(')
                .and_then(|t| t.strip_suffix(')'))
                .ok_or_else(|| err("bad exponent tuple"))?
                .split(',')
                .map(|e| e.parse::<u32>())
                .collect::<Result<Vec<_>, _>>()
                .map_err(|_| err("bad exponent"))?;
            if exp.len() != n || exp.iter().sum::<u32>() as usize != deg {
                return Err(err("exponent tuple does not match degree/arity"));
            }
            let c: f64 = coeff.parse().map_err(|_| err("bad coefficient"))?;
            out.set_coeff(&exp, c)?;
        }
        Ok(out)
    }
}

/// Substitution of polynomials (without constant terms) into polynomials,
/// memoising the monomial products `g^alpha` so several polynomials can be
/// composed with the same inner map cheaply.
#[derive(Debug, Clone)]
pub struct Substitution {
    maps: Vec<PolyBundle>,
    n_out: usize,
    // products[k][rank(alpha)] for |alpha| = k, truncated at `trunc`
    products: Vec<Vec<PolyBundle>>,
    trunc: usize,
}

impl Substitution {
    pub fn new(maps: Vec<PolyBundle>) -> Result<Self, PolyError> {
        let Some(first) = maps.first() else {
            return Err(PolyError::ZeroVariables);
        };
        let n_out = first.n();
        for (i, m) in maps.iter().enumerate() {
            if m.n() != n_out {
                return Err(PolyError::DimensionMismatch {
                    expected: n_out,
                    found: m.n(),
                });
            }
            if m.term(0).is_some_and(|t| !t.is_zero()) {
                return Err(PolyError::ConstantInSubstitution { index: i });
            }
        }
        let maps = maps.into_iter().map(|m| m.truncate(1, usize::MAX)).collect();
        Ok(Self {
            maps,
            n_out,
            products: Vec::new(),
            trunc: 0,
        })
    }

    pub fn n_in(&self) -> usize {
        self.maps.len()
    }

    pub fn n_out(&self) -> usize {
        self.n_out
    }

    fn ensure(&mut self, degree: usize, trunc: usize) -> Result<(), PolyError> {
        if trunc != self.trunc {
            self.products.clear();
            self.trunc = trunc;
        }
        let n_in = self.maps.len();
        while self.products.len() <= degree {
            let k = self.products.len();
            if k == 0 {
                self.products.push(vec![PolyBundle::constant(self.n_out, 1.0)?]);
                continue;
            }
            let basis = MonomialBasis::shared(n_in, k)?;
            let mut level = Vec::with_capacity(basis.len());
            let mut parent = vec![0u32; n_in];
            for exp in basis.iter() {
                // peel off the last variable present
                let j = exp.iter().rposition(|&e| e > 0).expect("degree >= 1");
                parent.copy_from_slice(exp);
                parent[j] -= 1;
                let p = &self.products[k - 1][super::rank(&parent)];
                level.push(p.mul_trunc(&self.maps[j], trunc)?);
            }
            self.products.push(level);
        }
        Ok(())
    }

    /// `g^exp` truncated at `d_max`.
    pub fn monomial(&mut self, exp: &[u32], d_max: usize) -> Result<PolyBundle, PolyError> {
        let k = exp.iter().sum::<u32>() as usize;
        self.ensure(k, d_max)?;
        Ok(self.products[k][super::rank(exp)].clone())
    }

    /// `p(g(z))` truncated at `d_max`.
    pub fn apply(&mut self, p: &PolyBundle, d_max: usize) -> Result<PolyBundle, PolyError> {
        if p.n() != self.maps.len() {
            return Err(PolyError::DimensionMismatch {
                expected: self.maps.len(),
                found: p.n(),
            });
        }
        let mut out = PolyBundle::zero(self.n_out);
        // the substituted maps have no constant terms, so a degree-k monomial
        // contributes only at degrees >= k
        let top = p.hi().min(d_max);
        self.ensure(top, d_max)?;
        for t in p.terms() {
            let k = t.degree();
            if k > top {
                break;
            }
            for (i, &c) in t.coeffs().iter().enumerate() {
                if c != 0.0 {
                    out.add_scaled(&self.products[k][i], c)?;
                }
            }
        }
        Ok(out)
    }
}

/// Vector-valued polynomial map, one [`PolyBundle`] per output coordinate.
#[derive(Debug, Clone, PartialEq)]
pub struct TaylorMap {
    n_in: usize,
    rows: Vec<PolyBundle>,
}

impl TaylorMap {
    pub fn new(rows: Vec<PolyBundle>) -> Result<Self, PolyError> {
        let Some(first) = rows.first() else {
            return Err(PolyError::ZeroVariables);
        };
        let n_in = first.n();
        for r in &rows {
            if r.n() != n_in {
                return Err(PolyError::DimensionMismatch {
                    expected: n_in,
                    found: r.n(),
                });
            }
        }
        Ok(Self { n_in, rows })
    }

    pub fn n_in(&self) -> usize {
        self.n_in
    }

    pub fn n_out(&self) -> usize {
        self.rows.len()
    }

    pub fn rows(&self) -> &[PolyBundle] {
        &self.rows
    }

    pub fn eval(&self, x: &[f64]) -> Result<Vec<f64>, PolyError> {
        self.rows.iter().map(|r| r.eval(x)).collect()
    }

    /// Jacobian of the degree-1 part: `J[i][j] = coeff of z_j in row i`.
    pub fn linear_part(&self) -> DMatrix<f64> {
        DMatrix::from_fn(self.n_out(), self.n_in, |i, j| {
            self.rows[i].term(1).map_or(0.0, |t| t.coeffs()[j])
        })
    }

    /// Keep only degrees `lo..=hi` of every row.
    pub fn truncate(&self, lo: usize, hi: usize) -> TaylorMap {
        TaylorMap {
            n_in: self.n_in,
            rows: self.rows.iter().map(|r| r.truncate(lo, hi)).collect(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn poly(n: usize, terms: &[(&[u32], f64)]) -> PolyBundle {
        let mut p = PolyBundle::zero(n);
        for (e, c) in terms {
            p.set_coeff(e, *c).unwrap();
        }
        p
    }

    #[test]
    fn eval_examples() {
        let p = poly(2, &[(&[2, 0], 1.0), (&[0, 2], 1.0)]);
        assert_eq!(p.eval(&[3.0, 4.0]).unwrap(), 25.0);
        assert_eq!(p.eval(&[0.0, 0.0]).unwrap(), 0.0);
        let q = poly(2, &[(&[1, 1], 1.0)]);
        assert_eq!(q.eval(&[2.0, 5.0]).unwrap(), 10.0);
        assert!(matches!(
            q.eval(&[1.0]),
            Err(PolyError::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn mul_trunc_examples() {
        let x = PolyBundle::variable(1, 0).unwrap();
        let xx = x.mul_trunc(&x, 2).unwrap();
        assert_eq!(xx.coeff(&[2]), 1.0);
        assert_eq!(xx.degree_range(), Some((2, 2)));

        let a = poly(1, &[(&[1], 1.0), (&[2], 1.0)]);
        let p = a.mul_trunc(&x, 2).unwrap();
        assert_eq!(p.coeff(&[2]), 1.0);
        assert_eq!(p.coeff(&[3]), 0.0);
        assert_eq!(p.hi(), 2);

        let one_plus = poly(1, &[(&[0], 1.0), (&[1], 1.0)]);
        let one_minus = poly(1, &[(&[0], 1.0), (&[1], -1.0)]);
        let p = one_plus.mul_trunc(&one_minus, 2).unwrap();
        assert_eq!(p.coeff(&[0]), 1.0);
        assert_eq!(p.coeff(&[1]), 0.0);
        assert_eq!(p.coeff(&[2]), -1.0);

        let y = PolyBundle::variable(2, 0).unwrap();
        assert!(x.mul_trunc(&y, 3).is_err());
    }

    #[test]
    fn compose_linear_examples() {
        let p = poly(2, &[(&[2, 0], 1.0)]);
        let swap = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 1.0, 0.0]);
        let q = p.compose_linear(&swap).unwrap();
        assert_eq!(q.coeff(&[0, 2]), 1.0);
        assert_eq!(q.coeff(&[2, 0]), 0.0);

        let r = poly(2, &[(&[3, 0], 1.5), (&[1, 1], -2.0), (&[0, 1], 0.25)]);
        let id = DMatrix::identity(2, 2);
        assert_eq!(r.compose_linear(&id).unwrap(), r);

        let x = PolyBundle::variable(1, 0).unwrap();
        let two = DMatrix::from_element(1, 1, 2.0);
        assert_eq!(x.compose_linear(&two).unwrap().coeff(&[1]), 2.0);

        assert!(p.compose_linear(&DMatrix::identity(3, 3)).is_err());
    }

    #[test]
    fn derivative_of_monomials() {
        let p = poly(2, &[(&[3, 1], 2.0), (&[0, 2], 1.0)]);
        let dx = p.derivative(0).unwrap();
        assert_eq!(dx.coeff(&[2, 1]), 6.0);
        let dy = p.derivative(1).unwrap();
        assert_eq!(dy.coeff(&[3, 0]), 2.0);
        assert_eq!(dy.coeff(&[0, 1]), 2.0);
    }

    #[test]
    fn eval_grad_matches_derivatives() {
        let p = poly(3, &[(&[2, 1, 0], 1.5), (&[0, 0, 3], -0.5), (&[1, 1, 1], 2.0), (&[1, 0, 0], 3.0)]);
        let x = [0.3, -1.2, 0.7];
        let (v, g) = p.eval_grad(&x).unwrap();
        assert!((v - p.eval(&x).unwrap()).abs() < 1e-14);
        for i in 0..3 {
            let d = p.derivative(i).unwrap().eval(&x).unwrap();
            assert!((g[i] - d).abs() < 1e-12);
        }
    }

    #[test]
    fn compose_with_polynomials() {
        // p(y) = y^2 with y = x + x^2: x^2 + 2x^3 + x^4
        let p = poly(1, &[(&[2], 1.0)]);
        let g = poly(1, &[(&[1], 1.0), (&[2], 1.0)]);
        let q = p.compose(&[g.clone()], 4).unwrap();
        assert_eq!(q.coeff(&[2]), 1.0);
        assert_eq!(q.coeff(&[3]), 2.0);
        assert_eq!(q.coeff(&[4]), 1.0);
        let q3 = p.compose(&[g], 3).unwrap();
        assert_eq!(q3.hi(), 3);

        let c = poly(1, &[(&[0], 1.0), (&[1], 1.0)]);
        assert!(matches!(
            p.compose(&[c], 3),
            Err(PolyError::ConstantInSubstitution { index: 0 })
        ));
    }

    #[test]
    fn dump_round_trip() {
        let p = poly(2, &[(&[2, 0], 1.0 / 3.0), (&[1, 1], -2.5e-7), (&[0, 3], 1e10)]);
        let text = p.dump();
        assert!(text.starts_with("2 (2,0) 3.3333333333333331e-1\n"));
        let q = PolyBundle::parse_dump(2, &text).unwrap();
        assert_eq!(p, q);
        assert!(PolyBundle::parse_dump(2, "2 (1,0) 1.0\n").is_err());
    }
}
