//! Scalar expression trees and their Taylor expansion by jet propagation.
//!
//! Model code is written once against [`Scalar`] and then evaluated either
//! on `f64` or on [`Expr`]; an `Expr` can be expanded with [`jet_lift`].

use std::collections::HashMap;
use std::ops::{Add, Div, Mul, Neg, Sub};
use std::sync::Arc;

pub use crate::numeric::Scalar;

use super::bundle::PolyBundle;
use super::jet::Jet;
use super::PolyError;

#[derive(Debug)]
enum Node {
    Const(f64),
    Var(usize),
    Add(Expr, Expr),
    Sub(Expr, Expr),
    Mul(Expr, Expr),
    Div(Expr, Expr),
    Neg(Expr),
    Sin(Expr),
    Cos(Expr),
}

/// Immutable, cheaply cloned expression DAG.
#[derive(Debug, Clone)]
pub struct Expr(Arc<Node>);

impl Expr {
    pub fn var(i: usize) -> Self {
        Expr(Arc::new(Node::Var(i)))
    }

    fn node(node: Node) -> Self {
        Expr(Arc::new(node))
    }

    /// Plain evaluation.
    pub fn eval(&self, x: &[f64]) -> Result<f64, PolyError> {
        Ok(match &*self.0 {
            Node::Const(c) => *c,
            Node::Var(i) => *x.get(*i).ok_or(PolyError::UnknownVariable {
                index: *i,
                n: x.len(),
            })?,
            Node::Add(a, b) => a.eval(x)? + b.eval(x)?,
            Node::Sub(a, b) => a.eval(x)? - b.eval(x)?,
            Node::Mul(a, b) => a.eval(x)? * b.eval(x)?,
            Node::Div(a, b) => a.eval(x)? / b.eval(x)?,
            Node::Neg(a) => -a.eval(x)?,
            Node::Sin(a) => a.eval(x)?.sin(),
            Node::Cos(a) => a.eval(x)?.cos(),
        })
    }

    fn eval_jet(
        &self,
        seeds: &[Jet],
        memo: &mut HashMap<*const Node, Jet>,
    ) -> Result<Jet, PolyError> {
        let key = Arc::as_ptr(&self.0);
        if let Some(j) = memo.get(&key) {
            return Ok(j.clone());
        }
        let first = &seeds[0];
        let jet = match &*self.0 {
            Node::Const(c) => Jet::constant(first.n(), first.order(), *c)?,
            Node::Var(i) => seeds
                .get(*i)
                .cloned()
                .ok_or(PolyError::UnknownVariable {
                    index: *i,
                    n: seeds.len(),
                })?,
            Node::Add(a, b) => a.eval_jet(seeds, memo)?.add(&b.eval_jet(seeds, memo)?)?,
            Node::Sub(a, b) => a.eval_jet(seeds, memo)?.sub(&b.eval_jet(seeds, memo)?)?,
            Node::Mul(a, b) => a.eval_jet(seeds, memo)?.mul(&b.eval_jet(seeds, memo)?)?,
            Node::Div(a, b) => a.eval_jet(seeds, memo)?.div(&b.eval_jet(seeds, memo)?)?,
            Node::Neg(a) => a.eval_jet(seeds, memo)?.scale(-1.0),
            Node::Sin(a) => a.eval_jet(seeds, memo)?.sin()?,
            Node::Cos(a) => a.eval_jet(seeds, memo)?.cos()?,
        };
        memo.insert(key, jet.clone());
        Ok(jet)
    }
}

impl Scalar for Expr {
    fn constant(v: f64) -> Self {
        Expr::node(Node::Const(v))
    }
    fn sin(&self) -> Self {
        Expr::node(Node::Sin(self.clone()))
    }
    fn cos(&self) -> Self {
        Expr::node(Node::Cos(self.clone()))
    }
}

macro_rules! binop {
    ($trait:ident, $method:ident, $node:ident) => {
        impl $trait for Expr {
            type Output = Expr;
            fn $method(self, rhs: Expr) -> Expr {
                Expr::node(Node::$node(self, rhs))
            }
        }
    };
}

binop!(Add, add, Add);
binop!(Sub, sub, Sub);
binop!(Mul, mul, Mul);
binop!(Div, div, Div);

impl Neg for Expr {
    type Output = Expr;
    fn neg(self) -> Expr {
        Expr::node(Node::Neg(self))
    }
}

/// Taylor expansion of `expr` about `point` to degree `d`, in the deviation
/// variables `dz = z - point`. The result covers degrees `0..=d`.
pub fn jet_lift(expr: &Expr, point: &[f64], d: usize) -> Result<PolyBundle, PolyError> {
    jet_lift_many(std::slice::from_ref(expr), point, d).map(|mut v| v.remove(0))
}

/// Expand several expressions sharing subexpressions in one pass.
pub fn jet_lift_many(exprs: &[Expr], point: &[f64], d: usize) -> Result<Vec<PolyBundle>, PolyError> {
    let n = point.len();
    if n == 0 {
        return Err(PolyError::ZeroVariables);
    }
    let seeds = point
        .iter()
        .enumerate()
        .map(|(i, &v)| Jet::variable(n, d, i, v))
        .collect::<Result<Vec<_>, _>>()?;
    let mut memo = HashMap::new();
    exprs
        .iter()
        .map(|e| e.eval_jet(&seeds, &mut memo).map(Jet::into_series))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: f64, b: f64) -> bool {
        (a - b).abs() < 1e-14
    }

    #[test]
    fn sin_about_zero() {
        let x = Expr::var(0);
        let p = jet_lift(&x.sin(), &[0.0], 3).unwrap();
        assert!(close(p.coeff(&[0]), 0.0));
        assert!(close(p.coeff(&[1]), 1.0));
        assert!(close(p.coeff(&[2]), 0.0));
        assert!(close(p.coeff(&[3]), -1.0 / 6.0));
    }

    #[test]
    fn cos_about_zero() {
        let p = jet_lift(&Expr::var(0).cos(), &[0.0], 2).unwrap();
        assert!(close(p.coeff(&[0]), 1.0));
        assert!(close(p.coeff(&[1]), 0.0));
        assert!(close(p.coeff(&[2]), -0.5));
    }

    #[test]
    fn sin_times_cos() {
        // (x - x^3/6)(1 - x^2/2) = x - 2/3 x^3 + O(x^5)
        let x = Expr::var(0);
        let p = jet_lift(&(x.sin() * x.cos()), &[0.0], 3).unwrap();
        assert!(close(p.coeff(&[1]), 1.0));
        assert!(close(p.coeff(&[2]), 0.0));
        assert!(close(p.coeff(&[3]), -2.0 / 3.0));
    }

    #[test]
    fn division_by_zero_constant() {
        let x = Expr::var(0);
        let e = Expr::constant(1.0) / x.sin();
        assert_eq!(
            jet_lift(&e, &[0.0], 2),
            Err(PolyError::DivisionByZeroConstant)
        );
        // fine away from the root
        let p = jet_lift(&e, &[1.0], 2).unwrap();
        assert!(close(p.coeff(&[0]), 1.0 / 1.0f64.sin()));
    }

    #[test]
    fn unknown_variable() {
        let e = Expr::var(3);
        assert!(matches!(
            jet_lift(&e, &[0.0, 0.0], 2),
            Err(PolyError::UnknownVariable { index: 3, n: 2 })
        ));
    }

    #[test]
    fn expr_eval_agrees_with_f64() {
        fn f<T: Scalar>(x: T, y: T) -> T {
            (x.clone() * y.clone()).sin() / (T::constant(2.0) + y.cos()) - -x
        }
        let e = f(Expr::var(0), Expr::var(1));
        let direct = f(0.4, -1.3);
        assert!(close(e.eval(&[0.4, -1.3]).unwrap(), direct));
    }
}
