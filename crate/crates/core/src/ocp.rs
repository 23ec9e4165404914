//! Finite-horizon optimal control by single shooting.
//!
//! The decision variables are the stacked controls `u(0..N)`; states are
//! recovered by rollout and the gradient by one adjoint sweep. Box bounds
//! are handled by projection inside a limited-memory quasi-Newton method.

use std::collections::VecDeque;

use nalgebra::DVector;
use thiserror::Error;

use crate::model::{Dynamics, StageCost, TerminalCost};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum OcpError {
    #[error("non-finite state at step {step}")]
    NonFinite { step: usize },
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("horizon must be at least 1")]
    EmptyHorizon,
    #[error("control bound for channel {channel} is {value}, must be positive")]
    BadBound { channel: usize, value: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverOptions {
    /// Converged when the projected gradient norm is below
    /// `grad_tol * (1 + |cost|)`.
    pub grad_tol: f64,
    pub max_iterations: usize,
    pub armijo_c: f64,
    pub backtrack: f64,
    pub max_backtracks: usize,
    /// Number of stored curvature pairs.
    pub memory: usize,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            grad_tol: 1e-6,
            max_iterations: 400,
            armijo_c: 1e-4,
            backtrack: 0.5,
            max_backtracks: 50,
            memory: 10,
        }
    }
}

pub type StatePredicate<'a> = &'a (dyn Fn(&DVector<f64>) -> bool + Sync);
pub type MixedPredicate<'a> = &'a (dyn Fn(&DVector<f64>, &DVector<f64>) -> bool + Sync);

/// `min sum_k l(x_k, u_k) + V_f(x_N)` over `|u_k|_i <= u_max_i`.
///
/// The predicates are only monitored: violations are counted in the
/// solution, not enforced.
#[derive(Clone)]
pub struct OcpProblem<'a> {
    pub dynamics: &'a dyn Dynamics,
    pub stage: &'a dyn StageCost,
    pub terminal: &'a dyn TerminalCost,
    pub horizon: usize,
    pub x0: DVector<f64>,
    pub u_max: DVector<f64>,
    pub state_predicate: Option<StatePredicate<'a>>,
    pub mixed_predicate: Option<MixedPredicate<'a>>,
    pub options: SolverOptions,
}

impl<'a> OcpProblem<'a> {
    pub fn new(
        dynamics: &'a dyn Dynamics,
        stage: &'a dyn StageCost,
        terminal: &'a dyn TerminalCost,
        horizon: usize,
        x0: DVector<f64>,
        u_max: DVector<f64>,
    ) -> Self {
        Self {
            dynamics,
            stage,
            terminal,
            horizon,
            x0,
            u_max,
            state_predicate: None,
            mixed_predicate: None,
            options: SolverOptions::default(),
        }
    }

    fn validate(&self) -> Result<(), OcpError> {
        if self.horizon == 0 {
            return Err(OcpError::EmptyHorizon);
        }
        if self.x0.len() != self.dynamics.state_dim() {
            return Err(OcpError::Dimension(format!(
                "x0 has {} entries, dynamics has {} states",
                self.x0.len(),
                self.dynamics.state_dim()
            )));
        }
        if self.u_max.len() != self.dynamics.control_dim() {
            return Err(OcpError::Dimension(format!(
                "u_max has {} entries, dynamics has {} controls",
                self.u_max.len(),
                self.dynamics.control_dim()
            )));
        }
        if let Some((channel, &value)) = self.u_max.iter().enumerate().find(|(_, &v)| !(v > 0.0)) {
            return Err(OcpError::BadBound { channel, value });
        }
        Ok(())
    }

    /// Clamp every control into the box.
    pub fn project(&self, u_seq: &mut [DVector<f64>]) {
        for u in u_seq {
            for (ui, &b) in u.iter_mut().zip(self.u_max.iter()) {
                *ui = ui.clamp(-b, b);
            }
        }
    }
}

/// States `x_0..=x_N` and total cost for a control sequence.
pub fn rollout(
    dynamics: &dyn Dynamics,
    stage: &dyn StageCost,
    terminal: &dyn TerminalCost,
    x0: &DVector<f64>,
    u_seq: &[DVector<f64>],
) -> Result<(Vec<DVector<f64>>, f64), OcpError> {
    let m = dynamics.control_dim();
    if x0.len() != dynamics.state_dim() {
        return Err(OcpError::Dimension(format!(
            "x0 has {} entries, dynamics has {} states",
            x0.len(),
            dynamics.state_dim()
        )));
    }
    let mut xs = Vec::with_capacity(u_seq.len() + 1);
    xs.push(x0.clone());
    let mut cost = 0.0;
    for (k, u) in u_seq.iter().enumerate() {
        if u.len() != m {
            return Err(OcpError::Dimension(format!(
                "control {k} has {} entries, expected {m}",
                u.len()
            )));
        }
        let x = &xs[k];
        cost += stage.value(x, u);
        let next = dynamics.step(x, u);
        if !next.iter().all(|v| v.is_finite()) {
            return Err(OcpError::NonFinite { step: k + 1 });
        }
        xs.push(next);
    }
    cost += terminal.value(&xs[u_seq.len()]);
    if !cost.is_finite() {
        return Err(OcpError::NonFinite { step: u_seq.len() });
    }
    Ok((xs, cost))
}

/// Gradient of the total cost with respect to each control, by a backward
/// adjoint sweep along the rollout.
pub fn cost_gradient(
    problem: &OcpProblem<'_>,
    u_seq: &[DVector<f64>],
) -> Result<Vec<DVector<f64>>, OcpError> {
    let (xs, _) = rollout(problem.dynamics, problem.stage, problem.terminal, &problem.x0, u_seq)?;
    Ok(adjoint(problem, &xs, u_seq))
}

fn adjoint(problem: &OcpProblem<'_>, xs: &[DVector<f64>], u_seq: &[DVector<f64>]) -> Vec<DVector<f64>> {
    let n_steps = u_seq.len();
    let mut lambda = problem.terminal.gradient(&xs[n_steps]);
    let mut grads = vec![DVector::zeros(0); n_steps];
    for k in (0..n_steps).rev() {
        let (a, b) = problem.dynamics.jacobians(&xs[k], &u_seq[k]);
        let (lx, lu) = problem.stage.gradients(&xs[k], &u_seq[k]);
        grads[k] = lu + b.transpose() * &lambda;
        lambda = lx + a.transpose() * lambda;
    }
    grads
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SolveStatus {
    Converged,
    IterationCap,
    LineSearchFailure,
}

impl SolveStatus {
    pub fn as_str(self) -> &'static str {
        match self {
            SolveStatus::Converged => "converged",
            SolveStatus::IterationCap => "iteration-cap",
            SolveStatus::LineSearchFailure => "line-search-failure",
        }
    }
}

#[derive(Debug, Clone)]
pub struct OcpSolution {
    pub u_seq: Vec<DVector<f64>>,
    pub x_seq: Vec<DVector<f64>>,
    pub cost: f64,
    pub status: SolveStatus,
    pub iterations: usize,
    /// Norm of the projected gradient at exit.
    pub grad_norm: f64,
    /// Steps at which a monitored predicate failed.
    pub predicate_violations: usize,
}

fn flatten(u_seq: &[DVector<f64>]) -> DVector<f64> {
    DVector::from_iterator(
        u_seq.iter().map(|u| u.len()).sum(),
        u_seq.iter().flat_map(|u| u.iter().copied()),
    )
}

fn unflatten(z: &DVector<f64>, m: usize) -> Vec<DVector<f64>> {
    z.as_slice()
        .chunks(m)
        .map(DVector::from_column_slice)
        .collect()
}

struct Objective<'p, 'a> {
    problem: &'p OcpProblem<'a>,
    m: usize,
    lower: DVector<f64>,
    upper: DVector<f64>,
}

impl Objective<'_, '_> {
    fn value_grad(&self, z: &DVector<f64>) -> Option<(f64, DVector<f64>, Vec<DVector<f64>>)> {
        let u_seq = unflatten(z, self.m);
        let p = self.problem;
        let (xs, cost) = rollout(p.dynamics, p.stage, p.terminal, &p.x0, &u_seq).ok()?;
        let g = flatten(&adjoint(p, &xs, &u_seq));
        if !g.iter().all(|v| v.is_finite()) {
            return None;
        }
        Some((cost, g, xs))
    }

    fn project(&self, z: &DVector<f64>) -> DVector<f64> {
        z.zip_zip_map(&self.lower, &self.upper, |v, lo, hi| v.clamp(lo, hi))
    }

    fn projected_gradient(&self, z: &DVector<f64>, g: &DVector<f64>) -> DVector<f64> {
        z - self.project(&(z - g))
    }

    /// Components pinned at a bound with the gradient pushing outward.
    fn active(&self, z: &DVector<f64>, g: &DVector<f64>) -> Vec<bool> {
        (0..z.len())
            .map(|i| {
                let tol = 1e-12 * (1.0 + self.upper[i].abs());
                (z[i] <= self.lower[i] + tol && g[i] > 0.0) || (z[i] >= self.upper[i] - tol && g[i] < 0.0)
            })
            .collect()
    }
}

/// Two-loop recursion on the free components.
fn lbfgs_direction(g: &DVector<f64>, free: &[bool], pairs: &VecDeque<(DVector<f64>, DVector<f64>)>) -> DVector<f64> {
    let mask = |v: &DVector<f64>| DVector::from_fn(v.len(), |i, _| if free[i] { v[i] } else { 0.0 });
    let mut q = mask(g);
    let mut alphas = Vec::with_capacity(pairs.len());
    for (s, y) in pairs.iter().rev() {
        let (s, y) = (mask(s), mask(y));
        let sy = s.dot(&y);
        if sy <= 0.0 {
            alphas.push(None);
            continue;
        }
        let a = s.dot(&q) / sy;
        q -= &y * a;
        alphas.push(Some((a, s, y, sy)));
    }
    let gamma = pairs
        .back()
        .map(|(s, y)| {
            let (s, y) = (mask(s), mask(y));
            let yy = y.dot(&y);
            if yy > 0.0 && s.dot(&y) > 0.0 {
                s.dot(&y) / yy
            } else {
                1.0
            }
        })
        .unwrap_or(1.0);
    let mut r = q * gamma;
    for entry in alphas.into_iter().rev().flatten() {
        let (a, s, y, sy) = entry;
        let b = y.dot(&r) / sy;
        r += s * (a - b);
    }
    -mask(&r)
}

/// Projected limited-memory BFGS from `u_init` (projected into the box
/// first). The returned cost never exceeds the cost of the projected warm
/// start.
pub fn solve(problem: &OcpProblem<'_>, u_init: &[DVector<f64>]) -> Result<OcpSolution, OcpError> {
    problem.validate()?;
    let m = problem.dynamics.control_dim();
    if u_init.len() != problem.horizon {
        return Err(OcpError::Dimension(format!(
            "warm start has {} steps, horizon is {}",
            u_init.len(),
            problem.horizon
        )));
    }
    let mut start = u_init.to_vec();
    problem.project(&mut start);
    // surface rollout failures of the warm start to the caller
    rollout(problem.dynamics, problem.stage, problem.terminal, &problem.x0, &start)?;

    let upper = DVector::from_fn(problem.horizon * m, |i, _| problem.u_max[i % m]);
    let obj = Objective {
        problem,
        m,
        lower: -upper.clone(),
        upper,
    };
    let opts = &problem.options;
    let mut z = flatten(&start);
    let (mut f, mut g, mut xs) = obj
        .value_grad(&z)
        .ok_or(OcpError::NonFinite { step: problem.horizon })?;
    let mut pairs: VecDeque<(DVector<f64>, DVector<f64>)> = VecDeque::new();
    let mut status = SolveStatus::IterationCap;
    let mut iterations = 0;
    let mut pg_norm = obj.projected_gradient(&z, &g).norm();

    while iterations < opts.max_iterations {
        if pg_norm <= opts.grad_tol * (1.0 + f.abs()) {
            status = SolveStatus::Converged;
            break;
        }
        iterations += 1;
        let active = obj.active(&z, &g);
        let free: Vec<bool> = active.iter().map(|a| !a).collect();
        let mut direction = lbfgs_direction(&g, &free, &pairs);
        let gnorm = g.amax();
        if g.dot(&direction) >= -1e-14 * g.norm() * direction.norm() {
            pairs.clear();
            direction = -DVector::from_fn(g.len(), |i, _| if free[i] { g[i] } else { 0.0 });
        }
        let mut step = if pairs.is_empty() { 1.0 / gnorm.max(1.0) } else { 1.0 };

        let mut accepted = None;
        for attempt in 0..2 {
            for _ in 0..opts.max_backtracks {
                let trial = obj.project(&(&z + &direction * step));
                if let Some((ft, gt, xt)) = obj.value_grad(&trial) {
                    let decrease = g.dot(&(&trial - &z));
                    if ft <= f + opts.armijo_c * decrease && ft <= f {
                        accepted = Some((trial, ft, gt, xt));
                        break;
                    }
                }
                step *= opts.backtrack;
            }
            if accepted.is_some() || attempt == 1 {
                break;
            }
            // quasi-Newton direction failed: retry along the projected gradient
            pairs.clear();
            direction = -g.clone();
            step = 1.0 / gnorm.max(1.0);
        }

        let Some((z_new, f_new, g_new, x_new)) = accepted else {
            status = SolveStatus::LineSearchFailure;
            break;
        };
        let s = &z_new - &z;
        let y = &g_new - &g;
        if s.dot(&y) > 1e-12 * s.norm() * y.norm() {
            if pairs.len() == opts.memory.max(1) {
                pairs.pop_front();
            }
            pairs.push_back((s, y));
        }
        z = z_new;
        f = f_new;
        g = g_new;
        xs = x_new;
        pg_norm = obj.projected_gradient(&z, &g).norm();
    }
    if status == SolveStatus::IterationCap && pg_norm <= opts.grad_tol * (1.0 + f.abs()) {
        status = SolveStatus::Converged;
    }

    let u_seq = unflatten(&z, m);
    let predicate_violations = (0..problem.horizon)
        .filter(|&k| {
            let state_bad = problem.state_predicate.is_some_and(|p| !p(&xs[k + 1]));
            let mixed_bad = problem.mixed_predicate.is_some_and(|p| !p(&xs[k], &u_seq[k]));
            state_bad || mixed_bad
        })
        .count();
    Ok(OcpSolution {
        u_seq,
        x_seq: xs,
        cost: f,
        status,
        iterations,
        grad_norm: pg_norm,
        predicate_violations,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{LinearDynamics, QuadraticCost, QuadraticTerminal};
    use nalgebra::DMatrix;

    fn scalar_problem_parts() -> (LinearDynamics, QuadraticCost, QuadraticTerminal) {
        let e = |v| DMatrix::from_element(1, 1, v);
        (
            LinearDynamics { a: e(1.0), b: e(1.0) },
            QuadraticCost {
                q: e(0.0),
                s: e(0.0),
                r: e(1.0),
            },
            QuadraticTerminal { p: e(4.0) },
        )
    }

    #[test]
    fn scalar_rollout() {
        let (dynamics, stage, terminal) = scalar_problem_parts();
        let x0 = DVector::from_element(1, 1.0);
        let (xs, cost) = rollout(&dynamics, &stage, &terminal, &x0, &[DVector::from_element(1, -1.0)]).unwrap();
        assert_eq!(xs.len(), 2);
        assert_eq!(xs[1][0], 0.0);
        assert_eq!(cost, 0.5);
    }

    #[test]
    fn box_clamps_one_step_problem() {
        // u^2/2 + 2(2 + u)^2 is minimised at u = -8/5, outside [-1, 1]
        let (dynamics, stage, terminal) = scalar_problem_parts();
        let x0 = DVector::from_element(1, 2.0);
        let problem = OcpProblem::new(&dynamics, &stage, &terminal, 1, x0, DVector::from_element(1, 1.0));
        let sol = solve(&problem, &[DVector::from_element(1, 0.0)]).unwrap();
        assert_eq!(sol.u_seq[0][0], -1.0);
        assert_eq!(sol.status, SolveStatus::Converged);
        assert!((sol.cost - 2.5).abs() < 1e-12);

        let wide = OcpProblem {
            u_max: DVector::from_element(1, 10.0),
            ..problem
        };
        let sol = solve(&wide, &[DVector::from_element(1, 0.0)]).unwrap();
        assert!((sol.u_seq[0][0] + 1.6).abs() < 1e-6);
    }

    #[test]
    fn equilibrium_stays_put() {
        let (dynamics, stage, terminal) = scalar_problem_parts();
        let problem = OcpProblem::new(&dynamics, &stage, &terminal, 5, DVector::zeros(1), DVector::from_element(1, 1.0));
        let sol = solve(&problem, &vec![DVector::zeros(1); 5]).unwrap();
        assert_eq!(sol.status, SolveStatus::Converged);
        assert_eq!(sol.cost, 0.0);
        assert!(sol.u_seq.iter().all(|u| u[0] == 0.0));
        assert_eq!(sol.iterations, 0);
    }

    #[test]
    fn rejects_bad_inputs() {
        let (dynamics, stage, terminal) = scalar_problem_parts();
        let p = OcpProblem::new(&dynamics, &stage, &terminal, 0, DVector::zeros(1), DVector::from_element(1, 1.0));
        assert_eq!(solve(&p, &[]).unwrap_err(), OcpError::EmptyHorizon);
        let p = OcpProblem::new(&dynamics, &stage, &terminal, 1, DVector::zeros(1), DVector::from_element(1, 0.0));
        assert!(matches!(solve(&p, &[DVector::zeros(1)]), Err(OcpError::BadBound { channel: 0, .. })));
    }

    #[test]
    fn non_finite_rollout_reports_step() {
        let e = |v| DMatrix::from_element(1, 1, v);
        let dynamics = LinearDynamics { a: e(1e300), b: e(0.0) };
        let (_, stage, terminal) = scalar_problem_parts();
        let x0 = DVector::from_element(1, 1.0);
        let u = vec![DVector::zeros(1); 4];
        assert_eq!(
            rollout(&dynamics, &stage, &terminal, &x0, &u).unwrap_err(),
            OcpError::NonFinite { step: 2 }
        );
    }
}
