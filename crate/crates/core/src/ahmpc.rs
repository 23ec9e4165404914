//! Adaptive-horizon MPC.
//!
//! Each step solves the horizon-`N` problem, extends the predicted end state
//! `M` steps under the terminal feedback and checks, along that extension,
//! that the feedback respects the control box and the predicates and that
//! `V_f` is bounded below by and decreases by at least `alpha(|x|)`. A pass
//! applies the first control and shortens the horizon; a failure re-solves
//! with a longer one. At `N = 0` the terminal feedback is applied directly
//! for as long as its own extension passes the same checks.

use std::fmt;

use nalgebra::DVector;

use crate::model::{Dynamics, Feedback, StageCost, TerminalCost};
use crate::ocp::{self, OcpProblem, SolveStatus, SolverOptions};
use crate::plant::StateNoise;

/// Terminal cost and feedback used beyond the horizon.
pub struct TerminalPair {
    pub cost: Box<dyn TerminalCost>,
    pub feedback: Box<dyn Feedback>,
    /// Degree of the feedback polynomial.
    pub degree: usize,
}

impl fmt::Debug for TerminalPair {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("TerminalPair").field("degree", &self.degree).finish_non_exhaustive()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ControllerConfig {
    pub n_init: usize,
    /// Extension length.
    pub m: usize,
    /// Horizon increment after a failed check.
    pub l: usize,
    pub retry_cap: usize,
    pub decrement: usize,
    /// `alpha(s) = alpha_scale * s^2`.
    pub alpha_scale: f64,
    pub u_max: f64,
    pub n_min: usize,
    /// Hard ceiling on the horizon, so a run whose plans keep failing cannot
    /// grow it without bound.
    pub n_max: usize,
    /// Weight `w` of the terminal cost `(w/2)|x_N|^2` in the pre-solve that
    /// seeds a plan from scratch; 0 seeds from the clamped feedback rollout
    /// instead.
    pub seed_weight: f64,
    pub solver: SolverOptions,
}

impl Default for ControllerConfig {
    fn default() -> Self {
        Self {
            n_init: 50,
            m: 5,
            l: 5,
            retry_cap: 3,
            decrement: 1,
            alpha_scale: 0.1,
            u_max: 5.0,
            n_min: 0,
            n_max: 150,
            seed_weight: 100.0,
            solver: SolverOptions::default(),
        }
    }
}

impl ControllerConfig {
    pub fn alpha(&self, s: f64) -> f64 {
        self.alpha_scale * s * s
    }

    pub fn validate(&self) -> Result<(), String> {
        let positive = [
            ("M", self.m),
            ("L", self.l),
            ("retry_cap", self.retry_cap),
            ("decrement", self.decrement),
        ];
        if let Some((name, _)) = positive.iter().find(|(_, v)| *v == 0) {
            return Err(format!("{name} must be positive"));
        }
        if !(self.alpha_scale > 0.0 && self.alpha_scale.is_finite()) {
            return Err(format!("alpha scale must be positive, got {}", self.alpha_scale));
        }
        if !(self.u_max > 0.0 && self.u_max.is_finite()) {
            return Err(format!("u_max must be positive, got {}", self.u_max));
        }
        if !(self.seed_weight >= 0.0 && self.seed_weight.is_finite()) {
            return Err(format!("seed weight must be nonnegative, got {}", self.seed_weight));
        }
        if self.n_init < self.n_min || self.n_init > self.n_max {
            return Err(format!(
                "N_init = {} must lie in [{}, {}]",
                self.n_init, self.n_min, self.n_max
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ConditionKind {
    /// Feedback outside the control box.
    Cf,
    /// State predicate.
    Sf,
    /// Mixed state-control predicate.
    Scf,
    /// `V_f(x) >= alpha(|x|)`.
    L1,
    /// `V_f(x) - V_f(x+) >= alpha(|x|)`.
    L2,
    /// The extension left the finite numbers.
    NonFinite,
}

impl ConditionKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ConditionKind::Cf => "cf",
            ConditionKind::Sf => "sf",
            ConditionKind::Scf => "scf",
            ConditionKind::L1 => "L1",
            ConditionKind::L2 => "L2",
            ConditionKind::NonFinite => "nonfinite",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CheckOutcome {
    Pass,
    /// First violated condition and its index in the predicted trajectory.
    Violation { kind: ConditionKind, k: usize },
}

impl CheckOutcome {
    pub fn passed(self) -> bool {
        self == CheckOutcome::Pass
    }
}

/// `M + 1` states from `x_n` under `x+ = f(x, kappa_f(x))`.
pub fn extend_trajectory(
    x_n: &DVector<f64>,
    feedback: &dyn Feedback,
    m: usize,
    dynamics: &dyn Dynamics,
) -> Vec<DVector<f64>> {
    let mut out = Vec::with_capacity(m + 1);
    out.push(x_n.clone());
    for k in 0..m {
        let x = &out[k];
        let next = if x.iter().all(|v| v.is_finite()) {
            dynamics.step(x, &feedback.control(x))
        } else {
            DVector::from_element(x.len(), f64::NAN)
        };
        out.push(next);
    }
    out
}

pub type StateTest<'a> = &'a (dyn Fn(&DVector<f64>) -> bool + Sync);
pub type MixedTest<'a> = &'a (dyn Fn(&DVector<f64>, &DVector<f64>) -> bool + Sync);

/// Everything [`check_conditions`] needs besides the extension itself.
#[derive(Clone, Copy)]
pub struct Conditions<'a> {
    pub feedback: &'a dyn Feedback,
    pub cost: &'a dyn TerminalCost,
    pub alpha_scale: f64,
    pub u_max: f64,
    pub state_predicate: Option<StateTest<'a>>,
    pub mixed_predicate: Option<MixedTest<'a>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CheckReport {
    pub outcome: CheckOutcome,
    /// `V_f` at every extension state that was evaluated.
    pub vf: Vec<f64>,
}

/// Check the extension `x_N..=x_{N+M}`; `offset` is `N`, used only to label
/// the violation index.
pub fn check_conditions(extension: &[DVector<f64>], offset: usize, c: &Conditions<'_>) -> CheckReport {
    let alpha = |s: f64| c.alpha_scale * s * s;
    let mut vf = Vec::with_capacity(extension.len());
    let violation = |kind, k: usize, vf| CheckReport {
        outcome: CheckOutcome::Violation { kind, k: offset + k },
        vf,
    };
    for (k, x) in extension.iter().enumerate() {
        if !x.iter().all(|v| v.is_finite()) {
            return violation(ConditionKind::NonFinite, k, vf);
        }
        let v = c.cost.value(x);
        if !v.is_finite() {
            return violation(ConditionKind::NonFinite, k, vf);
        }
        vf.push(v);
    }
    for k in 0..extension.len().saturating_sub(1) {
        let (x, next) = (&extension[k], &extension[k + 1]);
        let u = c.feedback.control(x);
        if u.iter().any(|ui| !(ui.abs() <= c.u_max)) {
            return violation(ConditionKind::Cf, k, vf);
        }
        if c.state_predicate.is_some_and(|p| !p(next)) {
            return violation(ConditionKind::Sf, k, vf);
        }
        if c.mixed_predicate.is_some_and(|p| !p(x, &u)) {
            return violation(ConditionKind::Scf, k, vf);
        }
        let a = alpha(x.norm());
        if vf[k] < a {
            return violation(ConditionKind::L1, k, vf);
        }
        if vf[k] - vf[k + 1] < a {
            return violation(ConditionKind::L2, k, vf);
        }
    }
    CheckReport {
        outcome: CheckOutcome::Pass,
        vf,
    }
}

/// Extension points where `alpha(|x|) < l(x, kappa_f(x)) / 2` fails.
pub fn alpha_sanity_warnings(
    extension: &[DVector<f64>],
    feedback: &dyn Feedback,
    stage: &dyn StageCost,
    alpha_scale: f64,
) -> usize {
    extension
        .iter()
        .filter(|x| x.iter().all(|v| v.is_finite()) && x.norm() > 0.0)
        .filter(|x| {
            let s = x.norm();
            !(alpha_scale * s * s < 0.5 * stage.value(x, &feedback.control(x)))
        })
        .count()
}

/// Result of one solve-extend-check attempt at a fixed horizon.
#[derive(Debug, Clone)]
pub struct Attempt {
    pub horizon: usize,
    /// Planned controls (empty at horizon 0 or when the solver failed).
    pub u_seq: Vec<DVector<f64>>,
    /// Control to apply if this attempt is committed.
    pub u0: Option<DVector<f64>>,
    pub solver: Option<SolveStatus>,
    pub solver_error: Option<String>,
    pub check: CheckReport,
    pub alpha_warnings: usize,
}

impl Attempt {
    pub fn passed(&self) -> bool {
        self.solver_error.is_none() && self.check.outcome.passed()
    }
}

/// Produces attempts for the controller; the real one solves an optimal
/// control problem, test doubles can script outcomes.
pub trait Planner {
    /// Plan from `x` with `horizon` steps. `warm` is the previous plan
    /// shifted to start at the current time (any length).
    fn attempt(&mut self, x: &DVector<f64>, horizon: usize, warm: &[DVector<f64>]) -> Attempt;

    /// Control used when no attempt produced one.
    fn fallback(&self, x: &DVector<f64>) -> DVector<f64>;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HorizonEvent {
    Shrink { from: usize, to: usize },
    Grow { from: usize, to: usize },
    Commit { from: usize, carry: usize },
}

#[derive(Debug, Clone)]
pub struct ControllerState {
    pub horizon: usize,
    /// Remaining controls of the last committed plan.
    pub warm: Vec<DVector<f64>>,
    pub events: Vec<HorizonEvent>,
}

impl ControllerState {
    pub fn new(config: &ControllerConfig) -> Self {
        Self {
            horizon: config.n_init,
            warm: Vec::new(),
            events: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StepOutcome {
    /// Optimised plan passed the checks.
    Pass,
    /// Horizon 0: terminal feedback applied after its own check passed.
    TerminalFeedback,
    /// Every retry failed; the last plan was applied anyway.
    Committed,
}

#[derive(Debug, Clone)]
pub struct StepReport {
    pub u: DVector<f64>,
    /// Horizon of the attempt whose control was applied.
    pub horizon: usize,
    /// Re-solves after the first attempt.
    pub resolves: usize,
    pub outcome: StepOutcome,
    /// Check result of the applied attempt.
    pub check: CheckOutcome,
    pub solver: Option<SolveStatus>,
    pub solver_error: Option<String>,
    /// `V_f` along the applied attempt's extension.
    pub vf: Vec<f64>,
    pub next_horizon: usize,
    pub alpha_warnings: usize,
}

impl StepReport {
    /// Compact status label: outcome, then the check or solver detail.
    pub fn status_label(&self) -> String {
        let detail = match (&self.check, &self.solver_error) {
            (_, Some(_)) => "solver-error".to_string(),
            (CheckOutcome::Violation { kind, k }, _) => format!("{}@{k}", kind.as_str()),
            (CheckOutcome::Pass, _) => self.solver.map_or("none", SolveStatus::as_str).to_string(),
        };
        let outcome = match self.outcome {
            StepOutcome::Pass => "pass",
            StepOutcome::TerminalFeedback => "kappa",
            StepOutcome::Committed => "commit",
        };
        format!("{outcome}:{detail}")
    }
}

/// One closed-loop step: try the current horizon, grow by `L` on failure up
/// to `retry_cap` times, and either apply a passing plan (shrinking the next
/// horizon) or commit the last plan and carry the horizon `L` further.
pub fn controller_step(
    x: &DVector<f64>,
    state: &mut ControllerState,
    planner: &mut dyn Planner,
    config: &ControllerConfig,
) -> StepReport {
    let mut n = state.horizon.clamp(config.n_min, config.n_max);
    let mut resolves = 0;
    let mut last_with_control: Option<Attempt> = None;
    loop {
        let attempt = planner.attempt(x, n, &state.warm);
        if attempt.passed() {
            let u = attempt.u0.clone().unwrap_or_else(|| planner.fallback(x));
            let next = n.saturating_sub(config.decrement).max(config.n_min);
            if next != n {
                state.events.push(HorizonEvent::Shrink { from: n, to: next });
            }
            state.horizon = next;
            state.warm = attempt.u_seq.iter().skip(1).cloned().collect();
            let outcome = if n == 0 { StepOutcome::TerminalFeedback } else { StepOutcome::Pass };
            return report(u, n, resolves, outcome, attempt, next);
        }
        if attempt.u0.is_some() {
            last_with_control = Some(attempt.clone());
        }
        let grown = (n + config.l).min(config.n_max);
        if resolves < config.retry_cap && grown > n {
            state.events.push(HorizonEvent::Grow { from: n, to: grown });
            n = grown;
            resolves += 1;
            continue;
        }
        let carry = (n + config.l).min(config.n_max);
        state.events.push(HorizonEvent::Commit { from: n, carry });
        state.horizon = carry;
        let applied = match (attempt.u0.is_some(), last_with_control) {
            (false, Some(earlier)) => earlier,
            _ => attempt,
        };
        let u = applied.u0.clone().unwrap_or_else(|| planner.fallback(x));
        state.warm = applied.u_seq.iter().skip(1).cloned().collect();
        return report(u, n, resolves, StepOutcome::Committed, applied, carry);
    }
}

fn report(
    u: DVector<f64>,
    horizon: usize,
    resolves: usize,
    outcome: StepOutcome,
    attempt: Attempt,
    next_horizon: usize,
) -> StepReport {
    StepReport {
        u,
        horizon,
        resolves,
        outcome,
        check: attempt.check.outcome,
        solver: attempt.solver,
        solver_error: attempt.solver_error,
        vf: attempt.check.vf,
        next_horizon,
        alpha_warnings: attempt.alpha_warnings,
    }
}

struct Pull(f64);

impl TerminalCost for Pull {
    fn value(&self, x: &DVector<f64>) -> f64 {
        0.5 * self.0 * x.norm_squared()
    }

    fn gradient(&self, x: &DVector<f64>) -> DVector<f64> {
        x * self.0
    }
}

/// The optimisation-based planner.
pub struct MpcPlanner<'a> {
    pub dynamics: &'a dyn Dynamics,
    pub stage: &'a dyn StageCost,
    pub terminal: &'a TerminalPair,
    pub config: &'a ControllerConfig,
    pub state_predicate: Option<StateTest<'a>>,
    pub mixed_predicate: Option<MixedTest<'a>>,
}

impl<'a> MpcPlanner<'a> {
    pub fn new(
        dynamics: &'a dyn Dynamics,
        stage: &'a dyn StageCost,
        terminal: &'a TerminalPair,
        config: &'a ControllerConfig,
    ) -> Self {
        Self {
            dynamics,
            stage,
            terminal,
            config,
            state_predicate: None,
            mixed_predicate: None,
        }
    }

    fn clamp(&self, mut u: DVector<f64>) -> DVector<f64> {
        let b = self.config.u_max;
        u.iter_mut().for_each(|v| *v = if v.is_finite() { v.clamp(-b, b) } else { 0.0 });
        u
    }

    /// `warm` truncated or padded to `horizon` steps; padding follows the
    /// clamped terminal feedback from the predicted state.
    pub fn warm_start(&self, x: &DVector<f64>, horizon: usize, warm: &[DVector<f64>]) -> Vec<DVector<f64>> {
        let mut u_seq: Vec<DVector<f64>> = warm.iter().take(horizon).cloned().collect();
        let mut xk = x.clone();
        for u in &u_seq {
            xk = self.dynamics.step(&xk, u);
        }
        while u_seq.len() < horizon {
            let u = if xk.iter().all(|v| v.is_finite()) {
                self.clamp(self.terminal.feedback.control(&xk))
            } else {
                DVector::zeros(self.dynamics.control_dim())
            };
            xk = self.dynamics.step(&xk, &u);
            u_seq.push(u);
        }
        u_seq
    }

    /// Plan from zero controls against a stiff quadratic pull toward the
    /// origin. A high-degree `V_f` can be small far from the origin, and a
    /// cold solve against it tends to settle there.
    fn seed(&self, problem: &OcpProblem<'_>, start: &[DVector<f64>]) -> Vec<DVector<f64>> {
        let pulled = Pull(self.config.seed_weight);
        let mut pre = OcpProblem::new(
            problem.dynamics,
            problem.stage,
            &pulled,
            problem.horizon,
            problem.x0.clone(),
            problem.u_max.clone(),
        );
        pre.options = problem.options;
        match ocp::solve(&pre, start) {
            Ok(sol) => sol.u_seq,
            Err(_) => start.to_vec(),
        }
    }

    fn solve_from(&self, problem: &OcpProblem<'_>, init: &[DVector<f64>]) -> Attempt {
        let horizon = problem.horizon;
        match ocp::solve(problem, init) {
            Ok(sol) => {
                let (check, alpha_warnings) = self.finish(&sol.x_seq[horizon], horizon);
                Attempt {
                    horizon,
                    u0: Some(sol.u_seq[0].clone()),
                    u_seq: sol.u_seq,
                    solver: Some(sol.status),
                    solver_error: None,
                    check,
                    alpha_warnings,
                }
            }
            Err(e) => Attempt {
                horizon,
                u_seq: Vec::new(),
                u0: None,
                solver: None,
                solver_error: Some(e.to_string()),
                check: CheckReport {
                    outcome: CheckOutcome::Violation {
                        kind: ConditionKind::NonFinite,
                        k: horizon,
                    },
                    vf: Vec::new(),
                },
                alpha_warnings: 0,
            },
        }
    }

    fn conditions(&self) -> Conditions<'_> {
        Conditions {
            feedback: self.terminal.feedback.as_ref(),
            cost: self.terminal.cost.as_ref(),
            alpha_scale: self.config.alpha_scale,
            u_max: self.config.u_max,
            state_predicate: self.state_predicate,
            mixed_predicate: self.mixed_predicate,
        }
    }

    fn finish(&self, x_end: &DVector<f64>, horizon: usize) -> (CheckReport, usize) {
        let ext = extend_trajectory(x_end, self.terminal.feedback.as_ref(), self.config.m, self.dynamics);
        let check = check_conditions(&ext, horizon, &self.conditions());
        let warnings = alpha_sanity_warnings(
            &ext[..self.config.m],
            self.terminal.feedback.as_ref(),
            self.stage,
            self.config.alpha_scale,
        );
        (check, warnings)
    }
}

impl Planner for MpcPlanner<'_> {
    fn attempt(&mut self, x: &DVector<f64>, horizon: usize, warm: &[DVector<f64>]) -> Attempt {
        if horizon == 0 {
            let (check, alpha_warnings) = self.finish(x, 0);
            return Attempt {
                horizon,
                u_seq: Vec::new(),
                u0: Some(self.fallback(x)),
                solver: None,
                solver_error: None,
                check,
                alpha_warnings,
            };
        }
        let u_max = DVector::from_element(self.dynamics.control_dim(), self.config.u_max);
        let mut problem = OcpProblem::new(
            self.dynamics,
            self.stage,
            self.terminal.cost.as_ref(),
            horizon,
            x.clone(),
            u_max,
        );
        problem.options = self.config.solver;
        let seeding = self.config.seed_weight > 0.0;
        let zeros = vec![DVector::zeros(self.dynamics.control_dim()); horizon];
        if warm.is_empty() && seeding {
            let init = self.seed(&problem, &zeros);
            return self.solve_from(&problem, &init);
        }
        let init = self.warm_start(x, horizon, warm);
        let direct = self.solve_from(&problem, &init);
        if direct.passed() || !seeding {
            return direct;
        }
        // Pull the shifted plan toward the origin first. Open loop it can
        // drift far away once the state has been disturbed, so as a last
        // resort plan again from scratch.
        let mut best = direct;
        for start in [&init, &zeros] {
            let pulled = self.seed(&problem, start);
            let candidate = self.solve_from(&problem, &pulled);
            if candidate.passed() {
                return candidate;
            }
            if candidate.u0.is_some() || best.u0.is_none() {
                best = candidate;
            }
        }
        best
    }

    fn fallback(&self, x: &DVector<f64>) -> DVector<f64> {
        self.clamp(self.terminal.feedback.control(x))
    }
}

#[derive(Debug, Clone)]
pub struct SimulationLog {
    /// `steps + 1` states; `states[0]` is the initial state.
    pub states: Vec<DVector<f64>>,
    pub reports: Vec<StepReport>,
    pub events: Vec<HorizonEvent>,
}

impl SimulationLog {
    pub fn max_horizon(&self) -> usize {
        self.reports.iter().map(|r| r.horizon).max().unwrap_or(0)
    }

    /// First step from which every later state has both angles within
    /// `band` (infinity norm), if any.
    pub fn settled_from(&self, band: f64) -> Option<usize> {
        let inside = |x: &DVector<f64>| x[0].abs().max(x[1].abs()) < band;
        let mut first = None;
        for (t, x) in self.states.iter().enumerate() {
            if inside(x) {
                first.get_or_insert(t);
            } else {
                first = None;
            }
        }
        first
    }

    /// Largest horizon used at or after step `from`.
    pub fn max_horizon_from(&self, from: usize) -> usize {
        self.reports.iter().skip(from).map(|r| r.horizon).max().unwrap_or(0)
    }

    /// First step whose applied control came from a horizon of `n`.
    pub fn first_horizon(&self, n: usize) -> Option<usize> {
        self.reports.iter().position(|r| r.horizon == n)
    }

    pub fn terminal_feedback_steps(&self) -> usize {
        self.reports
            .iter()
            .filter(|r| r.outcome == StepOutcome::TerminalFeedback)
            .count()
    }
}

/// Closed-loop simulation; the plant is `dynamics` plus `noise`.
pub fn run_simulation(
    x0: &DVector<f64>,
    steps: usize,
    planner: &mut dyn Planner,
    dynamics: &dyn Dynamics,
    config: &ControllerConfig,
    noise: &mut StateNoise,
    mut on_step: impl FnMut(usize, &DVector<f64>, &StepReport),
) -> SimulationLog {
    let mut state = ControllerState::new(config);
    let mut states = Vec::with_capacity(steps + 1);
    let mut reports = Vec::with_capacity(steps);
    states.push(x0.clone());
    for t in 0..steps {
        let x = states[t].clone();
        let rep = controller_step(&x, &mut state, planner, config);
        on_step(t, &x, &rep);
        let next = noise.add_noise(&dynamics.step(&x, &rep.u));
        states.push(next);
        reports.push(rep);
    }
    SimulationLog {
        states,
        reports,
        events: state.events,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{LinearDynamics, LinearFeedback, QuadraticTerminal};
    use nalgebra::DMatrix;

    fn scalar(a: f64) -> LinearDynamics {
        LinearDynamics {
            a: DMatrix::from_element(1, 1, a),
            b: DMatrix::from_element(1, 1, 1.0),
        }
    }

    #[test]
    fn extension_examples() {
        let fb = LinearFeedback {
            k: DMatrix::zeros(1, 1),
        };
        let ext = extend_trajectory(&DVector::from_element(1, 1.0), &fb, 3, &scalar(0.5));
        let vals: Vec<f64> = ext.iter().map(|x| x[0]).collect();
        assert_eq!(vals, vec![1.0, 0.5, 0.25, 0.125]);
        let ext = extend_trajectory(&DVector::zeros(1), &fb, 3, &scalar(0.5));
        assert!(ext.iter().all(|x| x[0] == 0.0));
    }

    fn conditions<'a>(fb: &'a LinearFeedback, cost: &'a QuadraticTerminal) -> Conditions<'a> {
        Conditions {
            feedback: fb,
            cost,
            alpha_scale: 0.1,
            u_max: 5.0,
            state_predicate: None,
            mixed_predicate: None,
        }
    }

    #[test]
    fn zero_extension_passes() {
        let fb = LinearFeedback { k: DMatrix::zeros(1, 1) };
        let cost = QuadraticTerminal { p: DMatrix::identity(1, 1) };
        let ext = vec![DVector::zeros(1); 6];
        let r = check_conditions(&ext, 10, &conditions(&fb, &cost));
        assert_eq!(r.outcome, CheckOutcome::Pass);
        assert_eq!(r.vf, vec![0.0; 6]);
    }

    #[test]
    fn increasing_cost_is_l2() {
        let fb = LinearFeedback { k: DMatrix::zeros(1, 1) };
        let cost = QuadraticTerminal { p: DMatrix::identity(1, 1) };
        let ext: Vec<_> = [1.0, 1.1, 0.5].iter().map(|&v| DVector::from_element(1, v)).collect();
        let r = check_conditions(&ext, 7, &conditions(&fb, &cost));
        assert_eq!(r.outcome, CheckOutcome::Violation { kind: ConditionKind::L2, k: 7 });
    }

    #[test]
    fn saturated_feedback_is_cf() {
        let fb = LinearFeedback { k: DMatrix::from_element(1, 1, -5.1) };
        let cost = QuadraticTerminal { p: DMatrix::identity(1, 1) * 100.0 };
        let ext: Vec<_> = [1.0, 0.5].iter().map(|&v| DVector::from_element(1, v)).collect();
        let r = check_conditions(&ext, 0, &conditions(&fb, &cost));
        assert_eq!(r.outcome, CheckOutcome::Violation { kind: ConditionKind::Cf, k: 0 });
    }

    #[test]
    fn small_cost_is_l1() {
        let fb = LinearFeedback { k: DMatrix::zeros(1, 1) };
        let cost = QuadraticTerminal { p: DMatrix::identity(1, 1) * 0.1 };
        let ext: Vec<_> = [1.0, 0.1].iter().map(|&v| DVector::from_element(1, v)).collect();
        let r = check_conditions(&ext, 3, &conditions(&fb, &cost));
        assert_eq!(r.outcome, CheckOutcome::Violation { kind: ConditionKind::L1, k: 3 });
    }

    #[test]
    fn predicates_and_nan() {
        let fb = LinearFeedback { k: DMatrix::zeros(1, 1) };
        let cost = QuadraticTerminal { p: DMatrix::identity(1, 1) * 10.0 };
        let ext: Vec<_> = [1.0, 0.1, 0.01].iter().map(|&v| DVector::from_element(1, v)).collect();
        let deny_small = |x: &DVector<f64>| x[0] > 0.05;
        let mut c = conditions(&fb, &cost);
        c.state_predicate = Some(&deny_small);
        let r = check_conditions(&ext, 0, &c);
        assert_eq!(r.outcome, CheckOutcome::Violation { kind: ConditionKind::Sf, k: 1 });
        let deny_all = |_: &DVector<f64>, _: &DVector<f64>| false;
        let mut c = conditions(&fb, &cost);
        c.mixed_predicate = Some(&deny_all);
        assert_eq!(
            check_conditions(&ext, 0, &c).outcome,
            CheckOutcome::Violation { kind: ConditionKind::Scf, k: 0 }
        );
        let bad = vec![DVector::from_element(1, 1.0), DVector::from_element(1, f64::NAN)];
        assert_eq!(
            check_conditions(&bad, 4, &conditions(&fb, &cost)).outcome,
            CheckOutcome::Violation { kind: ConditionKind::NonFinite, k: 5 }
        );
    }
}
