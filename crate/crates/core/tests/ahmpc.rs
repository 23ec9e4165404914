use ahmpc_core::ahmpc::{
    controller_step, extend_trajectory, run_simulation, Attempt, CheckOutcome, CheckReport, ConditionKind,
    ControllerConfig, ControllerState, HorizonEvent, MpcPlanner, Planner, StepOutcome, TerminalPair,
};
use ahmpc_core::albrekht::{albrekht, unit_directions};
use ahmpc_core::model::{PolynomialFeedback, QuadraticCost};
use ahmpc_core::plant::{Pendulum, StateNoise};
use ahmpc_core::sos::complete_squares;
use nalgebra::DVector;
use proptest::prelude::*;

/// Passes or fails by script; the planned control encodes the horizon.
struct Scripted<F: FnMut(usize) -> bool> {
    verdict: F,
    calls: Vec<usize>,
}

impl<F: FnMut(usize) -> bool> Scripted<F> {
    fn new(verdict: F) -> Self {
        Self {
            verdict,
            calls: Vec::new(),
        }
    }
}

impl<F: FnMut(usize) -> bool> Planner for Scripted<F> {
    fn attempt(&mut self, _x: &DVector<f64>, horizon: usize, _warm: &[DVector<f64>]) -> Attempt {
        self.calls.push(horizon);
        let outcome = if (self.verdict)(horizon) {
            CheckOutcome::Pass
        } else {
            CheckOutcome::Violation {
                kind: ConditionKind::L2,
                k: horizon,
            }
        };
        Attempt {
            horizon,
            u_seq: vec![DVector::from_element(1, horizon as f64); horizon],
            u0: Some(DVector::from_element(1, horizon as f64)),
            solver: None,
            solver_error: None,
            check: CheckReport {
                outcome,
                vf: Vec::new(),
            },
            alpha_warnings: 0,
        }
    }

    fn fallback(&self, _x: &DVector<f64>) -> DVector<f64> {
        DVector::from_element(1, -1.0)
    }
}

fn x1() -> DVector<f64> {
    DVector::from_element(1, 1.0)
}

#[test]
fn pass_shrinks_by_one() {
    let config = ControllerConfig::default();
    let mut state = ControllerState::new(&config);
    let mut planner = Scripted::new(|_| true);
    let rep = controller_step(&x1(), &mut state, &mut planner, &config);
    assert_eq!(rep.outcome, StepOutcome::Pass);
    assert_eq!((rep.horizon, rep.next_horizon, rep.resolves), (50, 49, 0));
    assert_eq!(state.horizon, 49);
    assert_eq!(planner.calls, vec![50]);
}

#[test]
fn three_failures_commit_and_carry() {
    let config = ControllerConfig::default();
    let mut state = ControllerState::new(&config);
    let mut planner = Scripted::new(|_| false);
    let rep = controller_step(&x1(), &mut state, &mut planner, &config);
    assert_eq!(planner.calls, vec![50, 55, 60, 65]);
    assert_eq!(rep.outcome, StepOutcome::Committed);
    assert_eq!(rep.u[0], 65.0);
    assert_eq!((rep.horizon, rep.resolves, rep.next_horizon), (65, 3, 70));
    assert_eq!(state.horizon, 70);
    assert_eq!(
        state.events,
        vec![
            HorizonEvent::Grow { from: 50, to: 55 },
            HorizonEvent::Grow { from: 55, to: 60 },
            HorizonEvent::Grow { from: 60, to: 65 },
            HorizonEvent::Commit { from: 65, carry: 70 },
        ]
    );
}

#[test]
fn pass_after_growth_uses_that_horizon() {
    let config = ControllerConfig::default();
    let mut state = ControllerState::new(&config);
    let mut planner = Scripted::new(|n| n >= 60);
    let rep = controller_step(&x1(), &mut state, &mut planner, &config);
    assert_eq!(planner.calls, vec![50, 55, 60]);
    assert_eq!(rep.u[0], 60.0);
    assert_eq!((rep.horizon, rep.resolves, rep.next_horizon), (60, 2, 59));
}

#[test]
fn horizon_zero_reenters_at_l() {
    let config = ControllerConfig {
        n_init: 0,
        ..ControllerConfig::default()
    };
    let mut state = ControllerState::new(&config);
    let mut planner = Scripted::new(|n| n > 0);
    let rep = controller_step(&x1(), &mut state, &mut planner, &config);
    assert_eq!(planner.calls, vec![0, 5]);
    assert_eq!((rep.horizon, rep.next_horizon), (5, 4));

    let mut state = ControllerState::new(&config);
    let mut planner = Scripted::new(|_| true);
    let rep = controller_step(&x1(), &mut state, &mut planner, &config);
    assert_eq!(rep.outcome, StepOutcome::TerminalFeedback);
    assert_eq!((rep.horizon, rep.next_horizon), (0, 0));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn horizon_bookkeeping_invariants(
        script in prop::collection::vec(any::<bool>(), 1..200),
        n_init in 0usize..60,
        n_min in 0usize..3,
        l in 1usize..8,
        retry_cap in 1usize..5,
    ) {
        let config = ControllerConfig {
            n_init: n_init.max(n_min),
            n_min,
            l,
            retry_cap,
            ..ControllerConfig::default()
        };
        let mut state = ControllerState::new(&config);
        let mut i = 0;
        let mut planner = Scripted::new(move |_| {
            i += 1;
            script[(i - 1) % script.len()]
        });
        for _ in 0..40 {
            let start = state.horizon;
            let calls_before = planner.calls.len();
            let rep = controller_step(&x1(), &mut state, &mut planner, &config);
            let calls = &planner.calls[calls_before..];
            prop_assert_eq!(calls[0], start);
            prop_assert!(calls.len() <= retry_cap + 1);
            let grow = |n: usize| (n + l).min(config.n_max);
            for w in calls.windows(2) {
                prop_assert_eq!(w[1], grow(w[0]));
            }
            prop_assert_eq!(rep.resolves, calls.len() - 1);
            match rep.outcome {
                StepOutcome::Committed => {
                    prop_assert!(calls.len() == retry_cap + 1 || rep.horizon == config.n_max);
                    prop_assert_eq!(rep.next_horizon, grow(rep.horizon));
                }
                _ => prop_assert_eq!(rep.next_horizon, rep.horizon.saturating_sub(1).max(n_min)),
            }
            prop_assert!(state.horizon >= n_min && state.horizon <= config.n_max);
            prop_assert_eq!(state.horizon, rep.next_horizon);
        }
    }
}

fn degree_five_pair(plant: &Pendulum, stage: &QuadraticCost) -> TerminalPair {
    let taylor = plant.taylor_dynamics(5).unwrap();
    let series = albrekht(&taylor, &stage.to_poly().unwrap(), 4, 5).unwrap();
    TerminalPair {
        cost: Box::new(complete_squares(&series.v).unwrap()),
        feedback: Box::new(PolynomialFeedback { rows: series.kappa }),
        degree: 5,
    }
}

#[test]
fn terminal_cost_decreases_along_extension_near_origin() {
    let plant = Pendulum::default();
    let stage = QuadraticCost::isotropic(4, 2, 0.1);
    let pair = degree_five_pair(&plant, &stage);
    for dir in unit_directions(4, 50, 3) {
        let ext = extend_trajectory(&(dir * 0.05), pair.feedback.as_ref(), 5, &plant);
        let v: Vec<f64> = ext.iter().map(|x| pair.cost.value(x)).collect();
        assert!(v.windows(2).all(|w| w[1] < w[0]), "{v:?}");
    }
}

#[test]
fn origin_start_applies_zero_control_forever() {
    let plant = Pendulum::default();
    let stage = QuadraticCost::isotropic(4, 2, 0.1);
    let pair = degree_five_pair(&plant, &stage);
    let config = ControllerConfig::default();
    let mut planner = MpcPlanner::new(&plant, &stage, &pair, &config);
    let log = run_simulation(
        &DVector::zeros(4),
        60,
        &mut planner,
        &plant,
        &config,
        &mut StateNoise::off(),
        |_, _, _| {},
    );
    assert!(log.states.iter().all(|x| x.iter().all(|&v| v == 0.0)));
    assert!(log.reports.iter().all(|r| r.u.iter().all(|&v| v == 0.0)));
    let horizons: Vec<usize> = log.reports.iter().map(|r| r.horizon).collect();
    let expected: Vec<usize> = (0..60).map(|t| 50usize.saturating_sub(t)).collect();
    assert_eq!(horizons, expected);
}
