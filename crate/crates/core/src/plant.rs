//! Damped double pendulum on massless links, balanced about straight up.
//!
//! State `(th1, th2, om1, om2)`: absolute link angles measured
//! counterclockwise from vertical-up and their rates. Controls are torques
//! `u1` on the base coordinate and `u2` on the joint coordinate.
//!
//! With point masses `m1` at the joint and `m2` at the tip the
//! Euler-Lagrange equations read `M(th) om_dot = rhs` with
//!
//! ```text
//! M   = [ (m1+m2) l1^2       m2 l1 l2 c12 ]
//!       [ m2 l1 l2 c12       m2 l2^2      ]
//! rhs = [ u1 + D1 - m2 l1 l2 s12 om2^2 + (m1+m2) g l1 sin th1 ]
//!       [ u2 + D2 + m2 l1 l2 s12 om1^2 + m2 g l2 sin th2      ]
//! ```
//!
//! where `c12 = cos(th1 - th2)`, `s12 = sin(th1 - th2)` and `D` is the
//! damping torque. `det M = l1^2 l2^2 m2 (m1 + m2 sin^2(th1 - th2)) > 0`.
//! The continuous flow is discretised with one explicit Euler step.

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::model::{taylor_expand, Dynamics, ScalarDynamics};
use crate::poly::{PolyError, Scalar, TaylorMap};

/// Where the joint damping acts.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum DampingMode {
    /// `-c1 om1` on the base coordinate and `-c2 om2` on the tip coordinate.
    #[default]
    Absolute,
    /// `-c1 om1` at the base and `-c2 (om2 - om1)` on the relative joint rate.
    Relative,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PendulumParams {
    pub l1: f64,
    pub l2: f64,
    pub m1: f64,
    pub m2: f64,
    pub c1: f64,
    pub c2: f64,
    pub g: f64,
    /// Euler step in seconds.
    pub h: f64,
    pub damping: DampingMode,
}

impl Default for PendulumParams {
    fn default() -> Self {
        Self {
            l1: 1.0,
            l2: 2.0,
            m1: 2.0,
            m2: 1.0,
            c1: 0.5,
            c2: 0.5,
            g: 9.8,
            h: 0.1,
            damping: DampingMode::Absolute,
        }
    }
}

pub const STATE_DIM: usize = 4;
pub const CONTROL_DIM: usize = 2;

#[derive(Debug, Clone, Default)]
pub struct Pendulum {
    pub params: PendulumParams,
}

impl Pendulum {
    pub fn new(params: PendulumParams) -> Self {
        Self { params }
    }

    /// Time derivative of the state.
    pub fn continuous_rhs<T: Scalar>(&self, x: &[T; 4], u: &[T; 2]) -> [T; 4] {
        let p = &self.params;
        let k = |v: f64| T::constant(v);
        let [th1, th2, om1, om2] = x.clone();
        let d12 = th1.clone() - th2.clone();
        let c12 = d12.cos();
        let s12 = d12.sin();
        let coupling = p.m2 * p.l1 * p.l2;
        let m11 = (p.m1 + p.m2) * p.l1 * p.l1;
        let m22 = p.m2 * p.l2 * p.l2;
        let m12 = k(coupling) * c12.clone();
        let (d1, d2) = match p.damping {
            DampingMode::Absolute => (-(k(p.c1) * om1.clone()), -(k(p.c2) * om2.clone())),
            DampingMode::Relative => {
                let joint = k(p.c2) * (om2.clone() - om1.clone());
                (joint.clone() - k(p.c1) * om1.clone(), -joint)
            }
        };
        let rhs1 = u[0].clone() + d1 - k(coupling) * s12.clone() * om2.clone() * om2.clone()
            + k((p.m1 + p.m2) * p.g * p.l1) * th1.sin();
        let rhs2 = u[1].clone() + d2 + k(coupling) * s12 * om1.clone() * om1.clone()
            + k(p.m2 * p.g * p.l2) * th2.sin();
        let det = k(m11 * m22) - m12.clone() * m12.clone();
        let acc1 = (k(m22) * rhs1.clone() - m12.clone() * rhs2.clone()) / det.clone();
        let acc2 = (k(m11) * rhs2 - m12 * rhs1) / det;
        [om1, om2, acc1, acc2]
    }

    /// One Euler step of the continuous flow.
    pub fn discrete<T: Scalar>(&self, x: &[T; 4], u: &[T; 2]) -> [T; 4] {
        let dx = self.continuous_rhs(x, u);
        let h = T::constant(self.params.h);
        [
            x[0].clone() + h.clone() * dx[0].clone(),
            x[1].clone() + h.clone() * dx[1].clone(),
            x[2].clone() + h.clone() * dx[2].clone(),
            x[3].clone() + h * dx[3].clone(),
        ]
    }

    pub fn mass_matrix(&self, x: &[f64; 4]) -> [[f64; 2]; 2] {
        let p = &self.params;
        let m12 = p.m2 * p.l1 * p.l2 * (x[0] - x[1]).cos();
        [
            [(p.m1 + p.m2) * p.l1 * p.l1, m12],
            [m12, p.m2 * p.l2 * p.l2],
        ]
    }

    /// Kinetic plus potential energy (zero potential at the pivot height).
    pub fn energy(&self, x: &[f64; 4]) -> f64 {
        let p = &self.params;
        let m = self.mass_matrix(x);
        let (w1, w2) = (x[2], x[3]);
        let kinetic = 0.5 * (m[0][0] * w1 * w1 + 2.0 * m[0][1] * w1 * w2 + m[1][1] * w2 * w2);
        let potential =
            (p.m1 + p.m2) * p.g * p.l1 * x[0].cos() + p.m2 * p.g * p.l2 * x[1].cos();
        kinetic + potential
    }

    /// Energy rate contributed by damping when no torque is applied.
    pub fn damping_power(&self, x: &[f64; 4]) -> f64 {
        let p = &self.params;
        let (w1, w2) = (x[2], x[3]);
        match p.damping {
            DampingMode::Absolute => -p.c1 * w1 * w1 - p.c2 * w2 * w2,
            DampingMode::Relative => -p.c1 * w1 * w1 - p.c2 * (w2 - w1) * (w2 - w1),
        }
    }

    /// Analytic `(d om_dot / d(th, om), d om_dot / du)` as 2x4 and 2x2 blocks.
    fn acceleration_jacobians(&self, x: &[f64; 4], u: &[f64; 2]) -> ([[f64; 4]; 2], [[f64; 2]; 2]) {
        let p = &self.params;
        let [th1, th2, w1, w2] = *x;
        let coupling = p.m2 * p.l1 * p.l2;
        let (s12, c12) = (th1 - th2).sin_cos();
        let m = self.mass_matrix(x);
        let det = m[0][0] * m[1][1] - m[0][1] * m[0][1];
        let inv = [
            [m[1][1] / det, -m[0][1] / det],
            [-m[0][1] / det, m[0][0] / det],
        ];
        let acc = self.continuous_rhs(x, u);
        let (a1, a2) = (acc[2], acc[3]);

        // d rhs / d state, rows rhs1, rhs2; columns th1, th2, om1, om2
        let g1 = (p.m1 + p.m2) * p.g * p.l1;
        let g2 = p.m2 * p.g * p.l2;
        let mut dr = [
            [
                -coupling * c12 * w2 * w2 + g1 * th1.cos(),
                coupling * c12 * w2 * w2,
                0.0,
                -2.0 * coupling * s12 * w2,
            ],
            [
                coupling * c12 * w1 * w1,
                -coupling * c12 * w1 * w1 + g2 * th2.cos(),
                2.0 * coupling * s12 * w1,
                0.0,
            ],
        ];
        match p.damping {
            DampingMode::Absolute => {
                dr[0][2] -= p.c1;
                dr[1][3] -= p.c2;
            }
            DampingMode::Relative => {
                dr[0][2] -= p.c1 + p.c2;
                dr[0][3] += p.c2;
                dr[1][2] += p.c2;
                dr[1][3] -= p.c2;
            }
        }
        // dM/dth1 = [0 dm; dm 0] with dm = -coupling s12, dM/dth2 = -dM/dth1
        let dm = -coupling * s12;
        let corr_th1 = [dm * a2, dm * a1];
        dr[0][0] -= corr_th1[0];
        dr[1][0] -= corr_th1[1];
        dr[0][1] += corr_th1[0];
        dr[1][1] += corr_th1[1];

        let mut dx = [[0.0; 4]; 2];
        for i in 0..2 {
            for j in 0..4 {
                dx[i][j] = inv[i][0] * dr[0][j] + inv[i][1] * dr[1][j];
            }
        }
        (dx, inv)
    }

    /// Taylor polynomials of the discrete dynamics about the upright
    /// equilibrium in the stacked variables `(x, u)`, degrees `1..=d`.
    pub fn taylor_dynamics(&self, d: usize) -> Result<TaylorMap, PolyError> {
        taylor_expand(self, d)
    }
}

fn as_arrays(x: &DVector<f64>, u: &DVector<f64>) -> ([f64; 4], [f64; 2]) {
    ([x[0], x[1], x[2], x[3]], [u[0], u[1]])
}

impl Dynamics for Pendulum {
    fn state_dim(&self) -> usize {
        STATE_DIM
    }

    fn control_dim(&self) -> usize {
        CONTROL_DIM
    }

    fn step(&self, x: &DVector<f64>, u: &DVector<f64>) -> DVector<f64> {
        let (xa, ua) = as_arrays(x, u);
        DVector::from_column_slice(&self.discrete(&xa, &ua))
    }

    fn jacobians(&self, x: &DVector<f64>, u: &DVector<f64>) -> (DMatrix<f64>, DMatrix<f64>) {
        let (xa, ua) = as_arrays(x, u);
        let h = self.params.h;
        let (dacc, inv) = self.acceleration_jacobians(&xa, &ua);
        let mut a = DMatrix::identity(4, 4);
        a[(0, 2)] += h;
        a[(1, 3)] += h;
        for i in 0..2 {
            for j in 0..4 {
                a[(2 + i, j)] += h * dacc[i][j];
            }
        }
        let mut b = DMatrix::zeros(4, 2);
        for i in 0..2 {
            for j in 0..2 {
                b[(2 + i, j)] = h * inv[i][j];
            }
        }
        (a, b)
    }
}

impl ScalarDynamics for Pendulum {
    fn state_dim(&self) -> usize {
        STATE_DIM
    }

    fn control_dim(&self) -> usize {
        CONTROL_DIM
    }

    fn step_scalar<T: Scalar>(&self, x: &[T], u: &[T]) -> Vec<T> {
        let xa = [x[0].clone(), x[1].clone(), x[2].clone(), x[3].clone()];
        let ua = [u[0].clone(), u[1].clone()];
        self.discrete(&xa, &ua).to_vec()
    }
}

/// Additive Gaussian state noise with a reproducible generator.
#[derive(Debug, Clone)]
pub struct StateNoise {
    rng: Option<ChaCha8Rng>,
    normal: Normal<f64>,
}

/// Per-channel noise variance used by the benchmark.
pub const NOISE_VARIANCE: f64 = 0.0004;

impl StateNoise {
    /// No noise: `add_noise` is the identity.
    pub fn off() -> Self {
        Self {
            rng: None,
            normal: Normal::new(0.0, 1.0).expect("unit normal"),
        }
    }

    pub fn seeded(seed: u64, variance: f64) -> Self {
        Self {
            rng: Some(ChaCha8Rng::seed_from_u64(seed)),
            normal: Normal::new(0.0, variance.sqrt()).expect("finite variance"),
        }
    }

    pub fn is_on(&self) -> bool {
        self.rng.is_some()
    }

    pub fn add_noise(&mut self, x: &DVector<f64>) -> DVector<f64> {
        match &mut self.rng {
            None => x.clone(),
            Some(rng) => x.map(|v| v + self.normal.sample(rng)),
        }
    }
}
