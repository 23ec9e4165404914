//! Terminal cost and feedback pairs for the pendulum.

use std::fs;
use std::io;
use std::path::Path;

use ahmpc_core::ahmpc::TerminalPair;
use ahmpc_core::albrekht::{albrekht, AlbrekhtError, ValueFeedbackSeries};
use ahmpc_core::model::{LinearFeedback, PolynomialFeedback, QuadraticCost, QuadraticTerminal};
use ahmpc_core::plant::{Pendulum, CONTROL_DIM, STATE_DIM};
use ahmpc_core::poly::PolyError;
use ahmpc_core::sos::{complete_squares, SosError, SquareCompletion};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum TerminalError {
    #[error("degree must be 1, 3 or 5, got {0}")]
    Degree(usize),
    #[error(transparent)]
    Poly(#[from] PolyError),
    #[error(transparent)]
    Albrekht(#[from] AlbrekhtError),
    #[error(transparent)]
    Sos(#[from] SosError),
}

/// The stage cost used throughout: `0.1/2 (|x|^2 + |u|^2)`.
pub fn stage_cost() -> QuadraticCost {
    QuadraticCost::isotropic(STATE_DIM, CONTROL_DIM, 0.1)
}

pub struct Terminal {
    pub pair: TerminalPair,
    pub series: ValueFeedbackSeries,
    pub completion: SquareCompletion,
}

/// `d = 1`: LQR quadratic and linear gain. `d = 3, 5`: the degree-`(d+1, d)`
/// series with its value completed to a sum of squares of degree `2d`.
pub fn build_terminal(plant: &Pendulum, d: usize) -> Result<Terminal, TerminalError> {
    if ![1, 3, 5].contains(&d) {
        return Err(TerminalError::Degree(d));
    }
    let taylor = plant.taylor_dynamics(d)?;
    let series = albrekht(&taylor, &stage_cost().to_poly()?, STATE_DIM, d)?;
    let completion = complete_squares(&series.v)?;
    let pair = if d == 1 {
        TerminalPair {
            cost: Box::new(QuadraticTerminal { p: series.p.clone() }),
            feedback: Box::new(LinearFeedback { k: series.k.clone() }),
            degree: 1,
        }
    } else {
        TerminalPair {
            cost: Box::new(completion.clone()),
            feedback: Box::new(PolynomialFeedback {
                rows: series.kappa.clone(),
            }),
            degree: d,
        }
    };
    Ok(Terminal {
        pair,
        series,
        completion,
    })
}

/// Write `V.txt`, `kappa_<i>.txt`, `W.txt` and `transform.txt` into `dir`.
pub fn dump_series(terminal: &Terminal, dir: &Path) -> io::Result<()> {
    fs::create_dir_all(dir)?;
    for (name, body) in terminal.series.dump_files() {
        fs::write(dir.join(format!("{name}.txt")), body)?;
    }
    let c = &terminal.completion;
    fs::write(
        dir.join("W.txt"),
        format!("n={}\nd={}\n{}", c.state_dim(), 2 * c.degree, c.w.dump()),
    )?;
    fs::write(dir.join("transform.txt"), c.dump_transform())
}
