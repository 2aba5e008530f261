//! Exact solvers for the binary program: LP-based branch-and-bound on a
//! self-written simplex, and a propagating exhaustive search used as a
//! reference on small models.

mod bnb;
mod exhaustive;
mod lp;

use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::ilpmodel::IlpModel;
use crate::scalar::Scalar;

pub use bnb::solve_bnb;
pub use exhaustive::{solve_exhaustive, solve_exhaustive_with_limit, EXHAUSTIVE_VAR_LIMIT};

use lp::{LpFailure, LpStatus, Tableau};

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum SolveError {
    #[error("time limit must be positive")]
    ZeroTimeLimit,
    #[error("model has {vars} variables, the exhaustive solver accepts at most {limit}")]
    TooLarge { vars: usize, limit: usize },
    #[error("fixings have {got} entries but the model has {want} variables")]
    FixingLength { got: usize, want: usize },
    #[error("numerical failure in the simplex: {0}")]
    Numerical(String),
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum SolveStatus<T> {
    /// The assignment is optimal.
    ProvenOptimal,
    /// Feasible incumbent with a remaining `incumbent - best bound` gap
    /// (node limit reached).
    Feasible { gap: T },
    /// No 0/1 assignment satisfies the constraints.
    Infeasible,
    /// Time limit hit; the assignment is the best one found so far.
    TimedOut,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct SolveStats {
    pub nodes_explored: u64,
    pub lp_iterations: u64,
    pub wall_time: Duration,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IlpSolution<T> {
    pub assignment: Vec<u8>,
    pub objective: T,
    pub status: SolveStatus<T>,
    pub stats: SolveStats,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SolverKind {
    #[default]
    Bnb,
    Exhaustive,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolveOptions {
    pub solver: SolverKind,
    /// Wall-clock limit in seconds; `None` means unlimited.
    pub time_limit: Option<f64>,
    pub max_nodes: Option<u64>,
    /// Progress is logged every this many nodes (0 disables).
    pub log_period: u64,
}

impl Default for SolveOptions {
    fn default() -> Self {
        Self {
            solver: SolverKind::Bnb,
            time_limit: Some(60.0),
            max_nodes: None,
            log_period: 100,
        }
    }
}

impl SolveOptions {
    pub fn unlimited() -> Self {
        Self {
            time_limit: None,
            ..Self::default()
        }
    }

    fn duration(&self) -> Result<Option<Duration>, SolveError> {
        match self.time_limit {
            None => Ok(None),
            Some(s) if !(s > 0.0) => Err(SolveError::ZeroTimeLimit),
            Some(s) => Ok(Some(Duration::from_secs_f64(s))),
        }
    }
}

/// Solves with the solver selected in `opts`.
pub fn solve<T: Scalar>(model: &IlpModel<T>, opts: &SolveOptions) -> Result<IlpSolution<T>, SolveError> {
    match opts.solver {
        SolverKind::Bnb => solve_bnb(model, opts),
        SolverKind::Exhaustive => {
            opts.duration()?;
            solve_exhaustive(model)
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum LpOutcome<T> {
    Optimal { value: T, x: Vec<T> },
    Infeasible,
}

/// LP relaxation with `x` in `[0, 1]` and optional 0/1 fixings.
pub fn solve_lp_relaxation<T: Scalar>(model: &IlpModel<T>, fixings: &[Option<bool>]) -> Result<LpOutcome<T>, SolveError> {
    let n = model.num_vars();
    if fixings.len() != n {
        return Err(SolveError::FixingLength {
            got: fixings.len(),
            want: n,
        });
    }
    let (lo, hi) = bounds_from(fixings);
    let start = start_point(model, &lo, &hi);
    let mut tab = Tableau::new(model, &lo, &hi, &start, None);
    match tab.solve(&model.objective) {
        Ok(LpStatus::Optimal) => Ok(LpOutcome::Optimal {
            value: tab.objective(),
            x: tab.structural(),
        }),
        Ok(LpStatus::Infeasible) => Ok(LpOutcome::Infeasible),
        Err(LpFailure::Numerical(s)) => Err(SolveError::Numerical(s)),
        Err(LpFailure::Timeout) => unreachable!("no deadline"),
    }
}

fn bounds_from<T: Scalar>(fixings: &[Option<bool>]) -> (Vec<T>, Vec<T>) {
    fixings
        .iter()
        .map(|f| match f {
            None => (T::zero(), T::one()),
            Some(false) => (T::zero(), T::zero()),
            Some(true) => (T::one(), T::one()),
        })
        .unzip()
}

/// The all-background point clipped to the bounds.
fn start_point<T: Scalar>(model: &IlpModel<T>, lo: &[T], hi: &[T]) -> Vec<T> {
    model
        .all_background()
        .iter()
        .enumerate()
        .map(|(j, &v)| if v == 1 { hi[j] } else { lo[j] })
        .collect()
}
