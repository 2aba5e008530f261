use std::time::Instant;

use crate::ilpmodel::IlpModel;
use crate::scalar::Scalar;

use super::{IlpSolution, SolveError, SolveStats, SolveStatus};

pub const EXHAUSTIVE_VAR_LIMIT: usize = 30;

/// Depth-first enumeration in variable order. Incumbents are replaced only
/// on strict improvement, so among equal optima the lexicographically
/// smallest assignment wins.
pub fn solve_exhaustive<T: Scalar>(model: &IlpModel<T>) -> Result<IlpSolution<T>, SolveError> {
    solve_exhaustive_with_limit(model, EXHAUSTIVE_VAR_LIMIT)
}

pub fn solve_exhaustive_with_limit<T: Scalar>(model: &IlpModel<T>, limit: usize) -> Result<IlpSolution<T>, SolveError> {
    let n = model.num_vars();
    if n > limit {
        return Err(SolveError::TooLarge { vars: n, limit });
    }
    let start = Instant::now();
    let mut rows_of = vec![Vec::new(); n];
    for (k, c) in model.constraints.iter().enumerate() {
        for &(v, coef) in &c.terms {
            rows_of[v].push((k, coef as i32));
        }
    }
    let mut s = Search {
        model,
        rows_of,
        act: vec![0; model.constraints.len()],
        lo_rem: model.constraints.iter().map(|c| c.terms.iter().map(|t| (t.1 as i32).min(0)).sum()).collect(),
        hi_rem: model.constraints.iter().map(|c| c.terms.iter().map(|t| (t.1 as i32).max(0)).sum()).collect(),
        suffix_min: vec![T::zero(); n + 1],
        x: vec![0; n],
        best: None,
        nodes: 0,
    };
    for j in (0..n).rev() {
        s.suffix_min[j] = s.suffix_min[j + 1] + model.objective[j].min(T::zero());
    }
    if s.rows_consistent(0..model.constraints.len()) {
        s.dfs(0, T::zero());
    }
    let stats = SolveStats {
        nodes_explored: s.nodes,
        lp_iterations: 0,
        wall_time: start.elapsed(),
    };
    Ok(match s.best {
        Some((_, assignment)) => IlpSolution {
            objective: model.objective_value(&assignment),
            assignment,
            status: SolveStatus::ProvenOptimal,
            stats,
        },
        None => IlpSolution {
            assignment: model.all_background(),
            objective: model.objective_value(&model.all_background()),
            status: SolveStatus::Infeasible,
            stats,
        },
    })
}

struct Search<'a, T> {
    model: &'a IlpModel<T>,
    rows_of: Vec<Vec<(usize, i32)>>,
    act: Vec<i32>,
    lo_rem: Vec<i32>,
    hi_rem: Vec<i32>,
    suffix_min: Vec<T>,
    x: Vec<u8>,
    best: Option<(T, Vec<u8>)>,
    nodes: u64,
}

impl<T: Scalar> Search<'_, T> {
    fn rows_consistent(&self, rows: impl IntoIterator<Item = usize>) -> bool {
        rows.into_iter().all(|k| {
            let c = &self.model.constraints[k];
            self.act[k] + self.hi_rem[k] >= c.lower && c.upper.is_none_or(|u| self.act[k] + self.lo_rem[k] <= u)
        })
    }

    fn assign(&mut self, j: usize, v: i32, sign: i32) {
        for &(k, c) in &self.rows_of[j] {
            self.act[k] += sign * c * v;
            self.lo_rem[k] -= sign * c.min(0);
            self.hi_rem[k] -= sign * c.max(0);
        }
    }

    fn dfs(&mut self, j: usize, partial: T) {
        self.nodes += 1;
        if let Some((b, _)) = &self.best {
            if partial + self.suffix_min[j] >= *b {
                return;
            }
        }
        if j == self.x.len() {
            self.best = Some((partial, self.x.clone()));
            return;
        }
        for v in [0u8, 1] {
            self.assign(j, v as i32, 1);
            self.x[j] = v;
            let ok = self.rows_of[j].iter().all(|&(k, _)| self.rows_consistent([k]));
            if ok {
                let p = if v == 1 { partial + self.model.objective[j] } else { partial };
                self.dfs(j + 1, p);
            }
            self.assign(j, v as i32, -1);
        }
        self.x[j] = 0;
    }
}
