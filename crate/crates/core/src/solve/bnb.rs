use std::cmp::Ordering;
use std::collections::BinaryHeap;
use std::time::Instant;

use crate::ilpmodel::{check_feasible, IlpModel};
use crate::scalar::Scalar;

use super::lp::{LpFailure, LpStatus, Tableau};
use super::{bounds_from, start_point, IlpSolution, SolveError, SolveOptions, SolveStats, SolveStatus};

struct Node<T> {
    bound: T,
    seq: u64,
    fix: Vec<(usize, bool)>,
}

impl<T: Scalar> PartialEq for Node<T> {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl<T: Scalar> Eq for Node<T> {}

impl<T: Scalar> PartialOrd for Node<T> {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl<T: Scalar> Ord for Node<T> {
    /// Reversed so that the max-heap pops the lowest bound, oldest first.
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .bound
            .as_f64()
            .total_cmp(&self.bound.as_f64())
            .then(other.seq.cmp(&self.seq))
    }
}

enum Eval<T> {
    Infeasible,
    Solved(T, Vec<T>),
}

struct Engine<'a, T> {
    model: &'a IlpModel<T>,
    tab: Tableau<T>,
    deadline: Option<Instant>,
    cold_iterations: u64,
    /// False after a cold solve stopped in phase 1; that basis is not dual feasible.
    warm_ok: bool,
}

impl<T: Scalar> Engine<'_, T> {
    fn cold(&mut self, lo: &[T], hi: &[T]) -> Result<LpStatus, LpFailure> {
        self.cold_iterations += self.tab.iterations;
        let start = start_point(self.model, lo, hi);
        self.tab = Tableau::new(self.model, lo, hi, &start, self.deadline);
        let status = self.tab.solve(&self.model.objective);
        self.warm_ok = status == Ok(LpStatus::Optimal);
        status
    }

    fn iterations(&self) -> u64 {
        self.cold_iterations + self.tab.iterations
    }

    fn evaluate(&mut self, fixings: &[Option<bool>], warm: bool) -> Result<Eval<T>, LpFailure> {
        let (lo, hi) = bounds_from::<T>(fixings);
        let mut status = if warm && self.warm_ok {
            match self.tab.resolve_with_bounds(&lo, &hi) {
                Err(LpFailure::Numerical(s)) => {
                    log::debug!("warm start failed ({s}), re-solving from scratch");
                    self.cold(&lo, &hi)?
                }
                other => other?,
            }
        } else {
            self.cold(&lo, &hi)?
        };
        let drift_tol = T::feasibility_tol() * T::lit(100.0);
        if status == LpStatus::Optimal && self.tab.residual(self.model) > drift_tol {
            log::debug!("residual drift, re-solving from scratch");
            status = self.cold(&lo, &hi)?;
            if status == LpStatus::Optimal && self.tab.residual(self.model) > drift_tol {
                return Err(LpFailure::Numerical("residual drift after cold re-solve".into()));
            }
        }
        Ok(match status {
            LpStatus::Infeasible => Eval::Infeasible,
            LpStatus::Optimal => Eval::Solved(self.tab.objective(), self.tab.structural()),
        })
    }
}

/// Most fractional variable; ties go to the larger |cost|, then the lower index.
fn branching_variable<T: Scalar>(x: &[T], cost: &[T]) -> Option<usize> {
    let itol = T::integrality_tol();
    let half = T::lit(0.5);
    let mut best: Option<(usize, T)> = None;
    for (j, &v) in x.iter().enumerate() {
        let frac = v - v.floor();
        if frac <= itol || frac >= T::one() - itol {
            continue;
        }
        let dist = (frac - half).abs();
        let better = match best {
            None => true,
            Some((b, bd)) => dist < bd || (dist == bd && cost[j].abs() > cost[b].abs()),
        };
        if better {
            best = Some((j, dist));
        }
    }
    best.map(|b| b.0)
}

/// Best-first branch-and-bound with depth-first plunging. Every node is
/// re-optimised from the previous basis by the dual simplex.
pub fn solve_bnb<T: Scalar>(model: &IlpModel<T>, opts: &SolveOptions) -> Result<IlpSolution<T>, SolveError> {
    let limit = opts.duration()?;
    let started = Instant::now();
    let deadline = limit.map(|d| started + d);
    let n = model.num_vars();
    let prune = T::prune_tol();

    let background = model.all_background();
    let mut incumbent: Option<(T, Vec<u8>)> = check_feasible(model, &background)
        .ok()
        .filter(|r| r.is_feasible())
        .map(|r| (r.objective, background.clone()));

    let free = vec![None; n];
    let (lo, hi) = bounds_from::<T>(&free);
    let start = start_point(model, &lo, &hi);
    let mut eng = Engine {
        model,
        tab: Tableau::new(model, &lo, &hi, &start, deadline),
        deadline,
        cold_iterations: 0,
        warm_ok: false,
    };

    let mut heap: BinaryHeap<Node<T>> = BinaryHeap::new();
    let mut current = Some(Node {
        bound: T::neg_infinity(),
        seq: 0,
        fix: Vec::new(),
    });
    let mut seq = 1u64;
    let mut nodes = 0u64;
    let mut first = true;
    let mut fixings = vec![None; n];
    let mut outcome = None;

    loop {
        let node = match current.take().or_else(|| heap.pop()) {
            Some(node) => node,
            None => break,
        };
        if let Some((inc, _)) = &incumbent {
            if node.bound >= *inc - prune {
                continue;
            }
        }
        if deadline.is_some_and(|d| Instant::now() >= d) {
            outcome = Some(SolveStatus::TimedOut);
            break;
        }
        if opts.max_nodes.is_some_and(|m| nodes >= m) {
            let best = heap.peek().map_or(node.bound, |h| h.bound.min(node.bound));
            outcome = Some(match &incumbent {
                Some((inc, _)) => SolveStatus::Feasible { gap: (*inc - best).max(T::zero()) },
                None => SolveStatus::TimedOut,
            });
            break;
        }
        nodes += 1;
        fixings.iter_mut().for_each(|f| *f = None);
        for &(j, v) in &node.fix {
            fixings[j] = Some(v);
        }
        let eval = match eng.evaluate(&fixings, !first) {
            Ok(e) => e,
            Err(LpFailure::Timeout) => {
                outcome = Some(SolveStatus::TimedOut);
                break;
            }
            Err(LpFailure::Numerical(s)) => return Err(SolveError::Numerical(s)),
        };
        first = false;
        if opts.log_period > 0 && nodes % opts.log_period == 0 {
            let open = heap.peek().map(|h| h.bound.as_f64()).unwrap_or(f64::INFINITY);
            let bound = match &eval {
                Eval::Solved(v, _) => open.min(v.as_f64()),
                Eval::Infeasible => open,
            };
            log::info!(
                "node={nodes} bound={bound:.6} incumbent={}",
                incumbent.as_ref().map_or(f64::INFINITY, |i| i.0.as_f64())
            );
        }
        let (value, x) = match eval {
            Eval::Infeasible => continue,
            Eval::Solved(v, x) => (v, x),
        };
        if let Some((inc, _)) = &incumbent {
            if value >= *inc - prune {
                continue;
            }
        }
        match branching_variable(&x, &model.objective) {
            None => {
                let rounded: Vec<u8> = x.iter().map(|&v| u8::from(v >= T::lit(0.5))).collect();
                match check_feasible(model, &rounded) {
                    Ok(r) if r.is_feasible() => {
                        if incumbent.as_ref().is_none_or(|(inc, _)| r.objective < *inc) {
                            log::debug!("node={nodes} new incumbent {}", r.objective);
                            incumbent = Some((r.objective, rounded));
                        }
                    }
                    _ => log::warn!("integral relaxation point fails the 0/1 check at node {nodes}"),
                }
            }
            Some(j) => {
                let up = x[j] >= T::lit(0.5);
                let mut dive = node.fix.clone();
                dive.push((j, up));
                let mut other = node.fix;
                other.push((j, !up));
                heap.push(Node {
                    bound: value,
                    seq,
                    fix: other,
                });
                current = Some(Node {
                    bound: value,
                    seq: seq + 1,
                    fix: dive,
                });
                seq += 2;
            }
        }
    }

    let stats = SolveStats {
        nodes_explored: nodes,
        lp_iterations: eng.iterations(),
        wall_time: started.elapsed(),
    };
    let status = outcome.unwrap_or(if incumbent.is_some() {
        SolveStatus::ProvenOptimal
    } else {
        SolveStatus::Infeasible
    });
    let (objective, assignment) = incumbent.unwrap_or_else(|| (model.objective_value(&background), background));
    Ok(IlpSolution {
        assignment,
        objective,
        status,
        stats,
    })
}
