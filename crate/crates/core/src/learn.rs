//! Weight fitting by coordinate descent over a per-weight grid, minimising
//! the variation of information against a labelled image.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::ilpmodel::Weights;
use crate::imagery::{LabelImage, ProbabilityMap};
use crate::metrics::{variation_of_information, Background};
use crate::pipeline::{prepare, PipelineConfig, PipelineError, Prepared};
use crate::scalar::Scalar;

#[derive(Debug, thiserror::Error)]
pub enum LearnError {
    #[error("grid for `{0}` is empty")]
    EmptyGrid(&'static str),
    #[error("grid for `{0}` contains a non-finite value")]
    NonFiniteGrid(&'static str),
    #[error("the evaluation budget must be at least 1")]
    ZeroBudget,
    #[error("no training images")]
    NoImages,
    #[error("truth is {truth:?} but the map is {map:?}")]
    ShapeMismatch { map: (usize, usize), truth: (usize, usize) },
    #[error(transparent)]
    Pipeline(#[from] PipelineError),
}

/// Candidate values per weight, in `Weights::NAMES` order.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WeightGrid {
    pub values: [Vec<f64>; 6],
}

impl Default for WeightGrid {
    fn default() -> Self {
        Self::uniform(&[-2.0, -1.0, -0.5, 0.0, 0.5])
    }
}

impl WeightGrid {
    pub fn uniform(values: &[f64]) -> Self {
        Self {
            values: std::array::from_fn(|_| values.to_vec()),
        }
    }

    pub fn single(w: Weights) -> Self {
        Self {
            values: w.to_array().map(|v| vec![v]),
        }
    }

    fn validate(&self) -> Result<(), LearnError> {
        for (name, vals) in Weights::NAMES.iter().zip(&self.values) {
            if vals.is_empty() {
                return Err(LearnError::EmptyGrid(name));
            }
            if vals.iter().any(|v| !v.is_finite()) {
                return Err(LearnError::NonFiniteGrid(name));
            }
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FitStatus {
    /// A full sweep changed nothing.
    Converged,
    /// Stopped by the budget after at least one full sweep.
    BudgetExhausted,
    /// Stopped by the budget before the first sweep finished.
    IncompleteSweep,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub weights: Weights,
    pub voi: f64,
    pub evaluations: usize,
    pub sweeps: usize,
    pub status: FitStatus,
    /// Every evaluated point with its loss, in evaluation order.
    pub history: Vec<(Weights, f64)>,
}

fn key(w: &Weights) -> [u64; 6] {
    w.to_array().map(f64::to_bits)
}

/// Coordinate descent over `grid` from the grid point nearest `start`.
/// Ties keep the current value, so strictly better points are needed to move.
pub fn coordinate_descent(
    grid: &WeightGrid,
    start: Weights,
    budget: usize,
    mut loss: impl FnMut(&Weights) -> f64,
) -> Result<FitResult, LearnError> {
    grid.validate()?;
    if budget == 0 {
        return Err(LearnError::ZeroBudget);
    }
    let s = start.to_array();
    let mut current: [f64; 6] = std::array::from_fn(|i| {
        *grid.values[i]
            .iter()
            .min_by(|a, b| (*a - s[i]).abs().total_cmp(&(*b - s[i]).abs()))
            .expect("validated")
    });
    let mut seen: HashMap<[u64; 6], f64> = HashMap::new();
    let mut history = Vec::new();
    let mut eval = |w: Weights, history: &mut Vec<(Weights, f64)>| -> Option<f64> {
        if let Some(&v) = seen.get(&key(&w)) {
            return Some(v);
        }
        if history.len() >= budget {
            return None;
        }
        let v = loss(&w);
        let v = if v.is_nan() { f64::INFINITY } else { v };
        seen.insert(key(&w), v);
        history.push((w, v));
        Some(v)
    };
    let mut best = eval(Weights::from_array(current), &mut history).expect("budget >= 1");
    let mut sweeps = 0;
    let status = 'outer: loop {
        let mut moved = false;
        for i in 0..6 {
            let mut choice = current[i];
            for &v in &grid.values[i] {
                let mut trial = current;
                trial[i] = v;
                let Some(l) = eval(Weights::from_array(trial), &mut history) else {
                    current[i] = choice;
                    break 'outer if sweeps == 0 {
                        FitStatus::IncompleteSweep
                    } else {
                        FitStatus::BudgetExhausted
                    };
                };
                if l < best {
                    best = l;
                    choice = v;
                    moved = true;
                }
            }
            current[i] = choice;
        }
        sweeps += 1;
        if !moved {
            break FitStatus::Converged;
        }
    };
    if status == FitStatus::IncompleteSweep {
        log::warn!("evaluation budget {budget} exhausted before one full sweep");
    }
    Ok(FitResult {
        weights: Weights::from_array(current),
        voi: best,
        evaluations: history.len(),
        sweeps,
        status,
        history,
    })
}

/// Fits the weights on one or more labelled maps; the loss is the mean VoI.
/// The pipeline up to the priors runs once per image; each evaluation only
/// rebuilds and solves the model.
pub fn fit_weights<T: Scalar>(
    images: &[(&ProbabilityMap<T>, &LabelImage)],
    grid: &WeightGrid,
    budget: usize,
    cfg: &PipelineConfig,
    background: Background,
) -> Result<FitResult, LearnError> {
    grid.validate()?;
    if images.is_empty() {
        return Err(LearnError::NoImages);
    }
    let mut prepared: Vec<(Prepared<T>, &LabelImage)> = Vec::with_capacity(images.len());
    for &(map, truth) in images {
        let (m, t) = ((map.width(), map.height()), (truth.width(), truth.height()));
        if m != t {
            return Err(LearnError::ShapeMismatch { map: m, truth: t });
        }
        prepared.push((prepare(map, cfg)?, truth));
    }
    coordinate_descent(grid, cfg.weights, budget, |w| {
        let mut total = 0.0;
        for (p, truth) in &prepared {
            let voi = match p.segment(w, &cfg.solve) {
                Ok((_, _, labels)) => variation_of_information(&labels, truth, background).unwrap_or(f64::INFINITY),
                Err(e) => {
                    log::warn!("weights {w:?}: {e}");
                    f64::INFINITY
                }
            };
            total += voi;
        }
        let mean = total / prepared.len() as f64;
        log::info!("weights {:?} voi {mean:.4}", w.to_array());
        mean
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn quadratic(target: [f64; 6]) -> impl FnMut(&Weights) -> f64 {
        move |w| {
            w.to_array()
                .iter()
                .zip(&target)
                .map(|(a, b)| (a - b).powi(2))
                .sum()
        }
    }

    #[test]
    fn single_point_grid_evaluates_once() {
        let w = Weights::default();
        let r = coordinate_descent(&WeightGrid::single(w), w, 10, quadratic([0.0; 6])).unwrap();
        assert_eq!(r.evaluations, 1);
        assert_eq!(r.weights, w);
        assert_eq!(r.status, FitStatus::Converged);
    }

    #[test]
    fn finds_separable_minimum() {
        let target = [-2.0, 0.5, -0.5, 0.0, -1.0, 0.5];
        let r = coordinate_descent(&WeightGrid::default(), Weights::default(), 1000, quadratic(target)).unwrap();
        assert_eq!(r.weights.to_array(), target);
        assert_eq!(r.voi, 0.0);
        assert_eq!(r.status, FitStatus::Converged);
    }

    #[test]
    fn returned_loss_is_minimum_of_history() {
        let mut calls = 0u32;
        let r = coordinate_descent(&WeightGrid::default(), Weights::default(), 1000, |w| {
            calls += 1;
            let a = w.to_array();
            (a[0] * a[1] + a[2]).sin() + a[3] * a[4] - a[5]
        })
        .unwrap();
        let min = r.history.iter().map(|h| h.1).fold(f64::INFINITY, f64::min);
        assert_eq!(r.voi, min);
        assert_eq!(calls as usize, r.evaluations);
        let best = r.history.iter().find(|h| h.1 == min).unwrap();
        assert_eq!(best.0, r.weights);
    }

    #[test]
    fn budget_before_first_sweep_is_flagged() {
        let r = coordinate_descent(&WeightGrid::default(), Weights::default(), 3, quadratic([0.5; 6])).unwrap();
        assert_eq!(r.evaluations, 3);
        assert_eq!(r.status, FitStatus::IncompleteSweep);
        let min = r.history.iter().map(|h| h.1).fold(f64::INFINITY, f64::min);
        assert_eq!(r.voi, min);
    }

    #[test]
    fn budget_after_a_sweep_is_exhausted_not_incomplete() {
        // the first sweep costs 1 + 6 * 4 evaluations from the default start
        let r = coordinate_descent(&WeightGrid::default(), Weights::default(), 26, quadratic([0.5; 6])).unwrap();
        assert_eq!(r.sweeps, 1);
        assert_eq!(r.status, FitStatus::BudgetExhausted);
    }

    #[test]
    fn start_snaps_to_nearest_grid_value() {
        let grid = WeightGrid::uniform(&[-1.0, 1.0]);
        let r = coordinate_descent(&grid, Weights::from_array([0.9, -0.8, 0.2, -0.3, 5.0, -5.0]), 1, |_| 0.0).unwrap();
        assert_eq!(r.history[0].0.to_array(), [1.0, -1.0, 1.0, -1.0, 1.0, -1.0]);
    }

    #[test]
    fn rejects_bad_grids() {
        let mut g = WeightGrid::default();
        g.values[2].clear();
        assert!(matches!(
            coordinate_descent(&g, Weights::default(), 5, |_| 0.0),
            Err(LearnError::EmptyGrid("n_on"))
        ));
        g.values[2] = vec![f64::NAN];
        assert!(matches!(
            coordinate_descent(&g, Weights::default(), 5, |_| 0.0),
            Err(LearnError::NonFiniteGrid("n_on"))
        ));
        assert!(matches!(
            coordinate_descent(&WeightGrid::default(), Weights::default(), 0, |_| 0.0),
            Err(LearnError::ZeroBudget)
        ));
    }

    #[test]
    fn deterministic() {
        let f = |w: &Weights| w.to_array().iter().enumerate().map(|(i, v)| (v * (i + 1) as f64).cos()).sum();
        let a = coordinate_descent(&WeightGrid::default(), Weights::default(), 500, f).unwrap();
        let b = coordinate_descent(&WeightGrid::default(), Weights::default(), 500, f).unwrap();
        assert_eq!(a, b);
    }
}
