//! A priori activation scores for arcs, faces and node states.

use serde::{Deserialize, Serialize};

use crate::filters::OrientedResponse;
use crate::imagery::ProbabilityMap;
use crate::plangraph::{BoundaryGraph, NodeStateTable, OUTER_FACE};
use crate::scalar::Scalar;

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum PriorError {
    #[error("{what} is {got:?} but the graph is {want:?}")]
    ShapeMismatch {
        what: &'static str,
        got: (usize, usize),
        want: (usize, usize),
    },
    #[error("percentile {0} is outside (0, 100]")]
    BadPercentile(f64),
    #[error("node sigma must be positive, got {0}")]
    BadSigma(f64),
    #[error("node state table does not match the graph")]
    StateTableMismatch,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PriorConfig {
    pub node_sigma_deg: f64,
    pub edge_norm_percentile: f64,
}

impl Default for PriorConfig {
    fn default() -> Self {
        Self {
            node_sigma_deg: 45.0,
            edge_norm_percentile: 99.0,
        }
    }
}

/// `u_e` per arc, `u_r` per face and `u_n` per node state (index 0 is the
/// inactive state and always scores 1).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PriorTable<T> {
    pub edge_prior: Vec<T>,
    pub region_prior: Vec<T>,
    pub node_state_score: Vec<Vec<T>>,
}

/// Gaussian smoothness score of a turning angle, maximal for a straight
/// continuation (`beta = 180`). Evaluated in radians.
pub fn node_state_score<T: Scalar>(beta_deg: f64, sigma_deg: f64) -> T {
    let sigma = sigma_deg.to_radians();
    let d = (beta_deg - 180.0).to_radians();
    let v = (-(d * d) / (2.0 * sigma * sigma)).exp() / (sigma * (2.0 * std::f64::consts::PI).sqrt());
    T::lit(v)
}

/// `1 - mean P(membrane)` over each face; 0 for the outer face.
pub fn region_prior<T: Scalar>(map: &ProbabilityMap<T>, g: &BoundaryGraph) -> Result<Vec<T>, PriorError> {
    let got = (map.width(), map.height());
    if got != (g.width, g.height) {
        return Err(PriorError::ShapeMismatch {
            what: "probability map",
            got,
            want: (g.width, g.height),
        });
    }
    let mut sum = vec![0.0f64; g.num_faces()];
    let mut count = vec![0usize; g.num_faces()];
    for (p, &b) in map.values().iter().zip(g.basins.as_slice()) {
        if b > 0 {
            sum[b as usize] += p.as_f64();
            count[b as usize] += 1;
        }
    }
    Ok((0..g.num_faces())
        .map(|f| {
            if f == OUTER_FACE || count[f] == 0 {
                T::zero()
            } else {
                T::lit((1.0 - sum[f] / count[f] as f64).clamp(0.0, 1.0))
            }
        })
        .collect())
}

/// Nearest-rank percentile of a sample.
fn percentile(mut v: Vec<f64>, pct: f64) -> f64 {
    if v.is_empty() {
        return 0.0;
    }
    v.sort_by(f64::total_cmp);
    let rank = ((pct / 100.0) * v.len() as f64).ceil() as usize;
    v[rank.clamp(1, v.len()) - 1]
}

/// Mean response along each arc, normalised by a high percentile of the
/// response over all ridge pixels and clamped to `[0, 1]`.
pub fn edge_prior<T: Scalar>(
    resp: &OrientedResponse<T>,
    g: &BoundaryGraph,
    percentile_pct: f64,
) -> Result<Vec<T>, PriorError> {
    if !(percentile_pct > 0.0 && percentile_pct <= 100.0) {
        return Err(PriorError::BadPercentile(percentile_pct));
    }
    let got = (resp.width(), resp.height());
    if got != (g.width, g.height) {
        return Err(PriorError::ShapeMismatch {
            what: "filter response",
            got,
            want: (g.width, g.height),
        });
    }
    let r = resp.max_response.as_slice();
    let mut sample: Vec<f64> = g.ridge_pixels().map(|p| r[p].as_f64()).collect();
    if sample.is_empty() {
        sample = g.arcs.iter().flat_map(|a| a.pixels.iter().map(|&p| r[p].as_f64())).collect();
    }
    let q = percentile(sample, percentile_pct);
    Ok(g.arcs
        .iter()
        .map(|a| {
            if q <= 0.0 || a.pixels.is_empty() {
                return T::zero();
            }
            let mean = a.pixels.iter().map(|&p| r[p].as_f64()).sum::<f64>() / a.pixels.len() as f64;
            T::lit((mean / q).clamp(0.0, 1.0))
        })
        .collect())
}

/// Score of every node state; the inactive state scores exactly 1.
pub fn node_state_scores<T: Scalar>(ns: &NodeStateTable, sigma_deg: f64) -> Result<Vec<Vec<T>>, PriorError> {
    if !(sigma_deg > 0.0) {
        return Err(PriorError::BadSigma(sigma_deg));
    }
    Ok(ns
        .states
        .iter()
        .map(|list| {
            list.iter()
                .map(|s| match s {
                    None => T::one(),
                    Some(s) => node_state_score(s.beta_deg, sigma_deg),
                })
                .collect()
        })
        .collect())
}

pub fn compute_priors<T: Scalar>(
    map: &ProbabilityMap<T>,
    resp: &OrientedResponse<T>,
    g: &BoundaryGraph,
    ns: &NodeStateTable,
    cfg: &PriorConfig,
) -> Result<PriorTable<T>, PriorError> {
    if ns.states.len() != g.num_nodes() {
        return Err(PriorError::StateTableMismatch);
    }
    Ok(PriorTable {
        edge_prior: edge_prior(resp, g, cfg.edge_norm_percentile)?,
        region_prior: region_prior(map, g)?,
        node_state_score: node_state_scores(ns, cfg.node_sigma_deg)?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::imagery::Raster;
    use crate::plangraph::{enumerate_node_states, extract_graph};
    use crate::watershed::WatershedResult;

    fn split_graph() -> BoundaryGraph {
        // two faces separated by a ridge column at x = 6
        let lab = Raster::from_fn(12, 10, |x, _| match x {
            0..=5 => 1,
            6 => 0,
            _ => 2,
        });
        extract_graph(&WatershedResult::from_labels(lab)).unwrap()
    }

    fn response(f: impl Fn(usize, usize) -> f64) -> OrientedResponse<f64> {
        OrientedResponse {
            max_response: Raster::from_fn(12, 10, f),
            argmax_orientation: Raster::filled(12, 10, 0),
        }
    }

    #[test]
    fn score_at_mean_and_quarter_turn() {
        let peak: f64 = node_state_score(180.0, 45.0);
        let oracle = 1.0 / (std::f64::consts::FRAC_PI_4 * (2.0 * std::f64::consts::PI).sqrt());
        assert!((peak - oracle).abs() < 1e-12);
        let q: f64 = node_state_score(90.0, 45.0);
        assert!((q / peak - (-2.0f64).exp()).abs() < 1e-12);
        let f: f32 = node_state_score(180.0, 45.0);
        assert!((f as f64 - oracle).abs() < 1e-6);
    }

    #[test]
    fn score_is_symmetric_and_decreasing() {
        let mut last = f64::INFINITY;
        for d in 0..=180 {
            let d = d as f64;
            let a: f64 = node_state_score(180.0 + d, 45.0);
            let b: f64 = node_state_score(180.0 - d, 45.0);
            assert_eq!(a, b);
            assert!(a < last);
            last = a;
        }
    }

    #[test]
    fn region_prior_means() {
        let g = split_graph();
        let map = ProbabilityMap::new(Raster::from_fn(12, 10, |x, y| match x {
            0..=5 => 1.0,
            _ => (y % 2) as f64,
        }))
        .unwrap();
        let u = region_prior(&map, &g).unwrap();
        assert_eq!(u[OUTER_FACE], 0.0);
        assert_eq!(u[1], 0.0);
        assert_eq!(u[2], 0.5);
        let zero = ProbabilityMap::new(Raster::filled(12, 10, 0.0)).unwrap();
        assert!(region_prior(&zero, &g).unwrap()[1..].iter().all(|&v| v == 1.0));
    }

    #[test]
    fn edge_prior_normalises_and_scales() {
        let g = split_graph();
        let resp = response(|x, _| if x == 6 { 2.0 } else { 0.0 });
        let u = edge_prior(&resp, &g, 99.0).unwrap();
        let interior = g.arcs.iter().position(|a| a.kind == crate::plangraph::ArcKind::Interior).unwrap();
        assert_eq!(u[interior], 1.0);
        let scaled = response(|x, _| if x == 6 { 8.0 } else { 0.0 });
        assert_eq!(edge_prior(&scaled, &g, 99.0).unwrap(), u);
        let scaled = response(|x, _| if x == 6 { 7.5 } else { 0.0 });
        for (a, b) in edge_prior(&scaled, &g, 99.0).unwrap().iter().zip(&u) {
            assert!((a - b).abs() < 1e-12);
        }
        let flat = response(|_, _| 0.0);
        assert!(edge_prior(&flat, &g, 99.0).unwrap().iter().all(|&v| v == 0.0));
        assert!(edge_prior(&flat, &g, 0.0).is_err());
    }

    #[test]
    fn faint_arc_gets_half_the_prior() {
        // ridges at x = 4 (strong) and x = 9 (half strength)
        let lab = Raster::from_fn(14, 10, |x, _| match x {
            0..=3 => 1,
            4 | 9 => 0,
            5..=8 => 2,
            _ => 3,
        });
        let g = extract_graph(&WatershedResult::from_labels(lab)).unwrap();
        let resp = OrientedResponse {
            max_response: Raster::from_fn(14, 10, |x, _| match x {
                4 => 1.0,
                9 => 0.5,
                _ => 0.0,
            }),
            argmax_orientation: Raster::filled(14, 10, 90),
        };
        let u: Vec<f64> = edge_prior(&resp, &g, 99.0).unwrap();
        let on = |col: usize| {
            g.arcs
                .iter()
                .position(|a| a.kind == crate::plangraph::ArcKind::Interior && a.pixels.iter().all(|&p| p % 14 == col))
                .unwrap()
        };
        let (strong, faint) = (u[on(4)], u[on(9)]);
        assert_eq!(strong, 1.0);
        assert!((faint / strong - 0.5).abs() < 1e-12);
    }

    #[test]
    fn inactive_state_scores_one() {
        let g = split_graph();
        let ns = enumerate_node_states(&g).unwrap();
        let s: Vec<Vec<f32>> = node_state_scores(&ns, 45.0).unwrap();
        for (list, states) in s.iter().zip(&ns.states) {
            assert_eq!(list[0], 1.0);
            assert_eq!(list.len(), states.len());
        }
        assert!(node_state_scores::<f64>(&ns, 0.0).is_err());
    }
}
