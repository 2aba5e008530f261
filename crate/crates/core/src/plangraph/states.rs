//! Node states: one inactive state plus one state per ordered
//! (incoming, outgoing) pair of incident arcs.

use serde::{Deserialize, Serialize};

use super::{screen_angle, BoundaryGraph};
use crate::filters::OrientedResponse;

/// Number of lattice steps used to estimate an arc tangent at a node.
pub const TANGENT_WINDOW: usize = 5;

#[derive(Debug, thiserror::Error, PartialEq, Eq)]
pub enum StateError {
    #[error("node {node} has degree {degree}; at least 2 is required")]
    DegreeTooLow { node: usize, degree: usize },
    #[error("orientation raster is {got:?} but the graph is {want:?}")]
    ShapeMismatch { got: (usize, usize), want: (usize, usize) },
}

/// An arc traversed in one direction; `forward` means `from -> to`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct DirectedEdge {
    pub arc: usize,
    pub forward: bool,
}

impl DirectedEdge {
    pub fn reversed(self) -> Self {
        Self {
            arc: self.arc,
            forward: !self.forward,
        }
    }
}

/// Active node state: enter through `incoming`, leave through `outgoing`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct NodeState {
    pub incoming: DirectedEdge,
    pub outgoing: DirectedEdge,
    /// Angle between the two arcs at the node, degrees in `[0, 360)`;
    /// 180 is a straight continuation.
    pub beta_deg: f64,
}

/// Per node: `states[i][0]` is the inactive state (stored as `None`).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NodeStateTable {
    pub states: Vec<Vec<Option<NodeState>>>,
}

impl NodeStateTable {
    pub fn num_states(&self, node: usize) -> usize {
        self.states[node].len()
    }

    /// `2 * C(L, 2) + 1` for a node with `L` incident arcs.
    pub fn expected_count(degree: usize) -> usize {
        degree * degree.saturating_sub(1) + 1
    }

    pub fn total_states(&self) -> usize {
        self.states.iter().map(Vec::len).sum()
    }
}

/// Where the angle between two arcs at a node comes from.
#[derive(Clone, Copy, Debug)]
pub enum BetaSource<'a, T> {
    /// Chord from the node to the `TANGENT_WINDOW`-th lattice point.
    Geometry,
    /// Winning filter orientation at the arc pixel nearest to the node,
    /// signed to point away from the node.
    Filter(&'a OrientedResponse<T>),
}

/// Serde-friendly selector for [`BetaSource`].
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BetaMode {
    #[default]
    Geometry,
    Filter,
}

fn geometric_tangent(g: &BoundaryGraph, arc: usize, node: usize) -> [f64; 2] {
    let pts = g.arcs[arc].points_from(node);
    let k = TANGENT_WINDOW.min(pts.len() - 1);
    [pts[k][0] - pts[0][0], pts[k][1] - pts[0][1]]
}

fn filter_tangent<T>(g: &BoundaryGraph, resp: &OrientedResponse<T>, arc: usize, node: usize) -> [f64; 2] {
    let geo = geometric_tangent(g, arc, node);
    let a = &g.arcs[arc];
    let pos = g.nodes[node].position;
    let nearest = a.pixels.iter().copied().min_by(|&p, &q| {
        let d = |i: usize| {
            let (x, y) = (i % g.width, i / g.width);
            (x as f64 + 0.5 - pos[0]).powi(2) + (y as f64 + 0.5 - pos[1]).powi(2)
        };
        d(p).total_cmp(&d(q)).then(p.cmp(&q))
    });
    let Some(p) = nearest else {
        return geo;
    };
    let theta = (resp.argmax_orientation.as_slice()[p] as f64).to_radians();
    let d = [theta.cos(), theta.sin()];
    if d[0] * geo[0] + d[1] * geo[1] >= 0.0 {
        d
    } else {
        [-d[0], -d[1]]
    }
}

fn beta_between(t_in: [f64; 2], t_out: [f64; 2]) -> f64 {
    let diff = (screen_angle(t_in) - screen_angle(t_out)).to_degrees();
    let b = diff.rem_euclid(360.0);
    if b >= 360.0 {
        0.0
    } else {
        b
    }
}

/// Node states with geometric angles.
pub fn enumerate_node_states(g: &BoundaryGraph) -> Result<NodeStateTable, StateError> {
    enumerate_node_states_with::<f64>(g, BetaSource::Geometry)
}

pub fn enumerate_node_states_with<T>(
    g: &BoundaryGraph,
    source: BetaSource<'_, T>,
) -> Result<NodeStateTable, StateError> {
    if let BetaSource::Filter(resp) = source {
        let got = (resp.width(), resp.height());
        if got != (g.width, g.height) {
            return Err(StateError::ShapeMismatch {
                got,
                want: (g.width, g.height),
            });
        }
    }
    let mut states = Vec::with_capacity(g.nodes.len());
    for node in &g.nodes {
        let deg = node.degree();
        if deg < 2 {
            return Err(StateError::DegreeTooLow { node: node.id, degree: deg });
        }
        let tangents: Vec<[f64; 2]> = node
            .incident_arcs
            .iter()
            .map(|&a| match source {
                BetaSource::Geometry => geometric_tangent(g, a, node.id),
                BetaSource::Filter(resp) => filter_tangent(g, resp, a, node.id),
            })
            .collect();
        let enter = |a: usize| DirectedEdge {
            arc: a,
            forward: g.arcs[a].to == node.id,
        };
        let leave = |a: usize| DirectedEdge {
            arc: a,
            forward: g.arcs[a].from == node.id,
        };
        let mut list = Vec::with_capacity(NodeStateTable::expected_count(deg));
        list.push(None);
        for j in 0..deg {
            for k in j + 1..deg {
                let (aj, ak) = (node.incident_arcs[j], node.incident_arcs[k]);
                list.push(Some(NodeState {
                    incoming: enter(ak),
                    outgoing: leave(aj),
                    beta_deg: beta_between(tangents[k], tangents[j]),
                }));
                list.push(Some(NodeState {
                    incoming: enter(aj),
                    outgoing: leave(ak),
                    beta_deg: beta_between(tangents[j], tangents[k]),
                }));
            }
        }
        states.push(list);
    }
    Ok(NodeStateTable { states })
}
