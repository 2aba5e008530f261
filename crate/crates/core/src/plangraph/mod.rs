//! Planar boundary graph: junction nodes, boundary arcs and faces.
//!
//! Geometry lives on the pixel-corner lattice: corner `(x, y)` is the top-left
//! corner of pixel `(x, y)`, so the image frame spans `[0, W] x [0, H]`.
//! Screen conventions apply throughout (y grows downwards): the right-hand
//! side of a step `(dx, dy)` is `(-dy, dx)`, and "counterclockwise" means
//! counterclockwise as seen on screen.

mod extract;
mod states;

use std::collections::BTreeSet;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::imagery::Raster;

pub use extract::extract_graph;
pub use states::{
    enumerate_node_states, enumerate_node_states_with, BetaMode, BetaSource, DirectedEdge, NodeState,
    NodeStateTable, StateError, TANGENT_WINDOW,
};

/// Face id of the region outside the image frame.
pub const OUTER_FACE: usize = 0;

#[derive(Debug, thiserror::Error)]
pub enum GraphError {
    #[error("watershed result has no basins")]
    NoBasins,
    #[error("inconsistent ridge topology: ridge pixels around ({x}, {y}) touch fewer than two basins")]
    InconsistentRidge { x: usize, y: usize },
    #[error("basin {0} is empty or not 4-connected")]
    BadBasin(u32),
    #[error("invalid graph: {0}")]
    Invalid(String),
    #[error("cannot write graph dump {path}: {source}")]
    Io {
        path: std::path::PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("graph JSON: {0}")]
    Json(#[from] serde_json::Error),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NodeKind {
    Junction,
    BorderAnchor,
    /// Degree-2 node splitting a closed loop.
    Artificial,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Node {
    pub id: usize,
    /// Lattice position `(x, y)`.
    pub position: [f64; 2],
    pub kind: NodeKind,
    /// Incident arcs in counterclockwise order of their initial direction.
    pub incident_arcs: Vec<usize>,
}

impl Node {
    pub fn degree(&self) -> usize {
        self.incident_arcs.len()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ArcKind {
    Interior,
    /// Runs along the image frame, separating a basin from the outer face.
    Frame,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Arc {
    pub id: usize,
    pub from: usize,
    pub to: usize,
    pub kind: ArcKind,
    /// Lattice polyline from `from` to `to`, endpoints included.
    pub points: Vec<[f64; 2]>,
    /// Pixels along the arc in traversal order: ridge pixels for interior
    /// arcs, the adjacent in-image pixels for frame arcs.
    pub pixels: Vec<usize>,
    /// Face on the left of the traversal `from -> to`.
    pub left_face: usize,
    /// Face on the right of the traversal `from -> to`.
    pub right_face: usize,
}

impl Arc {
    /// `(left, right)` faces when traversed from `node`.
    pub fn faces_from(&self, node: usize) -> (usize, usize) {
        if node == self.from {
            (self.left_face, self.right_face)
        } else {
            (self.right_face, self.left_face)
        }
    }

    pub fn other_end(&self, node: usize) -> usize {
        if node == self.from {
            self.to
        } else {
            self.from
        }
    }

    /// Polyline points starting at `node`.
    pub fn points_from(&self, node: usize) -> Vec<[f64; 2]> {
        if node == self.from {
            self.points.clone()
        } else {
            self.points.iter().rev().copied().collect()
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Face {
    pub id: usize,
    /// Watershed basin behind this face; `None` for the outer face.
    pub basin: Option<u32>,
    pub pixel_count: usize,
    /// Arcs having this face on either side, ascending.
    pub bounding_arcs: Vec<usize>,
}

/// Planar graph of candidate boundaries with pixel provenance.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoundaryGraph {
    pub width: usize,
    pub height: usize,
    pub nodes: Vec<Node>,
    pub arcs: Vec<Arc>,
    pub faces: Vec<Face>,
    /// Basin id per pixel; 0 on ridge pixels. Face `k > 0` owns basin `k`.
    pub basins: Raster<u32>,
}

/// Arc description for [`BoundaryGraph::from_parts`].
#[derive(Clone, Debug)]
pub struct ArcSpec {
    pub from: usize,
    pub to: usize,
    pub kind: ArcKind,
    pub points: Vec<[f64; 2]>,
    pub pixels: Vec<usize>,
    pub left_face: usize,
    pub right_face: usize,
}

/// On-screen counterclockwise angle of a direction, in `[0, 2π)`.
pub(crate) fn screen_angle(d: [f64; 2]) -> f64 {
    let a = (-d[1]).atan2(d[0]);
    if a < 0.0 {
        a + std::f64::consts::TAU
    } else {
        a
    }
}

fn initial_direction(arc: &Arc, node: usize) -> [f64; 2] {
    let pts = arc.points_from(node);
    let p0 = pts[0];
    let p1 = pts
        .iter()
        .find(|p| p[0] != p0[0] || p[1] != p0[1])
        .copied()
        .unwrap_or(p0);
    [p1[0] - p0[0], p1[1] - p0[1]]
}

impl BoundaryGraph {
    /// Assembles a graph, deriving incident lists (counterclockwise), face
    /// boundaries and pixel counts. Face 0 is the outer face and face `k`
    /// owns basin `k`.
    pub fn from_parts(
        basins: Raster<u32>,
        nodes: Vec<([f64; 2], NodeKind)>,
        arcs: Vec<ArcSpec>,
        num_faces: usize,
    ) -> Result<Self, GraphError> {
        let mut counts = vec![0usize; num_faces];
        for &b in basins.as_slice() {
            if b > 0 {
                let b = b as usize;
                if b >= num_faces {
                    return Err(GraphError::Invalid(format!("basin {b} has no face")));
                }
                counts[b] += 1;
            }
        }
        let arcs: Vec<Arc> = arcs
            .into_iter()
            .enumerate()
            .map(|(id, s)| Arc {
                id,
                from: s.from,
                to: s.to,
                kind: s.kind,
                points: s.points,
                pixels: s.pixels,
                left_face: s.left_face,
                right_face: s.right_face,
            })
            .collect();
        let mut nodes: Vec<Node> = nodes
            .into_iter()
            .enumerate()
            .map(|(id, (position, kind))| Node {
                id,
                position,
                kind,
                incident_arcs: Vec::new(),
            })
            .collect();
        for a in &arcs {
            if a.from >= nodes.len() || a.to >= nodes.len() {
                return Err(GraphError::Invalid(format!("arc {} references a missing node", a.id)));
            }
            if a.points.len() < 2 {
                return Err(GraphError::Invalid(format!("arc {} has fewer than two points", a.id)));
            }
            if a.left_face >= num_faces || a.right_face >= num_faces {
                return Err(GraphError::Invalid(format!("arc {} references a missing face", a.id)));
            }
            nodes[a.from].incident_arcs.push(a.id);
            if a.to != a.from {
                nodes[a.to].incident_arcs.push(a.id);
            }
        }
        for n in &mut nodes {
            let id = n.id;
            n.incident_arcs.sort_by(|&x, &y| {
                let ax = screen_angle(initial_direction(&arcs[x], id));
                let ay = screen_angle(initial_direction(&arcs[y], id));
                ax.total_cmp(&ay).then(x.cmp(&y))
            });
        }
        let mut bounding: Vec<BTreeSet<usize>> = vec![BTreeSet::new(); num_faces];
        for a in &arcs {
            bounding[a.left_face].insert(a.id);
            bounding[a.right_face].insert(a.id);
        }
        let faces = (0..num_faces)
            .map(|id| Face {
                id,
                basin: (id != OUTER_FACE).then_some(id as u32),
                pixel_count: counts[id],
                bounding_arcs: bounding[id].iter().copied().collect(),
            })
            .collect();
        Ok(Self {
            width: basins.width(),
            height: basins.height(),
            nodes,
            arcs,
            faces,
            basins,
        })
    }

    pub fn num_nodes(&self) -> usize {
        self.nodes.len()
    }

    pub fn num_arcs(&self) -> usize {
        self.arcs.len()
    }

    pub fn num_faces(&self) -> usize {
        self.faces.len()
    }

    /// Pixel indices of every face (empty for the outer face).
    pub fn face_pixels(&self) -> Vec<Vec<usize>> {
        let mut out = vec![Vec::new(); self.faces.len()];
        for (i, &b) in self.basins.as_slice().iter().enumerate() {
            if b > 0 {
                out[b as usize].push(i);
            }
        }
        out
    }

    pub fn ridge_pixels(&self) -> impl Iterator<Item = usize> + '_ {
        self.basins
            .as_slice()
            .iter()
            .enumerate()
            .filter(|(_, &b)| b == 0)
            .map(|(i, _)| i)
    }

    /// Connected components of the node/arc graph.
    pub fn num_components(&self) -> usize {
        let mut parent: Vec<usize> = (0..self.nodes.len()).collect();
        fn find(p: &mut [usize], mut x: usize) -> usize {
            while p[x] != x {
                p[x] = p[p[x]];
                x = p[x];
            }
            x
        }
        for a in &self.arcs {
            let (x, y) = (find(&mut parent, a.from), find(&mut parent, a.to));
            if x != y {
                parent[x] = y;
            }
        }
        (0..self.nodes.len()).filter(|&i| find(&mut parent, i) == i).count()
    }

    /// `V - E + F`, which must equal `1 + C` for a planar graph with `C`
    /// connected components.
    pub fn euler_characteristic(&self) -> i64 {
        self.nodes.len() as i64 - self.arcs.len() as i64 + self.faces.len() as i64
    }

    /// Checks the structural invariants; returns the first violation.
    pub fn validate(&self) -> Result<(), GraphError> {
        let bad = |m: String| Err(GraphError::Invalid(m));
        for a in &self.arcs {
            if a.left_face == a.right_face {
                return bad(format!("arc {} has the same face {} on both sides", a.id, a.left_face));
            }
            if a.from == a.to {
                return bad(format!("arc {} is a self-loop", a.id));
            }
        }
        let expected = 1 + self.num_components() as i64;
        if self.euler_characteristic() != expected {
            return bad(format!(
                "Euler check failed: V - E + F = {} but 1 + C = {expected}",
                self.euler_characteristic()
            ));
        }
        for n in &self.nodes {
            let d = n.degree();
            let ok = match n.kind {
                NodeKind::Artificial => d == 2,
                NodeKind::Junction | NodeKind::BorderAnchor => d >= 3,
            };
            if !ok {
                return bad(format!("node {} ({:?}) has degree {d}", n.id, n.kind));
            }
            let angles: Vec<f64> = n
                .incident_arcs
                .iter()
                .map(|&a| screen_angle(initial_direction(&self.arcs[a], n.id)))
                .collect();
            if angles.windows(2).any(|w| w[0] >= w[1]) {
                return bad(format!("node {} incident arcs are not strictly counterclockwise", n.id));
            }
            for &a in &n.incident_arcs {
                let arc = &self.arcs[a];
                if arc.from != n.id && arc.to != n.id {
                    return bad(format!("node {} lists foreign arc {a}", n.id));
                }
            }
        }
        let basin_px = self.basins.as_slice().iter().filter(|&&b| b > 0).count();
        let face_px: usize = self.faces.iter().map(|f| f.pixel_count).sum();
        if basin_px != face_px {
            return bad(format!("faces hold {face_px} pixels but basins have {basin_px}"));
        }
        if self.faces.first().map(|f| f.basin.is_some()).unwrap_or(true) {
            return bad("face 0 must be the outer face".into());
        }
        Ok(())
    }

    /// Stable JSON dump (struct field order), including pixel chains.
    pub fn to_json(&self) -> Result<String, GraphError> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self, GraphError> {
        Ok(serde_json::from_str(s)?)
    }

    pub fn write_json(&self, path: impl AsRef<Path>) -> Result<(), GraphError> {
        let path = path.as_ref();
        std::fs::write(path, self.to_json()?).map_err(|source| GraphError::Io {
            path: path.to_owned(),
            source,
        })
    }
}
