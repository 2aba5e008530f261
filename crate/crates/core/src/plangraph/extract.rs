//! Vectorisation of a watershed partition into a [`BoundaryGraph`].
//!
//! Ridge pixels are first attached to an adjacent basin so the image becomes
//! a full partition into 4-connected regions. Boundaries are then traced on
//! the crack lattice between pixels of different regions (and along the
//! image frame, where the outer face lies). Lattice corners where three or
//! more boundary cracks meet become nodes; maximal crack chains between them
//! become arcs. Loops without any junction, and arcs that would start and
//! end at the same node, are cut by artificial degree-2 nodes so that every
//! face is bounded by at least two arcs.

use std::collections::{HashSet, VecDeque};

use super::{ArcKind, ArcSpec, BoundaryGraph, GraphError, NodeKind, OUTER_FACE};
use crate::imagery::Raster;
use crate::watershed::WatershedResult;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Dir {
    E,
    N,
    W,
    S,
}

impl Dir {
    // counterclockwise on screen
    const ALL: [Dir; 4] = [Dir::E, Dir::N, Dir::W, Dir::S];

    fn opposite(self) -> Dir {
        match self {
            Dir::E => Dir::W,
            Dir::W => Dir::E,
            Dir::N => Dir::S,
            Dir::S => Dir::N,
        }
    }
}

struct Step {
    crack: usize,
    next: (usize, usize),
    right: u32,
    left: u32,
    pixels: [Option<usize>; 2],
}

struct Lattice<'a> {
    w: usize,
    h: usize,
    region: &'a [u32],
}

impl Lattice<'_> {
    fn pix(&self, x: isize, y: isize) -> u32 {
        if x < 0 || y < 0 || x >= self.w as isize || y >= self.h as isize {
            OUTER_FACE as u32
        } else {
            self.region[y as usize * self.w + x as usize]
        }
    }

    fn pix_idx(&self, x: isize, y: isize) -> Option<usize> {
        (x >= 0 && y >= 0 && x < self.w as isize && y < self.h as isize).then(|| y as usize * self.w + x as usize)
    }

    fn num_cracks(&self) -> usize {
        self.w * (self.h + 1) + (self.w + 1) * self.h
    }

    fn vertex_id(&self, v: (usize, usize)) -> usize {
        v.1 * (self.w + 1) + v.0
    }

    /// Step from lattice vertex `v` in direction `d`, if that crack exists.
    fn step(&self, v: (usize, usize), d: Dir) -> Option<Step> {
        let (x, y) = v;
        let (xi, yi) = (x as isize, y as isize);
        let hcrack = |cx: usize, cy: usize| cy * self.w + cx;
        let vcrack = |cx: usize, cy: usize| self.w * (self.h + 1) + cy * (self.w + 1) + cx;
        match d {
            Dir::E if x < self.w => Some(Step {
                crack: hcrack(x, y),
                next: (x + 1, y),
                right: self.pix(xi, yi),
                left: self.pix(xi, yi - 1),
                pixels: [self.pix_idx(xi, yi - 1), self.pix_idx(xi, yi)],
            }),
            Dir::W if x > 0 => Some(Step {
                crack: hcrack(x - 1, y),
                next: (x - 1, y),
                right: self.pix(xi - 1, yi - 1),
                left: self.pix(xi - 1, yi),
                pixels: [self.pix_idx(xi - 1, yi - 1), self.pix_idx(xi - 1, yi)],
            }),
            Dir::S if y < self.h => Some(Step {
                crack: vcrack(x, y),
                next: (x, y + 1),
                right: self.pix(xi - 1, yi),
                left: self.pix(xi, yi),
                pixels: [self.pix_idx(xi - 1, yi), self.pix_idx(xi, yi)],
            }),
            Dir::N if y > 0 => Some(Step {
                crack: vcrack(x, y - 1),
                next: (x, y - 1),
                right: self.pix(xi, yi - 1),
                left: self.pix(xi - 1, yi - 1),
                pixels: [self.pix_idx(xi, yi - 1), self.pix_idx(xi - 1, yi - 1)],
            }),
            _ => None,
        }
    }

    fn boundary_step(&self, v: (usize, usize), d: Dir) -> Option<Step> {
        self.step(v, d).filter(|s| s.left != s.right)
    }

    fn degree(&self, v: (usize, usize)) -> usize {
        Dir::ALL.iter().filter(|&&d| self.boundary_step(v, d).is_some()).count()
    }
}

struct Trace {
    points: Vec<(usize, usize)>,
    /// Adjacent pixels per crack step.
    step_pixels: Vec<[Option<usize>; 2]>,
    left: u32,
    right: u32,
}

fn trace(
    lat: &Lattice<'_>,
    start: (usize, usize),
    d0: Dir,
    is_stop: &dyn Fn((usize, usize)) -> bool,
    used: &mut [bool],
) -> Trace {
    let first = lat.boundary_step(start, d0).expect("boundary crack");
    let (left, right) = (first.left, first.right);
    let mut points = vec![start];
    let mut step_pixels = Vec::new();
    let mut step = first;
    let mut dir = d0;
    loop {
        used[step.crack] = true;
        step_pixels.push(step.pixels);
        let next = step.next;
        points.push(next);
        if next == start || is_stop(next) {
            break;
        }
        let back = dir.opposite();
        let (nd, ns) = Dir::ALL
            .iter()
            .filter(|&&d| d != back)
            .find_map(|&d| lat.boundary_step(next, d).map(|s| (d, s)))
            .expect("degree-2 vertex continues");
        dir = nd;
        step = ns;
    }
    Trace {
        points,
        step_pixels,
        left,
        right,
    }
}

fn attach_ridges(ws: &WatershedResult) -> Result<Vec<u32>, GraphError> {
    let lab = &ws.basin_labels;
    let mut region: Vec<u32> = lab.as_slice().to_vec();
    let mut pending: Vec<usize> = (0..region.len()).filter(|&i| region[i] == 0).collect();
    while !pending.is_empty() {
        let mut assigned = Vec::new();
        let mut rest = Vec::new();
        for &p in &pending {
            let mut votes: Vec<u32> = lab.neighbors4(p).map(|q| region[q]).filter(|&r| r > 0).collect();
            if votes.is_empty() {
                rest.push(p);
                continue;
            }
            votes.sort_unstable();
            // majority, ties towards the smaller label
            let mut best = (0usize, u32::MAX);
            let mut i = 0;
            while i < votes.len() {
                let j = votes[i..].iter().take_while(|&&v| v == votes[i]).count();
                if j > best.0 {
                    best = (j, votes[i]);
                }
                i += j;
            }
            assigned.push((p, best.1));
        }
        if assigned.is_empty() {
            return Err(GraphError::NoBasins);
        }
        for (p, r) in assigned {
            region[p] = r;
        }
        pending = rest;
    }
    Ok(region)
}

fn check_basins(ws: &WatershedResult) -> Result<(), GraphError> {
    let lab = &ws.basin_labels;
    let k = ws.num_basins;
    if k == 0 {
        return Err(GraphError::NoBasins);
    }
    let mut components = vec![0usize; k + 1];
    let mut seen = vec![false; lab.len()];
    let mut queue = VecDeque::new();
    for s in 0..lab.len() {
        let l = lab.as_slice()[s];
        if l == 0 || seen[s] {
            continue;
        }
        if l as usize > k {
            return Err(GraphError::BadBasin(l));
        }
        components[l as usize] += 1;
        seen[s] = true;
        queue.push_back(s);
        while let Some(p) = queue.pop_front() {
            for q in lab.neighbors4(p) {
                if !seen[q] && lab.as_slice()[q] == l {
                    seen[q] = true;
                    queue.push_back(q);
                }
            }
        }
    }
    if let Some(bad) = (1..=k).find(|&b| components[b] != 1) {
        return Err(GraphError::BadBasin(bad as u32));
    }

    // every 8-connected ridge component must separate two basins or reach the frame
    let mut seen = vec![false; lab.len()];
    for s in 0..lab.len() {
        if lab.as_slice()[s] != 0 || seen[s] {
            continue;
        }
        seen[s] = true;
        queue.push_back(s);
        let mut touching = HashSet::new();
        let mut border = false;
        while let Some(p) = queue.pop_front() {
            border |= lab.is_border(p);
            for q in lab.neighbors8(p) {
                let l = lab.as_slice()[q];
                if l > 0 {
                    touching.insert(l);
                } else if !seen[q] {
                    seen[q] = true;
                    queue.push_back(q);
                }
            }
        }
        if touching.len() < 2 && !border {
            let (x, y) = lab.coords(s);
            return Err(GraphError::InconsistentRidge { x, y });
        }
    }
    Ok(())
}

fn arc_pixels(steps: &[[Option<usize>; 2]], ridge: &Raster<bool>, frame: bool) -> Vec<usize> {
    let mut seen = HashSet::new();
    let mut out = Vec::new();
    let adjacent = || steps.iter().flat_map(|s| s.iter().flatten().copied());
    if frame {
        for p in adjacent() {
            if seen.insert(p) {
                out.push(p);
            }
        }
        return out;
    }
    for p in adjacent().filter(|&p| ridge.as_slice()[p]) {
        if seen.insert(p) {
            out.push(p);
        }
    }
    if out.is_empty() {
        for p in adjacent() {
            if seen.insert(p) {
                out.push(p);
            }
        }
    }
    out
}

/// Builds the planar boundary graph of a watershed partition.
pub fn extract_graph(ws: &WatershedResult) -> Result<BoundaryGraph, GraphError> {
    check_basins(ws)?;
    let region = attach_ridges(ws)?;
    let (w, h) = (ws.width(), ws.height());
    let lat = Lattice { w, h, region: &region };

    let mut node_of_vertex = vec![usize::MAX; (w + 1) * (h + 1)];
    let mut nodes: Vec<([f64; 2], NodeKind)> = Vec::new();
    for y in 0..=h {
        for x in 0..=w {
            if lat.degree((x, y)) >= 3 {
                let kind = if x == 0 || y == 0 || x == w || y == h {
                    NodeKind::BorderAnchor
                } else {
                    NodeKind::Junction
                };
                node_of_vertex[lat.vertex_id((x, y))] = nodes.len();
                nodes.push(([x as f64, y as f64], kind));
            }
        }
    }
    let junctions: Vec<(usize, usize)> = nodes
        .iter()
        .map(|(p, _)| (p[0] as usize, p[1] as usize))
        .collect();

    let mut used = vec![false; lat.num_cracks()];
    let mut traces: Vec<Trace> = Vec::new();
    {
        let is_node = |v: (usize, usize)| lat.degree(v) >= 3;
        for &v in &junctions {
            for d in Dir::ALL {
                match lat.boundary_step(v, d) {
                    Some(s) if !used[s.crack] => traces.push(trace(&lat, v, d, &is_node, &mut used)),
                    _ => {}
                }
            }
        }
        // closed loops that never meet a junction
        let never = |_: (usize, usize)| false;
        for y in 0..=h {
            for x in 0..=w {
                for d in Dir::ALL {
                    match lat.boundary_step((x, y), d) {
                        Some(s) if !used[s.crack] => traces.push(trace(&lat, (x, y), d, &never, &mut used)),
                        _ => {}
                    }
                }
            }
        }
    }

    let mut arcs = Vec::new();
    // steps lo..hi of a trace, wrapping around for closed traces
    let mut push_arc = |from: usize, to: usize, t: &Trace, lo: usize, hi: usize| {
        let n = t.step_pixels.len();
        let frame = t.left == OUTER_FACE as u32 || t.right == OUTER_FACE as u32;
        let steps: Vec<[Option<usize>; 2]> = (lo..hi).map(|i| t.step_pixels[i % n]).collect();
        let points: Vec<[f64; 2]> = (lo..=hi)
            .map(|i| {
                let (x, y) = t.points[if i > n { i - n } else { i }];
                [x as f64, y as f64]
            })
            .collect();
        arcs.push(ArcSpec {
            from,
            to,
            kind: if frame { ArcKind::Frame } else { ArcKind::Interior },
            points,
            pixels: arc_pixels(&steps, &ws.ridge_mask, frame),
            left_face: t.left as usize,
            right_face: t.right as usize,
        });
    };
    for t in &traces {
        let start = t.points[0];
        let end = *t.points.last().expect("nonempty");
        let start_node = node_of_vertex[lat.vertex_id(start)];
        if start != end {
            push_arc(start_node, node_of_vertex[lat.vertex_id(end)], t, 0, t.points.len() - 1);
            continue;
        }
        let len = t.step_pixels.len();
        // self-loop at a junction: cut once at the middle; free loop: cut at
        // the quarter points, which tend to lie on straight runs
        let (a, lo) = if start_node != usize::MAX {
            (start_node, 0)
        } else {
            let q = len / 4;
            let p = t.points[q];
            nodes.push(([p.0 as f64, p.1 as f64], NodeKind::Artificial));
            (nodes.len() - 1, q)
        };
        let mid = lo + len / 2;
        let mp = t.points[mid % len];
        nodes.push(([mp.0 as f64, mp.1 as f64], NodeKind::Artificial));
        let b = nodes.len() - 1;
        push_arc(a, b, t, lo, mid);
        push_arc(b, a, t, mid, lo + len);
    }

    let g = BoundaryGraph::from_parts(ws.basin_labels.clone(), nodes, arcs, ws.num_basins + 1)?;
    g.validate()?;
    Ok(g)
}
