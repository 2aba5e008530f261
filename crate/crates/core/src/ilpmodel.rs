//! The binary program: three variables per arc (one per direction plus an
//! "off" variable), one per node state, two per face (foreground and
//! background), activation and topology constraints, and a linear objective
//! built from the priors and six weights.

use std::fmt::Write as _;
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::plangraph::{BoundaryGraph, NodeStateTable, OUTER_FACE};
use crate::priors::PriorTable;
use crate::scalar::Scalar;

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum ModelError {
    #[error("node state table has {got} nodes but the graph has {want}")]
    StateTableMismatch { got: usize, want: usize },
    #[error("node {node} has no state table entry")]
    MissingStates { node: usize },
    #[error("prior table does not match the graph ({0})")]
    PriorMismatch(&'static str),
    #[error("assignment has {got} entries but the model has {want} variables")]
    LengthMismatch { got: usize, want: usize },
}

/// Objective weights; the sign convention is that of a cost, so negative
/// values reward activation.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Weights {
    pub e_on: f64,
    pub e_off: f64,
    pub n_on: f64,
    pub n_off: f64,
    pub r_on: f64,
    pub r_off: f64,
}

impl Default for Weights {
    fn default() -> Self {
        Self {
            e_on: -1.0,
            e_off: -1.0,
            n_on: -0.5,
            n_off: 0.0,
            r_on: -1.0,
            r_off: -1.0,
        }
    }
}

impl Weights {
    pub const NAMES: [&'static str; 6] = ["e_on", "e_off", "n_on", "n_off", "r_on", "r_off"];

    pub fn to_array(self) -> [f64; 6] {
        [self.e_on, self.e_off, self.n_on, self.n_off, self.r_on, self.r_off]
    }

    pub fn from_array(a: [f64; 6]) -> Self {
        Self {
            e_on: a[0],
            e_off: a[1],
            n_on: a[2],
            n_off: a[3],
            r_on: a[4],
            r_off: a[5],
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum VarKind {
    /// `forward` is the direction `from -> to` of the arc.
    EdgeDir { arc: usize, forward: bool },
    EdgeOff { arc: usize },
    NodeState { node: usize, state: usize },
    RegionOn { face: usize },
    RegionOff { face: usize },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct VarId {
    pub kind: VarKind,
    pub index: usize,
}

/// Dense variable numbering: arcs first (forward, backward, off), then all
/// node states node by node, then faces (on, off).
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct VarLayout {
    pub num_arcs: usize,
    pub num_faces: usize,
    /// First variable of each node, plus a final sentinel.
    node_start: Vec<usize>,
}

impl VarLayout {
    pub fn new(num_arcs: usize, states_per_node: &[usize], num_faces: usize) -> Self {
        let mut node_start = Vec::with_capacity(states_per_node.len() + 1);
        let mut next = 3 * num_arcs;
        for &p in states_per_node {
            node_start.push(next);
            next += p;
        }
        node_start.push(next);
        Self {
            num_arcs,
            num_faces,
            node_start,
        }
    }

    pub fn num_nodes(&self) -> usize {
        self.node_start.len() - 1
    }

    pub fn num_vars(&self) -> usize {
        self.face_base() + 2 * self.num_faces
    }

    fn face_base(&self) -> usize {
        *self.node_start.last().expect("sentinel")
    }

    pub fn edge(&self, arc: usize, forward: bool) -> usize {
        3 * arc + usize::from(!forward)
    }

    pub fn edge_off(&self, arc: usize) -> usize {
        3 * arc + 2
    }

    pub fn num_states(&self, node: usize) -> usize {
        self.node_start[node + 1] - self.node_start[node]
    }

    pub fn node_state(&self, node: usize, state: usize) -> usize {
        debug_assert!(state < self.num_states(node));
        self.node_start[node] + state
    }

    pub fn region_on(&self, face: usize) -> usize {
        self.face_base() + 2 * face
    }

    pub fn region_off(&self, face: usize) -> usize {
        self.face_base() + 2 * face + 1
    }

    pub fn kind(&self, index: usize) -> VarKind {
        assert!(index < self.num_vars(), "variable {index} out of range");
        if index < 3 * self.num_arcs {
            let arc = index / 3;
            return match index % 3 {
                0 => VarKind::EdgeDir { arc, forward: true },
                1 => VarKind::EdgeDir { arc, forward: false },
                _ => VarKind::EdgeOff { arc },
            };
        }
        if index < self.face_base() {
            let node = self.node_start.partition_point(|&s| s <= index) - 1;
            return VarKind::NodeState {
                node,
                state: index - self.node_start[node],
            };
        }
        let k = index - self.face_base();
        if k % 2 == 0 {
            VarKind::RegionOn { face: k / 2 }
        } else {
            VarKind::RegionOff { face: k / 2 }
        }
    }

    pub fn id(&self, index: usize) -> VarId {
        VarId {
            kind: self.kind(index),
            index,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ConstraintTag {
    EdgeActivation,
    NodeActivation,
    RegionActivation,
    ClosedLoop,
    NodeEdgeCorrespondence,
    Clockwise,
    MembraneContinuity,
    OuterFaceFix,
}

impl ConstraintTag {
    pub fn label(self) -> &'static str {
        match self {
            ConstraintTag::EdgeActivation => "edge_activation",
            ConstraintTag::NodeActivation => "node_activation",
            ConstraintTag::RegionActivation => "region_activation",
            ConstraintTag::ClosedLoop => "closed_loop",
            ConstraintTag::NodeEdgeCorrespondence => "node_edge",
            ConstraintTag::Clockwise => "clockwise",
            ConstraintTag::MembraneContinuity => "membrane_continuity",
            ConstraintTag::OuterFaceFix => "outer_face",
        }
    }
}

/// `lower <= sum(coef * x) <= upper`; `upper = None` means unbounded.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct LinearConstraint {
    pub terms: Vec<(usize, i8)>,
    pub lower: i32,
    pub upper: Option<i32>,
    pub tag: ConstraintTag,
}

impl LinearConstraint {
    fn eq(terms: Vec<(usize, i8)>, rhs: i32, tag: ConstraintTag) -> Self {
        Self {
            terms,
            lower: rhs,
            upper: Some(rhs),
            tag,
        }
    }

    pub fn activity(&self, x: &[u8]) -> i32 {
        self.terms.iter().map(|&(v, c)| c as i32 * x[v] as i32).sum()
    }

    pub fn holds(&self, activity: i32) -> bool {
        activity >= self.lower && self.upper.is_none_or(|u| activity <= u)
    }

    pub fn is_equality(&self) -> bool {
        self.upper == Some(self.lower)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IlpModel<T> {
    pub layout: VarLayout,
    pub constraints: Vec<LinearConstraint>,
    pub objective: Vec<T>,
    pub weights: Weights,
}

impl<T: Scalar> IlpModel<T> {
    pub fn num_vars(&self) -> usize {
        self.objective.len()
    }

    /// Objective of a 0/1 assignment, summed in variable order.
    pub fn objective_value(&self, x: &[u8]) -> T {
        self.objective
            .iter()
            .zip(x)
            .filter(|(_, &v)| v != 0)
            .fold(T::zero(), |acc, (&c, _)| acc + c)
    }

    /// Every arc off, every node inactive, every face background.
    pub fn all_background(&self) -> Vec<u8> {
        let l = &self.layout;
        let mut x = vec![0u8; self.num_vars()];
        for a in 0..l.num_arcs {
            x[l.edge_off(a)] = 1;
        }
        for n in 0..l.num_nodes() {
            x[l.node_state(n, 0)] = 1;
        }
        for f in 0..l.num_faces {
            x[l.region_off(f)] = 1;
        }
        x
    }

    /// Variable name used in the LP dump.
    pub fn var_name(&self, g: &BoundaryGraph, index: usize) -> String {
        match self.layout.kind(index) {
            VarKind::EdgeDir { arc, forward } => {
                let a = &g.arcs[arc];
                let (i, j) = if forward { (a.from, a.to) } else { (a.to, a.from) };
                format!("e_{i}_{j}_{arc}")
            }
            VarKind::EdgeOff { arc } => format!("e0_{arc}"),
            VarKind::NodeState { node, state } => format!("n_{node}_{state}"),
            VarKind::RegionOn { face } => format!("r_{face}"),
            VarKind::RegionOff { face } => format!("r0_{face}"),
        }
    }

    /// CPLEX-style LP text. Ranged rows are written as two rows.
    pub fn to_lp_string(&self, g: &BoundaryGraph) -> String {
        let names: Vec<String> = (0..self.num_vars()).map(|i| self.var_name(g, i)).collect();
        let mut s = String::new();
        let _ = writeln!(
            s,
            "\\ {} variables, {} constraints",
            self.num_vars(),
            self.constraints.len()
        );
        s.push_str("Minimize\n obj:");
        let mut any = false;
        for (i, &c) in self.objective.iter().enumerate() {
            let c = c.as_f64();
            if c == 0.0 {
                continue;
            }
            any = true;
            let _ = write!(s, " {} {} {}", if c < 0.0 { "-" } else { "+" }, c.abs(), names[i]);
        }
        if !any {
            let _ = write!(s, " 0 {}", names.first().map(String::as_str).unwrap_or("x"));
        }
        s.push_str("\nSubject To\n");
        let row = |s: &mut String, name: String, c: &LinearConstraint, sense: &str, rhs: i32| {
            let _ = write!(s, " {name}:");
            for &(v, k) in &c.terms {
                let sign = if k < 0 { "-" } else { "+" };
                let mag = k.unsigned_abs();
                if mag == 1 {
                    let _ = write!(s, " {sign} {}", names[v]);
                } else {
                    let _ = write!(s, " {sign} {mag} {}", names[v]);
                }
            }
            let _ = writeln!(s, " {sense} {rhs}");
        };
        for (k, c) in self.constraints.iter().enumerate() {
            let base = format!("c{k}_{}", c.tag.label());
            match c.upper {
                Some(u) if u == c.lower => row(&mut s, base, c, "=", u),
                Some(u) => {
                    row(&mut s, format!("{base}_lo"), c, ">=", c.lower);
                    row(&mut s, format!("{base}_hi"), c, "<=", u);
                }
                None => row(&mut s, base, c, ">=", c.lower),
            }
        }
        s.push_str("Binary\n");
        for n in &names {
            let _ = writeln!(s, " {n}");
        }
        s.push_str("End\n");
        s
    }

    pub fn write_lp(&self, g: &BoundaryGraph, mut out: impl Write) -> std::io::Result<()> {
        out.write_all(self.to_lp_string(g).as_bytes())
    }
}

fn check_states(g: &BoundaryGraph, ns: &NodeStateTable) -> Result<(), ModelError> {
    if ns.states.len() != g.num_nodes() {
        return Err(ModelError::StateTableMismatch {
            got: ns.states.len(),
            want: g.num_nodes(),
        });
    }
    if let Some(node) = ns.states.iter().position(|s| s.is_empty()) {
        return Err(ModelError::MissingStates { node });
    }
    Ok(())
}

pub fn layout_for(g: &BoundaryGraph, ns: &NodeStateTable) -> Result<VarLayout, ModelError> {
    check_states(g, ns)?;
    let per_node: Vec<usize> = ns.states.iter().map(Vec::len).collect();
    Ok(VarLayout::new(g.num_arcs(), &per_node, g.num_faces()))
}

/// All constraints, grouped by tag in declaration order.
pub fn build_constraints(g: &BoundaryGraph, ns: &NodeStateTable) -> Result<(VarLayout, Vec<LinearConstraint>), ModelError> {
    use ConstraintTag::*;
    let l = layout_for(g, ns)?;
    let mut out = Vec::new();
    for a in 0..g.num_arcs() {
        out.push(LinearConstraint::eq(
            vec![(l.edge(a, true), 1), (l.edge(a, false), 1), (l.edge_off(a), 1)],
            1,
            EdgeActivation,
        ));
    }
    for n in 0..g.num_nodes() {
        let terms = (0..l.num_states(n)).map(|c| (l.node_state(n, c), 1)).collect();
        out.push(LinearConstraint::eq(terms, 1, NodeActivation));
    }
    for f in 0..g.num_faces() {
        out.push(LinearConstraint::eq(
            vec![(l.region_on(f), 1), (l.region_off(f), 1)],
            1,
            RegionActivation,
        ));
    }
    for node in &g.nodes {
        let mut terms = vec![(l.node_state(node.id, 0), 2)];
        for &a in &node.incident_arcs {
            terms.push((l.edge(a, true), 1));
            terms.push((l.edge(a, false), 1));
        }
        out.push(LinearConstraint::eq(terms, 2, ClosedLoop));
    }
    for (n, list) in ns.states.iter().enumerate() {
        for (c, s) in list.iter().enumerate() {
            let Some(s) = s else { continue };
            out.push(LinearConstraint {
                terms: vec![
                    (l.node_state(n, c), -2),
                    (l.edge(s.outgoing.arc, s.outgoing.forward), 1),
                    (l.edge(s.incoming.arc, s.incoming.forward), 1),
                ],
                lower: 0,
                upper: Some(1),
                tag: NodeEdgeCorrespondence,
            });
        }
    }
    for a in &g.arcs {
        out.push(LinearConstraint::eq(
            vec![
                (l.edge(a.id, true), -1),
                (l.edge(a.id, false), 1),
                (l.region_on(a.right_face), 1),
                (l.region_on(a.left_face), -1),
            ],
            0,
            Clockwise,
        ));
    }
    for f in &g.faces {
        let mut terms = vec![(l.region_on(f.id), 1), (l.region_off(f.id), -1)];
        terms.extend(f.bounding_arcs.iter().map(|&a| (l.edge_off(a), 1)));
        out.push(LinearConstraint {
            terms,
            lower: 1,
            upper: None,
            tag: MembraneContinuity,
        });
    }
    out.push(LinearConstraint::eq(vec![(l.region_off(OUTER_FACE), 1)], 1, OuterFaceFix));
    Ok((l, out))
}

pub fn build_objective<T: Scalar>(
    g: &BoundaryGraph,
    ns: &NodeStateTable,
    priors: &PriorTable<T>,
    w: &Weights,
) -> Result<Vec<T>, ModelError> {
    let l = layout_for(g, ns)?;
    if priors.edge_prior.len() != g.num_arcs() {
        return Err(ModelError::PriorMismatch("edge priors"));
    }
    if priors.region_prior.len() != g.num_faces() {
        return Err(ModelError::PriorMismatch("region priors"));
    }
    if priors.node_state_score.len() != g.num_nodes()
        || priors
            .node_state_score
            .iter()
            .enumerate()
            .any(|(n, s)| s.len() != l.num_states(n))
    {
        return Err(ModelError::PriorMismatch("node state scores"));
    }
    let one = T::one();
    let mut c = vec![T::zero(); l.num_vars()];
    for (a, &u) in priors.edge_prior.iter().enumerate() {
        c[l.edge(a, true)] = T::lit(w.e_on) * u;
        c[l.edge(a, false)] = T::lit(w.e_on) * u;
        c[l.edge_off(a)] = T::lit(w.e_off) * (one - u);
    }
    for (n, scores) in priors.node_state_score.iter().enumerate() {
        c[l.node_state(n, 0)] = T::lit(w.n_off);
        for (s, &u) in scores.iter().enumerate().skip(1) {
            c[l.node_state(n, s)] = T::lit(w.n_on) * u;
        }
    }
    for (f, &u) in priors.region_prior.iter().enumerate() {
        c[l.region_on(f)] = T::lit(w.r_on) * u;
        c[l.region_off(f)] = T::lit(w.r_off) * (one - u);
    }
    Ok(c)
}

pub fn build_model<T: Scalar>(
    g: &BoundaryGraph,
    ns: &NodeStateTable,
    priors: &PriorTable<T>,
    w: &Weights,
) -> Result<IlpModel<T>, ModelError> {
    let (layout, constraints) = build_constraints(g, ns)?;
    let objective = build_objective(g, ns, priors, w)?;
    Ok(IlpModel {
        layout,
        constraints,
        objective,
        weights: *w,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Violation {
    pub constraint: usize,
    pub tag: ConstraintTag,
    pub activity: i32,
}

#[derive(Clone, Debug, PartialEq)]
pub struct FeasibilityReport<T> {
    pub violations: Vec<Violation>,
    pub objective: T,
}

impl<T> FeasibilityReport<T> {
    pub fn is_feasible(&self) -> bool {
        self.violations.is_empty()
    }

    pub fn violated_tags(&self) -> Vec<ConstraintTag> {
        let mut t: Vec<_> = self.violations.iter().map(|v| v.tag).collect();
        t.sort();
        t.dedup();
        t
    }
}

/// Independent 0/1 check of every constraint.
pub fn check_feasible<T: Scalar>(model: &IlpModel<T>, x: &[u8]) -> Result<FeasibilityReport<T>, ModelError> {
    if x.len() != model.num_vars() {
        return Err(ModelError::LengthMismatch {
            got: x.len(),
            want: model.num_vars(),
        });
    }
    let mut violations = Vec::new();
    if let Some(&bad) = x.iter().find(|&&v| v > 1) {
        // not binary: report against the first constraint touching it
        let v = x.iter().position(|&y| y == bad).expect("present");
        if let Some(k) = model.constraints.iter().position(|c| c.terms.iter().any(|t| t.0 == v)) {
            violations.push(Violation {
                constraint: k,
                tag: model.constraints[k].tag,
                activity: model.constraints[k].activity(x),
            });
        }
    }
    for (k, c) in model.constraints.iter().enumerate() {
        let act = c.activity(x);
        if !c.holds(act) {
            violations.push(Violation {
                constraint: k,
                tag: c.tag,
                activity: act,
            });
        }
    }
    violations.sort_by_key(|v| v.constraint);
    violations.dedup_by_key(|v| v.constraint);
    Ok(FeasibilityReport {
        violations,
        objective: model.objective_value(x),
    })
}

/// Assignment induced by a foreground/background class per face: arcs
/// between faces of different class are active with the foreground face on
/// their right, and each node takes the state of its active pair. Nodes
/// whose active arcs do not form one pass-through are left without a state,
/// which the feasibility check reports.
pub fn encode_face_classes(g: &BoundaryGraph, ns: &NodeStateTable, classes: &[bool]) -> Result<Vec<u8>, ModelError> {
    let l = layout_for(g, ns)?;
    if classes.len() != g.num_faces() {
        return Err(ModelError::LengthMismatch {
            got: classes.len(),
            want: g.num_faces(),
        });
    }
    let mut x = vec![0u8; l.num_vars()];
    for (f, &fg) in classes.iter().enumerate() {
        x[if fg { l.region_on(f) } else { l.region_off(f) }] = 1;
    }
    let mut active: Vec<Option<bool>> = vec![None; g.num_arcs()];
    for a in &g.arcs {
        let (r, lf) = (classes[a.right_face], classes[a.left_face]);
        if r == lf {
            x[l.edge_off(a.id)] = 1;
        } else {
            active[a.id] = Some(r);
            x[l.edge(a.id, r)] = 1;
        }
    }
    for node in &g.nodes {
        let mut entering = Vec::new();
        let mut leaving = Vec::new();
        for &a in &node.incident_arcs {
            if let Some(fwd) = active[a] {
                let arrives = if fwd { g.arcs[a].to == node.id } else { g.arcs[a].from == node.id };
                let e = crate::plangraph::DirectedEdge { arc: a, forward: fwd };
                if arrives {
                    entering.push(e);
                } else {
                    leaving.push(e);
                }
            }
        }
        if entering.is_empty() && leaving.is_empty() {
            x[l.node_state(node.id, 0)] = 1;
        } else if let ([i], [o]) = (entering.as_slice(), leaving.as_slice()) {
            let c = ns.states[node.id]
                .iter()
                .position(|s| s.is_some_and(|s| s.incoming == *i && s.outgoing == *o));
            if let Some(c) = c {
                x[l.node_state(node.id, c)] = 1;
            }
        }
    }
    Ok(x)
}

#[cfg(test)]
mod tests;
