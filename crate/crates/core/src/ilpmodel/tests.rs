use super::*;
use crate::imagery::Raster;
use crate::plangraph::{enumerate_node_states, extract_graph, ArcKind, NodeKind};
use crate::priors::{node_state_scores, PriorTable};
use crate::watershed::WatershedResult;

fn graph(w: usize, h: usize, f: impl Fn(usize, usize) -> u32) -> (BoundaryGraph, NodeStateTable) {
    let g = extract_graph(&WatershedResult::from_labels(Raster::from_fn(w, h, f))).unwrap();
    let ns = enumerate_node_states(&g).unwrap();
    (g, ns)
}

/// Image split by one vertical ridge: two frame anchors joined by three arcs.
fn split() -> (BoundaryGraph, NodeStateTable) {
    graph(12, 10, |x, _| match x {
        0..=5 => 1,
        6 => 0,
        _ => 2,
    })
}

/// A square split in two by a diameter, inside a container face.
fn theta() -> (BoundaryGraph, NodeStateTable) {
    graph(20, 20, |x, y| {
        if (5..15).contains(&x) && (5..15).contains(&y) {
            if y < 10 {
                2
            } else {
                3
            }
        } else {
            1
        }
    })
}

fn flat_priors(g: &BoundaryGraph, ns: &NodeStateTable, u: f64) -> PriorTable<f64> {
    PriorTable {
        edge_prior: vec![u; g.num_arcs()],
        region_prior: vec![u; g.num_faces()],
        node_state_score: node_state_scores(ns, 45.0).unwrap(),
    }
}

fn count(cs: &[LinearConstraint], tag: ConstraintTag) -> usize {
    cs.iter().filter(|c| c.tag == tag).count()
}

#[test]
fn split_constraint_counts_by_hand() {
    let (g, ns) = split();
    assert_eq!((g.num_nodes(), g.num_arcs(), g.num_faces()), (2, 3, 3));
    let (l, cs) = build_constraints(&g, &ns).unwrap();
    use ConstraintTag::*;
    assert_eq!(count(&cs, EdgeActivation), 3);
    assert_eq!(count(&cs, NodeActivation), 2);
    assert_eq!(count(&cs, RegionActivation), 3);
    assert_eq!(count(&cs, ClosedLoop), 2);
    assert_eq!(count(&cs, NodeEdgeCorrespondence), 12);
    assert_eq!(count(&cs, Clockwise), 3);
    assert_eq!(count(&cs, MembraneContinuity), 3);
    assert_eq!(count(&cs, OuterFaceFix), 1);
    assert_eq!(cs.len(), 29);
    assert_eq!(l.num_vars(), 3 * 3 + 2 * 7 + 2 * 3);
}

#[test]
fn theta_constraint_counts_by_hand() {
    let (g, ns) = theta();
    // two junctions of degree 3 plus two artificial nodes on the frame loop
    assert_eq!((g.num_nodes(), g.num_arcs(), g.num_faces()), (4, 5, 4));
    let (_, cs) = build_constraints(&g, &ns).unwrap();
    use ConstraintTag::*;
    let expect = [
        (EdgeActivation, 5),
        (NodeActivation, 4),
        (RegionActivation, 4),
        (ClosedLoop, 4),
        (NodeEdgeCorrespondence, 2 * 6 + 2 * 2),
        (Clockwise, 5),
        (MembraneContinuity, 4),
        (OuterFaceFix, 1),
    ];
    for (tag, n) in expect {
        assert_eq!(count(&cs, tag), n, "{tag:?}");
    }
    assert!(cs.iter().all(|c| c.terms.iter().all(|t| [-2, -1, 1, 2].contains(&t.1))));
    assert!(cs.iter().all(|c| c.upper.is_none_or(|u| c.lower <= u)));
}

#[test]
fn layout_is_dense_and_invertible() {
    let (g, ns) = theta();
    let l = layout_for(&g, &ns).unwrap();
    let mut seen = vec![false; l.num_vars()];
    let mut mark = |i: usize| {
        assert!(!seen[i]);
        seen[i] = true;
    };
    for a in 0..g.num_arcs() {
        mark(l.edge(a, true));
        mark(l.edge(a, false));
        mark(l.edge_off(a));
        assert_eq!(l.kind(l.edge(a, false)), VarKind::EdgeDir { arc: a, forward: false });
    }
    for n in 0..g.num_nodes() {
        for c in 0..ns.states[n].len() {
            mark(l.node_state(n, c));
            assert_eq!(l.kind(l.node_state(n, c)), VarKind::NodeState { node: n, state: c });
        }
    }
    for f in 0..g.num_faces() {
        mark(l.region_on(f));
        mark(l.region_off(f));
        assert_eq!(l.kind(l.region_off(f)), VarKind::RegionOff { face: f });
    }
    assert!(seen.iter().all(|&s| s));
}

#[test]
fn every_variable_is_in_an_activation_constraint() {
    let (g, ns) = theta();
    let (l, cs) = build_constraints(&g, &ns).unwrap();
    let mut covered = vec![false; l.num_vars()];
    for c in cs.iter().filter(|c| {
        matches!(
            c.tag,
            ConstraintTag::EdgeActivation | ConstraintTag::NodeActivation | ConstraintTag::RegionActivation
        )
    }) {
        for &(v, _) in &c.terms {
            covered[v] = true;
        }
    }
    assert!(covered.iter().all(|&c| c));
}

#[test]
fn all_background_is_feasible() {
    for (g, ns) in [split(), theta()] {
        let m = build_model(&g, &ns, &flat_priors(&g, &ns, 0.3), &Weights::default()).unwrap();
        let r = check_feasible(&m, &m.all_background()).unwrap();
        assert!(r.is_feasible(), "{:?}", r.violations);
    }
}

#[test]
fn dangling_arc_breaks_closed_loop() {
    let (g, ns) = split();
    let m = build_model(&g, &ns, &flat_priors(&g, &ns, 0.5), &Weights::default()).unwrap();
    let mut x = m.all_background();
    let l = &m.layout;
    let a = g.arcs.iter().position(|a| a.kind == ArcKind::Interior).unwrap();
    x[l.edge_off(a)] = 0;
    x[l.edge(a, true)] = 1;
    let r = check_feasible(&m, &x).unwrap();
    assert!(r.violated_tags().contains(&ConstraintTag::ClosedLoop));
    assert_eq!(
        check_feasible(&m, &x[1..]).unwrap_err(),
        ModelError::LengthMismatch {
            got: x.len() - 1,
            want: x.len()
        }
    );
}

#[test]
fn encoded_labelings_are_feasible_and_single_flips_are_not() {
    let (g, ns) = theta();
    let m = build_model(&g, &ns, &flat_priors(&g, &ns, 0.5), &Weights::default()).unwrap();
    // both halves foreground, container and outside background
    let x = encode_face_classes(&g, &ns, &[false, false, true, true]).unwrap();
    let r = check_feasible(&m, &x).unwrap();
    assert!(r.is_feasible(), "{:?}", r.violations);
    let l = &m.layout;
    let allowed = [ConstraintTag::EdgeActivation, ConstraintTag::ClosedLoop, ConstraintTag::Clockwise];
    for a in 0..g.num_arcs() {
        for fwd in [true, false] {
            let mut y = x.clone();
            let v = l.edge(a, fwd);
            y[v] ^= 1;
            let r = check_feasible(&m, &y).unwrap();
            assert!(!r.is_feasible());
            assert!(r.violated_tags().iter().any(|t| allowed.contains(t)));
        }
    }
    // one half foreground: the other half keeps a single inactive arc
    let x = encode_face_classes(&g, &ns, &[false, false, true, false]).unwrap();
    let r = check_feasible(&m, &x).unwrap();
    assert_eq!(r.violated_tags(), vec![ConstraintTag::MembraneContinuity]);
    // background halves walled in by a foreground container: each half has
    // only the diameter inactive
    let x = encode_face_classes(&g, &ns, &[false, true, false, false]).unwrap();
    let r = check_feasible(&m, &x).unwrap();
    assert_eq!(r.violated_tags(), vec![ConstraintTag::MembraneContinuity]);
}

#[test]
fn isolated_background_face_violates_continuity() {
    // a small background square fully enclosed by one foreground face: both
    // of its bounding arcs are active
    let (g, ns) = graph(16, 16, |x, y| {
        if (6..10).contains(&x) && (6..10).contains(&y) {
            2
        } else {
            1
        }
    });
    let m = build_model(&g, &ns, &flat_priors(&g, &ns, 0.5), &Weights::default()).unwrap();
    let x = encode_face_classes(&g, &ns, &[false, true, false]).unwrap();
    let r = check_feasible(&m, &x).unwrap();
    assert!(r.violated_tags().contains(&ConstraintTag::MembraneContinuity));
}

#[test]
fn objective_closed_forms() {
    let (g, ns) = split();
    let mut w = Weights::default();
    w.e_on = -1.0;
    w.n_on = -1.0;
    let p = flat_priors(&g, &ns, 1.0);
    let m = build_model(&g, &ns, &p, &w).unwrap();
    let l = &m.layout;
    for a in 0..g.num_arcs() {
        assert_eq!(m.objective[l.edge(a, true)], -1.0);
        assert_eq!(m.objective[l.edge(a, false)], -1.0);
        assert_eq!(m.objective[l.edge_off(a)], 0.0);
    }
    // recompute every node and region coefficient from the closed forms
    for n in 0..g.num_nodes() {
        assert_eq!(m.objective[l.node_state(n, 0)], w.n_off);
        for (c, s) in ns.states[n].iter().enumerate().skip(1) {
            let beta = s.unwrap().beta_deg;
            let f = (-((beta - 180.0).to_radians().powi(2)) / (2.0 * (45f64.to_radians()).powi(2))).exp()
                / (45f64.to_radians() * (2.0 * std::f64::consts::PI).sqrt());
            assert!((m.objective[l.node_state(n, c)] - w.n_on * f).abs() < 1e-12);
        }
    }
    for f in 0..g.num_faces() {
        assert_eq!(m.objective[l.region_on(f)], w.r_on);
        assert_eq!(m.objective[l.region_off(f)], 0.0);
    }
    let zero = build_model(&g, &ns, &p, &Weights::from_array([0.0; 6])).unwrap();
    assert!(zero.objective.iter().all(|&c| c == 0.0));
}

#[test]
fn mismatched_priors_are_rejected() {
    let (g, ns) = split();
    let mut p = flat_priors(&g, &ns, 0.5);
    p.edge_prior.pop();
    assert!(matches!(
        build_objective(&g, &ns, &p, &Weights::default()),
        Err(ModelError::PriorMismatch(_))
    ));
    let (g2, _) = theta();
    assert!(build_constraints(&g2, &ns).is_err());
}

#[test]
fn build_is_deterministic() {
    let (g, ns) = theta();
    let p = flat_priors(&g, &ns, 0.25);
    let a = build_model(&g, &ns, &p, &Weights::default()).unwrap();
    let b = build_model(&g, &ns, &p, &Weights::default()).unwrap();
    assert_eq!(a, b);
    assert_eq!(a.to_lp_string(&g), b.to_lp_string(&g));
}

#[test]
fn lp_dump_names_and_rows() {
    let (g, ns) = split();
    let m = build_model(&g, &ns, &flat_priors(&g, &ns, 0.5), &Weights::default()).unwrap();
    let lp = m.to_lp_string(&g);
    assert!(lp.starts_with("\\ "));
    for section in ["Minimize", "Subject To", "Binary", "End"] {
        assert!(lp.lines().any(|l| l == section), "{section}");
    }
    let rows = lp
        .lines()
        .skip_while(|l| *l != "Subject To")
        .skip(1)
        .take_while(|l| *l != "Binary")
        .count();
    let ranged = m.constraints.iter().filter(|c| c.upper.is_some_and(|u| u != c.lower)).count();
    assert_eq!(rows, m.constraints.len() + ranged);
    let binaries = lp.lines().skip_while(|l| *l != "Binary").skip(1).take_while(|l| *l != "End").count();
    assert_eq!(binaries, m.num_vars());
    let a = &g.arcs[0];
    assert!(lp.contains(&format!("e_{}_{}_0", a.from, a.to)));
    assert!(lp.contains(&format!("e_{}_{}_0", a.to, a.from)));
    for name in ["e0_0", "n_0_0", "r_1", "r0_0"] {
        assert!(lp.contains(name), "{name}");
    }
    assert!(lp.contains("c28_outer_face: + r0_0 = 1"));
    assert!(g.nodes.iter().all(|n| n.kind == NodeKind::BorderAnchor));
}
