//! Turning a 0/1 assignment back into a label image.

use crate::ilpmodel::VarLayout;
use crate::imagery::{LabelImage, Raster};
use crate::plangraph::{BoundaryGraph, OUTER_FACE};

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum SegmentError {
    #[error("assignment has {got} entries but the layout has {want} variables")]
    LengthMismatch { got: usize, want: usize },
    #[error("layout does not match the graph")]
    LayoutMismatch,
    #[error("label image is {got:?} but the graph is {want:?}")]
    ShapeMismatch { got: (usize, usize), want: (usize, usize) },
}

fn find(p: &mut [usize], mut x: usize) -> usize {
    while p[x] != x {
        p[x] = p[p[x]];
        x = p[x];
    }
    x
}

/// Foreground faces become segments. Foreground faces separated only by
/// inactive arcs share a segment. A ridge pixel takes a segment's label
/// when every face pixel around it (8-neighbourhood) belongs to it; other
/// ridge pixels and background faces are membrane (label 0). Labels are
/// `1..=K` in scanline order.
pub fn decode(g: &BoundaryGraph, layout: &VarLayout, x: &[u8]) -> Result<LabelImage, SegmentError> {
    if x.len() != layout.num_vars() {
        return Err(SegmentError::LengthMismatch {
            got: x.len(),
            want: layout.num_vars(),
        });
    }
    if layout.num_arcs != g.num_arcs() || layout.num_faces != g.num_faces() {
        return Err(SegmentError::LayoutMismatch);
    }
    let fg: Vec<bool> = (0..g.num_faces())
        .map(|f| f != OUTER_FACE && x[layout.region_on(f)] == 1)
        .collect();
    let mut parent: Vec<usize> = (0..g.num_faces()).collect();
    for a in &g.arcs {
        if x[layout.edge_off(a.id)] == 1 && fg[a.left_face] && fg[a.right_face] {
            let (p, q) = (find(&mut parent, a.left_face), find(&mut parent, a.right_face));
            if p != q {
                parent[p.max(q)] = p.min(q);
            }
        }
    }
    let basins = &g.basins;
    let face_seg = |f: u32, parent: &mut Vec<usize>| -> Option<usize> {
        let f = f as usize;
        if fg[f] {
            Some(find(parent, f))
        } else {
            None
        }
    };
    let mut seg: Vec<Option<usize>> = vec![None; basins.len()];
    for (i, &b) in basins.as_slice().iter().enumerate() {
        if b > 0 {
            seg[i] = face_seg(b, &mut parent);
        }
    }
    for (i, &b) in basins.as_slice().iter().enumerate() {
        if b != 0 {
            continue;
        }
        let mut common: Option<Option<usize>> = None;
        for q in basins.neighbors8(i) {
            if basins.as_slice()[q] == 0 {
                continue;
            }
            match common {
                None => common = Some(seg[q]),
                Some(c) if c != seg[q] => {
                    common = Some(None);
                    break;
                }
                _ => {}
            }
        }
        seg[i] = common.flatten();
    }
    let mut number = vec![0u32; g.num_faces()];
    let mut next = 0;
    let labels = seg
        .iter()
        .map(|s| match s {
            None => 0,
            Some(root) => {
                if number[*root] == 0 {
                    next += 1;
                    number[*root] = next;
                }
                number[*root]
            }
        })
        .collect();
    Ok(LabelImage::new(Raster::from_vec(g.width, g.height, labels).expect("graph shape")))
}

/// Pixels labelled 0.
pub fn membrane_mask(labels: &LabelImage) -> Raster<bool> {
    labels.raster().map(|&l| l == 0)
}

/// Foreground class per face: a strict majority of its pixels carry a
/// positive label. The outer face is background.
pub fn face_classes(g: &BoundaryGraph, labels: &LabelImage) -> Result<Vec<bool>, SegmentError> {
    let got = (labels.width(), labels.height());
    if got != (g.width, g.height) {
        return Err(SegmentError::ShapeMismatch {
            got,
            want: (g.width, g.height),
        });
    }
    let mut pos = vec![0usize; g.num_faces()];
    let mut total = vec![0usize; g.num_faces()];
    for (&b, &l) in g.basins.as_slice().iter().zip(labels.labels()) {
        if b > 0 {
            total[b as usize] += 1;
            pos[b as usize] += usize::from(l > 0);
        }
    }
    Ok((0..g.num_faces())
        .map(|f| f != OUTER_FACE && 2 * pos[f] > total[f])
        .collect())
}

#[cfg(test)]
mod tests {
    use proptest::prelude::*;

    use super::*;
    use crate::ilpmodel::{encode_face_classes, layout_for};
    use crate::plangraph::{enumerate_node_states, extract_graph};
    use crate::watershed::WatershedResult;

    fn theta() -> BoundaryGraph {
        extract_graph(&WatershedResult::from_labels(Raster::from_fn(20, 20, |x, y| {
            if (5..15).contains(&x) && (5..15).contains(&y) {
                if y < 10 {
                    2
                } else {
                    3
                }
            } else {
                1
            }
        })))
        .unwrap()
    }

    fn halves(g: &BoundaryGraph) -> (usize, usize) {
        let f = |x, y| g.basins.get(x, y).to_owned() as usize;
        (f(7, 7), f(7, 12))
    }

    #[test]
    fn merged_halves_form_one_segment() {
        let g = theta();
        let ns = enumerate_node_states(&g).unwrap();
        let l = layout_for(&g, &ns).unwrap();
        let (top, bottom) = halves(&g);
        let mut classes = vec![false; g.num_faces()];
        classes[top] = true;
        classes[bottom] = true;
        let x = encode_face_classes(&g, &ns, &classes).unwrap();
        let lab = decode(&g, &l, &x).unwrap();
        assert_eq!(lab.num_segments(), 1);
        assert_eq!(lab.get(7, 7), 1);
        assert_eq!(lab.get(7, 12), 1);
        assert_eq!(lab.get(1, 1), 0);
        // switching the dividing arc on splits them
        let mid = g
            .arcs
            .iter()
            .find(|a| (a.left_face == top && a.right_face == bottom) || (a.left_face == bottom && a.right_face == top))
            .unwrap();
        let mut y = x.clone();
        y[l.edge_off(mid.id)] = 0;
        y[l.edge(mid.id, true)] = 1;
        let lab = decode(&g, &l, &y).unwrap();
        assert_eq!(lab.num_segments(), 2);
        assert_eq!((lab.get(7, 7), lab.get(7, 12)), (1, 2));
    }

    #[test]
    fn mask_and_errors() {
        let g = theta();
        let ns = enumerate_node_states(&g).unwrap();
        let l = layout_for(&g, &ns).unwrap();
        let x = encode_face_classes(&g, &ns, &vec![false; g.num_faces()]).unwrap();
        let lab = decode(&g, &l, &x).unwrap();
        assert!(membrane_mask(&lab).as_slice().iter().all(|&m| m));
        assert!(decode(&g, &l, &x[1..]).is_err());
        assert!(face_classes(&g, &LabelImage::zeros(3, 3)).is_err());
    }

    fn voronoi(centers: &[(usize, usize)]) -> BoundaryGraph {
        let lab = Raster::from_fn(18, 14, |x, y| {
            centers
                .iter()
                .enumerate()
                .map(|(i, &(cx, cy))| ((x as i64 - cx as i64).pow(2) + (y as i64 - cy as i64).pow(2), i))
                .min()
                .unwrap()
                .1 as u32
                + 1
        });
        let lab = LabelImage::new(lab).relabel_components();
        extract_graph(&WatershedResult::from_labels(lab.raster().clone())).unwrap()
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn decode_inverts_encode_on_regions(
            centers in proptest::collection::vec((0usize..18, 0usize..14), 1..6),
            bits in proptest::collection::vec(any::<bool>(), 8),
        ) {
            let g = voronoi(&centers);
            let ns = enumerate_node_states(&g).unwrap();
            let l = layout_for(&g, &ns).unwrap();
            let mut classes: Vec<bool> = (0..g.num_faces()).map(|f| bits[f % bits.len()]).collect();
            classes[OUTER_FACE] = false;
            let x = encode_face_classes(&g, &ns, &classes).unwrap();
            let lab = decode(&g, &l, &x).unwrap();
            prop_assert_eq!(face_classes(&g, &lab).unwrap(), classes);
            // merged faces share an arc, so every segment stays 4-connected
            prop_assert_eq!(lab.relabel_components().num_segments(), lab.num_segments());
        }
    }
}
