//! Priority-flood watershed with explicit ridge pixels.

use std::cmp::Ordering;
use std::collections::{BinaryHeap, VecDeque};

use crate::imagery::Raster;
use crate::scalar::Scalar;

/// Basin labels (0 on ridge pixels) and the ridge mask.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct WatershedResult {
    pub basin_labels: Raster<u32>,
    pub num_basins: usize,
    pub ridge_mask: Raster<bool>,
}

impl WatershedResult {
    pub fn width(&self) -> usize {
        self.basin_labels.width()
    }

    pub fn height(&self) -> usize {
        self.basin_labels.height()
    }

    /// Builds a result from a label raster where 0 marks ridge pixels.
    pub fn from_labels(basin_labels: Raster<u32>) -> Self {
        let num_basins = basin_labels.as_slice().iter().copied().max().unwrap_or(0) as usize;
        let ridge_mask = basin_labels.map(|&l| l == 0);
        Self {
            basin_labels,
            num_basins,
            ridge_mask,
        }
    }

    pub fn basin_pixel_count(&self) -> usize {
        self.ridge_mask.as_slice().iter().filter(|&&r| !r).count()
    }
}

struct Entry<T> {
    height: T,
    seq: u64,
    idx: usize,
}

impl<T: PartialOrd> PartialEq for Entry<T> {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl<T: PartialOrd> Eq for Entry<T> {}

impl<T: PartialOrd> PartialOrd for Entry<T> {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl<T: PartialOrd> Ord for Entry<T> {
    // reversed: BinaryHeap is a max-heap
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .height
            .partial_cmp(&self.height)
            .unwrap_or(Ordering::Equal)
            .then_with(|| other.seq.cmp(&self.seq))
            .then_with(|| other.idx.cmp(&self.idx))
    }
}

/// Labels the regional-minimum plateaus (4-connected) as `1..=K` in scanline
/// order; all other pixels get 0.
pub fn regional_minima<T: Scalar>(height: &Raster<T>) -> (Raster<u32>, usize) {
    let n = height.len();
    let h = height.as_slice();
    let mut plateau = vec![u32::MAX; n];
    let mut out = vec![0u32; n];
    let mut count = 0u32;
    let mut queue = VecDeque::new();
    let mut members = Vec::new();
    for start in 0..n {
        if plateau[start] != u32::MAX {
            continue;
        }
        plateau[start] = start as u32;
        members.clear();
        queue.push_back(start);
        let mut is_min = true;
        while let Some(p) = queue.pop_front() {
            members.push(p);
            for q in height.neighbors4(p) {
                if h[q] == h[p] {
                    if plateau[q] == u32::MAX {
                        plateau[q] = start as u32;
                        queue.push_back(q);
                    }
                } else if h[q] < h[p] {
                    is_min = false;
                }
            }
        }
        if is_min {
            count += 1;
            for &p in &members {
                out[p] = count;
            }
        }
    }
    (
        Raster::from_vec(height.width(), height.height(), out).expect("shape"),
        count as usize,
    )
}

/// Meyer flooding from the regional minima of `height`.
///
/// A pixel whose already-flooded 4-neighbours carry two different labels
/// becomes a ridge pixel and does not propagate. Equal heights are served
/// first-in first-out. Pixels never reached because they are enclosed by
/// ridge pixels are ridge pixels too.
pub fn watershed_transform<T: Scalar>(height: &Raster<T>) -> WatershedResult {
    let (mut labels, num_minima) = regional_minima(height);
    let (w, hgt) = (height.width(), height.height());
    let n = height.len();
    let hv = height.as_slice();
    let mut queued = vec![false; n];
    let mut ridge = vec![false; n];
    let mut heap = BinaryHeap::new();
    let mut seq = 0u64;

    for p in 0..n {
        if labels.as_slice()[p] > 0 {
            queued[p] = true;
        }
    }
    for p in 0..n {
        if labels.as_slice()[p] == 0 {
            continue;
        }
        for q in height.neighbors4(p) {
            if !queued[q] {
                queued[q] = true;
                heap.push(Entry {
                    height: hv[q],
                    seq,
                    idx: q,
                });
                seq += 1;
            }
        }
    }

    while let Some(Entry { idx: p, .. }) = heap.pop() {
        let mut found = 0u32;
        let mut conflict = false;
        for q in labels.neighbors4(p) {
            let l = labels.as_slice()[q];
            if l == 0 {
                continue;
            }
            if found == 0 {
                found = l;
            } else if found != l {
                conflict = true;
                break;
            }
        }
        if conflict || found == 0 {
            ridge[p] = true;
            continue;
        }
        labels.as_mut_slice()[p] = found;
        for q in height.neighbors4(p) {
            if !queued[q] {
                queued[q] = true;
                heap.push(Entry {
                    height: hv[q],
                    seq,
                    idx: q,
                });
                seq += 1;
            }
        }
    }

    // pixels walled in by ridge pixels (isolated peaks) join the ridge
    for p in 0..n {
        if labels.as_slice()[p] == 0 {
            ridge[p] = true;
        }
    }

    WatershedResult {
        basin_labels: labels,
        num_basins: num_minima,
        ridge_mask: Raster::from_vec(w, hgt, ridge).expect("shape"),
    }
}
