//! Rand index, variation of information and tolerance-aware topological
//! error counts between two label images.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::imagery::{LabelImage, Raster};

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum MetricsError {
    #[error("label images differ in size: {a:?} vs {b:?}")]
    ShapeMismatch { a: (usize, usize), b: (usize, usize) },
}

/// How label 0 enters the partition metrics.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Background {
    /// Label 0 is one more segment.
    #[default]
    Segment,
    /// Pixels labelled 0 in either image are ignored.
    Excluded,
}

fn check_shape(a: &LabelImage, b: &LabelImage) -> Result<(), MetricsError> {
    let (sa, sb) = ((a.width(), a.height()), (b.width(), b.height()));
    if sa != sb {
        return Err(MetricsError::ShapeMismatch { a: sa, b: sb });
    }
    Ok(())
}

struct Contingency {
    joint: BTreeMap<(u32, u32), u64>,
    rows: BTreeMap<u32, u64>,
    cols: BTreeMap<u32, u64>,
    n: u64,
}

fn contingency(a: &LabelImage, b: &LabelImage, bg: Background) -> Result<Contingency, MetricsError> {
    check_shape(a, b)?;
    let mut c = Contingency {
        joint: BTreeMap::new(),
        rows: BTreeMap::new(),
        cols: BTreeMap::new(),
        n: 0,
    };
    for (&x, &y) in a.labels().iter().zip(b.labels()) {
        if bg == Background::Excluded && (x == 0 || y == 0) {
            continue;
        }
        *c.joint.entry((x, y)).or_default() += 1;
        *c.rows.entry(x).or_default() += 1;
        *c.cols.entry(y).or_default() += 1;
        c.n += 1;
    }
    Ok(c)
}

fn pairs(k: u64) -> u128 {
    let k = k as u128;
    k * k.saturating_sub(1) / 2
}

/// Fraction of pixel pairs on which both labellings agree (same segment in
/// both, or different segments in both). 1 for fewer than two pixels.
pub fn rand_index(a: &LabelImage, b: &LabelImage, bg: Background) -> Result<f64, MetricsError> {
    let c = contingency(a, b, bg)?;
    let total = pairs(c.n);
    if total == 0 {
        return Ok(1.0);
    }
    let same_both: u128 = c.joint.values().map(|&k| pairs(k)).sum();
    let same_a: u128 = c.rows.values().map(|&k| pairs(k)).sum();
    let same_b: u128 = c.cols.values().map(|&k| pairs(k)).sum();
    let diff_both = total + same_both - same_a - same_b;
    Ok((same_both + diff_both) as f64 / total as f64)
}

/// `H(A|B) + H(B|A)` in bits.
pub fn variation_of_information(a: &LabelImage, b: &LabelImage, bg: Background) -> Result<f64, MetricsError> {
    let c = contingency(a, b, bg)?;
    if c.n == 0 {
        return Ok(0.0);
    }
    let n = c.n as f64;
    let mut v = 0.0;
    for (&(x, y), &k) in &c.joint {
        let pxy = k as f64 / n;
        let px = c.rows[&x] as f64 / n;
        let py = c.cols[&y] as f64 / n;
        v += pxy * ((px / pxy).log2() + (py / pxy).log2());
    }
    Ok(v.max(0.0))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TopoOptions {
    /// Pixels of overlap for a prediction and a truth segment to match.
    pub min_overlap: u64,
    /// Count label 0 as a segment in both images.
    pub include_background: bool,
}

impl Default for TopoOptions {
    fn default() -> Self {
        Self {
            min_overlap: 25,
            include_background: false,
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct TopoErrorReport {
    pub false_splits: u64,
    pub false_merges: u64,
    pub false_positives: u64,
    pub false_negatives: u64,
    pub tolerance: u32,
    /// Truth segments considered; the normaliser for `normalized`.
    pub truth_segments: u64,
}

impl TopoErrorReport {
    pub fn total(&self) -> u64 {
        self.false_splits + self.false_merges + self.false_positives + self.false_negatives
    }

    /// `[splits, merges, false positives, false negatives]` divided by the
    /// number of truth segments.
    pub fn normalized(&self) -> [f64; 4] {
        let d = self.truth_segments.max(1) as f64;
        [
            self.false_splits as f64 / d,
            self.false_merges as f64 / d,
            self.false_positives as f64 / d,
            self.false_negatives as f64 / d,
        ]
    }
}

/// Keeps a pixel's label only if every in-image pixel within Euclidean
/// distance `radius` carries the same label.
pub fn erode_labels(labels: &LabelImage, radius: u32) -> LabelImage {
    erode_with(labels, radius, 0)
}

fn erode_with(labels: &LabelImage, radius: u32, fill: u32) -> LabelImage {
    if radius == 0 {
        return labels.clone();
    }
    let r = radius as i64;
    let offsets: Vec<(i64, i64)> = (-r..=r)
        .flat_map(|dy| (-r..=r).map(move |dx| (dx, dy)))
        .filter(|&(dx, dy)| (dx, dy) != (0, 0) && dx * dx + dy * dy <= r * r)
        .collect();
    let (w, h) = (labels.width() as i64, labels.height() as i64);
    let src = labels.raster();
    let out = Raster::from_fn(labels.width(), labels.height(), |x, y| {
        let l = *src.get(x, y);
        let keep = offsets.iter().all(|&(dx, dy)| {
            let (u, v) = (x as i64 + dx, y as i64 + dy);
            u < 0 || v < 0 || u >= w || v >= h || *src.get(u as usize, v as usize) == l
        });
        if keep {
            l
        } else {
            fill
        }
    });
    LabelImage::new(out)
}

const ERODED: u32 = u32::MAX;

/// Approximate topological errors. Truth segments are eroded by
/// `tolerance`; a prediction and a truth segment match when they share at
/// least `min_overlap` pixels after erosion. A truth matched by `k >= 2`
/// predictions adds `k - 1` splits, a prediction matched by `k >= 2` truths
/// adds `k - 1` merges. A prediction overlapping every truth segment by
/// less than `min_overlap` before erosion is a false positive; a truth
/// segment overlapped that little by every prediction is a false negative.
/// Truth segments that vanish under erosion take no part in split and
/// merge counting, so those counts cannot grow with the tolerance.
pub fn topo_errors(
    pred: &LabelImage,
    truth: &LabelImage,
    tolerance: u32,
    opts: &TopoOptions,
) -> Result<TopoErrorReport, MetricsError> {
    check_shape(pred, truth)?;
    let counted = |l: u32| opts.include_background || l != 0;
    let overlaps = |t: &LabelImage| {
        let mut m: BTreeMap<(u32, u32), u64> = BTreeMap::new();
        for (&p, &q) in pred.labels().iter().zip(t.labels()) {
            if counted(p) && counted(q) {
                *m.entry((p, q)).or_default() += 1;
            }
        }
        m
    };
    let eroded = erode_with(truth, tolerance, ERODED);
    let mut truths: Vec<u32> = truth.labels().iter().copied().filter(|&l| counted(l)).collect();
    truths.sort_unstable();
    truths.dedup();
    let mut preds: Vec<u32> = pred.labels().iter().copied().filter(|&l| counted(l)).collect();
    preds.sort_unstable();
    preds.dedup();
    let raw = overlaps(truth);
    let mut per_truth: BTreeMap<u32, u64> = BTreeMap::new();
    let mut per_pred: BTreeMap<u32, u64> = BTreeMap::new();
    for (&(p, t), &k) in &overlaps(&eroded) {
        if t != ERODED && k >= opts.min_overlap {
            *per_truth.entry(t).or_default() += 1;
            *per_pred.entry(p).or_default() += 1;
        }
    }
    let mut raw_truth: BTreeMap<u32, bool> = BTreeMap::new();
    let mut raw_pred: BTreeMap<u32, bool> = BTreeMap::new();
    for (&(p, t), &k) in &raw {
        if k >= opts.min_overlap {
            raw_truth.insert(t, true);
            raw_pred.insert(p, true);
        }
    }
    let splits = per_truth.values().map(|&k| k.saturating_sub(1)).sum();
    let merges = per_pred.values().map(|&k| k.saturating_sub(1)).sum();
    let fps = preds.iter().filter(|p| !raw_pred.contains_key(p)).count() as u64;
    let fns = truths.iter().filter(|t| !raw_truth.contains_key(t)).count() as u64;
    Ok(TopoErrorReport {
        false_splits: splits,
        false_merges: merges,
        false_positives: fps,
        false_negatives: fns,
        tolerance,
        truth_segments: truths.len() as u64,
    })
}

/// One CSV row of an evaluation.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricRow {
    pub image: String,
    pub method: String,
    pub tolerance: u32,
    pub rand_index: f64,
    pub voi: f64,
    pub false_splits: f64,
    pub false_merges: f64,
    pub false_positives: f64,
    pub false_negatives: f64,
}

impl MetricRow {
    pub const HEADER: &'static str =
        "image,method,tolerance,rand_index,voi,false_splits,false_merges,false_positives,false_negatives";

    pub fn new(image: &str, method: &str, ri: f64, voi: f64, topo: &TopoErrorReport, normalize: bool) -> Self {
        let [s, m, p, n] = if normalize {
            topo.normalized()
        } else {
            [
                topo.false_splits as f64,
                topo.false_merges as f64,
                topo.false_positives as f64,
                topo.false_negatives as f64,
            ]
        };
        Self {
            image: image.to_string(),
            method: method.to_string(),
            tolerance: topo.tolerance,
            rand_index: ri,
            voi,
            false_splits: s,
            false_merges: m,
            false_positives: p,
            false_negatives: n,
        }
    }

    pub fn to_csv(&self) -> String {
        format!(
            "{},{},{},{:.6},{:.6},{},{},{},{}",
            self.image,
            self.method,
            self.tolerance,
            self.rand_index,
            self.voi,
            self.false_splits,
            self.false_merges,
            self.false_positives,
            self.false_negatives
        )
    }
}

/// Per-column means of rows sharing a tolerance, labelled `mean`.
pub fn mean_rows(rows: &[MetricRow]) -> Vec<MetricRow> {
    let mut by_tol: BTreeMap<(String, u32), Vec<&MetricRow>> = BTreeMap::new();
    for r in rows {
        by_tol.entry((r.method.clone(), r.tolerance)).or_default().push(r);
    }
    by_tol
        .into_iter()
        .map(|((method, tolerance), rs)| {
            let k = rs.len() as f64;
            let mean = |f: fn(&MetricRow) -> f64| rs.iter().map(|r| f(r)).sum::<f64>() / k;
            MetricRow {
                image: "mean".to_string(),
                method,
                tolerance,
                rand_index: mean(|r| r.rand_index),
                voi: mean(|r| r.voi),
                false_splits: mean(|r| r.false_splits),
                false_merges: mean(|r| r.false_merges),
                false_positives: mean(|r| r.false_positives),
                false_negatives: mean(|r| r.false_negatives),
            }
        })
        .collect()
}
