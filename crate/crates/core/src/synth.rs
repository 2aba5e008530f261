//! Seeded synthetic scenes: Voronoi cells separated by membrane bands, a
//! membrane probability map with optional noise and gaps, and the truth.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::imagery::{LabelImage, ProbabilityMap, Raster, MIN_MAP_SIDE};
use crate::scalar::Scalar;

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum SynthError {
    #[error("scene {width}x{height} is smaller than {min} pixels per side")]
    TooSmall { width: usize, height: usize, min: usize },
    #[error("a scene needs at least one cell")]
    NoCells,
    #[error("{num_cells} cells with separation {separation:.1} do not fit in {width}x{height}")]
    CellsDoNotFit {
        num_cells: usize,
        separation: f64,
        width: usize,
        height: usize,
    },
    #[error("invalid parameter: {0}")]
    BadParameter(String),
    #[error("gap {index} refers to boundary {boundary} but the scene has {available}")]
    NoSuchBoundary { index: usize, boundary: usize, available: usize },
}

/// A membrane gap: `length` pixels along shared boundary `boundary`
/// (boundaries are cell pairs in lexicographic order), centred at the
/// fraction `position` of the boundary's extent.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GapSpec {
    pub boundary: usize,
    pub position: f64,
    pub length: f64,
}

impl Default for GapSpec {
    fn default() -> Self {
        Self {
            boundary: 0,
            position: 0.5,
            length: 3.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SceneSpec {
    pub width: usize,
    pub height: usize,
    pub num_cells: usize,
    /// Band width around cell boundaries; the band along the image frame
    /// is half as wide.
    pub membrane_width: f64,
    pub noise_sigma: f64,
    pub gaps: Vec<GapSpec>,
    pub seed: u64,
    pub membrane_level: f64,
    pub interior_level: f64,
}

impl Default for SceneSpec {
    fn default() -> Self {
        Self {
            width: 48,
            height: 48,
            num_cells: 4,
            membrane_width: 8.0,
            noise_sigma: 0.0,
            gaps: Vec::new(),
            seed: 0,
            membrane_level: 0.9,
            interior_level: 0.1,
        }
    }
}

impl SceneSpec {
    pub fn from_toml(s: &str) -> Result<Self, toml::de::Error> {
        toml::from_str(s)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("spec serialises")
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Scene<T> {
    /// Cells labelled `1..=K` in scanline order, membrane 0.
    pub truth: LabelImage,
    pub map: ProbabilityMap<T>,
    /// The map before noise and gaps.
    pub clean: ProbabilityMap<T>,
    pub centers: Vec<[f64; 2]>,
    /// Pixels whose probability a gap lowered.
    pub gap_pixels: Vec<usize>,
}

/// Nearest and second-nearest centre of a point, ties to the lower index.
fn nearest_two(centers: &[[f64; 2]], p: [f64; 2]) -> (usize, Option<usize>) {
    let d = |c: &[f64; 2]| (c[0] - p[0]).powi(2) + (c[1] - p[1]).powi(2);
    let mut best = (f64::INFINITY, 0usize);
    let mut second: Option<(f64, usize)> = None;
    for (i, c) in centers.iter().enumerate() {
        let di = d(c);
        if di < best.0 {
            if best.0.is_finite() {
                second = Some(best);
            }
            best = (di, i);
        } else if second.is_none_or(|s| di < s.0) {
            second = Some((di, i));
        }
    }
    (best.1, second.map(|s| s.1))
}

/// Distance from `p` to the bisector of centres `a` (nearer) and `b`.
fn bisector_distance(a: [f64; 2], b: [f64; 2], p: [f64; 2]) -> f64 {
    let da = (a[0] - p[0]).powi(2) + (a[1] - p[1]).powi(2);
    let db = (b[0] - p[0]).powi(2) + (b[1] - p[1]).powi(2);
    let ab = ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)).sqrt();
    (db - da) / (2.0 * ab)
}

fn place_centers(spec: &SceneSpec, rng: &mut ChaCha8Rng) -> Result<(Vec<[f64; 2]>, f64), SynthError> {
    let (w, h) = (spec.width as f64, spec.height as f64);
    let k = spec.num_cells;
    let separation = (2.0 * spec.membrane_width).max(0.6 * (w * h / k as f64).sqrt());
    let margin = spec.membrane_width.max(1.0);
    if w <= 2.0 * margin || h <= 2.0 * margin {
        return Err(SynthError::CellsDoNotFit {
            num_cells: k,
            separation,
            width: spec.width,
            height: spec.height,
        });
    }
    let mut centers: Vec<[f64; 2]> = Vec::with_capacity(k);
    let mut tries = 0;
    while centers.len() < k {
        tries += 1;
        if tries > 20000 {
            return Err(SynthError::CellsDoNotFit {
                num_cells: k,
                separation,
                width: spec.width,
                height: spec.height,
            });
        }
        let c = [rng.random_range(margin..w - margin), rng.random_range(margin..h - margin)];
        if centers
            .iter()
            .all(|o| (o[0] - c[0]).powi(2) + (o[1] - c[1]).powi(2) >= separation * separation)
        {
            centers.push(c);
        }
    }
    Ok((centers, separation))
}

fn validate(spec: &SceneSpec) -> Result<(), SynthError> {
    if spec.width < MIN_MAP_SIDE || spec.height < MIN_MAP_SIDE {
        return Err(SynthError::TooSmall {
            width: spec.width,
            height: spec.height,
            min: MIN_MAP_SIDE,
        });
    }
    if spec.num_cells == 0 {
        return Err(SynthError::NoCells);
    }
    let bad = |m: &str| Err(SynthError::BadParameter(m.to_string()));
    if !(spec.membrane_width > 0.0) {
        return bad("membrane_width must be positive");
    }
    if !(spec.noise_sigma >= 0.0) {
        return bad("noise_sigma must be non-negative");
    }
    for l in [spec.membrane_level, spec.interior_level] {
        if !(0.0..=1.0).contains(&l) {
            return bad("probability levels must lie in [0, 1]");
        }
    }
    for g in &spec.gaps {
        if !(g.length > 0.0) || !(0.0..=1.0).contains(&g.position) {
            return bad("gaps need a positive length and a position in [0, 1]");
        }
    }
    Ok(())
}

pub fn generate_scene<T: Scalar>(spec: &SceneSpec) -> Result<Scene<T>, SynthError> {
    validate(spec)?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let (centers, _) = place_centers(spec, &mut rng)?;
    let (w, h) = (spec.width, spec.height);
    let half = spec.membrane_width / 2.0;
    // per pixel: owning cell, membrane flag, boundary pair
    let mut owner = vec![0usize; w * h];
    let mut membrane = vec![false; w * h];
    let mut pair: Vec<Option<(usize, usize)>> = vec![None; w * h];
    for y in 0..h {
        for x in 0..w {
            let i = y * w + x;
            let p = [x as f64 + 0.5, y as f64 + 0.5];
            let (a, b) = nearest_two(&centers, p);
            owner[i] = a;
            let frame = p[0].min(p[1]).min(w as f64 - p[0]).min(h as f64 - p[1]);
            if let Some(b) = b {
                if bisector_distance(centers[a], centers[b], p) < half {
                    membrane[i] = true;
                    pair[i] = Some((a.min(b), a.max(b)));
                }
            }
            if frame < half {
                membrane[i] = true;
            }
        }
    }
    let truth_raw = Raster::from_vec(
        w,
        h,
        (0..w * h).map(|i| if membrane[i] { 0 } else { owner[i] as u32 + 1 }).collect(),
    )
    .expect("shape");
    let truth = LabelImage::new(truth_raw).relabel_components();

    let mut pairs: Vec<(usize, usize)> = pair.iter().flatten().copied().collect();
    pairs.sort_unstable();
    pairs.dedup();
    let mut gap = vec![false; w * h];
    for (index, g) in spec.gaps.iter().enumerate() {
        let &(a, b) = pairs.get(g.boundary).ok_or(SynthError::NoSuchBoundary {
            index,
            boundary: g.boundary,
            available: pairs.len(),
        })?;
        let (ca, cb) = (centers[a], centers[b]);
        let n = ((cb[0] - ca[0]).powi(2) + (cb[1] - ca[1]).powi(2)).sqrt();
        let along = [-(cb[1] - ca[1]) / n, (cb[0] - ca[0]) / n];
        let member: Vec<usize> = (0..w * h).filter(|&i| pair[i] == Some((a, b))).collect();
        let t = |i: usize| ((i % w) as f64 + 0.5) * along[0] + ((i / w) as f64 + 0.5) * along[1];
        let (lo, hi) = member
            .iter()
            .map(|&i| t(i))
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(l, u), v| (l.min(v), u.max(v)));
        let target = lo + g.position * (hi - lo);
        // centre on a pixel for odd lengths, between two for even ones
        let anchor = member
            .iter()
            .map(|&i| t(i))
            .min_by(|x, y| (x - target).abs().total_cmp(&(y - target).abs()))
            .unwrap_or(target);
        let centre = if (g.length.round() as i64) % 2 == 0 { anchor + 0.5 } else { anchor };
        // a strip at least |a_x| + |a_y| wide is 4-connected across the band
        let width = g.length.max(along[0].abs() + along[1].abs());
        for &i in &member {
            let d = t(i) - centre;
            if d >= -width / 2.0 && d < width / 2.0 {
                gap[i] = true;
            }
        }
    }

    let level = |m: bool| if m { spec.membrane_level } else { spec.interior_level };
    let clean: Vec<f64> = membrane.iter().map(|&m| level(m)).collect();
    let noise = Normal::new(0.0, spec.noise_sigma.max(0.0)).expect("sigma checked");
    let noisy: Vec<f64> = (0..w * h)
        .map(|i| {
            let base = if gap[i] { spec.interior_level } else { clean[i] };
            let n = if spec.noise_sigma > 0.0 { noise.sample(&mut rng) } else { 0.0 };
            (base + n).clamp(0.0, 1.0)
        })
        .collect();
    let to_map = |v: &[f64]| ProbabilityMap::from_vec(w, h, v.iter().map(|&p| T::lit(p)).collect()).expect("valid map");
    Ok(Scene {
        truth,
        map: to_map(&noisy),
        clean: to_map(&clean),
        centers,
        gap_pixels: (0..w * h).filter(|&i| gap[i]).collect(),
    })
}

/// Voronoi partition with every pixel labelled `1..=K` (4-connected
/// components, scanline order) and no membrane; used to build random
/// small boundary graphs directly from labels.
pub fn voronoi_partition(width: usize, height: usize, num_cells: usize, seed: u64) -> LabelImage {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let centers: Vec<[f64; 2]> = (0..num_cells.max(1))
        .map(|_| [rng.random_range(0.0..width as f64), rng.random_range(0.0..height as f64)])
        .collect();
    let lab = Raster::from_fn(width, height, |x, y| {
        nearest_two(&centers, [x as f64 + 0.5, y as f64 + 0.5]).0 as u32 + 1
    });
    LabelImage::new(lab).relabel_components()
}
