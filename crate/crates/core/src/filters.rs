//! Gaussian smoothing and the oriented ridge filter bank.
//!
//! Orientation `θ` is measured in image coordinates (x to the right, y down),
//! so a kernel at `θ` is aligned with the vector `(cos θ, sin θ)`.

use serde::{Deserialize, Serialize};

use crate::imagery::{ProbabilityMap, Raster};
use crate::scalar::Scalar;

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum FilterError {
    #[error("sigma must be positive, got {0}")]
    NonPositiveSigma(f64),
    #[error("number of orientations {0} must be positive and divide 360")]
    BadOrientationCount(usize),
    #[error("half length {0} is below the minimum of 2")]
    HalfLengthTooSmall(usize),
    #[error("kernel of side {side} does not fit in a {width}x{height} image")]
    KernelLargerThanImage {
        side: usize,
        width: usize,
        height: usize,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FilterConfig {
    pub num_orientations: usize,
    pub half_length: usize,
    pub sigma_perp: f64,
    pub smooth_sigma: f64,
}

impl Default for FilterConfig {
    fn default() -> Self {
        Self {
            num_orientations: 36,
            half_length: 4,
            sigma_perp: 1.0,
            smooth_sigma: 1.4,
        }
    }
}

/// Symmetric reflection `d c b a | a b c d | d c b a` of a possibly
/// out-of-range index.
#[inline]
pub(crate) fn reflect(i: isize, n: usize) -> usize {
    let n = n as isize;
    let m = i.rem_euclid(2 * n);
    (if m >= n { 2 * n - 1 - m } else { m }) as usize
}

/// Normalised 1D Gaussian taps for offsets `-r..=r`, `r = ceil(3 sigma)`.
pub fn gaussian_kernel<T: Scalar>(sigma: f64) -> Result<Vec<T>, FilterError> {
    if !(sigma > 0.0) || !sigma.is_finite() {
        return Err(FilterError::NonPositiveSigma(sigma));
    }
    let r = (3.0 * sigma).ceil() as isize;
    let raw: Vec<f64> = (-r..=r)
        .map(|i| (-(i as f64).powi(2) / (2.0 * sigma * sigma)).exp())
        .collect();
    let sum: f64 = raw.iter().sum();
    Ok(raw.into_iter().map(|v| T::lit(v / sum)).collect())
}

/// Separable Gaussian convolution with reflective borders.
pub fn gaussian_smooth<T: Scalar>(map: &Raster<T>, sigma: f64) -> Result<Raster<T>, FilterError> {
    let kernel: Vec<T> = gaussian_kernel(sigma)?;
    let r = (kernel.len() / 2) as isize;
    let (w, h) = (map.width(), map.height());
    let src = map.as_slice();

    let mut tmp = vec![T::zero(); w * h];
    for y in 0..h {
        let row = &src[y * w..(y + 1) * w];
        for x in 0..w {
            let mut acc = T::zero();
            for (k, &kv) in kernel.iter().enumerate() {
                let sx = reflect(x as isize + k as isize - r, w);
                acc = acc + kv * row[sx];
            }
            tmp[y * w + x] = acc;
        }
    }
    let mut out = vec![T::zero(); w * h];
    for y in 0..h {
        for x in 0..w {
            let mut acc = T::zero();
            for (k, &kv) in kernel.iter().enumerate() {
                let sy = reflect(y as isize + k as isize - r, h);
                acc = acc + kv * tmp[sy * w + x];
            }
            out[y * w + x] = acc;
        }
    }
    Ok(Raster::from_vec(w, h, out).expect("same shape"))
}

/// Maximum oriented response and its winning orientation per pixel.
#[derive(Clone, Debug, PartialEq)]
pub struct OrientedResponse<T> {
    pub max_response: Raster<T>,
    /// Degrees, multiples of `360 / num_orientations`.
    pub argmax_orientation: Raster<u16>,
}

impl<T> OrientedResponse<T> {
    pub fn width(&self) -> usize {
        self.max_response.width()
    }

    pub fn height(&self) -> usize {
        self.max_response.height()
    }
}

#[derive(Clone, Debug)]
struct Tap<T> {
    dx: isize,
    dy: isize,
    w: T,
}

/// Line-shaped ridge kernels: negative second derivative of a Gaussian
/// across the line, Gaussian taper along it, zero mean.
#[derive(Clone, Debug)]
pub struct FilterBank<T> {
    kernels: Vec<Vec<Tap<T>>>,
    abs_mass: Vec<T>,
    step_deg: u16,
    radius: usize,
}

impl<T: Scalar> FilterBank<T> {
    pub fn new(num_orientations: usize, half_length: usize, sigma_perp: f64) -> Result<Self, FilterError> {
        if num_orientations == 0 || 360 % num_orientations != 0 {
            return Err(FilterError::BadOrientationCount(num_orientations));
        }
        if half_length < 2 {
            return Err(FilterError::HalfLengthTooSmall(half_length));
        }
        if !(sigma_perp > 0.0) || !sigma_perp.is_finite() {
            return Err(FilterError::NonPositiveSigma(sigma_perp));
        }
        let step = 360 / num_orientations;
        let across_reach = (3.0 * sigma_perp).ceil();
        let radius = (half_length as f64).max(across_reach) as usize;
        let kernels: Vec<Vec<Tap<T>>> = (0..num_orientations)
            .map(|k| ridge_kernel((k * step) as f64, half_length, sigma_perp, radius))
            .collect();
        let abs_mass = kernels
            .iter()
            .map(|taps| taps.iter().map(|t| t.w.abs()).sum())
            .collect();
        Ok(Self {
            kernels,
            abs_mass,
            step_deg: step as u16,
            radius,
        })
    }

    pub fn from_config(cfg: &FilterConfig) -> Result<Self, FilterError> {
        Self::new(cfg.num_orientations, cfg.half_length, cfg.sigma_perp)
    }

    pub fn num_orientations(&self) -> usize {
        self.kernels.len()
    }

    /// Side length of the square kernel window.
    pub fn side(&self) -> usize {
        2 * self.radius + 1
    }

    pub fn orientation_deg(&self, k: usize) -> u16 {
        k as u16 * self.step_deg
    }

    /// Kernel weights as `(dx, dy, weight)`, mainly for inspection.
    pub fn kernel_taps(&self, k: usize) -> Vec<(isize, isize, T)> {
        self.kernels[k].iter().map(|t| (t.dx, t.dy, t.w)).collect()
    }

    fn check_fits(&self, w: usize, h: usize) -> Result<(), FilterError> {
        if self.side() > w || self.side() > h {
            return Err(FilterError::KernelLargerThanImage {
                side: self.side(),
                width: w,
                height: h,
            });
        }
        Ok(())
    }

    /// Rectified response of orientation `k` at every pixel.
    pub fn respond(&self, map: &Raster<T>, k: usize) -> Result<Raster<T>, FilterError> {
        self.check_fits(map.width(), map.height())?;
        let peak = map.as_slice().iter().fold(T::zero(), |a, &v| a.max(v.abs()));
        let floor = T::lit(16.0) * T::epsilon() * self.abs_mass[k] * peak;
        let (w, h) = (map.width(), map.height());
        Ok(Raster::from_fn(w, h, |x, y| self.correlate(map, k, x, y, floor)))
    }

    #[inline]
    fn correlate(&self, map: &Raster<T>, k: usize, x: usize, y: usize, floor: T) -> T {
        let (w, h) = (map.width(), map.height());
        let src = map.as_slice();
        let r = self.radius;
        let mut acc = T::zero();
        if x >= r && y >= r && x + r < w && y + r < h {
            for t in &self.kernels[k] {
                let sx = (x as isize + t.dx) as usize;
                let sy = (y as isize + t.dy) as usize;
                acc = acc + t.w * src[sy * w + sx];
            }
        } else {
            for t in &self.kernels[k] {
                let sx = reflect(x as isize + t.dx, w);
                let sy = reflect(y as isize + t.dy, h);
                acc = acc + t.w * src[sy * w + sx];
            }
        }
        if acc > floor {
            acc
        } else {
            T::zero()
        }
    }

    /// Max and argmax over all orientations; the lowest orientation wins ties.
    pub fn apply(&self, map: &Raster<T>) -> Result<OrientedResponse<T>, FilterError> {
        self.check_fits(map.width(), map.height())?;
        let (w, h) = (map.width(), map.height());
        let peak = map.as_slice().iter().fold(T::zero(), |a, &v| a.max(v.abs()));
        let floors: Vec<T> = self
            .abs_mass
            .iter()
            .map(|&m| T::lit(16.0) * T::epsilon() * m * peak)
            .collect();
        let mut best = vec![T::zero(); w * h];
        let mut arg = vec![0u16; w * h];
        for y in 0..h {
            for x in 0..w {
                let i = y * w + x;
                let mut b = self.correlate(map, 0, x, y, floors[0]);
                let mut a = 0u16;
                for k in 1..self.kernels.len() {
                    let r = self.correlate(map, k, x, y, floors[k]);
                    if r > b {
                        b = r;
                        a = self.orientation_deg(k);
                    }
                }
                best[i] = b;
                arg[i] = a;
            }
        }
        Ok(OrientedResponse {
            max_response: Raster::from_vec(w, h, best).expect("shape"),
            argmax_orientation: Raster::from_vec(w, h, arg).expect("shape"),
        })
    }
}

fn ridge_kernel<T: Scalar>(theta_deg: f64, half_length: usize, sigma_perp: f64, radius: usize) -> Vec<Tap<T>> {
    let (s, c) = theta_deg.to_radians().sin_cos();
    let r = radius as isize;
    let half = half_length as f64 + 0.5;
    let sigma_along = half_length as f64 / 2.0;
    let across_reach = 3.0 * sigma_perp + 0.5;
    let var = sigma_perp * sigma_perp;

    let mut raw = Vec::new();
    for dy in -r..=r {
        for dx in -r..=r {
            let (fx, fy) = (dx as f64, dy as f64);
            let along = fx * c + fy * s;
            let across = -fx * s + fy * c;
            if along.abs() > half || across.abs() > across_reach {
                continue;
            }
            let taper = (-along * along / (2.0 * sigma_along * sigma_along)).exp();
            let profile = (1.0 - across * across / var) * (-across * across / (2.0 * var)).exp();
            raw.push((dx, dy, taper, taper * profile));
        }
    }
    // remove the DC component with a taper-shaped correction
    let sum_w: f64 = raw.iter().map(|t| t.3).sum();
    let sum_t: f64 = raw.iter().map(|t| t.2).sum();
    let shift = sum_w / sum_t;
    let zeroed: Vec<(isize, isize, f64)> = raw.iter().map(|&(dx, dy, t, w)| (dx, dy, w - shift * t)).collect();
    let pos: f64 = zeroed.iter().map(|t| t.2.max(0.0)).sum();
    zeroed
        .into_iter()
        .map(|(dx, dy, w)| Tap {
            dx,
            dy,
            w: T::lit(w / pos),
        })
        .collect()
}

/// Filter bank with the given parameters applied to a probability map.
pub fn oriented_filter_bank<T: Scalar>(
    map: &ProbabilityMap<T>,
    num_orientations: usize,
    half_length: usize,
    sigma_perp: f64,
) -> Result<OrientedResponse<T>, FilterError> {
    FilterBank::new(num_orientations, half_length, sigma_perp)?.apply(map.raster())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn line_map(w: usize, h: usize, on: impl Fn(usize, usize) -> bool) -> ProbabilityMap<f64> {
        ProbabilityMap::new(Raster::from_fn(w, h, |x, y| if on(x, y) { 1.0 } else { 0.0 })).unwrap()
    }

    /// Independent brute-force correlation: evaluates the kernel formula
    /// directly at each window offset, without the bank's tap tables.
    fn brute_response(map: &Raster<f64>, theta: f64, hl: usize, sp: f64, x: usize, y: usize) -> f64 {
        let r = (hl as f64).max((3.0 * sp).ceil()) as isize;
        let (s, c) = theta.to_radians().sin_cos();
        let sa = hl as f64 / 2.0;
        let mut taps = vec![];
        for dy in -r..=r {
            for dx in -r..=r {
                let a = dx as f64 * c + dy as f64 * s;
                let q = -(dx as f64) * s + dy as f64 * c;
                if a.abs() <= hl as f64 + 0.5 && q.abs() <= 3.0 * sp + 0.5 {
                    let t = (-a * a / (2.0 * sa * sa)).exp();
                    let p = (1.0 - q * q / (sp * sp)) * (-q * q / (2.0 * sp * sp)).exp();
                    taps.push((dx, dy, t, t * p));
                }
            }
        }
        let mean = taps.iter().map(|t| t.3).sum::<f64>() / taps.iter().map(|t| t.2).sum::<f64>();
        let pos: f64 = taps.iter().map(|t| (t.3 - mean * t.2).max(0.0)).sum();
        let mut acc = 0.0;
        for (dx, dy, t, wv) in taps {
            let sx = reflect(x as isize + dx, map.width());
            let sy = reflect(y as isize + dy, map.height());
            acc += (wv - mean * t) / pos * map.get(sx, sy);
        }
        acc.max(0.0)
    }

    fn brute_argmax(map: &Raster<f64>, x: usize, y: usize) -> (u16, f64) {
        let mut best = (0u16, -1.0);
        for k in 0..36 {
            let r = brute_response(map, (k * 10) as f64, 4, 1.0, x, y);
            if r > best.1 + 1e-12 {
                best = ((k * 10) as u16, r);
            }
        }
        best
    }

    #[test]
    fn smoothing_constant_is_identity() {
        let r = Raster::filled(12, 9, 0.37f64);
        let s = gaussian_smooth(&r, 1.4).unwrap();
        assert!(s.as_slice().iter().all(|v| (v - 0.37).abs() < 1e-12));
    }

    #[test]
    fn smoothing_impulse_matches_kernel_peak() {
        let n = 21;
        let mut r = Raster::filled(n, n, 0.0f64);
        *r.get_mut(10, 10) = 1.0;
        let s = gaussian_smooth(&r, 1.4).unwrap();
        // direct summation of the sampled 1D Gaussian
        let rad = (3.0f64 * 1.4).ceil() as i32;
        let z: f64 = (-rad..=rad).map(|i| (-(i * i) as f64 / (2.0 * 1.96)).exp()).sum();
        let peak = 1.0 / (z * z);
        assert!((s.get(10, 10) - peak).abs() < 1e-12);
        let mass: f64 = s.as_slice().iter().sum();
        assert!((mass - 1.0).abs() < 1e-6);
    }

    #[test]
    fn smoothing_rejects_non_positive_sigma() {
        let r = Raster::filled(8, 8, 0.0f64);
        assert_eq!(gaussian_smooth(&r, 0.0), Err(FilterError::NonPositiveSigma(0.0)));
        assert!(gaussian_smooth(&r, -1.0).is_err());
    }

    #[test]
    fn reflect_handles_far_indices() {
        assert_eq!(reflect(-1, 5), 0);
        assert_eq!(reflect(-2, 5), 1);
        assert_eq!(reflect(5, 5), 4);
        assert_eq!(reflect(7, 5), 2);
        assert_eq!(reflect(-7, 1), 0);
        assert_eq!(reflect(12, 3), 0);
    }

    #[test]
    fn horizontal_line_wins_at_0_or_180() {
        let map = line_map(32, 32, |_, y| y == 16);
        let resp = oriented_filter_bank(&map, 36, 4, 1.0).unwrap();
        for x in 6..26 {
            let a = *resp.argmax_orientation.get(x, 16);
            assert!(a == 0 || a == 180, "x={x} argmax={a}");
            assert!(resp.max_response.get(x, 16) > resp.max_response.get(x, 19));
            assert!(resp.max_response.get(x, 16) > resp.max_response.get(x, 13));
            let (ba, bv) = brute_argmax(map.raster(), x, 16);
            assert!(ba == 0 || ba == 180);
            assert!((bv - resp.max_response.get(x, 16)).abs() < 1e-9);
        }
    }

    #[test]
    fn diagonal_line_wins_near_45() {
        let map = line_map(32, 32, |x, y| x == y);
        let resp = oriented_filter_bank(&map, 36, 4, 1.0).unwrap();
        for i in 8..24 {
            let a = *resp.argmax_orientation.get(i, i) % 180;
            assert!(a == 40 || a == 50, "i={i} argmax={a}");
            let (ba, _) = brute_argmax(map.raster(), i, i);
            assert!(ba % 180 == 40 || ba % 180 == 50);
        }
    }

    #[test]
    fn uniform_map_is_flat_and_lowest_orientation() {
        let map = ProbabilityMap::new(Raster::filled(16, 16, 0.6f64)).unwrap();
        let resp = oriented_filter_bank(&map, 36, 4, 1.0).unwrap();
        let first = *resp.max_response.get(0, 0);
        assert!(resp.max_response.as_slice().iter().all(|&v| v == first));
        assert!(resp.argmax_orientation.as_slice().iter().all(|&a| a == 0));
    }

    #[test]
    fn max_dominates_every_orientation() {
        let map = line_map(24, 24, |x, y| (x + 2 * y) % 11 == 0 || x == 5);
        let bank = FilterBank::<f64>::new(36, 4, 1.0).unwrap();
        let resp = bank.apply(map.raster()).unwrap();
        for k in 0..36 {
            let rk = bank.respond(map.raster(), k).unwrap();
            for (a, b) in resp.max_response.as_slice().iter().zip(rk.as_slice()) {
                assert!(a >= b);
                assert!(*b >= 0.0);
            }
        }
        assert!(resp.argmax_orientation.as_slice().iter().all(|&a| a % 10 == 0 && a <= 350));
    }

    #[test]
    fn rotation_by_90_rotates_orientation() {
        let map = line_map(32, 32, |x, y| y == 12 && x > 3 && x < 28);
        // rotate 90 degrees: (x, y) -> (W-1-y, x)
        let rot = line_map(32, 32, |x, y| {
            let (ox, oy) = (y, 31 - x);
            oy == 12 && ox > 3 && ox < 28
        });
        let a = oriented_filter_bank(&map, 36, 4, 1.0).unwrap();
        let b = oriented_filter_bank(&rot, 36, 4, 1.0).unwrap();
        for x in 8..24 {
            let (rx, ry) = (31 - 12, x);
            let ta = *a.argmax_orientation.get(x, 12) as i32;
            let tb = *b.argmax_orientation.get(rx, ry) as i32;
            assert_eq!((ta + 90).rem_euclid(180), tb.rem_euclid(180));
        }
    }

    #[test]
    fn parameter_validation() {
        let map = line_map(8, 8, |_, _| false);
        assert!(matches!(
            oriented_filter_bank(&map, 7, 4, 1.0),
            Err(FilterError::BadOrientationCount(7))
        ));
        assert!(matches!(
            oriented_filter_bank(&map, 36, 1, 1.0),
            Err(FilterError::HalfLengthTooSmall(1))
        ));
        assert!(matches!(
            oriented_filter_bank(&map, 36, 4, 1.0),
            Err(FilterError::KernelLargerThanImage { side: 9, .. })
        ));
        let ok = line_map(9, 9, |_, _| false);
        assert!(oriented_filter_bank(&ok, 36, 4, 1.0).is_ok());
    }

    #[test]
    fn deterministic_and_f32_agrees() {
        let map = line_map(20, 20, |x, y| (x * 7 + y * 3) % 5 == 0);
        let a = oriented_filter_bank(&map, 36, 4, 1.0).unwrap();
        let b = oriented_filter_bank(&map, 36, 4, 1.0).unwrap();
        assert_eq!(a, b);
        let map32 = ProbabilityMap::new(map.raster().map(|&v| v as f32)).unwrap();
        let c = oriented_filter_bank(&map32, 36, 4, 1.0).unwrap();
        for (x, y) in a.max_response.as_slice().iter().zip(c.max_response.as_slice()) {
            assert!((x - *y as f64).abs() < 1e-4);
        }
    }
}
