//! Raster containers, probability maps, label images and their PNG/PGM I/O.
//!
//! The in-memory convention for probability maps is always `P(membrane)`.
//! Display polarity is only a concern of [`load_probability_map`].

use std::collections::VecDeque;
use std::path::{Path, PathBuf};

use image::{DynamicImage, ImageBuffer, ImageFormat, Luma, Rgb};
use serde::{Deserialize, Serialize};

use crate::scalar::Scalar;

/// Smallest raster side accepted as a probability map.
pub const MIN_MAP_SIDE: usize = 8;

#[derive(Debug, thiserror::Error)]
pub enum ImageryError {
    #[error("cannot read image {path}: {source}")]
    Unreadable {
        path: PathBuf,
        #[source]
        source: image::ImageError,
    },
    #[error("cannot write image {path}: {source}")]
    Unwritable {
        path: PathBuf,
        #[source]
        source: image::ImageError,
    },
    #[error("image {path} has {channels} channels, expected a single grayscale channel")]
    MultiChannel { path: PathBuf, channels: u8 },
    #[error("image has zero size")]
    ZeroSize,
    #[error("map of {width}x{height} is smaller than the minimum {min}x{min}")]
    TooSmall {
        width: usize,
        height: usize,
        min: usize,
    },
    #[error("probability {value} at pixel ({x}, {y}) is outside [0, 1]")]
    OutOfRange { x: usize, y: usize, value: f64 },
    #[error("buffer of length {len} does not match {width}x{height}")]
    SizeMismatch {
        width: usize,
        height: usize,
        len: usize,
    },
    #[error("label {label} does not fit in 16 bits")]
    LabelOverflow { label: u32 },
}

/// Dense row-major raster.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Raster<T> {
    width: usize,
    height: usize,
    data: Vec<T>,
}

impl<T: Clone> Raster<T> {
    pub fn filled(width: usize, height: usize, value: T) -> Self {
        Self {
            width,
            height,
            data: vec![value; width * height],
        }
    }
}

impl<T> Raster<T> {
    pub fn from_vec(width: usize, height: usize, data: Vec<T>) -> Result<Self, ImageryError> {
        if data.len() != width * height {
            return Err(ImageryError::SizeMismatch {
                width,
                height,
                len: data.len(),
            });
        }
        Ok(Self {
            width,
            height,
            data,
        })
    }

    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> T) -> Self {
        let mut data = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                data.push(f(x, y));
            }
        }
        Self {
            width,
            height,
            data,
        }
    }

    #[inline]
    pub fn width(&self) -> usize {
        self.width
    }

    #[inline]
    pub fn height(&self) -> usize {
        self.height
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.data.len()
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    #[inline]
    pub fn index(&self, x: usize, y: usize) -> usize {
        y * self.width + x
    }

    #[inline]
    pub fn coords(&self, idx: usize) -> (usize, usize) {
        (idx % self.width, idx / self.width)
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> &T {
        &self.data[y * self.width + x]
    }

    #[inline]
    pub fn get_mut(&mut self, x: usize, y: usize) -> &mut T {
        &mut self.data[y * self.width + x]
    }

    pub fn as_slice(&self) -> &[T] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<T> {
        self.data
    }

    pub fn map<U>(&self, f: impl FnMut(&T) -> U) -> Raster<U> {
        Raster {
            width: self.width,
            height: self.height,
            data: self.data.iter().map(f).collect(),
        }
    }

    pub fn same_shape<U>(&self, other: &Raster<U>) -> bool {
        self.width == other.width && self.height == other.height
    }

    /// 4-neighbours of `idx` in N, W, E, S order.
    pub fn neighbors4(&self, idx: usize) -> impl Iterator<Item = usize> {
        let (x, y) = self.coords(idx);
        let (w, h) = (self.width, self.height);
        let n = (y > 0).then(|| idx - w);
        let west = (x > 0).then(|| idx - 1);
        let east = (x + 1 < w).then(|| idx + 1);
        let s = (y + 1 < h).then(|| idx + w);
        [n, west, east, s].into_iter().flatten()
    }

    /// 8-neighbours of `idx` in scanline order.
    pub fn neighbors8(&self, idx: usize) -> impl Iterator<Item = usize> {
        let (x, y) = self.coords(idx);
        let (w, h) = (self.width as isize, self.height as isize);
        let (x, y) = (x as isize, y as isize);
        (-1isize..=1)
            .flat_map(move |dy| (-1isize..=1).map(move |dx| (dx, dy)))
            .filter(|&(dx, dy)| dx != 0 || dy != 0)
            .filter_map(move |(dx, dy)| {
                let (nx, ny) = (x + dx, y + dy);
                (nx >= 0 && ny >= 0 && nx < w && ny < h).then(|| (ny * w + nx) as usize)
            })
    }

    pub fn is_border(&self, idx: usize) -> bool {
        let (x, y) = self.coords(idx);
        x == 0 || y == 0 || x + 1 == self.width || y + 1 == self.height
    }
}

/// Per-pixel membrane probability, values in `[0, 1]`.
#[derive(Clone, Debug, PartialEq)]
pub struct ProbabilityMap<T> {
    raster: Raster<T>,
}

impl<T: Scalar> ProbabilityMap<T> {
    pub fn new(raster: Raster<T>) -> Result<Self, ImageryError> {
        let (width, height) = (raster.width(), raster.height());
        if width == 0 || height == 0 {
            return Err(ImageryError::ZeroSize);
        }
        if width < MIN_MAP_SIDE || height < MIN_MAP_SIDE {
            return Err(ImageryError::TooSmall {
                width,
                height,
                min: MIN_MAP_SIDE,
            });
        }
        for (i, v) in raster.as_slice().iter().enumerate() {
            if !(*v >= T::zero() && *v <= T::one()) {
                let (x, y) = raster.coords(i);
                return Err(ImageryError::OutOfRange {
                    x,
                    y,
                    value: v.as_f64(),
                });
            }
        }
        Ok(Self { raster })
    }

    pub fn from_vec(width: usize, height: usize, values: Vec<T>) -> Result<Self, ImageryError> {
        Self::new(Raster::from_vec(width, height, values)?)
    }

    pub fn raster(&self) -> &Raster<T> {
        &self.raster
    }

    pub fn width(&self) -> usize {
        self.raster.width()
    }

    pub fn height(&self) -> usize {
        self.raster.height()
    }

    pub fn values(&self) -> &[T] {
        self.raster.as_slice()
    }

    pub fn get(&self, x: usize, y: usize) -> T {
        *self.raster.get(x, y)
    }

    /// `1 - v` elementwise.
    pub fn complement(&self) -> Self {
        Self {
            raster: self.raster.map(|v| T::one() - *v),
        }
    }

    pub fn into_raster(self) -> Raster<T> {
        self.raster
    }
}

/// Segment labels; 0 is membrane/background.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabelImage {
    raster: Raster<u32>,
}

impl LabelImage {
    pub fn new(raster: Raster<u32>) -> Self {
        Self { raster }
    }

    pub fn zeros(width: usize, height: usize) -> Self {
        Self::new(Raster::filled(width, height, 0))
    }

    pub fn from_vec(width: usize, height: usize, labels: Vec<u32>) -> Result<Self, ImageryError> {
        Ok(Self::new(Raster::from_vec(width, height, labels)?))
    }

    pub fn raster(&self) -> &Raster<u32> {
        &self.raster
    }

    pub fn width(&self) -> usize {
        self.raster.width()
    }

    pub fn height(&self) -> usize {
        self.raster.height()
    }

    pub fn labels(&self) -> &[u32] {
        self.raster.as_slice()
    }

    pub fn get(&self, x: usize, y: usize) -> u32 {
        *self.raster.get(x, y)
    }

    pub fn max_label(&self) -> u32 {
        self.labels().iter().copied().max().unwrap_or(0)
    }

    /// Number of distinct positive labels.
    pub fn num_segments(&self) -> usize {
        let mut seen: Vec<u32> = self.labels().iter().copied().filter(|&l| l > 0).collect();
        seen.sort_unstable();
        seen.dedup();
        seen.len()
    }

    /// Splits every positive label into its 4-connected components and
    /// renumbers them `1..=K` in scanline order of first appearance.
    pub fn relabel_components(&self) -> LabelImage {
        let r = &self.raster;
        let mut out = vec![0u32; r.len()];
        let mut next = 0u32;
        let mut queue = VecDeque::new();
        for start in 0..r.len() {
            let lab = r.as_slice()[start];
            if lab == 0 || out[start] != 0 {
                continue;
            }
            next += 1;
            out[start] = next;
            queue.push_back(start);
            while let Some(p) = queue.pop_front() {
                for q in r.neighbors4(p) {
                    if out[q] == 0 && r.as_slice()[q] == lab {
                        out[q] = next;
                        queue.push_back(q);
                    }
                }
            }
        }
        LabelImage::new(Raster::from_vec(r.width(), r.height(), out).expect("same shape"))
    }
}

/// Display polarity of a probability map file.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Polarity {
    #[default]
    #[serde(alias = "high")]
    MembraneIsHigh,
    #[serde(alias = "low")]
    MembraneIsLow,
}

impl std::str::FromStr for Polarity {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "high" | "membrane-is-high" => Ok(Polarity::MembraneIsHigh),
            "low" | "membrane-is-low" => Ok(Polarity::MembraneIsLow),
            other => Err(format!("unknown polarity `{other}` (expected high or low)")),
        }
    }
}

fn open_gray(path: &Path) -> Result<DynamicImage, ImageryError> {
    let reader = image::ImageReader::open(path)
        .map_err(|e| ImageryError::Unreadable {
            path: path.to_owned(),
            source: image::ImageError::IoError(e),
        })?
        .with_guessed_format()
        .map_err(|e| ImageryError::Unreadable {
            path: path.to_owned(),
            source: image::ImageError::IoError(e),
        })?;
    let img = reader.decode().map_err(|source| ImageryError::Unreadable {
        path: path.to_owned(),
        source,
    })?;
    if img.width() == 0 || img.height() == 0 {
        return Err(ImageryError::ZeroSize);
    }
    let channels = img.color().channel_count();
    if channels != 1 {
        return Err(ImageryError::MultiChannel {
            path: path.to_owned(),
            channels,
        });
    }
    Ok(img)
}

/// Reads an 8- or 16-bit single-channel PNG or binary PGM as `P(membrane)`.
pub fn load_probability_map<T: Scalar>(
    path: impl AsRef<Path>,
    polarity: Polarity,
) -> Result<ProbabilityMap<T>, ImageryError> {
    let path = path.as_ref();
    let img = open_gray(path)?;
    let (w, h) = (img.width() as usize, img.height() as usize);
    let values: Vec<T> = match img {
        DynamicImage::ImageLuma8(buf) => {
            let scale = T::lit(255.0);
            buf.into_raw().into_iter().map(|v| T::lit(v as f64) / scale).collect()
        }
        DynamicImage::ImageLuma16(buf) => {
            let scale = T::lit(65535.0);
            buf.into_raw().into_iter().map(|v| T::lit(v as f64) / scale).collect()
        }
        other => {
            // single channel float formats are not produced by PNG/PGM decoders
            let buf = other.to_luma16();
            let scale = T::lit(65535.0);
            buf.into_raw().into_iter().map(|v| T::lit(v as f64) / scale).collect()
        }
    };
    let values = match polarity {
        Polarity::MembraneIsHigh => values,
        Polarity::MembraneIsLow => values.into_iter().map(|v| T::one() - v).collect(),
    };
    ProbabilityMap::from_vec(w, h, values)
}

/// Writes a probability map as a 16-bit grayscale PNG (membrane high).
pub fn save_probability_map<T: Scalar>(
    map: &ProbabilityMap<T>,
    path: impl AsRef<Path>,
) -> Result<(), ImageryError> {
    let path = path.as_ref();
    let data: Vec<u16> = map
        .values()
        .iter()
        .map(|v| (v.as_f64() * 65535.0).round().clamp(0.0, 65535.0) as u16)
        .collect();
    let buf: ImageBuffer<Luma<u16>, Vec<u16>> =
        ImageBuffer::from_raw(map.width() as u32, map.height() as u32, data).expect("buffer size");
    buf.save_with_format(path, ImageFormat::Png)
        .map_err(|source| ImageryError::Unwritable {
            path: path.to_owned(),
            source,
        })
}

/// Writes labels as a 16-bit grayscale PNG.
pub fn save_label_image(img: &LabelImage, path: impl AsRef<Path>) -> Result<(), ImageryError> {
    let path = path.as_ref();
    let max = img.max_label();
    if max > u16::MAX as u32 {
        return Err(ImageryError::LabelOverflow { label: max });
    }
    let data: Vec<u16> = img.labels().iter().map(|&l| l as u16).collect();
    let buf: ImageBuffer<Luma<u16>, Vec<u16>> =
        ImageBuffer::from_raw(img.width() as u32, img.height() as u32, data).expect("buffer size");
    buf.save_with_format(path, ImageFormat::Png)
        .map_err(|source| ImageryError::Unwritable {
            path: path.to_owned(),
            source,
        })
}

/// Writes an RGB visualisation with a fixed pseudo-random colour per label.
pub fn save_label_palette(img: &LabelImage, path: impl AsRef<Path>) -> Result<(), ImageryError> {
    let path = path.as_ref();
    let mut data = Vec::with_capacity(img.labels().len() * 3);
    for &l in img.labels() {
        data.extend_from_slice(&palette_color(l));
    }
    let buf: ImageBuffer<Rgb<u8>, Vec<u8>> =
        ImageBuffer::from_raw(img.width() as u32, img.height() as u32, data).expect("buffer size");
    buf.save_with_format(path, ImageFormat::Png)
        .map_err(|source| ImageryError::Unwritable {
            path: path.to_owned(),
            source,
        })
}

fn palette_color(label: u32) -> [u8; 3] {
    if label == 0 {
        return [0, 0, 0];
    }
    // splitmix-style hash, clamped away from black
    let mut z = (label as u64).wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^= z >> 31;
    [
        64 + (z & 0xBF) as u8,
        64 + ((z >> 8) & 0xBF) as u8,
        64 + ((z >> 16) & 0xBF) as u8,
    ]
}

/// Writes a boolean mask as an 8-bit PNG (true = 255).
pub fn save_mask(mask: &Raster<bool>, path: impl AsRef<Path>) -> Result<(), ImageryError> {
    let path = path.as_ref();
    let data: Vec<u8> = mask.as_slice().iter().map(|&m| if m { 255 } else { 0 }).collect();
    let buf: ImageBuffer<Luma<u8>, Vec<u8>> =
        ImageBuffer::from_raw(mask.width() as u32, mask.height() as u32, data).expect("buffer size");
    buf.save_with_format(path, ImageFormat::Png)
        .map_err(|source| ImageryError::Unwritable {
            path: path.to_owned(),
            source,
        })
}

/// Reads a single-channel label PNG (8 or 16 bit).
pub fn load_label_image(path: impl AsRef<Path>) -> Result<LabelImage, ImageryError> {
    let path = path.as_ref();
    let img = open_gray(path)?;
    let (w, h) = (img.width() as usize, img.height() as usize);
    let labels: Vec<u32> = match img {
        DynamicImage::ImageLuma8(buf) => buf.into_raw().into_iter().map(u32::from).collect(),
        other => other.to_luma16().into_raw().into_iter().map(u32::from).collect(),
    };
    LabelImage::from_vec(w, h, labels)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn write_gray8(path: &Path, w: u32, h: u32, data: Vec<u8>, fmt: ImageFormat) {
        let buf: ImageBuffer<Luma<u8>, Vec<u8>> = ImageBuffer::from_raw(w, h, data).unwrap();
        buf.save_with_format(path, fmt).unwrap();
    }

    #[test]
    fn loads_8bit_endpoints_with_both_polarities() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("map.png");
        let mut data = vec![0u8; 64];
        data[0] = 255;
        data[1] = 128;
        write_gray8(&path, 8, 8, data, ImageFormat::Png);

        let high: ProbabilityMap<f64> = load_probability_map(&path, Polarity::MembraneIsHigh).unwrap();
        assert_eq!(high.get(0, 0), 1.0);
        assert!((high.get(1, 0) - 128.0 / 255.0).abs() < 1e-12);
        assert!((high.get(1, 0) - 0.50196).abs() < 1e-5);
        assert_eq!(high.get(2, 0), 0.0);

        let low: ProbabilityMap<f64> = load_probability_map(&path, Polarity::MembraneIsLow).unwrap();
        assert_eq!(low.get(0, 0), 0.0);
        for (a, b) in high.values().iter().zip(low.values()) {
            assert!((a + b - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn loads_pgm_and_16bit_png() {
        let dir = tempfile::tempdir().unwrap();
        let pgm = dir.path().join("map.pgm");
        let mut bytes = b"P5\n8 8\n255\n".to_vec();
        bytes.extend((0..64).map(|i| (i * 4) as u8));
        std::fs::write(&pgm, bytes).unwrap();
        let m: ProbabilityMap<f32> = load_probability_map(&pgm, Polarity::MembraneIsHigh).unwrap();
        assert!((m.get(1, 0) - 4.0 / 255.0).abs() < 1e-6);

        let png16 = dir.path().join("map16.png");
        let data: Vec<u16> = (0..64).map(|i| if i == 3 { 65535 } else { 0 }).collect();
        let buf: ImageBuffer<Luma<u16>, Vec<u16>> = ImageBuffer::from_raw(8, 8, data).unwrap();
        buf.save_with_format(&png16, ImageFormat::Png).unwrap();
        let m: ProbabilityMap<f64> = load_probability_map(&png16, Polarity::MembraneIsHigh).unwrap();
        assert_eq!(m.get(3, 0), 1.0);
    }

    #[test]
    fn rejects_rgb_missing_and_tiny_inputs() {
        let dir = tempfile::tempdir().unwrap();
        let rgb = dir.path().join("rgb.png");
        let buf: ImageBuffer<Rgb<u8>, Vec<u8>> = ImageBuffer::from_raw(8, 8, vec![0; 192]).unwrap();
        buf.save(&rgb).unwrap();
        assert!(matches!(
            load_probability_map::<f64>(&rgb, Polarity::MembraneIsHigh),
            Err(ImageryError::MultiChannel { channels: 3, .. })
        ));

        let missing = dir.path().join("nope.png");
        let err = load_probability_map::<f64>(&missing, Polarity::MembraneIsHigh).unwrap_err();
        assert!(err.to_string().contains("nope.png"));

        let tiny = dir.path().join("tiny.png");
        write_gray8(&tiny, 4, 4, vec![0; 16], ImageFormat::Png);
        assert!(matches!(
            load_probability_map::<f64>(&tiny, Polarity::MembraneIsHigh),
            Err(ImageryError::TooSmall { .. })
        ));
    }

    #[test]
    fn probability_map_rejects_out_of_range() {
        let mut v = vec![0.5f64; 64];
        v[10] = 1.5;
        assert!(matches!(
            ProbabilityMap::from_vec(8, 8, v),
            Err(ImageryError::OutOfRange { x: 2, y: 1, .. })
        ));
    }

    #[test]
    fn label_png_round_trips() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("labels.png");
        let zeros = LabelImage::zeros(9, 7);
        save_label_image(&zeros, &path).unwrap();
        assert_eq!(load_label_image(&path).unwrap(), zeros);

        let labels: Vec<u32> = (0..63).map(|i| i % 3).collect();
        let img = LabelImage::from_vec(9, 7, labels).unwrap();
        save_label_image(&img, &path).unwrap();
        assert_eq!(load_label_image(&path).unwrap(), img);

        save_label_palette(&img, dir.path().join("palette.png")).unwrap();
    }

    #[test]
    fn label_overflow_is_reported() {
        let labels: Vec<u32> = (0..70_000).collect();
        let img = LabelImage::from_vec(700, 100, labels).unwrap();
        let dir = tempfile::tempdir().unwrap();
        assert!(matches!(
            save_label_image(&img, dir.path().join("x.png")),
            Err(ImageryError::LabelOverflow { label: 69_999 })
        ));
    }

    #[test]
    fn relabel_splits_disconnected_labels() {
        #[rustfmt::skip]
        let labels = vec![
            5, 5, 0, 5,
            0, 0, 0, 5,
            7, 0, 7, 7,
        ];
        let img = LabelImage::from_vec(4, 3, labels).unwrap();
        let r = img.relabel_components();
        assert_eq!(r.labels(), &[1, 1, 0, 2, 0, 0, 0, 2, 3, 0, 4, 4]);
        assert_eq!(r.num_segments(), 4);
    }
}
