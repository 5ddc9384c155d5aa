//! Uniform local-binary-pattern histograms and the binary feature file.
//!
//! Codes use the 8-neighbourhood at radius 1, enumerated clockwise from the
//! top-left neighbour; bit `k` is set when neighbour `k` is at least as bright
//! as the center:
//!
//! <pre>
//! 0  1  2
//! 7  c  3
//! 6  5  4
//! </pre>
//!
//! Codes with at most two circular 0/1 transitions (58 of them) get their own
//! bin in ascending code order; all others share bin 58.

use std::collections::hash_map::Entry;
use std::collections::HashMap;
use std::fmt;
use std::io::{Read, Write};
use std::path::Path;
use std::str::FromStr;

use rayon::prelude::*;
use thiserror::Error;

use crate::dataset::{DatasetManifest, Split};
use crate::geometry::{BoundingBox, GeometryError, PreprocessProfile};
use crate::image::{ImageBuffer, ImageError};

pub const LBP_BINS: usize = 59;
pub const FEATURE_MAGIC: &[u8; 4] = b"MKFV";
pub const FEATURE_VERSION: u32 = 1;
/// Suffix of the rows holding features of horizontally flipped images.
pub const FLIP_SUFFIX: &str = "#flip";

#[derive(Debug, Error)]
pub enum FeatureError {
    #[error("image {width}x{height} too small for a {gx}x{gy} grid")]
    ImageTooSmall { width: usize, height: usize, gx: usize, gy: usize },
    #[error("expected a grayscale image, got {0} channels")]
    NotGrayscale(usize),
    #[error("bad descriptor `{0}`")]
    BadDescriptor(String),
    #[error("feature file: {0}")]
    Format(String),
    #[error("duplicate feature row `{0}`")]
    DuplicateId(String),
    #[error("feature row `{id}` has {got} values, expected {expected}")]
    Dimension { id: String, expected: usize, got: usize },
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("sample `{sample_id}`: {source}")]
    Image {
        sample_id: String,
        #[source]
        source: ImageError,
    },
    #[error("sample `{sample_id}`: {source}")]
    Geometry {
        sample_id: String,
        #[source]
        source: GeometryError,
    },
}

const fn circular_transitions(code: u8) -> u32 {
    (code ^ code.rotate_right(1)).count_ones()
}

const fn build_uniform_bins() -> [u8; 256] {
    let mut table = [0u8; 256];
    let mut next = 0u8;
    let mut code = 0usize;
    while code < 256 {
        if circular_transitions(code as u8) <= 2 {
            table[code] = next;
            next += 1;
        } else {
            table[code] = (LBP_BINS - 1) as u8;
        }
        code += 1;
    }
    table
}

/// Histogram bin of every 8-bit LBP code.
pub const UNIFORM_BINS: [u8; 256] = build_uniform_bins();

/// `0.299 R + 0.587 G + 0.114 B`, rounded half up; 1-channel input is copied.
pub fn to_grayscale(img: &ImageBuffer) -> ImageBuffer {
    if img.channels() == 1 {
        return img.clone();
    }
    let data = img
        .data()
        .chunks_exact(3)
        .map(|px| ((299 * px[0] as u32 + 587 * px[1] as u32 + 114 * px[2] as u32 + 500) / 1000) as u8)
        .collect();
    ImageBuffer::new(img.width(), img.height(), 1, data).expect("same shape")
}

/// Column-mirrored copy.
pub fn flip_horizontal(img: &ImageBuffer) -> ImageBuffer {
    let (w, c) = (img.width(), img.channels());
    let mut data = Vec::with_capacity(img.data().len());
    for row in img.data().chunks_exact(w * c) {
        for px in row.chunks_exact(c).rev() {
            data.extend_from_slice(px);
        }
    }
    ImageBuffer::new(w, img.height(), c, data).expect("same shape")
}

/// LBP code of `center` given its neighbours clockwise from the top-left.
#[inline]
pub fn lbp_code(center: u8, neighbors: [u8; 8]) -> u8 {
    neighbors
        .iter()
        .enumerate()
        .fold(0u8, |code, (k, &n)| if n >= center { code | (1 << k) } else { code })
}

/// Histogram grid over the interior code map.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LbpConfig {
    pub grid_x: usize,
    pub grid_y: usize,
}

impl Default for LbpConfig {
    fn default() -> Self {
        Self { grid_x: 4, grid_y: 4 }
    }
}

impl LbpConfig {
    pub fn dim(&self) -> usize {
        self.grid_x * self.grid_y * LBP_BINS
    }
}

impl fmt::Display for LbpConfig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "lbp-{}x{}", self.grid_x, self.grid_y)
    }
}

impl FromStr for LbpConfig {
    type Err = FeatureError;
    /// `lbp-4x4` style names.
    fn from_str(s: &str) -> Result<Self, FeatureError> {
        let bad = || FeatureError::BadDescriptor(s.to_string());
        let grid = s.strip_prefix("lbp-").ok_or_else(bad)?;
        let (gx, gy) = grid.split_once('x').ok_or_else(bad)?;
        let grid_x: usize = gx.parse().map_err(|_| bad())?;
        let grid_y: usize = gy.parse().map_err(|_| bad())?;
        if grid_x == 0 || grid_y == 0 {
            return Err(bad());
        }
        Ok(Self { grid_x, grid_y })
    }
}

/// Preprocessing plus histogram configuration; identifies what produced a
/// feature vector.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Descriptor {
    pub preprocess: PreprocessProfile,
    pub lbp: LbpConfig,
}

impl Descriptor {
    pub fn new(preprocess: PreprocessProfile, lbp: LbpConfig) -> Self {
        Self { preprocess, lbp }
    }

    pub fn dim(&self) -> usize {
        self.lbp.dim()
    }

    /// e.g. `hrnet-256x256/lbp-u2-4x4`.
    pub fn id(&self) -> String {
        format!("{}/lbp-u2-{}x{}", self.preprocess, self.lbp.grid_x, self.lbp.grid_y)
    }

    pub fn parse(id: &str) -> Result<Self, FeatureError> {
        let bad = || FeatureError::BadDescriptor(id.to_string());
        let (pre, lbp) = id.split_once('/').ok_or_else(bad)?;
        let preprocess: PreprocessProfile = pre.parse().map_err(|_| bad())?;
        let lbp: LbpConfig = lbp.strip_prefix("lbp-u2-").map(|g| format!("lbp-{g}")).ok_or_else(bad)?.parse()?;
        Ok(Self { preprocess, lbp })
    }

    /// Crop/resize, convert to grayscale, optionally mirror, then histogram.
    pub fn extract(&self, img: &ImageBuffer, bbox: Option<&BoundingBox>, flip: bool) -> Result<FeatureVector, FeatureError> {
        let face = self
            .preprocess
            .apply(img, bbox)
            .map_err(|source| FeatureError::Geometry { sample_id: String::new(), source })?;
        let mut gray = to_grayscale(&face);
        if flip {
            gray = flip_horizontal(&gray);
        }
        let mut fv = extract_lbp_histogram(&gray, self.lbp)?;
        fv.descriptor_id = self.id();
        Ok(fv)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FeatureVector {
    pub values: Vec<f64>,
    pub descriptor_id: String,
}

/// Per-cell uniform LBP histograms, each L1-normalized.
///
/// Border pixels have no full neighbourhood and are skipped; the remaining
/// `(w - 2) x (h - 2)` code map is split into `grid_x x grid_y` equal cells
/// with remainder rows/columns going to the last cell. Cells are laid out
/// row-major.
pub fn extract_lbp_histogram(img: &ImageBuffer, grid: LbpConfig) -> Result<FeatureVector, FeatureError> {
    if img.channels() != 1 {
        return Err(FeatureError::NotGrayscale(img.channels()));
    }
    let (w, h) = (img.width(), img.height());
    let (gx, gy) = (grid.grid_x, grid.grid_y);
    if w < gx + 2 || h < gy + 2 {
        return Err(FeatureError::ImageTooSmall { width: w, height: h, gx, gy });
    }
    let (cw, ch) = ((w - 2) / gx, (h - 2) / gy);
    let cell_x: Vec<usize> = (0..w - 2).map(|u| (u / cw).min(gx - 1)).collect();
    let data = img.data();
    let mut counts = vec![0u32; grid.dim()];
    for y in 1..h - 1 {
        let cy = ((y - 1) / ch).min(gy - 1);
        let up = &data[(y - 1) * w..y * w];
        let mid = &data[y * w..(y + 1) * w];
        let down = &data[(y + 1) * w..(y + 2) * w];
        let row_base = cy * gx;
        for x in 1..w - 1 {
            let code = lbp_code(
                mid[x],
                [up[x - 1], up[x], up[x + 1], mid[x + 1], down[x + 1], down[x], down[x - 1], mid[x - 1]],
            );
            counts[(row_base + cell_x[x - 1]) * LBP_BINS + UNIFORM_BINS[code as usize] as usize] += 1;
        }
    }
    let mut values = vec![0.0; counts.len()];
    for (block, out) in counts.chunks_exact(LBP_BINS).zip(values.chunks_exact_mut(LBP_BINS)) {
        let total: u32 = block.iter().sum();
        for (c, v) in block.iter().zip(out) {
            *v = *c as f64 / total as f64;
        }
    }
    Ok(FeatureVector { values, descriptor_id: format!("lbp-u2-{gx}x{gy}") })
}

/// Feature rows keyed by sample id, in file order.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct FeatureSet {
    dim: usize,
    ids: Vec<String>,
    values: Vec<f32>,
    index: HashMap<String, usize>,
}

impl FeatureSet {
    pub fn new(dim: usize) -> Self {
        Self { dim, ..Self::default() }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn ids(&self) -> &[String] {
        &self.ids
    }

    pub fn push(&mut self, id: &str, values: &[f64]) -> Result<(), FeatureError> {
        let row: Vec<f32> = values.iter().map(|&v| v as f32).collect();
        self.push_f32(id, &row)
    }

    fn push_f32(&mut self, id: &str, values: &[f32]) -> Result<(), FeatureError> {
        if values.len() != self.dim {
            return Err(FeatureError::Dimension { id: id.to_string(), expected: self.dim, got: values.len() });
        }
        match self.index.entry(id.to_string()) {
            Entry::Occupied(_) => return Err(FeatureError::DuplicateId(id.to_string())),
            Entry::Vacant(slot) => {
                slot.insert(self.ids.len());
            }
        }
        self.ids.push(id.to_string());
        self.values.extend_from_slice(values);
        Ok(())
    }

    pub fn get(&self, id: &str) -> Option<&[f32]> {
        self.index.get(id).map(|&i| &self.values[i * self.dim..(i + 1) * self.dim])
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(12 + self.values.len() * 4 + self.ids.len() * 16);
        out.extend_from_slice(FEATURE_MAGIC);
        out.extend_from_slice(&FEATURE_VERSION.to_le_bytes());
        out.extend_from_slice(&(self.dim as u32).to_le_bytes());
        for (i, id) in self.ids.iter().enumerate() {
            out.extend_from_slice(&(id.len() as u32).to_le_bytes());
            out.extend_from_slice(id.as_bytes());
            for v in &self.values[i * self.dim..(i + 1) * self.dim] {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        out
    }

    pub fn from_bytes(mut bytes: &[u8]) -> Result<Self, FeatureError> {
        let fmt_err = |m: &str| FeatureError::Format(m.to_string());
        let mut word = [0u8; 4];
        let mut read_u32 = |b: &mut &[u8]| -> Result<u32, FeatureError> {
            b.read_exact(&mut word).map_err(|_| fmt_err("truncated"))?;
            Ok(u32::from_le_bytes(word))
        };
        let mut magic = [0u8; 4];
        bytes.read_exact(&mut magic).map_err(|_| fmt_err("truncated header"))?;
        if &magic != FEATURE_MAGIC {
            return Err(fmt_err("bad magic"));
        }
        let version = read_u32(&mut bytes)?;
        if version != FEATURE_VERSION {
            return Err(FeatureError::Format(format!("unsupported version {version}")));
        }
        let dim = read_u32(&mut bytes)? as usize;
        let mut set = FeatureSet::new(dim);
        let mut row = vec![0f32; dim];
        while !bytes.is_empty() {
            let len = read_u32(&mut bytes)? as usize;
            if bytes.len() < len {
                return Err(fmt_err("truncated id"));
            }
            let id = std::str::from_utf8(&bytes[..len]).map_err(|_| fmt_err("id is not utf-8"))?.to_string();
            bytes = &bytes[len..];
            for v in row.iter_mut() {
                *v = f32::from_le_bytes(read_u32(&mut bytes)?.to_le_bytes());
            }
            set.push_f32(&id, &row)?;
        }
        Ok(set)
    }

    pub fn write(&self, path: &Path) -> Result<(), FeatureError> {
        let io = |source| FeatureError::Io { path: path.display().to_string(), source };
        let mut f = std::fs::File::create(path).map_err(io)?;
        f.write_all(&self.to_bytes()).map_err(io)
    }

    pub fn read(path: &Path) -> Result<Self, FeatureError> {
        let bytes = std::fs::read(path).map_err(|source| FeatureError::Io { path: path.display().to_string(), source })?;
        Self::from_bytes(&bytes)
    }
}

/// Extract features for every manifest record, in manifest order. With
/// `flip_train`, each `Train` record also gets a `<id>#flip` row computed from
/// its mirrored image.
pub fn extract_manifest(
    manifest: &DatasetManifest,
    descriptor: &Descriptor,
    flip_train: bool,
    parallel: bool,
) -> Result<FeatureSet, FeatureError> {
    let job = |i: usize| -> Result<Vec<(String, Vec<f64>)>, FeatureError> {
        let r = &manifest.records()[i];
        let path = manifest.resolve(&r.image_path);
        let img = ImageBuffer::read_png(&path)
            .map_err(|source| FeatureError::Image { sample_id: r.sample_id.clone(), source })?;
        let tag = |e: FeatureError| match e {
            FeatureError::Geometry { source, .. } => FeatureError::Geometry { sample_id: r.sample_id.clone(), source },
            other => other,
        };
        let mut rows = vec![(r.sample_id.clone(), descriptor.extract(&img, r.bbox.as_ref(), false).map_err(tag)?.values)];
        if flip_train && manifest.splits()[i] == Split::Train {
            let flipped = descriptor.extract(&img, r.bbox.as_ref(), true).map_err(tag)?;
            rows.push((format!("{}{FLIP_SUFFIX}", r.sample_id), flipped.values));
        }
        Ok(rows)
    };
    let per_record: Vec<_> = if parallel {
        (0..manifest.len()).into_par_iter().map(job).collect()
    } else {
        (0..manifest.len()).map(job).collect()
    };
    let mut set = FeatureSet::new(descriptor.dim());
    for rows in per_record {
        for (id, values) in rows? {
            set.push(&id, &values)?;
        }
    }
    Ok(set)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grayscale_weights() {
        let img = ImageBuffer::new(3, 1, 3, vec![255, 255, 255, 255, 0, 0, 0, 0, 0]).unwrap();
        assert_eq!(to_grayscale(&img).data(), &[255, 76, 0]);
        let gray = ImageBuffer::from_fn(4, 4, 1, |x, y, _| (x * 60 + y) as u8).unwrap();
        assert_eq!(to_grayscale(&gray), gray);
    }

    #[test]
    fn lbp_code_conventions() {
        assert_eq!(lbp_code(7, [7; 8]), 255);
        assert_eq!(lbp_code(5, [1, 2, 3, 4, 6, 7, 8, 9]), 0b1111_0000);
        assert_eq!(lbp_code(255, [0; 8]), 0);
    }

    #[test]
    fn uniform_table_has_58_patterns() {
        let uniform = (0..256).filter(|&c| UNIFORM_BINS[c] != 58).count();
        assert_eq!(uniform, 58);
        assert_eq!(UNIFORM_BINS[0], 0);
        assert_eq!(UNIFORM_BINS[255], 57);
        assert_eq!(UNIFORM_BINS[0b0101_0101], 58);
        assert_eq!(UNIFORM_BINS[0b0000_0001], 1);
    }

    #[test]
    fn constant_image_is_one_hot() {
        let img = ImageBuffer::filled(20, 20, 1, 90).unwrap();
        let fv = extract_lbp_histogram(&img, LbpConfig { grid_x: 2, grid_y: 2 }).unwrap();
        assert_eq!(fv.values.len(), 4 * LBP_BINS);
        for block in fv.values.chunks(LBP_BINS) {
            assert_eq!(block[57], 1.0);
            assert_eq!(block.iter().sum::<f64>(), 1.0);
        }
    }

    #[test]
    fn length_and_size_checks() {
        assert_eq!(LbpConfig::default().dim(), 944);
        let img = ImageBuffer::filled(5, 40, 1, 0).unwrap();
        assert!(matches!(extract_lbp_histogram(&img, LbpConfig::default()), Err(FeatureError::ImageTooSmall { .. })));
        let rgb = ImageBuffer::filled(40, 40, 3, 0).unwrap();
        assert!(matches!(extract_lbp_histogram(&rgb, LbpConfig::default()), Err(FeatureError::NotGrayscale(3))));
        // Smallest admissible image still fills every cell.
        let tiny = ImageBuffer::from_fn(6, 6, 1, |x, y, _| (x * 13 + y * 29) as u8).unwrap();
        let fv = extract_lbp_histogram(&tiny, LbpConfig::default()).unwrap();
        for block in fv.values.chunks(LBP_BINS) {
            assert!((block.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn flip_basics() {
        let img = ImageBuffer::new(2, 1, 1, vec![3, 9]).unwrap();
        assert_eq!(flip_horizontal(&img).data(), &[9, 3]);
        let rgb = ImageBuffer::from_fn(5, 3, 3, |x, y, c| (x * 50 + y * 3 + c) as u8).unwrap();
        assert_eq!(flip_horizontal(&flip_horizontal(&rgb)), rgb);
        assert_ne!(flip_horizontal(&rgb), rgb);
        let flat = ImageBuffer::filled(4, 4, 3, 8).unwrap();
        assert_eq!(flip_horizontal(&flat), flat);
    }

    #[test]
    fn descriptor_ids_round_trip() {
        let d = Descriptor::new(PreprocessProfile::hrnet(), LbpConfig::default());
        assert_eq!(d.id(), "hrnet-256x256/lbp-u2-4x4");
        assert_eq!(Descriptor::parse(&d.id()).unwrap(), d);
        let x = Descriptor::new(PreprocessProfile::xception(), LbpConfig { grid_x: 3, grid_y: 2 });
        assert_eq!(Descriptor::parse(&x.id()).unwrap(), x);
        assert!(Descriptor::parse("hrnet/lbp").is_err());
        assert_eq!("lbp-4x4".parse::<LbpConfig>().unwrap(), LbpConfig::default());
        assert!("lbp-0x4".parse::<LbpConfig>().is_err());
    }

    #[test]
    fn feature_file_layout() {
        let mut set = FeatureSet::new(2);
        set.push("a", &[1.0, 0.5]).unwrap();
        let bytes = set.to_bytes();
        let mut expected = b"MKFV".to_vec();
        expected.extend_from_slice(&1u32.to_le_bytes());
        expected.extend_from_slice(&2u32.to_le_bytes());
        expected.extend_from_slice(&1u32.to_le_bytes());
        expected.push(b'a');
        expected.extend_from_slice(&1.0f32.to_le_bytes());
        expected.extend_from_slice(&0.5f32.to_le_bytes());
        assert_eq!(bytes, expected);
        assert_eq!(FeatureSet::from_bytes(&bytes).unwrap(), set);
        assert!(FeatureSet::from_bytes(&bytes[..bytes.len() - 1]).is_err());
        assert!(FeatureSet::from_bytes(b"MKXX").is_err());
        assert!(matches!(set.push("a", &[0.0, 0.0]), Err(FeatureError::DuplicateId(_))));
        assert!(matches!(set.push("b", &[0.0]), Err(FeatureError::Dimension { .. })));
    }
}
