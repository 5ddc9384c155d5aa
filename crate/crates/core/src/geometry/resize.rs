use std::fmt;
use std::str::FromStr;

use super::GeometryError;
use crate::image::{quantize, ImageBuffer};

/// Axis-aligned face box in pixels; `(x, y)` is the top-left corner.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundingBox {
    pub x: f64,
    pub y: f64,
    pub w: f64,
    pub h: f64,
}

impl BoundingBox {
    pub fn new(x: f64, y: f64, w: f64, h: f64) -> Result<Self, GeometryError> {
        if ![x, y, w, h].iter().all(|v| v.is_finite()) {
            return Err(GeometryError::InvalidBox("non-finite coordinate".into()));
        }
        if w <= 0.0 || h <= 0.0 {
            return Err(GeometryError::InvalidBox(format!("size {w}x{h} must be positive")));
        }
        Ok(Self { x, y, w, h })
    }

    pub fn full(img: &ImageBuffer) -> Self {
        Self { x: 0.0, y: 0.0, w: img.width() as f64, h: img.height() as f64 }
    }
}

/// Crop `bbox` (clamped to the frame) and resample it to `out_w x out_h` with
/// bilinear interpolation, rounding half up.
pub fn crop_and_resize(
    img: &ImageBuffer,
    bbox: &BoundingBox,
    out_w: usize,
    out_h: usize,
) -> Result<ImageBuffer, GeometryError> {
    if out_w == 0 || out_h == 0 {
        return Err(GeometryError::OutputSize(out_w, out_h));
    }
    let x0 = bbox.x.max(0.0);
    let y0 = bbox.y.max(0.0);
    let x1 = (bbox.x + bbox.w).min(img.width() as f64);
    let y1 = (bbox.y + bbox.h).min(img.height() as f64);
    if x1 <= x0 || y1 <= y0 {
        return Err(GeometryError::EmptyIntersection);
    }
    let sx = (x1 - x0) / out_w as f64;
    let sy = (y1 - y0) / out_h as f64;
    let channels = img.channels();
    let mut data = Vec::with_capacity(out_w * out_h * channels);
    for j in 0..out_h {
        let src_y = y0 + (j as f64 + 0.5) * sy;
        for i in 0..out_w {
            let src_x = x0 + (i as f64 + 0.5) * sx;
            for c in 0..channels {
                data.push(quantize(img.sample_bilinear(src_x, src_y, c)));
            }
        }
    }
    Ok(ImageBuffer::new(out_w, out_h, channels, data).expect("output shape is consistent"))
}

/// Crop/resize target applied before feature extraction.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PreprocessProfile {
    name: String,
    width: usize,
    height: usize,
}

impl PreprocessProfile {
    /// 299x299 input, as used for Xception-style backbones.
    pub fn xception() -> Self {
        Self { name: "xception".into(), width: 299, height: 299 }
    }

    /// 256x256 input, as used for HRNet-style backbones.
    pub fn hrnet() -> Self {
        Self { name: "hrnet".into(), width: 256, height: 256 }
    }

    pub fn custom(width: usize, height: usize) -> Self {
        Self { name: "custom".into(), width, height }
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    /// Crop to `bbox` (or the whole frame) and resize to the profile size.
    pub fn apply(&self, img: &ImageBuffer, bbox: Option<&BoundingBox>) -> Result<ImageBuffer, GeometryError> {
        let full = BoundingBox::full(img);
        let bbox = bbox.unwrap_or(&full);
        if *bbox == full && img.width() == self.width && img.height() == self.height {
            return Ok(img.clone());
        }
        crop_and_resize(img, bbox, self.width, self.height)
    }
}

impl fmt::Display for PreprocessProfile {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}-{}x{}", self.name, self.width, self.height)
    }
}

impl FromStr for PreprocessProfile {
    type Err = String;

    /// Accepts `xception`, `hrnet`, `WxH`, or the display form `name-WxH`.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "xception" => return Ok(Self::xception()),
            "hrnet" => return Ok(Self::hrnet()),
            _ => {}
        }
        let (name, dims) = match s.rsplit_once('-') {
            Some((n, d)) => (n, d),
            None => ("custom", s),
        };
        let (w, h) = dims.split_once('x').ok_or_else(|| format!("unknown profile `{s}`"))?;
        let w: usize = w.parse().map_err(|_| format!("bad width in `{s}`"))?;
        let h: usize = h.parse().map_err(|_| format!("bad height in `{s}`"))?;
        if w == 0 || h == 0 {
            return Err(format!("profile `{s}` has zero size"));
        }
        let profile = Self { name: name.to_string(), width: w, height: h };
        match name {
            "xception" if profile != Self::xception() => Err(format!("xception is 299x299, got `{s}`")),
            "hrnet" if profile != Self::hrnet() => Err(format!("hrnet is 256x256, got `{s}`")),
            _ => Ok(profile),
        }
    }
}
