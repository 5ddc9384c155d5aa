//! 8-bit raster images and PNG input/output.

use std::fs::File;
use std::io::{BufReader, BufWriter};
use std::path::Path;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum ImageError {
    #[error("image data length {got} does not match {width}x{height}x{channels}")]
    BadLength { width: usize, height: usize, channels: usize, got: usize },
    #[error("unsupported channel count {0} (expected 1 or 3)")]
    Channels(usize),
    #[error("image has zero width or height")]
    Empty,
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: png decoding failed: {msg}")]
    Decode { path: String, msg: String },
    #[error("{path}: png encoding failed: {msg}")]
    Encode { path: String, msg: String },
}

/// Row-major interleaved 8-bit image with 1 or 3 channels.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ImageBuffer {
    width: usize,
    height: usize,
    channels: usize,
    data: Vec<u8>,
}

impl ImageBuffer {
    pub fn new(width: usize, height: usize, channels: usize, data: Vec<u8>) -> Result<Self, ImageError> {
        if channels != 1 && channels != 3 {
            return Err(ImageError::Channels(channels));
        }
        if width == 0 || height == 0 {
            return Err(ImageError::Empty);
        }
        if data.len() != width * height * channels {
            return Err(ImageError::BadLength { width, height, channels, got: data.len() });
        }
        Ok(Self { width, height, channels, data })
    }

    pub fn filled(width: usize, height: usize, channels: usize, value: u8) -> Result<Self, ImageError> {
        Self::new(width, height, channels, vec![value; width * height * channels])
    }

    /// Build an image by evaluating `f(x, y, channel)` at every sample.
    pub fn from_fn(
        width: usize,
        height: usize,
        channels: usize,
        mut f: impl FnMut(usize, usize, usize) -> u8,
    ) -> Result<Self, ImageError> {
        let mut data = Vec::with_capacity(width * height * channels);
        for y in 0..height {
            for x in 0..width {
                for c in 0..channels {
                    data.push(f(x, y, c));
                }
            }
        }
        Self::new(width, height, channels, data)
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn data(&self) -> &[u8] {
        &self.data
    }

    pub fn into_data(self) -> Vec<u8> {
        self.data
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize, c: usize) -> u8 {
        self.data[(y * self.width + x) * self.channels + c]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, c: usize, v: u8) {
        self.data[(y * self.width + x) * self.channels + c] = v;
    }

    /// Bilinear sample at continuous coordinates, where pixel `(i, j)` has its
    /// center at `(i + 0.5, j + 0.5)`. Out-of-range taps clamp to the edge.
    #[inline]
    pub fn sample_bilinear(&self, x: f64, y: f64, c: usize) -> f64 {
        let fx = x - 0.5;
        let fy = y - 0.5;
        let x0 = fx.floor();
        let y0 = fy.floor();
        let tx = fx - x0;
        let ty = fy - y0;
        let max_x = self.width as i64 - 1;
        let max_y = self.height as i64 - 1;
        let xa = (x0 as i64).clamp(0, max_x) as usize;
        let xb = (x0 as i64 + 1).clamp(0, max_x) as usize;
        let ya = (y0 as i64).clamp(0, max_y) as usize;
        let yb = (y0 as i64 + 1).clamp(0, max_y) as usize;
        let top = self.get(xa, ya, c) as f64 * (1.0 - tx) + self.get(xb, ya, c) as f64 * tx;
        let bottom = self.get(xa, yb, c) as f64 * (1.0 - tx) + self.get(xb, yb, c) as f64 * tx;
        top * (1.0 - ty) + bottom * ty
    }

    pub fn read_png(path: &Path) -> Result<Self, ImageError> {
        let file = File::open(path).map_err(|source| ImageError::Io {
            path: path.display().to_string(),
            source,
        })?;
        let decode_err = |msg: String| ImageError::Decode { path: path.display().to_string(), msg };
        let mut decoder = png::Decoder::new(BufReader::new(file));
        decoder.set_transformations(png::Transformations::EXPAND | png::Transformations::STRIP_16);
        let mut reader = decoder.read_info().map_err(|e| decode_err(e.to_string()))?;
        let size = reader
            .output_buffer_size()
            .ok_or_else(|| decode_err("image too large".into()))?;
        let mut buf = vec![0u8; size];
        let info = reader.next_frame(&mut buf).map_err(|e| decode_err(e.to_string()))?;
        buf.truncate(info.buffer_size());
        let (w, h) = (info.width as usize, info.height as usize);
        let src_channels = info.color_type.samples();
        // Drop alpha; keep gray or RGB.
        let channels = match info.color_type {
            png::ColorType::Grayscale | png::ColorType::GrayscaleAlpha => 1,
            _ => 3,
        };
        let data = if src_channels == channels {
            buf
        } else {
            buf.chunks_exact(src_channels)
                .flat_map(|px| px[..channels].iter().copied())
                .collect()
        };
        Self::new(w, h, channels, data)
    }

    /// Write an 8-bit PNG; `text` entries become tEXt chunks.
    pub fn write_png(&self, path: &Path, text: &[(&str, &str)]) -> Result<(), ImageError> {
        let file = File::create(path).map_err(|source| ImageError::Io {
            path: path.display().to_string(),
            source,
        })?;
        let encode_err = |msg: String| ImageError::Encode { path: path.display().to_string(), msg };
        let mut encoder = png::Encoder::new(BufWriter::new(file), self.width as u32, self.height as u32);
        encoder.set_color(if self.channels == 1 { png::ColorType::Grayscale } else { png::ColorType::Rgb });
        encoder.set_depth(png::BitDepth::Eight);
        for (k, v) in text {
            encoder
                .add_text_chunk(k.to_string(), v.to_string())
                .map_err(|e| encode_err(e.to_string()))?;
        }
        let mut writer = encoder.write_header().map_err(|e| encode_err(e.to_string()))?;
        writer.write_image_data(&self.data).map_err(|e| encode_err(e.to_string()))?;
        writer.finish().map_err(|e| encode_err(e.to_string()))
    }
}

/// Round half up and clamp to the 8-bit range.
#[inline]
pub fn quantize(v: f64) -> u8 {
    (v + 0.5).floor().clamp(0.0, 255.0) as u8
}
