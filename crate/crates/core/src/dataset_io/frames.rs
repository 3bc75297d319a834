use std::fs;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};

const LUMA_R: f64 = 0.299;
const LUMA_G: f64 = 0.587;
const LUMA_B: f64 = 0.114;

const IMAGE_EXTENSIONS: &[&str] = &["png", "jpg", "jpeg", "bmp", "pgm", "ppm", "pnm"];

/// Single-channel raster, row-major, intensities stored as `f32`.
///
/// Frames loaded from disk hold integral values in `0..=255`; synthetic and
/// resampled images may hold arbitrary finite values.
#[derive(Debug, Clone, PartialEq)]
pub struct GrayscaleImage {
    width: usize,
    height: usize,
    pixels: Vec<f32>,
}

impl GrayscaleImage {
    pub fn new(width: usize, height: usize, pixels: Vec<f32>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::InvalidInput("image must be nonempty".into()));
        }
        if pixels.len() != width * height {
            return Err(Error::DimensionMismatch {
                expected: width * height,
                actual: pixels.len(),
            });
        }
        Ok(Self {
            width,
            height,
            pixels,
        })
    }

    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> f32) -> Self {
        let mut pixels = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                pixels.push(f(x, y));
            }
        }
        Self {
            width,
            height,
            pixels,
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn pixels(&self) -> &[f32] {
        &self.pixels
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> f32 {
        self.pixels[y * self.width + x]
    }

    /// Maps every pixel through `f`.
    pub fn map(&self, f: impl Fn(f32) -> f32) -> Self {
        Self {
            width: self.width,
            height: self.height,
            pixels: self.pixels.iter().map(|&p| f(p)).collect(),
        }
    }

    /// Bilinear resampling with pixel-center alignment and clamped borders.
    pub fn resize_bilinear(&self, width: usize, height: usize) -> Self {
        let pixels = self
            .resample_f64(width, height)
            .into_iter()
            .map(|v| v as f32)
            .collect();
        Self {
            width,
            height,
            pixels,
        }
    }

    /// Bilinear resample into an `f64` buffer, row-major.
    pub fn resample_f64(&self, width: usize, height: usize) -> Vec<f64> {
        if self.width == width && self.height == height {
            return self.pixels.iter().map(|&p| p as f64).collect();
        }
        let sx = self.width as f64 / width as f64;
        let sy = self.height as f64 / height as f64;
        let max_x = (self.width - 1) as f64;
        let max_y = (self.height - 1) as f64;
        let mut out = Vec::with_capacity(width * height);
        for y in 0..height {
            let fy = ((y as f64 + 0.5) * sy - 0.5).clamp(0.0, max_y);
            let y0 = fy.floor() as usize;
            let y1 = (y0 + 1).min(self.height - 1);
            let ay = fy - y0 as f64;
            for x in 0..width {
                let fx = ((x as f64 + 0.5) * sx - 0.5).clamp(0.0, max_x);
                let x0 = fx.floor() as usize;
                let x1 = (x0 + 1).min(self.width - 1);
                let ax = fx - x0 as f64;
                let p = |xx: usize, yy: usize| self.get(xx, yy) as f64;
                // Delta form keeps flat regions exactly flat.
                let top = p(x0, y0) + (p(x1, y0) - p(x0, y0)) * ax;
                let bottom = p(x0, y1) + (p(x1, y1) - p(x0, y1)) * ax;
                out.push(top + (bottom - top) * ay);
            }
        }
        out
    }

    /// Luma conversion with fixed weights 0.299 / 0.587 / 0.114, rounded to 8 bits.
    pub fn from_rgb8(width: usize, height: usize, rgb: &[u8]) -> Result<Self> {
        if rgb.len() != width * height * 3 {
            return Err(Error::DimensionMismatch {
                expected: width * height * 3,
                actual: rgb.len(),
            });
        }
        let pixels = rgb
            .chunks_exact(3)
            .map(|c| luma(c[0], c[1], c[2]) as f32)
            .collect();
        Self::new(width, height, pixels)
    }
}

fn luma(r: u8, g: u8, b: u8) -> u8 {
    let v = LUMA_R * r as f64 + LUMA_G * g as f64 + LUMA_B * b as f64;
    v.round().clamp(0.0, 255.0) as u8
}

/// Ordered, optionally subsampled list of image files.
#[derive(Debug, Clone)]
pub struct FrameSource {
    frames: Vec<PathBuf>,
    frame_ids: Vec<u64>,
    stride: usize,
}

impl FrameSource {
    /// Keeps every `stride`-th entry of `paths`; frame ids are the positions in
    /// the unsubsampled list, so frame 0 is always retained.
    pub fn new(paths: Vec<PathBuf>, stride: usize) -> Result<Self> {
        if stride == 0 {
            return Err(Error::InvalidInput("stride must be at least 1".into()));
        }
        if paths.is_empty() {
            return Err(Error::NoFrames);
        }
        let (frame_ids, frames) = paths
            .into_iter()
            .enumerate()
            .filter(|(i, _)| i % stride == 0)
            .map(|(i, p)| (i as u64, p))
            .unzip();
        Ok(Self {
            frames,
            frame_ids,
            stride,
        })
    }

    /// All image files in `dir`, ordered lexicographically by file name.
    pub fn from_dir(dir: impl AsRef<Path>, stride: usize) -> Result<Self> {
        let dir = dir.as_ref();
        let mut paths: Vec<PathBuf> = fs::read_dir(dir)?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| {
                p.is_file()
                    && p.extension()
                        .and_then(|e| e.to_str())
                        .is_some_and(|e| IMAGE_EXTENSIONS.contains(&e.to_ascii_lowercase().as_str()))
            })
            .collect();
        paths.sort_by(|a, b| a.file_name().cmp(&b.file_name()));
        Self::new(paths, stride)
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    pub fn stride(&self) -> usize {
        self.stride
    }

    pub fn frame_ids(&self) -> &[u64] {
        &self.frame_ids
    }

    pub fn path(&self, id: u64) -> Option<&Path> {
        self.frame_ids
            .binary_search(&id)
            .ok()
            .map(|i| self.frames[i].as_path())
    }

    pub fn iter(&self) -> impl Iterator<Item = (u64, &Path)> {
        self.frame_ids
            .iter()
            .copied()
            .zip(self.frames.iter().map(PathBuf::as_path))
    }
}

/// Decodes frame `id` of `source` into an 8-bit grayscale raster at its
/// original resolution.
pub fn load_frame(source: &FrameSource, id: u64) -> Result<GrayscaleImage> {
    let path = source.path(id).ok_or_else(|| Error::FrameIngest {
        id,
        path: PathBuf::new(),
        reason: "frame id not present in source".into(),
    })?;
    load_image(path).map_err(|reason| Error::FrameIngest {
        id,
        path: path.to_path_buf(),
        reason,
    })
}

fn load_image(path: &Path) -> std::result::Result<GrayscaleImage, String> {
    let img = image::open(path).map_err(|e| e.to_string())?;
    let (w, h) = (img.width() as usize, img.height() as usize);
    if w == 0 || h == 0 {
        return Err("decoded to an empty raster".into());
    }
    let gray = if img.color().has_color() {
        let rgb = img.to_rgb8();
        GrayscaleImage::from_rgb8(w, h, rgb.as_raw()).map_err(|e| e.to_string())?
    } else {
        let l = img.to_luma8();
        GrayscaleImage::new(w, h, l.as_raw().iter().map(|&v| v as f32).collect())
            .map_err(|e| e.to_string())?
    };
    Ok(gray)
}
