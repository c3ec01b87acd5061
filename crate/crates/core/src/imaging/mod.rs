//! Image containers, PNG I/O, bicubic resampling, and quality metrics.
//!
//! Intensities are linear reals in `[0,1]`; no gamma handling. Every public
//! operation keeps values finite and inside that range, so the rest of the
//! codebase never clamps. Degradation (LR generation) and the upscaling
//! baseline both go through [`bicubic_resize`], making it the single source
//! of truth for resampling behavior.

mod bicubic;
mod metrics;

use std::path::Path;

use rand::Rng;

use crate::numerics::{Scalar, Tensor};

pub use bicubic::bicubic_resize;
pub use metrics::{laplacian_stats, psnr};

#[derive(Debug, thiserror::Error)]
pub enum ImagingError {
    #[error("failed to read {path}: {source}")]
    Read { path: String, source: image::ImageError },

    #[error("failed to write {path}: {source}")]
    Write { path: String, source: image::ImageError },

    #[error("{path}: expected 8-bit RGB, got {found}")]
    NotRgb8 { path: String, found: String },

    #[error("image dimensions differ: {a:?} vs {b:?}")]
    DimensionMismatch { a: (usize, usize), b: (usize, usize) },

    #[error("image {h}x{w} cannot fit a {side}x{side} crop")]
    TooSmall { h: usize, w: usize, side: usize },

    #[error("invalid image buffer: {0}")]
    BadBuffer(String),
}

/// An RGB image stored as three channel planes (R, G, B), each row-major.
/// Intensities live in `[0,1]`.
#[derive(Clone, Debug, PartialEq)]
pub struct Image {
    height: usize,
    width: usize,
    data: Vec<f64>, // 3 * height * width, channel-planar
}

impl Image {
    /// All-black image. Panics if either dimension is zero.
    pub fn new(height: usize, width: usize) -> Image {
        assert!(height >= 1 && width >= 1, "empty image");
        Image { height, width, data: vec![0.0; 3 * height * width] }
    }

    /// Builds from a channel-planar buffer of length `3*height*width`.
    /// Values are clamped to `[0,1]`; non-finite input is an error.
    pub fn from_planar(height: usize, width: usize, data: Vec<f64>) -> Result<Image, ImagingError> {
        if height == 0 || width == 0 || data.len() != 3 * height * width {
            return Err(ImagingError::BadBuffer(format!(
                "{} values for {}x{}",
                data.len(),
                height,
                width
            )));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(ImagingError::BadBuffer("non-finite intensity".into()));
        }
        let data = data.into_iter().map(|v| v.clamp(0.0, 1.0)).collect();
        Ok(Image { height, width, data })
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn plane(&self, c: usize) -> &[f64] {
        &self.data[c * self.height * self.width..(c + 1) * self.height * self.width]
    }

    #[inline]
    pub fn get(&self, c: usize, y: usize, x: usize) -> f64 {
        self.data[(c * self.height + y) * self.width + x]
    }

    #[inline]
    pub fn set(&mut self, c: usize, y: usize, x: usize, v: f64) {
        self.data[(c * self.height + y) * self.width + x] = v.clamp(0.0, 1.0);
    }

    /// `[3, H, W]` tensor view of the pixel data.
    pub fn to_tensor<T: Scalar>(&self) -> Tensor<T> {
        let data = self.data.iter().map(|&v| T::from_f64(v)).collect();
        Tensor::from_vec(&[3, self.height, self.width], data).expect("image tensor")
    }

    /// Wraps a `[3, H, W]` tensor as an image, clamping into `[0,1]`.
    /// Model outputs stay unclamped for differentiation; the clamp happens
    /// here at the imaging boundary.
    pub fn from_tensor<T: Scalar>(t: &Tensor<T>) -> Result<Image, ImagingError> {
        let s = t.shape();
        if s.len() != 3 || s[0] != 3 {
            return Err(ImagingError::BadBuffer(format!("tensor shape {:?}", s)));
        }
        let data: Vec<f64> = t.data().iter().map(|v| v.to_f64()).collect();
        if data.iter().any(|v| !v.is_finite()) {
            return Err(ImagingError::BadBuffer("non-finite intensity".into()));
        }
        Ok(Image {
            height: s[1],
            width: s[2],
            data: data.into_iter().map(|v| v.clamp(0.0, 1.0)).collect(),
        })
    }

    pub fn crop(&self, y0: usize, x0: usize, h: usize, w: usize) -> Image {
        assert!(y0 + h <= self.height && x0 + w <= self.width, "crop out of bounds");
        let mut out = Image::new(h, w);
        for c in 0..3 {
            for y in 0..h {
                let src = (c * self.height + y0 + y) * self.width + x0;
                let dst = (c * h + y) * w;
                out.data[dst..dst + w].copy_from_slice(&self.data[src..src + w]);
            }
        }
        out
    }
}

/// Loads an 8-bit RGB PNG; byte `v` becomes intensity `v/255`.
pub fn load_png(path: &Path) -> Result<Image, ImagingError> {
    let p = path.display().to_string();
    let dynimg = image::open(path).map_err(|source| ImagingError::Read { path: p.clone(), source })?;
    let rgb = match dynimg {
        image::DynamicImage::ImageRgb8(buf) => buf,
        other => {
            return Err(ImagingError::NotRgb8 { path: p, found: format!("{:?}", other.color()) })
        }
    };
    let (w, h) = (rgb.width() as usize, rgb.height() as usize);
    let mut img = Image::new(h, w);
    for (y, row) in rgb.rows().enumerate() {
        for (x, px) in row.enumerate() {
            for c in 0..3 {
                img.data[(c * h + y) * w + x] = px.0[c] as f64 / 255.0;
            }
        }
    }
    Ok(img)
}

/// Writes an 8-bit RGB PNG; intensity `v` becomes the nearest byte of `255·v`.
pub fn save_png(img: &Image, path: &Path) -> Result<(), ImagingError> {
    let (h, w) = (img.height, img.width);
    let mut bytes = vec![0u8; 3 * h * w];
    for y in 0..h {
        for x in 0..w {
            for c in 0..3 {
                bytes[(y * w + x) * 3 + c] =
                    (img.get(c, y, x).clamp(0.0, 1.0) * 255.0).round() as u8;
            }
        }
    }
    image::save_buffer_with_format(
        path,
        &bytes,
        w as u32,
        h as u32,
        image::ColorType::Rgb8,
        image::ImageFormat::Png,
    )
    .map_err(|source| ImagingError::Write { path: path.display().to_string(), source })
}

/// Crops a random aligned HR square of side `round(scale · lr_patch_size)`
/// and bicubic-downsamples it to `lr_patch_size`. Deterministic for a given
/// rng state; draws exactly two values (y then x).
pub fn make_lr_hr_pair(
    hr: &Image,
    scale: f64,
    lr_patch_size: usize,
    rng: &mut impl Rng,
) -> Result<(Image, Image), ImagingError> {
    let side = (scale * lr_patch_size as f64).round() as usize;
    if hr.height < side || hr.width < side {
        return Err(ImagingError::TooSmall { h: hr.height, w: hr.width, side });
    }
    let y0 = rng.gen_range(0..=hr.height - side);
    let x0 = rng.gen_range(0..=hr.width - side);
    let hr_patch = hr.crop(y0, x0, side, side);
    let lr_patch = bicubic_resize(&hr_patch, lr_patch_size, lr_patch_size);
    Ok((lr_patch, hr_patch))
}

/// Uniform-noise test image, used as fixture material across the crate.
#[cfg(test)]
pub(crate) fn noise_image(h: usize, w: usize, seed: u64) -> Image {
    use rand::SeedableRng;
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let data = (0..3 * h * w).map(|_| rng.gen_range(0.0..=1.0)).collect();
    Image::from_planar(h, w, data).unwrap()
}
