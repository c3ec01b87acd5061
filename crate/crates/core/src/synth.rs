//! Seeded synthetic image corpus: sinusoidal gratings, checkerboards, and
//! smooth gradients, mixed per image.
//!
//! The mix is deliberately rich in high-frequency periodic structure —
//! exactly the content that separates a learned continuous upscaler from
//! plain bicubic interpolation, and where a periodic coordinate encoding
//! has something to represent.

use std::f64::consts::TAU;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::imaging::{save_png, Image, ImagingError};

/// Stream for image `index` of a corpus: independent of the total count,
/// so extending a corpus never changes existing images.
fn image_rng(seed: u64, index: u64) -> ChaCha8Rng {
    let mut key = [0u8; 32];
    key[..8].copy_from_slice(&seed.to_le_bytes());
    key[8..16].copy_from_slice(&index.to_le_bytes());
    key[16..21].copy_from_slice(b"synth");
    ChaCha8Rng::from_seed(key)
}

/// One procedural image: a smooth gradient base, two to four gratings at
/// random frequency/orientation/phase, and a checkerboard. The result is
/// affinely renormalized into [0.02, 0.98] so no component saturates away.
pub fn synth_image(height: usize, width: usize, rng: &mut ChaCha8Rng) -> Image {
    let mut planes = vec![0.0f64; 3 * height * width];
    let norm = height.max(width) as f64;

    // Smooth gradient base: linear ramp along a random direction.
    let theta = rng.gen_range(0.0..TAU);
    let (dy, dx) = (theta.sin(), theta.cos());
    let offset: [f64; 3] = std::array::from_fn(|_| rng.gen_range(0.3..0.7));
    let amp: [f64; 3] = std::array::from_fn(|_| rng.gen_range(0.2..0.5));
    for c in 0..3 {
        for y in 0..height {
            for x in 0..width {
                let t = (y as f64 * dy + x as f64 * dx) / norm;
                planes[(c * height + y) * width + x] = offset[c] + amp[c] * t;
            }
        }
    }

    // Sinusoidal gratings at low-to-mid frequencies: structure that stays
    // representable even after aggressive downsampling, so reconstruction
    // quality depends on how smoothly a model interpolates it.
    let gratings = rng.gen_range(2..=3);
    for _ in 0..gratings {
        let freq = rng.gen_range(2.0..8.0);
        let phi = rng.gen_range(0.0..TAU);
        let phase = rng.gen_range(0.0..TAU);
        let (gy, gx) = (phi.sin(), phi.cos());
        let amp: [f64; 3] = std::array::from_fn(|_| rng.gen_range(0.05..0.25));
        for c in 0..3 {
            for y in 0..height {
                for x in 0..width {
                    let t = (y as f64 * gy + x as f64 * gx) / norm;
                    planes[(c * height + y) * width + x] +=
                        amp[c] * (TAU * freq * t + phase).sin();
                }
            }
        }
    }

    // Fine checkerboard: sharp periodic structure that aliases away under
    // plain resampling but is exactly what a learnable periodic encoding
    // can latch onto.
    let cell = *[2usize, 3].get(rng.gen_range(0..2)).unwrap();
    let amp = rng.gen_range(0.15..0.35);
    for c in 0..3 {
        for y in 0..height {
            for x in 0..width {
                let sign = if (y / cell + x / cell) % 2 == 0 { 1.0 } else { -1.0 };
                planes[(c * height + y) * width + x] += amp * sign;
            }
        }
    }

    // Renormalize globally (not per channel, preserving color ratios).
    let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
    for &v in &planes {
        lo = lo.min(v);
        hi = hi.max(v);
    }
    if hi - lo > 1e-9 {
        let scale = 0.96 / (hi - lo);
        for v in &mut planes {
            *v = 0.02 + (*v - lo) * scale;
        }
    } else {
        for v in &mut planes {
            *v = 0.5;
        }
    }
    Image::from_planar(height, width, planes).expect("values normalized into range")
}

/// Generates `count` square images of side `size` under `out_dir`
/// (created if missing) and returns the written paths in name order.
/// File contents depend only on (seed, index, size).
pub fn make_dataset(
    out_dir: &Path,
    count: usize,
    size: usize,
    seed: u64,
) -> Result<Vec<PathBuf>, ImagingError> {
    std::fs::create_dir_all(out_dir).map_err(|e| ImagingError::Write {
        path: out_dir.display().to_string(),
        source: image::ImageError::IoError(e),
    })?;
    let mut paths = Vec::with_capacity(count);
    for i in 0..count {
        let mut rng = image_rng(seed, i as u64);
        let img = synth_image(size, size, &mut rng);
        let path = out_dir.join(format!("synth_{i:04}.png"));
        save_png(&img, &path)?;
        paths.push(path);
    }
    Ok(paths)
}
