//! Separable cubic-convolution resampling with kernel parameter a = −0.5.
//!
//! When minifying, the kernel is stretched by the scale factor so it acts as
//! a low-pass filter (antialiasing), matching the usual degradation pipeline
//! for super-resolution datasets. Borders replicate the edge pixel, and the
//! tap weights of each output are renormalized so constants survive exactly.

use super::Image;

const A: f64 = -0.5;

/// Cubic convolution kernel (Keys), support `[-2, 2]`.
fn kernel(t: f64) -> f64 {
    let t = t.abs();
    if t <= 1.0 {
        ((A + 2.0) * t - (A + 3.0)) * t * t + 1.0
    } else if t < 2.0 {
        A * (((t - 5.0) * t + 8.0) * t - 4.0)
    } else {
        0.0
    }
}

/// Source taps contributing to one output position along one axis.
struct Taps {
    start: usize,
    weights: Vec<f64>,
}

/// Tap table for resampling an axis of `n_in` samples to `n_out`. Output
/// center `i` sits at source coordinate `(i+0.5)·n_in/n_out − 0.5`.
fn axis_taps(n_in: usize, n_out: usize) -> Vec<Taps> {
    let scale = n_in as f64 / n_out as f64;
    let stretch = scale.max(1.0);
    let radius = 2.0 * stretch;
    (0..n_out)
        .map(|i| {
            let u = (i as f64 + 0.5) * scale - 0.5;
            let lo = (u - radius).ceil() as i64;
            let hi = (u + radius).floor() as i64;
            let raw: Vec<f64> = (lo..=hi).map(|j| kernel((j as f64 - u) / stretch)).collect();
            let sum: f64 = raw.iter().sum();
            // Fold out-of-range taps onto the border sample (edge replication).
            let max = n_in as i64 - 1;
            let start = lo.clamp(0, max) as usize;
            let end = hi.clamp(0, max) as usize;
            let mut weights = vec![0.0; end - start + 1];
            for (w, j) in raw.iter().zip(lo..=hi) {
                weights[(j.clamp(0, max) as usize) - start] += w / sum;
            }
            Taps { start, weights }
        })
        .collect()
}

/// Resamples to `out_h` x `out_w`; result is clamped into `[0,1]`.
pub fn bicubic_resize(img: &Image, out_h: usize, out_w: usize) -> Image {
    assert!(out_h >= 1 && out_w >= 1, "empty output");
    let (h, w) = (img.height(), img.width());
    let col_taps = axis_taps(w, out_w);
    let row_taps = axis_taps(h, out_h);
    let mut out = vec![0.0; 3 * out_h * out_w];
    let mut tmp = vec![0.0; h * out_w];
    for c in 0..3 {
        let plane = img.plane(c);
        for y in 0..h {
            let src = &plane[y * w..(y + 1) * w];
            let dst = &mut tmp[y * out_w..(y + 1) * out_w];
            for (d, t) in dst.iter_mut().zip(&col_taps) {
                let mut acc = 0.0;
                for (k, &wt) in t.weights.iter().enumerate() {
                    acc += wt * src[t.start + k];
                }
                *d = acc;
            }
        }
        for (o, t) in row_taps.iter().enumerate() {
            let dst = &mut out[(c * out_h + o) * out_w..(c * out_h + o + 1) * out_w];
            for (k, &wt) in t.weights.iter().enumerate() {
                let srow = &tmp[(t.start + k) * out_w..(t.start + k + 1) * out_w];
                for (d, &s) in dst.iter_mut().zip(srow) {
                    *d += wt * s;
                }
            }
            for d in dst.iter_mut() {
                *d = d.clamp(0.0, 1.0);
            }
        }
    }
    Image::from_planar(out_h, out_w, out).expect("resized image")
}
