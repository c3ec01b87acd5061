//! PSNR and Laplacian response statistics.

use super::{Image, ImagingError};

fn check_dims(a: &Image, b: &Image) -> Result<(), ImagingError> {
    if a.height() != b.height() || a.width() != b.width() {
        return Err(ImagingError::DimensionMismatch {
            a: (a.height(), a.width()),
            b: (b.height(), b.width()),
        });
    }
    Ok(())
}

/// Peak signal-to-noise ratio in decibels: `10·log10(1/MSE)` with the MSE
/// taken over all pixels and channels (RGB convention, no border crop).
/// Identical images return `f64::INFINITY`.
pub fn psnr(a: &Image, b: &Image) -> Result<f64, ImagingError> {
    check_dims(a, b)?;
    let mut acc = 0.0;
    for c in 0..3 {
        for (&x, &y) in a.plane(c).iter().zip(b.plane(c)) {
            let d = x - y;
            acc += d * d;
        }
    }
    let mse = acc / (3 * a.height() * a.width()) as f64;
    if mse == 0.0 {
        return Ok(f64::INFINITY);
    }
    Ok(10.0 * (1.0 / mse).log10())
}

/// Zero-padded response of the 3x3 Laplacian [[0,1,0],[1,-4,1],[0,1,0]].
fn laplacian_plane(src: &[f64], h: usize, w: usize) -> Vec<f64> {
    let at = |y: i64, x: i64| -> f64 {
        if y < 0 || y >= h as i64 || x < 0 || x >= w as i64 {
            0.0
        } else {
            src[(y as usize) * w + x as usize]
        }
    };
    let mut out = vec![0.0; h * w];
    for y in 0..h as i64 {
        for x in 0..w as i64 {
            out[(y as usize) * w + x as usize] =
                at(y - 1, x) + at(y + 1, x) + at(y, x - 1) + at(y, x + 1) - 4.0 * at(y, x);
        }
    }
    out
}

/// Sharpness statistics of `img` with `gt` as the reference: the mean
/// absolute Laplacian response, and the mean absolute difference between
/// the two responses. Both means run over all pixels and channels.
pub fn laplacian_stats(img: &Image, gt: &Image) -> Result<(f64, f64), ImagingError> {
    check_dims(img, gt)?;
    let (h, w) = (img.height(), img.width());
    let mut sum_abs = 0.0;
    let mut sum_err = 0.0;
    for c in 0..3 {
        let li = laplacian_plane(img.plane(c), h, w);
        let lg = laplacian_plane(gt.plane(c), h, w);
        for (&a, &b) in li.iter().zip(&lg) {
            sum_abs += a.abs();
            sum_err += (a - b).abs();
        }
    }
    let n = (3 * h * w) as f64;
    Ok((sum_abs / n, sum_err / n))
}
