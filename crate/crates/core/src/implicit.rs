//! Continuous-coordinate machinery between the feature map and the decoder:
//! coordinate grids, relative offsets, the periodic spatial encoding, feature
//! unfolding, local ensemble weights, and cell decoding.
//!
//! Conventions used throughout: axis 0 is y (height), axis 1 is x (width);
//! image coordinates live in [−1,1] per axis; relative offsets are expressed
//! in nearest-cell units, where adjacent feature centers are 1.0 apart.

use serde::{Deserialize, Serialize};

use crate::numerics::{kernels, NumericsError, Scalar, Tensor};

#[derive(Debug, thiserror::Error)]
pub enum ImplicitError {
    #[error("query target ({y}, {x}) outside [-1,1]^2")]
    TargetOutOfRange { y: f64, x: f64 },

    #[error("frequency {0} is not finite and positive")]
    BadFrequency(f64),

    #[error("need at least one frequency")]
    NoFrequencies,
}

/// Pixel/feature center positions along one axis: `-1 + (2i+1)/n`.
/// Centers are symmetric about zero and never touch the ±1 boundary.
pub fn coord_grid(n: usize) -> Vec<f64> {
    assert!(n >= 1, "empty axis");
    (0..n).map(|i| -1.0 + (2 * i + 1) as f64 / n as f64).collect()
}

/// How the encoding frequencies are initialized.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum FreqInit {
    /// w_n = 2·eⁿ for n = 1..F — the documented initialization, kept
    /// literally even though the top frequencies grow very fast.
    #[serde(rename = "paper_2e_n")]
    Paper2EN,
    /// w_n = 2ⁿ for n = 1..F — octave spacing, provided as an explicit
    /// alternative; never substituted silently.
    #[serde(rename = "pow2")]
    Pow2,
}

/// Learnable encoding frequencies, shared across the two axes.
/// The encoded vector has length `4F`: 2 axes × F frequencies × (sin, cos).
#[derive(Clone, Debug, PartialEq)]
pub struct EncodingParams {
    freqs: Vec<f64>,
}

impl EncodingParams {
    pub fn init(f: usize, mode: FreqInit) -> EncodingParams {
        let freqs = (1..=f as i32)
            .map(|n| match mode {
                FreqInit::Paper2EN => 2.0 * std::f64::consts::E.powi(n),
                FreqInit::Pow2 => 2.0f64.powi(n),
            })
            .collect();
        EncodingParams { freqs }
    }

    pub fn new(freqs: Vec<f64>) -> Result<EncodingParams, ImplicitError> {
        if freqs.is_empty() {
            return Err(ImplicitError::NoFrequencies);
        }
        if let Some(&bad) = freqs.iter().find(|f| !f.is_finite() || **f <= 0.0) {
            return Err(ImplicitError::BadFrequency(bad));
        }
        Ok(EncodingParams { freqs })
    }

    pub fn freqs(&self) -> &[f64] {
        &self.freqs
    }

    pub fn encoding_dim(&self) -> usize {
        4 * self.freqs.len()
    }
}

/// Periodic encoding of a 2-vector offset: per axis, per frequency,
/// `(sin(w_k·d), cos(w_k·d))`. Layout is axis-major, frequency-minor,
/// sin before cos, so a zero offset encodes as (0, 1, 0, 1, …).
pub fn spatial_encoding(delta: (f64, f64), params: &EncodingParams) -> Vec<f64> {
    let mut out = Vec::with_capacity(params.encoding_dim());
    for d in [delta.0, delta.1] {
        for &w in &params.freqs {
            let a = w * d;
            out.push(a.sin());
            out.push(a.cos());
        }
    }
    out
}

/// Pure (non-graph) 3x3 feature unfold: `[C,H,W] -> [9C,H,W]`, zero-padded.
pub fn unfold3x3<T: Scalar>(fm: &Tensor<T>) -> Result<Tensor<T>, NumericsError> {
    let s = fm.shape();
    if s.len() != 3 {
        return Err(NumericsError::ShapeMismatch {
            op: "unfold3x3",
            detail: format!("want [C,H,W], got {:?}", s),
        });
    }
    let (c, h, w) = (s[0], s[1], s[2]);
    Tensor::from_vec(&[9 * c, h, w], kernels::unfold3x3(fm.data(), c, h, w))
}

/// Local-ensemble weights of the four feature centers around a query.
/// Each neighbor's weight is the area of the rectangle spanned by the query
/// and the diagonally opposite neighbor, normalized to sum to 1. Neighbors
/// are ordered row-major: top-left, top-right, bottom-left, bottom-right,
/// so the diagonal partner of index `i` is `3 - i`.
pub fn ensemble_weights(query: (f64, f64), neighbors: &[(f64, f64); 4]) -> [f64; 4] {
    let mut w = [0.0; 4];
    let mut total = 0.0;
    for i in 0..4 {
        let opp = neighbors[3 - i];
        w[i] = (query.0 - opp.0).abs() * (query.1 - opp.1).abs();
        total += w[i];
    }
    if total < 1e-9 {
        // Degenerate cell (clamped corner); fall back to the nearest center.
        let nearest = (0..4)
            .min_by(|&a, &b| {
                let da = (query.0 - neighbors[a].0).powi(2) + (query.1 - neighbors[a].1).powi(2);
                let db = (query.0 - neighbors[b].0).powi(2) + (query.1 - neighbors[b].1).powi(2);
                da.partial_cmp(&db).unwrap()
            })
            .unwrap();
        w = [0.0; 4];
        w[nearest] = 1.0;
        return w;
    }
    for v in &mut w {
        *v /= total;
    }
    w
}

/// Geometry of one query against one of its four surrounding feature
/// centers: where to fetch the feature vector, the relative offset fed to
/// the decoder, the target pixel extent, and the ensemble weight.
#[derive(Clone, Debug, PartialEq)]
pub struct QueryGeometry {
    /// Feature-map indices (y, x), clamped into the grid.
    pub neighbor: (usize, usize),
    /// δx = query − neighbor center, in nearest-cell units (adjacent centers
    /// are 1.0 apart). Computed from the unclamped ideal center, so border
    /// queries still see a consistent offset field.
    pub rel: (f64, f64),
    /// Target pixel extent in the same units: (fm_h/out_h, fm_w/out_w).
    pub cell: (f64, f64),
    /// Local-ensemble blend weight; the four weights of a query sum to 1.
    pub weight: f64,
}

/// Per-target, per-neighbor query geometry for a `fm_h` x `fm_w` feature
/// grid rendered at `out_dims`. Pure and order-independent: permuting
/// `targets` permutes the output rows identically.
pub fn build_geometry(
    fm_h: usize,
    fm_w: usize,
    targets: &[(f64, f64)],
    out_dims: (usize, usize),
) -> Result<Vec<[QueryGeometry; 4]>, ImplicitError> {
    let cell = (fm_h as f64 / out_dims.0 as f64, fm_w as f64 / out_dims.1 as f64);
    targets
        .iter()
        .map(|&(ty, tx)| {
            if !(-1.0..=1.0).contains(&ty) || !(-1.0..=1.0).contains(&tx) {
                return Err(ImplicitError::TargetOutOfRange { y: ty, x: tx });
            }
            // Continuous index-space position; center i sits exactly at i.
            let uy = (ty + 1.0) * fm_h as f64 / 2.0 - 0.5;
            let ux = (tx + 1.0) * fm_w as f64 / 2.0 - 0.5;
            let iy0 = uy.floor() as i64;
            let ix0 = ux.floor() as i64;
            let mut out: [QueryGeometry; 4] = std::array::from_fn(|_| QueryGeometry {
                neighbor: (0, 0),
                rel: (0.0, 0.0),
                cell,
                weight: 0.0,
            });
            let mut centers = [(0.0, 0.0); 4];
            for (slot, (dy, dx)) in [(0, 0), (0, 1), (1, 0), (1, 1)].iter().enumerate() {
                let (iy, ix) = (iy0 + dy, ix0 + dx);
                // In index units δx is simply u − i, and the ideal center in
                // [−1,1] space is the grid formula evaluated at the
                // unclamped index.
                let cy = -1.0 + (2 * iy + 1) as f64 / fm_h as f64;
                let cx = -1.0 + (2 * ix + 1) as f64 / fm_w as f64;
                centers[slot] = (cy, cx);
                out[slot].neighbor = (
                    iy.clamp(0, fm_h as i64 - 1) as usize,
                    ix.clamp(0, fm_w as i64 - 1) as usize,
                );
                out[slot].rel = (uy - iy as f64, ux - ix as f64);
            }
            let w = ensemble_weights((ty, tx), &centers);
            for (slot, wv) in w.iter().enumerate() {
                out[slot].weight = *wv;
            }
            Ok(out)
        })
        .collect()
}

/// Everything the decoder consumes for one (query, neighbor) pair.
#[derive(Clone, Debug, PartialEq)]
pub struct QueryBundle {
    /// Unfolded feature vector v_r at the neighbor (9C values).
    pub feature: Vec<f64>,
    /// Relative offset δx in nearest-cell units.
    pub rel_coord: (f64, f64),
    /// φ(δx); values always within [−1, 1].
    pub encoding: Vec<f64>,
    /// Target pixel extent in nearest-cell units.
    pub cell: (f64, f64),
}

/// Assembles full decoder inputs (with ensemble weight) for each target.
/// `fm` is the raw `[C,H,W]` feature map; unfolding happens here.
pub fn build_queries(
    fm: &Tensor<f64>,
    targets: &[(f64, f64)],
    out_dims: (usize, usize),
    params: &EncodingParams,
) -> Result<Vec<[(QueryBundle, f64); 4]>, ImplicitError> {
    let unfolded = unfold3x3(fm).expect("feature map is [C,H,W]");
    let s = unfolded.shape().to_vec();
    let (k, h, w) = (s[0], s[1], s[2]);
    let plane = h * w;
    let geom = build_geometry(h, w, targets, out_dims)?;
    Ok(geom
        .into_iter()
        .map(|four| {
            four.map(|g| {
                let pos = g.neighbor.0 * w + g.neighbor.1;
                let feature: Vec<f64> =
                    (0..k).map(|c| unfolded.data()[c * plane + pos]).collect();
                let bundle = QueryBundle {
                    feature,
                    rel_coord: g.rel,
                    encoding: spatial_encoding(g.rel, params),
                    cell: g.cell,
                };
                (bundle, g.weight)
            })
        })
        .collect())
}
