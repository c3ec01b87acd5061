//! Desk-scale evaluation protocols: multi-scale PSNR reports, the
//! residual/fusion/encoding ablation, the encoding-dimension sweep, and the
//! Laplacian sharpness study.
//!
//! Protocol: HR images are center-cropped so both dimensions divide the
//! least common multiple of the integer parts of the requested scales; per
//! scale k the LR input is `bicubic_resize(HR, ⌊H/k⌋, ⌊W/k⌋)`, the model
//! renders at `round(⌊H/k⌋·k)` (a further center crop of HR for fractional
//! k), and PSNR is taken against that crop.
//!
//! Reports serialize to JSON with stable field order (bit-identical across
//! runs of the same seed — wall-clock timings live on the structs but stay
//! out of the JSON) and render as aligned-column text for reading.

use std::path::Path;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::imaging::{bicubic_resize, laplacian_stats, psnr, Image, ImagingError};
use crate::model::{render, ModelError};
use crate::training::{load_checkpoint, load_dataset_entries, train, TrainConfig, TrainError};

#[derive(Debug, thiserror::Error)]
pub enum EvalError {
    #[error(transparent)]
    Train(#[from] TrainError),

    #[error(transparent)]
    Imaging(#[from] ImagingError),

    #[error(transparent)]
    Model(#[from] ModelError),

    #[error("{path}: {source}")]
    Io { path: String, source: std::io::Error },

    #[error("missing files: {}", .0.join(", "))]
    MissingFiles(Vec<String>),

    #[error("no scales requested")]
    NoScales,

    #[error("scale {0} out of range (need finite, >= 1)")]
    BadScale(f64),

    #[error("encoding dim {0} must be a positive multiple of 4")]
    BadDim(usize),

    #[error("image {name} ({h}x{w}) too small for this scale set (dims must reach a multiple of {lcm})")]
    TooSmall { name: String, h: usize, w: usize, lcm: usize },

    #[error("incomparable reports: {0}")]
    Incompatible(String),
}

// ── fingerprints ─────────────────────────────────────────────────────

/// 64-bit FNV-1a over a byte stream.
fn fnv1a64(bytes: impl IntoIterator<Item = u8>) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

fn file_fingerprint(path: &Path) -> Result<String, EvalError> {
    let bytes = std::fs::read(path)
        .map_err(|e| EvalError::Io { path: path.display().to_string(), source: e })?;
    Ok(format!("{:016x}", fnv1a64(bytes)))
}

fn dataset_fingerprint(entries: &[(String, Image)]) -> String {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    let mut eat = |bytes: &[u8]| {
        for &b in bytes {
            h ^= b as u64;
            h = h.wrapping_mul(0x0000_0100_0000_01b3);
        }
    };
    for (name, img) in entries {
        eat(name.as_bytes());
        eat(&[0]);
        eat(&(img.height() as u64).to_le_bytes());
        eat(&(img.width() as u64).to_le_bytes());
        for c in 0..3 {
            for v in img.plane(c) {
                eat(&v.to_le_bytes());
            }
        }
    }
    format!("{h:016x}")
}

// ── crop protocol ────────────────────────────────────────────────────

fn gcd(a: usize, b: usize) -> usize {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

fn lcm(a: usize, b: usize) -> usize {
    a / gcd(a, b) * b
}

fn validate_scales(scales: &[f64]) -> Result<usize, EvalError> {
    if scales.is_empty() {
        return Err(EvalError::NoScales);
    }
    for &s in scales {
        if !s.is_finite() || s < 1.0 {
            return Err(EvalError::BadScale(s));
        }
    }
    Ok(scales.iter().map(|&s| s.floor() as usize).fold(1, lcm))
}

fn center_crop(img: &Image, h: usize, w: usize) -> Image {
    img.crop((img.height() - h) / 2, (img.width() - w) / 2, h, w)
}

/// Center crop to dimensions divisible by `divisor`.
fn prepare_hr(name: &str, img: &Image, divisor: usize) -> Result<Image, EvalError> {
    let h = img.height() / divisor * divisor;
    let w = img.width() / divisor * divisor;
    if h == 0 || w == 0 {
        return Err(EvalError::TooSmall {
            name: name.to_string(),
            h: img.height(),
            w: img.width(),
            lcm: divisor,
        });
    }
    Ok(center_crop(img, h, w))
}

/// LR input and the HR crop it is judged against, for one scale.
fn degrade(hr: &Image, scale: f64) -> Result<(Image, Image), EvalError> {
    let lh = (hr.height() as f64 / scale).floor() as usize;
    let lw = (hr.width() as f64 / scale).floor() as usize;
    if lh == 0 || lw == 0 {
        return Err(EvalError::BadScale(scale));
    }
    let th = (lh as f64 * scale).round() as usize;
    let tw = (lw as f64 * scale).round() as usize;
    let lr = bicubic_resize(hr, lh, lw);
    Ok((lr, center_crop(hr, th, tw)))
}

fn check_exists(paths: &[&Path]) -> Result<(), EvalError> {
    let missing: Vec<String> = paths
        .iter()
        .filter(|p| !p.exists())
        .map(|p| p.display().to_string())
        .collect();
    if missing.is_empty() {
        Ok(())
    } else {
        Err(EvalError::MissingFiles(missing))
    }
}

// ── PSNR evaluation ──────────────────────────────────────────────────

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ImageScore {
    pub name: String,
    pub psnr: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ScaleScore {
    pub scale: f64,
    pub mean_psnr: f64,
    pub images: Vec<ImageScore>,
}

/// Wall-clock accounting; carried for display but kept out of the JSON so
/// that reports from identical runs are bit-identical.
#[derive(Clone, Debug, Default)]
pub struct Timing {
    pub total_secs: f64,
    pub per_scale_secs: Vec<f64>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct EvalReport {
    /// "model" or "bicubic".
    pub method: String,
    /// FNV-1a of the checkpoint bytes (config plus weights), or of the
    /// method name when no checkpoint is involved.
    pub fingerprint: String,
    pub dataset_fingerprint: String,
    pub image_count: usize,
    pub scales: Vec<f64>,
    pub per_scale: Vec<ScaleScore>,
    #[serde(skip)]
    pub timing: Timing,
}

impl EvalReport {
    /// Checks the stored means against the per-image values (1e-12).
    pub fn verify_means(&self) -> Result<(), EvalError> {
        for s in &self.per_scale {
            let mean = s.images.iter().map(|i| i.psnr).sum::<f64>() / s.images.len() as f64;
            if !(mean - s.mean_psnr).abs().le(&1e-12) && mean.is_finite() {
                return Err(EvalError::Incompatible(format!(
                    "stored mean {} != recomputed {} at scale {}",
                    s.mean_psnr, mean, s.scale
                )));
            }
        }
        Ok(())
    }

    /// Per-scale PSNR difference (self − baseline). Hard error unless both
    /// reports cover the same dataset and scale list.
    pub fn delta_against(&self, baseline: &EvalReport) -> Result<Vec<f64>, EvalError> {
        if self.dataset_fingerprint != baseline.dataset_fingerprint {
            return Err(EvalError::Incompatible(format!(
                "dataset fingerprints differ ({} vs {})",
                self.dataset_fingerprint, baseline.dataset_fingerprint
            )));
        }
        if self.scales != baseline.scales {
            return Err(EvalError::Incompatible(format!(
                "scale lists differ ({:?} vs {:?})",
                self.scales, baseline.scales
            )));
        }
        Ok(self
            .per_scale
            .iter()
            .zip(&baseline.per_scale)
            .map(|(a, b)| a.mean_psnr - b.mean_psnr)
            .collect())
    }

    /// Aligned-column rendering for humans; includes timings.
    pub fn text(&self) -> String {
        let mut out = String::new();
        out.push_str(&format!("method               {}\n", self.method));
        out.push_str(&format!("fingerprint          {}\n", self.fingerprint));
        out.push_str(&format!("dataset fingerprint  {}\n", self.dataset_fingerprint));
        out.push_str(&format!("images               {}\n\n", self.image_count));
        let name_w = self
            .per_scale
            .iter()
            .flat_map(|s| s.images.iter())
            .map(|i| i.name.len())
            .max()
            .unwrap_or(4)
            .max(5);
        out.push_str(&format!("{:<name_w$}", "image"));
        for s in &self.per_scale {
            out.push_str(&format!("  {:>9}", format!("x{}", s.scale)));
        }
        out.push('\n');
        for idx in 0..self.image_count {
            let name = &self.per_scale[0].images[idx].name;
            out.push_str(&format!("{name:<name_w$}"));
            for s in &self.per_scale {
                out.push_str(&format!("  {:>9.3}", s.images[idx].psnr));
            }
            out.push('\n');
        }
        out.push_str(&format!("{:<name_w$}", "mean"));
        for s in &self.per_scale {
            out.push_str(&format!("  {:>9.3}", s.mean_psnr));
        }
        out.push('\n');
        out.push_str(&format!(
            "\nwall clock: {:.2}s total ({})\n",
            self.timing.total_secs,
            self.timing
                .per_scale_secs
                .iter()
                .zip(&self.scales)
                .map(|(t, s)| format!("x{s}: {t:.2}s"))
                .collect::<Vec<_>>()
                .join(", ")
        ));
        out
    }
}

/// Upscaler used inside the bench. Takes the LR input, the output dims,
/// and the reference HR crop (ignored by real upscalers; oracle tests
/// substitute it for the output).
type Upscale<'a> = dyn Fn(&Image, (usize, usize), &Image) -> Result<Image, EvalError> + Sync + 'a;

fn evaluate_with(
    method: &str,
    fingerprint: String,
    entries: &[(String, Image)],
    scales: &[f64],
    upscale: &Upscale,
) -> Result<EvalReport, EvalError> {
    let divisor = validate_scales(scales)?;
    let prepared: Vec<(String, Image)> = entries
        .iter()
        .map(|(name, img)| Ok((name.clone(), prepare_hr(name, img, divisor)?)))
        .collect::<Result<_, EvalError>>()?;

    let started = Instant::now();
    let mut per_scale = Vec::with_capacity(scales.len());
    let mut per_scale_secs = Vec::with_capacity(scales.len());
    for &scale in scales {
        let tick = Instant::now();
        let images: Vec<ImageScore> = prepared
            .par_iter()
            .map(|(name, hr)| {
                let (lr, target) = degrade(hr, scale)?;
                let sr = upscale(&lr, (target.height(), target.width()), &target)?;
                Ok(ImageScore { name: name.clone(), psnr: psnr(&sr, &target)? })
            })
            .collect::<Result<_, EvalError>>()?;
        let mean_psnr = images.iter().map(|i| i.psnr).sum::<f64>() / images.len() as f64;
        per_scale.push(ScaleScore { scale, mean_psnr, images });
        per_scale_secs.push(tick.elapsed().as_secs_f64());
    }
    Ok(EvalReport {
        method: method.to_string(),
        fingerprint,
        dataset_fingerprint: dataset_fingerprint(entries),
        image_count: entries.len(),
        scales: scales.to_vec(),
        per_scale,
        timing: Timing { total_secs: started.elapsed().as_secs_f64(), per_scale_secs },
    })
}

/// Multi-scale PSNR of a trained checkpoint over a directory of HR images.
pub fn evaluate(ckpt: &Path, dataset_dir: &Path, scales: &[f64]) -> Result<EvalReport, EvalError> {
    check_exists(&[ckpt, dataset_dir])?;
    let (params, cfg) = load_checkpoint(ckpt)?;
    let fingerprint = file_fingerprint(ckpt)?;
    let entries = load_dataset_entries(dataset_dir)?;
    evaluate_with("model", fingerprint, &entries, scales, &|lr, (h, w), _| {
        Ok(render(lr, h, w, &params, &cfg)?)
    })
}

/// The no-model baseline: LR upscaled bicubically.
pub fn evaluate_bicubic(dataset_dir: &Path, scales: &[f64]) -> Result<EvalReport, EvalError> {
    check_exists(&[dataset_dir])?;
    let entries = load_dataset_entries(dataset_dir)?;
    let fingerprint = format!("{:016x}", fnv1a64(*b"bicubic"));
    evaluate_with("bicubic", fingerprint, &entries, scales, &|lr, (h, w), _| {
        Ok(bicubic_resize(lr, h, w))
    })
}

// ── ablation over R/C/S ──────────────────────────────────────────────

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct AblationRow {
    pub label: String,
    pub use_residual: bool,
    pub use_fusion: bool,
    pub use_encoding: bool,
    pub param_count: usize,
    pub fingerprint: String,
    /// Mean PSNR per requested scale.
    pub mean_psnr: Vec<f64>,
    /// Gain in dB over the all-off row, per scale.
    pub delta_db: Vec<f64>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct AblationReport {
    pub dataset_fingerprint: String,
    pub seed: u64,
    pub scales: Vec<f64>,
    pub rows: Vec<AblationRow>,
    #[serde(skip)]
    pub timing: Timing,
}

fn combo_label(r: bool, c: bool, s: bool) -> String {
    let parts: Vec<&str> = [(r, "R"), (c, "C"), (s, "S")]
        .iter()
        .filter(|(on, _)| *on)
        .map(|&(_, l)| l)
        .collect();
    if parts.is_empty() {
        "baseline".to_string()
    } else {
        parts.join("+")
    }
}

/// Trains all eight residual/fusion/encoding toggle combinations with the
/// same seed and budget, evaluates each, and reports per-scale gains over
/// the all-off baseline.
pub fn run_ablation(
    base: &TrainConfig,
    dataset_dir: &Path,
    scales: &[f64],
) -> Result<AblationReport, EvalError> {
    check_exists(&[dataset_dir])?;
    validate_scales(scales)?;
    let started = Instant::now();
    let workdir = tempfile::tempdir()
        .map_err(|e| EvalError::Io { path: "tempdir".to_string(), source: e })?;
    let mut rows = Vec::with_capacity(8);
    let mut dataset_fpr = String::new();
    for combo in 0..8u8 {
        let (r, c, s) = (combo & 4 != 0, combo & 2 != 0, combo & 1 != 0);
        let mut cfg = base.clone();
        cfg.dataset_dir = dataset_dir.to_path_buf();
        cfg.model.use_residual = r;
        cfg.model.use_fusion = c;
        cfg.model.use_encoding = s;
        let label = combo_label(r, c, s);
        let ckpt = workdir.path().join(format!("ablate_{combo}.uisr"));
        train(&cfg, &ckpt, None, |_| {})?;
        let report = evaluate(&ckpt, dataset_dir, scales)?;
        dataset_fpr = report.dataset_fingerprint.clone();
        rows.push(AblationRow {
            label,
            use_residual: r,
            use_fusion: c,
            use_encoding: s,
            param_count: cfg.model.param_count(),
            fingerprint: report.fingerprint.clone(),
            mean_psnr: report.per_scale.iter().map(|s| s.mean_psnr).collect(),
            delta_db: Vec::new(),
        });
    }
    let baseline: Vec<f64> = rows[0].mean_psnr.clone();
    for row in &mut rows {
        row.delta_db = row.mean_psnr.iter().zip(&baseline).map(|(a, b)| a - b).collect();
    }
    Ok(AblationReport {
        dataset_fingerprint: dataset_fpr,
        seed: base.seed,
        scales: scales.to_vec(),
        rows,
        timing: Timing { total_secs: started.elapsed().as_secs_f64(), per_scale_secs: vec![] },
    })
}

impl AblationReport {
    pub fn text(&self) -> String {
        let mut out = String::new();
        out.push_str(&format!(
            "ablation over R/C/S  seed {}  dataset {}\n\n",
            self.seed, self.dataset_fingerprint
        ));
        let label_w = self.rows.iter().map(|r| r.label.len()).max().unwrap_or(6).max(6);
        out.push_str(&format!("{:<label_w$}  {:>9}", "config", "params"));
        for s in &self.scales {
            out.push_str(&format!("  {:>9}  {:>7}", format!("x{s} dB"), "delta"));
        }
        out.push('\n');
        for row in &self.rows {
            out.push_str(&format!("{:<label_w$}  {:>9}", row.label, row.param_count));
            for (p, d) in row.mean_psnr.iter().zip(&row.delta_db) {
                out.push_str(&format!("  {p:>9.3}  {d:>+7.3}"));
            }
            out.push('\n');
        }
        out.push_str(&format!("\nwall clock: {:.2}s total\n", self.timing.total_secs));
        out
    }
}

// ── encoding-dimension sweep ─────────────────────────────────────────

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct DimSweepRow {
    pub dim: usize,
    /// Width of the decoder's first layer input (grows by exactly `dim`).
    pub layer0_width: usize,
    pub param_count: usize,
    pub fingerprint: String,
    pub mean_psnr: Vec<f64>,
    /// Gain in dB over the no-encoding row, per scale.
    pub delta_db: Vec<f64>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct DimSweepReport {
    pub dataset_fingerprint: String,
    pub seed: u64,
    pub scales: Vec<f64>,
    /// First row is the dim-0 baseline (residual and fusion on, no
    /// encoding); the rest follow the requested dims in order.
    pub rows: Vec<DimSweepRow>,
    #[serde(skip)]
    pub timing: Timing,
}

/// Trains one model per encoding dimension (residual and fusion always on)
/// plus the no-encoding baseline, and reports per-scale gains over it.
pub fn run_dim_sweep(
    base: &TrainConfig,
    dims: &[usize],
    dataset_dir: &Path,
    scales: &[f64],
) -> Result<DimSweepReport, EvalError> {
    check_exists(&[dataset_dir])?;
    validate_scales(scales)?;
    for &d in dims {
        if d == 0 || d % 4 != 0 {
            return Err(EvalError::BadDim(d));
        }
    }
    let started = Instant::now();
    let workdir = tempfile::tempdir()
        .map_err(|e| EvalError::Io { path: "tempdir".to_string(), source: e })?;
    let mut rows = Vec::with_capacity(dims.len() + 1);
    let mut dataset_fpr = String::new();
    for (i, &dim) in std::iter::once(&0).chain(dims).enumerate() {
        let mut cfg = base.clone();
        cfg.dataset_dir = dataset_dir.to_path_buf();
        cfg.model.use_residual = true;
        cfg.model.use_fusion = true;
        cfg.model.use_encoding = dim > 0;
        if dim > 0 {
            cfg.model.encoding_dim = dim;
        }
        let ckpt = workdir.path().join(format!("dim_{i}.uisr"));
        train(&cfg, &ckpt, None, |_| {})?;
        let report = evaluate(&ckpt, dataset_dir, scales)?;
        dataset_fpr = report.dataset_fingerprint.clone();
        rows.push(DimSweepRow {
            dim,
            layer0_width: cfg.model.decoder_input_width(),
            param_count: cfg.model.param_count(),
            fingerprint: report.fingerprint.clone(),
            mean_psnr: report.per_scale.iter().map(|s| s.mean_psnr).collect(),
            delta_db: Vec::new(),
        });
    }
    let baseline = rows[0].mean_psnr.clone();
    for row in &mut rows {
        row.delta_db = row.mean_psnr.iter().zip(&baseline).map(|(a, b)| a - b).collect();
    }
    Ok(DimSweepReport {
        dataset_fingerprint: dataset_fpr,
        seed: base.seed,
        scales: scales.to_vec(),
        rows,
        timing: Timing { total_secs: started.elapsed().as_secs_f64(), per_scale_secs: vec![] },
    })
}

impl DimSweepReport {
    pub fn text(&self) -> String {
        let mut out = String::new();
        out.push_str(&format!(
            "encoding-dimension sweep  seed {}  dataset {}\n\n",
            self.seed, self.dataset_fingerprint
        ));
        out.push_str(&format!("{:>4}  {:>8}  {:>9}", "dim", "layer0", "params"));
        for s in &self.scales {
            out.push_str(&format!("  {:>9}  {:>7}", format!("x{s} dB"), "delta"));
        }
        out.push('\n');
        for row in &self.rows {
            out.push_str(&format!(
                "{:>4}  {:>8}  {:>9}",
                row.dim, row.layer0_width, row.param_count
            ));
            for (p, d) in row.mean_psnr.iter().zip(&row.delta_db) {
                out.push_str(&format!("  {p:>9.3}  {d:>+7.3}"));
            }
            out.push('\n');
        }
        out.push_str(&format!("\nwall clock: {:.2}s total\n", self.timing.total_secs));
        out
    }
}

// ── Laplacian sharpness study ────────────────────────────────────────

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct LapPoint {
    pub scale: f64,
    /// (mean |Laplacian|, mean |Laplacian error vs GT|), encoding side.
    pub with_encoding: (f64, f64),
    /// Same statistics for the no-encoding side.
    pub without_encoding: (f64, f64),
    /// Percentage change of the encoding side over the other, per statistic.
    pub delta_abs_pct: f64,
    pub delta_err_pct: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct LapReport {
    pub fingerprint_with: String,
    pub fingerprint_without: String,
    pub dataset_fingerprint: String,
    pub scales: Vec<f64>,
    pub points: Vec<LapPoint>,
    #[serde(skip)]
    pub timing: Timing,
}

fn pct_delta(a: f64, b: f64) -> f64 {
    if a == b {
        0.0
    } else {
        100.0 * (a - b) / b
    }
}

fn lap_study_with(
    fpr_with: String,
    fpr_without: String,
    entries: &[(String, Image)],
    scales: &[f64],
    up_with: &Upscale,
    up_without: &Upscale,
) -> Result<LapReport, EvalError> {
    let divisor = validate_scales(scales)?;
    let prepared: Vec<(String, Image)> = entries
        .iter()
        .map(|(name, img)| Ok((name.clone(), prepare_hr(name, img, divisor)?)))
        .collect::<Result<_, EvalError>>()?;

    let started = Instant::now();
    let mut points = Vec::with_capacity(scales.len());
    let mut per_scale_secs = Vec::with_capacity(scales.len());
    for &scale in scales {
        let tick = Instant::now();
        let stats: Vec<((f64, f64), (f64, f64))> = prepared
            .par_iter()
            .map(|(_, hr)| {
                let (lr, target) = degrade(hr, scale)?;
                let dims = (target.height(), target.width());
                let a = laplacian_stats(&up_with(&lr, dims, &target)?, &target)?;
                let b = laplacian_stats(&up_without(&lr, dims, &target)?, &target)?;
                Ok((a, b))
            })
            .collect::<Result<_, EvalError>>()?;
        let n = stats.len() as f64;
        let mean = |f: &dyn Fn(&((f64, f64), (f64, f64))) -> f64| {
            stats.iter().map(f).sum::<f64>() / n
        };
        let (wa, we) = (mean(&|s| s.0 .0), mean(&|s| s.0 .1));
        let (oa, oe) = (mean(&|s| s.1 .0), mean(&|s| s.1 .1));
        points.push(LapPoint {
            scale,
            with_encoding: (wa, we),
            without_encoding: (oa, oe),
            delta_abs_pct: pct_delta(wa, oa),
            delta_err_pct: pct_delta(we, oe),
        });
        per_scale_secs.push(tick.elapsed().as_secs_f64());
    }
    Ok(LapReport {
        fingerprint_with: fpr_with,
        fingerprint_without: fpr_without,
        dataset_fingerprint: dataset_fingerprint(entries),
        scales: scales.to_vec(),
        points,
        timing: Timing { total_secs: started.elapsed().as_secs_f64(), per_scale_secs },
    })
}

/// Renders two checkpoints (conventionally: spatial encoding on and off)
/// across scales and reports the Laplacian sharpness statistics of each,
/// plus the percentage change of the first over the second.
pub fn laplacian_study(
    ckpt_with: &Path,
    ckpt_without: &Path,
    dataset_dir: &Path,
    scales: &[f64],
) -> Result<LapReport, EvalError> {
    check_exists(&[ckpt_with, ckpt_without, dataset_dir])?;
    let (params_w, cfg_w) = load_checkpoint(ckpt_with)?;
    let (params_o, cfg_o) = load_checkpoint(ckpt_without)?;
    let entries = load_dataset_entries(dataset_dir)?;
    lap_study_with(
        file_fingerprint(ckpt_with)?,
        file_fingerprint(ckpt_without)?,
        &entries,
        scales,
        &|lr, (h, w), _| Ok(render(lr, h, w, &params_w, &cfg_w)?),
        &|lr, (h, w), _| Ok(render(lr, h, w, &params_o, &cfg_o)?),
    )
}

impl LapReport {
    pub fn text(&self) -> String {
        let mut out = String::new();
        out.push_str(&format!(
            "Laplacian sharpness study  dataset {}\n  with:    {}\n  without: {}\n\n",
            self.dataset_fingerprint, self.fingerprint_with, self.fingerprint_without
        ));
        out.push_str(&format!(
            "{:>6}  {:>10} {:>10} {:>8}  {:>10} {:>10} {:>8}\n",
            "scale", "|L| with", "|L| w/o", "delta%", "err with", "err w/o", "delta%"
        ));
        for p in &self.points {
            out.push_str(&format!(
                "{:>6}  {:>10.6} {:>10.6} {:>+8.2}  {:>10.6} {:>10.6} {:>+8.2}\n",
                format!("x{}", p.scale),
                p.with_encoding.0,
                p.without_encoding.0,
                p.delta_abs_pct,
                p.with_encoding.1,
                p.without_encoding.1,
                p.delta_err_pct,
            ));
        }
        out.push_str(&format!("\nwall clock: {:.2}s total\n", self.timing.total_secs));
        out
    }
}

/// Serializes a report (or any value) as pretty JSON to `path`.
pub fn write_json<T: Serialize>(value: &T, path: &Path) -> Result<(), EvalError> {
    let text = serde_json::to_string_pretty(value).expect("reports serialize");
    std::fs::write(path, text + "\n")
        .map_err(|e| EvalError::Io { path: path.display().to_string(), source: e })
}
