//! Patch sampling, the L1 training loop with its halving learning-rate
//! schedule, and checkpoint persistence.
//!
//! Determinism contract: given (seed, config, dataset bytes), training
//! produces a bit-identical checkpoint. One base seed fans out into fixed
//! per-purpose streams (init, scale, image pick, crop, queries), so adding
//! a consumer to one stream never perturbs the others. Batch preparation
//! runs on a producer thread with a bounded queue; every random draw
//! happens producer-side in a fixed order.

mod checkpoint;

use std::path::{Path, PathBuf};
use std::sync::mpsc;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::imaging::{load_png, make_lr_hr_pair, Image, ImagingError};
use crate::implicit::{build_geometry, coord_grid, ImplicitError};
use crate::model::{GraphModel, ModelConfig, ModelError, ModelParams};
use crate::numerics::{AdamParams, AdamState, Graph, NumericsError, Scalar, Tensor};

pub use checkpoint::{load_checkpoint, save_checkpoint};

#[derive(Debug, thiserror::Error)]
pub enum TrainError {
    #[error(transparent)]
    Model(#[from] ModelError),

    #[error(transparent)]
    Numerics(#[from] NumericsError),

    #[error(transparent)]
    Imaging(#[from] ImagingError),

    #[error(transparent)]
    Implicit(#[from] ImplicitError),

    #[error("{path}: {source}")]
    Io { path: String, source: std::io::Error },

    #[error("invalid training config: {0}")]
    BadConfig(String),

    #[error("dataset directory {0} contains no PNG images")]
    EmptyDataset(String),

    #[error("no dataset image fits a {side}x{side} crop")]
    DatasetTooSmall { side: usize },

    #[error("non-finite loss ({0})")]
    NonFiniteLoss(f64),

    #[error("batch producer terminated unexpectedly")]
    ProducerDied,

    #[error("checkpoint has bad magic {0:?}")]
    BadMagic([u8; 4]),

    #[error("unsupported checkpoint version {0}")]
    BadVersion(u32),

    #[error("checkpoint truncated: need {need} bytes, have {have}")]
    Truncated { need: usize, have: usize },

    #[error("corrupt checkpoint: {0}")]
    Corrupt(String),
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub enum Precision {
    #[default]
    #[serde(rename = "single")]
    Single,
    #[serde(rename = "double")]
    Double,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    pub dataset_dir: PathBuf,
    #[serde(default = "d_epochs")]
    pub epochs: usize,
    #[serde(default = "d_iters")]
    pub iters_per_epoch: usize,
    #[serde(default = "d_batch")]
    pub batch_size: usize,
    #[serde(default = "d_patch")]
    pub lr_patch: usize,
    #[serde(default = "d_queries")]
    pub queries_per_item: usize,
    #[serde(default = "d_scale_min")]
    pub scale_min: f64,
    #[serde(default = "d_scale_max")]
    pub scale_max: f64,
    #[serde(default = "d_lr")]
    pub lr: f64,
    #[serde(default = "d_halve")]
    pub lr_halve_epochs: Vec<usize>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub precision: Precision,
    #[serde(default)]
    pub model: ModelConfig,
}

fn d_epochs() -> usize {
    20
}
fn d_iters() -> usize {
    100
}
fn d_batch() -> usize {
    4
}
fn d_patch() -> usize {
    48
}
fn d_queries() -> usize {
    2304
}
fn d_scale_min() -> f64 {
    2.0
}
fn d_scale_max() -> f64 {
    4.0
}
fn d_lr() -> f64 {
    1e-4
}
fn d_halve() -> Vec<usize> {
    vec![8, 14]
}

impl TrainConfig {
    /// Minimal config around a dataset directory; everything else defaulted.
    pub fn for_dataset(dir: impl Into<PathBuf>) -> TrainConfig {
        serde_json::from_value(serde_json::json!({ "dataset_dir": dir.into() }))
            .expect("defaults fill in")
    }

    pub fn validate(&self) -> Result<(), TrainError> {
        // epochs may be 0 (checkpoint equals initialization).
        for (name, v) in [
            ("iters_per_epoch", self.iters_per_epoch),
            ("batch_size", self.batch_size),
            ("lr_patch", self.lr_patch),
            ("queries_per_item", self.queries_per_item),
        ] {
            if v == 0 {
                return Err(TrainError::BadConfig(format!("{name} must be >= 1")));
            }
        }
        if !(self.scale_min >= 1.0 && self.scale_max >= self.scale_min) {
            return Err(TrainError::BadConfig(format!(
                "need 1 <= scale_min <= scale_max, got {}..{}",
                self.scale_min, self.scale_max
            )));
        }
        if !(self.lr.is_finite() && self.lr > 0.0) {
            return Err(TrainError::BadConfig(format!("lr must be positive, got {}", self.lr)));
        }
        self.model.validate()?;
        Ok(())
    }
}

// ── deterministic randomness ─────────────────────────────────────────

const PURPOSE_INIT: u64 = 0;
const PURPOSE_SCALE: u64 = 1;
const PURPOSE_PICK: u64 = 2;
const PURPOSE_CROP: u64 = 3;
const PURPOSE_QUERY: u64 = 4;

/// Independent stream for one (seed, purpose) pair.
pub fn rng_stream(seed: u64, purpose: u64) -> ChaCha8Rng {
    let mut key = [0u8; 32];
    key[..8].copy_from_slice(&seed.to_le_bytes());
    key[8..16].copy_from_slice(&purpose.to_le_bytes());
    ChaCha8Rng::from_seed(key)
}

/// The sampling-side streams, advanced in a fixed order per batch item.
pub struct SampleStreams {
    scale: ChaCha8Rng,
    pick: ChaCha8Rng,
    crop: ChaCha8Rng,
    query: ChaCha8Rng,
}

impl SampleStreams {
    pub fn new(seed: u64) -> SampleStreams {
        SampleStreams {
            scale: rng_stream(seed, PURPOSE_SCALE),
            pick: rng_stream(seed, PURPOSE_PICK),
            crop: rng_stream(seed, PURPOSE_CROP),
            query: rng_stream(seed, PURPOSE_QUERY),
        }
    }
}

// ── batch sampling ───────────────────────────────────────────────────

/// One training example: an LR patch plus query targets in its HR frame.
#[derive(Clone, Debug, PartialEq)]
pub struct BatchItem {
    pub lr: Image,
    pub scale: f64,
    /// HR patch dims; the query cell size is derived from these.
    pub hr_dims: (usize, usize),
    /// Query coordinates (HR pixel centers) in [−1,1]².
    pub targets: Vec<(f64, f64)>,
    /// Ground-truth RGB of each target's HR pixel.
    pub gt: Vec<[f64; 3]>,
}

/// Draws `batch_size` items: per item a uniform scale, a random source
/// image that can fit the HR crop, a random aligned crop degraded to LR,
/// and `queries_per_item` HR pixel centers (without replacement when the
/// patch has enough pixels, with replacement otherwise).
pub fn sample_batch(
    dataset: &[Image],
    cfg: &TrainConfig,
    st: &mut SampleStreams,
) -> Result<Vec<BatchItem>, TrainError> {
    let mut batch = Vec::with_capacity(cfg.batch_size);
    for _ in 0..cfg.batch_size {
        let scale = st.scale.gen_range(cfg.scale_min..=cfg.scale_max);
        let side = (scale * cfg.lr_patch as f64).round() as usize;
        let eligible: Vec<usize> = (0..dataset.len())
            .filter(|&i| dataset[i].height() >= side && dataset[i].width() >= side)
            .collect();
        if eligible.is_empty() {
            return Err(TrainError::DatasetTooSmall { side });
        }
        let img = &dataset[eligible[st.pick.gen_range(0..eligible.len())]];
        let (lr, hr) = make_lr_hr_pair(img, scale, cfg.lr_patch, &mut st.crop)?;

        let (hh, hw) = (hr.height(), hr.width());
        let total = hh * hw;
        let k = cfg.queries_per_item;
        let picks: Vec<usize> = if total >= k {
            // Partial Fisher-Yates: k distinct positions.
            let mut pool: Vec<usize> = (0..total).collect();
            for j in 0..k {
                let r = st.query.gen_range(j..total);
                pool.swap(j, r);
            }
            pool.truncate(k);
            pool
        } else {
            (0..k).map(|_| st.query.gen_range(0..total)).collect()
        };
        let gy = coord_grid(hh);
        let gx = coord_grid(hw);
        let mut targets = Vec::with_capacity(k);
        let mut gt = Vec::with_capacity(k);
        for p in picks {
            let (py, px) = (p / hw, p % hw);
            targets.push((gy[py], gx[px]));
            gt.push([hr.get(0, py, px), hr.get(1, py, px), hr.get(2, py, px)]);
        }
        batch.push(BatchItem { lr, scale, hr_dims: (hh, hw), targets, gt });
    }
    Ok(batch)
}

// ── optimization ─────────────────────────────────────────────────────

/// Fresh ADAM buffers, one per parameter tensor in visit order.
pub fn new_opt_state<T: Scalar>(params: &ModelParams<T>) -> Vec<AdamState<T>> {
    let mut out = Vec::new();
    params.visit(|_, t| out.push(AdamState::new(t.len())));
    out
}

/// One optimization step: forward each batch item (encode, unfold, gather,
/// decode, ensemble blend), mean L1 against the ground truth, backward, and
/// an ADAM update of every parameter including the encoding frequencies.
/// Returns the batch loss.
pub fn train_step<T: Scalar>(
    params: &mut ModelParams<T>,
    opt: &mut [AdamState<T>],
    hp: &AdamParams,
    batch: &[BatchItem],
    mcfg: &ModelConfig,
) -> Result<f64, TrainError> {
    let mut g: Graph<T> = Graph::new();
    let gm = GraphModel::insert(&mut g, params, mcfg, true);
    let mut item_losses = Vec::with_capacity(batch.len());
    for item in batch {
        let lr_node = g.constant(item.lr.to_tensor());
        let fm = gm.encode(&mut g, lr_node)?;
        let unfolded = g.unfold3x3(fm)?;
        let geom =
            build_geometry(item.lr.height(), item.lr.width(), &item.targets, item.hr_dims)?;
        let n = item.targets.len();
        let mut idx = Vec::with_capacity(4 * n);
        let mut rel = Vec::with_capacity(4 * n);
        let mut cell = Vec::with_capacity(4 * n);
        let mut weights = vec![[0.0; 4]; n];
        for slot in 0..4 {
            for (i, four) in geom.iter().enumerate() {
                let q = &four[slot];
                idx.push(q.neighbor);
                rel.push(q.rel);
                cell.push(q.cell);
                weights[i][slot] = q.weight;
            }
        }
        let features = g.gather_rows(unfolded, idx)?;
        let decoded = gm.decode_rows(&mut g, features, &rel, &cell)?;
        let pred = gm.blend(&mut g, decoded, &weights)?;
        let gt: Vec<T> =
            item.gt.iter().flat_map(|rgb| rgb.iter().map(|&v| T::from_f64(v))).collect();
        let gt_node = g.constant(Tensor::from_vec(&[n, 3], gt)?);
        let diff = g.sub(pred, gt_node)?;
        let l1 = g.abs(diff);
        item_losses.push(g.mean(l1)?);
    }
    let stacked = g.concat_last(&item_losses)?;
    let loss_node = g.mean(stacked)?;
    let loss = g.data(loss_node).first().to_f64();
    if !loss.is_finite() {
        return Err(TrainError::NonFiniteLoss(loss));
    }
    g.backward(loss_node)?;

    let ids = gm.param_ids();
    let mut i = 0;
    let mut failed = None;
    params.visit_mut(|name, t| {
        if failed.is_none() {
            if let Err(e) = opt[i].step(hp, &name, t.data_mut(), g.grad(ids[i]).data()) {
                failed = Some(e);
            }
        }
        i += 1;
    });
    if let Some(e) = failed {
        return Err(e.into());
    }
    Ok(loss)
}

// ── the training loop ────────────────────────────────────────────────

/// Learning rate in effect during `epoch` (1-based): the base rate halved
/// once per configured boundary at or before the epoch.
pub fn lr_at(lr0: f64, halve_epochs: &[usize], epoch: usize) -> f64 {
    let halvings = halve_epochs.iter().filter(|&&h| h <= epoch).count();
    lr0 * 0.5f64.powi(halvings as i32)
}

/// One line of the training log.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: usize,
    pub mean_loss: f64,
    pub lr: f64,
}

/// Loads every PNG in `dir`, sorted by file name for determinism.
pub fn load_dataset(dir: &Path) -> Result<Vec<Image>, TrainError> {
    Ok(load_dataset_entries(dir)?.into_iter().map(|(_, img)| img).collect())
}

/// Like [`load_dataset`] but keeps the file stems for per-image reporting.
pub fn load_dataset_entries(dir: &Path) -> Result<Vec<(String, Image)>, TrainError> {
    let entries = std::fs::read_dir(dir)
        .map_err(|e| TrainError::Io { path: dir.display().to_string(), source: e })?;
    let mut paths: Vec<PathBuf> = entries
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| {
            p.extension().and_then(|x| x.to_str()).is_some_and(|x| x.eq_ignore_ascii_case("png"))
        })
        .collect();
    paths.sort();
    if paths.is_empty() {
        return Err(TrainError::EmptyDataset(dir.display().to_string()));
    }
    paths
        .iter()
        .map(|p| {
            let name =
                p.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
            Ok((name, load_png(p)?))
        })
        .collect()
}

/// Runs the full schedule and writes the checkpoint (and, when requested, a
/// JSON-lines training log with one `{"epoch", "mean_loss", "lr"}` record
/// per epoch). The checkpoint is written atomically at the end; with zero
/// epochs it equals the initialization.
pub fn train(
    cfg: &TrainConfig,
    ckpt_path: &Path,
    log_path: Option<&Path>,
    mut on_epoch: impl FnMut(&EpochLog),
) -> Result<Vec<EpochLog>, TrainError> {
    cfg.validate()?;
    let dataset = Arc::new(load_dataset(&cfg.dataset_dir)?);
    match cfg.precision {
        Precision::Single => train_typed::<f32>(cfg, dataset, ckpt_path, log_path, &mut on_epoch),
        Precision::Double => train_typed::<f64>(cfg, dataset, ckpt_path, log_path, &mut on_epoch),
    }
}

fn train_typed<T: Scalar>(
    cfg: &TrainConfig,
    dataset: Arc<Vec<Image>>,
    ckpt_path: &Path,
    log_path: Option<&Path>,
    on_epoch: &mut dyn FnMut(&EpochLog),
) -> Result<Vec<EpochLog>, TrainError> {
    let mut init_rng = rng_stream(cfg.seed, PURPOSE_INIT);
    let mut params: ModelParams<T> = ModelParams::init(&cfg.model, &mut init_rng);
    let mut opt = new_opt_state(&params);

    let total_steps = cfg.epochs * cfg.iters_per_epoch;
    let (tx, rx) = mpsc::sync_channel::<Result<Vec<BatchItem>, TrainError>>(2);
    let producer = {
        let cfg = cfg.clone();
        let dataset = Arc::clone(&dataset);
        std::thread::spawn(move || {
            let mut streams = SampleStreams::new(cfg.seed);
            for _ in 0..total_steps {
                let batch = sample_batch(&dataset, &cfg, &mut streams);
                let stop = batch.is_err();
                if tx.send(batch).is_err() || stop {
                    return;
                }
            }
        })
    };

    let run: Result<Vec<EpochLog>, TrainError> = (|| {
        let mut log_file = match log_path {
            Some(p) => Some(
                std::fs::File::create(p)
                    .map_err(|e| TrainError::Io { path: p.display().to_string(), source: e })?,
            ),
            None => None,
        };
        let mut logs = Vec::with_capacity(cfg.epochs);
        for epoch in 1..=cfg.epochs {
            let hp = AdamParams { lr: lr_at(cfg.lr, &cfg.lr_halve_epochs, epoch), ..Default::default() };
            let mut acc = 0.0;
            for _ in 0..cfg.iters_per_epoch {
                let batch = rx.recv().map_err(|_| TrainError::ProducerDied)??;
                acc += train_step(&mut params, &mut opt, &hp, &batch, &cfg.model)?;
            }
            let entry = EpochLog {
                epoch,
                mean_loss: acc / cfg.iters_per_epoch as f64,
                lr: hp.lr,
            };
            if let Some(f) = &mut log_file {
                use std::io::Write;
                writeln!(f, "{}", serde_json::to_string(&entry).expect("log serializes"))
                    .map_err(|e| TrainError::Io {
                        path: log_path.unwrap().display().to_string(),
                        source: e,
                    })?;
            }
            on_epoch(&entry);
            logs.push(entry);
        }
        Ok(logs)
    })();

    drop(rx);
    let _ = producer.join();
    let logs = run?;
    save_checkpoint(&params.cast::<f32>(), &cfg.model, ckpt_path)?;
    Ok(logs)
}
