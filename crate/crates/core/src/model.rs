//! The trainable network: a compact residual convolutional encoder that
//! produces the LR feature map, and a residual MLP decoder that maps one
//! query bundle (feature vector, relative offset, periodic encoding, cell)
//! to an RGB value. Rendering evaluates the decoder at every target pixel
//! center and blends the four neighbor predictions with ensemble weights.
//!
//! Three architecture switches are first-class config, so their effect can
//! be measured: `use_residual` (decoder skip links), `use_fusion` (the
//! coordinate bundle re-enters every hidden layer), and `use_encoding`
//! (the periodic encoding with learnable frequencies).

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::imaging::{Image, ImagingError};
use crate::implicit::{
    build_geometry, coord_grid, EncodingParams, FreqInit, ImplicitError, QueryBundle,
};
use crate::numerics::{Graph, NodeId, NumericsError, Scalar, Tensor};

#[derive(Debug, thiserror::Error)]
pub enum ModelError {
    #[error(transparent)]
    Numerics(#[from] NumericsError),

    #[error(transparent)]
    Implicit(#[from] ImplicitError),

    #[error(transparent)]
    Imaging(#[from] ImagingError),

    #[error("invalid model config: {0}")]
    BadConfig(String),

    #[error("decoder layer {layer} expects input width {expected}, got {got}")]
    LayerWidth { layer: usize, expected: usize, got: usize },
}

/// Architecture hyperparameters. Equality of two configs means checkpoint
/// compatibility.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    pub enc_channels: usize,
    pub enc_blocks: usize,
    pub hidden_width: usize,
    pub hidden_layers: usize,
    pub encoding_dim: usize,
    /// S: periodic spatial encoding with learnable frequencies.
    pub use_encoding: bool,
    /// C: coordinate bundle concatenated onto every hidden layer's input.
    pub use_fusion: bool,
    /// R: skip connections every two decoder layers, added pre-activation.
    pub use_residual: bool,
    pub freq_init: FreqInit,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            enc_channels: 32,
            enc_blocks: 4,
            hidden_width: 256,
            hidden_layers: 4,
            encoding_dim: 48,
            use_encoding: true,
            use_fusion: true,
            use_residual: true,
            freq_init: FreqInit::Paper2EN,
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<(), ModelError> {
        if self.encoding_dim % 4 != 0 || self.encoding_dim == 0 {
            return Err(ModelError::BadConfig(format!(
                "encoding_dim {} not a positive multiple of 4",
                self.encoding_dim
            )));
        }
        for (name, v) in [
            ("enc_channels", self.enc_channels),
            ("enc_blocks", self.enc_blocks),
            ("hidden_width", self.hidden_width),
            ("hidden_layers", self.hidden_layers),
        ] {
            if v == 0 {
                return Err(ModelError::BadConfig(format!("{name} must be >= 1")));
            }
        }
        Ok(())
    }

    /// Width of the coordinate bundle fused into hidden layers when C is on:
    /// δx plus, with S, its encoding.
    pub fn fusion_width(&self) -> usize {
        if self.use_fusion {
            2 + if self.use_encoding { self.encoding_dim } else { 0 }
        } else {
            0
        }
    }

    /// Decoder layer-0 input width: unfolded feature, δx, φ(δx) if S, cell.
    pub fn decoder_input_width(&self) -> usize {
        9 * self.enc_channels + 2 + if self.use_encoding { self.encoding_dim } else { 0 } + 2
    }

    /// Input width of hidden layer `k` (1-based).
    fn hidden_input_width(&self) -> usize {
        self.hidden_width + self.fusion_width()
    }

    /// Number of learnable frequencies (encoding_dim / 4), zero when S off.
    pub fn freq_count(&self) -> usize {
        if self.use_encoding {
            self.encoding_dim / 4
        } else {
            0
        }
    }

    /// Closed-form trainable parameter count; kept in lockstep with
    /// [`ModelParams::count`] by test.
    pub fn param_count(&self) -> usize {
        let c = self.enc_channels;
        let encoder = (3 * c * 9 + c) + self.enc_blocks * 2 * (c * c * 9 + c);
        let w = self.hidden_width;
        let mut decoder = self.decoder_input_width() * w + w;
        decoder += self.hidden_layers * (self.hidden_input_width() * w + w);
        decoder += w * 3 + 3;
        encoder + decoder + self.freq_count()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Conv<T> {
    /// `[Cout, Cin, 3, 3]`
    pub w: Tensor<T>,
    /// `[Cout]`
    pub b: Tensor<T>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Linear<T> {
    /// `[In, Out]`; activations are row vectors.
    pub w: Tensor<T>,
    /// `[Out]`
    pub b: Tensor<T>,
}

/// All trainable tensors. Iteration order (via [`ModelParams::visit`]) is
/// fixed and shared by the optimizer and the checkpoint format.
#[derive(Clone, Debug, PartialEq)]
pub struct ModelParams<T> {
    pub head: Conv<T>,
    /// Residual blocks: (first conv, second conv).
    pub blocks: Vec<(Conv<T>, Conv<T>)>,
    /// Decoder: layer 0, hidden layers 1..=hidden_layers, output layer.
    pub layers: Vec<Linear<T>>,
    /// Encoding frequencies `[F]`; present exactly when S is on.
    pub freqs: Option<Tensor<T>>,
}

fn uniform_tensor<T: Scalar>(shape: &[usize], bound: f64, rng: &mut impl Rng) -> Tensor<T> {
    let len = shape.iter().product();
    let data = (0..len).map(|_| T::from_f64(rng.gen_range(-bound..bound))).collect();
    Tensor::from_vec(shape, data).expect("sized buffer")
}

fn init_conv<T: Scalar>(cout: usize, cin: usize, rng: &mut impl Rng) -> Conv<T> {
    let bound = 1.0 / ((cin * 9) as f64).sqrt();
    Conv { w: uniform_tensor(&[cout, cin, 3, 3], bound, rng), b: Tensor::zeros(&[cout]) }
}

fn init_linear<T: Scalar>(input: usize, output: usize, rng: &mut impl Rng) -> Linear<T> {
    let bound = 1.0 / (input as f64).sqrt();
    Linear { w: uniform_tensor(&[input, output], bound, rng), b: Tensor::zeros(&[output]) }
}

impl<T: Scalar> ModelParams<T> {
    /// Fresh parameters: weights uniform in ±1/sqrt(fan_in), biases zero,
    /// frequencies from the configured schedule. Draw order is fixed, so a
    /// given rng state always produces the same parameters.
    pub fn init(cfg: &ModelConfig, rng: &mut impl Rng) -> ModelParams<T> {
        let c = cfg.enc_channels;
        let head = init_conv(c, 3, rng);
        let blocks =
            (0..cfg.enc_blocks).map(|_| (init_conv(c, c, rng), init_conv(c, c, rng))).collect();
        let mut layers = vec![init_linear(cfg.decoder_input_width(), cfg.hidden_width, rng)];
        for _ in 0..cfg.hidden_layers {
            layers.push(init_linear(cfg.hidden_input_width(), cfg.hidden_width, rng));
        }
        layers.push(init_linear(cfg.hidden_width, 3, rng));
        let freqs = cfg.use_encoding.then(|| {
            let p = EncodingParams::init(cfg.freq_count(), cfg.freq_init);
            Tensor::from_vec(
                &[p.freqs().len()],
                p.freqs().iter().map(|&f| T::from_f64(f)).collect(),
            )
            .expect("freq vector")
        });
        ModelParams { head, blocks, layers, freqs }
    }

    /// Visits every tensor with its canonical name, in checkpoint order.
    pub fn visit(&self, mut f: impl FnMut(String, &Tensor<T>)) {
        f("encoder.head.w".into(), &self.head.w);
        f("encoder.head.b".into(), &self.head.b);
        for (i, (c1, c2)) in self.blocks.iter().enumerate() {
            f(format!("encoder.block{i}.conv1.w"), &c1.w);
            f(format!("encoder.block{i}.conv1.b"), &c1.b);
            f(format!("encoder.block{i}.conv2.w"), &c2.w);
            f(format!("encoder.block{i}.conv2.b"), &c2.b);
        }
        for (k, l) in self.layers.iter().enumerate() {
            let name = if k + 1 == self.layers.len() {
                "decoder.out".to_string()
            } else {
                format!("decoder.layer{k}")
            };
            f(format!("{name}.w"), &l.w);
            f(format!("{name}.b"), &l.b);
        }
        if let Some(fr) = &self.freqs {
            f("encoding.freqs".into(), fr);
        }
    }

    /// Mutable visit in the same order as [`ModelParams::visit`].
    pub fn visit_mut(&mut self, mut f: impl FnMut(String, &mut Tensor<T>)) {
        f("encoder.head.w".into(), &mut self.head.w);
        f("encoder.head.b".into(), &mut self.head.b);
        for (i, (c1, c2)) in self.blocks.iter_mut().enumerate() {
            f(format!("encoder.block{i}.conv1.w"), &mut c1.w);
            f(format!("encoder.block{i}.conv1.b"), &mut c1.b);
            f(format!("encoder.block{i}.conv2.w"), &mut c2.w);
            f(format!("encoder.block{i}.conv2.b"), &mut c2.b);
        }
        let n = self.layers.len();
        for (k, l) in self.layers.iter_mut().enumerate() {
            let name =
                if k + 1 == n { "decoder.out".to_string() } else { format!("decoder.layer{k}") };
            f(format!("{name}.w"), &mut l.w);
            f(format!("{name}.b"), &mut l.b);
        }
        if let Some(fr) = &mut self.freqs {
            f("encoding.freqs".into(), fr);
        }
    }

    /// Total number of scalar parameters.
    pub fn count(&self) -> usize {
        let mut n = 0;
        self.visit(|_, t| n += t.len());
        n
    }

    pub fn cast<U: Scalar>(&self) -> ModelParams<U> {
        ModelParams {
            head: Conv { w: self.head.w.cast(), b: self.head.b.cast() },
            blocks: self
                .blocks
                .iter()
                .map(|(a, b)| {
                    (Conv { w: a.w.cast(), b: a.b.cast() }, Conv { w: b.w.cast(), b: b.b.cast() })
                })
                .collect(),
            layers: self
                .layers
                .iter()
                .map(|l| Linear { w: l.w.cast(), b: l.b.cast() })
                .collect(),
            freqs: self.freqs.as_ref().map(|f| f.cast()),
        }
    }

    /// Frequencies as [`EncodingParams`] for the pure (non-graph) query
    /// path. `None` when S is off.
    pub fn encoding_params(&self) -> Option<Result<EncodingParams, ImplicitError>> {
        self.freqs
            .as_ref()
            .map(|f| EncodingParams::new(f.data().iter().map(|v| v.to_f64()).collect()))
    }
}

/// Parameter node ids inside one graph, mirroring [`ModelParams`].
pub struct GraphModel {
    cfg: ModelConfig,
    head: (NodeId, NodeId),
    blocks: Vec<((NodeId, NodeId), (NodeId, NodeId))>,
    layers: Vec<(NodeId, NodeId)>,
    freqs: Option<NodeId>,
}

impl GraphModel {
    /// Registers every parameter tensor in `g` — as leaves when gradients
    /// are wanted, as constants otherwise — in [`ModelParams::visit`] order.
    pub fn insert<T: Scalar>(
        g: &mut Graph<T>,
        params: &ModelParams<T>,
        cfg: &ModelConfig,
        trainable: bool,
    ) -> GraphModel {
        let put = |g: &mut Graph<T>, t: &Tensor<T>| {
            if trainable {
                g.leaf(t.clone())
            } else {
                g.constant(t.clone())
            }
        };
        let head = (put(g, &params.head.w), put(g, &params.head.b));
        let blocks = params
            .blocks
            .iter()
            .map(|(c1, c2)| {
                ((put(g, &c1.w), put(g, &c1.b)), (put(g, &c2.w), put(g, &c2.b)))
            })
            .collect();
        let layers =
            params.layers.iter().map(|l| (put(g, &l.w), put(g, &l.b))).collect();
        let freqs = params.freqs.as_ref().map(|f| put(g, f));
        GraphModel { cfg: *cfg, head, blocks, layers, freqs }
    }

    /// Leaf ids in the same order as [`ModelParams::visit`], for reading
    /// gradients back out after a backward pass.
    pub fn param_ids(&self) -> Vec<NodeId> {
        let mut ids = vec![self.head.0, self.head.1];
        for ((w1, b1), (w2, b2)) in &self.blocks {
            ids.extend([*w1, *b1, *w2, *b2]);
        }
        for (w, b) in &self.layers {
            ids.extend([*w, *b]);
        }
        if let Some(f) = self.freqs {
            ids.push(f);
        }
        ids
    }

    /// Encoder forward: head conv, then conv-relu-conv residual blocks.
    /// `lr` is a `[3,H,W]` node; the result is `[enc_channels,H,W]`.
    pub fn encode<T: Scalar>(
        &self,
        g: &mut Graph<T>,
        lr: NodeId,
    ) -> Result<NodeId, NumericsError> {
        let mut f = g.conv2d3x3(lr, self.head.0, self.head.1)?;
        for ((w1, b1), (w2, b2)) in &self.blocks {
            let t = g.conv2d3x3(f, *w1, *b1)?;
            let t = g.relu(t);
            let t = g.conv2d3x3(t, *w2, *b2)?;
            f = g.add(f, t)?;
        }
        Ok(f)
    }

    /// In-graph periodic encoding of `rel` offsets: `[M, encoding_dim]`,
    /// differentiable w.r.t. the frequency leaf. Layout matches
    /// [`crate::implicit::spatial_encoding`]: axis-major, frequency-minor,
    /// sin before cos.
    fn encoding_rows<T: Scalar>(
        &self,
        g: &mut Graph<T>,
        rel: &[(f64, f64)],
    ) -> Result<NodeId, NumericsError> {
        let freqs = self.freqs.expect("encoding enabled");
        let f = self.cfg.freq_count();
        let m = rel.len();
        // Offsets repeated per frequency: row = [dy; F] ++ [dx; F], so a
        // broadcast multiply by [freqs ++ freqs] forms every argument.
        let mut dm = Vec::with_capacity(m * 2 * f);
        for &(dy, dx) in rel {
            dm.extend(std::iter::repeat(T::from_f64(dy)).take(f));
            dm.extend(std::iter::repeat(T::from_f64(dx)).take(f));
        }
        let dmat = g.constant(Tensor::from_vec(&[m, 2 * f], dm)?);
        let ff = g.concat_last(&[freqs, freqs])?;
        let args = g.mul(dmat, ff)?;
        let sins = g.sin(args);
        let coss = g.cos(args);
        let sins = g.reshape(sins, &[m, 2 * f, 1])?;
        let coss = g.reshape(coss, &[m, 2 * f, 1])?;
        let pairs = g.concat_last(&[sins, coss])?;
        g.reshape(pairs, &[m, 4 * f])
    }

    /// Decoder forward on a batch of rows. `features` is `[M, 9C]`; `rel`
    /// and `cell` supply the per-row offset and cell extents. Returns
    /// unclamped RGB rows `[M, 3]`.
    pub fn decode_rows<T: Scalar>(
        &self,
        g: &mut Graph<T>,
        features: NodeId,
        rel: &[(f64, f64)],
        cell: &[(f64, f64)],
    ) -> Result<NodeId, ModelError> {
        let cfg = &self.cfg;
        let m = rel.len();
        let fshape = g.data(features).shape().to_vec();
        if fshape != [m, 9 * cfg.enc_channels] {
            return Err(ModelError::LayerWidth {
                layer: 0,
                expected: 9 * cfg.enc_channels,
                got: *fshape.last().unwrap_or(&0),
            });
        }
        let pack = |vals: &[(f64, f64)]| {
            let mut out = Vec::with_capacity(vals.len() * 2);
            for &(a, b) in vals {
                out.push(T::from_f64(a));
                out.push(T::from_f64(b));
            }
            Tensor::from_vec(&[vals.len(), 2], out)
        };
        let rel_node = g.constant(pack(rel)?);
        let cell_node = g.constant(pack(cell)?);

        // The coordinate bundle is computed once and reused by every fused
        // layer; layer 0 additionally sees the feature vector and the cell.
        let coord_bundle = if cfg.use_encoding {
            let enc = self.encoding_rows(g, rel)?;
            g.concat_last(&[rel_node, enc])?
        } else {
            rel_node
        };
        let input0 = g.concat_last(&[features, coord_bundle, cell_node])?;

        let (w0, b0) = self.layers[0];
        let z0 = g.matmul(input0, w0)?;
        let z0 = g.add(z0, b0)?;
        let mut hidden = vec![g.relu(z0)];

        for k in 1..=cfg.hidden_layers {
            let h_prev = hidden[k - 1];
            let input = if cfg.use_fusion {
                g.concat_last(&[h_prev, coord_bundle])?
            } else {
                h_prev
            };
            let (w, b) = self.layers[k];
            let z = g.matmul(input, w)?;
            let mut z = g.add(z, b)?;
            // Skip every two layers, added before the activation:
            // the state entering layer k−1 joins layer k's pre-activation.
            if cfg.use_residual && k >= 2 && k % 2 == 0 {
                z = g.add(z, hidden[k - 2])?;
            }
            hidden.push(g.relu(z));
        }

        let (wf, bf) = self.layers[cfg.hidden_layers + 1];
        let z = g.matmul(hidden[cfg.hidden_layers], wf)?;
        Ok(g.add(z, bf)?)
    }

    /// Blends per-neighbor decoder outputs with ensemble weights: `decoded`
    /// is `[4N, 3]` with the four neighbor blocks stacked (all first
    /// neighbors, then all second, …); the result is `[N, 3]`.
    pub fn blend<T: Scalar>(
        &self,
        g: &mut Graph<T>,
        decoded: NodeId,
        weights: &[[f64; 4]],
    ) -> Result<NodeId, NumericsError> {
        let n = weights.len();
        let mut acc: Option<NodeId> = None;
        for slot in 0..4 {
            let block = g.slice(decoded, 0, slot * n, n)?;
            let w: Vec<T> = weights
                .iter()
                .flat_map(|ws| std::iter::repeat(T::from_f64(ws[slot])).take(3))
                .collect();
            let wnode = g.constant(Tensor::from_vec(&[n, 3], w)?);
            let weighted = g.mul(block, wnode)?;
            acc = Some(match acc {
                None => weighted,
                Some(a) => g.add(a, weighted)?,
            });
        }
        Ok(acc.expect("four slots"))
    }
}

/// Decodes a single query bundle to an unclamped RGB triple. The batched
/// render path shares all arithmetic with this entry point, and rows of a
/// batch are independent, so both give bit-identical values.
pub fn decode<T: Scalar>(
    bundle: &QueryBundle,
    params: &ModelParams<T>,
    cfg: &ModelConfig,
) -> Result<[f64; 3], ModelError> {
    cfg.validate()?;
    if bundle.feature.len() != 9 * cfg.enc_channels {
        return Err(ModelError::LayerWidth {
            layer: 0,
            expected: 9 * cfg.enc_channels,
            got: bundle.feature.len(),
        });
    }
    if cfg.use_encoding && bundle.encoding.len() != cfg.encoding_dim {
        return Err(ModelError::LayerWidth {
            layer: 0,
            expected: cfg.encoding_dim,
            got: bundle.encoding.len(),
        });
    }
    let mut g: Graph<T> = Graph::new();
    let gm = GraphModel::insert(&mut g, params, cfg, false);
    let fvals: Vec<T> = bundle.feature.iter().map(|&v| T::from_f64(v)).collect();
    let features = g.constant(Tensor::from_vec(&[1, bundle.feature.len()], fvals)?);
    let out = gm.decode_rows(&mut g, features, &[bundle.rel_coord], &[bundle.cell])?;
    let d = g.data(out).data();
    Ok([d[0].to_f64(), d[1].to_f64(), d[2].to_f64()])
}

/// Encoder forward pass on an image, without gradient bookkeeping.
pub fn encode<T: Scalar>(
    lr: &Image,
    params: &ModelParams<T>,
    cfg: &ModelConfig,
) -> Result<Tensor<T>, ModelError> {
    cfg.validate()?;
    let mut g: Graph<T> = Graph::new();
    let gm = GraphModel::insert(&mut g, params, cfg, false);
    let input = g.constant(lr.to_tensor());
    let fm = gm.encode(&mut g, input)?;
    Ok(g.data(fm).clone())
}

/// Query rows per decode batch during rendering; bounds graph memory while
/// leaving batches large enough for the matmul kernels to matter.
const RENDER_CHUNK: usize = 2048;

/// Renders `lr` at an arbitrary output size: encode once, then decode every
/// target pixel center against its four neighbors and blend. Deterministic
/// and pure; output values clamped to `[0,1]`.
pub fn render<T: Scalar>(
    lr: &Image,
    out_h: usize,
    out_w: usize,
    params: &ModelParams<T>,
    cfg: &ModelConfig,
) -> Result<Image, ModelError> {
    assert!(out_h >= 1 && out_w >= 1, "empty output");
    let fm = encode(lr, params, cfg)?;
    let unfolded = crate::implicit::unfold3x3(&fm)?;
    let (fh, fw) = (lr.height(), lr.width());

    let ys = coord_grid(out_h);
    let xs = coord_grid(out_w);
    let mut targets = Vec::with_capacity(out_h * out_w);
    for &ty in &ys {
        for &tx in &xs {
            targets.push((ty, tx));
        }
    }

    let mut out = vec![0.0f64; 3 * out_h * out_w];
    for (chunk_idx, chunk) in targets.chunks(RENDER_CHUNK).enumerate() {
        let geom = build_geometry(fh, fw, chunk, (out_h, out_w))?;
        let n = chunk.len();
        let mut g: Graph<T> = Graph::new();
        let gm = GraphModel::insert(&mut g, params, cfg, false);
        let fnode = g.constant(unfolded.clone());
        // Neighbor-major row layout: slot-0 rows for the whole chunk, then
        // slot 1, 2, 3 — matching what blend() slices apart.
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
        let features = g.gather_rows(fnode, idx)?;
        let decoded = gm.decode_rows(&mut g, features, &rel, &cell)?;
        let blended = gm.blend(&mut g, decoded, &weights)?;
        let rows = g.data(blended).data();
        let base = chunk_idx * RENDER_CHUNK;
        for i in 0..n {
            let (py, px) = ((base + i) / out_w, (base + i) % out_w);
            for c in 0..3 {
                out[(c * out_h + py) * out_w + px] = rows[i * 3 + c].to_f64();
            }
        }
    }
    let clamped: Vec<f64> = out.into_iter().map(|v| v.clamp(0.0, 1.0)).collect();
    Ok(Image::from_planar(out_h, out_w, clamped)?)
}
