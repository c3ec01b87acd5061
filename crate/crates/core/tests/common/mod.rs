//! Shared helpers for the integration suites: central finite differences,
//! per-op gradient checks, and the end-to-end render loss both the gradient
//! suite and the acceptance gate differentiate.

#![allow(dead_code)]

use ultrasr::imaging::Image;
use ultrasr::implicit::build_geometry;
use ultrasr::model::{GraphModel, ModelConfig, ModelParams};
use ultrasr::numerics::{Graph, NodeId, Tensor};
use ultrasr::training::BatchItem;

/// Tolerance every gradient comparison in the suite is pinned to.
pub const GRAD_TOL: f64 = 1e-4;
/// Central-difference step; with f64 arithmetic the truncation and
/// round-off errors balance near this size for O(1) values.
pub const FD_STEP: f64 = 1e-5;

/// `|a−b|` relative to the larger magnitude, floored so finite-difference
/// noise on near-zero gradients cannot blow up the ratio.
pub fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-6)
}

pub fn max_rel_err(analytic: &[f64], numeric: &[f64]) -> f64 {
    assert_eq!(analytic.len(), numeric.len());
    analytic.iter().zip(numeric).map(|(&a, &b)| rel_err(a, b)).fold(0.0, f64::max)
}

/// d/dx_i f ≈ (f(x+h·e_i) − f(x−h·e_i)) / 2h, for every coordinate.
pub fn central_fd(mut f: impl FnMut(&[f64]) -> f64, x: &[f64], h: f64) -> Vec<f64> {
    let mut probe = x.to_vec();
    (0..x.len())
        .map(|i| {
            let orig = probe[i];
            probe[i] = orig + h;
            let fp = f(&probe);
            probe[i] = orig - h;
            let fm = f(&probe);
            probe[i] = orig;
            (fp - fm) / (2.0 * h)
        })
        .collect()
}

/// Deterministic quasi-random fill in roughly [-1, 1], offset away from
/// zero so kinked ops (relu, abs) are never probed at their corner.
pub fn pattern(len: usize, phase: f64) -> Vec<f64> {
    (0..len)
        .map(|i| {
            let v = (i as f64 * 0.7310 + phase).sin();
            // Push values out of (-0.15, 0.15); h = 1e-5 never crosses 0.
            v + 0.15 * v.signum() + if v == 0.0 { 0.2 } else { 0.0 }
        })
        .collect()
}

/// FD-checks one op: builds `out = build(inputs)`, reduces it to a scalar
/// through a fixed non-uniform weighting (so upstream gradients are not
/// all equal), and compares every input's analytic gradient with central
/// differences.
pub fn check_op(
    name: &str,
    inputs: &[Tensor<f64>],
    build: impl Fn(&mut Graph<f64>, &[NodeId]) -> NodeId,
) {
    let assemble = |tensors: &[Tensor<f64>]| -> (Graph<f64>, Vec<NodeId>, NodeId) {
        let mut g: Graph<f64> = Graph::new();
        let leaves: Vec<NodeId> = tensors.iter().map(|t| g.leaf(t.clone())).collect();
        let out = build(&mut g, &leaves);
        let w = Tensor::from_vec(
            g.data(out).shape(),
            pattern(g.data(out).len(), 0.311).iter().map(|v| v + 2.0).collect(),
        )
        .expect("weight tensor matches op output");
        let wn = g.constant(w);
        let prod = g.mul(out, wn).expect("same-shape product");
        let loss = g.mean(prod).expect("non-empty mean");
        (g, leaves, loss)
    };

    let (mut g, leaves, loss) = assemble(inputs);
    g.backward(loss).unwrap_or_else(|e| panic!("{name}: backward failed: {e}"));
    let analytic: Vec<Vec<f64>> = leaves.iter().map(|&id| g.grad(id).data().to_vec()).collect();

    for (k, input) in inputs.iter().enumerate() {
        let f = |x: &[f64]| -> f64 {
            let mut probe: Vec<Tensor<f64>> = inputs.to_vec();
            probe[k] = Tensor::from_vec(input.shape(), x.to_vec()).expect("same shape");
            let (g, _, loss) = assemble(&probe);
            g.data(loss).first()
        };
        let fd = central_fd(f, input.data(), FD_STEP);
        let err = max_rel_err(&analytic[k], &fd);
        assert!(err < GRAD_TOL, "{name}: input {k} max rel err {err:.3e} >= {GRAD_TOL:.0e}");
    }
}

pub fn tensor(shape: &[usize], phase: f64) -> Tensor<f64> {
    let len = shape.iter().product();
    Tensor::from_vec(shape, pattern(len, phase)).expect("shape matches data")
}

// ── per-op checks, shared by the gradient suite and the acceptance gate ──

pub fn op_add() {
    check_op("add", &[tensor(&[2, 3], 0.1), tensor(&[2, 3], 0.9)], |g, l| {
        g.add(l[0], l[1]).unwrap()
    });
}

pub fn op_add_row_broadcast() {
    check_op("add (row broadcast)", &[tensor(&[4, 3], 0.2), tensor(&[3], 1.3)], |g, l| {
        g.add(l[0], l[1]).unwrap()
    });
}

pub fn op_mul() {
    check_op("mul", &[tensor(&[3, 2], 0.3), tensor(&[3, 2], 1.7)], |g, l| {
        g.mul(l[0], l[1]).unwrap()
    });
}

pub fn op_mul_row_broadcast() {
    check_op("mul (row broadcast)", &[tensor(&[4, 3], 0.4), tensor(&[3], 2.1)], |g, l| {
        g.mul(l[0], l[1]).unwrap()
    });
}

pub fn op_matmul() {
    check_op("matmul", &[tensor(&[3, 4], 0.5), tensor(&[4, 5], 2.3)], |g, l| {
        g.matmul(l[0], l[1]).unwrap()
    });
}

pub fn op_conv2d3x3() {
    let inputs =
        [tensor(&[2, 5, 6], 0.6), tensor(&[3, 2, 3, 3], 2.9), tensor(&[3], 3.1)];
    check_op("conv2d3x3", &inputs, |g, l| g.conv2d3x3(l[0], l[1], l[2]).unwrap());
}

pub fn op_relu() {
    check_op("relu", &[tensor(&[3, 4], 0.7)], |g, l| g.relu(l[0]));
}

pub fn op_sin() {
    check_op("sin", &[tensor(&[2, 5], 0.8)], |g, l| g.sin(l[0]));
}

pub fn op_cos() {
    check_op("cos", &[tensor(&[2, 5], 0.95)], |g, l| g.cos(l[0]));
}

pub fn op_abs() {
    check_op("abs", &[tensor(&[3, 3], 1.05)], |g, l| g.abs(l[0]));
}

pub fn op_concat_last() {
    check_op(
        "concat_last",
        &[tensor(&[2, 3], 1.15), tensor(&[2, 2], 3.3), tensor(&[2, 4], 3.7)],
        |g, l| g.concat_last(&[l[0], l[1], l[2]]).unwrap(),
    );
}

pub fn op_slice() {
    check_op("slice", &[tensor(&[3, 6], 1.25)], |g, l| g.slice(l[0], 1, 2, 3).unwrap());
    check_op("slice (axis 0)", &[tensor(&[5, 2], 1.3)], |g, l| {
        g.slice(l[0], 0, 1, 3).unwrap()
    });
}

pub fn op_mean() {
    check_op("mean", &[tensor(&[4, 3], 1.35)], |g, l| g.mean(l[0]).unwrap());
}

pub fn op_scalar_mul() {
    check_op("scalar_mul", &[tensor(&[2, 4], 1.45)], |g, l| g.scalar_mul(l[0], -0.37));
}

pub fn op_reshape() {
    check_op("reshape", &[tensor(&[2, 6], 1.55)], |g, l| {
        g.reshape(l[0], &[3, 4]).unwrap()
    });
}

pub fn op_sub() {
    check_op("sub", &[tensor(&[3, 3], 1.6), tensor(&[3, 3], 4.1)], |g, l| {
        g.sub(l[0], l[1]).unwrap()
    });
}

pub fn op_unfold3x3() {
    check_op("unfold3x3", &[tensor(&[2, 4, 5], 1.65)], |g, l| g.unfold3x3(l[0]).unwrap());
}

pub fn op_gather_rows() {
    // Repeated indices exercise gradient accumulation into one source row.
    let idx = vec![(0, 0), (2, 3), (1, 1), (2, 3), (3, 4), (0, 4)];
    check_op("gather_rows", &[tensor(&[3, 4, 5], 1.75)], move |g, l| {
        g.gather_rows(l[0], idx.clone()).unwrap()
    });
}

/// Every differentiable op, checked against central differences.
pub fn run_op_suite() {
    op_add();
    op_add_row_broadcast();
    op_mul();
    op_mul_row_broadcast();
    op_matmul();
    op_conv2d3x3();
    op_relu();
    op_sin();
    op_cos();
    op_abs();
    op_concat_last();
    op_slice();
    op_mean();
    op_scalar_mul();
    op_reshape();
    op_sub();
    op_unfold3x3();
    op_gather_rows();
}

// ── end-to-end render + L1 loss ──────────────────────────────────────

/// Smallest config that still exercises every architectural path:
/// residual skips, coordinate fusion, and the periodic encoding.
pub fn tiny_config() -> ModelConfig {
    ModelConfig {
        enc_channels: 4,
        enc_blocks: 1,
        hidden_width: 16,
        hidden_layers: 2,
        encoding_dim: 8,
        ..ModelConfig::default()
    }
}

/// Deterministic 8×8 item rendered at ×2 against a fixed 16×16 target.
pub fn tiny_item() -> BatchItem {
    let lr = pattern_image(8, 8, 0.37);
    let hr = pattern_image(16, 16, 1.91);
    let ys = ultrasr::implicit::coord_grid(16);
    let xs = ultrasr::implicit::coord_grid(16);
    let mut targets = Vec::with_capacity(256);
    let mut gt = Vec::with_capacity(256);
    for (yi, &ty) in ys.iter().enumerate() {
        for (xi, &tx) in xs.iter().enumerate() {
            targets.push((ty, tx));
            gt.push([hr.get(0, yi, xi), hr.get(1, yi, xi), hr.get(2, yi, xi)]);
        }
    }
    BatchItem { lr, scale: 2.0, hr_dims: (16, 16), targets, gt }
}

pub fn pattern_image(h: usize, w: usize, phase: f64) -> Image {
    let mut img = Image::new(h, w);
    for c in 0..3 {
        for y in 0..h {
            for x in 0..w {
                let v = ((c * h * w + y * w + x) as f64 * 0.831 + phase).sin() * 0.5 + 0.5;
                img.set(c, y, x, v);
            }
        }
    }
    img
}

/// Builds the same per-item graph the optimizer steps through — encode,
/// unfold, gather, decode, ensemble blend, L1 against ground truth — and
/// returns the loss node.
fn item_loss_graph(
    g: &mut Graph<f64>,
    params: &ModelParams<f64>,
    cfg: &ModelConfig,
    item: &BatchItem,
) -> (GraphModel, NodeId) {
    let gm = GraphModel::insert(g, params, cfg, true);
    let lr_node = g.constant(item.lr.to_tensor());
    let fm = gm.encode(g, lr_node).expect("encode");
    let unfolded = g.unfold3x3(fm).expect("unfold");
    let geom = build_geometry(item.lr.height(), item.lr.width(), &item.targets, item.hr_dims)
        .expect("geometry");
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
    let features = g.gather_rows(unfolded, idx).expect("gather");
    let decoded = gm.decode_rows(g, features, &rel, &cell).expect("decode");
    let pred = gm.blend(g, decoded, &weights).expect("blend");
    let gt: Vec<f64> = item.gt.iter().flat_map(|rgb| rgb.iter().copied()).collect();
    let gt_node = g.constant(Tensor::from_vec(&[n, 3], gt).expect("gt shape"));
    let diff = g.sub(pred, gt_node).expect("sub");
    let l1 = g.abs(diff);
    let loss = g.mean(l1).expect("mean");
    (gm, loss)
}

pub fn item_loss(params: &ModelParams<f64>, cfg: &ModelConfig, item: &BatchItem) -> f64 {
    let mut g: Graph<f64> = Graph::new();
    let (_, loss) = item_loss_graph(&mut g, params, cfg, item);
    g.data(loss).first()
}

/// Loss plus its gradient w.r.t. every parameter, flattened in parameter
/// visit order.
pub fn item_loss_and_grads(
    params: &ModelParams<f64>,
    cfg: &ModelConfig,
    item: &BatchItem,
) -> (f64, Vec<f64>) {
    let mut g: Graph<f64> = Graph::new();
    let (gm, loss) = item_loss_graph(&mut g, params, cfg, item);
    let value = g.data(loss).first();
    g.backward(loss).expect("backward");
    let mut flat = Vec::new();
    for id in gm.param_ids() {
        flat.extend_from_slice(g.grad(id).data());
    }
    (value, flat)
}

/// The whole pipeline — encoder convs, unfolding, gathering, periodic
/// encoding, fused decoder, ensemble blend, L1 — differentiated at once:
/// every parameter's analytic gradient against central differences.
pub fn check_end_to_end_gradients() {
    use rand::SeedableRng;
    let cfg = tiny_config();
    let item = tiny_item();
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(41);
    let mut params: ModelParams<f64> = ModelParams::init(&cfg, &mut rng);

    let (loss, analytic) = item_loss_and_grads(&params, &cfg, &item);
    assert!(loss.is_finite() && loss > 0.0, "fresh model has positive finite loss");

    let x0 = flatten_params(&params);
    assert_eq!(x0.len(), cfg.param_count(), "flattening covers every parameter");
    let fd = central_fd(
        |x| {
            assign_params(&mut params, x);
            item_loss(&params, &cfg, &item)
        },
        &x0,
        FD_STEP,
    );
    let err = max_rel_err(&analytic, &fd);
    assert!(err < GRAD_TOL, "end-to-end max rel err {err:.3e} >= {GRAD_TOL:.0e}");
}

pub fn flatten_params(params: &ModelParams<f64>) -> Vec<f64> {
    let mut flat = Vec::new();
    params.visit(|_, t| flat.extend_from_slice(t.data()));
    flat
}

pub fn assign_params(params: &mut ModelParams<f64>, flat: &[f64]) {
    let mut at = 0;
    params.visit_mut(|_, t| {
        let n = t.len();
        t.data_mut().copy_from_slice(&flat[at..at + n]);
        at += n;
    });
    assert_eq!(at, flat.len(), "flat vector length matches parameter count");
}
