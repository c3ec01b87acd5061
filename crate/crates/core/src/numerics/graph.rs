//! Reverse-mode differentiation over a append-only operation graph.
//!
//! Nodes are appended during the forward pass, so every parent index is
//! strictly smaller than its child's. Backward walks indices in reverse,
//! visiting each node exactly once and accumulating (adding) gradients,
//! which makes diamond-shaped graphs come out right by construction.
//! Graphs are rebuilt per training step; there is no persistent tape.

use rayon::prelude::*;

use super::scalar::Scalar;
use super::tensor::Tensor;
use super::NumericsError;

/// Handle to a node inside one [`Graph`]. Not valid across graphs.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct NodeId(pub(crate) usize);

/// Record of the operation that produced a node, for backward traversal.
#[derive(Clone, Debug)]
enum Op<T> {
    Leaf,
    Constant,
    /// `broadcast`: rhs is a vector matching lhs's last axis, repeated
    /// across all leading positions.
    Add { broadcast: bool },
    Mul { broadcast: bool },
    MatMul,
    Conv2d3x3,
    Relu,
    Sin,
    Cos,
    Abs,
    ConcatLast,
    Slice { axis: usize, start: usize },
    Mean,
    ScalarMul { factor: T },
    Reshape,
    Unfold3x3,
    GatherRows { idx: Vec<(usize, usize)> },
}

/// One value in the differentiation graph: forward data, accumulated
/// gradient (always the same shape as the data), and the producing op.
#[derive(Clone, Debug)]
pub struct DiffNode<T> {
    data: Tensor<T>,
    grad: Tensor<T>,
    op: Op<T>,
    parents: Vec<NodeId>,
}

/// Append-only operation graph over tensors of element type `T`.
pub struct Graph<T> {
    nodes: Vec<DiffNode<T>>,
}

fn shape_err(op: &'static str, detail: String) -> NumericsError {
    NumericsError::ShapeMismatch { op, detail }
}

impl<T: Scalar> Default for Graph<T> {
    fn default() -> Self {
        Self::new()
    }
}

impl<T: Scalar> Graph<T> {
    pub fn new() -> Self {
        Graph { nodes: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn data(&self, id: NodeId) -> &Tensor<T> {
        &self.nodes[id.0].data
    }

    pub fn grad(&self, id: NodeId) -> &Tensor<T> {
        &self.nodes[id.0].grad
    }

    fn push(&mut self, data: Tensor<T>, op: Op<T>, parents: Vec<NodeId>) -> NodeId {
        let grad = Tensor::zeros(data.shape());
        self.nodes.push(DiffNode { data, grad, op, parents });
        NodeId(self.nodes.len() - 1)
    }

    /// A trainable input; its gradient is read out after [`Graph::backward`].
    pub fn leaf(&mut self, data: Tensor<T>) -> NodeId {
        self.push(data, Op::Leaf, vec![])
    }

    /// A fixed input (image pixels, coordinates, targets).
    pub fn constant(&mut self, data: Tensor<T>) -> NodeId {
        self.push(data, Op::Constant, vec![])
    }

    // ── forward ops ──────────────────────────────────────────────────

    /// Elementwise sum. Also accepts rhs shaped `[last_dim(lhs)]`, repeated
    /// across every leading position (bias addition).
    pub fn add(&mut self, a: NodeId, b: NodeId) -> Result<NodeId, NumericsError> {
        let (sa, sb) = (self.data(a).shape(), self.data(b).shape());
        let broadcast = sa != sb;
        if broadcast && sb != [self.data(a).last_dim()] {
            return Err(shape_err("add", format!("lhs {:?} vs rhs {:?}", sa, sb)));
        }
        let mut out = self.data(a).clone();
        let bd = self.data(b).data();
        if broadcast {
            for row in out.data_mut().chunks_mut(bd.len()) {
                for (o, &v) in row.iter_mut().zip(bd) {
                    *o += v;
                }
            }
        } else {
            for (o, &v) in out.data_mut().iter_mut().zip(bd) {
                *o += v;
            }
        }
        Ok(self.push(out, Op::Add { broadcast }, vec![a, b]))
    }

    /// Elementwise product, with the same rhs broadcast rule as [`Graph::add`].
    pub fn mul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId, NumericsError> {
        let (sa, sb) = (self.data(a).shape(), self.data(b).shape());
        let broadcast = sa != sb;
        if broadcast && sb != [self.data(a).last_dim()] {
            return Err(shape_err("multiply", format!("lhs {:?} vs rhs {:?}", sa, sb)));
        }
        let mut out = self.data(a).clone();
        let bd = self.data(b).data();
        if broadcast {
            for row in out.data_mut().chunks_mut(bd.len()) {
                for (o, &v) in row.iter_mut().zip(bd) {
                    *o *= v;
                }
            }
        } else {
            for (o, &v) in out.data_mut().iter_mut().zip(bd) {
                *o *= v;
            }
        }
        Ok(self.push(out, Op::Mul { broadcast }, vec![a, b]))
    }

    /// `[M,K] x [K,N] -> [M,N]`.
    pub fn matmul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId, NumericsError> {
        let (sa, sb) = (self.data(a).shape(), self.data(b).shape());
        if sa.len() != 2 || sb.len() != 2 || sa[1] != sb[0] {
            return Err(shape_err("matmul", format!("lhs {:?} vs rhs {:?}", sa, sb)));
        }
        let (m, k, n) = (sa[0], sa[1], sb[1]);
        let out = kernels::matmul(self.data(a).data(), self.data(b).data(), m, k, n);
        let out = Tensor::from_vec(&[m, n], out)?;
        Ok(self.push(out, Op::MatMul, vec![a, b]))
    }

    /// 3x3 convolution, stride 1, zero padding: `[Cin,H,W]` with kernel
    /// `[Cout,Cin,3,3]` and bias `[Cout]` gives `[Cout,H,W]`.
    pub fn conv2d3x3(
        &mut self,
        input: NodeId,
        kernel: NodeId,
        bias: NodeId,
    ) -> Result<NodeId, NumericsError> {
        let (si, sk, sb) = (
            self.data(input).shape().to_vec(),
            self.data(kernel).shape().to_vec(),
            self.data(bias).shape().to_vec(),
        );
        if si.len() != 3 || sk.len() != 4 || sk[1] != si[0] || sk[2] != 3 || sk[3] != 3 {
            return Err(shape_err(
                "conv2d-3x3",
                format!("input {:?} vs kernel {:?}", si, sk),
            ));
        }
        if sb != [sk[0]] {
            return Err(shape_err("conv2d-3x3", format!("kernel {:?} vs bias {:?}", sk, sb)));
        }
        let (cin, h, w) = (si[0], si[1], si[2]);
        let cout = sk[0];
        let out = kernels::conv2d3x3(
            self.data(input).data(),
            self.data(kernel).data(),
            self.data(bias).data(),
            cin,
            cout,
            h,
            w,
        );
        let out = Tensor::from_vec(&[cout, h, w], out)?;
        Ok(self.push(out, Op::Conv2d3x3, vec![input, kernel, bias]))
    }

    pub fn relu(&mut self, a: NodeId) -> NodeId {
        let mut out = self.data(a).clone();
        out.data_mut().iter_mut().for_each(|v| *v = (*v).max(T::ZERO));
        self.push(out, Op::Relu, vec![a])
    }

    pub fn sin(&mut self, a: NodeId) -> NodeId {
        let mut out = self.data(a).clone();
        out.data_mut().iter_mut().for_each(|v| *v = v.sin());
        self.push(out, Op::Sin, vec![a])
    }

    pub fn cos(&mut self, a: NodeId) -> NodeId {
        let mut out = self.data(a).clone();
        out.data_mut().iter_mut().for_each(|v| *v = v.cos());
        self.push(out, Op::Cos, vec![a])
    }

    pub fn abs(&mut self, a: NodeId) -> NodeId {
        let mut out = self.data(a).clone();
        out.data_mut().iter_mut().for_each(|v| *v = v.abs());
        self.push(out, Op::Abs, vec![a])
    }

    /// Concatenate along the last axis. All inputs must share rank and every
    /// dimension except the last.
    pub fn concat_last(&mut self, parts: &[NodeId]) -> Result<NodeId, NumericsError> {
        if parts.is_empty() {
            return Err(shape_err("concat-last-axis", "no inputs".into()));
        }
        let lead = self.data(parts[0]).shape()[..self.data(parts[0]).shape().len() - 1].to_vec();
        for &p in parts {
            let s = self.data(p).shape();
            if s.len() != lead.len() + 1 || s[..s.len() - 1] != lead[..] {
                return Err(shape_err(
                    "concat-last-axis",
                    format!("incompatible shapes {:?} vs leading {:?}", s, lead),
                ));
            }
        }
        let rows: usize = lead.iter().product();
        let widths: Vec<usize> = parts.iter().map(|&p| self.data(p).last_dim()).collect();
        let total: usize = widths.iter().sum();
        let mut data = vec![T::ZERO; rows * total];
        let mut offset = 0;
        for (&p, &wd) in parts.iter().zip(&widths) {
            let src = self.data(p).data();
            for r in 0..rows {
                data[r * total + offset..r * total + offset + wd]
                    .copy_from_slice(&src[r * wd..(r + 1) * wd]);
            }
            offset += wd;
        }
        let mut shape = lead;
        shape.push(total);
        let out = Tensor::from_vec(&shape, data)?;
        Ok(self.push(out, Op::ConcatLast, parts.to_vec()))
    }

    /// Contiguous slice of `len` positions starting at `start` along `axis`.
    pub fn slice(
        &mut self,
        a: NodeId,
        axis: usize,
        start: usize,
        len: usize,
    ) -> Result<NodeId, NumericsError> {
        let shape = self.data(a).shape().to_vec();
        if axis >= shape.len() || len == 0 || start + len > shape[axis] {
            return Err(shape_err(
                "slice",
                format!("axis {} range {}..{} of {:?}", axis, start, start + len, shape),
            ));
        }
        let outer: usize = shape[..axis].iter().product();
        let inner: usize = shape[axis + 1..].iter().product();
        let src = self.data(a).data();
        let mut data = vec![T::ZERO; outer * len * inner];
        for o in 0..outer {
            let src_base = (o * shape[axis] + start) * inner;
            let dst_base = o * len * inner;
            data[dst_base..dst_base + len * inner]
                .copy_from_slice(&src[src_base..src_base + len * inner]);
        }
        let mut out_shape = shape.clone();
        out_shape[axis] = len;
        let out = Tensor::from_vec(&out_shape, data)?;
        Ok(self.push(out, Op::Slice { axis, start }, vec![a]))
    }

    /// Mean over all elements, as a `[1]` tensor.
    pub fn mean(&mut self, a: NodeId) -> Result<NodeId, NumericsError> {
        let n = self.data(a).len();
        if n == 0 {
            return Err(shape_err("mean", "empty tensor".into()));
        }
        let mut acc = T::ZERO;
        for &v in self.data(a).data() {
            acc += v;
        }
        let out = Tensor::scalar(acc / T::from_f64(n as f64));
        Ok(self.push(out, Op::Mean, vec![a]))
    }

    pub fn scalar_mul(&mut self, a: NodeId, factor: f64) -> NodeId {
        let factor = T::from_f64(factor);
        let mut out = self.data(a).clone();
        out.data_mut().iter_mut().for_each(|v| *v *= factor);
        self.push(out, Op::ScalarMul { factor }, vec![a])
    }

    pub fn reshape(&mut self, a: NodeId, shape: &[usize]) -> Result<NodeId, NumericsError> {
        let out = self.data(a).reshaped(shape)?;
        Ok(self.push(out, Op::Reshape, vec![a]))
    }

    /// `a - b`, composed from scalar-multiply and add.
    pub fn sub(&mut self, a: NodeId, b: NodeId) -> Result<NodeId, NumericsError> {
        let nb = self.scalar_mul(b, -1.0);
        self.add(a, nb)
    }

    /// Each spatial position becomes the concatenation of its 3x3
    /// neighborhood, zero-padded at borders: `[C,H,W] -> [9C,H,W]`.
    /// Output channel `(3*(dy+1) + (dx+1))*C + c` holds offset `(dy,dx)`.
    pub fn unfold3x3(&mut self, a: NodeId) -> Result<NodeId, NumericsError> {
        let shape = self.data(a).shape().to_vec();
        if shape.len() != 3 {
            return Err(shape_err("unfold3x3", format!("want [C,H,W], got {:?}", shape)));
        }
        let (c, h, w) = (shape[0], shape[1], shape[2]);
        let out = kernels::unfold3x3(self.data(a).data(), c, h, w);
        let out = Tensor::from_vec(&[9 * c, h, w], out)?;
        Ok(self.push(out, Op::Unfold3x3, vec![a]))
    }

    /// Row `n` of the output is the channel vector of `a` at spatial
    /// position `idx[n]`: `[K,H,W] -> [N,K]`.
    pub fn gather_rows(
        &mut self,
        a: NodeId,
        idx: Vec<(usize, usize)>,
    ) -> Result<NodeId, NumericsError> {
        let shape = self.data(a).shape().to_vec();
        if shape.len() != 3 {
            return Err(shape_err("gather-rows", format!("want [K,H,W], got {:?}", shape)));
        }
        let (k, h, w) = (shape[0], shape[1], shape[2]);
        if let Some(&(y, x)) = idx.iter().find(|&&(y, x)| y >= h || x >= w) {
            return Err(shape_err(
                "gather-rows",
                format!("index ({},{}) outside {}x{}", y, x, h, w),
            ));
        }
        let src = self.data(a).data();
        let n = idx.len();
        let plane = h * w;
        let mut data = vec![T::ZERO; n * k];
        for (row, &(y, x)) in idx.iter().enumerate() {
            let pos = y * w + x;
            for c in 0..k {
                data[row * k + c] = src[c * plane + pos];
            }
        }
        let out = Tensor::from_vec(&[n, k], data)?;
        Ok(self.push(out, Op::GatherRows { idx }, vec![a]))
    }

    // ── backward ─────────────────────────────────────────────────────

    /// Reverse sweep from a scalar root; afterwards every node's `grad`
    /// holds the partial derivative of the root w.r.t. that node.
    pub fn backward(&mut self, root: NodeId) -> Result<(), NumericsError> {
        if !self.data(root).is_scalar() {
            return Err(NumericsError::NonScalarRoot {
                shape: self.data(root).shape().to_vec(),
            });
        }
        self.nodes[root.0].grad.fill(T::ONE);
        let mut reached = vec![false; root.0 + 1];
        reached[root.0] = true;
        for i in (0..=root.0).rev() {
            if !reached[i] {
                continue;
            }
            for p in self.nodes[i].parents.clone() {
                reached[p.0] = true;
            }
            let contribs = self.parent_contribs(i);
            for (p, c) in contribs {
                self.nodes[p.0].grad.accumulate(&c);
            }
        }
        Ok(())
    }

    /// Gradient contributions of node `i` to each of its parents.
    fn parent_contribs(&self, i: usize) -> Vec<(NodeId, Tensor<T>)> {
        let node = &self.nodes[i];
        let up = node.grad.data();
        let parents = &node.parents;
        let pdata = |j: usize| self.nodes[parents[j].0].data.data();
        let pshape = |j: usize| self.nodes[parents[j].0].data.shape();
        let mk = |j: usize, v: Vec<T>| {
            (parents[j], Tensor::from_vec(pshape(j), v).expect("gradient shape"))
        };
        match &node.op {
            Op::Leaf | Op::Constant => vec![],
            Op::Add { broadcast } => {
                let da = up.to_vec();
                if *broadcast {
                    let bl = pshape(1)[0];
                    let mut db = vec![T::ZERO; bl];
                    for row in up.chunks(bl) {
                        for (d, &u) in db.iter_mut().zip(row) {
                            *d += u;
                        }
                    }
                    vec![mk(0, da), mk(1, db)]
                } else {
                    vec![mk(0, da), mk(1, up.to_vec())]
                }
            }
            Op::Mul { broadcast } => {
                let (a, b) = (pdata(0), pdata(1));
                if *broadcast {
                    let bl = pshape(1)[0];
                    let mut da = vec![T::ZERO; a.len()];
                    for (drow, urow) in da.chunks_mut(bl).zip(up.chunks(bl)) {
                        for ((d, &u), &bv) in drow.iter_mut().zip(urow).zip(b) {
                            *d = u * bv;
                        }
                    }
                    let mut db = vec![T::ZERO; bl];
                    for (urow, arow) in up.chunks(bl).zip(a.chunks(bl)) {
                        for ((d, &u), &av) in db.iter_mut().zip(urow).zip(arow) {
                            *d += u * av;
                        }
                    }
                    vec![mk(0, da), mk(1, db)]
                } else {
                    let da: Vec<T> = up.iter().zip(b).map(|(&u, &bv)| u * bv).collect();
                    let db: Vec<T> = up.iter().zip(a).map(|(&u, &av)| u * av).collect();
                    vec![mk(0, da), mk(1, db)]
                }
            }
            Op::MatMul => {
                let (sa, sb) = (pshape(0), pshape(1));
                let (m, k, n) = (sa[0], sa[1], sb[1]);
                let da = kernels::matmul_bt(up, pdata(1), m, n, k);
                let db = kernels::matmul_at(pdata(0), up, m, k, n);
                vec![mk(0, da), mk(1, db)]
            }
            Op::Conv2d3x3 => {
                let si = pshape(0);
                let (cin, h, w) = (si[0], si[1], si[2]);
                let cout = pshape(1)[0];
                let (dx, dk, db) =
                    kernels::conv2d3x3_backward(up, pdata(0), pdata(1), cin, cout, h, w);
                vec![mk(0, dx), mk(1, dk), mk(2, db)]
            }
            Op::Relu => {
                let a = pdata(0);
                let da: Vec<T> = up
                    .iter()
                    .zip(a)
                    .map(|(&u, &v)| if v > T::ZERO { u } else { T::ZERO })
                    .collect();
                vec![mk(0, da)]
            }
            Op::Sin => {
                let a = pdata(0);
                let da: Vec<T> = up.iter().zip(a).map(|(&u, &v)| u * v.cos()).collect();
                vec![mk(0, da)]
            }
            Op::Cos => {
                let a = pdata(0);
                let da: Vec<T> = up.iter().zip(a).map(|(&u, &v)| -(u * v.sin())).collect();
                vec![mk(0, da)]
            }
            Op::Abs => {
                let a = pdata(0);
                let da: Vec<T> = up
                    .iter()
                    .zip(a)
                    .map(|(&u, &v)| {
                        if v > T::ZERO {
                            u
                        } else if v < T::ZERO {
                            -u
                        } else {
                            T::ZERO
                        }
                    })
                    .collect();
                vec![mk(0, da)]
            }
            Op::ConcatLast => {
                let total = node.data.last_dim();
                let rows = node.data.len() / total;
                let mut out = Vec::with_capacity(parents.len());
                let mut offset = 0;
                for j in 0..parents.len() {
                    let wd = pshape(j)[pshape(j).len() - 1];
                    let mut d = vec![T::ZERO; rows * wd];
                    for r in 0..rows {
                        d[r * wd..(r + 1) * wd]
                            .copy_from_slice(&up[r * total + offset..r * total + offset + wd]);
                    }
                    out.push(mk(j, d));
                    offset += wd;
                }
                out
            }
            Op::Slice { axis, start } => {
                let pshp = pshape(0);
                let outer: usize = pshp[..*axis].iter().product();
                let inner: usize = pshp[*axis + 1..].iter().product();
                let len = node.data.shape()[*axis];
                let mut d = vec![T::ZERO; pshp.iter().product()];
                for o in 0..outer {
                    let dst = (o * pshp[*axis] + start) * inner;
                    let src = o * len * inner;
                    d[dst..dst + len * inner].copy_from_slice(&up[src..src + len * inner]);
                }
                vec![mk(0, d)]
            }
            Op::Mean => {
                let n = pdata(0).len();
                let g = up[0] / T::from_f64(n as f64);
                vec![mk(0, vec![g; n])]
            }
            Op::ScalarMul { factor } => {
                let f = *factor;
                vec![mk(0, up.iter().map(|&u| u * f).collect())]
            }
            Op::Reshape => vec![mk(0, up.to_vec())],
            Op::Unfold3x3 => {
                let si = pshape(0);
                let (c, h, w) = (si[0], si[1], si[2]);
                vec![mk(0, kernels::unfold3x3_backward(up, c, h, w))]
            }
            Op::GatherRows { idx } => {
                let si = pshape(0);
                let (k, _h, w) = (si[0], si[1], si[2]);
                let plane = si[1] * si[2];
                let mut d = vec![T::ZERO; si.iter().product()];
                for (row, &(y, x)) in idx.iter().enumerate() {
                    let pos = y * w + x;
                    for c in 0..k {
                        d[c * plane + pos] += up[row * k + c];
                    }
                }
                vec![mk(0, d)]
            }
        }
    }
}

/// Array kernels behind the graph ops. Deterministic: every output element
/// is produced by a fixed-order accumulation independent of thread count.
pub(crate) mod kernels {
    use super::*;

    /// Work threshold below which matmul stays on the calling thread.
    const PAR_FLOPS: usize = 1 << 17;

    #[inline]
    fn dot<T: Scalar>(a: &[T], b: &[T]) -> T {
        // Four fixed lanes so the reduction vectorizes without changing
        // results between runs.
        let mut acc = [T::ZERO; 4];
        let chunks = a.len() / 4;
        for i in 0..chunks {
            let j = i * 4;
            acc[0] += a[j] * b[j];
            acc[1] += a[j + 1] * b[j + 1];
            acc[2] += a[j + 2] * b[j + 2];
            acc[3] += a[j + 3] * b[j + 3];
        }
        let mut tail = T::ZERO;
        for j in chunks * 4..a.len() {
            tail += a[j] * b[j];
        }
        ((acc[0] + acc[1]) + (acc[2] + acc[3])) + tail
    }

    #[inline]
    fn axpy<T: Scalar>(alpha: T, x: &[T], y: &mut [T]) {
        for (o, &v) in y.iter_mut().zip(x) {
            *o += alpha * v;
        }
    }

    /// `C = A x B` with A `[m,k]`, B `[k,n]`.
    pub fn matmul<T: Scalar>(a: &[T], b: &[T], m: usize, k: usize, n: usize) -> Vec<T> {
        let mut out = vec![T::ZERO; m * n];
        let row = |i: usize, o: &mut [T]| {
            for kk in 0..k {
                axpy(a[i * k + kk], &b[kk * n..(kk + 1) * n], o);
            }
        };
        if m * k * n >= PAR_FLOPS {
            out.par_chunks_mut(n).enumerate().for_each(|(i, o)| row(i, o));
        } else {
            for (i, o) in out.chunks_mut(n).enumerate() {
                row(i, o);
            }
        }
        out
    }

    /// `C = A x B^T` with A `[m,n]`, B `[k,n]` -> `[m,k]`.
    pub fn matmul_bt<T: Scalar>(a: &[T], b: &[T], m: usize, n: usize, k: usize) -> Vec<T> {
        let mut out = vec![T::ZERO; m * k];
        let row = |i: usize, o: &mut [T]| {
            let arow = &a[i * n..(i + 1) * n];
            for (kk, ov) in o.iter_mut().enumerate() {
                *ov = dot(arow, &b[kk * n..(kk + 1) * n]);
            }
        };
        if m * k * n >= PAR_FLOPS {
            out.par_chunks_mut(k).enumerate().for_each(|(i, o)| row(i, o));
        } else {
            for (i, o) in out.chunks_mut(k).enumerate() {
                row(i, o);
            }
        }
        out
    }

    /// `C = A^T x B` with A `[m,k]`, B `[m,n]` -> `[k,n]`.
    pub fn matmul_at<T: Scalar>(a: &[T], b: &[T], m: usize, k: usize, n: usize) -> Vec<T> {
        let mut out = vec![T::ZERO; k * n];
        // Accumulation over m must stay ordered per output row, so rows of
        // the output are built by sweeping m in ascending order.
        if k * n * m >= PAR_FLOPS {
            out.par_chunks_mut(n).enumerate().for_each(|(kk, o)| {
                for i in 0..m {
                    axpy(a[i * k + kk], &b[i * n..(i + 1) * n], o);
                }
            });
        } else {
            for i in 0..m {
                for (kk, o) in out.chunks_mut(n).enumerate() {
                    axpy(a[i * k + kk], &b[i * n..(i + 1) * n], o);
                }
            }
        }
        out
    }

    /// Valid output column range for a 3x3 tap at horizontal offset `dx`
    /// (`0..3`, center 1) on a row of width `w`.
    #[inline]
    fn col_range(dx: usize, w: usize) -> (usize, usize) {
        match dx {
            0 => (1, w),
            1 => (0, w),
            _ => (0, w - 1),
        }
    }

    pub fn conv2d3x3<T: Scalar>(
        x: &[T],
        k: &[T],
        bias: &[T],
        cin: usize,
        cout: usize,
        h: usize,
        w: usize,
    ) -> Vec<T> {
        let plane = h * w;
        let mut out = vec![T::ZERO; cout * plane];
        let one = |co: usize, o: &mut [T]| {
            o.iter_mut().for_each(|v| *v = bias[co]);
            for ci in 0..cin {
                let xp = &x[ci * plane..(ci + 1) * plane];
                for dy in 0..3usize {
                    for dx in 0..3usize {
                        let wgt = k[((co * cin + ci) * 3 + dy) * 3 + dx];
                        let (x0, x1) = col_range(dx, w);
                        for y in 0..h {
                            let sy = (y + dy).wrapping_sub(1);
                            if sy >= h {
                                continue;
                            }
                            let orow = &mut o[y * w + x0..y * w + x1];
                            let srow = &xp[sy * w + x0 + dx - 1..sy * w + x1 + dx - 1];
                            axpy(wgt, srow, orow);
                        }
                    }
                }
            }
        };
        if cout * cin * plane * 9 >= PAR_FLOPS {
            out.par_chunks_mut(plane).enumerate().for_each(|(co, o)| one(co, o));
        } else {
            for (co, o) in out.chunks_mut(plane).enumerate() {
                one(co, o);
            }
        }
        out
    }

    /// Gradients w.r.t. (input, kernel, bias) of [`conv2d3x3`].
    #[allow(clippy::type_complexity)]
    pub fn conv2d3x3_backward<T: Scalar>(
        up: &[T],
        x: &[T],
        k: &[T],
        cin: usize,
        cout: usize,
        h: usize,
        w: usize,
    ) -> (Vec<T>, Vec<T>, Vec<T>) {
        let plane = h * w;
        let mut dx_ = vec![T::ZERO; cin * plane];
        let mut dk = vec![T::ZERO; cout * cin * 9];
        let mut db = vec![T::ZERO; cout];

        for co in 0..cout {
            let urow = &up[co * plane..(co + 1) * plane];
            let mut acc = T::ZERO;
            for &u in urow {
                acc += u;
            }
            db[co] = acc;
        }

        // dk[co,ci,dy,dx] = sum_{y,x} up[co,y,x] * x[ci, y+dy-1, x+dx-1]
        // dinput[ci, y+dy-1, x+dx-1] += k[co,ci,dy,dx] * up[co,y,x]
        for co in 0..cout {
            let upp = &up[co * plane..(co + 1) * plane];
            for ci in 0..cin {
                let xp = &x[ci * plane..(ci + 1) * plane];
                let dxp = &mut dx_[ci * plane..(ci + 1) * plane];
                for dy in 0..3usize {
                    for dxo in 0..3usize {
                        let wgt = k[((co * cin + ci) * 3 + dy) * 3 + dxo];
                        let (x0, x1) = col_range(dxo, w);
                        let mut kacc = T::ZERO;
                        for y in 0..h {
                            let sy = (y + dy).wrapping_sub(1);
                            if sy >= h {
                                continue;
                            }
                            let urow = &upp[y * w + x0..y * w + x1];
                            let s0 = sy * w + x0 + dxo - 1;
                            kacc += dot(urow, &xp[s0..s0 + (x1 - x0)]);
                            axpy(wgt, urow, &mut dxp[s0..s0 + (x1 - x0)]);
                        }
                        dk[((co * cin + ci) * 3 + dy) * 3 + dxo] = kacc;
                    }
                }
            }
        }
        (dx_, dk, db)
    }

    pub fn unfold3x3<T: Scalar>(x: &[T], c: usize, h: usize, w: usize) -> Vec<T> {
        let plane = h * w;
        let mut out = vec![T::ZERO; 9 * c * plane];
        for dy in 0..3usize {
            for dx in 0..3usize {
                let n = dy * 3 + dx;
                let (x0, x1) = col_range(dx, w);
                for ci in 0..c {
                    let src = &x[ci * plane..(ci + 1) * plane];
                    let dst = &mut out[(n * c + ci) * plane..(n * c + ci + 1) * plane];
                    for y in 0..h {
                        let sy = (y + dy).wrapping_sub(1);
                        if sy >= h {
                            continue;
                        }
                        dst[y * w + x0..y * w + x1]
                            .copy_from_slice(&src[sy * w + x0 + dx - 1..sy * w + x1 + dx - 1]);
                    }
                }
            }
        }
        out
    }

    pub fn unfold3x3_backward<T: Scalar>(up: &[T], c: usize, h: usize, w: usize) -> Vec<T> {
        let plane = h * w;
        let mut d = vec![T::ZERO; c * plane];
        for dy in 0..3usize {
            for dx in 0..3usize {
                let n = dy * 3 + dx;
                let (x0, x1) = col_range(dx, w);
                for ci in 0..c {
                    let src = &up[(n * c + ci) * plane..(n * c + ci + 1) * plane];
                    let dst = &mut d[ci * plane..(ci + 1) * plane];
                    for y in 0..h {
                        let sy = (y + dy).wrapping_sub(1);
                        if sy >= h {
                            continue;
                        }
                        let base = sy * w + x0 + dx - 1;
                        for (i, &u) in src[y * w + x0..y * w + x1].iter().enumerate() {
                            dst[base + i] += u;
                        }
                    }
                }
            }
        }
        d
    }
}
