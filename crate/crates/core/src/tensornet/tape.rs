//! Reverse-mode differentiation over a per-batch tape of tensor operations.
//!
//! Each operation computes its value eagerly when recorded and knows how to
//! push adjoints back to its inputs. Parameters are referenced by id, not
//! copied onto the tape; `backward` returns one gradient slot per parameter.

use std::rc::Rc;

use crate::error::{Error, Result};

use super::mlp::{ParamId, ParamSet};
use super::tensor::Tensor;

pub const LAYER_NORM_EPS: f64 = 1e-5;

/// Handle to a value recorded on the tape.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ValueId(pub usize);

/// Directed arcs of a (possibly batched) graph: message `a` flows from node
/// `src[a]` to node `dst[a]`; `graph[a]` selects the per-graph shared edge
/// latent.
#[derive(Debug, Clone, PartialEq)]
pub struct ArcIndex {
    pub src: Vec<u32>,
    pub dst: Vec<u32>,
    pub graph: Vec<u32>,
}

impl ArcIndex {
    pub fn len(&self) -> usize {
        self.src.len()
    }

    pub fn is_empty(&self) -> bool {
        self.src.is_empty()
    }
}

/// Per-parameter gradient slots produced by `Tape::backward`.
#[derive(Debug, Clone)]
pub struct Gradients {
    slots: Vec<Option<Tensor>>,
}

impl Gradients {
    /// Assemble gradient slots directly (oracle tests and custom reductions).
    pub fn from_slots(slots: Vec<Option<Tensor>>) -> Self {
        Gradients { slots }
    }

    pub fn get(&self, id: ParamId) -> Option<&Tensor> {
        self.slots[id.index()].as_ref()
    }

    pub fn len(&self) -> usize {
        self.slots.len()
    }

    pub fn is_empty(&self) -> bool {
        self.slots.is_empty()
    }

    pub fn is_finite(&self) -> bool {
        self.slots
            .iter()
            .flatten()
            .all(|t| t.data().iter().all(|v| v.is_finite()))
    }

    /// Fixed-order accumulation of another gradient set, for deterministic
    /// reductions over batch shards.
    pub fn accumulate(&mut self, other: &Gradients) {
        assert_eq!(self.slots.len(), other.slots.len());
        for (a, b) in self.slots.iter_mut().zip(other.slots.iter()) {
            match (a.as_mut(), b) {
                (Some(x), Some(y)) => {
                    for (u, v) in x.data_mut().iter_mut().zip(y.data().iter()) {
                        *u += v;
                    }
                }
                (None, Some(y)) => *a = Some(y.clone()),
                _ => {}
            }
        }
    }

    pub fn scale(&mut self, k: f64) {
        for slot in self.slots.iter_mut().flatten() {
            for v in slot.data_mut() {
                *v *= k;
            }
        }
    }
}

enum Op {
    Leaf,
    Linear {
        x: ValueId,
        w: ParamId,
        b: ParamId,
    },
    Relu {
        x: ValueId,
    },
    LayerNorm {
        x: ValueId,
        gain: ParamId,
        bias: ParamId,
        mean: Vec<f64>,
        inv_std: Vec<f64>,
    },
    GatherRows {
        x: ValueId,
        idx: Rc<Vec<u32>>,
    },
    ConcatCols {
        parts: Vec<ValueId>,
    },
    MessagePreact {
        h: ValueId,
        c: ValueId,
        w: ParamId,
        b: ParamId,
        arcs: Rc<ArcIndex>,
    },
    ScatterAddRows {
        x: ValueId,
        idx: Rc<Vec<u32>>,
    },
    SegmentMeanRows {
        x: ValueId,
        seg: Rc<Vec<u32>>,
        counts: Vec<u32>,
    },
    Add {
        a: ValueId,
        b: ValueId,
    },
    Sub {
        a: ValueId,
        b: ValueId,
    },
    Scale {
        x: ValueId,
        k: f64,
    },
    SumAll {
        x: ValueId,
    },
    Mse {
        pred: ValueId,
        target: Tensor,
    },
}

struct Node {
    value: Tensor,
    op: Op,
}

/// Recorded computation over one batch. Build with the ops below, then call
/// `backward` on a scalar loss.
pub struct Tape<'p> {
    params: &'p ParamSet,
    nodes: Vec<Node>,
}

// y[r] += k * x[r] over contiguous rows; the workhorse of the backward pass.
#[inline]
fn axpy(y: &mut [f64], k: f64, x: &[f64]) {
    for (yi, xi) in y.iter_mut().zip(x.iter()) {
        *yi += k * xi;
    }
}

#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    let mut acc = 0.0;
    for (x, y) in a.iter().zip(b.iter()) {
        acc += x * y;
    }
    acc
}

impl<'p> Tape<'p> {
    pub fn new(params: &'p ParamSet) -> Self {
        Tape {
            params,
            nodes: Vec::new(),
        }
    }

    fn push(&mut self, value: Tensor, op: Op) -> ValueId {
        self.nodes.push(Node { value, op });
        ValueId(self.nodes.len() - 1)
    }

    pub fn value(&self, id: ValueId) -> &Tensor {
        &self.nodes[id.0].value
    }

    /// Record a constant input.
    pub fn leaf(&mut self, value: Tensor) -> ValueId {
        self.push(value, Op::Leaf)
    }

    /// y = x·Wᵀ + b with W of shape [out×in] and b of shape [1×out].
    pub fn linear(&mut self, x: ValueId, w: ParamId, b: ParamId) -> Result<ValueId> {
        let wt = self.params.get(w);
        let bt = self.params.get(b);
        let xt = &self.nodes[x.0].value;
        if xt.cols() != wt.cols() {
            return Err(Error::ShapeMismatch(format!(
                "linear: input {:?} vs weight {:?}",
                xt.shape(),
                wt.shape()
            )));
        }
        if bt.cols() != wt.rows() || bt.rows() != 1 {
            return Err(Error::ShapeMismatch(format!(
                "linear: bias {:?} vs weight {:?}",
                bt.shape(),
                wt.shape()
            )));
        }
        let (n, k, out) = (xt.rows(), xt.cols(), wt.rows());
        let mut y = Tensor::zeros(n, out);
        {
            let xd = xt.data();
            let wd = wt.data();
            let bd = bt.data();
            let yd = y.data_mut();
            for r in 0..n {
                let xr = &xd[r * k..(r + 1) * k];
                let yr = &mut yd[r * out..(r + 1) * out];
                for o in 0..out {
                    yr[o] = bd[o] + dot(xr, &wd[o * k..(o + 1) * k]);
                }
            }
        }
        Ok(self.push(y, Op::Linear { x, w, b }))
    }

    /// Elementwise max(x, 0). The subgradient at exactly 0 is 0.
    pub fn relu(&mut self, x: ValueId) -> ValueId {
        let xt = &self.nodes[x.0].value;
        let mut y = xt.clone();
        for v in y.data_mut() {
            if *v <= 0.0 {
                *v = 0.0;
            }
        }
        self.push(y, Op::Relu { x })
    }

    /// Per-row normalization over the last dimension:
    /// (x − mean)/sqrt(var + 1e-5)·gain + bias.
    pub fn layer_norm(&mut self, x: ValueId, gain: ParamId, bias: ParamId) -> Result<ValueId> {
        let xt = &self.nodes[x.0].value;
        let gt = self.params.get(gain);
        let bt = self.params.get(bias);
        let (n, d) = xt.shape();
        if gt.shape() != (1, d) || bt.shape() != (1, d) {
            return Err(Error::ShapeMismatch(format!(
                "layer_norm: input {:?} vs gain {:?} / bias {:?}",
                xt.shape(),
                gt.shape(),
                bt.shape()
            )));
        }
        let mut y = Tensor::zeros(n, d);
        let mut means = vec![0.0; n];
        let mut inv_stds = vec![0.0; n];
        {
            let xd = xt.data();
            let gd = gt.data();
            let bd = bt.data();
            let yd = y.data_mut();
            for r in 0..n {
                let xr = &xd[r * d..(r + 1) * d];
                let mean = xr.iter().sum::<f64>() / d as f64;
                let var = xr.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / d as f64;
                let inv_std = 1.0 / (var + LAYER_NORM_EPS).sqrt();
                means[r] = mean;
                inv_stds[r] = inv_std;
                let yr = &mut yd[r * d..(r + 1) * d];
                for j in 0..d {
                    yr[j] = (xr[j] - mean) * inv_std * gd[j] + bd[j];
                }
            }
        }
        Ok(self.push(
            y,
            Op::LayerNorm {
                x,
                gain,
                bias,
                mean: means,
                inv_std: inv_stds,
            },
        ))
    }

    /// y[i] = x[idx[i]].
    pub fn gather_rows(&mut self, x: ValueId, idx: Rc<Vec<u32>>) -> ValueId {
        let xt = &self.nodes[x.0].value;
        let d = xt.cols();
        let mut y = Tensor::zeros(idx.len(), d);
        {
            let xd = xt.data();
            let yd = y.data_mut();
            for (i, &r) in idx.iter().enumerate() {
                yd[i * d..(i + 1) * d].copy_from_slice(&xd[r as usize * d..(r as usize + 1) * d]);
            }
        }
        self.push(y, Op::GatherRows { x, idx })
    }

    pub fn concat_cols(&mut self, parts: &[ValueId]) -> Result<ValueId> {
        let n = self.nodes[parts[0].0].value.rows();
        let mut total = 0;
        for p in parts {
            let t = &self.nodes[p.0].value;
            if t.rows() != n {
                return Err(Error::ShapeMismatch(format!(
                    "concat_cols: {:?} vs {} rows",
                    t.shape(),
                    n
                )));
            }
            total += t.cols();
        }
        let mut y = Tensor::zeros(n, total);
        {
            let yd = y.data_mut();
            let mut off = 0;
            for p in parts {
                let t = &self.nodes[p.0].value;
                let d = t.cols();
                let td = t.data();
                for r in 0..n {
                    yd[r * total + off..r * total + off + d]
                        .copy_from_slice(&td[r * d..(r + 1) * d]);
                }
                off += d;
            }
        }
        Ok(self.push(
            y,
            Op::ConcatCols {
                parts: parts.to_vec(),
            },
        ))
    }

    /// Fused per-arc affine map: for arc a,
    /// y[a] = W·[h[dst[a]], h[src[a]], c[graph[a]]] + b,
    /// computed as three per-node/per-graph products so the per-node parts
    /// are evaluated once per node instead of once per arc.
    pub fn message_preact(
        &mut self,
        h: ValueId,
        c: ValueId,
        w: ParamId,
        b: ParamId,
        arcs: Rc<ArcIndex>,
    ) -> Result<ValueId> {
        let ht = &self.nodes[h.0].value;
        let ct = &self.nodes[c.0].value;
        let wt = self.params.get(w);
        let bt = self.params.get(b);
        let hid = ht.cols();
        let cd = ct.cols();
        if wt.cols() != 2 * hid + cd {
            return Err(Error::ShapeMismatch(format!(
                "message_preact: weight {:?} vs latent {} + context {}",
                wt.shape(),
                hid,
                cd
            )));
        }
        let out = wt.rows();
        if bt.shape() != (1, out) {
            return Err(Error::ShapeMismatch(format!(
                "message_preact: bias {:?} vs out {}",
                bt.shape(),
                out
            )));
        }
        let n = ht.rows();
        let g = ct.rows();
        let wd = wt.data();
        let wk = wt.cols();
        // Per-node partial products A = h·Wdᵀ, B = h·Wsᵀ and per-graph C = c·Wcᵀ.
        let mut a_part = vec![0.0; n * out];
        let mut b_part = vec![0.0; n * out];
        {
            let hd = ht.data();
            for r in 0..n {
                let hr = &hd[r * hid..(r + 1) * hid];
                let ar = &mut a_part[r * out..(r + 1) * out];
                for o in 0..out {
                    ar[o] = dot(hr, &wd[o * wk..o * wk + hid]);
                }
            }
            for r in 0..n {
                let hr = &hd[r * hid..(r + 1) * hid];
                let br = &mut b_part[r * out..(r + 1) * out];
                for o in 0..out {
                    br[o] = dot(hr, &wd[o * wk + hid..o * wk + 2 * hid]);
                }
            }
        }
        let mut c_part = vec![0.0; g * out];
        {
            let cdat = ct.data();
            for r in 0..g {
                let cr = &cdat[r * cd..(r + 1) * cd];
                let dst = &mut c_part[r * out..(r + 1) * out];
                for o in 0..out {
                    dst[o] = dot(cr, &wd[o * wk + 2 * hid..(o + 1) * wk]);
                }
            }
        }
        let m = arcs.len();
        let mut y = Tensor::zeros(m, out);
        {
            let bd = bt.data();
            let yd = y.data_mut();
            for a in 0..m {
                let yr = &mut yd[a * out..(a + 1) * out];
                let ar = &a_part[arcs.dst[a] as usize * out..(arcs.dst[a] as usize + 1) * out];
                let br = &b_part[arcs.src[a] as usize * out..(arcs.src[a] as usize + 1) * out];
                let cr = &c_part[arcs.graph[a] as usize * out..(arcs.graph[a] as usize + 1) * out];
                for o in 0..out {
                    yr[o] = ar[o] + br[o] + cr[o] + bd[o];
                }
            }
        }
        Ok(self.push(y, Op::MessagePreact { h, c, w, b, arcs }))
    }

    /// y[i] = Σ over arcs a with idx[a] = i of x[a]; rows with no incoming
    /// arcs are zero (the empty-sum convention).
    pub fn scatter_add_rows(&mut self, x: ValueId, idx: Rc<Vec<u32>>, out_rows: usize) -> ValueId {
        let xt = &self.nodes[x.0].value;
        let d = xt.cols();
        let mut y = Tensor::zeros(out_rows, d);
        {
            let xd = xt.data();
            let yd = y.data_mut();
            for (a, &i) in idx.iter().enumerate() {
                axpy(
                    &mut yd[i as usize * d..(i as usize + 1) * d],
                    1.0,
                    &xd[a * d..(a + 1) * d],
                );
            }
        }
        self.push(y, Op::ScatterAddRows { x, idx })
    }

    /// y[s] = mean over rows r with seg[r] = s of x[r].
    pub fn segment_mean_rows(&mut self, x: ValueId, seg: Rc<Vec<u32>>, n_seg: usize) -> ValueId {
        let xt = &self.nodes[x.0].value;
        let d = xt.cols();
        let mut counts = vec![0u32; n_seg];
        for &s in seg.iter() {
            counts[s as usize] += 1;
        }
        let mut y = Tensor::zeros(n_seg, d);
        {
            let xd = xt.data();
            let yd = y.data_mut();
            for (r, &s) in seg.iter().enumerate() {
                axpy(
                    &mut yd[s as usize * d..(s as usize + 1) * d],
                    1.0,
                    &xd[r * d..(r + 1) * d],
                );
            }
            for (s, &cnt) in counts.iter().enumerate() {
                if cnt > 0 {
                    let inv = 1.0 / cnt as f64;
                    for v in &mut yd[s * d..(s + 1) * d] {
                        *v *= inv;
                    }
                }
            }
        }
        self.push(y, Op::SegmentMeanRows { x, seg, counts })
    }

    pub fn add(&mut self, a: ValueId, b: ValueId) -> Result<ValueId> {
        let (at, bt) = (&self.nodes[a.0].value, &self.nodes[b.0].value);
        if at.shape() != bt.shape() {
            return Err(Error::ShapeMismatch(format!(
                "add: {:?} vs {:?}",
                at.shape(),
                bt.shape()
            )));
        }
        let mut y = at.clone();
        for (u, v) in y.data_mut().iter_mut().zip(bt.data().iter()) {
            *u += v;
        }
        Ok(self.push(y, Op::Add { a, b }))
    }

    pub fn sub(&mut self, a: ValueId, b: ValueId) -> Result<ValueId> {
        let (at, bt) = (&self.nodes[a.0].value, &self.nodes[b.0].value);
        if at.shape() != bt.shape() {
            return Err(Error::ShapeMismatch(format!(
                "sub: {:?} vs {:?}",
                at.shape(),
                bt.shape()
            )));
        }
        let mut y = at.clone();
        for (u, v) in y.data_mut().iter_mut().zip(bt.data().iter()) {
            *u -= v;
        }
        Ok(self.push(y, Op::Sub { a, b }))
    }

    pub fn scale(&mut self, x: ValueId, k: f64) -> ValueId {
        let mut y = self.nodes[x.0].value.clone();
        for v in y.data_mut() {
            *v *= k;
        }
        self.push(y, Op::Scale { x, k })
    }

    pub fn sum_all(&mut self, x: ValueId) -> ValueId {
        let s = self.nodes[x.0].value.data().iter().sum::<f64>();
        self.push(Tensor::row(&[s]), Op::SumAll { x })
    }

    /// Mean squared error against a constant target, over all entries.
    pub fn mse(&mut self, pred: ValueId, target: Tensor) -> Result<ValueId> {
        let pt = &self.nodes[pred.0].value;
        if pt.shape() != target.shape() {
            return Err(Error::ShapeMismatch(format!(
                "mse: prediction {:?} vs target {:?}",
                pt.shape(),
                target.shape()
            )));
        }
        let n = pt.len() as f64;
        let s = pt
            .data()
            .iter()
            .zip(target.data().iter())
            .map(|(p, t)| (p - t) * (p - t))
            .sum::<f64>()
            / n;
        Ok(self.push(Tensor::row(&[s]), Op::Mse { pred, target }))
    }

    /// Reverse-mode accumulation from a recorded scalar loss back to every
    /// parameter the tape touched.
    pub fn backward(&self, loss: ValueId) -> Result<Gradients> {
        let node = self
            .nodes
            .get(loss.0)
            .ok_or_else(|| Error::Domain("backward called without a recorded forward".into()))?;
        if node.value.len() != 1 {
            return Err(Error::Domain(format!(
                "loss must be scalar, got {:?}",
                node.value.shape()
            )));
        }
        let mut node_grads: Vec<Option<Vec<f64>>> = (0..self.nodes.len()).map(|_| None).collect();
        node_grads[loss.0] = Some(vec![1.0]);
        let mut pgrads: Vec<Option<Tensor>> = (0..self.params.len()).map(|_| None).collect();

        for i in (0..=loss.0).rev() {
            let Some(dy) = node_grads[i].take() else {
                continue;
            };
            let node = &self.nodes[i];
            match &node.op {
                Op::Leaf => {}
                Op::Linear { x, w, b } => {
                    let xt = &self.nodes[x.0].value;
                    let wt = self.params.get(*w);
                    let (n, k, out) = (xt.rows(), xt.cols(), wt.rows());
                    let dx = grad_buf(&mut node_grads, *x, n * k);
                    let wd = wt.data();
                    for r in 0..n {
                        let dyr = &dy[r * out..(r + 1) * out];
                        let dxr = &mut dx[r * k..(r + 1) * k];
                        for o in 0..out {
                            axpy(dxr, dyr[o], &wd[o * k..(o + 1) * k]);
                        }
                    }
                    let dw = param_buf(&mut pgrads, self.params, *w);
                    let xd = xt.data();
                    for r in 0..n {
                        let dyr = &dy[r * out..(r + 1) * out];
                        let xr = &xd[r * k..(r + 1) * k];
                        for o in 0..out {
                            axpy(&mut dw.data_mut()[o * k..(o + 1) * k], dyr[o], xr);
                        }
                    }
                    let db = param_buf(&mut pgrads, self.params, *b);
                    for r in 0..n {
                        axpy(db.data_mut(), 1.0, &dy[r * out..(r + 1) * out]);
                    }
                }
                Op::Relu { x } => {
                    let xt = &self.nodes[x.0].value;
                    let dx = grad_buf(&mut node_grads, *x, xt.len());
                    for (j, &v) in xt.data().iter().enumerate() {
                        if v > 0.0 {
                            dx[j] += dy[j];
                        }
                    }
                }
                Op::LayerNorm {
                    x,
                    gain,
                    bias,
                    mean,
                    inv_std,
                } => {
                    let xt = &self.nodes[x.0].value;
                    let (n, d) = xt.shape();
                    let gt = self.params.get(*gain);
                    let gd = gt.data().to_vec();
                    let xd = xt.data();
                    {
                        let dx = grad_buf(&mut node_grads, *x, n * d);
                        for r in 0..n {
                            let xr = &xd[r * d..(r + 1) * d];
                            let dyr = &dy[r * d..(r + 1) * d];
                            let istd = inv_std[r];
                            let mu = mean[r];
                            let mut m1 = 0.0;
                            let mut m2 = 0.0;
                            for j in 0..d {
                                let xhat = (xr[j] - mu) * istd;
                                let dxhat = dyr[j] * gd[j];
                                m1 += dxhat;
                                m2 += dxhat * xhat;
                            }
                            m1 /= d as f64;
                            m2 /= d as f64;
                            let dxr = &mut dx[r * d..(r + 1) * d];
                            for j in 0..d {
                                let xhat = (xr[j] - mu) * istd;
                                let dxhat = dyr[j] * gd[j];
                                dxr[j] += istd * (dxhat - m1 - xhat * m2);
                            }
                        }
                    }
                    let dg = param_buf(&mut pgrads, self.params, *gain);
                    for r in 0..n {
                        let xr = &xd[r * d..(r + 1) * d];
                        let dyr = &dy[r * d..(r + 1) * d];
                        let dgd = dg.data_mut();
                        for j in 0..d {
                            dgd[j] += dyr[j] * (xr[j] - mean[r]) * inv_std[r];
                        }
                    }
                    let db = param_buf(&mut pgrads, self.params, *bias);
                    for r in 0..n {
                        axpy(db.data_mut(), 1.0, &dy[r * d..(r + 1) * d]);
                    }
                }
                Op::GatherRows { x, idx } => {
                    let xt = &self.nodes[x.0].value;
                    let d = xt.cols();
                    let dx = grad_buf(&mut node_grads, *x, xt.len());
                    for (i, &r) in idx.iter().enumerate() {
                        axpy(
                            &mut dx[r as usize * d..(r as usize + 1) * d],
                            1.0,
                            &dy[i * d..(i + 1) * d],
                        );
                    }
                }
                Op::ConcatCols { parts } => {
                    let n = node.value.rows();
                    let total = node.value.cols();
                    let widths: Vec<usize> =
                        parts.iter().map(|p| self.nodes[p.0].value.cols()).collect();
                    let mut off = 0;
                    for (p, &d) in parts.iter().zip(widths.iter()) {
                        let dx = grad_buf(&mut node_grads, *p, n * d);
                        for r in 0..n {
                            axpy(
                                &mut dx[r * d..(r + 1) * d],
                                1.0,
                                &dy[r * total + off..r * total + off + d],
                            );
                        }
                        off += d;
                    }
                }
                Op::MessagePreact { h, c, w, b, arcs } => {
                    let ht = &self.nodes[h.0].value;
                    let ct = &self.nodes[c.0].value;
                    let wt = self.params.get(*w);
                    let hid = ht.cols();
                    let cd = ct.cols();
                    let out = wt.rows();
                    let wk = wt.cols();
                    let n = ht.rows();
                    let g = ct.rows();
                    let m = arcs.len();
                    // Adjoints of the per-node/per-graph partial products.
                    let mut da = vec![0.0; n * out];
                    let mut db_part = vec![0.0; n * out];
                    let mut dc_part = vec![0.0; g * out];
                    for a in 0..m {
                        let dyr = &dy[a * out..(a + 1) * out];
                        axpy(
                            &mut da[arcs.dst[a] as usize * out..(arcs.dst[a] as usize + 1) * out],
                            1.0,
                            dyr,
                        );
                        axpy(
                            &mut db_part
                                [arcs.src[a] as usize * out..(arcs.src[a] as usize + 1) * out],
                            1.0,
                            dyr,
                        );
                        axpy(
                            &mut dc_part
                                [arcs.graph[a] as usize * out..(arcs.graph[a] as usize + 1) * out],
                            1.0,
                            dyr,
                        );
                    }
                    let wd = wt.data();
                    {
                        let dh = grad_buf(&mut node_grads, *h, n * hid);
                        for r in 0..n {
                            let dar = &da[r * out..(r + 1) * out];
                            let dbr = &db_part[r * out..(r + 1) * out];
                            let dhr = &mut dh[r * hid..(r + 1) * hid];
                            for o in 0..out {
                                axpy(dhr, dar[o], &wd[o * wk..o * wk + hid]);
                                axpy(dhr, dbr[o], &wd[o * wk + hid..o * wk + 2 * hid]);
                            }
                        }
                    }
                    {
                        let dc = grad_buf(&mut node_grads, *c, g * cd);
                        for r in 0..g {
                            let dcr = &dc_part[r * out..(r + 1) * out];
                            let dcrow = &mut dc[r * cd..(r + 1) * cd];
                            for o in 0..out {
                                axpy(dcrow, dcr[o], &wd[o * wk + 2 * hid..(o + 1) * wk]);
                            }
                        }
                    }
                    let dw = param_buf(&mut pgrads, self.params, *w);
                    {
                        let hd = ht.data();
                        let dwd = dw.data_mut();
                        for r in 0..n {
                            let hr = &hd[r * hid..(r + 1) * hid];
                            let dar = &da[r * out..(r + 1) * out];
                            let dbr = &db_part[r * out..(r + 1) * out];
                            for o in 0..out {
                                axpy(&mut dwd[o * wk..o * wk + hid], dar[o], hr);
                                axpy(&mut dwd[o * wk + hid..o * wk + 2 * hid], dbr[o], hr);
                            }
                        }
                        let cdat = ct.data();
                        for r in 0..g {
                            let cr = &cdat[r * cd..(r + 1) * cd];
                            let dcr = &dc_part[r * out..(r + 1) * out];
                            for o in 0..out {
                                axpy(&mut dwd[o * wk + 2 * hid..(o + 1) * wk], dcr[o], cr);
                            }
                        }
                    }
                    let dbias = param_buf(&mut pgrads, self.params, *b);
                    for a in 0..m {
                        axpy(dbias.data_mut(), 1.0, &dy[a * out..(a + 1) * out]);
                    }
                }
                Op::ScatterAddRows { x, idx } => {
                    let xt = &self.nodes[x.0].value;
                    let d = xt.cols();
                    let dx = grad_buf(&mut node_grads, *x, xt.len());
                    for (a, &i) in idx.iter().enumerate() {
                        axpy(
                            &mut dx[a * d..(a + 1) * d],
                            1.0,
                            &dy[i as usize * d..(i as usize + 1) * d],
                        );
                    }
                }
                Op::SegmentMeanRows { x, seg, counts } => {
                    let xt = &self.nodes[x.0].value;
                    let d = xt.cols();
                    let dx = grad_buf(&mut node_grads, *x, xt.len());
                    for (r, &s) in seg.iter().enumerate() {
                        let inv = 1.0 / counts[s as usize] as f64;
                        axpy(
                            &mut dx[r * d..(r + 1) * d],
                            inv,
                            &dy[s as usize * d..(s as usize + 1) * d],
                        );
                    }
                }
                Op::Add { a, b } => {
                    let len = dy.len();
                    axpy(grad_buf(&mut node_grads, *a, len), 1.0, &dy);
                    axpy(grad_buf(&mut node_grads, *b, len), 1.0, &dy);
                }
                Op::Sub { a, b } => {
                    let len = dy.len();
                    axpy(grad_buf(&mut node_grads, *a, len), 1.0, &dy);
                    axpy(grad_buf(&mut node_grads, *b, len), -1.0, &dy);
                }
                Op::Scale { x, k } => {
                    let len = dy.len();
                    axpy(grad_buf(&mut node_grads, *x, len), *k, &dy);
                }
                Op::SumAll { x } => {
                    let xt = &self.nodes[x.0].value;
                    let dx = grad_buf(&mut node_grads, *x, xt.len());
                    for v in dx.iter_mut() {
                        *v += dy[0];
                    }
                }
                Op::Mse { pred, target } => {
                    let pt = &self.nodes[pred.0].value;
                    let n = pt.len() as f64;
                    let dx = grad_buf(&mut node_grads, *pred, pt.len());
                    for (j, (p, t)) in pt.data().iter().zip(target.data().iter()).enumerate() {
                        dx[j] += dy[0] * 2.0 * (p - t) / n;
                    }
                }
            }
        }
        Ok(Gradients { slots: pgrads })
    }
}

fn grad_buf(grads: &mut [Option<Vec<f64>>], id: ValueId, len: usize) -> &mut Vec<f64> {
    grads[id.0].get_or_insert_with(|| vec![0.0; len])
}

fn param_buf<'a>(
    pgrads: &'a mut [Option<Tensor>],
    params: &ParamSet,
    id: ParamId,
) -> &'a mut Tensor {
    pgrads[id.index()].get_or_insert_with(|| {
        let (r, c) = params.get(id).shape();
        Tensor::zeros(r, c)
    })
}
