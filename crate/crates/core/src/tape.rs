//! Reverse-mode automatic differentiation over [`Tensor`] values.
//!
//! A [`Tape`] records an eager forward computation as a topologically ordered
//! node list; [`Tape::backward`] walks it once in reverse, accumulating adjoints
//! for fan-out. Parameter nodes reference a [`ParamStore`] by index instead of
//! cloning the tensor, so a tape costs only the intermediate activations.
//!
//! Backward rules used below, for upstream adjoint `dy`:
//!
//! * matmul `C = A·B`: `dA = dy·Bᵀ`, `dB = Aᵀ·dy`
//! * softmax rows `s`: `dx = s ⊙ (dy − (dy·s))` with `dy·s` the row dot product
//! * layer norm `y = g ⊙ x̂ + b`, `x̂ = (x−μ)/√(σ²+ε)` (population variance):
//!   `dx = (g⊙dy − mean(g⊙dy) − x̂·mean(g⊙dy⊙x̂)) / √(σ²+ε)` per row,
//!   `dg = Σ_rows dy⊙x̂`, `db = Σ_rows dy`
//! * mse over `n` elements: `dpred = 2(pred−target)/n · dy`

use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;

use crate::error::NumericsError;
use crate::params::ParamStore;
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct NodeId(usize);

#[derive(Debug)]
enum Op {
    Input,
    Param(usize),
    Add(NodeId, NodeId),
    AddRow { x: NodeId, row: NodeId },
    Matmul(NodeId, NodeId),
    Transpose(NodeId),
    Scale(NodeId, f64),
    Relu(NodeId),
    Sin(NodeId),
    Softmax(NodeId),
    LayerNorm { x: NodeId, gain: NodeId, bias: NodeId, eps: f64 },
    ConcatCols(Vec<NodeId>),
    SliceCols { x: NodeId, start: usize, width: usize },
    MeanRows(NodeId),
    Sum(NodeId),
    Mse { pred: NodeId, target: NodeId },
}

#[derive(Debug)]
enum Value {
    Owned(Tensor),
    Param(usize),
}

#[derive(Debug)]
struct Node {
    op: Op,
    value: Value,
}

pub struct Tape<'a> {
    store: &'a ParamStore,
    nodes: Vec<Node>,
}

impl<'a> Tape<'a> {
    pub fn new(store: &'a ParamStore) -> Self {
        Self { store, nodes: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, id: NodeId) -> &Tensor {
        match &self.nodes[id.0].value {
            Value::Owned(t) => t,
            Value::Param(i) => self.store.value_by_index(*i),
        }
    }

    fn push(&mut self, op: Op, value: Tensor) -> NodeId {
        self.nodes.push(Node { op, value: Value::Owned(value) });
        NodeId(self.nodes.len() - 1)
    }

    /// Constant leaf; receives no parameter gradient.
    pub fn input(&mut self, value: Tensor) -> NodeId {
        self.push(Op::Input, value)
    }

    pub fn param(&mut self, idx: usize) -> NodeId {
        assert!(idx < self.store.len(), "parameter index out of range");
        self.nodes.push(Node { op: Op::Param(idx), value: Value::Param(idx) });
        NodeId(self.nodes.len() - 1)
    }

    pub fn param_named(&mut self, name: &str) -> Result<NodeId, NumericsError> {
        Ok(self.param(self.store.index_of(name)?))
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> Result<NodeId, NumericsError> {
        let v = self.value(a).add(self.value(b))?;
        Ok(self.push(Op::Add(a, b), v))
    }

    pub fn add_row(&mut self, x: NodeId, row: NodeId) -> Result<NodeId, NumericsError> {
        let v = self.value(x).add_row(self.value(row))?;
        Ok(self.push(Op::AddRow { x, row }, v))
    }

    pub fn matmul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId, NumericsError> {
        if self.value(a).rank() != 2 || self.value(b).rank() != 2 {
            let off = if self.value(a).rank() != 2 { a } else { b };
            return Err(NumericsError::BadRank {
                op: "tape matmul",
                expected: 2,
                shape: self.value(off).shape().to_vec(),
            });
        }
        let v = self.value(a).matmul(self.value(b))?;
        Ok(self.push(Op::Matmul(a, b), v))
    }

    pub fn transpose(&mut self, x: NodeId) -> Result<NodeId, NumericsError> {
        let v = self.value(x).transpose()?;
        Ok(self.push(Op::Transpose(x), v))
    }

    pub fn scale(&mut self, x: NodeId, c: f64) -> NodeId {
        let v = self.value(x).scale(c);
        self.push(Op::Scale(x, c), v)
    }

    pub fn relu(&mut self, x: NodeId) -> NodeId {
        let v = self.value(x).relu();
        self.push(Op::Relu(x), v)
    }

    pub fn sin(&mut self, x: NodeId) -> NodeId {
        let v = self.value(x).sin();
        self.push(Op::Sin(x), v)
    }

    pub fn softmax(&mut self, x: NodeId) -> Result<NodeId, NumericsError> {
        let v = self.value(x).softmax()?;
        Ok(self.push(Op::Softmax(x), v))
    }

    pub fn layer_norm(
        &mut self,
        x: NodeId,
        gain: NodeId,
        bias: NodeId,
        eps: f64,
    ) -> Result<NodeId, NumericsError> {
        let v = self.value(x).layer_norm(self.value(gain), self.value(bias), eps)?;
        Ok(self.push(Op::LayerNorm { x, gain, bias, eps }, v))
    }

    pub fn concat_cols(&mut self, parts: &[NodeId]) -> Result<NodeId, NumericsError> {
        let tensors: Vec<&Tensor> = parts.iter().map(|&p| self.value(p)).collect();
        let v = Tensor::concat_cols(&tensors)?;
        Ok(self.push(Op::ConcatCols(parts.to_vec()), v))
    }

    pub fn slice_cols(
        &mut self,
        x: NodeId,
        start: usize,
        width: usize,
    ) -> Result<NodeId, NumericsError> {
        let v = self.value(x).slice_cols(start, width)?;
        Ok(self.push(Op::SliceCols { x, start, width }, v))
    }

    pub fn mean_rows(&mut self, x: NodeId) -> Result<NodeId, NumericsError> {
        let v = self.value(x).mean_rows()?;
        Ok(self.push(Op::MeanRows(x), v))
    }

    pub fn sum(&mut self, x: NodeId) -> NodeId {
        let v = Tensor::scalar(self.value(x).sum());
        self.push(Op::Sum(x), v)
    }

    /// Mean squared error over all elements; yields a scalar node.
    pub fn mse(&mut self, pred: NodeId, target: NodeId) -> Result<NodeId, NumericsError> {
        let p = self.value(pred);
        let t = self.value(target);
        let diff = p.sub(t)?;
        let n = diff.len() as f64;
        let v = diff.data().iter().map(|d| d * d).sum::<f64>() / n;
        Ok(self.push(Op::Mse { pred, target }, Tensor::scalar(v)))
    }

    /// Accumulate parameter adjoints of a scalar `root` node.
    pub fn backward(&self, root: NodeId) -> Result<Gradients, NumericsError> {
        let root_val = self.value(root);
        if root_val.len() != 1 {
            return Err(NumericsError::NotScalar(root_val.shape().to_vec()));
        }
        let mut grads: Vec<Option<Tensor>> = Vec::with_capacity(root.0 + 1);
        grads.resize_with(root.0 + 1, || None);
        let mut seed = Tensor::zeros(root_val.shape());
        seed.data_mut()[0] = 1.0;
        grads[root.0] = Some(seed);

        let mut by_param: Vec<Option<Tensor>> = Vec::with_capacity(self.store.len());
        by_param.resize_with(self.store.len(), || None);

        for i in (0..=root.0).rev() {
            let Some(gy) = grads[i].take() else { continue };
            match &self.nodes[i].op {
                Op::Input => {}
                Op::Param(p) => acc(&mut by_param[*p], gy),
                Op::Add(a, b) => {
                    acc(&mut grads[a.0], gy.clone());
                    acc(&mut grads[b.0], gy);
                }
                Op::AddRow { x, row } => {
                    let m = self.value(*x).shape()[0] as f64;
                    let drow = gy.mean_rows()?.scale(m);
                    acc(&mut grads[row.0], drow);
                    acc(&mut grads[x.0], gy);
                }
                Op::Matmul(a, b) => {
                    let at = self.value(*a).transpose()?;
                    let bt = self.value(*b).transpose()?;
                    acc(&mut grads[a.0], gy.matmul(&bt)?);
                    acc(&mut grads[b.0], at.matmul(&gy)?);
                }
                Op::Transpose(x) => acc(&mut grads[x.0], gy.transpose()?),
                Op::Scale(x, c) => acc(&mut grads[x.0], gy.scale(*c)),
                Op::Relu(x) => {
                    let mask = self.value(*x).map(|v| if v > 0.0 { 1.0 } else { 0.0 });
                    acc(&mut grads[x.0], gy.hadamard(&mask)?);
                }
                Op::Sin(x) => {
                    let cosx = self.value(*x).map(f64::cos);
                    acc(&mut grads[x.0], gy.hadamard(&cosx)?);
                }
                Op::Softmax(x) => {
                    let s = self.value(NodeId(i));
                    acc(&mut grads[x.0], softmax_backward(s, &gy));
                }
                Op::LayerNorm { x, gain, bias, eps } => {
                    let (dx, dgain, dbias) =
                        layer_norm_backward(self.value(*x), self.value(*gain), *eps, &gy);
                    acc(&mut grads[x.0], dx);
                    acc(&mut grads[gain.0], dgain);
                    acc(&mut grads[bias.0], dbias);
                }
                Op::ConcatCols(parts) => {
                    let mut off = 0;
                    for p in parts {
                        let w = self.value(*p).shape()[1];
                        acc(&mut grads[p.0], gy.slice_cols(off, w)?);
                        off += w;
                    }
                }
                Op::SliceCols { x, start, width } => {
                    let shape = self.value(*x).shape();
                    let (rows, cols) = (shape[0], shape[1]);
                    let mut dx = Tensor::zeros(shape);
                    let src = gy.data();
                    let dst = dx.data_mut();
                    for r in 0..rows {
                        dst[r * cols + start..r * cols + start + width]
                            .copy_from_slice(&src[r * width..(r + 1) * width]);
                    }
                    acc(&mut grads[x.0], dx);
                }
                Op::MeanRows(x) => {
                    let shape = self.value(*x).shape();
                    let (rows, cols) = (shape[0], shape[1]);
                    let row = gy.scale(1.0 / rows as f64);
                    let mut dx = Tensor::zeros(shape);
                    for r in 0..rows {
                        dx.data_mut()[r * cols..(r + 1) * cols].copy_from_slice(row.data());
                    }
                    acc(&mut grads[x.0], dx);
                }
                Op::Sum(x) => {
                    let g = gy.data()[0];
                    let dx = Tensor::zeros(self.value(*x).shape()).map(|_| g);
                    acc(&mut grads[x.0], dx);
                }
                Op::Mse { pred, target } => {
                    let p = self.value(*pred);
                    let t = self.value(*target);
                    let c = 2.0 * gy.data()[0] / p.len() as f64;
                    let diff = p.sub(t)?;
                    acc(&mut grads[pred.0], diff.scale(c));
                    acc(&mut grads[target.0], diff.scale(-c));
                }
            }
        }
        Ok(Gradients { by_param })
    }
}

fn acc(slot: &mut Option<Tensor>, add: Tensor) {
    match slot {
        Some(t) => {
            debug_assert_eq!(t.shape(), add.shape());
            for (d, s) in t.data_mut().iter_mut().zip(add.data()) {
                *d += s;
            }
        }
        None => *slot = Some(add),
    }
}

fn softmax_backward(s: &Tensor, gy: &Tensor) -> Tensor {
    let cols = *s.shape().last().expect("softmax output has a last axis");
    let mut dx = Tensor::zeros(s.shape());
    let (sv, gv, dv) = (s.data(), gy.data(), dx.data_mut());
    for r in 0..sv.len() / cols {
        let base = r * cols;
        let dot: f64 = (0..cols).map(|j| gv[base + j] * sv[base + j]).sum();
        for j in 0..cols {
            dv[base + j] = sv[base + j] * (gv[base + j] - dot);
        }
    }
    dx
}

fn layer_norm_backward(x: &Tensor, gain: &Tensor, eps: f64, gy: &Tensor) -> (Tensor, Tensor, Tensor) {
    let cols = *x.shape().last().expect("layer norm input has a last axis");
    let rows = x.len() / cols;
    let n = cols as f64;
    let mut dx = Tensor::zeros(x.shape());
    let mut dgain = Tensor::zeros(gain.shape());
    let mut dbias = Tensor::zeros(gain.shape());
    let (xv, gv, yv) = (x.data(), gain.data(), gy.data());
    for r in 0..rows {
        let row = &xv[r * cols..(r + 1) * cols];
        let mu = row.iter().sum::<f64>() / n;
        let var = row.iter().map(|v| (v - mu) * (v - mu)).sum::<f64>() / n;
        let inv = 1.0 / (var + eps).sqrt();
        let gyr = &yv[r * cols..(r + 1) * cols];
        let mut m1 = 0.0;
        let mut m2 = 0.0;
        for j in 0..cols {
            let xhat = (row[j] - mu) * inv;
            let dxhat = gyr[j] * gv[j];
            m1 += dxhat;
            m2 += dxhat * xhat;
            dgain.data_mut()[j] += gyr[j] * xhat;
            dbias.data_mut()[j] += gyr[j];
        }
        m1 /= n;
        m2 /= n;
        let dxr = &mut dx.data_mut()[r * cols..(r + 1) * cols];
        for j in 0..cols {
            let xhat = (row[j] - mu) * inv;
            dxr[j] = inv * (gyr[j] * gv[j] - m1 - xhat * m2);
        }
    }
    (dx, dgain, dbias)
}

/// Per-parameter adjoints, indexed like the originating [`ParamStore`].
#[derive(Debug)]
pub struct Gradients {
    by_param: Vec<Option<Tensor>>,
}

impl Gradients {
    pub fn get(&self, idx: usize) -> Option<&Tensor> {
        self.by_param.get(idx).and_then(|g| g.as_ref())
    }

    /// Flat gradient vector in store layout; untouched parameters read as zero.
    pub fn flatten(&self, store: &ParamStore) -> Vec<f64> {
        let mut out = Vec::with_capacity(store.param_count());
        for (idx, entry) in store.entries().iter().enumerate() {
            match &self.by_param[idx] {
                Some(g) => out.extend_from_slice(g.data()),
                None => out.extend(std::iter::repeat(0.0).take(entry.value.len())),
            }
        }
        out
    }

    /// Add this gradient into `out`, which uses the store's flat layout.
    pub fn add_into_flat(&self, store: &ParamStore, out: &mut [f64]) {
        let mut off = 0;
        for (idx, entry) in store.entries().iter().enumerate() {
            let n = entry.value.len();
            if let Some(g) = &self.by_param[idx] {
                for (d, s) in out[off..off + n].iter_mut().zip(g.data()) {
                    *d += s;
                }
            }
            off += n;
        }
    }
}

/// `|a − n| / max(|a|, |n|, 1e−8)`, the agreement measure used by
/// [`gradient_check`].
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-8)
}

#[derive(Debug, Clone)]
pub struct GradCheckReport {
    pub checked: usize,
    pub max_rel_err: f64,
    pub mean_rel_err: f64,
    /// Flat coordinate with the largest relative error.
    pub worst_coord: usize,
    pub worst_analytic: f64,
    pub worst_numeric: f64,
}

/// Compare an analytic gradient against central finite differences.
///
/// `loss_fn` must be a deterministic function of the parameters; this is
/// verified by evaluating it twice at the unperturbed point. Up to
/// `max_coords` coordinates are checked (all of them when the model is small
/// enough), drawn without replacement from a seeded generator. Parameters are
/// restored to their original values before returning.
pub fn gradient_check<L, G>(
    params: &mut ParamStore,
    mut loss_fn: L,
    mut grad_fn: G,
    step: f64,
    max_coords: usize,
    seed: u64,
) -> Result<GradCheckReport, NumericsError>
where
    L: FnMut(&ParamStore) -> Result<f64, NumericsError>,
    G: FnMut(&ParamStore) -> Result<Vec<f64>, NumericsError>,
{
    if !(step > 0.0) || !step.is_finite() {
        return Err(NumericsError::InvalidArgument(format!(
            "finite difference step must be positive and finite, got {step}"
        )));
    }
    if max_coords == 0 {
        return Err(NumericsError::InvalidArgument(
            "gradient check needs at least one coordinate".into(),
        ));
    }

    let l0 = loss_fn(params)?;
    let l0_again = loss_fn(params)?;
    if l0.to_bits() != l0_again.to_bits() {
        return Err(NumericsError::InvalidArgument(format!(
            "loss function is not deterministic: {l0} vs {l0_again} at the same point"
        )));
    }
    if !l0.is_finite() {
        return Err(NumericsError::NonFinite("loss at the unperturbed point".into()));
    }

    let analytic = grad_fn(params)?;
    let total = params.param_count();
    if analytic.len() != total {
        return Err(NumericsError::InvalidArgument(format!(
            "analytic gradient has {} coordinates, parameters have {}",
            analytic.len(),
            total
        )));
    }

    let base = params.flatten();
    let coords: Vec<usize> = if total <= max_coords {
        (0..total).collect()
    } else {
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        let mut picked = rand::seq::index::sample(&mut rng, total, max_coords).into_vec();
        picked.sort_unstable();
        picked
    };

    let mut working = base.clone();
    let mut max_rel = 0.0;
    let mut sum_rel = 0.0;
    let mut worst = (0usize, 0.0f64, 0.0f64);
    for &i in &coords {
        working[i] = base[i] + step;
        params.unflatten(&working)?;
        let lp = loss_fn(params)?;
        working[i] = base[i] - step;
        params.unflatten(&working)?;
        let lm = loss_fn(params)?;
        working[i] = base[i];
        if !lp.is_finite() || !lm.is_finite() {
            params.unflatten(&base)?;
            return Err(NumericsError::NonFinite(format!(
                "loss near coordinate {i} during finite differencing"
            )));
        }
        let numeric = (lp - lm) / (2.0 * step);
        let rel = relative_error(analytic[i], numeric);
        sum_rel += rel;
        if rel > max_rel {
            max_rel = rel;
            worst = (i, analytic[i], numeric);
        }
    }
    params.unflatten(&base)?;

    Ok(GradCheckReport {
        checked: coords.len(),
        max_rel_err: max_rel,
        mean_rel_err: sum_rel / coords.len() as f64,
        worst_coord: worst.0,
        worst_analytic: worst.1,
        worst_numeric: worst.2,
    })
}
