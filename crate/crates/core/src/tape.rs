//! Tape-based reverse-mode automatic differentiation over dense tensors.
//!
//! Every primitive appends one node to the [`Tape`]; nodes are therefore in
//! topological order and the reverse pass is a single sweep from the loss
//! back to index 0. Inputs that do not require gradients (geometry, targets,
//! teacher outputs) are recorded as constants and never receive adjoints.

use alloc::format;
use alloc::sync::Arc;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Handle to a node on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug, Clone)]
enum Op {
    Leaf,
    MatMul(Var, Var),
    AddBias(Var, Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Scale(Var, f64),
    MulCol(Var, Var),
    Relu(Var),
    Silu(Var),
    Concat(Vec<Var>),
    Slice(Var, usize, usize),
    Sum(Var),
    Mean(Var),
    SumRows(Var),
    SumCols(Var),
    L1(Var, Var),
    L2(Var, Var),
    ScatterAdd(Var, Arc<[usize]>),
    Gather(Var, Arc<[usize]>),
}

#[derive(Debug)]
struct Node {
    value: Tensor,
    op: Op,
    requires_grad: bool,
}

/// Record of primitive applications for one forward pass.
#[derive(Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
    grads: Vec<Option<Vec<f64>>>,
    consumed: bool,
    macs: u64,
}

#[inline]
fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + libm::exp(-x))
}

impl Tape {
    pub fn new() -> Self {
        Tape::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Multiply-accumulate operations performed by `matmul` so far.
    pub fn mac_count(&self) -> u64 {
        self.macs
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    fn push(&mut self, value: Tensor, op: Op, requires_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
        });
        Var(self.nodes.len() - 1)
    }

    fn rg(&self, vars: &[Var]) -> bool {
        vars.iter().any(|v| self.nodes[v.0].requires_grad)
    }

    pub fn leaf(&mut self, value: Tensor, requires_grad: bool) -> Var {
        self.push(value, Op::Leaf, requires_grad)
    }

    pub fn param(&mut self, value: Tensor) -> Var {
        self.leaf(value, true)
    }

    pub fn constant(&mut self, value: Tensor) -> Var {
        self.leaf(value, false)
    }

    /// `a [n, k] @ b [k, m]`.
    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (av, bv) = (self.value(a), self.value(b));
        if bv.shape().len() != 2 || av.cols() != bv.shape()[0] {
            return Err(Error::shape(
                "matmul",
                format!("{:?} @ {:?}", av.shape(), bv.shape()),
            ));
        }
        let (n, k, m) = (av.rows(), av.cols(), bv.cols());
        let mut out = vec![0.0; n * m];
        let (ad, bd) = (av.data(), bv.data());
        for i in 0..n {
            let orow = &mut out[i * m..(i + 1) * m];
            for p in 0..k {
                let aip = ad[i * k + p];
                let brow = &bd[p * m..(p + 1) * m];
                for (o, &b) in orow.iter_mut().zip(brow) {
                    *o += aip * b;
                }
            }
        }
        self.macs += (n * k * m) as u64;
        let rg = self.rg(&[a, b]);
        Ok(self.push(Tensor::new(vec![n, m], out)?, Op::MatMul(a, b), rg))
    }

    /// Adds a bias vector of length `cols` to every row.
    pub fn add_bias(&mut self, a: Var, bias: Var) -> Result<Var> {
        let (av, bv) = (self.value(a), self.value(bias));
        if bv.len() != av.cols() {
            return Err(Error::shape(
                "add_bias",
                format!("{:?} + {:?}", av.shape(), bv.shape()),
            ));
        }
        let c = av.cols();
        let mut out = av.clone();
        for row in out.data_mut().chunks_mut(c) {
            for (o, b) in row.iter_mut().zip(bv.data()) {
                *o += b;
            }
        }
        let rg = self.rg(&[a, bias]);
        Ok(self.push(out, Op::AddBias(a, bias), rg))
    }

    fn zip_same(
        &mut self,
        a: Var,
        b: Var,
        name: &'static str,
        f: impl Fn(f64, f64) -> f64,
    ) -> Result<Tensor> {
        let (av, bv) = (self.value(a), self.value(b));
        if av.shape() != bv.shape() {
            return Err(Error::shape(
                name,
                format!("{:?} vs {:?}", av.shape(), bv.shape()),
            ));
        }
        let data = av
            .data()
            .iter()
            .zip(bv.data())
            .map(|(&x, &y)| f(x, y))
            .collect();
        Tensor::new(av.shape().to_vec(), data)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let out = self.zip_same(a, b, "add", |x, y| x + y)?;
        let rg = self.rg(&[a, b]);
        Ok(self.push(out, Op::Add(a, b), rg))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        let out = self.zip_same(a, b, "sub", |x, y| x - y)?;
        let rg = self.rg(&[a, b]);
        Ok(self.push(out, Op::Sub(a, b), rg))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        let out = self.zip_same(a, b, "mul", |x, y| x * y)?;
        let rg = self.rg(&[a, b]);
        Ok(self.push(out, Op::Mul(a, b), rg))
    }

    pub fn scale(&mut self, a: Var, c: f64) -> Var {
        let mut out = self.value(a).clone();
        out.data_mut().iter_mut().for_each(|x| *x *= c);
        let rg = self.rg(&[a]);
        self.push(out, Op::Scale(a, c), rg)
    }

    /// Multiplies row `i` of `a` by the scalar `col[i]`.
    pub fn mul_col(&mut self, a: Var, col: Var) -> Result<Var> {
        let (av, cv) = (self.value(a), self.value(col));
        if cv.len() != av.rows() {
            return Err(Error::shape(
                "mul_col",
                format!("{:?} * {:?}", av.shape(), cv.shape()),
            ));
        }
        let c = av.cols();
        let mut out = av.clone();
        for (row, s) in out.data_mut().chunks_mut(c).zip(cv.data()) {
            row.iter_mut().for_each(|x| *x *= s);
        }
        let rg = self.rg(&[a, col]);
        Ok(self.push(out, Op::MulCol(a, col), rg))
    }

    pub fn relu(&mut self, a: Var) -> Var {
        let mut out = self.value(a).clone();
        out.data_mut().iter_mut().for_each(|x| *x = x.max(0.0));
        let rg = self.rg(&[a]);
        self.push(out, Op::Relu(a), rg)
    }

    pub fn silu(&mut self, a: Var) -> Var {
        let mut out = self.value(a).clone();
        out.data_mut().iter_mut().for_each(|x| *x *= sigmoid(*x));
        let rg = self.rg(&[a]);
        self.push(out, Op::Silu(a), rg)
    }

    /// Concatenation along the last axis.
    pub fn concat(&mut self, parts: &[Var]) -> Result<Var> {
        let first = parts
            .first()
            .ok_or_else(|| Error::shape("concat", "no operands"))?;
        let rows = self.value(*first).rows();
        let mut widths = Vec::with_capacity(parts.len());
        for p in parts {
            let v = self.value(*p);
            if v.rows() != rows || v.shape().len() != 2 {
                return Err(Error::shape(
                    "concat",
                    format!("row mismatch at {:?}", v.shape()),
                ));
            }
            widths.push(v.cols());
        }
        let total: usize = widths.iter().sum();
        let mut out = Vec::with_capacity(rows * total);
        for r in 0..rows {
            for p in parts {
                out.extend_from_slice(self.value(*p).row(r));
            }
        }
        let rg = self.rg(parts);
        Ok(self.push(
            Tensor::new(vec![rows, total], out)?,
            Op::Concat(parts.to_vec()),
            rg,
        ))
    }

    /// Columns `[start, end)` along the last axis.
    pub fn slice(&mut self, a: Var, start: usize, end: usize) -> Result<Var> {
        let av = self.value(a);
        if start >= end || end > av.cols() || av.shape().is_empty() {
            return Err(Error::shape(
                "slice",
                format!("[{start}, {end}) of {:?}", av.shape()),
            ));
        }
        let out = av.slice_cols(start, end);
        let rg = self.rg(&[a]);
        Ok(self.push(out, Op::Slice(a, start, end), rg))
    }

    pub fn sum(&mut self, a: Var) -> Var {
        let s = self.value(a).data().iter().sum();
        let rg = self.rg(&[a]);
        self.push(Tensor::scalar(s), Op::Sum(a), rg)
    }

    pub fn mean(&mut self, a: Var) -> Var {
        let v = self.value(a);
        let s = v.data().iter().sum::<f64>() / v.len() as f64;
        let rg = self.rg(&[a]);
        self.push(Tensor::scalar(s), Op::Mean(a), rg)
    }

    /// Sum over rows: `[n, m] -> [m]`.
    pub fn sum_rows(&mut self, a: Var) -> Var {
        let v = self.value(a);
        let c = v.cols();
        let mut out = vec![0.0; c];
        for row in v.data().chunks(c) {
            out.iter_mut().zip(row).for_each(|(o, x)| *o += x);
        }
        let rg = self.rg(&[a]);
        self.push(Tensor::vector(out), Op::SumRows(a), rg)
    }

    /// Sum over the last axis: `[n, m] -> [n, 1]`.
    pub fn sum_cols(&mut self, a: Var) -> Var {
        let v = self.value(a);
        let out: Vec<f64> = v.data().chunks(v.cols()).map(|r| r.iter().sum()).collect();
        let n = out.len();
        let rg = self.rg(&[a]);
        self.push(
            Tensor::new(vec![n, 1], out).expect("sum_cols shape"),
            Op::SumCols(a),
            rg,
        )
    }

    /// Mean absolute difference.
    pub fn l1_loss(&mut self, a: Var, b: Var) -> Result<Var> {
        let d = self.zip_same(a, b, "l1_loss", |x, y| libm::fabs(x - y))?;
        let s = d.data().iter().sum::<f64>() / d.len() as f64;
        let rg = self.rg(&[a, b]);
        Ok(self.push(Tensor::scalar(s), Op::L1(a, b), rg))
    }

    /// Mean squared difference.
    pub fn l2_loss(&mut self, a: Var, b: Var) -> Result<Var> {
        let d = self.zip_same(a, b, "l2_loss", |x, y| (x - y) * (x - y))?;
        let s = d.data().iter().sum::<f64>() / d.len() as f64;
        let rg = self.rg(&[a, b]);
        Ok(self.push(Tensor::scalar(s), Op::L2(a, b), rg))
    }

    /// `out[index[k]] += src[k]`, accumulated in ascending `k`.
    pub fn scatter_add(&mut self, src: Var, index: Arc<[usize]>, n_out: usize) -> Result<Var> {
        let sv = self.value(src);
        if sv.rows() != index.len() {
            return Err(Error::shape(
                "scatter_add",
                format!("{} rows vs {} indices", sv.rows(), index.len()),
            ));
        }
        if let Some(&bad) = index.iter().find(|&&i| i >= n_out) {
            return Err(Error::shape(
                "scatter_add",
                format!("index {bad} >= {n_out}"),
            ));
        }
        let c = sv.cols();
        let mut out = vec![0.0; n_out * c];
        for (k, &i) in index.iter().enumerate() {
            let orow = &mut out[i * c..(i + 1) * c];
            orow.iter_mut().zip(sv.row(k)).for_each(|(o, x)| *o += x);
        }
        let rg = self.rg(&[src]);
        Ok(self.push(
            Tensor::new(vec![n_out, c], out)?,
            Op::ScatterAdd(src, index),
            rg,
        ))
    }

    /// `out[k] = src[index[k]]`.
    pub fn gather(&mut self, src: Var, index: Arc<[usize]>) -> Result<Var> {
        let sv = self.value(src);
        if let Some(&bad) = index.iter().find(|&&i| i >= sv.rows()) {
            return Err(Error::shape(
                "gather",
                format!("index {bad} >= {}", sv.rows()),
            ));
        }
        let out = sv.select_rows(&index);
        let rg = self.rg(&[src]);
        Ok(self.push(out, Op::Gather(src, index), rg))
    }

    /// Reverse pass seeded with d(loss)/d(loss) = 1.
    ///
    /// Afterwards [`Tape::grad`] returns the adjoint of every node that
    /// requires a gradient.
    pub fn backward(&mut self, loss: Var) -> Result<()> {
        if self.consumed {
            return Err(Error::TapeConsumed);
        }
        let lv = self.value(loss);
        if lv.len() != 1 {
            return Err(Error::NonScalarSeed(lv.len()));
        }
        self.consumed = true;
        let mut grads: Vec<Option<Vec<f64>>> = vec![None; self.nodes.len()];
        grads[loss.0] = Some(vec![1.0]);

        for idx in (0..=loss.0).rev() {
            let Some(g) = grads[idx].take() else { continue };
            if !self.nodes[idx].requires_grad {
                grads[idx] = Some(g);
                continue;
            }
            self.propagate(idx, &g, &mut grads);
            grads[idx] = Some(g);
        }
        self.grads = grads;
        Ok(())
    }

    fn propagate(&self, idx: usize, g: &[f64], grads: &mut [Option<Vec<f64>>]) {
        let nodes = &self.nodes;
        let accum = |grads: &mut [Option<Vec<f64>>], v: Var, f: &mut dyn FnMut(&mut [f64])| {
            if !nodes[v.0].requires_grad {
                return;
            }
            let slot = grads[v.0].get_or_insert_with(|| vec![0.0; nodes[v.0].value.len()]);
            f(slot);
        };
        match &nodes[idx].op {
            Op::Leaf => {}
            Op::MatMul(a, b) => {
                let (av, bv) = (&nodes[a.0].value, &nodes[b.0].value);
                let (n, k, m) = (av.rows(), av.cols(), bv.cols());
                accum(grads, *a, &mut |ga| {
                    // dA = dC @ B^T
                    let bd = bv.data();
                    for i in 0..n {
                        let grow = &g[i * m..(i + 1) * m];
                        for p in 0..k {
                            let brow = &bd[p * m..(p + 1) * m];
                            let mut s = 0.0;
                            for (x, y) in grow.iter().zip(brow) {
                                s += x * y;
                            }
                            ga[i * k + p] += s;
                        }
                    }
                });
                accum(grads, *b, &mut |gb| {
                    // dB = A^T @ dC
                    let ad = av.data();
                    for i in 0..n {
                        let grow = &g[i * m..(i + 1) * m];
                        for p in 0..k {
                            let aip = ad[i * k + p];
                            if aip == 0.0 {
                                continue;
                            }
                            let brow = &mut gb[p * m..(p + 1) * m];
                            for (o, x) in brow.iter_mut().zip(grow) {
                                *o += aip * x;
                            }
                        }
                    }
                });
            }
            Op::AddBias(a, bias) => {
                accum(grads, *a, &mut |ga| {
                    ga.iter_mut().zip(g).for_each(|(o, x)| *o += x)
                });
                let c = nodes[bias.0].value.len();
                accum(grads, *bias, &mut |gb| {
                    for row in g.chunks(c) {
                        gb.iter_mut().zip(row).for_each(|(o, x)| *o += x);
                    }
                });
            }
            Op::Add(a, b) => {
                accum(grads, *a, &mut |ga| {
                    ga.iter_mut().zip(g).for_each(|(o, x)| *o += x)
                });
                accum(grads, *b, &mut |gb| {
                    gb.iter_mut().zip(g).for_each(|(o, x)| *o += x)
                });
            }
            Op::Sub(a, b) => {
                accum(grads, *a, &mut |ga| {
                    ga.iter_mut().zip(g).for_each(|(o, x)| *o += x)
                });
                accum(grads, *b, &mut |gb| {
                    gb.iter_mut().zip(g).for_each(|(o, x)| *o -= x)
                });
            }
            Op::Mul(a, b) => {
                let (av, bv) = (nodes[a.0].value.data(), nodes[b.0].value.data());
                accum(grads, *a, &mut |ga| {
                    for ((o, x), y) in ga.iter_mut().zip(g).zip(bv) {
                        *o += x * y;
                    }
                });
                accum(grads, *b, &mut |gb| {
                    for ((o, x), y) in gb.iter_mut().zip(g).zip(av) {
                        *o += x * y;
                    }
                });
            }
            Op::Scale(a, c) => {
                accum(grads, *a, &mut |ga| {
                    ga.iter_mut().zip(g).for_each(|(o, x)| *o += c * x)
                });
            }
            Op::MulCol(a, col) => {
                let (av, cv) = (&nodes[a.0].value, &nodes[col.0].value);
                let c = av.cols();
                accum(grads, *a, &mut |ga| {
                    for ((orow, grow), s) in ga.chunks_mut(c).zip(g.chunks(c)).zip(cv.data()) {
                        orow.iter_mut().zip(grow).for_each(|(o, x)| *o += s * x);
                    }
                });
                accum(grads, *col, &mut |gc| {
                    for ((o, grow), arow) in gc.iter_mut().zip(g.chunks(c)).zip(av.data().chunks(c))
                    {
                        *o += grow.iter().zip(arow).map(|(x, y)| x * y).sum::<f64>();
                    }
                });
            }
            Op::Relu(a) => {
                let av = nodes[a.0].value.data();
                accum(grads, *a, &mut |ga| {
                    for ((o, x), v) in ga.iter_mut().zip(g).zip(av) {
                        if *v > 0.0 {
                            *o += x;
                        }
                    }
                });
            }
            Op::Silu(a) => {
                let av = nodes[a.0].value.data();
                accum(grads, *a, &mut |ga| {
                    for ((o, x), &v) in ga.iter_mut().zip(g).zip(av) {
                        let s = sigmoid(v);
                        *o += x * s * (1.0 + v * (1.0 - s));
                    }
                });
            }
            Op::Concat(parts) => {
                let total = nodes[idx].value.cols();
                let mut offset = 0;
                for p in parts {
                    let w = nodes[p.0].value.cols();
                    accum(grads, *p, &mut |gp| {
                        for (orow, grow) in gp.chunks_mut(w).zip(g.chunks(total)) {
                            orow.iter_mut()
                                .zip(&grow[offset..offset + w])
                                .for_each(|(o, x)| *o += x);
                        }
                    });
                    offset += w;
                }
            }
            Op::Slice(a, start, end) => {
                let c = nodes[a.0].value.cols();
                let w = end - start;
                accum(grads, *a, &mut |ga| {
                    for (orow, grow) in ga.chunks_mut(c).zip(g.chunks(w)) {
                        orow[*start..*end]
                            .iter_mut()
                            .zip(grow)
                            .for_each(|(o, x)| *o += x);
                    }
                });
            }
            Op::Sum(a) => {
                accum(grads, *a, &mut |ga| ga.iter_mut().for_each(|o| *o += g[0]));
            }
            Op::Mean(a) => {
                let n = nodes[a.0].value.len() as f64;
                accum(grads, *a, &mut |ga| {
                    ga.iter_mut().for_each(|o| *o += g[0] / n)
                });
            }
            Op::SumRows(a) => {
                let c = nodes[a.0].value.cols();
                accum(grads, *a, &mut |ga| {
                    for row in ga.chunks_mut(c) {
                        row.iter_mut().zip(g).for_each(|(o, x)| *o += x);
                    }
                });
            }
            Op::SumCols(a) => {
                let c = nodes[a.0].value.cols();
                accum(grads, *a, &mut |ga| {
                    for (row, x) in ga.chunks_mut(c).zip(g) {
                        row.iter_mut().for_each(|o| *o += x);
                    }
                });
            }
            Op::L1(a, b) => {
                let (av, bv) = (nodes[a.0].value.data(), nodes[b.0].value.data());
                let scale = g[0] / av.len() as f64;
                let sign = |x: f64, y: f64| {
                    let d = x - y;
                    if d > 0.0 {
                        1.0
                    } else if d < 0.0 {
                        -1.0
                    } else {
                        0.0
                    }
                };
                accum(grads, *a, &mut |ga| {
                    for ((o, x), y) in ga.iter_mut().zip(av).zip(bv) {
                        *o += scale * sign(*x, *y);
                    }
                });
                accum(grads, *b, &mut |gb| {
                    for ((o, x), y) in gb.iter_mut().zip(av).zip(bv) {
                        *o -= scale * sign(*x, *y);
                    }
                });
            }
            Op::L2(a, b) => {
                let (av, bv) = (nodes[a.0].value.data(), nodes[b.0].value.data());
                let scale = 2.0 * g[0] / av.len() as f64;
                accum(grads, *a, &mut |ga| {
                    for ((o, x), y) in ga.iter_mut().zip(av).zip(bv) {
                        *o += scale * (x - y);
                    }
                });
                accum(grads, *b, &mut |gb| {
                    for ((o, x), y) in gb.iter_mut().zip(av).zip(bv) {
                        *o -= scale * (x - y);
                    }
                });
            }
            Op::ScatterAdd(src, index) => {
                let c = nodes[src.0].value.cols();
                accum(grads, *src, &mut |gs| {
                    for (k, &i) in index.iter().enumerate() {
                        gs[k * c..(k + 1) * c]
                            .iter_mut()
                            .zip(&g[i * c..(i + 1) * c])
                            .for_each(|(o, x)| *o += x);
                    }
                });
            }
            Op::Gather(src, index) => {
                let c = nodes[src.0].value.cols();
                accum(grads, *src, &mut |gs| {
                    for (k, &i) in index.iter().enumerate() {
                        gs[i * c..(i + 1) * c]
                            .iter_mut()
                            .zip(&g[k * c..(k + 1) * c])
                            .for_each(|(o, x)| *o += x);
                    }
                });
            }
        }
    }

    /// Adjoint of `v` after [`Tape::backward`]. Nodes that require a gradient
    /// but did not contribute to the loss get zeros; constants get `None`.
    pub fn grad(&self, v: Var) -> Option<Tensor> {
        let node = &self.nodes[v.0];
        if !node.requires_grad || !self.consumed {
            return None;
        }
        let data = match self.grads.get(v.0) {
            Some(Some(g)) => g.clone(),
            _ => vec![0.0; node.value.len()],
        };
        Some(Tensor::new(node.value.shape().to_vec(), data).expect("grad shape"))
    }
}

/// Max relative error between the tape gradient of `f` at `point` and
/// central differences with step `step`, using
/// `|analytic - numeric| / max(1, |numeric|)` per coordinate.
pub fn grad_check<F>(f: F, point: &Tensor, step: f64) -> Result<f64>
where
    F: Fn(&mut Tape, Var) -> Result<Var>,
{
    if !(step > 0.0) {
        return Err(Error::invalid("grad_check step must be positive"));
    }
    let eval = |p: &Tensor| -> Result<f64> {
        let mut tape = Tape::new();
        let x = tape.constant(p.clone());
        let y = f(&mut tape, x)?;
        let v = tape
            .value(y)
            .item()
            .ok_or(Error::NonScalarSeed(tape.value(y).len()))?;
        if !v.is_finite() {
            return Err(Error::NonFinite(format!("grad_check objective = {v}")));
        }
        Ok(v)
    };

    let mut tape = Tape::new();
    let x = tape.param(point.clone());
    let y = f(&mut tape, x)?;
    let v = tape.value(y).item().unwrap_or(f64::NAN);
    if !v.is_finite() {
        return Err(Error::NonFinite(format!("grad_check objective = {v}")));
    }
    tape.backward(y)?;
    let analytic = tape.grad(x).expect("param has grad");

    let mut worst: f64 = 0.0;
    let mut probe = point.clone();
    for i in 0..point.len() {
        let orig = probe.data()[i];
        probe.data_mut()[i] = orig + step;
        let plus = eval(&probe)?;
        probe.data_mut()[i] = orig - step;
        let minus = eval(&probe)?;
        probe.data_mut()[i] = orig;
        let numeric = (plus - minus) / (2.0 * step);
        let err = libm::fabs(analytic.data()[i] - numeric) / libm::fabs(numeric).max(1.0);
        worst = worst.max(err);
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn t(shape: &[usize], data: &[f64]) -> Tensor {
        Tensor::new(shape.to_vec(), data.to_vec()).unwrap()
    }

    #[test]
    fn sum_gradient_is_ones() {
        let mut tape = Tape::new();
        let x = tape.param(Tensor::vector(vec![0.3, -1.0, 2.0]));
        let s = tape.sum(x);
        tape.backward(s).unwrap();
        assert_eq!(tape.grad(x).unwrap().data(), &[1.0, 1.0, 1.0]);
    }

    #[test]
    fn dead_branch_gets_zero_gradient() {
        let mut tape = Tape::new();
        let x = tape.param(Tensor::vector(vec![1.0, 2.0]));
        let unused = tape.param(Tensor::vector(vec![5.0]));
        let z = tape.scale(x, 0.0);
        let s = tape.sum(z);
        tape.backward(s).unwrap();
        assert_eq!(tape.grad(x).unwrap().data(), &[0.0, 0.0]);
        assert_eq!(tape.grad(unused).unwrap().data(), &[0.0]);
    }

    #[test]
    fn square_gradient() {
        let mut tape = Tape::new();
        let x = tape.param(Tensor::vector(vec![1.0, 2.0, 3.0]));
        let sq = tape.mul(x, x).unwrap();
        let s = tape.sum(sq);
        tape.backward(s).unwrap();
        assert_eq!(tape.grad(x).unwrap().data(), &[2.0, 4.0, 6.0]);
    }

    #[test]
    fn non_scalar_seed_rejected() {
        let mut tape = Tape::new();
        let x = tape.param(Tensor::vector(vec![1.0, 2.0]));
        assert_eq!(tape.backward(x), Err(Error::NonScalarSeed(2)));
    }

    #[test]
    fn consumed_tape_rejected() {
        let mut tape = Tape::new();
        let x = tape.param(Tensor::vector(vec![1.0]));
        let s = tape.sum(x);
        tape.backward(s).unwrap();
        assert_eq!(tape.backward(s), Err(Error::TapeConsumed));
    }

    #[test]
    fn relu_kink_has_zero_derivative() {
        let mut tape = Tape::new();
        let x = tape.param(Tensor::vector(vec![0.0, 1.0, -1.0]));
        let r = tape.relu(x);
        let s = tape.sum(r);
        tape.backward(s).unwrap();
        assert_eq!(tape.grad(x).unwrap().data(), &[0.0, 1.0, 0.0]);
    }

    #[test]
    fn concat_then_slice_recovers_operands() {
        let mut tape = Tape::new();
        let a = tape.param(t(&[2, 2], &[1.0, 2.0, 3.0, 4.0]));
        let b = tape.param(t(&[2, 3], &[5.0, 6.0, 7.0, 8.0, 9.0, 10.0]));
        let c = tape.concat(&[a, b]).unwrap();
        let a2 = tape.slice(c, 0, 2).unwrap();
        let b2 = tape.slice(c, 2, 5).unwrap();
        assert_eq!(tape.value(a2), tape.value(a));
        assert_eq!(tape.value(b2), tape.value(b));
    }

    #[test]
    fn scatter_add_accumulates_in_index_order() {
        let mut tape = Tape::new();
        let src = tape.param(t(&[3, 1], &[1.0, 2.0, 4.0]));
        let out = tape.scatter_add(src, Arc::from([1usize, 0, 1]), 2).unwrap();
        assert_eq!(tape.value(out).data(), &[2.0, 5.0]);
        assert!(tape.scatter_add(src, Arc::from([0usize, 2, 1]), 2).is_err());
    }

    #[test]
    fn shape_errors_are_reported() {
        let mut tape = Tape::new();
        let a = tape.constant(Tensor::zeros(&[2, 3]));
        let b = tape.constant(Tensor::zeros(&[2, 3]));
        assert!(matches!(tape.matmul(a, b), Err(Error::Shape { .. })));
        let c = tape.constant(Tensor::zeros(&[3, 2]));
        assert!(tape.add(a, c).is_err());
    }

    #[test]
    fn grad_check_linear_is_exact() {
        let w = t(&[3, 1], &[0.5, -2.0, 1.25]);
        let err = grad_check(
            |tape, x| {
                let wv = tape.constant(w.clone());
                let y = tape.matmul(x, wv)?;
                Ok(tape.sum(y))
            },
            &t(&[2, 3], &[1.0, 2.0, 3.0, -1.0, 0.5, 4.0]),
            1e-3,
        )
        .unwrap();
        assert!(err <= 1e-12, "{err}");
    }

    #[test]
    fn grad_check_sum_of_squares() {
        let err = grad_check(
            |tape, x| {
                let sq = tape.mul(x, x)?;
                Ok(tape.sum(sq))
            },
            &Tensor::vector(vec![1.0, 2.0, 3.0]),
            1e-5,
        )
        .unwrap();
        assert!(err < 1e-8, "{err}");
    }

    #[test]
    fn grad_check_reports_nan() {
        let res = grad_check(
            |tape, x| {
                let y = tape.scale(x, f64::NAN);
                Ok(tape.sum(y))
            },
            &Tensor::vector(vec![1.0]),
            1e-5,
        );
        assert!(matches!(res, Err(Error::NonFinite(_))));
    }

    #[test]
    fn mac_count_tracks_matmul() {
        let mut tape = Tape::new();
        let a = tape.constant(Tensor::zeros(&[4, 3]));
        let b = tape.constant(Tensor::zeros(&[3, 5]));
        tape.matmul(a, b).unwrap();
        assert_eq!(tape.mac_count(), 60);
    }
}
