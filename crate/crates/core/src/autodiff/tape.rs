//! Operation recording and the reverse pass.
//!
//! A `Tape` owns the record of every differentiable op in one forward pass;
//! `backward` replays the records in reverse, accumulating gradients into
//! every tensor that requires them. A tape is single-use: run one forward
//! pass, call `backward` once, then drop it.

use super::batchnorm::RunningStats;
use super::conv::{
    conv2d_forward, conv2d_input_grad, conv2d_kernel_grad, conv_out_side, convt_forward,
    convt_input_grad, convt_kernel_grad, convt_out_side, ConvDims,
};
use super::tensor::Tensor;
use super::{AdError, Mode};
use std::cell::{Cell, RefCell};

type BackwardFn = Box<dyn Fn()>;

#[derive(Default)]
pub struct Tape {
    records: RefCell<Vec<BackwardFn>>,
    recording: Cell<bool>,
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum BinaryOp {
    Add,
    Sub,
    Mul,
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum Broadcast {
    Same,
    ScalarRhs,
    /// rhs is a vector matching the last dimension of lhs.
    RowRhs,
}

fn broadcast_kind(a: &[usize], b: &[usize]) -> Result<Broadcast, AdError> {
    if a == b {
        Ok(Broadcast::Same)
    } else if b.iter().product::<usize>() == 1 {
        Ok(Broadcast::ScalarRhs)
    } else if b.len() == 1 && a.last() == Some(&b[0]) {
        Ok(Broadcast::RowRhs)
    } else {
        Err(AdError::ShapeMismatch(format!(
            "cannot broadcast {b:?} against {a:?}"
        )))
    }
}

impl Tape {
    pub fn new() -> Self {
        Self {
            records: RefCell::new(Vec::new()),
            recording: Cell::new(true),
        }
    }

    /// A tape that records nothing; use for evaluation-only forward passes.
    pub fn inference() -> Self {
        Self {
            records: RefCell::new(Vec::new()),
            recording: Cell::new(false),
        }
    }

    pub fn num_records(&self) -> usize {
        self.records.borrow().len()
    }

    fn output(&self, shape: Vec<usize>, values: Vec<f64>, inputs: &[&Tensor]) -> (Tensor, bool) {
        let rg = self.recording.get() && inputs.iter().any(|t| t.requires_grad());
        (Tensor::raw(shape, values, rg), rg)
    }

    fn push(&self, f: impl Fn() + 'static) {
        self.records.borrow_mut().push(Box::new(f));
    }

    /// Populates gradients of everything `loss` depends on. `loss` must be a
    /// scalar produced through this tape.
    pub fn backward(&self, loss: &Tensor) -> Result<(), AdError> {
        if loss.numel() != 1 {
            return Err(AdError::NotScalar(loss.shape()));
        }
        loss.seed_grad_ones();
        for record in self.records.borrow().iter().rev() {
            record();
        }
        Ok(())
    }

    // ---- elementwise binary ----------------------------------------------

    pub fn add(&self, a: &Tensor, b: &Tensor) -> Result<Tensor, AdError> {
        self.binary(a, b, |x, y| x + y, BinaryOp::Add)
    }

    pub fn sub(&self, a: &Tensor, b: &Tensor) -> Result<Tensor, AdError> {
        self.binary(a, b, |x, y| x - y, BinaryOp::Sub)
    }

    pub fn mul(&self, a: &Tensor, b: &Tensor) -> Result<Tensor, AdError> {
        self.binary(a, b, |x, y| x * y, BinaryOp::Mul)
    }

    fn binary(
        &self,
        a: &Tensor,
        b: &Tensor,
        f: fn(f64, f64) -> f64,
        op: BinaryOp,
    ) -> Result<Tensor, AdError> {
        let (ashape, bshape) = (a.shape(), b.shape());
        let kind = broadcast_kind(&ashape, &bshape)?;
        let av = a.values();
        let bv = b.values();
        let values: Vec<f64> = match kind {
            Broadcast::Same => av.iter().zip(bv.iter()).map(|(&x, &y)| f(x, y)).collect(),
            Broadcast::ScalarRhs => av.iter().map(|&x| f(x, bv[0])).collect(),
            Broadcast::RowRhs => {
                let n = bv.len();
                av.iter()
                    .enumerate()
                    .map(|(i, &x)| f(x, bv[i % n]))
                    .collect()
            }
        };
        drop(av);
        drop(bv);
        let (out, rg) = self.output(ashape, values, &[a, b]);
        if rg {
            let (a, b, out) = (a.clone(), b.clone(), out.clone());
            self.push(move || {
                let Some(g) = out.grad() else { return };
                let n_b = b.numel();
                match op {
                    BinaryOp::Add | BinaryOp::Sub => {
                        if a.requires_grad() {
                            a.accumulate_grad(&g);
                        }
                        if b.requires_grad() {
                            let sign = if op == BinaryOp::Sub { -1.0 } else { 1.0 };
                            let mut db = vec![0.0; n_b];
                            for (i, &gi) in g.iter().enumerate() {
                                db[i % n_b] += sign * gi;
                            }
                            b.accumulate_grad(&db);
                        }
                    }
                    BinaryOp::Mul => {
                        if a.requires_grad() {
                            let bv = b.values();
                            let da: Vec<f64> = g
                                .iter()
                                .enumerate()
                                .map(|(i, &gi)| gi * bv[i % n_b])
                                .collect();
                            drop(bv);
                            a.accumulate_grad(&da);
                        }
                        if b.requires_grad() {
                            let av = a.values();
                            let mut db = vec![0.0; n_b];
                            for (i, &gi) in g.iter().enumerate() {
                                db[i % n_b] += gi * av[i];
                            }
                            drop(av);
                            b.accumulate_grad(&db);
                        }
                    }
                }
            });
        }
        Ok(out)
    }

    /// Elementwise `scale * x + offset` with constant coefficients.
    pub fn affine(&self, x: &Tensor, scale: f64, offset: f64) -> Tensor {
        let values: Vec<f64> = x.values().iter().map(|&v| scale * v + offset).collect();
        let (out, rg) = self.output(x.shape(), values, &[x]);
        if rg {
            let (x, out) = (x.clone(), out.clone());
            self.push(move || {
                let Some(g) = out.grad() else { return };
                let dx: Vec<f64> = g.iter().map(|&gi| scale * gi).collect();
                x.accumulate_grad(&dx);
            });
        }
        out
    }

    // ---- reductions and shape --------------------------------------------

    pub fn sum(&self, x: &Tensor) -> Tensor {
        let total: f64 = x.values().iter().sum();
        let (out, rg) = self.output(vec![1], vec![total], &[x]);
        if rg {
            let (x, out) = (x.clone(), out.clone());
            self.push(move || {
                let Some(g) = out.grad() else { return };
                x.accumulate_grad(&vec![g[0]; x.numel()]);
            });
        }
        out
    }

    pub fn mean(&self, x: &Tensor) -> Tensor {
        let n = x.numel() as f64;
        let total: f64 = x.values().iter().sum();
        let (out, rg) = self.output(vec![1], vec![total / n], &[x]);
        if rg {
            let (x, out) = (x.clone(), out.clone());
            self.push(move || {
                let Some(g) = out.grad() else { return };
                x.accumulate_grad(&vec![g[0] / n; x.numel()]);
            });
        }
        out
    }

    pub fn reshape(&self, x: &Tensor, shape: Vec<usize>) -> Result<Tensor, AdError> {
        if shape.iter().product::<usize>() != x.numel() {
            return Err(AdError::ShapeMismatch(format!(
                "cannot reshape {:?} into {:?}",
                x.shape(),
                shape
            )));
        }
        let (out, rg) = self.output(shape, x.to_vec(), &[x]);
        if rg {
            let (x, out) = (x.clone(), out.clone());
            self.push(move || {
                let Some(g) = out.grad() else { return };
                x.accumulate_grad(&g);
            });
        }
        Ok(out)
    }

    pub fn matmul(&self, a: &Tensor, b: &Tensor) -> Result<Tensor, AdError> {
        let (ashape, bshape) = (a.shape(), b.shape());
        if ashape.len() != 2 || bshape.len() != 2 || ashape[1] != bshape[0] {
            return Err(AdError::ShapeMismatch(format!(
                "matmul of {ashape:?} and {bshape:?}"
            )));
        }
        let (m, k, n) = (ashape[0], ashape[1], bshape[1]);
        let mut values = vec![0.0; m * n];
        {
            let av = a.values();
            let bv = b.values();
            for i in 0..m {
                let out_row = &mut values[i * n..(i + 1) * n];
                for kk in 0..k {
                    let aik = av[i * k + kk];
                    if aik == 0.0 {
                        continue;
                    }
                    let b_row = &bv[kk * n..(kk + 1) * n];
                    for (o, &bv) in out_row.iter_mut().zip(b_row) {
                        *o += aik * bv;
                    }
                }
            }
        }
        let (out, rg) = self.output(vec![m, n], values, &[a, b]);
        if rg {
            let (a, b, out) = (a.clone(), b.clone(), out.clone());
            self.push(move || {
                let Some(g) = out.grad() else { return };
                if a.requires_grad() {
                    // dA[i,k] = sum_j g[i,j] * b[k,j]
                    let bv = b.values();
                    let mut da = vec![0.0; m * k];
                    for i in 0..m {
                        let g_row = &g[i * n..(i + 1) * n];
                        for kk in 0..k {
                            let b_row = &bv[kk * n..(kk + 1) * n];
                            da[i * k + kk] =
                                g_row.iter().zip(b_row).map(|(&x, &y)| x * y).sum();
                        }
                    }
                    drop(bv);
                    a.accumulate_grad(&da);
                }
                if b.requires_grad() {
                    // dB[k,j] = sum_i a[i,k] * g[i,j]
                    let av = a.values();
                    let mut db = vec![0.0; k * n];
                    for i in 0..m {
                        let g_row = &g[i * n..(i + 1) * n];
                        for kk in 0..k {
                            let aik = av[i * k + kk];
                            if aik == 0.0 {
                                continue;
                            }
                            let db_row = &mut db[kk * n..(kk + 1) * n];
                            for (d, &gv) in db_row.iter_mut().zip(g_row) {
                                *d += aik * gv;
                            }
                        }
                    }
                    drop(av);
                    b.accumulate_grad(&db);
                }
            });
        }
        Ok(out)
    }

    // ---- activations -------------------------------------------------------

    pub fn relu(&self, x: &Tensor) -> Tensor {
        self.unary(x, |v| v.max(0.0), |xv, _yv| if xv > 0.0 { 1.0 } else { 0.0 })
    }

    pub fn leaky_relu(&self, x: &Tensor, slope: f64) -> Tensor {
        self.unary(
            x,
            move |v| if v > 0.0 { v } else { slope * v },
            move |xv, _| if xv > 0.0 { 1.0 } else { slope },
        )
    }

    pub fn tanh(&self, x: &Tensor) -> Tensor {
        self.unary(x, f64::tanh, |_, yv| 1.0 - yv * yv)
    }

    pub fn sigmoid(&self, x: &Tensor) -> Tensor {
        self.unary(
            x,
            |v| 1.0 / (1.0 + (-v).exp()),
            |_, yv| yv * (1.0 - yv),
        )
    }

    pub fn clamp(&self, x: &Tensor, lo: f64, hi: f64) -> Tensor {
        self.unary(
            x,
            move |v| v.clamp(lo, hi),
            move |xv, _| if (lo..=hi).contains(&xv) { 1.0 } else { 0.0 },
        )
    }

    /// Natural logarithm; every element must be positive (clamp first).
    pub fn log(&self, x: &Tensor) -> Result<Tensor, AdError> {
        if x.values().iter().any(|&v| v <= 0.0) {
            return Err(AdError::Domain(
                "log of a non-positive value; clamp inputs first".into(),
            ));
        }
        Ok(self.unary(x, f64::ln, |xv, _| 1.0 / xv))
    }

    fn unary(
        &self,
        x: &Tensor,
        f: impl Fn(f64) -> f64,
        df: impl Fn(f64, f64) -> f64 + 'static,
    ) -> Tensor {
        let values: Vec<f64> = x.values().iter().map(|&v| f(v)).collect();
        let (out, rg) = self.output(x.shape(), values, &[x]);
        if rg {
            let (x, out) = (x.clone(), out.clone());
            self.push(move || {
                let Some(g) = out.grad() else { return };
                let dx: Vec<f64> = {
                    let xv = x.values();
                    let yv = out.values();
                    g.iter()
                        .enumerate()
                        .map(|(i, &gi)| gi * df(xv[i], yv[i]))
                        .collect()
                };
                x.accumulate_grad(&dx);
            });
        }
        out
    }

    // ---- structured layers -------------------------------------------------

    /// x: (batch, in_ch, side, side); w: (out_ch, in_ch, k, k).
    pub fn conv2d(
        &self,
        x: &Tensor,
        w: &Tensor,
        stride: usize,
        padding: usize,
    ) -> Result<Tensor, AdError> {
        let (xs, ws) = (x.shape(), w.shape());
        if xs.len() != 4 || ws.len() != 4 || xs[2] != xs[3] || ws[2] != ws[3] || xs[1] != ws[1] {
            return Err(AdError::ShapeMismatch(format!(
                "conv2d of input {xs:?} with kernel {ws:?}"
            )));
        }
        let out_side = conv_out_side(xs[2], ws[2], stride, padding)
            .filter(|&o| o >= 1)
            .ok_or_else(|| {
                AdError::ShapeMismatch(format!(
                    "conv2d output side < 1 for input {xs:?} kernel {ws:?} stride {stride} padding {padding}"
                ))
            })?;
        let dims = ConvDims {
            batch: xs[0],
            in_ch: xs[1],
            out_ch: ws[0],
            in_side: xs[2],
            out_side,
            kernel: ws[2],
            stride,
            padding,
        };
        let values = conv2d_forward(&x.values(), &w.values(), &dims);
        let (out, rg) = self.output(vec![dims.batch, dims.out_ch, out_side, out_side], values, &[x, w]);
        if rg {
            let (x, w, out) = (x.clone(), w.clone(), out.clone());
            self.push(move || {
                let Some(g) = out.grad() else { return };
                if x.requires_grad() {
                    let dx = conv2d_input_grad(&g, &w.values(), &dims);
                    x.accumulate_grad(&dx);
                }
                if w.requires_grad() {
                    let dw = conv2d_kernel_grad(&g, &x.values(), &dims);
                    w.accumulate_grad(&dw);
                }
            });
        }
        Ok(out)
    }

    /// x: (batch, in_ch, side, side); w: (in_ch, out_ch, k, k).
    pub fn conv2d_transpose(
        &self,
        x: &Tensor,
        w: &Tensor,
        stride: usize,
        padding: usize,
    ) -> Result<Tensor, AdError> {
        let (xs, ws) = (x.shape(), w.shape());
        if xs.len() != 4 || ws.len() != 4 || xs[2] != xs[3] || ws[2] != ws[3] || xs[1] != ws[0] {
            return Err(AdError::ShapeMismatch(format!(
                "conv2d_transpose of input {xs:?} with kernel {ws:?}"
            )));
        }
        let out_side = convt_out_side(xs[2], ws[2], stride, padding)
            .filter(|&o| o >= 1)
            .ok_or_else(|| {
                AdError::ShapeMismatch(format!(
                    "conv2d_transpose output side < 1 for input {xs:?} kernel {ws:?}"
                ))
            })?;
        let dims = ConvDims {
            batch: xs[0],
            in_ch: xs[1],
            out_ch: ws[1],
            in_side: xs[2],
            out_side,
            kernel: ws[2],
            stride,
            padding,
        };
        let values = convt_forward(&x.values(), &w.values(), &dims);
        let (out, rg) = self.output(vec![dims.batch, dims.out_ch, out_side, out_side], values, &[x, w]);
        if rg {
            let (x, w, out) = (x.clone(), w.clone(), out.clone());
            self.push(move || {
                let Some(g) = out.grad() else { return };
                if x.requires_grad() {
                    let dx = convt_input_grad(&g, &w.values(), &dims);
                    x.accumulate_grad(&dx);
                }
                if w.requires_grad() {
                    let dw = convt_kernel_grad(&g, &x.values(), &dims);
                    w.accumulate_grad(&dw);
                }
            });
        }
        Ok(out)
    }

    /// x: (batch, channels, side, side); gamma, beta: (channels).
    ///
    /// Training mode normalizes per channel over batch and spatial dims and
    /// updates the running stats; evaluation mode applies the running stats.
    pub fn batchnorm2d(
        &self,
        x: &Tensor,
        gamma: &Tensor,
        beta: &Tensor,
        stats: &RefCell<RunningStats>,
        mode: Mode,
    ) -> Result<Tensor, AdError> {
        let xs = x.shape();
        if xs.len() != 4 {
            return Err(AdError::ShapeMismatch(format!(
                "batchnorm2d expects 4-d input, got {xs:?}"
            )));
        }
        let (b, c, h, wd) = (xs[0], xs[1], xs[2], xs[3]);
        if gamma.numel() != c || beta.numel() != c {
            return Err(AdError::ShapeMismatch(format!(
                "batchnorm2d gamma/beta must have {c} channels"
            )));
        }
        let plane = h * wd;
        let m = (b * plane) as f64;
        let eps = stats.borrow().eps;

        let xv = x.values();
        let (mean, var) = match mode {
            Mode::Train => {
                let mut mean = vec![0.0; c];
                let mut var = vec![0.0; c];
                for ch in 0..c {
                    let mut acc = 0.0;
                    for n in 0..b {
                        let base = (n * c + ch) * plane;
                        for &v in &xv[base..base + plane] {
                            acc += v;
                        }
                    }
                    mean[ch] = acc / m;
                    let mut sq = 0.0;
                    for n in 0..b {
                        let base = (n * c + ch) * plane;
                        for &v in &xv[base..base + plane] {
                            let d = v - mean[ch];
                            sq += d * d;
                        }
                    }
                    var[ch] = sq / m;
                }
                stats.borrow_mut().update(&mean, &var);
                (mean, var)
            }
            Mode::Eval => {
                let s = stats.borrow();
                (s.mean.clone(), s.var.clone())
            }
        };

        let inv: Vec<f64> = var.iter().map(|&v| 1.0 / (v + eps).sqrt()).collect();
        let gv = gamma.values();
        let bv = beta.values();
        let mut xhat = vec![0.0; xv.len()];
        let mut values = vec![0.0; xv.len()];
        for n in 0..b {
            for ch in 0..c {
                let base = (n * c + ch) * plane;
                for i in base..base + plane {
                    let xh = (xv[i] - mean[ch]) * inv[ch];
                    xhat[i] = xh;
                    values[i] = gv[ch] * xh + bv[ch];
                }
            }
        }
        drop(xv);
        drop(gv);
        drop(bv);

        let (out, rg) = self.output(xs, values, &[x, gamma, beta]);
        if rg {
            let (x, gamma, beta, out) = (x.clone(), gamma.clone(), beta.clone(), out.clone());
            self.push(move || {
                let Some(g) = out.grad() else { return };
                let gv = gamma.to_vec();
                // d_gamma and d_beta are plain per-channel reductions.
                if gamma.requires_grad() || beta.requires_grad() {
                    let mut dg = vec![0.0; c];
                    let mut db = vec![0.0; c];
                    for n in 0..b {
                        for ch in 0..c {
                            let base = (n * c + ch) * plane;
                            for i in base..base + plane {
                                dg[ch] += g[i] * xhat[i];
                                db[ch] += g[i];
                            }
                        }
                    }
                    if gamma.requires_grad() {
                        gamma.accumulate_grad(&dg);
                    }
                    if beta.requires_grad() {
                        beta.accumulate_grad(&db);
                    }
                }
                if x.requires_grad() {
                    let mut dx = vec![0.0; g.len()];
                    match mode {
                        Mode::Train => {
                            // Standard batch-stat backward per channel.
                            for ch in 0..c {
                                let mut sum_dxhat = 0.0;
                                let mut sum_dxhat_xhat = 0.0;
                                for n in 0..b {
                                    let base = (n * c + ch) * plane;
                                    for i in base..base + plane {
                                        let dxh = g[i] * gv[ch];
                                        sum_dxhat += dxh;
                                        sum_dxhat_xhat += dxh * xhat[i];
                                    }
                                }
                                for n in 0..b {
                                    let base = (n * c + ch) * plane;
                                    for i in base..base + plane {
                                        let dxh = g[i] * gv[ch];
                                        dx[i] = inv[ch] / m
                                            * (m * dxh - sum_dxhat - xhat[i] * sum_dxhat_xhat);
                                    }
                                }
                            }
                        }
                        Mode::Eval => {
                            for n in 0..b {
                                for ch in 0..c {
                                    let base = (n * c + ch) * plane;
                                    for i in base..base + plane {
                                        dx[i] = g[i] * gv[ch] * inv[ch];
                                    }
                                }
                            }
                        }
                    }
                    x.accumulate_grad(&dx);
                }
            });
        }
        Ok(out)
    }

    /// Mean cross-entropy of row-wise softmax against integer targets.
    /// logits: (batch, classes).
    pub fn softmax_cross_entropy(
        &self,
        logits: &Tensor,
        targets: &[usize],
    ) -> Result<Tensor, AdError> {
        let shape = logits.shape();
        if shape.len() != 2 || shape[0] != targets.len() {
            return Err(AdError::ShapeMismatch(format!(
                "softmax_cross_entropy of logits {shape:?} with {} targets",
                targets.len()
            )));
        }
        let (b, c) = (shape[0], shape[1]);
        if let Some(&t) = targets.iter().find(|&&t| t >= c) {
            return Err(AdError::Domain(format!("target class {t} out of range")));
        }
        let probs = row_softmax(&logits.values(), b, c);
        let mut loss = 0.0;
        for (i, &t) in targets.iter().enumerate() {
            loss -= probs[i * c + t].max(1e-300).ln();
        }
        loss /= b as f64;

        let (out, rg) = self.output(vec![1], vec![loss], &[logits]);
        if rg {
            let (logits, out) = (logits.clone(), out.clone());
            let targets = targets.to_vec();
            self.push(move || {
                let Some(g) = out.grad() else { return };
                let scale = g[0] / b as f64;
                let mut dl = probs.clone();
                for (i, &t) in targets.iter().enumerate() {
                    dl[i * c + t] -= 1.0;
                }
                for v in &mut dl {
                    *v *= scale;
                }
                logits.accumulate_grad(&dl);
            });
        }
        Ok(out)
    }
}

/// Max-shifted softmax over each row of a (rows, cols) matrix.
pub fn row_softmax(values: &[f64], rows: usize, cols: usize) -> Vec<f64> {
    let mut out = vec![0.0; rows * cols];
    for r in 0..rows {
        let row = &values[r * cols..(r + 1) * cols];
        let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let exps: Vec<f64> = row.iter().map(|&v| (v - max).exp()).collect();
        let total: f64 = exps.iter().sum();
        for (o, e) in out[r * cols..(r + 1) * cols].iter_mut().zip(&exps) {
            *o = e / total;
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn param(shape: Vec<usize>, values: Vec<f64>) -> Tensor {
        Tensor::param(shape, values).unwrap()
    }

    #[test]
    fn sum_gradient_is_all_ones() {
        let tape = Tape::new();
        let x = param(vec![4], vec![1.0, 2.0, 3.0, 4.0]);
        let loss = tape.sum(&x);
        tape.backward(&loss).unwrap();
        assert_eq!(x.grad().unwrap(), vec![1.0; 4]);
    }

    #[test]
    fn mean_of_squares_gradient() {
        let tape = Tape::new();
        let x = param(vec![4], vec![1.0, -2.0, 3.0, 0.5]);
        let sq = tape.mul(&x, &x).unwrap();
        let loss = tape.mean(&sq);
        tape.backward(&loss).unwrap();
        let g = x.grad().unwrap();
        for (gi, xi) in g.iter().zip(x.values().iter()) {
            assert!((gi - 2.0 * xi / 4.0).abs() < 1e-12);
        }
    }

    #[test]
    fn gradient_accumulates_across_consumers() {
        // y = x + x means dy/dx = 2.
        let tape = Tape::new();
        let x = param(vec![2], vec![3.0, 5.0]);
        let y = tape.add(&x, &x).unwrap();
        let loss = tape.sum(&y);
        tape.backward(&loss).unwrap();
        assert_eq!(x.grad().unwrap(), vec![2.0, 2.0]);
    }

    #[test]
    fn conv_shape_contract() {
        let tape = Tape::inference();
        let x = Tensor::zeros(vec![1, 1, 4, 4]);
        let w = Tensor::zeros(vec![1, 1, 3, 3]);
        let y = tape.conv2d(&x, &w, 1, 0).unwrap();
        assert_eq!(y.shape(), vec![1, 1, 2, 2]);
        let too_small = Tensor::zeros(vec![1, 1, 2, 2]);
        assert!(tape.conv2d(&too_small, &w, 1, 0).is_err());
    }

    #[test]
    fn conv_all_ones_sums_window() {
        let tape = Tape::inference();
        let x = Tensor::new(vec![1, 1, 3, 3], vec![1.0; 9]).unwrap();
        let w = Tensor::new(vec![1, 1, 3, 3], vec![1.0; 9]).unwrap();
        let y = tape.conv2d(&x, &w, 1, 0).unwrap();
        assert_eq!(y.to_vec(), vec![9.0]);
    }

    #[test]
    fn conv_input_grad_equals_transpose_of_upstream() {
        use crate::rng::substream;
        use rand::Rng;
        let mut rng = substream(41, 0);
        let tape = Tape::new();
        let x = param(vec![2, 2, 6, 6], (0..144).map(|_| rng.random_range(-1.0..1.0)).collect());
        let w = param(vec![3, 2, 4, 4], (0..96).map(|_| rng.random_range(-1.0..1.0)).collect());
        let y = tape.conv2d(&x, &w, 2, 1).unwrap();
        let loss = tape.sum(&y);
        tape.backward(&loss).unwrap();

        // Independent route: conv2d_transpose applied to the upstream
        // gradient (all ones) with the same kernel array.
        let t2 = Tape::inference();
        let ones = Tensor::new(y.shape(), vec![1.0; y.numel()]).unwrap();
        let w_t = Tensor::new(vec![3, 2, 4, 4], w.to_vec()).unwrap();
        let dx = t2.conv2d_transpose(&ones, &w_t, 2, 1).unwrap();
        let analytic = x.grad().unwrap();
        for (a, b) in analytic.iter().zip(dx.values().iter()) {
            assert!((a - b).abs() < 1e-8);
        }
    }

    #[test]
    fn batchnorm_normalizes_per_channel() {
        use crate::rng::substream;
        use rand::Rng;
        let mut rng = substream(42, 0);
        let (b, c, s) = (4, 3, 5);
        let x = Tensor::new(
            vec![b, c, s, s],
            (0..b * c * s * s).map(|_| rng.random_range(-2.0..5.0)).collect(),
        )
        .unwrap();
        let gamma = Tensor::new(vec![c], vec![1.0; c]).unwrap();
        let beta = Tensor::new(vec![c], vec![0.0; c]).unwrap();
        let stats = RefCell::new(RunningStats::new(c));
        let tape = Tape::inference();
        let y = tape.batchnorm2d(&x, &gamma, &beta, &stats, Mode::Train).unwrap();

        let yv = y.to_vec();
        let plane = s * s;
        let m = (b * plane) as f64;
        for ch in 0..c {
            let mut mean = 0.0;
            let mut var = 0.0;
            for n in 0..b {
                let base = (n * c + ch) * plane;
                for &v in &yv[base..base + plane] {
                    mean += v;
                }
            }
            mean /= m;
            for n in 0..b {
                let base = (n * c + ch) * plane;
                for &v in &yv[base..base + plane] {
                    var += (v - mean) * (v - mean);
                }
            }
            var /= m;
            assert!(mean.abs() < 1e-6, "channel {ch} mean {mean}");
            assert!((var - 1.0).abs() < 1e-3, "channel {ch} var {var}");
        }
        // Running stats moved away from their init.
        assert!(stats.borrow().mean.iter().any(|&v| v != 0.0));
    }

    #[test]
    fn batchnorm_eval_uses_running_stats() {
        let x = Tensor::new(vec![2, 1, 1, 1], vec![10.0, 20.0]).unwrap();
        let gamma = Tensor::new(vec![1], vec![1.0]).unwrap();
        let beta = Tensor::new(vec![1], vec![0.0]).unwrap();
        let stats = RefCell::new(RunningStats::new(1));
        let tape = Tape::inference();
        let y_train = tape.batchnorm2d(&x, &gamma, &beta, &stats, Mode::Train).unwrap();
        let y_eval = tape.batchnorm2d(&x, &gamma, &beta, &stats, Mode::Eval).unwrap();
        assert_ne!(y_train.to_vec(), y_eval.to_vec());
    }

    #[test]
    fn log_rejects_non_positive() {
        let tape = Tape::new();
        let x = param(vec![2], vec![0.5, -0.1]);
        assert!(matches!(tape.log(&x), Err(AdError::Domain(_))));
    }

    #[test]
    fn backward_requires_scalar() {
        let tape = Tape::new();
        let x = param(vec![2], vec![1.0, 2.0]);
        let y = tape.add(&x, &x).unwrap();
        assert!(matches!(tape.backward(&y), Err(AdError::NotScalar(_))));
    }

    #[test]
    fn inference_tape_records_nothing() {
        let tape = Tape::inference();
        let x = param(vec![2], vec![1.0, 2.0]);
        let y = tape.mul(&x, &x).unwrap();
        assert!(!y.requires_grad());
        assert_eq!(tape.num_records(), 0);
    }

    #[test]
    fn softmax_rows_sum_to_one() {
        let p = row_softmax(&[1.0, 2.0, 3.0, -1.0, 0.0, 1.0], 2, 3);
        for r in 0..2 {
            let s: f64 = p[r * 3..(r + 1) * 3].iter().sum();
            assert!((s - 1.0).abs() < 1e-12);
        }
    }
}
