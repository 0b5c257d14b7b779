//! Forward constructors and backward rules for every tape op.

use super::conv;
use super::{Node, Op, Scalar, Tensor};
use crate::error::{Error, Result};

impl<'t, T: Scalar> Tensor<'t, T> {
    fn binary_same_shape(&self, rhs: &Tensor<'t, T>, what: &str) -> Result<()> {
        if self.shape() != rhs.shape() {
            return Err(Error::Shape(format!(
                "{what}: left shape {:?} vs right shape {:?}",
                self.shape(),
                rhs.shape()
            )));
        }
        Ok(())
    }

    pub fn add(&self, rhs: &Tensor<'t, T>) -> Result<Tensor<'t, T>> {
        self.binary_same_shape(rhs, "add")?;
        let value = {
            let nodes = self.tape.nodes.borrow();
            zip_map(&nodes[self.id].value, &nodes[rhs.id].value, |a, b| a + b)
        };
        let ng = self.requires_grad() || rhs.requires_grad();
        Ok(self
            .tape
            .push(self.shape().to_vec(), value, ng, Op::Add(self.id, rhs.id)))
    }

    pub fn sub(&self, rhs: &Tensor<'t, T>) -> Result<Tensor<'t, T>> {
        self.binary_same_shape(rhs, "sub")?;
        let value = {
            let nodes = self.tape.nodes.borrow();
            zip_map(&nodes[self.id].value, &nodes[rhs.id].value, |a, b| a - b)
        };
        let ng = self.requires_grad() || rhs.requires_grad();
        Ok(self
            .tape
            .push(self.shape().to_vec(), value, ng, Op::Sub(self.id, rhs.id)))
    }

    /// Elementwise (Hadamard) product.
    pub fn mul(&self, rhs: &Tensor<'t, T>) -> Result<Tensor<'t, T>> {
        self.binary_same_shape(rhs, "mul")?;
        let value = {
            let nodes = self.tape.nodes.borrow();
            zip_map(&nodes[self.id].value, &nodes[rhs.id].value, |a, b| a * b)
        };
        let ng = self.requires_grad() || rhs.requires_grad();
        Ok(self
            .tape
            .push(self.shape().to_vec(), value, ng, Op::Mul(self.id, rhs.id)))
    }

    pub fn scale(&self, factor: T) -> Tensor<'t, T> {
        let value = self.value().iter().map(|&x| x * factor).collect();
        self.tape.push(
            self.shape().to_vec(),
            value,
            self.requires_grad(),
            Op::Scale(self.id, factor),
        )
    }

    pub fn exp(&self) -> Tensor<'t, T> {
        let value = self.value().iter().map(|&x| x.exp()).collect();
        self.tape.push(
            self.shape().to_vec(),
            value,
            self.requires_grad(),
            Op::Exp(self.id),
        )
    }

    /// `sqrt(x + eps)`; the epsilon keeps the gradient finite at zero.
    pub fn sqrt_eps(&self, eps: T) -> Tensor<'t, T> {
        let value = self.value().iter().map(|&x| (x + eps).sqrt()).collect();
        self.tape.push(
            self.shape().to_vec(),
            value,
            self.requires_grad(),
            Op::SqrtEps(self.id, eps),
        )
    }

    pub fn relu(&self) -> Tensor<'t, T> {
        let value = self
            .value()
            .iter()
            .map(|&x| if x > T::zero() { x } else { T::zero() })
            .collect();
        self.tape.push(
            self.shape().to_vec(),
            value,
            self.requires_grad(),
            Op::Relu(self.id),
        )
    }

    pub fn sigmoid(&self) -> Tensor<'t, T> {
        let value = self.value().iter().map(|&x| sigmoid(x)).collect();
        self.tape.push(
            self.shape().to_vec(),
            value,
            self.requires_grad(),
            Op::Sigmoid(self.id),
        )
    }

    /// Sum over all elements, producing a scalar (shape `[1]`).
    pub fn sum_all(&self) -> Tensor<'t, T> {
        let s = self.value().iter().copied().sum();
        self.tape
            .push(vec![1], vec![s], self.requires_grad(), Op::SumAll(self.id))
    }

    /// Mean over all elements, producing a scalar.
    pub fn mean_all(&self) -> Tensor<'t, T> {
        let n = T::from_f64(self.numel() as f64);
        self.sum_all().scale(T::one() / n)
    }

    /// Row sums of a rank-2 tensor: `[N, D] -> [N]`.
    pub fn sum_rows(&self) -> Result<Tensor<'t, T>> {
        if self.shape().len() != 2 {
            return Err(Error::Shape(format!(
                "sum_rows expects rank-2 input, got shape {:?}",
                self.shape()
            )));
        }
        let (n, d) = (self.shape()[0], self.shape()[1]);
        let value = {
            let v = self.value();
            (0..n).map(|i| v[i * d..(i + 1) * d].iter().copied().sum()).collect()
        };
        Ok(self
            .tape
            .push(vec![n], value, self.requires_grad(), Op::SumRows(self.id)))
    }

    /// View with a new shape; element count must match.
    pub fn reshape(&self, shape: &[usize]) -> Result<Tensor<'t, T>> {
        let numel: usize = shape.iter().product();
        if numel != self.numel() {
            return Err(Error::Shape(format!(
                "reshape from {:?} to {:?} changes element count",
                self.shape(),
                shape
            )));
        }
        Ok(self.tape.push(
            shape.to_vec(),
            self.to_vec(),
            self.requires_grad(),
            Op::Reshape(self.id),
        ))
    }

    /// `[N, C, H, W] -> [N, C*H*W]`.
    pub fn flatten(&self) -> Result<Tensor<'t, T>> {
        if self.shape().len() != 4 {
            return Err(Error::Shape(format!(
                "flatten expects NCHW input, got shape {:?}",
                self.shape()
            )));
        }
        let n = self.shape()[0];
        let rest: usize = self.shape()[1..].iter().product();
        self.reshape(&[n, rest])
    }

    /// `[N, C*H*W] -> [N, C, H, W]`.
    pub fn unflatten(&self, c: usize, h: usize, w: usize) -> Result<Tensor<'t, T>> {
        if self.shape().len() != 2 {
            return Err(Error::Shape(format!(
                "unflatten expects rank-2 input, got shape {:?}",
                self.shape()
            )));
        }
        let n = self.shape()[0];
        self.reshape(&[n, c, h, w])
    }

    /// `input @ weight^T + bias` for `input [N, Din]`, `weight [Dout, Din]`,
    /// `bias [Dout]`.
    pub fn dense(&self, weight: &Tensor<'t, T>, bias: &Tensor<'t, T>) -> Result<Tensor<'t, T>> {
        if self.shape().len() != 2 || weight.shape().len() != 2 {
            return Err(Error::Shape(format!(
                "dense expects rank-2 input and weight, got {:?} and {:?}",
                self.shape(),
                weight.shape()
            )));
        }
        let (n, din) = (self.shape()[0], self.shape()[1]);
        let (dout, win) = (weight.shape()[0], weight.shape()[1]);
        if din != win {
            return Err(Error::Shape(format!(
                "dense: input shape {:?} incompatible with weight shape {:?}",
                self.shape(),
                weight.shape()
            )));
        }
        if bias.shape() != [dout] {
            return Err(Error::Shape(format!(
                "dense: bias shape {:?} should be [{dout}]",
                bias.shape()
            )));
        }
        let mut out = vec![T::zero(); n * dout];
        {
            let nodes = self.tape.nodes.borrow();
            let x = &nodes[self.id].value;
            let w = &nodes[weight.id].value;
            let b = &nodes[bias.id].value;
            for row in out.chunks_mut(dout) {
                row.copy_from_slice(b);
            }
            // out += x [N,Din] @ w^T [Din,Dout]
            T::gemm(false, true, n, din, dout, T::one(), x, w, T::one(), &mut out);
        }
        let ng = self.requires_grad() || weight.requires_grad() || bias.requires_grad();
        Ok(self.tape.push(
            vec![n, dout],
            out,
            ng,
            Op::Dense {
                input: self.id,
                weight: weight.id,
                bias: bias.id,
            },
        ))
    }

    /// 2-D convolution with zero padding `pad = kernel/2` ("same" at stride 1,
    /// ceil-halving at stride 2). `input [N,C,H,W]`, `kernel [F,C,kh,kw]`,
    /// `bias [F]`.
    pub fn conv2d(
        &self,
        kernel: &Tensor<'t, T>,
        bias: &Tensor<'t, T>,
        stride: usize,
    ) -> Result<Tensor<'t, T>> {
        conv::conv2d_op(self, kernel, bias, stride)
    }

    /// Nearest-neighbour 2x spatial upsampling of NCHW input.
    pub fn upsample2(&self) -> Result<Tensor<'t, T>> {
        let [n, c, h, w] = nchw(self)?;
        let mut out = vec![T::zero(); n * c * 4 * h * w];
        {
            let v = self.value();
            let (oh, ow) = (2 * h, 2 * w);
            for nc in 0..n * c {
                let src = &v[nc * h * w..(nc + 1) * h * w];
                let dst = &mut out[nc * oh * ow..(nc + 1) * oh * ow];
                for i in 0..h {
                    for j in 0..w {
                        let x = src[i * w + j];
                        let base = 2 * i * ow + 2 * j;
                        dst[base] = x;
                        dst[base + 1] = x;
                        dst[base + ow] = x;
                        dst[base + ow + 1] = x;
                    }
                }
            }
        }
        Ok(self.tape.push(
            vec![n, c, 2 * h, 2 * w],
            out,
            self.requires_grad(),
            Op::Upsample2(self.id),
        ))
    }

    /// 2x2 mean-pool downsampling of NCHW input; spatial extents must be even.
    pub fn downsample2(&self) -> Result<Tensor<'t, T>> {
        let [n, c, h, w] = nchw(self)?;
        if h % 2 != 0 || w % 2 != 0 {
            return Err(Error::Shape(format!(
                "downsample2 requires even spatial extents, got shape {:?}",
                self.shape()
            )));
        }
        let (oh, ow) = (h / 2, w / 2);
        let quarter = T::from_f64(0.25);
        let mut out = vec![T::zero(); n * c * oh * ow];
        {
            let v = self.value();
            for nc in 0..n * c {
                let src = &v[nc * h * w..(nc + 1) * h * w];
                let dst = &mut out[nc * oh * ow..(nc + 1) * oh * ow];
                for i in 0..oh {
                    for j in 0..ow {
                        let base = 2 * i * w + 2 * j;
                        dst[i * ow + j] = (src[base]
                            + src[base + 1]
                            + src[base + w]
                            + src[base + w + 1])
                            * quarter;
                    }
                }
            }
        }
        Ok(self.tape.push(
            vec![n, c, oh, ow],
            out,
            self.requires_grad(),
            Op::Downsample2(self.id),
        ))
    }

    /// Spatial crop of NCHW input starting at `(top, left)`.
    pub fn crop2d(&self, top: usize, left: usize, oh: usize, ow: usize) -> Result<Tensor<'t, T>> {
        let [n, c, h, w] = nchw(self)?;
        if top + oh > h || left + ow > w {
            return Err(Error::Shape(format!(
                "crop2d window {top}+{oh} x {left}+{ow} exceeds input shape {:?}",
                self.shape()
            )));
        }
        let mut out = vec![T::zero(); n * c * oh * ow];
        {
            let v = self.value();
            for nc in 0..n * c {
                let src = &v[nc * h * w..(nc + 1) * h * w];
                let dst = &mut out[nc * oh * ow..(nc + 1) * oh * ow];
                for i in 0..oh {
                    let s = (top + i) * w + left;
                    dst[i * ow..(i + 1) * ow].copy_from_slice(&src[s..s + ow]);
                }
            }
        }
        Ok(self.tape.push(
            vec![n, c, oh, ow],
            out,
            self.requires_grad(),
            Op::Crop2d {
                input: self.id,
                top,
                left,
            },
        ))
    }

    /// Centered crop to `(oh, ow)`.
    pub fn crop2d_center(&self, oh: usize, ow: usize) -> Result<Tensor<'t, T>> {
        let [_, _, h, w] = nchw(self)?;
        if oh > h || ow > w {
            return Err(Error::Shape(format!(
                "crop2d_center target {oh}x{ow} exceeds input shape {:?}",
                self.shape()
            )));
        }
        self.crop2d((h - oh) / 2, (w - ow) / 2, oh, ow)
    }

    /// Mean binary cross-entropy `-[t ln p + (1-t) ln(1-p)]` with predictions
    /// clamped to `[clip, 1-clip]`.
    pub fn bce_loss(&self, target: &Tensor<'t, T>, clip: T) -> Result<Tensor<'t, T>> {
        self.binary_same_shape(target, "bce_loss")?;
        let loss = {
            let nodes = self.tape.nodes.borrow();
            let p = &nodes[self.id].value;
            let t = &nodes[target.id].value;
            if p.iter().chain(t.iter()).any(|x| !x.is_finite()) {
                return Err(Error::Numeric(
                    "bce_loss: non-finite value in prediction or target".into(),
                ));
            }
            let one = T::one();
            let mut acc = T::zero();
            for (&pi, &ti) in p.iter().zip(t.iter()) {
                let pc = clamp(pi, clip, one - clip);
                acc += -(ti * pc.ln() + (one - ti) * (one - pc).ln());
            }
            acc / T::from_f64(p.len() as f64)
        };
        let ng = self.requires_grad() || target.requires_grad();
        Ok(self.tape.push(
            vec![1],
            vec![loss],
            ng,
            Op::Bce {
                pred: self.id,
                target: target.id,
                clip,
            },
        ))
    }

    /// KL divergence of `N(mu, exp(log_var))` from the unit normal, summed
    /// over latent dims and averaged over the batch (rows).
    pub fn kl_unit_normal(&self, log_var: &Tensor<'t, T>) -> Result<Tensor<'t, T>> {
        self.binary_same_shape(log_var, "kl_unit_normal")?;
        if self.shape().len() != 2 {
            return Err(Error::Shape(format!(
                "kl_unit_normal expects rank-2 [batch, dims], got {:?}",
                self.shape()
            )));
        }
        let rows = T::from_f64(self.shape()[0] as f64);
        let loss = {
            let nodes = self.tape.nodes.borrow();
            let mu = &nodes[self.id].value;
            let lv = &nodes[log_var.id].value;
            if lv.iter().any(|x| !x.is_finite()) {
                return Err(Error::Numeric("kl_unit_normal: non-finite log_var".into()));
            }
            let half = T::from_f64(0.5);
            let one = T::one();
            let mut acc = T::zero();
            for (&m, &l) in mu.iter().zip(lv.iter()) {
                acc += half * (m * m + l.exp() - one - l);
            }
            acc / rows
        };
        let ng = self.requires_grad() || log_var.requires_grad();
        Ok(self.tape.push(
            vec![1],
            vec![loss],
            ng,
            Op::KlUnitNormal {
                mu: self.id,
                log_var: log_var.id,
            },
        ))
    }

    /// Mean contrastive loss over a batch of pairwise distances:
    /// `(1-y) * d^2/2 + y * max(0, m-d)^2 / 2`, `y = 0` similar, `y = 1`
    /// dissimilar.
    pub fn contrastive_loss(&self, labels: &[T], margin: T) -> Result<Tensor<'t, T>> {
        if self.shape().len() != 1 || self.numel() != labels.len() {
            return Err(Error::Shape(format!(
                "contrastive_loss: distances shape {:?} vs {} labels",
                self.shape(),
                labels.len()
            )));
        }
        if margin <= T::zero() {
            return Err(Error::InvalidConfig(format!(
                "contrastive margin must be positive, got {margin}"
            )));
        }
        for &y in labels {
            if y != T::zero() && y != T::one() {
                return Err(Error::InvalidPairLabel(y.to_f64()));
            }
        }
        let loss = {
            let d = self.value();
            let mut acc = T::zero();
            for (&di, &y) in d.iter().zip(labels.iter()) {
                acc += contrastive_term(di, y, margin);
            }
            acc / T::from_f64(labels.len() as f64)
        };
        Ok(self.tape.push(
            vec![1],
            vec![loss],
            self.requires_grad(),
            Op::Contrastive {
                dist: self.id,
                labels: labels.to_vec(),
                margin,
            },
        ))
    }
}

/// One pair's contrastive penalty: `(1-y) d^2/2 + y max(0, m-d)^2/2`.
pub(crate) fn contrastive_term<T: Scalar>(d: T, y: T, m: T) -> T {
    let half = T::from_f64(0.5);
    let hinge = (m - d).max(T::zero());
    (T::one() - y) * half * d * d + y * half * hinge * hinge
}

fn sigmoid<T: Scalar>(x: T) -> T {
    let one = T::one();
    if x >= T::zero() {
        one / (one + (-x).exp())
    } else {
        let e = x.exp();
        e / (one + e)
    }
}

fn clamp<T: Scalar>(x: T, lo: T, hi: T) -> T {
    x.max(lo).min(hi)
}

fn zip_map<T: Scalar>(a: &[T], b: &[T], f: impl Fn(T, T) -> T) -> Vec<T> {
    a.iter().zip(b.iter()).map(|(&x, &y)| f(x, y)).collect()
}

fn nchw<T: Scalar>(t: &Tensor<'_, T>) -> Result<[usize; 4]> {
    match t.shape() {
        [n, c, h, w] => Ok([*n, *c, *h, *w]),
        s => Err(Error::Shape(format!("expected NCHW tensor, got shape {s:?}"))),
    }
}

/// Accumulate `contrib` into `grads[id]`, allocating a zero buffer on first
/// touch. Skips nodes that do not participate in differentiation.
fn accumulate<T: Scalar>(
    nodes: &[Node<T>],
    grads: &mut [Option<Vec<T>>],
    id: usize,
    contrib: impl FnOnce(&mut [T]),
) {
    if !nodes[id].needs_grad {
        return;
    }
    let buf = grads[id].get_or_insert_with(|| vec![T::zero(); nodes[id].value.len()]);
    contrib(buf);
}

/// Backward rule dispatch: given node `id` with output gradient `g`, add each
/// parent's contribution into `grads`.
pub(crate) fn propagate<T: Scalar>(
    nodes: &[Node<T>],
    id: usize,
    g: &[T],
    grads: &mut [Option<Vec<T>>],
) {
    let one = T::one();
    match &nodes[id].op {
        Op::Leaf => {}
        Op::Add(a, b) => {
            accumulate(nodes, grads, *a, |buf| add_assign(buf, g));
            accumulate(nodes, grads, *b, |buf| add_assign(buf, g));
        }
        Op::Sub(a, b) => {
            accumulate(nodes, grads, *a, |buf| add_assign(buf, g));
            accumulate(nodes, grads, *b, |buf| {
                for (o, &gi) in buf.iter_mut().zip(g) {
                    *o -= gi;
                }
            });
        }
        Op::Mul(a, b) => {
            let (av, bv) = (&nodes[*a].value, &nodes[*b].value);
            accumulate(nodes, grads, *a, |buf| {
                for ((o, &gi), &bi) in buf.iter_mut().zip(g).zip(bv) {
                    *o += gi * bi;
                }
            });
            accumulate(nodes, grads, *b, |buf| {
                for ((o, &gi), &ai) in buf.iter_mut().zip(g).zip(av) {
                    *o += gi * ai;
                }
            });
        }
        Op::Scale(a, c) => {
            accumulate(nodes, grads, *a, |buf| {
                for (o, &gi) in buf.iter_mut().zip(g) {
                    *o += gi * *c;
                }
            });
        }
        Op::Exp(a) => {
            let out = &nodes[id].value;
            accumulate(nodes, grads, *a, |buf| {
                for ((o, &gi), &y) in buf.iter_mut().zip(g).zip(out) {
                    *o += gi * y;
                }
            });
        }
        Op::SqrtEps(a, _) => {
            let out = &nodes[id].value;
            let half = T::from_f64(0.5);
            accumulate(nodes, grads, *a, |buf| {
                for ((o, &gi), &y) in buf.iter_mut().zip(g).zip(out) {
                    *o += gi * half / y;
                }
            });
        }
        Op::Relu(a) => {
            let x = &nodes[*a].value;
            accumulate(nodes, grads, *a, |buf| {
                for ((o, &gi), &xi) in buf.iter_mut().zip(g).zip(x) {
                    if xi > T::zero() {
                        *o += gi;
                    }
                }
            });
        }
        Op::Sigmoid(a) => {
            let out = &nodes[id].value;
            accumulate(nodes, grads, *a, |buf| {
                for ((o, &gi), &y) in buf.iter_mut().zip(g).zip(out) {
                    *o += gi * y * (one - y);
                }
            });
        }
        Op::SumAll(a) => {
            let gi = g[0];
            accumulate(nodes, grads, *a, |buf| {
                for o in buf.iter_mut() {
                    *o += gi;
                }
            });
        }
        Op::SumRows(a) => {
            let d = nodes[*a].shape[1];
            accumulate(nodes, grads, *a, |buf| {
                for (row, &gi) in g.iter().enumerate() {
                    for o in &mut buf[row * d..(row + 1) * d] {
                        *o += gi;
                    }
                }
            });
        }
        Op::Reshape(a) => {
            accumulate(nodes, grads, *a, |buf| add_assign(buf, g));
        }
        Op::Dense {
            input,
            weight,
            bias,
        } => {
            let (n, din) = (nodes[*input].shape[0], nodes[*input].shape[1]);
            let dout = nodes[*weight].shape[0];
            let x = &nodes[*input].value;
            let w = &nodes[*weight].value;
            accumulate(nodes, grads, *input, |buf| {
                // gx [N,Din] += g [N,Dout] @ w [Dout,Din]
                T::gemm(false, false, n, dout, din, one, g, w, one, buf);
            });
            accumulate(nodes, grads, *weight, |buf| {
                // gw [Dout,Din] += g^T [Dout,N] @ x [N,Din]
                T::gemm(true, false, dout, n, din, one, g, x, one, buf);
            });
            accumulate(nodes, grads, *bias, |buf| {
                for row in g.chunks(dout) {
                    for (o, &gi) in buf.iter_mut().zip(row) {
                        *o += gi;
                    }
                }
            });
        }
        Op::Conv2d {
            input,
            kernel,
            bias,
            stride,
            pad,
        } => {
            conv::conv2d_backward(nodes, id, g, grads, *input, *kernel, *bias, *stride, *pad);
        }
        Op::Upsample2(a) => {
            let sh = &nodes[*a].shape;
            let (nc, h, w) = (sh[0] * sh[1], sh[2], sh[3]);
            let ow = 2 * w;
            accumulate(nodes, grads, *a, |buf| {
                for k in 0..nc {
                    let go = &g[k * 4 * h * w..(k + 1) * 4 * h * w];
                    let gi = &mut buf[k * h * w..(k + 1) * h * w];
                    for i in 0..h {
                        for j in 0..w {
                            let base = 2 * i * ow + 2 * j;
                            gi[i * w + j] +=
                                go[base] + go[base + 1] + go[base + ow] + go[base + ow + 1];
                        }
                    }
                }
            });
        }
        Op::Downsample2(a) => {
            let sh = &nodes[*a].shape;
            let (nc, h, w) = (sh[0] * sh[1], sh[2], sh[3]);
            let (oh, ow) = (h / 2, w / 2);
            let quarter = T::from_f64(0.25);
            accumulate(nodes, grads, *a, |buf| {
                for k in 0..nc {
                    let go = &g[k * oh * ow..(k + 1) * oh * ow];
                    let gi = &mut buf[k * h * w..(k + 1) * h * w];
                    for i in 0..oh {
                        for j in 0..ow {
                            let gq = go[i * ow + j] * quarter;
                            let base = 2 * i * w + 2 * j;
                            gi[base] += gq;
                            gi[base + 1] += gq;
                            gi[base + w] += gq;
                            gi[base + w + 1] += gq;
                        }
                    }
                }
            });
        }
        Op::Crop2d { input, top, left } => {
            let sh = &nodes[*input].shape;
            let (nc, h, w) = (sh[0] * sh[1], sh[2], sh[3]);
            let osh = &nodes[id].shape;
            let (oh, ow) = (osh[2], osh[3]);
            accumulate(nodes, grads, *input, |buf| {
                for k in 0..nc {
                    let go = &g[k * oh * ow..(k + 1) * oh * ow];
                    let gi = &mut buf[k * h * w..(k + 1) * h * w];
                    for i in 0..oh {
                        let s = (top + i) * w + left;
                        for j in 0..ow {
                            gi[s + j] += go[i * ow + j];
                        }
                    }
                }
            });
        }
        Op::Bce { pred, target, clip } => {
            let g0 = g[0];
            let p = &nodes[*pred].value;
            let t = &nodes[*target].value;
            let n = T::from_f64(p.len() as f64);
            let hi = one - *clip;
            accumulate(nodes, grads, *pred, |buf| {
                for ((o, &pi), &ti) in buf.iter_mut().zip(p).zip(t) {
                    // zero outside the clamp window: the clamped composite is flat there
                    if pi >= *clip && pi <= hi {
                        *o += g0 * (pi - ti) / (pi * (one - pi) * n);
                    }
                }
            });
            accumulate(nodes, grads, *target, |buf| {
                for ((o, &pi), _) in buf.iter_mut().zip(p).zip(t) {
                    let pc = clamp(pi, *clip, hi);
                    *o += g0 * ((one - pc).ln() - pc.ln()) / n;
                }
            });
        }
        Op::KlUnitNormal { mu, log_var } => {
            let g0 = g[0];
            let rows = T::from_f64(nodes[*mu].shape[0] as f64);
            let mv = &nodes[*mu].value;
            let lv = &nodes[*log_var].value;
            let half = T::from_f64(0.5);
            accumulate(nodes, grads, *mu, |buf| {
                for (o, &m) in buf.iter_mut().zip(mv) {
                    *o += g0 * m / rows;
                }
            });
            accumulate(nodes, grads, *log_var, |buf| {
                for (o, &l) in buf.iter_mut().zip(lv) {
                    *o += g0 * half * (l.exp() - one) / rows;
                }
            });
        }
        Op::Contrastive {
            dist,
            labels,
            margin,
        } => {
            let g0 = g[0];
            let d = &nodes[*dist].value;
            let n = T::from_f64(labels.len() as f64);
            accumulate(nodes, grads, *dist, |buf| {
                for ((o, &di), &y) in buf.iter_mut().zip(d).zip(labels) {
                    let hinge = (*margin - di).max(T::zero());
                    *o += g0 * ((one - y) * di - y * hinge) / n;
                }
            });
        }
    }
}

fn add_assign<T: Scalar>(out: &mut [T], g: &[T]) {
    for (o, &gi) in out.iter_mut().zip(g) {
        *o += gi;
    }
}
