//! Reverse-mode automatic differentiation on a recorded tape.
//!
//! Every operation appends a node holding its output value and the inputs it
//! read. [`Tape::gradients`] walks the nodes backwards from a scalar root and
//! accumulates vector-Jacobian products into the requested leaves.
//!
//! ```
//! use frontal_core::autodiff::Tape;
//! use frontal_core::Tensor;
//!
//! let mut tape = Tape::new();
//! let x = tape.param(Tensor::scalar(3.0));
//! let y = tape.mul(x, x).unwrap();
//! let grads = tape.backward(y).unwrap();
//! assert_eq!(grads.get(x).unwrap(), &[6.0]);
//! ```

mod check;
pub(crate) mod conv;

pub use check::{grad_check, grad_check_many};

use crate::error::{Error, Result};
use crate::tensor::Tensor;
use conv::Geometry;

/// Handle to a node on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Var(usize);

#[derive(Debug, Clone)]
enum Op {
    Constant,
    Param,
    Linear { x: Var, w: Var, b: Var },
    Conv2d { x: Var, k: Var, geom: Geometry },
    Deconv2d { x: Var, k: Var, geom: Geometry },
    AddBias { x: Var, b: Var },
    Upsample2x { x: Var },
    Elu { x: Var },
    Tanh { x: Var },
    Add { a: Var, b: Var },
    Sub { a: Var, b: Var },
    Mul { a: Var, b: Var },
    Scale { x: Var, factor: f64 },
    Reshape { x: Var },
    L1Mean { a: Var, b: Var },
    Sum { x: Var },
}

impl Op {
    fn inputs(&self) -> Vec<Var> {
        match *self {
            Op::Constant | Op::Param => vec![],
            Op::Linear { x, w, b } => vec![x, w, b],
            Op::Conv2d { x, k, .. } | Op::Deconv2d { x, k, .. } => vec![x, k],
            Op::AddBias { x, b } => vec![x, b],
            Op::Add { a, b } | Op::Sub { a, b } | Op::Mul { a, b } | Op::L1Mean { a, b } => vec![a, b],
            Op::Upsample2x { x }
            | Op::Elu { x }
            | Op::Tanh { x }
            | Op::Scale { x, .. }
            | Op::Reshape { x }
            | Op::Sum { x } => vec![x],
        }
    }
}

#[derive(Debug)]
struct Node {
    value: Tensor,
    op: Op,
}

#[derive(Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

/// Gradients produced by a backward pass, indexed by [`Var`].
#[derive(Debug, Clone)]
pub struct Gradients {
    grads: Vec<Option<Vec<f64>>>,
}

impl Gradients {
    pub fn get(&self, v: Var) -> Option<&[f64]> {
        self.grads.get(v.0).and_then(|g| g.as_deref())
    }

    pub fn take(&mut self, v: Var) -> Option<Vec<f64>> {
        self.grads.get_mut(v.0).and_then(Option::take)
    }
}

fn same_shape(op: &str, a: &Tensor, b: &Tensor) -> Result<()> {
    if a.shape() != b.shape() {
        return Err(Error::shape(format!(
            "{op}: shapes {:?} and {:?} differ",
            a.shape(),
            b.shape()
        )));
    }
    Ok(())
}

fn dims4(op: &str, t: &Tensor) -> Result<[usize; 4]> {
    match *t.shape() {
        [n, c, h, w] => Ok([n, c, h, w]),
        ref s => Err(Error::shape(format!("{op}: expected a 4-D tensor, got {s:?}"))),
    }
}

fn add_into(dst: &mut Option<Vec<f64>>, src: &[f64]) {
    match dst {
        Some(d) => d.iter_mut().zip(src).for_each(|(a, b)| *a += b),
        None => *dst = Some(src.to_vec()),
    }
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn is_param(&self, v: Var) -> bool {
        matches!(self.nodes[v.0].op, Op::Param)
    }

    fn push(&mut self, value: Tensor, op: Op) -> Var {
        self.nodes.push(Node { value, op });
        Var(self.nodes.len() - 1)
    }

    /// Input that never receives a gradient.
    pub fn constant(&mut self, t: Tensor) -> Var {
        self.push(t, Op::Constant)
    }

    /// Differentiable leaf.
    pub fn param(&mut self, t: Tensor) -> Var {
        self.push(t, Op::Param)
    }

    /// `x · w + b` for `x: [N, in]`, `w: [in, out]`, `b: [out]`.
    pub fn linear(&mut self, x: Var, w: Var, b: Var) -> Result<Var> {
        let (xv, wv, bv) = (self.value(x), self.value(w), self.value(b));
        let (n, inner) = match *xv.shape() {
            [n, i] => (n, i),
            ref s => return Err(Error::shape(format!("linear: input must be 2-D, got {s:?}"))),
        };
        let out = match *wv.shape() {
            [i, o] if i == inner => o,
            ref s => {
                return Err(Error::shape(format!(
                    "linear: weight {s:?} incompatible with input {:?}",
                    xv.shape()
                )))
            }
        };
        if bv.shape() != [out] {
            return Err(Error::shape(format!("linear: bias {:?}, expected [{out}]", bv.shape())));
        }
        let (xd, wd, bd) = (xv.data(), wv.data(), bv.data());
        let mut y = Vec::with_capacity(n * out);
        for r in 0..n {
            let mut row = bd.to_vec();
            for i in 0..inner {
                let xi = xd[r * inner + i];
                for (o, wv) in row.iter_mut().zip(&wd[i * out..(i + 1) * out]) {
                    *o += xi * wv;
                }
            }
            y.extend(row);
        }
        let value = Tensor::new(vec![n, out], y)?;
        Ok(self.push(value, Op::Linear { x, w, b }))
    }

    /// Cross-correlation of `x: [N,C,H,W]` with `k: [F,C,k,k]`.
    pub fn conv2d(&mut self, x: Var, k: Var, stride: usize, pad: usize) -> Result<Var> {
        let [n, c, h, w] = dims4("conv2d", self.value(x))?;
        let [f, kc, kh, kw] = dims4("conv2d kernel", self.value(k))?;
        if kc != c || kh != kw {
            return Err(Error::shape(format!(
                "conv2d: kernel {:?} incompatible with input {:?}",
                self.value(k).shape(),
                self.value(x).shape()
            )));
        }
        let out_h = conv_extent(h, kh, stride, pad)?;
        let out_w = conv_extent(w, kw, stride, pad)?;
        let geom = Geometry {
            batch: n,
            small_c: f,
            big_c: c,
            small_h: out_h,
            small_w: out_w,
            big_h: h,
            big_w: w,
            k: kh,
            stride,
            pad,
        };
        let mut out = vec![0.0; n * f * out_h * out_w];
        geom.small_from_big(self.value(x).data(), self.value(k).data(), &mut out);
        let value = Tensor::new(vec![n, f, out_h, out_w], out)?;
        Ok(self.push(value, Op::Conv2d { x, k, geom }))
    }

    /// Transposed convolution of `x: [N,C,H,W]` with `k: [C,F,k,k]`.
    pub fn deconv2d(&mut self, x: Var, k: Var, stride: usize, pad: usize) -> Result<Var> {
        let [n, c, h, w] = dims4("deconv2d", self.value(x))?;
        let [kc, f, kh, kw] = dims4("deconv2d kernel", self.value(k))?;
        if kc != c || kh != kw {
            return Err(Error::shape(format!(
                "deconv2d: kernel {:?} incompatible with input {:?}",
                self.value(k).shape(),
                self.value(x).shape()
            )));
        }
        let out_h = deconv_extent(h, kh, stride, pad)?;
        let out_w = deconv_extent(w, kw, stride, pad)?;
        let geom = Geometry {
            batch: n,
            small_c: c,
            big_c: f,
            small_h: h,
            small_w: w,
            big_h: out_h,
            big_w: out_w,
            k: kh,
            stride,
            pad,
        };
        let mut out = vec![0.0; n * f * out_h * out_w];
        geom.big_from_small(self.value(x).data(), self.value(k).data(), &mut out);
        let value = Tensor::new(vec![n, f, out_h, out_w], out)?;
        Ok(self.push(value, Op::Deconv2d { x, k, geom }))
    }

    /// Adds `b[c]` to every position of channel `c` of `x: [N,C,...]`.
    pub fn add_bias(&mut self, x: Var, b: Var) -> Result<Var> {
        let xv = self.value(x);
        let shape = xv.shape();
        if shape.len() < 2 || self.value(b).shape() != [shape[1]] {
            return Err(Error::shape(format!(
                "add_bias: bias {:?} for input {:?}",
                self.value(b).shape(),
                shape
            )));
        }
        let c = shape[1];
        let plane: usize = shape[2..].iter().product();
        let bd = self.value(b).data();
        let mut out = xv.data().to_vec();
        for (i, chunk) in out.chunks_mut(plane).enumerate() {
            let bias = bd[i % c];
            chunk.iter_mut().for_each(|v| *v += bias);
        }
        let value = Tensor::new(shape.to_vec(), out)?;
        Ok(self.push(value, Op::AddBias { x, b }))
    }

    /// Nearest-neighbour ×2 upsampling of `[N,C,H,W]`.
    pub fn upsample2x(&mut self, x: Var) -> Result<Var> {
        let [n, c, h, w] = dims4("upsample2x", self.value(x))?;
        let src = self.value(x).data();
        let (oh, ow) = (2 * h, 2 * w);
        let mut out = vec![0.0; n * c * oh * ow];
        for plane in 0..n * c {
            let s = &src[plane * h * w..(plane + 1) * h * w];
            let d = &mut out[plane * oh * ow..(plane + 1) * oh * ow];
            for i in 0..oh {
                for j in 0..ow {
                    d[i * ow + j] = s[(i / 2) * w + j / 2];
                }
            }
        }
        let value = Tensor::new(vec![n, c, oh, ow], out)?;
        Ok(self.push(value, Op::Upsample2x { x }))
    }

    /// ELU with α = 1.
    pub fn elu(&mut self, x: Var) -> Result<Var> {
        let xv = self.value(x);
        let out = xv.data().iter().map(|&v| if v >= 0.0 { v } else { v.exp_m1() }).collect();
        let value = Tensor::new(xv.shape().to_vec(), out)?;
        Ok(self.push(value, Op::Elu { x }))
    }

    pub fn tanh(&mut self, x: Var) -> Result<Var> {
        let xv = self.value(x);
        let out = xv.data().iter().map(|v| v.tanh()).collect();
        let value = Tensor::new(xv.shape().to_vec(), out)?;
        Ok(self.push(value, Op::Tanh { x }))
    }

    fn zip_with(&mut self, name: &str, a: Var, b: Var, f: impl Fn(f64, f64) -> f64, op: Op) -> Result<Var> {
        let (av, bv) = (self.value(a), self.value(b));
        same_shape(name, av, bv)?;
        let out = av.data().iter().zip(bv.data()).map(|(&x, &y)| f(x, y)).collect();
        let value = Tensor::new(av.shape().to_vec(), out)?;
        Ok(self.push(value, op))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.zip_with("add", a, b, |x, y| x + y, Op::Add { a, b })
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.zip_with("sub", a, b, |x, y| x - y, Op::Sub { a, b })
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.zip_with("mul", a, b, |x, y| x * y, Op::Mul { a, b })
    }

    /// Multiplies by a constant that is not itself differentiated.
    pub fn scale(&mut self, x: Var, factor: f64) -> Result<Var> {
        let xv = self.value(x);
        let out = xv.data().iter().map(|v| v * factor).collect();
        let value = Tensor::new(xv.shape().to_vec(), out)?;
        Ok(self.push(value, Op::Scale { x, factor }))
    }

    pub fn reshape(&mut self, x: Var, shape: &[usize]) -> Result<Var> {
        let value = self.value(x).clone().reshape(shape.to_vec())?;
        Ok(self.push(value, Op::Reshape { x }))
    }

    /// Mean absolute difference; the subgradient at ties is 0.
    pub fn l1_mean(&mut self, a: Var, b: Var) -> Result<Var> {
        let (av, bv) = (self.value(a), self.value(b));
        same_shape("l1_mean", av, bv)?;
        let total: f64 = av.data().iter().zip(bv.data()).map(|(x, y)| (x - y).abs()).sum();
        let value = Tensor::scalar(total / av.len() as f64);
        Ok(self.push(value, Op::L1Mean { a, b }))
    }

    pub fn sum(&mut self, x: Var) -> Result<Var> {
        let value = Tensor::scalar(self.value(x).data().iter().sum());
        Ok(self.push(value, Op::Sum { x }))
    }

    /// Gradients of `root` with respect to every parameter leaf, consuming the tape.
    ///
    /// Parameters the root does not depend on receive an all-zero gradient.
    pub fn backward(self, root: Var) -> Result<Gradients> {
        let params: Vec<Var> = (0..self.nodes.len())
            .map(Var)
            .filter(|&v| self.is_param(v))
            .collect();
        self.gradients(root, &params)
    }

    /// Gradients of `root` with respect to `wrt` only. Work is restricted to
    /// nodes on some path between `wrt` and `root`, so several roots can share
    /// one forward pass.
    pub fn gradients(&self, root: Var, wrt: &[Var]) -> Result<Gradients> {
        let root_val = self.value(root);
        if !root_val.is_scalar() {
            return Err(Error::Contract(format!(
                "backward needs a scalar root, got shape {:?}",
                root_val.shape()
            )));
        }
        let mut relevant = vec![false; root.0 + 1];
        for v in wrt {
            if v.0 <= root.0 {
                relevant[v.0] = true;
            }
        }
        for i in 0..=root.0 {
            if !relevant[i] {
                relevant[i] = self.nodes[i].op.inputs().iter().any(|v| relevant[v.0]);
            }
        }

        let mut grads: Vec<Option<Vec<f64>>> = vec![None; self.nodes.len()];
        grads[root.0] = Some(vec![1.0]);
        for i in (0..=root.0).rev() {
            if !relevant[i] || matches!(self.nodes[i].op, Op::Param | Op::Constant) {
                continue;
            }
            let Some(upstream) = grads[i].take() else {
                continue;
            };
            self.backprop_node(i, &upstream, &relevant, &mut grads);
            grads[i] = Some(upstream);
        }

        let mut out = vec![None; self.nodes.len()];
        for v in wrt {
            let g = grads[v.0]
                .take()
                .unwrap_or_else(|| vec![0.0; self.value(*v).len()]);
            out[v.0] = Some(g);
        }
        Ok(Gradients { grads: out })
    }

    fn backprop_node(&self, i: usize, dy: &[f64], relevant: &[bool], grads: &mut [Option<Vec<f64>>]) {
        let node = &self.nodes[i];
        let want = |v: Var| relevant[v.0];
        match node.op {
            Op::Constant | Op::Param => {}
            Op::Linear { x, w, b } => {
                let (xv, wv) = (self.value(x), self.value(w));
                let (n, inner) = (xv.shape()[0], xv.shape()[1]);
                let out = wv.shape()[1];
                if want(x) {
                    let mut dx = vec![0.0; n * inner];
                    for r in 0..n {
                        let dyr = &dy[r * out..(r + 1) * out];
                        for ii in 0..inner {
                            let wr = &wv.data()[ii * out..(ii + 1) * out];
                            dx[r * inner + ii] = dyr.iter().zip(wr).map(|(a, b)| a * b).sum();
                        }
                    }
                    add_into(&mut grads[x.0], &dx);
                }
                if want(w) {
                    let mut dw = vec![0.0; inner * out];
                    for r in 0..n {
                        let dyr = &dy[r * out..(r + 1) * out];
                        for ii in 0..inner {
                            let xi = xv.data()[r * inner + ii];
                            for (g, d) in dw[ii * out..(ii + 1) * out].iter_mut().zip(dyr) {
                                *g += xi * d;
                            }
                        }
                    }
                    add_into(&mut grads[w.0], &dw);
                }
                if want(b) {
                    let mut db = vec![0.0; out];
                    for row in dy.chunks(out) {
                        db.iter_mut().zip(row).for_each(|(g, d)| *g += d);
                    }
                    add_into(&mut grads[b.0], &db);
                }
            }
            Op::Conv2d { x, k, geom } => {
                if want(x) {
                    let mut dx = vec![0.0; self.value(x).len()];
                    geom.big_from_small(dy, self.value(k).data(), &mut dx);
                    add_into(&mut grads[x.0], &dx);
                }
                if want(k) {
                    let mut dk = vec![0.0; self.value(k).len()];
                    geom.kernel_grad(dy, self.value(x).data(), &mut dk);
                    add_into(&mut grads[k.0], &dk);
                }
            }
            Op::Deconv2d { x, k, geom } => {
                if want(x) {
                    let mut dx = vec![0.0; self.value(x).len()];
                    geom.small_from_big(dy, self.value(k).data(), &mut dx);
                    add_into(&mut grads[x.0], &dx);
                }
                if want(k) {
                    let mut dk = vec![0.0; self.value(k).len()];
                    geom.kernel_grad(self.value(x).data(), dy, &mut dk);
                    add_into(&mut grads[k.0], &dk);
                }
            }
            Op::AddBias { x, b } => {
                if want(x) {
                    add_into(&mut grads[x.0], dy);
                }
                if want(b) {
                    let shape = self.value(x).shape();
                    let c = shape[1];
                    let plane: usize = shape[2..].iter().product();
                    let mut db = vec![0.0; c];
                    for (idx, chunk) in dy.chunks(plane).enumerate() {
                        db[idx % c] += chunk.iter().sum::<f64>();
                    }
                    add_into(&mut grads[b.0], &db);
                }
            }
            Op::Upsample2x { x } => {
                if want(x) {
                    let [n, c, h, w] = dims4("upsample2x", self.value(x)).expect("recorded shape");
                    let (oh, ow) = (2 * h, 2 * w);
                    let mut dx = vec![0.0; n * c * h * w];
                    for plane in 0..n * c {
                        let src = &dy[plane * oh * ow..(plane + 1) * oh * ow];
                        let dst = &mut dx[plane * h * w..(plane + 1) * h * w];
                        for i in 0..oh {
                            for j in 0..ow {
                                dst[(i / 2) * w + j / 2] += src[i * ow + j];
                            }
                        }
                    }
                    add_into(&mut grads[x.0], &dx);
                }
            }
            Op::Elu { x } => {
                let dx: Vec<f64> = self
                    .value(x)
                    .data()
                    .iter()
                    .zip(dy)
                    .map(|(&v, d)| if v >= 0.0 { *d } else { d * v.exp() })
                    .collect();
                add_into(&mut grads[x.0], &dx);
            }
            Op::Tanh { x: input } => {
                let dx: Vec<f64> = node
                    .value
                    .data()
                    .iter()
                    .zip(dy)
                    .map(|(y, d)| d * (1.0 - y * y))
                    .collect();
                add_into(&mut grads[input.0], &dx);
            }
            Op::Add { a, b } => {
                if want(a) {
                    add_into(&mut grads[a.0], dy);
                }
                if want(b) {
                    add_into(&mut grads[b.0], dy);
                }
            }
            Op::Sub { a, b } => {
                if want(a) {
                    add_into(&mut grads[a.0], dy);
                }
                if want(b) {
                    let neg: Vec<f64> = dy.iter().map(|d| -d).collect();
                    add_into(&mut grads[b.0], &neg);
                }
            }
            Op::Mul { a, b } => {
                let (av, bv) = (self.value(a).data(), self.value(b).data());
                if want(a) {
                    let da: Vec<f64> = dy.iter().zip(bv).map(|(d, y)| d * y).collect();
                    add_into(&mut grads[a.0], &da);
                }
                if want(b) {
                    let db: Vec<f64> = dy.iter().zip(av).map(|(d, x)| d * x).collect();
                    add_into(&mut grads[b.0], &db);
                }
            }
            Op::Scale { x, factor } => {
                let dx: Vec<f64> = dy.iter().map(|d| d * factor).collect();
                add_into(&mut grads[x.0], &dx);
            }
            Op::Reshape { x } => add_into(&mut grads[x.0], dy),
            Op::L1Mean { a, b } => {
                let (av, bv) = (self.value(a).data(), self.value(b).data());
                let scale = dy[0] / av.len() as f64;
                let da: Vec<f64> = av
                    .iter()
                    .zip(bv)
                    .map(|(x, y)| {
                        let diff = x - y;
                        if diff > 0.0 {
                            scale
                        } else if diff < 0.0 {
                            -scale
                        } else {
                            0.0
                        }
                    })
                    .collect();
                if want(b) {
                    let db: Vec<f64> = da.iter().map(|v| -v).collect();
                    add_into(&mut grads[b.0], &db);
                }
                if want(a) {
                    add_into(&mut grads[a.0], &da);
                }
            }
            Op::Sum { x } => {
                let dx = vec![dy[0]; self.value(x).len()];
                add_into(&mut grads[x.0], &dx);
            }
        }
    }
}

/// Output extent of a convolution; the division must be exact.
pub fn conv_extent(input: usize, k: usize, stride: usize, pad: usize) -> Result<usize> {
    if stride == 0 {
        return Err(Error::shape("stride must be at least 1"));
    }
    let padded = input + 2 * pad;
    if k > padded {
        return Err(Error::shape(format!("kernel {k} exceeds padded extent {padded}")));
    }
    if !(padded - k).is_multiple_of(stride) {
        return Err(Error::shape(format!(
            "extent {input} with kernel {k}, stride {stride}, pad {pad} does not tile exactly"
        )));
    }
    Ok((padded - k) / stride + 1)
}

/// Output extent of a transposed convolution, `(input-1)*stride - 2*pad + k`.
pub fn deconv_extent(input: usize, k: usize, stride: usize, pad: usize) -> Result<usize> {
    if stride == 0 {
        return Err(Error::shape("stride must be at least 1"));
    }
    if input == 0 {
        return Err(Error::shape("transposed convolution of an empty extent"));
    }
    let grown = (input - 1) * stride + k;
    if grown <= 2 * pad {
        return Err(Error::shape(format!(
            "transposed extent for input {input}, kernel {k}, stride {stride}, pad {pad} is not positive"
        )));
    }
    Ok(grown - 2 * pad)
}
