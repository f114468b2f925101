//! Tape-based reverse-mode differentiation over image tensors.
//!
//! Operations are recorded in evaluation order while the forward pass
//! runs; [`Tape::backward`] walks the record in reverse, accumulating the
//! adjoint of every node it reaches. Images use `[N, H, W, C]` layout so the
//! channel loop is innermost and contiguous.

use super::tensor::{Real, Tensor};
use crate::error::{Error, Result};

/// Handle to a node on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Var(usize);

#[derive(Clone, Copy, Debug)]
enum Op {
    Leaf,
    /// 3x3 convolution, stride 1, zero padding 1.
    Conv3x3 { x: usize, w: usize, b: usize },
    /// Per-pixel affine map (1x1 convolution).
    Pointwise { x: usize, w: usize, b: usize },
    Relu { x: usize },
}

#[derive(Default)]
pub struct Tape<T> {
    ops: Vec<Op>,
    values: Vec<Tensor<T>>,
}

/// Adjoints indexed by node; `None` for nodes the output does not depend on.
pub struct Gradients<T> {
    grads: Vec<Option<Tensor<T>>>,
}

impl<T: Real> Gradients<T> {
    pub fn get(&self, v: Var) -> Option<&Tensor<T>> {
        self.grads[v.0].as_ref()
    }

    pub fn take(&mut self, v: Var) -> Option<Tensor<T>> {
        self.grads[v.0].take()
    }
}

fn dims4(t: &[usize]) -> Result<(usize, usize, usize, usize)> {
    match *t {
        [n, h, w, c] => Ok((n, h, w, c)),
        _ => Err(Error::shape("[N, H, W, C]", format!("{t:?}"))),
    }
}

impl<T: Real> Tape<T> {
    pub fn new() -> Self {
        Self {
            ops: Vec::new(),
            values: Vec::new(),
        }
    }

    fn push(&mut self, op: Op, value: Tensor<T>) -> Var {
        self.ops.push(op);
        self.values.push(value);
        Var(self.ops.len() - 1)
    }

    pub fn leaf(&mut self, value: Tensor<T>) -> Var {
        self.push(Op::Leaf, value)
    }

    pub fn value(&self, v: Var) -> &Tensor<T> {
        &self.values[v.0]
    }

    /// Consumes the tape, keeping only the value of `v`.
    pub fn into_value(mut self, v: Var) -> Tensor<T> {
        self.values.swap_remove(v.0)
    }

    pub fn len(&self) -> usize {
        self.ops.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ops.is_empty()
    }

    pub fn conv3x3(&mut self, x: Var, w: Var, b: Var) -> Result<Var> {
        let (n, h, wd, cin) = dims4(self.value(x).shape())?;
        let cout = self.check_params(w, b, &[3, 3, cin])?;
        let mut out = vec![T::ZERO; n * h * wd * cout];
        conv3x3_forward(
            self.value(x).data(),
            (n, h, wd, cin),
            self.value(w).data(),
            self.value(b).data(),
            cout,
            &mut out,
        );
        let t = Tensor::new(vec![n, h, wd, cout], out)?;
        Ok(self.push(Op::Conv3x3 { x: x.0, w: w.0, b: b.0 }, t))
    }

    pub fn pointwise(&mut self, x: Var, w: Var, b: Var) -> Result<Var> {
        let (n, h, wd, cin) = dims4(self.value(x).shape())?;
        let cout = self.check_params(w, b, &[cin])?;
        let xs = self.value(x).data();
        let (ws, bs) = (self.value(w).data(), self.value(b).data());
        let mut out = vec![T::ZERO; n * h * wd * cout];
        for (o, xi) in out.chunks_exact_mut(cout).zip(xs.chunks_exact(cin)) {
            o.copy_from_slice(bs);
            for (&a, wrow) in xi.iter().zip(ws.chunks_exact(cout)) {
                for (ov, &wv) in o.iter_mut().zip(wrow) {
                    *ov += a * wv;
                }
            }
        }
        let t = Tensor::new(vec![n, h, wd, cout], out)?;
        Ok(self.push(Op::Pointwise { x: x.0, w: w.0, b: b.0 }, t))
    }

    pub fn relu(&mut self, x: Var) -> Var {
        let src = self.value(x);
        let data = src
            .data()
            .iter()
            .map(|&v| if v > T::ZERO { v } else { T::ZERO })
            .collect();
        let t = Tensor::new(src.shape().to_vec(), data).expect("same shape");
        self.push(Op::Relu { x: x.0 }, t)
    }

    /// Validates weight shape `lead ++ [cout]` and bias `[cout]`; returns cout.
    fn check_params(&self, w: Var, b: Var, lead: &[usize]) -> Result<usize> {
        let ws = self.value(w).shape();
        let cout = *ws.last().unwrap_or(&0);
        if ws.len() != lead.len() + 1 || &ws[..lead.len()] != lead {
            return Err(Error::shape(format!("{lead:?} + [cout]"), format!("{ws:?}")));
        }
        if self.value(b).shape() != [cout] {
            return Err(Error::shape(
                format!("[{cout}]"),
                format!("{:?}", self.value(b).shape()),
            ));
        }
        Ok(cout)
    }

    /// Reverse sweep from `output` seeded with `seed = ∂L/∂output`.
    pub fn backward(&self, output: Var, seed: Tensor<T>) -> Result<Gradients<T>> {
        if seed.shape() != self.value(output).shape() {
            return Err(Error::shape(
                format!("{:?}", self.value(output).shape()),
                format!("{:?}", seed.shape()),
            ));
        }
        let mut grads: Vec<Option<Tensor<T>>> = vec![None; self.ops.len()];
        grads[output.0] = Some(seed);
        for node in (0..=output.0).rev() {
            let Some(g) = grads[node].take() else {
                continue;
            };
            match self.ops[node] {
                Op::Leaf => {
                    grads[node] = Some(g);
                    continue;
                }
                Op::Relu { x } => {
                    let xv = self.values[x].data();
                    let mut gx = g.clone();
                    for (gv, &v) in gx.data_mut().iter_mut().zip(xv) {
                        if !(v > T::ZERO) {
                            *gv = T::ZERO;
                        }
                    }
                    accumulate(&mut grads, x, gx);
                }
                Op::Pointwise { x, w, b } => {
                    let xt = &self.values[x];
                    let (_, _, _, cin) = dims4(xt.shape())?;
                    let ws = self.values[w].data();
                    let cout = self.values[b].len();
                    let mut gx = Tensor::zeros(xt.shape().to_vec());
                    let mut gw = Tensor::zeros(self.values[w].shape().to_vec());
                    let mut gb = Tensor::zeros(vec![cout]);
                    for ((go, xi), gxi) in g
                        .data()
                        .chunks_exact(cout)
                        .zip(xt.data().chunks_exact(cin))
                        .zip(gx.data_mut().chunks_exact_mut(cin))
                    {
                        for (gbv, &v) in gb.data_mut().iter_mut().zip(go) {
                            *gbv += v;
                        }
                        for ((&a, gxv), (wrow, gwrow)) in xi
                            .iter()
                            .zip(gxi.iter_mut())
                            .zip(ws.chunks_exact(cout).zip(gw.data_mut().chunks_exact_mut(cout)))
                        {
                            let mut acc = T::ZERO;
                            for ((&wv, gwv), &gov) in wrow.iter().zip(gwrow.iter_mut()).zip(go) {
                                *gwv += a * gov;
                                acc += wv * gov;
                            }
                            *gxv += acc;
                        }
                    }
                    accumulate(&mut grads, x, gx);
                    accumulate(&mut grads, w, gw);
                    accumulate(&mut grads, b, gb);
                }
                Op::Conv3x3 { x, w, b } => {
                    let xt = &self.values[x];
                    let dims = dims4(xt.shape())?;
                    let cout = self.values[b].len();
                    let mut gx = Tensor::zeros(xt.shape().to_vec());
                    let mut gw = Tensor::zeros(self.values[w].shape().to_vec());
                    let mut gb = Tensor::zeros(vec![cout]);
                    conv3x3_backward(
                        xt.data(),
                        dims,
                        self.values[w].data(),
                        cout,
                        g.data(),
                        gx.data_mut(),
                        gw.data_mut(),
                        gb.data_mut(),
                    );
                    accumulate(&mut grads, x, gx);
                    accumulate(&mut grads, w, gw);
                    accumulate(&mut grads, b, gb);
                }
            }
        }
        Ok(Gradients { grads })
    }
}

fn accumulate<T: Real>(grads: &mut [Option<Tensor<T>>], node: usize, g: Tensor<T>) {
    match &mut grads[node] {
        Some(existing) => existing.add_assign(&g),
        slot @ None => *slot = Some(g),
    }
}

/// Valid kernel taps for an output coordinate: (kernel index, input index).
#[inline]
fn taps(pos: usize, len: usize) -> impl Iterator<Item = (usize, usize)> {
    let lo = if pos == 0 { 1 } else { 0 };
    let hi = if pos + 1 == len { 2 } else { 3 };
    (lo..hi).map(move |k| (k, pos + k - 1))
}

/// Runs `$fixed::<T, CI, CO>` for common channel widths, `$dynamic` otherwise.
macro_rules! dispatch_widths {
    ($cin:expr, $cout:expr, $fixed:ident($($arg:expr),*), $dynamic:expr) => {
        match ($cin, $cout) {
            (1, 4) => $fixed::<T, 1, 4>($($arg),*),
            (1, 8) => $fixed::<T, 1, 8>($($arg),*),
            (1, 16) => $fixed::<T, 1, 16>($($arg),*),
            (2, 8) => $fixed::<T, 2, 8>($($arg),*),
            (2, 16) => $fixed::<T, 2, 16>($($arg),*),
            (4, 8) => $fixed::<T, 4, 8>($($arg),*),
            (4, 16) => $fixed::<T, 4, 16>($($arg),*),
            (8, 8) => $fixed::<T, 8, 8>($($arg),*),
            (8, 16) => $fixed::<T, 8, 16>($($arg),*),
            (8, 32) => $fixed::<T, 8, 32>($($arg),*),
            (16, 8) => $fixed::<T, 16, 8>($($arg),*),
            (16, 16) => $fixed::<T, 16, 16>($($arg),*),
            (16, 32) => $fixed::<T, 16, 32>($($arg),*),
            (32, 16) => $fixed::<T, 32, 16>($($arg),*),
            (32, 32) => $fixed::<T, 32, 32>($($arg),*),
            (4, 1) => $fixed::<T, 4, 1>($($arg),*),
            (8, 1) => $fixed::<T, 8, 1>($($arg),*),
            (16, 1) => $fixed::<T, 16, 1>($($arg),*),
            (8, 2) => $fixed::<T, 8, 2>($($arg),*),
            (16, 2) => $fixed::<T, 16, 2>($($arg),*),
            (8, 4) => $fixed::<T, 8, 4>($($arg),*),
            (16, 4) => $fixed::<T, 16, 4>($($arg),*),
            (32, 8) => $fixed::<T, 32, 8>($($arg),*),
            _ => $dynamic,
        }
    };
}

fn conv3x3_forward<T: Real>(
    x: &[T],
    dims: (usize, usize, usize, usize),
    weights: &[T],
    bias: &[T],
    cout: usize,
    out: &mut [T],
) {
    dispatch_widths!(
        dims.3,
        cout,
        conv3x3_forward_fixed(x, dims, weights, bias, out),
        conv3x3_forward_dyn(x, dims, weights, bias, cout, out)
    )
}

fn conv3x3_forward_fixed<T: Real, const CI: usize, const CO: usize>(
    x: &[T],
    (n, h, w, _): (usize, usize, usize, usize),
    weights: &[T],
    bias: &[T],
    out: &mut [T],
) {
    let bias: &[T; CO] = bias.try_into().expect("bias width");
    for b in 0..n {
        for yy in 0..h {
            for xx in 0..w {
                let mut acc = *bias;
                for (ky, iy) in taps(yy, h) {
                    for (kx, ix) in taps(xx, w) {
                        let base = ((b * h + iy) * w + ix) * CI;
                        let xin: &[T; CI] = x[base..base + CI].try_into().unwrap();
                        let koff = (ky * 3 + kx) * CI * CO;
                        for ci in 0..CI {
                            let a = xin[ci];
                            let wrow: &[T; CO] =
                                weights[koff + ci * CO..koff + (ci + 1) * CO].try_into().unwrap();
                            for co in 0..CO {
                                acc[co] += a * wrow[co];
                            }
                        }
                    }
                }
                let o = ((b * h + yy) * w + xx) * CO;
                out[o..o + CO].copy_from_slice(&acc);
            }
        }
    }
}

fn conv3x3_forward_dyn<T: Real>(
    x: &[T],
    (n, h, w, cin): (usize, usize, usize, usize),
    weights: &[T],
    bias: &[T],
    cout: usize,
    out: &mut [T],
) {
    let kstride = cin * cout;
    for b in 0..n {
        for yy in 0..h {
            for xx in 0..w {
                let o = &mut out[((b * h + yy) * w + xx) * cout..][..cout];
                o.copy_from_slice(bias);
                for (ky, iy) in taps(yy, h) {
                    for (kx, ix) in taps(xx, w) {
                        let xin = &x[((b * h + iy) * w + ix) * cin..][..cin];
                        let wk = &weights[(ky * 3 + kx) * kstride..][..kstride];
                        for (&a, wrow) in xin.iter().zip(wk.chunks_exact(cout)) {
                            for (ov, &wv) in o.iter_mut().zip(wrow) {
                                *ov += a * wv;
                            }
                        }
                    }
                }
            }
        }
    }
}

#[allow(clippy::too_many_arguments)]
fn conv3x3_backward<T: Real>(
    x: &[T],
    dims: (usize, usize, usize, usize),
    weights: &[T],
    cout: usize,
    gout: &[T],
    gx: &mut [T],
    gw: &mut [T],
    gb: &mut [T],
) {
    for go in gout.chunks_exact(cout) {
        for (b, &v) in gb.iter_mut().zip(go) {
            *b += v;
        }
    }
    let (n, h, w, cin) = dims;
    let flipped = flip_taps(weights, cin, cout);
    conv3x3_forward(gout, (n, h, w, cout), &flipped, &vec![T::ZERO; cin], cin, gx);
    dispatch_widths!(
        cin,
        cout,
        conv3x3_weight_grad(x, dims, gout, gw),
        conv3x3_weight_grad_dyn(x, dims, cout, gout, gw)
    )
}

/// Weights `[3, 3, CI, CO]` rotated 180 degrees and transposed to
/// `[3, 3, CO, CI]`: the kernel whose convolution of the output gradient is
/// the input gradient.
fn flip_taps<T: Real>(weights: &[T], ci: usize, co: usize) -> Vec<T> {
    let mut t = vec![T::ZERO; weights.len()];
    for k in 0..9 {
        for i in 0..ci {
            for o in 0..co {
                t[((8 - k) * co + o) * ci + i] = weights[(k * ci + i) * co + o];
            }
        }
    }
    t
}

/// Output columns `xx` whose tap `kx` lands inside a row of width `w`.
fn valid_columns(kx: usize, w: usize) -> std::ops::Range<usize> {
    match kx {
        0 => 1..w,
        1 => 0..w,
        _ => 0..w - 1,
    }
}

/// Weight gradient for fixed widths.
fn conv3x3_weight_grad<T: Real, const CI: usize, const CO: usize>(
    x: &[T],
    (n, h, w, _): (usize, usize, usize, usize),
    gout: &[T],
    gw: &mut [T],
) {
    // weight gradient: one tap at a time, sweeping whole rows so the CI x CO
    // block for that tap is updated once per row rather than once per pixel
    for ky in 0..3 {
        for kx in 0..3 {
            let cols = valid_columns(kx, w);
            let gwk: &mut [T] = &mut gw[(ky * 3 + kx) * CI * CO..][..CI * CO];
            let mut acc = vec![[T::ZERO; CO]; CI];
            for b in 0..n {
                for yy in 0..h {
                    let Some(iy) = (yy + ky).checked_sub(1).filter(|&iy| iy < h) else {
                        continue;
                    };
                    let grow = &gout[(b * h + yy) * w * CO..][..w * CO];
                    let xrow = &x[(b * h + iy) * w * CI..][..w * CI];
                    for xx in cols.clone() {
                        let go: &[T; CO] = grow[xx * CO..][..CO].try_into().unwrap();
                        let ix = xx + kx - 1;
                        let xin: &[T; CI] = xrow[ix * CI..][..CI].try_into().unwrap();
                        for (row, &a) in acc.iter_mut().zip(xin) {
                            for co in 0..CO {
                                row[co] += a * go[co];
                            }
                        }
                    }
                }
            }
            for (g, row) in gwk.chunks_exact_mut(CO).zip(&acc) {
                for (gv, &v) in g.iter_mut().zip(row) {
                    *gv += v;
                }
            }
        }
    }
}

fn conv3x3_weight_grad_dyn<T: Real>(
    x: &[T],
    (n, h, w, cin): (usize, usize, usize, usize),
    cout: usize,
    gout: &[T],
    gw: &mut [T],
) {
    let kstride = cin * cout;
    for b in 0..n {
        for yy in 0..h {
            for xx in 0..w {
                let go = &gout[((b * h + yy) * w + xx) * cout..][..cout];
                for (ky, iy) in taps(yy, h) {
                    for (kx, ix) in taps(xx, w) {
                        let xin = &x[((b * h + iy) * w + ix) * cin..][..cin];
                        let gwk = &mut gw[(ky * 3 + kx) * kstride..][..kstride];
                        for (&a, gwrow) in xin.iter().zip(gwk.chunks_exact_mut(cout)) {
                            for (gwv, &gov) in gwrow.iter_mut().zip(go) {
                                *gwv += a * gov;
                            }
                        }
                    }
                }
            }
        }
    }
}
