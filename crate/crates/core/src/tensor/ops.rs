//! Elementwise arithmetic, reductions, matmul and shape manipulation.

use super::gemm::{gemm, Layout};
use super::{broadcast_shape, resolve_axis, strides, Scalar, Tensor, Var};
use crate::error::{Error, Result};

/// For each element of `out_shape`, the flat index of the element of
/// `in_shape` it broadcasts from.
fn broadcast_index(in_shape: &[usize], out_shape: &[usize]) -> Vec<usize> {
    let n: usize = out_shape.iter().product();
    let off = out_shape.len() - in_shape.len();
    let in_strides = strides(in_shape);
    let mut eff = vec![0usize; out_shape.len()];
    for (i, &d) in in_shape.iter().enumerate() {
        eff[i + off] = if d == 1 { 0 } else { in_strides[i] };
    }
    let mut idx = vec![0usize; out_shape.len()];
    let mut out = Vec::with_capacity(n);
    let mut flat = 0usize;
    for _ in 0..n {
        out.push(flat);
        for ax in (0..out_shape.len()).rev() {
            idx[ax] += 1;
            flat += eff[ax];
            if idx[ax] < out_shape[ax] {
                break;
            }
            flat -= eff[ax] * idx[ax];
            idx[ax] = 0;
        }
    }
    out
}

fn broadcast_to<T: Scalar>(t: &Tensor<T>, shape: &[usize]) -> Tensor<T> {
    if t.shape() == shape {
        return t.clone();
    }
    let map = broadcast_index(t.shape(), shape);
    let src = t.data();
    Tensor {
        shape: shape.to_vec(),
        data: map.iter().map(|&i| src[i]).collect(),
    }
}

/// Sums `t` down to `shape`, the adjoint of broadcasting.
pub(crate) fn sum_to<T: Scalar>(t: &Tensor<T>, shape: &[usize]) -> Tensor<T> {
    if t.shape() == shape {
        return t.clone();
    }
    let map = broadcast_index(shape, t.shape());
    let n: usize = shape.iter().product();
    let mut acc = vec![0.0f64; n];
    for (&i, &v) in map.iter().zip(t.data()) {
        acc[i] += v.as_f64();
    }
    Tensor {
        shape: shape.to_vec(),
        data: acc.into_iter().map(T::from_f64).collect(),
    }
}

#[derive(Clone, Copy)]
enum Binary {
    Add,
    Sub,
    Mul,
    Div,
}

#[derive(Clone, Copy)]
enum Unary {
    Relu,
    Sigmoid,
    Tanh,
    Exp,
    Softplus,
    Sqrt,
    Square,
    Neg,
}

#[inline]
pub fn softplus_f64(x: f64) -> f64 {
    if x > 20.0 {
        x
    } else if x < -20.0 {
        x.exp()
    } else {
        x.exp().ln_1p()
    }
}

#[inline]
pub fn sigmoid_f64(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

impl<'t, T: Scalar> Var<'t, T> {
    fn binary(&self, other: &Var<'t, T>, kind: Binary) -> Result<Var<'t, T>> {
        let a = self.value();
        let b = other.value();
        let shape = broadcast_shape(a.shape(), b.shape())?;
        let ab = broadcast_to(&a, &shape);
        let bb = broadcast_to(&b, &shape);
        let out = ab.zip_map(&bb, |x, y| match kind {
            Binary::Add => x + y,
            Binary::Sub => x - y,
            Binary::Mul => x * y,
            Binary::Div => x / y,
        })?;
        let (sa, sb) = (a.shape().to_vec(), b.shape().to_vec());
        Ok(self.tape().op(
            out,
            &[*self, *other],
            Box::new(move |g, needs| {
                let ga = needs[0].then(|| {
                    let full = match kind {
                        Binary::Add | Binary::Sub => g.clone(),
                        Binary::Mul => g.zip_map(&bb, |g, y| g * y).unwrap(),
                        Binary::Div => g.zip_map(&bb, |g, y| g / y).unwrap(),
                    };
                    sum_to(&full, &sa)
                });
                let gb = needs[1].then(|| {
                    let full = match kind {
                        Binary::Add => g.clone(),
                        Binary::Sub => g.map(|g| -g),
                        Binary::Mul => g.zip_map(&ab, |g, x| g * x).unwrap(),
                        Binary::Div => {
                            let q = ab.zip_map(&bb, |x, y| x / (y * y)).unwrap();
                            g.zip_map(&q, |g, q| -g * q).unwrap()
                        }
                    };
                    sum_to(&full, &sb)
                });
                vec![ga, gb]
            }),
        ))
    }

    pub fn add(&self, other: &Var<'t, T>) -> Result<Var<'t, T>> {
        self.binary(other, Binary::Add)
    }

    pub fn sub(&self, other: &Var<'t, T>) -> Result<Var<'t, T>> {
        self.binary(other, Binary::Sub)
    }

    pub fn mul(&self, other: &Var<'t, T>) -> Result<Var<'t, T>> {
        self.binary(other, Binary::Mul)
    }

    pub fn div(&self, other: &Var<'t, T>) -> Result<Var<'t, T>> {
        self.binary(other, Binary::Div)
    }

    /// `self * s + b` with constant scalars.
    pub fn affine(&self, s: f64, b: f64) -> Var<'t, T> {
        let (s_t, b_t) = (T::from_f64(s), T::from_f64(b));
        let out = self.value().map(|x| x * s_t + b_t);
        self.tape().op(
            out,
            &[*self],
            Box::new(move |g, _| vec![Some(g.map(|g| g * s_t))]),
        )
    }

    pub fn scale(&self, s: f64) -> Var<'t, T> {
        self.affine(s, 0.0)
    }

    pub fn add_scalar(&self, b: f64) -> Var<'t, T> {
        self.affine(1.0, b)
    }

    fn unary(&self, kind: Unary) -> Var<'t, T> {
        let x = self.value();
        let f = |v: f64| -> f64 {
            match kind {
                Unary::Relu => v.max(0.0),
                Unary::Sigmoid => sigmoid_f64(v),
                Unary::Tanh => v.tanh(),
                Unary::Exp => v.exp(),
                Unary::Softplus => softplus_f64(v),
                Unary::Sqrt => v.sqrt(),
                Unary::Square => v * v,
                Unary::Neg => -v,
            }
        };
        let out = x.map(|v| T::from_f64(f(v.as_f64())));
        let y = out.clone();
        self.tape().op(
            out,
            &[*self],
            Box::new(move |g, _| {
                let dx = match kind {
                    Unary::Relu => g.zip_map(&x, |g, v| if v > T::zero() { g } else { T::zero() }),
                    Unary::Sigmoid => g.zip_map(&y, |g, s| g * s * (T::one() - s)),
                    Unary::Tanh => g.zip_map(&y, |g, t| g * (T::one() - t * t)),
                    Unary::Exp => g.zip_map(&y, |g, e| g * e),
                    Unary::Softplus => {
                        g.zip_map(&x, |g, v| g * T::from_f64(sigmoid_f64(v.as_f64())))
                    }
                    Unary::Sqrt => g.zip_map(&y, |g, r| g / (r + r)),
                    Unary::Square => g.zip_map(&x, |g, v| g * (v + v)),
                    Unary::Neg => Ok(g.map(|g| -g)),
                };
                vec![Some(dx.unwrap())]
            }),
        )
    }

    pub fn relu(&self) -> Var<'t, T> {
        self.unary(Unary::Relu)
    }
    pub fn sigmoid(&self) -> Var<'t, T> {
        self.unary(Unary::Sigmoid)
    }
    pub fn tanh(&self) -> Var<'t, T> {
        self.unary(Unary::Tanh)
    }
    pub fn exp(&self) -> Var<'t, T> {
        self.unary(Unary::Exp)
    }
    pub fn softplus(&self) -> Var<'t, T> {
        self.unary(Unary::Softplus)
    }
    pub fn sqrt(&self) -> Var<'t, T> {
        self.unary(Unary::Sqrt)
    }
    pub fn square(&self) -> Var<'t, T> {
        self.unary(Unary::Square)
    }
    pub fn neg(&self) -> Var<'t, T> {
        self.unary(Unary::Neg)
    }

    /// Sum of all elements, as a scalar of shape `[]`.
    pub fn sum(&self) -> Var<'t, T> {
        let x = self.value();
        let shape = x.shape().to_vec();
        let s = T::from_f64(x.sum_f64());
        self.tape().op(
            Tensor::scalar(s),
            &[*self],
            Box::new(move |g, _| vec![Some(Tensor::full(&shape, g.data()[0]))]),
        )
    }

    pub fn mean(&self) -> Var<'t, T> {
        let n = self.value().numel() as f64;
        self.sum().scale(1.0 / n)
    }

    /// Sum over one axis.
    pub fn sum_axis(&self, axis: isize, keepdim: bool) -> Var<'t, T> {
        let x = self.value();
        let ax = resolve_axis(axis, x.ndim());
        let outer: usize = x.shape()[..ax].iter().product();
        let n = x.shape()[ax];
        let inner: usize = x.shape()[ax + 1..].iter().product();
        let mut acc = vec![0.0f64; outer * inner];
        let src = x.data();
        for o in 0..outer {
            for k in 0..n {
                let row = &src[(o * n + k) * inner..(o * n + k + 1) * inner];
                for (a, &v) in acc[o * inner..(o + 1) * inner].iter_mut().zip(row) {
                    *a += v.as_f64();
                }
            }
        }
        let mut shape = x.shape().to_vec();
        if keepdim {
            shape[ax] = 1;
        } else {
            shape.remove(ax);
        }
        let in_shape = x.shape().to_vec();
        let out = Tensor::new(&shape, acc.into_iter().map(T::from_f64).collect()).unwrap();
        self.tape().op(
            out,
            &[*self],
            Box::new(move |g, _| {
                let gd = g.data();
                let mut d = Vec::with_capacity(outer * n * inner);
                for o in 0..outer {
                    for _ in 0..n {
                        d.extend_from_slice(&gd[o * inner..(o + 1) * inner]);
                    }
                }
                vec![Some(Tensor::new(&in_shape, d).unwrap())]
            }),
        )
    }

    pub fn mean_axis(&self, axis: isize, keepdim: bool) -> Var<'t, T> {
        let n = self.value().dim(axis) as f64;
        self.sum_axis(axis, keepdim).scale(1.0 / n)
    }

    /// Batched matrix product `[.., M, K] x [.., K, N]`. The right operand
    /// may be a plain matrix shared across the batch.
    pub fn matmul(&self, other: &Var<'t, T>) -> Result<Var<'t, T>> {
        let a = self.value();
        let b = other.value();
        let (sa, sb) = (a.shape().to_vec(), b.shape().to_vec());
        if sa.len() < 2 || sb.len() < 2 {
            return Err(Error::invalid("matmul", format!("need rank >= 2, got {sa:?} x {sb:?}")));
        }
        let (m, k) = (sa[sa.len() - 2], sa[sa.len() - 1]);
        let (k2, n) = (sb[sb.len() - 2], sb[sb.len() - 1]);
        if k != k2 {
            return Err(Error::invalid(
                "matmul",
                format!("inner extents differ: {sa:?} x {sb:?}"),
            ));
        }
        let batch_a: usize = sa[..sa.len() - 2].iter().product();
        let batch_b: usize = sb[..sb.len() - 2].iter().product();
        let shared_b = sb.len() == 2;
        if !shared_b && sa[..sa.len() - 2] != sb[..sb.len() - 2] {
            return Err(Error::Broadcast { lhs: sa, rhs: sb });
        }
        let _ = batch_b;
        let mut out_shape = sa[..sa.len() - 2].to_vec();
        out_shape.extend([m, n]);
        let mut data = Vec::with_capacity(batch_a * m * n);
        for bi in 0..batch_a {
            let ab = &a.data()[bi * m * k..(bi + 1) * m * k];
            let bb = if shared_b { b.data() } else { &b.data()[bi * k * n..(bi + 1) * k * n] };
            data.extend(mm(ab, bb, m, k, n));
        }
        let out = Tensor::new(&out_shape, data)?;
        Ok(self.tape().op(
            out,
            &[*self, *other],
            Box::new(move |g, needs| {
                let gd = g.data();
                let ga = needs[0].then(|| {
                    let mut d = Vec::with_capacity(batch_a * m * k);
                    for bi in 0..batch_a {
                        let gb = &gd[bi * m * n..(bi + 1) * m * n];
                        let bb = if shared_b { b.data() } else { &b.data()[bi * k * n..(bi + 1) * k * n] };
                        d.extend(mm_nt(gb, bb, m, n, k));
                    }
                    Tensor::new(a.shape(), d).unwrap()
                });
                let gb = needs[1].then(|| {
                    if shared_b {
                        let mut acc = vec![T::zero(); k * n];
                        for bi in 0..batch_a {
                            let ab = &a.data()[bi * m * k..(bi + 1) * m * k];
                            let gbt = &gd[bi * m * n..(bi + 1) * m * n];
                            mm_tn_acc(ab, gbt, m, k, n, &mut acc);
                        }
                        Tensor::new(b.shape(), acc).unwrap()
                    } else {
                        let mut d = Vec::with_capacity(batch_a * k * n);
                        for bi in 0..batch_a {
                            let mut acc = vec![T::zero(); k * n];
                            let ab = &a.data()[bi * m * k..(bi + 1) * m * k];
                            let gbt = &gd[bi * m * n..(bi + 1) * m * n];
                            mm_tn_acc(ab, gbt, m, k, n, &mut acc);
                            d.extend(acc);
                        }
                        Tensor::new(b.shape(), d).unwrap()
                    }
                });
                vec![ga, gb]
            }),
        ))
    }

    pub fn reshape(&self, shape: &[usize]) -> Result<Var<'t, T>> {
        let x = self.value();
        let out = x.reshape(shape)?;
        let in_shape = x.shape().to_vec();
        Ok(self.tape().op(
            out,
            &[*self],
            Box::new(move |g, _| vec![Some(g.reshape(&in_shape).unwrap())]),
        ))
    }

    /// Reorders axes: output axis `i` is input axis `axes[i]`.
    pub fn permute(&self, axes: &[usize]) -> Result<Var<'t, T>> {
        let x = self.value();
        let mut seen = vec![false; x.ndim()];
        if axes.len() != x.ndim() || axes.iter().any(|&a| a >= x.ndim() || std::mem::replace(&mut seen[a], true)) {
            return Err(Error::invalid("permute", format!("bad axes {axes:?} for rank {}", x.ndim())));
        }
        let out = permute_tensor(&x, axes);
        let mut inv = vec![0; axes.len()];
        for (i, &a) in axes.iter().enumerate() {
            inv[a] = i;
        }
        Ok(self.tape().op(
            out,
            &[*self],
            Box::new(move |g, _| vec![Some(permute_tensor(g, &inv))]),
        ))
    }

    /// Swaps the last two axes.
    pub fn t(&self) -> Result<Var<'t, T>> {
        let nd = self.value().ndim();
        if nd < 2 {
            return Err(Error::invalid("t", "rank < 2"));
        }
        let mut axes: Vec<usize> = (0..nd).collect();
        axes.swap(nd - 2, nd - 1);
        self.permute(&axes)
    }

    /// Contiguous slice `[start, start+len)` along `axis`.
    pub fn narrow(&self, axis: isize, start: usize, len: usize) -> Result<Var<'t, T>> {
        let x = self.value();
        let ax = resolve_axis(axis, x.ndim());
        let n = x.shape()[ax];
        if start + len > n {
            return Err(Error::invalid(
                "narrow",
                format!("range {start}..{} exceeds extent {n}", start + len),
            ));
        }
        let outer: usize = x.shape()[..ax].iter().product();
        let inner: usize = x.shape()[ax + 1..].iter().product();
        let mut data = Vec::with_capacity(outer * len * inner);
        for o in 0..outer {
            let base = (o * n + start) * inner;
            data.extend_from_slice(&x.data()[base..base + len * inner]);
        }
        let mut shape = x.shape().to_vec();
        shape[ax] = len;
        let in_shape = x.shape().to_vec();
        Ok(self.tape().op(
            Tensor::new(&shape, data)?,
            &[*self],
            Box::new(move |g, _| {
                let mut d = vec![T::zero(); outer * n * inner];
                for o in 0..outer {
                    let base = (o * n + start) * inner;
                    d[base..base + len * inner]
                        .copy_from_slice(&g.data()[o * len * inner..(o + 1) * len * inner]);
                }
                vec![Some(Tensor::new(&in_shape, d).unwrap())]
            }),
        ))
    }

    /// Concatenates along `axis`; all other extents must agree.
    pub fn concat(parts: &[Var<'t, T>], axis: isize) -> Result<Var<'t, T>> {
        let first = parts
            .first()
            .ok_or_else(|| Error::invalid("concat", "no inputs"))?;
        let values: Vec<_> = parts.iter().map(|p| p.value()).collect();
        let ref_shape = values[0].shape().to_vec();
        let ax = resolve_axis(axis, ref_shape.len());
        let mut total = 0;
        for v in &values {
            let s = v.shape();
            if s.len() != ref_shape.len()
                || s.iter().zip(&ref_shape).enumerate().any(|(i, (a, b))| i != ax && a != b)
            {
                return Err(Error::ShapeMismatch {
                    op: "concat",
                    expected: ref_shape.clone(),
                    got: s.to_vec(),
                });
            }
            total += s[ax];
        }
        let outer: usize = ref_shape[..ax].iter().product();
        let inner: usize = ref_shape[ax + 1..].iter().product();
        let widths: Vec<usize> = values.iter().map(|v| v.shape()[ax] * inner).collect();
        let mut data = Vec::with_capacity(outer * total * inner);
        for o in 0..outer {
            for (v, &w) in values.iter().zip(&widths) {
                data.extend_from_slice(&v.data()[o * w..(o + 1) * w]);
            }
        }
        let mut shape = ref_shape.clone();
        shape[ax] = total;
        let shapes: Vec<Vec<usize>> = values.iter().map(|v| v.shape().to_vec()).collect();
        Ok(first.tape().op(
            Tensor::new(&shape, data)?,
            parts,
            Box::new(move |g, needs| {
                let row = total * inner;
                let mut off = 0;
                let mut out = Vec::with_capacity(widths.len());
                for (i, &w) in widths.iter().enumerate() {
                    out.push(needs[i].then(|| {
                        let mut d = Vec::with_capacity(outer * w);
                        for o in 0..outer {
                            d.extend_from_slice(&g.data()[o * row + off..o * row + off + w]);
                        }
                        Tensor::new(&shapes[i], d).unwrap()
                    }));
                    off += w;
                }
                out
            }),
        ))
    }

    /// Stacks equally shaped vars along a new axis.
    pub fn stack(parts: &[Var<'t, T>], axis: usize) -> Result<Var<'t, T>> {
        let expanded = parts
            .iter()
            .map(|p| {
                let mut s = p.shape();
                if axis > s.len() {
                    return Err(Error::invalid("stack", format!("axis {axis} out of range")));
                }
                s.insert(axis, 1);
                p.reshape(&s)
            })
            .collect::<Result<Vec<_>>>()?;
        Var::concat(&expanded, axis as isize)
    }
}

pub(crate) fn permute_tensor<T: Scalar>(x: &Tensor<T>, axes: &[usize]) -> Tensor<T> {
    let in_strides = strides(x.shape());
    let out_shape: Vec<usize> = axes.iter().map(|&a| x.shape()[a]).collect();
    let eff: Vec<usize> = axes.iter().map(|&a| in_strides[a]).collect();
    let n = x.numel();
    let src = x.data();
    let mut data = Vec::with_capacity(n);
    let mut idx = vec![0usize; axes.len()];
    let mut flat = 0usize;
    for _ in 0..n {
        data.push(src[flat]);
        for ax in (0..axes.len()).rev() {
            idx[ax] += 1;
            flat += eff[ax];
            if idx[ax] < out_shape[ax] {
                break;
            }
            flat -= eff[ax] * idx[ax];
            idx[ax] = 0;
        }
    }
    Tensor {
        shape: out_shape,
        data,
    }
}

/// `[m,k] x [k,n]`.
fn mm<T: Scalar>(a: &[T], b: &[T], m: usize, k: usize, n: usize) -> Vec<T> {
    let mut out = vec![T::zero(); m * n];
    gemm(m, k, n, a, Layout::row_major(k), b, Layout::row_major(n), T::zero(), &mut out, Layout::row_major(n));
    out
}

/// `[m,n] x [k,n]^T -> [m,k]`.
fn mm_nt<T: Scalar>(a: &[T], b: &[T], m: usize, n: usize, k: usize) -> Vec<T> {
    let mut out = vec![T::zero(); m * k];
    gemm(m, n, k, a, Layout::row_major(n), b, Layout::transposed(n), T::zero(), &mut out, Layout::row_major(k));
    out
}

/// `acc += [m,k]^T x [m,n]`.
fn mm_tn_acc<T: Scalar>(a: &[T], g: &[T], m: usize, k: usize, n: usize, acc: &mut [T]) {
    gemm(k, m, n, a, Layout::transposed(k), g, Layout::row_major(n), T::one(), acc, Layout::row_major(n));
}
