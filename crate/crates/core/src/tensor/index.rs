//! Row gathers, pixel shuffling, resampling and pairwise rotations.

use super::{Scalar, Tensor, Var};
use crate::error::{Error, Result};

/// Rearranges `[C*r*r, H, W]` into `[C, r*H, r*W]`; output pixel
/// `(c, h*r+i, w*r+j)` reads input channel `c*r*r + i*r + j`.
pub fn pixel_shuffle<T: Scalar>(x: &Tensor<T>, r: usize) -> Result<Tensor<T>> {
    let s = x.shape();
    if s.len() != 3 || r == 0 || !s[0].is_multiple_of(r * r) {
        return Err(Error::invalid(
            "pixel_shuffle",
            format!("channel count of {s:?} not divisible by r^2 = {}", r * r),
        ));
    }
    let (c, h, w) = (s[0] / (r * r), s[1], s[2]);
    let (oh, ow) = (h * r, w * r);
    let src = x.data();
    let mut out = vec![T::zero(); x.numel()];
    for ch in 0..c {
        for i in 0..r {
            for j in 0..r {
                let ic = ch * r * r + i * r + j;
                for y in 0..h {
                    let srow = &src[(ic * h + y) * w..][..w];
                    let drow = &mut out[(ch * oh + y * r + i) * ow..][..ow];
                    for (xx, &v) in srow.iter().enumerate() {
                        drow[xx * r + j] = v;
                    }
                }
            }
        }
    }
    Tensor::new(&[c, oh, ow], out)
}

/// Exact inverse of [`pixel_shuffle`].
pub fn pixel_unshuffle<T: Scalar>(x: &Tensor<T>, r: usize) -> Result<Tensor<T>> {
    let s = x.shape();
    if s.len() != 3 || r == 0 || !s[1].is_multiple_of(r) || !s[2].is_multiple_of(r) {
        return Err(Error::invalid(
            "pixel_unshuffle",
            format!("spatial extents of {s:?} not divisible by {r}"),
        ));
    }
    let (c, oh, ow) = (s[0], s[1], s[2]);
    let (h, w) = (oh / r, ow / r);
    let src = x.data();
    let mut out = vec![T::zero(); x.numel()];
    for ch in 0..c {
        for i in 0..r {
            for j in 0..r {
                let oc = ch * r * r + i * r + j;
                for y in 0..h {
                    let srow = &src[(ch * oh + y * r + i) * ow..][..ow];
                    let drow = &mut out[(oc * h + y) * w..][..w];
                    for (xx, d) in drow.iter_mut().enumerate() {
                        *d = srow[xx * r + j];
                    }
                }
            }
        }
    }
    Tensor::new(&[c * r * r, h, w], out)
}

pub(crate) fn check_permutation(perm: &[usize], len: usize) -> Result<()> {
    if perm.len() != len {
        return Err(Error::Permutation(format!(
            "length {} does not match {len} rows",
            perm.len()
        )));
    }
    let mut seen = vec![false; len];
    for &p in perm {
        if p >= len {
            return Err(Error::Permutation(format!("index {p} out of range 0..{len}")));
        }
        if std::mem::replace(&mut seen[p], true) {
            return Err(Error::Permutation(format!("duplicate index {p}")));
        }
    }
    Ok(())
}

/// Linear interpolation taps for an exact 2x upsample with half-pixel
/// centres: output `o` samples input coordinate `(o + 0.5) / 2 - 0.5`,
/// clamped to the valid range.
fn bilinear_taps(n: usize) -> Vec<(usize, usize, f64)> {
    (0..2 * n)
        .map(|o| {
            let src = ((o as f64 + 0.5) / 2.0 - 0.5).max(0.0);
            let i0 = (src.floor() as usize).min(n - 1);
            let i1 = (i0 + 1).min(n - 1);
            (i0, i1, src - i0 as f64)
        })
        .collect()
}

impl<'t, T: Scalar> Var<'t, T> {
    /// Selects rows of a `[L, ...]` tensor: `out[k] = x[idx[k]]`. Indices may
    /// repeat; the adjoint scatter-adds.
    pub fn index_rows(&self, idx: &[usize]) -> Result<Var<'t, T>> {
        let x = self.value();
        let l = x.shape()[0];
        if let Some(&bad) = idx.iter().find(|&&i| i >= l) {
            return Err(Error::invalid("index_rows", format!("index {bad} out of range for {l} rows")));
        }
        let w = x.numel() / l.max(1);
        let mut data = Vec::with_capacity(idx.len() * w);
        for &i in idx {
            data.extend_from_slice(x.row(i));
        }
        let mut shape = x.shape().to_vec();
        shape[0] = idx.len();
        let in_shape = x.shape().to_vec();
        let idx = idx.to_vec();
        Ok(self.tape().op(
            Tensor::new(&shape, data)?,
            &[*self],
            Box::new(move |g, _| {
                let mut d = vec![T::zero(); l * w];
                for (k, &i) in idx.iter().enumerate() {
                    for (a, &b) in d[i * w..(i + 1) * w].iter_mut().zip(&g.data()[k * w..(k + 1) * w]) {
                        *a = *a + b;
                    }
                }
                vec![Some(Tensor::new(&in_shape, d).unwrap())]
            }),
        ))
    }

    /// Permutes rows: `out[k] = x[perm[k]]`. `perm` must be a permutation of
    /// `0..L`.
    pub fn gather_permute(&self, perm: &[usize]) -> Result<Var<'t, T>> {
        check_permutation(perm, self.value().shape()[0])?;
        self.index_rows(perm)
    }

    /// Inverse of [`Var::gather_permute`]: `out[perm[k]] = x[k]`.
    pub fn scatter_permute(&self, perm: &[usize]) -> Result<Var<'t, T>> {
        check_permutation(perm, self.value().shape()[0])?;
        let mut inv = vec![0; perm.len()];
        for (k, &p) in perm.iter().enumerate() {
            inv[p] = k;
        }
        self.index_rows(&inv)
    }

    /// Reverses the leading axis.
    pub fn flip_rows(&self) -> Var<'t, T> {
        let l = self.value().shape()[0];
        let idx: Vec<usize> = (0..l).rev().collect();
        self.index_rows(&idx).expect("reversal indices are in range")
    }

    /// `[C*r*r, H, W] -> [C, rH, rW]`.
    pub fn pixel_shuffle(&self, r: usize) -> Result<Var<'t, T>> {
        let out = pixel_shuffle(&self.value(), r)?;
        Ok(self.tape().op(
            out,
            &[*self],
            Box::new(move |g, _| vec![Some(pixel_unshuffle(g, r).unwrap())]),
        ))
    }

    /// `[C, rH, rW] -> [C*r*r, H, W]`.
    pub fn pixel_unshuffle(&self, r: usize) -> Result<Var<'t, T>> {
        let out = pixel_unshuffle(&self.value(), r)?;
        Ok(self.tape().op(
            out,
            &[*self],
            Box::new(move |g, _| vec![Some(pixel_shuffle(g, r).unwrap())]),
        ))
    }

    /// 2x2 average pooling of `[C, H, W]` with even extents.
    pub fn avg_pool2(&self) -> Result<Var<'t, T>> {
        let x = self.value();
        let s = x.shape().to_vec();
        if s.len() != 3 || !s[1].is_multiple_of(2) || !s[2].is_multiple_of(2) {
            return Err(Error::invalid("avg_pool2", format!("needs [C,H,W] with even H,W, got {s:?}")));
        }
        let (c, h, w) = (s[0], s[1] / 2, s[2] / 2);
        let src = x.data();
        let out = Tensor::from_fn(&[c, h, w], |i| {
            let (ch, y, xx) = (i / (h * w), (i / w) % h, i % w);
            let at = |dy: usize, dx: usize| src[(ch * s[1] + 2 * y + dy) * s[2] + 2 * xx + dx].as_f64();
            T::from_f64(0.25 * (at(0, 0) + at(0, 1) + at(1, 0) + at(1, 1)))
        });
        Ok(self.tape().op(
            out,
            &[*self],
            Box::new(move |g, _| {
                let gd = g.data();
                let gx = Tensor::from_fn(&s, |i| {
                    let (ch, y, xx) = (i / (s[1] * s[2]), (i / s[2]) % s[1], i % s[2]);
                    gd[(ch * h + y / 2) * w + xx / 2] * T::from_f64(0.25)
                });
                vec![Some(gx)]
            }),
        ))
    }

    /// Bilinear 2x upsampling of `[C, H, W]` (half-pixel centres, edge clamp).
    pub fn upsample_bilinear2x(&self) -> Result<Var<'t, T>> {
        let x = self.value();
        let s = x.shape().to_vec();
        if s.len() != 3 {
            return Err(Error::invalid("upsample", format!("needs [C,H,W], got {s:?}")));
        }
        let (c, h, w) = (s[0], s[1], s[2]);
        let ty = bilinear_taps(h);
        let tx = bilinear_taps(w);
        let (oh, ow) = (2 * h, 2 * w);
        let src = x.data();
        let mut out = vec![T::zero(); c * oh * ow];
        for ch in 0..c {
            for (oy, &(y0, y1, fy)) in ty.iter().enumerate() {
                for (ox, &(x0, x1, fx)) in tx.iter().enumerate() {
                    let p = |y: usize, xx: usize| src[(ch * h + y) * w + xx].as_f64();
                    let v = (1.0 - fy) * ((1.0 - fx) * p(y0, x0) + fx * p(y0, x1))
                        + fy * ((1.0 - fx) * p(y1, x0) + fx * p(y1, x1));
                    out[(ch * oh + oy) * ow + ox] = T::from_f64(v);
                }
            }
        }
        Ok(self.tape().op(
            Tensor::new(&[c, oh, ow], out)?,
            &[*self],
            Box::new(move |g, _| {
                let gd = g.data();
                let mut acc = vec![0.0f64; c * h * w];
                for ch in 0..c {
                    for (oy, &(y0, y1, fy)) in ty.iter().enumerate() {
                        for (ox, &(x0, x1, fx)) in tx.iter().enumerate() {
                            let gv = gd[(ch * oh + oy) * ow + ox].as_f64();
                            let base = ch * h * w;
                            acc[base + y0 * w + x0] += gv * (1.0 - fy) * (1.0 - fx);
                            acc[base + y0 * w + x1] += gv * (1.0 - fy) * fx;
                            acc[base + y1 * w + x0] += gv * fy * (1.0 - fx);
                            acc[base + y1 * w + x1] += gv * fy * fx;
                        }
                    }
                }
                vec![Some(Tensor::new(&s, acc.into_iter().map(T::from_f64).collect()).unwrap())]
            }),
        ))
    }

    /// Rotates channel pairs `(2k, 2k+1)` of each row of `[L, D]` by the
    /// constant angles `angles[l * D/2 + k]`.
    pub fn rotate_pairs(&self, angles: &[f64]) -> Result<Var<'t, T>> {
        let x = self.value();
        let s = x.shape().to_vec();
        if s.len() != 2 || !s[1].is_multiple_of(2) || angles.len() != s[0] * s[1] / 2 {
            return Err(Error::invalid(
                "rotate_pairs",
                format!("needs [L, even D] and L*D/2 angles, got {s:?} and {}", angles.len()),
            ));
        }
        let cs: Vec<(f64, f64)> = angles.iter().map(|a| (a.cos(), a.sin())).collect();
        let rotate = move |src: &[T], sign: f64| -> Vec<T> {
            let mut out = Vec::with_capacity(src.len());
            for (pair, &(c, s)) in src.chunks_exact(2).zip(&cs) {
                let (a, b) = (pair[0].as_f64(), pair[1].as_f64());
                let s = sign * s;
                out.push(T::from_f64(a * c - b * s));
                out.push(T::from_f64(a * s + b * c));
            }
            out
        };
        let out = Tensor::new(&s, rotate(x.data(), 1.0))?;
        Ok(self.tape().op(
            out,
            &[*self],
            Box::new(move |g, _| vec![Some(Tensor::new(&s, rotate(g.data(), -1.0)).unwrap())]),
        ))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::Tape;

    #[test]
    fn shuffle_shapes_and_identity() {
        let x = Tensor::<f32>::from_fn(&[4, 2, 2], |i| i as f32);
        assert_eq!(pixel_shuffle(&x, 2).unwrap().shape(), &[1, 4, 4]);
        assert_eq!(pixel_shuffle(&x, 1).unwrap(), x);
        assert!(pixel_shuffle(&Tensor::<f32>::zeros(&[3, 2, 2]), 2).is_err());
    }

    #[test]
    fn shuffle_layout() {
        // channel i*2+j lands at sub-pixel (i, j)
        let x = Tensor::<f32>::from_f64(&[4, 1, 1], &[0.0, 1.0, 2.0, 3.0]).unwrap();
        let y = pixel_shuffle(&x, 2).unwrap();
        assert_eq!(y.data(), &[0.0, 1.0, 2.0, 3.0]);
    }

    #[test]
    fn reversal_is_involution() {
        let tape = Tape::<f32>::new();
        let x = tape.leaf(Tensor::from_fn(&[4, 2], |i| i as f32));
        let idx = [3, 2, 1, 0];
        let y = x.index_rows(&idx).unwrap().index_rows(&idx).unwrap();
        assert_eq!(*y.value(), *x.value());
        assert!(x.index_rows(&[4]).is_err());
    }

    #[test]
    fn pool_and_upsample_constants() {
        let tape = Tape::<f64>::new();
        let x = tape.leaf(Tensor::full(&[2, 4, 6], 0.7));
        let p = x.avg_pool2().unwrap();
        assert_eq!(p.shape(), vec![2, 2, 3]);
        assert!(p.value().data().iter().all(|&v| (v - 0.7).abs() < 1e-12));
        let u = p.upsample_bilinear2x().unwrap();
        assert_eq!(u.shape(), vec![2, 4, 6]);
        assert!(u.value().data().iter().all(|&v| (v - 0.7).abs() < 1e-12));
    }

    #[test]
    fn rotation_by_zero_is_identity() {
        let tape = Tape::<f64>::new();
        let x = tape.leaf(Tensor::from_fn(&[2, 4], |i| i as f64 - 3.0));
        let y = x.rotate_pairs(&[0.0; 4]).unwrap();
        assert_eq!(*y.value(), *x.value());
    }
}
