//! 2D/3D convolution as im2col followed by a matrix product.
//!
//! Both entry points share one kernel over `[C, T, H, W]` volumes; a 2D
//! convolution is the `T = 1`, `kt = 1` case. Output columns are cut into
//! fixed blocks that workers process independently; partial results are
//! combined in block order.

use super::gemm::{gemm, Layout};
use super::{Scalar, Tensor, Var};
use crate::error::{Error, Result};
use crate::par;

/// Stride and zero padding along (time, height, width).
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ConvGeometry {
    pub stride: [usize; 3],
    pub padding: [usize; 3],
}

impl Default for ConvGeometry {
    fn default() -> Self {
        Self {
            stride: [1; 3],
            padding: [0; 3],
        }
    }
}

impl ConvGeometry {
    pub fn new(stride: [usize; 3], padding: [usize; 3]) -> Self {
        Self { stride, padding }
    }

    /// Unit stride with output extent equal to input extent. Kernel extents
    /// must be odd.
    pub fn same(kernel: [usize; 3]) -> Result<Self> {
        if kernel.iter().any(|k| k % 2 == 0) {
            return Err(Error::invalid(
                "conv",
                format!("same padding needs odd kernel extents, got {kernel:?}"),
            ));
        }
        Ok(Self {
            stride: [1; 3],
            padding: kernel.map(|k| k / 2),
        })
    }
}

#[derive(Clone, Copy, Debug)]
struct Dims {
    ci: usize,
    co: usize,
    inp: [usize; 3],
    k: [usize; 3],
    out: [usize; 3],
    g: ConvGeometry,
}

impl Dims {
    fn in_vol(&self) -> usize {
        self.inp[0] * self.inp[1] * self.inp[2]
    }
    fn out_vol(&self) -> usize {
        self.out[0] * self.out[1] * self.out[2]
    }
    fn k_vol(&self) -> usize {
        self.k[0] * self.k[1] * self.k[2]
    }
    /// Input index along `axis` for output index `o` and kernel tap `k`.
    #[inline]
    fn src(&self, axis: usize, o: usize, k: usize) -> Option<usize> {
        let i = (o * self.g.stride[axis] + k) as isize - self.g.padding[axis] as isize;
        (i >= 0 && (i as usize) < self.inp[axis]).then_some(i as usize)
    }
}

fn out_extent(i: usize, k: usize, s: usize, p: usize) -> Result<usize> {
    if s == 0 || i + 2 * p < k {
        return Err(Error::invalid(
            "conv",
            format!("non-positive output extent (input {i}, kernel {k}, stride {s}, pad {p})"),
        ));
    }
    Ok((i + 2 * p - k) / s + 1)
}

/// Upper bound on the elements of one im2col block.
const BLOCK_ELEMS: usize = 1 << 18;

/// Fixed partition of the output columns; independent of the thread count so
/// reductions over blocks happen in the same order in every build.
fn blocks(d: &Dims) -> Vec<(usize, usize)> {
    let rows = (d.ci * d.k_vol()).max(1);
    let ov = d.out_vol();
    let nb = (BLOCK_ELEMS / rows).clamp(64, ov.max(64));
    (0..ov).step_by(nb).map(|c0| (c0, (c0 + nb).min(ov))).collect()
}

/// Calls `f(row, j0, ow0, ow1, src_row)` for every kernel tap row of the
/// unfolded matrix and every output-row segment inside columns `c0..c1`.
/// `src_row` is the offset of input row `(ci, it, ih)`; columns `j0..` map to
/// output columns `ow0..ow1`.
fn for_each_segment(d: &Dims, c0: usize, c1: usize, mut f: impl FnMut(usize, usize, usize, usize, usize)) {
    let (oh_n, ow_n) = (d.out[1], d.out[2]);
    let mut r = 0;
    for ci in 0..d.ci {
        for kt in 0..d.k[0] {
            for kh in 0..d.k[1] {
                for _kw in 0..d.k[2] {
                    let mut o = c0;
                    while o < c1 {
                        let row = o / ow_n;
                        let ow0 = o % ow_n;
                        let ow1 = (ow_n).min(ow0 + (c1 - o));
                        let (ot, oh) = (row / oh_n, row % oh_n);
                        if let (Some(it), Some(ih)) = (d.src(0, ot, kt), d.src(1, oh, kh)) {
                            f(r, o - c0, ow0, ow1, ((ci * d.inp[0] + it) * d.inp[1] + ih) * d.inp[2]);
                        }
                        o += ow1 - ow0;
                    }
                    r += 1;
                }
            }
        }
    }
}

/// Input column for output column `ow` and tap `kw`, if inside the frame.
#[inline]
fn tap(d: &Dims, r: usize, ow: usize) -> Option<usize> {
    d.src(2, ow, r % d.k[2])
}

/// Unfolds output columns `c0..c1` into a `[ci * k_vol, c1 - c0]` matrix.
fn im2col<T: Scalar>(x: &[T], d: &Dims, c0: usize, c1: usize) -> Vec<T> {
    let nb = c1 - c0;
    let mut col = vec![T::zero(); d.ci * d.k_vol() * nb];
    for_each_segment(d, c0, c1, |r, j0, ow0, ow1, src| {
        let dst = &mut col[r * nb + j0..r * nb + j0 + (ow1 - ow0)];
        for (v, ow) in dst.iter_mut().zip(ow0..ow1) {
            if let Some(iw) = tap(d, r, ow) {
                *v = x[src + iw];
            }
        }
    });
    col
}

/// Adds a `[ci * k_vol, c1 - c0]` column block back onto the input volume.
fn col2im_add<T: Scalar>(col: &[T], d: &Dims, c0: usize, c1: usize, gx: &mut [T]) {
    let nb = c1 - c0;
    for_each_segment(d, c0, c1, |r, j0, ow0, ow1, src| {
        let seg = &col[r * nb + j0..r * nb + j0 + (ow1 - ow0)];
        for (&v, ow) in seg.iter().zip(ow0..ow1) {
            if let Some(iw) = tap(d, r, ow) {
                gx[src + iw] = gx[src + iw] + v;
            }
        }
    });
}

fn forward<T: Scalar>(x: &[T], w: &[T], bias: Option<&[T]>, d: Dims) -> Vec<T> {
    let ov = d.out_vol();
    let kk = d.ci * d.k_vol();
    let parts = blocks(&d);
    let outs = par::map_indexed(parts.len(), |i| {
        let (c0, c1) = parts[i];
        let nb = c1 - c0;
        let col = im2col(x, &d, c0, c1);
        let mut y = vec![T::zero(); d.co * nb];
        gemm(d.co, kk, nb, w, Layout::row_major(kk), &col, Layout::row_major(nb), T::zero(), &mut y, Layout::row_major(nb));
        y
    });
    let mut out = vec![T::zero(); d.co * ov];
    for (&(c0, c1), y) in parts.iter().zip(outs) {
        let nb = c1 - c0;
        for co in 0..d.co {
            let b = bias.map_or(T::zero(), |b| b[co]);
            for (o, &v) in out[co * ov + c0..co * ov + c1].iter_mut().zip(&y[co * nb..(co + 1) * nb]) {
                *o = v + b;
            }
        }
    }
    out
}

/// Input and weight adjoints; either may be skipped.
fn adjoints<T: Scalar>(g: &[T], x: &[T], w: &[T], d: Dims, want_x: bool, want_w: bool) -> (Option<Vec<T>>, Option<Vec<T>>) {
    let ov = d.out_vol();
    let kk = d.ci * d.k_vol();
    let parts = blocks(&d);
    let res = par::map_indexed(parts.len(), |i| {
        let (c0, c1) = parts[i];
        let nb = c1 - c0;
        let gv = &g[c0..];
        let lg = Layout::row_major(ov);
        let gw = want_w.then(|| {
            let col = im2col(x, &d, c0, c1);
            let mut gw = vec![T::zero(); d.co * kk];
            gemm(d.co, nb, kk, gv, lg, &col, Layout::transposed(nb), T::zero(), &mut gw, Layout::row_major(kk));
            gw
        });
        let dcol = want_x.then(|| {
            let mut dcol = vec![T::zero(); kk * nb];
            gemm(kk, d.co, nb, w, Layout::transposed(kk), gv, lg, T::zero(), &mut dcol, Layout::row_major(nb));
            dcol
        });
        (gw, dcol)
    });
    let mut gx = want_x.then(|| vec![T::zero(); d.ci * d.in_vol()]);
    let mut gw = want_w.then(|| vec![T::zero(); d.co * kk]);
    for (&(c0, c1), (pw, dcol)) in parts.iter().zip(res) {
        if let (Some(acc), Some(pw)) = (&mut gw, pw) {
            acc.iter_mut().zip(pw).for_each(|(a, v)| *a = *a + v);
        }
        if let (Some(acc), Some(dcol)) = (&mut gx, dcol) {
            col2im_add(&dcol, &d, c0, c1, acc);
        }
    }
    (gx, gw)
}

impl<'t, T: Scalar> Var<'t, T> {
    /// 3D convolution of `[C_in, T, H, W]` with weights
    /// `[C_out, C_in, kt, kh, kw]` and optional bias `[C_out]`.
    pub fn conv3d(
        &self,
        weight: &Var<'t, T>,
        bias: Option<&Var<'t, T>>,
        geom: ConvGeometry,
    ) -> Result<Var<'t, T>> {
        let xs = self.shape();
        let ws = weight.shape();
        if xs.len() != 4 || ws.len() != 5 {
            return Err(Error::invalid(
                "conv3d",
                format!("expected [C,T,H,W] and 5-d weight, got {xs:?} and {ws:?}"),
            ));
        }
        self.conv_impl(
            weight,
            bias,
            geom,
            [xs[0], xs[1], xs[2], xs[3]],
            [ws[0], ws[1], ws[2], ws[3], ws[4]],
            true,
        )
    }

    /// 2D convolution of `[C_in, H, W]` with weights `[C_out, C_in, kh, kw]`.
    /// Only the spatial entries of `geom` are used.
    pub fn conv2d(
        &self,
        weight: &Var<'t, T>,
        bias: Option<&Var<'t, T>>,
        geom: ConvGeometry,
    ) -> Result<Var<'t, T>> {
        let xs = self.shape();
        let ws = weight.shape();
        if xs.len() != 3 || ws.len() != 4 {
            return Err(Error::invalid(
                "conv2d",
                format!("expected [C,H,W] and 4-d weight, got {xs:?} and {ws:?}"),
            ));
        }
        let geom = ConvGeometry {
            stride: [1, geom.stride[1], geom.stride[2]],
            padding: [0, geom.padding[1], geom.padding[2]],
        };
        self.conv_impl(
            weight,
            bias,
            geom,
            [xs[0], 1, xs[1], xs[2]],
            [ws[0], ws[1], 1, ws[2], ws[3]],
            false,
        )
    }

    fn conv_impl(
        &self,
        weight: &Var<'t, T>,
        bias: Option<&Var<'t, T>>,
        geom: ConvGeometry,
        xs: [usize; 4],
        ws: [usize; 5],
        volumetric: bool,
    ) -> Result<Var<'t, T>> {
        if ws[1] != xs[0] {
            return Err(Error::invalid(
                "conv",
                format!("weight expects {} input channels, input has {}", ws[1], xs[0]),
            ));
        }
        let x = self.value();
        let w = weight.value();
        let b = bias.map(|b| b.value());
        if let Some(b) = &b {
            if b.shape() != [ws[0]] {
                return Err(Error::ShapeMismatch {
                    op: "conv bias",
                    expected: vec![ws[0]],
                    got: b.shape().to_vec(),
                });
            }
        }
        let mut out = [0; 3];
        for a in 0..3 {
            out[a] = out_extent(xs[a + 1], ws[a + 2], geom.stride[a], geom.padding[a])?;
        }
        let d = Dims {
            ci: xs[0],
            co: ws[0],
            inp: [xs[1], xs[2], xs[3]],
            k: [ws[2], ws[3], ws[4]],
            out,
            g: geom,
        };
        let y = forward(x.data(), w.data(), b.as_ref().map(|b| b.data()), d);
        let shape: Vec<usize> = if volumetric {
            vec![d.co, out[0], out[1], out[2]]
        } else {
            vec![d.co, out[1], out[2]]
        };
        let mut parents = vec![*self, *weight];
        if let Some(bv) = bias {
            parents.push(*bv);
        }
        let has_bias = bias.is_some();
        Ok(self.tape().op(
            Tensor::new(&shape, y)?,
            &parents,
            Box::new(move |g, needs| {
                let (gx, gw) = adjoints(g.data(), x.data(), w.data(), d, needs[0], needs[1]);
                let gx = gx.map(|v| Tensor::new(x.shape(), v).unwrap());
                let gw = gw.map(|v| Tensor::new(w.shape(), v).unwrap());
                let mut res = vec![gx, gw];
                if has_bias {
                    let ov = d.out_vol();
                    res.push(needs[2].then(|| {
                        Tensor::from_fn(&[d.co], |co| {
                            T::from_f64(g.data()[co * ov..(co + 1) * ov].iter().map(|v| v.as_f64()).sum())
                        })
                    }));
                }
                res
            }),
        ))
    }
}
