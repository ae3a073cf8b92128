use super::kernel::{self, Slices};
use super::{ScanDims, ScanInputs};
use crate::error::Result;
use crate::tensor::{Scalar, Tensor, Var};

/// Fused selective scan recorded as a single tape node.
///
/// Inputs follow [`ScanInputs`]; `h0` is `[C, S]`. Returns `(y [L, C],
/// h_last [C, S])`.
pub fn selective_scan_op<'t, T: Scalar>(
    x: Var<'t, T>,
    delta: Var<'t, T>,
    a: Var<'t, T>,
    b: Var<'t, T>,
    c: Var<'t, T>,
    d: Var<'t, T>,
    h0: Var<'t, T>,
) -> Result<(Var<'t, T>, Var<'t, T>)> {
    let inputs = ScanInputs {
        x: (*x.value()).clone(),
        delta: (*delta.value()).clone(),
        a: (*a.value()).clone(),
        b: (*b.value()).clone(),
        c: (*c.value()).clone(),
        d: (*d.value()).clone(),
    };
    let dims = inputs.dims()?;
    let ScanDims { len: l, channels: nc, state: s } = dims;
    let h0v = h0.value();
    if h0v.shape() != [nc, s] {
        return Err(crate::Error::ShapeMismatch {
            op: "selective_scan state",
            expected: vec![nc, s],
            got: h0v.shape().to_vec(),
        });
    }
    let h0f = h0v.to_f64_vec();
    let slices = Slices::new(&inputs);
    let run = kernel::forward(&slices, dims, &h0f, true);
    let mut flat: Vec<T> = Vec::with_capacity(l * nc + nc * s);
    flat.extend(run.y.iter().map(|&v| T::from_f64(v)));
    flat.extend(run.h_last.iter().map(|&v| T::from_f64(v)));
    let packed = x.tape().op(
        Tensor::new(&[l * nc + nc * s], flat)?,
        &[x, delta, a, b, c, d, h0],
        Box::new(move |g, _needs| {
            let gf = g.to_f64_vec();
            let gr = kernel::backward(&slices, dims, &h0f, &run, &gf[..l * nc], &gf[l * nc..]);
            let wrap = |shape: &[usize], v: Vec<f64>| {
                Some(Tensor::new(shape, v.into_iter().map(T::from_f64).collect()).unwrap())
            };
            vec![
                wrap(&[l, nc], gr.x),
                wrap(&[l, nc], gr.delta),
                wrap(&[nc, s], gr.a),
                wrap(&[l, s], gr.b),
                wrap(&[l, s], gr.c),
                wrap(&[nc], gr.d),
                wrap(&[nc, s], gr.h0),
            ]
        }),
    );
    let y = packed.narrow(0, 0, l * nc)?.reshape(&[l, nc])?;
    let h = packed.narrow(0, l * nc, nc * s)?.reshape(&[nc, s])?;
    Ok((y, h))
}

/// Recorded parameters of one scan direction; see [`super::SsmParams`].
#[derive(Clone, Copy, Debug)]
pub struct SsmVars<'t, T: Scalar> {
    pub a_log: Var<'t, T>,
    pub d: Var<'t, T>,
    pub w_delta: Var<'t, T>,
    pub b_delta: Var<'t, T>,
    pub w_b: Var<'t, T>,
    pub w_c: Var<'t, T>,
}

impl<'t, T: Scalar> SsmVars<'t, T> {
    /// Projects `x: [L, C]` and scans it from `h0` (zeros when `None`).
    pub fn forward(&self, x: Var<'t, T>, h0: Option<Var<'t, T>>) -> Result<(Var<'t, T>, Var<'t, T>)> {
        let tape = x.tape();
        let delta = x.matmul(&self.w_delta)?.add(&self.b_delta)?.softplus();
        let b = x.matmul(&self.w_b)?;
        let c = x.matmul(&self.w_c)?;
        let a = self.a_log.exp().neg();
        let h0 = match h0 {
            Some(h) => h,
            None => tape.constant(Tensor::zeros(&self.a_log.shape())),
        };
        selective_scan_op(x, delta, a, b, c, self.d, h0)
    }
}
