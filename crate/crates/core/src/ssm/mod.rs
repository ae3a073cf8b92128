//! Selective state-space scan.
//!
//! For a sequence `x` of `L` tokens with `C` channels and a state width `S`:
//!
//! ```text
//! delta_t = softplus(x_t W_delta + b_delta)        [C]
//! B_t     = x_t W_B,  C_t = x_t W_C                [S]
//! A       = -exp(A_log)                            [C, S]
//! h_t     = exp(delta_t A) * h_{t-1} + delta_t B_t x_t
//! y_t     = C_t . h_t + D * x_t
//! ```
//!
//! The recurrence is affine in `h`, so `(a, b)` pairs compose associatively
//! as `(a2 a1, a2 b1 + b2)`; [`scan_parallel`] exploits that to split the
//! time axis into independently processed chunks.

mod kernel;
mod taped;

pub use kernel::{inclusive_scan, Affine, SCAN_CHUNK};
pub use taped::{selective_scan_op, SsmVars};

use crate::error::{Error, Result};
use crate::tensor::{Scalar, Tensor};
use rand::Rng;
use rand_distr::{Distribution, Normal};

/// Per-token discretisation inputs of one scan.
#[derive(Clone, Debug)]
pub struct ScanInputs<T: Scalar = f32> {
    /// `[L, C]`
    pub x: Tensor<T>,
    /// `[L, C]`, strictly positive
    pub delta: Tensor<T>,
    /// `[C, S]`, strictly negative
    pub a: Tensor<T>,
    /// `[L, S]`
    pub b: Tensor<T>,
    /// `[L, S]`
    pub c: Tensor<T>,
    /// `[C]`
    pub d: Tensor<T>,
}

/// Hidden state `[C, S]` after a prefix of the sequence.
#[derive(Clone, Debug, PartialEq)]
pub struct SsmState<T: Scalar = f32> {
    pub h: Tensor<T>,
}

impl<T: Scalar> SsmState<T> {
    pub fn zeros(channels: usize, state: usize) -> Self {
        Self {
            h: Tensor::zeros(&[channels, state]),
        }
    }
}

/// Extents `(L, C, S)` of a validated scan.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ScanDims {
    pub len: usize,
    pub channels: usize,
    pub state: usize,
}

impl<T: Scalar> ScanInputs<T> {
    pub fn dims(&self) -> Result<ScanDims> {
        let xs = self.x.shape();
        if xs.len() != 2 || xs[0] == 0 {
            return Err(Error::invalid("selective_scan", format!("x must be [L>=1, C], got {xs:?}")));
        }
        let (l, c) = (xs[0], xs[1]);
        let s = self.a.shape().get(1).copied().unwrap_or(0);
        let want: [(&Tensor<T>, Vec<usize>); 5] = [
            (&self.delta, vec![l, c]),
            (&self.a, vec![c, s]),
            (&self.b, vec![l, s]),
            (&self.c, vec![l, s]),
            (&self.d, vec![c]),
        ];
        for (t, shape) in want {
            if t.shape() != shape.as_slice() {
                return Err(Error::ShapeMismatch {
                    op: "selective_scan",
                    expected: shape,
                    got: t.shape().to_vec(),
                });
            }
        }
        for (name, t) in [("x", &self.x), ("delta", &self.delta), ("A", &self.a), ("B", &self.b), ("C", &self.c), ("D", &self.d)] {
            if !t.all_finite() {
                return Err(Error::NonFinite(format!("selective_scan input {name}")));
            }
        }
        Ok(ScanDims {
            len: l,
            channels: c,
            state: s,
        })
    }

    /// Time-reversed copy of the per-token inputs.
    pub fn reversed(&self) -> Self {
        let rev = |t: &Tensor<T>| {
            let l = t.shape()[0];
            let rows: Vec<Tensor<T>> = (0..l).rev().map(|i| t.index0(i)).collect();
            Tensor::stack(&rows).expect("rows share a shape")
        };
        Self {
            x: rev(&self.x),
            delta: rev(&self.delta),
            a: self.a.clone(),
            b: rev(&self.b),
            c: rev(&self.c),
            d: self.d.clone(),
        }
    }
}

fn check_state<T: Scalar>(h0: &SsmState<T>, dims: ScanDims) -> Result<()> {
    if h0.h.shape() != [dims.channels, dims.state] {
        return Err(Error::ShapeMismatch {
            op: "selective_scan state",
            expected: vec![dims.channels, dims.state],
            got: h0.h.shape().to_vec(),
        });
    }
    if !h0.h.all_finite() {
        return Err(Error::NonFinite("selective_scan initial state".into()));
    }
    Ok(())
}

fn package<T: Scalar>(y: Vec<f64>, h: Vec<f64>, dims: ScanDims) -> (Tensor<T>, SsmState<T>) {
    let y = Tensor::new(&[dims.len, dims.channels], y.into_iter().map(T::from_f64).collect()).unwrap();
    let h = Tensor::new(&[dims.channels, dims.state], h.into_iter().map(T::from_f64).collect()).unwrap();
    (y, SsmState { h })
}

/// Straight left-to-right recurrence.
pub fn scan_sequential<T: Scalar>(inp: &ScanInputs<T>, h0: &SsmState<T>) -> Result<(Tensor<T>, SsmState<T>)> {
    let dims = inp.dims()?;
    check_state(h0, dims)?;
    let run = kernel::forward(&kernel::Slices::new(inp), dims, &h0.h.to_f64_vec(), false);
    Ok(package(run.y, run.h_last, dims))
}

/// Chunked associative scan with the same contract as [`scan_sequential`].
pub fn scan_parallel<T: Scalar>(inp: &ScanInputs<T>, h0: &SsmState<T>) -> Result<(Tensor<T>, SsmState<T>)> {
    let dims = inp.dims()?;
    check_state(h0, dims)?;
    let (y, h) = kernel::forward_chunked(&kernel::Slices::new(inp), dims, &h0.h.to_f64_vec(), SCAN_CHUNK);
    Ok(package(y, h, dims))
}

/// Learnable projections of one selective scan direction.
#[derive(Clone, Debug)]
pub struct SsmParams<T: Scalar = f32> {
    /// `[C, S]`; the transition matrix is `-exp(a_log)`.
    pub a_log: Tensor<T>,
    /// `[C]`
    pub d: Tensor<T>,
    /// `[C, C]`
    pub w_delta: Tensor<T>,
    /// `[C]`
    pub b_delta: Tensor<T>,
    /// `[C, S]`
    pub w_b: Tensor<T>,
    /// `[C, S]`
    pub w_c: Tensor<T>,
}

impl<T: Scalar> SsmParams<T> {
    /// Standard initialisation: `A_log[c, s] = ln(s + 1)`, unit skip, and a
    /// step-size bias placing `softplus` in `[1e-3, 1e-1]`.
    pub fn init<R: Rng>(channels: usize, state: usize, rng: &mut R) -> Self {
        let (c, s) = (channels, state);
        let std = 1.0 / (c as f64).sqrt();
        let normal = Normal::new(0.0, std).unwrap();
        let mut draw = |shape: &[usize], scale: f64| {
            Tensor::from_fn(shape, |_| T::from_f64(scale * normal.sample(rng)))
        };
        let w_delta = draw(&[c, c], 0.1);
        let w_b = draw(&[c, s], 1.0);
        let w_c = draw(&[c, s], 1.0);
        let b_delta = Tensor::from_fn(&[c], |i| {
            let frac = if c > 1 { i as f64 / (c - 1) as f64 } else { 0.5 };
            let dt = (1e-3f64.ln() + frac * (1e-1f64.ln() - 1e-3f64.ln())).exp();
            // inverse softplus
            T::from_f64(dt + (-(-dt).exp_m1()).ln())
        });
        Self {
            a_log: Tensor::from_fn(&[c, s], |i| T::from_f64(((i % s) as f64 + 1.0).ln())),
            d: Tensor::ones(&[c]),
            w_delta,
            b_delta,
            w_b,
            w_c,
        }
    }

    pub fn channels(&self) -> usize {
        self.d.numel()
    }

    pub fn state(&self) -> usize {
        self.a_log.shape()[1]
    }

    /// Continuous transition matrix `-exp(a_log)`.
    pub fn a(&self) -> Tensor<T> {
        self.a_log.map(|v| -v.exp())
    }

    /// Computes the per-token scan inputs for `x: [L, C]`.
    pub fn project(&self, x: &Tensor<T>) -> Result<ScanInputs<T>> {
        let xs = x.shape();
        let c = self.channels();
        if xs.len() != 2 || xs[1] != c {
            return Err(Error::ShapeMismatch {
                op: "ssm project",
                expected: vec![xs.first().copied().unwrap_or(0), c],
                got: xs.to_vec(),
            });
        }
        let l = xs[0];
        let s = self.state();
        let lin = |w: &Tensor<T>, out: usize| -> Vec<f64> {
            let mut r = vec![0.0; l * out];
            for t in 0..l {
                for i in 0..c {
                    let xv = x.data()[t * c + i].as_f64();
                    for j in 0..out {
                        r[t * out + j] += xv * w.data()[i * out + j].as_f64();
                    }
                }
            }
            r
        };
        let dpre = lin(&self.w_delta, c);
        let delta = Tensor::from_fn(&[l, c], |i| {
            T::from_f64(crate::tensor::softplus(dpre[i] + self.b_delta.data()[i % c].as_f64()))
        });
        let b = lin(&self.w_b, s);
        let cc = lin(&self.w_c, s);
        Ok(ScanInputs {
            x: x.clone(),
            delta,
            a: self.a(),
            b: Tensor::new(&[l, s], b.into_iter().map(T::from_f64).collect())?,
            c: Tensor::new(&[l, s], cc.into_iter().map(T::from_f64).collect())?,
            d: self.d.clone(),
        })
    }
}

/// Projects `x` through `p` and runs the sequential recurrence from `h0`.
pub fn selective_scan_sequential<T: Scalar>(
    x: &Tensor<T>,
    p: &SsmParams<T>,
    h0: &SsmState<T>,
) -> Result<(Tensor<T>, SsmState<T>)> {
    scan_sequential(&p.project(x)?, h0)
}

/// Projects `x` through `p` and runs the chunked associative scan from `h0`.
pub fn selective_scan_parallel<T: Scalar>(
    x: &Tensor<T>,
    p: &SsmParams<T>,
    h0: &SsmState<T>,
) -> Result<(Tensor<T>, SsmState<T>)> {
    scan_parallel(&p.project(x)?, h0)
}

/// Forward scan of `x` plus the un-reversed scan of `reverse(x)`, both from
/// a zero state.
pub fn bidirectional_scan<T: Scalar>(
    x: &Tensor<T>,
    p_fwd: &SsmParams<T>,
    p_bwd: &SsmParams<T>,
) -> Result<Tensor<T>> {
    let fwd = p_fwd.project(x)?;
    let dims = fwd.dims()?;
    let (yf, _) = scan_sequential(&fwd, &SsmState::zeros(dims.channels, p_fwd.state()))?;
    let rev_x = p_bwd.project(x)?.reversed();
    let (yb, _) = scan_sequential(&rev_x, &SsmState::zeros(dims.channels, p_bwd.state()))?;
    let l = dims.len;
    let c = dims.channels;
    Ok(Tensor::from_fn(&[l, c], |i| {
        let (t, ch) = (i / c, i % c);
        yf.data()[i] + yb.data()[(l - 1 - t) * c + ch]
    }))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn random_inputs(l: usize, c: usize, s: usize, seed: u64) -> ScanInputs<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let p = SsmParams::<f64>::init(c, s, &mut rng);
        let x = Tensor::from_fn(&[l, c], |_| rng.random_range(-1.0..1.0));
        p.project(&x).unwrap()
    }

    #[test]
    fn zero_input_matrix_reduces_to_skip() {
        let mut inp = random_inputs(6, 3, 2, 3);
        inp.b = Tensor::zeros(&[6, 2]);
        let (y, h) = scan_sequential(&inp, &SsmState::zeros(3, 2)).unwrap();
        for (i, &v) in y.data().iter().enumerate() {
            assert_eq!(v, inp.d.data()[i % 3] * inp.x.data()[i]);
        }
        assert!(h.h.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn single_step_closed_form() {
        let inp = random_inputs(1, 2, 3, 4);
        let (y, h) = scan_sequential(&inp, &SsmState::zeros(2, 3)).unwrap();
        for c in 0..2 {
            let mut yc = inp.d.data()[c] * inp.x.data()[c];
            for s in 0..3 {
                let hv = inp.delta.data()[c] * inp.b.data()[s] * inp.x.data()[c];
                assert!((h.h.data()[c * 3 + s] - hv).abs() < 1e-15);
                yc += inp.c.data()[s] * hv;
            }
            assert!((y.data()[c] - yc).abs() < 1e-14);
        }
    }

    #[test]
    fn length_one_parallel_equals_sequential_exactly() {
        let inp = random_inputs(1, 4, 3, 5);
        let h0 = SsmState { h: Tensor::from_fn(&[4, 3], |i| i as f64 * 0.1) };
        assert_eq!(scan_sequential(&inp, &h0).unwrap(), scan_parallel(&inp, &h0).unwrap());
    }

    #[test]
    fn rejects_bad_input() {
        let mut inp = random_inputs(3, 2, 2, 6);
        inp.x.data_mut()[0] = f64::NAN;
        assert!(matches!(scan_sequential(&inp, &SsmState::zeros(2, 2)), Err(Error::NonFinite(_))));
        let inp = random_inputs(3, 2, 2, 6);
        assert!(scan_sequential(&inp, &SsmState::zeros(3, 2)).is_err());
    }

    #[test]
    fn transition_is_negative_and_step_positive() {
        let inp = random_inputs(16, 4, 8, 7);
        assert!(inp.a.data().iter().all(|&v| v < 0.0));
        assert!(inp.delta.data().iter().all(|&v| v > 0.0));
    }
}
