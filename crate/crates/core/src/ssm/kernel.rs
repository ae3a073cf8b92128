use super::{ScanDims, ScanInputs};
use crate::par;
use crate::tensor::Scalar;

/// Time steps per chunk in the associative scan. Fixed so results do not
/// depend on the worker count.
pub const SCAN_CHUNK: usize = 64;

/// The affine map `h -> a*h + b`, the element type of the scan.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Affine {
    pub a: f64,
    pub b: f64,
}

impl Affine {
    pub const IDENTITY: Affine = Affine { a: 1.0, b: 0.0 };

    /// `self` followed by `next`: `(a2 a1, a2 b1 + b2)`.
    #[inline]
    pub fn then(self, next: Affine) -> Affine {
        Affine {
            a: next.a * self.a,
            b: next.a * self.b + next.b,
        }
    }

    #[inline]
    pub fn apply(self, h: f64) -> f64 {
        self.a * h + self.b
    }
}

/// Inclusive prefix composition of `elems` computed chunk-wise: chunk
/// aggregates are formed independently, prefixed sequentially, then
/// expanded within each chunk.
pub fn inclusive_scan(elems: &[Affine], chunk: usize) -> Vec<Affine> {
    let chunk = chunk.max(1);
    let n_chunks = elems.len().div_ceil(chunk);
    let totals = par::map_indexed(n_chunks, |k| {
        elems[k * chunk..((k + 1) * chunk).min(elems.len())]
            .iter()
            .fold(Affine::IDENTITY, |acc, &e| acc.then(e))
    });
    let mut carry = Vec::with_capacity(n_chunks);
    let mut acc = Affine::IDENTITY;
    for t in &totals {
        carry.push(acc);
        acc = acc.then(*t);
    }
    par::map_indexed(n_chunks, |k| {
        let mut acc = carry[k];
        elems[k * chunk..((k + 1) * chunk).min(elems.len())]
            .iter()
            .map(|&e| {
                acc = acc.then(e);
                acc
            })
            .collect::<Vec<_>>()
    })
    .concat()
}

/// Scan inputs widened to f64.
pub(crate) struct Slices {
    pub x: Vec<f64>,
    pub delta: Vec<f64>,
    pub a: Vec<f64>,
    pub b: Vec<f64>,
    pub c: Vec<f64>,
    pub d: Vec<f64>,
}

impl Slices {
    pub fn new<T: Scalar>(inp: &ScanInputs<T>) -> Self {
        Self {
            x: inp.x.to_f64_vec(),
            delta: inp.delta.to_f64_vec(),
            a: inp.a.to_f64_vec(),
            b: inp.b.to_f64_vec(),
            c: inp.c.to_f64_vec(),
            d: inp.d.to_f64_vec(),
        }
    }
}

pub(crate) struct Run {
    /// `[L, C]`
    pub y: Vec<f64>,
    /// `[C, S]`
    pub h_last: Vec<f64>,
    /// Per channel, the states `h_0..h_{L-1}` as `[L, S]`, when requested.
    pub states: Vec<Vec<f64>>,
    /// Per channel, the discrete transitions `exp(delta_t A)` as `[L, S]`,
    /// kept alongside `states`.
    pub decay: Vec<Vec<f64>>,
}

/// Sequential recurrence, independent across channels.
pub(crate) fn forward(p: &Slices, d: ScanDims, h0: &[f64], keep_states: bool) -> Run {
    let ScanDims { len: l, channels: nc, state: s } = d;
    let per_channel = par::map_indexed(nc, |c| {
        let mut h = h0[c * s..(c + 1) * s].to_vec();
        let mut y = Vec::with_capacity(l);
        let mut states = if keep_states { Vec::with_capacity(l * s) } else { Vec::new() };
        let mut decay = if keep_states { Vec::with_capacity(l * s) } else { Vec::new() };
        let a = &p.a[c * s..(c + 1) * s];
        for t in 0..l {
            let dt = p.delta[t * nc + c];
            let xt = p.x[t * nc + c];
            let bt = &p.b[t * s..(t + 1) * s];
            let ct = &p.c[t * s..(t + 1) * s];
            let mut yt = p.d[c] * xt;
            for k in 0..s {
                let e = (dt * a[k]).exp();
                h[k] = e * h[k] + dt * bt[k] * xt;
                yt += ct[k] * h[k];
                if keep_states {
                    decay.push(e);
                }
            }
            y.push(yt);
            if keep_states {
                states.extend_from_slice(&h);
            }
        }
        (y, h, states, decay)
    });
    let mut y = vec![0.0; l * nc];
    let mut h_last = Vec::with_capacity(nc * s);
    let mut states = Vec::with_capacity(if keep_states { nc } else { 0 });
    let mut decays = Vec::with_capacity(states.capacity());
    for (c, (yc, hc, st, de)) in per_channel.into_iter().enumerate() {
        for (t, v) in yc.into_iter().enumerate() {
            y[t * nc + c] = v;
        }
        h_last.extend(hc);
        if keep_states {
            states.push(st);
            decays.push(de);
        }
    }
    Run {
        y,
        h_last,
        states,
        decay: decays,
    }
}

/// Chunked associative scan over time.
pub(crate) fn forward_chunked(p: &Slices, d: ScanDims, h0: &[f64], chunk: usize) -> (Vec<f64>, Vec<f64>) {
    let ScanDims { len: l, channels: nc, state: s } = d;
    let chunk = chunk.max(1);
    let n_chunks = l.div_ceil(chunk);
    let element = |t: usize, c: usize, k: usize| {
        let dt = p.delta[t * nc + c];
        Affine {
            a: (dt * p.a[c * s + k]).exp(),
            b: dt * p.b[t * s + k] * p.x[t * nc + c],
        }
    };
    // per chunk, the composed map of every (channel, state) lane
    let totals = par::map_indexed(n_chunks, |j| {
        let mut agg = vec![Affine::IDENTITY; nc * s];
        for t in j * chunk..((j + 1) * chunk).min(l) {
            for c in 0..nc {
                for k in 0..s {
                    agg[c * s + k] = agg[c * s + k].then(element(t, c, k));
                }
            }
        }
        agg
    });
    let mut carries = Vec::with_capacity(n_chunks);
    let mut h = h0.to_vec();
    for agg in &totals {
        carries.push(h.clone());
        for (hv, m) in h.iter_mut().zip(agg) {
            *hv = m.apply(*hv);
        }
    }
    let rows = par::map_indexed(n_chunks, |j| {
        let mut h = carries[j].clone();
        let mut out = Vec::with_capacity(chunk * nc);
        for t in j * chunk..((j + 1) * chunk).min(l) {
            for c in 0..nc {
                let mut yt = p.d[c] * p.x[t * nc + c];
                for k in 0..s {
                    let e = element(t, c, k);
                    let hv = &mut h[c * s + k];
                    *hv = e.apply(*hv);
                    yt += p.c[t * s + k] * *hv;
                }
                out.push(yt);
            }
        }
        out
    });
    (rows.concat(), h)
}

/// Adjoint of [`forward`]. Returns gradients for
/// `(x, delta, a, b, c, d, h0)` in their natural layouts.
pub(crate) struct Grads {
    pub x: Vec<f64>,
    pub delta: Vec<f64>,
    pub a: Vec<f64>,
    pub b: Vec<f64>,
    pub c: Vec<f64>,
    pub d: Vec<f64>,
    pub h0: Vec<f64>,
}

pub(crate) fn backward(p: &Slices, d: ScanDims, h0: &[f64], run: &Run, gy: &[f64], gh_last: &[f64]) -> Grads {
    let ScanDims { len: l, channels: nc, state: s } = d;
    struct Channel {
        gx: Vec<f64>,
        gdelta: Vec<f64>,
        ga: Vec<f64>,
        gb: Vec<f64>,
        gc: Vec<f64>,
        gd: f64,
        gh0: Vec<f64>,
    }
    let per_channel = par::map_indexed(nc, |c| {
        let a = &p.a[c * s..(c + 1) * s];
        let states = &run.states[c];
        let decay = &run.decay[c];
        let mut gh = gh_last[c * s..(c + 1) * s].to_vec();
        let mut out = Channel {
            gx: vec![0.0; l],
            gdelta: vec![0.0; l],
            ga: vec![0.0; s],
            gb: vec![0.0; l * s],
            gc: vec![0.0; l * s],
            gd: 0.0,
            gh0: Vec::new(),
        };
        for t in (0..l).rev() {
            let dt = p.delta[t * nc + c];
            let xt = p.x[t * nc + c];
            let g = gy[t * nc + c];
            let ht = &states[t * s..(t + 1) * s];
            let hprev = if t > 0 { &states[(t - 1) * s..t * s] } else { &h0[c * s..(c + 1) * s] };
            let bt = &p.b[t * s..(t + 1) * s];
            let ct = &p.c[t * s..(t + 1) * s];
            out.gd += g * xt;
            let mut gx = g * p.d[c];
            let mut gdt = 0.0;
            for k in 0..s {
                gh[k] += g * ct[k];
                out.gc[t * s + k] += g * ht[k];
                let abar = decay[t * s + k];
                let g_abar = gh[k] * hprev[k];
                gdt += g_abar * abar * a[k] + gh[k] * bt[k] * xt;
                out.ga[k] += g_abar * abar * dt;
                out.gb[t * s + k] += gh[k] * dt * xt;
                gx += gh[k] * dt * bt[k];
                gh[k] *= abar;
            }
            out.gx[t] = gx;
            out.gdelta[t] = gdt;
        }
        out.gh0 = gh;
        out
    });
    let mut g = Grads {
        x: vec![0.0; l * nc],
        delta: vec![0.0; l * nc],
        a: Vec::with_capacity(nc * s),
        b: vec![0.0; l * s],
        c: vec![0.0; l * s],
        d: Vec::with_capacity(nc),
        h0: Vec::with_capacity(nc * s),
    };
    for (c, ch) in per_channel.into_iter().enumerate() {
        for t in 0..l {
            g.x[t * nc + c] = ch.gx[t];
            g.delta[t * nc + c] = ch.gdelta[t];
        }
        for (acc, v) in g.b.iter_mut().zip(&ch.gb) {
            *acc += v;
        }
        for (acc, v) in g.c.iter_mut().zip(&ch.gc) {
            *acc += v;
        }
        g.a.extend(ch.ga);
        g.d.push(ch.gd);
        g.h0.extend(ch.gh0);
    }
    g
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    proptest! {
        #[test]
        fn chunked_scan_matches_fold(
            elems in prop::collection::vec((0.0f64..1.0, -2.0f64..2.0), 1..300),
            chunk in 1usize..80,
        ) {
            let elems: Vec<Affine> = elems.into_iter().map(|(a, b)| Affine { a, b }).collect();
            let scanned = inclusive_scan(&elems, chunk);
            let mut acc = Affine::IDENTITY;
            for (e, s) in elems.iter().zip(&scanned) {
                acc = acc.then(*e);
                prop_assert!((acc.a - s.a).abs() <= 1e-12 * (1.0 + acc.a.abs()));
                prop_assert!((acc.b - s.b).abs() <= 1e-12 * (1.0 + acc.b.abs()));
            }
        }

        #[test]
        fn composition_is_associative(
            x in (0.0f64..1.0, -2.0f64..2.0),
            y in (0.0f64..1.0, -2.0f64..2.0),
            z in (0.0f64..1.0, -2.0f64..2.0),
        ) {
            let (x, y, z) = (Affine { a: x.0, b: x.1 }, Affine { a: y.0, b: y.1 }, Affine { a: z.0, b: z.1 });
            let l = x.then(y).then(z);
            let r = x.then(y.then(z));
            prop_assert!((l.a - r.a).abs() < 1e-14 && (l.b - r.b).abs() < 1e-12);
        }
    }
}
