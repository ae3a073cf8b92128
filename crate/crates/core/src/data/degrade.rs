use super::{ClipSeptuplet, INPUT_FRAMES};
use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Sharpness parameter of the cubic convolution kernel.
pub const BICUBIC_A: f64 = -0.5;

/// Keys' cubic convolution kernel.
pub fn cubic(x: f64, a: f64) -> f64 {
    let x = x.abs();
    if x <= 1.0 {
        ((a + 2.0) * x - (a + 3.0)) * x * x + 1.0
    } else if x < 2.0 {
        ((a * x - 5.0 * a) * x + 8.0 * a) * x - 4.0 * a
    } else {
        0.0
    }
}

/// Source indices and normalised weights of each output sample.
#[derive(Clone, Debug, PartialEq)]
pub struct Taps {
    pub index: Vec<Vec<usize>>,
    pub weight: Vec<Vec<f64>>,
}

/// Antialiased bicubic taps mapping `in_len` samples to `out_len`
/// (`out_len <= in_len`): the kernel is widened by the reduction factor and
/// out-of-range taps clamp to the border.
pub fn resample_taps(in_len: usize, out_len: usize) -> Taps {
    let k = in_len as f64 / out_len as f64;
    let support = 2.0 * k;
    let mut index = Vec::with_capacity(out_len);
    let mut weight = Vec::with_capacity(out_len);
    for o in 0..out_len {
        let centre = (o as f64 + 0.5) * k - 0.5;
        let lo = (centre - support).floor() as isize;
        let hi = (centre + support).ceil() as isize;
        let mut idx = Vec::new();
        let mut wts = Vec::new();
        for i in lo..=hi {
            let w = cubic((centre - i as f64) / k, BICUBIC_A);
            if w != 0.0 {
                idx.push(i.clamp(0, in_len as isize - 1) as usize);
                wts.push(w);
            }
        }
        let total: f64 = wts.iter().sum();
        wts.iter_mut().for_each(|w| *w /= total);
        index.push(idx);
        weight.push(wts);
    }
    Taps { index, weight }
}

/// Bicubic downscale of `[3, H, W]` by an integer factor `s`.
pub fn bicubic_downscale(frame: &Tensor, s: usize) -> Result<Tensor> {
    let sh = frame.shape();
    if sh.len() != 3 || s == 0 || sh[1] % s != 0 || sh[2] % s != 0 {
        return Err(Error::invalid(
            "degrade",
            format!("frame {sh:?} not divisible by scale {s}"),
        ));
    }
    let (c, h, w) = (sh[0], sh[1], sh[2]);
    let (oh, ow) = (h / s, w / s);
    let tx = resample_taps(w, ow);
    let ty = resample_taps(h, oh);
    let src = frame.to_f64_vec();
    let mut rows = vec![0.0; c * h * ow];
    for ch in 0..c {
        for y in 0..h {
            let line = &src[(ch * h + y) * w..(ch * h + y + 1) * w];
            for x in 0..ow {
                rows[(ch * h + y) * ow + x] = tx.index[x].iter().zip(&tx.weight[x]).map(|(&i, &wt)| wt * line[i]).sum();
            }
        }
    }
    let mut out = Vec::with_capacity(c * oh * ow);
    for ch in 0..c {
        for y in 0..oh {
            for x in 0..ow {
                let v: f64 = ty.index[y]
                    .iter()
                    .zip(&ty.weight[y])
                    .map(|(&i, &wt)| wt * rows[(ch * h + i) * ow + x])
                    .sum();
                out.push(v as f32);
            }
        }
    }
    Tensor::new(&[c, oh, ow], out)
}

/// Fills `clip.lr` with frames 0, 2, 4, 6 downscaled by `s`.
pub fn degrade(clip: &mut ClipSeptuplet, s: usize) -> Result<()> {
    if s != 2 && s != 4 {
        return Err(Error::invalid("degrade", format!("scale {s} not in {{2, 4}}")));
    }
    clip.lr = INPUT_FRAMES
        .iter()
        .map(|&i| bicubic_downscale(&clip.gt[i], s))
        .collect::<Result<_>>()?;
    Ok(())
}
