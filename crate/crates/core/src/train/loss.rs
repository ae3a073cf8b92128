use crate::error::{Error, Result};
use crate::tensor::{Scalar, Var};

/// Smoothing constant of the Charbonnier penalty.
pub const CHARBONNIER_EPS: f64 = 1e-3;

/// Mean of `sqrt((p - g)^2 + eps^2)` over every pixel of every frame.
pub fn charbonnier_loss<'t, T: Scalar>(pred: &[Var<'t, T>], gt: &[Var<'t, T>]) -> Result<Var<'t, T>> {
    if pred.len() != gt.len() || pred.is_empty() {
        return Err(Error::invalid(
            "charbonnier_loss",
            format!("{} predicted vs {} target frames", pred.len(), gt.len()),
        ));
    }
    let mut total: Option<Var<'t, T>> = None;
    let mut count = 0;
    for (p, g) in pred.iter().zip(gt) {
        if p.shape() != g.shape() {
            return Err(Error::ShapeMismatch {
                op: "charbonnier_loss",
                expected: g.shape(),
                got: p.shape(),
            });
        }
        count += p.value().numel();
        let term = p.sub(g)?.square().add_scalar(CHARBONNIER_EPS * CHARBONNIER_EPS).sqrt().sum();
        total = Some(match total {
            None => term,
            Some(t) => t.add(&term)?,
        });
    }
    Ok(total.expect("non-empty").scale(1.0 / count as f64))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::{Tape, Tensor};

    #[test]
    fn floor_and_single_pixel() {
        let tape = Tape::<f64>::new();
        let a = tape.leaf(Tensor::full(&[3, 2, 2], 0.5));
        let l = charbonnier_loss(&[a, a], &[a, a]).unwrap();
        assert!((l.item() - CHARBONNIER_EPS).abs() < 1e-15);
        let mut off = Tensor::zeros(&[1, 1, 1]);
        off.data_mut()[0] = 1.0;
        let p = tape.leaf(off);
        let g = tape.leaf(Tensor::zeros(&[1, 1, 1]));
        let l = charbonnier_loss(&[p], &[g]).unwrap();
        assert!((l.item() - (1.0f64 + 1e-6).sqrt()).abs() < 1e-15);
        assert!(charbonnier_loss(&[p], &[a]).is_err());
    }
}
