use crate::error::Result;
use crate::tensor::{Tape, Tensor, Var};
use rand::seq::index::sample;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

/// Tolerances for a central-difference check.
#[derive(Clone, Copy, Debug)]
pub struct Tolerance {
    /// Central difference step.
    pub step: f64,
    pub rel: f64,
    pub abs: f64,
    /// Coordinates probed per checked tensor.
    pub coords: usize,
    /// Largest fraction of probed coordinates that may be excused as lying
    /// within one step of a non-differentiable point.
    pub max_kink_fraction: f64,
}

impl Default for Tolerance {
    fn default() -> Self {
        Self {
            step: 1e-3,
            rel: 1e-3,
            abs: 1e-5,
            coords: 6,
            max_kink_fraction: 0.25,
        }
    }
}

/// Outcome of checking one function on one or more random instances.
#[derive(Clone, Debug, Default)]
pub struct CheckReport {
    pub name: String,
    pub instances: usize,
    pub coords: usize,
    pub kinks: usize,
    pub failures: usize,
    pub worst_rel: f64,
    pub first_failure: Option<String>,
}

impl CheckReport {
    pub fn new(name: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            ..Default::default()
        }
    }

    pub fn passed(&self) -> bool {
        self.failures == 0
            && self.coords > 0
            && (self.kinks as f64) <= 0.25 * self.coords as f64
    }

    pub fn merge(&mut self, other: CheckReport) {
        self.instances += other.instances;
        self.coords += other.coords;
        self.kinks += other.kinks;
        self.failures += other.failures;
        self.worst_rel = self.worst_rel.max(other.worst_rel);
        if self.first_failure.is_none() {
            self.first_failure = other.first_failure;
        }
    }
}

impl std::fmt::Display for CheckReport {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "{} {:<24} instances={:<3} coords={:<5} kinks={:<3} worst_rel={:.2e}",
            if self.passed() { "PASS" } else { "FAIL" },
            self.name,
            self.instances,
            self.coords,
            self.kinks,
            self.worst_rel
        )?;
        if let Some(msg) = &self.first_failure {
            write!(f, " first_failure: {msg}")?;
        }
        Ok(())
    }
}

/// Tensor of i.i.d. standard normal draws.
pub fn randn(rng: &mut ChaCha8Rng, shape: &[usize]) -> Tensor<f64> {
    Tensor::from_fn(shape, |_| rng.sample(StandardNormal))
}

/// Compares tape gradients of `f` against central differences.
///
/// `f` maps the recorded inputs to an output of any shape; the harness
/// contracts it with a fixed random weighting so every output element
/// contributes. Only tensors whose index appears in `check` are probed.
pub fn check_function<F>(
    name: &str,
    inputs: &[Tensor<f64>],
    check: &[usize],
    f: F,
    tol: Tolerance,
    rng: &mut ChaCha8Rng,
) -> Result<CheckReport>
where
    F: for<'t> Fn(&'t Tape<f64>, &[Var<'t, f64>]) -> Result<Var<'t, f64>>,
{
    let weights = {
        let tape = Tape::new();
        let vars: Vec<_> = inputs.iter().map(|t| tape.constant(t.clone())).collect();
        let out = f(&tape, &vars)?;
        randn(rng, &out.shape())
    };
    let eval = |inputs: &[Tensor<f64>]| -> Result<f64> {
        let tape = Tape::new();
        let vars: Vec<_> = inputs.iter().map(|t| tape.constant(t.clone())).collect();
        let out = f(&tape, &vars)?;
        Ok(out
            .value()
            .data()
            .iter()
            .zip(weights.data())
            .map(|(a, b)| a * b)
            .sum())
    };

    let tape = Tape::new();
    let vars: Vec<_> = inputs
        .iter()
        .enumerate()
        .map(|(i, t)| {
            if check.contains(&i) {
                tape.leaf(t.clone())
            } else {
                tape.constant(t.clone())
            }
        })
        .collect();
    let out = f(&tape, &vars)?;
    let w = tape.constant(weights.clone());
    let loss = out.mul(&w)?.sum();
    tape.backward(loss)?;
    let base = loss.item();

    let mut report = CheckReport::new(name);
    report.instances = 1;
    let mut probe = inputs.to_vec();
    for &ti in check {
        let analytic = vars[ti].grad().unwrap_or_else(|| Tensor::zeros(inputs[ti].shape()));
        let n = inputs[ti].numel();
        let picks = sample(rng, n, tol.coords.min(n)).into_vec();
        for idx in picks {
            let orig = inputs[ti].data()[idx];
            probe[ti].data_mut()[idx] = orig + tol.step;
            let up = eval(&probe)?;
            probe[ti].data_mut()[idx] = orig - tol.step;
            let down = eval(&probe)?;
            probe[ti].data_mut()[idx] = orig;

            let central = (up - down) / (2.0 * tol.step);
            let right = (up - base) / tol.step;
            let left = (base - down) / tol.step;
            let a = analytic.data()[idx];
            let err = (a - central).abs();
            let scale = a.abs().max(central.abs());
            report.coords += 1;
            if err <= tol.abs + tol.rel * scale {
                if scale > tol.abs {
                    report.worst_rel = report.worst_rel.max(err / scale);
                }
                continue;
            }
            // A mismatch no larger than the jump between one-sided slopes
            // means the stencil crossed a kink (e.g. a ReLU switching).
            if err <= (right - left).abs() {
                report.kinks += 1;
                continue;
            }
            report.failures += 1;
            report.worst_rel = report.worst_rel.max(err / scale.max(tol.abs));
            if report.first_failure.is_none() {
                report.first_failure = Some(format!(
                    "input {ti}[{idx}]: analytic {a:.6e} vs numeric {central:.6e}"
                ));
            }
        }
    }
    if (report.kinks as f64) > tol.max_kink_fraction * report.coords as f64 {
        report.first_failure.get_or_insert_with(|| {
            format!("{} of {} coordinates straddled kinks", report.kinks, report.coords)
        });
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    #[test]
    fn detects_wrong_gradient() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let x = randn(&mut rng, &[5]);
        // square() is correct; a deliberately scaled copy is not
        let ok = check_function("sq", std::slice::from_ref(&x), &[0], |_, v| Ok(v[0].square()), Tolerance::default(), &mut rng).unwrap();
        assert!(ok.passed(), "{ok}");
        let bad = check_function(
            "bad",
            &[x],
            &[0],
            |tape, v| {
                // value of x^2 but gradient of 3x^2 / 2 ... built from a detached copy
                let detached = tape.constant((*v[0].value()).clone());
                v[0].mul(&detached)?.scale(1.5).sub(&detached.square().scale(0.5))
            },
            Tolerance::default(),
            &mut rng,
        )
        .unwrap();
        assert!(!bad.passed());
    }
}
