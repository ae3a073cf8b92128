use super::{luma, ClipSeptuplet};
use crate::tensor::Tensor;
use std::fmt;

/// Variance of the 4-neighbour Laplacian of the luma over interior pixels.
pub fn laplacian_variance(frame: &Tensor) -> f64 {
    let (h, w) = (frame.shape()[1], frame.shape()[2]);
    if h < 3 || w < 3 {
        return 0.0;
    }
    let y = luma(frame);
    let mut vals = Vec::with_capacity((h - 2) * (w - 2));
    for r in 1..h - 1 {
        for c in 1..w - 1 {
            let i = r * w + c;
            vals.push(y[i - w] + y[i + w] + y[i - 1] + y[i + 1] - 4.0 * y[i]);
        }
    }
    let n = vals.len() as f64;
    let mean = vals.iter().sum::<f64>() / n;
    vals.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n
}

/// Mean Laplacian variance over a clip's ground-truth frames.
pub fn sharpness(clip: &ClipSeptuplet) -> f64 {
    clip.gt.iter().map(laplacian_variance).sum::<f64>() / clip.gt.len() as f64
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Tier {
    High,
    Medium,
    Low,
}

impl Tier {
    pub const ALL: [Tier; 3] = [Tier::High, Tier::Medium, Tier::Low];

    pub fn label(self) -> &'static str {
        match self {
            Tier::High => "high",
            Tier::Medium => "medium",
            Tier::Low => "low",
        }
    }

    pub fn parse(s: &str) -> Option<Tier> {
        Tier::ALL.into_iter().find(|t| t.label() == s)
    }
}

impl fmt::Display for Tier {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

/// Score cut points: `High` at or above `high`, `Medium` at or above
/// `medium`, `Low` below.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Thresholds {
    pub high: f64,
    pub medium: f64,
}

/// Every clip with its score and tier, in input order.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Tiers {
    pub assignments: Vec<(String, f64, Tier)>,
}

impl Tiers {
    pub fn ids(&self, tier: Tier) -> Vec<&str> {
        self.assignments
            .iter()
            .filter(|a| a.2 == tier)
            .map(|a| a.0.as_str())
            .collect()
    }

    pub fn count(&self, tier: Tier) -> usize {
        self.assignments.iter().filter(|a| a.2 == tier).count()
    }

    pub fn tier_of(&self, id: &str) -> Option<Tier> {
        self.assignments.iter().find(|a| a.0 == id).map(|a| a.2)
    }

    /// CSV with header `clip,score,tier`.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("clip,score,tier\n");
        for (id, score, tier) in &self.assignments {
            s.push_str(&format!("{id},{score:.8},{tier}\n"));
        }
        s
    }

    /// Parses the output of [`Tiers::to_csv`].
    pub fn from_csv(text: &str) -> Option<Tiers> {
        let mut assignments = Vec::new();
        for line in text.lines().skip(1).filter(|l| !l.trim().is_empty()) {
            let mut parts = line.rsplitn(3, ',');
            let tier = Tier::parse(parts.next()?.trim())?;
            let score = parts.next()?.trim().parse().ok()?;
            assignments.push((parts.next()?.to_string(), score, tier));
        }
        Some(Tiers { assignments })
    }
}

pub fn stratify(scores: &[(String, f64)], th: Thresholds) -> Tiers {
    let assignments = scores
        .iter()
        .map(|(id, s)| {
            let tier = if *s >= th.high {
                Tier::High
            } else if *s >= th.medium {
                Tier::Medium
            } else {
                Tier::Low
            };
            (id.clone(), *s, tier)
        })
        .collect();
    Tiers { assignments }
}

/// Cut points giving the requested `(high, medium, low)` proportions when
/// scores are distinct. Proportions are normalised to sum to one.
pub fn quantile_thresholds(scores: &[f64], proportions: [f64; 3]) -> Thresholds {
    let total: f64 = proportions.iter().sum();
    let mut sorted = scores.to_vec();
    sorted.sort_by(|a, b| b.total_cmp(a));
    let n = sorted.len();
    let k_high = ((proportions[0] / total) * n as f64).round() as usize;
    let k_med = (((proportions[0] + proportions[1]) / total) * n as f64).round() as usize;
    let at = |k: usize| if k == 0 { f64::INFINITY } else { sorted[k.min(n) - 1] };
    Thresholds {
        high: at(k_high),
        medium: at(k_med.max(k_high)),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn named(scores: &[f64]) -> Vec<(String, f64)> {
        scores.iter().enumerate().map(|(i, &s)| (format!("c{i}"), s)).collect()
    }

    #[test]
    fn empty_and_equal_scores() {
        let t = stratify(&[], Thresholds { high: 1.0, medium: 0.5 });
        assert!(Tier::ALL.iter().all(|&k| t.count(k) == 0));
        let t = stratify(&named(&[0.7; 5]), Thresholds { high: 1.0, medium: 0.5 });
        assert_eq!(t.count(Tier::Medium), 5);
    }

    #[test]
    fn quantiles_reproduce_proportions() {
        let scores: Vec<f64> = (0..100).map(|i| ((i * 37) % 100) as f64 * 0.01).collect();
        let th = quantile_thresholds(&scores, [0.5, 0.3, 0.2]);
        let t = stratify(&named(&scores), th);
        assert_eq!((t.count(Tier::High), t.count(Tier::Medium), t.count(Tier::Low)), (50, 30, 20));
        assert_eq!(Tiers::from_csv(&t.to_csv()).unwrap().assignments.len(), 100);
    }

    #[test]
    fn flat_frames_have_zero_sharpness() {
        assert_eq!(laplacian_variance(&Tensor::full(&[3, 8, 8], 0.5)), 0.0);
        let cb = Tensor::from_fn(&[3, 8, 8], |i| ((i % 8 + i / 8) % 2) as f32);
        assert!(laplacian_variance(&cb) > 1.0);
    }
}
