//! Tree-structured Parzen estimator: independent per-dimension density models.

use rand::Rng;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

/// One search dimension.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Domain {
    /// Log-uniform on `[low, high]`, modeled in natural-log space.
    LogUniform { low: f64, high: f64 },
    Uniform { low: f64, high: f64 },
    /// Integers `low..=high`, modeled as quantized continuous values.
    Integer { low: i64, high: i64 },
    /// Indices `0..n`.
    Categorical(usize),
    Fixed(f64),
}

impl Domain {
    pub fn contains(&self, v: f64) -> bool {
        match *self {
            Domain::LogUniform { low, high } | Domain::Uniform { low, high } => v >= low && v <= high,
            Domain::Integer { low, high } => v.fract() == 0.0 && v >= low as f64 && v <= high as f64,
            Domain::Categorical(n) => v.fract() == 0.0 && v >= 0.0 && (v as usize) < n,
            Domain::Fixed(f) => v == f,
        }
    }

    /// Continuous modeling interval, or `None` for categorical and fixed dimensions.
    fn bounds(&self) -> Option<(f64, f64)> {
        match *self {
            Domain::LogUniform { low, high } => Some((low.ln(), high.ln())),
            Domain::Uniform { low, high } => Some((low, high)),
            Domain::Integer { low, high } => Some((low as f64 - 0.5, high as f64 + 0.5)),
            _ => None,
        }
    }

    fn to_model(&self, v: f64) -> f64 {
        match self {
            Domain::LogUniform { .. } => v.ln(),
            _ => v,
        }
    }

    fn from_model(&self, x: f64) -> f64 {
        match *self {
            Domain::LogUniform { low, high } => x.exp().clamp(low, high),
            Domain::Uniform { low, high } => x.clamp(low, high),
            Domain::Integer { low, high } => x.round().clamp(low as f64, high as f64),
            _ => x,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TpeConfig {
    /// Fraction of completed trials treated as good.
    pub gamma: f64,
    pub n_candidates: usize,
    /// Completed trials drawn from the prior before modeling starts.
    pub n_startup: usize,
    pub prior_weight: f64,
}

impl Default for TpeConfig {
    fn default() -> Self {
        Self {
            gamma: 0.25,
            n_candidates: 24,
            n_startup: 10,
            prior_weight: 1.0,
        }
    }
}

const FULL_WEIGHT_RECENT: usize = 25;

/// Older observations beyond the most recent 25 ramp linearly down toward `1/n`.
fn forgetting_weights(n: usize) -> Vec<f64> {
    if n < FULL_WEIGHT_RECENT {
        return vec![1.0; n];
    }
    let ramp = n - FULL_WEIGHT_RECENT;
    let mut w: Vec<f64> = (0..ramp)
        .map(|i| {
            if ramp == 1 {
                1.0 / n as f64
            } else {
                1.0 / n as f64 + (1.0 - 1.0 / n as f64) * i as f64 / (ramp - 1) as f64
            }
        })
        .collect();
    w.extend(std::iter::repeat_n(1.0, FULL_WEIGHT_RECENT));
    w
}

fn std_normal() -> Normal {
    Normal::new(0.0, 1.0).expect("unit normal")
}

fn log_sum_exp(xs: &[f64]) -> f64 {
    let m = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return m;
    }
    m + xs.iter().map(|x| (x - m).exp()).sum::<f64>().ln()
}

/// Truncated-normal mixture on `[low, high]`.
#[derive(Debug, Clone)]
struct Parzen {
    mus: Vec<f64>,
    sigmas: Vec<f64>,
    weights: Vec<f64>,
    low: f64,
    high: f64,
}

impl Parzen {
    /// Observations in chronological order; the prior is a wide component at the center.
    fn fit(obs: &[f64], low: f64, high: f64, prior_weight: f64) -> Self {
        let prior_mu = 0.5 * (low + high);
        let prior_sigma = high - low;
        let mut comps: Vec<(f64, f64, bool)> = obs
            .iter()
            .zip(forgetting_weights(obs.len()))
            .map(|(&m, w)| (m, w, false))
            .collect();
        comps.push((prior_mu, prior_weight, true));
        comps.sort_by(|a, b| a.0.total_cmp(&b.0));
        let n = comps.len();
        let min_sigma = prior_sigma / (100.0f64).min(1.0 + obs.len() as f64);
        let mut sigmas = vec![0.0; n];
        for i in 0..n {
            if comps[i].2 {
                sigmas[i] = prior_sigma;
                continue;
            }
            let left = if i > 0 { comps[i].0 - comps[i - 1].0 } else { comps[i].0 - low };
            let right = if i + 1 < n { comps[i + 1].0 - comps[i].0 } else { high - comps[i].0 };
            sigmas[i] = left.max(right).clamp(min_sigma, prior_sigma);
        }
        let total: f64 = comps.iter().map(|c| c.1).sum();
        Self {
            mus: comps.iter().map(|c| c.0).collect(),
            weights: comps.iter().map(|c| c.1 / total).collect(),
            sigmas,
            low,
            high,
        }
    }

    fn mass(&self, i: usize, a: f64, b: f64) -> f64 {
        let n = std_normal();
        let (m, s) = (self.mus[i], self.sigmas[i]);
        n.cdf((b - m) / s) - n.cdf((a - m) / s)
    }

    fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let u: f64 = rng.random();
        let mut acc = 0.0;
        let mut k = self.weights.len() - 1;
        for (i, w) in self.weights.iter().enumerate() {
            acc += w;
            if u < acc {
                k = i;
                break;
            }
        }
        let n = std_normal();
        let (m, s) = (self.mus[k], self.sigmas[k]);
        let lo = n.cdf((self.low - m) / s);
        let hi = n.cdf((self.high - m) / s);
        let v: f64 = rng.random();
        let p = (lo + v * (hi - lo)).clamp(1e-300, 1.0 - 1e-16);
        (m + s * n.inverse_cdf(p)).clamp(self.low, self.high)
    }

    fn log_pdf(&self, x: f64) -> f64 {
        let terms: Vec<f64> = (0..self.mus.len())
            .map(|i| {
                let (m, s) = (self.mus[i], self.sigmas[i]);
                let z = (x - m) / s;
                let norm = self.mass(i, self.low, self.high).max(1e-300);
                self.weights[i].ln() - 0.5 * z * z - s.ln() - 0.5 * (2.0 * std::f64::consts::PI).ln() - norm.ln()
            })
            .collect();
        log_sum_exp(&terms)
    }

    /// Log probability of the unit-width bucket centered at integer `k`.
    fn log_bucket(&self, k: f64) -> f64 {
        let a = (k - 0.5).max(self.low);
        let b = (k + 0.5).min(self.high);
        let p: f64 = (0..self.mus.len())
            .map(|i| self.weights[i] * self.mass(i, a, b) / self.mass(i, self.low, self.high).max(1e-300))
            .sum();
        p.max(1e-300).ln()
    }
}

/// Uniform draw from the dimension's prior.
pub fn prior_draw<R: Rng + ?Sized>(domain: &Domain, rng: &mut R) -> f64 {
    match *domain {
        Domain::LogUniform { low, high } => {
            let u: f64 = rng.random();
            domain.from_model(low.ln() + u * (high.ln() - low.ln()))
        }
        Domain::Uniform { low, high } => {
            let u: f64 = rng.random();
            domain.from_model(low + u * (high - low))
        }
        Domain::Integer { low, high } => rng.random_range(low..=high) as f64,
        Domain::Categorical(n) => rng.random_range(0..n) as f64,
        Domain::Fixed(v) => v,
    }
}

fn categorical_probs(obs: &[f64], n: usize, prior_weight: f64) -> Vec<f64> {
    let mut counts = vec![prior_weight; n];
    for (&o, w) in obs.iter().zip(forgetting_weights(obs.len())) {
        counts[o as usize] += w;
    }
    let total: f64 = counts.iter().sum();
    counts.iter().map(|c| c / total).collect()
}

/// Draws `n_candidates` from the good-trial model and keeps the one maximizing
/// `log l(x) - log g(x)`. `good` and `bad` hold observed values in chronological order.
pub fn propose<R: Rng + ?Sized>(domain: &Domain, good: &[f64], bad: &[f64], config: &TpeConfig, rng: &mut R) -> f64 {
    match *domain {
        Domain::Fixed(v) => v,
        Domain::Categorical(n) => {
            let l = categorical_probs(good, n, config.prior_weight);
            let g = categorical_probs(bad, n, config.prior_weight);
            let mut best = (f64::NEG_INFINITY, 0usize);
            for _ in 0..config.n_candidates {
                let u: f64 = rng.random();
                let mut acc = 0.0;
                let mut k = n - 1;
                for (i, p) in l.iter().enumerate() {
                    acc += p;
                    if u < acc {
                        k = i;
                        break;
                    }
                }
                let score = l[k].ln() - g[k].ln();
                if score > best.0 {
                    best = (score, k);
                }
            }
            best.1 as f64
        }
        _ => {
            let (low, high) = domain.bounds().expect("numeric domain");
            let to = |v: &[f64]| v.iter().map(|&x| domain.to_model(x)).collect::<Vec<_>>();
            let l = Parzen::fit(&to(good), low, high, config.prior_weight);
            let g = Parzen::fit(&to(bad), low, high, config.prior_weight);
            let integer = matches!(domain, Domain::Integer { .. });
            let mut best = (f64::NEG_INFINITY, f64::NAN);
            for _ in 0..config.n_candidates {
                let x = l.sample(rng);
                let score = if integer {
                    let k = domain.from_model(x);
                    l.log_bucket(k) - g.log_bucket(k)
                } else {
                    l.log_pdf(x) - g.log_pdf(x)
                };
                if score > best.0 || best.1.is_nan() {
                    best = (score, x);
                }
            }
            domain.from_model(best.1)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn forgetting_ramp() {
        assert_eq!(forgetting_weights(3), vec![1.0; 3]);
        let w = forgetting_weights(30);
        assert_eq!(w.len(), 30);
        assert!((w[0] - 1.0 / 30.0).abs() < 1e-15);
        assert_eq!(w[4], 1.0);
        assert!(w.windows(2).all(|p| p[0] <= p[1]));
    }

    #[test]
    fn parzen_density_integrates_to_one() {
        let p = Parzen::fit(&[0.2, 0.25, 0.9], 0.0, 1.0, 1.0);
        let n = 20_000;
        let h = 1.0 / n as f64;
        let integral: f64 = (0..n).map(|i| p.log_pdf((i as f64 + 0.5) * h).exp() * h).sum();
        assert!((integral - 1.0).abs() < 1e-6);
        let q = Parzen::fit(&[1.0, 3.0], -0.5, 4.5, 1.0);
        let qb: f64 = (0..=4).map(|k| q.log_bucket(k as f64).exp()).sum();
        assert!((qb - 1.0).abs() < 1e-12);
    }

    #[test]
    fn proposals_stay_in_domain() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let domains = [
            Domain::LogUniform { low: 1e-6, high: 1e-2 },
            Domain::Uniform { low: 0.0, high: 1.0 },
            Domain::Integer { low: 1, high: 10 },
            Domain::Categorical(3),
            Domain::Fixed(0.5),
        ];
        for d in &domains {
            let obs: Vec<f64> = (0..12).map(|_| prior_draw(d, &mut rng)).collect();
            for _ in 0..50 {
                let v = propose(d, &obs[..3], &obs[3..], &TpeConfig::default(), &mut rng);
                assert!(d.contains(v), "{d:?}: {v}");
            }
        }
    }

    #[test]
    fn good_region_attracts_proposals() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let d = Domain::Uniform { low: 0.0, high: 10.0 };
        let good = [7.0, 7.2, 6.9, 7.1];
        let bad = [1.0, 2.0, 3.0, 4.0, 9.5, 0.5, 2.5, 5.0];
        let picks: Vec<f64> = (0..40).map(|_| propose(&d, &good, &bad, &TpeConfig::default(), &mut rng)).collect();
        let near = picks.iter().filter(|v| (**v - 7.0).abs() < 1.0).count();
        assert!(near >= 30, "{near}");
    }
}
