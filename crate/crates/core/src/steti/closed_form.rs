//! Exponential lifetime trend keyed by launch date, and its failure-date counterpart.
//!
//! A mission launched at `t` has lifetime `base * 2^((t - epoch) / doubling)`. Written against
//! its failure date `t_f = t + l`, the same curve is implicit in `l`:
//! `l = base * 2^((t_f - l - epoch) / doubling)`. Fitting the implicit form uses only missions
//! that have already failed, which is unaffected by the truncation of long-lived recent
//! launches.

use serde::{Deserialize, Serialize};

use super::{Result, StetiError};

pub const DEFAULT_EPOCH: f64 = 1959.0;
const SOLVER_ITERATIONS: usize = 200;
const SOLVER_LOWER: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrendParams {
    /// Lifetime in years of a mission launched at the epoch.
    pub base_lifetime: f64,
    /// Years for the modeled lifetime to double; may be infinite (flat trend).
    pub doubling_time: f64,
    pub epoch: f64,
}

impl TrendParams {
    pub fn new(base_lifetime: f64, doubling_time: f64, epoch: f64) -> Result<Self> {
        if !(base_lifetime > 0.0 && base_lifetime.is_finite()) {
            return Err(StetiError::InvalidParams(format!("base lifetime must be positive, got {base_lifetime}")));
        }
        if doubling_time == 0.0 || doubling_time.is_nan() {
            return Err(StetiError::InvalidParams(format!("doubling time must be nonzero, got {doubling_time}")));
        }
        if !epoch.is_finite() {
            return Err(StetiError::InvalidParams(format!("epoch must be finite, got {epoch}")));
        }
        Ok(Self {
            base_lifetime,
            doubling_time,
            epoch,
        })
    }

    fn growth_rate(&self) -> f64 {
        1.0 / self.doubling_time
    }
}

/// Lifetime expected for a launch at `launch_date`.
pub fn launch_curve(launch_date: f64, p: &TrendParams) -> f64 {
    p.base_lifetime * ((launch_date - p.epoch) * p.growth_rate()).exp2()
}

/// Lifetime of the mission that fails at `failure_date` on the trend, by bisection.
pub fn solve_failure_lifetime(failure_date: f64, p: &TrendParams) -> Result<f64> {
    if !(p.doubling_time > 0.0) || !(p.base_lifetime > 0.0) {
        return Err(StetiError::InvalidParams(format!(
            "failure-date solve needs positive base lifetime and doubling time, got {} and {}",
            p.base_lifetime, p.doubling_time
        )));
    }
    if p.doubling_time.is_infinite() {
        return Ok(p.base_lifetime);
    }
    let rate = p.growth_rate();
    let offset = failure_date - p.epoch;
    // Strictly decreasing in l, positive near zero.
    let g = |l: f64| p.base_lifetime * ((offset - l) * rate).exp2() - l;
    let mut lo = SOLVER_LOWER;
    let mut hi = offset.max(0.0) + 64.0 * p.doubling_time;
    while g(hi) > 0.0 {
        hi *= 2.0;
        if !hi.is_finite() {
            return Err(StetiError::NoConvergence { failure_date });
        }
    }
    if g(lo) <= 0.0 {
        return Ok(lo);
    }
    for _ in 0..SOLVER_ITERATIONS {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if g(mid) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let l = if g(lo).abs() <= g(hi).abs() { lo } else { hi };
    if g(l).abs() < 1e-9 {
        Ok(l)
    } else {
        Err(StetiError::NoConvergence { failure_date })
    }
}

/// Launch-date predictor carrying fitted parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LaunchCurve(pub TrendParams);

impl LaunchCurve {
    pub fn lifetime_at(&self, launch_date: f64) -> f64 {
        launch_curve(launch_date, &self.0)
    }
}

pub fn plug_back(p: TrendParams) -> LaunchCurve {
    LaunchCurve(p)
}

/// `(log2 lifetime, d/du, d/dr)` at one failure date, where `u = log2 base` and `r = 1/doubling`.
fn model_point(t: f64, u: f64, r: f64, epoch: f64) -> Result<(f64, f64, f64)> {
    let p = TrendParams {
        base_lifetime: u.exp2(),
        doubling_time: 1.0 / r,
        epoch,
    };
    let l = solve_failure_lifetime(t, &p)?;
    let denom = 1.0 + r * std::f64::consts::LN_2 * l;
    Ok((l.log2(), 1.0 / denom, (t - epoch - l) / denom))
}

fn sum_squares(points: &[(f64, f64)], u: f64, r: f64, epoch: f64) -> Result<f64> {
    points.iter().try_fold(0.0, |acc, &(t, l)| {
        let (y, _, _) = model_point(t, u, r, epoch)?;
        Ok(acc + (l.log2() - y).powi(2))
    })
}

fn check_points(points: &[(f64, f64)]) -> Result<()> {
    if points.len() >= 2 && points.iter().all(|p| p.0 == points[0].0) {
        return Err(StetiError::DegenerateData("all dates are equal".into()));
    }
    if points.len() < 3 {
        return Err(StetiError::DegenerateData(format!("need at least 3 points, got {}", points.len())));
    }
    if let Some(p) = points.iter().find(|p| !(p.1 > 0.0 && p.1.is_finite() && p.0.is_finite())) {
        return Err(StetiError::DegenerateData(format!("invalid point ({}, {})", p.0, p.1)));
    }
    Ok(())
}

/// Sum of squared log2 residuals of the implicit curve at `p`.
pub fn failure_fit_objective(points: &[(f64, f64)], p: &TrendParams) -> Result<f64> {
    sum_squares(points, p.base_lifetime.log2(), p.growth_rate(), p.epoch)
}

/// Least-squares fit of the implicit failure-date curve in log2 space over `(failure_date,
/// lifetime)` pairs of failed missions. A coarse grid seeds Levenberg-Marquardt.
pub fn fit_closed_form(points: &[(f64, f64)], epoch: f64) -> Result<TrendParams> {
    check_points(points)?;
    let logs: Vec<f64> = points.iter().map(|p| p.1.log2()).collect();
    let lo_u = logs.iter().copied().fold(f64::INFINITY, f64::min) - 8.0;
    let hi_u = logs.iter().copied().fold(f64::NEG_INFINITY, f64::max) + 2.0;
    const GRID: usize = 41;
    let (d_min, d_max): (f64, f64) = (0.5, 1000.0);
    let mut best = (f64::INFINITY, 0.0, 0.0);
    for i in 0..GRID {
        let u = lo_u + (hi_u - lo_u) * i as f64 / (GRID - 1) as f64;
        for j in 0..GRID {
            let d = (d_min.ln() + (d_max.ln() - d_min.ln()) * j as f64 / (GRID - 1) as f64).exp();
            let s = sum_squares(points, u, 1.0 / d, epoch)?;
            if s < best.0 {
                best = (s, u, 1.0 / d);
            }
        }
    }
    let (mut cost, mut u, mut r) = best;
    let mut lambda = 1e-3;
    for _ in 0..500 {
        let (mut a11, mut a12, mut a22, mut b1, mut b2) = (0.0, 0.0, 0.0, 0.0, 0.0);
        for &(t, l) in points {
            let (y, ju, jr) = model_point(t, u, r, epoch)?;
            let e = l.log2() - y;
            a11 += ju * ju;
            a12 += ju * jr;
            a22 += jr * jr;
            b1 += ju * e;
            b2 += jr * e;
        }
        let mut improved = false;
        while lambda < 1e20 {
            let (m11, m22) = (a11 * (1.0 + lambda), a22 * (1.0 + lambda));
            let det = m11 * m22 - a12 * a12;
            if det.abs() < f64::MIN_POSITIVE {
                lambda *= 10.0;
                continue;
            }
            let du = (m22 * b1 - a12 * b2) / det;
            let dr = (m11 * b2 - a12 * b1) / det;
            let (nu, nr) = (u + du, r + dr);
            if nr > 0.0 {
                let c = sum_squares(points, nu, nr, epoch)?;
                if c <= cost {
                    let converged = (du.abs() <= 1e-15 * (1.0 + u.abs())) && (dr.abs() <= 1e-15 * r);
                    u = nu;
                    r = nr;
                    improved = c < cost && !converged;
                    cost = c;
                    lambda = (lambda / 10.0).max(1e-12);
                    break;
                }
            }
            lambda *= 10.0;
        }
        if !improved {
            break;
        }
    }
    TrendParams::new(u.exp2(), 1.0 / r, epoch)
}

/// Ordinary least squares of log2 lifetime on launch date, failed missions only.
pub fn fit_naive(points: &[(f64, f64)], epoch: f64) -> Result<TrendParams> {
    check_points(points)?;
    let n = points.len() as f64;
    let xs: Vec<f64> = points.iter().map(|p| p.0 - epoch).collect();
    let ys: Vec<f64> = points.iter().map(|p| p.1.log2()).collect();
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let doubling = if slope == 0.0 { f64::INFINITY } else { 1.0 / slope };
    TrendParams::new(intercept.exp2(), doubling, epoch)
}
