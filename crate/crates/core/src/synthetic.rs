//! Synthetic cohorts with known trend parameters, used by tests, fixtures and demos.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::dataset::{FundingKind, FundingSeries, FundingTable, MissionRecord};
use crate::steti::{launch_curve, TrendParams, DEFAULT_EPOCH};

#[derive(Debug, Clone, PartialEq)]
pub struct CohortSpec {
    pub size: usize,
    pub trend: TrendParams,
    /// Standard deviation of the natural-log multiplicative noise.
    pub sigma: f64,
    pub first_launch: f64,
    /// Observation date; later failures are censored.
    pub cutoff: f64,
    pub seed: u64,
}

impl Default for CohortSpec {
    fn default() -> Self {
        Self {
            size: 150,
            trend: TrendParams {
                base_lifetime: 0.3,
                doubling_time: 12.0,
                epoch: DEFAULT_EPOCH,
            },
            sigma: 0.3,
            first_launch: DEFAULT_EPOCH,
            cutoff: 2023.0,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SyntheticEvent {
    pub launch: f64,
    /// Full lifetime, known to the generator even when censored.
    pub lifetime: f64,
    pub failed: bool,
}

impl SyntheticEvent {
    pub fn failure(&self) -> f64 {
        self.launch + self.lifetime
    }
}

/// Uniform launches with lognormal lifetimes around the trend, sorted by launch date.
pub fn censored_cohort(spec: &CohortSpec) -> Vec<SyntheticEvent> {
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut events: Vec<SyntheticEvent> = (0..spec.size)
        .map(|_| {
            let launch = rng.random_range(spec.first_launch..spec.cutoff);
            let z: f64 = StandardNormal.sample(&mut rng);
            let lifetime = launch_curve(launch, &spec.trend) * (spec.sigma * z).exp();
            SyntheticEvent {
                launch,
                lifetime,
                failed: launch + lifetime <= spec.cutoff,
            }
        })
        .collect();
    events.sort_by(|a, b| a.launch.total_cmp(&b.launch));
    events
}

/// `(failure date, lifetime)` of failed events.
pub fn failure_points(events: &[SyntheticEvent]) -> Vec<(f64, f64)> {
    events.iter().filter(|e| e.failed).map(|e| (e.failure(), e.lifetime)).collect()
}

/// `(launch date, lifetime)` of failed events.
pub fn launch_points(events: &[SyntheticEvent]) -> Vec<(f64, f64)> {
    events.iter().filter(|e| e.failed).map(|e| (e.launch, e.lifetime)).collect()
}

/// Four yearly series with distinct growth rates and independent log random-walk noise.
pub fn synthetic_funding(first_year: i32, last_year: i32, seed: u64) -> FundingTable {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let bases = [60_000.0, 30_000.0, 8_000.0, 5_000.0];
    let growth = [0.035, 0.02, 0.045, 0.015];
    let mut walk = [0.0f64; 4];
    let series: Vec<FundingSeries> = FundingKind::ALL
        .iter()
        .map(|&k| FundingSeries {
            kind: k,
            values: BTreeMap::new(),
        })
        .collect();
    let mut series = series;
    for year in first_year..=last_year {
        for (k, s) in series.iter_mut().enumerate() {
            let z: f64 = StandardNormal.sample(&mut rng);
            walk[k] = 0.8 * walk[k] + 0.12 * z;
            let t = (year - first_year) as f64;
            s.values.insert(year, bases[k] * (growth[k] * t + walk[k]).exp());
        }
    }
    FundingTable::from_series(&series).expect("generated table is contiguous and complete")
}

/// A funding series whose trailing mean moves log2 lifetime linearly.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FundingDriver {
    pub kind: FundingKind,
    pub window: usize,
    /// Change in log2 lifetime per unit change in log2 trailing mean.
    pub coefficient: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MissionSpec {
    pub cohort: CohortSpec,
    /// Change in log2 lifetime per doubling of launch mass.
    pub mass_effect: f64,
    /// Launch masses span this range of log2 kilograms.
    pub log2_mass_range: (f64, f64),
    /// Draw masses uniformly in kilograms rather than in log2 kilograms.
    pub uniform_mass: bool,
    pub funding_driver: Option<FundingDriver>,
    pub destinations: Vec<String>,
    pub contact_types: Vec<String>,
    pub countries: Vec<String>,
}

impl Default for MissionSpec {
    fn default() -> Self {
        let s = |v: &[&str]| v.iter().map(|x| x.to_string()).collect();
        Self {
            cohort: CohortSpec::default(),
            mass_effect: 0.0,
            log2_mass_range: (3.0, 14.0),
            uniform_mass: false,
            funding_driver: None,
            destinations: s(&["Lunar", "Mars", "Venus", "Jupiter"]),
            contact_types: s(&["Orbiter", "Lander", "Flyby"]),
            countries: s(&["USA", "Soviet Union", "Japan", "ESA"]),
        }
    }
}

/// Mission records with censoring applied at the cohort cutoff.
pub fn synthetic_missions(spec: &MissionSpec, funding: &FundingTable) -> Vec<MissionRecord> {
    let c = &spec.cohort;
    let mut rng = ChaCha8Rng::seed_from_u64(c.seed);
    let mut draws = Vec::with_capacity(c.size);
    for _ in 0..c.size {
        let launch: f64 = rng.random_range(c.first_launch..c.cutoff);
        let (lo, hi) = spec.log2_mass_range;
        let log2_mass: f64 = if spec.uniform_mass {
            rng.random_range(lo.exp2()..hi.exp2()).log2()
        } else {
            rng.random_range(lo..hi)
        };
        let z: f64 = StandardNormal.sample(&mut rng);
        let cats = [
            rng.random_range(0..spec.destinations.len()),
            rng.random_range(0..spec.contact_types.len()),
            rng.random_range(0..spec.countries.len()),
        ];
        draws.push((launch, log2_mass, z, cats));
    }
    let driver_term = |launch: f64| -> f64 {
        spec.funding_driver.map_or(0.0, |d| {
            let year = launch.floor() as i32;
            let m = funding
                .trailing_mean(d.kind, d.window, year)
                .expect("funding table covers every launch year");
            let first = funding.years().next().unwrap_or(year) + d.window as i32 - 1;
            let base = funding.trailing_mean(d.kind, d.window, first).unwrap_or(m);
            d.coefficient * (m.log2() - base.log2())
        })
    };
    let mut records: Vec<MissionRecord> = draws
        .into_iter()
        .enumerate()
        .map(|(i, (launch, log2_mass, z, cats))| {
            let log2_life = launch_curve(launch, &c.trend).log2()
                + spec.mass_effect * (log2_mass - 0.5 * (spec.log2_mass_range.0 + spec.log2_mass_range.1))
                + driver_term(launch)
                + c.sigma * z / std::f64::consts::LN_2;
            let lifetime = log2_life.exp2().max(1e-3);
            let failure = launch + lifetime;
            MissionRecord::new(
                format!("SYN-{i:04}"),
                launch,
                (failure <= c.cutoff).then_some(failure),
                log2_mass.exp2(),
                spec.destinations[cats[0]].clone(),
                spec.contact_types[cats[1]].clone(),
                spec.countries[cats[2]].clone(),
            )
            .expect("generated record is valid")
        })
        .collect();
    records.sort_by(|a, b| a.launch_date.total_cmp(&b.launch_date));
    records
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cohort_is_censored_at_cutoff() {
        let ev = censored_cohort(&CohortSpec::default());
        assert_eq!(ev.len(), 150);
        assert!(ev.iter().all(|e| e.failed == (e.failure() <= 2023.0)));
        assert!(ev.iter().any(|e| !e.failed));
        assert!(ev.windows(2).all(|w| w[0].launch <= w[1].launch));
    }

    #[test]
    fn missions_are_deterministic() {
        let f = synthetic_funding(1930, 2023, 1);
        let spec = MissionSpec::default();
        let a = synthetic_missions(&spec, &f);
        assert_eq!(a, synthetic_missions(&spec, &f));
        assert!(a.iter().any(|r| r.is_inactive()) && a.iter().any(|r| !r.is_inactive()));
        assert!(a.iter().filter_map(|r| r.failure_date).all(|d| d <= 2023.0));
    }
}
