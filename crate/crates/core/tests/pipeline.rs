use std::time::Instant;

use steti::features::Phase;
use steti::neuralnet::BatchSize;
use steti::scenario::{build_scenarios, predict_scenarios, Baseline, ScenarioSpec};
use steti::steti::{run_phase, Checkpoint, PhaseConfig, TrainBudget};
use steti::synthetic::{synthetic_funding, synthetic_missions, MissionSpec};

fn cohort(size: usize, seed: u64) -> MissionSpec {
    let mut spec = MissionSpec::default();
    spec.cohort.size = size;
    spec.cohort.seed = seed;
    spec
}

#[test]
fn stage_two_targets_are_stage_one_predictions() {
    let funding = synthetic_funding(1930, 2023, 3);
    let records = synthetic_missions(&cohort(200, 3), &funding);
    let mut cfg = PhaseConfig::new(Phase::TimeOnly, 11);
    cfg.budget = TrainBudget {
        max_epochs: 500,
        patience: 100,
    };
    let start = Instant::now();
    let outcome = run_phase(&cfg, &records, None).unwrap();
    let elapsed = start.elapsed();

    let transferred = &outcome.stage1.predictions;
    assert!(!transferred.is_empty());
    for cell in &outcome.stage2.cells {
        for ex in cell.data.all_examples() {
            assert_eq!(ex.target.to_bits(), transferred[&ex.record].to_bits());
            assert!(records[ex.record.0].is_inactive());
        }
        assert!(cell.best_val_mse <= cell.final_val_mse);
        assert!(cell.history.len() <= cell.best_epoch + cfg.budget.patience + 1);
    }
    assert_eq!(outcome.stage1.cells.len(), 8);
    assert!(elapsed.as_secs() < 300, "phase took {elapsed:?}");
}

#[test]
fn mass_sweep_is_flat_when_mass_is_irrelevant() {
    let spreads: Vec<f64> = std::thread::scope(|scope| {
        let handles: Vec<_> = (0..5u64)
            .map(|seed| scope.spawn(move || mass_sweep_spread(seed)))
            .collect();
        handles.into_iter().map(|h| h.join().unwrap()).collect()
    });
    let flat = spreads.iter().filter(|s| **s < 0.1).count();
    assert!(flat >= 4, "spreads {spreads:?}");
}

fn mass_sweep_spread(seed: u64) -> f64 {
    let funding = synthetic_funding(1930, 2023, seed);
    let mut spec = cohort(200, seed);
    spec.cohort.sigma = 0.1;
    spec.log2_mass_range = (0.0, 50_000f64.log2());
    spec.uniform_mass = true;
    let records = synthetic_missions(&spec, &funding);
    let mut cfg = PhaseConfig::new(Phase::TimePlus, seed);
    cfg.split_ratios = vec![0.75];
    cfg.batch_sizes = vec![BatchSize::Full];
    cfg.budget = TrainBudget {
        max_epochs: 3000,
        patience: 1000,
    };
    let outcome = run_phase(&cfg, &records, Some(&funding)).unwrap();
    let ck = Checkpoint::new(outcome.model().clone());
    let set = build_scenarios(&ScenarioSpec::mass_sweep(Baseline::Last), &records, &[]).unwrap();
    let result = predict_scenarios(&ck, &set, Some(&funding)).unwrap();
    assert_eq!(result.rows.len(), 51);
    assert_eq!(result, predict_scenarios(&ck, &set, Some(&funding)).unwrap());
    let baseline = result.rows.iter().find(|r| r.is_baseline).unwrap();
    let direct = outcome.model().encode_records(&records, Some(&funding), &[set.baseline]).unwrap();
    let direct = outcome.model().predict(&direct).unwrap()[0];
    assert_eq!(baseline.pred_log2_lifetime.to_bits(), direct.to_bits());
    let (lo, hi) = result
        .rows
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), r| {
            (lo.min(r.pred_log2_lifetime), hi.max(r.pred_log2_lifetime))
        });
    hi - lo
}
