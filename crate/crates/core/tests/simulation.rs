//! Round-level invariants of the full simulation across modes and shapes.

use std::collections::BTreeSet;

use hapfl::orchestrator::{read_metrics_csv, run_experiment, write_metrics_csv, ExperimentConfig, Mode, RoundMetrics};
use proptest::prelude::*;

fn small(n_clients: usize, per_round: usize, mode: Mode, seed: u64) -> ExperimentConfig {
    let mut cfg = ExperimentConfig {
        n_clients,
        per_round,
        rounds: 4,
        local_epochs: 3,
        mode,
        seed,
        ..ExperimentConfig::default()
    };
    cfg.data.train_per_class = 30;
    cfg.data.test_per_class = 10;
    cfg.comm.broadcast = 0.5;
    cfg.comm.upload = 0.25;
    cfg
}

fn check_round(cfg: &ExperimentConfig, m: &RoundMetrics) {
    let k = cfg.per_round;
    assert_eq!(m.selected.len(), k);
    let distinct: BTreeSet<_> = m.selected.iter().collect();
    assert_eq!(distinct.len(), k);
    assert!(m.selected.iter().all(|&c| c < cfg.n_clients));

    assert_eq!(m.tau.iter().sum::<usize>(), cfg.total_intensity());
    assert!(m.tau.iter().all(|&t| t >= 1));
    assert!(m.tiers.iter().all(|&t| (1..=cfg.tiers.local.len()).contains(&t)));
    if !cfg.mode.uses_allocation_agent() {
        assert!(m.tiers.iter().all(|&t| t == 1));
    }
    if !cfg.mode.uses_intensity_agent() {
        let (lo, hi) = (m.tau.iter().min().unwrap(), m.tau.iter().max().unwrap());
        assert!(hi - lo <= 1, "uniform intensity expected, got {:?}", m.tau);
    }

    for ((a, l), c) in m.assess_times.iter().zip(&m.local_times).zip(&m.compute_times) {
        assert!(*a > 0.0 && *l > 0.0);
        assert!((a + l - c).abs() <= 1e-9 * c);
    }
    let hi = m.compute_times.iter().cloned().fold(f64::MIN, f64::max);
    let lo = m.compute_times.iter().cloned().fold(f64::MAX, f64::min);
    assert!((m.delta_tc - (hi - lo)).abs() <= 1e-9 * hi);
    assert!((m.total_time - (hi + cfg.comm.total())).abs() <= 1e-9 * hi);
    assert!((m.r2 + m.delta_tl).abs() <= 1e-9 * hi);

    assert_eq!(m.weights.len(), k);
    assert!((m.weights.iter().sum::<f64>() - 1.0).abs() < 1e-9);
    assert!(m.weights.iter().all(|&w| w > 0.0));
    assert!((0.0..=1.0).contains(&m.acc_lite));
    assert!(m.acc_tiers.iter().all(|a| (0.0..=1.0).contains(a)));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn every_round_respects_the_constraints(
        n_clients in 3usize..9,
        frac in 0.2f64..1.0,
        mode_idx in 0usize..4,
        seed in any::<u64>(),
    ) {
        let per_round = ((n_clients as f64 * frac).round() as usize).clamp(2, n_clients);
        let cfg = small(n_clients, per_round, Mode::ALL[mode_idx], seed);
        let rows = run_experiment(&cfg).unwrap();
        prop_assert_eq!(rows.len(), cfg.rounds);
        for (i, m) in rows.iter().enumerate() {
            prop_assert_eq!(m.round, i + 1);
            check_round(&cfg, m);
        }
    }
}

#[test]
fn episodes_continue_round_numbering() {
    let cfg = ExperimentConfig {
        episodes: 2,
        ..small(5, 3, Mode::Hapfl, 3)
    };
    let rows = run_experiment(&cfg).unwrap();
    assert_eq!(rows.len(), 8);
    assert_eq!(
        rows.iter().map(|r| r.round).collect::<Vec<_>>(),
        (1..=8).collect::<Vec<_>>()
    );
    assert_eq!(
        rows.iter().map(|r| r.episode).collect::<Vec<_>>(),
        vec![0, 0, 0, 0, 1, 1, 1, 1]
    );
}

#[test]
fn three_tier_catalog_runs() {
    let mut cfg = small(6, 4, Mode::Hapfl, 1);
    cfg.tiers = hapfl::orchestrator::TierSection::three_tiers();
    for m in run_experiment(&cfg).unwrap() {
        check_round(&cfg, &m);
        assert_eq!(m.acc_tiers.len(), 3);
    }
}

#[test]
fn csv_round_trip_keeps_the_columns() {
    let cfg = small(5, 3, Mode::Hapfl, 8);
    let rows = run_experiment(&cfg).unwrap();
    let mut buf = Vec::new();
    write_metrics_csv(&mut buf, &rows).unwrap();
    let parsed = read_metrics_csv(buf.as_slice()).unwrap();
    assert_eq!(parsed.len(), rows.len());
    for (p, m) in parsed.iter().zip(&rows) {
        assert_eq!(
            (p.round, &p.selected, &p.tiers, &p.tau),
            (m.round, &m.selected, &m.tiers, &m.tau)
        );
        assert!((p.delta_tc - m.delta_tc).abs() <= 1e-5 * m.delta_tc.abs());
        assert_eq!(p.acc_small, m.acc_tiers[0]);
    }
}

#[test]
fn seeds_change_the_run() {
    let a = run_experiment(&small(6, 3, Mode::Hapfl, 1)).unwrap();
    let b = run_experiment(&small(6, 3, Mode::Hapfl, 2)).unwrap();
    assert_ne!(
        a.iter().map(|r| r.selected.clone()).collect::<Vec<_>>(),
        b.iter().map(|r| r.selected.clone()).collect::<Vec<_>>()
    );
}
