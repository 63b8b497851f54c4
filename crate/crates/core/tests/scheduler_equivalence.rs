//! On noiseless periodic traffic the adaptive policy, once trained, must hand
//! out exactly the grants of the policy that knows the true schedule.

use std::collections::BTreeMap;

use sps_core::engine::{run_with, RunOptions};
use sps_core::{ScenarioConfig, SchedulerKind, UseCase};

type CycleGrants = BTreeMap<u64, Vec<(u64, u32, u32, u32)>>;

fn grants_by_cycle(cfg: &ScenarioConfig) -> (CycleGrants, Option<u64>) {
    let r = run_with::<f64>(cfg, RunOptions { keep_records: false, keep_grant_log: true }).unwrap();
    let mut out: CycleGrants = BTreeMap::new();
    for g in &r.grant_log {
        out.entry(g.cycle).or_default().push((g.su, g.ue, g.rb_start, g.rb_count));
    }
    for v in out.values_mut() {
        v.sort_unstable();
    }
    (out, r.metrics.trained_at_cycle)
}

fn check(n_ues: u32, n_on: u32, seed: u64) {
    let mut cfg = ScenarioConfig::from_preset(UseCase::AugmentedReality);
    cfg.num_ues = n_ues;
    cfg.n_on = n_on;
    cfg.rng_seed = seed;
    cfg.sim_time_s = 1.0;
    cfg.traffic_mix = 0.0;
    cfg.ue_activation_prob = 1.0;
    cfg.dropping_enabled = true;
    cfg.scheduler_kind = SchedulerKind::Ssps;
    let (ssps, _) = grants_by_cycle(&cfg);
    cfg.scheduler_kind = SchedulerKind::Asps;
    let (asps, trained) = grants_by_cycle(&cfg);

    let trained = trained.expect("adaptive policy never finished training");
    assert!(trained <= 3, "training took {trained} cycles");
    let cycles: Vec<u64> = ssps.keys().chain(asps.keys()).copied().filter(|&c| c >= 3).collect();
    assert!(!cycles.is_empty());
    for c in cycles {
        assert_eq!(ssps.get(&c), asps.get(&c), "cycle {c} differs (N={n_ues}, n_on={n_on}, seed={seed})");
    }
}

#[test]
fn trained_adaptive_matches_smart_grants() {
    for seed in 1..=3 {
        check(60, 5, seed);
    }
}

#[test]
fn equivalence_holds_across_activation_counts() {
    for n_on in [4, 6, 8] {
        check(40, n_on, 11);
    }
}
