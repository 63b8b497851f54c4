//! SU-lattice simulation loop and latency accounting.
//!
//! Each inter-PUCCH cycle is handled in three steps: requests and a grant
//! plan at the PUCCH SU, SU-by-SU execution of the plan against the UE
//! queues, then feedback to the policy.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use crate::airframe::{layout_control_plane, rbs_needed, CycleTiming, FrameParams, RbOwner, SuPurpose};
use crate::channel::build_link_table;
use crate::deployment::{Topology, TrafficKind};
use crate::error::SimError;
use crate::num::Scalar;
use crate::scenario::{derive_block_size_bytes, ScenarioConfig, SchedulerKind};
use crate::scheduler::{
    apply_dropping, make_policy, plan_cycle, CellKnowledge, CycleContext, CycleObservation, DataSu, DemandKind,
    GrantLogRow, QueuedBlock, SchedulingRequest, WindowUsage,
};
use crate::traffic::{DataBlock, TrafficTimeline};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LatencyConstants<F> {
    pub t_p_s: F,
    pub t_tx_s: F,
    pub tau_p_s: F,
    pub t_fh_s: F,
    pub tau_fh_s: F,
    pub t_gnb_s: F,
    pub t_cn_s: F,
    pub t_p_symbols: u32,
}

impl<F: Scalar> LatencyConstants<F> {
    pub fn from_config(cfg: &ScenarioConfig, frame: &FrameParams) -> Self {
        let sym = |n: u32| frame.symbols_to_seconds::<F>(u64::from(n));
        LatencyConstants {
            t_p_s: sym(cfg.t_p_symbols),
            t_tx_s: sym(cfg.t_tx_symbols),
            tau_p_s: F::lit(cfg.tau_p_s),
            t_fh_s: F::lit(cfg.t_fh_s),
            tau_fh_s: F::lit(cfg.tau_fh_s),
            t_gnb_s: sym(cfg.t_gnb_symbols),
            t_cn_s: F::lit(cfg.t_cn_s),
            t_p_symbols: cfg.t_p_symbols,
        }
    }

    /// Latency of a block sent with no RAN queueing.
    pub fn floor(&self) -> F {
        self.sum(F::zero())
    }

    fn sum(&self, t_ran: F) -> F {
        self.t_p_s + t_ran + self.t_tx_s + self.tau_p_s + self.t_fh_s + self.tau_fh_s + self.t_gnb_s + self.t_cn_s
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LatencyRecord<F> {
    pub block_id: u32,
    pub ue_id: u32,
    pub t_p_s: F,
    pub t_ran_s: F,
    pub t_tx_s: F,
    pub tau_p_s: F,
    pub t_fh_s: F,
    pub tau_fh_s: F,
    pub t_gnb_s: F,
    pub t_cn_s: F,
    pub total_s: F,
}

/// Latency of `block` completed in SU `su`; RAN time runs from the end of
/// processing to the start of that SU.
pub fn compute_latency<F: Scalar>(
    block: &DataBlock,
    su: u64,
    c: &LatencyConstants<F>,
    frame: &FrameParams,
) -> LatencyRecord<F> {
    let start_sym = su as i64 * i64::from(frame.symbols_per_su);
    let lag = start_sym - block.generation_symbol as i64 - i64::from(c.t_p_symbols);
    assert!(lag >= 0, "block {} sent before processing completed (lag {lag} symbols)", block.id);
    let snap = (frame.symbols_to_seconds::<f64>(block.generation_symbol) - block.generation_time_s).max(0.0);
    let t_ran = frame.symbols_to_seconds::<F>(lag as u64) + F::lit(snap);
    LatencyRecord {
        block_id: block.id,
        ue_id: block.ue_id,
        t_p_s: c.t_p_s,
        t_ran_s: t_ran,
        t_tx_s: c.t_tx_s,
        tau_p_s: c.tau_p_s,
        t_fh_s: c.t_fh_s,
        tau_fh_s: c.tau_fh_s,
        t_gnb_s: c.t_gnb_s,
        t_cn_s: c.t_cn_s,
        total_s: c.sum(t_ran),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunMetrics<F> {
    pub scheduler: SchedulerKind,
    pub seed: u64,
    /// Per-UE mean, then mean across UEs with at least one delivery.
    pub mean_e2e_s: Option<F>,
    pub flat_mean_e2e_s: Option<F>,
    pub p99_e2e_s: Option<F>,
    pub min_e2e_s: Option<F>,
    pub generated_count: u64,
    pub delivered_count: u64,
    /// All losses, including blocks of UEs whose link is below threshold.
    pub dropped_count: u64,
    pub unreachable_count: u64,
    pub queued_at_end_count: u64,
    pub loss_ratio: F,
    pub unused_grants: u64,
    pub per_ue_mean_s: Vec<Option<F>>,
    pub trained_at_cycle: Option<u64>,
    pub config: ScenarioConfig,
}

/// Counts that are not derived from latency records.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct RunCounts {
    pub generated: u64,
    pub dropped: u64,
    pub unreachable: u64,
    pub queued_at_end: u64,
    pub unused_grants: u64,
}

pub fn aggregate<F: Scalar>(
    records: &[LatencyRecord<F>],
    counts: RunCounts,
    num_ues: usize,
    cfg: &ScenarioConfig,
) -> RunMetrics<F> {
    let mut sums = vec![(F::zero(), 0u64); num_ues];
    for r in records {
        let s = &mut sums[r.ue_id as usize];
        s.0 = s.0 + r.total_s;
        s.1 += 1;
    }
    let per_ue: Vec<Option<F>> = sums.iter().map(|&(s, n)| (n > 0).then(|| s / F::lit(n as f64))).collect();
    let means: Vec<F> = per_ue.iter().flatten().copied().collect();
    let mean = (!means.is_empty()).then(|| means.iter().fold(F::zero(), |a, &b| a + b) / F::lit(means.len() as f64));
    let mut all: Vec<F> = records.iter().map(|r| r.total_s).collect();
    all.sort_by(|a, b| a.partial_cmp(b).expect("finite latency"));
    let flat = (!all.is_empty()).then(|| all.iter().fold(F::zero(), |a, &b| a + b) / F::lit(all.len() as f64));
    let p99 = (!all.is_empty()).then(|| {
        let rank = (0.99 * all.len() as f64).ceil() as usize;
        all[rank.clamp(1, all.len()) - 1]
    });
    let delivered = records.len() as u64;
    let finished = delivered + counts.dropped;
    RunMetrics {
        scheduler: cfg.scheduler_kind,
        seed: cfg.rng_seed,
        mean_e2e_s: mean,
        flat_mean_e2e_s: flat,
        p99_e2e_s: p99,
        min_e2e_s: all.first().copied(),
        generated_count: counts.generated,
        delivered_count: delivered,
        dropped_count: counts.dropped,
        unreachable_count: counts.unreachable,
        queued_at_end_count: counts.queued_at_end,
        loss_ratio: if finished == 0 { F::zero() } else { F::lit(counts.dropped as f64 / finished as f64) },
        unused_grants: counts.unused_grants,
        per_ue_mean_s: per_ue,
        trained_at_cycle: None,
        config: cfg.clone(),
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct RunOptions {
    pub keep_records: bool,
    pub keep_grant_log: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunReport<F> {
    pub metrics: RunMetrics<F>,
    pub records: Vec<LatencyRecord<F>>,
    pub grant_log: Vec<GrantLogRow>,
}

pub fn run<F: Scalar>(cfg: &ScenarioConfig) -> Result<RunMetrics<F>, SimError> {
    run_with(cfg, RunOptions::default()).map(|r| r.metrics)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum BlockStatus {
    Pending,
    Queued,
    Delivered,
    Dropped,
}

pub fn run_with<F: Scalar>(cfg: &ScenarioConfig, opts: RunOptions) -> Result<RunReport<F>, SimError> {
    cfg.validate()?;
    let frame = FrameParams::from_config(cfg);
    let timing = CycleTiming::from_config(cfg, &frame);
    let topology = Topology::build(cfg)?;
    let links = build_link_table::<F>(cfg, &topology);
    let pdu = derive_block_size_bytes(cfg) + cfg.header_bytes;
    let ue_rbs: Vec<Option<u32>> = links
        .iter()
        .map(|l| l.modulation_bits_per_symbol.filter(|_| l.adequate).map(|m| rbs_needed(pdu, m, &frame)))
        .collect();
    let timeline = TrafficTimeline::generate(cfg, &topology, &frame);
    timeline.check(&frame, &timing, &topology);
    let know = CellKnowledge::new(cfg, &topology, &frame, ue_rbs.clone());
    let mut policy = make_policy(cfg.scheduler_kind, cfg, &frame, &timeline.slots);
    let consts = LatencyConstants::<F>::from_config(cfg, &frame);
    let floor = consts.floor();

    let horizon = frame.seconds_to_sus(cfg.sim_time_s);
    let sym_per_su = u64::from(frame.symbols_per_su);
    let cycle_sus = timing.cycle_sus();
    let blocks = &timeline.blocks;
    let deadlines: Vec<u64> = blocks.iter().map(|b| timeline.slots[b.slot_index as usize].deadline_su()).collect();
    let mut status = vec![BlockStatus::Pending; blocks.len()];
    let mut credit = vec![0u32; blocks.len()];
    let mut queues: Vec<VecDeque<u32>> = vec![VecDeque::new(); topology.ues.len()];
    let mut next_block = 0usize;
    let mut counts = RunCounts { generated: blocks.len() as u64, ..RunCounts::default() };
    let mut records = Vec::new();
    let mut grant_log = Vec::new();
    let mut prev_obs: Option<CycleObservation> = None;

    let mut cycle = 0u64;
    while cycle * cycle_sus < horizon {
        let start = cycle * cycle_sus;
        let end = start + cycle_sus;
        let first_slot = cycle * u64::from(timing.n_on);

        let mut pre_step =
            |s: u64, queues: &mut Vec<VecDeque<u32>>, status: &mut Vec<BlockStatus>, counts: &mut RunCounts| {
                while next_block < blocks.len() && blocks[next_block].generation_symbol <= s * sym_per_su {
                    let b = &blocks[next_block];
                    if ue_rbs[b.ue_id as usize].is_some() {
                        queues[b.ue_id as usize].push_back(b.id);
                        status[next_block] = BlockStatus::Queued;
                    } else {
                        status[next_block] = BlockStatus::Dropped;
                        counts.dropped += 1;
                        counts.unreachable += 1;
                    }
                    next_block += 1;
                }
                for b in apply_dropping(queues, |b| deadlines[b as usize], s, cfg.dropping_enabled) {
                    status[b as usize] = BlockStatus::Dropped;
                    counts.dropped += 1;
                }
            };
        pre_step(start, &mut queues, &mut status, &mut counts);

        if let Some(obs) = prev_obs.take() {
            policy.observe(&know, &obs);
        }
        let requesters: Vec<usize> = timeline
            .active_ues
            .get(first_slot as usize)
            .map(|a| a.iter().copied().filter(|&u| ue_rbs[u].is_some()).collect())
            .unwrap_or_default();
        let requests: Vec<SchedulingRequest> = requesters
            .iter()
            .map(|&u| SchedulingRequest {
                ue_id: u as u32,
                pucch_cycle_index: cycle,
                queued_blocks: queues[u]
                    .iter()
                    .map(|&b| &blocks[b as usize])
                    .filter(|b| b.generation_symbol < start * sym_per_su)
                    .map(|b| QueuedBlock {
                        block_id: b.id,
                        gen_time_s: b.generation_time_s,
                        ready_su: b.ready_su(frame.symbols_per_su),
                        remaining_rbs: ue_rbs[u].unwrap_or(0) - credit[b.id as usize],
                        credit: credit[b.id as usize],
                    })
                    .collect(),
            })
            .collect();
        let ctx = CycleContext { cycle, start_su: start, end_su: end, requests: &requests };
        let windows = policy.predict(&know, &ctx);
        let mut grid = layout_control_plane(start, &timing, &frame);
        let data_sus: Vec<DataSu> = (start..end.min(horizon))
            .filter(|&s| grid.capacity(s) > 0)
            .map(|s| DataSu { su: s, capacity: grid.capacity(s), guard: grid.purpose(s) == Some(SuPurpose::Guard) })
            .collect();
        let plan = plan_cycle(&know, &ctx, &windows, policy.plans_backlog(), &data_sus);
        for g in &plan.grants {
            let owner = RbOwner { ue_id: g.ue_id, demand_id: g.demand_id };
            grid.assign(g.su, g.rb_start, g.rb_count, owner)
                .unwrap_or_else(|c| panic!("RB collision at SU {} RB {}", c.su, c.rb));
            assert!(g.su >= plan.demands[g.demand_id as usize].ready_su);
        }

        let mut used_now = vec![false; plan.demands.len()];
        let mut gi = 0;
        for s in start..end.min(horizon) {
            if s != start {
                pre_step(s, &mut queues, &mut status, &mut counts);
            }
            while gi < plan.grants.len() && plan.grants[gi].su == s {
                let g = plan.grants[gi];
                gi += 1;
                let ue = g.ue_id as usize;
                let need = ue_rbs[ue].expect("grants only go to reachable UEs");
                let mut left = g.rb_count;
                let mut first = None;
                while left > 0 {
                    let Some(&b) = queues[ue].front() else { break };
                    let block = &blocks[b as usize];
                    if block.ready_su(frame.symbols_per_su) > s {
                        break;
                    }
                    assert!(block.generation_symbol < s * sym_per_su, "grant precedes generation");
                    first.get_or_insert(b);
                    if block.slot_index == first_slot {
                        used_now[g.demand_id as usize] = true;
                    }
                    let take = left.min(need - credit[b as usize]);
                    credit[b as usize] += take;
                    left -= take;
                    if credit[b as usize] == need {
                        queues[ue].pop_front();
                        status[b as usize] = BlockStatus::Delivered;
                        let rec = compute_latency(block, s, &consts, &frame);
                        assert!(rec.total_s >= floor, "latency below the constant floor");
                        records.push(rec);
                    }
                }
                if first.is_none() {
                    counts.unused_grants += 1;
                }
                if opts.keep_grant_log {
                    grant_log.push(GrantLogRow {
                        cycle,
                        su: s,
                        rb_start: g.rb_start,
                        rb_count: g.rb_count,
                        ue: g.ue_id,
                        block: first,
                    });
                }
            }
        }

        let samples = plan.demands.iter().filter_map(|d| match d.kind {
            DemandKind::Predicted { window: 0, offset_symbols }
                if requesters.binary_search(&(d.ue_id as usize)).is_ok()
                    && topology.ues[d.ue_id as usize].traffic_kind == TrafficKind::Periodic =>
            {
                Some((offset_symbols, used_now[d.id as usize]))
            }
            _ => None,
        });
        prev_obs = Some(CycleObservation { cycle, usage: WindowUsage::from_samples(samples) });
        cycle += 1;
    }

    counts.queued_at_end =
        status.iter().filter(|s| matches!(s, BlockStatus::Pending | BlockStatus::Queued)).count() as u64;
    let delivered = status.iter().filter(|s| **s == BlockStatus::Delivered).count() as u64;
    assert_eq!(delivered, records.len() as u64);
    assert_eq!(counts.generated, delivered + counts.dropped + counts.queued_at_end, "block conservation");

    let mut metrics = aggregate(&records, counts, topology.ues.len(), cfg);
    metrics.trained_at_cycle = policy.trained_at_cycle();
    if !opts.keep_records {
        records = Vec::new();
    }
    Ok(RunReport { metrics, records, grant_log })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenario::UseCase;

    fn block(gen_symbol: u64, time_s: f64) -> DataBlock {
        DataBlock {
            id: 0,
            ue_id: 0,
            generation_time_s: time_s,
            generation_symbol: gen_symbol,
            payload_bytes: 688,
            pdu_bytes: 760,
            slot_index: 0,
        }
    }

    fn consts() -> (LatencyConstants<f64>, FrameParams) {
        let cfg = ScenarioConfig::default();
        let f = FrameParams::from_config(&cfg);
        (LatencyConstants::from_config(&cfg, &f), f)
    }

    #[test]
    fn immediate_grant_hits_floor() {
        let (c, f) = consts();
        let r = compute_latency(&block(70, 0.00125), 11, &c, &f);
        assert_eq!(r.t_ran_s, 0.0);
        approx::assert_abs_diff_eq!(r.total_s, 0.125e-3 + 4.0 / 56e3 + 0.05e-3 + 0.125e-3 + 0.1e-3, epsilon = 1e-15);
        approx::assert_abs_diff_eq!(c.floor(), 0.000471428, epsilon = 1e-9);
    }

    #[test]
    fn half_ms_of_queueing() {
        let (c, f) = consts();
        let r = compute_latency(&block(70, 0.00125), 15, &c, &f);
        approx::assert_abs_diff_eq!(r.t_ran_s, 0.0005, epsilon = 1e-15);
        approx::assert_abs_diff_eq!(r.total_s, 0.000971428, epsilon = 1e-9);
        let parts = r.t_p_s + r.t_ran_s + r.t_tx_s + r.tau_p_s + r.t_fh_s + r.tau_fh_s + r.t_gnb_s + r.t_cn_s;
        assert_eq!(parts, r.total_s);
    }

    #[test]
    #[should_panic(expected = "before processing")]
    fn negative_ran_time_is_fatal() {
        let (c, f) = consts();
        compute_latency(&block(70, 0.00125), 10, &c, &f);
    }

    #[test]
    fn two_stage_average() {
        let (c, f) = consts();
        let mut a = compute_latency(&block(0, 0.0), 1, &c, &f);
        a.total_s = 0.001;
        let mut b = a;
        b.ue_id = 1;
        b.total_s = 0.003;
        let mut b2 = b;
        b2.total_s = 0.003;
        let cfg = ScenarioConfig::default();
        let m = aggregate(&[a, b, b2], RunCounts { generated: 3, ..Default::default() }, 2, &cfg);
        assert_eq!(m.mean_e2e_s, Some(0.002));
        let m = aggregate::<f64>(&[], RunCounts { generated: 20, dropped: 10, ..Default::default() }, 2, &cfg);
        assert_eq!(m.mean_e2e_s, None);
        assert_eq!(m.loss_ratio, 1.0);
        let recs: Vec<_> = (0..10).map(|_| a).collect();
        let m = aggregate(&recs, RunCounts { generated: 20, dropped: 10, ..Default::default() }, 2, &cfg);
        assert_eq!(m.loss_ratio, 0.5);
        approx::assert_relative_eq!(m.mean_e2e_s.unwrap(), 0.001, max_relative = 1e-12);
    }

    fn short(kind: SchedulerKind) -> ScenarioConfig {
        let mut c = ScenarioConfig::from_preset(UseCase::AugmentedReality);
        c.scheduler_kind = kind;
        c.sim_time_s = 0.5;
        c
    }

    #[test]
    fn zero_ues() {
        let mut c = short(SchedulerKind::Ssps);
        c.num_ues = 0;
        let m = run::<f64>(&c).unwrap();
        assert_eq!(m.delivered_count, 0);
        assert_eq!(m.mean_e2e_s, None);
    }

    #[test]
    fn replay_is_byte_identical() {
        for kind in SchedulerKind::ALL {
            let c = short(kind);
            let a = serde_json::to_string(&run::<f64>(&c).unwrap()).unwrap();
            let b = serde_json::to_string(&run::<f64>(&c).unwrap()).unwrap();
            assert_eq!(a, b);
        }
    }

    #[test]
    fn ssps_light_load_reaches_floor() {
        let mut c = short(SchedulerKind::Ssps);
        c.num_ues = 8;
        let m = run::<f64>(&c).unwrap();
        let floor = LatencyConstants::<f64>::from_config(&c, &FrameParams::from_config(&c)).floor();
        assert!(m.min_e2e_s.unwrap() < floor + 0.000125);
        assert_eq!(m.dropped_count, m.unreachable_count);
    }

    #[test]
    fn single_precision_tracks_double() {
        let c = short(SchedulerKind::Asps);
        let (a, b) = (run::<f64>(&c).unwrap(), run::<f32>(&c).unwrap());
        assert_eq!(a.delivered_count, b.delivered_count);
        approx::assert_relative_eq!(a.mean_e2e_s.unwrap(), f64::from(b.mean_e2e_s.unwrap()), max_relative = 1e-4);
    }
}
