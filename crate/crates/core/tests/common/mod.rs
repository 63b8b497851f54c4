//! Shared oracles and invariant checks for the integration suites.
#![allow(dead_code)]

use std::collections::{BTreeMap, HashMap};

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use sps_core::airframe::{CycleTiming, FrameParams, CONTROL_SUS, GUARD_SUS};
use sps_core::deployment::{Topology, TrafficKind};
use sps_core::engine::{run_with, RunOptions, RunReport};
use sps_core::scheduler::{DataSu, Demand, DemandKind, Grant};
use sps_core::traffic::TrafficTimeline;
use sps_core::ScenarioConfig;

/// Sum of the fixed latency terms at 60 kHz.
pub const FLOOR_S: f64 = 0.125e-3 + 4.0 / 56e3 + 0.05e-3 + 0.125e-3 + 0.1e-3;

/// Guaranteed share with the fraction given in tenths, exact integer ceiling.
pub fn bucket(need: u32, tenths: u32) -> u32 {
    (tenths * need).div_ceil(10).max(1).min(need)
}

pub fn reference(demands: &[Demand], sus: &[DataSu], tenths: u32) -> Vec<Grant> {
    let mut got = vec![0u32; demands.len()];
    for d in demands.iter() {
        got[d.id as usize] = d.credit.min(d.rbs_needed);
    }
    let mut out = Vec::new();
    for s in sus {
        let mut live: Vec<usize> = (0..demands.len())
            .filter(|&i| {
                let d = &demands[i];
                d.ready_su <= s.su && s.su < d.horizon_su && got[i] < d.rbs_needed && (!s.guard || d.guard_ok)
            })
            .collect();
        live.sort_by(|&a, &b| {
            let (x, y) = (&demands[a], &demands[b]);
            (x.deadline_s, x.gen_time_s, x.ue_id, x.id)
                .partial_cmp(&(y.deadline_s, y.gen_time_s, y.ue_id, y.id))
                .unwrap()
        });
        let mut here = vec![0u32; demands.len()];
        let mut free = s.capacity;
        // pass one: one RB at a time up to each bucket, earliest deadline first
        for &i in &live {
            let cap = bucket(demands[i].rbs_needed, tenths).min(demands[i].rbs_needed - got[i]);
            while free > 0 && here[i] < cap {
                here[i] += 1;
                free -= 1;
            }
        }
        // pass two: top up in the same order
        for &i in &live {
            while free > 0 && got[i] + here[i] < demands[i].rbs_needed {
                here[i] += 1;
                free -= 1;
            }
        }
        let mut rb = 0;
        for &i in &live {
            if here[i] > 0 {
                out.push(Grant {
                    su: s.su,
                    ue_id: demands[i].ue_id,
                    demand_id: demands[i].id,
                    rb_start: rb,
                    rb_count: here[i],
                });
                rb += here[i];
                got[i] += here[i];
            }
        }
    }
    out
}

pub fn instance(rng: &mut ChaCha8Rng) -> (Vec<Demand>, Vec<DataSu>, u32) {
    let n = rng.random_range(1..=6);
    let demands = (0..n)
        .map(|id| {
            let ready_su = rng.random_range(0..4);
            let rbs_needed = rng.random_range(1..=20);
            let kind = if rng.random_bool(0.3) {
                DemandKind::Backlog { block_id: id }
            } else {
                DemandKind::Predicted { window: 0, offset_symbols: 0 }
            };
            Demand {
                id,
                ue_id: rng.random_range(0..4),
                kind,
                // coarse values so ties exercise the secondary keys
                gen_time_s: f64::from(rng.random_range(0..3u32)) * 1e-3,
                deadline_s: f64::from(rng.random_range(0..3u32)) * 1e-3,
                ready_su,
                horizon_su: ready_su + rng.random_range(1..6),
                rbs_needed,
                credit: if rng.random_bool(0.2) { rng.random_range(0..rbs_needed) } else { 0 },
                guard_ok: !matches!(kind, DemandKind::Backlog { .. }),
            }
        })
        .collect();
    let mut su = 0;
    let sus = (0..rng.random_range(1..=6))
        .map(|_| {
            su += rng.random_range(1..3);
            DataSu { su, capacity: rng.random_range(0..=20), guard: rng.random_bool(0.25) }
        })
        .collect();
    (demands, sus, rng.random_range(1..=10))
}

pub fn full_run(cfg: &ScenarioConfig) -> RunReport<f64> {
    run_with::<f64>(cfg, RunOptions { keep_records: true, keep_grant_log: true }).unwrap()
}

pub fn timeline(cfg: &ScenarioConfig) -> (TrafficTimeline, Topology, FrameParams) {
    let frame = FrameParams::from_config(cfg);
    let topo = Topology::build(cfg).unwrap();
    (TrafficTimeline::generate(cfg, &topo, &frame), topo, frame)
}

macro_rules! ensure {
    ($cond:expr, $($msg:tt)+) => {
        if !bool::from($cond) {
            return Err(format!($($msg)+));
        }
    };
}

/// Grants never overlap within an SU, fit the data RBs and avoid control SUs.
pub fn check_grid(cfg: &ScenarioConfig, r: &RunReport<f64>) -> Result<(), String> {
    let frame = FrameParams::from_config(cfg);
    let cycle = CycleTiming::from_config(cfg, &frame).cycle_sus();
    let mut per_su: BTreeMap<u64, Vec<(u32, u32)>> = BTreeMap::new();
    for g in &r.grant_log {
        ensure!(g.su % cycle >= u64::from(CONTROL_SUS), "grant in control SU {}", g.su);
        ensure!(g.rb_count > 0, "empty grant at SU {}", g.su);
        per_su.entry(g.su).or_default().push((g.rb_start, g.rb_count));
    }
    for (su, ranges) in per_su.iter_mut() {
        ranges.sort_unstable();
        for w in ranges.windows(2) {
            ensure!(w[0].0 + w[0].1 <= w[1].0, "RB overlap in SU {su}");
        }
        let last = ranges.last().unwrap();
        ensure!(last.0 + last.1 <= frame.data_rbs_per_su(), "SU {su} over capacity");
    }
    Ok(())
}

/// Every consumed grant lies strictly after the generation SU of its block,
/// and no delivered block beats the latency floor.
pub fn check_grant_after_generation(r: &RunReport<f64>, tl: &TrafficTimeline) -> Result<(), String> {
    for g in &r.grant_log {
        if let Some(b) = g.block {
            let gen = tl.blocks[b as usize].generation_symbol;
            ensure!(g.su > gen / 7, "block {b} generated at symbol {gen} granted in SU {}", g.su);
        }
    }
    for rec in &r.records {
        ensure!(rec.t_ran_s >= 0.0, "negative RAN time for block {}", rec.block_id);
        ensure!(rec.total_s >= FLOOR_S - 1e-12, "block {} below floor", rec.block_id);
    }
    Ok(())
}

pub fn check_conservation(cfg: &ScenarioConfig, r: &RunReport<f64>, tl: &TrafficTimeline) -> Result<(), String> {
    let m = &r.metrics;
    ensure!(m.generated_count == tl.blocks.len() as u64, "generated count differs from timeline");
    ensure!(
        m.generated_count == m.delivered_count + m.dropped_count + m.queued_at_end_count,
        "{} generated != {} delivered + {} dropped + {} queued",
        m.generated_count,
        m.delivered_count,
        m.dropped_count,
        m.queued_at_end_count
    );
    ensure!(r.records.len() as u64 == m.delivered_count, "record count differs from delivered");
    ensure!(m.unreachable_count <= m.dropped_count, "unreachable exceeds dropped");
    if !cfg.dropping_enabled {
        ensure!(m.dropped_count == m.unreachable_count, "drops without the dropping policy");
    }
    Ok(())
}

/// Slots start at zero, last one full activation period, and are separated
/// by exactly the guard interval.
pub fn check_tiling(cfg: &ScenarioConfig, tl: &TrafficTimeline, frame: &FrameParams) -> Result<(), String> {
    let timing = CycleTiming::from_config(cfg, frame);
    let horizon = frame.seconds_to_sus(cfg.sim_time_s);
    let period = timing.tau_on_sus + u64::from(GUARD_SUS);
    for (i, s) in tl.slots.iter().enumerate() {
        ensure!(s.index as usize == i, "slot index {} at position {i}", s.index);
        ensure!(s.end_su - s.start_su == timing.tau_on_sus, "slot {i} length");
        ensure!(s.start_su == i as u64 * period, "slot {i} starts at {}", s.start_su);
        ensure!(s.start_su < horizon, "slot {i} past the horizon");
    }
    let last = tl.slots.last().ok_or("no slots")?;
    ensure!(last.start_su + period >= horizon, "slots stop before the horizon");
    Ok(())
}

/// At most two blocks per aperiodic UE and slot; periodic UEs send one block
/// per period of every full slot.
pub fn check_block_counts(
    cfg: &ScenarioConfig,
    tl: &TrafficTimeline,
    topo: &Topology,
    frame: &FrameParams,
) -> Result<(), String> {
    let horizon = frame.seconds_to_sus(cfg.sim_time_s);
    let per_slot = (cfg.tau_on_s / cfg.periodic_period_s).round() as u32;
    let mut count: HashMap<(u32, u64), u32> = HashMap::new();
    for b in &tl.blocks {
        *count.entry((b.ue_id, b.slot_index)).or_default() += 1;
    }
    for ((ue, slot), n) in count {
        match topo.ues[ue as usize].traffic_kind {
            TrafficKind::Aperiodic => ensure!(n <= 2, "aperiodic UE {ue} sent {n} blocks in slot {slot}"),
            // the last slot may be cut by the end of the run
            TrafficKind::Periodic if tl.slots[slot as usize].end_su <= horizon => {
                ensure!(n == per_slot, "periodic UE {ue} sent {n} blocks in slot {slot}")
            }
            TrafficKind::Periodic => ensure!(n <= per_slot, "periodic UE {ue} sent {n} blocks in slot {slot}"),
        }
    }
    Ok(())
}

pub fn check_replay(cfg: &ScenarioConfig) -> Result<(), String> {
    let dump = |r: &RunReport<f64>| serde_json::to_string(&(&r.metrics, &r.records, &r.grant_log)).unwrap();
    ensure!(dump(&full_run(cfg)) == dump(&full_run(cfg)), "two runs with seed {} differ", cfg.rng_seed);
    Ok(())
}

/// Every run-level invariant on one configuration.
pub fn check_all(cfg: &ScenarioConfig) -> Result<(), String> {
    let r = full_run(cfg);
    let (tl, topo, frame) = timeline(cfg);
    check_grid(cfg, &r)?;
    check_grant_after_generation(&r, &tl)?;
    check_conservation(cfg, &r, &tl)?;
    check_tiling(cfg, &tl, &frame)?;
    check_block_counts(cfg, &tl, &topo, &frame)?;
    check_replay(cfg)
}
