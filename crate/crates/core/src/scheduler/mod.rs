//! Uplink SPS policies and the EDF + fair-first RB allocator.
//!
//! At every PUCCH opportunity a policy turns what it knows (requests, traffic
//! statistics and, for the smart variant, the true activation schedule) into
//! a list of [`Demand`]s. [`allocate_edf_ff`] then forward-simulates the
//! cycle SU by SU to produce the per-SU grant plan that UEs execute.

mod asps;
mod bsps;
mod dropping;
mod ssps;

use std::cmp::Ordering;

use serde::{Deserialize, Serialize};

pub use asps::{asps_update_estimates, AspsEstimatorState, AspsScheduler, WindowUsage};
pub use bsps::BspsScheduler;
pub use dropping::apply_dropping;
pub use ssps::SspsScheduler;

use crate::airframe::{CycleTiming, FrameParams, GUARD_SUS};
use crate::deployment::{Topology, TrafficKind};
use crate::scenario::{ScenarioConfig, SchedulerKind};
use crate::traffic::ActivationSlot;

/// RBs a block is guaranteed in the first pass of an SU.
pub fn bucket_rbs(rbs_needed: u32, bucket_fraction: f64) -> u32 {
    let b = (bucket_fraction * f64::from(rbs_needed) - 1e-9).ceil().max(1.0) as u32;
    b.min(rbs_needed)
}

/// One block's demand as seen by the single-SU allocator.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SuDemand {
    pub deadline_s: f64,
    pub gen_time_s: f64,
    pub ue_id: u32,
    pub id: u32,
    pub remaining: u32,
    pub bucket: u32,
}

impl SuDemand {
    pub fn edf_cmp(&self, other: &Self) -> Ordering {
        self.deadline_s
            .total_cmp(&other.deadline_s)
            .then(self.gen_time_s.total_cmp(&other.gen_time_s))
            .then(self.ue_id.cmp(&other.ue_id))
            .then(self.id.cmp(&other.id))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SuGrant {
    /// Index into the slice passed to [`allocate_su`].
    pub index: usize,
    pub rb_start: u32,
    pub rb_count: u32,
}

/// Two-pass allocation of one SU: every demand gets up to its bucket in EDF
/// order, then leftover capacity tops demands up in the same order. Each
/// served demand receives one contiguous RB range; ranges follow EDF order.
pub fn allocate_su(demands: &[SuDemand], capacity: u32) -> Vec<SuGrant> {
    let mut order: Vec<usize> = (0..demands.len()).filter(|&i| demands[i].remaining > 0).collect();
    order.sort_by(|&a, &b| demands[a].edf_cmp(&demands[b]));
    let mut given = vec![0u32; order.len()];
    let mut left = capacity;
    for (slot, &i) in order.iter().enumerate() {
        let d = &demands[i];
        let take = d.bucket.min(d.remaining).min(left);
        given[slot] = take;
        left -= take;
    }
    for (slot, &i) in order.iter().enumerate() {
        if left == 0 {
            break;
        }
        let take = (demands[i].remaining - given[slot]).min(left);
        given[slot] += take;
        left -= take;
    }
    let mut rb = 0;
    let mut out = Vec::new();
    for (slot, &i) in order.iter().enumerate() {
        if given[slot] > 0 {
            out.push(SuGrant { index: i, rb_start: rb, rb_count: given[slot] });
            rb += given[slot];
        }
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum DemandKind {
    /// A generation the policy expects at `offset_symbols` into window `window`.
    Predicted { window: u32, offset_symbols: u64 },
    /// Aperiodic pre-allocation.
    Reservation { window: u32 },
    /// A block reported as queued in the PUCCH request.
    Backlog { block_id: u32 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Demand {
    pub id: u32,
    pub ue_id: u32,
    pub kind: DemandKind,
    pub gen_time_s: f64,
    pub deadline_s: f64,
    /// First SU the demand may be served in.
    pub ready_su: u64,
    /// Exclusive SU bound after which unserved demand is abandoned.
    pub horizon_su: u64,
    pub rbs_needed: u32,
    /// Credit already held (partially sent backlog).
    pub credit: u32,
    /// May use guard SUs; only demand of the slot that just ended does.
    pub guard_ok: bool,
}

/// A grantable SU of the cycle.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct DataSu {
    pub su: u64,
    pub capacity: u32,
    pub guard: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Grant {
    pub su: u64,
    pub ue_id: u32,
    pub demand_id: u32,
    pub rb_start: u32,
    pub rb_count: u32,
}

/// Forward-simulates EDF + FF over `sus` in order.
pub fn allocate_edf_ff(demands: &[Demand], sus: &[DataSu], bucket_fraction: f64) -> Vec<Grant> {
    let mut order: Vec<usize> = (0..demands.len()).collect();
    order.sort_by_key(|&i| (demands[i].ready_su, i));
    let mut granted: Vec<u32> = demands.iter().map(|d| d.credit.min(d.rbs_needed)).collect();
    let mut next = 0;
    let mut active: Vec<usize> = Vec::new();
    let mut grants = Vec::new();
    let mut batch = Vec::new();
    let mut eligible = Vec::new();
    for &DataSu { su, capacity: cap, guard } in sus {
        while next < order.len() && demands[order[next]].ready_su <= su {
            active.push(order[next]);
            next += 1;
        }
        active.retain(|&i| granted[i] < demands[i].rbs_needed && su < demands[i].horizon_su);
        if cap == 0 || active.is_empty() {
            continue;
        }
        eligible.clear();
        eligible.extend(active.iter().copied().filter(|&i| !guard || demands[i].guard_ok));
        batch.clear();
        batch.extend(eligible.iter().map(|&i| {
            let d = &demands[i];
            SuDemand {
                deadline_s: d.deadline_s,
                gen_time_s: d.gen_time_s,
                ue_id: d.ue_id,
                id: d.id,
                remaining: d.rbs_needed - granted[i],
                bucket: bucket_rbs(d.rbs_needed, bucket_fraction),
            }
        }));
        for g in allocate_su(&batch, cap) {
            let i = eligible[g.index];
            granted[i] += g.rb_count;
            grants.push(Grant {
                su,
                ue_id: demands[i].ue_id,
                demand_id: demands[i].id,
                rb_start: g.rb_start,
                rb_count: g.rb_count,
            });
        }
    }
    grants
}

/// A block reported in a scheduling request.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QueuedBlock {
    pub block_id: u32,
    pub gen_time_s: f64,
    pub ready_su: u64,
    pub remaining_rbs: u32,
    pub credit: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SchedulingRequest {
    pub ue_id: u32,
    pub pucch_cycle_index: u64,
    pub queued_blocks: Vec<QueuedBlock>,
}

/// What every gNB knows about the cell regardless of policy.
#[derive(Debug, Clone)]
pub struct CellKnowledge {
    pub frame: FrameParams,
    pub t_ip_sus: u64,
    pub lines: Vec<Vec<usize>>,
    pub ues_by_machine: Vec<Vec<usize>>,
    pub ue_machine: Vec<usize>,
    /// (line, index in line) of every machine.
    pub machine_position: Vec<(usize, usize)>,
    pub ue_kind: Vec<TrafficKind>,
    /// RBs per block; `None` when the link cannot carry data.
    pub ue_rbs: Vec<Option<u32>>,
    pub period_s: f64,
    pub t_min_s: f64,
    pub t_max_s: f64,
    pub bucket_fraction: f64,
    /// RAN share of the 1 ms budget; EDF deadline offset.
    pub latency_budget_s: f64,
}

impl CellKnowledge {
    pub fn new(cfg: &ScenarioConfig, topology: &Topology, frame: &FrameParams, ue_rbs: Vec<Option<u32>>) -> Self {
        let timing = CycleTiming::from_config(cfg, frame);
        let mut machine_position = vec![(0, 0); topology.machines.len()];
        for m in &topology.machines {
            machine_position[m.id] = (m.line_id, m.index_in_line);
        }
        CellKnowledge {
            frame: *frame,
            t_ip_sus: timing.cycle_sus(),
            lines: topology.lines.clone(),
            ues_by_machine: topology.ues_by_machine.clone(),
            ue_machine: topology.ues.iter().map(|u| u.machine_id).collect(),
            machine_position,
            ue_kind: topology.ues.iter().map(|u| u.traffic_kind).collect(),
            ue_rbs,
            period_s: cfg.periodic_period_s,
            t_min_s: cfg.aperiodic_tmin_s,
            t_max_s: cfg.aperiodic_tmax_s,
            bucket_fraction: cfg.bucket_fraction,
            latency_budget_s: 1e-3 - fixed_latency_s(cfg, frame),
        }
    }

    fn symbol_rate(&self) -> f64 {
        f64::from(self.frame.symbols_per_second())
    }
}

/// Sum of the constant latency terms.
pub fn fixed_latency_s(cfg: &ScenarioConfig, frame: &FrameParams) -> f64 {
    let sym = f64::from(frame.symbols_per_second());
    f64::from(cfg.t_p_symbols) / sym
        + f64::from(cfg.t_tx_symbols) / sym
        + cfg.tau_p_s
        + cfg.t_fh_s
        + cfg.tau_fh_s
        + f64::from(cfg.t_gnb_symbols) / sym
        + cfg.t_cn_s
}

/// Activation window a policy believes will occur in the cycle.
#[derive(Debug, Clone, PartialEq)]
pub struct PredictedWindow {
    pub start_su: u64,
    pub len_symbols: f64,
    pub ues: Vec<usize>,
}

#[derive(Debug, Clone, Copy)]
pub struct CycleContext<'a> {
    pub cycle: u64,
    pub start_su: u64,
    pub end_su: u64,
    pub requests: &'a [SchedulingRequest],
}

/// Per-cycle feedback handed to policies after execution.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct CycleObservation {
    pub cycle: u64,
    /// Predicted window-0 generation offsets (symbols) of periodic requesters.
    pub usage: WindowUsage,
}

pub trait SpsPolicy: Send {
    fn kind(&self) -> SchedulerKind;
    fn predict(&mut self, know: &CellKnowledge, ctx: &CycleContext<'_>) -> Vec<PredictedWindow>;
    fn observe(&mut self, _know: &CellKnowledge, _obs: &CycleObservation) {}
    /// Whether blocks reported in requests are planned alongside predictions.
    fn plans_backlog(&self) -> bool {
        false
    }
    /// Cycle from which the policy's estimates are final, if it learns.
    fn trained_at_cycle(&self) -> Option<u64> {
        None
    }
}

pub fn make_policy(
    kind: SchedulerKind,
    cfg: &ScenarioConfig,
    frame: &FrameParams,
    slots: &[ActivationSlot],
) -> Box<dyn SpsPolicy> {
    let timing = CycleTiming::from_config(cfg, frame);
    match kind {
        SchedulerKind::Bsps => Box::new(BspsScheduler::new(timing.tau_on_sus)),
        SchedulerKind::Ssps => Box::new(SspsScheduler::new(timing, slots.to_vec())),
        SchedulerKind::Asps => Box::new(AspsScheduler::new()),
    }
}

/// Cycle plan: demands plus the grants allocated to them.
#[derive(Debug, Clone, Default)]
pub struct CyclePlan {
    pub demands: Vec<Demand>,
    pub grants: Vec<Grant>,
}

/// Builds the demand list from predicted windows (and, if `with_backlog`,
/// the blocks reported in requests), then allocates it over the data SUs.
pub fn plan_cycle(
    know: &CellKnowledge,
    ctx: &CycleContext<'_>,
    windows: &[PredictedWindow],
    with_backlog: bool,
    data_sus: &[DataSu],
) -> CyclePlan {
    let first_data = data_sus.first().map_or(ctx.start_su, |d| d.su);
    let sym_rate = know.symbol_rate();
    let su_sym = f64::from(know.frame.symbols_per_su);
    let mut demands = Vec::new();
    let mut push = |ue: u32, kind, gen_time_s: f64, ready_su: u64, horizon_su: u64, rbs: u32, credit: u32| {
        let guard_ok = !matches!(kind, DemandKind::Backlog { .. });
        let id = demands.len() as u32;
        demands.push(Demand {
            id,
            ue_id: ue,
            kind,
            gen_time_s,
            deadline_s: gen_time_s + know.latency_budget_s,
            ready_su: ready_su.max(first_data),
            horizon_su: horizon_su.min(ctx.end_su),
            rbs_needed: rbs,
            credit,
            guard_ok,
        });
    };

    for req in ctx.requests.iter().filter(|_| with_backlog) {
        for q in &req.queued_blocks {
            let kind = DemandKind::Backlog { block_id: q.block_id };
            push(req.ue_id, kind, q.gen_time_s, q.ready_su, ctx.end_su, q.remaining_rbs + q.credit, q.credit);
        }
    }

    let period_sym = know.period_s * sym_rate;
    for (w, win) in windows.iter().enumerate() {
        let w = w as u32;
        let start_sym = win.start_su as f64 * su_sym;
        let win_sus = (win.len_symbols / su_sym).floor() as u64;
        let horizon = win.start_su + (win.len_symbols / su_sym).ceil() as u64 + u64::from(GUARD_SUS);
        for &ue in &win.ues {
            let Some(rbs) = know.ue_rbs[ue] else { continue };
            match know.ue_kind[ue] {
                TrafficKind::Periodic => {
                    for k in 0.. {
                        let off = f64::from(k) * period_sym;
                        if off >= win.len_symbols - 1e-9 {
                            break;
                        }
                        let sym = (start_sym + off - 1e-6).ceil() as u64;
                        let kind = DemandKind::Predicted { window: w, offset_symbols: off.round() as u64 };
                        let t = (start_sym + off) / sym_rate;
                        push(ue as u32, kind, t, ready_su_of(sym, know), horizon, rbs, 0);
                    }
                }
                TrafficKind::Aperiodic => {
                    let mid = start_sym + 0.5 * (know.t_min_s + know.t_max_s) * sym_rate;
                    let sym = (mid - 1e-6).ceil() as u64;
                    let kind = DemandKind::Reservation { window: w };
                    push(ue as u32, kind, mid / sym_rate, ready_su_of(sym, know), horizon, rbs, 0);
                    for back in [2u64, 1] {
                        if win_sus < back {
                            continue;
                        }
                        let su = win.start_su + win_sus - back;
                        let t = (su - 1) as f64 * su_sym / sym_rate;
                        push(ue as u32, kind, t, su, horizon, rbs, 0);
                    }
                }
            }
        }
    }
    let grants = allocate_edf_ff(&demands, data_sus, know.bucket_fraction);
    CyclePlan { demands, grants }
}

fn ready_su_of(symbol: u64, know: &CellKnowledge) -> u64 {
    symbol.div_ceil(u64::from(know.frame.symbols_per_su)) + 1
}

/// Grant log as delimiter-separated text.
pub fn grant_log_csv(rows: &[GrantLogRow]) -> Result<String, csv::Error> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows {
        w.serialize(r)?;
    }
    let bytes = w.into_inner().map_err(|e| e.into_error())?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct GrantLogRow {
    pub cycle: u64,
    pub su: u64,
    pub rb_start: u32,
    pub rb_count: u32,
    pub ue: u32,
    /// First block that consumed the grant, empty when unused.
    pub block: Option<u32>,
}
