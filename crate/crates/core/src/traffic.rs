//! Correlated machine activations and per-UE packet arrivals.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::airframe::{CycleTiming, FrameParams};
use crate::deployment::{Topology, TrafficKind};
use crate::rng::{substream, Stream};
use crate::scenario::{derive_block_size_bytes, ScenarioConfig};

/// Tolerance when comparing decimal times against slot bounds.
const TIME_EPS: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ActivationSlot {
    pub index: u64,
    pub start_su: u64,
    /// Exclusive end of the active window.
    pub end_su: u64,
    /// Active machine id of each line.
    pub active_machines: Vec<usize>,
}

impl ActivationSlot {
    /// Last SU (exclusive) in which the slot's blocks may still be sent.
    pub fn deadline_su(&self) -> u64 {
        self.end_su + u64::from(crate::airframe::GUARD_SUS)
    }

    pub fn start_time_s(&self, frame: &FrameParams) -> f64 {
        frame.sus_to_seconds(self.start_su)
    }

    pub fn end_time_s(&self, frame: &FrameParams) -> f64 {
        frame.sus_to_seconds(self.end_su)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DataBlock {
    pub id: u32,
    pub ue_id: u32,
    pub generation_time_s: f64,
    /// First symbol boundary at or after the generation time.
    pub generation_symbol: u64,
    pub payload_bytes: u32,
    pub pdu_bytes: u32,
    pub slot_index: u64,
}

impl DataBlock {
    /// First SU whose start leaves a full SU of processing after generation.
    pub fn ready_su(&self, symbols_per_su: u32) -> u64 {
        self.generation_symbol.div_ceil(u64::from(symbols_per_su)) + 1
    }
}

/// Slots tiling `[0, horizon_su)`; slot `j` runs machine `j mod M` of every line.
pub fn build_activation_schedule(timing: &CycleTiming, lines: &[Vec<usize>], horizon_su: u64) -> Vec<ActivationSlot> {
    let period = timing.period_sus();
    (0..)
        .map(|j: u64| j * period)
        .take_while(|&start| start < horizon_su)
        .enumerate()
        .map(|(j, start_su)| ActivationSlot {
            index: j as u64,
            start_su,
            end_su: start_su + timing.tau_on_sus,
            active_machines: lines.iter().map(|l| l[j % l.len()]).collect(),
        })
        .collect()
}

/// Independent Bernoulli(`p`) draw for every UE of the slot's active machines.
/// Each UE consumes exactly one draw per slot, even for `p` of 0 or 1.
pub fn activate_ues<R: Rng>(slot: &ActivationSlot, topology: &Topology, p: f64, rngs: &mut [R]) -> Vec<usize> {
    let mut active = Vec::new();
    for &m in &slot.active_machines {
        for &ue in &topology.ues_by_machine[m] {
            let u: f64 = rngs[ue].random();
            if u < p {
                active.push(ue);
            }
        }
    }
    active.sort_unstable();
    active
}

/// Offsets in seconds of periodic generations within one activation.
pub fn gen_periodic(tau_on_s: f64, period_s: f64) -> Vec<f64> {
    assert!(period_s > 0.0);
    (0..).map(|k| f64::from(k) * period_s).take_while(|&t| t < tau_on_s - TIME_EPS).collect()
}

/// Offsets of the one or two aperiodic generations within one activation.
pub fn gen_aperiodic<R: Rng>(tau_on_s: f64, t_min_s: f64, t_max_s: f64, rng: &mut R) -> Vec<f64> {
    assert!(0.0 < t_min_s && t_min_s < t_max_s);
    let first = rng.random_range(t_min_s..=0.5 * (t_min_s + t_max_s));
    let second = first + rng.random_range(t_min_s..=t_max_s);
    let mut out = Vec::with_capacity(2);
    if first < tau_on_s - TIME_EPS {
        out.push(first);
        if second < tau_on_s - TIME_EPS {
            out.push(second);
        }
    }
    out
}

/// The full generated workload of one run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrafficTimeline {
    pub slots: Vec<ActivationSlot>,
    /// Active UE ids of every slot, ascending.
    pub active_ues: Vec<Vec<usize>>,
    /// Ordered by generation symbol, then UE id.
    pub blocks: Vec<DataBlock>,
}

impl TrafficTimeline {
    pub fn generate(cfg: &ScenarioConfig, topology: &Topology, frame: &FrameParams) -> Self {
        let timing = CycleTiming::from_config(cfg, frame);
        let horizon = frame.seconds_to_sus(cfg.sim_time_s);
        let slots = build_activation_schedule(&timing, &topology.lines, horizon);
        let mut rngs: Vec<_> =
            (0..topology.ues.len()).map(|u| substream(cfg.rng_seed, Stream::UeTraffic(u as u32))).collect();
        let payload = derive_block_size_bytes(cfg);
        let tau_on_s = frame.sus_to_seconds::<f64>(timing.tau_on_sus);
        let periodic = gen_periodic(tau_on_s, cfg.periodic_period_s);
        let sym_rate = f64::from(frame.symbols_per_second());
        let sim_end = frame.sus_to_seconds::<f64>(horizon);

        let mut active_ues = Vec::with_capacity(slots.len());
        let mut blocks = Vec::new();
        for slot in &slots {
            let active = activate_ues(slot, topology, cfg.ue_activation_prob, &mut rngs);
            let start_s = slot.start_time_s(frame);
            for &ue in &active {
                let offsets = match topology.ues[ue].traffic_kind {
                    TrafficKind::Periodic => periodic.clone(),
                    TrafficKind::Aperiodic => {
                        gen_aperiodic(tau_on_s, cfg.aperiodic_tmin_s, cfg.aperiodic_tmax_s, &mut rngs[ue])
                    }
                };
                for off in offsets {
                    let t = start_s + off;
                    if t >= sim_end {
                        continue;
                    }
                    blocks.push(DataBlock {
                        id: 0,
                        ue_id: ue as u32,
                        generation_time_s: t,
                        generation_symbol: (t * sym_rate - 1e-6).ceil().max(0.0) as u64,
                        payload_bytes: payload,
                        pdu_bytes: payload + cfg.header_bytes,
                        slot_index: slot.index,
                    });
                }
            }
            active_ues.push(active);
        }
        blocks.sort_by(|a, b| {
            a.generation_symbol
                .cmp(&b.generation_symbol)
                .then(a.ue_id.cmp(&b.ue_id))
                .then(a.generation_time_s.total_cmp(&b.generation_time_s))
        });
        for (i, b) in blocks.iter_mut().enumerate() {
            b.id = i as u32;
        }
        let tl = TrafficTimeline { slots, active_ues, blocks };
        tl.check(frame, &timing, topology);
        tl
    }

    /// Always-on structural checks: slot tiling, in-window generation and
    /// the two-packet aperiodic cap.
    pub fn check(&self, frame: &FrameParams, timing: &CycleTiming, topology: &Topology) {
        for w in self.slots.windows(2) {
            assert_eq!(w[1].start_su, w[0].end_su + u64::from(crate::airframe::GUARD_SUS), "slot gap");
            assert_eq!(w[0].end_su - w[0].start_su, timing.tau_on_sus);
        }
        let mut per_ue_slot = std::collections::HashMap::<(u32, u64), u32>::new();
        for b in &self.blocks {
            let s = &self.slots[b.slot_index as usize];
            assert!(
                b.generation_time_s >= s.start_time_s(frame) - TIME_EPS
                    && b.generation_time_s < s.end_time_s(frame) + TIME_EPS,
                "block {} outside its activation window",
                b.id
            );
            *per_ue_slot.entry((b.ue_id, b.slot_index)).or_default() += 1;
        }
        for ((ue, _), n) in per_ue_slot {
            if topology.ues[ue as usize].traffic_kind == TrafficKind::Aperiodic {
                assert!(n <= 2, "aperiodic UE {ue} generated {n} blocks in one slot");
            }
        }
    }

    /// Arrival trace as delimiter-separated text: `ue_id,time_s,bytes`.
    pub fn arrival_trace_csv(&self) -> Result<String, csv::Error> {
        #[derive(Serialize)]
        struct Row {
            ue_id: u32,
            time_s: f64,
            bytes: u32,
        }
        let mut w = csv::Writer::from_writer(Vec::new());
        for b in &self.blocks {
            w.serialize(Row { ue_id: b.ue_id, time_s: b.generation_time_s, bytes: b.pdu_bytes })?;
        }
        let bytes = w.into_inner().map_err(|e| e.into_error())?;
        Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
    }
}
