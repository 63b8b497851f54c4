//! Smart SPS: the gNB knows the true activation schedule.

use super::{CellKnowledge, CycleContext, PredictedWindow, SpsPolicy};
use crate::airframe::CycleTiming;
use crate::scenario::SchedulerKind;
use crate::traffic::ActivationSlot;

#[derive(Debug, Clone)]
pub struct SspsScheduler {
    timing: CycleTiming,
    slots: Vec<ActivationSlot>,
}

impl SspsScheduler {
    pub fn new(timing: CycleTiming, slots: Vec<ActivationSlot>) -> Self {
        SspsScheduler { timing, slots }
    }
}

impl SpsPolicy for SspsScheduler {
    fn kind(&self) -> SchedulerKind {
        SchedulerKind::Ssps
    }

    /// Every slot of the cycle, with all UEs of the machines active in it.
    fn predict(&mut self, know: &CellKnowledge, ctx: &CycleContext<'_>) -> Vec<PredictedWindow> {
        let first = (ctx.cycle * u64::from(self.timing.n_on)) as usize;
        let len_symbols = (self.timing.tau_on_sus * u64::from(know.frame.symbols_per_su)) as f64;
        self.slots
            .iter()
            .skip(first)
            .take_while(|s| s.start_su < ctx.end_su)
            .map(|s| PredictedWindow {
                start_su: s.start_su,
                len_symbols,
                ues: s.active_machines.iter().flat_map(|&m| know.ues_by_machine[m].iter().copied()).collect(),
            })
            .collect()
    }
}
