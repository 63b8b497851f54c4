//! Baseline SPS: plans only for the UEs that requested at the PUCCH.

use super::{CellKnowledge, CycleContext, PredictedWindow, SpsPolicy};
use crate::scenario::SchedulerKind;

/// Predicts one activation window of the requesting UEs starting at the
/// PUCCH and plans their reported backlog; UEs that activate later in the
/// cycle wait for a later request.
#[derive(Debug, Clone)]
pub struct BspsScheduler {
    tau_on_sus: u64,
}

impl BspsScheduler {
    pub fn new(tau_on_sus: u64) -> Self {
        BspsScheduler { tau_on_sus }
    }
}

impl SpsPolicy for BspsScheduler {
    fn kind(&self) -> SchedulerKind {
        SchedulerKind::Bsps
    }

    fn predict(&mut self, know: &CellKnowledge, ctx: &CycleContext<'_>) -> Vec<PredictedWindow> {
        let ues = ctx.requests.iter().map(|r| r.ue_id as usize).collect();
        let len_symbols = (self.tau_on_sus * u64::from(know.frame.symbols_per_su)) as f64;
        vec![PredictedWindow { start_su: ctx.start_su, len_symbols, ues }]
    }

    fn plans_backlog(&self) -> bool {
        true
    }
}
