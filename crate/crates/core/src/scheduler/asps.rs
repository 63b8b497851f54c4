//! Adaptive SPS: learns the activation period and the number of activations
//! per cycle from request patterns and grant usage.

use serde::{Deserialize, Serialize};

use super::{CellKnowledge, CycleContext, CycleObservation, PredictedWindow, SpsPolicy};
use crate::airframe::GUARD_SUS;
use crate::scenario::SchedulerKind;

/// Predicted generation offsets (symbols from cycle start) in window 0,
/// split by whether a block of the current activation consumed their grant.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct WindowUsage {
    pub tx: Vec<u64>,
    pub notx: Vec<u64>,
}

impl WindowUsage {
    /// Builds sorted, disjoint lists; an offset used by any UE counts as used.
    pub fn from_samples<I: IntoIterator<Item = (u64, bool)>>(samples: I) -> Self {
        let mut tx = Vec::new();
        let mut notx = Vec::new();
        for (t, used) in samples {
            if used {
                tx.push(t)
            } else {
                notx.push(t)
            }
        }
        tx.sort_unstable();
        tx.dedup();
        notx.sort_unstable();
        notx.dedup();
        notx.retain(|t| tx.binary_search(t).is_err());
        WindowUsage { tx, notx }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AspsEstimatorState {
    pub n_e: u32,
    /// Estimated activation period in symbols.
    pub tau_on_hat_symbols: f64,
    pub n_on_hat: u32,
    pub su_notx: Vec<u64>,
    pub su_tx: Vec<u64>,
    /// Parity of the candidate period in SUs, once known.
    pub even_class: Option<bool>,
    pub trained: bool,
}

impl AspsEstimatorState {
    pub fn initial(t_ip_sus: u64, n_lines: u32, n_os: u32) -> Self {
        AspsEstimatorState {
            n_e: 1,
            tau_on_hat_symbols: (t_ip_sus * u64::from(n_os)) as f64 / f64::from(n_lines),
            n_on_hat: n_lines,
            su_notx: Vec::new(),
            su_tx: Vec::new(),
            even_class: None,
            trained: false,
        }
    }

    pub fn tau_on_hat_s(&self, symbols_per_second: u32) -> f64 {
        self.tau_on_hat_symbols / f64::from(symbols_per_second)
    }

    /// One estimation step with the previous cycle's observation. `k` is the
    /// recovered activation index (1-based) of the current requesters.
    pub fn update(&mut self, t_ip_sus: u64, n_lines: u32, n_os: u32, usage: &WindowUsage, k: Option<u32>) {
        if self.trained || usage.tx.is_empty() {
            return;
        }
        let os = f64::from(n_os);
        match self.n_e {
            1 => {
                let n_hat = (n_lines + k.unwrap_or(1)).saturating_sub(1).max(1);
                let cand_su = (t_ip_sus / u64::from(n_hat)).saturating_sub(u64::from(GUARD_SUS)).max(1);
                let even = cand_su % 2 == 0;
                let next_e = 2;
                let tau = match usage.notx.first() {
                    Some(&t) => {
                        let t = t as f64;
                        if ((t / os).floor() as u64).is_multiple_of(2) != even {
                            t + f64::from(next_e - 1) * os
                        } else {
                            t
                        }
                    }
                    None => cand_su as f64 * os,
                };
                self.n_on_hat = n_hat;
                self.even_class = Some(even);
                self.tau_on_hat_symbols = tau;
                self.su_notx = usage.notx.clone();
                self.su_tx = usage.tx.clone();
                self.n_e = next_e;
            }
            _ => {
                let next_e = 3;
                let unchanged = match (usage.notx.first(), self.su_notx.first()) {
                    (None, _) => true,
                    (Some(a), Some(b)) => a == b,
                    (Some(_), None) => false,
                };
                let mut tau = self.tau_on_hat_symbols;
                if !unchanged {
                    for w in usage.tx.windows(2) {
                        let delta = (w[1] - w[0]) as f64;
                        if delta > tau {
                            tau = (tau + w[0] as f64) / 2.0 + f64::from(next_e - 1) * os;
                        }
                    }
                    tau = ((tau / os).round() * os).max(os);
                }
                self.tau_on_hat_symbols = tau;
                let tau_su = (tau / os).round() as u64;
                if tau_su * n_os as u64 == tau as u64 && t_ip_sus.is_multiple_of(tau_su + u64::from(GUARD_SUS)) {
                    self.n_on_hat = (t_ip_sus / (tau_su + u64::from(GUARD_SUS))) as u32;
                }
                self.su_notx = usage.notx.clone();
                self.su_tx = usage.tx.clone();
                self.n_e = next_e;
                self.trained = true;
            }
        }
    }
}

/// Functional form of [`AspsEstimatorState::update`].
pub fn asps_update_estimates(
    est: &AspsEstimatorState,
    t_ip_sus: u64,
    n_lines: u32,
    n_os: u32,
    usage: &WindowUsage,
    k: Option<u32>,
) -> AspsEstimatorState {
    let mut next = est.clone();
    next.update(t_ip_sus, n_lines, n_os, usage, k);
    next
}

#[derive(Debug, Clone, Default)]
pub struct AspsScheduler {
    est: Option<AspsEstimatorState>,
    /// Activation index of the requesting machine in each line, last cycle.
    prev_index: Vec<Option<usize>>,
    pending: Option<WindowUsage>,
    trained_at: Option<u64>,
}

impl AspsScheduler {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn estimator(&self) -> Option<&AspsEstimatorState> {
        self.est.as_ref()
    }
}

impl SpsPolicy for AspsScheduler {
    fn kind(&self) -> SchedulerKind {
        SchedulerKind::Asps
    }

    fn predict(&mut self, know: &CellKnowledge, ctx: &CycleContext<'_>) -> Vec<PredictedWindow> {
        let n_lines = know.lines.len();
        let mut index: Vec<Option<usize>> = vec![None; n_lines];
        for r in ctx.requests {
            let (line, idx) = know.machine_position[know.ue_machine[r.ue_id as usize]];
            index[line] = Some(idx);
        }
        let n_os = know.frame.symbols_per_su;
        let est = match self.est.as_mut() {
            None => self.est.insert(AspsEstimatorState::initial(know.t_ip_sus, n_lines as u32, n_os)),
            Some(est) => {
                if let Some(usage) = self.pending.take() {
                    let k = (0..n_lines)
                        .filter_map(|l| {
                            let (now, prev) = (index[l]?, self.prev_index.get(l).copied().flatten()?);
                            let m = know.lines[l].len();
                            Some(((now + m - prev) % m) as u32 + 1)
                        })
                        .max();
                    est.update(know.t_ip_sus, n_lines as u32, n_os, &usage, k);
                }
                est
            }
        };
        if est.trained && self.trained_at.is_none() {
            self.trained_at = Some(ctx.cycle);
        }
        if index.iter().any(Option::is_some) {
            self.prev_index = index.clone();
        }

        let Some(common) = index.iter().flatten().copied().next() else {
            return Vec::new();
        };
        let n_hat = u64::from(est.n_on_hat.max(1));
        let period = know.t_ip_sus / n_hat;
        let mut windows = Vec::new();
        for j in 0..n_hat {
            let start_su = ctx.start_su + j * period;
            if start_su >= ctx.end_su {
                break;
            }
            let ues = know
                .lines
                .iter()
                .enumerate()
                .flat_map(|(l, machines)| {
                    let base = index[l].unwrap_or(common);
                    let m = machines[(base + j as usize) % machines.len()];
                    know.ues_by_machine[m].iter().copied()
                })
                .collect();
            windows.push(PredictedWindow { start_su, len_symbols: est.tau_on_hat_symbols, ues });
        }
        windows
    }

    fn observe(&mut self, _know: &CellKnowledge, obs: &CycleObservation) {
        self.pending = Some(obs.usage.clone());
    }

    fn trained_at_cycle(&self) -> Option<u64> {
        self.trained_at
    }
}
