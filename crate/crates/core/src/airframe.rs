//! Time/frequency discretisation: symbol and SU timing, RB counts, the
//! per-cycle control/data layout and T_IP arithmetic.
//!
//! All timing is kept in integer symbols or SUs; conversion to seconds
//! happens once, at the boundary, through [`FrameParams::sus_to_seconds`].

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::num::Scalar;
use crate::scenario::{su_rate_hz, ScenarioConfig};

pub const SYMBOLS_PER_SU: u32 = 7;
pub const GUARD_SUS: u32 = 2;
/// PUCCH, request processing and PDCCH at the head of every cycle.
pub const CONTROL_SUS: u32 = 3;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FrameParams {
    pub su_per_second: u32,
    pub symbols_per_su: u32,
    pub n_rb: u32,
    pub rbs_pucch: u32,
    pub rbs_pdcch: u32,
    pub rbs_harq: u32,
    pub pusch_data_symbols: u32,
    pub switch_symbols: u32,
    pub coding_rate: f64,
}

impl FrameParams {
    pub fn from_config(cfg: &ScenarioConfig) -> Self {
        let su_rate = su_rate_hz(cfg.subcarrier_spacing_hz).expect("validated subcarrier spacing");
        FrameParams {
            su_per_second: su_rate as u32,
            symbols_per_su: SYMBOLS_PER_SU,
            n_rb: n_rb_for_bandwidth(cfg.bandwidth_hz).expect("validated bandwidth"),
            rbs_pucch: 1,
            rbs_pdcch: 1,
            rbs_harq: 1,
            pusch_data_symbols: 4,
            switch_symbols: 1,
            coding_rate: 1.0,
        }
    }

    pub fn symbols_per_second(&self) -> u32 {
        self.su_per_second * self.symbols_per_su
    }

    pub fn su_duration<F: Scalar>(&self) -> F {
        F::one() / F::lit(f64::from(self.su_per_second))
    }

    pub fn symbol_duration<F: Scalar>(&self) -> F {
        F::one() / F::lit(f64::from(self.symbols_per_second()))
    }

    pub fn sus_to_seconds<F: Scalar>(&self, sus: u64) -> F {
        F::lit(sus as f64) / F::lit(f64::from(self.su_per_second))
    }

    pub fn symbols_to_seconds<F: Scalar>(&self, symbols: u64) -> F {
        F::lit(symbols as f64) / F::lit(f64::from(self.symbols_per_second()))
    }

    /// Nearest whole number of SUs.
    pub fn seconds_to_sus(&self, s: f64) -> u64 {
        (s * f64::from(self.su_per_second)).round().max(0.0) as u64
    }

    /// RBs available to PUSCH in a data SU (HARQ keeps one).
    pub fn data_rbs_per_su(&self) -> u32 {
        self.n_rb - self.rbs_harq
    }

    /// Payload bits one RB carries in one SU.
    pub fn bits_per_rb(&self, bits_per_symbol: u8) -> f64 {
        f64::from(12 * self.pusch_data_symbols * u32::from(bits_per_symbol)) * self.coding_rate
    }
}

pub fn n_rb_for_bandwidth(bandwidth_hz: f64) -> Option<u32> {
    if bandwidth_hz == 60e6 {
        Some(84)
    } else if bandwidth_hz == 120e6 {
        Some(167)
    } else {
        None
    }
}

/// `T_IP = (τ_on + 2·SU) · n_on`.
pub fn compute_t_ip<F: Scalar>(tau_on_s: F, n_on: u32, frame: &FrameParams) -> F {
    assert!(n_on >= 1 && tau_on_s > F::zero());
    let tau_on_sus = frame.seconds_to_sus(tau_on_s.to_f64_lossy());
    frame.sus_to_seconds(t_ip_sus(tau_on_sus, n_on))
}

pub fn t_ip_sus(tau_on_sus: u64, n_on: u32) -> u64 {
    (tau_on_sus + u64::from(GUARD_SUS)) * u64::from(n_on)
}

/// RBs needed to carry `pdu_bytes` in one SU.
pub fn rbs_needed(pdu_bytes: u32, bits_per_symbol: u8, frame: &FrameParams) -> u32 {
    assert!(pdu_bytes >= 1 && bits_per_symbol >= 1);
    let bits = 8.0 * f64::from(pdu_bytes);
    let per_rb = frame.bits_per_rb(bits_per_symbol);
    if frame.coding_rate == 1.0 {
        (8 * pdu_bytes).div_ceil(12 * frame.pusch_data_symbols * u32::from(bits_per_symbol))
    } else {
        (bits / per_rb).ceil().max(1.0) as u32
    }
}

/// Activation timing in SUs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CycleTiming {
    pub tau_on_sus: u64,
    pub n_on: u32,
}

impl CycleTiming {
    pub fn from_config(cfg: &ScenarioConfig, frame: &FrameParams) -> Self {
        CycleTiming { tau_on_sus: frame.seconds_to_sus(cfg.tau_on_s).max(1), n_on: cfg.n_on }
    }

    /// Activation slot period including the guard interval.
    pub fn period_sus(&self) -> u64 {
        self.tau_on_sus + u64::from(GUARD_SUS)
    }

    pub fn cycle_sus(&self) -> u64 {
        t_ip_sus(self.tau_on_sus, self.n_on)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum SuPurpose {
    Pucch,
    Processing,
    Pdcch,
    Data,
    Guard,
}

impl SuPurpose {
    pub fn carries_data(self) -> bool {
        matches!(self, SuPurpose::Data | SuPurpose::Guard)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            SuPurpose::Pucch => "PUCCH",
            SuPurpose::Processing => "PROCESSING",
            SuPurpose::Pdcch => "PDCCH",
            SuPurpose::Data => "DATA",
            SuPurpose::Guard => "GUARD",
        }
    }
}

/// Owner of one RB in one SU.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct RbOwner {
    pub ue_id: u32,
    /// Planned demand the RB was granted for.
    pub demand_id: u32,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GridConflict {
    pub su: u64,
    pub rb: u32,
}

/// Occupancy map of one inter-PUCCH cycle at SU × RB granularity.
#[derive(Debug, Clone)]
pub struct ResourceGrid {
    pub start_su: u64,
    pub purposes: Vec<SuPurpose>,
    pub data_rbs: u32,
    rbs: Vec<Vec<Option<RbOwner>>>,
}

impl ResourceGrid {
    pub fn len(&self) -> usize {
        self.purposes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.purposes.is_empty()
    }

    pub fn purpose(&self, su: u64) -> Option<SuPurpose> {
        su.checked_sub(self.start_su).and_then(|o| self.purposes.get(o as usize).copied())
    }

    pub fn capacity(&self, su: u64) -> u32 {
        match self.purpose(su) {
            Some(p) if p.carries_data() => self.data_rbs,
            _ => 0,
        }
    }

    pub fn owner(&self, su: u64, rb: u32) -> Option<RbOwner> {
        let o = (su - self.start_su) as usize;
        self.rbs.get(o).and_then(|row| row.get(rb as usize).copied().flatten())
    }

    /// Marks `[rb_start, rb_start + count)` of `su` as owned; fails on any
    /// overlap or on a non-data SU.
    pub fn assign(&mut self, su: u64, rb_start: u32, count: u32, owner: RbOwner) -> Result<(), GridConflict> {
        let Some(o) = su.checked_sub(self.start_su).map(|o| o as usize).filter(|&o| o < self.len()) else {
            return Err(GridConflict { su, rb: rb_start });
        };
        if !self.purposes[o].carries_data() || rb_start + count > self.data_rbs {
            return Err(GridConflict { su, rb: rb_start });
        }
        let row = &mut self.rbs[o];
        if row.is_empty() {
            row.resize(self.data_rbs as usize, None);
        }
        for rb in rb_start..rb_start + count {
            if row[rb as usize].is_some() {
                return Err(GridConflict { su, rb });
            }
        }
        for rb in rb_start..rb_start + count {
            row[rb as usize] = Some(owner);
        }
        Ok(())
    }

    pub fn used_rbs(&self, su: u64) -> u32 {
        let o = (su - self.start_su) as usize;
        self.rbs.get(o).map_or(0, |r| r.iter().filter(|x| x.is_some()).count() as u32)
    }

    /// Per-SU occupancy as delimiter-separated text.
    pub fn dump(&self) -> String {
        let mut out = String::from("su,purpose,used_rbs,capacity\n");
        for (o, p) in self.purposes.iter().enumerate() {
            let su = self.start_su + o as u64;
            let _ = writeln!(out, "{su},{},{},{}", p.as_str(), self.used_rbs(su), self.capacity(su));
        }
        out
    }
}

/// Skeleton grid of the cycle starting at `start_su`: PUCCH, processing and
/// PDCCH in the first three SUs, then data SUs with the last two SUs of each
/// activation slot marked as guard.
pub fn layout_control_plane(start_su: u64, timing: &CycleTiming, frame: &FrameParams) -> ResourceGrid {
    let period = timing.period_sus();
    let purposes = (0..timing.cycle_sus())
        .map(|o| match o {
            0 => SuPurpose::Pucch,
            1 => SuPurpose::Processing,
            2 => SuPurpose::Pdcch,
            _ if o % period < timing.tau_on_sus => SuPurpose::Data,
            _ => SuPurpose::Guard,
        })
        .collect::<Vec<_>>();
    let n = purposes.len();
    ResourceGrid { start_su, purposes, data_rbs: frame.data_rbs_per_su(), rbs: vec![Vec::new(); n] }
}
