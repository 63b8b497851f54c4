//! 3GPP InF link model: scenario classification, LOS probability, path loss
//! with log-normal shadowing, SNR and modulation class.

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::deployment::Topology;
use crate::error::ChannelError;
use crate::num::{db, Scalar};
use crate::rng::{substream, Stream};
use crate::scenario::ScenarioConfig;

/// Boltzmann constant, J/K.
pub const BOLTZMANN: f64 = 1.380_649e-23;
pub const SUBCARRIERS_PER_RB: u32 = 12;
/// Clutter density above this inter-machine distance is treated as sparse.
pub const DENSE_CLUTTER_MAX_SPACING_M: f64 = 7.5;
pub const SPARSE_CLUTTER_DENSITY: f64 = 0.2;
pub const DENSE_CLUTTER_DENSITY: f64 = 0.6;

const STANDARD_COEFFICIENTS: &str = include_str!("../data/inf_coefficients.csv");

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum InfKind {
    #[serde(rename = "InF-SL")]
    SparseLow,
    #[serde(rename = "InF-DL")]
    DenseLow,
    #[serde(rename = "InF-SH")]
    SparseHigh,
    #[serde(rename = "InF-DH")]
    DenseHigh,
}

impl InfKind {
    pub fn label(self) -> &'static str {
        match self {
            InfKind::SparseLow => "InF-SL",
            InfKind::DenseLow => "InF-DL",
            InfKind::SparseHigh => "InF-SH",
            InfKind::DenseHigh => "InF-DH",
        }
    }

    pub fn is_dense(self) -> bool {
        matches!(self, InfKind::DenseLow | InfKind::DenseHigh)
    }

    pub fn is_elevated(self) -> bool {
        matches!(self, InfKind::SparseHigh | InfKind::DenseHigh)
    }
}

/// InF sub-scenario with the clutter description used by the LOS model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InfScenario {
    pub kind: InfKind,
    /// Clutter density `r`.
    pub clutter_density: f64,
    /// Typical clutter size, m.
    pub clutter_size_m: f64,
    /// Clutter height, m.
    pub clutter_height_m: f64,
}

/// Dense iff `D <= 7.5 m`; elevated gNB iff the ceiling is above the clutter.
pub fn classify_inf_scenario(cfg: &ScenarioConfig) -> InfScenario {
    let dense = cfg.inter_machine_distance_m <= DENSE_CLUTTER_MAX_SPACING_M;
    let elevated = cfg.floor_height_m > cfg.machine_side_m;
    let kind = match (dense, elevated) {
        (true, true) => InfKind::DenseHigh,
        (false, true) => InfKind::SparseHigh,
        (true, false) => InfKind::DenseLow,
        (false, false) => InfKind::SparseLow,
    };
    InfScenario {
        kind,
        clutter_density: if dense { DENSE_CLUTTER_DENSITY } else { SPARSE_CLUTTER_DENSITY },
        clutter_size_m: cfg.machine_side_m,
        clutter_height_m: cfg.machine_side_m,
    }
}

/// One row of the path-loss coefficient table.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PathLossRow<F> {
    pub intercept_db: F,
    pub distance_slope: F,
    pub frequency_slope: F,
    pub shadowing_sigma_db: F,
}

impl<F: Scalar> PathLossRow<F> {
    fn eval(&self, d3d_m: F, fc_ghz: F) -> F {
        self.intercept_db + self.distance_slope * d3d_m.log10() + self.frequency_slope * fc_ghz.log10()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InfCoefficients<F> {
    pub los: PathLossRow<F>,
    pub sparse_low: PathLossRow<F>,
    pub dense_low: PathLossRow<F>,
    pub sparse_high: PathLossRow<F>,
    pub dense_high: PathLossRow<F>,
}

impl<F: Scalar> InfCoefficients<F> {
    /// The bundled TR 38.901 table.
    pub fn standard() -> Self {
        Self::parse(STANDARD_COEFFICIENTS).expect("bundled coefficient table parses")
    }

    /// Parses the CSV coefficient format (`#` comment lines, header row,
    /// one row per branch: LOS, SL, DL, SH, DH).
    pub fn parse(text: &str) -> Result<Self, ChannelError> {
        let body: String = text
            .lines()
            .filter(|l| !l.trim_start().starts_with('#') && !l.trim().is_empty())
            .map(|l| format!("{l}\n"))
            .collect();
        let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(body.as_bytes());
        let mut rows: [Option<PathLossRow<F>>; 5] = [None; 5];
        for rec in reader.records() {
            let rec = rec.map_err(|e| ChannelError::Coefficients(e.to_string()))?;
            if rec.len() != 5 {
                return Err(ChannelError::Coefficients(format!("expected 5 columns, got {}", rec.len())));
            }
            let num = |i: usize| -> Result<F, ChannelError> {
                rec[i]
                    .parse::<f64>()
                    .map(F::lit)
                    .map_err(|_| ChannelError::Coefficients(format!("bad number `{}`", &rec[i])))
            };
            let row = PathLossRow {
                intercept_db: num(1)?,
                distance_slope: num(2)?,
                frequency_slope: num(3)?,
                shadowing_sigma_db: num(4)?,
            };
            let slot = match &rec[0] {
                "LOS" => 0,
                "SL" => 1,
                "DL" => 2,
                "SH" => 3,
                "DH" => 4,
                other => return Err(ChannelError::Coefficients(format!("unknown branch `{other}`"))),
            };
            rows[slot] = Some(row);
        }
        let take =
            |i: usize, name: &str| rows[i].ok_or_else(|| ChannelError::Coefficients(format!("missing {name} row")));
        Ok(InfCoefficients {
            los: take(0, "LOS")?,
            sparse_low: take(1, "SL")?,
            dense_low: take(2, "DL")?,
            sparse_high: take(3, "SH")?,
            dense_high: take(4, "DH")?,
        })
    }

    fn nlos_row(&self, kind: InfKind) -> &PathLossRow<F> {
        match kind {
            InfKind::SparseLow => &self.sparse_low,
            InfKind::DenseLow => &self.dense_low,
            InfKind::SparseHigh => &self.sparse_high,
            InfKind::DenseHigh => &self.dense_high,
        }
    }

    /// Median path loss without shadowing, and the shadowing sigma that applies.
    pub fn median_path_loss_db(&self, kind: InfKind, los: bool, d3d_m: F, fc_hz: F) -> Result<(F, F), ChannelError> {
        let d = d3d_m.to_f64_lossy();
        if !(1.0..=600.0).contains(&d) {
            return Err(ChannelError::DistanceOutOfRange(d));
        }
        let fc_ghz = fc_hz / F::lit(1e9);
        let pl_los = self.los.eval(d3d_m, fc_ghz);
        if los {
            return Ok((pl_los, self.los.shadowing_sigma_db));
        }
        let row = self.nlos_row(kind);
        let mut pl = row.eval(d3d_m, fc_ghz).max(pl_los);
        if kind == InfKind::DenseLow {
            pl = pl.max(self.sparse_low.eval(d3d_m, fc_ghz));
        }
        Ok((pl, row.shadowing_sigma_db))
    }
}

/// Path loss and the shadowing realisation added to it. Passing `None`
/// disables shadowing.
pub fn path_loss_db<F: Scalar, R: Rng + ?Sized>(
    coeffs: &InfCoefficients<F>,
    scenario: &InfScenario,
    los: bool,
    d3d_m: F,
    fc_hz: F,
    rng: Option<&mut R>,
) -> Result<(F, F), ChannelError> {
    let (median, sigma) = coeffs.median_path_loss_db(scenario.kind, los, d3d_m, fc_hz)?;
    let shadow = match rng {
        Some(rng) => {
            let normal = Normal::new(0.0, sigma.to_f64_lossy()).expect("finite sigma");
            F::lit(normal.sample(rng))
        }
        None => F::zero(),
    };
    Ok((median + shadow, shadow))
}

/// InF LOS probability `exp(-d2D / k)`; UEs at or above the clutter height
/// see the gNB with certainty.
pub fn los_probability<F: Scalar>(scenario: &InfScenario, d2d_m: F, gnb_height_m: F, ue_height_m: F) -> F {
    if d2d_m <= F::zero() {
        return F::one();
    }
    let r = F::lit(scenario.clutter_density);
    let size = F::lit(scenario.clutter_size_m);
    let hc = F::lit(scenario.clutter_height_m);
    let mut k = -(size / (F::one() - r).ln());
    if scenario.kind.is_elevated() {
        if ue_height_m >= hc {
            return F::one();
        }
        k = k * (gnb_height_m - ue_height_m) / (hc - ue_height_m);
    }
    (-d2d_m / k).exp().min(F::one()).max(F::zero())
}

/// Transmit-side link budget terms taken from the configuration.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinkBudget<F> {
    pub tx_power_dbm: F,
    pub antenna_gain_ue_db: F,
    pub antenna_gain_gnb_db: F,
    pub noise_temperature_k: F,
    pub subcarrier_spacing_hz: F,
}

impl<F: Scalar> LinkBudget<F> {
    pub fn uplink(cfg: &ScenarioConfig) -> Self {
        LinkBudget {
            tx_power_dbm: F::lit(cfg.tx_power_ul_dbm),
            antenna_gain_ue_db: F::lit(cfg.antenna_gain_ue_db),
            antenna_gain_gnb_db: F::lit(cfg.antenna_gain_gnb_db),
            noise_temperature_k: F::lit(cfg.noise_temperature_k),
            subcarrier_spacing_hz: F::lit(cfg.subcarrier_spacing_hz),
        }
    }

    /// Thermal noise power over `rbs` resource blocks, dBm (0 dB noise figure).
    pub fn noise_dbm(&self, rbs: u32) -> F {
        let bw = F::lit(f64::from(rbs * SUBCARRIERS_PER_RB)) * self.subcarrier_spacing_hz;
        db(F::lit(BOLTZMANN) * self.noise_temperature_k * bw) + F::lit(30.0)
    }
}

/// Uplink SNR over `allocated_rbs` resource blocks.
pub fn snr_db<F: Scalar>(budget: &LinkBudget<F>, path_loss_db: F, allocated_rbs: u32) -> F {
    assert!(allocated_rbs >= 1, "SNR needs at least one RB");
    budget.tx_power_dbm + budget.antenna_gain_ue_db + budget.antenna_gain_gnb_db
        - path_loss_db
        - budget.noise_dbm(allocated_rbs)
}

/// SNR class edges for the modulation step mapping.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModulationThresholds<F> {
    /// Below this the link is inadequate.
    pub min_snr_db: F,
    pub qam16_snr_db: F,
    pub qam64_snr_db: F,
}

impl<F: Scalar> ModulationThresholds<F> {
    pub fn from_config(cfg: &ScenarioConfig) -> Self {
        ModulationThresholds {
            min_snr_db: F::lit(cfg.snr_threshold_db),
            qam16_snr_db: F::lit(cfg.qam16_snr_db),
            qam64_snr_db: F::lit(cfg.qam64_snr_db),
        }
    }
}

impl<F: Scalar> Default for ModulationThresholds<F> {
    fn default() -> Self {
        ModulationThresholds { min_snr_db: F::lit(-5.0), qam16_snr_db: F::lit(10.0), qam64_snr_db: F::lit(20.0) }
    }
}

/// Bits per symbol for `snr`, or `None` when the link is inadequate.
pub fn modulation_order<F: Scalar>(snr: F, t: &ModulationThresholds<F>) -> Option<u8> {
    if snr < t.min_snr_db {
        None
    } else if snr < t.qam16_snr_db {
        Some(2)
    } else if snr < t.qam64_snr_db {
        Some(4)
    } else {
        Some(6)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinkState<F> {
    pub ue_id: usize,
    pub distance_3d_m: F,
    pub los: bool,
    pub path_loss_db: F,
    pub shadowing_db: F,
    /// SNR over one RB.
    pub snr_db: F,
    pub modulation_bits_per_symbol: Option<u8>,
    pub adequate: bool,
}

/// Draws the frozen per-UE link table for a topology.
pub fn build_link_table<F: Scalar>(cfg: &ScenarioConfig, topo: &Topology) -> Vec<LinkState<F>> {
    build_link_table_with(cfg, topo, &InfCoefficients::standard())
}

pub fn build_link_table_with<F: Scalar>(
    cfg: &ScenarioConfig,
    topo: &Topology,
    coeffs: &InfCoefficients<F>,
) -> Vec<LinkState<F>> {
    let scenario = classify_inf_scenario(cfg);
    let budget = LinkBudget::<F>::uplink(cfg);
    let thresholds = ModulationThresholds::<F>::from_config(cfg);
    let mut rng = substream(cfg.rng_seed, Stream::Channel);
    let g = topo.gnb_position;
    topo.ues
        .iter()
        .map(|ue| {
            let p = ue.position;
            let d2d = ((p[0] - g[0]).powi(2) + (p[1] - g[1]).powi(2)).sqrt();
            let d3d = (d2d * d2d + (g[2] - p[2]).powi(2)).sqrt().clamp(1.0, 600.0);
            let p_los = los_probability(&scenario, F::lit(d2d), F::lit(g[2]), F::lit(p[2]));
            let los = rng.random::<f64>() < p_los.to_f64_lossy();
            let shadow_rng = if cfg.shadowing_enabled { Some(&mut rng) } else { None };
            let (pl, shadow) =
                path_loss_db(coeffs, &scenario, los, F::lit(d3d), F::lit(cfg.carrier_frequency_hz), shadow_rng)
                    .expect("distance clamped into validity range");
            let snr = snr_db(&budget, pl, 1);
            let modulation = modulation_order(snr, &thresholds);
            LinkState {
                ue_id: ue.id,
                distance_3d_m: F::lit(d3d),
                los,
                path_loss_db: pl,
                shadowing_db: shadow,
                snr_db: snr,
                modulation_bits_per_symbol: modulation,
                adequate: snr >= thresholds.min_snr_db,
            }
        })
        .collect()
}
