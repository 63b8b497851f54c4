//! Parameter sweeps: cartesian grids over a base scenario, replicated with
//! consecutive seeds and executed on a bounded worker pool.

use std::collections::BTreeMap;
use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::engine::{run, RunMetrics};
use crate::error::{ConfigError, SimError};
use crate::scenario::ScenarioConfig;

/// Result table columns, in output order.
pub const COLUMNS: [&str; 17] = [
    "scheduler",
    "use_case",
    "N",
    "B_MHz",
    "G_Mbps",
    "n_on",
    "tau_on_ms",
    "t_min_ms",
    "traffic_mix",
    "dropping",
    "seed",
    "mean_e2e_ms",
    "p99_e2e_ms",
    "loss_ratio",
    "delivered",
    "dropped",
    "error",
];

pub const DEFAULT_REPLICAS: u32 = 5;
pub const DEFAULT_MAX_POINTS: usize = 4096;

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepAxes {
    #[serde(default, rename = "N", alias = "num_ues")]
    pub num_ues: Vec<u32>,
    #[serde(default, rename = "G_Mbps", alias = "G")]
    pub offered_mbps: Vec<f64>,
    #[serde(default, rename = "B_MHz", alias = "B")]
    pub bandwidth_mhz: Vec<f64>,
    #[serde(default)]
    pub n_on: Vec<u32>,
    #[serde(default, rename = "t_min_ms", alias = "t_min")]
    pub t_min_ms: Vec<f64>,
    #[serde(default)]
    pub scheduler_kind: Vec<String>,
    #[serde(default)]
    pub dropping_enabled: Vec<bool>,
    #[serde(default)]
    pub traffic_mix: Vec<f64>,
    #[serde(default)]
    pub use_case: Vec<String>,
}

/// A sweep document (TOML).
///
/// ```toml
/// base = "ar.cfg"        # optional scenario file, relative to the sweep file
/// replicas = 5
/// base_seed = 1
/// [set]
/// sim_time_s = "10s"
/// [axes]
/// N = [60, 80, 100]
/// scheduler_kind = ["SSPS", "ASPS", "BSPS"]
/// ```
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSpec {
    #[serde(default)]
    pub base: Option<String>,
    #[serde(default = "default_replicas")]
    pub replicas: u32,
    #[serde(default = "default_base_seed")]
    pub base_seed: u64,
    #[serde(default = "default_max_points")]
    pub max_points: usize,
    /// Fixed overrides applied to every point before the axes.
    #[serde(default)]
    pub set: BTreeMap<String, toml::Value>,
    #[serde(default)]
    pub axes: SweepAxes,
}

fn default_replicas() -> u32 {
    DEFAULT_REPLICAS
}
fn default_base_seed() -> u64 {
    1
}
fn default_max_points() -> usize {
    DEFAULT_MAX_POINTS
}

impl Default for SweepSpec {
    fn default() -> Self {
        SweepSpec {
            base: None,
            replicas: DEFAULT_REPLICAS,
            base_seed: 1,
            max_points: DEFAULT_MAX_POINTS,
            set: BTreeMap::new(),
            axes: SweepAxes::default(),
        }
    }
}

fn toml_scalar(v: &toml::Value) -> String {
    match v {
        toml::Value::String(s) => s.clone(),
        other => other.to_string(),
    }
}

impl SweepSpec {
    pub fn parse(text: &str) -> Result<Self, SimError> {
        let spec: SweepSpec = toml::from_str(text).map_err(|e| SimError::Sweep(e.to_string()))?;
        if spec.replicas == 0 {
            return Err(SimError::Sweep("replicas must be >= 1".into()));
        }
        let n = spec.point_count();
        if n > spec.max_points {
            return Err(SimError::Sweep(format!("{n} points exceed the cap of {}", spec.max_points)));
        }
        Ok(spec)
    }

    pub fn point_count(&self) -> usize {
        self.axis_values().iter().map(|(_, v)| v.len().max(1)).product()
    }

    /// Axis values as config overrides, outermost axis first.
    fn axis_values(&self) -> Vec<(&'static str, Vec<String>)> {
        let a = &self.axes;
        let f = |v: &[f64], scale: f64, unit: &str| v.iter().map(|x| format!("{}{unit}", x * scale)).collect();
        vec![
            ("preset", a.use_case.clone()),
            ("scheduler_kind", a.scheduler_kind.clone()),
            ("num_ues", a.num_ues.iter().map(u32::to_string).collect()),
            ("bandwidth_hz", f(&a.bandwidth_mhz, 1e6, "")),
            ("offered_traffic_bps", f(&a.offered_mbps, 1e6, "")),
            ("n_on", a.n_on.iter().map(u32::to_string).collect()),
            ("aperiodic_tmin_s", f(&a.t_min_ms, 1.0, "ms")),
            ("traffic_mix", a.traffic_mix.iter().map(f64::to_string).collect()),
            ("dropping_enabled", a.dropping_enabled.iter().map(bool::to_string).collect()),
        ]
    }

    /// Override lists of every point, point-major in axis order.
    pub fn points(&self) -> Vec<Vec<(String, String)>> {
        let fixed: Vec<(String, String)> = self.set.iter().map(|(k, v)| (k.clone(), toml_scalar(v))).collect();
        let mut points = vec![fixed];
        for (key, values) in self.axis_values() {
            if values.is_empty() {
                continue;
            }
            points = points
                .into_iter()
                .flat_map(|p| {
                    values.iter().map(move |v| {
                        let mut q = p.clone();
                        q.push((key.to_string(), v.clone()));
                        q
                    })
                })
                .collect();
        }
        points
    }
}

/// Applies `overrides` in order; the returned config is kept even when an
/// override or validation fails so error rows still echo the point.
pub fn point_config(
    base: &ScenarioConfig,
    overrides: &[(String, String)],
) -> (ScenarioConfig, Result<(), ConfigError>) {
    let mut cfg = base.clone();
    for (k, v) in overrides {
        if let Err(e) = cfg.set_key(k, v) {
            return (cfg, Err(e));
        }
    }
    cfg.normalize();
    let res = cfg.validate();
    (cfg, res)
}

/// One result row; metric fields are empty for failed points.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    pub scheduler: String,
    pub use_case: String,
    #[serde(rename = "N")]
    pub num_ues: u32,
    #[serde(rename = "B_MHz")]
    pub bandwidth_mhz: f64,
    #[serde(rename = "G_Mbps")]
    pub offered_mbps: f64,
    pub n_on: u32,
    pub tau_on_ms: f64,
    pub t_min_ms: f64,
    pub traffic_mix: f64,
    pub dropping: bool,
    pub seed: u64,
    pub mean_e2e_ms: Option<f64>,
    pub p99_e2e_ms: Option<f64>,
    pub loss_ratio: Option<f64>,
    pub delivered: Option<u64>,
    pub dropped: Option<u64>,
    pub error: Option<String>,
}

impl ResultRow {
    fn echo(cfg: &ScenarioConfig) -> Self {
        ResultRow {
            scheduler: cfg.scheduler_kind.to_string(),
            use_case: cfg.use_case.map_or_else(|| "none".to_string(), |u| u.to_string()),
            num_ues: cfg.num_ues,
            bandwidth_mhz: cfg.bandwidth_hz / 1e6,
            offered_mbps: cfg.offered_traffic_bps / 1e6,
            n_on: cfg.n_on,
            tau_on_ms: cfg.tau_on_s * 1e3,
            t_min_ms: cfg.aperiodic_tmin_s * 1e3,
            traffic_mix: cfg.traffic_mix,
            dropping: cfg.dropping_enabled,
            seed: cfg.rng_seed,
            mean_e2e_ms: None,
            p99_e2e_ms: None,
            loss_ratio: None,
            delivered: None,
            dropped: None,
            error: None,
        }
    }

    pub fn from_metrics(cfg: &ScenarioConfig, m: &RunMetrics<f64>) -> Self {
        ResultRow {
            mean_e2e_ms: m.mean_e2e_s.map(|v| v * 1e3),
            p99_e2e_ms: m.p99_e2e_s.map(|v| v * 1e3),
            loss_ratio: Some(m.loss_ratio),
            delivered: Some(m.delivered_count),
            dropped: Some(m.dropped_count),
            ..Self::echo(cfg)
        }
    }

    pub fn from_error(cfg: &ScenarioConfig, err: &str) -> Self {
        ResultRow { error: Some(err.to_string()), ..Self::echo(cfg) }
    }

    pub fn is_error(&self) -> bool {
        self.error.is_some()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepResults {
    /// Sweep document and base scenario, echoed for audit.
    pub spec: SweepSpec,
    pub base_config: String,
    pub rows: Vec<ResultRow>,
}

/// Runs every (point, replica) pair on at most `jobs` threads. Rows come back
/// point-major, replica-minor regardless of completion order.
pub fn run_sweep(spec: &SweepSpec, base: &ScenarioConfig, jobs: usize) -> Result<SweepResults, SimError> {
    let tasks: Vec<(ScenarioConfig, Result<(), ConfigError>)> = spec
        .points()
        .iter()
        .flat_map(|ov| {
            let (cfg, res) = point_config(base, ov);
            (0..spec.replicas).map(move |r| {
                let mut c = cfg.clone();
                c.rng_seed = spec.base_seed + u64::from(r);
                (c, res.clone())
            })
        })
        .collect();
    let pool =
        rayon::ThreadPoolBuilder::new().num_threads(jobs.max(1)).build().map_err(|e| SimError::Sweep(e.to_string()))?;
    let rows = pool.install(|| {
        tasks
            .par_iter()
            .map(|(cfg, res)| match res {
                Err(e) => ResultRow::from_error(cfg, &e.to_string()),
                Ok(()) => match run::<f64>(cfg) {
                    Ok(m) => ResultRow::from_metrics(cfg, &m),
                    Err(e) => ResultRow::from_error(cfg, &e.to_string()),
                },
            })
            .collect()
    });
    Ok(SweepResults { spec: spec.clone(), base_config: base.to_kv_string(), rows })
}

impl SweepResults {
    /// CSV with a `#`-prefixed config echo ahead of the header row.
    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<(), SimError> {
        let spec = toml::to_string(&self.spec).map_err(|e| SimError::Sweep(e.to_string()))?;
        for line in spec.lines().chain(["---"]).chain(self.base_config.lines()) {
            writeln!(out, "# {line}")?;
        }
        write_rows_csv(&self.rows, out)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("results serialise")
    }
}

pub fn write_rows_csv<W: Write>(rows: &[ResultRow], out: W) -> Result<(), SimError> {
    let mut w = csv::Writer::from_writer(out);
    for row in rows {
        w.serialize(row).map_err(|e| SimError::Sweep(e.to_string()))?;
    }
    if rows.is_empty() {
        w.write_record(COLUMNS).map_err(|e| SimError::Sweep(e.to_string()))?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec(text: &str) -> SweepSpec {
        SweepSpec::parse(text).unwrap()
    }

    #[test]
    fn table_sweep_has_fifteen_points() {
        let s = spec("[axes]\nN = [60, 70, 80, 90, 100]\nscheduler_kind = [\"SSPS\", \"ASPS\", \"BSPS\"]\n");
        assert_eq!(s.point_count(), 15);
        let pts = s.points();
        assert_eq!(pts.len(), 15);
        // scheduler is the outer axis
        assert_eq!(pts[0], vec![("scheduler_kind".into(), "SSPS".into()), ("num_ues".into(), "60".into())]);
        assert_eq!(pts[1][1].1, "70");
    }

    #[test]
    fn empty_axes_is_one_point() {
        let s = spec("");
        assert_eq!(s.points(), vec![vec![]]);
        assert_eq!(s.replicas, 5);
    }

    #[test]
    fn grid_sweep_points() {
        let s = spec("[axes]\nn_on = [4, 5, 6, 7, 8]\nB = [60, 120]\nN = [60, 120]\n");
        assert_eq!(s.point_count(), 20);
        let base = ScenarioConfig::default();
        let (cfg, res) = point_config(&base, &s.points()[19]);
        res.unwrap();
        assert_eq!((cfg.num_ues, cfg.bandwidth_hz, cfg.n_on), (120, 120e6, 8));
    }

    #[test]
    fn cap_and_unknown_axis_rejected() {
        assert!(SweepSpec::parse("max_points = 2\n[axes]\nN = [1, 2, 3]\n").is_err());
        assert!(SweepSpec::parse("[axes]\nbogus = [1]\n").is_err());
        assert!(SweepSpec::parse("replicas = 0\n").is_err());
    }

    #[test]
    fn invalid_point_becomes_error_row() {
        let s = spec("replicas = 1\n[set]\nsim_time_s = \"0.05s\"\n[axes]\nt_min_ms = [2, 7]\n");
        let r = run_sweep(&s, &ScenarioConfig::default(), 2).unwrap();
        assert_eq!(r.rows.len(), 2);
        assert!(!r.rows[0].is_error());
        assert!(r.rows[1].error.as_deref().unwrap().contains("t_min < t_max"));
        assert_eq!(r.rows[1].t_min_ms, 7.0);
    }

    #[test]
    fn csv_header_matches_columns() {
        let mut buf = Vec::new();
        write_rows_csv(&[], &mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap().trim(), COLUMNS.join(","));
        let row = ResultRow::from_error(&ScenarioConfig::default(), "x");
        let mut buf = Vec::new();
        write_rows_csv(&[row], &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().next().unwrap(), COLUMNS.join(","));
    }
}
