//! Factory topology: machine placement, production lines, UE placement and
//! UE-machine association.

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::PlacementError;
use crate::rng::{substream, Stream};
use crate::scenario::ScenarioConfig;

/// Rejection-sampling attempts per machine before the layout is restarted.
pub const ATTEMPTS_PER_ENTITY: usize = 10_000;
const RSA_RESTARTS: usize = 8;
const MCMC_SWEEPS: usize = 400;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Machine {
    pub id: usize,
    /// Centre of the lower base of the cube.
    pub position: [f64; 3],
    pub line_id: usize,
    pub index_in_line: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TrafficKind {
    Periodic,
    Aperiodic,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UserEquipment {
    pub id: usize,
    pub position: [f64; 3],
    pub machine_id: usize,
    pub traffic_kind: TrafficKind,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Topology {
    pub machines: Vec<Machine>,
    pub ues: Vec<UserEquipment>,
    pub gnb_position: [f64; 3],
    /// Machine ids of each line, ordered by activation index.
    pub lines: Vec<Vec<usize>>,
    /// UE ids associated with each machine, ascending.
    pub ues_by_machine: Vec<Vec<usize>>,
}

impl Topology {
    /// Samples the full topology for `cfg`; a pure function of the config and seed.
    pub fn build(cfg: &ScenarioConfig) -> Result<Self, PlacementError> {
        let mut rng = substream(cfg.rng_seed, Stream::MachinePlacement);
        let mut machines = place_machines(cfg, &mut rng)?;
        let lines = assign_lines(&mut machines, cfg.n_lines as usize)?;
        let mut rng = substream(cfg.rng_seed, Stream::UePlacement);
        let ues = place_ues(cfg, &machines, &mut rng);
        let mut ues_by_machine = vec![Vec::new(); machines.len()];
        for ue in &ues {
            ues_by_machine[ue.machine_id].push(ue.id);
        }
        Ok(Topology {
            machines,
            ues,
            gnb_position: [cfg.floor_length_m / 2.0, cfg.floor_width_m / 2.0, cfg.floor_height_m],
            lines,
            ues_by_machine,
        })
    }

    pub fn machines_per_line(&self) -> usize {
        self.lines.first().map_or(0, Vec::len)
    }

    /// Structured dump used for reproducibility audits.
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("topology serialises")
    }
}

fn dist2(a: [f64; 3], b: [f64; 3]) -> f64 {
    (a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2) + (a[2] - b[2]).powi(2)
}

fn spaced(p: [f64; 3], others: &[[f64; 3]], min_d2: f64) -> bool {
    others.iter().all(|o| dist2(p, *o) >= min_d2)
}

struct Floor {
    x: (f64, f64),
    y: (f64, f64),
    min_d2: f64,
}

impl Floor {
    fn sample<R: Rng>(&self, rng: &mut R) -> [f64; 3] {
        let x = if self.x.0 < self.x.1 { rng.random_range(self.x.0..=self.x.1) } else { self.x.0 };
        let y = if self.y.0 < self.y.1 { rng.random_range(self.y.0..=self.y.1) } else { self.y.0 };
        [x, y, 0.0]
    }

    fn contains(&self, p: [f64; 3]) -> bool {
        p[0] >= self.x.0 && p[0] <= self.x.1 && p[1] >= self.y.0 && p[1] <= self.y.1
    }
}

/// Places `n_lines · machines_per_line` machines uniformly with pairwise
/// spacing of at least `D` and the whole footprint on the floor.
///
/// Sequential rejection sampling is tried first. Dense layouts jam before
/// all machines are placed; those are sampled with hard-disk Metropolis moves
/// started from a lattice packing, which keeps every constraint satisfied
/// and converges to the uniform law over admissible layouts.
pub fn place_machines<R: Rng>(cfg: &ScenarioConfig, rng: &mut R) -> Result<Vec<Machine>, PlacementError> {
    let count = cfg.num_machines();
    let half = cfg.machine_side_m / 2.0;
    let d = cfg.inter_machine_distance_m;
    let infeasible = |placed| PlacementError::Infeasible {
        requested: count,
        placed,
        spacing_m: d,
        length_m: cfg.floor_length_m,
        width_m: cfg.floor_width_m,
    };
    if cfg.floor_length_m < cfg.machine_side_m || cfg.floor_width_m < cfg.machine_side_m {
        return Err(infeasible(0));
    }
    let floor = Floor {
        x: (half, cfg.floor_length_m - half),
        y: (half, cfg.floor_width_m - half),
        min_d2: d * d * (1.0 - 1e-12),
    };

    let mut best = 0;
    for _ in 0..RSA_RESTARTS {
        let mut pts: Vec<[f64; 3]> = Vec::with_capacity(count);
        'machines: while pts.len() < count {
            for _ in 0..ATTEMPTS_PER_ENTITY {
                let p = floor.sample(rng);
                if spaced(p, &pts, floor.min_d2) {
                    pts.push(p);
                    continue 'machines;
                }
            }
            break;
        }
        best = best.max(pts.len());
        if pts.len() == count {
            return Ok(into_machines(pts));
        }
    }

    let lattice = lattice_points(&floor, d);
    if lattice.len() < count {
        return Err(infeasible(best.max(lattice.len())));
    }
    let mut pts: Vec<[f64; 3]> = lattice;
    pts.shuffle(rng);
    pts.truncate(count);
    let step = (d.max(cfg.machine_side_m)) / 2.0;
    for _ in 0..MCMC_SWEEPS {
        for i in 0..count {
            let cur = pts[i];
            let cand = [cur[0] + rng.random_range(-step..=step), cur[1] + rng.random_range(-step..=step), 0.0];
            if !floor.contains(cand) {
                continue;
            }
            let ok = pts.iter().enumerate().all(|(j, o)| j == i || dist2(cand, *o) >= floor.min_d2);
            if ok {
                pts[i] = cand;
            }
        }
    }
    Ok(into_machines(pts))
}

fn into_machines(pts: Vec<[f64; 3]>) -> Vec<Machine> {
    pts.into_iter().enumerate().map(|(id, position)| Machine { id, position, line_id: 0, index_in_line: 0 }).collect()
}

/// Densest of a square and a hexagonal lattice with spacing `d` that fits
/// the placement rectangle.
fn lattice_points(floor: &Floor, d: f64) -> Vec<[f64; 3]> {
    if d <= 0.0 {
        return vec![[floor.x.0, floor.y.0, 0.0]];
    }
    let span_x = floor.x.1 - floor.x.0;
    let span_y = floor.y.1 - floor.y.0;
    let square = {
        let nx = (span_x / d + 1e-9).floor() as usize + 1;
        let ny = (span_y / d + 1e-9).floor() as usize + 1;
        let mut v = Vec::new();
        for iy in 0..ny {
            for ix in 0..nx {
                v.push([floor.x.0 + ix as f64 * d, floor.y.0 + iy as f64 * d, 0.0]);
            }
        }
        v
    };
    let hex = {
        let dy = d * 3f64.sqrt() / 2.0;
        let ny = (span_y / dy + 1e-9).floor() as usize + 1;
        let mut v = Vec::new();
        for iy in 0..ny {
            let off = if iy % 2 == 1 { d / 2.0 } else { 0.0 };
            let mut x = floor.x.0 + off;
            while x <= floor.x.1 + 1e-9 {
                v.push([x.min(floor.x.1), floor.y.0 + iy as f64 * dy, 0.0]);
                x += d;
            }
        }
        v
    };
    if hex.len() > square.len() {
        hex
    } else {
        square
    }
}

/// Logical line membership: machine `i` joins line `i mod n_lines` at
/// activation index `i div n_lines`.
pub fn assign_lines(machines: &mut [Machine], n_lines: usize) -> Result<Vec<Vec<usize>>, PlacementError> {
    if n_lines == 0 || !machines.len().is_multiple_of(n_lines) {
        return Err(PlacementError::LineDivisibility { machines: machines.len(), lines: n_lines });
    }
    let per_line = machines.len() / n_lines;
    let mut lines = vec![vec![usize::MAX; per_line]; n_lines];
    for m in machines.iter_mut() {
        m.line_id = m.id % n_lines;
        m.index_in_line = m.id / n_lines;
        lines[m.line_id][m.index_in_line] = m.id;
    }
    Ok(lines)
}

/// Nearest machine by 3D distance to its reference point, lowest id on ties.
pub fn nearest_machine(pos: [f64; 3], machines: &[Machine]) -> usize {
    let mut best = (f64::INFINITY, usize::MAX);
    for m in machines {
        let d = dist2(pos, m.position);
        if d < best.0 || (d == best.0 && m.id < best.1) {
            best = (d, m.id);
        }
    }
    best.1
}

/// Places `N` UEs uniformly over the floor at heights in `[0, S]`.
/// The `round(traffic_mix · N)` lowest ids are aperiodic.
pub fn place_ues<R: Rng>(cfg: &ScenarioConfig, machines: &[Machine], rng: &mut R) -> Vec<UserEquipment> {
    let n = cfg.num_ues as usize;
    let aperiodic = ((cfg.traffic_mix * n as f64).round() as usize).min(n);
    (0..n)
        .map(|id| {
            let position = [
                rng.random_range(0.0..=cfg.floor_length_m),
                rng.random_range(0.0..=cfg.floor_width_m),
                rng.random_range(0.0..=cfg.machine_side_m),
            ];
            UserEquipment {
                id,
                position,
                machine_id: nearest_machine(position, machines),
                traffic_kind: if id < aperiodic { TrafficKind::Aperiodic } else { TrafficKind::Periodic },
            }
        })
        .collect()
}
