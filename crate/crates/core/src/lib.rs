//! Slot-level simulator of semi-persistent uplink scheduling for industrial
//! IoT traffic over a 5G NR indoor-factory cell.

pub mod airframe;
pub mod channel;
pub mod deployment;
pub mod engine;
pub mod error;
pub mod num;
pub mod rng;
pub mod scenario;
pub mod scheduler;
pub mod sweep;
pub mod traffic;

pub use error::{ChannelError, ConfigError, PlacementError, SimError};
pub use num::Scalar;
pub use scenario::{ScenarioConfig, SchedulerKind, UseCase};

pub type RunMetrics64 = engine::RunMetrics<f64>;
pub type RunMetrics32 = engine::RunMetrics<f32>;
pub type LinkState64 = channel::LinkState<f64>;
pub type LinkState32 = channel::LinkState<f32>;
