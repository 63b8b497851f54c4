use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ConfigError {
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("key `{key}`: {message}")]
    Value { key: String, message: String },
    #[error("unknown key `{0}`")]
    UnknownKey(String),
    #[error("missing required key `{0}`")]
    MissingKey(String),
    #[error("unknown preset `{0}`")]
    UnknownPreset(String),
    #[error("validation failed: {0}")]
    Invalid(String),
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PlacementError {
    #[error(
        "cannot place {requested} machines with spacing {spacing_m} m on a {length_m} x {width_m} m floor (placed {placed})"
    )]
    Infeasible { requested: usize, placed: usize, spacing_m: f64, length_m: f64, width_m: f64 },
    #[error("{machines} machines cannot be split evenly into {lines} lines")]
    LineDivisibility { machines: usize, lines: usize },
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ChannelError {
    #[error("3D distance {0} m outside the InF validity range [1, 600] m")]
    DistanceOutOfRange(f64),
    #[error("coefficient table: {0}")]
    Coefficients(String),
}

/// Top-level error of a simulation run.
#[derive(Debug, Error)]
pub enum SimError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Placement(#[from] PlacementError),
    #[error(transparent)]
    Channel(#[from] ChannelError),
    #[error("sweep: {0}")]
    Sweep(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl SimError {
    /// Validation-class failures map to CLI exit code 1, everything else to 2.
    pub fn is_validation(&self) -> bool {
        matches!(self, SimError::Config(_) | SimError::Placement(_) | SimError::Sweep(_))
    }
}
