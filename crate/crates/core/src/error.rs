use thiserror::Error;

/// Errors raised by measure, kernel, product and coupling construction.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("atom space must contain at least one atom")]
    EmptySpace,

    #[error("duplicate atom {0} in atom space")]
    DuplicateAtom(String),

    #[error("atom {0} does not belong to the atom space")]
    UnknownAtom(String),

    #[error("expected {expected} weights, got {actual}")]
    WeightCount { expected: usize, actual: usize },

    #[error("incompatible atom spaces: {0}")]
    SpaceMismatch(String),

    #[error("weight {weight} at atom {atom} is negative")]
    NegativeWeight { atom: String, weight: f64 },

    #[error("weight {weight} at atom {atom} is not finite")]
    NonFiniteWeight { atom: String, weight: f64 },

    #[error("total mass {mass} is outside [1 - 1e-9, 1 + 1e-9]")]
    MassOutOfTolerance { mass: f64 },

    #[error("cannot normalize a measure with total mass {0}")]
    Unnormalizable(f64),

    #[error("invalid partition: {0}")]
    InvalidPartition(String),

    #[error("row for source atom {atom} has mass {mass}, outside [1 - 1e-9, 1 + 1e-9]")]
    RowMass { atom: String, mass: f64 },

    #[error("density kernels use different base measures")]
    BaseMeasureMismatch,

    #[error("invalid density {value} at ({source_atom}, {target_atom})")]
    InvalidDensity {
        source_atom: String,
        target_atom: String,
        value: f64,
    },

    #[error("horizon {requested} exceeds the {available} available kernel steps")]
    HorizonExceeded { requested: usize, available: usize },

    #[error("space mismatch at step {step}: {reason}")]
    StepMismatch { step: usize, reason: String },

    #[error(
        "enumeration at step {step} could reach {required} trajectories, above the cap of {cap}; \
         use the Monte Carlo coupled sampler for this horizon"
    )]
    EnumerationCap {
        step: usize,
        required: u128,
        cap: usize,
    },

    #[error("coordinate {coord} is out of range for horizon {horizon}")]
    CoordinateOutOfRange { coord: usize, horizon: usize },

    #[error("coordinate list must be nonempty, sorted and free of duplicates")]
    InvalidCoordinates,

    #[error("coupling marginal deviates from its certificate by {deviation} on the {side} side")]
    CouplingMarginal { side: &'static str, deviation: f64 },

    #[error("{name} = {value} is outside {range}")]
    OutOfRange {
        name: &'static str,
        value: f64,
        range: &'static str,
    },

    #[error("perturbation budget must contain at least one constant")]
    EmptyBudget,

    #[error("bound violated: {0}")]
    BoundViolation(String),

    #[error("sample count must be at least 1")]
    ZeroSamples,
}

pub type Result<T> = std::result::Result<T, Error>;
