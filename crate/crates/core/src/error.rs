use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("malformed network document: {0}")]
    MalformedDocument(String),

    #[error("malformed device document: {0}")]
    MalformedDevice(String),

    #[error("s_global_mva must be positive and finite, got {0}")]
    InvalidBase(f64),

    #[error("duplicate node id `{0}`")]
    DuplicateNode(String),

    #[error("wind farm `{node}` has non-positive capacity {value} MVA")]
    NonPositiveCapacity { node: String, value: f64 },

    #[error("wind farm `{0}` is missing `capacity_mva`")]
    MissingCapacity(String),

    #[error("node `{0}` is not a wind farm and must not carry `capacity_mva`")]
    UnexpectedCapacity(String),

    #[error("branch {index} ({from} -> {to}) references unknown node `{id}`")]
    UnknownNode {
        index: usize,
        from: String,
        to: String,
        id: String,
    },

    #[error("branch {index} connects node `{node}` to itself")]
    SelfBranch { index: usize, node: String },

    #[error("branch {index} ({from} -> {to}) has non-positive susceptance {value} p.u.")]
    NonPositiveSusceptance {
        index: usize,
        from: String,
        to: String,
        value: f64,
    },

    #[error("no infinite bus in network")]
    NoInfiniteBus,

    #[error("no wind farm in network")]
    NoWindFarm,

    #[error("node `{0}` has no path to any infinite bus")]
    Disconnected(String),

    #[error("interior block is numerically singular (condition estimate {condition:.3e}) over interior nodes {nodes:?}")]
    SingularInterior { nodes: Vec<String>, condition: f64 },

    #[error("per-farm gamma has {got} entries but the network has {expected} wind farms")]
    GammaLength { expected: usize, got: usize },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("reduced susceptance matrix is not symmetric (max deviation {deviation:.3e})")]
    Asymmetric { deviation: f64 },

    #[error("operating point infeasible at this SCR ({scr}): {reason}")]
    InfeasibleOperatingPoint { scr: f64, reason: String },

    #[error("device {state} over entire bracket; CgSCR outside [{lo}, {hi}]")]
    NoSignChange {
        lo: f64,
        hi: f64,
        state: &'static str,
    },

    #[error("mode {index} (lambda = {lambda}): {source}")]
    Mode {
        index: usize,
        lambda: f64,
        #[source]
        source: Box<Error>,
    },

    #[error("eigenvalue solver did not converge")]
    EigenSolver,

    #[error("algebraic network elimination is singular")]
    SingularCoupling,

    #[error("internal consistency: eigenvalue verdict `{eigen}` disagrees with gSCR {gscr} vs CgSCR {cgscr}")]
    InconsistentVerdict {
        eigen: String,
        gscr: f64,
        cgscr: f64,
    },

    #[error("invalid disturbance: {0}")]
    InvalidDisturbance(String),

    #[error("insufficient oscillation for log-decrement ({peaks} peaks found, need 3)")]
    InsufficientOscillation { peaks: usize },
}

impl Error {
    /// True for errors caused by bad user input rather than numerical failure.
    pub fn is_input_error(&self) -> bool {
        !matches!(
            self,
            Error::Asymmetric { .. }
                | Error::EigenSolver
                | Error::SingularCoupling
                | Error::InconsistentVerdict { .. }
                | Error::Mode { .. }
        )
    }
}
