//! Grid strength analysis for multi-infeed converter grids.
//!
//! The crate computes the generalized short-circuit ratio (gSCR) of a
//! susceptive network seen by a set of grid-following wind farms, sizes the
//! grid-forming capacity needed to reach a target gSCR, and checks the result
//! against a linearized converter model by eigenvalue analysis and linear
//! time-domain simulation.
//!
//! ```
//! use gridstrength::{network, strength};
//!
//! let text = r#"
//!     s_global_mva = 100.0
//!     nodes = [
//!       { id = "WF", kind = "wind_farm", capacity_mva = 100.0 },
//!       { id = "G", kind = "infinite_bus" },
//!     ]
//!     branches = [{ from = "WF", to = "G", b_pu = 1.2 }]
//! "#;
//! let spec = network::parse_network(text)?;
//! let reduced = network::reduce_spec(&spec)?;
//! let g0 = strength::gscr(&reduced)?;
//! let sizing = strength::size_gamma(g0, 2.0, 0.16)?;
//! assert!((sizing.gamma - 0.128).abs() < 1e-12);
//! # Ok::<(), gridstrength::Error>(())
//! ```

pub mod corpus;
pub mod dynamics;
pub mod error;
pub mod exec;
pub mod network;
pub mod simulation;
pub mod strength;
pub mod sweep;

pub use error::{Error, Result};
pub use network::{
    attach_gfm, build_susceptance, kron_reduce, parse_network, reduce_spec, Branch,
    CapacityRatio, GfmAttachment, KronReducedNetwork, NetworkSpec, Node, NodeKind,
    SusceptanceMatrices,
};
pub use strength::{
    compute_modes, gscr, plan_gfm_units, predict_gscr, size_gamma, size_network,
    terminal_scr_to_gscr, GammaSizing, ModalDecomposition, SizingResult, UnitPlan,
};
pub use dynamics::{
    assess, assess_reduced, build_smib_model, compute_cgscr, direct_full_model, modal_eigenvalues,
    parse_device, CgscrResult, GflDeviceParams, SmibModel, StabilityAssessment,
    StateSpaceModel, Verdict,
};
pub use simulation::{
    estimate_damping, simulate, Channel, DampingEstimate, Disturbance, DisturbanceKind,
    SimulationResult,
};
pub use exec::Execution;
