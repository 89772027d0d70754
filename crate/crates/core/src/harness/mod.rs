//! Convergence sweeps, rate fitting and the matrix-level identity oracle.

pub mod fit;
pub mod sweep;
pub mod theorem;
pub mod trotter;

pub use fit::{fit_rate, RateFit};
pub use sweep::{converge_sweep, flux_special_case, probe_set, ErrorRecord, FitStatus, FluxSpecialCase, RateRecord, SweepConfig, SweepResult};
pub use theorem::{FiberContext, TheoremSpec, TheoremTag};
pub use trotter::{trotter_kato_oracle, OracleReport};
