//! Monte Carlo verification: tail-ratio curves against theory, Hill
//! estimates and remainder-decay probes.

mod decay;
mod hill;
mod tail_ratio;

pub use decay::{remainder_decay_probe, DecayRow, DecayTable, TruncatedNoiseRow, DEFAULT_TAUS};
pub use hill::{default_hill_k, hill_estimate};
pub use tail_ratio::{
    compare_to_theory, estimate_tail_ratio, resolve_u_grid, write_csv, CompareRule,
    TailRatioEstimate, UGrid, VerdictReport, DEFAULT_LEVELS, MIN_EXCEEDANCES,
};
