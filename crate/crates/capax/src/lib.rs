//! Solvers for a stationary mean-field model of renewable capacity investment.
//!
//! A continuum of small producers installs renewable capacity `K` (MW); the
//! spot price `p/(K + Y + eps)` falls as aggregate capacity grows, and each
//! installed MW decays at rate `delta`. The value `U` of one unit of capacity
//! solves a stationary master equation whose drift couples back into the
//! capacity dynamics `dK/dt = lambda (U - alpha) - delta K`. The crate
//! computes:
//!
//! - closed-form and root-found stationary equilibria `(k*, y*, u*)` for the
//!   competitive and monopoly regimes, with fixed or linearly adapting
//!   reserve capacity ([`equilibrium`]);
//! - the 1D value function on `[0, k*]` by a backward implicit scheme
//!   ([`solver1d`]) and the 2D value function on an invariant rectangle by an
//!   upwind scheme with damped Newton iteration ([`solver2d`]);
//! - capacity trajectories, spot prices and discounted integrals
//!   ([`dynamics`]);
//! - central-planner subsidy costs and optimal subsidies ([`planner`]);
//! - a batch CLI over a key=value config format ([`cli`]).

pub mod cli;
pub mod dynamics;
pub mod equilibrium;
mod error;
pub(crate) mod linalg;
pub mod params;
pub mod planner;
pub mod solver1d;
pub mod solver2d;

pub use error::{Error, Result};
pub use params::{
    check_admissibility, AdmissibilityReport, LinearReserve, MarketParams, ReserveModel,
    SubsidyScheme,
};

/// Formats a value with 12 significant digits for CSV output.
///
/// Scientific notation keeps output byte-stable across platforms and avoids
/// thousands separators or locale-dependent formatting.
pub(crate) fn sig12(x: f64) -> String {
    format!("{x:.11e}")
}

#[cfg(test)]
mod tests {
    use super::sig12;

    #[test]
    fn sig12_is_deterministic_and_locale_free() {
        assert_eq!(sig12(282040.6052783923), "2.82040605278e5");
        assert_eq!(sig12(0.0), "0.00000000000e0");
        assert_eq!(sig12(-1.5), "-1.50000000000e0");
    }
}
