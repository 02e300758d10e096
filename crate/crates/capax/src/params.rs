//! Market parameters, subsidy schemes, reserve models and admissibility.
//!
//! Canonical internal units are MW, years and euros; the spot-price numerator
//! `p` is in euro/hour. Config-level inputs in kW or GW are converted once at
//! parse time (see [`crate::cli::config`]); everything in this module assumes
//! canonical units.

use crate::error::{Error, Result};

/// Market and technology constants shared by all solvers.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MarketParams {
    /// Discount rate (1/year).
    pub r: f64,
    /// Capacity decay rate (1/year).
    pub delta: f64,
    /// Installation responsiveness (MW^2 per euro-year).
    pub lambda: f64,
    /// Price-floor capacity (MW).
    pub eps: f64,
    /// Production hours per year (hours/year).
    pub h: f64,
    /// Spot-price numerator (euro/hour).
    pub p: f64,
    /// Installation cost (euro/MW).
    pub alpha: f64,
    /// Production cost (euro/MWh).
    pub c: f64,
}

impl MarketParams {
    /// Checks sign constraints: all of `r, delta, lambda, eps, h, p` strictly
    /// positive and `alpha >= 0`.
    pub fn validate(&self) -> Result<()> {
        let strictly_positive = [
            ("r", self.r),
            ("delta", self.delta),
            ("lambda", self.lambda),
            ("eps", self.eps),
            ("h", self.h),
            ("p", self.p),
        ];
        for (name, value) in strictly_positive {
            if !(value > 0.0) || !value.is_finite() {
                return Err(Error::InvalidParameter(format!(
                    "{name} must be strictly positive, got {value}"
                )));
            }
        }
        if !(self.alpha >= 0.0) || !self.alpha.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "alpha must be nonnegative, got {}",
                self.alpha
            )));
        }
        if !self.c.is_finite() {
            return Err(Error::InvalidParameter("c must be finite".into()));
        }
        Ok(())
    }

    /// `r + delta`, the effective discount rate of one unit of capacity.
    pub fn r_plus_delta(&self) -> f64 {
        self.r + self.delta
    }

    /// Annualized all-in cost of one MW of new capacity:
    /// `cbar = h c + (r + delta) alpha` (euro/(MW year)).
    pub fn cbar(&self) -> f64 {
        self.h * self.c + self.r_plus_delta() * self.alpha
    }

    /// Annualized subsidy `cbar_sub = h c_sub + (r + delta) alpha_sub`.
    ///
    /// For an affine-in-price scheme this is the constant part only,
    /// `h c2_sub + (r + delta) alpha_sub`; the price-indexed part `c1_sub`
    /// scales the spot term instead and is excluded by definition.
    pub fn cbar_sub(&self, scheme: &SubsidyScheme) -> f64 {
        match *scheme {
            SubsidyScheme::Constant { alpha_sub, c_sub } => {
                self.h * c_sub + self.r_plus_delta() * alpha_sub
            }
            SubsidyScheme::AffineInPrice {
                c2_sub, alpha_sub, ..
            } => self.h * c2_sub + self.r_plus_delta() * alpha_sub,
        }
    }

    /// Net annualized cost after subsidy, `cbar - cbar_sub`.
    pub fn cbar_net(&self, scheme: &SubsidyScheme) -> f64 {
        self.cbar() - self.cbar_sub(scheme)
    }

    /// Net installation cost `alpha - alpha_sub`.
    pub fn alpha_net(&self, scheme: &SubsidyScheme) -> f64 {
        self.alpha - scheme.alpha_sub()
    }

    /// Net production cost `c - c_sub` (affine: `c - c2_sub`), euro/MWh.
    pub fn c_net(&self, scheme: &SubsidyScheme) -> f64 {
        match *scheme {
            SubsidyScheme::Constant { c_sub, .. } => self.c - c_sub,
            SubsidyScheme::AffineInPrice { c2_sub, .. } => self.c - c2_sub,
        }
    }

    /// Effective spot numerator: `p + c1_sub` under an affine-in-price
    /// subsidy, plain `p` otherwise.
    pub fn p_eff(&self, scheme: &SubsidyScheme) -> f64 {
        match *scheme {
            SubsidyScheme::Constant { .. } => self.p,
            SubsidyScheme::AffineInPrice { c1_sub, .. } => self.p + c1_sub,
        }
    }
}

/// Subsidy paid by the central planner to producers.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SubsidyScheme {
    /// Constant installation subsidy `alpha_sub` (euro/MW) and production
    /// subsidy `c_sub` (euro/MWh).
    Constant { alpha_sub: f64, c_sub: f64 },
    /// Production subsidy `c1_sub/(k + eps) + c2_sub` that mirrors the spot
    /// price, plus a constant installation subsidy.
    ///
    /// `c1_sub` is in euro/hour (same unit as `p`), `c2_sub` in euro/MWh.
    AffineInPrice {
        c1_sub: f64,
        c2_sub: f64,
        alpha_sub: f64,
    },
}

impl SubsidyScheme {
    /// No subsidy at all.
    pub fn none() -> Self {
        SubsidyScheme::Constant {
            alpha_sub: 0.0,
            c_sub: 0.0,
        }
    }

    /// Realizes an annualized lump subsidy `cbar_sub` (euro/(MW year)) as a
    /// pure production subsidy `c_sub = cbar_sub / h`.
    ///
    /// The model is indifferent to how `cbar_sub` is split between
    /// installation and production, so this is the canonical realization.
    pub fn constant_production(params: &MarketParams, cbar_sub: f64) -> Self {
        SubsidyScheme::Constant {
            alpha_sub: 0.0,
            c_sub: cbar_sub / params.h,
        }
    }

    pub fn alpha_sub(&self) -> f64 {
        match *self {
            SubsidyScheme::Constant { alpha_sub, .. } => alpha_sub,
            SubsidyScheme::AffineInPrice { alpha_sub, .. } => alpha_sub,
        }
    }

    /// Checks the structural constraints: `alpha_sub <= alpha` and, for the
    /// affine scheme, `c1_sub > 0`.
    pub fn validate(&self, params: &MarketParams) -> Result<()> {
        if self.alpha_sub() > params.alpha {
            return Err(Error::InvalidParameter(format!(
                "alpha_sub = {} exceeds alpha = {}",
                self.alpha_sub(),
                params.alpha
            )));
        }
        if let SubsidyScheme::AffineInPrice { c1_sub, .. } = *self {
            if !(c1_sub > 0.0) {
                return Err(Error::InvalidParameter(format!(
                    "affine-in-price scheme requires c1_sub > 0, got {c1_sub}"
                )));
            }
        }
        Ok(())
    }
}

/// Linear reserve response `dY/dt = -a K - b Y + gamma`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinearReserve {
    /// Renewable displacement slope (1/year).
    pub a: f64,
    /// Reserve relaxation slope (1/year).
    pub b: f64,
    /// Reserve target level scaled by `b` (MW/year).
    pub gamma: f64,
}

impl LinearReserve {
    pub fn validate(&self) -> Result<()> {
        for (name, value) in [("a", self.a), ("b", self.b), ("gamma", self.gamma)] {
            if !(value > 0.0) || !value.is_finite() {
                return Err(Error::InvalidParameter(format!(
                    "linear reserve requires {name} > 0, got {value}"
                )));
            }
        }
        Ok(())
    }

    /// Reserve drift `f(k, y) = -a k - b y + gamma` (MW/year).
    pub fn drift(&self, k: f64, y: f64) -> f64 {
        -self.a * k - self.b * y + self.gamma
    }

    /// Reserve level at which the drift vanishes for a given capacity.
    pub fn y_null(&self, k: f64) -> f64 {
        (self.gamma - self.a * k) / self.b
    }
}

/// Reserve (non-renewable backing capacity) model.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ReserveModel {
    /// Reserve held fixed at `y0`; it folds into the price floor,
    /// `eps_eff = eps + y0`.
    Fixed { y0: f64 },
    /// Reserve adapting to the renewable capacity through a linear drift.
    Linear(LinearReserve),
}

impl ReserveModel {
    pub fn validate(&self) -> Result<()> {
        match self {
            ReserveModel::Fixed { y0 } => {
                if !(*y0 >= 0.0) || !y0.is_finite() {
                    return Err(Error::InvalidParameter(format!(
                        "fixed reserve requires y0 >= 0, got {y0}"
                    )));
                }
                Ok(())
            }
            ReserveModel::Linear(lin) => lin.validate(),
        }
    }
}

/// One admissibility condition with its evaluation.
#[derive(Debug, Clone)]
pub struct AdmissibilityCheck {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

/// Report of all admissibility conditions; advisory, not enforced here.
/// Solvers re-check the conditions they rely on and fail with
/// [`Error::InadmissibleParams`].
#[derive(Debug, Clone)]
pub struct AdmissibilityReport {
    pub checks: Vec<AdmissibilityCheck>,
}

impl AdmissibilityReport {
    pub fn all_pass(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }
}

/// Evaluates the admissibility conditions for a parameter set.
///
/// - installation subsidy bound: `alpha - alpha_sub >= 0`;
/// - cost bound: `(cbar - cbar_sub) * eps_eff < h * p_eff` (strict), with
///   `eps_eff = eps + y0` under a fixed reserve and `p_eff = p + c1_sub`
///   under an affine-in-price subsidy;
/// - linear reserve only: the largest reserve level the 2D solve can visit,
///   `gamma / b`, must satisfy `gamma / b <= h p_eff / cbar_net - eps`.
pub fn check_admissibility(
    params: &MarketParams,
    scheme: &SubsidyScheme,
    reserve: &ReserveModel,
) -> AdmissibilityReport {
    let mut checks = Vec::new();

    let alpha_net = params.alpha_net(scheme);
    checks.push(AdmissibilityCheck {
        name: "installation_subsidy_bound",
        passed: alpha_net >= 0.0,
        detail: format!("alpha - alpha_sub = {alpha_net:.6} (needs >= 0)"),
    });

    let cbar_net = params.cbar_net(scheme);
    let p_eff = params.p_eff(scheme);
    let eps_eff = match reserve {
        ReserveModel::Fixed { y0 } => params.eps + y0,
        ReserveModel::Linear(_) => params.eps,
    };
    let lhs = cbar_net * eps_eff;
    let rhs = params.h * p_eff;
    checks.push(AdmissibilityCheck {
        name: "cost_bound",
        passed: lhs < rhs,
        detail: format!("cbar_net * eps_eff = {lhs:.6e} (needs < h * p_eff = {rhs:.6e})"),
    });

    if let ReserveModel::Linear(lin) = reserve {
        let y_max = lin.gamma / lin.b;
        let bound = params.h * p_eff / cbar_net - params.eps;
        let passed = if cbar_net > 0.0 {
            y_max <= bound
        } else {
            // Nonpositive net cost: the value of one unit stays above alpha
            // for every reserve level, nothing to bound.
            true
        };
        checks.push(AdmissibilityCheck {
            name: "reserve_domain_bound",
            passed,
            detail: format!("gamma/b = {y_max:.6} (needs <= h*p_eff/cbar_net - eps = {bound:.6})"),
        });
    }

    AdmissibilityReport { checks }
}
