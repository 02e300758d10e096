//! Central-planner objective evaluation and subsidy optimization.
//!
//! The constant-subsidy objective is
//!
//! ```text
//! Jbar(cbar_sub) = mu (k*(cbar_sub) - k_bar)^2
//!                  + cbar_sub * int_0^inf e^{-rt} K_t dt
//!                  - k0 cbar_sub / (r + delta)
//! ```
//!
//! evaluated through the full pipeline (equilibrium -> 1D solve -> capacity
//! simulation -> discounted quadrature). The same spend is also computed in
//! the pre-integration-by-parts form
//! `alpha_sub I1 + h c_sub I2` with `I1 = int e^{-rt}(dK/dt + delta K)` and
//! `I2 = int e^{-rt}(K - k0 e^{-delta t})`; the two routes agree up to
//! quadrature error and the pair is kept as a cross-check.

use crate::dynamics::{discounted_integral, simulate_capacity, Trajectory};
use crate::equilibrium::subsidy_for_target;
use crate::error::{Error, Result};
use crate::params::{MarketParams, SubsidyScheme};
use crate::solver1d::{solve_master_1d, MarginFunction, ValueFunction1D};
use std::collections::HashMap;

/// Target, weights and pipeline resolution for planner evaluations.
#[derive(Debug, Clone, Copy)]
pub struct PlannerConfig {
    /// Target-tracking weight (euro/MW^2).
    pub mu: f64,
    /// Target capacity (MW).
    pub k_bar: f64,
    /// Initial capacity (MW).
    pub k0: f64,
    /// Quadrature horizon (years); `exp(-r T)` should be well below 1e-6.
    pub quad_horizon: f64,
    /// Quadrature/simulation step (years); shrunk automatically when the
    /// capacity dynamics are faster than `0.25 / dt`.
    pub quad_dt: f64,
    /// 1D grid cells per solve.
    pub n_grid: usize,
    /// Coarse scan points bracketing the optimizer minimum.
    pub scan_points: usize,
    /// Absolute golden-section tolerance on `cbar_sub` (euro/(MW year)).
    pub golden_tol: f64,
}

impl PlannerConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.mu >= 0.0) {
            return Err(Error::InvalidParameter(format!("mu must be >= 0, got {}", self.mu)));
        }
        if !(self.k_bar > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "k_bar must be > 0, got {}",
                self.k_bar
            )));
        }
        if !(self.k0 >= 0.0) {
            return Err(Error::InvalidParameter(format!("k0 must be >= 0, got {}", self.k0)));
        }
        Ok(())
    }
}

impl Default for PlannerConfig {
    fn default() -> Self {
        PlannerConfig {
            mu: 1000.0,
            k_bar: 60_000.0,
            k0: 30_000.0,
            quad_horizon: 140.0,
            quad_dt: 0.005,
            n_grid: 4000,
            scan_points: 64,
            golden_tol: 100.0,
        }
    }
}

/// One planner-objective evaluation.
#[derive(Debug, Clone, Copy)]
pub struct PlannerCost {
    pub cbar_sub: f64,
    pub k_star: f64,
    /// `mu (k* - k_bar)^2`.
    pub tracking: f64,
    /// Discounted subsidy spend, integration-by-parts form.
    pub spend: f64,
    /// The same spend through the pre-integration-by-parts integrals.
    pub spend_alt: f64,
    /// `tracking + spend`.
    pub total: f64,
}

fn quad_dt_for(u: &ValueFunction1D, requested: f64) -> f64 {
    // Resolve the fastest capacity timescale lambda*L + delta.
    let rate = u.params.lambda * u.lipschitz_estimate() + u.params.delta;
    requested.min(0.25 / rate)
}

fn pipeline_trajectory(
    params: &MarketParams,
    scheme: &SubsidyScheme,
    cfg: &PlannerConfig,
    y0: f64,
) -> Result<(ValueFunction1D, Trajectory, f64)> {
    let margin = MarginFunction::competitive(params, scheme, y0);
    let u = solve_master_1d(params, scheme, margin, cfg.n_grid)?;
    if cfg.k0 > u.k_star {
        return Err(Error::StepOutOfDomain(format!(
            "k0 = {} exceeds k* = {}",
            cfg.k0, u.k_star
        )));
    }
    let dt = quad_dt_for(&u, cfg.quad_dt);
    let traj = simulate_capacity(&u, cfg.k0, cfg.quad_horizon, dt)?;
    Ok((u, traj, dt))
}

/// Evaluates the planner objective for a subsidy scheme realizing some
/// `cbar_sub` split between installation and production parts.
pub fn planner_cost_with_scheme(
    params: &MarketParams,
    scheme: &SubsidyScheme,
    cfg: &PlannerConfig,
    y0: f64,
) -> Result<PlannerCost> {
    cfg.validate()?;
    let cbar_sub = params.cbar_sub(scheme);
    let (u, traj, _) = pipeline_trajectory(params, scheme, cfg, y0)?;
    let r = params.r;
    let rd = params.r_plus_delta();
    let k_star = u.k_star;

    let i_k = discounted_integral(&traj, r, |_, k| k, k_star);
    let spend = cbar_sub * i_k - cfg.k0 * cbar_sub / rd;

    // Pre-integration-by-parts route with the scheme's own split.
    let (alpha_sub, c_sub) = match *scheme {
        SubsidyScheme::Constant { alpha_sub, c_sub } => (alpha_sub, c_sub),
        SubsidyScheme::AffineInPrice { alpha_sub, c2_sub, .. } => (alpha_sub, c2_sub),
    };
    let i1 = discounted_integral(
        &traj,
        r,
        |_, k| u.drift(k) + params.delta * k,
        params.delta * k_star,
    );
    let i2 = discounted_integral(&traj, r, |t, k| k - cfg.k0 * (-params.delta * t).exp(), k_star)
        - cfg.k0 * (-rd * cfg.quad_horizon).exp() / rd;
    let spend_alt = alpha_sub * i1 + params.h * c_sub * i2;

    let tracking = cfg.mu * (k_star - cfg.k_bar) * (k_star - cfg.k_bar);
    Ok(PlannerCost {
        cbar_sub,
        k_star,
        tracking,
        spend,
        spend_alt,
        total: tracking + spend,
    })
}

/// Planner objective for an annualized lump subsidy, realized as a pure
/// production subsidy.
pub fn planner_cost_constant(
    params: &MarketParams,
    cbar_sub: f64,
    cfg: &PlannerConfig,
    y0: f64,
) -> Result<PlannerCost> {
    let scheme = SubsidyScheme::constant_production(params, cbar_sub);
    planner_cost_with_scheme(params, &scheme, cfg, y0)
}

/// Scan and refinement record of a constant-subsidy optimization.
#[derive(Debug, Clone)]
pub struct OptimizeReport {
    pub best: PlannerCost,
    /// All evaluated candidates, sorted by `cbar_sub`.
    pub evaluations: Vec<PlannerCost>,
    /// False if the coarse scan saw more than one strict local minimum.
    pub unimodal: bool,
    pub target_subsidy: f64,
}

/// Minimizes the constant-subsidy objective: coarse scan over
/// `[0, subsidy_for_target(k_bar) * (1 + margin)]`, then golden-section
/// refinement around the best scan point.
pub fn optimize_constant_subsidy(
    params: &MarketParams,
    cfg: &PlannerConfig,
    y0: f64,
) -> Result<OptimizeReport> {
    cfg.validate()?;
    let target_subsidy = subsidy_for_target(params, cfg.k_bar, y0)?;
    let hi = if target_subsidy > 0.0 {
        target_subsidy * 1.2
    } else {
        // Target below the unsubsidized equilibrium: scan down to zero
        // subsidy only.
        target_subsidy.max(0.0) + cfg.golden_tol.max(1.0) * 10.0
    };
    // The admissible region is cbar_sub > cbar - h p / eps_eff; 0 may be
    // outside it (a large fixed reserve needs some subsidy for any positive
    // equilibrium). Start the scan just inside.
    let eps_eff = params.eps + y0;
    let lo_admissible = params.cbar() - params.h * params.p / eps_eff;
    let lo = if lo_admissible > 0.0 {
        // Nudge inside so the first evaluation has a positive equilibrium.
        lo_admissible + 1e-6 * (hi - lo_admissible).abs().max(1.0)
    } else {
        0.0
    };
    if hi <= lo {
        return Err(Error::InadmissibleParams(format!(
            "empty optimizer bracket [{lo}, {hi}]"
        )));
    }

    let mut cache: HashMap<u64, PlannerCost> = HashMap::new();
    let mut eval = |cs: f64| -> Result<PlannerCost> {
        if let Some(hit) = cache.get(&cs.to_bits()) {
            return Ok(*hit);
        }
        let cost = planner_cost_constant(params, cs, cfg, y0)?;
        cache.insert(cs.to_bits(), cost);
        Ok(cost)
    };

    let n = cfg.scan_points.max(3);
    let mut scan = Vec::with_capacity(n);
    for i in 0..n {
        let cs = lo + (hi - lo) * i as f64 / (n - 1) as f64;
        scan.push(eval(cs)?);
    }
    let mut best_idx = 0;
    for (i, c) in scan.iter().enumerate() {
        if c.total < scan[best_idx].total {
            best_idx = i;
        }
    }
    // Count strict interior local minima.
    let mut minima = 0;
    for i in 1..n - 1 {
        if scan[i].total < scan[i - 1].total && scan[i].total < scan[i + 1].total {
            minima += 1;
        }
    }
    let unimodal = minima <= 1;

    // Golden-section refinement on the bracketing neighbours.
    let mut a = scan[best_idx.saturating_sub(1)].cbar_sub;
    let mut b = scan[(best_idx + 1).min(n - 1)].cbar_sub;
    const INV_PHI: f64 = 0.618_033_988_749_894_8;
    let mut x1 = b - INV_PHI * (b - a);
    let mut x2 = a + INV_PHI * (b - a);
    let mut f1 = eval(x1)?.total;
    let mut f2 = eval(x2)?.total;
    while b - a > cfg.golden_tol {
        if f1 < f2 {
            b = x2;
            x2 = x1;
            f2 = f1;
            x1 = b - INV_PHI * (b - a);
            f1 = eval(x1)?.total;
        } else {
            a = x1;
            x1 = x2;
            f1 = f2;
            x2 = a + INV_PHI * (b - a);
            f2 = eval(x2)?.total;
        }
    }
    let best = eval(0.5 * (a + b))?;

    let mut evaluations: Vec<PlannerCost> = cache.into_values().collect();
    evaluations.sort_by(|x, y| x.cbar_sub.total_cmp(&y.cbar_sub));
    Ok(OptimizeReport {
        best,
        evaluations,
        unimodal,
        target_subsidy,
    })
}

/// One affine-subsidy spend evaluation.
#[derive(Debug, Clone, Copy)]
pub struct AffineCost {
    pub c1_sub: f64,
    pub cbar2_sub: f64,
    pub k_star: f64,
    /// Constant-part spend (integration-by-parts form).
    pub spend_c2: f64,
    /// Price-indexed spend `h c1 int e^{-rt} (K - k0 e^{-dt})/(K + eps_eff)`.
    pub spend_c1: f64,
    /// Total discounted subsidy spend.
    pub spend: f64,
    /// Optional tracking term for comparability with the constant planner.
    pub tracking: f64,
}

/// Discounted spend of an affine-in-price scheme `(c1_sub, cbar2_sub)`.
///
/// `cbar2_sub` is realized as a pure production subsidy. The spot numerator
/// becomes `p + c1_sub` throughout the pipeline.
pub fn planner_cost_affine(
    params: &MarketParams,
    c1_sub: f64,
    cbar2_sub: f64,
    cfg: &PlannerConfig,
    y0: f64,
) -> Result<AffineCost> {
    cfg.validate()?;
    let scheme = if c1_sub > 0.0 {
        SubsidyScheme::AffineInPrice {
            c1_sub,
            c2_sub: cbar2_sub / params.h,
            alpha_sub: 0.0,
        }
    } else {
        SubsidyScheme::constant_production(params, cbar2_sub)
    };
    let (u, traj, _) = pipeline_trajectory(params, &scheme, cfg, y0)?;
    let r = params.r;
    let rd = params.r_plus_delta();
    let k_star = u.k_star;
    let eps_eff = params.eps + y0;

    let i_k = discounted_integral(&traj, r, |_, k| k, k_star);
    let spend_c2 = cbar2_sub * i_k - cfg.k0 * cbar2_sub / rd;
    let ratio_weight =
        |t: f64, k: f64| (k - cfg.k0 * (-params.delta * t).exp()) / (k + eps_eff);
    let i_ratio = discounted_integral(&traj, r, ratio_weight, k_star / (k_star + eps_eff));
    let spend_c1 = params.h * c1_sub * i_ratio;

    let tracking = cfg.mu * (k_star - cfg.k_bar) * (k_star - cfg.k_bar);
    Ok(AffineCost {
        c1_sub,
        cbar2_sub,
        k_star,
        spend_c2,
        spend_c1,
        spend: spend_c2 + spend_c1,
        tracking,
    })
}

/// Spend along the target-preserving line: for each `cbar2_sub` on a
/// descending grid from the all-constant subsidy down to zero, `c1_sub` is
/// chosen so the equilibrium stays at `k_bar`, and the discounted spend is
/// evaluated. Returns the evaluations in sweep order plus the cheapest.
pub fn optimize_affine_subsidy(
    params: &MarketParams,
    cfg: &PlannerConfig,
    y0: f64,
    line_points: usize,
) -> Result<(Vec<AffineCost>, AffineCost)> {
    cfg.validate()?;
    let cbar2_max = subsidy_for_target(params, cfg.k_bar, y0)?;
    if cbar2_max <= 0.0 {
        return Err(Error::TargetUnreachable(format!(
            "target {} already below the unsubsidized equilibrium",
            cfg.k_bar
        )));
    }
    let n = line_points.max(2);
    let mut rows = Vec::with_capacity(n);
    for i in 0..n {
        let cbar2 = cbar2_max * (1.0 - i as f64 / (n - 1) as f64);
        let c1 = crate::equilibrium::c1_subsidy_for_target(params, cfg.k_bar, y0, cbar2)?;
        rows.push(planner_cost_affine(params, c1.max(0.0), cbar2, cfg, y0)?);
    }
    let best = *rows
        .iter()
        .min_by(|a, b| a.spend.total_cmp(&b.spend))
        .unwrap();
    Ok((rows, best))
}

/// Effective per-MWh production subsidy `c1_sub / (K_t + eps_eff)` sampled
/// on a trajectory.
pub fn time_varying_subsidy_report(
    traj: &Trajectory,
    c1_sub: f64,
    eps_eff: f64,
) -> Vec<(f64, f64)> {
    traj.times
        .iter()
        .zip(&traj.capacity)
        .map(|(&t, &k)| (t, c1_sub / (k + eps_eff)))
        .collect()
}
