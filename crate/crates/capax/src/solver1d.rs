//! Backward implicit solve of the stationary 1D master equation.
//!
//! The equation for the shifted value `ubar = U - alpha_net` on `[0, k*]` is
//!
//! ```text
//! -(r+d) ubar + (lambda ubar - delta k) ubar' + s(k) = 0,
//! s(k) = margin(k) - (r+d) alpha_net,
//! ```
//!
//! marched backward from the anchor `ubar(k*) = delta k* / lambda` with the
//! forward difference `(u_{i+1} - u_i)/dk` for `ubar'`. Each step is a
//! quadratic in `u_i`; the `+sqrt` root is the one compatible with positive
//! drift and a decreasing profile:
//!
//! ```text
//! u_i = [ beta + sqrt(beta^2 + 4 lambda (dk s_i - delta k_i u_{i+1})) ] / (2 lambda),
//! beta = lambda u_{i+1} + delta k_i - dk (r+d).
//! ```

use crate::equilibrium::{self, Equilibrium};
use crate::error::{Error, Result};
use crate::params::{MarketParams, SubsidyScheme};
use crate::sig12;
use std::io::Write;

/// Width of the smoothing band applied to positive parts in source terms,
/// relative to `h*c`. Inside the band the kink is quadratically smoothed;
/// solves assert the band is never active on admissible domains.
pub(crate) const POS_PART_BAND_REL: f64 = 1e-6;

/// Positive part with a quadratic patch of half-width `band` around zero.
pub(crate) fn smoothed_pos(x: f64, band: f64) -> f64 {
    if band <= 0.0 || x >= band {
        x.max(0.0)
    } else if x <= -band {
        0.0
    } else {
        (x + band) * (x + band) / (4.0 * band)
    }
}

/// Which master-equation source a margin represents.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MarginKind {
    /// `h (p_eff/(k + eps_eff) - c_net)^+`.
    CompetitiveConstant,
    /// `h (p/(k + eps_eff) - phi(k) + psi(k))^+`.
    CompetitiveGeneral,
    /// `h p_eff eps_eff / (k + eps_eff)^2 - h c_net` (no positive part).
    Monopoly,
}

/// Instantaneous net revenue rate of one MW at aggregate capacity `k`,
/// in euro/(MW year). This is the source term of the master equation in
/// `U`-space.
pub struct MarginFunction {
    pub kind: MarginKind,
    /// Fixed reserve folded into the price floor.
    pub y0: f64,
    func: Box<dyn Fn(f64) -> f64 + Send + Sync>,
    /// Raw argument of the positive part (euro/MWh scale) for band asserts;
    /// `None` when the source carries no positive part.
    raw_arg: Option<Box<dyn Fn(f64) -> f64 + Send + Sync>>,
    band: f64,
}

impl MarginFunction {
    /// Competitive margin with constant costs.
    pub fn competitive(params: &MarketParams, scheme: &SubsidyScheme, y0: f64) -> Self {
        let eps_eff = params.eps + y0;
        let p_eff = params.p_eff(scheme);
        let c_net = params.c_net(scheme);
        let h = params.h;
        let band = POS_PART_BAND_REL * (h * params.c).abs();
        MarginFunction {
            kind: MarginKind::CompetitiveConstant,
            y0,
            func: Box::new(move |k| h * smoothed_pos(p_eff / (k + eps_eff) - c_net, band / h)),
            raw_arg: Some(Box::new(move |k| p_eff / (k + eps_eff) - c_net)),
            band: band / params.h,
        }
    }

    /// Monopoly (marginal-revenue) margin.
    pub fn monopoly(params: &MarketParams, scheme: &SubsidyScheme, y0: f64) -> Self {
        let eps_eff = params.eps + y0;
        let p_eff = params.p_eff(scheme);
        let c_net = params.c_net(scheme);
        let h = params.h;
        MarginFunction {
            kind: MarginKind::Monopoly,
            y0,
            func: Box::new(move |k| {
                let d = k + eps_eff;
                h * (p_eff * eps_eff / (d * d) - c_net)
            }),
            raw_arg: None,
            band: 0.0,
        }
    }

    /// Competitive margin with capacity-dependent cost `phi` and production
    /// subsidy `psi` (both euro/MWh).
    pub fn general(
        params: &MarketParams,
        y0: f64,
        phi: impl Fn(f64) -> f64 + Send + Sync + 'static,
        psi: impl Fn(f64) -> f64 + Send + Sync + 'static,
    ) -> Self {
        let eps_eff = params.eps + y0;
        let p = params.p;
        let h = params.h;
        let band = POS_PART_BAND_REL * (h * params.c).abs() / h;
        let raw = std::sync::Arc::new(move |k: f64| p / (k + eps_eff) - phi(k) + psi(k));
        let raw2 = std::sync::Arc::clone(&raw);
        MarginFunction {
            kind: MarginKind::CompetitiveGeneral,
            y0,
            func: Box::new(move |k| h * smoothed_pos(raw(k), band)),
            raw_arg: Some(Box::new(move |k| raw2(k))),
            band,
        }
    }

    /// Source value at `k` (euro/(MW year)).
    pub fn eval(&self, k: f64) -> f64 {
        (self.func)(k)
    }

    /// Errors if the positive-part argument enters the smoothing band
    /// anywhere on `[0, k_hi]` (sampled).
    fn assert_band_inactive(&self, k_hi: f64) -> Result<()> {
        if let Some(raw) = &self.raw_arg {
            for i in 0..=64 {
                let k = k_hi * i as f64 / 64.0;
                let v = raw(k);
                if v.abs() <= self.band {
                    return Err(Error::SchemeFailure(format!(
                        "positive-part argument {v:.3e} inside smoothing band at k = {k:.3}"
                    )));
                }
            }
        }
        Ok(())
    }

    /// Errors if the margin is not decreasing on `[0, k_hi]` (sampled).
    fn assert_decreasing(&self, k_hi: f64) -> Result<()> {
        let mut prev = self.eval(0.0);
        for i in 1..=128 {
            let k = k_hi * i as f64 / 128.0;
            let cur = self.eval(k);
            if cur > prev + 1e-12 * prev.abs().max(1.0) {
                return Err(Error::NotMonotone(format!("margin increases near k = {k:.3}")));
            }
            prev = cur;
        }
        Ok(())
    }
}

impl std::fmt::Debug for MarginFunction {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("MarginFunction")
            .field("kind", &self.kind)
            .field("y0", &self.y0)
            .finish()
    }
}

/// Gridded solution of the 1D master equation on `[0, k*]`.
pub struct ValueFunction1D {
    /// Strictly increasing capacities, `ks[n] = k*`.
    pub ks: Vec<f64>,
    /// Unit values in `U`-space (euro/MW), strictly decreasing.
    pub us: Vec<f64>,
    /// Margin samples at the grid nodes (euro/(MW year)).
    pub margins: Vec<f64>,
    pub alpha_net: f64,
    pub k_star: f64,
    pub u_star: f64,
    /// Effective spot numerator (includes `c1_sub` for affine schemes).
    pub p_eff: f64,
    pub params: MarketParams,
    pub margin: MarginFunction,
}

impl ValueFunction1D {
    pub fn n_cells(&self) -> usize {
        self.ks.len() - 1
    }

    /// Linear interpolation, clamped to `[u(k*), u(0)]` outside the grid.
    pub fn eval(&self, k: f64) -> f64 {
        let n = self.ks.len();
        if k <= self.ks[0] {
            return self.us[0];
        }
        if k >= self.ks[n - 1] {
            return self.us[n - 1];
        }
        let dk = self.ks[1] - self.ks[0];
        let i = (((k - self.ks[0]) / dk) as usize).min(n - 2);
        let t = (k - self.ks[i]) / dk;
        self.us[i] + t * (self.us[i + 1] - self.us[i])
    }

    /// Installation drift `lambda (U(k) - alpha_net) - delta k` (MW/year).
    pub fn drift(&self, k: f64) -> f64 {
        self.params.lambda * (self.eval(k) - self.alpha_net) - self.params.delta * k
    }

    /// Maximum cell slope `|du/dk|` (euro/MW per MW).
    pub fn lipschitz_estimate(&self) -> f64 {
        let dk = self.ks[1] - self.ks[0];
        self.us
            .windows(2)
            .map(|w| (w[1] - w[0]).abs() / dk)
            .fold(0.0, f64::max)
    }

    /// Writes `k_mw,u_eur_per_mw` rows.
    pub fn to_csv(&self, mut w: impl Write) -> std::io::Result<()> {
        writeln!(w, "k_mw,u_eur_per_mw")?;
        for (k, u) in self.ks.iter().zip(&self.us) {
            writeln!(w, "{},{}", sig12(*k), sig12(*u))?;
        }
        Ok(())
    }

    /// Relative gap between `U(k_start)` and the discounted margin integral
    /// along the induced capacity path (trapezoid rule plus analytic tail).
    ///
    /// The integral route is independent of the backward march: it combines
    /// direct margin evaluations with the simulated trajectory.
    pub fn consistency_check(&self, k_start: f64, horizon: f64, dt: f64) -> Result<f64> {
        if !(0.0..=self.k_star).contains(&k_start) {
            return Err(Error::StepOutOfDomain(format!(
                "k_start = {k_start} outside [0, {}]",
                self.k_star
            )));
        }
        let rd = self.params.r_plus_delta();
        let traj = crate::dynamics::simulate_capacity(self, k_start, horizon, dt)?;
        let mut integral = 0.0;
        let mut prev = self.margin.eval(traj.capacity[0]);
        for i in 1..traj.times.len() {
            let cur = (-rd * traj.times[i]).exp() * self.margin.eval(traj.capacity[i]);
            integral += 0.5 * (traj.times[i] - traj.times[i - 1]) * (prev + cur);
            prev = cur;
        }
        let t_end = *traj.times.last().unwrap();
        let k_end = *traj.capacity.last().unwrap();
        integral += self.margin.eval(k_end) * (-rd * t_end).exp() / rd;
        let u0 = self.eval(k_start);
        Ok((integral - u0).abs() / u0.abs().max(1e-30))
    }
}

impl std::fmt::Debug for ValueFunction1D {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ValueFunction1D")
            .field("n_cells", &self.n_cells())
            .field("k_star", &self.k_star)
            .field("u_star", &self.u_star)
            .finish()
    }
}

/// Equilibrium consistent with a margin: closed form for the constant
/// competitive margin, cubic root for the monopoly margin, bisection of the
/// stationarity relation for a general margin.
pub(crate) fn equilibrium_for_margin(
    params: &MarketParams,
    scheme: &SubsidyScheme,
    margin: &MarginFunction,
) -> Result<Equilibrium> {
    match margin.kind {
        MarginKind::CompetitiveConstant => {
            equilibrium::kstar_competitive(params, scheme, margin.y0)
        }
        MarginKind::Monopoly => equilibrium::kstar_monopoly(params, scheme, margin.y0),
        MarginKind::CompetitiveGeneral => {
            // Bisect (delta k/lambda + alpha_net)(r+d) = margin(k).
            let rd = params.r_plus_delta();
            let alpha_net = params.alpha_net(scheme);
            let lhs = |k: f64| (params.delta * k / params.lambda + alpha_net) * rd;
            let mut hi = (params.eps + margin.y0).max(1.0);
            let mut grow = 0;
            while margin.eval(hi) >= lhs(hi) {
                hi *= 2.0;
                grow += 1;
                if grow > 200 {
                    return Err(Error::NoBracket(
                        "general margin never falls below annualized cost".into(),
                    ));
                }
            }
            if margin.eval(0.0) <= lhs(0.0) {
                return Err(Error::NoBracket(
                    "general margin below annualized cost at k = 0".into(),
                ));
            }
            let mut lo = 0.0;
            let mut hi2 = hi;
            for _ in 0..200 {
                let mid = 0.5 * (lo + hi2);
                if (hi2 - lo) <= 1e-10 * mid.max(1e-300) {
                    break;
                }
                if lhs(mid) - margin.eval(mid) < 0.0 {
                    lo = mid;
                } else {
                    hi2 = mid;
                }
            }
            let k_star = 0.5 * (lo + hi2);
            Ok(Equilibrium {
                k_star,
                y_star: None,
                u_star: alpha_net + params.delta * k_star / params.lambda,
                regime: equilibrium::Regime::CompetitiveFixed,
            })
        }
    }
}

/// Solves the stationary master equation for `U` on a uniform grid over
/// `[0, k*]` with `n_grid` cells.
///
/// The returned profile is validated: strictly decreasing, positive drift
/// `lambda (u_i - alpha_net) > delta k_i` for `i < n`, positive-part band
/// never active.
pub fn solve_master_1d(
    params: &MarketParams,
    scheme: &SubsidyScheme,
    margin: MarginFunction,
    n_grid: usize,
) -> Result<ValueFunction1D> {
    params.validate()?;
    scheme.validate(params)?;
    if n_grid < 2 {
        return Err(Error::InvalidParameter(format!(
            "n_grid must be at least 2, got {n_grid}"
        )));
    }
    let eq = equilibrium_for_margin(params, scheme, &margin)?;
    let k_star = eq.k_star;
    if k_star <= 0.0 {
        return Err(Error::InadmissibleParams(
            "equilibrium capacity is zero; nothing to solve".into(),
        ));
    }
    margin.assert_decreasing(k_star)?;
    margin.assert_band_inactive(k_star)?;

    let rd = params.r_plus_delta();
    let alpha_net = params.alpha_net(scheme);
    let lam = params.lambda;
    let n = n_grid;
    let dk = k_star / n as f64;
    let ks: Vec<f64> = (0..=n).map(|i| i as f64 * dk).collect();
    let margins: Vec<f64> = ks.iter().map(|&k| margin.eval(k)).collect();

    // March ubar backward from the stationary anchor.
    let mut ubar = vec![0.0; n + 1];
    ubar[n] = params.delta * k_star / lam;
    for i in (0..n).rev() {
        let s_i = margins[i] - rd * alpha_net;
        let beta = lam * ubar[i + 1] + params.delta * ks[i] - dk * rd;
        let disc = beta * beta + 4.0 * lam * (dk * s_i - params.delta * ks[i] * ubar[i + 1]);
        if disc < 0.0 {
            return Err(Error::SchemeFailure(format!(
                "negative discriminant {disc:.3e} at k = {:.3}; margin inadmissible or grid too coarse",
                ks[i]
            )));
        }
        ubar[i] = (beta + disc.sqrt()) / (2.0 * lam);
        if ubar[i] <= ubar[i + 1] {
            return Err(Error::MonotonicityViolation(format!(
                "u({:.3}) = {:.6} <= u({:.3}) = {:.6}",
                ks[i],
                ubar[i] + alpha_net,
                ks[i + 1],
                ubar[i + 1] + alpha_net
            )));
        }
        if lam * ubar[i] - params.delta * ks[i] <= 0.0 {
            return Err(Error::SchemeFailure(format!(
                "installation drift nonpositive at k = {:.3}",
                ks[i]
            )));
        }
    }

    let us: Vec<f64> = ubar.iter().map(|&u| u + alpha_net).collect();
    Ok(ValueFunction1D {
        ks,
        us,
        margins,
        alpha_net,
        k_star,
        u_star: eq.u_star,
        p_eff: params.p_eff(scheme),
        params: *params,
        margin,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn base() -> MarketParams {
        MarketParams {
            r: 0.1,
            delta: (2.0f64).ln() / 10.0,
            lambda: 5.0,
            eps: 0.1,
            h: 3000.0,
            p: 6.5e6,
            alpha: 1.4e6,
            c: 15.0,
        }
    }

    fn reference_solve(n: usize) -> ValueFunction1D {
        let p = base();
        let scheme = SubsidyScheme::constant_production(&p, 133_400.0);
        let margin = MarginFunction::competitive(&p, &scheme, 70_000.0);
        solve_master_1d(&p, &scheme, margin, n).unwrap()
    }

    #[test]
    fn anchor_is_exact() {
        let u = reference_solve(500);
        let expected = u.alpha_net + u.params.delta * u.k_star / u.params.lambda;
        assert_eq!(*u.us.last().unwrap(), expected);
    }

    #[test]
    fn profile_strictly_decreasing_with_positive_drift() {
        let u = reference_solve(4000);
        for w in u.us.windows(2) {
            assert!(w[0] > w[1]);
        }
        for (i, (&k, &uv)) in u.ks.iter().zip(&u.us).enumerate() {
            if i + 1 < u.ks.len() {
                assert!(u.params.lambda * (uv - u.alpha_net) - u.params.delta * k > 0.0);
            }
        }
    }

    #[test]
    fn u0_at_least_alpha_when_admissible() {
        // h p_eff / eps_eff >= cbar_net guarantees U(0) >= alpha_net.
        let u = reference_solve(1000);
        assert!(u.us[0] >= u.alpha_net);
    }

    #[test]
    fn constant_margin_with_consistent_anchor_is_exact() {
        // If the source is a constant m and the anchor satisfies
        // (r+d) ubar* = m - (r+d) alpha_net, the exact solution is constant
        // and the march must reproduce it to rounding.
        let mut p = base();
        p.alpha = 0.0;
        let scheme = SubsidyScheme::none();
        let rd = p.r_plus_delta();
        let m = 50_000.0;
        // Choose k* so that delta k*/lambda = m/(r+d).
        let k_star_exact = p.lambda * m / (rd * p.delta);
        let margin = MarginFunction {
            kind: MarginKind::CompetitiveGeneral,
            y0: 0.0,
            func: Box::new(move |_| m),
            raw_arg: None,
            band: 0.0,
        };
        let u = solve_master_1d(&p, &scheme, margin, 3).unwrap();
        assert!((u.k_star - k_star_exact).abs() / k_star_exact < 1e-9);
        let expected = m / rd;
        for &uv in &u.us {
            assert!(
                (uv - expected).abs() < 1e-9 * expected,
                "{uv} vs {expected}"
            );
        }
    }

    #[test]
    fn march_root_matches_bisection_of_implicit_step() {
        // Independent algebraic route: solve each implicit step for u_i by
        // bisection instead of the closed-form root.
        let u = reference_solve(40);
        let p = u.params;
        let rd = p.r_plus_delta();
        let dk = u.ks[1] - u.ks[0];
        let lam = p.lambda;
        for i in (0..40).rev() {
            let s_i = u.margins[i] - rd * u.alpha_net;
            let next = u.us[i + 1] - u.alpha_net;
            let step = |ui: f64| {
                -rd * ui + (lam * ui - p.delta * u.ks[i]) * (next - ui) / dk + s_i
            };
            // Root lies between `next` and a generous upper bound.
            let mut lo = next;
            let mut hi = next + 2.0 * (u.us[0] - u.alpha_net);
            assert!(step(lo) > 0.0 && step(hi) < 0.0);
            for _ in 0..200 {
                let mid = 0.5 * (lo + hi);
                if step(mid) > 0.0 {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
            let oracle = 0.5 * (lo + hi) + u.alpha_net;
            assert!(
                (oracle - u.us[i]).abs() < 1e-7 * u.us[i].abs(),
                "i = {i}: {oracle} vs {}",
                u.us[i]
            );
        }
    }

    #[test]
    fn monopoly_profile_decreasing_and_anchored() {
        let p = base();
        let scheme = SubsidyScheme::constant_production(&p, 133_400.0);
        let margin = MarginFunction::monopoly(&p, &scheme, 70_000.0);
        let u = solve_master_1d(&p, &scheme, margin, 2000).unwrap();
        for w in u.us.windows(2) {
            assert!(w[0] > w[1]);
        }
        let expected = u.alpha_net + p.delta * u.k_star / p.lambda;
        assert_eq!(*u.us.last().unwrap(), expected);
    }

    #[test]
    fn lipschitz_of_linear_profile() {
        let p = base();
        let u = ValueFunction1D {
            ks: vec![0.0, 1.0, 2.0],
            us: vec![10.0, 7.0, 4.0],
            margins: vec![0.0; 3],
            alpha_net: 0.0,
            k_star: 2.0,
            u_star: 4.0,
            p_eff: p.p,
            params: p,
            margin: MarginFunction::competitive(&p, &SubsidyScheme::none(), 0.0),
        };
        assert_eq!(u.lipschitz_estimate(), 3.0);
        let flat = ValueFunction1D { us: vec![5.0, 5.0, 5.0], ..u };
        assert_eq!(flat.lipschitz_estimate(), 0.0);
    }

    #[test]
    fn residual_of_continuous_equation_shrinks_first_order() {
        // Central-difference residual of the U-space equation at interior
        // nodes must shrink roughly linearly with the cell size.
        let residual_norm = |u: &ValueFunction1D| {
            let p = u.params;
            let rd = p.r_plus_delta();
            let dk = u.ks[1] - u.ks[0];
            let mut worst: f64 = 0.0;
            for i in 1..u.ks.len() - 1 {
                let du = (u.us[i + 1] - u.us[i - 1]) / (2.0 * dk);
                let drift = p.lambda * (u.us[i] - u.alpha_net) - p.delta * u.ks[i];
                let res = -rd * u.us[i] + drift * du + u.margins[i];
                worst = worst.max(res.abs());
            }
            worst
        };
        let coarse = residual_norm(&reference_solve(500));
        let fine = residual_norm(&reference_solve(1000));
        let order = (coarse / fine).log2();
        assert!(
            (0.7..1.5).contains(&order),
            "observed order {order} (coarse {coarse}, fine {fine})"
        );
    }

    #[test]
    fn csv_shape() {
        let u = reference_solve(4);
        let mut buf = Vec::new();
        u.to_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "k_mw,u_eur_per_mw");
        assert_eq!(lines.len(), 6);
    }
}
