//! Stationary equilibria for the four regimes and subsidy inversions.
//!
//! All stationary states satisfy the installation balance
//! `lambda (u* - alpha_net) = delta k*` together with a regime-specific
//! pricing relation. Writing `ubar = u - alpha_net`, the competitive
//! fixed-reserve case reduces to a quadratic in `k*` with the unique positive
//! root
//!
//! ```text
//! k* = [ -delta*eps_eff - cbar_net*lambda/(r+delta)
//!        + sqrt( (delta*eps_eff - cbar_net*lambda/(r+delta))^2
//!                + 4 delta lambda h p_eff / (r+delta) ) ] / (2 delta)
//! ```
//!
//! while the monopoly case yields a cubic with one sign change in its
//! coefficients, solved by bracketed bisection. With a linear reserve the
//! null line `y = (gamma - a k)/b` eliminates `y*` and the same algebra goes
//! through with `k + y + eps = theta k + E`, `theta = 1 - a/b`,
//! `E = gamma/b + eps`.

use crate::error::{Error, Result};
use crate::params::{LinearReserve, MarketParams, SubsidyScheme};

/// Which market structure and reserve model produced an equilibrium.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Regime {
    CompetitiveFixed,
    MonopolyFixed,
    CompetitiveLinear,
    MonopolyLinear,
}

impl std::fmt::Display for Regime {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            Regime::CompetitiveFixed => "competitive/fixed",
            Regime::MonopolyFixed => "monopoly/fixed",
            Regime::CompetitiveLinear => "competitive/linear",
            Regime::MonopolyLinear => "monopoly/linear",
        };
        f.write_str(s)
    }
}

/// A stationary state `(k*, y*, u*)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Equilibrium {
    /// Equilibrium renewable capacity (MW).
    pub k_star: f64,
    /// Equilibrium reserve (MW); `None` under a fixed reserve.
    pub y_star: Option<f64>,
    /// Equilibrium unit value (euro/MW), `alpha_net + delta k* / lambda`.
    pub u_star: f64,
    pub regime: Regime,
}

/// Relative width target for all bracketed bisections.
const BISECT_REL_TOL: f64 = 1e-10;
const BISECT_MAX_ITER: usize = 200;

/// Bisection on `[lo, hi]` assuming `f(lo) <= 0 <= f(hi)` or the reverse.
fn bisect(f: impl Fn(f64) -> f64, mut lo: f64, mut hi: f64) -> Result<f64> {
    let flo = f(lo);
    let fhi = f(hi);
    if flo == 0.0 {
        return Ok(lo);
    }
    if fhi == 0.0 {
        return Ok(hi);
    }
    if flo * fhi > 0.0 {
        return Err(Error::NoBracket(format!(
            "f({lo}) = {flo:.6e} and f({hi}) = {fhi:.6e} have the same sign"
        )));
    }
    let increasing = flo < 0.0;
    for _ in 0..BISECT_MAX_ITER {
        let mid = 0.5 * (lo + hi);
        if (hi - lo).abs() <= BISECT_REL_TOL * mid.abs().max(1e-300) {
            return Ok(mid);
        }
        let fm = f(mid);
        if fm == 0.0 {
            return Ok(mid);
        }
        if (fm < 0.0) == increasing {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

fn equilibrium_from_k(params: &MarketParams, scheme: &SubsidyScheme, k_star: f64, y_star: Option<f64>, regime: Regime) -> Equilibrium {
    Equilibrium {
        k_star,
        y_star,
        u_star: params.alpha_net(scheme) + params.delta * k_star / params.lambda,
        regime,
    }
}

/// Competitive equilibrium with a fixed reserve `y0`, by closed form.
///
/// Requires `cbar_net * (eps + y0) <= h * p_eff`; at exact equality the
/// quadratic's constant term vanishes and `k* = 0`.
pub fn kstar_competitive(
    params: &MarketParams,
    scheme: &SubsidyScheme,
    y0: f64,
) -> Result<Equilibrium> {
    let eps_eff = params.eps + y0;
    let p_eff = params.p_eff(scheme);
    let cbar_net = params.cbar_net(scheme);
    let hp = params.h * p_eff;
    if cbar_net * eps_eff > hp {
        return Err(Error::InadmissibleParams(format!(
            "cbar_net * eps_eff = {:.6e} > h p_eff = {:.6e}: no positive equilibrium",
            cbar_net * eps_eff,
            hp
        )));
    }
    let rd = params.r_plus_delta();
    let b = cbar_net * params.lambda / rd;
    let de = params.delta * eps_eff;
    let disc = (de - b) * (de - b) + 4.0 * params.delta * params.lambda * hp / rd;
    let k_star = ((-de - b + disc.sqrt()) / (2.0 * params.delta)).max(0.0);
    Ok(equilibrium_from_k(params, scheme, k_star, None, Regime::CompetitiveFixed))
}

/// Coefficients of the monopoly cubic (ascending powers of `k`):
/// `delta k^3 + (2 eps delta + lam cbar/(r+d)) k^2
///  + (delta eps^2 + 2 eps lam cbar/(r+d)) k + eps lam (cbar eps - h p)/(r+d)`.
fn monopoly_cubic(params: &MarketParams, cbar_net: f64, eps_eff: f64, hp: f64) -> [f64; 4] {
    let rd = params.r_plus_delta();
    let lc = params.lambda * cbar_net / rd;
    [
        eps_eff * params.lambda / rd * (cbar_net * eps_eff - hp),
        params.delta * eps_eff * eps_eff + 2.0 * eps_eff * lc,
        2.0 * eps_eff * params.delta + lc,
        params.delta,
    ]
}

fn eval_poly(coeffs: &[f64], x: f64) -> f64 {
    coeffs.iter().rev().fold(0.0, |acc, &c| acc * x + c)
}

/// Monopoly equilibrium with a fixed reserve, by bracketed bisection of the
/// cubic. Descartes' rule gives a unique positive root when
/// `cbar_net * eps_eff < h * p_eff`.
pub fn kstar_monopoly(
    params: &MarketParams,
    scheme: &SubsidyScheme,
    y0: f64,
) -> Result<Equilibrium> {
    let eps_eff = params.eps + y0;
    let p_eff = params.p_eff(scheme);
    let cbar_net = params.cbar_net(scheme);
    let hp = params.h * p_eff;
    if cbar_net * eps_eff > hp {
        return Err(Error::InadmissibleParams(format!(
            "cbar_net * eps_eff = {:.6e} > h p_eff = {:.6e}: no positive equilibrium",
            cbar_net * eps_eff,
            hp
        )));
    }
    if cbar_net * eps_eff == hp {
        return Ok(equilibrium_from_k(params, scheme, 0.0, None, Regime::MonopolyFixed));
    }
    let poly = monopoly_cubic(params, cbar_net, eps_eff, hp);
    // A-priori bound when cbar_net > 0; otherwise expand until positive.
    let mut hi = if cbar_net > 0.0 {
        hp / cbar_net - eps_eff
    } else {
        eps_eff.max(1.0)
    };
    let mut grow = 0;
    while eval_poly(&poly, hi) <= 0.0 {
        hi *= 2.0;
        grow += 1;
        if grow > 200 {
            return Err(Error::NoBracket("monopoly cubic has no positive root".into()));
        }
    }
    let k_star = bisect(|k| eval_poly(&poly, k), 0.0, hi)?;
    Ok(equilibrium_from_k(params, scheme, k_star, None, Regime::MonopolyFixed))
}

/// Equilibrium for a general capacity-dependent cost `phi(k)` (euro/MWh) and
/// production subsidy `psi(k)` (euro/MWh), fixed reserve `y0`.
///
/// Solves `(delta k / lambda + alpha_net)(r + delta)
///          = h (p/(k + eps_eff) - phi(k) + psi(k))^+`
/// by bisection. The margin `k -> p/(k+eps_eff) - phi(k) + psi(k)` must be
/// decreasing (verified by sampling).
pub fn kstar_general(
    params: &MarketParams,
    scheme: &SubsidyScheme,
    y0: f64,
    phi: impl Fn(f64) -> f64,
    psi: impl Fn(f64) -> f64,
) -> Result<Equilibrium> {
    let eps_eff = params.eps + y0;
    let alpha_net = params.alpha_net(scheme);
    let rd = params.r_plus_delta();
    let margin = |k: f64| (params.p / (k + eps_eff) - phi(k) + psi(k)).max(0.0) * params.h;
    let lhs = |k: f64| (params.delta * k / params.lambda + alpha_net) * rd;

    // Expand the bracket until the decreasing right side falls below the
    // increasing left side.
    let mut hi = eps_eff.max(1.0);
    let mut grow = 0;
    while margin(hi) >= lhs(hi) {
        hi *= 2.0;
        grow += 1;
        if grow > 200 {
            return Err(Error::NoBracket(
                "margin never falls below annualized cost".into(),
            ));
        }
    }
    // Sampled monotonicity check of the raw (unclipped) margin.
    let raw = |k: f64| params.p / (k + eps_eff) - phi(k) + psi(k);
    let n_samples = 256;
    let mut prev = raw(0.0);
    for i in 1..=n_samples {
        let k = hi * i as f64 / n_samples as f64;
        let cur = raw(k);
        if cur > prev + 1e-12 * prev.abs().max(1.0) {
            return Err(Error::NotMonotone(format!(
                "margin increases near k = {k:.6e}"
            )));
        }
        prev = cur;
    }
    if margin(0.0) <= lhs(0.0) {
        // Even an empty market cannot cover the annualized cost.
        return Err(Error::NoBracket(format!(
            "margin at k = 0 ({:.6e}) does not exceed annualized cost ({:.6e})",
            margin(0.0),
            lhs(0.0)
        )));
    }
    let k_star = bisect(|k| lhs(k) - margin(k), 0.0, hi)?;
    Ok(equilibrium_from_k(params, scheme, k_star, None, Regime::CompetitiveFixed))
}

/// Shared pieces for the linear-reserve algebra.
struct ReserveAlgebra {
    /// `1 - a/b`.
    theta: f64,
    /// `gamma/b + eps`.
    e: f64,
}

fn reserve_algebra(params: &MarketParams, reserve: &LinearReserve) -> ReserveAlgebra {
    ReserveAlgebra {
        theta: 1.0 - reserve.a / reserve.b,
        e: reserve.gamma / reserve.b + params.eps,
    }
}

/// Competitive equilibrium with a linear reserve.
///
/// Eliminating `y* = (gamma - a k*)/b` gives the quadratic
/// `A2 k^2 + A1 k + A0 = 0` with `A2 = theta (r+d) delta / lambda`,
/// `A1 = (r+d) delta E / lambda + cbar_net theta`, `A0 = cbar_net E - h p`.
/// The root is computed as `2 A0 / (-A1 - sqrt(A1^2 - 4 A2 A0))`, which is
/// continuous through `a = b` (where it reduces to
/// `k* = lambda (h p / E - cbar_net) / (delta (r+d))`) and selects the
/// economically relevant branch for `a > b`.
pub fn kstar_reserve_competitive(
    params: &MarketParams,
    scheme: &SubsidyScheme,
    reserve: &LinearReserve,
) -> Result<Equilibrium> {
    reserve.validate()?;
    let alg = reserve_algebra(params, reserve);
    let rd = params.r_plus_delta();
    let cbar_net = params.cbar_net(scheme);
    let hp = params.h * params.p_eff(scheme);

    let a2 = alg.theta * rd * params.delta / params.lambda;
    let a1 = rd * params.delta / params.lambda * alg.e + cbar_net * alg.theta;
    let a0 = cbar_net * alg.e - hp;

    if a0 > 0.0 {
        return Err(Error::InadmissibleParams(format!(
            "cbar_net * (gamma/b + eps) = {:.6e} > h p_eff = {:.6e}: no positive equilibrium",
            cbar_net * alg.e,
            hp
        )));
    }
    let k_star = if a0 == 0.0 {
        0.0
    } else {
        let disc = a1 * a1 - 4.0 * a2 * a0;
        if disc < 0.0 {
            return Err(Error::InadmissibleParams(
                "reserve quadratic has no real root".into(),
            ));
        }
        let denom = -a1 - disc.sqrt();
        if denom >= 0.0 {
            return Err(Error::InadmissibleParams(
                "reserve quadratic has no positive root".into(),
            ));
        }
        2.0 * a0 / denom
    };
    if k_star < 0.0 {
        return Err(Error::InadmissibleParams(format!(
            "equilibrium capacity is negative ({k_star:.6e})"
        )));
    }
    let y_star = reserve.y_null(k_star);
    if y_star < 0.0 {
        return Err(Error::InadmissibleParams(format!(
            "equilibrium reserve is negative ({y_star:.6e})"
        )));
    }
    Ok(equilibrium_from_k(params, scheme, k_star, Some(y_star), Regime::CompetitiveLinear))
}

/// Monopoly equilibrium with a linear reserve.
///
/// Root of `g(k) = (r+d)(alpha_net + delta k/lambda) + h c_net
///                 - h p_eff (E - (a/b) k) / (theta k + E)^2`
/// on `[0, k_competitive]`; the competitive equilibrium is a guaranteed
/// upper bracket because the monopoly margin is strictly smaller.
pub fn kstar_reserve_monopoly(
    params: &MarketParams,
    scheme: &SubsidyScheme,
    reserve: &LinearReserve,
) -> Result<Equilibrium> {
    let competitive = kstar_reserve_competitive(params, scheme, reserve)?;
    let alg = reserve_algebra(params, reserve);
    let rd = params.r_plus_delta();
    let cbar_net = params.cbar_net(scheme);
    let hp = params.h * params.p_eff(scheme);
    let ab = reserve.a / reserve.b;

    if cbar_net * alg.e == hp {
        // Constant term of the cubic vanishes.
        return Ok(equilibrium_from_k(params, scheme, 0.0, Some(reserve.y_null(0.0)), Regime::MonopolyLinear));
    }
    let g = |k: f64| {
        let denom = alg.theta * k + alg.e;
        rd * params.delta * k / params.lambda + cbar_net - hp * (alg.e - ab * k) / (denom * denom)
    };
    let k_star = bisect(g, 0.0, competitive.k_star)?;
    let y_star = reserve.y_null(k_star);
    if y_star < 0.0 {
        return Err(Error::InadmissibleParams(format!(
            "equilibrium reserve is negative ({y_star:.6e})"
        )));
    }
    Ok(equilibrium_from_k(params, scheme, k_star, Some(y_star), Regime::MonopolyLinear))
}

/// Annualized lump subsidy `cbar_sub` for which the competitive fixed-reserve
/// equilibrium equals `k_bar` (exact inversion of the stationary system):
/// `cbar_sub = cbar - h p / (k_bar + eps + y0) + delta (r+d) k_bar / lambda`.
pub fn subsidy_for_target(params: &MarketParams, k_bar: f64, y0: f64) -> Result<f64> {
    if !(k_bar > 0.0) {
        return Err(Error::TargetUnreachable(format!(
            "target capacity must be positive, got {k_bar}"
        )));
    }
    let eps_eff = params.eps + y0;
    Ok(params.cbar() - params.h * params.p / (k_bar + eps_eff)
        + params.delta * params.r_plus_delta() * k_bar / params.lambda)
}

/// Lump subsidy putting the *monopoly* fixed-reserve equilibrium at `k_bar`.
pub fn subsidy_for_target_monopoly(params: &MarketParams, k_bar: f64, y0: f64) -> Result<f64> {
    if !(k_bar > 0.0) {
        return Err(Error::TargetUnreachable(format!(
            "target capacity must be positive, got {k_bar}"
        )));
    }
    let eps_eff = params.eps + y0;
    let denom = k_bar + eps_eff;
    Ok(params.cbar() - params.h * params.p * eps_eff / (denom * denom)
        + params.delta * params.r_plus_delta() * k_bar / params.lambda)
}

/// Lump subsidy putting the competitive linear-reserve equilibrium at
/// `k_bar`, with `y*` eliminated through the reserve null line.
pub fn subsidy_for_target_linear(
    params: &MarketParams,
    k_bar: f64,
    reserve: &LinearReserve,
) -> Result<f64> {
    if !(k_bar > 0.0) {
        return Err(Error::TargetUnreachable(format!(
            "target capacity must be positive, got {k_bar}"
        )));
    }
    reserve.validate()?;
    let alg = reserve_algebra(params, reserve);
    let denom = alg.theta * k_bar + alg.e;
    if denom <= 0.0 {
        return Err(Error::TargetUnreachable(format!(
            "total capacity k + y + eps = {denom:.6e} at the target is nonpositive"
        )));
    }
    Ok(params.cbar() - params.h * params.p / denom
        + params.delta * params.r_plus_delta() * k_bar / params.lambda)
}

/// Lump subsidy putting the monopoly linear-reserve equilibrium at `k_bar`.
pub fn subsidy_for_target_linear_monopoly(
    params: &MarketParams,
    k_bar: f64,
    reserve: &LinearReserve,
) -> Result<f64> {
    if !(k_bar > 0.0) {
        return Err(Error::TargetUnreachable(format!(
            "target capacity must be positive, got {k_bar}"
        )));
    }
    reserve.validate()?;
    let alg = reserve_algebra(params, reserve);
    let denom = alg.theta * k_bar + alg.e;
    if denom <= 0.0 {
        return Err(Error::TargetUnreachable(format!(
            "total capacity k + y + eps = {denom:.6e} at the target is nonpositive"
        )));
    }
    let ab = reserve.a / reserve.b;
    Ok(params.cbar() - params.h * params.p * (alg.e - ab * k_bar) / (denom * denom)
        + params.delta * params.r_plus_delta() * k_bar / params.lambda)
}

/// Price-indexed subsidy `c1_sub` (euro/hour) reaching `k_bar` for a given
/// constant part `cbar2_sub`, under a fixed reserve `y0`:
/// `c1 = (k_bar + eps_eff)(cbar - cbar2 + delta (r+d) k_bar/lambda)/h - p`.
pub fn c1_subsidy_for_target(
    params: &MarketParams,
    k_bar: f64,
    y0: f64,
    cbar2_sub: f64,
) -> Result<f64> {
    if !(k_bar > 0.0) {
        return Err(Error::TargetUnreachable(format!(
            "target capacity must be positive, got {k_bar}"
        )));
    }
    let eps_eff = params.eps + y0;
    let annualized = params.cbar() - cbar2_sub
        + params.delta * params.r_plus_delta() * k_bar / params.lambda;
    Ok((k_bar + eps_eff) * annualized / params.h - params.p)
}

/// Maximum relative residual of the stationary system at an equilibrium.
///
/// Checks the installation balance, the regime's pricing relation and (for a
/// linear reserve) the reserve drift; useful as a cheap self-test after any
/// equilibrium computation.
pub fn stationarity_residual(
    params: &MarketParams,
    scheme: &SubsidyScheme,
    eq: &Equilibrium,
    reserve: &crate::params::ReserveModel,
) -> f64 {
    use crate::params::ReserveModel;

    let rd = params.r_plus_delta();
    let alpha_net = params.alpha_net(scheme);
    let ubar = eq.u_star - alpha_net;
    let flow = params.lambda * ubar - params.delta * eq.k_star;
    let flow_rel = flow.abs() / (params.delta * eq.k_star.abs()).max(1e-30);

    let y = match reserve {
        ReserveModel::Fixed { y0 } => *y0,
        ReserveModel::Linear(_) => eq.y_star.unwrap_or(0.0),
    };
    let total = eq.k_star + y + params.eps;
    let p_eff = params.p_eff(scheme);
    let hc_net = params.h * params.c_net(scheme);
    let margin = match eq.regime {
        Regime::CompetitiveFixed | Regime::CompetitiveLinear => {
            (params.h * p_eff / total - hc_net).max(0.0)
        }
        Regime::MonopolyFixed | Regime::MonopolyLinear => {
            params.h * p_eff * (y + params.eps) / (total * total) - hc_net
        }
    };
    let pricing = rd * eq.u_star - margin;
    let pricing_rel = pricing.abs() / (rd * eq.u_star.abs()).max(1e-30);

    let reserve_rel = match (reserve, eq.y_star) {
        (ReserveModel::Linear(lin), Some(ys)) => {
            lin.drift(eq.k_star, ys).abs() / lin.gamma.abs().max(1e-30)
        }
        _ => 0.0,
    };

    flow_rel.max(pricing_rel).max(reserve_rel)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::params::ReserveModel;

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

    #[test]
    fn competitive_reference_case() {
        let p = base();
        let scheme = SubsidyScheme::constant_production(&p, 133_400.0);
        let eq = kstar_competitive(&p, &scheme, 70_000.0).unwrap();
        // Within 2% of the 60 GW the calibration was built around.
        assert!((eq.k_star - 60_000.0).abs() / 60_000.0 < 0.02, "k* = {}", eq.k_star);
        // Exact stationarity of the returned triple.
        let res =
            stationarity_residual(&p, &scheme, &eq, &ReserveModel::Fixed { y0: 70_000.0 });
        assert!(res < 1e-9, "residual {res}");
    }

    #[test]
    fn competitive_boundary_constant_term_zero() {
        let mut p = base();
        p.alpha = 0.0;
        let y0 = p.h * p.p / p.cbar() - p.eps;
        let eq = kstar_competitive(&p, &SubsidyScheme::none(), y0).unwrap();
        assert!(eq.k_star.abs() < 1e-6 * 70_000.0, "k* = {}", eq.k_star);
    }

    #[test]
    fn competitive_rejects_inadmissible() {
        let p = base();
        // 70 GW of fixed reserve with no subsidy: cbar * eps_eff > h p.
        assert!(matches!(
            kstar_competitive(&p, &SubsidyScheme::none(), 70_000.0),
            Err(Error::InadmissibleParams(_))
        ));
    }

    #[test]
    fn competitive_matches_bisection_oracle() {
        // Independent route: bisect the stationarity equation directly.
        let p = base();
        let scheme = SubsidyScheme::none();
        let y0 = 0.0;
        let eq = kstar_competitive(&p, &scheme, y0).unwrap();
        let eps_eff = p.eps + y0;
        let rd = p.r_plus_delta();
        let g = |k: f64| {
            (p.delta * k / p.lambda + p.alpha) * rd - p.h * (p.p / (k + eps_eff) - p.c)
        };
        let hi = p.h * p.p / p.cbar() - eps_eff;
        let oracle = bisect(g, 0.0, hi).unwrap();
        assert!(
            (eq.k_star - oracle).abs() / oracle < 1e-8,
            "closed form {} vs oracle {}",
            eq.k_star,
            oracle
        );
    }

    #[test]
    fn monopoly_matches_dense_sign_scan() {
        let p = base();
        let scheme = SubsidyScheme::none();
        let eq = kstar_monopoly(&p, &scheme, 0.0).unwrap();
        // Brute-force sign scan of the cubic with 1 MW steps.
        let eps_eff = p.eps;
        let poly = monopoly_cubic(&p, p.cbar(), eps_eff, p.h * p.p);
        let mut crossing = None;
        let mut prev = eval_poly(&poly, 0.0);
        let mut k = 0.0;
        while k < 80_000.0 {
            let next = eval_poly(&poly, k + 1.0);
            if prev < 0.0 && next >= 0.0 {
                crossing = Some(k);
                break;
            }
            prev = next;
            k += 1.0;
        }
        let lo = crossing.expect("sign change");
        assert!(
            eq.k_star >= lo && eq.k_star <= lo + 1.0,
            "k* = {} not in [{lo}, {}]",
            eq.k_star,
            lo + 1.0
        );
        let res = stationarity_residual(&p, &scheme, &eq, &ReserveModel::Fixed { y0: 0.0 });
        assert!(res < 1e-9, "residual {res}");
    }

    #[test]
    fn monopoly_boundary_constant_term_zero() {
        let mut p = base();
        p.alpha = 0.0;
        let y0 = p.h * p.p / p.cbar() - p.eps;
        let eq = kstar_monopoly(&p, &SubsidyScheme::none(), y0).unwrap();
        assert_eq!(eq.k_star, 0.0);
    }

    #[test]
    fn monopoly_below_competitive() {
        let p = base();
        let scheme = SubsidyScheme::constant_production(&p, 100_000.0);
        for y0 in [0.0, 10_000.0, 70_000.0] {
            let mono = kstar_monopoly(&p, &scheme, y0).unwrap();
            let comp = kstar_competitive(&p, &scheme, y0).unwrap();
            assert!(mono.k_star < comp.k_star, "y0 = {y0}");
        }
    }

    #[test]
    fn general_specializes_to_constant_costs() {
        let p = base();
        let scheme = SubsidyScheme::constant_production(&p, 133_400.0);
        let c_sub = 133_400.0 / p.h;
        let eq_closed = kstar_competitive(&p, &scheme, 70_000.0).unwrap();
        let eq_general =
            kstar_general(&p, &scheme, 70_000.0, |_| p.c, |_| c_sub).unwrap();
        assert!(
            (eq_closed.k_star - eq_general.k_star).abs() / eq_closed.k_star < 1e-8,
            "{} vs {}",
            eq_closed.k_star,
            eq_general.k_star
        );
    }

    #[test]
    fn general_matches_affine_closed_form() {
        let p = base();
        let y0 = 70_000.0;
        let scheme = SubsidyScheme::AffineInPrice {
            c1_sub: 3.0e6,
            c2_sub: 5.0,
            alpha_sub: 0.0,
        };
        let eps_eff = p.eps + y0;
        // psi(k) = c1/(k+eps_eff) + c2 against the closed form with
        // p -> p + c1 and c -> c - c2.
        let eq_closed = kstar_competitive(&p, &scheme, y0).unwrap();
        let eq_general = kstar_general(
            &p,
            &scheme,
            y0,
            |_| p.c,
            |k| 3.0e6 / (k + eps_eff) + 5.0,
        )
        .unwrap();
        assert!(
            (eq_closed.k_star - eq_general.k_star).abs() / eq_closed.k_star < 1e-8,
            "{} vs {}",
            eq_closed.k_star,
            eq_general.k_star
        );
    }

    #[test]
    fn general_growing_cost_lowers_equilibrium() {
        let p = base();
        let scheme = SubsidyScheme::constant_production(&p, 133_400.0);
        let c_sub = 133_400.0 / p.h;
        let constant = kstar_general(&p, &scheme, 70_000.0, |_| p.c, |_| c_sub).unwrap();
        let growing = kstar_general(
            &p,
            &scheme,
            70_000.0,
            |k| p.c * (1.0 + k / 50_000.0),
            |_| c_sub,
        )
        .unwrap();
        assert!(growing.k_star < constant.k_star);
    }

    #[test]
    fn general_rejects_increasing_margin() {
        let p = base();
        let err = kstar_general(&p, &SubsidyScheme::none(), 0.0, |_| p.c, |k| k * 1.0);
        assert!(matches!(err, Err(Error::NotMonotone(_))));
    }

    #[test]
    fn reserve_equal_slopes_reference_case() {
        let p = base();
        let reserve = LinearReserve { a: 1.0, b: 1.0, gamma: 130_000.0 };
        let cbar_sub = subsidy_for_target_linear(&p, 60_000.0, &reserve).unwrap();
        let net = p.cbar() - cbar_sub;
        // The calibration rounds to 150,000 euro/(MW yr).
        assert!((net - 149_859.05).abs() < 0.5, "net = {net}");
        let scheme = SubsidyScheme::constant_production(&p, cbar_sub);
        let eq = kstar_reserve_competitive(&p, &scheme, &reserve).unwrap();
        assert!((eq.k_star - 60_000.0).abs() < 1e-6, "k* = {}", eq.k_star);
        assert!((eq.y_star.unwrap() - 70_000.0).abs() < 1e-6);
    }

    #[test]
    fn reserve_two_thirds_reference_case() {
        let p = base();
        let reserve = LinearReserve { a: 2.0 / 3.0, b: 1.0, gamma: 130_000.0 };
        let cbar_sub = subsidy_for_target_linear(&p, 60_000.0, &reserve).unwrap();
        let scheme = SubsidyScheme::constant_production(&p, cbar_sub);
        let eq = kstar_reserve_competitive(&p, &scheme, &reserve).unwrap();
        assert!((eq.k_star - 60_000.0).abs() < 1e-6);
        assert!((eq.y_star.unwrap() - 90_000.0).abs() < 1e-6, "y* = {:?}", eq.y_star);
    }

    #[test]
    fn reserve_limit_matches_equal_slope_formula() {
        let p = base();
        let gamma = 130_000.0;
        let scheme = SubsidyScheme::constant_production(&p, 132_000.0);
        let exact = {
            let reserve = LinearReserve { a: 1.0, b: 1.0, gamma };
            kstar_reserve_competitive(&p, &scheme, &reserve).unwrap().k_star
        };
        for da in [1e-6, -1e-6] {
            let reserve = LinearReserve { a: 1.0 + da, b: 1.0, gamma };
            let k = kstar_reserve_competitive(&p, &scheme, &reserve).unwrap().k_star;
            assert!(
                (k - exact).abs() / exact < 1e-4,
                "a = 1{da:+e}: {k} vs {exact}"
            );
        }
    }

    #[test]
    fn reserve_monopoly_below_competitive() {
        let p = base();
        let scheme = SubsidyScheme::constant_production(&p, 140_000.0);
        let reserve = LinearReserve { a: 0.8, b: 1.2, gamma: 150_000.0 };
        let mono = kstar_reserve_monopoly(&p, &scheme, &reserve).unwrap();
        let comp = kstar_reserve_competitive(&p, &scheme, &reserve).unwrap();
        assert!(mono.k_star < comp.k_star);
        let res = stationarity_residual(&p, &scheme, &mono, &ReserveModel::Linear(reserve));
        assert!(res < 1e-8, "residual {res}");
    }

    #[test]
    fn reserve_monopoly_degenerates_to_fixed() {
        // b -> infinity with gamma/b -> y0 freezes the reserve at y0.
        let p = base();
        let scheme = SubsidyScheme::constant_production(&p, 120_000.0);
        let y0 = 50_000.0;
        let fixed = kstar_monopoly(&p, &scheme, y0).unwrap();
        let b = 1e9;
        let reserve = LinearReserve { a: 1.0, b, gamma: y0 * b };
        let lin = kstar_reserve_monopoly(&p, &scheme, &reserve).unwrap();
        assert!(
            (lin.k_star - fixed.k_star).abs() / fixed.k_star < 1e-5,
            "{} vs {}",
            lin.k_star,
            fixed.k_star
        );
    }

    #[test]
    fn reserve_monopoly_constant_term_zero() {
        let mut p = base();
        p.alpha = 0.0;
        p.c = 10.0;
        let b = 1.0;
        let gamma = p.h * p.p / p.cbar() - p.eps; // cbar * (gamma/b + eps) == hp
        let reserve = LinearReserve { a: 0.5, b, gamma };
        let eq = kstar_reserve_monopoly(&p, &SubsidyScheme::none(), &reserve).unwrap();
        assert_eq!(eq.k_star, 0.0);
    }

    #[test]
    fn target_inversion_round_trip() {
        let p = base();
        let cbar_sub = subsidy_for_target(&p, 60_000.0, 70_000.0).unwrap();
        let scheme = SubsidyScheme::constant_production(&p, cbar_sub);
        let eq = kstar_competitive(&p, &scheme, 70_000.0).unwrap();
        assert!(
            (eq.k_star - 60_000.0).abs() / 60_000.0 < 1e-9,
            "k* = {}",
            eq.k_star
        );
    }

    #[test]
    fn target_inversion_fixed_point_at_zero_subsidy() {
        let p = base();
        let eq0 = kstar_competitive(&p, &SubsidyScheme::none(), 0.0).unwrap();
        let cbar_sub = subsidy_for_target(&p, eq0.k_star, 0.0).unwrap();
        assert!(cbar_sub.abs() < 1e-6 * p.cbar(), "cbar_sub = {cbar_sub}");
    }

    #[test]
    fn target_inversion_monopoly_needs_more_subsidy() {
        let p = base();
        let comp = subsidy_for_target(&p, 60_000.0, 70_000.0).unwrap();
        let mono = subsidy_for_target_monopoly(&p, 60_000.0, 70_000.0).unwrap();
        assert!(mono > comp, "monopoly {mono} vs competitive {comp}");
        let scheme = SubsidyScheme::constant_production(&p, mono);
        let eq = kstar_monopoly(&p, &scheme, 70_000.0).unwrap();
        assert!((eq.k_star - 60_000.0).abs() / 60_000.0 < 1e-9);
    }

    #[test]
    fn affine_target_reference_values() {
        let p = base();
        let c1 = c1_subsidy_for_target(&p, 60_000.0, 70_000.0, 0.0).unwrap();
        // Exact inversion: 5.7279e6 euro/h, a fraction 0.881 of the spot
        // numerator; the calibration quotes 5.78e6 and 0.89.
        assert!((c1 - 5.78e6).abs() / 5.78e6 < 0.01, "c1 = {c1}");
        assert!((c1 / p.p - 0.89).abs() <= 0.01, "ratio = {}", c1 / p.p);
        let scheme = SubsidyScheme::AffineInPrice { c1_sub: c1, c2_sub: 0.0, alpha_sub: 0.0 };
        let eq = kstar_competitive(&p, &scheme, 70_000.0).unwrap();
        assert!((eq.k_star - 60_000.0).abs() / 60_000.0 < 1e-9);
    }

    #[test]
    fn admissibility_reserve_domain_reference_cases() {
        let p = base();
        for (a, gamma) in [(1.0, 130_000.0), (2.0 / 3.0, 130_000.0)] {
            let reserve = LinearReserve { a, b: 1.0, gamma };
            let cbar_sub = subsidy_for_target_linear(&p, 60_000.0, &reserve).unwrap();
            let scheme = SubsidyScheme::constant_production(&p, cbar_sub);
            let report = crate::params::check_admissibility(
                &p,
                &scheme,
                &ReserveModel::Linear(reserve),
            );
            assert!(report.all_pass(), "a = {a}: {:?}", report.checks);
        }
    }
}
