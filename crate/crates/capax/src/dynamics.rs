//! Forward time integration of the capacity dynamics and discounted
//! quadrature.
//!
//! The vector fields interpolate solved value functions (linear in 1D,
//! bilinear in 2D), which keeps the right sides Lipschitz; integration uses
//! the classical 4-stage Runge-Kutta step.

use crate::error::{Error, Result};
use crate::sig12;
use crate::solver1d::ValueFunction1D;
use crate::solver2d::ValueFunction2D;
use std::io::Write;

/// Time series of capacity, reserve, spot price and installation flow.
#[derive(Debug, Clone)]
pub struct Trajectory {
    /// Sample times (years), uniform from 0 to the horizon.
    pub times: Vec<f64>,
    /// Renewable capacity K (MW).
    pub capacity: Vec<f64>,
    /// Reserve Y (MW); `None` under a fixed reserve.
    pub reserve: Vec<f64>,
    pub reserve_is_fixed: bool,
    /// Spot price `p_eff / (K + Y + eps)` (euro/MWh).
    pub price: Vec<f64>,
    /// Installation flow `lambda (U - alpha_net)` (MW/year).
    pub flow: Vec<f64>,
}

impl Trajectory {
    pub fn k_end(&self) -> f64 {
        *self.capacity.last().unwrap()
    }

    pub fn y_end(&self) -> f64 {
        *self.reserve.last().unwrap()
    }

    /// Capacity at time `t` by linear interpolation of the samples.
    pub fn capacity_at(&self, t: f64) -> f64 {
        let dt = self.times[1] - self.times[0];
        if t <= 0.0 {
            return self.capacity[0];
        }
        let i = ((t / dt) as usize).min(self.capacity.len() - 2);
        let s = (t - self.times[i]) / dt;
        self.capacity[i] + s * (self.capacity[i + 1] - self.capacity[i])
    }

    /// Writes `t_years,k_mw,y_mw,price_eur_per_mwh,flow_mw_per_year` rows;
    /// the `y_mw` field is blank under a fixed reserve.
    pub fn to_csv(&self, mut w: impl Write) -> std::io::Result<()> {
        writeln!(w, "t_years,k_mw,y_mw,price_eur_per_mwh,flow_mw_per_year")?;
        for i in 0..self.times.len() {
            let y = if self.reserve_is_fixed {
                String::new()
            } else {
                sig12(self.reserve[i])
            };
            writeln!(
                w,
                "{},{},{},{},{}",
                sig12(self.times[i]),
                sig12(self.capacity[i]),
                y,
                sig12(self.price[i]),
                sig12(self.flow[i])
            )?;
        }
        Ok(())
    }
}

fn rk4_scalar(g: impl Fn(f64) -> f64, x: f64, dt: f64) -> f64 {
    let k1 = g(x);
    let k2 = g(x + 0.5 * dt * k1);
    let k3 = g(x + 0.5 * dt * k2);
    let k4 = g(x + dt * k3);
    x + dt / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
}

fn rk4_pair(g: impl Fn(f64, f64) -> (f64, f64), x: (f64, f64), dt: f64) -> (f64, f64) {
    let k1 = g(x.0, x.1);
    let k2 = g(x.0 + 0.5 * dt * k1.0, x.1 + 0.5 * dt * k1.1);
    let k3 = g(x.0 + 0.5 * dt * k2.0, x.1 + 0.5 * dt * k2.1);
    let k4 = g(x.0 + dt * k3.0, x.1 + dt * k3.1);
    (
        x.0 + dt / 6.0 * (k1.0 + 2.0 * k2.0 + 2.0 * k3.0 + k4.0),
        x.1 + dt / 6.0 * (k1.1 + 2.0 * k2.1 + 2.0 * k3.1 + k4.1),
    )
}

/// Integrates `dK/dt = lambda (U(K) - alpha_net) - delta K` from `k0` over
/// `[0, t_end]` with step `dt`, under a fixed reserve.
///
/// Value queries clamp to the grid ends; the capacity itself may not leave
/// `[0, k*]` by more than one grid cell.
pub fn simulate_capacity(
    u: &ValueFunction1D,
    k0: f64,
    t_end: f64,
    dt: f64,
) -> Result<Trajectory> {
    if !(dt > 0.0) || !(t_end > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "need positive dt and t_end, got dt = {dt}, t_end = {t_end}"
        )));
    }
    if !(0.0..=u.k_star).contains(&k0) {
        return Err(Error::StepOutOfDomain(format!(
            "k0 = {k0} outside [0, {}]",
            u.k_star
        )));
    }
    let params = u.params;
    let cell = u.ks[1] - u.ks[0];
    let n_steps = (t_end / dt).round() as usize;
    let g = |k: f64| u.drift(k);

    let mut times = Vec::with_capacity(n_steps + 1);
    let mut capacity = Vec::with_capacity(n_steps + 1);
    let mut k = k0;
    for i in 0..=n_steps {
        times.push(i as f64 * dt);
        capacity.push(k);
        if i < n_steps {
            k = rk4_scalar(g, k, dt);
            if k < -cell || k > u.k_star + cell {
                return Err(Error::StepOutOfDomain(format!(
                    "capacity {k:.6} left [0, {}] by more than one cell at t = {:.3}",
                    u.k_star,
                    (i + 1) as f64 * dt
                )));
            }
        }
    }
    let p_eff = u.p_eff;
    let price: Vec<f64> = capacity
        .iter()
        .map(|&kk| p_eff / (kk + u.margin.y0 + params.eps))
        .collect();
    let flow: Vec<f64> = capacity
        .iter()
        .map(|&kk| params.lambda * (u.eval(kk) - u.alpha_net))
        .collect();
    let reserve = vec![u.margin.y0; capacity.len()];
    Ok(Trajectory {
        times,
        capacity,
        reserve,
        reserve_is_fixed: true,
        price,
        flow,
    })
}

/// Integrates the coupled `(K, Y)` system with bilinear interpolation of a
/// 2D value function.
pub fn simulate_capacity_2d(
    u2: &ValueFunction2D,
    start: (f64, f64),
    t_end: f64,
    dt: f64,
) -> Result<Trajectory> {
    if !(dt > 0.0) || !(t_end > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "need positive dt and t_end, got dt = {dt}, t_end = {t_end}"
        )));
    }
    let grid = &u2.grid;
    if !grid.contains(start.0, start.1) {
        return Err(Error::StepOutOfDomain(format!(
            "start ({}, {}) outside solve rectangle",
            start.0, start.1
        )));
    }
    let params = u2.params;
    let reserve = u2.reserve;
    let g = |k: f64, y: f64| {
        (
            params.lambda * (u2.eval(k, y) - u2.alpha_net) - params.delta * k,
            reserve.drift(k, y),
        )
    };
    let n_steps = (t_end / dt).round() as usize;
    let mut times = Vec::with_capacity(n_steps + 1);
    let mut capacity = Vec::with_capacity(n_steps + 1);
    let mut res = Vec::with_capacity(n_steps + 1);
    let mut state = start;
    for i in 0..=n_steps {
        times.push(i as f64 * dt);
        capacity.push(state.0);
        res.push(state.1);
        if i < n_steps {
            state = rk4_pair(g, state, dt);
            if !grid.contains_with_slack(state.0, state.1, 1.0) {
                return Err(Error::StepOutOfDomain(format!(
                    "state ({:.3}, {:.3}) left the rectangle by more than one cell at t = {:.3}",
                    state.0,
                    state.1,
                    (i + 1) as f64 * dt
                )));
            }
        }
    }
    let p_eff = u2.p_eff;
    let price: Vec<f64> = capacity
        .iter()
        .zip(&res)
        .map(|(&k, &y)| p_eff / (k + y + params.eps))
        .collect();
    let flow: Vec<f64> = capacity
        .iter()
        .zip(&res)
        .map(|(&k, &y)| params.lambda * (u2.eval(k, y) - u2.alpha_net))
        .collect();
    Ok(Trajectory {
        times,
        capacity,
        reserve: res,
        reserve_is_fixed: false,
        price,
        flow,
    })
}

/// Trapezoid quadrature of `exp(-rate t) * weight(t, K_t)` over the sampled
/// trajectory plus the analytic tail `tail_value * exp(-rate T) / rate`,
/// where `tail_value` is the asymptotic weight (typically `weight(inf, k*)`).
pub fn discounted_integral(
    traj: &Trajectory,
    rate: f64,
    weight: impl Fn(f64, f64) -> f64,
    tail_value: f64,
) -> f64 {
    let mut acc = 0.0;
    let mut prev = weight(traj.times[0], traj.capacity[0]);
    for i in 1..traj.times.len() {
        let cur = (-rate * traj.times[i]).exp() * weight(traj.times[i], traj.capacity[i]);
        acc += 0.5 * (traj.times[i] - traj.times[i - 1]) * (prev + cur);
        prev = cur;
    }
    let t_end = *traj.times.last().unwrap();
    acc + tail_value * (-rate * t_end).exp() / rate
}
