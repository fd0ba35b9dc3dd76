//! Battery fleet state evolution: SOC dynamics, half-cycle accounting, the
//! cycle-dependent capacity-loss factor, and the degradation cost derived
//! from it.
//!
//! The fleet is one aggregate battery. Cycle count grows by half the sum of
//! per-segment depth of discharge and depth of charge, both measured as
//! terminal energy over fleet capacity. The capacity-loss factor
//! `lambda(n) = n_max / (gamma * (n_max - n) + n_max)` rises from
//! `1/(1+gamma)` at zero cycles to exactly 1 at rated life; the objective
//! only ever prices differences of lambda, so the nonzero starting value
//! never enters any cost.

use thiserror::Error;

use crate::domain::BessParams;

#[derive(Debug, Error, PartialEq)]
pub enum BatteryError {
    #[error("negative power: {0} kW")]
    NegativePower(f64),
    #[error("charge ({charge} kW) and discharge ({discharge} kW) cannot both be positive")]
    SimultaneousChargeDischarge { charge: f64, discharge: f64 },
    #[error("SOC {soc} leaves [{min}, {max}]")]
    SocOutOfBounds { soc: f64, min: f64, max: f64 },
    #[error("depth fraction out of [0, 1]: {0}")]
    DepthOutOfRange(f64),
    #[error("cycle count {n_bat} outside [0, {n_max}]")]
    CyclesOutOfRange { n_bat: f64, n_max: f64 },
    #[error("gamma must be positive, got {0}")]
    NonPositiveGamma(f64),
    #[error("capacity-loss factor decreased ({now} < {prev})")]
    LambdaDecreased { now: f64, prev: f64 },
}

/// Aggregate fleet state carried across segments.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BatteryState {
    /// State of charge as a fraction of fleet capacity.
    pub soc: f64,
    /// Accumulated equivalent cycles.
    pub cycles: f64,
    /// Capacity-loss factor at `cycles`.
    pub lambda: f64,
}

impl BatteryState {
    pub fn initial(params: &BessParams) -> Result<Self, BatteryError> {
        Ok(Self {
            soc: params.initial_soc(),
            cycles: params.initial_cycles,
            lambda: capacity_loss_factor(
                params.initial_cycles,
                params.rated_max_cycles,
                params.gamma,
            )?,
        })
    }
}

/// Half-cycle accounting: one full charge plus one full discharge is one
/// cycle, partial depths accumulate proportionally.
pub fn cycle_increment(dod: f64, doc: f64) -> Result<f64, BatteryError> {
    for d in [dod, doc] {
        if !(0.0..=1.0).contains(&d) {
            return Err(BatteryError::DepthOutOfRange(d));
        }
    }
    Ok(0.5 * (dod + doc))
}

/// Capacity-loss factor after `n_bat` cycles of a battery rated for `n_max`.
/// Strictly increasing in `n_bat`; reaches exactly 1 at rated life.
pub fn capacity_loss_factor(n_bat: f64, n_max: f64, gamma: f64) -> Result<f64, BatteryError> {
    if !(gamma > 0.0) {
        return Err(BatteryError::NonPositiveGamma(gamma));
    }
    if !(n_bat >= 0.0 && n_bat <= n_max) {
        return Err(BatteryError::CyclesOutOfRange { n_bat, n_max });
    }
    Ok(n_max / (gamma * (n_max - n_bat) + n_max))
}

/// d(lambda)/d(cycles) at `n_bat`: the marginal capacity-loss rate the
/// scheduler uses to price one day's throughput at a constant rate.
pub fn degradation_slope(n_bat: f64, n_max: f64, gamma: f64) -> Result<f64, BatteryError> {
    if !(gamma > 0.0) {
        return Err(BatteryError::NonPositiveGamma(gamma));
    }
    if !(n_bat >= 0.0 && n_bat <= n_max) {
        return Err(BatteryError::CyclesOutOfRange { n_bat, n_max });
    }
    let denom = gamma * (n_max - n_bat) + n_max;
    Ok(gamma * n_max / (denom * denom))
}

/// Dollar cost of the capacity lost between two points on the loss curve.
/// Degradation is irreversible, so a decreasing factor is an error.
pub fn degradation_cost(
    lambda_now: f64,
    lambda_prev: f64,
    capital_cost: f64,
) -> Result<f64, BatteryError> {
    if lambda_now < lambda_prev {
        return Err(BatteryError::LambdaDecreased {
            now: lambda_now,
            prev: lambda_prev,
        });
    }
    Ok((lambda_now - lambda_prev) * capital_cost)
}

/// True when `soc` sits outside the inclusive green band.
pub fn green_zone_flag(soc: f64, params: &BessParams) -> bool {
    !(params.soc_green_min <= soc && soc <= params.soc_green_max)
}

/// Advances fleet state over one segment. `charge_power` and
/// `discharge_power` are terminal-side kW; at most one may be positive.
/// A resulting SOC outside the absolute bounds is an infeasibility signal
/// for the caller, not a panic.
pub fn soc_update(
    state: &BatteryState,
    charge_power: f64,
    discharge_power: f64,
    dt: f64,
    params: &BessParams,
) -> Result<BatteryState, BatteryError> {
    for p in [charge_power, discharge_power] {
        if !(p >= 0.0) {
            return Err(BatteryError::NegativePower(p));
        }
    }
    if charge_power > 0.0 && discharge_power > 0.0 {
        return Err(BatteryError::SimultaneousChargeDischarge {
            charge: charge_power,
            discharge: discharge_power,
        });
    }
    let cap = params.fleet_capacity_kwh();
    let stored_delta =
        (params.eta_charge * charge_power - discharge_power / params.eta_discharge) * dt / cap;
    let soc = state.soc + stored_delta;
    if soc < params.soc_abs_min - 1e-9 || soc > params.soc_abs_max + 1e-9 {
        return Err(BatteryError::SocOutOfBounds {
            soc,
            min: params.soc_abs_min,
            max: params.soc_abs_max,
        });
    }
    let doc = (charge_power * dt / cap).min(1.0);
    let dod = (discharge_power * dt / cap).min(1.0);
    let cycles =
        (state.cycles + cycle_increment(dod, doc)?).min(params.rated_max_cycles);
    let lambda = capacity_loss_factor(cycles, params.rated_max_cycles, params.gamma)?;
    Ok(BatteryState {
        soc,
        cycles,
        lambda,
    })
}
