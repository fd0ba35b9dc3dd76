//! Sample-based curtailment risk metrics across scenarios.
//!
//! Losses are per-segment shortfall kW clipped at zero. VaR at tail
//! fraction q is the smallest sample threshold not exceeded by at least a
//! (1-q) share of scenarios. cVaR is the expected loss in that worst-q
//! tail, computed exactly by minimizing alpha + E[(loss - alpha)+]/q over
//! alpha; the objective is piecewise linear with breakpoints only at
//! sample values, so scanning the samples finds the true minimum even when
//! scenario_count * q is fractional. A tail fraction of 0.05 corresponds
//! to a 95% confidence level.

use std::collections::BTreeSet;

use thiserror::Error;

use crate::domain::{Schedule, VALIDATION_TOL};
use crate::scheduler::DispatchProblem;

#[derive(Debug, Error)]
pub enum RiskError {
    #[error("loss sample vector is empty")]
    EmptyLosses,
    #[error("tail fraction {0} outside (0, 1)")]
    InvalidTail(f64),
    #[error("misaligned inputs: {0}")]
    Misaligned(String),
}

/// Scenario-by-segment shortfall samples plus the demand denominators used
/// for ratio reporting.
#[derive(Debug, Clone)]
pub struct LossMatrix {
    /// Shortfall kW, `values[scenario][segment]`, nonnegative.
    pub values: Vec<Vec<f64>>,
    pub scenario_ids: Vec<String>,
    pub tail_fraction: f64,
    /// Total demand kW per scenario and segment.
    pub denominator_demand: Vec<Vec<f64>>,
}

impl LossMatrix {
    pub fn scenario_count(&self) -> usize {
        self.values.len()
    }

    pub fn segment_count(&self) -> usize {
        self.values.first().map_or(0, Vec::len)
    }
}

#[derive(Debug, Clone)]
pub struct RiskReport {
    pub var_per_segment: Vec<f64>,
    pub cvar_per_segment: Vec<f64>,
    /// cVaR of the curtailment-to-demand ratio per segment.
    pub cvar_ratio_per_segment: Vec<f64>,
    /// Number of curtailed segments in each scenario.
    pub curtail_instances_per_scenario: Vec<usize>,
    /// Standard deviation of the curtailment ratio among scenarios that
    /// curtail in the segment; zero where none do.
    pub std_per_segment: Vec<f64>,
    /// Scenarios with curtailment anywhere in the day.
    pub active_scenarios: BTreeSet<String>,
}

/// Unserved power implied by the balance equation: positive net load not
/// covered by the battery and diesel. Negative results (PV surplus) clip
/// to zero.
pub fn shortfall(net_load: f64, bess_power: f64, diesel_power: f64) -> f64 {
    (net_load - bess_power - diesel_power).max(0.0)
}

fn check_tail(tail_fraction: f64) -> Result<(), RiskError> {
    if !(tail_fraction > 0.0 && tail_fraction < 1.0) {
        return Err(RiskError::InvalidTail(tail_fraction));
    }
    Ok(())
}

fn sorted(losses: &[f64]) -> Result<Vec<f64>, RiskError> {
    if losses.is_empty() {
        return Err(RiskError::EmptyLosses);
    }
    let mut s = losses.to_vec();
    s.sort_by(|a, b| a.partial_cmp(b).expect("loss values are ordered"));
    Ok(s)
}

/// Smallest sample value alpha with at least a (1 - tail_fraction) share
/// of losses at or below it.
pub fn empirical_var(losses: &[f64], tail_fraction: f64) -> Result<f64, RiskError> {
    check_tail(tail_fraction)?;
    let s = sorted(losses)?;
    let n = s.len();
    let idx = ((1.0 - tail_fraction) * n as f64 - 1e-9).ceil() as usize;
    Ok(s[idx.saturating_sub(1).min(n - 1)])
}

/// Expected loss in the worst tail_fraction of samples, with the
/// minimizing threshold alpha*. Ties break toward the smallest alpha.
pub fn empirical_cvar(losses: &[f64], tail_fraction: f64) -> Result<(f64, f64), RiskError> {
    check_tail(tail_fraction)?;
    let s = sorted(losses)?;
    let n = s.len();
    let weight = 1.0 / (n as f64 * tail_fraction);
    let mut suffix = vec![0.0; n + 1];
    for i in (0..n).rev() {
        suffix[i] = suffix[i + 1] + s[i];
    }
    let mut best: Option<(f64, f64)> = None;
    let mut i = 0;
    while i < n {
        let alpha = s[i];
        let above = s.partition_point(|&v| v <= alpha);
        let objective = alpha + weight * (suffix[above] - (n - above) as f64 * alpha);
        if best.map_or(true, |(obj, _)| objective < obj - 1e-15) {
            best = Some((objective, alpha));
        }
        i = above.max(i + 1);
    }
    let (cvar, alpha_star) = best.expect("nonempty samples");
    Ok((cvar, alpha_star))
}

/// Collects per-segment shortfalls across solved scenarios. Shortfall must
/// reproduce each schedule's curtailment: any disagreement beyond 1e-6
/// means the schedule violates the balance equation and is a bug upstream.
pub fn build_loss_matrix(
    schedules: &[Schedule],
    problems: &[DispatchProblem],
    tail_fraction: f64,
) -> Result<LossMatrix, RiskError> {
    check_tail(tail_fraction)?;
    if schedules.len() != problems.len() {
        return Err(RiskError::Misaligned(format!(
            "{} schedules vs {} problems",
            schedules.len(),
            problems.len()
        )));
    }
    let mut values = Vec::with_capacity(schedules.len());
    let mut denominator = Vec::with_capacity(schedules.len());
    let mut ids = Vec::with_capacity(schedules.len());
    let segment_count = problems.first().map_or(0, |p| p.net_load.len());
    for (schedule, problem) in schedules.iter().zip(problems) {
        if schedule.decisions.len() != problem.net_load.len()
            || problem.net_load.len() != segment_count
        {
            return Err(RiskError::Misaligned(format!(
                "scenario {}: {} decisions vs {} segments",
                schedule.scenario_id,
                schedule.decisions.len(),
                problem.net_load.len()
            )));
        }
        let mut row = Vec::with_capacity(segment_count);
        for (t, d) in schedule.decisions.iter().enumerate() {
            let loss = shortfall(problem.net_load[t], d.bess_power, d.diesel_power);
            assert!(
                (loss - d.curtailment).abs() <= 1e-6,
                "scenario {} segment {}: shortfall {} disagrees with curtailment {}",
                schedule.scenario_id,
                t + 1,
                loss,
                d.curtailment
            );
            row.push(loss);
        }
        values.push(row);
        denominator.push(problem.scenario.demand_total.clone());
        ids.push(schedule.scenario_id.clone());
    }
    Ok(LossMatrix {
        values,
        scenario_ids: ids,
        tail_fraction,
        denominator_demand: denominator,
    })
}

fn ratio(loss: f64, demand: f64) -> f64 {
    if demand > VALIDATION_TOL {
        loss / demand
    } else {
        0.0
    }
}

pub fn risk_report(matrix: &LossMatrix) -> Result<RiskReport, RiskError> {
    let n_scen = matrix.scenario_count();
    let n_seg = matrix.segment_count();
    if n_scen == 0 {
        return Err(RiskError::EmptyLosses);
    }

    let mut var_per_segment = Vec::with_capacity(n_seg);
    let mut cvar_per_segment = Vec::with_capacity(n_seg);
    let mut cvar_ratio_per_segment = Vec::with_capacity(n_seg);
    let mut std_per_segment = Vec::with_capacity(n_seg);
    let mut column = vec![0.0; n_scen];
    let mut ratios = vec![0.0; n_scen];
    for t in 0..n_seg {
        for s in 0..n_scen {
            column[s] = matrix.values[s][t];
            ratios[s] = ratio(matrix.values[s][t], matrix.denominator_demand[s][t]);
        }
        let var = empirical_var(&column, matrix.tail_fraction)?;
        let (cvar, _) = empirical_cvar(&column, matrix.tail_fraction)?;
        debug_assert!(cvar >= var - 1e-12);
        var_per_segment.push(var);
        cvar_per_segment.push(cvar);
        cvar_ratio_per_segment.push(empirical_cvar(&ratios, matrix.tail_fraction)?.0);

        let curtailing: Vec<f64> = (0..n_scen)
            .filter(|&s| column[s] > VALIDATION_TOL)
            .map(|s| ratios[s])
            .collect();
        if curtailing.is_empty() {
            std_per_segment.push(0.0);
        } else {
            let mean = curtailing.iter().sum::<f64>() / curtailing.len() as f64;
            let var_r = curtailing.iter().map(|r| (r - mean).powi(2)).sum::<f64>()
                / curtailing.len() as f64;
            std_per_segment.push(var_r.sqrt());
        }
    }

    let mut curtail_instances_per_scenario = Vec::with_capacity(n_scen);
    let mut active_scenarios = BTreeSet::new();
    for (s, row) in matrix.values.iter().enumerate() {
        let count = row.iter().filter(|&&v| v > VALIDATION_TOL).count();
        curtail_instances_per_scenario.push(count);
        if count > 0 {
            active_scenarios.insert(matrix.scenario_ids[s].clone());
        }
    }

    Ok(RiskReport {
        var_per_segment,
        cvar_per_segment,
        cvar_ratio_per_segment,
        curtail_instances_per_scenario,
        std_per_segment,
        active_scenarios,
    })
}
