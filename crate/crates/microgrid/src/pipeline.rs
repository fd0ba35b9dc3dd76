//! Batch orchestration: solve every scenario, write per-scenario and
//! summary artifacts, and rebuild schedules from artifacts for the risk
//! and validation paths.
//!
//! Scenarios are solved independently and always merged in scenario-id
//! order, never completion order, so serial and parallel runs produce
//! byte-identical output trees.

use std::path::{Path, PathBuf};

use rayon::prelude::*;
use thiserror::Error;

use crate::battery::{self, BatteryState};
use crate::domain::{
    ConfigError, CostBreakdown, DomainError, MicrogridConfig, Schedule, SegmentDecision,
    Violation,
};
use crate::risk::{build_loss_matrix, risk_report, RiskError, RiskReport};
use crate::scenario_io::{
    read_schedule_csv, write_risk_csvs, write_schedule_csv, write_summary_csv, IoError,
    ScenarioSet, ScheduleRow, SummaryRow,
};
use crate::scheduler::{
    build_problem, marginal_battery_cost, solve_day_ahead, validate_schedule, DispatchProblem,
    SolveError, SolveOptions,
};

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error(transparent)]
    Io(#[from] IoError),
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Domain(#[from] DomainError),
    #[error(transparent)]
    Risk(#[from] RiskError),
    #[error("missing schedule artifact {0} (run the schedule subcommand first)")]
    MissingArtifact(PathBuf),
    #[error("no scenario named {0} matches the schedule artifact")]
    MissingScenario(String),
    #[error("worker pool: {0}")]
    Threads(String),
    #[error("{} scenario(s) failed", failures.len())]
    Scenarios {
        failures: Vec<(String, SolveError)>,
    },
}

impl PipelineError {
    /// True when any failure is a dispatch infeasibility (priority
    /// shortfall or unabsorbable surplus) rather than a tooling error.
    pub fn is_infeasibility(&self) -> bool {
        match self {
            Self::Scenarios { failures } => failures.iter().any(|(_, e)| {
                matches!(
                    e,
                    SolveError::PriorityShortfall { .. } | SolveError::SurplusUnabsorbable { .. }
                )
            }),
            _ => false,
        }
    }
}

/// Per-segment objective contributions; sums to `schedule.objective`.
pub fn segment_costs(schedule: &Schedule, problem: &DispatchProblem) -> Vec<f64> {
    let cfg = &problem.config;
    let dt = cfg.time.segment_hours;
    let mc = marginal_battery_cost(cfg);
    schedule
        .decisions
        .iter()
        .map(|d| {
            cfg.diesel.fuel_cost * d.diesel_power * dt
                + mc * (d.charge_power + d.discharge_power)
                + cfg.demand.curtail_cost * d.curtailment * dt
                + if d.u_red { cfg.bess.red_zone_penalty } else { 0.0 }
        })
        .collect()
}

fn sorted_problems(
    config: &MicrogridConfig,
    set: &ScenarioSet,
) -> Result<Vec<DispatchProblem>, PipelineError> {
    let mut scenarios = set.scenarios.clone();
    scenarios.sort_by(|a, b| a.id.cmp(&b.id));
    scenarios
        .iter()
        .map(|s| {
            build_problem(config, s).map_err(|e| match e {
                SolveError::Domain(d) => PipelineError::Domain(d),
                other => PipelineError::Scenarios {
                    failures: vec![(s.id.clone(), other)],
                },
            })
        })
        .collect()
}

/// Solves every scenario in id order. `jobs` bounds the worker count; the
/// result order and content are identical for any value.
pub fn solve_all(
    config: &MicrogridConfig,
    set: &ScenarioSet,
    options: &SolveOptions,
    jobs: Option<usize>,
) -> Result<Vec<(DispatchProblem, Schedule)>, PipelineError> {
    let problems = sorted_problems(config, set)?;
    let solve = || {
        problems
            .par_iter()
            .map(|p| solve_day_ahead(p, options))
            .collect::<Vec<_>>()
    };
    let outcomes = match jobs {
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n.max(1))
            .build()
            .map_err(|e| PipelineError::Threads(e.to_string()))?
            .install(solve),
        None => solve(),
    };
    let mut results = Vec::with_capacity(problems.len());
    let mut failures = Vec::new();
    for (problem, outcome) in problems.into_iter().zip(outcomes) {
        match outcome {
            Ok(schedule) => results.push((problem, schedule)),
            Err(e) => failures.push((problem.scenario.id.clone(), e)),
        }
    }
    if !failures.is_empty() {
        return Err(PipelineError::Scenarios { failures });
    }
    Ok(results)
}

fn schedule_path(dir: &Path, scenario_id: &str) -> PathBuf {
    dir.join(format!("schedule_{scenario_id}.csv"))
}

/// Writes one schedule CSV per scenario plus summary.csv.
pub fn write_schedule_artifacts(
    results: &[(DispatchProblem, Schedule)],
    dir: &Path,
) -> Result<(), IoError> {
    std::fs::create_dir_all(dir).map_err(|e| IoError::Io {
        path: dir.to_path_buf(),
        source: e,
    })?;
    let mut summary = Vec::with_capacity(results.len());
    for (problem, schedule) in results {
        let costs = segment_costs(schedule, problem);
        write_schedule_csv(schedule, &costs, &schedule_path(dir, &schedule.scenario_id))?;
        summary.push(SummaryRow {
            scenario_id: schedule.scenario_id.clone(),
            total_cost_usd: schedule.cost.total,
            curtailed_kwh: schedule.curtailed_kwh(&problem.config.time),
            curtail_segments: schedule.curtail_segments(),
        });
    }
    write_summary_csv(&summary, &dir.join("summary.csv"))
}

/// Rebuilds a schedule from CSV rows. The cost breakdown is recomputed
/// from the rows; if the battery replay fails (corrupted rows), the
/// degradation term is left at zero so the validator can still run and
/// report the underlying violations.
pub fn reconstruct_schedule(problem: &DispatchProblem, rows: &[ScheduleRow]) -> Schedule {
    let cfg = &problem.config;
    let dt = cfg.time.segment_hours;
    let mut decisions = Vec::with_capacity(rows.len());
    let (mut fuel, mut curtail, mut red) = (0.0, 0.0, 0.0);
    let mut objective = 0.0;
    for (i, r) in rows.iter().enumerate() {
        let demand = problem.scenario.demand_total.get(i).copied().unwrap_or(0.0);
        decisions.push(SegmentDecision {
            diesel_power: r.diesel_kw,
            bess_power: r.bess_kw,
            charge_power: r.charge_kw,
            discharge_power: r.discharge_kw,
            curtailment: r.curtail_kw,
            u_charge: r.u_c,
            u_discharge: r.u_d,
            u_diesel: r.u_di,
            u_red: r.u_r,
            soc_end: r.soc_frac,
            total_served: demand - r.curtail_kw,
        });
        fuel += cfg.diesel.fuel_cost * r.diesel_kw * dt;
        curtail += cfg.demand.curtail_cost * r.curtail_kw * dt;
        if r.u_r {
            red += cfg.bess.red_zone_penalty;
        }
        objective += r.cost_usd;
    }
    let degradation = BatteryState::initial(&cfg.bess)
        .and_then(|initial| {
            let mut state = initial.clone();
            for r in rows {
                state = battery::soc_update(&state, r.charge_kw, r.discharge_kw, dt, &cfg.bess)?;
            }
            battery::degradation_cost(state.lambda, initial.lambda, cfg.bess.capital_cost)
        })
        .unwrap_or(0.0);
    Schedule {
        scenario_id: problem.scenario.id.clone(),
        decisions,
        cost: CostBreakdown::new(degradation, fuel, curtail, red),
        objective,
    }
}

/// Loads the schedule artifact for every problem, in problem order.
pub fn load_schedules(
    problems: &[DispatchProblem],
    dir: &Path,
) -> Result<Vec<Schedule>, PipelineError> {
    let mut schedules = Vec::with_capacity(problems.len());
    for problem in problems {
        let path = schedule_path(dir, &problem.scenario.id);
        if !path.exists() {
            return Err(PipelineError::MissingArtifact(path));
        }
        let rows = read_schedule_csv(&path)?;
        schedules.push(reconstruct_schedule(problem, &rows));
    }
    Ok(schedules)
}

/// Reads schedule artifacts from `dir`, builds the loss matrix, writes the
/// four risk CSVs there, and returns the report for console output.
pub fn run_risk(
    config: &MicrogridConfig,
    set: &ScenarioSet,
    dir: &Path,
    tail_fraction: f64,
) -> Result<RiskReport, PipelineError> {
    let problems = sorted_problems(config, set)?;
    let schedules = load_schedules(&problems, dir)?;
    let matrix = build_loss_matrix(&schedules, &problems, tail_fraction)?;
    let report = risk_report(&matrix)?;
    write_risk_csvs(&report, &matrix.scenario_ids, dir)?;
    Ok(report)
}

/// Validates every schedule artifact in `dir` against its scenario.
/// Returns per-file violations; an empty map means everything checks out.
pub fn validate_artifacts(
    config: &MicrogridConfig,
    set: &ScenarioSet,
    dir: &Path,
) -> Result<Vec<(String, Vec<Violation>)>, PipelineError> {
    let problems = sorted_problems(config, set)?;
    let mut found_any = false;
    let mut outcomes = Vec::new();
    let entries = std::fs::read_dir(dir).map_err(|e| {
        PipelineError::Io(IoError::Io {
            path: dir.to_path_buf(),
            source: e,
        })
    })?;
    let mut names: Vec<String> = entries
        .filter_map(|e| e.ok())
        .filter_map(|e| e.file_name().into_string().ok())
        .filter(|n| n.starts_with("schedule_") && n.ends_with(".csv"))
        .collect();
    names.sort();
    for name in names {
        found_any = true;
        let id = name
            .trim_start_matches("schedule_")
            .trim_end_matches(".csv")
            .to_string();
        let Some(problem) = problems.iter().find(|p| p.scenario.id == id) else {
            return Err(PipelineError::MissingScenario(id));
        };
        let rows = read_schedule_csv(&dir.join(&name))?;
        let schedule = reconstruct_schedule(problem, &rows);
        let violations = validate_schedule(&schedule, problem);
        if !violations.is_empty() {
            outcomes.push((name, violations));
        }
    }
    if !found_any {
        return Err(PipelineError::MissingArtifact(
            dir.join("schedule_*.csv"),
        ));
    }
    Ok(outcomes)
}

pub fn schedule_console_summary(results: &[(DispatchProblem, Schedule)]) -> String {
    let n = results.len();
    let total_cost: f64 = results.iter().map(|(_, s)| s.cost.total).sum();
    let curtailing = results
        .iter()
        .filter(|(_, s)| s.curtail_segments() > 0)
        .count();
    let curtailed_kwh: f64 = results
        .iter()
        .map(|(p, s)| s.curtailed_kwh(&p.config.time))
        .sum();
    format!(
        "solved {n} scenario(s); mean daily cost ${:.2}; {curtailing} scenario(s) curtail {curtailed_kwh:.3} kWh total",
        if n > 0 { total_cost / n as f64 } else { 0.0 }
    )
}

pub fn risk_console_summary(report: &RiskReport, scenario_count: usize) -> String {
    let segments = report.cvar_per_segment.len();
    let zero_segments = report
        .cvar_per_segment
        .iter()
        .filter(|&&c| c <= 1e-9)
        .count();
    if zero_segments == segments && report.active_scenarios.is_empty() {
        return "no curtailment risk: every segment's cVaR is zero".to_string();
    }
    let (worst_seg, worst) = report
        .cvar_per_segment
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.partial_cmp(b.1).expect("finite cVaR"))
        .map(|(i, v)| (i + 1, *v))
        .unwrap_or((0, 0.0));
    let active = report.active_scenarios.len();
    let pct = if scenario_count > 0 {
        100.0 * active as f64 / scenario_count as f64
    } else {
        0.0
    };
    format!(
        "segments with cVaR = 0: {zero_segments} of {segments}\nmax cVaR: {worst:.3} kW at segment {worst_seg}\nactive scenarios: {active} of {scenario_count} ({pct:.1}%)"
    )
}
