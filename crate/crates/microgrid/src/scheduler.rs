//! Day-ahead dispatch optimization for one scenario.
//!
//! The dispatch model is a mixed-integer linear program per scenario:
//! continuous diesel/charge/discharge/curtailment/SOC trajectories, plus
//! binary structure for the red-zone flag, diesel semicontinuity when a
//! minimum output is configured, and charge/discharge exclusivity when
//! efficiencies are below 1. It is solved by depth-first branch-and-bound
//! over a warm-started dual simplex relaxation.
//!
//! Battery wear enters the objective at a constant marginal rate: the
//! capacity-loss slope at the day's starting cycle count prices each kW of
//! charge or discharge. Daily cycle counts are tiny against rated life, so
//! this day-linearized objective tracks the exact capacity-loss cost to
//! well under 1%; schedules report the exact value in `cost` and the
//! linearized one in `objective`.

use std::time::{Duration, Instant};

use thiserror::Error;

use crate::battery::{self, BatteryState};
use crate::domain::{
    split_demand, CostBreakdown, DomainError, MicrogridConfig, Scenario, Schedule,
    SegmentDecision, Violation, VALIDATION_TOL,
};
use crate::lp::{DualSimplex, LpBuilder, Rel, SolveStatus};

/// Penalty cost per kW on the elastic slack columns used for infeasibility
/// diagnosis; dwarfs every real cost in the model.
const ELASTIC_COST: f64 = 1e6;
/// Integrality tolerance for branching decisions.
const INT_TOL: f64 = 1e-6;
/// SOC distance beyond a green boundary before a segment counts as red.
const RED_TOL: f64 = 1e-6;

#[derive(Debug, Error)]
pub enum SolveError {
    #[error("priority demand exceeds available supply at segments {segments:?}")]
    PriorityShortfall { segments: Vec<usize> },
    #[error("PV surplus cannot be absorbed at segments {segments:?}")]
    SurplusUnabsorbable { segments: Vec<usize> },
    #[error(transparent)]
    Domain(#[from] DomainError),
    #[error("optimization failed: {0}")]
    Numerical(String),
    #[error("instance too large for exhaustive search: {0}")]
    OracleTooLarge(String),
}

/// One scenario's optimization input: the scenario itself plus the demand
/// split and net load derived from it.
#[derive(Debug, Clone)]
pub struct DispatchProblem {
    pub config: MicrogridConfig,
    pub scenario: Scenario,
    /// Total demand minus PV per segment; negative means PV surplus.
    pub net_load: Vec<f64>,
    pub priority_demand: Vec<f64>,
    pub essential_demand: Vec<f64>,
}

#[derive(Debug, Clone, Copy)]
pub struct SolveOptions {
    /// Relative branch-and-bound gap at which nodes are pruned.
    pub optimality_gap: f64,
    pub time_limit_secs: f64,
    /// Grid step used by [`brute_force_oracle`].
    pub oracle_resolution_kw: f64,
}

impl Default for SolveOptions {
    fn default() -> Self {
        Self {
            optimality_gap: 1e-4,
            time_limit_secs: 60.0,
            oracle_resolution_kw: 0.25,
        }
    }
}

pub fn build_problem(
    config: &MicrogridConfig,
    scenario: &Scenario,
) -> Result<DispatchProblem, SolveError> {
    scenario.validate(&config.time)?;
    let mut net_load = Vec::with_capacity(scenario.demand_total.len());
    let mut priority_demand = Vec::with_capacity(net_load.capacity());
    let mut essential_demand = Vec::with_capacity(net_load.capacity());
    for (d, pv) in scenario.demand_total.iter().zip(&scenario.pv_generation) {
        let (p, e) = split_demand(*d, config.demand.epsilon)?;
        priority_demand.push(p);
        essential_demand.push(e);
        net_load.push(d - pv);
    }
    Ok(DispatchProblem {
        config: config.clone(),
        scenario: scenario.clone(),
        net_load,
        priority_demand,
        essential_demand,
    })
}

/// Marginal battery cost per kW of charge or discharge held for one
/// segment: capacity-loss slope at the starting cycle count, times capital,
/// times the half-cycle each kWh of throughput contributes.
pub(crate) fn marginal_battery_cost(config: &MicrogridConfig) -> f64 {
    let b = &config.bess;
    let slope = battery::degradation_slope(b.initial_cycles, b.rated_max_cycles, b.gamma)
        .expect("validated config");
    slope * b.capital_cost * config.time.segment_hours / (2.0 * b.fleet_capacity_kwh())
}

fn red_overshoot(soc: f64, config: &MicrogridConfig) -> f64 {
    let b = &config.bess;
    (b.soc_green_min - soc).max(soc - b.soc_green_max)
}

/// Raw per-segment power decision, before flags and SOC are derived.
#[derive(Debug, Clone, Copy, Default)]
struct RawSeg {
    p_di: f64,
    p_c: f64,
    p_d: f64,
    d_ec: f64,
}

/// Builds [`Schedule`] from raw powers: recomputes the SOC trajectory
/// exactly, derives status flags, and prices both the exact and the
/// day-linearized battery cost. Simultaneous charge/discharge is cancelled
/// out first when efficiencies are 1 (net power and SOC are unchanged by
/// the cancellation, cost never increases).
fn assemble_schedule(
    problem: &DispatchProblem,
    raw: &[RawSeg],
    mc: f64,
) -> Result<Schedule, SolveError> {
    let cfg = &problem.config;
    let b = &cfg.bess;
    let dt = cfg.time.segment_hours;
    let lossless = b.eta_charge == 1.0 && b.eta_discharge == 1.0;

    let mut state = BatteryState::initial(b).map_err(|e| SolveError::Numerical(e.to_string()))?;
    let lambda_start = state.lambda;
    let mut decisions = Vec::with_capacity(raw.len());
    let (mut fuel, mut curtail, mut red, mut linear_battery) = (0.0, 0.0, 0.0, 0.0);

    for (t, seg) in raw.iter().enumerate() {
        let snap = |v: f64| if v.abs() < 1e-9 { 0.0 } else { v };
        let mut p_c = snap(seg.p_c).max(0.0);
        let mut p_d = snap(seg.p_d).max(0.0);
        if lossless && p_c > 0.0 && p_d > 0.0 {
            let net = p_d - p_c;
            p_c = (-net).max(0.0);
            p_d = net.max(0.0);
        }
        let p_di = snap(seg.p_di).max(0.0).min(cfg.diesel.p_max);
        let d_ec = snap(seg.d_ec)
            .max(0.0)
            .min(problem.essential_demand[t]);

        state = battery::soc_update(&state, p_c, p_d, dt, b)
            .map_err(|e| SolveError::Numerical(format!("segment {}: {e}", t + 1)))?;
        let u_red = red_overshoot(state.soc, cfg) > RED_TOL;

        fuel += cfg.diesel.fuel_cost * p_di * dt;
        curtail += cfg.demand.curtail_cost * d_ec * dt;
        if u_red {
            red += b.red_zone_penalty;
        }
        linear_battery += mc * (p_c + p_d);

        decisions.push(SegmentDecision {
            diesel_power: p_di,
            bess_power: p_d - p_c,
            charge_power: p_c,
            discharge_power: p_d,
            curtailment: d_ec,
            u_charge: p_c > 0.0,
            u_discharge: p_d > 0.0,
            u_diesel: p_di > 0.0,
            u_red,
            soc_end: state.soc,
            total_served: problem.scenario.demand_total[t] - d_ec,
        });
    }

    let exact_battery = battery::degradation_cost(state.lambda, lambda_start, b.capital_cost)
        .map_err(|e| SolveError::Numerical(e.to_string()))?;
    Ok(Schedule {
        scenario_id: problem.scenario.id.clone(),
        decisions,
        cost: CostBreakdown::new(exact_battery, fuel, curtail, red),
        objective: linear_battery + fuel + curtail + red,
    })
}

/// Column layout of the dispatch LP: six structural columns per segment, in
/// this order, followed by two elastic slack columns per segment when
/// diagnosing infeasibility.
struct DispatchLp {
    lp: DualSimplex,
    t_count: usize,
    elastic: bool,
}

const VARS: usize = 6;
const V_PDI: usize = 0;
const V_PC: usize = 1;
const V_PD: usize = 2;
const V_DEC: usize = 3;
const V_SOC: usize = 4;
const V_UR: usize = 5;

impl DispatchLp {
    fn col(t: usize, v: usize) -> usize {
        t * VARS + v
    }

    fn slack_cols(&self, t: usize) -> (usize, usize) {
        let base = self.t_count * VARS;
        (base + 2 * t, base + 2 * t + 1)
    }

    fn build(problem: &DispatchProblem, mc: f64, elastic: bool) -> Self {
        Self::build_with_cost_cap(problem, mc, elastic, None)
    }

    /// With `cost_cap = Some(z)` the dispatch cost becomes a constraint
    /// (`<= z`) and the objective switches to time-weighted curtailment,
    /// so minimizing it defers curtailment as late in the day as possible.
    fn build_with_cost_cap(
        problem: &DispatchProblem,
        mc: f64,
        elastic: bool,
        cost_cap: Option<f64>,
    ) -> Self {
        let cfg = &problem.config;
        let b = &cfg.bess;
        let dt = cfg.time.segment_hours;
        let cap = b.fleet_capacity_kwh();
        let t_count = problem.net_load.len();

        let mut lp = LpBuilder::new();
        let mut dispatch_cost = Vec::with_capacity(4 * t_count);
        for t in 0..t_count {
            let mut col = |c: f64, lo: f64, hi: f64, weight: f64| {
                let j = lp.add_col(if cost_cap.is_some() { weight } else { c }, lo, hi);
                if c != 0.0 {
                    dispatch_cost.push((j, c));
                }
                j
            };
            col(cfg.diesel.fuel_cost * dt, 0.0, cfg.diesel.p_max, 0.0);
            col(mc, 0.0, b.fleet_max_charge_kw(), 0.0);
            col(mc, 0.0, b.fleet_max_discharge_kw(), 0.0);
            col(
                cfg.demand.curtail_cost * dt,
                0.0,
                problem.essential_demand[t],
                (t_count - t) as f64,
            );
            col(0.0, b.soc_abs_min, b.soc_abs_max, 0.0);
            col(b.red_zone_penalty, 0.0, 1.0, 0.0);
        }
        if elastic {
            for _ in 0..t_count {
                lp.add_col(ELASTIC_COST, 0.0, f64::INFINITY);
                lp.add_col(ELASTIC_COST, 0.0, f64::INFINITY);
            }
        }
        if let Some(z) = cost_cap {
            lp.add_row(Rel::Le, z, &dispatch_cost);
        }
        let slack_base = t_count * VARS;
        for t in 0..t_count {
            let mut balance = vec![
                (Self::col(t, V_PDI), 1.0),
                (Self::col(t, V_PD), 1.0),
                (Self::col(t, V_PC), -1.0),
                (Self::col(t, V_DEC), 1.0),
            ];
            if elastic {
                balance.push((slack_base + 2 * t, 1.0));
                balance.push((slack_base + 2 * t + 1, -1.0));
            }
            lp.add_row(Rel::Eq, problem.net_load[t], &balance);

            let mut soc_row = vec![
                (Self::col(t, V_SOC), 1.0),
                (Self::col(t, V_PC), -b.eta_charge * dt / cap),
                (Self::col(t, V_PD), dt / (b.eta_discharge * cap)),
            ];
            let rhs = if t == 0 {
                b.initial_soc()
            } else {
                soc_row.push((Self::col(t - 1, V_SOC), -1.0));
                0.0
            };
            lp.add_row(Rel::Eq, rhs, &soc_row);

            lp.add_row(
                Rel::Ge,
                b.soc_green_min,
                &[
                    (Self::col(t, V_SOC), 1.0),
                    (Self::col(t, V_UR), b.soc_green_min - b.soc_abs_min),
                ],
            );
            lp.add_row(
                Rel::Le,
                b.soc_green_max,
                &[
                    (Self::col(t, V_SOC), 1.0),
                    (Self::col(t, V_UR), -(b.soc_abs_max - b.soc_green_max)),
                ],
            );
        }
        Self {
            lp: lp.build(),
            t_count,
            elastic,
        }
    }

    fn raw(&self, t: usize) -> RawSeg {
        RawSeg {
            p_di: self.lp.col_value(Self::col(t, V_PDI)),
            p_c: self.lp.col_value(Self::col(t, V_PC)),
            p_d: self.lp.col_value(Self::col(t, V_PD)),
            d_ec: self.lp.col_value(Self::col(t, V_DEC)),
        }
    }
}

#[derive(Debug, Clone, Copy)]
enum BranchVar {
    Red(usize),
    Diesel(usize),
    Overlap(usize),
}

struct BranchBound<'a> {
    model: DispatchLp,
    problem: &'a DispatchProblem,
    mc: f64,
    options: SolveOptions,
    deadline: Instant,
    /// Best feasible (objective, raw powers) found so far.
    incumbent: Option<(f64, Vec<RawSeg>)>,
    timed_out: bool,
    lp_iter_limit: usize,
}

impl<'a> BranchBound<'a> {
    fn new(problem: &'a DispatchProblem, options: SolveOptions, elastic: bool) -> Self {
        let mc = marginal_battery_cost(&problem.config);
        let model = DispatchLp::build(problem, mc, elastic);
        let lp_iter_limit = 20_000 + 100 * model.lp.num_rows();
        Self {
            model,
            problem,
            mc,
            options,
            deadline: Instant::now()
                + Duration::from_secs_f64(options.time_limit_secs.max(0.001)),
            incumbent: None,
            timed_out: false,
            lp_iter_limit,
        }
    }

    fn prune_threshold(&self) -> Option<f64> {
        self.incumbent.as_ref().map(|(obj, _)| {
            obj - (self.options.optimality_gap * obj.abs()).max(1e-12)
        })
    }

    fn extract_raw(&self) -> Vec<RawSeg> {
        (0..self.model.t_count).map(|t| self.model.raw(t)).collect()
    }

    /// Objective of a candidate incumbent. In elastic mode the LP objective
    /// is used directly (slack penalties must stay in the comparison); in
    /// normal mode the assembled schedule's linearized objective is used,
    /// which re-derives red flags from the exact SOC trajectory.
    fn offer_incumbent(&mut self, raw: Vec<RawSeg>, lp_objective: f64) -> Result<(), SolveError> {
        let obj = if self.model.elastic {
            lp_objective
        } else {
            assemble_schedule(self.problem, &raw, self.mc)?.objective
        };
        match &self.incumbent {
            Some((best, _)) if *best <= obj => {}
            _ => self.incumbent = Some((obj, raw)),
        }
        Ok(())
    }

    /// Returns the next variable to branch on plus whether the power
    /// variables alone already form a feasible dispatch (fractional red
    /// flags are repairable by assembly; interior diesel output and
    /// charge/discharge overlap are not).
    fn pick_branch(&self, raw: &[RawSeg]) -> (Option<BranchVar>, bool) {
        let cfg = &self.problem.config;
        let mut red = None;
        for t in 0..self.model.t_count {
            let ur = self.model.lp.col_value(DispatchLp::col(t, V_UR));
            if ur > INT_TOL && ur < 1.0 - INT_TOL {
                red = Some(BranchVar::Red(t));
                break;
            }
        }
        let mut diesel = None;
        if cfg.diesel.p_min > 0.0 {
            for (t, seg) in raw.iter().enumerate() {
                if seg.p_di > 1e-9 && seg.p_di < cfg.diesel.p_min - 1e-9 {
                    diesel = Some(BranchVar::Diesel(t));
                    break;
                }
            }
        }
        let mut overlap = None;
        if cfg.bess.eta_charge < 1.0 || cfg.bess.eta_discharge < 1.0 {
            for (t, seg) in raw.iter().enumerate() {
                if seg.p_c > 1e-9 && seg.p_d > 1e-9 {
                    overlap = Some(BranchVar::Overlap(t));
                    break;
                }
            }
        }
        let powers_ok = diesel.is_none() && overlap.is_none();
        (red.or(diesel).or(overlap), powers_ok)
    }

    fn search(&mut self) -> Result<(), SolveError> {
        if Instant::now() >= self.deadline {
            self.timed_out = true;
            return Ok(());
        }
        match self.model.lp.solve(self.lp_iter_limit) {
            SolveStatus::Infeasible => return Ok(()),
            SolveStatus::Aborted => {
                return Err(SolveError::Numerical(
                    "simplex iteration limit reached".into(),
                ))
            }
            SolveStatus::Optimal => {}
        }
        let bound = self.model.lp.objective();
        if let Some(cutoff) = self.prune_threshold() {
            if bound >= cutoff {
                return Ok(());
            }
        }

        let raw = self.extract_raw();
        let (branch, powers_ok) = self.pick_branch(&raw);
        if powers_ok {
            self.offer_incumbent(raw, bound)?;
        }
        let Some(branch) = branch else {
            return Ok(());
        };

        let children: [(usize, f64, f64); 2] = match branch {
            BranchVar::Red(t) => {
                let c = DispatchLp::col(t, V_UR);
                [(c, 1.0, 1.0), (c, 0.0, 0.0)]
            }
            BranchVar::Diesel(t) => {
                let c = DispatchLp::col(t, V_PDI);
                let d = &self.problem.config.diesel;
                [(c, d.p_min, d.p_max), (c, 0.0, 0.0)]
            }
            BranchVar::Overlap(t) => [
                (DispatchLp::col(t, V_PD), 0.0, 0.0),
                (DispatchLp::col(t, V_PC), 0.0, 0.0),
            ],
        };
        for (col, lo, hi) in children {
            let saved = self.model.lp.col_bounds(col);
            self.model.lp.set_col_bounds(col, lo, hi);
            let result = self.search();
            self.model.lp.set_col_bounds(col, saved.0, saved.1);
            result?;
            if self.timed_out {
                break;
            }
        }
        Ok(())
    }
}

/// Solves the day-ahead dispatch. On infeasibility the problem is re-solved
/// with elastic balance slacks to name the segments where priority demand
/// outstrips supply (or where PV surplus cannot be absorbed).
pub fn solve_day_ahead(
    problem: &DispatchProblem,
    options: &SolveOptions,
) -> Result<Schedule, SolveError> {
    let mut bb = BranchBound::new(problem, *options, false);
    bb.search()?;
    match bb.incumbent {
        Some((_, raw)) => {
            let schedule = assemble_schedule(problem, &raw, bb.mc)?;
            if schedule.curtailed_kwh(&problem.config.time) > 1e-9 {
                if let Some(deferred) = defer_curtailment(problem, &schedule, bb.mc) {
                    return Ok(deferred);
                }
            }
            Ok(schedule)
        }
        None if bb.timed_out => Err(SolveError::Numerical(
            "time limit reached before any feasible schedule".into(),
        )),
        None => Err(diagnose_infeasibility(problem, options)),
    }
}

/// Curtailment placement is often cost-indifferent: with a uniform price,
/// shedding a kWh at dawn or at dusk costs the same, and the search can
/// land on a plan that trims token amounts across half the horizon. Among
/// cost-equal plans, prefer the one that interrupts customers as late as
/// possible; feasibility then packs the shortfall into the few high-demand
/// segments around the evening peak. Keeps the incumbent's on/off pattern
/// fixed, caps dispatch cost at the pattern's LP optimum, and re-solves
/// with deferral as the objective. Returns None when the re-solve fails or
/// does not preserve cost.
fn defer_curtailment(
    problem: &DispatchProblem,
    incumbent: &Schedule,
    mc: f64,
) -> Option<Schedule> {
    let b = &problem.config.bess;
    let p_min = problem.config.diesel.p_min;
    let lossy = b.eta_charge * b.eta_discharge < 1.0 - 1e-12;
    let pin = |model: &mut DispatchLp| {
        for (t, dec) in incumbent.decisions.iter().enumerate() {
            let red = if dec.u_red { 1.0 } else { 0.0 };
            model.lp.set_col_bounds(DispatchLp::col(t, V_UR), red, red);
            if p_min > 0.0 {
                let (lo, hi) = if dec.diesel_power > 1e-9 {
                    (p_min, problem.config.diesel.p_max)
                } else {
                    (0.0, 0.0)
                };
                model.lp.set_col_bounds(DispatchLp::col(t, V_PDI), lo, hi);
            }
            if lossy {
                if dec.charge_power <= 1e-9 {
                    model.lp.set_col_bounds(DispatchLp::col(t, V_PC), 0.0, 0.0);
                }
                if dec.discharge_power <= 1e-9 {
                    model.lp.set_col_bounds(DispatchLp::col(t, V_PD), 0.0, 0.0);
                }
            }
        }
    };

    let mut fixed = DispatchLp::build(problem, mc, false);
    pin(&mut fixed);
    let iter_limit = 20_000 + 100 * fixed.lp.num_rows();
    if !matches!(fixed.lp.solve(iter_limit), SolveStatus::Optimal) {
        return None;
    }
    let cap = fixed.lp.objective() + 1e-9 * (1.0 + fixed.lp.objective().abs());

    let mut deferral = DispatchLp::build_with_cost_cap(problem, mc, false, Some(cap));
    pin(&mut deferral);
    if !matches!(deferral.lp.solve(iter_limit), SolveStatus::Optimal) {
        return None;
    }
    let raw: Vec<RawSeg> = (0..deferral.t_count).map(|t| deferral.raw(t)).collect();
    let schedule = assemble_schedule(problem, &raw, mc).ok()?;
    let tol = 1e-7 * (1.0 + incumbent.objective.abs());
    (schedule.objective <= incumbent.objective + tol).then_some(schedule)
}

fn diagnose_infeasibility(problem: &DispatchProblem, options: &SolveOptions) -> SolveError {
    let mut bb = BranchBound::new(problem, *options, true);
    if bb.search().is_err() {
        return SolveError::Numerical("infeasibility diagnosis failed".into());
    }
    let Some((_, _)) = bb.incumbent else {
        return SolveError::Numerical(
            "infeasible, and the elastic diagnosis found no relaxation".into(),
        );
    };
    let mut shortfall = Vec::new();
    let mut surplus = Vec::new();
    for t in 0..bb.model.t_count {
        let (pos, neg) = bb.model.slack_cols(t);
        if bb.model.lp.col_value(pos) > 1e-6 {
            shortfall.push(t + 1);
        }
        if bb.model.lp.col_value(neg) > 1e-6 {
            surplus.push(t + 1);
        }
    }
    if !shortfall.is_empty() {
        SolveError::PriorityShortfall {
            segments: shortfall,
        }
    } else if !surplus.is_empty() {
        SolveError::SurplusUnabsorbable { segments: surplus }
    } else {
        SolveError::Numerical("infeasible, but elastic relaxation shows no slack".into())
    }
}

/// Checks every dispatch constraint on a finished schedule. Returns an
/// empty list iff the schedule is feasible for `problem` within 1e-6.
pub fn validate_schedule(schedule: &Schedule, problem: &DispatchProblem) -> Vec<Violation> {
    let cfg = &problem.config;
    let b = &cfg.bess;
    let dt = cfg.time.segment_hours;
    let cap = b.fleet_capacity_kwh();
    let tol = VALIDATION_TOL;
    let mut out = Vec::new();

    let expected = problem.net_load.len();
    if schedule.decisions.len() != expected {
        out.push(Violation {
            constraint: "decision_count",
            segment: 0,
            magnitude: (schedule.decisions.len() as f64 - expected as f64).abs(),
        });
        return out;
    }

    fn check(
        out: &mut Vec<Violation>,
        tol: f64,
        constraint: &'static str,
        segment: usize,
        magnitude: f64,
    ) {
        if magnitude > tol {
            out.push(Violation {
                constraint,
                segment,
                magnitude,
            });
        }
    }

    let mut soc_prev = b.initial_soc();
    let (mut fuel, mut curtail, mut red) = (0.0, 0.0, 0.0);
    for (i, d) in schedule.decisions.iter().enumerate() {
        let seg = i + 1;
        let demand = problem.scenario.demand_total[i];
        let pv = problem.scenario.pv_generation[i];

        check(
            &mut out,
            tol,
            "power_balance",
            seg,
            (demand - d.curtailment - d.diesel_power - d.bess_power - pv).abs(),
        );
        let u_di = f64::from(d.u_diesel);
        check(
            &mut out,
            tol,
            "diesel_limits",
            seg,
            (cfg.diesel.p_min * u_di - d.diesel_power)
                .max(d.diesel_power - cfg.diesel.p_max * u_di),
        );
        check(&mut out, tol, "curtailment_bounds", seg, -d.curtailment);
        check(
            &mut out,
            tol,
            "curtailment_bounds",
            seg,
            d.curtailment - problem.essential_demand[i],
        );
        check(
            &mut out,
            tol,
            "soc_bounds",
            seg,
            (b.soc_abs_min - d.soc_end).max(d.soc_end - b.soc_abs_max),
        );
        let soc_step =
            (b.eta_charge * d.charge_power - d.discharge_power / b.eta_discharge) * dt / cap;
        check(
            &mut out,
            tol,
            "soc_recursion",
            seg,
            (d.soc_end - soc_prev - soc_step).abs(),
        );
        let overshoot = red_overshoot(d.soc_end, cfg);
        if d.u_red {
            check(&mut out, tol, "red_zone_flag", seg, -overshoot);
        } else {
            check(&mut out, tol, "red_zone_flag", seg, overshoot);
        }
        check(
            &mut out,
            tol,
            "served_power",
            seg,
            (d.total_served - (demand - d.curtailment)).abs(),
        );
        for v in d.invariant_violations(seg, b) {
            out.push(v);
        }

        soc_prev = d.soc_end;
        fuel += cfg.diesel.fuel_cost * d.diesel_power * dt;
        curtail += cfg.demand.curtail_cost * d.curtailment * dt;
        if d.u_red {
            red += b.red_zone_penalty;
        }
    }

    let c = &schedule.cost;
    let sum = c.battery_degradation + c.fuel + c.curtailment + c.red_zone;
    if (c.total - sum).abs() > 1e-9 {
        out.push(Violation {
            constraint: "cost_breakdown",
            segment: 0,
            magnitude: (c.total - sum).abs(),
        });
    }
    for (name, reported, recomputed) in [
        ("cost_fuel", c.fuel, fuel),
        ("cost_curtailment", c.curtailment, curtail),
        ("cost_red_zone", c.red_zone, red),
    ] {
        if (reported - recomputed).abs() > tol {
            out.push(Violation {
                constraint: name,
                segment: 0,
                magnitude: (reported - recomputed).abs(),
            });
        }
    }
    out
}

/// Exhaustive dynamic program over a power grid of step `resolution`, with
/// the end-of-segment SOC as state. Besides the fixed grid, each state also
/// considers the exact charge/discharge powers that land the SOC on a zone
/// or capacity boundary, since optimal schedules ride those boundaries at
/// powers between grid points. Ties in cost break toward less curtailment,
/// then less battery throughput, then less diesel energy. Certifies small
/// instances only; the guard rejects anything whose state space estimate
/// passes 1e8.
pub fn brute_force_oracle(
    problem: &DispatchProblem,
    resolution: f64,
) -> Result<Schedule, SolveError> {
    let cfg = &problem.config;
    let b = &cfg.bess;
    let dt = cfg.time.segment_hours;
    let cap = b.fleet_capacity_kwh();
    let t_count = problem.net_load.len();
    let mc = marginal_battery_cost(cfg);

    if !(resolution > 0.0) {
        return Err(SolveError::OracleTooLarge("resolution must be positive".into()));
    }
    if t_count > 6 {
        return Err(SolveError::OracleTooLarge(format!(
            "{t_count} segments exceed the 6-segment enumeration guard"
        )));
    }

    let grid_values = |max: f64| -> Vec<f64> {
        let mut v: Vec<f64> = (0..)
            .map(|k| k as f64 * resolution)
            .take_while(|p| *p <= max + 1e-9)
            .collect();
        if v.last().map_or(true, |&l| (l - max).abs() > 1e-9) {
            v.push(max);
        }
        v
    };
    let mut diesel_grid: Vec<f64> = grid_values(cfg.diesel.p_max)
        .into_iter()
        .filter(|&p| p < 1e-12 || p >= cfg.diesel.p_min - 1e-9)
        .collect();
    if cfg.diesel.p_min > 0.0
        && cfg.diesel.p_min <= cfg.diesel.p_max
        && !diesel_grid
            .iter()
            .any(|&p| (p - cfg.diesel.p_min).abs() < 1e-9)
    {
        diesel_grid.push(cfg.diesel.p_min);
        diesel_grid.sort_by(|a, b| a.partial_cmp(b).unwrap());
    }
    // Net BESS grid: negative = charge, positive = discharge.
    let mut bess_grid: Vec<f64> = grid_values(b.fleet_max_charge_kw())
        .into_iter()
        .map(|p| -p)
        .rev()
        .collect();
    bess_grid.extend(grid_values(b.fleet_max_discharge_kw()).into_iter().skip(1));

    let soc_states = ((b.soc_abs_max - b.soc_abs_min) * cap / (resolution * dt) + 2.0).ceil();
    let work = soc_states * diesel_grid.len() as f64 * bess_grid.len() as f64 * t_count as f64;
    if work > 1e8 {
        return Err(SolveError::OracleTooLarge(format!(
            "estimated {work:.2e} state transitions exceed the 1e8 guard"
        )));
    }

    const KEY_SCALE: f64 = 1e9;
    type Value = (f64, f64, f64, f64);
    #[derive(Clone, Copy)]
    struct Node {
        value: Value,
        soc: f64,
        parent: i64,
        action: RawSeg,
    }
    use std::collections::BTreeMap;

    let mut stages: Vec<BTreeMap<i64, Node>> = Vec::with_capacity(t_count + 1);
    let soc0 = b.initial_soc();
    let mut first = BTreeMap::new();
    first.insert(
        (soc0 * KEY_SCALE).round() as i64,
        Node {
            value: (0.0, 0.0, 0.0, 0.0),
            soc: soc0,
            parent: 0,
            action: RawSeg::default(),
        },
    );
    stages.push(first);

    let soc_targets = [
        b.soc_abs_min,
        b.soc_green_min,
        b.soc_green_max,
        b.soc_abs_max,
    ];
    let mut actions = Vec::new();
    for t in 0..t_count {
        let mut next: BTreeMap<i64, Node> = BTreeMap::new();
        let d_e = problem.essential_demand[t];
        let net = problem.net_load[t];
        for (&key, node) in &stages[t] {
            actions.clear();
            actions.extend_from_slice(&bess_grid);
            for target in soc_targets {
                let delta = target - node.soc;
                let p = if delta > 0.0 {
                    -delta * cap / (b.eta_charge * dt)
                } else {
                    -delta * cap * b.eta_discharge / dt
                };
                if p >= -b.fleet_max_charge_kw() - 1e-12
                    && p <= b.fleet_max_discharge_kw() + 1e-12
                {
                    actions.push(p.clamp(-b.fleet_max_charge_kw(), b.fleet_max_discharge_kw()));
                }
            }
            for &p_di in &diesel_grid {
                for &bess in &actions {
                    let (p_c, p_d) = ((-bess).max(0.0), bess.max(0.0));
                    let soc =
                        node.soc + (b.eta_charge * p_c - p_d / b.eta_discharge) * dt / cap;
                    if soc < b.soc_abs_min - 1e-12 || soc > b.soc_abs_max + 1e-12 {
                        continue;
                    }
                    let d_ec = net - p_di - bess;
                    if d_ec < -1e-9 || d_ec > d_e + 1e-9 {
                        continue;
                    }
                    let d_ec = d_ec.clamp(0.0, d_e);
                    let red = red_overshoot(soc, cfg) > RED_TOL;
                    let cost = node.value.0
                        + cfg.diesel.fuel_cost * p_di * dt
                        + mc * (p_c + p_d)
                        + cfg.demand.curtail_cost * d_ec * dt
                        + if red { b.red_zone_penalty } else { 0.0 };
                    let value = (
                        cost,
                        node.value.1 + d_ec * dt,
                        node.value.2 + (p_c + p_d) * dt,
                        node.value.3 + p_di * dt,
                    );
                    let new_key = (soc * KEY_SCALE).round() as i64;
                    let candidate = Node {
                        value,
                        soc,
                        parent: key,
                        action: RawSeg { p_di, p_c, p_d, d_ec },
                    };
                    match next.get(&new_key) {
                        Some(existing) if existing.value <= value => {}
                        _ => {
                            next.insert(new_key, candidate);
                        }
                    }
                }
            }
        }
        if next.is_empty() {
            return Err(diagnose_infeasibility(problem, &SolveOptions::default()));
        }
        stages.push(next);
    }

    let (mut best_key, mut best) = (0i64, None::<Value>);
    for (&key, node) in &stages[t_count] {
        if best.map_or(true, |v| node.value < v) {
            best = Some(node.value);
            best_key = key;
        }
    }
    let mut raw = vec![RawSeg::default(); t_count];
    let mut key = best_key;
    for t in (0..t_count).rev() {
        let node = &stages[t + 1][&key];
        raw[t] = node.action;
        key = node.parent;
    }
    assemble_schedule(problem, &raw, mc)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::TimeGrid;

    fn scenario(demand: &[f64], pv: &[f64]) -> Scenario {
        Scenario {
            id: "test".into(),
            demand_total: demand.to_vec(),
            pv_generation: pv.to_vec(),
        }
    }

    fn config_with_segments(n: usize) -> MicrogridConfig {
        let mut cfg = MicrogridConfig::default();
        cfg.time = TimeGrid {
            segment_count: n,
            segment_hours: 0.25,
        };
        cfg
    }

    fn assert_valid(schedule: &Schedule, problem: &DispatchProblem) {
        let violations = validate_schedule(schedule, problem);
        assert!(violations.is_empty(), "violations: {violations:?}");
    }

    #[test]
    fn net_load_subtracts_pv() {
        let cfg = config_with_segments(1);
        let p = build_problem(&cfg, &scenario(&[15.0], &[3.0])).unwrap();
        assert_eq!(p.net_load, vec![12.0]);
        assert!((p.priority_demand[0] - 5.0).abs() < 1e-12);
        assert!((p.essential_demand[0] - 10.0).abs() < 1e-12);
    }

    #[test]
    fn pv_surplus_gives_negative_net_load() {
        let cfg = config_with_segments(1);
        let p = build_problem(&cfg, &scenario(&[2.0], &[10.0])).unwrap();
        assert_eq!(p.net_load, vec![-8.0]);
    }

    #[test]
    fn empty_scenario_rejected() {
        let cfg = config_with_segments(1);
        let err = build_problem(&cfg, &scenario(&[], &[])).unwrap_err();
        assert!(matches!(
            err,
            SolveError::Domain(DomainError::ScenarioLength { .. })
        ));
    }

    #[test]
    fn diesel_only_when_battery_is_dearer() {
        // Tiny rated life makes marginal battery cost ~0.133 $/kW-segment,
        // above diesel's 0.10, so a 3 kW deficit runs on diesel alone.
        let mut cfg = config_with_segments(1);
        cfg.bess.rated_max_cycles = 5.0;
        let p = build_problem(&cfg, &scenario(&[5.0], &[2.0])).unwrap();
        let s = solve_day_ahead(&p, &SolveOptions::default()).unwrap();
        assert!((s.decisions[0].diesel_power - 3.0).abs() < 1e-7);
        assert!(s.decisions[0].discharge_power.abs() < 1e-7);
        assert!(s.decisions[0].curtailment.abs() < 1e-9);
        assert!((s.cost.total - 0.30).abs() < 1e-7, "cost {}", s.cost.total);
        assert_valid(&s, &p);

        let oracle = brute_force_oracle(&p, 0.25).unwrap();
        assert!(s.objective <= oracle.objective + 1e-6);
    }

    #[test]
    fn zero_demand_yields_zero_cost() {
        let cfg = config_with_segments(1);
        let p = build_problem(&cfg, &scenario(&[0.0], &[0.0])).unwrap();
        let s = solve_day_ahead(&p, &SolveOptions::default()).unwrap();
        let d = &s.decisions[0];
        assert_eq!(
            (d.diesel_power, d.bess_power, d.curtailment),
            (0.0, 0.0, 0.0)
        );
        assert_eq!(s.cost.total, 0.0);
        assert_valid(&s, &p);
    }

    #[test]
    fn deficit_beyond_supply_is_curtailed() {
        let cfg = config_with_segments(1);
        let p = build_problem(&cfg, &scenario(&[200.0], &[0.0])).unwrap();
        let s = solve_day_ahead(&p, &SolveOptions::default()).unwrap();
        let d = &s.decisions[0];
        assert!((d.curtailment - 96.25).abs() < 1e-6, "{}", d.curtailment);
        assert!((d.diesel_power - 3.75).abs() < 1e-7);
        assert!((d.discharge_power - 100.0).abs() < 1e-7);
        // Priority demand (200/3 kW) stays fully served.
        assert!(d.total_served >= 200.0 / 3.0);
        assert_valid(&s, &p);
    }

    #[test]
    fn charges_surplus_then_discharges() {
        let mut cfg = config_with_segments(2);
        cfg.bess.unit_count = 2;
        let p = build_problem(&cfg, &scenario(&[0.0, 10.0], &[10.0, 0.0])).unwrap();
        let s = solve_day_ahead(&p, &SolveOptions::default()).unwrap();
        assert!((s.decisions[0].charge_power - 10.0).abs() < 1e-7);
        assert!((s.decisions[1].discharge_power - 10.0).abs() < 1e-7);
        assert!(s.decisions[1].curtailment.abs() < 1e-9);
        assert_valid(&s, &p);

        let oracle = brute_force_oracle(&p, 0.25).unwrap();
        assert!(s.objective <= oracle.objective + 1e-6);
    }

    #[test]
    fn priority_shortfall_names_segments() {
        let cfg = config_with_segments(2);
        // Priority demand 320/1.5 > 103.75 kW max supply in segment 2.
        let p = build_problem(&cfg, &scenario(&[10.0, 320.0], &[0.0, 0.0])).unwrap();
        let err = solve_day_ahead(&p, &SolveOptions::default()).unwrap_err();
        match err {
            SolveError::PriorityShortfall { segments } => assert_eq!(segments, vec![2]),
            other => panic!("expected shortfall, got {other}"),
        }
    }

    #[test]
    fn unabsorbable_surplus_names_segments() {
        let cfg = config_with_segments(1);
        let p = build_problem(&cfg, &scenario(&[0.0], &[200.0])).unwrap();
        let err = solve_day_ahead(&p, &SolveOptions::default()).unwrap_err();
        match err {
            SolveError::SurplusUnabsorbable { segments } => assert_eq!(segments, vec![1]),
            other => panic!("expected surplus error, got {other}"),
        }
    }

    #[test]
    fn dips_into_red_zone_when_cheaper_than_curtailing() {
        let mut cfg = config_with_segments(6);
        cfg.bess.unit_count = 2;
        // 2 units: 30 kWh fleet, 10 kW limits, start at 2/3 SOC.
        let demand = [16.0; 6];
        let p = build_problem(&cfg, &scenario(&demand, &[0.0; 6])).unwrap();
        let s = solve_day_ahead(&p, &SolveOptions::default()).unwrap();
        assert_valid(&s, &p);
        let last = s.decisions.last().unwrap();
        assert!(last.u_red, "expected final segment below green zone");
        assert!(s.cost.red_zone > 0.0);

        let oracle = brute_force_oracle(&p, 0.25).unwrap();
        assert!(
            s.objective <= oracle.objective + 1e-6,
            "solver {} vs oracle {}",
            s.objective,
            oracle.objective
        );
    }

    #[test]
    fn unavoidable_curtailment_lands_on_latest_feasible_segments() {
        // 3 kWh of demand against 1.6 kWh of stored energy and no diesel:
        // 1.4 kWh must be shed. With the red zone disabled every placement
        // costs the same, so the tie-break should push the shedding to the
        // end of the horizon, capped by the curtailable share (2/3 of 4 kW).
        let mut cfg = config_with_segments(3);
        cfg.bess.unit_count = 1;
        cfg.bess.capacity_per_unit = 2.0;
        cfg.bess.initial_energy_per_unit = 1.6;
        cfg.bess.max_charge_per_unit = 8.0;
        cfg.bess.max_discharge_per_unit = 8.0;
        cfg.bess.soc_green_min = 0.0;
        cfg.bess.soc_green_max = 1.0;
        cfg.diesel.p_max = 0.0;
        let p = build_problem(&cfg, &scenario(&[4.0, 4.0, 4.0], &[0.0; 3])).unwrap();
        let s = solve_day_ahead(&p, &SolveOptions::default()).unwrap();
        assert_valid(&s, &p);

        let curtail: Vec<f64> = s.decisions.iter().map(|d| d.curtailment).collect();
        let cap = 8.0 / 3.0;
        assert!((curtail[0] - (5.6 - 2.0 * cap)).abs() < 1e-6, "{curtail:?}");
        assert!((curtail[1] - cap).abs() < 1e-6, "{curtail:?}");
        assert!((curtail[2] - cap).abs() < 1e-6, "{curtail:?}");
        assert!((s.curtailed_kwh(&cfg.time) - 1.4).abs() < 1e-6);
    }

    #[test]
    fn diesel_minimum_output_forces_on_off_choice() {
        let mut cfg = config_with_segments(1);
        cfg.bess.unit_count = 1;
        cfg.bess.capacity_per_unit = 2.0;
        cfg.bess.initial_energy_per_unit = 1.0;
        cfg.bess.max_charge_per_unit = 1.0;
        cfg.bess.max_discharge_per_unit = 1.0;
        cfg.bess.soc_green_min = 0.0;
        cfg.bess.soc_green_max = 1.0;
        cfg.diesel.p_min = 2.0;
        let p = build_problem(&cfg, &scenario(&[1.5], &[0.0])).unwrap();
        let s = solve_day_ahead(&p, &SolveOptions::default()).unwrap();
        assert_valid(&s, &p);
        let d = &s.decisions[0];
        // Running at the 2 kW floor and absorbing the excess beats
        // discharging plus curtailing 0.5 kW.
        assert!((d.diesel_power - 2.0).abs() < 1e-7, "{}", d.diesel_power);
        assert!((d.charge_power - 0.5).abs() < 1e-7);
        assert!(d.curtailment.abs() < 1e-9);

        let oracle = brute_force_oracle(&p, 0.25).unwrap();
        assert!(s.objective <= oracle.objective + 1e-6);
    }

    #[test]
    fn oracle_guard_rejects_long_horizons() {
        let cfg = config_with_segments(7);
        let p = build_problem(&cfg, &scenario(&[1.0; 7], &[0.0; 7])).unwrap();
        assert!(matches!(
            brute_force_oracle(&p, 0.25),
            Err(SolveError::OracleTooLarge(_))
        ));
    }

    #[test]
    fn oracle_prefers_less_throughput_then_less_diesel_on_ties() {
        let mut cfg = config_with_segments(1);
        cfg.bess.unit_count = 1;
        cfg.bess.capacity_per_unit = 4.0;
        cfg.bess.initial_energy_per_unit = 2.0;
        cfg.bess.soc_green_min = 0.0;
        cfg.bess.soc_green_max = 1.0;
        cfg.bess.capital_cost = 0.0;
        cfg.diesel.fuel_cost = 0.0;
        // Diesel and battery both cost nothing: the tie breaks first on
        // curtailment (zero), then on throughput, favoring diesel supply.
        let p = build_problem(&cfg, &scenario(&[2.0], &[0.0])).unwrap();
        let s = brute_force_oracle(&p, 0.25).unwrap();
        let d = &s.decisions[0];
        assert!((d.diesel_power - 2.0).abs() < 1e-12, "{}", d.diesel_power);
        assert_eq!(d.discharge_power, 0.0);
        assert_eq!(d.curtailment, 0.0);
    }

    #[test]
    fn validator_reports_injected_faults() {
        let cfg = config_with_segments(2);
        let p = build_problem(&cfg, &scenario(&[10.0, 12.0], &[1.0, 0.0])).unwrap();
        let mut s = solve_day_ahead(&p, &SolveOptions::default()).unwrap();
        assert_valid(&s, &p);

        let mut broken = s.clone();
        broken.decisions[1].u_charge = true;
        broken.decisions[1].u_discharge = true;
        let v = validate_schedule(&broken, &p);
        assert!(
            v.iter()
                .any(|v| v.constraint == "charge_discharge_exclusivity" && v.segment == 2),
            "{v:?}"
        );

        s.decisions[0].curtailment += 0.5;
        let v = validate_schedule(&s, &p);
        let balance = v
            .iter()
            .find(|v| v.constraint == "power_balance" && v.segment == 1)
            .expect("balance violation");
        assert!((balance.magnitude - 0.5).abs() < 1e-9);
    }

    #[test]
    fn higher_curtailment_price_weakly_reduces_curtailment() {
        // Tiny rated life prices battery wear above diesel, so cheap
        // curtailment outcompetes both until its price rises past them.
        let mut curtailed = Vec::new();
        for price in [0.05, 0.45, 5.0] {
            let mut cfg = config_with_segments(2);
            cfg.demand.curtail_cost = price;
            cfg.bess.rated_max_cycles = 5.0;
            let p = build_problem(&cfg, &scenario(&[40.0, 40.0], &[0.0, 0.0])).unwrap();
            let s = solve_day_ahead(&p, &SolveOptions::default()).unwrap();
            assert_valid(&s, &p);
            curtailed.push(s.curtailed_kwh(&cfg.time));
        }
        assert!(curtailed[0] >= curtailed[1] - 1e-9);
        assert!(curtailed[1] >= curtailed[2] - 1e-9);
        assert!(curtailed[0] > curtailed[2] + 1.0, "{curtailed:?}");
    }

    #[test]
    fn doubling_demand_without_pv_weakly_raises_cost() {
        let base = config_with_segments(3);
        let p1 = build_problem(&base, &scenario(&[10.0, 20.0, 15.0], &[5.0, 3.0, 0.0])).unwrap();
        let s1 = solve_day_ahead(&p1, &SolveOptions::default()).unwrap();
        let p2 = build_problem(&base, &scenario(&[20.0, 40.0, 30.0], &[0.0, 0.0, 0.0])).unwrap();
        let s2 = solve_day_ahead(&p2, &SolveOptions::default()).unwrap();
        assert!(s2.objective >= s1.objective - 1e-9);
    }

    // Small instances with all powers, capacities, and zone boundaries on a
    // 0.25 kW lattice, so the boundary-augmented oracle is exact.
    fn random_lattice_problem(seed: u64) -> DispatchProblem {
        let mut state = seed.wrapping_mul(0x9E3779B97F4A7C15).max(1);
        let mut next = move || {
            state ^= state << 13;
            state ^= state >> 7;
            state ^= state << 17;
            state
        };
        let pick = |r: u64, n: u64| (r % n) as f64;

        let t_count = 1 + (next() % 4) as usize;
        let mut cfg = config_with_segments(t_count);
        cfg.bess.unit_count = 1;
        cfg.bess.capacity_per_unit = 2.0 + pick(next(), 2);
        cfg.bess.initial_energy_per_unit = 0.5 * (1.0 + pick(next(), 3));
        cfg.bess.max_charge_per_unit = 1.0 + pick(next(), 2);
        cfg.bess.max_discharge_per_unit = 1.0 + pick(next(), 2);
        let zones = [(0.0, 0.25, 0.75, 1.0), (0.0, 0.5, 1.0, 1.0), (0.25, 0.5, 0.75, 1.0)];
        let (amin, gmin, gmax, amax) = zones[(next() % 3) as usize];
        cfg.bess.soc_abs_min = amin;
        cfg.bess.soc_green_min = gmin;
        cfg.bess.soc_green_max = gmax;
        cfg.bess.soc_abs_max = amax;
        cfg.bess.red_zone_penalty = 0.25 * pick(next(), 4);
        cfg.bess.rated_max_cycles = [300.0, 3000.0, 30.0][(next() % 3) as usize];
        if next() % 4 == 0 {
            cfg.bess.eta_charge = 0.5;
            cfg.bess.eta_discharge = 0.5;
        }
        cfg.diesel.p_max = 1.5 + 0.5 * pick(next(), 3);
        cfg.diesel.p_min = if next() % 3 == 0 { 0.5 } else { 0.0 };
        cfg.diesel.fuel_cost = 0.2 + 0.2 * pick(next(), 3);
        cfg.demand.curtail_cost = [0.1, 2.0, 10.0][(next() % 3) as usize];
        // Keep initial SOC inside the absolute band.
        let cap = cfg.bess.capacity_per_unit;
        cfg.bess.initial_energy_per_unit = cfg
            .bess
            .initial_energy_per_unit
            .clamp(amin * cap, amax * cap);
        cfg.validate().expect("generated config valid");

        let demand: Vec<f64> = (0..t_count).map(|_| 0.75 * pick(next(), 8)).collect();
        let pv: Vec<f64> = (0..t_count).map(|_| 0.25 * pick(next(), 12)).collect();
        let s = Scenario {
            id: format!("r{seed}"),
            demand_total: demand,
            pv_generation: pv,
        };
        build_problem(&cfg, &s).unwrap()
    }

    #[test]
    fn solver_matches_oracle_on_random_small_instances() {
        let options = SolveOptions {
            optimality_gap: 0.0,
            ..SolveOptions::default()
        };
        let mut solved = 0;
        for seed in 0..40 {
            let p = random_lattice_problem(seed);
            let got = solve_day_ahead(&p, &options);
            let want = brute_force_oracle(&p, options.oracle_resolution_kw);
            match (got, want) {
                (Ok(s), Ok(o)) => {
                    assert!(
                        (s.objective - o.objective).abs() <= 1e-6,
                        "seed {seed}: solver {} oracle {}",
                        s.objective,
                        o.objective
                    );
                    assert_valid(&s, &p);
                    assert_valid(&o, &p);
                    solved += 1;
                }
                (Err(_), Err(_)) => {}
                (got, want) => panic!("seed {seed}: solver {got:?} oracle {want:?} disagree"),
            }
        }
        assert!(solved >= 20, "only {solved} feasible instances");
    }

    #[test]
    fn linearized_battery_cost_tracks_exact_value() {
        // A full day of heavy cycling: the day-linearized battery term must
        // stay within 1% of the exact capacity-loss cost.
        let cfg = MicrogridConfig::default();
        let mut demand = vec![0.0; 96];
        let mut pv = vec![0.0; 96];
        for t in 0..96 {
            if t < 24 {
                demand[t] = 20.0;
            } else if t < 56 {
                demand[t] = 20.0;
                pv[t] = 45.0;
            } else {
                demand[t] = 28.0;
            }
        }
        let p = build_problem(&cfg, &scenario(&demand, &pv)).unwrap();
        let s = solve_day_ahead(&p, &SolveOptions::default()).unwrap();
        assert_valid(&s, &p);
        let linear = s.objective - s.cost.fuel - s.cost.curtailment - s.cost.red_zone;
        assert!(linear > 0.0, "expected battery throughput");
        let exact = s.cost.battery_degradation;
        assert!(
            (linear - exact).abs() <= 0.01 * exact.max(1e-9),
            "linearized {linear} vs exact {exact}"
        );
    }
}
