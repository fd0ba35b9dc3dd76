//! Scenario CSV ingestion, deterministic synthetic scenario generation,
//! and report emission.
//!
//! The generator is fully specified so other implementations can reproduce
//! a dataset byte-for-byte: scenario k uses a ChaCha12 stream keyed by the
//! 64-bit master seed (bytes 0..8, little endian), the scenario index
//! (bytes 8..16), and the ASCII tag "MGRIDSv1" (bytes 16..24; bytes 24..32
//! zero). From that stream it draws one 64-bit word for the heavy-tail
//! Bernoulli, then two words per demand segment, then two per PV segment.
//! Words map to (0,1) via ((x >> 11) + 0.5) * 2^-53 and to normals via
//! Box-Muller (z = sqrt(-2 ln u1) * cos(2 pi u2)). Multipliers are
//! mean-corrected lognormals exp(sigma z - sigma^2/2) with
//! sigma = sqrt(ln(1 + spread^2)); heavy scenarios scale demand by 1.5;
//! PV clips at 1.1x its base profile; everything rounds to 1e-6 kW.

use std::fmt::Write as _;
use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use rand_chacha::ChaCha12Rng;
use rand_core::{RngCore, SeedableRng};
use thiserror::Error;

use crate::domain::{Scenario, Schedule, TimeGrid};
use crate::risk::RiskReport;

const STREAM_TAG: &[u8; 8] = b"MGRIDSv1";
pub const PRNG_ID: &str = "chacha12/MGRIDSv1";
pub const DEFAULT_SCENARIO_COUNT: usize = 187;
pub const DEFAULT_DEMAND_SPREAD: f64 = 0.25;
pub const DEFAULT_PV_SPREAD: f64 = 0.20;
pub const DEFAULT_HEAVY_TAIL_SHARE: f64 = 0.15;

#[derive(Debug, Error)]
pub enum IoError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{path}:{line}: {msg}")]
    Malformed {
        path: PathBuf,
        line: usize,
        msg: String,
    },
    #[error("invalid generator spec: {0}")]
    InvalidSpec(String),
}

impl IoError {
    fn io(path: &Path, source: std::io::Error) -> Self {
        Self::Io {
            path: path.to_path_buf(),
            source,
        }
    }

    fn malformed(path: &Path, line: usize, msg: impl Into<String>) -> Self {
        Self::Malformed {
            path: path.to_path_buf(),
            line,
            msg: msg.into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum ScenarioSource {
    File(PathBuf),
    Synthetic { seed: u64 },
}

#[derive(Debug, Clone)]
pub struct ScenarioSet {
    pub scenarios: Vec<Scenario>,
    pub source: ScenarioSource,
    pub grid: TimeGrid,
}

#[derive(Debug, Clone)]
pub struct GeneratorSpec {
    pub seed: u64,
    pub scenario_count: usize,
    pub base_demand_profile: Vec<f64>,
    pub base_pv_profile: Vec<f64>,
    pub demand_spread: f64,
    pub pv_spread: f64,
    pub heavy_tail_share: f64,
}

impl GeneratorSpec {
    pub fn new(seed: u64, base_demand_profile: Vec<f64>, base_pv_profile: Vec<f64>) -> Self {
        Self {
            seed,
            scenario_count: DEFAULT_SCENARIO_COUNT,
            base_demand_profile,
            base_pv_profile,
            demand_spread: DEFAULT_DEMAND_SPREAD,
            pv_spread: DEFAULT_PV_SPREAD,
            heavy_tail_share: DEFAULT_HEAVY_TAIL_SHARE,
        }
    }

    fn validate(&self, grid: &TimeGrid) -> Result<(), IoError> {
        if self.scenario_count == 0 {
            return Err(IoError::InvalidSpec("scenario_count must be positive".into()));
        }
        for (name, profile) in [
            ("base_demand_profile", &self.base_demand_profile),
            ("base_pv_profile", &self.base_pv_profile),
        ] {
            if profile.len() != grid.segment_count {
                return Err(IoError::InvalidSpec(format!(
                    "{name} has {} points, grid has {} segments",
                    profile.len(),
                    grid.segment_count
                )));
            }
            if profile.iter().any(|v| !v.is_finite() || *v < 0.0) {
                return Err(IoError::InvalidSpec(format!(
                    "{name} must be finite and nonnegative"
                )));
            }
        }
        if self.demand_spread < 0.0 || self.pv_spread < 0.0 {
            return Err(IoError::InvalidSpec("spreads must be nonnegative".into()));
        }
        if !(0.0..=1.0).contains(&self.heavy_tail_share) {
            return Err(IoError::InvalidSpec(
                "heavy_tail_share must lie in [0, 1]".into(),
            ));
        }
        Ok(())
    }
}

fn scenario_rng(seed: u64, index: u64) -> ChaCha12Rng {
    let mut key = [0u8; 32];
    key[0..8].copy_from_slice(&seed.to_le_bytes());
    key[8..16].copy_from_slice(&index.to_le_bytes());
    key[16..24].copy_from_slice(STREAM_TAG);
    ChaCha12Rng::from_seed(key)
}

fn unit(x: u64) -> f64 {
    ((x >> 11) as f64 + 0.5) * 2f64.powi(-53)
}

fn normal(rng: &mut ChaCha12Rng) -> f64 {
    let u1 = unit(rng.next_u64());
    let u2 = unit(rng.next_u64());
    (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
}

fn lognormal_sigma(spread: f64) -> f64 {
    (1.0 + spread * spread).ln().sqrt()
}

fn round6(x: f64) -> f64 {
    (x * 1e6).round() / 1e6
}

fn scenario_id(index: usize, count: usize) -> String {
    let width = count.to_string().len().max(3);
    format!("scn-{:0width$}", index + 1)
}

pub fn generate_scenarios(spec: &GeneratorSpec, grid: &TimeGrid) -> Result<ScenarioSet, IoError> {
    spec.validate(grid)?;
    let sigma_d = lognormal_sigma(spec.demand_spread);
    let sigma_p = lognormal_sigma(spec.pv_spread);
    let mut scenarios = Vec::with_capacity(spec.scenario_count);
    for k in 0..spec.scenario_count {
        let mut rng = scenario_rng(spec.seed, k as u64);
        let heavy = unit(rng.next_u64()) < spec.heavy_tail_share;
        let demand_scale = if heavy { 1.5 } else { 1.0 };
        let demand_total: Vec<f64> = spec
            .base_demand_profile
            .iter()
            .map(|base| {
                let mult = (sigma_d * normal(&mut rng) - sigma_d * sigma_d / 2.0).exp();
                round6(base * mult * demand_scale)
            })
            .collect();
        let pv_generation: Vec<f64> = spec
            .base_pv_profile
            .iter()
            .map(|base| {
                let mult = (sigma_p * normal(&mut rng) - sigma_p * sigma_p / 2.0).exp();
                round6((base * mult).min(1.1 * base))
            })
            .collect();
        scenarios.push(Scenario {
            id: scenario_id(k, spec.scenario_count),
            demand_total,
            pv_generation,
        });
    }
    Ok(ScenarioSet {
        scenarios,
        source: ScenarioSource::Synthetic { seed: spec.seed },
        grid: *grid,
    })
}

fn scenario_header(segment_count: usize) -> String {
    let mut h = String::from("scenario_id,kind");
    for s in 1..=segment_count {
        let _ = write!(h, ",s{s:03}");
    }
    h
}

pub fn write_scenarios(set: &ScenarioSet, path: &Path) -> Result<(), IoError> {
    let mut out = String::new();
    if let ScenarioSource::Synthetic { seed } = &set.source {
        let _ = writeln!(
            out,
            "# synthetic scenario set; prng={PRNG_ID}; seed={seed}; count={}",
            set.scenarios.len()
        );
    }
    let _ = writeln!(out, "{}", scenario_header(set.grid.segment_count));
    for s in &set.scenarios {
        for (kind, values) in [("demand_kw", &s.demand_total), ("pv_kw", &s.pv_generation)] {
            let _ = write!(out, "{},{kind}", s.id);
            for v in values {
                let _ = write!(out, ",{v:.6}");
            }
            out.push('\n');
        }
    }
    fs::write(path, out).map_err(|e| IoError::io(path, e))
}

pub fn read_scenarios(path: &Path, grid: &TimeGrid) -> Result<ScenarioSet, IoError> {
    let text = fs::read_to_string(path).map_err(|e| IoError::io(path, e))?;
    let mut order: Vec<String> = Vec::new();
    let mut demand: std::collections::HashMap<String, Vec<f64>> = Default::default();
    let mut pv: std::collections::HashMap<String, Vec<f64>> = Default::default();
    let mut saw_header = false;
    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        if !saw_header {
            if !line.starts_with("scenario_id,kind") {
                return Err(IoError::malformed(
                    path,
                    line_no,
                    "expected header starting with 'scenario_id,kind'",
                ));
            }
            saw_header = true;
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() < 2 {
            return Err(IoError::malformed(path, line_no, "expected at least 2 fields"));
        }
        let id = fields[0].to_string();
        let kind = fields[1];
        let values = &fields[2..];
        if values.len() != grid.segment_count {
            return Err(IoError::malformed(
                path,
                line_no,
                format!(
                    "scenario {id}: {} values, grid has {} segments",
                    values.len(),
                    grid.segment_count
                ),
            ));
        }
        let mut parsed = Vec::with_capacity(values.len());
        for (col, v) in values.iter().enumerate() {
            let x: f64 = v.trim().parse().map_err(|_| {
                IoError::malformed(
                    path,
                    line_no,
                    format!("scenario {id}: column {}: invalid number {v:?}", col + 3),
                )
            })?;
            if !x.is_finite() || x < 0.0 {
                return Err(IoError::malformed(
                    path,
                    line_no,
                    format!("scenario {id}: column {}: negative or non-finite value {x}", col + 3),
                ));
            }
            parsed.push(x);
        }
        let bucket = match kind {
            "demand_kw" => &mut demand,
            "pv_kw" => &mut pv,
            other => {
                return Err(IoError::malformed(
                    path,
                    line_no,
                    format!("unknown kind {other:?} (expected demand_kw or pv_kw)"),
                ))
            }
        };
        if bucket.insert(id.clone(), parsed).is_some() {
            return Err(IoError::malformed(
                path,
                line_no,
                format!("duplicate {kind} row for scenario {id}"),
            ));
        }
        if !order.contains(&id) {
            order.push(id);
        }
    }
    if !saw_header {
        return Err(IoError::malformed(path, 1, "missing header row"));
    }
    let mut scenarios = Vec::with_capacity(order.len());
    for id in order {
        let (Some(d), Some(p)) = (demand.remove(&id), pv.remove(&id)) else {
            return Err(IoError::malformed(
                path,
                0,
                format!("scenario {id}: needs both demand_kw and pv_kw rows"),
            ));
        };
        scenarios.push(Scenario {
            id,
            demand_total: d,
            pv_generation: p,
        });
    }
    if scenarios.is_empty() {
        return Err(IoError::malformed(path, 0, "no scenarios found"));
    }
    Ok(ScenarioSet {
        scenarios,
        source: ScenarioSource::File(path.to_path_buf()),
        grid: *grid,
    })
}

/// Base diurnal profiles for the generator: `segment,demand_kw,pv_kw`.
pub fn read_base_profiles(path: &Path, grid: &TimeGrid) -> Result<(Vec<f64>, Vec<f64>), IoError> {
    let text = fs::read_to_string(path).map_err(|e| IoError::io(path, e))?;
    let mut demand = Vec::with_capacity(grid.segment_count);
    let mut pv = Vec::with_capacity(grid.segment_count);
    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') || line.starts_with("segment,") {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 3 {
            return Err(IoError::malformed(path, line_no, "expected 3 fields"));
        }
        let seg: usize = fields[0].trim().parse().map_err(|_| {
            IoError::malformed(path, line_no, format!("invalid segment {:?}", fields[0]))
        })?;
        if seg != demand.len() + 1 {
            return Err(IoError::malformed(
                path,
                line_no,
                format!("expected segment {}, found {seg}", demand.len() + 1),
            ));
        }
        for (field, target) in [(fields[1], &mut demand), (fields[2], &mut pv)] {
            let x: f64 = field.trim().parse().map_err(|_| {
                IoError::malformed(path, line_no, format!("invalid number {field:?}"))
            })?;
            target.push(x);
        }
    }
    if demand.len() != grid.segment_count {
        return Err(IoError::malformed(
            path,
            0,
            format!(
                "{} profile rows, grid has {} segments",
                demand.len(),
                grid.segment_count
            ),
        ));
    }
    Ok((demand, pv))
}

/// One parsed data row of a schedule CSV.
#[derive(Debug, Clone, PartialEq)]
pub struct ScheduleRow {
    pub segment: usize,
    pub diesel_kw: f64,
    pub bess_kw: f64,
    pub charge_kw: f64,
    pub discharge_kw: f64,
    pub curtail_kw: f64,
    pub soc_frac: f64,
    pub u_c: bool,
    pub u_d: bool,
    pub u_di: bool,
    pub u_r: bool,
    pub cost_usd: f64,
}

pub const SCHEDULE_HEADER: &str =
    "segment,diesel_kw,bess_kw,charge_kw,discharge_kw,curtail_kw,soc_frac,u_c,u_d,u_di,u_r,cost_usd";

/// Writes a schedule with one row per segment; `segment_costs` must carry
/// the per-segment objective contributions (their sum is the schedule
/// objective).
pub fn write_schedule_csv(
    schedule: &Schedule,
    segment_costs: &[f64],
    path: &Path,
) -> Result<(), IoError> {
    assert_eq!(schedule.decisions.len(), segment_costs.len());
    let mut out = String::from(SCHEDULE_HEADER);
    out.push('\n');
    for (i, d) in schedule.decisions.iter().enumerate() {
        let _ = writeln!(
            out,
            "{},{:.9},{:.9},{:.9},{:.9},{:.9},{:.9},{},{},{},{},{:.9}",
            i + 1,
            d.diesel_power,
            d.bess_power,
            d.charge_power,
            d.discharge_power,
            d.curtailment,
            d.soc_end,
            u8::from(d.u_charge),
            u8::from(d.u_discharge),
            u8::from(d.u_diesel),
            u8::from(d.u_red),
            segment_costs[i],
        );
    }
    fs::write(path, out).map_err(|e| IoError::io(path, e))
}

pub fn read_schedule_csv(path: &Path) -> Result<Vec<ScheduleRow>, IoError> {
    let text = fs::read_to_string(path).map_err(|e| IoError::io(path, e))?;
    let mut rows = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') || line.starts_with("segment,") {
            continue;
        }
        let f: Vec<&str> = line.split(',').collect();
        if f.len() != 12 {
            return Err(IoError::malformed(
                path,
                line_no,
                format!("expected 12 fields, found {}", f.len()),
            ));
        }
        let num = |s: &str, what: &str| -> Result<f64, IoError> {
            s.trim()
                .parse()
                .map_err(|_| IoError::malformed(path, line_no, format!("invalid {what}: {s:?}")))
        };
        let flag = |s: &str, what: &str| -> Result<bool, IoError> {
            match s.trim() {
                "0" => Ok(false),
                "1" => Ok(true),
                other => Err(IoError::malformed(
                    path,
                    line_no,
                    format!("invalid {what}: {other:?} (expected 0 or 1)"),
                )),
            }
        };
        let segment = num(f[0], "segment")? as usize;
        if segment != rows.len() + 1 {
            return Err(IoError::malformed(
                path,
                line_no,
                format!("expected segment {}, found {segment}", rows.len() + 1),
            ));
        }
        rows.push(ScheduleRow {
            segment,
            diesel_kw: num(f[1], "diesel_kw")?,
            bess_kw: num(f[2], "bess_kw")?,
            charge_kw: num(f[3], "charge_kw")?,
            discharge_kw: num(f[4], "discharge_kw")?,
            curtail_kw: num(f[5], "curtail_kw")?,
            soc_frac: num(f[6], "soc_frac")?,
            u_c: flag(f[7], "u_c")?,
            u_d: flag(f[8], "u_d")?,
            u_di: flag(f[9], "u_di")?,
            u_r: flag(f[10], "u_r")?,
            cost_usd: num(f[11], "cost_usd")?,
        });
    }
    if rows.is_empty() {
        return Err(IoError::malformed(path, 0, "no schedule rows found"));
    }
    Ok(rows)
}

#[derive(Debug, Clone, PartialEq)]
pub struct SummaryRow {
    pub scenario_id: String,
    pub total_cost_usd: f64,
    pub curtailed_kwh: f64,
    pub curtail_segments: usize,
}

pub fn write_summary_csv(rows: &[SummaryRow], path: &Path) -> Result<(), IoError> {
    let mut out = String::from("scenario_id,total_cost_usd,curtailed_kwh,curtail_segments\n");
    for r in rows {
        let _ = writeln!(
            out,
            "{},{:.9},{:.9},{}",
            r.scenario_id, r.total_cost_usd, r.curtailed_kwh, r.curtail_segments
        );
    }
    fs::write(path, out).map_err(|e| IoError::io(path, e))
}

/// Emits the four risk report files into `dir`:
/// var_cvar_per_segment.csv, curtail_instances.csv, std_per_segment.csv,
/// and active_scenarios.csv.
pub fn write_risk_csvs(
    report: &RiskReport,
    scenario_ids: &[String],
    dir: &Path,
) -> Result<(), IoError> {
    assert_eq!(scenario_ids.len(), report.curtail_instances_per_scenario.len());
    let write = |name: &str, content: String| -> Result<(), IoError> {
        let path = dir.join(name);
        let mut file = fs::File::create(&path).map_err(|e| IoError::io(&path, e))?;
        file.write_all(content.as_bytes())
            .map_err(|e| IoError::io(&path, e))
    };

    let mut out = String::from("segment,var_kw,cvar_kw,cvar_ratio\n");
    for t in 0..report.var_per_segment.len() {
        let _ = writeln!(
            out,
            "{},{:.9},{:.9},{:.9}",
            t + 1,
            report.var_per_segment[t],
            report.cvar_per_segment[t],
            report.cvar_ratio_per_segment[t],
        );
    }
    write("var_cvar_per_segment.csv", out)?;

    let mut out = String::from("scenario_id,curtail_segments\n");
    for (id, count) in scenario_ids
        .iter()
        .zip(&report.curtail_instances_per_scenario)
    {
        let _ = writeln!(out, "{id},{count}");
    }
    write("curtail_instances.csv", out)?;

    let mut out = String::from("segment,std_ratio\n");
    for (t, std) in report.std_per_segment.iter().enumerate() {
        let _ = writeln!(out, "{},{:.9}", t + 1, std);
    }
    write("std_per_segment.csv", out)?;

    let mut out = String::from("scenario_id\n");
    for id in &report.active_scenarios {
        let _ = writeln!(out, "{id}");
    }
    write("active_scenarios.csv", out)
}
