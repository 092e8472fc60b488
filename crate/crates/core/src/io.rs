//! CSV and JSON emission.
//!
//! Every file starts with a header recording the tool version, the seed and
//! the fully resolved configuration. In CSV it is a single `# {json}` line
//! before the column names. Floats are written with 17 significant digits
//! so that reruns are byte-identical and values round-trip exactly.

use std::io::Write;
use std::str::FromStr;

use serde::Serialize;

use crate::body::{SectionState, SECTION_COMPONENTS};
use crate::error::{Result, WalkerError};
use crate::gait::TraceRow;
use crate::linear::{BodePoint, PowerResponse};
use crate::mfpt::MfptReport;
use crate::sweep::{effective_mfpt, SweepRecord};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

pub const TRAJECTORY_COLUMNS: [&str; 16] = [
    "t", "theta", "theta_dot", "phi_dot", "eta", "alpha", "alpha_dot", "gamma", "gamma_dot", "beta",
    "beta_dot", "lp", "lp_dot", "energy", "power", "phase",
];
pub const LIMIT_CYCLE_COLUMNS: [&str; 3] = ["component", "model_a", "model_b"];
pub const MFPT_COLUMNS: [&str; 7] =
    ["sigma", "mfpt", "p_fall", "mean_return_steps", "mean_fall_steps", "samples", "unbounded"];
pub const BODE_COLUMNS: [&str; 5] =
    ["omega", "mag_db_model_a", "phase_deg_model_a", "mag_db_model_b", "phase_deg_model_b"];
pub const IMPULSE_COLUMNS: [&str; 3] = ["t", "power_model_a", "power_model_b"];
pub const SWEEP_COLUMNS: [&str; 13] = [
    "index", "ktoe_p", "ktoe_d", "impulse_v", "khip_p", "khip_d", "kt_p", "kt_d", "viable_a", "viable_b",
    "mfpt_a", "mfpt_b", "group",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    #[default]
    Csv,
    Json,
}

impl FromStr for Format {
    type Err = WalkerError;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "csv" => Ok(Format::Csv),
            "json" => Ok(Format::Json),
            other => Err(WalkerError::Config(format!("unknown format '{other}' (expected csv or json)"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunHeader {
    pub tool: &'static str,
    pub version: &'static str,
    pub command: String,
    pub seed: Option<u64>,
    pub config: serde_json::Value,
}

impl RunHeader {
    pub fn new(command: impl Into<String>, seed: Option<u64>, config: &impl Serialize) -> Result<Self> {
        Ok(Self { tool: "walkerlab", version: VERSION, command: command.into(), seed, config: serde_json::to_value(config)? })
    }

    pub fn line(&self) -> Result<String> {
        Ok(format!("# {}", serde_json::to_string(self)?))
    }
}

/// `x` with 17 significant digits; non-finite values as `nan`, `inf`, `-inf`.
pub fn fmt_f64(x: f64) -> String {
    if x.is_nan() {
        "nan".into()
    } else if x.is_infinite() {
        if x > 0.0 { "inf".into() } else { "-inf".into() }
    } else {
        format!("{x:.16e}")
    }
}

fn csv_writer<'a>(out: &'a mut dyn Write, header: &RunHeader, columns: &[&str]) -> Result<csv::Writer<&'a mut dyn Write>> {
    writeln!(out, "{}", header.line()?)?;
    let mut w = csv::Writer::from_writer(out);
    w.write_record(columns)?;
    Ok(w)
}

#[derive(Serialize)]
struct Document<'a, T: Serialize + ?Sized> {
    header: &'a RunHeader,
    data: &'a T,
}

/// `{"header": …, "data": …}` followed by a newline.
pub fn write_json<T: Serialize + ?Sized>(out: &mut dyn Write, header: &RunHeader, data: &T) -> Result<()> {
    serde_json::to_writer_pretty(&mut *out, &Document { header, data })?;
    writeln!(out)?;
    Ok(())
}

/// Trajectory rows, optionally with a trailing `pct_cycle` column.
pub fn write_trajectory(out: &mut dyn Write, header: &RunHeader, rows: &[TraceRow], with_pct: bool) -> Result<()> {
    let mut columns = TRAJECTORY_COLUMNS.to_vec();
    if with_pct {
        columns.push("pct_cycle");
    }
    let mut w = csv_writer(out, header, &columns)?;
    for r in rows {
        let mut rec = vec![fmt_f64(r.t)];
        rec.extend(r.section.0.iter().map(|&v| fmt_f64(v)));
        rec.push(fmt_f64(r.energy));
        rec.push(fmt_f64(r.power));
        rec.push(r.phase.label().into());
        if with_pct {
            rec.push(fmt_f64(r.pct_cycle));
        }
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

/// One row per section component; a missing model leaves its column empty.
pub fn write_limit_cycle(
    out: &mut dyn Write,
    header: &RunHeader,
    model_a: Option<&SectionState>,
    model_b: Option<&SectionState>,
) -> Result<()> {
    let mut w = csv_writer(out, header, &LIMIT_CYCLE_COLUMNS)?;
    let cell = |x: Option<&SectionState>, j: usize| x.map(|x| fmt_f64(x.0[j])).unwrap_or_default();
    for (j, name) in SECTION_COMPONENTS.iter().enumerate() {
        w.write_record([name.to_string(), cell(model_a, j), cell(model_b, j)])?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_mfpt(out: &mut dyn Write, header: &RunHeader, reports: &[MfptReport]) -> Result<()> {
    let mut w = csv_writer(out, header, &MFPT_COLUMNS)?;
    for r in reports {
        w.write_record([
            fmt_f64(r.sigma),
            fmt_f64(r.mfpt),
            fmt_f64(r.p_fall),
            fmt_f64(r.mean_return_steps),
            fmt_f64(r.mean_fall_steps),
            r.samples.to_string(),
            r.unbounded.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Both models on the same frequency grid.
pub fn write_bode(out: &mut dyn Write, header: &RunHeader, model_a: &[BodePoint], model_b: &[BodePoint]) -> Result<()> {
    if model_a.len() != model_b.len() {
        return Err(WalkerError::InvalidParams("bode grids differ in length".into()));
    }
    let mut w = csv_writer(out, header, &BODE_COLUMNS)?;
    for (a, b) in model_a.iter().zip(model_b) {
        w.write_record([
            fmt_f64(a.omega),
            fmt_f64(a.magnitude_db),
            fmt_f64(a.phase_deg),
            fmt_f64(b.magnitude_db),
            fmt_f64(b.phase_deg),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_impulse(
    out: &mut dyn Write,
    header: &RunHeader,
    model_a: &PowerResponse,
    model_b: &PowerResponse,
) -> Result<()> {
    if model_a.t.len() != model_b.t.len() {
        return Err(WalkerError::InvalidParams("impulse responses differ in length".into()));
    }
    let mut w = csv_writer(out, header, &IMPULSE_COLUMNS)?;
    for k in 0..model_a.t.len() {
        w.write_record([fmt_f64(model_a.t[k]), fmt_f64(model_a.power[k]), fmt_f64(model_b.power[k])])?;
    }
    w.flush()?;
    Ok(())
}

/// Sweep records; MFPT cells are empty when not tested and `inf` when no
/// fall was observed.
pub fn write_sweep(out: &mut dyn Write, header: &RunHeader, records: &[SweepRecord]) -> Result<()> {
    let mut w = csv_writer(out, header, &SWEEP_COLUMNS)?;
    let mfpt = |r: Option<&MfptReport>| r.map(|r| fmt_f64(effective_mfpt(r))).unwrap_or_default();
    for r in records {
        let g = &r.sample.gains;
        w.write_record([
            r.sample.index.to_string(),
            fmt_f64(g.toe_stiffness),
            fmt_f64(g.toe_damping),
            fmt_f64(g.impulse_velocity),
            fmt_f64(g.hip_p),
            fmt_f64(g.hip_d),
            fmt_f64(g.trunk_p),
            fmt_f64(g.trunk_d),
            r.viable_a.to_string(),
            r.viable_b.to_string(),
            mfpt(r.mfpt_a.as_ref()),
            mfpt(r.mfpt_b.as_ref()),
            r.group.label().into(),
        ])?;
    }
    w.flush()?;
    Ok(())
}
