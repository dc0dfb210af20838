//! Scenario, plan, and report files (JSON) and surface and trace tables (CSV).
//!
//! JSON floats are written in the shortest form that parses back to the same
//! `f64`, so every file round-trips bit for bit. CSV heights use 17
//! significant digits for the same reason.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::feedback::{Compounding, ExecutionMode, TraceRecord};
use crate::metrics::{modified_cost, mse, MetricsReport};
use crate::model::{apply_ablation, LaserAction, Layout, TissueParams, TissueSurface};
use crate::scenario::{ConstraintOffset, Scenario, SCHEMA_VERSION};

pub const SURFACE_HEADER: &str = "x,y,z";
/// The first six columns are the core trace; the rest are appended so that
/// readers of the core columns keep working.
pub const TRACE_HEADER: &str = "cut,x,theta,power,mse,violations,pre_mse,elapsed_s,y,theta_y";

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> Error + '_ {
    move |source| Error::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn parse_err(path: &Path, line: usize, message: impl Into<String>) -> Error {
    Error::Parse {
        path: path.to_path_buf(),
        line,
        message: message.into(),
    }
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    serde_json::from_str(&text).map_err(|e| parse_err(path, e.line(), e.to_string()))
}

/// Pretty-printed JSON with a trailing newline.
pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text =
        serde_json::to_string_pretty(value).map_err(|e| Error::Invalid(e.to_string()))?;
    text.push('\n');
    fs::write(path, text).map_err(io_err(path))
}

/// Hex SHA-256 of a value's JSON encoding.
pub fn config_hash<T: Serialize>(value: &T) -> String {
    let bytes = serde_json::to_vec(value).expect("configuration values serialize");
    hex::encode(Sha256::digest(&bytes))
}

pub fn load_scenario(path: &Path) -> Result<Scenario> {
    let s: Scenario = read_json(path)?;
    s.validate()?;
    Ok(s)
}

pub fn save_scenario(path: &Path, scenario: &Scenario) -> Result<()> {
    write_json(path, scenario)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Algorithm {
    Graph,
    Nlopt,
}

impl Algorithm {
    pub fn name(self) -> &'static str {
        match self {
            Algorithm::Graph => "graph",
            Algorithm::Nlopt => "nlopt",
        }
    }
}

/// Hash of everything that determines a planner's output on a scenario.
pub fn planner_hash(scenario: &Scenario, algorithm: Algorithm) -> String {
    #[derive(Serialize)]
    struct Provenance<'a> {
        algorithm: Algorithm,
        scenario: &'a Scenario,
    }
    config_hash(&Provenance {
        algorithm,
        scenario,
    })
}

/// One cut of a plan and the nominal prediction after it.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PlanStep {
    pub position: [f64; 2],
    pub angles: [f64; 2],
    pub power: f64,
    pub dt: f64,
    pub predicted_cost: f64,
    pub predicted_mse: f64,
}

impl PlanStep {
    pub fn action(&self) -> LaserAction {
        LaserAction {
            position: self.position,
            angles: self.angles,
            power: self.power,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PlanFile {
    pub schema: u32,
    pub algorithm: Algorithm,
    pub scenario: String,
    pub seed: u64,
    pub config_hash: String,
    pub lambda: f64,
    pub initial_cost: f64,
    pub initial_mse: f64,
    pub predicted_final_mse: f64,
    pub steps: Vec<PlanStep>,
}

impl PlanFile {
    /// Records `actions` with the costs predicted by replaying them from the
    /// scenario's initial surface under the nominal parameters.
    pub fn build(
        scenario: &Scenario,
        algorithm: Algorithm,
        actions: &[LaserAction],
    ) -> Result<Self> {
        let lambda = scenario.sampler.lambda;
        let params = scenario.nominal_params;
        let mut state = scenario.initial_surface.clone();
        let initial_cost = modified_cost(&state, &scenario.objective, lambda)?.modified_cost;
        let initial_mse = mse(&state, &scenario.objective)?;
        let mut steps = Vec::with_capacity(actions.len());
        for a in actions {
            state = apply_ablation(&state, a, &params).surface;
            steps.push(PlanStep {
                position: a.position,
                angles: a.angles,
                power: a.power,
                dt: params.dt,
                predicted_cost: modified_cost(&state, &scenario.objective, lambda)?.modified_cost,
                predicted_mse: mse(&state, &scenario.objective)?,
            });
        }
        Ok(Self {
            schema: SCHEMA_VERSION,
            algorithm,
            scenario: scenario.name.clone(),
            seed: scenario.seed,
            config_hash: planner_hash(scenario, algorithm),
            lambda,
            initial_cost,
            initial_mse,
            predicted_final_mse: steps.last().map_or(initial_mse, |s| s.predicted_mse),
            steps,
        })
    }

    pub fn actions(&self) -> Vec<LaserAction> {
        self.steps.iter().map(PlanStep::action).collect()
    }

    pub fn validate(&self, scenario: &Scenario) -> Result<()> {
        if self.schema != SCHEMA_VERSION {
            return Err(Error::Invalid(format!(
                "unsupported plan schema {}",
                self.schema
            )));
        }
        for (i, s) in self.steps.iter().enumerate() {
            s.action().validate()?;
            if s.dt != scenario.nominal_params.dt {
                return Err(Error::Invalid(format!(
                    "step {i} was planned with dt = {}, scenario has {}",
                    s.dt, scenario.nominal_params.dt
                )));
            }
        }
        Ok(())
    }
}

pub fn load_plan(path: &Path) -> Result<PlanFile> {
    read_json(path)
}

/// Summary written by `simulate`, `feedback`, and `metrics`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub schema: u32,
    pub command: String,
    pub mode: Option<ExecutionMode>,
    pub algorithm: Option<Algorithm>,
    pub scenario: String,
    pub scenario_hash: String,
    pub plan_hash: Option<String>,
    pub seed: u64,
    pub perturbation: f64,
    pub compounding: Compounding,
    pub nominal_params: TissueParams,
    pub true_params: TissueParams,
    pub constraint_offset: Option<ConstraintOffset>,
    #[serde(flatten)]
    pub metrics: MetricsReport,
    pub removed_tumor_fraction: f64,
    pub cuts_executed: usize,
    pub predicted_final_mse: Option<f64>,
    pub wall_time_s: f64,
}

impl RunReport {
    pub fn new(
        command: &str,
        scenario: &Scenario,
        true_params: TissueParams,
        metrics: MetricsReport,
    ) -> Self {
        Self {
            schema: SCHEMA_VERSION,
            command: command.into(),
            mode: None,
            algorithm: None,
            scenario: scenario.name.clone(),
            scenario_hash: config_hash(scenario),
            plan_hash: None,
            seed: scenario.seed,
            perturbation: scenario.perturbation,
            compounding: scenario.compounding,
            nominal_params: scenario.nominal_params,
            true_params,
            constraint_offset: scenario.constraint_offset,
            removed_tumor_fraction: metrics.removed_tumor_fraction(),
            metrics,
            cuts_executed: 0,
            predicted_final_mse: None,
            wall_time_s: 0.0,
        }
    }
}

/// `{:.16e}`: 17 significant digits, enough to round-trip any `f64`.
fn num(out: &mut String, v: f64) {
    write!(out, "{v:.16e}").expect("writing to a String");
}

pub fn surface_csv(surface: &TissueSurface) -> String {
    let mut out = String::with_capacity(64 * (surface.len() + 1));
    out.push_str(SURFACE_HEADER);
    out.push('\n');
    for p in surface.points() {
        num(&mut out, p[0]);
        out.push(',');
        num(&mut out, p[1]);
        out.push(',');
        num(&mut out, p[2]);
        out.push('\n');
    }
    out
}

pub fn write_surface_csv(path: &Path, surface: &TissueSurface) -> Result<()> {
    fs::write(path, surface_csv(surface)).map_err(io_err(path))
}

/// Parses an `x,y,z` table into a surface with the given layout.
pub fn parse_surface_csv(path: &Path, text: &str, layout: Layout) -> Result<TissueSurface> {
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, h)) if h.trim() == SURFACE_HEADER => {}
        Some((_, h)) => {
            return Err(parse_err(
                path,
                1,
                format!("expected header {SURFACE_HEADER:?}, found {h:?}"),
            ))
        }
        None => return Err(parse_err(path, 1, "empty file")),
    }
    let mut points = Vec::new();
    for (i, line) in lines {
        let line_no = i + 1;
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 3 {
            return Err(parse_err(
                path,
                line_no,
                format!("expected 3 fields, found {}", fields.len()),
            ));
        }
        let mut p = [0.0; 3];
        for (k, (name, field)) in ["x", "y", "z"].iter().zip(&fields).enumerate() {
            p[k] = field.trim().parse::<f64>().map_err(|_| {
                parse_err(
                    path,
                    line_no,
                    format!("field {name}: not a number: {field:?}"),
                )
            })?;
        }
        points.push(p);
    }
    TissueSurface::new(layout, points).map_err(|e| parse_err(path, 0, e.to_string()))
}

pub fn read_surface_csv(path: &Path, layout: Layout) -> Result<TissueSurface> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    parse_surface_csv(path, &text, layout)
}

pub fn trace_csv(trace: &[TraceRecord]) -> String {
    let mut out = String::with_capacity(160 * (trace.len() + 1));
    out.push_str(TRACE_HEADER);
    out.push('\n');
    for r in trace {
        write!(out, "{},", r.cut).expect("writing to a String");
        for v in [
            r.action.position[0],
            r.action.angles[0],
            r.action.power,
            r.post_mse,
        ] {
            num(&mut out, v);
            out.push(',');
        }
        write!(out, "{},", r.violations).expect("writing to a String");
        for v in [r.pre_mse, r.elapsed_s, r.action.position[1]] {
            num(&mut out, v);
            out.push(',');
        }
        num(&mut out, r.action.angles[1]);
        out.push('\n');
    }
    out
}

pub fn write_trace_csv(path: &Path, trace: &[TraceRecord]) -> Result<()> {
    fs::write(path, trace_csv(trace)).map_err(io_err(path))
}
