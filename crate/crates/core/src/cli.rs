//! Command-line front end of the `ablate` binary.

use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::error::{Error, Result};
use crate::feedback::{
    run_feedback, run_feedforward, Boundaries, Compounding, Controller, ExecutionReport,
    GraphController, OptimizerController, SensorModel, StopRule,
};
use crate::graph::{plan as graph_plan, uniform_levels};
use crate::io::{
    config_hash, load_plan, load_scenario, read_json, read_surface_csv, save_scenario, write_json,
    write_surface_csv, write_trace_csv, Algorithm, PlanFile, RunReport,
};
use crate::metrics::MetricsReport;
use crate::model::LaserAction;
use crate::scenario::{
    default_two_cut_actions, gen_sawtooth, gen_square_well, gen_tumor_3d, gen_two_cut,
    ConstraintOffset, GenConfig, Preset, Scenario, TumorSpec,
};
use crate::superposition::{assemble, solve};

#[derive(Debug, Parser)]
#[command(
    name = "ablate",
    version,
    about = "Plan and simulate laser tissue ablation"
)]
pub struct Cli {
    #[command(flatten)]
    pub global: GlobalFlags,
    #[command(subcommand)]
    pub command: Command,
}

/// Overrides applied to the scenario's stored configuration.
#[derive(Debug, Default, Args)]
pub struct GlobalFlags {
    /// Base seed of every random draw.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Worker threads; 1 is the reproducibility reference.
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    /// Scale preset. `desk` shrinks the resolution.
    #[arg(long, global = true, value_enum)]
    pub preset: Option<PresetArg>,
    /// Node budget per search.
    #[arg(long, global = true)]
    pub kf: Option<usize>,
    /// Overcut weight of the modified cost.
    #[arg(long, global = true)]
    pub lambda: Option<f64>,
    /// Node-weight exponent.
    #[arg(long = "a", global = true)]
    pub a: Option<f64>,
    /// Power-weight sharpness.
    #[arg(long = "b", global = true)]
    pub b: Option<f64>,
    #[arg(long, global = true)]
    pub eps_n: Option<f64>,
    #[arg(long, global = true)]
    pub eps_l: Option<f64>,
    /// Outer-loop stop threshold, relative to the initial cost.
    #[arg(long, global = true)]
    pub eps_c: Option<f64>,
    #[arg(long, global = true)]
    pub max_runs: Option<usize>,
    /// Attempt cap per search, as a multiple of the node budget.
    #[arg(long, global = true)]
    pub attempt_factor: Option<usize>,
    #[arg(long, global = true)]
    pub violation_tolerance: Option<f64>,
    /// Number of uniform power levels in [0, power-max].
    #[arg(long, global = true)]
    pub power_levels: Option<usize>,
    #[arg(long, global = true)]
    pub power_max: Option<f64>,
    /// Number of uniform tilt levels in [-angle-max, angle-max].
    #[arg(long, global = true)]
    pub angle_levels: Option<usize>,
    #[arg(long, global = true)]
    pub angle_max: Option<f64>,
    /// How a perturbation compounds into beta.
    #[arg(long, global = true, value_enum)]
    pub compounding: Option<CompoundingArg>,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum PresetArg {
    Full,
    Desk,
}

impl From<PresetArg> for Preset {
    fn from(p: PresetArg) -> Self {
        match p {
            PresetArg::Full => Preset::Full,
            PresetArg::Desk => Preset::Desk,
        }
    }
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum CompoundingArg {
    Single,
    PerFactor,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum Shape {
    SquareWell,
    Sawtooth,
    TwoCut,
    #[value(name = "tumor-3d")]
    Tumor3d,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum PlannerArg {
    Graph,
    Nlopt,
}

impl From<PlannerArg> for Algorithm {
    fn from(p: PlannerArg) -> Self {
        match p {
            PlannerArg::Graph => Algorithm::Graph,
            PlannerArg::Nlopt => Algorithm::Nlopt,
        }
    }
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a benchmark scenario.
    Gen(GenArgs),
    /// Plan with the graph search or the superposition optimizer.
    Plan {
        #[arg(value_enum)]
        planner: PlannerArg,
        #[arg(short, long)]
        scenario: PathBuf,
        #[arg(short, long)]
        output: PathBuf,
    },
    /// Execute a plan open loop on a perturbed plant.
    Simulate {
        #[arg(short, long)]
        scenario: PathBuf,
        #[arg(short, long)]
        plan: PathBuf,
        #[arg(long, allow_hyphen_values = true)]
        perturb: Option<f64>,
        #[arg(short, long)]
        output: PathBuf,
        #[arg(long)]
        trace: Option<PathBuf>,
        /// Also write the final surface as CSV.
        #[arg(long)]
        final_surface: Option<PathBuf>,
    },
    /// Re-plan after every cut on a perturbed plant.
    Feedback {
        #[arg(value_enum)]
        planner: PlannerArg,
        #[arg(short, long)]
        scenario: PathBuf,
        #[arg(long, allow_hyphen_values = true)]
        perturb: Option<f64>,
        #[arg(short, long)]
        output: PathBuf,
        #[arg(long)]
        trace: Option<PathBuf>,
        /// Write the executed cuts as a plan file.
        #[arg(long)]
        executed: Option<PathBuf>,
        #[arg(long)]
        final_surface: Option<PathBuf>,
        #[arg(long, default_value_t = 200)]
        max_cuts: usize,
    },
    /// Score a surface against a scenario.
    Metrics {
        #[arg(short, long)]
        scenario: PathBuf,
        #[arg(long)]
        surface: PathBuf,
        #[arg(short, long)]
        output: PathBuf,
    },
}

#[derive(Debug, Args)]
pub struct GenArgs {
    #[arg(value_enum)]
    pub shape: Shape,
    #[arg(short, long)]
    pub output: PathBuf,
    /// Points (per axis in 3D); defaults to the preset's.
    #[arg(long)]
    pub n: Option<usize>,
    /// Half-width of the lateral domain.
    #[arg(long, default_value_t = 1.0)]
    pub domain: f64,
    /// Well or tooth depth.
    #[arg(long, default_value_t = 0.4)]
    pub depth: f64,
    /// Half-width of the square well.
    #[arg(long, default_value_t = 0.5)]
    pub half_width: f64,
    /// Half-width of the sawtooth region.
    #[arg(long, default_value_t = 0.75)]
    pub extent: f64,
    #[arg(long, default_value_t = 3)]
    pub count: usize,
    /// Two-cut input as `x,theta,power`; give it twice.
    #[arg(long, allow_hyphen_values = true)]
    pub cut: Vec<String>,
    /// Constraint slope `a` in `z_d − a|x| − b`.
    #[arg(long, default_value_t = 0.05)]
    pub offset_a: f64,
    /// Constraint offset `b` in `z_d − a|x| − b`.
    #[arg(long, default_value_t = 0.02)]
    pub offset_b: f64,
    /// Tumor geometry as JSON; defaults to the built-in tumor.
    #[arg(long)]
    pub tumor_spec: Option<PathBuf>,
    #[arg(long, default_value_t = 1.0)]
    pub beta: f64,
    #[arg(long, default_value_t = 0.5)]
    pub phi: f64,
    #[arg(long, default_value_t = 0.15)]
    pub w: f64,
    #[arg(long, default_value_t = 1.0)]
    pub dt: f64,
    /// Plant perturbation stored in the scenario.
    #[arg(long, default_value_t = 0.0, allow_hyphen_values = true)]
    pub perturbation: f64,
}

impl GlobalFlags {
    /// Writes the overrides into a scenario and re-validates it.
    pub fn apply(&self, s: &mut Scenario) -> Result<()> {
        let c = &mut s.sampler;
        if let Some(p) = self.preset {
            c.k_f = Preset::from(p).k_f();
        }
        if let Some(seed) = self.seed {
            s.seed = seed;
        }
        c.seed = s.seed;
        s.solver.seed = s.seed;
        if let Some(t) = self.threads {
            c.threads = t;
            s.solver.threads = t;
        }
        macro_rules! set {
            ($($flag:ident => $field:ident),*) => {$(if let Some(v) = self.$flag { c.$field = v; })*};
        }
        set!(kf => k_f, lambda => lambda, a => a, b => b, eps_n => eps_n, eps_l => eps_l, eps_c => eps_c,
             max_runs => max_runs, attempt_factor => attempt_factor, violation_tolerance => violation_tolerance);
        if self.power_levels.is_some() || self.power_max.is_some() {
            let max = self
                .power_max
                .unwrap_or_else(|| c.power_set.iter().copied().fold(0.0, f64::max));
            c.power_set = uniform_levels(0.0, max, self.power_levels.unwrap_or(c.power_set.len()));
        }
        if self.angle_levels.is_some() || self.angle_max.is_some() {
            let max = self
                .angle_max
                .unwrap_or_else(|| c.angle_set.iter().copied().fold(0.0, f64::max));
            c.angle_set = uniform_levels(-max, max, self.angle_levels.unwrap_or(c.angle_set.len()));
        }
        if let Some(k) = self.compounding {
            s.compounding = match k {
                CompoundingArg::Single => Compounding::Single,
                CompoundingArg::PerFactor => Compounding::PerFactor,
            };
        }
        if s.solver.threads < 1 {
            return Err(Error::Invalid("threads must be >= 1".into()));
        }
        s.sampler.validate()?;
        s.validate()
    }
}

fn parse_cut(text: &str) -> Result<LaserAction> {
    let parts: Vec<f64> = text
        .split(',')
        .map(|t| t.trim().parse::<f64>())
        .collect::<std::result::Result<_, _>>()
        .map_err(|_| Error::Invalid(format!("cut {text:?}: expected x,theta,power")))?;
    match parts[..] {
        [x, theta, power] => Ok(LaserAction::planar(x, theta, power)),
        _ => Err(Error::Invalid(format!(
            "cut {text:?}: expected x,theta,power"
        ))),
    }
}

fn generate(args: &GenArgs, global: &GlobalFlags) -> Result<Scenario> {
    let cfg = GenConfig {
        preset: global.preset.map(Preset::from).unwrap_or_default(),
        resolution: args.n,
        domain: args.domain,
        params: crate::model::TissueParams::new(args.beta, args.phi, args.w, args.dt)?,
        offset: ConstraintOffset {
            a: args.offset_a,
            b: args.offset_b,
        },
    };
    let mut s = match args.shape {
        Shape::SquareWell => gen_square_well(&cfg, args.half_width, args.depth)?,
        Shape::Sawtooth => gen_sawtooth(&cfg, args.extent, args.depth, args.count)?,
        Shape::TwoCut => {
            let actions = match args.cut.len() {
                0 => default_two_cut_actions(),
                2 => [parse_cut(&args.cut[0])?, parse_cut(&args.cut[1])?],
                k => {
                    return Err(Error::Invalid(format!(
                        "two-cut takes 0 or 2 --cut values, got {k}"
                    )))
                }
            };
            gen_two_cut(&cfg, actions)?
        }
        Shape::Tumor3d => {
            let spec = match &args.tumor_spec {
                Some(p) => read_json::<TumorSpec>(p)?,
                None => TumorSpec::default(),
            };
            gen_tumor_3d(&cfg, &spec)?
        }
    };
    s.perturbation = args.perturbation;
    global.apply(&mut s)?;
    Ok(s)
}

fn scenario_with_flags(path: &Path, global: &GlobalFlags) -> Result<Scenario> {
    let mut s = load_scenario(path)?;
    global.apply(&mut s)?;
    Ok(s)
}

/// Runs the named planner on a scenario and returns its cuts.
pub fn plan_actions(scenario: &Scenario, algorithm: Algorithm) -> Result<Vec<LaserAction>> {
    let s = scenario;
    match algorithm {
        Algorithm::Graph => Ok(graph_plan(
            &s.initial_surface,
            &s.objective,
            &s.constraint,
            &s.sampler,
            &s.nominal_params,
        )?
        .actions),
        Algorithm::Nlopt => {
            let problem = assemble(
                &s.initial_surface,
                &s.objective,
                &s.constraint,
                &s.nominal_params,
            )?;
            let result = solve(&problem, &s.solver)?;
            if !result.feasible {
                return Err(Error::Degenerate(
                    "optimizer found no feasible cut powers".into(),
                ));
            }
            Ok(result.to_actions(&problem))
        }
    }
}

/// Receding-horizon run of the named planner on the scenario's plant.
pub fn feedback_run(
    scenario: &Scenario,
    algorithm: Algorithm,
    stop: StopRule,
) -> Result<ExecutionReport> {
    let s = scenario;
    let bounds = Boundaries {
        objective: &s.objective,
        constraint: &s.constraint,
    };
    let mut controller: Box<dyn Controller + '_> = match algorithm {
        Algorithm::Graph => Box::new(GraphController::new(
            s.sampler.clone(),
            s.nominal_params,
            bounds,
        )),
        Algorithm::Nlopt => Box::new(OptimizerController::new(
            s.solver.clone(),
            s.nominal_params,
            bounds,
        )),
    };
    run_feedback(
        controller.as_mut(),
        &s.plant()?,
        &s.initial_surface,
        bounds,
        stop,
        SensorModel::default(),
    )
}

fn write_outputs(
    exec: &ExecutionReport,
    trace: Option<&PathBuf>,
    final_surface: Option<&PathBuf>,
) -> Result<()> {
    if let Some(p) = trace {
        write_trace_csv(p, &exec.trace)?;
    }
    if let Some(p) = final_surface {
        write_surface_csv(p, &exec.final_surface)?;
    }
    Ok(())
}

fn execution_report(command: &str, s: &Scenario, exec: &ExecutionReport) -> Result<RunReport> {
    let mut r = RunReport::new(command, s, s.plant()?.true_params, exec.metrics);
    r.mode = Some(exec.mode);
    r.cuts_executed = exec.cuts_executed;
    r.wall_time_s = exec.wall_time_s;
    Ok(r)
}

pub fn run(cli: Cli) -> Result<()> {
    let g = &cli.global;
    match &cli.command {
        Command::Gen(args) => save_scenario(&args.output, &generate(args, g)?),
        Command::Plan {
            planner,
            scenario,
            output,
        } => {
            let s = scenario_with_flags(scenario, g)?;
            let algorithm = Algorithm::from(*planner);
            let actions = plan_actions(&s, algorithm)?;
            let plan = PlanFile::build(&s, algorithm, &actions)?;
            log::info!(
                "{} cuts, predicted mse {:.6e}",
                plan.steps.len(),
                plan.predicted_final_mse
            );
            write_json(output, &plan)
        }
        Command::Simulate {
            scenario,
            plan,
            perturb,
            output,
            trace,
            final_surface,
        } => {
            let mut s = scenario_with_flags(scenario, g)?;
            if let Some(p) = perturb {
                s.perturbation = *p;
            }
            let plan = load_plan(plan)?;
            plan.validate(&s)?;
            let bounds = Boundaries {
                objective: &s.objective,
                constraint: &s.constraint,
            };
            let exec = run_feedforward(&plan.actions(), &s.plant()?, &s.initial_surface, bounds)?;
            write_outputs(&exec, trace.as_ref(), final_surface.as_ref())?;
            let mut r = execution_report("simulate", &s, &exec)?;
            r.algorithm = Some(plan.algorithm);
            r.plan_hash = Some(config_hash(&plan));
            r.predicted_final_mse = Some(plan.predicted_final_mse);
            write_json(output, &r)
        }
        Command::Feedback {
            planner,
            scenario,
            perturb,
            output,
            trace,
            executed,
            final_surface,
            max_cuts,
        } => {
            let mut s = scenario_with_flags(scenario, g)?;
            if let Some(p) = perturb {
                s.perturbation = *p;
            }
            let algorithm = Algorithm::from(*planner);
            let exec = feedback_run(
                &s,
                algorithm,
                StopRule {
                    max_cuts: *max_cuts,
                },
            )?;
            write_outputs(&exec, trace.as_ref(), final_surface.as_ref())?;
            if let Some(p) = executed {
                write_json(p, &PlanFile::build(&s, algorithm, &exec.executed)?)?;
            }
            let mut r = execution_report("feedback", &s, &exec)?;
            r.algorithm = Some(algorithm);
            write_json(output, &r)
        }
        Command::Metrics {
            scenario,
            surface,
            output,
        } => {
            let start = Instant::now();
            let s = scenario_with_flags(scenario, g)?;
            let fin = read_surface_csv(surface, s.initial_surface.layout())?;
            let m = MetricsReport::compute(
                &s.initial_surface,
                &fin,
                &s.objective,
                &s.constraint,
                s.sampler.violation_tolerance,
            )?;
            let mut r = RunReport::new("metrics", &s, s.plant()?.true_params, m);
            r.wall_time_s = start.elapsed().as_secs_f64();
            write_json(output, &r)
        }
    }
}

/// Parses the process arguments, runs, and returns the exit code.
pub fn main() -> i32 {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
