use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use walkerlab_core::gait::{
    cycle_traces, search_limit_cycle, trajectory, CycleSearch, LimitCycle, LimitKernel, DEFAULT_KERNEL_THRESHOLD,
};
use walkerlab_core::io::{self, Format, RunHeader};
use walkerlab_core::linear::{
    frequency_response, impulse_power_response, log_grid, LinearUpperBody, Output, StiffnessForm,
};
use walkerlab_core::mfpt::{episode_rng, estimate_mfpt, mfpt_curve, sample_slope, TerrainParams, DEFAULT_STEP_CAP};
use walkerlab_core::sim::{IntegratorConfig, Walker};
use walkerlab_core::sweep::{aggregate, run_sweep, SweepConfig};
use walkerlab_core::validate::run_checks;
use walkerlab_core::{exec, ModelKind, SectionState, WalkerError};
use walkerlab_core::body::WalkerConfig;

#[derive(Parser, Debug)]
#[command(name = "walkerlab", version, about = "Planar walker simulations: limit cycles, MFPT, linear upper body, gain sweeps")]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug, Clone, Serialize)]
struct Common {
    /// Output file (stdout when omitted).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[arg(long, global = true, value_enum, default_value_t = FormatArg::Csv)]
    format: FormatArg,
    /// Worker threads (0 keeps the default pool).
    #[arg(long, global = true)]
    jobs: Option<usize>,
    /// Key-value file overriding body parameters and gains.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
}

#[derive(ValueEnum, Debug, Clone, Copy, Serialize)]
#[serde(rename_all = "lowercase")]
enum FormatArg {
    Csv,
    Json,
}

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
enum ModelArg {
    A,
    B,
}

impl From<ModelArg> for ModelKind {
    fn from(m: ModelArg) -> Self {
        match m {
            ModelArg::A => ModelKind::RigidNeck,
            ModelArg::B => ModelKind::HeadStabilized,
        }
    }
}

#[derive(ValueEnum, Debug, Clone, Copy, Serialize)]
#[serde(rename_all = "lowercase")]
enum StartArg {
    /// Tabulated reference pre-impact state.
    Reference,
    /// Fixed point of a limit-cycle search.
    Cycle,
}

#[derive(ValueEnum, Debug, Clone, Copy, Serialize)]
#[serde(rename_all = "lowercase")]
enum OutputArg {
    /// Head tilt per unit cart acceleration.
    Head,
    /// Hip force per unit cart acceleration.
    Force,
}

#[derive(Args, Debug, Clone, Copy, Serialize)]
struct SearchArgs {
    /// Initial states of the limit-cycle search.
    #[arg(long, default_value_t = 64)]
    samples: usize,
    /// Flat-ground steps per initial state.
    #[arg(long, default_value_t = 500)]
    steps: usize,
    /// Integration step outside impact windows, s.
    #[arg(long, default_value_t = 1e-3)]
    dt: f64,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Walk a number of steps and emit the full trajectory.
    Simulate {
        #[arg(long, value_enum, default_value_t = ModelArg::B)]
        model: ModelArg,
        #[arg(long, default_value_t = 10)]
        steps: usize,
        /// Slope standard deviation of the ground texture, rad.
        #[arg(long, default_value_t = 0.0)]
        sigma: f64,
        #[arg(long, default_value_t = 1e-3)]
        dt: f64,
        #[arg(long, value_enum, default_value_t = StartArg::Reference)]
        start: StartArg,
    },
    /// Flat-ground limit cycle of one or both models.
    LimitCycle {
        /// Model to search (both when omitted).
        #[arg(long, value_enum)]
        model: Option<ModelArg>,
        #[command(flatten)]
        search: SearchArgs,
    },
    /// Energy, power and swing-leg traces over one limit cycle.
    Traces {
        #[arg(long, value_enum, default_value_t = ModelArg::B)]
        model: ModelArg,
        #[command(flatten)]
        search: SearchArgs,
    },
    /// Mean first passage time at one ground texture.
    Mfpt {
        #[arg(long, value_enum, default_value_t = ModelArg::B)]
        model: ModelArg,
        #[arg(long, default_value_t = 0.01)]
        sigma: f64,
        /// Episodes.
        #[arg(long, default_value_t = 1000)]
        episodes: usize,
        #[arg(long, default_value_t = DEFAULT_STEP_CAP)]
        cap: u64,
        #[command(flatten)]
        search: SearchArgs,
    },
    /// MFPT over a list of ground textures.
    MfptCurve {
        #[arg(long, value_enum, default_value_t = ModelArg::B)]
        model: ModelArg,
        #[arg(long, value_delimiter = ',', default_values_t = vec![0.0, 0.005, 0.01, 0.015, 0.02, 0.025, 0.03])]
        sigmas: Vec<f64>,
        #[arg(long, default_value_t = 1000)]
        episodes: usize,
        #[arg(long, default_value_t = DEFAULT_STEP_CAP)]
        cap: u64,
        #[command(flatten)]
        search: SearchArgs,
    },
    /// Linearized upper body on a cart.
    Linear {
        #[command(subcommand)]
        command: LinearCommand,
    },
    /// Random sweep over the shared gains.
    Sweep {
        #[arg(long, default_value_t = 1000)]
        samples: usize,
        /// Both-viable samples promoted to robustness testing.
        #[arg(long, default_value_t = 100)]
        robustness: usize,
        #[arg(long, default_value_t = 200)]
        episodes: usize,
        #[arg(long, default_value_t = 0.03)]
        sigma: f64,
        #[arg(long, default_value_t = 10_000)]
        cap: u64,
        /// Start every sample from its own limit cycle.
        #[arg(long)]
        rederive_cycle: bool,
        /// Where to write the JSON summary (stderr when omitted).
        #[arg(long)]
        summary: Option<PathBuf>,
    },
    /// Run the invariant suite.
    Validate,
}

#[derive(Subcommand, Debug)]
enum LinearCommand {
    /// Frequency response of both models.
    Bode {
        #[arg(long, value_enum, default_value_t = OutputArg::Head)]
        output: OutputArg,
        #[arg(long, default_value_t = 0.1)]
        omega_min: f64,
        #[arg(long, default_value_t = 1000.0)]
        omega_max: f64,
        #[arg(long, default_value_t = 200)]
        points: usize,
    },
    /// Cart power after a step change of cart velocity.
    Impulse {
        #[arg(long, default_value_t = 1.2)]
        v_pre: f64,
        #[arg(long, default_value_t = 1.0)]
        v_post: f64,
        #[arg(long, default_value_t = 3.0)]
        duration: f64,
        #[arg(long, default_value_t = 1e-4)]
        dt: f64,
    },
}

fn walker(model: ModelKind, cfg: &WalkerConfig, dt: f64) -> walkerlab_core::Result<Walker> {
    let config = IntegratorConfig { dt_normal: dt, dt_impact: dt.min(1e-4), ..Default::default() };
    config.validate()?;
    Ok(Walker::new(model, cfg.body, cfg.gains).with_config(config))
}

fn search(w: &Walker, args: &SearchArgs, seed: u64) -> walkerlab_core::Result<LimitCycle> {
    let s = CycleSearch { samples: args.samples, steps: args.steps, seed, ..Default::default() };
    search_limit_cycle(w, &s)
}

struct Sink {
    out: Box<dyn Write>,
    format: Format,
}

impl Sink {
    fn open(common: &Common) -> walkerlab_core::Result<Self> {
        let out: Box<dyn Write> = match &common.out {
            Some(p) => Box::new(BufWriter::new(File::create(p)?)),
            None => Box::new(BufWriter::new(std::io::stdout())),
        };
        let format = match common.format {
            FormatArg::Csv => Format::Csv,
            FormatArg::Json => Format::Json,
        };
        Ok(Self { out, format })
    }

    /// CSV through `csv_fn`, JSON as the serialized `data`.
    fn emit<T: Serialize + ?Sized>(
        &mut self,
        header: &RunHeader,
        data: &T,
        csv_fn: impl FnOnce(&mut dyn Write, &RunHeader) -> walkerlab_core::Result<()>,
    ) -> walkerlab_core::Result<()> {
        match self.format {
            Format::Csv => csv_fn(&mut self.out, header)?,
            Format::Json => io::write_json(&mut self.out, header, data)?,
        }
        self.out.flush()?;
        Ok(())
    }
}

#[derive(Serialize)]
struct Resolved<'a, T: Serialize> {
    common: &'a Common,
    walker: &'a WalkerConfig,
    command: T,
}

fn run(cli: Cli) -> walkerlab_core::Result<bool> {
    let common = cli.common.clone();
    let cfg = match &common.config {
        Some(p) => WalkerConfig::load(p)?,
        None => WalkerConfig::default(),
    };
    let seed = common.seed;
    let header = |name: &str, command: serde_json::Value| {
        RunHeader::new(name, Some(seed), &Resolved { common: &common, walker: &cfg, command })
    };
    let mut sink = Sink::open(&common)?;
    match cli.command {
        Command::Simulate { model, steps, sigma, dt, start } => {
            let w = walker(model.into(), &cfg, dt)?;
            let xi = match start {
                StartArg::Reference => SectionState::reference(w.model),
                StartArg::Cycle => search(&w, &SearchArgs { samples: 64, steps: 500, dt }, seed)?.fixed_point,
            };
            TerrainParams::new(sigma, seed)?;
            let mut rng = episode_rng(seed, 0);
            let traj = trajectory(&w, &w.state_from_section(&xi)?, steps, &mut || sample_slope(&mut rng, sigma))?;
            if let Some(reason) = traj.fall {
                eprintln!("fell after {} steps ({reason:?})", traj.steps);
            }
            let h = header(
                "simulate",
                serde_json::json!({"model": model, "steps": steps, "sigma": sigma, "dt": dt, "start": start, "integrator": w.config}),
            )?;
            sink.emit(&h, &traj, |out, h| io::write_trajectory(out, h, &traj.rows, false))?;
        }
        Command::LimitCycle { model, search: args } => {
            let models: Vec<ModelKind> = match model {
                Some(m) => vec![m.into()],
                None => ModelKind::ALL.to_vec(),
            };
            let cycles = models
                .iter()
                .map(|&m| search(&walker(m, &cfg, args.dt)?, &args, seed))
                .collect::<walkerlab_core::Result<Vec<_>>>()?;
            let pick = |m: ModelKind| cycles.iter().find(|c| c.model == m).map(|c| &c.fixed_point);
            let h = header("limit-cycle", serde_json::json!({"model": model, "search": args}))?;
            #[derive(Serialize)]
            struct Summary<'a> {
                model: ModelKind,
                fixed_point: &'a SectionState,
                mean_step_time: f64,
                survivors: usize,
                attempted: usize,
            }
            let data: Vec<Summary> = cycles
                .iter()
                .map(|c| Summary {
                    model: c.model,
                    fixed_point: &c.fixed_point,
                    mean_step_time: c.mean_step_time,
                    survivors: c.survivors,
                    attempted: c.attempted,
                })
                .collect();
            sink.emit(&h, &data, |out, h| {
                io::write_limit_cycle(out, h, pick(ModelKind::RigidNeck), pick(ModelKind::HeadStabilized))
            })?;
        }
        Command::Traces { model, search: args } => {
            let w = walker(model.into(), &cfg, args.dt)?;
            let cycle = search(&w, &args, seed)?;
            let trace = cycle_traces(&w, &cycle.state(&w)?)?;
            let h = header("traces", serde_json::json!({"model": model, "search": args}))?;
            sink.emit(&h, &trace, |out, h| io::write_trajectory(out, h, &trace.rows, true))?;
        }
        Command::Mfpt { model, sigma, episodes, cap, search: args } => {
            let w = walker(model.into(), &cfg, args.dt)?;
            let cycle = search(&w, &args, seed)?;
            let kernel = LimitKernel::new(&cycle, DEFAULT_KERNEL_THRESHOLD);
            let terrain = TerrainParams::new(sigma, seed)?;
            let run = exec::with_jobs(common.jobs, || estimate_mfpt(&w, &cycle, &kernel, &terrain, episodes, cap))?;
            let h = header(
                "mfpt",
                serde_json::json!({"model": model, "sigma": sigma, "episodes": episodes, "cap": cap, "search": args}),
            )?;
            sink.emit(&h, &run.report, |out, h| io::write_mfpt(out, h, &[run.report]))?;
        }
        Command::MfptCurve { model, sigmas, episodes, cap, search: args } => {
            let w = walker(model.into(), &cfg, args.dt)?;
            let cycle = search(&w, &args, seed)?;
            let kernel = LimitKernel::new(&cycle, DEFAULT_KERNEL_THRESHOLD);
            let reports =
                exec::with_jobs(common.jobs, || mfpt_curve(&w, &cycle, &kernel, &sigmas, episodes, seed, cap))?;
            let h = header(
                "mfpt-curve",
                serde_json::json!({"model": model, "sigmas": sigmas, "episodes": episodes, "cap": cap, "search": args}),
            )?;
            sink.emit(&h, &reports, |out, h| io::write_mfpt(out, h, &reports))?;
        }
        Command::Linear { command } => {
            let systems = ModelKind::ALL
                .map(|m| LinearUpperBody::build(m, &cfg.body, &cfg.gains, StiffnessForm::Derived).and_then(|l| l.assemble()));
            let [a, b] = systems;
            let (a, b) = (a?, b?);
            match command {
                LinearCommand::Bode { output, omega_min, omega_max, points } => {
                    if !(omega_min > 0.0 && omega_max > omega_min && points >= 2) {
                        return Err(WalkerError::InvalidParams("need 0 < omega-min < omega-max and points >= 2".into()));
                    }
                    let which = match output {
                        OutputArg::Head => Output::HeadAngle,
                        OutputArg::Force => Output::HipForce,
                    };
                    let grid = log_grid(omega_min, omega_max, points);
                    let (ra, rb) = (frequency_response(&a, which, &grid), frequency_response(&b, which, &grid));
                    let h = header(
                        "linear bode",
                        serde_json::json!({"output": output, "omega_min": omega_min, "omega_max": omega_max, "points": points}),
                    )?;
                    sink.emit(&h, &(&ra, &rb), |out, h| io::write_bode(out, h, &ra, &rb))?;
                }
                LinearCommand::Impulse { v_pre, v_post, duration, dt } => {
                    if !(dt > 0.0 && duration > 0.0) {
                        return Err(WalkerError::InvalidParams("need positive duration and dt".into()));
                    }
                    let ra = impulse_power_response(&a, v_pre, v_post, duration, dt);
                    let rb = impulse_power_response(&b, v_pre, v_post, duration, dt);
                    eprintln!("energy: model a {:.4} J, model b {:.4} J", ra.integral, rb.integral);
                    let h = header(
                        "linear impulse",
                        serde_json::json!({"v_pre": v_pre, "v_post": v_post, "duration": duration, "dt": dt}),
                    )?;
                    sink.emit(&h, &(&ra, &rb), |out, h| io::write_impulse(out, h, &ra, &rb))?;
                }
            }
        }
        Command::Sweep { samples, robustness, episodes, sigma, cap, rederive_cycle, summary } => {
            let config = SweepConfig {
                samples,
                seed,
                robustness_samples: robustness,
                episodes,
                sigma,
                step_cap: cap,
                rederive_cycle,
                ..Default::default()
            };
            let (starts, records) = exec::with_jobs(common.jobs, || run_sweep(&cfg.body, &config))?;
            let agg = aggregate(&records, 2000, seed);
            let h = header("sweep", serde_json::to_value(config)?)?;
            #[derive(Serialize)]
            struct SummaryDoc<'a> {
                starts: &'a walkerlab_core::sweep::SweepStarts,
                summary: &'a walkerlab_core::sweep::SweepSummary,
            }
            let doc = SummaryDoc { starts: &starts, summary: &agg };
            match summary {
                Some(p) => io::write_json(&mut BufWriter::new(File::create(p)?), &h, &doc)?,
                None => io::write_json(&mut std::io::stderr(), &h, &doc)?,
            }
            sink.emit(&h, &records, |out, h| io::write_sweep(out, h, &records))?;
        }
        Command::Validate => {
            let checks = run_checks(&cfg.body, &cfg.gains, seed);
            let ok = checks.iter().all(|c| c.passed);
            for c in &checks {
                eprintln!("{} {:<24} {}", if c.passed { "PASS" } else { "FAIL" }, c.name, c.detail);
            }
            if matches!(sink.format, Format::Json) {
                let h = header("validate", serde_json::Value::Null)?;
                io::write_json(&mut sink.out, &h, &checks)?;
                sink.out.flush()?;
            }
            return Ok(ok);
        }
    }
    Ok(true)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error[{}]: {e}", e.code());
            ExitCode::from(1)
        }
    }
}
