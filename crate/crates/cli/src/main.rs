//! Command-line front end: certificates (`verify`), trajectory sampling
//! (`sample`), discrete OT tools (`ot`), model training and evaluation
//! (`train`, `generate`, `eval`), the two sweep experiments (`sweep`), and
//! chart emission (`plot`).
//!
//! Exit codes: 0 success, 1 certificate or assertion failure, 2 usage or
//! configuration error.

mod config;
mod csvio;
mod plot;

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use rand::Rng;
use rand_distr::StandardNormal;

use flowbridge_core::bridge::reverse_sample_x0;
use flowbridge_core::flow::ode_sample;
use flowbridge_core::harness::{
    degradation_ratios, difficulty_study_train, make_dataset, rows_to_csv, run_experiment,
    summarize, sweep_data_size, sweep_difficulty, SweepAxis, SweepRow, TaskSpec,
};
use flowbridge_core::nn::{self, Mlp};
use flowbridge_core::ot::{
    covering_number, exact_ot, geodesic_check, mccann_interpolate, sinkhorn, w2_distance,
    EmpiricalMeasure,
};
use flowbridge_core::schedule::GouSchedule;
use flowbridge_core::seeds::{derive_seed, seeded_rng};
use flowbridge_core::soc::{certify_prop1, certify_theorem1, prop1_csv, theorem1_csv};
use flowbridge_core::{Error, ModelKind, Result};

use config::{RunConfig, SamplerKind};

#[derive(Parser)]
#[command(name = "flowbridge", version, about = "Bridge and flow transport laboratory")]
struct Cli {
    /// JSON run configuration; defaults apply when omitted
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,

    /// Master seed, overriding the config value
    #[arg(long, global = true, value_name = "N")]
    seed: Option<u64>,

    /// Output directory, overriding the config value
    #[arg(long, global = true, value_name = "DIR")]
    out: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Certificate checks
    #[command(subcommand)]
    Verify(VerifyCommand),
    /// Sample trajectories from a trained checkpoint
    #[command(subcommand)]
    Sample(SampleCommand),
    /// Discrete optimal-transport tools over point-cloud CSVs
    #[command(subcommand)]
    Ot(OtCommand),
    /// Train the configured model and save a checkpoint
    Train,
    /// Sample final points from a trained checkpoint
    Generate(GenerateArgs),
    /// Train, sample, and score the configured model
    Eval,
    /// Multi-seed sweep experiments over both models
    #[command(subcommand)]
    Sweep(SweepCommand),
    /// Render SVG charts from a sweep results CSV
    Plot(PlotArgs),
}

#[derive(Subcommand)]
enum VerifyCommand {
    /// Optimal-control cost inequality and degeneration-limit certificates
    Soc {
        /// Cost-inequality instances, split evenly across dimensions 1, 2, 8
        #[arg(long, default_value_t = 1000)]
        instances: usize,
    },
}

#[derive(Subcommand)]
enum SampleCommand {
    /// Ancestral reverse chains through the bridge posterior
    Bridge(GenerateArgs),
    /// Probability-flow ODE paths under the learned velocity field
    Flow(GenerateArgs),
}

#[derive(Args)]
struct GenerateArgs {
    /// Checkpoint path; defaults to {out}/checkpoint.bin
    #[arg(long, value_name = "PATH")]
    checkpoint: Option<PathBuf>,

    /// Number of chains; defaults to the task's n_test
    #[arg(long, value_name = "N")]
    chains: Option<usize>,
}

#[derive(Subcommand)]
enum OtCommand {
    /// Exact assignment cost and W2 between two clouds
    Plan {
        #[arg(long, value_name = "CSV")]
        mu: PathBuf,
        #[arg(long, value_name = "CSV")]
        nu: PathBuf,
        /// Also run the entropic solver at this regularization
        #[arg(long, value_name = "EPS")]
        sinkhorn_eps: Option<f64>,
    },
    /// Displacement interpolation at the requested times
    Interp {
        #[arg(long, value_name = "CSV")]
        mu: PathBuf,
        #[arg(long, value_name = "CSV")]
        nu: PathBuf,
        /// Interpolation times in [0, 1]; repeatable
        #[arg(long = "t", value_name = "T", required = true)]
        times: Vec<f64>,
    },
    /// Constant-speed check along the displacement path
    Geodesic {
        /// Points per internal random cloud (ignored with --mu/--nu)
        #[arg(long, default_value_t = 64)]
        n: usize,
        #[arg(long, value_name = "CSV", requires = "nu")]
        mu: Option<PathBuf>,
        #[arg(long, value_name = "CSV", requires = "mu")]
        nu: Option<PathBuf>,
    },
    /// Greedy covering number of one cloud
    Cover {
        #[arg(long, value_name = "CSV")]
        mu: PathBuf,
        #[arg(long, value_name = "R")]
        radius: f64,
    },
}

#[derive(Subcommand)]
enum SweepCommand {
    /// Increasing translation magnitude at fixed data size (the training
    /// budget is fixed by the study design and ignores the config's steps)
    Difficulty {
        #[arg(long, default_value_t = 3)]
        repeats: usize,
    },
    /// Increasing training-set size at fixed difficulty
    Datasize {
        #[arg(long, default_value_t = 3)]
        repeats: usize,
    },
}

#[derive(Args)]
struct PlotArgs {
    /// Sweep results CSV
    #[arg(long, value_name = "CSV")]
    input: PathBuf,

    /// Metrics to chart; repeatable
    #[arg(long = "metric", value_name = "NAME", default_values = ["w2"])]
    metrics: Vec<String>,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        // Clap exits 0 for --help/--version and 2 for usage errors.
        Err(e) => e.exit(),
    };

    let mut cfg = match cli.config.as_deref().map_or_else(
        || Ok(RunConfig::default()),
        RunConfig::load,
    ) {
        Ok(cfg) => cfg,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    };
    if let Some(seed) = cli.seed {
        cfg.master_seed = seed;
    }
    if let Some(out) = cli.out {
        cfg.out_dir = out;
    }
    if let Err(e) = cfg.validate() {
        eprintln!("error: {e}");
        return ExitCode::from(2);
    }

    match dispatch(&cli.command, &cfg) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Check(msg)) => {
            eprintln!("FAIL: {msg}");
            ExitCode::from(1)
        }
        Err(Failure::Run(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}

/// Distinguishes a failed certificate (reported with its witnesses) from an
/// operational error; both map to exit 1.
enum Failure {
    Check(String),
    Run(Error),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Run(e)
    }
}

fn dispatch(cmd: &Command, cfg: &RunConfig) -> std::result::Result<(), Failure> {
    cfg.write_resolved(&cfg.out_dir)?;
    match cmd {
        Command::Verify(VerifyCommand::Soc { instances }) => verify_soc(cfg, *instances),
        Command::Sample(which) => {
            let (kind, args) = match which {
                SampleCommand::Bridge(a) => (SamplerKind::Bridge, a),
                SampleCommand::Flow(a) => (SamplerKind::Flow, a),
            };
            sample_trajectories(cfg, kind, args, true)
        }
        Command::Ot(ot) => run_ot(cfg, ot),
        Command::Train => train_model(cfg),
        Command::Generate(args) => sample_trajectories(cfg, cfg.sampler.kind, args, false),
        Command::Eval => eval_model(cfg),
        Command::Sweep(which) => run_sweep(cfg, which),
        Command::Plot(args) => render_plots(cfg, args).map_err(Failure::from),
    }
}

fn write_out(cfg: &RunConfig, name: &str, content: &str) -> Result<PathBuf> {
    let path = cfg.out_dir.join(name);
    fs::write(&path, content)
        .map_err(|e| Error::Config(format!("cannot write {}: {e}", path.display())))?;
    Ok(path)
}

fn verify_soc(cfg: &RunConfig, instances: usize) -> std::result::Result<(), Failure> {
    let dims = [1usize, 2, 8];
    let mut records = Vec::with_capacity(instances);
    for (i, &dim) in dims.iter().enumerate() {
        let count = instances / dims.len() + usize::from(i < instances % dims.len());
        let seed = derive_seed(cfg.master_seed, "verify-theorem1", &[dim as u64]);
        records.extend(certify_theorem1(count, dim, seed)?);
    }
    let path = write_out(cfg, "theorem1.csv", &theorem1_csv(&records))?;
    let failing: Vec<u64> = records
        .iter()
        .filter(|r| !r.report.holds)
        .map(|r| r.instance_seed)
        .collect();
    let min_gap = records
        .iter()
        .map(|r| r.report.j_fm - r.report.j_db)
        .fold(f64::INFINITY, f64::min);
    println!(
        "cost inequality: {}/{} instances hold (min cost gap {min_gap:.3e}) -> {}",
        records.len() - failing.len(),
        records.len(),
        path.display()
    );

    let thetas = [1.0, 0.1, 0.01, 1e-3, 1e-4];
    let prop1_seed = derive_seed(cfg.master_seed, "verify-prop1", &[]);
    let prop1 = certify_prop1(&thetas, 256, prop1_seed);
    match prop1 {
        Ok(rows) => {
            let path = write_out(cfg, "prop1.csv", &prop1_csv(&rows))?;
            let last = rows.last().expect("nonempty by construction");
            println!(
                "degeneration limit: sup deviation falls to {:.3e} at theta_total={:.0e} -> {}",
                last.sup_relative_deviation,
                last.theta_total,
                path.display()
            );
        }
        Err(Error::Certificate(msg)) => {
            return Err(Failure::Check(format!("degeneration limit violated: {msg}")));
        }
        Err(e) => return Err(e.into()),
    }

    if !failing.is_empty() {
        return Err(Failure::Check(format!(
            "cost inequality violated on instance seeds {failing:?}"
        )));
    }
    Ok(())
}

/// Trains the configured model on the derived dataset and saves the
/// checkpoint `sample`/`generate` later load.
fn train_model(cfg: &RunConfig) -> std::result::Result<(), Failure> {
    let kind = cfg.sampler.kind.model();
    let kind_ix = match kind {
        ModelKind::Db => 0,
        ModelKind::Fm => 1,
    };
    let task_seed = derive_seed(cfg.master_seed, "cli-task", &[]);
    let spec = cfg.task.to_spec(task_seed);
    let (train_pairs, _) = make_dataset(&spec)?;
    let sched = GouSchedule::new(cfg.schedule.clone())?;
    let mut model = Mlp::new(
        cfg.model.clone(),
        derive_seed(task_seed, "model-init", &[kind_ix]),
    )?;
    let tc = cfg.train.to_config(derive_seed(task_seed, "experiment-train", &[]));
    let report = nn::train(&mut model, kind, &train_pairs, &sched, &tc)?;
    let ckpt = cfg.out_dir.join("checkpoint.bin");
    model.save_checkpoint(&ckpt)?;
    let report_json = serde_json::json!({
        "model": kind.label(),
        "initial_loss": report.initial_loss,
        "final_loss": report.final_loss,
        "steps": report.steps,
    });
    write_out(cfg, "train_report.json", &format!("{report_json:#}\n"))?;
    println!(
        "trained {kind}: loss {:.4} -> {:.4} over {} steps -> {}",
        report.initial_loss,
        report.final_loss,
        report.steps,
        ckpt.display()
    );
    Ok(())
}

/// Shared by `sample` (full trajectories) and `generate` (final points).
fn sample_trajectories(
    cfg: &RunConfig,
    kind: SamplerKind,
    args: &GenerateArgs,
    full_paths: bool,
) -> std::result::Result<(), Failure> {
    let task_seed = derive_seed(cfg.master_seed, "cli-task", &[]);
    let model = match &args.checkpoint {
        Some(path) => Mlp::load_checkpoint(path)?,
        None => Mlp::load_checkpoint(&cfg.out_dir.join("checkpoint.bin"))?,
    };
    let spec = cfg.task.to_spec(task_seed);
    let (_, test_pairs) = make_dataset(&spec)?;
    let chains = args.chains.unwrap_or(test_pairs.len()).min(test_pairs.len());
    let sched = GouSchedule::new(cfg.schedule.clone())?;

    let mut trajectories = Vec::with_capacity(chains);
    for (ci, (_, x1)) in test_pairs.iter().take(chains).enumerate() {
        let traj = match kind {
            SamplerKind::Bridge => {
                let mut rng = seeded_rng(task_seed, "sample-chain", &[ci as u64]);
                reverse_sample_x0(&model, x1, &sched, cfg.sampler.n_steps, &mut rng)?
            }
            SamplerKind::Flow => {
                ode_sample(&model, x1, cfg.sampler.n_steps, cfg.sampler.ode_method)?
            }
        };
        trajectories.push(traj);
    }

    if full_paths {
        let path = write_out(cfg, "trajectories.csv", &csvio::trajectories_csv(&trajectories))?;
        println!(
            "sampled {chains} {} chains ({} nodes each) -> {}",
            kind.model(),
            trajectories.first().map_or(0, |t| t.times.len()),
            path.display()
        );
    } else {
        let finals: Vec<Vec<f64>> = trajectories
            .iter()
            .map(|t| t.states[0].clone())
            .collect();
        let path = write_out(cfg, "generated.csv", &csvio::point_cloud_csv(&finals))?;
        println!("generated {chains} {} samples -> {}", kind.model(), path.display());
    }
    Ok(())
}

fn eval_model(cfg: &RunConfig) -> std::result::Result<(), Failure> {
    let kind = cfg.sampler.kind.model();
    let task_seed = derive_seed(cfg.master_seed, "cli-task", &[]);
    let spec = cfg.task.to_spec(task_seed);
    let out = run_experiment(kind, &spec, &cfg.experiment_config())?;
    let row = SweepRow {
        model: kind,
        source: spec.source,
        difficulty: spec.difficulty,
        n_train: spec.n_train,
        repeat_seed: spec.seed,
        w2: out.metrics.w2_to_target,
        energy_distance: out.metrics.energy_distance,
        path_energy: out.metrics.path_energy,
        nfe: out.metrics.nfe,
        train_seconds: out.metrics.wall_clock_train,
        sample_seconds: out.metrics.wall_clock_sample,
        ot_gap_diagnostic: out.ot_gap_diagnostic,
    };
    let path = write_out(cfg, "metrics.csv", &rows_to_csv(&[row], false))?;
    println!(
        "{kind} on {} (D={}, n_train={}): w2={:.4} energy_distance={:.4} path_energy={:.3} -> {}",
        spec.source,
        spec.difficulty,
        spec.n_train,
        out.metrics.w2_to_target,
        out.metrics.energy_distance,
        out.metrics.path_energy,
        path.display()
    );
    Ok(())
}

/// Held-out estimate of the endpoint gap W₂(p₀, p₁) for a task variant:
/// how far apart the two marginals the model must connect actually are.
fn endpoint_gap(template: &TaskSpec, difficulty: f64) -> Result<f64> {
    let spec = TaskSpec {
        difficulty,
        ..template.clone()
    };
    let (_, test) = make_dataset(&spec)?;
    let x0 = EmpiricalMeasure::new(test.iter().map(|(a, _)| a.clone()).collect())?;
    let x1 = EmpiricalMeasure::new(test.iter().map(|(_, b)| b.clone()).collect())?;
    w2_distance(&x0, &x1)
}

fn run_sweep(cfg: &RunConfig, which: &SweepCommand) -> std::result::Result<(), Failure> {
    let kinds = [ModelKind::Db, ModelKind::Fm];
    let exp = cfg.experiment_config();
    let (rows, axis, file) = match which {
        SweepCommand::Difficulty { repeats } => {
            let template = cfg
                .task
                .to_spec(derive_seed(cfg.master_seed, "cli-sweep-difficulty", &[]));
            let d_list = [0.5, 1.0, 2.0, 4.0];
            let mut study = exp.clone();
            study.train = difficulty_study_train(&exp.train);
            for &d in &d_list {
                println!("endpoint gap W2(p0,p1) at D={d}: {:.4}", endpoint_gap(&template, d)?);
            }
            let rows = sweep_difficulty(&kinds, &d_list, &template, &study, *repeats)?;
            (rows, SweepAxis::Difficulty, "difficulty.csv")
        }
        SweepCommand::Datasize { repeats } => {
            let template = cfg
                .task
                .to_spec(derive_seed(cfg.master_seed, "cli-sweep-datasize", &[]));
            let n_list = [64usize, 256, 1024, 8192];
            println!(
                "endpoint gap W2(p0,p1) at D={}: {:.4}",
                template.difficulty,
                endpoint_gap(&template, template.difficulty)?
            );
            let rows = sweep_data_size(&kinds, &n_list, &template, &exp, *repeats)?;
            (rows, SweepAxis::DataSize, "datasize.csv")
        }
    };
    let path = write_out(cfg, file, &rows_to_csv(&rows, false))?;
    let stats = summarize(&rows, axis);
    for s in &stats {
        println!(
            "{} {}={:>6}: w2 {:.4} +- {:.4} over {} repeats",
            s.model,
            match axis {
                SweepAxis::Difficulty => "D",
                SweepAxis::DataSize => "n",
            },
            s.axis,
            s.mean_w2,
            s.sd_w2,
            s.repeats
        );
    }
    let reference = stats
        .iter()
        .map(|s| s.axis)
        .fold(f64::INFINITY, f64::min);
    for (model, axis_v, ratio) in degradation_ratios(&stats, reference)? {
        if axis_v != reference {
            println!("{model} degradation w2({axis_v})/w2({reference}) = {ratio:.3}");
        }
    }
    println!("rows -> {}", path.display());
    Ok(())
}

fn load_measure(path: &Path) -> Result<EmpiricalMeasure> {
    EmpiricalMeasure::new(csvio::read_point_cloud(path)?)
}

fn run_ot(cfg: &RunConfig, cmd: &OtCommand) -> std::result::Result<(), Failure> {
    match cmd {
        OtCommand::Plan { mu, nu, sinkhorn_eps } => {
            let mu = load_measure(mu)?;
            let nu = load_measure(nu)?;
            let plan = exact_ot(&mu, &nu)?;
            let w2 = w2_distance(&mu, &nu)?;
            println!("exact: cost={:.6e} w2={w2:.6}", plan.cost());
            if let Some(eps) = sinkhorn_eps {
                let entropic = sinkhorn(&mu, &nu, *eps, 20_000, 1e-9)?;
                println!(
                    "sinkhorn(eps={eps}): cost={:.6e} converged={}",
                    entropic.cost(),
                    entropic.is_converged()
                );
            }
            Ok(())
        }
        OtCommand::Interp { mu, nu, times } => {
            let mu = load_measure(mu)?;
            let nu = load_measure(nu)?;
            let plan = exact_ot(&mu, &nu)?;
            for &t in times {
                let mid = mccann_interpolate(&mu, &nu, &plan, t)?;
                let name = format!("interp_t{t}.csv");
                let path = write_out(cfg, &name, &csvio::point_cloud_csv(mid.points()))?;
                println!("t={t}: {} points -> {}", mid.len(), path.display());
            }
            Ok(())
        }
        OtCommand::Geodesic { n, mu, nu } => {
            let (mu, nu) = match (mu, nu) {
                (Some(m), Some(n)) => (load_measure(m)?, load_measure(n)?),
                _ => {
                    let mut rng = seeded_rng(cfg.master_seed, "ot-geodesic", &[]);
                    let mut draw = |shift: f64| -> Result<EmpiricalMeasure> {
                        EmpiricalMeasure::new(
                            (0..*n)
                                .map(|_| {
                                    vec![
                                        rng.sample::<f64, _>(StandardNormal) + shift,
                                        rng.sample::<f64, _>(StandardNormal),
                                    ]
                                })
                                .collect(),
                        )
                    };
                    (draw(0.0)?, draw(3.0)?)
                }
            };
            let t_grid: Vec<f64> = (1..=9).map(|i| i as f64 / 10.0).collect();
            let worst = geodesic_check(&mu, &nu, &t_grid)?;
            println!("max |W2(mu, mu_t) - t W2(mu, nu)| = {worst:.3e} over {} times", t_grid.len());
            if worst > 1e-8 {
                return Err(Failure::Check(format!(
                    "geodesic deviation {worst:.3e} exceeds 1e-8"
                )));
            }
            Ok(())
        }
        OtCommand::Cover { mu, radius } => {
            let points = csvio::read_point_cloud(mu)?;
            let count = covering_number(&points, *radius)?;
            println!("covering number at radius {radius}: {count}");
            Ok(())
        }
    }
}

fn render_plots(cfg: &RunConfig, args: &PlotArgs) -> Result<()> {
    let rows = csvio::read_results(&args.input)?;
    let axis = plot::infer_axis(&rows);
    for metric in &args.metrics {
        let pick: fn(&csvio::ResultRow) -> f64 = match metric.as_str() {
            "w2" => |r| r.w2,
            "energy_distance" => |r| r.energy_distance,
            "path_energy" => |r| r.path_energy,
            other => {
                return Err(Error::Config(format!(
                    "unknown metric {other:?}; choose w2, energy_distance, or path_energy"
                )))
            }
        };
        let svg = plot::render_chart(&rows, axis, metric, pick);
        let path = write_out(cfg, &format!("plot_{metric}.svg"), &svg)?;
        println!("{metric} chart -> {}", path.display());
    }
    Ok(())
}
