//! Synthetic paired 2-D tasks, experiment orchestration, and the two
//! sweeps (difficulty and training-set size).
//!
//! A task couples a base distribution with a translated, noised copy of
//! itself: x₁ = x₀ + D·e + σ_pair·η with a unit direction e fixed per task
//! seed.  The translation magnitude D is the difficulty knob; D = 0 with
//! σ_pair = 0 is the identity task.  Quality is scored by exact W₂ between
//! the generated cloud and a held-out target cloud, plus energy distance
//! and discrete path energy.

use crate::bridge::reverse_sample_x0;
use crate::error::{Error, Result};
use crate::flow::{ode_sample, OdeMethod};
use crate::nn::{train, Mlp, MlpConfig, TrainConfig};
use crate::ot::{w2_distance, EmpiricalMeasure};
use crate::schedule::{GouSchedule, ScheduleConfig, ScheduleKind};
use crate::seeds::{derive_seed, seeded_rng};
use crate::soc::ControlledTrajectory;
use crate::ModelKind;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use std::time::Instant;

/// One coupled training or evaluation example: (x₀, x₁).
pub type Pair = (Vec<f64>, Vec<f64>);

/// Built-in 2-D base distributions.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SourceKind {
    /// Mixture of 8 unit-weight Gaussians (σ = 0.2) on a radius-2 circle.
    EightGaussians,
    /// Two interleaved half-circles of radius 2 with light jitter.
    TwoMoons,
    /// The 8 dark cells of a 4×4 board over [−2, 2]².
    Checkerboard,
}

impl SourceKind {
    pub fn label(self) -> &'static str {
        match self {
            SourceKind::EightGaussians => "eight-gaussians",
            SourceKind::TwoMoons => "two-moons",
            SourceKind::Checkerboard => "checkerboard",
        }
    }
}

impl std::fmt::Display for SourceKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.label())
    }
}

/// Description of one synthetic paired task.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TaskSpec {
    pub source: SourceKind,
    /// State dimension; the built-in sources are all 2-D.
    pub dim: usize,
    /// Translation magnitude applied to produce x₁ from x₀.
    pub difficulty: f64,
    /// Isotropic Gaussian noise added to x₁ on top of the translation.
    pub pair_noise: f64,
    pub n_train: usize,
    pub n_test: usize,
    pub seed: u64,
}

impl Default for TaskSpec {
    fn default() -> Self {
        TaskSpec {
            source: SourceKind::EightGaussians,
            dim: 2,
            difficulty: 1.0,
            // Nonzero pair noise keeps the coupling honest: with an exact
            // translation, x1 determines x0 and the per-pair velocity
            // collapses to a single constant vector that any regressor can
            // fit regardless of D.
            pair_noise: 0.5,
            n_train: 1024,
            n_test: 256,
            seed: 0,
        }
    }
}

impl TaskSpec {
    pub fn validate(&self) -> Result<()> {
        if self.dim != 2 {
            return Err(Error::Domain(format!(
                "built-in sources are 2-D, got dim {}",
                self.dim
            )));
        }
        if self.n_train < 2 {
            return Err(Error::Domain(format!(
                "n_train must be at least 2, got {}",
                self.n_train
            )));
        }
        if self.n_test < 64 {
            return Err(Error::Domain(format!(
                "n_test must be at least 64, got {}",
                self.n_test
            )));
        }
        if !self.difficulty.is_finite() || self.difficulty < 0.0 {
            return Err(Error::Domain(format!(
                "difficulty must be finite and nonnegative, got {}",
                self.difficulty
            )));
        }
        if !self.pair_noise.is_finite() || self.pair_noise < 0.0 {
            return Err(Error::Domain(format!(
                "pair_noise must be finite and nonnegative, got {}",
                self.pair_noise
            )));
        }
        Ok(())
    }
}

fn gaussian_mode_center(k: usize) -> [f64; 2] {
    let phi = k as f64 / 8.0 * std::f64::consts::TAU;
    [2.0 * phi.cos(), 2.0 * phi.sin()]
}

/// The 8 dark cells of a 4×4 board over [−2, 2]², row-major.
fn checkerboard_cell(k: usize) -> [f64; 2] {
    let mut dark = Vec::with_capacity(8);
    for i in 0..4 {
        for j in 0..4 {
            if (i + j) % 2 == 0 {
                dark.push([i as f64 - 2.0, j as f64 - 2.0]);
            }
        }
    }
    dark[k % 8]
}

/// Draws the i-th base point.  Modes, moons, and cells are visited
/// round-robin so small datasets still cover the support.
fn draw_base_point(source: SourceKind, i: usize, rng: &mut impl Rng) -> Vec<f64> {
    match source {
        SourceKind::EightGaussians => {
            let c = gaussian_mode_center(i % 8);
            let z0: f64 = rng.sample(StandardNormal);
            let z1: f64 = rng.sample(StandardNormal);
            vec![c[0] + 0.2 * z0, c[1] + 0.2 * z1]
        }
        SourceKind::TwoMoons => {
            let phi = rng.gen::<f64>() * std::f64::consts::PI;
            let z0: f64 = rng.sample(StandardNormal);
            let z1: f64 = rng.sample(StandardNormal);
            let (mut x, mut y) = if i % 2 == 0 {
                (2.0 * phi.cos() - 1.0, 2.0 * phi.sin() - 0.5)
            } else {
                (1.0 - 2.0 * phi.cos(), 0.5 - 2.0 * phi.sin())
            };
            x += 0.1 * z0;
            y += 0.1 * z1;
            vec![x, y]
        }
        SourceKind::Checkerboard => {
            let cell = checkerboard_cell(i % 8);
            vec![cell[0] + rng.gen::<f64>(), cell[1] + rng.gen::<f64>()]
        }
    }
}

/// Unit translation direction, fixed per task seed.
fn pair_direction(seed: u64) -> [f64; 2] {
    let mut rng = seeded_rng(seed, "pair-direction", &[]);
    loop {
        let z0: f64 = rng.sample(StandardNormal);
        let z1: f64 = rng.sample(StandardNormal);
        let norm = (z0 * z0 + z1 * z1).sqrt();
        if norm > 1e-12 {
            return [z0 / norm, z1 / norm];
        }
    }
}

fn draw_pairs(spec: &TaskSpec, n: usize, stream: &str) -> Vec<Pair> {
    let e = pair_direction(spec.seed);
    let mut rng = seeded_rng(spec.seed, stream, &[]);
    (0..n)
        .map(|i| {
            let x0 = draw_base_point(spec.source, i, &mut rng);
            let n0: f64 = rng.sample(StandardNormal);
            let n1: f64 = rng.sample(StandardNormal);
            let x1 = vec![
                x0[0] + spec.difficulty * e[0] + spec.pair_noise * n0,
                x0[1] + spec.difficulty * e[1] + spec.pair_noise * n1,
            ];
            (x0, x1)
        })
        .collect()
}

/// Generates seeded train and test pair sets from separate streams.
pub fn make_dataset(spec: &TaskSpec) -> Result<(Vec<Pair>, Vec<Pair>)> {
    spec.validate()?;
    let train = draw_pairs(spec, spec.n_train, "train-points");
    let test = draw_pairs(spec, spec.n_test, "test-points");
    Ok((train, test))
}

/// Exact W₂ between the test-set endpoint clouds, i.e. how far the task
/// actually asks mass to move.
pub fn endpoint_gap(spec: &TaskSpec) -> Result<f64> {
    let (_, test) = make_dataset(spec)?;
    let x0 = EmpiricalMeasure::new(test.iter().map(|p| p.0.clone()).collect())?;
    let x1 = EmpiricalMeasure::new(test.iter().map(|p| p.1.clone()).collect())?;
    w2_distance(&x0, &x1)
}

/// Scores for one trained-and-sampled experiment cell.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Metrics {
    /// Exact W₂ between the generated cloud and the held-out x₀ cloud.
    pub w2_to_target: f64,
    pub energy_distance: f64,
    /// Mean over chains of Σ ½‖Δx‖²/Δt.
    pub path_energy: f64,
    /// Configured sampler steps (Heun spends 2 field evaluations each).
    pub nfe: usize,
    pub wall_clock_train: f64,
    pub wall_clock_sample: f64,
}

/// Squared-exponent-1 energy distance between two point clouds
/// (V-statistic, so it is nonnegative and vanishes on identical clouds).
pub fn energy_distance(a: &[Vec<f64>], b: &[Vec<f64>]) -> Result<f64> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::Domain("energy distance needs nonempty clouds".into()));
    }
    let d = a[0].len();
    if a.iter().chain(b.iter()).any(|p| p.len() != d) {
        return Err(Error::Domain("energy distance needs consistent dims".into()));
    }
    let dist = |p: &[f64], q: &[f64]| -> f64 {
        p.iter()
            .zip(q)
            .map(|(x, y)| (x - y) * (x - y))
            .sum::<f64>()
            .sqrt()
    };
    let mean_cross = a
        .iter()
        .map(|p| b.iter().map(|q| dist(p, q)).sum::<f64>())
        .sum::<f64>()
        / (a.len() * b.len()) as f64;
    let mean_within = |c: &[Vec<f64>]| -> f64 {
        c.iter()
            .map(|p| c.iter().map(|q| dist(p, q)).sum::<f64>())
            .sum::<f64>()
            / (c.len() * c.len()) as f64
    };
    Ok((2.0 * mean_cross - mean_within(a) - mean_within(b)).max(0.0))
}

/// Discrete kinetic energy Σ ½‖Δx‖²/Δt of one trajectory.
pub fn discrete_path_energy(traj: &ControlledTrajectory) -> Result<f64> {
    if traj.times.len() < 2 {
        return Err(Error::Domain("trajectory needs at least 2 nodes".into()));
    }
    let mut total = 0.0;
    for k in 0..traj.times.len() - 1 {
        let dt = traj.times[k + 1] - traj.times[k];
        if dt <= 0.0 {
            return Err(Error::Domain("trajectory times must increase".into()));
        }
        let sq: f64 = traj.states[k + 1]
            .iter()
            .zip(&traj.states[k])
            .map(|(x, y)| (x - y) * (x - y))
            .sum();
        total += 0.5 * sq / dt;
    }
    Ok(total)
}

/// Everything an experiment cell needs besides the task itself.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentConfig {
    pub schedule: ScheduleConfig,
    pub mlp: MlpConfig,
    pub train: TrainConfig,
    pub sample_steps: usize,
    pub ode_method: OdeMethod,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            // Constant mean reversion with thin driving noise.  The
            // ancestral reverse sampler re-injects posterior variance at
            // every step, so even under a perfect endpoint predictor the
            // generated cloud scatters by an amount proportional to the
            // stationary noise scale, flat in the step count.  A small
            // lambda2 keeps that floor well below the metric scale of the
            // 2-D tasks; theta_total = 1 keeps the marginal interpolation
            // coefficients well conditioned near both endpoints.
            schedule: ScheduleConfig {
                kind: ScheduleKind::Constant,
                theta_total: 1.0,
                lambda2: 2.5e-4,
                ..ScheduleConfig::default()
            },
            mlp: MlpConfig {
                state_dim: 2,
                hidden: vec![64, 64, 64],
                ..MlpConfig::default()
            },
            train: TrainConfig {
                batch_size: 128,
                steps: 2000,
                learning_rate: 3e-3,
                lr_decay: vec![(1200, 0.3)],
                ..TrainConfig::default()
            },
            sample_steps: 20,
            ode_method: OdeMethod::Heun,
        }
    }
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        self.train.validate()?;
        if self.sample_steps == 0 {
            return Err(Error::Domain("sample_steps must be positive".into()));
        }
        Ok(())
    }
}

/// Metrics plus the generated cloud (kept for plotting and diagnostics).
#[derive(Clone, Debug)]
pub struct ExperimentOutput {
    pub metrics: Metrics,
    /// Generated x₀ samples, one per test chain.
    pub generated: Vec<Vec<f64>>,
    /// |w2_to_target − W₂-scale cost of the training pairing|: how far the
    /// model's pushforward sits from the coupling it was trained on.
    pub ot_gap_diagnostic: f64,
}

/// Trains one model on the task and scores its samples against the
/// held-out target cloud.
pub fn run_experiment(
    kind: ModelKind,
    spec: &TaskSpec,
    cfg: &ExperimentConfig,
) -> Result<ExperimentOutput> {
    spec.validate()?;
    cfg.validate()?;
    if cfg.mlp.state_dim != spec.dim {
        return Err(Error::SizeMismatch {
            expected: spec.dim,
            got: cfg.mlp.state_dim,
        });
    }
    let (train_pairs, test_pairs) = make_dataset(spec)?;
    let sched = GouSchedule::new(cfg.schedule.clone())?;
    let kind_ix = match kind {
        ModelKind::Db => 0,
        ModelKind::Fm => 1,
    };

    let clock = Instant::now();
    let mut model = Mlp::new(
        cfg.mlp.clone(),
        derive_seed(spec.seed, "model-init", &[kind_ix]),
    )?;
    let mut tc = cfg.train.clone();
    tc.seed = derive_seed(spec.seed, "experiment-train", &[]);
    train(&mut model, kind, &train_pairs, &sched, &tc)?;
    let wall_clock_train = clock.elapsed().as_secs_f64();

    let clock = Instant::now();
    let mut generated = Vec::with_capacity(test_pairs.len());
    let mut energy_sum = 0.0;
    for (ci, (_, x1)) in test_pairs.iter().enumerate() {
        let traj = match kind {
            ModelKind::Db => {
                let mut rng = seeded_rng(spec.seed, "sample-chain", &[ci as u64]);
                reverse_sample_x0(&model, x1, &sched, cfg.sample_steps, &mut rng)?
            }
            ModelKind::Fm => ode_sample(&model, x1, cfg.sample_steps, cfg.ode_method)?,
        };
        energy_sum += discrete_path_energy(&traj)?;
        generated.push(traj.states[0].clone());
    }
    let wall_clock_sample = clock.elapsed().as_secs_f64();

    let target = EmpiricalMeasure::new(test_pairs.iter().map(|p| p.0.clone()).collect())?;
    let cloud = EmpiricalMeasure::new(generated.clone())?;
    let w2_to_target = w2_distance(&cloud, &target)?;
    let energy = energy_distance(cloud.points(), target.points())?;
    let pairing_w2 = (train_pairs
        .iter()
        .map(|(x0, x1)| {
            x1.iter()
                .zip(x0)
                .map(|(a, b)| (a - b) * (a - b))
                .sum::<f64>()
        })
        .sum::<f64>()
        / train_pairs.len() as f64)
        .sqrt();

    Ok(ExperimentOutput {
        metrics: Metrics {
            w2_to_target,
            energy_distance: energy,
            path_energy: energy_sum / test_pairs.len() as f64,
            nfe: cfg.sample_steps,
            wall_clock_train,
            wall_clock_sample,
        },
        generated,
        ot_gap_diagnostic: (w2_to_target - pairing_w2).abs(),
    })
}

/// One results row; columns mirror [`CSV_HEADER`] exactly.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SweepRow {
    pub model: ModelKind,
    pub source: SourceKind,
    pub difficulty: f64,
    pub n_train: usize,
    pub repeat_seed: u64,
    pub w2: f64,
    pub energy_distance: f64,
    pub path_energy: f64,
    pub nfe: usize,
    pub train_seconds: f64,
    pub sample_seconds: f64,
    pub ot_gap_diagnostic: f64,
}

pub const CSV_HEADER: &str = "model,source,D,n_train,repeat_seed,w2,energy_distance,\
path_energy,nfe,train_seconds,sample_seconds,ot_gap_diagnostic";

/// Renders rows as CSV.  With `mask_wall_clock` the two timing columns are
/// zeroed so that reruns byte-compare equal.
pub fn rows_to_csv(rows: &[SweepRow], mask_wall_clock: bool) -> String {
    let mut out = String::from(CSV_HEADER);
    out.push('\n');
    for r in rows {
        let (ts, ss) = if mask_wall_clock {
            (0.0, 0.0)
        } else {
            (r.train_seconds, r.sample_seconds)
        };
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{},{},{},{},{}\n",
            r.model,
            r.source,
            r.difficulty,
            r.n_train,
            r.repeat_seed,
            r.w2,
            r.energy_distance,
            r.path_energy,
            r.nfe,
            ts,
            ss,
            r.ot_gap_diagnostic,
        ));
    }
    out
}

fn run_cell(
    kind: ModelKind,
    spec: &TaskSpec,
    cfg: &ExperimentConfig,
) -> Result<SweepRow> {
    let out = run_experiment(kind, spec, cfg)?;
    Ok(SweepRow {
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
    })
}

fn check_sweep_args(kinds: &[ModelKind], axis: &[f64], repeats: usize) -> Result<()> {
    if kinds.is_empty() {
        return Err(Error::Domain("sweep needs at least one model kind".into()));
    }
    if axis.len() < 2 || axis.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::Domain(
            "sweep axis must be strictly increasing with at least 2 values".into(),
        ));
    }
    if repeats < 3 {
        return Err(Error::Domain(format!(
            "sweeps need at least 3 repeats, got {repeats}"
        )));
    }
    Ok(())
}

/// Training budget for the difficulty study.
///
/// The velocity-regression target grows linearly with the translation
/// magnitude D while the endpoint-regression target stays on the scale of
/// the base distribution, so the two models separate only before training
/// saturates.  This deliberately tight budget (same for both models, per
/// the fairness rule) sits in that regime; the data-size study keeps the
/// longer default budget because its axis stresses the coupling, not the
/// target scale.
pub fn difficulty_study_train(base: &TrainConfig) -> TrainConfig {
    TrainConfig {
        steps: 600,
        lr_decay: vec![(360, 0.3)],
        ..base.clone()
    }
}

/// Difficulty sweep: same dataset seed per (D, repeat) cell for every
/// model, so the comparison is paired.
pub fn sweep_difficulty(
    kinds: &[ModelKind],
    d_list: &[f64],
    template: &TaskSpec,
    cfg: &ExperimentConfig,
    repeats: usize,
) -> Result<Vec<SweepRow>> {
    check_sweep_args(kinds, d_list, repeats)?;
    let mut rows = Vec::with_capacity(kinds.len() * d_list.len() * repeats);
    for &kind in kinds {
        for (di, &d) in d_list.iter().enumerate() {
            for rep in 0..repeats {
                let mut spec = template.clone();
                spec.difficulty = d;
                spec.seed = derive_seed(
                    template.seed,
                    "difficulty-cell",
                    &[di as u64, rep as u64],
                );
                rows.push(run_cell(kind, &spec, cfg)?);
            }
        }
    }
    Ok(rows)
}

/// Data-size sweep along n_train; test size and difficulty come from the
/// template.
pub fn sweep_data_size(
    kinds: &[ModelKind],
    n_list: &[usize],
    template: &TaskSpec,
    cfg: &ExperimentConfig,
    repeats: usize,
) -> Result<Vec<SweepRow>> {
    let axis: Vec<f64> = n_list.iter().map(|&n| n as f64).collect();
    check_sweep_args(kinds, &axis, repeats)?;
    let mut rows = Vec::with_capacity(kinds.len() * n_list.len() * repeats);
    for &kind in kinds {
        for (ni, &n) in n_list.iter().enumerate() {
            for rep in 0..repeats {
                let mut spec = template.clone();
                spec.n_train = n;
                spec.seed =
                    derive_seed(template.seed, "datasize-cell", &[ni as u64, rep as u64]);
                rows.push(run_cell(kind, &spec, cfg)?);
            }
        }
    }
    Ok(rows)
}

/// Which sweep column a summary groups on.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SweepAxis {
    Difficulty,
    DataSize,
}

/// Per-(model, axis value) mean and standard deviation of w2.
#[derive(Clone, Debug, PartialEq)]
pub struct CellStat {
    pub model: ModelKind,
    pub axis: f64,
    pub mean_w2: f64,
    pub sd_w2: f64,
    pub repeats: usize,
}

/// Aggregates rows into per-cell statistics, sorted by (model, axis).
pub fn summarize(rows: &[SweepRow], axis: SweepAxis) -> Vec<CellStat> {
    let key = |r: &SweepRow| match axis {
        SweepAxis::Difficulty => r.difficulty,
        SweepAxis::DataSize => r.n_train as f64,
    };
    let mut cells: Vec<(ModelKind, f64, Vec<f64>)> = Vec::new();
    for r in rows {
        let k = key(r);
        match cells
            .iter_mut()
            .find(|(m, a, _)| *m == r.model && *a == k)
        {
            Some((_, _, v)) => v.push(r.w2),
            None => cells.push((r.model, k, vec![r.w2])),
        }
    }
    let mut out: Vec<CellStat> = cells
        .into_iter()
        .map(|(model, axis, v)| {
            let n = v.len();
            let mean = v.iter().sum::<f64>() / n as f64;
            let sd = if n > 1 {
                (v.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1) as f64)
                    .sqrt()
            } else {
                0.0
            };
            CellStat {
                model,
                axis,
                mean_w2: mean,
                sd_w2: sd,
                repeats: n,
            }
        })
        .collect();
    out.sort_by(|a, b| {
        a.model
            .label()
            .cmp(b.model.label())
            .then(a.axis.partial_cmp(&b.axis).unwrap())
    });
    out
}

/// Degradation ratios r(axis) = mean_w2(axis) / mean_w2(reference) per
/// model; the reference is D_min for difficulty sweeps and n_max for
/// data-size sweeps.
pub fn degradation_ratios(stats: &[CellStat], reference_axis: f64) -> Result<Vec<(ModelKind, f64, f64)>> {
    let mut out = Vec::new();
    for s in stats {
        let base = stats
            .iter()
            .find(|r| r.model == s.model && r.axis == reference_axis)
            .ok_or_else(|| {
                Error::Domain(format!(
                    "no reference cell at axis {reference_axis} for model {}",
                    s.model
                ))
            })?;
        if base.mean_w2 <= 0.0 {
            return Err(Error::Domain(
                "reference cell has nonpositive mean w2; ratio undefined".into(),
            ));
        }
        out.push((s.model, s.axis, s.mean_w2 / base.mean_w2));
    }
    Ok(out)
}

/// Soft monotonicity check: mean w2 should not decrease as the axis grows
/// (difficulty semantics).  Violations are reported, never hard-failed,
/// since cells are stochastic.
pub fn monotonicity_flags(stats: &[CellStat]) -> Vec<String> {
    let mut flags = Vec::new();
    for w in stats.windows(2) {
        if w[0].model == w[1].model && w[1].mean_w2 < w[0].mean_w2 {
            flags.push(format!(
                "{}: mean w2 dropped from {:.4} at {} to {:.4} at {}",
                w[0].model, w[0].mean_w2, w[0].axis, w[1].mean_w2, w[1].axis
            ));
        }
    }
    flags
}
