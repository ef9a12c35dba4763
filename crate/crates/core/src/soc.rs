//! Optimal controllers, controlled-trajectory integration, and the two
//! control-cost certificates.
//!
//! Both transport schemes solve a stochastic-optimal-control problem with
//! cost J(u) = ∫₀¹ ½‖u_t‖² dt and endpoint constraints x₀, x₁.  Their
//! optimal controllers are closed-form:
//!
//! * flow matching      u*_FM(x,t) = (x₁ − x)/(1 − t)
//! * diffusion bridge   u*_DB(x,t) = e^{−2θ̄_{t:1}}(x₁ − x)/σ̄²_{t:1}
//!
//! The certificates integrate both controlled states numerically and compare
//! the resulting costs: under a unit diffusion coefficient (constant
//! θ = 1/(2λ²), so g ≡ 1) the bridge cost never exceeds the flow-matching
//! cost, and as θ_total → 0 the bridge controller degenerates to the
//! flow-matching controller.

use crate::error::{Error, Result};
use crate::schedule::GouSchedule;
use crate::seeds::{derive_seed, seeded_rng};
use crate::ModelKind;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

/// Controllers blow up at t = 1; evaluations at or beyond this point are
/// rejected and integration grids clip their evaluation times below it.
pub const SINGULAR_GUARD: f64 = 1e-12;

/// Integration grids never evaluate controllers past this time; the final
/// sub-step is replaced by the exact pinned endpoint x₁.
pub const GRID_CLIP: f64 = 1.0 - 1e-6;

/// Relative tolerance of the cost-inequality certificate:
/// holds ⇔ j_db ≤ j_fm + TOL·(1 + j_fm).
pub const THEOREM_TOL: f64 = 1e-7;

/// Quadrature resolution used by the cost-inequality certificate.
pub const THEOREM_N_STEPS: usize = 8192;

/// A time grid with states and control samples; the unit of cost evaluation.
#[derive(Clone, Debug)]
pub struct ControlledTrajectory {
    /// Strictly increasing, first node 0, last node 1.
    pub times: Vec<f64>,
    /// State x at each node.
    pub states: Vec<Vec<f64>>,
    /// Control sample u at each node.  The terminal node carries the last
    /// finite controller sample (the controller itself is singular at t = 1).
    pub controls: Vec<Vec<f64>>,
}

impl ControlledTrajectory {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.states.first().map_or(0, Vec::len)
    }
}

/// Outcome of one cost-inequality instance.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct CostReport {
    pub j_db: f64,
    pub j_fm: f64,
    /// j_fm − j_db.
    pub gap: f64,
    /// j_db ≤ j_fm + [`THEOREM_TOL`]·(1 + j_fm).
    pub holds: bool,
}

/// One certified random instance: its seed, its λ², and the cost outcome.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct TheoremRecord {
    pub instance_seed: u64,
    pub lambda2: f64,
    pub dim: usize,
    #[serde(flatten)]
    pub report: CostReport,
}

/// One degeneration-limit row: the rate integral and the sup over probes of
/// the relative controller deviation.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct Prop1Row {
    pub theta_total: f64,
    pub sup_relative_deviation: f64,
}

fn check_controller_args(x_t: &[f64], x1: &[f64], t: f64) -> Result<()> {
    if x_t.len() != x1.len() {
        return Err(Error::SizeMismatch {
            expected: x_t.len(),
            got: x1.len(),
        });
    }
    if !t.is_finite() || t < 0.0 {
        return Err(Error::Domain(format!("time {t} outside [0, 1)")));
    }
    if t >= 1.0 - SINGULAR_GUARD {
        return Err(Error::SingularTime { t });
    }
    Ok(())
}

/// Flow-matching optimal controller (x₁ − x_t)/(1 − t).
pub fn controller_fm(x_t: &[f64], x1: &[f64], t: f64) -> Result<Vec<f64>> {
    check_controller_args(x_t, x1, t)?;
    let inv = 1.0 / (1.0 - t);
    Ok(x_t
        .iter()
        .zip(x1)
        .map(|(&x, &y)| (y - x) * inv)
        .collect())
}

/// Diffusion-bridge optimal controller e^{−2θ̄_{t:1}}(x₁ − x_t)/σ̄²_{t:1}.
///
/// Evaluated as e^{−z}/(λ²·(1 − e^{−z})) with z = 2θ̄_{t:1} through `expm1`,
/// which stays accurate as z → 0 (the degeneration regime).
pub fn controller_db(x_t: &[f64], x1: &[f64], t: f64, sched: &GouSchedule) -> Result<Vec<f64>> {
    check_controller_args(x_t, x1, t)?;
    let z = 2.0 * sched.theta_bar(t, 1.0)?;
    let coeff = (-z).exp() / (sched.lambda2() * -(-z).exp_m1());
    Ok(x_t
        .iter()
        .zip(x1)
        .map(|(&x, &y)| (y - x) * coeff)
        .collect())
}

/// Integrates the deterministic controlled state under the optimal
/// controller of `kind` with classical fourth-order Runge–Kutta on a uniform
/// grid of `n_steps` steps.
///
/// Dynamics: FM evolves dx = u dt; DB evolves dx = [θ_t(x₁ − x) + g_t·u] dt.
/// Both controllers are singular at t = 1 while the optimal state approaches
/// x₁ at a matching rate, so the last sub-step is replaced by the exact
/// pinned endpoint x₁ and controller evaluation times are clipped to
/// [`GRID_CLIP`].  The terminal control sample extends the last finite one.
pub fn integrate_controlled_ode(
    kind: ModelKind,
    x0: &[f64],
    x1: &[f64],
    sched: &GouSchedule,
    n_steps: usize,
) -> Result<ControlledTrajectory> {
    if n_steps < 16 {
        return Err(Error::Domain(format!(
            "n_steps must be at least 16, got {n_steps}"
        )));
    }
    if x0.len() != x1.len() {
        return Err(Error::SizeMismatch {
            expected: x0.len(),
            got: x1.len(),
        });
    }
    let n = n_steps;
    let d = x0.len();
    let h = 1.0 / n as f64;

    let drift = |x: &[f64], t: f64| -> Result<Vec<f64>> {
        let t = t.min(GRID_CLIP);
        match kind {
            ModelKind::Fm => controller_fm(x, x1, t),
            ModelKind::Db => {
                let u = controller_db(x, x1, t, sched)?;
                let theta = sched.theta_at(t)?;
                let g = sched.g2_at(t)?.sqrt();
                Ok((0..d).map(|i| theta * (x1[i] - x[i]) + g * u[i]).collect())
            }
        }
    };
    let control = |x: &[f64], t: f64| -> Result<Vec<f64>> {
        let t = t.min(GRID_CLIP);
        match kind {
            ModelKind::Fm => controller_fm(x, x1, t),
            ModelKind::Db => controller_db(x, x1, t, sched),
        }
    };

    let mut times = Vec::with_capacity(n + 1);
    let mut states = Vec::with_capacity(n + 1);
    let mut controls = Vec::with_capacity(n + 1);
    let mut x = x0.to_vec();
    for k in 0..n {
        let t = k as f64 * h;
        times.push(t);
        controls.push(control(&x, t)?);
        states.push(x.clone());
        if k == n - 1 {
            break;
        }
        let k1 = drift(&x, t)?;
        let x2: Vec<f64> = (0..d).map(|i| x[i] + 0.5 * h * k1[i]).collect();
        let k2 = drift(&x2, t + 0.5 * h)?;
        let x3: Vec<f64> = (0..d).map(|i| x[i] + 0.5 * h * k2[i]).collect();
        let k3 = drift(&x3, t + 0.5 * h)?;
        let x4: Vec<f64> = (0..d).map(|i| x[i] + h * k3[i]).collect();
        let k4 = drift(&x4, t + h)?;
        for i in 0..d {
            x[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::Diverged {
                step: k + 1,
                detail: format!("non-finite state integrating the {kind} controller"),
            });
        }
    }
    // Endpoint pinning: the constraint x₁ is exact; the terminal control
    // extends the last finite sample.
    times.push(1.0);
    states.push(x1.to_vec());
    controls.push(controls[n - 1].clone());
    Ok(ControlledTrajectory {
        times,
        states,
        controls,
    })
}

/// Trapezoid quadrature of ½‖u_t‖² over the trajectory grid.
pub fn path_cost(traj: &ControlledTrajectory) -> Result<f64> {
    let n = traj.times.len();
    if n < 2 || traj.controls.len() != n {
        return Err(Error::Domain(format!(
            "trajectory must carry at least 2 nodes with matching controls, got {n} times and {} controls",
            traj.controls.len()
        )));
    }
    let half_sq = |u: &[f64]| 0.5 * u.iter().map(|v| v * v).sum::<f64>();
    let mut cost = 0.0;
    for k in 0..n - 1 {
        let dt = traj.times[k + 1] - traj.times[k];
        cost += 0.5 * dt * (half_sq(&traj.controls[k]) + half_sq(&traj.controls[k + 1]));
    }
    Ok(cost)
}

/// Certifies the cost inequality J(u*_DB) ≤ J(u*_FM) on random instances.
///
/// Each instance draws x₀, x₁ from a seeded standard normal in R^dim and λ²
/// log-uniform in [0.01, 10], then uses the constant schedule θ = 1/(2λ²)
/// (so g ≡ 1), integrates both optimal trajectories at
/// [`THEOREM_N_STEPS`] steps, and compares costs at relative tolerance
/// [`THEOREM_TOL`].  Instances are independently seeded, so any subset can
/// be recomputed in isolation.
pub fn certify_theorem1(instances: usize, dim: usize, seed: u64) -> Result<Vec<TheoremRecord>> {
    if dim == 0 {
        return Err(Error::Domain("dim must be positive".into()));
    }
    let mut out = Vec::with_capacity(instances);
    for i in 0..instances {
        let instance_seed = derive_seed(seed, "theorem1-instance", &[i as u64, dim as u64]);
        let mut rng = seeded_rng(instance_seed, "theorem1-draws", &[]);
        let lambda2 = (0.01f64.ln() + rng.gen::<f64>() * (10.0f64.ln() - 0.01f64.ln())).exp();
        let x0: Vec<f64> = (0..dim).map(|_| rng.sample(StandardNormal)).collect();
        let x1: Vec<f64> = (0..dim).map(|_| rng.sample(StandardNormal)).collect();
        let sched = GouSchedule::constant(1.0 / (2.0 * lambda2), lambda2)?;
        let j_db = path_cost(&integrate_controlled_ode(
            ModelKind::Db,
            &x0,
            &x1,
            &sched,
            THEOREM_N_STEPS,
        )?)?;
        let j_fm = path_cost(&integrate_controlled_ode(
            ModelKind::Fm,
            &x0,
            &x1,
            &sched,
            THEOREM_N_STEPS,
        )?)?;
        out.push(TheoremRecord {
            instance_seed,
            lambda2,
            dim,
            report: CostReport {
                j_db,
                j_fm,
                gap: j_fm - j_db,
                holds: j_db <= j_fm + THEOREM_TOL * (1.0 + j_fm),
            },
        });
    }
    Ok(out)
}

/// True iff every certified instance holds.
pub fn theorem1_all_hold(records: &[TheoremRecord]) -> bool {
    records.iter().all(|r| r.report.holds)
}

/// Renders certificate records as CSV (stable byte-for-byte given inputs).
pub fn theorem1_csv(records: &[TheoremRecord]) -> String {
    let mut out = String::from("instance_seed,lambda2,j_db,j_fm,gap,holds\n");
    for r in records {
        out.push_str(&format!(
            "{},{},{},{},{},{}\n",
            r.instance_seed, r.lambda2, r.report.j_db, r.report.j_fm, r.report.gap, r.report.holds
        ));
    }
    out
}

/// Certifies the degeneration limit: as θ_total → 0 with λ² = 1/(2θ_total)
/// (g ≡ 1), the DB controller converges to the FM controller.
///
/// For each θ_total, the sup over a fixed set of random probes
/// (x_t, x₁ ~ N(0, I₂), t ~ U[0, 0.95], probes with x_t = x₁ excluded) of
/// ‖u_db − u_fm‖/(‖u_fm‖ + 1e−12) is recorded.  The same probe set is reused
/// across all θ_total entries, which makes the per-probe deviation — and
/// hence the sup — strictly monotone in θ_total.
///
/// Errors with [`Error::Certificate`] if the deviation sequence is not
/// strictly decreasing, or if the final entry exceeds 1e−3 while its
/// θ_total ≤ 1e−4.
pub fn certify_prop1(thetas: &[f64], probe_points: usize, seed: u64) -> Result<Vec<Prop1Row>> {
    if thetas.is_empty() || probe_points == 0 {
        return Err(Error::Domain(
            "need at least one theta_total and one probe".into(),
        ));
    }
    if thetas.windows(2).any(|w| w[0] <= w[1]) || thetas.iter().any(|&t| t <= 0.0) {
        return Err(Error::Domain(
            "thetas must be positive and strictly decreasing".into(),
        ));
    }

    let mut probes = Vec::with_capacity(probe_points);
    let mut rng = seeded_rng(seed, "prop1-probes", &[]);
    while probes.len() < probe_points {
        let x_t: Vec<f64> = (0..2).map(|_| rng.sample(StandardNormal)).collect();
        let x1: Vec<f64> = (0..2).map(|_| rng.sample(StandardNormal)).collect();
        let t: f64 = 0.95 * rng.gen::<f64>();
        let sep: f64 = x_t
            .iter()
            .zip(&x1)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt();
        if sep < 1e-12 {
            continue; // both controllers return 0; 0/0 probe carries no signal
        }
        probes.push((x_t, x1, t));
    }

    let mut rows = Vec::with_capacity(thetas.len());
    for &theta_total in thetas {
        let sched = GouSchedule::constant_unit_g(theta_total)?;
        let mut sup = 0.0f64;
        for (x_t, x1, t) in &probes {
            let u_db = controller_db(x_t, x1, *t, &sched)?;
            let u_fm = controller_fm(x_t, x1, *t)?;
            let diff: f64 = u_db
                .iter()
                .zip(&u_fm)
                .map(|(a, b)| (a - b) * (a - b))
                .sum::<f64>()
                .sqrt();
            let norm: f64 = u_fm.iter().map(|v| v * v).sum::<f64>().sqrt();
            sup = sup.max(diff / (norm + 1e-12));
        }
        rows.push(Prop1Row {
            theta_total,
            sup_relative_deviation: sup,
        });
    }

    for w in rows.windows(2) {
        if w[0].sup_relative_deviation <= w[1].sup_relative_deviation {
            return Err(Error::Certificate(format!(
                "controller deviation not strictly decreasing: {} at theta_total {} vs {} at {}",
                w[0].sup_relative_deviation,
                w[0].theta_total,
                w[1].sup_relative_deviation,
                w[1].theta_total
            )));
        }
    }
    let last = rows.last().expect("nonempty by construction");
    if last.theta_total <= 1e-4 && last.sup_relative_deviation > 1e-3 {
        return Err(Error::Certificate(format!(
            "deviation {} at theta_total {} exceeds 1e-3",
            last.sup_relative_deviation, last.theta_total
        )));
    }
    Ok(rows)
}

/// Renders degeneration rows as CSV.
pub fn prop1_csv(rows: &[Prop1Row]) -> String {
    let mut out = String::from("theta_total,sup_relative_deviation\n");
    for r in rows {
        out.push_str(&format!("{},{}\n", r.theta_total, r.sup_relative_deviation));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sub(a: &[f64], b: &[f64]) -> Vec<f64> {
        a.iter().zip(b).map(|(x, y)| x - y).collect()
    }

    fn norm(v: &[f64]) -> f64 {
        v.iter().map(|x| x * x).sum::<f64>().sqrt()
    }

    #[test]
    fn fm_controller_values() {
        let u = controller_fm(&[0.0], &[1.0], 0.75).unwrap();
        assert_eq!(u, vec![4.0]);
        let zero = controller_fm(&[1.0, -2.0], &[1.0, -2.0], 0.3).unwrap();
        assert_eq!(zero, vec![0.0, 0.0]);
    }

    #[test]
    fn fm_controller_on_optimal_line_is_displacement() {
        let x0 = [0.5, -1.0];
        let x1 = [2.0, 3.0];
        for t in [0.0, 0.3, 0.9] {
            let x_t: Vec<f64> = (0..2).map(|i| t * x1[i] + (1.0 - t) * x0[i]).collect();
            let u = controller_fm(&x_t, &x1, t).unwrap();
            for i in 0..2 {
                assert!((u[i] - (x1[i] - x0[i])).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn controllers_reject_singular_times() {
        assert!(matches!(
            controller_fm(&[0.0], &[1.0], 1.0 - 1e-13),
            Err(Error::SingularTime { .. })
        ));
        let sched = GouSchedule::constant_unit_g(0.5).unwrap();
        assert!(controller_db(&[0.0], &[1.0], 1.0, &sched).is_err());
        assert!(controller_fm(&[0.0], &[1.0, 2.0], 0.5).is_err());
    }

    #[test]
    fn db_controller_frozen_value() {
        // g ≡ 1 regime, λ² = 1, θ = 1/2, probed at t = 0:
        // e^{−2·θ̄_{0:1}}/σ̄²_{0:1} = e^{−1}/(1 − e^{−1})
        let sched = GouSchedule::constant_unit_g(0.5).unwrap();
        assert_eq!(sched.lambda2(), 1.0);
        let u = controller_db(&[0.0], &[1.0], 0.0, &sched).unwrap();
        let expected = (-1.0f64).exp() / (1.0 - (-1.0f64).exp());
        assert!((u[0] - expected).abs() < 1e-15);
        assert!((u[0] - 0.581_976_706_869_326_6).abs() < 1e-14);
        let zero = controller_db(&[1.0], &[1.0], 0.4, &sched).unwrap();
        assert_eq!(zero, vec![0.0]);
    }

    #[test]
    fn db_controller_degenerates_to_fm() {
        let sched = GouSchedule::constant_unit_g(1e-6).unwrap();
        for t in [0.0, 0.5, 0.9] {
            let x_t = [0.3, -0.7];
            let x1 = [1.5, 0.2];
            let u_db = controller_db(&x_t, &x1, t, &sched).unwrap();
            let u_fm = controller_fm(&x_t, &x1, t).unwrap();
            let rel = norm(&sub(&u_db, &u_fm)) / norm(&u_fm);
            assert!(rel <= 1e-5, "relative deviation {rel} at t = {t}");
        }
    }

    #[test]
    fn fm_trajectory_is_the_straight_line() {
        let sched = GouSchedule::constant_unit_g(0.5).unwrap();
        let x0 = [0.5, -1.0];
        let x1 = [2.0, 3.0];
        let traj = integrate_controlled_ode(ModelKind::Fm, &x0, &x1, &sched, 64).unwrap();
        for (k, t) in traj.times.iter().enumerate() {
            for i in 0..2 {
                let line = t * x1[i] + (1.0 - t) * x0[i];
                assert!((traj.states[k][i] - line).abs() <= 1e-8);
            }
        }
        assert_eq!(traj.states[0], x0.to_vec());
        assert_eq!(traj.states[traj.len() - 1], x1.to_vec());
        assert_eq!(traj.times[0], 0.0);
        assert_eq!(*traj.times.last().unwrap(), 1.0);
    }

    #[test]
    fn db_trajectory_fixed_point_when_endpoints_coincide() {
        let sched = GouSchedule::constant_unit_g(0.5).unwrap();
        let x = [0.7, -0.2];
        let traj = integrate_controlled_ode(ModelKind::Db, &x, &x, &sched, 64).unwrap();
        for state in &traj.states {
            for i in 0..2 {
                assert!((state[i] - x[i]).abs() <= 1e-10);
            }
        }
    }

    #[test]
    fn db_trajectory_matches_closed_form_mean_at_interior_node() {
        // constant θ = 1/2, λ² = 1: the optimal state is
        // x_t = x₁ + a_t (x₀ − x₁) with a_t = e^{−θ̄_{0:t}}·σ̄²_{t:1}/σ̄²_{0:1};
        // fourth-order decay of the error at the fixed node t = 1/2.
        let sched = GouSchedule::constant_unit_g(0.5).unwrap();
        let a_half = (-0.25f64).exp() * (-(-0.5f64).exp_m1()) / (-(-1.0f64).exp_m1());
        let exact = 1.0 - a_half; // x₀ = 0, x₁ = 1
        let mut errs = Vec::new();
        for n in [32usize, 64, 128] {
            let traj = integrate_controlled_ode(ModelKind::Db, &[0.0], &[1.0], &sched, n).unwrap();
            let mid = n / 2;
            assert_eq!(traj.times[mid], 0.5);
            errs.push((traj.states[mid][0] - exact).abs());
        }
        for w in errs.windows(2) {
            let ratio = w[0] / w[1];
            assert!(
                (8.0..=32.0).contains(&ratio),
                "fourth-order decay violated: ratio {ratio}, errors {errs:?}"
            );
        }
        // pinned endpoint is exact
        let traj = integrate_controlled_ode(ModelKind::Db, &[0.0], &[1.0], &sched, 4096).unwrap();
        assert_eq!(traj.states.last().unwrap()[0], 1.0);
        assert!((traj.states[4095][0] - 1.0).abs() < 1e-3);
    }

    #[test]
    fn rejects_coarse_grids() {
        let sched = GouSchedule::constant_unit_g(0.5).unwrap();
        assert!(integrate_controlled_ode(ModelKind::Fm, &[0.0], &[1.0], &sched, 15).is_err());
    }

    #[test]
    fn fm_cost_identity() {
        let sched = GouSchedule::constant_unit_g(0.5).unwrap();
        let traj = integrate_controlled_ode(ModelKind::Fm, &[0.0], &[1.0], &sched, 64).unwrap();
        assert!((path_cost(&traj).unwrap() - 0.5).abs() <= 1e-8);
        let x0 = [1.0, -2.0, 0.5];
        let x1 = [0.0, 1.0, 2.5];
        let traj = integrate_controlled_ode(ModelKind::Fm, &x0, &x1, &sched, 64).unwrap();
        let expected = 0.5 * norm(&sub(&x1, &x0)).powi(2);
        assert!((path_cost(&traj).unwrap() - expected).abs() <= 1e-8);
    }

    #[test]
    fn db_cost_matches_quadrature_oracle() {
        // θ = 1/2, λ² = 1, x₀ = 0, x₁ = 1: along the optimal path
        // u(t) = e^{t/2−1}/(1 − e^{−1}), so J = ∫ ½u² dt = 1/(2(e−1)).
        let sched = GouSchedule::constant_unit_g(0.5).unwrap();
        let traj =
            integrate_controlled_ode(ModelKind::Db, &[0.0], &[1.0], &sched, THEOREM_N_STEPS)
                .unwrap();
        let j_db = path_cost(&traj).unwrap();
        let oracle = 0.5 / (1.0f64.exp() - 1.0);
        assert!(
            (j_db - oracle).abs() <= 1e-7,
            "j_db = {j_db}, oracle = {oracle}"
        );
        assert!(j_db <= 0.5);
    }

    #[test]
    fn cost_rejects_degenerate_trajectories() {
        let traj = ControlledTrajectory {
            times: vec![0.0],
            states: vec![vec![0.0]],
            controls: vec![vec![0.0]],
        };
        assert!(path_cost(&traj).is_err());
    }

    #[test]
    fn cost_scales_quadratically() {
        let sched = GouSchedule::constant_unit_g(0.5).unwrap();
        let x0 = [0.4, -0.3];
        let x1 = [-1.0, 2.0];
        let c = 3.0;
        for kind in [ModelKind::Db, ModelKind::Fm] {
            let j1 = path_cost(&integrate_controlled_ode(kind, &x0, &x1, &sched, 256).unwrap())
                .unwrap();
            let xc0: Vec<f64> = x0.iter().map(|v| c * v).collect();
            let xc1: Vec<f64> = x1.iter().map(|v| c * v).collect();
            let jc = path_cost(&integrate_controlled_ode(kind, &xc0, &xc1, &sched, 256).unwrap())
                .unwrap();
            assert!((jc - c * c * j1).abs() <= 1e-10 * (1.0 + jc.abs()));
        }
    }

    #[test]
    fn theorem_certificate_smoke() {
        let records = certify_theorem1(40, 2, 20_240_817).unwrap();
        assert_eq!(records.len(), 40);
        assert!(theorem1_all_hold(&records));
        for r in &records {
            assert!((0.01..=10.0).contains(&r.lambda2));
            assert!(r.report.gap >= -THEOREM_TOL * (1.0 + r.report.j_fm));
        }
        let csv = theorem1_csv(&records);
        assert_eq!(csv.lines().count(), 41);
        assert!(csv.starts_with("instance_seed,lambda2,j_db,j_fm,gap,holds\n"));
    }

    #[test]
    fn theorem_certificate_is_deterministic() {
        let a = theorem1_csv(&certify_theorem1(8, 3, 7).unwrap());
        let b = theorem1_csv(&certify_theorem1(8, 3, 7).unwrap());
        assert_eq!(a, b);
    }

    #[test]
    fn degenerate_instance_has_zero_costs() {
        let sched = GouSchedule::constant_unit_g(0.5).unwrap();
        let x = [1.3, -0.4];
        let j_db =
            path_cost(&integrate_controlled_ode(ModelKind::Db, &x, &x, &sched, 64).unwrap())
                .unwrap();
        let j_fm =
            path_cost(&integrate_controlled_ode(ModelKind::Fm, &x, &x, &sched, 64).unwrap())
                .unwrap();
        assert_eq!(j_db, 0.0);
        assert_eq!(j_fm, 0.0);
    }

    #[test]
    fn prop1_deviations_decrease() {
        let rows = certify_prop1(&[1.0, 0.1, 0.01, 1e-3, 1e-4], 64, 99).unwrap();
        assert_eq!(rows.len(), 5);
        for w in rows.windows(2) {
            assert!(w[0].sup_relative_deviation > w[1].sup_relative_deviation);
        }
        assert!(rows.last().unwrap().sup_relative_deviation <= 1e-3);
        // Taylor regime: deviation ~ θ̄·(1−t) ≤ 2θ
        let tiny = certify_prop1(&[1e-8], 64, 99).unwrap();
        assert!(tiny[0].sup_relative_deviation <= 1e-7);
    }

    #[test]
    fn prop1_rejects_unordered_thetas() {
        assert!(certify_prop1(&[0.1, 1.0], 16, 1).is_err());
        assert!(certify_prop1(&[0.1, -0.5], 16, 1).is_err());
        assert!(certify_prop1(&[], 16, 1).is_err());
    }
}
