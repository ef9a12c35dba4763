//! The flow-matching generative process.
//!
//! Training regresses the conditional velocity x₁ − x₀ on the straight-line
//! interpolant x_t = t·x₁ + (1−t)·x₀.  Sampling runs the learned field
//! backwards: with x̃_τ = x_{1−τ}, the reverse dynamics are
//! dx̃ = −v̂(x̃, 1−τ) dτ from x̃₀ = x₁ down to the generated sample at τ = 1.

use crate::error::{Error, Result};
use crate::soc::ControlledTrajectory;
use serde::{Deserialize, Serialize};

/// One interpolant draw: position, regression target, and the time used.
#[derive(Clone, Debug, PartialEq)]
pub struct FlowSample {
    pub x_t: Vec<f64>,
    pub v_target: Vec<f64>,
    pub t: f64,
}

/// A velocity-field predictor driving reverse ODE sampling.
pub trait VelocityModel {
    fn predict_v(&self, x: &[f64], t: f64) -> Vec<f64>;
}

impl<F: Fn(&[f64], f64) -> Vec<f64>> VelocityModel for F {
    fn predict_v(&self, x: &[f64], t: f64) -> Vec<f64> {
        self(x, t)
    }
}

/// Integrator for [`ode_sample`].  Heun is the default; Euler is kept for
/// ablations at identical step counts.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum OdeMethod {
    #[default]
    Heun,
    Euler,
}

/// Exact linear interpolant between a pair, with its velocity target.
pub fn interpolate(x0: &[f64], x1: &[f64], t: f64) -> Result<FlowSample> {
    if x0.len() != x1.len() {
        return Err(Error::SizeMismatch {
            expected: x0.len(),
            got: x1.len(),
        });
    }
    if !(0.0..=1.0).contains(&t) {
        return Err(Error::Domain(format!("interpolation time {t} outside [0, 1]")));
    }
    let x_t = x0
        .iter()
        .zip(x1)
        .map(|(&a, &b)| t * b + (1.0 - t) * a)
        .collect();
    let v_target = x0.iter().zip(x1).map(|(&a, &b)| b - a).collect();
    Ok(FlowSample { x_t, v_target, t })
}

/// Integrates the reverse ODE from x₁ at t = 1 down to the generated sample
/// at t = 0 on a uniform grid of `n_steps` steps.
///
/// The model is always queried at the physical time 1 − τ.  Heun spends two
/// field evaluations per step, Euler one.  The returned trajectory is
/// ordered by increasing physical time, so `states[0]` is the generated
/// sample and the last state is `x1_start`; `controls` holds the field
/// evaluation made at each node (the t = 0 node repeats the last one).
pub fn ode_sample(
    model: &dyn VelocityModel,
    x1_start: &[f64],
    n_steps: usize,
    method: OdeMethod,
) -> Result<ControlledTrajectory> {
    if n_steps == 0 {
        return Err(Error::Domain("n_steps must be positive".into()));
    }
    let n = n_steps;
    let h = 1.0 / n as f64;
    let d = x1_start.len();
    let eval = |x: &[f64], tau: f64| -> Result<Vec<f64>> {
        let v = model.predict_v(x, 1.0 - tau);
        if v.len() != d {
            return Err(Error::SizeMismatch {
                expected: d,
                got: v.len(),
            });
        }
        Ok(v)
    };

    let mut times = Vec::with_capacity(n + 1);
    let mut states = Vec::with_capacity(n + 1);
    let mut fields = Vec::with_capacity(n + 1);
    let mut x = x1_start.to_vec();
    for j in 0..n {
        let tau = j as f64 / n as f64;
        let v1 = eval(&x, tau)?;
        times.push(1.0 - tau);
        states.push(x.clone());
        fields.push(v1.clone());
        match method {
            OdeMethod::Euler => {
                for i in 0..d {
                    x[i] -= h * v1[i];
                }
            }
            OdeMethod::Heun => {
                let pred: Vec<f64> = (0..d).map(|i| x[i] - h * v1[i]).collect();
                let v2 = eval(&pred, (j + 1) as f64 / n as f64)?;
                for i in 0..d {
                    x[i] -= 0.5 * h * (v1[i] + v2[i]);
                }
            }
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::Diverged {
                step: j + 1,
                detail: "non-finite state in reverse flow".into(),
            });
        }
    }
    times.push(0.0);
    states.push(x);
    fields.push(fields[n - 1].clone());

    times.reverse();
    states.reverse();
    fields.reverse();
    Ok(ControlledTrajectory {
        times,
        states,
        controls: fields,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seeds::seeded_rng;
    use rand::Rng;
    use rand_distr::StandardNormal;

    #[test]
    fn interpolant_hits_endpoints_exactly() {
        let x0 = [0.3, -1.2, 7.0];
        let x1 = [2.0, 0.5, -3.0];
        assert_eq!(interpolate(&x0, &x1, 0.0).unwrap().x_t, x0.to_vec());
        assert_eq!(interpolate(&x0, &x1, 1.0).unwrap().x_t, x1.to_vec());
    }

    #[test]
    fn interpolant_quarter_point() {
        let s = interpolate(&[-1.0], &[3.0], 0.25).unwrap();
        assert_eq!(s.x_t, vec![0.0]);
        assert_eq!(s.v_target, vec![4.0]);
        assert_eq!(s.t, 0.25);
    }

    #[test]
    fn interpolant_rejects_bad_input() {
        assert!(interpolate(&[0.0], &[1.0, 2.0], 0.5).is_err());
        assert!(interpolate(&[0.0], &[1.0], -0.1).is_err());
        assert!(interpolate(&[0.0], &[1.0], 1.1).is_err());
    }

    #[test]
    fn interpolant_respects_affine_maps() {
        let mut rng = seeded_rng(21, "flow-affine", &[]);
        for _ in 0..50 {
            let mut gauss: Vec<f64> = (0..10).map(|_| rng.sample(StandardNormal)).collect();
            let c = gauss.split_off(8);
            let a = gauss.split_off(4);
            let x1 = gauss.split_off(2);
            let x0 = gauss;
            let t: f64 = rng.gen();
            let apply = |x: &[f64]| -> Vec<f64> {
                vec![
                    a[0] * x[0] + a[1] * x[1] + c[0],
                    a[2] * x[0] + a[3] * x[1] + c[1],
                ]
            };
            let lhs = interpolate(&apply(&x0), &apply(&x1), t).unwrap().x_t;
            let rhs = apply(&interpolate(&x0, &x1, t).unwrap().x_t);
            for (l, r) in lhs.iter().zip(&rhs) {
                assert!((l - r).abs() <= 1e-12);
            }
        }
    }

    #[test]
    fn constant_oracle_field_recovers_x0() {
        let x0 = [-0.7, 1.4];
        let x1 = [1.3, 0.2];
        let field = move |_x: &[f64], _t: f64| vec![x1[0] - x0[0], x1[1] - x0[1]];
        for method in [OdeMethod::Heun, OdeMethod::Euler] {
            let traj = ode_sample(&field, &x1, 20, method).unwrap();
            for i in 0..2 {
                assert!((traj.states[0][i] - x0[i]).abs() <= 1e-10);
            }
        }
    }

    #[test]
    fn zero_field_returns_start() {
        let zero = |x: &[f64], _t: f64| vec![0.0; x.len()];
        let x1 = [0.9, -2.5];
        let traj = ode_sample(&zero, &x1, 20, OdeMethod::Heun).unwrap();
        assert_eq!(traj.states[0], x1.to_vec());
        assert_eq!(*traj.states.last().unwrap(), x1.to_vec());
    }

    #[test]
    fn trajectory_shape_is_time_increasing() {
        let zero = |x: &[f64], _t: f64| vec![0.0; x.len()];
        let traj = ode_sample(&zero, &[1.0], 8, OdeMethod::Heun).unwrap();
        assert_eq!(traj.times.len(), 9);
        assert_eq!(traj.times[0], 0.0);
        assert_eq!(*traj.times.last().unwrap(), 1.0);
        assert!(traj.times.windows(2).all(|w| w[0] < w[1]));
        assert!(ode_sample(&zero, &[1.0], 0, OdeMethod::Heun).is_err());
    }

    /// For v(x, t) = (2 − t)·x the reverse dynamics are
    /// dx̃/dτ = −(1 + τ)·x̃, so x̃(1) = x̃(0)·e^{−3/2} exactly.
    fn endpoint_error(n: usize, method: OdeMethod) -> f64 {
        let field = |x: &[f64], t: f64| vec![(2.0 - t) * x[0]];
        let traj = ode_sample(&field, &[1.0], n, method).unwrap();
        (traj.states[0][0] - (-1.5f64).exp()).abs()
    }

    #[test]
    fn heun_is_second_order() {
        let errs: Vec<f64> = [20, 40, 80]
            .iter()
            .map(|&n| endpoint_error(n, OdeMethod::Heun))
            .collect();
        for w in errs.windows(2) {
            let ratio = w[0] / w[1];
            assert!(
                (2.8..=5.7).contains(&ratio),
                "halving h should cut error ~4x, got {ratio}"
            );
        }
    }

    #[test]
    fn euler_is_first_order() {
        let errs: Vec<f64> = [20, 40, 80]
            .iter()
            .map(|&n| endpoint_error(n, OdeMethod::Euler))
            .collect();
        for w in errs.windows(2) {
            let ratio = w[0] / w[1];
            assert!(
                (1.7..=2.5).contains(&ratio),
                "halving h should cut error ~2x, got {ratio}"
            );
        }
        assert!(endpoint_error(40, OdeMethod::Euler) > endpoint_error(40, OdeMethod::Heun));
    }

    #[test]
    fn divergent_field_reports_step() {
        let bad = |x: &[f64], _t: f64| vec![f64::INFINITY; x.len()];
        match ode_sample(&bad, &[1.0], 4, OdeMethod::Euler) {
            Err(crate::Error::Diverged { step, .. }) => assert_eq!(step, 1),
            other => panic!("expected divergence, got {other:?}"),
        }
    }
}
