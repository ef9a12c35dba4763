//! Gaussian Ornstein–Uhlenbeck noise schedules.
//!
//! A schedule fixes the mean-reversion rate θ_t ≥ 0 on t ∈ [0,1] and the
//! stationary variance λ² > 0, with the diffusion coefficient tied to both by
//! g_t² = 2λ²θ_t.  Everything downstream consumes three derived quantities:
//!
//! * `theta_at`   — θ_t itself,
//! * `theta_bar`  — θ̄_{a:b} = ∫_a^b θ_z dz,
//! * `sigma2_bar` — σ̄²_{a:b} = λ²(1 − e^{−2·θ̄_{a:b}}).
//!
//! Two functional forms are supported: a constant rate, and a "flipped"
//! cosine shape that starts at zero rate and accelerates toward t = 1.  The
//! cosine formula fixes only the shape; its overall scale is chosen so that
//! ∫₀¹ θ_z dz = `theta_total` (default −ln 0.005, pinning the terminal
//! attenuation e^{−θ̄_{0:1}} to 0.005).

use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};
use std::f64::consts::FRAC_PI_2;

/// Functional form of the rate curve θ_t.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ScheduleKind {
    /// θ_t ≡ theta_total.
    Constant,
    /// 1 − cos²(((t+s)/(1+s))·π/2)/cos²((s/(1+s))·π/2), rescaled to integrate
    /// to theta_total.
    FlippedCosine,
}

/// Plain-data schedule description; validated by [`GouSchedule::new`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ScheduleConfig {
    pub kind: ScheduleKind,
    /// Smoothing offset of the cosine shape (ignored by the constant kind).
    pub s: f64,
    /// Stationary variance λ².
    pub lambda2: f64,
    /// Target rate integral θ̄_{0:1} = ∫₀¹ θ_z dz.
    pub theta_total: f64,
    /// Node count of the cached cumulative-rate table (cosine kind only).
    pub grid_resolution: usize,
}

impl Default for ScheduleConfig {
    fn default() -> Self {
        ScheduleConfig {
            kind: ScheduleKind::FlippedCosine,
            s: 0.008,
            lambda2: (30.0 / 255.0) * (30.0 / 255.0),
            theta_total: -(0.005f64).ln(),
            grid_resolution: 100_001,
        }
    }
}

/// One node of the cached cumulative table: Θ(t_i) and θ(t_i).
#[derive(Clone, Copy)]
struct Node {
    cum: f64,
    rate: f64,
}

/// A validated, immutable noise schedule.
///
/// Construction precomputes a cumulative-rate table for the cosine kind so
/// that `theta_bar`, which controllers call in inner loops, is a table lookup
/// with cubic Hermite interpolation (node values and node derivatives are
/// both closed-form, so the interpolation error is far below the 1e−10
/// contract).  Immutable after construction; safe to share across threads.
pub struct GouSchedule {
    cfg: ScheduleConfig,
    /// cos²(φ(0)) of the cosine shape.
    cos2_phi0: f64,
    /// Scale factor mapping the raw cosine shape onto theta_total.
    scale: f64,
    /// Cumulative table at uniform nodes; empty for the constant kind.
    table: Vec<Node>,
}

impl GouSchedule {
    /// Validates the configuration and precomputes lookup tables.
    pub fn new(cfg: ScheduleConfig) -> Result<Self> {
        if !(cfg.lambda2.is_finite() && cfg.lambda2 > 0.0) {
            return Err(Error::Config(format!(
                "lambda2 must be finite and positive, got {}",
                cfg.lambda2
            )));
        }
        if !(cfg.theta_total.is_finite() && cfg.theta_total > 0.0) {
            return Err(Error::Config(format!(
                "theta_total must be finite and positive, got {}",
                cfg.theta_total
            )));
        }
        match cfg.kind {
            ScheduleKind::Constant => Ok(GouSchedule {
                cfg,
                cos2_phi0: 1.0,
                scale: 0.0,
                table: Vec::new(),
            }),
            ScheduleKind::FlippedCosine => {
                if !(cfg.s.is_finite() && cfg.s > 0.0) {
                    return Err(Error::Config(format!(
                        "cosine offset s must be finite and positive, got {}",
                        cfg.s
                    )));
                }
                if cfg.grid_resolution < 2 {
                    return Err(Error::Config(format!(
                        "grid_resolution must be at least 2, got {}",
                        cfg.grid_resolution
                    )));
                }
                let phi0 = phi(cfg.s, 0.0);
                let cos2_phi0 = phi0.cos() * phi0.cos();
                let raw_total = raw_cum(cfg.s, cos2_phi0, 1.0);
                let scale = cfg.theta_total / raw_total;
                let n = cfg.grid_resolution;
                let table = (0..n)
                    .map(|i| {
                        let t = i as f64 / (n - 1) as f64;
                        Node {
                            cum: scale * raw_cum(cfg.s, cos2_phi0, t),
                            rate: scale * raw_rate(cfg.s, cos2_phi0, t),
                        }
                    })
                    .collect();
                Ok(GouSchedule {
                    cfg,
                    cos2_phi0,
                    scale,
                    table,
                })
            }
        }
    }

    /// Constant-rate schedule with the given λ².
    pub fn constant(theta_total: f64, lambda2: f64) -> Result<Self> {
        GouSchedule::new(ScheduleConfig {
            kind: ScheduleKind::Constant,
            s: 0.0,
            lambda2,
            theta_total,
            grid_resolution: 2,
        })
    }

    /// Constant-rate schedule with λ² = 1/(2·theta_total), so that
    /// g_t² = 2λ²θ_t ≡ 1.  This is the regime of the cost-inequality and
    /// degeneration certificates.
    pub fn constant_unit_g(theta_total: f64) -> Result<Self> {
        GouSchedule::constant(theta_total, 1.0 / (2.0 * theta_total))
    }

    pub fn config(&self) -> &ScheduleConfig {
        &self.cfg
    }

    pub fn lambda2(&self) -> f64 {
        self.cfg.lambda2
    }

    /// The rate θ_t.
    pub fn theta_at(&self, t: f64) -> Result<f64> {
        check_time(t)?;
        Ok(match self.cfg.kind {
            ScheduleKind::Constant => self.cfg.theta_total,
            ScheduleKind::FlippedCosine => {
                (self.scale * raw_rate(self.cfg.s, self.cos2_phi0, t)).max(0.0)
            }
        })
    }

    /// The squared diffusion coefficient g_t² = 2λ²θ_t (derived, never
    /// stored independently).
    pub fn g2_at(&self, t: f64) -> Result<f64> {
        Ok(2.0 * self.cfg.lambda2 * self.theta_at(t)?)
    }

    /// The accumulated rate θ̄_{a:b} = ∫_a^b θ_z dz for 0 ≤ a ≤ b ≤ 1.
    pub fn theta_bar(&self, a: f64, b: f64) -> Result<f64> {
        check_interval(a, b)?;
        Ok(match self.cfg.kind {
            ScheduleKind::Constant => self.cfg.theta_total * (b - a),
            ScheduleKind::FlippedCosine => (self.cum_at(b) - self.cum_at(a)).max(0.0),
        })
    }

    /// The bridged variance σ̄²_{a:b} = λ²(1 − e^{−2·θ̄_{a:b}}).
    ///
    /// Zero exactly when a = b; strictly positive when θ̄_{a:b} > 0; always
    /// below λ².
    pub fn sigma2_bar(&self, a: f64, b: f64) -> Result<f64> {
        let tb = self.theta_bar(a, b)?;
        Ok(self.cfg.lambda2 * (-(-2.0 * tb).exp_m1()))
    }

    /// Cumulative rate Θ(t) from the cached table, cubic Hermite between
    /// nodes (node derivative = θ at the node).
    fn cum_at(&self, t: f64) -> f64 {
        let n = self.table.len();
        let x = t * (n - 1) as f64;
        let i = (x.floor() as usize).min(n - 2);
        let u = x - i as f64;
        let lo = self.table[i];
        let hi = self.table[i + 1];
        let h = 1.0 / (n - 1) as f64;
        let u2 = u * u;
        let u3 = u2 * u;
        let h00 = 2.0 * u3 - 3.0 * u2 + 1.0;
        let h10 = u3 - 2.0 * u2 + u;
        let h01 = -2.0 * u3 + 3.0 * u2;
        let h11 = u3 - u2;
        h00 * lo.cum + h10 * h * lo.rate + h01 * hi.cum + h11 * h * hi.rate
    }
}

/// Cosine phase φ(t) = ((t+s)/(1+s))·π/2.
fn phi(s: f64, t: f64) -> f64 {
    ((t + s) / (1.0 + s)) * FRAC_PI_2
}

/// Unscaled rate shape: 1 − cos²φ(t)/cos²φ(0).
fn raw_rate(s: f64, cos2_phi0: f64, t: f64) -> f64 {
    let c = phi(s, t).cos();
    1.0 - (c * c) / cos2_phi0
}

/// Antiderivative of `raw_rate` from 0 to t, in closed form:
/// ∫cos²φ(z) dz = (2(1+s)/π)(φ/2 + sin(2φ)/4) evaluated at the endpoints.
fn raw_cum(s: f64, cos2_phi0: f64, t: f64) -> f64 {
    let g = |t: f64| {
        let p = phi(s, t);
        (2.0 * (1.0 + s) / std::f64::consts::PI) * (0.5 * p + 0.25 * (2.0 * p).sin())
    };
    t - (g(t) - g(0.0)) / cos2_phi0
}

fn check_time(t: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&t) || !t.is_finite() {
        return Err(Error::Domain(format!("time {t} outside [0, 1]")));
    }
    Ok(())
}

fn check_interval(a: f64, b: f64) -> Result<()> {
    check_time(a)?;
    check_time(b)?;
    if a > b {
        return Err(Error::Domain(format!("interval start {a} exceeds end {b}")));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    fn default_cosine() -> GouSchedule {
        GouSchedule::new(ScheduleConfig::default()).unwrap()
    }

    /// Adaptive Simpson quadrature, used as an independent oracle for the
    /// cached cumulative table.
    fn simpson_adaptive(f: &dyn Fn(f64) -> f64, a: f64, b: f64, tol: f64) -> f64 {
        fn simpson(f: &dyn Fn(f64) -> f64, a: f64, fa: f64, b: f64, fb: f64) -> (f64, f64) {
            let m = 0.5 * (a + b);
            let fm = f(m);
            ((b - a) / 6.0 * (fa + 4.0 * fm + fb), fm)
        }
        fn recurse(
            f: &dyn Fn(f64) -> f64,
            a: f64,
            fa: f64,
            b: f64,
            fb: f64,
            whole: f64,
            fm: f64,
            tol: f64,
            depth: u32,
        ) -> f64 {
            let m = 0.5 * (a + b);
            let (left, flm) = simpson(f, a, fa, m, fm);
            let (right, frm) = simpson(f, m, fm, b, fb);
            if depth == 0 || (left + right - whole).abs() <= 15.0 * tol {
                left + right + (left + right - whole) / 15.0
            } else {
                recurse(f, a, fa, m, fm, left, flm, 0.5 * tol, depth - 1)
                    + recurse(f, m, fm, b, fb, right, frm, 0.5 * tol, depth - 1)
            }
        }
        let fa = f(a);
        let fb = f(b);
        let (whole, fm) = simpson(f, a, fa, b, fb);
        recurse(f, a, fa, b, fb, whole, fm, tol, 48)
    }

    #[test]
    fn constant_kind_is_flat_and_exact() {
        let sched = GouSchedule::constant(0.5, 1.0).unwrap();
        for t in [0.0, 0.25, 0.7, 1.0] {
            assert_eq!(sched.theta_at(t).unwrap(), 0.5);
        }
        // 2·θ̄_{t:1} = (1−t)/λ² in the unit-g regime with λ² = 1
        let t = 0.3;
        let tb = sched.theta_bar(t, 1.0).unwrap();
        assert!((2.0 * tb - (1.0 - t)).abs() < 1e-15);
    }

    #[test]
    fn constant_sigma2_matches_closed_form() {
        let sched = GouSchedule::constant(0.5, 1.0).unwrap();
        let s2 = sched.sigma2_bar(0.0, 1.0).unwrap();
        assert!((s2 - 0.632_120_558_828_557_7).abs() < 1e-15);
        assert_eq!(sched.sigma2_bar(0.4, 0.4).unwrap(), 0.0);
    }

    #[test]
    fn cosine_rate_is_zero_at_origin() {
        let sched = default_cosine();
        assert_eq!(sched.theta_at(0.0).unwrap(), 0.0);
        assert!(sched.theta_at(1.0).unwrap() > 0.0);
    }

    #[test]
    fn cosine_total_integral_hits_target() {
        let sched = default_cosine();
        let total = sched.theta_bar(0.0, 1.0).unwrap();
        assert!((total - 5.298_317_366_548_036).abs() < 1e-10);
    }

    #[test]
    fn cosine_table_matches_adaptive_quadrature() {
        let sched = default_cosine();
        let f = |t: f64| sched.theta_at(t).unwrap();
        let mut rng = crate::seeds::seeded_rng(11, "schedule-quadrature", &[]);
        for _ in 0..50 {
            let mut a: f64 = rng.gen();
            let mut b: f64 = rng.gen();
            if a > b {
                std::mem::swap(&mut a, &mut b);
            }
            let oracle = simpson_adaptive(&f, a, b, 1e-13);
            let got = sched.theta_bar(a, b).unwrap();
            assert!(
                (got - oracle).abs() <= 1e-10,
                "theta_bar({a}, {b}) = {got} vs oracle {oracle}"
            );
        }
    }

    #[test]
    fn theta_bar_is_additive() {
        let sched = default_cosine();
        let mut rng = crate::seeds::seeded_rng(12, "schedule-additivity", &[]);
        for _ in 0..100 {
            let mut ts = [rng.gen::<f64>(), rng.gen::<f64>(), rng.gen::<f64>()];
            ts.sort_by(|x, y| x.partial_cmp(y).unwrap());
            let [a, b, c] = ts;
            let lhs = sched.theta_bar(a, b).unwrap() + sched.theta_bar(b, c).unwrap();
            let rhs = sched.theta_bar(a, c).unwrap();
            assert!((lhs - rhs).abs() <= 1e-10);
        }
    }

    #[test]
    fn theta_bar_is_monotone_in_endpoints() {
        let sched = default_cosine();
        let grid: Vec<f64> = (0..=40).map(|i| i as f64 / 40.0).collect();
        for w in grid.windows(2) {
            assert!(sched.theta_bar(0.0, w[1]).unwrap() >= sched.theta_bar(0.0, w[0]).unwrap());
            assert!(sched.theta_bar(w[0], 1.0).unwrap() >= sched.theta_bar(w[1], 1.0).unwrap());
            assert!(sched.theta_at(w[0]).unwrap() >= 0.0);
        }
    }

    #[test]
    fn sigma2_bounds_and_semigroup_identity() {
        let sched = default_cosine();
        let lam2 = sched.lambda2();
        let mut rng = crate::seeds::seeded_rng(13, "schedule-sigma2", &[]);
        for _ in 0..100 {
            let mut ts = [rng.gen::<f64>(), rng.gen::<f64>(), rng.gen::<f64>()];
            ts.sort_by(|x, y| x.partial_cmp(y).unwrap());
            let [a, b, c] = ts;
            let s2_ab = sched.sigma2_bar(a, b).unwrap();
            let s2_bc = sched.sigma2_bar(b, c).unwrap();
            let s2_ac = sched.sigma2_bar(a, c).unwrap();
            assert!((0.0..lam2).contains(&s2_ab));
            // variance composition across an intermediate time
            let damp = (-2.0 * sched.theta_bar(b, c).unwrap()).exp();
            assert!((s2_ac - (s2_bc + damp * s2_ab)).abs() <= 1e-14);
        }
    }

    #[test]
    fn g2_is_derived_from_theta() {
        let sched = default_cosine();
        let lam2 = sched.lambda2();
        let mut rng = crate::seeds::seeded_rng(14, "schedule-g2", &[]);
        for _ in 0..100 {
            let t: f64 = rng.gen();
            let g2 = sched.g2_at(t).unwrap();
            assert_eq!(g2, 2.0 * lam2 * sched.theta_at(t).unwrap());
        }
    }

    #[test]
    fn unit_g_limit_recovers_linear_variance() {
        // constant θ with 2λ²θ = 1: σ̄²_{t:1} → (1−t) as λ² grows
        let t = 0.3;
        let mut last_err = f64::INFINITY;
        for lam2 in [10.0, 1e3, 1e5] {
            let sched = GouSchedule::constant(1.0 / (2.0 * lam2), lam2).unwrap();
            let s2 = sched.sigma2_bar(t, 1.0).unwrap();
            let err = (s2 - (1.0 - t)).abs();
            assert!(err <= (1.0 - t) * (1.0 - t) / (2.0 * lam2) * 1.001);
            assert!(err < last_err);
            last_err = err;
        }
    }

    #[test]
    fn domain_errors() {
        let sched = default_cosine();
        assert!(sched.theta_at(-0.1).is_err());
        assert!(sched.theta_at(1.1).is_err());
        assert!(sched.theta_bar(0.6, 0.4).is_err());
        assert!(sched.sigma2_bar(0.6, 0.4).is_err());
        assert!(GouSchedule::constant(0.5, 0.0).is_err());
        assert!(GouSchedule::constant(-1.0, 1.0).is_err());
        assert!(GouSchedule::new(ScheduleConfig {
            s: 0.0,
            ..ScheduleConfig::default()
        })
        .is_err());
        assert!(GouSchedule::new(ScheduleConfig {
            grid_resolution: 1,
            ..ScheduleConfig::default()
        })
        .is_err());
    }

    #[test]
    fn config_serde_roundtrip() {
        let cfg = ScheduleConfig::default();
        let json = serde_json::to_string(&cfg).unwrap();
        assert!(json.contains("flipped-cosine"));
        let back: ScheduleConfig = serde_json::from_str(&json).unwrap();
        assert_eq!(back, cfg);
        let partial: ScheduleConfig = serde_json::from_str(r#"{"kind":"constant"}"#).unwrap();
        assert_eq!(partial.kind, ScheduleKind::Constant);
        assert_eq!(partial.grid_resolution, 100_001);
    }

    #[test]
    fn default_config_values() {
        let cfg = ScheduleConfig::default();
        assert_eq!(cfg.s, 0.008);
        assert!((cfg.lambda2 - 0.013_840_830_449_826_99).abs() < 1e-15);
        assert!((cfg.theta_total - 5.298_317_366_548_036).abs() < 1e-15);
    }
}
