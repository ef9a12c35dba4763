//! Discrete optimal transport between equal-size, uniformly weighted point
//! clouds, plus the displacement-interpolation diagnostics used to probe
//! where empirical measures stop behaving like their population limits.
//!
//! Cost convention: one consistent scale for both plan kinds.  `cost` is the
//! half-squared-distance transport cost summed over the n source points
//! (a permutation plan stores Σᵢ ½‖xᵢ − y_{σ(i)}‖²; a dense plan stores the
//! same scale, n times the coupling average).  [`w2_distance`] converts to
//! the actual Wasserstein-2 metric via sqrt(2·cost/n).

use crate::error::{Error, Result};

/// Largest instance the exact assignment solver accepts.
pub const EXACT_OT_MAX_N: usize = 4096;

/// An equal-weight point cloud: n points, each carrying mass 1/n.
#[derive(Clone, Debug, PartialEq)]
pub struct EmpiricalMeasure {
    points: Vec<Vec<f64>>,
}

impl EmpiricalMeasure {
    pub fn new(points: Vec<Vec<f64>>) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::Domain("empirical measure needs at least one point".into()));
        }
        let d = points[0].len();
        if d == 0 {
            return Err(Error::Domain("points must have at least one coordinate".into()));
        }
        for (i, p) in points.iter().enumerate() {
            if p.len() != d {
                return Err(Error::SizeMismatch {
                    expected: d,
                    got: p.len(),
                });
            }
            if p.iter().any(|v| !v.is_finite()) {
                return Err(Error::Domain(format!("point {i} has a non-finite coordinate")));
            }
        }
        Ok(Self { points })
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        false // n >= 1 by construction
    }

    pub fn dim(&self) -> usize {
        self.points[0].len()
    }

    /// The uniform per-point mass 1/n.
    pub fn weight(&self) -> f64 {
        1.0 / self.points.len() as f64
    }

    pub fn points(&self) -> &[Vec<f64>] {
        &self.points
    }
}

/// An optimal (or entropically relaxed) coupling between two equal-size
/// clouds.  See the module docs for the cost scale shared by both kinds.
#[derive(Clone, Debug)]
pub enum TransportPlan {
    /// Exact assignment: source i maps to target perm[i].
    Permutation { perm: Vec<usize>, cost: f64 },
    /// Entropic coupling with row and column sums 1/n.
    Dense {
        weights: Vec<Vec<f64>>,
        cost: f64,
        converged: bool,
    },
}

impl TransportPlan {
    pub fn cost(&self) -> f64 {
        match self {
            TransportPlan::Permutation { cost, .. } => *cost,
            TransportPlan::Dense { cost, .. } => *cost,
        }
    }

    pub fn is_converged(&self) -> bool {
        match self {
            TransportPlan::Permutation { .. } => true,
            TransportPlan::Dense { converged, .. } => *converged,
        }
    }
}

fn half_sqdist(a: &[f64], b: &[f64]) -> f64 {
    0.5 * a
        .iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
}

fn check_pair(mu: &EmpiricalMeasure, nu: &EmpiricalMeasure) -> Result<()> {
    if mu.len() != nu.len() {
        return Err(Error::SizeMismatch {
            expected: mu.len(),
            got: nu.len(),
        });
    }
    if mu.dim() != nu.dim() {
        return Err(Error::SizeMismatch {
            expected: mu.dim(),
            got: nu.dim(),
        });
    }
    Ok(())
}

/// Exact optimal assignment under half-squared-Euclidean cost, by the
/// shortest-augmenting-path method with dual potentials.  Deterministic:
/// equal-cost candidates resolve to the lowest column index.
pub fn exact_ot(mu: &EmpiricalMeasure, nu: &EmpiricalMeasure) -> Result<TransportPlan> {
    check_pair(mu, nu)?;
    let n = mu.len();
    if n > EXACT_OT_MAX_N {
        return Err(Error::Domain(format!(
            "n = {n} exceeds the exact solver cap {EXACT_OT_MAX_N}; use sinkhorn instead"
        )));
    }
    let xs = mu.points();
    let ys = nu.points();
    let cost = |i: usize, j: usize| half_sqdist(&xs[i], &ys[j]);

    // column n is the virtual root; p[j] = row currently assigned to column j
    let mut u = vec![0.0f64; n + 1];
    let mut v = vec![0.0f64; n + 1];
    let mut p = vec![usize::MAX; n + 1];
    let mut way = vec![n; n + 1];
    let mut minv = vec![0.0f64; n + 1];
    let mut used = vec![false; n + 1];
    for i in 0..n {
        p[n] = i;
        let mut j0 = n;
        minv.iter_mut().for_each(|m| *m = f64::INFINITY);
        used.iter_mut().for_each(|f| *f = false);
        loop {
            used[j0] = true;
            let i0 = p[j0];
            let mut delta = f64::INFINITY;
            let mut j1 = n;
            for j in 0..n {
                if used[j] {
                    continue;
                }
                let cur = cost(i0, j) - u[i0] - v[j];
                if cur < minv[j] {
                    minv[j] = cur;
                    way[j] = j0;
                }
                if minv[j] < delta {
                    delta = minv[j];
                    j1 = j;
                }
            }
            for j in 0..=n {
                if used[j] {
                    u[p[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if p[j0] == usize::MAX {
                break;
            }
        }
        while j0 != n {
            let j1 = way[j0];
            p[j0] = p[j1];
            j0 = j1;
        }
    }

    let mut perm = vec![0usize; n];
    for j in 0..n {
        perm[p[j]] = j;
    }
    let total: f64 = (0..n).map(|i| cost(i, perm[i])).sum();
    Ok(TransportPlan::Permutation { perm, cost: total })
}

fn log_sum_exp(acc: impl Iterator<Item = f64>) -> f64 {
    let vals: Vec<f64> = acc.collect();
    let m = vals.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }
    m + vals.iter().map(|v| (v - m).exp()).sum::<f64>().ln()
}

/// Log-domain Sinkhorn iterations with an absolute entropic regularizer.
///
/// Alternates the dual-potential updates until both marginal residuals
/// (L∞ against the uniform weights 1/n) drop to `tol` or `max_iter` runs
/// out, in which case the returned plan carries `converged: false`.
pub fn sinkhorn(
    mu: &EmpiricalMeasure,
    nu: &EmpiricalMeasure,
    eps: f64,
    max_iter: usize,
    tol: f64,
) -> Result<TransportPlan> {
    check_pair(mu, nu)?;
    if !(eps > 0.0 && eps.is_finite()) {
        return Err(Error::Domain(format!("eps must be positive and finite, got {eps}")));
    }
    if max_iter == 0 {
        return Err(Error::Domain("max_iter must be positive".into()));
    }
    let n = mu.len();
    let xs = mu.points();
    let ys = nu.points();
    let cost = |i: usize, j: usize| half_sqdist(&xs[i], &ys[j]);
    let log_mass = (1.0 / n as f64).ln();

    let mut f = vec![0.0f64; n];
    let mut g = vec![0.0f64; n];
    let mut converged = false;
    for _ in 0..max_iter {
        for i in 0..n {
            f[i] = eps * log_mass - eps * log_sum_exp((0..n).map(|j| (g[j] - cost(i, j)) / eps));
        }
        for j in 0..n {
            g[j] = eps * log_mass - eps * log_sum_exp((0..n).map(|i| (f[i] - cost(i, j)) / eps));
        }
        if f.iter().chain(g.iter()).any(|v| !v.is_finite()) {
            return Err(Error::NoConvergence(
                "sinkhorn kernel degenerated to NaN; try a larger eps".into(),
            ));
        }
        let mut worst = 0.0f64;
        for i in 0..n {
            let row: f64 = (0..n).map(|j| ((f[i] + g[j] - cost(i, j)) / eps).exp()).sum();
            worst = worst.max((row - 1.0 / n as f64).abs());
        }
        for j in 0..n {
            let col: f64 = (0..n).map(|i| ((f[i] + g[j] - cost(i, j)) / eps).exp()).sum();
            worst = worst.max((col - 1.0 / n as f64).abs());
        }
        if worst <= tol {
            converged = true;
            break;
        }
    }

    let mut weights = vec![vec![0.0f64; n]; n];
    let mut total = 0.0;
    for i in 0..n {
        for j in 0..n {
            let w = ((f[i] + g[j] - cost(i, j)) / eps).exp();
            weights[i][j] = w;
            total += w * cost(i, j);
        }
    }
    if !total.is_finite() {
        return Err(Error::NoConvergence(
            "transport cost degenerated to a non-finite value; try a larger eps or rescale the data"
                .into(),
        ));
    }
    Ok(TransportPlan::Dense {
        weights,
        cost: n as f64 * total,
        converged,
    })
}

/// Pushes mu a fraction t of the way along the optimal assignment:
/// points (1−t)·xᵢ + t·y_{perm[i]} with uniform weights.  Dense plans are
/// rejected; barycentric projection is out of scope.
pub fn mccann_interpolate(
    mu: &EmpiricalMeasure,
    nu: &EmpiricalMeasure,
    plan: &TransportPlan,
    t: f64,
) -> Result<EmpiricalMeasure> {
    check_pair(mu, nu)?;
    if !(0.0..=1.0).contains(&t) {
        return Err(Error::Domain(format!("interpolation time {t} outside [0, 1]")));
    }
    let perm = match plan {
        TransportPlan::Permutation { perm, .. } => perm,
        TransportPlan::Dense { .. } => {
            return Err(Error::Domain(
                "displacement interpolation needs a permutation plan, not a dense coupling".into(),
            ))
        }
    };
    if perm.len() != mu.len() {
        return Err(Error::SizeMismatch {
            expected: mu.len(),
            got: perm.len(),
        });
    }
    let points = mu
        .points()
        .iter()
        .zip(perm)
        .map(|(x, &j)| {
            x.iter()
                .zip(&nu.points()[j])
                .map(|(&a, &b)| (1.0 - t) * a + t * b)
                .collect()
        })
        .collect();
    EmpiricalMeasure::new(points)
}

/// Wasserstein-2 distance between equal-size clouds via the exact plan:
/// sqrt(2·cost/n), the per-point-normalized metric.
pub fn w2_distance(mu: &EmpiricalMeasure, nu: &EmpiricalMeasure) -> Result<f64> {
    let plan = exact_ot(mu, nu)?;
    Ok((2.0 * plan.cost() / mu.len() as f64).sqrt())
}

/// Measures how far the displacement interpolant is from a constant-speed
/// geodesic: max over the grid of |W₂(μ, μ_t) − t·W₂(μ, ν)|, with every
/// distance evaluated by a fresh exact solve.
pub fn geodesic_check(
    mu: &EmpiricalMeasure,
    nu: &EmpiricalMeasure,
    t_grid: &[f64],
) -> Result<f64> {
    let plan = exact_ot(mu, nu)?;
    let w_full = (2.0 * plan.cost() / mu.len() as f64).sqrt();
    let mut worst = 0.0f64;
    for &t in t_grid {
        let mid = mccann_interpolate(mu, nu, &plan, t)?;
        let w_t = w2_distance(mu, &mid)?;
        worst = worst.max((w_t - t * w_full).abs());
    }
    Ok(worst)
}

/// Size of a greedy ε-net: starts from the first point and repeatedly
/// promotes the point farthest from the current centers (ties to the lowest
/// index) until every point sits within `radius` of some center.
pub fn covering_number(points: &[Vec<f64>], radius: f64) -> Result<usize> {
    if !(radius > 0.0 && radius.is_finite()) {
        return Err(Error::Domain(format!("radius must be positive, got {radius}")));
    }
    if points.is_empty() {
        return Ok(0);
    }
    let n = points.len();
    let dist2 = |a: &[f64], b: &[f64]| -> f64 {
        a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
    };
    let r2 = radius * radius;
    // nearest[i] = squared distance from point i to its closest center
    let mut nearest: Vec<f64> = points.iter().map(|p| dist2(p, &points[0])).collect();
    let mut count = 1;
    loop {
        let (mut far_i, mut far_d) = (0usize, 0.0f64);
        for (i, &d) in nearest.iter().enumerate() {
            if d > far_d {
                far_d = d;
                far_i = i;
            }
        }
        if far_d <= r2 {
            return Ok(count);
        }
        count += 1;
        if count == n {
            return Ok(n);
        }
        for i in 0..n {
            let d = dist2(&points[i], &points[far_i]);
            if d < nearest[i] {
                nearest[i] = d;
            }
        }
    }
}
