//! Weighted metric projection onto the cone of monotone maps over a fixed
//! point cloud:
//!
//! minimize Σ mᵢ|Tᵢ − yᵢ|²  subject to  ⟨Tᵢ − Tⱼ, xᵢ − xⱼ⟩ ≥ 0 for all i, j.
//!
//! In 1D this is weighted isotonic regression (pool-adjacent-violators). In
//! higher dimension the cone is the intersection of O(N²) half-spaces and we
//! run Dykstra's algorithm, which for half-spaces is Hildreth's dual
//! coordinate ascent with one multiplier per pair.

use alloc::vec;
use alloc::vec::Vec;
use core::cmp::Ordering;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::linalg::solve_psd_pivoted;
use crate::numeric::{bbox_diameter, dot, norm_sq, pairwise_sum, sqrt, sum_by, weighted_dot};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct ProjectionSettings {
    /// Absolute tolerance on constraint violation ⟨Tᵢ−Tⱼ, xᵢ−xⱼ⟩ ≥ −tol.
    /// `None` uses 1e−10·scale² with scale the diameter of base points and
    /// targets.
    pub tol_feas: Option<f64>,
    /// Relative per-sweep displacement tolerance.
    pub tol_opt: f64,
    pub max_sweeps: usize,
    /// Shuffle the pair order of every full sweep with this seed.
    pub shuffle_seed: Option<u64>,
    /// Restrict constraints to each point's k nearest neighbours. This
    /// changes the cone and is off by default.
    pub neighbor_k: Option<usize>,
    /// Finish with an exact solve on the detected active set.
    pub polish: bool,
}

impl Default for ProjectionSettings {
    fn default() -> Self {
        ProjectionSettings {
            tol_feas: None,
            tol_opt: 1e-10,
            max_sweeps: 100_000,
            shuffle_seed: None,
            neighbor_k: None,
            polish: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProjectionProblem {
    pub dim: usize,
    pub base_points: Vec<f64>,
    pub weights: Vec<f64>,
    pub targets: Vec<f64>,
    pub settings: ProjectionSettings,
}

impl ProjectionProblem {
    pub fn new(dim: usize, base_points: Vec<f64>, weights: Vec<f64>, targets: Vec<f64>) -> Self {
        ProjectionProblem {
            dim,
            base_points,
            weights,
            targets,
            settings: ProjectionSettings::default(),
        }
    }

    pub fn with_settings(mut self, settings: ProjectionSettings) -> Self {
        self.settings = settings;
        self
    }

    fn len(&self) -> usize {
        self.weights.len()
    }

    fn check(&self) -> Result<()> {
        let n = self.len();
        if self.dim == 0 || n == 0 {
            return Err(Error::InvalidInput("empty projection problem".into()));
        }
        if self.base_points.len() != n * self.dim || self.targets.len() != n * self.dim {
            return Err(Error::InvalidInput(
                "base points, weights and targets must have equal lengths".into(),
            ));
        }
        if self.weights.iter().any(|&w| !(w > 0.0 && w.is_finite())) {
            return Err(Error::InvalidInput("weights must be positive".into()));
        }
        if self
            .base_points
            .iter()
            .chain(&self.targets)
            .any(|v| !v.is_finite())
        {
            return Err(Error::InvalidInput("non-finite coordinates".into()));
        }
        Ok(())
    }

    /// Length scale used by the default tolerances.
    pub fn scale(&self) -> f64 {
        let a = bbox_diameter(&self.base_points, self.dim);
        let b = bbox_diameter(&self.targets, self.dim);
        a.max(b).max(f64::MIN_POSITIVE)
    }

    pub fn tol_feas(&self) -> f64 {
        let s = self.scale();
        self.settings.tol_feas.unwrap_or(1e-10 * s * s)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProjectionResult {
    pub projected: Vec<f64>,
    pub sweeps_used: usize,
    pub max_violation: f64,
    /// Σₖ λₖ (x₍ₖ₊₁₎ − x₍ₖ₎) from the isotonic-regression multipliers (1D).
    pub dual_trace: Option<f64>,
    /// Whether the active-set solve replaced the iterative solution.
    pub polished: bool,
}

/// Outcome of a pairwise monotonicity check.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MonotoneCheck {
    pub monotone: bool,
    /// Pair with the most negative ⟨vᵢ−vⱼ, xᵢ−xⱼ⟩.
    pub worst_pair: Option<(usize, usize)>,
    pub worst_value: f64,
}

/// Tests ⟨vᵢ − vⱼ, xᵢ − xⱼ⟩ ≥ −tol over all pairs.
pub fn is_monotone(base_points: &[f64], values: &[f64], dim: usize, tol: f64) -> MonotoneCheck {
    assert_eq!(base_points.len(), values.len());
    let n = base_points.len() / dim;
    let mut worst = (None, f64::INFINITY);
    for i in 0..n {
        for j in i + 1..n {
            let c = pair_product(base_points, values, dim, i, j);
            if c < worst.1 {
                worst = (Some((i, j)), c);
            }
        }
    }
    MonotoneCheck {
        monotone: worst.1 >= -tol,
        worst_pair: if worst.1 < 0.0 { worst.0 } else { None },
        worst_value: if n < 2 { 0.0 } else { worst.1 },
    }
}

#[inline]
fn pair_product(x: &[f64], t: &[f64], dim: usize, i: usize, j: usize) -> f64 {
    let mut c = 0.0;
    for k in 0..dim {
        c += (t[i * dim + k] - t[j * dim + k]) * (x[i * dim + k] - x[j * dim + k]);
    }
    c
}

/// Exact projection of one violated pair onto its constraint hyperplane.
/// Returns the pair unchanged when ⟨Tᵢ−Tⱼ, xᵢ−xⱼ⟩ ≥ 0.
pub fn halfspace_correct(
    ti: &[f64],
    tj: &[f64],
    xi: &[f64],
    xj: &[f64],
    mi: f64,
    mj: f64,
) -> Result<(Vec<f64>, Vec<f64>)> {
    let d: Vec<f64> = xi.iter().zip(xj).map(|(a, b)| a - b).collect();
    let dd = norm_sq(&d);
    if dd == 0.0 {
        return Err(Error::DegeneratePair);
    }
    let diff: Vec<f64> = ti.iter().zip(tj).map(|(a, b)| a - b).collect();
    let c = dot(&diff, &d);
    if c >= 0.0 {
        return Ok((ti.to_vec(), tj.to_vec()));
    }
    let lambda = -c / (dd * (1.0 / mi + 1.0 / mj));
    let a = ti
        .iter()
        .zip(&d)
        .map(|(t, dk)| t + lambda * dk / mi)
        .collect();
    let b = tj
        .iter()
        .zip(&d)
        .map(|(t, dk)| t - lambda * dk / mj)
        .collect();
    Ok((a, b))
}

/// Dispatches to [`project_1d`] (after sorting) for d = 1 and to
/// [`project_nd`] otherwise.
pub fn project(problem: &ProjectionProblem) -> Result<ProjectionResult> {
    problem.check()?;
    if problem.dim != 1 {
        return project_nd(problem);
    }
    let n = problem.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| problem.base_points[a].total_cmp(&problem.base_points[b]));
    let sorted = ProjectionProblem {
        dim: 1,
        base_points: order.iter().map(|&i| problem.base_points[i]).collect(),
        weights: order.iter().map(|&i| problem.weights[i]).collect(),
        targets: order.iter().map(|&i| problem.targets[i]).collect(),
        settings: problem.settings.clone(),
    };
    let mut res = project_1d(&sorted)?;
    let mut projected = vec![0.0; n];
    for (k, &i) in order.iter().enumerate() {
        projected[i] = res.projected[k];
    }
    res.projected = projected;
    Ok(res)
}

/// Weighted isotonic regression over sorted base points by
/// pool-adjacent-violators. Tied base points are pooled first.
pub fn project_1d(problem: &ProjectionProblem) -> Result<ProjectionResult> {
    problem.check()?;
    if problem.dim != 1 {
        return Err(Error::Unsupported("project_1d needs d = 1".into()));
    }
    let x = &problem.base_points;
    if x.windows(2).any(|w| w[1] < w[0]) {
        return Err(Error::UnsortedBasePoints);
    }
    let (w, y) = (&problem.weights, &problem.targets);
    let n = w.len();

    // Groups of tied base points: (start, end, weight, mean target).
    let mut gx = Vec::new();
    let mut gw = Vec::new();
    let mut gy = Vec::new();
    let mut gstart = Vec::new();
    let mut i = 0;
    while i < n {
        let mut j = i + 1;
        while j < n && x[j] == x[i] {
            j += 1;
        }
        let wsum = pairwise_sum(&w[i..j]);
        let ysum = sum_by(j - i, |k| w[i + k] * y[i + k]);
        gx.push(x[i]);
        gw.push(wsum);
        gy.push(if j - i == 1 { y[i] } else { ysum / wsum });
        gstart.push(i);
        i = j;
    }
    gstart.push(n);
    let g = gx.len();

    let fitted = pav(&gw, &gy);

    let mut projected = vec![0.0; n];
    for k in 0..g {
        for p in gstart[k]..gstart[k + 1] {
            projected[p] = fitted[k];
        }
    }
    // λₖ = Σ_{l ≤ k} W_l (Y_l − T_l) ≥ 0 multiplies the constraint between
    // groups k and k+1; the dual trace pairs it with the gap in x.
    let mut lambda = 0.0;
    let mut terms = Vec::with_capacity(g.saturating_sub(1));
    for k in 0..g.saturating_sub(1) {
        lambda += gw[k] * (gy[k] - fitted[k]);
        terms.push(lambda * (gx[k + 1] - gx[k]));
    }
    let max_violation = fitted
        .windows(2)
        .zip(gx.windows(2))
        .map(|(t, xs)| ((t[0] - t[1]) * (xs[1] - xs[0])).max(0.0))
        .fold(0.0, f64::max);
    Ok(ProjectionResult {
        projected,
        sweeps_used: 1,
        max_violation,
        dual_trace: Some(pairwise_sum(&terms)),
        polished: false,
    })
}

/// Pool-adjacent-violators: weighted least-squares nondecreasing fit.
pub(crate) fn pav(weights: &[f64], values: &[f64]) -> Vec<f64> {
    // Stack of blocks (weight, mean, length).
    let mut bw: Vec<f64> = Vec::with_capacity(values.len());
    let mut bm: Vec<f64> = Vec::with_capacity(values.len());
    let mut bl: Vec<usize> = Vec::with_capacity(values.len());
    for (&w, &v) in weights.iter().zip(values) {
        let (mut cw, mut cm, mut cl) = (w, v, 1usize);
        while let Some(&pm) = bm.last() {
            if pm <= cm {
                break;
            }
            let pw = bw.pop().unwrap();
            bm.pop();
            let pl = bl.pop().unwrap();
            let tw = pw + cw;
            cm = (pw * pm + cw * cm) / tw;
            cw = tw;
            cl += pl;
        }
        bw.push(cw);
        bm.push(cm);
        bl.push(cl);
    }
    let mut out = Vec::with_capacity(values.len());
    for (m, l) in bm.iter().zip(&bl) {
        out.extend(core::iter::repeat(*m).take(*l));
    }
    out
}

/// Constraint set over pooled points.
enum Pairs {
    /// All i < j, visited lexicographically; multiplier k is the
    /// row-major index in the strict upper triangle.
    All(usize),
    List(Vec<(u32, u32)>),
}

impl Pairs {
    fn count(&self) -> usize {
        match self {
            Pairs::All(n) => n * n.saturating_sub(1) / 2,
            Pairs::List(l) => l.len(),
        }
    }

    fn get(&self, k: usize) -> (usize, usize) {
        match self {
            Pairs::List(l) => (l[k].0 as usize, l[k].1 as usize),
            Pairs::All(_) => unreachable!("lexicographic pairs are enumerated directly"),
        }
    }

    fn into_list(self) -> Vec<(u32, u32)> {
        match self {
            Pairs::List(l) => l,
            Pairs::All(n) => {
                let mut l = Vec::with_capacity(n * n.saturating_sub(1) / 2);
                for i in 0..n {
                    for j in i + 1..n {
                        l.push((i as u32, j as u32));
                    }
                }
                l
            }
        }
    }
}

/// Working data of Hildreth's method on pooled points.
struct Hildreth<'a> {
    dim: usize,
    x: &'a [f64],
    inv_w: Vec<f64>,
    t: Vec<f64>,
    lambda: Vec<f64>,
}

impl Hildreth<'_> {
    #[inline]
    fn correct(&mut self, k: usize, i: usize, j: usize) {
        let d = self.dim;
        let mut g = 0.0;
        let mut dd = 0.0;
        for c in 0..d {
            let dx = self.x[i * d + c] - self.x[j * d + c];
            g += (self.t[i * d + c] - self.t[j * d + c]) * dx;
            dd += dx * dx;
        }
        let q = dd * (self.inv_w[i] + self.inv_w[j]);
        let old = self.lambda[k];
        let new = (old - g / q).max(0.0);
        let delta = new - old;
        if delta == 0.0 {
            return;
        }
        self.lambda[k] = new;
        let (si, sj) = (delta * self.inv_w[i], delta * self.inv_w[j]);
        for c in 0..d {
            let dx = self.x[i * d + c] - self.x[j * d + c];
            self.t[i * d + c] += si * dx;
            self.t[j * d + c] -= sj * dx;
        }
    }

    fn max_violation(&self, pairs: &Pairs) -> f64 {
        max_violation_of(self.x, &self.t, self.dim, pairs)
    }
}

fn max_violation_of(x: &[f64], t: &[f64], dim: usize, pairs: &Pairs) -> f64 {
    let mut worst: f64 = 0.0;
    match pairs {
        Pairs::All(n) => {
            for i in 0..*n {
                for j in i + 1..*n {
                    worst = worst.max(-pair_product(x, t, dim, i, j));
                }
            }
        }
        Pairs::List(l) => {
            for &(i, j) in l {
                worst = worst.max(-pair_product(x, t, dim, i as usize, j as usize));
            }
        }
    }
    worst
}

/// Sweeps over the active pairs between full sweeps.
const ACTIVE_ROUNDS: usize = 25;
/// Attempt the active-set polish once violations fall below this multiple
/// of scale²; after a failed attempt the next one waits twice as many sweeps.
const POLISH_TRIGGER: f64 = 1e-6;
/// Largest working set the polish will factor.
const POLISH_MAX_ROWS: usize = 800;

/// Projection onto the pairwise monotone cone by Dykstra/Hildreth sweeps,
/// finished by an active-set solve when it verifies.
pub fn project_nd(problem: &ProjectionProblem) -> Result<ProjectionResult> {
    problem.check()?;
    let dim = problem.dim;
    let settings = &problem.settings;
    let pooled = Pooled::new(problem);
    let n = pooled.w.len();
    let scale = problem.scale();
    let tol_feas = problem.tol_feas();
    let y_norm = sqrt(pooled.weighted_norm_sq(&pooled.y));
    let tol_disp = settings.tol_opt * (1.0 + y_norm);

    if n == 1 {
        return Ok(ProjectionResult {
            projected: pooled.unpool(&pooled.y),
            sweeps_used: 0,
            max_violation: 0.0,
            dual_trace: None,
            polished: false,
        });
    }

    let mut pairs = match settings.neighbor_k {
        Some(k) => Pairs::List(knn_pairs(&pooled.x, dim, k)),
        None => Pairs::All(n),
    };
    let mut rng = settings.shuffle_seed.map(ChaCha8Rng::seed_from_u64);
    let mut order: Vec<u32> = Vec::new();
    if rng.is_some() {
        pairs = Pairs::List(core::mem::replace(&mut pairs, Pairs::All(0)).into_list());
        order = (0..pairs.count() as u32).collect();
    }

    let mut h = Hildreth {
        dim,
        x: &pooled.x,
        inv_w: pooled.w.iter().map(|w| 1.0 / w).collect(),
        t: pooled.y.clone(),
        lambda: vec![0.0; pairs.count()],
    };

    let mut sweeps = 0;
    let mut prev = h.t.clone();
    let mut active: Vec<(u32, u32, u32)> = Vec::new();
    let mut next_polish = 0;
    loop {
        // Full sweep.
        prev.copy_from_slice(&h.t);
        match (&pairs, rng.as_mut()) {
            (Pairs::All(n), _) => {
                let mut k = 0;
                for i in 0..*n {
                    for j in i + 1..*n {
                        h.correct(k, i, j);
                        k += 1;
                    }
                }
            }
            (Pairs::List(_), Some(rng)) => {
                order.shuffle(rng);
                for &k in &order {
                    let (i, j) = pairs.get(k as usize);
                    h.correct(k as usize, i, j);
                }
            }
            (Pairs::List(l), None) => {
                for (k, &(i, j)) in l.iter().enumerate() {
                    h.correct(k, i as usize, j as usize);
                }
            }
        }
        sweeps += 1;
        let disp = sqrt(pooled.weighted_dist_sq(&h.t, &prev));
        let viol = h.max_violation(&pairs);
        let converged = viol <= tol_feas && disp <= tol_disp;

        let due = sweeps >= next_polish && viol <= POLISH_TRIGGER * scale * scale;
        if settings.polish && (converged || due) {
            next_polish = 2 * sweeps;
            if let Some(t) = polish(&pooled, &h, &pairs, tol_feas) {
                let max_violation = max_violation_of(&pooled.x, &t, dim, &pairs);
                return Ok(ProjectionResult {
                    projected: pooled.unpool(&t),
                    sweeps_used: sweeps,
                    max_violation,
                    dual_trace: None,
                    polished: true,
                });
            }
        }
        if converged {
            return Ok(ProjectionResult {
                projected: pooled.unpool(&h.t),
                sweeps_used: sweeps,
                max_violation: viol,
                dual_trace: None,
                polished: false,
            });
        }
        if sweeps >= settings.max_sweeps {
            return Err(Error::ProjectionNotConverged {
                sweeps,
                max_violation: viol,
            });
        }

        // Cheap sweeps restricted to pairs with positive multipliers.
        active.clear();
        match &pairs {
            Pairs::All(n) => {
                let mut k = 0;
                for i in 0..*n {
                    for j in i + 1..*n {
                        if h.lambda[k] > 0.0 {
                            active.push((k as u32, i as u32, j as u32));
                        }
                        k += 1;
                    }
                }
            }
            Pairs::List(l) => {
                for (k, &(i, j)) in l.iter().enumerate() {
                    if h.lambda[k] > 0.0 {
                        active.push((k as u32, i, j));
                    }
                }
            }
        }
        for _ in 0..ACTIVE_ROUNDS {
            prev.copy_from_slice(&h.t);
            for &(k, i, j) in &active {
                h.correct(k as usize, i as usize, j as usize);
            }
            if sqrt(pooled.weighted_dist_sq(&h.t, &prev)) <= 0.1 * tol_disp {
                break;
            }
        }
    }
}

/// Active-set finish on the dual problem: nonnegative least squares over the
/// pair multipliers (Lawson–Hanson), warm-started from the Hildreth
/// multipliers. Only returns targets that come with a KKT certificate:
/// multipliers ≥ 0, working pairs tight, every pair feasible to `tol_feas`.
fn polish(pooled: &Pooled, h: &Hildreth, pairs: &Pairs, tol_feas: f64) -> Option<Vec<f64>> {
    let dim = h.dim;
    let n = pooled.w.len();
    let x = &pooled.x;
    let y = &pooled.y;
    let diff = |v: &[f64], i: usize, j: usize, c: usize| v[i * dim + c] - v[j * dim + c];

    // Working set: pairs (i, j) with their multipliers.
    let mut rows: Vec<(usize, usize, f64)> = Vec::new();
    let mut k = 0;
    match pairs {
        Pairs::All(n) => {
            for i in 0..*n {
                for j in i + 1..*n {
                    if h.lambda[k] > 0.0 {
                        rows.push((i, j, h.lambda[k]));
                    }
                    k += 1;
                }
            }
        }
        Pairs::List(l) => {
            for (k, &(i, j)) in l.iter().enumerate() {
                if h.lambda[k] > 0.0 {
                    rows.push((i as usize, j as usize, h.lambda[k]));
                }
            }
        }
    }

    let targets = |rows: &[(usize, usize, f64)]| {
        let mut t = y.clone();
        for &(i, j, mu) in rows {
            for c in 0..dim {
                let d = diff(x, i, j, c);
                t[i * dim + c] += mu * d / pooled.w[i];
                t[j * dim + c] -= mu * d / pooled.w[j];
            }
        }
        t
    };
    let add_tol = 1e-2 * tol_feas;
    let max_outer = 4 * n * dim + 50;
    let mut fresh: Option<usize> = None;
    for _ in 0..max_outer {
        // Inner loop: optimal multipliers on the working set, keeping them ≥ 0.
        for _ in 0..=rows.len() + 1 {
            let r = rows.len();
            if r > POLISH_MAX_ROWS {
                return None;
            }
            let mut g = vec![0.0; r * r];
            let mut rhs = vec![0.0; r];
            for p in 0..r {
                let (a, b, _) = rows[p];
                rhs[p] = -(0..dim)
                    .map(|c| diff(y, a, b, c) * diff(x, a, b, c))
                    .sum::<f64>();
                for q in 0..=p {
                    let (a2, b2, _) = rows[q];
                    let mut coef = 0.0;
                    if a == a2 {
                        coef += 1.0 / pooled.w[a];
                    }
                    if a == b2 {
                        coef -= 1.0 / pooled.w[a];
                    }
                    if b == a2 {
                        coef -= 1.0 / pooled.w[b];
                    }
                    if b == b2 {
                        coef += 1.0 / pooled.w[b];
                    }
                    if coef != 0.0 {
                        let dd: f64 = (0..dim)
                            .map(|c| diff(x, a, b, c) * diff(x, a2, b2, c))
                            .sum();
                        g[p * r + q] = coef * dd;
                        g[q * r + p] = coef * dd;
                    }
                }
            }
            let sol = solve_psd_pivoted(&g, r, &rhs, 1e-14);
            if sol.iter().all(|&v| v > 0.0) {
                for (row, v) in rows.iter_mut().zip(sol) {
                    row.2 = v;
                }
                break;
            }
            let ratio = |mu: f64, v: f64| if mu <= 0.0 { 0.0 } else { mu / (mu - v) };
            let alpha = rows
                .iter()
                .zip(&sol)
                .filter(|(_, v)| **v <= 0.0)
                .fold(1.0f64, |a, (row, &v)| a.min(ratio(row.2, v)));
            for (row, &v) in rows.iter_mut().zip(&sol) {
                row.2 = if v <= 0.0 && ratio(row.2, v) <= alpha {
                    0.0
                } else {
                    row.2 + alpha * (v - row.2)
                };
            }
            if let Some(f) = fresh {
                if rows[f].2 <= 0.0 {
                    // the entering pair left at once: degenerate, give up
                    return None;
                }
            }
            fresh = None;
            rows.retain(|row| row.2 > 0.0);
        }

        let t = targets(&rows);
        let mut worst = (0.0, 0, 0);
        let mut scan = |i: usize, j: usize| {
            let v: f64 = (0..dim).map(|c| diff(&t, i, j, c) * diff(x, i, j, c)).sum();
            if v < worst.0 {
                worst = (v, i, j);
            }
        };
        match pairs {
            Pairs::All(n) => {
                for i in 0..*n {
                    for j in i + 1..*n {
                        scan(i, j);
                    }
                }
            }
            Pairs::List(l) => {
                for &(i, j) in l {
                    scan(i as usize, j as usize);
                }
            }
        }
        if worst.0 >= -add_tol {
            let tight = rows.iter().all(|&(i, j, _)| {
                let v: f64 = (0..dim).map(|c| diff(&t, i, j, c) * diff(x, i, j, c)).sum();
                v.abs() <= tol_feas
            });
            return tight.then_some(t);
        }
        let (_, i, j) = worst;
        if rows.iter().any(|&(a, b, _)| a == i && b == j) {
            return None;
        }
        fresh = Some(rows.len());
        rows.push((i, j, 0.0));
    }
    None
}

/// Problem with tied base points merged.
struct Pooled {
    dim: usize,
    x: Vec<f64>,
    w: Vec<f64>,
    y: Vec<f64>,
    /// For each original particle, its pooled index.
    index: Vec<usize>,
}

impl Pooled {
    fn new(p: &ProjectionProblem) -> Self {
        let dim = p.dim;
        let n = p.len();
        let pt = |i: usize| &p.base_points[i * dim..(i + 1) * dim];
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&a, &b| lex_cmp(pt(a), pt(b)).then(a.cmp(&b)));
        let mut group_of = vec![0usize; n];
        let mut groups: Vec<Vec<usize>> = Vec::new();
        for (pos, &i) in order.iter().enumerate() {
            if pos > 0 && pt(order[pos - 1]) == pt(i) {
                groups.last_mut().unwrap().push(i);
            } else {
                groups.push(vec![i]);
            }
        }
        // Keep pooled points in order of first original index so the
        // lexicographic sweep matches the caller's ordering when there are
        // no ties.
        groups.sort_by_key(|g| g.iter().copied().min().unwrap());
        let mut x = Vec::with_capacity(groups.len() * dim);
        let mut w = Vec::with_capacity(groups.len());
        let mut y = Vec::with_capacity(groups.len() * dim);
        for (gi, g) in groups.iter().enumerate() {
            x.extend_from_slice(pt(g[0]));
            let terms: Vec<f64> = g.iter().map(|&i| p.weights[i]).collect();
            let wsum = pairwise_sum(&terms);
            w.push(wsum);
            for c in 0..dim {
                if g.len() == 1 {
                    y.push(p.targets[g[0] * dim + c]);
                } else {
                    let terms: Vec<f64> = g
                        .iter()
                        .map(|&i| p.weights[i] * p.targets[i * dim + c])
                        .collect();
                    y.push(pairwise_sum(&terms) / wsum);
                }
            }
            for &i in g {
                group_of[i] = gi;
            }
        }
        Pooled {
            dim,
            x,
            w,
            y,
            index: group_of,
        }
    }

    fn unpool(&self, t: &[f64]) -> Vec<f64> {
        let d = self.dim;
        let mut out = Vec::with_capacity(self.index.len() * d);
        for &g in &self.index {
            out.extend_from_slice(&t[g * d..(g + 1) * d]);
        }
        out
    }

    fn weighted_norm_sq(&self, a: &[f64]) -> f64 {
        weighted_dot(&self.w, a, a, self.dim)
    }

    fn weighted_dist_sq(&self, a: &[f64], b: &[f64]) -> f64 {
        let d = self.dim;
        sum_by(self.w.len(), |i| {
            let mut s = 0.0;
            for c in 0..d {
                let v = a[i * d + c] - b[i * d + c];
                s += v * v;
            }
            self.w[i] * s
        })
    }
}

fn lex_cmp(a: &[f64], b: &[f64]) -> Ordering {
    for (x, y) in a.iter().zip(b) {
        match x.total_cmp(y) {
            Ordering::Equal => continue,
            o => return o,
        }
    }
    Ordering::Equal
}

/// Symmetrized k-nearest-neighbour pairs (i < j), sorted.
fn knn_pairs(x: &[f64], dim: usize, k: usize) -> Vec<(u32, u32)> {
    let n = x.len() / dim;
    let mut out = Vec::new();
    let mut dists: Vec<(f64, usize)> = Vec::with_capacity(n);
    for i in 0..n {
        dists.clear();
        for j in 0..n {
            if j != i {
                let mut s = 0.0;
                for c in 0..dim {
                    let v = x[i * dim + c] - x[j * dim + c];
                    s += v * v;
                }
                dists.push((s, j));
            }
        }
        dists.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        for &(_, j) in dists.iter().take(k) {
            out.push((i.min(j) as u32, i.max(j) as u32));
        }
    }
    out.sort_unstable();
    out.dedup();
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use rand::RngExt;

    fn problem_1d(w: &[f64], y: &[f64]) -> ProjectionProblem {
        let x = (0..w.len()).map(|i| i as f64).collect();
        ProjectionProblem::new(1, x, w.to_vec(), y.to_vec())
    }

    #[test]
    fn pav_examples() {
        let r = project_1d(&problem_1d(&[1.0, 1.0, 1.0], &[-1.0, 0.0, 1.0])).unwrap();
        assert_eq!(r.projected, vec![-1.0, 0.0, 1.0]);

        let r = project_1d(&problem_1d(&[0.25, 0.5, 0.25], &[-0.5, 0.6, 0.4])).unwrap();
        let pooled = (0.5 * 0.6 + 0.25 * 0.4) / 0.75;
        assert_abs_diff_eq!(r.projected[0], -0.5, epsilon = 1e-15);
        assert_abs_diff_eq!(r.projected[1], pooled, epsilon = 1e-15);
        assert_abs_diff_eq!(r.projected[2], pooled, epsilon = 1e-15);

        let r = project_1d(&problem_1d(&[1.0, 1.0, 1.0], &[1.0, 0.0, -1.0])).unwrap();
        for v in r.projected {
            assert_abs_diff_eq!(v, 0.0, epsilon = 1e-15);
        }
    }

    #[test]
    fn unsorted_input_is_rejected() {
        let p = ProjectionProblem::new(1, vec![1.0, 0.0], vec![0.5, 0.5], vec![0.0, 0.0]);
        assert_eq!(project_1d(&p), Err(Error::UnsortedBasePoints));
        // The dispatcher sorts first.
        assert!(project(&p).is_ok());
    }

    #[test]
    fn tied_base_points_are_pooled() {
        let p = ProjectionProblem::new(
            1,
            vec![0.0, 0.0, 1.0],
            vec![0.25, 0.25, 0.5],
            vec![1.0, 3.0, 0.0],
        );
        let r = project_1d(&p).unwrap();
        // tie block mean 2 > 0 so everything pools to 1
        for v in &r.projected {
            assert_abs_diff_eq!(*v, 1.0, epsilon = 1e-15);
        }
    }

    #[test]
    fn dual_trace_matches_direct_sum() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..50 {
            let n = 20;
            let mut x: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
            x.sort_by(f64::total_cmp);
            let w: Vec<f64> = (0..n).map(|_| rng.random_range(0.1..1.0)).collect();
            let y: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
            let p = ProjectionProblem::new(1, x.clone(), w.clone(), y.clone());
            let r = project_1d(&p).unwrap();
            let direct: f64 = -(0..n)
                .map(|i| w[i] * (y[i] - r.projected[i]) * x[i])
                .sum::<f64>();
            assert_abs_diff_eq!(r.dual_trace.unwrap(), direct, epsilon = 1e-12);
            assert!(r.dual_trace.unwrap() >= -1e-14);
        }
    }

    #[test]
    fn halfspace_examples() {
        let (a, b) =
            halfspace_correct(&[1.0, 0.0], &[0.0, 0.0], &[0.0, 0.0], &[1.0, 0.0], 0.5, 0.5)
                .unwrap();
        assert_abs_diff_eq!(a[0], 0.5, epsilon = 1e-15);
        assert_abs_diff_eq!(b[0], 0.5, epsilon = 1e-15);
        assert_eq!((a[1], b[1]), (0.0, 0.0));

        let (a, b) =
            halfspace_correct(&[1.0], &[0.0], &[0.0], &[1.0], 1.0 / 3.0, 2.0 / 3.0).unwrap();
        assert_abs_diff_eq!(a[0], 1.0 / 3.0, epsilon = 1e-15);
        assert_abs_diff_eq!(b[0], 1.0 / 3.0, epsilon = 1e-15);

        let (a, b) = halfspace_correct(&[0.0], &[1.0], &[0.0], &[1.0], 0.5, 0.5).unwrap();
        assert_eq!((a[0], b[0]), (0.0, 1.0));

        assert_eq!(
            halfspace_correct(&[0.0], &[1.0], &[2.0], &[2.0], 0.5, 0.5),
            Err(Error::DegeneratePair)
        );
    }

    #[test]
    fn two_particle_nd_example() {
        let p = ProjectionProblem::new(
            2,
            vec![0.0, 0.0, 1.0, 0.0],
            vec![0.5, 0.5],
            vec![1.0, 0.0, 0.0, 0.0],
        );
        let r = project_nd(&p).unwrap();
        for (v, e) in r.projected.iter().zip([0.5, 0.0, 0.5, 0.0]) {
            assert_abs_diff_eq!(*v, e, epsilon = 1e-12);
        }
    }

    #[test]
    fn monotone_targets_are_fixed_in_one_sweep() {
        let x = vec![0.0, 0.0, 1.0, 0.2, -0.3, 0.8];
        let y: Vec<f64> = x.iter().map(|v| 2.0 * v + 0.1).collect();
        let p = ProjectionProblem::new(2, x, vec![0.2, 0.3, 0.5], y.clone());
        let r = project_nd(&p).unwrap();
        assert_eq!(r.sweeps_used, 1);
        assert_eq!(r.projected, y);
    }

    #[test]
    fn nd_agrees_with_pav_in_1d() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..30 {
            let n = 15;
            let x: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
            let w: Vec<f64> = (0..n).map(|_| rng.random_range(0.1..1.0)).collect();
            let y: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
            let p = ProjectionProblem::new(1, x, w, y);
            let a = project(&p).unwrap();
            let b = project_nd(&p).unwrap();
            for (u, v) in a.projected.iter().zip(&b.projected) {
                assert_abs_diff_eq!(*u, *v, epsilon = 1e-8);
            }
        }
    }

    #[test]
    fn shuffled_and_lexicographic_orders_agree() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let n = 12;
        let x: Vec<f64> = (0..2 * n).map(|_| rng.random_range(-1.0..1.0)).collect();
        let w = vec![1.0 / n as f64; n];
        let y: Vec<f64> = (0..2 * n).map(|_| rng.random_range(-1.0..1.0)).collect();
        let p = ProjectionProblem::new(2, x, w, y);
        let a = project_nd(&p).unwrap();
        let mut s = ProjectionSettings::default();
        s.shuffle_seed = Some(42);
        let b = project_nd(&p.clone().with_settings(s.clone())).unwrap();
        let c = project_nd(&p.with_settings(s)).unwrap();
        assert_eq!(b, c, "seeded runs are deterministic");
        for (u, v) in a.projected.iter().zip(&b.projected) {
            assert_abs_diff_eq!(*u, *v, epsilon = 1e-7);
        }
    }

    #[test]
    fn sweep_limit_reports_violation() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let n = 30;
        let x: Vec<f64> = (0..2 * n).map(|_| rng.random_range(-1.0..1.0)).collect();
        let y: Vec<f64> = x.iter().map(|v| -v).collect();
        let mut s = ProjectionSettings::default();
        s.max_sweeps = 1;
        s.polish = false;
        let p = ProjectionProblem::new(2, x, vec![1.0 / n as f64; n], y).with_settings(s);
        match project_nd(&p) {
            Err(Error::ProjectionNotConverged {
                sweeps,
                max_violation,
            }) => {
                assert_eq!(sweeps, 1);
                assert!(max_violation > 0.0);
            }
            other => panic!("expected non-convergence, got {other:?}"),
        }
    }

    #[test]
    fn is_monotone_examples() {
        let c = is_monotone(&[0.0, 1.0, 2.0], &[0.0, 0.5, 3.0], 1, 0.0);
        assert!(c.monotone);
        let c = is_monotone(&[0.0, 1.0], &[1.0, 0.0], 1, 0.0);
        assert!(!c.monotone);
        assert_eq!(c.worst_pair, Some((0, 1)));
        let x = [0.1, 0.4, -0.2, 0.9, 0.3, -0.7];
        assert!(is_monotone(&x, &x, 2, 0.0).monotone);
    }

    #[test]
    fn knn_pairs_are_symmetric_and_unique() {
        let x = [0.0, 1.0, 2.0, 10.0];
        let p = knn_pairs(&x, 1, 1);
        assert_eq!(p, vec![(0, 1), (1, 2), (2, 3)]);
    }
}
