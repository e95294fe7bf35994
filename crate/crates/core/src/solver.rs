//! Concave maximization over `{η : 0 <= η <= 1, A η <= τ}`.
//!
//! Each iteration picks a feasible target, then backtracks along the
//! direction towards it with an Armijo test, so every iterate is feasible and
//! the objective never decreases. When the oracle supplies a Hessian the
//! target maximizes the local quadratic model over the region (projected
//! Newton); otherwise, or if that step fails, it is the projection of
//! `η + t g` with a Barzilai–Borwein `t`. Projections are exact (dual active
//! set), with Dykstra's alternating projections as the fallback.

use alloc::vec::Vec;

use nalgebra::DMatrix;

use rand::{Rng, RngExt};

use crate::error::{Error, Result};
use crate::sdma::ReflectionVector;

/// Objective and gradient oracle of a concave, differentiable function.
pub trait Objective {
    fn value(&self, eta: &[f64]) -> Result<f64>;
    fn gradient(&self, eta: &[f64]) -> Result<Vec<f64>>;

    /// Row-major Hessian, when cheap to form.
    fn hessian(&self, _eta: &[f64]) -> Result<Option<Vec<f64>>> {
        Ok(None)
    }
}

/// Adapts a pair of closures into an [`Objective`].
pub struct FnObjective<F, G> {
    pub value: F,
    pub gradient: G,
}

impl<F, G> Objective for FnObjective<F, G>
where
    F: Fn(&[f64]) -> f64,
    G: Fn(&[f64]) -> Vec<f64>,
{
    fn value(&self, eta: &[f64]) -> Result<f64> {
        Ok((self.value)(eta))
    }

    fn gradient(&self, eta: &[f64]) -> Result<Vec<f64>> {
        Ok((self.gradient)(eta))
    }
}

/// `0 <= η_m <= 1` and `Σ_m a_{k,m} η_m <= τ_k` for every row `k`.
#[derive(Debug, Clone, PartialEq)]
pub struct FeasibleRegion {
    rows: Vec<Vec<f64>>,
    tau: Vec<f64>,
    dim: usize,
}

impl FeasibleRegion {
    pub fn new(dim: usize, rows: Vec<Vec<f64>>, tau: Vec<f64>) -> Result<Self> {
        if rows.len() != tau.len() {
            return Err(Error::Dimension("one tau per constraint row"));
        }
        for row in &rows {
            if row.len() != dim {
                return Err(Error::Dimension("constraint row length differs from dimension"));
            }
            if row.iter().any(|a| !(*a >= 0.0 && a.is_finite())) {
                return Err(Error::Config("constraint coefficients must be finite and nonnegative"));
            }
        }
        for (constraint, &t) in tau.iter().enumerate() {
            if !(t >= 0.0) {
                return Err(Error::InfeasibleRegion { constraint, tau: t });
            }
        }
        Ok(Self { rows, tau, dim })
    }

    /// Box only.
    pub fn unit_box(dim: usize) -> Self {
        Self {
            rows: Vec::new(),
            tau: Vec::new(),
            dim,
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn rows(&self) -> &[Vec<f64>] {
        &self.rows
    }

    pub fn tau(&self) -> &[f64] {
        &self.tau
    }

    /// Largest violation, halfspaces normalized by `max(1, τ_k)`.
    pub fn max_violation(&self, eta: &[f64]) -> f64 {
        let mut worst = 0.0f64;
        for &e in eta {
            worst = worst.max(-e).max(e - 1.0);
        }
        for (row, &t) in self.rows.iter().zip(&self.tau) {
            if t.is_finite() {
                worst = worst.max((dot(row, eta) - t) / t.max(1.0));
            }
        }
        worst
    }

    pub fn contains(&self, eta: &[f64], tol: f64) -> bool {
        eta.len() == self.dim && self.max_violation(eta) <= tol
    }

    fn active_rows(&self) -> impl Iterator<Item = (&Vec<f64>, f64, f64)> {
        self.rows.iter().zip(&self.tau).filter_map(|(row, &t)| {
            let nn = dot(row, row);
            (nn > 0.0 && t.is_finite()).then_some((row, t, nn))
        })
    }

    fn halfspaces_hold(&self, eta: &[f64]) -> bool {
        self.active_rows().all(|(row, t, _)| dot(row, eta) <= t)
    }

    /// Scales `eta` (already in the box) down until every halfspace holds.
    fn shrink_into(&self, eta: &mut [f64]) {
        let mut scale = 1.0f64;
        for (row, t, _) in self.active_rows() {
            let v = dot(row, eta);
            if v > t {
                scale = scale.min(t / v);
            }
        }
        if scale < 1.0 {
            for e in eta.iter_mut() {
                *e *= scale;
            }
        }
    }

    /// Euclidean projection onto the region.
    ///
    /// Solved exactly by a dual active-set method; Dykstra's alternating
    /// projections take over if that ever breaks down numerically. The result
    /// is snapped into the region to absorb rounding.
    pub fn project(&self, point: &[f64], opts: &SolverOptions) -> Vec<f64> {
        let boxed: Vec<f64> = point.iter().map(|v| clamp01(*v)).collect();
        if self.halfspaces_hold(&boxed) {
            return boxed;
        }
        let mut x = self
            .project_active_set(point, None)
            .unwrap_or_else(|| self.project_dykstra(point, opts));
        for v in x.iter_mut() {
            *v = clamp01(*v);
        }
        self.shrink_into(&mut x);
        x
    }

    /// Goldfarb–Idnani dual active-set iteration for `min ½ (x − p)ᵀB(x − p)`,
    /// given `B^{-1}` row-major (identity when `None`).
    ///
    /// Constraints are kept as `nᵀx >= b` with unit normals. The primal step
    /// is `B^{-1} n_q` with its components along the active normals removed.
    fn project_active_set(&self, p: &[f64], b_inv: Option<&[f64]>) -> Option<Vec<f64>> {
        let m = self.dim;
        let mut normals: Vec<Vec<f64>> = Vec::with_capacity(2 * m + self.rows.len());
        let mut bounds: Vec<f64> = Vec::with_capacity(normals.capacity());
        for i in 0..m {
            let mut lo = alloc::vec![0.0; m];
            lo[i] = 1.0;
            normals.push(lo);
            bounds.push(0.0);
            let mut hi = alloc::vec![0.0; m];
            hi[i] = -1.0;
            normals.push(hi);
            bounds.push(-1.0);
        }
        for (row, t, nn) in self.active_rows() {
            let s = libm::sqrt(nn);
            normals.push(row.iter().map(|a| -a / s).collect());
            bounds.push(-t / s);
        }
        let w: Vec<Vec<f64>> = match b_inv {
            None => normals.clone(),
            Some(bi) => normals
                .iter()
                .map(|n| (0..m).map(|r| dot(&bi[r * m..(r + 1) * m], n)).collect())
                .collect(),
        };
        let tol = 1e-14 * p.iter().fold(1.0f64, |acc, v| acc.max(v.abs()));
        let mut x = p.to_vec();
        let mut active: Vec<usize> = Vec::new();
        let mut u: Vec<f64> = Vec::new();
        let budget = 4 * normals.len() + 16;
        let mut steps = 0;
        loop {
            let mut worst = (usize::MAX, -tol);
            for (c, (n, &b)) in normals.iter().zip(&bounds).enumerate() {
                if active.contains(&c) {
                    continue;
                }
                let s = dot(n, &x) - b;
                if s < worst.1 {
                    worst = (c, s);
                }
            }
            let q = worst.0;
            if q == usize::MAX {
                return Some(x);
            }
            let mut u_plus = u.clone();
            u_plus.push(0.0);
            loop {
                steps += 1;
                if steps > budget {
                    return None;
                }
                let r = gram_solve(&normals, &w, &active, q)?;
                let mut z = w[q].clone();
                for (j, &c) in active.iter().enumerate() {
                    for i in 0..m {
                        z[i] -= r[j] * w[c][i];
                    }
                }
                let zz = dot(&z, &normals[q]);
                let mut t1 = f64::INFINITY;
                let mut drop = None;
                for (j, &rj) in r.iter().enumerate() {
                    if rj > 1e-14 {
                        let v = u_plus[j] / rj;
                        if v < t1 {
                            t1 = v;
                            drop = Some(j);
                        }
                    }
                }
                let t2 = if zz > 1e-14 * dot(&w[q], &normals[q]) {
                    -(dot(&normals[q], &x) - bounds[q]) / zz
                } else {
                    f64::INFINITY
                };
                let t = t1.min(t2);
                if !t.is_finite() {
                    return None;
                }
                if t2.is_finite() {
                    for i in 0..m {
                        x[i] += t * z[i];
                    }
                }
                for (uj, rj) in u_plus.iter_mut().zip(&r) {
                    *uj -= t * rj;
                }
                *u_plus.last_mut()? += t;
                if t2 <= t1 {
                    active.push(q);
                    u = u_plus;
                    break;
                }
                let j = drop?;
                active.remove(j);
                u_plus.remove(j);
            }
        }
    }

    fn project_dykstra(&self, point: &[f64], opts: &SolverOptions) -> Vec<f64> {
        let sets: Vec<(&Vec<f64>, f64, f64)> = self.active_rows().collect();
        let m = self.dim;
        let mut x = point.to_vec();
        let mut incr = alloc::vec![alloc::vec![0.0; m]; sets.len() + 1];
        let mut y = alloc::vec![0.0; m];
        for _ in 0..opts.dykstra_max_sweeps {
            let mut change = 0.0f64;
            // box
            for i in 0..m {
                y[i] = x[i] + incr[0][i];
                let nx = clamp01(y[i]);
                incr[0][i] = y[i] - nx;
                change = change.max((nx - x[i]).abs());
                x[i] = nx;
            }
            for (s, (row, t, nn)) in sets.iter().enumerate() {
                let p = &mut incr[s + 1];
                for i in 0..m {
                    y[i] = x[i] + p[i];
                }
                let excess = dot(row, &y) - t;
                for i in 0..m {
                    let nx = if excess > 0.0 { y[i] - excess / nn * row[i] } else { y[i] };
                    p[i] = y[i] - nx;
                    change = change.max((nx - x[i]).abs());
                    x[i] = nx;
                }
            }
            if change <= opts.dykstra_tolerance {
                break;
            }
        }
        x
    }
}

/// Solves `(NᵀW) r = Nᵀ w_q` over the active set by Cholesky, where `W`
/// holds the metric-scaled normals.
fn gram_solve(normals: &[Vec<f64>], w: &[Vec<f64>], active: &[usize], q: usize) -> Option<Vec<f64>> {
    let k = active.len();
    let mut g = alloc::vec![0.0; k * k];
    let mut rhs: Vec<f64> = active.iter().map(|&c| dot(&normals[c], &w[q])).collect();
    for a in 0..k {
        for b in 0..=a {
            let d = dot(&normals[active[a]], &w[active[b]]);
            g[a * k + b] = d;
            g[b * k + a] = d;
        }
    }
    // in-place lower Cholesky
    for j in 0..k {
        let diag = g[j * k + j];
        let mut d = diag;
        for p in 0..j {
            d -= g[j * k + p] * g[j * k + p];
        }
        if !(d > 1e-14 * diag) {
            return None;
        }
        let d = libm::sqrt(d);
        g[j * k + j] = d;
        for i in j + 1..k {
            let mut s = g[i * k + j];
            for p in 0..j {
                s -= g[i * k + p] * g[j * k + p];
            }
            g[i * k + j] = s / d;
        }
    }
    for i in 0..k {
        let mut s = rhs[i];
        for p in 0..i {
            s -= g[i * k + p] * rhs[p];
        }
        rhs[i] = s / g[i * k + i];
    }
    for i in (0..k).rev() {
        let mut s = rhs[i];
        for p in i + 1..k {
            s -= g[p * k + i] * rhs[p];
        }
        rhs[i] = s / g[i * k + i];
    }
    Some(rhs)
}

fn clamp01(v: f64) -> f64 {
    if v.is_nan() {
        0.0
    } else {
        v.clamp(0.0, 1.0)
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    libm::sqrt(dot(a, a))
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolverOptions {
    pub max_iters: usize,
    /// Stop once `‖P(η + ∇f) − η‖ <= tolerance`.
    pub tolerance: f64,
    /// First gradient step, and the fallback when a spectral step fails.
    pub initial_step: f64,
    pub shrink: f64,
    pub armijo: f64,
    pub dykstra_tolerance: f64,
    pub dykstra_max_sweeps: usize,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            max_iters: 5000,
            tolerance: 1e-7,
            initial_step: 1.0,
            shrink: 0.5,
            armijo: 1e-4,
            dykstra_tolerance: 1e-15,
            dykstra_max_sweeps: 100_000,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolverResult {
    pub eta_star: ReflectionVector,
    pub objective: f64,
    pub iterations: usize,
    pub converged: bool,
    /// `‖P(η* + ∇f(η*)) − η*‖`.
    pub kkt_residual: f64,
}

fn finite_value<O: Objective + ?Sized>(obj: &O, eta: &[f64]) -> Result<f64> {
    let v = obj.value(eta)?;
    if v.is_finite() {
        Ok(v)
    } else {
        Err(Error::OracleNonFinite)
    }
}

fn finite_gradient<O: Objective + ?Sized>(obj: &O, eta: &[f64], dim: usize) -> Result<Vec<f64>> {
    let g = obj.gradient(eta)?;
    if g.len() != dim {
        return Err(Error::Dimension("gradient length differs from dimension"));
    }
    if g.iter().all(|v| v.is_finite()) {
        Ok(g)
    } else {
        Err(Error::OracleNonFinite)
    }
}

fn stationarity(region: &FeasibleRegion, eta: &[f64], g: &[f64], opts: &SolverOptions) -> f64 {
    let target: Vec<f64> = eta.iter().zip(g).map(|(e, d)| e + d).collect();
    let p = region.project(&target, opts);
    let diff: Vec<f64> = p.iter().zip(eta).map(|(a, b)| a - b).collect();
    norm(&diff)
}

/// Target of a projected Newton step: the maximizer over the region of the
/// quadratic model with curvature `−H + μI`.
fn newton_target(region: &FeasibleRegion, eta: &[f64], g: &[f64], h: &[f64]) -> Option<Vec<f64>> {
    let m = eta.len();
    if h.len() != m * m || h.iter().any(|v| !v.is_finite()) {
        return None;
    }
    let mut b = DMatrix::from_row_slice(m, m, h);
    b.neg_mut();
    let scale = b.diagonal().iter().fold(0.0f64, |acc, v| acc.max(*v));
    if !(scale > 0.0) {
        return None;
    }
    // keeps the model strictly concave when H is singular
    for i in 0..m {
        b[(i, i)] += 1e-9 * scale;
    }
    let b_inv = b.cholesky()?.inverse();
    let b_inv: Vec<f64> = (0..m * m).map(|k| b_inv[(k / m, k % m)]).collect();
    let p: Vec<f64> = (0..m).map(|r| eta[r] + dot(&b_inv[r * m..(r + 1) * m], g)).collect();
    let mut x = region.project_active_set(&p, Some(&b_inv))?;
    for v in x.iter_mut() {
        *v = clamp01(*v);
    }
    region.shrink_into(&mut x);
    Some(x)
}

/// Accepted point with its value and gradient.
type Step = (Vec<f64>, f64, Vec<f64>);

/// Armijo backtracking from `eta` towards `target`.
fn line_search<O: Objective + ?Sized>(
    objective: &O,
    eta: &[f64],
    f: f64,
    g: &[f64],
    target: &[f64],
    opts: &SolverOptions,
) -> Result<Option<Step>> {
    let m = eta.len();
    let dir: Vec<f64> = target.iter().zip(eta).map(|(a, b)| a - b).collect();
    let slope = dot(g, &dir);
    if !(slope > 0.0) {
        return Ok(None);
    }
    // rounding slack on the objective so a converged line search still terminates
    let slack = 4.0 * f64::EPSILON * f.abs();
    let noise = 1e-12 * f.abs().max(1.0);
    let mut lambda = 1.0;
    for _ in 0..64 {
        let cand: Vec<f64> = eta.iter().zip(&dir).map(|(e, d)| e + lambda * d).collect();
        let fc = finite_value(objective, &cand)?;
        if fc >= f + opts.armijo * lambda * slope - slack {
            let gc = finite_gradient(objective, &cand, m)?;
            return Ok(Some((cand, fc, gc)));
        }
        // once value differences drown in rounding, concavity lets the
        // slope at the candidate certify that nothing was lost
        if fc >= f - noise {
            let gc = finite_gradient(objective, &cand, m)?;
            if dot(&gc, &dir) >= 0.0 {
                return Ok(Some((cand, fc, gc)));
            }
        }
        lambda *= opts.shrink;
    }
    Ok(None)
}

/// Maximizes a concave `objective` over `region`, starting from `η = 0`.
pub fn maximize<O: Objective + ?Sized>(
    objective: &O,
    region: &FeasibleRegion,
    opts: &SolverOptions,
) -> Result<SolverResult> {
    let m = region.dim();
    let mut eta = alloc::vec![0.0; m];
    let mut f = finite_value(objective, &eta)?;
    let mut g = finite_gradient(objective, &eta, m)?;
    let mut step = opts.initial_step;
    let mut iterations = 0;
    let mut kkt = stationarity(region, &eta, &g, opts);

    while iterations < opts.max_iters && kkt > opts.tolerance {
        iterations += 1;
        let mut moved = None;
        // Newton, then the spectral step, then the unit step
        for attempt in 0..3 {
            let target = match attempt {
                0 => match objective.hessian(&eta)? {
                    Some(h) => match newton_target(region, &eta, &g, &h) {
                        Some(x) => x,
                        None => continue,
                    },
                    None => continue,
                },
                1 => {
                    let p: Vec<f64> = eta.iter().zip(&g).map(|(e, d)| e + step * d).collect();
                    region.project(&p, opts)
                }
                _ if step != opts.initial_step => {
                    let p: Vec<f64> = eta.iter().zip(&g).map(|(e, d)| e + opts.initial_step * d).collect();
                    region.project(&p, opts)
                }
                _ => continue,
            };
            moved = line_search(objective, &eta, f, &g, &target, opts)?;
            if moved.is_some() {
                break;
            }
        }
        let Some((cand, fc, g_new)) = moved else { break };
        let s: Vec<f64> = cand.iter().zip(&eta).map(|(a, b)| a - b).collect();
        let y: Vec<f64> = g_new.iter().zip(&g).map(|(a, b)| a - b).collect();
        let sy = dot(&s, &y);
        let ss = dot(&s, &s);
        step = if sy < 0.0 { (ss / -sy).clamp(1e-12, 1e12) } else { 1e12 };
        eta = cand;
        f = fc.max(f);
        g = g_new;
        kkt = stationarity(region, &eta, &g, opts);
    }

    region.shrink_into(&mut eta);
    let objective_value = finite_value(objective, &eta)?;
    Ok(SolverResult {
        eta_star: ReflectionVector::clamped(eta),
        objective: objective_value,
        iterations,
        converged: kkt <= opts.tolerance,
        kkt_residual: kkt,
    })
}

/// Uniform draw on the unit box, scaled once into the region.
///
/// `η = u · min(1, min_k τ_k / a_kᵀu)`; rows with `a_kᵀu = 0` are ignored.
pub fn random_feasible<R: Rng + ?Sized>(region: &FeasibleRegion, rng: &mut R) -> ReflectionVector {
    let u: Vec<f64> = (0..region.dim()).map(|_| rng.random::<f64>()).collect();
    scale_into(region, u)
}

/// The scaling step of [`random_feasible`] for a given `u ∈ [0, 1]^M`.
pub fn scale_into(region: &FeasibleRegion, u: Vec<f64>) -> ReflectionVector {
    let mut scale = 1.0f64;
    for (row, &t) in region.rows().iter().zip(region.tau()) {
        let load = dot(row, &u);
        if load > 0.0 && t.is_finite() {
            scale = scale.min(t / load);
        }
    }
    ReflectionVector::clamped(u.into_iter().map(|v| v * scale).collect())
}
