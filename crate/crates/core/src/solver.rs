//! Minimization of `I(x) + Σ t_i H̃_i(x)` over products of simplices, with
//! optional equality constraints `H̃_j(x) = v_j`.
//!
//! Unconstrained problems use the damped mean-field fixed point
//! `x(c, y) ∝ ρ(y) exp(−q ∂_{c,y} Σ t_i H̃_i(x))` with a modified-Newton
//! polish every thousand iterations. Constrained problems use a quadratic
//! penalty with an increasing weight schedule, each stage minimized by
//! modified Newton in per-cell null-space coordinates, then a Newton solve of
//! the first-order (KKT) system to land on the constraint surface.

use std::sync::OnceLock;

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp1};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{dot, HiddenSpace, Model, Representation};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolverOptions {
    /// Multi-starts per problem.
    pub starts: usize,
    pub seed: u64,
    /// Constraint residual accepted as feasible.
    pub tol_feas: f64,
    /// Objective gap within which minimizers count as ties.
    pub tol_deg: f64,
    /// Max-norm distance under which two macrostates are the same.
    pub tol_match: f64,
    pub damping: f64,
    pub fixed_point_tol: f64,
    pub max_iterations: usize,
    pub penalty_schedule: Vec<f64>,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            starts: 8,
            seed: 0,
            tol_feas: 1e-8,
            tol_deg: 1e-8,
            tol_match: 1e-6,
            damping: 0.5,
            fixed_point_tol: 1e-12,
            max_iterations: 100_000,
            penalty_schedule: vec![1e1, 1e2, 1e3, 1e4, 1e5, 1e6],
        }
    }
}

/// `min Σ t_i H̃_i + I` subject to `H̃_j = v_j` for each `(j, v_j)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Task {
    pub tilt: Vec<(usize, f64)>,
    pub constraints: Vec<(usize, f64)>,
}

impl Task {
    pub fn unconstrained(tilt: Vec<(usize, f64)>) -> Self {
        Self {
            tilt,
            constraints: Vec::new(),
        }
    }
}

/// Result of a multi-start solve.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Outcome {
    /// Least objective found; `+∞` when the constraints are infeasible.
    pub value: f64,
    /// Minimizers within the tie tolerance, deduplicated. Flattened entries
    /// for simplex kinds, `[index]` for tables.
    pub points: Vec<Vec<f64>>,
    pub residual: f64,
    pub converged: bool,
    pub starts: usize,
    /// Exact enumeration (tables).
    pub certified: bool,
    /// The constraint value lies outside the attainable range.
    pub infeasible: bool,
}

impl Outcome {
    fn infeasible() -> Self {
        Self {
            value: f64::INFINITY,
            points: Vec::new(),
            residual: f64::INFINITY,
            converged: true,
            starts: 0,
            certified: true,
            infeasible: true,
        }
    }
}

/// Attainable interval of one component plus the supports of its extreme
/// optimizers.
#[derive(Debug, Clone, PartialEq)]
pub struct RangeInfo {
    pub min: f64,
    pub max: f64,
    pub min_faces: Vec<Vec<bool>>,
    pub max_faces: Vec<Vec<bool>>,
}

pub(crate) fn mix_seed(seed: u64, a: u64, b: u64) -> u64 {
    let mut z = seed
        ^ a.wrapping_mul(0x9E37_79B9_7F4A_7C15)
        ^ b.wrapping_mul(0xC2B2_AE3D_27D4_EB4F).rotate_left(17);
    // splitmix64 finalizer
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

#[derive(Debug, Clone)]
struct Space {
    q: usize,
    m: usize,
    prior: Vec<f64>,
    ln_prior: Vec<f64>,
}

impl Space {
    fn n(&self) -> usize {
        self.q * self.m
    }
}

/// Combined quadratic `½ xᵀ K x + aᵀ x`.
#[derive(Debug, Clone)]
struct Quad {
    n: usize,
    kernel: Option<Vec<f64>>,
    linear: Vec<f64>,
}

impl Quad {
    fn combine(comps: &[Representation], weights: &[(usize, f64)], n: usize) -> Self {
        let mut kernel: Option<Vec<f64>> = None;
        let mut linear = vec![0.0; n];
        for &(i, w) in weights {
            if w == 0.0 {
                continue;
            }
            if let Some(k) = comps[i].kernel() {
                let acc = kernel.get_or_insert_with(|| vec![0.0; n * n]);
                acc.iter_mut().zip(k).for_each(|(a, b)| *a += w * b);
            }
            if let Some(a) = comps[i].linear_part() {
                linear.iter_mut().zip(a).for_each(|(l, b)| *l += w * b);
            }
        }
        Self { n, kernel, linear }
    }

    fn single(comp: &Representation, n: usize) -> Self {
        Self {
            n,
            kernel: comp.kernel().map(<[f64]>::to_vec),
            linear: comp.linear_part().map_or(vec![0.0; n], <[f64]>::to_vec),
        }
    }

    fn grad(&self, x: &[f64]) -> Vec<f64> {
        let mut g = self.linear.clone();
        if let Some(k) = &self.kernel {
            for (i, gi) in g.iter_mut().enumerate() {
                *gi += dot(&k[i * self.n..(i + 1) * self.n], x);
            }
        }
        g
    }

    fn value(&self, x: &[f64]) -> f64 {
        let mut v = dot(&self.linear, x);
        if let Some(k) = &self.kernel {
            v += 0.5 * crate::model::quadratic_form(k, x);
        }
        v
    }

    fn add_hessian(&self, h: &mut DMatrix<f64>, scale: f64) {
        if let Some(k) = &self.kernel {
            for i in 0..self.n {
                for j in 0..self.n {
                    h[(i, j)] += scale * k[i * self.n + j];
                }
            }
        }
    }

    /// Lipschitz bound for the gradient (max absolute row sum).
    fn lipschitz(&self) -> f64 {
        self.kernel.as_ref().map_or(0.0, |k| {
            k.chunks(self.n)
                .map(|r| r.iter().map(|v| v.abs()).sum::<f64>())
                .fold(0.0, f64::max)
        })
    }
}

/// Penalized objective `I + Q(x) + κ Σ (C_j(x) − v_j)²`.
struct Objective<'a> {
    space: &'a Space,
    mask: Option<&'a [bool]>,
    field: Quad,
    cons: Vec<(Quad, f64)>,
    /// Per-constraint penalty weights, the inverse squared range width, so
    /// the schedule means the same thing for every energy scale.
    weights: Vec<f64>,
    kappa: f64,
}

impl Objective<'_> {
    fn allowed(&self, i: usize) -> bool {
        self.mask.is_none_or(|m| m[i])
    }

    fn entropy(&self, x: &[f64]) -> f64 {
        let m = self.space.m;
        let mut acc = 0.0;
        for (i, &xi) in x.iter().enumerate() {
            if xi > 0.0 {
                acc += xi * (xi.ln() - self.space.ln_prior[i % m]);
            }
        }
        acc / self.space.q as f64
    }

    fn residuals(&self, x: &[f64]) -> Vec<f64> {
        self.cons.iter().map(|(c, v)| c.value(x) - v).collect()
    }

    /// Objective without the penalty.
    fn base(&self, x: &[f64]) -> f64 {
        self.entropy(x) + self.field.value(x)
    }

    fn value(&self, x: &[f64]) -> f64 {
        let pen: f64 = self
            .residuals(x)
            .iter()
            .zip(&self.weights)
            .map(|(r, w)| w * r * r)
            .sum();
        self.base(x) + self.kappa * pen
    }

    fn base_grad(&self, x: &[f64]) -> Vec<f64> {
        let (q, m) = (self.space.q as f64, self.space.m);
        let mut g = self.field.grad(x);
        for (i, gi) in g.iter_mut().enumerate() {
            if self.allowed(i) && x[i] > 0.0 {
                *gi += (x[i].ln() - self.space.ln_prior[i % m] + 1.0) / q;
            }
        }
        g
    }

    fn grad(&self, x: &[f64]) -> Vec<f64> {
        let mut g = self.base_grad(x);
        if self.kappa > 0.0 {
            for ((c, v), w) in self.cons.iter().zip(&self.weights) {
                let r = c.value(x) - v;
                for (gi, ci) in g.iter_mut().zip(c.grad(x)) {
                    *gi += 2.0 * self.kappa * w * r * ci;
                }
            }
        }
        g
    }

    fn base_hessian(&self, x: &[f64]) -> DMatrix<f64> {
        let n = self.space.n();
        let q = self.space.q as f64;
        let mut h = DMatrix::zeros(n, n);
        for i in 0..n {
            if self.allowed(i) && x[i] > 0.0 {
                h[(i, i)] = 1.0 / (q * x[i]);
            }
        }
        self.field.add_hessian(&mut h, 1.0);
        h
    }

    fn hessian(&self, x: &[f64]) -> DMatrix<f64> {
        let mut h = self.base_hessian(x);
        if self.kappa > 0.0 {
            for ((c, v), w) in self.cons.iter().zip(&self.weights) {
                let r = c.value(x) - v;
                let g = DVector::from_vec(c.grad(x));
                h += &(&g * g.transpose()) * (2.0 * self.kappa * w);
                c.add_hessian(&mut h, 2.0 * self.kappa * w * r);
            }
        }
        h
    }

    /// Null-space basis of the per-cell sum constraints restricted to the
    /// allowed coordinates: columns `e_i − e_ref(c)`.
    fn basis(&self, x: &[f64]) -> Vec<(usize, usize)> {
        let m = self.space.m;
        let mut cols = Vec::new();
        for c in 0..self.space.q {
            let allowed: Vec<usize> = (c * m..(c + 1) * m).filter(|&i| self.allowed(i)).collect();
            let Some(&r) = allowed.iter().max_by(|&&a, &&b| x[a].total_cmp(&x[b])) else {
                continue;
            };
            cols.extend(allowed.into_iter().filter(|&i| i != r).map(|i| (i, r)));
        }
        cols
    }
}

fn reduce_vec(g: &[f64], basis: &[(usize, usize)]) -> DVector<f64> {
    DVector::from_iterator(basis.len(), basis.iter().map(|&(i, r)| g[i] - g[r]))
}

fn reduce_mat(h: &DMatrix<f64>, basis: &[(usize, usize)]) -> DMatrix<f64> {
    let d = basis.len();
    DMatrix::from_fn(d, d, |k, l| {
        let (i, r) = basis[k];
        let (j, s) = basis[l];
        h[(i, j)] - h[(i, s)] - h[(r, j)] + h[(r, s)]
    })
}

fn expand(p: &DVector<f64>, basis: &[(usize, usize)], n: usize) -> Vec<f64> {
    let mut dx = vec![0.0; n];
    for (k, &(i, r)) in basis.iter().enumerate() {
        dx[i] += p[k];
        dx[r] -= p[k];
    }
    dx
}

/// Largest step in (0, 1] keeping every entry above `(1 − 0.995)` of its value.
fn fraction_to_boundary(x: &[f64], dx: &[f64]) -> f64 {
    x.iter()
        .zip(dx)
        .filter(|(_, d)| **d < 0.0)
        .map(|(xi, d)| -0.5 * xi / d)
        .fold(1.0, f64::min)
}

fn max_abs(v: impl IntoIterator<Item = f64>) -> f64 {
    v.into_iter().fold(0.0, |a, b| a.max(b.abs()))
}

/// Modified Newton descent on `obj`; returns the final point and whether the
/// reduced gradient met `gtol`.
fn newton(obj: &Objective, mut x: Vec<f64>, gtol: f64, max_iter: usize) -> (Vec<f64>, bool) {
    let n = x.len();
    for _ in 0..max_iter {
        let basis = obj.basis(&x);
        if basis.is_empty() {
            return (x, true);
        }
        let g = obj.grad(&x);
        let rg = reduce_vec(&g, &basis);
        let gnorm = rg.amax();
        let hr = reduce_mat(&obj.hessian(&x), &basis);
        let d = basis.len();
        let diag_scale = (0..d).map(|i| hr[(i, i)].abs()).fold(1e-12, f64::max);
        if !diag_scale.is_finite() || !gnorm.is_finite() {
            return (x, false);
        }
        if gnorm <= gtol {
            match escape_saddle(obj, &x, &hr, &basis, diag_scale) {
                Some(y) => {
                    x = y;
                    continue;
                }
                None => return (x, true),
            }
        }
        let mut mu = 0.0;
        let mut p = -rg.clone();
        for _ in 0..40 {
            let shifted = &hr + DMatrix::identity(d, d) * mu;
            if let Some(ch) = shifted.cholesky() {
                p = -ch.solve(&rg);
                break;
            }
            mu = if mu == 0.0 {
                1e-10 * diag_scale
            } else {
                mu * 10.0
            };
        }
        let dx = expand(&p, &basis, n);
        let slope = dot(&g, &dx);
        if slope >= 0.0 {
            match escape_saddle(obj, &x, &hr, &basis, diag_scale) {
                Some(y) => {
                    x = y;
                    continue;
                }
                None => return (x, gnorm <= gtol * 1e3),
            }
        }
        let f0 = obj.value(&x);
        let mut alpha = fraction_to_boundary(&x, &dx);
        let mut accepted = None;
        for _ in 0..60 {
            let trial: Vec<f64> = x
                .iter()
                .zip(&dx)
                .map(|(a, b)| (a + alpha * b).max(0.0))
                .collect();
            let f1 = obj.value(&trial);
            if f1 <= f0 + 1e-4 * alpha * slope {
                accepted = Some(trial);
                break;
            }
            alpha *= 0.5;
        }
        match accepted {
            Some(trial) => {
                let step = max_abs(trial.iter().zip(&x).map(|(a, b)| a - b));
                x = renormalize(trial, obj.space.m);
                if step <= 1e-16 {
                    return (x, gnorm <= gtol * 1e3);
                }
            }
            // No decrease representable in floating point.
            None => return (x, gnorm <= gtol * 1e3),
        }
    }
    let g = obj.grad(&x);
    let ok = reduce_vec(&g, &obj.basis(&x)).amax() <= gtol;
    (x, ok)
}

/// Step along the most negative curvature direction of the reduced Hessian,
/// trying both signs. `None` when the curvature is nonnegative or no step
/// decreases the objective.
fn escape_saddle(
    obj: &Objective,
    x: &[f64],
    hr: &DMatrix<f64>,
    basis: &[(usize, usize)],
    diag_scale: f64,
) -> Option<Vec<f64>> {
    let eig = hr.clone().symmetric_eigen();
    let (k, &lam) = eig
        .eigenvalues
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.total_cmp(b.1))?;
    if lam >= -1e-8 * diag_scale {
        return None;
    }
    let v = eig.eigenvectors.column(k).into_owned();
    let f0 = obj.value(x);
    let mut best: Option<(f64, Vec<f64>)> = None;
    for sign in [1.0, -1.0] {
        let dx = expand(&(&v * sign), basis, x.len());
        let mut alpha = fraction_to_boundary(x, &dx);
        for _ in 0..60 {
            let trial: Vec<f64> = x
                .iter()
                .zip(&dx)
                .map(|(a, b)| (a + alpha * b).max(0.0))
                .collect();
            let f1 = obj.value(&trial);
            if f1 < f0 + 0.25 * alpha * alpha * lam {
                if best.as_ref().is_none_or(|b| f1 < b.0) {
                    best = Some((f1, trial));
                }
                break;
            }
            alpha *= 0.5;
        }
    }
    best.map(|(_, y)| renormalize(y, obj.space.m))
}

/// Mixes 5% of the uniform distribution over the allowed letters into `x`.
fn smooth(mut x: Vec<f64>, mask: Option<&[bool]>, m: usize) -> Vec<f64> {
    for (c, row) in x.chunks_mut(m).enumerate() {
        let allowed: Vec<usize> = (0..m)
            .filter(|&y| mask.is_none_or(|k| k[c * m + y]))
            .collect();
        for &y in &allowed {
            row[y] = 0.95 * row[y] + 0.05 / allowed.len() as f64;
        }
    }
    x
}

fn renormalize(mut x: Vec<f64>, m: usize) -> Vec<f64> {
    for row in x.chunks_mut(m) {
        let s: f64 = row.iter().sum();
        if s > 0.0 {
            row.iter_mut().for_each(|v| *v /= s);
        }
    }
    x
}

/// Newton iteration on the first-order system of
/// `min base(x)` s.t. `C_j(x) = v_j`, starting from multipliers `lambda`.
fn kkt_polish(obj: &Objective, x0: &[f64], lambda0: Vec<f64>) -> Option<Vec<f64>> {
    let n = x0.len();
    let k = obj.cons.len();
    let mut x = x0.to_vec();
    let mut lambda = lambda0;
    for _ in 0..60 {
        let basis = obj.basis(&x);
        let d = basis.len();
        if d == 0 {
            break;
        }
        let mut gl = obj.base_grad(&x);
        let mut w = obj.base_hessian(&x);
        let r = obj.residuals(&x);
        let mut a = DMatrix::zeros(k, d);
        for (j, (c, _)) in obj.cons.iter().enumerate() {
            let cg = c.grad(&x);
            for (gi, ci) in gl.iter_mut().zip(&cg) {
                *gi += lambda[j] * ci;
            }
            c.add_hessian(&mut w, lambda[j]);
            let ar = reduce_vec(&cg, &basis);
            a.row_mut(j).copy_from(&ar.transpose());
        }
        let rgl = reduce_vec(&gl, &basis);
        if rgl.amax() <= 1e-13 && max_abs(r.iter().copied()) <= 1e-15 {
            break;
        }
        let wr = reduce_mat(&w, &basis);
        let mut sys = DMatrix::zeros(d + k, d + k);
        sys.view_mut((0, 0), (d, d)).copy_from(&wr);
        sys.view_mut((0, d), (d, k)).copy_from(&a.transpose());
        sys.view_mut((d, 0), (k, d)).copy_from(&a);
        let mut rhs = DVector::zeros(d + k);
        rhs.rows_mut(0, d).copy_from(&(-&rgl));
        for j in 0..k {
            rhs[d + j] = -r[j];
        }
        let sol = sys.lu().solve(&rhs)?;
        if sol.iter().any(|v| !v.is_finite()) {
            return None;
        }
        let dx = expand(&sol.rows(0, d).into_owned(), &basis, n);
        let alpha = fraction_to_boundary(&x, &dx);
        for (xi, di) in x.iter_mut().zip(&dx) {
            *xi = (*xi + alpha * di).max(0.0);
        }
        for j in 0..k {
            lambda[j] += alpha * sol[d + j];
        }
        x = renormalize(x, obj.space.m);
        if max_abs(dx.iter().map(|v| alpha * v)) <= 1e-16 {
            break;
        }
    }
    let basis = obj.basis(&x);
    let mut gl = obj.base_grad(&x);
    for (j, (c, _)) in obj.cons.iter().enumerate() {
        for (gi, ci) in gl.iter_mut().zip(c.grad(&x)) {
            *gi += lambda[j] * ci;
        }
    }
    let stationary = basis.is_empty() || reduce_vec(&gl, &basis).amax() <= 1e-8;
    stationary.then_some(x)
}

/// Gauss–Newton projection onto `C_j(x) = v_j` along the tangent space.
fn project_feasible(obj: &Objective, x0: &[f64]) -> Vec<f64> {
    let n = x0.len();
    let k = obj.cons.len();
    let mut x = x0.to_vec();
    for _ in 0..30 {
        let r = obj.residuals(&x);
        if max_abs(r.iter().copied()) <= 1e-15 {
            break;
        }
        let basis = obj.basis(&x);
        let d = basis.len();
        if d == 0 {
            break;
        }
        let mut a = DMatrix::zeros(k, d);
        for (j, (c, _)) in obj.cons.iter().enumerate() {
            a.row_mut(j)
                .copy_from(&reduce_vec(&c.grad(&x), &basis).transpose());
        }
        let gram = &a * a.transpose();
        let Some(y) = gram.lu().solve(&DVector::from_vec(r)) else {
            break;
        };
        let p = -(a.transpose() * y);
        let dx = expand(&p, &basis, n);
        let alpha = fraction_to_boundary(&x, &dx);
        for (xi, di) in x.iter_mut().zip(&dx) {
            *xi = (*xi + alpha * di).max(0.0);
        }
        x = renormalize(x, obj.space.m);
    }
    x
}

/// Euclidean projection of `v` onto the probability simplex.
fn project_simplex(v: &mut [f64]) {
    let mut u = v.to_vec();
    u.sort_by(|a, b| b.total_cmp(a));
    let mut css = 0.0;
    let mut theta = 0.0;
    for (i, ui) in u.iter().enumerate() {
        css += ui;
        let t = (css - 1.0) / (i + 1) as f64;
        if ui - t > 0.0 {
            theta = t;
        }
    }
    v.iter_mut().for_each(|x| *x = (*x - theta).max(0.0));
}

/// Shared solver state for a non-tabular model.
pub struct Engine<'m> {
    model: &'m Model,
    space: Space,
    opts: SolverOptions,
    ranges: Vec<OnceLock<RangeInfo>>,
}

impl<'m> Engine<'m> {
    pub fn new(model: &'m Model, opts: SolverOptions) -> Self {
        let space = match &model.space {
            HiddenSpace::Table { .. } => Space {
                q: 1,
                m: 0,
                prior: Vec::new(),
                ln_prior: Vec::new(),
            },
            HiddenSpace::Simplex { prior, .. } => Space {
                q: 1,
                m: prior.len(),
                prior: prior.clone(),
                ln_prior: prior.iter().map(|p| p.ln()).collect(),
            },
            HiddenSpace::Cells { cells, prior, .. } => Space {
                q: *cells,
                m: prior.len(),
                prior: prior.clone(),
                ln_prior: prior.iter().map(|p| p.ln()).collect(),
            },
        };
        Self {
            model,
            space,
            opts,
            ranges: (0..model.sigma()).map(|_| OnceLock::new()).collect(),
        }
    }

    pub fn options(&self) -> &SolverOptions {
        &self.opts
    }

    pub fn model(&self) -> &'m Model {
        self.model
    }

    fn check_task(&self, task: &Task) -> Result<()> {
        let sigma = self.model.sigma();
        for &(i, v) in task.tilt.iter().chain(&task.constraints) {
            if i >= sigma {
                return Err(Error::shape(
                    format!("component below {sigma}"),
                    format!("component {i}"),
                ));
            }
            if !v.is_finite() {
                return Err(Error::Argument(format!(
                    "non-finite parameter {v} for component {i}"
                )));
            }
        }
        Ok(())
    }

    pub fn solve(&self, task: &Task, stream: u64) -> Result<Outcome> {
        self.check_task(task)?;
        match &self.model.space {
            HiddenSpace::Table { rate } => Ok(self.enumerate_table(rate, task)),
            _ if task.constraints.is_empty() => self.solve_free(task, stream),
            _ => self.solve_constrained(task, stream),
        }
    }

    fn enumerate_table(&self, rate: &[f64], task: &Task) -> Outcome {
        let table = |i: usize| match &self.model.components[i] {
            Representation::Table(v) => v.as_slice(),
            Representation::Field { .. } => &[],
        };
        let feasible: Vec<usize> = (0..rate.len())
            .filter(|&k| task.constraints.iter().all(|&(j, v)| table(j)[k] == v))
            .collect();
        if feasible.is_empty() {
            return Outcome::infeasible();
        }
        let obj = |k: usize| rate[k] + task.tilt.iter().map(|&(i, t)| t * table(i)[k]).sum::<f64>();
        let best = feasible
            .iter()
            .map(|&k| obj(k))
            .fold(f64::INFINITY, f64::min);
        Outcome {
            value: best,
            points: feasible
                .into_iter()
                .filter(|&k| obj(k) <= best + self.opts.tol_deg)
                .map(|k| vec![k as f64])
                .collect(),
            residual: 0.0,
            converged: true,
            starts: 1,
            certified: true,
            infeasible: false,
        }
    }

    fn objective<'a>(&'a self, task: &Task, mask: Option<&'a [bool]>, kappa: f64) -> Objective<'a> {
        let n = self.space.n();
        Objective {
            space: &self.space,
            mask,
            field: Quad::combine(&self.model.components, &task.tilt, n),
            cons: task
                .constraints
                .iter()
                .map(|&(j, v)| (Quad::single(&self.model.components[j], n), v))
                .collect(),
            weights: task
                .constraints
                .iter()
                .map(|&(j, _)| {
                    let r = self.range(j);
                    (r.max - r.min).max(1e-12).powi(-2)
                })
                .collect(),
            kappa,
        }
    }

    /// Starting points: the prior, smoothed vertices, then Dirichlet draws.
    fn starts(&self, mask: Option<&[bool]>, stream: u64, salt: u64) -> Vec<Vec<f64>> {
        let (q, m) = (self.space.q, self.space.m);
        let allowed = |c: usize| -> Vec<usize> {
            (0..m)
                .filter(|&y| mask.is_none_or(|k| k[c * m + y]))
                .collect()
        };
        let restricted_prior = |c: usize| -> Vec<f64> {
            let letters = allowed(c);
            let z: f64 = letters.iter().map(|&y| self.space.prior[y]).sum();
            let mut row = vec![0.0; m];
            for y in letters {
                row[y] = self.space.prior[y] / z;
            }
            row
        };
        let total = self.opts.starts.max(1);
        let mut out = vec![(0..q).flat_map(restricted_prior).collect::<Vec<f64>>()];
        let widest = (0..q).map(|c| allowed(c).len()).max().unwrap_or(0);
        for k in 0..widest.min(total - 1) {
            let x: Vec<f64> = (0..q)
                .flat_map(|c| {
                    let letters = allowed(c);
                    let pick = letters[k % letters.len()];
                    let p = restricted_prior(c);
                    (0..m).map(move |y| 0.1 * p[y] + if y == pick { 0.9 } else { 0.0 })
                })
                .collect();
            out.push(x);
        }
        let mut idx = out.len() as u64;
        while out.len() < total {
            let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(self.opts.seed ^ salt, stream, idx));
            let mut x = vec![0.0; q * m];
            for c in 0..q {
                let letters = allowed(c);
                let draws: Vec<f64> = letters.iter().map(|_| Exp1.sample(&mut rng)).collect();
                let z: f64 = draws.iter().sum();
                for (y, d) in letters.into_iter().zip(draws) {
                    x[c * m + y] = d / z;
                }
            }
            out.push(x);
            idx += 1;
        }
        out
    }

    fn gibbs(&self, field: &Quad, x: &[f64], mask: Option<&[bool]>) -> Vec<f64> {
        let (q, m) = (self.space.q, self.space.m);
        let g = field.grad(x);
        let mut out = vec![0.0; q * m];
        for c in 0..q {
            let logits: Vec<(usize, f64)> = (0..m)
                .filter(|&y| mask.is_none_or(|k| k[c * m + y]))
                .map(|y| (y, self.space.ln_prior[y] - q as f64 * g[c * m + y]))
                .collect();
            let top = logits.iter().map(|l| l.1).fold(f64::NEG_INFINITY, f64::max);
            let z: f64 = logits.iter().map(|l| (l.1 - top).exp()).sum();
            for (y, l) in logits {
                out[c * m + y] = (l - top).exp() / z;
            }
        }
        out
    }

    fn fixed_point(&self, obj: &Objective, mut x: Vec<f64>) -> (Vec<f64>, bool) {
        let damp = self.opts.damping;
        for it in 1..=self.opts.max_iterations {
            let next = self.gibbs(&obj.field, &x, obj.mask);
            let change = max_abs(next.iter().zip(&x).map(|(a, b)| a - b));
            if change <= self.opts.fixed_point_tol {
                return (next, true);
            }
            x = x
                .iter()
                .zip(&next)
                .map(|(a, b)| damp * a + (1.0 - damp) * b)
                .collect();
            if it % 1000 == 0 {
                // Critical slowing down: finish with Newton.
                let (y, ok) = newton(obj, x.clone(), 1e-13, 500);
                if ok {
                    return (y, true);
                }
                x = y;
            }
        }
        (x, false)
    }

    fn collect(&self, found: Vec<(f64, Vec<f64>, f64)>, starts: usize) -> Outcome {
        let best = found.iter().map(|f| f.0).fold(f64::INFINITY, f64::min);
        let mut points: Vec<Vec<f64>> = Vec::new();
        let mut residual = 0.0f64;
        let mut ordered = found;
        ordered.sort_by(|a, b| a.0.total_cmp(&b.0));
        for (v, x, r) in ordered {
            if v > best + self.opts.tol_deg {
                continue;
            }
            if points
                .iter()
                .any(|p| max_abs(p.iter().zip(&x).map(|(a, b)| a - b)) <= self.opts.tol_match)
            {
                continue;
            }
            residual = residual.max(r);
            points.push(x);
        }
        Outcome {
            value: best,
            points,
            residual,
            converged: true,
            starts,
            certified: false,
            infeasible: false,
        }
    }

    fn solve_free(&self, task: &Task, stream: u64) -> Result<Outcome> {
        let obj = self.objective(task, None, 0.0);
        let starts = self.starts(None, stream, 0);
        let n_starts = starts.len();
        let mut found = Vec::new();
        let mut fallback = Vec::new();
        for x0 in starts {
            let (x, ok) = self.fixed_point(&obj, x0);
            let v = obj.base(&x);
            if ok {
                found.push((v, x, 0.0));
            } else {
                fallback.push((v, x, 0.0));
            }
        }
        if found.is_empty() {
            // Report the least objective reached; callers decide whether an
            // unconverged answer is acceptable.
            let mut out = self.collect(fallback, n_starts);
            out.converged = false;
            return Ok(out);
        }
        Ok(self.collect(found, n_starts))
    }

    fn solve_constrained(&self, task: &Task, stream: u64) -> Result<Outcome> {
        let tol = self.opts.tol_feas;
        let mut masks: Vec<Option<Vec<bool>>> = vec![None];
        for &(j, v) in &task.constraints {
            let r = self.range(j);
            if v < r.min - tol || v > r.max + tol {
                return Ok(Outcome::infeasible());
            }
            if (v - r.min).abs() <= tol {
                masks.extend(r.min_faces.iter().cloned().map(Some));
            }
            if (v - r.max).abs() <= tol {
                masks.extend(r.max_faces.iter().cloned().map(Some));
            }
        }

        let m = self.space.m;
        let mut found = Vec::new();
        let mut best_residual = f64::INFINITY;
        let mut best_value = f64::INFINITY;
        let mut n_starts = 0;
        for (salt, mask) in masks.iter().enumerate() {
            let mask = mask.as_deref();
            for x0 in self.starts(mask, stream, salt as u64) {
                n_starts += 1;
                let (x, r) = self.penalty_solve(task, mask, x0);
                let v = self.objective(task, mask, 0.0).base(&x);
                if r <= tol {
                    found.push((v, x, r));
                } else if r < best_residual {
                    best_residual = r;
                    best_value = v;
                }
            }
        }
        if found.is_empty() {
            // Walk the constraint targets in from each start's own values.
            for (salt, mask) in masks.iter().enumerate() {
                let mask = mask.as_deref();
                let base = self.objective(task, mask, 0.0);
                let mut starts = Vec::new();
                for x in self.nearest_vertices(task, mask, 4) {
                    // A vertex can be the whole constraint surface.
                    let r = max_abs(base.residuals(&x));
                    if r <= tol {
                        found.push((base.base(&x), x.clone(), r));
                    }
                    starts.push(smooth(x, mask, m));
                }
                starts.extend(self.starts(mask, stream, salt as u64));
                for x0 in starts {
                    n_starts += 1;
                    let (x, r) = self.continuation_solve(task, mask, x0);
                    let v = self.objective(task, mask, 0.0).base(&x);
                    if r <= tol {
                        found.push((v, x, r));
                    } else if r < best_residual {
                        best_residual = r;
                        best_value = v;
                    }
                }
            }
        }
        if found.is_empty() {
            return Err(Error::Feasibility {
                residual: best_residual,
                message: format!(
                    "no start reached the constraint surface (best objective {best_value})"
                ),
            });
        }
        Ok(self.collect(found, n_starts))
    }

    /// Vertices whose constraint values are closest to the targets; empty when there are too many vertices to enumerate.
    fn nearest_vertices(&self, task: &Task, mask: Option<&[bool]>, keep: usize) -> Vec<Vec<f64>> {
        let (q, m) = (self.space.q, self.space.m);
        if (m as f64).powi(q as i32) > 4096.0 {
            return Vec::new();
        }
        let obj = self.objective(task, mask, 0.0);
        let allowed: Vec<Vec<usize>> = (0..q)
            .map(|c| {
                (0..m)
                    .filter(|&y| mask.is_none_or(|k| k[c * m + y]))
                    .collect()
            })
            .collect();
        let count: usize = allowed.iter().map(Vec::len).product();
        let mut scored: Vec<(f64, Vec<f64>)> = Vec::with_capacity(count);
        for code in 0..count {
            let mut x = vec![0.0; q * m];
            let mut rest = code;
            for (c, letters) in allowed.iter().enumerate() {
                x[c * m + letters[rest % letters.len()]] = 1.0;
                rest /= letters.len();
            }
            let d: f64 = obj
                .residuals(&x)
                .iter()
                .zip(&obj.weights)
                .map(|(r, w)| w * r * r)
                .sum();
            scored.push((d, x));
        }
        scored.sort_by(|a, b| a.0.total_cmp(&b.0));
        scored.into_iter().take(keep).map(|s| s.1).collect()
    }

    /// Moves the constraint targets in stages from the start's own values to
    /// the requested ones, tracking the penalized minimizer along the way.
    fn continuation_solve(
        &self,
        task: &Task,
        mask: Option<&[bool]>,
        x0: Vec<f64>,
    ) -> (Vec<f64>, f64) {
        const STAGES: usize = 16;
        let own = self.objective(task, mask, 0.0);
        let from: Vec<f64> = own
            .residuals(&x0)
            .iter()
            .zip(&task.constraints)
            .map(|(r, &(_, v))| v + r)
            .collect();
        let kappa = self
            .opts
            .penalty_schedule
            .iter()
            .copied()
            .fold(0.0, f64::max)
            .min(1e4);
        let mut x = x0;
        for stage in 1..STAGES {
            let t = stage as f64 / STAGES as f64;
            let staged = Task {
                tilt: task.tilt.clone(),
                constraints: task
                    .constraints
                    .iter()
                    .zip(&from)
                    .map(|(&(j, v), &a)| (j, a + t * (v - a)))
                    .collect(),
            };
            let obj = self.objective(&staged, mask, kappa);
            x = newton(&obj, x, 1e-10 * (1.0 + kappa), 200).0;
        }
        self.penalty_solve(task, mask, x)
    }

    /// Penalty continuation plus polish from one start; returns the point and
    /// its constraint residual.
    fn penalty_solve(&self, task: &Task, mask: Option<&[bool]>, x0: Vec<f64>) -> (Vec<f64>, f64) {
        let mut x = x0;
        let base = self.objective(task, mask, 0.0);
        let resid = |x: &[f64]| max_abs(base.residuals(x));
        if base.basis(&x).is_empty() {
            let r = resid(&x);
            return (x, r);
        }
        let mut kappa = 0.0;
        for &k in &self.opts.penalty_schedule {
            kappa = k;
            let obj = self.objective(task, mask, k);
            x = newton(&obj, x, 1e-10 * (1.0 + k), 200).0;
        }
        let lambda: Vec<f64> = base
            .residuals(&x)
            .iter()
            .zip(&base.weights)
            .map(|(r, w)| 2.0 * kappa * w * r)
            .collect();
        if let Some(y) = kkt_polish(&base, &x, lambda) {
            let moved = max_abs(y.iter().zip(&x).map(|(a, b)| a - b));
            if moved <= 1e-3 && resid(&y) <= self.opts.tol_feas {
                let r = resid(&y);
                return (y, r);
            }
        }
        if resid(&x) > self.opts.tol_feas {
            x = project_feasible(&base, &x);
        }
        let r = resid(&x);
        (x, r)
    }

    /// Attainable range of component `j` over the hidden space.
    pub fn range(&self, j: usize) -> &RangeInfo {
        self.ranges[j].get_or_init(|| self.compute_range(j))
    }

    fn compute_range(&self, j: usize) -> RangeInfo {
        let (q, m) = (self.space.q, self.space.m);
        let quad = Quad::single(&self.model.components[j], q * m);
        let mut candidates: Vec<Vec<f64>> = Vec::new();

        // Vertices when there are few of them.
        if (m as f64).powi(q as i32) <= 4096.0 {
            let count = m.pow(q as u32);
            for code in 0..count {
                let mut x = vec![0.0; q * m];
                let mut rest = code;
                for c in 0..q {
                    x[c * m + rest % m] = 1.0;
                    rest /= m;
                }
                candidates.push(x);
            }
        }

        // Projected gradient in both directions.
        let step = 1.0 / (quad.lipschitz() + 1e-12);
        let starts = self.starts(None, j as u64, 0xA11CE);
        for sign in [-1.0, 1.0] {
            for x0 in &starts {
                let mut x = x0.clone();
                for _ in 0..20_000 {
                    let g = quad.grad(&x);
                    let mut next: Vec<f64> =
                        x.iter().zip(&g).map(|(a, b)| a + sign * step * b).collect();
                    for row in next.chunks_mut(m) {
                        project_simplex(row);
                    }
                    let change = max_abs(next.iter().zip(&x).map(|(a, b)| a - b));
                    x = next;
                    if change <= 1e-15 {
                        break;
                    }
                }
                candidates.push(x);
            }
        }

        let values: Vec<f64> = candidates.iter().map(|x| quad.value(x)).collect();
        let min = values.iter().copied().fold(f64::INFINITY, f64::min);
        let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let band = 1e-9 * (1.0 + (max - min).abs());
        let faces = |target: f64| -> Vec<Vec<bool>> {
            let mut out: Vec<Vec<bool>> = Vec::new();
            for (x, v) in candidates.iter().zip(&values) {
                if (v - target).abs() <= band {
                    let mask: Vec<bool> = x.iter().map(|&e| e > 1e-9).collect();
                    // Interior optimizers need no separate face.
                    if mask.iter().all(|&b| b) || out.contains(&mask) {
                        continue;
                    }
                    out.push(mask);
                }
            }
            out
        };
        RangeInfo {
            min,
            max,
            min_faces: faces(min),
            max_faces: faces(max),
        }
    }

    /// `I(x) + Σ t_i H̃_i(x)` at a flattened point.
    pub fn objective_at(&self, task: &Task, x: &[f64]) -> f64 {
        self.objective(task, None, 0.0).base(x)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::{build_builtin, BuiltinSpec};

    fn cw() -> Model {
        build_builtin(&BuiltinSpec::curie_weiss()).unwrap()
    }

    fn m_of(x: &[f64]) -> f64 {
        x[1] - x[0]
    }

    #[test]
    fn simplex_projection() {
        let mut v = vec![0.5, 0.8, -0.1];
        project_simplex(&mut v);
        assert!((v.iter().sum::<f64>() - 1.0).abs() < 1e-15);
        assert!((v[0] - 0.35).abs() < 1e-12 && (v[1] - 0.65).abs() < 1e-12 && v[2] == 0.0);
    }

    #[test]
    fn curie_weiss_range() {
        let model = cw();
        let e = Engine::new(&model, SolverOptions::default());
        let r = e.range(0);
        assert!((r.min + 0.5).abs() < 1e-12);
        assert!(r.max.abs() < 1e-12);
        assert_eq!(r.min_faces.len(), 2);
        assert!(r.max_faces.is_empty());
    }

    #[test]
    fn curie_weiss_beta_two_pair() {
        let model = cw();
        let e = Engine::new(&model, SolverOptions::default());
        let out = e.solve(&Task::unconstrained(vec![(0, 2.0)]), 0).unwrap();
        assert_eq!(out.points.len(), 2);
        for p in &out.points {
            assert!((m_of(p).abs() - 0.957_504_4).abs() < 1e-6, "{p:?}");
        }
    }

    #[test]
    fn critical_point_converges() {
        let model = cw();
        let e = Engine::new(&model, SolverOptions::default());
        let out = e.solve(&Task::unconstrained(vec![(0, 1.0)]), 0).unwrap();
        assert!(out.value.abs() < 1e-9);
        assert!(out.points.iter().all(|p| m_of(p).abs() < 1e-2));
    }

    #[test]
    fn constrained_pair() {
        let model = cw();
        let e = Engine::new(&model, SolverOptions::default());
        let task = Task {
            tilt: vec![],
            constraints: vec![(0, -0.125)],
        };
        let out = e.solve(&task, 0).unwrap();
        assert_eq!(out.points.len(), 2);
        for p in &out.points {
            assert!((m_of(p).abs() - 0.5).abs() < 1e-9);
        }
        assert!(out.residual <= 1e-8);
    }

    #[test]
    fn extreme_value_uses_faces() {
        let model = cw();
        let e = Engine::new(&model, SolverOptions::default());
        let task = Task {
            tilt: vec![],
            constraints: vec![(0, -0.5)],
        };
        let out = e.solve(&task, 0).unwrap();
        assert!((out.value - std::f64::consts::LN_2).abs() < 1e-12);
        assert_eq!(out.points.len(), 2);
    }

    #[test]
    fn out_of_range_is_infeasible() {
        let model = cw();
        let e = Engine::new(&model, SolverOptions::default());
        let out = e
            .solve(
                &Task {
                    tilt: vec![],
                    constraints: vec![(0, 0.1)],
                },
                0,
            )
            .unwrap();
        assert!(out.infeasible && out.points.is_empty());
    }

    fn two_level_vortices() -> Model {
        build_builtin(&BuiltinSpec::MillerRobert {
            cells: 4,
            alphabet: vec![-1.0, 0.0, 1.0],
            prior: vec![0.25, 0.5, 0.25],
            cutoff: 2,
            enstrophy: None,
            sigma: 2,
            sites: None,
        })
        .unwrap()
    }

    #[test]
    fn every_stream_reaches_a_joint_slice() {
        // The prior is a critical point of the energy and the interior
        // minimizer sits close to the boundary.
        let model = two_level_vortices();
        let e = Engine::new(&model, SolverOptions::default());
        let task = Task {
            tilt: vec![],
            constraints: vec![(0, 0.0041), (1, 0.5)],
        };
        let values: Vec<f64> = (0..6).map(|k| e.solve(&task, k).unwrap().value).collect();
        for v in &values {
            assert!((v - values[0]).abs() < 1e-8, "{values:?}");
        }
    }

    #[test]
    fn vertex_slice_is_found() {
        // One cell all +1 and one all −1 is the only state at this pair.
        let model = two_level_vortices();
        let e = Engine::new(&model, SolverOptions::default());
        let top = Quad::single(&model.components[0], 12)
            .value(&[0.0, 0.0, 1.0, 0.0, 1.0, 0.0, 0.0, 1.0, 0.0, 1.0, 0.0, 0.0]);
        let task = Task {
            tilt: vec![],
            constraints: vec![(0, top), (1, 0.5)],
        };
        let out = e.solve(&task, 0).unwrap();
        assert!(out.value.is_finite() && out.residual <= 1e-8);
    }

    #[test]
    fn seeds_are_order_independent() {
        assert_eq!(mix_seed(1, 2, 3), mix_seed(1, 2, 3));
        assert_ne!(mix_seed(1, 2, 3), mix_seed(1, 3, 2));
    }
}
