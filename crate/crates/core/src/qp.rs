//! Dense convex quadratic programming by a primal active-set method.
//!
//! Solves
//!
//! ```text
//!     minimize    ½ zᵀ H z + fᵀ z
//!     subject to  A z ≤ b
//! ```
//!
//! for symmetric positive semidefinite `H`. A feasible start comes from a
//! phase-1 linear program that minimizes the largest constraint violation;
//! phase 2 then walks working sets with a null-space method. Directions of
//! zero curvature (semidefinite `H`, or `H = 0` in phase 1) are followed as
//! rays until a constraint blocks them.
//!
//! Ties in the choice of constraint to add or drop go to the smallest index,
//! and after a run of zero-length steps the drop rule switches to Bland's
//! smallest-index rule outright.

use std::time::Instant;

use thiserror::Error;

use crate::linalg::{cholesky, householder_qr, DenseMatrix};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum QpError {
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("hessian is not symmetric")]
    NotSymmetric,
    #[error("hessian is not positive semidefinite")]
    NotConvex,
    #[error("non-finite problem data")]
    NonFinite,
    #[error("objective is unbounded below on the feasible set")]
    Unbounded,
}

#[derive(Debug, Clone)]
pub struct QpProblem {
    pub hessian: DenseMatrix,
    pub linear: Vec<f64>,
    pub ineq_a: DenseMatrix,
    pub ineq_b: Vec<f64>,
    /// Constraint indices expected to be active at the solution.
    pub warm_start: Option<Vec<usize>>,
}

impl QpProblem {
    /// Problem without constraints.
    pub fn unconstrained(hessian: DenseMatrix, linear: Vec<f64>) -> Self {
        let n = linear.len();
        Self {
            hessian,
            linear,
            ineq_a: DenseMatrix::zeros(0, n),
            ineq_b: Vec::new(),
            warm_start: None,
        }
    }

    pub fn n_vars(&self) -> usize {
        self.linear.len()
    }

    pub fn n_constraints(&self) -> usize {
        self.ineq_b.len()
    }

    /// Appends the constraint `row·z ≤ rhs`.
    pub fn push_constraint(&mut self, row: &[f64], rhs: f64) {
        assert_eq!(row.len(), self.n_vars());
        let p = self.ineq_a.rows();
        let mut data = std::mem::replace(&mut self.ineq_a, DenseMatrix::zeros(0, 0)).into_vec();
        data.extend_from_slice(row);
        self.ineq_a = DenseMatrix::new(p + 1, row.len(), data).expect("finite constraint row");
        self.ineq_b.push(rhs);
    }

    pub fn objective(&self, z: &[f64]) -> f64 {
        let hz = self.hessian.mul_vec(z);
        z.iter()
            .zip(&hz)
            .zip(&self.linear)
            .map(|((zi, hi), fi)| 0.5 * zi * hi + fi * zi)
            .sum()
    }

    /// Largest violation `max(0, max(A z − b))`.
    pub fn max_violation(&self, z: &[f64]) -> f64 {
        self.ineq_a
            .mul_vec(z)
            .iter()
            .zip(&self.ineq_b)
            .fold(0.0, |m, (az, b)| m.max(az - b))
    }

    pub fn validate(&self) -> Result<(), QpError> {
        let n = self.n_vars();
        if self.hessian.rows() != n || self.hessian.cols() != n {
            return Err(QpError::Dimension(format!(
                "hessian is {}x{}, expected {n}x{n}",
                self.hessian.rows(),
                self.hessian.cols()
            )));
        }
        if self.ineq_a.cols() != n || self.ineq_a.rows() != self.ineq_b.len() {
            return Err(QpError::Dimension(format!(
                "constraint matrix is {}x{} with {} bounds for {n} variables",
                self.ineq_a.rows(),
                self.ineq_a.cols(),
                self.ineq_b.len()
            )));
        }
        if self.hessian.check_finite().is_err()
            || self.ineq_a.check_finite().is_err()
            || self.linear.iter().chain(&self.ineq_b).any(|v| !v.is_finite())
        {
            return Err(QpError::NonFinite);
        }
        if let Some(ws) = &self.warm_start {
            if ws.iter().any(|&i| i >= self.n_constraints()) {
                return Err(QpError::Dimension("warm-start index out of range".into()));
            }
        }
        let scale = self.hessian.max_abs().max(1.0);
        if !self.hessian.is_symmetric(1e-12 * scale) {
            return Err(QpError::NotSymmetric);
        }
        if cholesky(&self.hessian, 1e-10 * scale).is_err() {
            return Err(QpError::NotConvex);
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum QpStatus {
    Optimal,
    Infeasible,
    IterationLimit,
}

impl QpStatus {
    pub fn as_str(self) -> &'static str {
        match self {
            QpStatus::Optimal => "optimal",
            QpStatus::Infeasible => "infeasible",
            QpStatus::IterationLimit => "iteration-limit",
        }
    }
}

#[derive(Debug, Clone)]
pub struct QpSolution {
    pub z: Vec<f64>,
    pub status: QpStatus,
    pub objective: f64,
    /// `‖H z + f + Aᵀ λ‖_∞`
    pub kkt_stationarity: f64,
    /// `max(0, max(A z − b))`
    pub kkt_feasibility: f64,
    /// `max |λᵢ (A z − b)ᵢ|`
    pub complementarity: f64,
    /// One multiplier per constraint; zero off the active set.
    pub multipliers: Vec<f64>,
    pub active_set: Vec<usize>,
    pub iterations: usize,
    /// Wall-clock seconds spent in the solver.
    pub solve_time: f64,
}

#[derive(Debug, Clone, Copy)]
pub struct QpSettings {
    /// Phase-1 violation above this declares the problem infeasible.
    pub feasibility_tol: f64,
    /// Iteration budget is `iteration_factor · (n + p)`.
    pub iteration_factor: usize,
}

impl Default for QpSettings {
    fn default() -> Self {
        Self {
            feasibility_tol: 1e-9,
            iteration_factor: 50,
        }
    }
}

pub fn solve_qp(problem: &QpProblem) -> Result<QpSolution, QpError> {
    solve_qp_with(problem, &QpSettings::default())
}

pub fn solve_qp_with(problem: &QpProblem, settings: &QpSettings) -> Result<QpSolution, QpError> {
    problem.validate()?;
    let started = Instant::now();
    let n = problem.n_vars();
    let p = problem.n_constraints();
    let mut counter = Counter {
        used: 0,
        budget: (settings.iteration_factor * (n + p)).max(1),
    };

    let data = Data {
        h: &problem.hessian,
        f: &problem.linear,
        a: &problem.ineq_a,
        b: &problem.ineq_b,
    };

    let warm = problem
        .warm_start
        .as_ref()
        .and_then(|ws| warm_start_point(&data, ws, settings.feasibility_tol));

    let (mut z, mut working) = match warm {
        Some(start) => start,
        None => match phase_one(&data, settings.feasibility_tol, &mut counter)? {
            PhaseOne::Feasible(z, w) => (z, w),
            PhaseOne::Infeasible(z) => {
                return Ok(finish(problem, z, Vec::new(), None, QpStatus::Infeasible, &counter, started))
            }
            PhaseOne::IterationLimit(z) => {
                return Ok(finish(problem, z, Vec::new(), None, QpStatus::IterationLimit, &counter, started))
            }
        },
    };

    match active_set(&data, &mut z, &mut working, &mut counter)? {
        Some(lambda) => Ok(finish(problem, z, working, Some(lambda), QpStatus::Optimal, &counter, started)),
        None => Ok(finish(problem, z, working, None, QpStatus::IterationLimit, &counter, started)),
    }
}

fn finish(
    problem: &QpProblem,
    z: Vec<f64>,
    working: Vec<usize>,
    lambda_w: Option<Vec<f64>>,
    status: QpStatus,
    counter: &Counter,
    started: Instant,
) -> QpSolution {
    let p = problem.n_constraints();
    let mut multipliers = vec![0.0; p];
    if let Some(lw) = &lambda_w {
        for (&i, l) in working.iter().zip(lw) {
            multipliers[i] = *l;
        }
    }
    let mut residual = problem.hessian.mul_vec(&z);
    for (r, f) in residual.iter_mut().zip(&problem.linear) {
        *r += f;
    }
    for (r, at) in residual.iter_mut().zip(problem.ineq_a.tr_mul_vec(&multipliers)) {
        *r += at;
    }
    let slack = problem.ineq_a.mul_vec(&z);
    let complementarity = slack
        .iter()
        .zip(&problem.ineq_b)
        .zip(&multipliers)
        .fold(0.0, |m: f64, ((az, b), l)| m.max((l * (az - b)).abs()));
    let mut active_set = working;
    active_set.sort_unstable();
    QpSolution {
        objective: problem.objective(&z),
        kkt_stationarity: residual.iter().fold(0.0, |m: f64, v| m.max(v.abs())),
        kkt_feasibility: problem.max_violation(&z),
        complementarity,
        multipliers,
        active_set,
        iterations: counter.used,
        solve_time: started.elapsed().as_secs_f64(),
        z,
        status,
    }
}

struct Counter {
    used: usize,
    budget: usize,
}

impl Counter {
    fn tick(&mut self) -> bool {
        self.used += 1;
        self.used <= self.budget
    }
}

struct Data<'a> {
    h: &'a DenseMatrix,
    f: &'a [f64],
    a: &'a DenseMatrix,
    b: &'a [f64],
}

impl Data<'_> {
    fn gradient(&self, z: &[f64]) -> Vec<f64> {
        let mut g = self.h.mul_vec(z);
        for (gi, fi) in g.iter_mut().zip(self.f) {
            *gi += fi;
        }
        g
    }

    fn row_dot(&self, i: usize, v: &[f64]) -> f64 {
        dot(self.a.row(i), v)
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm_inf(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m: f64, x| m.max(x.abs()))
}

fn norm2(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Orthogonal split of variable space for a working set.
struct NullSpace {
    /// Range basis `Y` (n×k), null basis `Z` (n×r), `R` (k×k) with `A_Wᵀ = Y R`.
    y: DenseMatrix,
    z: DenseMatrix,
    r: DenseMatrix,
}

fn null_space(a: &DenseMatrix, working: &[usize]) -> NullSpace {
    let n = a.cols();
    let k = working.len();
    let mut at = DenseMatrix::zeros(n, k);
    for (c, &i) in working.iter().enumerate() {
        for (j, v) in a.row(i).iter().enumerate() {
            at[(j, c)] = *v;
        }
    }
    let (q, r) = householder_qr(&at);
    NullSpace {
        y: q.block(0, 0, n, k),
        z: q.block(0, k, n, n - k),
        r: r.block(0, 0, k, k),
    }
}

/// Pivoted Cholesky `P M Pᵀ = L Lᵀ` of a symmetric semidefinite matrix.
struct PivotedCholesky {
    perm: Vec<usize>,
    /// r×rank lower trapezoid.
    l: DenseMatrix,
    rank: usize,
}

fn pivoted_cholesky(m: &DenseMatrix) -> PivotedCholesky {
    let r = m.rows();
    let mut s = m.clone();
    let mut perm: Vec<usize> = (0..r).collect();
    let max_diag = s.diagonal().iter().fold(0.0, |a: f64, d| a.max(*d));
    let threshold = 1e-11 * max_diag;
    let mut l = DenseMatrix::zeros(r, r);
    let mut rank = 0;
    for k in 0..r {
        let (j, d) = (k..r)
            .map(|j| (j, s[(j, j)]))
            .fold((k, f64::NEG_INFINITY), |best, cur| if cur.1 > best.1 { cur } else { best });
        if !(d > threshold) || d <= 0.0 {
            break;
        }
        if j != k {
            perm.swap(j, k);
            for c in 0..r {
                let t = s[(j, c)];
                s[(j, c)] = s[(k, c)];
                s[(k, c)] = t;
            }
            for c in 0..r {
                let t = s[(c, j)];
                s[(c, j)] = s[(c, k)];
                s[(c, k)] = t;
            }
            for c in 0..k {
                let t = l[(j, c)];
                l[(j, c)] = l[(k, c)];
                l[(k, c)] = t;
            }
        }
        let lkk = d.sqrt();
        l[(k, k)] = lkk;
        for i in k + 1..r {
            l[(i, k)] = s[(i, k)] / lkk;
        }
        for i in k + 1..r {
            for c in k + 1..=i {
                let v = s[(i, c)] - l[(i, k)] * l[(c, k)];
                s[(i, c)] = v;
                s[(c, i)] = v;
            }
        }
        rank += 1;
    }
    PivotedCholesky {
        perm,
        l: l.block(0, 0, r, rank),
        rank,
    }
}

impl PivotedCholesky {
    /// Solves `L11 y = c` (forward substitution).
    fn forward(&self, c: &[f64]) -> Vec<f64> {
        let mut y = c.to_vec();
        for i in 0..self.rank {
            for j in 0..i {
                y[i] -= self.l[(i, j)] * y[j];
            }
            y[i] /= self.l[(i, i)];
        }
        y
    }

    /// Solves `L11ᵀ y = c` (back substitution).
    fn backward(&self, c: &[f64]) -> Vec<f64> {
        let mut y = c.to_vec();
        for i in (0..self.rank).rev() {
            for j in i + 1..self.rank {
                y[i] -= self.l[(j, i)] * y[j];
            }
            y[i] /= self.l[(i, i)];
        }
        y
    }

    /// Columns spanning the null space of `M`, in original coordinates.
    fn null_basis(&self) -> DenseMatrix {
        let r = self.perm.len();
        let nullity = r - self.rank;
        let mut basis = DenseMatrix::zeros(r, nullity);
        for c in 0..nullity {
            // permuted vector [−L11⁻ᵀ L21ᵀ e_c; e_c]
            let l21_col: Vec<f64> = (0..self.rank).map(|j| self.l[(self.rank + c, j)]).collect();
            let top = self.backward(&l21_col);
            for (i, v) in top.iter().enumerate() {
                basis[(self.perm[i], c)] = -v;
            }
            basis[(self.perm[self.rank + c], c)] = 1.0;
        }
        basis
    }

    /// A solution of `M v = c` assuming `c` lies in the range of `M`.
    fn solve_range(&self, c: &[f64]) -> Vec<f64> {
        let permuted: Vec<f64> = self.perm[..self.rank].iter().map(|&i| c[i]).collect();
        let y = self.forward(&permuted);
        let v1 = self.backward(&y);
        let mut v = vec![0.0; self.perm.len()];
        for (k, val) in v1.iter().enumerate() {
            v[self.perm[k]] = *val;
        }
        v
    }
}

enum Direction {
    /// Step to the minimizer of the equality-constrained subproblem.
    Newton(Vec<f64>),
    /// Zero-curvature descent ray.
    Ray(Vec<f64>),
}

fn search_direction(data: &Data, ns: &NullSpace, g: &[f64]) -> Direction {
    let n = g.len();
    let r = ns.z.cols();
    if r == 0 {
        return Direction::Newton(vec![0.0; n]);
    }
    let gz = ns.z.tr_mul_vec(g);
    let hz = data.h * &ns.z;
    let m = &ns.z.transpose() * &hz;
    let chol = pivoted_cholesky(&m);
    let v = if chol.rank < r {
        let basis = chol.null_basis();
        let c = basis.tr_mul_vec(&gz);
        let g_scale = norm_inf(g).max(1.0);
        if norm_inf(&c) > 1e-10 * g_scale {
            let d = basis.mul_vec(&c);
            let ray: Vec<f64> = ns.z.mul_vec(&d).iter().map(|x| -x).collect();
            return Direction::Ray(ray);
        }
        chol.solve_range(&gz.iter().map(|x| -x).collect::<Vec<_>>())
    } else {
        chol.solve_range(&gz.iter().map(|x| -x).collect::<Vec<_>>())
    };
    Direction::Newton(ns.z.mul_vec(&v))
}

/// Multipliers of the working set from `A_Wᵀ λ = −g` (least squares).
fn multipliers(ns: &NullSpace, g: &[f64]) -> Vec<f64> {
    let k = ns.r.rows();
    let mut rhs: Vec<f64> = ns.y.tr_mul_vec(g).iter().map(|x| -x).collect();
    for i in (0..k).rev() {
        for j in i + 1..k {
            rhs[i] -= ns.r[(i, j)] * rhs[j];
        }
        rhs[i] /= ns.r[(i, i)];
    }
    rhs
}

/// Drop threshold for multipliers.
const MULTIPLIER_TOL: f64 = 1e-10;

/// Runs phase-2 iterations from a feasible `z`. Returns the working-set
/// multipliers at optimality, or `None` when the budget is exhausted.
fn active_set(
    data: &Data,
    z: &mut Vec<f64>,
    working: &mut Vec<usize>,
    counter: &mut Counter,
) -> Result<Option<Vec<f64>>, QpError> {
    let p = data.b.len();
    let mut at_subproblem_min = false;
    let mut degenerate_run = 0usize;
    let bland_after = 2 * (z.len() + p).max(1);
    loop {
        if !counter.tick() {
            return Ok(None);
        }
        let g = data.gradient(z);
        let ns = null_space(data.a, working);
        let dir = if at_subproblem_min {
            Direction::Newton(vec![0.0; z.len()])
        } else {
            search_direction(data, &ns, &g)
        };
        at_subproblem_min = false;

        if let Direction::Newton(step) = &dir {
            if norm_inf(step) <= 1e-13 * norm_inf(z).max(1.0) {
                let lambda = multipliers(&ns, &g);
                let candidate = if degenerate_run > bland_after {
                    working
                        .iter()
                        .zip(&lambda)
                        .filter(|(_, l)| **l < -MULTIPLIER_TOL)
                        .min_by_key(|(i, _)| **i)
                        .map(|(i, _)| *i)
                } else {
                    let mut best: Option<(usize, f64)> = None;
                    for (&i, &l) in working.iter().zip(&lambda) {
                        if l < -MULTIPLIER_TOL {
                            best = match best {
                                Some((bi, bl)) if bl < l || (bl == l && bi < i) => Some((bi, bl)),
                                _ => Some((i, l)),
                            };
                        }
                    }
                    best.map(|(i, _)| i)
                };
                match candidate {
                    None => return Ok(Some(lambda)),
                    Some(drop) => {
                        working.retain(|&i| i != drop);
                        continue;
                    }
                }
            }
        }

        let (d, full_step) = match &dir {
            Direction::Newton(s) => (s.as_slice(), Some(1.0)),
            Direction::Ray(r) => (r.as_slice(), None),
        };
        let d_norm = norm2(d);
        let mut alpha = full_step.unwrap_or(f64::INFINITY);
        let mut blocking: Option<usize> = None;
        for i in 0..p {
            if working.contains(&i) {
                continue;
            }
            let ad = data.row_dot(i, d);
            if ad <= 1e-12 * norm2(data.a.row(i)) * d_norm {
                continue;
            }
            let room = (data.b[i] - data.row_dot(i, z)).max(0.0);
            let step = room / ad;
            if step < alpha || (step == alpha && blocking.is_some_and(|b| i < b)) {
                alpha = step;
                blocking = Some(i);
            }
        }
        if alpha.is_infinite() {
            return Err(QpError::Unbounded);
        }
        if alpha == 0.0 {
            degenerate_run += 1;
        } else {
            degenerate_run = 0;
        }
        for (zi, di) in z.iter_mut().zip(d) {
            *zi += alpha * di;
        }
        match blocking {
            Some(i) => working.push(i),
            None => at_subproblem_min = true,
        }
    }
}

enum PhaseOne {
    Feasible(Vec<f64>, Vec<usize>),
    Infeasible(Vec<f64>),
    IterationLimit(Vec<f64>),
}

/// Minimizes the largest violation `t` from `z = 0`. Rows violated at the
/// start become `a·z − t ≤ b`; rows already satisfied stay hard, which
/// leaves the optimal `t` at zero exactly when the problem is feasible.
fn phase_one(data: &Data, tol: f64, counter: &mut Counter) -> Result<PhaseOne, QpError> {
    let n = data.f.len();
    let p = data.b.len();
    let zero = vec![0.0; n];
    let t0 = (0..p).fold(0.0, |m: f64, i| m.max(-data.b[i]));
    if t0 <= tol {
        let all: Vec<usize> = (0..p).collect();
        let w = independent_active(data, &zero, &all, tol);
        return Ok(PhaseOne::Feasible(zero, w));
    }
    let mut a = DenseMatrix::zeros(p + 1, n + 1);
    for i in 0..p {
        for j in 0..n {
            a[(i, j)] = data.a[(i, j)];
        }
        if data.b[i] < 0.0 {
            a[(i, n)] = -1.0;
        }
    }
    a[(p, n)] = -1.0;
    let mut b = data.b.to_vec();
    b.push(0.0);
    let h = DenseMatrix::zeros(n + 1, n + 1);
    let mut f = vec![0.0; n + 1];
    f[n] = 1.0;
    let lp = Data {
        h: &h,
        f: &f,
        a: &a,
        b: &b,
    };
    let mut x = zero;
    x.push(t0);
    let all: Vec<usize> = (0..=p).collect();
    let mut working = independent_active(&lp, &x, &all, tol);
    let done = active_set(&lp, &mut x, &mut working, counter)?;
    let t = x.pop().unwrap_or(0.0);
    if done.is_none() {
        return Ok(PhaseOne::IterationLimit(x));
    }
    if t > tol {
        return Ok(PhaseOne::Infeasible(x));
    }
    // phase-1 working rows first, then anything else that is tight
    let mut candidates: Vec<usize> = working.into_iter().filter(|&i| i < p).collect();
    let rest: Vec<usize> = (0..p).filter(|i| !candidates.contains(i)).collect();
    candidates.extend(rest);
    let w = independent_active(data, &x, &candidates, tol);
    Ok(PhaseOne::Feasible(x, w))
}

/// Subset of `candidates` that is active at `z` and linearly independent.
fn independent_active(data: &Data, z: &[f64], candidates: &[usize], tol: f64) -> Vec<usize> {
    let mut chosen: Vec<usize> = Vec::new();
    let mut basis: Vec<Vec<f64>> = Vec::new();
    for &i in candidates {
        if (data.row_dot(i, z) - data.b[i]).abs() > tol.max(1e-12) * (1.0 + data.b[i].abs()) {
            continue;
        }
        // Gram-Schmidt residual against the rows already chosen
        let row = data.a.row(i);
        let mut res = row.to_vec();
        for q in &basis {
            let c = dot(&res, q);
            for (r, qv) in res.iter_mut().zip(q) {
                *r -= c * qv;
            }
        }
        let nr = norm2(&res);
        if nr > 1e-9 * norm2(row).max(f64::MIN_POSITIVE) {
            basis.push(res.iter().map(|v| v / nr).collect());
            chosen.push(i);
        }
        if chosen.len() == z.len() {
            break;
        }
    }
    chosen
}

/// Minimizer of the objective with the warm-start constraints held as
/// equalities, if it exists and satisfies every constraint.
fn warm_start_point(data: &Data, ws: &[usize], tol: f64) -> Option<(Vec<f64>, Vec<usize>)> {
    let n = data.f.len();
    let mut ids: Vec<usize> = ws.to_vec();
    ids.sort_unstable();
    ids.dedup();
    // independence filter uses a point where all candidate rows count as active
    let mut chosen: Vec<usize> = Vec::new();
    let mut basis: Vec<Vec<f64>> = Vec::new();
    for &i in &ids {
        let row = data.a.row(i);
        let mut res = row.to_vec();
        for q in &basis {
            let c = dot(&res, q);
            for (r, qv) in res.iter_mut().zip(q) {
                *r -= c * qv;
            }
        }
        let nr = norm2(&res);
        if nr > 1e-9 * norm2(row).max(f64::MIN_POSITIVE) && chosen.len() < n {
            basis.push(res.iter().map(|v| v / nr).collect());
            chosen.push(i);
        }
    }
    let ns = null_space(data.a, &chosen);
    let k = chosen.len();
    // particular solution z_p = Y R⁻ᵀ b_W
    let mut w = vec![0.0; k];
    for i in 0..k {
        let mut s = data.b[chosen[i]];
        for j in 0..i {
            s -= ns.r[(j, i)] * w[j];
        }
        if ns.r[(i, i)] == 0.0 {
            return None;
        }
        w[i] = s / ns.r[(i, i)];
    }
    let mut z = ns.y.mul_vec(&w);
    let g = data.gradient(&z);
    match search_direction(data, &ns, &g) {
        Direction::Newton(step) => {
            for (zi, si) in z.iter_mut().zip(&step) {
                *zi += si;
            }
        }
        Direction::Ray(_) => return None,
    }
    let violation = (0..data.b.len()).fold(0.0, |m: f64, i| m.max(data.row_dot(i, &z) - data.b[i]));
    if violation > tol || z.iter().any(|v| !v.is_finite()) {
        return None;
    }
    Some((z, chosen))
}
