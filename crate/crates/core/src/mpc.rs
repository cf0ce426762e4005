//! Condensed linear MPC with optional passivity constraint or Lyapunov
//! terminal cost.
//!
//! Decision vector is `[U; s]`: the stacked controllable inputs
//! `u(0..N−1)` followed by one slack per finite state-bound row of the
//! prediction, priced linearly.

use thiserror::Error;

use crate::grid::DiscreteModel;
use crate::linalg::{is_positive_semidefinite, solve_discrete_lyapunov, DenseMatrix, LinalgError};
use crate::qp::{solve_qp, QpError, QpProblem, QpStatus};

#[derive(Debug, Error)]
pub enum MpcError {
    #[error("invalid weights: {0}")]
    Weights(String),
    #[error("invalid bounds: {0}")]
    Bounds(String),
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error(transparent)]
    Linalg(#[from] LinalgError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PassivityTopology {
    /// Single area model.
    OneArea,
    /// One coordinated controller; both areas summed into one row.
    TwoAreaJoint,
    /// Per-area controller on a local model.
    TwoAreaLocal,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MpcMode {
    Standard,
    Passivity(PassivityTopology),
    Clf,
}

impl MpcMode {
    pub fn as_str(self) -> &'static str {
        match self {
            MpcMode::Standard => "standard",
            MpcMode::Passivity(_) => "passivity",
            MpcMode::Clf => "clf",
        }
    }
}

#[derive(Debug, Clone)]
pub struct MpcWeights {
    pub q: DenseMatrix,
    pub r: DenseMatrix,
    pub q_term: Option<DenseMatrix>,
    /// Price per unit of state-bound violation.
    pub slack_weight: f64,
}

/// Bounds in model coordinates. Infinite entries mean "no bound".
#[derive(Debug, Clone)]
pub struct MpcBounds {
    pub x_min: Vec<f64>,
    pub x_max: Vec<f64>,
    pub u_min: Vec<f64>,
    pub u_max: Vec<f64>,
    pub du_min: Vec<f64>,
    pub du_max: Vec<f64>,
}

/// Stacked predictions `X = Sx·x0 + Su·U` for `x(1..N)` driven by the
/// listed input columns of `b_d`.
pub fn build_prediction_matrices(
    model: &DiscreteModel,
    control_inputs: &[usize],
    horizon: usize,
) -> (DenseMatrix, DenseMatrix) {
    let n = model.n_states();
    let m = control_inputs.len();
    let all_rows: Vec<usize> = (0..n).collect();
    let b = model.b_d.submatrix(&all_rows, control_inputs);

    let mut sx = DenseMatrix::zeros(n * horizon, n);
    let mut su = DenseMatrix::zeros(n * horizon, m * horizon);
    // powers[k] = A^k·B
    let mut power_b = Vec::with_capacity(horizon);
    power_b.push(b.clone());
    for k in 1..horizon {
        let next = &model.a_d * &power_b[k - 1];
        power_b.push(next);
    }
    let mut a_pow = model.a_d.clone();
    for i in 0..horizon {
        sx.set_block(i * n, 0, &a_pow);
        a_pow = &model.a_d * &a_pow;
        for j in 0..=i {
            su.set_block(i * n, j * m, &power_b[i - j]);
        }
    }
    (sx, su)
}

/// Terminal weight from the discrete Lyapunov equation on a subsystem.
///
/// `subsystem` selects the states whose free response is summed to
/// infinity; only the `freq_states` block of the solution is kept and all
/// other entries are zero.
pub fn clf_terminal_cost(
    model: &DiscreteModel,
    q: &DenseMatrix,
    subsystem: &[usize],
    freq_states: &[usize],
) -> Result<DenseMatrix, MpcError> {
    if freq_states.iter().any(|i| !subsystem.contains(i)) {
        return Err(MpcError::Dimension("frequency states must lie in the subsystem".into()));
    }
    let a_sub = model.a_d.principal_submatrix(subsystem);
    let q_sub = q.principal_submatrix(subsystem);
    // cost-to-go form: X = Σ (Aᵀ)^k Q A^k
    let x = solve_discrete_lyapunov(&a_sub.transpose(), &q_sub)?;
    let n = model.n_states();
    let mut out = DenseMatrix::zeros(n, n);
    for &i in freq_states {
        for &j in freq_states {
            let si = subsystem.iter().position(|&s| s == i).unwrap();
            let sj = subsystem.iter().position(|&s| s == j).unwrap();
            out[(i, j)] = x[(si, sj)];
        }
    }
    Ok(out)
}

/// Pieces of the condensed QP that do not depend on the measurement.
#[derive(Debug, Clone)]
struct Template {
    hessian: DenseMatrix,
    /// `f = f_x·x0` on the input block.
    f_x: DenseMatrix,
    /// Constant term `x0ᵀ·c_x·x0`.
    c_x: DenseMatrix,
    a: DenseMatrix,
    b_const: Vec<f64>,
    b_x: DenseMatrix,
    b_uprev: DenseMatrix,
    n_slack: usize,
}

#[derive(Debug, Clone)]
pub struct MpcController {
    mode: MpcMode,
    weights: MpcWeights,
    bounds: MpcBounds,
    horizon: usize,
    model: DiscreteModel,
    control_inputs: Vec<usize>,
    freq_state_indices: Vec<usize>,
    fallback_gain: f64,
    u_prev: Vec<f64>,
    template: Template,
}

/// What happened in one receding-horizon step.
#[derive(Debug, Clone, PartialEq)]
pub struct StepDiagnostics {
    /// Solver status, or `None` when the solver returned an error.
    pub status: Option<QpStatus>,
    pub objective: f64,
    pub kkt_stationarity: f64,
    pub kkt_feasibility: f64,
    pub iterations: usize,
    pub solve_time: f64,
    /// The fallback law replaced the optimizer output.
    pub fallback: bool,
    pub message: Option<String>,
}

impl StepDiagnostics {
    pub fn is_optimal(&self) -> bool {
        self.status == Some(QpStatus::Optimal) && !self.fallback
    }
}

impl MpcController {
    /// `control_inputs` picks the columns of `b_d` that are decision
    /// variables; `freq_state_indices[i]` is the frequency state paired with
    /// `control_inputs[i]` for the passivity row and the fallback law.
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        mode: MpcMode,
        weights: MpcWeights,
        bounds: MpcBounds,
        horizon: usize,
        model: DiscreteModel,
        control_inputs: Vec<usize>,
        freq_state_indices: Vec<usize>,
        fallback_gain: f64,
    ) -> Result<Self, MpcError> {
        let n = model.n_states();
        let m = control_inputs.len();
        if horizon == 0 {
            return Err(MpcError::Dimension("horizon must be at least 1".into()));
        }
        if control_inputs.iter().any(|&c| c >= model.n_inputs()) {
            return Err(MpcError::Dimension("control input index out of range".into()));
        }
        if freq_state_indices.len() != m || freq_state_indices.iter().any(|&i| i >= n) {
            return Err(MpcError::Dimension(
                "need one in-range frequency state per control input".into(),
            ));
        }
        validate_weights(&weights, n, m)?;
        if mode == MpcMode::Clf && weights.q_term.is_none() {
            return Err(MpcError::Weights("clf mode needs q_term".into()));
        }
        validate_bounds(&bounds, n, m)?;
        if !(fallback_gain.is_finite() && fallback_gain >= 0.0) {
            return Err(MpcError::Weights("fallback_gain must be nonnegative".into()));
        }
        let template = build_template(&model, &control_inputs, horizon, mode, &weights, &bounds);
        Ok(Self {
            mode,
            weights,
            bounds,
            horizon,
            model,
            control_inputs,
            freq_state_indices,
            fallback_gain,
            u_prev: vec![0.0; m],
            template,
        })
    }

    pub fn mode(&self) -> MpcMode {
        self.mode
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    pub fn model(&self) -> &DiscreteModel {
        &self.model
    }

    pub fn weights(&self) -> &MpcWeights {
        &self.weights
    }

    pub fn bounds(&self) -> &MpcBounds {
        &self.bounds
    }

    pub fn u_prev(&self) -> &[f64] {
        &self.u_prev
    }

    pub fn set_u_prev(&mut self, u: Vec<f64>) {
        assert_eq!(u.len(), self.control_inputs.len());
        self.u_prev = u;
    }

    pub fn freq_state_indices(&self) -> &[usize] {
        &self.freq_state_indices
    }

    /// Condensed QP for measurement `x0` without the passivity row.
    pub fn build_condensed_qp(&self, x0: &[f64]) -> QpProblem {
        let t = &self.template;
        let mut linear = t.f_x.mul_vec(x0);
        linear.extend(std::iter::repeat_n(self.weights.slack_weight, t.n_slack));
        let bx = t.b_x.mul_vec(x0);
        let bu = t.b_uprev.mul_vec(&self.u_prev);
        let ineq_b = t
            .b_const
            .iter()
            .zip(&bx)
            .zip(&bu)
            .map(|((c, x), u)| c + x + u)
            .collect();
        QpProblem {
            hessian: t.hessian.clone(),
            linear,
            ineq_a: t.a.clone(),
            ineq_b,
            warm_start: None,
        }
    }

    /// Appends `Σ x_i(0)·u_i(0) ≤ −Σ x_i(0)²` over the paired frequency
    /// states.
    pub fn add_passivity_constraint(&self, qp: &mut QpProblem, x0: &[f64]) {
        let mut row = vec![0.0; qp.n_vars()];
        let mut rhs = 0.0;
        for (pos, &fi) in self.freq_state_indices.iter().enumerate() {
            row[pos] = x0[fi];
            rhs -= x0[fi] * x0[fi];
        }
        qp.push_constraint(&row, rhs);
    }

    /// Objective constant dropped from the QP.
    pub fn objective_offset(&self, x0: &[f64]) -> f64 {
        let cx = self.template.c_x.mul_vec(x0);
        x0.iter().zip(&cx).map(|(a, b)| a * b).sum()
    }

    /// One receding-horizon step from the measured model state.
    pub fn step(&mut self, x: &[f64]) -> (Vec<f64>, StepDiagnostics) {
        assert_eq!(x.len(), self.model.n_states(), "measurement dimension");
        let mut qp = self.build_condensed_qp(x);
        if matches!(self.mode, MpcMode::Passivity(_)) {
            self.add_passivity_constraint(&mut qp, x);
        }
        let m = self.control_inputs.len();
        let (u, diag) = match solve_qp(&qp) {
            Ok(sol) if sol.status == QpStatus::Optimal => {
                let u: Vec<f64> = (0..m)
                    .map(|i| sol.z[i].clamp(self.bounds.u_min[i], self.bounds.u_max[i]))
                    .collect();
                let diag = StepDiagnostics {
                    status: Some(sol.status),
                    objective: sol.objective + self.objective_offset(x),
                    kkt_stationarity: sol.kkt_stationarity,
                    kkt_feasibility: sol.kkt_feasibility,
                    iterations: sol.iterations,
                    solve_time: sol.solve_time,
                    fallback: false,
                    message: None,
                };
                (u, diag)
            }
            Ok(sol) => {
                let diag = StepDiagnostics {
                    status: Some(sol.status),
                    objective: f64::NAN,
                    kkt_stationarity: sol.kkt_stationarity,
                    kkt_feasibility: sol.kkt_feasibility,
                    iterations: sol.iterations,
                    solve_time: sol.solve_time,
                    fallback: true,
                    message: Some(format!("solver status {}", sol.status.as_str())),
                };
                (self.fallback(x), diag)
            }
            Err(e) => {
                let diag = StepDiagnostics {
                    status: None,
                    objective: f64::NAN,
                    kkt_stationarity: f64::NAN,
                    kkt_feasibility: f64::NAN,
                    iterations: 0,
                    solve_time: 0.0,
                    fallback: true,
                    message: Some(solver_error_text(&e)),
                };
                (self.fallback(x), diag)
            }
        };
        self.u_prev = u.clone();
        (u, diag)
    }

    /// `u = −gain·x_freq`, clipped to the power and ramp limits.
    pub fn fallback(&self, x: &[f64]) -> Vec<f64> {
        let b = &self.bounds;
        self.freq_state_indices
            .iter()
            .enumerate()
            .map(|(i, &fi)| {
                let lo = b.u_min[i].max(self.u_prev[i] + b.du_min[i]);
                let hi = b.u_max[i].min(self.u_prev[i] + b.du_max[i]);
                let raw = -self.fallback_gain * x[fi];
                if lo <= hi {
                    raw.clamp(lo, hi)
                } else {
                    raw.clamp(b.u_min[i], b.u_max[i])
                }
            })
            .collect()
    }
}

fn solver_error_text(e: &QpError) -> String {
    format!("solver error: {e}")
}

fn validate_weights(w: &MpcWeights, n: usize, m: usize) -> Result<(), MpcError> {
    let square = |mat: &DenseMatrix, k: usize, name: &str| {
        if mat.rows() != k || mat.cols() != k {
            Err(MpcError::Weights(format!("{name} must be {k}x{k}")))
        } else {
            Ok(())
        }
    };
    square(&w.q, n, "q")?;
    square(&w.r, m, "r")?;
    if !w.q.is_symmetric(1e-12 * w.q.max_abs().max(1.0)) || !is_positive_semidefinite(&w.q, 1e-10) {
        return Err(MpcError::Weights("q must be symmetric positive semidefinite".into()));
    }
    if !w.r.is_symmetric(1e-12 * w.r.max_abs().max(1.0)) || !is_positive_semidefinite(&w.r, 0.0) {
        return Err(MpcError::Weights("r must be symmetric positive definite".into()));
    }
    if let Some(qt) = &w.q_term {
        square(qt, n, "q_term")?;
        let scale = qt.max_abs().max(1.0);
        if !qt.is_symmetric(1e-9 * scale) || !is_positive_semidefinite(qt, 1e-10 * scale) {
            return Err(MpcError::Weights("q_term must be symmetric positive semidefinite".into()));
        }
    }
    if !(w.slack_weight.is_finite() && w.slack_weight > 0.0) {
        return Err(MpcError::Weights("slack_weight must be positive".into()));
    }
    Ok(())
}

fn validate_bounds(b: &MpcBounds, n: usize, m: usize) -> Result<(), MpcError> {
    let pairs: [(&str, &Vec<f64>, &Vec<f64>, usize); 3] = [
        ("x", &b.x_min, &b.x_max, n),
        ("u", &b.u_min, &b.u_max, m),
        ("du", &b.du_min, &b.du_max, m),
    ];
    for (name, lo, hi, k) in pairs {
        if lo.len() != k || hi.len() != k {
            return Err(MpcError::Bounds(format!("{name}_min/{name}_max need {k} entries")));
        }
        for (i, (l, h)) in lo.iter().zip(hi).enumerate() {
            if l.is_nan() || h.is_nan() || l >= h {
                return Err(MpcError::Bounds(format!(
                    "{name}_min[{i}] = {l} must be below {name}_max[{i}] = {h}"
                )));
            }
        }
    }
    for i in 0..m {
        if !(b.u_min[i].is_finite() && b.u_max[i].is_finite()) {
            return Err(MpcError::Bounds("input bounds must be finite".into()));
        }
    }
    Ok(())
}

fn build_template(
    model: &DiscreteModel,
    control_inputs: &[usize],
    horizon: usize,
    mode: MpcMode,
    w: &MpcWeights,
    bounds: &MpcBounds,
) -> Template {
    let n = model.n_states();
    let m = control_inputs.len();
    let n_u = m * horizon;
    let (sx, su) = build_prediction_matrices(model, control_inputs, horizon);

    // Q̄ applied block-wise
    let stage = |k: usize| -> &DenseMatrix {
        if k == horizon - 1 && mode == MpcMode::Clf {
            w.q_term.as_ref().expect("validated")
        } else {
            &w.q
        }
    };
    let mut qsu = DenseMatrix::zeros(n * horizon, n_u);
    let mut qsx = DenseMatrix::zeros(n * horizon, n);
    for k in 0..horizon {
        let q = stage(k);
        qsu.set_block(k * n, 0, &(q * &su.block(k * n, 0, n, n_u)));
        qsx.set_block(k * n, 0, &(q * &sx.block(k * n, 0, n, n)));
    }
    let sut = su.transpose();
    let mut huu = &sut * &qsu;
    for k in 0..horizon {
        for i in 0..m {
            for j in 0..m {
                huu[(k * m + i, k * m + j)] += w.r[(i, j)];
            }
        }
    }
    // one slack per finite state-bound row over the horizon
    let finite_sides: usize = (0..n)
        .map(|j| bounds.x_min[j].is_finite() as usize + bounds.x_max[j].is_finite() as usize)
        .sum();
    let n_slack = finite_sides * horizon;
    let nz = n_u + n_slack;
    let mut hessian = DenseMatrix::zeros(nz, nz);
    for i in 0..n_u {
        for j in 0..n_u {
            hessian[(i, j)] = huu[(i, j)] + huu[(j, i)];
        }
    }
    let f_x = (&sut * &qsx).scale(2.0);
    let c_x = &sx.transpose() * &qsx;

    let mut rows: Vec<Vec<f64>> = Vec::new();
    let mut b_const = Vec::new();
    let mut b_x: Vec<Vec<f64>> = Vec::new();
    let mut b_u: Vec<Vec<f64>> = Vec::new();
    let mut push = |row: Vec<f64>, c: f64, bx: Vec<f64>, bu: Vec<f64>| {
        rows.push(row);
        b_const.push(c);
        b_x.push(bx);
        b_u.push(bu);
    };
    let zx = || vec![0.0; n];
    let zu = || vec![0.0; m];

    for k in 0..horizon {
        for i in 0..m {
            let mut r = vec![0.0; nz];
            r[k * m + i] = 1.0;
            push(r.clone(), bounds.u_max[i], zx(), zu());
            push(r.iter().map(|v| -v).collect(), -bounds.u_min[i], zx(), zu());
        }
    }
    for k in 0..horizon {
        for i in 0..m {
            let mut r = vec![0.0; nz];
            r[k * m + i] = 1.0;
            let mut uprev = zu();
            if k == 0 {
                uprev[i] = 1.0;
            } else {
                r[(k - 1) * m + i] = -1.0;
            }
            if bounds.du_max[i].is_finite() {
                push(r.clone(), bounds.du_max[i], zx(), uprev.clone());
            }
            if bounds.du_min[i].is_finite() {
                push(
                    r.iter().map(|v| -v).collect(),
                    -bounds.du_min[i],
                    zx(),
                    uprev.iter().map(|v| -v).collect(),
                );
            }
        }
    }
    let mut slack = n_u;
    for k in 0..horizon {
        for j in 0..n {
            let row_idx = k * n + j;
            let su_row = su.row(row_idx);
            if bounds.x_max[j].is_finite() {
                let mut r = vec![0.0; nz];
                r[..n_u].copy_from_slice(su_row);
                r[slack] = -1.0;
                slack += 1;
                push(r, bounds.x_max[j], sx.row(row_idx).iter().map(|v| -v).collect(), zu());
            }
            if bounds.x_min[j].is_finite() {
                let mut r = vec![0.0; nz];
                for (dst, v) in r[..n_u].iter_mut().zip(su_row) {
                    *dst = -v;
                }
                r[slack] = -1.0;
                slack += 1;
                push(r, -bounds.x_min[j], sx.row(row_idx).to_vec(), zu());
            }
        }
    }
    for s in 0..n_slack {
        let mut r = vec![0.0; nz];
        r[n_u + s] = -1.0;
        push(r, 0.0, zx(), zu());
    }

    let p = rows.len();
    let flat = |v: Vec<Vec<f64>>, cols: usize| {
        DenseMatrix::new(p, cols, v.into_iter().flatten().collect()).expect("finite template rows")
    };
    Template {
        hessian,
        f_x,
        c_x,
        a: flat(rows, nz),
        b_const,
        b_x: flat(b_x, n),
        b_uprev: flat(b_u, m),
        n_slack,
    }
}
