//! Sparse recovery of measured blocks.
//!
//! Three solvers share one result type: orthogonal matching pursuit, CoSaMP,
//! and ℓ1 basis pursuit (equality-constrained or with a residual bound σ).

#![allow(clippy::neg_cmp_op_on_partial_ord)]

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

use crate::sensing::{axpy, dot, norm2, SensingMatrix};

#[derive(Debug, Error)]
pub enum SolverError {
    #[error("invalid solver parameter: {0}")]
    Parameter(String),
    #[error("basis pursuit did not converge after {iterations} iterations (duality gap {gap:.3e}, infeasibility {infeasibility:.3e})")]
    Convergence {
        iterations: usize,
        gap: f64,
        infeasibility: f64,
        last_iterate: Vec<f64>,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SolverKind {
    Omp,
    CoSaMP,
    BasisPursuit,
}

impl SolverKind {
    pub fn name(self) -> &'static str {
        match self {
            SolverKind::Omp => "omp",
            SolverKind::CoSaMP => "cosamp",
            SolverKind::BasisPursuit => "bp",
        }
    }

    /// Wire code used in stream headers.
    pub fn code(self) -> u8 {
        match self {
            SolverKind::Omp => 0,
            SolverKind::CoSaMP => 1,
            SolverKind::BasisPursuit => 2,
        }
    }

    pub fn from_code(code: u8) -> Option<Self> {
        match code {
            0 => Some(SolverKind::Omp),
            1 => Some(SolverKind::CoSaMP),
            2 => Some(SolverKind::BasisPursuit),
            _ => None,
        }
    }
}

impl std::str::FromStr for SolverKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "omp" => Ok(SolverKind::Omp),
            "cosamp" => Ok(SolverKind::CoSaMP),
            "bp" | "l1" => Ok(SolverKind::BasisPursuit),
            other => Err(format!(
                "unknown solver `{other}` (expected omp, cosamp or bp)"
            )),
        }
    }
}

impl std::fmt::Display for SolverKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolverConfig {
    pub kind: SolverKind,
    /// Sparsity budget for the greedy solvers.
    pub k: usize,
    /// Residual bound for basis pursuit; zero selects `y = A s` exactly.
    pub sigma: f64,
    /// Iteration cap. Ignored by OMP, which runs at most `k` iterations.
    pub max_iterations: usize,
    /// Absolute CoSaMP halting threshold on ‖r‖₂; `None` means `1e-6·‖y‖₂`.
    pub eta: Option<f64>,
}

impl SolverConfig {
    pub const COSAMP_MAX_ITERATIONS: usize = 50;
    pub const COSAMP_RELATIVE_ETA: f64 = 1e-6;

    pub fn new(kind: SolverKind) -> Self {
        Self {
            kind,
            k: 1,
            sigma: 0.0,
            max_iterations: match kind {
                SolverKind::BasisPursuit => BpOptions::default().max_iterations,
                _ => Self::COSAMP_MAX_ITERATIONS,
            },
            eta: None,
        }
    }

    pub fn with_k(mut self, k: usize) -> Self {
        self.k = k;
        self
    }

    pub fn validate(&self, rows: usize) -> Result<(), SolverError> {
        if let Some(eta) = self.eta {
            if !(eta > 0.0) {
                return Err(SolverError::Parameter(format!(
                    "eta must be positive, got {eta}"
                )));
            }
        }
        if !(self.sigma >= 0.0) {
            return Err(SolverError::Parameter(format!(
                "sigma must be non-negative, got {}",
                self.sigma
            )));
        }
        match self.kind {
            SolverKind::Omp if self.k == 0 || self.k > rows => Err(SolverError::Parameter(
                format!("OMP needs 1 <= k <= M, got k={} with M={rows}", self.k),
            )),
            SolverKind::CoSaMP if self.k == 0 => {
                Err(SolverError::Parameter("CoSaMP needs k >= 1".into()))
            }
            _ => Ok(()),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReconstructionResult {
    pub s_hat: Vec<f64>,
    /// Strictly increasing indices of the nonzeros of `s_hat`.
    pub support: Vec<usize>,
    pub iterations: usize,
    /// ‖y − A·s_hat‖₂ recomputed from the returned vector.
    pub residual_norm: f64,
    /// Residual norm after each iteration.
    pub residual_history: Vec<f64>,
    /// Set when a least-squares step fell back to the pseudo-inverse.
    pub rank_deficient: bool,
}

impl ReconstructionResult {
    fn finish(
        a: &SensingMatrix,
        y: &[f64],
        s_hat: Vec<f64>,
        iterations: usize,
        residual_history: Vec<f64>,
        rank_deficient: bool,
    ) -> Self {
        let support = s_hat
            .iter()
            .enumerate()
            .filter(|(_, v)| **v != 0.0)
            .map(|(i, _)| i)
            .collect();
        let residual_norm = residual_norm(a, y, &s_hat);
        Self {
            s_hat,
            support,
            iterations,
            residual_norm,
            residual_history,
            rank_deficient,
        }
    }

    fn zero(a: &SensingMatrix, y: &[f64]) -> Self {
        Self::finish(a, y, vec![0.0; a.cols()], 0, Vec::new(), false)
    }
}

/// ‖y − A s‖₂.
pub fn residual_norm(a: &SensingMatrix, y: &[f64], s: &[f64]) -> f64 {
    let mut r = y.to_vec();
    for (j, &v) in s.iter().enumerate() {
        if v != 0.0 {
            axpy(-v, a.column(j), &mut r);
        }
    }
    norm2(&r)
}

fn check_lengths(a: &SensingMatrix, y: &[f64]) -> Result<(), SolverError> {
    if y.len() != a.rows() {
        return Err(SolverError::Parameter(format!(
            "measurement length {} does not match M={}",
            y.len(),
            a.rows()
        )));
    }
    Ok(())
}

/// Runs the solver selected by `config`.
pub fn solve(
    config: &SolverConfig,
    a: &SensingMatrix,
    y: &[f64],
) -> Result<ReconstructionResult, SolverError> {
    config.validate(a.rows())?;
    match config.kind {
        SolverKind::Omp => omp(a, y, config.k),
        SolverKind::CoSaMP => {
            let eta = config
                .eta
                .unwrap_or(SolverConfig::COSAMP_RELATIVE_ETA * norm2(y));
            cosamp(a, y, config.k, config.max_iterations, eta)
        }
        SolverKind::BasisPursuit => basis_pursuit_with(
            a,
            y,
            config.sigma,
            &BpOptions {
                max_iterations: config.max_iterations,
                ..BpOptions::default()
            },
        ),
    }
}

struct LeastSquares {
    x: Vec<f64>,
    rank_deficient: bool,
}

fn gather_columns(a: &SensingMatrix, cols: &[usize]) -> DMatrix<f64> {
    let m = a.rows();
    let mut data = Vec::with_capacity(m * cols.len());
    for &j in cols {
        data.extend_from_slice(a.column(j));
    }
    DMatrix::from_vec(m, cols.len(), data)
}

/// argmin_x ‖y − A_cols x‖₂ by Householder QR, falling back to the SVD
/// pseudo-inverse when A_cols is (numerically) rank deficient.
fn least_squares(a: &SensingMatrix, cols: &[usize], y: &[f64]) -> LeastSquares {
    if cols.is_empty() {
        return LeastSquares {
            x: Vec::new(),
            rank_deficient: false,
        };
    }
    let sub = gather_columns(a, cols);
    let rhs = DVector::from_column_slice(y);
    if cols.len() <= a.rows() {
        let qr = sub.clone().qr();
        let r = qr.r();
        let diag_max = r.diagonal().amax();
        let well_posed = diag_max > 0.0 && r.diagonal().iter().all(|d| d.abs() > 1e-10 * diag_max);
        if well_posed {
            let qty = qr.q().tr_mul(&rhs);
            if let Some(x) = r.solve_upper_triangular(&qty) {
                return LeastSquares {
                    x: x.as_slice().to_vec(),
                    rank_deficient: false,
                };
            }
        }
    }
    let svd = sub.svd(true, true);
    let x = svd
        .solve(
            &rhs,
            1e-10 * svd.singular_values.amax().max(f64::MIN_POSITIVE),
        )
        .expect("u and v were requested");
    LeastSquares {
        x: x.as_slice().to_vec(),
        rank_deficient: true,
    }
}

/// Orthogonal matching pursuit.
///
/// Each iteration picks the unselected column with the largest |⟨a_i, r⟩|
/// (lowest index on ties), then projects `y` onto the span of all selected
/// columns. The projection is maintained with an incremental Gram–Schmidt
/// QR (two orthogonalisation passes per column). Stops after `k` columns or
/// when ‖r‖₂ ≤ 1e-9·‖y‖₂.
pub fn omp(a: &SensingMatrix, y: &[f64], k: usize) -> Result<ReconstructionResult, SolverError> {
    check_lengths(a, y)?;
    let (m, n) = (a.rows(), a.cols());
    if k == 0 || k > m {
        return Err(SolverError::Parameter(format!(
            "OMP needs 1 <= k <= M, got k={k} with M={m}"
        )));
    }
    let y_norm = norm2(y);
    if y_norm == 0.0 {
        return Ok(ReconstructionResult::zero(a, y));
    }
    let stop = 1e-9 * y_norm;

    let mut selected: Vec<usize> = Vec::with_capacity(k);
    let mut used = vec![false; n];
    let mut q: Vec<Vec<f64>> = Vec::with_capacity(k);
    // Column-major upper triangle: r[j] holds R[0..=j, j].
    let mut r_cols: Vec<Vec<f64>> = Vec::with_capacity(k);
    let mut qty: Vec<f64> = Vec::with_capacity(k);
    let mut residual = y.to_vec();
    let mut history = Vec::with_capacity(k);
    let mut rank_deficient = false;

    while selected.len() < k && norm2(&residual) > stop {
        let mut best = usize::MAX;
        let mut best_corr = -1.0;
        for (j, &taken) in used.iter().enumerate() {
            if taken {
                continue;
            }
            let c = dot(a.column(j), &residual).abs();
            if c > best_corr {
                best_corr = c;
                best = j;
            }
        }
        used[best] = true;
        selected.push(best);

        let col = a.column(best);
        let mut w = col.to_vec();
        let mut coeffs = vec![0.0; q.len() + 1];
        for _pass in 0..2 {
            for (i, qi) in q.iter().enumerate() {
                let c = dot(qi, &w);
                coeffs[i] += c;
                axpy(-c, qi, &mut w);
            }
        }
        let w_norm = norm2(&w);
        if w_norm <= 1e-10 * norm2(col) {
            // New column lies in the span of the selection; nothing more to gain.
            rank_deficient = true;
            history.push(norm2(&residual));
            break;
        }
        w.iter_mut().for_each(|v| *v /= w_norm);
        coeffs[q.len()] = w_norm;
        let c = dot(&w, &residual);
        axpy(-c, &w, &mut residual);
        qty.push(dot(&w, y));
        q.push(w);
        r_cols.push(coeffs);
        history.push(norm2(&residual));
    }

    let mut s_hat = vec![0.0; n];
    if rank_deficient {
        let ls = least_squares(a, &selected, y);
        for (&j, &v) in selected.iter().zip(&ls.x) {
            s_hat[j] = v;
        }
    } else {
        // Back-substitution R x = Qᵀy.
        let p = q.len();
        let mut x = vec![0.0; p];
        for i in (0..p).rev() {
            let mut acc = qty[i];
            for j in i + 1..p {
                acc -= r_cols[j][i] * x[j];
            }
            x[i] = acc / r_cols[i][i];
        }
        for (&j, &v) in selected.iter().zip(&x) {
            s_hat[j] = v;
        }
    }
    let iterations = selected.len();
    Ok(ReconstructionResult::finish(
        a,
        y,
        s_hat,
        iterations,
        history,
        rank_deficient,
    ))
}

/// Indices of the `count` largest |values|, ties to the lower index, sorted.
fn largest_indices(values: &[f64], count: usize) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..values.len()).collect();
    let count = count.min(values.len());
    if count < values.len() {
        idx.select_nth_unstable_by(count, |&i, &j| {
            values[j].abs().total_cmp(&values[i].abs()).then(i.cmp(&j))
        });
        idx.truncate(count);
    }
    idx.sort_unstable();
    idx
}

/// CoSaMP: identify the 2k strongest proxy entries, merge with the current
/// support, least-squares estimate on the merged set, prune to k, update
/// the samples. Halts when ‖r‖₂ ≤ `eta`, the iteration budget is spent, or
/// an iteration reproduces the previous estimate exactly. Returns the
/// iterate with the smallest residual.
pub fn cosamp(
    a: &SensingMatrix,
    y: &[f64],
    k: usize,
    max_iterations: usize,
    eta: f64,
) -> Result<ReconstructionResult, SolverError> {
    cosamp_observed(a, y, k, max_iterations, eta, |_, _| {})
}

fn cosamp_observed(
    a: &SensingMatrix,
    y: &[f64],
    k: usize,
    max_iterations: usize,
    eta: f64,
    mut observe: impl FnMut(usize, usize),
) -> Result<ReconstructionResult, SolverError> {
    check_lengths(a, y)?;
    if k == 0 {
        return Err(SolverError::Parameter("CoSaMP needs k >= 1".into()));
    }
    if !(eta > 0.0) {
        return Err(SolverError::Parameter(format!(
            "eta must be positive, got {eta}"
        )));
    }
    let n = a.cols();
    let k = k.min(n);
    if norm2(y) == 0.0 {
        return Ok(ReconstructionResult::zero(a, y));
    }

    let mut support: Vec<usize> = Vec::new();
    let mut s = vec![0.0; n];
    let mut residual = y.to_vec();
    let mut residual_norm = norm2(y);
    let mut best = (residual_norm, s.clone());
    let mut history = Vec::new();
    let mut rank_deficient = false;
    let mut iterations = 0;

    while iterations < max_iterations && residual_norm > eta {
        iterations += 1;
        let proxy = a.apply_transpose(&residual);
        let mut merged = largest_indices(&proxy, 2 * k);
        merged.extend_from_slice(&support);
        merged.sort_unstable();
        merged.dedup();

        let ls = least_squares(a, &merged, y);
        rank_deficient |= ls.rank_deficient;
        let keep = largest_indices(&ls.x, k);
        observe(merged.len(), keep.len());

        let mut next = vec![0.0; n];
        let mut next_support = Vec::with_capacity(keep.len());
        for &p in &keep {
            if ls.x[p] != 0.0 {
                next[merged[p]] = ls.x[p];
                next_support.push(merged[p]);
            }
        }
        let unchanged = next == s;
        s = next;
        support = next_support;
        residual.copy_from_slice(y);
        for &j in &support {
            axpy(-s[j], a.column(j), &mut residual);
        }
        residual_norm = norm2(&residual);
        history.push(residual_norm);
        if residual_norm < best.0 {
            best = (residual_norm, s.clone());
        }
        if unchanged {
            break;
        }
    }

    Ok(ReconstructionResult::finish(
        a,
        y,
        best.1,
        iterations,
        history,
        rank_deficient,
    ))
}

/// Tuning of the ℓ1 solver.
#[derive(Debug, Clone, PartialEq)]
pub struct BpOptions {
    pub max_iterations: usize,
    /// Relative duality gap accepted as optimal.
    pub gap_tolerance: f64,
    /// Allowed constraint violation beyond σ, relative to ‖y‖₂.
    pub feasibility_tolerance: f64,
    /// Optimality checks (and support polishing) run every this many iterations.
    pub check_every: usize,
}

impl Default for BpOptions {
    fn default() -> Self {
        Self {
            max_iterations: 4000,
            gap_tolerance: 1e-7,
            feasibility_tolerance: 1e-7,
            check_every: 10,
        }
    }
}

/// Basis pursuit with default options.
pub fn basis_pursuit(
    a: &SensingMatrix,
    y: &[f64],
    sigma: f64,
) -> Result<ReconstructionResult, SolverError> {
    basis_pursuit_with(a, y, sigma, &BpOptions::default())
}

#[inline]
fn soft_threshold(v: f64, t: f64) -> f64 {
    if v > t {
        v - t
    } else if v < -t {
        v + t
    } else {
        0.0
    }
}

/// Projects `p` onto the ball ‖p − y‖₂ ≤ σ.
fn project_ball(p: &mut [f64], y: &[f64], sigma: f64) {
    if sigma == 0.0 {
        p.copy_from_slice(y);
        return;
    }
    let dist = p
        .iter()
        .zip(y)
        .map(|(a, b)| (a - b) * (a - b))
        .sum::<f64>()
        .sqrt();
    if dist > sigma {
        let scale = sigma / dist;
        for (pi, yi) in p.iter_mut().zip(y) {
            *pi = yi + (*pi - yi) * scale;
        }
    }
}

/// Dual objective for a multiplier λ of the measurement constraint, after
/// scaling λ into the feasible set ‖Aᵀλ‖∞ ≤ 1.
fn dual_value(a: &SensingMatrix, y: &[f64], sigma: f64, lambda: &[f64]) -> f64 {
    let at = a.apply_transpose(lambda);
    let inf = at.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let scale = 1.0 / inf.max(1.0);
    scale * (dot(y, lambda) - sigma * norm2(lambda))
}

struct Candidate {
    s: Vec<f64>,
    l1: f64,
    infeasibility: f64,
}

fn candidate(a: &SensingMatrix, y: &[f64], sigma: f64, s: Vec<f64>) -> Candidate {
    let l1 = s.iter().map(|v| v.abs()).sum();
    let infeasibility = (residual_norm(a, y, &s) - sigma).max(0.0);
    Candidate {
        s,
        l1,
        infeasibility,
    }
}

/// Least-squares refit on the support of `z`, with the minimum-norm dual
/// certificate for that support. Returns the refit and the best dual value.
fn polish(a: &SensingMatrix, y: &[f64], z: &[f64]) -> Option<(Candidate, f64)> {
    let peak = z.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if peak == 0.0 {
        return None;
    }
    let support: Vec<usize> = (0..z.len()).filter(|&i| z[i].abs() > 1e-9 * peak).collect();
    if support.len() > a.rows() {
        return None;
    }
    let sub = gather_columns(a, &support);
    let qr = sub.qr();
    let r = qr.r();
    let diag_max = r.diagonal().amax();
    if !(diag_max > 0.0) || r.diagonal().iter().any(|d| d.abs() <= 1e-10 * diag_max) {
        return None;
    }
    let q = qr.q();
    let x = r.solve_upper_triangular(&q.tr_mul(&DVector::from_column_slice(y)))?;
    let mut s = vec![0.0; z.len()];
    let mut signs = DVector::zeros(support.len());
    for (p, &j) in support.iter().enumerate() {
        s[j] = x[p];
        signs[p] = x[p].signum();
    }
    // λ = A_S (A_SᵀA_S)⁻¹ sign = Q R⁻ᵀ sign
    let lambda = &q * r.transpose().solve_lower_triangular(&signs)?;
    let dual = dual_value(a, y, 0.0, lambda.as_slice());
    Some((candidate(a, y, 0.0, s), dual))
}

/// ℓ1 minimisation subject to ‖y − A s‖₂ ≤ σ (σ = 0: `y = A s`).
///
/// Solved by ADMM on the splitting `x = z`, `A x = w`, with the ℓ1 term on
/// `z` and the residual ball on `w`. The x-update solves `(I + AᵀA)x = b`
/// through the M×M Cholesky factor of `I + AAᵀ`. Every `check_every`
/// iterations the current iterate is scored against the dual point implied
/// by the ADMM multipliers; for σ = 0 the support is also refit by least
/// squares and scored against its own minimum-norm certificate. The solver
/// stops when an iterate is feasible to `feasibility_tolerance·‖y‖₂` and its
/// relative duality gap is below `gap_tolerance`. Entries below
/// `1e-6·max|ŝ|` are then truncated to zero.
pub fn basis_pursuit_with(
    a: &SensingMatrix,
    y: &[f64],
    sigma: f64,
    options: &BpOptions,
) -> Result<ReconstructionResult, SolverError> {
    check_lengths(a, y)?;
    if !(sigma >= 0.0) {
        return Err(SolverError::Parameter(format!(
            "sigma must be non-negative, got {sigma}"
        )));
    }
    let (m, n) = (a.rows(), a.cols());
    let y_norm = norm2(y);
    if y_norm <= sigma {
        return Ok(ReconstructionResult::zero(a, y));
    }
    let feas_tol = options.feasibility_tolerance * y_norm;

    let mat = a.matrix();
    let gram = DMatrix::<f64>::identity(m, m) + mat * mat.transpose();
    let chol = gram
        .cholesky()
        .expect("I + AAᵀ is symmetric positive definite");

    let aty = a.apply_transpose(y);
    let peak = aty.iter().fold(0.0f64, |acc, v| acc.max(v.abs()));
    let mut rho = 10.0 / peak;

    let mut x = vec![0.0; n];
    let mut z = vec![0.0; n];
    let mut u = vec![0.0; n];
    let mut w = y.to_vec();
    let mut v = vec![0.0; m];
    let mut b = vec![0.0; n];
    let mut history = Vec::new();
    let mut best_gap = f64::INFINITY;
    let mut best_infeasibility = f64::INFINITY;

    for iter in 1..=options.max_iterations {
        // x-update
        let wv: Vec<f64> = w.iter().zip(&v).map(|(wi, vi)| wi - vi).collect();
        let atwv = a.apply_transpose(&wv);
        for i in 0..n {
            b[i] = z[i] - u[i] + atwv[i];
        }
        let ab = DVector::from_vec(a.apply(&b));
        let t = chol.solve(&ab);
        let att = a.apply_transpose(t.as_slice());
        for i in 0..n {
            x[i] = b[i] - att[i];
        }
        // z- and w-updates
        let z_prev = std::mem::take(&mut z);
        z = x
            .iter()
            .zip(&u)
            .map(|(xi, ui)| soft_threshold(xi + ui, 1.0 / rho))
            .collect();
        let w_prev = w.clone();
        w = t.iter().zip(&v).map(|(ti, vi)| ti + vi).collect();
        project_ball(&mut w, y, sigma);
        // multiplier updates
        let mut primal = 0.0;
        for i in 0..n {
            let d = x[i] - z[i];
            u[i] += d;
            primal += d * d;
        }
        for i in 0..m {
            let d = t[i] - w[i];
            v[i] += d;
            primal += d * d;
        }
        history.push(residual_norm(a, y, &z));

        if iter % options.check_every != 0 {
            continue;
        }

        let lambda: Vec<f64> = v.iter().map(|vi| -rho * vi).collect();
        let admm_dual = dual_value(a, y, sigma, &lambda);
        let mut candidates = vec![(candidate(a, y, sigma, z.clone()), admm_dual)];
        if sigma == 0.0 {
            if let Some((c, dual)) = polish(a, y, &z) {
                candidates.push((c, dual.max(admm_dual)));
            }
        }
        for (c, dual) in candidates {
            let gap = (c.l1 - dual).max(0.0);
            if c.infeasibility <= feas_tol {
                best_gap = best_gap.min(gap / c.l1.max(f64::MIN_POSITIVE));
            }
            best_infeasibility = best_infeasibility.min(c.infeasibility);
            if c.infeasibility <= feas_tol && gap <= options.gap_tolerance * c.l1 {
                let mut s = c.s;
                let peak = s.iter().fold(0.0f64, |acc, v| acc.max(v.abs()));
                for v in s.iter_mut() {
                    if v.abs() < 1e-6 * peak {
                        *v = 0.0;
                    }
                }
                return Ok(ReconstructionResult::finish(a, y, s, iter, history, false));
            }
        }

        // Residual balancing; the x-update does not depend on ρ.
        let dz: Vec<f64> = z.iter().zip(&z_prev).map(|(a, b)| a - b).collect();
        let dw: Vec<f64> = w.iter().zip(&w_prev).map(|(a, b)| a - b).collect();
        let mut dual_vec = a.apply_transpose(&dw);
        for (d, dzi) in dual_vec.iter_mut().zip(&dz) {
            *d += dzi;
        }
        let dual_res = rho * norm2(&dual_vec);
        let primal_res = primal.sqrt();
        let factor = if primal_res > 10.0 * dual_res {
            2.0
        } else if dual_res > 10.0 * primal_res {
            0.5
        } else {
            1.0
        };
        if factor != 1.0 {
            rho *= factor;
            u.iter_mut().for_each(|ui| *ui /= factor);
            v.iter_mut().for_each(|vi| *vi /= factor);
        }
    }

    Err(SolverError::Convergence {
        iterations: options.max_iterations,
        gap: best_gap,
        infeasibility: best_infeasibility,
        last_iterate: z,
    })
}
