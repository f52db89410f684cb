//! Standard and pipelined preconditioned BiCGStab with Jacobi
//! preconditioning, reproducible reductions, and residual-history capture.
//!
//! Both iterations follow the annotated kernel/communication structure:
//! local fma kernels, allgather before each SpMV, batched reproducible
//! reductions (split into begin/wait in the pipelined variant).

use crate::eft;
use crate::kernels::{axpy, axpy2like, axpylike, scale, spmv_local};
use crate::reduction::{dot_global_multi, split_allreduce_begin, DotValues};
use crate::sparsemat::{allgather, CsrMatrix, RankWorld};

#[derive(Debug, thiserror::Error)]
pub enum SolverError {
    #[error("zero diagonal entry at row {0}; Jacobi preconditioner undefined")]
    ZeroDiagonal(usize),
    #[error("right-hand side length {got} does not match matrix size {want}")]
    DimensionMismatch { got: usize, want: usize },
}

/// Jacobi preconditioner `M = diag(A)`; application is an element-wise
/// product with the reciprocal diagonal.
#[derive(Debug, Clone)]
pub struct JacobiPrecond {
    inv_diag: Vec<f64>,
}

impl JacobiPrecond {
    pub fn build(a: &CsrMatrix) -> Result<JacobiPrecond, SolverError> {
        let diag = a.diagonal();
        if let Some(i) = diag.iter().position(|&d| d == 0.0) {
            return Err(SolverError::ZeroDiagonal(i));
        }
        Ok(JacobiPrecond { inv_diag: diag.iter().map(|d| 1.0 / d).collect() })
    }

    pub fn inv_diag(&self) -> &[f64] {
        &self.inv_diag
    }

    pub fn apply(&self, v: &[f64]) -> Vec<f64> {
        crate::kernels::ewmul(&self.inv_diag, v)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SolverVariant {
    Standard,
    Pipelined,
}

impl SolverVariant {
    pub fn parse(s: &str) -> Option<SolverVariant> {
        match s {
            "standard" => Some(SolverVariant::Standard),
            "pipelined" => Some(SolverVariant::Pipelined),
            _ => None,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            SolverVariant::Standard => "standard",
            SolverVariant::Pipelined => "pipelined",
        }
    }
}

#[derive(Debug, Clone)]
pub struct SolverConfig {
    /// Threshold on the scaled residual `tau_j / tau_0`.
    pub tol: f64,
    pub max_iters: usize,
    pub variant: SolverVariant,
}

impl SolverConfig {
    /// Defaults: tolerance 1e-6, iteration cap `20 * n`.
    pub fn for_matrix(a: &CsrMatrix, variant: SolverVariant) -> SolverConfig {
        SolverConfig { tol: 1e-6, max_iters: 20 * a.n(), variant }
    }
}

#[derive(Debug, Clone)]
pub struct SolveReport {
    pub converged: bool,
    pub iterations: usize,
    pub initial_residual: f64,
    pub final_residual: f64,
    pub final_scaled_residual: f64,
    /// `||b - A x||_2` recomputed from scratch at the end.
    pub final_true_residual: f64,
    /// `(iteration, tau_j)` including the initial residual at j = 0.
    pub history: Vec<(usize, f64)>,
    pub solution: Vec<f64>,
    /// FPE overflow events (the reduction fell back to the exact path).
    pub warnings: Vec<String>,
    pub breakdown: Option<String>,
}

/// `b := A * ones`, then one scaling by `1/sqrt(N)` after the SpMV —
/// never an element-wise `d = 1/sqrt(N)` first.
pub fn build_rhs(world: &RankWorld, a: &CsrMatrix) -> Vec<f64> {
    let ones = vec![1.0; a.n()];
    let mut b = distributed_spmv(world, a, &ones);
    scale(1.0 / (a.n() as f64).sqrt(), &mut b);
    b
}

/// Allgather the operand, then each rank computes its row block.
fn distributed_spmv(world: &RankWorld, a: &CsrMatrix, v: &[f64]) -> Vec<f64> {
    let p = &world.partition;
    let slices: Vec<&[f64]> = (0..p.ranks()).map(|k| p.slice(k, v)).collect();
    let e = allgather(p, &slices);
    let mut out = Vec::with_capacity(a.n());
    for k in 0..p.ranks() {
        out.extend(spmv_local(a, p.range(k), &e));
    }
    out
}

fn sub_into(b: &[f64], ax: &[f64]) -> Vec<f64> {
    let mut r = vec![0.0; b.len()];
    axpylike(-1.0, b, ax, &mut r);
    r
}

struct WarningLog {
    entries: Vec<String>,
}

impl WarningLog {
    fn new() -> WarningLog {
        WarningLog { entries: Vec::new() }
    }

    fn absorb(&mut self, iteration: usize, step: &str, d: &DotValues) {
        if d.fpe_overflow {
            self.entries.push(format!(
                "iteration {iteration}, {step}: FPE accumulator overflowed; \
                 switched to the ExBLAS-based implementation for this reduction"
            ));
        }
    }
}

fn finish(
    world: &RankWorld,
    a: &CsrMatrix,
    b: &[f64],
    x: Vec<f64>,
    tau0: f64,
    tau: f64,
    tol: f64,
    iterations: usize,
    history: Vec<(usize, f64)>,
    warnings: Vec<String>,
    breakdown: Option<String>,
) -> SolveReport {
    let ax = distributed_spmv(world, a, &x);
    let true_res = sub_into(b, &ax);
    let true_norm = crate::reduction::norm2(world, &true_res).values[0];
    let scaled = if tau0 == 0.0 { 0.0 } else { tau / tau0 };
    SolveReport {
        converged: breakdown.is_none() && scaled <= tol,
        iterations,
        initial_residual: tau0,
        final_residual: tau,
        final_scaled_residual: scaled,
        final_true_residual: true_norm,
        history,
        solution: x,
        warnings,
        breakdown,
    }
}

/// Standard preconditioned BiCGStab. The shadow residual is the initial
/// residual itself; the dot products of the beta/tau steps are merged into
/// one batched reduction round.
pub fn pbicgstab(
    world: &RankWorld,
    a: &CsrMatrix,
    b: &[f64],
    config: &SolverConfig,
) -> Result<SolveReport, SolverError> {
    eft::self_test().expect("floating-point environment check failed");
    let n = a.n();
    if b.len() != n {
        return Err(SolverError::DimensionMismatch { got: b.len(), want: n });
    }
    let precond = JacobiPrecond::build(a)?;
    let mut warnings = WarningLog::new();

    let mut x = vec![0.0; n];
    let ax = distributed_spmv(world, a, &x);
    let r0 = sub_into(b, &ax);
    let mut r = r0.clone();
    let mut p = r0.clone();

    // <r0, r0> doubles as the alpha numerator of the first iteration and
    // as tau0^2.
    let d = dot_global_multi(world, &[(&r0, &r0)]);
    warnings.absorb(0, "init", &d);
    let mut rho = d.values[0];
    let tau0 = rho.sqrt();
    let mut tau = tau0;
    let mut history = vec![(0, tau0)];
    let threshold = config.tol * tau0;
    let mut iterations = 0;
    let mut breakdown = None;

    while tau > threshold && iterations < config.max_iters {
        let j = iterations;
        // Precondition the search direction and multiply.
        let p_hat = precond.apply(&p);
        let s = distributed_spmv(world, a, &p_hat);
        // First scalar: the bi-orthogonality dot.
        let d = dot_global_multi(world, &[(&r0, &s)]);
        warnings.absorb(j, "alpha reduction", &d);
        let r0s = d.values[0];
        if r0s == 0.0 {
            breakdown = Some("<r0, s> = 0".into());
            break;
        }
        let alpha = rho / r0s;
        // Intermediate residual, preconditioned, and its image.
        let mut q = vec![0.0; n];
        axpylike(-alpha, &r, &s, &mut q);
        let q_hat = precond.apply(&q);
        let y = distributed_spmv(world, a, &q_hat);
        // Stabilization scalars: two dots, one reduction round.
        let d = dot_global_multi(world, &[(&q, &y), (&y, &y)]);
        warnings.absorb(j, "omega reduction", &d);
        let (qy, yy) = (d.values[0], d.values[1]);
        if yy == 0.0 {
            if q.iter().all(|&v| v == 0.0) {
                // The intermediate residual already vanished: the
                // alpha half-step alone solves the system exactly.
                axpy(alpha, &p_hat, &mut x);
                tau = 0.0;
                iterations = j + 1;
                history.push((iterations, 0.0));
                break;
            }
            breakdown = Some("<y, y> = 0".into());
            break;
        }
        let omega = qy / yy;
        // Solution update: two axpy in the written order.
        axpy(alpha, &p_hat, &mut x);
        axpy(omega, &q_hat, &mut x);
        // New residual.
        let mut r_next = vec![0.0; n];
        axpylike(-omega, &q, &y, &mut r_next);
        r = r_next;
        // rho and the residual norm merged into one reduction round.
        let d = dot_global_multi(world, &[(&r0, &r), (&r, &r)]);
        warnings.absorb(j, "rho|tau reduction", &d);
        let (rho_next, rr) = (d.values[0], d.values[1]);
        tau = rr.sqrt();
        iterations = j + 1;
        history.push((iterations, tau));
        if tau <= threshold {
            break;
        }
        if rho == 0.0 {
            breakdown = Some("<r0, r> = 0".into());
            break;
        }
        if omega == 0.0 {
            breakdown = Some("omega = 0".into());
            break;
        }
        let beta = (rho_next / rho) * (alpha / omega);
        // New search direction: fused beta/omega update.
        let mut p_next = vec![0.0; n];
        axpy2like(beta, omega, &r, &p, &s, &mut p_next);
        p = p_next;
        rho = rho_next;
    }

    Ok(finish(
        world, a, b, x, tau0, tau, config.tol, iterations, history,
        warnings.entries, breakdown,
    ))
}

/// Pipelined preconditioned BiCGStab: the two reduction rounds are split
/// into begin/wait with preconditioner applications and SpMVs placed in
/// between, per the non-blocking golden rule. The residual norm rides in
/// the second batch.
pub fn pipelined_pbicgstab(
    world: &RankWorld,
    a: &CsrMatrix,
    b: &[f64],
    config: &SolverConfig,
) -> Result<SolveReport, SolverError> {
    eft::self_test().expect("floating-point environment check failed");
    let n = a.n();
    if b.len() != n {
        return Err(SolverError::DimensionMismatch { got: b.len(), want: n });
    }
    let precond = JacobiPrecond::build(a)?;
    let mut warnings = WarningLog::new();

    let mut x = vec![0.0; n];
    let ax = distributed_spmv(world, a, &x);
    let r0 = sub_into(b, &ax);
    let mut r = r0.clone();
    let mut r_hat = precond.apply(&r);
    let mut w = distributed_spmv(world, a, &r_hat);
    let mut w_hat = precond.apply(&w);
    let mut t = distributed_spmv(world, a, &w_hat);

    let d = dot_global_multi(world, &[(&r0, &r0), (&r0, &w)]);
    warnings.absorb(0, "init", &d);
    let mut rho = d.values[0];
    let r0w = d.values[1];
    let tau0 = rho.sqrt();
    let mut tau = tau0;
    let mut history = vec![(0, tau0)];
    let threshold = config.tol * tau0;
    let mut iterations = 0;
    let mut breakdown = None;

    if tau0 > threshold && r0w == 0.0 {
        return Ok(finish(
            world, a, b, x, tau0, tau, config.tol, 0, history,
            warnings.entries, Some("<r0, w> = 0 at initialization".into()),
        ));
    }
    let mut alpha = if tau0 == 0.0 { 0.0 } else { rho / r0w };
    let mut beta = 0.0;
    let mut omega = 0.0;

    let zeros = vec![0.0; n];
    let mut p_hat = zeros.clone();
    let mut s = zeros.clone();
    let mut s_hat = zeros.clone();
    let mut z = zeros.clone();
    let mut z_hat = zeros.clone();
    let mut v = zeros.clone();

    while tau > threshold && iterations < config.max_iters {
        let j = iterations;
        // Recurrence updates, two fma roundings per element each.
        let mut p_hat_next = vec![0.0; n];
        axpy2like(beta, omega, &r_hat, &p_hat, &s_hat, &mut p_hat_next);
        let mut s_next = vec![0.0; n];
        axpy2like(beta, omega, &w, &s, &z, &mut s_next);
        let mut s_hat_next = vec![0.0; n];
        axpy2like(beta, omega, &w_hat, &s_hat, &z_hat, &mut s_hat_next);
        let mut z_next = vec![0.0; n];
        axpy2like(beta, omega, &t, &z, &v, &mut z_next);
        p_hat = p_hat_next;
        s = s_next;
        s_hat = s_hat_next;
        z = z_next;
        // Preconditioned directions and their images.
        let mut q = vec![0.0; n];
        axpylike(-alpha, &r, &s, &mut q);
        let mut q_hat = vec![0.0; n];
        axpylike(-alpha, &r_hat, &s_hat, &mut q_hat);
        let mut y = vec![0.0; n];
        axpylike(-alpha, &w, &z, &mut y);
        // Start the first reduction round.
        let pending = split_allreduce_begin(world, &[(&q, &y), (&y, &y)]);
        // These products overlap the in-flight reduction.
        z_hat = precond.apply(&z);
        v = distributed_spmv(world, a, &z_hat);
        // Finish the first round.
        let d = pending.wait();
        warnings.absorb(j, "first split reduction", &d);
        let (qy, yy) = (d.values[0], d.values[1]);
        if yy == 0.0 {
            if q.iter().all(|&e| e == 0.0) {
                axpy(alpha, &p_hat, &mut x);
                tau = 0.0;
                iterations = j + 1;
                history.push((iterations, 0.0));
                break;
            }
            breakdown = Some("<y, y> = 0".into());
            break;
        }
        omega = qy / yy;
        // Solution update: two axpy in the written order.
        axpy(alpha, &p_hat, &mut x);
        axpy(omega, &q_hat, &mut x);
        // Residual recurrences.
        let mut r_next = vec![0.0; n];
        axpylike(-omega, &q, &y, &mut r_next);
        let mut r_hat_next = vec![0.0; n];
        axpy2like(-omega, alpha, &q_hat, &w_hat, &z_hat, &mut r_hat_next);
        let mut w_next = vec![0.0; n];
        axpy2like(-omega, alpha, &y, &t, &v, &mut w_next);
        r = r_next;
        r_hat = r_hat_next;
        // Second reduction round; the residual norm dot is batched in.
        let pending = split_allreduce_begin(
            world,
            &[(&r0, &r), (&r0, &w_next), (&r0, &s), (&r0, &z), (&r, &r)],
        );
        // More recurrences overlap the in-flight reduction.
        let w_hat_next = precond.apply(&w_next);
        let t_next = distributed_spmv(world, a, &w_hat_next);
        // Finish the second round.
        let d = pending.wait();
        warnings.absorb(j, "second split reduction", &d);
        let (r0r, r0w, r0s, r0z, rr) =
            (d.values[0], d.values[1], d.values[2], d.values[3], d.values[4]);
        w = w_next;
        w_hat = w_hat_next;
        t = t_next;
        tau = rr.sqrt();
        iterations = j + 1;
        history.push((iterations, tau));
        if tau <= threshold {
            break;
        }
        if rho == 0.0 {
            breakdown = Some("<r0, r> = 0".into());
            break;
        }
        if omega == 0.0 {
            breakdown = Some("omega = 0".into());
            break;
        }
        beta = (r0r / rho) * (alpha / omega);
        let denom = r0w + beta * r0s - beta * omega * r0z;
        if denom == 0.0 {
            breakdown = Some("alpha denominator = 0".into());
            break;
        }
        alpha = r0r / denom;
        rho = r0r;
    }

    Ok(finish(
        world, a, b, x, tau0, tau, config.tol, iterations, history,
        warnings.entries, breakdown,
    ))
}

/// Dispatch on the configured variant.
pub fn solve(
    world: &RankWorld,
    a: &CsrMatrix,
    b: &[f64],
    config: &SolverConfig,
) -> Result<SolveReport, SolverError> {
    match config.variant {
        SolverVariant::Standard => pbicgstab(world, a, b, config),
        SolverVariant::Pipelined => pipelined_pbicgstab(world, a, b, config),
    }
}
