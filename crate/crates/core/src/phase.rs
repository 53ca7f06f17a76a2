//! Surface phase optimization.
//!
//! Each far-field user's average desired-signal strength is a Hermitian
//! quadratic form `u^H R_k u` in the per-element phasors `u_n = e^{-j
//! theta_n}`. The optimizer lifts `u` to a unit-diagonal PSD matrix,
//! maximizes the worst user's form, and drives the lifted matrix back to
//! rank one with a progressively weighted eigenvector penalty. A cheap
//! single-user alignment heuristic and an exhaustive grid search over
//! quantized phases are provided as baselines.

use crate::channel::ChannelSet;
use crate::conic::{Aff, ConicProgram};
use crate::config::SolverConfig;
use crate::error::Error;
use crate::precoding::VrAssignment;
use crate::{C64, CMat, Result};
use nalgebra::DVector;

/// Quadratic-form matrices, one per far-field user, in physical scale.
pub fn build_r(ch: &ChannelSet, vr: &VrAssignment) -> Result<Vec<CMat>> {
    vr.validate()?;
    let cfg = &ch.cfg;
    if cfg.k_ff == 0 {
        return Err(Error::InvalidConfig("no far-field users to optimize phases for".into()));
    }
    let n = cfg.n();
    let ms = cfg.m_sub() as f64;
    let a2 = cfg.alpha2().powi(2);
    let b2 = cfg.beta2().powi(2);
    let b_in = ch.b_in();
    let mut out = Vec::with_capacity(cfg.k_ff);
    for k in 0..cfg.k_ff {
        let active = vr.ff_subarrays(k).len() as f64;
        let h = &ch.ff[k];
        // rank-one part diag(h^H) b b^H diag(h), plus the diffuse diagonal
        let mut r = CMat::zeros(n, n);
        for i in 0..n {
            for j in 0..n {
                r[(i, j)] = h[i].conj() * b_in[i] * b_in[j].conj() * h[j] * a2;
            }
            r[(i, i)] += C64::from(b2 * h[i].norm_sqr());
        }
        r.scale_mut(ms * active);
        out.push(r);
    }
    Ok(out)
}

/// Per-user values of the quadratic forms at a phase profile.
pub fn f_values(r: &[CMat], theta: &DVector<f64>) -> Vec<f64> {
    let u = DVector::from_fn(theta.len(), |n, _| C64::cis(-theta[n]));
    r.iter().map(|rk| (u.adjoint() * rk * &u)[(0, 0)].re).collect()
}

/// Worst-user value of the quadratic forms at a phase profile.
pub fn f_min(r: &[CMat], theta: &DVector<f64>) -> f64 {
    f_values(r, theta).into_iter().fold(f64::INFINITY, f64::min)
}

/// Phases aligning far-field user `k`'s cascaded link: every per-element
/// contribution to `b^H (u o h_k)` is rotated onto the positive real axis.
pub fn heuristic_phases(ch: &ChannelSet, k: usize) -> DVector<f64> {
    let b_in = ch.b_in();
    DVector::from_fn(ch.cfg.n(), |n, _| (b_in[n].conj() * ch.ff[k][n]).arg())
}

/// One progress row per inner solve.
#[derive(Clone, Copy, Debug, serde::Serialize)]
pub struct PhaseTraceRow {
    pub outer: usize,
    pub inner: usize,
    pub penalty: f64,
    /// Worst-user relaxation value, physical scale.
    pub objective: f64,
    /// Penalized objective in solver scale; non-decreasing within one outer
    /// round.
    pub penalized: f64,
    pub lambda_max: f64,
    /// Distance from rank one, `N - lambda_max`.
    pub residual: f64,
}

/// Outcome of the penalty loop.
#[derive(Clone, Debug)]
pub struct PhaseResult {
    pub theta: DVector<f64>,
    /// Worst-user quadratic form at the extracted phases, physical scale.
    pub objective: f64,
    /// Final relaxation value, physical scale; upper-bounds `objective`.
    pub relaxation: f64,
    /// Rank-one residual `N - lambda_max` of the final lifted matrix.
    pub residual: f64,
    /// Second-to-first eigenvalue ratio of the final lifted matrix.
    pub rank_gap: f64,
    /// Number of penalty-weight increases performed.
    pub outer_scalings: usize,
    pub total_inner: usize,
    pub trace: Vec<PhaseTraceRow>,
}

/// Variable layout of the lifted SDP: the worst-user bound, then the real
/// and imaginary parts of each strict upper-triangle entry.
struct Lift {
    n: usize,
    pairs: Vec<(usize, usize)>,
}

impl Lift {
    fn new(n: usize) -> Self {
        let mut pairs = Vec::with_capacity(n * (n - 1) / 2);
        for i in 0..n {
            for j in (i + 1)..n {
                pairs.push((i, j));
            }
        }
        Lift { n, pairs }
    }

    fn num_vars(&self) -> usize {
        1 + 2 * self.pairs.len()
    }

    fn re_var(&self, p: usize) -> usize {
        1 + 2 * p
    }

    fn im_var(&self, p: usize) -> usize {
        2 + 2 * p
    }

    /// Constraint template shared by every inner solve: worst-user bound
    /// rows and the realified PSD block with unit diagonal.
    fn template(&self, r_hat: &[CMat]) -> ConicProgram {
        let n = self.n;
        let mut prog = ConicProgram::new(self.num_vars());
        prog.add_cost(0, -1.0);
        for rk in r_hat {
            let mut expr = Aff::constant((0..n).map(|i| rk[(i, i)].re).sum());
            for (p, &(i, j)) in self.pairs.iter().enumerate() {
                expr = expr
                    .push(self.re_var(p), 2.0 * rk[(i, j)].re)
                    .push(self.im_var(p), 2.0 * rk[(i, j)].im);
            }
            expr = expr.push(0, -1.0);
            prog.require_nonneg(expr);
        }
        let mut terms = Vec::with_capacity(2 * self.pairs.len());
        for (p, &(i, j)) in self.pairs.iter().enumerate() {
            terms.push((self.re_var(p), vec![(i, j, 1.0), (n + i, n + j, 1.0)]));
            terms.push((self.im_var(p), vec![(i, n + j, -1.0), (j, n + i, 1.0)]));
        }
        let constant: Vec<(usize, usize, f64)> = (0..2 * n).map(|d| (d, d, 1.0)).collect();
        prog.require_psd_sparse(2 * n, &terms, &constant);
        prog
    }

    /// Rebuild the Hermitian lifted matrix from a solver point.
    fn unpack(&self, x: &[f64]) -> CMat {
        let mut v = CMat::identity(self.n, self.n);
        for (p, &(i, j)) in self.pairs.iter().enumerate() {
            let e = C64::new(x[self.re_var(p)], x[self.im_var(p)]);
            v[(i, j)] = e;
            v[(j, i)] = e.conj();
        }
        v
    }
}

/// One lifted solve with eigenvector penalty `rho * u_hat^H V u_hat`.
fn solve_inner(
    lift: &Lift,
    template: &ConicProgram,
    u_hat: &crate::CVec,
    rho: f64,
) -> Result<(CMat, f64)> {
    let mut prog = template.clone();
    for (p, &(i, j)) in lift.pairs.iter().enumerate() {
        let c = u_hat[i].conj() * u_hat[j];
        prog.add_cost(lift.re_var(p), -rho * 2.0 * c.re);
        prog.add_cost(lift.im_var(p), rho * 2.0 * c.im);
    }
    let sol = prog.solve("phase lifted subproblem")?;
    if !sol.status.is_optimal() {
        return Err(Error::SolverFailure {
            status: format!("{:?}", sol.status),
            context: "phase lifted subproblem".into(),
        });
    }
    Ok((lift.unpack(&sol.x), sol.x[0]))
}

/// Maximize the worst far-field user's quadratic form over unit-modulus
/// phases. The lifted matrices are normalized internally so the penalty
/// schedule in `solver` is scale-free; all reported objectives are physical.
pub fn optimize_phases(ch: &ChannelSet, vr: &VrAssignment, solver: &SolverConfig) -> Result<PhaseResult> {
    let r = build_r(ch, vr)?;
    let n = ch.cfg.n();
    if n == 1 {
        // a single element only contributes a global phase
        return Ok(PhaseResult {
            theta: DVector::zeros(1),
            objective: f_min(&r, &DVector::zeros(1)),
            relaxation: f_min(&r, &DVector::zeros(1)),
            residual: 0.0,
            rank_gap: 0.0,
            outer_scalings: 0,
            total_inner: 0,
            trace: Vec::new(),
        });
    }
    let scale = r.iter().map(|rk| rk.trace().re).sum::<f64>() / (r.len() as f64 * n as f64);
    if !(scale > 0.0) {
        return Err(Error::InvalidConfig(format!("degenerate quadratic forms, trace scale {scale}")));
    }
    let r_hat: Vec<CMat> = r.iter().map(|rk| rk.unscale(scale)).collect();

    let lift = Lift::new(n);
    let template = lift.template(&r_hat);

    // deterministic warm eigenvector: principal direction of the summed forms
    let mut sum = CMat::zeros(n, n);
    for rk in &r_hat {
        sum += rk;
    }
    let mut u_hat = principal_eigvec(&sum).1;

    let mut rho = solver.penalty_init;
    let mut trace = Vec::new();
    let mut total_inner = 0;
    let mut outer_scalings = 0;
    let mut v = CMat::identity(n, n);
    let mut t = 0.0;
    loop {
        let mut prev_pen = f64::NEG_INFINITY;
        for inner in 0..solver.max_inner {
            let (vi, ti) = solve_inner(&lift, &template, &u_hat, rho)?;
            let (lam, vec) = principal_eigvec(&vi);
            let pen = ti + rho * lam;
            if pen < prev_pen - 1e-8 * (1.0 + prev_pen.abs()) {
                return Err(Error::SolverFailure {
                    status: format!("penalized objective fell from {prev_pen} to {pen}"),
                    context: "phase penalty inner loop".into(),
                });
            }
            v = vi;
            t = ti;
            u_hat = vec;
            total_inner += 1;
            trace.push(PhaseTraceRow {
                outer: outer_scalings,
                inner,
                penalty: rho,
                objective: t * scale,
                penalized: pen,
                lambda_max: lam,
                residual: n as f64 - lam,
            });
            let done = pen - prev_pen <= 1e-6 * (1.0 + pen.abs());
            prev_pen = pen;
            if done {
                break;
            }
        }
        let lam = principal_eigvec(&v).0;
        if n as f64 - lam <= solver.phase_eps {
            break;
        }
        if outer_scalings >= solver.max_outer {
            return Err(Error::NoConvergence {
                context: "phase penalty loop".into(),
                iterations: total_inner,
                residual: n as f64 - lam,
            });
        }
        rho *= solver.penalty_scale;
        outer_scalings += 1;
    }

    let eig = v.clone().symmetric_eigen();
    let mut lams: Vec<f64> = eig.eigenvalues.iter().copied().collect();
    lams.sort_by(|a, b| b.partial_cmp(a).unwrap());
    let rank_gap = if lams[0] > 0.0 { lams[1].max(0.0) / lams[0] } else { 1.0 };
    let u = principal_eigvec(&v).1;
    // anchor the free global phase so element 0 comes out at zero
    let anchor = u[0] / C64::from(u[0].norm().max(1e-300));
    let theta = DVector::from_fn(n, |i, _| -(u[i] * anchor.conj()).arg());
    Ok(PhaseResult {
        theta: theta.clone(),
        objective: f_min(&r, &theta),
        relaxation: t * scale,
        residual: n as f64 - lams[0],
        rank_gap,
        outer_scalings,
        total_inner,
        trace,
    })
}

/// Largest eigenvalue and a unit eigenvector of a Hermitian matrix.
fn principal_eigvec(v: &CMat) -> (f64, crate::CVec) {
    let eig = v.clone().symmetric_eigen();
    let mut best = 0;
    for i in 1..eig.eigenvalues.len() {
        if eig.eigenvalues[i] > eig.eigenvalues[best] {
            best = i;
        }
    }
    (eig.eigenvalues[best], eig.eigenvectors.column(best).into_owned())
}

/// Exhaustive search over `levels` uniformly quantized phases per element,
/// maximizing the worst-user form. Element 0 is pinned to zero phase, which
/// costs nothing by global-phase invariance. Only viable for tiny surfaces.
pub fn grid_search(r: &[CMat], levels: usize) -> (DVector<f64>, f64) {
    let n = r[0].nrows();
    assert!(n >= 1 && levels >= 1);
    let free = n - 1;
    let combos = levels.pow(free as u32);
    let mut best_theta = DVector::zeros(n);
    let mut best = f_min(r, &best_theta);
    let step = std::f64::consts::TAU / levels as f64;
    for combo in 0..combos {
        let mut theta = DVector::zeros(n);
        let mut rem = combo;
        for e in 0..free {
            theta[e + 1] = (rem % levels) as f64 * step;
            rem /= levels;
        }
        let val = f_min(r, &theta);
        if val > best {
            best = val;
            best_theta = theta;
        }
    }
    (best_theta, best)
}
