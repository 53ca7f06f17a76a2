//! Thin conic-programming layer over the interior-point backend.
//!
//! Problems are stated as "this affine expression lives in that cone":
//! minimize `c^T x` subject to each registered expression block lying in its
//! zero, nonnegative, second-order, PSD-triangle, or exponential cone. The
//! builder keeps rows in registration order, packs them into the backend's
//! `Ax + s = b` form, and maps termination codes onto [`SolveStatus`].
//! Infeasibility is reported as a status, not an error, so callers can react
//! to it (dropping rate floors, say); numerical breakdowns become
//! [`Error::SolverFailure`].

use crate::error::Error;
use crate::Result;
use clarabel::algebra::CscMatrix;
use clarabel::solver::{
    DefaultSettings, DefaultSolver, IPSolver, SolverStatus, SupportedConeT,
};
use nalgebra::DMatrix;

/// Affine expression `constant + sum coeff * x_var`.
#[derive(Clone, Debug, Default)]
pub struct Aff {
    pub constant: f64,
    pub terms: Vec<(usize, f64)>,
}

impl Aff {
    pub fn constant(c: f64) -> Self {
        Aff { constant: c, terms: Vec::new() }
    }

    pub fn var(j: usize) -> Self {
        Aff { constant: 0.0, terms: vec![(j, 1.0)] }
    }

    pub fn scaled_var(j: usize, coeff: f64) -> Self {
        Aff { constant: 0.0, terms: vec![(j, coeff)] }
    }

    pub fn new(constant: f64, terms: Vec<(usize, f64)>) -> Self {
        Aff { constant, terms }
    }

    /// Append `coeff * x_var`.
    pub fn push(mut self, var: usize, coeff: f64) -> Self {
        self.terms.push((var, coeff));
        self
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        self.constant + self.terms.iter().map(|&(j, c)| c * x[j]).sum::<f64>()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Block {
    Zero(usize),
    NonNeg(usize),
    Soc(usize),
    /// Matrix side length; occupies `side (side + 1) / 2` rows.
    Psd(usize),
    Exp,
}

/// Termination condition of one solve.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SolveStatus {
    Optimal,
    /// Converged at reduced accuracy.
    AlmostOptimal,
    Infeasible,
    Unbounded,
}

impl SolveStatus {
    pub fn is_optimal(self) -> bool {
        matches!(self, SolveStatus::Optimal | SolveStatus::AlmostOptimal)
    }
}

/// Primal solution and convergence diagnostics.
#[derive(Clone, Debug)]
pub struct SolveResult {
    pub status: SolveStatus,
    pub x: Vec<f64>,
    pub obj: f64,
    pub obj_dual: f64,
    pub r_prim: f64,
    pub r_dual: f64,
    pub iterations: u32,
    pub solve_time: f64,
}

/// Cone-constrained linear program under construction.
#[derive(Clone, Debug, Default)]
pub struct ConicProgram {
    num_vars: usize,
    cost: Vec<f64>,
    rows: Vec<Aff>,
    blocks: Vec<Block>,
    accuracy: Option<f64>,
}

impl ConicProgram {
    pub fn new(num_vars: usize) -> Self {
        ConicProgram {
            num_vars,
            cost: vec![0.0; num_vars],
            rows: Vec::new(),
            blocks: Vec::new(),
            accuracy: None,
        }
    }

    /// Relax the interior-point stopping tolerances (feasibility and gap)
    /// from their defaults. Iterates near a degenerate boundary can lose
    /// precision in the final refinement steps, so problems that only need
    /// moderate accuracy should stop before that regime.
    pub fn set_accuracy(&mut self, tol: f64) {
        self.accuracy = Some(tol);
    }

    pub fn num_vars(&self) -> usize {
        self.num_vars
    }

    pub fn num_rows(&self) -> usize {
        self.rows.len()
    }

    /// Add `coeff * x_var` to the minimized objective.
    pub fn add_cost(&mut self, var: usize, coeff: f64) {
        self.cost[var] += coeff;
    }

    /// Constrain `expr(x) = 0`.
    pub fn require_zero(&mut self, expr: Aff) {
        self.rows.push(expr);
        self.blocks.push(Block::Zero(1));
    }

    /// Constrain `expr(x) >= 0`.
    pub fn require_nonneg(&mut self, expr: Aff) {
        self.rows.push(expr);
        self.blocks.push(Block::NonNeg(1));
    }

    /// Constrain `lhs(x) <= rhs(x)`.
    pub fn require_le(&mut self, lhs: Aff, rhs: Aff) {
        let mut expr = rhs;
        expr.constant -= lhs.constant;
        for (j, c) in lhs.terms {
            expr.terms.push((j, -c));
        }
        self.require_nonneg(expr);
    }

    /// Constrain `||(e_2, ..., e_d)|| <= e_1` for the given expressions.
    pub fn require_soc(&mut self, exprs: Vec<Aff>) {
        assert!(exprs.len() >= 2, "second-order cone needs a bound and at least one component");
        self.blocks.push(Block::Soc(exprs.len()));
        self.rows.extend(exprs);
    }

    /// Constrain `e_2 * exp(e_1 / e_2) <= e_3` with `e_2 > 0`.
    pub fn require_exp(&mut self, exprs: [Aff; 3]) {
        self.blocks.push(Block::Exp);
        self.rows.extend(exprs);
    }

    /// Constrain `constant + sum x_var F_var` to be positive semidefinite.
    /// All matrices must be symmetric with the given side length.
    pub fn require_psd(&mut self, side: usize, terms: &[(usize, DMatrix<f64>)], constant: &DMatrix<f64>) {
        assert_eq!(constant.nrows(), side);
        assert_eq!(constant.ncols(), side);
        let upper = |m: &DMatrix<f64>| {
            let mut t = Vec::new();
            for col in 0..side {
                for row in 0..=col {
                    if m[(row, col)] != 0.0 {
                        t.push((row, col, m[(row, col)]));
                    }
                }
            }
            t
        };
        let sparse: Vec<(usize, Vec<(usize, usize, f64)>)> =
            terms.iter().map(|(j, f)| (*j, upper(f))).collect();
        self.require_psd_sparse(side, &sparse, &upper(constant));
    }

    /// Sparse form of [`require_psd`](Self::require_psd): each matrix is
    /// given by its upper-triangle entries `(row, col, value)` with
    /// `row <= col`; the lower triangle is implied by symmetry.
    pub fn require_psd_sparse(
        &mut self,
        side: usize,
        terms: &[(usize, Vec<(usize, usize, f64)>)],
        constant: &[(usize, usize, f64)],
    ) {
        let rt2 = std::f64::consts::SQRT_2;
        let tri = side * (side + 1) / 2;
        let idx = |row: usize, col: usize| {
            assert!(row <= col && col < side, "entry ({row}, {col}) not in the upper triangle");
            col * (col + 1) / 2 + row
        };
        let scale = |row: usize, col: usize| if row == col { 1.0 } else { rt2 };
        let mut block = vec![Aff::default(); tri];
        for &(row, col, v) in constant {
            block[idx(row, col)].constant += scale(row, col) * v;
        }
        for (j, entries) in terms {
            for &(row, col, v) in entries {
                block[idx(row, col)].terms.push((*j, scale(row, col) * v));
            }
        }
        self.rows.extend(block);
        self.blocks.push(Block::Psd(side));
    }

    /// One-line problem statistics, handy in failure contexts.
    pub fn dump(&self) -> String {
        let mut zero = 0;
        let mut nonneg = 0;
        let mut soc = 0;
        let mut psd = 0;
        let mut exp = 0;
        for b in &self.blocks {
            match b {
                Block::Zero(_) => zero += 1,
                Block::NonNeg(_) => nonneg += 1,
                Block::Soc(_) => soc += 1,
                Block::Psd(_) => psd += 1,
                Block::Exp => exp += 1,
            }
        }
        format!(
            "{} vars, {} rows ({} eq, {} ineq, {} soc, {} psd, {} exp blocks)",
            self.num_vars,
            self.rows.len(),
            zero,
            nonneg,
            soc,
            psd,
            exp
        )
    }

    /// Solve the assembled program. `context` labels any failure report.
    pub fn solve(&self, context: &str) -> Result<SolveResult> {
        let m = self.rows.len();
        let n = self.num_vars;

        // s = b - Ax must equal the stacked expressions, so A carries the
        // negated coefficients and b the constants
        let mut triplets: Vec<(usize, usize, f64)> = Vec::new();
        let mut b = vec![0.0; m];
        for (r, expr) in self.rows.iter().enumerate() {
            b[r] = expr.constant;
            for &(j, c) in &expr.terms {
                assert!(j < n, "variable {j} out of range in row {r}");
                if c != 0.0 {
                    triplets.push((r, j, -c));
                }
            }
        }
        triplets.sort_by_key(|&(r, j, _)| (j, r));
        let mut colptr = vec![0usize; n + 1];
        let mut rowval = Vec::with_capacity(triplets.len());
        let mut nzval = Vec::with_capacity(triplets.len());
        {
            let mut idx = 0;
            for j in 0..n {
                colptr[j] = rowval.len();
                while idx < triplets.len() && triplets[idx].1 == j {
                    // merge duplicate coordinates instead of trusting the
                    // backend to accept them
                    let (r, _, v) = triplets[idx];
                    if rowval.last() == Some(&r) && colptr[j] < rowval.len() {
                        *nzval.last_mut().unwrap() += v;
                    } else {
                        rowval.push(r);
                        nzval.push(v);
                    }
                    idx += 1;
                }
            }
            colptr[n] = rowval.len();
        }
        let a = CscMatrix::new(m, n, colptr, rowval, nzval);
        let p = CscMatrix::zeros((n, n));

        let cones: Vec<SupportedConeT<f64>> = self
            .blocks
            .iter()
            .map(|blk| match blk {
                Block::Zero(d) => SupportedConeT::ZeroConeT(*d),
                Block::NonNeg(d) => SupportedConeT::NonnegativeConeT(*d),
                Block::Soc(d) => SupportedConeT::SecondOrderConeT(*d),
                Block::Psd(side) => SupportedConeT::PSDTriangleConeT(*side),
                Block::Exp => SupportedConeT::ExponentialConeT(),
            })
            .collect();

        let mut settings = DefaultSettings {
            verbose: std::env::var_os("XLRIS_SOLVER_VERBOSE").is_some(),
            ..DefaultSettings::default()
        };
        if let Some(tol) = self.accuracy {
            settings.tol_feas = tol;
            settings.tol_gap_abs = tol;
            settings.tol_gap_rel = tol;
        }
        let mut solver = DefaultSolver::new(&p, &self.cost, &a, &b, &cones, settings)
            .map_err(|e| Error::SolverFailure {
                status: format!("setup: {e}"),
                context: format!("{context} [{}]", self.dump()),
            })?;
        solver.solve();
        let sol = &solver.solution;
        let status = match sol.status {
            SolverStatus::Solved => SolveStatus::Optimal,
            SolverStatus::AlmostSolved => SolveStatus::AlmostOptimal,
            SolverStatus::PrimalInfeasible | SolverStatus::AlmostPrimalInfeasible => {
                SolveStatus::Infeasible
            }
            SolverStatus::DualInfeasible | SolverStatus::AlmostDualInfeasible => {
                SolveStatus::Unbounded
            }
            other => {
                return Err(Error::SolverFailure {
                    status: format!("{other:?}"),
                    context: format!("{context} [{}]", self.dump()),
                })
            }
        };
        Ok(SolveResult {
            status,
            x: sol.x.clone(),
            obj: sol.obj_val,
            obj_dual: sol.obj_val_dual,
            r_prim: sol.r_prim,
            r_dual: sol.r_dual,
            iterations: sol.iterations,
            solve_time: sol.solve_time,
        })
    }
}

/// Real symmetric embedding of a Hermitian matrix: `H >= 0` in the complex
/// sense exactly when `[[Re H, -Im H], [Im H, Re H]] >= 0` in the real
/// sense, and real eigenvalues appear twice.
pub fn realify_hermitian(h: &crate::CMat) -> DMatrix<f64> {
    let n = h.nrows();
    assert_eq!(h.ncols(), n);
    let mut out = DMatrix::zeros(2 * n, 2 * n);
    for i in 0..n {
        for j in 0..n {
            let v = h[(i, j)];
            out[(i, j)] = v.re;
            out[(n + i, n + j)] = v.re;
            out[(i, n + j)] = -v.im;
            out[(n + i, j)] = v.im;
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::C64;

    #[test]
    fn bounded_lp_hits_the_vertex() {
        // maximize x subject to x <= 3
        let mut p = ConicProgram::new(1);
        p.add_cost(0, -1.0);
        p.require_le(Aff::var(0), Aff::constant(3.0));
        let r = p.solve("lp").unwrap();
        assert_eq!(r.status, SolveStatus::Optimal);
        assert!((r.x[0] - 3.0).abs() < 1e-7, "x = {}", r.x[0]);
        assert!((r.obj + 3.0).abs() < 1e-7);
        assert!(r.r_prim < 1e-6);
        assert!((r.obj - r.obj_dual).abs() < 1e-6 * (1.0 + r.obj.abs()));
    }

    #[test]
    fn equality_and_sign_constraints_compose() {
        // minimize x + 2y subject to x + y = 1, x >= 0, y >= 0
        let mut p = ConicProgram::new(2);
        p.add_cost(0, 1.0);
        p.add_cost(1, 2.0);
        p.require_zero(Aff::constant(-1.0).push(0, 1.0).push(1, 1.0));
        p.require_nonneg(Aff::var(0));
        p.require_nonneg(Aff::var(1));
        let r = p.solve("eq-lp").unwrap();
        assert!((r.x[0] - 1.0).abs() < 1e-7);
        assert!(r.x[1].abs() < 1e-7);
    }

    #[test]
    fn second_order_cone_caps_the_norm() {
        // maximize x + y subject to ||(x, y)|| <= sqrt(2): optimum at (1, 1)
        let mut p = ConicProgram::new(2);
        p.add_cost(0, -1.0);
        p.add_cost(1, -1.0);
        p.require_soc(vec![Aff::constant(2f64.sqrt()), Aff::var(0), Aff::var(1)]);
        let r = p.solve("soc").unwrap();
        assert!((r.x[0] - 1.0).abs() < 1e-6);
        assert!((r.x[1] - 1.0).abs() < 1e-6);
    }

    #[test]
    fn psd_constraint_recovers_the_largest_eigenvalue() {
        // minimize t subject to t I - A >= 0 with A = [[2, 1], [1, 2]]
        let a = DMatrix::from_row_slice(2, 2, &[2.0, 1.0, 1.0, 2.0]);
        let mut p = ConicProgram::new(1);
        p.add_cost(0, 1.0);
        p.require_psd(2, &[(0, DMatrix::identity(2, 2))], &(-a));
        let r = p.solve("psd").unwrap();
        assert!((r.x[0] - 3.0).abs() < 1e-6, "lambda_max = {}", r.x[0]);
    }

    #[test]
    fn realified_hermitian_psd_matches_complex_spectrum() {
        // [[2, i], [-i, 2]] has eigenvalues 1 and 3
        let h = crate::CMat::from_row_slice(
            2,
            2,
            &[
                C64::new(2.0, 0.0),
                C64::new(0.0, 1.0),
                C64::new(0.0, -1.0),
                C64::new(2.0, 0.0),
            ],
        );
        let hr = realify_hermitian(&h);
        let mut p = ConicProgram::new(1);
        p.add_cost(0, 1.0);
        p.require_psd(4, &[(0, DMatrix::identity(4, 4))], &(-hr));
        let r = p.solve("realified psd").unwrap();
        assert!((r.x[0] - 3.0).abs() < 1e-6, "lambda_max = {}", r.x[0]);
    }

    #[test]
    fn exponential_cone_pins_e() {
        // minimize z subject to exp(1) <= z
        let mut p = ConicProgram::new(1);
        p.add_cost(0, 1.0);
        p.require_exp([Aff::constant(1.0), Aff::constant(1.0), Aff::var(0)]);
        let r = p.solve("exp").unwrap();
        assert!(
            (r.x[0] - std::f64::consts::E).abs() < 1e-6,
            "z = {}",
            r.x[0]
        );
    }

    #[test]
    fn contradictory_bounds_report_infeasible_without_erroring() {
        let mut p = ConicProgram::new(1);
        p.require_nonneg(Aff::constant(-1.0).push(0, 1.0)); // x >= 1
        p.require_nonneg(Aff::constant(0.0).push(0, -1.0)); // x <= 0
        let r = p.solve("infeasible").unwrap();
        assert_eq!(r.status, SolveStatus::Infeasible);
    }

    #[test]
    fn repeated_solves_are_bitwise_identical() {
        let mut p = ConicProgram::new(2);
        p.add_cost(0, -1.0);
        p.add_cost(1, -0.5);
        p.require_soc(vec![Aff::constant(1.0), Aff::var(0), Aff::var(1)]);
        let a = p.solve("rep").unwrap();
        let b = p.solve("rep").unwrap();
        assert_eq!(a.x, b.x);
        assert_eq!(a.obj.to_bits(), b.obj.to_bits());
    }

    #[test]
    fn duplicate_coordinates_are_merged() {
        // x appears twice in the same row: 0.5 x + 0.5 x <= 3
        let mut p = ConicProgram::new(1);
        p.add_cost(0, -1.0);
        p.require_nonneg(Aff::constant(3.0).push(0, -0.5).push(0, -0.5));
        let r = p.solve("dups").unwrap();
        assert!((r.x[0] - 3.0).abs() < 1e-6);
    }
}
