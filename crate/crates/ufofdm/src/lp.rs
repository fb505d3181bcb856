//! Dense linear programming via a homogeneous self-dual interior-point
//! method (Mehrotra predictor-corrector), with no external solver.
//!
//! Problems arrive in inequality form
//!
//!   minimize    c'x
//!   subject to  A_ub x <= b_ub,  A_eq x = b_eq,  x_i >= l_i (optional)
//!
//! Variables without a lower bound are handled natively: they simply carry
//! no complementarity pair. The homogeneous embedding makes infeasibility
//! and unboundedness certifiable (Farkas vector / improving ray) instead of
//! heuristic. Each Newton step factors the regularized augmented system in
//! the original variables and the row duals; inequality slacks are folded
//! into their own rows beforehand, so the extreme barrier weights stay on
//! the diagonal where they cannot amplify roundoff.

use crate::error::{Error, Result};

/// Dense row-major matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn from_rows(rows: Vec<Vec<f64>>) -> Result<Self> {
        let nrows = rows.len();
        let ncols = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != ncols) {
            return Err(Error::Parameter("ragged matrix rows".into()));
        }
        let data: Vec<f64> = rows.into_iter().flatten().collect();
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::Parameter("non-finite matrix entry".into()));
        }
        Ok(Self {
            rows: nrows,
            cols: ncols,
            data,
        })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols + j]
    }

    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.data[i * self.cols + j] = v;
    }

    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        if self.rows == 0 {
            return Vec::new();
        }
        assert_eq!(x.len(), self.cols);
        (0..self.rows)
            .map(|i| dot(self.row(i), x))
            .collect()
    }

    pub fn tr_matvec(&self, y: &[f64]) -> Vec<f64> {
        assert_eq!(y.len(), self.rows);
        let mut out = vec![0.0; self.cols];
        for i in 0..self.rows {
            let row = self.row(i);
            let yi = y[i];
            if yi != 0.0 {
                for (o, &a) in out.iter_mut().zip(row) {
                    *o += yi * a;
                }
            }
        }
        out
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, v| m.max(v.abs()))
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm2(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// Standard-form container: min c'x, A_ub x <= b_ub, A_eq x = b_eq, with
/// per-variable optional lower bounds (None = free variable).
#[derive(Debug, Clone)]
pub struct LinearProgram {
    pub objective: Vec<f64>,
    pub a_ub: Matrix,
    pub b_ub: Vec<f64>,
    pub a_eq: Matrix,
    pub b_eq: Vec<f64>,
    pub lower_bounds: Vec<Option<f64>>,
}

impl LinearProgram {
    pub fn num_vars(&self) -> usize {
        self.objective.len()
    }

    fn validate(&self) -> Result<()> {
        let n = self.num_vars();
        if self.a_ub.cols() != n && self.a_ub.rows() > 0 {
            return Err(Error::Parameter("A_ub column count mismatch".into()));
        }
        if self.a_eq.cols() != n && self.a_eq.rows() > 0 {
            return Err(Error::Parameter("A_eq column count mismatch".into()));
        }
        if self.a_ub.rows() != self.b_ub.len() || self.a_eq.rows() != self.b_eq.len() {
            return Err(Error::Parameter("rhs length mismatch".into()));
        }
        if self.lower_bounds.len() != n {
            return Err(Error::Parameter("lower_bounds length mismatch".into()));
        }
        let finite = self.objective.iter().all(|v| v.is_finite())
            && self.b_ub.iter().all(|v| v.is_finite())
            && self.b_eq.iter().all(|v| v.is_finite())
            && self.lower_bounds.iter().flatten().all(|v| v.is_finite());
        if !finite {
            return Err(Error::Parameter("non-finite problem data".into()));
        }
        Ok(())
    }

    /// Largest magnitude among the problem data; residual contracts scale by it.
    pub fn scale(&self) -> f64 {
        let mut s = 0.0f64;
        for v in self
            .objective
            .iter()
            .chain(&self.b_ub)
            .chain(&self.b_eq)
            .chain(self.lower_bounds.iter().flatten())
        {
            s = s.max(v.abs());
        }
        s.max(self.a_ub.max_abs()).max(self.a_eq.max_abs())
    }

    /// Writes the problem in CPLEX LP text format for external cross-checks.
    pub fn write_lp_text(&self, out: &mut dyn std::io::Write) -> Result<()> {
        writeln!(out, "\\ inequality-form LP dump")?;
        writeln!(out, "Minimize")?;
        write!(out, " obj:")?;
        for (j, &cj) in self.objective.iter().enumerate() {
            write!(out, " {} {} x{}", if cj < 0.0 { "-" } else { "+" }, cj.abs(), j + 1)?;
        }
        writeln!(out)?;
        writeln!(out, "Subject To")?;
        for i in 0..self.a_ub.rows() {
            write!(out, " r{}:", i + 1)?;
            for (j, &a) in self.a_ub.row(i).iter().enumerate() {
                if a != 0.0 {
                    write!(out, " {} {} x{}", if a < 0.0 { "-" } else { "+" }, a.abs(), j + 1)?;
                }
            }
            writeln!(out, " <= {}", self.b_ub[i])?;
        }
        for i in 0..self.a_eq.rows() {
            write!(out, " e{}:", i + 1)?;
            for (j, &a) in self.a_eq.row(i).iter().enumerate() {
                if a != 0.0 {
                    write!(out, " {} {} x{}", if a < 0.0 { "-" } else { "+" }, a.abs(), j + 1)?;
                }
            }
            writeln!(out, " = {}", self.b_eq[i])?;
        }
        writeln!(out, "Bounds")?;
        for (j, lb) in self.lower_bounds.iter().enumerate() {
            match lb {
                None => writeln!(out, " x{} free", j + 1)?,
                Some(l) => writeln!(out, " {} <= x{} <= +inf", l, j + 1)?,
            }
        }
        writeln!(out, "End")?;
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LpStatus {
    Optimal,
    Infeasible,
    Unbounded,
    MaxIters,
}

#[derive(Debug, Clone, Copy)]
pub struct LpResiduals {
    /// Largest violation of A_ub x <= b_ub / A_eq x = b_eq / bounds.
    pub primal: f64,
    /// Largest violation of dual feasibility (stationarity).
    pub dual: f64,
    /// Complementarity gap.
    pub gap: f64,
}

#[derive(Debug, Clone)]
pub struct LpSolution {
    pub status: LpStatus,
    pub x: Vec<f64>,
    pub objective: f64,
    pub dual_objective: f64,
    pub residuals: LpResiduals,
    pub iterations: usize,
    /// Farkas vector (infeasible) or improving ray (unbounded), in the
    /// original row/variable coordinates respectively.
    pub certificate: Option<Vec<f64>>,
}

/// Working state of the homogeneous embedding. `x` stacks the original
/// variables (bound-shifted) and the inequality slacks; `z` is its dual
/// partner, identically zero on free entries.
struct Hsd {
    x: Vec<f64>,
    y: Vec<f64>,
    z: Vec<f64>,
    tau: f64,
    kappa: f64,
}

struct Standardized<'a> {
    lp: &'a LinearProgram,
    n: usize,
    m_ub: usize,
    m_eq: usize,
    /// shift applied to bounded variables: x_orig = x_std + shift
    shift: Vec<f64>,
    /// is x_std[j] sign-constrained?
    positive: Vec<bool>,
    b_ub: Vec<f64>,
    b_eq: Vec<f64>,
}

impl<'a> Standardized<'a> {
    fn new(lp: &'a LinearProgram) -> Self {
        let n = lp.num_vars();
        let shift: Vec<f64> = lp.lower_bounds.iter().map(|l| l.unwrap_or(0.0)).collect();
        let positive: Vec<bool> = lp.lower_bounds.iter().map(Option::is_some).collect();
        let adjust = |mat: &Matrix, b: &[f64]| -> Vec<f64> {
            (0..mat.rows())
                .map(|i| b[i] - dot(mat.row(i), &shift))
                .collect()
        };
        let b_ub = adjust(&lp.a_ub, &lp.b_ub);
        let b_eq = adjust(&lp.a_eq, &lp.b_eq);
        Standardized {
            lp,
            n,
            m_ub: lp.a_ub.rows(),
            m_eq: lp.a_eq.rows(),
            shift,
            positive,
            b_ub,
            b_eq,
        }
    }

    fn total_vars(&self) -> usize {
        self.n + self.m_ub
    }

    fn is_positive(&self, j: usize) -> bool {
        if j < self.n {
            self.positive[j]
        } else {
            true // slack
        }
    }

    fn num_positive(&self) -> usize {
        self.positive.iter().filter(|p| **p).count() + self.m_ub
    }

    /// A_hat x for the embedded matrix [A_ub I; A_eq 0].
    fn a_matvec(&self, x: &[f64]) -> Vec<f64> {
        let xn = &x[..self.n];
        let s = &x[self.n..];
        let mut out = Vec::with_capacity(self.m_ub + self.m_eq);
        for i in 0..self.m_ub {
            out.push(dot(self.lp.a_ub.row(i), xn) + s[i]);
        }
        for i in 0..self.m_eq {
            out.push(dot(self.lp.a_eq.row(i), xn));
        }
        out
    }

    /// A_hat' y.
    fn at_matvec(&self, y: &[f64]) -> Vec<f64> {
        let y_ub = &y[..self.m_ub];
        let y_eq = &y[self.m_ub..];
        let mut out = vec![0.0; self.total_vars()];
        for i in 0..self.m_ub {
            let yi = y_ub[i];
            if yi != 0.0 {
                for (o, &a) in out[..self.n].iter_mut().zip(self.lp.a_ub.row(i)) {
                    *o += yi * a;
                }
            }
            out[self.n + i] = yi;
        }
        for i in 0..self.m_eq {
            let yi = y_eq[i];
            if yi != 0.0 {
                for (o, &a) in out[..self.n].iter_mut().zip(self.lp.a_eq.row(i)) {
                    *o += yi * a;
                }
            }
        }
        out
    }

    fn c_ext(&self) -> Vec<f64> {
        let mut c = self.lp.objective.clone();
        c.resize(self.total_vars(), 0.0);
        c
    }

    fn b_ext(&self) -> Vec<f64> {
        let mut b = self.b_ub.clone();
        b.extend_from_slice(&self.b_eq);
        b
    }
}

/// One Newton-system factorization: everything needed to solve
///   -D u + A_hat' v = r1,   A_hat u = r2
/// where D is diagonal (z/x on sign-constrained entries, 0 on free ones).
/// Only the slack primals are eliminated (through their own complementarity
/// rows); the augmented system in (u_x, v) is factored whole. Folding the
/// inequality block into the x-rows as A' D_s A looks cheaper but squares
/// the dynamic range of D_s, and once some d_s pass 1e12 the fold's huge
/// off-diagonal entries multiply O(1) components of u_x: the residual of
/// any double-precision solve then floors around eps * |K| * |u|, orders of
/// magnitude above what the interior-point step needs. In the augmented
/// form every extreme entry sits on the diagonal against a correspondingly
/// small solution component, so the floor is componentwise benign.
struct KktSolver<'a> {
    std: &'a Standardized<'a>,
    d: Vec<f64>,
    /// 1/d on the slack block (x_s / z_s).
    recip: Vec<f64>,
    reg: f64,
    lu: Lu,
}

impl<'a> KktSolver<'a> {
    fn new(std: &'a Standardized, d: &[f64]) -> Option<Self> {
        let n = std.n;
        let m_ub = std.m_ub;
        let m_eq = std.m_eq;
        let recip: Vec<f64> = d[n..].iter().map(|v| 1.0 / v).collect();
        if recip.iter().any(|v| !v.is_finite()) {
            return None;
        }
        // Proximal regularization sized on the constraint data, not on the
        // barrier diagonal: near a degenerate face the unregularized system
        // is singular along the optimal-face tangents, and a data-scale
        // perturbation bounds the direction there without distorting the
        // step elsewhere. The refinement in solve() targets the regularized
        // system, so this perturbation is deliberate, not a factorization
        // fudge.
        let reg = 1e-8 * (1.0 + std.lp.a_ub.max_abs().max(std.lp.a_eq.max_abs()));
        let dim = n + m_ub + m_eq;
        let mut k = Matrix::zeros(dim, dim);
        for j in 0..n {
            k.set(j, j, -(d[j] + reg));
        }
        for i in 0..m_ub {
            for (j, &a) in std.lp.a_ub.row(i).iter().enumerate() {
                k.set(n + i, j, a);
                k.set(j, n + i, a);
            }
            k.set(n + i, n + i, recip[i] + reg);
        }
        for i in 0..m_eq {
            for (j, &a) in std.lp.a_eq.row(i).iter().enumerate() {
                k.set(n + m_ub + i, j, a);
                k.set(j, n + m_ub + i, a);
            }
            k.set(n + m_ub + i, n + m_ub + i, reg);
        }
        let lu = Lu::factor(k)?;
        Some(KktSolver {
            std,
            d: d.to_vec(),
            recip,
            reg,
            lu,
        })
    }

    /// Solves the regularized Newton system
    ///   -(D + reg E_x) u + A_hat' v = r1,   A_hat u + reg v = r2
    /// (reg on the x columns and on every dual row, none on the slack
    /// columns) with iterative refinement. Refinement still pays for
    /// itself: the dual residual otherwise stalls above tolerance once the
    /// scaling D turns extreme.
    fn solve(&self, r1: &[f64], r2: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let n = self.std.n;
        let (mut u, mut v) = self.solve_once(r1, r2);
        for round in 0..3 {
            let atv = self.std.at_matvec(&v);
            let au = self.std.a_matvec(&u);
            let res1: Vec<f64> = (0..r1.len())
                .map(|j| {
                    let rg = if j < n { self.reg * u[j] } else { 0.0 };
                    r1[j] + self.d[j] * u[j] + rg - atv[j]
                })
                .collect();
            let res2: Vec<f64> = (0..r2.len())
                .map(|i| r2[i] - au[i] - self.reg * v[i])
                .collect();
            let worst = res1
                .iter()
                .chain(&res2)
                .fold(0.0f64, |m, r| m.max(r.abs()));
            let scale = r1
                .iter()
                .chain(r2)
                .fold(0.0f64, |m, r| m.max(r.abs()));
            if worst <= 1e-14 * (1.0 + scale) {
                break;
            }
            if round == 2 {
                log::trace!("newton refinement floor {:.3e}", worst / (1.0 + scale));
                break;
            }
            let (du, dv) = self.solve_once(&res1, &res2);
            for (a, b) in u.iter_mut().zip(&du) {
                *a += b;
            }
            for (a, b) in v.iter_mut().zip(&dv) {
                *a += b;
            }
        }
        (u, v)
    }

    fn solve_once(&self, r1: &[f64], r2: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let std = self.std;
        let (n, m_ub, m_eq) = (std.n, std.m_ub, std.m_eq);
        let (r1x, r1s) = r1.split_at(n);
        let (r2ub, r2eq) = r2.split_at(m_ub);

        // Slack elimination folds each slack's complementarity row into its
        // inequality row: A_ub u_x + D_s^{-1} v_ub = r2ub + D_s^{-1} r1s.
        let mut rhs = vec![0.0; n + m_ub + m_eq];
        rhs[..n].copy_from_slice(r1x);
        for i in 0..m_ub {
            rhs[n + i] = r2ub[i] + self.recip[i] * r1s[i];
        }
        rhs[n + m_ub..].copy_from_slice(r2eq);

        let sol = self.lu.solve(&rhs);
        let ux = &sol[..n];
        let v_all = &sol[n..];

        let mut u = vec![0.0; n + m_ub];
        u[..n].copy_from_slice(ux);
        for i in 0..m_ub {
            u[n + i] = self.recip[i] * (v_all[i] - r1s[i]);
        }
        let mut v = vec![0.0; m_ub + m_eq];
        v.copy_from_slice(v_all);
        (u, v)
    }
}

/// LU with partial pivoting; returns None on a numerically singular pivot.
struct Lu {
    n: usize,
    a: Vec<f64>,
    piv: Vec<usize>,
}

impl Lu {
    fn factor(m: Matrix) -> Option<Self> {
        let n = m.rows();
        assert_eq!(n, m.cols());
        let mut a = m.data;
        let mut piv = Vec::with_capacity(n);
        for col in 0..n {
            let (best, mag) = (col..n)
                .map(|r| (r, a[r * n + col].abs()))
                .max_by(|x, y| x.1.total_cmp(&y.1))?;
            if mag < 1e-280 || !mag.is_finite() {
                return None;
            }
            piv.push(best);
            if best != col {
                for j in 0..n {
                    a.swap(col * n + j, best * n + j);
                }
            }
            let pivot = a[col * n + col];
            for r in col + 1..n {
                let f = a[r * n + col] / pivot;
                a[r * n + col] = f;
                if f != 0.0 {
                    for j in col + 1..n {
                        a[r * n + j] -= f * a[col * n + j];
                    }
                }
            }
        }
        Some(Lu { n, a, piv })
    }

    fn solve(&self, b: &[f64]) -> Vec<f64> {
        let n = self.n;
        let mut x = b.to_vec();
        // All interchanges first: row swaps during factorization also moved
        // the L factors of earlier columns, so the stored factors belong to
        // the fully permuted ordering, not the step at which they were made.
        for col in 0..n {
            x.swap(col, self.piv[col]);
        }
        for col in 0..n {
            let xc = x[col];
            if xc != 0.0 {
                for r in col + 1..n {
                    x[r] -= self.a[r * n + col] * xc;
                }
            }
        }
        for col in (0..n).rev() {
            x[col] /= self.a[col * n + col];
            let xc = x[col];
            if xc != 0.0 {
                for r in 0..col {
                    x[r] -= self.a[r * n + col] * xc;
                }
            }
        }
        x
    }
}

/// Diagonal row/column scaling that brings all constraint entries near
/// unit magnitude. Scales are rounded to powers of two so applying and
/// removing them is exact. Poorly scaled inputs (the design LP mixes rows
/// spanning six orders of magnitude) stall the interior point without this.
struct Equilibration {
    row_ub: Vec<f64>,
    row_eq: Vec<f64>,
    col: Vec<f64>,
}

fn pow2_near(v: f64) -> f64 {
    if v > 0.0 && v.is_finite() {
        (2.0f64).powi(v.log2().round() as i32)
    } else {
        1.0
    }
}

impl Equilibration {
    fn compute(lp: &LinearProgram) -> Self {
        let n = lp.num_vars();
        let (m_ub, m_eq) = (lp.a_ub.rows(), lp.a_eq.rows());
        let mut row_ub = vec![1.0; m_ub];
        let mut row_eq = vec![1.0; m_eq];
        let mut col = vec![1.0; n];
        for _ in 0..4 {
            // rows toward unit max-norm
            for (i, r) in row_ub.iter_mut().enumerate() {
                let mx = lp
                    .a_ub
                    .row(i)
                    .iter()
                    .zip(&col)
                    .map(|(a, c)| (a * *r * c).abs())
                    .fold(0.0, f64::max);
                if mx > 0.0 {
                    *r /= pow2_near(mx.sqrt());
                }
            }
            for (i, r) in row_eq.iter_mut().enumerate() {
                let mx = lp
                    .a_eq
                    .row(i)
                    .iter()
                    .zip(&col)
                    .map(|(a, c)| (a * *r * c).abs())
                    .fold(0.0, f64::max);
                if mx > 0.0 {
                    *r /= pow2_near(mx.sqrt());
                }
            }
            // columns toward unit max-norm
            for (j, cj) in col.iter_mut().enumerate() {
                let mut mx = 0.0f64;
                for (i, r) in row_ub.iter().enumerate() {
                    mx = mx.max((lp.a_ub.get(i, j) * r * *cj).abs());
                }
                for (i, r) in row_eq.iter().enumerate() {
                    mx = mx.max((lp.a_eq.get(i, j) * r * *cj).abs());
                }
                if mx > 0.0 {
                    *cj /= pow2_near(mx.sqrt());
                }
            }
        }
        for v in row_ub.iter_mut().chain(&mut row_eq).chain(&mut col) {
            *v = pow2_near(*v);
        }
        Equilibration {
            row_ub,
            row_eq,
            col,
        }
    }

    fn apply(&self, lp: &LinearProgram) -> LinearProgram {
        let n = lp.num_vars();
        let scale_matrix = |m: &Matrix, rows: &[f64]| {
            let mut out = Matrix::zeros(m.rows(), n);
            for i in 0..m.rows() {
                for j in 0..n {
                    out.set(i, j, m.get(i, j) * rows[i] * self.col[j]);
                }
            }
            out
        };
        LinearProgram {
            objective: lp
                .objective
                .iter()
                .zip(&self.col)
                .map(|(c, s)| c * s)
                .collect(),
            a_ub: scale_matrix(&lp.a_ub, &self.row_ub),
            b_ub: lp
                .b_ub
                .iter()
                .zip(&self.row_ub)
                .map(|(b, s)| b * s)
                .collect(),
            a_eq: scale_matrix(&lp.a_eq, &self.row_eq),
            b_eq: lp
                .b_eq
                .iter()
                .zip(&self.row_eq)
                .map(|(b, s)| b * s)
                .collect(),
            lower_bounds: lp
                .lower_bounds
                .iter()
                .zip(&self.col)
                .map(|(l, s)| l.map(|v| v / s))
                .collect(),
        }
    }
}

/// Solves the linear program to relative tolerance `tol` (1e-9 is a good
/// default) within `max_iters` interior-point iterations.
pub fn solve_lp(lp: &LinearProgram, tol: f64, max_iters: usize) -> Result<LpSolution> {
    lp.validate()?;
    if !(tol > 0.0) {
        return Err(Error::Parameter("tol must be positive".into()));
    }
    let eq = Equilibration::compute(lp);
    let scaled = eq.apply(lp);
    let (w, status, iterations) = solve_core(&scaled, tol, max_iters);
    Ok(restore(lp, &scaled, &eq, w, status, iterations))
}

fn solve_core(lp: &LinearProgram, tol: f64, max_iters: usize) -> (Hsd, LpStatus, usize) {
    let std = Standardized::new(lp);
    let c = std.c_ext();
    let b = std.b_ext();
    let n_tot = std.total_vars();
    let m = std.m_ub + std.m_eq;
    let n_pos = std.num_positive();

    let mut w = starting_point(&std);

    let r_p0 = residual_p(&std, &b, &w);
    let r_d0 = residual_d(&std, &c, &w);
    let r_g0 = residual_g(&c, &b, &w);
    let mu0 = mu_of(&std, &w, n_pos);
    let norm_rp0 = norm2(&r_p0).max(1.0);
    let norm_rd0 = norm2(&r_d0).max(1.0);
    let norm_rg0 = r_g0.abs().max(1.0);

    let mut iterations = 0;
    let mut status = LpStatus::MaxIters;

    for iter in 0..max_iters {
        iterations = iter + 1;

        // Newton scaling: D = z/x on sign-constrained entries, 0 on free.
        let d: Vec<f64> = (0..n_tot)
            .map(|j| {
                if std.is_positive(j) {
                    w.z[j] / w.x[j]
                } else {
                    0.0
                }
            })
            .collect();
        let Some(kkt) = KktSolver::new(&std, &d) else {
            break; // singular beyond rescue: report best iterate
        };

        let r_p = residual_p(&std, &b, &w);
        let r_d = residual_d(&std, &c, &w);
        let r_g = residual_g(&c, &b, &w);
        let mu = mu_of(&std, &w, n_pos);

        let (p, q) = kkt.solve(&c, &b);

        let direction = |gamma: f64, prev: Option<&Delta>| -> Delta {
            let eta = 1.0 - gamma;
            let mut r1 = vec![0.0; n_tot];
            let mut rhat_xs = vec![0.0; n_tot];
            for j in 0..n_tot {
                r1[j] = eta * r_d[j];
                if std.is_positive(j) {
                    let mut rx = gamma * mu - w.x[j] * w.z[j];
                    if let Some(d) = prev {
                        rx -= d.x[j] * d.z[j];
                    }
                    rhat_xs[j] = rx;
                    r1[j] -= rx / w.x[j];
                }
            }
            let r2: Vec<f64> = r_p.iter().map(|v| eta * v).collect();
            let (u, v) = kkt.solve(&r1, &r2);
            let mut rhat_tk = gamma * mu - w.tau * w.kappa;
            if let Some(d) = prev {
                rhat_tk -= d.tau * d.kappa;
            }
            let rhat_g = eta * r_g;
            // denominator in the provably nonnegative form p'Dp, not as
            // b'q - c'p: those dot products cancel catastrophically near a
            // degenerate face and can even go negative, exploding d_tau
            let mut ptdp: f64 = (0..n_tot).map(|j| d[j] * p[j] * p[j]).sum();
            for j in 0..std.n {
                ptdp += kkt.reg * p[j] * p[j];
            }
            for qi in &q {
                ptdp += kkt.reg * qi * qi;
            }
            let d_tau = (rhat_g + rhat_tk / w.tau - (-dot(&c, &u) + dot(&b, &v)))
                / (w.kappa / w.tau + ptdp);
            let d_x: Vec<f64> = (0..n_tot).map(|j| u[j] + p[j] * d_tau).collect();
            let d_y: Vec<f64> = (0..m).map(|i| v[i] + q[i] * d_tau).collect();
            // dz from the dual feasibility row, not from the eliminated
            // complementarity row: the latter divides by x and explodes on
            // coordinates pinned near the boundary.
            let atdy = std.at_matvec(&d_y);
            let d_z: Vec<f64> = (0..n_tot)
                .map(|j| {
                    if std.is_positive(j) {
                        eta * r_d[j] + c[j] * d_tau - atdy[j]
                    } else {
                        0.0
                    }
                })
                .collect();
            let d_kappa = (rhat_tk - w.kappa * d_tau) / w.tau;
            Delta {
                x: d_x,
                y: d_y,
                z: d_z,
                tau: d_tau,
                kappa: d_kappa,
            }
        };

        // Predictor (affine) step fixes the centering weight. gamma -> 1
        // when the affine step makes no progress, so a stalled iterate is
        // pulled back toward the central path instead of freezing.
        let affine = direction(0.0, None);
        let alpha_aff = step_to_boundary(&std, &w, &affine, 1.0);
        let mut mu_aff = (w.tau + alpha_aff * affine.tau) * (w.kappa + alpha_aff * affine.kappa);
        for j in 0..n_tot {
            if std.is_positive(j) {
                mu_aff += (w.x[j] + alpha_aff * affine.x[j]) * (w.z[j] + alpha_aff * affine.z[j]);
            }
        }
        mu_aff /= (n_pos + 1) as f64;
        let gamma = ((mu_aff / mu).max(0.0)).powi(3).min(1.0);
        // ...then the corrector produces the actual direction. A collapsed
        // affine step has huge components, and its cross products poison the
        // corrector; drop them whenever they fail to lengthen the step.
        let mut delta = direction(gamma, Some(&affine));
        let mut alpha = step_to_boundary(&std, &w, &delta, 0.99995);
        if alpha < alpha_aff {
            let plain = direction(gamma, None);
            let alpha_plain = step_to_boundary(&std, &w, &plain, 0.99995);
            if alpha_plain > alpha {
                delta = plain;
                alpha = alpha_plain;
            }
        }

        for j in 0..n_tot {
            w.x[j] += alpha * delta.x[j];
            w.z[j] += alpha * delta.z[j];
        }
        for i in 0..m {
            w.y[i] += alpha * delta.y[i];
        }
        w.tau += alpha * delta.tau;
        w.kappa += alpha * delta.kappa;

        // Wide-neighborhood safeguard. A pair whose product collapses far
        // below mu (strict complementarity failing at a degenerate face)
        // makes the Newton system explode and freezes every later step.
        // Lifting such pairs back perturbs the iterate by at most
        // sqrt(NEIGH * mu), which vanishes as mu -> 0.
        const NEIGH: f64 = 1e-6;
        let mu_now = mu_of(&std, &w, n_pos);
        let floor = NEIGH * mu_now;
        let lift = floor.sqrt();
        for j in 0..n_tot {
            if std.is_positive(j) && w.x[j] * w.z[j] < floor {
                if w.x[j] < lift && w.z[j] < lift {
                    w.x[j] = lift;
                    w.z[j] = lift;
                } else if w.x[j] < w.z[j] {
                    w.x[j] = floor / w.z[j];
                } else {
                    w.z[j] = floor / w.x[j];
                }
            }
        }
        if w.tau * w.kappa < floor {
            if w.tau < lift && w.kappa < lift {
                w.tau = lift;
                w.kappa = lift;
            } else if w.tau < w.kappa {
                w.tau = floor / w.kappa;
            } else {
                w.kappa = floor / w.tau;
            }
        }

        // Convergence bookkeeping on the embedded residuals.
        let rho_p = norm2(&residual_p(&std, &b, &w)) / norm_rp0;
        let rho_d = norm2(&residual_d(&std, &c, &w)) / norm_rd0;
        let rho_g = residual_g(&c, &b, &w).abs() / norm_rg0;
        let mu_now = mu_of(&std, &w, n_pos);
        let rho_mu = if mu0 > 0.0 { mu_now / mu0 } else { 0.0 };
        let bty = dot(&b, &w.y);
        let ctx = dot(&c, &w.x);
        let rho_a = (ctx - bty).abs() / (w.tau + bty.abs());

        log::trace!(
            "iter {iter}: rho_p={rho_p:.3e} rho_d={rho_d:.3e} rho_g={rho_g:.3e} \
             rho_mu={rho_mu:.3e} rho_a={rho_a:.3e} tau={:.3e} kappa={:.3e} \
             gamma={gamma:.3e} alpha={alpha:.3e}",
            w.tau,
            w.kappa,
        );
        if rho_p <= tol && rho_d <= tol && rho_a <= tol {
            status = LpStatus::Optimal;
            break;
        }
        let degenerate_tau = (rho_p <= tol
            && rho_d <= tol
            && rho_g <= tol
            && w.tau < tol * w.kappa.max(1.0))
            || (rho_mu <= tol && w.tau < tol * w.kappa.min(1.0));
        if degenerate_tau {
            status = if bty > tol {
                LpStatus::Infeasible
            } else {
                LpStatus::Unbounded
            };
            break;
        }
    }

    (w, status, iterations)
}

struct Delta {
    x: Vec<f64>,
    y: Vec<f64>,
    z: Vec<f64>,
    tau: f64,
    kappa: f64,
}

fn residual_p(std: &Standardized, b: &[f64], w: &Hsd) -> Vec<f64> {
    let ax = std.a_matvec(&w.x);
    b.iter()
        .zip(&ax)
        .map(|(bi, axi)| bi * w.tau - axi)
        .collect()
}

fn residual_d(std: &Standardized, c: &[f64], w: &Hsd) -> Vec<f64> {
    let aty = std.at_matvec(&w.y);
    (0..c.len())
        .map(|j| c[j] * w.tau - aty[j] - w.z[j])
        .collect()
}

fn residual_g(c: &[f64], b: &[f64], w: &Hsd) -> f64 {
    dot(c, &w.x) - dot(b, &w.y) + w.kappa
}

fn mu_of(std: &Standardized, w: &Hsd, n_pos: usize) -> f64 {
    let mut acc = w.tau * w.kappa;
    for j in 0..w.x.len() {
        if std.is_positive(j) {
            acc += w.x[j] * w.z[j];
        }
    }
    acc / (n_pos + 1) as f64
}

fn step_to_boundary(std: &Standardized, w: &Hsd, d: &Delta, alpha0: f64) -> f64 {
    let mut alpha: f64 = 1.0;
    for j in 0..w.x.len() {
        if std.is_positive(j) {
            if d.x[j] < 0.0 {
                alpha = alpha.min(-w.x[j] / d.x[j] * alpha0);
            }
            if d.z[j] < 0.0 {
                alpha = alpha.min(-w.z[j] / d.z[j] * alpha0);
            }
        }
    }
    if d.tau < 0.0 {
        alpha = alpha.min(-w.tau / d.tau * alpha0);
    }
    if d.kappa < 0.0 {
        alpha = alpha.min(-w.kappa / d.kappa * alpha0);
    }
    alpha
}

/// Cold start at the analytic center of the embedding: unit positive
/// variables, zero free variables and duals. Equilibration makes unit
/// magnitudes appropriate, and perfect centrality at the start matters more
/// here than the residual head start a least-squares point would buy.
fn starting_point(std: &Standardized) -> Hsd {
    let n_tot = std.total_vars();
    let m = std.m_ub + std.m_eq;
    Hsd {
        x: (0..n_tot)
            .map(|j| if std.is_positive(j) { 1.0 } else { 0.0 })
            .collect(),
        y: vec![0.0; m],
        z: (0..n_tot)
            .map(|j| if std.is_positive(j) { 1.0 } else { 0.0 })
            .collect(),
        tau: 1.0,
        kappa: 1.0,
    }
}

fn restore(
    lp: &LinearProgram,
    scaled: &LinearProgram,
    eq: &Equilibration,
    w: Hsd,
    status: LpStatus,
    iterations: usize,
) -> LpSolution {
    let std = Standardized::new(scaled);
    let n = std.n;
    let tau = w.tau.max(f64::MIN_POSITIVE);
    // Undo the column scaling on the primal point and the row scaling on
    // the duals; complementarity products are invariant under both.
    let x: Vec<f64> = (0..n)
        .map(|j| (w.x[j] / tau + std.shift[j]) * eq.col[j])
        .collect();
    let y_ub: Vec<f64> = (0..std.m_ub)
        .map(|i| w.y[i] / tau * eq.row_ub[i])
        .collect();
    let y_eq: Vec<f64> = (0..std.m_eq)
        .map(|i| w.y[std.m_ub + i] / tau * eq.row_eq[i])
        .collect();
    let z: Vec<f64> = (0..n).map(|j| w.z[j] / tau / eq.col[j]).collect();

    let objective = dot(&lp.objective, &x);
    let mut dual_objective = dot(&lp.b_ub, &y_ub) + dot(&lp.b_eq, &y_eq);
    for j in 0..n {
        if let Some(l) = lp.lower_bounds[j] {
            dual_objective += l * z[j];
        }
    }

    // Residuals in original units.
    let ax = lp.a_ub.matvec(&x);
    let mut primal = 0.0f64;
    for i in 0..lp.a_ub.rows() {
        primal = primal.max(ax[i] - lp.b_ub[i]);
    }
    let aeqx = lp.a_eq.matvec(&x);
    for i in 0..lp.a_eq.rows() {
        primal = primal.max((aeqx[i] - lp.b_eq[i]).abs());
    }
    for j in 0..n {
        if let Some(l) = lp.lower_bounds[j] {
            primal = primal.max(l - x[j]);
        }
    }
    let aty_ub = lp.a_ub.tr_matvec(&y_ub);
    let aty_eq = lp.a_eq.tr_matvec(&y_eq);
    let mut dual = 0.0f64;
    for j in 0..n {
        let zj = if lp.lower_bounds[j].is_some() {
            z[j]
        } else {
            0.0
        };
        dual = dual.max((lp.objective[j] - aty_ub[j] - aty_eq[j] - zj).abs());
    }
    let mut gap = w.tau * w.kappa;
    for j in 0..w.x.len() {
        if std.is_positive(j) {
            gap += w.x[j] * w.z[j];
        }
    }
    gap /= tau * tau;

    let certificate = match status {
        LpStatus::Infeasible => {
            // Farkas vector in row coordinates: A_ub'y + A_eq'y <= 0 (on
            // sign-constrained columns), b'y > 0.
            let mut y: Vec<f64> = y_ub.iter().chain(&y_eq).copied().collect();
            let norm = y.iter().fold(0.0f64, |m, v| m.max(v.abs()));
            if norm > 0.0 {
                for v in &mut y {
                    *v /= norm;
                }
            }
            Some(y)
        }
        LpStatus::Unbounded => {
            let mut ray: Vec<f64> = (0..n).map(|j| w.x[j] * eq.col[j]).collect();
            let norm = ray.iter().fold(0.0f64, |m, v| m.max(v.abs()));
            if norm > 0.0 {
                for v in &mut ray {
                    *v /= norm;
                }
            }
            Some(ray)
        }
        _ => None,
    };

    LpSolution {
        status,
        x,
        objective,
        dual_objective,
        residuals: LpResiduals { primal: primal.max(0.0), dual, gap },
        iterations,
        certificate,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn empty(cols: usize) -> Matrix {
        Matrix {
            rows: 0,
            cols,
            data: vec![],
        }
    }

    #[test]
    fn lu_known_3x3() {
        let k = Matrix::from_rows(vec![
            vec![2.0, 1.0, 1.0],
            vec![4.0, -6.0, 0.0],
            vec![-2.0, 7.0, 2.0],
        ])
        .unwrap();
        let lu = Lu::factor(k).unwrap();
        println!("piv {:?}", lu.piv);
        println!("a {:?}", lu.a);
        let sol = lu.solve(&[5.0, -2.0, 9.0]);
        println!("sol {sol:?}");
        for (got, want) in sol.iter().zip(&[1.0, 1.0, 2.0]) {
            assert!((got - want).abs() < 1e-12, "sol {sol:?}");
        }
    }

    #[test]
    fn lu_residual_large_dense() {
        // deterministic pseudo-random entries via a tiny LCG
        let mut state = 0x2545f4914f6cdd1du64;
        let mut next = move || {
            state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            ((state >> 11) as f64) / ((1u64 << 53) as f64) * 2.0 - 1.0
        };
        let mut failures = Vec::new();
        for n in [3usize, 5, 10, 20, 50, 100, 200, 400, 523] {
            let mut k = Matrix::zeros(n, n);
            for i in 0..n {
                for j in 0..n {
                    k.set(i, j, next());
                }
            }
            let rhs: Vec<f64> = (0..n).map(|_| next()).collect();
            let saved = k.clone();
            let lu = Lu::factor(k).expect("nonsingular");
            let sol = lu.solve(&rhs);
            let ks = saved.matvec(&sol);
            let worst = rhs
                .iter()
                .zip(&ks)
                .fold(0.0f64, |m, (r, s)| m.max((r - s).abs()));
            println!("n={n} residual {worst:.3e}");
            if worst > 1e-9 {
                failures.push((n, worst));
            }
        }
        assert!(failures.is_empty(), "dense residuals {failures:?}");
    }

    fn solve(lp: &LinearProgram) -> LpSolution {
        solve_lp(lp, 1e-9, 200).unwrap()
    }

    #[test]
    fn single_variable_box() {
        // min -x s.t. x <= 3, x >= 0
        let lp = LinearProgram {
            objective: vec![-1.0],
            a_ub: Matrix::from_rows(vec![vec![1.0]]).unwrap(),
            b_ub: vec![3.0],
            a_eq: empty(1),
            b_eq: vec![],
            lower_bounds: vec![Some(0.0)],
        };
        let sol = solve(&lp);
        assert_eq!(sol.status, LpStatus::Optimal);
        assert!((sol.x[0] - 3.0).abs() < 1e-7);
        assert!((sol.objective + 3.0).abs() < 1e-7);
    }

    #[test]
    fn infeasible_with_certificate() {
        // min x s.t. x <= -1, x >= 0
        let lp = LinearProgram {
            objective: vec![1.0],
            a_ub: Matrix::from_rows(vec![vec![1.0]]).unwrap(),
            b_ub: vec![-1.0],
            a_eq: empty(1),
            b_eq: vec![],
            lower_bounds: vec![Some(0.0)],
        };
        let sol = solve(&lp);
        assert_eq!(sol.status, LpStatus::Infeasible);
        let y = sol.certificate.expect("farkas vector");
        // y <= 0 entry for the <= row, with b'y > 0 after sign bookkeeping:
        // here y is the HSD dual, so A'y <= 0 and b'y > 0.
        assert!(y[0] < 0.0);
        assert!((-1.0) * y[0] > 0.0);
    }

    #[test]
    fn unbounded_with_ray() {
        // min -x, x >= 0, no upper bound
        let lp = LinearProgram {
            objective: vec![-1.0],
            a_ub: empty(1),
            b_ub: vec![],
            a_eq: empty(1),
            b_eq: vec![],
            lower_bounds: vec![Some(0.0)],
        };
        let sol = solve(&lp);
        assert_eq!(sol.status, LpStatus::Unbounded);
        let ray = sol.certificate.expect("ray");
        assert!(ray[0] > 0.5); // normalized improving direction
    }

    #[test]
    fn free_variable_reaches_negative_optimum() {
        // min x s.t. -x <= 5 (x >= -5), x free
        let lp = LinearProgram {
            objective: vec![1.0],
            a_ub: Matrix::from_rows(vec![vec![-1.0]]).unwrap(),
            b_ub: vec![5.0],
            a_eq: empty(1),
            b_eq: vec![],
            lower_bounds: vec![None],
        };
        let sol = solve(&lp);
        assert_eq!(sol.status, LpStatus::Optimal);
        assert!((sol.x[0] + 5.0).abs() < 1e-7);
    }

    #[test]
    fn nonzero_lower_bound() {
        // min x s.t. x >= 3
        let lp = LinearProgram {
            objective: vec![1.0],
            a_ub: empty(1),
            b_ub: vec![],
            a_eq: empty(1),
            b_eq: vec![],
            lower_bounds: vec![Some(3.0)],
        };
        let sol = solve(&lp);
        assert_eq!(sol.status, LpStatus::Optimal);
        assert!((sol.x[0] - 3.0).abs() < 1e-7);
    }

    #[test]
    fn two_variable_simplex_corner() {
        // min -x - y s.t. x + y <= 1, x,y >= 0 -> optimum -1 on a face
        let lp = LinearProgram {
            objective: vec![-1.0, -1.0],
            a_ub: Matrix::from_rows(vec![vec![1.0, 1.0]]).unwrap(),
            b_ub: vec![1.0],
            a_eq: empty(2),
            b_eq: vec![],
            lower_bounds: vec![Some(0.0), Some(0.0)],
        };
        let sol = solve(&lp);
        assert_eq!(sol.status, LpStatus::Optimal);
        assert!((sol.objective + 1.0).abs() < 1e-7);
        assert!((sol.x[0] + sol.x[1] - 1.0).abs() < 1e-7);
    }

    #[test]
    fn equality_with_free_variable_degenerate_face() {
        // min x + y s.t. x + y = 2, y >= 0, x free: objective constant 2
        let lp = LinearProgram {
            objective: vec![1.0, 1.0],
            a_ub: empty(2),
            b_ub: vec![],
            a_eq: Matrix::from_rows(vec![vec![1.0, 1.0]]).unwrap(),
            b_eq: vec![2.0],
            lower_bounds: vec![None, Some(0.0)],
        };
        let sol = solve(&lp);
        assert_eq!(sol.status, LpStatus::Optimal);
        assert!((sol.objective - 2.0).abs() < 1e-6);
    }

    #[test]
    fn weak_duality_at_optimum() {
        let lp = LinearProgram {
            objective: vec![2.0, 3.0, 1.0],
            a_ub: Matrix::from_rows(vec![
                vec![-1.0, -1.0, 0.0],
                vec![0.0, -1.0, -2.0],
                vec![-3.0, 0.0, -1.0],
            ])
            .unwrap(),
            b_ub: vec![-2.0, -3.0, -4.0],
            a_eq: empty(3),
            b_eq: vec![],
            lower_bounds: vec![Some(0.0); 3],
        };
        let sol = solve(&lp);
        assert_eq!(sol.status, LpStatus::Optimal);
        assert!(sol.objective >= sol.dual_objective - sol.residuals.gap - 1e-9);
        assert!(sol.residuals.gap < 1e-6);
    }

    #[test]
    fn objective_scaling_leaves_argmin() {
        // unique optimal vertex at (5/3, 7/3)
        let base = LinearProgram {
            objective: vec![-1.0, -2.0],
            a_ub: Matrix::from_rows(vec![vec![1.0, 1.0], vec![-1.0, 2.0]]).unwrap(),
            b_ub: vec![4.0, 3.0],
            a_eq: empty(2),
            b_eq: vec![],
            lower_bounds: vec![Some(0.0), Some(0.0)],
        };
        let mut scaled = base.clone();
        for c in &mut scaled.objective {
            *c *= 41.5;
        }
        let s1 = solve(&base);
        let s2 = solve(&scaled);
        assert_eq!(s1.status, LpStatus::Optimal);
        assert_eq!(s2.status, LpStatus::Optimal);
        for (a, b) in s1.x.iter().zip(&s2.x) {
            assert!((a - b).abs() < 1e-6);
        }
        assert!((s2.objective - 41.5 * s1.objective).abs() <= 1e-9 * s2.objective.abs());
        // identical activity pattern
        let act = |lp: &LinearProgram, x: &[f64]| -> Vec<bool> {
            lp.a_ub
                .matvec(x)
                .iter()
                .zip(&lp.b_ub)
                .map(|(ax, b)| (b - ax).abs() < 1e-6)
                .collect::<Vec<_>>()
        };
        assert_eq!(act(&base, &s1.x), act(&scaled, &s2.x));
    }

    #[test]
    fn residuals_meet_contract_scale() {
        let lp = LinearProgram {
            objective: vec![1.0, 1.0, 1.0],
            a_ub: Matrix::from_rows(vec![vec![-100.0, -1.0, 0.0], vec![0.0, -50.0, -7.0]])
                .unwrap(),
            b_ub: vec![-200.0, -100.0],
            a_eq: Matrix::from_rows(vec![vec![1.0, 1.0, 1.0]]).unwrap(),
            b_eq: vec![10.0],
            lower_bounds: vec![Some(0.0); 3],
        };
        let sol = solve(&lp);
        assert_eq!(sol.status, LpStatus::Optimal);
        let allowed = 1e-7 * (1.0 + lp.scale());
        assert!(sol.residuals.primal <= allowed);
        assert!(sol.residuals.dual <= allowed);
        assert!(sol.residuals.gap <= allowed);
    }

    #[test]
    fn lp_text_dump_is_parseable_shape() {
        let lp = LinearProgram {
            objective: vec![1.0, -0.5],
            a_ub: Matrix::from_rows(vec![vec![2.0, 0.0]]).unwrap(),
            b_ub: vec![4.0],
            a_eq: Matrix::from_rows(vec![vec![1.0, 1.0]]).unwrap(),
            b_eq: vec![1.0],
            lower_bounds: vec![Some(0.0), None],
        };
        let mut buf = Vec::new();
        lp.write_lp_text(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.contains("Minimize"));
        assert!(text.contains("Subject To"));
        assert!(text.contains("x2 free"));
        assert!(text.contains("= 1"));
        assert!(text.trim_end().ends_with("End"));
    }
}
