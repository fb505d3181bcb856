//! Shared test support: random LP generators with known ground truth and an
//! exhaustive vertex-enumeration solver used as an independent oracle.

#![allow(dead_code)]

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use ufofdm::lp::{LinearProgram, Matrix};

pub const NUM_VARS: usize = 5;
pub const NUM_RANDOM_ROWS: usize = 12;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Truth {
    Optimal(f64),
    Infeasible,
    Unbounded,
}

pub struct LpInstance {
    pub lp: LinearProgram,
    pub truth: Truth,
}

pub fn rng_for(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Random LP with a nonempty interior and a bounding box, so the optimum is
/// finite and attained at a vertex. Two variables are left without native
/// lower bounds (their box shows up as rows instead) to exercise the free
/// variable path.
pub fn random_bounded_lp(rng: &mut ChaCha8Rng) -> LpInstance {
    let interior: Vec<f64> = (0..NUM_VARS).map(|_| rng.random_range(-1.0..1.0)).collect();
    let mut rows = Vec::new();
    let mut rhs = Vec::new();
    for _ in 0..NUM_RANDOM_ROWS {
        let a: Vec<f64> = (0..NUM_VARS).map(|_| rng.random_range(-1.0..1.0)).collect();
        let slack: f64 = rng.random_range(0.1..1.1);
        let b = a.iter().zip(&interior).map(|(ai, xi)| ai * xi).sum::<f64>() + slack;
        rows.push(a);
        rhs.push(b);
    }
    // upper box for every variable
    for j in 0..NUM_VARS {
        let mut e = vec![0.0; NUM_VARS];
        e[j] = 1.0;
        rows.push(e);
        rhs.push(3.0);
    }
    let mut lower_bounds = vec![Some(-3.0); NUM_VARS];
    // first two variables: free, lower box as explicit rows
    for j in 0..2 {
        lower_bounds[j] = None;
        let mut e = vec![0.0; NUM_VARS];
        e[j] = -1.0;
        rows.push(e);
        rhs.push(3.0);
    }
    let objective: Vec<f64> = (0..NUM_VARS).map(|_| rng.random_range(-1.0..1.0)).collect();
    let lp = LinearProgram {
        objective,
        a_ub: Matrix::from_rows(rows).unwrap(),
        b_ub: rhs,
        a_eq: Matrix::zeros(0, NUM_VARS),
        b_eq: vec![],
        lower_bounds,
    };
    let truth = match vertex_enumeration_optimum(&lp) {
        Some(v) => Truth::Optimal(v),
        None => panic!("bounded generator produced an LP with no feasible vertex"),
    };
    LpInstance { lp, truth }
}

/// Bounded instance plus a contradictory pair of rows: a'x <= beta and
/// -a'x <= -beta - 1 cannot both hold.
pub fn random_infeasible_lp(rng: &mut ChaCha8Rng) -> LpInstance {
    let base = random_bounded_lp(rng);
    let a: Vec<f64> = (0..NUM_VARS).map(|_| rng.random_range(-1.0..1.0)).collect();
    let beta: f64 = rng.random_range(-1.0..1.0);
    let mut rows: Vec<Vec<f64>> = (0..base.lp.a_ub.rows())
        .map(|i| base.lp.a_ub.row(i).to_vec())
        .collect();
    let mut rhs = base.lp.b_ub.clone();
    rows.push(a.clone());
    rhs.push(beta);
    rows.push(a.iter().map(|v| -v).collect());
    rhs.push(-beta - 1.0);
    let lp = LinearProgram {
        objective: base.lp.objective,
        a_ub: Matrix::from_rows(rows).unwrap(),
        b_ub: rhs,
        a_eq: base.lp.a_eq,
        b_eq: base.lp.b_eq,
        lower_bounds: base.lp.lower_bounds,
    };
    LpInstance {
        lp,
        truth: Truth::Infeasible,
    }
}

/// Feasible LP left open along one coordinate direction with a driving
/// objective, so the optimum recedes to -infinity along +e_j.
pub fn random_unbounded_lp(rng: &mut ChaCha8Rng) -> LpInstance {
    let j_open = rng.random_range(0..NUM_VARS);
    let mut rows = Vec::new();
    let mut rhs = Vec::new();
    for _ in 0..NUM_RANDOM_ROWS {
        let mut a: Vec<f64> = (0..NUM_VARS).map(|_| rng.random_range(-1.0..1.0)).collect();
        a[j_open] = -a[j_open].abs();
        rows.push(a);
        rhs.push(rng.random_range(0.1..1.1)); // feasible at the origin
    }
    for j in 0..NUM_VARS {
        if j != j_open {
            let mut e = vec![0.0; NUM_VARS];
            e[j] = 1.0;
            rows.push(e);
            rhs.push(3.0);
        }
    }
    let mut objective = vec![0.0; NUM_VARS];
    objective[j_open] = -1.0;
    let lp = LinearProgram {
        objective,
        a_ub: Matrix::from_rows(rows).unwrap(),
        b_ub: rhs,
        a_eq: Matrix::zeros(0, NUM_VARS),
        b_eq: vec![],
        lower_bounds: vec![Some(-3.0); NUM_VARS],
    };
    LpInstance {
        lp,
        truth: Truth::Unbounded,
    }
}

/// Exhaustive oracle: tries every choice of n active constraints, solves the
/// square system, keeps feasible intersection points, and returns the best
/// objective. None means no feasible vertex exists (for generators that
/// always produce pointed feasible sets, that means infeasible).
pub fn vertex_enumeration_optimum(lp: &LinearProgram) -> Option<f64> {
    let n = lp.num_vars();
    // All constraints as rows (a, b, is_equality).
    let mut rows: Vec<(Vec<f64>, f64, bool)> = Vec::new();
    for i in 0..lp.a_eq.rows() {
        rows.push((lp.a_eq.row(i).to_vec(), lp.b_eq[i], true));
    }
    let num_eq = rows.len();
    for i in 0..lp.a_ub.rows() {
        rows.push((lp.a_ub.row(i).to_vec(), lp.b_ub[i], false));
    }
    for (j, lb) in lp.lower_bounds.iter().enumerate() {
        if let Some(l) = lb {
            let mut e = vec![0.0; n];
            e[j] = -1.0;
            rows.push((e, -l, false));
        }
    }
    if rows.len() < n || num_eq > n {
        return None;
    }
    let scale: f64 = rows
        .iter()
        .flat_map(|(a, b, _)| a.iter().chain(std::iter::once(b)))
        .fold(0.0f64, |m, v| m.max(v.abs()));
    let feas_tol = 1e-7 * (1.0 + scale);

    let mut best: Option<f64> = None;
    let mut choice: Vec<usize> = Vec::with_capacity(n);
    // equalities are always active
    choice.extend(0..num_eq);
    enumerate_vertices(lp, &rows, num_eq, n, &mut choice, feas_tol, &mut best);
    best
}

fn enumerate_vertices(
    lp: &LinearProgram,
    rows: &[(Vec<f64>, f64, bool)],
    next: usize,
    n: usize,
    choice: &mut Vec<usize>,
    feas_tol: f64,
    best: &mut Option<f64>,
) {
    if choice.len() == n {
        if let Some(x) = solve_square(rows, choice, n) {
            if point_feasible(lp, &x, feas_tol) {
                let obj: f64 = lp.objective.iter().zip(&x).map(|(c, v)| c * v).sum();
                *best = Some(best.map_or(obj, |b: f64| b.min(obj)));
            }
        }
        return;
    }
    let remaining = n - choice.len();
    for i in next..=rows.len().saturating_sub(remaining) {
        choice.push(i);
        enumerate_vertices(lp, rows, i + 1, n, choice, feas_tol, best);
        choice.pop();
    }
}

fn solve_square(rows: &[(Vec<f64>, f64, bool)], choice: &[usize], n: usize) -> Option<Vec<f64>> {
    let mut a: Vec<Vec<f64>> = choice.iter().map(|&i| rows[i].0.clone()).collect();
    let mut b: Vec<f64> = choice.iter().map(|&i| rows[i].1).collect();
    // Gaussian elimination, partial pivoting; singular selections are skipped.
    for col in 0..n {
        let (p, mag) = (col..n)
            .map(|r| (r, a[r][col].abs()))
            .max_by(|x, y| x.1.total_cmp(&y.1))?;
        if mag < 1e-9 {
            return None;
        }
        a.swap(col, p);
        b.swap(col, p);
        let pivot = a[col][col];
        for r in col + 1..n {
            let f = a[r][col] / pivot;
            if f != 0.0 {
                for c in col..n {
                    a[r][c] -= f * a[col][c];
                }
                b[r] -= f * b[col];
            }
        }
    }
    let mut x = vec![0.0; n];
    for col in (0..n).rev() {
        let mut acc = b[col];
        for c in col + 1..n {
            acc -= a[col][c] * x[c];
        }
        x[col] = acc / a[col][col];
    }
    Some(x)
}

pub fn point_feasible(lp: &LinearProgram, x: &[f64], tol: f64) -> bool {
    let ax = lp.a_ub.matvec(x);
    for (axi, bi) in ax.iter().zip(&lp.b_ub) {
        if *axi > bi + tol {
            return false;
        }
    }
    let aex = lp.a_eq.matvec(x);
    for (axi, bi) in aex.iter().zip(&lp.b_eq) {
        if (axi - bi).abs() > tol {
            return false;
        }
    }
    for (xj, lb) in x.iter().zip(&lp.lower_bounds) {
        if let Some(l) = lb {
            if *xj < l - tol {
                return false;
            }
        }
    }
    true
}

/// Farkas check: y must satisfy y_ub <= eps on inequality rows,
/// A_ub'y_ub + A_eq'y_eq <= eps on lower-bounded columns (== within eps on
/// free columns), and have positive value against the bound-shifted rhs.
pub fn farkas_certificate_valid(lp: &LinearProgram, y: &[f64]) -> bool {
    let m_ub = lp.a_ub.rows();
    let (y_ub, y_eq) = y.split_at(m_ub);
    let scale = 1.0 + lp.scale();
    let eps = 1e-5 * scale;
    if y_ub.iter().any(|v| *v > eps) {
        return false;
    }
    let mut w = lp.a_ub.tr_matvec(y_ub);
    let w_eq = lp.a_eq.tr_matvec(y_eq);
    for (a, b) in w.iter_mut().zip(&w_eq) {
        *a += b;
    }
    let mut value: f64 = y_ub.iter().zip(&lp.b_ub).map(|(a, b)| a * b).sum::<f64>()
        + y_eq.iter().zip(&lp.b_eq).map(|(a, b)| a * b).sum::<f64>();
    for (j, lb) in lp.lower_bounds.iter().enumerate() {
        match lb {
            Some(l) => {
                if w[j] > eps {
                    return false;
                }
                // x_j >= l contributes w_j * l to the attainable supremum
                value -= w[j] * l;
            }
            None => {
                if w[j].abs() > eps {
                    return false;
                }
            }
        }
    }
    value > 1e-8 * scale
}

/// Improving-ray check: c'd < 0, A_ub d <= eps, A_eq d = 0 within eps, and
/// d >= -eps on lower-bounded coordinates.
pub fn ray_certificate_valid(lp: &LinearProgram, d: &[f64]) -> bool {
    let scale = 1.0 + lp.scale();
    let eps = 1e-5 * scale;
    let descent: f64 = lp.objective.iter().zip(d).map(|(c, v)| c * v).sum();
    if descent >= -1e-8 * scale {
        return false;
    }
    if lp.a_ub.matvec(d).iter().any(|v| *v > eps) {
        return false;
    }
    if lp.a_eq.matvec(d).iter().any(|v| v.abs() > eps) {
        return false;
    }
    d.iter()
        .zip(&lp.lower_bounds)
        .all(|(v, lb)| lb.is_none() || *v >= -eps)
}
