//! Primal-dual interior-point method for `max f(y) s.t. g_i(y) ≥ 0` with
//! concave quadratic `f`, `g_i`.
//!
//! Slacks `s_i` carry the constraints as `g_i(y) = s_i`, so only `s` and `λ`
//! must stay positive and the curvature of `g_i` is corrected by Newton
//! rather than by backtracking. Each iteration solves the condensed system
//! `M Δy = ∇f + Σ ∇g_i (σμ - c_i - λ_i g_i) / s_i + Σ λ_i ∇g_i` with
//! `M = 2P_f + Σ 2λ_i P_i + Σ (λ_i/s_i) ∇g_i ∇g_iᵀ`, where `c_i` is
//! Mehrotra's second-order correction and `σ` comes from a predictor step.

use nalgebra::{DMatrix, DVector};

use super::{Compiled, SolveOptions};

pub(crate) struct IpmOutput {
    pub y: DVector<f64>,
    pub lambda: DVector<f64>,
    pub iterations: usize,
    pub kkt: f64,
    pub converged: bool,
}

const FRACTION_TO_BOUNDARY: f64 = 0.99;

/// Constraint values may dip this far below zero at an accepted optimum.
const FEASIBILITY_TOL: f64 = 1e-9;

fn inf_norm(v: &DVector<f64>) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

/// Largest step in `(0, 1]` keeping `v + α dv ≥ 0`.
fn max_step(v: &DVector<f64>, dv: &DVector<f64>) -> f64 {
    v.iter().zip(dv.iter()).filter(|(_, d)| **d < 0.0).fold(1.0, |a, (x, d)| a.min(-x / d))
}

fn factor(mut m: DMatrix<f64>) -> Option<nalgebra::Cholesky<f64, nalgebra::Dyn>> {
    let scale = m.diagonal().iter().fold(0.0f64, |a, &b| a.max(b.abs())).max(1e-300);
    let n = m.nrows();
    for i in 0..n {
        m[(i, i)] += 1e-14 * scale;
    }
    let mut reg = 1e-12 * scale;
    for _ in 0..12 {
        if let Some(c) = m.clone().cholesky() {
            return Some(c);
        }
        for i in 0..n {
            m[(i, i)] += reg;
        }
        reg *= 10.0;
    }
    None
}

/// Runs the method from `y`, which should be strictly feasible. `stop` ends
/// the run early when it returns true for the current iterate.
pub(crate) fn interior_point(
    obj: &Compiled,
    cons: &[Compiled],
    mut y: DVector<f64>,
    opts: &SolveOptions,
    stop: Option<&dyn Fn(&DVector<f64>) -> bool>,
) -> IpmOutput {
    let n = y.len();
    let m = cons.len();
    let values = |y: &DVector<f64>| DVector::from_iterator(m, cons.iter().map(|c| c.value(y)));
    let mut g = values(&y);
    let mut s = g.map(|v| v.max(1e-10));
    let grad_f0 = obj.gradient(&y);
    let mu0 = (inf_norm(&grad_f0).max(1.0) * 0.1).min(1e3);
    let mut lambda = s.map(|si| mu0 / si);
    let mut kkt = f64::INFINITY;

    for it in 0..opts.max_iter {
        let grad_f = obj.gradient(&y);
        let grads: Vec<DVector<f64>> = cons.iter().map(|c| c.gradient(&y)).collect();
        let mut r_d = grad_f.clone();
        for (gi, li) in grads.iter().zip(lambda.iter()) {
            r_d.axpy(*li, gi, 1.0);
        }
        let comp = s.component_mul(&lambda);
        let r_p = &g - &s;
        kkt = inf_norm(&r_d) / inf_norm(&grad_f).max(1.0);
        if m > 0 {
            kkt = kkt.max(comp.max()).max(inf_norm(&r_p));
        }
        let feasible = g.iter().all(|&v| v >= -FEASIBILITY_TOL);
        if kkt <= opts.tol && feasible {
            return IpmOutput { y, lambda, iterations: it, kkt, converged: true };
        }
        if let Some(f) = stop {
            if f(&y) {
                return IpmOutput { y, lambda, iterations: it, kkt, converged: false };
            }
        }
        let mu = if m > 0 { comp.sum() / m as f64 } else { 0.0 };

        let mut mat = DMatrix::zeros(n, n);
        obj.add_hessian(&mut mat, 1.0);
        for ((c, gi), (&li, &si)) in cons.iter().zip(&grads).zip(lambda.iter().zip(s.iter())) {
            c.add_hessian(&mut mat, li);
            mat.syger(li / si, gi, gi, 1.0);
        }
        // syger fills the lower triangle only.
        mat.fill_upper_triangle_with_lower_triangle();
        let Some(chol) = factor(mat) else {
            return IpmOutput { y, lambda, iterations: it, kkt, converged: false };
        };

        // Newton step for complementarity target `σμ - corr_i`.
        let direction = |target: &DVector<f64>| {
            let mut rhs = r_d.clone();
            for i in 0..m {
                rhs.axpy((target[i] - lambda[i] * g[i]) / s[i], &grads[i], 1.0);
            }
            let dy = chol.solve(&rhs);
            let dgy = DVector::from_iterator(m, grads.iter().map(|gi| gi.dot(&dy)));
            let dl = DVector::from_iterator(m, (0..m).map(|i| (target[i] - lambda[i] * (g[i] + dgy[i])) / s[i]));
            let ds = &dgy + &r_p;
            (dy, dl, ds)
        };

        let (dy_a, dl_a, ds_a) = direction(&DVector::zeros(m));
        let alpha_a = max_step(&lambda, &dl_a).min(max_step(&s, &ds_a));
        let (dy, dl, ds) = if m > 0 && mu > 0.0 {
            let mu_aff = (&lambda + &dl_a * alpha_a).component_mul(&(&s + &ds_a * alpha_a)).sum() / m as f64;
            let sigma = (mu_aff / mu).max(0.0).powi(3).min(1.0);
            let target = DVector::from_iterator(m, (0..m).map(|i| sigma * mu - dl_a[i] * ds_a[i]));
            direction(&target)
        } else {
            (dy_a, dl_a, ds_a)
        };

        let alpha = (FRACTION_TO_BOUNDARY * max_step(&lambda, &dl).min(max_step(&s, &ds))).min(1.0);
        y.axpy(alpha, &dy, 1.0);
        s.axpy(alpha, &ds, 1.0);
        lambda.axpy(alpha, &dl, 1.0);
        s.iter_mut().for_each(|v| *v = v.max(1e-300));
        lambda.iter_mut().for_each(|l| *l = l.max(1e-300));
        g = values(&y);
        if !g.iter().all(|v| v.is_finite()) {
            return IpmOutput { y, lambda, iterations: it + 1, kkt, converged: false };
        }
    }
    IpmOutput { y, lambda, iterations: opts.max_iter, kkt, converged: false }
}

pub(crate) enum PhaseOne {
    Feasible(DVector<f64>, usize),
    Infeasible(f64, usize),
}

/// Finds a strictly feasible point by maximizing `-s` subject to
/// `g_i(y) + s ≥ 0` and `s ≥ -1`.
pub(crate) fn phase_one(cons: &[Compiled], y0: &DVector<f64>, opts: &SolveOptions) -> PhaseOne {
    let n = y0.len();
    let max_viol = cons.iter().map(|c| -c.value(y0)).fold(f64::NEG_INFINITY, f64::max);
    let s0 = max_viol.max(0.0) + 1.0;
    let mut ext: Vec<Compiled> = cons.iter().map(|c| c.extended(1.0)).collect();
    let mut floor_lin = DVector::zeros(n + 1);
    floor_lin[n] = 1.0;
    ext.push(Compiled { k: 1.0, lin: floor_lin, support: vec![], p: DMatrix::zeros(0, 0) });
    let mut obj_lin = DVector::zeros(n + 1);
    obj_lin[n] = -1.0;
    let obj = Compiled { k: 0.0, lin: obj_lin, support: vec![], p: DMatrix::zeros(0, 0) };
    let mut start = y0.clone().resize_vertically(n + 1, 0.0);
    start[n] = s0;
    // Stop as soon as the original constraints hold with some margin.
    let stop = |y: &DVector<f64>| {
        let x = y.rows(0, n).into_owned();
        cons.iter().all(|c| c.value(&x) >= 1e-3)
    };
    let p1_opts = SolveOptions { tol: opts.tol, max_iter: opts.max_iter.max(50) };
    let out = interior_point(&obj, &ext, start, &p1_opts, Some(&stop));
    let s = out.y[n];
    let y = out.y.rows(0, n).into_owned();
    if cons.iter().all(|c| c.value(&y) > 0.0) {
        PhaseOne::Feasible(y, out.iterations)
    } else {
        PhaseOne::Infeasible(s, out.iterations)
    }
}
