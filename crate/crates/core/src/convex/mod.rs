//! Convex subproblems: concave quadratic objective, concave quadratic
//! constraints `g_i ≥ 0`, over complex blocks and real auxiliaries.
//!
//! Problems are solved on the real embedding by a primal-dual interior-point
//! method ([`ipm`]); fractional objectives go through the drivers in
//! [`dinkelbach`].

pub mod dinkelbach;
pub mod ipm;

use std::fmt::Write as _;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::surrogate::{QuadraticForm, Variables};

pub use dinkelbach::{
    dinkelbach, generalized_dinkelbach, DinkelbachOptions, DinkelbachState, FractionalProgram, MaxMinRatioProgram,
};

/// `maximize objective` subject to `constraints[i] ≥ 0`.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ConvexSubproblem {
    pub n_complex: usize,
    pub n_real: usize,
    pub objective: QuadraticForm,
    pub constraints: Vec<QuadraticForm>,
    /// Starting point; zero when absent. Need not be strictly feasible.
    pub start: Option<Variables>,
}

impl ConvexSubproblem {
    pub fn new(n_complex: usize, n_real: usize) -> Self {
        Self { n_complex, n_real, ..Self::default() }
    }

    pub fn dim(&self) -> usize {
        2 * self.n_complex + self.n_real
    }

    pub fn validate(&self) -> Result<()> {
        for f in std::iter::once(&self.objective).chain(&self.constraints) {
            let (c, r) = f.extent();
            if c > self.n_complex || r > self.n_real {
                return Err(Error::InvalidParameter("form references an undeclared variable".into()));
            }
            if f.squares.iter().any(|(w, _)| !(*w >= 0.0 && w.is_finite())) {
                return Err(Error::InvalidParameter("non-concave or non-finite form".into()));
            }
        }
        Ok(())
    }

    /// Plain-text dump for offline cross-checking. One line per term:
    ///
    /// ```text
    /// problem <n_complex> <n_real> <n_constraints>
    /// form objective|constraint <idx>
    /// const <c>
    /// lin <var> <re> <im>          (adds Re{c z_var})
    /// real <var> <a>               (adds a t_var)
    /// sq <w> <re0> <im0> [<var> <re> <im>]...   (subtracts w |c0 + Σ c z|²)
    /// end
    /// ```
    pub fn to_canonical_string(&self) -> String {
        let mut s = String::new();
        writeln!(s, "problem {} {} {}", self.n_complex, self.n_real, self.constraints.len()).unwrap();
        let dump = |s: &mut String, f: &QuadraticForm| {
            writeln!(s, "const {:.17e}", f.constant).unwrap();
            for (i, c) in &f.linear {
                writeln!(s, "lin {i} {:.17e} {:.17e}", c.re, c.im).unwrap();
            }
            for (j, a) in &f.real_linear {
                writeln!(s, "real {j} {a:.17e}").unwrap();
            }
            for (w, aff) in &f.squares {
                write!(s, "sq {w:.17e} {:.17e} {:.17e}", aff.constant.re, aff.constant.im).unwrap();
                for (i, c) in &aff.terms {
                    write!(s, " {i} {:.17e} {:.17e}", c.re, c.im).unwrap();
                }
                s.push('\n');
            }
            s.push_str("end\n");
        };
        s.push_str("form objective 0\n");
        dump(&mut s, &self.objective);
        for (k, c) in self.constraints.iter().enumerate() {
            writeln!(s, "form constraint {k}").unwrap();
            dump(&mut s, c);
        }
        s
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SolveStatus {
    Optimal,
    MaxIter,
    Infeasible,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolveResult {
    pub vars: Variables,
    pub objective: f64,
    pub kkt_residual: f64,
    pub iterations: usize,
    pub status: SolveStatus,
    /// Multipliers of the constraints, in order.
    pub multipliers: Vec<f64>,
    /// Largest constraint violation `max(0, -g_i)` at the returned point.
    pub max_violation: f64,
}

impl SolveResult {
    pub fn is_usable(&self) -> bool {
        self.status != SolveStatus::Infeasible
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolveOptions {
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for SolveOptions {
    fn default() -> Self {
        Self { tol: 1e-7, max_iter: 50 }
    }
}

/// A form compiled on the real embedding:
/// `g(y) = k + lin·y - y_Sᵀ P y_S` with `P` positive semidefinite on the
/// support `S`.
#[derive(Debug, Clone)]
pub(crate) struct Compiled {
    pub k: f64,
    pub lin: DVector<f64>,
    pub support: Vec<usize>,
    pub p: DMatrix<f64>,
}

impl Compiled {
    pub fn new(form: &QuadraticForm, n_complex: usize, dim: usize) -> Self {
        let mut lin = DVector::zeros(dim);
        for &(i, c) in &form.linear {
            lin[2 * i] += c.re;
            lin[2 * i + 1] -= c.im;
        }
        for &(j, a) in &form.real_linear {
            lin[2 * n_complex + j] += a;
        }
        let mut support: Vec<usize> =
            form.squares.iter().flat_map(|(_, a)| a.terms.iter().flat_map(|t| [2 * t.0, 2 * t.0 + 1])).collect();
        support.sort_unstable();
        support.dedup();
        let pos = |y: usize| support.binary_search(&y).unwrap();
        let s = support.len();
        let mut p = DMatrix::zeros(s, s);
        let mut k = form.constant;
        let mut alpha = DVector::zeros(s);
        let mut beta = DVector::zeros(s);
        for (w, aff) in &form.squares {
            alpha.fill(0.0);
            beta.fill(0.0);
            for &(i, c) in &aff.terms {
                let (a, b) = (pos(2 * i), pos(2 * i + 1));
                alpha[a] += c.re;
                alpha[b] -= c.im;
                beta[a] += c.im;
                beta[b] += c.re;
            }
            let (r0, s0) = (aff.constant.re, aff.constant.im);
            p.ger(*w, &alpha, &alpha, 1.0);
            p.ger(*w, &beta, &beta, 1.0);
            for (t, &y) in support.iter().enumerate() {
                lin[y] -= 2.0 * w * (r0 * alpha[t] + s0 * beta[t]);
            }
            k -= w * (r0 * r0 + s0 * s0);
        }
        Self { k, lin, support, p }
    }

    fn gather(&self, y: &DVector<f64>) -> DVector<f64> {
        DVector::from_iterator(self.support.len(), self.support.iter().map(|&i| y[i]))
    }

    pub fn value(&self, y: &DVector<f64>) -> f64 {
        let ys = self.gather(y);
        self.k + self.lin.dot(y) - ys.dot(&(&self.p * &ys))
    }

    pub fn gradient(&self, y: &DVector<f64>) -> DVector<f64> {
        let ys = self.gather(y);
        let py = &self.p * &ys;
        let mut g = self.lin.clone();
        for (t, &i) in self.support.iter().enumerate() {
            g[i] -= 2.0 * py[t];
        }
        g
    }

    /// Adds `c · 2P` into a full-dimension matrix.
    pub fn add_hessian(&self, m: &mut DMatrix<f64>, c: f64) {
        for (a, &i) in self.support.iter().enumerate() {
            for (b, &j) in self.support.iter().enumerate() {
                m[(i, j)] += 2.0 * c * self.p[(a, b)];
            }
        }
    }

    /// Same form with one extra trailing variable entering linearly.
    pub fn extended(&self, coef: f64) -> Self {
        let n = self.lin.len();
        let mut lin = self.lin.clone().resize_vertically(n + 1, 0.0);
        lin[n] = coef;
        Self { k: self.k, lin, support: self.support.clone(), p: self.p.clone() }
    }
}

/// Solves a convex subproblem. A strictly feasible start is found by a
/// phase-1 problem when the given start is not one.
pub fn solve(problem: &ConvexSubproblem, opts: &SolveOptions) -> Result<SolveResult> {
    problem.validate()?;
    let n = problem.dim();
    let obj = Compiled::new(&problem.objective, problem.n_complex, n);
    let cons: Vec<Compiled> = problem.constraints.iter().map(|c| Compiled::new(c, problem.n_complex, n)).collect();
    let y0 = match &problem.start {
        Some(v) => {
            let y = v.to_real();
            if y.len() != n {
                return Err(Error::InvalidParameter("start point has the wrong dimension".into()));
            }
            DVector::from_vec(y)
        }
        None => DVector::zeros(n),
    };
    if y0.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numerical("non-finite start point".into()));
    }

    let min_g = cons.iter().map(|c| c.value(&y0)).fold(f64::INFINITY, f64::min);
    let mut phase1_iters = 0;
    let y_start = if min_g < 1e-6 {
        match ipm::phase_one(&cons, &y0, opts) {
            ipm::PhaseOne::Feasible(y, it) => {
                phase1_iters = it;
                y
            }
            ipm::PhaseOne::Infeasible(slack, it) => {
                let vars = Variables::from_real(y0.as_slice(), problem.n_complex);
                return Ok(SolveResult {
                    objective: problem.objective.eval(&vars),
                    vars,
                    kkt_residual: f64::INFINITY,
                    iterations: it,
                    status: SolveStatus::Infeasible,
                    multipliers: vec![0.0; cons.len()],
                    max_violation: slack.max(0.0),
                });
            }
        }
    } else {
        y0
    };

    let out = ipm::interior_point(&obj, &cons, y_start, opts, None);
    let vars = Variables::from_real(out.y.as_slice(), problem.n_complex);
    let max_violation = cons.iter().map(|c| (-c.value(&out.y)).max(0.0)).fold(0.0, f64::max);
    Ok(SolveResult {
        objective: problem.objective.eval(&vars),
        vars,
        kkt_residual: out.kkt,
        iterations: out.iterations + phase1_iters,
        status: if out.converged { SolveStatus::Optimal } else { SolveStatus::MaxIter },
        multipliers: out.lambda.iter().copied().collect(),
        max_violation,
    })
}
