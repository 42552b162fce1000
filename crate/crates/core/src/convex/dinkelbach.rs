//! Parametric drivers for concave-convex fractional programs.

use super::{solve, ConvexSubproblem, SolveOptions, SolveResult, SolveStatus};
use crate::error::Result;
use crate::surrogate::{QuadraticForm, Variables};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DinkelbachOptions {
    pub tol: f64,
    pub max_iter: usize,
    pub solve: SolveOptions,
}

impl Default for DinkelbachOptions {
    fn default() -> Self {
        Self { tol: 1e-6, max_iter: 30, solve: SolveOptions::default() }
    }
}

/// Ratio parameter and the per-iteration history of the driver.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct DinkelbachState {
    pub mu: f64,
    pub history: Vec<f64>,
    /// Optimal value of the parametric problem at each `μ` in `history`.
    pub f_values: Vec<f64>,
}

/// `max N(x) / D(x)` over the constraints of `base`, with `N` concave and `D`
/// convex and positive. `D` is carried as the concave form `-D`.
#[derive(Debug, Clone, PartialEq)]
pub struct FractionalProgram {
    pub base: ConvexSubproblem,
    pub numerator: QuadraticForm,
    pub neg_denominator: QuadraticForm,
}

fn start_of(base: &ConvexSubproblem) -> Variables {
    base.start
        .clone()
        .unwrap_or_else(|| Variables::new(vec![crate::C64::new(0.0, 0.0); base.n_complex], vec![0.0; base.n_real]))
}

fn is_feasible(base: &ConvexSubproblem, v: &Variables) -> bool {
    base.constraints.iter().all(|c| c.eval(v) >= -1e-9)
}

/// Dinkelbach's method: solve `max N - μD`, set `μ = N/D` at the solution,
/// repeat until the parametric optimum is below `tol`.
pub fn dinkelbach(program: &FractionalProgram, opts: &DinkelbachOptions) -> Result<(SolveResult, DinkelbachState)> {
    let ratio = |v: &Variables| program.numerator.eval(v) / -program.neg_denominator.eval(v);
    let mut current = start_of(&program.base);
    let mut state = DinkelbachState {
        mu: if is_feasible(&program.base, &current) { ratio(&current).max(0.0) } else { 0.0 },
        ..Default::default()
    };
    let mut best: Option<SolveResult> = None;
    for _ in 0..opts.max_iter {
        let mut p = program.base.clone();
        p.objective = program.numerator.clone();
        p.objective.add_scaled(&program.neg_denominator, state.mu);
        p.start = Some(current.clone());
        let res = solve(&p, &opts.solve)?;
        if res.status == SolveStatus::Infeasible {
            return Ok((best.unwrap_or(res), state));
        }
        let f = res.objective;
        let mu_new = ratio(&res.vars);
        state.history.push(state.mu);
        state.f_values.push(f);
        if mu_new < state.mu {
            // Solver inaccuracy; the previous iterate is at least as good.
            if best.is_none() {
                best = Some(res);
            }
            break;
        }
        current = res.vars.clone();
        state.mu = mu_new;
        best = Some(res);
        if f <= opts.tol {
            break;
        }
    }
    Ok((best.expect("at least one iteration"), state))
}

/// `max min_u N_u(x) / (w_u D_u(x))` over the constraints of `base`.
#[derive(Debug, Clone, PartialEq)]
pub struct MaxMinRatioProgram {
    pub base: ConvexSubproblem,
    pub numerators: Vec<QuadraticForm>,
    pub neg_denominators: Vec<QuadraticForm>,
    pub weights: Vec<f64>,
}

impl MaxMinRatioProgram {
    pub fn min_ratio(&self, v: &Variables) -> f64 {
        self.numerators
            .iter()
            .zip(&self.neg_denominators)
            .zip(&self.weights)
            .map(|((n, d), w)| n.eval(v) / (-d.eval(v) * w))
            .fold(f64::INFINITY, f64::min)
    }
}

/// Generalized Dinkelbach: at `μ` solve `max t` subject to
/// `N_u - μ w_u D_u ≥ w_u t`, then set `μ` to the smallest weighted ratio at
/// the solution. Stops once `t` is below `tol`.
pub fn generalized_dinkelbach(
    program: &MaxMinRatioProgram,
    opts: &DinkelbachOptions,
) -> Result<(SolveResult, DinkelbachState)> {
    let base = &program.base;
    let t_index = base.n_real;
    let mut current = start_of(base);
    let mut state = DinkelbachState {
        mu: if is_feasible(base, &current) { program.min_ratio(&current).max(0.0) } else { 0.0 },
        ..Default::default()
    };
    let mut best: Option<SolveResult> = None;
    for _ in 0..opts.max_iter {
        let mut p = ConvexSubproblem::new(base.n_complex, base.n_real + 1);
        p.constraints = base.constraints.clone();
        let mut slack = f64::INFINITY;
        for ((n, d), &w) in program.numerators.iter().zip(&program.neg_denominators).zip(&program.weights) {
            let mut c = n.clone();
            c.add_scaled(d, state.mu * w);
            slack = slack.min(c.eval(&current) / w);
            c.add_real(t_index, -w);
            p.constraints.push(c);
        }
        p.objective = QuadraticForm::real_var(t_index);
        let mut start = current.clone();
        start.real.push(slack - 1.0);
        p.start = Some(start);
        let res = solve(&p, &opts.solve)?;
        if res.status == SolveStatus::Infeasible {
            return Ok((best.unwrap_or(strip_last(res)), state));
        }
        let f = res.objective;
        let res = strip_last(res);
        let mu_new = program.min_ratio(&res.vars);
        state.history.push(state.mu);
        state.f_values.push(f);
        if mu_new < state.mu {
            if best.is_none() {
                best = Some(res);
            }
            break;
        }
        current = res.vars.clone();
        state.mu = mu_new;
        best = Some(res);
        if f <= opts.tol {
            break;
        }
    }
    Ok((best.expect("at least one iteration"), state))
}

fn strip_last(mut r: SolveResult) -> SolveResult {
    r.vars.real.pop();
    r
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::C64;

    /// N(x) = x, D(x) = 1 + x with x = Re z, |z|² ≤ 1.
    fn toy() -> FractionalProgram {
        let mut base = ConvexSubproblem::new(1, 0);
        base.constraints.push(QuadraticForm::ball([0], 1.0));
        let mut numerator = QuadraticForm::default();
        numerator.linear.push((0, C64::new(1.0, 0.0)));
        let mut neg_denominator = QuadraticForm::constant(-1.0);
        neg_denominator.linear.push((0, C64::new(-1.0, 0.0)));
        FractionalProgram { base, numerator, neg_denominator }
    }

    #[test]
    fn scalar_ratio() {
        let (res, state) = dinkelbach(&toy(), &DinkelbachOptions::default()).unwrap();
        assert!((state.mu - 0.5).abs() < 1e-6, "{}", state.mu);
        assert!((res.vars.complex[0].re - 1.0).abs() < 1e-3);
        assert!(state.history.windows(2).all(|w| w[1] >= w[0] - 1e-12));
    }

    #[test]
    fn single_ratio_matches_generalized() {
        let fp = toy();
        let mm = MaxMinRatioProgram {
            base: fp.base.clone(),
            numerators: vec![fp.numerator.clone()],
            neg_denominators: vec![fp.neg_denominator.clone()],
            weights: vec![1.0],
        };
        let (_, a) = dinkelbach(&fp, &DinkelbachOptions::default()).unwrap();
        let (_, b) = generalized_dinkelbach(&mm, &DinkelbachOptions::default()).unwrap();
        assert!((a.mu - b.mu).abs() < 1e-6);
    }
}
