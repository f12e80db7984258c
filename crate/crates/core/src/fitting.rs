//! Damped nonlinear least squares (Levenberg-Marquardt) with a central
//! difference Jacobian.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Residual vector `r(theta)`; the solver minimizes `sum r_i^2`.
pub trait ResidualProblem {
    fn residual_count(&self) -> usize;
    fn param_count(&self) -> usize;
    fn residuals(&self, params: &[f64], out: &mut [f64]) -> Result<()>;
}

/// Adapts a closure into a [`ResidualProblem`].
pub struct FnProblem<F> {
    m: usize,
    n: usize,
    f: F,
}

impl<F> FnProblem<F>
where
    F: Fn(&[f64], &mut [f64]) -> Result<()>,
{
    pub fn new(m: usize, n: usize, f: F) -> Self {
        Self { m, n, f }
    }
}

impl<F> ResidualProblem for FnProblem<F>
where
    F: Fn(&[f64], &mut [f64]) -> Result<()>,
{
    fn residual_count(&self) -> usize {
        self.m
    }

    fn param_count(&self) -> usize {
        self.n
    }

    fn residuals(&self, params: &[f64], out: &mut [f64]) -> Result<()> {
        (self.f)(params, out)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LmConfig {
    pub initial_damping: f64,
    pub damping_up: f64,
    pub damping_down: f64,
    pub max_damping: f64,
    pub max_iterations: usize,
    pub gradient_tolerance: f64,
    pub step_tolerance: f64,
    pub cost_tolerance: f64,
    pub jacobian_step: f64,
}

impl Default for LmConfig {
    fn default() -> Self {
        Self {
            initial_damping: 1e-3,
            damping_up: 10.0,
            damping_down: 10.0,
            max_damping: 1e10,
            max_iterations: 200,
            gradient_tolerance: 1e-10,
            step_tolerance: 1e-12,
            cost_tolerance: 1e-12,
            jacobian_step: 1e-6,
        }
    }
}

impl LmConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            self.initial_damping,
            self.max_damping,
            self.gradient_tolerance,
            self.step_tolerance,
            self.cost_tolerance,
            self.jacobian_step,
        ];
        if positive.iter().any(|v| !(*v > 0.0)) {
            return Err(Error::Domain("LM tolerances and damping must be > 0".into()));
        }
        if !(self.damping_up > 1.0 && self.damping_down > 1.0) {
            return Err(Error::Domain("LM damping factors must be > 1".into()));
        }
        if self.max_iterations == 0 {
            return Err(Error::Domain("LM needs max_iterations >= 1".into()));
        }
        Ok(())
    }
}

/// Why the solver stopped.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Termination {
    Gradient,
    Step,
    Cost,
    /// Every trial step was rejected up to the damping ceiling.
    Stalled,
    MaxIterations,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub params: Vec<f64>,
    pub rmse: f64,
    pub cost: f64,
    pub iterations: usize,
    pub converged: bool,
    pub termination: Termination,
    pub final_gradient_norm: f64,
    /// Cost after the start point and after every accepted step.
    pub cost_history: Vec<f64>,
}

const STEP_FLOOR: f64 = 1e-8;

/// Central-difference Jacobian, `h_j = step * max(|theta_j|, 1e-8)`.
pub fn numerical_jacobian<P: ResidualProblem + ?Sized>(problem: &P, at: &[f64], step: f64) -> Result<DMatrix<f64>> {
    if !(step > 0.0) {
        return Err(Error::Domain(format!("Jacobian step must be > 0, got {step}")));
    }
    let m = problem.residual_count();
    let n = at.len();
    let mut jac = DMatrix::zeros(m, n);
    let mut x = at.to_vec();
    let mut plus = vec![0.0; m];
    let mut minus = vec![0.0; m];
    for j in 0..n {
        let h = step * at[j].abs().max(STEP_FLOOR);
        x[j] = at[j] + h;
        problem.residuals(&x, &mut plus)?;
        x[j] = at[j] - h;
        problem.residuals(&x, &mut minus)?;
        x[j] = at[j];
        // the actual spacing, which may differ from 2h by rounding
        let span = (at[j] + h) - (at[j] - h);
        for i in 0..m {
            jac[(i, j)] = (plus[i] - minus[i]) / span;
        }
    }
    Ok(jac)
}

fn sum_sq(r: &[f64]) -> f64 {
    r.iter().map(|v| v * v).sum()
}

/// Levenberg-Marquardt with Marquardt's `diag(J^T J)` scaling.
pub fn levenberg_marquardt<P: ResidualProblem + ?Sized>(
    problem: &P,
    p0: &[f64],
    config: &LmConfig,
) -> Result<FitResult> {
    config.validate()?;
    let n = problem.param_count();
    let m = problem.residual_count();
    if p0.len() != n {
        return Err(Error::LengthMismatch(p0.len(), n));
    }
    if m < n {
        return Err(Error::Domain(format!("{m} residuals cannot determine {n} parameters")));
    }
    if p0.iter().any(|v| !v.is_finite()) {
        return Err(Error::Domain("initial parameters must be finite".into()));
    }

    let mut params = p0.to_vec();
    let mut resid = vec![0.0; m];
    problem.residuals(&params, &mut resid)?;
    let mut cost = sum_sq(&resid);
    if !cost.is_finite() {
        return Err(Error::Evaluation("non-finite cost at the start point".into()));
    }
    let mut history = vec![cost];
    let mut damping = config.initial_damping;
    let mut scale = vec![0.0f64; n];
    let mut trial_resid = vec![0.0; m];
    let mut iterations = 0;

    let finish = |params: Vec<f64>, cost: f64, it: usize, term: Termination, g: f64, h: Vec<f64>| FitResult {
        params,
        rmse: (cost / m as f64).sqrt(),
        cost,
        iterations: it,
        converged: term != Termination::MaxIterations,
        termination: term,
        final_gradient_norm: g,
        cost_history: h,
    };

    loop {
        let jac = numerical_jacobian(problem, &params, config.jacobian_step)?;
        let r = DVector::from_column_slice(&resid);
        let grad = jac.tr_mul(&r);
        let grad_norm = grad.amax();
        if grad_norm <= config.gradient_tolerance || cost == 0.0 {
            return Ok(finish(
                params,
                cost,
                iterations,
                Termination::Gradient,
                grad_norm,
                history,
            ));
        }
        if iterations >= config.max_iterations {
            return Ok(finish(
                params,
                cost,
                iterations,
                Termination::MaxIterations,
                grad_norm,
                history,
            ));
        }
        iterations += 1;

        let normal = jac.tr_mul(&jac);
        for j in 0..n {
            scale[j] = scale[j].max(normal[(j, j)]);
        }
        let param_norm = params.iter().map(|v| v * v).sum::<f64>().sqrt();

        loop {
            let mut lhs = normal.clone();
            for j in 0..n {
                let d = if scale[j] > 0.0 { scale[j] } else { 1.0 };
                lhs[(j, j)] += damping * d;
            }
            let Some(chol) = lhs.cholesky() else {
                damping *= config.damping_up;
                if damping > config.max_damping {
                    return Err(Error::Singular);
                }
                continue;
            };
            let step = chol.solve(&(-&grad));
            if step.norm() <= config.step_tolerance * (param_norm + config.step_tolerance) {
                return Ok(finish(params, cost, iterations, Termination::Step, grad_norm, history));
            }
            let trial: Vec<f64> = params.iter().zip(step.iter()).map(|(p, s)| p + s).collect();
            let trial_cost = match problem.residuals(&trial, &mut trial_resid) {
                Ok(()) => sum_sq(&trial_resid),
                Err(_) => f64::INFINITY,
            };
            if trial_cost.is_finite() && trial_cost < cost {
                let decrease = (cost - trial_cost) / cost;
                params = trial;
                std::mem::swap(&mut resid, &mut trial_resid);
                cost = trial_cost;
                history.push(cost);
                damping = (damping / config.damping_down).max(f64::MIN_POSITIVE);
                if decrease <= config.cost_tolerance {
                    return Ok(finish(params, cost, iterations, Termination::Cost, grad_norm, history));
                }
                break;
            }
            damping *= config.damping_up;
            if damping > config.max_damping {
                return Ok(finish(
                    params,
                    cost,
                    iterations,
                    Termination::Stalled,
                    grad_norm,
                    history,
                ));
            }
        }
    }
}
