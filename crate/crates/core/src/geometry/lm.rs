//! Dense Levenberg–Marquardt with Marquardt diagonal scaling.

use nalgebra::{DMatrix, DVector};

/// A nonlinear least-squares problem `min 0.5 * ||r(p)||^2`.
pub trait LeastSquares {
    fn residuals(&self, params: &DVector<f64>) -> Option<DVector<f64>>;

    /// Jacobian of the residuals. Defaults to central differences.
    fn jacobian(&self, params: &DVector<f64>) -> Option<DMatrix<f64>> {
        numeric_jacobian(|p| self.residuals(p), params)
    }
}

pub(crate) fn fd_step(value: f64) -> f64 {
    1e-6 * (value.abs() + 1e-3)
}

pub fn numeric_jacobian(
    f: impl Fn(&DVector<f64>) -> Option<DVector<f64>>,
    params: &DVector<f64>,
) -> Option<DMatrix<f64>> {
    let base = f(params)?;
    let mut jac = DMatrix::zeros(base.len(), params.len());
    let mut p = params.clone();
    for j in 0..params.len() {
        let h = fd_step(params[j]);
        p[j] = params[j] + h;
        let plus = f(&p)?;
        p[j] = params[j] - h;
        let minus = f(&p)?;
        p[j] = params[j];
        jac.set_column(j, &((plus - minus) / (2.0 * h)));
    }
    Some(jac)
}

#[derive(Debug, Clone, Copy)]
pub struct LmConfig {
    pub max_iterations: usize,
    /// Stop when the relative cost reduction of an accepted step falls below this.
    pub cost_tolerance: f64,
    /// Stop when the relative parameter step falls below this.
    pub step_tolerance: f64,
    pub initial_lambda: f64,
}

impl Default for LmConfig {
    fn default() -> Self {
        Self {
            max_iterations: 100,
            cost_tolerance: 1e-15,
            step_tolerance: 1e-12,
            initial_lambda: 1e-3,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Termination {
    CostConverged,
    StepConverged,
    MaxIterations,
    /// Damping grew without finding a descent step.
    Stalled,
}

#[derive(Debug, Clone)]
pub struct LmReport {
    pub params: DVector<f64>,
    pub initial_cost: f64,
    pub final_cost: f64,
    pub iterations: usize,
    pub termination: Termination,
}

fn cost(r: &DVector<f64>) -> f64 {
    0.5 * r.norm_squared()
}

/// Minimizes from `start`. Only cost-decreasing steps are accepted, so the final
/// cost never exceeds the initial one. Returns `None` if the residuals cannot be
/// evaluated at `start`.
pub fn minimize<P: LeastSquares + ?Sized>(
    problem: &P,
    start: DVector<f64>,
    config: &LmConfig,
) -> Option<LmReport> {
    let mut params = start;
    let mut r = problem.residuals(&params)?;
    let initial_cost = cost(&r);
    let mut current = initial_cost;
    let mut lambda = config.initial_lambda;
    let mut termination = Termination::MaxIterations;
    let mut iterations = 0;

    'outer: while iterations < config.max_iterations {
        iterations += 1;
        let Some(jac) = problem.jacobian(&params) else {
            termination = Termination::Stalled;
            break;
        };
        let jtj = jac.transpose() * &jac;
        let jtr = jac.transpose() * &r;
        if jtr.amax() == 0.0 {
            termination = Termination::CostConverged;
            break;
        }
        loop {
            let mut a = jtj.clone();
            for i in 0..a.nrows() {
                let d = jtj[(i, i)].max(1e-12);
                a[(i, i)] += lambda * d;
            }
            let step = a.cholesky().map(|c| c.solve(&(-&jtr)));
            if let Some(step) = step {
                let candidate = &params + &step;
                if let Some(r_new) = problem.residuals(&candidate) {
                    let c_new = cost(&r_new);
                    if c_new.is_finite() && c_new < current {
                        let rel_drop = (current - c_new) / current.max(f64::MIN_POSITIVE);
                        let rel_step = step.norm() / (params.norm() + 1e-12);
                        params = candidate;
                        r = r_new;
                        current = c_new;
                        lambda = (lambda * 0.3).max(1e-12);
                        if rel_drop < config.cost_tolerance || current == 0.0 {
                            termination = Termination::CostConverged;
                            break 'outer;
                        }
                        if rel_step < config.step_tolerance {
                            termination = Termination::StepConverged;
                            break 'outer;
                        }
                        continue 'outer;
                    }
                }
            }
            lambda *= 10.0;
            if lambda > 1e16 {
                termination = Termination::Stalled;
                break 'outer;
            }
        }
    }

    Some(LmReport {
        params,
        initial_cost,
        final_cost: current,
        iterations,
        termination,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    struct Rosenbrock;

    impl LeastSquares for Rosenbrock {
        fn residuals(&self, p: &DVector<f64>) -> Option<DVector<f64>> {
            Some(DVector::from_vec(vec![10.0 * (p[1] - p[0] * p[0]), 1.0 - p[0]]))
        }
    }

    #[test]
    fn solves_rosenbrock() {
        let rep = minimize(&Rosenbrock, DVector::from_vec(vec![-1.2, 1.0]), &LmConfig::default()).unwrap();
        assert!((rep.params[0] - 1.0).abs() < 1e-8, "{:?}", rep);
        assert!((rep.params[1] - 1.0).abs() < 1e-8);
        assert!(rep.final_cost <= rep.initial_cost);
    }

    struct ExpFit {
        t: Vec<f64>,
        y: Vec<f64>,
    }

    impl LeastSquares for ExpFit {
        fn residuals(&self, p: &DVector<f64>) -> Option<DVector<f64>> {
            Some(DVector::from_iterator(
                self.t.len(),
                self.t.iter().zip(&self.y).map(|(t, y)| p[0] * (p[1] * t).exp() - y),
            ))
        }
    }

    #[test]
    fn fits_exponential() {
        let t: Vec<f64> = (0..20).map(|i| i as f64 * 0.1).collect();
        let y = t.iter().map(|t| 2.5 * (-1.3 * t).exp()).collect();
        let rep = minimize(&ExpFit { t, y }, DVector::from_vec(vec![1.0, 0.0]), &LmConfig::default())
            .unwrap();
        assert!((rep.params[0] - 2.5).abs() < 1e-7);
        assert!((rep.params[1] + 1.3).abs() < 1e-7);
    }
}
