//! Levenberg–Marquardt for weighted least squares.

use nalgebra::{DMatrix, DVector};

/// Tolerances. Convergence is declared when an accepted step changes the
/// parameters by less than `rel_step` (relative), when the gradient norm
/// drops below `grad_norm`, or when even the undamped step cannot lower χ²
/// beyond round-off.
#[derive(Debug, Clone, Copy)]
pub struct LmOptions {
    pub rel_step: f64,
    pub grad_norm: f64,
    pub max_iterations: usize,
}

impl Default for LmOptions {
    fn default() -> Self {
        Self {
            rel_step: 1e-10,
            grad_norm: 1e-12,
            max_iterations: 200,
        }
    }
}

#[derive(Debug, Clone)]
pub struct LmOutcome {
    pub params: Vec<f64>,
    /// `(JᵀJ)⁻¹` of the whitened problem at `params`.
    pub covariance: DMatrix<f64>,
    pub chi_square: f64,
    pub iterations: usize,
    pub converged: bool,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum LmFailure {
    /// Normal equations could not be inverted at the final point.
    Singular,
    /// The residuals are not finite at the starting point.
    NonFinite,
}

/// Whitened residuals `r_i = (y_i − m_i)/σ_i` and their Jacobian.
pub trait Residuals {
    fn residual_count(&self) -> usize;
    fn residuals(&self, params: &[f64]) -> DVector<f64>;
    fn jacobian(&self, params: &[f64]) -> DMatrix<f64>;
}

fn chi2(r: &DVector<f64>) -> f64 {
    r.norm_squared()
}

pub fn minimize<P: Residuals>(problem: &P, start: &[f64], opts: LmOptions) -> Result<LmOutcome, LmFailure> {
    let mut x = DVector::from_column_slice(start);
    let mut r = problem.residuals(x.as_slice());
    let mut cost = chi2(&r);
    if !cost.is_finite() {
        return Err(LmFailure::NonFinite);
    }
    let mut lambda = 1e-3;
    let mut converged = false;
    let mut iterations = 0;

    while iterations < opts.max_iterations {
        iterations += 1;
        let j = problem.jacobian(x.as_slice());
        let jtj = j.transpose() * &j;
        let g = j.transpose() * &r;
        if g.norm() < opts.grad_norm {
            converged = true;
            break;
        }
        // undamped Gauss–Newton decrease predicted by the linear model
        if let Some(chol) = jtj.clone().cholesky() {
            let step = chol.solve(&(-&g));
            let predicted = -(g.dot(&step));
            if predicted <= 1e-13 * cost.max(1.0) {
                converged = true;
                break;
            }
        }
        let mut accepted = false;
        while lambda < 1e16 {
            let mut a = jtj.clone();
            for i in 0..a.nrows() {
                a[(i, i)] += lambda * jtj[(i, i)].max(1e-300);
            }
            let Some(chol) = a.cholesky() else {
                lambda *= 10.0;
                continue;
            };
            let step = chol.solve(&(-&g));
            let trial = &x + &step;
            let r_trial = problem.residuals(trial.as_slice());
            let c_trial = chi2(&r_trial);
            if c_trial.is_finite() && c_trial <= cost {
                let rel = step.norm() / (x.norm() + 1e-300);
                x = trial;
                r = r_trial;
                cost = c_trial;
                lambda = (lambda * 0.3).max(1e-12);
                accepted = true;
                if rel < opts.rel_step {
                    converged = true;
                }
                break;
            }
            lambda *= 10.0;
        }
        if converged {
            break;
        }
        if !accepted {
            // no downhill step at any damping: a minimum to round-off
            converged = true;
            break;
        }
    }

    let j = problem.jacobian(x.as_slice());
    let covariance = (j.transpose() * &j)
        .cholesky()
        .map(|c| c.inverse())
        .ok_or(LmFailure::Singular)?;
    if covariance.iter().any(|v| !v.is_finite()) {
        return Err(LmFailure::Singular);
    }
    Ok(LmOutcome {
        params: x.as_slice().to_vec(),
        covariance,
        chi_square: cost,
        iterations,
        converged,
    })
}

/// Central-difference Jacobian of whitened residuals.
pub fn numeric_jacobian<F: Fn(&[f64]) -> DVector<f64>>(f: F, params: &[f64], rows: usize) -> DMatrix<f64> {
    let mut j = DMatrix::zeros(rows, params.len());
    let mut p = params.to_vec();
    for c in 0..params.len() {
        let h = 1e-6 * params[c].abs().max(1e-8);
        p[c] = params[c] + h;
        let up = f(&p);
        p[c] = params[c] - h;
        let dn = f(&p);
        p[c] = params[c];
        j.set_column(c, &((up - dn) / (2.0 * h)));
    }
    j
}

#[cfg(test)]
mod tests {
    use super::*;

    struct Exp {
        x: Vec<f64>,
        y: Vec<f64>,
    }

    impl Residuals for Exp {
        fn residual_count(&self) -> usize {
            self.x.len()
        }
        fn residuals(&self, p: &[f64]) -> DVector<f64> {
            DVector::from_iterator(
                self.x.len(),
                self.x.iter().zip(&self.y).map(|(x, y)| y - p[0] * (-p[1] * x).exp()),
            )
        }
        fn jacobian(&self, p: &[f64]) -> DMatrix<f64> {
            DMatrix::from_fn(self.x.len(), 2, |i, c| {
                let e = (-p[1] * self.x[i]).exp();
                if c == 0 {
                    -e
                } else {
                    p[0] * self.x[i] * e
                }
            })
        }
    }

    #[test]
    fn recovers_exponential() {
        let x: Vec<f64> = (0..30).map(|i| i as f64 * 0.2).collect();
        let y = x.iter().map(|x| 3.0 * (-0.7 * x).exp()).collect();
        let prob = Exp { x, y };
        let out = minimize(&prob, &[1.0, 0.1], LmOptions::default()).unwrap();
        assert!(out.converged);
        assert!((out.params[0] - 3.0).abs() < 1e-9);
        assert!((out.params[1] - 0.7).abs() < 1e-9);
        // restart at the optimum stops at once
        let again = minimize(&prob, &out.params, LmOptions::default()).unwrap();
        assert!(again.iterations <= 2);
    }

    #[test]
    fn numeric_matches_analytic_jacobian() {
        let x: Vec<f64> = (0..10).map(|i| i as f64 * 0.3).collect();
        let prob = Exp {
            y: vec![0.0; x.len()],
            x,
        };
        let p = [2.0, 0.4];
        let a = prob.jacobian(&p);
        let n = numeric_jacobian(|q| prob.residuals(q), &p, prob.residual_count());
        assert!((a - n).amax() < 1e-7);
    }

    #[test]
    fn singular_problem_reported() {
        // the model only depends on p0 + p1
        struct Sum;
        impl Residuals for Sum {
            fn residual_count(&self) -> usize {
                3
            }
            fn residuals(&self, p: &[f64]) -> DVector<f64> {
                DVector::from_element(3, 1.0 - p[0] - p[1])
            }
            fn jacobian(&self, _: &[f64]) -> DMatrix<f64> {
                DMatrix::from_element(3, 2, -1.0)
            }
        }
        assert_eq!(
            minimize(&Sum, &[0.0, 0.0], LmOptions::default()).unwrap_err(),
            LmFailure::Singular
        );
    }
}
