//! Small least-squares and scalar-minimization helpers shared by the
//! analysis routines.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Settings for [`levenberg_marquardt`].
#[derive(Debug, Clone, Copy)]
pub struct LmOptions {
    pub max_iter: usize,
    /// Stop when every parameter changes by less than this (relative).
    pub rel_tol: f64,
}

impl Default for LmOptions {
    fn default() -> Self {
        Self { max_iter: 200, rel_tol: 1e-10 }
    }
}

#[derive(Debug, Clone)]
pub struct LmResult {
    pub params: Vec<f64>,
    /// Euclidean norm of the final residual vector.
    pub residual_norm: f64,
    pub iterations: usize,
    pub converged: bool,
    /// (JᵀJ)⁻¹·σ̂², or `None` when JᵀJ is singular or dof = 0.
    pub covariance: Option<DMatrix<f64>>,
}

impl LmResult {
    /// 1σ half-width of parameter `i`, if the covariance is available.
    pub fn std_error(&self, i: usize) -> Option<f64> {
        self.covariance.as_ref().map(|c| c[(i, i)].max(0.0).sqrt())
    }
}

/// Damped Gauss-Newton (Levenberg-Marquardt) on r(p) with analytic
/// Jacobian. `accept` may reject parameter vectors outside the model's
/// domain; rejected trial steps are treated like uphill steps.
pub fn levenberg_marquardt<R, J, A>(residual: R, jacobian: J, accept: A, p0: &[f64], opts: LmOptions) -> Result<LmResult>
where
    R: Fn(&[f64]) -> DVector<f64>,
    J: Fn(&[f64]) -> DMatrix<f64>,
    A: Fn(&[f64]) -> bool,
{
    let np = p0.len();
    let mut p = DVector::from_column_slice(p0);
    let mut r = residual(p.as_slice());
    let mut cost = r.norm_squared();
    if !cost.is_finite() {
        return Err(Error::FitFailure("non-finite residual at the starting point".into()));
    }
    let mut lambda = 1e-3;
    let mut converged = false;
    let mut iterations = 0;
    for it in 0..opts.max_iter {
        iterations = it + 1;
        let jac = jacobian(p.as_slice());
        let jtj = jac.transpose() * &jac;
        let g = jac.transpose() * &r;
        let mut stepped = false;
        for _ in 0..60 {
            let mut a = jtj.clone();
            for i in 0..np {
                a[(i, i)] += lambda * jtj[(i, i)].max(1e-300);
            }
            let Some(delta) = a.clone().cholesky().map(|c| c.solve(&(-&g))).or_else(|| a.lu().solve(&(-&g))) else {
                lambda *= 10.0;
                continue;
            };
            let trial = &p + &delta;
            if !accept(trial.as_slice()) {
                lambda *= 10.0;
                continue;
            }
            let rt = residual(trial.as_slice());
            let ct = rt.norm_squared();
            if ct.is_finite() && ct <= cost {
                let small = delta.iter().zip(p.iter()).all(|(d, pi)| d.abs() <= opts.rel_tol * pi.abs().max(1e-300));
                p = trial;
                r = rt;
                cost = ct;
                lambda = (lambda / 10.0).max(1e-15);
                stepped = true;
                if small {
                    converged = true;
                }
                break;
            }
            lambda *= 10.0;
        }
        if converged {
            break;
        }
        if !stepped {
            // No downhill step at any damping: at a minimum to round-off.
            converged = true;
            break;
        }
    }
    let m = r.len();
    let covariance = if m > np {
        let jac = jacobian(p.as_slice());
        let sigma2 = cost / (m - np) as f64;
        (jac.transpose() * jac).try_inverse().map(|c| c * sigma2)
    } else {
        None
    };
    Ok(LmResult { params: p.as_slice().to_vec(), residual_norm: cost.sqrt(), iterations, converged, covariance })
}

/// Least-squares polynomial coefficients (ascending powers).
pub fn polyfit(x: &[f64], y: &[f64], degree: usize) -> Result<Vec<f64>> {
    if x.len() != y.len() || x.len() <= degree {
        return Err(Error::FitFailure(format!("polyfit needs more than {degree} points")));
    }
    // Centre and scale for conditioning; coefficients are mapped back.
    let scale = x.iter().map(|v| v.abs()).fold(0.0, f64::max).max(1e-300);
    let a = DMatrix::from_fn(x.len(), degree + 1, |i, j| (x[i] / scale).powi(j as i32));
    let b = DVector::from_column_slice(y);
    let svd = a.svd(true, true);
    let c = svd.solve(&b, 1e-14).map_err(|e| Error::FitFailure(e.to_string()))?;
    Ok((0..=degree).map(|j| c[j] / scale.powi(j as i32)).collect())
}

/// Golden-section minimization of a unimodal function on [a, b].
pub fn golden_section<F: Fn(f64) -> f64>(f: F, mut a: f64, mut b: f64, tol: f64) -> (f64, f64) {
    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let mut c = b - inv_phi * (b - a);
    let mut d = a + inv_phi * (b - a);
    let (mut fc, mut fd) = (f(c), f(d));
    while (b - a).abs() > tol {
        if fc < fd {
            b = d;
            d = c;
            fd = fc;
            c = b - inv_phi * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + inv_phi * (b - a);
            fd = f(d);
        }
    }
    let x = 0.5 * (a + b);
    (x, f(x))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lm_recovers_exponential() {
        let t: Vec<f64> = (0..30).map(|i| i as f64 * 0.1).collect();
        let y: Vec<f64> = t.iter().map(|t| 2.0 * (-1.3 * t).exp()).collect();
        let res = |p: &[f64]| DVector::from_iterator(t.len(), t.iter().zip(&y).map(|(t, y)| p[0] * (-p[1] * t).exp() - y));
        let jac = |p: &[f64]| {
            DMatrix::from_fn(t.len(), 2, |i, j| {
                let e = (-p[1] * t[i]).exp();
                if j == 0 {
                    e
                } else {
                    -p[0] * t[i] * e
                }
            })
        };
        let out = levenberg_marquardt(res, jac, |_| true, &[1.0, 1.0], LmOptions::default()).unwrap();
        assert!(out.converged);
        assert!((out.params[0] - 2.0).abs() < 1e-9);
        assert!((out.params[1] - 1.3).abs() < 1e-9);
    }

    #[test]
    fn polyfit_exact_quadratic() {
        let x: Vec<f64> = (0..10).map(|i| i as f64 * 1e-4).collect();
        let y: Vec<f64> = x.iter().map(|x| 1.0 + 300.0 * x - 2e4 * x * x).collect();
        let c = polyfit(&x, &y, 2).unwrap();
        assert!((c[0] - 1.0).abs() < 1e-10);
        assert!((c[1] - 300.0).abs() < 1e-6);
        assert!((c[2] + 2e4).abs() < 1e-2);
    }

    #[test]
    fn golden_finds_parabola_minimum() {
        let (x, fx) = golden_section(|x| (x - 0.7).powi(2) + 1.0, 0.0, 2.0, 1e-10);
        assert!((x - 0.7).abs() < 1e-7);
        assert!((fx - 1.0).abs() < 1e-15);
    }
}
