//! Bounded Levenberg–Marquardt for small weighted least-squares problems.

use nalgebra::{DMatrix, DVector};

/// A weighted residual problem with box constraints on the free coordinates.
pub trait Problem {
    fn dim(&self) -> usize;
    /// Weighted residuals √w·(y − model) at `x`.
    fn residuals(&self, x: &[f64], out: &mut [f64]);
    fn n_residuals(&self) -> usize;
    /// Clamp `x` into the feasible box.
    fn project(&self, x: &mut [f64]);
    /// Typical magnitude of coordinate `k`, used for step sizes.
    fn scale(&self, x: &[f64], k: usize) -> f64 {
        x[k].abs().max(1e-3)
    }
}

#[derive(Clone, Copy, Debug)]
pub struct Settings {
    pub max_iterations: usize,
    pub rel_cost_tol: f64,
    pub step_tol: f64,
}

impl Default for Settings {
    fn default() -> Self {
        Self {
            max_iterations: 400,
            rel_cost_tol: 1e-10,
            step_tol: 1e-12,
        }
    }
}

#[derive(Clone, Debug)]
pub struct Outcome {
    pub x: Vec<f64>,
    pub cost: f64,
    pub iterations: usize,
    pub converged: bool,
    /// JᵀJ at the returned point.
    pub curvature: DMatrix<f64>,
}

fn cost(r: &[f64]) -> f64 {
    r.iter().map(|v| v * v).sum()
}

/// Central-difference Jacobian of the residuals; one-sided where a bound blocks a side.
fn jacobian<P: Problem>(p: &P, x: &[f64], r0: &[f64]) -> DMatrix<f64> {
    let (m, n) = (p.n_residuals(), p.dim());
    let mut jac = DMatrix::zeros(m, n);
    let mut rp = vec![0.0; m];
    let mut rm = vec![0.0; m];
    for k in 0..n {
        let h = 1e-6 * p.scale(x, k);
        let mut xp = x.to_vec();
        xp[k] += h;
        p.project(&mut xp);
        let mut xm = x.to_vec();
        xm[k] -= h;
        p.project(&mut xm);
        let (hp, hm) = (xp[k] - x[k], x[k] - xm[k]);
        if hp > 0.0 {
            p.residuals(&xp, &mut rp);
        } else {
            rp.copy_from_slice(r0);
        }
        if hm > 0.0 {
            p.residuals(&xm, &mut rm);
        } else {
            rm.copy_from_slice(r0);
        }
        let span = hp + hm;
        if span == 0.0 {
            continue;
        }
        for i in 0..m {
            // residuals are y − model, so the model derivative is the negative
            jac[(i, k)] = -(rp[i] - rm[i]) / span;
        }
    }
    jac
}

/// Minimizes ½‖r(x)‖² from `x0`.
pub fn minimize<P: Problem>(p: &P, x0: &[f64], settings: &Settings) -> Outcome {
    let n = p.dim();
    let mut x = x0.to_vec();
    p.project(&mut x);
    let mut r = vec![0.0; p.n_residuals()];
    p.residuals(&x, &mut r);
    let mut c = cost(&r);
    let mut lambda = 1e-3;
    let mut converged = false;
    let mut iterations = 0;
    let mut trial = vec![0.0; p.n_residuals()];
    let mut jac = jacobian(p, &x, &r);

    while iterations < settings.max_iterations {
        iterations += 1;
        let jtj = jac.transpose() * &jac;
        // J is the model Jacobian; residuals are y − model, so the step solves (JᵀJ + λD)δ = Jᵀr
        let g = jac.transpose() * DVector::from_column_slice(&r);
        let mut accepted = false;
        let mut small_step = false;
        for _ in 0..30 {
            let mut a = jtj.clone();
            for k in 0..n {
                a[(k, k)] += lambda * jtj[(k, k)].max(1e-12);
            }
            let Some(chol) = a.cholesky() else {
                lambda *= 10.0;
                continue;
            };
            let delta = chol.solve(&g);
            let mut xn: Vec<f64> = x.iter().zip(delta.iter()).map(|(a, d)| a + d).collect();
            p.project(&mut xn);
            let step_norm = (0..n)
                .map(|k| ((xn[k] - x[k]) / p.scale(&x, k)).powi(2))
                .sum::<f64>()
                .sqrt();
            p.residuals(&xn, &mut trial);
            let cn = cost(&trial);
            if cn.is_finite() && cn <= c {
                let rel = if c > 0.0 { (c - cn) / c } else { 0.0 };
                x = xn;
                std::mem::swap(&mut r, &mut trial);
                c = cn;
                lambda = (lambda * 0.3).max(1e-12);
                accepted = true;
                if rel < settings.rel_cost_tol || step_norm < settings.step_tol || c == 0.0 {
                    converged = true;
                }
                break;
            }
            if step_norm < settings.step_tol {
                small_step = true;
                break;
            }
            lambda *= 10.0;
        }
        if small_step || converged {
            converged = true;
            break;
        }
        if !accepted {
            break;
        }
        jac = jacobian(p, &x, &r);
    }
    let jac = jacobian(p, &x, &r);
    Outcome {
        curvature: jac.transpose() * &jac,
        x,
        cost: c,
        iterations,
        converged,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    struct ExpDecay {
        t: Vec<f64>,
        y: Vec<f64>,
    }

    impl Problem for ExpDecay {
        fn dim(&self) -> usize {
            2
        }
        fn n_residuals(&self) -> usize {
            self.t.len()
        }
        fn residuals(&self, x: &[f64], out: &mut [f64]) {
            for ((o, t), y) in out.iter_mut().zip(&self.t).zip(&self.y) {
                *o = y - x[0] * (-x[1] * t).exp();
            }
        }
        fn project(&self, x: &mut [f64]) {
            x[1] = x[1].max(1e-9);
        }
    }

    #[test]
    fn recovers_exponential() {
        let t: Vec<f64> = (0..50).map(|i| i as f64 * 0.1).collect();
        let y = t.iter().map(|t| 3.0 * (-0.7 * t).exp()).collect();
        let p = ExpDecay { t, y };
        let out = minimize(&p, &[1.0, 2.0], &Settings::default());
        assert!(out.converged);
        assert!((out.x[0] - 3.0).abs() < 1e-7, "{:?}", out.x);
        assert!((out.x[1] - 0.7).abs() < 1e-7);
    }

    #[test]
    fn respects_bounds() {
        // data growing in time pushes the rate to its lower bound
        let t: Vec<f64> = (0..20).map(|i| i as f64).collect();
        let y = t.iter().map(|t| 1.0 + 0.1 * t).collect();
        let p = ExpDecay { t, y };
        let out = minimize(&p, &[1.0, 0.5], &Settings::default());
        assert!(out.x[1] >= 1e-9);
    }
}
