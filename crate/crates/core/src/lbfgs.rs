//! Limited-memory BFGS with Armijo backtracking.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

pub const ARMIJO_C: f64 = 1e-4;
pub const SHRINK: f64 = 0.5;
pub const MEMORY: usize = 10;
const MAX_BACKTRACKS: usize = 60;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Termination {
    Converged,
    MaxIterations,
    LineSearchFailed,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LbfgsResult {
    pub x: Vec<f64>,
    pub value: f64,
    pub grad_inf: f64,
    pub iterations: usize,
    pub termination: Termination,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn inf_norm(a: &[f64]) -> f64 {
    a.iter().fold(0.0, |m, v| m.max(v.abs()))
}

/// Minimizes `f`, which returns the value and writes the gradient into its
/// second argument. Stops when the gradient's max-norm drops below `tol`.
pub fn minimize<F>(mut f: F, x0: Vec<f64>, tol: f64, max_iter: usize) -> LbfgsResult
where
    F: FnMut(&[f64], &mut [f64]) -> f64,
{
    let n = x0.len();
    let mut x = x0;
    let mut g = vec![0.0; n];
    let mut fx = f(&x, &mut g);
    let mut history: VecDeque<(Vec<f64>, Vec<f64>, f64)> = VecDeque::with_capacity(MEMORY);
    let mut x_new = vec![0.0; n];
    let mut g_new = vec![0.0; n];
    let mut alpha = vec![0.0; MEMORY];

    for iter in 0..max_iter {
        let gi = inf_norm(&g);
        if gi < tol {
            return LbfgsResult {
                x,
                value: fx,
                grad_inf: gi,
                iterations: iter,
                termination: Termination::Converged,
            };
        }
        // two-loop recursion
        let mut dir: Vec<f64> = g.iter().map(|v| -v).collect();
        for (k, (s, y, rho)) in history.iter().enumerate().rev() {
            alpha[k] = rho * dot(s, &dir);
            dir.iter_mut()
                .zip(y)
                .for_each(|(d, yv)| *d -= alpha[k] * yv);
        }
        let gamma = history
            .back()
            .map_or_else(|| 1.0 / gi.max(1.0), |(s, y, _)| dot(s, y) / dot(y, y));
        dir.iter_mut().for_each(|d| *d *= gamma);
        for (k, (s, y, rho)) in history.iter().enumerate() {
            let beta = rho * dot(y, &dir);
            dir.iter_mut()
                .zip(s)
                .for_each(|(d, sv)| *d += (alpha[k] - beta) * sv);
        }
        let mut slope = dot(&g, &dir);
        if slope >= 0.0 {
            history.clear();
            dir = g.iter().map(|v| -v / gi.max(1.0)).collect();
            slope = dot(&g, &dir);
        }

        let mut step = 1.0;
        let mut accepted = false;
        for _ in 0..MAX_BACKTRACKS {
            x_new
                .iter_mut()
                .zip(&x)
                .zip(&dir)
                .for_each(|((xn, xv), d)| *xn = xv + step * d);
            let f_new = f(&x_new, &mut g_new);
            if f_new.is_finite() && f_new <= fx + ARMIJO_C * step * slope {
                let s: Vec<f64> = x_new.iter().zip(&x).map(|(a, b)| a - b).collect();
                let y: Vec<f64> = g_new.iter().zip(&g).map(|(a, b)| a - b).collect();
                let sy = dot(&s, &y);
                if sy > 1e-300 {
                    if history.len() == MEMORY {
                        history.pop_front();
                    }
                    history.push_back((s, y, 1.0 / sy));
                }
                std::mem::swap(&mut x, &mut x_new);
                std::mem::swap(&mut g, &mut g_new);
                fx = f_new;
                accepted = true;
                break;
            }
            step *= SHRINK;
        }
        if !accepted {
            if history.is_empty() {
                let gi = inf_norm(&g);
                return LbfgsResult {
                    x,
                    value: fx,
                    grad_inf: gi,
                    iterations: iter,
                    termination: Termination::LineSearchFailed,
                };
            }
            history.clear();
        }
    }
    let gi = inf_norm(&g);
    let termination = if gi < tol {
        Termination::Converged
    } else {
        Termination::MaxIterations
    };
    LbfgsResult {
        x,
        value: fx,
        grad_inf: gi,
        iterations: max_iter,
        termination,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rosenbrock() {
        let r = minimize(
            |x, g| {
                let (a, b) = (x[0], x[1]);
                g[0] = -2.0 * (1.0 - a) - 400.0 * a * (b - a * a);
                g[1] = 200.0 * (b - a * a);
                (1.0 - a).powi(2) + 100.0 * (b - a * a).powi(2)
            },
            vec![-1.2, 1.0],
            1e-10,
            1000,
        );
        assert_eq!(r.termination, Termination::Converged);
        assert!((r.x[0] - 1.0).abs() < 1e-8 && (r.x[1] - 1.0).abs() < 1e-8);
    }

    #[test]
    fn ill_conditioned_quadratic() {
        let scales: Vec<f64> = (0..50).map(|i| 10f64.powf(i as f64 / 10.0)).collect();
        let r = minimize(
            |x, g| {
                let mut v = 0.0;
                for i in 0..x.len() {
                    g[i] = scales[i] * x[i];
                    v += 0.5 * scales[i] * x[i] * x[i];
                }
                v
            },
            vec![1.0; 50],
            1e-9,
            5000,
        );
        assert_eq!(r.termination, Termination::Converged);
    }
}
