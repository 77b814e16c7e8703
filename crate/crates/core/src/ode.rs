//! Fixed-step classical Runge-Kutta for autonomous systems.

use nalgebra::SVector;

pub fn rk4_step<const N: usize, F>(f: &F, y: &SVector<f64, N>, h: f64) -> SVector<f64, N>
where
    F: Fn(&SVector<f64, N>) -> SVector<f64, N>,
{
    let k1 = f(y);
    let k2 = f(&(y + k1 * (h / 2.0)));
    let k3 = f(&(y + k2 * (h / 2.0)));
    let k4 = f(&(y + k3 * h));
    y + (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (h / 6.0)
}

/// Integrates `y' = f(y)` over `[0, t_end]` in `steps` equal steps, calling
/// `visit(t, y)` after each; stops early if `visit` returns false.
pub fn rk4<const N: usize, F, V>(
    f: F,
    y0: SVector<f64, N>,
    t_end: f64,
    steps: usize,
    mut visit: V,
) -> SVector<f64, N>
where
    F: Fn(&SVector<f64, N>) -> SVector<f64, N>,
    V: FnMut(f64, &SVector<f64, N>) -> bool,
{
    let h = t_end / steps as f64;
    let mut y = y0;
    for k in 1..=steps {
        y = rk4_step(&f, &y, h);
        if !visit(k as f64 * h, &y) {
            break;
        }
    }
    y
}
