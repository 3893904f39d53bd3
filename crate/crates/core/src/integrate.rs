//! Fixed-step classical Runge-Kutta integration with reusable buffers.
//!
//! Every component is advanced with the same sequence of floating point
//! operations, so two systems whose right-hand sides agree bitwise on a
//! shared subset of coordinates produce bitwise identical trajectories on
//! that subset.

use nalgebra::DVector;

use crate::scalar::{lit, Real};

#[derive(Debug, Clone)]
pub struct Rk4<T: Real> {
    k1: DVector<T>,
    k2: DVector<T>,
    k3: DVector<T>,
    k4: DVector<T>,
    stage: DVector<T>,
}

impl<T: Real> Rk4<T> {
    pub fn new(dim: usize) -> Self {
        Self {
            k1: DVector::zeros(dim),
            k2: DVector::zeros(dim),
            k3: DVector::zeros(dim),
            k4: DVector::zeros(dim),
            stage: DVector::zeros(dim),
        }
    }

    pub fn dim(&self) -> usize {
        self.k1.len()
    }

    /// Advances `y` from `t` to `t + dt`. `f(t, y, out)` writes `dy/dt` into
    /// `out`.
    pub fn step<F>(&mut self, f: &mut F, t: T, dt: T, y: &mut DVector<T>)
    where
        F: FnMut(T, &DVector<T>, &mut DVector<T>),
    {
        let half = dt * lit::<T>(0.5);
        let sixth = dt / lit::<T>(6.0);
        let two = lit::<T>(2.0);

        f(t, y, &mut self.k1);
        for i in 0..y.len() {
            self.stage[i] = y[i] + half * self.k1[i];
        }
        f(t + half, &self.stage, &mut self.k2);
        for i in 0..y.len() {
            self.stage[i] = y[i] + half * self.k2[i];
        }
        f(t + half, &self.stage, &mut self.k3);
        for i in 0..y.len() {
            self.stage[i] = y[i] + dt * self.k3[i];
        }
        f(t + dt, &self.stage, &mut self.k4);
        for i in 0..y.len() {
            y[i] += sixth * (self.k1[i] + two * self.k2[i] + two * self.k3[i] + self.k4[i]);
        }
    }
}

/// Number of steps of size `dt` that cover `horizon` (rounded to nearest).
pub fn step_count<T: Real>(horizon: T, dt: T) -> usize {
    crate::scalar::to_f64((horizon / dt).round()).max(0.0) as usize
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exponential_decay_is_fourth_order() {
        let exact = (-1.0f64).exp();
        let mut errors = Vec::new();
        for &dt in &[0.1, 0.05] {
            let mut rk = Rk4::new(1);
            let mut y = DVector::from_element(1, 1.0);
            let steps = step_count(1.0, dt);
            for k in 0..steps {
                rk.step(
                    &mut |_, y: &DVector<f64>, out: &mut DVector<f64>| out[0] = -y[0],
                    k as f64 * dt,
                    dt,
                    &mut y,
                );
            }
            errors.push((y[0] - exact).abs());
        }
        let order = (errors[0] / errors[1]).log2();
        assert!((order - 4.0).abs() < 0.2, "observed order {order}");
    }

    #[test]
    fn harmonic_oscillator_energy() {
        let mut rk = Rk4::new(2);
        let mut y = DVector::from_vec(vec![1.0f64, 0.0]);
        let dt = 2.0 * std::f64::consts::PI / 6000.0;
        for k in 0..6000 {
            rk.step(
                &mut |_, y: &DVector<f64>, out: &mut DVector<f64>| {
                    out[0] = y[1];
                    out[1] = -y[0];
                },
                k as f64 * dt,
                dt,
                &mut y,
            );
        }
        assert!((y[0] - 1.0).abs() < 1e-9 && y[1].abs() < 1e-9);
    }
}
