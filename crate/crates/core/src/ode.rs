//! Adaptive Dormand–Prince 5(4) integration and a fixed-step RK4 stepper.

use crate::error::{Error, Result};
use crate::scalar::{lit, to_f64, Real};

const C: [f64; 7] = [0.0, 0.2, 0.3, 0.8, 8.0 / 9.0, 1.0, 1.0];
const A: [[f64; 6]; 7] = [
    [0.0; 6],
    [0.2, 0.0, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
    [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
    [
        19372.0 / 6561.0,
        -25360.0 / 2187.0,
        64448.0 / 6561.0,
        -212.0 / 729.0,
        0.0,
        0.0,
    ],
    [
        9017.0 / 3168.0,
        -355.0 / 33.0,
        46732.0 / 5247.0,
        49.0 / 176.0,
        -5103.0 / 18656.0,
        0.0,
    ],
    [
        35.0 / 384.0,
        0.0,
        500.0 / 1113.0,
        125.0 / 192.0,
        -2187.0 / 6784.0,
        11.0 / 84.0,
    ],
];
// 5th-order weights equal the last row of A (FSAL); these are 5th minus 4th.
const E: [f64; 7] = [
    71.0 / 57600.0,
    0.0,
    -71.0 / 16695.0,
    71.0 / 1920.0,
    -17253.0 / 339200.0,
    22.0 / 525.0,
    -1.0 / 40.0,
];

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Tolerances {
    pub rtol: f64,
    pub atol: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self {
            rtol: 1e-8,
            atol: 1e-10,
        }
    }
}

/// Adaptive Dormand–Prince integrator for `y' = f(t, y)`.
///
/// The accepted step size carries over between calls to [`Dopri5::advance`],
/// so a sequence of short sampling intervals does not restart from a tiny
/// step each time.
pub struct Dopri5<T: Real> {
    tol: Tolerances,
    h: Option<T>,
    k: [Vec<T>; 7],
    stage: Vec<T>,
    next: Vec<T>,
    pub accepted: usize,
    pub rejected: usize,
}

impl<T: Real> Dopri5<T> {
    pub fn new(dim: usize, tol: Tolerances) -> Self {
        Self {
            tol,
            h: None,
            k: std::array::from_fn(|_| vec![T::zero(); dim]),
            stage: vec![T::zero(); dim],
            next: vec![T::zero(); dim],
            accepted: 0,
            rejected: 0,
        }
    }

    fn error_norm(&self, y: &[T], h: T) -> T {
        let rtol: T = lit(self.tol.rtol);
        let atol: T = lit(self.tol.atol);
        let mut acc = T::zero();
        for i in 0..y.len() {
            let mut e = T::zero();
            for (s, &w) in E.iter().enumerate() {
                e += lit::<T>(w) * self.k[s][i];
            }
            let scale = atol + rtol * y[i].abs().max(self.next[i].abs());
            let r = h * e / scale;
            acc += r * r;
        }
        (acc / lit(y.len().max(1) as f64)).sqrt()
    }

    fn initial_step<F>(&mut self, f: &mut F, t: T, y: &[T], span: T) -> T
    where
        F: FnMut(T, &[T], &mut [T]),
    {
        let rtol: T = lit(self.tol.rtol);
        let atol: T = lit(self.tol.atol);
        f(t, y, &mut self.k[0]);
        let (mut d0, mut d1) = (T::zero(), T::zero());
        for i in 0..y.len() {
            let sc = atol + rtol * y[i].abs();
            d0 += (y[i] / sc) * (y[i] / sc);
            d1 += (self.k[0][i] / sc) * (self.k[0][i] / sc);
        }
        let n: T = lit(y.len().max(1) as f64);
        let (d0, d1) = ((d0 / n).sqrt(), (d1 / n).sqrt());
        let h0 = if d0 < lit(1e-5) || d1 < lit(1e-5) {
            lit(1e-6)
        } else {
            lit::<T>(0.01) * d0 / d1
        };
        h0.min(span)
    }

    /// Integrates from `t0` to `t1` in place.
    pub fn advance<F>(&mut self, f: &mut F, t0: T, t1: T, y: &mut [T]) -> Result<()>
    where
        F: FnMut(T, &[T], &mut [T]),
    {
        let n = y.len();
        let span = t1 - t0;
        if span <= T::zero() {
            return Ok(());
        }
        let mut h = match self.h {
            Some(h) => h,
            None => self.initial_step(f, t0, y, span),
        };
        let mut t = t0;
        let (safety, fac_min, fac_max): (T, T, T) = (lit(0.9), lit(0.2), lit(10.0));
        let eps: T = lit(f64::EPSILON);
        loop {
            let remaining = t1 - t;
            if remaining <= eps * t1.abs().max(T::one()) {
                break;
            }
            let last = h >= remaining;
            let step = if last { remaining } else { h };
            if step <= eps * lit::<T>(16.0) * t.abs().max(T::one()) {
                return Err(Error::StepUnderflow { t: to_f64(t) });
            }
            f(t, y, &mut self.k[0]);
            for s in 1..7 {
                for i in 0..n {
                    let mut acc = y[i];
                    for j in 0..s {
                        let a = A[s][j];
                        if a != 0.0 {
                            acc += step * lit::<T>(a) * self.k[j][i];
                        }
                    }
                    self.stage[i] = acc;
                }
                f(t + step * lit::<T>(C[s]), &self.stage, &mut self.k[s]);
                if s == 6 {
                    self.next.copy_from_slice(&self.stage);
                }
            }
            let err = self.error_norm(y, step);
            if err <= T::one() {
                y.copy_from_slice(&self.next);
                t += step;
                self.accepted += 1;
                let fac = if err == T::zero() {
                    fac_max
                } else {
                    (safety * err.powf(lit(-0.2))).min(fac_max).max(fac_min)
                };
                // A step shortened to hit `t1` says nothing about the next one.
                if last {
                    break;
                }
                h = step * fac;
            } else {
                self.rejected += 1;
                let fac = (safety * err.powf(lit(-0.2))).max(fac_min);
                h = step * fac;
            }
        }
        self.h = Some(h);
        Ok(())
    }
}

/// One classical RK4 step of size `h`.
pub fn rk4_step<T: Real, F>(f: &mut F, t: T, y: &mut [T], h: T)
where
    F: FnMut(T, &[T], &mut [T]),
{
    let n = y.len();
    let half: T = lit(0.5);
    let mut k1 = vec![T::zero(); n];
    let mut k2 = vec![T::zero(); n];
    let mut k3 = vec![T::zero(); n];
    let mut k4 = vec![T::zero(); n];
    let mut tmp = vec![T::zero(); n];
    f(t, y, &mut k1);
    for i in 0..n {
        tmp[i] = y[i] + half * h * k1[i];
    }
    f(t + half * h, &tmp, &mut k2);
    for i in 0..n {
        tmp[i] = y[i] + half * h * k2[i];
    }
    f(t + half * h, &tmp, &mut k3);
    for i in 0..n {
        tmp[i] = y[i] + h * k3[i];
    }
    f(t + h, &tmp, &mut k4);
    let sixth: T = lit(1.0 / 6.0);
    for i in 0..n {
        y[i] += h * sixth * (k1[i] + (k2[i] + k3[i]) * lit(2.0) + k4[i]);
    }
}
