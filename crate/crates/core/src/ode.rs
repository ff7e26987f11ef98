//! Dormand–Prince 5(4) with adaptive steps, landing exactly on output times.

use log::debug;
use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::linalg::axpy;
use crate::C64;

const C: [f64; 7] = [0.0, 1.0 / 5.0, 3.0 / 10.0, 4.0 / 5.0, 8.0 / 9.0, 1.0, 1.0];
const A: [[f64; 6]; 7] = [
    [0.0; 6],
    [1.0 / 5.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
    [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
    [19372.0 / 6561.0, -25360.0 / 2187.0, 64448.0 / 6561.0, -212.0 / 729.0, 0.0, 0.0],
    [9017.0 / 3168.0, -355.0 / 33.0, 46732.0 / 5247.0, 49.0 / 176.0, -5103.0 / 18656.0, 0.0],
    [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0],
];
const B5: [f64; 7] = [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0, 0.0];
const B4: [f64; 7] = [5179.0 / 57600.0, 0.0, 7571.0 / 16695.0, 393.0 / 640.0, -92097.0 / 339200.0, 187.0 / 2100.0, 1.0 / 40.0];

#[derive(Clone, Copy, Debug)]
pub struct Tolerance {
    pub rtol: f64,
    pub atol: f64,
}

impl Tolerance {
    pub fn new(rtol: f64) -> Self {
        Self { rtol, atol: rtol * 1e-3 }
    }
}

/// Integrates `dy/dt = f(t, y)` and calls `out(k, y)` at each `times[k]`.
/// `times[0]` is the initial time.
pub fn integrate<F, O>(f: F, y0: DMatrix<C64>, times: &[f64], tol: Tolerance, mut out: O) -> Result<usize>
where
    F: Fn(f64, &DMatrix<C64>) -> DMatrix<C64>,
    O: FnMut(usize, &DMatrix<C64>) -> Result<()>,
{
    if times.is_empty() {
        return Ok(0);
    }
    if times.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::InvalidArgument("output times must be strictly increasing".into()));
    }
    let span = times[times.len() - 1] - times[0];
    let mut y = y0;
    let mut t = times[0];
    out(0, &y)?;
    let mut h = if span > 0.0 { (span * 1e-3).max(1e-6) } else { 1e-3 };
    let h_min = 1e-14 * span.max(1.0);
    let mut k1 = f(t, &y);
    let mut steps = 0usize;
    for (idx, &t_next) in times.iter().enumerate().skip(1) {
        while t < t_next {
            let mut last = false;
            let mut step = h;
            if t + step >= t_next {
                step = t_next - t;
                last = true;
            }
            let mut ks: Vec<DMatrix<C64>> = Vec::with_capacity(7);
            ks.push(k1.clone());
            for s in 1..7 {
                let mut ys = y.clone();
                for (r, kr) in ks.iter().enumerate() {
                    let a = A[s][r];
                    if a != 0.0 {
                        axpy(&mut ys, C64::new(step * a, 0.0), kr);
                    }
                }
                ks.push(f(t + C[s] * step, &ys));
            }
            // 5th-order solution is the FSAL stage input
            let mut y5 = y.clone();
            let mut err = DMatrix::<C64>::zeros(y.nrows(), y.ncols());
            for s in 0..7 {
                if B5[s] != 0.0 {
                    axpy(&mut y5, C64::new(step * B5[s], 0.0), &ks[s]);
                }
                let e = B5[s] - B4[s];
                if e != 0.0 {
                    axpy(&mut err, C64::new(step * e, 0.0), &ks[s]);
                }
            }
            let mut acc = 0.0;
            for ((e, a), b) in err.iter().zip(y.iter()).zip(y5.iter()) {
                let sc = tol.atol + tol.rtol * a.norm().max(b.norm());
                acc += (e.norm() / sc).powi(2);
            }
            let en = (acc / err.len() as f64).sqrt();
            if en <= 1.0 {
                t = if last { t_next } else { t + step };
                y = y5;
                k1 = ks.pop().expect("seven stages");
                steps += 1;
            }
            let factor = if en == 0.0 { 5.0 } else { (0.9 * en.powf(-0.2)).clamp(0.2, 5.0) };
            if !(last && en <= 1.0) {
                h = step * factor;
            }
            if h < h_min {
                return Err(Error::Stiffness { t });
            }
        }
        out(idx, &y)?;
    }
    debug!("dopri5: {steps} accepted steps");
    Ok(steps)
}
