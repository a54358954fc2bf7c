//! Dormand-Prince 5(4) embedded Runge-Kutta steps with a standard
//! error-per-step controller. The caller owns the stepping loop so that it
//! can impose its own step caps, segment boundaries and event handling.

/// Butcher tableau.
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
/// Fifth-order weights (equal to the last row of `A`, so the scheme is FSAL).
const B5: [f64; 7] = [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0, 0.0];
/// Fourth-order weights.
const B4: [f64; 7] = [
    5179.0 / 57600.0,
    0.0,
    7571.0 / 16695.0,
    393.0 / 640.0,
    -92097.0 / 339200.0,
    187.0 / 2100.0,
    1.0 / 40.0,
];

/// A trial step.
#[derive(Clone, Copy, Debug)]
pub struct Attempt<const N: usize> {
    pub y: [f64; N],
    /// Derivative at the new point (first stage of the next step).
    pub dydt: [f64; N],
    /// Scaled error norm; the step is acceptable when `≤ 1`.
    pub error: f64,
}

/// Error scaling `atol_i + rtol · max(|y_i|, |y_new,i|)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Tolerance<const N: usize> {
    pub rtol: f64,
    pub atol: [f64; N],
}

/// One Dormand-Prince step of size `h` from `(t, y)` whose derivative is
/// `dydt`. Errors from the right-hand side abort the step.
pub fn dp45_step<const N: usize, E>(
    f: &mut impl FnMut(f64, &[f64; N]) -> Result<[f64; N], E>,
    t: f64,
    y: &[f64; N],
    dydt: &[f64; N],
    h: f64,
    tol: &Tolerance<N>,
) -> Result<Attempt<N>, E> {
    let mut k = [[0.0; N]; 7];
    k[0] = *dydt;
    for s in 1..7 {
        let mut ys = *y;
        for (j, kj) in k.iter().enumerate().take(s) {
            let a = A[s][j];
            if a != 0.0 {
                for i in 0..N {
                    ys[i] += h * a * kj[i];
                }
            }
        }
        k[s] = f(t + C[s] * h, &ys)?;
    }
    let mut y5 = *y;
    let mut err = 0.0;
    for i in 0..N {
        let mut d5 = 0.0;
        let mut d4 = 0.0;
        for s in 0..7 {
            d5 += B5[s] * k[s][i];
            d4 += B4[s] * k[s][i];
        }
        y5[i] += h * d5;
        let scale = tol.atol[i] + tol.rtol * y[i].abs().max(y5[i].abs());
        let e = h * (d5 - d4) / scale;
        err += e * e;
    }
    Ok(Attempt { y: y5, dydt: k[6], error: (err / N as f64).sqrt() })
}

/// Step size suggested after an attempt with scaled error `error`.
pub fn next_step(h: f64, error: f64) -> f64 {
    const SAFETY: f64 = 0.9;
    let factor = if error == 0.0 { 5.0 } else { (SAFETY * error.powf(-0.2)).clamp(0.2, 5.0) };
    h * factor
}
