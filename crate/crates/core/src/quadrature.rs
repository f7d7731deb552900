//! Exponential-integrator helper functions.
//!
//! `phi1(z) = (e^z - 1)/z` and `phi2(z) = (e^z - 1 - z)/z^2`, both extended
//! continuously to `z = 0`. A series branch near zero avoids cancellation,
//! which matters because kernel modes have eigenvalue exactly zero.

const SERIES_RADIUS: f64 = 0.5;
const SERIES_TERMS: usize = 24;

/// `(e^z - 1)/z`.
pub fn phi1(z: f64) -> f64 {
    if z == 0.0 {
        1.0
    } else if z.abs() < 1e-4 {
        1.0 + z / 2.0 * (1.0 + z / 3.0 * (1.0 + z / 4.0))
    } else {
        z.exp_m1() / z
    }
}

/// `(e^z - 1 - z)/z^2`.
pub fn phi2(z: f64) -> f64 {
    if z.abs() < SERIES_RADIUS {
        // sum_k z^k / (k+2)!
        let mut term = 0.5;
        let mut sum = 0.5;
        for k in 1..SERIES_TERMS {
            term *= z / (k + 2) as f64;
            sum += term;
        }
        sum
    } else {
        (z.exp_m1() - z) / (z * z)
    }
}

/// `int_0^1 x e^{zx} dx = (e^z (z - 1) + 1)/z^2`.
pub fn xphi(z: f64) -> f64 {
    if z.abs() < SERIES_RADIUS {
        // sum_k z^k / (k! (k+2))
        let mut fact = 1.0;
        let mut pow = 1.0;
        let mut sum = 0.5;
        for k in 1..SERIES_TERMS {
            fact *= k as f64;
            pow *= z;
            sum += pow / (fact * (k + 2) as f64);
        }
        sum
    } else {
        (z.exp() * (z - 1.0) + 1.0) / (z * z)
    }
}

/// Weights `(w_a, w_b)` with
/// `int_a^{a+h} e^{-mu (a+h-s)} f(s) ds = w_a f(a) + w_b f(a+h)`
/// for every affine `f`.
///
/// Reversing time gives the backward rule
/// `int_a^{a+h} e^{-mu (s-a)} f(s) ds = w_b f(a) + w_a f(a+h)`.
pub fn linear_weights(mu: f64, h: f64) -> (f64, f64) {
    let z = -mu * h;
    (h * xphi(z), h * phi2(z))
}
