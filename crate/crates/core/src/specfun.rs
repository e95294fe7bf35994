//! Exponential-integral kernels behind the QR receiver's average rate.
//!
//! The average rate of a Rayleigh-excited link with mean SNR `x` is
//! `log2(e) * f(x)` where
//!
//! ```text
//! f(x) = -e^{1/x} Ei(-1/x) = e^{1/x} E1(1/x) = e^{1/x} Γ(0, 1/x)
//! ```
//!
//! Evaluating `e^{1/x}` and `Ei(-1/x)` separately overflows/underflows once
//! `1/x` passes ~709, so everything here is written in terms of the scaled
//! generalized exponential integral `s_n(y) = e^y E_n(y)`, which stays
//! `O(1/y)` for large `y`. The derivatives are rearranged around asymptotic
//! remainders so that no branch suffers catastrophic cancellation.

use crate::error::{Error, Result};

/// Below this argument `f(x)` is replaced by its leading asymptotic term `x`.
///
/// The relative error of that approximation is about `x`, so the seam jump is
/// ~1e-6 relative and ~1e-12 absolute.
pub const SMALL_X_SWITCH: f64 = 1e-6;

const EULER_GAMMA: f64 = 0.577_215_664_901_532_9;
const MAX_ITER: usize = 2000;
const EPS: f64 = 1e-16;
const TINY: f64 = 1e-300;

/// A nonnegative, finite argument of `f`.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd)]
pub struct PosReal(f64);

impl PosReal {
    pub fn new(value: f64) -> Result<Self> {
        if value.is_finite() && value >= 0.0 {
            Ok(Self(value))
        } else {
            Err(Error::Domain {
                function: "PosReal",
                value,
            })
        }
    }

    pub fn get(self) -> f64 {
        self.0
    }
}

impl TryFrom<f64> for PosReal {
    type Error = Error;

    fn try_from(value: f64) -> Result<Self> {
        Self::new(value)
    }
}

/// `E_n(y)` for `0 < y <= 1` by its power series.
fn expint_series(n: u32, y: f64) -> f64 {
    let nm1 = n as i64 - 1;
    let ln_y = libm::log(y);
    let mut ans = if nm1 != 0 {
        1.0 / nm1 as f64
    } else {
        -ln_y - EULER_GAMMA
    };
    let mut fact = 1.0;
    for i in 1..MAX_ITER as i64 {
        fact *= -y / i as f64;
        let del = if i != nm1 {
            -fact / (i - nm1) as f64
        } else {
            let psi = -EULER_GAMMA + (1..=nm1).map(|k| 1.0 / k as f64).sum::<f64>();
            fact * (-ln_y + psi)
        };
        ans += del;
        if libm::fabs(del) < libm::fabs(ans) * EPS {
            break;
        }
    }
    ans
}

/// `e^y E_n(y)` for `y > 1` by the modified-Lentz continued fraction.
fn expint_cf_scaled(n: u32, y: f64) -> f64 {
    let n = n as f64;
    let mut b = y + n;
    let mut c = 1.0 / TINY;
    let mut d = 1.0 / b;
    let mut h = d;
    for i in 1..MAX_ITER {
        let i = i as f64;
        let an = -i * (n - 1.0 + i);
        b += 2.0;
        d = 1.0 / (an * d + b);
        c = b + an / c;
        let del = c * d;
        h *= del;
        if libm::fabs(del - 1.0) < EPS {
            break;
        }
    }
    h
}

/// Scaled generalized exponential integral `e^y E_n(y)`, `y > 0`, `n >= 1`.
pub(crate) fn expint_scaled(n: u32, y: f64) -> f64 {
    if y > 1.0 {
        expint_cf_scaled(n, y)
    } else {
        libm::exp(y) * expint_series(n, y)
    }
}

fn require_positive(function: &'static str, value: f64) -> Result<f64> {
    if value.is_finite() && value > 0.0 {
        Ok(value)
    } else {
        Err(Error::Domain { function, value })
    }
}

/// `Ei(-y) = -E1(y) = -∫_y^∞ e^{-t}/t dt` for `y > 0`.
pub fn ei_neg(y: f64) -> Result<f64> {
    let y = require_positive("ei_neg", y)?;
    if y > 1.0 {
        Ok(-libm::exp(-y) * expint_cf_scaled(1, y))
    } else {
        Ok(-expint_series(1, y))
    }
}

/// Average-rate kernel `f(x) = -e^{1/x} Ei(-1/x)` in nats; `f(0) = 0`.
pub fn f(x: PosReal) -> f64 {
    let x = x.get();
    if x < SMALL_X_SWITCH {
        return x;
    }
    expint_scaled(1, 1.0 / x)
}

/// `f'(x) = e^{1/x} x^{-2} Ei(-1/x) + 1/x`.
///
/// For `y = 1/x > 1` this is evaluated as `1 - 2 e^y E3(y)`.
pub fn f_prime(x: PosReal) -> Result<f64> {
    let x = require_positive("f_prime", x.get())?;
    if x < SMALL_X_SWITCH {
        return Ok(1.0);
    }
    let y = 1.0 / x;
    if y > 1.0 {
        Ok(1.0 - 2.0 * expint_cf_scaled(3, y))
    } else {
        Ok(y - y * y * expint_scaled(1, y))
    }
}

/// `f''(x) = e^{1/x} x^{-4} u(x)`, always `<= 0`.
///
/// With `y = 1/x` and `q = e^y E1(y)`, `f'' = (y^4 + 2y^3) q - y^3 - y^2`.
/// For `y > 1` the first four asymptotic terms of `q` cancel the polynomial
/// part exactly, leaving `-2 - 12/y + 24 (1 + 2/y) e^y E5(y)`.
pub fn f_second(x: PosReal) -> Result<f64> {
    let x = require_positive("f_second", x.get())?;
    if x < SMALL_X_SWITCH {
        return Ok(0.0);
    }
    let y = 1.0 / x;
    if y > 1.0 {
        Ok(-2.0 - 12.0 / y + 24.0 * (1.0 + 2.0 / y) * expint_cf_scaled(5, y))
    } else {
        let y2 = y * y;
        let y3 = y2 * y;
        Ok((y3 * y + 2.0 * y3) * expint_scaled(1, y) - y3 - y2)
    }
}

/// `g(x) = Ei(-1/x) + x e^{-1/x}`, nonnegative for `x > 0`.
///
/// Uses `g(x) = e^{-1/x} x^2 f'(x)` when `1/x > 1`.
pub fn g_appendix(x: PosReal) -> Result<f64> {
    let x = require_positive("g_appendix", x.get())?;
    let y = 1.0 / x;
    if y > 1.0 {
        Ok(libm::exp(-y) * x * x * (1.0 - 2.0 * expint_cf_scaled(3, y)))
    } else {
        Ok(libm::exp(-y) * (x - expint_scaled(1, y)))
    }
}
