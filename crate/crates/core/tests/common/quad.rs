//! Exponential-integral quadratures on `(0, 1)` after compactifying the range.

/// `E1(y) = ∫_y^∞ e^{-t}/t dt`, substituted `t = y/u` onto `(0, 1]`.
pub fn e1_quad(y: f64) -> f64 {
    quadrature::double_exponential::integrate(|u| (-y / u).exp() / u, 0.0, 1.0, 1e-15).integral
}

/// `e^y E1(y) = ∫_0^∞ e^{-s}/(y + s) ds`, substituted `s = u/(1 − u)`.
pub fn scaled_e1_quad(y: f64) -> f64 {
    quadrature::double_exponential::integrate(
        |u| {
            if u >= 1.0 {
                return 0.0;
            }
            let s = u / (1.0 - u);
            (-s).exp() / ((y + s) * (1.0 - u) * (1.0 - u))
        },
        0.0,
        1.0,
        1e-15,
    )
    .integral
}

/// `f(x) = ∫_0^∞ x e^{-t}/(1 + t x) dt`, substituted `t = u/(1 − u)`.
pub fn f_quad(x: f64) -> f64 {
    quadrature::double_exponential::integrate(
        |u| {
            if u >= 1.0 {
                return 0.0;
            }
            let t = u / (1.0 - u);
            x * (-t).exp() / ((1.0 - u) * (1.0 - u + x * u))
        },
        0.0,
        1.0,
        1e-15,
    )
    .integral
}
