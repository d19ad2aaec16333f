//! Display mapping from linear radiance to sRGB.

const BREAK: f64 = 0.0031308;

/// sRGB transfer curve on `[0, 1]`.
pub fn gamma(c: f64) -> f64 {
    if c <= BREAK {
        323.0 / 25.0 * c
    } else {
        211.0 / 200.0 * c.powf(5.0 / 12.0) - 11.0 / 200.0
    }
}

pub fn gamma_derivative(c: f64) -> f64 {
    if c <= BREAK {
        323.0 / 25.0
    } else {
        211.0 / 200.0 * 5.0 / 12.0 * c.powf(-7.0 / 12.0)
    }
}

/// `γ(clamp(c, 0, 1))`.
pub fn to_srgb(c: f64) -> f64 {
    gamma(c.clamp(0.0, 1.0))
}
