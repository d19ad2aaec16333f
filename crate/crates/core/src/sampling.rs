use std::f64::consts::TAU;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::math::Vec3;

/// Cosine-weighted direction on the +z hemisphere (Malley's method: uniform
/// disk point lifted onto the hemisphere). Density `cosθ / π`.
pub fn cosine_sample_hemisphere(u1: f64, u2: f64) -> Vec3 {
    let r = u1.sqrt();
    let phi = TAU * u2;
    let z = (1.0 - u1).max(0.0).sqrt().max(1e-12);
    Vec3::new(r * phi.cos(), r * phi.sin(), z)
}

/// Uniform barycentric coordinates on a triangle.
pub fn uniform_barycentric(u1: f64, u2: f64) -> [f64; 3] {
    let s = u1.sqrt();
    let b0 = 1.0 - s;
    let b1 = u2 * s;
    [b0, b1, 1.0 - b0 - b1]
}

/// Independent RNG substream for item `index` under `seed`.
pub fn substream(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}
