//! Direction algebra: local shading frames, the half/difference angle
//! parametrization of a direction pair, the reciprocity-safe angle mapping
//! and sinusoidal positional encoding.

use std::f64::consts::{PI, TAU};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::math::Vec3;

/// Orthonormal shading frame. `b = n × t`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LocalFrame {
    pub n: Vec3,
    pub t: Vec3,
    pub b: Vec3,
}

impl LocalFrame {
    /// Frame around a unit normal with a deterministic tangent: the coordinate
    /// axis least aligned with `n`, Gram-Schmidt projected onto the tangent plane.
    pub fn from_normal(n: Vec3) -> LocalFrame {
        let a = [n.x.abs(), n.y.abs(), n.z.abs()];
        let axis = if a[0] <= a[1] && a[0] <= a[2] {
            Vec3::X
        } else if a[1] <= a[2] {
            Vec3::Y
        } else {
            Vec3::Z
        };
        let t = (axis - n * axis.dot(n)).normalized();
        let b = n.cross(t);
        LocalFrame { n, t, b }
    }

    pub fn to_local(&self, w: Vec3) -> Vec3 {
        Vec3::new(w.dot(self.t), w.dot(self.b), w.dot(self.n))
    }

    pub fn to_world(&self, w: Vec3) -> Vec3 {
        self.t * w.x + self.b * w.y + self.n * w.z
    }
}

/// Normalized `v + l`.
pub fn half_vector(v: Vec3, l: Vec3) -> Result<Vec3> {
    (v + l)
        .try_normalized()
        .filter(|h| h.length_squared() > 0.5)
        .ok_or(Error::Degenerate("half vector of opposite directions"))
}

/// Isotropic half/difference angles (θh, θd, φd).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RusinkiewiczAngles {
    pub theta_h: f64,
    pub theta_d: f64,
    pub phi_d: f64,
}

impl RusinkiewiczAngles {
    pub fn new(theta_h: f64, theta_d: f64, phi_d: f64) -> Self {
        RusinkiewiczAngles {
            theta_h,
            theta_d,
            phi_d,
        }
    }

    pub fn to_array(self) -> [f64; 3] {
        [self.theta_h, self.theta_d, self.phi_d]
    }
}

/// Reciprocity-invariant image of the angles: `[θh, θd, φd mod π, φd mod π + π]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReciprocalAngles {
    pub theta_h: f64,
    pub theta_d: f64,
    pub phi_d_mod_pi: f64,
    pub phi_d_mod_pi_plus_pi: f64,
}

impl ReciprocalAngles {
    pub fn to_array(self) -> [f64; 4] {
        [
            self.theta_h,
            self.theta_d,
            self.phi_d_mod_pi,
            self.phi_d_mod_pi_plus_pi,
        ]
    }
}

// Below this polar angle φd is undefined and reported as 0.
const DEGENERATE_ANGLE: f64 = 1e-12;

fn polar(w: Vec3) -> f64 {
    (w.x * w.x + w.y * w.y).sqrt().atan2(w.z)
}

fn wrap_tau(phi: f64) -> f64 {
    let p = phi.rem_euclid(TAU);
    if p >= TAU {
        0.0
    } else {
        p
    }
}

/// Half/difference angles of the pair `(v, l)` in `frame`.
///
/// The difference vector is `l` rotated by `-φh` about `n` and then by `-θh`
/// about `b`, so that `h` lands on the normal.
pub fn rusinkiewicz_from_dirs(frame: &LocalFrame, v: Vec3, l: Vec3) -> Result<RusinkiewiczAngles> {
    let cos_v = v.dot(frame.n);
    let cos_l = l.dot(frame.n);
    if cos_v <= 0.0 || cos_v.is_nan() {
        return Err(Error::Hemisphere { cos: cos_v });
    }
    if cos_l <= 0.0 || cos_l.is_nan() {
        return Err(Error::Hemisphere { cos: cos_l });
    }
    let h = frame.to_local(half_vector(v, l)?);
    let l = frame.to_local(l);

    let theta_h = polar(h).min(PI / 2.0);
    let phi_h = h.y.atan2(h.x);

    let (sp, cp) = phi_h.sin_cos();
    let l1 = Vec3::new(l.x * cp + l.y * sp, -l.x * sp + l.y * cp, l.z);
    let (st, ct) = theta_h.sin_cos();
    let d = Vec3::new(l1.x * ct - l1.z * st, l1.y, l1.x * st + l1.z * ct);

    let theta_d = polar(d).min(PI / 2.0);
    let phi_d = if theta_h < DEGENERATE_ANGLE || theta_d < DEGENERATE_ANGLE {
        0.0
    } else {
        wrap_tau(d.y.atan2(d.x))
    };
    Ok(RusinkiewiczAngles {
        theta_h,
        theta_d,
        phi_d,
    })
}

/// Inverse of [`rusinkiewicz_from_dirs`] for a given half-vector azimuth.
/// Returns `(v, l)` in world space; either may fall below the horizon.
pub fn rusinkiewicz_to_dirs(frame: &LocalFrame, a: RusinkiewiczAngles, phi_h: f64) -> (Vec3, Vec3) {
    let (std, ctd) = a.theta_d.sin_cos();
    let (spd, cpd) = a.phi_d.sin_cos();
    let d = Vec3::new(std * cpd, std * spd, ctd);

    let (st, ct) = a.theta_h.sin_cos();
    let l1 = Vec3::new(d.x * ct + d.z * st, d.y, -d.x * st + d.z * ct);
    let (sp, cp) = phi_h.sin_cos();
    let l = Vec3::new(l1.x * cp - l1.y * sp, l1.x * sp + l1.y * cp, l1.z);

    let h = Vec3::new(st * cp, st * sp, ct);
    let v = l.reflect(h);
    (frame.to_world(v), frame.to_world(l))
}

/// Maps the angles to `[θh, θd, φd mod π, φd mod π + π]`.
///
/// Both `φd` and `(φd + π) mod 2π` are first brought to a common upper
/// representative in `[π, 2π)` whose rounding does not depend on which of the
/// two was given, so the output is bitwise identical for the pair.
pub fn reciprocity_map(a: RusinkiewiczAngles) -> ReciprocalAngles {
    let mut upper = if a.phi_d < PI { a.phi_d + PI } else { a.phi_d };
    if upper >= TAU {
        upper = PI;
    }
    let mut hi = (upper + PI) - PI;
    if hi >= TAU {
        hi = PI;
    }
    ReciprocalAngles {
        theta_h: a.theta_h,
        theta_d: a.theta_d,
        phi_d_mod_pi: hi - PI,
        phi_d_mod_pi_plus_pi: hi,
    }
}

/// Orders a direction pair canonically so that any function of the ordered
/// pair is exactly symmetric under `v <-> l`.
pub fn canonical_pair(v: Vec3, l: Vec3) -> (Vec3, Vec3) {
    let key = |w: Vec3| (w.x.to_bits() as i64, w.y.to_bits() as i64, w.z.to_bits() as i64);
    if key(v) <= key(l) {
        (v, l)
    } else {
        (l, v)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct EncodingConfig {
    pub num_frequencies: usize,
    pub include_raw: bool,
}

impl Default for EncodingConfig {
    fn default() -> Self {
        EncodingConfig {
            num_frequencies: 3,
            include_raw: true,
        }
    }
}

impl EncodingConfig {
    pub fn features_per_value(&self) -> usize {
        usize::from(self.include_raw) + 2 * self.num_frequencies
    }

    pub fn encoded_len(&self, n_values: usize) -> usize {
        n_values * self.features_per_value()
    }
}

/// Flat encoded feature vector.
#[derive(Debug, Clone, PartialEq)]
pub struct AngleEncoding {
    pub features: Vec<f64>,
    pub config: EncodingConfig,
}

/// Per value: `[raw?, sin(2^0 a), cos(2^0 a), ..., sin(2^(F-1) a), cos(2^(F-1) a)]`.
pub fn positional_encode(values: &[f64], cfg: EncodingConfig) -> AngleEncoding {
    let mut features = Vec::with_capacity(cfg.encoded_len(values.len()));
    encode_into(values, cfg, &mut features);
    AngleEncoding {
        features,
        config: cfg,
    }
}

pub fn encode_into(values: &[f64], cfg: EncodingConfig, out: &mut Vec<f64>) {
    for &a in values {
        if cfg.include_raw {
            out.push(a);
        }
        let mut freq = 1.0;
        for _ in 0..cfg.num_frequencies {
            let (s, c) = (a * freq).sin_cos();
            out.push(s);
            out.push(c);
            freq *= 2.0;
        }
    }
}
