//! Closed-form reflectance models and the activations that map raw network
//! outputs onto their parameter ranges.
//!
//! All models are written once, generic over [`Real`], so that the same code
//! evaluates plain values and forward-mode parameter gradients.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::angles::{half_vector, LocalFrame};
use crate::error::{Error, Result};
use crate::math::{Rgb, Vec3};
use crate::scalar::Real;

/// Lower bound applied to ⟨n,l⟩ and ⟨n,v⟩ in specular denominators.
pub const GRAZING_GUARD: f64 = 1e-6;
const MIN_ALPHA: f64 = 1e-4;

/// Cosines of one (frame, v, l) configuration.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ShadingGeometry {
    pub cos_nl: f64,
    pub cos_nv: f64,
    pub cos_nh: f64,
    /// ⟨v,h⟩ = ⟨l,h⟩.
    pub cos_vh: f64,
    /// ⟨reflect(l, n), v⟩.
    pub cos_rv: f64,
}

impl ShadingGeometry {
    pub fn new(frame: &LocalFrame, v: Vec3, l: Vec3) -> Result<Self> {
        let n = frame.n;
        let cos_nv = n.dot(v);
        let cos_nl = n.dot(l);
        if cos_nv <= 0.0 || cos_nv.is_nan() {
            return Err(Error::Hemisphere { cos: cos_nv });
        }
        if cos_nl <= 0.0 || cos_nl.is_nan() {
            return Err(Error::Hemisphere { cos: cos_nl });
        }
        let h = half_vector(v, l)?;
        // Symmetric in (v, l) up to the order of two additions.
        let cos_vh = (0.5 * (v.dot(h) + l.dot(h))).clamp(0.0, 1.0);
        let cos_rv = 2.0 * cos_nl * cos_nv - l.dot(v);
        Ok(ShadingGeometry {
            cos_nl: cos_nl.min(1.0),
            cos_nv: cos_nv.min(1.0),
            cos_nh: n.dot(h).clamp(0.0, 1.0),
            cos_vh,
            cos_rv,
        })
    }
}

/// Trowbridge-Reitz / GGX normal distribution.
pub fn ggx_ndf<T: Real>(cos_nh: f64, alpha: T) -> T {
    let a2 = alpha * alpha;
    let t = (a2 - 1.0) * (cos_nh * cos_nh) + 1.0;
    a2 / (t * t * PI)
}

fn smith_g1<T: Real>(cos_nw: f64, alpha: T) -> T {
    let a2 = alpha * alpha;
    let c2 = cos_nw * cos_nw;
    let root = (a2 + (-a2 + 1.0) * c2).sqrt();
    T::cst(2.0 * cos_nw) / (root + cos_nw)
}

/// Separable Smith shadowing-masking with the GGX G1 term.
pub fn smith_g<T: Real>(cos_nl: f64, cos_nv: f64, alpha: T) -> T {
    smith_g1(cos_nl, alpha) * smith_g1(cos_nv, alpha)
}

fn schlick_weight(cos: f64) -> f64 {
    (1.0 - cos).clamp(0.0, 1.0).powi(5)
}

/// Schlick's Fresnel approximation, per channel.
pub fn schlick_fresnel<T: Real>(cos_vh: f64, f0: [T; 3]) -> [T; 3] {
    let w = schlick_weight(cos_vh);
    f0.map(|f| f + (-f + 1.0) * w)
}

fn sigmoid<T: Real>(x: T) -> T {
    T::cst(1.0) / ((-x).exp() + 1.0)
}

fn softplus<T: Real>(x: T) -> T {
    if x.value() > 30.0 {
        x
    } else {
        (x.exp() + 1.0).ln()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TsParams<T = f64> {
    /// Perceptual roughness; α = r².
    pub roughness: T,
    pub rho_d: [T; 3],
    pub f0: [T; 3],
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RpParams<T = f64> {
    pub k_full: [T; 3],
    /// Diffuse share of `k_full`.
    pub zeta: [T; 3],
    pub exponent: T,
}

impl<T: Real> RpParams<T> {
    pub fn k_d(&self) -> [T; 3] {
        [0, 1, 2].map(|c| self.zeta[c] * self.k_full[c])
    }

    pub fn k_s(&self) -> [T; 3] {
        [0, 1, 2].map(|c| (-self.zeta[c] + 1.0) * self.k_full[c])
    }
}

/// Isotropic Disney parameters; anisotropy is fixed at zero.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DisneyParams<T = f64> {
    pub base_color: [T; 3],
    pub metallic: T,
    pub subsurface: T,
    pub specular: T,
    pub specular_tint: T,
    pub roughness: T,
    pub sheen: T,
    pub sheen_tint: T,
    pub clearcoat: T,
    pub clearcoat_gloss: T,
}

impl Default for DisneyParams<f64> {
    fn default() -> Self {
        DisneyParams {
            base_color: [0.8; 3],
            metallic: 0.0,
            subsurface: 0.0,
            specular: 0.5,
            specular_tint: 0.0,
            roughness: 0.5,
            sheen: 0.0,
            sheen_tint: 0.5,
            clearcoat: 0.0,
            clearcoat_gloss: 1.0,
        }
    }
}

pub fn torrance_sparrow<T: Real>(p: &TsParams<T>, g: &ShadingGeometry) -> [T; 3] {
    let alpha = (p.roughness * p.roughness).max_c(MIN_ALPHA);
    let d = ggx_ndf(g.cos_nh, alpha);
    let geo = smith_g(g.cos_nl, g.cos_nv, alpha);
    let f = schlick_fresnel(g.cos_vh, p.f0);
    let denom = 4.0 * g.cos_nl.max(GRAZING_GUARD) * g.cos_nv.max(GRAZING_GUARD);
    let dg = d * geo / denom;
    [0, 1, 2].map(|c| (-f[c] + 1.0) * p.rho_d[c] / PI + dg * f[c])
}

/// Normalized Phong: `k_d/π + k_s (n+2)/(2π) max(0, ⟨r,v⟩)^n` with `r` the mirror of `l`.
pub fn realistic_phong<T: Real>(p: &RpParams<T>, g: &ShadingGeometry) -> [T; 3] {
    let kd = p.k_d();
    let ks = p.k_s();
    let lobe = if g.cos_rv > 0.0 {
        (p.exponent + 2.0) / (2.0 * PI) * T::cst(g.cos_rv).powf(p.exponent)
    } else {
        T::cst(0.0)
    };
    [0, 1, 2].map(|c| kd[c] / PI + ks[c] * lobe)
}

/// Individual Disney lobes; their sum is the BRDF value.
#[derive(Debug, Clone, Copy)]
pub struct DisneyTerms<T> {
    pub diffuse: [T; 3],
    pub sheen: [T; 3],
    pub specular: [T; 3],
    pub clearcoat: T,
}

impl<T: Real> DisneyTerms<T> {
    pub fn total(&self) -> [T; 3] {
        [0, 1, 2].map(|c| self.diffuse[c] + self.sheen[c] + self.specular[c] + self.clearcoat)
    }
}

fn gtr1<T: Real>(cos_nh: f64, a: T) -> T {
    let a2 = a * a;
    let t = (a2 - 1.0) * (cos_nh * cos_nh) + 1.0;
    (a2 - 1.0) / (a2.ln() * t * PI)
}

fn smith_g_ggx<T: Real>(cos: f64, alpha_g: T) -> T {
    let a = alpha_g * alpha_g;
    let b = cos * cos;
    T::cst(1.0) / ((a + b - a * b).sqrt() + cos)
}

/// Isotropic Disney BRDF (2012 course-notes reference implementation).
/// `base_color` is taken as linear.
pub fn disney_terms<T: Real>(p: &DisneyParams<T>, g: &ShadingGeometry) -> DisneyTerms<T> {
    let nl = g.cos_nl.max(GRAZING_GUARD);
    let nv = g.cos_nv.max(GRAZING_GUARD);
    let lh = g.cos_vh;
    let c = p.base_color;
    let lum = c[0] * 0.3 + c[1] * 0.6 + c[2] * 0.1;
    let tint = if lum.value() > 0.0 {
        c.map(|x| x / lum)
    } else {
        [T::cst(1.0); 3]
    };
    let one = T::cst(1.0);
    let spec0 = [0, 1, 2].map(|i| {
        let dielectric = p.specular * 0.08 * T::lerp(one, tint[i], p.specular_tint);
        T::lerp(dielectric, c[i], p.metallic)
    });
    let sheen_color = tint.map(|t| T::lerp(one, t, p.sheen_tint));

    let fl = schlick_weight(nl);
    let fv = schlick_weight(nv);
    let fd90 = p.roughness * (2.0 * lh * lh) + 0.5;
    let fd = ((fd90 - 1.0) * fl + 1.0) * ((fd90 - 1.0) * fv + 1.0);
    let fss90 = p.roughness * (lh * lh);
    let fss = ((fss90 - 1.0) * fl + 1.0) * ((fss90 - 1.0) * fv + 1.0);
    let ss = (fss * (1.0 / (nl + nv) - 0.5) + 0.5) * 1.25;
    let diffuse_shape = T::lerp(fd, ss, p.subsurface) / PI;

    let alpha = (p.roughness * p.roughness).max_c(0.001);
    let ds = ggx_ndf(g.cos_nh, alpha);
    let fh = schlick_weight(lh);
    let rough_g = p.roughness * 0.5 + 0.5;
    let rough_g = rough_g * rough_g;
    let gs = smith_g_ggx(nl, rough_g) * smith_g_ggx(nv, rough_g);

    let dr = gtr1(g.cos_nh, T::lerp(T::cst(0.1), T::cst(0.001), p.clearcoat_gloss));
    let fr = 0.04 + 0.96 * fh;
    let gr = smith_g_ggx(nl, T::cst(0.25)) * smith_g_ggx(nv, T::cst(0.25));

    let dielectric_weight = -p.metallic + 1.0;
    DisneyTerms {
        diffuse: [0, 1, 2].map(|i| diffuse_shape * c[i] * dielectric_weight),
        sheen: [0, 1, 2].map(|i| p.sheen * sheen_color[i] * fh * dielectric_weight),
        specular: [0, 1, 2].map(|i| gs * ds * (spec0[i] + (-spec0[i] + 1.0) * fh)),
        clearcoat: p.clearcoat * gr * dr * (0.25 * fr),
    }
}

pub fn disney<T: Real>(p: &DisneyParams<T>, g: &ShadingGeometry) -> [T; 3] {
    disney_terms(p, g).total()
}

fn to_rgb(c: [f64; 3]) -> Rgb {
    Rgb(c)
}

pub fn eval_torrance_sparrow(p: &TsParams, frame: &LocalFrame, v: Vec3, l: Vec3) -> Result<Rgb> {
    Ok(to_rgb(torrance_sparrow(p, &ShadingGeometry::new(frame, v, l)?)))
}

pub fn eval_realistic_phong(p: &RpParams, frame: &LocalFrame, v: Vec3, l: Vec3) -> Result<Rgb> {
    Ok(to_rgb(realistic_phong(p, &ShadingGeometry::new(frame, v, l)?)))
}

pub fn eval_disney_iso(p: &DisneyParams, frame: &LocalFrame, v: Vec3, l: Vec3) -> Result<Rgb> {
    Ok(to_rgb(disney(p, &ShadingGeometry::new(frame, v, l)?)))
}

/// Parametric model predicted by a neural parameter head.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ParamModelKind {
    #[serde(alias = "rp")]
    RealisticPhong,
    #[serde(alias = "ts")]
    TorranceSparrow,
    Disney,
}

impl ParamModelKind {
    pub fn arity(self) -> usize {
        match self {
            ParamModelKind::RealisticPhong => RP_ARITY,
            ParamModelKind::TorranceSparrow => TS_ARITY,
            ParamModelKind::Disney => DISNEY_ARITY,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            ParamModelKind::RealisticPhong => "rp",
            ParamModelKind::TorranceSparrow => "ts",
            ParamModelKind::Disney => "disney",
        }
    }
}

pub const RP_ARITY: usize = 7;
pub const TS_ARITY: usize = 7;
pub const DISNEY_ARITY: usize = 13;

/// Parameters after activation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ParamSet<T = f64> {
    RealisticPhong(RpParams<T>),
    TorranceSparrow(TsParams<T>),
    Disney(DisneyParams<T>),
}

impl<T: Real> ParamSet<T> {
    pub fn eval(&self, g: &ShadingGeometry) -> [T; 3] {
        match self {
            ParamSet::RealisticPhong(p) => realistic_phong(p, g),
            ParamSet::TorranceSparrow(p) => torrance_sparrow(p, g),
            ParamSet::Disney(p) => disney(p, g),
        }
    }
}

/// Maps raw head outputs to parameters.
///
/// Layouts: RP `[k_full(3), ζ(3), n]`; TS `[r, ρd(3), F0(3)]`; Disney
/// `[base(3), metallic, subsurface, specular, specular_tint, roughness, sheen,
/// sheen_tint, clearcoat, clearcoat_gloss]`. Sigmoid everywhere except the RP
/// exponent (`softplus + 1`); roughness inputs are halved before the sigmoid.
pub fn activate_params<T: Real>(raw: &[T], kind: ParamModelKind) -> Result<ParamSet<T>> {
    if raw.len() != kind.arity() {
        return Err(Error::Arity {
            model: kind.name(),
            expected: kind.arity(),
            got: raw.len(),
        });
    }
    let s = |i: usize| sigmoid(raw[i]);
    let s3 = |i: usize| [s(i), s(i + 1), s(i + 2)];
    Ok(match kind {
        ParamModelKind::RealisticPhong => ParamSet::RealisticPhong(RpParams {
            k_full: s3(0),
            zeta: s3(3),
            exponent: softplus(raw[6]) + 1.0,
        }),
        ParamModelKind::TorranceSparrow => ParamSet::TorranceSparrow(TsParams {
            roughness: sigmoid(raw[0] * 0.5),
            rho_d: s3(1),
            f0: s3(4),
        }),
        ParamModelKind::Disney => ParamSet::Disney(DisneyParams {
            base_color: s3(0),
            metallic: s(3),
            subsurface: s(4),
            specular: s(5),
            specular_tint: s(6),
            roughness: sigmoid(raw[7] * 0.5),
            sheen: s(8),
            sheen_tint: s(9),
            clearcoat: s(10),
            clearcoat_gloss: s(11),
        }),
    })
}

impl From<ParamSet> for Material {
    fn from(p: ParamSet) -> Self {
        match p {
            ParamSet::RealisticPhong(p) => Material::RealisticPhong(p),
            ParamSet::TorranceSparrow(p) => Material::TorranceSparrow(p),
            ParamSet::Disney(p) => Material::Disney(p),
        }
    }
}

/// Random valid parameters: raw values uniform in `[-3, 3]` pushed through
/// [`activate_params`].
pub fn random_material<R: rand::Rng>(kind: ParamModelKind, rng: &mut R) -> Material {
    let raw: Vec<f64> = (0..kind.arity()).map(|_| rng.gen_range(-3.0..3.0)).collect();
    activate_params(&raw, kind).expect("arity matches").into()
}

/// One GGX lobe with its own (possibly tinted) Fresnel reflectance.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GgxLobe {
    pub alpha: f64,
    pub f0: [f64; 3],
}

/// Analytic ground-truth materials used for data generation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "model", rename_all = "snake_case")]
pub enum Material {
    Lambertian { albedo: [f64; 3] },
    #[serde(alias = "rp")]
    RealisticPhong(RpParams),
    #[serde(alias = "ts")]
    TorranceSparrow(TsParams),
    Disney(DisneyParams),
    /// Lambertian base plus a sum of GGX lobes. With `fresnel_diffuse` the base
    /// is diminished by the first lobe's Fresnel term.
    MultiLobe {
        rho_d: [f64; 3],
        lobes: Vec<GgxLobe>,
        #[serde(default = "default_true")]
        fresnel_diffuse: bool,
    },
}

fn default_true() -> bool {
    true
}

impl Material {
    pub fn eval_geometry(&self, g: &ShadingGeometry) -> Rgb {
        Rgb(match self {
            Material::Lambertian { albedo } => albedo.map(|a| a / PI),
            Material::RealisticPhong(p) => realistic_phong(p, g),
            Material::TorranceSparrow(p) => torrance_sparrow(p, g),
            Material::Disney(p) => disney(p, g),
            Material::MultiLobe { rho_d, lobes, fresnel_diffuse } => {
                let denom = 4.0 * g.cos_nl.max(GRAZING_GUARD) * g.cos_nv.max(GRAZING_GUARD);
                let mut out = rho_d.map(|r| r / PI);
                if let Some(first) = lobes.first().filter(|_| *fresnel_diffuse) {
                    let f = schlick_fresnel(g.cos_vh, first.f0);
                    for c in 0..3 {
                        out[c] *= 1.0 - f[c];
                    }
                }
                for lobe in lobes {
                    let a = lobe.alpha.max(MIN_ALPHA);
                    let dg = ggx_ndf(g.cos_nh, a) * smith_g(g.cos_nl, g.cos_nv, a) / denom;
                    let f = schlick_fresnel(g.cos_vh, lobe.f0);
                    for c in 0..3 {
                        out[c] += dg * f[c];
                    }
                }
                out
            }
        })
    }

    pub fn eval(&self, frame: &LocalFrame, v: Vec3, l: Vec3) -> Result<Rgb> {
        Ok(self.eval_geometry(&ShadingGeometry::new(frame, v, l)?))
    }

    /// Angle-independent albedo of the diffuse component, where one exists.
    pub fn diffuse_albedo(&self) -> Option<[f64; 3]> {
        match self {
            Material::Lambertian { albedo } => Some(*albedo),
            Material::RealisticPhong(p) => Some(p.k_d()),
            Material::TorranceSparrow(p) => Some(p.rho_d),
            Material::Disney(p) => Some(p.base_color.map(|c| c * (1.0 - p.metallic))),
            Material::MultiLobe { rho_d, .. } => Some(*rho_d),
        }
    }

    /// Copy with the diffuse albedo scaled per channel (clamped to [0, 1]).
    pub fn with_albedo_scale(&self, s: [f64; 3]) -> Material {
        let sc = |a: [f64; 3]| [0, 1, 2].map(|c| (a[c] * s[c]).clamp(0.0, 1.0));
        match self {
            Material::Lambertian { albedo } => Material::Lambertian { albedo: sc(*albedo) },
            Material::RealisticPhong(p) => {
                // Scale the diffuse share of k_full and keep k_s fixed.
                let kd = sc(p.k_d());
                let ks = p.k_s();
                let k_full = [0, 1, 2].map(|c| (kd[c] + ks[c]).min(1.0));
                let zeta = [0, 1, 2].map(|c| if k_full[c] > 0.0 { (kd[c] / k_full[c]).min(1.0) } else { 0.0 });
                Material::RealisticPhong(RpParams { k_full, zeta, exponent: p.exponent })
            }
            Material::TorranceSparrow(p) => Material::TorranceSparrow(TsParams { rho_d: sc(p.rho_d), ..*p }),
            Material::Disney(p) => Material::Disney(DisneyParams { base_color: sc(p.base_color), ..*p }),
            Material::MultiLobe { rho_d, lobes, fresnel_diffuse } => Material::MultiLobe {
                rho_d: sc(*rho_d),
                lobes: lobes.clone(),
                fresnel_diffuse: *fresnel_diffuse,
            },
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sampling::cosine_sample_hemisphere;
    use approx::assert_abs_diff_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::TAU;

    fn random_upper(rng: &mut ChaCha8Rng) -> Vec3 {
        cosine_sample_hemisphere(rng.gen(), rng.gen())
    }

    fn z_frame() -> LocalFrame {
        LocalFrame::from_normal(Vec3::Z)
    }

    fn random_ts(rng: &mut ChaCha8Rng) -> TsParams {
        TsParams {
            roughness: rng.gen_range(0.05..1.0),
            rho_d: [rng.gen(), rng.gen(), rng.gen()],
            f0: [rng.gen(), rng.gen(), rng.gen()],
        }
    }

    fn random_rp(rng: &mut ChaCha8Rng) -> RpParams {
        RpParams {
            k_full: [rng.gen(), rng.gen(), rng.gen()],
            zeta: [rng.gen(), rng.gen(), rng.gen()],
            exponent: rng.gen_range(1.0..200.0),
        }
    }

    fn random_disney(rng: &mut ChaCha8Rng) -> DisneyParams {
        DisneyParams {
            base_color: [rng.gen(), rng.gen(), rng.gen()],
            metallic: rng.gen(),
            subsurface: rng.gen(),
            specular: rng.gen(),
            specular_tint: rng.gen(),
            roughness: rng.gen(),
            sheen: rng.gen(),
            sheen_tint: rng.gen(),
            clearcoat: rng.gen(),
            clearcoat_gloss: rng.gen(),
        }
    }

    #[test]
    fn ggx_examples() {
        for c in [0.0, 0.3, 0.9, 1.0] {
            assert_abs_diff_eq!(ggx_ndf(c, 1.0), 1.0 / PI, epsilon = 1e-15);
        }
        assert_abs_diff_eq!(ggx_ndf(1.0, 0.5), 0.25 / (PI * 0.0625), epsilon = 1e-12);
        assert_abs_diff_eq!(ggx_ndf(1.0, 0.5), 4.0 / PI, epsilon = 1e-12);
    }

    #[test]
    fn ggx_is_normalized_against_projected_area() {
        // ∫ D(h) cosθh dh with h cosine-distributed: estimate = π·mean(D).
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for alpha in [0.1, 0.5, 1.0] {
            // Importance sample h from D·cos via the GGX inverse CDF.
            let n = 20_000;
            let mut acc = 0.0;
            for _ in 0..n {
                let u: f64 = rng.gen();
                let cos2 = (1.0 - u) / (1.0 + (alpha * alpha - 1.0) * u);
                let cos = cos2.sqrt();
                let pdf = ggx_ndf(cos, alpha) * cos;
                acc += ggx_ndf(cos, alpha) * cos / pdf;
            }
            assert_abs_diff_eq!(acc / n as f64, 1.0, epsilon = 1e-9);

            // Plain cosine-weighted estimate as an independent check.
            let mut acc = 0.0;
            let m = 200_000;
            for _ in 0..m {
                let h = random_upper(&mut rng);
                acc += PI * ggx_ndf(h.z, alpha);
            }
            let est = acc / m as f64;
            let tol = if alpha < 0.2 { 0.05 } else { 0.01 };
            assert!((est - 1.0).abs() < tol, "alpha {alpha}: {est}");
        }
    }

    #[test]
    fn smith_examples() {
        assert_eq!(smith_g(0.3, 0.7, 0.0), 1.0);
        assert_abs_diff_eq!(smith_g(1.0, 1.0, 0.37), 1.0, epsilon = 1e-15);
        let g1 = 1.0 / (0.5 + (0.25f64 + 0.75 * 0.25).sqrt());
        assert_abs_diff_eq!(smith_g(0.5, 0.5, 0.5), g1 * g1, epsilon = 1e-15);
        let g = smith_g(0.2, 0.9, 0.8);
        assert!(g > 0.0 && g <= 1.0);
    }

    #[test]
    fn schlick_examples() {
        let f0 = [0.04; 3];
        assert_eq!(schlick_fresnel(1.0, f0), f0);
        assert_eq!(schlick_fresnel(0.0, f0), [1.0; 3]);
        for c in schlick_fresnel(0.5, f0) {
            assert_abs_diff_eq!(c, 0.07, epsilon = 1e-15);
        }
    }

    #[test]
    fn ts_without_fresnel_is_lambertian() {
        // With F0 = 0 the Schlick term is (1 - ⟨v,h⟩)^5, which vanishes only for
        // v = l; there the model is exactly Lambertian.
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let p = TsParams {
            roughness: 0.4,
            rho_d: [0.2, 0.5, 0.9],
            f0: [0.0; 3],
        };
        for _ in 0..100 {
            let w = random_upper(&mut rng);
            let f = eval_torrance_sparrow(&p, &z_frame(), w, w).unwrap();
            for c in 0..3 {
                assert_eq!(f[c], p.rho_d[c] / PI);
            }
        }
        let th: f64 = 1.2;
        let v = Vec3::new(th.sin(), 0.0, th.cos());
        let f = eval_torrance_sparrow(&p, &z_frame(), v, Vec3::Z).unwrap();
        assert!((f[1] - p.rho_d[1] / PI).abs() > 1e-6);
    }

    fn check_reciprocal_and_positive(eval: impl Fn(Vec3, Vec3) -> Rgb) {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        for _ in 0..10_000 {
            let v = random_upper(&mut rng);
            let l = random_upper(&mut rng);
            let a = eval(v, l);
            let b = eval(l, v);
            for c in 0..3 {
                assert!(a[c] >= 0.0 && a[c].is_finite(), "{a:?}");
                assert!((a[c] - b[c]).abs() <= 1e-9 * a[c].abs().max(1.0), "{a:?} vs {b:?}");
            }
        }
    }

    #[test]
    fn models_are_reciprocal_and_nonnegative() {
        let mut rng = ChaCha8Rng::seed_from_u64(14);
        let f = z_frame();
        for _ in 0..3 {
            let ts = random_ts(&mut rng);
            check_reciprocal_and_positive(|v, l| eval_torrance_sparrow(&ts, &f, v, l).unwrap());
            let rp = random_rp(&mut rng);
            check_reciprocal_and_positive(|v, l| eval_realistic_phong(&rp, &f, v, l).unwrap());
            let dp = random_disney(&mut rng);
            check_reciprocal_and_positive(|v, l| eval_disney_iso(&dp, &f, v, l).unwrap());
        }
    }

    #[test]
    fn hemisphere_violation_is_an_error() {
        let below = Vec3::new(0.5, 0.0, -0.5).normalized();
        let p = TsParams {
            roughness: 0.5,
            rho_d: [0.5; 3],
            f0: [0.04; 3],
        };
        assert!(matches!(
            eval_torrance_sparrow(&p, &z_frame(), below, Vec3::Z),
            Err(Error::Hemisphere { .. })
        ));
        assert!(eval_disney_iso(&DisneyParams::default(), &z_frame(), Vec3::Z, below).is_err());
    }

    fn albedo(eval: impl Fn(Vec3) -> Rgb, n: usize, rng: &mut ChaCha8Rng) -> (Rgb, Rgb) {
        let mut sum = Rgb::ZERO;
        let mut sq = Rgb::ZERO;
        for _ in 0..n {
            let f = eval(random_upper(rng)) * PI;
            sum += f;
            sq += f * f;
        }
        let mean = sum / n as f64;
        let var = (sq / n as f64 - mean * mean).map(|x| x.max(0.0));
        (mean, var.map(|x| (x / n as f64).sqrt()))
    }

    #[test]
    fn rp_pure_diffuse_is_lambertian() {
        let p = RpParams {
            k_full: [0.3, 0.6, 0.9],
            zeta: [1.0; 3],
            exponent: 10.0,
        };
        let mut rng = ChaCha8Rng::seed_from_u64(15);
        let f = z_frame();
        let v = random_upper(&mut rng);
        let l = random_upper(&mut rng);
        let val = eval_realistic_phong(&p, &f, v, l).unwrap();
        for c in 0..3 {
            assert_abs_diff_eq!(val[c], p.k_full[c] / PI, epsilon = 1e-15);
        }
        let (mean, _) = albedo(|v| eval_realistic_phong(&p, &f, v, l).unwrap(), 1000, &mut rng);
        for c in 0..3 {
            assert_abs_diff_eq!(mean[c], p.k_full[c], epsilon = 1e-12);
        }
    }

    #[test]
    fn rp_specular_lobe_conserves_energy() {
        let mut rng = ChaCha8Rng::seed_from_u64(16);
        let f = z_frame();
        for exponent in [1.0, 5.0, 50.0] {
            let p = RpParams {
                k_full: [1.0; 3],
                zeta: [0.0; 3],
                exponent,
            };
            for _ in 0..20 {
                let l = random_upper(&mut rng);
                let (mean, sigma) = albedo(|v| eval_realistic_phong(&p, &f, v, l).unwrap(), 20_000, &mut rng);
                assert!(mean[0] <= 1.0 + 3.0 * sigma[0], "n={exponent}: {mean:?} ± {sigma:?}");
            }
        }
    }

    #[test]
    fn ts_energy_median_below_reported_level() {
        // ρd = 0, F0 = 1, α = 1.
        let p = TsParams {
            roughness: 1.0,
            rho_d: [0.0; 3],
            f0: [1.0; 3],
        };
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let f = z_frame();
        let mut est: Vec<f64> = (0..200)
            .map(|_| {
                let l = random_upper(&mut rng);
                albedo(|v| eval_torrance_sparrow(&p, &f, v, l).unwrap(), 4000, &mut rng).0.max_channel()
            })
            .collect();
        est.sort_by(f64::total_cmp);
        assert!(est[est.len() / 2] <= 1.1, "median {}", est[est.len() / 2]);
    }

    #[test]
    fn disney_metal_has_no_diffuse() {
        let mut rng = ChaCha8Rng::seed_from_u64(18);
        let mut p = random_disney(&mut rng);
        p.metallic = 1.0;
        let g = ShadingGeometry::new(&z_frame(), random_upper(&mut rng), random_upper(&mut rng)).unwrap();
        let t = disney_terms(&p, &g);
        assert_eq!(t.diffuse, [0.0; 3]);
        assert_eq!(t.sheen, [0.0; 3]);
    }

    #[test]
    fn disney_retro_reflection_matches_burley_diffuse() {
        let p = DisneyParams {
            base_color: [0.5; 3],
            metallic: 0.0,
            subsurface: 0.0,
            specular: 0.0,
            specular_tint: 0.0,
            roughness: 1.0,
            sheen: 0.0,
            sheen_tint: 0.0,
            clearcoat: 0.0,
            clearcoat_gloss: 0.0,
        };
        for theta in [0.2f64, 0.8, 1.3] {
            let w = Vec3::new(theta.sin(), 0.0, theta.cos());
            let val = eval_disney_iso(&p, &z_frame(), w, w).unwrap();
            // θd = 0: F_D90 = 0.5 + 2·roughness = 2.5.
            let fw = (1.0 - theta.cos()).powi(5);
            let expected = 0.5 / PI * (1.0 + 1.5 * fw).powi(2);
            for c in 0..3 {
                assert_abs_diff_eq!(val[c], expected, epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn activation_examples() {
        let ts = activate_params(&[0.0; 7], ParamModelKind::TorranceSparrow).unwrap();
        let ParamSet::TorranceSparrow(p) = ts else { unreachable!() };
        assert_eq!(p.roughness, 0.5);
        assert_eq!(p.rho_d, [0.5; 3]);

        let rp = activate_params(&[0.0; 7], ParamModelKind::RealisticPhong).unwrap();
        let ParamSet::RealisticPhong(p) = rp else { unreachable!() };
        assert_abs_diff_eq!(p.exponent, 2f64.ln() + 1.0, epsilon = 1e-15);

        let big = activate_params(&[800.0; 7], ParamModelKind::RealisticPhong).unwrap();
        let ParamSet::RealisticPhong(p) = big else { unreachable!() };
        assert_eq!(p.k_full, [1.0; 3]);
        assert_eq!(p.exponent, 801.0);

        let mut raw = [0.0; 13];
        raw[7] = 2.0;
        let ParamSet::Disney(p) = activate_params(&raw, ParamModelKind::Disney).unwrap() else { unreachable!() };
        assert_abs_diff_eq!(p.roughness, 1.0 / (1.0 + (-1.0f64).exp()), epsilon = 1e-15);
        assert_abs_diff_eq!(p.roughness, 0.731, epsilon = 1e-3);

        assert!(matches!(
            activate_params(&[0.0; 6], ParamModelKind::Disney),
            Err(Error::Arity { expected: 13, got: 6, .. })
        ));
    }

    #[test]
    fn activated_params_stay_in_range() {
        let mut rng = ChaCha8Rng::seed_from_u64(19);
        for _ in 0..1000 {
            let raw: Vec<f64> = (0..13).map(|_| rng.gen_range(-50.0..50.0)).collect();
            let ParamSet::Disney(p) = activate_params(&raw, ParamModelKind::Disney).unwrap() else { unreachable!() };
            for x in [p.metallic, p.roughness, p.clearcoat, p.base_color[1]] {
                assert!((0.0..=1.0).contains(&x));
            }
            let ParamSet::RealisticPhong(p) = activate_params(&raw[..7], ParamModelKind::RealisticPhong).unwrap() else {
                unreachable!()
            };
            assert!(p.exponent >= 1.0);
            for c in 0..3 {
                assert!(p.k_d()[c] + p.k_s()[c] <= 1.0 + 1e-15);
            }
        }
    }

    #[test]
    fn material_json_shape() {
        let m: Material = serde_json::from_str(
            r#"{"model":"ts","roughness":0.3,"rho_d":[0.5,0.4,0.3],"f0":[0.04,0.04,0.04]}"#,
        )
        .unwrap();
        assert!(matches!(m, Material::TorranceSparrow(_)));
        let phi = TAU / 3.0;
        let v = Vec3::new(phi.cos() * 0.5, phi.sin() * 0.5, 0.75f64.sqrt());
        assert!(m.eval(&z_frame(), v, Vec3::Z).unwrap().is_finite());
    }

    #[test]
    fn multi_lobe_diffuse_fresnel_switch() {
        let lobe = GgxLobe { alpha: 0.2, f0: [0.5, 0.3, 0.1] };
        let json = r#"{"model":"multi_lobe","rho_d":[0.4,0.4,0.4],"lobes":[{"alpha":0.2,"f0":[0.5,0.3,0.1]}]}"#;
        let parsed: Material = serde_json::from_str(json).unwrap();
        assert!(matches!(parsed, Material::MultiLobe { fresnel_diffuse: true, .. }));
        let with = |fresnel_diffuse, lobes: Vec<GgxLobe>| Material::MultiLobe { rho_d: [0.4; 3], lobes, fresnel_diffuse };
        let v = Vec3::new(0.6, 0.0, 0.8);
        let l = Vec3::new(-0.3, 0.4, 0.866_025_403_784_438_6);
        let plain = with(false, vec![lobe]).eval(&z_frame(), v, l).unwrap();
        let damped = with(true, vec![lobe]).eval(&z_frame(), v, l).unwrap();
        let specular = plain.0[0] - 0.4 / PI;
        assert!(specular > 0.0);
        assert!(damped.0[0] < plain.0[0]);
        let bare = with(true, vec![]).eval(&z_frame(), v, l).unwrap();
        assert_abs_diff_eq!(bare.0[1], 0.4 / PI, epsilon = 1e-15);
    }
}
