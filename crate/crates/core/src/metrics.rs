//! Image- and BRDF-space error metrics and the physical audits
//! (reciprocity violation and Monte Carlo energy conservation).

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::path::Path;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::brdf::{Query, SpatialBrdf, SurfacePoint};
use crate::dataset::SampleRecord;
use crate::error::{Error, Result};
use crate::imageio::HdrImage;
use crate::math::{Rgb, Vec3};
use crate::mesh::TriangleMesh;
use crate::render::Scene;
use crate::sampling::{cosine_sample_hemisphere, substream, uniform_barycentric};
use crate::tonemap::to_srgb;

/// Images whose values are already display-mapped.
pub fn srgb_image(img: &HdrImage) -> HdrImage {
    HdrImage {
        width: img.width,
        height: img.height,
        pixels: img.pixels.iter().map(|p| p.map(to_srgb)).collect(),
    }
}

fn check_dims(a: &HdrImage, b: &HdrImage, mask: &[bool]) -> Result<()> {
    if a.width != b.width || a.height != b.height {
        return Err(Error::Shape {
            expected: a.width * a.height,
            got: b.width * b.height,
        });
    }
    if mask.len() != a.pixels.len() {
        return Err(Error::Shape {
            expected: a.pixels.len(),
            got: mask.len(),
        });
    }
    Ok(())
}

/// `10·log10(1/MSE)` over masked pixels and channels; `+∞` when identical.
pub fn psnr(a: &HdrImage, b: &HdrImage, mask: &[bool]) -> Result<f64> {
    check_dims(a, b, mask)?;
    let mut sum = 0.0;
    let mut n = 0usize;
    for ((pa, pb), &m) in a.pixels.iter().zip(&b.pixels).zip(mask) {
        if m {
            sum += (0..3).map(|c| (pa.0[c] - pb.0[c]).powi(2)).sum::<f64>();
            n += 3;
        }
    }
    if n == 0 {
        return Err(Error::Insufficient("psnr over an empty mask".into()));
    }
    let mse = sum / n as f64;
    Ok(if mse == 0.0 { f64::INFINITY } else { -10.0 * mse.log10() })
}

pub const SSIM_WINDOW: usize = 11;
pub const SSIM_SIGMA: f64 = 1.5;
const SSIM_K1: f64 = 0.01;
const SSIM_K2: f64 = 0.03;

/// Normalized 1-D Gaussian of `SSIM_WINDOW` taps.
pub fn ssim_kernel() -> [f64; SSIM_WINDOW] {
    let r = (SSIM_WINDOW / 2) as f64;
    let mut k = [0.0; SSIM_WINDOW];
    for (i, v) in k.iter_mut().enumerate() {
        let x = i as f64 - r;
        *v = (-x * x / (2.0 * SSIM_SIGMA * SSIM_SIGMA)).exp();
    }
    let s: f64 = k.iter().sum();
    k.map(|v| v / s)
}

/// Separable "valid" filtering of one channel.
fn filter_valid(img: &[f64], w: usize, h: usize, k: &[f64; SSIM_WINDOW]) -> Vec<f64> {
    let (ow, oh) = (w + 1 - SSIM_WINDOW, h + 1 - SSIM_WINDOW);
    let mut rows = vec![0.0; ow * h];
    for y in 0..h {
        for x in 0..ow {
            rows[y * ow + x] = (0..SSIM_WINDOW).map(|i| k[i] * img[y * w + x + i]).sum();
        }
    }
    let mut out = vec![0.0; ow * oh];
    for y in 0..oh {
        for x in 0..ow {
            out[y * ow + x] = (0..SSIM_WINDOW).map(|i| k[i] * rows[(y + i) * ow + x]).sum();
        }
    }
    out
}

/// Mean SSIM over windows fully inside the image whose centre is masked,
/// averaged over channels (peak 1, Gaussian window).
pub fn ssim(a: &HdrImage, b: &HdrImage, mask: &[bool]) -> Result<f64> {
    check_dims(a, b, mask)?;
    let (w, h) = (a.width, a.height);
    if w < SSIM_WINDOW || h < SSIM_WINDOW {
        return Err(Error::Shape {
            expected: SSIM_WINDOW,
            got: w.min(h),
        });
    }
    let k = ssim_kernel();
    let (c1, c2) = (SSIM_K1 * SSIM_K1, SSIM_K2 * SSIM_K2);
    let ow = w + 1 - SSIM_WINDOW;
    let r = SSIM_WINDOW / 2;
    let centres: Vec<usize> = (0..(h + 1 - SSIM_WINDOW) * ow).filter(|&i| mask[(i / ow + r) * w + i % ow + r]).collect();
    if centres.is_empty() {
        return Err(Error::Insufficient("ssim over an empty mask".into()));
    }
    let mut total = 0.0;
    for c in 0..3 {
        let x: Vec<f64> = a.pixels.iter().map(|p| p.0[c]).collect();
        let y: Vec<f64> = b.pixels.iter().map(|p| p.0[c]).collect();
        let prod = |u: &[f64], v: &[f64]| u.iter().zip(v).map(|(p, q)| p * q).collect::<Vec<_>>();
        let mx = filter_valid(&x, w, h, &k);
        let my = filter_valid(&y, w, h, &k);
        let sxx = filter_valid(&prod(&x, &x), w, h, &k);
        let syy = filter_valid(&prod(&y, &y), w, h, &k);
        let sxy = filter_valid(&prod(&x, &y), w, h, &k);
        let sum: f64 = centres
            .iter()
            .map(|&i| {
                let (ux, uy) = (mx[i], my[i]);
                let vx = sxx[i] - ux * ux;
                let vy = syy[i] - uy * uy;
                let cxy = sxy[i] - ux * uy;
                ((2.0 * ux * uy + c1) * (2.0 * cxy + c2)) / ((ux * ux + uy * uy + c1) * (vx + vy + c2))
            })
            .sum();
        total += sum / centres.len() as f64;
    }
    Ok(total / 3.0)
}

/// `(1 − SSIM)/2`, clamped to `[0, 1]` against rounding.
pub fn dssim(a: &HdrImage, b: &HdrImage, mask: &[bool]) -> Result<f64> {
    Ok(((1.0 - ssim(a, b, mask)?) / 2.0).clamp(0.0, 1.0))
}

pub const GRAZING_LIMIT_DEG: f64 = 80.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CbrtRmse {
    pub value: f64,
    pub used: usize,
    pub excluded_grazing: usize,
    pub excluded_saturated: usize,
}

/// RMSE of cube-rooted BRDF values over all channels. Records with a view or
/// light direction beyond 80° from the normal, or with any observed channel
/// at or above the white level, are excluded.
pub fn rmse_cbrt(pred: &[Rgb], records: &[SampleRecord], white_level: f64) -> Result<CbrtRmse> {
    if pred.len() != records.len() {
        return Err(Error::Shape {
            expected: records.len(),
            got: pred.len(),
        });
    }
    let cos_limit = GRAZING_LIMIT_DEG.to_radians().cos();
    let (mut sum, mut used, mut grazing, mut saturated) = (0.0, 0usize, 0usize, 0usize);
    for (p, r) in pred.iter().zip(records) {
        if r.cos_v() < cos_limit || r.normal.dot(r.light_dir) < cos_limit {
            grazing += 1;
        } else if r.is_saturated(white_level) {
            saturated += 1;
        } else {
            sum += (0..3).map(|c| (p.0[c].cbrt() - r.brdf.0[c].cbrt()).powi(2)).sum::<f64>();
            used += 1;
        }
    }
    if used == 0 {
        return Err(Error::Insufficient("every record excluded from the BRDF error".into()));
    }
    Ok(CbrtRmse {
        value: (sum / (3 * used) as f64).sqrt(),
        used,
        excluded_grazing: grazing,
        excluded_saturated: saturated,
    })
}

/// Area-proportional face sampling.
#[derive(Debug, Clone)]
pub struct AreaSampler {
    cdf: Vec<f64>,
}

impl AreaSampler {
    pub fn new(mesh: &TriangleMesh) -> Result<Self> {
        let mut acc = 0.0;
        let cdf: Vec<f64> = (0..mesh.faces.len())
            .map(|i| {
                acc += mesh.face_area(i);
                acc
            })
            .collect();
        if !(acc > 0.0) {
            return Err(Error::Degenerate("mesh has zero surface area"));
        }
        Ok(AreaSampler {
            cdf: cdf.into_iter().map(|c| c / acc).collect(),
        })
    }

    pub fn sample<R: Rng>(&self, rng: &mut R) -> (usize, [f64; 3]) {
        let u: f64 = rng.gen();
        let face = self.cdf.partition_point(|&c| c <= u).min(self.cdf.len() - 1);
        (face, uniform_barycentric(rng.gen(), rng.gen()))
    }
}

fn cosine_dir<R: Rng>(p: &SurfacePoint, rng: &mut R) -> Vec3 {
    // Keep strictly above the horizon; the sampler can return cos θ = 0.
    loop {
        let d = cosine_sample_hemisphere(rng.gen(), rng.gen());
        if d.z > 0.0 {
            return p.frame.to_world(d);
        }
    }
}

/// Surface points drawn by area and two cosine-distributed directions per pair.
fn sample_triples(scene: &Scene, n: usize, seed: u64) -> Result<Vec<(SurfacePoint, Vec3, Vec3)>> {
    let sampler = AreaSampler::new(&scene.mesh)?;
    (0..n)
        .into_par_iter()
        .map(|i| {
            let mut rng = substream(seed, i as u64);
            let (face, bary) = sampler.sample(&mut rng);
            let p = scene.surface_point(face, bary)?;
            let v = cosine_dir(&p, &mut rng);
            let l = cosine_dir(&p, &mut rng);
            Ok((p, v, l))
        })
        .collect()
}

/// `√(mean ‖f(x,l,v) − f(x,v,l)‖²)` over seeded pairs. Both orders are
/// evaluated in identically laid out batches.
pub fn reciprocity_rmse(brdf: &dyn SpatialBrdf, scene: &Scene, n_pairs: usize, seed: u64) -> Result<f64> {
    if n_pairs == 0 {
        return Err(Error::Insufficient("reciprocity audit needs at least one pair".into()));
    }
    let triples = sample_triples(scene, n_pairs, seed)?;
    let fwd: Vec<Query> = triples.iter().map(|(p, v, l)| Query { point: p, v: *v, l: *l }).collect();
    let rev: Vec<Query> = triples.iter().map(|(p, v, l)| Query { point: p, v: *l, l: *v }).collect();
    let a = brdf.eval_batch(&fwd)?;
    let b = brdf.eval_batch(&rev)?;
    let sum: f64 = a.iter().zip(&b).map(|(x, y)| (0..3).map(|c| (x.0[c] - y.0[c]).powi(2)).sum::<f64>()).sum();
    Ok((sum / n_pairs as f64).sqrt())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnergyEstimate {
    /// Largest per-channel estimate of `∫ f cos θ_v dv`.
    pub estimate: f64,
    /// Monte Carlo standard error of that channel.
    pub sigma: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnergyReport {
    pub n_pairs: usize,
    pub n_mc: usize,
    pub seed: u64,
    pub fraction_over_one: f64,
    /// Median of the estimates that exceed 1.
    pub median_over_one: Option<f64>,
    /// Estimates exceeding `1 + 3σ`.
    pub violations: usize,
    pub estimates: Vec<EnergyEstimate>,
}

/// Cosine-weighted Monte Carlo audit of directional albedo: per (x, l) pair,
/// `π/N Σ f(x, l, v_i)` with `v_i ∝ cos θ`.
pub fn energy_audit(brdf: &dyn SpatialBrdf, scene: &Scene, n_pairs: usize, n_mc: usize, seed: u64) -> Result<EnergyReport> {
    if n_pairs == 0 || n_mc == 0 {
        return Err(Error::Insufficient("energy audit needs at least one pair and one sample".into()));
    }
    let sampler = AreaSampler::new(&scene.mesh)?;
    let estimates = (0..n_pairs)
        .into_par_iter()
        .map(|i| {
            let mut rng = substream(seed, i as u64);
            let (face, bary) = sampler.sample(&mut rng);
            let p = scene.surface_point(face, bary)?;
            let l = cosine_dir(&p, &mut rng);
            let dirs: Vec<Vec3> = (0..n_mc).map(|_| cosine_dir(&p, &mut rng)).collect();
            let queries: Vec<Query> = dirs.iter().map(|&v| Query { point: &p, v, l }).collect();
            let f = brdf.eval_batch(&queries)?;
            Ok(mc_estimate(&f))
        })
        .collect::<Result<Vec<_>>>()?;
    let over: Vec<f64> = estimates.iter().map(|e| e.estimate).filter(|&e| e > 1.0).collect();
    Ok(EnergyReport {
        n_pairs,
        n_mc,
        seed,
        fraction_over_one: over.len() as f64 / n_pairs as f64,
        median_over_one: median(over),
        violations: estimates.iter().filter(|e| e.estimate > 1.0 + 3.0 * e.sigma).count(),
        estimates,
    })
}

/// Estimate and standard error of `π·mean(f)` for the channel with the largest mean.
fn mc_estimate(f: &[Rgb]) -> EnergyEstimate {
    let n = f.len() as f64;
    let means = [0, 1, 2].map(|c| f.iter().map(|x| PI * x.0[c]).sum::<f64>() / n);
    let c = (0..3).fold(0, |best, c| if means[c] > means[best] { c } else { best });
    let var = if f.len() > 1 {
        f.iter().map(|x| (PI * x.0[c] - means[c]).powi(2)).sum::<f64>() / (n - 1.0)
    } else {
        0.0
    };
    EnergyEstimate {
        estimate: means[c],
        sigma: (var / n).sqrt(),
    }
}

fn median(mut v: Vec<f64>) -> Option<f64> {
    if v.is_empty() {
        return None;
    }
    v.sort_by(f64::total_cmp);
    let m = v.len() / 2;
    Some(if v.len() % 2 == 1 { v[m] } else { 0.5 * (v[m - 1] + v[m]) })
}

/// BRDF values for every record, zero where either direction is at or below
/// the horizon.
pub fn predict_records(brdf: &dyn SpatialBrdf, scene: &Scene, records: &[SampleRecord]) -> Result<Vec<Rgb>> {
    let valid: Vec<usize> = (0..records.len()).filter(|&i| records[i].cos_v() > 0.0 && records[i].cos_l() > 0.0).collect();
    let points = valid
        .par_iter()
        .map(|&i| {
            let r = &records[i];
            Ok(SurfacePoint::new(r.position, r.normal, scene.encoder.encode(&scene.mesh, r.face as usize, r.bary)?))
        })
        .collect::<Result<Vec<_>>>()?;
    let queries: Vec<Query> = valid
        .iter()
        .zip(&points)
        .map(|(&i, p)| Query {
            point: p,
            v: records[i].view_dir,
            l: records[i].light_dir,
        })
        .collect();
    let f = brdf.eval_batch(&queries)?;
    let mut out = vec![Rgb::ZERO; records.len()];
    for (&i, v) in valid.iter().zip(f) {
        out[i] = v;
    }
    Ok(out)
}

/// Ground-truth (clean) and predicted radiance images of one (view, light)
/// pair with the object mask. Shadowed pixels predict zero.
pub fn pair_images(records: &[SampleRecord], brdf: &[Rgb], width: usize, height: usize) -> (HdrImage, HdrImage, Vec<bool>) {
    let mut gt = HdrImage::new(width, height);
    let mut pred = HdrImage::new(width, height);
    let mut mask = vec![false; width * height];
    for (r, f) in records.iter().zip(brdf) {
        let k = r.py as usize * width + r.px as usize;
        gt.pixels[k] = r.clean;
        pred.pixels[k] = *f * r.shading();
        mask[k] = true;
    }
    (gt, pred, mask)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImageScore {
    pub view: usize,
    pub light: usize,
    #[serde(with = "float_or_text")]
    pub psnr: f64,
    pub dssim: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalSummary {
    /// Mean over images of the per-image PSNR (infinite values excluded).
    #[serde(with = "float_or_text")]
    pub psnr: f64,
    pub dssim: Option<f64>,
    pub rmse_cbrt: CbrtRmse,
    pub images: Vec<ImageScore>,
}

/// Image and BRDF metrics of `brdf` over the given records, grouped per
/// (view, light) image.
pub fn evaluate(brdf: &dyn SpatialBrdf, scene: &Scene, records: &[SampleRecord], width: usize, height: usize, white_level: f64) -> Result<EvalSummary> {
    let pred = predict_records(brdf, scene, records)?;
    let mut groups: BTreeMap<(u32, u32), Vec<usize>> = BTreeMap::new();
    for (i, r) in records.iter().enumerate() {
        groups.entry((r.view, r.light)).or_default().push(i);
    }
    let mut images = Vec::new();
    for ((view, light), idx) in groups {
        let recs: Vec<SampleRecord> = idx.iter().map(|&i| records[i]).collect();
        let f: Vec<Rgb> = idx.iter().map(|&i| pred[i]).collect();
        let (gt, p, mask) = pair_images(&recs, &f, width, height);
        let (gt, p) = (srgb_image(&gt), srgb_image(&p));
        images.push(ImageScore {
            view: view as usize,
            light: light as usize,
            psnr: psnr(&p, &gt, &mask)?,
            dssim: dssim(&p, &gt, &mask).ok(),
        });
    }
    if images.is_empty() {
        return Err(Error::Insufficient("no records to evaluate".into()));
    }
    let finite: Vec<f64> = images.iter().map(|s| s.psnr).filter(|p| p.is_finite()).collect();
    let psnr_mean = if finite.is_empty() { f64::INFINITY } else { finite.iter().sum::<f64>() / finite.len() as f64 };
    let ds: Vec<f64> = images.iter().filter_map(|s| s.dssim).collect();
    Ok(EvalSummary {
        psnr: psnr_mean,
        dssim: (!ds.is_empty()).then(|| ds.iter().sum::<f64>() / ds.len() as f64),
        rmse_cbrt: rmse_cbrt(&pred, records, white_level)?,
        images,
    })
}

/// Non-finite floats are written as the strings "inf", "-inf" and "nan".
pub mod float_or_text {
    use serde::{de::Error as _, Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
        if v.is_finite() {
            s.serialize_f64(*v)
        } else if v.is_nan() {
            s.serialize_str("nan")
        } else if *v > 0.0 {
            s.serialize_str("inf")
        } else {
            s.serialize_str("-inf")
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Repr {
            Num(f64),
            Text(String),
        }
        match Repr::deserialize(d)? {
            Repr::Num(v) => Ok(v),
            Repr::Text(t) => match t.as_str() {
                "inf" => Ok(f64::INFINITY),
                "-inf" => Ok(f64::NEG_INFINITY),
                "nan" => Ok(f64::NAN),
                other => Err(D::Error::custom(format!("not a number: {other}"))),
            },
        }
    }
}

pub const REPORT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricEntry {
    pub name: String,
    #[serde(with = "float_or_text")]
    pub value: f64,
    pub samples: usize,
    pub seed: Option<u64>,
    #[serde(default, skip_serializing_if = "serde_json::Value::is_null")]
    pub details: serde_json::Value,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub report_version: u32,
    pub provenance: serde_json::Value,
    pub metrics: Vec<MetricEntry>,
}

/// Deterministic report document: entries keep their insertion order and
/// JSON object keys are sorted.
pub fn make_report(provenance: serde_json::Value, metrics: Vec<MetricEntry>) -> Report {
    Report {
        report_version: REPORT_VERSION,
        provenance,
        metrics,
    }
}

impl Report {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json() + "\n")?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Ok(serde_json::from_str(&std::fs::read_to_string(path)?)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::angles::EncodingConfig;
    use crate::brdf::ConstantBrdf;
    use crate::parametric::{Material, RpParams};
    use crate::render::EncodingSpec;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn random_image(w: usize, h: usize, seed: u64) -> HdrImage {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        HdrImage {
            width: w,
            height: h,
            pixels: (0..w * h).map(|_| Rgb([0, 1, 2].map(|_| rng.gen::<f64>()))).collect(),
        }
    }

    #[test]
    fn psnr_examples() {
        let a = random_image(8, 6, 0);
        let mask = vec![true; 48];
        assert_eq!(psnr(&a, &a, &mask).unwrap(), f64::INFINITY);
        let b = HdrImage {
            pixels: a.pixels.iter().map(|p| p.map(|c| c + 0.01)).collect(),
            ..a.clone()
        };
        assert!((psnr(&a, &b, &mask).unwrap() - 40.0).abs() < 1e-9);
        assert!(matches!(psnr(&a, &b, &[false; 48]), Err(Error::Insufficient(_))));
    }

    #[test]
    fn psnr_matches_scalar_loop() {
        let a = random_image(9, 7, 1);
        let b = random_image(9, 7, 2);
        let mask: Vec<bool> = (0..63).map(|i| i % 3 != 0).collect();
        let mut se = 0.0;
        let mut n = 0.0;
        for i in 0..63 {
            if mask[i] {
                for c in 0..3 {
                    se += (a.pixels[i].0[c] - b.pixels[i].0[c]).powi(2);
                    n += 1.0;
                }
            }
        }
        let oracle = 10.0 * (1.0 / (se / n)).log10();
        assert!((psnr(&a, &b, &mask).unwrap() - oracle).abs() < 1e-9);
    }

    /// Direct 2-D windowed SSIM at every valid centre.
    fn ssim_oracle(a: &HdrImage, b: &HdrImage) -> f64 {
        let k = ssim_kernel();
        let (w, h) = (a.width, a.height);
        let (c1, c2) = (1e-4, 9e-4);
        let mut total = 0.0;
        let mut count = 0.0;
        for c in 0..3 {
            for y0 in 0..=h - 11 {
                for x0 in 0..=w - 11 {
                    let (mut mx, mut my) = (0.0, 0.0);
                    for j in 0..11 {
                        for i in 0..11 {
                            let wt = k[i] * k[j];
                            mx += wt * a.get(x0 + i, y0 + j).0[c];
                            my += wt * b.get(x0 + i, y0 + j).0[c];
                        }
                    }
                    let (mut vx, mut vy, mut cxy) = (0.0, 0.0, 0.0);
                    for j in 0..11 {
                        for i in 0..11 {
                            let wt = k[i] * k[j];
                            let dx = a.get(x0 + i, y0 + j).0[c] - mx;
                            let dy = b.get(x0 + i, y0 + j).0[c] - my;
                            vx += wt * dx * dx;
                            vy += wt * dy * dy;
                            cxy += wt * dx * dy;
                        }
                    }
                    total += ((2.0 * mx * my + c1) * (2.0 * cxy + c2)) / ((mx * mx + my * my + c1) * (vx + vy + c2));
                    count += 1.0;
                }
            }
        }
        total / count
    }

    #[test]
    fn ssim_matches_direct_oracle() {
        let a = random_image(17, 14, 3);
        let b = HdrImage {
            pixels: a.pixels.iter().zip(&random_image(17, 14, 4).pixels).map(|(p, q)| *p * 0.7 + *q * 0.3).collect(),
            ..a.clone()
        };
        let mask = vec![true; 17 * 14];
        assert!((ssim(&a, &b, &mask).unwrap() - ssim_oracle(&a, &b)).abs() < 1e-6);
    }

    #[test]
    fn dssim_examples() {
        let a = random_image(12, 12, 5);
        let mask = vec![true; 144];
        assert!(dssim(&a, &a, &mask).unwrap().abs() < 1e-12);
        let checker = |inv: bool| HdrImage {
            width: 16,
            height: 16,
            pixels: (0..256).map(|i| Rgb::splat((((i % 16 + i / 16) % 2 == 0) != inv) as u8 as f64)).collect(),
        };
        let d = dssim(&checker(false), &checker(true), &vec![true; 256]).unwrap();
        assert!(d > 0.99, "{d}");
        assert!(dssim(&random_image(8, 8, 0), &random_image(8, 8, 1), &[true; 64]).is_err());
    }

    fn rec(theta_v_deg: f64, brdf: Rgb, radiance: Rgb) -> SampleRecord {
        let t = theta_v_deg.to_radians();
        SampleRecord {
            face: 0,
            bary: [1.0, 0.0, 0.0],
            position: Vec3::default(),
            normal: Vec3::new(0.0, 0.0, 1.0),
            view_dir: Vec3::new(t.sin(), 0.0, t.cos()),
            light_dir: Vec3::new(0.0, 0.0, 1.0),
            shadowed: false,
            radiance,
            clean: radiance,
            brdf,
            irradiance: Rgb::ONE,
            px: 0,
            py: 0,
            view: 0,
            light: 0,
        }
    }

    #[test]
    fn rmse_cbrt_examples() {
        let recs = vec![
            rec(10.0, Rgb([0.1, 0.2, 0.3]), Rgb::splat(0.5)),
            rec(30.0, Rgb([0.5, 0.1, 0.8]), Rgb::splat(0.5)),
            rec(85.0, Rgb::splat(9.0), Rgb::splat(0.5)),
            rec(20.0, Rgb::splat(0.3), Rgb([1.0, 0.2, 0.2])),
        ];
        let gt: Vec<Rgb> = recs.iter().map(|r| r.brdf).collect();
        let r = rmse_cbrt(&gt, &recs, 1.0).unwrap();
        assert_eq!((r.value, r.used, r.excluded_grazing, r.excluded_saturated), (0.0, 2, 1, 1));

        // Wildly wrong predictions at excluded records do not matter.
        let mut pred: Vec<Rgb> = recs.iter().map(|r| r.brdf.map(|c| c + 0.05)).collect();
        pred[2] = Rgb::splat(1e6);
        pred[3] = Rgb::splat(1e6);
        let mut se = 0.0;
        for r in &recs[..2] {
            for c in 0..3 {
                se += ((r.brdf.0[c] + 0.05).cbrt() - r.brdf.0[c].cbrt()).powi(2);
            }
        }
        let got = rmse_cbrt(&pred, &recs, 1.0).unwrap().value;
        assert!((got - (se / 6.0).sqrt()).abs() < 1e-14);

        let mut rev = recs.clone();
        rev.reverse();
        let mut prev = pred.clone();
        prev.reverse();
        assert!((rmse_cbrt(&prev, &rev, 1.0).unwrap().value - got).abs() < 1e-14);
        assert!(matches!(rmse_cbrt(&pred[2..3], &recs[2..3], 1.0), Err(Error::Insufficient(_))));
    }

    fn sphere_scene() -> Scene {
        Scene::new(
            TriangleMesh::icosphere(2, 1.0),
            &EncodingSpec::Positional {
                encoding: EncodingConfig::default(),
            },
            None,
        )
        .unwrap()
    }

    #[test]
    fn parametric_models_are_reciprocal() {
        let scene = sphere_scene();
        let rp = Material::RealisticPhong(RpParams {
            k_full: [0.4, 0.3, 0.2],
            zeta: [0.6; 3],
            exponent: 40.0,
        });
        assert!(reciprocity_rmse(&rp, &scene, 500, 1).unwrap() < 1e-9);
    }

    #[test]
    fn energy_of_constant_integrands() {
        let scene = sphere_scene();
        for rho in [0.2, 0.5, 0.9] {
            let r = energy_audit(&Material::Lambertian { albedo: [rho; 3] }, &scene, 5, 2000, 3).unwrap();
            for e in &r.estimates {
                assert!((e.estimate - rho).abs() < 1e-12 * rho);
            }
            assert_eq!(r.fraction_over_one, 0.0);
            assert_eq!(r.median_over_one, None);
        }
        let r = energy_audit(&ConstantBrdf(Rgb::splat(2.0 / PI)), &scene, 4, 2000, 3).unwrap();
        for e in &r.estimates {
            assert!((e.estimate - 2.0).abs() < 1e-12);
        }
        assert_eq!(r.fraction_over_one, 1.0);
        assert_eq!(r.median_over_one, Some(r.estimates[0].estimate));
        assert_eq!(r.violations, 4);
    }

    #[test]
    fn energy_audit_is_seeded_and_unbiased() {
        let scene = sphere_scene();
        let rp = Material::RealisticPhong(RpParams {
            k_full: [0.6, 0.5, 0.4],
            zeta: [0.5; 3],
            exponent: 20.0,
        });
        let a = energy_audit(&rp, &scene, 8, 500, 11).unwrap();
        assert_eq!(a, energy_audit(&rp, &scene, 8, 500, 11).unwrap());
        assert_ne!(a, energy_audit(&rp, &scene, 8, 500, 12).unwrap());
        assert!(a.estimates.iter().all(|e| e.sigma > 0.0));
    }

    #[test]
    fn median_of_even_and_odd() {
        assert_eq!(median(vec![3.0, 1.0, 2.0]), Some(2.0));
        assert_eq!(median(vec![4.0, 1.0, 2.0, 3.0]), Some(2.5));
        assert_eq!(median(vec![]), None);
    }

    #[test]
    fn area_sampler_is_proportional() {
        let big = TriangleMesh::quad(2.0, 0.0);
        let small = TriangleMesh::quad(1.0, 1.0);
        let mesh = big.merged(&small);
        let s = AreaSampler::new(&mesh).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let n = 40_000;
        let on_big = (0..n).filter(|_| s.sample(&mut rng).0 < 2).count() as f64 / n as f64;
        // Areas 16 and 4.
        assert!((on_big - 0.8).abs() < 3.0 * (0.8f64 * 0.2 / n as f64).sqrt() * 2.0);
    }

    #[test]
    fn report_round_trip() {
        let empty = make_report(serde_json::json!({}), vec![]);
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("r.json");
        empty.save(&p).unwrap();
        assert_eq!(Report::load(&p).unwrap(), empty);
        let full = make_report(
            serde_json::json!({"seed": 3}),
            vec![
                MetricEntry {
                    name: "psnr".into(),
                    value: f64::INFINITY,
                    samples: 4,
                    seed: Some(3),
                    details: serde_json::Value::Null,
                },
                MetricEntry {
                    name: "reciprocity_rmse".into(),
                    value: 0.25,
                    samples: 100,
                    seed: Some(3),
                    details: serde_json::json!({"pairs": 100}),
                },
            ],
        );
        full.save(&p).unwrap();
        let back = Report::load(&p).unwrap();
        assert_eq!(back, full);
        let v: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&p).unwrap()).unwrap();
        for key in ["name", "value", "samples", "seed"] {
            assert!(v["metrics"][0].get(key).is_some());
        }
    }
}
