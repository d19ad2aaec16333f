//! Direct illumination of a mesh by one directional light:
//! `L_o(x, v) = f(x, l, v) · L_i · I_s(x, l) · max(0, ⟨n, l⟩)`.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::angles::{encode_into, EncodingConfig};
use crate::brdf::{Query, SpatialBrdf, SurfacePoint};
use crate::camera::Camera;
use crate::error::{Error, Result};
use crate::imageio::HdrImage;
use crate::math::{Rgb, Vec3};
use crate::mesh::{lbo_basis, lbo_encode, BlockSpec, Bvh, LboBasis, Ray, TriangleMesh, DEFAULT_VERTEX_BUDGET};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DirectionalLight {
    /// Unit vector from the surface toward the light.
    pub direction: Vec3,
    pub irradiance: Rgb,
}

impl DirectionalLight {
    pub fn new(direction: Vec3, irradiance: Rgb) -> Result<Self> {
        let direction = direction.try_normalized().ok_or(Error::Degenerate("zero light direction"))?;
        Ok(DirectionalLight { direction, irradiance })
    }
}

/// How surface points are encoded for the networks.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum EncodingSpec {
    Lbo {
        k: usize,
        #[serde(default)]
        blocks: Option<BlockSpec>,
        #[serde(default = "default_budget")]
        vertex_budget: usize,
    },
    /// Sin/cos encoding of bounding-box-normalized coordinates.
    Positional {
        #[serde(default)]
        encoding: EncodingConfig,
    },
}

fn default_budget() -> usize {
    DEFAULT_VERTEX_BUDGET
}

impl Default for EncodingSpec {
    fn default() -> Self {
        EncodingSpec::Lbo {
            k: 128,
            blocks: None,
            vertex_budget: DEFAULT_VERTEX_BUDGET,
        }
    }
}

#[derive(Debug, Clone)]
pub enum PointEncoder {
    Lbo { basis: LboBasis, blocks: BlockSpec },
    Positional { encoding: EncodingConfig, center: Vec3, scale: f64 },
}

impl PointEncoder {
    pub fn build(mesh: &TriangleMesh, spec: &EncodingSpec) -> Result<Self> {
        Ok(match spec {
            EncodingSpec::Lbo { k, blocks, vertex_budget } => {
                let basis = lbo_basis(mesh, *k, *vertex_budget)?;
                let blocks = blocks.clone().unwrap_or_else(|| BlockSpec::default_for(*k));
                if blocks.0.iter().any(|&(a, b)| a > b || b > *k) {
                    return Err(Error::Config(format!("LBO blocks {:?} exceed k = {k}", blocks.0)));
                }
                PointEncoder::Lbo { basis, blocks }
            }
            EncodingSpec::Positional { encoding } => {
                let (lo, hi) = mesh.bbox();
                PointEncoder::Positional {
                    encoding: *encoding,
                    center: (lo + hi) * 0.5,
                    scale: 2.0 / (hi - lo).length().max(1e-300),
                }
            }
        })
    }

    pub fn dim(&self) -> usize {
        match self {
            PointEncoder::Lbo { blocks, .. } => blocks.dim(),
            PointEncoder::Positional { encoding, .. } => encoding.encoded_len(3),
        }
    }

    pub fn encode(&self, mesh: &TriangleMesh, face: usize, bary: [f64; 3]) -> Result<Vec<f64>> {
        match self {
            PointEncoder::Lbo { basis, blocks } => lbo_encode(basis, mesh, face, bary, blocks),
            PointEncoder::Positional { encoding, center, scale } => {
                let p = (mesh.point(face, bary) - *center) * *scale;
                let mut out = Vec::with_capacity(self.dim());
                encode_into(&p.to_array(), *encoding, &mut out);
                Ok(out)
            }
        }
    }
}

/// Immutable geometry shared by rendering, training and evaluation.
#[derive(Debug, Clone)]
pub struct Scene {
    pub mesh: TriangleMesh,
    pub bvh: Bvh,
    pub encoder: PointEncoder,
    pub shadow_bias: f64,
}

/// Default shadow-ray offset relative to the bounding-box diagonal.
pub const SHADOW_BIAS_FRACTION: f64 = 1e-4;

impl Scene {
    pub fn new(mesh: TriangleMesh, encoding: &EncodingSpec, shadow_bias: Option<f64>) -> Result<Self> {
        let encoder = PointEncoder::build(&mesh, encoding)?;
        let bvh = Bvh::build(&mesh);
        let shadow_bias = shadow_bias.unwrap_or(SHADOW_BIAS_FRACTION * mesh.bbox_diagonal());
        Ok(Scene {
            mesh,
            bvh,
            encoder,
            shadow_bias,
        })
    }

    pub fn surface_point(&self, face: usize, bary: [f64; 3]) -> Result<SurfacePoint> {
        Ok(SurfacePoint::new(
            self.mesh.point(face, bary),
            self.mesh.interpolated_normal(face, bary),
            self.encoder.encode(&self.mesh, face, bary)?,
        ))
    }

    /// `I_s`: whether the ray from `x + bias·n` toward `l` escapes.
    pub fn shadow_visibility(&self, x: Vec3, n: Vec3, l: Vec3, bias: f64) -> bool {
        let ray = Ray { origin: x + n * bias, dir: l };
        !self.bvh.occluded(&self.mesh, &ray, f64::INFINITY)
    }
}

/// A shaded object pixel.
#[derive(Debug, Clone, PartialEq)]
pub struct PixelSample {
    pub px: usize,
    pub py: usize,
    pub face: usize,
    pub bary: [f64; 3],
    pub point: SurfacePoint,
    /// Unit direction toward the camera.
    pub v: Vec3,
    pub shadowed: bool,
    /// ⟨n, l⟩ clamped to ≥ 0.
    pub cos_l: f64,
    /// BRDF value (zero where the light is below the horizon).
    pub brdf: Rgb,
    pub radiance: Rgb,
}

#[derive(Debug, Clone)]
pub struct RenderedView {
    pub image: HdrImage,
    /// Object pixels (primary hit with the camera in front of the shading normal).
    pub mask: Vec<bool>,
    pub samples: Vec<PixelSample>,
}

struct PrimaryHit {
    px: usize,
    py: usize,
    face: usize,
    bary: [f64; 3],
    v: Vec3,
}

fn trace_primary(scene: &Scene, camera: &Camera) -> Vec<PrimaryHit> {
    (0..camera.width * camera.height)
        .into_par_iter()
        .filter_map(|i| {
            let (px, py) = (i % camera.width, i / camera.width);
            let ray = camera.ray(px, py);
            let hit = scene.bvh.intersect(&scene.mesh, &ray, f64::INFINITY)?;
            let n = scene.mesh.interpolated_normal(hit.face, hit.bary);
            let v = -ray.dir;
            (n.dot(v) > 0.0).then_some(PrimaryHit {
                px,
                py,
                face: hit.face,
                bary: hit.bary,
                v,
            })
        })
        .collect()
}

pub fn render_view(scene: &Scene, camera: &Camera, light: &DirectionalLight, brdf: &dyn SpatialBrdf) -> Result<RenderedView> {
    let hits = trace_primary(scene, camera);
    let l = light.direction;
    let mut samples: Vec<PixelSample> = hits
        .into_par_iter()
        .map(|h| {
            let point = scene.surface_point(h.face, h.bary)?;
            let n = point.frame.n;
            let cos_l = n.dot(l).max(0.0);
            let shadowed = cos_l > 0.0 && !scene.shadow_visibility(point.position, n, l, scene.shadow_bias);
            Ok(PixelSample {
                px: h.px,
                py: h.py,
                face: h.face,
                bary: h.bary,
                point,
                v: h.v,
                shadowed,
                cos_l,
                brdf: Rgb::ZERO,
                radiance: Rgb::ZERO,
            })
        })
        .collect::<Result<_>>()?;

    let lit: Vec<usize> = (0..samples.len()).filter(|&i| samples[i].cos_l > 0.0).collect();
    let queries: Vec<Query<'_>> = lit
        .iter()
        .map(|&i| Query {
            point: &samples[i].point,
            v: samples[i].v,
            l,
        })
        .collect();
    let values = brdf.eval_batch(&queries)?;
    for (&i, f) in lit.iter().zip(values) {
        let s = &mut samples[i];
        s.brdf = f;
        let vis = if s.shadowed { 0.0 } else { 1.0 };
        s.radiance = f * light.irradiance * (vis * s.cos_l);
    }

    let mut image = HdrImage::new(camera.width, camera.height);
    let mut mask = vec![false; camera.width * camera.height];
    for s in &samples {
        let k = s.py * camera.width + s.px;
        image.pixels[k] = s.radiance;
        mask[k] = true;
    }
    Ok(RenderedView { image, mask, samples })
}
