//! Semi-synthetic datasets: analytic ground-truth materials rendered on a mesh
//! from a ring of cameras under directional lights, with Gaussian noise.
//!
//! Directory layout:
//!
//! ```text
//! scene.json              the SceneSpec used for generation
//! manifest.json           cameras, light directions, split, record counts
//! images/v###_l###.pfm    noisy HDR image per (view, light)
//! records/v###_l###.rec   per-pixel SampleRecords per (view, light)
//! ```

use std::f64::consts::PI;
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::brdf::{Query, SpatialBrdf};
use crate::camera::Camera;
use crate::error::{Error, Result};
use crate::imageio::{save_pfm, HdrImage};
use crate::math::{Rgb, Vec3};
use crate::mesh::TriangleMesh;
use crate::parametric::Material;
use crate::render::{render_view, DirectionalLight, EncodingSpec, Scene};
use crate::sampling::substream;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum MeshSpec {
    Icosphere {
        level: u32,
        #[serde(default = "one")]
        radius: f64,
    },
    /// Path relative to the scene file's directory.
    Obj { path: PathBuf },
}

fn one() -> f64 {
    1.0
}

impl MeshSpec {
    pub fn build(&self, base: &Path) -> Result<TriangleMesh> {
        match self {
            MeshSpec::Icosphere { level, radius } => {
                if *level > 6 {
                    return Err(Error::Config(format!("icosphere level {level} too large")));
                }
                Ok(TriangleMesh::icosphere(*level, *radius))
            }
            MeshSpec::Obj { path } => TriangleMesh::load(&base.join(path)),
        }
    }
}

/// Smooth per-channel albedo modulation `1 + a·sin(ω·⟨x, axis_c⟩ + c)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AlbedoVariation {
    pub amplitude: f64,
    pub frequency: f64,
}

/// Ground truth: an analytic material, optionally with spatially varying albedo.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MaterialField {
    pub material: Material,
    #[serde(default)]
    pub variation: Option<AlbedoVariation>,
}

impl MaterialField {
    pub fn uniform(material: Material) -> Self {
        MaterialField { material, variation: None }
    }

    pub fn albedo_scale(&self, x: Vec3) -> [f64; 3] {
        match self.variation {
            None => [1.0; 3],
            Some(v) => {
                let axes = [Vec3::new(1.0, 0.0, 0.0), Vec3::new(0.0, 1.0, 0.0), Vec3::new(0.0, 0.0, 1.0)];
                [0, 1, 2].map(|c| 1.0 + v.amplitude * (v.frequency * x.dot(axes[c]) + c as f64).sin())
            }
        }
    }

    /// Material at a surface position.
    pub fn at(&self, x: Vec3) -> Material {
        match self.variation {
            None => self.material.clone(),
            Some(_) => self.material.with_albedo_scale(self.albedo_scale(x)),
        }
    }

    pub fn diffuse_albedo(&self, x: Vec3) -> Option<[f64; 3]> {
        self.at(x).diffuse_albedo()
    }
}

impl SpatialBrdf for MaterialField {
    fn eval_batch(&self, queries: &[Query<'_>]) -> Result<Vec<Rgb>> {
        queries.iter().map(|q| self.at(q.point.position).eval(&q.point.frame, q.v, q.l)).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CameraRing {
    pub count: usize,
    pub radius: f64,
    pub elevation_deg: f64,
    #[serde(default = "default_fov")]
    pub fov_deg: f64,
    pub width: usize,
    pub height: usize,
}

fn default_fov() -> f64 {
    35.0
}

impl CameraRing {
    /// Cameras evenly spaced in azimuth around the origin, world up = +z.
    pub fn cameras(&self) -> Result<Vec<Camera>> {
        (0..self.count)
            .map(|i| {
                let a = 2.0 * PI * i as f64 / self.count as f64;
                let e = self.elevation_deg.to_radians();
                let eye = Vec3::new(e.cos() * a.cos(), e.cos() * a.sin(), e.sin()) * self.radius;
                Camera::look_at(eye, Vec3::default(), Vec3::new(0.0, 0.0, 1.0), self.fov_deg, self.width, self.height)
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LightSpec {
    /// Number of generated directions (ignored when `directions` is given).
    #[serde(default)]
    pub count: usize,
    /// Largest angle between a generated light and the camera's view axis.
    #[serde(default = "default_cone")]
    pub max_angle_deg: f64,
    /// Explicit directions (toward the light).
    #[serde(default)]
    pub directions: Option<Vec<Vec3>>,
    #[serde(default = "default_irradiance")]
    pub irradiance: Rgb,
    /// Directions are given in camera coordinates and move with each view.
    #[serde(default = "yes")]
    pub camera_relative: bool,
}

fn default_cone() -> f64 {
    45.0
}

fn default_irradiance() -> Rgb {
    Rgb::ONE
}

fn yes() -> bool {
    true
}

impl LightSpec {
    /// Light directions (camera frame when camera-relative). Generated
    /// directions follow a Fibonacci spiral on the cap around the camera axis.
    pub fn directions(&self) -> Result<Vec<Vec3>> {
        if let Some(d) = &self.directions {
            return d.iter().map(|v| v.try_normalized().ok_or(Error::Degenerate("zero light direction"))).collect();
        }
        let n = self.count;
        let cos_max = self.max_angle_deg.to_radians().cos();
        let golden = PI * (3.0 - 5f64.sqrt());
        let toward = if self.camera_relative { -1.0 } else { 1.0 };
        Ok((0..n)
            .map(|i| {
                let ct = 1.0 - (1.0 - cos_max) * (i as f64 + 0.5) / n as f64;
                let st = (1.0 - ct * ct).max(0.0).sqrt();
                let phi = golden * i as f64;
                Vec3::new(st * phi.cos(), st * phi.sin(), toward * ct)
            })
            .collect())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitSpec {
    pub train_views: usize,
    pub train_lights: usize,
    pub test_views: usize,
    pub test_lights: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneSpec {
    pub mesh: MeshSpec,
    #[serde(default)]
    pub encoding: EncodingSpec,
    pub material: MaterialField,
    pub cameras: CameraRing,
    pub lights: LightSpec,
    pub split: SplitSpec,
    #[serde(default = "default_sigma")]
    pub noise_sigma: f64,
    /// Observed values at or above this are treated as saturated.
    #[serde(default = "one")]
    pub white_level: f64,
    #[serde(default)]
    pub shadow_bias: Option<f64>,
    #[serde(default)]
    pub seed: u64,
}

fn default_sigma() -> f64 {
    1e-3
}

impl SceneSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.noise_sigma >= 0.0) {
            return Err(Error::Config(format!("noise sigma {} < 0", self.noise_sigma)));
        }
        if self.cameras.count == 0 || self.cameras.width == 0 || self.cameras.height == 0 {
            return Err(Error::Config("camera count and resolution must be >= 1".into()));
        }
        if self.lights.directions.is_none() && self.lights.count == 0 {
            return Err(Error::Config("light count must be >= 1".into()));
        }
        if !(self.white_level > 0.0) {
            return Err(Error::Config("white level must be positive".into()));
        }
        Ok(())
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let s: SceneSpec = serde_json::from_str(text)?;
        s.validate()?;
        Ok(s)
    }

    pub fn build_scene(&self, base: &Path) -> Result<Scene> {
        Scene::new(self.mesh.build(base)?, &self.encoding, self.shadow_bias)
    }

    /// World-space light for view `view` and light index `light`.
    pub fn light(&self, cameras: &[Camera], dirs: &[Vec3], view: usize, light: usize) -> Result<DirectionalLight> {
        let d = if self.lights.camera_relative { cameras[view].to_world(dirs[light]) } else { dirs[light] };
        DirectionalLight::new(d, self.lights.irradiance)
    }
}

/// `(view, light)` index pair.
pub type PairId = (usize, usize);

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Split {
    pub train: Vec<PairId>,
    pub test: Vec<PairId>,
}

/// Disjoint train/test views, each with its own random subset of lights.
pub fn split(n_views: usize, n_lights: usize, spec: &SplitSpec, seed: u64) -> Result<Split> {
    if spec.train_views + spec.test_views > n_views {
        return Err(Error::Insufficient(format!(
            "{} train + {} test views requested, {n_views} available",
            spec.train_views, spec.test_views
        )));
    }
    if spec.train_lights.max(spec.test_lights) > n_lights {
        return Err(Error::Insufficient(format!(
            "{} lights per view requested, {n_lights} available",
            spec.train_lights.max(spec.test_lights)
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut views: Vec<usize> = (0..n_views).collect();
    views.shuffle(&mut rng);
    let mut pairs = |vs: &[usize], per: usize| {
        let mut out = Vec::new();
        let mut sorted = vs.to_vec();
        sorted.sort_unstable();
        for v in sorted {
            let mut ls: Vec<usize> = (0..n_lights).collect();
            ls.shuffle(&mut rng);
            let mut pick = ls[..per].to_vec();
            pick.sort_unstable();
            out.extend(pick.into_iter().map(|l| (v, l)));
        }
        out
    };
    let train = pairs(&views[..spec.train_views], spec.train_lights);
    let test = pairs(&views[spec.train_views..spec.train_views + spec.test_views], spec.test_lights);
    Ok(Split { train, test })
}

/// One object pixel under one light.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SampleRecord {
    pub face: u32,
    pub bary: [f64; 3],
    pub position: Vec3,
    pub normal: Vec3,
    pub view_dir: Vec3,
    pub light_dir: Vec3,
    pub shadowed: bool,
    /// Observed (noisy) radiance.
    pub radiance: Rgb,
    pub clean: Rgb,
    /// Ground-truth BRDF value (zero when the light is below the horizon).
    pub brdf: Rgb,
    pub irradiance: Rgb,
    pub px: u32,
    pub py: u32,
    pub view: u32,
    pub light: u32,
}

impl SampleRecord {
    pub fn cos_l(&self) -> f64 {
        self.normal.dot(self.light_dir).max(0.0)
    }

    pub fn cos_v(&self) -> f64 {
        self.normal.dot(self.view_dir)
    }

    /// Unshadowed with both directions strictly above the horizon.
    pub fn is_lit(&self) -> bool {
        !self.shadowed && self.cos_l() > 0.0 && self.cos_v() > 0.0
    }

    /// `L_i · I_s · cos θ_l`.
    pub fn shading(&self) -> Rgb {
        if self.shadowed {
            Rgb::ZERO
        } else {
            self.irradiance * self.cos_l()
        }
    }

    pub fn is_saturated(&self, white_level: f64) -> bool {
        self.radiance.0.iter().any(|&c| c >= white_level)
    }
}

pub const RECORD_MAGIC: &[u8; 8] = b"NBRDREC1";
pub const RECORD_VERSION: u32 = 1;
const RECORD_BYTES: usize = 4 + 8 * (3 * 9) + 1 + 4 * 4;

fn put_vec(buf: &mut Vec<u8>, v: [f64; 3]) {
    for x in v {
        buf.extend_from_slice(&x.to_le_bytes());
    }
}

/// Little-endian: magic, u32 version, u64 count, then fixed-size records.
pub fn write_records<W: Write>(mut w: W, records: &[SampleRecord]) -> Result<()> {
    w.write_all(RECORD_MAGIC)?;
    w.write_all(&RECORD_VERSION.to_le_bytes())?;
    w.write_all(&(records.len() as u64).to_le_bytes())?;
    let mut buf = Vec::with_capacity(records.len() * RECORD_BYTES);
    for r in records {
        buf.extend_from_slice(&r.face.to_le_bytes());
        put_vec(&mut buf, r.bary);
        for v in [r.position, r.normal, r.view_dir, r.light_dir] {
            put_vec(&mut buf, v.to_array());
        }
        buf.push(u8::from(r.shadowed));
        for c in [r.radiance, r.clean, r.brdf, r.irradiance] {
            put_vec(&mut buf, c.0);
        }
        for u in [r.px, r.py, r.view, r.light] {
            buf.extend_from_slice(&u.to_le_bytes());
        }
    }
    w.write_all(&buf)?;
    w.flush()?;
    Ok(())
}

struct Cursor<'a>(&'a [u8]);

impl Cursor<'_> {
    fn take<const N: usize>(&mut self) -> [u8; N] {
        let (a, b) = self.0.split_at(N);
        self.0 = b;
        a.try_into().unwrap()
    }
    fn f(&mut self) -> f64 {
        f64::from_le_bytes(self.take())
    }
    fn v3(&mut self) -> [f64; 3] {
        [self.f(), self.f(), self.f()]
    }
    fn u(&mut self) -> u32 {
        u32::from_le_bytes(self.take())
    }
}

pub fn read_records<R: Read>(mut r: R) -> Result<Vec<SampleRecord>> {
    let mut head = [0u8; 20];
    r.read_exact(&mut head).map_err(|_| Error::Format("truncated record header".into()))?;
    if &head[..8] != RECORD_MAGIC {
        return Err(Error::Format("not a record file (bad magic)".into()));
    }
    let version = u32::from_le_bytes(head[8..12].try_into().unwrap());
    if version != RECORD_VERSION {
        return Err(Error::Format(format!("unsupported record version {version}")));
    }
    let count = u64::from_le_bytes(head[12..20].try_into().unwrap()) as usize;
    let mut body = Vec::new();
    r.read_to_end(&mut body)?;
    if body.len() != count * RECORD_BYTES {
        return Err(Error::Format(format!("record file holds {} bytes, expected {}", body.len(), count * RECORD_BYTES)));
    }
    let mut c = Cursor(&body);
    Ok((0..count)
        .map(|_| SampleRecord {
            face: c.u(),
            bary: c.v3(),
            position: Vec3::from_array(c.v3()),
            normal: Vec3::from_array(c.v3()),
            view_dir: Vec3::from_array(c.v3()),
            light_dir: Vec3::from_array(c.v3()),
            shadowed: c.take::<1>()[0] != 0,
            radiance: Rgb(c.v3()),
            clean: Rgb(c.v3()),
            brdf: Rgb(c.v3()),
            irradiance: Rgb(c.v3()),
            px: c.u(),
            py: c.u(),
            view: c.u(),
            light: c.u(),
        })
        .collect())
}

/// Adds `N(0, σ²)` per channel and clamps at zero. `σ = 0` is the identity.
pub fn add_noise(clean: Rgb, sigma: f64, rng: &mut ChaCha8Rng) -> Rgb {
    if sigma == 0.0 {
        return clean;
    }
    let n = Normal::new(0.0, sigma).expect("finite sigma");
    Rgb([0, 1, 2].map(|c| (clean.0[c] + n.sample(rng)).max(0.0)))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub format_version: u32,
    pub cameras: Vec<Camera>,
    /// As configured (camera frame when camera-relative).
    pub light_directions: Vec<Vec3>,
    pub split: Split,
    pub pos_dim: usize,
    pub record_counts: Vec<(PairId, usize)>,
}

pub const MANIFEST_VERSION: u32 = 1;

fn pair_stem((v, l): PairId) -> String {
    format!("v{v:03}_l{l:03}")
}

/// Renders one (view, light) pair into noisy records and an image.
pub fn render_pair(spec: &SceneSpec, scene: &Scene, cameras: &[Camera], dirs: &[Vec3], pair: PairId) -> Result<(HdrImage, Vec<SampleRecord>)> {
    let (view, light_idx) = pair;
    let light = spec.light(cameras, dirs, view, light_idx)?;
    let rendered = render_view(scene, &cameras[view], &light, &spec.material)?;
    let mut rng = substream(spec.seed, (view * dirs.len() + light_idx) as u64);
    let mut image = HdrImage::new(cameras[view].width, cameras[view].height);
    let records = rendered
        .samples
        .iter()
        .map(|s| {
            let noisy = add_noise(s.radiance, spec.noise_sigma, &mut rng);
            image.pixels[s.py * image.width + s.px] = noisy;
            SampleRecord {
                face: s.face as u32,
                bary: s.bary,
                position: s.point.position,
                normal: s.point.frame.n,
                view_dir: s.v,
                light_dir: light.direction,
                shadowed: s.shadowed,
                radiance: noisy,
                clean: s.radiance,
                brdf: s.brdf,
                irradiance: light.irradiance,
                px: s.px as u32,
                py: s.py as u32,
                view: view as u32,
                light: light_idx as u32,
            }
        })
        .collect();
    Ok((image, records))
}

/// Generates the dataset described by `spec` into `out`. `base` resolves
/// relative mesh paths.
pub fn generate(spec: &SceneSpec, base: &Path, out: &Path) -> Result<Manifest> {
    spec.validate()?;
    let scene = spec.build_scene(base)?;
    let cameras = spec.cameras.cameras()?;
    let dirs = spec.lights.directions()?;
    let split = split(cameras.len(), dirs.len(), &spec.split, spec.seed)?;
    std::fs::create_dir_all(out.join("images"))?;
    std::fs::create_dir_all(out.join("records"))?;
    let pairs: Vec<PairId> = split.train.iter().chain(&split.test).copied().collect();
    let counts = pairs
        .par_iter()
        .map(|&pair| {
            let (image, records) = render_pair(spec, &scene, &cameras, &dirs, pair)?;
            let stem = pair_stem(pair);
            save_pfm(&out.join("images").join(format!("{stem}.pfm")), &image)?;
            write_records(BufWriter::new(File::create(out.join("records").join(format!("{stem}.rec")))?), &records)?;
            Ok((pair, records.len()))
        })
        .collect::<Result<Vec<_>>>()?;
    let manifest = Manifest {
        format_version: MANIFEST_VERSION,
        cameras,
        light_directions: dirs,
        split,
        pos_dim: scene.encoder.dim(),
        record_counts: counts,
    };
    std::fs::write(out.join("scene.json"), serde_json::to_string_pretty(&spec_with_absolute_mesh(spec, base))?)?;
    std::fs::write(out.join("manifest.json"), serde_json::to_string_pretty(&manifest)?)?;
    Ok(manifest)
}

fn spec_with_absolute_mesh(spec: &SceneSpec, base: &Path) -> SceneSpec {
    let mut s = spec.clone();
    if let MeshSpec::Obj { path } = &spec.mesh {
        let abs = base.join(path);
        s.mesh = MeshSpec::Obj {
            path: abs.canonicalize().unwrap_or(abs),
        };
    }
    s
}

/// A generated dataset on disk.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub dir: PathBuf,
    pub spec: SceneSpec,
    pub manifest: Manifest,
}

impl Dataset {
    pub fn open(dir: &Path) -> Result<Self> {
        let read = |name: &str| {
            std::fs::read_to_string(dir.join(name)).map_err(|e| Error::Format(format!("{}: {e}", dir.join(name).display())))
        };
        let spec = SceneSpec::from_json(&read("scene.json")?)?;
        let manifest: Manifest = serde_json::from_str(&read("manifest.json")?)?;
        if manifest.format_version != MANIFEST_VERSION {
            return Err(Error::Format(format!("unsupported manifest version {}", manifest.format_version)));
        }
        Ok(Dataset {
            dir: dir.to_path_buf(),
            spec,
            manifest,
        })
    }

    pub fn scene(&self) -> Result<Scene> {
        self.spec.build_scene(&self.dir)
    }

    pub fn read_pair(&self, pair: PairId) -> Result<Vec<SampleRecord>> {
        let p = self.dir.join("records").join(format!("{}.rec", pair_stem(pair)));
        read_records(BufReader::new(File::open(&p).map_err(|e| Error::Format(format!("{}: {e}", p.display())))?))
    }

    pub fn read_pairs(&self, pairs: &[PairId]) -> Result<Vec<SampleRecord>> {
        let mut out = Vec::new();
        for &p in pairs {
            out.extend(self.read_pair(p)?);
        }
        Ok(out)
    }

    pub fn train_records(&self) -> Result<Vec<SampleRecord>> {
        self.read_pairs(&self.manifest.split.train)
    }

    pub fn test_records(&self) -> Result<Vec<SampleRecord>> {
        self.read_pairs(&self.manifest.split.test)
    }
}
