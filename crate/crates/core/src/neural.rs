//! Neural BRDF architectures: parameter heads for the analytic models, a
//! single MLP, and separate or shared additive diffuse/specular splits, with
//! the reciprocity strategies and the enhanced split.

use std::f64::consts::PI;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::angles::{canonical_pair, encode_into, reciprocity_map, rusinkiewicz_from_dirs, EncodingConfig, LocalFrame};
use crate::brdf::{Query, SpatialBrdf};
use crate::error::{Error, Result};
use crate::math::{Rgb, Vec3};
use crate::nn::{Activation, InputSlot, MlpConfig, MlpState, MlpTape, OutputHead, ParamGrads, Parameterized};
use crate::parametric::{activate_params, ParamModelKind, ShadingGeometry, DISNEY_ARITY};
use crate::scalar::Dual;

type ParamDual = Dual<DISNEY_ARITY>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "model", rename_all = "snake_case")]
pub enum Architecture {
    ParamHead(ParamModelKind),
    SingleMlp,
    AdditiveSeparate,
    AdditiveShared,
}

impl Architecture {
    pub fn is_additive(self) -> bool {
        matches!(self, Architecture::AdditiveSeparate | Architecture::AdditiveShared)
    }

    pub fn name(self) -> String {
        match self {
            Architecture::ParamHead(k) => format!("param_{}", k.name()),
            Architecture::SingleMlp => "single_mlp".into(),
            Architecture::AdditiveSeparate => "additive_separate".into(),
            Architecture::AdditiveShared => "additive_shared".into(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReciprocityMode {
    #[default]
    None,
    #[serde(alias = "swap")]
    RandomSwap,
    Mapping,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SpecChannels {
    Scalar,
    #[default]
    Rgb,
}

impl SpecChannels {
    fn dim(self) -> usize {
        match self {
            SpecChannels::Scalar => 1,
            SpecChannels::Rgb => 3,
        }
    }
}

// Fixed depths of the reference architectures.
const PARAM_DEPTH: usize = 6;
const PARAM_SKIP: usize = 2;
const SEPARATE_DEPTH: usize = 4;
const SEPARATE_SKIP: usize = 1;
const SHARED_DEPTH: usize = 5;
const SHARED_SKIP: usize = 2;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NeuralConfig {
    pub architecture: Architecture,
    /// Length of the positional encoding of surface points.
    pub pos_dim: usize,
    #[serde(default)]
    pub reciprocity: ReciprocityMode,
    #[serde(default)]
    pub enhanced: bool,
    #[serde(default)]
    pub spec_channels: SpecChannels,
    #[serde(default)]
    pub albedo_clamp: Option<[f64; 2]>,
    /// Layer at which angle features enter. Defaults: 0 for the single and
    /// separate MLPs, the head (= 5) for the shared trunk.
    #[serde(default)]
    pub dir_feed_layer: Option<usize>,
    #[serde(default = "default_width")]
    pub width: usize,
    #[serde(default)]
    pub angle_encoding: EncodingConfig,
    /// Output scale of the additive specular softplus.
    #[serde(default = "default_spec_scale")]
    pub spec_softplus_scale: f64,
}

fn default_width() -> usize {
    128
}

fn default_spec_scale() -> f64 {
    0.5
}

impl NeuralConfig {
    pub fn new(architecture: Architecture, pos_dim: usize) -> Self {
        NeuralConfig {
            architecture,
            pos_dim,
            reciprocity: ReciprocityMode::None,
            enhanced: false,
            spec_channels: SpecChannels::Rgb,
            albedo_clamp: None,
            dir_feed_layer: None,
            width: default_width(),
            angle_encoding: EncodingConfig::default(),
            spec_softplus_scale: default_spec_scale(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let a = self.architecture;
        if self.enhanced && !a.is_additive() {
            return Err(Error::Config(format!("enhanced split requires an additive architecture, got {}", a.name())));
        }
        if self.pos_dim == 0 || self.width == 0 {
            return Err(Error::Config("pos_dim and width must be positive".into()));
        }
        if let Some([lo, hi]) = self.albedo_clamp {
            if !(0.0..=1.0).contains(&lo) || !(lo..=1.0).contains(&hi) {
                return Err(Error::Config(format!("albedo clamp [{lo}, {hi}] outside 0 <= lo <= hi <= 1")));
            }
        }
        if !(self.spec_softplus_scale > 0.0) {
            return Err(Error::Config("specular softplus scale must be positive".into()));
        }
        let dfl = self.dir_feed_layer();
        let max = match a {
            Architecture::ParamHead(_) => 0,
            Architecture::SingleMlp => PARAM_DEPTH,
            Architecture::AdditiveSeparate => SEPARATE_DEPTH,
            Architecture::AdditiveShared => SHARED_DEPTH,
        };
        let min = usize::from(a == Architecture::AdditiveShared);
        if !matches!(a, Architecture::ParamHead(_)) && !(min..=max).contains(&dfl) {
            return Err(Error::Config(format!("dir_feed_layer {dfl} outside [{min}, {max}] for {}", a.name())));
        }
        Ok(())
    }

    pub fn dir_feed_layer(&self) -> usize {
        self.dir_feed_layer.unwrap_or(match self.architecture {
            Architecture::AdditiveShared => SHARED_DEPTH,
            _ => 0,
        })
    }

    fn angle_values(&self) -> usize {
        if self.reciprocity == ReciprocityMode::Mapping {
            4
        } else {
            3
        }
    }

    /// Length of the encoded angle input.
    pub fn angle_dim(&self) -> usize {
        self.angle_encoding.encoded_len(self.angle_values())
    }

    fn spec_heads(&self) -> Vec<OutputHead> {
        let mut heads = vec![OutputHead {
            dim: self.spec_channels.dim(),
            activation: Activation::ScaledSoftplus(self.spec_softplus_scale),
        }];
        if self.enhanced {
            heads.push(OutputHead {
                dim: 3,
                activation: Activation::Sigmoid,
            });
        }
        heads
    }

    fn slot(dim: usize, enter_at: usize) -> InputSlot {
        InputSlot { dim, enter_at }
    }

    fn mlp(&self, inputs: Vec<InputSlot>, depth: usize, skip: Option<usize>, heads: Vec<OutputHead>) -> MlpConfig {
        MlpConfig {
            inputs,
            width: self.width,
            depth,
            skip_layer: skip,
            hidden_activation: Activation::Relu,
            heads,
        }
    }

    /// Topology of every owned network, in parameter order.
    pub fn mlp_configs(&self) -> Vec<MlpConfig> {
        let (p, a, dfl) = (self.pos_dim, self.angle_dim(), self.dir_feed_layer());
        let diffuse_head = vec![OutputHead {
            dim: 3,
            activation: Activation::Sigmoid,
        }];
        match self.architecture {
            Architecture::ParamHead(kind) => vec![self.mlp(
                vec![Self::slot(p, 0)],
                PARAM_DEPTH,
                Some(PARAM_SKIP),
                vec![OutputHead {
                    dim: kind.arity(),
                    activation: Activation::Linear,
                }],
            )],
            Architecture::SingleMlp => vec![self.mlp(
                vec![Self::slot(p, 0), Self::slot(a, dfl)],
                PARAM_DEPTH,
                Some(PARAM_SKIP),
                vec![OutputHead {
                    dim: 3,
                    activation: Activation::Softplus,
                }],
            )],
            Architecture::AdditiveSeparate => vec![
                self.mlp(vec![Self::slot(p, 0)], SEPARATE_DEPTH, Some(SEPARATE_SKIP), diffuse_head),
                self.mlp(
                    vec![Self::slot(p, 0), Self::slot(a, dfl)],
                    SEPARATE_DEPTH,
                    Some(SEPARATE_SKIP),
                    self.spec_heads(),
                ),
            ],
            Architecture::AdditiveShared => {
                // The trunk stops where directions enter; both heads keep the
                // remaining depth so total path lengths do not change.
                let rest = SHARED_DEPTH - dfl;
                let w = self.width;
                vec![
                    self.mlp(vec![Self::slot(p, 0)], dfl, (dfl > SHARED_SKIP).then_some(SHARED_SKIP), vec![]),
                    self.mlp(vec![Self::slot(w, 0)], rest, None, diffuse_head),
                    self.mlp(vec![Self::slot(w, 0), Self::slot(a, 0)], 1 + rest, None, self.spec_heads()),
                ]
            }
        }
    }

    pub fn param_count(&self) -> usize {
        self.mlp_configs().iter().map(|c| c.param_count()).sum()
    }
}

/// Angle-dependent inputs of a batch. Only what the architecture needs is filled.
#[derive(Debug, Clone, Default)]
pub struct BrdfBatch {
    pub len: usize,
    /// `len × pos_dim`.
    pub pos: Vec<f64>,
    /// `len × angle_dim` (empty for parameter heads).
    pub angles: Vec<f64>,
    /// Shading cosines (parameter heads only).
    pub geometry: Vec<ShadingGeometry>,
}

/// Network outputs; each buffer is `len × 3`.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct BrdfOutput {
    pub f: Vec<f64>,
    pub diffuse: Option<Vec<f64>>,
    pub specular: Option<Vec<f64>>,
    pub xi: Option<Vec<f64>>,
}

impl BrdfOutput {
    pub fn rgb(&self, i: usize) -> Rgb {
        Rgb([self.f[3 * i], self.f[3 * i + 1], self.f[3 * i + 2]])
    }
}

/// Upstream gradients for [`NeuralBrdf::backward`]. Component gradients are
/// only accepted by additive models.
#[derive(Debug, Clone, Default)]
pub struct OutputGrad {
    pub f: Vec<f64>,
    pub diffuse: Option<Vec<f64>>,
    pub specular: Option<Vec<f64>>,
}

#[derive(Debug, Clone)]
pub struct BrdfTape {
    len: usize,
    tapes: Vec<MlpTape>,
    /// Parameter heads: `len × 3 × arity` Jacobian of f w.r.t. raw outputs.
    jacobian: Vec<f64>,
    result: BrdfOutput,
}

/// `f = (1 − ξ)∘f_d + f_s`.
pub fn enhanced_combine(f_d: Rgb, f_s: Rgb, xi: Rgb) -> Rgb {
    Rgb([0, 1, 2].map(|c| (1.0 - xi.0[c]) * f_d.0[c] + f_s.0[c]))
}

/// Direction pair seen by the model under `mode`. Random swapping exchanges
/// the pair with probability 1/2; the other modes leave it unchanged (the
/// mapping is applied to the angle features).
pub fn apply_reciprocity_strategy<R: Rng>(mode: ReciprocityMode, v: Vec3, l: Vec3, rng: &mut R) -> (Vec3, Vec3) {
    match mode {
        ReciprocityMode::RandomSwap if rng.gen_bool(0.5) => (l, v),
        _ => (v, l),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NeuralBrdf {
    config: NeuralConfig,
    nets: Vec<MlpState>,
}

impl NeuralBrdf {
    pub fn new<R: Rng>(config: NeuralConfig, rng: &mut R) -> Result<Self> {
        config.validate()?;
        let nets = config.mlp_configs().into_iter().map(|c| MlpState::new(c, rng)).collect::<Result<_>>()?;
        Ok(NeuralBrdf { config, nets })
    }

    pub fn zeros(config: NeuralConfig) -> Result<Self> {
        config.validate()?;
        let nets = config.mlp_configs().into_iter().map(MlpState::zeros).collect::<Result<_>>()?;
        Ok(NeuralBrdf { config, nets })
    }

    pub fn config(&self) -> &NeuralConfig {
        &self.config
    }

    pub fn nets(&self) -> &[MlpState] {
        &self.nets
    }

    pub fn nets_mut(&mut self) -> &mut [MlpState] {
        &mut self.nets
    }

    /// Appends the angle features of `(v, l)` to `out`.
    pub fn angle_features(&self, frame: &LocalFrame, v: Vec3, l: Vec3, out: &mut Vec<f64>) -> Result<()> {
        let enc = self.config.angle_encoding;
        if self.config.reciprocity == ReciprocityMode::Mapping {
            let (v, l) = canonical_pair(v, l);
            let a = reciprocity_map(rusinkiewicz_from_dirs(frame, v, l)?);
            encode_into(&a.to_array(), enc, out);
        } else {
            let a = rusinkiewicz_from_dirs(frame, v, l)?;
            encode_into(&a.to_array(), enc, out);
        }
        Ok(())
    }

    /// Builds a batch from `(encoding, frame, v, l)` items.
    pub fn make_batch<'a, I>(&self, items: I) -> Result<BrdfBatch>
    where
        I: IntoIterator<Item = (&'a [f64], &'a LocalFrame, Vec3, Vec3)>,
    {
        let mut b = BrdfBatch::default();
        let is_param = matches!(self.config.architecture, Architecture::ParamHead(_));
        for (enc, frame, v, l) in items {
            if enc.len() != self.config.pos_dim {
                return Err(Error::Shape {
                    expected: self.config.pos_dim,
                    got: enc.len(),
                });
            }
            b.pos.extend_from_slice(enc);
            if is_param {
                let (v, l) = if self.config.reciprocity == ReciprocityMode::Mapping { canonical_pair(v, l) } else { (v, l) };
                b.geometry.push(ShadingGeometry::new(frame, v, l)?);
            } else {
                self.angle_features(frame, v, l, &mut b.angles)?;
            }
            b.len += 1;
        }
        Ok(b)
    }

    fn diffuse_from_sigmoid(&self, s: f64) -> f64 {
        let [lo, hi] = self.config.albedo_clamp.unwrap_or([0.0, 1.0]);
        (lo + (hi - lo) * s) / PI
    }

    fn diffuse_scale(&self) -> f64 {
        let [lo, hi] = self.config.albedo_clamp.unwrap_or([0.0, 1.0]);
        (hi - lo) / PI
    }

    pub fn forward(&self, batch: &BrdfBatch) -> Result<(BrdfOutput, BrdfTape)> {
        let n = batch.len;
        let pos = batch.pos.as_slice();
        let ang = batch.angles.as_slice();
        let mut tapes = Vec::with_capacity(self.nets.len());
        let mut jacobian = Vec::new();
        let result = match self.config.architecture {
            Architecture::ParamHead(kind) => {
                let (raw, tape) = self.nets[0].forward_slices(&[pos], n)?;
                let k = kind.arity();
                let mut f = vec![0.0; 3 * n];
                jacobian = vec![0.0; 3 * n * k];
                for i in 0..n {
                    let duals: Vec<ParamDual> = (0..k).map(|j| Dual::var(raw[i * k + j], j)).collect();
                    let params = activate_params(&duals, kind)?;
                    let out = params.eval(&batch.geometry[i]);
                    for c in 0..3 {
                        f[3 * i + c] = out[c].v;
                        jacobian[(3 * i + c) * k..(3 * i + c + 1) * k].copy_from_slice(&out[c].d[..k]);
                    }
                }
                tapes.push(tape);
                BrdfOutput { f, ..Default::default() }
            }
            Architecture::SingleMlp => {
                let (f, tape) = self.nets[0].forward_slices(&[pos, ang], n)?;
                tapes.push(tape);
                BrdfOutput { f, ..Default::default() }
            }
            Architecture::AdditiveSeparate | Architecture::AdditiveShared => {
                let (d_raw, s_raw) = if self.config.architecture == Architecture::AdditiveSeparate {
                    let (d, td) = self.nets[0].forward_slices(&[pos], n)?;
                    let (s, ts) = self.nets[1].forward_slices(&[pos, ang], n)?;
                    tapes.extend([td, ts]);
                    (d, s)
                } else {
                    let (feat, tt) = self.nets[0].forward_slices(&[pos], n)?;
                    let (d, td) = self.nets[1].forward_slices(&[&feat], n)?;
                    let (s, ts) = self.nets[2].forward_slices(&[&feat, ang], n)?;
                    tapes.extend([tt, td, ts]);
                    (d, s)
                };
                let sd = self.config.spec_channels.dim();
                let stride = sd + if self.config.enhanced { 3 } else { 0 };
                let mut f = vec![0.0; 3 * n];
                let mut fd = vec![0.0; 3 * n];
                let mut fs = vec![0.0; 3 * n];
                let mut xi = self.config.enhanced.then(|| vec![0.0; 3 * n]);
                for i in 0..n {
                    let row = &s_raw[i * stride..(i + 1) * stride];
                    for c in 0..3 {
                        let d = self.diffuse_from_sigmoid(d_raw[3 * i + c]);
                        let s = row[if sd == 1 { 0 } else { c }];
                        fd[3 * i + c] = d;
                        fs[3 * i + c] = s;
                        f[3 * i + c] = match xi.as_mut() {
                            Some(x) => {
                                x[3 * i + c] = row[sd + c];
                                (1.0 - row[sd + c]) * d + s
                            }
                            None => d + s,
                        };
                    }
                }
                BrdfOutput {
                    f,
                    diffuse: Some(fd),
                    specular: Some(fs),
                    xi,
                }
            }
        };
        Ok((
            result.clone(),
            BrdfTape {
                len: n,
                tapes,
                jacobian,
                result,
            },
        ))
    }

    /// Parameter gradients of `Σ grad·outputs`, aligned with [`Parameterized::param_blocks`].
    pub fn backward(&self, tape: &BrdfTape, grad: &OutputGrad) -> Result<ParamGrads> {
        let n = tape.len;
        if grad.f.len() != 3 * n {
            return Err(Error::Shape {
                expected: 3 * n,
                got: grad.f.len(),
            });
        }
        let mut out = Vec::new();
        match self.config.architecture {
            Architecture::ParamHead(kind) => {
                if grad.diffuse.is_some() || grad.specular.is_some() {
                    return Err(Error::Config("component gradients need an additive model".into()));
                }
                let k = kind.arity();
                let mut g_raw = vec![0.0; n * k];
                for i in 0..n {
                    for c in 0..3 {
                        let g = grad.f[3 * i + c];
                        let jac = &tape.jacobian[(3 * i + c) * k..(3 * i + c + 1) * k];
                        for j in 0..k {
                            g_raw[i * k + j] += g * jac[j];
                        }
                    }
                }
                out.extend(self.nets[0].backward(&tape.tapes[0], &g_raw)?.grads.into_param_grads().0);
            }
            Architecture::SingleMlp => {
                if grad.diffuse.is_some() || grad.specular.is_some() {
                    return Err(Error::Config("component gradients need an additive model".into()));
                }
                out.extend(self.nets[0].backward(&tape.tapes[0], &grad.f)?.grads.into_param_grads().0);
            }
            Architecture::AdditiveSeparate | Architecture::AdditiveShared => {
                let res = &tape.result;
                let fd = res.diffuse.as_ref().expect("additive output");
                let sd = self.config.spec_channels.dim();
                let stride = sd + if self.config.enhanced { 3 } else { 0 };
                let scale = self.diffuse_scale();
                let mut g_d = vec![0.0; 3 * n];
                let mut g_s = vec![0.0; stride * n];
                for i in 0..n {
                    for c in 0..3 {
                        let j = 3 * i + c;
                        let gf = grad.f[j];
                        let mut gd = gf;
                        if let Some(xi) = &res.xi {
                            gd *= 1.0 - xi[j];
                            g_s[i * stride + sd + c] = -gf * fd[j];
                        }
                        if let Some(extra) = &grad.diffuse {
                            gd += extra[j];
                        }
                        g_d[j] = gd * scale;
                        let mut gs = gf;
                        if let Some(extra) = &grad.specular {
                            gs += extra[j];
                        }
                        g_s[i * stride + if sd == 1 { 0 } else { c }] += gs;
                    }
                }
                if self.config.architecture == Architecture::AdditiveSeparate {
                    out.extend(self.nets[0].backward(&tape.tapes[0], &g_d)?.grads.into_param_grads().0);
                    out.extend(self.nets[1].backward(&tape.tapes[1], &g_s)?.grads.into_param_grads().0);
                } else {
                    let bd = self.nets[1].backward(&tape.tapes[1], &g_d)?;
                    let bs = self.nets[2].backward(&tape.tapes[2], &g_s)?;
                    let mut g_feat = bd.input_grads[0].clone();
                    for (a, b) in g_feat.iter_mut().zip(&bs.input_grads[0]) {
                        *a += b;
                    }
                    out.extend(self.nets[0].backward(&tape.tapes[0], &g_feat)?.grads.into_param_grads().0);
                    out.extend(bd.grads.into_param_grads().0);
                    out.extend(bs.grads.into_param_grads().0);
                }
            }
        }
        Ok(ParamGrads(out))
    }

    /// Forward pass without a tape over arbitrary queries.
    pub fn eval_queries(&self, queries: &[Query<'_>]) -> Result<BrdfOutput> {
        let batch = self.make_batch(queries.iter().map(|q| (q.point.encoding.as_slice(), &q.point.frame, q.v, q.l)))?;
        Ok(self.forward(&batch)?.0)
    }

    /// Self-describing header stored with checkpoints.
    pub fn descriptor(&self) -> String {
        serde_json::to_string(&self.config).expect("config serializes")
    }

    pub fn from_descriptor(desc: &str) -> Result<Self> {
        let config: NeuralConfig = serde_json::from_str(desc)?;
        NeuralBrdf::zeros(config)
    }
}

const NET_NAMES_SEPARATE: [&str; 2] = ["diffuse", "specular"];
const NET_NAMES_SHARED: [&str; 3] = ["trunk", "diffuse", "specular"];

impl Parameterized for NeuralBrdf {
    fn param_blocks(&self) -> Vec<(String, &[f64])> {
        let names: &[&str] = match self.config.architecture {
            Architecture::AdditiveSeparate => &NET_NAMES_SEPARATE,
            Architecture::AdditiveShared => &NET_NAMES_SHARED,
            _ => &["mlp"],
        };
        self.nets
            .iter()
            .zip(names)
            .flat_map(|(net, name)| net.param_blocks().into_iter().map(move |(b, v)| (format!("{name}.{b}"), v)))
            .collect()
    }

    fn param_blocks_mut(&mut self) -> Vec<&mut [f64]> {
        self.nets.iter_mut().flat_map(|n| n.param_blocks_mut()).collect()
    }
}

// Forward passes are chunked to bound memory.
const EVAL_CHUNK: usize = 4096;

impl SpatialBrdf for NeuralBrdf {
    fn eval_batch(&self, queries: &[Query<'_>]) -> Result<Vec<Rgb>> {
        let mut out = Vec::with_capacity(queries.len());
        for chunk in queries.chunks(EVAL_CHUNK) {
            let o = self.eval_queries(chunk)?;
            out.extend((0..chunk.len()).map(|i| o.rgb(i)));
        }
        Ok(out)
    }
}
