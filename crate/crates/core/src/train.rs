//! Tone-mapped image loss, enhanced-split regularizers and the Adam loop.

use std::collections::HashMap;
use std::io::Write;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::angles::LocalFrame;
use crate::dataset::SampleRecord;
use crate::error::{Error, Result};
use crate::math::{Rgb, Vec3};
use crate::neural::{apply_reciprocity_strategy, BrdfOutput, NeuralBrdf, OutputGrad};
use crate::nn::{checkpoint, AdamConfig, AdamState, ParamGrads};
use crate::render::Scene;
use crate::tonemap::{gamma, gamma_derivative};

/// Samples per gradient shard. Fixed so that the reduction order, and hence
/// the result, does not depend on the thread count.
pub const SHARD: usize = 1024;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    /// Color values (RGB triples) per batch.
    pub batch_size: usize,
    pub iterations: usize,
    pub adam: AdamConfig,
    pub diffuse_reg_weight: f64,
    pub specular_reg_weight: f64,
    pub seed: u64,
    /// Write a checkpoint every this many iterations (0 disables).
    pub checkpoint_every: usize,
    pub checkpoint_dir: Option<PathBuf>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            batch_size: 1 << 15,
            iterations: 2000,
            adam: AdamConfig::default(),
            diffuse_reg_weight: 5e-4,
            specular_reg_weight: 5e-4,
            seed: 0,
            checkpoint_every: 0,
            checkpoint_dir: None,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(Error::Config("batch size must be >= 1".into()));
        }
        if !(self.diffuse_reg_weight >= 0.0 && self.specular_reg_weight >= 0.0) {
            return Err(Error::Config("regularizer weights must be >= 0".into()));
        }
        if self.checkpoint_every > 0 && self.checkpoint_dir.is_none() {
            return Err(Error::Config("checkpoint cadence set without a checkpoint directory".into()));
        }
        self.adam.validate()
    }
}

/// A lit observation ready for the model.
#[derive(Debug, Clone, Copy)]
pub struct Sample {
    encoding: u32,
    pub frame: LocalFrame,
    pub v: Vec3,
    pub l: Vec3,
    /// Observed radiance.
    pub target: Rgb,
    /// `L_i · I_s · cos θ_l`.
    pub shading: Rgb,
    /// Index of the source record.
    pub record: usize,
}

/// Lit records with deduplicated positional encodings.
#[derive(Debug, Clone)]
pub struct SampleSet {
    pub pos_dim: usize,
    encodings: Vec<f64>,
    pub samples: Vec<Sample>,
}

impl SampleSet {
    /// Keeps unshadowed records with both directions above the horizon.
    pub fn from_records(scene: &Scene, records: &[SampleRecord]) -> Result<Self> {
        let pos_dim = scene.encoder.dim();
        let mut index: HashMap<(u32, [u64; 3]), u32> = HashMap::new();
        let mut encodings = Vec::new();
        let mut samples = Vec::new();
        for (i, r) in records.iter().enumerate() {
            if !r.is_lit() {
                continue;
            }
            let key = (r.face, r.bary.map(f64::to_bits));
            let enc = match index.get(&key) {
                Some(&k) => k,
                None => {
                    encodings.extend(scene.encoder.encode(&scene.mesh, r.face as usize, r.bary)?);
                    let k = index.len() as u32;
                    index.insert(key, k);
                    k
                }
            };
            samples.push(Sample {
                encoding: enc,
                frame: LocalFrame::from_normal(r.normal),
                v: r.view_dir,
                l: r.light_dir,
                target: r.radiance,
                shading: r.shading(),
                record: i,
            });
        }
        Ok(SampleSet { pos_dim, encodings, samples })
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn encoding(&self, s: &Sample) -> &[f64] {
        let k = s.encoding as usize * self.pos_dim;
        &self.encodings[k..k + self.pos_dim]
    }

    /// Model outputs for every sample, in order.
    pub fn forward_all(&self, model: &NeuralBrdf) -> Result<BrdfOutput> {
        let parts = self
            .samples
            .par_chunks(SHARD)
            .map(|chunk| {
                let batch = model.make_batch(chunk.iter().map(|s| (self.encoding(s), &s.frame, s.v, s.l)))?;
                Ok(model.forward(&batch)?.0)
            })
            .collect::<Result<Vec<_>>>()?;
        let mut out = BrdfOutput::default();
        for p in parts {
            out.f.extend(p.f);
            for (dst, src) in [(&mut out.diffuse, p.diffuse), (&mut out.specular, p.specular), (&mut out.xi, p.xi)] {
                if let Some(s) = src {
                    dst.get_or_insert_with(Vec::new).extend(s);
                }
            }
        }
        Ok(out)
    }

    /// Predicted radiance `f · shading` per sample.
    pub fn predict(&self, model: &NeuralBrdf) -> Result<Vec<Rgb>> {
        let out = self.forward_all(model)?;
        Ok(self.samples.iter().enumerate().map(|(i, s)| out.rgb(i) * s.shading).collect())
    }
}

/// One batch entry: a sample index and whether its directions are swapped.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BatchItem {
    pub sample: usize,
    pub swap: bool,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct LossTerms {
    pub data: f64,
    pub reg_diffuse: f64,
    pub reg_specular: f64,
    /// `data + w_d·reg_diffuse + w_s·reg_specular`.
    pub total: f64,
}

/// Mean over all channels of `(γ(clamp p) − γ(clamp g))²` and its gradient
/// with respect to `p` (zero where `p` is clamped).
pub fn tone_mapped_loss(pred: &[Rgb], gt: &[Rgb]) -> (f64, Vec<Rgb>) {
    let n = (3 * pred.len()).max(1) as f64;
    let mut loss = 0.0;
    let grad = pred
        .iter()
        .zip(gt)
        .map(|(p, g)| {
            Rgb([0, 1, 2].map(|c| {
                let (d, dd) = clamped_gamma(p.0[c]);
                let e = d - gamma(g.0[c].clamp(0.0, 1.0));
                loss += e * e;
                2.0 * e * dd / n
            }))
        })
        .collect();
    (loss / n, grad)
}

/// `γ(clamp x)` and its derivative in `x`.
fn clamped_gamma(x: f64) -> (f64, f64) {
    if (0.0..=1.0).contains(&x) {
        (gamma(x), gamma_derivative(x))
    } else {
        (gamma(x.clamp(0.0, 1.0)), 0.0)
    }
}

/// Diffuse regularizer: mean over samples of `‖γ(clamp p_d) − γ(clamp g)‖₁`,
/// where `p_d` is the radiance rendered from the diffuse part alone.
pub fn diffuse_regularizer(pred_diffuse: &[Rgb], gt: &[Rgb]) -> (f64, Vec<Rgb>) {
    let n = pred_diffuse.len().max(1) as f64;
    let mut loss = 0.0;
    let grad = pred_diffuse
        .iter()
        .zip(gt)
        .map(|(p, g)| {
            Rgb([0, 1, 2].map(|c| {
                let (d, dd) = clamped_gamma(p.0[c]);
                let e = d - gamma(g.0[c].clamp(0.0, 1.0));
                loss += e.abs();
                sign(e) * dd / n
            }))
        })
        .collect();
    (loss / n, grad)
}

/// Specular regularizer: mean over samples of `‖f_s‖₁`.
pub fn specular_regularizer(f_s: &[Rgb]) -> (f64, Vec<Rgb>) {
    let n = f_s.len().max(1) as f64;
    let loss = f_s.iter().map(|s| s.0.iter().map(|c| c.abs()).sum::<f64>()).sum::<f64>() / n;
    (loss, f_s.iter().map(|s| s.map(|c| sign(c) / n)).collect())
}

fn sign(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else if x < 0.0 {
        -1.0
    } else {
        0.0
    }
}

fn rgb_at(buf: &[f64], i: usize) -> Rgb {
    Rgb([buf[3 * i], buf[3 * i + 1], buf[3 * i + 2]])
}

/// One shard's contribution; normalizers refer to the whole batch.
fn shard_loss(model: &NeuralBrdf, set: &SampleSet, items: &[BatchItem], batch_len: usize, cfg: &TrainConfig) -> Result<(LossTerms, ParamGrads)> {
    let samples: Vec<&Sample> = items.iter().map(|it| &set.samples[it.sample]).collect();
    let batch = model.make_batch(
        items
            .iter()
            .zip(&samples)
            .map(|(it, s)| if it.swap { (set.encoding(s), &s.frame, s.l, s.v) } else { (set.encoding(s), &s.frame, s.v, s.l) }),
    )?;
    let (out, tape) = model.forward(&batch)?;
    let n = items.len();
    // Per-shard losses are normalized by the shard size; rescale to the batch.
    let share = n as f64 / batch_len as f64;
    let pred: Vec<Rgb> = (0..n).map(|i| out.rgb(i) * samples[i].shading).collect();
    let gt: Vec<Rgb> = samples.iter().map(|s| s.target).collect();
    let (data, g_pred) = tone_mapped_loss(&pred, &gt);
    let mut grad = OutputGrad {
        f: (0..n).flat_map(|i| (g_pred[i] * samples[i].shading * share).0).collect(),
        ..OutputGrad::default()
    };
    let mut terms = LossTerms {
        data: data * share,
        ..LossTerms::default()
    };
    if model.config().enhanced {
        let fd = out.diffuse.as_ref().expect("enhanced models are additive");
        let fs = out.specular.as_ref().expect("enhanced models are additive");
        let pd: Vec<Rgb> = (0..n).map(|i| rgb_at(fd, i) * samples[i].shading).collect();
        let (rd, g_pd) = diffuse_regularizer(&pd, &gt);
        let fs_rgb: Vec<Rgb> = (0..n).map(|i| rgb_at(fs, i)).collect();
        let (rs, g_fs) = specular_regularizer(&fs_rgb);
        let (wd, ws) = (cfg.diffuse_reg_weight, cfg.specular_reg_weight);
        grad.diffuse = Some((0..n).flat_map(|i| (g_pd[i] * samples[i].shading * (wd * share)).0).collect());
        grad.specular = Some((0..n).flat_map(|i| (g_fs[i] * (ws * share)).0).collect());
        terms.reg_diffuse = rd * share;
        terms.reg_specular = rs * share;
    }
    terms.total = terms.data + cfg.diffuse_reg_weight * terms.reg_diffuse + cfg.specular_reg_weight * terms.reg_specular;
    let grads = model.backward(&tape, &grad)?;
    Ok((terms, grads))
}

/// Total loss over a batch and its parameter gradient. Shards run in
/// parallel and are reduced in a fixed order.
pub fn batch_loss(model: &NeuralBrdf, set: &SampleSet, batch: &[BatchItem], cfg: &TrainConfig) -> Result<(LossTerms, ParamGrads)> {
    if batch.is_empty() {
        return Err(Error::Insufficient("empty batch".into()));
    }
    let parts = batch
        .par_chunks(SHARD)
        .map(|items| shard_loss(model, set, items, batch.len(), cfg))
        .collect::<Result<Vec<_>>>()?;
    let mut iter = parts.into_iter();
    let (mut terms, mut grads) = iter.next().expect("nonempty batch");
    for (t, g) in iter {
        terms.data += t.data;
        terms.reg_diffuse += t.reg_diffuse;
        terms.reg_specular += t.reg_specular;
        terms.total += t.total;
        grads.add_assign(&g);
    }
    Ok((terms, grads))
}

/// Data loss over a whole set (no regularizers, no swapping).
pub fn evaluate_loss(model: &NeuralBrdf, set: &SampleSet) -> Result<f64> {
    if set.is_empty() {
        return Err(Error::Insufficient("empty sample set".into()));
    }
    let pred = set.predict(model)?;
    let gt: Vec<Rgb> = set.samples.iter().map(|s| s.target).collect();
    Ok(tone_mapped_loss(&pred, &gt).0)
}

/// Epoch-wise shuffled stream of sample indices.
#[derive(Debug, Clone)]
pub struct BatchSampler {
    order: Vec<usize>,
    cursor: usize,
}

impl BatchSampler {
    pub fn new(len: usize, rng: &mut ChaCha8Rng) -> Self {
        let mut order: Vec<usize> = (0..len).collect();
        order.shuffle(rng);
        BatchSampler { order, cursor: 0 }
    }

    pub fn next_batch(&mut self, size: usize, rng: &mut ChaCha8Rng) -> Vec<usize> {
        let mut out = Vec::with_capacity(size);
        while out.len() < size {
            if self.cursor == self.order.len() {
                self.order.shuffle(rng);
                self.cursor = 0;
            }
            let take = (size - out.len()).min(self.order.len() - self.cursor);
            out.extend_from_slice(&self.order[self.cursor..self.cursor + take]);
            self.cursor += take;
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossRecord {
    pub iteration: usize,
    #[serde(flatten)]
    pub terms: LossTerms,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrainReport {
    pub losses: Vec<LossRecord>,
    pub checkpoints: Vec<PathBuf>,
}

/// Fits `model` to `set` with Adam. Deterministic for a given seed.
pub fn train_model(model: &mut NeuralBrdf, set: &SampleSet, cfg: &TrainConfig) -> Result<TrainReport> {
    train_model_with(model, set, cfg, |_, _| Ok(()))
}

/// As [`train_model`], calling `hook` after every update.
pub fn train_model_with<F>(model: &mut NeuralBrdf, set: &SampleSet, cfg: &TrainConfig, mut hook: F) -> Result<TrainReport>
where
    F: FnMut(&NeuralBrdf, &LossRecord) -> Result<()>,
{
    cfg.validate()?;
    if set.is_empty() {
        return Err(Error::Insufficient("no lit training samples".into()));
    }
    if set.pos_dim != model.config().pos_dim {
        return Err(Error::Shape {
            expected: model.config().pos_dim,
            got: set.pos_dim,
        });
    }
    let mut report = TrainReport::default();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut sampler = BatchSampler::new(set.len(), &mut rng);
    let mut adam = AdamState::new(&*model);
    let mode = model.config().reciprocity;
    for it in 1..=cfg.iterations {
        let batch: Vec<BatchItem> = sampler
            .next_batch(cfg.batch_size, &mut rng)
            .into_iter()
            .map(|sample| {
                let s = &set.samples[sample];
                let (v, _) = apply_reciprocity_strategy(mode, s.v, s.l, &mut rng);
                BatchItem { sample, swap: v != s.v }
            })
            .collect();
        let (terms, grads) = batch_loss(model, set, &batch, cfg)?;
        if !terms.total.is_finite() || !grads.is_finite() {
            return Err(Error::Numeric(format!(
                "training diverged at iteration {it}: loss {} (data {}, diffuse reg {}, specular reg {})",
                terms.total, terms.data, terms.reg_diffuse, terms.reg_specular
            )));
        }
        adam.update(model, &grads, &cfg.adam)?;
        let rec = LossRecord { iteration: it, terms };
        report.losses.push(rec);
        if cfg.checkpoint_every > 0 && (it % cfg.checkpoint_every == 0 || it == cfg.iterations) {
            let dir = cfg.checkpoint_dir.as_ref().expect("validated");
            std::fs::create_dir_all(dir)?;
            let path = dir.join(format!("ckpt_{it:06}.nbrdf"));
            checkpoint::save(&path, &model.descriptor(), &*model)?;
            report.checkpoints.push(path);
        }
        hook(model, &rec)?;
    }
    Ok(report)
}

pub fn write_loss_csv(path: &Path, losses: &[LossRecord]) -> Result<()> {
    let mut w = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(w, "iteration,total,data,reg_diffuse,reg_specular")?;
    for r in losses {
        let t = r.terms;
        writeln!(w, "{},{:e},{:e},{:e},{:e}", r.iteration, t.total, t.data, t.reg_diffuse, t.reg_specular)?;
    }
    w.flush()?;
    Ok(())
}
