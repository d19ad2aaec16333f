use std::io::Write;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::de::DeserializeOwned;
use serde::Deserialize;
use serde_json::json;

use nbrdf::angles::EncodingConfig;
use nbrdf::brdf::SpatialBrdf;
use nbrdf::dataset::{generate, Dataset, MeshSpec, PairId, SceneSpec};
use nbrdf::imageio::{save_pfm, save_png_preview};
use nbrdf::mesh::TriangleMesh;
use nbrdf::metrics::{energy_audit, evaluate, make_report, reciprocity_rmse, MetricEntry, Report};
use nbrdf::neural::{Architecture, NeuralBrdf, NeuralConfig, ReciprocityMode, SpecChannels};
use nbrdf::nn::{checkpoint, Parameterized};
use nbrdf::parametric::{random_material, Material, ParamModelKind};
use nbrdf::render::{render_view, EncodingSpec, Scene};
use nbrdf::sampling::substream;
use nbrdf::train::{evaluate_loss, train_model, write_loss_csv, SampleSet, TrainConfig};
use nbrdf::Error;

use crate::provenance::{Provenance, Source};
use crate::{CliError, CliResult, Common, ModelFlags};

fn usage(msg: impl Into<String>) -> CliError {
    CliError::Usage(msg.into())
}

fn load_config<T: DeserializeOwned + Default>(path: Option<&Path>) -> CliResult<T> {
    match path {
        None => Ok(T::default()),
        Some(p) => {
            let text = std::fs::read_to_string(p).map_err(|e| Error::Config(format!("{}: {e}", p.display())))?;
            serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", p.display())).into())
        }
    }
}

fn write_json(path: &Path, value: &serde_json::Value) -> CliResult<()> {
    std::fs::write(path, serde_json::to_string_pretty(value)? + "\n")?;
    Ok(())
}

fn entry(name: &str, value: f64, samples: usize, seed: Option<u64>, details: serde_json::Value) -> MetricEntry {
    MetricEntry {
        name: name.into(),
        value,
        samples,
        seed,
        details,
    }
}

pub fn gen_data(common: &Common, mesh: Option<PathBuf>) -> CliResult<()> {
    let config = common.config.as_deref().ok_or_else(|| usage("gen-data requires --config <scene.json>"))?;
    let text = std::fs::read_to_string(config).map_err(|e| Error::Config(format!("{}: {e}", config.display())))?;
    let mut spec = SceneSpec::from_json(&text).map_err(|e| Error::Config(format!("{}: {e}", config.display())))?;
    let base = config.parent().unwrap_or(Path::new(".")).to_path_buf();
    let mut prov = Provenance::new("gen-data");
    prov.record("config", &config, Source::Flag);
    spec.seed = prov.resolve("seed", common.seed, Some(spec.seed), 0);
    if let Some(m) = mesh {
        prov.record("mesh", &m, Source::Flag);
        let abs = std::env::current_dir()?.join(m);
        spec.mesh = MeshSpec::Obj { path: abs };
    } else {
        prov.record("mesh", &spec.mesh, Source::Config);
    }
    let manifest = generate(&spec, &base, &common.out)?;
    write_json(&common.out.join("provenance.json"), &prov.to_value())?;
    let records: usize = manifest.record_counts.iter().map(|c| c.1).sum();
    println!(
        "generated {} train and {} test images ({} records, position encoding dim {}) in {}",
        manifest.split.train.len(),
        manifest.split.test.len(),
        records,
        manifest.pos_dim,
        common.out.display()
    );
    Ok(())
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields, default)]
struct TrainFile {
    data: Option<PathBuf>,
    seed: Option<u64>,
    model: Option<String>,
    reciprocity: Option<String>,
    enhanced: Option<bool>,
    dir_feed_layer: Option<usize>,
    albedo_clamp: Option<[f64; 2]>,
    spec_channels: Option<String>,
    width: Option<usize>,
    spec_softplus_scale: Option<f64>,
    angle_frequencies: Option<usize>,
    training: Option<TrainConfig>,
}

pub fn parse_architecture(s: &str) -> CliResult<Architecture> {
    Ok(match s.to_ascii_lowercase().replace('_', "-").as_str() {
        "ts" | "torrance-sparrow" => Architecture::ParamHead(ParamModelKind::TorranceSparrow),
        "rp" | "realistic-phong" => Architecture::ParamHead(ParamModelKind::RealisticPhong),
        "disney" => Architecture::ParamHead(ParamModelKind::Disney),
        "single-mlp" | "single" => Architecture::SingleMlp,
        "additive-separate" | "separate" => Architecture::AdditiveSeparate,
        "additive-shared" | "shared" => Architecture::AdditiveShared,
        other => return Err(usage(format!("unknown model '{other}'"))),
    })
}

fn parse_reciprocity(s: &str) -> CliResult<ReciprocityMode> {
    Ok(match s {
        "none" => ReciprocityMode::None,
        "swap" | "random-swap" => ReciprocityMode::RandomSwap,
        "mapping" => ReciprocityMode::Mapping,
        other => return Err(usage(format!("unknown reciprocity mode '{other}'"))),
    })
}

fn parse_spec_channels(s: &str) -> CliResult<SpecChannels> {
    Ok(match s {
        "1" | "scalar" => SpecChannels::Scalar,
        "3" | "rgb" => SpecChannels::Rgb,
        other => return Err(usage(format!("unknown specular channel count '{other}'"))),
    })
}

fn parse_clamp(s: &str) -> CliResult<[f64; 2]> {
    let parts: Vec<&str> = s.split(',').collect();
    let vals: Option<Vec<f64>> = parts.iter().map(|p| p.trim().parse().ok()).collect();
    match vals.as_deref() {
        Some([lo, hi]) => Ok([*lo, *hi]),
        _ => Err(usage(format!("--albedo-clamp expects 'lo,hi', got '{s}'"))),
    }
}

fn open_dataset(prov: &mut Provenance, flag: Option<PathBuf>, config: Option<PathBuf>) -> CliResult<(Dataset, Scene)> {
    let dir = prov.resolve_opt("data", flag, config).ok_or_else(|| usage("a dataset is required (--data <dir>)"))?;
    let ds = Dataset::open(&dir)?;
    let scene = ds.scene()?;
    Ok((ds, scene))
}

pub fn load_model(path: &Path) -> CliResult<NeuralBrdf> {
    let (desc, blocks) = checkpoint::load(path)?;
    let mut model = NeuralBrdf::from_descriptor(&desc)?;
    checkpoint::restore(&mut model, &blocks)?;
    Ok(model)
}

fn check_model_fits(model: &NeuralBrdf, scene: &Scene) -> CliResult<()> {
    if model.config().pos_dim != scene.encoder.dim() {
        return Err(Error::Shape {
            expected: scene.encoder.dim(),
            got: model.config().pos_dim,
        }
        .into());
    }
    Ok(())
}

pub fn train(common: &Common, data: Option<PathBuf>, flags: &ModelFlags, iterations: Option<usize>, batch: Option<usize>, lr: Option<f64>) -> CliResult<()> {
    let file: TrainFile = load_config(common.config.as_deref())?;
    let mut prov = Provenance::new("train");
    let (ds, scene) = open_dataset(&mut prov, data, file.data.clone())?;
    let seed = prov.resolve("seed", common.seed, file.seed, 0);

    let model_name = prov.resolve("model", flags.model.clone(), file.model.clone(), "single-mlp".into());
    let mut cfg = NeuralConfig::new(parse_architecture(&model_name)?, scene.encoder.dim());
    let rec = prov.resolve("reciprocity", flags.reciprocity.clone(), file.reciprocity.clone(), "none".into());
    cfg.reciprocity = parse_reciprocity(&rec)?;
    cfg.enhanced = prov.resolve("enhanced", flags.enhanced, file.enhanced, false);
    cfg.dir_feed_layer = prov.resolve_opt("dir_feed_layer", flags.dir_feed_layer, file.dir_feed_layer);
    let clamp_flag = flags.albedo_clamp.as_deref().map(parse_clamp).transpose()?;
    cfg.albedo_clamp = prov.resolve_opt("albedo_clamp", clamp_flag, file.albedo_clamp);
    let sc = prov.resolve("spec_channels", flags.spec_channels.clone(), file.spec_channels.clone(), "3".into());
    cfg.spec_channels = parse_spec_channels(&sc)?;
    cfg.width = prov.resolve("width", flags.width, file.width, cfg.width);
    cfg.spec_softplus_scale = prov.resolve("spec_softplus_scale", None, file.spec_softplus_scale, cfg.spec_softplus_scale);
    let freqs = prov.resolve("angle_frequencies", None, file.angle_frequencies, cfg.angle_encoding.num_frequencies);
    cfg.angle_encoding = EncodingConfig {
        num_frequencies: freqs,
        ..cfg.angle_encoding
    };
    cfg.validate()?;

    let base = file.training.clone().unwrap_or_default();
    let from_file = file.training.as_ref();
    let mut tc = base.clone();
    tc.iterations = prov.resolve("iterations", iterations, from_file.map(|t| t.iterations), TrainConfig::default().iterations);
    tc.batch_size = prov.resolve("batch_size", batch, from_file.map(|t| t.batch_size), TrainConfig::default().batch_size);
    tc.adam.lr = prov.resolve("lr", lr, from_file.map(|t| t.adam.lr), TrainConfig::default().adam.lr);
    tc.seed = seed;
    if tc.checkpoint_every > 0 {
        tc.checkpoint_dir = Some(common.out.join("checkpoints"));
    }
    prov.record("training", &tc, if from_file.is_some() { Source::Config } else { Source::Default });

    std::fs::create_dir_all(&common.out)?;
    let train_set = SampleSet::from_records(&scene, &ds.train_records()?)?;
    let mut model = NeuralBrdf::new(cfg, &mut substream(seed, u64::MAX))?;
    log::info!("training {} parameters on {} samples", model.param_count(), train_set.len());
    let report = train_model(&mut model, &train_set, &tc)?;
    checkpoint::save(&common.out.join("model.nbrdf"), &model.descriptor(), &model)?;
    write_loss_csv(&common.out.join("loss.csv"), &report.losses)?;
    let train_loss = evaluate_loss(&model, &train_set)?;
    let summary = json!({
        "provenance": prov.to_value(),
        "parameters": model.param_count(),
        "train_samples": train_set.len(),
        "iterations": report.losses.len(),
        "final_batch_loss": report.losses.last().map(|l| l.terms.total),
        "train_loss": train_loss,
        "checkpoints": report.checkpoints,
    });
    write_json(&common.out.join("train.json"), &summary)?;
    println!(
        "trained {} ({} parameters) for {} iterations on {} samples; train loss {:.6e}; model written to {}",
        model_name,
        model.param_count(),
        report.losses.len(),
        train_set.len(),
        train_loss,
        common.out.join("model.nbrdf").display()
    );
    Ok(())
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields, default)]
struct EvalFile {
    data: Option<PathBuf>,
    checkpoint: Option<PathBuf>,
    split: Option<String>,
    seed: Option<u64>,
}

fn brdf_source(prov: &mut Provenance, ds: &Dataset, scene: &Scene, flag: Option<PathBuf>, config: Option<PathBuf>) -> CliResult<Box<dyn SpatialBrdf>> {
    match prov.resolve_opt("checkpoint", flag, config) {
        Some(p) => {
            let m = load_model(&p)?;
            check_model_fits(&m, scene)?;
            Ok(Box::new(m))
        }
        None => Ok(Box::new(ds.spec.material.clone())),
    }
}

pub fn eval(common: &Common, data: Option<PathBuf>, ckpt: Option<PathBuf>, split: Option<String>) -> CliResult<()> {
    let file: EvalFile = load_config(common.config.as_deref())?;
    let mut prov = Provenance::new("eval");
    let (ds, scene) = open_dataset(&mut prov, data, file.data)?;
    let seed = prov.resolve("seed", common.seed, file.seed, 0);
    let brdf = brdf_source(&mut prov, &ds, &scene, ckpt, file.checkpoint)?;
    let split = prov.resolve("split", split, file.split, "test".into());
    let records = match split.as_str() {
        "train" => ds.train_records()?,
        "test" => ds.test_records()?,
        other => return Err(usage(format!("unknown split '{other}'"))),
    };
    let cam = &ds.manifest.cameras[0];
    let s = evaluate(brdf.as_ref(), &scene, &records, cam.width, cam.height, ds.spec.white_level)?;
    let n_img = s.images.len();
    let metrics = vec![
        entry("psnr", s.psnr, n_img, Some(seed), json!({ "images": s.images })),
        entry("dssim", s.dssim.unwrap_or(f64::NAN), n_img, Some(seed), json!(null)),
        entry(
            "rmse_cbrt",
            s.rmse_cbrt.value,
            s.rmse_cbrt.used,
            Some(seed),
            json!({
                "excluded_grazing": s.rmse_cbrt.excluded_grazing,
                "excluded_saturated": s.rmse_cbrt.excluded_saturated,
            }),
        ),
    ];
    std::fs::create_dir_all(&common.out)?;
    make_report(prov.to_value(), metrics).save(&common.out.join("report.json"))?;
    println!(
        "{split} split, {n_img} images: PSNR {:.2} dB, DSSIM {}, RMSE(cbrt) {:.5} over {} records",
        s.psnr,
        s.dssim.map(|d| format!("{d:.5}")).unwrap_or_else(|| "n/a".into()),
        s.rmse_cbrt.value,
        s.rmse_cbrt.used
    );
    Ok(())
}

pub struct PhysicsArgs {
    pub model: Option<String>,
    pub checkpoint: Option<PathBuf>,
    pub data: Option<PathBuf>,
    pub mesh: Option<PathBuf>,
    pub pairs: Option<usize>,
    pub mc_samples: Option<usize>,
    pub parameterizations: Option<usize>,
    pub dump_energy: bool,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields, default)]
struct PhysicsFile {
    model: Option<String>,
    checkpoint: Option<PathBuf>,
    data: Option<PathBuf>,
    mesh: Option<PathBuf>,
    pairs: Option<usize>,
    mc_samples: Option<usize>,
    parameterizations: Option<usize>,
    seed: Option<u64>,
}

fn random_analytic(name: &str, rng: &mut ChaCha8Rng) -> CliResult<Material> {
    Ok(match name {
        "lambertian" => Material::Lambertian {
            albedo: [0, 1, 2].map(|_| rng.gen_range(0.0..1.0)),
        },
        other => match parse_architecture(other)? {
            Architecture::ParamHead(kind) => random_material(kind, rng),
            _ => return Err(usage(format!("'{other}' is not an analytic model; pass a trained model with --checkpoint"))),
        },
    })
}

pub fn validate_physics(common: &Common, a: PhysicsArgs) -> CliResult<()> {
    let file: PhysicsFile = load_config(common.config.as_deref())?;
    let mut prov = Provenance::new("validate-physics");
    let seed = prov.resolve("seed", common.seed, file.seed, 0);
    let pairs = prov.resolve("pairs", a.pairs, file.pairs, 1000);
    let mc = prov.resolve("mc_samples", a.mc_samples, file.mc_samples, 4000);
    let model = prov.resolve_opt("model", a.model, file.model);
    let ckpt = prov.resolve_opt("checkpoint", a.checkpoint, file.checkpoint);
    let data = prov.resolve_opt("data", a.data, file.data);
    let mesh = prov.resolve_opt("mesh", a.mesh, file.mesh);
    if pairs == 0 || mc == 0 {
        return Err(usage("--pairs and --mc-samples must be >= 1"));
    }

    let scene_of = |data: &Option<PathBuf>| -> CliResult<Scene> {
        if let Some(d) = data {
            return Ok(Dataset::open(d)?.scene()?);
        }
        let m = match &mesh {
            Some(p) => TriangleMesh::load(p)?,
            None => TriangleMesh::icosphere(3, 1.0),
        };
        Ok(Scene::new(
            m,
            &EncodingSpec::Positional {
                encoding: EncodingConfig::default(),
            },
            None,
        )?)
    };

    let mut subjects: Vec<(serde_json::Value, Box<dyn SpatialBrdf>)> = Vec::new();
    let scene;
    match (&model, &ckpt) {
        (Some(_), Some(_)) => return Err(usage("pass either --model or --checkpoint, not both")),
        (None, None) => return Err(usage("validate-physics requires --model <rp|ts|disney|lambertian> or --checkpoint <file>")),
        (None, Some(path)) => {
            if data.is_none() {
                return Err(usage("--checkpoint needs --data for the geometry it was trained on"));
            }
            scene = scene_of(&data)?;
            let m = load_model(path)?;
            check_model_fits(&m, &scene)?;
            subjects.push((json!({ "checkpoint": path }), Box::new(m)));
        }
        (Some(name), None) => {
            scene = scene_of(&data)?;
            let count = prov.resolve("parameterizations", a.parameterizations, file.parameterizations, 1);
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            for _ in 0..count {
                let mat = random_analytic(name, &mut rng)?;
                subjects.push((serde_json::to_value(&mat)?, Box::new(mat)));
            }
        }
    }

    let mut over = Vec::new();
    let mut violations = 0;
    let mut max_estimate = f64::NEG_INFINITY;
    let mut recip: f64 = 0.0;
    let mut csv = String::from("subject,pair,estimate,sigma\n");
    for (k, (_, brdf)) in subjects.iter().enumerate() {
        let audit_seed = seed.wrapping_add(k as u64);
        let r = energy_audit(brdf.as_ref(), &scene, pairs, mc, audit_seed)?;
        violations += r.violations;
        for (i, e) in r.estimates.iter().enumerate() {
            max_estimate = max_estimate.max(e.estimate);
            if e.estimate > 1.0 {
                over.push(e.estimate);
            }
            if a.dump_energy {
                csv.push_str(&format!("{k},{i},{:e},{:e}\n", e.estimate, e.sigma));
            }
        }
        recip = recip.max(reciprocity_rmse(brdf.as_ref(), &scene, pairs, audit_seed)?);
    }
    let total = pairs * subjects.len();
    over.sort_by(f64::total_cmp);
    let median = if over.is_empty() {
        f64::NAN
    } else if over.len() % 2 == 1 {
        over[over.len() / 2]
    } else {
        0.5 * (over[over.len() / 2 - 1] + over[over.len() / 2])
    };
    let fraction = over.len() as f64 / total as f64;
    let subjects_json: Vec<_> = subjects.iter().map(|s| s.0.clone()).collect();
    let metrics = vec![
        entry("energy_fraction_over_one", fraction, total, Some(seed), json!({ "mc_samples": mc, "subjects": subjects_json })),
        entry("energy_median_over_one", median, over.len(), Some(seed), json!(null)),
        entry("energy_violations_3sigma", violations as f64, total, Some(seed), json!({ "max_estimate": max_estimate })),
        entry("reciprocity_rmse", recip, pairs, Some(seed), json!({ "aggregate": "max over subjects", "sampling": "area-uniform points, cosine-weighted directions" })),
    ];
    std::fs::create_dir_all(&common.out)?;
    make_report(prov.to_value(), metrics).save(&common.out.join("report.json"))?;
    if a.dump_energy {
        std::fs::write(common.out.join("energy.csv"), csv)?;
    }
    println!(
        "{} subject(s), {} pairs x {} samples: {:.3}% above 1, {} beyond 1+3 sigma, max estimate {:.4}; reciprocity RMSE {:.3e}",
        subjects.len(),
        pairs,
        mc,
        100.0 * fraction,
        violations,
        max_estimate,
        recip
    );
    Ok(())
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields, default)]
struct RenderFile {
    data: Option<PathBuf>,
    checkpoint: Option<PathBuf>,
    view: Option<usize>,
    light: Option<usize>,
    seed: Option<u64>,
}

pub fn render(common: &Common, data: Option<PathBuf>, ckpt: Option<PathBuf>, view: Option<usize>, light: Option<usize>) -> CliResult<()> {
    let file: RenderFile = load_config(common.config.as_deref())?;
    let mut prov = Provenance::new("render");
    let (ds, scene) = open_dataset(&mut prov, data, file.data)?;
    prov.resolve("seed", common.seed, file.seed, 0);
    let brdf = brdf_source(&mut prov, &ds, &scene, ckpt, file.checkpoint)?;
    let view = prov.resolve_opt("view", view, file.view);
    let light = prov.resolve_opt("light", light, file.light);
    let cams = &ds.manifest.cameras;
    let dirs = &ds.manifest.light_directions;
    let pairs: Vec<PairId> = match (view, light) {
        (Some(v), Some(l)) => vec![(v, l)],
        _ => ds
            .manifest
            .split
            .test
            .iter()
            .copied()
            .filter(|p| view.map_or(true, |v| p.0 == v) && light.map_or(true, |l| p.1 == l))
            .collect(),
    };
    if pairs.is_empty() {
        return Err(usage("no (view, light) pair selected"));
    }
    for &(v, l) in &pairs {
        if v >= cams.len() || l >= dirs.len() {
            return Err(usage(format!("pair ({v}, {l}) out of range: {} views, {} lights", cams.len(), dirs.len())));
        }
    }
    std::fs::create_dir_all(&common.out)?;
    for &(v, l) in &pairs {
        let light = ds.spec.light(cams, dirs, v, l)?;
        let img = render_view(&scene, &cams[v], &light, brdf.as_ref())?.image;
        let stem = format!("v{v:03}_l{l:03}");
        save_pfm(&common.out.join(format!("{stem}.pfm")), &img)?;
        save_png_preview(&common.out.join(format!("{stem}.png")), &img)?;
    }
    write_json(&common.out.join("provenance.json"), &prov.to_value())?;
    println!("rendered {} image(s) into {}", pairs.len(), common.out.display());
    Ok(())
}

pub fn report(common: &Common, inputs: &[PathBuf]) -> CliResult<()> {
    if inputs.is_empty() {
        return Err(usage("report needs at least one input report file"));
    }
    let mut prov = Provenance::new("report");
    prov.record("inputs", &inputs, Source::Flag);
    let mut metrics = Vec::new();
    let mut table = String::from("| source | metric | value | samples | seed |\n|---|---|---|---|---|\n");
    for path in inputs {
        let r = Report::load(path)?;
        let source = path.display().to_string();
        for m in r.metrics {
            table.push_str(&format!(
                "| {} | {} | {} | {} | {} |\n",
                source,
                m.name,
                fmt_value(m.value),
                m.samples,
                m.seed.map(|s| s.to_string()).unwrap_or_default()
            ));
            metrics.push(MetricEntry {
                details: json!({ "source": source, "command": r.provenance.get("command") }),
                ..m
            });
        }
    }
    std::fs::create_dir_all(&common.out)?;
    make_report(prov.to_value(), metrics).save(&common.out.join("summary.json"))?;
    std::fs::File::create(common.out.join("summary.md"))?.write_all(table.as_bytes())?;
    print!("{table}");
    Ok(())
}

fn fmt_value(v: f64) -> String {
    if v.is_finite() && v != 0.0 && (v.abs() < 1e-3 || v.abs() >= 1e5) {
        format!("{v:.4e}")
    } else if v.is_finite() {
        format!("{v:.6}")
    } else {
        format!("{v}")
    }
}
