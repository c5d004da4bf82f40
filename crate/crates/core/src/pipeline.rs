//! Command implementations behind the CLI. Every command reads and
//! writes artifacts under one output directory:
//!
//! ```text
//! data/corpus/        training corpus (utterance documents)
//! data/reference/     reference speaker utterances
//! data/landmarks/     observed 2D landmarks of the reference video
//! data/speaker.json   reference speaker identity
//! data/face_model.ckpt
//! anim/               g_/d_{mouth,upper,head}.ckpt, curves_{role}.csv
//! face/fit.json       fitted identity, per-frame expressions and head
//! style/              style.ckpt, curves.csv
//! render/             g_/d_render.ckpt, curves.csv, samples/
//! frames/ params/ landmarks/ report.json   output of `generate`
//! eval/report.json, gradcheck/report.json
//! ```

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::anim::{
    lsgan, reconstruction_loss, train_generator, write_loss_csv, AnimArch, AnimBundle, Conditioning, GanSide, Role,
    TrainOptions,
};
use crate::config::Config;
use crate::dataset::{
    parse_utterance, substream, synth_corpus, Corpus, Utterance, Vocab, HEAD_DIM, MOUTH_DIM, N_PHONEMES, N_WORDS,
    UPPER_DIM,
};
use crate::error::{Error, Result};
use crate::face3d::{
    drive_track, fit, initial_guess, mean_reprojection_error, write_png, FaceModel, FitParams,
    FitProblem, Intrinsics, EXPR_DIM, REST_TRANSLATION, SHAPE_DIM,
};
use crate::metrics::{lmd_3d, mse_params, ssim_image, ssim_param_metric};
use crate::nn::{grad_check, grad_check_where, GradCheckConfig, Tensor};
use crate::render::{
    build_volume, chw_to_hwc, disc_loss, landmark_frames, loss_video, speaker_samples, stamp_watermark,
    train_renderer, write_render_csv, FeaturePyramid, LossWeights, RenderArch, RenderModel, RenderSample,
};
use crate::style::{apply_style, build_pairs, train_style, FittedUtterance, StyleMap};

pub const ROLES: [Role; 3] = [Role::Mouth, Role::Upper, Role::Head];

/// Artifact locations under the output directory.
#[derive(Clone, Debug)]
pub struct Layout {
    pub root: PathBuf,
}

impl Layout {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        Self { root: root.into() }
    }
    pub fn corpus(&self) -> PathBuf {
        self.root.join("data/corpus")
    }
    pub fn reference(&self) -> PathBuf {
        self.root.join("data/reference")
    }
    pub fn landmarks_dir(&self) -> PathBuf {
        self.root.join("data/landmarks")
    }
    pub fn speaker(&self) -> PathBuf {
        self.root.join("data/speaker.json")
    }
    pub fn face_model(&self) -> PathBuf {
        self.root.join("data/face_model.ckpt")
    }
    pub fn anim(&self) -> PathBuf {
        self.root.join("anim")
    }
    pub fn fit(&self) -> PathBuf {
        self.root.join("face/fit.json")
    }
    pub fn style(&self) -> PathBuf {
        self.root.join("style/style.ckpt")
    }
    pub fn render(&self) -> PathBuf {
        self.root.join("render")
    }
}

fn mkdir(p: &Path) -> Result<()> {
    std::fs::create_dir_all(p).map_err(|e| Error::io(p, e))
}

fn write_json(path: &Path, v: &impl Serialize) -> Result<()> {
    if let Some(d) = path.parent() {
        mkdir(d)?;
    }
    let mut bytes = serde_json::to_vec_pretty(v).expect("json serializes");
    bytes.push(b'\n');
    std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    if !path.exists() {
        return Err(Error::MissingArtifact(path.to_path_buf()));
    }
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_slice(&bytes).map_err(|e| Error::Malformed(format!("{}: {e}", path.display())))
}

fn require(path: &Path) -> Result<()> {
    if path.exists() {
        Ok(())
    } else {
        Err(Error::MissingArtifact(path.to_path_buf()))
    }
}

fn rows(t: &Tensor) -> Vec<Vec<f64>> {
    t.rows().map(|r| r.to_vec()).collect()
}

fn from_rows(r: &[Vec<f64>], d: usize) -> Result<Tensor> {
    if r.iter().any(|row| row.len() != d) {
        return Err(Error::Shape(format!("rows of width {d} expected")));
    }
    Tensor::new(vec![r.len(), d], r.concat())
}

fn intrinsics(cfg: &Config) -> Intrinsics {
    Intrinsics::for_image(cfg.render_width, cfg.render_height)
}

/// `n` indices spread evenly over `0..len`.
fn spread(len: usize, n: usize) -> Vec<usize> {
    if n >= len {
        return (0..len).collect();
    }
    (0..n).map(|i| i * len / n).collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Speaker {
    pub identity: Vec<f64>,
    pub mouth_scale: f64,
}

// ---------------------------------------------------------------- synth-data

/// Synthesizes the training corpus, the reference speaker's utterances
/// and their observed landmarks, and the face model.
pub fn synth_data(cfg: &Config, seed: u64, out: &Layout) -> Result<Value> {
    let corpus = synth_corpus(seed, cfg.n_utterances, cfg.fps)?;
    corpus.save(&out.corpus())?;

    let model = FaceModel::procedural(cfg.face_model_seed);
    model.save(&out.face_model())?;

    let mut rng = substream(seed, 70);
    let unit = Normal::new(0.0, 1.0).expect("valid normal");
    let speaker = Speaker {
        identity: (0..SHAPE_DIM).map(|_| 0.5 * unit.sample(&mut rng)).collect(),
        mouth_scale: cfg.speaker_mouth_scale,
    };
    write_json(&out.speaker(), &speaker)?;

    let mut reference = synth_corpus(rng.random(), cfg.n_reference, cfg.fps)?;
    for (i, (name, u)) in reference.utterances.iter_mut().enumerate() {
        *name = format!("ref_{i:03}");
        u.mouth = u.mouth.map(|v| (speaker.mouth_scale * v).clamp(0.0, 1.0));
    }
    reference.split = vec![crate::dataset::Split::Train; reference.utterances.len()];
    reference.save(&out.reference())?;

    let k = intrinsics(cfg);
    let mut frames = 0;
    for (name, u) in &reference.utterances {
        let track = drive_track(&model, &speaker.identity, &u.head, &u.upper, &u.mouth, &k, REST_TRANSLATION)?;
        frames += track.len();
        write_json(&out.landmarks_dir().join(format!("{name}.json")), &track)?;
    }
    Ok(json!({
        "utterances": corpus.utterances.len(),
        "train": corpus.train().count(),
        "test": corpus.test().count(),
        "reference_utterances": reference.utterances.len(),
        "reference_frames": frames,
    }))
}

fn load_observed(out: &Layout, name: &str) -> Result<Vec<Vec<[f64; 2]>>> {
    read_json(&out.landmarks_dir().join(format!("{name}.json")))
}

// ---------------------------------------------------------------- train-anim

pub fn train_anim(cfg: &Config, seed: u64, out: &Layout, role: Role) -> Result<Value> {
    let corpus = Corpus::load(&out.corpus())?;
    let train: Vec<Utterance> = corpus.train().cloned().collect();
    let mut bundle = AnimBundle::new(role, cfg.anim_arch(), seed)?;
    let opts = TrainOptions {
        schedule: cfg.schedule(role),
        lambda: cfg.lambda(role),
        seed,
        augment_words: cfg.augment_words && role != Role::Mouth,
        update_generator: true,
        update_discriminator: true,
    };
    let curve = train_generator(&mut bundle, &train, &opts)?;
    bundle.save(&out.anim())?;
    write_loss_csv(&out.anim().join(format!("curves_{}.csv", role.name())), &curve)?;
    Ok(json!({
        "role": role.name(),
        "epochs": curve.len(),
        "final": curve.last(),
    }))
}

// ---------------------------------------------------------------- fit-face

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FittedTrack {
    pub expressions: Vec<Vec<f64>>,
    pub head: Vec<Vec<f64>>,
    pub reprojection_px: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FaceFit {
    pub shape: Vec<f64>,
    pub keyframe_iterations: usize,
    pub keyframe_termination: String,
    pub keyframe_reprojection_px: f64,
    pub utterances: BTreeMap<String, FittedTrack>,
}

impl FaceFit {
    /// Landmarks driven by the fitted parameters of one utterance.
    pub fn driving_track(&self, model: &FaceModel, name: &str, k: &Intrinsics) -> Result<Vec<Vec<[f64; 2]>>> {
        let t = self
            .utterances
            .get(name)
            .ok_or_else(|| Error::InvalidArgument(format!("no fit for utterance {name}")))?;
        let e = from_rows(&t.expressions, EXPR_DIM)?;
        let upper: Vec<Vec<f64>> = t.expressions.iter().map(|r| r[..UPPER_DIM].to_vec()).collect();
        let mouth: Vec<Vec<f64>> = t.expressions.iter().map(|r| r[UPPER_DIM..].to_vec()).collect();
        drive_track(
            model,
            &self.shape,
            &from_rows(&t.head, HEAD_DIM)?,
            &from_rows(&upper, UPPER_DIM)?,
            &from_rows(&mouth, MOUTH_DIM)?,
            k,
            REST_TRANSLATION,
        )
        .and_then(|r| if e.dim(0) == r.len() { Ok(r) } else { Err(Error::LengthMismatch(name.into())) })
    }
}

/// Identity from keyframes spread over the whole reference video, then
/// per-frame expression and pose with the identity held fixed.
pub fn fit_face(cfg: &Config, out: &Layout) -> Result<Value> {
    let model = FaceModel::load(&out.face_model())?;
    let reference = Corpus::load(&out.reference())?;
    let k = intrinsics(cfg);
    let mut observed = Vec::new();
    for (name, _) in &reference.utterances {
        observed.push((name.clone(), load_observed(out, name)?));
    }
    let all: Vec<&Vec<[f64; 2]>> = observed.iter().flat_map(|(_, t)| t.iter()).collect();
    if all.is_empty() {
        return Err(Error::InvalidArgument("reference video has no frames".into()));
    }
    let keyframes: Vec<Vec<[f64; 2]>> = spread(all.len(), cfg.fit_keyframes).into_iter().map(|i| all[i].clone()).collect();
    let problem = FitProblem {
        lambda_e: cfg.fit_lambda_e,
        lambda_s: cfg.fit_lambda_s,
        ..FitProblem::new(keyframes, k)
    };
    let report = fit(&model, &problem, &initial_guess(&model, &problem)?, &cfg.fit_config(false))?;
    let shape = report.params.shape.clone();
    let key_err = mean_reprojection_error(&model, &problem, &report.params)?;

    let mut utterances = BTreeMap::new();
    for (name, track) in &observed {
        let mut prev: Option<FitParams> = None;
        let (mut expressions, mut head, mut err) = (Vec::new(), Vec::new(), 0.0);
        for frame in track {
            let p = FitProblem {
                lambda_e: cfg.fit_lambda_e,
                lambda_s: cfg.fit_lambda_s,
                ..FitProblem::new(vec![frame.clone()], k)
            };
            let init = match prev.take() {
                Some(x) => x,
                None => FitParams {
                    shape: shape.clone(),
                    ..initial_guess(&model, &p)?
                },
            };
            let r = fit(&model, &p, &init, &cfg.fit_config(true))?;
            err += mean_reprojection_error(&model, &p, &r.params)?;
            expressions.push(r.params.expressions[0].clone());
            head.push(r.params.poses[0].to_head(REST_TRANSLATION).to_vec());
            prev = Some(r.params);
        }
        let n = track.len().max(1) as f64;
        utterances.insert(
            name.clone(),
            FittedTrack {
                expressions,
                head,
                reprojection_px: err / n,
            },
        );
    }
    let fitted = FaceFit {
        shape,
        keyframe_iterations: report.iterations,
        keyframe_termination: format!("{:?}", report.termination),
        keyframe_reprojection_px: key_err,
        utterances,
    };
    write_json(&out.fit(), &fitted)?;
    let worst = fitted.utterances.values().map(|t| t.reprojection_px).fold(0.0, f64::max);
    Ok(json!({
        "keyframes": problem.keyframes.len(),
        "iterations": fitted.keyframe_iterations,
        "termination": fitted.keyframe_termination,
        "keyframe_reprojection_px": key_err,
        "worst_frame_reprojection_px": worst,
    }))
}

// ---------------------------------------------------------------- train-style

pub fn train_style_cmd(cfg: &Config, seed: u64, out: &Layout) -> Result<Value> {
    let mouth = AnimBundle::load(&out.anim(), Role::Mouth)?;
    let fitted: FaceFit = read_json(&out.fit())?;
    let reference = Corpus::load(&out.reference())?;
    let mut refs = Vec::new();
    for (name, u) in &reference.utterances {
        let t = fitted
            .utterances
            .get(name)
            .ok_or_else(|| Error::InvalidArgument(format!("no fit for utterance {name}")))?;
        refs.push(FittedUtterance {
            cond: Conditioning::from_utterance(u),
            expressions: Some(from_rows(&t.expressions, EXPR_DIM)?),
        });
    }
    let pairs = build_pairs(&refs, &mouth)?;
    let (map, curve) = train_style(&pairs, &cfg.style_config(seed))?;
    map.save(&out.style())?;
    let mut csv = String::from("epoch,loss\n");
    for (e, l) in curve.iter().enumerate() {
        csv.push_str(&format!("{e},{l}\n"));
    }
    let p = out.root.join("style/curves.csv");
    std::fs::write(&p, csv).map_err(|e| Error::io(p, e))?;
    Ok(json!({ "pairs": pairs.len(), "epochs": curve.len(), "final_loss": curve.last() }))
}

// ---------------------------------------------------------------- train-render

/// Renderer samples for `n` frames spread over the reference video.
pub fn reference_samples(cfg: &Config, out: &Layout, n: usize) -> Result<Vec<RenderSample>> {
    let model = FaceModel::load(&out.face_model())?;
    let fitted: FaceFit = read_json(&out.fit())?;
    let reference = Corpus::load(&out.reference())?;
    let k = intrinsics(cfg);
    let mut per_utt = Vec::new();
    for (name, _) in &reference.utterances {
        let driving = fitted.driving_track(&model, name, &k)?;
        let observed = load_observed(out, name)?;
        per_utt.push((driving, observed));
    }
    let index: Vec<(usize, usize)> = per_utt
        .iter()
        .enumerate()
        .flat_map(|(u, (d, _))| (0..d.len()).map(move |t| (u, t)))
        .collect();
    let picked = spread(index.len(), n);
    let mut samples = Vec::with_capacity(picked.len());
    for (u, (driving, observed)) in per_utt.iter().enumerate() {
        let frames: Vec<usize> = picked.iter().map(|&i| index[i]).filter(|p| p.0 == u).map(|p| p.1).collect();
        if !frames.is_empty() {
            samples.extend(speaker_samples(driving, observed, cfg.render_height, cfg.render_width, &frames)?);
        }
    }
    Ok(samples)
}

pub fn train_render(cfg: &Config, seed: u64, out: &Layout) -> Result<Value> {
    let data = reference_samples(cfg, out, cfg.render_frames)?;
    let mut model = RenderModel::new(cfg.render_arch(), seed)?;
    let samples_dir = out.render().join("samples");
    mkdir(&samples_dir)?;
    let every = cfg.render_sample_every;
    let probe = data[0].volume.clone();
    let (h, w) = (cfg.render_height, cfg.render_width);
    let curve = train_renderer(
        &mut model,
        &data,
        &cfg.render_schedule(),
        &cfg.loss_weights(),
        seed,
        |e, m| {
            if every > 0 && (e.epoch + 1) % every == 0 {
                let img = m.render_image(&probe)?;
                write_png(&samples_dir.join(format!("epoch_{:04}.png", e.epoch + 1)), &chw_to_hwc(&img), w, h)?;
            }
            Ok(())
        },
    )?;
    model.save(&out.render())?;
    write_render_csv(&out.render().join("curves.csv"), &curve)?;
    Ok(json!({ "frames": data.len(), "epochs": curve.len(), "final": curve.last() }))
}

// ---------------------------------------------------------------- generate

/// Loaded generation stack.
pub struct Generator {
    pub bundles: Vec<AnimBundle>,
    pub style: StyleMap,
    pub render: RenderModel,
    pub model: FaceModel,
    pub shape: Vec<f64>,
}

impl Generator {
    /// Loads every stage, failing before any output is produced.
    pub fn load(out: &Layout) -> Result<Self> {
        for role in ROLES {
            require(&AnimBundle::generator_path(&out.anim(), role))?;
        }
        require(&out.style())?;
        require(&RenderModel::generator_path(&out.render()))?;
        require(&out.fit())?;
        require(&out.face_model())?;
        let bundles = ROLES
            .iter()
            .map(|&r| AnimBundle::load(&out.anim(), r))
            .collect::<Result<Vec<_>>>()?;
        let fitted: FaceFit = read_json(&out.fit())?;
        Ok(Self {
            bundles,
            style: StyleMap::load(&out.style())?,
            render: RenderModel::load(&out.render())?,
            model: FaceModel::load(&out.face_model())?,
            shape: fitted.shape,
        })
    }

    /// Generic mouth, styled mouth, upper face and head tracks.
    pub fn animate(&self, cond: &Conditioning) -> Result<[Tensor; 4]> {
        let generic = self.bundles[0].generate(cond)?;
        let mouth = apply_style(&self.style, &generic)?;
        let upper = self.bundles[1].generate(cond)?;
        let head = self.bundles[2].generate(cond)?;
        Ok([generic, mouth, upper, head])
    }
}

fn load_input(cfg: &Config, out: &Layout) -> Result<(String, Utterance)> {
    match &cfg.generate_input {
        Some(p) => {
            let path = Path::new(p);
            let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
            let name = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
            Ok((name, parse_utterance(&bytes, &Vocab::standard())?))
        }
        None => {
            let corpus = Corpus::load(&out.corpus())?;
            corpus
                .utterances
                .iter()
                .zip(&corpus.split)
                .find(|(_, s)| **s == crate::dataset::Split::Test)
                .or_else(|| corpus.utterances.iter().zip(&corpus.split).next())
                .map(|((n, u), _)| (n.clone(), u.clone()))
                .ok_or_else(|| Error::InvalidArgument("corpus is empty".into()))
        }
    }
}

/// Text to frames: animation, style map, face model, landmark images,
/// volumes and renderer.
pub fn generate(cfg: &Config, out: &Layout, emotion: usize, watermark: bool) -> Result<Value> {
    let stack = Generator::load(out)?;
    let (name, u) = load_input(cfg, out)?;
    if emotion >= crate::dataset::N_EMOTIONS {
        return Err(Error::IndexOutOfRange {
            what: "emotion",
            index: emotion,
            size: crate::dataset::N_EMOTIONS,
        });
    }
    let cond = Conditioning {
        ph: u.ph.clone(),
        w: u.w.clone(),
        emotion,
    };
    let [generic, mouth, upper, head] = stack.animate(&cond)?;
    let k = intrinsics(cfg);
    let track = drive_track(&stack.model, &stack.shape, &head, &upper, &mouth, &k, REST_TRANSLATION)?;
    let (h, w) = (cfg.render_height, cfg.render_width);
    let lm = landmark_frames(&track, h, w)?;

    for d in ["frames", "params", "landmarks"] {
        let p = out.root.join(d);
        if p.exists() {
            std::fs::remove_dir_all(&p).map_err(|e| Error::io(&p, e))?;
        }
        mkdir(&p)?;
    }
    for (t, points) in track.iter().enumerate() {
        let mut img = stack.render.render_image(&build_volume(&lm, t)?)?;
        if watermark {
            stamp_watermark(&mut img)?;
        }
        write_png(&out.root.join(format!("frames/frame_{t:04}.png")), &chw_to_hwc(&img), w, h)?;
        write_json(&out.root.join(format!("landmarks/frame_{t:04}.json")), points)?;
    }
    for (file, t) in [("mouth", &mouth), ("mouth_generic", &generic), ("upper", &upper), ("head", &head)] {
        write_json(&out.root.join(format!("params/{file}.json")), &rows(t))?;
    }
    let report = json!({
        "utterance": name,
        "frames": track.len(),
        "fps": u.fps,
        "emotion": crate::dataset::EMOTIONS[emotion],
        "watermark": watermark,
    });
    write_json(&out.root.join("report.json"), &report)?;
    Ok(report)
}

// ---------------------------------------------------------------- eval

pub fn eval(cfg: &Config, out: &Layout) -> Result<Value> {
    let stack = Generator::load(out)?;
    let corpus = Corpus::load(&out.corpus())?;
    let mut per = serde_json::Map::new();
    let mut sums = [0.0; 4];
    let mut n = 0.0_f64;
    for ((name, u), s) in corpus.utterances.iter().zip(&corpus.split) {
        if *s != crate::dataset::Split::Test {
            continue;
        }
        let cond = Conditioning::from_utterance(u);
        let generic = stack.bundles[0].generate(&cond)?;
        let upper = stack.bundles[1].generate(&cond)?;
        let head = stack.bundles[2].generate(&cond)?;
        let m = [
            mse_params(&u.mouth, &generic)?,
            lmd_3d(&stack.model, &stack.shape, &u.mouth, &generic, &u.upper)?,
            ssim_param_metric(&u.upper, &upper)?,
            mse_params(&u.head, &head)?,
        ];
        for (a, b) in sums.iter_mut().zip(m) {
            *a += b;
        }
        n += 1.0;
        per.insert(
            name.clone(),
            json!({ "mse_mouth": m[0], "lmd_3d": m[1], "ssim_upper": m[2], "mse_head": m[3] }),
        );
    }
    let frames = reference_samples(cfg, out, cfg.render_frames)?;
    let mut ssim = 0.0;
    for f in &frames {
        ssim += ssim_image(&f.target, &stack.render.render_image(&f.volume)?)?;
    }
    if n == 0.0 {
        return Err(Error::InvalidArgument("corpus has no test utterances".into()));
    }
    let report = json!({
        "utterances": per,
        "aggregate": {
            "mse_mouth": sums[0] / n,
            "lmd_3d": sums[1] / n,
            "ssim_upper": sums[2] / n,
            "mse_head": sums[3] / n,
        },
        "render_ssim": ssim / frames.len() as f64,
        "render_frames": frames.len(),
    });
    write_json(&out.root.join("eval/report.json"), &report)?;
    Ok(report)
}

// ---------------------------------------------------------------- gradcheck

fn small_anim_arch() -> AnimArch {
    AnimArch {
        embed_dim: 3,
        mouth_channels: 4,
        mouth_blocks: 1,
        encdec_channels: 3,
        disc_channels: 2,
    }
}

fn random_cond(seed: u64, t: usize) -> Conditioning {
    let mut rng = substream(seed, 90);
    Conditioning {
        ph: (0..t).map(|_| rng.random_range(0..N_PHONEMES)).collect(),
        w: (0..t).map(|_| rng.random_range(0..N_WORDS)).collect(),
        emotion: rng.random_range(0..crate::dataset::N_EMOTIONS),
    }
}

fn random_tensor(seed: u64, stream: u64, shape: &[usize], lo: f64, hi: f64) -> Tensor {
    let mut rng = substream(seed, stream);
    let n = shape.iter().product();
    Tensor::from_parts(shape.to_vec(), (0..n).map(|_| rng.random_range(lo..hi)).collect())
}

/// Maximum relative gradient error of every trained network under its
/// training objective, at small sizes.
pub fn gradcheck_suite(seed: u64) -> Result<Vec<(String, f64)>> {
    let cfg = GradCheckConfig {
        seed,
        max_params: 120,
        ..GradCheckConfig::default()
    };
    let mut out = Vec::new();
    let t = 16;
    let cond = random_cond(seed, t);
    for role in ROLES {
        let b = AnimBundle::new(role, small_anim_arch(), seed)?;
        let target = random_tensor(seed, 91, &[t, role.output_dim()], 0.0, 1.0);
        let (gen, disc, dw) = (&b.generator, &b.discriminator, &b.d_weights);
        let e = small_anim_arch().embed_dim;
        let used = |name: &str, i: usize| match name {
            "emb.ph" => cond.ph.contains(&(i / e)),
            "emb.txt" => cond.w.contains(&(i / e)),
            "emb.emo" => i / e == cond.emotion,
            _ => true,
        };
        let r = grad_check_where(
            &b.g_weights,
            |w, g| {
                let fake = gen.forward(g, w, &cond)?;
                let df = disc.forward(g, dw, fake)?;
                let adv = lsgan(g, None, df, GanSide::Generator)?;
                let tg = g.constant(target.clone());
                let rec = reconstruction_loss(role, g, tg, fake)?;
                let rec = g.scale(rec, 3.0);
                Ok(g.add(adv, rec))
            },
            &cfg,
            used,
        )?;
        out.push((format!("generator_{}", role.name()), r.max_rel_error));
        let fake = b.generate(&cond)?;
        let r = grad_check(
            dw,
            |w, g| {
                let real = g.constant(target.clone());
                let f = g.constant(fake.clone());
                let dr = disc.forward(g, w, real)?;
                let df = disc.forward(g, w, f)?;
                lsgan(g, Some(dr), df, GanSide::Discriminator)
            },
            &cfg,
        )?;
        out.push((format!("discriminator_{}", role.name()), r.max_rel_error));
    }

    let map = StyleMap::init(seed);
    let x = random_tensor(seed, 92, &[8, MOUTH_DIM], 0.0, 1.0);
    let y = random_tensor(seed, 93, &[8, MOUTH_DIM], 0.0, 1.0);
    let r = grad_check(
        &map.weights,
        |w, g| {
            let m = StyleMap {
                net: map.net.clone(),
                weights: w.clone(),
            };
            crate::style::style_loss(g, &m, &x, &y)
        },
        &cfg,
    )?;
    out.push(("style_map".into(), r.max_rel_error));

    let arch = RenderArch {
        height: 16,
        width: 16,
        channels: 2,
        color_blocks: 1,
        disc_channels: 2,
    };
    let model = RenderModel::new(arch, seed)?;
    let pyramid = FeaturePyramid::seeded(seed, [3, 4, 4, 4]);
    let volume = random_tensor(seed, 94, &model.nets.volume_shape(), 0.0, 1.0);
    let target = random_tensor(seed, 95, &[3, 16, 16], -1.0, 1.0);
    let face_box = crate::render::PixelBox::new(3, 2, 13, 14);
    let weights = LossWeights::default();
    let r = grad_check(
        &model.g_weights,
        |w, g| {
            let v = g.constant(volume.clone());
            let o = model.nets.forward(g, w, v)?;
            let tg = g.constant(target.clone());
            Ok(loss_video(g, &pyramid, &model.discs, &model.d_weights, &o, tg, v, &face_box, &weights)?.total)
        },
        &cfg,
    )?;
    out.push(("renderer".into(), r.max_rel_error));
    let fake = model.render(&volume)?.image;
    let r = grad_check(
        &model.d_weights,
        |w, g| {
            let v = g.constant(volume.clone());
            let real = g.constant(target.clone());
            let f = g.constant(fake.clone());
            disc_loss(g, &model.discs, w, real, f, v)
        },
        &cfg,
    )?;
    out.push(("renderer_discriminators".into(), r.max_rel_error));
    Ok(out)
}

pub fn gradcheck(seed: u64, out: &Layout) -> Result<Value> {
    let results = gradcheck_suite(seed)?;
    let map: serde_json::Map<String, Value> = results.iter().map(|(k, v)| (k.clone(), json!(v))).collect();
    let worst = results.iter().map(|r| r.1).fold(0.0, f64::max);
    let report = json!({ "max_rel_error": map, "worst": worst, "pass": worst < 1e-4 });
    write_json(&out.root.join("gradcheck/report.json"), &report)?;
    Ok(report)
}
