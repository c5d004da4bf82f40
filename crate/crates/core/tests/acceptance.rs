//! Acceptance criteria. Prints one PASS/FAIL line per criterion and
//! exits non-zero if any fails.

mod common;

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::time::Instant;

use talkhead::anim::*;
use talkhead::dataset::{synth_corpus, Utterance, MOUTH_DIM};
use talkhead::face3d::*;
use talkhead::nn::{Graph, Tensor};
use talkhead::pipeline::gradcheck_suite;
use talkhead::render::*;
use talkhead::style::*;

use common::*;

type Outcome = (bool, String);

fn gradient_suite() -> Outcome {
    let t0 = Instant::now();
    let results = gradcheck_suite(0).unwrap();
    let secs = t0.elapsed().as_secs_f64();
    let (name, worst) = results.iter().cloned().fold((String::new(), 0.0), |a, b| if b.1 > a.1 { b } else { a });
    let ok = worst < 1e-4 && secs < 300.0 && results.len() == 9;
    (ok, format!("{} nets, worst {worst:.2e} ({name}), {secs:.1} s", results.len()))
}

fn loss_oracles() -> Outcome {
    let mut worst = [0.0f64; 6];
    let render = RenderModel::new(
        RenderArch {
            height: 16,
            width: 16,
            channels: 2,
            color_blocks: 1,
            disc_channels: 2,
        },
        0,
    )
    .unwrap();
    let lw = LossWeights::default();
    for seed in 0..100u64 {
        let s = seed * 10;
        let t = 2 + (seed % 30) as usize;
        let (m, h) = (random(t, 23, s), random(t, 23, s + 1));
        worst[0] = worst[0].max((l1_seq_value(&m, &h).unwrap() - naive_l1(&m, &h)).abs());
        worst[1] = worst[1].max((ssim_seq_value(&m, &h).unwrap() - naive_ssim_loss(&m, &h)).abs());
        let (r, f) = (random(1, t, s + 2), random(1, t, s + 3));
        for side in [GanSide::Generator, GanSide::Discriminator] {
            worst[2] = worst[2].max((lsgan_value(&r, &f, side).unwrap() - naive_lsgan(&r, &f, side)).abs());
        }

        let a = uniform(vec![3, 16, 16], -1.0, 1.0, s + 4);
        let b = uniform(vec![3, 16, 16], -1.0, 1.0, s + 5);
        let p = FeaturePyramid::seeded(seed, PYRAMID_CHANNELS);
        worst[3] = worst[3].max((perceptual_value(&p, &a, &b).unwrap() - naive_perceptual(&p, &a, &b)).abs());

        let mask = uniform(vec![1, 16, 16], 0.0, 1.0, s + 6);
        let fused = fuse_values(&a, &b, &mask).unwrap();
        let want = naive_fuse(&a, &b, &mask);
        for (x, y) in fused.data().iter().zip(want.data()) {
            worst[4] = worst[4].max((x - y).abs());
        }

        let target = uniform(vec![3, 16, 16], -1.0, 1.0, s + 7);
        let volume = uniform(vec![VOLUME_CHANNELS, 16, 16], 0.0, 1.0, s + 8);
        let fb = PixelBox::new((seed % 4) as usize, 2, 12, 15);
        let mut g = Graph::new();
        let out = RenderVars {
            image: g.constant(fused.clone()),
            face: g.constant(a.clone()),
            color: g.constant(b.clone()),
            mask: g.constant(mask.clone()),
        };
        let (tv, vv) = (g.constant(target.clone()), g.constant(volume.clone()));
        let l = loss_video(&mut g, &render.pyramid, &render.discs, &render.d_weights, &out, tv, vv, &fb, &lw).unwrap();
        let want = naive_loss_video(&render.pyramid, &render.d_weights, &fused, &a, &target, &volume, &fb, &lw);
        worst[5] = worst[5].max((g.value(l.total).item() - want[0]).abs());
    }
    let names = ["l1_seq", "ssim_seq", "lsgan", "perceptual", "fusion", "composition"];
    let detail: Vec<String> = names.iter().zip(worst).map(|(n, w)| format!("{n} {w:.1e}")).collect();
    (worst.iter().all(|&w| w < 1e-12), format!("100 instances each, max |err|: {}", detail.join(", ")))
}

fn lm_recovery() -> Outcome {
    let model = FaceModel::procedural(7);
    let k = Intrinsics::for_image(256, 256);
    let mut ok = true;
    let mut parts = Vec::new();
    for seed in 0..5 {
        let t0 = Instant::now();
        let (problem, _) = synthetic_problem(&model, seed, 30, k).unwrap();
        let init = initial_guess(&model, &problem).unwrap();
        let r = fit(&model, &problem, &init, &FitConfig::default()).unwrap();
        let err = mean_reprojection_error(&model, &problem, &r.params).unwrap();
        let secs = t0.elapsed().as_secs_f64();
        let monotone = r.history.windows(2).all(|w| w[1] <= w[0]);
        ok &= err < 1e-3 && monotone && secs < 120.0 && problem.keyframes[0].len() == 68;
        parts.push(format!("{err:.1e} px/{secs:.1} s{}", if monotone { "" } else { " non-monotone" }));
    }
    (ok, format!("N_k = 30: {}", parts.join(", ")))
}

fn mouth_overfit() -> Outcome {
    let corpus = synth_corpus(3, 4, 30).unwrap();
    let utts: Vec<Utterance> = corpus.utterances.iter().map(|(_, u)| u.clone()).collect();
    let arch = AnimArch {
        embed_dim: 128,
        mouth_channels: 128,
        mouth_blocks: 4,
        encdec_channels: 16,
        disc_channels: 16,
    };
    let l1 = |b: &AnimBundle| {
        utts.iter()
            .map(|u| l1_seq_value(&u.mouth, &b.generate(&Conditioning::from_utterance(u)).unwrap()).unwrap())
            .sum::<f64>()
            / utts.len() as f64
    };
    let mut b = AnimBundle::new(Role::Mouth, arch, 1).unwrap();
    let before = l1(&b);
    let mut opts = TrainOptions::for_role(Role::Mouth, 1);
    opts.schedule.epochs_fixed = 100;
    opts.schedule.epochs_decay = 100;
    let t0 = Instant::now();
    let curve = train_generator(&mut b, &utts, &opts).unwrap();
    let after = l1(&b);
    let ratio = after / before;
    (
        ratio < 0.05 && curve.len() <= 200,
        format!(
            "L1 {before:.3} -> {after:.3} ({:.2}% of initial) in {} epochs, {:.0} s",
            100.0 * ratio,
            curve.len(),
            t0.elapsed().as_secs_f64()
        ),
    )
}

fn renderer_overfit() -> (Outcome, Outcome) {
    let model = FaceModel::procedural(7);
    let k = Intrinsics::for_image(64, 64);
    let corpus = synth_corpus(3, 1, 30).unwrap();
    let u = &corpus.utterances[0].1;
    let track = drive_track(&model, &[0.0; SHAPE_DIM], &u.head, &u.upper, &u.mouth, &k, REST_TRANSLATION).unwrap();
    let frames: Vec<usize> = (0..8).map(|i| 4 + 3 * i).collect();
    let data = speaker_samples(&track, &track, 64, 64, &frames).unwrap();
    let mut m = RenderModel::new(RenderArch::default(), 0).unwrap();
    let sched = RenderSchedule {
        epochs: 300,
        ..Default::default()
    };
    let t0 = Instant::now();
    train_renderer(&mut m, &data, &sched, &LossWeights::default(), 0, |_, _| Ok(())).unwrap();
    let secs = t0.elapsed().as_secs_f64();
    let (mut l1, mut inside, mut n_in, mut outside, mut n_out) = (0.0, 0.0, 0.0, 0.0, 0.0);
    for (d, &f) in data.iter().zip(&frames) {
        let r = m.render(&d.volume).unwrap();
        l1 += mean_abs_diff(r.image.map(to_unit).data(), d.target.data()) / data.len() as f64;
        let boxes = SpeakerBoxes::from_landmarks(&track[f], 64, 64).unwrap();
        for y in 0..64 {
            for x in 0..64 {
                let v = r.mask.data()[y * 64 + x];
                if boxes.in_moving_region(x, y) {
                    inside += v;
                    n_in += 1.0;
                } else {
                    outside += v;
                    n_out += 1.0;
                }
            }
        }
    }
    let (mi, mo) = (inside / n_in, outside / n_out);
    (
        (l1 < 0.05, format!("8 frames at 64x64, pixel L1 {l1:.4} after 300 epochs, {secs:.0} s")),
        (mi - mo > 0.1, format!("mask mean inside mouth/eye boxes {mi:.3}, outside {mo:.3}, gap {:.3}", mi - mo)),
    )
}

fn style_recovery() -> Outcome {
    let c = synth_corpus(21, 20, 30).unwrap();
    let (mut train, mut held) = (Vec::new(), Vec::new());
    for (i, r) in c.utterances.iter().flat_map(|(_, u)| u.mouth.rows()).enumerate() {
        if i % 5 == 4 { held.extend_from_slice(r) } else { train.extend_from_slice(r) }
    }
    let train = Tensor::new(vec![train.len() / MOUTH_DIM, MOUTH_DIM], train).unwrap();
    let held = Tensor::new(vec![held.len() / MOUTH_DIM, MOUTH_DIM], held).unwrap();
    let mut ok = true;
    let mut parts = Vec::new();
    for scale in [1.0, 0.5] {
        let pairs = StylePairs::new(train.clone(), train.map(|v| scale * v), vec![0; train.dim(0)]).unwrap();
        let (map, _) = train_style(&pairs, &StyleTrainConfig::default()).unwrap();
        let out = apply_style(&map, &held).unwrap();
        let dev = out.data().iter().zip(held.data()).map(|(a, b)| (a - scale * b).abs()).fold(0.0, f64::max);
        ok &= dev < 0.02;
        parts.push(format!("scale {scale}: max deviation {dev:.4}"));
    }
    (ok, format!("{} held-out frames, {}", held.dim(0), parts.join(", ")))
}

const ALL_COMMANDS: [&[&str]; 10] = [
    &["synth-data"],
    &["train-anim", "mouth"],
    &["train-anim", "upper"],
    &["train-anim", "head"],
    &["fit-face"],
    &["train-style"],
    &["train-render"],
    &["generate", "--emotion", "anger", "--watermark"],
    &["eval"],
    &["gradcheck"],
];

fn run_all(dir: &Path, cfg: &Path) -> Vec<Vec<u8>> {
    ALL_COMMANDS
        .iter()
        .map(|st| {
            let mut args = st.to_vec();
            args.extend(["--config", cfg.to_str().unwrap(), "--seed", "3"]);
            let o = talkhead(dir, &args);
            assert!(o.status.success(), "{st:?}: {}", String::from_utf8_lossy(&o.stderr));
            o.stdout
        })
        .collect()
}

fn determinism() -> Outcome {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("config.toml");
    std::fs::write(&cfg, TINY_CONFIG).unwrap();
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    let (oa, ob) = (run_all(&a, &cfg), run_all(&b, &cfg));
    let (sa, sb) = (snapshot(&a), snapshot(&b));
    let differing: Vec<String> = sa
        .iter()
        .filter(|(k, v)| sb.get(*k) != Some(v))
        .map(|(k, _)| k.display().to_string())
        .collect();
    let ok = differing.is_empty() && sa.len() == sb.len() && oa == ob;
    (
        ok,
        format!(
            "{} commands, {} artifacts, {} differing{}",
            ALL_COMMANDS.len(),
            sa.len(),
            differing.len(),
            if oa == ob { "" } else { ", stdout differs" }
        ),
    )
}

fn shape_contract() -> Outcome {
    let tmp = tempfile::tempdir().unwrap();
    let t = 45;
    let input = tmp.path().join("utt.json");
    std::fs::write(&input, utterance_doc(t)).unwrap();
    let cfg = tmp.path().join("config.toml");
    std::fs::write(&cfg, format!("{TINY_CONFIG}generate_input = {:?}\n", input.to_str().unwrap())).unwrap();
    let out = tmp.path().join("out");
    run_stages(&out, &cfg, 6, &STAGES);
    let files = |d: &str| std::fs::read_dir(out.join(d)).unwrap().count();
    let rows = |f: &str| -> Vec<Vec<f64>> { serde_json::from_slice(&std::fs::read(out.join(f)).unwrap()).unwrap() };
    let dims: Vec<(usize, usize)> = ["params/mouth.json", "params/upper.json", "params/head.json"]
        .iter()
        .map(|f| {
            let r = rows(f);
            (r.len(), r.iter().map(Vec::len).max().unwrap_or(0))
        })
        .collect();
    let lm_ok = (0..t).all(|i| {
        let p: Vec<Vec<f64>> = rows(&format!("landmarks/frame_{i:04}.json"));
        p.len() == 68 && p.iter().all(|q| q.len() == 2)
    });
    let ok = files("frames") == t && files("landmarks") == t && dims == [(t, 28), (t, 23), (t, 6)] && lm_ok;
    (
        ok,
        format!(
            "T = {t}: {} frames, params {:?}, {} landmark files{}",
            files("frames"),
            dims,
            files("landmarks"),
            if lm_ok { " of 68x2" } else { " (bad shape)" }
        ),
    )
}

fn report(id: &str, f: impl FnOnce() -> Outcome) -> bool {
    let (ok, detail) = match catch_unwind(AssertUnwindSafe(f)) {
        Ok(o) => o,
        Err(e) => (
            false,
            format!(
                "panicked: {}",
                e.downcast_ref::<String>().cloned().or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string())).unwrap_or_default()
            ),
        ),
    };
    println!("{} {id}: {detail}", if ok { "PASS" } else { "FAIL" });
    ok
}

fn main() {
    let mut ok = true;
    ok &= report("1 gradient suite", gradient_suite);
    ok &= report("2 loss oracles", loss_oracles);
    ok &= report("3 LM fitting recovery", lm_recovery);
    ok &= report("4a mouth generator overfit", mouth_overfit);
    let overfit = catch_unwind(renderer_overfit).ok();
    let (b, c) = match overfit {
        Some((b, c)) => (b, c),
        None => ((false, "panicked".into()), (false, "panicked".into())),
    };
    ok &= report("4b renderer overfit", || b);
    ok &= report("4c attention mask localization", || c);
    ok &= report("5 style-map recovery", style_recovery);
    ok &= report("6 CLI determinism", determinism);
    ok &= report("7 pipeline shape contract", shape_contract);
    if !ok {
        std::process::exit(1);
    }
}
