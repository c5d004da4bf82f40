//! Brute-force oracles shared by the integration tests.
#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use talkhead::anim::{GanSide, SSIM_DELTA1, SSIM_DELTA2};
use talkhead::nn::{NetWeights, Tensor};
use talkhead::render::{FeaturePyramid, LossWeights, PixelBox, N_SCALES};

pub fn random(t: usize, d: usize, seed: u64) -> Tensor {
    uniform(vec![t, d], 0.0, 1.0, seed)
}

pub fn uniform(shape: Vec<usize>, lo: f64, hi: f64, seed: u64) -> Tensor {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    let n = shape.iter().product();
    Tensor::new(shape, (0..n).map(|_| r.random_range(lo..hi)).collect()).unwrap()
}

pub fn naive_l1(m: &Tensor, h: &Tensor) -> f64 {
    let (t, d) = (m.dim(0), m.dim(1));
    let mut s = 0.0;
    for i in 0..t {
        for j in 0..d {
            s += (m.data()[i * d + j] - h.data()[i * d + j]).abs();
        }
    }
    s / t as f64
}

pub fn naive_ssim_loss(m: &Tensor, h: &Tensor) -> f64 {
    let (t, d) = (m.dim(0), m.dim(1));
    let col = |x: &Tensor, j: usize| -> Vec<f64> { (0..t).map(|i| x.data()[i * d + j]).collect() };
    let mut total = 0.0;
    for j in 0..d {
        let (a, b) = (col(m, j), col(h, j));
        let n = t as f64;
        let ma = a.iter().sum::<f64>() / n;
        let mb = b.iter().sum::<f64>() / n;
        let va = a.iter().map(|x| (x - ma) * (x - ma)).sum::<f64>() / n;
        let vb = b.iter().map(|x| (x - mb) * (x - mb)).sum::<f64>() / n;
        let cov = a.iter().zip(&b).map(|(x, y)| (x - ma) * (y - mb)).sum::<f64>() / n;
        total += (2.0 * ma * mb + SSIM_DELTA1) * (2.0 * cov + SSIM_DELTA2)
            / ((ma * ma + mb * mb + SSIM_DELTA1) * (va + vb + SSIM_DELTA2));
    }
    1.0 - total / d as f64
}

pub fn naive_lsgan(r: &Tensor, f: &Tensor, side: GanSide) -> f64 {
    let mean = |x: &Tensor, c: f64| x.data().iter().map(|v| (v - c) * (v - c)).sum::<f64>() / x.len() as f64;
    match side {
        GanSide::Generator => 0.5 * mean(f, 1.0),
        GanSide::Discriminator => 0.5 * mean(r, 1.0) + 0.5 * mean(f, 0.0),
    }
}

/// Plain `[C, H, W]` cross-correlation with zero padding.
pub fn naive_conv2d(x: &Tensor, w: &Tensor, bias: Option<&Tensor>, stride: usize, pad: usize) -> Tensor {
    let (cin, h, wd) = (x.dim(0), x.dim(1), x.dim(2));
    let (cout, k) = (w.dim(0), w.dim(2));
    let oh = (h + 2 * pad - k) / stride + 1;
    let ow = (wd + 2 * pad - k) / stride + 1;
    let mut out = vec![0.0; cout * oh * ow];
    for o in 0..cout {
        for y in 0..oh {
            for xx in 0..ow {
                let mut s = bias.map_or(0.0, |b| b.data()[o]);
                for c in 0..cin {
                    for ky in 0..k {
                        for kx in 0..k {
                            let iy = (y * stride + ky) as isize - pad as isize;
                            let ix = (xx * stride + kx) as isize - pad as isize;
                            if iy < 0 || ix < 0 || iy >= h as isize || ix >= wd as isize {
                                continue;
                            }
                            s += w.data()[((o * cin + c) * k + ky) * k + kx]
                                * x.data()[(c * h + iy as usize) * wd + ix as usize];
                        }
                    }
                }
                out[(o * oh + y) * ow + xx] = s;
            }
        }
    }
    Tensor::new(vec![cout, oh, ow], out).unwrap()
}

pub fn naive_avg_pool2(x: &Tensor) -> Tensor {
    let (c, h, w) = (x.dim(0), x.dim(1), x.dim(2));
    let mut out = Vec::with_capacity(c * h * w / 4);
    for ch in 0..c {
        for y in 0..h / 2 {
            for xx in 0..w / 2 {
                let at = |dy: usize, dx: usize| x.data()[(ch * h + 2 * y + dy) * w + 2 * xx + dx];
                out.push((at(0, 0) + at(0, 1) + at(1, 0) + at(1, 1)) / 4.0);
            }
        }
    }
    Tensor::new(vec![c, h / 2, w / 2], out).unwrap()
}

pub fn mean_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum::<f64>() / a.len() as f64
}

pub fn naive_perceptual(p: &FeaturePyramid, a: &Tensor, b: &Tensor) -> f64 {
    let (mut x, mut y) = (a.clone(), b.clone());
    let mut total = 0.0;
    for s in &p.stages {
        let pad = s.weight.dim(2) / 2;
        x = naive_conv2d(&x, &s.weight, None, s.stride, pad);
        y = naive_conv2d(&y, &s.weight, None, s.stride, pad);
        if s.relu {
            x = x.map(|v| v.max(0.0));
            y = y.map(|v| v.max(0.0));
        }
        total += mean_abs_diff(x.data(), y.data());
    }
    total
}

pub fn naive_fuse(face: &Tensor, color: &Tensor, mask: &Tensor) -> Tensor {
    let hw = mask.len();
    let out = (0..face.len())
        .map(|i| {
            let m = mask.data()[i % hw];
            m * face.data()[i] + (1.0 - m) * color.data()[i]
        })
        .collect();
    Tensor::new(face.shape().to_vec(), out).unwrap()
}

pub fn crop(x: &Tensor, b: &PixelBox) -> Vec<f64> {
    let (c, h, w) = (x.dim(0), x.dim(1), x.dim(2));
    let mut out = Vec::new();
    for ch in 0..c {
        for y in b.y0..b.y1 {
            for xx in b.x0..b.x1 {
                out.push(x.data()[(ch * h + y) * w + xx]);
            }
        }
    }
    out
}

/// Patch scores of the three video discriminators on `image ⊕ volume`.
pub fn naive_video_scores(d: &NetWeights, image: &Tensor, volume: &Tensor) -> Vec<Tensor> {
    let (h, w) = (image.dim(1), image.dim(2));
    let mut data = image.data().to_vec();
    data.extend_from_slice(volume.data());
    let mut x = Tensor::new(vec![image.dim(0) + volume.dim(0), h, w], data).unwrap();
    let leaky = |t: Tensor| t.map(|v| if v > 0.0 { v } else { 0.2 * v });
    let mut out = Vec::new();
    for s in 0..N_SCALES {
        if s > 0 {
            x = naive_avg_pool2(&x);
        }
        let p = |l: usize, what: &str| d.get(&format!("dvid{}.{l}.{what}", s + 1)).unwrap();
        let h1 = leaky(naive_conv2d(&x, p(0, "weight"), Some(p(0, "bias")), 2, 1));
        let h2 = leaky(naive_conv2d(&h1, p(1, "weight"), Some(p(1, "bias")), 2, 1));
        out.push(naive_conv2d(&h2, p(2, "weight"), Some(p(2, "bias")), 1, 1));
    }
    out
}

/// Brute-force renderer objective and its components
/// `[total, perceptual, l1_image, l1_face, adversarial]`.
#[allow(clippy::too_many_arguments)]
pub fn naive_loss_video(
    pyramid: &FeaturePyramid,
    d: &NetWeights,
    image: &Tensor,
    face: &Tensor,
    target: &Tensor,
    volume: &Tensor,
    face_box: &PixelBox,
    lw: &LossWeights,
) -> [f64; 5] {
    let perc = naive_perceptual(pyramid, image, target);
    let l1 = mean_abs_diff(image.data(), target.data());
    let l1_face = mean_abs_diff(&crop(face, face_box), &crop(target, face_box));
    let adv: f64 = naive_video_scores(d, image, volume)
        .iter()
        .map(|s| {
            let ones = Tensor::full(s.shape().to_vec(), 1.0);
            naive_lsgan(&ones, s, GanSide::Generator)
        })
        .sum();
    let total = lw.alpha * perc + lw.beta * l1 + lw.gamma * l1_face + lw.adversarial * adv;
    [total, perc, l1, l1_face, adv]
}

/// A config small enough to run every CLI stage in seconds.
pub const TINY_CONFIG: &str = r#"
n_utterances = 10
n_reference = 1
embed_dim = 4
mouth_channels = 8
mouth_blocks = 1
encdec_channels = 8
anim_disc_channels = 4
anim_batch_size = 2
mouth_epochs_fixed = 1
mouth_epochs_decay = 1
upper_epochs_fixed = 1
upper_epochs_decay = 1
fit_keyframes = 4
fit_max_iters = 15
style_epochs = 2
render_channels = 2
render_color_blocks = 1
render_disc_channels = 2
render_epochs = 1
render_batch_size = 2
render_frames = 3
render_sample_every = 1
"#;

pub fn talkhead(dir: &std::path::Path, args: &[&str]) -> std::process::Output {
    std::process::Command::new(env!("CARGO_BIN_EXE_talkhead"))
        .args(args)
        .arg("--out")
        .arg(dir)
        .output()
        .expect("binary runs")
}

pub const STAGES: [&[&str]; 8] = [
    &["synth-data"],
    &["train-anim", "mouth"],
    &["train-anim", "upper"],
    &["train-anim", "head"],
    &["fit-face"],
    &["train-style"],
    &["train-render"],
    &["generate", "--emotion", "happiness"],
];

/// Runs `stages` with `config` and `seed`; panics with stderr on failure.
pub fn run_stages(dir: &std::path::Path, config: &std::path::Path, seed: u64, stages: &[&[&str]]) {
    let seed = seed.to_string();
    for st in stages {
        let mut args = st.to_vec();
        args.extend(["--config", config.to_str().unwrap(), "--seed", &seed]);
        let o = talkhead(dir, &args);
        assert!(o.status.success(), "{st:?}: {}", String::from_utf8_lossy(&o.stderr));
    }
}

/// Every file under `root`, relative path to bytes.
pub fn snapshot(root: &std::path::Path) -> std::collections::BTreeMap<std::path::PathBuf, Vec<u8>> {
    let mut out = std::collections::BTreeMap::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in std::fs::read_dir(&d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                out.insert(p.strip_prefix(root).unwrap().to_path_buf(), std::fs::read(&p).unwrap());
            }
        }
    }
    out
}

/// Utterance document of `t` frames at 30 fps with cycling phonemes.
pub fn utterance_doc(t: usize) -> String {
    let rows = |d: usize, v: f64| format!("[{}]", vec![format!("[{}]", vec![v.to_string(); d].join(",")); t].join(","));
    let ph: Vec<String> = (0..t).map(|i| (1 + (i / 4) % 30).to_string()).collect();
    let w: Vec<String> = (0..t).map(|i| (1 + i / 10).to_string()).collect();
    format!(
        r#"{{"fps":30,"emotion":2,"ph":[{}],"w":[{}],"m_mou":{},"m_upp":{},"m_hed":{}}}"#,
        ph.join(","),
        w.join(","),
        rows(28, 0.1),
        rows(23, 0.1),
        rows(6, 0.0)
    )
}
