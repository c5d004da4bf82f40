use talkhead::anim::{AnimArch, AnimBundle, Conditioning, Role};
use talkhead::dataset::{synth_corpus, Corpus, MOUTH_DIM};
use talkhead::face3d::EXPR_DIM;
use talkhead::nn::Tensor;
use talkhead::style::*;

const SMALL: AnimArch = AnimArch {
    embed_dim: 8,
    mouth_channels: 8,
    mouth_blocks: 1,
    encdec_channels: 8,
    disc_channels: 4,
};

fn stack(ts: Vec<&Tensor>) -> Tensor {
    let rows: usize = ts.iter().map(|t| t.dim(0)).sum();
    let data: Vec<f64> = ts.iter().flat_map(|t| t.data().iter().copied()).collect();
    Tensor::new(vec![rows, ts[0].dim(1)], data).unwrap()
}

fn split(c: &Corpus) -> (Tensor, Tensor) {
    let (last, rest) = c.utterances.split_last().unwrap();
    (stack(rest.iter().map(|(_, u)| &u.mouth).collect()), last.1.mouth.clone())
}

/// Every fifth frame of the corpus is held out.
fn frame_split(c: &Corpus) -> (Tensor, Tensor) {
    let (mut train, mut held) = (Vec::new(), Vec::new());
    let rows = c.utterances.iter().flat_map(|(_, u)| u.mouth.rows());
    for (i, r) in rows.enumerate() {
        if i % 5 == 4 {
            held.extend_from_slice(r);
        } else {
            train.extend_from_slice(r);
        }
    }
    (
        Tensor::new(vec![train.len() / MOUTH_DIM, MOUTH_DIM], train).unwrap(),
        Tensor::new(vec![held.len() / MOUTH_DIM, MOUTH_DIM], held).unwrap(),
    )
}

fn max_deviation(map: &StyleMap, input: &Tensor, want: &Tensor) -> f64 {
    let out = apply_style(map, input).unwrap();
    out.data()
        .iter()
        .zip(want.data())
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max)
}

fn recovers(scale: f64) -> (f64, f64) {
    let c = synth_corpus(21, 20, 30).unwrap();
    let (train, held) = frame_split(&c);
    let phonemes = vec![0; train.dim(0)];
    let pairs = StylePairs::new(train.clone(), train.map(|v| scale * v), phonemes).unwrap();
    let (map, curve) = train_style(&pairs, &StyleTrainConfig::default()).unwrap();
    (*curve.last().unwrap(), max_deviation(&map, &held, &held.map(|v| scale * v)))
}

#[test]
fn identity_style_is_recovered_on_held_out_frames() {
    let (mse, dev) = recovers(1.0);
    assert!(mse < 1e-4, "training mse {mse}");
    assert!(dev < 0.02, "held-out deviation {dev}");
}

#[test]
fn halving_style_is_recovered_on_held_out_frames() {
    let (_, dev) = recovers(0.5);
    assert!(dev < 0.02, "held-out deviation {dev}");
}

#[test]
fn training_is_deterministic() {
    let c = synth_corpus(2, 3, 30).unwrap();
    let (train, _) = split(&c);
    let pairs = StylePairs::new(train.clone(), train.map(|v| v * v), vec![1; train.dim(0)]).unwrap();
    let cfg = StyleTrainConfig {
        epochs: 3,
        seed: 5,
        ..Default::default()
    };
    assert_eq!(train_style(&pairs, &cfg).unwrap(), train_style(&pairs, &cfg).unwrap());
}

#[test]
fn zero_epochs_keeps_the_seeded_map() {
    let pairs = StylePairs::new(Tensor::full([4, 28], 0.2), Tensor::full([4, 28], 0.7), vec![0; 4]).unwrap();
    let cfg = StyleTrainConfig {
        epochs: 0,
        seed: 3,
        ..Default::default()
    };
    assert_eq!(train_style(&pairs, &cfg).unwrap().0, StyleMap::init(3));
}

#[test]
fn output_is_clamped_to_unit_range() {
    let mut map = StyleMap::init(1);
    map.weights.get_mut("style.1.bias").unwrap().data_mut().fill(-4.0);
    let out = apply_style(&map, &Tensor::full([3, 28], 0.5)).unwrap();
    assert!(out.data().iter().all(|&v| v == 0.0));
    assert!(apply_style(&map, &Tensor::full([3, 27], 0.5)).is_err());
    assert!(apply_style(&map, &Tensor::full([3, 28], f64::NAN)).is_err());
}

#[test]
fn permuting_frames_permutes_outputs() {
    let map = StyleMap::init(4);
    let c = synth_corpus(4, 1, 30).unwrap();
    let m = &c.utterances[0].1.mouth;
    let out = apply_style(&map, m).unwrap();
    let t = m.dim(0);
    let perm: Vec<usize> = (0..t).map(|i| (i * 7 + 3) % t).collect();
    let mut shuffled = Vec::new();
    for &i in &perm {
        shuffled.extend_from_slice(m.row(i));
    }
    let out_p = apply_style(&map, &Tensor::new(vec![t, MOUTH_DIM], shuffled).unwrap()).unwrap();
    for (k, &i) in perm.iter().enumerate() {
        assert_eq!(out_p.row(k), out.row(i));
    }
}

#[test]
fn style_map_checkpoint_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("style.ckpt");
    let map = StyleMap::init(8);
    map.save(&p).unwrap();
    assert_eq!(StyleMap::load(&p).unwrap(), map);
    assert!(StyleMap::load(&dir.path().join("missing.ckpt")).is_err());
}

fn fitted(c: &Corpus) -> Vec<FittedUtterance> {
    c.utterances
        .iter()
        .map(|(_, u)| {
            let mut e = Vec::new();
            for t in 0..u.len() {
                e.extend_from_slice(u.upper.row(t));
                e.extend_from_slice(u.mouth.row(t));
            }
            FittedUtterance {
                cond: Conditioning::from_utterance(u),
                expressions: Some(Tensor::new(vec![u.len(), EXPR_DIM], e).unwrap()),
            }
        })
        .collect()
}

#[test]
fn pairs_align_frame_by_frame() {
    let c = synth_corpus(6, 2, 30).unwrap();
    let mouth = AnimBundle::new(Role::Mouth, SMALL, 0).unwrap();
    let refs = fitted(&c);

    let one = build_pairs(&refs[..1], &mouth).unwrap();
    let u = &c.utterances[0].1;
    assert_eq!(one.len(), u.len());
    assert_eq!(one.personal, u.mouth);
    assert_eq!(one.generic, mouth.generate(&refs[0].cond).unwrap());

    let all = build_pairs(&refs, &mouth).unwrap();
    let want: Vec<usize> = c.utterances.iter().flat_map(|(_, u)| u.ph.iter().copied()).collect();
    assert_eq!(all.phonemes, want);
    assert_eq!(all.len(), want.len());
}

#[test]
fn pairs_reject_bad_references() {
    let c = synth_corpus(6, 1, 30).unwrap();
    let mouth = AnimBundle::new(Role::Mouth, SMALL, 0).unwrap();
    let upper = AnimBundle::new(Role::Upper, SMALL, 0).unwrap();
    let mut refs = fitted(&c);
    assert!(build_pairs(&[], &mouth).is_err());
    assert!(build_pairs(&refs, &upper).is_err());
    refs[0].expressions = None;
    assert!(build_pairs(&refs, &mouth).is_err());
    assert!(StylePairs::new(Tensor::zeros([2, 28]), Tensor::zeros([3, 28]), vec![0; 2]).is_err());
}
