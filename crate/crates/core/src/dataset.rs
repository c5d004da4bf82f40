//! Corpus schema, frame alignment, unknown-word masking and a synthetic
//! corpus generator with learnable phoneme→mouth structure.

use std::collections::BTreeMap;
use std::path::Path;

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::Tensor;

pub const MOUTH_DIM: usize = 28;
pub const UPPER_DIM: usize = 23;
pub const HEAD_DIM: usize = 6;
pub const N_PHONEMES: usize = 41;
pub const N_WORDS: usize = 1859;
pub const N_EMOTIONS: usize = 4;

/// Silence phoneme; also assigned to alignment gaps.
pub const PH_SILENCE: usize = 0;
/// Spoken-noise / unknown phoneme.
pub const PH_UNKNOWN: usize = 40;
/// The shared 'unknown' word; also assigned to alignment gaps.
pub const WORD_UNKNOWN: usize = 0;

const ARPABET: [&str; 39] = [
    "AA", "AE", "AH", "AO", "AW", "AY", "B", "CH", "D", "DH", "EH", "ER", "EY", "F", "G", "HH", "IH", "IY", "JH",
    "K", "L", "M", "N", "NG", "OW", "OY", "P", "R", "S", "SH", "T", "TH", "UH", "UW", "V", "W", "Y", "Z", "ZH",
];

pub const EMOTIONS: [&str; 4] = ["surprise", "anger", "neutral", "happiness"];

/// Emotion frequencies of the recorded corpus, used when sampling labels.
const EMOTION_COUNTS: [u32; 4] = [203, 273, 255, 134];

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Vocab {
    pub phonemes: Vec<String>,
    pub words: Vec<String>,
    pub emotions: Vec<String>,
}

impl Vocab {
    /// `sil`, the 39 ARPAbet phonemes, `spn`; `<unk>` plus 1858
    /// placeholder words; the four emotion labels.
    pub fn standard() -> Self {
        let mut phonemes = vec!["sil".to_string()];
        phonemes.extend(ARPABET.iter().map(|s| s.to_string()));
        phonemes.push("spn".to_string());
        let mut words = vec!["<unk>".to_string()];
        words.extend((1..N_WORDS).map(|i| format!("w{i:04}")));
        Self {
            phonemes,
            words,
            emotions: EMOTIONS.iter().map(|s| s.to_string()).collect(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let check = |what: &str, list: &[String], n: usize| -> Result<()> {
            if list.len() != n {
                return Err(Error::Malformed(format!("{what} vocabulary has {} entries, expected {n}", list.len())));
            }
            let mut seen = std::collections::BTreeSet::new();
            for s in list {
                if !seen.insert(s) {
                    return Err(Error::Malformed(format!("duplicate {what} symbol {s:?}")));
                }
            }
            Ok(())
        };
        check("phoneme", &self.phonemes, N_PHONEMES)?;
        check("word", &self.words, N_WORDS)?;
        check("emotion", &self.emotions, N_EMOTIONS)?;
        if self.words[WORD_UNKNOWN] != "<unk>" {
            return Err(Error::Malformed("word index 0 must be the unknown word <unk>".into()));
        }
        Ok(())
    }

    pub fn phoneme_index(&self, sym: &str) -> Option<usize> {
        self.phonemes.iter().position(|p| p == sym)
    }

    pub fn word_index(&self, sym: &str) -> Option<usize> {
        self.words.iter().position(|p| p == sym)
    }

    pub fn emotion_index(&self, sym: &str) -> Option<usize> {
        self.emotions.iter().position(|p| p == sym)
    }
}

/// One frame-aligned utterance with ground-truth animation parameters.
#[derive(Clone, Debug, PartialEq)]
pub struct Utterance {
    pub fps: u32,
    pub emotion: usize,
    pub ph: Vec<usize>,
    pub w: Vec<usize>,
    /// `[T, 28]`, values in `[0,1]`.
    pub mouth: Tensor,
    /// `[T, 23]`, values in `[0,1]`.
    pub upper: Tensor,
    /// `[T, 6]`: XYZ Euler radians, then translation offsets from the rest pose.
    pub head: Tensor,
}

#[derive(Serialize, Deserialize)]
struct UtteranceDoc {
    fps: u32,
    emotion: usize,
    ph: Vec<usize>,
    w: Vec<usize>,
    m_mou: Vec<Vec<f64>>,
    m_upp: Vec<Vec<f64>>,
    m_hed: Vec<Vec<f64>>,
}

fn to_rows(t: &Tensor) -> Vec<Vec<f64>> {
    t.rows().map(|r| r.to_vec()).collect()
}

fn param_block(rows: &[Vec<f64>], dim: usize, what: &str, t: usize, unit: bool) -> Result<Tensor> {
    if rows.len() != t {
        return Err(Error::LengthMismatch(format!("{what} has {} frames, expected {t}", rows.len())));
    }
    let mut data = Vec::with_capacity(t * dim);
    for (i, r) in rows.iter().enumerate() {
        if r.len() != dim {
            return Err(Error::LengthMismatch(format!(
                "{what} frame {i} has {} values, expected {dim}",
                r.len()
            )));
        }
        for &v in r {
            if !v.is_finite() {
                return Err(Error::NonFinite(format!("{what} frame {i}")));
            }
            if unit && !(0.0..=1.0).contains(&v) {
                return Err(Error::WeightOutOfRange {
                    what: format!("{what} frame {i}"),
                    value: v,
                });
            }
        }
        data.extend_from_slice(r);
    }
    Tensor::new(vec![t, dim], data)
}

impl Utterance {
    pub fn len(&self) -> usize {
        self.ph.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ph.is_empty()
    }

    pub fn duration_secs(&self) -> f64 {
        self.len() as f64 / self.fps as f64
    }

    pub fn validate(&self, vocab: &Vocab) -> Result<()> {
        let doc = self.to_doc();
        Self::from_doc(doc, vocab).map(|_| ())
    }

    fn to_doc(&self) -> UtteranceDoc {
        UtteranceDoc {
            fps: self.fps,
            emotion: self.emotion,
            ph: self.ph.clone(),
            w: self.w.clone(),
            m_mou: to_rows(&self.mouth),
            m_upp: to_rows(&self.upper),
            m_hed: to_rows(&self.head),
        }
    }

    fn from_doc(doc: UtteranceDoc, vocab: &Vocab) -> Result<Self> {
        if doc.fps == 0 {
            return Err(Error::Malformed("fps must be positive".into()));
        }
        let t = doc.ph.len();
        if t == 0 {
            return Err(Error::Malformed("utterance has no frames".into()));
        }
        if doc.w.len() != t {
            return Err(Error::LengthMismatch(format!("w has {} frames, ph has {t}", doc.w.len())));
        }
        let bound = |what: &'static str, idx: &[usize], size: usize| -> Result<()> {
            match idx.iter().find(|&&i| i >= size) {
                Some(&index) => Err(Error::IndexOutOfRange { what, index, size }),
                None => Ok(()),
            }
        };
        bound("phoneme", &doc.ph, vocab.phonemes.len())?;
        bound("word", &doc.w, vocab.words.len())?;
        bound("emotion", &[doc.emotion], vocab.emotions.len())?;
        Ok(Self {
            fps: doc.fps,
            emotion: doc.emotion,
            mouth: param_block(&doc.m_mou, MOUTH_DIM, "m_mou", t, true)?,
            upper: param_block(&doc.m_upp, UPPER_DIM, "m_upp", t, true)?,
            head: param_block(&doc.m_hed, HEAD_DIM, "m_hed", t, false)?,
            ph: doc.ph,
            w: doc.w,
        })
    }

    /// Compact JSON document; byte-stable under parse/serialize.
    pub fn to_json(&self) -> Vec<u8> {
        serde_json::to_vec(&self.to_doc()).expect("utterance serializes")
    }
}

/// Parses and validates one utterance document.
pub fn parse_utterance(bytes: &[u8], vocab: &Vocab) -> Result<Utterance> {
    let doc: UtteranceDoc =
        serde_json::from_slice(bytes).map_err(|e| Error::Malformed(format!("utterance document: {e}")))?;
    Utterance::from_doc(doc, vocab)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Test,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Corpus {
    pub vocab: Vocab,
    pub utterances: Vec<(String, Utterance)>,
    pub split: Vec<Split>,
}

#[derive(Serialize, Deserialize)]
struct SplitsDoc {
    train: Vec<String>,
    test: Vec<String>,
}

impl Corpus {
    pub fn validate(&self) -> Result<()> {
        self.vocab.validate()?;
        if self.split.len() != self.utterances.len() {
            return Err(Error::LengthMismatch("split tags do not cover every utterance".into()));
        }
        for (_, u) in &self.utterances {
            u.validate(&self.vocab)?;
        }
        Ok(())
    }

    pub fn train(&self) -> impl Iterator<Item = &Utterance> {
        self.subset(Split::Train)
    }

    pub fn test(&self) -> impl Iterator<Item = &Utterance> {
        self.subset(Split::Test)
    }

    fn subset(&self, which: Split) -> impl Iterator<Item = &Utterance> {
        self.utterances
            .iter()
            .zip(&self.split)
            .filter(move |(_, s)| **s == which)
            .map(|((_, u), _)| u)
    }

    pub fn get(&self, name: &str) -> Option<&Utterance> {
        self.utterances.iter().find(|(n, _)| n == name).map(|(_, u)| u)
    }

    /// Writes `vocab.json`, `splits.json` and one `<name>.json` per utterance.
    pub fn save(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let write = |name: &str, bytes: Vec<u8>| -> Result<()> {
            let p = dir.join(name);
            std::fs::write(&p, bytes).map_err(|e| Error::io(p, e))
        };
        write("vocab.json", serde_json::to_vec(&self.vocab).expect("vocab serializes"))?;
        let mut splits = SplitsDoc {
            train: Vec::new(),
            test: Vec::new(),
        };
        for ((name, u), s) in self.utterances.iter().zip(&self.split) {
            write(&format!("{name}.json"), u.to_json())?;
            match s {
                Split::Train => splits.train.push(name.clone()),
                Split::Test => splits.test.push(name.clone()),
            }
        }
        write("splits.json", serde_json::to_vec_pretty(&splits).expect("splits serialize"))
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let read = |name: &str| -> Result<Vec<u8>> {
            let p = dir.join(name);
            std::fs::read(&p).map_err(|e| Error::io(p, e))
        };
        let vocab: Vocab =
            serde_json::from_slice(&read("vocab.json")?).map_err(|e| Error::Malformed(format!("vocab.json: {e}")))?;
        vocab.validate()?;
        let splits: SplitsDoc =
            serde_json::from_slice(&read("splits.json")?).map_err(|e| Error::Malformed(format!("splits.json: {e}")))?;
        let mut tags: BTreeMap<&str, Split> = BTreeMap::new();
        for (names, s) in [(&splits.train, Split::Train), (&splits.test, Split::Test)] {
            for n in names {
                if tags.insert(n, s).is_some() {
                    return Err(Error::Malformed(format!("{n} appears in more than one split")));
                }
            }
        }
        let mut utterances = Vec::new();
        let mut split = Vec::new();
        for (name, s) in tags {
            let u = parse_utterance(&read(&format!("{name}.json"))?, &vocab)?;
            utterances.push((name.to_string(), u));
            split.push(s);
        }
        Ok(Self {
            vocab,
            utterances,
            split,
        })
    }
}

/// A labelled time interval `[start, end)` in seconds.
#[derive(Clone, Debug, PartialEq)]
pub struct Segment<S> {
    pub symbol: S,
    pub start: f64,
    pub end: f64,
}

impl<S> Segment<S> {
    pub fn new(symbol: S, start: f64, end: f64) -> Self {
        Self { symbol, start, end }
    }
}

/// Frame `t` takes the symbol whose interval contains `(t + 0.5) / fps`;
/// frames in no interval take `gap`.
pub fn align_to_frames<S: Clone>(segments: &[Segment<S>], fps: u32, frames: usize, gap: S) -> Result<Vec<S>> {
    if fps == 0 {
        return Err(Error::InvalidArgument("fps must be positive".into()));
    }
    let mut prev_end = 0.0f64;
    for (i, s) in segments.iter().enumerate() {
        if !(s.start.is_finite() && s.end.is_finite()) || s.start < 0.0 || s.end < s.start {
            return Err(Error::InvalidArgument(format!(
                "segment {i} has invalid times [{}, {})",
                s.start, s.end
            )));
        }
        if i > 0 && s.start < prev_end {
            return Err(Error::Overlap(i));
        }
        prev_end = s.end;
    }
    let mut out = Vec::with_capacity(frames);
    let mut k = 0;
    for t in 0..frames {
        let mid = (t as f64 + 0.5) / fps as f64;
        while k < segments.len() && segments[k].end <= mid {
            k += 1;
        }
        match segments.get(k) {
            Some(s) if s.start <= mid => out.push(s.symbol.clone()),
            _ => out.push(gap.clone()),
        }
    }
    Ok(out)
}

/// Maximal runs `(start, len, word)` of equal non-unknown word indices.
pub fn word_runs(w: &[usize]) -> Vec<(usize, usize, usize)> {
    let mut runs = Vec::new();
    let mut i = 0;
    while i < w.len() {
        let mut j = i;
        while j < w.len() && w[j] == w[i] {
            j += 1;
        }
        if w[i] != WORD_UNKNOWN {
            runs.push((i, j - i, w[i]));
        }
        i = j;
    }
    runs
}

/// Replaces exactly `k` distinct word runs, chosen uniformly, with the
/// unknown word over their whole span.
pub fn mask_unknown_words<R: Rng + ?Sized>(w: &[usize], k: usize, rng: &mut R) -> Result<Vec<usize>> {
    if !(1..=3).contains(&k) {
        return Err(Error::InvalidArgument(format!("k must be in 1..=3, got {k}")));
    }
    let runs = word_runs(w);
    if runs.len() < k {
        return Err(Error::InvalidArgument(format!(
            "sequence has {} word runs, cannot mask {k}",
            runs.len()
        )));
    }
    let mut out = w.to_vec();
    for r in sample(rng, runs.len(), k) {
        let (start, len, _) = runs[r];
        out[start..start + len].fill(WORD_UNKNOWN);
    }
    Ok(out)
}

/// Training-time augmentation: masks a uniformly drawn 1–3 runs, capped
/// by the number of runs available.
pub fn augment_unknown_words<R: Rng + ?Sized>(w: &[usize], rng: &mut R) -> Vec<usize> {
    let n = word_runs(w).len();
    let k = rng.random_range(1..=3usize);
    if n == 0 {
        return w.to_vec();
    }
    mask_unknown_words(w, k.min(n), rng).expect("k capped by run count")
}

/// Independent generator streams derived from one seed.
pub fn substream(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Parameters of the synthetic "language" shared by all utterances.
struct Language {
    pronunciations: Vec<Vec<usize>>,
    /// Articulatory target per phoneme, `[41][28]`.
    poses: Vec<[f64; MOUTH_DIM]>,
    /// Per-word brow emphasis in `[0, 1]`.
    emphasis: Vec<f64>,
    /// Per-word head nod direction.
    nod: Vec<[f64; 3]>,
    emotion_base: Vec<[f64; UPPER_DIM]>,
}

impl Language {
    fn new(seed: u64) -> Self {
        let mut rng = substream(seed, 1);
        let pronunciations = (0..N_WORDS)
            .map(|w| {
                if w == WORD_UNKNOWN {
                    return vec![PH_UNKNOWN];
                }
                let n = rng.random_range(2..=5);
                (0..n).map(|_| rng.random_range(1..=39)).collect()
            })
            .collect();
        let poses = (0..N_PHONEMES)
            .map(|p| {
                let mut pose = [0.0; MOUTH_DIM];
                for v in &mut pose {
                    *v = if p == PH_SILENCE {
                        rng.random_range(0.0..0.08)
                    } else {
                        rng.random_range(0.05..0.85)
                    };
                }
                pose
            })
            .collect();
        let emphasis = (0..N_WORDS).map(|_| rng.random_range(0.0..1.0)).collect();
        let nod = (0..N_WORDS)
            .map(|_| {
                [
                    rng.random_range(-0.08..0.08),
                    rng.random_range(-0.08..0.08),
                    rng.random_range(-0.03..0.03),
                ]
            })
            .collect();
        let emotion_base = (0..N_EMOTIONS)
            .map(|_| {
                let mut b = [0.0; UPPER_DIM];
                for v in &mut b {
                    *v = rng.random_range(0.1..0.6);
                }
                b
            })
            .collect();
        Self {
            pronunciations,
            poses,
            emphasis,
            nod,
            emotion_base,
        }
    }
}

/// Runs `(start, len, symbol)` of equal consecutive symbols.
pub fn runs<T: PartialEq + Copy>(xs: &[T]) -> Vec<(usize, usize, T)> {
    let mut out = Vec::new();
    let mut i = 0;
    while i < xs.len() {
        let mut j = i;
        while j < xs.len() && xs[j] == xs[i] {
            j += 1;
        }
        out.push((i, j - i, xs[i]));
        i = j;
    }
    out
}

/// Anchor frame of a run: its centre, rounded down.
pub fn anchor_frame(start: usize, len: usize) -> usize {
    start + (len - 1) / 2
}

fn smoothstep(u: f64) -> f64 {
    u * u * (3.0 - 2.0 * u)
}

/// Co-articulated mouth track: each phoneme run contributes a context
/// pose `0.6·own + 0.2·previous + 0.2·next` at its anchor frame, and
/// frames between anchors blend neighbouring context poses with a
/// smoothstep. The result is a deterministic function of `ph`.
fn mouth_track(ph: &[usize], lang: &Language) -> Vec<[f64; MOUTH_DIM]> {
    let rs = runs(ph);
    let ctx: Vec<[f64; MOUTH_DIM]> = (0..rs.len())
        .map(|i| {
            let cur = rs[i].2;
            let prev = if i > 0 { rs[i - 1].2 } else { PH_SILENCE };
            let next = rs.get(i + 1).map_or(PH_SILENCE, |r| r.2);
            let mut c = [0.0; MOUTH_DIM];
            for (d, v) in c.iter_mut().enumerate() {
                *v = 0.6 * lang.poses[cur][d] + 0.2 * lang.poses[prev][d] + 0.2 * lang.poses[next][d];
            }
            c
        })
        .collect();
    let anchors: Vec<usize> = rs.iter().map(|&(s, l, _)| anchor_frame(s, l)).collect();
    let mut out = Vec::with_capacity(ph.len());
    let mut k = 0;
    for t in 0..ph.len() {
        while k + 1 < anchors.len() && anchors[k + 1] <= t {
            k += 1;
        }
        if t <= anchors[0] {
            out.push(ctx[0]);
        } else if k + 1 >= anchors.len() {
            out.push(ctx[k]);
        } else {
            let u = (t - anchors[k]) as f64 / (anchors[k + 1] - anchors[k]) as f64;
            let wgt = smoothstep(u);
            let mut m = [0.0; MOUTH_DIM];
            for (d, v) in m.iter_mut().enumerate() {
                *v = (1.0 - wgt) * ctx[k][d] + wgt * ctx[k + 1][d];
            }
            out.push(m);
        }
    }
    out
}

/// Smooth band-limited noise: a few low-frequency sinusoids.
struct SmoothNoise {
    terms: Vec<(f64, f64, f64)>,
}

impl SmoothNoise {
    fn new<R: Rng>(rng: &mut R, amplitude: f64, max_hz: f64) -> Self {
        let terms = (0..3)
            .map(|_| {
                (
                    amplitude * rng.random_range(0.3..1.0) / 3.0,
                    rng.random_range(0.1..max_hz),
                    rng.random_range(0.0..std::f64::consts::TAU),
                )
            })
            .collect();
        Self { terms }
    }

    fn at(&self, secs: f64) -> f64 {
        self.terms
            .iter()
            .map(|(a, f, p)| a * (std::f64::consts::TAU * f * secs + p).sin())
            .sum()
    }
}

fn synth_utterance<R: Rng>(rng: &mut R, lang: &Language, fps: u32) -> Result<Utterance> {
    let fpsu = fps as usize;
    let frames = rng.random_range(3 * fpsu..=6 * fpsu);
    let emotion = {
        let total: u32 = EMOTION_COUNTS.iter().sum();
        let mut x = rng.random_range(0..total);
        let mut e = 0;
        while x >= EMOTION_COUNTS[e] {
            x -= EMOTION_COUNTS[e];
            e += 1;
        }
        e
    };
    let sec = |f: usize| f as f64 / fps as f64;

    // Lay out words and their phonemes in seconds, then align to frames.
    let lead = rng.random_range(2..=6usize);
    let tail = rng.random_range(2..=6usize);
    let mut cursor = lead;
    let mut ph_segments = Vec::new();
    let mut w_segments = Vec::new();
    while cursor + 4 < frames.saturating_sub(tail) {
        let word = rng.random_range(1..N_WORDS);
        let start = cursor;
        for &p in &lang.pronunciations[word] {
            let d = rng.random_range(2..=6usize);
            if cursor + d > frames - tail {
                break;
            }
            ph_segments.push(Segment::new(p, sec(cursor), sec(cursor + d)));
            cursor += d;
        }
        if cursor > start {
            w_segments.push(Segment::new(word, sec(start), sec(cursor)));
        }
        if rng.random_bool(0.3) {
            cursor += rng.random_range(1..=4usize);
        }
        if cursor == start {
            break;
        }
    }
    let ph = align_to_frames(&ph_segments, fps, frames, PH_SILENCE)?;
    let w = align_to_frames(&w_segments, fps, frames, WORD_UNKNOWN)?;

    let mouth_rows = mouth_track(&ph, lang);

    // Upper face: emotion baseline, brow emphasis bumps at word onsets, smooth noise.
    let noise: Vec<SmoothNoise> = (0..UPPER_DIM).map(|_| SmoothNoise::new(rng, 0.12, 1.5)).collect();
    let onsets: Vec<(usize, usize)> = word_runs(&w).iter().map(|&(s, _, word)| (s, word)).collect();
    let bump = |t: usize| -> f64 {
        onsets
            .iter()
            .map(|&(s, word)| {
                let dt = (t as f64 - s as f64 - 3.0) / 4.0;
                lang.emphasis[word] * (-dt * dt).exp()
            })
            .sum::<f64>()
    };
    let base = &lang.emotion_base[emotion];
    let mut upper = Vec::with_capacity(frames * UPPER_DIM);
    for t in 0..frames {
        let b = bump(t);
        for d in 0..UPPER_DIM {
            let brow = if d < 6 { 0.25 * b } else { 0.05 * b };
            upper.push((base[d] + brow + noise[d].at(sec(t))).clamp(0.0, 1.0));
        }
    }

    // Head pose: band-limited random walk plus word-driven nods.
    let rot_noise: Vec<SmoothNoise> = (0..3).map(|_| SmoothNoise::new(rng, 0.12, 0.8)).collect();
    let trans_noise: Vec<SmoothNoise> = (0..3).map(|_| SmoothNoise::new(rng, 0.08, 0.5)).collect();
    let mut head = Vec::with_capacity(frames * HEAD_DIM);
    for t in 0..frames {
        let mut nod = [0.0; 3];
        for &(s, word) in &onsets {
            let dt = (t as f64 - s as f64 - 2.0) / 5.0;
            let k = (-dt * dt).exp();
            for (n, v) in nod.iter_mut().zip(lang.nod[word]) {
                *n += k * v;
            }
        }
        for d in 0..3 {
            head.push(rot_noise[d].at(sec(t)) + nod[d]);
        }
        for tn in &trans_noise {
            head.push(tn.at(sec(t)));
        }
    }

    Ok(Utterance {
        fps,
        emotion,
        ph,
        w,
        mouth: Tensor::from_rows(&mouth_rows)?,
        upper: Tensor::new(vec![frames, UPPER_DIM], upper)?,
        head: Tensor::new(vec![frames, HEAD_DIM], head)?,
    })
}

/// Deterministic synthetic corpus. Utterance `i` is tagged test when
/// `i % 10 == 9`, so corpora under ten utterances are all training data.
pub fn synth_corpus(seed: u64, n_utts: usize, fps: u32) -> Result<Corpus> {
    if n_utts == 0 {
        return Err(Error::InvalidArgument("n_utts must be >= 1".into()));
    }
    if fps == 0 {
        return Err(Error::InvalidArgument("fps must be positive".into()));
    }
    let lang = Language::new(seed);
    let mut rng = substream(seed, 2);
    let mut utterances = Vec::with_capacity(n_utts);
    let mut split = Vec::with_capacity(n_utts);
    for i in 0..n_utts {
        utterances.push((format!("utt_{i:04}"), synth_utterance(&mut rng, &lang, fps)?));
        split.push(if i % 10 == 9 { Split::Test } else { Split::Train });
    }
    Ok(Corpus {
        vocab: Vocab::standard(),
        utterances,
        split,
    })
}
