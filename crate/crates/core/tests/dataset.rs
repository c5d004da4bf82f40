use std::collections::HashMap;

use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use talkhead::dataset::*;
use talkhead::Error;

#[test]
fn synthetic_utterance_round_trips_byte_exact() {
    let c = synth_corpus(5, 3, 30).unwrap();
    for (_, u) in &c.utterances {
        let bytes = u.to_json();
        let back = parse_utterance(&bytes, &c.vocab).unwrap();
        assert_eq!(&back, u);
        assert_eq!(back.to_json(), bytes);
    }
}

#[test]
fn three_frame_document_parses() {
    let row = |n: usize| format!("[{}]", vec!["0"; n].join(","));
    let rows = |n: usize| format!("[{},{},{}]", row(n), row(n), row(n));
    let doc = format!(
        r#"{{"fps":30,"emotion":2,"ph":[0,0,0],"w":[0,0,0],"m_mou":{},"m_upp":{},"m_hed":{}}}"#,
        rows(28),
        rows(23),
        rows(6)
    );
    let u = parse_utterance(doc.as_bytes(), &Vocab::standard()).unwrap();
    assert_eq!(u.len(), 3);
    let short = doc.replace(r#""ph":[0,0,0]"#, r#""ph":[0,0]"#);
    assert!(matches!(
        parse_utterance(short.as_bytes(), &Vocab::standard()),
        Err(Error::LengthMismatch(_))
    ));
    let bad_ph = doc.replace(r#""ph":[0,0,0]"#, r#""ph":[0,41,0]"#);
    assert!(matches!(
        parse_utterance(bad_ph.as_bytes(), &Vocab::standard()),
        Err(Error::IndexOutOfRange { .. })
    ));
    assert!(matches!(
        parse_utterance(b"{not json", &Vocab::standard()),
        Err(Error::Malformed(_))
    ));
}

#[test]
fn corpus_save_load_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let c = synth_corpus(8, 11, 30).unwrap();
    c.save(dir.path()).unwrap();
    let back = Corpus::load(dir.path()).unwrap();
    assert_eq!(back, c);
    assert_eq!(back.test().count(), 1);
    assert_eq!(back.train().count(), 10);
}

#[test]
fn synth_corpus_is_pure_and_valid() {
    let a = synth_corpus(1, 4, 30).unwrap();
    let b = synth_corpus(1, 4, 30).unwrap();
    assert_eq!(a, b);
    a.validate().unwrap();
    for (_, u) in &a.utterances {
        assert!((90..=180).contains(&u.len()));
    }
    assert_ne!(a, synth_corpus(2, 4, 30).unwrap());
    assert!(synth_corpus(1, 0, 30).is_err());
}

#[test]
fn equal_phoneme_context_gives_equal_mouth_pose() {
    let c = synth_corpus(4, 40, 30).unwrap();
    let mut seen: HashMap<(usize, usize, usize), Vec<f64>> = HashMap::new();
    let mut repeats = 0;
    for (_, u) in &c.utterances {
        let rs = runs(&u.ph);
        for i in 0..rs.len() {
            let prev = if i > 0 { rs[i - 1].2 } else { PH_SILENCE };
            let next = rs.get(i + 1).map_or(PH_SILENCE, |r| r.2);
            let key = (prev, rs[i].2, next);
            let pose = u.mouth.row(anchor_frame(rs[i].0, rs[i].1)).to_vec();
            match seen.get(&key) {
                Some(p) => {
                    repeats += 1;
                    for (a, b) in p.iter().zip(&pose) {
                        assert!((a - b).abs() < 1e-6, "{key:?}");
                    }
                }
                None => {
                    seen.insert(key, pose);
                }
            }
        }
    }
    assert!(repeats > 10, "only {repeats} repeated contexts");
}

#[test]
fn align_examples() {
    let one = [Segment::new('A', 0.0, 1.0)];
    assert_eq!(align_to_frames(&one, 2, 2, '-').unwrap(), vec!['A', 'A']);
    let two = [Segment::new('A', 0.0, 0.5), Segment::new('B', 0.5, 1.0)];
    assert_eq!(align_to_frames(&two, 2, 2, '-').unwrap(), vec!['A', 'B']);
    let overlap = [Segment::new('A', 0.0, 0.6), Segment::new('B', 0.5, 1.0)];
    assert!(matches!(align_to_frames(&overlap, 2, 2, '-'), Err(Error::Overlap(1))));
    assert!(align_to_frames(&[Segment::new('A', -0.1, 1.0)], 2, 2, '-').is_err());
}

#[test]
fn masking_examples() {
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    assert_eq!(mask_unknown_words(&[7, 7, 7], 1, &mut rng).unwrap(), vec![0, 0, 0]);
    assert!(mask_unknown_words(&[7, 7, 8], 3, &mut rng).is_err());
    assert!(mask_unknown_words(&[7, 8, 9, 10], 4, &mut rng).is_err());
}

#[test]
fn each_run_is_masked_with_frequency_one_fifth() {
    let w = [0, 3, 3, 4, 4, 4, 0, 5, 6, 6, 0, 7];
    let runs = word_runs(&w);
    assert_eq!(runs.len(), 5);
    let mut counts = [0usize; 5];
    for seed in 0..1000 {
        let mut rng = substream(seed, 11);
        let out = mask_unknown_words(&w, 1, &mut rng).unwrap();
        for (i, &(s, _, _)) in runs.iter().enumerate() {
            if out[s] == WORD_UNKNOWN {
                counts[i] += 1;
            }
        }
    }
    for c in counts {
        let f = c as f64 / 1000.0;
        assert!((f - 0.2).abs() <= 0.05, "{counts:?}");
    }
}

fn segments_strategy() -> impl Strategy<Value = (Vec<Segment<u8>>, u32, usize)> {
    (
        prop::collection::vec((0u8..41, 0.0f64..0.3, 0.01f64..0.5), 0..12),
        1u32..60,
        1usize..120,
    )
        .prop_map(|(raw, fps, frames)| {
            let mut t = 0.0;
            let mut segs = Vec::new();
            for (sym, gap, len) in raw {
                t += gap;
                segs.push(Segment::new(sym, t, t + len));
                t += len;
            }
            (segs, fps, frames)
        })
}

proptest! {
    #[test]
    fn align_matches_linear_scan((segs, fps, frames) in segments_strategy()) {
        let got = align_to_frames(&segs, fps, frames, 99u8).unwrap();
        prop_assert_eq!(got.len(), frames);
        for (t, g) in got.iter().enumerate() {
            let mid = (t as f64 + 0.5) / fps as f64;
            let want = segs
                .iter()
                .find(|s| s.start <= mid && mid < s.end)
                .map_or(99, |s| s.symbol);
            prop_assert_eq!(*g, want);
        }
    }

    #[test]
    fn masking_replaces_exactly_k_whole_runs(
        words in prop::collection::vec(0usize..6, 1..40),
        k in 1usize..=3,
        seed in 0u64..500,
    ) {
        let runs = word_runs(&words);
        let mut rng = substream(seed, 1);
        match mask_unknown_words(&words, k, &mut rng) {
            Err(_) => prop_assert!(runs.len() < k),
            Ok(out) => {
                let mut masked = 0;
                for &(s, l, _) in &runs {
                    let span = &out[s..s + l];
                    prop_assert!(span.iter().all(|&v| v == WORD_UNKNOWN) || span == &words[s..s + l]);
                    if span[0] == WORD_UNKNOWN {
                        masked += 1;
                    }
                }
                prop_assert_eq!(masked, k);
                for (i, (&a, &b)) in words.iter().zip(&out).enumerate() {
                    if a == WORD_UNKNOWN {
                        prop_assert_eq!(b, WORD_UNKNOWN, "frame {}", i);
                    }
                }
            }
        }
    }
}
