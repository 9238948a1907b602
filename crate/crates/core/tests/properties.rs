mod common;

use std::collections::BTreeMap;

use common::oracles::{brute_force_dtw, entropy_oracle, sequence, synthetic_abx, Frames};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use zslab::evaluation::{abx_error_rate, bitrate, dtw_cosine, AbxTask, AbxTriple, SegmentRef, SymbolStream};
use zslab::features::FeatureSequence;

fn frames(max_len: usize, dim: usize) -> impl Strategy<Value = Vec<f32>> {
    (1..=max_len).prop_flat_map(move |t| prop::collection::vec(-1.0f32..1.0, t * dim))
}

fn scaled(reps: &BTreeMap<String, FeatureSequence>, c: f32) -> BTreeMap<String, FeatureSequence> {
    reps.iter()
        .map(|(k, s)| (k.clone(), sequence(s.frames().iter().map(|v| v * c).collect(), s.dim())))
        .collect()
}

fn duplicated(reps: &BTreeMap<String, FeatureSequence>, k: usize) -> BTreeMap<String, FeatureSequence> {
    reps.iter()
        .map(|(id, s)| {
            let d = s.dim();
            let data = (0..s.num_frames())
                .flat_map(|t| std::iter::repeat_n(s.frame(t), k))
                .flatten()
                .copied()
                .collect();
            (id.clone(), sequence(data, d))
        })
        .collect()
}

fn stretch(task: &AbxTask, k: usize) -> AbxTask {
    let seg = |s: &SegmentRef| SegmentRef {
        start_frame: s.start_frame * k,
        end_frame: s.end_frame * k,
        ..s.clone()
    };
    AbxTask::new(
        task.triples
            .iter()
            .map(|t| AbxTriple {
                a: seg(&t.a),
                b: seg(&t.b),
                x: seg(&t.x),
            })
            .collect(),
    )
    .unwrap()
}

proptest! {
    #[test]
    fn dtw_is_symmetric_and_non_negative(
        (dim, a, b) in (1usize..5).prop_flat_map(|d| (Just(d), frames(9, d), frames(9, d)))
    ) {
        let ab = dtw_cosine(&a, &b, dim).unwrap();
        let ba = dtw_cosine(&b, &a, dim).unwrap();
        prop_assert!(ab >= 0.0);
        prop_assert_eq!(ab, ba);
    }

    #[test]
    fn dtw_matches_path_enumeration(a in frames(6, 3), b in frames(6, 3)) {
        let got = dtw_cosine(&a, &b, 3).unwrap();
        let want = brute_force_dtw(&a, &b, 3);
        prop_assert!((got - want).abs() <= 1e-9, "dtw {} vs brute force {}", got, want);
    }

    #[test]
    fn bitrate_ignores_symbol_names(
        symbols in prop::collection::vec(0usize..12, 1..400),
        perm in Just((0..12usize).collect::<Vec<_>>()).prop_shuffle(),
        offset in 0usize..1000,
        duration in 0.5f64..100.0,
    ) {
        let renamed: Vec<usize> = symbols.iter().map(|&s| perm[s] * 7 + offset).collect();
        let a = bitrate(&SymbolStream::new(symbols, duration).unwrap());
        let b = bitrate(&SymbolStream::new(renamed, duration).unwrap());
        prop_assert_eq!(a, b);
    }

    #[test]
    fn bitrate_matches_entropy_oracle(symbols in prop::collection::vec(0usize..40, 1..600), duration in 0.1f64..100.0) {
        let m = symbols.len() as f64;
        let want = m / duration * entropy_oracle(&symbols);
        let got = bitrate(&SymbolStream::new(symbols, duration).unwrap());
        prop_assert!((got - want).abs() <= 1e-9 * want.max(1.0), "{} vs {}", got, want);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn abx_is_scale_invariant(seed in any::<u64>(), c in 0.01f32..100.0, sep in 0.0f64..2.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (task, reps) = synthetic_abx(200, 4, Frames::Clusters { sep }, &mut rng);
        let base = abx_error_rate(&task, &reps).unwrap();
        prop_assert_eq!(base, abx_error_rate(&task, &scaled(&reps, c)).unwrap());
    }

    #[test]
    fn abx_is_invariant_to_frame_duplication(seed in any::<u64>(), k in 2usize..4, sep in 0.0f64..2.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (task, reps) = synthetic_abx(200, 4, Frames::Clusters { sep }, &mut rng);
        let base = abx_error_rate(&task, &reps).unwrap();
        let dup = abx_error_rate(&stretch(&task, k), &duplicated(&reps, k)).unwrap();
        prop_assert_eq!(base, dup);
    }
}
