use std::collections::BTreeSet;

use grl_asr::corpus::{
    load_dataset, save_dataset, subset_hours, Domain, FrameDataset, MixedBatchIterator, Utterance,
};
use grl_asr::nn::Matrix;
use grl_asr::synth::{delta_features, splice, FeatureConfig};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn dataset(seed: u64, lengths: &[usize], dims: usize, labeled: bool, domain: Domain) -> FrameDataset {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n: usize = lengths.iter().sum();
    let mut start = 0;
    let utts = lengths
        .iter()
        .enumerate()
        .map(|(i, &f)| {
            let u = Utterance { id: format!("u{i:03}"), start, frames: f };
            start += f;
            u
        })
        .collect();
    let feats = Matrix::from_vec(n, dims, (0..n * dims).map(|_| rng.random_range(-3.0..3.0)).collect()).unwrap();
    let labels = labeled.then(|| (0..n).map(|_| rng.random_range(0..7)).collect());
    FrameDataset::new(feats, labels, 7, domain, "it", 0.01, utts).unwrap()
}

fn ids(d: &FrameDataset) -> BTreeSet<String> {
    d.utterances().iter().map(|u| u.id.clone()).collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn subsets_are_nested_and_within_one_utterance(
        lengths in prop::collection::vec(1usize..40, 2..30),
        fractions in prop::collection::vec(0.0f64..=1.0, 2..6),
        seed in any::<u64>(),
    ) {
        let data = dataset(1, &lengths, 2, true, Domain::Target);
        let total = data.hours_equivalent();
        let longest = *lengths.iter().max().unwrap() as f64 * 0.01 / 3600.0;
        let mut fr = fractions.clone();
        fr.sort_by(f64::total_cmp);
        let subsets: Vec<FrameDataset> = fr
            .iter()
            .map(|f| subset_hours(&data, f * total, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap())
            .collect();
        for (f, s) in fr.iter().zip(&subsets) {
            prop_assert!((s.hours_equivalent() - f * total).abs() <= longest + 1e-12);
        }
        for w in subsets.windows(2) {
            prop_assert!(ids(&w[0]).is_subset(&ids(&w[1])));
        }
        prop_assert!(subset_hours(&data, total * 1.01 + 1e-9, &mut ChaCha8Rng::seed_from_u64(seed)).is_err());
    }

    #[test]
    fn epochs_partition_the_mixed_stream(
        ns in 1usize..200,
        nt in 0usize..200,
        batch in 1usize..64,
        seed in any::<u64>(),
    ) {
        let src = dataset(2, &[ns], 3, true, Domain::Source);
        let tgt = dataset(3, &[nt.max(1)], 3, false, Domain::Target);
        let tgt = (nt > 0).then_some(&tgt);
        let mut it = MixedBatchIterator::new(&src, tgt, batch, ChaCha8Rng::seed_from_u64(seed)).unwrap();
        for _ in 0..2 {
            let mut seen = BTreeSet::new();
            let mut count = 0;
            while let Some(b) = it.next_batch() {
                prop_assert!(b.len() <= batch);
                for r in 0..b.len() {
                    let d = b.domains[r];
                    prop_assert_eq!(b.labels[r].is_some(), d == Domain::Source);
                    let set = if d == Domain::Source { &src } else { tgt.unwrap() };
                    prop_assert_eq!(b.features.row(r), set.features().row(b.origin[r]));
                    if d == Domain::Source {
                        prop_assert_eq!(b.labels[r], Some(src.labels().unwrap()[b.origin[r]]));
                    }
                    seen.insert((d == Domain::Target, b.origin[r]));
                    count += 1;
                }
            }
            let expected = ns + tgt.map_or(0, |t| t.len());
            prop_assert_eq!(count, expected);
            prop_assert_eq!(seen.len(), expected);
            it.new_epoch();
        }
    }

    #[test]
    fn splice_and_delta_dimensions(
        frames in 1usize..30,
        dims in 1usize..30,
        context in 0usize..7,
        seed in any::<u64>(),
    ) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let m = Matrix::from_vec(frames, dims, (0..frames * dims).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap();
        let s = splice(&m, context);
        prop_assert_eq!(s.shape(), (frames, dims * (2 * context + 1)));
        // Slot `context` of every row is the row itself; slot 0 of row 0 is row 0.
        for t in 0..frames {
            prop_assert_eq!(&s.row(t)[context * dims..(context + 1) * dims], m.row(t));
        }
        prop_assert_eq!(&s.row(0)[..dims], m.row(0));
        let d = delta_features(&m, 2).unwrap();
        prop_assert_eq!(d.shape(), m.shape());
    }

    #[test]
    fn feature_dimension_formula(n_mel in 1usize..40, context in 0usize..8, deltas in any::<bool>()) {
        let cfg = FeatureConfig { n_mel, context_frames: context, include_deltas: deltas, ..FeatureConfig::default() };
        prop_assert_eq!(cfg.output_dim(), n_mel * if deltas { 3 } else { 1 } * (2 * context + 1));
    }

    #[test]
    fn datasets_round_trip_bit_exact(
        lengths in prop::collection::vec(1usize..20, 1..6),
        dims in 1usize..10,
        labeled in any::<bool>(),
    ) {
        let dir = tempfile::tempdir().unwrap();
        let domain = if labeled { Domain::Source } else { Domain::Target };
        let d = dataset(4, &lengths, dims, labeled, domain);
        save_dataset(&d, dir.path()).unwrap();
        let back = load_dataset(dir.path()).unwrap();
        prop_assert_eq!(&back, &d);
        let bits = |m: &Matrix| m.data().iter().map(|v| v.to_bits()).collect::<Vec<_>>();
        prop_assert_eq!(bits(back.features()), bits(d.features()));
    }
}

#[test]
fn default_feature_dimension() {
    let cfg = FeatureConfig::default();
    assert_eq!(cfg.output_dim(), 759);
    let frames = Matrix::zeros(4, 69);
    assert_eq!(splice(&frames, 5).cols(), 759);
}

#[test]
fn labels_stripped_after_loading_pass_enforcement() {
    let dir = tempfile::tempdir().unwrap();
    let src = dataset(5, &[30], 3, true, Domain::Source);
    let tgt = dataset(6, &[30], 3, true, Domain::Target);
    save_dataset(&tgt, dir.path()).unwrap();
    let loaded = load_dataset(dir.path()).unwrap();
    assert!(MixedBatchIterator::new(&src, Some(&loaded), 8, ChaCha8Rng::seed_from_u64(0)).is_err());
    let stripped = loaded.without_labels();
    assert!(MixedBatchIterator::new(&src, Some(&stripped), 8, ChaCha8Rng::seed_from_u64(0)).is_ok());
}
