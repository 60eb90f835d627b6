use grl_asr::corpus::{Domain, FrameDataset, MixedBatch, Utterance};
use grl_asr::grl::{
    adapt_adversarial, adaptation_gradients, attach_domain_head, build_main_network, evaluate,
    grl_equivalence_check, train_supervised, AdaptConfig, MixingPolicy, TrainConfig,
};
use grl_asr::nn::{flatten_grads, Matrix};
use grl_asr::optim::{Adam, AdamConfig};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

/// Two Gaussian blobs at `±sep` along a random direction, plus an optional
/// constant shift standing in for a channel offset.
fn blobs(seed: u64, n: usize, dims: usize, sep: f64, shift: f64, domain: Domain, labeled: bool) -> FrameDataset {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut dir = ChaCha8Rng::seed_from_u64(4242);
    let axis: Vec<f64> = (0..dims).map(|_| dir.sample::<f64, _>(StandardNormal)).collect();
    let norm = axis.iter().map(|v| v * v).sum::<f64>().sqrt();
    let mut data = Vec::with_capacity(n * dims);
    let mut labels = Vec::with_capacity(n);
    for i in 0..n {
        let y = i % 2;
        let s = if y == 0 { -sep } else { sep };
        for a in &axis {
            data.push(s * a / norm + shift + 0.5 * rng.sample::<f64, _>(StandardNormal));
        }
        labels.push(y);
    }
    let utts = (0..n / 10)
        .map(|u| Utterance { id: format!("u{u}"), start: u * 10, frames: 10 })
        .collect();
    FrameDataset::new(
        Matrix::from_vec(n, dims, data).unwrap(),
        labeled.then_some(labels),
        2,
        domain,
        "it",
        0.01,
        utts,
    )
    .unwrap()
}

/// Logistic regression by full-batch gradient descent: the oracle for how
/// separable the data is.
fn logistic_oracle(train: &FrameDataset, test: &FrameDataset) -> f64 {
    let d = train.dims();
    let mut w = vec![0.0; d + 1];
    let y = train.labels().unwrap();
    for _ in 0..300 {
        let mut g = vec![0.0; d + 1];
        for i in 0..train.len() {
            let x = train.features().row(i);
            let z = w[d] + x.iter().zip(&w).map(|(a, b)| a * b).sum::<f64>();
            let err = 1.0 / (1.0 + (-z).exp()) - y[i] as f64;
            for k in 0..d {
                g[k] += err * x[k];
            }
            g[d] += err;
        }
        for k in 0..=d {
            w[k] -= 0.5 * g[k] / train.len() as f64;
        }
    }
    let yt = test.labels().unwrap();
    let hits = (0..test.len())
        .filter(|&i| {
            let x = test.features().row(i);
            let z = w[d] + x.iter().zip(&w).map(|(a, b)| a * b).sum::<f64>();
            (z > 0.0) as usize == yt[i]
        })
        .count();
    hits as f64 / test.len() as f64
}

#[test]
fn supervised_training_reaches_the_separable_regime() {
    let train = blobs(1, 400, 6, 2.0, 0.0, Domain::Source, true);
    let valid = blobs(2, 200, 6, 2.0, 0.0, Domain::Source, true);
    assert!(logistic_oracle(&train, &valid) >= 0.99);
    let net = build_main_network(6, 2, &[8, 8], 0).unwrap();
    let mut adam = Adam::new(AdamConfig { learning_rate: 1e-2, ..Default::default() });
    let cfg = TrainConfig { epochs: 20, batch_size: 32, seed: 0 };
    let (trained, recs) = train_supervised(net, &train, &[&valid], &mut adam, None, &cfg).unwrap();
    assert_eq!(recs.len(), 20);
    assert!(recs.last().unwrap().senone_acc_valid >= 0.95);
    assert!(evaluate(&trained, &valid).unwrap().0 >= 0.95);
    for r in &recs {
        assert!((0.0..=1.0).contains(&r.senone_acc_train) && r.senone_loss.is_finite());
    }
}

#[test]
fn linear_smoke_loss_does_not_increase() {
    let train = blobs(3, 200, 3, 1.5, 0.0, Domain::Source, true);
    let net = build_main_network(3, 2, &[4], 1).unwrap();
    let mut adam = Adam::new(AdamConfig { learning_rate: 1e-3, ..Default::default() });
    // Full batch and a fixed order: each epoch is a single deterministic step.
    let cfg = TrainConfig { epochs: 15, batch_size: 200, seed: 0 };
    let (_, recs) = train_supervised(net, &train, &[&train], &mut adam, None, &cfg).unwrap();
    for w in recs.windows(2) {
        assert!(w[1].senone_loss <= w[0].senone_loss, "{} > {}", w[1].senone_loss, w[0].senone_loss);
    }
}

#[test]
fn zero_epochs_and_repeat_runs() {
    let train = blobs(4, 100, 4, 1.0, 0.0, Domain::Source, true);
    let net = build_main_network(4, 2, &[5], 2).unwrap();
    let run = |epochs| {
        let mut adam = Adam::new(AdamConfig::default());
        let cfg = TrainConfig { epochs, batch_size: 16, seed: 9 };
        train_supervised(net.clone(), &train, &[&train], &mut adam, None, &cfg).unwrap()
    };
    let (same, recs) = run(0);
    assert_eq!(same, net);
    assert!(recs.is_empty());
    let (a, ra) = run(3);
    let (b, rb) = run(3);
    assert_eq!(a, b);
    assert_eq!(ra, rb);
    let unlabeled = train.clone().without_labels();
    let mut adam = Adam::new(AdamConfig::default());
    let cfg = TrainConfig { epochs: 1, batch_size: 16, seed: 0 };
    assert!(train_supervised(net, &unlabeled, &[], &mut adam, None, &cfg).is_err());
}

#[test]
fn evaluation_contract() {
    let n = 10_000;
    let utts = vec![Utterance { id: "all".into(), start: 0, frames: n }];
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let labels: Vec<usize> = (0..n).map(|i| i % 10).collect();
    let feats = Matrix::from_vec(n, 5, (0..n * 5).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap();
    let data = FrameDataset::new(feats, Some(labels), 10, Domain::Source, "it", 0.01, utts).unwrap();
    // An untrained net is a near-uniform, data-independent guesser at chance.
    let net = build_main_network(5, 10, &[4], 3).unwrap();
    let (acc, loss) = evaluate(&net, &data).unwrap();
    assert!((acc - 0.1).abs() < 0.03, "{acc}");
    assert!(loss.is_finite());
    assert!(evaluate(&net, &data.clone().without_labels()).is_err());
    let empty = FrameDataset::new(Matrix::zeros(0, 5), Some(vec![]), 10, Domain::Source, "it", 0.01, vec![]).unwrap();
    assert!(evaluate(&net, &empty).is_err());
}

fn adapt_cfg(lambda: f64, epochs: usize) -> AdaptConfig {
    AdaptConfig {
        lambda_base: lambda,
        feature_layer_index: 1,
        epochs,
        learning_rate: 1e-3,
        batch_size: 32,
        mixing: MixingPolicy::GlobalShuffle,
        seed: 5,
        newbob: None,
    }
}

#[test]
fn adversarial_run_contract() {
    let src = blobs(10, 300, 5, 2.0, 0.0, Domain::Source, true);
    let tgt = blobs(11, 300, 5, 2.0, 1.5, Domain::Target, false);
    let tval = blobs(12, 100, 5, 2.0, 1.5, Domain::Target, false);
    let net = build_main_network(5, 2, &[8, 6], 0).unwrap();
    let with = attach_domain_head(net.clone(), 1, &[6], 0.01, 1).unwrap();
    let mut adam = Adam::new(AdamConfig::default());
    let (out, recs) = adapt_adversarial(with.clone(), &src, &tgt, &[&src, &tval], &adapt_cfg(1.0, 4), &mut adam).unwrap();
    assert!(out.domain_head().is_none());
    assert_eq!(recs.len(), 4);
    assert_eq!(recs[0].lambda_effective, 0.0);
    assert!((recs[3].lambda_effective - 0.3).abs() < 1e-15);
    for r in &recs {
        for a in [Some(r.senone_acc_train), Some(r.senone_acc_valid), r.domain_acc_train, r.domain_acc_valid] {
            let a = a.unwrap();
            assert!((0.0..=1.0).contains(&a));
        }
        assert!(r.senone_loss.is_finite() && r.domain_loss.unwrap().is_finite());
    }

    let labeled_target = blobs(11, 300, 5, 2.0, 1.5, Domain::Target, true);
    let mut adam = Adam::new(AdamConfig::default());
    assert!(adapt_adversarial(with.clone(), &src, &labeled_target, &[&src], &adapt_cfg(1.0, 1), &mut adam).is_err());
    assert!(adapt_adversarial(net, &src, &tgt, &[&src], &adapt_cfg(1.0, 1), &mut adam).is_err());
    let wrong_layer = AdaptConfig { feature_layer_index: 2, ..adapt_cfg(1.0, 1) };
    assert!(adapt_adversarial(with, &src, &tgt, &[&src], &wrong_layer, &mut adam).is_err());
}

fn batch(rng: &mut ChaCha8Rng, n: usize, dims: usize, only: Option<Domain>) -> MixedBatch {
    let domains: Vec<Domain> = (0..n)
        .map(|i| only.unwrap_or(if i % 3 == 0 { Domain::Target } else { Domain::Source }))
        .collect();
    MixedBatch {
        features: Matrix::from_vec(n, dims, (0..n * dims).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap(),
        labels: domains.iter().map(|d| (*d == Domain::Source).then(|| rng.random_range(0..3))).collect(),
        domains,
        origin: (0..n).collect(),
    }
}

#[test]
fn equivalence_check_corner_cases() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let net = attach_domain_head(build_main_network(4, 3, &[5, 5], 1).unwrap(), 2, &[4], 0.01, 2).unwrap();
    for (lam, only) in [(2.0, None), (0.0, None), (1.5, Some(Domain::Target)), (0.7, Some(Domain::Source))] {
        let b = batch(&mut rng, 9, 4, only);
        let r = grl_equivalence_check(&net, &b, lam).unwrap();
        assert!(r.max_abs_deviation < 1e-10, "{lam} {only:?}: {}", r.max_abs_deviation);
    }
    // λ_e = 0: the shared gradient is the senone gradient alone, so the domain
    // head's parameters cannot affect it.
    let b = batch(&mut rng, 9, 4, None);
    let g0 = adaptation_gradients(&net, &b, 0.0).unwrap();
    let mut other = net.clone();
    let (_, _, head) = other.parts_mut();
    let head = head.unwrap();
    let p: Vec<f64> = head.flat_params().iter().map(|v| v * -3.0 + 0.1).collect();
    head.set_flat_params(&p).unwrap();
    let g1 = adaptation_gradients(&other, &b, 0.0).unwrap();
    assert_eq!(flatten_grads(g0.shared.as_ref().unwrap()), flatten_grads(g1.shared.as_ref().unwrap()));
    // Target-only batches carry no senone term at all.
    let t = batch(&mut rng, 6, 4, Some(Domain::Target));
    assert!(adaptation_gradients(&net, &t, 1.0).unwrap().senone.is_none());
    assert!(adaptation_gradients(&net, &t, 0.0).unwrap().shared.is_none());
}

#[test]
fn head_updates_are_independent() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let net = attach_domain_head(build_main_network(4, 3, &[5, 5, 5], 1).unwrap(), 2, &[4], 0.01, 2).unwrap();
    let b = batch(&mut rng, 12, 4, None);
    let base = adaptation_gradients(&net, &b, 1.0).unwrap();

    // θ_y gradient ignores the domain head.
    let mut d_moved = net.clone();
    let (_, _, head) = d_moved.parts_mut();
    let head = head.unwrap();
    let p: Vec<f64> = head.flat_params().iter().map(|v| v + 0.3).collect();
    head.set_flat_params(&p).unwrap();
    let g = adaptation_gradients(&d_moved, &b, 1.0).unwrap();
    assert_eq!(flatten_grads(base.senone.as_ref().unwrap()), flatten_grads(g.senone.as_ref().unwrap()));
    assert_ne!(flatten_grads(&base.domain), flatten_grads(&g.domain));

    // θ_d gradient ignores the senone head.
    let mut y_moved = net.clone();
    let (_, senone, _) = y_moved.parts_mut();
    let p: Vec<f64> = senone.flat_params().iter().map(|v| v - 0.2).collect();
    senone.set_flat_params(&p).unwrap();
    let g = adaptation_gradients(&y_moved, &b, 1.0).unwrap();
    assert_eq!(flatten_grads(&base.domain), flatten_grads(&g.domain));
    assert_ne!(flatten_grads(base.senone.as_ref().unwrap()), flatten_grads(g.senone.as_ref().unwrap()));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn equivalence_holds_on_random_desk_configs(
        seed in 0u64..5000,
        hidden in prop::collection::vec(2usize..=12, 1..=4),
        n in 2usize..=16,
        lam in 0.0f64..4.0,
        mode in 0u8..3,
    ) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let f = 1 + (seed as usize) % hidden.len();
        let net = attach_domain_head(build_main_network(6, 4, &hidden, seed).unwrap(), f, &[5], 0.01, seed).unwrap();
        let only = match mode { 0 => None, 1 => Some(Domain::Source), _ => Some(Domain::Target) };
        let mut b = batch(&mut rng, n, 6, only);
        for l in b.labels.iter_mut().flatten() {
            *l = rng.random_range(0..4);
        }
        let r = grl_equivalence_check(&net, &b, lam).unwrap();
        prop_assert!(r.max_abs_deviation < 1e-10);
    }
}
