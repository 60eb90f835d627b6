//! The reversal layer, the warm-up schedule, and the check that routing the
//! domain gradient through the layer equals subtracting a separate backward pass.

use grl_asr::corpus::{Domain, MixedBatch};
use grl_asr::grl::{
    attach_domain_head, build_main_network, grl_equivalence_check, lambda_schedule,
    GradientReversal,
};
use grl_asr::nn::Matrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let layer = GradientReversal::new(0.5);
    let x = Matrix::from_rows(&[vec![1.0, -2.0, 3.0]])?;
    println!("forward  {:?}", layer.forward(&x).data());
    println!("backward {:?}", layer.backward(&x).data());

    let schedule: Vec<String> = (0..13).map(|e| format!("{:.1}", lambda_schedule(e, 2.0))).collect();
    println!("lambda_e for base 2: {}", schedule.join(" "));

    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let net = build_main_network(10, 5, &[16, 16, 16], 0)?;
    let net = attach_domain_head(net, 2, &[8], 0.01, 1)?;
    let n = 12;
    let domains: Vec<Domain> = (0..n).map(|i| if i < 5 { Domain::Source } else { Domain::Target }).collect();
    let batch = MixedBatch {
        features: Matrix::from_vec(n, 10, (0..n * 10).map(|_| rng.random_range(-1.0..1.0)).collect())?,
        labels: domains.iter().map(|d| (*d == Domain::Source).then(|| rng.random_range(0..5))).collect(),
        domains,
        origin: (0..n).collect(),
    };
    for lambda in [0.0, 1.0, 2.0] {
        let r = grl_equivalence_check(&net, &batch, lambda)?;
        println!(
            "lambda {lambda}: {} shared parameters, max deviation {:.2e}",
            r.n_params, r.max_abs_deviation
        );
    }
    Ok(())
}
