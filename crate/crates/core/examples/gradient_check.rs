//! Backpropagation against central differences for a small mixed stack.

use grl_asr::nn::{
    finite_diff_grad, flatten_grads, relative_error, Activation, LayerSpec, Matrix, Stack,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let specs = [
        LayerSpec::new(5, 8, Activation::Sigmoid),
        LayerSpec::new(8, 6, Activation::leaky_relu()),
        LayerSpec::new(6, 3, Activation::Softmax),
    ];
    let stack = Stack::init_seeded(&specs, 42)?;
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let x = Matrix::from_vec(4, 5, (0..20).map(|_| rng.random_range(-1.0..1.0)).collect())?;
    // Linear probe of the output: dL/dout is just the coefficient matrix.
    let coef = Matrix::from_vec(4, 3, (0..12).map(|_| rng.random_range(-1.0..1.0)).collect())?;

    let cache = stack.forward(&x)?;
    let analytic = flatten_grads(&stack.backward(&cache, &coef)?);
    let mut probe = stack.clone();
    let numeric = finite_diff_grad(
        |theta| {
            probe.set_flat_params(theta).expect("same length");
            let out = probe.predict(&x).expect("shapes fixed");
            out.data().iter().zip(coef.data()).map(|(a, b)| a * b).sum()
        },
        &stack.flat_params(),
        1e-5,
    )?;
    println!(
        "{} parameters, max relative error {:.2e}",
        analytic.len(),
        relative_error(&analytic, &numeric, 1e-6)
    );
    Ok(())
}
