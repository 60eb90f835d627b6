//! Adam on an ill-conditioned quadratic, and the new-bob schedule reacting to
//! a validation curve that levels off.

use grl_asr::nn::Matrix;
use grl_asr::optim::{Adam, AdamConfig, NewBobConfig, NewBobState};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let scales = [1.0, 10.0, 100.0];
    let mut x = Matrix::from_rows(&[vec![1.0, 1.0, 1.0]])?;
    let mut adam = Adam::new(AdamConfig { learning_rate: 0.05, ..AdamConfig::default() });
    for step in 0..=300 {
        let g = Matrix::from_rows(&[x.data().iter().zip(scales).map(|(v, s)| s * v).collect()])?;
        if step % 100 == 0 {
            let loss: f64 = x.data().iter().zip(scales).map(|(v, s)| 0.5 * s * v * v).sum();
            println!("step {step:>3}: loss {loss:.3e}");
        }
        adam.step("x", &mut [&mut x], &[&g])?;
    }

    let mut nb = NewBobState::new(NewBobConfig { initial_lr: 1e-3, ..NewBobConfig::default() });
    for (epoch, acc) in [0.50, 0.60, 0.65, 0.652, 0.653, 0.6531, 0.6532].into_iter().enumerate() {
        let (lr, stop) = nb.step(acc);
        println!("epoch {epoch}: valid {acc:.4} -> lr {lr:.2e}{}", if stop { ", stop" } else { "" });
        if stop {
            break;
        }
    }
    Ok(())
}
