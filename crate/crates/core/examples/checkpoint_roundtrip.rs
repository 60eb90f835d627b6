//! Saves an adapted network with its domain head and reloads it bit for bit.

use grl_asr::grl::{attach_domain_head, build_main_network, Checkpoint};
use grl_asr::nn::Matrix;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let net = build_main_network(20, 6, &[16, 16], 0)?;
    let net = attach_domain_head(net, 1, &[8], 0.01, 9)?;
    let path = std::env::temp_dir().join("grl-asr-checkpoint.json");
    Checkpoint::new(net.clone(), 4).save(&path)?;
    let back = Checkpoint::load(&path)?;

    let x = Matrix::from_vec(3, 20, (0..60).map(|i| (i as f64 * 0.37).sin()).collect())?;
    let a = net.predict(&x)?;
    let b = back.network.predict(&x)?;
    let same = a.data().iter().zip(b.data()).all(|(p, q)| p.to_bits() == q.to_bits());
    println!(
        "{} -> {} bytes, epoch {}, feature layer {:?}, identical outputs: {same}",
        path.display(),
        std::fs::metadata(&path)?.len(),
        back.epoch,
        back.network.feature_layer_index()
    );
    Ok(())
}
