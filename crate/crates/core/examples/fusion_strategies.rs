//! Applies each fusion strategy to the same tower outputs.
//!
//! Run with `cargo run --example fusion_strategies`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use starplus::fusion::adaptive_weights;
use starplus::{Fusion, FusionKind, Matrix, ParamStore, TowerOutputs};

fn main() -> starplus::Result<()> {
    let (rows, k, num_domains) = (4, 3, 2);
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let random = |rng: &mut ChaCha8Rng| {
        Matrix::from_vec(rows, k, (0..rows * k).map(|_| rng.random_range(-1.0..1.0)).collect())
    };
    let towers = TowerOutputs {
        s_d: random(&mut rng)?,
        s_s: random(&mut rng)?,
        s_a: random(&mut rng)?,
    };
    let domains = [0, 1, 0, 1];

    for kind in FusionKind::all() {
        let mut store = ParamStore::new();
        let mut fusion = Fusion::new(&mut store, &mut rng, &kind, k, num_domains)?;
        let logits = fusion.forward(&store, &towers, &domains)?;
        println!("{:<13} logits {:?}", kind.label(), logits.as_slice());
        if let Some(c) = fusion.coefficients(&store, 0) {
            println!("{:<13} domain 0 coefficients (c_d, c_s, c_a) = {c:?}", "");
        }
        if matches!(kind, FusionKind::Gate { .. }) {
            let gates = fusion.gate_weights(&store, &domains)?;
            println!("{:<13} gate weights of row 0: {:?}", "", gates.row(0));
        }
    }

    // Adaptive add keeps its coefficients on the probability simplex for any raw weight.
    for w in [-6.0, -1.0, 0.0, 1.0, 6.0] {
        let (c_d, c_s, c_a) = adaptive_weights(w);
        println!("w = {w:>4}: c_d {c_d:.4} c_s {c_s:.4} c_a {c_a:.4} sum {}", c_d + c_s + c_a);
    }
    Ok(())
}
