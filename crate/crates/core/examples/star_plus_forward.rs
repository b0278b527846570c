//! Builds a Star+ model and inspects the three tower outputs before fusion.
//!
//! Run with `cargo run --example star_plus_forward`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use starplus::{Architecture, Batch, FieldSpec, FusionKind, Matrix, Model, ModelConfig, NormKind, NormOptions};

fn main() -> starplus::Result<()> {
    let cfg = ModelConfig {
        num_domains: 3,
        fields: vec![
            FieldSpec { name: "user".into(), vocab_size: 50, embedding_dim: 4 },
            FieldSpec { name: "item".into(), vocab_size: 80, embedding_dim: 4 },
        ],
        architecture: Architecture::StarPlus,
        tower_widths: vec![16, 8],
        tower_output_dim: 4,
        domain_embedding_dim: 2,
        norm: NormKind::Layer,
        norm_options: NormOptions::default(),
        fusion: Some(FusionKind::AdaptiveAdd),
        seed: 1,
    };
    let mut model = Model::new(cfg.clone())?;
    println!("{} parameter tensors, {} entries", model.store().len(), model.store().num_entries());

    // The towers read the concatenated embeddings; feed them directly.
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let rows = 6;
    let x = Matrix::from_vec(rows, cfg.input_dim(), (0..rows * cfg.input_dim()).map(|_| rng.random_range(-1.0..1.0)).collect())?;
    let domains = vec![0, 0, 1, 1, 2, 2];
    let towers = model.star_plus_forward(&x, &domains)?;
    for (r, d) in domains.iter().enumerate() {
        println!(
            "row {r} domain {d}: s_d {:?}  s_s {:?}  s_a {:?}",
            rounded(towers.s_d.row(r)),
            rounded(towers.s_s.row(r)),
            rounded(towers.s_a.row(r)),
        );
    }

    let batch = Batch {
        feature_ids: cfg.fields.iter().map(|f| (0..rows).map(|_| rng.random_range(0..f.vocab_size)).collect()).collect(),
        domains,
        labels: vec![0.0; rows],
    };
    let probs = model.predict(&batch)?;
    println!("click probabilities: {:?}", rounded(probs.as_slice()));
    Ok(())
}

fn rounded(v: &[f64]) -> Vec<f64> {
    v.iter().map(|x| (x * 1e4).round() / 1e4).collect()
}
