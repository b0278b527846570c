//! Saves a trained model, inspects the container, and reloads it bit-exactly.
//!
//! Run with `cargo run --example checkpoint_roundtrip`.

use starplus::cli::gradcheck::{self, Case};
use starplus::{AdamConfig, Architecture, Container, Error, FusionKind, Mode, Model, NormKind};

fn main() -> starplus::Result<()> {
    let case = Case {
        architecture: Architecture::StarPlus,
        fusion: Some(FusionKind::gate()),
        norm: NormKind::Batch,
    };
    let cfg = gradcheck::small_config(&case, 3, 4);
    let mut model = Model::new(cfg.clone())?;
    for step in 0..25 {
        model.train_step(&gradcheck::small_batch(&cfg, 12, step), &AdamConfig::default())?;
    }
    model.set_mode(Mode::Inference);

    let dir = tempfile::tempdir().map_err(|e| Error::io("temporary directory", e))?;
    let path = dir.path().join("checkpoint.bin");
    model.save(&path)?;

    let container = Container::load(&path)?;
    println!("kind = {}, {} tensors", container.kind, container.tensors.len());
    println!("{}", toml::to_string(&container.meta).unwrap_or_default());
    for (name, m) in container.tensors.iter().take(6) {
        println!("  {name:<28} {:?}", m.shape());
    }

    let mut loaded = Model::load(&path, Some(&cfg))?;
    let batch = gradcheck::small_batch(&cfg, 12, 999);
    let a = model.predict(&batch)?;
    let b = loaded.predict(&batch)?;
    let identical = a.as_slice().iter().zip(b.as_slice()).all(|(x, y)| x.to_bits() == y.to_bits());
    println!("predictions identical after reload: {identical}");

    // A checkpoint only loads against the config it was trained with.
    let mut other = cfg.clone();
    other.num_domains = 4;
    if let Err(e) = Model::load(&path, Some(&other)) {
        println!("mismatched config: {e} (exit code {})", e.exit_code());
    }
    Ok(())
}
