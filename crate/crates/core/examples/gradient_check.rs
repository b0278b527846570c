//! Verifies hand-written gradients with central differences: first a single
//! dense layer under logistic loss, then every model configuration.
//!
//! Run with `cargo run --release --example gradient_check`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use starplus::cli::gradcheck::{self, Fault, GradcheckSetup};
use starplus::nn::{bce_with_logits, grad_check, Activation, DenseLayer, GradCheckOptions};
use starplus::{Matrix, ParamStore};

fn main() -> starplus::Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut store = ParamStore::new();
    let mut layer = DenseLayer::new(&mut store, &mut rng, "dense", 5, 1, Activation::Identity)?;
    let x = Matrix::from_vec(8, 5, (0..40).map(|_| rng.random_range(-1.0..1.0)).collect())?;
    let y = Matrix::column(&[1.0, 0.0, 0.0, 1.0, 1.0, 0.0, 1.0, 0.0]);

    let logits = layer.forward(&store, &x)?;
    let out = bce_with_logits(&logits, &y)?;
    store.zero_grads();
    layer.backward(&mut store, &out.grad)?;

    let report = grad_check(
        &mut store,
        |s| {
            let mut probe = layer.clone();
            Ok(bce_with_logits(&probe.forward(s, &x)?, &y)?.loss)
        },
        GradCheckOptions::default(),
    )?;
    println!("dense + logistic loss: {report}");

    // The full models, including a deliberately broken backward pass.
    let setup = GradcheckSetup::default();
    for case in gradcheck::all_cases() {
        println!("{:<34} {}", case.to_string(), gradcheck::check_case(&case, &setup, Fault::None)?);
    }
    let case = &gradcheck::all_cases()[1];
    println!("sign-flipped {case}: {}", gradcheck::check_case(case, &setup, Fault::SignFlip)?);
    Ok(())
}
