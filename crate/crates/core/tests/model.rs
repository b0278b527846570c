//! Whole-model properties: gradients, routing, independence and checkpoints.

use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use starplus::cli::gradcheck::{self, Case, Fault, GradcheckSetup};
use starplus::model::DomainOwned;
use starplus::{AdamConfig, Architecture, Error, FusionKind, Matrix, Mode, Model, NormKind};

fn bits(m: &Matrix) -> Vec<u64> {
    m.as_slice().iter().map(|v| v.to_bits()).collect()
}

fn trained_model(case: &Case, steps: u64) -> Model {
    let cfg = gradcheck::small_config(case, 3, 21);
    let mut model = Model::new(cfg.clone()).unwrap();
    for s in 0..steps {
        model
            .train_step(&gradcheck::small_batch(&cfg, 8, s), &AdamConfig::default())
            .unwrap();
    }
    model
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn random_configurations_pass_the_gradient_check(
        case_index in 0usize..24,
        num_domains in 2usize..=6,
        seed in any::<u64>(),
    ) {
        let case = gradcheck::all_cases()[case_index].clone();
        let setup = GradcheckSetup { num_domains, seed, ..GradcheckSetup::default() };
        let report = gradcheck::check_case(&case, &setup, Fault::None).unwrap();
        prop_assert!(report.passed(), "{case}: {report}");
    }
}

#[test]
fn sign_flip_is_detected_for_every_combination() {
    for case in gradcheck::all_cases() {
        let report = gradcheck::check_case(&case, &GradcheckSetup::default(), Fault::SignFlip).unwrap();
        assert!(!report.passed(), "{case}");
    }
}

#[test]
fn shared_and_auxiliary_towers_learn_from_every_domain() {
    for case in gradcheck::all_cases() {
        let cfg = gradcheck::small_config(&case, 4, 2);
        for d in 0..4 {
            let mut model = Model::new(cfg.clone()).unwrap();
            let mut batch = gradcheck::small_batch(&cfg, 8, 40 + d as u64);
            batch.domains = vec![d; 8];
            model.loss_and_grad(&batch).unwrap();
            let nonzero = model
                .shared_params()
                .iter()
                .filter(|&&p| model.store().grad(p).as_slice().iter().any(|g| *g != 0.0))
                .count();
            // Generic position: at most a dead output bias path may stay silent.
            assert!(nonzero * 2 > model.shared_params().len(), "{case} domain {d}: {nonzero} shared tensors moved");
            if let Some(aux) = model.aux_tower() {
                let moved = aux
                    .mlp
                    .param_ids()
                    .iter()
                    .any(|&p| model.store().grad(p).as_slice().iter().any(|g| *g != 0.0));
                assert!(moved, "{case}: auxiliary tower received no gradient");
            }
        }
    }
}

#[test]
fn domain_tower_perturbation_leaves_shared_and_aux_outputs_unchanged() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    for fusion in FusionKind::all() {
        let case = Case {
            architecture: Architecture::StarPlus,
            fusion: Some(fusion),
            norm: NormKind::Layer,
        };
        let cfg = gradcheck::small_config(&case, 3, 3);
        let mut model = Model::new(cfg.clone()).unwrap();
        let x = Matrix::from_vec(10, cfg.input_dim(), (0..10 * cfg.input_dim()).map(|_| rng.sample(StandardNormal)).collect())
            .unwrap();
        let domains: Vec<usize> = (0..10).map(|i| i % 3).collect();
        let before = model.star_plus_forward(&x, &domains).unwrap();
        for d in 0..3 {
            let ids = model.domain_towers().unwrap()[d].param_ids();
            for id in ids {
                let noisy = model.store().value(id).map(|v| v + 0.5);
                *model.store_mut().value_mut(id) = noisy;
            }
            let after = model.star_plus_forward(&x, &domains).unwrap();
            assert_eq!(bits(&before.s_s), bits(&after.s_s));
            assert_eq!(bits(&before.s_a), bits(&after.s_a));
            let rows: Vec<usize> = (0..10).filter(|&i| domains[i] == d).collect();
            assert_ne!(bits(&before.s_d.gather_rows(&rows)), bits(&after.s_d.gather_rows(&rows)));
        }
    }
}

#[test]
fn domain_owned_rows_stay_put_under_foreign_training() {
    // Adam is lazy: parameters of absent domains keep their values bit-exactly.
    let case = Case {
        architecture: Architecture::StarPlus,
        fusion: Some(FusionKind::AdaptiveAdd),
        norm: NormKind::Partition,
    };
    let cfg = gradcheck::small_config(&case, 3, 5);
    let mut model = Model::new(cfg.clone()).unwrap();
    let snapshot = |m: &Model| -> Vec<u64> {
        m.domain_owned(2)
            .iter()
            .flat_map(|o| match *o {
                DomainOwned::Whole(p) => bits(m.store().value(p)),
                DomainOwned::Row(p, r) => m.store().value(p).row(r).iter().map(|v| v.to_bits()).collect(),
            })
            .collect()
    };
    let before = snapshot(&model);
    for s in 0..20 {
        let mut batch = gradcheck::small_batch(&cfg, 8, s);
        batch.domains = (0..8).map(|i| i / 4).collect();
        model.train_step(&batch, &AdamConfig::default()).unwrap();
    }
    assert_eq!(before, snapshot(&model));
}

#[test]
fn checkpoint_round_trip_is_bit_exact() {
    let dir = tempfile::tempdir().unwrap();
    for case in gradcheck::all_cases().into_iter().step_by(5) {
        let mut model = trained_model(&case, 5);
        model.set_mode(Mode::Inference);
        let path = dir.path().join("m.bin");
        model.save(&path).unwrap();
        let mut loaded = Model::load(&path, Some(model.config())).unwrap();
        assert_eq!(loaded.mode(), Mode::Inference);
        for ((_, a), (_, b)) in model.store().iter().zip(loaded.store().iter()) {
            assert_eq!(a.name, b.name);
            assert_eq!(bits(&a.value), bits(&b.value), "{}", a.name);
            assert_eq!(bits(&a.m1), bits(&b.m1));
            assert_eq!(bits(&a.m2), bits(&b.m2));
            assert_eq!(a.step_count, b.step_count);
        }
        let batch = gradcheck::small_batch(model.config(), 8, 99);
        assert_eq!(bits(&model.predict(&batch).unwrap()), bits(&loaded.predict(&batch).unwrap()), "{case}");
        // Saving the loaded model reproduces the file.
        let again = dir.path().join("again.bin");
        loaded.save(&again).unwrap();
        assert_eq!(std::fs::read(&path).unwrap(), std::fs::read(&again).unwrap());
    }
}

#[test]
fn checkpoint_for_another_config_is_a_schema_error() {
    let dir = tempfile::tempdir().unwrap();
    let case = Case {
        architecture: Architecture::Star,
        fusion: None,
        norm: NormKind::Partition,
    };
    let model = trained_model(&case, 1);
    let path = dir.path().join("m.bin");
    model.save(&path).unwrap();
    let mut other = model.config().clone();
    other.tower_widths = vec![7];
    other.num_domains = 4;
    match Model::load(&path, Some(&other)) {
        Err(Error::SchemaMismatch { expected, found }) => {
            assert!(expected.iter().any(|e| e.contains("num_domains")), "{expected:?}");
            assert_eq!(expected.len(), found.len());
        }
        other => panic!("expected a schema mismatch, got {:?}", other.map(|_| ())),
    }
}

#[test]
fn truncated_checkpoint_is_a_format_error() {
    let dir = tempfile::tempdir().unwrap();
    let model = trained_model(&gradcheck::all_cases()[2], 1);
    let path = dir.path().join("m.bin");
    model.save(&path).unwrap();
    let bytes = std::fs::read(&path).unwrap();
    std::fs::write(&path, &bytes[..bytes.len() - 9]).unwrap();
    let err = Model::load(&path, None).map(|_| ()).unwrap_err();
    assert!(matches!(err, Error::Format { .. }), "{err}");
    assert_eq!(err.exit_code(), 2);
}

#[test]
fn non_finite_loss_aborts_without_updating() {
    let case = Case {
        architecture: Architecture::StarPlus,
        fusion: Some(FusionKind::gate()),
        norm: NormKind::None,
    };
    let cfg = gradcheck::small_config(&case, 3, 1);
    let mut model = Model::new(cfg.clone()).unwrap();
    let emb = model.embeddings()[0].table();
    model.store_mut().value_mut(emb)[(0, 0)] = f64::INFINITY;
    let snapshot: Vec<Vec<u64>> = model.store().iter().map(|(_, p)| bits(&p.value)).collect();
    let mut batch = gradcheck::small_batch(&cfg, 8, 0);
    batch.feature_ids[0] = vec![0; 8];
    let err = model.train_step(&batch, &AdamConfig::default()).unwrap_err();
    assert!(matches!(err, Error::Numeric(_)), "{err}");
    assert!(err.to_string().contains("grad_norms"));
    let after: Vec<Vec<u64>> = model.store().iter().map(|(_, p)| bits(&p.value)).collect();
    assert_eq!(snapshot, after);
}

#[test]
fn training_requires_two_rows_per_normalized_group() {
    let case = Case {
        architecture: Architecture::Star,
        fusion: None,
        norm: NormKind::Partition,
    };
    let cfg = gradcheck::small_config(&case, 3, 1);
    let mut model = Model::new(cfg.clone()).unwrap();
    let mut batch = gradcheck::small_batch(&cfg, 5, 0);
    batch.domains = vec![0, 0, 1, 1, 2];
    assert!(matches!(model.loss_and_grad(&batch), Err(Error::DegenerateBatch { .. })));
    // Inference uses running statistics, so a lone row is fine.
    model.set_mode(Mode::Inference);
    assert!(model.predict(&batch).is_ok());
}

#[test]
fn out_of_range_domain_is_an_index_error() {
    let cfg = gradcheck::small_config(&gradcheck::all_cases()[1], 3, 1);
    let mut model = Model::new(cfg.clone()).unwrap();
    let mut batch = gradcheck::small_batch(&cfg, 4, 0);
    batch.domains[3] = 3;
    assert!(matches!(model.forward(&batch), Err(Error::Index { .. })));
}
