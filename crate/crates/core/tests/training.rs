mod oracles;

use std::sync::Arc;

use icudg_core::features::{FeatureTensor, N_FEATURES};
use icudg_core::labels::{build_label_track, Task};
use icudg_core::objectives::Objective;
use icudg_core::training::{draw_configs, train, validation_loss, DomainData, Sample, SearchSpace, TrainConfig};
use icudg_core::StayStatic;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// A domain whose label depends on the first feature.
fn domain(name: &str, n: usize, seed: u64) -> DomainData {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let samples = (0..n)
        .map(|i| {
            let id = format!("{name}{i}");
            let hours = rng.random_range(8..20);
            let signal: f64 = rng.random_range(-1.0..1.0);
            let data: Vec<f32> =
                (0..hours * N_FEATURES).map(|k| if k % N_FEATURES == 0 { signal as f32 } else { rng.random_range(-0.5f32..0.5) }).collect();
            let stay = StayStatic::new(id.clone(), name, hours as f64);
            let onset = (signal + rng.random_range(-0.5..0.5) > 0.3).then_some(7.0);
            let track = build_label_track(&stay, Task::Aki, onset);
            Sample::new(Arc::new(FeatureTensor { stay_id: id, hours, data }), &track).unwrap()
        })
        .collect();
    DomainData::new(name, samples)
}

fn small(objective: Objective) -> TrainConfig {
    TrainConfig {
        hidden_dim: 4,
        batch_size: 8,
        max_epochs: 8,
        patience: 3,
        learning_rate: 0.01,
        dropout: 0.2,
        seed: 11,
        objective,
        ..TrainConfig::default()
    }
}

#[test]
fn training_is_bitwise_reproducible() {
    let tr = [domain("a", 24, 1), domain("b", 24, 2)];
    let val = [domain("va", 10, 3)];
    for o in Objective::ALL {
        let a = train(&small(o), &tr, &val).unwrap();
        let b = train(&small(o), &tr, &val).unwrap();
        let bits = |r: &icudg_core::training::TrainResult| -> Vec<u64> {
            r.history.iter().flat_map(|e| [e.train_loss.to_bits(), e.val_loss.to_bits()]).collect()
        };
        assert_eq!(bits(&a), bits(&b), "{o}");
        assert_eq!(a.model, b.model, "{o}");
    }
}

#[test]
fn returned_parameters_achieve_the_lowest_validation_loss() {
    let tr = [domain("a", 30, 4)];
    let val = [domain("va", 12, 5)];
    for seed in 0..3 {
        let cfg = TrainConfig { seed, ..small(Objective::Erm) };
        let r = train(&cfg, &tr, &val).unwrap();
        let min = r.history.iter().map(|e| e.val_loss).fold(f64::INFINITY, f64::min);
        assert_eq!(r.best_val_loss, min);
        assert_eq!(r.history[r.best_epoch - 1].val_loss, min);
        assert_eq!(validation_loss(&r.model, &val, cfg.domain_weighting).unwrap(), min);
    }
}

proptest! {
    #![proptest_config(oracles::config(8))]

    #[test]
    fn search_draws_stay_inside_the_space(seed in any::<u64>()) {
        let space = SearchSpace::default();
        let draws = draw_configs(&space, &TrainConfig::default(), 1000, seed).unwrap();
        let within = |x: f64, (lo, hi): (f64, f64)| x >= lo - 1e-12 && x <= hi + 1e-12;
        for c in &draws {
            prop_assert!(within(c.learning_rate.ln(), space.ln_learning_rate));
            prop_assert!(space.weight_decay.contains(&c.weight_decay));
            prop_assert!(space.dropout.contains(&c.dropout));
            prop_assert!(space.batch_size.contains(&c.batch_size));
            prop_assert!(space.hidden_dim.contains(&c.hidden_dim));
            prop_assert!((space.layers.0..=space.layers.1).contains(&c.layers));
            let p = &c.penalties;
            prop_assert!(within(p.coral_gamma.log10(), space.log10_coral_gamma));
            prop_assert!(within(p.vrex_lambda.log10(), space.log10_vrex_lambda));
            prop_assert!(within(p.fishr_lambda.log10(), space.log10_fishr_lambda));
            prop_assert!(within(p.mldg_beta.log10(), space.log10_mldg_beta));
            prop_assert!(within(p.groupdro_eta.log10(), space.log10_groupdro_eta));
            let warm = (10f64.powf(space.log10_warmup.0).round(), 10f64.powf(space.log10_warmup.1).round());
            prop_assert!(within(p.vrex_warmup as f64, warm) && within(p.fishr_warmup as f64, warm));
            prop_assert!(space.mldg_n_meta_test.contains(&p.mldg_n_meta_test));
            prop_assert!(c.validate().is_ok());
        }
    }
}
