mod common;

use turbonet::channel::{ModScheme, Modulation};
use turbonet::net::{forward, init_weights, WeightVariant};
use turbonet::training::{
    batch_gradients, evaluate, generate_dataset, train_early_stopping, Sample, TrainConfig,
};
use turbonet::trellis::{Rate, TurboCode};

fn bpsk() -> ModScheme {
    ModScheme::new(Modulation::Bpsk)
}

fn small_config(variant: WeightVariant, batch: usize, epochs: usize) -> TrainConfig {
    let mut c = TrainConfig::defaults(variant);
    c.batch_size = batch;
    c.epochs_max = epochs;
    c
}

#[test]
fn dataset_is_a_function_of_the_seed() {
    let code = common::code(40, Rate::OneHalf);
    let a = generate_dataset(30, &code, &bpsk(), 1.0, 6, 5).unwrap();
    let b = generate_dataset(30, &code, &bpsk(), 1.0, 6, 5).unwrap();
    let c = generate_dataset(30, &code, &bpsk(), 1.0, 6, 6).unwrap();
    assert_eq!(a, b);
    assert_ne!(a, c);
    assert!(generate_dataset(0, &code, &bpsk(), 1.0, 6, 5).is_err());
}

#[test]
fn noiseless_targets_carry_the_sign_of_the_bits() {
    let code = common::code(40, Rate::OneThird);
    for s in generate_dataset(20, &code, &ModScheme::new(Modulation::Qam16), f64::INFINITY, 6, 2).unwrap() {
        for (l, &b) in s.target_llrs.iter().zip(&s.info_bits) {
            assert_eq!(*l > 0.0, b == 1, "{l} for bit {b}");
        }
    }
}

fn fixed_point_dataset(code: &TurboCode, variant: WeightVariant) -> Vec<Sample> {
    let w = init_weights(code.k(), 3, variant).unwrap();
    generate_dataset(40, code, &bpsk(), 0.5, 6, 8)
        .unwrap()
        .into_iter()
        .map(|mut s| {
            s.target_llrs = forward(&s.frame, &w, code, false).unwrap().posterior;
            s
        })
        .collect()
}

#[test]
fn untrained_outputs_as_targets_give_zero_gradient() {
    let code = common::code(40, Rate::OneThird);
    for variant in WeightVariant::ALL {
        let data = fixed_point_dataset(&code, variant);
        let w = init_weights(40, 3, variant).unwrap();
        let refs: Vec<&Sample> = data.iter().collect();
        let (loss, g) = batch_gradients(&refs, &w, &code).unwrap();
        assert_eq!(loss, 0.0);
        assert_eq!(g.max_abs(), 0.0);
        let out = train_early_stopping(&data, &code, &small_config(variant, 10, 3)).unwrap();
        assert_eq!(out.best_epoch, 0);
        assert_eq!(out.weights.to_flat(), w.to_flat());
    }
}

#[test]
fn returned_weights_hold_the_best_validation_ber() {
    let code = common::code(40, Rate::OneThird);
    let data = generate_dataset(2000, &code, &bpsk(), 0.0, 6, 4).unwrap();
    let config = small_config(WeightVariant::ElwOnly, 100, 4);
    let out = train_early_stopping(&data, &code, &config).unwrap();
    let best = out.history.iter().map(|h| h.validation_ber).fold(f64::INFINITY, f64::min);
    assert_eq!(out.history[out.best_epoch].validation_ber, best);
    assert!(out.history[0].stored);
    // stored flags mark strict improvements only
    let mut running = f64::INFINITY;
    for h in &out.history {
        assert_eq!(h.stored, h.validation_ber < running, "epoch {}", h.epoch);
        running = running.min(h.validation_ber);
    }
    // stop rule: only the last epoch may be worse than its predecessor
    for w in out.history.windows(2).take(out.history.len().saturating_sub(2)) {
        assert!(w[1].validation_ber <= w[0].validation_ber);
    }
    let validation = &data[config.train_len(data.len()).unwrap()..];
    assert_eq!(evaluate(validation, &out.weights, &code).unwrap().0, best);
    let info = out.weights.meta.training.as_ref().unwrap();
    assert_eq!(info.epochs, out.best_epoch);
    assert_eq!(info.target_t, 6);
    assert_eq!(out.weights.meta.rate, Some(Rate::OneThird));
}

#[test]
fn training_is_independent_of_the_thread_count() {
    let code = common::code(40, Rate::OneHalf);
    let data = generate_dataset(400, &code, &bpsk(), 0.5, 6, 12).unwrap();
    let config = small_config(WeightVariant::GwElw, 50, 2);
    let run = |threads: usize| {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .unwrap()
            .install(|| train_early_stopping(&data, &code, &config).unwrap())
    };
    let (a, b) = (run(1), run(3));
    assert_eq!(a.weights.to_flat(), b.weights.to_flat());
    assert_eq!(a.history, b.history);
}

#[test]
fn first_epoch_lowers_the_loss() {
    let code = common::code(64, Rate::OneHalf);
    let data = generate_dataset(3000, &code, &bpsk(), 0.5, 6, 30).unwrap();
    let out = train_early_stopping(&data, &code, &small_config(WeightVariant::ElwOnly, 100, 1)).unwrap();
    assert!(out.history[1].validation_loss < out.history[0].validation_loss, "{:?}", out.history);
}

#[test]
fn bad_splits_are_rejected() {
    let code = common::code(40, Rate::OneThird);
    let data = generate_dataset(8, &code, &bpsk(), 1.0, 6, 1).unwrap();
    assert!(train_early_stopping(&data[..1], &code, &small_config(WeightVariant::ElwOnly, 1, 1)).is_err());
    assert!(train_early_stopping(&data, &code, &small_config(WeightVariant::ElwOnly, 10, 1)).is_err());
    let mut c = small_config(WeightVariant::ElwOnly, 2, 1);
    c.split_ratio = (0, 0);
    assert!(train_early_stopping(&data, &code, &c).is_err());
}
