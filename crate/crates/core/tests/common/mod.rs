#![allow(dead_code)]

use rand::Rng;
use turbonet::channel::{derive_rng, ModScheme, Modulation};
use turbonet::net::{forward, init_weights, loss, loss_and_gradients, WeightSet, WeightVariant};
use turbonet::siso::{turbo_decode, SisoMode};
use turbonet::frame::LlrFrame;
use turbonet::interleaver::Interleaver;
use turbonet::training::transmit;
use turbonet::trellis::{CodeConfig, Rate, TurboCode};

pub fn code(k: usize, rate: Rate) -> TurboCode {
    TurboCode::new(CodeConfig::new(k, rate).unwrap(), Interleaver::auto(k).unwrap()).unwrap()
}

/// `n` noisy frames at `ebno_db`, reproducible from `seed`.
pub fn frames(code: &TurboCode, modulation: Modulation, ebno_db: f64, n: usize, seed: u64) -> Vec<(Vec<u8>, LlrFrame)> {
    let scheme = ModScheme::new(modulation);
    (0..n)
        .map(|i| {
            let mut rng = derive_rng(seed, 0, i as u64);
            transmit(code, &scheme, ebno_db, &mut rng).unwrap()
        })
        .collect()
}

pub fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

pub fn perturbed(k: usize, m: usize, variant: WeightVariant, seed: u64, spread: f64) -> WeightSet {
    let mut w = init_weights(k, m, variant).unwrap();
    let mut rng = derive_rng(seed, 1, 0);
    let flat: Vec<f64> = w.to_flat().iter().map(|x| x + rng.random_range(-spread..spread)).collect();
    w.set_flat(&flat).unwrap();
    w
}

/// Central differences of the loss against the analytic gradient.
pub fn gradient_check(variant: WeightVariant, seed: u64, per_frame: usize, frames_n: usize) -> (f64, usize) {
    let code = code(40, Rate::OneThird);
    let w = perturbed(40, 3, variant, seed, 0.2);
    let flat = w.to_flat();
    let mut rng = derive_rng(seed, 2, 0);
    let mut worst: f64 = 0.0;
    let mut checked = 0;
    for (_, f) in frames(&code, Modulation::Bpsk, 1.0, frames_n, seed) {
        let target = turbo_decode(&f, &code, 6, SisoMode::Exact).unwrap().posterior;
        let base = forward(&f, &w, &code, true).unwrap();
        let tape = base.tape().unwrap();
        if tape.min_margin() < 1e-6 {
            continue;
        }
        let (_, g) = loss_and_gradients(&f, &target, &w, &code).unwrap();
        let g = g.to_flat();
        for _ in 0..per_frame {
            let i = rng.random_range(0..flat.len());
            let h = 1e-4;
            let eval = |d: f64| {
                let mut ff = flat.clone();
                ff[i] += d;
                let mut ww = w.clone();
                ww.set_flat(&ff).unwrap();
                let o = forward(&f, &ww, &code, true).unwrap();
                let same = o.tape().unwrap().same_decisions(tape);
                (loss(&o.posterior, &target).unwrap(), same)
            };
            let ((lp, sp), (lm, sm)) = (eval(h), eval(-h));
            if !(sp && sm) {
                continue;
            }
            let fd = (lp - lm) / (2.0 * h);
            worst = worst.max((fd - g[i]).abs() / fd.abs().max(g[i].abs()).max(1e-6));
            checked += 1;
        }
    }
    (worst, checked)
}

