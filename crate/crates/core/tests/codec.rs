mod common;

use proptest::prelude::*;
use turbonet::channel::{
    apply_awgn, demap_llr, derive_rng, ebno_to_sigma2, modulate, noiseless_llrs, ModScheme, Modulation, Symbol,
};
use turbonet::interleaver::{qpp_lengths, Interleaver, InterleaverKind};
use turbonet::siso::{turbo_decode, SisoMode};
use turbonet::trellis::{rate_match, rsc_encode, turbo_encode, CodeConfig, Rate, TrellisTable, TurboCode};

fn bits(n: usize) -> impl Strategy<Value = Vec<u8>> {
    prop::collection::vec(0u8..2, n)
}

#[test]
fn codeword_lengths() {
    for (k, rate, n) in [(40, Rate::OneThird, 132), (40, Rate::OneHalf, 92), (64, Rate::OneHalf, 140)] {
        let code = common::code(k, rate);
        assert_eq!(code.config.codeword_len(), n);
        assert_eq!(code.encode(&vec![1; k]).unwrap().len(), n);
    }
}

#[test]
fn encoder_rejects_bad_input() {
    let code = common::code(40, Rate::OneThird);
    assert!(code.encode(&[0; 39]).is_err());
    let mut info = vec![0; 40];
    info[5] = 2;
    assert!(code.encode(&info).is_err());
}

#[test]
fn all_zero_block_encodes_to_all_zero() {
    let code = common::code(48, Rate::OneHalf);
    assert!(code.encode(&[0; 48]).unwrap().iter().all(|&b| b == 0));
}

#[test]
fn random_interleaver_for_lengths_outside_the_table() {
    let il = Interleaver::auto(100).unwrap();
    let again = Interleaver::auto(100).unwrap();
    assert_eq!(il.pi(), again.pi());
    assert_eq!(il.kind(), InterleaverKind::SeededRandom);
    assert_eq!(Interleaver::auto(40).unwrap().kind(), InterleaverKind::Qpp);
    let code = TurboCode::new(CodeConfig::new(100, Rate::OneThird).unwrap(), il).unwrap();
    assert_eq!(code.config.codeword_len(), 312);
}

#[test]
fn awgn_variance_matches_the_noise_spec() {
    let sigma2 = ebno_to_sigma2(1.0, 1.0 / 3.0, 2);
    let n = 200_000;
    let tx = vec![Symbol::new(0.0, 0.0); n];
    let rx = apply_awgn(&tx, Modulation::Qpsk, sigma2, &mut derive_rng(3, 0, 0));
    let var_re = rx.iter().map(|s| s.re * s.re).sum::<f64>() / n as f64;
    let var_im = rx.iter().map(|s| s.im * s.im).sum::<f64>() / n as f64;
    assert!((var_re / sigma2 - 1.0).abs() < 0.02, "{var_re} vs {sigma2}");
    assert!((var_im / sigma2 - 1.0).abs() < 0.02, "{var_im} vs {sigma2}");
    let bpsk = apply_awgn(&tx, Modulation::Bpsk, sigma2, &mut derive_rng(3, 0, 0));
    assert!(bpsk.iter().all(|s| s.im == 0.0));
}

#[test]
fn channel_is_reproducible_per_stream() {
    let code = common::code(40, Rate::OneThird);
    let a = common::frames(&code, Modulation::Qam16, 2.0, 5, 9);
    let b = common::frames(&code, Modulation::Qam16, 2.0, 5, 9);
    let c = common::frames(&code, Modulation::Qam16, 2.0, 5, 10);
    assert_eq!(a, b);
    assert_ne!(a, c);
}

#[test]
fn decoders_improve_on_the_uncoded_channel() {
    let code = common::code(40, Rate::OneThird);
    let frames = common::frames(&code, Modulation::Bpsk, 2.0, 400, 21);
    let mut uncoded = 0;
    let mut decoded = [0; 2];
    for (info, f) in &frames {
        uncoded += f.ys.iter().zip(info).filter(|(l, &b)| ((**l >= 0.0) as u8) != b).count();
        for (slot, mode) in [SisoMode::MaxOnly, SisoMode::Exact].into_iter().enumerate() {
            let out = turbo_decode(f, &code, 6, mode).unwrap();
            decoded[slot] += out.bits.iter().zip(info).filter(|(a, b)| a != b).count();
        }
    }
    assert!(decoded[0] * 5 < uncoded, "{decoded:?} vs {uncoded}");
    assert!(decoded[1] <= decoded[0], "{decoded:?}");
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn interleaver_round_trip(idx in 0usize..100, seed in any::<u64>(), k in 8usize..300) {
        let qpp: Vec<usize> = qpp_lengths().collect();
        for il in [Interleaver::qpp(qpp[idx % qpp.len()]).unwrap(), Interleaver::seeded_random(k, seed).unwrap()] {
            let x: Vec<usize> = (0..il.len()).map(|i| i * 7 + 1).collect();
            let y = il.interleave(&x).unwrap();
            for (i, &p) in il.pi().iter().enumerate() {
                prop_assert_eq!(y[i], x[p]);
            }
            prop_assert_eq!(il.deinterleave(&y).unwrap(), x);
        }
    }

    #[test]
    fn both_encoders_terminate(info in bits(40)) {
        let t = TrellisTable::new();
        prop_assert_eq!(rsc_encode(&info, &t).unwrap().final_state, 0);
        let il = Interleaver::auto(40).unwrap();
        prop_assert_eq!(rsc_encode(&il.interleave(&info).unwrap(), &t).unwrap().final_state, 0);
    }

    #[test]
    fn codeword_is_systematic_and_linear(a in bits(40), b in bits(40)) {
        let t = TrellisTable::new();
        let il = Interleaver::auto(40).unwrap();
        let ca = turbo_encode(&a, &il, &t).unwrap().to_bits();
        let cb = turbo_encode(&b, &il, &t).unwrap().to_bits();
        let sum: Vec<u8> = a.iter().zip(&b).map(|(x, y)| x ^ y).collect();
        let cs = turbo_encode(&sum, &il, &t).unwrap();
        prop_assert_eq!(&cs.systematic, &sum);
        let xor: Vec<u8> = ca.iter().zip(&cb).map(|(x, y)| x ^ y).collect();
        prop_assert_eq!(cs.to_bits(), xor);
    }

    #[test]
    fn puncturing_keeps_alternate_parities(info in bits(40)) {
        let t = TrellisTable::new();
        let il = Interleaver::auto(40).unwrap();
        let cw = turbo_encode(&info, &il, &t).unwrap();
        let out = rate_match(&cw, Rate::OneHalf);
        prop_assert_eq!(&out[..40], &info[..]);
        for i in 0..40 {
            let want = if i % 2 == 0 { cw.parity1[i] } else { cw.parity2[i] };
            prop_assert_eq!(out[40 + i], want);
        }
        prop_assert_eq!(&rate_match(&cw, Rate::OneThird), &cw.to_bits());
    }

    #[test]
    fn noiseless_round_trip(info in bits(40), half in any::<bool>(), exact in any::<bool>()) {
        let code = common::code(40, if half { Rate::OneHalf } else { Rate::OneThird });
        let frame = code.frame(&noiseless_llrs(&code.encode(&info).unwrap(), 10.0)).unwrap();
        let mode = if exact { SisoMode::Exact } else { SisoMode::MaxOnly };
        prop_assert_eq!(turbo_decode(&frame, &code, 3, mode).unwrap().bits, info);
    }

    #[test]
    fn demapper_signs_match_bits_without_noise(word in bits(48), which in 0usize..3) {
        let m = [Modulation::Bpsk, Modulation::Qpsk, Modulation::Qam16][which];
        let scheme = ModScheme::new(m);
        let tx = modulate(&word, &scheme);
        let llrs = demap_llr(&tx.symbols, &scheme, 0.5).unwrap();
        prop_assert_eq!(llrs.len(), word.len());
        for (l, &b) in llrs.iter().zip(&word) {
            prop_assert_eq!(*l > 0.0, b == 1);
        }
    }
}
