mod common;

use turbonet::channel::{ModScheme, Modulation};
use turbonet::harness::*;
use turbonet::net::{init_weights, Family, WeightVariant};
use turbonet::trellis::Rate;

fn config(snr_db: Vec<f64>, frames: u64, max_errors: Option<u64>, workers: Option<usize>) -> SweepConfig {
    SweepConfig {
        snr_db,
        frames,
        max_errors,
        seed: 42,
        workers,
    }
}

fn decoders() -> Vec<Decoder> {
    vec![
        Decoder::max_log_map(3),
        Decoder::log_map(2),
        Decoder::net(common::perturbed(40, 2, WeightVariant::ElwOnly, 3, 0.1)),
    ]
}

#[test]
fn zero_frames_give_a_header_only_csv_body() {
    let code = common::code(40, Rate::OneThird);
    let recs = ber_sweep(&code, &ModScheme::new(Modulation::Bpsk), &decoders(), &config(vec![], 0, None, None)).unwrap();
    assert!(recs.is_empty());
    let csv = ber_csv("empty run", &recs);
    assert_eq!(csv, format!("# empty run\n{CSV_HEADER}\n"));
    let recs = ber_sweep(&code, &ModScheme::new(Modulation::Bpsk), &decoders(), &config(vec![1.0], 0, None, None)).unwrap();
    assert!(recs.iter().all(|r| r.frames == 0 && r.ber == 0.0));
}

#[test]
fn worker_count_does_not_change_results() {
    let code = common::code(40, Rate::OneHalf);
    let scheme = ModScheme::new(Modulation::Qam16);
    let run = |w| ber_sweep(&code, &scheme, &decoders(), &config(vec![2.0, 4.0], 1200, Some(30), Some(w))).unwrap();
    let one = run(1);
    assert_eq!(one, run(8));
    assert_eq!(ber_csv("x", &one), ber_csv("x", &run(3)));
    assert!(ber_sweep(&code, &scheme, &decoders(), &config(vec![1.0], 10, None, Some(0))).is_err());
}

#[test]
fn records_are_consistent_and_ordered() {
    let code = common::code(40, Rate::OneThird);
    let recs = ber_sweep(&code, &ModScheme::new(Modulation::Bpsk), &decoders(), &config(vec![0.0, 1.0], 700, Some(20), None)).unwrap();
    let order: Vec<(f64, DecoderKind, usize)> = recs.iter().map(|r| (r.ebno_db, r.decoder, r.iterations)).collect();
    assert_eq!(
        order,
        [0.0, 1.0]
            .iter()
            .flat_map(|&s| [(s, DecoderKind::MaxLogMap, 3), (s, DecoderKind::LogMap, 2), (s, DecoderKind::TurbonetPlus, 2)])
            .collect::<Vec<_>>()
    );
    for r in &recs {
        assert_eq!(r.ber, r.bit_errors as f64 / (r.frames * 40) as f64);
        // the error check happens every 500 frames
        assert!(r.frames == 500 || r.frames == 700, "{r:?}");
        assert!(r.bit_errors >= 20 || r.frames == 700);
    }
}

#[test]
fn decoder_names_round_trip() {
    for d in [DecoderKind::MaxLogMap, DecoderKind::LogMap, DecoderKind::Turbonet, DecoderKind::TurbonetPlus] {
        assert_eq!(d.to_string().parse::<DecoderKind>().unwrap(), d);
    }
    assert!("bcjr".parse::<DecoderKind>().is_err());
    assert_eq!(Decoder::net(init_weights(40, 3, WeightVariant::Full).unwrap()).kind(), DecoderKind::Turbonet);
}

#[test]
fn init_weights_fill_a_single_bin() {
    for variant in WeightVariant::ALL {
        let bins = weight_histogram(&init_weights(40, 3, variant).unwrap());
        let families = Family::ALL.iter().filter(|f| match f {
            Family::Gw => variant.has_gw(),
            Family::Plw => variant.has_plw(),
            Family::Elw => variant.has_elw(),
        });
        assert_eq!(bins.len(), 3 * families.count());
        for b in &bins {
            assert_eq!((b.bin_center, b.frequency), (1.0, 1.0));
            assert!(b.csv_row().contains(",1.00,"), "{}", b.csv_row());
        }
    }
}

#[test]
fn histogram_frequencies_sum_to_one() {
    let w = common::perturbed(40, 3, WeightVariant::Full, 8, 0.2);
    let bins = weight_histogram(&w);
    for unit in 1..=3 {
        for family in Family::ALL {
            let of: Vec<&HistogramBin> = bins.iter().filter(|b| b.unit == unit && b.family == family).collect();
            let total: f64 = of.iter().map(|b| b.frequency).sum();
            assert!((total - 1.0).abs() < 1e-9, "{unit} {family:?}: {total}");
            let count: usize = of.iter().map(|b| b.count).sum();
            assert_eq!(count, family.of(&w.units[unit - 1].sn1).unwrap().len() * 2);
            assert!(of.windows(2).all(|p| p[0].bin_center < p[1].bin_center));
        }
    }
}
