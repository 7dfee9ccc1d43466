//! Sampling statistics checked against closed-form expectations.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use tbqkd_core::detection::{
    accumulate, measure, simulate_block, simulate_block_with, to_time_tags, Apparatus, DetectorId, DetectorModel,
    Outcome, Receiver, SessionCounts, SlotLayout,
};
use tbqkd_core::optics::SwitchModel;
use tbqkd_core::qubit::{BasisId, Bit, PreparationSetting};
use tbqkd_core::source::{
    sample_photon_number, transmittance, DriftModel, DriftTrace, IntensityClass, LossBudget, PhotonNumber,
    SourceConfig,
};
use tbqkd_core::stream::{block_rng, stream_id};

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// `|k - n p| <= 3 sqrt(n p (1 - p))`.
fn within_3_sigma(k: u64, n: u64, p: f64) -> bool {
    let n = n as f64;
    (k as f64 - n * p).abs() <= 3.0 * (n * p * (1.0 - p)).sqrt()
}

fn poisson_pmf(mean: f64, k: u32) -> f64 {
    (-mean).exp() * mean.powi(k as i32) / (1..=k).map(f64::from).product::<f64>()
}

#[test]
fn photon_numbers_follow_poisson() {
    for (seed, mean) in [(1, 0.1), (2, 0.8)] {
        let mut r = rng(seed);
        let n = 1_000_000u64;
        let mut hist = [0u64; 5];
        let mut total = 0u64;
        for _ in 0..n {
            let k = sample_photon_number(mean, &mut r).unwrap();
            total += k as u64;
            hist[(k as usize).min(4)] += 1;
        }
        for k in 0..4 {
            let p = poisson_pmf(mean, k as u32);
            assert!(within_3_sigma(hist[k], n, p), "mean {mean}, n={k}: {} vs {}", hist[k], p * n as f64);
        }
        let sample_mean = total as f64 / n as f64;
        let sd = (mean / n as f64).sqrt();
        assert!((sample_mean - mean).abs() <= 3.0 * sd, "mean {mean}: {sample_mean}");
        if mean == 0.8 {
            assert!((hist[0] as f64 / n as f64 - 0.4493).abs() < 0.002);
            assert!((sample_mean - 0.8).abs() < 0.003);
        }
    }
    assert!(sample_photon_number(-0.1, &mut rng(0)).is_err());
    let zero = PhotonNumber::new(0.0).unwrap();
    let mut r = rng(3);
    assert!((0..1000).all(|_| zero.sample(&mut r) == 0));
}

#[test]
fn class_selection_matches_probabilities() {
    let src = SourceConfig::default();
    let mut r = rng(5);
    let n = 1_000_000;
    let mut hist = [0u64; 3];
    for _ in 0..n {
        hist[src.sample_class(&mut r).index()] += 1;
    }
    for c in IntensityClass::ALL {
        assert!(within_3_sigma(hist[c.index()], n, src.class_probabilities[c.index()]), "{c:?}");
    }
}

fn ideal_apparatus(total_pre_db: f64) -> Apparatus {
    Apparatus {
        source: SourceConfig {
            class_probabilities: [1.0, 0.0, 0.0],
            ..SourceConfig::default()
        },
        budget: LossBudget {
            channel_db: total_pre_db,
            coupling_db: 0.0,
            detector_db: 0.0,
            receiver_optics_db: 0.0,
        },
        switch: SwitchModel::default(),
        detector: DetectorModel::ideal(),
        layout: SlotLayout::default(),
    }
}

fn setting(basis: BasisId, bit: Bit) -> PreparationSetting {
    PreparationSetting::for_state(basis, bit).unwrap()
}

#[test]
fn lossless_late_bin_clicks_whenever_a_photon_is_sent() {
    let app = ideal_apparatus(0.0);
    let n = 100_000;
    let c = simulate_block(&setting(BasisId::Time, Bit::One), 0..n, &app, &mut rng(6)).unwrap();
    let p_click = 1.0 - (-0.8f64).exp();
    assert!((p_click - 0.5507).abs() < 1e-4);
    assert!(within_3_sigma(c.clicks(IntensityClass::Signal), n, p_click));
    // Half of the clicks are in the time basis, all of them correct.
    let row = c.class(IntensityClass::Signal)[1][1][1];
    assert_eq!(row[0], 0);
    assert!(within_3_sigma(row[1], n, 0.5 * p_click));
}

#[test]
fn no_click_probability_is_poissonian_in_transmittance() {
    let app = ideal_apparatus(14.55);
    let eta = transmittance(14.55).unwrap();
    let n = 1_000_000;
    let c = simulate_block(&setting(BasisId::Phase, Bit::Zero), 0..n, &app, &mut rng(7)).unwrap();
    let p_none = (-0.8 * eta).exp();
    assert!(within_3_sigma(n - c.clicks(IntensityClass::Signal), n, p_none));
}

#[test]
fn signal_gain_through_the_full_loss_budget() {
    // 0.5 + 3 + 2.2 + 8.9 = 14.6 dB; dead time and dark counts off.
    let mut app = Apparatus {
        budget: LossBudget {
            channel_db: 0.5,
            ..LossBudget::default()
        },
        ..ideal_apparatus(0.0)
    };
    app.detector = DetectorModel {
        dark_count_rate_hz: 0.0,
        dead_time_ns: 0.0,
        ..DetectorModel::default()
    };
    let q = 1.0 - (-0.8 * transmittance(14.6).unwrap()).exp();
    assert!((q - 0.0274).abs() < 1e-4);
    let n = 1_000_000;
    let c = simulate_block(&setting(BasisId::Time, Bit::Zero), 0..n, &app, &mut rng(8)).unwrap();
    assert!(within_3_sigma(c.clicks(IntensityClass::Signal), n, q));
}

#[test]
fn misalignment_sets_the_time_basis_error_fraction() {
    let mut app = ideal_apparatus(14.55);
    app.detector.misalignment = 0.008;
    let mean = 0.8 * transmittance(14.55).unwrap();
    let n = 1_000_000;
    let c = simulate_block(&setting(BasisId::Time, Bit::Zero), 0..n, &app, &mut rng(9)).unwrap();
    let row = c.class(IntensityClass::Signal)[1][0][1];
    let sifted = row[0] + row[1];
    // Arriving photons are Poissonian with mean μη. A multi-photon pulse
    // clicks wrongly only if every photon flips, or both windows fire and
    // the double-click rule's fair coin says so.
    let mut expect = 0.0;
    let mut norm = 0.0;
    for k in 1..20u32 {
        let p = poisson_pmf(mean, k);
        let all_wrong = 0.008f64.powi(k as i32);
        let all_right = 0.992f64.powi(k as i32);
        let both = 1.0 - all_wrong - all_right;
        expect += p * (all_wrong + 0.5 * both);
        norm += p;
    }
    let e = expect / norm;
    assert!((e - 0.008).abs() < 1e-4);
    assert!(within_3_sigma(row[1], sifted, e), "{} / {sifted} vs {e}", row[1]);
}

#[test]
fn wrong_basis_outcomes_are_fair_coins() {
    let det = DetectorModel::ideal();
    let response = SwitchModel::default().response();
    let mut r = rng(10);
    let n = 100_000u64;
    for prep in PreparationSetting::BB84 {
        let state = response.apply(&prep.state().unwrap()).unwrap();
        let wrong = if prep.basis == BasisId::Time { BasisId::Phase } else { BasisId::Time };
        let mut zeros = 0;
        for _ in 0..n {
            match measure(&state, wrong, &det, &mut r).unwrap() {
                Outcome::Bit(Bit::Zero) => zeros += 1,
                Outcome::Bit(Bit::One) => {}
                other => panic!("ideal detector gave {other:?}"),
            }
        }
        assert!(within_3_sigma(zeros, n, 0.5), "{prep:?}: {zeros}");
        // The matched basis is deterministic.
        let right = measure(&state, prep.basis, &det, &mut r).unwrap();
        assert_eq!(right, Outcome::Bit(prep.bit));
    }
}

#[test]
fn double_clicks_match_the_two_window_coincidence_rate() {
    // 62.5 MHz dark rate makes p_dark = 1 - e^{-0.05} per 0.8 ns window.
    let det = DetectorModel {
        dark_count_rate_hz: 62.5e6,
        misalignment: 0.0,
        ..DetectorModel::ideal()
    };
    let pd = det.dark_probability_per_window();
    assert!((pd - (1.0 - (-0.05f64).exp())).abs() < 1e-12);
    let receiver = Receiver::new(&det).unwrap();
    let n = 1_000_000u64;
    for (arrived, p0) in [(0u32, 1.0), (1, 1.0), (2, 0.5)] {
        let mut r = rng(11 + arrived as u64);
        let doubles = (0..n)
            .filter(|_| receiver.register(arrived, p0, &mut r) == Outcome::DoubleClick)
            .count() as u64;
        let miss0 = (1.0 - p0).powi(arrived as i32) * (1.0 - pd);
        let miss1 = p0.powi(arrived as i32) * (1.0 - pd);
        let neither = if arrived == 0 { (1.0 - pd) * (1.0 - pd) } else { 0.0 };
        let p = 1.0 - miss0 - miss1 + neither;
        assert!(within_3_sigma(doubles, n, p), "arrived {arrived}: {doubles} vs {}", p * n as f64);
    }
}

#[test]
fn time_tags_sit_in_their_slots() {
    let layout = SlotLayout::default();
    let delay = layout.slot_ps[1][1] - layout.slot_ps[1][0];
    assert!((delay - 2935.36).abs() < 0.01, "{delay}");
    assert!((layout.slot_ps[0][0] - layout.slot_ps[1][0] - 8000.0).abs() < 1e-9);

    let det = DetectorModel::default();
    let mut r = rng(12);
    let n = 100_000;
    let mut inside = 0u64;
    for k in 0..n {
        let tags = to_time_tags(Outcome::Bit(Bit::One), BasisId::Phase, k, &det, &layout, &mut r).unwrap();
        assert_eq!(tags.len(), 1);
        assert_eq!(tags[0].detector, DetectorId::D1);
        if (tags[0].timestamp_ps - layout.slot_ps[0][1]).abs() <= 400.0 {
            inside += 1;
        }
    }
    // erf(400 / (150 √2)) = 0.992339
    assert!(within_3_sigma(inside, n, 0.992_339), "{inside}");
}

fn blocks(app: &Apparatus, seed: u64, prep: &PreparationSetting, n_blocks: u64, size: u64) -> Vec<SessionCounts> {
    (0..n_blocks)
        .map(|b| {
            let mut r = block_rng(seed, stream_id(&[prep.index() as u64, b]));
            simulate_block(prep, b * size..(b + 1) * size, app, &mut r).unwrap()
        })
        .collect()
}

#[test]
fn merging_blocks_is_associative_and_matches_serial_accumulation() {
    let app = Apparatus::default();
    let prep = setting(BasisId::Phase, Bit::One);
    let parts = blocks(&app, 77, &prep, 6, 20_000);

    let forward = SessionCounts::merged(parts.iter());
    let backward = SessionCounts::merged(parts.iter().rev());
    let mut left = parts[0];
    let mut rest = SessionCounts::merged(parts[1..].iter());
    left.merge(&rest);
    rest = SessionCounts::merged(parts[..5].iter());
    rest.merge(&parts[5]);
    assert_eq!(forward, backward);
    assert_eq!(forward, left);
    assert_eq!(forward, rest);
    assert!(forward.is_consistent());

    // Collect every tag, then count once in a shuffled order.
    let mut tags = Vec::new();
    for b in (0..6u64).rev() {
        let mut r = block_rng(77, stream_id(&[prep.index() as u64, b]));
        simulate_block_with(&prep, b * 20_000..(b + 1) * 20_000, &app, &mut r, |ev, meta| tags.push((*ev, *meta)))
            .unwrap();
    }
    let serial = accumulate(tags, &app.windows().unwrap(), app.detector.double_click);
    assert_eq!(serial.counts, forward.counts);
    assert_eq!(serial.double_clicks, forward.double_clicks);
}

#[test]
fn drift_keeps_the_early_bin_within_a_percent_band() {
    // Pump-power walk only, 0.01 per hour over 28 hours.
    let switch = SwitchModel::default();
    let mut excursions: Vec<f64> = (1..=25)
        .map(|seed| {
            let m = DriftModel {
                pump_power_rel_sigma: 0.01,
                pump_polarization_sigma_rad: 0.0,
                seed,
            };
            let trace = DriftTrace::generate(&m, 28.0).unwrap();
            let eta: Vec<f64> = (0..=28 * 12)
                .map(|k| trace.at(k as f64 / 12.0).apply(&switch).response().eta_t0)
                .collect();
            let hi = eta.iter().cloned().fold(f64::MIN, f64::max);
            let lo = eta.iter().cloned().fold(f64::MAX, f64::min);
            hi - lo
        })
        .collect();
    excursions.sort_by(f64::total_cmp);
    assert!(excursions[12] < 0.01, "{excursions:?}");

    let a = DriftTrace::generate(&DriftModel::default(), 28.0).unwrap();
    let b = DriftTrace::generate(&DriftModel::default(), 28.0).unwrap();
    assert_eq!(a, b);
    let s = a.at(0.0);
    assert_eq!((s.power_rel, s.theta_offset_rad), (0.0, 0.0));
}
