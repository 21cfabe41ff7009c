//! Property tests over the algebraic invariants the receiver relies on.

use num_complex::Complex64;
use prach_core::channel::{apply_delay, simulate_reception, ChannelConfig, ChannelModel};
use prach_core::correlator::{
    compute_pdp, extract_pdp_windows, root_spectrum, window_rightmost_bin, WindowContext,
};
use prach_core::detect::{detect_conventional, ConventionalCal};
use prach_core::mlp::{normalize_features, Normalization};
use prach_core::preamble::{
    apply_cyclic_shift, dft, generate_base_sequence, rotate_spectrum, PreambleConfig, RootTable,
};
use proptest::prelude::*;

fn valid_root() -> impl Strategy<Value = u32> {
    // l_ra is prime, so every nonzero residue is a valid root
    1u32..139
}

fn config(u: u32, v: u32) -> PreambleConfig {
    PreambleConfig::default().with_root(u).with_v(v)
}

proptest! {
    /// Every base sequence sample lies on the unit circle.
    #[test]
    fn base_sequence_has_unit_modulus(u in valid_root(), n in 0usize..139) {
        let x = generate_base_sequence(&config(u, 0)).unwrap();
        prop_assert!((x.values[n].norm() - 1.0).abs() < 1e-12);
    }

    /// The spectrum of a base sequence is flat with power l_ra.
    #[test]
    fn base_spectrum_is_flat(u in valid_root(), k in 0usize..139) {
        let xf = dft(&generate_base_sequence(&config(u, 0)).unwrap()).unwrap();
        prop_assert!((xf.values[k].norm_sqr() - 139.0).abs() < 1e-8);
    }

    /// idft(dft(x)) returns x for arbitrary complex input.
    #[test]
    fn transform_round_trip(seed in any::<u64>()) {
        use rand::Rng;
        let mut rng = prach_core::rng::substream(seed, 0);
        let x: Vec<Complex64> = (0..139)
            .map(|_| Complex64::new(rng.gen_range(-2.0..2.0), rng.gen_range(-2.0..2.0)))
            .collect();
        let xf = prach_core::preamble::dft_direct(&x);
        let back = prach_core::preamble::idft_direct(&xf);
        for (a, b) in x.iter().zip(&back) {
            prop_assert!((a - b).norm() < 1e-10);
        }
    }

    /// Shifting in time equals rotating the spectrum.
    #[test]
    fn cyclic_shift_matches_spectrum_rotation(u in valid_root(), v in 0u32..10) {
        let cfg = config(u, v);
        let base = generate_base_sequence(&cfg).unwrap();
        let shifted_then_dft = dft(&apply_cyclic_shift(&base, &cfg).unwrap()).unwrap();
        let rotated = rotate_spectrum(&dft(&base).unwrap(), &cfg).unwrap();
        for (a, b) in shifted_then_dft.values.iter().zip(&rotated.values) {
            prop_assert!((a - b).norm() < 1e-9);
        }
    }

    /// Delay ramps compose additively.
    #[test]
    fn delays_compose(d1 in 0.0f64..80.0, d2 in 0.0f64..80.0) {
        let cfg = config(1, 0);
        let xf = dft(&generate_base_sequence(&cfg).unwrap()).unwrap();
        let once = apply_delay(&xf.values, d1 + d2, cfg.fft_size).unwrap();
        let twice = apply_delay(
            &apply_delay(&xf.values, d1, cfg.fft_size).unwrap(),
            d2,
            cfg.fft_size,
        )
        .unwrap();
        for (a, b) in once.iter().zip(&twice) {
            prop_assert!((a - b).norm() < 1e-9);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    /// An integer-bin delay moves the peak that many bins left of the
    /// window's rightmost bin, for any identity.
    #[test]
    fn integer_delay_moves_peak_left(u in valid_root(), v in 0u32..10, d in 0u32..13) {
        let p = config(u, v);
        let chan = ChannelConfig {
            snr_db: f64::INFINITY,
            delay_samples: f64::from(d) * p.samples_per_bin(),
            ..Default::default()
        };
        let grid = simulate_reception(&p, &chan, true).unwrap();
        let pdp = compute_pdp(&grid, &root_spectrum(&p).unwrap()).unwrap();
        let peak = pdp
            .values
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.partial_cmp(b.1).unwrap())
            .unwrap()
            .0;
        prop_assert_eq!(peak, window_rightmost_bin(&p, v) - d as usize);
    }

    /// Rescaling the received grid changes no normalized feature and no
    /// conventional margin beyond rounding.
    #[test]
    fn receiver_is_scale_invariant(scale in 1e-3f64..1e3, seed in 0u64..1000) {
        let p = config(3, 5);
        let chan = ChannelConfig {
            snr_db: -2.0,
            seed,
            ..Default::default()
        };
        let grid = simulate_reception(&p, &chan, true).unwrap();
        let mut scaled = grid.clone();
        for ant in &mut scaled.antennas {
            for z in ant.iter_mut() {
                *z *= scale;
            }
        }
        let root = root_spectrum(&p).unwrap();
        let table = RootTable::default_for(&p);
        let ctx = WindowContext {
            snr_db: chan.snr_db,
            channel: ChannelModel::Awgn,
            num_rx: 1,
            base_index: 1,
            label: None,
            true_delay_samples: None,
        };
        let a = compute_pdp(&grid, &root).unwrap();
        let b = compute_pdp(&scaled, &root).unwrap();
        let wa = extract_pdp_windows(&a, &p, &table, &ctx);
        let wb = extract_pdp_windows(&b, &p, &table, &ctx);
        for (x, y) in wa.iter().zip(&wb) {
            let fa = normalize_features(x, Normalization::ProfileMean).unwrap();
            let fb = normalize_features(y, Normalization::ProfileMean).unwrap();
            for (va, vb) in fa.iter().zip(&fb) {
                prop_assert!((va - vb).abs() <= 1e-9 * va.abs().max(1.0));
            }
        }
        let cal = ConventionalCal { alpha: 9.5, num_rx: 1, target_fa: 1e-3, occasions: 0, seed: 0 };
        let da = detect_conventional(&a, &p, &cal).unwrap();
        let db = detect_conventional(&b, &p, &cal).unwrap();
        for (x, y) in da.decisions.iter().zip(&db.decisions) {
            prop_assert_eq!(x.present, y.present);
        }
    }

    /// Total profile power equals the mean over antennas of the whitened
    /// received power (the transform preserves energy).
    #[test]
    fn profile_power_matches_input_power(seed in 0u64..1000, num_rx in 1usize..4) {
        let p = config(2, 3);
        let chan = ChannelConfig {
            snr_db: 0.0,
            num_rx,
            seed,
            model: ChannelModel::Tdlc300,
            ..Default::default()
        };
        let grid = simulate_reception(&p, &chan, true).unwrap();
        let root = root_spectrum(&p).unwrap();
        let pdp = compute_pdp(&grid, &root).unwrap();
        let total: f64 = pdp.values.iter().sum();
        let mut input = 0.0;
        for ant in &grid.antennas {
            for (y, x) in ant.iter().zip(&root.values) {
                input += (y / x).norm_sqr();
            }
        }
        input /= grid.num_rx() as f64;
        prop_assert!((total - input).abs() < 1e-9 * input.max(1.0));
    }
}
