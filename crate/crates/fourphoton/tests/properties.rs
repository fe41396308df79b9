//! Randomized and structural invariants: things that must hold for
//! every configuration, not just the reference one.

use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;

use num_complex::Complex64;

use fourphoton::elements::apply_hwp;
use fourphoton::experiments::g2::G2Scanner;
use fourphoton::experiments::hom::DipScanner;
use fourphoton::experiments::scan::{derive_seed, run_points};
use fourphoton::fock::{FockState, Mode, Occupation, OverlapKernel, OverlapModel, Path, Pol};
use fourphoton::layouts::{build_bench, Geometry, Layout};
use fourphoton::source::{emit_pulse_state, sample_pulse, SpdcConfig};
use fourphoton::detection::TriggerChain;

fn model(sigma: f64, purity: f64) -> OverlapModel {
    OverlapModel {
        sigma_t_ps: sigma,
        kernel: OverlapKernel::Gaussian,
        purity,
    }
}

proptest! {
    #[test]
    fn kernel_is_bounded_even_and_peaked(
        sigma in 0.05f64..2.0,
        dt in -5.0f64..5.0,
    ) {
        let m = model(sigma, 1.0);
        let k = m.kappa(dt);
        // underflows to exactly 0 for very narrow kernels
        prop_assert!((0.0..=1.0).contains(&k));
        prop_assert!((k - m.kappa(-dt)).abs() < 1e-15);
        prop_assert_eq!(m.kappa(0.0), 1.0);
        prop_assert!(m.kappa(dt) <= m.kappa(dt / 2.0) + 1e-15);
    }

    #[test]
    fn photon_overlap_separates_origins_by_purity(
        sigma in 0.05f64..2.0,
        purity in 0.0f64..=1.0,
        dt in -3.0f64..3.0,
    ) {
        let m = model(sigma, purity);
        let a = Mode::new(Path::B, Pol::H, 0.0, 0);
        let same = Mode::new(Path::B, Pol::H, dt, 0);
        let other = Mode::new(Path::B, Pol::H, dt, 1);
        // modes carry grid-quantized arrival times
        let k = m.kappa(same.tau_ps() - a.tau_ps());
        prop_assert!((m.photon_overlap(&a, &same) - k).abs() < 1e-15);
        prop_assert!((m.photon_overlap(&a, &other) - k * purity).abs() < 1e-15);
        prop_assert!((m.photon_overlap(&a, &other) - m.photon_overlap(&other, &a)).abs() < 1e-15);
    }

    #[test]
    fn wave_plates_are_involutions(
        theta in -180.0f64..180.0,
        dt in -2.0f64..2.0,
        first_h in any::<bool>(),
        second_h in any::<bool>(),
    ) {
        let pol = |h: bool| if h { Pol::H } else { Pol::V };
        let state = FockState::from_terms(
            [(
                Occupation::from_entries([
                    (Mode::new(Path::B, pol(first_h), 0.0, 0), 1),
                    (Mode::new(Path::B, pol(second_h), dt, 1), 1),
                ]),
                Complex64::new(0.8, -0.6),
            )],
            2,
        );
        let once = apply_hwp(&state, Path::B, theta).unwrap();
        let twice = apply_hwp(&once, Path::B, theta).unwrap();
        prop_assert_eq!(twice.num_terms(), state.num_terms());
        for (occ, amp) in state.terms() {
            prop_assert!((twice.amplitude(occ) - amp).norm() < 1e-12);
        }
    }

    #[test]
    fn beam_fractions_sum_to_one(
        hwp1 in -90.0f64..90.0,
        hwp2 in -90.0f64..90.0,
    ) {
        let geom = Geometry::default();
        let mut pump = build_bench(Layout::Ghz, &geom).unwrap().default_pump;
        pump.hwp1_deg = hwp1;
        pump.hwp2_deg = hwp2;
        let f = pump.beam_fractions();
        prop_assert!(f.iter().all(|&x| (0.0..=1.0).contains(&x)));
        prop_assert!((f.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn mean_pairs_scale_linearly_with_power(
        power in 0.1f64..200.0,
        mu_per_mw in 1e-5f64..1e-2,
        beam in 1u8..=4,
    ) {
        let geom = Geometry::default();
        let mut pump = build_bench(Layout::Ghz, &geom).unwrap().default_pump;
        pump.power_mw = power;
        let spdc = SpdcConfig { mu_per_mw, ..SpdcConfig::default() };
        let mu = spdc.mu_for_beam(&pump, beam);
        pump.power_mw = 2.0 * power;
        prop_assert!((spdc.mu_for_beam(&pump, beam) - 2.0 * mu).abs() <= 1e-15 * mu.max(1.0));
    }

    #[test]
    fn pulse_sampling_is_seed_deterministic(seed in any::<u64>()) {
        let geom = Geometry::default();
        let pump = build_bench(Layout::Ghz, &geom).unwrap().default_pump;
        let spdc = SpdcConfig::default();
        let mut a = ChaCha12Rng::seed_from_u64(seed);
        let mut b = ChaCha12Rng::seed_from_u64(seed);
        for _ in 0..50 {
            prop_assert_eq!(sample_pulse(&pump, &spdc, &mut a), sample_pulse(&pump, &spdc, &mut b));
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    /// Lossless benches conserve norm, and the port-count distribution
    /// is complete: it carries exactly the state's squared norm.
    #[test]
    fn emitted_states_run_unitarily(
        layout_idx in 0usize..4,
        hwp1 in 0.0f64..90.0,
        hwp2 in 0.0f64..90.0,
        power in 1.0f64..120.0,
        mu_per_mw in 1e-5f64..4e-4,
    ) {
        let geom = Geometry::default();
        let bench = build_bench(Layout::ALL[layout_idx], &geom).unwrap();
        let mut pump = bench.default_pump.clone();
        pump.hwp1_deg = hwp1;
        pump.hwp2_deg = hwp2;
        pump.power_mw = power;
        let spdc = SpdcConfig { mu_per_mw, max_pairs: 2, ..SpdcConfig::default() };
        let state = emit_pulse_state(&pump, &spdc, 4).unwrap();
        let norm_in = state.norm_sqr();
        let out = bench.circuit.run(&state).unwrap();
        prop_assert!((out.norm_sqr() - norm_in).abs() < 1e-9);
        let total: f64 = out
            .port_count_distribution(&OverlapModel::default())
            .values()
            .sum();
        prop_assert!((total - norm_in).abs() < 1e-9);
    }
}

#[test]
fn scan_points_do_not_depend_on_thread_count() {
    let f = |i: usize| derive_seed(7, i as u64).wrapping_mul(0x9e37_79b9);
    let serial = run_points(37, 1, f);
    for threads in [2, 4, 8] {
        assert_eq!(serial, run_points(37, threads, f));
    }
}

fn hom_scanner_parts(purity: f64) -> (fourphoton::layouts::Bench, Geometry, OverlapModel) {
    let geom = Geometry::default();
    let bench = build_bench(Layout::Hom, &geom).unwrap();
    (bench, geom, model(0.2, purity))
}

fn without_darks(bench: &fourphoton::layouts::Bench) -> fourphoton::layouts::Bench {
    let mut quiet = bench.clone();
    for det in quiet.detectors.values_mut() {
        det.dark_hz = 0.0;
    }
    quiet
}

/// The two-photon dip depends on the pump mismatch only through its
/// magnitude: slip counts equidistant from the matched point give the
/// same normalized rate.
#[test]
fn dip_is_even_about_the_matched_point() {
    for (purity, power) in [(1.0, 25.0), (0.9, 60.0), (0.75, 100.0)] {
        let (bench, geom, overlap) = hom_scanner_parts(purity);
        let spdc = SpdcConfig::default();
        let scanner = DipScanner::new(&bench, &geom, overlap, &spdc, power);
        let scan = scanner.scan_analytic(&(0..=10).collect::<Vec<_>>()).unwrap();
        for n in 0..=4usize {
            let lo = scan.points[n].normalized_rate;
            let hi = scan.points[10 - n].normalized_rate;
            assert!(
                (lo - hi).abs() < 1e-9,
                "purity {purity}, power {power}, slips {n}/{}: {lo} vs {hi}",
                10 - n
            );
        }
    }
}

/// Far from the matched point the normalized rate sits at 1 for every
/// purity and power: the normalization removes all slow factors.
#[test]
fn plateau_is_flat_at_one_far_from_match() {
    for purity in [1.0, 0.8, 0.55] {
        for power in [25.0, 100.0] {
            let (bench, geom, overlap) = hom_scanner_parts(purity);
            let spdc = SpdcConfig::default();
            let scanner = DipScanner::new(&bench, &geom, overlap, &spdc, power);
            let scan = scanner.scan_analytic(&[0, 10]).unwrap();
            for p in &scan.points {
                assert!(
                    (p.normalized_rate - 1.0).abs() < 1e-6,
                    "purity {purity}, power {power}, slips {}: {}",
                    p.setting,
                    p.normalized_rate
                );
            }
        }
    }
}

fn r_squared(points: &[(f64, f64)], intercept: f64, slope: f64) -> f64 {
    let mean = points.iter().map(|&(_, y)| y).sum::<f64>() / points.len() as f64;
    let ss_tot: f64 = points.iter().map(|&(_, y)| (y - mean).powi(2)).sum();
    let ss_res: f64 = points
        .iter()
        .map(|&(x, y)| (y - intercept - slope * x).powi(2))
        .sum();
    1.0 - ss_res / ss_tot
}

/// With perfect indistinguishability the dip floor is pure multi-pair
/// background: it vanishes as power goes to zero and grows linearly in
/// the mean pair number over the low-gain regime. Dark counts are off;
/// they add an accidental floor of their own that dominates once the
/// pair rate drops to the dark rate.
#[test]
fn ideal_dip_floor_vanishes_and_grows_linearly_in_mu() {
    for purity in [1.0, 0.85] {
        let (bench, geom, overlap) = hom_scanner_parts(purity);
        let bench = without_darks(&bench);
        let spdc = SpdcConfig {
            mu_per_mw: 2e-4,
            ..SpdcConfig::default()
        };
        let mut floor_vs_mu = Vec::new();
        for power in [10.0, 25.0, 50.0, 75.0, 100.0] {
            let scanner = DipScanner::new(&bench, &geom, overlap, &spdc, power);
            let grid = scanner.slips_near_zero_mismatch();
            let min = scanner.dip_minimum(&grid).unwrap();
            floor_vs_mu.push((power * spdc.mu_per_mw, min));
        }
        let fit = fourphoton::experiments::scan::fit_dip_floor(
            &floor_vs_mu
                .iter()
                .map(|&(mu, y)| (mu, y))
                .collect::<Vec<_>>(),
        )
        .unwrap();
        let r2 = r_squared(&floor_vs_mu, fit.intercept, fit.slope_per_mw);
        assert!(r2 > 0.99, "purity {purity}: R² {r2}");
        if purity == 1.0 {
            let scanner = DipScanner::new(&bench, &geom, overlap, &spdc, 1e-3);
            let grid = scanner.slips_near_zero_mismatch();
            assert!(scanner.dip_minimum(&grid).unwrap() < 1e-4);
            assert!(fit.intercept.abs() < 1e-3);
        }
    }
}

/// Side peaks probe uncorrelated pulses, so after normalization they
/// are all the same height; the matched peak grows with the mean pair
/// number through the low-gain regime.
#[test]
fn side_peaks_are_uniform_and_matched_ratio_grows_with_mu() {
    let geom = Geometry::default();
    let bench = build_bench(Layout::G2, &geom).unwrap();
    let chain = TriggerChain::default();
    let mut last_ratio = -1.0;
    for power in [2.5, 5.0, 10.0, 20.0] {
        let spdc = SpdcConfig::default();
        let scanner = G2Scanner::new(&bench, &geom, &chain, OverlapModel::default(), &spdc, power);
        let outcome = scanner.zero_delay_outcome(2, 0, 0, 1).unwrap();
        let sides: Vec<f64> = outcome
            .peak_ks
            .iter()
            .zip(&outcome.analytic_points)
            .filter(|(&k, _)| k != 0)
            .map(|(_, p)| p.normalized_rate)
            .collect();
        let spread = sides.iter().cloned().fold(f64::MIN, f64::max)
            - sides.iter().cloned().fold(f64::MAX, f64::min);
        assert!(spread.abs() < 1e-9, "side peak spread {spread}");
        assert!(
            outcome.zero_delay_ratio_analytic > last_ratio,
            "ratio not increasing at {power} mW"
        );
        last_ratio = outcome.zero_delay_ratio_analytic;
    }
}
