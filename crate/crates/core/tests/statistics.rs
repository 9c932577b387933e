use biphoton::estimation::{fit_wavepacket, initial_guess, FitModel, ModelKind, Parameterization};
use biphoton::model::{dressed_modes, AmplitudeModel, SystemParams};
use biphoton::photostatistics::{
    cauchy_schwarz, normalized_cross_correlation, simulate_coincidences, simulate_coincidences_with_workers,
    CoincidenceHistogram, DetectionConfig, THERMAL_AUTOCORRELATION,
};
use biphoton::wavepacket::{g2_analytic, TimeGridConfig, Wavepacket};

fn model(dc: f64, oc: f64) -> (SystemParams, Wavepacket) {
    let p = SystemParams::with_coupling(dc, oc);
    let w = g2_analytic(
        &p,
        &AmplitudeModel::real(1.0).unwrap(),
        &TimeGridConfig::new(600.0, 6001).unwrap(),
    )
    .unwrap();
    (p, w)
}

/// Detection settings that yield `pairs` detected pairs on average.
fn config(pairs: f64, seed: u64) -> DetectionConfig {
    let base = DetectionConfig {
        measurement_time: 100.0,
        rng_seed: seed,
        chunk_seconds: 10.0,
        ..DetectionConfig::default()
    };
    let per_rate = base.expected_detected_pairs() / base.pair_rate;
    DetectionConfig {
        pair_rate: pairs / per_rate,
        ..base
    }
}

/// Expected counts: detected pairs spread by the bin integrals of G², plus accidentals.
fn expected_counts(w: &Wavepacket, cfg: &DetectionConfig, h: &CoincidenceHistogram) -> Vec<f64> {
    // trapezoid integral of the piecewise-linear density over each bin
    let total = w.energy();
    let per = (h.bin_width / w.tau_step).round() as usize;
    (0..h.len())
        .map(|k| {
            let lo = k * per;
            let mass: f64 = (lo..lo + per)
                .filter(|&i| i + 1 < w.len())
                .map(|i| 0.5 * (w.g2[i] + w.g2[i + 1]) * w.tau_step)
                .sum();
            cfg.expected_detected_pairs() * mass / total + h.accidental_floor()
        })
        .collect()
}

fn rel(a: f64, b: f64) -> f64 {
    (a / b - 1.0).abs()
}

#[test]
fn same_seed_same_histogram() {
    let (_, w) = model(28.3, 14.8);
    let cfg = config(2e4, 7);
    let a = simulate_coincidences(&w, &cfg).unwrap();
    let b = simulate_coincidences(&w, &cfg).unwrap();
    assert_eq!(a, b);
    let c = simulate_coincidences(&w, &DetectionConfig { rng_seed: 8, ..cfg }).unwrap();
    assert_ne!(a.counts, c.counts);
}

#[test]
fn worker_count_does_not_change_result() {
    let (_, w) = model(28.3, 14.8);
    let cfg = config(5e4, 3);
    let one = simulate_coincidences_with_workers(&w, &cfg, 1).unwrap();
    let eight = simulate_coincidences_with_workers(&w, &cfg, 8).unwrap();
    assert_eq!(one, eight);
}

#[test]
fn pure_background_sits_on_accidental_floor() {
    let (_, w) = model(28.3, 14.8);
    let (mut observed, mut floor) = (0.0, 0.0);
    for seed in 1..=20 {
        let cfg = DetectionConfig {
            pair_rate: 0.0,
            background_s: 5e4,
            background_as: 5e4,
            measurement_time: 10.0,
            rng_seed: seed,
            ..DetectionConfig::default()
        };
        let h = simulate_coincidences(&w, &cfg).unwrap();
        observed += h.total() as f64;
        floor += h.accidental_floor() * h.len() as f64;
    }
    let sigma = floor.sqrt();
    assert!(
        (observed - floor).abs() < 3.0 * sigma,
        "{observed} vs {floor} ± {sigma}"
    );
}

#[test]
fn histogram_matches_generating_model() {
    let (_, w) = model(28.3, 14.8);
    let cfg = config(1e6, 11);
    let h = simulate_coincidences(&w, &cfg).unwrap();
    let expect = expected_counts(&w, &cfg, &h);
    let chi2: f64 = h
        .counts
        .iter()
        .zip(&expect)
        .map(|(&o, &e)| (o as f64 - e).powi(2) / e)
        .sum::<f64>()
        / h.len() as f64;
    assert!((0.8..=1.2).contains(&chi2), "{chi2}");
}

#[test]
fn nonclassical_whenever_cross_correlation_exceeds_two() {
    let (_, w) = model(28.3, 14.8);
    let cfg = DetectionConfig {
        measurement_time: 20.0,
        ..DetectionConfig::default()
    };
    let h = simulate_coincidences(&w, &cfg).unwrap();
    let g = normalized_cross_correlation(&h).unwrap();
    let g_max = g.iter().copied().fold(0.0, f64::max);
    assert!(g_max > 2.0);
    let c = cauchy_schwarz(g_max, THERMAL_AUTOCORRELATION, THERMAL_AUTOCORRELATION).unwrap();
    assert!(c > 1.0, "{c}");
    for gv in g.iter().copied().filter(|&v| v > 2.0) {
        assert!(cauchy_schwarz(gv, 2.0, 2.0).unwrap() > 1.0);
    }
}

fn round_trip(dc: f64, oc: f64, pairs: f64, seed: u64, param: Parameterization) -> (SystemParams, biphoton::FitResult) {
    let (p, w) = model(dc, oc);
    let h = simulate_coincidences(&w, &config(pairs, seed)).unwrap();
    let guess = initial_guess(&h, p.si_gamma13).unwrap();
    assert!(guess.beat_detected);
    let fit_model = FitModel {
        parameterization: param,
        ..FitModel::new(ModelKind::TwoComponent)
    };
    (p, fit_wavepacket(&h, &fit_model, &guess.params).unwrap())
}

#[test]
fn fit_recovers_generating_parameters() {
    for (dc, oc) in [(28.3, 14.8), (16.7, 14.8), (45.0, 14.8)] {
        let (p, fit) = round_trip(dc, oc, 1e6, 5, Parameterization::PlusMinus);
        let m = dressed_modes(&p).unwrap();
        assert!(fit.converged);
        assert!(
            rel(fit.estimates.gamma_minus, m.gamma_minus) < 0.05,
            "{dc}: {:?}",
            fit.estimates
        );
        assert!(
            rel(fit.estimates.gamma_plus, m.gamma_plus) < 0.05,
            "{dc}: {:?}",
            fit.estimates
        );
        assert!(
            rel(fit.estimates.omega_e, m.omega_e) < 0.05,
            "{dc}: {:?}",
            fit.estimates
        );
        assert!((0.8..1.2).contains(&fit.reduced_chi2), "{}", fit.reduced_chi2);
    }
}

#[test]
fn parameterizations_agree_at_optimum() {
    let (_, w) = model(28.3, 14.8);
    let h = simulate_coincidences(&w, &config(2e5, 21)).unwrap();
    let guess = initial_guess(&h, biphoton::units::SI_GAMMA13).unwrap();
    let curves: Vec<Vec<f64>> = [Parameterization::PlusMinus, Parameterization::SumDiff]
        .into_iter()
        .map(|param| {
            let m = FitModel {
                parameterization: param,
                ..FitModel::new(ModelKind::TwoComponent)
            };
            let fit = fit_wavepacket(&h, &m, &guess.params).unwrap();
            assert!(fit.converged);
            m.evaluate(&fit.estimates, h.len(), h.bin_width)
        })
        .collect();
    let peak = curves[0].iter().copied().fold(0.0, f64::max);
    for (a, b) in curves[0].iter().zip(&curves[1]) {
        assert!((a - b).abs() <= 1e-6 * peak, "{a} vs {b}");
    }
}

#[test]
fn standard_error_shrinks_with_data() {
    let seeds = 4;
    let mean_err = |pairs: f64| {
        (0..seeds)
            .map(|s| {
                round_trip(28.3, 14.8, pairs, 100 + s, Parameterization::PlusMinus)
                    .1
                    .stderr
                    .gamma_minus
            })
            .sum::<f64>()
            / seeds as f64
    };
    let ratio = mean_err(1e4) / mean_err(1e6);
    // 1/√N scaling predicts a factor of 10
    assert!(ratio > 10.0 / 1.5 && ratio < 10.0 * 1.5, "{ratio}");
}

#[test]
fn estimator_bias_over_seeded_runs() {
    let (p, _) = model(28.3, 14.8);
    let truth = dressed_modes(&p).unwrap().gamma_minus;
    let mut errs: Vec<f64> = (0..50)
        .map(|s| {
            rel(
                round_trip(28.3, 14.8, 1e6, 1000 + s, Parameterization::PlusMinus)
                    .1
                    .estimates
                    .gamma_minus,
                truth,
            )
        })
        .collect();
    errs.sort_by(f64::total_cmp);
    let median = 0.5 * (errs[24] + errs[25]);
    let p90 = errs[44];
    assert!(median < 0.02, "median {median}");
    assert!(p90 < 0.05, "p90 {p90}");
}
