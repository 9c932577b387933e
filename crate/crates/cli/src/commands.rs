use std::path::PathBuf;

use anyhow::{bail, Context};
use biphoton::filtering::beat_suppression;
use biphoton::modulation::{default_mask, front_end_delay};
use biphoton::photostatistics::{read_histogram, write_histogram, HistogramMetadata, THERMAL_AUTOCORRELATION};
use biphoton::units::{fiber_delay_ns, rate_to_hz};
use biphoton::wavepacket::{frequency_grid_for, matched_amplitude};
use biphoton::{
    apply_filters, apply_mask, beat_period, cauchy_schwarz, chi3_approx, chi3_full, component_weights, dressed_modes,
    fit_wavepacket, g2_analytic, initial_guess, loss_budget_rate, normalized_cross_correlation, psi_numeric,
    simulate_coincidences, spectrum_power, AmplitudeModel, ComplexSpectrum, EtalonFilter, FitModel, ModelKind,
    ModulationMask, SystemParams, Wavepacket,
};
use log::info;
use rayon::prelude::*;

use crate::config::{RunConfig, SweepParameter};
use crate::output::{print_report, Output};
use crate::{Invalid, Numerical};

fn entry(k: &str, v: impl ToString) -> (String, String) {
    (k.to_string(), v.to_string())
}

fn raw_spectrum(cfg: &RunConfig) -> anyhow::Result<ComplexSpectrum> {
    let grid = frequency_grid_for(&cfg.system, cfg.grid.tau_max, &cfg.spectrum)?;
    Ok(chi3_approx(&cfg.system, &grid)?)
}

fn numeric(cfg: &RunConfig, filters: &[EtalonFilter]) -> anyhow::Result<Wavepacket> {
    let spec = apply_filters(&raw_spectrum(cfg)?, filters)?;
    Ok(psi_numeric(&spec, &cfg.grid, cfg.system.si_gamma13)?)
}

/// The delay distribution the detectors see: analytic without filters, numeric with them.
fn source_model(cfg: &RunConfig) -> anyhow::Result<Wavepacket> {
    let filters = cfg.filters()?;
    if filters.is_empty() {
        Ok(g2_analytic(&cfg.system, &AmplitudeModel::default(), &cfg.grid)?)
    } else {
        numeric(cfg, &filters)
    }
}

pub fn dressed(cfg: &RunConfig) -> anyhow::Result<()> {
    let p = &cfg.system;
    let m = dressed_modes(p)?;
    let hz = |r: f64| rate_to_hz(r, p.si_gamma13);
    let mut rows = vec![
        entry("delta_c", p.delta_c),
        entry("omega_c", p.omega_c),
        entry("omega_e", m.omega_e),
        entry("delta_plus", m.delta_plus),
        entry("delta_minus", m.delta_minus),
        entry("gamma_plus", m.gamma_plus),
        entry("gamma_minus", m.gamma_minus),
        entry("fwhm_plus", m.fwhm_plus()),
        entry("fwhm_minus", m.fwhm_minus()),
        entry("fwhm_plus_hz", hz(m.fwhm_plus())),
        entry("fwhm_minus_hz", hz(m.fwhm_minus())),
        entry("narrow_pole", m.narrow_pole()),
    ];
    if let Ok(t) = beat_period(p) {
        rows.push(entry("beat_period_ns", t));
    }
    let w = component_weights(p)?;
    rows.push(entry("narrow_to_broad_weight", w.ratio()));
    print_report(&rows);
    let path = Output::new(cfg, "dressed")?.report("dressed", &rows)?;
    info!("wrote {}", path.display());
    Ok(())
}

fn write_spectrum(cfg: &RunConfig, out: &Output) -> anyhow::Result<PathBuf> {
    let approx = raw_spectrum(cfg)?;
    let full = chi3_full(&cfg.system, &approx.grid())?;
    let filters = cfg.filters()?;
    let mut columns = vec!["omega_over_gamma13", "power_approx", "power_full"];
    let mut series = vec![spectrum_power(&approx)?, spectrum_power(&full)?];
    if !filters.is_empty() {
        columns.push("power_filtered");
        series.push(spectrum_power(&apply_filters(&approx, &filters)?)?);
    }
    let rows = (0..approx.len()).map(|i| {
        let mut r = vec![approx.omega(i)];
        r.extend(series.iter().map(|s| s[i]));
        r
    });
    out.table("spectrum.csv", &columns, rows)
}

pub fn spectrum(cfg: &RunConfig) -> anyhow::Result<()> {
    let out = Output::new(cfg, "spectrum")?;
    let path = write_spectrum(cfg, &out)?;
    println!("wrote {}", path.display());
    Ok(())
}

pub fn wavepacket(cfg: &RunConfig) -> anyhow::Result<()> {
    let p = &cfg.system;
    let out = Output::new(cfg, "wavepacket")?;
    let analytic = g2_analytic(p, &matched_amplitude(p)?, &cfg.grid)?;
    let raw = numeric(cfg, &[])?;
    let filters = cfg.filters()?;
    let filtered = if filters.is_empty() {
        None
    } else {
        Some(numeric(cfg, &filters)?)
    };

    let peak = analytic.peak().1;
    let deviation = analytic
        .g2
        .iter()
        .zip(&raw.g2)
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max)
        / peak;
    let mut columns = vec!["tau_ns", "g2_analytic", "g2_numeric"];
    if filtered.is_some() {
        columns.push("g2_filtered");
    }
    let rows = (0..analytic.len()).map(|i| {
        let mut r = vec![analytic.tau(i), analytic.g2[i], raw.g2[i]];
        if let Some(f) = &filtered {
            r.push(f.g2[i]);
        }
        r
    });
    let path = out.table("wavepacket.csv", &columns, rows)?;
    let spec = write_spectrum(cfg, &out)?;
    print_report(&[
        entry("max_relative_deviation", format!("{deviation:.3e}")),
        entry("temporal_length_ns", analytic.temporal_length()),
        entry("wavepacket", path.display()),
        entry("spectrum", spec.display()),
    ]);
    Ok(())
}

pub fn filter(cfg: &RunConfig) -> anyhow::Result<()> {
    let p = &cfg.system;
    let mut filters = cfg.filters()?;
    if filters.is_empty() {
        let center = dressed_modes(p)?.narrow_pole().re;
        info!("no [[filter]] configured; using the 15 MHz etalon on the narrow mode at {center:.3}");
        filters.push(EtalonFilter::narrowband(center));
    }
    let before = numeric(cfg, &[])?;
    let after = numeric(cfg, &filters)?;
    let period = beat_period(p)?;
    let s = beat_suppression(&before, &after, period)?;
    let path = Output::new(cfg, "filter")?.table(
        "filter.csv",
        &["tau_ns", "g2_in", "g2_out"],
        (0..before.len()).map(|i| vec![before.tau(i), before.g2[i], after.g2[i]]),
    )?;
    print_report(&[
        entry("beat_period_ns", period),
        entry("depth_before", s.depth_before),
        entry("depth_after", s.depth_after),
        entry("energy_ratio", after.energy() / before.energy()),
        entry("output", path.display()),
    ]);
    Ok(())
}

pub fn montecarlo(cfg: &RunConfig) -> anyhow::Result<()> {
    let det = cfg.detection.clone().unwrap_or_default();
    let model = source_model(cfg)?;
    let h = simulate_coincidences(&model, &det)?;
    let out = Output::new(cfg, "montecarlo")?.with_seed(det.rng_seed);
    let path = out.path("histogram.csv");
    let meta = HistogramMetadata::for_histogram(&h, Some(det.rng_seed), serde_json::to_value(cfg)?);
    write_histogram(&path, &h, &meta)?;

    let g = normalized_cross_correlation(&h)?;
    let (k, g_max) = g
        .iter()
        .copied()
        .enumerate()
        .fold((0, 0.0), |acc, (i, v)| if v > acc.1 { (i, v) } else { acc });
    let rel = 1.0 / (h.counts[k].max(1) as f64).sqrt();
    let c = cauchy_schwarz(g_max, THERMAL_AUTOCORRELATION, THERMAL_AUTOCORRELATION)?;
    print_report(&[
        entry("coincidences", h.total()),
        entry("expected_pairs", det.expected_detected_pairs()),
        entry("accidental_floor", h.accidental_floor()),
        entry("g_cross_max", format!("{g_max:.4} ± {:.4}", g_max * rel)),
        entry("cauchy_schwarz", format!("{c:.4} ± {:.4}", 2.0 * c * rel)),
        entry("histogram", path.display()),
    ]);
    Ok(())
}

pub fn fit(cfg: &RunConfig, histogram: Option<PathBuf>) -> anyhow::Result<()> {
    let path = histogram.unwrap_or_else(|| cfg.output.dir.join("histogram.csv"));
    let (h, _) = read_histogram(&path).with_context(|| format!("reading {}", path.display()))?;
    let model = cfg
        .fit
        .clone()
        .unwrap_or_else(|| FitModel::new(ModelKind::TwoComponent));
    let guess = initial_guess(&h, model.si_gamma13)?;
    if model.kind == ModelKind::TwoComponent && !guess.beat_detected {
        log::warn!(
            "no beat found in the histogram; consider fit.kind = \"{}\"",
            guess.suggested
        );
    }
    let r = fit_wavepacket(&h, &model, &guess.params)?;

    let out = Output::new(cfg, "fit")?;
    let mut rows: Vec<(String, String)> = r
        .table()
        .into_iter()
        .map(|(name, est, err)| entry(name, format!("{est} ± {err}")))
        .collect();
    rows.extend([
        entry("model", r.kind),
        entry(
            "linewidth_hz",
            format!("{} ± {}", r.linewidth_hz, r.linewidth_hz_stderr),
        ),
        entry("reduced_chi2", r.reduced_chi2),
        entry("converged", r.converged),
        entry("singular", r.singular),
        entry("iterations", r.iterations),
        entry("n_bins", r.n_bins),
    ]);
    print_report(&rows);
    let written = if cfg.output.format == crate::config::OutputFormat::Csv {
        out.records(
            "fit.csv",
            &["parameter", "estimate", "stderr"],
            r.table()
                .into_iter()
                .map(|(n, e, s)| vec![n.to_string(), e.to_string(), s.to_string()])
                .chain([
                    vec![
                        "linewidth_hz".into(),
                        r.linewidth_hz.to_string(),
                        r.linewidth_hz_stderr.to_string(),
                    ],
                    vec!["reduced_chi2".into(), r.reduced_chi2.to_string(), String::new()],
                ]),
        )?
    } else {
        out.report("fit", &rows)?
    };
    info!("wrote {}", written.display());
    if !r.converged {
        bail!(Numerical(format!(
            "fit did not converge after {} iterations",
            r.iterations
        )));
    }
    Ok(())
}

fn read_mask_csv(path: &std::path::Path) -> anyhow::Result<ModulationMask> {
    let mut reader = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .from_path(path)
        .with_context(|| format!("reading {}", path.display()))?;
    let mut t = Vec::new();
    let mut v = Vec::new();
    for rec in reader.deserialize() {
        let (ti, vi): (f64, f64) = rec.map_err(|e| Invalid(format!("{}: {e}", path.display())))?;
        t.push(ti);
        v.push(vi);
    }
    if t.len() < 2 {
        bail!(Invalid(format!("{}: need at least two mask samples", path.display())));
    }
    let step = t[1] - t[0];
    if t.windows(2)
        .any(|w| ((w[1] - w[0]) - step).abs() > 1e-9 * step.abs().max(1.0))
    {
        bail!(Invalid(format!("{}: samples must be uniformly spaced", path.display())));
    }
    Ok(ModulationMask::custom(t[0], step, v))
}

pub fn modulate(cfg: &RunConfig) -> anyhow::Result<()> {
    let p = &cfg.system;
    let mask = match (&cfg.modulate.mask_csv, &cfg.mask) {
        (Some(path), _) => read_mask_csv(path)?,
        (None, Some(m)) => m.clone(),
        (None, None) => default_mask(p)?,
    };
    mask.validate()?;
    let delay = match cfg.modulate.fiber_length_m {
        Some(l) => fiber_delay_ns(l, cfg.modulate.group_index.unwrap_or(1.468)),
        None => cfg.modulate.delay_ns,
    };
    let model = source_model(cfg)?;
    let shaped = apply_mask(&model, &mask, delay)?;
    // record the mask actually used, including its convention
    let resolved = RunConfig {
        mask: Some(mask.clone()),
        ..cfg.clone()
    };
    let path = Output::new(&resolved, "modulate")?.table(
        "modulated.csv",
        &["tau_ns", "g2_in", "mask", "g2_out"],
        (0..model.len()).map(|i| {
            let t = model.tau(i);
            vec![t, model.g2[i], mask.value(t - delay), shaped.g2[i]]
        }),
    )?;
    let (lo, hi) = mask.window();
    let mut rows = vec![
        entry("delay_ns", delay),
        entry("mask_window_ns", format!("[{}, {}]", lo + delay, hi + delay)),
        entry("convention", format!("{:?}", mask.convention).to_lowercase()),
        entry("transmitted_fraction", shaped.energy() / model.energy()),
    ];
    if let Ok(t) = beat_period(p) {
        rows.push(entry("pulse_train_period_ns", t));
    }
    if let Ok(f) = front_end_delay(p, 0.1) {
        rows.push(entry("front_end_ns", f));
    }
    rows.push(entry("output", path.display()));
    print_report(&rows);
    Ok(())
}

pub fn budget(cfg: &RunConfig) -> anyhow::Result<()> {
    let chain = cfg.budget.chain();
    let rate = loss_budget_rate(cfg.budget.detected_rate, &chain)?;
    let mut rows: Vec<(String, String)> = chain.factors.iter().map(|f| entry(&f.label, f.efficiency)).collect();
    rows.extend([
        entry("total_efficiency", chain.total_efficiency()),
        entry("detected_rate_per_s", cfg.budget.detected_rate),
        entry("generated_rate_per_s", rate),
    ]);
    print_report(&rows);
    let path = Output::new(cfg, "budget")?.report("budget", &rows)?;
    info!("wrote {}", path.display());
    Ok(())
}

pub fn sweep(cfg: &RunConfig) -> anyhow::Result<()> {
    let rows = cfg
        .sweep
        .points()
        .into_par_iter()
        .map(|x| {
            let p = match cfg.sweep.parameter {
                SweepParameter::DeltaC => SystemParams {
                    delta_c: x,
                    ..cfg.system
                },
                SweepParameter::OmegaC => SystemParams {
                    omega_c: x,
                    ..cfg.system
                },
            };
            let m = dressed_modes(&p)?;
            let period = beat_period(&p).unwrap_or(f64::INFINITY);
            let length = g2_analytic(&p, &AmplitudeModel::default(), &cfg.grid)?.temporal_length();
            Ok(vec![
                p.delta_c,
                p.omega_c,
                m.omega_e,
                m.delta_plus,
                m.delta_minus,
                m.fwhm_plus(),
                m.fwhm_minus(),
                rate_to_hz(m.fwhm_minus(), p.si_gamma13),
                period,
                length,
            ])
        })
        .collect::<biphoton::Result<Vec<_>>>()?;
    let path = Output::new(cfg, "sweep")?.table(
        "sweep.csv",
        &[
            "delta_c",
            "omega_c",
            "omega_e",
            "delta_plus",
            "delta_minus",
            "fwhm_plus",
            "fwhm_minus",
            "fwhm_minus_hz",
            "beat_period_ns",
            "temporal_length_ns",
        ],
        rows.iter().cloned(),
    )?;
    for r in &rows {
        println!(
            "Δc = {:>8.3}  Ωc = {:>7.3}  2γ− = {:.4}  period = {:.3} ns",
            r[0], r[1], r[6], r[8]
        );
    }
    println!("wrote {}", path.display());
    Ok(())
}
