use std::hint::black_box;

use biphoton::wavepacket::{frequency_grid_for, SpectralWindow};
use biphoton::{
    apply_filter, chi3_approx, fit_wavepacket, g2_analytic, initial_guess, psi_numeric, simulate_coincidences,
    AmplitudeModel, EtalonFilter, FitModel, ModelKind, TimeGridConfig,
};
use biphoton_bench::{detection, model, narrow_center, working_point};
use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};

fn wavepackets(c: &mut Criterion) {
    let p = working_point();
    let mut g = c.benchmark_group("wavepacket");
    for n in [1001, 10_001] {
        let grid = TimeGridConfig::new(600.0, n).unwrap();
        g.bench_with_input(BenchmarkId::new("g2_analytic", n), &grid, |b, grid| {
            b.iter(|| g2_analytic(black_box(&p), &AmplitudeModel::default(), grid).unwrap())
        });
    }
    let grid = TimeGridConfig::new(600.0, 2001).unwrap();
    let fg = frequency_grid_for(&p, grid.tau_max, &SpectralWindow::default()).unwrap();
    let spec = chi3_approx(&p, &fg).unwrap();
    g.bench_function("psi_numeric", |b| {
        b.iter(|| psi_numeric(black_box(&spec), &grid, p.si_gamma13).unwrap())
    });
    let filter = EtalonFilter::narrowband(narrow_center());
    g.bench_function("filtered_psi_numeric", |b| {
        b.iter(|| {
            let s = apply_filter(black_box(&spec), &filter).unwrap();
            psi_numeric(&s, &grid, p.si_gamma13).unwrap()
        })
    });
    g.finish();
}

fn statistics(c: &mut Criterion) {
    let w = model(&TimeGridConfig::new(600.0, 6001).unwrap());
    let mut g = c.benchmark_group("photostatistics");
    g.sample_size(10);
    for pairs in [1e4, 1e5] {
        let cfg = detection(pairs);
        g.bench_with_input(
            BenchmarkId::new("simulate_coincidences", pairs as u64),
            &cfg,
            |b, cfg| b.iter(|| simulate_coincidences(black_box(&w), cfg).unwrap()),
        );
    }
    g.finish();

    let h = simulate_coincidences(&w, &detection(1e6)).unwrap();
    let guess = initial_guess(&h, working_point().si_gamma13).unwrap();
    let fit_model = FitModel::new(ModelKind::TwoComponent);
    let mut g = c.benchmark_group("estimation");
    g.sample_size(10);
    g.bench_function("initial_guess", |b| {
        b.iter(|| initial_guess(black_box(&h), working_point().si_gamma13).unwrap())
    });
    g.bench_function("fit_two_component", |b| {
        b.iter(|| fit_wavepacket(black_box(&h), &fit_model, &guess.params).unwrap())
    });
    g.finish();
}

criterion_group!(benches, wavepackets, statistics);
criterion_main!(benches);
