#![allow(dead_code)]

use biphoton::filtering::{apply_filters, EtalonFilter};
use biphoton::model::{chi3_approx, SystemParams};
use biphoton::photostatistics::CoincidenceHistogram;
use biphoton::wavepacket::{frequency_grid_for, psi_numeric, SpectralWindow, TimeGridConfig, Wavepacket};

/// Numeric wavepacket of the two-pole amplitude after `filters`.
pub fn filtered(p: &SystemParams, filters: &[EtalonFilter], tau_max: f64, n: usize) -> Wavepacket {
    let grid = frequency_grid_for(p, tau_max, &SpectralWindow::default()).unwrap();
    let spec = apply_filters(&chi3_approx(p, &grid).unwrap(), filters).unwrap();
    psi_numeric(&spec, &TimeGridConfig::new(tau_max, n).unwrap(), p.si_gamma13).unwrap()
}

/// Noiseless histogram sampling G² at bin centres, scaled to `peak` counts.
pub fn sampled_histogram(w: &Wavepacket, bin_width: f64, n_bins: usize, peak: f64) -> CoincidenceHistogram {
    let (_, max) = w.peak();
    let expected: Vec<f64> = (0..n_bins)
        .map(|i| peak * w.g2_at((i as f64 + 0.5) * bin_width) / max)
        .collect();
    CoincidenceHistogram::from_expected(&expected, bin_width, 1.0).unwrap()
}
