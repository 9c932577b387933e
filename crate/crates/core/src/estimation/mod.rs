//! Least-squares fits of coincidence histograms to the analytic wavepackets.
//!
//! The model for bin k is `amplitude · ⟨shape⟩_k + background`, where
//! ⟨shape⟩_k is the exact average of the wavepacket shape over the bin,
//! shifted by the trigger offset t0. Averaging analytically keeps the model
//! smooth in t0 even for the single-exponential shape, whose onset is a step.

mod guess;
pub mod lm;

pub use guess::{initial_guess, InitialGuess};

use std::fmt;

use nalgebra::DMatrix;
use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::photostatistics::CoincidenceHistogram;
use crate::units::{rate_to_hz, SI_GAMMA13};

/// Which wavepacket shape is fitted.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    /// e^{−2γ+τ} + e^{−2γ−τ} − 2cos(Ωeτ)e^{−(γ++γ−)τ}
    TwoComponent,
    /// On-resonance form 2e^{−2γτ}(1 − cos Ωτ), i.e. γ+ = γ− = γ.
    Resonant,
    /// e^{−2γ−τ}, the filtered narrow component.
    SingleExponential,
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ModelKind::TwoComponent => "two_component",
            ModelKind::Resonant => "resonant",
            ModelKind::SingleExponential => "single_exponential",
        })
    }
}

/// Coordinates the optimizer sees for the two decay rates.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Parameterization {
    /// (γ+, γ−)
    #[default]
    PlusMinus,
    /// (γ+ + γ−, γ+ − γ−)
    SumDiff,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Param {
    Amplitude,
    GammaPlus,
    GammaMinus,
    OmegaE,
    Background,
    T0,
}

/// Model parameters: rates in γ13 units, `t0` in ns, amplitude and
/// background in counts per bin.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FitParams {
    pub amplitude: f64,
    pub gamma_plus: f64,
    pub gamma_minus: f64,
    pub omega_e: f64,
    pub background: f64,
    pub t0: f64,
}

impl FitParams {
    fn as_array(&self) -> [f64; 6] {
        [
            self.amplitude,
            self.gamma_plus,
            self.gamma_minus,
            self.omega_e,
            self.background,
            self.t0,
        ]
    }

    fn from_array(a: [f64; 6]) -> Self {
        Self {
            amplitude: a[0],
            gamma_plus: a[1],
            gamma_minus: a[2],
            omega_e: a[3],
            background: a[4],
            t0: a[5],
        }
    }

    pub const NAMES: [&'static str; 6] = [
        "amplitude",
        "gamma_plus",
        "gamma_minus",
        "omega_e",
        "background",
        "t0_ns",
    ];
}

/// Shape, coordinates and data selection of a fit.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FitModel {
    pub kind: ModelKind,
    pub parameterization: Parameterization,
    /// Parameters held at their initial values.
    pub fixed: Vec<Param>,
    /// Only bins fully inside [fit_start_ns, fit_end_ns] enter the objective.
    pub fit_start_ns: Option<f64>,
    pub fit_end_ns: Option<f64>,
    pub si_gamma13: f64,
    pub max_iterations: usize,
}

impl Default for FitModel {
    fn default() -> Self {
        Self {
            kind: ModelKind::TwoComponent,
            parameterization: Parameterization::PlusMinus,
            fixed: Vec::new(),
            fit_start_ns: None,
            fit_end_ns: None,
            si_gamma13: SI_GAMMA13,
            max_iterations: 400,
        }
    }
}

impl FitModel {
    pub fn new(kind: ModelKind) -> Self {
        Self {
            kind,
            ..Self::default()
        }
    }

    fn coords(&self) -> Result<Vec<Coord>> {
        use Coord::*;
        let rates: Vec<Coord> = match (self.kind, self.parameterization) {
            (ModelKind::TwoComponent, Parameterization::PlusMinus) => vec![GPlus, GMinus],
            (ModelKind::TwoComponent, Parameterization::SumDiff) => vec![GSum, GDiff],
            (ModelKind::Resonant, _) => vec![GBoth],
            (ModelKind::SingleExponential, _) => vec![GMinus],
        };
        let mut out = vec![Amp];
        out.extend(rates);
        if self.kind != ModelKind::SingleExponential {
            out.push(Omega);
        }
        out.extend([Bg, T0]);
        let is_fixed = |p: Param| self.fixed.contains(&p);
        if self.parameterization == Parameterization::SumDiff
            && self.kind == ModelKind::TwoComponent
            && (is_fixed(Param::GammaPlus) || is_fixed(Param::GammaMinus))
        {
            return Err(Error::invalid(
                "fixed",
                "individual rates cannot be fixed in the sum/difference parameterization",
            ));
        }
        out.retain(|c| match c {
            Amp => !is_fixed(Param::Amplitude),
            GPlus => !is_fixed(Param::GammaPlus),
            GMinus => !is_fixed(Param::GammaMinus),
            GBoth => !(is_fixed(Param::GammaPlus) || is_fixed(Param::GammaMinus)),
            GSum | GDiff => true,
            Omega => !is_fixed(Param::OmegaE),
            Bg => !is_fixed(Param::Background),
            T0 => !is_fixed(Param::T0),
        });
        Ok(out)
    }

    /// Complex exponential terms Σ c·e^{−z u} whose real part is the shape.
    fn terms(&self, p: &FitParams) -> Vec<(f64, C64)> {
        match self.kind {
            ModelKind::TwoComponent => vec![
                (1.0, C64::new(2.0 * p.gamma_plus, 0.0)),
                (1.0, C64::new(2.0 * p.gamma_minus, 0.0)),
                (-2.0, C64::new(p.gamma_plus + p.gamma_minus, -p.omega_e)),
            ],
            ModelKind::Resonant => {
                let g = p.gamma_minus;
                vec![(2.0, C64::new(2.0 * g, 0.0)), (-2.0, C64::new(2.0 * g, -p.omega_e))]
            }
            ModelKind::SingleExponential => vec![(1.0, C64::new(2.0 * p.gamma_minus, 0.0))],
        }
    }

    /// Shape value at delay `tau_ns` (no bin averaging).
    pub fn shape_at(&self, p: &FitParams, tau_ns: f64) -> f64 {
        let u = (tau_ns - p.t0) * 1e-9 * self.si_gamma13;
        if u < 0.0 {
            return 0.0;
        }
        self.terms(p).iter().map(|(c, z)| c * (-z * u).exp().re).sum()
    }

    /// Expected counts of bin [lo, hi) ns.
    pub fn bin_value(&self, p: &FitParams, lo_ns: f64, hi_ns: f64) -> f64 {
        let c = 1e-9 * self.si_gamma13;
        let a = (lo_ns - p.t0).max(0.0) * c;
        let b = (hi_ns - p.t0) * c;
        let width = (hi_ns - lo_ns) * c;
        let mut avg = 0.0;
        if b > a {
            for (coef, z) in self.terms(p) {
                let len = b - a;
                let zl = z * len;
                // ∫_a^b e^{−zu} du = e^{−za}(1 − e^{−z·len})/z
                let integral = if zl.norm() < 1e-6 {
                    (-z * a).exp() * len * (1.0 - 0.5 * zl)
                } else {
                    (-z * a).exp() * (1.0 - (-zl).exp()) / z
                };
                avg += coef * integral.re;
            }
            avg /= width;
        }
        p.amplitude * avg + p.background
    }

    /// Expected counts for bins of width `bin_width` ns starting at τ = 0.
    pub fn evaluate(&self, p: &FitParams, n_bins: usize, bin_width: f64) -> Vec<f64> {
        (0..n_bins)
            .map(|i| self.bin_value(p, i as f64 * bin_width, (i + 1) as f64 * bin_width))
            .collect()
    }

    fn bins_in_range(&self, h: &CoincidenceHistogram) -> Vec<usize> {
        let start = self.fit_start_ns.unwrap_or(f64::NEG_INFINITY);
        let end = self.fit_end_ns.unwrap_or(f64::INFINITY);
        (0..h.len())
            .filter(|&i| h.tau(i) >= start - 1e-9 && h.tau(i + 1) <= end + 1e-9)
            .collect()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Coord {
    Amp,
    GPlus,
    GMinus,
    GBoth,
    GSum,
    GDiff,
    Omega,
    Bg,
    T0,
}

const RATE_FLOOR: f64 = 1e-9;

fn read(coords: &[Coord], p: &FitParams) -> Vec<f64> {
    coords
        .iter()
        .map(|c| match c {
            Coord::Amp => p.amplitude,
            Coord::GPlus => p.gamma_plus,
            Coord::GMinus | Coord::GBoth => p.gamma_minus,
            Coord::GSum => p.gamma_plus + p.gamma_minus,
            Coord::GDiff => p.gamma_plus - p.gamma_minus,
            Coord::Omega => p.omega_e,
            Coord::Bg => p.background,
            Coord::T0 => p.t0,
        })
        .collect()
}

fn write(coords: &[Coord], x: &[f64], base: &FitParams) -> FitParams {
    let mut p = *base;
    let (mut sum, mut diff) = (None, None);
    for (c, &v) in coords.iter().zip(x) {
        match c {
            Coord::Amp => p.amplitude = v,
            Coord::GPlus => p.gamma_plus = v,
            Coord::GMinus => p.gamma_minus = v,
            Coord::GBoth => {
                p.gamma_plus = v;
                p.gamma_minus = v;
            }
            Coord::GSum => sum = Some(v),
            Coord::GDiff => diff = Some(v),
            Coord::Omega => p.omega_e = v,
            Coord::Bg => p.background = v,
            Coord::T0 => p.t0 = v,
        }
    }
    if let (Some(s), Some(d)) = (sum, diff) {
        p.gamma_plus = 0.5 * (s + d);
        p.gamma_minus = 0.5 * (s - d);
    }
    p
}

fn project(coords: &[Coord], x: &mut [f64]) {
    let mut sum_idx = None;
    for (k, c) in coords.iter().enumerate() {
        match c {
            Coord::Amp => x[k] = x[k].max(1e-300),
            Coord::GPlus | Coord::GMinus | Coord::GBoth | Coord::Omega => x[k] = x[k].max(RATE_FLOOR),
            Coord::GSum => {
                x[k] = x[k].max(2.0 * RATE_FLOOR);
                sum_idx = Some(k);
            }
            Coord::Bg => x[k] = x[k].max(0.0),
            Coord::GDiff | Coord::T0 => {}
        }
    }
    if let Some(s) = sum_idx {
        if let Some(d) = coords.iter().position(|c| *c == Coord::GDiff) {
            let lim = x[s] - 2.0 * RATE_FLOOR;
            x[d] = x[d].clamp(-lim, lim);
        }
    }
}

struct HistogramProblem<'a> {
    model: &'a FitModel,
    coords: Vec<Coord>,
    base: FitParams,
    edges: Vec<(f64, f64)>,
    data: Vec<f64>,
    sqrt_w: Vec<f64>,
}

impl lm::Problem for HistogramProblem<'_> {
    fn dim(&self) -> usize {
        self.coords.len()
    }

    fn n_residuals(&self) -> usize {
        self.data.len()
    }

    fn residuals(&self, x: &[f64], out: &mut [f64]) {
        let p = write(&self.coords, x, &self.base);
        for (i, &(lo, hi)) in self.edges.iter().enumerate() {
            out[i] = (self.data[i] - self.model.bin_value(&p, lo, hi)) * self.sqrt_w[i];
        }
    }

    fn project(&self, x: &mut [f64]) {
        project(&self.coords, x);
    }

    fn scale(&self, x: &[f64], k: usize) -> f64 {
        match self.coords[k] {
            // t0 is in ns; a bin width is its natural scale
            Coord::T0 => self.edges.first().map(|(lo, hi)| hi - lo).unwrap_or(1.0),
            Coord::GDiff => x[k]
                .abs()
                .max(1e-3 * x.iter().map(|v| v.abs()).fold(0.0, f64::max))
                .max(1e-6),
            Coord::Bg => x[k].abs().max(1.0),
            _ => x[k].abs().max(1e-6),
        }
    }
}

/// Estimates with standard errors from the curvature at the optimum.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub kind: ModelKind,
    pub estimates: FitParams,
    pub stderr: FitParams,
    /// χ² per degree of freedom with Poisson weights.
    pub reduced_chi2: f64,
    pub converged: bool,
    pub iterations: usize,
    /// The curvature matrix was (numerically) singular; some parameters are unidentifiable.
    pub singular: bool,
    /// 2γ− as an ordinary frequency.
    pub linewidth_hz: f64,
    pub linewidth_hz_stderr: f64,
    pub n_bins: usize,
    pub free: Vec<String>,
}

impl FitResult {
    /// (name, estimate, standard error) rows.
    pub fn table(&self) -> Vec<(&'static str, f64, f64)> {
        let e = self.estimates.as_array();
        let s = self.stderr.as_array();
        FitParams::NAMES
            .iter()
            .enumerate()
            .filter(|(i, _)| !(self.kind == ModelKind::SingleExponential && matches!(i, 1 | 3)))
            .map(|(i, name)| (*name, e[i], s[i]))
            .collect()
    }
}

/// Fits `h` starting from `init`.
///
/// Residuals are weighted by 1/max(counts, 1). The optimizer stops when the
/// relative decrease of the objective falls below 1e-10 or the scaled step
/// below 1e-12. A fit that runs out of iterations is returned with
/// `converged = false`.
pub fn fit_wavepacket(h: &CoincidenceHistogram, model: &FitModel, init: &FitParams) -> Result<FitResult> {
    if !(model.si_gamma13 > 0.0) {
        return Err(Error::invalid("si_gamma13", "must be positive"));
    }
    check_init(model, init)?;
    let coords = model.coords()?;
    let bins = model.bins_in_range(h);
    if bins.len() < 10 * coords.len() {
        return Err(Error::invalid(
            "histogram",
            format!(
                "{} bins in the fit range; need at least {} for {} free parameters",
                bins.len(),
                10 * coords.len(),
                coords.len()
            ),
        ));
    }
    let data: Vec<f64> = bins.iter().map(|&i| h.counts[i] as f64).collect();
    let problem = HistogramProblem {
        model,
        coords: coords.clone(),
        base: *init,
        edges: bins.iter().map(|&i| (h.tau(i), h.tau(i + 1))).collect(),
        sqrt_w: data.iter().map(|&c| 1.0 / c.max(1.0).sqrt()).collect(),
        data,
    };
    let settings = lm::Settings {
        max_iterations: model.max_iterations,
        ..lm::Settings::default()
    };
    let x0 = read(&coords, init);
    let out = lm::minimize(&problem, &x0, &settings);
    let estimates = write(&coords, &out.x, init);

    let (cov, singular) = covariance(&out.curvature);
    if singular {
        log::warn!("fit curvature is singular; standard errors are unreliable");
    }
    let param_cov = propagate(&coords, &out.x, init, &cov);
    let stderr = FitParams::from_array(std::array::from_fn(|i| {
        let v = param_cov[(i, i)];
        if v.is_finite() {
            v.max(0.0).sqrt()
        } else {
            f64::INFINITY
        }
    }));
    let dof = (problem.data.len() - coords.len()).max(1);
    Ok(FitResult {
        kind: model.kind,
        linewidth_hz: rate_to_hz(2.0 * estimates.gamma_minus, model.si_gamma13),
        linewidth_hz_stderr: rate_to_hz(2.0 * stderr.gamma_minus, model.si_gamma13),
        estimates,
        stderr,
        reduced_chi2: out.cost / dof as f64,
        converged: out.converged,
        iterations: out.iterations,
        singular,
        n_bins: problem.data.len(),
        free: coords.iter().map(|c| format!("{c:?}")).collect(),
    })
}

fn check_init(model: &FitModel, p: &FitParams) -> Result<()> {
    let vals = p.as_array();
    if vals.iter().any(|v| !v.is_finite()) {
        return Err(Error::invalid("init", "initial parameters must be finite"));
    }
    if !(p.amplitude > 0.0) {
        return Err(Error::invalid("init", "amplitude must be positive"));
    }
    if p.background < 0.0 {
        return Err(Error::invalid("init", "background must be non-negative"));
    }
    let needs_beat = model.kind != ModelKind::SingleExponential;
    let rates_ok = match model.kind {
        ModelKind::TwoComponent => p.gamma_plus > 0.0 && p.gamma_minus > 0.0,
        _ => p.gamma_minus > 0.0,
    };
    if !rates_ok || (needs_beat && !(p.omega_e > 0.0)) {
        return Err(Error::invalid("init", "rates must be positive"));
    }
    Ok(())
}

/// Inverse of the curvature, flagging near-singular matrices.
fn covariance(curv: &DMatrix<f64>) -> (DMatrix<f64>, bool) {
    let n = curv.nrows();
    let d: Vec<f64> = (0..n).map(|k| curv[(k, k)].max(0.0).sqrt()).collect();
    if d.iter().any(|&v| v == 0.0 || !v.is_finite()) {
        return (DMatrix::from_element(n, n, f64::INFINITY), true);
    }
    let scaled = DMatrix::from_fn(n, n, |i, j| curv[(i, j)] / (d[i] * d[j]));
    let eig = scaled.clone().symmetric_eigen();
    let min = eig.eigenvalues.iter().copied().fold(f64::INFINITY, f64::min);
    let max = eig.eigenvalues.iter().copied().fold(0.0, f64::max);
    let singular = !(min > 1e-13 * max);
    match scaled.try_inverse() {
        Some(inv) if !singular => (DMatrix::from_fn(n, n, |i, j| inv[(i, j)] / (d[i] * d[j])), false),
        _ => (DMatrix::from_element(n, n, f64::INFINITY), true),
    }
}

/// Covariance of the six named parameters from the covariance of the coordinates.
fn propagate(coords: &[Coord], x: &[f64], base: &FitParams, cov: &DMatrix<f64>) -> DMatrix<f64> {
    let n = coords.len();
    let p0 = write(coords, x, base).as_array();
    // the coordinate maps are linear, so unit differences give the exact Jacobian
    let t = DMatrix::from_fn(6, n, |i, k| {
        let mut xk = x.to_vec();
        xk[k] += 1.0;
        write(coords, &xk, base).as_array()[i] - p0[i]
    });
    if cov.iter().any(|v| !v.is_finite()) {
        return DMatrix::from_fn(6, 6, |i, j| {
            let touched = (0..n).any(|k| t[(i, k)] != 0.0) && i == j;
            if touched {
                f64::INFINITY
            } else {
                0.0
            }
        });
    }
    &t * cov * t.transpose()
}
