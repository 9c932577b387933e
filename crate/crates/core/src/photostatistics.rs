//! Synthetic coincidence counting and the derived photon statistics.
//!
//! The simulator emits pairs as a Poisson process, draws each pair's delay
//! from the model G²(τ), thins both photons by their detection efficiency,
//! adds uncorrelated background singles, and then builds a start–stop
//! histogram of t_as − t_s exactly as a time-to-digital converter would.
//!
//! The measurement time is cut into fixed chunks with independent random
//! streams, so the histogram depends on the seed and the chunk length but
//! not on how many worker threads process the chunks.

use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::wavepacket::Wavepacket;

const PS_PER_NS: f64 = 1e3;
const PS_PER_S: f64 = 1e12;

/// Detector, path and run settings of a simulated coincidence measurement.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DetectionConfig {
    /// Generated pairs per second while the source is on.
    pub pair_rate: f64,
    pub qe_stokes: f64,
    pub qe_antistokes: f64,
    pub channel_t_stokes: f64,
    pub channel_t_antistokes: f64,
    pub duty_cycle: f64,
    /// Seconds.
    pub measurement_time: f64,
    /// Histogram bin width t_c in ns.
    pub bin_width: f64,
    /// Uncorrelated singles (background plus dark counts) per second.
    pub background_s: f64,
    pub background_as: f64,
    pub rng_seed: u64,
    /// Histogram span in ns; defaults to the model's delay range.
    pub window: Option<f64>,
    /// Seconds of measurement per independent random stream.
    pub chunk_seconds: f64,
}

impl Default for DetectionConfig {
    fn default() -> Self {
        Self {
            pair_rate: 10_000.0,
            qe_stokes: 0.6,
            qe_antistokes: 0.6,
            channel_t_stokes: 0.5,
            channel_t_antistokes: 0.5,
            duty_cycle: 0.2,
            measurement_time: 600.0,
            bin_width: 1.0,
            background_s: 200.0,
            background_as: 200.0,
            rng_seed: 1,
            window: None,
            chunk_seconds: 1.0,
        }
    }
}

impl DetectionConfig {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("qe_stokes", self.qe_stokes),
            ("qe_antistokes", self.qe_antistokes),
            ("channel_t_stokes", self.channel_t_stokes),
            ("channel_t_antistokes", self.channel_t_antistokes),
            ("duty_cycle", self.duty_cycle),
        ] {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::invalid(name, format!("must lie in [0, 1], got {v}")));
            }
        }
        for (name, v) in [
            ("pair_rate", self.pair_rate),
            ("background_s", self.background_s),
            ("background_as", self.background_as),
        ] {
            if !(v >= 0.0) || !v.is_finite() {
                return Err(Error::invalid(name, format!("must be a non-negative rate, got {v}")));
            }
        }
        if !(self.bin_width > 0.0) {
            return Err(Error::invalid("bin_width", "must be positive"));
        }
        if !(self.measurement_time > 0.0) || !self.measurement_time.is_finite() {
            return Err(Error::invalid("measurement_time", "must be positive"));
        }
        if !(self.chunk_seconds > 0.0) {
            return Err(Error::invalid("chunk_seconds", "must be positive"));
        }
        if let Some(w) = self.window {
            if !(w >= self.bin_width) {
                return Err(Error::invalid("window", "must span at least one bin"));
            }
        }
        Ok(())
    }

    pub fn efficiency_stokes(&self) -> f64 {
        self.qe_stokes * self.channel_t_stokes
    }

    pub fn efficiency_antistokes(&self) -> f64 {
        self.qe_antistokes * self.channel_t_antistokes
    }

    /// Expected number of pairs with both photons detected.
    pub fn expected_detected_pairs(&self) -> f64 {
        self.pair_rate
            * self.duty_cycle
            * self.measurement_time
            * self.efficiency_stokes()
            * self.efficiency_antistokes()
    }
}

/// Start–stop coincidence histogram with bins [k·t_c, (k+1)·t_c).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CoincidenceHistogram {
    /// ns
    pub bin_width: f64,
    pub counts: Vec<u64>,
    pub n_singles_s: u64,
    pub n_singles_as: u64,
    /// s
    pub measurement_time: f64,
}

impl CoincidenceHistogram {
    /// Left edge of bin `i` in ns.
    pub fn tau(&self, i: usize) -> f64 {
        i as f64 * self.bin_width
    }

    pub fn tau_center(&self, i: usize) -> f64 {
        (i as f64 + 0.5) * self.bin_width
    }

    pub fn len(&self) -> usize {
        self.counts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.counts.is_empty()
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    /// Expected uncorrelated coincidences per bin, S_s·S_as·t_c·T.
    pub fn accidental_floor(&self) -> f64 {
        self.n_singles_s as f64 * self.n_singles_as as f64 * self.bin_width * 1e-9 / self.measurement_time
    }

    /// Builds an integer histogram from noiseless expected counts.
    pub fn from_expected(expected: &[f64], bin_width: f64, measurement_time: f64) -> Result<Self> {
        if expected.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
            return Err(Error::invalid("expected", "counts must be finite and non-negative"));
        }
        let counts: Vec<u64> = expected.iter().map(|v| v.round() as u64).collect();
        let total: u64 = counts.iter().sum();
        Ok(Self {
            bin_width,
            counts,
            n_singles_s: total,
            n_singles_as: total,
            measurement_time,
        })
    }

    fn validate(&self) -> Result<()> {
        if !(self.bin_width > 0.0) {
            return Err(Error::invalid("bin_width", "must be positive"));
        }
        if !(self.measurement_time > 0.0) {
            return Err(Error::invalid("measurement_time", "must be positive"));
        }
        Ok(())
    }
}

/// Inverse-CDF sampler for a piecewise-linear density on a wavepacket grid.
#[derive(Clone, Debug)]
pub struct DelaySampler {
    tau_min: f64,
    step: f64,
    density: Vec<f64>,
    cdf: Vec<f64>,
}

impl DelaySampler {
    pub fn new(model: &Wavepacket) -> Result<Self> {
        if model.len() < 2 || !(model.tau_step > 0.0) {
            return Err(Error::Normalization("model needs at least two samples".into()));
        }
        if model.g2.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
            return Err(Error::Normalization("model G² must be finite and non-negative".into()));
        }
        let mut cdf = Vec::with_capacity(model.len());
        let mut acc = 0.0;
        cdf.push(0.0);
        for w in model.g2.windows(2) {
            acc += 0.5 * (w[0] + w[1]) * model.tau_step;
            cdf.push(acc);
        }
        if !(acc > 0.0) {
            return Err(Error::Normalization("model G² integrates to zero".into()));
        }
        Ok(Self {
            tau_min: model.tau_min,
            step: model.tau_step,
            density: model.g2.clone(),
            cdf,
        })
    }

    pub fn total(&self) -> f64 {
        *self.cdf.last().unwrap()
    }

    /// One delay in ns.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let u = rng.random::<f64>() * self.total();
        let cell = self.cdf.partition_point(|&c| c <= u).clamp(1, self.cdf.len() - 1) - 1;
        let r = u - self.cdf[cell];
        let a = self.density[cell];
        let slope = (self.density[cell + 1] - a) / self.step;
        // solve a·x + slope·x²/2 = r on [0, step]
        let disc = (a * a + 2.0 * slope * r).max(0.0);
        let denom = a + disc.sqrt();
        let x = if denom > 0.0 { 2.0 * r / denom } else { 0.0 };
        self.tau_min + cell as f64 * self.step + x.clamp(0.0, self.step)
    }
}

fn chunk_rng(seed: u64, chunk: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(chunk);
    rng
}

fn poisson<R: Rng + ?Sized>(mean: f64, rng: &mut R) -> u64 {
    if mean <= 0.0 {
        return 0;
    }
    Poisson::new(mean).map(|d| d.sample(rng) as u64).unwrap_or(0)
}

struct ChunkEvents {
    stokes: Vec<u64>,
    anti: Vec<u64>,
}

fn simulate_chunk(index: u64, start_s: f64, end_s: f64, cfg: &DetectionConfig, sampler: &DelaySampler) -> ChunkEvents {
    let mut rng = chunk_rng(cfg.rng_seed, index);
    let dur = end_s - start_s;
    let start_ps = start_s * PS_PER_S;
    let dur_ps = dur * PS_PER_S;
    let (eta_s, eta_as) = (cfg.efficiency_stokes(), cfg.efficiency_antistokes());

    let n_pairs = poisson(cfg.pair_rate * cfg.duty_cycle * dur, &mut rng);
    let mut stokes = Vec::new();
    let mut anti = Vec::new();
    for _ in 0..n_pairs {
        let t = start_ps + rng.random::<f64>() * dur_ps;
        let tau = sampler.sample(&mut rng) * PS_PER_NS;
        let det_s = rng.random::<f64>() < eta_s;
        let det_as = rng.random::<f64>() < eta_as;
        if det_s {
            stokes.push(t.round() as u64);
        }
        if det_as {
            anti.push((t + tau).max(0.0).round() as u64);
        }
    }
    let n_bg_s = poisson(cfg.background_s * dur, &mut rng);
    for _ in 0..n_bg_s {
        stokes.push((start_ps + rng.random::<f64>() * dur_ps).round() as u64);
    }
    let n_bg_as = poisson(cfg.background_as * dur, &mut rng);
    for _ in 0..n_bg_as {
        anti.push((start_ps + rng.random::<f64>() * dur_ps).round() as u64);
    }
    stokes.sort_unstable();
    anti.sort_unstable();
    ChunkEvents { stokes, anti }
}

/// Histograms every anti-Stokes click falling in [t_s, t_s + window) after each Stokes click.
pub fn start_stop_histogram(stokes: &[u64], anti: &[u64], bin_width_ns: f64, n_bins: usize) -> Vec<u64> {
    let bin_ps = bin_width_ns * PS_PER_NS;
    let window = (n_bins as f64 * bin_ps).ceil() as u64;
    stokes
        .par_chunks(1 << 15)
        .map(|block| {
            let mut hist = vec![0u64; n_bins];
            let mut j = anti.partition_point(|&a| a < block[0]);
            for &ts in block {
                while j < anti.len() && anti[j] < ts {
                    j += 1;
                }
                let mut k = j;
                while k < anti.len() && anti[k] - ts < window {
                    let bin = ((anti[k] - ts) as f64 / bin_ps) as usize;
                    if bin < n_bins {
                        hist[bin] += 1;
                    }
                    k += 1;
                }
            }
            hist
        })
        .reduce(
            || vec![0u64; n_bins],
            |mut a, b| {
                a.iter_mut().zip(b).for_each(|(x, y)| *x += y);
                a
            },
        )
}

/// Monte Carlo coincidence measurement of `model` under `cfg`.
pub fn simulate_coincidences(model: &Wavepacket, cfg: &DetectionConfig) -> Result<CoincidenceHistogram> {
    cfg.validate()?;
    let sampler = DelaySampler::new(model)?;
    let window = cfg.window.unwrap_or(model.tau_end());
    let n_bins = (window / cfg.bin_width).round().max(1.0) as usize;

    let n_chunks = (cfg.measurement_time / cfg.chunk_seconds).ceil().max(1.0) as u64;
    let chunks: Vec<ChunkEvents> = (0..n_chunks)
        .into_par_iter()
        .map(|k| {
            let start = k as f64 * cfg.chunk_seconds;
            let end = ((k + 1) as f64 * cfg.chunk_seconds).min(cfg.measurement_time);
            simulate_chunk(k, start, end, cfg, &sampler)
        })
        .collect();

    let stokes: Vec<u64> = chunks.iter().flat_map(|c| c.stokes.iter().copied()).collect();
    let mut anti: Vec<u64> = chunks.iter().flat_map(|c| c.anti.iter().copied()).collect();
    drop(chunks);
    // delayed photons can spill past their chunk boundary
    anti.par_sort_unstable();

    let counts = if stokes.is_empty() {
        vec![0; n_bins]
    } else {
        start_stop_histogram(&stokes, &anti, cfg.bin_width, n_bins)
    };
    Ok(CoincidenceHistogram {
        bin_width: cfg.bin_width,
        counts,
        n_singles_s: stokes.len() as u64,
        n_singles_as: anti.len() as u64,
        measurement_time: cfg.measurement_time,
    })
}

/// Runs [`simulate_coincidences`] on a dedicated pool of `workers` threads.
pub fn simulate_coincidences_with_workers(
    model: &Wavepacket,
    cfg: &DetectionConfig,
    workers: usize,
) -> Result<CoincidenceHistogram> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .map_err(|e| Error::invalid("workers", e.to_string()))?;
    pool.install(|| simulate_coincidences(model, cfg))
}

/// g_{s,as}(τ) = counts·T / (N_s·N_as·t_c).
pub fn normalized_cross_correlation(h: &CoincidenceHistogram) -> Result<Vec<f64>> {
    h.validate()?;
    if h.n_singles_s == 0 || h.n_singles_as == 0 {
        return Err(Error::DegenerateData(
            "singles counts are zero; g(τ) is undefined".into(),
        ));
    }
    let norm = h.measurement_time / (h.n_singles_s as f64 * h.n_singles_as as f64 * h.bin_width * 1e-9);
    Ok(h.counts.iter().map(|&c| c as f64 * norm).collect())
}

/// Thermal value of the unheralded auto-correlations g_ss(0), g_asas(0).
pub const THERMAL_AUTOCORRELATION: f64 = 2.0;

/// C = g_cross² / (g_ss(0)·g_asas(0)); C > 1 violates the classical bound.
pub fn cauchy_schwarz(g_cross_max: f64, g_auto_s: f64, g_auto_as: f64) -> Result<f64> {
    if !(g_auto_s > 0.0) || !(g_auto_as > 0.0) {
        return Err(Error::invalid(
            "g_auto",
            format!("auto-correlations must be positive, got {g_auto_s} and {g_auto_as}"),
        ));
    }
    Ok(g_cross_max * g_cross_max / (g_auto_s * g_auto_as))
}

/// Ordered chain of efficiencies between generation and detection.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LossBudget {
    pub factors: Vec<LossFactor>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LossFactor {
    pub label: String,
    pub efficiency: f64,
}

impl LossBudget {
    pub fn new(factors: impl IntoIterator<Item = (impl Into<String>, f64)>) -> Result<Self> {
        let b = Self {
            factors: factors
                .into_iter()
                .map(|(label, efficiency)| LossFactor {
                    label: label.into(),
                    efficiency,
                })
                .collect(),
        };
        b.validate()?;
        Ok(b)
    }

    /// Detector efficiencies, etalon/fiber transmissions, channel
    /// transmittances and duty cycle of the sub-MHz measurement.
    pub fn narrowband_setup() -> Self {
        Self::new([
            ("detector QE, Stokes", 0.6),
            ("detector QE, anti-Stokes", 0.6),
            ("broadband etalon + fiber, Stokes", 0.45),
            ("narrowband etalon + fiber, anti-Stokes", 0.026),
            ("channel transmittance, Stokes", 0.5),
            ("channel transmittance, anti-Stokes", 0.5),
            ("duty cycle", 0.2),
        ])
        .expect("valid factors")
    }

    pub fn validate(&self) -> Result<()> {
        for f in &self.factors {
            if !(f.efficiency > 0.0 && f.efficiency <= 1.0) {
                return Err(Error::invalid(
                    "efficiency",
                    format!("factor `{}` = {} outside (0, 1]", f.label, f.efficiency),
                ));
            }
        }
        Ok(())
    }

    pub fn total_efficiency(&self) -> f64 {
        self.factors.iter().map(|f| f.efficiency).product()
    }
}

/// Generated pair rate that yields `detected_rate` after the losses in `budget`.
pub fn loss_budget_rate(detected_rate: f64, budget: &LossBudget) -> Result<f64> {
    budget.validate()?;
    if !(detected_rate >= 0.0) {
        return Err(Error::invalid("detected_rate", "must be non-negative"));
    }
    Ok(detected_rate / budget.total_efficiency())
}

/// Sidecar record written next to every exported histogram.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HistogramMetadata {
    pub tool: String,
    pub version: String,
    pub bin_width_ns: f64,
    pub measurement_time_s: f64,
    pub n_singles_s: u64,
    pub n_singles_as: u64,
    pub rng_seed: Option<u64>,
    #[serde(default)]
    pub config: serde_json::Value,
}

impl HistogramMetadata {
    pub fn for_histogram(h: &CoincidenceHistogram, rng_seed: Option<u64>, config: serde_json::Value) -> Self {
        Self {
            tool: env!("CARGO_PKG_NAME").to_string(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            bin_width_ns: h.bin_width,
            measurement_time_s: h.measurement_time,
            n_singles_s: h.n_singles_s,
            n_singles_as: h.n_singles_as,
            rng_seed,
            config,
        }
    }
}

/// `histogram.csv` → `histogram.meta.json`.
pub fn sidecar_path(csv_path: &Path) -> PathBuf {
    csv_path.with_extension("meta.json")
}

/// Writes `tau_ns,counts` rows (left bin edges) plus the JSON sidecar.
pub fn write_histogram(path: &Path, h: &CoincidenceHistogram, meta: &HistogramMetadata) -> Result<()> {
    let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(out, "# {} {}", meta.tool, meta.version)?;
    if let Some(seed) = meta.rng_seed {
        writeln!(out, "# seed: {seed}")?;
    }
    writeln!(out, "# metadata: {}", sidecar_path(path).display())?;
    writeln!(out, "tau_ns,counts")?;
    for (i, c) in h.counts.iter().enumerate() {
        writeln!(out, "{},{}", h.tau(i), c)?;
    }
    out.flush()?;
    let json = serde_json::to_string_pretty(meta).map_err(|e| Error::Parse(e.to_string()))?;
    std::fs::write(sidecar_path(path), json + "\n")?;
    Ok(())
}

/// Reads a histogram written by [`write_histogram`].
pub fn read_histogram(path: &Path) -> Result<(CoincidenceHistogram, HistogramMetadata)> {
    let meta_text = std::fs::read_to_string(sidecar_path(path))?;
    let meta: HistogramMetadata = serde_json::from_str(&meta_text).map_err(|e| Error::Parse(e.to_string()))?;
    let reader = BufReader::new(std::fs::File::open(path)?);
    let mut counts = Vec::new();
    let mut taus = Vec::new();
    for (lineno, line) in reader.lines().enumerate() {
        let line = line?;
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') || line.starts_with("tau_ns") {
            continue;
        }
        let bad = || Error::Parse(format!("{}:{}: expected `tau_ns,counts`", path.display(), lineno + 1));
        let (tau, count) = line.split_once(',').ok_or_else(bad)?;
        taus.push(tau.trim().parse::<f64>().map_err(|_| bad())?);
        counts.push(count.trim().parse::<u64>().map_err(|_| bad())?);
    }
    if let (Some(first), Some(second)) = (taus.first(), taus.get(1)) {
        let step = second - first;
        if (step - meta.bin_width_ns).abs() > 1e-6 * meta.bin_width_ns || first.abs() > 1e-9 {
            return Err(Error::Parse(format!(
                "{}: bins do not match the sidecar bin width {} ns",
                path.display(),
                meta.bin_width_ns
            )));
        }
    }
    let h = CoincidenceHistogram {
        bin_width: meta.bin_width_ns,
        counts,
        n_singles_s: meta.n_singles_s,
        n_singles_as: meta.n_singles_as,
        measurement_time: meta.measurement_time_s,
    };
    h.validate()?;
    Ok((h, meta))
}
