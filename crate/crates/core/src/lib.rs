//! Narrowband biphotons from spontaneous four-wave mixing with an off-resonance coupling field.

// `!(x > 0.0)` style checks are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod estimation;
pub mod filtering;
pub mod model;
pub mod modulation;
pub mod photostatistics;
pub mod units;
pub mod wavepacket;

pub use error::{Error, Result};
pub use estimation::{
    fit_wavepacket, initial_guess, FitModel, FitParams, FitResult, InitialGuess, ModelKind, Parameterization,
};
pub use filtering::{apply_filter, apply_filters, beat_depth, modulation_depth, EtalonFilter, EtalonSpec};
pub use model::{
    chi3_approx, chi3_full, component_weights, dressed_modes, AmplitudeModel, ComplexSpectrum, ComponentWeights,
    DressedModes, FrequencyGrid, SystemParams,
};
pub use modulation::{apply_mask, pulse_train_preview, MaskConvention, MaskKind, ModulationMask};
pub use photostatistics::{
    cauchy_schwarz, loss_budget_rate, normalized_cross_correlation, simulate_coincidences, CoincidenceHistogram,
    DetectionConfig, LossBudget,
};
pub use wavepacket::{beat_period, g2_analytic, psi_numeric, spectrum_power, TimeGridConfig, Wavepacket};
