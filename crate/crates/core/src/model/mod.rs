//! Signal representations, Besov-body geometry and samplers.

mod besov;
mod sampling;
mod spectrum;

pub use besov::{
    besov_seminorm, calibration_rates, make_tail_alternative, project_besov, BesovBall, Projection, Rates, Seminorm,
    TestFamily,
};
pub use sampling::{
    density_from_spectrum, sample_iid_from_density, sample_inverse_model_with, sample_sequence_model,
    sample_sequence_model_with, DensitySampler, DensityTable, Sample, SequenceObservation, DEFAULT_GRID,
};
pub use spectrum::{power_law, Basis, Spectrum};
