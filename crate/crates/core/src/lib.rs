//! Calibration of single opinion scores (SOS) into mean-opinion-score (MOS)
//! estimates.
//!
//! A learnable relative-quality head predicts the MOS difference between two
//! items from the difference of their feature vectors. Every item's estimate
//! is repeatedly pulled toward "reference estimate + predicted difference"
//! for a randomly drawn reference, while the head is fitted to both the
//! observed scores and the current estimates. See [`engine::calibrate`].

pub mod cli;
pub mod engine;
pub mod error;
pub mod experiments;
pub mod io;
pub mod metrics;
pub mod net;
pub mod rng;
pub mod sos;
pub mod synthetic;
pub mod types;

pub use engine::{calibrate, calibrate_raw, Calibration, EpochReport, ReferenceAssignment};
pub use error::{Error, Result};
pub use metrics::MetricsReport;
pub use net::{GradientBundle, HeadParameters, Mlp};
pub use sos::{Annotation, Protocol, RatingRecord};
pub use synthetic::SyntheticSpec;
pub use types::{CalibrationConfig, CalibrationState, FeatureTable, LabelVector, Scale};
