//! Near-RT RIC applications: the slice manager and the digital twin with
//! its anomaly detectors and share optimizer.

pub mod detect;
pub mod optimize;
pub mod slice_manager;
pub mod twin;

pub use detect::{Anomaly, AnomalyEngine, AnomalyKind, Detector, DetectorConfig, Evidence};
pub use optimize::{optimize_shares, OptimizeError};
pub use slice_manager::{OrchStep, SliceManager, SliceManagerError, SliceRecord, SliceStatus};
pub use twin::{KpiSample, Observation, TwinConfig, TwinError, TwinState, UeKey, UeTwin};
