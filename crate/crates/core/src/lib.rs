//! Keystroke inference from wrist-worn motion sensors.
//!
//! Raw gyroscope and accelerometer events go through calibration and
//! filtering, are resampled onto a shared grid and fused into frames, cut
//! into fixed windows around keystrokes and classified by small neural
//! networks.

pub mod error;
pub mod eval;
pub mod features;
pub mod fusion;
pub mod model;
pub mod nn;
pub mod preprocess;
pub mod segmentation;
pub mod server;
pub mod synth;

pub use error::{Error, Result};
pub use model::{
    read_session, write_session, LabelCodebook, LabelEvent, Millis, RecordingSession, SensorEvent,
    SensorKind, TriaxialSeries,
};
