//! Predict-then-optimise scheduling of campus activities and batteries
//! against a load forecast and an energy price.

pub mod battery;
pub mod decode;
pub mod error;
pub mod evolution;
pub mod feasibility;
pub mod instance;
pub mod local_search;
pub mod objective;
pub mod pipeline;
pub mod precedence;
pub mod rooms;
pub mod schedule;
pub mod series;
pub mod synth;

pub use error::{Error, Result};
pub use instance::{parse_instance, Instance};
pub use schedule::Schedule;
pub use series::SeriesFrame;
