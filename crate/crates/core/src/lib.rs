//! Core engine of the RSVP speller: acquisition, synthetic data sources,
//! signal processing, the signal model, the language model and the
//! task loop.

pub mod acquisition;
pub mod alphabet;
pub mod datastream;
pub mod device;
pub mod dsp;
pub mod lang;
pub mod model;
pub mod params;
pub mod series;
pub mod task;
pub mod trigger;

pub use alphabet::{Symbol, ALPHABET_SIZE};
pub use device::{ContentType, DeviceSpec};
pub use series::TimeSeriesBlock;
pub use trigger::{Targetness, TriggerRecord};
