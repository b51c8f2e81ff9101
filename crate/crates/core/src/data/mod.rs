//! Synthetic data, dataset ingestion and run bookkeeping.

pub mod manifest;
pub mod rng;
pub mod synth;
pub mod wind_csv;

pub use manifest::RunManifest;
pub use rng::{stream, StreamRng};
pub use synth::{
    ar1_series, sinusoid_records, synthesize_day, synthesize_wind, DayProfile, DayRegime,
    HouseholdProfileSpec, PowerCurve, Weather, WindSynthSpec,
};
pub use wind_csv::{
    fit_to_capacity, load_wind_csv, read_wind_csv, save_wind_csv, scale_power, write_wind_csv,
};
