//! Day-ahead wind power forecasting.

pub mod band;
pub mod metrics;
pub mod model;
pub mod preprocess;
pub mod record;

pub use band::{persistence_forecast, uncertainty_band_forecast, Band};
pub use metrics::{eval_metrics, Metrics};
pub use model::{
    predict_day_ahead, train_forecaster, ForecastDocument, ForecasterConfig, ForecasterModel,
};
pub use preprocess::{
    impute_missing, make_windows, prepare, resample_hourly, PipelineConfig, PreparedData, Scaler,
    WindowedDataset,
};
pub use record::{Feature, WindRecord};
