pub mod cli;
pub mod config;
pub mod data;
pub mod ddpg;
pub mod env;
pub mod error;
pub mod forecast;
pub mod market;
pub mod nn;
pub mod retail;
pub mod scenarios;

pub use error::{Error, Result};
