//! Forecasting and tip-over risk detection for multivariate IMU streams.
//!
//! The pipeline windows 6-channel accelerometer/gyroscope trials, trains a
//! sequence-to-sequence LSTM autoencoder to forecast the next few
//! timesteps, tunes its layer widths with BOHB, and flags windows whose
//! per-channel forecast error exceeds a threshold.

pub mod nn;
pub mod timeseries;
pub mod autoencoder;
pub mod seeding;
pub mod synth;
pub mod detector;
pub mod bohb;
