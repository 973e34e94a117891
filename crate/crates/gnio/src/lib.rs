//! Gated neural inertial odometry.
//!
//! This crate turns raw IMU streams (gyroscope + accelerometer) into drifting-slowly
//! position estimates. A 1D convolutional network regresses per-window horizontal-frame
//! displacement together with a diagonal covariance, a learned gate suppresses spurious
//! motion when the platform is still, and a stochastic-cloning error-state EKF fuses the
//! network output with strapdown integration.
//!
//! The pieces are usable on their own:
//!
//! - [`autodiff`]: reverse-mode automatic differentiation over dense `f64` tensors
//! - [`data`]: IMU/pose containers, synthetic trajectory generation, gravity-aligned windowing
//! - [`network`]: the displacement network (encoder, motion bank attention, gated head)
//! - [`training`]: composite MSE + NLL loss, Adam, warmup/cosine schedule, training loop
//! - [`ekf`]: error-state Kalman filter with stochastic cloning for relative measurements
//! - [`eval`]: trajectory alignment, ATE/RMSE metrics, CSV/JSON/SVG emission
//!
//! Each major capability has a runnable example:
//!
//! ```text
//! cargo run --release --example synth_dataset
//! cargo run --release --example gradient_check
//! cargo run --release --example lr_schedule
//! cargo run --release --example train_tiny
//! cargo run --release --example soft_zupt_gate
//! cargo run --release --example motion_bank_attention
//! cargo run --release --example fuse_oracle
//! cargo run --release --example fuse_trained
//! cargo run --release --example ablation_sweep
//! ```
//!
//! The `gnio` binary exposes the same pipeline as subcommands:
//! `gnio synth|train|infer|fuse|eval|ablate`.

pub mod autodiff;
pub mod cli;
pub mod data;
pub mod ekf;
pub mod eval;
pub mod geometry;
pub mod network;
pub mod training;
