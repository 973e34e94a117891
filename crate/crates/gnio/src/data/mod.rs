//! IMU data model, synthetic trajectory generation, and gravity-aligned windowing.
//!
//! A [`Sequence`] pairs a raw IMU stream with ground-truth poses on the same
//! timeline. [`synth_generate`] produces sequences from piecewise-analytic motion
//! segments, which doubles as the ground-truth oracle for every desk-scale
//! experiment. [`window_stream`] cuts a sequence into fixed-duration windows whose
//! samples are rotated into a gravity-aligned, heading-free frame, paired with the
//! displacement target expressed in that same frame.

mod csv_io;
mod synth;
mod types;
mod windows;

pub use csv_io::{
    load_sequence, read_imu_csv, read_pose_csv, save_sequence, write_imu_csv, write_pose_csv,
};
pub use synth::{gravity_world, synth_generate, Axis, NoiseSpec, SegmentSpec, SynthSpec};
pub use types::{interpolate_pose, ImuSample, PoseSample, Sequence, Window};
pub use windows::{compute_target, gravity_align, window_stream};

/// Errors from data construction, generation, windowing and serialization.
#[derive(Debug, thiserror::Error)]
pub enum DataError {
    #[error("sequence: {0}")]
    InvalidSequence(String),

    #[error("synthetic spec: {0}")]
    InvalidSpec(String),

    #[error("gravity_align: rotation is not orthonormal (defect {0:.3e} > 1e-6)")]
    NonOrthonormal(f64),

    #[error("window_stream: {0}")]
    Windowing(String),

    #[error("pose interpolation at t={t}: gap {gap:.6} s exceeds one sample period {period:.6} s")]
    InterpolationGap { t: f64, gap: f64, period: f64 },

    #[error("pose interpolation at t={t}: outside ground-truth range [{lo}, {hi}]")]
    OutOfRange { t: f64, lo: f64, hi: f64 },

    #[error("csv: {0}")]
    Csv(String),

    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, DataError>;
