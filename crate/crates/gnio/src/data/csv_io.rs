//! CSV interchange for IMU and pose streams.
//!
//! IMU files: header `t,wx,wy,wz,ax,ay,az`. Pose files: header
//! `t,px,py,pz,qw,qx,qy,qz`. SI units, '.' decimal separator, LF line endings.
//! Floats are written with the shortest representation that parses back to the
//! identical bits, so save followed by load is lossless.

use std::path::Path;

use nalgebra::{Quaternion, UnitQuaternion, Vector3};
use serde::{Deserialize, Serialize};

use super::{DataError, ImuSample, PoseSample, Result, Sequence};

fn csv_err(path: &Path, e: impl std::fmt::Display) -> DataError {
    DataError::Csv(format!("{}: {e}", path.display()))
}

pub fn write_imu_csv(path: &Path, samples: &[ImuSample]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_err(path, e))?;
    w.write_record(["t", "wx", "wy", "wz", "ax", "ay", "az"])
        .map_err(|e| csv_err(path, e))?;
    for s in samples {
        w.write_record(
            [
                s.t, s.gyro.x, s.gyro.y, s.gyro.z, s.accel.x, s.accel.y, s.accel.z,
            ]
            .map(|v| v.to_string()),
        )
        .map_err(|e| csv_err(path, e))?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_imu_csv(path: &Path) -> Result<Vec<ImuSample>> {
    let mut r = csv::Reader::from_path(path).map_err(|e| csv_err(path, e))?;
    let headers = r.headers().map_err(|e| csv_err(path, e))?.clone();
    let expected = ["t", "wx", "wy", "wz", "ax", "ay", "az"];
    if headers.iter().collect::<Vec<_>>() != expected {
        return Err(csv_err(
            path,
            format!("unexpected header {headers:?}, expected {expected:?}"),
        ));
    }
    let mut out = Vec::new();
    for (line, rec) in r.records().enumerate() {
        let rec = rec.map_err(|e| csv_err(path, e))?;
        let mut f = [0.0f64; 7];
        for (i, v) in f.iter_mut().enumerate() {
            *v = rec
                .get(i)
                .ok_or_else(|| csv_err(path, format!("row {}: missing field {i}", line + 2)))?
                .parse()
                .map_err(|e| csv_err(path, format!("row {}: {e}", line + 2)))?;
        }
        out.push(ImuSample {
            t: f[0],
            gyro: Vector3::new(f[1], f[2], f[3]),
            accel: Vector3::new(f[4], f[5], f[6]),
        });
    }
    Ok(out)
}

pub fn write_pose_csv(path: &Path, poses: &[PoseSample]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_err(path, e))?;
    w.write_record(["t", "px", "py", "pz", "qw", "qx", "qy", "qz"])
        .map_err(|e| csv_err(path, e))?;
    for p in poses {
        let q = p.orientation.quaternion();
        w.write_record(
            [
                p.t,
                p.position.x,
                p.position.y,
                p.position.z,
                q.w,
                q.i,
                q.j,
                q.k,
            ]
            .map(|v| v.to_string()),
        )
        .map_err(|e| csv_err(path, e))?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_pose_csv(path: &Path) -> Result<Vec<PoseSample>> {
    let mut r = csv::Reader::from_path(path).map_err(|e| csv_err(path, e))?;
    let headers = r.headers().map_err(|e| csv_err(path, e))?.clone();
    let expected = ["t", "px", "py", "pz", "qw", "qx", "qy", "qz"];
    if headers.iter().collect::<Vec<_>>() != expected {
        return Err(csv_err(
            path,
            format!("unexpected header {headers:?}, expected {expected:?}"),
        ));
    }
    let mut out = Vec::new();
    for (line, rec) in r.records().enumerate() {
        let rec = rec.map_err(|e| csv_err(path, e))?;
        let mut f = [0.0f64; 8];
        for (i, v) in f.iter_mut().enumerate() {
            *v = rec
                .get(i)
                .ok_or_else(|| csv_err(path, format!("row {}: missing field {i}", line + 2)))?
                .parse()
                .map_err(|e| csv_err(path, format!("row {}: {e}", line + 2)))?;
        }
        let q = Quaternion::new(f[4], f[5], f[6], f[7]);
        if (q.norm() - 1.0).abs() > 1e-9 {
            return Err(csv_err(
                path,
                format!("row {}: quaternion norm {} deviates from 1", line + 2, q.norm()),
            ));
        }
        out.push(PoseSample {
            t: f[0],
            position: Vector3::new(f[1], f[2], f[3]),
            orientation: UnitQuaternion::new_unchecked(q.normalize()),
        });
    }
    Ok(out)
}

/// Sidecar recording what the CSVs cannot: sample rate and generator bias.
#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct SequenceMeta {
    rate: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    bias_g: Option<[f64; 3]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    bias_a: Option<[f64; 3]>,
}

/// Write `imu.csv`, `gt.csv` and `meta.json` into `dir`.
pub fn save_sequence(dir: &Path, seq: &Sequence) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    write_imu_csv(&dir.join("imu.csv"), &seq.imu)?;
    write_pose_csv(&dir.join("gt.csv"), &seq.gt)?;
    let meta = SequenceMeta {
        rate: seq.rate,
        bias_g: seq.bias_gt.map(|(g, _)| [g.x, g.y, g.z]),
        bias_a: seq.bias_gt.map(|(_, a)| [a.x, a.y, a.z]),
    };
    let text = serde_json::to_string_pretty(&meta)
        .map_err(|e| DataError::Csv(format!("meta.json: {e}")))?;
    std::fs::write(dir.join("meta.json"), text)?;
    Ok(())
}

/// Load a sequence saved by [`save_sequence`]. When `meta.json` is absent the
/// rate is inferred from the first IMU interval.
pub fn load_sequence(dir: &Path) -> Result<Sequence> {
    let imu = read_imu_csv(&dir.join("imu.csv"))?;
    let gt_path = dir.join("gt.csv");
    let gt = if gt_path.exists() {
        read_pose_csv(&gt_path)?
    } else {
        Vec::new()
    };
    let meta_path = dir.join("meta.json");
    let (rate, bias_gt) = if meta_path.exists() {
        let text = std::fs::read_to_string(&meta_path)?;
        let meta: SequenceMeta =
            serde_json::from_str(&text).map_err(|e| DataError::Csv(format!("meta.json: {e}")))?;
        let bias = match (meta.bias_g, meta.bias_a) {
            (Some(g), Some(a)) => Some((Vector3::from(g), Vector3::from(a))),
            _ => None,
        };
        (meta.rate, bias)
    } else {
        if imu.len() < 2 {
            return Err(DataError::InvalidSequence(
                "cannot infer rate from fewer than two samples".into(),
            ));
        }
        ((1.0 / (imu[1].t - imu[0].t)).round(), None)
    };
    let seq = Sequence {
        rate,
        imu,
        gt,
        bias_gt,
    };
    seq.validate()?;
    Ok(seq)
}
