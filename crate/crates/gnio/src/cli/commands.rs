//! Implementations of the six subcommands. Everything here is glue: load
//! inputs, call the library, write artifacts, print a one-line summary.

use std::collections::HashSet;
use std::fs;
use std::path::{Path, PathBuf};

use nalgebra::Vector3;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use super::{
    config_error, default_synth_spec, from_ekf, from_eval, from_net, from_train, resolve_config,
    runtime_error, AblateArgs, AblationAxis, CliError, EvalArgs, FuseArgs, InferArgs,
    PipelineConfig, SynthArgs, TrainArgs,
};
use crate::data::{
    load_sequence, read_pose_csv, synth_generate, save_sequence, window_stream, DataError,
    Sequence, Window,
};
use crate::ekf::{run_filter, DisplacementSource, NetSource, NoSource, OracleSource};
use crate::eval::{config_hash, emit_outputs, evaluate, Alignment, Trajectory};
use crate::network::{GateFn, GnioNet, NetConfig, ScaleFn};
use crate::training::{
    dataset_mse, read_train_log, train, write_train_log, EpochLog,
};

fn ensure_dir(dir: &Path) -> Result<(), CliError> {
    fs::create_dir_all(dir).map_err(|e| CliError::Runtime(format!("{}: {e}", dir.display())))
}

fn write_text(path: &Path, text: &str) -> Result<(), CliError> {
    fs::write(path, text).map_err(|e| CliError::Runtime(format!("{}: {e}", path.display())))
}

/// Load every sequence under `dir`: either the directory itself (imu.csv +
/// gt.csv) or each subdirectory holding one, sorted by name for determinism.
fn load_sequences(dir: &Path) -> Result<Vec<(String, Sequence)>, CliError> {
    let named = |p: &Path| {
        p.file_name()
            .map(|n| n.to_string_lossy().into_owned())
            .unwrap_or_else(|| "sequence".to_string())
    };
    if dir.join("imu.csv").exists() {
        let seq = load_sequence(dir).map_err(|e| seq_error(dir, e))?;
        return Ok(vec![(named(dir), seq)]);
    }
    let entries = fs::read_dir(dir)
        .map_err(|e| CliError::Config(format!("{}: {e}", dir.display())))?;
    let mut subdirs: Vec<PathBuf> = entries
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.join("imu.csv").exists())
        .collect();
    subdirs.sort();
    if subdirs.is_empty() {
        return Err(CliError::Config(format!(
            "no imu.csv found in {} or its subdirectories",
            dir.display()
        )));
    }
    let mut out = Vec::with_capacity(subdirs.len());
    for sub in subdirs {
        let seq = load_sequence(&sub).map_err(|e| seq_error(&sub, e))?;
        out.push((named(&sub), seq));
    }
    Ok(out)
}

fn seq_error(dir: &Path, e: DataError) -> CliError {
    CliError::Config(format!("{}: {e}", dir.display()))
}

/// All windows of all sequences, in sequence order.
fn all_windows(
    seqs: &[(String, Sequence)],
    duration: f64,
    stride: f64,
) -> Result<Vec<Window>, CliError> {
    let mut out = Vec::new();
    for (name, seq) in seqs {
        let windows = window_stream(seq, duration, stride)
            .map_err(|e| CliError::Config(format!("{name}: {e}")))?;
        out.extend(windows);
    }
    if out.is_empty() {
        return Err(CliError::Config(format!(
            "no complete {duration} s windows; are the sequences long enough?"
        )));
    }
    Ok(out)
}

/// Deterministic holdout split: a dedicated RNG stream of the training seed
/// shuffles the indices and the first `fraction` of them become the holdout.
/// Stream 1 keeps the split independent of the epoch shuffles (stream 0).
fn split_holdout(windows: Vec<Window>, fraction: f64, seed: u64) -> (Vec<Window>, Vec<Window>) {
    let n_hold = (windows.len() as f64 * fraction).floor() as usize;
    if n_hold == 0 {
        return (windows, Vec::new());
    }
    let mut order: Vec<usize> = (0..windows.len()).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(1);
    order.shuffle(&mut rng);
    let held: HashSet<usize> = order[..n_hold].iter().copied().collect();
    let mut train_set = Vec::with_capacity(windows.len() - n_hold);
    let mut holdout = Vec::with_capacity(n_hold);
    for (i, w) in windows.into_iter().enumerate() {
        if held.contains(&i) {
            holdout.push(w);
        } else {
            train_set.push(w);
        }
    }
    (train_set, holdout)
}

pub fn cmd_synth(args: SynthArgs) -> Result<(), CliError> {
    let mut sets = args.common.set.clone();
    if let Some(seed) = args.common.seed {
        sets.push(format!("seed={seed}"));
    }
    let (spec, canon) =
        resolve_config(&default_synth_spec(), args.common.config.as_deref(), &sets)?;
    let seq = synth_generate(&spec).map_err(config_error)?;
    let out = &args.common.out;
    ensure_dir(out)?;
    save_sequence(out, &seq).map_err(runtime_error)?;
    write_text(&out.join("spec.json"), &(canon + "\n"))?;
    println!(
        "wrote {} samples at {} Hz ({:.1} s) to {}",
        seq.imu.len(),
        spec.rate,
        seq.imu.len() as f64 / seq.rate,
        out.display()
    );
    Ok(())
}

#[derive(Serialize)]
struct TrainSummary {
    epochs_completed: usize,
    train_windows: usize,
    holdout_windows: usize,
    final_loss_total: Option<f64>,
    holdout_mse: Option<f64>,
    param_count: usize,
    config_hash: String,
}

pub fn cmd_train(args: TrainArgs) -> Result<(), CliError> {
    let mut sets = args.common.set.clone();
    if let Some(seed) = args.common.seed {
        sets.push(format!("train.seed={seed}"));
    }
    let (config, canon) =
        resolve_config(&PipelineConfig::default(), args.common.config.as_deref(), &sets)?;
    config.validate()?;
    let out = &args.common.out;
    ensure_dir(out)?;

    let seqs = load_sequences(&args.data)?;
    let windows = all_windows(&seqs, config.window_duration, config.window_stride)?;
    let (train_set, holdout) =
        split_holdout(windows, config.holdout_fraction, config.train.seed);

    let mut net = GnioNet::new(config.net.clone(), config.train.seed).map_err(from_net)?;
    let ckpt_path = out.join("checkpoint.gnio");
    let log_path = out.join("train_log.csv");

    let mut logs: Vec<EpochLog> = Vec::new();
    let mut start_epoch = 0;
    if args.resume {
        if !ckpt_path.exists() {
            return Err(CliError::Config(format!(
                "--resume: checkpoint not found: {}",
                ckpt_path.display()
            )));
        }
        net.load(&ckpt_path).map_err(from_net)?;
        if log_path.exists() {
            logs = read_train_log(&log_path).map_err(from_train)?;
        }
        start_epoch = logs.last().map(|l| l.epoch + 1).unwrap_or(0);
    }

    let every = config.train.checkpoint_every;
    let new_logs = train(
        &mut net,
        &train_set,
        &config.train,
        start_epoch,
        |log, net| {
            if every > 0 && (log.epoch + 1) % every == 0 {
                net.save(&ckpt_path)?;
            }
            Ok(())
        },
    )
    .map_err(from_train)?;
    logs.extend(new_logs);

    net.save(&ckpt_path).map_err(runtime_error)?;
    write_train_log(&log_path, &logs).map_err(from_train)?;
    write_text(&out.join("config.json"), &(canon.clone() + "\n"))?;

    let holdout_mse = if holdout.is_empty() {
        None
    } else {
        Some(dataset_mse(&net, &holdout).map_err(from_train)?)
    };
    let summary = TrainSummary {
        epochs_completed: logs.last().map(|l| l.epoch + 1).unwrap_or(0),
        train_windows: train_set.len(),
        holdout_windows: holdout.len(),
        final_loss_total: logs.last().map(|l| l.loss_total),
        holdout_mse,
        param_count: net.param_count(),
        config_hash: config_hash(canon.as_bytes()),
    };
    let summary_json = serde_json::to_string_pretty(&summary).map_err(runtime_error)?;
    write_text(&out.join("train_summary.json"), &(summary_json + "\n"))?;

    match (logs.last(), holdout_mse) {
        (Some(last), Some(mse)) => println!(
            "epoch {}: loss {:.6}, holdout MSE {:.6}; checkpoint at {}",
            last.epoch,
            last.loss_total,
            mse,
            ckpt_path.display()
        ),
        (Some(last), None) => println!(
            "epoch {}: loss {:.6}; checkpoint at {}",
            last.epoch,
            last.loss_total,
            ckpt_path.display()
        ),
        (None, _) => println!(
            "0 epochs requested; wrote initialization to {}",
            ckpt_path.display()
        ),
    }
    Ok(())
}

pub fn cmd_infer(args: InferArgs) -> Result<(), CliError> {
    let (config, _) = resolve_config(
        &PipelineConfig::default(),
        args.common.config.as_deref(),
        &args.common.set,
    )?;
    config.validate()?;
    if !args.checkpoint.exists() {
        return Err(CliError::Config(format!(
            "checkpoint not found: {}",
            args.checkpoint.display()
        )));
    }
    let mut net = GnioNet::new(config.net.clone(), 0).map_err(from_net)?;
    net.load(&args.checkpoint).map_err(from_net)?;

    let seqs = load_sequences(&args.data)?;
    let out = &args.common.out;
    ensure_dir(out)?;
    let path = out.join("predictions.csv");
    let mut w = csv::Writer::from_path(&path)
        .map_err(|e| CliError::Runtime(format!("{}: {e}", path.display())))?;
    w.write_record([
        "sequence", "t_start", "t_end", "dx", "dy", "dz", "sigma_x", "sigma_y", "sigma_z",
        "gate_x", "gate_y", "gate_z", "gt_dx", "gt_dy", "gt_dz",
    ])
    .map_err(runtime_error)?;

    let mut n = 0usize;
    let mut err_sq = 0.0;
    for (name, seq) in &seqs {
        let windows = window_stream(seq, config.window_duration, config.window_stride)
            .map_err(|e| CliError::Config(format!("{name}: {e}")))?;
        for win in &windows {
            let pred = net.predict(win).map_err(runtime_error)?;
            let sigma = pred.log_sigma.map(f64::exp);
            w.write_record([
                name.clone(),
                win.t_start.to_string(),
                win.t_end.to_string(),
                pred.displacement.x.to_string(),
                pred.displacement.y.to_string(),
                pred.displacement.z.to_string(),
                sigma.x.to_string(),
                sigma.y.to_string(),
                sigma.z.to_string(),
                pred.gate.x.to_string(),
                pred.gate.y.to_string(),
                pred.gate.z.to_string(),
                win.d_gt.x.to_string(),
                win.d_gt.y.to_string(),
                win.d_gt.z.to_string(),
            ])
            .map_err(runtime_error)?;
            err_sq += (pred.displacement - win.d_gt).norm_squared();
            n += 1;
        }
    }
    w.flush().map_err(runtime_error)?;
    println!(
        "wrote {n} window predictions from {} sequence(s) to {}; MSE vs ground truth {:.6}",
        seqs.len(),
        path.display(),
        err_sq / n as f64
    );
    Ok(())
}

pub fn cmd_fuse(args: FuseArgs) -> Result<(), CliError> {
    let mut sets = args.common.set.clone();
    if let Some(seed) = args.common.seed {
        sets.push(format!("oracle_seed={seed}"));
    }
    let (config, canon) =
        resolve_config(&PipelineConfig::default(), args.common.config.as_deref(), &sets)?;
    config.validate()?;
    if args.oracle && args.no_measurements {
        return Err(CliError::Config(
            "choose at most one of --oracle and --no-measurements".into(),
        ));
    }

    let seqs = load_sequences(&args.data)?;
    if seqs.len() > 1 {
        return Err(CliError::Config(format!(
            "fuse expects a single sequence, found {} under {}",
            seqs.len(),
            args.data.display()
        )));
    }
    let seq = &seqs[0].1;

    // The network is owned here so a NetSource can borrow it per run.
    let mut net_holder: Option<GnioNet> = None;
    if !args.oracle && !args.no_measurements {
        let ckpt = args.checkpoint.as_ref().ok_or_else(|| {
            CliError::Config(
                "--checkpoint is required unless --oracle or --no-measurements is given".into(),
            )
        })?;
        if !ckpt.exists() {
            return Err(CliError::Config(format!(
                "checkpoint not found: {}",
                ckpt.display()
            )));
        }
        let mut net = GnioNet::new(config.net.clone(), 0).map_err(from_net)?;
        net.load(ckpt).map_err(from_net)?;
        net_holder = Some(net);
    }
    let mut source: Box<dyn DisplacementSource> = if args.no_measurements {
        Box::new(NoSource)
    } else if args.oracle {
        Box::new(OracleSource::new(
            seq.gt.clone(),
            Vector3::repeat(config.oracle_sigma),
            Vector3::repeat(config.oracle_noise),
            2.0 / seq.rate,
            config.oracle_seed,
        ))
    } else {
        Box::new(NetSource::new(net_holder.as_ref().expect("loaded above")))
    };

    let fused = run_filter(seq, source.as_mut(), &config.filter).map_err(from_ekf)?;
    let dead = run_filter(seq, &mut NoSource, &config.filter).map_err(from_ekf)?;

    let gt = Trajectory::new(seq.gt.clone()).map_err(runtime_error)?;
    let est = Trajectory::new(fused.estimate.clone()).map_err(runtime_error)?;
    let dr = Trajectory::new(dead.estimate.clone()).map_err(runtime_error)?;
    let hash = config_hash(canon.as_bytes());
    let fused_eval = evaluate(&est, &gt, Alignment::FirstPose, &hash).map_err(runtime_error)?;
    let dead_eval = evaluate(&dr, &gt, Alignment::FirstPose, &hash).map_err(runtime_error)?;

    let out = &args.common.out;
    ensure_dir(out)?;
    emit_outputs(
        &fused_eval.report,
        &[
            ("ground truth".to_string(), fused_eval.ground_truth.clone()),
            ("estimate".to_string(), fused_eval.estimate.clone()),
            ("dead reckoning".to_string(), dead_eval.estimate.clone()),
        ],
        out,
    )
    .map_err(runtime_error)?;
    write_text(&out.join("config.json"), &(canon + "\n"))?;

    // Per-update diagnostics: what the filter accepted and how well posed it was.
    let upd_path = out.join("updates.csv");
    let mut w = csv::Writer::from_path(&upd_path)
        .map_err(|e| CliError::Runtime(format!("{}: {e}", upd_path.display())))?;
    w.write_record(["t", "accepted", "innov_x", "innov_y", "innov_z", "condition"])
        .map_err(runtime_error)?;
    for u in &fused.updates {
        w.write_record([
            u.t.to_string(),
            (u.accepted as u8).to_string(),
            u.innovation.x.to_string(),
            u.innovation.y.to_string(),
            u.innovation.z.to_string(),
            u.condition.to_string(),
        ])
        .map_err(runtime_error)?;
    }
    w.flush().map_err(runtime_error)?;

    let accepted = fused.updates.iter().filter(|u| u.accepted).count();
    println!(
        "ATE {:.4} m over {:.1} s ({}/{} updates accepted); dead reckoning {:.4} m; artifacts in {}",
        fused_eval.report.ate_m,
        fused_eval.report.duration_s,
        accepted,
        fused.updates.len(),
        dead_eval.report.ate_m,
        out.display()
    );
    Ok(())
}

pub fn cmd_eval(args: EvalArgs) -> Result<(), CliError> {
    let (_, canon) = resolve_config(
        &PipelineConfig::default(),
        args.common.config.as_deref(),
        &args.common.set,
    )?;
    let est_poses = read_pose_csv(&args.est)
        .map_err(|e| CliError::Config(format!("{}: {e}", args.est.display())))?;
    let gt_poses = read_pose_csv(&args.gt)
        .map_err(|e| CliError::Config(format!("{}: {e}", args.gt.display())))?;
    let est = Trajectory::new(est_poses)
        .map_err(|e| CliError::Config(format!("{}: {e}", args.est.display())))?;
    let gt = Trajectory::new(gt_poses)
        .map_err(|e| CliError::Config(format!("{}: {e}", args.gt.display())))?;

    let alignment = if args.umeyama {
        Alignment::Umeyama
    } else {
        Alignment::FirstPose
    };
    let hash = config_hash(canon.as_bytes());
    let result = evaluate(&est, &gt, alignment, &hash).map_err(from_eval)?;

    let out = &args.common.out;
    ensure_dir(out)?;
    emit_outputs(
        &result.report,
        &[
            ("ground truth".to_string(), result.ground_truth.clone()),
            ("estimate".to_string(), result.estimate.clone()),
        ],
        out,
    )
    .map_err(runtime_error)?;
    println!(
        "ATE {:.4} m (= RMSE) over {} poses spanning {:.1} s; artifacts in {}",
        result.report.ate_m,
        result.report.n,
        result.report.duration_s,
        out.display()
    );
    Ok(())
}

/// The six (gate, scale) activation pairs of the head ablation, in table order.
fn gating_grid(base: &NetConfig) -> Vec<(String, NetConfig)> {
    [
        (GateFn::Sigmoid, ScaleFn::Linear),
        (GateFn::Tanh, ScaleFn::Linear),
        (GateFn::Tanh, ScaleFn::Exp),
        (GateFn::Tanh, ScaleFn::Abs),
        (GateFn::Tanh, ScaleFn::PosElu),
        (GateFn::Tanh, ScaleFn::Softplus),
    ]
    .into_iter()
    .map(|(gate_fn, scale_fn)| {
        let label = format!("{gate_fn:?}/{scale_fn:?}").to_lowercase();
        (
            label,
            NetConfig {
                gate_fn,
                scale_fn,
                ..base.clone()
            },
        )
    })
    .collect()
}

fn bank_size_grid(base: &NetConfig) -> Vec<(String, NetConfig)> {
    [16usize, 32, 64, 128]
        .into_iter()
        .map(|m| {
            (
                format!("m={m}"),
                NetConfig {
                    m,
                    ..base.clone()
                },
            )
        })
        .collect()
}

pub fn cmd_ablate(args: AblateArgs) -> Result<(), CliError> {
    let mut sets = args.common.set.clone();
    if let Some(seed) = args.common.seed {
        sets.push(format!("train.seed={seed}"));
    }
    let (config, canon) =
        resolve_config(&PipelineConfig::default(), args.common.config.as_deref(), &sets)?;
    config.validate()?;

    let seqs = load_sequences(&args.data)?;
    // The sweep compares configurations, so all windows train and the first
    // sequence provides the trajectory for the error column.
    let windows = all_windows(&seqs, config.window_duration, config.window_stride)?;
    let eval_seq = &seqs[0].1;
    let gt = Trajectory::new(eval_seq.gt.clone()).map_err(runtime_error)?;
    let hash = config_hash(canon.as_bytes());

    let grid = match args.axis {
        AblationAxis::Gating => gating_grid(&config.net),
        AblationAxis::BankSize => bank_size_grid(&config.net),
    };

    let out = &args.common.out;
    ensure_dir(out)?;
    let table_path = out.join(format!("ablation_{}.csv", args.axis.as_str()));
    let mut w = csv::Writer::from_path(&table_path)
        .map_err(|e| CliError::Runtime(format!("{}: {e}", table_path.display())))?;
    w.write_record(["config", "params", "ate_m", "rmse_m"])
        .map_err(runtime_error)?;

    for (label, net_config) in grid {
        // Identical seed and budget for every configuration.
        let mut net = GnioNet::new(net_config, config.train.seed).map_err(from_net)?;
        let params = net.param_count();
        // One configuration diverging or producing a degenerate trajectory
        // must not lose the rest of the table; its row records nan instead.
        let ate = train(&mut net, &windows, &config.train, 0, |_, _| Ok(()))
            .map_err(|e| e.to_string())
            .and_then(|_| {
                let mut source = NetSource::new(&net);
                let fused =
                    run_filter(eval_seq, &mut source, &config.filter).map_err(|e| e.to_string())?;
                let est = Trajectory::new(fused.estimate).map_err(|e| e.to_string())?;
                evaluate(&est, &gt, Alignment::FirstPose, &hash)
                    .map(|r| r.report.ate_m)
                    .map_err(|e| e.to_string())
            });
        let (ate_text, note) = match ate {
            Ok(v) => (v.to_string(), format!("ATE {v:.4} m")),
            Err(e) => ("nan".to_string(), format!("no result ({e})")),
        };
        w.write_record([label.clone(), params.to_string(), ate_text.clone(), ate_text])
            .map_err(runtime_error)?;
        println!("{label}: {note}");
    }
    w.flush().map_err(runtime_error)?;
    write_text(&out.join("config.json"), &(canon + "\n"))?;
    println!("wrote {}", table_path.display());
    Ok(())
}
