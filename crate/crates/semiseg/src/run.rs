//! Subcommand implementations shared by the binary and the tests.

use std::path::{Path, PathBuf};

use sha2::{Digest, Sha256};

use semiseg_core::data::{self, FeatureSequence};
use semiseg_core::metrics::{self, ClusterReport, EvalReport};
use semiseg_core::rng::derive_seed;
use semiseg_core::training::{self, EpochRecord, TrainConfig, TrainedModel};
use semiseg_core::Tensor;

use crate::checkpoint;
use crate::csv_io;
use crate::error::{IoError, IoResult};
use crate::kv::KeyValues;
use crate::manifest::{Manifest, Split};
use crate::report;
use crate::simulate::{self, SimConfig};

pub const EFFECTIVE_CONFIG: &str = "effective_config.cfg";
pub const RUN_RECORD: &str = "run.txt";
pub const CHECKPOINT: &str = "model.ckpt";
pub const HISTORY: &str = "history.csv";

/// Training options plus which labels to keep.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub train: TrainConfig,
    /// Keep labels on this random fraction of frames of every training
    /// sequence.
    pub labeled_fraction: Option<f64>,
    /// Keep labels only on this many randomly chosen training sequences.
    pub labeled_videos: Option<usize>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            train: TrainConfig::default(),
            labeled_fraction: None,
            labeled_videos: None,
        }
    }
}

impl RunConfig {
    pub fn set(&mut self, key: &str, value: &str) -> IoResult<()> {
        let bad = || IoError::format(key, format!("cannot parse `{value}`"));
        match key {
            "data.labeled_fraction" => {
                self.labeled_fraction = if value == "all" {
                    None
                } else {
                    Some(value.parse().map_err(|_| bad())?)
                }
            }
            "data.labeled_videos" => {
                self.labeled_videos = if value == "all" {
                    None
                } else {
                    Some(value.parse().map_err(|_| bad())?)
                }
            }
            _ => self.train.set(key, value)?,
        }
        Ok(())
    }

    pub fn to_key_values(&self) -> KeyValues {
        let mut kv: KeyValues = self.train.to_key_values().into_iter().collect();
        let show = |v: Option<String>| v.unwrap_or_else(|| "all".into());
        kv.set("data.labeled_fraction", show(self.labeled_fraction.map(|f| f.to_string())));
        kv.set("data.labeled_videos", show(self.labeled_videos.map(|n| n.to_string())));
        kv
    }

    /// Applies label subsampling with seeds derived from the run seed.
    pub fn select_labels(&self, train: Vec<FeatureSequence>) -> IoResult<Vec<FeatureSequence>> {
        let seed = self.train.seed;
        let mut out = match self.labeled_videos {
            Some(n) => data::subsample_labeled_videos(&train, n, derive_seed(seed, 7001))?,
            None => train,
        };
        if let Some(f) = self.labeled_fraction {
            if !(0.0..=1.0).contains(&f) {
                return Err(IoError::format(
                    "data.labeled_fraction",
                    format!("{f} is not in [0, 1]"),
                ));
            }
            out = out
                .iter()
                .enumerate()
                .map(|(i, s)| data::subsample_labeled_frames(s, f, derive_seed(seed, 7100 + i as u64)))
                .collect();
        }
        Ok(out)
    }
}

fn apply_overrides(
    path: Option<&Path>,
    overrides: &[String],
    mut set: impl FnMut(&str, &str) -> IoResult<()>,
) -> IoResult<()> {
    if let Some(p) = path {
        for (k, v) in KeyValues::read(p)?.iter() {
            set(k, v).map_err(|e| IoError::format(p, e.to_string()))?;
        }
    }
    for o in overrides {
        let (k, v) = KeyValues::parse_override(o)?;
        set(&k, &v).map_err(|e| IoError::format("--override", e.to_string()))?;
    }
    Ok(())
}

/// Defaults, then the config file, then overrides, then `--seed`.
pub fn load_run_config(path: Option<&Path>, overrides: &[String], seed: Option<u64>) -> IoResult<RunConfig> {
    let mut cfg = RunConfig::default();
    apply_overrides(path, overrides, |k, v| cfg.set(k, v))?;
    if let Some(s) = seed {
        cfg.train.seed = s;
    }
    cfg.train.validate()?;
    Ok(cfg)
}

pub fn load_sim_config(path: Option<&Path>, overrides: &[String], seed: Option<u64>) -> IoResult<SimConfig> {
    let mut cfg = SimConfig::default();
    apply_overrides(path, overrides, |k, v| {
        cfg.set(k, v).map_err(|m| IoError::format(k, m))
    })?;
    if let Some(s) = seed {
        cfg.seed = s;
    }
    Ok(cfg)
}

fn ensure_dir(out: &Path) -> IoResult<()> {
    std::fs::create_dir_all(out).map_err(|e| IoError::io(out, e))
}

pub fn sha256_file(path: &Path) -> IoResult<String> {
    let bytes = std::fs::read(path).map_err(|e| IoError::io(path, e))?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

/// Records the command, seed, inputs and artifact hashes needed to
/// reproduce a run.
pub fn write_run_record(
    out: &Path,
    command: &str,
    seed: u64,
    inputs: &[(&str, &Path)],
    artifacts: &[PathBuf],
) -> IoResult<PathBuf> {
    let mut kv = KeyValues::new();
    kv.set("command", command);
    kv.set("seed", seed.to_string());
    kv.set("version", env!("CARGO_PKG_VERSION"));
    for (name, p) in inputs {
        kv.set(format!("input.{name}"), p.display().to_string());
        kv.set(format!("input.{name}.sha256"), sha256_file(p)?);
    }
    for a in artifacts {
        let name = a.file_name().map_or_else(|| a.display().to_string(), |n| n.to_string_lossy().into_owned());
        kv.set(format!("artifact.{name}.sha256"), sha256_file(a)?);
    }
    let path = out.join(RUN_RECORD);
    kv.write(&path)?;
    Ok(path)
}

pub fn simulate_to_dir(cfg: &SimConfig, out: &Path) -> IoResult<Vec<PathBuf>> {
    ensure_dir(out)?;
    let sim = simulate::simulate(cfg)?;
    let mut files = simulate::write_simulation(&sim, out)?;
    let eff = out.join(EFFECTIVE_CONFIG);
    cfg.to_key_values().write(&eff)?;
    files.push(eff);
    let inputs: Vec<(&str, &Path)> = cfg.params.iter().map(|p| ("params", p.as_path())).collect();
    write_run_record(out, "simulate", cfg.seed, &inputs, &files)?;
    Ok(files)
}

/// Trains on the manifest's training split and writes the checkpoint,
/// history and effective config.
pub fn train_to_dir(
    cfg: &RunConfig,
    manifest_path: &Path,
    header: bool,
    out: &Path,
    observe: impl FnMut(&EpochRecord),
) -> IoResult<TrainedModel> {
    let manifest = Manifest::read(manifest_path)?;
    let train = manifest.load(Split::Train, header)?;
    if train.is_empty() {
        return Err(IoError::format(manifest_path, "no training sequences"));
    }
    let train = cfg.select_labels(train)?;
    ensure_dir(out)?;
    let eff = out.join(EFFECTIVE_CONFIG);
    cfg.to_key_values().write(&eff)?;
    let model = training::train_with_observer(&cfg.train, &train, manifest.n_classes, observe)?;
    let ckpt = out.join(CHECKPOINT);
    checkpoint::save_model(&ckpt, &model)?;
    let hist = out.join(HISTORY);
    report::write_history(&hist, &model.history)?;
    write_run_record(out, "train", cfg.train.seed, &[("manifest", manifest_path)], &[eff, ckpt, hist])?;
    Ok(model)
}

struct Loaded {
    model: TrainedModel,
    seqs: Vec<FeatureSequence>,
}

fn load_for_inference(ckpt: &Path, manifest_path: &Path, split: Split, header: bool) -> IoResult<Loaded> {
    let model = checkpoint::load_model(ckpt)?;
    let manifest = Manifest::read(manifest_path)?;
    if manifest.n_classes != model.n_classes {
        return Err(IoError::format(
            manifest_path,
            format!(
                "manifest has {} classes but the checkpoint was trained with {}",
                manifest.n_classes, model.n_classes
            ),
        ));
    }
    let seqs = manifest.load(split, header)?;
    if seqs.is_empty() {
        return Err(IoError::format(manifest_path, format!("the {split} split is empty")));
    }
    Ok(Loaded { model, seqs })
}

/// Per-sequence `<id>_pred.csv` and `<id>_probs.csv`.
pub fn predict_to_dir(ckpt: &Path, manifest: &Path, split: Split, header: bool, out: &Path) -> IoResult<Vec<PathBuf>> {
    let l = load_for_inference(ckpt, manifest, split, header)?;
    ensure_dir(out)?;
    let mut files = Vec::new();
    for s in &l.seqs {
        let (pred, probs) = l.model.predict(&s.features)?;
        let fp = out.join(format!("{}_pred.csv", s.id));
        let fq = out.join(format!("{}_probs.csv", s.id));
        csv_io::write_column(&fp, &pred)?;
        csv_io::write_matrix(&fq, &probs)?;
        files.extend([fp, fq]);
    }
    write_run_record(out, "predict", l.model.config.seed, &[("checkpoint", ckpt), ("manifest", manifest)], &files)?;
    Ok(files)
}

/// Per-sequence `<id>_latents.csv`.
pub fn latents_to_dir(ckpt: &Path, manifest: &Path, split: Split, header: bool, out: &Path) -> IoResult<Vec<PathBuf>> {
    let l = load_for_inference(ckpt, manifest, split, header)?;
    ensure_dir(out)?;
    let mut files = Vec::new();
    for s in &l.seqs {
        let f = out.join(format!("{}_latents.csv", s.id));
        csv_io::write_matrix(&f, &l.model.latents(&s.features)?)?;
        files.push(f);
    }
    write_run_record(out, "latents", l.model.config.seed, &[("checkpoint", ckpt), ("manifest", manifest)], &files)?;
    Ok(files)
}

fn stack(mats: &[Tensor]) -> IoResult<Tensor> {
    let cols = mats.first().map_or(0, Tensor::cols);
    let rows = mats.iter().map(Tensor::rows).sum();
    let data = mats.iter().flat_map(|m| m.data().iter().copied()).collect();
    Ok(Tensor::from_vec(rows, cols, data)?)
}

pub fn evaluate(ckpt: &Path, manifest: &Path, split: Split, header: bool) -> IoResult<EvalReport> {
    let l = load_for_inference(ckpt, manifest, split, header)?;
    let mut probs = Vec::new();
    let mut pred = Vec::new();
    let mut truth = Vec::new();
    for s in &l.seqs {
        let (p, q) = l.model.predict(&s.features)?;
        pred.extend(p.into_iter().map(|v| v as i32));
        truth.extend_from_slice(&s.labels);
        probs.push(q);
    }
    Ok(metrics::evaluate(&stack(&probs)?, &pred, &truth)?)
}

pub fn evaluate_to_dir(ckpt: &Path, manifest: &Path, split: Split, header: bool, out: &Path) -> IoResult<EvalReport> {
    let r = evaluate(ckpt, manifest, split, header)?;
    ensure_dir(out)?;
    let files = report::write_eval(out, &r)?;
    let seed = checkpoint::load_model(ckpt)?.config.seed;
    write_run_record(out, "evaluate", seed, &[("checkpoint", ckpt), ("manifest", manifest)], &files)?;
    Ok(r)
}

/// k-means cluster quality of the model's latents over a grid of cluster
/// counts (default `K, 2K, 4K, 8K`).
pub fn cluster_eval_to_dir(
    ckpt: &Path,
    manifest: &Path,
    split: Split,
    grid: Option<Vec<usize>>,
    seed: u64,
    header: bool,
    out: &Path,
) -> IoResult<ClusterReport> {
    let l = load_for_inference(ckpt, manifest, split, header)?;
    let mut lat = Vec::new();
    let mut labels = Vec::new();
    for s in &l.seqs {
        lat.push(l.model.latents(&s.features)?);
        labels.extend_from_slice(&s.labels);
    }
    let grid = grid.unwrap_or_else(|| metrics::default_grid(l.model.n_classes));
    let r = metrics::cluster_sweep(&stack(&lat)?, &labels, &grid, seed)?;
    ensure_dir(out)?;
    let f = out.join("cluster.csv");
    report::write_cluster(&f, &r)?;
    write_run_record(out, "cluster-eval", seed, &[("checkpoint", ckpt), ("manifest", manifest)], &[f])?;
    Ok(r)
}
