//! Dataset manifests: which CSV files form each sequence and which split it
//! belongs to.
//!
//! ```text
//! n_classes = 3
//! sample_rate_hz = 30
//! sequence.mouse1.features = mouse1_x.csv
//! sequence.mouse1.labels = mouse1_y.csv
//! sequence.mouse1.split = train
//! ```
//!
//! Relative paths are resolved against the manifest's directory. A
//! sequence may override `sample_rate_hz`; `labels` is optional.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use semiseg_core::data::FeatureSequence;

use crate::csv_io;
use crate::error::{IoError, IoResult};
use crate::kv::KeyValues;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Split {
    Train,
    Test,
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Split::Train => "train",
            Split::Test => "test",
        })
    }
}

impl FromStr for Split {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "train" => Ok(Split::Train),
            "test" => Ok(Split::Test),
            _ => Err(format!("unknown split `{s}` (expected train or test)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ManifestEntry {
    pub id: String,
    pub features: PathBuf,
    pub labels: Option<PathBuf>,
    pub split: Split,
    pub sample_rate_hz: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Manifest {
    pub n_classes: usize,
    pub sample_rate_hz: f64,
    pub entries: Vec<ManifestEntry>,
    /// Directory that relative paths are resolved against.
    pub base_dir: PathBuf,
}

#[derive(Default)]
struct Partial {
    features: Option<String>,
    labels: Option<String>,
    split: Option<String>,
    rate: Option<String>,
}

impl Manifest {
    pub fn read(path: &Path) -> IoResult<Self> {
        let kv = KeyValues::read(path)?;
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Self::from_key_values(&kv, base, path)
    }

    pub fn from_key_values(kv: &KeyValues, base_dir: PathBuf, origin: &Path) -> IoResult<Self> {
        let bad = |m: String| IoError::format(origin, m);
        let mut n_classes = None;
        let mut rate = 30.0;
        let mut order: Vec<String> = Vec::new();
        let mut parts: Vec<Partial> = Vec::new();
        for (k, v) in kv.iter() {
            match k {
                "n_classes" => n_classes = Some(v.parse().map_err(|_| bad(format!("invalid n_classes `{v}`")))?),
                "sample_rate_hz" => rate = v.parse().map_err(|_| bad(format!("invalid sample_rate_hz `{v}`")))?,
                _ => {
                    let rest = k
                        .strip_prefix("sequence.")
                        .ok_or_else(|| bad(format!("unknown manifest key `{k}`")))?;
                    let (id, field) = rest
                        .rsplit_once('.')
                        .ok_or_else(|| bad(format!("expected sequence.<id>.<field>, found `{k}`")))?;
                    let i = match order.iter().position(|o| o == id) {
                        Some(i) => i,
                        None => {
                            order.push(id.to_string());
                            parts.push(Partial::default());
                            order.len() - 1
                        }
                    };
                    let slot = match field {
                        "features" => &mut parts[i].features,
                        "labels" => &mut parts[i].labels,
                        "split" => &mut parts[i].split,
                        "sample_rate_hz" => &mut parts[i].rate,
                        _ => return Err(bad(format!("unknown sequence field `{field}` in `{k}`"))),
                    };
                    *slot = Some(v.to_string());
                }
            }
        }
        let n_classes = n_classes.ok_or_else(|| bad("missing n_classes".into()))?;
        if n_classes < 2 {
            return Err(bad(format!("n_classes must be at least 2, got {n_classes}")));
        }
        let mut entries = Vec::with_capacity(order.len());
        for (id, p) in order.into_iter().zip(parts) {
            let features = p
                .features
                .ok_or_else(|| bad(format!("sequence `{id}` has no features path")))?;
            let split = p
                .split
                .ok_or_else(|| bad(format!("sequence `{id}` has no split")))?
                .parse()
                .map_err(bad)?;
            let sample_rate_hz = match p.rate {
                Some(r) => r.parse().map_err(|_| bad(format!("invalid sample rate for `{id}`")))?,
                None => rate,
            };
            entries.push(ManifestEntry {
                id,
                features: features.into(),
                labels: p.labels.map(PathBuf::from),
                split,
                sample_rate_hz,
            });
        }
        Ok(Self {
            n_classes,
            sample_rate_hz: rate,
            entries,
            base_dir,
        })
    }

    pub fn to_key_values(&self) -> KeyValues {
        let mut kv = KeyValues::new();
        kv.set("n_classes", self.n_classes.to_string());
        kv.set("sample_rate_hz", self.sample_rate_hz.to_string());
        for e in &self.entries {
            kv.set(format!("sequence.{}.features", e.id), e.features.display().to_string());
            if let Some(l) = &e.labels {
                kv.set(format!("sequence.{}.labels", e.id), l.display().to_string());
            }
            kv.set(format!("sequence.{}.split", e.id), e.split.to_string());
            if e.sample_rate_hz != self.sample_rate_hz {
                kv.set(format!("sequence.{}.sample_rate_hz", e.id), e.sample_rate_hz.to_string());
            }
        }
        kv
    }

    fn resolve(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base_dir.join(p)
        }
    }

    /// Loads every sequence of `split`, validating labels against
    /// `n_classes`.
    pub fn load(&self, split: Split, header: bool) -> IoResult<Vec<FeatureSequence>> {
        self.entries
            .iter()
            .filter(|e| e.split == split)
            .map(|e| {
                let labels = e.labels.as_ref().map(|l| self.resolve(l));
                csv_io::load_sequence(
                    &e.id,
                    &self.resolve(&e.features),
                    labels.as_deref(),
                    e.sample_rate_hz,
                    Some(self.n_classes),
                    header,
                )
            })
            .collect()
    }
}
