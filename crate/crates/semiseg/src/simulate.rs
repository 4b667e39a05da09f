//! Synthetic datasets drawn from a switching linear dynamical system.

use std::path::{Path, PathBuf};

use semiseg_core::data::FeatureSequence;
use semiseg_core::generative::{SldsParams, SyntheticSlds};
use semiseg_core::rng::{self, derive_seed};
use semiseg_core::Tensor;

use crate::checkpoint;
use crate::csv_io;
use crate::error::{IoError, IoResult};
use crate::kv::KeyValues;
use crate::manifest::{Manifest, ManifestEntry, Split};

#[derive(Debug, Clone, PartialEq)]
pub struct SimConfig {
    pub system: SyntheticSlds,
    /// Existing parameters to sample from instead of building `system`.
    pub params: Option<PathBuf>,
    pub n_sequences: usize,
    pub n_timesteps: usize,
    /// The last `n_test` sequences form the test split.
    pub n_test: usize,
    /// Standard deviation of a constant per-sequence offset added to every
    /// observation, mimicking recording-specific placement.
    pub offset_sd: f64,
    pub sample_rate_hz: f64,
    pub seed: u64,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            system: SyntheticSlds::default(),
            params: None,
            n_sequences: 5,
            n_timesteps: 5000,
            n_test: 1,
            offset_sd: 0.0,
            sample_rate_hz: 30.0,
            seed: 0,
        }
    }
}

pub const SIM_KEYS: [&str; 16] = [
    "n_states",
    "latent_dim",
    "obs_dim",
    "self_transition",
    "fixed_point_radius",
    "rotation",
    "contraction",
    "dynamics_noise_var",
    "emission_noise_var",
    "params",
    "n_sequences",
    "n_timesteps",
    "n_test",
    "offset_sd",
    "sample_rate_hz",
    "seed",
];

impl SimConfig {
    pub fn set(&mut self, key: &str, value: &str) -> Result<(), String> {
        fn p<T: std::str::FromStr>(key: &str, v: &str) -> Result<T, String> {
            v.parse().map_err(|_| format!("cannot parse `{v}` for `{key}`"))
        }
        let s = &mut self.system;
        match key {
            "n_states" => s.n_states = p(key, value)?,
            "latent_dim" => s.latent_dim = p(key, value)?,
            "obs_dim" => s.obs_dim = p(key, value)?,
            "self_transition" => s.self_transition = p(key, value)?,
            "fixed_point_radius" => s.fixed_point_radius = p(key, value)?,
            "rotation" => s.rotation = p(key, value)?,
            "contraction" => s.contraction = p(key, value)?,
            "dynamics_noise_var" => s.dynamics_noise_var = p(key, value)?,
            "emission_noise_var" => s.emission_noise_var = p(key, value)?,
            "params" => self.params = (!value.is_empty()).then(|| PathBuf::from(value)),
            "n_sequences" => self.n_sequences = p(key, value)?,
            "n_timesteps" => self.n_timesteps = p(key, value)?,
            "n_test" => self.n_test = p(key, value)?,
            "offset_sd" => self.offset_sd = p(key, value)?,
            "sample_rate_hz" => self.sample_rate_hz = p(key, value)?,
            "seed" => self.seed = p(key, value)?,
            _ => return Err(format!("unknown simulate key `{key}`")),
        }
        Ok(())
    }

    pub fn to_key_values(&self) -> KeyValues {
        let s = &self.system;
        let mut kv = KeyValues::new();
        for (k, v) in [
            ("n_states", s.n_states.to_string()),
            ("latent_dim", s.latent_dim.to_string()),
            ("obs_dim", s.obs_dim.to_string()),
            ("self_transition", s.self_transition.to_string()),
            ("fixed_point_radius", s.fixed_point_radius.to_string()),
            ("rotation", s.rotation.to_string()),
            ("contraction", s.contraction.to_string()),
            ("dynamics_noise_var", s.dynamics_noise_var.to_string()),
            ("emission_noise_var", s.emission_noise_var.to_string()),
            ("params", self.params.as_ref().map(|p| p.display().to_string()).unwrap_or_default()),
            ("n_sequences", self.n_sequences.to_string()),
            ("n_timesteps", self.n_timesteps.to_string()),
            ("n_test", self.n_test.to_string()),
            ("offset_sd", self.offset_sd.to_string()),
            ("sample_rate_hz", self.sample_rate_hz.to_string()),
            ("seed", self.seed.to_string()),
        ] {
            kv.set(k, v);
        }
        kv
    }
}

/// One simulated sequence with its hidden continuous trajectory.
#[derive(Debug, Clone, PartialEq)]
pub struct SimulatedSequence {
    pub sequence: FeatureSequence,
    pub latents: Tensor,
    pub split: Split,
}

#[derive(Debug, Clone)]
pub struct Simulation {
    pub params: SldsParams,
    pub sequences: Vec<SimulatedSequence>,
}

impl Simulation {
    pub fn split(&self, split: Split) -> Vec<FeatureSequence> {
        self.sequences
            .iter()
            .filter(|s| s.split == split)
            .map(|s| s.sequence.clone())
            .collect()
    }
}

/// Samples every sequence; parameters come from `config.params` when set.
pub fn simulate(config: &SimConfig) -> IoResult<Simulation> {
    let params = match &config.params {
        Some(p) => checkpoint::load_slds(p)?,
        None => config.system.build(derive_seed(config.seed, 0))?,
    };
    simulate_with(&params, config)
}

pub fn simulate_with(params: &SldsParams, config: &SimConfig) -> IoResult<Simulation> {
    if config.n_sequences == 0 || config.n_test > config.n_sequences {
        return Err(IoError::Core(semiseg_core::Error::InvalidConfig(format!(
            "n_test {} must not exceed n_sequences {} (which must be positive)",
            config.n_test, config.n_sequences
        ))));
    }
    let mut sequences = Vec::with_capacity(config.n_sequences);
    for i in 0..config.n_sequences {
        let traj = params.sample_sequence(config.n_timesteps, derive_seed(config.seed, 100 + i as u64))?;
        let mut x = traj.x;
        if config.offset_sd > 0.0 {
            let mut r = rng::seeded(derive_seed(config.seed, 200 + i as u64));
            let offset: Vec<f64> = (0..x.cols())
                .map(|_| config.offset_sd * rng::standard_normal(&mut r))
                .collect();
            for t in 0..x.rows() {
                for (v, o) in x.row_mut(t).iter_mut().zip(&offset) {
                    *v += o;
                }
            }
        }
        let labels = traj.y.iter().map(|&k| k as i32).collect();
        let split = if i + config.n_test >= config.n_sequences {
            Split::Test
        } else {
            Split::Train
        };
        sequences.push(SimulatedSequence {
            sequence: FeatureSequence::new(format!("seq{i:03}"), x, config.sample_rate_hz, Some(labels))?,
            latents: traj.z,
            split,
        });
    }
    Ok(Simulation {
        params: params.clone(),
        sequences,
    })
}

/// Writes features, labels, latents, the generating parameters and a
/// manifest into `out`. Returns the written paths.
pub fn write_simulation(sim: &Simulation, out: &Path) -> IoResult<Vec<PathBuf>> {
    std::fs::create_dir_all(out).map_err(|e| IoError::io(out, e))?;
    let mut written = Vec::new();
    let mut entries = Vec::new();
    for s in &sim.sequences {
        let id = &s.sequence.id;
        let fx = format!("{id}_features.csv");
        let fy = format!("{id}_labels.csv");
        let fz = format!("{id}_latents.csv");
        csv_io::write_matrix(&out.join(&fx), &s.sequence.features)?;
        csv_io::write_column(&out.join(&fy), &s.sequence.labels)?;
        csv_io::write_matrix(&out.join(&fz), &s.latents)?;
        written.extend([out.join(&fx), out.join(&fy), out.join(&fz)]);
        entries.push(ManifestEntry {
            id: id.clone(),
            features: fx.into(),
            labels: Some(fy.into()),
            split: s.split,
            sample_rate_hz: s.sequence.sample_rate_hz,
        });
    }
    let params_path = out.join("params.ckpt");
    checkpoint::save_slds(&params_path, &sim.params)?;
    written.push(params_path);
    let manifest = Manifest {
        n_classes: sim.params.n_states(),
        sample_rate_hz: sim.sequences.first().map_or(30.0, |s| s.sequence.sample_rate_hz),
        entries,
        base_dir: out.to_path_buf(),
    };
    let mpath = out.join("manifest.cfg");
    manifest.to_key_values().write(&mpath)?;
    written.push(mpath);
    Ok(written)
}
