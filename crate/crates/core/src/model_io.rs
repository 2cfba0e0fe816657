//! Model persistence: a versioned JSON document holding the architecture
//! header, the noise-schedule parameters the model was trained under, and
//! the flat weight vector.
//!
//! Translation only makes sense when both models share one noise schedule —
//! the latent of one diffusion is a latent of the other only then — so
//! [`load_pair`] compares schedule fingerprints and refuses mismatches.

use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::schedule::{NoiseSchedule, ScheduleParams};
use crate::scorenet::{Activation, NoisePredictor, ScoreNetwork};
use crate::{Error, Result};

/// Format revision this build reads and writes.
pub const SCHEMA_VERSION: u32 = 1;

/// On-disk layout: header fields first, weights as the final flat array of
/// decimal reals.
#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct SavedModel {
    schema_version: u32,
    input_dim: usize,
    time_embed_dim: usize,
    hidden_dims: Vec<usize>,
    activation: Activation,
    schedule: ScheduleParams,
    train_seed: u64,
    weights: Vec<f64>,
}

/// Minimal probe so future revisions fail with a version message instead of
/// a missing-field complaint.
#[derive(Deserialize)]
struct VersionProbe {
    schema_version: u32,
}

/// A model read back from disk, with the schedule it was trained under.
#[derive(Debug, Clone)]
pub struct LoadedModel {
    pub net: ScoreNetwork,
    pub schedule: ScheduleParams,
    pub train_seed: u64,
}

/// Writes `net` and its training context to `path` as schema-version-1 JSON.
pub fn save_model(
    path: impl AsRef<Path>,
    net: &ScoreNetwork,
    schedule: &ScheduleParams,
    train_seed: u64,
) -> Result<()> {
    let saved = SavedModel {
        schema_version: SCHEMA_VERSION,
        input_dim: net.input_dim(),
        time_embed_dim: net.time_embed_dim(),
        hidden_dims: net.hidden_dims().to_vec(),
        activation: net.activation(),
        schedule: schedule.clone(),
        train_seed,
        weights: net.weights().to_vec(),
    };
    let mut w = BufWriter::new(File::create(path)?);
    serde_json::to_writer(&mut w, &saved)
        .map_err(|e| Error::Format(format!("serializing model: {e}")))?;
    w.write_all(b"\n")?;
    w.flush()?;
    Ok(())
}

/// Reads a schema-version-1 model file back into a usable network.
pub fn load_model(path: impl AsRef<Path>) -> Result<LoadedModel> {
    let path = path.as_ref();
    let name = path.display();
    let text = std::io::read_to_string(BufReader::new(File::open(path)?))?;
    let probe: VersionProbe = serde_json::from_str(&text)
        .map_err(|e| Error::Format(format!("{name}: not a model file: {e}")))?;
    if probe.schema_version != SCHEMA_VERSION {
        return Err(Error::Format(format!(
            "{name}: schema version {} is not supported; this build reads version {}",
            probe.schema_version, SCHEMA_VERSION
        )));
    }
    let saved: SavedModel = serde_json::from_str(&text)
        .map_err(|e| Error::Format(format!("{name}: malformed model file: {e}")))?;
    saved
        .schedule
        .build()
        .map_err(|e| Error::Format(format!("{name}: invalid schedule: {e}")))?;
    let net = ScoreNetwork::from_parts(
        saved.input_dim,
        saved.time_embed_dim,
        saved.hidden_dims,
        saved.activation,
        saved.weights,
    )
    .map_err(|e| Error::Format(format!("{name}: inconsistent model file: {e}")))?;
    Ok(LoadedModel { net, schedule: saved.schedule, train_seed: saved.train_seed })
}

/// FNV-1a over the schedule parameters' exact bit patterns; equal schedules
/// hash equal, and any parameter difference changes the fingerprint.
pub fn schedule_fingerprint(params: &ScheduleParams) -> u64 {
    let mut h: u64 = 0xcbf29ce484222325;
    let mut eat = |v: u64| {
        for b in v.to_le_bytes() {
            h ^= b as u64;
            h = h.wrapping_mul(0x100000001b3);
        }
    };
    eat(params.steps as u64);
    eat(params.beta_min.to_bits());
    eat(params.beta_max.to_bits());
    h
}

/// Loads two domain models destined for one bridge and enforces that they
/// were trained under the same noise schedule, returning that shared
/// schedule ready for solving.
pub fn load_pair(
    path_a: impl AsRef<Path>,
    path_b: impl AsRef<Path>,
) -> Result<(LoadedModel, LoadedModel, NoiseSchedule)> {
    let a = load_model(&path_a)?;
    let b = load_model(&path_b)?;
    if schedule_fingerprint(&a.schedule) != schedule_fingerprint(&b.schedule) {
        return Err(Error::Compatibility(format!(
            "models {} and {} were trained under different noise schedules; \
             a shared latent needs a shared schedule",
            path_a.as_ref().display(),
            path_b.as_ref().display()
        )));
    }
    let schedule = a.schedule.build()?;
    Ok((a, b, schedule))
}
