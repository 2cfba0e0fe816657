//! Content-addressed cache of per-image diffusion models.
//!
//! A key hashes the raw image bytes together with the schedule, network, and
//! training sections of the configuration, so a hit is exactly "the model
//! this command would train from scratch" and stale entries are impossible.
//! Models live under `$DDIB_CACHE_DIR`, or `./ddib-cache` when unset.

use std::path::PathBuf;

use serde::Serialize;
use sha2::{Digest, Sha256};

use ddib_core::cloud::PointCloud;
use ddib_core::model_io::{load_model, save_model};
use ddib_core::scorenet::{self, ScoreNetwork, TrainConfig};
use ddib_core::{Error, Result};

use crate::config::{ExperimentConfig, NetworkSection, ScheduleSection};

pub fn cache_dir() -> PathBuf {
    std::env::var_os("DDIB_CACHE_DIR")
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from("ddib-cache"))
}

/// The configuration sections that shape a trained model; solver and dataset
/// settings deliberately stay out of the key.
#[derive(Serialize)]
struct KeyMaterial<'a> {
    schedule: &'a ScheduleSection,
    network: &'a NetworkSection,
    training: &'a TrainConfig,
}

fn model_key(image_bytes: &[u8], cfg: &ExperimentConfig) -> Result<String> {
    let material = toml::to_string(&KeyMaterial {
        schedule: &cfg.schedule,
        network: &cfg.network,
        training: &cfg.training,
    })
    .map_err(|e| Error::Format(format!("serializing cache key: {e}")))?;
    let mut h = Sha256::new();
    h.update(image_bytes);
    h.update(material.as_bytes());
    let mut key = String::with_capacity(64);
    for byte in h.finalize() {
        key.push_str(&format!("{byte:02x}"));
    }
    Ok(key)
}

/// Returns the cached model for `(image_bytes, cfg)`, training and caching
/// it when absent. Without `allow_train` a miss is an error instructing the
/// caller to pass `--train`, since per-image training is the expensive step.
pub fn get_or_train(
    image_bytes: &[u8],
    cloud: &PointCloud,
    cfg: &ExperimentConfig,
    allow_train: bool,
    label: &str,
) -> Result<ScoreNetwork> {
    let dir = cache_dir();
    let path = dir.join(format!("{}.model.json", model_key(image_bytes, cfg)?));
    if path.exists() {
        eprintln!("using cached model for {label}: {}", path.display());
        return Ok(load_model(&path)?.net);
    }
    if !allow_train {
        return Err(Error::Parameter(format!(
            "no cached model for {label} at {}; rerun with --train to build it \
             (the cache location is controlled by DDIB_CACHE_DIR)",
            path.display()
        )));
    }
    let params = cfg.schedule.params();
    let s = params.build()?;
    let net = ScoreNetwork::init(
        cloud.dim(),
        cfg.network.time_embed_dim,
        &cfg.network.hidden,
        cfg.training.seed,
    )?;
    eprintln!(
        "training model for {label}: {} iterations on {} colors",
        cfg.training.iterations,
        cloud.n()
    );
    let trained = scorenet::train(&net, &s, cloud, &cfg.training)?;
    std::fs::create_dir_all(&dir)?;
    save_model(&path, &trained, &params, cfg.training.seed)?;
    eprintln!("cached model for {label}: {}", path.display());
    Ok(trained)
}
