//! Command implementations behind the argument surface in `main`.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::Path;

use serde::Serialize;

use ddib_core::bridge::{self, TranslationRecord, TranslationReport};
use ddib_core::cloud::{standardize, PointCloud};
use ddib_core::datasets::{self, DatasetKind};
use ddib_core::image::{pixel_mse, Raster};
use ddib_core::model_io::{load_model, load_pair, save_model, schedule_fingerprint};
use ddib_core::odesolve::{solve_cloud, solve_cloud_with_path, SolveSpec};
use ddib_core::ot;
use ddib_core::scorenet::{self, NoisePredictor, ScoreNetwork};
use ddib_core::{Error, Result};

use crate::config::{self, ExperimentConfig};
use crate::plot::scatter_svg;
use crate::transfer::transfer_image;
use crate::{
    Cli, Command, CycleArgs, CycleTableArgs, GenArgs, MseArgs, OtAlgorithm, OtArgs, PlotArgs,
    SolveArgs, TrainArgs, TransferArgs, TranslateArgs,
};

/// The five round trips of the reference cycle table.
const TABLE_PAIRS: [(DatasetKind, DatasetKind); 5] = [
    (DatasetKind::ParallelRings, DatasetKind::ParallelSquares),
    (DatasetKind::ParallelSquares, DatasetKind::ConcentricSquares),
    (DatasetKind::ConcentricRings, DatasetKind::ParallelRings),
    (DatasetKind::ConcentricRings, DatasetKind::ConcentricSquares),
    (DatasetKind::Moons, DatasetKind::Checkerboards),
];

pub fn dispatch(cli: Cli) -> Result<()> {
    let cfg = config::load(cli.config.as_deref())?;
    match cli.command {
        Command::Gen(a) => gen(&cfg, a),
        Command::Train(a) => train(&cfg, a),
        Command::Encode(a) => solve(&cfg, a, SolveSpec::forward),
        Command::Decode(a) => solve(&cfg, a, SolveSpec::reverse),
        Command::Translate(a) => translate(&cfg, a),
        Command::Cycle(a) => cycle(&cfg, a),
        Command::CycleTable(a) => cycle_table(&cfg, a),
        Command::Ot(a) => ot_cmd(a),
        Command::ColorTransfer(a) => color_transfer(&cfg, a),
        Command::Mse(a) => mse(a),
        Command::Plot(a) => plot(a),
    }
}

fn gen(cfg: &ExperimentConfig, a: GenArgs) -> Result<()> {
    let n = a.n.unwrap_or(cfg.datasets.n);
    let seed = a.seed.unwrap_or(cfg.datasets.seed);
    let mut cloud = datasets::generate(a.kind, n, seed)?;
    if a.standardize {
        cloud = standardize(&cloud)?.0;
    }
    ensure_parent(&a.out)?;
    cloud.write_csv_file(&a.out)?;
    println!("wrote {} {} points to {}", cloud.n(), a.kind.name(), a.out.display());
    Ok(())
}

fn train(cfg: &ExperimentConfig, a: TrainArgs) -> Result<()> {
    let mut cfg = cfg.clone();
    override_if(&mut cfg.training.iterations, a.iterations);
    override_if(&mut cfg.training.batch_size, a.batch_size);
    override_if(&mut cfg.training.learning_rate, a.learning_rate);
    override_if(&mut cfg.training.ema_decay, a.ema_decay);
    override_if(&mut cfg.training.seed, a.train_seed);
    override_if(&mut cfg.schedule.steps, a.steps);
    override_if(&mut cfg.schedule.beta_min, a.beta_min);
    override_if(&mut cfg.schedule.beta_max, a.beta_max);

    let (data, label) = match (a.domain, &a.data) {
        (Some(kind), None) => {
            let n = a.n.unwrap_or(cfg.datasets.n);
            let seed = a.seed.unwrap_or(cfg.datasets.seed);
            let raw = datasets::generate(kind, n, seed)?;
            (standardize(&raw)?.0, kind.name().to_string())
        }
        (None, Some(path)) => {
            let raw = PointCloud::read_csv_file(path)?;
            let data = if a.standardize { standardize(&raw)?.0 } else { raw };
            (data, path.display().to_string())
        }
        _ => return Err(Error::Parameter("pass exactly one of --domain or --data".into())),
    };

    let params = cfg.schedule.params();
    let s = params.build()?;
    let net = ScoreNetwork::init(
        data.dim(),
        cfg.network.time_embed_dim,
        &cfg.network.hidden,
        cfg.training.seed,
    )?;
    eprintln!(
        "training on {label}: {} points, {} iterations",
        data.n(),
        cfg.training.iterations
    );
    let trained = scorenet::train(&net, &s, &data, &cfg.training)?;
    ensure_parent(&a.out)?;
    save_model(&a.out, &trained, &params, cfg.training.seed)?;
    println!("wrote model to {}", a.out.display());
    Ok(())
}

fn override_if<T>(slot: &mut T, value: Option<T>) {
    if let Some(v) = value {
        *slot = v;
    }
}

fn solve(cfg: &ExperimentConfig, a: SolveArgs, spec: fn(usize) -> SolveSpec) -> Result<()> {
    let loaded = load_model(&a.model)?;
    let s = loaded.schedule.build()?;
    let points = PointCloud::read_csv_file(&a.points)?;
    let spec = spec(a.steps.unwrap_or(cfg.solve.n_steps));

    let end = if let Some(trace) = &a.trace {
        let (end, path) = solve_cloud_with_path(&loaded.net, &s, &points, spec)?;
        write_trace(trace, &path)?;
        end
    } else {
        solve_cloud(&loaded.net, &s, &points, spec)?
    };
    ensure_parent(&a.out)?;
    end.write_csv_file(&a.out)?;
    println!("wrote {} points to {}", end.n(), a.out.display());
    Ok(())
}

fn translate(cfg: &ExperimentConfig, a: TranslateArgs) -> Result<()> {
    let (src, tgt, s) = load_pair(&a.src_model, &a.tgt_model)?;
    let points = PointCloud::read_csv_file(&a.points)?;
    let n_steps = a.steps.unwrap_or(cfg.solve.n_steps);
    let (latents, targets) = bridge::translate_with_latents(&src.net, &tgt.net, &s, &points, n_steps)?;

    ensure_parent(&a.out)?;
    targets.write_csv_file(&a.out)?;
    if let Some(path) = &a.latents {
        ensure_parent(path)?;
        latents.write_csv_file(path)?;
    }
    if let Some(path) = &a.report {
        // Assembled from the clouds already in hand rather than re-solving.
        let records = (0..points.n())
            .map(|i| TranslationRecord {
                tag: points.tag(i),
                source: points.point(i).to_vec(),
                latent: latents.point(i).to_vec(),
                target: targets.point(i).to_vec(),
                reverse_latent: None,
                reconstructed: None,
            })
            .collect();
        let report = TranslationReport {
            source_model: src.net.describe(),
            target_model: tgt.net.describe(),
            n_steps,
            mean_roundtrip_l2: None,
            records,
        };
        write_json(path, &report)?;
    }
    println!("translated {} points to {}", targets.n(), a.out.display());
    Ok(())
}

fn cycle(cfg: &ExperimentConfig, a: CycleArgs) -> Result<()> {
    let (ma, mb, s) = load_pair(&a.model_a, &a.model_b)?;
    let points = PointCloud::read_csv_file(&a.points)?;
    let n_steps = a.steps.unwrap_or(cfg.solve.n_steps);
    let report = bridge::cycle_check(&ma.net, &mb.net, &s, &points, n_steps)?;
    write_json(&a.report, &report)?;
    println!("mean roundtrip L2: {}", report.mean_roundtrip_l2.unwrap_or(f64::NAN));
    Ok(())
}

fn cycle_table(cfg: &ExperimentConfig, a: CycleTableArgs) -> Result<()> {
    let domains: Vec<DatasetKind> = match &a.domains {
        None => DatasetKind::ALL.to_vec(),
        Some(text) => {
            let kinds: Vec<DatasetKind> = text
                .split(',')
                .map(str::trim)
                .filter(|s| !s.is_empty())
                .map(str::parse)
                .collect::<Result<_>>()?;
            if kinds.is_empty() {
                return Err(Error::Parameter("the domain list is empty".into()));
            }
            kinds
        }
    };
    let pairs: Vec<(DatasetKind, DatasetKind)> = TABLE_PAIRS
        .iter()
        .copied()
        .filter(|(x, y)| domains.contains(x) && domains.contains(y))
        .collect();
    if pairs.is_empty() {
        return Err(Error::Parameter(
            "no table pair has both of its domains in the requested list".into(),
        ));
    }

    let model_path = |k: DatasetKind| a.models_dir.join(format!("{}.model.json", k.name()));
    let mut needed: Vec<DatasetKind> = Vec::new();
    for (x, y) in &pairs {
        for k in [*x, *y] {
            if !needed.contains(&k) {
                needed.push(k);
            }
        }
    }
    let missing: Vec<DatasetKind> =
        needed.iter().copied().filter(|k| !model_path(*k).exists()).collect();
    if !missing.is_empty() {
        let mut msg = String::from("missing domain models; train them first:");
        for k in missing {
            msg.push_str(&format!(
                "\n  ddib train --domain {} --out {}",
                k.name(),
                model_path(k).display()
            ));
        }
        return Err(Error::Io(std::io::Error::new(std::io::ErrorKind::NotFound, msg)));
    }

    let mut models = BTreeMap::new();
    for k in &needed {
        models.insert(k.name(), load_model(model_path(*k))?);
    }
    let first = &models[needed[0].name()];
    for k in &needed {
        let m = &models[k.name()];
        if schedule_fingerprint(&m.schedule) != schedule_fingerprint(&first.schedule) {
            return Err(Error::Compatibility(format!(
                "{} and {} were trained under different noise schedules",
                needed[0].name(),
                k.name()
            )));
        }
    }
    let s = first.schedule.build()?;

    let n = a.n.unwrap_or(cfg.datasets.n);
    let seed = a.seed.unwrap_or(cfg.datasets.seed);
    let n_steps = a.steps.unwrap_or(cfg.solve.n_steps);
    let mut rows: Vec<(String, f64)> = Vec::new();
    for (x, y) in &pairs {
        let raw = datasets::generate(*x, n, seed)?;
        let (points, _) = standardize(&raw)?;
        let report = bridge::cycle_check(
            &models[x.name()].net,
            &models[y.name()].net,
            &s,
            &points,
            n_steps,
        )?;
        let label = format!("{}->{}->{}", x.code(), y.code(), x.code());
        rows.push((label, report.mean_roundtrip_l2.unwrap_or(f64::NAN)));
    }

    ensure_parent(&a.out)?;
    let mut csv = String::from("pair,mean_roundtrip_l2\n");
    for (label, value) in &rows {
        csv.push_str(&format!("{label},{value}\n"));
    }
    std::fs::write(&a.out, csv)?;

    println!("{:<14} {}", "pair", "mean roundtrip L2");
    for (label, value) in &rows {
        println!("{label:<14} {value:.4}");
    }
    println!("table written to {}", a.out.display());
    Ok(())
}

fn ot_cmd(a: OtArgs) -> Result<()> {
    let source = PointCloud::read_csv_file(&a.source)?;
    let target = PointCloud::read_csv_file(&a.target)?;
    let plan = match a.algorithm {
        OtAlgorithm::Emd => ot::emd(&source, &target)?,
        OtAlgorithm::Sinkhorn => ot::sinkhorn(&source, &target, a.epsilon, a.max_iters, a.tol)?,
    };
    write_json(&a.out, &plan)?;
    println!("transport cost: {}", plan.cost());
    Ok(())
}

fn color_transfer(cfg: &ExperimentConfig, a: TransferArgs) -> Result<()> {
    let reference = std::fs::read(&a.reference)?;
    let subject = std::fs::read(&a.subject)?;
    let out = transfer_image(&reference, &subject, a.method, a.sample, a.seed, cfg, a.train)?;
    ensure_parent(&a.out)?;
    out.result.write_ppm_file(&a.out)?;
    if let Some(path) = &a.report {
        write_json(path, &out.report)?;
    }
    println!(
        "wrote {}; pixel MSE against the subject: {}",
        a.out.display(),
        out.report.pixel_mse_to_subject
    );
    for (name, value) in &out.report.pixel_mse_vs {
        println!("pixel MSE vs {name}: {value}");
    }
    Ok(())
}

fn mse(a: MseArgs) -> Result<()> {
    let x = Raster::read_ppm_file(&a.a)?;
    let y = Raster::read_ppm_file(&a.b)?;
    println!("{}", pixel_mse(&x, &y)?);
    Ok(())
}

fn plot(a: PlotArgs) -> Result<()> {
    let mut panels = Vec::with_capacity(a.inputs.len());
    for path in &a.inputs {
        let cloud = PointCloud::read_csv_file(path)?;
        panels.push((panel_title(path), cloud));
    }
    let svg = scatter_svg(&panels)?;
    ensure_parent(&a.out)?;
    std::fs::write(&a.out, svg)?;
    println!("wrote {}", a.out.display());
    Ok(())
}

fn panel_title(path: &Path) -> String {
    path.file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| path.display().to_string())
}

fn ensure_parent(path: &Path) -> Result<()> {
    if let Some(dir) = path.parent() {
        if !dir.as_os_str().is_empty() {
            std::fs::create_dir_all(dir)?;
        }
    }
    Ok(())
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    ensure_parent(path)?;
    let text = serde_json::to_string_pretty(value)
        .map_err(|e| Error::Format(format!("serializing {}: {e}", path.display())))?;
    std::fs::write(path, text)?;
    Ok(())
}

/// CSV dump of a solve trajectory: one row per point per recorded step.
fn write_trace(path: &Path, snapshots: &[(usize, PointCloud)]) -> Result<()> {
    ensure_parent(path)?;
    let mut w = std::io::BufWriter::new(std::fs::File::create(path)?);
    let dim = snapshots.first().map(|(_, c)| c.dim()).unwrap_or(0);
    let mut line = String::from("step,");
    for a in 0..dim {
        line.push_str(&format!("x{a},"));
    }
    line.push_str("tag\n");
    w.write_all(line.as_bytes())?;
    for (step, cloud) in snapshots {
        for (tag, p) in cloud.iter() {
            line.clear();
            line.push_str(&format!("{step},"));
            for c in p {
                line.push_str(&format!("{c},"));
            }
            line.push_str(&format!("{tag}\n"));
            w.write_all(line.as_bytes())?;
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn table_pairs_match_the_reference_legend() {
        let labels: Vec<String> = TABLE_PAIRS
            .iter()
            .map(|(a, b)| format!("{}->{}", a.code(), b.code()))
            .collect();
        assert_eq!(labels, ["pr->ps", "ps->cs", "cr->pr", "cr->cs", "m->cb"]);
    }
}
