use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use edfa_twin_core::dataset::{
    ingest, ingest_ila_raw, normalize_ila_record, split, write_ila_raw_csv, write_records, Format, SplitSpec,
};
use edfa_twin_core::eval::{cdf_svg, evaluate, export_cdf, shot_sweep, tl_matrix, DeviceData, REPORT_SCHEMA_VERSION};
use edfa_twin_core::synth::{device_from_seed, generate_campaign, ila_raw_capture};
use edfa_twin_core::train::{train_direct, DirectTrainConfig};
use edfa_twin_core::transfer::{
    heterogeneous_transfer, heterogeneous_transfer_mse, homogeneous_transfer, tl_shot_sampler, TransferConfig,
};
use edfa_twin_core::{DeviceKind, Error, MeasurementRecord, Network, Result};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::{json, Value};

use crate::config::{resolve_seed, Resolved, RunConfig};
use crate::{Command, Common, FileFormat, Mode};

const RECORD_FILES: [(&str, Format); 2] = [("records.jsonl", Format::Jsonl), ("records.csv", Format::Csv)];

impl From<FileFormat> for Format {
    fn from(f: FileFormat) -> Self {
        match f {
            FileFormat::Csv => Format::Csv,
            FileFormat::Jsonl => Format::Jsonl,
        }
    }
}

fn format_of(path: &Path) -> Format {
    match path.extension().and_then(|e| e.to_str()) {
        Some("jsonl") => Format::Jsonl,
        _ => Format::Csv,
    }
}

fn load_common(common: &Common) -> Result<(RunConfig, u64)> {
    let cfg = RunConfig::load(common.config.as_deref())?;
    let seed = resolve_seed(common.seed, cfg.seed)?;
    Ok((cfg, seed))
}

/// Records from a file, or from `records.jsonl` / `records.csv` in a
/// directory. Rows failing validation are dropped.
fn load_records(path: &Path) -> Result<Vec<MeasurementRecord>> {
    let (file, format) = if path.is_dir() {
        RECORD_FILES
            .iter()
            .map(|(name, f)| (path.join(name), *f))
            .find(|(p, _)| p.exists())
            .ok_or_else(|| Error::InsufficientData(format!("no record file in {}", path.display())))?
    } else {
        (path.to_path_buf(), format_of(path))
    };
    let ingested = ingest(&file, format)?;
    if !ingested.rejected.is_empty() {
        eprintln!(
            "{}",
            json!({ "warning": "RejectedRecords", "file": file.display().to_string(), "count": ingested.rejected.len() })
        );
    }
    Ok(ingested.records)
}

fn device_data(path: &Path, spec: &SplitSpec) -> Result<DeviceData> {
    let records = load_records(path)?;
    let id = records.first().map(|r| r.device_id.clone()).unwrap_or_default();
    let (train, test) = split(&records, spec)?;
    Ok(DeviceData { id, train, test })
}

fn write_json(path: &Path, value: &Value) -> Result<()> {
    std::fs::write(path, serde_json::to_string_pretty(value)? + "\n")?;
    Ok(())
}

/// Adds `schema_version` and `config_hash` to a serialized artifact.
fn stamp(value: impl serde::Serialize, hash: &str) -> Result<Value> {
    let mut v = serde_json::to_value(value)?;
    if let Value::Object(m) = &mut v {
        m.entry("schema_version").or_insert(json!(REPORT_SCHEMA_VERSION));
        m.insert("config_hash".into(), json!(hash));
    }
    Ok(v)
}

/// Saves and reloads a checkpoint; the reload must reproduce it exactly.
fn save_checkpoint(net: &mut Network, path: &Path, resolved: &Resolved, split: &SplitSpec) -> Result<()> {
    net.metadata.extra.insert("config_hash".into(), json!(resolved.hash()));
    net.metadata.extra.insert("split".into(), serde_json::to_value(split)?);
    net.save(path)?;
    if Network::load(path)? != *net {
        return Err(Error::SchemaMismatch(format!("{} does not reload to the saved network", path.display())));
    }
    resolved.write_beside(path)?;
    Ok(())
}

/// The split a checkpoint was trained under, else the configured one.
fn checkpoint_split(net: &Network, fallback: &SplitSpec) -> Result<SplitSpec> {
    match net.metadata.extra.get("split") {
        Some(v) => Ok(serde_json::from_value(v.clone())?),
        None => Ok(fallback.clone()),
    }
}

fn transfer_config(cfg: &RunConfig, mode: Mode, shots: Option<usize>, epochs: Option<usize>) -> TransferConfig {
    match mode {
        Mode::Homo => {
            let mut c = cfg.homo.clone();
            c.shots_per_gain_setting = shots.unwrap_or(c.shots_per_gain_setting);
            c.epochs = epochs.unwrap_or(c.epochs);
            TransferConfig::Homogeneous(c)
        }
        Mode::Hetero => {
            let mut c = cfg.hetero.clone();
            c.shots_per_gain_setting = shots.unwrap_or(c.shots_per_gain_setting);
            c.epochs = epochs.unwrap_or(c.epochs);
            TransferConfig::Heterogeneous(c)
        }
    }
}

fn direct_config(cfg: &RunConfig, skip_pretrain: bool, coral_reference: bool) -> DirectTrainConfig {
    DirectTrainConfig {
        pretrain: cfg.pretrain.clone(),
        finetune: cfg.finetune.clone(),
        skip_pretrain,
        coral_reference_batch: coral_reference.then_some(cfg.hetero.reference_batch),
    }
}

fn run_transfer(
    source: &Network,
    shots: &[MeasurementRecord],
    tcfg: &TransferConfig,
    mse_only: bool,
    rng: &mut ChaCha8Rng,
) -> Result<(Network, Value)> {
    Ok(match tcfg {
        TransferConfig::Homogeneous(c) => {
            let (net, trace) = homogeneous_transfer(source, shots, c)?;
            (net, json!(trace.last()))
        }
        TransferConfig::Heterogeneous(c) if mse_only => {
            let (net, trace) = heterogeneous_transfer_mse(source, shots, c, rng)?;
            (net, serde_json::to_value(trace.last())?)
        }
        TransferConfig::Heterogeneous(c) => {
            let (net, trace) = heterogeneous_transfer(source, shots, c, rng)?;
            (net, serde_json::to_value(trace.last())?)
        }
    })
}

pub fn run(command: Command) -> Result<Value> {
    match command {
        Command::Synth { common, kind, gains, out, format, ila_raw } => {
            let (mut cfg, seed) = load_common(&common)?;
            let kind: DeviceKind = kind.parse()?;
            if gains.is_some() {
                cfg.campaign.gains = gains;
            }
            if ila_raw && kind != DeviceKind::Ila {
                return Err(Error::InvalidConfig("--ila-raw applies to ILA devices only".into()));
            }
            let resolved = Resolved::new("synth", seed, cfg.clone())
                .arg("kind", kind)
                .arg("format", format!("{format:?}").to_lowercase())
                .arg("ila_raw", ila_raw);
            let profile = device_from_seed(seed, kind);
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let records = generate_campaign(&profile, &cfg.campaign, &mut rng)?;
            std::fs::create_dir_all(&out)?;
            let format: Format = format.into();
            let name = RECORD_FILES.iter().find(|(_, f)| *f == format).map(|(n, _)| *n).unwrap_or("records.csv");
            let path = out.join(name);
            write_records(&path, format, &records)?;
            resolved.write_beside(&path)?;
            let mut files = vec![path.display().to_string()];
            if ila_raw {
                let raws = records
                    .iter()
                    .map(|r| ila_raw_capture(r, rng.random_range(0.5..3.0), rng.random_range(0.5..3.0)))
                    .collect::<Result<Vec<_>>>()?;
                let raw_path = out.join("raw.csv");
                write_ila_raw_csv(std::io::BufWriter::new(std::fs::File::create(&raw_path)?), &raws)?;
                files.push(raw_path.display().to_string());
            }
            let device = out.join("device.json");
            write_json(&device, &stamp(&profile, &resolved.hash())?)?;
            files.push(device.display().to_string());
            Ok(json!({
                "command": "synth",
                "device_id": profile.device_id(),
                "records": records.len(),
                "files": files,
                "config_hash": resolved.hash(),
            }))
        }

        Command::Ingest { input, format, ila_normalize, out } => {
            let resolved = Resolved::new("ingest", 0, RunConfig::default())
                .arg("in", input.display())
                .arg("format", format!("{format:?}").to_lowercase())
                .arg("ila_normalize", ila_normalize);
            let (records, rejected) = if ila_normalize {
                if format != FileFormat::Csv {
                    return Err(Error::InvalidConfig("raw ILA captures are CSV".into()));
                }
                let raws = ingest_ila_raw(&input)?;
                let records =
                    raws.iter().map(|r| normalize_ila_record(r).map(|(rec, _)| rec)).collect::<Result<Vec<_>>>()?;
                (records, Vec::new())
            } else {
                let ing = ingest(&input, format.into())?;
                (ing.records, ing.rejected)
            };
            write_records(&out, format_of(&out), &records)?;
            resolved.write_beside(&out)?;
            Ok(json!({
                "command": "ingest",
                "records": records.len(),
                "rejected": rejected,
                "out": out.display().to_string(),
                "config_hash": resolved.hash(),
            }))
        }

        Command::Train { common, data, out, skip_pretrain, no_coral_reference } => {
            let (cfg, seed) = load_common(&common)?;
            let resolved = Resolved::new("train", seed, cfg.clone())
                .arg("data", data.display())
                .arg("skip_pretrain", skip_pretrain)
                .arg("coral_reference", !no_coral_reference);
            let dev = device_data(&data, &cfg.split)?;
            let dcfg = direct_config(&cfg, skip_pretrain, !no_coral_reference);
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut model = train_direct(&dev.train, &dcfg, &mut rng)?;
            save_checkpoint(&mut model.network, &out, &resolved, &cfg.split)?;
            let log = log_path(&out);
            let mut lines = String::new();
            for e in &model.events {
                lines += &serde_json::to_string(e)?;
                lines.push('\n');
            }
            std::fs::write(&log, lines)?;
            Ok(json!({
                "command": "train",
                "device_id": dev.id,
                "train_records": dev.train.len(),
                "final_loss": model.finetune_trace.last(),
                "checkpoint": out.display().to_string(),
                "log": log.display().to_string(),
                "config_hash": resolved.hash(),
            }))
        }

        Command::Transfer { common, source, target_data, mode, shots, epochs, no_coral, out } => {
            let (cfg, seed) = load_common(&common)?;
            if no_coral && mode == Mode::Homo {
                return Err(Error::InvalidConfig("--no-coral applies to heterogeneous transfer".into()));
            }
            let tcfg = transfer_config(&cfg, mode, shots, epochs);
            let resolved = Resolved::new("transfer", seed, cfg.clone())
                .arg("source", source.display())
                .arg("target_data", target_data.display())
                .arg("transfer", serde_json::to_string(&tcfg)?)
                .arg("no_coral", no_coral);
            let src = Network::load(&source)?;
            if mode == Mode::Hetero && !no_coral && src.coral_reference.is_none() {
                return Err(Error::MissingReference);
            }
            let dev = device_data(&target_data, &cfg.split)?;
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let picked = tl_shot_sampler(&dev.train, tcfg.shots_per_gain_setting(), &mut rng)?;
            let (mut net, final_loss) = run_transfer(&src, &picked, &tcfg, no_coral, &mut rng)?;
            save_checkpoint(&mut net, &out, &resolved, &cfg.split)?;
            let mut per_gain: BTreeMap<String, usize> = BTreeMap::new();
            for r in &picked {
                *per_gain.entry(r.gain_target_db.to_string()).or_default() += 1;
            }
            let manifest = stamp(
                json!({
                    "source": source.display().to_string(),
                    "source_device": src.metadata.source_device,
                    "target_device": dev.id,
                    "transfer": tcfg,
                    "coral": mode == Mode::Hetero && !no_coral,
                    "shots_per_gain": per_gain,
                    "shots": picked.iter().map(|r| json!({
                        "gain_db": r.gain_target_db,
                        "config_class": r.config_class,
                        "active_channels": r.mask.popcount(),
                    })).collect::<Vec<_>>(),
                    "final_loss": final_loss,
                    "provenance": net.metadata.provenance,
                }),
                &resolved.hash(),
            )?;
            let manifest_path = sibling(&out, ".manifest.json");
            write_json(&manifest_path, &manifest)?;
            Ok(json!({
                "command": "transfer",
                "shots": picked.len(),
                "checkpoint": out.display().to_string(),
                "manifest": manifest_path.display().to_string(),
                "config_hash": resolved.hash(),
            }))
        }

        Command::Eval { common, ckpt, data, report, cdf, svg } => {
            let (cfg, seed) = load_common(&common)?;
            let net = Network::load(&ckpt)?;
            let spec = checkpoint_split(&net, &cfg.split)?;
            let mut resolved = Resolved::new("eval", seed, cfg)
                .arg("ckpt", ckpt.display())
                .arg("data", data.display());
            resolved.config.split = spec.clone();
            let dev = device_data(&data, &spec)?;
            let mut rep = evaluate(&net, &dev.test)?;
            rep.config_hash = Some(resolved.hash());
            rep.save(&report)?;
            resolved.write_beside(&report)?;
            if let Some(p) = &cdf {
                export_cdf(&rep, p)?;
            }
            if let Some(p) = &svg {
                std::fs::write(p, cdf_svg(&rep)?)?;
            }
            Ok(json!({
                "command": "eval",
                "device_id": dev.id,
                "test_records": dev.test.len(),
                "mae_db": rep.overall.mae_db,
                "p95_db": rep.overall.p95_db,
                "report": report.display().to_string(),
                "config_hash": resolved.hash(),
            }))
        }

        Command::Matrix { common, devices, mode, out } => {
            let (cfg, seed) = load_common(&common)?;
            let tcfg = transfer_config(&cfg, mode, None, None);
            let resolved = Resolved::new("matrix", seed, cfg.clone())
                .arg("devices", devices.iter().map(|d| d.display().to_string()).collect::<Vec<_>>().join(","))
                .arg("transfer", serde_json::to_string(&tcfg)?);
            let data = devices.iter().map(|d| device_data(d, &cfg.split)).collect::<Result<Vec<_>>>()?;
            let dcfg = direct_config(&cfg, false, mode == Mode::Hetero);
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let matrix = tl_matrix(
                &data,
                |d| Ok(train_direct(&d.train, &dcfg, &mut ChaCha8Rng::seed_from_u64(rng.random()))?.network),
                |src, d| {
                    let mut r = ChaCha8Rng::seed_from_u64(seed ^ fnv(&d.id));
                    let picked = tl_shot_sampler(&d.train, tcfg.shots_per_gain_setting(), &mut r)?;
                    Ok(run_transfer(src, &picked, &tcfg, false, &mut r)?.0)
                },
            )?;
            write_json(&out, &stamp(&matrix, &resolved.hash())?)?;
            resolved.write_beside(&out)?;
            Ok(json!({
                "command": "matrix",
                "devices": matrix.devices,
                "mae_db": matrix.mae_db,
                "out": out.display().to_string(),
                "config_hash": resolved.hash(),
            }))
        }

        Command::Sweep { common, source, target_data, shots, seeds, mode, epochs, out } => {
            let (cfg, seed) = load_common(&common)?;
            let tcfg = transfer_config(&cfg, mode, None, epochs);
            let resolved = Resolved::new("sweep", seed, cfg.clone())
                .arg("source", source.display())
                .arg("target_data", target_data.display())
                .arg("shots", format!("{shots:?}"))
                .arg("seeds", format!("{seeds:?}"))
                .arg("transfer", serde_json::to_string(&tcfg)?);
            let src = Network::load(&source)?;
            let dev = device_data(&target_data, &cfg.split)?;
            let table = shot_sweep(&src, &dev, &shots, &tcfg, &seeds)?;
            write_json(&out, &stamp(&table, &resolved.hash())?)?;
            let csv_path = out.with_extension("csv");
            std::fs::write(&csv_path, table.to_csv())?;
            resolved.write_beside(&out)?;
            Ok(json!({
                "command": "sweep",
                "means": table.means,
                "spearman_rho": table.spearman_rho,
                "out": out.display().to_string(),
                "csv": csv_path.display().to_string(),
                "config_hash": resolved.hash(),
            }))
        }
    }
}

fn sibling(path: &Path, suffix: &str) -> PathBuf {
    let mut name = path.file_name().map(|n| n.to_os_string()).unwrap_or_default();
    name.push(suffix);
    path.with_file_name(name)
}

fn log_path(ckpt: &Path) -> PathBuf {
    sibling(ckpt, ".log.jsonl")
}

/// Stable 64-bit FNV-1a, used to derive per-target seeds.
fn fnv(s: &str) -> u64 {
    s.bytes().fold(0xcbf2_9ce4_8422_2325, |h, b| (h ^ b as u64).wrapping_mul(0x100_0000_01b3))
}
