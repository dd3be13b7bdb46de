use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::config::RunConfig;
use super::{DataArgs, Overrides};
use crate::arch::{Checkpoint, Model, SiteKind, Variant};
use crate::data::{load_voc_dir, save_voc_dir, synth_orange, Palette, SegmentationSample, CLASS_NAMES};
use crate::error::{Error, Result};
use crate::metrics::{
    collect_attention_stats, compute_metrics, evaluate, excitation_maps, matrix_csv, metrics_table, prf_matrices,
    raw_stats_csv, stats_csv, write_excitation_maps, write_text, SegMetrics, SiteStats,
};
use crate::tensor::{Precision, Scalar};
use crate::train::{train, TrainReport, TrainSetup};

fn config_base(path: &Path) -> PathBuf {
    path.parent().map_or_else(|| PathBuf::from("."), Path::to_path_buf)
}

fn load_config(path: &Path, overrides: &Overrides) -> Result<RunConfig> {
    let mut cfg = RunConfig::load(path)?;
    overrides.apply(&mut cfg)?;
    Ok(cfg)
}

struct Datasets {
    train: Vec<SegmentationSample>,
    val: Option<Vec<SegmentationSample>>,
}

fn load_datasets(cfg: &RunConfig, base: &Path) -> Result<Datasets> {
    let train = cfg.data.train.load(&cfg.data.palette, base)?;
    if train.is_empty() {
        return Err(Error::Empty("training dataset has no samples".into()));
    }
    let val = match &cfg.data.val {
        Some(v) => {
            let v = v.load(&cfg.data.palette, base)?;
            if v.is_empty() {
                return Err(Error::Empty("validation dataset has no samples".into()));
            }
            Some(v)
        }
        None => None,
    };
    Ok(Datasets { train, val })
}

/// Writes the metrics table and P/R/F1 CSVs for `model` on `samples`.
fn write_evaluation<T: Scalar>(
    model: &Model<T>,
    samples: &[SegmentationSample],
    name: &str,
    dir: &Path,
    batch_size: usize,
) -> Result<SegMetrics> {
    let cm = evaluate(model, samples, batch_size)?;
    let metrics = compute_metrics(&cm)?;
    let prf = prf_matrices(&cm)?;
    let names = &CLASS_NAMES[..model.spec.num_classes.min(CLASS_NAMES.len())];
    let table = metrics_table(&[(name.to_string(), metrics.clone())], names);
    write_text(&dir.join("metrics.txt"), &table)?;
    write_text(&dir.join("precision.csv"), &matrix_csv(&prf.precision, names))?;
    write_text(&dir.join("recall.csv"), &matrix_csv(&prf.recall, names))?;
    write_text(&dir.join("f1.csv"), &matrix_csv(&prf.f1, names))?;
    write_text(
        &dir.join("confusion.json"),
        &serde_json::to_string_pretty(&cm).expect("counts serialize"),
    )?;
    print!("{table}");
    Ok(metrics)
}

fn train_typed<T: Scalar>(cfg: &RunConfig, data: &Datasets) -> Result<(Model<T>, TrainReport, SegMetrics)> {
    let model = Model::<T>::build(&cfg.architecture, cfg.seed)?;
    log::info!(
        "training {} ({} parameters) on {} samples",
        cfg.architecture.variant,
        model.param_count(),
        data.train.len()
    );
    let setup = TrainSetup {
        train: &data.train,
        val: data.val.as_deref(),
        augment: cfg.augment.as_ref(),
        out_dir: Some(&cfg.output_dir),
    };
    let report = train(&model, &setup, &cfg.train)?;
    write_text(
        &cfg.output_dir.join("report.json"),
        &serde_json::to_string_pretty(&report).expect("report serializes"),
    )?;
    let eval_set = data.val.as_deref().unwrap_or(&data.train);
    let metrics = write_evaluation(
        &model,
        eval_set,
        cfg.architecture.variant.display_name(),
        &cfg.output_dir,
        cfg.train.batch_size,
    )?;
    Ok((model, report, metrics))
}

fn train_resolved(cfg: &RunConfig, data: &Datasets) -> Result<(TrainReport, SegMetrics, usize)> {
    cfg.archive()?;
    match cfg.train.precision {
        Precision::Single => train_typed::<f32>(cfg, data).map(|(m, r, s)| (r, s, m.param_count())),
        Precision::Double => train_typed::<f64>(cfg, data).map(|(m, r, s)| (r, s, m.param_count())),
    }
}

/// Builds, trains and evaluates one model; everything lands under the
/// config's output directory.
pub fn cmd_train(config: &Path, overrides: &Overrides) -> Result<TrainReport> {
    let cfg = load_config(config, overrides)?;
    let data = load_datasets(&cfg, &config_base(config))?;
    train_resolved(&cfg, &data).map(|(r, _, _)| r)
}

fn eval_samples(data: &DataArgs, input_size: usize) -> Result<(Vec<SegmentationSample>, Option<RunConfig>)> {
    let cfg = data.config.as_deref().map(RunConfig::load).transpose()?;
    let palette = cfg.as_ref().map_or_else(Palette::default, |c| c.data.palette.clone());
    let samples = if let Some(n) = data.synthetic {
        synth_orange(data.synthetic_seed, n, input_size)?
    } else if let (Some(images), Some(masks)) = (&data.images, &data.masks) {
        load_voc_dir(images, masks, &palette)?
    } else if let (Some(c), Some(path)) = (&cfg, &data.config) {
        c.data.val.as_ref().unwrap_or(&c.data.train).load(&palette, &config_base(path))?
    } else {
        return Err(Error::Usage(
            "no dataset: pass --config, --images with --masks, or --synthetic".into(),
        ));
    };
    if samples.is_empty() {
        return Err(Error::Empty("evaluation dataset has no samples".into()));
    }
    Ok((samples, cfg))
}

fn load_checkpoint(path: &Path) -> Result<Checkpoint> {
    if !path.exists() {
        return Err(Error::Usage(format!("checkpoint {} does not exist", path.display())));
    }
    Checkpoint::load(path)
}

fn default_dir(checkpoint: &Path, sub: &str) -> PathBuf {
    config_base(checkpoint).join(sub)
}

/// Evaluates a checkpoint and writes the metrics table and P/R/F1 CSVs.
pub fn cmd_eval(checkpoint: &Path, data: &DataArgs, output_dir: Option<&Path>, batch_size: usize) -> Result<SegMetrics> {
    let ck = load_checkpoint(checkpoint)?;
    let (samples, cfg) = eval_samples(data, ck.spec.input_size)?;
    if let Some(c) = &cfg {
        if c.architecture != ck.spec {
            return Err(Error::Config(format!(
                "checkpoint architecture {} does not match config architecture {}",
                serde_json::to_string(&ck.spec).expect("spec serializes"),
                serde_json::to_string(&c.architecture).expect("spec serializes")
            )));
        }
    }
    let model: Model<f32> = ck.into_model()?;
    let dir = output_dir.map_or_else(|| default_dir(checkpoint, "eval"), Path::to_path_buf);
    write_evaluation(&model, &samples, ck.spec.variant.display_name(), &dir, batch_size)
}

/// One line of the ablation report.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AblationRow {
    pub variant: Variant,
    pub se: bool,
    pub fsam: bool,
    pub fiam: bool,
    pub params: usize,
    pub metrics: SegMetrics,
}

fn mark(b: bool) -> &'static str {
    if b {
        "✓"
    } else {
        "✗"
    }
}

pub fn ablation_report(rows: &[AblationRow]) -> String {
    let mut out = format!(
        "{:<9} | {:^4} | {:^4} | {:^4} | {:>10} | {:>10} | {:>9} | {:>8} | {:>8}\n",
        "Model", "SE", "FSAM", "FIAM", "Params", "pixel acc.", "mean acc.", "mean IU", "f.w. IU"
    );
    for r in rows {
        let _ = writeln!(
            out,
            "{:<9} | {:^4} | {:^4} | {:^4} | {:>10} | {:>10.3} | {:>9.3} | {:>8.3} | {:>8.3}",
            r.variant.display_name(),
            mark(r.se),
            mark(r.fsam),
            mark(r.fiam),
            r.params,
            100.0 * r.metrics.pixel_acc,
            100.0 * r.metrics.mean_acc,
            100.0 * r.metrics.mean_iu,
            100.0 * r.metrics.fw_iu
        );
    }
    out
}

fn ablation_csv(rows: &[AblationRow]) -> String {
    let mut out = String::from("variant,se,fsam,fiam,params,pixel_acc,mean_acc,mean_iu,fw_iu\n");
    for r in rows {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{},{}",
            r.variant, r.se, r.fsam, r.fiam, r.params, r.metrics.pixel_acc, r.metrics.mean_acc, r.metrics.mean_iu, r.metrics.fw_iu
        );
    }
    out
}

/// Trains every variant with the same seed and data; writes
/// `ablation.txt` and `ablation.csv`.
pub fn cmd_ablate(config: &Path, overrides: &Overrides) -> Result<Vec<AblationRow>> {
    let base = load_config(config, overrides)?;
    let data = load_datasets(&base, &config_base(config))?;
    base.archive()?;
    let mut rows = Vec::new();
    for v in Variant::ALL {
        let mut cfg = base.clone();
        cfg.architecture.variant = v;
        cfg.output_dir = base.output_dir.join(v.id());
        let (_, metrics, params) = train_resolved(&cfg, &data)?;
        rows.push(AblationRow {
            variant: v,
            se: v.has_se(),
            fsam: v.has_fsam(),
            fiam: v.has_fiam(),
            params,
            metrics,
        });
    }
    let report = ablation_report(&rows);
    write_text(&base.output_dir.join("ablation.txt"), &report)?;
    write_text(&base.output_dir.join("ablation.csv"), &ablation_csv(&rows))?;
    print!("{report}");
    Ok(rows)
}

fn stats_file(s: &SiteStats) -> String {
    match s.site.kind {
        SiteKind::Fiam => "fiam".into(),
        SiteKind::Fsam => format!("fsam{}", s.site.level),
    }
}

/// Statistics CSVs (one per FIAM module and per FSAM head) and excitation
/// maps. Variants without excitation sites print a notice and succeed.
pub fn cmd_inspect(
    checkpoint: &Path,
    data: &DataArgs,
    module: Option<&str>,
    channels: &[usize],
    output_dir: Option<&Path>,
) -> Result<()> {
    let ck = load_checkpoint(checkpoint)?;
    let model: Model<f32> = ck.into_model()?;
    let sites = model.sites();
    if sites.is_empty() {
        println!(
            "{} has no attention modules; nothing to inspect",
            model.spec.variant.display_name()
        );
        return Ok(());
    }
    let (samples, _) = eval_samples(data, model.spec.input_size)?;
    let dir = output_dir.map_or_else(|| default_dir(checkpoint, "inspect"), Path::to_path_buf);
    let stats = collect_attention_stats(&model, &samples, 4)?;
    let mut groups: BTreeMap<String, Vec<&SiteStats>> = BTreeMap::new();
    for s in &stats {
        groups.entry(stats_file(s)).or_default().push(s);
    }
    for (name, group) in &groups {
        write_text(&dir.join(format!("stats_{name}.csv")), &stats_csv(group))?;
        write_text(&dir.join(format!("raw_{name}.csv")), &raw_stats_csv(group))?;
    }
    let targets: Vec<String> = match module {
        Some(m) => vec![m.to_string()],
        None => sites.iter().map(|s| s.label()).collect(),
    };
    let mut exported = 0;
    for t in &targets {
        let site = sites
            .iter()
            .find(|s| s.matches(t))
            .ok_or_else(|| Error::Config(format!("unknown module {t:?}")))?;
        let chosen: Vec<usize> = if module.is_some() {
            channels.to_vec()
        } else {
            channels.iter().copied().filter(|&c| c < site.channels).collect()
        };
        let maps = excitation_maps(&model, &samples[0], t, &chosen)?;
        exported += maps.len();
        write_excitation_maps(&maps, &dir.join("maps"))?;
    }
    println!(
        "wrote {} statistics files and {exported} excitation maps to {}",
        groups.len(),
        dir.display()
    );
    Ok(())
}

/// Writes `count` synthetic samples as `images/*.png` and paletted
/// `masks/*.png`.
pub fn cmd_synth(output_dir: &Path, count: usize, size: usize, seed: u64) -> Result<()> {
    let samples = synth_orange(seed, count, size)?;
    save_voc_dir(&samples, &output_dir.join("images"), &output_dir.join("masks"), &Palette::default())?;
    println!("wrote {count} samples to {}", output_dir.display());
    Ok(())
}
