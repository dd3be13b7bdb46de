//! Desk-scale FANet run on synthetic data.
//!
//! `cargo run --release --example desk_run -- [lr] [momentum] [aug|noaug]`

use std::time::Instant;

use fanet::arch::{ArchitectureSpec, Model, Variant};
use fanet::data::{synth_orange, AugmentConfig};
use fanet::metrics::{all_background_baseline, compute_metrics, evaluate};
use fanet::train::{train, TrainConfig, TrainSetup};

fn arg<T: std::str::FromStr>(args: &[String], i: usize, default: T) -> fanet::Result<T> {
    match args.get(i) {
        None => Ok(default),
        Some(s) => s.parse().map_err(|_| fanet::Error::Usage(format!("cannot parse argument {i}: {s:?}"))),
    }
}

fn main() -> fanet::Result<()> {
    let args: Vec<String> = std::env::args().collect();
    let lr0 = arg(&args, 1, 0.05)?;
    let momentum = arg(&args, 2, 0.9)?;
    let augment = args.get(3).is_none_or(|s| s != "noaug");

    let train_set = synth_orange(1, 64, 96)?;
    let test_set = synth_orange(2, 16, 96)?;
    let model = Model::<f32>::build(&ArchitectureSpec::desk(Variant::Fanet), 0)?;
    let cfg = TrainConfig { lr0, momentum, max_steps: Some(200), epochs: 13, eval_every: 0, ..TrainConfig::desk() };
    let aug = AugmentConfig::default();
    let setup = TrainSetup { train: &train_set, val: None, augment: augment.then_some(&aug), out_dir: None };

    let start = Instant::now();
    let report = train(&model, &setup, &cfg)?;
    let losses = report.losses();
    println!(
        "{} steps, loss {:.4} -> {:.4} (smoothed) in {:.1?}",
        losses.len(),
        losses[0],
        report.final_smoothed_loss().unwrap_or(f64::NAN),
        start.elapsed()
    );
    let train_m = compute_metrics(&evaluate(&model, &train_set, 4)?)?;
    let test_m = compute_metrics(&evaluate(&model, &test_set, 4)?)?;
    let base = compute_metrics(&all_background_baseline(&test_set, 5)?)?;
    println!("train mean IU {:.4}", train_m.mean_iu);
    println!("test mean IU {:.4} (all-background {:.4})", test_m.mean_iu, base.mean_iu);
    println!("per-class IU {:?}", test_m.per_class_iu);
    Ok(())
}
