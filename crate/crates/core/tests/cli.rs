use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn fanet(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_fanet"))
        .args(args)
        .current_dir(dir)
        .env("RUST_LOG", "warn")
        .output()
        .expect("binary runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exited normally")
}

const CONFIG: &str = r#"
seed = 3
output_dir = "out"

[architecture]
variant = "fanet"
base_width = 2
input_size = 32

[train]
epochs = 1
batch_size = 2
lr0 = 0.05
momentum = 0.9
weight_decay = 0.0005

[augment]
crop_size = 30
crop_padding = 2

[data.train]
kind = "synthetic"
count = 4
size = 32
seed = 1

[data.val]
kind = "synthetic"
count = 2
size = 32
seed = 2
"#;

fn workspace() -> tempfile::TempDir {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("run.toml"), CONFIG).unwrap();
    dir
}

#[test]
fn train_eval_inspect_round() {
    let dir = workspace();
    let d = dir.path();
    let out = fanet(d, &["train", "run.toml"]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    for f in ["config.toml", "train.log", "final.ckpt", "best.ckpt", "report.json", "metrics.txt"] {
        assert!(d.join("out").join(f).exists(), "missing {f}");
    }
    let archived = fs::read_to_string(d.join("out/config.toml")).unwrap();
    assert!(archived.contains("variant = \"fanet\""));
    assert_eq!(fs::read_to_string(d.join("out/train.log")).unwrap().lines().count(), 2);

    let out = fanet(d, &["eval", "--checkpoint", "out/final.ckpt", "--synthetic", "2", "--synthetic-seed", "5"]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.contains("mean IU"), "{stdout}");
    for f in ["precision.csv", "recall.csv", "f1.csv", "metrics.txt"] {
        assert!(d.join("out/eval").join(f).exists(), "missing eval/{f}");
    }

    let out = fanet(d, &["inspect", "--checkpoint", "out/final.ckpt", "--synthetic", "2", "--module", "fsam4", "--channels", "0,1"]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let inspect = d.join("out/inspect");
    for f in ["stats_fiam.csv", "stats_fsam1.csv", "stats_fsam2.csv", "stats_fsam3.csv", "stats_fsam4.csv"] {
        assert!(inspect.join(f).exists(), "missing {f}");
    }
    let maps: Vec<_> = fs::read_dir(inspect.join("maps")).unwrap().collect();
    assert_eq!(maps.len(), 2 * 5);
    let header = fs::read_to_string(inspect.join("stats_fsam4.csv")).unwrap();
    assert!(header.starts_with("site,param,channel,count,mean,std,min,max,q05"));
}

#[test]
fn overrides_and_variant_without_attention() {
    let dir = workspace();
    let d = dir.path();
    let out = fanet(d, &["train", "run.toml", "--variant", "unet", "--output-dir", "u", "--max-steps", "1"]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    assert!(fs::read_to_string(d.join("u/config.toml")).unwrap().contains("variant = \"unet\""));
    assert_eq!(fs::read_to_string(d.join("u/train.log")).unwrap().lines().count(), 1);
    let out = fanet(d, &["inspect", "--checkpoint", "u/final.ckpt", "--synthetic", "1"]);
    assert_eq!(code(&out), 0);
    assert!(String::from_utf8_lossy(&out.stdout).contains("no attention modules"));
}

#[test]
fn ablate_reports_five_variants() {
    let dir = workspace();
    let d = dir.path();
    let out = fanet(d, &["ablate", "run.toml", "--max-steps", "1"]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let report = fs::read_to_string(d.join("out/ablation.txt")).unwrap();
    let rows: Vec<&str> = report.lines().skip(1).collect();
    assert_eq!(rows.len(), 5);
    let marks = |row: &str| -> Vec<String> { row.split('|').skip(1).take(3).map(|c| c.trim().to_string()).collect() };
    let expected = [
        ("U-Net-SE", ["✓", "✗", "✗"]),
        ("U-Net", ["✗", "✗", "✗"]),
        ("FANet-I", ["✗", "✗", "✓"]),
        ("FANet-S", ["✗", "✓", "✗"]),
        ("FANet", ["✗", "✓", "✓"]),
    ];
    for (row, (name, m)) in rows.iter().zip(expected) {
        assert_eq!(row.split('|').next().unwrap().trim(), name);
        assert_eq!(marks(row), m);
    }
    for id in ["unet", "unet-se", "fanet-s", "fanet-i", "fanet"] {
        assert!(d.join("out").join(id).join("final.ckpt").exists(), "{id}");
    }
    assert_eq!(fs::read_to_string(d.join("out/ablation.csv")).unwrap().lines().count(), 6);
}

#[test]
fn synth_writes_voc_layout() {
    let dir = tempfile::tempdir().unwrap();
    let out = fanet(dir.path(), &["synth", "--output-dir", "syn", "--count", "3", "--size", "32"]);
    assert_eq!(code(&out), 0);
    assert_eq!(fs::read_dir(dir.path().join("syn/images")).unwrap().count(), 3);
    assert_eq!(fs::read_dir(dir.path().join("syn/masks")).unwrap().count(), 3);
}

#[test]
fn exit_codes() {
    let dir = workspace();
    let d = dir.path();
    assert_eq!(code(&fanet(d, &["frobnicate"])), 2);
    assert_eq!(code(&fanet(d, &["train", "missing.toml"])), 2);
    assert_eq!(code(&fanet(d, &["train", "run.toml", "--variant", "resnet"])), 2);
    assert_eq!(code(&fanet(d, &["eval", "--checkpoint", "nope.ckpt", "--synthetic", "1"])), 2);
    assert_eq!(code(&fanet(d, &["synth", "--output-dir", "s", "--size", "20"])), 2);

    fs::write(d.join("bad.toml"), "seed = 1\n[architecture]\nvariant = \"fanet\"\nbase_width = 0\n").unwrap();
    let out = fanet(d, &["train", "bad.toml"]);
    assert_eq!(code(&out), 2);
    fs::write(d.join("typo.toml"), CONFIG.replace("epochs = 1", "epoks = 1")).unwrap();
    let out = fanet(d, &["train", "typo.toml"]);
    assert_eq!(code(&out), 2);
    assert!(String::from_utf8_lossy(&out.stderr).contains("typo.toml:"), "{}", String::from_utf8_lossy(&out.stderr));
}
