use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use super::confusion::SegMetrics;
use super::stats::{ChannelSummary, SiteStats, QUANTILES};
use crate::error::Result;

fn pct(v: f64) -> String {
    format!("{:.3}", 100.0 * v)
}

/// Plain-text table: one row per model, percentages to three decimals, "-"
/// for classes absent from both ground truth and prediction.
pub fn metrics_table(rows: &[(String, SegMetrics)], class_names: &[&str]) -> String {
    let mut head = vec![
        "model".to_string(),
        "pixel acc.".into(),
        "mean acc.".into(),
        "mean IU".into(),
        "f.w. IU".into(),
    ];
    let k = rows.iter().map(|(_, m)| m.per_class_iu.len()).max().unwrap_or(0);
    for i in 0..k {
        head.push(format!("IU {}", class_names.get(i).copied().unwrap_or("?")));
    }
    let body: Vec<Vec<String>> = rows
        .iter()
        .map(|(name, m)| {
            let mut r = vec![name.clone(), pct(m.pixel_acc), pct(m.mean_acc), pct(m.mean_iu), pct(m.fw_iu)];
            r.extend(m.per_class_iu.iter().map(|v| v.map_or("-".into(), pct)));
            r
        })
        .collect();
    let widths: Vec<usize> = (0..head.len())
        .map(|c| {
            body.iter()
                .filter_map(|r| r.get(c))
                .chain([&head[c]])
                .map(|s| s.chars().count())
                .max()
                .unwrap_or(0)
        })
        .collect();
    let line = |cells: &[String]| {
        cells
            .iter()
            .zip(&widths)
            .map(|(c, w)| format!("{c:>w$}"))
            .collect::<Vec<_>>()
            .join(" | ")
    };
    let mut out = line(&head);
    out.push('\n');
    out.push_str(&widths.iter().map(|w| "-".repeat(*w)).collect::<Vec<_>>().join("-+-"));
    for r in &body {
        out.push('\n');
        out.push_str(&line(r));
    }
    out.push('\n');
    out
}

/// Square matrix CSV with class-name headers; rows are ground truth.
pub fn matrix_csv(matrix: &[Vec<f64>], class_names: &[&str]) -> String {
    let name = |i: usize| class_names.get(i).map_or(format!("class{i}"), |s| s.to_string());
    let mut out = String::from("gt\\pred");
    for j in 0..matrix.len() {
        out.push(',');
        out.push_str(&name(j));
    }
    out.push('\n');
    for (i, row) in matrix.iter().enumerate() {
        out.push_str(&name(i));
        for v in row {
            let _ = write!(out, ",{v:.3}");
        }
        out.push('\n');
    }
    out
}

fn summary_cells(s: &ChannelSummary) -> String {
    let mut cells = format!("{},{},{},{},{}", s.count, s.mean, s.std, s.min, s.max);
    for q in s.quantiles {
        let _ = write!(cells, ",{q}");
    }
    cells
}

/// One row per (site, parameter, channel).
pub fn stats_csv(sites: &[&SiteStats]) -> String {
    let mut out = String::from("site,param,channel,count,mean,std,min,max");
    for q in QUANTILES {
        let _ = write!(out, ",q{q:02}");
    }
    out.push('\n');
    for site in sites {
        for (param, list) in [("s", &site.s), ("g", &site.g)] {
            for (c, s) in list.iter().enumerate() {
                let _ = writeln!(out, "{},{param},{c},{}", site.label, summary_cells(s));
            }
        }
    }
    out
}

/// Raw per-sample values: one row per (site, parameter, channel, sample).
pub fn raw_stats_csv(sites: &[&SiteStats]) -> String {
    let mut out = String::from("site,param,channel,sample,value\n");
    for site in sites {
        for (param, raw) in [("s", &site.raw_s), ("g", &site.raw_g)] {
            for (c, vals) in raw.iter().enumerate() {
                for (i, v) in vals.iter().enumerate() {
                    let _ = writeln!(out, "{},{param},{c},{i},{v}", site.label);
                }
            }
        }
    }
    out
}

pub fn write_text(path: &Path, text: &str) -> Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir)?;
    }
    fs::write(path, text)?;
    Ok(())
}
