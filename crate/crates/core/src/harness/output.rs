//! CSV and SVG emission for learning curves, plus per-run result folders.

use std::fmt::Write as _;
use std::path::Path;

use serde::Serialize;

use crate::error::{Error, Result};

use super::config::RunConfig;
use super::run::{AggregateCurve, EpochRecord};

/// Per-run learning curve: header plus one line per epoch.
pub fn run_csv(records: &[EpochRecord]) -> String {
    let mut out = String::from("epoch,avg_score\n");
    for r in records {
        writeln!(out, "{},{}", r.epoch, r.avg_score).expect("string write");
    }
    out
}

pub fn write_run_csv(path: &Path, records: &[EpochRecord]) -> Result<()> {
    std::fs::write(path, run_csv(records))
        .map_err(|e| Error::io(format!("writing {}", path.display()), e))
}

pub fn parse_run_csv(text: &str) -> Result<Vec<(usize, f64)>> {
    let mut lines = text.lines();
    match lines.next() {
        Some("epoch,avg_score") => {}
        other => {
            return Err(Error::Parse {
                context: "run csv".into(),
                message: format!("bad header {other:?}"),
            })
        }
    }
    lines
        .map(|line| {
            let (e, s) = line.split_once(',').ok_or_else(|| Error::Parse {
                context: "run csv".into(),
                message: format!("bad line {line:?}"),
            })?;
            Ok((
                e.parse().map_err(|_| Error::Parse {
                    context: "run csv".into(),
                    message: format!("bad epoch {e:?}"),
                })?,
                s.parse().map_err(|_| Error::Parse {
                    context: "run csv".into(),
                    message: format!("bad score {s:?}"),
                })?,
            ))
        })
        .collect()
}

/// Aggregate curve across seeds: epoch, mean, std.
pub fn aggregate_csv(curve: &AggregateCurve) -> String {
    let mut out = String::from("epoch,mean,std\n");
    for (epoch, (m, s)) in curve.mean.iter().zip(&curve.std).enumerate() {
        writeln!(out, "{epoch},{m},{s}").expect("string write");
    }
    out
}

pub fn write_aggregate_csv(path: &Path, curve: &AggregateCurve) -> Result<()> {
    std::fs::write(path, aggregate_csv(curve))
        .map_err(|e| Error::io(format!("writing {}", path.display()), e))
}

const PALETTE: [&str; 6] = [
    "#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#17becf",
];

/// Learning-curve plot: one mean path per labeled curve, with a translucent
/// +-std band behind it.
pub fn curves_svg(curves: &[(String, AggregateCurve)], title: &str) -> String {
    let w = 720.0;
    let h = 440.0;
    let ml = 60.0;
    let mr = 20.0;
    let mt = 40.0;
    let mb = 50.0;
    let pw = w - ml - mr;
    let ph = h - mt - mb;

    let epochs = curves.iter().map(|(_, c)| c.mean.len()).max().unwrap_or(1);
    let mut ymin: f64 = 0.0;
    let mut ymax: f64 = 1.0;
    for (_, c) in curves {
        for (m, s) in c.mean.iter().zip(&c.std) {
            ymin = ymin.min(m - s);
            ymax = ymax.max(m + s);
        }
    }
    let span = (ymax - ymin).max(1e-9);
    let x = |e: usize| ml + pw * e as f64 / (epochs.max(2) - 1) as f64;
    let y = |v: f64| mt + ph * (1.0 - (v - ymin) / span);

    let mut svg = String::new();
    writeln!(
        svg,
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{w}\" height=\"{h}\" viewBox=\"0 0 {w} {h}\">"
    )
    .unwrap();
    writeln!(svg, "<rect width=\"{w}\" height=\"{h}\" fill=\"white\"/>").unwrap();
    writeln!(
        svg,
        "<text x=\"{}\" y=\"24\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"16\">{title}</text>",
        w / 2.0
    )
    .unwrap();
    // axes
    writeln!(
        svg,
        "<line x1=\"{ml}\" y1=\"{mt}\" x2=\"{ml}\" y2=\"{}\" stroke=\"black\"/>",
        mt + ph
    )
    .unwrap();
    writeln!(
        svg,
        "<line x1=\"{ml}\" y1=\"{}\" x2=\"{}\" y2=\"{}\" stroke=\"black\"/>",
        mt + ph,
        ml + pw,
        mt + ph
    )
    .unwrap();
    for tick in 0..=4 {
        let v = ymin + span * tick as f64 / 4.0;
        writeln!(
            svg,
            "<text x=\"{}\" y=\"{}\" text-anchor=\"end\" font-family=\"sans-serif\" font-size=\"11\">{v:.2}</text>",
            ml - 6.0,
            y(v) + 4.0
        )
        .unwrap();
    }
    writeln!(
        svg,
        "<text x=\"{}\" y=\"{}\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"12\">epoch</text>",
        ml + pw / 2.0,
        h - 12.0
    )
    .unwrap();

    for (i, (label, curve)) in curves.iter().enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        if curve.mean.len() > 1 {
            // std band as a closed polygon
            let mut pts = String::new();
            for (e, (m, s)) in curve.mean.iter().zip(&curve.std).enumerate() {
                write!(pts, "{:.2},{:.2} ", x(e), y(m + s)).unwrap();
            }
            for (e, (m, s)) in curve.mean.iter().zip(&curve.std).enumerate().rev() {
                write!(pts, "{:.2},{:.2} ", x(e), y(m - s)).unwrap();
            }
            writeln!(
                svg,
                "<polygon points=\"{}\" fill=\"{color}\" opacity=\"0.15\"/>",
                pts.trim_end()
            )
            .unwrap();
        }
        let mut d = String::new();
        for (e, m) in curve.mean.iter().enumerate() {
            let cmd = if e == 0 { 'M' } else { 'L' };
            write!(d, "{cmd}{:.2} {:.2} ", x(e), y(*m)).unwrap();
        }
        writeln!(
            svg,
            "<path d=\"{}\" fill=\"none\" stroke=\"{color}\" stroke-width=\"1.8\"/>",
            d.trim_end()
        )
        .unwrap();
        // legend
        let ly = mt + 16.0 * i as f64 + 8.0;
        writeln!(
            svg,
            "<line x1=\"{}\" y1=\"{ly}\" x2=\"{}\" y2=\"{ly}\" stroke=\"{color}\" stroke-width=\"3\"/>",
            ml + pw - 150.0,
            ml + pw - 120.0
        )
        .unwrap();
        writeln!(
            svg,
            "<text x=\"{}\" y=\"{}\" font-family=\"sans-serif\" font-size=\"12\">{label}</text>",
            ml + pw - 112.0,
            ly + 4.0
        )
        .unwrap();
    }
    svg.push_str("</svg>\n");
    svg
}

pub fn write_svg(path: &Path, curves: &[(String, AggregateCurve)], title: &str) -> Result<()> {
    std::fs::write(path, curves_svg(curves, title))
        .map_err(|e| Error::io(format!("writing {}", path.display()), e))
}

#[derive(Serialize)]
struct RunProvenance<'a> {
    code_version: &'static str,
    config: &'a RunConfig,
    records: &'a [EpochRecord],
}

/// Write run.csv, run.toml (config), and run.json (full provenance) into
/// `dir`, creating it as needed.
pub fn emit_run_dir(dir: &Path, config: &RunConfig, records: &[EpochRecord]) -> Result<()> {
    std::fs::create_dir_all(dir)
        .map_err(|e| Error::io(format!("creating {}", dir.display()), e))?;
    write_run_csv(&dir.join("run.csv"), records)?;
    config.save(&dir.join("run.toml"))?;
    let provenance = RunProvenance {
        code_version: env!("CARGO_PKG_VERSION"),
        config,
        records,
    };
    let json = serde_json::to_string_pretty(&provenance).map_err(|e| Error::Parse {
        context: "run.json".into(),
        message: e.to_string(),
    })?;
    std::fs::write(dir.join("run.json"), json)
        .map_err(|e| Error::io(format!("writing {}", dir.join("run.json").display()), e))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn record(epoch: usize, score: f64) -> EpochRecord {
        EpochRecord {
            epoch,
            avg_score: score,
            episodes: 250,
            duration_secs: 1.0,
            supervisor_accuracy: None,
        }
    }

    #[test]
    fn run_csv_line_count_and_round_trip() {
        let records: Vec<EpochRecord> = (0..30)
            .map(|e| record(e, 0.1 + e as f64 * 0.017_345_678_9))
            .collect();
        let text = run_csv(&records);
        assert_eq!(text.lines().count(), 31);
        let parsed = parse_run_csv(&text).unwrap();
        for (r, (e, s)) in records.iter().zip(parsed) {
            assert_eq!(r.epoch, e);
            assert_eq!(r.avg_score, s);
        }
    }

    #[test]
    fn svg_has_one_path_per_curve() {
        let curve = AggregateCurve {
            mean: vec![0.1, 0.5, 0.9],
            std: vec![0.0, 0.1, 0.05],
            seeds: 5,
        };
        let svg = curves_svg(
            &[
                ("standard".into(), curve.clone()),
                ("half".into(), curve.clone()),
                ("option-heads".into(), curve),
            ],
            "catch",
        );
        assert_eq!(svg.matches("<path").count(), 3);
    }
}
