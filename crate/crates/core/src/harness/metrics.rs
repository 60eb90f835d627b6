use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use super::HarnessError;
use crate::grl::MetricsRecord;

const HEADER: &str = "epoch,split,task,accuracy,loss,lambda_effective,learning_rate";

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

/// Long-format CSV: one row per epoch, split (train/valid) and task
/// (senone/domain). Values use shortest round-trip formatting.
pub fn metrics_csv(records: &[MetricsRecord]) -> String {
    let mut out = String::from(HEADER);
    out.push('\n');
    for r in records {
        let tail = format!("{},{}", r.lambda_effective, r.learning_rate);
        let rows = [
            ("train", "senone", Some(r.senone_acc_train), Some(r.senone_loss)),
            ("valid", "senone", Some(r.senone_acc_valid), None),
            ("train", "domain", r.domain_acc_train, r.domain_loss),
            ("valid", "domain", r.domain_acc_valid, None),
        ];
        for (split, task, acc, loss) in rows {
            let Some(acc) = acc else { continue };
            writeln!(out, "{},{split},{task},{acc},{},{tail}", r.epoch, opt(loss)).unwrap();
        }
    }
    out
}

fn parse_f64(s: &str, line: usize) -> Result<f64, HarnessError> {
    s.parse()
        .map_err(|_| HarnessError::Format(format!("metrics line {line}: bad number `{s}`")))
}

/// Inverse of [`metrics_csv`].
pub fn parse_metrics_csv(text: &str) -> Result<Vec<MetricsRecord>, HarnessError> {
    let mut rd = csv::ReaderBuilder::new().from_reader(text.as_bytes());
    let headers = rd
        .headers()
        .map_err(|e| HarnessError::Format(format!("metrics header: {e}")))?
        .clone();
    if headers.iter().collect::<Vec<_>>().join(",") != HEADER {
        return Err(HarnessError::Format("metrics header".into()));
    }
    let mut out: Vec<MetricsRecord> = Vec::new();
    for (i, row) in rd.records().enumerate() {
        let line = i + 2;
        let row = row.map_err(|e| HarnessError::Format(format!("metrics line {line}: {e}")))?;
        let epoch: usize = row[0]
            .parse()
            .map_err(|_| HarnessError::Format(format!("metrics line {line}: bad epoch")))?;
        let acc = parse_f64(&row[3], line)?;
        let loss = if row[4].is_empty() { None } else { Some(parse_f64(&row[4], line)?) };
        let lambda = parse_f64(&row[5], line)?;
        let lr = parse_f64(&row[6], line)?;
        if out.last().map(|r| r.epoch) != Some(epoch) {
            out.push(MetricsRecord {
                epoch,
                senone_acc_train: f64::NAN,
                senone_acc_valid: f64::NAN,
                domain_acc_train: None,
                domain_acc_valid: None,
                senone_loss: f64::NAN,
                domain_loss: None,
                lambda_effective: lambda,
                learning_rate: lr,
            });
        }
        let r = out.last_mut().expect("pushed");
        match (&row[1], &row[2]) {
            ("train", "senone") => {
                r.senone_acc_train = acc;
                r.senone_loss = loss.unwrap_or(f64::NAN);
            }
            ("valid", "senone") => r.senone_acc_valid = acc,
            ("train", "domain") => {
                r.domain_acc_train = Some(acc);
                r.domain_loss = loss;
            }
            ("valid", "domain") => r.domain_acc_valid = Some(acc),
            (s, t) => {
                return Err(HarnessError::Format(format!(
                    "metrics line {line}: unknown curve {s}/{t}"
                )))
            }
        }
    }
    Ok(out)
}

const PANEL_W: f64 = 360.0;
const PANEL_H: f64 = 240.0;
const MARGIN: f64 = 48.0;

fn polyline(points: &[(f64, f64)], x0: f64, n_epochs: usize, color: &str, dash: bool) -> String {
    let sx = |e: f64| x0 + MARGIN + (e - 1.0) / (n_epochs.max(2) - 1) as f64 * (PANEL_W - 1.5 * MARGIN);
    let sy = |a: f64| 20.0 + (1.0 - a) * (PANEL_H - 20.0 - MARGIN);
    let pts: Vec<String> = points
        .iter()
        .map(|&(e, a)| format!("{:.2},{:.2}", sx(e), sy(a)))
        .collect();
    let style = if dash { " stroke-dasharray=\"5,3\"" } else { "" };
    format!(
        "<polyline fill=\"none\" stroke=\"{color}\" stroke-width=\"2\"{style} points=\"{}\"/>\n",
        pts.join(" ")
    )
}

fn axes(x0: f64, title: &str, n_epochs: usize) -> String {
    let left = x0 + MARGIN;
    let right = x0 + PANEL_W - MARGIN / 2.0;
    let top = 20.0;
    let bottom = PANEL_H - MARGIN;
    let mut s = format!(
        "<text x=\"{:.1}\" y=\"14\" font-size=\"13\" text-anchor=\"middle\">{title}</text>\n",
        (left + right) / 2.0
    );
    for k in 0..=4 {
        let a = k as f64 / 4.0;
        let y = top + (1.0 - a) * (bottom - top);
        writeln!(
            s,
            "<line x1=\"{left:.1}\" y1=\"{y:.1}\" x2=\"{right:.1}\" y2=\"{y:.1}\" stroke=\"#ddd\"/>\
             <text x=\"{:.1}\" y=\"{:.1}\" font-size=\"10\" text-anchor=\"end\">{}</text>",
            left - 4.0,
            y + 3.0,
            (a * 100.0) as u32
        )
        .unwrap();
    }
    for e in 1..=n_epochs {
        let x = left + (e as f64 - 1.0) / (n_epochs.max(2) - 1) as f64 * (PANEL_W - 1.5 * MARGIN);
        writeln!(
            s,
            "<text x=\"{x:.1}\" y=\"{:.1}\" font-size=\"10\" text-anchor=\"middle\">{e}</text>",
            bottom + 14.0
        )
        .unwrap();
    }
    writeln!(
        s,
        "<rect x=\"{left:.1}\" y=\"{top:.1}\" width=\"{:.1}\" height=\"{:.1}\" fill=\"none\" stroke=\"#333\"/>\
         <text x=\"{:.1}\" y=\"{:.1}\" font-size=\"11\" text-anchor=\"middle\">epoch</text>\
         <text x=\"{:.1}\" y=\"{:.1}\" font-size=\"11\" transform=\"rotate(-90 {:.1} {:.1})\" text-anchor=\"middle\">accuracy, %</text>",
        right - left,
        bottom - top,
        (left + right) / 2.0,
        bottom + 30.0,
        x0 + 14.0,
        (top + bottom) / 2.0,
        x0 + 14.0,
        (top + bottom) / 2.0
    )
    .unwrap();
    s
}

/// Two-panel SVG: senone and domain accuracy, training and validation.
pub fn accuracy_svg(records: &[MetricsRecord]) -> String {
    let n = records.len();
    let pts = |f: &dyn Fn(&MetricsRecord) -> Option<f64>| -> Vec<(f64, f64)> {
        records
            .iter()
            .filter_map(|r| f(r).map(|a| (r.epoch as f64, a)))
            .collect()
    };
    let mut s = format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{:.0}\" height=\"{:.0}\" font-family=\"sans-serif\">\n\
         <rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n",
        2.0 * PANEL_W,
        PANEL_H + 24.0
    );
    for (k, (title, train, valid)) in [
        (
            "Senone classifier",
            pts(&|r| Some(r.senone_acc_train)),
            pts(&|r| Some(r.senone_acc_valid)),
        ),
        (
            "Domain discriminator",
            pts(&|r| r.domain_acc_train),
            pts(&|r| r.domain_acc_valid),
        ),
    ]
    .into_iter()
    .enumerate()
    {
        let x0 = k as f64 * PANEL_W;
        s.push_str(&axes(x0, title, n));
        s.push_str(&polyline(&train, x0, n, "#1f77b4", false));
        s.push_str(&polyline(&valid, x0, n, "#d62728", true));
    }
    let y = PANEL_H + 14.0;
    writeln!(
        s,
        "<line x1=\"60\" y1=\"{y}\" x2=\"84\" y2=\"{y}\" stroke=\"#1f77b4\" stroke-width=\"2\"/>\
         <text x=\"90\" y=\"{:.0}\" font-size=\"11\">training</text>\
         <line x1=\"170\" y1=\"{y}\" x2=\"194\" y2=\"{y}\" stroke=\"#d62728\" stroke-width=\"2\" stroke-dasharray=\"5,3\"/>\
         <text x=\"200\" y=\"{:.0}\" font-size=\"11\">validation</text>\n</svg>",
        y + 4.0,
        y + 4.0
    )
    .unwrap();
    s
}

/// Writes `metrics.csv` and `accuracy.svg` into `dir`.
pub fn emit_metrics(records: &[MetricsRecord], dir: &Path) -> Result<(), HarnessError> {
    if records.is_empty() {
        return Err(HarnessError::Format("no metrics records to emit".into()));
    }
    fs::create_dir_all(dir).map_err(|e| HarnessError::io(dir, e))?;
    let csv_path = dir.join("metrics.csv");
    fs::write(&csv_path, metrics_csv(records)).map_err(|e| HarnessError::io(&csv_path, e))?;
    let svg_path = dir.join("accuracy.svg");
    fs::write(&svg_path, accuracy_svg(records)).map_err(|e| HarnessError::io(&svg_path, e))?;
    Ok(())
}
