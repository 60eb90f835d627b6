use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::HarnessError;

/// Relative error reduction in percent, `100 * (baseline - adapted) / baseline`,
/// at full precision.
pub fn rerr(baseline_err: f64, adapted_err: f64) -> Result<f64, HarnessError> {
    if baseline_err == 0.0 {
        return Err(HarnessError::Arithmetic(
            "relative error reduction against a zero baseline".into(),
        ));
    }
    if !(baseline_err.is_finite() && adapted_err.is_finite()) || baseline_err < 0.0 {
        return Err(HarnessError::Arithmetic(format!(
            "invalid error rates {baseline_err} and {adapted_err}"
        )));
    }
    Ok(100.0 * (baseline_err - adapted_err) / baseline_err)
}

/// One-decimal display rounding, half away from zero.
pub fn round1(v: f64) -> f64 {
    (v * 10.0).round() / 10.0
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum RowKey {
    Grid { lambda: f64, feature_layer: usize },
    Sweep { fraction: f64, hours: f64, language: String },
}

impl RowKey {
    fn columns(&self) -> [String; 3] {
        match self {
            RowKey::Grid {
                lambda,
                feature_layer,
            } => [lambda.to_string(), feature_layer.to_string(), String::new()],
            RowKey::Sweep {
                fraction,
                hours,
                language,
            } => [fraction.to_string(), format!("{hours:.4}"), language.clone()],
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    pub key: RowKey,
    /// Target-domain test error (%) per adaptation seed, in seed order.
    pub per_seed: Vec<f64>,
}

impl ResultRow {
    pub fn mean(&self) -> f64 {
        self.per_seed.iter().sum::<f64>() / self.per_seed.len() as f64
    }

    /// Standard error of the mean; zero for a single seed.
    pub fn std_error(&self) -> f64 {
        let n = self.per_seed.len();
        if n < 2 {
            return 0.0;
        }
        let m = self.mean();
        let var = self.per_seed.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / (n - 1) as f64;
        (var / n as f64).sqrt()
    }
}

/// Grid or sweep outcome against the unadapted baseline. RERR is always
/// derived from the stored baseline and cell errors.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ResultTable {
    pub title: String,
    pub seeds: Vec<u64>,
    /// Unadapted target-domain test error (%).
    pub baseline_error: f64,
    pub rows: Vec<ResultRow>,
}

impl ResultTable {
    pub fn new(title: &str, seeds: &[u64], baseline_error: f64) -> Self {
        Self {
            title: title.to_string(),
            seeds: seeds.to_vec(),
            baseline_error,
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, key: RowKey, per_seed: Vec<f64>) -> Result<(), HarnessError> {
        if per_seed.len() != self.seeds.len() {
            return Err(HarnessError::Arithmetic(format!(
                "{} values for {} seeds",
                per_seed.len(),
                self.seeds.len()
            )));
        }
        self.rows.push(ResultRow { key, per_seed });
        Ok(())
    }

    pub fn rerr(&self, row: &ResultRow) -> Result<f64, HarnessError> {
        rerr(self.baseline_error, row.mean())
    }

    /// Index of the row with the lowest mean error (first on ties).
    pub fn argmin(&self) -> Option<usize> {
        (0..self.rows.len()).min_by(|&a, &b| {
            self.rows[a]
                .mean()
                .partial_cmp(&self.rows[b].mean())
                .expect("finite errors")
        })
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("table serializes")
    }

    pub fn from_json(s: &str) -> Result<Self, HarnessError> {
        serde_json::from_str(s).map_err(|e| HarnessError::Format(format!("result table: {e}")))
    }

    /// CSV with one row per cell: key columns, per-seed errors, mean, standard
    /// error, RERR at full precision and rounded, and a best-cell marker.
    pub fn to_csv(&self) -> Result<String, HarnessError> {
        let mut out = String::new();
        let (k1, k2, k3) = match self.rows.first().map(|r| &r.key) {
            Some(RowKey::Sweep { .. }) => ("fraction", "hours", "language"),
            _ => ("lambda", "feature_layer", "-"),
        };
        write!(out, "{k1},{k2},{k3}").unwrap();
        for s in &self.seeds {
            write!(out, ",err_seed{s}").unwrap();
        }
        out.push_str(",err_mean,err_se,rerr,rerr_display,best\n");
        let best = self.argmin();
        for (i, row) in self.rows.iter().enumerate() {
            let [a, b, c] = row.key.columns();
            write!(out, "{a},{b},{c}").unwrap();
            for v in &row.per_seed {
                write!(out, ",{v}").unwrap();
            }
            let r = self.rerr(row)?;
            writeln!(
                out,
                ",{},{},{},{:.1},{}",
                row.mean(),
                row.std_error(),
                r,
                round1(r),
                u8::from(best == Some(i))
            )
            .unwrap();
        }
        writeln!(out, "baseline,,,{}", self.baseline_error).unwrap();
        Ok(out)
    }

    /// Human-readable rendering with the best cell marked.
    pub fn render(&self) -> Result<String, HarnessError> {
        let mut out = format!("{}\nbaseline error {:.2}%\n", self.title, self.baseline_error);
        let best = self.argmin();
        for (i, row) in self.rows.iter().enumerate() {
            let label = match &row.key {
                RowKey::Grid {
                    lambda,
                    feature_layer,
                } => format!("lambda={lambda:<4} f={feature_layer}"),
                RowKey::Sweep {
                    fraction,
                    hours,
                    language,
                } => format!("{language} {:>6.1}% ({hours:.3} h)", fraction * 100.0),
            };
            let mark = if best == Some(i) { " *" } else { "" };
            writeln!(
                out,
                "{label}  err {:6.2} ± {:4.2}  rerr {:5.1}%{mark}",
                row.mean(),
                row.std_error(),
                round1(self.rerr(row)?)
            )
            .unwrap();
        }
        Ok(out)
    }
}
