//! Run directories: every pipeline step reads the config snapshot and earlier
//! outputs from one directory and writes its own outputs next to them.
//!
//! ```text
//! <run>/config.toml              effective config (after overrides)
//! <run>/run.json                 manifest of completed steps and their outputs
//! <run>/corpora/<split>/         manifest.jsonl + feats/ + labels/
//! <run>/stage1/checkpoint.json   supervised model and input normalizer
//! <run>/stage1/metrics.csv
//! <run>/adapt/seed-<n>/          checkpoint.json, metrics.csv, accuracy.svg
//! <run>/adapt/table.{json,csv}   per-seed target errors at the configured (λ, f)
//! <run>/eval.json
//! <run>/grid/table.{json,csv}
//! <run>/sweep/<language>/table.{json,csv}
//! ```

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{
    adapt_once, build_corpora, emit_metrics, error_percent, fit_normalizer, run_grid,
    run_hours_sweep, train_stage1, Corpora, ExperimentConfig, HarnessError, ResultTable, RowKey,
};
use crate::grl::{evaluate, Checkpoint};
use crate::corpus::Normalizer;

pub const RUN_FORMAT: &str = "grl-asr-run";

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub format: String,
    pub version: u32,
    /// Completed steps, each with the files it wrote relative to the run root.
    pub steps: BTreeMap<String, Vec<String>>,
}

/// Evaluation summary written by the `eval` step.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub stage1_source_valid_accuracy: f64,
    pub stage1_target_error: f64,
    /// (seed, target error %, source validation accuracy) per adapted model.
    pub adapted: Vec<(u64, f64, f64)>,
}

pub struct RunDir {
    cfg: ExperimentConfig,
    root: PathBuf,
    force: bool,
}

fn write(path: &Path, contents: &str) -> Result<(), HarnessError> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).map_err(|e| HarnessError::io(parent, e))?;
    }
    fs::write(path, contents).map_err(|e| HarnessError::io(path, e))
}

fn read(path: &Path) -> Result<String, HarnessError> {
    if !path.exists() {
        return Err(HarnessError::Missing(path.to_path_buf()));
    }
    fs::read_to_string(path).map_err(|e| HarnessError::io(path, e))
}

impl RunDir {
    /// Opens `root` with `cfg`, or with the stored snapshot when `cfg` is
    /// `None`. A different config over an existing snapshot needs `force`.
    pub fn open(
        cfg: Option<ExperimentConfig>,
        root: &Path,
        force: bool,
    ) -> Result<RunDir, HarnessError> {
        let snap = root.join("config.toml");
        let cfg = match cfg {
            Some(cfg) => {
                let text = cfg.to_toml();
                if snap.exists() && read(&snap)? != text && !force {
                    return Err(HarnessError::Exists(snap));
                }
                write(&snap, &text)?;
                cfg
            }
            None => ExperimentConfig::from_toml(&read(&snap)?)?,
        };
        Ok(RunDir {
            cfg,
            root: root.to_path_buf(),
            force,
        })
    }

    pub fn config(&self) -> &ExperimentConfig {
        &self.cfg
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    fn guard(&self, rel: &str) -> Result<PathBuf, HarnessError> {
        let p = self.root.join(rel);
        if p.exists() {
            if !self.force {
                return Err(HarnessError::Exists(p));
            }
            let res = if p.is_dir() {
                fs::remove_dir_all(&p)
            } else {
                fs::remove_file(&p)
            };
            res.map_err(|e| HarnessError::io(&p, e))?;
        }
        Ok(p)
    }

    fn record(&self, step: &str, outputs: Vec<String>) -> Result<(), HarnessError> {
        let path = self.root.join("run.json");
        let mut m: Manifest = if path.exists() {
            serde_json::from_str(&read(&path)?)
                .map_err(|e| HarnessError::Format(format!("run manifest: {e}")))?
        } else {
            Manifest::default()
        };
        m.format = RUN_FORMAT.into();
        m.version = 1;
        m.steps.insert(step.into(), outputs);
        write(&path, &serde_json::to_string_pretty(&m).expect("manifest serializes"))
    }

    pub fn manifest(&self) -> Result<Manifest, HarnessError> {
        serde_json::from_str(&read(&self.root.join("run.json"))?)
            .map_err(|e| HarnessError::Format(format!("run manifest: {e}")))
    }

    pub fn gen_data(&self) -> Result<Corpora, HarnessError> {
        let dir = self.guard("corpora")?;
        let c = build_corpora(&self.cfg)?;
        c.save(&dir)?;
        self.record(
            "gen-data",
            super::SPLIT_NAMES.iter().map(|s| format!("corpora/{s}")).collect(),
        )?;
        Ok(c)
    }

    fn raw_corpora(&self) -> Result<Corpora, HarnessError> {
        Corpora::load(&self.root.join("corpora"))
    }

    fn stage1(&self) -> Result<(Checkpoint, Normalizer), HarnessError> {
        let ck = load_checkpoint(&self.root.join("stage1/checkpoint.json"))?;
        let n = ck.normalizer.clone().ok_or_else(|| {
            HarnessError::Format("stage-1 checkpoint has no input normalizer".into())
        })?;
        Ok((ck, n))
    }

    pub fn train(&self) -> Result<super::StageOne, HarnessError> {
        let raw = self.raw_corpora()?;
        let dir = self.guard("stage1")?;
        let norm = fit_normalizer(&self.cfg, &raw.source_train);
        let corpora = raw.normalized(&norm);
        let s1 = train_stage1(&self.cfg, &corpora)?;
        Checkpoint::new(s1.network.clone(), s1.records.len())
            .with_normalizer(norm)
            .save(&dir.join("checkpoint.json"))
            .map_err(|e| HarnessError::io(&dir, e))?;
        write(&dir.join("metrics.csv"), &super::metrics_csv(&s1.records))?;
        self.record(
            "train",
            vec!["stage1/checkpoint.json".into(), "stage1/metrics.csv".into()],
        )?;
        Ok(s1)
    }

    fn prepared(&self) -> Result<(Checkpoint, Corpora), HarnessError> {
        let (ck, norm) = self.stage1()?;
        Ok((ck, self.raw_corpora()?.normalized(&norm)))
    }

    /// Adapts the stage-1 model once per seed at the configured (λ, f).
    pub fn adapt(&self) -> Result<ResultTable, HarnessError> {
        let (ck, corpora) = self.prepared()?;
        self.guard("adapt")?;
        let (lambda, f) = (self.cfg.adapt.lambda, self.cfg.adapt.feature_layer);
        let base = error_percent(&ck.network, &corpora.target_test)?;
        let mut table = ResultTable::new("adaptation", &self.cfg.seeds, base);
        let mut errs = Vec::new();
        let mut outputs = Vec::new();
        for &seed in &self.cfg.seeds {
            let out = adapt_once(&self.cfg, &ck.network, &corpora, &corpora.target_train, lambda, f, seed)?;
            let rel = format!("adapt/seed-{seed}");
            let dir = self.root.join(&rel);
            emit_metrics(&out.records, &dir)?;
            let mut adapted = Checkpoint::new(out.network, out.records.len());
            adapted.normalizer = ck.normalizer.clone();
            adapted
                .save(&dir.join("checkpoint.json"))
                .map_err(|e| HarnessError::io(&dir, e))?;
            errs.push(out.target_error);
            for file in ["checkpoint.json", "metrics.csv", "accuracy.svg"] {
                outputs.push(format!("{rel}/{file}"));
            }
        }
        table.push(RowKey::Grid { lambda, feature_layer: f }, errs)?;
        self.write_table("adapt", &table)?;
        outputs.extend(["adapt/table.json".into(), "adapt/table.csv".into()]);
        self.record("adapt", outputs)?;
        Ok(table)
    }

    pub fn eval(&self) -> Result<EvalReport, HarnessError> {
        let (ck, corpora) = self.prepared()?;
        let path = self.guard("eval.json")?;
        let (src_acc, _) = evaluate(&ck.network, &corpora.source_valid)?;
        let mut adapted = Vec::new();
        for &seed in &self.cfg.seeds {
            let p = self.root.join(format!("adapt/seed-{seed}/checkpoint.json"));
            if !p.exists() {
                continue;
            }
            let a = load_checkpoint(&p)?;
            let (acc, _) = evaluate(&a.network, &corpora.source_valid)?;
            adapted.push((seed, error_percent(&a.network, &corpora.target_test)?, acc));
        }
        let report = EvalReport {
            stage1_source_valid_accuracy: src_acc,
            stage1_target_error: error_percent(&ck.network, &corpora.target_test)?,
            adapted,
        };
        write(&path, &serde_json::to_string_pretty(&report).expect("report serializes"))?;
        self.record("eval", vec!["eval.json".into()])?;
        Ok(report)
    }

    fn write_table(&self, rel: &str, table: &ResultTable) -> Result<(), HarnessError> {
        let dir = self.root.join(rel);
        write(&dir.join("table.json"), &table.to_json())?;
        write(&dir.join("table.csv"), &table.to_csv()?)
    }

    pub fn grid(&self) -> Result<ResultTable, HarnessError> {
        let (ck, corpora) = self.prepared()?;
        self.guard("grid")?;
        let table = run_grid(&self.cfg, &ck.network, &corpora)?;
        self.write_table("grid", &table)?;
        self.record("grid", vec!["grid/table.json".into(), "grid/table.csv".into()])?;
        Ok(table)
    }

    /// Source-language sweep, followed by the cross-language one when enabled.
    pub fn sweep(&self) -> Result<Vec<ResultTable>, HarnessError> {
        let (ck, corpora) = self.prepared()?;
        self.guard("sweep")?;
        let mut langs = vec![self.cfg.corpus.source_language.clone()];
        if self.cfg.sweep.cross_language {
            langs.push(self.cfg.corpus.cross_language.clone());
        }
        let mut tables = Vec::new();
        let mut outputs = Vec::new();
        for lang in langs {
            let t = run_hours_sweep(&self.cfg, &ck.network, &corpora, &lang)?;
            let rel = format!("sweep/{lang}");
            self.write_table(&rel, &t)?;
            outputs.push(format!("{rel}/table.json"));
            outputs.push(format!("{rel}/table.csv"));
            tables.push(t);
        }
        self.record("sweep", outputs)?;
        Ok(tables)
    }

    /// Every stored table, re-rendered from its JSON. The CSV regenerated from
    /// the JSON must match the stored CSV byte for byte.
    pub fn report(&self) -> Result<String, HarnessError> {
        let mut rels = Vec::new();
        for rel in ["adapt", "grid"] {
            if self.root.join(rel).join("table.json").exists() {
                rels.push(rel.to_string());
            }
        }
        let sweep = self.root.join("sweep");
        if sweep.is_dir() {
            let mut langs: Vec<String> = fs::read_dir(&sweep)
                .map_err(|e| HarnessError::io(&sweep, e))?
                .filter_map(|e| e.ok())
                .filter(|e| e.path().join("table.json").exists())
                .map(|e| format!("sweep/{}", e.file_name().to_string_lossy()))
                .collect();
            langs.sort();
            rels.extend(langs);
        }
        if rels.is_empty() {
            return Err(HarnessError::Missing(self.root.join("grid/table.json")));
        }
        let mut out = String::new();
        for rel in rels {
            let dir = self.root.join(&rel);
            let table = ResultTable::from_json(&read(&dir.join("table.json"))?)?;
            let stored = read(&dir.join("table.csv"))?;
            if table.to_csv()? != stored {
                return Err(HarnessError::Mismatch(format!("{rel}/table.csv")));
            }
            out.push_str(&table.render()?);
            out.push('\n');
        }
        Ok(out)
    }
}

fn load_checkpoint(path: &Path) -> Result<Checkpoint, HarnessError> {
    if !path.exists() {
        return Err(HarnessError::Missing(path.to_path_buf()));
    }
    Ok(Checkpoint::load(path)?)
}
