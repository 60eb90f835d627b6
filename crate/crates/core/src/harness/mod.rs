//! Experiment driver: corpus generation, the two training stages, the λ×f
//! grid, adaptation-data sweeps and result tables.

mod config;
mod metrics;
pub mod run;
mod table;

pub use config::{
    AdaptSection, CorpusConfig, ExperimentConfig, GridConfig, NetworkConfig, OptimConfig,
    StageOneConfig, SweepConfig,
};
pub use metrics::{emit_metrics, metrics_csv, parse_metrics_csv, accuracy_svg};
pub use table::{rerr, round1, ResultRow, ResultTable, RowKey};

use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::corpus::{subset_hours, CorpusError, Domain, FrameDataset, Normalizer};
use crate::grl::{
    adapt_adversarial, attach_domain_head, build_main_network, evaluate, train_supervised,
    AdaptError, MetricsRecord, NetworkParams, TrainConfig,
};
use crate::optim::{Adam, NewBobState};
use crate::synth::{synthesize_corpus, CorpusRequest, GeneratorSpec, SynthError};

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("config field `{field}`: {detail}")]
    Config { field: String, detail: String },
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{0}")]
    Arithmetic(String),
    #[error("malformed {0}")]
    Format(String),
    #[error("{0} already exists; pass --force to overwrite")]
    Exists(PathBuf),
    #[error("{0} not found; run the earlier pipeline step first")]
    Missing(PathBuf),
    #[error("stored and regenerated output differ: {0}")]
    Mismatch(String),
    #[error("{context}: {source}")]
    Cell {
        context: String,
        source: Box<HarnessError>,
    },
    #[error(transparent)]
    Adapt(#[from] AdaptError),
    #[error(transparent)]
    Corpus(#[from] CorpusError),
    #[error(transparent)]
    Synth(#[from] SynthError),
}

impl HarnessError {
    pub(crate) fn io(path: &Path, source: std::io::Error) -> Self {
        HarnessError::Io {
            path: path.to_path_buf(),
            source,
        }
    }

    fn in_cell(self, context: String) -> Self {
        HarnessError::Cell {
            context,
            source: Box::new(self),
        }
    }

    /// Short machine-readable category for error reports.
    pub fn kind(&self) -> &'static str {
        match self {
            HarnessError::Config { .. } => "config",
            HarnessError::Io { .. } => "io",
            HarnessError::Arithmetic(_) => "arithmetic",
            HarnessError::Format(_) => "format",
            HarnessError::Exists(_) => "exists",
            HarnessError::Missing(_) => "missing",
            HarnessError::Mismatch(_) => "mismatch",
            HarnessError::Cell { source, .. } => source.kind(),
            HarnessError::Adapt(_) => "adapt",
            HarnessError::Corpus(_) => "corpus",
            HarnessError::Synth(_) => "synth",
        }
    }
}

/// All splits of one experiment. The adaptation targets carry no labels;
/// validation and test splits keep theirs.
#[derive(Clone, Debug, PartialEq)]
pub struct Corpora {
    pub source_train: FrameDataset,
    pub source_valid: FrameDataset,
    pub target_train: FrameDataset,
    pub target_valid: FrameDataset,
    pub target_test: FrameDataset,
    pub cross_train: FrameDataset,
}

pub const SPLIT_NAMES: [&str; 6] = [
    "source_train",
    "source_valid",
    "target_train",
    "target_valid",
    "target_test",
    "cross_train",
];

impl Corpora {
    pub fn splits(&self) -> [&FrameDataset; 6] {
        [
            &self.source_train,
            &self.source_valid,
            &self.target_train,
            &self.target_valid,
            &self.target_test,
            &self.cross_train,
        ]
    }

    pub fn normalized(&self, n: &Normalizer) -> Corpora {
        let f = |d: &FrameDataset| {
            let mut d = d.clone();
            n.apply(&mut d);
            d
        };
        Corpora {
            source_train: f(&self.source_train),
            source_valid: f(&self.source_valid),
            target_train: f(&self.target_train),
            target_valid: f(&self.target_valid),
            target_test: f(&self.target_test),
            cross_train: f(&self.cross_train),
        }
    }

    pub fn save(&self, dir: &Path) -> Result<(), HarnessError> {
        for (name, d) in SPLIT_NAMES.iter().zip(self.splits()) {
            crate::corpus::save_dataset(d, &dir.join(name))?;
        }
        Ok(())
    }

    pub fn load(dir: &Path) -> Result<Corpora, HarnessError> {
        let f = |name: &str| -> Result<FrameDataset, HarnessError> {
            let p = dir.join(name);
            if !p.exists() {
                return Err(HarnessError::Missing(p));
            }
            Ok(crate::corpus::load_dataset(&p)?)
        };
        Ok(Corpora {
            source_train: f(SPLIT_NAMES[0])?,
            source_valid: f(SPLIT_NAMES[1])?,
            target_train: f(SPLIT_NAMES[2])?,
            target_valid: f(SPLIT_NAMES[3])?,
            target_test: f(SPLIT_NAMES[4])?,
            cross_train: f(SPLIT_NAMES[5])?,
        })
    }

    /// Validation sets for adaptation: labeled source data for the senone
    /// curve, plus the target validation split with its labels removed, so
    /// target labels only ever reach the final test.
    pub fn adaptation_valid(&self) -> [FrameDataset; 2] {
        [
            self.source_valid.clone(),
            self.target_valid.clone().without_labels(),
        ]
    }
}

fn generator(cfg: &ExperimentConfig, language: &str, seed: u64) -> GeneratorSpec {
    let c = &cfg.corpus;
    let mut spec =
        GeneratorSpec::for_language(c.n_classes, c.family_seed, language, c.template_overlap, seed);
    spec.utterance_length_s = c.utterance_length_s;
    spec.variation = c.variation;
    spec
}

/// Generates every split. Split `k` uses generator seed `seed * 1000 + k`;
/// the cross-language split sits in a separate range.
pub fn build_corpora(cfg: &ExperimentConfig) -> Result<Corpora, HarnessError> {
    let c = &cfg.corpus;
    let base = c.seed.wrapping_mul(1000);
    let make = |lang: &str,
                k: u64,
                channel: &crate::synth::ChannelProfile,
                n: usize,
                domain: Domain,
                name: &str|
     -> Result<FrameDataset, HarnessError> {
        let spec = generator(cfg, lang, base + k);
        Ok(synthesize_corpus(&CorpusRequest {
            spec: &spec,
            channel,
            features: &cfg.features,
            n_utterances: n,
            domain,
            name,
        })?)
    };
    let src = c.source_language.as_str();
    let far = |lang: &str, k: u64, n: usize, name: &str| -> Result<FrameDataset, HarnessError> {
        let mut channels = vec![&c.target_channel];
        channels.extend(c.extra_target_channels.iter());
        let per = n.div_ceil(channels.len());
        let mut parts = Vec::new();
        let mut left = n;
        for (j, ch) in channels.iter().enumerate() {
            let take = per.min(left);
            if take == 0 {
                break;
            }
            left -= take;
            let tag = format!("{name}-{}", ch.name);
            parts.push(make(lang, k + 100 * j as u64, ch, take, Domain::Target, &tag)?);
        }
        Ok(FrameDataset::concat(&parts)?)
    };
    Ok(Corpora {
        source_train: make(src, 1, &c.source_channel, c.train_utterances, Domain::Source, "src-train")?,
        source_valid: make(src, 2, &c.source_channel, c.valid_utterances, Domain::Source, "src-valid")?,
        target_train: far(src, 3, c.train_utterances, "tgt-train")?.without_labels(),
        target_valid: make(src, 4, &c.target_channel, c.valid_utterances, Domain::Target, "tgt-valid")?,
        target_test: make(src, 5, &c.target_channel, c.test_utterances, Domain::Target, "tgt-test")?,
        cross_train: far(&c.cross_language, 501, c.train_utterances, "cross-train")?.without_labels(),
    })
}

/// Standardizes on the source training split, then applies the input scale.
pub fn fit_normalizer(cfg: &ExperimentConfig, source_train: &FrameDataset) -> Normalizer {
    let mut n = Normalizer::fit(source_train.features());
    n.inv_std.iter_mut().for_each(|v| *v *= cfg.corpus.input_scale);
    n
}

/// Stage-one result: the trained network and its per-epoch metrics.
#[derive(Clone, Debug)]
pub struct StageOne {
    pub network: NetworkParams,
    pub records: Vec<MetricsRecord>,
}

/// Supervised training on the normalized source split.
pub fn train_stage1(cfg: &ExperimentConfig, corpora: &Corpora) -> Result<StageOne, HarnessError> {
    let s = &cfg.stage1;
    let net = build_main_network(
        corpora.source_train.dims(),
        cfg.corpus.n_classes,
        &cfg.network.hidden,
        cfg.network.init_seed,
    )?;
    let mut adam = Adam::new(cfg.adam(s.learning_rate));
    let mut nb = s.newbob.then(|| NewBobState::new(cfg.newbob(s.learning_rate)));
    let tc = TrainConfig {
        epochs: s.epochs,
        batch_size: s.batch_size,
        seed: s.seed,
    };
    let (network, records) = train_supervised(
        net,
        &corpora.source_train,
        &[&corpora.source_valid],
        &mut adam,
        nb.as_mut(),
        &tc,
    )?;
    Ok(StageOne { network, records })
}

/// Frame error rate in percent.
pub fn error_percent(net: &NetworkParams, data: &FrameDataset) -> Result<f64, HarnessError> {
    let (acc, _) = evaluate(net, data)?;
    Ok(100.0 * (1.0 - acc))
}

/// One adaptation run and its target-domain test error.
#[derive(Clone, Debug)]
pub struct AdaptOutcome {
    pub network: NetworkParams,
    pub records: Vec<MetricsRecord>,
    pub target_error: f64,
}

/// Domain-head initialization seed for adaptation seed `seed`.
pub fn head_seed(seed: u64) -> u64 {
    seed.wrapping_add(1_000_003)
}

/// Attaches a fresh domain head at layer `f` and adapts towards `target`.
pub fn adapt_once(
    cfg: &ExperimentConfig,
    stage1: &NetworkParams,
    corpora: &Corpora,
    target: &FrameDataset,
    lambda: f64,
    f: usize,
    seed: u64,
) -> Result<AdaptOutcome, HarnessError> {
    let net = attach_domain_head(
        stage1.clone(),
        f,
        &cfg.network.domain_head,
        cfg.network.leaky_slope,
        head_seed(seed),
    )?;
    let ac = cfg.adapt_config(lambda, f, seed);
    let mut adam = Adam::new(cfg.adam(ac.learning_rate));
    let valid = corpora.adaptation_valid();
    let valid: Vec<&FrameDataset> = valid.iter().collect();
    let (network, records) =
        adapt_adversarial(net, &corpora.source_train, target, &valid, &ac, &mut adam)?;
    let target_error = error_percent(&network, &corpora.target_test)?;
    Ok(AdaptOutcome {
        network,
        records,
        target_error,
    })
}

fn errors_over_seeds(
    cfg: &ExperimentConfig,
    stage1: &NetworkParams,
    corpora: &Corpora,
    target: &FrameDataset,
    lambda: f64,
    f: usize,
    context: &str,
) -> Result<Vec<f64>, HarnessError> {
    cfg.seeds
        .iter()
        .map(|&s| {
            adapt_once(cfg, stage1, corpora, target, lambda, f, s)
                .map(|o| o.target_error)
                .map_err(|e| e.in_cell(format!("{context}, seed {s}")))
        })
        .collect()
}

/// Adapts every (λ, f) cell of the grid for every seed.
pub fn run_grid(
    cfg: &ExperimentConfig,
    stage1: &NetworkParams,
    corpora: &Corpora,
) -> Result<ResultTable, HarnessError> {
    let base = error_percent(stage1, &corpora.target_test)?;
    let mut table = ResultTable::new("lambda x feature-layer grid", &cfg.seeds, base);
    for &lambda in &cfg.grid.lambdas {
        for &f in &cfg.grid.feature_layers {
            let ctx = format!("grid cell lambda={lambda} f={f}");
            let errs = errors_over_seeds(cfg, stage1, corpora, &corpora.target_train, lambda, f, &ctx)?;
            table.push(RowKey::Grid { lambda, feature_layer: f }, errs)?;
        }
    }
    Ok(table)
}

/// Nested subsets of an adaptation corpus, one per configured fraction. The
/// full fraction is the corpus itself.
pub fn sweep_subsets(
    cfg: &ExperimentConfig,
    data: &FrameDataset,
) -> Result<Vec<FrameDataset>, HarnessError> {
    cfg.sweep
        .fractions
        .iter()
        .map(|&fr| {
            if fr == 1.0 {
                return Ok(data.clone());
            }
            let mut rng = ChaCha8Rng::seed_from_u64(cfg.sweep.subset_seed);
            Ok(subset_hours(data, fr * data.hours_equivalent(), &mut rng)?)
        })
        .collect()
}

/// Adaptation-data sweep at the configured (λ, f) for the source language or
/// the cross language.
pub fn run_hours_sweep(
    cfg: &ExperimentConfig,
    stage1: &NetworkParams,
    corpora: &Corpora,
    language: &str,
) -> Result<ResultTable, HarnessError> {
    let data = if language == cfg.corpus.source_language {
        &corpora.target_train
    } else if language == cfg.corpus.cross_language {
        &corpora.cross_train
    } else {
        return Err(HarnessError::Config {
            field: "sweep language".into(),
            detail: format!(
                "`{language}` is neither `{}` nor `{}`",
                cfg.corpus.source_language, cfg.corpus.cross_language
            ),
        });
    };
    let base = error_percent(stage1, &corpora.target_test)?;
    let mut table = ResultTable::new(&format!("adaptation data sweep ({language})"), &cfg.seeds, base);
    let (lambda, f) = (cfg.adapt.lambda, cfg.adapt.feature_layer);
    for (fr, subset) in cfg.sweep.fractions.iter().zip(sweep_subsets(cfg, data)?) {
        let ctx = format!("sweep {language} fraction={fr}");
        let errs = errors_over_seeds(cfg, stage1, corpora, &subset, lambda, f, &ctx)?;
        table.push(
            RowKey::Sweep {
                fraction: *fr,
                hours: subset.hours_equivalent(),
                language: language.to_string(),
            },
            errs,
        )?;
    }
    Ok(table)
}
