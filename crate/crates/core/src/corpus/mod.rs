//! Frame-level datasets, source/target batch mixing and hour-based subsets.

mod io;

pub use io::{load_dataset, save_dataset, FEATURE_MAGIC, LABEL_MAGIC, MANIFEST_FILE};

use std::path::PathBuf;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::nn::Matrix;

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("data error: {0}")]
    Data(String),
    #[error("format error in {path} at offset {offset}: {detail}")]
    Format {
        path: PathBuf,
        offset: u64,
        detail: String,
    },
    #[error("integrity error: {0}")]
    Integrity(String),
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

/// Recording condition of a dataset. Encoded as class 0 (source) and 1 (target)
/// for the domain discriminator.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Domain {
    Source,
    Target,
}

impl Domain {
    pub fn class_index(self) -> usize {
        match self {
            Domain::Source => 0,
            Domain::Target => 1,
        }
    }
}

/// Contiguous run of frames belonging to one utterance.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Utterance {
    pub id: String,
    pub start: usize,
    pub frames: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct FrameDataset {
    features: Matrix,
    labels: Option<Vec<usize>>,
    n_classes: usize,
    domain: Domain,
    language: String,
    frame_shift_s: f64,
    utterances: Vec<Utterance>,
}

impl FrameDataset {
    /// Checks that labels (when present) cover every row and stay below
    /// `n_classes`, and that the utterance spans tile the feature rows.
    pub fn new(
        features: Matrix,
        labels: Option<Vec<usize>>,
        n_classes: usize,
        domain: Domain,
        language: impl Into<String>,
        frame_shift_s: f64,
        utterances: Vec<Utterance>,
    ) -> Result<Self, CorpusError> {
        if let Some(l) = &labels {
            if l.len() != features.rows() {
                return Err(CorpusError::Integrity(format!(
                    "{} labels for {} feature rows",
                    l.len(),
                    features.rows()
                )));
            }
            if let Some((i, &bad)) = l.iter().enumerate().find(|(_, &y)| y >= n_classes) {
                return Err(CorpusError::Integrity(format!(
                    "label {bad} at row {i} exceeds {n_classes} classes"
                )));
            }
        }
        let mut next = 0;
        for u in &utterances {
            if u.start != next {
                return Err(CorpusError::Integrity(format!(
                    "utterance {} starts at {} but previous span ended at {next}",
                    u.id, u.start
                )));
            }
            next += u.frames;
        }
        if next != features.rows() {
            return Err(CorpusError::Integrity(format!(
                "utterances cover {next} frames, features have {}",
                features.rows()
            )));
        }
        if !(frame_shift_s > 0.0) {
            return Err(CorpusError::Data(format!(
                "frame shift must be positive, got {frame_shift_s}"
            )));
        }
        Ok(Self {
            features,
            labels,
            n_classes,
            domain,
            language: language.into(),
            frame_shift_s,
            utterances,
        })
    }

    pub fn features(&self) -> &Matrix {
        &self.features
    }

    pub fn labels(&self) -> Option<&[usize]> {
        self.labels.as_deref()
    }

    pub fn n_classes(&self) -> usize {
        self.n_classes
    }

    pub fn domain(&self) -> Domain {
        self.domain
    }

    pub fn language(&self) -> &str {
        &self.language
    }

    pub fn frame_shift_s(&self) -> f64 {
        self.frame_shift_s
    }

    pub fn utterances(&self) -> &[Utterance] {
        &self.utterances
    }

    pub fn len(&self) -> usize {
        self.features.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.features.rows() == 0
    }

    pub fn dims(&self) -> usize {
        self.features.cols()
    }

    pub fn has_labels(&self) -> bool {
        self.labels.is_some()
    }

    /// `frames × frame_shift / 3600`.
    pub fn hours_equivalent(&self) -> f64 {
        self.len() as f64 * self.frame_shift_s / 3600.0
    }

    /// Drops the class labels, as required for adaptation targets.
    pub fn without_labels(mut self) -> Self {
        self.labels = None;
        self
    }

    pub fn with_domain(mut self, domain: Domain) -> Self {
        self.domain = domain;
        self
    }

    /// Replaces the labels, for tests that perturb hidden labels.
    pub fn with_labels(self, labels: Vec<usize>) -> Result<Self, CorpusError> {
        Self::new(
            self.features,
            Some(labels),
            self.n_classes,
            self.domain,
            self.language,
            self.frame_shift_s,
            self.utterances,
        )
    }

    pub(crate) fn map_features(&mut self, f: impl FnOnce(&mut Matrix)) {
        f(&mut self.features);
    }

    pub fn require_labels(&self, what: &str) -> Result<&[usize], CorpusError> {
        if self.is_empty() {
            return Err(CorpusError::Data(format!("{what}: dataset is empty")));
        }
        self.labels
            .as_deref()
            .ok_or_else(|| CorpusError::Data(format!("{what}: dataset has no labels")))
    }

    pub fn require_unlabeled(&self, what: &str) -> Result<(), CorpusError> {
        if self.labels.is_some() {
            return Err(CorpusError::Data(format!(
                "{what}: target-domain data must not carry class labels"
            )));
        }
        Ok(())
    }

    /// Concatenates datasets that agree on dims, classes, domain, language and shift.
    pub fn concat(parts: &[FrameDataset]) -> Result<FrameDataset, CorpusError> {
        let first = parts
            .first()
            .ok_or_else(|| CorpusError::Data("concat of zero datasets".into()))?;
        let mut utterances = Vec::new();
        let mut labels = first.labels.as_ref().map(|_| Vec::new());
        let mut offset = 0;
        for p in parts {
            if p.dims() != first.dims()
                || p.n_classes != first.n_classes
                || p.domain != first.domain
                || p.language != first.language
                || p.frame_shift_s != first.frame_shift_s
                || p.labels.is_some() != first.labels.is_some()
            {
                return Err(CorpusError::Data(
                    "concat: datasets disagree on layout or tags".into(),
                ));
            }
            for u in &p.utterances {
                utterances.push(Utterance {
                    id: u.id.clone(),
                    start: u.start + offset,
                    frames: u.frames,
                });
            }
            if let (Some(all), Some(l)) = (labels.as_mut(), p.labels.as_ref()) {
                all.extend_from_slice(l);
            }
            offset += p.len();
        }
        let feats: Vec<&Matrix> = parts.iter().map(|p| &p.features).collect();
        let features = Matrix::vstack(&feats).map_err(|e| CorpusError::Data(e.to_string()))?;
        FrameDataset::new(
            features,
            labels,
            first.n_classes,
            first.domain,
            first.language.clone(),
            first.frame_shift_s,
            utterances,
        )
    }

    /// Keeps the listed utterances, in the given order.
    pub fn select_utterances(&self, indices: &[usize]) -> FrameDataset {
        let mut rows = Vec::new();
        let mut utterances = Vec::with_capacity(indices.len());
        for &i in indices {
            let u = &self.utterances[i];
            utterances.push(Utterance {
                id: u.id.clone(),
                start: rows.len(),
                frames: u.frames,
            });
            rows.extend(u.start..u.start + u.frames);
        }
        FrameDataset {
            features: self.features.select_rows(&rows),
            labels: self
                .labels
                .as_ref()
                .map(|l| rows.iter().map(|&r| l[r]).collect()),
            n_classes: self.n_classes,
            domain: self.domain,
            language: self.language.clone(),
            frame_shift_s: self.frame_shift_s,
            utterances,
        }
    }
}

/// Random utterance-level subset of roughly `hours`.
///
/// Utterances are drawn in a seeded random order and accumulated until the
/// request is met, so the shortfall or excess is below one utterance. Two calls
/// with identically seeded generators return nested subsets.
pub fn subset_hours(
    data: &FrameDataset,
    hours: f64,
    rng: &mut impl Rng,
) -> Result<FrameDataset, CorpusError> {
    let available = data.hours_equivalent();
    if !(hours >= 0.0) || hours > available * (1.0 + 1e-12) {
        return Err(CorpusError::Data(format!(
            "requested {hours} h but only {available} h available"
        )));
    }
    let mut order: Vec<usize> = (0..data.utterances.len()).collect();
    order.shuffle(rng);
    let target_frames = hours * 3600.0 / data.frame_shift_s;
    let mut taken = Vec::new();
    let mut frames = 0usize;
    for i in order {
        if frames as f64 >= target_frames - 1e-9 {
            break;
        }
        frames += data.utterances[i].frames;
        taken.push(i);
    }
    Ok(data.select_utterances(&taken))
}

/// Per-column standardization fitted on one dataset and applied to others.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Normalizer {
    pub mean: Vec<f64>,
    pub inv_std: Vec<f64>,
}

impl Normalizer {
    pub fn fit(features: &Matrix) -> Self {
        let n = features.rows().max(1) as f64;
        let mean: Vec<f64> = features.sum_rows().data().iter().map(|s| s / n).collect();
        let mut var = vec![0.0; features.cols()];
        for r in 0..features.rows() {
            for ((v, &x), &m) in var.iter_mut().zip(features.row(r)).zip(&mean) {
                *v += (x - m) * (x - m);
            }
        }
        let inv_std = var.iter().map(|v| 1.0 / (v / n).sqrt().max(1e-8)).collect();
        Self { mean, inv_std }
    }

    pub fn apply_matrix(&self, m: &mut Matrix) {
        for r in 0..m.rows() {
            for ((x, mu), s) in m.row_mut(r).iter_mut().zip(&self.mean).zip(&self.inv_std) {
                *x = (*x - mu) * s;
            }
        }
    }

    pub fn apply(&self, data: &mut FrameDataset) {
        data.map_features(|m| self.apply_matrix(m));
    }
}

/// One minibatch drawn from the mixed source/target stream.
#[derive(Clone, Debug, PartialEq)]
pub struct MixedBatch {
    pub features: Matrix,
    /// Class label per row; `None` for target rows.
    pub labels: Vec<Option<usize>>,
    pub domains: Vec<Domain>,
    /// Row index of each sample within its own domain's dataset.
    pub origin: Vec<usize>,
}

impl MixedBatch {
    pub fn len(&self) -> usize {
        self.domains.len()
    }

    pub fn is_empty(&self) -> bool {
        self.domains.is_empty()
    }

    /// Row indices of source-domain samples, in batch order.
    pub fn source_rows(&self) -> Vec<usize> {
        self.rows_of(Domain::Source)
    }

    pub fn target_rows(&self) -> Vec<usize> {
        self.rows_of(Domain::Target)
    }

    fn rows_of(&self, d: Domain) -> Vec<usize> {
        self.domains
            .iter()
            .enumerate()
            .filter_map(|(i, &x)| (x == d).then_some(i))
            .collect()
    }

    /// Source rows and their labels, gathered into a dense supervised batch.
    pub fn source_part(&self) -> (Matrix, Vec<usize>) {
        let rows = self.source_rows();
        let labels = rows
            .iter()
            .map(|&r| self.labels[r].expect("source rows carry labels"))
            .collect();
        (self.features.select_rows(&rows), labels)
    }
}

/// Shuffles the union of a labeled source set and an optional unlabeled target
/// set once per epoch and serves it in fixed-size slices.
pub struct MixedBatchIterator<'a, R: Rng> {
    source: &'a FrameDataset,
    target: Option<&'a FrameDataset>,
    batch_size: usize,
    rng: R,
    order: Vec<(Domain, usize)>,
    pos: usize,
}

impl<'a, R: Rng> MixedBatchIterator<'a, R> {
    pub fn new(
        source: &'a FrameDataset,
        target: Option<&'a FrameDataset>,
        batch_size: usize,
        rng: R,
    ) -> Result<Self, CorpusError> {
        source.require_labels("source stream")?;
        if let Some(t) = target {
            t.require_unlabeled("target stream")?;
            if t.dims() != source.dims() {
                return Err(CorpusError::Data(format!(
                    "source has {} dims, target has {}",
                    source.dims(),
                    t.dims()
                )));
            }
        }
        if batch_size == 0 {
            return Err(CorpusError::Data("batch size must be positive".into()));
        }
        let mut it = Self {
            source,
            target,
            batch_size,
            rng,
            order: Vec::new(),
            pos: 0,
        };
        it.new_epoch();
        Ok(it)
    }

    /// Reshuffles and rewinds.
    pub fn new_epoch(&mut self) {
        self.order.clear();
        self.order
            .extend((0..self.source.len()).map(|i| (Domain::Source, i)));
        if let Some(t) = self.target {
            self.order.extend((0..t.len()).map(|i| (Domain::Target, i)));
        }
        self.order.shuffle(&mut self.rng);
        self.pos = 0;
    }

    pub fn rng(&self) -> &R {
        &self.rng
    }

    pub fn batches_per_epoch(&self) -> usize {
        self.order.len().div_ceil(self.batch_size)
    }

    /// Next slice of the epoch's shuffle, or `None` once the epoch is exhausted.
    pub fn next_batch(&mut self) -> Option<MixedBatch> {
        if self.pos >= self.order.len() {
            return None;
        }
        let end = (self.pos + self.batch_size).min(self.order.len());
        let slice = &self.order[self.pos..end];
        self.pos = end;
        let dims = self.source.dims();
        let mut data = Vec::with_capacity(slice.len() * dims);
        let mut labels = Vec::with_capacity(slice.len());
        let mut domains = Vec::with_capacity(slice.len());
        let mut origin = Vec::with_capacity(slice.len());
        let src_labels = self.source.labels().expect("checked at construction");
        for &(d, i) in slice {
            match d {
                Domain::Source => {
                    data.extend_from_slice(self.source.features().row(i));
                    labels.push(Some(src_labels[i]));
                }
                Domain::Target => {
                    let t = self.target.expect("target rows imply a target set");
                    data.extend_from_slice(t.features().row(i));
                    labels.push(None);
                }
            }
            domains.push(d);
            origin.push(i);
        }
        let features =
            Matrix::from_vec(slice.len(), dims, data).expect("rows come from finite datasets");
        Some(MixedBatch {
            features,
            labels,
            domains,
            origin,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    pub(crate) fn toy(n_utts: usize, frames: usize, domain: Domain, labeled: bool) -> FrameDataset {
        let rows = n_utts * frames;
        let data = (0..rows * 3).map(|i| i as f64).collect();
        let labels = labeled.then(|| (0..rows).map(|i| i % 4).collect());
        let utts = (0..n_utts)
            .map(|u| Utterance {
                id: format!("u{u:03}"),
                start: u * frames,
                frames,
            })
            .collect();
        FrameDataset::new(
            Matrix::from_vec(rows, 3, data).unwrap(),
            labels,
            4,
            domain,
            "it",
            0.01,
            utts,
        )
        .unwrap()
    }

    #[test]
    fn construction_checks() {
        let ok = toy(2, 5, Domain::Source, true);
        assert_eq!(ok.len(), 10);
        assert!((ok.hours_equivalent() - 10.0 * 0.01 / 3600.0).abs() < 1e-18);
        let bad = ok.clone().with_labels(vec![0; 9]);
        assert!(matches!(bad, Err(CorpusError::Integrity(_))));
        let bad = ok.clone().with_labels(vec![4; 10]);
        assert!(matches!(bad, Err(CorpusError::Integrity(_))));
        assert!(ok.require_unlabeled("x").is_err());
        assert!(ok.clone().without_labels().require_labels("x").is_err());
    }

    #[test]
    fn subset_full_is_permutation() {
        let d = toy(10, 7, Domain::Target, false);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let s = subset_hours(&d, d.hours_equivalent(), &mut rng).unwrap();
        assert_eq!(s.len(), d.len());
        let mut ids: Vec<_> = s.utterances().iter().map(|u| u.id.clone()).collect();
        ids.sort();
        let orig: Vec<_> = d.utterances().iter().map(|u| u.id.clone()).collect();
        assert_eq!(ids, orig);
    }

    #[test]
    fn subset_half_within_one_utterance() {
        let d = toy(11, 13, Domain::Target, false);
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let half = d.hours_equivalent() / 2.0;
        let s = subset_hours(&d, half, &mut rng).unwrap();
        let utt_hours = 13.0 * 0.01 / 3600.0;
        assert!((s.hours_equivalent() - half).abs() <= utt_hours + 1e-15);
        assert!(subset_hours(&d, d.hours_equivalent() * 1.5, &mut rng).is_err());
    }

    #[test]
    fn subsets_are_nested_under_same_seed() {
        let d = toy(60, 9, Domain::Target, false);
        let total = d.hours_equivalent();
        let mut prev: Option<Vec<String>> = None;
        for frac in [5.0, 10.0, 20.0, 30.0, 40.0, 50.0] {
            let mut rng = ChaCha8Rng::seed_from_u64(42);
            let s = subset_hours(&d, total * frac / 50.0, &mut rng).unwrap();
            let ids: Vec<String> = s.utterances().iter().map(|u| u.id.clone()).collect();
            if let Some(p) = &prev {
                assert!(p.iter().all(|id| ids.contains(id)));
            }
            prev = Some(ids);
        }
    }

    #[test]
    fn epoch_partitions_the_union() {
        let s = toy(3, 10, Domain::Source, true);
        let t = toy(2, 10, Domain::Target, false);
        let mut it = MixedBatchIterator::new(&s, Some(&t), 7, ChaCha8Rng::seed_from_u64(1)).unwrap();
        for _ in 0..2 {
            let mut seen_s = vec![0; s.len()];
            let mut seen_t = vec![0; t.len()];
            while let Some(b) = it.next_batch() {
                assert!(b.len() <= 7);
                for (r, d) in b.domains.iter().enumerate() {
                    // feature row 0 value identifies the sample: index * 3
                    let idx = (b.features.get(r, 0) / 3.0) as usize;
                    match d {
                        Domain::Source => {
                            assert_eq!(b.labels[r], Some(idx % 4));
                            seen_s[idx] += 1;
                        }
                        Domain::Target => {
                            assert_eq!(b.labels[r], None);
                            seen_t[idx] += 1;
                        }
                    }
                }
            }
            assert!(seen_s.iter().chain(&seen_t).all(|&c| c == 1));
            it.new_epoch();
        }
    }

    #[test]
    fn single_domain_iterator() {
        let s = toy(2, 10, Domain::Source, true);
        let mut it = MixedBatchIterator::new(&s, None, 4, ChaCha8Rng::seed_from_u64(1)).unwrap();
        while let Some(b) = it.next_batch() {
            assert!(b.domains.iter().all(|&d| d == Domain::Source));
        }
    }

    #[test]
    fn labeled_target_is_rejected() {
        let s = toy(2, 10, Domain::Source, true);
        let t = toy(2, 10, Domain::Target, true);
        assert!(matches!(
            MixedBatchIterator::new(&s, Some(&t), 4, ChaCha8Rng::seed_from_u64(1)),
            Err(CorpusError::Data(_))
        ));
    }

    #[test]
    fn balanced_split_follows_binomial() {
        let s = toy(64, 100, Domain::Source, true);
        let t = toy(64, 100, Domain::Target, false);
        let mut it = MixedBatchIterator::new(&s, Some(&t), 256, ChaCha8Rng::seed_from_u64(5)).unwrap();
        let mut counts = Vec::new();
        while let Some(b) = it.next_batch() {
            if b.len() == 256 {
                counts.push(b.source_rows().len() as f64);
            }
        }
        let mean = counts.iter().sum::<f64>() / counts.len() as f64;
        // binomial(256, 1/2): sd 8, mean of ~50 batches has sd ~1.1
        assert!((mean - 128.0).abs() < 5.0, "mean {mean}");
        assert!(counts.iter().all(|&c| (c - 128.0).abs() < 40.0));
    }

    #[test]
    fn normalizer_standardizes() {
        let d = toy(2, 10, Domain::Source, true);
        let n = Normalizer::fit(d.features());
        let mut m = d.features().clone();
        n.apply_matrix(&mut m);
        let after = Normalizer::fit(&m);
        assert!(after.mean.iter().all(|v| v.abs() < 1e-12));
        assert!(after.inv_std.iter().all(|v| (v - 1.0).abs() < 1e-9));
    }
}
