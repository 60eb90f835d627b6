//! Corpus directory format.
//!
//! ```text
//! <dir>/manifest.jsonl        one JSON object per utterance, in dataset order
//! <dir>/feats/<id>.feat       feature matrix of one utterance
//! <dir>/labels/<id>.lab       frame labels of one utterance (labeled sets only)
//! ```
//!
//! Feature file: magic `GRLF`, u16 version (1), u8 dtype (1 = f64), u8 zero,
//! u32 dims, u64 frames, then `frames * dims` little-endian f64 in row-major order.
//!
//! Label file: magic `GRLL`, u16 version (1), u16 zero, u64 count, then
//! `count` little-endian u32 class indices.

use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{CorpusError, Domain, FrameDataset, Utterance};
use crate::nn::Matrix;

pub const MANIFEST_FILE: &str = "manifest.jsonl";
pub const FEATURE_MAGIC: [u8; 4] = *b"GRLF";
pub const LABEL_MAGIC: [u8; 4] = *b"GRLL";
const VERSION: u16 = 1;
const DTYPE_F64: u8 = 1;
const FEATURE_HEADER: usize = 4 + 2 + 1 + 1 + 4 + 8;
const LABEL_HEADER: usize = 4 + 2 + 2 + 8;

#[derive(Debug, Serialize, Deserialize)]
struct ManifestEntry {
    id: String,
    domain: Domain,
    language: String,
    n_classes: usize,
    frame_shift_s: f64,
    frames: usize,
    dims: usize,
    features: String,
    labels: Option<String>,
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> CorpusError + '_ {
    move |source| CorpusError::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// Writes `data` as a corpus directory, creating it if needed.
pub fn save_dataset(data: &FrameDataset, dir: &Path) -> Result<(), CorpusError> {
    fs::create_dir_all(dir.join("feats")).map_err(io_err(dir))?;
    if data.has_labels() {
        fs::create_dir_all(dir.join("labels")).map_err(io_err(dir))?;
    }
    let mut manifest = String::new();
    for u in data.utterances() {
        if u.id.is_empty() || u.id.contains(['/', '\\']) || u.id.starts_with('.') {
            return Err(CorpusError::Data(format!(
                "utterance id {:?} is not a valid file name",
                u.id
            )));
        }
        let feat_rel = format!("feats/{}.feat", u.id);
        let mut buf = Vec::with_capacity(FEATURE_HEADER + u.frames * data.dims() * 8);
        buf.extend_from_slice(&FEATURE_MAGIC);
        buf.extend_from_slice(&VERSION.to_le_bytes());
        buf.push(DTYPE_F64);
        buf.push(0);
        buf.extend_from_slice(&(data.dims() as u32).to_le_bytes());
        buf.extend_from_slice(&(u.frames as u64).to_le_bytes());
        for r in u.start..u.start + u.frames {
            for v in data.features().row(r) {
                buf.extend_from_slice(&v.to_le_bytes());
            }
        }
        let p = dir.join(&feat_rel);
        fs::write(&p, &buf).map_err(io_err(&p))?;

        let label_rel = match data.labels() {
            Some(labels) => {
                let rel = format!("labels/{}.lab", u.id);
                let mut buf = Vec::with_capacity(LABEL_HEADER + u.frames * 4);
                buf.extend_from_slice(&LABEL_MAGIC);
                buf.extend_from_slice(&VERSION.to_le_bytes());
                buf.extend_from_slice(&0u16.to_le_bytes());
                buf.extend_from_slice(&(u.frames as u64).to_le_bytes());
                for &y in &labels[u.start..u.start + u.frames] {
                    buf.extend_from_slice(&(y as u32).to_le_bytes());
                }
                let p = dir.join(&rel);
                fs::write(&p, &buf).map_err(io_err(&p))?;
                Some(rel)
            }
            None => None,
        };
        let entry = ManifestEntry {
            id: u.id.clone(),
            domain: data.domain(),
            language: data.language().to_string(),
            n_classes: data.n_classes(),
            frame_shift_s: data.frame_shift_s(),
            frames: u.frames,
            dims: data.dims(),
            features: feat_rel,
            labels: label_rel,
        };
        manifest.push_str(&serde_json::to_string(&entry).expect("manifest entry serializes"));
        manifest.push('\n');
    }
    let p = dir.join(MANIFEST_FILE);
    let mut f = fs::File::create(&p).map_err(io_err(&p))?;
    f.write_all(manifest.as_bytes()).map_err(io_err(&p))?;
    Ok(())
}

struct Cursor<'a> {
    path: &'a Path,
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8], CorpusError> {
        if self.bytes.len() - self.pos < n {
            return Err(self.format(format!(
                "truncated while reading {what}: need {n} bytes, {} left",
                self.bytes.len() - self.pos
            )));
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn format(&self, detail: String) -> CorpusError {
        CorpusError::Format {
            path: self.path.to_path_buf(),
            offset: self.pos as u64,
            detail,
        }
    }

    fn magic(&mut self, expected: [u8; 4]) -> Result<(), CorpusError> {
        let m = self.take(4, "magic")?;
        if m != expected {
            self.pos -= 4;
            return Err(self.format(format!("bad magic {m:?}")));
        }
        let v = u16::from_le_bytes(self.take(2, "version")?.try_into().unwrap());
        if v != VERSION {
            self.pos -= 2;
            return Err(self.format(format!("unsupported version {v}")));
        }
        Ok(())
    }

    fn finish(&self) -> Result<(), CorpusError> {
        if self.pos != self.bytes.len() {
            return Err(self.format(format!(
                "{} trailing bytes",
                self.bytes.len() - self.pos
            )));
        }
        Ok(())
    }
}

fn read_features(path: &Path, expect: &ManifestEntry) -> Result<Vec<f64>, CorpusError> {
    let bytes = fs::read(path).map_err(io_err(path))?;
    let mut c = Cursor {
        path,
        bytes: &bytes,
        pos: 0,
    };
    c.magic(FEATURE_MAGIC)?;
    let dtype = c.take(2, "dtype")?[0];
    if dtype != DTYPE_F64 {
        c.pos -= 2;
        return Err(c.format(format!("unsupported dtype code {dtype}")));
    }
    let dims = u32::from_le_bytes(c.take(4, "dims")?.try_into().unwrap()) as usize;
    let frames = u64::from_le_bytes(c.take(8, "frames")?.try_into().unwrap()) as usize;
    if dims != expect.dims || frames != expect.frames {
        return Err(CorpusError::Integrity(format!(
            "{}: header says {frames}x{dims}, manifest says {}x{}",
            path.display(),
            expect.frames,
            expect.dims
        )));
    }
    let body = c.take(frames * dims * 8, "feature data")?;
    c.finish()?;
    Ok(body
        .chunks_exact(8)
        .map(|b| f64::from_le_bytes(b.try_into().unwrap()))
        .collect())
}

fn read_labels(path: &Path, expect: &ManifestEntry) -> Result<Vec<usize>, CorpusError> {
    let bytes = fs::read(path).map_err(io_err(path))?;
    let mut c = Cursor {
        path,
        bytes: &bytes,
        pos: 0,
    };
    c.magic(LABEL_MAGIC)?;
    c.take(2, "reserved")?;
    let count = u64::from_le_bytes(c.take(8, "count")?.try_into().unwrap()) as usize;
    if count != expect.frames {
        return Err(CorpusError::Integrity(format!(
            "{}: {count} labels for {} feature frames",
            path.display(),
            expect.frames
        )));
    }
    let body = c.take(count * 4, "label data")?;
    c.finish()?;
    Ok(body
        .chunks_exact(4)
        .map(|b| u32::from_le_bytes(b.try_into().unwrap()) as usize)
        .collect())
}

/// Reads a corpus directory written by [`save_dataset`].
pub fn load_dataset(dir: &Path) -> Result<FrameDataset, CorpusError> {
    let manifest_path: PathBuf = dir.join(MANIFEST_FILE);
    let f = fs::File::open(&manifest_path).map_err(io_err(&manifest_path))?;
    let mut entries = Vec::new();
    let mut offset = 0u64;
    for line in BufReader::new(f).lines() {
        let line = line.map_err(io_err(&manifest_path))?;
        let len = line.len() as u64 + 1;
        if !line.trim().is_empty() {
            let e: ManifestEntry = serde_json::from_str(&line).map_err(|e| CorpusError::Format {
                path: manifest_path.clone(),
                offset: offset + e.column().saturating_sub(1) as u64,
                detail: e.to_string(),
            })?;
            entries.push(e);
        }
        offset += len;
    }
    let first = entries.first().ok_or_else(|| CorpusError::Format {
        path: manifest_path.clone(),
        offset: 0,
        detail: "manifest lists no utterances".into(),
    })?;
    let (dims, domain, language, n_classes, shift, labeled) = (
        first.dims,
        first.domain,
        first.language.clone(),
        first.n_classes,
        first.frame_shift_s,
        first.labels.is_some(),
    );

    let mut data = Vec::new();
    let mut labels = labeled.then(Vec::new);
    let mut utterances = Vec::with_capacity(entries.len());
    let mut start = 0;
    for e in &entries {
        if e.dims != dims
            || e.domain != domain
            || e.language != language
            || e.n_classes != n_classes
            || e.frame_shift_s.to_bits() != shift.to_bits()
            || e.labels.is_some() != labeled
        {
            return Err(CorpusError::Integrity(format!(
                "utterance {} disagrees with the rest of the manifest",
                e.id
            )));
        }
        data.extend(read_features(&dir.join(&e.features), e)?);
        if let (Some(all), Some(rel)) = (labels.as_mut(), e.labels.as_ref()) {
            all.extend(read_labels(&dir.join(rel), e)?);
        }
        utterances.push(Utterance {
            id: e.id.clone(),
            start,
            frames: e.frames,
        });
        start += e.frames;
    }
    let features = Matrix::from_vec(start, dims, data).map_err(|e| CorpusError::Format {
        path: dir.to_path_buf(),
        offset: 0,
        detail: e.to_string(),
    })?;
    FrameDataset::new(features, labels, n_classes, domain, language, shift, utterances)
}

#[cfg(test)]
mod tests {
    use super::super::tests::toy;
    use super::*;

    #[test]
    fn round_trip_with_and_without_labels() {
        let dir = tempfile::tempdir().unwrap();
        for (name, labeled, domain) in [("a", true, Domain::Source), ("b", false, Domain::Target)] {
            let d = toy(3, 4, domain, labeled);
            let p = dir.path().join(name);
            save_dataset(&d, &p).unwrap();
            let back = load_dataset(&p).unwrap();
            assert_eq!(back, d);
        }
    }

    #[test]
    fn truncated_feature_file_reports_offset() {
        let dir = tempfile::tempdir().unwrap();
        let d = toy(2, 4, Domain::Source, true);
        save_dataset(&d, dir.path()).unwrap();
        let f = dir.path().join("feats/u001.feat");
        let bytes = fs::read(&f).unwrap();
        fs::write(&f, &bytes[..bytes.len() - 5]).unwrap();
        match load_dataset(dir.path()) {
            Err(CorpusError::Format { offset, path, .. }) => {
                assert_eq!(offset, FEATURE_HEADER as u64);
                assert!(path.ends_with("u001.feat"));
            }
            other => panic!("expected format error, got {other:?}"),
        }
    }

    #[test]
    fn label_count_mismatch_is_integrity_error() {
        let dir = tempfile::tempdir().unwrap();
        let d = toy(1, 4, Domain::Source, true);
        save_dataset(&d, dir.path()).unwrap();
        let f = dir.path().join("labels/u000.lab");
        let mut bytes = fs::read(&f).unwrap();
        bytes[8..16].copy_from_slice(&3u64.to_le_bytes());
        fs::write(&f, &bytes).unwrap();
        assert!(matches!(load_dataset(dir.path()), Err(CorpusError::Integrity(_))));
    }

    #[test]
    fn bad_manifest_line() {
        let dir = tempfile::tempdir().unwrap();
        fs::write(dir.path().join(MANIFEST_FILE), "{\"id\": 3\n").unwrap();
        assert!(matches!(load_dataset(dir.path()), Err(CorpusError::Format { .. })));
    }
}
