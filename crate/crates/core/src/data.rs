//! Dataset manifests, label matrices and feature loading.
//!
//! Manifests are tab-separated with a header row:
//!
//! * strong: `filename  onset  offset  event_label` (a clip without events
//!   has empty onset, offset and label columns)
//! * weak: `filename  event_labels` (comma-separated)
//! * unlabeled: `filename`

use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;

use crate::error::{Result, SedError};
use crate::eval::Event;
use crate::frontend::{read_wav, FrontendConfig, LogMel};

fn manifest_err(path: &Path, line: usize, detail: impl Into<String>) -> SedError {
    SedError::Manifest {
        path: path.to_path_buf(),
        line,
        detail: detail.into(),
    }
}

fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| SedError::io(path, e))
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(|e| SedError::io(dir, e))?;
    }
    fs::write(path, text).map_err(|e| SedError::io(path, e))
}

/// Data lines with their 1-based line numbers, header and blanks skipped.
fn data_lines(text: &str) -> impl Iterator<Item = (usize, &str)> {
    text.lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim_end_matches('\r')))
        .filter(|(i, l)| !(l.trim().is_empty() || (*i == 1 && l.starts_with("filename"))))
}

/// Ordered class vocabulary.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ClassMap {
    names: Vec<String>,
}

impl ClassMap {
    pub fn new(names: Vec<String>) -> Result<Self> {
        for (i, n) in names.iter().enumerate() {
            if n.is_empty() || n.contains(['\t', ',']) || names[..i].contains(n) {
                return Err(SedError::Invalid(format!("bad or duplicate class name `{}`", n)));
            }
        }
        Ok(Self { names })
    }

    pub fn read(path: &Path) -> Result<Self> {
        let names = read_text(path)?
            .lines()
            .map(str::trim)
            .filter(|l| !l.is_empty())
            .map(String::from)
            .collect();
        Self::new(names)
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        write_text(path, &(self.names.join("\n") + "\n"))
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn name(&self, i: usize) -> &str {
        &self.names[i]
    }

    pub fn index(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }
}

/// One clip with its strong annotations.
#[derive(Clone, Debug, PartialEq)]
pub struct StrongClip {
    pub file: String,
    pub events: Vec<Event>,
}

/// Parses a strong manifest. Clips keep their first-appearance order.
pub fn read_strong(path: &Path, classes: &ClassMap) -> Result<Vec<StrongClip>> {
    let text = read_text(path)?;
    let mut clips: Vec<StrongClip> = Vec::new();
    for (ln, line) in data_lines(&text) {
        let cols: Vec<&str> = line.split('\t').collect();
        if cols.len() != 4 {
            return Err(manifest_err(path, ln, format!("expected 4 columns, found {}", cols.len())));
        }
        let file = cols[0].to_string();
        if file.is_empty() {
            return Err(manifest_err(path, ln, "empty filename"));
        }
        let at = match clips.iter().position(|c| c.file == file) {
            Some(i) => i,
            None => {
                clips.push(StrongClip {
                    file: file.clone(),
                    events: Vec::new(),
                });
                clips.len() - 1
            }
        };
        if cols[1..].iter().all(|c| c.is_empty()) {
            continue;
        }
        let num = |s: &str| s.parse::<f64>().map_err(|_| manifest_err(path, ln, format!("bad time `{}`", s)));
        let (onset, offset) = (num(cols[1])?, num(cols[2])?);
        if !(onset >= 0.0 && offset > onset) {
            return Err(manifest_err(path, ln, format!("bad interval {}..{}", onset, offset)));
        }
        let class = classes
            .index(cols[3])
            .ok_or_else(|| manifest_err(path, ln, format!("unknown class `{}`", cols[3])))?;
        clips[at].events.push(Event {
            file,
            class,
            onset,
            offset,
        });
    }
    Ok(clips)
}

pub fn write_strong(path: &Path, clips: &[StrongClip], classes: &ClassMap) -> Result<()> {
    let mut out = String::from("filename\tonset\toffset\tevent_label\n");
    for c in clips {
        if c.events.is_empty() {
            out.push_str(&format!("{}\t\t\t\n", c.file));
        }
        for e in &c.events {
            out.push_str(&format!("{}\t{:.3}\t{:.3}\t{}\n", c.file, e.onset, e.offset, classes.name(e.class)));
        }
    }
    write_text(path, &out)
}

/// Parses a weak manifest into `(file, class indices)`.
pub fn read_weak(path: &Path, classes: &ClassMap) -> Result<Vec<(String, Vec<usize>)>> {
    let text = read_text(path)?;
    let mut out = Vec::new();
    for (ln, line) in data_lines(&text) {
        let (file, labels) = line.split_once('\t').unwrap_or((line, ""));
        if file.is_empty() {
            return Err(manifest_err(path, ln, "empty filename"));
        }
        let mut idx = Vec::new();
        for l in labels.split(',').map(str::trim).filter(|l| !l.is_empty()) {
            let c = classes
                .index(l)
                .ok_or_else(|| manifest_err(path, ln, format!("unknown class `{}`", l)))?;
            if !idx.contains(&c) {
                idx.push(c);
            }
        }
        idx.sort_unstable();
        out.push((file.to_string(), idx));
    }
    Ok(out)
}

pub fn write_weak(path: &Path, rows: &[(String, Vec<usize>)], classes: &ClassMap) -> Result<()> {
    let mut out = String::from("filename\tevent_labels\n");
    for (f, idx) in rows {
        let names: Vec<&str> = idx.iter().map(|&c| classes.name(c)).collect();
        out.push_str(&format!("{}\t{}\n", f, names.join(",")));
    }
    write_text(path, &out)
}

pub fn read_unlabeled(path: &Path) -> Result<Vec<String>> {
    let text = read_text(path)?;
    Ok(data_lines(&text)
        .map(|(_, l)| l.split('\t').next().unwrap_or("").to_string())
        .filter(|f| !f.is_empty())
        .collect())
}

pub fn write_unlabeled(path: &Path, files: &[String]) -> Result<()> {
    let mut out = String::from("filename\n");
    for f in files {
        out.push_str(f);
        out.push('\n');
    }
    write_text(path, &out)
}

/// Frame-level targets `[classes, n_frames]`: frame `i` is active when it
/// intersects the event, i.e. `floor(onset/fs) <= i < ceil(offset/fs)`.
pub fn strong_label_matrix(events: &[Event], classes: usize, n_frames: usize, frame_seconds: f64) -> Vec<f64> {
    let mut y = vec![0.0; classes * n_frames];
    for e in events {
        let a = ((e.onset / frame_seconds).floor().max(0.0) as usize).min(n_frames);
        let b = ((e.offset / frame_seconds).ceil().max(0.0) as usize).min(n_frames);
        y[e.class * n_frames + a..e.class * n_frames + b].iter_mut().for_each(|v| *v = 1.0);
    }
    y
}

/// Max over consecutive windows of `factor` frames; trailing frames that do
/// not fill a window are dropped, as the network's pooling does.
pub fn pool_labels(labels: &[f64], classes: usize, factor: usize) -> Vec<f64> {
    let t = labels.len() / classes.max(1);
    let tp = t / factor.max(1);
    let mut out = Vec::with_capacity(classes * tp);
    for row in labels.chunks(t.max(1)).take(classes) {
        for j in 0..tp {
            out.push(row[j * factor..(j + 1) * factor].iter().copied().fold(0.0, f64::max));
        }
    }
    out
}

pub fn weak_label_vector(present: &[usize], classes: usize) -> Vec<f64> {
    let mut y = vec![0.0; classes];
    present.iter().for_each(|&c| y[c] = 1.0);
    y
}

/// Normalized, length-fixed log-mel features `[n_mels, frames]` per file.
pub fn load_features(dir: &Path, files: &[String], frontend: &FrontendConfig) -> Result<Vec<Vec<f64>>> {
    let lm = LogMel::new(frontend.clone())?;
    files
        .par_iter()
        .map(|f| {
            let path = dir.join(f);
            let wav = read_wav(&path, frontend.sample_rate)?;
            Ok(lm.clip_features(&wav)?.into_data())
        })
        .collect()
}

/// One training or evaluation clip.
#[derive(Clone, Debug)]
pub struct Clip {
    pub file: String,
    /// `[n_mels, frames]`
    pub features: Vec<f64>,
    /// Pooled frame targets `[classes, frames / time_pool]`.
    pub strong: Option<Vec<f64>>,
    /// Clip targets `[classes]`.
    pub weak: Option<Vec<f64>>,
}

/// Standard directory layout produced by the synthesizer.
#[derive(Clone, Debug)]
pub struct DataLayout {
    pub root: PathBuf,
}

impl DataLayout {
    pub fn new(root: &Path) -> Self {
        Self { root: root.to_path_buf() }
    }

    pub fn classes(&self) -> PathBuf {
        self.root.join("classes.txt")
    }

    pub fn manifest(&self, name: &str) -> PathBuf {
        self.root.join(format!("{}.tsv", name))
    }

    pub fn audio(&self, split: &str) -> PathBuf {
        self.root.join("audio").join(split)
    }
}

/// Label geometry shared by the loaders.
#[derive(Clone, Copy, Debug)]
pub struct LabelGrid {
    pub classes: usize,
    pub frames: usize,
    pub frame_seconds: f64,
    pub time_pool: usize,
}

impl LabelGrid {
    pub fn pooled_frames(&self) -> usize {
        self.frames / self.time_pool
    }

    pub fn pooled_seconds(&self) -> f64 {
        self.frame_seconds * self.time_pool as f64
    }
}

pub fn strong_clips(dir: &Path, manifest: &[StrongClip], fe: &FrontendConfig, grid: LabelGrid) -> Result<Vec<Clip>> {
    let files: Vec<String> = manifest.iter().map(|c| c.file.clone()).collect();
    let feats = load_features(dir, &files, fe)?;
    Ok(manifest
        .iter()
        .zip(feats)
        .map(|(c, features)| {
            let y = strong_label_matrix(&c.events, grid.classes, grid.frames, grid.frame_seconds);
            Clip {
                file: c.file.clone(),
                features,
                strong: Some(pool_labels(&y, grid.classes, grid.time_pool)),
                weak: None,
            }
        })
        .collect())
}

pub fn weak_clips(dir: &Path, rows: &[(String, Vec<usize>)], fe: &FrontendConfig, classes: usize) -> Result<Vec<Clip>> {
    let files: Vec<String> = rows.iter().map(|r| r.0.clone()).collect();
    let feats = load_features(dir, &files, fe)?;
    Ok(rows
        .iter()
        .zip(feats)
        .map(|((f, idx), features)| Clip {
            file: f.clone(),
            features,
            strong: None,
            weak: Some(weak_label_vector(idx, classes)),
        })
        .collect())
}

pub fn unlabeled_clips(dir: &Path, files: &[String], fe: &FrontendConfig) -> Result<Vec<Clip>> {
    let feats = load_features(dir, files, fe)?;
    Ok(files
        .iter()
        .zip(feats)
        .map(|(f, features)| Clip {
            file: f.clone(),
            features,
            strong: None,
            weak: None,
        })
        .collect())
}

/// Evaluation split: features plus reference events.
#[derive(Clone, Debug)]
pub struct EvalSet {
    pub files: Vec<String>,
    pub features: Vec<Vec<f64>>,
    pub truth: Vec<Event>,
    pub hours: f64,
}

pub fn eval_set(dir: &Path, manifest: &[StrongClip], fe: &FrontendConfig) -> Result<EvalSet> {
    let files: Vec<String> = manifest.iter().map(|c| c.file.clone()).collect();
    let features = load_features(dir, &files, fe)?;
    Ok(EvalSet {
        hours: files.len() as f64 * fe.clip_seconds / 3600.0,
        files,
        features,
        truth: manifest.iter().flat_map(|c| c.events.iter().cloned()).collect(),
    })
}

/// Writes detections as `filename onset offset event_label`.
pub fn write_predictions(path: &Path, events: &[Event], classes: &ClassMap) -> Result<()> {
    let mut out = String::from("filename\tonset\toffset\tevent_label\n");
    for e in events {
        out.push_str(&format!("{}\t{:.3}\t{:.3}\t{}\n", e.file, e.onset, e.offset, classes.name(e.class)));
    }
    write_text(path, &out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn classes() -> ClassMap {
        ClassMap::new(vec!["a".into(), "b".into()]).unwrap()
    }

    #[test]
    fn strong_manifest_roundtrip_keeps_empty_clips() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("s.tsv");
        let clips = vec![
            StrongClip {
                file: "x.wav".into(),
                events: vec![Event {
                    file: "x.wav".into(),
                    class: 1,
                    onset: 0.5,
                    offset: 1.25,
                }],
            },
            StrongClip {
                file: "y.wav".into(),
                events: vec![],
            },
        ];
        write_strong(&p, &clips, &classes()).unwrap();
        assert_eq!(read_strong(&p, &classes()).unwrap(), clips);
    }

    #[test]
    fn manifest_errors_carry_line_numbers() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("s.tsv");
        fs::write(&p, "filename\tonset\toffset\tevent_label\nx.wav\t0\t1\tzzz\n").unwrap();
        match read_strong(&p, &classes()) {
            Err(SedError::Manifest { line, .. }) => assert_eq!(line, 2),
            other => panic!("{:?}", other),
        }
        assert!(read_strong(&dir.path().join("none.tsv"), &classes()).unwrap_err().is_io());
    }

    #[test]
    fn weak_manifest_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("w.tsv");
        let rows = vec![("x.wav".to_string(), vec![0, 1]), ("y.wav".to_string(), vec![])];
        write_weak(&p, &rows, &classes()).unwrap();
        assert_eq!(read_weak(&p, &classes()).unwrap(), rows);
    }

    #[test]
    fn label_matrix_and_pooling() {
        let e = Event {
            file: "x".into(),
            class: 0,
            onset: 0.05,
            offset: 0.35,
        };
        let y = strong_label_matrix(&[e], 1, 10, 0.1);
        assert_eq!(y, vec![1.0, 1.0, 1.0, 1.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0]);
        assert_eq!(pool_labels(&y, 1, 4), vec![1.0, 0.0]);
        assert_eq!(pool_labels(&[0.0, 0.0, 0.0, 1.0, 0.0], 1, 2), vec![0.0, 1.0]);
    }
}
