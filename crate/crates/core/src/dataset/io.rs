use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde_json::{Map, Value};

use super::{DatasetError, Frame, Marker, MotionSequence, Trial, TrialMeta, FEATURES};

/// Canonical CSV header columns: `marker0_x .. marker14_z, bowl_x, bowl_y, bowl_z`.
pub fn column_names() -> Vec<String> {
    let mut out = Vec::with_capacity(FEATURES);
    for m in Marker::ALL {
        for axis in ["x", "y", "z"] {
            if m == Marker::Bowl {
                out.push(format!("bowl_{axis}"));
            } else {
                out.push(format!("marker{}_{axis}", m.index()));
            }
        }
    }
    out
}

/// Outcome of scanning a trial directory.
#[derive(Debug, Default)]
pub struct LoadReport {
    pub trials: Vec<Trial>,
    /// Trial ids dropped because the C7 column is absent or empty.
    pub skipped_missing_c7: Vec<String>,
    pub failures: Vec<(PathBuf, DatasetError)>,
}

/// Loads every `*.csv` trial (with its `*.json` sidecar) in `dir`, in file-name order.
pub fn load_trials(dir: &Path) -> Result<LoadReport, DatasetError> {
    let mut csvs: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(|e| DatasetError::io(dir, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "csv"))
        .collect();
    csvs.sort();

    let mut report = LoadReport::default();
    for path in csvs {
        let id = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
        match load_trial(&path) {
            Ok(t) => report.trials.push(t),
            Err(DatasetError::MissingC7) => report.skipped_missing_c7.push(id),
            Err(e) => report.failures.push((path, e)),
        }
    }
    Ok(report)
}

/// Loads one trial from `path` (CSV) and the sidecar JSON next to it.
pub fn load_trial(path: &Path) -> Result<Trial, DatasetError> {
    let text = fs::read_to_string(path).map_err(|e| DatasetError::io(path, e))?;
    let frames = parse_frames(&text, &path.display().to_string())?;
    let meta_path = path.with_extension("json");
    let meta_text = fs::read_to_string(&meta_path).map_err(|e| DatasetError::io(&meta_path, e))?;
    let meta = parse_meta(&meta_text)?;
    let id = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    Trial::new(id, meta, frames)
}

fn parse_frames(text: &str, file: &str) -> Result<Vec<Frame>, DatasetError> {
    let malformed = |line: usize, message: String| DatasetError::Malformed { file: file.to_string(), line, message };
    let mut lines = text.lines().enumerate();
    let header = match lines.next() {
        Some((_, h)) => h,
        None => return Err(malformed(1, "missing header".into())),
    };
    let names: Vec<&str> = header.split(',').map(str::trim).collect();
    let canonical = column_names();
    let c7: Vec<&str> = canonical[Marker::C7.column()..Marker::C7.column() + 3].iter().map(String::as_str).collect();
    let has_c7 = c7.iter().all(|c| names.contains(c));
    if !has_c7 {
        if c7.iter().any(|c| names.contains(c)) {
            return Err(malformed(1, "partial C7 columns".into()));
        }
        return Err(DatasetError::MissingC7);
    }
    if names.len() != FEATURES || names.iter().zip(&canonical).any(|(a, b)| a != b) {
        return Err(malformed(1, format!("unexpected header, want {}", canonical.join(","))));
    }

    let mut frames = Vec::new();
    for (i, line) in lines {
        let lineno = i + 1;
        if line.trim().is_empty() {
            continue;
        }
        let cells: Vec<&str> = line.split(',').collect();
        if cells.len() != FEATURES {
            return Err(malformed(lineno, format!("expected {FEATURES} columns, found {}", cells.len())));
        }
        let mut frame = [0.0; FEATURES];
        for (j, cell) in cells.iter().enumerate() {
            let cell = cell.trim();
            if cell.is_empty() {
                if (Marker::C7.column()..Marker::C7.column() + 3).contains(&j) {
                    return Err(DatasetError::MissingC7);
                }
                return Err(malformed(lineno, format!("empty value in column {}", canonical[j])));
            }
            frame[j] = cell
                .parse()
                .map_err(|_| malformed(lineno, format!("bad number {cell:?} in column {}", canonical[j])))?;
        }
        frames.push(frame);
    }
    Ok(frames)
}

fn field<T: DeserializeOwned>(map: &Map<String, Value>, name: &str) -> Result<T, DatasetError> {
    let v = map.get(name).ok_or_else(|| DatasetError::MissingField(name.into()))?;
    serde_json::from_value(v.clone())
        .map_err(|_| DatasetError::UnknownValue { field: name.into(), value: v.to_string() })
}

fn parse_meta(text: &str) -> Result<TrialMeta, DatasetError> {
    let value: Value = serde_json::from_str(text)?;
    let map = value
        .as_object()
        .ok_or_else(|| DatasetError::UnknownValue { field: "<root>".into(), value: value.to_string() })?;
    Ok(TrialMeta {
        participant: field(map, "participant")?,
        bowl_size: field(map, "bowl_size")?,
        weight: field(map, "weight_g")?,
        balance: field(map, "balance")?,
        orientation: field(map, "orientation")?,
        strategy: field(map, "strategy")?,
        frame_rate: field(map, "frame_rate")?,
    })
}

fn frames_to_csv<'a>(frames: impl Iterator<Item = &'a [f64]>) -> String {
    let mut out = column_names().join(",");
    out.push('\n');
    for f in frames {
        for (j, v) in f.iter().enumerate() {
            if j > 0 {
                out.push(',');
            }
            write!(out, "{v}").unwrap();
        }
        out.push('\n');
    }
    out
}

/// Writes `dir/<id>.csv` and `dir/<id>.json` in canonical form.
pub fn write_trial(trial: &Trial, dir: &Path) -> Result<PathBuf, DatasetError> {
    let csv_path = dir.join(format!("{}.csv", trial.id));
    let json_path = dir.join(format!("{}.json", trial.id));
    fs::write(&csv_path, frames_to_csv(trial.frames.iter().map(|f| &f[..])))
        .map_err(|e| DatasetError::io(&csv_path, e))?;
    let mut meta = serde_json::to_string_pretty(&trial.meta)?;
    meta.push('\n');
    fs::write(&json_path, meta).map_err(|e| DatasetError::io(&json_path, e))?;
    Ok(csv_path)
}

/// Writes a sequence's 32 frames using the trial CSV layout.
pub fn write_sequence_csv(seq: &MotionSequence, path: &Path) -> Result<(), DatasetError> {
    fs::write(path, frames_to_csv(seq.data().chunks(FEATURES))).map_err(|e| DatasetError::io(path, e))
}

pub fn read_sequence_csv(path: &Path) -> Result<MotionSequence, DatasetError> {
    let text = fs::read_to_string(path).map_err(|e| DatasetError::io(path, e))?;
    let frames = parse_frames(&text, &path.display().to_string())?;
    MotionSequence::from_frames(&frames, false, None)
}
