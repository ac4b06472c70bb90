use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{DatasetError, MotionSequence, NormStats};

pub const ARCHIVE_MAGIC: &str = "MOCAPSEQ";
pub const ARCHIVE_VERSION: u32 = 1;

/// JSON container for preprocessed sequences and the statistics used to normalize them.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SequenceArchive {
    pub magic: String,
    pub version: u32,
    pub norm_stats: Option<NormStats>,
    pub sequences: Vec<MotionSequence>,
}

impl SequenceArchive {
    pub fn new(sequences: Vec<MotionSequence>, norm_stats: Option<NormStats>) -> Self {
        Self { magic: ARCHIVE_MAGIC.into(), version: ARCHIVE_VERSION, norm_stats, sequences }
    }

    pub fn save(&self, path: &Path) -> Result<(), DatasetError> {
        let text = serde_json::to_string(self)?;
        let tmp = path.with_extension("tmp");
        fs::write(&tmp, text).map_err(|e| DatasetError::io(&tmp, e))?;
        fs::rename(&tmp, path).map_err(|e| DatasetError::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self, DatasetError> {
        let text = fs::read_to_string(path).map_err(|e| DatasetError::io(path, e))?;
        let archive: Self = serde_json::from_str(&text)?;
        if archive.magic != ARCHIVE_MAGIC {
            return Err(DatasetError::Archive(format!("bad magic {:?}", archive.magic)));
        }
        if archive.version != ARCHIVE_VERSION {
            return Err(DatasetError::Archive(format!("unsupported version {}", archive.version)));
        }
        for s in &archive.sequences {
            MotionSequence::new(s.data().to_vec(), s.normalized, None)?;
        }
        Ok(archive)
    }
}

#[cfg(test)]
mod tests {
    use super::super::fixtures;
    use super::*;

    #[test]
    fn round_trip_and_magic_check() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("seqs.json");
        let a = SequenceArchive::new(vec![fixtures::sequence(0.0), fixtures::sequence(1.0)], None);
        a.save(&path).unwrap();
        assert_eq!(SequenceArchive::load(&path).unwrap(), a);

        let text = fs::read_to_string(&path).unwrap().replace("MOCAPSEQ", "NOTMOCAP");
        fs::write(&path, text).unwrap();
        assert!(matches!(SequenceArchive::load(&path), Err(DatasetError::Archive(_))));
    }
}
