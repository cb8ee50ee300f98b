use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{Corpus, CorpusManifest, CORPUS_SCHEMA_VERSION};
use crate::codec::{decode_f64s, encode_f64s};
use crate::error::{Error, Result};
use crate::representation::{FeatureSequence, GroundTruthSegment};
use crate::Matrix;

pub const MANIFEST_FILE: &str = "manifest.json";

/// One JSON-Lines record.
#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct VideoRecord {
    video_id: String,
    clip_stride_seconds: f64,
    num_clips: usize,
    feature_dim: usize,
    features: String,
    annotations: Vec<GroundTruthSegment>,
}

fn write_split(path: &Path, videos: &[FeatureSequence]) -> Result<()> {
    let mut out = BufWriter::new(fs::File::create(path)?);
    for v in videos {
        let rec = VideoRecord {
            video_id: v.video_id.clone(),
            clip_stride_seconds: v.clip_stride_seconds,
            num_clips: v.features.rows(),
            feature_dim: v.features.cols(),
            features: encode_f64s(v.features.as_slice()),
            annotations: v.annotations.clone(),
        };
        serde_json::to_writer(&mut out, &rec)?;
        out.write_all(b"\n")?;
    }
    out.flush()?;
    Ok(())
}

/// Writes `manifest.json` and one JSONL file per split into `dir`.
pub fn write_corpus(corpus: &Corpus, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir)?;
    let m = &corpus.manifest;
    fs::write(dir.join(MANIFEST_FILE), serde_json::to_string_pretty(m)? + "\n")?;
    write_split(&dir.join(&m.files.train), &corpus.train)?;
    write_split(&dir.join(&m.files.test), &corpus.test)?;
    Ok(())
}

/// Parses one split file. Every record must have `feature_dim` columns and
/// annotations with class ids below `num_classes`.
pub fn read_split(path: &Path, feature_dim: usize, num_classes: usize) -> Result<Vec<FeatureSequence>> {
    let shown = path.display().to_string();
    let file = fs::File::open(path).map_err(|e| Error::NotFound(format!("{shown}: {e}")))?;
    let mut videos = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let parse_err = |reason: String| Error::Parse {
            path: shown.clone(),
            line: i + 1,
            reason,
        };
        let rec: VideoRecord = serde_json::from_str(&line).map_err(|e| parse_err(e.to_string()))?;
        if rec.feature_dim != feature_dim {
            return Err(Error::Incompatible(format!(
                "{shown}:{}: video {} has feature dim {}, manifest says {feature_dim}",
                i + 1,
                rec.video_id,
                rec.feature_dim
            )));
        }
        let values = decode_f64s(&rec.features, rec.num_clips * rec.feature_dim)
            .map_err(|r| parse_err(format!("video {}: {r}", rec.video_id)))?;
        let features = Matrix::from_vec(rec.num_clips, rec.feature_dim, values)
            .map_err(|e| parse_err(format!("video {}: {e}", rec.video_id)))?;
        if let Some(a) = rec.annotations.iter().find(|a| a.class_id >= num_classes) {
            return Err(Error::Incompatible(format!(
                "{shown}:{}: video {} uses class {} but the corpus has {num_classes} classes",
                i + 1,
                rec.video_id,
                a.class_id
            )));
        }
        let seq = FeatureSequence {
            video_id: rec.video_id,
            features,
            clip_stride_seconds: rec.clip_stride_seconds,
            annotations: rec.annotations,
        };
        seq.validate().map_err(|e| parse_err(e.to_string()))?;
        videos.push(seq);
    }
    Ok(videos)
}

pub fn read_corpus(dir: &Path) -> Result<Corpus> {
    let manifest_path = dir.join(MANIFEST_FILE);
    let text = fs::read_to_string(&manifest_path)
        .map_err(|e| Error::NotFound(format!("{}: {e}", manifest_path.display())))?;
    let manifest: CorpusManifest = serde_json::from_str(&text).map_err(|e| Error::Corrupt {
        path: manifest_path.display().to_string(),
        reason: e.to_string(),
    })?;
    if manifest.schema_version != CORPUS_SCHEMA_VERSION {
        return Err(Error::SchemaVersion {
            found: manifest.schema_version,
            expected: CORPUS_SCHEMA_VERSION,
        });
    }
    let prototypes = manifest.prototypes.decode().map_err(|reason| Error::Corrupt {
        path: manifest_path.display().to_string(),
        reason,
    })?;
    let c = manifest.num_classes();
    let train = read_split(&dir.join(&manifest.files.train), manifest.feature_dim, c)?;
    let test = read_split(&dir.join(&manifest.files.test), manifest.feature_dim, c)?;
    Ok(Corpus {
        manifest,
        prototypes,
        train,
        test,
    })
}
