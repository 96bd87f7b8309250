//! Corpus export/import: JSON header, raw little-endian `f32` pixel blob,
//! JSON label/box list.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{Corpus, DatasetError, LabeledImage, IMAGE_SIDE};

pub const CORPUS_FORMAT: &str = "tascom-corpus/1";

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct CorpusHeader {
    pub format: String,
    pub count: usize,
    /// `[height, width]`, single channel.
    pub shape: [usize; 2],
    pub classes: usize,
    pub seed: u64,
    pub noise_level: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct LabelRecord {
    pub label: usize,
    pub object_box: Vec<usize>,
}

/// Writes `header.json`, `pixels.bin` and `labels.json` into `dir`.
pub fn export_corpus(corpus: &Corpus, dir: &Path) -> Result<(), DatasetError> {
    fs::create_dir_all(dir)?;
    let header = CorpusHeader {
        format: CORPUS_FORMAT.into(),
        count: corpus.len(),
        shape: [IMAGE_SIDE, IMAGE_SIDE],
        classes: corpus.class_count,
        seed: corpus.seed,
        noise_level: corpus.noise_level,
    };
    let mut blob = Vec::with_capacity(corpus.len() * IMAGE_SIDE * IMAGE_SIDE * 4);
    for img in &corpus.images {
        for p in &img.pixels {
            blob.extend_from_slice(&(*p as f32).to_le_bytes());
        }
    }
    let labels: Vec<LabelRecord> = corpus
        .images
        .iter()
        .map(|i| LabelRecord {
            label: i.label,
            object_box: i.object_box.clone(),
        })
        .collect();
    fs::write(dir.join("header.json"), serde_json::to_vec_pretty(&header)?)?;
    fs::write(dir.join("pixels.bin"), blob)?;
    fs::write(dir.join("labels.json"), serde_json::to_vec(&labels)?)?;
    Ok(())
}

pub fn import_corpus(dir: &Path) -> Result<Corpus, DatasetError> {
    let header: CorpusHeader = serde_json::from_slice(&fs::read(dir.join("header.json"))?)?;
    if header.format != CORPUS_FORMAT || header.shape != [IMAGE_SIDE, IMAGE_SIDE] {
        return Err(DatasetError::Format(format!(
            "unsupported corpus {:?} with shape {:?}",
            header.format, header.shape
        )));
    }
    let blob = fs::read(dir.join("pixels.bin"))?;
    let labels: Vec<LabelRecord> = serde_json::from_slice(&fs::read(dir.join("labels.json"))?)?;
    let per_image = IMAGE_SIDE * IMAGE_SIDE;
    if blob.len() != header.count * per_image * 4 || labels.len() != header.count {
        return Err(DatasetError::Format("pixel blob or label list size mismatch".into()));
    }
    let images = blob
        .chunks_exact(per_image * 4)
        .zip(labels)
        .map(|(chunk, rec)| LabeledImage {
            pixels: chunk
                .chunks_exact(4)
                .map(|b| f32::from_le_bytes(b.try_into().expect("4 bytes")) as f64)
                .collect(),
            label: rec.label,
            object_box: rec.object_box,
        })
        .collect();
    Ok(Corpus {
        seed: header.seed,
        class_count: header.classes,
        noise_level: header.noise_level,
        images,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::generate_corpus;

    #[test]
    fn export_import_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let c = generate_corpus(5, 12, 3, 0.05).unwrap();
        export_corpus(&c, dir.path()).unwrap();
        let back = import_corpus(dir.path()).unwrap();
        assert_eq!(c, back);
    }
}
