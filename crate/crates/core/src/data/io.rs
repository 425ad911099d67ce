use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{rdt, sort_detections, Detection, ObjectAnnotation, RadarSequence, SceneLabel};
use crate::error::{Error, Result};

pub const FRAMES_FILE: &str = "frames.rdt";
pub const META_FILE: &str = "meta.json";
pub const ANNOTATIONS_FILE: &str = "annotations.csv";

/// Sidecar metadata stored next to the frame tensor.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SequenceMeta {
    pub sequence_id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scene: Option<SceneLabel>,
    pub grid_size: usize,
    pub num_frames: usize,
    #[serde(default = "super::default_class_names")]
    pub classes: Vec<String>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SequenceRecord {
    pub sequence: RadarSequence,
    pub annotations: Option<Vec<ObjectAnnotation>>,
    pub meta: SequenceMeta,
}

/// Write `bytes` to a temporary sibling and rename it over `path`.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let tmp = tmp_path(path);
    let mut f = fs::File::create(&tmp).map_err(|e| Error::io(&tmp, e))?;
    f.write_all(bytes).map_err(|e| Error::io(&tmp, e))?;
    f.sync_all().map_err(|e| Error::io(&tmp, e))?;
    drop(f);
    fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

fn tmp_path(path: &Path) -> PathBuf {
    let mut name = path
        .file_name()
        .map(|n| n.to_os_string())
        .unwrap_or_default();
    name.push(".tmp");
    path.with_file_name(name)
}

pub fn write_sequence(
    seq: &RadarSequence,
    annotations: Option<&[ObjectAnnotation]>,
    classes: &[String],
    dir: &Path,
) -> Result<()> {
    if seq.is_empty() {
        return Err(Error::InvalidArgument(format!(
            "sequence {} has no frames",
            seq.sequence_id()
        )));
    }
    let grid = seq.grid_size().unwrap_or(0);
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    rdt::write_file(&dir.join(FRAMES_FILE), &seq.to_tensor()?)?;
    if let Some(anns) = annotations {
        validate_annotations(anns, grid, seq.len(), classes.len())?;
        write_annotations_csv(&dir.join(ANNOTATIONS_FILE), anns)?;
    }
    let meta = SequenceMeta {
        sequence_id: seq.sequence_id().to_string(),
        scene: seq.scene(),
        grid_size: grid,
        num_frames: seq.len(),
        classes: classes.to_vec(),
    };
    let json = serde_json::to_vec_pretty(&meta).expect("sidecar serializes");
    write_atomic(&dir.join(META_FILE), &json)
}

pub fn read_meta(dir: &Path) -> Result<SequenceMeta> {
    let p = dir.join(META_FILE);
    let text = fs::read_to_string(&p).map_err(|e| Error::io(&p, e))?;
    serde_json::from_str(&text).map_err(|e| Error::Format(format!("{}: {e}", p.display())))
}

pub fn read_sequence(dir: &Path) -> Result<SequenceRecord> {
    let meta = read_meta(dir)?;
    let tensor = rdt::read_file(&dir.join(FRAMES_FILE))?;
    let d = tensor.dims();
    if d.len() != 4 || d[0] != meta.num_frames || d[2] != meta.grid_size || d[3] != meta.grid_size {
        return Err(Error::Shape(format!(
            "frames tensor {:?} disagrees with sidecar (frames {}, grid {})",
            d, meta.num_frames, meta.grid_size
        )));
    }
    let sequence = RadarSequence::from_tensor(meta.sequence_id.clone(), meta.scene, &tensor)?;
    let ann_path = dir.join(ANNOTATIONS_FILE);
    let annotations = if ann_path.exists() {
        let anns = read_annotations_csv(&ann_path)?;
        validate_annotations(&anns, meta.grid_size, meta.num_frames, meta.classes.len())?;
        Some(anns)
    } else {
        None
    };
    Ok(SequenceRecord {
        sequence,
        annotations,
        meta,
    })
}

pub(crate) fn validate_annotations(
    anns: &[ObjectAnnotation],
    grid: usize,
    num_frames: usize,
    num_classes: usize,
) -> Result<()> {
    for a in anns {
        if a.range_idx >= grid || a.azimuth_idx >= grid {
            return Err(Error::OutOfBounds(format!(
                "annotation at (range {}, azimuth {}) outside grid {grid}",
                a.range_idx, a.azimuth_idx
            )));
        }
        if a.frame_index >= num_frames {
            return Err(Error::OutOfBounds(format!(
                "annotation frame {} beyond {num_frames} frames",
                a.frame_index
            )));
        }
        if a.class_id >= num_classes {
            return Err(Error::OutOfBounds(format!(
                "annotation class {} beyond {num_classes} classes",
                a.class_id
            )));
        }
    }
    Ok(())
}

#[derive(Serialize, Deserialize)]
struct AnnotationRow {
    frame: usize,
    class: usize,
    range: usize,
    azimuth: usize,
}

#[derive(Serialize, Deserialize)]
struct DetectionRow {
    frame: usize,
    class: usize,
    range: usize,
    azimuth: usize,
    confidence: f32,
}

fn csv_err(path: &Path, e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::io(path, io),
        other => Error::Format(format!("{}: {other:?}", path.display())),
    }
}

fn write_rows<T: Serialize>(path: &Path, header: &[&str], rows: impl Iterator<Item = T>) -> Result<()> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(Vec::new());
    w.write_record(header).map_err(|e| csv_err(path, e))?;
    for r in rows {
        w.serialize(r).map_err(|e| csv_err(path, e))?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Format(e.to_string()))?;
    write_atomic(path, &bytes)
}

fn read_rows<T: for<'de> Deserialize<'de>>(path: &Path, header: &[&str]) -> Result<Vec<T>> {
    let mut r = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| csv_err(path, e))?;
    let got = r.headers().map_err(|e| csv_err(path, e))?.clone();
    if got.iter().collect::<Vec<_>>() != header {
        return Err(Error::Format(format!(
            "{}: expected header {:?}, got {:?}",
            path.display(),
            header.join(","),
            got.iter().collect::<Vec<_>>().join(",")
        )));
    }
    r.deserialize().map(|row| row.map_err(|e| csv_err(path, e))).collect()
}

pub fn write_annotations_csv(path: &Path, anns: &[ObjectAnnotation]) -> Result<()> {
    write_rows(
        path,
        &["frame", "class", "range", "azimuth"],
        anns.iter().map(|a| AnnotationRow {
            frame: a.frame_index,
            class: a.class_id,
            range: a.range_idx,
            azimuth: a.azimuth_idx,
        }),
    )
}

pub fn read_annotations_csv(path: &Path) -> Result<Vec<ObjectAnnotation>> {
    let rows: Vec<AnnotationRow> = read_rows(path, &["frame", "class", "range", "azimuth"])?;
    Ok(rows
        .into_iter()
        .map(|r| ObjectAnnotation {
            frame_index: r.frame,
            class_id: r.class,
            range_idx: r.range,
            azimuth_idx: r.azimuth,
        })
        .collect())
}

/// Writes `frame,class,range,azimuth,confidence` sorted by frame then
/// descending confidence.
pub fn write_detections_csv(path: &Path, dets: &[Detection]) -> Result<()> {
    let mut sorted = dets.to_vec();
    sort_detections(&mut sorted);
    write_rows(
        path,
        &["frame", "class", "range", "azimuth", "confidence"],
        sorted.iter().map(|d| DetectionRow {
            frame: d.frame_index,
            class: d.class_id,
            range: d.range_idx,
            azimuth: d.azimuth_idx,
            confidence: d.confidence,
        }),
    )
}

pub fn read_detections_csv(path: &Path) -> Result<Vec<Detection>> {
    let rows: Vec<DetectionRow> =
        read_rows(path, &["frame", "class", "range", "azimuth", "confidence"])?;
    rows.into_iter()
        .map(|r| {
            if !(0.0..=1.0).contains(&r.confidence) {
                return Err(Error::Format(format!(
                    "{}: confidence {} outside [0, 1]",
                    path.display(),
                    r.confidence
                )));
            }
            Ok(Detection {
                frame_index: r.frame,
                class_id: r.class,
                range_idx: r.range,
                azimuth_idx: r.azimuth,
                confidence: r.confidence,
            })
        })
        .collect()
}
