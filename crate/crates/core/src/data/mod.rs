//! Radar sequences, snippets, annotations, ConfMaps and detections.

mod io;
pub mod rdt;

pub use io::{
    read_annotations_csv, read_detections_csv, read_sequence, write_annotations_csv,
    write_atomic, write_detections_csv, write_sequence, SequenceMeta, SequenceRecord,
    ANNOTATIONS_FILE, FRAMES_FILE, META_FILE,
};

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Number of RF channels (real and imaginary part of the RAMap).
pub const RF_CHANNELS: usize = 2;

pub const DEFAULT_GRID_SIZE: usize = 128;

pub fn default_class_names() -> Vec<String> {
    ["pedestrian", "cyclist", "car"]
        .iter()
        .map(|s| s.to_string())
        .collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SceneLabel {
    Static,
    Dynamic,
}

impl SceneLabel {
    pub const ALL: [SceneLabel; 2] = [SceneLabel::Static, SceneLabel::Dynamic];

    pub fn as_str(self) -> &'static str {
        match self {
            SceneLabel::Static => "static",
            SceneLabel::Dynamic => "dynamic",
        }
    }

    /// Index used by the two-way scene classifier head.
    pub fn class_index(self) -> usize {
        match self {
            SceneLabel::Static => 0,
            SceneLabel::Dynamic => 1,
        }
    }

    pub fn from_class_index(i: usize) -> Option<SceneLabel> {
        match i {
            0 => Some(SceneLabel::Static),
            1 => Some(SceneLabel::Dynamic),
            _ => None,
        }
    }
}

impl fmt::Display for SceneLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for SceneLabel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "static" => Ok(SceneLabel::Static),
            "dynamic" => Ok(SceneLabel::Dynamic),
            other => Err(Error::Format(format!("unknown scene label {other:?}"))),
        }
    }
}

/// One RAMap frame, dims `(2, W, H)`: azimuth along W, range along H.
#[derive(Clone, Debug, PartialEq)]
pub struct RadarFrame {
    data: Tensor<f32>,
    frame_index: usize,
}

impl RadarFrame {
    pub fn new(data: Tensor<f32>, frame_index: usize) -> Result<Self> {
        let d = data.dims();
        if d.len() != 3 || d[0] != RF_CHANNELS || d[1] != d[2] || d[1] == 0 {
            return Err(Error::Shape(format!(
                "radar frame must be (2, G, G), got {d:?}"
            )));
        }
        if !data.all_finite() {
            return Err(Error::NonFinite("radar frame".into()));
        }
        Ok(RadarFrame { data, frame_index })
    }

    pub fn data(&self) -> &Tensor<f32> {
        &self.data
    }

    pub fn frame_index(&self) -> usize {
        self.frame_index
    }

    pub fn grid_size(&self) -> usize {
        self.data.dims()[1]
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct RadarSequence {
    frames: Vec<RadarFrame>,
    scene: Option<SceneLabel>,
    sequence_id: String,
}

impl RadarSequence {
    pub fn new(
        sequence_id: impl Into<String>,
        scene: Option<SceneLabel>,
        frames: Vec<RadarFrame>,
    ) -> Result<Self> {
        if let Some(first) = frames.first() {
            for (i, f) in frames.iter().enumerate() {
                if f.frame_index != i {
                    return Err(Error::Data(format!(
                        "frame indices must be contiguous from 0; position {i} has index {}",
                        f.frame_index
                    )));
                }
                if f.data.dims() != first.data.dims() {
                    return Err(Error::Shape(format!(
                        "frame {i} has dims {:?}, frame 0 has {:?}",
                        f.data.dims(),
                        first.data.dims()
                    )));
                }
            }
        }
        Ok(RadarSequence {
            frames,
            scene,
            sequence_id: sequence_id.into(),
        })
    }

    /// Build from a `(num_frames, 2, G, G)` tensor.
    pub fn from_tensor(
        sequence_id: impl Into<String>,
        scene: Option<SceneLabel>,
        tensor: &Tensor<f32>,
    ) -> Result<Self> {
        if tensor.rank() != 4 {
            return Err(Error::Shape(format!(
                "sequence tensor must be rank 4, got {:?}",
                tensor.dims()
            )));
        }
        let frames = (0..tensor.dims()[0])
            .map(|i| RadarFrame::new(tensor.index_axis0(i), i))
            .collect::<Result<Vec<_>>>()?;
        Self::new(sequence_id, scene, frames)
    }

    pub fn to_tensor(&self) -> Result<Tensor<f32>> {
        Tensor::stack(&self.frames.iter().map(|f| &f.data).collect::<Vec<_>>())
    }

    pub fn frames(&self) -> &[RadarFrame] {
        &self.frames
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    pub fn scene(&self) -> Option<SceneLabel> {
        self.scene
    }

    pub fn sequence_id(&self) -> &str {
        &self.sequence_id
    }

    pub fn grid_size(&self) -> Option<usize> {
        self.frames.first().map(RadarFrame::grid_size)
    }
}

/// A `(2, T, W, H)` window cut from a sequence.
#[derive(Clone, Debug, PartialEq)]
pub struct RadarSnippet {
    pub data: Tensor<f32>,
    pub source_sequence: String,
    pub start_frame: usize,
    pub scene: Option<SceneLabel>,
}

impl RadarSnippet {
    pub fn new(
        data: Tensor<f32>,
        source_sequence: impl Into<String>,
        start_frame: usize,
        scene: Option<SceneLabel>,
    ) -> Result<Self> {
        let d = data.dims();
        if d.len() != 4 || d[0] != RF_CHANNELS || d[1] == 0 {
            return Err(Error::Shape(format!(
                "snippet must be (2, T, W, H) with T >= 1, got {d:?}"
            )));
        }
        if !data.all_finite() {
            return Err(Error::NonFinite("radar snippet".into()));
        }
        Ok(RadarSnippet {
            data,
            source_sequence: source_sequence.into(),
            start_frame,
            scene,
        })
    }

    pub fn window(&self) -> usize {
        self.data.dims()[1]
    }

    pub fn grid_size(&self) -> usize {
        self.data.dims()[2]
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ObjectAnnotation {
    pub frame_index: usize,
    pub class_id: usize,
    pub range_idx: usize,
    pub azimuth_idx: usize,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Detection {
    pub frame_index: usize,
    pub class_id: usize,
    pub range_idx: usize,
    pub azimuth_idx: usize,
    pub confidence: f32,
}

impl Detection {
    pub fn annotation(&self) -> ObjectAnnotation {
        ObjectAnnotation {
            frame_index: self.frame_index,
            class_id: self.class_id,
            range_idx: self.range_idx,
            azimuth_idx: self.azimuth_idx,
        }
    }

    /// Descending confidence, then `(class, range, azimuth)` ascending.
    pub fn rank_cmp(&self, other: &Detection) -> std::cmp::Ordering {
        other
            .confidence
            .total_cmp(&self.confidence)
            .then(self.class_id.cmp(&other.class_id))
            .then(self.range_idx.cmp(&other.range_idx))
            .then(self.azimuth_idx.cmp(&other.azimuth_idx))
    }
}

/// Sort detections by `(frame, descending confidence, class, range, azimuth)`.
pub fn sort_detections(dets: &mut [Detection]) {
    dets.sort_by(|a, b| a.frame_index.cmp(&b.frame_index).then(a.rank_cmp(b)));
}

/// Per-class confidence maps, dims `(C_cls, T, W, H)`, values in `[0, 1]`.
#[derive(Clone, Debug, PartialEq)]
pub struct ConfMap {
    data: Tensor<f32>,
}

impl ConfMap {
    pub fn new(data: Tensor<f32>) -> Result<Self> {
        if data.rank() != 4 {
            return Err(Error::Shape(format!(
                "confmap must be (C, T, W, H), got {:?}",
                data.dims()
            )));
        }
        if let Some(v) = data.data().iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(Error::InvalidArgument(format!(
                "confmap value {v} outside [0, 1]"
            )));
        }
        Ok(ConfMap { data })
    }

    pub fn zeros(num_classes: usize, frames: usize, grid: usize) -> Self {
        ConfMap {
            data: Tensor::zeros(&[num_classes, frames, grid, grid]),
        }
    }

    pub fn data(&self) -> &Tensor<f32> {
        &self.data
    }

    pub fn into_tensor(self) -> Tensor<f32> {
        self.data
    }

    pub fn num_classes(&self) -> usize {
        self.data.dims()[0]
    }

    pub fn frames(&self) -> usize {
        self.data.dims()[1]
    }

    pub fn grid_size(&self) -> usize {
        self.data.dims()[2]
    }

    pub fn get(&self, class_id: usize, t: usize, azimuth_idx: usize, range_idx: usize) -> f32 {
        self.data.get(&[class_id, t, azimuth_idx, range_idx])
    }

    /// `(W, H)` plane for one class at one frame.
    pub fn plane(&self, class_id: usize, t: usize) -> &[f32] {
        let g = self.grid_size();
        let start = (class_id * self.frames() + t) * g * g;
        &self.data.data()[start..start + g * g]
    }
}

/// Start frames of `window`-long snippets: multiples of `stride`, plus one
/// final window anchored to end at the last frame.
pub fn snippet_starts(num_frames: usize, window: usize, stride: usize) -> Result<Vec<usize>> {
    if window == 0 || stride == 0 {
        return Err(Error::InvalidArgument(
            "window and stride must be >= 1".into(),
        ));
    }
    if window > num_frames {
        return Err(Error::InvalidArgument(format!(
            "window {window} exceeds sequence length {num_frames}"
        )));
    }
    let mut starts: Vec<usize> = (0..)
        .map(|k| k * stride)
        .take_while(|s| s + window <= num_frames)
        .collect();
    let last = num_frames - window;
    if starts.last() != Some(&last) {
        starts.push(last);
    }
    Ok(starts)
}

pub fn slice_snippets(
    seq: &RadarSequence,
    window: usize,
    stride: usize,
) -> Result<Vec<RadarSnippet>> {
    let starts = snippet_starts(seq.len(), window, stride)?;
    let g = seq.grid_size().unwrap_or(0);
    let plane = g * g;
    starts
        .into_iter()
        .map(|start| {
            let mut data = vec![0.0f32; RF_CHANNELS * window * plane];
            for t in 0..window {
                let frame = seq.frames[start + t].data.data();
                for c in 0..RF_CHANNELS {
                    let dst = (c * window + t) * plane;
                    data[dst..dst + plane].copy_from_slice(&frame[c * plane..(c + 1) * plane]);
                }
            }
            RadarSnippet::new(
                Tensor::new(vec![RF_CHANNELS, window, g, g], data)?,
                seq.sequence_id.clone(),
                start,
                seq.scene,
            )
        })
        .collect()
}

/// Annotations falling inside `[start, start + window)`, re-indexed from 0.
pub fn window_annotations(
    annotations: &[ObjectAnnotation],
    start: usize,
    window: usize,
) -> Vec<ObjectAnnotation> {
    annotations
        .iter()
        .filter(|a| a.frame_index >= start && a.frame_index < start + window)
        .map(|a| ObjectAnnotation {
            frame_index: a.frame_index - start,
            ..*a
        })
        .collect()
}
