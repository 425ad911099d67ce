//! ConfMap decoding (L-NMS), ensembling, window merging and the three
//! scene constraints: no collision, continuity and border entry.

use serde::{Deserialize, Serialize};

use crate::data::{sort_detections, ConfMap, Detection, SceneLabel};
use crate::error::{Error, Result};
use crate::geom::{ols, ols_at, OlsParams, PolarGrid};
use crate::tensor::Tensor;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PostprocPolicy {
    pub peak_threshold: f64,
    pub nms_ols_threshold: f64,
    pub collision_ols_threshold: f64,
    pub max_gap: usize,
    pub border_margin: usize,
    pub track_ols_threshold: f64,
    pub scene: SceneLabel,
}

impl Default for PostprocPolicy {
    fn default() -> Self {
        PostprocPolicy {
            peak_threshold: 0.1,
            nms_ols_threshold: 0.3,
            collision_ols_threshold: 0.6,
            max_gap: 2,
            border_margin: 10,
            track_ols_threshold: 0.5,
            scene: SceneLabel::Static,
        }
    }
}

impl PostprocPolicy {
    pub fn for_scene(scene: SceneLabel) -> Self {
        PostprocPolicy {
            scene,
            ..Default::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("peak_threshold", self.peak_threshold),
            ("nms_ols_threshold", self.nms_ols_threshold),
            ("collision_ols_threshold", self.collision_ols_threshold),
            ("track_ols_threshold", self.track_ols_threshold),
        ] {
            if !(v > 0.0 && v < 1.0) {
                return Err(Error::Config(format!("{name} must lie in (0, 1), got {v}")));
            }
        }
        if !(1..=2).contains(&self.max_gap) {
            return Err(Error::Config(format!("max_gap must be 1 or 2, got {}", self.max_gap)));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Track {
    pub track_id: usize,
    pub class_id: usize,
    /// Strictly increasing frame indices.
    pub points: Vec<Detection>,
}

impl Track {
    pub fn first_frame(&self) -> usize {
        self.points[0].frame_index
    }

    pub fn last(&self) -> &Detection {
        self.points.last().expect("tracks are never empty")
    }

    /// Number of frames spanned, gaps included.
    pub fn span(&self) -> usize {
        self.last().frame_index - self.first_frame() + 1
    }
}

/// Elementwise mean of equally shaped ConfMaps.
pub fn ensemble_confmaps(maps: &[&ConfMap]) -> Result<ConfMap> {
    let first = maps
        .first()
        .ok_or_else(|| Error::InvalidArgument("cannot ensemble zero ConfMaps".into()))?;
    let dims = first.data().dims().to_vec();
    let mut acc = vec![0.0f64; first.data().len()];
    for m in maps {
        m.data().ensure_dims(&dims, "ensemble member")?;
        for (a, &v) in acc.iter_mut().zip(m.data().data()) {
            *a += v as f64;
        }
    }
    let n = maps.len() as f64;
    ConfMap::new(Tensor::new(
        dims,
        acc.into_iter().map(|v| ((v / n) as f32).clamp(0.0, 1.0)).collect(),
    )?)
}

/// Average overlapping window predictions into one map per frame.
pub fn merge_windows(windows: &[(usize, ConfMap)], num_frames: usize) -> Result<ConfMap> {
    let (_, first) = windows
        .first()
        .ok_or_else(|| Error::InvalidArgument("no windows to merge".into()))?;
    let (c, g) = (first.num_classes(), first.grid_size());
    let plane = g * g;
    let mut acc = vec![0.0f64; c * num_frames * plane];
    let mut count = vec![0usize; num_frames];
    for (start, m) in windows {
        let d = m.data().dims();
        if d[0] != c || d[2] != g || d[3] != g {
            return Err(Error::Shape(format!("window map {d:?} differs from {:?}", first.data().dims())));
        }
        if start + m.frames() > num_frames {
            return Err(Error::OutOfBounds(format!(
                "window [{start}, {}) exceeds {num_frames} frames",
                start + m.frames()
            )));
        }
        for t in 0..m.frames() {
            count[start + t] += 1;
            for cls in 0..c {
                let dst = (cls * num_frames + start + t) * plane;
                for (a, &v) in acc[dst..dst + plane].iter_mut().zip(m.plane(cls, t)) {
                    *a += v as f64;
                }
            }
        }
    }
    if let Some(f) = count.iter().position(|&k| k == 0) {
        return Err(Error::InvalidArgument(format!("frame {f} is not covered by any window")));
    }
    let mut out = vec![0.0f32; acc.len()];
    for cls in 0..c {
        for (t, &k) in count.iter().enumerate() {
            let at = (cls * num_frames + t) * plane;
            for i in at..at + plane {
                out[i] = ((acc[i] / k as f64) as f32).clamp(0.0, 1.0);
            }
        }
    }
    ConfMap::new(Tensor::new(vec![c, num_frames, g, g], out)?)
}

fn strict_peaks(plane: &[f32], g: usize, threshold: f64) -> Vec<(usize, usize, f32)> {
    let mut out = Vec::new();
    for az in 0..g {
        for r in 0..g {
            let v = plane[az * g + r];
            if (v as f64) <= threshold {
                continue;
            }
            let mut is_max = true;
            'nb: for da in -1i64..=1 {
                for dr in -1i64..=1 {
                    if da == 0 && dr == 0 {
                        continue;
                    }
                    let (a2, r2) = (az as i64 + da, r as i64 + dr);
                    if a2 < 0 || r2 < 0 || a2 >= g as i64 || r2 >= g as i64 {
                        continue;
                    }
                    if plane[a2 as usize * g + r2 as usize] >= v {
                        is_max = false;
                        break 'nb;
                    }
                }
            }
            if is_max {
                out.push((az, r, v));
            }
        }
    }
    out
}

/// L-NMS on one frame `(C, W, H)`.
pub fn lnms(
    frame: &Tensor<f32>,
    frame_index: usize,
    policy: &PostprocPolicy,
    grid: &PolarGrid,
    params: &OlsParams,
) -> Result<Vec<Detection>> {
    let d = frame.dims();
    if d.len() != 3 || d[1] != d[2] {
        return Err(Error::Shape(format!("lnms expects (C, W, W), got {d:?}")));
    }
    let g = d[1];
    let plane = g * g;
    let mut out = Vec::new();
    for cls in 0..d[0] {
        let mut cands: Vec<Detection> = strict_peaks(&frame.data()[cls * plane..(cls + 1) * plane], g, policy.peak_threshold)
            .into_iter()
            .map(|(az, r, v)| Detection {
                frame_index,
                class_id: cls,
                range_idx: r,
                azimuth_idx: az,
                confidence: v,
            })
            .collect();
        cands.sort_by(|a, b| a.rank_cmp(b));
        let mut kept: Vec<Detection> = Vec::new();
        for c in cands {
            if kept.iter().all(|k| ols(k, &c, grid, params) <= policy.nms_ols_threshold) {
                kept.push(c);
            }
        }
        out.extend(kept);
    }
    out.sort_by(|a, b| a.rank_cmp(b));
    Ok(out)
}

/// L-NMS on frame `t` of a ConfMap.
pub fn lnms_confmap(
    map: &ConfMap,
    t: usize,
    frame_index: usize,
    policy: &PostprocPolicy,
    grid: &PolarGrid,
    params: &OlsParams,
) -> Result<Vec<Detection>> {
    let g = map.grid_size();
    let mut data = Vec::with_capacity(map.num_classes() * g * g);
    for cls in 0..map.num_classes() {
        data.extend_from_slice(map.plane(cls, t));
    }
    lnms(&Tensor::new(vec![map.num_classes(), g, g], data)?, frame_index, policy, grid, params)
}

/// Drop the less confident member of every colliding different-class
/// pair, resolved greedily in descending confidence.
pub fn no_collision(dets: &[Detection], policy: &PostprocPolicy, grid: &PolarGrid, params: &OlsParams) -> Vec<Detection> {
    let mut sorted = dets.to_vec();
    sorted.sort_by(|a, b| a.rank_cmp(b));
    let mut kept: Vec<Detection> = Vec::with_capacity(sorted.len());
    for d in sorted {
        let collides = kept
            .iter()
            .any(|k| k.class_id != d.class_id && ols(k, &d, grid, params) > policy.collision_ols_threshold);
        if !collides {
            kept.push(d);
        }
    }
    kept
}

/// Greedy per-class association of detections across frames.
pub fn build_tracks(
    frames: &[Vec<Detection>],
    policy: &PostprocPolicy,
    grid: &PolarGrid,
    params: &OlsParams,
) -> Vec<Track> {
    let mut tracks: Vec<Track> = Vec::new();
    for (f, dets) in frames.iter().enumerate() {
        let mut dets = dets.clone();
        dets.sort_by(|a, b| a.rank_cmp(b));
        let mut pairs: Vec<(f64, usize, usize)> = Vec::new();
        for (ti, tr) in tracks.iter().enumerate() {
            let last = tr.last();
            if f - last.frame_index > policy.max_gap + 1 {
                continue;
            }
            for (di, d) in dets.iter().enumerate() {
                if d.class_id != tr.class_id {
                    continue;
                }
                let s = ols(last, d, grid, params);
                if s >= policy.track_ols_threshold {
                    pairs.push((s, ti, di));
                }
            }
        }
        pairs.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
        let mut track_used = vec![false; tracks.len()];
        let mut det_used = vec![false; dets.len()];
        for (_, ti, di) in pairs {
            if track_used[ti] || det_used[di] {
                continue;
            }
            track_used[ti] = true;
            det_used[di] = true;
            tracks[ti].points.push(Detection { frame_index: f, ..dets[di] });
        }
        for (di, d) in dets.iter().enumerate() {
            if !det_used[di] {
                tracks.push(Track {
                    track_id: tracks.len(),
                    class_id: d.class_id,
                    points: vec![Detection { frame_index: f, ..*d }],
                });
            }
        }
    }
    tracks
}

fn lerp_point(a: &Detection, b: &Detection, frame: usize) -> (f64, f64) {
    let w = (frame - a.frame_index) as f64 / (b.frame_index - a.frame_index) as f64;
    (
        a.range_idx as f64 + w * (b.range_idx as f64 - a.range_idx as f64),
        a.azimuth_idx as f64 + w * (b.azimuth_idx as f64 - a.azimuth_idx as f64),
    )
}

/// Fill intra-track gaps of up to `max_gap` frames by linear interpolation.
///
/// A different-class track lying wholly inside a gap and sitting on the
/// interpolated path (OLS above the collision threshold at every frame) is
/// treated as a momentary class flip: it is absorbed into the gap and
/// relabelled to the track's class.
pub fn continuity(tracks: Vec<Track>, policy: &PostprocPolicy, grid: &PolarGrid, params: &OlsParams) -> Vec<Track> {
    let mut tracks = tracks;
    let mut absorbed = vec![false; tracks.len()];
    for ti in 0..tracks.len() {
        if absorbed[ti] {
            continue;
        }
        let mut filled = Vec::with_capacity(tracks[ti].points.len());
        let points = tracks[ti].points.clone();
        let class_id = tracks[ti].class_id;
        for w in points.windows(2) {
            let (a, b) = (&w[0], &w[1]);
            filled.push(*a);
            let gap = b.frame_index - a.frame_index - 1;
            if gap == 0 || gap > policy.max_gap {
                continue;
            }
            let lo = a.frame_index + 1;
            let hi = b.frame_index - 1;
            let interloper = (0..tracks.len()).find(|&oi| {
                let o = &tracks[oi];
                oi != ti
                    && !absorbed[oi]
                    && o.class_id != class_id
                    && o.first_frame() >= lo
                    && o.last().frame_index <= hi
                    && o.points.iter().all(|p| {
                        let at = lerp_point(a, b, p.frame_index);
                        ols_at(at, class_id, (p.range_idx as f64, p.azimuth_idx as f64), grid, params)
                            > policy.collision_ols_threshold
                    })
            });
            let mut claimed: Vec<Detection> = Vec::new();
            if let Some(oi) = interloper {
                absorbed[oi] = true;
                claimed = tracks[oi]
                    .points
                    .iter()
                    .map(|p| Detection { class_id, ..*p })
                    .collect();
            }
            for frame in lo..=hi {
                if let Some(p) = claimed.iter().find(|p| p.frame_index == frame) {
                    filled.push(*p);
                    continue;
                }
                let (r, az) = lerp_point(a, b, frame);
                filled.push(Detection {
                    frame_index: frame,
                    class_id,
                    range_idx: r.round() as usize,
                    azimuth_idx: az.round() as usize,
                    confidence: ((a.confidence as f64 + b.confidence as f64) / 2.0) as f32,
                });
            }
        }
        filled.push(*points.last().expect("tracks are never empty"));
        tracks[ti].points = filled;
    }
    tracks
        .into_iter()
        .zip(absorbed)
        .filter_map(|(t, gone)| (!gone).then_some(t))
        .collect()
}

/// Remove tracks that appear suddenly away from the grid border.
pub fn border_entry(tracks: Vec<Track>, policy: &PostprocPolicy, grid_size: usize, sequence_start: usize) -> Vec<Track> {
    let m = policy.border_margin;
    tracks
        .into_iter()
        .filter(|t| {
            let p = &t.points[0];
            let edge = p
                .range_idx
                .min(p.azimuth_idx)
                .min(grid_size - 1 - p.range_idx)
                .min(grid_size - 1 - p.azimuth_idx);
            edge <= m || t.first_frame() - sequence_start.min(t.first_frame()) <= m || t.span() >= 3 * m
        })
        .collect()
}

/// Per-frame detection lists for a sequence of `num_frames`.
pub fn group_by_frame(dets: &[Detection], num_frames: usize) -> Result<Vec<Vec<Detection>>> {
    let mut frames = vec![Vec::new(); num_frames];
    for d in dets {
        frames
            .get_mut(d.frame_index)
            .ok_or_else(|| Error::OutOfBounds(format!("detection at frame {} of {num_frames}", d.frame_index)))?
            .push(*d);
    }
    Ok(frames)
}

/// Scene constraints on per-frame peak lists. Static applies all three
/// constraints; Dynamic only removes collisions.
pub fn apply_constraints(
    frames: Vec<Vec<Detection>>,
    scene: SceneLabel,
    policy: &PostprocPolicy,
    grid: &PolarGrid,
    params: &OlsParams,
) -> Vec<Detection> {
    let frames: Vec<Vec<Detection>> = frames
        .iter()
        .map(|f| no_collision(f, policy, grid, params))
        .collect();
    let mut out: Vec<Detection> = match scene {
        SceneLabel::Dynamic => frames.into_iter().flatten().collect(),
        SceneLabel::Static => {
            let tracks = build_tracks(&frames, policy, grid, params);
            let tracks = continuity(tracks, policy, grid, params);
            border_entry(tracks, policy, grid.grid_size, 0)
                .into_iter()
                .flat_map(|t| t.points)
                .collect()
        }
    };
    sort_detections(&mut out);
    out
}

/// Decode a per-frame ConfMap `(C, F, W, H)` into detections.
pub fn postprocess(
    map: &ConfMap,
    scene: SceneLabel,
    policy: &PostprocPolicy,
    grid: &PolarGrid,
    params: &OlsParams,
) -> Result<Vec<Detection>> {
    let frames = (0..map.frames())
        .map(|t| lnms_confmap(map, t, t, policy, grid, params))
        .collect::<Result<Vec<_>>>()?;
    Ok(apply_constraints(frames, scene, policy, grid, params))
}

/// L-NMS only: the `--no-postproc` path.
pub fn decode_peaks(map: &ConfMap, policy: &PostprocPolicy, grid: &PolarGrid, params: &OlsParams) -> Result<Vec<Detection>> {
    let mut out = Vec::new();
    for t in 0..map.frames() {
        out.extend(lnms_confmap(map, t, t, policy, grid, params)?);
    }
    sort_detections(&mut out);
    Ok(out)
}

/// Point ConfMap holding each detection's confidence at its pixel.
pub fn point_confmap(dets: &[Detection], num_classes: usize, num_frames: usize, grid_size: usize) -> Result<ConfMap> {
    let mut t: Tensor<f32> = Tensor::zeros(&[num_classes, num_frames, grid_size, grid_size]);
    for d in dets {
        if d.class_id >= num_classes || d.frame_index >= num_frames || d.range_idx >= grid_size || d.azimuth_idx >= grid_size {
            return Err(Error::OutOfBounds(format!("detection {d:?} outside the map")));
        }
        let idx = [d.class_id, d.frame_index, d.azimuth_idx, d.range_idx];
        let cur = t.get(&idx);
        t.set(&idx, cur.max(d.confidence.clamp(0.0, 1.0)));
    }
    ConfMap::new(t)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::codec::{encode_confmap, DEFAULT_SIGMAS};
    use crate::data::ObjectAnnotation;
    use proptest::prelude::*;

    fn grid() -> PolarGrid {
        PolarGrid::default()
    }

    fn tight() -> OlsParams {
        OlsParams::new(vec![0.1, 0.14, 0.2]).unwrap()
    }

    fn det(frame: usize, class_id: usize, r: usize, a: usize, c: f32) -> Detection {
        Detection { frame_index: frame, class_id, range_idx: r, azimuth_idx: a, confidence: c }
    }

    fn map_from(c: usize, t: usize, g: usize, f: impl Fn(usize) -> f32) -> ConfMap {
        ConfMap::new(Tensor::from_fn(&[c, t, g, g], f)).unwrap()
    }

    #[test]
    fn policy_validation() {
        assert!(PostprocPolicy::default().validate().is_ok());
        let bad = PostprocPolicy { max_gap: 3, ..Default::default() };
        assert!(bad.validate().is_err());
        let bad = PostprocPolicy { peak_threshold: 1.0, ..Default::default() };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn ensemble_identity_and_half() {
        let a = map_from(3, 2, 4, |i| (i % 7) as f32 / 7.0);
        assert_eq!(ensemble_confmaps(&[&a, &a, &a]).unwrap(), a);
        let z = ConfMap::zeros(3, 2, 4);
        let o = map_from(3, 2, 4, |_| 1.0);
        let m = ensemble_confmaps(&[&z, &o]).unwrap();
        assert!(m.data().data().iter().all(|&v| v == 0.5));
        assert!(ensemble_confmaps(&[]).is_err());
        let other = ConfMap::zeros(3, 3, 4);
        assert!(ensemble_confmaps(&[&z, &other]).is_err());
    }

    #[test]
    fn ensemble_matches_scalar_loop() {
        let maps: Vec<ConfMap> = (0..3u64)
            .map(|s| map_from(3, 4, 8, |i| (((i as u64 * 2654435761 + s * 97) % 1000) as f32) / 1000.0))
            .collect();
        let refs: Vec<&ConfMap> = maps.iter().collect();
        let m = ensemble_confmaps(&refs).unwrap();
        for i in 0..m.data().len() {
            let mut s = 0.0f32;
            for mm in &maps {
                s += mm.data().data()[i];
            }
            assert!((m.data().data()[i] - s / 3.0).abs() <= 1e-7);
        }
    }

    #[test]
    fn merge_windows_rules() {
        let a = map_from(1, 4, 2, |i| i as f32 / 16.0);
        assert_eq!(merge_windows(&[(0, a.clone())], 4).unwrap(), a);

        let w0 = map_from(1, 2, 1, |_| 0.2);
        let w1 = map_from(1, 2, 1, |_| 0.6);
        let m = merge_windows(&[(0, w0.clone()), (1, w1.clone())], 3).unwrap();
        assert_eq!(m.get(0, 0, 0, 0), 0.2);
        assert!((m.get(0, 1, 0, 0) - 0.4).abs() < 1e-7);
        assert_eq!(m.get(0, 2, 0, 0), 0.6);

        assert!(merge_windows(&[(0, w0.clone())], 3).is_err());
        assert!(merge_windows(&[(2, w1)], 3).is_err());
        assert!(merge_windows(&[], 3).is_err());
    }

    #[test]
    fn merge_windows_matches_brute_force() {
        let (n, tau, stride, g) = (11usize, 4usize, 3usize, 3usize);
        let starts = snippet_starts_cover(n, tau, stride);
        let windows: Vec<(usize, ConfMap)> = starts
            .iter()
            .map(|&s| (s, map_from(2, tau, g, |i| ((i * 31 + s * 17) % 101) as f32 / 101.0)))
            .collect();
        let m = merge_windows(&windows, n).unwrap();
        for t in 0..n {
            for c in 0..2 {
                for a in 0..g {
                    for r in 0..g {
                        let mut sum = 0.0f64;
                        let mut k = 0;
                        for (s, w) in &windows {
                            if t >= *s && t < s + tau {
                                sum += w.get(c, t - s, a, r) as f64;
                                k += 1;
                            }
                        }
                        assert_eq!(m.get(c, t, a, r), (sum / k as f64) as f32);
                    }
                }
            }
        }
    }

    fn snippet_starts_cover(n: usize, tau: usize, stride: usize) -> Vec<usize> {
        let mut s: Vec<usize> = (0..=n - tau).step_by(stride).collect();
        if *s.last().unwrap() + tau < n {
            s.push(n - tau);
        }
        s
    }

    fn single_frame(anns: &[ObjectAnnotation]) -> Tensor<f32> {
        let m = encode_confmap(anns, 1, 128, &DEFAULT_SIGMAS).unwrap();
        m.into_tensor().reshape(&[3, 128, 128]).unwrap()
    }

    #[test]
    fn lnms_recovers_encoded_peak() {
        let policy = PostprocPolicy { peak_threshold: 0.05, ..Default::default() };
        let a = ObjectAnnotation { frame_index: 0, class_id: 1, range_idx: 40, azimuth_idx: 70 };
        let d = lnms(&single_frame(&[a]), 0, &policy, &grid(), &tight()).unwrap();
        assert_eq!(d, vec![det(0, 1, 40, 70, 1.0)]);
    }

    #[test]
    fn lnms_adjacent_same_class_peaks_give_one() {
        let g = grid();
        let p = tight();
        assert!(ols(&det(0, 0, 60, 64, 1.0), &det(0, 0, 61, 64, 1.0), &g, &p) > 0.3);
        let mut t: Tensor<f32> = Tensor::zeros(&[3, 128, 128]);
        t.set(&[0, 64, 60], 0.9);
        t.set(&[0, 64, 61], 0.7);
        let d = lnms(&t, 0, &PostprocPolicy::default(), &g, &p).unwrap();
        assert_eq!(d, vec![det(0, 0, 60, 64, 0.9)]);
    }

    #[test]
    fn lnms_suppresses_nearby_same_class_local_maxima() {
        let g = grid();
        let p = tight();
        let mut t: Tensor<f32> = Tensor::zeros(&[3, 128, 128]);
        t.set(&[0, 64, 60], 0.9);
        t.set(&[0, 64, 62], 0.8);
        assert!(ols(&det(0, 0, 60, 64, 0.9), &det(0, 0, 62, 64, 0.8), &g, &p) > 0.3);
        let d = lnms(&t, 0, &PostprocPolicy::default(), &g, &p).unwrap();
        assert_eq!(d, vec![det(0, 0, 60, 64, 0.9)]);
    }

    #[test]
    fn lnms_keeps_different_classes() {
        let a = ObjectAnnotation { frame_index: 0, class_id: 0, range_idx: 20, azimuth_idx: 20 };
        let b = ObjectAnnotation { frame_index: 0, class_id: 2, range_idx: 100, azimuth_idx: 100 };
        let d = lnms(&single_frame(&[a, b]), 0, &PostprocPolicy::default(), &grid(), &tight()).unwrap();
        assert_eq!(d.len(), 2);
        let mut t: Tensor<f32> = Tensor::zeros(&[3, 128, 128]);
        t.set(&[0, 64, 60], 0.9);
        t.set(&[2, 64, 60], 0.8);
        let d = lnms(&t, 0, &PostprocPolicy::default(), &grid(), &tight()).unwrap();
        assert_eq!(d.len(), 2);
    }

    #[test]
    fn lnms_rejects_plateaus_and_low_values() {
        let mut t: Tensor<f32> = Tensor::zeros(&[1, 8, 8]);
        t.set(&[0, 3, 3], 0.5);
        t.set(&[0, 3, 4], 0.5);
        t.set(&[0, 6, 6], 0.09);
        let d = lnms(&t, 0, &PostprocPolicy::default(), &grid().with_grid_size(8), &tight()).unwrap();
        assert!(d.is_empty());
        assert!(lnms(&Tensor::zeros(&[3, 4, 5]), 0, &PostprocPolicy::default(), &grid(), &tight()).is_err());
    }

    #[test]
    fn collision_rules() {
        let (g, p, pol) = (grid(), tight(), PostprocPolicy::default());
        let car = det(0, 2, 50, 50, 0.9);
        let ped = det(0, 0, 50, 50, 0.7);
        assert_eq!(no_collision(&[ped, car], &pol, &g, &p), vec![car]);
        let twin = det(0, 2, 50, 50, 0.5);
        assert_eq!(no_collision(&[car, twin], &pol, &g, &p).len(), 2);
        let cyc = det(0, 1, 50, 50, 0.8);
        assert_eq!(no_collision(&[ped, cyc, car], &pol, &g, &p), vec![car]);
    }

    #[test]
    fn tracks_follow_moving_object() {
        let (g, p, pol) = (grid(), tight(), PostprocPolicy::default());
        assert!(ols(&det(0, 0, 60, 64, 1.0), &det(0, 0, 61, 64, 1.0), &g, &p) >= 0.5);
        let frames: Vec<Vec<Detection>> = (0..5).map(|f| vec![det(f, 0, 60 + f, 64, 0.9)]).collect();
        let t = build_tracks(&frames, &pol, &g, &p);
        assert_eq!(t.len(), 1);
        assert_eq!(t[0].points.len(), 5);

        let frames: Vec<Vec<Detection>> = (0..5)
            .map(|f| vec![det(f, 0, 20, 20 + f, 0.9), det(f, 0, 100, 100 - f, 0.8)])
            .collect();
        let t = build_tracks(&frames, &pol, &g, &p);
        assert_eq!(t.len(), 2);
        for tr in &t {
            assert_eq!(tr.points.len(), 5);
            let r0 = tr.points[0].range_idx;
            assert!(tr.points.iter().all(|d| d.range_idx == r0));
        }
        assert!(build_tracks(&[], &pol, &g, &p).is_empty());
    }

    #[test]
    fn tracks_close_after_long_gap() {
        let (g, p, pol) = (grid(), tight(), PostprocPolicy::default());
        let mut frames = vec![Vec::new(); 8];
        frames[0].push(det(0, 0, 60, 64, 0.9));
        frames[3].push(det(3, 0, 60, 64, 0.9));
        frames[7].push(det(7, 0, 60, 64, 0.9));
        let t = build_tracks(&frames, &pol, &g, &p);
        assert_eq!(t.len(), 2);
        assert_eq!(t[0].points.len(), 2);
    }

    #[test]
    fn continuity_fills_midpoint_with_mean_confidence() {
        let (g, p, pol) = (grid(), tight(), PostprocPolicy::default());
        let pts: Vec<Detection> = [0usize, 1, 2, 4, 5, 6]
            .iter()
            .map(|&f| det(f, 2, 50 + 2 * f, 30 + 2 * f, if f == 2 { 0.8 } else { 0.6 }))
            .collect();
        let t = continuity(vec![Track { track_id: 0, class_id: 2, points: pts }], &pol, &g, &p);
        assert_eq!(t[0].points.len(), 7);
        let f3 = t[0].points[3];
        assert_eq!((f3.frame_index, f3.range_idx, f3.azimuth_idx, f3.class_id), (3, 56, 36, 2));
        assert!((f3.confidence - 0.7).abs() < 1e-6);
    }

    #[test]
    fn continuity_respects_max_gap_and_endpoints() {
        let (g, p, pol) = (grid(), tight(), PostprocPolicy::default());
        let pts = vec![det(2, 0, 60, 60, 0.9), det(6, 0, 60, 60, 0.9)];
        let t = continuity(vec![Track { track_id: 0, class_id: 0, points: pts.clone() }], &pol, &g, &p);
        assert_eq!(t[0].points, pts);
        let pts = vec![det(2, 0, 60, 60, 0.9), det(4, 0, 60, 60, 0.9)];
        let t = continuity(vec![Track { track_id: 0, class_id: 0, points: pts }], &pol, &g, &p);
        let frames: Vec<usize> = t[0].points.iter().map(|d| d.frame_index).collect();
        assert_eq!(frames, vec![2, 3, 4]);
    }

    #[test]
    fn continuity_relabels_class_flip() {
        let (g, p, pol) = (grid(), tight(), PostprocPolicy::default());
        let main = Track {
            track_id: 0,
            class_id: 2,
            points: vec![det(0, 2, 60, 60, 0.9), det(1, 2, 60, 60, 0.9), det(3, 2, 60, 60, 0.9)],
        };
        let flip = Track { track_id: 1, class_id: 0, points: vec![det(2, 0, 60, 60, 0.4)] };
        let t = continuity(vec![main, flip], &pol, &g, &p);
        assert_eq!(t.len(), 1);
        assert_eq!(t[0].points[2], det(2, 2, 60, 60, 0.4));
    }

    #[test]
    fn border_entry_rules() {
        let pol = PostprocPolicy::default();
        let mk = |f0: usize, r: usize, a: usize, len: usize| Track {
            track_id: 0,
            class_id: 0,
            points: (0..len).map(|k| det(f0 + k, 0, r, a, 0.9)).collect(),
        };
        assert!(border_entry(vec![mk(50, 64, 64, 4)], &pol, 128, 0).is_empty());
        assert_eq!(border_entry(vec![mk(50, 64, 2, 4)], &pol, 128, 0).len(), 1);
        assert_eq!(border_entry(vec![mk(50, 125, 64, 4)], &pol, 128, 0).len(), 1);
        assert_eq!(border_entry(vec![mk(0, 64, 64, 4)], &pol, 128, 0).len(), 1);
        assert_eq!(border_entry(vec![mk(50, 64, 64, 30)], &pol, 128, 0).len(), 1);
        assert!(border_entry(vec![mk(50, 64, 64, 29)], &pol, 128, 0).is_empty());
    }

    fn scene_with_popup() -> (ConfMap, Vec<ObjectAnnotation>) {
        let mut anns = Vec::new();
        for f in 0..60 {
            anns.push(ObjectAnnotation { frame_index: f, class_id: 2, range_idx: 40, azimuth_idx: 5 + f });
        }
        for f in 50..54 {
            anns.push(ObjectAnnotation { frame_index: f, class_id: 0, range_idx: 90, azimuth_idx: 64 });
        }
        (encode_confmap(&anns, 60, 128, &DEFAULT_SIGMAS).unwrap(), anns)
    }

    #[test]
    fn static_drops_popup_dynamic_keeps_it() {
        let (g, p, pol) = (grid(), tight(), PostprocPolicy::default());
        let (m, _) = scene_with_popup();
        let s = postprocess(&m, SceneLabel::Static, &pol, &g, &p).unwrap();
        let d = postprocess(&m, SceneLabel::Dynamic, &pol, &g, &p).unwrap();
        assert_eq!(s.len(), 60);
        assert_eq!(d.len(), 64);
        assert!(s.iter().all(|x| x.class_id == 2));
        assert_eq!(d.iter().filter(|x| x.class_id == 0).count(), 4);
    }

    #[test]
    fn clean_sequence_same_under_both_scenes() {
        let (g, p, pol) = (grid(), tight(), PostprocPolicy::default());
        let anns: Vec<ObjectAnnotation> = (0..20)
            .map(|f| ObjectAnnotation { frame_index: f, class_id: 1, range_idx: 60, azimuth_idx: 3 + f })
            .collect();
        let m = encode_confmap(&anns, 20, 128, &DEFAULT_SIGMAS).unwrap();
        let s = postprocess(&m, SceneLabel::Static, &pol, &g, &p).unwrap();
        let d = postprocess(&m, SceneLabel::Dynamic, &pol, &g, &p).unwrap();
        assert_eq!(s, d);
        assert_eq!(s.len(), 20);
    }

    #[test]
    fn postprocess_is_idempotent_on_popup_scene() {
        let (g, p, pol) = (grid(), tight(), PostprocPolicy::default());
        let (m, _) = scene_with_popup();
        for scene in [SceneLabel::Static, SceneLabel::Dynamic] {
            let once = postprocess(&m, scene, &pol, &g, &p).unwrap();
            let again = postprocess(&point_confmap(&once, 3, 60, 128).unwrap(), scene, &pol, &g, &p).unwrap();
            assert_eq!(once, again);
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn lnms_invariants(vals in proptest::collection::vec(0u8..=255, 2 * 16 * 16)) {
            let (g, p, pol) = (grid().with_grid_size(16), tight(), PostprocPolicy::default());
            let t = Tensor::new(vec![2, 16, 16], vals.iter().map(|&v| v as f32 / 255.0).collect()).unwrap();
            let d = lnms(&t, 0, &pol, &g, &p).unwrap();
            let mut peaks = 0;
            for c in 0..2 {
                peaks += strict_peaks(&t.data()[c * 256..(c + 1) * 256], 16, pol.peak_threshold).len();
            }
            prop_assert!(d.len() <= peaks);
            for (i, a) in d.iter().enumerate() {
                for b in &d[i + 1..] {
                    if a.class_id == b.class_id {
                        prop_assert!(ols(a, b, &g, &p) <= pol.nms_ols_threshold);
                    }
                }
            }
        }

        #[test]
        fn no_collision_keeps_the_top_detection(
            raw in proptest::collection::vec((0usize..3, 0usize..16, 0usize..16, 1u8..=255), 1..12)
        ) {
            let (g, p, pol) = (grid().with_grid_size(16), tight(), PostprocPolicy::default());
            let dets: Vec<Detection> = raw.iter().map(|&(c, r, a, v)| det(0, c, r, a, v as f32 / 255.0)).collect();
            let kept = no_collision(&dets, &pol, &g, &p);
            let mut sorted = dets.clone();
            sorted.sort_by(|a, b| a.rank_cmp(b));
            prop_assert_eq!(kept[0], sorted[0]);
        }

        #[test]
        fn continuity_stays_inside_span(
            frames in proptest::collection::btree_set(0usize..20, 1..10),
            r in 10usize..100,
        ) {
            let (g, p, pol) = (grid(), tight(), PostprocPolicy::default());
            let pts: Vec<Detection> = frames.iter().map(|&f| det(f, 1, r, 64, 0.5)).collect();
            let (lo, hi) = (pts[0].frame_index, pts.last().unwrap().frame_index);
            let out = continuity(vec![Track { track_id: 0, class_id: 1, points: pts.clone() }], &pol, &g, &p);
            let fr: Vec<usize> = out[0].points.iter().map(|d| d.frame_index).collect();
            prop_assert_eq!(fr[0], lo);
            prop_assert_eq!(*fr.last().unwrap(), hi);
            prop_assert!(fr.windows(2).all(|w| w[0] < w[1]));
            prop_assert!(pts.iter().all(|d| out[0].points.contains(d)));
        }
    }
}
