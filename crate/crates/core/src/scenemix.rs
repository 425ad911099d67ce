//! Same-scene mixing augmentations: VideoMix, VideoCropMix and NoiseMix.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::data::{ConfMap, RadarSnippet, SceneLabel, RF_CHANNELS};
use crate::error::{Error, Result};
use crate::rng::{self, SplitMix64};
use crate::tensor::Tensor;

/// A training pair: snippet `(2, T, W, H)` and ConfMap `(C, T, W, H)`.
#[derive(Clone, Debug, PartialEq)]
pub struct MixSample {
    pub snippet: RadarSnippet,
    pub confmap: ConfMap,
    pub scene: SceneLabel,
}

impl MixSample {
    pub fn new(snippet: RadarSnippet, confmap: ConfMap, scene: SceneLabel) -> Result<Self> {
        let s = snippet.data.dims();
        let c = confmap.data().dims();
        if s[1..] != c[1..] {
            return Err(Error::Shape(format!(
                "snippet {s:?} and confmap {c:?} disagree on (T, W, H)"
            )));
        }
        if let Some(sn) = snippet.scene {
            if sn != scene {
                return Err(Error::SceneMismatch(format!(
                    "snippet tagged {sn}, sample tagged {scene}"
                )));
            }
        }
        Ok(MixSample {
            snippet,
            confmap,
            scene,
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AugmentPolicy {
    pub p_videomix: f64,
    pub p_videocropmix: f64,
    pub p_noisemix: f64,
    pub noise_threshold: f64,
    pub rng_seed: u64,
}

impl Default for AugmentPolicy {
    fn default() -> Self {
        AugmentPolicy {
            p_videomix: 1.0 / 3.0,
            p_videocropmix: 1.0 / 3.0,
            p_noisemix: 0.5,
            noise_threshold: 0.2,
            rng_seed: 0,
        }
    }
}

impl AugmentPolicy {
    /// No augmentation at all.
    pub fn disabled() -> Self {
        AugmentPolicy {
            p_videomix: 0.0,
            p_videocropmix: 0.0,
            p_noisemix: 0.0,
            ..Default::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let probs = [self.p_videomix, self.p_videocropmix, self.p_noisemix];
        if probs.iter().any(|p| !(0.0..=1.0).contains(p)) {
            return Err(Error::Config(format!(
                "augmentation probabilities must lie in [0, 1], got {probs:?}"
            )));
        }
        if self.p_videomix + self.p_videocropmix > 1.0 + 1e-12 {
            return Err(Error::Config(
                "p_videomix + p_videocropmix must not exceed 1".into(),
            ));
        }
        if !(self.noise_threshold > 0.0 && self.noise_threshold < 1.0) {
            return Err(Error::Config(format!(
                "noise_threshold {} must lie in (0, 1)",
                self.noise_threshold
            )));
        }
        Ok(())
    }

    pub fn is_disabled(&self) -> bool {
        self.p_videomix == 0.0 && self.p_videocropmix == 0.0 && self.p_noisemix == 0.0
    }
}

/// Spatial rectangle `[az_start, az_end) × [range_start, range_end)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct CropRegion {
    pub az_start: usize,
    pub az_end: usize,
    pub range_start: usize,
    pub range_end: usize,
}

impl CropRegion {
    pub fn area(&self) -> usize {
        self.az_end.saturating_sub(self.az_start) * self.range_end.saturating_sub(self.range_start)
    }
}

fn check_pair(a: &MixSample, b: &MixSample) -> Result<()> {
    if a.scene != b.scene {
        return Err(Error::SceneMismatch(format!(
            "only snippets of the same scene can be mixed ({} vs {})",
            a.scene, b.scene
        )));
    }
    a.snippet.data.ensure_same_dims(&b.snippet.data, "mixed snippets")?;
    a.confmap.data().ensure_same_dims(b.confmap.data(), "mixed confmaps")
}

fn blend<'a>(a: &'a [f32], b: &'a [f32], lambda: f64) -> impl Iterator<Item = f64> + 'a {
    a.iter()
        .zip(b)
        .map(move |(&x, &y)| lambda * x as f64 + (1.0 - lambda) * y as f64)
}

/// Convex blend `λ·a + (1−λ)·b` of snippets and ConfMaps; metadata from `a`.
pub fn video_mix(a: &MixSample, b: &MixSample, lambda: f64) -> Result<MixSample> {
    check_pair(a, b)?;
    if !(0.0..=1.0).contains(&lambda) {
        return Err(Error::InvalidArgument(format!("lambda {lambda} outside [0, 1]")));
    }
    let x: Vec<f32> = blend(a.snippet.data.data(), b.snippet.data.data(), lambda)
        .map(|v| v as f32)
        .collect();
    let c: Vec<f32> = blend(a.confmap.data().data(), b.confmap.data().data(), lambda)
        .map(|v| v.clamp(0.0, 1.0) as f32)
        .collect();
    Ok(MixSample {
        snippet: RadarSnippet {
            data: Tensor::new(a.snippet.data.dims().to_vec(), x)?,
            ..a.snippet.clone()
        },
        confmap: ConfMap::new(Tensor::new(a.confmap.data().dims().to_vec(), c)?)?,
        scene: a.scene,
    })
}

/// Copy `b` into `a` inside `region` for every channel and frame.
fn paste(dst: &mut Tensor<f32>, src: &Tensor<f32>, region: CropRegion) {
    let d = dst.dims().to_vec();
    let (lead, w, h) = (d[0] * d[1], d[2], d[3]);
    let src = src.data();
    let out = dst.data_mut();
    for plane in 0..lead {
        for az in region.az_start..region.az_end {
            let row = (plane * w + az) * h;
            out[row + region.range_start..row + region.range_end]
                .copy_from_slice(&src[row + region.range_start..row + region.range_end]);
        }
    }
}

/// Replace `region` of `a` with the same region of `b`, in the snippet and
/// in the ConfMap.
pub fn video_crop_mix(a: &MixSample, b: &MixSample, region: CropRegion) -> Result<MixSample> {
    check_pair(a, b)?;
    let d = a.snippet.data.dims();
    if region.az_start > region.az_end
        || region.range_start > region.range_end
        || region.az_end > d[2]
        || region.range_end > d[3]
    {
        return Err(Error::OutOfBounds(format!(
            "crop region {region:?} outside grid ({}, {})",
            d[2], d[3]
        )));
    }
    let mut x = a.snippet.data.clone();
    paste(&mut x, &b.snippet.data, region);
    let mut c = a.confmap.data().clone();
    paste(&mut c, b.confmap.data(), region);
    Ok(MixSample {
        snippet: RadarSnippet {
            data: x,
            ..a.snippet.clone()
        },
        confmap: ConfMap::new(c)?,
        scene: a.scene,
    })
}

/// Snippet with every `(t, az, range)` zeroed where any class confidence
/// exceeds `threshold`.
pub fn extract_noise(sample: &MixSample, threshold: f64) -> Tensor<f32> {
    let mut out = sample.snippet.data.clone();
    let cm = sample.confmap.data();
    let d = cm.dims();
    let (classes, site_count) = (d[0], d[1] * d[2] * d[3]);
    let cmd = cm.data();
    let x = out.data_mut();
    for site in 0..site_count {
        if (0..classes).any(|c| cmd[c * site_count + site] as f64 > threshold) {
            for ch in 0..RF_CHANNELS {
                x[ch * site_count + site] = 0.0;
            }
        }
    }
    out
}

/// Add the background noise of `noise_source` to `target`; the ConfMap is
/// the target's, untouched.
pub fn noise_mix(target: &MixSample, noise_source: &MixSample, threshold: f64) -> Result<MixSample> {
    check_pair(target, noise_source)?;
    let noise = extract_noise(noise_source, threshold);
    let mut x = target.snippet.data.clone();
    x.data_mut()
        .iter_mut()
        .zip(noise.data())
        .for_each(|(a, &n)| *a += n);
    Ok(MixSample {
        snippet: RadarSnippet {
            data: x,
            ..target.snippet.clone()
        },
        confmap: target.confmap.clone(),
        scene: target.scene,
    })
}

/// Source of same-scene partner samples.
pub trait SamplePool {
    fn draw(&self, scene: SceneLabel, rng: &mut SplitMix64) -> Option<&MixSample>;
}

/// Pool backed by a slice, partitioned by scene.
pub struct ScenePool<'a> {
    by_scene: [Vec<&'a MixSample>; 2],
}

impl<'a> ScenePool<'a> {
    pub fn new(samples: &'a [MixSample]) -> Self {
        let mut by_scene: [Vec<&MixSample>; 2] = [Vec::new(), Vec::new()];
        for s in samples {
            by_scene[s.scene.class_index()].push(s);
        }
        ScenePool { by_scene }
    }
}

impl SamplePool for ScenePool<'_> {
    fn draw(&self, scene: SceneLabel, rng: &mut SplitMix64) -> Option<&MixSample> {
        let v = &self.by_scene[scene.class_index()];
        (!v.is_empty()).then(|| v[rng.random_range(0..v.len())])
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum MixKind {
    Identity,
    VideoMix,
    VideoCropMix,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AugmentRecord {
    pub mix: MixKind,
    pub noise: bool,
    pub lambda: Option<f64>,
    pub region: Option<CropRegion>,
}

fn draw_partner<'p>(
    pool: &'p dyn SamplePool,
    scene: SceneLabel,
    rng: &mut SplitMix64,
) -> Result<&'p MixSample> {
    let p = pool
        .draw(scene, rng)
        .ok_or_else(|| Error::Data(format!("no {scene} samples available for mixing")))?;
    if p.scene != scene {
        return Err(Error::SceneMismatch(format!(
            "pool returned a {} sample for a {scene} request",
            p.scene
        )));
    }
    Ok(p)
}

/// Random crop with area fraction uniform in `[0.1, 0.5]`.
fn random_region(rng: &mut SplitMix64, w: usize, h: usize) -> CropRegion {
    let frac: f64 = rng.random_range(0.1..=0.5);
    let side = frac.sqrt();
    let cw = ((w as f64 * side).round() as usize).clamp(1, w);
    let ch = ((h as f64 * side).round() as usize).clamp(1, h);
    let az_start = rng.random_range(0..=w - cw);
    let range_start = rng.random_range(0..=h - ch);
    CropRegion {
        az_start,
        az_end: az_start + cw,
        range_start,
        range_end: range_start + ch,
    }
}

/// Apply the augmentation policy to one sample. Randomness comes from a
/// stream derived from `(policy.rng_seed, sample_key)`.
pub fn apply_policy(
    sample: &MixSample,
    pool: &dyn SamplePool,
    policy: &AugmentPolicy,
    sample_key: u64,
) -> Result<(MixSample, AugmentRecord)> {
    let mut rng = rng::stream(policy.rng_seed, rng::TAG_AUGMENT, sample_key);
    let u_mix: f64 = rng.random();
    let u_noise: f64 = rng.random();
    let mix = if u_mix < policy.p_videomix {
        MixKind::VideoMix
    } else if u_mix < policy.p_videomix + policy.p_videocropmix {
        MixKind::VideoCropMix
    } else {
        MixKind::Identity
    };
    let noise = u_noise < policy.p_noisemix;
    let mut record = AugmentRecord {
        mix,
        noise,
        lambda: None,
        region: None,
    };
    let mut out = match mix {
        MixKind::Identity => sample.clone(),
        MixKind::VideoMix => {
            let lambda: f64 = rng.random_range(0.0..=1.0);
            record.lambda = Some(lambda);
            let partner = draw_partner(pool, sample.scene, &mut rng)?;
            video_mix(sample, partner, lambda)?
        }
        MixKind::VideoCropMix => {
            let d = sample.snippet.data.dims();
            let region = random_region(&mut rng, d[2], d[3]);
            record.region = Some(region);
            let partner = draw_partner(pool, sample.scene, &mut rng)?;
            video_crop_mix(sample, partner, region)?
        }
    };
    if noise {
        let partner = draw_partner(pool, sample.scene, &mut rng)?;
        out = noise_mix(&out, partner, policy.noise_threshold)?;
    }
    Ok((out, record))
}
