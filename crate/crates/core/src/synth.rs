//! Seeded synthetic range-azimuth scenarios with ground truth.
//!
//! Targets are class-sized complex Gaussian blobs moving on straight lines in
//! grid coordinates. Background clutter is stationary in Static scenes; in
//! Dynamic scenes it drifts toward the sensor by `ego_drift` pixels per frame,
//! rotates in phase, and is joined by short-lived range streaks.

use rand::Rng;
use rand_distr::StandardNormal;

use crate::data::{ObjectAnnotation, RadarFrame, RadarSequence, SceneLabel, RF_CHANNELS};
use crate::error::{Error, Result};
use crate::rng::{self, SplitMix64};
use crate::tensor::Tensor;

pub const NUM_CLASSES: usize = 3;

#[derive(Clone, Debug, PartialEq)]
pub struct ScenarioConfig {
    pub seed: u64,
    pub sequence_id: String,
    pub num_frames: usize,
    pub grid_size: usize,
    pub scene: SceneLabel,
    pub num_objects: usize,
    pub noise_floor: f64,
    pub target_amplitude_range: (f64, f64),
    /// Background drift in pixels per frame; zero for Static scenes.
    pub ego_drift: f64,
    pub clutter_points: usize,
    pub clutter_amplitude_range: (f64, f64),
    /// Range streaks drawn per frame in Dynamic scenes.
    pub streaks_per_frame: usize,
    pub streak_amplitude_range: (f64, f64),
}

impl ScenarioConfig {
    /// Defaults for a given scene at a given grid size.
    pub fn new(seed: u64, scene: SceneLabel, grid_size: usize, num_frames: usize) -> Self {
        let scale = grid_size as f64 / 32.0;
        ScenarioConfig {
            seed,
            sequence_id: format!("{}-{seed:06}", scene.as_str()),
            num_frames,
            grid_size,
            scene,
            num_objects: 3,
            noise_floor: 0.05,
            target_amplitude_range: (0.9, 1.2),
            ego_drift: match scene {
                SceneLabel::Static => 0.0,
                SceneLabel::Dynamic => 0.6 * scale,
            },
            clutter_points: (grid_size * grid_size) / 64,
            clutter_amplitude_range: (0.15, 0.4),
            streaks_per_frame: 4,
            streak_amplitude_range: (0.5, 1.0),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.num_frames == 0 {
            return bad("num_frames must be >= 1".into());
        }
        if self.grid_size < 8 {
            return bad(format!("grid_size {} too small (min 8)", self.grid_size));
        }
        if !(self.noise_floor >= 0.0) {
            return bad(format!("noise_floor {} must be >= 0", self.noise_floor));
        }
        let (lo, hi) = self.target_amplitude_range;
        if !(lo > 0.0 && hi >= lo) {
            return bad(format!("target_amplitude_range ({lo}, {hi}) invalid"));
        }
        let (clo, chi) = self.clutter_amplitude_range;
        if !(clo >= 0.0 && chi >= clo) {
            return bad(format!("clutter_amplitude_range ({clo}, {chi}) invalid"));
        }
        let (slo, shi) = self.streak_amplitude_range;
        if !(slo >= 0.0 && shi >= slo) {
            return bad(format!("streak_amplitude_range ({slo}, {shi}) invalid"));
        }
        if self.scene == SceneLabel::Static && self.ego_drift != 0.0 {
            return bad("ego_drift must be 0 for Static scenes".into());
        }
        if !(self.ego_drift >= 0.0) {
            return bad("ego_drift must be >= 0".into());
        }
        Ok(())
    }
}

/// Per-class blob width and speed range in pixels (at grid 32), and phase
/// rotation rate in radians per frame.
fn class_profile(class_id: usize) -> (f64, (f64, f64), (f64, f64)) {
    match class_id {
        0 => (0.7, (0.05, 0.2), (0.0, 0.2)),
        1 => (1.1, (0.2, 0.45), (0.5, 0.8)),
        _ => (1.7, (0.35, 0.7), (1.1, 1.5)),
    }
}

#[derive(Clone, Debug)]
struct Target {
    class_id: usize,
    amplitude: f64,
    sigma: f64,
    phase: f64,
    phase_rate: f64,
    start: (f64, f64),
    velocity: (f64, f64),
}

impl Target {
    /// Continuous (azimuth, range) position at frame `f`.
    fn position(&self, f: usize) -> (f64, f64) {
        (
            self.start.0 + self.velocity.0 * f as f64,
            self.start.1 + self.velocity.1 * f as f64,
        )
    }

    /// Rounded grid cell, if inside the grid.
    fn cell(&self, f: usize, grid: usize) -> Option<(usize, usize)> {
        let (az, rg) = self.position(f);
        let (az, rg) = (az.round(), rg.round());
        let g = grid as f64;
        (az >= 0.0 && rg >= 0.0 && az < g && rg < g).then_some((az as usize, rg as usize))
    }
}

#[derive(Clone, Debug)]
struct Clutter {
    amplitude: f64,
    sigma: f64,
    phase: f64,
    phase_rate: f64,
    position: (f64, f64),
}

/// Deterministic scene content derived from a config, before rendering.
#[derive(Clone, Debug)]
pub struct ScenarioPlan {
    cfg: ScenarioConfig,
    targets: Vec<Target>,
    clutter: Vec<Clutter>,
}

fn uniform(rng: &mut SplitMix64, (lo, hi): (f64, f64)) -> f64 {
    lo + (hi - lo) * rng.random::<f64>()
}

impl ScenarioPlan {
    pub fn new(cfg: &ScenarioConfig) -> Result<Self> {
        cfg.validate()?;
        let mut rng = rng::stream(cfg.seed, rng::TAG_SCENARIO, 0);
        let g = cfg.grid_size as f64;
        let scale = g / 32.0;
        let mut targets: Vec<Target> = Vec::with_capacity(cfg.num_objects);
        for _ in 0..cfg.num_objects {
            // A bounded number of placement attempts; an object that cannot be
            // kept well separated from the others is dropped.
            for _attempt in 0..32 {
                let class_id = rng.random_range(0..NUM_CLASSES);
                let (sigma, speed, spin) = class_profile(class_id);
                let speed = uniform(&mut rng, speed) * scale;
                let heading = uniform(&mut rng, (0.0, std::f64::consts::TAU));
                let mut velocity = (speed * heading.cos(), speed * heading.sin());
                if cfg.scene == SceneLabel::Dynamic {
                    velocity.1 -= cfg.ego_drift * rng.random::<f64>();
                }
                let t = Target {
                    class_id,
                    amplitude: uniform(&mut rng, cfg.target_amplitude_range),
                    sigma: sigma * scale,
                    phase: uniform(&mut rng, (0.0, std::f64::consts::TAU)),
                    phase_rate: uniform(&mut rng, spin) * if rng.random::<bool>() { 1.0 } else { -1.0 },
                    start: (uniform(&mut rng, (2.0, g - 3.0)), uniform(&mut rng, (2.0, g - 3.0))),
                    velocity,
                };
                if targets.iter().all(|o| separated(o, &t, cfg)) {
                    targets.push(t);
                    break;
                }
            }
        }
        let mut crng = rng::stream(cfg.seed, rng::TAG_CLUTTER, 0);
        let clutter = (0..cfg.clutter_points)
            .map(|_| Clutter {
                amplitude: uniform(&mut crng, cfg.clutter_amplitude_range),
                sigma: uniform(&mut crng, (0.6, 1.2)) * scale,
                phase: uniform(&mut crng, (0.0, std::f64::consts::TAU)),
                phase_rate: match cfg.scene {
                    SceneLabel::Static => 0.0,
                    SceneLabel::Dynamic => uniform(&mut crng, (-1.5, 1.5)),
                },
                position: (
                    crng.random_range(0..cfg.grid_size) as f64,
                    crng.random_range(0..cfg.grid_size) as f64,
                ),
            })
            .collect();
        Ok(ScenarioPlan {
            cfg: cfg.clone(),
            targets,
            clutter,
        })
    }

    pub fn config(&self) -> &ScenarioConfig {
        &self.cfg
    }

    pub fn annotations(&self) -> Vec<ObjectAnnotation> {
        let mut out = Vec::new();
        for f in 0..self.cfg.num_frames {
            for t in &self.targets {
                if let Some((az, rg)) = t.cell(f, self.cfg.grid_size) {
                    out.push(ObjectAnnotation {
                        frame_index: f,
                        class_id: t.class_id,
                        range_idx: rg,
                        azimuth_idx: az,
                    });
                }
            }
        }
        out
    }

    /// Targets only, no clutter or noise, as `(2, G, G)`.
    pub fn render_targets(&self, frame: usize) -> Tensor<f32> {
        let g = self.cfg.grid_size;
        let mut re = vec![0.0f64; g * g];
        let mut im = vec![0.0f64; g * g];
        self.add_targets(frame, &mut re, &mut im);
        pack(g, &re, &im)
    }

    fn add_targets(&self, frame: usize, re: &mut [f64], im: &mut [f64]) {
        let g = self.cfg.grid_size;
        for t in &self.targets {
            if let Some((az, rg)) = t.cell(frame, g) {
                let phase = t.phase + t.phase_rate * frame as f64;
                splat(g, re, im, (az as f64, rg as f64), t.sigma, t.amplitude, phase);
            }
        }
    }

    fn add_background(&self, frame: usize, re: &mut [f64], im: &mut [f64]) {
        let g = self.cfg.grid_size;
        let gf = g as f64;
        for c in &self.clutter {
            let rg = (c.position.1 - self.cfg.ego_drift * frame as f64).rem_euclid(gf);
            let phase = c.phase + c.phase_rate * frame as f64;
            splat(g, re, im, (c.position.0, rg), c.sigma, c.amplitude, phase);
        }
        if self.cfg.scene == SceneLabel::Dynamic {
            let mut srng = rng::stream(self.cfg.seed, rng::TAG_CLUTTER, 1 + frame as u64);
            for _ in 0..self.cfg.streaks_per_frame {
                let rg = uniform(&mut srng, (0.0, gf - 1.0));
                let len = srng.random_range(g / 4..=g / 2);
                let az0 = srng.random_range(0..=g - len);
                let amp = uniform(&mut srng, self.cfg.streak_amplitude_range);
                let phase = uniform(&mut srng, (0.0, std::f64::consts::TAU));
                for az in az0..az0 + len {
                    for row in 0..g {
                        let w = (-(row as f64 - rg).powi(2) / (2.0 * 0.7 * 0.7)).exp();
                        if w < 1e-4 {
                            continue;
                        }
                        let i = az * g + row;
                        re[i] += amp * w * phase.cos();
                        im[i] += amp * w * phase.sin();
                    }
                }
            }
        }
    }

    /// Full frame: targets, background and additive Gaussian noise.
    pub fn render_frame(&self, frame: usize) -> Tensor<f32> {
        let g = self.cfg.grid_size;
        let mut re = vec![0.0f64; g * g];
        let mut im = vec![0.0f64; g * g];
        self.add_targets(frame, &mut re, &mut im);
        self.add_background(frame, &mut re, &mut im);
        if self.cfg.noise_floor > 0.0 {
            let mut nrng = rng::stream(self.cfg.seed, rng::TAG_NOISE, frame as u64);
            for v in re.iter_mut().chain(im.iter_mut()) {
                *v += self.cfg.noise_floor * nrng.sample::<f64, _>(StandardNormal);
            }
        }
        pack(g, &re, &im)
    }
}

fn separated(a: &Target, b: &Target, cfg: &ScenarioConfig) -> bool {
    let min_d = 4.0 * (a.sigma + b.sigma);
    (0..cfg.num_frames).all(|f| {
        match (a.cell(f, cfg.grid_size), b.cell(f, cfg.grid_size)) {
            (Some(p), Some(q)) => {
                let d2 = (p.0 as f64 - q.0 as f64).powi(2) + (p.1 as f64 - q.1 as f64).powi(2);
                d2 >= min_d * min_d
            }
            _ => true,
        }
    })
}

fn splat(
    g: usize,
    re: &mut [f64],
    im: &mut [f64],
    (az_c, rg_c): (f64, f64),
    sigma: f64,
    amplitude: f64,
    phase: f64,
) {
    let reach = (3.5 * sigma).ceil() as isize;
    let (ca, cr) = (az_c.round() as isize, rg_c.round() as isize);
    let (cos, sin) = (phase.cos(), phase.sin());
    for az in (ca - reach).max(0)..=(ca + reach).min(g as isize - 1) {
        for rg in (cr - reach).max(0)..=(cr + reach).min(g as isize - 1) {
            let d2 = (az as f64 - az_c).powi(2) + (rg as f64 - rg_c).powi(2);
            let a = amplitude * (-d2 / (2.0 * sigma * sigma)).exp();
            let i = az as usize * g + rg as usize;
            re[i] += a * cos;
            im[i] += a * sin;
        }
    }
}

fn pack(g: usize, re: &[f64], im: &[f64]) -> Tensor<f32> {
    let mut data = Vec::with_capacity(RF_CHANNELS * g * g);
    data.extend(re.iter().map(|&v| v as f32));
    data.extend(im.iter().map(|&v| v as f32));
    Tensor::new(vec![RF_CHANNELS, g, g], data).expect("frame dims")
}

/// Render a full sequence and its per-frame annotations.
pub fn generate_sequence(cfg: &ScenarioConfig) -> Result<(RadarSequence, Vec<ObjectAnnotation>)> {
    let plan = ScenarioPlan::new(cfg)?;
    let frames = (0..cfg.num_frames)
        .map(|f| RadarFrame::new(plan.render_frame(f), f))
        .collect::<Result<Vec<_>>>()?;
    let seq = RadarSequence::new(cfg.sequence_id.clone(), Some(cfg.scene), frames)?;
    Ok((seq, plan.annotations()))
}

/// Magnitude image `sqrt(re² + im²)` of a `(2, G, G)` frame.
pub fn magnitude(frame: &Tensor<f32>) -> Vec<f32> {
    let plane = frame.dims()[1] * frame.dims()[2];
    let (re, im) = frame.data().split_at(plane);
    re.iter().zip(im).map(|(a, b)| a.hypot(*b)).collect()
}

/// Mean squared inter-frame difference over background pixels, i.e. pixels
/// farther than `exclusion` cells from any annotation in either frame.
pub fn background_difference_energy(
    seq: &RadarSequence,
    annotations: &[ObjectAnnotation],
    exclusion: usize,
) -> f64 {
    let g = match seq.grid_size() {
        Some(g) if seq.len() > 1 => g,
        _ => return 0.0,
    };
    let plane = g * g;
    let mut total = 0.0;
    let mut count = 0usize;
    for f in 1..seq.len() {
        let mut mask = vec![true; plane];
        for a in annotations
            .iter()
            .filter(|a| a.frame_index == f || a.frame_index == f - 1)
        {
            let e = exclusion as isize;
            for az in (a.azimuth_idx as isize - e).max(0)..=(a.azimuth_idx as isize + e).min(g as isize - 1) {
                for rg in (a.range_idx as isize - e).max(0)..=(a.range_idx as isize + e).min(g as isize - 1) {
                    mask[az as usize * g + rg as usize] = false;
                }
            }
        }
        let cur = seq.frames()[f].data().data();
        let prev = seq.frames()[f - 1].data().data();
        for c in 0..RF_CHANNELS {
            for (i, keep) in mask.iter().enumerate() {
                if *keep {
                    let d = (cur[c * plane + i] - prev[c * plane + i]) as f64;
                    total += d * d;
                    count += 1;
                }
            }
        }
    }
    if count == 0 {
        0.0
    } else {
        total / count as f64
    }
}
