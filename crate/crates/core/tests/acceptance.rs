//! Acceptance suite. One `[PASS]`/`[FAIL]` line per criterion; the process
//! exits nonzero if any criterion fails. `SLNET_ACCEPTANCE=3,4` restricts the
//! run to the listed criteria.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_xoshiro::SplitMix64;
use serde::{Deserialize, Serialize};

use slnet::codec::{encode_confmap, DEFAULT_SIGMAS, TRUNCATION_SIGMAS};
use slnet::data::{sort_detections, ConfMap, Detection, ObjectAnnotation, RadarSnippet, SceneLabel};
use slnet::eval::{evaluate, ols_thresholds, EvalReport, EvalSequence};
use slnet::geom::{ols, OlsParams, PolarGrid};
use slnet::models::{
    build, evaluate_loss, finetune, train_classifier, train_universal, ArchSpec, ModelCheckpoint, Variant,
};
use slnet::nn::gradcheck::{check_graph_params, check_layer, random_tensor};
use slnet::nn::{Layer, LayerSpec, Mode, BN_EPS};
use slnet::pipeline::{
    classify, cmd_eval, cmd_gen_data, cmd_infer, cmd_train, collect_samples, detect_sequence, generate_corpus,
    labeled_snippets, CorpusEntry, DatasetManifest, ModelEntry, PipelineConfig, SceneChoice, Split,
    DETECTIONS_SUFFIX, REPORT_JSON,
};
use slnet::postproc::{
    border_entry, build_tracks, continuity, lnms, no_collision, postprocess, PostprocPolicy, Track,
};
use slnet::scenemix::{
    apply_policy, extract_noise, noise_mix, video_crop_mix, video_mix, AugmentPolicy, CropRegion, MixKind,
    MixSample, ScenePool,
};
use slnet::synth::{background_difference_energy, generate_sequence, ScenarioConfig};
use slnet::tensor::Tensor;

type Check = std::result::Result<String, String>;

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> std::result::Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn within(elapsed: Duration, budget_s: f64, what: &str) -> std::result::Result<(), String> {
    ensure(elapsed.as_secs_f64() < budget_s, || {
        format!("{what} took {:.1} s, budget {budget_s} s", elapsed.as_secs_f64())
    })
}

fn e2s(e: slnet::Error) -> String {
    e.to_string()
}

// 1. Gradient integrity

fn layer_cases() -> Vec<(LayerSpec, Vec<Vec<usize>>)> {
    let x5 = vec![2, 2, 4, 5, 5];
    vec![
        (
            LayerSpec::Conv2dSpatial { in_channels: 2, out_channels: 3, kernel: 3, stride: 2, padding: 1 },
            vec![x5.clone()],
        ),
        (
            LayerSpec::Conv2dSpatial { in_channels: 3, out_channels: 2, kernel: 3, stride: 1, padding: 0 },
            vec![vec![1, 3, 2, 5, 4]],
        ),
        (
            LayerSpec::Conv1dTemporal { in_channels: 2, out_channels: 3, kernel: 4, stride: 2, padding: 1 },
            vec![x5.clone()],
        ),
        (
            LayerSpec::Conv1dTemporal { in_channels: 2, out_channels: 2, kernel: 3, stride: 1, padding: 1 },
            vec![x5.clone()],
        ),
        (LayerSpec::conv21d(2, 3, 1, 1, true), vec![x5.clone()]),
        (LayerSpec::conv21d(2, 3, 2, 2, true), vec![vec![2, 2, 4, 6, 6]]),
        (LayerSpec::conv21d(2, 3, 2, 2, false), vec![vec![2, 2, 4, 6, 6]]),
        (
            LayerSpec::TransposedConv3d {
                in_channels: 2,
                out_channels: 2,
                kernel: [4, 4, 4],
                stride: [2, 2, 2],
                padding: [1, 1, 1],
            },
            vec![vec![1, 2, 2, 3, 3]],
        ),
        (
            LayerSpec::TransposedConv3d {
                in_channels: 3,
                out_channels: 2,
                kernel: [3, 4, 4],
                stride: [1, 2, 2],
                padding: [1, 1, 1],
            },
            vec![vec![1, 3, 3, 2, 3]],
        ),
        (LayerSpec::UpsampleNearest { factor: [2, 2, 1] }, vec![vec![1, 2, 2, 3, 3]]),
        (
            LayerSpec::Conv3d1x1 { in_channels: 2, out_channels: 3, stride: [2, 2, 2] },
            vec![x5.clone()],
        ),
        (LayerSpec::BatchNorm { channels: 2 }, vec![x5.clone()]),
        (LayerSpec::Relu, vec![x5.clone()]),
        (LayerSpec::Sigmoid, vec![x5.clone()]),
        (LayerSpec::GlobalAvgPool, vec![x5.clone()]),
        (LayerSpec::Linear { in_features: 4, out_features: 3 }, vec![vec![3, 4]]),
        (LayerSpec::Add, vec![x5.clone(), x5.clone(), x5]),
    ]
}

fn kind(spec: &LayerSpec) -> String {
    format!("{spec:?}").split([' ', '{']).next().unwrap_or_default().to_string()
}

fn gradient_integrity() -> Check {
    let start = Instant::now();
    let mut rng = SplitMix64::seed_from_u64(101);
    let mut worst = 0.0f64;
    let mut kinds = std::collections::BTreeSet::new();
    for (spec, shapes) in layer_cases() {
        let mut layer = Layer::<f64>::init(spec.clone(), &mut rng).map_err(e2s)?;
        for b in layer.buffers_mut() {
            for v in b.data_mut() {
                *v += 0.3;
            }
        }
        for p in layer.params_mut() {
            let noise = random_tensor(p.dims(), &mut rng);
            for (v, e) in p.data_mut().iter_mut().zip(noise.data()) {
                *v += 0.1 * e;
            }
        }
        if let LayerSpec::Conv21dBlock { batch_norm, .. } = spec {
            // inner pre-activations sit at least ~1 from the ReLU kink
            let shift = if batch_norm { 3 } else { 1 };
            if !batch_norm {
                layer.params_mut()[0].scale(0.1);
            }
            for (c, v) in layer.params_mut()[shift].data_mut().iter_mut().enumerate() {
                *v = if c % 2 == 0 { 4.0 } else { -4.0 };
            }
        }
        let inputs: Vec<Tensor<f64>> = shapes
            .iter()
            .map(|d| random_tensor(d, &mut rng).map(|v| if v.abs() < 0.05 { v + 0.1 } else { v }))
            .collect();
        let modes: &[Mode] = if spec.buffer_shapes().is_empty() { &[Mode::Train] } else { &[Mode::Train, Mode::Eval] };
        for &mode in modes {
            let report = check_layer(&layer, &inputs, mode, &mut rng).map_err(e2s)?;
            ensure(report.worst() < 1e-4, || format!("{spec:?} {mode:?}: {report:?}"))?;
            worst = worst.max(report.worst());
        }
        kinds.insert(kind(&spec));
    }
    ensure(kinds.len() == 12, || format!("only {} layer kinds covered: {kinds:?}", kinds.len()))?;

    let arch = ArchSpec::new(Variant::C21D, 0.125, 8, 32);
    let g = build::<f64>(&arch, 17).map_err(e2s)?;
    let x = random_tensor(&[1, 2, 8, 32, 32], &mut rng);
    let mut whole = Vec::new();
    for mode in [Mode::Eval, Mode::Train] {
        let err = check_graph_params(&g, &x, mode, 20, &mut rng).map_err(e2s)?;
        ensure(err.is_finite() && err < 1e-3, || format!("whole C21D {mode:?}: {err:.3e}"))?;
        whole.push(err);
    }
    within(start.elapsed(), 120.0, "gradient checks")?;
    Ok(format!(
        "{} kinds, worst per-layer {worst:.2e} < 1e-4; whole C21D w0.125 eval {:.2e}, train {:.2e} < 1e-3; {:.1} s < 120 s",
        kinds.len(),
        whole[0],
        whole[1],
        start.elapsed().as_secs_f64()
    ))
}

// 2. Convolution oracle

struct BlockCase {
    cin: usize,
    mid: usize,
    cout: usize,
    k: usize,
    s: usize,
    p: usize,
    kt: usize,
    st: usize,
    pt: usize,
    bn: bool,
}

/// Nested-loop (2+1)D block: spatial conv, batch norm, ReLU, temporal conv.
fn naive_block(c: &BlockCase, x: &Tensor<f64>, params: &[Tensor<f64>], buffers: &[Tensor<f64>], train: bool) -> Tensor<f64> {
    let d = x.dims();
    let (n, t, w, h) = (d[0], d[2], d[3], d[4]);
    let wo = (w + 2 * c.p - c.k) / c.s + 1;
    let ho = (h + 2 * c.p - c.k) / c.s + 1;
    let (ws, bs) = (&params[0], &params[1]);
    let mut z = Tensor::<f64>::zeros(&[n, c.mid, t, wo, ho]);
    for b in 0..n {
        for m in 0..c.mid {
            for tt in 0..t {
                for i in 0..wo {
                    for j in 0..ho {
                        let mut acc = bs.get(&[m]);
                        for ci in 0..c.cin {
                            for u in 0..c.k {
                                for v in 0..c.k {
                                    let (a, r) = ((i * c.s + u) as isize - c.p as isize, (j * c.s + v) as isize - c.p as isize);
                                    if a >= 0 && r >= 0 && (a as usize) < w && (r as usize) < h {
                                        acc += ws.get(&[m, ci, 0, u, v]) * x.get(&[b, ci, tt, a as usize, r as usize]);
                                    }
                                }
                            }
                        }
                        z.set(&[b, m, tt, i, j], acc);
                    }
                }
            }
        }
    }
    let mut wi = 2;
    if c.bn {
        let (gamma, beta) = (&params[2], &params[3]);
        wi = 4;
        let per = n * t * wo * ho;
        for m in 0..c.mid {
            let vals: Vec<f64> = (0..n)
                .flat_map(|b| (0..t).flat_map(move |tt| (0..wo).flat_map(move |i| (0..ho).map(move |j| [b, m, tt, i, j]))))
                .map(|ix| z.get(&ix))
                .collect();
            let (mean, var) = if train {
                let mean = vals.iter().sum::<f64>() / per as f64;
                (mean, vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / per as f64)
            } else {
                (buffers[0].get(&[m]), buffers[1].get(&[m]))
            };
            for b in 0..n {
                for tt in 0..t {
                    for i in 0..wo {
                        for j in 0..ho {
                            let v = z.get(&[b, m, tt, i, j]);
                            z.set(&[b, m, tt, i, j], (v - mean) / (var + BN_EPS).sqrt() * gamma.get(&[m]) + beta.get(&[m]));
                        }
                    }
                }
            }
        }
    }
    let r = z.map(|v| v.max(0.0));
    let (wt, bt) = (&params[wi], &params[wi + 1]);
    let to = (t + 2 * c.pt - c.kt) / c.st + 1;
    let mut y = Tensor::<f64>::zeros(&[n, c.cout, to, wo, ho]);
    for b in 0..n {
        for o in 0..c.cout {
            for tt in 0..to {
                for i in 0..wo {
                    for j in 0..ho {
                        let mut acc = bt.get(&[o]);
                        for m in 0..c.mid {
                            for q in 0..c.kt {
                                let src = (tt * c.st + q) as isize - c.pt as isize;
                                if src >= 0 && (src as usize) < t {
                                    acc += wt.get(&[o, m, q, 0, 0]) * r.get(&[b, m, src as usize, i, j]);
                                }
                            }
                        }
                        y.set(&[b, o, tt, i, j], acc);
                    }
                }
            }
        }
    }
    y
}

fn convolution_oracle() -> Check {
    let mut rng = SplitMix64::seed_from_u64(202);
    let mut worst = 0.0f64;
    let mut bn_cases = 0;
    for case in 0..50 {
        let k = if rng.random_bool(0.8) { 3 } else { 1 };
        let kt = rng.random_range(1..=4);
        let c = BlockCase {
            cin: rng.random_range(1..=3),
            mid: rng.random_range(1..=4),
            cout: rng.random_range(1..=3),
            k,
            s: rng.random_range(1..=2),
            p: rng.random_range(0..k),
            kt,
            st: rng.random_range(1..=2),
            pt: rng.random_range(0..kt),
            bn: case % 2 == 0,
        };
        let n = rng.random_range(1..=2);
        let t = rng.random_range(kt.max(2)..=5);
        let (w, h) = (rng.random_range(3..=7), rng.random_range(3..=7));
        let spec = LayerSpec::Conv21dBlock {
            in_channels: c.cin,
            mid_channels: c.mid,
            out_channels: c.cout,
            spatial_kernel: c.k,
            spatial_stride: c.s,
            spatial_padding: c.p,
            temporal_kernel: c.kt,
            temporal_stride: c.st,
            temporal_padding: c.pt,
            batch_norm: c.bn,
        };
        let params: Vec<Tensor<f64>> = spec.param_shapes().iter().map(|(_, d)| random_tensor(d, &mut rng)).collect();
        let buffers: Vec<Tensor<f64>> = spec
            .buffer_shapes()
            .iter()
            .map(|(name, d)| {
                let r = random_tensor(d, &mut rng);
                if name.ends_with("var") { r.map(|v| 0.2 + v.abs()) } else { r }
            })
            .collect();
        let layer = Layer::from_parts(spec.clone(), params.clone(), buffers.clone()).map_err(e2s)?;
        let x = random_tensor(&[n, c.cin, t, w, h], &mut rng);
        let modes: &[Mode] = if c.bn { &[Mode::Eval, Mode::Train] } else { &[Mode::Eval] };
        for &mode in modes {
            let (got, _) = layer.forward(&x, mode).map_err(e2s)?;
            let want = naive_block(&c, &x, &params, &buffers, mode == Mode::Train);
            ensure(got.dims() == want.dims(), || format!("case {case}: dims {:?} vs {:?}", got.dims(), want.dims()))?;
            let diff = got.max_abs_diff(&want);
            ensure(diff <= 1e-6, || format!("case {case} {spec:?} {mode:?}: max diff {diff:.3e}"))?;
            worst = worst.max(diff);
        }
        bn_cases += c.bn as usize;
    }
    Ok(format!("50 random blocks ({bn_cases} with batch norm, eval and train), max abs diff {worst:.2e} <= 1e-6"))
}

// 3. Codec round trip

fn well_separated(a: &ObjectAnnotation, b: &ObjectAnnotation, grid: &PolarGrid, params: &OlsParams, nms: f64) -> bool {
    if a.frame_index != b.frame_index || a.class_id != b.class_id {
        return true;
    }
    let reach = (2.0 * TRUNCATION_SIGMAS * DEFAULT_SIGMAS[a.class_id]).ceil() as usize + 1;
    let cheb = a.range_idx.abs_diff(b.range_idx).max(a.azimuth_idx.abs_diff(b.azimuth_idx));
    cheb > reach && ols(a, b, grid, params) <= nms && ols(b, a, grid, params) <= nms
}

fn codec_round_trip() -> Check {
    let start = Instant::now();
    let grid = PolarGrid::default();
    let params = OlsParams::new(vec![0.1, 0.14, 0.2]).map_err(e2s)?;
    let policy = PostprocPolicy::default();
    let mut rng = SplitMix64::seed_from_u64(303);
    let mut total = 0;
    for scene in 0..100 {
        let frames = rng.random_range(1..=4);
        let mut anns: Vec<ObjectAnnotation> = Vec::new();
        for f in 0..frames {
            let want = rng.random_range(1..=6);
            let mut placed = 0;
            let mut tries = 0;
            while placed < want && tries < 1000 {
                tries += 1;
                let cand = ObjectAnnotation {
                    frame_index: f,
                    class_id: rng.random_range(0..3),
                    range_idx: rng.random_range(0..grid.grid_size),
                    azimuth_idx: rng.random_range(0..grid.grid_size),
                };
                if anns.iter().all(|a| well_separated(a, &cand, &grid, &params, policy.nms_ols_threshold)) {
                    anns.push(cand);
                    placed += 1;
                }
            }
        }
        let map = encode_confmap(&anns, frames, grid.grid_size, &DEFAULT_SIGMAS).map_err(e2s)?;
        let mut got = Vec::new();
        for t in 0..frames {
            let plane: Vec<f32> = (0..3).flat_map(|c| map.plane(c, t).to_vec()).collect();
            let frame = Tensor::new(vec![3, grid.grid_size, grid.grid_size], plane).map_err(e2s)?;
            got.extend(lnms(&frame, t, &policy, &grid, &params).map_err(e2s)?);
        }
        let mut want: Vec<Detection> = anns
            .iter()
            .map(|a| Detection { frame_index: a.frame_index, class_id: a.class_id, range_idx: a.range_idx, azimuth_idx: a.azimuth_idx, confidence: 1.0 })
            .collect();
        sort_detections(&mut want);
        sort_detections(&mut got);
        ensure(got == want, || format!("scene {scene}: decoded {got:?}, annotated {want:?}"))?;
        total += anns.len();
    }
    within(start.elapsed(), 10.0, "round trip")?;
    Ok(format!("100 scenes, {total}/{total} annotations recovered exactly at confidence 1.0 in {:.2} s < 10 s", start.elapsed().as_secs_f64()))
}

// 4. SceneMix laws

fn random_sample(rng: &mut SplitMix64, scene: SceneLabel, dims: [usize; 3]) -> MixSample {
    let [t, w, h] = dims;
    let snip = Tensor::from_fn(&[2, t, w, h], |_| rng.random_range(-1.0f32..1.0));
    let conf = Tensor::from_fn(&[3, t, w, h], |_| if rng.random_bool(0.3) { rng.random_range(0.0f32..=1.0) } else { 0.0 });
    MixSample::new(
        RadarSnippet::new(snip, "seq", 0, Some(scene)).expect("valid snippet"),
        ConfMap::new(conf).expect("valid confmap"),
        scene,
    )
    .expect("consistent sample")
}

fn same_scene_pair(rng: &mut SplitMix64) -> (MixSample, MixSample) {
    let scene = if rng.random_bool(0.5) { SceneLabel::Static } else { SceneLabel::Dynamic };
    let dims = [rng.random_range(1..=4), rng.random_range(2..=6), rng.random_range(2..=6)];
    (random_sample(rng, scene, dims), random_sample(rng, scene, dims))
}

fn bits(t: &Tensor<f32>) -> Vec<u32> {
    t.data().iter().map(|v| v.to_bits()).collect()
}

fn scenemix_laws() -> Check {
    const CASES: usize = 1000;
    let mut rng = SplitMix64::seed_from_u64(404);
    for case in 0..CASES {
        let (a, b) = same_scene_pair(&mut rng);
        let one = video_mix(&a, &b, 1.0).map_err(e2s)?;
        let zero = video_mix(&a, &b, 0.0).map_err(e2s)?;
        ensure(bits(&one.snippet.data) == bits(&a.snippet.data) && one.confmap == a.confmap, || format!("case {case}: λ=1 is not a"))?;
        ensure(bits(&zero.snippet.data) == bits(&b.snippet.data) && zero.confmap == b.confmap, || format!("case {case}: λ=0 is not b"))?;
    }
    for case in 0..CASES {
        let (a, b) = same_scene_pair(&mut rng);
        let lambda: f64 = rng.random();
        let ab = video_mix(&a, &b, lambda).map_err(e2s)?;
        let ba = video_mix(&b, &a, 1.0 - lambda).map_err(e2s)?;
        let d = ab.snippet.data.max_abs_diff(&ba.snippet.data).max(ab.confmap.data().max_abs_diff(ba.confmap.data()));
        ensure(d <= 1e-6, || format!("case {case}: mix(a,b,{lambda}) vs mix(b,a,1-λ) differ by {d:.2e}"))?;
        let dims = a.snippet.data.dims().to_vec();
        let (az0, r0) = (rng.random_range(0..=dims[2]), rng.random_range(0..=dims[3]));
        let region = CropRegion {
            az_start: az0,
            az_end: rng.random_range(az0..=dims[2]),
            range_start: r0,
            range_end: rng.random_range(r0..=dims[3]),
        };
        let m = video_crop_mix(&a, &b, region).map_err(e2s)?;
        for (out, x, y) in [
            (&m.snippet.data, &a.snippet.data, &b.snippet.data),
            (m.confmap.data(), a.confmap.data(), b.confmap.data()),
        ] {
            let d = out.dims();
            for c in 0..d[0] {
                for t in 0..d[1] {
                    for az in 0..d[2] {
                        for r in 0..d[3] {
                            let inside = (region.az_start..region.az_end).contains(&az) && (region.range_start..region.range_end).contains(&r);
                            let src = if inside { y } else { x };
                            ensure(out.get(&[c, t, az, r]).to_bits() == src.get(&[c, t, az, r]).to_bits(), || {
                                format!("case {case}: crop {region:?} wrong at {:?}", [c, t, az, r])
                            })?;
                        }
                    }
                }
            }
        }
    }
    for case in 0..CASES {
        let (a, b) = same_scene_pair(&mut rng);
        let th = rng.random_range(0.05..0.95);
        let m = noise_mix(&a, &b, th).map_err(e2s)?;
        ensure(bits(m.confmap.data()) == bits(a.confmap.data()), || format!("case {case}: NoiseMix changed the ConfMap"))?;
        let noise = extract_noise(&b, th);
        let mut expect = a.snippet.data.clone();
        expect.add_assign(&noise).map_err(e2s)?;
        let d = m.snippet.data.max_abs_diff(&expect);
        ensure(d <= 1e-6, || format!("case {case}: NoiseMix snippet is not target + noise ({d:.2e})"))?;
    }
    for case in 0..CASES {
        let dims = [rng.random_range(1..=4), rng.random_range(2..=6), rng.random_range(2..=6)];
        let a = random_sample(&mut rng, SceneLabel::Static, dims);
        let b = random_sample(&mut rng, SceneLabel::Dynamic, dims);
        let (x, y) = if case % 2 == 0 { (&a, &b) } else { (&b, &a) };
        let full = CropRegion { az_start: 0, az_end: dims[1], range_start: 0, range_end: dims[2] };
        for (what, r) in [
            ("VideoMix", video_mix(x, y, 0.5).err()),
            ("VideoCropMix", video_crop_mix(x, y, full).err()),
            ("NoiseMix", noise_mix(x, y, 0.2).err()),
        ] {
            ensure(matches!(r, Some(slnet::Error::SceneMismatch(_))), || format!("case {case}: cross-scene {what} gave {r:?}"))?;
        }
        let pool_samples = vec![y.clone()];
        let pool = ScenePool::new(&pool_samples);
        let always = AugmentPolicy { p_videomix: 1.0, p_videocropmix: 0.0, p_noisemix: 0.0, ..Default::default() };
        ensure(apply_policy(x, &pool, &always, case as u64).is_err(), || format!("case {case}: pool partner from another scene"))?;
    }

    let mut rng = SplitMix64::seed_from_u64(405);
    let pool_samples: Vec<MixSample> = (0..4).map(|_| random_sample(&mut rng, SceneLabel::Static, [2, 4, 4])).collect();
    let pool = ScenePool::new(&pool_samples);
    let policy = AugmentPolicy::default();
    let draws = 10_000;
    let mut counts: BTreeMap<&str, usize> = BTreeMap::new();
    let mut noise = 0;
    for key in 0..draws {
        let (out, rec) = apply_policy(&pool_samples[key % 4], &pool, &policy, key as u64).map_err(e2s)?;
        ensure(out.scene == SceneLabel::Static, || "augmented sample changed scene".into())?;
        let name = match rec.mix {
            MixKind::Identity => "identity",
            MixKind::VideoMix => "videomix",
            MixKind::VideoCropMix => "videocropmix",
        };
        *counts.entry(name).or_default() += 1;
        noise += rec.noise as usize;
    }
    let freq = |k: &str| counts.get(k).copied().unwrap_or(0) as f64 / draws as f64;
    let noise_rate = noise as f64 / draws as f64;
    for k in ["videomix", "videocropmix", "identity"] {
        ensure((freq(k) - 1.0 / 3.0).abs() <= 0.02, || format!("{k} frequency {:.4} outside 1/3 ± 0.02", freq(k)))?;
    }
    ensure((noise_rate - 0.5).abs() <= 0.02, || format!("noise rate {noise_rate:.4} outside 1/2 ± 0.02"))?;
    Ok(format!(
        "4 laws x {CASES} cases hold; frequencies over {draws} draws: VideoMix {:.4}, VideoCropMix {:.4}, identity {:.4}, NoiseMix {noise_rate:.4} (± 0.02)",
        freq("videomix"),
        freq("videocropmix"),
        freq("identity"),
    ))
}

// 5. Post-processing rules

fn det(frame: usize, class_id: usize, r: usize, a: usize, c: f32) -> Detection {
    Detection { frame_index: frame, class_id, range_idx: r, azimuth_idx: a, confidence: c }
}

fn postproc_rules() -> Check {
    let g = PolarGrid::default();
    let p = OlsParams::new(vec![0.1, 0.14, 0.2]).map_err(e2s)?;
    let pol = PostprocPolicy::default();
    let mut passed = Vec::new();

    let car = det(0, 2, 50, 50, 0.9);
    let ped = det(0, 0, 50, 50, 0.7);
    let cyc = det(0, 1, 50, 50, 0.8);
    let twin = det(0, 2, 50, 50, 0.5);
    ensure(no_collision(&[ped, car], &pol, &g, &p) == vec![car], || "collision keeps the pedestrian".into())?;
    ensure(no_collision(&[car, twin], &pol, &g, &p).len() == 2, || "collision removed a same-class twin".into())?;
    ensure(no_collision(&[ped, cyc, car], &pol, &g, &p) == vec![car], || "three-way collision".into())?;
    passed.push("collision");

    let frames: Vec<Vec<Detection>> = (0..5).map(|f| vec![det(f, 0, 60 + f, 64, 0.9)]).collect();
    let t = build_tracks(&frames, &pol, &g, &p);
    ensure(t.len() == 1 && t[0].points.len() == 5, || format!("moving object gave tracks {t:?}"))?;
    let mut gappy = vec![Vec::new(); 8];
    for f in [0, 3, 7] {
        gappy[f].push(det(f, 0, 60, 64, 0.9));
    }
    let t = build_tracks(&gappy, &pol, &g, &p);
    ensure(t.len() == 2 && t[0].points.len() == 2, || format!("long gap gave tracks {t:?}"))?;
    passed.push("tracking");

    let pts: Vec<Detection> = [0usize, 1, 2, 4, 5, 6]
        .iter()
        .map(|&f| det(f, 2, 50 + 2 * f, 30 + 2 * f, if f == 2 { 0.8 } else { 0.6 }))
        .collect();
    let t = continuity(vec![Track { track_id: 0, class_id: 2, points: pts }], &pol, &g, &p);
    let f3 = t[0].points[3];
    ensure(
        t[0].points.len() == 7
            && (f3.frame_index, f3.range_idx, f3.azimuth_idx, f3.class_id) == (3, 56, 36, 2)
            && (f3.confidence - 0.7).abs() < 1e-6,
        || format!("gap fill gave {f3:?}"),
    )?;
    let wide = vec![det(2, 0, 60, 60, 0.9), det(6, 0, 60, 60, 0.9)];
    let t = continuity(vec![Track { track_id: 0, class_id: 0, points: wide.clone() }], &pol, &g, &p);
    ensure(t[0].points == wide, || "gap wider than max_gap was filled".into())?;
    let main = Track {
        track_id: 0,
        class_id: 2,
        points: vec![det(0, 2, 60, 60, 0.9), det(1, 2, 60, 60, 0.9), det(3, 2, 60, 60, 0.9)],
    };
    let flip = Track { track_id: 1, class_id: 0, points: vec![det(2, 0, 60, 60, 0.4)] };
    let t = continuity(vec![main, flip], &pol, &g, &p);
    ensure(t.len() == 1 && t[0].points[2] == det(2, 2, 60, 60, 0.4), || format!("class flip gave {t:?}"))?;
    passed.push("gap fill");

    let mk = |f0: usize, r: usize, a: usize, len: usize| Track {
        track_id: 0,
        class_id: 0,
        points: (0..len).map(|k| det(f0 + k, 0, r, a, 0.9)).collect(),
    };
    ensure(border_entry(vec![mk(50, 64, 64, 4)], &pol, 128, 0).is_empty(), || "mid-grid pop-up kept".into())?;
    for (what, tr) in [
        ("azimuth border", mk(50, 64, 2, 4)),
        ("far range border", mk(50, 125, 64, 4)),
        ("sequence start", mk(0, 64, 64, 4)),
        ("long track", mk(50, 64, 64, 30)),
    ] {
        ensure(border_entry(vec![tr], &pol, 128, 0).len() == 1, || format!("{what} entry deleted"))?;
    }
    ensure(border_entry(vec![mk(50, 64, 64, 29)], &pol, 128, 0).is_empty(), || "short mid-grid track kept".into())?;
    passed.push("border deletion");

    let mut anns = Vec::new();
    for f in 0..60 {
        anns.push(ObjectAnnotation { frame_index: f, class_id: 2, range_idx: 40, azimuth_idx: 5 + f });
    }
    for f in 50..54 {
        anns.push(ObjectAnnotation { frame_index: f, class_id: 0, range_idx: 90, azimuth_idx: 64 });
    }
    let m = encode_confmap(&anns, 60, 128, &DEFAULT_SIGMAS).map_err(e2s)?;
    let s = postprocess(&m, SceneLabel::Static, &pol, &g, &p).map_err(e2s)?;
    let d = postprocess(&m, SceneLabel::Dynamic, &pol, &g, &p).map_err(e2s)?;
    ensure(s.len() == 60 && s.iter().all(|x| x.class_id == 2), || format!("Static kept {} detections", s.len()))?;
    ensure(d.len() == 64 && d.iter().filter(|x| x.class_id == 0).count() == 4, || format!("Dynamic kept {} detections", d.len()))?;
    let clean: Vec<ObjectAnnotation> = (0..20)
        .map(|f| ObjectAnnotation { frame_index: f, class_id: 1, range_idx: 60, azimuth_idx: 3 + f })
        .collect();
    let m = encode_confmap(&clean, 20, 128, &DEFAULT_SIGMAS).map_err(e2s)?;
    let s = postprocess(&m, SceneLabel::Static, &pol, &g, &p).map_err(e2s)?;
    let d = postprocess(&m, SceneLabel::Dynamic, &pol, &g, &p).map_err(e2s)?;
    ensure(s == d && s.len() == 20, || "clean track differs between scenes".into())?;
    passed.push("Static vs Dynamic divergence");
    Ok(format!("rule examples pass exactly: {}", passed.join(", ")))
}

// 6. Evaluator oracle

fn naive_ols(g: &ObjectAnnotation, d: &Detection, grid: &PolarGrid, kappa: &[f64]) -> f64 {
    let (r1, a1) = (grid.range_m(g.range_idx as f64), grid.azimuth_rad(g.azimuth_idx as f64));
    let (r2, a2) = (grid.range_m(d.range_idx as f64), grid.azimuth_rad(d.azimuth_idx as f64));
    let d2 = (r1 * r1 + r2 * r2 - 2.0 * r1 * r2 * (a1 - a2).cos()).max(0.0);
    let tol = r1 * kappa[g.class_id.min(kappa.len() - 1)];
    (-d2 / (2.0 * tol * tol)).exp()
}

/// `(tp, fp, fn)` of one frame by exhaustive greedy matching.
fn naive_match(dets: &[Detection], gts: &[ObjectAnnotation], t: f64, grid: &PolarGrid, kappa: &[f64]) -> [usize; 3] {
    let mut dets = dets.to_vec();
    dets.sort_by(|a, b| {
        b.confidence
            .partial_cmp(&a.confidence)
            .unwrap()
            .then((a.class_id, a.range_idx, a.azimuth_idx).cmp(&(b.class_id, b.range_idx, b.azimuth_idx)))
    });
    let mut gts = gts.to_vec();
    gts.sort_by_key(|g| (g.class_id, g.range_idx, g.azimuth_idx));
    let mut taken = vec![false; gts.len()];
    let mut tp = 0;
    for d in &dets {
        let mut best: Option<(f64, usize)> = None;
        for (i, g) in gts.iter().enumerate() {
            if taken[i] || g.class_id != d.class_id {
                continue;
            }
            let s = naive_ols(g, d, grid, kappa);
            if s >= t && best.map_or(true, |(bs, _)| s > bs) {
                best = Some((s, i));
            }
        }
        if let Some((_, i)) = best {
            taken[i] = true;
            tp += 1;
        }
    }
    [tp, dets.len() - tp, gts.len() - tp]
}

fn naive_pr(c: [usize; 3]) -> (f64, f64) {
    let [tp, fp, fnc] = c;
    let p = match (tp + fp, fnc) {
        (0, 0) => 1.0,
        (0, _) => 0.0,
        (n, _) => tp as f64 / n as f64,
    };
    let r = if tp + fnc == 0 { 1.0 } else { tp as f64 / (tp + fnc) as f64 };
    (p, r)
}

fn random_instance(rng: &mut SplitMix64, grid_size: usize) -> EvalSequence {
    let frames = rng.random_range(1..=3);
    let mut gts = Vec::new();
    let mut dets = Vec::new();
    let confs = [0.3f32, 0.5, 0.7, 0.9, 0.95];
    for f in 0..frames {
        let n = rng.random_range(0..=6);
        let mut frame_gts: Vec<ObjectAnnotation> = Vec::new();
        while frame_gts.len() < n {
            let g = ObjectAnnotation {
                frame_index: f,
                class_id: rng.random_range(0..3),
                range_idx: rng.random_range(0..grid_size),
                azimuth_idx: rng.random_range(0..grid_size),
            };
            if !frame_gts.iter().any(|o| (o.class_id, o.range_idx, o.azimuth_idx) == (g.class_id, g.range_idx, g.azimuth_idx)) {
                frame_gts.push(g);
            }
        }
        let mut frame_dets = Vec::new();
        for g in &frame_gts {
            if rng.random_bool(0.75) {
                let jitter = |v: usize, rng: &mut SplitMix64| (v as i64 + rng.random_range(-2i64..=2)).clamp(0, grid_size as i64 - 1) as usize;
                let class_id = if rng.random_bool(0.9) { g.class_id } else { rng.random_range(0..3) };
                frame_dets.push(det(f, class_id, jitter(g.range_idx, rng), jitter(g.azimuth_idx, rng), confs[rng.random_range(0..confs.len())]));
            }
        }
        while frame_dets.len() < 6 && rng.random_bool(0.3) {
            frame_dets.push(det(
                f,
                rng.random_range(0..3),
                rng.random_range(0..grid_size),
                rng.random_range(0..grid_size),
                confs[rng.random_range(0..confs.len())],
            ));
        }
        gts.extend(frame_gts);
        dets.extend(frame_dets);
    }
    EvalSequence {
        sequence_id: "instance".into(),
        scene: SceneLabel::Static,
        num_frames: frames,
        detections: dets,
        ground_truth: gts,
    }
}

fn evaluator_oracle() -> Check {
    let cfg = PipelineConfig::default();
    let grid = cfg.polar_grid().map_err(e2s)?;
    let params = cfg.ols_params().map_err(e2s)?;
    let ts = ols_thresholds();
    ensure(ts.len() == 9, || format!("{} thresholds", ts.len()))?;
    let mut rng = SplitMix64::seed_from_u64(606);
    let mut matched_any = 0;
    for inst in 0..500 {
        let seq = random_instance(&mut rng, grid.grid_size);
        let report = evaluate(std::slice::from_ref(&seq), &ts, &cfg.class_names, &grid, &params).map_err(e2s)?;
        let mut sum_p = 0.0;
        let mut sum_r = 0.0;
        for (ti, &t) in ts.iter().enumerate() {
            let mut c = [0usize; 3];
            for f in 0..seq.num_frames {
                let d: Vec<Detection> = seq.detections.iter().filter(|d| d.frame_index == f).copied().collect();
                let g: Vec<ObjectAnnotation> = seq.ground_truth.iter().filter(|g| g.frame_index == f).copied().collect();
                let m = naive_match(&d, &g, t, &grid, &params.kappa);
                for k in 0..3 {
                    c[k] += m[k];
                }
            }
            let got = &report.overall.per_threshold[ti];
            ensure([got.tp, got.fp, got.fn_count] == c, || {
                format!("instance {inst} t={t}: evaluator {:?}, oracle {c:?}", [got.tp, got.fp, got.fn_count])
            })?;
            let (p, r) = naive_pr(c);
            ensure(got.precision == p && got.recall == r, || format!("instance {inst} t={t}: precision/recall"))?;
            sum_p += p;
            sum_r += r;
            matched_any += (c[0] > 0) as usize;
        }
        ensure((report.overall.ap - sum_p / 9.0).abs() < 1e-12 && (report.overall.ar - sum_r / 9.0).abs() < 1e-12, || {
            format!("instance {inst}: AP/AR disagree")
        })?;
        for w in report.overall.per_threshold.windows(2) {
            ensure(w[1].precision <= w[0].precision && w[1].recall <= w[0].recall, || {
                format!("instance {inst}: precision/recall rise from t={} to t={}", w[0].threshold, w[1].threshold)
            })?;
        }
        let perfect = EvalSequence {
            detections: seq.ground_truth.iter().map(|g| det(g.frame_index, g.class_id, g.range_idx, g.azimuth_idx, 1.0)).collect(),
            ..seq.clone()
        };
        let r = evaluate(&[perfect], &ts, &cfg.class_names, &grid, &params).map_err(e2s)?;
        ensure(r.overall.ap == 1.0 && r.overall.ar == 1.0, || format!("instance {inst}: perfect detections scored {} / {}", r.overall.ap, r.overall.ar))?;
    }
    ensure(matched_any > 500, || "instances rarely produce matches".into())?;
    Ok(format!("500 instances x 9 thresholds agree with the naive matcher; precision and recall monotone; perfect detections AP = AR = 1.0 ({matched_any} threshold-instances with matches)"))
}

// 7. Scene classifier and synthetic separability

fn classifier_accuracy() -> Check {
    let start = Instant::now();
    let mut statics = Vec::new();
    let mut dynamics = Vec::new();
    for seed in 0..20u64 {
        for (scene, out) in [(SceneLabel::Static, &mut statics), (SceneLabel::Dynamic, &mut dynamics)] {
            let (seq, anns) = generate_sequence(&ScenarioConfig::new(seed, scene, 32, 24)).map_err(e2s)?;
            out.push(background_difference_energy(&seq, &anns, 3));
        }
    }
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    let (ms, md) = (mean(&statics), mean(&dynamics));
    ensure(md > ms, || format!("Dynamic energy {md:.4} not above Static {ms:.4}"))?;
    let s_max = statics.iter().cloned().fold(f64::MIN, f64::max);
    let d_min = dynamics.iter().cloned().fold(f64::MAX, f64::min);
    ensure(s_max < d_min, || format!("energy threshold cannot separate: static max {s_max:.4}, dynamic min {d_min:.4}"))?;

    let mut cfg = PipelineConfig::default();
    cfg.seed = 7;
    cfg.data.static_sequences = 14;
    cfg.data.dynamic_sequences = 14;
    cfg.data.val_static = 4;
    cfg.data.val_dynamic = 4;
    ensure(cfg.grid.grid_size == 32 && cfg.data.window == 8, || "desk grid or window changed".into())?;
    let corpus = generate_corpus(&cfg).map_err(e2s)?;
    let (train, test): (Vec<&CorpusEntry>, Vec<&CorpusEntry>) = corpus.iter().partition(|e| e.split == Split::Train);
    ensure(train.len() == 20 && test.len() == 8, || format!("{} train, {} test", train.len(), test.len()))?;
    let mut snippets = Vec::new();
    for e in &train {
        snippets.extend(labeled_snippets(&e.sequence, &cfg).map_err(e2s)?);
    }
    let plan = slnet::pipeline::effective_plan(&cfg);
    let out = train_classifier(&snippets, &[], &plan, &cfg.classifier_arch()).map_err(e2s)?;
    let mut correct = 0;
    for e in &test {
        if classify(&out.checkpoint, &e.sequence, &cfg).map_err(e2s)? == e.scene() {
            correct += 1;
        }
    }
    ensure(correct == test.len(), || format!("held-out accuracy {correct}/{}", test.len()))?;
    within(start.elapsed(), 600.0, "classifier")?;
    Ok(format!(
        "held-out accuracy {correct}/{} = 100% (grid 32, window 8, 20 train sequences); background energy Static {ms:.4} < Dynamic {md:.4}, threshold separates 40/40; {:.0} s < 600 s",
        test.len(),
        start.elapsed().as_secs_f64()
    ))
}

// 8 and 10. Desk-scale training runs with recorded fixtures

#[derive(Clone, Debug, Default, Serialize, Deserialize, PartialEq)]
struct AblationRow {
    seed: u64,
    ap_augmented: f64,
    ap_vanilla: f64,
    ap_static_universal: f64,
    ap_static_branch: f64,
    ap_dynamic_universal: f64,
    ap_dynamic_branch: f64,
}

#[derive(Clone, Debug, Default, Serialize, Deserialize, PartialEq)]
struct Fixtures {
    #[serde(default)]
    ablation: Vec<AblationRow>,
    #[serde(default)]
    ensemble: BTreeMap<String, f64>,
}

fn fixture_path() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/acceptance.json")
}

fn load_fixtures() -> Fixtures {
    std::fs::read_to_string(fixture_path())
        .ok()
        .and_then(|s| serde_json::from_str(&s).ok())
        .unwrap_or_default()
}

fn store_fixtures(f: &Fixtures) -> std::result::Result<(), String> {
    let path = fixture_path();
    std::fs::create_dir_all(path.parent().expect("has parent")).map_err(|e| e.to_string())?;
    std::fs::write(&path, serde_json::to_string_pretty(f).map_err(|e| e.to_string())? + "\n").map_err(|e| e.to_string())
}

const REGRESSION_TOLERANCE: f64 = 2.0;

fn regression(name: &str, got: f64, recorded: f64) -> std::result::Result<(), String> {
    ensure((got - recorded).abs() <= REGRESSION_TOLERANCE, || {
        format!("{name} {got:.2} AP drifted from recorded {recorded:.2} by more than {REGRESSION_TOLERANCE}")
    })
}

fn ablation_cfg(seed: u64) -> PipelineConfig {
    let mut cfg = PipelineConfig::default();
    cfg.seed = seed;
    cfg.data.static_sequences = 24;
    cfg.data.dynamic_sequences = 8;
    cfg.data.val_static = 6;
    cfg.data.val_dynamic = 2;
    cfg.models = vec![ModelEntry { variant: Variant::C21D, width_multiplier: 0.125 }];
    cfg
}

/// AP in points over `val`, each sequence decoded under its true scene.
fn val_ap(models: &[&ModelCheckpoint], val: &[&CorpusEntry], cfg: &PipelineConfig) -> std::result::Result<f64, String> {
    let seqs = val
        .iter()
        .map(|e| {
            let d = detect_sequence(models, &e.sequence, e.scene(), cfg)?;
            Ok(EvalSequence {
                sequence_id: e.sequence.sequence_id().into(),
                scene: e.scene(),
                num_frames: e.sequence.len(),
                detections: d.constrained,
                ground_truth: e.annotations.clone(),
            })
        })
        .collect::<slnet::Result<Vec<_>>>()
        .map_err(e2s)?;
    let r: EvalReport = evaluate(&seqs, &cfg.eval_thresholds, &cfg.class_names, &cfg.polar_grid().map_err(e2s)?, &cfg.ols_params().map_err(e2s)?)
        .map_err(e2s)?;
    Ok(100.0 * r.overall.ap)
}

fn moving_average_decreases(losses: &[f64], window: usize) -> bool {
    let ma: Vec<f64> = losses.windows(window).map(|w| w.iter().sum::<f64>() / window as f64).collect();
    ma.windows(2).all(|w| w[1] < w[0])
}

fn ablation() -> Check {
    let start = Instant::now();
    let mut rows = Vec::new();
    let mut notes = Vec::new();
    for seed in 0..3u64 {
        let mut cfg = ablation_cfg(seed);
        cfg.train.epochs_universal = 60;
        ensure(cfg.train.epochs_finetune == 15 && cfg.postproc.static_policy.peak_threshold == 0.3, || "desk schedule changed".into())?;
        let corpus = generate_corpus(&cfg).map_err(e2s)?;
        let (train, val): (Vec<&CorpusEntry>, Vec<&CorpusEntry>) = corpus.iter().partition(|e| e.split == Split::Train);
        let ts = collect_samples(train.iter().copied(), &cfg).map_err(e2s)?;
        let vs = collect_samples(val.iter().copied(), &cfg).map_err(e2s)?;
        let arch = cfg.detector_archs()[0].clone();
        let plan = slnet::pipeline::effective_plan(&cfg);
        let vanilla_plan = slnet::models::TrainPlan { augment: AugmentPolicy::disabled(), ..plan.clone() };
        let aug = train_universal(&ts, &vs, &plan, &arch).map_err(e2s)?;
        let vanilla = train_universal(&ts, &vs, &vanilla_plan, &arch).map_err(e2s)?;
        let losses: Vec<f64> = vanilla.history.iter().take(20).map(|h| h.train_loss).collect();
        ensure(moving_average_decreases(&losses, 5), || format!("seed {seed}: vanilla training loss 5-epoch average not strictly decreasing: {losses:?}"))?;
        let mut row = AblationRow {
            seed,
            ap_augmented: val_ap(&[&aug.checkpoint], &val, &cfg)?,
            ap_vanilla: val_ap(&[&vanilla.checkpoint], &val, &cfg)?,
            ..Default::default()
        };
        for scene in SceneLabel::ALL {
            let tr: Vec<MixSample> = ts.iter().filter(|s| s.scene == scene).cloned().collect();
            let va: Vec<MixSample> = vs.iter().filter(|s| s.scene == scene).cloned().collect();
            let branch = finetune(&aug.checkpoint, &tr, &va, &plan, scene).map_err(e2s)?.checkpoint;
            let before = evaluate_loss(&aug.checkpoint.graph, &va, plan.batch_size).map_err(e2s)?;
            let after = evaluate_loss(&branch.graph, &va, plan.batch_size).map_err(e2s)?;
            notes.push(format!("seed {seed} {scene} val loss {before:.5} -> {after:.5}"));
            ensure(after <= before, || format!("seed {seed}: {scene} fine-tuning raised val loss {before:.5} -> {after:.5}"))?;
            let vsub: Vec<&CorpusEntry> = val.iter().copied().filter(|e| e.scene() == scene).collect();
            let u = val_ap(&[&aug.checkpoint], &vsub, &cfg)?;
            let b = val_ap(&[&branch], &vsub, &cfg)?;
            match scene {
                SceneLabel::Static => (row.ap_static_universal, row.ap_static_branch) = (u, b),
                SceneLabel::Dynamic => (row.ap_dynamic_universal, row.ap_dynamic_branch) = (u, b),
            }
        }
        println!("    ablation seed {seed}: {row:?} ({:.0} s)", start.elapsed().as_secs_f64());
        rows.push(row);
    }
    let mean = |f: fn(&AblationRow) -> f64| rows.iter().map(f).sum::<f64>() / rows.len() as f64;
    let mix_gain = mean(|r| r.ap_augmented - r.ap_vanilla);
    let s_gain = mean(|r| r.ap_static_branch - r.ap_static_universal);
    let d_gain = mean(|r| r.ap_dynamic_branch - r.ap_dynamic_universal);
    for n in &notes {
        println!("    {n}");
    }
    ensure(mix_gain > 0.0, || format!("SceneMix mean gain {mix_gain:+.2} AP is not positive"))?;
    ensure(s_gain > 0.0, || format!("Static branch mean AP^S gain {s_gain:+.2} is not positive"))?;
    ensure(d_gain > 0.0, || format!("Dynamic branch mean AP^D gain {d_gain:+.2} is not positive"))?;
    within(start.elapsed(), 3600.0, "ablation")?;
    let mut fixtures = load_fixtures();
    let fixture_note = if fixtures.ablation.is_empty() {
        fixtures.ablation = rows.clone();
        store_fixtures(&fixtures)?;
        "fixtures recorded".to_string()
    } else {
        for (got, rec) in rows.iter().zip(&fixtures.ablation) {
            for (name, g, r) in [
                ("augmented", got.ap_augmented, rec.ap_augmented),
                ("vanilla", got.ap_vanilla, rec.ap_vanilla),
                ("static universal", got.ap_static_universal, rec.ap_static_universal),
                ("static branch", got.ap_static_branch, rec.ap_static_branch),
                ("dynamic universal", got.ap_dynamic_universal, rec.ap_dynamic_universal),
                ("dynamic branch", got.ap_dynamic_branch, rec.ap_dynamic_branch),
            ] {
                regression(&format!("seed {} {name}", got.seed), g, r)?;
            }
        }
        format!("within ±{REGRESSION_TOLERANCE} AP of fixtures")
    };
    Ok(format!(
        "3 seeds: SceneMix {mix_gain:+.2} AP, Static branch {s_gain:+.2} AP^S, Dynamic branch {d_gain:+.2} AP^D (all > 0); {fixture_note}; {:.0} s < 3600 s",
        start.elapsed().as_secs_f64()
    ))
}

fn ensemble_sanity() -> Check {
    let start = Instant::now();
    let mut cfg = ablation_cfg(0);
    cfg.models = [Variant::C21D, Variant::R18D, Variant::R18UC]
        .into_iter()
        .map(|variant| ModelEntry { variant, width_multiplier: 0.125 })
        .collect();
    ensure(cfg.train.epochs_universal == 30, || "desk schedule changed".into())?;
    let corpus = generate_corpus(&cfg).map_err(e2s)?;
    let (train, val): (Vec<&CorpusEntry>, Vec<&CorpusEntry>) = corpus.iter().partition(|e| e.split == Split::Train);
    let ts = collect_samples(train.iter().copied(), &cfg).map_err(e2s)?;
    let vs = collect_samples(val.iter().copied(), &cfg).map_err(e2s)?;
    let plan = slnet::pipeline::effective_plan(&cfg);
    let mut members = Vec::new();
    for arch in cfg.detector_archs() {
        members.push(train_universal(&ts, &vs, &plan, &arch).map_err(e2s)?.checkpoint);
    }
    let first = &members[0];
    for e in &val {
        let one = detect_sequence(&[first], &e.sequence, e.scene(), &cfg).map_err(e2s)?;
        let three = detect_sequence(&[first, first, first], &e.sequence, e.scene(), &cfg).map_err(e2s)?;
        ensure(one.peaks == three.peaks && one.constrained == three.constrained, || {
            format!("{}: self-ensemble changed detections", e.sequence.sequence_id())
        })?;
    }
    let mut aps = BTreeMap::new();
    for m in &members {
        aps.insert(m.arch.variant.to_string(), val_ap(&[m], &val, &cfg)?);
    }
    let refs: Vec<&ModelCheckpoint> = members.iter().collect();
    let ens = val_ap(&refs, &val, &cfg)?;
    let (best_name, best) = aps.iter().max_by(|a, b| a.1.total_cmp(b.1)).map(|(k, v)| (k.clone(), *v)).expect("three members");
    println!("    ensemble members {aps:?}, ensemble {ens:.2}");
    ensure(ens >= best - 2.0, || format!("ensemble {ens:.2} AP is more than 2 below best member {best_name} {best:.2}"))?;
    aps.insert("ensemble".into(), ens);
    let mut fixtures = load_fixtures();
    let fixture_note = if fixtures.ensemble.is_empty() {
        fixtures.ensemble = aps.clone();
        store_fixtures(&fixtures)?;
        "fixtures recorded".to_string()
    } else {
        for (name, got) in &aps {
            let rec = fixtures.ensemble.get(name).ok_or_else(|| format!("no fixture for {name}"))?;
            regression(name, *got, *rec)?;
        }
        format!("within ±{REGRESSION_TOLERANCE} AP of fixtures")
    };
    Ok(format!(
        "self-ensemble identical on {} sequences; ensemble {ens:.2} AP vs best member {best_name} {best:.2} ({:+.2}, guard -2); {fixture_note}; {:.0} s",
        val.len(),
        ens - best,
        start.elapsed().as_secs_f64()
    ))
}

// 9. Determinism

fn tiny_pipeline_cfg(root: &Path) -> PipelineConfig {
    let mut cfg = PipelineConfig::default();
    cfg.seed = 23;
    cfg.dataset_root = root.join("data");
    cfg.output_dir = root.join("runs");
    cfg.grid.grid_size = 16;
    cfg.data.static_sequences = 3;
    cfg.data.dynamic_sequences = 3;
    cfg.data.val_static = 1;
    cfg.data.val_dynamic = 1;
    cfg.data.frames_per_sequence = 16;
    cfg.data.objects_per_sequence = 2;
    cfg.models = [Variant::C21D, Variant::R18UC]
        .into_iter()
        .map(|variant| ModelEntry { variant, width_multiplier: 0.125 })
        .collect();
    cfg.train.epochs_universal = 2;
    cfg.train.epochs_finetune = 1;
    cfg.train.epochs_classifier = 2;
    cfg
}

type Artifacts = BTreeMap<String, Vec<u8>>;

fn run_pipeline(root: &Path) -> slnet::Result<Artifacts> {
    let cfg = tiny_pipeline_cfg(root);
    cmd_gen_data(&cfg)?;
    let summary = cmd_train(&cfg)?;
    let manifest = DatasetManifest::load(&cfg.dataset_root)?;
    let inputs = manifest.split_dirs(&cfg.dataset_root, Split::Val);
    let det_dir = root.join("detections");
    cmd_infer(&cfg, &inputs, SceneChoice::Auto, true, &det_dir)?;
    let eval_dir = root.join("eval");
    cmd_eval(&cfg, &det_dir, &eval_dir)?;
    let mut out = Artifacts::new();
    let read = |p: &Path| std::fs::read(p).map_err(|e| slnet::Error::io(p, e));
    for p in &summary.checkpoints {
        out.insert(format!("checkpoint {}", p.file_name().unwrap().to_string_lossy()), read(p)?);
    }
    for entry in std::fs::read_dir(&det_dir).map_err(|e| slnet::Error::io(&det_dir, e))? {
        let p = entry.map_err(|e| slnet::Error::io(&det_dir, e))?.path();
        if p.to_string_lossy().ends_with(DETECTIONS_SUFFIX) {
            out.insert(format!("detections {}", p.file_name().unwrap().to_string_lossy()), read(&p)?);
        }
    }
    out.insert("report".into(), read(&eval_dir.join(REPORT_JSON))?);
    Ok(out)
}

fn determinism() -> Check {
    let a = tempfile::tempdir().map_err(|e| e.to_string())?;
    let b = tempfile::tempdir().map_err(|e| e.to_string())?;
    let one = run_pipeline(a.path()).map_err(e2s)?;
    let two = run_pipeline(b.path()).map_err(e2s)?;
    let names: Vec<&String> = one.keys().collect();
    ensure(one.keys().eq(two.keys()), || format!("artifact sets differ: {names:?} vs {:?}", two.keys().collect::<Vec<_>>()))?;
    for (k, v) in &one {
        ensure(two[k] == *v, || format!("{k} differs between runs"))?;
    }
    let count = |p: &str| one.keys().filter(|k| k.starts_with(p)).count();
    ensure(count("checkpoint") == 7 && count("detections") == 2, || format!("unexpected artifacts {names:?}"))?;
    Ok(format!(
        "{} checkpoints, {} detection CSVs and the eval report byte-identical across two runs",
        count("checkpoint"),
        count("detections")
    ))
}

fn main() {
    let only: Option<Vec<usize>> = std::env::var("SLNET_ACCEPTANCE")
        .ok()
        .map(|s| s.split(',').filter_map(|x| x.trim().parse().ok()).collect());
    let criteria: [(usize, &str, fn() -> Check); 10] = [
        (1, "gradient integrity", gradient_integrity),
        (2, "convolution oracle", convolution_oracle),
        (3, "codec round trip", codec_round_trip),
        (4, "SceneMix laws", scenemix_laws),
        (5, "post-processing rules", postproc_rules),
        (6, "evaluator oracle", evaluator_oracle),
        (7, "scene classifier", classifier_accuracy),
        (8, "directional ablation", ablation),
        (9, "determinism", determinism),
        (10, "ensemble sanity", ensemble_sanity),
    ];
    let mut failed = 0;
    for (id, name, run) in criteria {
        if only.as_ref().is_some_and(|o| !o.contains(&id)) {
            continue;
        }
        let t0 = Instant::now();
        let outcome = std::panic::catch_unwind(run).unwrap_or_else(|p| {
            Err(p.downcast_ref::<String>().cloned().or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string())).unwrap_or_else(|| "panic".into()))
        });
        let secs = t0.elapsed().as_secs_f64();
        match outcome {
            Ok(detail) => println!("[PASS] {id} {name}: {detail} [{secs:.1} s]"),
            Err(detail) => {
                failed += 1;
                println!("[FAIL] {id} {name}: {detail} [{secs:.1} s]");
            }
        }
    }
    if failed > 0 {
        println!("{failed} acceptance criteria failed");
        std::process::exit(1);
    }
}
