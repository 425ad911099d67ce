//! Detector and classifier graphs.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::data::RF_CHANNELS;
use crate::error::{Error, Result};
use crate::nn::{Graph, Layer, LayerSpec};
use crate::rng::{self, SplitMix64};
use crate::synth::NUM_CLASSES;
use crate::tensor::Scalar;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Variant {
    C21D,
    R18D,
    R18UC,
    #[serde(rename = "classifier")]
    SceneClassifier,
}

impl Variant {
    pub const DETECTORS: [Variant; 3] = [Variant::C21D, Variant::R18D, Variant::R18UC];

    pub fn as_str(self) -> &'static str {
        match self {
            Variant::C21D => "c21d",
            Variant::R18D => "r18d",
            Variant::R18UC => "r18uc",
            Variant::SceneClassifier => "classifier",
        }
    }

    pub fn is_detector(self) -> bool {
        self != Variant::SceneClassifier
    }

    /// Number of ×2 spatial downsampling stages.
    pub fn stages(self) -> usize {
        match self {
            Variant::C21D => C21D_WIDTHS.len(),
            _ => R18_WIDTHS.len(),
        }
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "c21d" | "c21dc" => Ok(Variant::C21D),
            "r18d" => Ok(Variant::R18D),
            "r18uc" => Ok(Variant::R18UC),
            "classifier" | "sceneclassifier" => Ok(Variant::SceneClassifier),
            other => Err(Error::Config(format!("unknown architecture {other:?}"))),
        }
    }
}

pub const C21D_WIDTHS: [usize; 3] = [64, 128, 256];
pub const R18_STEM: usize = 64;
pub const R18_WIDTHS: [usize; 4] = [64, 128, 256, 512];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ArchSpec {
    pub variant: Variant,
    pub width_multiplier: f64,
    pub in_channels: usize,
    pub window: usize,
    pub grid_size: usize,
    pub num_classes: usize,
    #[serde(default = "default_true")]
    pub batch_norm: bool,
}

fn default_true() -> bool {
    true
}

impl ArchSpec {
    pub fn new(variant: Variant, width_multiplier: f64, window: usize, grid_size: usize) -> Self {
        ArchSpec {
            variant,
            width_multiplier,
            in_channels: RF_CHANNELS,
            window,
            grid_size,
            num_classes: NUM_CLASSES,
            batch_norm: true,
        }
    }

    /// Channel count for a nominal width, at least 1.
    pub fn channels(&self, base: usize) -> usize {
        ((base as f64 * self.width_multiplier).round() as usize).max(1)
    }

    /// Logit count of the network head.
    pub fn output_channels(&self) -> usize {
        if self.variant.is_detector() {
            self.num_classes
        } else {
            2
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.width_multiplier > 0.0 && self.width_multiplier.is_finite()) {
            return Err(Error::Config("width_multiplier must be positive".into()));
        }
        if self.in_channels == 0 || self.window == 0 || self.num_classes == 0 {
            return Err(Error::Config(
                "in_channels, window and num_classes must be positive".into(),
            ));
        }
        let factor = 1usize << self.variant.stages();
        if self.grid_size == 0 || self.grid_size % factor != 0 {
            return Err(Error::Config(format!(
                "{} needs grid_size divisible by {factor}, got {}",
                self.variant, self.grid_size
            )));
        }
        Ok(())
    }

    /// Temporal stride per stage: 2 while the running length is even and
    /// above 1, else 1.
    pub fn temporal_strides(&self) -> Vec<usize> {
        let mut t = self.window;
        (0..self.variant.stages())
            .map(|_| {
                if t > 1 && t % 2 == 0 {
                    t /= 2;
                    2
                } else {
                    1
                }
            })
            .collect()
    }
}

struct Builder<S: Scalar> {
    graph: Graph<S>,
    rng: SplitMix64,
    bn: bool,
}

impl<S: Scalar> Builder<S> {
    fn add(&mut self, name: String, spec: LayerSpec, inputs: &[usize]) -> Result<usize> {
        let layer = Layer::init(spec, &mut self.rng)?;
        self.graph.push(name, layer, inputs)
    }

    fn bn(&mut self, name: String, channels: usize, x: usize) -> Result<usize> {
        if self.bn {
            self.add(name, LayerSpec::BatchNorm { channels }, &[x])
        } else {
            Ok(x)
        }
    }

    /// (2+1)D conv, batch norm, ReLU.
    fn unit(&mut self, name: &str, x: usize, c_in: usize, c_out: usize, ss: usize, ts: usize) -> Result<usize> {
        let c = self.add(
            format!("{name}.conv"),
            LayerSpec::conv21d(c_in, c_out, ss, ts, self.bn),
            &[x],
        )?;
        let b = self.bn(format!("{name}.bn"), c_out, c)?;
        self.add(format!("{name}.relu"), LayerSpec::Relu, &[b])
    }

    fn up_tconv(&mut self, name: String, x: usize, c_in: usize, c_out: usize, ts: usize) -> Result<usize> {
        let (kt, pt) = if ts == 2 { (4, 1) } else { (3, 1) };
        self.add(
            name,
            LayerSpec::TransposedConv3d {
                in_channels: c_in,
                out_channels: c_out,
                kernel: [kt, 4, 4],
                stride: [ts, 2, 2],
                padding: [pt, 1, 1],
            },
            &[x],
        )
    }

    fn basic_block(&mut self, name: &str, x: usize, c_in: usize, c_out: usize, ss: usize, ts: usize) -> Result<usize> {
        let a = self.unit(&format!("{name}.a"), x, c_in, c_out, ss, ts)?;
        let c = self.add(
            format!("{name}.b.conv"),
            LayerSpec::conv21d(c_out, c_out, 1, 1, self.bn),
            &[a],
        )?;
        let b = self.bn(format!("{name}.b.bn"), c_out, c)?;
        let shortcut = if ss != 1 || ts != 1 || c_in != c_out {
            let p = self.add(
                format!("{name}.down.conv"),
                LayerSpec::Conv3d1x1 {
                    in_channels: c_in,
                    out_channels: c_out,
                    stride: [ts, ss, ss],
                },
                &[x],
            )?;
            self.bn(format!("{name}.down.bn"), c_out, p)?
        } else {
            x
        };
        let sum = self.add(format!("{name}.add"), LayerSpec::Add, &[b, shortcut])?;
        self.add(format!("{name}.relu"), LayerSpec::Relu, &[sum])
    }

    /// Returns the last node, its channel count, and the input of every stage
    /// (stem output first).
    fn r18_encoder(&mut self, arch: &ArchSpec, ts: &[usize]) -> Result<(usize, usize, Vec<usize>)> {
        let stem = arch.channels(R18_STEM);
        let mut h = self.unit("stem", Graph::<S>::INPUT, arch.in_channels, stem, 1, 1)?;
        let mut c = stem;
        let mut stages = Vec::with_capacity(R18_WIDTHS.len());
        for (k, &base) in R18_WIDTHS.iter().enumerate() {
            stages.push(h);
            let ck = arch.channels(base);
            h = self.basic_block(&format!("layer{k}.0"), h, c, ck, 2, ts[k])?;
            h = self.basic_block(&format!("layer{k}.1"), h, ck, ck, 1, 1)?;
            c = ck;
        }
        Ok((h, c, stages))
    }
}

/// Build the graph for `arch`, initialising parameters from `seed`.
pub fn build<S: Scalar>(arch: &ArchSpec, seed: u64) -> Result<Graph<S>> {
    arch.validate()?;
    let mut b = Builder {
        graph: Graph::new(),
        rng: rng::stream(seed, rng::TAG_INIT, 0),
        bn: arch.batch_norm,
    };
    let ts = arch.temporal_strides();
    match arch.variant {
        Variant::C21D => {
            let mut skips = Vec::new();
            let mut h = Graph::<S>::INPUT;
            let mut c = arch.in_channels;
            for (k, &base) in C21D_WIDTHS.iter().enumerate() {
                let ck = arch.channels(base);
                h = b.unit(&format!("enc{k}.a"), h, c, ck, 1, 1)?;
                h = b.unit(&format!("enc{k}.b"), h, ck, ck, 2, ts[k])?;
                skips.push((h, ck));
                c = ck;
            }
            for k in (0..C21D_WIDTHS.len()).rev() {
                if k == 0 {
                    h = b.up_tconv("dec0.up".into(), h, c, arch.num_classes, ts[0])?;
                    break;
                }
                let (skip, c_skip) = skips[k - 1];
                h = b.up_tconv(format!("dec{k}.up"), h, c, c_skip, ts[k])?;
                h = b.bn(format!("dec{k}.bn"), c_skip, h)?;
                h = b.add(format!("dec{k}.relu"), LayerSpec::Relu, &[h])?;
                h = b.add(format!("dec{k}.skip"), LayerSpec::Add, &[h, skip])?;
                c = c_skip;
            }
            b.add("head.sigmoid".into(), LayerSpec::Sigmoid, &[h])?;
        }
        Variant::R18D | Variant::R18UC => {
            let (mut h, mut c, stages) = b.r18_encoder(arch, &ts)?;
            for k in (0..R18_WIDTHS.len()).rev() {
                let c_out = if k > 0 {
                    arch.channels(R18_WIDTHS[k - 1])
                } else {
                    arch.channels(R18_STEM)
                };
                if arch.variant == Variant::R18D {
                    h = b.up_tconv(format!("dec{k}.up"), h, c, c_out, ts[k])?;
                    h = b.bn(format!("dec{k}.bn"), c_out, h)?;
                    h = b.add(format!("dec{k}.relu"), LayerSpec::Relu, &[h])?;
                } else {
                    h = b.add(
                        format!("dec{k}.upsample"),
                        LayerSpec::UpsampleNearest {
                            factor: [ts[k], 2, 2],
                        },
                        &[h],
                    )?;
                    h = b.unit(&format!("dec{k}"), h, c, c_out, 1, 1)?;
                }
                h = b.add(format!("dec{k}.skip"), LayerSpec::Add, &[h, stages[k]])?;
                c = c_out;
            }
            h = b.add(
                "head.conv".into(),
                LayerSpec::Conv3d1x1 {
                    in_channels: c,
                    out_channels: arch.num_classes,
                    stride: [1, 1, 1],
                },
                &[h],
            )?;
            b.add("head.sigmoid".into(), LayerSpec::Sigmoid, &[h])?;
        }
        Variant::SceneClassifier => {
            let (h, c, _) = b.r18_encoder(arch, &ts)?;
            let p = b.add("pool".into(), LayerSpec::GlobalAvgPool, &[h])?;
            b.add(
                "head.fc".into(),
                LayerSpec::Linear {
                    in_features: c,
                    out_features: 2,
                },
                &[p],
            )?;
        }
    }
    Ok(b.graph)
}
