//! Point annotations to Gaussian ConfMaps.

use crate::data::{ConfMap, ObjectAnnotation};
use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Default per-class Gaussian widths in pixels (pedestrian, cyclist, car).
pub const DEFAULT_SIGMAS: [f64; 3] = [2.0, 3.0, 4.0];

/// Gaussians are cut off beyond this many sigmas.
pub const TRUNCATION_SIGMAS: f64 = 3.0;

/// Render annotations into a `(C_cls, T, G, G)` ConfMap with one class per
/// entry of `sigmas`. Overlapping objects combine by elementwise maximum.
pub fn encode_confmap(
    annotations: &[ObjectAnnotation],
    frames: usize,
    grid_size: usize,
    sigmas: &[f64],
) -> Result<ConfMap> {
    if sigmas.iter().any(|s| !(*s > 0.0 && s.is_finite())) {
        return Err(Error::InvalidArgument(format!(
            "sigmas must be positive, got {sigmas:?}"
        )));
    }
    let classes = sigmas.len();
    let mut data = Tensor::<f32>::zeros(&[classes, frames, grid_size, grid_size]);
    let g = grid_size as isize;
    for a in annotations {
        if a.frame_index >= frames || a.class_id >= classes {
            return Err(Error::OutOfBounds(format!(
                "annotation frame {} / class {} outside ({frames} frames, {classes} classes)",
                a.frame_index, a.class_id
            )));
        }
        if a.range_idx >= grid_size || a.azimuth_idx >= grid_size {
            return Err(Error::OutOfBounds(format!(
                "annotation (range {}, azimuth {}) outside grid {grid_size}",
                a.range_idx, a.azimuth_idx
            )));
        }
        let sigma = sigmas[a.class_id];
        let cutoff = TRUNCATION_SIGMAS * sigma;
        let reach = cutoff.floor() as isize;
        let plane = (a.class_id * frames + a.frame_index) * grid_size * grid_size;
        let (az0, rg0) = (a.azimuth_idx as isize, a.range_idx as isize);
        for az in (az0 - reach).max(0)..=(az0 + reach).min(g - 1) {
            for rg in (rg0 - reach).max(0)..=(rg0 + reach).min(g - 1) {
                let d2 = ((az - az0).pow(2) + (rg - rg0).pow(2)) as f64;
                if d2 > cutoff * cutoff {
                    continue;
                }
                let v = (-d2 / (2.0 * sigma * sigma)).exp() as f32;
                let cell = &mut data.data_mut()[plane + az as usize * grid_size + rg as usize];
                if v > *cell {
                    *cell = v;
                }
            }
        }
    }
    ConfMap::new(data)
}
