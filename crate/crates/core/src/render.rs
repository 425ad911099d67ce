//! Netpbm renderings of RAMaps and ConfMaps. Rows are azimuth bins, columns
//! are range bins.

use crate::data::{ConfMap, Detection, RadarFrame};
use crate::synth::magnitude;

/// Class colours: pedestrian red, cyclist green, car blue. Further classes
/// cycle through yellow, magenta and cyan.
pub const CLASS_COLORS: [[u8; 3]; 6] = [
    [255, 0, 0],
    [0, 255, 0],
    [0, 0, 255],
    [255, 255, 0],
    [255, 0, 255],
    [0, 255, 255],
];

const CROSS_ARM: i64 = 2;

/// Binary PGM of the frame magnitude, scaled so the frame maximum is white.
pub fn ramap_pgm(frame: &RadarFrame) -> Vec<u8> {
    let g = frame.grid_size();
    let mag = magnitude(frame.data());
    let peak = mag.iter().copied().fold(0.0f32, f32::max);
    let mut out = format!("P5\n{g} {g}\n255\n").into_bytes();
    out.extend(mag.iter().map(|&v| {
        if peak > 0.0 {
            (v / peak * 255.0).round().clamp(0.0, 255.0) as u8
        } else {
            0
        }
    }));
    out
}

/// Binary PPM of frame `t`: each class tints its colour by confidence,
/// detections on that frame are drawn as white crosses.
pub fn confmap_ppm(map: &ConfMap, t: usize, detections: &[Detection]) -> Vec<u8> {
    let g = map.grid_size();
    let mut rgb = vec![0f32; g * g * 3];
    for c in 0..map.num_classes() {
        let col = CLASS_COLORS[c % CLASS_COLORS.len()];
        for (i, &v) in map.plane(c, t).iter().enumerate() {
            for k in 0..3 {
                rgb[i * 3 + k] += v * col[k] as f32;
            }
        }
    }
    let mut px: Vec<u8> = rgb.iter().map(|&v| v.round().clamp(0.0, 255.0) as u8).collect();
    for d in detections.iter().filter(|d| d.frame_index == t) {
        for k in -CROSS_ARM..=CROSS_ARM {
            for (a, r) in [(d.azimuth_idx as i64 + k, d.range_idx as i64), (d.azimuth_idx as i64, d.range_idx as i64 + k)] {
                if (0..g as i64).contains(&a) && (0..g as i64).contains(&r) {
                    let i = (a as usize * g + r as usize) * 3;
                    px[i..i + 3].copy_from_slice(&[255, 255, 255]);
                }
            }
        }
    }
    let mut out = format!("P6\n{g} {g}\n255\n").into_bytes();
    out.extend(px);
    out
}
