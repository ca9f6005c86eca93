//! Panorama masking and conversion to fixed-size model input tensors.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::DatasetError;
use crate::scene::{Panorama, SemanticClass};

pub const INPUT_SIZE: usize = 224;
pub const INPUT_CHANNELS: usize = 3;
/// Elements in one `3 × 224 × 224` input tensor.
pub const INPUT_LEN: usize = INPUT_CHANNELS * INPUT_SIZE * INPUT_SIZE;

/// Classes removed by dynamic-scatterer masking.
pub const MASKED_CLASSES: [SemanticClass; 4] =
    [SemanticClass::Sky, SemanticClass::Road, SemanticClass::Vehicle, SemanticClass::Pedestrian];

/// Class id → RGB colour used to encode the semantic map.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Palette(pub BTreeMap<u8, [u8; 3]>);

impl Default for Palette {
    fn default() -> Self {
        Palette(BTreeMap::from([
            (SemanticClass::Void as u8, [0, 0, 0]),
            (SemanticClass::Sky as u8, [0, 255, 255]),
            (SemanticClass::Road as u8, [128, 64, 128]),
            (SemanticClass::Building as u8, [128, 128, 128]),
            (SemanticClass::Vehicle as u8, [0, 0, 142]),
            (SemanticClass::Pedestrian as u8, [220, 20, 60]),
        ]))
    }
}

impl Palette {
    pub fn color(&self, class: u8) -> Result<[u8; 3], DatasetError> {
        self.0.get(&class).copied().ok_or(DatasetError::UnknownClass(class))
    }

    /// Colour as `[0, 1]` floats, the form it takes in an input tensor.
    pub fn color_f32(&self, class: u8) -> Result<[f32; 3], DatasetError> {
        let c = self.color(class)?;
        Ok(c.map(|v| v as f32 / 255.0))
    }
}

/// Sets sky, road, vehicle and pedestrian pixels to void at the farthest depth.
pub fn mask_dynamic(panorama: &Panorama) -> Panorama {
    let mut out = panorama.clone();
    for (c, d) in out.semantic.iter_mut().zip(out.depth.iter_mut()) {
        if MASKED_CLASSES.iter().any(|m| *m as u8 == *c) {
            *c = SemanticClass::Void as u8;
            *d = 1.0;
        }
    }
    out
}

fn nearest_src(dst: usize, src_len: usize, dst_len: usize) -> usize {
    ((dst * src_len) / dst_len).min(src_len - 1)
}

/// Half-pixel-centre source coordinate: the lower neighbour and its weight.
fn bilinear_src(dst: usize, src_len: usize, dst_len: usize) -> (usize, usize, f32) {
    let scale = src_len as f64 / dst_len as f64;
    let x = ((dst as f64 + 0.5) * scale - 0.5).max(0.0);
    let x0 = (x.floor() as usize).min(src_len - 1);
    let x1 = (x0 + 1).min(src_len - 1);
    (x0, x1, (x - x0 as f64) as f32)
}

/// Semantic map → palette RGB resized by nearest neighbour; depth resized
/// bilinearly and replicated to three channels. Both are `3 × 224 × 224`
/// channel-major with values in `[0, 1]`.
pub fn encode_inputs(panorama: &Panorama, palette: &Palette) -> Result<(Vec<f32>, Vec<f32>), DatasetError> {
    let (h, w) = (panorama.height, panorama.width);
    let plane = INPUT_SIZE * INPUT_SIZE;
    let mut semantic = vec![0.0f32; INPUT_LEN];
    let mut depth = vec![0.0f32; INPUT_LEN];
    let cols: Vec<usize> = (0..INPUT_SIZE).map(|x| nearest_src(x, w, INPUT_SIZE)).collect();
    let bcols: Vec<_> = (0..INPUT_SIZE).map(|x| bilinear_src(x, w, INPUT_SIZE)).collect();
    for y in 0..INPUT_SIZE {
        let row = nearest_src(y, h, INPUT_SIZE);
        let (r0, r1, fy) = bilinear_src(y, h, INPUT_SIZE);
        for x in 0..INPUT_SIZE {
            let rgb = palette.color_f32(panorama.class_at(row, cols[x]))?;
            for (ch, v) in rgb.into_iter().enumerate() {
                semantic[ch * plane + y * INPUT_SIZE + x] = v;
            }
            let (c0, c1, fx) = bcols[x];
            let top = panorama.depth_at(r0, c0) * (1.0 - fx) + panorama.depth_at(r0, c1) * fx;
            let bottom = panorama.depth_at(r1, c0) * (1.0 - fx) + panorama.depth_at(r1, c1) * fx;
            let d = (top * (1.0 - fy) + bottom * fy).clamp(0.0, 1.0);
            for ch in 0..INPUT_CHANNELS {
                depth[ch * plane + y * INPUT_SIZE + x] = d;
            }
        }
    }
    Ok((semantic, depth))
}
