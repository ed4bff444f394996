//! Discrete depth codes: uniform quantization of depth images into
//! `2^bits - 1` foreground bins (code 0 is background), one-hot encoding
//! for the network, dequantization, back-projection to 3D, and
//! multi-view point-cloud fusion.

use std::collections::HashSet;

use thiserror::Error;

use crate::camrig::{add, dot, pixel_ray, scale, ProjectionKind, Vec3, ViewSpec};
use crate::numcore::Tensor;
use crate::rasterizer::DepthImage;

/// Global depth range shared by both projections: a camera at radius
/// 2.5 m looking at a bounding sphere of radius 0.5 m sees depths
/// inside [2, 3] m.
pub const DEPTH_NEAR: f32 = 2.0;
pub const DEPTH_FAR: f32 = 3.0;

pub const MIN_BITS: u8 = 5;
pub const MAX_BITS: u8 = 8;

#[derive(Debug, Error)]
pub enum CodecError {
    #[error("bits must lie in {MIN_BITS}..={MAX_BITS}, got {0}")]
    BadBits(u8),
    #[error("near must be smaller than far, got near={near} far={far}")]
    BadRange { near: f32, far: f32 },
    #[error("depth map is for view {map} but the camera is view {view}")]
    ViewMismatch { map: u8, view: u8 },
    #[error("depth map projection does not match the camera projection")]
    ProjectionMismatch,
    #[error("depth map resolution {map} does not match the camera resolution {view}")]
    ResolutionMismatch { map: usize, view: usize },
    #[error("cannot fuse an empty list of depth maps")]
    EmptyFuse,
}

/// Quantized depth map: `resolution^2` codes, 0 for background and
/// `1..=2^bits-1` for foreground depth bins.
#[derive(Debug, Clone, PartialEq)]
pub struct DepthMap {
    pub resolution: usize,
    pub bits: u8,
    pub near: f32,
    pub far: f32,
    pub view_id: u8,
    pub projection: ProjectionKind,
    pub codes: Vec<u8>,
}

impl DepthMap {
    pub fn code_at(&self, px: usize, py: usize) -> u8 {
        self.codes[py * self.resolution + px]
    }

    pub fn foreground_pixels(&self) -> usize {
        self.codes.iter().filter(|&&c| c != 0).count()
    }

    pub fn max_code(&self) -> u16 {
        (1u16 << self.bits) - 1
    }
}

#[derive(Debug, Clone, Default)]
pub struct PointCloud {
    pub points: Vec<Vec3>,
    /// Per-point source view, when the cloud came from back-projection.
    pub source_views: Option<Vec<u8>>,
}

impl PointCloud {
    pub fn from_points(points: Vec<Vec3>) -> Self {
        PointCloud { points, source_views: None }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

pub struct Quantized {
    pub map: DepthMap,
    /// Foreground depths that fell outside [near, far] and were clamped.
    pub clamped: usize,
}

/// Half of one quantization bin: the worst-case round-trip depth error.
pub fn half_bin_width(bits: u8, near: f32, far: f32) -> f64 {
    let bins = (1u32 << bits) as f64 - 2.0;
    (far as f64 - near as f64) / (2.0 * bins)
}

fn check_bits_range(bits: u8, near: f32, far: f32) -> Result<(), CodecError> {
    if !(MIN_BITS..=MAX_BITS).contains(&bits) {
        return Err(CodecError::BadBits(bits));
    }
    if near >= far {
        return Err(CodecError::BadRange { near, far });
    }
    Ok(())
}

/// Uniform quantization: background stays code 0, foreground maps to
/// `1 + round((d-near)/(far-near) * (2^bits - 2))`, monotone in depth.
/// Out-of-range foreground depths are clamped and counted.
pub fn quantize(
    img: &DepthImage,
    bits: u8,
    near: f32,
    far: f32,
    view_id: u8,
    projection: ProjectionKind,
) -> Result<Quantized, CodecError> {
    check_bits_range(bits, near, far)?;
    let bins = (1u32 << bits) as f64 - 2.0;
    let (nearf, farf) = (near as f64, far as f64);
    let mut clamped = 0usize;
    let codes = img
        .values
        .iter()
        .map(|&d| {
            if !d.is_finite() {
                return 0u8;
            }
            let mut d = d;
            if d < nearf || d > farf {
                clamped += 1;
                d = d.clamp(nearf, farf);
            }
            (1.0 + ((d - nearf) / (farf - nearf) * bins).round()) as u8
        })
        .collect();
    Ok(Quantized {
        map: DepthMap {
            resolution: img.resolution,
            bits,
            near,
            far,
            view_id,
            projection,
            codes,
        },
        clamped,
    })
}

/// Inverse of `quantize` up to half a bin: codes map back to bin
/// centers, background to +inf.
pub fn dequantize(dm: &DepthMap) -> DepthImage {
    let bins = (1u32 << dm.bits) as f64 - 2.0;
    let (near, far) = (dm.near as f64, dm.far as f64);
    let values = dm
        .codes
        .iter()
        .map(|&c| {
            if c == 0 {
                f64::INFINITY
            } else {
                near + (c as f64 - 1.0) / bins * (far - near)
            }
        })
        .collect();
    DepthImage {
        resolution: dm.resolution,
        values,
    }
}

/// One-hot channel encoding: channel c is 1 where the code equals c.
pub fn one_hot(dm: &DepthMap) -> Tensor {
    let channels = 1usize << dm.bits;
    let hw = dm.resolution * dm.resolution;
    let mut data = vec![0.0; channels * hw];
    for (pix, &c) in dm.codes.iter().enumerate() {
        data[c as usize * hw + pix] = 1.0;
    }
    Tensor::new(&[channels, dm.resolution, dm.resolution], data).expect("one_hot")
}

/// Recovers per-pixel codes from a `[2^bits, H, W]` channel map by
/// argmax; ties break toward the lower code.
pub fn argmax_codes(logits: &Tensor) -> Vec<u8> {
    let shape = logits.shape();
    assert_eq!(shape.len(), 3, "argmax_codes expects [C,H,W]");
    let (c, hw) = (shape[0], shape[1] * shape[2]);
    let data = logits.data();
    (0..hw)
        .map(|pix| {
            let mut best = 0usize;
            let mut best_v = data[pix];
            for ch in 1..c {
                let v = data[ch * hw + pix];
                if v > best_v {
                    best_v = v;
                    best = ch;
                }
            }
            best as u8
        })
        .collect()
}

fn check_view(dm: &DepthMap, view: &ViewSpec) -> Result<(), CodecError> {
    if dm.view_id != view.view_id {
        return Err(CodecError::ViewMismatch {
            map: dm.view_id,
            view: view.view_id,
        });
    }
    if dm.projection != view.projection.kind() {
        return Err(CodecError::ProjectionMismatch);
    }
    if dm.resolution != view.resolution {
        return Err(CodecError::ResolutionMismatch {
            map: dm.resolution,
            view: view.resolution,
        });
    }
    Ok(())
}

/// Lifts every foreground pixel to the 3D point at its dequantized
/// depth along the pixel ray. Background pixels emit nothing.
pub fn backproject(dm: &DepthMap, view: &ViewSpec) -> Result<PointCloud, CodecError> {
    check_view(dm, view)?;
    let img = dequantize(dm);
    let res = dm.resolution;
    let mut points = Vec::with_capacity(dm.foreground_pixels());
    for py in 0..res {
        for px in 0..res {
            let d = img.at(px, py);
            if !d.is_finite() {
                continue;
            }
            let (origin, dir) = pixel_ray(view, px, py).expect("pixel in range");
            // Depth is stored along the forward axis; perspective rays
            // need the angular correction, orthographic rays are axial.
            let t = d / dot(dir, view.forward);
            points.push(add(origin, scale(dir, t)));
        }
    }
    let n = points.len();
    Ok(PointCloud {
        points,
        source_views: Some(vec![dm.view_id; n]),
    })
}

/// Concatenated back-projections of several (map, view) pairs. With
/// `dedup` set, points collapse onto a voxel grid with cell size equal
/// to half a quantization bin (first point per cell wins).
pub fn fuse(pairs: &[(&DepthMap, &ViewSpec)], dedup: bool) -> Result<PointCloud, CodecError> {
    if pairs.is_empty() {
        return Err(CodecError::EmptyFuse);
    }
    let mut points = Vec::new();
    let mut views = Vec::new();
    for (dm, view) in pairs {
        let pc = backproject(dm, view)?;
        views.extend(std::iter::repeat_n(dm.view_id, pc.points.len()));
        points.extend(pc.points);
    }
    if dedup {
        let cell = half_bin_width(pairs[0].0.bits, pairs[0].0.near, pairs[0].0.far);
        let mut seen: HashSet<(i64, i64, i64)> = HashSet::new();
        let mut kept_points = Vec::new();
        let mut kept_views = Vec::new();
        for (p, v) in points.iter().zip(&views) {
            let key = (
                (p[0] / cell).floor() as i64,
                (p[1] / cell).floor() as i64,
                (p[2] / cell).floor() as i64,
            );
            if seen.insert(key) {
                kept_points.push(*p);
                kept_views.push(*v);
            }
        }
        points = kept_points;
        views = kept_views;
    }
    Ok(PointCloud {
        points,
        source_views: Some(views),
    })
}
