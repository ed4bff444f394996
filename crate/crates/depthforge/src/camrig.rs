//! The fixed 20-view camera rig: cameras sit at the vertices of a
//! regular dodecahedron of circumradius 2.5 m, all aimed at the origin,
//! with either a 40-degree-FOV perspective frustum or an orthographic
//! window.

use thiserror::Error;

pub const CAMERA_RADIUS: f64 = 2.5;
pub const FOV_Y_DEG: f64 = 40.0;
pub const ORTHO_HALF_EXTENT: f64 = 0.55;
pub const NUM_VIEWS: usize = 20;

pub type Vec3 = [f64; 3];

pub fn dot(a: Vec3, b: Vec3) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

pub fn cross(a: Vec3, b: Vec3) -> Vec3 {
    [
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        a[0] * b[1] - a[1] * b[0],
    ]
}

pub fn add(a: Vec3, b: Vec3) -> Vec3 {
    [a[0] + b[0], a[1] + b[1], a[2] + b[2]]
}

pub fn sub(a: Vec3, b: Vec3) -> Vec3 {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

pub fn scale(a: Vec3, s: f64) -> Vec3 {
    [a[0] * s, a[1] * s, a[2] * s]
}

pub fn norm(a: Vec3) -> f64 {
    dot(a, a).sqrt()
}

pub fn normalize(a: Vec3) -> Vec3 {
    let n = norm(a);
    [a[0] / n, a[1] / n, a[2] / n]
}

#[derive(Debug, Error)]
pub enum RigError {
    #[error("resolution must be a power of two >= 8, got {0}")]
    BadResolution(usize),
    #[error("pixel ({px},{py}) out of range for resolution {resolution}")]
    PixelOutOfRange { px: usize, py: usize, resolution: usize },
}

/// Projection family tag, stable across files and configs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub enum ProjectionKind {
    Perspective,
    Orthographic,
}

impl ProjectionKind {
    pub fn as_u8(self) -> u8 {
        match self {
            ProjectionKind::Perspective => 0,
            ProjectionKind::Orthographic => 1,
        }
    }

    pub fn from_u8(v: u8) -> Option<Self> {
        match v {
            0 => Some(ProjectionKind::Perspective),
            1 => Some(ProjectionKind::Orthographic),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Projection {
    Perspective { fov_y_deg: f64 },
    Orthographic { half_extent: f64 },
}

impl Projection {
    pub fn kind(&self) -> ProjectionKind {
        match self {
            Projection::Perspective { .. } => ProjectionKind::Perspective,
            Projection::Orthographic { .. } => ProjectionKind::Orthographic,
        }
    }

    pub fn canonical(kind: ProjectionKind) -> Projection {
        match kind {
            ProjectionKind::Perspective => Projection::Perspective { fov_y_deg: FOV_Y_DEG },
            ProjectionKind::Orthographic => Projection::Orthographic {
                half_extent: ORTHO_HALF_EXTENT,
            },
        }
    }
}

/// One calibrated view: position on the rig sphere, an orthonormal
/// (right, up, forward) basis looking at the origin, and the projection.
#[derive(Debug, Clone, PartialEq)]
pub struct ViewSpec {
    pub view_id: u8,
    pub position: Vec3,
    pub forward: Vec3,
    pub up: Vec3,
    pub right: Vec3,
    pub projection: Projection,
    pub resolution: usize,
}

#[derive(Debug, Clone)]
pub struct CameraRig {
    pub views: Vec<ViewSpec>,
}

/// Vertices of the unit-family regular dodecahedron, before scaling:
/// (±1,±1,±1), (0,±1/φ,±φ), (±1/φ,±φ,0), (±φ,0,±1/φ) with
/// φ = (1+√5)/2. Returned in ascending lexicographic (x,y,z) order,
/// which fixes the canonical view enumeration.
pub fn canonical_vertices() -> Vec<Vec3> {
    let phi = (1.0 + 5f64.sqrt()) / 2.0;
    let inv = 1.0 / phi;
    let mut verts: Vec<Vec3> = Vec::with_capacity(20);
    for &sx in &[-1.0, 1.0] {
        for &sy in &[-1.0, 1.0] {
            for &sz in &[-1.0, 1.0] {
                verts.push([sx, sy, sz]);
            }
        }
    }
    for &sa in &[-1.0, 1.0] {
        for &sb in &[-1.0, 1.0] {
            verts.push([0.0, sa * inv, sb * phi]);
            verts.push([sa * inv, sb * phi, 0.0]);
            verts.push([sa * phi, 0.0, sb * inv]);
        }
    }
    verts.sort_by(|a, b| {
        a[0].total_cmp(&b[0])
            .then(a[1].total_cmp(&b[1]))
            .then(a[2].total_cmp(&b[2]))
    });
    verts
}

fn look_at_origin(position: Vec3) -> (Vec3, Vec3, Vec3) {
    let forward = normalize(scale(position, -1.0));
    let up_hint: Vec3 = if forward[1].abs() > 0.999 {
        [1.0, 0.0, 0.0]
    } else {
        [0.0, 1.0, 0.0]
    };
    let right = normalize(cross(forward, up_hint));
    let up = cross(right, forward);
    (forward, up, right)
}

/// Builds the 20-view rig at the given square resolution.
pub fn build_rig(resolution: usize, kind: ProjectionKind) -> Result<CameraRig, RigError> {
    if resolution < 8 || !resolution.is_power_of_two() {
        return Err(RigError::BadResolution(resolution));
    }
    let projection = Projection::canonical(kind);
    let views = canonical_vertices()
        .into_iter()
        .enumerate()
        .map(|(i, v)| {
            let position = scale(normalize(v), CAMERA_RADIUS);
            let (forward, up, right) = look_at_origin(position);
            ViewSpec {
                view_id: i as u8,
                position,
                forward,
                up,
                right,
                projection,
                resolution,
            }
        })
        .collect();
    Ok(CameraRig { views })
}

/// Ray through the center of pixel (px, py); py counts down from the
/// top image row. Perspective rays share the camera origin; orthographic
/// rays share the forward direction.
pub fn pixel_ray(view: &ViewSpec, px: usize, py: usize) -> Result<(Vec3, Vec3), RigError> {
    let res = view.resolution;
    if px >= res || py >= res {
        return Err(RigError::PixelOutOfRange { px, py, resolution: res });
    }
    let u = ((px as f64 + 0.5) / res as f64) * 2.0 - 1.0;
    let v = 1.0 - ((py as f64 + 0.5) / res as f64) * 2.0;
    match view.projection {
        Projection::Perspective { fov_y_deg } => {
            let half = (fov_y_deg.to_radians() / 2.0).tan();
            let dir = normalize(add(
                view.forward,
                add(scale(view.right, u * half), scale(view.up, v * half)),
            ));
            Ok((view.position, dir))
        }
        Projection::Orthographic { half_extent } => {
            let origin = add(
                view.position,
                add(scale(view.right, u * half_extent), scale(view.up, v * half_extent)),
            );
            Ok((origin, view.forward))
        }
    }
}

/// Plain-text table of the rig geometry (one row per view).
pub fn rig_table(rig: &CameraRig) -> String {
    let mut out = String::from(
        "view_id  position_x  position_y  position_z  forward_x  forward_y  forward_z  \
         up_x  up_y  up_z  right_x  right_y  right_z\n",
    );
    for v in &rig.views {
        out.push_str(&format!(
            "{:7}  {:10.6}  {:10.6}  {:10.6}  {:9.6}  {:9.6}  {:9.6}  {:9.6}  {:9.6}  {:9.6}  {:9.6}  {:9.6}  {:9.6}\n",
            v.view_id,
            v.position[0], v.position[1], v.position[2],
            v.forward[0], v.forward[1], v.forward[2],
            v.up[0], v.up[1], v.up[2],
            v.right[0], v.right[1], v.right[2],
        ));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rig_has_twenty_views_at_radius() {
        let rig = build_rig(64, ProjectionKind::Perspective).unwrap();
        assert_eq!(rig.views.len(), 20);
        for v in &rig.views {
            assert!((norm(v.position) - CAMERA_RADIUS).abs() < 1e-9);
            assert!((dot(v.forward, v.position) + CAMERA_RADIUS).abs() < 1e-9);
        }
    }

    #[test]
    fn rejects_bad_resolutions() {
        assert!(build_rig(7, ProjectionKind::Perspective).is_err());
        assert!(build_rig(48, ProjectionKind::Perspective).is_err());
        assert!(build_rig(4, ProjectionKind::Perspective).is_err());
        assert!(build_rig(8, ProjectionKind::Perspective).is_ok());
    }

    #[test]
    fn canonical_set_is_centrally_symmetric() {
        let verts = canonical_vertices();
        for v in &verts {
            let neg = [-v[0], -v[1], -v[2]];
            assert!(
                verts.iter().any(|w| w[0] == neg[0] && w[1] == neg[1] && w[2] == neg[2]),
                "missing antipode of {v:?}"
            );
        }
    }

    #[test]
    fn each_vertex_has_three_equidistant_nearest_neighbors() {
        let rig = build_rig(64, ProjectionKind::Perspective).unwrap();
        let pos: Vec<Vec3> = rig.views.iter().map(|v| v.position).collect();
        for (i, p) in pos.iter().enumerate() {
            let mut dists: Vec<f64> = pos
                .iter()
                .enumerate()
                .filter(|(j, _)| *j != i)
                .map(|(_, q)| norm(sub(*p, *q)))
                .collect();
            dists.sort_by(f64::total_cmp);
            // Exactly three at the minimum chord length, then a gap.
            assert!((dists[1] - dists[0]).abs() < 1e-9);
            assert!((dists[2] - dists[0]).abs() < 1e-9);
            assert!(dists[3] - dists[0] > 1e-3, "fourth neighbor too close");
        }
    }

    #[test]
    fn basis_is_orthonormal() {
        let rig = build_rig(64, ProjectionKind::Orthographic).unwrap();
        for v in &rig.views {
            assert!((norm(v.forward) - 1.0).abs() < 1e-12);
            assert!((norm(v.up) - 1.0).abs() < 1e-12);
            assert!((norm(v.right) - 1.0).abs() < 1e-12);
            assert!(dot(v.forward, v.up).abs() < 1e-12);
            assert!(dot(v.forward, v.right).abs() < 1e-12);
            assert!(dot(v.up, v.right).abs() < 1e-12);
        }
    }

    #[test]
    fn view_order_is_stable_and_lexicographic() {
        let a = build_rig(64, ProjectionKind::Perspective).unwrap();
        let b = build_rig(64, ProjectionKind::Perspective).unwrap();
        for (va, vb) in a.views.iter().zip(&b.views) {
            assert_eq!(va.position, vb.position);
        }
        // First canonical vertex is (-phi, 0, -1/phi).
        let phi = (1.0 + 5f64.sqrt()) / 2.0;
        let first = normalize([-phi, 0.0, -1.0 / phi]);
        let p0 = a.views[0].position;
        for k in 0..3 {
            assert!((p0[k] - first[k] * CAMERA_RADIUS).abs() < 1e-12);
        }
    }

    #[test]
    fn perspective_center_rays_average_to_forward() {
        let rig = build_rig(64, ProjectionKind::Perspective).unwrap();
        for v in &rig.views {
            let mut avg = [0.0; 3];
            for (px, py) in [(31, 31), (31, 32), (32, 31), (32, 32)] {
                let (_, d) = pixel_ray(v, px, py).unwrap();
                avg = add(avg, d);
            }
            let avg = normalize(avg);
            for k in 0..3 {
                assert!((avg[k] - v.forward[k]).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn orthographic_rays_all_point_forward() {
        let rig = build_rig(32, ProjectionKind::Orthographic).unwrap();
        let v = &rig.views[7];
        for px in 0..32 {
            let (o, d) = pixel_ray(v, px, 0).unwrap();
            assert_eq!(d, v.forward);
            // Ray origins stay in the camera plane.
            assert!(dot(sub(o, v.position), v.forward).abs() < 1e-12);
        }
    }

    #[test]
    fn corner_ray_angle_within_frustum_bound() {
        let res = 64usize;
        let rig = build_rig(res, ProjectionKind::Perspective).unwrap();
        let v = &rig.views[0];
        let half_pixel = (FOV_Y_DEG.to_radians() / 2.0).tan() / res as f64;
        let bound = (FOV_Y_DEG.to_radians() / 2.0) * 2f64.sqrt() + half_pixel;
        for (px, py) in [(0, 0), (0, res - 1), (res - 1, 0), (res - 1, res - 1)] {
            let (_, d) = pixel_ray(v, px, py).unwrap();
            let angle = dot(d, v.forward).clamp(-1.0, 1.0).acos();
            assert!(angle <= bound, "corner angle {angle} > bound {bound}");
        }
    }

    #[test]
    fn pixel_out_of_range_is_an_error() {
        let rig = build_rig(8, ProjectionKind::Perspective).unwrap();
        assert!(pixel_ray(&rig.views[0], 8, 0).is_err());
    }
}
