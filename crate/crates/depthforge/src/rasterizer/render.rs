use rayon::prelude::*;

use crate::camrig::{dot, pixel_ray, Projection, ViewSpec};

use super::bvh::Bvh;
use super::mesh::TriangleMesh;

/// Continuous depth image: distance along the view's forward axis per
/// pixel, `+inf` for background.
#[derive(Debug, Clone)]
pub struct DepthImage {
    pub resolution: usize,
    pub values: Vec<f64>,
}

impl DepthImage {
    pub fn at(&self, px: usize, py: usize) -> f64 {
        self.values[py * self.resolution + px]
    }

    pub fn foreground_pixels(&self) -> usize {
        self.values.iter().filter(|v| v.is_finite()).count()
    }
}

/// Holds the mesh with its acceleration structure so a rig's 20 views
/// share one BVH build.
pub struct DepthRenderer {
    mesh: TriangleMesh,
    bvh: Bvh,
}

impl DepthRenderer {
    pub fn new(mesh: TriangleMesh) -> DepthRenderer {
        let bvh = Bvh::build(&mesh);
        DepthRenderer { mesh, bvh }
    }

    /// Z-buffered depth of the nearest surface through each pixel
    /// center. Depth is measured along the forward axis, so the
    /// quantization bins of the codec are planar slices.
    pub fn render(&self, view: &ViewSpec) -> DepthImage {
        let res = view.resolution;
        let mut values = vec![f64::INFINITY; res * res];
        values.par_chunks_mut(res).enumerate().for_each(|(py, row)| {
            for (px, out) in row.iter_mut().enumerate() {
                let (origin, dir) = pixel_ray(view, px, py).expect("pixel in range");
                if let Some((t, _)) = self.bvh.intersect(&self.mesh, origin, dir) {
                    *out = match view.projection {
                        Projection::Perspective { .. } => t * dot(dir, view.forward),
                        Projection::Orthographic { .. } => t,
                    };
                }
            }
        });
        DepthImage { resolution: res, values }
    }
}

/// One-off render; builds the BVH internally.
pub fn render_depth(mesh: &TriangleMesh, view: &ViewSpec) -> DepthImage {
    DepthRenderer::new(mesh.clone()).render(view)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::camrig::{build_rig, ProjectionKind, Vec3};
    use crate::rasterizer::mesh::icosphere;

    fn axis_view(resolution: usize, projection: Projection) -> ViewSpec {
        ViewSpec {
            view_id: 0,
            position: [0.0, 0.0, 2.5],
            forward: [0.0, 0.0, -1.0],
            up: [0.0, 1.0, 0.0],
            right: [1.0, 0.0, 0.0],
            projection,
            resolution,
        }
    }

    fn quad(z: f64, half: f64) -> (Vec<Vec3>, Vec<[usize; 3]>) {
        (
            vec![
                [-half, -half, z],
                [half, -half, z],
                [half, half, z],
                [-half, half, z],
            ],
            vec![[0, 1, 2], [0, 2, 3]],
        )
    }

    #[test]
    fn orthographic_plane_has_constant_depth() {
        let (vertices, triangles) = quad(0.0, 1.0);
        let mesh = TriangleMesh { vertices, triangles };
        let view = axis_view(16, Projection::Orthographic { half_extent: 0.55 });
        let img = render_depth(&mesh, &view);
        for v in &img.values {
            assert!((v - 2.5).abs() < 1e-12, "depth {v}");
        }
    }

    #[test]
    fn nearer_plane_occludes_with_z_buffer() {
        let (mut vertices, mut triangles) = quad(0.0, 1.0);
        let (v2, t2) = quad(0.5, 1.0);
        let base = vertices.len();
        vertices.extend(v2);
        triangles.extend(t2.iter().map(|t| [t[0] + base, t[1] + base, t[2] + base]));
        let mesh = TriangleMesh { vertices, triangles };
        let view = axis_view(16, Projection::Orthographic { half_extent: 0.55 });
        let img = render_depth(&mesh, &view);
        for v in &img.values {
            assert!((v - 2.0).abs() < 1e-12, "occluded depth {v}");
        }
    }

    #[test]
    fn sphere_depths_stay_in_analytic_band_for_all_rig_views() {
        let sphere = icosphere(3); // 1280 triangles
        // A faceted sphere's silhouette reaches past the equator plane
        // by at most half a facet's angular radius: depth overshoot
        // <= r * sin(alpha_max). Computed from the mesh, not tuned.
        let alpha_max = max_face_angular_radius(&sphere);
        let eps_mesh = 0.5 * alpha_max.sin();
        let renderer = DepthRenderer::new(sphere);
        for kind in [ProjectionKind::Perspective, ProjectionKind::Orthographic] {
            let rig = build_rig(32, kind).unwrap();
            for view in &rig.views {
                let img = renderer.render(view);
                assert!(img.foreground_pixels() > 0, "sphere invisible?");
                for &d in img.values.iter().filter(|v| v.is_finite()) {
                    assert!(d >= 2.0 - 1e-9, "too near: {d}");
                    assert!(d <= 2.5 + eps_mesh, "behind the equator: {d}");
                }
            }
        }
    }

    /// Max angle between a face vertex and its face centroid, as seen
    /// from the origin.
    fn max_face_angular_radius(mesh: &TriangleMesh) -> f64 {
        let mut worst: f64 = 0.0;
        for tri in &mesh.triangles {
            let (a, b, c) = (
                mesh.vertices[tri[0]],
                mesh.vertices[tri[1]],
                mesh.vertices[tri[2]],
            );
            let centroid = crate::camrig::normalize([
                (a[0] + b[0] + c[0]) / 3.0,
                (a[1] + b[1] + c[1]) / 3.0,
                (a[2] + b[2] + c[2]) / 3.0,
            ]);
            for v in [a, b, c] {
                let ang = dot(crate::camrig::normalize(v), centroid)
                    .clamp(-1.0, 1.0)
                    .acos();
                worst = worst.max(ang);
            }
        }
        worst
    }

    #[test]
    fn rendering_is_deterministic() {
        let sphere = icosphere(2);
        let rig = build_rig(16, ProjectionKind::Perspective).unwrap();
        let r = DepthRenderer::new(sphere);
        let a = r.render(&rig.views[3]);
        let b = r.render(&rig.views[3]);
        assert_eq!(a.values, b.values);
    }
}
