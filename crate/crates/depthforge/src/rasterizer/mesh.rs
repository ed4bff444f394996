use thiserror::Error;

use crate::camrig::{add, cross, norm, normalize, scale, sub, Vec3};

#[derive(Debug, Error)]
pub enum MeshError {
    #[error("mesh has no geometry")]
    Empty,
    #[error("triangle {tri} references vertex {index} but only {len} exist")]
    IndexOutOfRange { tri: usize, index: usize, len: usize },
    #[error("mesh is degenerate (bounding sphere radius ~ 0)")]
    Degenerate,
}

/// Indexed triangle soup in meters.
#[derive(Debug, Clone, Default)]
pub struct TriangleMesh {
    pub vertices: Vec<Vec3>,
    pub triangles: Vec<[usize; 3]>,
}

impl TriangleMesh {
    pub fn new(vertices: Vec<Vec3>, triangles: Vec<[usize; 3]>) -> Result<Self, MeshError> {
        if vertices.is_empty() || triangles.is_empty() {
            return Err(MeshError::Empty);
        }
        for (t, tri) in triangles.iter().enumerate() {
            for &i in tri {
                if i >= vertices.len() {
                    return Err(MeshError::IndexOutOfRange {
                        tri: t,
                        index: i,
                        len: vertices.len(),
                    });
                }
            }
        }
        Ok(TriangleMesh { vertices, triangles })
    }

    pub fn triangle_area(&self, t: usize) -> f64 {
        let [a, b, c] = self.triangles[t];
        let u = sub(self.vertices[b], self.vertices[a]);
        let v = sub(self.vertices[c], self.vertices[a]);
        norm(cross(u, v)) / 2.0
    }
}

pub struct NormalizedMesh {
    pub mesh: TriangleMesh,
    /// Triangles discarded for having area below 1e-12 after scaling.
    pub dropped_triangles: usize,
}

/// Centers the mesh's minimal bounding sphere on the origin and scales
/// it to radius 0.5. Degenerate triangles are dropped afterwards.
pub fn normalize_mesh(mesh: &TriangleMesh) -> Result<NormalizedMesh, MeshError> {
    if mesh.vertices.is_empty() || mesh.triangles.is_empty() {
        return Err(MeshError::Empty);
    }
    let (center, radius) = min_bounding_sphere(&mesh.vertices);
    if radius < 1e-12 {
        return Err(MeshError::Degenerate);
    }
    let s = 0.5 / radius;
    let vertices: Vec<Vec3> = mesh
        .vertices
        .iter()
        .map(|v| scale(sub(*v, center), s))
        .collect();
    let scaled = TriangleMesh {
        vertices,
        triangles: mesh.triangles.clone(),
    };
    let mut triangles = Vec::with_capacity(scaled.triangles.len());
    let mut dropped = 0;
    for (t, tri) in scaled.triangles.iter().enumerate() {
        if scaled.triangle_area(t) < 1e-12 {
            dropped += 1;
        } else {
            triangles.push(*tri);
        }
    }
    if triangles.is_empty() {
        return Err(MeshError::Degenerate);
    }
    Ok(NormalizedMesh {
        mesh: TriangleMesh {
            vertices: scaled.vertices,
            triangles,
        },
        dropped_triangles: dropped,
    })
}

// --- exact minimal bounding sphere (Welzl, nested-loop form) ---

#[derive(Clone, Copy)]
struct Ball {
    center: Vec3,
    r2: f64,
}

impl Ball {
    fn contains(&self, p: Vec3) -> bool {
        let d = sub(p, self.center);
        let d2 = d[0] * d[0] + d[1] * d[1] + d[2] * d[2];
        d2 <= self.r2 * (1.0 + 1e-10) + 1e-30
    }
}

fn ball2(a: Vec3, b: Vec3) -> Ball {
    let center = scale(add(a, b), 0.5);
    let d = sub(b, a);
    Ball {
        center,
        r2: (d[0] * d[0] + d[1] * d[1] + d[2] * d[2]) / 4.0,
    }
}

fn ball3(a: Vec3, b: Vec3, c: Vec3) -> Ball {
    let u = sub(b, a);
    let v = sub(c, a);
    let uu = crate::camrig::dot(u, u);
    let vv = crate::camrig::dot(v, v);
    let uv = crate::camrig::dot(u, v);
    let det = uu * vv - uv * uv;
    if det.abs() < 1e-14 * uu.max(vv).max(1e-300) {
        // Collinear support: the widest pair determines the ball.
        let candidates = [ball2(a, b), ball2(a, c), ball2(b, c)];
        return candidates
            .into_iter()
            .max_by(|x, y| x.r2.total_cmp(&y.r2))
            .unwrap();
    }
    let alpha = (uu * vv - uv * vv) / (2.0 * det);
    let beta = (uu * vv - uv * uu) / (2.0 * det);
    let center = add(a, add(scale(u, alpha), scale(v, beta)));
    let d = sub(a, center);
    Ball {
        center,
        r2: d[0] * d[0] + d[1] * d[1] + d[2] * d[2],
    }
}

fn ball4(a: Vec3, b: Vec3, c: Vec3, d: Vec3) -> Ball {
    // Solve (p - center)^2 equal for all four support points.
    let mut m = [[0.0f64; 3]; 3];
    let mut rhs = [0.0f64; 3];
    let pts = [b, c, d];
    for (row, p) in pts.iter().enumerate() {
        for k in 0..3 {
            m[row][k] = p[k] - a[k];
        }
        rhs[row] = (crate::camrig::dot(*p, *p) - crate::camrig::dot(a, a)) / 2.0;
    }
    match solve3(m, rhs) {
        Some(center) => {
            let e = sub(a, center);
            Ball {
                center,
                r2: e[0] * e[0] + e[1] * e[1] + e[2] * e[2],
            }
        }
        None => {
            // Coplanar support: fall back to the widest 3-point ball.
            let candidates = [ball3(a, b, c), ball3(a, b, d), ball3(a, c, d), ball3(b, c, d)];
            candidates
                .into_iter()
                .max_by(|x, y| x.r2.total_cmp(&y.r2))
                .unwrap()
        }
    }
}

fn solve3(mut m: [[f64; 3]; 3], mut rhs: [f64; 3]) -> Option<Vec3> {
    for col in 0..3 {
        let mut piv = col;
        for row in col + 1..3 {
            if m[row][col].abs() > m[piv][col].abs() {
                piv = row;
            }
        }
        if m[piv][col].abs() < 1e-12 {
            return None;
        }
        m.swap(col, piv);
        rhs.swap(col, piv);
        for row in col + 1..3 {
            let f = m[row][col] / m[col][col];
            for k in col..3 {
                m[row][k] -= f * m[col][k];
            }
            rhs[row] -= f * rhs[col];
        }
    }
    let mut x = [0.0; 3];
    for col in (0..3).rev() {
        let mut acc = rhs[col];
        for k in col + 1..3 {
            acc -= m[col][k] * x[k];
        }
        x[col] = acc / m[col][col];
    }
    Some(x)
}

fn splitmix(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9E3779B97F4A7C15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58476D1CE4E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D049BB133111EB);
    z ^ (z >> 31)
}

/// Exact minimal enclosing sphere of a point set, `(center, radius)`.
/// Deterministic: the internal shuffle is fixed-seeded.
pub(crate) fn min_bounding_sphere(points: &[Vec3]) -> (Vec3, f64) {
    assert!(!points.is_empty());
    let mut pts: Vec<Vec3> = points.to_vec();
    let mut state = 0xD1F7_5EEDu64;
    for i in (1..pts.len()).rev() {
        let j = (splitmix(&mut state) % (i as u64 + 1)) as usize;
        pts.swap(i, j);
    }

    let mut ball = Ball { center: pts[0], r2: 0.0 };
    for i in 1..pts.len() {
        if ball.contains(pts[i]) {
            continue;
        }
        // pts[i] lies on the boundary of the new ball.
        ball = Ball { center: pts[i], r2: 0.0 };
        for j in 0..i {
            if ball.contains(pts[j]) {
                continue;
            }
            ball = ball2(pts[i], pts[j]);
            for k in 0..j {
                if ball.contains(pts[k]) {
                    continue;
                }
                ball = ball3(pts[i], pts[j], pts[k]);
                for l in 0..k {
                    if ball.contains(pts[l]) {
                        continue;
                    }
                    ball = ball4(pts[i], pts[j], pts[k], pts[l]);
                }
            }
        }
    }
    (ball.center, ball.r2.sqrt())
}

/// Geodesic sphere of radius 0.5 centered on the origin, built by
/// subdividing an icosahedron `subdivisions` times (each step quadruples
/// the triangle count; 20 * 4^n triangles total).
pub fn icosphere(subdivisions: usize) -> TriangleMesh {
    let phi = (1.0 + 5f64.sqrt()) / 2.0;
    let mut vertices: Vec<Vec3> = vec![
        [-1.0, phi, 0.0],
        [1.0, phi, 0.0],
        [-1.0, -phi, 0.0],
        [1.0, -phi, 0.0],
        [0.0, -1.0, phi],
        [0.0, 1.0, phi],
        [0.0, -1.0, -phi],
        [0.0, 1.0, -phi],
        [phi, 0.0, -1.0],
        [phi, 0.0, 1.0],
        [-phi, 0.0, -1.0],
        [-phi, 0.0, 1.0],
    ];
    for v in &mut vertices {
        *v = scale(normalize(*v), 0.5);
    }
    let mut triangles: Vec<[usize; 3]> = vec![
        [0, 11, 5],
        [0, 5, 1],
        [0, 1, 7],
        [0, 7, 10],
        [0, 10, 11],
        [1, 5, 9],
        [5, 11, 4],
        [11, 10, 2],
        [10, 7, 6],
        [7, 1, 8],
        [3, 9, 4],
        [3, 4, 2],
        [3, 2, 6],
        [3, 6, 8],
        [3, 8, 9],
        [4, 9, 5],
        [2, 4, 11],
        [6, 2, 10],
        [8, 6, 7],
        [9, 8, 1],
    ];
    for _ in 0..subdivisions {
        let mut midpoints: std::collections::HashMap<(usize, usize), usize> =
            std::collections::HashMap::new();
        let mut next = Vec::with_capacity(triangles.len() * 4);
        for tri in &triangles {
            let mut mids = [0usize; 3];
            for e in 0..3 {
                let (a, b) = (tri[e], tri[(e + 1) % 3]);
                let key = (a.min(b), a.max(b));
                mids[e] = *midpoints.entry(key).or_insert_with(|| {
                    let m = scale(
                        normalize(add(vertices[a], vertices[b])),
                        0.5,
                    );
                    vertices.push(m);
                    vertices.len() - 1
                });
            }
            next.push([tri[0], mids[0], mids[2]]);
            next.push([tri[1], mids[1], mids[0]]);
            next.push([tri[2], mids[2], mids[1]]);
            next.push([mids[0], mids[1], mids[2]]);
        }
        triangles = next;
    }
    TriangleMesh { vertices, triangles }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cube(center: Vec3, half: f64) -> TriangleMesh {
        let mut vertices = Vec::new();
        for &sx in &[-1.0, 1.0] {
            for &sy in &[-1.0, 1.0] {
                for &sz in &[-1.0, 1.0] {
                    vertices.push(add(center, [sx * half, sy * half, sz * half]));
                }
            }
        }
        // 6 faces x 2 triangles over the binary-ordered corners.
        let triangles = vec![
            [0, 1, 3],
            [0, 3, 2],
            [4, 6, 7],
            [4, 7, 5],
            [0, 4, 5],
            [0, 5, 1],
            [2, 3, 7],
            [2, 7, 6],
            [0, 2, 6],
            [0, 6, 4],
            [1, 5, 7],
            [1, 7, 3],
        ];
        TriangleMesh { vertices, triangles }
    }

    #[test]
    fn cube_normalizes_to_half_diagonal_sphere() {
        let mesh = cube([10.0, -3.0, 5.0], 1.0);
        let n = normalize_mesh(&mesh).unwrap();
        assert_eq!(n.dropped_triangles, 0);
        // All 8 corners land exactly on the radius-0.5 sphere.
        for v in &n.mesh.vertices {
            assert!((norm(*v) - 0.5).abs() < 1e-12, "corner at {}", norm(*v));
        }
    }

    #[test]
    fn normalization_is_idempotent() {
        let mesh = cube([2.0, 2.0, 2.0], 0.7);
        let once = normalize_mesh(&mesh).unwrap().mesh;
        let twice = normalize_mesh(&once).unwrap().mesh;
        for (a, b) in once.vertices.iter().zip(&twice.vertices) {
            for k in 0..3 {
                assert!((a[k] - b[k]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn single_acute_triangle_lands_on_its_circumsphere() {
        // Equilateral triangle: minimal sphere is the circumcircle's.
        let mesh = TriangleMesh {
            vertices: vec![
                [1.0, 0.0, 0.0],
                [-0.5, 3f64.sqrt() / 2.0, 0.0],
                [-0.5, -3f64.sqrt() / 2.0, 0.0],
            ],
            triangles: vec![[0, 1, 2]],
        };
        let n = normalize_mesh(&mesh).unwrap();
        // Brute-force farthest point from origin must be exactly 0.5.
        let far = n
            .mesh
            .vertices
            .iter()
            .map(|v| norm(*v))
            .fold(0.0f64, f64::max);
        assert!((far - 0.5).abs() < 1e-12);
        // Every vertex of an acute triangle touches the sphere.
        for v in &n.mesh.vertices {
            assert!((norm(*v) - 0.5).abs() < 1e-12);
        }
    }

    #[test]
    fn obtuse_triangle_uses_longest_edge_diameter() {
        let mesh = TriangleMesh {
            vertices: vec![[0.0, 0.0, 0.0], [4.0, 0.0, 0.0], [2.0, 0.1, 0.0]],
            triangles: vec![[0, 1, 2]],
        };
        let n = normalize_mesh(&mesh).unwrap();
        // The two wide corners define the diameter; the third is inside.
        let norms: Vec<f64> = n.mesh.vertices.iter().map(|v| norm(*v)).collect();
        assert!((norms[0] - 0.5).abs() < 1e-12);
        assert!((norms[1] - 0.5).abs() < 1e-12);
        assert!(norms[2] < 0.5);
    }

    #[test]
    fn degenerate_triangles_are_dropped_with_count() {
        let mut mesh = cube([0.0, 0.0, 0.0], 1.0);
        // A zero-area sliver.
        mesh.triangles.push([0, 0, 1]);
        let n = normalize_mesh(&mesh).unwrap();
        assert_eq!(n.dropped_triangles, 1);
        assert_eq!(n.mesh.triangles.len(), 12);
    }

    #[test]
    fn empty_mesh_is_an_error() {
        let mesh = TriangleMesh::default();
        assert!(matches!(normalize_mesh(&mesh), Err(MeshError::Empty)));
    }

    #[test]
    fn icosphere_vertices_sit_on_the_sphere() {
        let s = icosphere(3);
        assert_eq!(s.triangles.len(), 20 * 4usize.pow(3));
        for v in &s.vertices {
            assert!((norm(*v) - 0.5).abs() < 1e-12);
        }
    }

    #[test]
    fn min_sphere_matches_brute_force_on_random_points() {
        let mut state = 99u64;
        let mut rnd = || (splitmix(&mut state) >> 11) as f64 / (1u64 << 53) as f64 - 0.5;
        for _ in 0..20 {
            let pts: Vec<Vec3> = (0..40).map(|_| [rnd(), rnd(), rnd()]).collect();
            let (c, r) = min_bounding_sphere(&pts);
            // Sphere covers everything...
            for p in &pts {
                assert!(norm(sub(*p, c)) <= r * (1.0 + 1e-9) + 1e-12);
            }
            // ...and is supported (some point near the boundary).
            let far = pts.iter().map(|p| norm(sub(*p, c))).fold(0.0f64, f64::max);
            assert!(far >= r * (1.0 - 1e-9) - 1e-12);
        }
    }
}
