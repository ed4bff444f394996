use crate::camrig::Vec3;

use super::mesh::TriangleMesh;

const LEAF_SIZE: usize = 4;

struct Node {
    bb_min: Vec3,
    bb_max: Vec3,
    /// Leaf: index into `order` plus count. Internal: left child index,
    /// right child is `left + right_offset`.
    first: u32,
    count: u32,
    right: u32,
}

/// Median-split bounding volume hierarchy over triangle centroids.
pub struct Bvh {
    nodes: Vec<Node>,
    order: Vec<u32>,
}

impl Bvh {
    pub fn build(mesh: &TriangleMesh) -> Bvh {
        let n = mesh.triangles.len();
        let centroids: Vec<Vec3> = (0..n)
            .map(|t| {
                let [a, b, c] = mesh.triangles[t];
                let (va, vb, vc) = (mesh.vertices[a], mesh.vertices[b], mesh.vertices[c]);
                [
                    (va[0] + vb[0] + vc[0]) / 3.0,
                    (va[1] + vb[1] + vc[1]) / 3.0,
                    (va[2] + vb[2] + vc[2]) / 3.0,
                ]
            })
            .collect();
        let mut order: Vec<u32> = (0..n as u32).collect();
        let mut nodes = Vec::with_capacity(2 * n);
        build_node(mesh, &centroids, &mut order, 0, n, &mut nodes);
        Bvh { nodes, order }
    }

    /// Nearest intersection parameter along the ray, if any, together
    /// with the triangle index. `t` must exceed `t_min`.
    pub fn intersect(&self, mesh: &TriangleMesh, origin: Vec3, dir: Vec3) -> Option<(f64, u32)> {
        if self.nodes.is_empty() {
            return None;
        }
        let pre = RayPrecomp::new(origin, dir);
        let inv = [1.0 / dir[0], 1.0 / dir[1], 1.0 / dir[2]];
        let mut best: Option<(f64, u32)> = None;
        let mut stack: Vec<u32> = vec![0];
        while let Some(ni) = stack.pop() {
            let node = &self.nodes[ni as usize];
            let limit = best.map_or(f64::INFINITY, |(t, _)| t);
            if !aabb_hit(node.bb_min, node.bb_max, origin, inv, limit) {
                continue;
            }
            if node.count > 0 {
                for k in node.first..node.first + node.count {
                    let tri = self.order[k as usize];
                    let [a, b, c] = mesh.triangles[tri as usize];
                    if let Some(t) = pre.intersect(
                        mesh.vertices[a],
                        mesh.vertices[b],
                        mesh.vertices[c],
                    ) {
                        if best.is_none_or(|(bt, _)| t < bt) {
                            best = Some((t, tri));
                        }
                    }
                }
            } else {
                stack.push(node.first + node.right);
                stack.push(node.first);
            }
        }
        best
    }
}

fn build_node(
    mesh: &TriangleMesh,
    centroids: &[Vec3],
    order: &mut [u32],
    offset: usize,
    len: usize,
    nodes: &mut Vec<Node>,
) -> u32 {
    let slice = &order[..len];
    let mut bb_min = [f64::INFINITY; 3];
    let mut bb_max = [f64::NEG_INFINITY; 3];
    for &t in slice {
        for &vi in &mesh.triangles[t as usize] {
            let v = mesh.vertices[vi];
            for k in 0..3 {
                bb_min[k] = bb_min[k].min(v[k]);
                bb_max[k] = bb_max[k].max(v[k]);
            }
        }
    }
    let me = nodes.len() as u32;
    nodes.push(Node {
        bb_min,
        bb_max,
        first: offset as u32,
        count: len as u32,
        right: 0,
    });
    if len <= LEAF_SIZE {
        return me;
    }

    // Split at the centroid median along the widest axis; ties are
    // broken by triangle index for determinism.
    let mut axis = 0;
    let mut widest = -1.0;
    for k in 0..3 {
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for &t in order[..len].iter() {
            lo = lo.min(centroids[t as usize][axis_val(k)]);
            hi = hi.max(centroids[t as usize][axis_val(k)]);
        }
        if hi - lo > widest {
            widest = hi - lo;
            axis = k;
        }
    }
    let mid = len / 2;
    order[..len].select_nth_unstable_by(mid, |&a, &b| {
        centroids[a as usize][axis]
            .total_cmp(&centroids[b as usize][axis])
            .then(a.cmp(&b))
    });

    let (left_slice, right_slice) = order.split_at_mut(mid);
    let left = build_node(mesh, centroids, left_slice, offset, mid, nodes);
    let right = build_node(
        mesh,
        centroids,
        &mut right_slice[..len - mid],
        offset + mid,
        len - mid,
        nodes,
    );
    nodes[me as usize].first = left;
    nodes[me as usize].count = 0;
    nodes[me as usize].right = right - left;
    me
}

fn axis_val(k: usize) -> usize {
    k
}

fn aabb_hit(bb_min: Vec3, bb_max: Vec3, origin: Vec3, inv: Vec3, t_best: f64) -> bool {
    let mut t0 = 1e-9f64;
    let mut t1 = t_best;
    for k in 0..3 {
        if inv[k].is_infinite() {
            // Ray parallel to this slab; a boundary origin counts as inside.
            if origin[k] < bb_min[k] || origin[k] > bb_max[k] {
                return false;
            }
            continue;
        }
        let a = (bb_min[k] - origin[k]) * inv[k];
        let b = (bb_max[k] - origin[k]) * inv[k];
        let (lo, hi) = if a < b { (a, b) } else { (b, a) };
        t0 = t0.max(lo);
        t1 = t1.min(hi);
        if t0 > t1 {
            return false;
        }
    }
    true
}

/// Watertight ray-triangle test: vertices are translated to the ray
/// origin, permuted so the dominant ray axis is z, sheared onto the ray,
/// and classified by 2D edge functions. Shared edges of adjacent
/// triangles evaluate to exactly negated edge functions, so a ray
/// crossing an edge hits at least one of the two triangles.
struct RayPrecomp {
    origin: Vec3,
    kx: usize,
    ky: usize,
    kz: usize,
    sx: f64,
    sy: f64,
    sz: f64,
}

impl RayPrecomp {
    fn new(origin: Vec3, dir: Vec3) -> RayPrecomp {
        let kz = (0..3)
            .max_by(|&a, &b| dir[a].abs().total_cmp(&dir[b].abs()))
            .unwrap();
        let mut kx = (kz + 1) % 3;
        let mut ky = (kz + 2) % 3;
        if dir[kz] < 0.0 {
            std::mem::swap(&mut kx, &mut ky);
        }
        RayPrecomp {
            origin,
            kx,
            ky,
            kz,
            sx: dir[kx] / dir[kz],
            sy: dir[ky] / dir[kz],
            sz: 1.0 / dir[kz],
        }
    }

    fn intersect(&self, a: Vec3, b: Vec3, c: Vec3) -> Option<f64> {
        let oa = [
            a[0] - self.origin[0],
            a[1] - self.origin[1],
            a[2] - self.origin[2],
        ];
        let ob = [
            b[0] - self.origin[0],
            b[1] - self.origin[1],
            b[2] - self.origin[2],
        ];
        let oc = [
            c[0] - self.origin[0],
            c[1] - self.origin[1],
            c[2] - self.origin[2],
        ];
        let ax = oa[self.kx] - self.sx * oa[self.kz];
        let ay = oa[self.ky] - self.sy * oa[self.kz];
        let bx = ob[self.kx] - self.sx * ob[self.kz];
        let by = ob[self.ky] - self.sy * ob[self.kz];
        let cx = oc[self.kx] - self.sx * oc[self.kz];
        let cy = oc[self.ky] - self.sy * oc[self.kz];

        let u = cx * by - cy * bx;
        let v = ax * cy - ay * cx;
        let w = bx * ay - by * ax;
        if (u < 0.0 || v < 0.0 || w < 0.0) && (u > 0.0 || v > 0.0 || w > 0.0) {
            return None;
        }
        let det = u + v + w;
        if det == 0.0 {
            return None;
        }
        let az = self.sz * oa[self.kz];
        let bz = self.sz * ob[self.kz];
        let cz = self.sz * oc[self.kz];
        let t = (u * az + v * bz + w * cz) / det;
        (t > 1e-9).then_some(t)
    }
}
