use crate::camrig::Vec3;

const LEAF_SIZE: usize = 8;

struct Node {
    axis: u8,
    split: f64,
    /// Leaf: start index into `order` plus count. Internal: left child,
    /// right child at `first + right`.
    first: u32,
    count: u32,
    right: u32,
}

/// Balanced median-split k-d tree over 3D points. Nearest-neighbor
/// queries are exact and tie-break toward the lowest point index, so
/// results match an exhaustive scan.
pub struct KdTree {
    points: Vec<Vec3>,
    nodes: Vec<Node>,
    order: Vec<u32>,
}

fn dist2(a: Vec3, b: Vec3) -> f64 {
    let dx = a[0] - b[0];
    let dy = a[1] - b[1];
    let dz = a[2] - b[2];
    dx * dx + dy * dy + dz * dz
}

impl KdTree {
    pub fn build(points: &[Vec3]) -> KdTree {
        assert!(!points.is_empty(), "kd-tree over an empty set");
        let mut order: Vec<u32> = (0..points.len() as u32).collect();
        let mut nodes = Vec::new();
        build_node(points, &mut order, 0, points.len(), 0, &mut nodes);
        KdTree {
            points: points.to_vec(),
            nodes,
            order,
        }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Index of and squared distance to the nearest stored point.
    pub fn nearest(&self, query: Vec3) -> (usize, f64) {
        let mut best = (u32::MAX, f64::INFINITY);
        self.search(0, query, &mut best);
        (best.0 as usize, best.1)
    }

    fn search(&self, node: u32, query: Vec3, best: &mut (u32, f64)) {
        let n = &self.nodes[node as usize];
        if n.count > 0 {
            for k in n.first..n.first + n.count {
                let idx = self.order[k as usize];
                let d2 = dist2(self.points[idx as usize], query);
                if d2 < best.1 || (d2 == best.1 && idx < best.0) {
                    *best = (idx, d2);
                }
            }
            return;
        }
        let delta = query[n.axis as usize] - n.split;
        let (near, far) = if delta <= 0.0 {
            (n.first, n.first + n.right)
        } else {
            (n.first + n.right, n.first)
        };
        self.search(near, query, best);
        if delta * delta <= best.1 {
            self.search(far, query, best);
        }
    }
}

fn build_node(
    points: &[Vec3],
    order: &mut [u32],
    offset: usize,
    len: usize,
    depth: usize,
    nodes: &mut Vec<Node>,
) -> u32 {
    let me = nodes.len() as u32;
    if len <= LEAF_SIZE {
        nodes.push(Node {
            axis: 0,
            split: 0.0,
            first: offset as u32,
            count: len as u32,
            right: 0,
        });
        return me;
    }
    // Split on the widest axis at the median for balance.
    let mut lo = [f64::INFINITY; 3];
    let mut hi = [f64::NEG_INFINITY; 3];
    for &i in order[..len].iter() {
        let p = points[i as usize];
        for k in 0..3 {
            lo[k] = lo[k].min(p[k]);
            hi[k] = hi[k].max(p[k]);
        }
    }
    let axis = (0..3)
        .max_by(|&a, &b| (hi[a] - lo[a]).total_cmp(&(hi[b] - lo[b])))
        .unwrap();
    let _ = depth;
    let mid = len / 2;
    order[..len].select_nth_unstable_by(mid, |&a, &b| {
        points[a as usize][axis]
            .total_cmp(&points[b as usize][axis])
            .then(a.cmp(&b))
    });
    let split = points[order[mid] as usize][axis];

    nodes.push(Node {
        axis: axis as u8,
        split,
        first: 0,
        count: 0,
        right: 0,
    });
    let (left_slice, right_slice) = order.split_at_mut(mid);
    let left = build_node(points, left_slice, offset, mid, depth + 1, nodes);
    let right = build_node(
        points,
        &mut right_slice[..len - mid],
        offset + mid,
        len - mid,
        depth + 1,
        nodes,
    );
    nodes[me as usize].first = left;
    nodes[me as usize].right = right - left;
    me
}

/// Exhaustive nearest neighbor with the same tie rule; the oracle for
/// the tree.
pub fn nearest_linear(points: &[Vec3], query: Vec3) -> (usize, f64) {
    let mut best = (usize::MAX, f64::INFINITY);
    for (i, p) in points.iter().enumerate() {
        let d2 = dist2(*p, query);
        if d2 < best.1 || (d2 == best.1 && i < best.0) {
            best = (i, d2);
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;

    fn lcg(n: usize, seed: &mut u64) -> Vec<Vec3> {
        let mut next = || {
            *seed = seed.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            (*seed >> 11) as f64 / (1u64 << 53) as f64 - 0.5
        };
        (0..n).map(|_| [next(), next(), next()]).collect()
    }

    #[test]
    fn tree_query_equals_linear_scan_exactly() {
        let mut seed = 5u64;
        let pts = lcg(500, &mut seed);
        let tree = KdTree::build(&pts);
        let queries = lcg(1000, &mut seed);
        for q in queries {
            let (ti, td) = tree.nearest(q);
            let (li, ld) = nearest_linear(&pts, q);
            assert_eq!(ti, li);
            assert_eq!(td.to_bits(), ld.to_bits());
        }
    }

    #[test]
    fn ties_break_toward_the_lowest_index() {
        // Two identical points; query equidistant.
        let pts = vec![[1.0, 0.0, 0.0], [1.0, 0.0, 0.0], [-1.0, 0.0, 0.0]];
        let tree = KdTree::build(&pts);
        let (i, _) = tree.nearest([1.0, 0.1, 0.0]);
        assert_eq!(i, 0);
    }
}
