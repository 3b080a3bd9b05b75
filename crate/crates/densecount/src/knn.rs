//! Exact k-nearest-neighbor queries over 2-D point sets.
//!
//! Brute force wins for the handful-of-points case; a kd-tree covers the
//! thousands-of-annotations case. Both paths select neighbors by squared
//! distance computed with the same expression and finish by summing
//! square roots in ascending order, so they return bitwise-identical
//! means. Ties are bitwise-equal distances, so which tied neighbor is
//! kept never changes the result.

use crate::density::Point;

/// Below this size a per-point brute-force scan beats building a tree.
pub(crate) const BRUTE_FORCE_MAX: usize = 64;

/// Mean of the square roots of already-ascending squared distances.
pub(crate) fn mean_of_sorted_sq_dists(d2: &[f64]) -> f64 {
    let mut sum = 0.0;
    for &d in d2 {
        sum += d.sqrt();
    }
    sum / d2.len() as f64
}

/// The k smallest squared distances from `points[index]` to the other
/// points, sorted ascending. Caller guarantees `points.len() > k`.
pub(crate) fn k_smallest_sq_dists_brute(points: &[Point], index: usize, k: usize) -> Vec<f64> {
    let origin = points[index];
    let mut d2: Vec<f64> = points
        .iter()
        .enumerate()
        .filter(|(j, _)| *j != index)
        .map(|(_, p)| origin.sq_dist(*p))
        .collect();
    d2.select_nth_unstable_by(k - 1, f64::total_cmp);
    d2.truncate(k);
    d2.sort_unstable_by(f64::total_cmp);
    d2
}

/// Mean k-nearest-neighbor distance for every point, excluding the point
/// itself from its own neighbor set. Caller guarantees `points.len() > k`.
pub(crate) fn all_knn_mean_distances(points: &[Point], k: usize) -> Vec<f64> {
    if points.len() <= BRUTE_FORCE_MAX {
        return (0..points.len())
            .map(|i| mean_of_sorted_sq_dists(&k_smallest_sq_dists_brute(points, i, k)))
            .collect();
    }
    let tree = KdTree::build(points);
    let mut heap_buf = Vec::with_capacity(k);
    (0..points.len())
        .map(|i| {
            let mut d2 = tree.k_smallest_sq_dists(points, i as u32, k, &mut heap_buf);
            d2.sort_unstable_by(f64::total_cmp);
            mean_of_sorted_sq_dists(&d2)
        })
        .collect()
}

struct Node {
    point: u32,
    left: i32,
    right: i32,
}

/// Balanced 2-d tree over point indices, alternating split axis by depth.
struct KdTree {
    nodes: Vec<Node>,
    root: i32,
}

impl KdTree {
    fn build(points: &[Point]) -> Self {
        let mut order: Vec<u32> = (0..points.len() as u32).collect();
        let mut nodes = Vec::with_capacity(points.len());
        let root = Self::build_rec(points, &mut order, 0, &mut nodes);
        Self { nodes, root }
    }

    fn build_rec(points: &[Point], order: &mut [u32], depth: usize, nodes: &mut Vec<Node>) -> i32 {
        if order.is_empty() {
            return -1;
        }
        let axis = depth % 2;
        let coord = |i: &u32| {
            let p = points[*i as usize];
            if axis == 0 {
                p.x
            } else {
                p.y
            }
        };
        let mid = order.len() / 2;
        order.select_nth_unstable_by(mid, |a, b| coord(a).total_cmp(&coord(b)));
        let point = order[mid];
        let (lo, rest) = order.split_at_mut(mid);
        let hi = &mut rest[1..];
        let left = Self::build_rec(points, lo, depth + 1, nodes);
        let right = Self::build_rec(points, hi, depth + 1, nodes);
        nodes.push(Node { point, left, right });
        nodes.len() as i32 - 1
    }

    /// The k smallest squared distances from `points[exclude]` to the
    /// other points, in unspecified order.
    fn k_smallest_sq_dists(
        &self,
        points: &[Point],
        exclude: u32,
        k: usize,
        heap: &mut Vec<f64>,
    ) -> Vec<f64> {
        heap.clear();
        self.search(self.root, 0, points, points[exclude as usize], exclude, k, heap);
        debug_assert_eq!(heap.len(), k);
        heap.clone()
    }

    #[allow(clippy::too_many_arguments)]
    fn search(
        &self,
        node: i32,
        depth: usize,
        points: &[Point],
        target: Point,
        exclude: u32,
        k: usize,
        heap: &mut Vec<f64>,
    ) {
        if node < 0 {
            return;
        }
        let n = &self.nodes[node as usize];
        let p = points[n.point as usize];
        if n.point != exclude {
            heap_push(heap, k, target.sq_dist(p));
        }
        let diff = if depth.is_multiple_of(2) {
            target.x - p.x
        } else {
            target.y - p.y
        };
        let (near, far) = if diff < 0.0 {
            (n.left, n.right)
        } else {
            (n.right, n.left)
        };
        self.search(near, depth + 1, points, target, exclude, k, heap);
        // Far side can only hold candidates at d2 >= diff^2; when the heap
        // is full and diff^2 >= worst those are at best bitwise ties.
        if heap.len() < k || diff * diff < heap_worst(heap) {
            self.search(far, depth + 1, points, target, exclude, k, heap);
        }
    }
}

// Tiny max-heap on a Vec<f64>; k is at most a handful so sift costs are
// negligible.
fn heap_worst(heap: &[f64]) -> f64 {
    heap[0]
}

fn heap_push(heap: &mut Vec<f64>, k: usize, d2: f64) {
    if heap.len() < k {
        heap.push(d2);
        let mut i = heap.len() - 1;
        while i > 0 {
            let parent = (i - 1) / 2;
            if heap[parent].total_cmp(&heap[i]).is_lt() {
                heap.swap(parent, i);
                i = parent;
            } else {
                break;
            }
        }
    } else if d2.total_cmp(&heap_worst(heap)).is_lt() {
        heap[0] = d2;
        let mut i = 0;
        loop {
            let (l, r) = (2 * i + 1, 2 * i + 2);
            let mut largest = i;
            if l < heap.len() && heap[l].total_cmp(&heap[largest]).is_gt() {
                largest = l;
            }
            if r < heap.len() && heap[r].total_cmp(&heap[largest]).is_gt() {
                largest = r;
            }
            if largest == i {
                break;
            }
            heap.swap(i, largest);
            i = largest;
        }
    }
}
