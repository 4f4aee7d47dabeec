//! Static 2-D kd-tree for exact nearest-neighbor search.

/// A balanced kd-tree built once over a fixed point set.
#[derive(Debug, Clone)]
pub struct KdTree {
    points: Vec<[f64; 2]>,
    nodes: Vec<Node>,
    root: u32,
}

#[derive(Debug, Clone, Copy)]
struct Node {
    point: u32,
    axis: u8,
    left: u32,
    right: u32,
}

const NONE: u32 = u32::MAX;

/// Result of a nearest-neighbor query.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Nearest {
    pub index: usize,
    pub dist2: f64,
    /// Tree nodes examined during the search.
    pub visited: usize,
}

impl KdTree {
    /// Builds the tree by recursive median splits on the wider axis.
    ///
    /// # Panics
    /// If there are more than `u32::MAX - 1` points.
    pub fn new(points: Vec<[f64; 2]>) -> Self {
        assert!(points.len() < NONE as usize, "too many points for kd-tree");
        let mut order: Vec<u32> = (0..points.len() as u32).collect();
        let mut nodes = Vec::with_capacity(points.len());
        let root = build(&points, &mut order, &mut nodes);
        KdTree {
            points,
            nodes,
            root,
        }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn points(&self) -> &[[f64; 2]] {
        &self.points
    }

    /// Euclidean nearest point; equidistant candidates resolve to the lowest
    /// index. `None` on an empty tree.
    pub fn nearest(&self, q: [f64; 2]) -> Option<Nearest> {
        if self.root == NONE {
            return None;
        }
        let mut best = Nearest {
            index: usize::MAX,
            dist2: f64::INFINITY,
            visited: 0,
        };
        self.search(self.root, q, &mut best);
        Some(best)
    }

    fn search(&self, id: u32, q: [f64; 2], best: &mut Nearest) {
        let node = self.nodes[id as usize];
        best.visited += 1;
        let p = self.points[node.point as usize];
        let d2 = (p[0] - q[0]).powi(2) + (p[1] - q[1]).powi(2);
        let idx = node.point as usize;
        if d2 < best.dist2 || (d2 == best.dist2 && idx < best.index) {
            best.dist2 = d2;
            best.index = idx;
        }
        let axis = node.axis as usize;
        let diff = q[axis] - p[axis];
        let (near, far) = if diff <= 0.0 {
            (node.left, node.right)
        } else {
            (node.right, node.left)
        };
        if near != NONE {
            self.search(near, q, best);
        }
        // Equality keeps searching so that index ties are resolved.
        if far != NONE && diff * diff <= best.dist2 {
            self.search(far, q, best);
        }
    }
}

fn build(points: &[[f64; 2]], order: &mut [u32], nodes: &mut Vec<Node>) -> u32 {
    if order.is_empty() {
        return NONE;
    }
    let axis = widest_axis(points, order);
    let mid = order.len() / 2;
    order.select_nth_unstable_by(mid, |&a, &b| {
        points[a as usize][axis]
            .total_cmp(&points[b as usize][axis])
            .then(a.cmp(&b))
    });
    let id = nodes.len() as u32;
    nodes.push(Node {
        point: order[mid],
        axis: axis as u8,
        left: NONE,
        right: NONE,
    });
    let (lo, rest) = order.split_at_mut(mid);
    let left = build(points, lo, nodes);
    let right = build(points, &mut rest[1..], nodes);
    nodes[id as usize].left = left;
    nodes[id as usize].right = right;
    id
}

fn widest_axis(points: &[[f64; 2]], order: &[u32]) -> usize {
    let mut lo = [f64::INFINITY; 2];
    let mut hi = [f64::NEG_INFINITY; 2];
    for &i in order {
        for a in 0..2 {
            lo[a] = lo[a].min(points[i as usize][a]);
            hi[a] = hi[a].max(points[i as usize][a]);
        }
    }
    if hi[1] - lo[1] > hi[0] - lo[0] {
        1
    } else {
        0
    }
}
