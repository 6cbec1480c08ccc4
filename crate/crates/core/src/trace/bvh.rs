//! Binary BVH over per-Gaussian bounding boxes, built by median split.

use super::response::{peak_with, whitening};
use super::{aabb_sigma, key_less, GaussianHit, Ray};
use crate::math::{Mat3, Vec3};
use crate::scene::SceneSnapshot;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Aabb {
    pub min: Vec3,
    pub max: Vec3,
}

impl Aabb {
    pub fn empty() -> Self {
        Aabb {
            min: Vec3::repeat(f64::INFINITY),
            max: Vec3::repeat(f64::NEG_INFINITY),
        }
    }

    pub fn union(&self, other: &Aabb) -> Aabb {
        Aabb {
            min: self.min.inf(&other.min),
            max: self.max.sup(&other.max),
        }
    }

    pub fn contains(&self, other: &Aabb) -> bool {
        (0..3).all(|k| self.min[k] <= other.min[k] && other.max[k] <= self.max[k])
    }

    pub fn disjoint(&self, other: &Aabb) -> bool {
        (0..3).any(|k| self.max[k] < other.min[k] || other.max[k] < self.min[k])
    }

    /// Parametric interval of the ray inside the box, clipped to the ray range.
    pub fn ray_interval(&self, ray: &Ray) -> Option<(f64, f64)> {
        let (mut t0, mut t1) = (ray.t_min, ray.t_max);
        for k in 0..3 {
            let (o, d) = (ray.origin[k], ray.direction[k]);
            if d == 0.0 {
                if o < self.min[k] || o > self.max[k] {
                    return None;
                }
                continue;
            }
            let inv = 1.0 / d;
            let (mut a, mut b) = ((self.min[k] - o) * inv, (self.max[k] - o) * inv);
            if a > b {
                std::mem::swap(&mut a, &mut b);
            }
            t0 = t0.max(a);
            t1 = t1.min(b);
            if t0 > t1 {
                return None;
            }
        }
        Some((t0, t1))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum BvhNode {
    Leaf { aabb: Aabb, start: usize, len: usize },
    Inner { aabb: Aabb, left: usize, right: usize },
}

impl BvhNode {
    pub fn aabb(&self) -> &Aabb {
        match self {
            BvhNode::Leaf { aabb, .. } | BvhNode::Inner { aabb, .. } => aabb,
        }
    }
}

#[derive(Debug, Clone)]
struct Prim {
    mean: Vec3,
    whiten: Mat3,
}

/// Acceleration structure for one snapshot. Also caches each Gaussian's
/// whitening transform so traversal does not rebuild it per hit.
#[derive(Debug, Clone)]
pub struct Bvh {
    nodes: Vec<BvhNode>,
    order: Vec<usize>,
    prims: Vec<Prim>,
}

const MAX_LEAF_LEN: usize = 1;

/// Box of the response-epsilon ellipsoid: `mean +- kappa * sqrt(diag(Sigma))`,
/// padded slightly so the boundary survives rounding.
pub(crate) fn gaussian_aabb(mean: &Vec3, cov: &Mat3) -> Aabb {
    let kappa = aabb_sigma();
    let half = Vec3::from_fn(|k, _| {
        let e = kappa * cov[(k, k)].sqrt();
        e * (1.0 + 1e-9) + 1e-12
    });
    Aabb {
        min: mean - half,
        max: mean + half,
    }
}

pub fn build_bvh(snapshot: &SceneSnapshot) -> Bvh {
    Bvh::build(snapshot)
}

impl Bvh {
    pub fn build(snapshot: &SceneSnapshot) -> Self {
        let gs = snapshot.gaussians();
        let prims: Vec<Prim> = gs
            .iter()
            .map(|g| Prim {
                mean: g.mean,
                whiten: whitening(g),
            })
            .collect();
        let boxes: Vec<Aabb> = gs.iter().map(|g| gaussian_aabb(&g.mean, &g.covariance())).collect();
        let mut order: Vec<usize> = (0..gs.len()).collect();
        let mut nodes = Vec::with_capacity(2 * gs.len());
        if !gs.is_empty() {
            build_node(&mut nodes, &mut order, 0, &boxes, &prims);
        }
        Bvh { nodes, order, prims }
    }

    pub fn nodes(&self) -> &[BvhNode] {
        &self.nodes
    }

    /// Gaussian indices referenced by a leaf.
    pub fn leaf_indices(&self, start: usize, len: usize) -> &[usize] {
        &self.order[start..start + len]
    }

    pub fn len(&self) -> usize {
        self.prims.len()
    }

    pub fn is_empty(&self) -> bool {
        self.prims.is_empty()
    }

    fn hit(&self, ray: &Ray, index: usize) -> Option<GaussianHit> {
        let p = &self.prims[index];
        peak_with(ray, &p.mean, &p.whiten).map(|(t_peak, response)| GaussianHit {
            gaussian_index: index,
            t_peak,
            response,
        })
    }

    /// Every hit along the ray, in marching order.
    pub fn intersect_all(&self, ray: &Ray) -> Vec<GaussianHit> {
        let mut hits = Vec::new();
        self.collect(ray, None, usize::MAX, &mut hits);
        hits
    }

    /// Fills `buf` with the (at most) `k` nearest hits whose marching key is
    /// strictly after `after`, sorted.
    pub(crate) fn collect(&self, ray: &Ray, after: Option<(f64, usize)>, k: usize, buf: &mut Vec<GaussianHit>) {
        buf.clear();
        if self.nodes.is_empty() || k == 0 {
            return;
        }
        let after_t = after.map_or(f64::NEG_INFINITY, |a| a.0);
        let mut stack: Vec<usize> = Vec::with_capacity(64);
        if self.nodes[0].aabb().ray_interval(ray).is_some() {
            stack.push(0);
        }
        while let Some(ni) = stack.pop() {
            let node = &self.nodes[ni];
            let Some((t0, t1)) = node.aabb().ray_interval(ray) else { continue };
            if t1 < after_t {
                continue;
            }
            if buf.len() == k && t0 > buf[k - 1].t_peak {
                continue;
            }
            match *node {
                BvhNode::Leaf { start, len, .. } => {
                    for &gi in &self.order[start..start + len] {
                        let Some(hit) = self.hit(ray, gi) else { continue };
                        if let Some(a) = after {
                            if !key_less(a, hit.key()) {
                                continue;
                            }
                        }
                        insert_bounded(buf, hit, k);
                    }
                }
                BvhNode::Inner { left, right, .. } => {
                    let tl = self.nodes[left].aabb().ray_interval(ray).map(|i| i.0);
                    let tr = self.nodes[right].aabb().ray_interval(ray).map(|i| i.0);
                    // Push the farther child first so the nearer one is visited first.
                    match (tl, tr) {
                        (Some(a), Some(b)) if a <= b => stack.extend([right, left]),
                        (Some(_), Some(_)) => stack.extend([left, right]),
                        (Some(_), None) => stack.push(left),
                        (None, Some(_)) => stack.push(right),
                        (None, None) => {}
                    }
                }
            }
        }
    }
}

fn insert_bounded(buf: &mut Vec<GaussianHit>, hit: GaussianHit, k: usize) {
    if buf.len() == k && !key_less(hit.key(), buf[k - 1].key()) {
        return;
    }
    let pos = buf.partition_point(|h| key_less(h.key(), hit.key()));
    if buf.len() == k {
        buf.pop();
    }
    buf.insert(pos, hit);
}

fn build_node(nodes: &mut Vec<BvhNode>, order: &mut [usize], offset: usize, boxes: &[Aabb], prims: &[Prim]) -> usize {
    let aabb = order.iter().fold(Aabb::empty(), |acc, &i| acc.union(&boxes[i]));
    let id = nodes.len();
    if order.len() <= MAX_LEAF_LEN {
        nodes.push(BvhNode::Leaf {
            aabb,
            start: offset,
            len: order.len(),
        });
        return id;
    }
    let (lo, hi) = order.iter().fold(
        (Vec3::repeat(f64::INFINITY), Vec3::repeat(f64::NEG_INFINITY)),
        |(lo, hi), &i| (lo.inf(&prims[i].mean), hi.sup(&prims[i].mean)),
    );
    let axis = (hi - lo).imax();
    let mid = order.len() / 2;
    order.select_nth_unstable_by(mid, |&a, &b| {
        prims[a].mean[axis].total_cmp(&prims[b].mean[axis]).then(a.cmp(&b))
    });
    // Placeholder until the children exist.
    nodes.push(BvhNode::Leaf { aabb, start: 0, len: 0 });
    let (left_slice, right_slice) = order.split_at_mut(mid);
    let left = build_node(nodes, left_slice, offset, boxes, prims);
    let right = build_node(nodes, right_slice, offset + mid, boxes, prims);
    nodes[id] = BvhNode::Inner { aabb, left, right };
    id
}
