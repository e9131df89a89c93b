//! The four training objectives, evaluated on a candidate flow: bidirectional
//! Chamfer, Chamfer over dynamic points, a static-point penalty and a cluster
//! rigidity penalty.

use alloc::vec::Vec;

use crate::assembly::{check_alignment, cluster_means, deviation, ClusterSet};
use crate::cloud::{apply_flow, FlowField, Point3, PointCloud};
use crate::error::{Error, Result};
use crate::math;
use crate::par;
use crate::pillar::PillarGrid;

const LEAF: usize = 8;

#[inline]
fn dist2(a: Point3, b: Point3) -> f64 {
    let dx = a[0] - b[0];
    let dy = a[1] - b[1];
    let dz = a[2] - b[2];
    dx * dx + dy * dy + dz * dz
}

/// Distance from `x` to the closest point of `ys`, by linear scan.
pub fn nearest_distance(x: Point3, ys: &[Point3]) -> Result<f64> {
    if ys.is_empty() {
        return Err(Error::Contract("nearest distance to an empty set".into()));
    }
    let best = ys.iter().map(|y| dist2(x, *y)).fold(f64::INFINITY, f64::min);
    Ok(math::sqrt(best))
}

/// Static 3D kd-tree for exact nearest-neighbour distances.
#[derive(Debug, Clone)]
pub struct PointTree {
    points: Vec<Point3>,
    // Split axis of the node whose median sits at this slot.
    axis: Vec<u8>,
}

impl PointTree {
    pub fn new(points: &[Point3]) -> Self {
        let mut pts = points.to_vec();
        let mut axis = alloc::vec![0u8; pts.len()];
        build(&mut pts, &mut axis, 0);
        Self { points: pts, axis }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Distance to the closest stored point; `None` when the tree is empty.
    pub fn nearest(&self, q: Point3) -> Option<f64> {
        if self.points.is_empty() {
            return None;
        }
        let mut best = f64::INFINITY;
        self.search(0, self.points.len(), q, &mut best);
        Some(math::sqrt(best))
    }

    fn search(&self, lo: usize, hi: usize, q: Point3, best: &mut f64) {
        if hi - lo <= LEAF {
            for p in &self.points[lo..hi] {
                let d = dist2(q, *p);
                if d < *best {
                    *best = d;
                }
            }
            return;
        }
        let mid = lo + (hi - lo) / 2;
        let a = self.axis[mid] as usize;
        let p = self.points[mid];
        let d = dist2(q, p);
        if d < *best {
            *best = d;
        }
        let diff = q[a] - p[a];
        let (near, far) = if diff < 0.0 {
            ((lo, mid), (mid + 1, hi))
        } else {
            ((mid + 1, hi), (lo, mid))
        };
        self.search(near.0, near.1, q, best);
        if diff * diff < *best {
            self.search(far.0, far.1, q, best);
        }
    }
}

fn build(pts: &mut [Point3], axis: &mut [u8], depth: usize) {
    if pts.len() <= LEAF {
        return;
    }
    let mut lo = pts[0];
    let mut hi = pts[0];
    for p in pts.iter() {
        for a in 0..3 {
            lo[a] = lo[a].min(p[a]);
            hi[a] = hi[a].max(p[a]);
        }
    }
    let mut a = depth % 3;
    for k in 0..3 {
        if hi[k] - lo[k] > hi[a] - lo[a] {
            a = k;
        }
    }
    let mid = pts.len() / 2;
    pts.select_nth_unstable_by(mid, |x, y| x[a].total_cmp(&y[a]));
    axis[mid] = a as u8;
    let (left, rest) = pts.split_at_mut(mid);
    let (la, ra) = axis.split_at_mut(mid);
    build(left, la, depth + 1);
    build(&mut rest[1..], &mut ra[1..], depth + 1);
}

fn mean_nearest(queries: &[Point3], tree: &PointTree) -> f64 {
    let d = par::map_indices(queries.len(), |i| tree.nearest(queries[i]).unwrap_or(0.0));
    d.iter().sum::<f64>() / queries.len() as f64
}

fn chamfer_points(a: &[Point3], b: &[Point3]) -> Result<f64> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::Contract("chamfer distance needs two non-empty clouds".into()));
    }
    let ta = PointTree::new(a);
    let tb = PointTree::new(b);
    Ok(mean_nearest(a, &tb) + mean_nearest(b, &ta))
}

/// Mean nearest distance from `a` into `b` plus the same from `b` into `a`.
pub fn chamfer(a: &PointCloud, b: &PointCloud) -> Result<f64> {
    chamfer_points(a.points(), b.points())
}

/// Chamfer distance restricted to dynamic points.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DynamicChamfer {
    /// 0 when `absent`.
    pub value: f64,
    /// No point of the source is marked dynamic.
    pub absent: bool,
}

/// Chamfer distance between the warped dynamic source points and the whole
/// target. Both directions use only the masked subset on the source side.
pub fn dynamic_chamfer(
    src: &PointCloud,
    tgt: &PointCloud,
    flow: &FlowField,
    dynamic: &[bool],
) -> Result<DynamicChamfer> {
    if dynamic.len() != src.len() {
        return Err(Error::length_mismatch("dynamic mask", src.len(), dynamic.len()));
    }
    let warped = apply_flow(src, flow)?;
    let masked: Vec<Point3> = warped
        .points()
        .iter()
        .zip(dynamic)
        .filter(|(_, d)| **d)
        .map(|(p, _)| *p)
        .collect();
    if masked.is_empty() {
        return Ok(DynamicChamfer {
            value: 0.0,
            absent: true,
        });
    }
    Ok(DynamicChamfer {
        value: chamfer_points(&masked, tgt.points())?,
        absent: false,
    })
}

/// Mean flow magnitude over points marked static; 0 when there are none.
pub fn static_penalty(flow: &FlowField, is_static: &[bool]) -> Result<f64> {
    if is_static.len() != flow.len() {
        return Err(Error::length_mismatch("static mask", flow.len(), is_static.len()));
    }
    let mut sum = 0.0;
    let mut n = 0usize;
    for (f, s) in flow.flows().iter().zip(is_static) {
        if *s {
            sum += math::norm3(*f);
            n += 1;
        }
    }
    Ok(if n == 0 { 0.0 } else { sum / n as f64 })
}

/// Mean distance of each point's flow from its cluster's mean flow. Points
/// outside the grid belong to no cluster and are skipped; 0 when no point is
/// clustered.
pub fn cluster_penalty(flow: &FlowField, clusters: &ClusterSet, grid: &PillarGrid) -> Result<f64> {
    check_alignment(flow, clusters, grid)?;
    let means = cluster_means(flow, clusters, grid);
    let mut sum = 0.0;
    let mut n = 0usize;
    for (i, f) in flow.flows().iter().enumerate() {
        if let Some(k) = grid.pillar_of_point(i) {
            sum += deviation(*f, means[clusters.label(k)]);
            n += 1;
        }
    }
    Ok(if n == 0 { 0.0 } else { sum / n as f64 })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ObjectiveReport {
    pub chamfer: f64,
    /// 0 when no point is dynamic.
    pub dynamic_chamfer: f64,
    pub static_penalty: f64,
    pub cluster_penalty: f64,
    pub total: f64,
}

/// All four objectives for `flow` on the pair `(src, tgt)`. Static points are
/// the complement of `dynamic`; clusters come from `grid`, the source grid.
pub fn total_objective(
    src: &PointCloud,
    tgt: &PointCloud,
    flow: &FlowField,
    dynamic: &[bool],
    clusters: &ClusterSet,
    grid: &PillarGrid,
) -> Result<ObjectiveReport> {
    let warped = apply_flow(src, flow)?;
    let chamfer = chamfer(&warped, tgt)?;
    let dynamic_chamfer = dynamic_chamfer(src, tgt, flow, dynamic)?.value;
    let is_static: Vec<bool> = dynamic.iter().map(|d| !d).collect();
    let static_penalty = static_penalty(flow, &is_static)?;
    let cluster_penalty = cluster_penalty(flow, clusters, grid)?;
    Ok(ObjectiveReport {
        chamfer,
        dynamic_chamfer,
        static_penalty,
        cluster_penalty,
        total: chamfer + dynamic_chamfer + static_penalty + cluster_penalty,
    })
}
