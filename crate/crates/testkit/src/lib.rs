//! Slow, obviously-correct reference implementations used as test oracles,
//! plus small random scene builders. Nothing here touches the spatial index
//! or the cached vote tables of the core crate.

use std::collections::{BTreeMap, HashMap, VecDeque};

use pillarvote_core::{CellIndex, MoverSpec, PillarGrid, Point3, SceneSpec, BackgroundSpec};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// `(pillar, cell, dist2)` of every center, sorted by distance then cell.
pub fn sorted_by_distance(centers: &[[f64; 2]], cells: &[CellIndex], q: [f64; 2]) -> Vec<(usize, CellIndex, f64)> {
    let mut all: Vec<(usize, CellIndex, f64)> = centers
        .iter()
        .enumerate()
        .map(|(i, c)| {
            let dx = c[0] - q[0];
            let dy = c[1] - q[1];
            (i, cells[i], dx * dx + dy * dy)
        })
        .collect();
    all.sort_by(|a, b| a.2.total_cmp(&b.2).then(a.1.cmp(&b.1)));
    all
}

pub fn knn(centers: &[[f64; 2]], cells: &[CellIndex], q: [f64; 2], m: usize) -> Vec<(usize, CellIndex, f64)> {
    let mut v = sorted_by_distance(centers, cells, q);
    v.truncate(m);
    v
}

pub fn ball(
    centers: &[[f64; 2]],
    cells: &[CellIndex],
    q: [f64; 2],
    radius: f64,
    n: usize,
) -> Vec<(usize, CellIndex, f64)> {
    let r2 = radius * radius;
    let mut v: Vec<_> = sorted_by_distance(centers, cells, q)
        .into_iter()
        .filter(|e| e.2 <= r2)
        .collect();
    v.truncate(n);
    v
}

pub fn cosine(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    let mut ab = 0.0;
    let mut aa = 0.0;
    let mut bb = 0.0;
    for i in 0..a.len() {
        ab += a[i] * b[i];
        aa += a[i] * a[i];
        bb += b[i] * b[i];
    }
    let (na, nb) = (aa.sqrt(), bb.sqrt());
    if na < 1e-12 || nb < 1e-12 {
        return 0.0;
    }
    (ab / (na * nb)).clamp(-1.0, 1.0)
}

/// Parameters of the reference vote loop.
#[derive(Debug, Clone, Copy)]
pub struct VoteParams {
    pub cell: [f64; 2],
    /// Half-width of the translation range in bins, per axis.
    pub half_bins: [i64; 2],
    pub m: usize,
    pub n: usize,
    pub radius: f64,
}

/// Row-major `(2 hy + 1) x (2 hx + 1)` scores of source pillar `k`,
/// accumulated over neighbours in distance order and then candidates in
/// distance order.
pub fn votes(k: usize, src: &PillarGrid, tgt: &PillarGrid, p: &VoteParams) -> Vec<f64> {
    let cols = (2 * p.half_bins[0] + 1) as usize;
    let rows = (2 * p.half_bins[1] + 1) as usize;
    let mut out = vec![0.0; rows * cols];
    let src_centers = src.centers();
    let tgt_centers = tgt.centers();
    for (m, _, _) in knn(src_centers, src.occupied(), src.center(k), p.m) {
        let cm = src.center(m);
        for (n, _, _) in ball(tgt_centers, tgt.occupied(), cm, p.radius, p.n) {
            let ct = tgt.center(n);
            let d = [ct[0] - cm[0], ct[1] - cm[1]];
            let mut idx = [0i64; 2];
            let mut inside = true;
            for a in 0..2 {
                let limit = p.half_bins[a] as f64 * p.cell[a];
                if d[a].abs() > limit + 1e-6 * p.cell[a] {
                    inside = false;
                }
                idx[a] = (d[a] / p.cell[a]).round() as i64 + p.half_bins[a];
            }
            if !inside {
                continue;
            }
            out[idx[1] as usize * cols + idx[0] as usize] += cosine(src.feature(m), tgt.feature(n));
        }
    }
    out
}

/// Cluster label per occupied pillar by breadth-first flood fill over the
/// 8-neighbourhood. Labels are numbered in order of first discovery, scanning
/// pillars by ascending cell.
pub fn flood_fill(grid: &PillarGrid) -> Vec<usize> {
    let cfg = grid.config();
    let at: HashMap<(i64, i64), usize> = (0..grid.len())
        .map(|k| {
            let (x, y) = cfg.coords(grid.cell(k));
            ((x as i64, y as i64), k)
        })
        .collect();
    let mut label = vec![usize::MAX; grid.len()];
    let mut next = 0;
    for start in 0..grid.len() {
        if label[start] != usize::MAX {
            continue;
        }
        label[start] = next;
        let mut queue = VecDeque::from([start]);
        while let Some(k) = queue.pop_front() {
            let (x, y) = cfg.coords(grid.cell(k));
            for dx in -1..=1 {
                for dy in -1..=1 {
                    if let Some(&j) = at.get(&(x as i64 + dx, y as i64 + dy)) {
                        if label[j] == usize::MAX {
                            label[j] = next;
                            queue.push_back(j);
                        }
                    }
                }
            }
        }
        next += 1;
    }
    label
}

fn dist(a: Point3, b: Point3) -> f64 {
    ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2) + (a[2] - b[2]).powi(2)).sqrt()
}

pub fn nearest(x: Point3, ys: &[Point3]) -> f64 {
    ys.iter().map(|y| dist(x, *y)).fold(f64::INFINITY, f64::min)
}

/// Double-loop bidirectional Chamfer distance.
pub fn chamfer(a: &[Point3], b: &[Point3]) -> f64 {
    let ab: f64 = a.iter().map(|p| nearest(*p, b)).sum::<f64>() / a.len() as f64;
    let ba: f64 = b.iter().map(|p| nearest(*p, a)).sum::<f64>() / b.len() as f64;
    ab + ba
}

/// Mean of `values` where `keep` holds; `None` when nothing is kept.
pub fn masked_mean(values: &[f64], keep: &[bool]) -> Option<f64> {
    let picked: Vec<f64> = values.iter().zip(keep).filter(|(_, k)| **k).map(|(v, _)| *v).collect();
    (!picked.is_empty()).then(|| picked.iter().sum::<f64>() / picked.len() as f64)
}

/// The eight descriptor statistics recomputed the textbook way.
pub fn feature(points: &[Point3], center: [f64; 2]) -> [f64; 8] {
    let n = points.len() as f64;
    let zs: Vec<f64> = points.iter().map(|p| p[2]).collect();
    let mean = zs.iter().sum::<f64>() / n;
    let var = zs.iter().map(|z| (z - mean).powi(2)).sum::<f64>() / n;
    let offs: Vec<[f64; 2]> = points.iter().map(|p| [p[0] - center[0], p[1] - center[1]]).collect();
    [
        (1.0 + n).ln(),
        mean,
        var.sqrt(),
        zs.iter().cloned().fold(f64::INFINITY, f64::min),
        zs.iter().cloned().fold(f64::NEG_INFINITY, f64::max),
        offs.iter().map(|o| o[0].hypot(o[1])).sum::<f64>() / n,
        offs.iter().map(|o| o[0]).sum::<f64>() / n,
        offs.iter().map(|o| o[1]).sum::<f64>() / n,
    ]
}

/// Point indices keyed by `(ix, iy)`.
pub type Bins = BTreeMap<(u32, u32), Vec<usize>>;

/// Groups point indices by their floor-binned cell, straight from the
/// coordinates. Points outside `[lo, lo + count * cell)` are returned apart.
pub fn rebin(
    points: &[Point3],
    cell: [f64; 2],
    lo: [f64; 2],
    count: [u32; 2],
) -> (Bins, Vec<usize>) {
    let mut cells: BTreeMap<(u32, u32), Vec<usize>> = BTreeMap::new();
    let mut outside = Vec::new();
    for (i, p) in points.iter().enumerate() {
        let ix = ((p[0] - lo[0]) / cell[0]).floor();
        let iy = ((p[1] - lo[1]) / cell[1]).floor();
        if ix < 0.0 || iy < 0.0 || ix >= count[0] as f64 || iy >= count[1] as f64 {
            outside.push(i);
        } else {
            cells.entry((ix as u32, iy as u32)).or_default().push(i);
        }
    }
    (cells, outside)
}

/// `n` points uniform in `[-half, half)^2 x [0, height)`.
pub fn random_points(rng: &mut ChaCha8Rng, n: usize, half: f64, height: f64) -> Vec<Point3> {
    (0..n)
        .map(|_| {
            [
                rng.random_range(-half..half),
                rng.random_range(-half..half),
                rng.random_range(0.0..height),
            ]
        })
        .collect()
}

/// Clustered points: a few random blobs, so pillars have several members and
/// neighbourhoods are dense enough to exercise the caps.
pub fn blob_points(rng: &mut ChaCha8Rng, n: usize, half: f64) -> Vec<Point3> {
    let blobs: Vec<[f64; 3]> = (0..rng.random_range(1..6))
        .map(|_| {
            [
                rng.random_range(-half..half),
                rng.random_range(-half..half),
                rng.random_range(0.3..2.0),
            ]
        })
        .collect();
    (0..n)
        .map(|_| {
            let b = blobs[rng.random_range(0..blobs.len())];
            [
                (b[0] + rng.random_range(-b[2]..b[2])).clamp(-half, half - 1e-9),
                (b[1] + rng.random_range(-b[2]..b[2])).clamp(-half, half - 1e-9),
                rng.random_range(0.0..2.0),
            ]
        })
        .collect()
}

/// One car-sized surface mover over slab background, kept `clearance` meters
/// from the mover at both poses.
pub fn single_mover_scene(seed: u64, translation: [f64; 2], noise: f64, clearance: f64) -> SceneSpec {
    let mut r = rng(seed ^ 0xa11ce);
    SceneSpec {
        extent: 51.2,
        movers: vec![MoverSpec {
            dims: [4.5, 1.9, 1.6],
            density: 25.0,
            surface: true,
            center: [r.random_range(-30.0..30.0), r.random_range(-30.0..30.0)],
            translation,
            class_id: 1,
        }],
        background: BackgroundSpec {
            count: 20_000,
            seed: seed.wrapping_add(100),
            structures: 40,
            clearance,
        },
        noise_sigma: noise,
        rng_seed: seed,
        ..SceneSpec::default()
    }
}
