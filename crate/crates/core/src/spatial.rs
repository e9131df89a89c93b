//! Exact nearest-neighbour and radius queries over pillar centers.
//!
//! Centers are bucketed into a uniform grid of square buckets (CSR layout).
//! Radius queries scan the buckets overlapping the disc; k-nearest queries
//! expand square rings of buckets until the k-th candidate is provably closer
//! than anything outside the visited square. Results are ordered by squared
//! distance, ties by ascending cell index, so every query has one answer.

use alloc::vec::Vec;
use core::cmp::Ordering;

use crate::math;
use crate::pillar::{CellIndex, PillarGrid};

/// One query result.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Neighbor {
    /// Position in the indexed grid's occupied list.
    pub pillar: usize,
    pub cell: CellIndex,
    /// Squared Euclidean distance between centers.
    pub dist2: f64,
}

impl Neighbor {
    /// Total order used by every query: distance, then cell index.
    #[inline]
    pub fn cmp_key(&self, other: &Self) -> Ordering {
        self.dist2
            .partial_cmp(&other.dist2)
            .unwrap_or(Ordering::Equal)
            .then(self.cell.cmp(&other.cell))
    }
}

#[derive(Debug, Clone, Copy)]
struct Entry {
    pos: [f64; 2],
    cell: CellIndex,
    pillar: u32,
}

#[derive(Debug, Clone)]
pub struct SpatialIndex {
    origin: [f64; 2],
    bucket: f64,
    dims: [i64; 2],
    start: Vec<u32>,
    entries: Vec<Entry>,
}

impl SpatialIndex {
    /// Indexes the occupied pillar centers of `grid`.
    pub fn build(grid: &PillarGrid) -> Self {
        let cell = grid.config().cell_size();
        Self::from_centers(grid.centers(), grid.occupied(), 4.0 * cell[0].max(cell[1]))
    }

    /// Indexes arbitrary planar points; `cells[i]` is the tie-break key of
    /// `centers[i]`. `bucket_size` is a hint and grows if the bounding box
    /// would need far more buckets than points.
    pub fn from_centers(centers: &[[f64; 2]], cells: &[CellIndex], bucket_size: f64) -> Self {
        assert_eq!(centers.len(), cells.len());
        let n = centers.len();
        if n == 0 {
            return Self {
                origin: [0.0; 2],
                bucket: 1.0,
                dims: [0, 0],
                start: alloc::vec![0],
                entries: Vec::new(),
            };
        }
        let mut lo = [f64::INFINITY; 2];
        let mut hi = [f64::NEG_INFINITY; 2];
        for c in centers {
            for a in 0..2 {
                lo[a] = lo[a].min(c[a]);
                hi[a] = hi[a].max(c[a]);
            }
        }
        let mut bucket = if bucket_size > 0.0 && bucket_size.is_finite() {
            bucket_size
        } else {
            1.0
        };
        let budget = 4 * n as i64 + 64;
        let dims = loop {
            let d = [
                math::floor((hi[0] - lo[0]) / bucket) as i64 + 1,
                math::floor((hi[1] - lo[1]) / bucket) as i64 + 1,
            ];
            if d[0].saturating_mul(d[1]) <= budget {
                break d;
            }
            bucket *= 2.0;
        };

        let mut index = Self {
            origin: lo,
            bucket,
            dims,
            start: Vec::new(),
            entries: Vec::new(),
        };
        let nb = (dims[0] * dims[1]) as usize;
        let slots: Vec<usize> = centers
            .iter()
            .map(|c| {
                let b = index.bucket_of(*c);
                (b[1] * dims[0] + b[0]) as usize
            })
            .collect();
        let mut start = alloc::vec![0u32; nb + 1];
        for &s in &slots {
            start[s + 1] += 1;
        }
        for i in 0..nb {
            start[i + 1] += start[i];
        }
        let mut fill = start.clone();
        let mut entries = alloc::vec![
            Entry {
                pos: [0.0; 2],
                cell: 0,
                pillar: 0
            };
            n
        ];
        for (i, &s) in slots.iter().enumerate() {
            entries[fill[s] as usize] = Entry {
                pos: centers[i],
                cell: cells[i],
                pillar: i as u32,
            };
            fill[s] += 1;
        }
        index.start = start;
        index.entries = entries;
        index
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    fn bucket_coord(&self, v: f64, axis: usize) -> i64 {
        math::floor((v - self.origin[axis]) / self.bucket) as i64
    }

    fn bucket_of(&self, p: [f64; 2]) -> [i64; 2] {
        [
            self.bucket_coord(p[0], 0).clamp(0, self.dims[0] - 1),
            self.bucket_coord(p[1], 1).clamp(0, self.dims[1] - 1),
        ]
    }

    #[inline]
    fn bucket_entries(&self, bx: i64, by: i64) -> &[Entry] {
        let b = (by * self.dims[0] + bx) as usize;
        &self.entries[self.start[b] as usize..self.start[b + 1] as usize]
    }

    /// The `m` closest centers to `query`, ascending.
    pub fn knn(&self, query: [f64; 2], m: usize) -> Vec<Neighbor> {
        let mut out = Vec::with_capacity(m);
        self.knn_into(query, m, &mut out);
        out
    }

    pub fn knn_into(&self, query: [f64; 2], m: usize, out: &mut Vec<Neighbor>) {
        out.clear();
        if m == 0 || self.is_empty() {
            return;
        }
        let q = [self.bucket_coord(query[0], 0), self.bucket_coord(query[1], 1)];
        let [nx, ny] = self.dims;
        // Chebyshev distance from the query bucket to the bucket rectangle.
        let first_ring = [(q[0] - (nx - 1)).max(-q[0]), (q[1] - (ny - 1)).max(-q[1])]
            .into_iter()
            .max()
            .unwrap()
            .max(0);

        let mut ring = first_ring;
        loop {
            let (y0, y1) = ((q[1] - ring).max(0), (q[1] + ring).min(ny - 1));
            for by in y0..=y1 {
                let full_row = by == q[1] - ring || by == q[1] + ring;
                let (x0, x1) = ((q[0] - ring).max(0), (q[0] + ring).min(nx - 1));
                let mut visit = |bx: i64| {
                    for e in self.bucket_entries(bx, by) {
                        let cand = Neighbor {
                            pillar: e.pillar as usize,
                            cell: e.cell,
                            dist2: math::dist2_2d(e.pos, query),
                        };
                        push_bounded(out, cand, m);
                    }
                };
                if full_row {
                    for bx in x0..=x1 {
                        visit(bx);
                    }
                } else {
                    if q[0] - ring >= 0 {
                        visit(q[0] - ring);
                    }
                    if ring > 0 && q[0] + ring < nx {
                        visit(q[0] + ring);
                    }
                }
            }

            let covers_all =
                q[0] - ring <= 0 && q[0] + ring >= nx - 1 && q[1] - ring <= 0 && q[1] + ring >= ny - 1;
            if covers_all {
                break;
            }
            if out.len() == m {
                let s = self.bucket;
                let lo_x = self.origin[0] + (q[0] - ring) as f64 * s;
                let hi_x = self.origin[0] + (q[0] + ring + 1) as f64 * s;
                let lo_y = self.origin[1] + (q[1] - ring) as f64 * s;
                let hi_y = self.origin[1] + (q[1] + ring + 1) as f64 * s;
                let margin = (query[0] - lo_x)
                    .min(hi_x - query[0])
                    .min(query[1] - lo_y)
                    .min(hi_y - query[1]);
                if math::sqrt(out[m - 1].dist2) + 1e-9 * s < margin {
                    break;
                }
            }
            ring += 1;
        }
    }

    /// Centers within `radius` of `query` (`dist2 <= radius^2`); when more
    /// than `n` qualify, the `n` nearest. Ascending order.
    pub fn ball_query(&self, query: [f64; 2], radius: f64, n: usize) -> Vec<Neighbor> {
        let mut out = Vec::new();
        self.ball_query_into(query, radius, n, &mut out);
        out
    }

    pub fn ball_query_into(&self, query: [f64; 2], radius: f64, n: usize, out: &mut Vec<Neighbor>) {
        out.clear();
        if n == 0 || self.is_empty() || !(radius >= 0.0) {
            return;
        }
        let r2 = radius * radius;
        let [nx, ny] = self.dims;
        // One extra bucket on each side absorbs rounding in the bucket mapping.
        let x0 = (self.bucket_coord(query[0] - radius, 0) - 1).max(0);
        let x1 = (self.bucket_coord(query[0] + radius, 0) + 1).min(nx - 1);
        let y0 = (self.bucket_coord(query[1] - radius, 1) - 1).max(0);
        let y1 = (self.bucket_coord(query[1] + radius, 1) + 1).min(ny - 1);
        for by in y0..=y1 {
            for bx in x0..=x1 {
                for e in self.bucket_entries(bx, by) {
                    let dist2 = math::dist2_2d(e.pos, query);
                    if dist2 <= r2 {
                        out.push(Neighbor {
                            pillar: e.pillar as usize,
                            cell: e.cell,
                            dist2,
                        });
                    }
                }
            }
        }
        if out.len() > n {
            out.select_nth_unstable_by(n - 1, Neighbor::cmp_key);
            out.truncate(n);
        }
        out.sort_unstable_by(Neighbor::cmp_key);
    }
}

/// Inserts into an ascending list capped at `m` entries.
#[inline]
fn push_bounded(out: &mut Vec<Neighbor>, cand: Neighbor, m: usize) {
    if out.len() == m {
        if cand.cmp_key(&out[m - 1]) != Ordering::Less {
            return;
        }
        out.pop();
    }
    let pos = out.partition_point(|e| e.cmp_key(&cand) == Ordering::Less);
    out.insert(pos, cand);
}
