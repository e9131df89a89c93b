//! Translation voting.
//!
//! Each occupied source pillar owns a small accumulator over discretised planar
//! translations. Its `M` nearest source pillars (itself included) pair up with
//! up to `N` target pillars found by a ball query; each pair adds the cosine
//! similarity of the two feature vectors to the bin of the displacement between
//! the pillar centers.

use alloc::format;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::math;
use crate::par;
use crate::pillar::PillarGrid;
use crate::spatial::{Neighbor, SpatialIndex};

/// How the translation range maps onto bins.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum BinLayout {
    /// `2 * max / cell + 1` bins per axis; the middle bin is zero translation.
    #[default]
    Centered,
    /// `2 * max / cell` bins per axis covering `[-max, max - cell]`; the
    /// `+max` edge is dropped.
    Even,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VoteConfig {
    /// Symmetric translation bound `(x_max, y_max)` in meters.
    pub max_translation: [f64; 2],
    /// Bin pitch; equal to the pillar size.
    pub cell: [f64; 2],
    /// Source neighbours per pillar (`M`), the pillar itself included.
    pub m_neighbors: usize,
    /// Target candidates per source neighbour (`N`).
    pub n_candidates: usize,
    pub ball_radius: f64,
    /// Soft-argmax temperature.
    pub temperature: f64,
    pub layout: BinLayout,
}

/// Radius reaching the corner bins of the translation square. Padded like the
/// bin range test, since center differences carry rounding error.
fn corner_radius(max: [f64; 2], cell: [f64; 2]) -> f64 {
    libm::hypot(max[0], max[1]) + 1e-6 * cell[0].min(cell[1])
}

impl VoteConfig {
    /// Defaults for a given pillar size: +-2 m, M = 8, N = 128, a ball that
    /// circumscribes the translation square, temperature 0.1.
    pub fn new(cell: [f64; 2]) -> Self {
        let max = [2.0, 2.0];
        Self {
            max_translation: max,
            cell,
            m_neighbors: 8,
            n_candidates: 128,
            ball_radius: corner_radius(max, cell),
            temperature: 0.1,
            layout: BinLayout::Centered,
        }
    }

    /// Sets the translation bound and resizes the ball to circumscribe it.
    pub fn with_max_translation(mut self, max: [f64; 2]) -> Self {
        self.max_translation = max;
        self.ball_radius = corner_radius(max, self.cell);
        self
    }

    /// Checks invariants and derives the bin geometry.
    pub fn geometry(&self) -> Result<VoteGeometry> {
        let bad = |msg: alloc::string::String| Err(Error::InvalidConfig(msg));
        if self.cell.iter().any(|c| !(*c > 0.0 && c.is_finite())) {
            return bad(format!("vote cell must be positive, got {:?}", self.cell));
        }
        let mut half = [0i32; 2];
        for a in 0..2 {
            let m = self.max_translation[a];
            if !(m >= 0.0 && m.is_finite()) {
                return bad(format!("max translation must be >= 0, got {m}"));
            }
            match math::near_integer(m / self.cell[a]) {
                Some(h) if h <= 4096 => half[a] = h as i32,
                _ => {
                    return bad(format!(
                        "max translation {m} is not a whole number of {} m bins",
                        self.cell[a]
                    ))
                }
            }
        }
        if self.layout == BinLayout::Even && half.contains(&0) {
            return bad("even bin layout needs a non-zero translation range".into());
        }
        if self.m_neighbors == 0 || self.n_candidates == 0 {
            return bad(format!(
                "M and N must be >= 1, got M = {}, N = {}",
                self.m_neighbors, self.n_candidates
            ));
        }
        if !(self.ball_radius > 0.0 && self.ball_radius.is_finite()) {
            return bad(format!("ball radius must be > 0, got {}", self.ball_radius));
        }
        if !(self.temperature > 0.0) {
            return bad(format!("temperature must be > 0, got {}", self.temperature));
        }
        let span = |h: i32| match self.layout {
            BinLayout::Centered => 2 * h as usize + 1,
            BinLayout::Even => 2 * h as usize,
        };
        Ok(VoteGeometry {
            cell: self.cell,
            pitch: [decimal_pitch(self.cell[0]), decimal_pitch(self.cell[1])],
            max: self.max_translation,
            half,
            cols: span(half[0]),
            rows: span(half[1]),
        })
    }
}

/// Writes `cell` as `num / den` with `den` a power of ten when possible, so that
/// bin offsets come out as the nearest double to the decimal value (3 bins of
/// 0.2 m give 0.6, not 0.6000000000000001).
fn decimal_pitch(cell: f64) -> (f64, f64) {
    let mut den = 1.0;
    for _ in 0..=6 {
        let num = math::round(cell * den);
        if num / den == cell {
            return (num, den);
        }
        den *= 10.0;
    }
    (cell, 1.0)
}

/// Validated bin geometry. Rows follow y, columns follow x; the bin at
/// `(half_y, half_x)` is zero translation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VoteGeometry {
    cell: [f64; 2],
    // `cell == num / den`, den a power of ten when one matches exactly.
    pitch: [(f64, f64); 2],
    max: [f64; 2],
    half: [i32; 2],
    cols: usize,
    rows: usize,
}

impl VoteGeometry {
    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn cell(&self) -> [f64; 2] {
        self.cell
    }

    /// `(row, col)` of the zero-translation bin.
    pub fn center(&self) -> (usize, usize) {
        (self.half[1] as usize, self.half[0] as usize)
    }

    /// Metric translation of a bin.
    pub fn displacement(&self, row: usize, col: usize) -> [f64; 2] {
        [
            self.offset(col as i32 - self.half[0], 0),
            self.offset(row as i32 - self.half[1], 1),
        ]
    }

    #[inline]
    fn offset(&self, bins: i32, a: usize) -> f64 {
        let (num, den) = self.pitch[a];
        bins as f64 * num / den + 0.0
    }

    #[inline]
    fn axis_bin(&self, d: f64, a: usize, n: usize) -> Option<usize> {
        // Center differences are multiples of the pitch up to rounding.
        if d.abs() > self.max[a] + 1e-6 * self.cell[a] {
            return None;
        }
        let idx = math::round(d / self.cell[a]) as i64 + self.half[a] as i64;
        (idx >= 0 && idx < n as i64).then_some(idx as usize)
    }

    /// Bin of a displacement, `None` outside the translation range.
    #[inline]
    pub fn bin(&self, d: [f64; 2]) -> Option<(usize, usize)> {
        let col = self.axis_bin(d[0], 0, self.cols)?;
        let row = self.axis_bin(d[1], 1, self.rows)?;
        Some((row, col))
    }
}

/// Maps a planar displacement to its `(row, col)` bin.
pub fn displacement_to_bin(d: [f64; 2], geometry: &VoteGeometry) -> Option<(usize, usize)> {
    geometry.bin(d)
}

/// One pillar's accumulator, `rows x cols` in row-major order.
#[derive(Debug, Clone, PartialEq)]
pub struct VotingSpace {
    geometry: VoteGeometry,
    scores: Vec<f64>,
}

impl VotingSpace {
    pub fn zeros(geometry: VoteGeometry) -> Self {
        Self {
            geometry,
            scores: alloc::vec![0.0; geometry.rows * geometry.cols],
        }
    }

    pub fn from_scores(geometry: VoteGeometry, scores: Vec<f64>) -> Result<Self> {
        if scores.len() != geometry.rows * geometry.cols {
            return Err(Error::length_mismatch(
                "voting space",
                geometry.rows * geometry.cols,
                scores.len(),
            ));
        }
        if scores.iter().any(|s| !s.is_finite()) {
            return Err(Error::InvalidData("voting space holds a non-finite score".into()));
        }
        Ok(Self { geometry, scores })
    }

    pub fn geometry(&self) -> &VoteGeometry {
        &self.geometry
    }

    pub fn rows(&self) -> usize {
        self.geometry.rows
    }

    pub fn cols(&self) -> usize {
        self.geometry.cols
    }

    pub fn scores(&self) -> &[f64] {
        &self.scores
    }

    pub(crate) fn scores_mut(&mut self) -> &mut [f64] {
        &mut self.scores
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.scores[row * self.geometry.cols + col]
    }

    pub fn add(&mut self, row: usize, col: usize, score: f64) {
        self.scores[row * self.geometry.cols + col] += score;
    }

    /// Bin holding the largest score. Ties go to the smallest translation,
    /// then to the first bin in row-major order.
    pub fn argmax_bin(&self) -> (usize, usize) {
        let cols = self.geometry.cols;
        let mut best = 0usize;
        let mut best_mag = f64::INFINITY;
        for (i, &s) in self.scores.iter().enumerate() {
            let d = self.geometry.displacement(i / cols, i % cols);
            let mag = d[0] * d[0] + d[1] * d[1];
            let top = self.scores[best];
            if s > top || (s == top && mag < best_mag) || i == 0 {
                best = i;
                best_mag = mag;
            }
        }
        (best / cols, best % cols)
    }
}

#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    let mut acc = 0.0;
    for (x, y) in a.iter().zip(b) {
        acc += x * y;
    }
    acc
}

#[inline]
fn norm(a: &[f64]) -> f64 {
    math::sqrt(dot(a, a))
}

const ZERO_NORM: f64 = 1e-12;

#[inline]
fn cosine_with_norms(a: &[f64], b: &[f64], na: f64, nb: f64) -> f64 {
    if na < ZERO_NORM || nb < ZERO_NORM {
        return 0.0;
    }
    (dot(a, b) / (na * nb)).clamp(-1.0, 1.0)
}

/// Cosine similarity in `[-1, 1]`; a near-zero vector abstains with 0.
pub fn cosine_similarity(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::length_mismatch("feature vector", a.len(), b.len()));
    }
    Ok(cosine_with_norms(a, b, norm(a), norm(b)))
}

fn check_inputs(src: &PillarGrid, tgt: &PillarGrid) -> Result<()> {
    if !src.is_empty() && !tgt.is_empty() && src.features().dim() != tgt.features().dim() {
        return Err(Error::Contract(format!(
            "source features have {} dims, target features {}",
            src.features().dim(),
            tgt.features().dim()
        )));
    }
    Ok(())
}

/// Voting space of source pillar `k`, straight from the spatial queries.
///
/// Votes are added neighbour-major (in `knn` order), then in ball-query order.
pub fn accumulate_votes(
    k: usize,
    src: &PillarGrid,
    tgt: &PillarGrid,
    src_index: &SpatialIndex,
    tgt_index: &SpatialIndex,
    cfg: &VoteConfig,
) -> Result<VotingSpace> {
    let geometry = cfg.geometry()?;
    if k >= src.len() {
        return Err(Error::Contract(format!(
            "pillar {k} is not occupied (grid has {} pillars)",
            src.len()
        )));
    }
    check_inputs(src, tgt)?;
    let mut space = VotingSpace::zeros(geometry);
    for m in src_index.knn(src.center(k), cfg.m_neighbors) {
        let cm = src.center(m.pillar);
        for n in tgt_index.ball_query(cm, cfg.ball_radius, cfg.n_candidates) {
            let ct = tgt.center(n.pillar);
            if let Some((row, col)) = geometry.bin([ct[0] - cm[0], ct[1] - cm[1]]) {
                let s = cosine_similarity(src.feature(m.pillar), tgt.feature(n.pillar))?;
                space.add(row, col, s);
            }
        }
    }
    Ok(space)
}

/// Cached votes for every source pillar of one scan pair.
///
/// Each source pillar's in-range `(bin, score)` pairs and each pillar's
/// neighbour list are computed once; a pillar's voting space is then the
/// sum of its neighbours' pairs, in the same order [`accumulate_votes`] uses,
/// so both give bit-identical spaces.
#[derive(Debug, Clone)]
pub struct VoteTable {
    geometry: VoteGeometry,
    knn_start: Vec<u32>,
    knn: Vec<u32>,
    vote_start: Vec<u32>,
    votes: Vec<(u32, f64)>,
}

fn to_csr<T>(lists: Vec<Vec<T>>) -> (Vec<u32>, Vec<T>) {
    let mut start = Vec::with_capacity(lists.len() + 1);
    start.push(0u32);
    let total = lists.iter().map(Vec::len).sum();
    let mut flat = Vec::with_capacity(total);
    for l in lists {
        flat.extend(l);
        start.push(flat.len() as u32);
    }
    (start, flat)
}

impl VoteTable {
    pub fn build(
        src: &PillarGrid,
        tgt: &PillarGrid,
        src_index: &SpatialIndex,
        tgt_index: &SpatialIndex,
        cfg: &VoteConfig,
    ) -> Result<Self> {
        let geometry = cfg.geometry()?;
        check_inputs(src, tgt)?;
        let src_norms: Vec<f64> = (0..src.len()).map(|k| norm(src.feature(k))).collect();
        let tgt_norms: Vec<f64> = (0..tgt.len()).map(|k| norm(tgt.feature(k))).collect();
        let cols = geometry.cols;

        let votes = par::map_indices_with(src.len(), Vec::<Neighbor>::new, |ball, m| {
            let cm = src.center(m);
            tgt_index.ball_query_into(cm, cfg.ball_radius, cfg.n_candidates, ball);
            ball.iter()
                .filter_map(|n| {
                    let ct = tgt.center(n.pillar);
                    let (row, col) = geometry.bin([ct[0] - cm[0], ct[1] - cm[1]])?;
                    let s = cosine_with_norms(
                        src.feature(m),
                        tgt.feature(n.pillar),
                        src_norms[m],
                        tgt_norms[n.pillar],
                    );
                    Some(((row * cols + col) as u32, s))
                })
                .collect::<Vec<_>>()
        });
        let knn = par::map_indices_with(src.len(), Vec::<Neighbor>::new, |buf, k| {
            src_index.knn_into(src.center(k), cfg.m_neighbors, buf);
            buf.iter().map(|n| n.pillar as u32).collect::<Vec<_>>()
        });
        let (vote_start, votes) = to_csr(votes);
        let (knn_start, knn) = to_csr(knn);
        Ok(Self {
            geometry,
            knn_start,
            knn,
            vote_start,
            votes,
        })
    }

    pub fn geometry(&self) -> &VoteGeometry {
        &self.geometry
    }

    /// Number of source pillars covered.
    pub fn len(&self) -> usize {
        self.knn_start.len() - 1
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Source neighbours of pillar `k`, nearest first.
    pub fn neighbors(&self, k: usize) -> &[u32] {
        &self.knn[self.knn_start[k] as usize..self.knn_start[k + 1] as usize]
    }

    fn pairs(&self, m: usize) -> &[(u32, f64)] {
        &self.votes[self.vote_start[m] as usize..self.vote_start[m + 1] as usize]
    }

    /// Number of score additions that make up pillar `k`'s space.
    pub fn vote_count(&self, k: usize) -> usize {
        self.neighbors(k).iter().map(|&m| self.pairs(m as usize).len()).sum()
    }

    /// Adds pillar `k`'s votes into a row-major score buffer.
    pub fn accumulate_into(&self, k: usize, scores: &mut [f64]) {
        for &m in self.neighbors(k) {
            for &(bin, s) in self.pairs(m as usize) {
                scores[bin as usize] += s;
            }
        }
    }

    pub fn voting_space(&self, k: usize) -> VotingSpace {
        let mut space = VotingSpace::zeros(self.geometry);
        self.accumulate_into(k, &mut space.scores);
        space
    }
}

/// Element-wise sum, in list order.
pub fn fuse_voting_spaces(spaces: &[VotingSpace]) -> Result<VotingSpace> {
    let (first, rest) = spaces
        .split_first()
        .ok_or_else(|| Error::Contract("no voting spaces to fuse".into()))?;
    let mut out = first.clone();
    for s in rest {
        if s.rows() != out.rows() || s.cols() != out.cols() {
            return Err(Error::Contract(format!(
                "cannot fuse a {}x{} space into {}x{}",
                s.rows(),
                s.cols(),
                out.rows(),
                out.cols()
            )));
        }
        for (o, v) in out.scores.iter_mut().zip(&s.scores) {
            *o += v;
        }
    }
    Ok(out)
}

/// Translation of the highest-scoring bin; an all-zero space gives `(0, 0)`.
pub fn argmax_translation(space: &VotingSpace) -> [f64; 2] {
    let (row, col) = space.argmax_bin();
    space.geometry.displacement(row, col)
}

/// Softmax-weighted mean translation, `w_b ~ exp(score_b / temperature)`.
///
/// On the centered layout a space with symmetric weights yields exactly
/// `(0, 0)`: offsets are summed as `o * (w(+o) - w(-o))` per axis.
pub fn soft_argmax_translation(space: &VotingSpace, temperature: f64) -> Result<[f64; 2]> {
    if !(temperature > 0.0) {
        return Err(Error::InvalidConfig(format!(
            "temperature must be > 0, got {temperature}"
        )));
    }
    let g = &space.geometry;
    let top = space.scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut col_w = alloc::vec![0.0; g.cols];
    let mut row_w = alloc::vec![0.0; g.rows];
    let mut total = 0.0;
    for r in 0..g.rows {
        for c in 0..g.cols {
            let w = math::exp((space.get(r, c) - top) / temperature);
            col_w[c] += w;
            row_w[r] += w;
            total += w;
        }
    }
    let axis = |weights: &[f64], half: i32| {
        let at = |i: i32| {
            usize::try_from(i)
                .ok()
                .and_then(|i| weights.get(i))
                .copied()
                .unwrap_or(0.0)
        };
        let mut acc = 0.0;
        for o in 1..=half {
            acc += o as f64 * (at(half + o) - at(half - o));
        }
        acc
    };
    Ok([
        axis(&col_w, g.half[0]) / total * g.cell[0] + 0.0,
        axis(&row_w, g.half[1]) / total * g.cell[1] + 0.0,
    ])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cloud::PointCloud;
    use crate::pillar::{pillarize, GridConfig};
    use alloc::vec;

    fn geometry() -> VoteGeometry {
        VoteConfig::new([0.2, 0.2]).geometry().unwrap()
    }

    #[test]
    fn default_geometry_is_21_square() {
        let g = geometry();
        assert_eq!((g.rows(), g.cols()), (21, 21));
        assert_eq!(g.center(), (10, 10));
        let mut even = VoteConfig::new([0.2, 0.2]);
        even.layout = BinLayout::Even;
        let g = even.geometry().unwrap();
        assert_eq!((g.rows(), g.cols()), (20, 20));
        assert_eq!(g.bin([2.0, 0.0]), None);
        assert_eq!(g.bin([-2.0, 0.0]), Some((10, 0)));
    }

    #[test]
    fn config_validation() {
        let mut c = VoteConfig::new([0.2, 0.2]);
        c.max_translation = [2.1, 2.0];
        assert!(c.geometry().is_err());
        let mut c = VoteConfig::new([0.2, 0.2]);
        c.m_neighbors = 0;
        assert!(c.geometry().is_err());
        let mut c = VoteConfig::new([0.2, 0.2]);
        c.temperature = 0.0;
        assert!(c.geometry().is_err());
        let r = VoteConfig::new([0.2, 0.2]).ball_radius;
        assert!(r > 2.0 * core::f64::consts::SQRT_2 && r < 2.0 * core::f64::consts::SQRT_2 + 1e-6);
    }

    #[test]
    fn cosine_cases() {
        let a = [1.0, 2.0, -3.0];
        assert_eq!(cosine_similarity(&a, &a).unwrap(), 1.0);
        assert_eq!(cosine_similarity(&a, &[-1.0, -2.0, 3.0]).unwrap(), -1.0);
        assert_eq!(cosine_similarity(&[0.0; 3], &a).unwrap(), 0.0);
        assert!(matches!(cosine_similarity(&a, &[1.0]), Err(Error::Contract(_))));
    }

    #[test]
    fn bins() {
        let g = geometry();
        assert_eq!(displacement_to_bin([0.0, 0.0], &g), Some((10, 10)));
        assert_eq!(displacement_to_bin([0.6, -0.4], &g), Some((8, 13)));
        assert_eq!(displacement_to_bin([2.2, 0.0], &g), None);
        assert_eq!(displacement_to_bin([2.0, -2.0], &g), Some((0, 20)));
        assert_eq!(g.displacement(13, 8), [-0.4, 0.6]);
        assert_eq!(g.displacement(0, 20), [2.0, -2.0]);
    }

    #[test]
    fn argmax_single_vote() {
        let g = geometry();
        let mut v = VotingSpace::zeros(g);
        assert_eq!(argmax_translation(&v), [0.0, 0.0]);
        // row +3, col -2 from center
        v.add(13, 8, 1.0);
        let t = argmax_translation(&v);
        assert!((t[0] + 0.4).abs() < 1e-12 && (t[1] - 0.6).abs() < 1e-12);
    }

    #[test]
    fn argmax_ties_prefer_small_translation() {
        let g = geometry();
        let mut v = VotingSpace::zeros(g);
        v.add(0, 0, 2.0);
        v.add(10, 12, 2.0);
        v.add(12, 10, 2.0);
        assert_eq!(v.argmax_bin(), (10, 12));
        let mut neg = VotingSpace::zeros(g);
        neg.scores.iter_mut().for_each(|s| *s = -1.0);
        assert_eq!(argmax_translation(&neg), [0.0, 0.0]);
    }

    #[test]
    fn soft_argmax_zero_and_limits() {
        let g = geometry();
        let v = VotingSpace::zeros(g);
        assert_eq!(soft_argmax_translation(&v, 0.1).unwrap(), [0.0, 0.0]);
        assert!(soft_argmax_translation(&v, 0.0).is_err());
        let mut w = VotingSpace::zeros(g);
        w.add(3, 17, 0.7);
        w.add(12, 1, 0.2);
        let t = soft_argmax_translation(&w, 1e15).unwrap();
        assert!(t[0].abs() < 1e-9 && t[1].abs() < 1e-9);
        assert_eq!(soft_argmax_translation(&w, f64::INFINITY).unwrap(), [0.0, 0.0]);
    }

    #[test]
    fn fuse_checks_dims() {
        let a = VotingSpace::zeros(geometry());
        let b = VotingSpace::zeros(VoteConfig::new([0.4, 0.4]).geometry().unwrap());
        assert!(fuse_voting_spaces(&[a.clone(), b]).is_err());
        assert!(fuse_voting_spaces(&[]).is_err());
        assert_eq!(fuse_voting_spaces(std::slice::from_ref(&a)).unwrap(), a);
        assert_eq!(fuse_voting_spaces(&[a.clone(), a.clone()]).unwrap(), a);
    }

    #[test]
    fn static_self_match_votes_once_at_center() {
        let cloud = PointCloud::new(vec![[0.1, 0.1, 0.5]]).unwrap();
        let grid = pillarize(&cloud, &GridConfig::default());
        let idx = SpatialIndex::build(&grid);
        let cfg = VoteConfig::new([0.2, 0.2]);
        let v = accumulate_votes(0, &grid, &grid, &idx, &idx, &cfg).unwrap();
        let (r, c) = v.geometry().center();
        assert_eq!(v.get(r, c), 1.0);
        assert_eq!(v.scores().iter().filter(|s| **s != 0.0).count(), 1);
    }

    #[test]
    fn empty_target_votes_nothing() {
        let src = pillarize(&PointCloud::new(vec![[0.1, 0.1, 0.5]]).unwrap(), &GridConfig::default());
        let tgt = pillarize(&PointCloud::default(), &GridConfig::default());
        let cfg = VoteConfig::new([0.2, 0.2]);
        let v = accumulate_votes(
            0,
            &src,
            &tgt,
            &SpatialIndex::build(&src),
            &SpatialIndex::build(&tgt),
            &cfg,
        )
        .unwrap();
        assert!(v.scores().iter().all(|s| *s == 0.0));
        assert!(accumulate_votes(5, &src, &tgt, &SpatialIndex::build(&src), &SpatialIndex::build(&tgt), &cfg).is_err());
    }
}
