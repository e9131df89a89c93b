//! Bird's-eye-view pillarization: sparse binning of a scan into full-height
//! columns, plus a hand-crafted descriptor per occupied pillar.

use alloc::format;
use alloc::vec::Vec;

use crate::cloud::{Point3, PointCloud};
use crate::error::{Error, Result};
use crate::math;
use crate::par;

/// Row-major cell key: `iy * width + ix`.
pub type CellIndex = u64;

/// Length of the hand-crafted pillar descriptor.
pub const HANDCRAFTED_FEATURE_DIM: usize = 8;

/// `[ln(1 + n), mean z, std z, min z, max z, mean |offset|, mean offset x, mean offset y]`
pub type FeatureVector = [f64; HANDCRAFTED_FEATURE_DIM];

const NO_PILLAR: u32 = u32::MAX;

/// Pillar size and cropping window of the pseudo image.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridConfig {
    cell: [f64; 2],
    extent: [f64; 4],
    width: u32,
    height: u32,
    // Lower extent in cell units when it lies on the cell lattice; centers are
    // then computed from integers so they sit symmetrically around the origin.
    lattice_origin: [Option<f64>; 2],
}

impl Default for GridConfig {
    /// 0.2 m pillars over a 102.4 m square: 512 x 512 cells.
    fn default() -> Self {
        Self::square(0.2, 51.2).expect("default grid is valid")
    }
}

impl GridConfig {
    /// `cell = (dx, dy)`, `extent = (x_lo, x_hi, y_lo, y_hi)`. Spans must be a
    /// whole number of cells.
    pub fn new(cell: [f64; 2], extent: [f64; 4]) -> Result<Self> {
        let [x_lo, x_hi, y_lo, y_hi] = extent;
        if cell.iter().any(|c| !(*c > 0.0 && c.is_finite())) {
            return Err(Error::InvalidConfig(format!("cell size must be positive, got {cell:?}")));
        }
        if extent.iter().any(|e| !e.is_finite()) || !(x_hi > x_lo) || !(y_hi > y_lo) {
            return Err(Error::InvalidConfig(format!("empty or non-finite extent {extent:?}")));
        }
        let dims = [(x_hi - x_lo) / cell[0], (y_hi - y_lo) / cell[1]];
        let mut wh = [0u32; 2];
        for (axis, d) in dims.iter().enumerate() {
            match math::near_integer(*d) {
                Some(n) if n >= 1 && n <= u32::MAX as i64 => wh[axis] = n as u32,
                _ => {
                    return Err(Error::InvalidConfig(format!(
                        "extent span {} is not a whole number of {} m cells",
                        if axis == 0 { x_hi - x_lo } else { y_hi - y_lo },
                        cell[axis]
                    )))
                }
            }
        }
        if (wh[0] as u64) * (wh[1] as u64) > u32::MAX as u64 {
            return Err(Error::InvalidConfig(format!("grid {}x{} too large", wh[0], wh[1])));
        }
        let lattice = |lo: f64, d: f64| math::near_integer(lo / d).map(|n| n as f64);
        Ok(Self {
            cell,
            extent,
            width: wh[0],
            height: wh[1],
            lattice_origin: [lattice(x_lo, cell[0]), lattice(y_lo, cell[1])],
        })
    }

    /// Square cells over `[-half_extent, half_extent)^2`.
    pub fn square(cell: f64, half_extent: f64) -> Result<Self> {
        Self::new([cell, cell], [-half_extent, half_extent, -half_extent, half_extent])
    }

    pub fn cell_size(&self) -> [f64; 2] {
        self.cell
    }

    pub fn extent(&self) -> [f64; 4] {
        self.extent
    }

    /// Cells along x (W).
    pub fn width(&self) -> u32 {
        self.width
    }

    /// Cells along y (H).
    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn cell_count(&self) -> u64 {
        self.width as u64 * self.height as u64
    }

    /// Half-open binning; `None` outside `[x_lo, x_hi) x [y_lo, y_hi)`.
    pub fn cell_of(&self, x: f64, y: f64) -> Option<(u32, u32)> {
        let [x_lo, x_hi, y_lo, y_hi] = self.extent;
        if !(x >= x_lo && x < x_hi && y >= y_lo && y < y_hi) {
            return None;
        }
        Some((
            self.bin_axis(0, x, x_lo, self.width),
            self.bin_axis(1, y, y_lo, self.height),
        ))
    }

    fn bin_axis(&self, axis: usize, v: f64, lo: f64, n: u32) -> u32 {
        let u = match self.lattice_origin[axis] {
            Some(o) => v / self.cell[axis] - o,
            None => (v - lo) / self.cell[axis],
        };
        // In-range coordinates within an ulp of an edge may round outside.
        (math::floor(u).max(0.0) as u32).min(n - 1)
    }

    fn center_axis(&self, axis: usize, i: u32) -> f64 {
        match self.lattice_origin[axis] {
            Some(o) => (o + i as f64 + 0.5) * self.cell[axis],
            None => self.extent[2 * axis] + (i as f64 + 0.5) * self.cell[axis],
        }
    }

    pub fn key(&self, ix: u32, iy: u32) -> CellIndex {
        iy as u64 * self.width as u64 + ix as u64
    }

    pub fn coords(&self, key: CellIndex) -> (u32, u32) {
        ((key % self.width as u64) as u32, (key / self.width as u64) as u32)
    }

    pub fn center(&self, ix: u32, iy: u32) -> [f64; 2] {
        [self.center_axis(0, ix), self.center_axis(1, iy)]
    }
}

/// Per-pillar feature rows of a fixed dimension.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureTable {
    dim: usize,
    data: Vec<f64>,
}

impl FeatureTable {
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.data.len().checked_div(self.dim).unwrap_or(0)
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn row(&self, k: usize) -> &[f64] {
        &self.data[k * self.dim..(k + 1) * self.dim]
    }
}

/// Externally computed pillar features keyed by cell index.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureOverrides {
    pub dim: usize,
    pub rows: Vec<(CellIndex, Vec<f64>)>,
}

/// Sparse pillar grid of one scan.
#[derive(Debug, Clone, PartialEq)]
pub struct PillarGrid {
    config: GridConfig,
    occupied: Vec<CellIndex>,
    member_start: Vec<u32>,
    members: Vec<u32>,
    centers: Vec<[f64; 2]>,
    features: FeatureTable,
    point_pillar: Vec<u32>,
    offsets: Vec<[f64; 2]>,
    out_of_range: Vec<u32>,
}

impl PillarGrid {
    pub fn config(&self) -> &GridConfig {
        &self.config
    }

    /// Number of occupied pillars.
    pub fn len(&self) -> usize {
        self.occupied.len()
    }

    pub fn is_empty(&self) -> bool {
        self.occupied.is_empty()
    }

    /// Occupied cell keys, strictly increasing.
    pub fn occupied(&self) -> &[CellIndex] {
        &self.occupied
    }

    pub fn cell(&self, k: usize) -> CellIndex {
        self.occupied[k]
    }

    pub fn center(&self, k: usize) -> [f64; 2] {
        self.centers[k]
    }

    pub fn centers(&self) -> &[[f64; 2]] {
        &self.centers
    }

    /// Source point indices of pillar `k`, ascending.
    pub fn members(&self, k: usize) -> &[u32] {
        &self.members[self.member_start[k] as usize..self.member_start[k + 1] as usize]
    }

    pub fn features(&self) -> &FeatureTable {
        &self.features
    }

    pub fn feature(&self, k: usize) -> &[f64] {
        self.features.row(k)
    }

    /// Number of points the grid was built from, including out-of-range ones.
    pub fn point_count(&self) -> usize {
        self.point_pillar.len()
    }

    pub fn pillar_of_point(&self, i: usize) -> Option<usize> {
        match self.point_pillar[i] {
            NO_PILLAR => None,
            k => Some(k as usize),
        }
    }

    /// Offset of point `i` from its pillar center, in `[-d/2, d/2)` per axis.
    pub fn offset(&self, i: usize) -> Option<[f64; 2]> {
        self.pillar_of_point(i).map(|_| self.offsets[i])
    }

    /// Indices of points that fell outside the extent.
    pub fn out_of_range(&self) -> &[u32] {
        &self.out_of_range
    }

    /// Position of `cell` in the occupied list.
    pub fn find(&self, cell: CellIndex) -> Option<usize> {
        self.occupied.binary_search(&cell).ok()
    }

    /// Replaces pillar features with external rows.
    ///
    /// Cells without a row keep the hand-crafted descriptor, which is only
    /// possible when the external dimension is also 8. Rows for cells that
    /// are not occupied are ignored.
    pub fn with_feature_overrides(mut self, overrides: &FeatureOverrides) -> Result<Self> {
        let dim = overrides.dim;
        if dim == 0 {
            return Err(Error::InvalidData("external features have dimension 0".into()));
        }
        let mut assigned: Vec<Option<&[f64]>> = alloc::vec![None; self.len()];
        for (cell, row) in &overrides.rows {
            if row.len() != dim {
                return Err(Error::InvalidData(format!(
                    "feature row for cell {cell} has {} values, expected {dim}",
                    row.len()
                )));
            }
            if let Some(i) = row.iter().position(|v| !v.is_finite()) {
                return Err(Error::InvalidData(format!("feature f{i} of cell {cell} is not finite")));
            }
            if let Some(k) = self.find(*cell) {
                if assigned[k].replace(row).is_some() {
                    return Err(Error::InvalidData(format!("duplicate feature row for cell {cell}")));
                }
            }
        }
        let missing = assigned.iter().filter(|a| a.is_none()).count();
        if missing > 0 && dim != HANDCRAFTED_FEATURE_DIM {
            return Err(Error::InvalidData(format!(
                "{missing} occupied pillars have no external feature row and cannot fall back \
                 to the {HANDCRAFTED_FEATURE_DIM}-dim descriptor when K = {dim}"
            )));
        }
        let mut data = Vec::with_capacity(self.len() * dim);
        for (k, row) in assigned.iter().enumerate() {
            match row {
                Some(r) => data.extend_from_slice(r),
                None => data.extend_from_slice(self.features.row(k)),
            }
        }
        self.features = FeatureTable { dim, data };
        Ok(self)
    }
}

fn feature_of<'a, I>(points: I, center: [f64; 2]) -> FeatureVector
where
    I: Iterator<Item = &'a Point3> + Clone,
{
    let mut n = 0usize;
    let (mut sum_z, mut min_z, mut max_z) = (0.0, f64::INFINITY, f64::NEG_INFINITY);
    let (mut sum_r, mut sum_ox, mut sum_oy) = (0.0, 0.0, 0.0);
    for p in points.clone() {
        n += 1;
        sum_z += p[2];
        min_z = min_z.min(p[2]);
        max_z = max_z.max(p[2]);
        let ox = p[0] - center[0];
        let oy = p[1] - center[1];
        sum_r += math::sqrt(ox * ox + oy * oy);
        sum_ox += ox;
        sum_oy += oy;
    }
    let nf = n as f64;
    let mean_z = sum_z / nf;
    let var_z = points.map(|p| (p[2] - mean_z) * (p[2] - mean_z)).sum::<f64>() / nf;
    [
        math::ln_1p(nf),
        mean_z,
        math::sqrt(var_z),
        min_z,
        max_z,
        sum_r / nf,
        sum_ox / nf,
        sum_oy / nf,
    ]
}

/// Descriptor of one pillar from its member points and cell center.
pub fn compute_feature(members: &[Point3], center: [f64; 2]) -> Result<FeatureVector> {
    if members.is_empty() {
        return Err(Error::Contract("pillar feature of an empty member list".into()));
    }
    Ok(feature_of(members.iter(), center))
}

/// Bins `cloud` into the pillars of `config`. Points outside the extent are
/// listed in [`PillarGrid::out_of_range`].
pub fn pillarize(cloud: &PointCloud, config: &GridConfig) -> PillarGrid {
    let points = cloud.points();
    let mut keyed: Vec<(CellIndex, u32)> = Vec::with_capacity(points.len());
    let mut out_of_range = Vec::new();
    for (i, p) in points.iter().enumerate() {
        match config.cell_of(p[0], p[1]) {
            Some((ix, iy)) => keyed.push((config.key(ix, iy), i as u32)),
            None => out_of_range.push(i as u32),
        }
    }
    keyed.sort_unstable();

    let mut occupied = Vec::new();
    let mut member_start = Vec::new();
    let mut members = Vec::with_capacity(keyed.len());
    for (j, &(key, idx)) in keyed.iter().enumerate() {
        if j == 0 || keyed[j - 1].0 != key {
            occupied.push(key);
            member_start.push(j as u32);
        }
        members.push(idx);
    }
    member_start.push(members.len() as u32);

    let centers: Vec<[f64; 2]> = occupied
        .iter()
        .map(|&key| {
            let (ix, iy) = config.coords(key);
            config.center(ix, iy)
        })
        .collect();

    let mut point_pillar = alloc::vec![NO_PILLAR; points.len()];
    let mut offsets = alloc::vec![[0.0; 2]; points.len()];
    let half = [0.5 * config.cell[0], 0.5 * config.cell[1]];
    for k in 0..occupied.len() {
        let c = centers[k];
        for &i in &members[member_start[k] as usize..member_start[k + 1] as usize] {
            let p = points[i as usize];
            point_pillar[i as usize] = k as u32;
            let mut off = [p[0] - c[0], p[1] - c[1]];
            for a in 0..2 {
                off[a] = off[a].clamp(-half[a], math::next_below(half[a]));
            }
            offsets[i as usize] = off;
        }
    }

    let rows = par::map_indices(occupied.len(), |k| {
        let span = &members[member_start[k] as usize..member_start[k + 1] as usize];
        feature_of(span.iter().map(|&i| &points[i as usize]), centers[k])
    });
    let features = FeatureTable {
        dim: HANDCRAFTED_FEATURE_DIM,
        data: rows.into_iter().flatten().collect(),
    };

    PillarGrid {
        config: *config,
        occupied,
        member_start,
        members,
        centers,
        features,
        point_pillar,
        offsets,
        out_of_range,
    }
}

/// Fraction of empty cells, `1 - occupied / (H * W)`.
pub fn sparsity(grid: &PillarGrid) -> f64 {
    1.0 - grid.len() as f64 / grid.config.cell_count() as f64
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    fn cloud(points: Vec<Point3>) -> PointCloud {
        PointCloud::new(points).unwrap()
    }

    #[test]
    fn default_grid_is_512_square() {
        let g = GridConfig::default();
        assert_eq!((g.width(), g.height()), (512, 512));
    }

    #[test]
    fn rejects_uneven_extent() {
        assert!(GridConfig::square(0.3, 51.2).is_err());
        assert!(GridConfig::new([0.0, 0.2], [0.0, 1.0, 0.0, 1.0]).is_err());
        assert!(GridConfig::new([0.2, 0.2], [1.0, 0.0, 0.0, 1.0]).is_err());
    }

    #[test]
    fn cell_center_point() {
        let grid = pillarize(&cloud(vec![[0.1, 0.1, 0.0]]), &GridConfig::default());
        assert_eq!(grid.len(), 1);
        assert_eq!(grid.center(0), [0.1, 0.1]);
        assert_eq!(grid.offset(0), Some([0.0, 0.0]));
        assert_eq!(grid.cell(0), 256 * 512 + 256);
    }

    #[test]
    fn co_binned_points_share_a_pillar() {
        let grid = pillarize(&cloud(vec![[0.02, 0.05, 0.0], [0.07, 0.05, 1.0]]), &GridConfig::default());
        assert_eq!(grid.len(), 1);
        assert_eq!(grid.members(0), &[0, 1]);
    }

    #[test]
    fn upper_edge_is_exclusive() {
        let cfg = GridConfig::new([0.5, 0.5], [0.0, 2.0, 0.0, 2.0]).unwrap();
        let grid = pillarize(&cloud(vec![[0.5, 0.0, 0.0], [2.0, 1.0, 0.0], [1.0, 2.0, 0.0]]), &cfg);
        assert_eq!(grid.len(), 1);
        assert_eq!(grid.occupied(), &[1]);
        assert_eq!(grid.out_of_range(), &[1, 2]);
        assert_eq!(grid.pillar_of_point(1), None);
    }

    #[test]
    fn all_out_of_range_gives_empty_grid() {
        let grid = pillarize(&cloud(vec![[100.0, 0.0, 0.0]]), &GridConfig::default());
        assert!(grid.is_empty());
        assert_eq!(sparsity(&grid), 1.0);
    }

    #[test]
    fn full_small_grid_has_zero_sparsity() {
        let cfg = GridConfig::new([1.0, 1.0], [0.0, 2.0, 0.0, 2.0]).unwrap();
        let grid = pillarize(
            &cloud(vec![[0.5, 0.5, 0.0], [1.5, 0.5, 0.0], [0.5, 1.5, 0.0], [1.5, 1.5, 0.0]]),
            &cfg,
        );
        assert_eq!(sparsity(&grid), 0.0);
    }

    #[test]
    fn singleton_feature() {
        let f = compute_feature(&[[0.1, 0.1, 0.0]], [0.1, 0.1]).unwrap();
        assert_eq!(f, [libm::log(2.0), 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0]);
    }

    #[test]
    fn two_point_z_statistics() {
        let f = compute_feature(&[[0.0, 0.0, 0.0], [0.0, 0.0, 2.0]], [0.0, 0.0]).unwrap();
        assert_eq!(&f[1..5], &[1.0, 1.0, 0.0, 2.0]);
    }

    #[test]
    fn empty_members_is_contract_error() {
        assert!(matches!(compute_feature(&[], [0.0, 0.0]), Err(Error::Contract(_))));
    }

    #[test]
    fn overrides_with_other_dim_must_cover_all() {
        let grid = pillarize(&cloud(vec![[0.1, 0.1, 0.0], [5.1, 0.1, 0.0]]), &GridConfig::default());
        let partial = FeatureOverrides {
            dim: 3,
            rows: vec![(grid.cell(0), vec![1.0, 2.0, 3.0])],
        };
        assert!(grid.clone().with_feature_overrides(&partial).is_err());

        let full = FeatureOverrides {
            dim: 3,
            rows: vec![(grid.cell(1), vec![0.0, 1.0, 0.0]), (grid.cell(0), vec![1.0, 2.0, 3.0])],
        };
        let g = grid.clone().with_feature_overrides(&full).unwrap();
        assert_eq!(g.features().dim(), 3);
        assert_eq!(g.feature(0), &[1.0, 2.0, 3.0]);

        let same_dim = FeatureOverrides {
            dim: 8,
            rows: vec![(grid.cell(1), vec![1.0; 8])],
        };
        let g = grid.clone().with_feature_overrides(&same_dim).unwrap();
        assert_eq!(g.feature(0), grid.feature(0));
        assert_eq!(g.feature(1), &[1.0; 8]);
    }
}
