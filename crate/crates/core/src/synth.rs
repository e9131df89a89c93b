//! Synthetic scan pairs with exact ground-truth flow: rigid box movers over a
//! static background.

use alloc::format;
use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::cloud::{FlowField, Point3, PointCloud, Vec3, DEFAULT_FRAME_INTERVAL};
use crate::error::{Error, Result};
use crate::math;
use crate::metrics::DYNAMIC_SPEED_THRESHOLD;

/// An axis-aligned box translating rigidly between the two scans.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct MoverSpec {
    /// Length (x), width (y) and height (z) in meters.
    pub dims: [f64; 3],
    /// Points per square meter: of footprint for a solid box, of side wall
    /// area for a surface box.
    pub density: f64,
    /// Sample only the four vertical faces, the way a scanner sees an object,
    /// instead of filling the volume.
    #[cfg_attr(feature = "serde", serde(default))]
    pub surface: bool,
    /// Footprint center at time t.
    pub center: [f64; 2],
    /// Planar translation per frame interval.
    pub translation: [f64; 2],
    #[cfg_attr(feature = "serde", serde(default = "default_class"))]
    pub class_id: u16,
}

#[cfg(feature = "serde")]
fn default_class() -> u16 {
    1
}

/// Static background points.
///
/// With `structures == 0` points are scattered uniformly over the workspace.
/// Otherwise they are spread over that many randomly placed wall-like slabs,
/// which gives the sparse, structured occupancy of a ground-free street scan.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct BackgroundSpec {
    pub count: usize,
    pub seed: u64,
    #[cfg_attr(feature = "serde", serde(default))]
    pub structures: usize,
    /// Minimum planar distance between background points and any mover
    /// footprint (at either pose).
    #[cfg_attr(feature = "serde", serde(default))]
    pub clearance: f64,
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct SceneSpec {
    /// Half-width of the square workspace in meters.
    pub extent: f64,
    pub movers: Vec<MoverSpec>,
    pub background: BackgroundSpec,
    pub noise_sigma: f64,
    pub rng_seed: u64,
    pub frame_interval: f64,
    /// Bound on each translation component.
    pub max_translation: f64,
}

impl Default for SceneSpec {
    fn default() -> Self {
        Self {
            extent: 51.2,
            movers: Vec::new(),
            background: BackgroundSpec {
                count: 0,
                seed: 0,
                structures: 0,
                clearance: 0.0,
            },
            noise_sigma: 0.0,
            rng_seed: 0,
            frame_interval: DEFAULT_FRAME_INTERVAL,
            max_translation: 2.0,
        }
    }
}

const MOVER_GAP: f64 = 1.0;

impl SceneSpec {
    /// The standard driving-like pair: 100k points, street-side structures,
    /// cars, cyclists and pedestrians, 2 cm sensor noise.
    pub fn driving(seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed_d21e);
        let mut movers = Vec::new();
        let mut place = |rng: &mut ChaCha8Rng, dims: [f64; 3], density: f64, speed: f64, class_id| {
            let heading = rng.random_range(0.0..core::f64::consts::TAU);
            let step = speed * rng.random_range(0.5..1.0);
            let translation = [step * libm::cos(heading), step * libm::sin(heading)];
            // Keep objects apart so that no two share a pillar cluster.
            loop {
                let m = MoverSpec {
                    dims,
                    density,
                    surface: true,
                    center: [rng.random_range(-40.0..40.0), rng.random_range(-40.0..40.0)],
                    translation,
                    class_id,
                };
                if movers.iter().all(|o: &MoverSpec| o.gap(&m) >= MOVER_GAP) {
                    movers.push(m);
                    break;
                }
            }
        };
        for _ in 0..8 {
            place(&mut rng, [4.5, 1.9, 1.6], 25.0, 1.5, 1);
        }
        for _ in 0..4 {
            place(&mut rng, [1.8, 0.6, 1.7], 20.0, 0.5, 3);
        }
        for _ in 0..6 {
            place(&mut rng, [0.6, 0.6, 1.8], 33.0, 0.15, 2);
        }
        let mover_points: usize = movers.iter().map(MoverSpec::point_count).sum();
        Self {
            extent: 51.2,
            movers,
            background: BackgroundSpec {
                count: 100_000 - mover_points,
                seed: seed.wrapping_add(1),
                structures: 120,
                clearance: MOVER_GAP,
            },
            noise_sigma: 0.02,
            rng_seed: seed,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: alloc::string::String| Err(Error::InvalidConfig(msg));
        if !(self.extent > 0.0 && self.extent.is_finite()) {
            return bad(format!("extent must be positive, got {}", self.extent));
        }
        if !(self.noise_sigma >= 0.0 && self.noise_sigma.is_finite()) {
            return bad(format!("noise sigma must be >= 0, got {}", self.noise_sigma));
        }
        if !(self.frame_interval > 0.0 && self.frame_interval.is_finite()) {
            return bad(format!("frame interval must be > 0, got {}", self.frame_interval));
        }
        if !(self.max_translation >= 0.0 && self.max_translation.is_finite()) {
            return bad(format!("max translation must be >= 0, got {}", self.max_translation));
        }
        if !(self.background.clearance >= 0.0 && self.background.clearance.is_finite()) {
            return bad(format!("clearance must be >= 0, got {}", self.background.clearance));
        }
        for (i, m) in self.movers.iter().enumerate() {
            if m.dims.iter().any(|d| !(*d > 0.0 && d.is_finite())) {
                return bad(format!("mover {i}: dimensions must be positive"));
            }
            if !(m.density >= 0.0 && m.density.is_finite()) {
                return bad(format!("mover {i}: density must be >= 0"));
            }
            if m.center.iter().any(|c| !c.is_finite()) {
                return bad(format!("mover {i}: center must be finite"));
            }
            if m
                .translation
                .iter()
                .any(|t| !t.is_finite() || t.abs() > self.max_translation)
            {
                return bad(format!(
                    "mover {i}: translation {:?} exceeds +-{} m",
                    m.translation, self.max_translation
                ));
            }
        }
        Ok(())
    }
}

impl MoverSpec {
    pub fn point_count(&self) -> usize {
        let [l, w, h] = self.dims;
        let area = if self.surface { 2.0 * (l + w) * h } else { l * w };
        math::round(self.density * area) as usize
    }

    /// Planar offset from the footprint center of a random sample.
    fn sample_offset(&self, rng: &mut ChaCha8Rng) -> [f64; 2] {
        let [l, w, _] = self.dims;
        if !self.surface {
            return [rng.random_range(-0.5 * l..0.5 * l), rng.random_range(-0.5 * w..0.5 * w)];
        }
        // Walk the perimeter counter-clockwise from the (-l/2, -w/2) corner.
        let u = rng.random_range(0.0..2.0 * (l + w));
        if u < l {
            [u - 0.5 * l, -0.5 * w]
        } else if u < l + w {
            [0.5 * l, u - l - 0.5 * w]
        } else if u < 2.0 * l + w {
            [0.5 * l - (u - l - w), 0.5 * w]
        } else {
            [-0.5 * l, 0.5 * w - (u - 2.0 * l - w)]
        }
    }

    /// Smallest planar distance between the footprints of two movers over
    /// both poses.
    fn gap(&self, other: &MoverSpec) -> f64 {
        let mut best = f64::INFINITY;
        for a in [[0.0, 0.0], self.translation] {
            for b in [[0.0, 0.0], other.translation] {
                let mut d2 = 0.0;
                for k in 0..2 {
                    let c = (self.center[k] + a[k] - other.center[k] - b[k]).abs();
                    let g = (c - 0.5 * (self.dims[k] + other.dims[k])).max(0.0);
                    d2 += g * g;
                }
                best = best.min(math::sqrt(d2));
            }
        }
        best
    }

    fn footprint_distance(&self, p: [f64; 2], shift: [f64; 2]) -> f64 {
        let dx = ((p[0] - self.center[0] - shift[0]).abs() - 0.5 * self.dims[0]).max(0.0);
        let dy = ((p[1] - self.center[1] - shift[1]).abs() - 0.5 * self.dims[1]).max(0.0);
        math::sqrt(dx * dx + dy * dy)
    }
}

/// Source scan, target scan and the exact flow that maps one onto the other.
#[derive(Debug, Clone, PartialEq)]
pub struct ScenePair {
    pub source: PointCloud,
    pub target: PointCloud,
    pub gt_flow: FlowField,
}

struct Slab {
    center: [f64; 2],
    cos: f64,
    sin: f64,
    half_len: f64,
    half_thick: f64,
    height: f64,
}

fn background_points(spec: &SceneSpec) -> Vec<Point3> {
    let bg = &spec.background;
    let mut rng = ChaCha8Rng::seed_from_u64(bg.seed);
    let e = spec.extent;
    let slabs: Vec<Slab> = (0..bg.structures)
        .map(|_| {
            let angle = rng.random_range(0.0..core::f64::consts::PI);
            Slab {
                center: [rng.random_range(-0.95 * e..0.95 * e), rng.random_range(-0.95 * e..0.95 * e)],
                cos: libm::cos(angle),
                sin: libm::sin(angle),
                half_len: 0.5 * rng.random_range(2.0..15.0),
                half_thick: 0.5 * rng.random_range(0.15..0.6),
                height: rng.random_range(0.5..3.5),
            }
        })
        .collect();

    let blocked = |x: f64, y: f64| {
        if !(x >= -e && x < e && y >= -e && y < e) {
            return true;
        }
        bg.clearance > 0.0
            && spec.movers.iter().any(|m| {
                m.footprint_distance([x, y], [0.0, 0.0]) < bg.clearance
                    || m.footprint_distance([x, y], m.translation) < bg.clearance
            })
    };

    let mut out = Vec::with_capacity(bg.count);
    let max_attempts = bg.count.saturating_mul(50);
    let mut attempts = 0usize;
    while out.len() < bg.count && attempts < max_attempts {
        attempts += 1;
        let p = if slabs.is_empty() {
            [rng.random_range(-e..e), rng.random_range(-e..e), rng.random_range(0.0..2.5)]
        } else {
            let s = &slabs[rng.random_range(0..slabs.len())];
            let u = rng.random_range(-s.half_len..s.half_len);
            let v = rng.random_range(-s.half_thick..s.half_thick);
            [
                s.center[0] + u * s.cos - v * s.sin,
                s.center[1] + u * s.sin + v * s.cos,
                rng.random_range(0.0..s.height),
            ]
        };
        if !blocked(p[0], p[1]) {
            out.push(p);
        }
    }
    out
}

/// Builds a scan pair from `spec`. Deterministic in the spec's seeds.
pub fn generate_scene_pair(spec: &SceneSpec) -> Result<ScenePair> {
    spec.validate()?;
    let background = background_points(spec);
    let mut rng = ChaCha8Rng::seed_from_u64(spec.rng_seed);

    let mut src: Vec<Point3> = background.clone();
    let mut tgt: Vec<Point3> = background;
    let n_bg = src.len();
    let mut flow: Vec<Vec3> = alloc::vec![[0.0; 3]; n_bg];
    let mut src_class = alloc::vec![0u16; n_bg];
    let mut src_dyn = alloc::vec![false; n_bg];
    let mut src_fg = alloc::vec![false; n_bg];
    let mut tgt_class = src_class.clone();
    let mut tgt_dyn = src_dyn.clone();
    let mut tgt_fg = src_fg.clone();

    for m in &spec.movers {
        let h = m.dims[2];
        let t = m.translation;
        let dynamic =
            math::sqrt(t[0] * t[0] + t[1] * t[1]) / spec.frame_interval >= DYNAMIC_SPEED_THRESHOLD;
        for _ in 0..m.point_count() {
            let o = m.sample_offset(&mut rng);
            let p = [m.center[0] + o[0], m.center[1] + o[1], rng.random_range(0.0..h)];
            src.push(p);
            tgt.push([p[0] + t[0], p[1] + t[1], p[2] + 0.0]);
            flow.push([t[0], t[1], 0.0]);
        }
        let n = m.point_count();
        for (class, dyn_, fg) in [
            (&mut src_class, &mut src_dyn, &mut src_fg),
            (&mut tgt_class, &mut tgt_dyn, &mut tgt_fg),
        ] {
            class.extend(core::iter::repeat_n(m.class_id, n));
            dyn_.extend(core::iter::repeat_n(dynamic, n));
            fg.extend(core::iter::repeat_n(true, n));
        }
    }

    if spec.noise_sigma > 0.0 {
        let normal = Normal::new(0.0, spec.noise_sigma)
            .map_err(|e| Error::InvalidConfig(format!("noise: {e}")))?;
        for p in src.iter_mut().chain(tgt.iter_mut()) {
            for c in p.iter_mut() {
                *c += normal.sample(&mut rng);
            }
        }
    }

    let source = PointCloud::new(src)?
        .with_gt_flow(flow.clone())?
        .with_class_id(src_class)?
        .with_dynamic(src_dyn)?
        .with_foreground(src_fg)?;
    let target = PointCloud::new(tgt)?
        .with_class_id(tgt_class)?
        .with_dynamic(tgt_dyn)?
        .with_foreground(tgt_fg)?;
    Ok(ScenePair {
        source,
        target,
        gt_flow: FlowField::new(flow, spec.frame_interval)?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    fn one_mover(noise: f64) -> SceneSpec {
        SceneSpec {
            extent: 20.0,
            movers: vec![MoverSpec {
                dims: [4.0, 2.0, 1.5],
                density: 40.0,
                surface: false,
                center: [3.0, -2.0],
                translation: [0.6, -0.4],
                class_id: 1,
            }],
            background: BackgroundSpec {
                count: 500,
                seed: 9,
                structures: 0,
                clearance: 2.0,
            },
            noise_sigma: noise,
            rng_seed: 7,
            ..SceneSpec::default()
        }
    }

    #[test]
    fn static_scene_is_identical() {
        let spec = SceneSpec {
            background: BackgroundSpec {
                count: 100,
                seed: 3,
                structures: 0,
                clearance: 0.0,
            },
            ..SceneSpec::default()
        };
        let pair = generate_scene_pair(&spec).unwrap();
        assert_eq!(pair.source.len(), 100);
        assert_eq!(pair.source.points(), pair.target.points());
        assert!(pair.gt_flow.flows().iter().all(|f| *f == [0.0; 3]));
    }

    #[test]
    fn mover_flow_is_its_translation() {
        let pair = generate_scene_pair(&one_mover(0.0)).unwrap();
        let fg = pair.source.is_foreground().unwrap();
        assert_eq!(fg.iter().filter(|f| **f).count(), 320);
        for (f, is_fg) in pair.gt_flow.flows().iter().zip(fg) {
            if *is_fg {
                assert_eq!(*f, [0.6, -0.4, 0.0]);
            } else {
                assert_eq!(*f, [0.0; 3]);
            }
        }
        assert!(pair.source.is_dynamic().unwrap().iter().zip(fg).all(|(d, f)| d == f));
    }

    #[test]
    fn same_seed_same_output() {
        let a = generate_scene_pair(&one_mover(0.02)).unwrap();
        let b = generate_scene_pair(&one_mover(0.02)).unwrap();
        assert_eq!(a, b);
        let mut other = one_mover(0.02);
        other.rng_seed += 1;
        assert_ne!(generate_scene_pair(&other).unwrap().source, a.source);
    }

    #[test]
    fn background_respects_clearance() {
        let spec = one_mover(0.0);
        let pair = generate_scene_pair(&spec).unwrap();
        let m = &spec.movers[0];
        for (p, fg) in pair.source.points().iter().zip(pair.source.is_foreground().unwrap()) {
            if !fg {
                assert!(m.footprint_distance([p[0], p[1]], [0.0, 0.0]) >= 2.0);
                assert!(m.footprint_distance([p[0], p[1]], m.translation) >= 2.0);
            }
        }
    }

    #[test]
    fn rejects_oversized_translation() {
        let mut spec = one_mover(0.0);
        spec.movers[0].translation = [2.5, 0.0];
        assert!(matches!(generate_scene_pair(&spec), Err(Error::InvalidConfig(_))));
    }

    #[test]
    fn surface_points_lie_on_the_walls() {
        let mut spec = one_mover(0.0);
        spec.movers[0].surface = true;
        spec.background.count = 0;
        let pair = generate_scene_pair(&spec).unwrap();
        // 2 * (4 + 2) * 1.5 m^2 of wall at 40 points each.
        assert_eq!(pair.source.len(), 720);
        for p in pair.source.points() {
            let dx = (p[0] - 3.0).abs();
            let dy = (p[1] + 2.0).abs();
            let on_wall = (dx - 2.0).abs() < 1e-9 || (dy - 1.0).abs() < 1e-9;
            assert!(on_wall && dx <= 2.0 + 1e-9 && dy <= 1.0 + 1e-9, "{p:?}");
        }
    }

    #[test]
    fn driving_movers_keep_apart() {
        let spec = SceneSpec::driving(3);
        for (i, a) in spec.movers.iter().enumerate() {
            for b in &spec.movers[i + 1..] {
                assert!(a.gap(b) >= MOVER_GAP);
            }
        }
    }

    #[test]
    fn driving_scene_has_100k_points() {
        let pair = generate_scene_pair(&SceneSpec::driving(1)).unwrap();
        assert_eq!(pair.source.len(), 100_000);
        assert_eq!(pair.target.len(), 100_000);
    }
}
