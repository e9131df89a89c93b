//! Endpoint-error evaluation: three-way EPE (foreground dynamic, foreground
//! static, background static) and per-class bucketed normalized EPE.

use alloc::collections::BTreeMap;
use alloc::vec::Vec;

use crate::cloud::{FlowField, Vec3};
use crate::error::{Error, Result};
use crate::math;

/// Ground-truth speed (m/s) at or above which a point counts as moving.
pub const DYNAMIC_SPEED_THRESHOLD: f64 = 0.4;

/// Width of a speed bucket in m/s.
pub const BUCKET_WIDTH: f64 = 0.4;

/// Lower edge of the final, open-ended speed bucket in m/s.
pub const BUCKET_CAP: f64 = 20.0;

const BUCKETS: usize = 50;

/// Per-point `||pred - gt||`.
pub fn epe(pred: &FlowField, gt: &FlowField) -> Result<Vec<f64>> {
    if pred.len() != gt.len() {
        return Err(Error::length_mismatch("predicted flow", gt.len(), pred.len()));
    }
    Ok(pred
        .flows()
        .iter()
        .zip(gt.flows())
        .map(|(p, g)| point_epe(*p, *g))
        .collect())
}

#[inline]
fn point_epe(p: Vec3, g: Vec3) -> f64 {
    math::norm3([p[0] - g[0], p[1] - g[1], p[2] - g[2]])
}

#[derive(Debug, Clone, Copy, Default)]
struct Mean {
    sum: f64,
    n: usize,
}

impl Mean {
    fn push(&mut self, x: f64) {
        self.sum += x;
        self.n += 1;
    }

    fn get(&self) -> Option<f64> {
        (self.n > 0).then(|| self.sum / self.n as f64)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct CategoryCounts {
    pub foreground_dynamic: usize,
    pub foreground_static: usize,
    /// Every background point, whatever its speed.
    pub background_static: usize,
    /// Background points whose gt speed says they move.
    pub background_dynamic: usize,
}

/// Mean EPE per category; `None` for an empty category.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct ThreeWayEpe {
    pub fd: Option<f64>,
    pub fs: Option<f64>,
    /// Over all background points.
    pub bs: Option<f64>,
    /// Diagnostic: background points moving at or above the threshold. These
    /// are also part of `bs`.
    pub background_dynamic: Option<f64>,
    pub counts: CategoryCounts,
}

fn speed(g: Vec3, dt: f64) -> f64 {
    math::norm3(g) / dt
}

fn check(pred: &FlowField, gt: &FlowField, labels: usize, what: &str) -> Result<Vec<f64>> {
    if labels != gt.len() {
        return Err(Error::length_mismatch(what, gt.len(), labels));
    }
    epe(pred, gt)
}

/// Three-way EPE. Speeds use the frame interval of `gt`.
pub fn three_way_epe(pred: &FlowField, gt: &FlowField, is_foreground: &[bool]) -> Result<ThreeWayEpe> {
    let err = check(pred, gt, is_foreground.len(), "foreground mask")?;
    let dt = gt.frame_interval();
    let (mut fd, mut fs, mut bs, mut bd) = (Mean::default(), Mean::default(), Mean::default(), Mean::default());
    for ((e, g), fg) in err.iter().zip(gt.flows()).zip(is_foreground) {
        let moving = speed(*g, dt) >= DYNAMIC_SPEED_THRESHOLD;
        match (fg, moving) {
            (true, true) => fd.push(*e),
            (true, false) => fs.push(*e),
            (false, m) => {
                bs.push(*e);
                if m {
                    bd.push(*e);
                }
            }
        }
    }
    Ok(ThreeWayEpe {
        fd: fd.get(),
        fs: fs.get(),
        bs: bs.get(),
        background_dynamic: bd.get(),
        counts: CategoryCounts {
            foreground_dynamic: fd.n,
            foreground_static: fs.n,
            background_static: bs.n,
            background_dynamic: bd.n,
        },
    })
}

/// One non-empty speed bucket.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct BucketStat {
    /// Speed range in m/s, `[lo, hi)`; `hi` is `None` for the open last bucket.
    pub lo: f64,
    pub hi: Option<f64>,
    pub mean_epe: f64,
    /// Mean gt speed in m/s.
    pub mean_speed: f64,
    /// Mean EPE over mean gt flow magnitude.
    pub normalized: f64,
    pub count: usize,
}

#[derive(Debug, Clone, PartialEq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct ClassReport {
    /// Mean EPE in meters over points below the speed threshold.
    pub static_epe: Option<f64>,
    /// Unweighted mean of the bucket ratios.
    pub dynamic_normalized_epe: Option<f64>,
    pub static_count: usize,
    pub dynamic_count: usize,
    /// Non-empty buckets, by ascending speed.
    pub buckets: Vec<BucketStat>,
}

fn bucket_edge(j: usize) -> f64 {
    if j + 1 >= BUCKETS {
        BUCKET_CAP
    } else {
        // Integer numerator keeps edges at the nearest double to 0.4 k.
        ((j + 1) * 4) as f64 / 10.0
    }
}

/// Bucket of a dynamic speed, consistent with the reported edges.
fn bucket_of(s: f64) -> usize {
    let guess = math::floor(s / BUCKET_WIDTH) as i64 - 1;
    let mut j = guess.clamp(0, BUCKETS as i64 - 1) as usize;
    while j > 0 && s < bucket_edge(j) {
        j -= 1;
    }
    while j + 1 < BUCKETS && s >= bucket_edge(j + 1) {
        j += 1;
    }
    j
}

/// Per-class static EPE and bucketed, speed-normalized dynamic EPE.
pub fn bucketed_normalized_epe(
    pred: &FlowField,
    gt: &FlowField,
    class_ids: &[u16],
) -> Result<BTreeMap<u16, ClassReport>> {
    let err = check(pred, gt, class_ids.len(), "class ids")?;
    let dt = gt.frame_interval();

    #[derive(Default, Clone, Copy)]
    struct Acc {
        epe: Mean,
        norm: f64,
    }
    let mut per: BTreeMap<u16, (Mean, Vec<Acc>)> = BTreeMap::new();
    for ((e, g), c) in err.iter().zip(gt.flows()).zip(class_ids) {
        let entry = per
            .entry(*c)
            .or_insert_with(|| (Mean::default(), alloc::vec![Acc::default(); BUCKETS]));
        let s = speed(*g, dt);
        if s < DYNAMIC_SPEED_THRESHOLD {
            entry.0.push(*e);
        } else {
            let b = &mut entry.1[bucket_of(s)];
            b.epe.push(*e);
            b.norm += math::norm3(*g);
        }
    }

    Ok(per
        .into_iter()
        .map(|(c, (stat, buckets))| {
            let mut out = Vec::new();
            for (j, b) in buckets.iter().enumerate() {
                let Some(mean_epe) = b.epe.get() else { continue };
                let mean_norm = b.norm / b.epe.n as f64;
                out.push(BucketStat {
                    lo: bucket_edge(j),
                    hi: (j + 1 < BUCKETS).then(|| bucket_edge(j + 1)),
                    mean_epe,
                    mean_speed: mean_norm / dt,
                    normalized: mean_epe / mean_norm,
                    count: b.epe.n,
                });
            }
            let dynamic_normalized_epe = (!out.is_empty())
                .then(|| out.iter().map(|b| b.normalized).sum::<f64>() / out.len() as f64);
            let report = ClassReport {
                static_epe: stat.get(),
                dynamic_normalized_epe,
                static_count: stat.n,
                dynamic_count: out.iter().map(|b| b.count).sum(),
                buckets: out,
            };
            (c, report)
        })
        .collect())
}

/// Everything `eval` reports for one prediction.
#[derive(Debug, Clone, PartialEq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct EvalReport {
    pub points: usize,
    /// Points with gt speed at or above the threshold.
    pub dynamic_points: usize,
    /// Present when foreground labels were supplied.
    pub three_way: Option<ThreeWayEpe>,
    /// Present when class ids were supplied.
    pub bucketed: Option<BTreeMap<u16, ClassReport>>,
}

impl EvalReport {
    pub fn evaluate(
        pred: &FlowField,
        gt: &FlowField,
        is_foreground: Option<&[bool]>,
        class_ids: Option<&[u16]>,
    ) -> Result<Self> {
        let dt = gt.frame_interval();
        let err = epe(pred, gt)?;
        Ok(Self {
            points: err.len(),
            dynamic_points: gt
                .flows()
                .iter()
                .filter(|g| speed(**g, dt) >= DYNAMIC_SPEED_THRESHOLD)
                .count(),
            three_way: is_foreground.map(|m| three_way_epe(pred, gt, m)).transpose()?,
            bucketed: class_ids.map(|c| bucketed_normalized_epe(pred, gt, c)).transpose()?,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    fn field(v: Vec<Vec3>) -> FlowField {
        FlowField::new(v, 0.1).unwrap()
    }

    #[test]
    fn bucket_edges() {
        assert_eq!(bucket_of(0.4), 0);
        assert_eq!(bucket_of(0.79), 0);
        assert_eq!(bucket_of(0.8), 1);
        assert_eq!(bucket_of(1.2), 2);
        assert_eq!(bucket_of(19.99), 48);
        assert_eq!(bucket_of(20.0), 49);
        assert_eq!(bucket_of(1e6), 49);
        for j in 0..BUCKETS - 1 {
            let e = bucket_edge(j + 1);
            assert_eq!(bucket_of(e), j + 1);
            assert_eq!(bucket_of(math::next_below(e)), j);
        }
    }

    #[test]
    fn threshold_is_inclusive() {
        // 0.041 m over 0.1 s is above 0.4 m/s; 0.04 / 0.1 rounds just below it.
        let gt = field(vec![[0.041, 0.0, 0.0], [0.04, 0.0, 0.0]]);
        let r = three_way_epe(&gt, &gt, &[true, true]).unwrap();
        assert_eq!(r.counts.foreground_dynamic, 1);
        assert_eq!(r.counts.foreground_static, 1);
    }

    #[test]
    fn background_only() {
        let gt = field(vec![[0.5, 0.0, 0.0], [0.0; 3]]);
        let r = three_way_epe(&gt, &gt, &[false, false]).unwrap();
        assert_eq!((r.fd, r.fs, r.bs), (None, None, Some(0.0)));
        assert_eq!(r.counts.background_static, 2);
        assert_eq!(r.counts.background_dynamic, 1);
        assert_eq!(r.background_dynamic, Some(0.0));
    }

    #[test]
    fn mismatch_is_an_error() {
        let gt = field(vec![[0.0; 3]]);
        assert!(epe(&field(vec![]), &gt).is_err());
        assert!(three_way_epe(&gt, &gt, &[]).is_err());
        assert!(bucketed_normalized_epe(&gt, &gt, &[1, 2]).is_err());
    }

    #[test]
    fn open_last_bucket() {
        let gt = field(vec![[3.0, 0.0, 0.0]]);
        let pred = field(vec![[2.7, 0.0, 0.0]]);
        let r = bucketed_normalized_epe(&pred, &gt, &[4]).unwrap();
        let b = &r[&4].buckets[0];
        assert_eq!((b.lo, b.hi, b.count), (20.0, None, 1));
        assert!((b.normalized - 0.1).abs() < 1e-12);
        assert_eq!(r[&4].static_epe, None);
    }
}
