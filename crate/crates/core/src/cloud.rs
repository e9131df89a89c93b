//! Point clouds, flow fields and flow application.

use alloc::format;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::math;

/// A 3D point in meters.
pub type Point3 = [f64; 3];
/// A 3D displacement in meters per frame interval.
pub type Vec3 = [f64; 3];

/// Frame interval of a 10 Hz scanner, in seconds.
pub const DEFAULT_FRAME_INTERVAL: f64 = 0.1;

/// An ordered LiDAR scan with optional per-point labels.
///
/// Every optional attribute, when present, holds exactly one entry per point.
/// All coordinates are finite. Both are checked on construction.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct PointCloud {
    points: Vec<Point3>,
    gt_flow: Option<Vec<Vec3>>,
    class_id: Option<Vec<u16>>,
    is_dynamic: Option<Vec<bool>>,
    is_foreground: Option<Vec<bool>>,
}

fn check_finite(what: &str, values: &[[f64; 3]]) -> Result<()> {
    match values.iter().position(|p| p.iter().any(|c| !c.is_finite())) {
        Some(i) => Err(Error::InvalidData(format!("{what} {i} is not finite"))),
        None => Ok(()),
    }
}

impl PointCloud {
    pub fn new(points: Vec<Point3>) -> Result<Self> {
        check_finite("point", &points)?;
        Ok(Self {
            points,
            ..Self::default()
        })
    }

    pub fn with_gt_flow(mut self, flow: Vec<Vec3>) -> Result<Self> {
        self.check_len("gt_flow", flow.len())?;
        check_finite("gt_flow of point", &flow)?;
        self.gt_flow = Some(flow);
        Ok(self)
    }

    pub fn with_class_id(mut self, class_id: Vec<u16>) -> Result<Self> {
        self.check_len("class_id", class_id.len())?;
        self.class_id = Some(class_id);
        Ok(self)
    }

    pub fn with_dynamic(mut self, is_dynamic: Vec<bool>) -> Result<Self> {
        self.check_len("is_dynamic", is_dynamic.len())?;
        self.is_dynamic = Some(is_dynamic);
        Ok(self)
    }

    pub fn with_foreground(mut self, is_foreground: Vec<bool>) -> Result<Self> {
        self.check_len("is_foreground", is_foreground.len())?;
        self.is_foreground = Some(is_foreground);
        Ok(self)
    }

    fn check_len(&self, what: &str, len: usize) -> Result<()> {
        if len != self.points.len() {
            return Err(Error::length_mismatch(what, self.points.len(), len));
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn points(&self) -> &[Point3] {
        &self.points
    }

    pub fn gt_flow(&self) -> Option<&[Vec3]> {
        self.gt_flow.as_deref()
    }

    pub fn class_id(&self) -> Option<&[u16]> {
        self.class_id.as_deref()
    }

    pub fn is_dynamic(&self) -> Option<&[bool]> {
        self.is_dynamic.as_deref()
    }

    pub fn is_foreground(&self) -> Option<&[bool]> {
        self.is_foreground.as_deref()
    }

    /// Ground-truth flow as a [`FlowField`], if the cloud carries one.
    pub fn gt_flow_field(&self, frame_interval: f64) -> Option<FlowField> {
        self.gt_flow.as_ref().map(|f| FlowField {
            flows: f.clone(),
            frame_interval,
        })
    }
}

/// Per-point translation, aligned index-for-index with a source cloud.
#[derive(Debug, Clone, PartialEq)]
pub struct FlowField {
    flows: Vec<Vec3>,
    frame_interval: f64,
}

impl FlowField {
    pub fn new(flows: Vec<Vec3>, frame_interval: f64) -> Result<Self> {
        check_finite("flow of point", &flows)?;
        if !(frame_interval > 0.0 && frame_interval.is_finite()) {
            return Err(Error::InvalidConfig(format!(
                "frame interval must be positive, got {frame_interval}"
            )));
        }
        Ok(Self {
            flows,
            frame_interval,
        })
    }

    pub fn zeros(len: usize, frame_interval: f64) -> Self {
        Self {
            flows: alloc::vec![[0.0; 3]; len],
            frame_interval,
        }
    }

    pub fn len(&self) -> usize {
        self.flows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.flows.is_empty()
    }

    pub fn flows(&self) -> &[Vec3] {
        &self.flows
    }

    pub(crate) fn flows_mut(&mut self) -> &mut [Vec3] {
        &mut self.flows
    }

    pub fn frame_interval(&self) -> f64 {
        self.frame_interval
    }

    /// Speed of point `i` in m/s.
    pub fn speed(&self, i: usize) -> f64 {
        math::norm3(self.flows[i]) / self.frame_interval
    }

    pub fn into_vec(self) -> Vec<Vec3> {
        self.flows
    }
}

/// Moves every point by its flow vector; attributes are carried over.
pub fn apply_flow(cloud: &PointCloud, flow: &FlowField) -> Result<PointCloud> {
    if cloud.len() != flow.len() {
        return Err(Error::length_mismatch("flow", cloud.len(), flow.len()));
    }
    let points = cloud
        .points
        .iter()
        .zip(flow.flows())
        .map(|(p, f)| [p[0] + f[0], p[1] + f[1], p[2] + f[2]])
        .collect::<Vec<_>>();
    check_finite("warped point", &points)?;
    Ok(PointCloud {
        points,
        ..cloud.clone()
    })
}
