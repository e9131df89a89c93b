//! JSON form of an evaluation: top-level `three_way`, `bucketed`, `counts`.
//! Numbers carry 6 significant digits; missing categories are `null`.

use std::collections::BTreeMap;
use std::path::Path;

use pillarvote_core::metrics::CategoryCounts;
use pillarvote_core::{BucketStat, ClassReport, EvalReport, ThreeWayEpe};
use serde::{Deserialize, Serialize, Serializer};

use crate::error::{CliError, CliResult};

pub fn round6(v: f64) -> f64 {
    if v == 0.0 || !v.is_finite() {
        return v + 0.0;
    }
    format!("{v:.5e}").parse().unwrap()
}

fn num6<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
    s.serialize_f64(round6(*v))
}

fn opt6<S: Serializer>(v: &Option<f64>, s: S) -> Result<S::Ok, S::Error> {
    match v {
        Some(v) => s.serialize_f64(round6(*v)),
        None => s.serialize_none(),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThreeWayJson {
    #[serde(rename = "FD", serialize_with = "opt6")]
    pub fd: Option<f64>,
    #[serde(rename = "FS", serialize_with = "opt6")]
    pub fs: Option<f64>,
    #[serde(rename = "BS", serialize_with = "opt6")]
    pub bs: Option<f64>,
    #[serde(serialize_with = "opt6")]
    pub background_dynamic: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BucketJson {
    #[serde(serialize_with = "num6")]
    pub lo: f64,
    #[serde(serialize_with = "opt6")]
    pub hi: Option<f64>,
    #[serde(serialize_with = "num6")]
    pub mean_epe: f64,
    #[serde(serialize_with = "num6")]
    pub mean_speed: f64,
    #[serde(serialize_with = "num6")]
    pub normalized: f64,
    pub count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassJson {
    #[serde(serialize_with = "opt6")]
    pub static_epe: Option<f64>,
    #[serde(serialize_with = "opt6")]
    pub dynamic_normalized_epe: Option<f64>,
    pub static_count: usize,
    pub dynamic_count: usize,
    pub buckets: Vec<BucketJson>,
}

/// Category sizes; the per-category ones are `null` without foreground labels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CountsJson {
    pub points: usize,
    pub dynamic: usize,
    pub foreground_dynamic: Option<usize>,
    pub foreground_static: Option<usize>,
    pub background_static: Option<usize>,
    pub background_dynamic: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportJson {
    pub three_way: Option<ThreeWayJson>,
    /// Keyed by class id.
    pub bucketed: Option<BTreeMap<u16, ClassJson>>,
    pub counts: CountsJson,
}

impl From<&EvalReport> for ReportJson {
    fn from(r: &EvalReport) -> Self {
        let c = r.three_way.map(|t| t.counts);
        Self {
            three_way: r.three_way.map(|t| ThreeWayJson {
                fd: t.fd,
                fs: t.fs,
                bs: t.bs,
                background_dynamic: t.background_dynamic,
            }),
            bucketed: r.bucketed.as_ref().map(|b| {
                b.iter()
                    .map(|(id, c)| {
                        let buckets = c
                            .buckets
                            .iter()
                            .map(|b| BucketJson {
                                lo: b.lo,
                                hi: b.hi,
                                mean_epe: b.mean_epe,
                                mean_speed: b.mean_speed,
                                normalized: b.normalized,
                                count: b.count,
                            })
                            .collect();
                        let class = ClassJson {
                            static_epe: c.static_epe,
                            dynamic_normalized_epe: c.dynamic_normalized_epe,
                            static_count: c.static_count,
                            dynamic_count: c.dynamic_count,
                            buckets,
                        };
                        (*id, class)
                    })
                    .collect()
            }),
            counts: CountsJson {
                points: r.points,
                dynamic: r.dynamic_points,
                foreground_dynamic: c.map(|c| c.foreground_dynamic),
                foreground_static: c.map(|c| c.foreground_static),
                background_static: c.map(|c| c.background_static),
                background_dynamic: c.map(|c| c.background_dynamic),
            },
        }
    }
}

impl ReportJson {
    /// Back to the library type. Values keep the 6-digit rounding they were
    /// parsed with.
    pub fn to_eval_report(&self) -> EvalReport {
        let c = &self.counts;
        EvalReport {
            points: c.points,
            dynamic_points: c.dynamic,
            three_way: self.three_way.as_ref().map(|t| ThreeWayEpe {
                fd: t.fd,
                fs: t.fs,
                bs: t.bs,
                background_dynamic: t.background_dynamic,
                counts: CategoryCounts {
                    foreground_dynamic: c.foreground_dynamic.unwrap_or(0),
                    foreground_static: c.foreground_static.unwrap_or(0),
                    background_static: c.background_static.unwrap_or(0),
                    background_dynamic: c.background_dynamic.unwrap_or(0),
                },
            }),
            bucketed: self.bucketed.as_ref().map(|b| {
                b.iter()
                    .map(|(id, c)| {
                        let report = ClassReport {
                            static_epe: c.static_epe,
                            dynamic_normalized_epe: c.dynamic_normalized_epe,
                            static_count: c.static_count,
                            dynamic_count: c.dynamic_count,
                            buckets: c
                                .buckets
                                .iter()
                                .map(|b| BucketStat {
                                    lo: b.lo,
                                    hi: b.hi,
                                    mean_epe: b.mean_epe,
                                    mean_speed: b.mean_speed,
                                    normalized: b.normalized,
                                    count: b.count,
                                })
                                .collect(),
                        };
                        (*id, report)
                    })
                    .collect()
            }),
        }
    }
}

pub fn report_json(report: &EvalReport) -> String {
    let mut s = serde_json::to_string_pretty(&ReportJson::from(report)).expect("report serializes");
    s.push('\n');
    s
}

pub fn parse_report(text: &str) -> Result<EvalReport, String> {
    let r: ReportJson = serde_json::from_str(text).map_err(|e| e.to_string())?;
    Ok(r.to_eval_report())
}

pub fn write_report(report: &EvalReport, path: &Path) -> CliResult<()> {
    std::fs::write(path, report_json(report)).map_err(|e| CliError::io(path, e))
}

/// Plain-text summary for the terminal.
pub fn summary_table(report: &EvalReport) -> String {
    let f = |v: Option<f64>| v.map_or("-".to_string(), |v| format!("{v:.4}"));
    let mut s = format!("points {}  dynamic {}\n", report.points, report.dynamic_points);
    if let Some(t) = &report.three_way {
        s.push_str(&format!(
            "{:<6}{:>10}{:>10}\n{:<6}{:>10}{:>10}\n{:<6}{:>10}{:>10}\n",
            "FD", f(t.fd), t.counts.foreground_dynamic,
            "FS", f(t.fs), t.counts.foreground_static,
            "BS", f(t.bs), t.counts.background_static,
        ));
        if t.counts.background_dynamic > 0 {
            s.push_str(&format!(
                "{:<6}{:>10}{:>10}  (background moving, inside BS)\n",
                "BD", f(t.background_dynamic), t.counts.background_dynamic
            ));
        }
    }
    if let Some(b) = &report.bucketed {
        s.push_str(&format!("{:<8}{:>12}{:>14}{:>9}\n", "class", "static_epe", "dyn_norm_epe", "buckets"));
        for (id, c) in b {
            s.push_str(&format!(
                "{:<8}{:>12}{:>14}{:>9}\n",
                id,
                f(c.static_epe),
                f(c.dynamic_normalized_epe),
                c.buckets.len()
            ));
        }
    }
    s
}
