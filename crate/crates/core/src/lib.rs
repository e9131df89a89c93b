//! Scene flow between two ego-motion-compensated LiDAR scans by translation
//! voting over sparse bird's-eye-view pillars.
//!
//! Both scans are binned into full-height pillars. Every occupied source pillar
//! gathers its `M` nearest source neighbours, and each neighbour casts one vote
//! per nearby target pillar (at most `N`, found with a ball query). A vote lands
//! in the bin of the discretised translation between the two pillar centres and
//! weighs the cosine similarity of their feature vectors. The winning translation
//! is extracted per pillar, or per connected cluster of pillars, and copied to
//! every member point.
//!
//! The crate is `no_std` + `alloc`. The default `std` feature parallelises the
//! per-pillar work with rayon; results are bit-identical either way.

#![cfg_attr(not(feature = "std"), no_std)]
// NaN-rejecting guards read better as `!(x > 0.0)`.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

extern crate alloc;

mod error;
mod math;
mod par;

pub mod assembly;
pub mod cloud;
pub mod metrics;
pub mod objectives;
pub mod pillar;
pub mod spatial;
pub mod synth;
pub mod voting;

pub use error::{Error, Result};

pub use assembly::{
    cluster_pillars, estimate_scene_flow, flow_consistency, static_gate, ClusterSet, Extraction,
    PipelineConfig, SceneFlowEstimator,
};
pub use cloud::{apply_flow, FlowField, Point3, PointCloud, Vec3, DEFAULT_FRAME_INTERVAL};
pub use metrics::{
    bucketed_normalized_epe, epe, three_way_epe, BucketStat, ClassReport, EvalReport, ThreeWayEpe,
    DYNAMIC_SPEED_THRESHOLD,
};
pub use objectives::{
    chamfer, cluster_penalty, dynamic_chamfer, nearest_distance, static_penalty, total_objective,
    DynamicChamfer, ObjectiveReport, PointTree,
};
pub use pillar::{
    compute_feature, pillarize, sparsity, CellIndex, FeatureOverrides, FeatureTable, FeatureVector,
    GridConfig, PillarGrid, HANDCRAFTED_FEATURE_DIM,
};
pub use spatial::{Neighbor, SpatialIndex};
pub use synth::{generate_scene_pair, BackgroundSpec, MoverSpec, ScenePair, SceneSpec};
pub use voting::{
    accumulate_votes, argmax_translation, cosine_similarity, displacement_to_bin,
    fuse_voting_spaces, soft_argmax_translation, BinLayout, VoteConfig, VoteTable, VotingSpace,
};
