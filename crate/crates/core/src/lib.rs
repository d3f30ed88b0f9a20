//! Adaptive surface normal (ASN) recovery from depth maps.
//!
//! Normals are estimated per pixel from randomly sampled triangles in a local
//! window, weighted by their projected image area and by the similarity of a
//! per-pixel geometric context. The crate also carries the baseline
//! estimators, the depth and normal training losses with analytic gradients,
//! evaluation metrics, synthetic scenes, and the ablation drivers.

// `!(x > 0.0)` style guards are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod context;
pub mod context_fit;
pub mod error;
pub mod experiments;
pub mod geometry;
pub mod gradcheck;
pub mod gradients;
pub mod io;
pub mod linalg;
pub mod losses;
pub mod metrics;
pub mod normals;
pub mod parallel;
pub mod synthetics;

pub use context::{
    guidance_weights, intensity_map, normalized_similarities, similarity, top_v_sample,
    top_v_sample_masked, triplet_confidence, ContextMap, DerivativeOrder, GuidanceMap, SampleSet,
    ScalarGrid,
};
pub use context_fit::{fit_context_demo, run_context_fit, ContextFit, ContextFitReport};
pub use error::{Error, PfmError, Result};
pub use experiments::{
    run_noise_experiment, run_patch_sweep, run_triplet_sweep, window_from_ratio, SweepResult,
    SweepRow,
};
pub use geometry::{
    angle_between, extract_patch, orient_to_camera, unproject, DepthMap, Grid, Intrinsics,
    NormalMap, PatchEntry, Pixel, PointMap, Vec3,
};
pub use gradcheck::{check_problem, random_problem, GradCheck, GradProblem, GradTarget};
pub use gradients::{
    finite_difference, grad_asn_wrt_context, grad_asn_wrt_depth, grad_silog_wrt_depth, FdStep,
};
pub use losses::{
    asn_loss, multiscale_depth_loss, silog_loss, total_loss, virtual_normal_loss,
    weighted_normal_loss, GuidanceScope, LossConfig, ScaleStack, SilogVariant,
};
pub use metrics::{depth_metrics, normal_metrics, pointcloud_metrics, MetricsReport};
pub use normals::{
    asn_normal, average_normal, least_squares_normal, projected_area, recover_normal_map,
    sample_triplets, sobel_normal, triplet_normal, AsnConfig, Method, Sampling, TripletSet,
    WeightedCandidate,
};
pub use synthetics::{gen_scene, Scene, SceneKind, SceneSpec};
