//! Dexterous manipulation graphs for in-hand planning with a parallel gripper.
//!
//! The pipeline runs from an oriented point cloud to a segmented patch graph,
//! a graph of finger contacts and admissible finger angles, in-hand paths made
//! of rotations and translations, a pairwise reachability matrix, and a
//! kinematic dual-arm execution of the paths.
//!
//! Everything geometric is generic over [`Real`]; the aliases in [`f64`] and
//! [`f32`] fix the scalar.

// `!(x > 0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]
pub mod config;
pub mod dmg;
pub mod ects;
pub mod manipulability;
pub mod planner;
pub mod scalar;
pub mod shapes;
pub mod spatial;
pub mod surface;

pub use config::Config;
pub use dmg::{build_dmg, Dmg, DmgError, FingerModel};
pub use ects::{simulate_execution, EctsParams, ExecError, Twist};
pub use manipulability::{build_matrix, sample_poses, ManipulabilityMatrix};
pub use planner::{GraspQuery, GraspState, Plan, PlanError, Planner, PlannerOptions, PrimitiveSequence};
pub use scalar::Real;
pub use surface::{segment, OrientedSurface, SurfaceError, SurfacePatchGraph};

macro_rules! aliases {
    ($t:ty) => {
        pub type OrientedSurface = crate::surface::OrientedSurface<$t>;
        pub type SurfacePatchGraph = crate::surface::SurfacePatchGraph<$t>;
        pub type Dmg = crate::dmg::Dmg<$t>;
        pub type FingerModel = crate::dmg::FingerModel<$t>;
        pub type Planner<'a> = crate::planner::Planner<'a, $t>;
        pub type PlannerOptions = crate::planner::PlannerOptions<$t>;
        pub type GraspState = crate::planner::GraspState<$t>;
        pub type GraspQuery = crate::planner::GraspQuery<$t>;
        pub type Plan = crate::planner::Plan<$t>;
        pub type PrimitiveSequence = crate::planner::PrimitiveSequence<$t>;
        pub type PoseSample = crate::manipulability::PoseSample<$t>;
        pub type Twist = crate::ects::Twist<$t>;
        pub type EctsParams = crate::ects::EctsParams<$t>;
        pub type ControllerGains = crate::ects::ControllerGains<$t>;
        pub type ExecutionOptions = crate::ects::ExecutionOptions<$t>;
    };
}

/// Double precision aliases.
pub mod f64 {
    aliases!(f64);
}

/// Single precision aliases.
pub mod f32 {
    aliases!(f32);
}
