//! One serializable bundle of every tunable, with the defaults used across
//! the toolkit.

use serde::{Deserialize, Serialize};

use crate::dmg::FingerModel;
use crate::ects::{ControllerGains, EctsParams, ExecutionOptions, Twist};
use crate::manipulability::SamplingOptions;
use crate::planner::{CostWeights, PlannerOptions, RotationPolicy};
use crate::surface::{Connectivity, LoadOptions, SegmentOptions};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    /// Multiplier applied to loaded coordinates.
    pub input_scale: f64,
    pub segmentation: SegmentationConfig,
    pub dmg: DmgConfig,
    pub planner: PlannerConfig,
    pub manipulability: ManipulabilityConfig,
    pub ects: EctsConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SegmentationConfig {
    pub resolution: f64,
    pub connectivity: Connectivity,
    pub normal_k: usize,
    pub normal_weight: f64,
    pub strict_coarse: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DmgConfig {
    pub delta: f64,
    /// Degrees.
    pub angle_step: u32,
    pub finger_length: f64,
    pub finger_width: f64,
    pub clearance: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PlannerConfig {
    pub weights: CostWeights<f64>,
    pub max_aperture: f64,
    pub rotation_policy: RotationPolicy,
    pub merge_angle_tol: u32,
    pub merge_direction_tol: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ManipulabilityConfig {
    /// Two resolutions when unset.
    pub grid_step: Option<f64>,
    pub angle_step: u32,
    /// Poses listed per regrasp area.
    pub representatives: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EctsConfig {
    pub alpha: f64,
    pub beta: f64,
    pub gains: ControllerGains<f64>,
    /// Five resolutions when unset.
    pub depth: Option<f64>,
    pub loosen: f64,
    pub retreat: f64,
}

impl Default for Config {
    fn default() -> Self {
        Self {
            input_scale: 1.0,
            segmentation: SegmentationConfig::default(),
            dmg: DmgConfig::default(),
            planner: PlannerConfig::default(),
            manipulability: ManipulabilityConfig::default(),
            ects: EctsConfig::default(),
        }
    }
}

impl Default for SegmentationConfig {
    fn default() -> Self {
        let s = SegmentOptions::default();
        Self {
            resolution: 0.013,
            connectivity: s.connectivity,
            normal_k: LoadOptions::default().normal_k,
            normal_weight: s.normal_weight,
            strict_coarse: s.strict_coarse,
        }
    }
}

impl Default for DmgConfig {
    fn default() -> Self {
        let f = FingerModel::<f64>::default();
        Self {
            delta: 0.07,
            angle_step: f.angle_step,
            finger_length: f.length,
            finger_width: f.width,
            clearance: f.height_clearance,
        }
    }
}

impl Default for PlannerConfig {
    fn default() -> Self {
        let p = PlannerOptions::<f64>::default();
        Self {
            weights: p.weights,
            max_aperture: p.max_aperture,
            rotation_policy: p.rotation_policy,
            merge_angle_tol: p.merge_angle_tol,
            merge_direction_tol: p.merge_direction_tol,
        }
    }
}

impl Default for ManipulabilityConfig {
    fn default() -> Self {
        Self {
            grid_step: None,
            angle_step: 30,
            representatives: 3,
        }
    }
}

impl Default for EctsConfig {
    fn default() -> Self {
        let e = ExecutionOptions::<f64>::default();
        Self {
            alpha: e.params.alpha,
            beta: e.params.beta,
            gains: e.gains,
            depth: e.depth,
            loosen: e.loosen,
            retreat: e.retreat,
        }
    }
}

impl Config {
    /// First problem found, phrased for the user.
    pub fn validate(&self) -> Result<(), String> {
        fn positive(name: &str, v: f64) -> Result<(), String> {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(format!("{name} must be positive, got {v}"))
            }
        }
        positive("input_scale", self.input_scale)?;
        positive("segmentation.resolution", self.segmentation.resolution)?;
        if self.segmentation.normal_k < 3 {
            return Err("segmentation.normal_k must be at least 3".into());
        }
        positive("dmg.delta", self.dmg.delta)?;
        self.finger().validate().map_err(|e| e.to_string())?;
        self.planner.weights.validate()?;
        positive("planner.max_aperture", self.planner.max_aperture)?;
        if let Some(g) = self.manipulability.grid_step {
            positive("manipulability.grid_step", g)?;
        }
        let a = self.manipulability.angle_step;
        if a == 0 || 360 % a != 0 {
            return Err(format!("manipulability.angle_step must divide 360, got {a}"));
        }
        EctsParams { alpha: self.ects.alpha, beta: self.ects.beta }.validate()?;
        self.ects.gains.validate()?;
        if let Some(d) = self.ects.depth {
            positive("ects.depth", d)?;
        }
        Ok(())
    }

    pub fn load_options(&self) -> LoadOptions {
        LoadOptions {
            normal_k: self.segmentation.normal_k,
            input_scale: self.input_scale,
        }
    }

    pub fn segment_options(&self) -> SegmentOptions {
        SegmentOptions {
            connectivity: self.segmentation.connectivity,
            normal_weight: self.segmentation.normal_weight,
            strict_coarse: self.segmentation.strict_coarse,
        }
    }

    pub fn finger(&self) -> FingerModel<f64> {
        FingerModel {
            length: self.dmg.finger_length,
            width: self.dmg.finger_width,
            height_clearance: self.dmg.clearance,
            angle_step: self.dmg.angle_step,
        }
    }

    pub fn planner_options(&self) -> PlannerOptions<f64> {
        PlannerOptions {
            weights: self.planner.weights,
            max_aperture: self.planner.max_aperture,
            rotation_policy: self.planner.rotation_policy,
            merge_angle_tol: self.planner.merge_angle_tol,
            merge_direction_tol: self.planner.merge_direction_tol,
        }
    }

    pub fn sampling_options(&self) -> SamplingOptions<f64> {
        SamplingOptions {
            grid_step: self
                .manipulability
                .grid_step
                .unwrap_or(2.0 * self.segmentation.resolution),
            angle_step: self.manipulability.angle_step,
            max_aperture: self.planner.max_aperture,
        }
    }

    pub fn execution_options(&self) -> ExecutionOptions<f64> {
        ExecutionOptions {
            params: EctsParams {
                alpha: self.ects.alpha,
                beta: self.ects.beta,
            },
            gains: self.ects.gains,
            absolute: Twist::zero(),
            depth: self.ects.depth,
            loosen: self.ects.loosen,
            retreat: self.ects.retreat,
            comfort_arc: self.planner.weights.comfort_arc,
        }
    }
}
