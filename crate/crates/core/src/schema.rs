//! The fixed 20-feature kinematic schema and the task/operator label sets.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::Error;

pub const NUM_FEATURES: usize = 20;
pub const SAMPLE_RATE_HZ: f64 = 30.0;

/// Column names in file and model order.
pub const FEATURE_NAMES: [&str; NUM_FEATURES] = [
    "Tool Camera Pitch",
    "Tool Camera Roll",
    "Tool Camera X",
    "Tool Camera Y",
    "Tool Camera Yaw",
    "Tool Camera Z",
    "Tool Left Jaw Opening Angle",
    "Tool Left Pitch",
    "Tool Left Roll",
    "Tool Left X",
    "Tool Left Y",
    "Tool Left Yaw",
    "Tool Left Z",
    "Tool Right Jaw Opening Angle",
    "Tool Right Pitch",
    "Tool Right Roll",
    "Tool Right X",
    "Tool Right Y",
    "Tool Right Yaw",
    "Tool Right Z",
];

/// Published mean absolute per-step movement; `None` where the source table is blank.
pub const REFERENCE_MEAN_MOVEMENT: [Option<f64>; NUM_FEATURES] = [
    Some(0.0),
    Some(0.0),
    Some(0.0),
    Some(0.0),
    Some(0.0),
    Some(0.0),
    Some(0.003162),
    None,
    Some(0.003628),
    Some(0.015099),
    Some(0.014671),
    Some(0.003408),
    Some(0.020905),
    Some(0.001955),
    Some(0.002691),
    Some(0.004513),
    Some(0.016174),
    Some(0.017899),
    Some(0.002792),
    Some(0.019928),
];

/// Feature indices of one instrument or the camera, in
/// `[X, Y, Z, Pitch, Roll, Yaw, Jaw]` order (camera has no jaw).
#[derive(Debug, Clone, Copy)]
pub struct ToolColumns {
    pub xyz: [usize; 3],
    pub rotation: [usize; 3],
    pub jaw: Option<usize>,
}

pub const CAMERA: ToolColumns = ToolColumns {
    xyz: [2, 3, 5],
    rotation: [0, 1, 4],
    jaw: None,
};
pub const LEFT_TOOL: ToolColumns = ToolColumns {
    xyz: [9, 10, 12],
    rotation: [7, 8, 11],
    jaw: Some(6),
};
pub const RIGHT_TOOL: ToolColumns = ToolColumns {
    xyz: [16, 17, 19],
    rotation: [14, 15, 18],
    jaw: Some(13),
};

/// Indices of every pitch/roll/yaw column, camera included.
pub fn rotation_features() -> Vec<usize> {
    [CAMERA, LEFT_TOOL, RIGHT_TOOL]
        .iter()
        .flat_map(|t| t.rotation)
        .collect()
}

pub fn camera_features() -> Vec<usize> {
    CAMERA.xyz.iter().chain(&CAMERA.rotation).copied().collect()
}

pub fn feature_index(name: &str) -> Option<usize> {
    FEATURE_NAMES.iter().position(|n| *n == name)
}

/// Ordered feature names plus reference movement, as a value.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureSchema {
    pub names: Vec<String>,
    pub reference_mean_movement: Vec<Option<f64>>,
}

impl Default for FeatureSchema {
    fn default() -> Self {
        Self {
            names: FEATURE_NAMES.iter().map(|s| s.to_string()).collect(),
            reference_mean_movement: REFERENCE_MEAN_MOVEMENT.to_vec(),
        }
    }
}

macro_rules! label_enum {
    ($(#[$meta:meta])* $name:ident { $($variant:ident),+ $(,)? }) => {
        $(#[$meta])*
        #[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
        pub enum $name {
            $($variant),+
        }

        impl $name {
            pub const ALL: &'static [$name] = &[$($name::$variant),+];

            pub fn index(self) -> usize {
                self as usize
            }

            pub fn from_index(i: usize) -> Option<Self> {
                Self::ALL.get(i).copied()
            }

            pub fn name(self) -> &'static str {
                match self {
                    $($name::$variant => stringify!($variant)),+
                }
            }
        }

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(self.name())
            }
        }

        impl FromStr for $name {
            type Err = Error;

            fn from_str(s: &str) -> Result<Self, Error> {
                Self::ALL
                    .iter()
                    .copied()
                    .find(|v| v.name() == s)
                    .ok_or_else(|| Error::Schema(format!(
                        concat!("unknown ", stringify!($name), " `{}`"), s
                    )))
            }
        }
    };
}

label_enum!(
    /// Scripted exercise.
    TaskId { PickAndPlace, PegBoard, ThreadTheRings, RingAndRail }
);
label_enum!(
    /// Operator (surgical fellow) identity.
    OperatorId { A, B, C, D }
);

/// Which label a classifier predicts.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Target {
    Task,
    Operator,
}

impl Target {
    pub fn class_names(self) -> Vec<String> {
        match self {
            Target::Task => TaskId::ALL.iter().map(|t| t.to_string()).collect(),
            Target::Operator => OperatorId::ALL.iter().map(|t| t.to_string()).collect(),
        }
    }

    pub fn num_classes(self) -> usize {
        match self {
            Target::Task => TaskId::ALL.len(),
            Target::Operator => OperatorId::ALL.len(),
        }
    }
}

impl fmt::Display for Target {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Target::Task => "task",
            Target::Operator => "operator",
        })
    }
}

impl FromStr for Target {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Error> {
        match s {
            "task" => Ok(Target::Task),
            "operator" => Ok(Target::Operator),
            _ => Err(Error::Schema(format!("unknown target `{s}`"))),
        }
    }
}
