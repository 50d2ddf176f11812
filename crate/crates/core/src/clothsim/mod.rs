//! Mass-spring grid cloth simulator with dual-gripper kinematic constraints,
//! rigid-sphere collision, and grasp-force sensing.

mod downsample;
mod savgol;
mod sim;

pub use downsample::{downsample_indices, downsample_positions};
pub use savgol::savitzky_golay;
pub use sim::{
    Cloth, ClothState, ForceReading, GripperAction, SettleParams, SimConfig, SpringKind,
    BEND_AREA_SCALE, SHEAR_AREA_SCALE,
};
