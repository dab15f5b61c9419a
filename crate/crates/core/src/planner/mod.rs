//! Offline reference generation: CoM by ZMP preview control, swing-foot
//! splines, joint references by inverse kinematics and weight-distribution
//! feedforward.

pub mod distribution;
pub mod ik;
pub mod poses;
pub mod preview;
pub mod walk;

pub use distribution::{distribute_contact_forces, distribute_contact_forces_at, lever_split, ForceDistribution};
pub use ik::{inverse_kinematics, task_values, FootTarget, IkSolution, IkTargets};
pub use poses::{key_pose, key_pose_seeded, load_poses, poses_from_toml_str, rest_configuration, KeyPose, KeyPoseSpec};
pub use preview::{zmp_preview_com, ComTrajectory, PreviewWeights};
pub use walk::{build_walk_plan, Footstep, FootSample, Plan, StepParams, WalkMode};
