//! Cross-embodiment demonstration pipeline.
//!
//! Human capture streams and robot teleoperation logs are mapped into one
//! 54-dimensional human-centric state/action space, human motion is slowed to
//! robot speed, a chunked-action policy is trained on the mixture, and its
//! predictions are retargeted to robot joints with damped least squares IK.

pub mod dataset;
pub mod geometry;
pub mod harness;
pub mod kinematics;
pub mod par;
pub mod policy;
pub mod retiming;
pub mod unified;
