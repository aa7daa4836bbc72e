//! Speed and separation monitoring for a collaborative work cell.

pub mod bridge;
pub mod controller;
pub mod kinematics;
pub mod io;
pub mod kpi;
pub mod perception;
pub mod separation;
pub mod sim;
pub mod stability;
pub mod zones;
