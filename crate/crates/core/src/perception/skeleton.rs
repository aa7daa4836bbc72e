//! Rigid 32-landmark stick figure.

use nalgebra::{Rotation3, Vector3};

use super::{HumanState, Posture};

pub const NUM_LANDMARKS: usize = 32;
pub const SKELETON_RATE: f64 = 30.0;

pub const LANDMARK_NAMES: [&str; NUM_LANDMARKS] = [
    "pelvis",
    "spine_navel",
    "spine_chest",
    "neck",
    "clavicle_left",
    "shoulder_left",
    "elbow_left",
    "wrist_left",
    "hand_left",
    "handtip_left",
    "thumb_left",
    "clavicle_right",
    "shoulder_right",
    "elbow_right",
    "wrist_right",
    "hand_right",
    "handtip_right",
    "thumb_right",
    "hip_left",
    "knee_left",
    "ankle_left",
    "foot_left",
    "hip_right",
    "knee_right",
    "ankle_right",
    "foot_right",
    "head",
    "nose",
    "eye_left",
    "ear_left",
    "eye_right",
    "ear_right",
];

/// (child, parent) pairs.
pub const BONES: [(usize, usize); NUM_LANDMARKS - 1] = [
    (1, 0),
    (2, 1),
    (3, 2),
    (4, 2),
    (5, 4),
    (6, 5),
    (7, 6),
    (8, 7),
    (9, 8),
    (10, 7),
    (11, 2),
    (12, 11),
    (13, 12),
    (14, 13),
    (15, 14),
    (16, 15),
    (17, 14),
    (18, 0),
    (19, 18),
    (20, 19),
    (21, 20),
    (22, 0),
    (23, 22),
    (24, 23),
    (25, 24),
    (26, 3),
    (27, 26),
    (28, 26),
    (29, 26),
    (30, 26),
    (31, 26),
];

const PELVIS: usize = 0;
const SHOULDER_RIGHT: usize = 12;
const WRIST_RIGHT: usize = 14;
const RIGHT_ARM: std::ops::RangeInclusive<usize> = 13..=17;
const LOWER_BODY: std::ops::Range<usize> = 18..26;

const LEAN_ANGLE: f64 = 0.35;
const REACH_DISTANCE: f64 = 0.8;

/// Standing template in the body frame: (forward, left, up), metres.
const TEMPLATE: [[f64; 3]; NUM_LANDMARKS] = [
    [0.0, 0.0, 0.95],
    [0.0, 0.0, 1.10],
    [0.0, 0.0, 1.30],
    [0.0, 0.0, 1.50],
    [0.0, 0.05, 1.45],
    [0.0, 0.19, 1.43],
    [0.0, 0.19, 1.13],
    [0.0, 0.19, 0.88],
    [0.0, 0.19, 0.80],
    [0.0, 0.19, 0.72],
    [0.04, 0.19, 0.78],
    [0.0, -0.05, 1.45],
    [0.0, -0.19, 1.43],
    [0.0, -0.19, 1.13],
    [0.0, -0.19, 0.88],
    [0.0, -0.19, 0.80],
    [0.0, -0.19, 0.72],
    [0.04, -0.19, 0.78],
    [0.0, 0.10, 0.90],
    [0.0, 0.10, 0.50],
    [0.0, 0.10, 0.08],
    [0.12, 0.10, 0.02],
    [0.0, -0.10, 0.90],
    [0.0, -0.10, 0.50],
    [0.0, -0.10, 0.08],
    [0.12, -0.10, 0.02],
    [0.0, 0.0, 1.70],
    [0.09, 0.0, 1.62],
    [0.07, 0.03, 1.66],
    [0.0, 0.07, 1.63],
    [0.07, -0.03, 1.66],
    [0.0, -0.07, 1.63],
];

#[derive(Debug, Clone, PartialEq)]
pub struct SkeletonFrame {
    pub t: f64,
    pub landmarks: [Vector3<f64>; NUM_LANDMARKS],
    pub confidence: [f64; NUM_LANDMARKS],
}

impl SkeletonFrame {
    pub fn landmark(&self, name: &str) -> Option<Vector3<f64>> {
        landmark_index(name).map(|i| self.landmarks[i])
    }
}

pub fn landmark_index(name: &str) -> Option<usize> {
    LANDMARK_NAMES.iter().position(|n| *n == name)
}

fn template(i: usize) -> Vector3<f64> {
    Vector3::from(TEMPLATE[i])
}

/// Forward pitch about the body's left axis; positive tips the point forward.
fn pitch(angle: f64) -> Rotation3<f64> {
    Rotation3::from_axis_angle(&Vector3::y_axis(), angle)
}

fn is_upper_body(i: usize) -> bool {
    i != PELVIS && !LOWER_BODY.contains(&i)
}

/// Landmarks in the body frame for a posture.
fn pose_body(posture: Posture) -> [Vector3<f64>; NUM_LANDMARKS] {
    let mut pts: [Vector3<f64>; NUM_LANDMARKS] = std::array::from_fn(template);
    let pelvis = template(PELVIS);
    let lean = match posture {
        Posture::Standing => 0.0,
        Posture::Leaning => LEAN_ANGLE,
        Posture::Reaching => {
            let torso = template(SHOULDER_RIGHT).z - pelvis.z;
            let arm = template(SHOULDER_RIGHT).z - template(WRIST_RIGHT).z;
            ((REACH_DISTANCE - arm) / torso).clamp(-1.0, 1.0).asin()
        }
    };
    if lean != 0.0 {
        let r = pitch(lean);
        for (i, p) in pts.iter_mut().enumerate() {
            if is_upper_body(i) {
                *p = pelvis + r * (template(i) - pelvis);
            }
        }
    }
    if posture == Posture::Reaching {
        // Arm hangs straight down in the template; a backward quarter pitch
        // of the down vector points it forward.
        let shoulder = pts[SHOULDER_RIGHT];
        let r = pitch(-std::f64::consts::FRAC_PI_2);
        for i in RIGHT_ARM {
            pts[i] = shoulder + r * (template(i) - template(SHOULDER_RIGHT));
        }
    }
    pts
}

/// Reaching and leaning humans face the robot base; others use their heading.
fn facing(human: &HumanState) -> f64 {
    let p = human.position;
    match human.posture {
        Posture::Standing => human.heading,
        _ if p.norm() > 0.0 => (-p.y).atan2(-p.x),
        _ => human.heading,
    }
}

pub fn skeleton_sample(human: &HumanState, t: f64) -> SkeletonFrame {
    let yaw = Rotation3::from_axis_angle(&Vector3::z_axis(), facing(human));
    let ground = Vector3::new(human.position.x, human.position.y, 0.0);
    let body = pose_body(human.posture);
    SkeletonFrame {
        t,
        landmarks: std::array::from_fn(|i| ground + yaw * body[i]),
        confidence: [1.0; NUM_LANDMARKS],
    }
}

pub fn bone_lengths(frame: &SkeletonFrame) -> [f64; NUM_LANDMARKS - 1] {
    std::array::from_fn(|b| {
        let (c, p) = BONES[b];
        (frame.landmarks[c] - frame.landmarks[p]).norm()
    })
}

/// Closest landmark with non-zero confidence; ties go to the lowest index.
pub fn min_distance_tcp(frame: &SkeletonFrame, tcp: &Vector3<f64>) -> Option<(f64, usize)> {
    let mut best: Option<(f64, usize)> = None;
    for (i, p) in frame.landmarks.iter().enumerate() {
        if frame.confidence[i] <= 0.0 {
            continue;
        }
        let d = (p - tcp).norm();
        if best.is_none_or(|(bd, _)| d < bd) {
            best = Some((d, i));
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn names_are_unique() {
        let mut names = LANDMARK_NAMES.to_vec();
        names.sort();
        names.dedup();
        assert_eq!(names.len(), NUM_LANDMARKS);
    }

    #[test]
    fn standing_head_height() {
        let f = skeleton_sample(&HumanState::standing_at(0.0, 0.0), 0.0);
        assert_eq!(f.landmark("head").unwrap().z, 1.7);
    }

    #[test]
    fn postures_keep_bone_lengths() {
        let mut h = HumanState::standing_at(1.2, 0.3);
        let reference = bone_lengths(&skeleton_sample(&h, 0.0));
        for posture in [Posture::Leaning, Posture::Reaching] {
            h.posture = posture;
            let lengths = bone_lengths(&skeleton_sample(&h, 0.0));
            for (a, b) in lengths.iter().zip(&reference) {
                assert!((a - b).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn reaching_wrist_is_ahead() {
        let mut h = HumanState::standing_at(1.5, 0.0);
        h.posture = Posture::Reaching;
        let f = skeleton_sample(&h, 0.0);
        let w = f.landmarks[WRIST_RIGHT];
        assert!((w.x - 0.7).abs() < 1e-9);
    }

    #[test]
    fn zero_confidence_is_ignored() {
        let mut f = skeleton_sample(&HumanState::standing_at(0.0, 0.0), 0.0);
        let head = f.landmarks[26];
        assert_eq!(min_distance_tcp(&f, &head), Some((0.0, 26)));
        f.confidence[26] = 0.0;
        assert_ne!(min_distance_tcp(&f, &head).unwrap().1, 26);
        f.confidence = [0.0; NUM_LANDMARKS];
        assert_eq!(min_distance_tcp(&f, &head), None);
    }
}
