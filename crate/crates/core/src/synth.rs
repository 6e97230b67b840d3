//! Synthetic paired-skeleton gesture corpus.
//!
//! Two toy bipeds share ground-truth correspondence: skeleton B subdivides
//! skeleton A's arm bones, so identical shoulder rotations (with identity
//! elbows) produce identical end-effector paths. Motions are beat-locked arm
//! swings with style-dependent amplitude, so the paired feature tracks carry
//! real speech-gesture correlation. Everything is a pure function of the seed.

use crate::bvh::{Channel, Joint, MotionClip, SkeletonSpec};
use crate::error::Result;
use crate::rot::{self, Axis, Quat};
use nalgebra::Vector3;
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use std::fmt;
use std::path::Path;

/// The seven style labels; the synthetic corpus uses the first three.
pub const STYLES: [&str; 7] = ["happy", "sad", "neutral", "old", "relaxed", "angry", "still"];
pub const SYNTH_STYLES: [&str; 3] = ["happy", "neutral", "still"];

/// One-hot index of a style name.
pub fn style_index(name: &str) -> Option<usize> {
    STYLES.iter().position(|&s| s == name)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
pub enum SkeletonId {
    A,
    B,
}

impl SkeletonId {
    pub fn tag(self) -> &'static str {
        match self {
            SkeletonId::A => "a",
            SkeletonId::B => "b",
        }
    }
    pub fn all() -> [SkeletonId; 2] {
        [SkeletonId::A, SkeletonId::B]
    }
}

impl fmt::Display for SkeletonId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.tag())
    }
}

impl std::str::FromStr for SkeletonId {
    type Err = crate::Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_lowercase().as_str() {
            "a" => Ok(SkeletonId::A),
            "b" => Ok(SkeletonId::B),
            other => Err(crate::Error::config(format!("unknown skeleton id `{other}`"))),
        }
    }
}

fn root_joint(name: &str) -> Joint {
    Joint {
        name: name.into(),
        parent: None,
        offset: Vector3::zeros(),
        channels: vec![
            Channel::Xposition,
            Channel::Yposition,
            Channel::Zposition,
            Channel::Zrotation,
            Channel::Xrotation,
            Channel::Yrotation,
        ],
        end_site: None,
    }
}

fn joint(name: &str, parent: usize, offset: [f64; 3]) -> Joint {
    Joint {
        name: name.into(),
        parent: Some(parent),
        offset: Vector3::new(offset[0], offset[1], offset[2]),
        channels: vec![Channel::Zrotation, Channel::Xrotation, Channel::Yrotation],
        end_site: None,
    }
}

fn leaf(name: &str, parent: usize, offset: [f64; 3], end: [f64; 3]) -> Joint {
    let mut j = joint(name, parent, offset);
    j.end_site = Some(Vector3::new(end[0], end[1], end[2]));
    j
}

/// Toy biped A: 11 joints, 5 end-effector leaves, height 95 cm.
pub fn skeleton_a() -> SkeletonSpec {
    let joints = vec![
        root_joint("Hips"),
        joint("Spine", 0, [0.0, 0.0, 20.0]),
        leaf("Head", 1, [0.0, 0.0, 25.0], [0.0, 0.0, 10.0]),
        joint("LeftArm", 1, [10.0, 0.0, 15.0]),
        leaf("LeftHand", 3, [30.0, 0.0, 0.0], [5.0, 0.0, 0.0]),
        joint("RightArm", 1, [-10.0, 0.0, 15.0]),
        leaf("RightHand", 5, [-30.0, 0.0, 0.0], [-5.0, 0.0, 0.0]),
        joint("LeftLeg", 0, [9.0, 0.0, -5.0]),
        leaf("LeftFoot", 7, [0.0, 0.0, -45.0], [0.0, 5.0, 0.0]),
        joint("RightLeg", 0, [-9.0, 0.0, -5.0]),
        leaf("RightFoot", 9, [0.0, 0.0, -45.0], [0.0, 5.0, 0.0]),
    ];
    SkeletonSpec::new(joints, Vector3::new(0.0, 0.0, 50.0)).expect("valid toy skeleton A")
}

/// Toy biped B: skeleton A with each arm bone split in two (13 joints).
pub fn skeleton_b() -> SkeletonSpec {
    let joints = vec![
        root_joint("Hips"),
        joint("Spine", 0, [0.0, 0.0, 20.0]),
        leaf("Head", 1, [0.0, 0.0, 25.0], [0.0, 0.0, 10.0]),
        joint("LeftArm", 1, [10.0, 0.0, 15.0]),
        joint("LeftForeArm", 3, [15.0, 0.0, 0.0]),
        leaf("LeftHand", 4, [15.0, 0.0, 0.0], [5.0, 0.0, 0.0]),
        joint("RightArm", 1, [-10.0, 0.0, 15.0]),
        joint("RightForeArm", 6, [-15.0, 0.0, 0.0]),
        leaf("RightHand", 7, [-15.0, 0.0, 0.0], [-5.0, 0.0, 0.0]),
        joint("LeftLeg", 0, [9.0, 0.0, -5.0]),
        leaf("LeftFoot", 9, [0.0, 0.0, -45.0], [0.0, 5.0, 0.0]),
        joint("RightLeg", 0, [-9.0, 0.0, -5.0]),
        leaf("RightFoot", 11, [0.0, 0.0, -45.0], [0.0, 5.0, 0.0]),
    ];
    SkeletonSpec::new(joints, Vector3::new(0.0, 0.0, 50.0)).expect("valid toy skeleton B")
}

pub fn skeleton(id: SkeletonId) -> SkeletonSpec {
    match id {
        SkeletonId::A => skeleton_a(),
        SkeletonId::B => skeleton_b(),
    }
}

/// Swing amplitude in degrees per style.
fn style_amplitude(style: &str) -> f64 {
    match style {
        "happy" => 40.0,
        "neutral" => 25.0,
        "still" => 8.0,
        "angry" => 45.0,
        "sad" => 12.0,
        "old" => 10.0,
        "relaxed" => 18.0,
        _ => 25.0,
    }
}

/// Per-clip generation parameters, drawn deterministically per clip index.
#[derive(Debug, Clone)]
pub struct ClipParams {
    pub style: String,
    /// swing period in frames
    pub period: f64,
    pub phase: f64,
    pub amp_deg: f64,
    /// secondary texture component weights
    pub texture: [f64; 3],
    /// root bob amplitude, cm
    pub bob: f64,
}

impl ClipParams {
    pub fn draw(seed: u64, clip_index: usize) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ (0x5EED_0000 + clip_index as u64));
        let style = SYNTH_STYLES[clip_index % SYNTH_STYLES.len()].to_string();
        let period = *[20.0, 24.0, 30.0].choose(&mut rng).unwrap();
        let phase = rng.gen_range(0.0..std::f64::consts::TAU);
        let amp_deg = style_amplitude(&style) * rng.gen_range(0.85..1.15);
        let texture = [
            rng.gen_range(-1.0..1.0),
            rng.gen_range(-1.0..1.0),
            rng.gen_range(-1.0..1.0),
        ];
        let bob = rng.gen_range(0.2..0.6);
        ClipParams {
            style,
            period,
            phase,
            amp_deg,
            texture,
            bob,
        }
    }

    /// Beat times (seconds): the swing extremes.
    pub fn beat_times(&self, frames: usize, fps: f64) -> Vec<f64> {
        // extremes of sin(tau * t / period + phase): tau*t/P + phase = pi/2 + k*pi
        let mut beats = Vec::new();
        let mut k = -8i64;
        loop {
            let t = self.period * (std::f64::consts::FRAC_PI_2 + k as f64 * std::f64::consts::PI
                - self.phase)
                / std::f64::consts::TAU;
            if t >= frames as f64 {
                break;
            }
            if t >= 0.0 {
                beats.push(t / fps);
            }
            k += 1;
        }
        beats
    }
}

/// Generate one clip of procedural motion on the given skeleton.
///
/// Corresponding clips on A and B share end-effector FK paths exactly:
/// the inserted forearm joints stay at identity.
pub fn generate_clip(id: SkeletonId, params: &ClipParams, frames: usize, fps: f64) -> MotionClip {
    let tau = std::f64::consts::TAU;
    let mut root_positions = Vec::with_capacity(frames);
    let mut rotations = Vec::with_capacity(frames);
    for f in 0..frames {
        let t = f as f64;
        let swing = (tau * t / params.period + params.phase).sin();
        let swing2 = (tau * t / (params.period * 2.0) + params.phase * 0.5).sin();
        let amp = params.amp_deg;
        let arm_l = amp * swing;
        let arm_r = -amp * swing + 0.3 * amp * params.texture[0] * swing2;
        let spine_sway = 0.12 * amp * (tau * t / params.period + params.phase + 0.7).sin();
        let head_nod = 2.0 * params.texture[1] * swing2;
        let hand_wave = 0.25 * amp * (tau * t / params.period + params.phase + 0.25 * tau).sin();
        let root_z = 50.0 + params.bob * (2.0 * tau * t / params.period).sin();
        let root_x = 0.8 * params.texture[2] * swing2;

        let q_spine = rot::quat_about(Axis::X, spine_sway);
        let q_head = rot::quat_about(Axis::X, head_nod);
        // arms swing forward/back about the local z (vertical) axis in T-pose
        let q_arm_l = rot::quat_about(Axis::Z, arm_l) * rot::quat_about(Axis::Y, 0.2 * arm_l);
        let q_arm_r = rot::quat_about(Axis::Z, arm_r) * rot::quat_about(Axis::Y, -0.2 * arm_r);
        let q_hand_l = rot::quat_about(Axis::X, hand_wave);
        let q_hand_r = rot::quat_about(Axis::X, -hand_wave);
        let id_q = Quat::identity();

        let row = match id {
            SkeletonId::A => vec![
                id_q, q_spine, q_head, q_arm_l, q_hand_l, q_arm_r, q_hand_r, id_q, id_q, id_q,
                id_q,
            ],
            SkeletonId::B => vec![
                id_q, q_spine, q_head, q_arm_l, id_q, q_hand_l, q_arm_r, id_q, q_hand_r, id_q,
                id_q, id_q, id_q,
            ],
        };
        root_positions.push(Vector3::new(root_x, 0.0, root_z));
        rotations.push(row);
    }
    MotionClip::new(fps, root_positions, rotations).expect("frames >= 1")
}

/// Audio-style feature track aligned with a clip: (frames x dim).
///
/// Channel 0 is a beat pulse, channel 1 the swing-amplitude envelope, the
/// rest smooth per-clip noise. Correlates with the motion by construction.
pub fn generate_audio_features(
    params: &ClipParams,
    frames: usize,
    fps: f64,
    dim: usize,
    seed: u64,
    clip_index: usize,
) -> ndarray::Array2<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ (0xA0D10_000 + clip_index as u64));
    let beats = params.beat_times(frames, fps);
    let tau = std::f64::consts::TAU;
    let mut out = ndarray::Array2::zeros((frames, dim));
    // random slow fourier components for the noise channels
    let comps: Vec<(f64, f64, f64)> = (0..dim.saturating_sub(2))
        .map(|_| {
            (
                rng.gen_range(0.01..0.08),
                rng.gen_range(0.0..tau),
                rng.gen_range(0.3..1.0),
            )
        })
        .collect();
    for f in 0..frames {
        let t_sec = f as f64 / fps;
        let nearest = beats
            .iter()
            .map(|b| (b - t_sec).abs())
            .fold(f64::INFINITY, f64::min);
        let sigma = 2.0 / fps;
        out[(f, 0)] = (-nearest * nearest / (2.0 * sigma * sigma)).exp();
        if dim > 1 {
            let swing = (tau * f as f64 / params.period + params.phase).sin();
            out[(f, 1)] = params.amp_deg / 45.0 * (0.5 + 0.5 * swing);
        }
        for (c, &(freq, ph, scale)) in comps.iter().enumerate() {
            out[(f, c + 2)] = scale * (tau * freq * f as f64 + ph).sin();
        }
    }
    out
}

/// Specification of a synthetic corpus.
#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
pub struct SynthSpec {
    pub n_clips: usize,
    pub frames_per_clip: usize,
    pub fps: f64,
    pub audio_dim: usize,
    pub seed: u64,
}

impl Default for SynthSpec {
    fn default() -> Self {
        SynthSpec {
            n_clips: 200,
            frames_per_clip: 160,
            fps: 30.0,
            audio_dim: 8,
            seed: 17,
        }
    }
}

/// Write the paired corpus: per skeleton, per clip, a BVH file plus audio
/// features (CSV), beat times, and a style label.
pub fn synth_corpus(spec: &SynthSpec, dir: &Path) -> Result<()> {
    for id in SkeletonId::all() {
        let skel_dir = dir.join(format!("skeleton_{id}"));
        std::fs::create_dir_all(&skel_dir)?;
        let skel = skeleton(id);
        for i in 0..spec.n_clips {
            let params = ClipParams::draw(spec.seed, i);
            let clip = generate_clip(id, &params, spec.frames_per_clip, spec.fps);
            let text = crate::bvh::write_bvh(&skel, &clip)?;
            std::fs::write(skel_dir.join(format!("clip_{i:04}.bvh")), text)?;

            let audio =
                generate_audio_features(&params, spec.frames_per_clip, spec.fps, spec.audio_dim, spec.seed, i);
            let mut audio_text = String::from("# unigest audio features v1\n");
            for row in audio.rows() {
                let vals: Vec<String> = row.iter().map(|v| format!("{v:.9}")).collect();
                audio_text.push_str(&vals.join(","));
                audio_text.push('\n');
            }
            std::fs::write(skel_dir.join(format!("clip_{i:04}.audio.csv")), audio_text)?;

            let beats = params.beat_times(spec.frames_per_clip, spec.fps);
            let beat_text: String = beats.iter().map(|b| format!("{b:.9}\n")).collect();
            std::fs::write(skel_dir.join(format!("clip_{i:04}.beats.txt")), beat_text)?;
            std::fs::write(skel_dir.join(format!("clip_{i:04}.style.txt")), &params.style)?;
        }
    }
    Ok(())
}

/// Read back one clip's audio feature track.
pub fn read_audio_features(path: &Path) -> Result<ndarray::Array2<f64>> {
    let text = std::fs::read_to_string(path)?;
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (ln, line) in text.lines().enumerate() {
        if line.starts_with('#') || line.trim().is_empty() {
            continue;
        }
        let row: std::result::Result<Vec<f64>, _> =
            line.split(',').map(|v| v.trim().parse::<f64>()).collect();
        let row = row.map_err(|e| crate::Error::Parse {
            line: ln + 1,
            msg: format!("bad audio feature value: {e}"),
        })?;
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(crate::Error::contract("empty audio feature file"));
    }
    let dim = rows[0].len();
    let mut out = ndarray::Array2::zeros((rows.len(), dim));
    for (i, row) in rows.iter().enumerate() {
        if row.len() != dim {
            return Err(crate::Error::contract("ragged audio feature file"));
        }
        for (j, &v) in row.iter().enumerate() {
            out[(i, j)] = v;
        }
    }
    Ok(out)
}
