//! BVH motion-capture I/O: parsing, writing, resampling, reference-pose
//! unification, and height normalization.
//!
//! Angles in files are degrees (BVH convention); everything in memory is unit
//! quaternions. Coordinates are centimeters, z-up, ground plane z = 0.
//! Unsupported conventions (End Site with channels, scale channels,
//! translation channels on non-root joints) are rejected loudly.

use crate::error::{Error, Result};
use crate::rot::{self, Axis, EulerOrder, Quat};
use nalgebra::{Matrix3, UnitQuaternion, Vector3};

/// One degree of freedom in a BVH CHANNELS list.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub enum Channel {
    Xposition,
    Yposition,
    Zposition,
    Xrotation,
    Yrotation,
    Zrotation,
}

impl Channel {
    fn parse(tok: &str, line: usize) -> Result<Self> {
        match tok {
            "Xposition" => Ok(Channel::Xposition),
            "Yposition" => Ok(Channel::Yposition),
            "Zposition" => Ok(Channel::Zposition),
            "Xrotation" => Ok(Channel::Xrotation),
            "Yrotation" => Ok(Channel::Yrotation),
            "Zrotation" => Ok(Channel::Zrotation),
            "Xscale" | "Yscale" | "Zscale" => Err(Error::Parse {
                line,
                msg: format!("scale channel `{tok}` is not supported"),
            }),
            other => Err(Error::Parse {
                line,
                msg: format!("unknown channel `{other}`"),
            }),
        }
    }

    fn name(self) -> &'static str {
        match self {
            Channel::Xposition => "Xposition",
            Channel::Yposition => "Yposition",
            Channel::Zposition => "Zposition",
            Channel::Xrotation => "Xrotation",
            Channel::Yrotation => "Yrotation",
            Channel::Zrotation => "Zrotation",
        }
    }

    fn rotation_axis(self) -> Option<Axis> {
        match self {
            Channel::Xrotation => Some(Axis::X),
            Channel::Yrotation => Some(Axis::Y),
            Channel::Zrotation => Some(Axis::Z),
            _ => None,
        }
    }
}

/// A joint in the hierarchy. Parents precede children (topological order).
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct Joint {
    pub name: String,
    pub parent: Option<usize>,
    /// offset from parent, centimeters
    pub offset: Vector3<f64>,
    pub channels: Vec<Channel>,
    /// terminal offset for leaves; zero when the file had none
    pub end_site: Option<Vector3<f64>>,
}

impl Joint {
    pub fn rotation_order(&self) -> Option<EulerOrder> {
        let axes: Vec<Axis> = self.channels.iter().filter_map(|c| c.rotation_axis()).collect();
        if axes.len() == 3 {
            Some([axes[0], axes[1], axes[2]])
        } else {
            None
        }
    }
}

/// Static skeleton description: hierarchy, offsets and reference placement.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct SkeletonSpec {
    pub joints: Vec<Joint>,
    /// root position of the reference (T-) pose
    pub ref_root: Vector3<f64>,
    /// head-top to foot-bottom extent of the reference pose, centimeters
    pub height: f64,
}

impl SkeletonSpec {
    /// Build a spec, normalizing leaf end sites and computing the height.
    pub fn new(mut joints: Vec<Joint>, ref_root: Vector3<f64>) -> Result<Self> {
        if joints.is_empty() {
            return Err(Error::topology("skeleton has no joints"));
        }
        let mut root_count = 0;
        for (i, j) in joints.iter().enumerate() {
            match j.parent {
                None => root_count += 1,
                Some(p) if p >= i => {
                    return Err(Error::topology(format!(
                        "joint {i} `{}` has parent index {p} >= {i}",
                        j.name
                    )))
                }
                _ => {}
            }
            if !j.offset.iter().all(|v| v.is_finite()) {
                return Err(Error::topology(format!("joint `{}` has non-finite offset", j.name)));
            }
        }
        if root_count != 1 {
            return Err(Error::topology(format!("expected exactly 1 root, found {root_count}")));
        }
        let n = joints.len();
        let mut has_child = vec![false; n];
        for j in &joints {
            if let Some(p) = j.parent {
                has_child[p] = true;
            }
        }
        for (i, j) in joints.iter_mut().enumerate() {
            if !has_child[i] && j.end_site.is_none() {
                j.end_site = Some(Vector3::zeros());
            }
        }
        let mut spec = SkeletonSpec {
            joints,
            ref_root,
            height: 0.0,
        };
        spec.height = spec.compute_height();
        if spec.height <= 0.0 {
            return Err(Error::topology("reference pose has zero height"));
        }
        Ok(spec)
    }

    pub fn joint_count(&self) -> usize {
        self.joints.len()
    }

    pub fn root_index(&self) -> usize {
        self.joints.iter().position(|j| j.parent.is_none()).expect("validated root")
    }

    pub fn children(&self, joint: usize) -> Vec<usize> {
        (0..self.joints.len())
            .filter(|&i| self.joints[i].parent == Some(joint))
            .collect()
    }

    pub fn is_leaf(&self, joint: usize) -> bool {
        self.joints.iter().all(|j| j.parent != Some(joint))
    }

    /// World positions of the reference pose (identity rotations, root at
    /// `ref_root`). Row i is joint i.
    pub fn reference_positions(&self) -> Vec<Vector3<f64>> {
        let mut pos = vec![Vector3::zeros(); self.joints.len()];
        for (i, j) in self.joints.iter().enumerate() {
            pos[i] = match j.parent {
                None => self.ref_root,
                Some(p) => pos[p] + j.offset,
            };
        }
        pos
    }

    /// Reference-pose extent: max z minus min z over joints.
    /// The highest reference joint stands in for the head top.
    fn compute_height(&self) -> f64 {
        let pos = self.reference_positions();
        let max = pos.iter().map(|p| p.z).fold(f64::NEG_INFINITY, f64::max);
        let min = pos.iter().map(|p| p.z).fold(f64::INFINITY, f64::min);
        max - min
    }

    pub fn reference_pose(&self) -> ReferencePose {
        ReferencePose {
            positions: self.reference_positions(),
            convention: PoseConvention::TPose,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PoseConvention {
    TPose,
}

/// Canonical-pose joint positions.
#[derive(Debug, Clone)]
pub struct ReferencePose {
    pub positions: Vec<Vector3<f64>>,
    pub convention: PoseConvention,
}

impl ReferencePose {
    /// Feet on the z = 0 plane and root over the origin, within `tol`.
    pub fn is_canonical(&self, root_index: usize, tol: f64) -> bool {
        let min_z = self.positions.iter().map(|p| p.z).fold(f64::INFINITY, f64::min);
        let root = &self.positions[root_index];
        min_z.abs() <= tol && root.x.abs() <= tol && root.y.abs() <= tol
    }
}

/// Per-frame motion on a skeleton: root translation plus T x J local
/// rotations. The root's rotation is `rotations[t][0 .. ]` at the root index.
#[derive(Debug, Clone)]
pub struct MotionClip {
    pub fps: f64,
    /// per-frame root position, centimeters
    pub root_positions: Vec<Vector3<f64>>,
    /// per-frame, per-joint local rotations (T x J)
    pub rotations: Vec<Vec<Quat>>,
}

impl MotionClip {
    pub fn new(fps: f64, root_positions: Vec<Vector3<f64>>, rotations: Vec<Vec<Quat>>) -> Result<Self> {
        if rotations.is_empty() {
            return Err(Error::EmptyMotion);
        }
        if fps <= 0.0 {
            return Err(Error::contract("fps must be positive"));
        }
        if root_positions.len() != rotations.len() {
            return Err(Error::contract("root track and rotation track lengths differ"));
        }
        Ok(MotionClip {
            fps,
            root_positions,
            rotations,
        })
    }

    pub fn frame_count(&self) -> usize {
        self.rotations.len()
    }

    pub fn joint_count(&self) -> usize {
        self.rotations[0].len()
    }

    /// Root position + orientation at frame `t`.
    pub fn root_track(&self, root_index: usize, t: usize) -> (Vector3<f64>, Quat) {
        (self.root_positions[t], self.rotations[t][root_index])
    }

    pub fn validate_against(&self, spec: &SkeletonSpec) -> Result<()> {
        if self.joint_count() != spec.joint_count() {
            return Err(Error::contract(format!(
                "clip has {} joints, skeleton has {}",
                self.joint_count(),
                spec.joint_count()
            )));
        }
        for row in &self.rotations {
            for q in row {
                let n = q.into_inner().norm();
                if (n - 1.0).abs() > 1e-6 {
                    return Err(Error::contract(format!("quaternion norm {n} out of tolerance")));
                }
            }
        }
        Ok(())
    }
}

/// A rotation + translation, validated rigid on construction.
#[derive(Debug, Clone)]
pub struct RigidTransform {
    pub rotation: Quat,
    pub translation: Vector3<f64>,
}

impl RigidTransform {
    pub fn identity() -> Self {
        RigidTransform {
            rotation: Quat::identity(),
            translation: Vector3::zeros(),
        }
    }

    pub fn translation(t: Vector3<f64>) -> Self {
        RigidTransform {
            rotation: Quat::identity(),
            translation: t,
        }
    }

    pub fn new(rotation: Quat, translation: Vector3<f64>) -> Self {
        RigidTransform {
            rotation,
            translation,
        }
    }

    /// Accepts a general 3x3 matrix; rejects non-orthonormal rotation parts
    /// beyond 1e-6.
    pub fn try_from_matrix(m: &Matrix3<f64>, translation: Vector3<f64>) -> Result<Self> {
        let should_be_identity = m.transpose() * m;
        let err = (should_be_identity - Matrix3::identity()).abs().max();
        if err > 1e-6 || (m.determinant() - 1.0).abs() > 1e-6 {
            return Err(Error::contract(format!(
                "transform is not rigid (orthonormality error {err:.2e})"
            )));
        }
        Ok(RigidTransform {
            rotation: UnitQuaternion::from_matrix(m),
            translation,
        })
    }

    pub fn apply_point(&self, p: &Vector3<f64>) -> Vector3<f64> {
        self.rotation * p + self.translation
    }

    pub fn inverse(&self) -> Self {
        let inv_rot = self.rotation.inverse();
        RigidTransform {
            rotation: inv_rot,
            translation: -(inv_rot * self.translation),
        }
    }
}

// ---------------------------------------------------------------------------
// parsing

struct Tokens<'a> {
    toks: Vec<(usize, &'a str)>,
    pos: usize,
}

impl<'a> Tokens<'a> {
    fn new(text: &'a str) -> Self {
        let mut toks = Vec::new();
        for (ln, line) in text.lines().enumerate() {
            for tok in line.split_whitespace() {
                toks.push((ln + 1, tok));
            }
        }
        Tokens { toks, pos: 0 }
    }

    fn peek(&self) -> Option<(usize, &'a str)> {
        self.toks.get(self.pos).copied()
    }

    fn next(&mut self) -> Option<(usize, &'a str)> {
        let t = self.toks.get(self.pos).copied();
        self.pos += 1;
        t
    }

    fn line(&self) -> usize {
        self.toks
            .get(self.pos.min(self.toks.len().saturating_sub(1)))
            .map(|t| t.0)
            .unwrap_or(0)
    }

    fn expect(&mut self, word: &str) -> Result<usize> {
        match self.next() {
            Some((ln, t)) if t == word => Ok(ln),
            Some((ln, t)) => Err(Error::Parse {
                line: ln,
                msg: format!("expected `{word}`, found `{t}`"),
            }),
            None => Err(Error::Parse {
                line: self.line(),
                msg: format!("expected `{word}`, found end of input"),
            }),
        }
    }

    fn number(&mut self) -> Result<f64> {
        match self.next() {
            Some((ln, t)) => t.parse::<f64>().map_err(|_| Error::Parse {
                line: ln,
                msg: format!("expected a number, found `{t}`"),
            }),
            None => Err(Error::Parse {
                line: self.line(),
                msg: "expected a number, found end of input".into(),
            }),
        }
    }

    fn integer(&mut self) -> Result<usize> {
        match self.next() {
            Some((ln, t)) => t.parse::<usize>().map_err(|_| Error::Parse {
                line: ln,
                msg: format!("expected an integer, found `{t}`"),
            }),
            None => Err(Error::Parse {
                line: self.line(),
                msg: "expected an integer, found end of input".into(),
            }),
        }
    }
}

fn parse_offset(toks: &mut Tokens) -> Result<Vector3<f64>> {
    toks.expect("OFFSET")?;
    Ok(Vector3::new(toks.number()?, toks.number()?, toks.number()?))
}

fn parse_joint_body(
    toks: &mut Tokens,
    joints: &mut Vec<Joint>,
    me: usize,
) -> Result<()> {
    toks.expect("{")?;
    joints[me].offset = parse_offset(toks)?;
    if let Some((_, "CHANNELS")) = toks.peek() {
        toks.next();
        let n = toks.integer()?;
        for _ in 0..n {
            let (ln, t) = toks.next().ok_or(Error::Parse {
                line: toks.line(),
                msg: "unexpected end of CHANNELS list".into(),
            })?;
            let ch = Channel::parse(t, ln)?;
            if matches!(ch, Channel::Xposition | Channel::Yposition | Channel::Zposition)
                && joints[me].parent.is_some()
            {
                return Err(Error::Parse {
                    line: ln,
                    msg: format!(
                        "translation channel on non-root joint `{}` is not supported",
                        joints[me].name
                    ),
                });
            }
            joints[me].channels.push(ch);
        }
    }
    loop {
        match toks.peek() {
            Some((_, "JOINT")) => {
                toks.next();
                let (ln, name) = toks.next().ok_or(Error::Parse {
                    line: toks.line(),
                    msg: "JOINT without a name".into(),
                })?;
                let _ = ln;
                let child = joints.len();
                joints.push(Joint {
                    name: name.to_string(),
                    parent: Some(me),
                    offset: Vector3::zeros(),
                    channels: Vec::new(),
                    end_site: None,
                });
                parse_joint_body(toks, joints, child)?;
            }
            Some((_, "End")) => {
                toks.next();
                toks.expect("Site")?;
                let ln = toks.expect("{")?;
                let off = parse_offset(toks)?;
                if let Some((cl, "CHANNELS")) = toks.peek() {
                    return Err(Error::Parse {
                        line: cl,
                        msg: "End Site with channels is not supported".into(),
                    });
                }
                let _ = ln;
                toks.expect("}")?;
                joints[me].end_site = Some(off);
            }
            Some((_, "}")) => {
                toks.next();
                return Ok(());
            }
            Some((ln, t)) => {
                return Err(Error::Parse {
                    line: ln,
                    msg: format!("unexpected token `{t}` in joint body"),
                })
            }
            None => {
                return Err(Error::Parse {
                    line: toks.line(),
                    msg: "unbalanced braces: hierarchy ended inside a joint".into(),
                })
            }
        }
    }
}

/// Parse BVH text into a skeleton and a motion clip.
///
/// The reference root defaults to the first frame's root position.
pub fn parse_bvh(text: &str) -> Result<(SkeletonSpec, MotionClip)> {
    let mut toks = Tokens::new(text);
    toks.expect("HIERARCHY")?;
    toks.expect("ROOT")?;
    let (_, root_name) = toks.next().ok_or(Error::Parse {
        line: toks.line(),
        msg: "ROOT without a name".into(),
    })?;
    let mut joints = vec![Joint {
        name: root_name.to_string(),
        parent: None,
        offset: Vector3::zeros(),
        channels: Vec::new(),
        end_site: None,
    }];
    parse_joint_body(&mut toks, &mut joints, 0)?;

    toks.expect("MOTION")?;
    toks.expect("Frames:")?;
    let frames = toks.integer()?;
    if frames == 0 {
        return Err(Error::EmptyMotion);
    }
    // "Frame Time:" splits into two tokens
    toks.expect("Frame")?;
    toks.expect("Time:")?;
    let frame_time = toks.number()?;
    if frame_time <= 0.0 {
        return Err(Error::Parse {
            line: toks.line(),
            msg: "non-positive frame time".into(),
        });
    }

    let per_frame: usize = joints.iter().map(|j| j.channels.len()).sum();
    let mut values = Vec::with_capacity(frames * per_frame);
    for frame in 0..frames {
        for k in 0..per_frame {
            match toks.next() {
                Some((ln, t)) => {
                    let v = t.parse::<f64>().map_err(|_| Error::Parse {
                        line: ln,
                        msg: format!("bad motion value `{t}`"),
                    })?;
                    values.push(v);
                }
                None => {
                    return Err(Error::Frame {
                        frame,
                        expected: per_frame,
                        got: k,
                    })
                }
            }
        }
    }
    if toks.peek().is_some() {
        let extra = toks.toks.len() - toks.pos;
        return Err(Error::Frame {
            frame: frames,
            expected: 0,
            got: extra,
        });
    }

    let mut root_positions = Vec::with_capacity(frames);
    let mut rotations = Vec::with_capacity(frames);
    for f in 0..frames {
        let mut cursor = f * per_frame;
        let mut root_pos = Vector3::zeros();
        let mut frame_rots = Vec::with_capacity(joints.len());
        for joint in &joints {
            let mut q = Quat::identity();
            for ch in &joint.channels {
                let v = values[cursor];
                cursor += 1;
                match ch {
                    Channel::Xposition => root_pos.x = v,
                    Channel::Yposition => root_pos.y = v,
                    Channel::Zposition => root_pos.z = v,
                    rot_ch => {
                        let axis = rot_ch.rotation_axis().expect("rotation channel");
                        q *= rot::quat_about(axis, v);
                    }
                }
            }
            frame_rots.push(q);
        }
        root_positions.push(root_pos);
        rotations.push(frame_rots);
    }

    let ref_root = root_positions[0];
    let spec = SkeletonSpec::new(joints, ref_root)?;
    let clip = MotionClip::new(1.0 / frame_time, root_positions, rotations)?;
    Ok((spec, clip))
}

// ---------------------------------------------------------------------------
// writing

fn fmt6(v: f64) -> String {
    // avoid "-0.000000"
    let s = format!("{:.6}", v);
    if s == "-0.000000" {
        "0.000000".to_string()
    } else {
        s
    }
}

fn write_joint(
    out: &mut String,
    spec: &SkeletonSpec,
    joint: usize,
    depth: usize,
) {
    let indent = "\t".repeat(depth);
    let j = &spec.joints[joint];
    if j.parent.is_none() {
        out.push_str(&format!("ROOT {}\n", j.name));
    } else {
        out.push_str(&format!("{indent}JOINT {}\n", j.name));
    }
    out.push_str(&format!("{indent}{{\n"));
    let inner = "\t".repeat(depth + 1);
    out.push_str(&format!(
        "{inner}OFFSET {} {} {}\n",
        fmt6(j.offset.x),
        fmt6(j.offset.y),
        fmt6(j.offset.z)
    ));
    if !j.channels.is_empty() {
        out.push_str(&format!("{inner}CHANNELS {}", j.channels.len()));
        for c in &j.channels {
            out.push(' ');
            out.push_str(c.name());
        }
        out.push('\n');
    }
    let children = spec.children(joint);
    if children.is_empty() {
        let es = j.end_site.unwrap_or_else(Vector3::zeros);
        out.push_str(&format!("{inner}End Site\n{inner}{{\n"));
        out.push_str(&format!(
            "{inner}\tOFFSET {} {} {}\n",
            fmt6(es.x),
            fmt6(es.y),
            fmt6(es.z)
        ));
        out.push_str(&format!("{inner}}}\n"));
    } else {
        for c in children {
            write_joint(out, spec, c, depth + 1);
        }
    }
    out.push_str(&format!("{indent}}}\n"));
}

/// Serialize to BVH text. Channel values use 6 decimal places, the frame time
/// 8, which re-parses equal within 1e-5 per channel.
pub fn write_bvh(spec: &SkeletonSpec, clip: &MotionClip) -> Result<String> {
    clip.validate_against(spec)?;
    let mut out = String::new();
    out.push_str("HIERARCHY\n");
    write_joint(&mut out, spec, spec.root_index(), 0);
    out.push_str("MOTION\n");
    out.push_str(&format!("Frames: {}\n", clip.frame_count()));
    out.push_str(&format!("Frame Time: {:.8}\n", 1.0 / clip.fps));
    for t in 0..clip.frame_count() {
        let mut vals: Vec<String> = Vec::new();
        for (ji, j) in spec.joints.iter().enumerate() {
            let euler = j
                .rotation_order()
                .map(|order| rot::euler_deg_from_quat(order, &clip.rotations[t][ji]));
            let mut rot_cursor = 0usize;
            for ch in &j.channels {
                let v = match ch {
                    Channel::Xposition => clip.root_positions[t].x,
                    Channel::Yposition => clip.root_positions[t].y,
                    Channel::Zposition => clip.root_positions[t].z,
                    _ => {
                        let e = euler.as_ref().ok_or_else(|| {
                            Error::contract(format!(
                                "joint `{}` has rotation channels but not a full triple",
                                j.name
                            ))
                        })?;
                        let v = e[rot_cursor];
                        rot_cursor += 1;
                        v
                    }
                };
                vals.push(fmt6(v));
            }
        }
        out.push_str(&vals.join(" "));
        out.push('\n');
    }
    Ok(out)
}

// ---------------------------------------------------------------------------
// resample / unify / normalize

/// Resample to `target_fps`: positions lerp, rotations shortest-arc slerp.
/// Duration is preserved within one output frame period.
pub fn resample(clip: &MotionClip, target_fps: f64) -> Result<MotionClip> {
    if target_fps <= 0.0 {
        return Err(Error::contract("target fps must be positive"));
    }
    if (target_fps - clip.fps).abs() < 1e-12 {
        return Ok(clip.clone());
    }
    let t_src = clip.frame_count();
    let duration = (t_src as f64 - 1.0) / clip.fps;
    let t_out = ((duration * target_fps).round() as usize) + 1;
    let mut root_positions = Vec::with_capacity(t_out);
    let mut rotations = Vec::with_capacity(t_out);
    for f in 0..t_out {
        let s = (f as f64 / target_fps) * clip.fps;
        let i0 = (s.floor() as usize).min(t_src - 1);
        let i1 = (i0 + 1).min(t_src - 1);
        let alpha = (s - i0 as f64).clamp(0.0, 1.0);
        root_positions.push(clip.root_positions[i0].lerp(&clip.root_positions[i1], alpha));
        let row: Vec<Quat> = (0..clip.joint_count())
            .map(|j| rot::slerp_shortest(&clip.rotations[i0][j], &clip.rotations[i1][j], alpha))
            .collect();
        rotations.push(row);
    }
    MotionClip::new(target_fps, root_positions, rotations)
}

/// Apply a rigid reference-pose transfer: the root track (position and
/// orientation) moves by Q; joint-local rotations other than the root are
/// untouched. Returns the transformed spec (reference root moves too) and clip.
pub fn unify_reference_pose(
    spec: &SkeletonSpec,
    clip: &MotionClip,
    q: &RigidTransform,
) -> Result<(SkeletonSpec, MotionClip)> {
    clip.validate_against(spec)?;
    let root = spec.root_index();
    let mut out = clip.clone();
    for t in 0..out.frame_count() {
        out.root_positions[t] = q.apply_point(&out.root_positions[t]);
        out.rotations[t][root] = q.rotation * out.rotations[t][root];
    }
    let mut new_spec = spec.clone();
    new_spec.ref_root = q.apply_point(&spec.ref_root);
    Ok((new_spec, out))
}

/// The transfer that puts this skeleton's reference pose in canonical
/// placement: lowest reference joint on z = 0 and root over the origin.
pub fn canonical_transfer(spec: &SkeletonSpec) -> RigidTransform {
    let pos = spec.reference_positions();
    let min_z = pos.iter().map(|p| p.z).fold(f64::INFINITY, f64::min);
    let root = spec.ref_root;
    RigidTransform::translation(Vector3::new(-root.x, -root.y, -min_z))
}

/// Scale offsets, reference root and the root track by 1 / height so the
/// skeleton has unit height. Rotations are untouched.
pub fn normalize_height(spec: &SkeletonSpec, clip: &MotionClip) -> Result<(SkeletonSpec, MotionClip)> {
    if spec.height <= 0.0 {
        return Err(Error::contract("cannot normalize a zero-height skeleton"));
    }
    let s = 1.0 / spec.height;
    let mut joints = spec.joints.clone();
    for j in &mut joints {
        j.offset *= s;
        if let Some(es) = j.end_site.as_mut() {
            *es *= s;
        }
    }
    let new_spec = SkeletonSpec::new(joints, spec.ref_root * s)?;
    let mut new_clip = clip.clone();
    for p in &mut new_clip.root_positions {
        *p *= s;
    }
    Ok((new_spec, new_clip))
}
