//! Skeleton graphs: distance-d edge adjacency, end-effector detection,
//! forward kinematics, and the pooling map down to the 7-node primal skeleton
//! (5 end-effectors + 2 mid-nodes).

use crate::bvh::{MotionClip, SkeletonSpec};
use crate::error::{Error, Result};
use crate::rot::Quat;
use nalgebra::Vector3;
use ndarray::Array3;
use std::collections::BTreeSet;

/// Role of a primal node.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub enum NodeRole {
    Head,
    LeftHand,
    RightHand,
    LeftFoot,
    RightFoot,
    Mid,
}

pub const PRIMAL_NODES: usize = 7;
pub const END_EFFECTORS: usize = 5;

/// End-effector joints in canonical order: head, L hand, R hand, L foot, R foot.
pub type EndEffectors = [usize; END_EFFECTORS];

/// Edge-centric view of a skeleton. Edge `i` is the bone ending at non-root
/// joint `child_of(i)`; edges are ordered by child joint index.
#[derive(Debug, Clone)]
pub struct SkeletonGraph {
    /// (parent joint, child joint) per edge
    pub edges: Vec<(usize, usize)>,
    /// joint index -> edge index of the bone ending at that joint
    edge_of_joint: Vec<Option<usize>>,
    pub end_effectors: EndEffectors,
    /// root-to-end-effector joint paths, one per end-effector, same order
    pub chains: Vec<Vec<usize>>,
    joint_depth: Vec<usize>,
}

impl SkeletonGraph {
    pub fn new(spec: &SkeletonSpec) -> Result<Self> {
        let n = spec.joint_count();
        let mut edges = Vec::with_capacity(n.saturating_sub(1));
        let mut edge_of_joint = vec![None; n];
        for (j, joint) in spec.joints.iter().enumerate() {
            if let Some(p) = joint.parent {
                edge_of_joint[j] = Some(edges.len());
                edges.push((p, j));
            }
        }
        if edges.len() + 1 != n {
            return Err(Error::topology("skeleton is not a tree"));
        }
        let mut joint_depth = vec![0usize; n];
        for (j, joint) in spec.joints.iter().enumerate() {
            if let Some(p) = joint.parent {
                joint_depth[j] = joint_depth[p] + 1;
            }
        }
        let end_effectors = find_end_effectors(spec)?;
        let chains = end_effectors
            .iter()
            .map(|&ee| {
                let mut path = vec![ee];
                let mut cur = ee;
                while let Some(p) = spec.joints[cur].parent {
                    path.push(p);
                    cur = p;
                }
                path.reverse();
                path
            })
            .collect();
        Ok(SkeletonGraph {
            edges,
            edge_of_joint,
            end_effectors,
            chains,
            joint_depth,
        })
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    pub fn edge_of_joint(&self, joint: usize) -> Option<usize> {
        self.edge_of_joint[joint]
    }

    /// Depth of an edge = depth of its parent joint (root edges have depth 0).
    pub fn edge_depth(&self, edge: usize) -> usize {
        self.joint_depth[self.edges[edge].0]
    }

    /// Edge indices of the bones ending at the end-effector joints.
    pub fn end_effector_edges(&self) -> [usize; END_EFFECTORS] {
        let mut out = [0; END_EFFECTORS];
        for (k, &ee) in self.end_effectors.iter().enumerate() {
            out[k] = self.edge_of_joint[ee].expect("end-effector is non-root");
        }
        out
    }

    fn edges_adjacent(&self, a: usize, b: usize) -> bool {
        let (pa, ca) = self.edges[a];
        let (pb, cb) = self.edges[b];
        pa == pb || pa == cb || ca == pb || ca == cb
    }
}

/// For each edge, every edge at tree distance <= d (including itself).
/// Distance = minimum number of hops in the edge-adjacency graph.
pub fn build_adjacency(graph: &SkeletonGraph, d: usize) -> Vec<Vec<usize>> {
    let e = graph.edge_count();
    let mut neighbor: Vec<Vec<usize>> = vec![Vec::new(); e];
    for a in 0..e {
        for b in 0..e {
            if a != b && graph.edges_adjacent(a, b) {
                neighbor[a].push(b);
            }
        }
    }
    (0..e)
        .map(|start| {
            let mut dist = vec![usize::MAX; e];
            dist[start] = 0;
            let mut queue = std::collections::VecDeque::from([start]);
            while let Some(cur) = queue.pop_front() {
                if dist[cur] == d {
                    continue;
                }
                for &nb in &neighbor[cur] {
                    if dist[nb] == usize::MAX {
                        dist[nb] = dist[cur] + 1;
                        queue.push_back(nb);
                    }
                }
            }
            (0..e).filter(|&i| dist[i] <= d).collect()
        })
        .collect()
}

fn name_matches(name: &str, keys: &[&str]) -> bool {
    let lower = name.to_lowercase();
    keys.iter().any(|k| lower.contains(k))
}

fn is_left_name(name: &str) -> Option<bool> {
    let lower = name.to_lowercase();
    if lower.contains("left") || lower.starts_with("l_") || lower.starts_with("l.") {
        return Some(true);
    }
    if lower.contains("right") || lower.starts_with("r_") || lower.starts_with("r.") {
        return Some(false);
    }
    None
}

/// Classify the five end-effectors: by name when the names are unambiguous,
/// otherwise by reference-pose geometry (highest leaf = head, two lowest =
/// feet, remaining two = hands split by x sign, left = +x).
pub fn find_end_effectors(spec: &SkeletonSpec) -> Result<EndEffectors> {
    let leaves: Vec<usize> = (0..spec.joint_count()).filter(|&j| spec.is_leaf(j)).collect();
    if leaves.len() < END_EFFECTORS {
        return Err(Error::topology(format!(
            "need at least {END_EFFECTORS} leaves, found {}",
            leaves.len()
        )));
    }

    // name pass
    let mut head = Vec::new();
    let mut hands: Vec<(usize, Option<bool>)> = Vec::new();
    let mut feet: Vec<(usize, Option<bool>)> = Vec::new();
    for &leaf in &leaves {
        let name = &spec.joints[leaf].name;
        if name_matches(name, &["head"]) {
            head.push(leaf);
        } else if name_matches(name, &["hand", "wrist"]) {
            hands.push((leaf, is_left_name(name)));
        } else if name_matches(name, &["foot", "ankle", "toe"]) {
            feet.push((leaf, is_left_name(name)));
        }
    }
    let name_pass = head.len() == 1
        && hands.len() == 2
        && feet.len() == 2
        && hands.iter().all(|h| h.1.is_some())
        && feet.iter().all(|f| f.1.is_some())
        && hands[0].1 != hands[1].1
        && feet[0].1 != feet[1].1;
    if name_pass {
        let lh = hands.iter().find(|h| h.1 == Some(true)).unwrap().0;
        let rh = hands.iter().find(|h| h.1 == Some(false)).unwrap().0;
        let lf = feet.iter().find(|f| f.1 == Some(true)).unwrap().0;
        let rf = feet.iter().find(|f| f.1 == Some(false)).unwrap().0;
        return Ok([head[0], lh, rh, lf, rf]);
    }

    if leaves.len() != END_EFFECTORS {
        return Err(Error::topology(format!(
            "geometric classification needs exactly {END_EFFECTORS} leaves, found {} \
             (prune appendages first)",
            leaves.len()
        )));
    }

    // geometric pass on the reference pose
    let pos = spec.reference_positions();
    let mut by_z: Vec<usize> = leaves.clone();
    by_z.sort_by(|&a, &b| pos[a].z.partial_cmp(&pos[b].z).unwrap());
    let tie = |a: usize, b: usize| (pos[a].z - pos[b].z).abs() < 1e-9;
    if tie(by_z[1], by_z[2]) || tie(by_z[3], by_z[4]) {
        return Err(Error::Classification(format!(
            "leaf heights tie, cannot split feet/hands/head: {:?}",
            by_z.iter().map(|&l| (&spec.joints[l].name, pos[l].z)).collect::<Vec<_>>()
        )));
    }
    let feet_g = [by_z[0], by_z[1]];
    let head_g = by_z[4];
    let hands_g = [by_z[2], by_z[3]];
    let split_lr = |pair: [usize; 2]| -> Result<(usize, usize)> {
        if (pos[pair[0]].x - pos[pair[1]].x).abs() < 1e-9 {
            return Err(Error::Classification(format!(
                "cannot disambiguate left/right between `{}` and `{}` (equal x)",
                spec.joints[pair[0]].name, spec.joints[pair[1]].name
            )));
        }
        if pos[pair[0]].x > pos[pair[1]].x {
            Ok((pair[0], pair[1]))
        } else {
            Ok((pair[1], pair[0]))
        }
    };
    let (lh, rh) = split_lr(hands_g)?;
    let (lf, rf) = split_lr(feet_g)?;
    Ok([head_g, lh, rh, lf, rf])
}

/// World joint positions for every frame: (T, J, 3).
///
/// position(root) = root track; position(child) = position(parent) +
/// world_rotation(parent) * offset(child); world rotations compose down
/// each chain.
pub fn forward_kinematics(spec: &SkeletonSpec, clip: &MotionClip) -> Result<Array3<f64>> {
    clip.validate_against(spec)?;
    let t_len = clip.frame_count();
    let j_len = spec.joint_count();
    let mut out = Array3::zeros((t_len, j_len, 3));
    let mut world_rot: Vec<Quat> = vec![Quat::identity(); j_len];
    let mut world_pos: Vec<Vector3<f64>> = vec![Vector3::zeros(); j_len];
    for t in 0..t_len {
        for (j, joint) in spec.joints.iter().enumerate() {
            match joint.parent {
                None => {
                    world_pos[j] = clip.root_positions[t];
                    world_rot[j] = clip.rotations[t][j];
                }
                Some(p) => {
                    world_pos[j] = world_pos[p] + world_rot[p] * joint.offset;
                    world_rot[j] = world_rot[p] * clip.rotations[t][j];
                }
            }
            out[(t, j, 0)] = world_pos[j].x;
            out[(t, j, 1)] = world_pos[j].y;
            out[(t, j, 2)] = world_pos[j].z;
        }
    }
    Ok(out)
}

/// Remove finger/toe/thumb sub-chains so hands and feet become leaves.
/// Returns the pruned spec and the clip with matching columns dropped.
pub fn prune_appendages(spec: &SkeletonSpec, clip: &MotionClip) -> Result<(SkeletonSpec, MotionClip)> {
    const APPENDAGE: [&str; 8] = [
        "finger", "thumb", "index", "middle", "ring", "pinky", "toe", "toebase",
    ];
    let n = spec.joint_count();
    let mut drop = vec![false; n];
    for (i, j) in spec.joints.iter().enumerate() {
        let inherited = j.parent.map(|p| drop[p]).unwrap_or(false);
        drop[i] = inherited || name_matches(&j.name, &APPENDAGE);
    }
    if drop.iter().all(|&d| !d) {
        return Ok((spec.clone(), clip.clone()));
    }
    keep_joints(spec, clip, &drop)
}

/// Collapse auxiliary "world"-style roots: a root with a single child and no
/// rotation channels is merged into that child.
pub fn collapse_aux_roots(spec: &SkeletonSpec, clip: &MotionClip) -> Result<(SkeletonSpec, MotionClip)> {
    let root = spec.root_index();
    let children = spec.children(root);
    let root_has_rot = spec.joints[root].rotation_order().is_some()
        && clip
            .rotations
            .iter()
            .any(|row| row[root].angle_to(&Quat::identity()) > 1e-9);
    if children.len() != 1 || root_has_rot {
        return Ok((spec.clone(), clip.clone()));
    }
    let child = children[0];
    let mut drop = vec![false; spec.joint_count()];
    drop[root] = true;
    let offset = spec.joints[child].offset;
    let (mut new_spec, mut new_clip) = keep_joints(spec, clip, &drop)?;
    // the child inherits the root track shifted by its own offset
    for p in &mut new_clip.root_positions {
        *p += offset;
    }
    new_spec.ref_root += offset;
    let new_root = new_spec.root_index();
    new_spec.joints[new_root].offset = Vector3::zeros();
    Ok((new_spec, new_clip))
}

fn keep_joints(spec: &SkeletonSpec, clip: &MotionClip, drop: &[bool]) -> Result<(SkeletonSpec, MotionClip)> {
    let mut remap = vec![usize::MAX; spec.joint_count()];
    let mut joints = Vec::new();
    for (i, j) in spec.joints.iter().enumerate() {
        if drop[i] {
            continue;
        }
        remap[i] = joints.len();
        let mut j = j.clone();
        j.parent = j.parent.map(|p| remap[p]).filter(|&p| p != usize::MAX);
        j.end_site = None;
        joints.push(j);
    }
    let new_spec = SkeletonSpec::new(joints, spec.ref_root)?;
    let rotations = clip
        .rotations
        .iter()
        .map(|row| {
            (0..spec.joint_count())
                .filter(|&i| !drop[i])
                .map(|i| row[i])
                .collect()
        })
        .collect();
    let new_clip = MotionClip::new(clip.fps, clip.root_positions.clone(), rotations)?;
    Ok((new_spec, new_clip))
}

// ---------------------------------------------------------------------------
// pooling to the primal skeleton

/// One pooling stage: `groups[g]` lists the previous-level node ids merged
/// into new node `g`.
#[derive(Debug, Clone, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct PoolingLevel {
    pub groups: Vec<Vec<usize>>,
}

/// Deterministic merge plan from a skeleton's edges to the 7 primal nodes.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct PoolingMap {
    /// pooling stages applied in order; the last stage lands on 7 nodes
    pub levels: Vec<PoolingLevel>,
    /// primal node -> source edge ids; order: head, L hand, R hand, L foot,
    /// R foot, then mid-nodes by lowest edge index
    pub final_nodes: Vec<BTreeSet<usize>>,
    pub node_roles: Vec<NodeRole>,
}

impl PoolingMap {
    /// Node sets at every level: level 0 = one node per edge.
    pub fn node_sets_per_level(&self, edge_count: usize) -> Vec<Vec<BTreeSet<usize>>> {
        let mut levels = Vec::with_capacity(self.levels.len() + 1);
        let mut current: Vec<BTreeSet<usize>> =
            (0..edge_count).map(|e| BTreeSet::from([e])).collect();
        levels.push(current.clone());
        for level in &self.levels {
            let next: Vec<BTreeSet<usize>> = level
                .groups
                .iter()
                .map(|g| g.iter().flat_map(|&n| current[n].iter().copied()).collect())
                .collect();
            current = next.clone();
            levels.push(next);
        }
        levels
    }

    /// Human-readable audit table: node id, role, joint names of its edges.
    pub fn audit_table(&self, spec: &SkeletonSpec, graph: &SkeletonGraph) -> String {
        let mut out = String::from("node\trole\tedges (parent->child)\n");
        for (i, (node, role)) in self.final_nodes.iter().zip(&self.node_roles).enumerate() {
            let names: Vec<String> = node
                .iter()
                .map(|&e| {
                    let (p, c) = graph.edges[e];
                    format!("{}->{}", spec.joints[p].name, spec.joints[c].name)
                })
                .collect();
            out.push_str(&format!("{i}\t{role:?}\t{}\n", names.join(", ")));
        }
        out
    }
}

#[derive(Debug, Clone)]
struct MergeState {
    /// current nodes as edge sets
    nodes: Vec<BTreeSet<usize>>,
    /// frozen (end-effector) flags, parallel to nodes
    frozen: Vec<bool>,
}

impl MergeState {
    fn adjacent(&self, graph: &SkeletonGraph, a: usize, b: usize) -> bool {
        self.nodes[a]
            .iter()
            .any(|&ea| self.nodes[b].iter().any(|&eb| graph.edges_adjacent(ea, eb)))
    }

    fn node_depth(&self, graph: &SkeletonGraph, n: usize) -> usize {
        self.nodes[n].iter().map(|&e| graph.edge_depth(e)).min().unwrap()
    }

    fn min_edge(&self, n: usize) -> usize {
        *self.nodes[n].iter().next().unwrap()
    }
}

/// The greedy pair choice used at each merge step: among adjacent pairs of
/// non-end-effector nodes, the smallest merged edge count wins; ties break
/// toward the pair nearer the root, then the lowest edge index.
pub fn select_merge_pair(graph: &SkeletonGraph, nodes: &[BTreeSet<usize>], frozen: &[bool]) -> Option<(usize, usize)> {
    let state = MergeState {
        nodes: nodes.to_vec(),
        frozen: frozen.to_vec(),
    };
    let mut best: Option<((usize, usize, usize, usize), (usize, usize))> = None;
    for a in 0..state.nodes.len() {
        if state.frozen[a] {
            continue;
        }
        for b in (a + 1)..state.nodes.len() {
            if state.frozen[b] || !state.adjacent(graph, a, b) {
                continue;
            }
            let total = state.nodes[a].len() + state.nodes[b].len();
            let depth = state.node_depth(graph, a).min(state.node_depth(graph, b));
            let lo = state.min_edge(a).min(state.min_edge(b));
            let hi = state.min_edge(a).max(state.min_edge(b));
            let key = (total, depth, lo, hi);
            if best.as_ref().map(|(k, _)| key < *k).unwrap_or(true) {
                best = Some((key, (a, b)));
            }
        }
    }
    best.map(|(_, pair)| pair)
}

/// Build the pooling map: merge adjacent non-end-effector edges until exactly
/// 7 nodes remain, recording the merge sequence grouped into three stages.
pub fn build_pooling_map(graph: &SkeletonGraph) -> Result<PoolingMap> {
    let e = graph.edge_count();
    if e < PRIMAL_NODES {
        return Err(Error::topology(format!(
            "skeleton has {e} edges; at least {PRIMAL_NODES} are required to pool to the primal skeleton"
        )));
    }
    let ee_edges = graph.end_effector_edges();
    let mut nodes: Vec<BTreeSet<usize>> = (0..e).map(|i| BTreeSet::from([i])).collect();
    let mut frozen: Vec<bool> = (0..e).map(|i| ee_edges.contains(&i)).collect();

    let total_merges = e - PRIMAL_NODES;
    // three pooling stages (mirrors the two temporal downsamples + entry conv)
    let m1 = total_merges.div_ceil(3);
    let m2 = (total_merges - m1).div_ceil(2);
    let m3 = total_merges - m1 - m2;
    let mut levels = Vec::new();

    for &stage_merges in &[m1, m2, m3] {
        // identity groups, then fold each merge into them
        let mut groups: Vec<Vec<usize>> = (0..nodes.len()).map(|i| vec![i]).collect();
        let mut alive: Vec<BTreeSet<usize>> = nodes.clone();
        let mut alive_frozen = frozen.clone();
        for _ in 0..stage_merges {
            let (a, b) = select_merge_pair(graph, &alive, &alive_frozen)
                .ok_or_else(|| Error::topology("no adjacent non-end-effector pair left to merge"))?;
            let merged: BTreeSet<usize> = alive[a].union(&alive[b]).copied().collect();
            let merged_group: Vec<usize> = groups[a].iter().chain(groups[b].iter()).copied().collect();
            // remove b (the larger index) first
            alive.remove(b);
            alive_frozen.remove(b);
            groups.remove(b);
            alive[a] = merged;
            groups[a] = merged_group;
        }
        nodes = alive;
        frozen = alive_frozen;
        levels.push(PoolingLevel { groups });
    }
    debug_assert_eq!(nodes.len(), PRIMAL_NODES);

    // order the final nodes: head, L hand, R hand, L foot, R foot, mids by min edge
    let mut order: Vec<usize> = Vec::with_capacity(PRIMAL_NODES);
    let mut roles = Vec::with_capacity(PRIMAL_NODES);
    for (k, &ee_edge) in ee_edges.iter().enumerate() {
        let idx = nodes
            .iter()
            .position(|n| n.contains(&ee_edge))
            .expect("end-effector edge survives pooling");
        order.push(idx);
        roles.push(match k {
            0 => NodeRole::Head,
            1 => NodeRole::LeftHand,
            2 => NodeRole::RightHand,
            3 => NodeRole::LeftFoot,
            _ => NodeRole::RightFoot,
        });
    }
    let mut mids: Vec<usize> = (0..nodes.len()).filter(|i| !order.contains(i)).collect();
    mids.sort_by_key(|&i| *nodes[i].iter().next().unwrap());
    for m in mids {
        order.push(m);
        roles.push(NodeRole::Mid);
    }

    // re-order the last level's groups to match the canonical node order
    let last = levels.last_mut().unwrap();
    last.groups = order.iter().map(|&i| last.groups[i].clone()).collect();
    let final_nodes: Vec<BTreeSet<usize>> = order.iter().map(|&i| nodes[i].clone()).collect();

    Ok(PoolingMap {
        levels,
        final_nodes,
        node_roles: roles,
    })
}

/// Adjacency (distance <= d) between pooled nodes: nodes are adjacent when any
/// of their member edges share a joint.
pub fn pooled_adjacency(graph: &SkeletonGraph, nodes: &[BTreeSet<usize>], d: usize) -> Vec<Vec<usize>> {
    let n = nodes.len();
    let mut neighbor: Vec<Vec<usize>> = vec![Vec::new(); n];
    for a in 0..n {
        for b in 0..n {
            if a != b
                && nodes[a]
                    .iter()
                    .any(|&ea| nodes[b].iter().any(|&eb| graph.edges_adjacent(ea, eb)))
            {
                neighbor[a].push(b);
            }
        }
    }
    (0..n)
        .map(|start| {
            let mut dist = vec![usize::MAX; n];
            dist[start] = 0;
            let mut queue = std::collections::VecDeque::from([start]);
            while let Some(cur) = queue.pop_front() {
                if dist[cur] == d {
                    continue;
                }
                for &nb in &neighbor[cur] {
                    if dist[nb] == usize::MAX {
                        dist[nb] = dist[cur] + 1;
                        queue.push_back(nb);
                    }
                }
            }
            (0..n).filter(|&i| dist[i] <= d).collect()
        })
        .collect()
}
