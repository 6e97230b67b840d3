//! Skeleton-aware retargeting through the shared 7-node primal latent space.
//!
//! Per skeleton: a static encoder over bone offsets, a dynamic encoder over
//! per-edge 6D rotations (three skeletal convolutions with N^d support,
//! leaky-rectifier activations and skeletal pooling; two of the convolutions
//! stride the time axis so the latent runs at fps/4), a mirrored decoder with
//! unpooling and x2 upsampling, and a temporal-conv discriminator. Training
//! combines reconstruction (rotations + FK positions), latent consistency,
//! normalized end-effector velocity, and a least-squares adversarial term.

use crate::bvh::{MotionClip, SkeletonSpec};
use crate::error::{Error, Result};
use crate::nn::layers::{Conv1d, MaskedLinear};
use crate::nn::optim::{Adam, AdamConfig};
use crate::nn::tape::{Tape, Var};
use crate::nn::{ParamStore, TensorD};
use crate::rot;
use crate::skeleton::{pooled_adjacency, build_pooling_map, PoolingMap, SkeletonGraph};
use ndarray::{Array1, Array2, Array3, IxDyn};
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use std::collections::{BTreeMap, BTreeSet};

/// Temporal downsampling of the retargeting encoder (two stride-2 convs).
pub const D_RE: usize = 4;
/// Latent channels per primal node.
pub const PRIMAL_CHANNELS: usize = 16;
/// Latent dimension of one primal frame.
pub const PRIMAL_DIM: usize = 7 * PRIMAL_CHANNELS;

const STATIC_CH: usize = 4;
const DYN_CH: [usize; 3] = [4, 8, 16];
const KERNEL: usize = 3;
const LEAK: f64 = 0.2;

/// A latent gesture sequence on the primal skeleton: (T', 7, C).
#[derive(Debug, Clone)]
pub struct PrimalMotion {
    pub latent: Array3<f64>,
    pub fps_prime: f64,
    pub provenance: String,
}

impl PrimalMotion {
    pub fn frames(&self) -> usize {
        self.latent.shape()[0]
    }

    /// (T', 7*C) view.
    pub fn flat(&self) -> Array2<f64> {
        let t = self.frames();
        self.latent.clone().into_shape_with_order((t, PRIMAL_DIM)).unwrap()
    }

    pub fn from_flat(flat: Array2<f64>, fps_prime: f64, provenance: &str) -> Self {
        let t = flat.shape()[0];
        PrimalMotion {
            latent: flat.into_shape_with_order((t, 7, PRIMAL_CHANNELS)).unwrap(),
            fps_prime,
            provenance: provenance.to_string(),
        }
    }
}

// ---------------------------------------------------------------------------
// per-skeleton derived structure

/// Everything derived from one (height-normalized) skeleton.
#[derive(Debug, Clone)]
pub struct SkeletonSystem {
    pub id: String,
    pub spec: SkeletonSpec,
    pub graph: SkeletonGraph,
    pub pooling: PoolingMap,
    /// node sets at levels 0..=3 (level 0: one node per edge; level 3: primal)
    pub level_nodes: Vec<Vec<BTreeSet<usize>>>,
    /// distance-d adjacency per level (conv support)
    adjacency: Vec<Vec<Vec<usize>>>,
    /// averaging matrices (n_prev, n_next) between consecutive levels
    pool_mats: Vec<Array2<f64>>,
}

impl SkeletonSystem {
    pub fn new(id: &str, spec: SkeletonSpec, conv_dist: usize) -> Result<Self> {
        if (spec.height - 1.0).abs() > 1e-6 {
            return Err(Error::contract(format!(
                "skeleton `{id}` must be height-normalized before registration (height {})",
                spec.height
            )));
        }
        let graph = SkeletonGraph::new(&spec)?;
        let pooling = build_pooling_map(&graph)?;
        let level_nodes = pooling.node_sets_per_level(graph.edge_count());
        let adjacency = level_nodes
            .iter()
            .map(|nodes| pooled_adjacency(&graph, nodes, conv_dist))
            .collect();
        let mut pool_mats = Vec::new();
        for (l, level) in pooling.levels.iter().enumerate() {
            let n_prev = level_nodes[l].len();
            let n_next = level.groups.len();
            let mut p = Array2::zeros((n_prev, n_next));
            for (j, group) in level.groups.iter().enumerate() {
                for &i in group {
                    p[(i, j)] = 1.0 / group.len() as f64;
                }
            }
            pool_mats.push(p);
        }
        Ok(SkeletonSystem {
            id: id.to_string(),
            spec,
            graph,
            pooling,
            level_nodes,
            adjacency,
            pool_mats,
        })
    }

    pub fn edges(&self) -> usize {
        self.graph.edge_count()
    }

    fn nodes_at(&self, level: usize) -> usize {
        self.level_nodes[level].len()
    }

    /// Copying unpool matrix (n_next, n_prev).
    fn unpool_mat(&self, level: usize) -> Array2<f64> {
        let p = &self.pool_mats[level];
        let mut u = Array2::zeros((p.shape()[1], p.shape()[0]));
        for i in 0..p.shape()[0] {
            for j in 0..p.shape()[1] {
                if p[(i, j)] > 0.0 {
                    u[(j, i)] = 1.0;
                }
            }
        }
        u
    }

    /// Primal node indices covering the upper body: head, both hands, and the
    /// mid-node bordering the most of them (ties -> lower index).
    pub fn upper_body_nodes(&self) -> Vec<usize> {
        let adj = pooled_adjacency(&self.graph, &self.pooling.final_nodes, 1);
        let mut best_mid = 5;
        let mut best_count = -1i64;
        for mid in 5..7 {
            let count = [0usize, 1, 2]
                .iter()
                .filter(|&&ee| adj[mid].contains(&ee))
                .count() as i64;
            if count > best_count {
                best_count = count;
                best_mid = mid;
            }
        }
        vec![0, 1, 2, best_mid]
    }

    /// Flat channel indices (into 7*C) of the upper-body nodes.
    pub fn upper_body_channels(&self) -> Vec<usize> {
        self.upper_body_nodes()
            .iter()
            .flat_map(|&n| n * PRIMAL_CHANNELS..(n + 1) * PRIMAL_CHANNELS)
            .collect()
    }
}

// ---------------------------------------------------------------------------
// feature conversion

/// Per-edge 6D rotation features: (T, E*6).
pub fn dyn_features(system: &SkeletonSystem, clip: &MotionClip) -> Array2<f64> {
    let t_len = clip.frame_count();
    let e_len = system.edges();
    let mut out = Array2::zeros((t_len, e_len * 6));
    for t in 0..t_len {
        for (e, &(_, child)) in system.graph.edges.iter().enumerate() {
            let v = rot::quat_to_rot6d(&clip.rotations[t][child]);
            for (k, &x) in v.iter().enumerate() {
                out[(t, e * 6 + k)] = x;
            }
        }
    }
    out
}

/// Per-edge offsets of the child joints: (E*3,).
pub fn static_features(system: &SkeletonSystem) -> Array1<f64> {
    let e_len = system.edges();
    let mut out = Array1::zeros(e_len * 3);
    for (e, &(_, child)) in system.graph.edges.iter().enumerate() {
        let o = system.spec.joints[child].offset;
        out[e * 3] = o.x;
        out[e * 3 + 1] = o.y;
        out[e * 3 + 2] = o.z;
    }
    out
}

/// Rebuild a clip from 6D features, reusing the template's root track.
pub fn features_to_clip(
    system: &SkeletonSystem,
    feats: &Array2<f64>,
    template: &MotionClip,
) -> Result<MotionClip> {
    let t_len = feats.shape()[0];
    if template.frame_count() < t_len {
        return Err(Error::contract("template root track shorter than features"));
    }
    let j_len = system.spec.joint_count();
    let root = system.spec.root_index();
    let mut rotations = Vec::with_capacity(t_len);
    let mut positions = Vec::with_capacity(t_len);
    for t in 0..t_len {
        let mut row = vec![rot::Quat::identity(); j_len];
        row[root] = template.rotations[t][root];
        for (e, &(_, child)) in system.graph.edges.iter().enumerate() {
            let mut v = [0.0; 6];
            v.copy_from_slice(
                feats
                    .row(t)
                    .slice(ndarray::s![e * 6..e * 6 + 6])
                    .as_slice()
                    .unwrap(),
            );
            row[child] = rot::rot6d_to_quat(v);
        }
        rotations.push(row);
        positions.push(template.root_positions[t]);
    }
    MotionClip::new(template.fps, positions, rotations)
}

/// Plain (non-tape) FK positions flattened to (T, J*3).
pub fn fk_flat(spec: &SkeletonSpec, clip: &MotionClip) -> Result<Array2<f64>> {
    let fk = crate::skeleton::forward_kinematics(spec, clip)?;
    let (t, j, _) = fk.dim();
    Ok(fk.into_shape_with_order((t, j * 3)).unwrap())
}

// ---------------------------------------------------------------------------
// differentiable kinematics

/// Gram-Schmidt a (N,6) tensor of 6D rotations into (N,3,3) matrices on tape.
fn rot6d_to_mats(t: &mut Tape, v: Var) -> Var {
    let n = t.value(v).shape()[0];
    let a1 = t.slice_axis(v, 1, 0, 3);
    let a2 = t.slice_axis(v, 1, 3, 6);
    let normalize = |t: &mut Tape, x: Var| -> Var {
        let sq = t.square(x);
        let s = t.sum_axis_keep(sq, 1);
        let s = t.add_scalar(s, 1e-12);
        let inv = t.sqrt(s);
        t.div(x, inv)
    };
    let b1 = normalize(t, a1);
    let prod = t.mul(b1, a2);
    let dot = t.sum_axis_keep(prod, 1);
    let proj = t.mul(b1, dot);
    let b2 = t.sub(a2, proj);
    let b2 = normalize(t, b2);
    // cross product via component shuffles
    let comp = |t: &mut Tape, x: Var, i: usize| t.slice_axis(x, 1, i, i + 1);
    let (x1, y1, z1) = (comp(t, b1, 0), comp(t, b1, 1), comp(t, b1, 2));
    let (x2, y2, z2) = (comp(t, b2, 0), comp(t, b2, 1), comp(t, b2, 2));
    let m = |t: &mut Tape, a: Var, b: Var| t.mul(a, b);
    let t1 = m(t, y1, z2);
    let t2 = m(t, z1, y2);
    let cx = t.sub(t1, t2);
    let t3 = m(t, z1, x2);
    let t4 = m(t, x1, z2);
    let cy = t.sub(t3, t4);
    let t5 = m(t, x1, y2);
    let t6 = m(t, y1, x2);
    let cz = t.sub(t5, t6);
    let b3 = t.concat(1, &[cx, cy, cz]);
    // columns b1 b2 b3 -> (N,3,3)
    let c1 = t.reshape(b1, &[n, 3, 1]);
    let c2 = t.reshape(b2, &[n, 3, 1]);
    let c3 = t.reshape(b3, &[n, 3, 1]);
    t.concat(2, &[c1, c2, c3])
}

/// Offsets for tape FK: either decoded (a Var of shape (E*3,)) or constants.
enum OffsetSource {
    Decoded(Var),
    Fixed,
}

/// Differentiable FK: per-edge 6D rotations (B,T,E*6) plus the constant root
/// track give world positions (B,T,J*3).
fn tape_fk(
    t: &mut Tape,
    system: &SkeletonSystem,
    dyn6d: Var,
    offsets: OffsetSource,
    root_pos: &Array2<f64>,
    root_mats: &Array3<f64>,
) -> Var {
    let shape = t.value(dyn6d).shape().to_vec();
    let (b, t_len) = (shape[0], shape[1]);
    let n = b * t_len;
    let j_len = system.spec.joint_count();
    let root = system.spec.root_index();

    // per-edge local rotation matrices
    let flat = t.reshape(dyn6d, &[n, system.edges() * 6]);
    let mut edge_mats = Vec::with_capacity(system.edges());
    for e in 0..system.edges() {
        let v6 = t.slice_axis(flat, 1, e * 6, e * 6 + 6);
        edge_mats.push(rot6d_to_mats(t, v6));
    }

    let root_pos_bc = {
        let mut arr = crate::nn::zeros(&[n, 3, 1]);
        for bi in 0..b {
            for ti in 0..t_len {
                for c in 0..3 {
                    arr[[bi * t_len + ti, c, 0]] = root_pos[(ti, c)];
                }
            }
        }
        t.constant(arr)
    };
    let root_rot_bc = {
        let mut arr = crate::nn::zeros(&[n, 3, 3]);
        for bi in 0..b {
            for ti in 0..t_len {
                for r in 0..3 {
                    for c in 0..3 {
                        arr[[bi * t_len + ti, r, c]] = root_mats[(ti, r, c)];
                    }
                }
            }
        }
        t.constant(arr)
    };

    let mut world_rot: Vec<Option<Var>> = vec![None; j_len];
    let mut world_pos: Vec<Option<Var>> = vec![None; j_len];
    world_rot[root] = Some(root_rot_bc);
    world_pos[root] = Some(root_pos_bc);

    for (e, &(parent, child)) in system.graph.edges.iter().enumerate() {
        let parent_rot = world_rot[parent].expect("parents precede children");
        let parent_pos = world_pos[parent].expect("parents precede children");
        let off = match &offsets {
            OffsetSource::Decoded(off_var) => {
                let sl = t.slice_axis(*off_var, 0, e * 3, e * 3 + 3);
                let sl = t.reshape(sl, &[1, 3, 1]);
                t.broadcast_to(sl, &[n, 3, 1])
            }
            OffsetSource::Fixed => {
                let o = system.spec.joints[child].offset;
                let mut arr = crate::nn::zeros(&[1, 3, 1]);
                arr[[0, 0, 0]] = o.x;
                arr[[0, 1, 0]] = o.y;
                arr[[0, 2, 0]] = o.z;
                let c = t.constant(arr);
                t.broadcast_to(c, &[n, 3, 1])
            }
        };
        let reach = t.batch_matmul(parent_rot, off);
        world_pos[child] = Some(t.add(parent_pos, reach));
        world_rot[child] = Some(t.batch_matmul(parent_rot, edge_mats[e]));
    }

    let cols: Vec<Var> = (0..j_len)
        .map(|j| {
            let p = world_pos[j].unwrap();
            t.reshape(p, &[n, 1, 3])
        })
        .collect();
    let stacked = t.concat(1, &cols);
    t.reshape(stacked, &[b, t_len, j_len * 3])
}

// ---------------------------------------------------------------------------
// networks

fn expand_graph_matrix(p: &Array2<f64>, ch: usize) -> TensorD {
    let (np, nn_) = (p.shape()[0], p.shape()[1]);
    let mut out = crate::nn::zeros(&[np * ch, nn_ * ch]);
    for i in 0..np {
        for j in 0..nn_ {
            if p[(i, j)] != 0.0 {
                for c in 0..ch {
                    out[[i * ch + c, j * ch + c]] = p[(i, j)];
                }
            }
        }
    }
    out
}

fn conv_mask(adj: &[Vec<usize>], kernel: usize, cin: usize, cout: usize) -> TensorD {
    let n = adj.len();
    let mut m = crate::nn::zeros(&[kernel * n * cin, n * cout]);
    for o in 0..n {
        for &i in &adj[o] {
            for k in 0..kernel {
                for a in 0..cin {
                    for b in 0..cout {
                        m[[k * n * cin + i * cin + a, o * cout + b]] = 1.0;
                    }
                }
            }
        }
    }
    m
}

/// Concatenate per-node channel blocks: (B,T,n*ca) ++ (B,T,n*cb) -> (B,T,n*(ca+cb)).
fn concat_node_channels(t: &mut Tape, a: Var, b: Var, n: usize, ca: usize, cb: usize) -> Var {
    let sa = t.value(a).shape().to_vec();
    let (bs, ts) = (sa[0], sa[1]);
    let a4 = t.reshape(a, &[bs, ts, n, ca]);
    let b4 = t.reshape(b, &[bs, ts, n, cb]);
    let cat = t.concat(3, &[a4, b4]);
    t.reshape(cat, &[bs, ts, n * (ca + cb)])
}

/// Tile a per-node static code (n*c,) to (B,T,n*c).
fn tile_static(t: &mut Tape, code: Var, bs: usize, ts: usize) -> Var {
    let len = t.value(code).shape()[0];
    let r = t.reshape(code, &[1, 1, len]);
    t.broadcast_to(r, &[bs, ts, len])
}

/// Pool node features along the node axis via a constant expanded matrix.
fn apply_graph_matrix(t: &mut Tape, x: Var, mat: &TensorD) -> Var {
    let shape = t.value(x).shape().to_vec();
    let rows: usize = shape[..shape.len() - 1].iter().product();
    let flat = t.reshape(x, &[rows, shape[shape.len() - 1]]);
    let m = t.constant(mat.clone());
    let y = t.matmul(flat, m);
    let mut out_shape = shape;
    *out_shape.last_mut().unwrap() = mat.shape()[1];
    t.reshape(y, &out_shape)
}

/// All networks for one registered skeleton.
#[derive(Debug, Clone)]
struct SkeletonNets {
    enc_static: Vec<MaskedLinear>,
    enc_conv: Vec<MaskedLinear>,
    dec_static: Vec<MaskedLinear>,
    dec_conv: Vec<MaskedLinear>,
    dis: Vec<Conv1d>,
}

fn build_nets(store: &mut ParamStore, rng: &mut ChaCha8Rng, sys: &SkeletonSystem) -> SkeletonNets {
    let id = &sys.id;
    let mut enc_static = Vec::new();
    let mut enc_conv = Vec::new();
    // encoder: levels 0,1,2 (convs run on graphs 0,1,2)
    for l in 0..3 {
        let n = sys.nodes_at(l);
        let cs_in = if l == 0 { 3 } else { STATIC_CH };
        let static_mask = conv_mask(&sys.adjacency[l], 1, cs_in, STATIC_CH);
        enc_static.push(MaskedLinear::new(
            store,
            rng,
            &format!("{id}.enc.static{l}"),
            static_mask,
        ));
        let cin = if l == 0 { 6 } else { DYN_CH[l - 1] } + STATIC_CH;
        let mask = conv_mask(&sys.adjacency[l], KERNEL, cin, DYN_CH[l]);
        enc_conv.push(MaskedLinear::new(
            store,
            rng,
            &format!("{id}.enc.conv{l}"),
            mask,
        ));
        let _ = n;
    }
    // decoder: convs run on graphs 2,1,0
    let mut dec_static = Vec::new();
    let mut dec_conv = Vec::new();
    for (stage, l) in [2usize, 1, 0].iter().enumerate() {
        let cs_out = if *l == 0 { 3 } else { STATIC_CH };
        let static_mask = conv_mask(&sys.adjacency[*l], 1, STATIC_CH, cs_out);
        dec_static.push(MaskedLinear::new(
            store,
            rng,
            &format!("{id}.dec.static{stage}"),
            static_mask,
        ));
        let cin = if stage == 0 {
            PRIMAL_CHANNELS + STATIC_CH
        } else {
            DYN_CH[*l + 1] + STATIC_CH
        };
        let cout = if *l == 0 { 6 } else { DYN_CH[*l] };
        let mask = conv_mask(&sys.adjacency[*l], KERNEL, cin, cout);
        dec_conv.push(MaskedLinear::new(
            store,
            rng,
            &format!("{id}.dec.conv{stage}"),
            mask,
        ));
    }
    // discriminator: 3 temporal convs over flattened edge features
    let e = sys.edges();
    let dis = vec![
        Conv1d::new(store, rng, &format!("{id}.dis.conv0"), e * (6 + STATIC_CH), 32, 5, 2, 2),
        Conv1d::new(store, rng, &format!("{id}.dis.conv1"), 32, 32, 5, 2, 2),
        Conv1d::new(store, rng, &format!("{id}.dis.conv2"), 32, 1, 3, 1, 1),
    ];
    SkeletonNets {
        enc_static,
        enc_conv,
        dec_static,
        dec_conv,
        dis,
    }
}

// ---------------------------------------------------------------------------
// the model

#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
pub struct RetargetConfig {
    pub window: usize,
    pub batch: usize,
    pub epochs: usize,
    pub lr: f64,
    pub lambda_lc: f64,
    pub lambda_ee: f64,
    pub lambda_adv: f64,
    /// skeletal convolution support distance
    pub conv_dist: usize,
    pub seed: u64,
    /// fraction of clips held out for validation
    pub holdout: f64,
}

impl Default for RetargetConfig {
    fn default() -> Self {
        RetargetConfig {
            window: 32,
            batch: 16,
            epochs: 60,
            lr: 1e-3,
            lambda_lc: 1.0,
            lambda_ee: 2.0,
            lambda_adv: 0.25,
            conv_dist: 2,
            seed: 1,
            holdout: 0.1,
        }
    }
}

impl RetargetConfig {
    /// Full-size values reported for the original training runs.
    pub fn paper_scale() -> Self {
        RetargetConfig {
            batch: 256,
            epochs: 16000,
            lr: 1e-4,
            ..Default::default()
        }
    }
}

pub struct RetargetModel {
    pub config: RetargetConfig,
    pub store: ParamStore,
    systems: BTreeMap<String, SkeletonSystem>,
    nets: BTreeMap<String, SkeletonNets>,
}

/// Loss components of one batch (generator view).
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize)]
pub struct LossBreakdown {
    pub rec: f64,
    pub lc: f64,
    pub ee: f64,
    pub adv: f64,
    pub total: f64,
}

/// total = rec + lambda_lc * lc + lambda_ee * ee + lambda_adv * adv
pub fn combine_losses(rec: f64, lc: f64, ee: f64, adv: f64, cfg: &RetargetConfig) -> f64 {
    rec + cfg.lambda_lc * lc + cfg.lambda_ee * ee + cfg.lambda_adv * adv
}

/// One skeleton's batch: windows of dynamic features plus precomputed
/// constants for the losses.
pub struct MotionBatch {
    pub dyn6d: TensorD,
    /// FK positions of the source motion, (B,T,J*3)
    pub fk_target: TensorD,
    /// root positions (T,3) and rotation matrices (T,3,3), shared per batch
    pub root_pos: Array2<f64>,
    pub root_mats: Array3<f64>,
    pub fps: f64,
}

impl RetargetModel {
    pub fn new(
        specs: BTreeMap<String, SkeletonSpec>,
        config: RetargetConfig,
    ) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let mut store = ParamStore::new();
        let mut systems = BTreeMap::new();
        let mut nets = BTreeMap::new();
        for (id, spec) in specs {
            let sys = SkeletonSystem::new(&id, spec, config.conv_dist)?;
            nets.insert(id.clone(), build_nets(&mut store, &mut rng, &sys));
            systems.insert(id, sys);
        }
        Ok(RetargetModel {
            config,
            store,
            systems,
            nets,
        })
    }

    pub fn system(&self, id: &str) -> Result<&SkeletonSystem> {
        self.systems
            .get(id)
            .ok_or_else(|| Error::config(format!("skeleton `{id}` is not registered")))
    }

    pub fn skeleton_ids(&self) -> Vec<String> {
        self.systems.keys().cloned().collect()
    }

    /// Static codes at levels 0..2 plus the primal static code.
    fn static_codes(&self, t: &mut Tape, store: &ParamStore, id: &str) -> (Vec<Var>, Var) {
        let sys = &self.systems[id];
        let nets = &self.nets[id];
        let raw = static_features(sys);
        let len = raw.len();
        let x = t.constant(raw.into_dyn().into_shape_with_order(IxDyn(&[1, len])).unwrap());
        let mut codes = Vec::new();
        let mut h = x;
        for l in 0..3 {
            let y = nets.enc_static[l].forward(t, store, h);
            let y = t.leaky_relu(y, LEAK);
            codes.push(y);
            let pool = expand_graph_matrix(&sys.pool_mats[l], STATIC_CH);
            h = apply_graph_matrix(t, y, &pool);
        }
        // flatten (1, n*c) codes to (n*c,)
        let flat_codes = codes
            .iter()
            .map(|&c| {
                let n = t.value(c).shape()[1];
                t.reshape(c, &[n])
            })
            .collect();
        let n = t.value(h).shape()[1];
        let primal = t.reshape(h, &[n]);
        (flat_codes, primal)
    }

    /// Dynamic encoder: (B,T,E*6) -> (B,T/4,7*C).
    fn encode_on_tape(&self, t: &mut Tape, store: &ParamStore, id: &str, dyn6d: Var) -> Var {
        let sys = &self.systems[id];
        let nets = &self.nets[id];
        let (codes, _primal_code) = self.static_codes(t, store, id);
        let shape = t.value(dyn6d).shape().to_vec();
        let (bs, mut ts) = (shape[0], shape[1]);
        let mut h = dyn6d;
        let mut ch = 6;
        for l in 0..3 {
            let n = sys.nodes_at(l);
            let s = tile_static(t, codes[l], bs, ts);
            let hin = concat_node_channels(t, h, s, n, ch, STATIC_CH);
            let stride = if l == 0 { 1 } else { 2 };
            let cols = t.unfold_time(hin, KERNEL, stride, 1);
            let w = nets.enc_conv[l].forward(t, store, cols);
            let y = t.leaky_relu(w, LEAK);
            ts = t.value(y).shape()[1];
            let pool = expand_graph_matrix(&sys.pool_mats[l], DYN_CH[l]);
            h = apply_graph_matrix(t, y, &pool);
            ch = DYN_CH[l];
        }
        h
    }

    /// First-layer (pre-pool) conv features for locality probes: (B,T,E0*4).
    pub fn first_conv_features(&self, id: &str, dyn6d: &TensorD) -> Result<TensorD> {
        let sys = self.system(id)?;
        let nets = &self.nets[id];
        let mut t = Tape::new();
        let x = t.constant(dyn6d.clone());
        let (codes, _) = self.static_codes(&mut t, &self.store, id);
        let shape = t.value(x).shape().to_vec();
        let (bs, ts) = (shape[0], shape[1]);
        let s = tile_static(&mut t, codes[0], bs, ts);
        let hin = concat_node_channels(&mut t, x, s, sys.edges(), 6, STATIC_CH);
        let cols = t.unfold_time(hin, KERNEL, 1, 1);
        let w = nets.enc_conv[0].forward(&mut t, &self.store, cols);
        let y = t.leaky_relu(w, LEAK);
        Ok(t.value(y).clone())
    }

    /// Decoder: latent (B,T',7*C) -> (dyn6d (B,T,E*6), offsets (E*3,)).
    fn decode_on_tape(&self, t: &mut Tape, store: &ParamStore, id: &str, latent: Var) -> (Var, Var) {
        let sys = &self.systems[id];
        let nets = &self.nets[id];
        let (codes, primal_code) = self.static_codes(t, store, id);
        let shape = t.value(latent).shape().to_vec();
        let (bs, mut ts) = (shape[0], shape[1]);

        let mut h = latent;
        let mut ch = PRIMAL_CHANNELS;
        for (stage, l) in [2usize, 1, 0].iter().enumerate() {
            // unpool to graph l
            let unpool = expand_graph_matrix(&sys.unpool_mat(*l), ch);
            h = apply_graph_matrix(t, h, &unpool);
            if *l > 0 {
                h = t.upsample2_time(h);
                ts *= 2;
            }
            let n = sys.nodes_at(*l);
            let code = codes[*l];
            let s = tile_static(t, code, bs, ts);
            let hin = concat_node_channels(t, h, s, n, ch, STATIC_CH);
            let cols = t.unfold_time(hin, KERNEL, 1, 1);
            let y = nets.dec_conv[stage].forward(t, store, cols);
            ch = if *l == 0 { 6 } else { DYN_CH[*l] };
            h = if *l == 0 { y } else { t.leaky_relu(y, LEAK) };
        }

        // static decoder from the primal code
        let n3 = 7;
        let mut s = t.reshape(primal_code, &[1, n3 * STATIC_CH]);
        for (stage, l) in [2usize, 1, 0].iter().enumerate() {
            let unpool = expand_graph_matrix(&sys.unpool_mat(*l), STATIC_CH);
            s = apply_graph_matrix(t, s, &unpool);
            let y = nets.dec_static[stage].forward(t, store, s);
            s = if *l == 0 { y } else { t.leaky_relu(y, LEAK) };
        }
        let e3 = sys.edges() * 3;
        let offsets = t.reshape(s, &[e3]);
        (h, offsets)
    }

    /// Discriminator score per batch item: (B,).
    fn discriminate_on_tape(&self, t: &mut Tape, store: &ParamStore, id: &str, dyn6d: Var) -> Var {
        let sys = &self.systems[id];
        let nets = &self.nets[id];
        let (codes, _) = self.static_codes(t, store, id);
        let shape = t.value(dyn6d).shape().to_vec();
        let (bs, ts) = (shape[0], shape[1]);
        let s = tile_static(t, codes[0], bs, ts);
        let mut h = concat_node_channels(t, dyn6d, s, sys.edges(), 6, STATIC_CH);
        for (i, conv) in nets.dis.iter().enumerate() {
            h = conv.forward(t, store, h);
            if i + 1 < nets.dis.len() {
                h = t.leaky_relu(h, LEAK);
            }
        }
        let m = t.mean_axis_keep(h, 1);
        let sh = t.value(m).shape().to_vec();
        t.reshape(m, &[sh[0]])
    }

    // -- public inference ---------------------------------------------------

    /// Encode a clip into the primal latent space. The clip is cropped to a
    /// multiple of 4 frames.
    pub fn encode(&self, id: &str, clip: &MotionClip) -> Result<PrimalMotion> {
        let sys = self.system(id)?;
        clip.validate_against(&sys.spec)?;
        let t_len = (clip.frame_count() / D_RE) * D_RE;
        if t_len == 0 {
            return Err(Error::contract("clip shorter than the downsampling rate"));
        }
        let feats = dyn_features(sys, clip);
        let feats = feats.slice_move(ndarray::s![0..t_len, ..]);
        let (t_len, dim) = feats.dim();
        let mut tape = Tape::new();
        let x = tape.constant(
            feats
                .into_shape_with_order(IxDyn(&[1, t_len, dim]))
                .unwrap(),
        );
        let latent = self.encode_on_tape(&mut tape, &self.store, id, x);
        let v = tape.value(latent);
        let t_prime = v.shape()[1];
        let flat = v
            .clone()
            .into_shape_with_order((t_prime, PRIMAL_DIM))
            .unwrap();
        Ok(PrimalMotion::from_flat(flat, clip.fps / D_RE as f64, id))
    }

    /// Decode a primal latent on the given skeleton, reusing `template`'s
    /// root track (the reference representation passes through retargeting).
    pub fn decode(&self, id: &str, primal: &PrimalMotion, template: &MotionClip) -> Result<MotionClip> {
        let sys = self.system(id)?;
        let t_prime = primal.frames();
        let flat = primal.flat();
        let mut tape = Tape::new();
        let x = tape.constant(
            flat.into_dyn()
                .into_shape_with_order(IxDyn(&[1, t_prime, PRIMAL_DIM]))
                .unwrap(),
        );
        let (dyn6d, _offsets) = self.decode_on_tape(&mut tape, &self.store, id, x);
        let v = tape.value(dyn6d);
        let t_len = v.shape()[1];
        let feats = v
            .clone()
            .into_shape_with_order((t_len, sys.edges() * 6))
            .unwrap();
        features_to_clip(sys, &feats, template)
    }

    /// Retarget a clip from `src` to `dst` through the primal latent.
    pub fn retarget(&self, clip: &MotionClip, src: &str, dst: &str) -> Result<MotionClip> {
        let primal = self.encode(src, clip)?;
        self.decode(dst, &primal, clip)
    }

    // -- batched losses -------------------------------------------------------

    /// Build a batch from clip windows.
    pub fn make_batch(
        &self,
        id: &str,
        clips: &[MotionClip],
        windows: &[(usize, usize)],
    ) -> Result<MotionBatch> {
        let sys = self.system(id)?;
        let t_len = self.config.window;
        let b = windows.len();
        let mut dyn6d = crate::nn::zeros(&[b, t_len, sys.edges() * 6]);
        let mut fk_target = crate::nn::zeros(&[b, t_len, sys.spec.joint_count() * 3]);
        let mut root_pos = Array2::zeros((t_len, 3));
        let mut root_mats = Array3::zeros((t_len, 3, 3));
        for ti in 0..t_len {
            root_mats[(ti, 0, 0)] = 1.0;
            root_mats[(ti, 1, 1)] = 1.0;
            root_mats[(ti, 2, 2)] = 1.0;
            root_pos[(ti, 2)] = sys.spec.ref_root.z;
        }
        let mut fps = 30.0;
        for (bi, &(ci, start)) in windows.iter().enumerate() {
            let clip = &clips[ci];
            fps = clip.fps;
            let feats = dyn_features(sys, clip);
            let fk = fk_flat(&sys.spec, clip)?;
            for ti in 0..t_len {
                for c in 0..sys.edges() * 6 {
                    dyn6d[[bi, ti, c]] = feats[(start + ti, c)];
                }
                for c in 0..sys.spec.joint_count() * 3 {
                    fk_target[[bi, ti, c]] = fk[(start + ti, c)];
                }
            }
        }
        // batches share a canonical root track (clips are root-centered at
        // encode time; the root reference passes through unchanged)
        Ok(MotionBatch {
            dyn6d,
            fk_target,
            root_pos,
            root_mats,
            fps,
        })
    }

    fn velocity(t: &mut Tape, pos: Var, fps: f64, height: f64) -> Var {
        let t_len = t.value(pos).shape()[1];
        let next = t.slice_axis(pos, 1, 1, t_len);
        let prev = t.slice_axis(pos, 1, 0, t_len - 1);
        let d = t.sub(next, prev);
        t.scale(d, fps / height)
    }

    /// Generator-view losses on paired batches. With `second` = None the
    /// cross-skeleton terms (lc, ee, adv) are skipped (pure autoencoding).
    #[allow(clippy::too_many_arguments)]
    fn losses_on_tape(
        &self,
        t: &mut Tape,
        store: &ParamStore,
        id_a: &str,
        batch_a: &MotionBatch,
        id_b: Option<&str>,
        batch_b: Option<&MotionBatch>,
        freeze_dis: bool,
    ) -> (Var, LossBreakdown) {
        if freeze_dis {
            for id in self.systems.keys() {
                t.freeze(&format!("{id}.dis."));
            }
        }
        let mut rec_terms: Vec<Var> = Vec::new();
        let mut lc_terms: Vec<Var> = Vec::new();
        let mut ee_terms: Vec<Var> = Vec::new();
        let mut adv_terms: Vec<Var> = Vec::new();

        let pairs: Vec<(&str, &MotionBatch)> = match (id_b, batch_b) {
            (Some(idb), Some(bb)) => vec![(id_a, batch_a), (idb, bb)],
            _ => vec![(id_a, batch_a)],
        };

        let mut latents: Vec<Var> = Vec::new();
        for &(id, batch) in &pairs {
            let sys = &self.systems[id];
            let x = t.constant(batch.dyn6d.clone());
            let latent = self.encode_on_tape(t, store, id, x);
            latents.push(latent);
            let (d_hat, s_hat) = self.decode_on_tape(t, store, id, latent);
            // rotation reconstruction
            let diff = t.sub(d_hat, x);
            let sq = t.square(diff);
            rec_terms.push(t.mean_all(sq));
            // FK reconstruction
            let fk_hat = tape_fk(
                t,
                sys,
                d_hat,
                OffsetSource::Decoded(s_hat),
                &batch.root_pos,
                &batch.root_mats,
            );
            let fk_ref = t.constant(batch.fk_target.clone());
            let fk_diff = t.sub(fk_hat, fk_ref);
            let fk_sq = t.square(fk_diff);
            rec_terms.push(t.mean_all(fk_sq));
        }

        if pairs.len() == 2 {
            let (id_b, batch_b) = (pairs[1].0, pairs[1].1);
            for (src, dst, latent_src, batch_src, batch_dst) in [
                (id_a, id_b, latents[0], batch_a, batch_b),
                (id_b, id_a, latents[1], batch_b, batch_a),
            ] {
                let sys_dst = &self.systems[dst];
                let (d_cross, _s_cross) = self.decode_on_tape(t, store, dst, latent_src);
                // latent consistency: re-encode the retargeted motion
                let re = self.encode_on_tape(t, store, dst, d_cross);
                let lc_diff = t.sub(re, latent_src);
                let lc_abs = t.abs(lc_diff);
                lc_terms.push(t.mean_all(lc_abs));
                // end-effector normalized velocities
                let fk_cross = tape_fk(
                    t,
                    sys_dst,
                    d_cross,
                    OffsetSource::Fixed,
                    &batch_dst.root_pos,
                    &batch_dst.root_mats,
                );
                let v_cross = Self::velocity(t, fk_cross, batch_dst.fps, sys_dst.spec.height);
                // source end-effector velocities, constant
                let src_sys = &self.systems[src];
                let v_src_const = {
                    let fk = &batch_src.fk_target;
                    let (b, tl, jc) = (fk.shape()[0], fk.shape()[1], fk.shape()[2]);
                    let mut v = crate::nn::zeros(&[b, tl - 1, jc]);
                    for bi in 0..b {
                        for ti in 0..tl - 1 {
                            for c in 0..jc {
                                v[[bi, ti, c]] = (fk[[bi, ti + 1, c]] - fk[[bi, ti, c]])
                                    * batch_src.fps
                                    / src_sys.spec.height;
                            }
                        }
                    }
                    v
                };
                // align end-effector channels across skeletons: project both
                // (B,T-1,J*3) tracks onto (B,T-1,5*3) in canonical EE order
                let select_ee = |t: &mut Tape, x: Var, sys: &SkeletonSystem| -> Var {
                    let cols: Vec<Var> = sys
                        .graph
                        .end_effectors
                        .iter()
                        .map(|&j| t.slice_axis(x, 2, j * 3, j * 3 + 3))
                        .collect();
                    t.concat(2, &cols)
                };
                let vc = select_ee(t, v_cross, sys_dst);
                let vs_full = t.constant(v_src_const);
                let vs = select_ee(t, vs_full, src_sys);
                let ee_diff = t.sub(vc, vs);
                let ee_sq = t.square(ee_diff);
                ee_terms.push(t.mean_all(ee_sq));
                // adversarial, as the paper writes it: Dis(fake)^2 + (1 - Dis(recon))^2
                let dis_fake = self.discriminate_on_tape(t, store, dst, d_cross);
                let fake_sq = t.square(dis_fake);
                adv_terms.push(t.mean_all(fake_sq));
                let (d_recon, _) = self.decode_on_tape(t, store, dst, latents[if dst == id_b { 1 } else { 0 }]);
                let dis_recon = self.discriminate_on_tape(t, store, dst, d_recon);
                let neg_recon = t.neg(dis_recon);
                let one_minus = t.add_scalar(neg_recon, 1.0);
                let recon_sq = t.square(one_minus);
                adv_terms.push(t.mean_all(recon_sq));
            }
        }

        let sum_terms = |t: &mut Tape, terms: &[Var]| -> Var {
            match terms.len() {
                0 => t.scalar(0.0),
                _ => {
                    let mut acc = terms[0];
                    for &v in &terms[1..] {
                        acc = t.add(acc, v);
                    }
                    acc
                }
            }
        };
        let rec = sum_terms(t, &rec_terms);
        let lc = sum_terms(t, &lc_terms);
        let ee = sum_terms(t, &ee_terms);
        let adv = sum_terms(t, &adv_terms);
        let lc_w = t.scale(lc, self.config.lambda_lc);
        let ee_w = t.scale(ee, self.config.lambda_ee);
        let adv_w = t.scale(adv, self.config.lambda_adv);
        let mut total = t.add(rec, lc_w);
        total = t.add(total, ee_w);
        total = t.add(total, adv_w);
        let breakdown = LossBreakdown {
            rec: t.scalar_value(rec),
            lc: t.scalar_value(lc),
            ee: t.scalar_value(ee),
            adv: t.scalar_value(adv),
            total: t.scalar_value(total),
        };
        (total, breakdown)
    }

    /// Public loss evaluation (no parameter updates).
    pub fn retarget_losses(&self, id_a: &str, batch_a: &MotionBatch, id_b: Option<&str>, batch_b: Option<&MotionBatch>) -> LossBreakdown {
        let mut t = Tape::new();
        let (_, breakdown) =
            self.losses_on_tape(&mut t, &self.store, id_a, batch_a, id_b, batch_b, true);
        breakdown
    }

    /// Critic loss: least-squares complement of the generator objective.
    fn critic_loss_on_tape(
        &self,
        t: &mut Tape,
        store: &ParamStore,
        dst: &str,
        fake: &TensorD,
        recon: &TensorD,
    ) -> Var {
        let f = t.constant(fake.clone());
        let r = t.constant(recon.clone());
        let dis_f = self.discriminate_on_tape(t, store, dst, f);
        let neg_f = t.neg(dis_f);
        let one_minus_f = t.add_scalar(neg_f, 1.0);
        let lf = t.square(one_minus_f);
        let lf = t.mean_all(lf);
        let dis_r = self.discriminate_on_tape(t, store, dst, r);
        let lr = t.square(dis_r);
        let lr = t.mean_all(lr);
        t.add(lf, lr)
    }
}

// ---------------------------------------------------------------------------
// training

#[derive(Debug, Clone, serde::Serialize)]
pub struct EpochStats {
    pub epoch: usize,
    pub train: LossBreakdown,
    pub val_rec: f64,
}

pub struct TrainReport {
    pub model: RetargetModel,
    pub curves: Vec<EpochStats>,
    pub diverged: bool,
    pub initial_val_rec: f64,
    pub final_val_rec: f64,
}

fn window_starts(clips: &[MotionClip], window: usize) -> Vec<(usize, usize)> {
    let mut out = Vec::new();
    for (ci, c) in clips.iter().enumerate() {
        if c.frame_count() >= window {
            out.push((ci, 0));
        }
    }
    out
}

/// Train the retargeting pair (or a single-skeleton autoencoder).
///
/// Corpora must hold height-normalized clips on registered skeletons.
pub fn train_retargeter(
    specs: BTreeMap<String, SkeletonSpec>,
    corpora: &BTreeMap<String, Vec<MotionClip>>,
    config: RetargetConfig,
) -> Result<TrainReport> {
    let model = RetargetModel::new(specs, config.clone())?;
    train_retargeter_from(model, corpora)
}

pub fn train_retargeter_from(
    mut model: RetargetModel,
    corpora: &BTreeMap<String, Vec<MotionClip>>,
) -> Result<TrainReport> {
    let config = model.config.clone();
    let ids: Vec<String> = corpora.keys().cloned().collect();
    if ids.is_empty() {
        return Err(Error::config("no corpora supplied"));
    }
    for id in &ids {
        model.system(id)?;
    }
    let paired = ids.len() >= 2;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed.wrapping_add(0xBEEF));

    // train/holdout split per skeleton
    let mut train_clips: BTreeMap<String, Vec<MotionClip>> = BTreeMap::new();
    let mut val_clips: BTreeMap<String, Vec<MotionClip>> = BTreeMap::new();
    for id in &ids {
        let clips = &corpora[id];
        let n_hold = ((clips.len() as f64 * config.holdout).ceil() as usize).max(1);
        let split = clips.len().saturating_sub(n_hold);
        train_clips.insert(id.clone(), clips[..split].to_vec());
        val_clips.insert(id.clone(), clips[split..].to_vec());
    }

    let mut gen_opt = Adam::new(AdamConfig {
        lr: config.lr,
        ..Default::default()
    });
    let mut dis_opt = Adam::new(AdamConfig {
        lr: config.lr,
        ..Default::default()
    });

    let val_batches: BTreeMap<String, MotionBatch> = ids
        .iter()
        .map(|id| {
            let clips = &val_clips[id];
            let mut windows = window_starts(clips, config.window);
            windows.truncate(config.batch.max(8));
            (id.clone(), model.make_batch(id, clips, &windows).unwrap())
        })
        .collect();

    let eval_val = |model: &RetargetModel| -> f64 {
        if paired {
            model
                .retarget_losses(
                    &ids[0],
                    &val_batches[&ids[0]],
                    Some(&ids[1]),
                    Some(&val_batches[&ids[1]]),
                )
                .rec
        } else {
            model
                .retarget_losses(&ids[0], &val_batches[&ids[0]], None, None)
                .rec
        }
    };

    let initial_val_rec = eval_val(&model);
    let mut curves = Vec::new();
    let mut diverged = false;
    let mut last_good = model.store.clone();

    let steps_per_epoch = {
        let n: usize = ids.iter().map(|id| train_clips[id].len()).min().unwrap();
        (n / config.batch).max(1)
    };

    'training: for epoch in 0..config.epochs {
        let mut epoch_loss = LossBreakdown {
            rec: 0.0,
            lc: 0.0,
            ee: 0.0,
            adv: 0.0,
            total: 0.0,
        };
        for _ in 0..steps_per_epoch {
            // sample windows
            let sample = |clips: &[MotionClip], rng: &mut ChaCha8Rng| -> Vec<(usize, usize)> {
                (0..config.batch)
                    .map(|_| {
                        let ci = rng.gen_range(0..clips.len());
                        let span = clips[ci].frame_count().saturating_sub(config.window);
                        let start = if span == 0 { 0 } else { rng.gen_range(0..span) };
                        (ci, (start / D_RE) * D_RE)
                    })
                    .collect()
            };
            let batch_a = model.make_batch(&ids[0], &train_clips[&ids[0]], &sample(&train_clips[&ids[0]], &mut rng))?;
            let batch_b = if paired {
                Some(model.make_batch(&ids[1], &train_clips[&ids[1]], &sample(&train_clips[&ids[1]], &mut rng))?)
            } else {
                None
            };

            // generator step (critic frozen)
            let mut tape = Tape::new();
            let (total, breakdown) = model.losses_on_tape(
                &mut tape,
                &model.store,
                &ids[0],
                &batch_a,
                if paired { Some(&ids[1]) } else { None },
                batch_b.as_ref(),
                true,
            );
            if !breakdown.total.is_finite() {
                diverged = true;
                model.store = last_good;
                break 'training;
            }
            let grads = tape.backward(total).params(&model.store);
            gen_opt.step(&mut model.store, &grads);

            // critic step on detached motions
            if paired {
                let (bb, ida, idb) = (batch_b.as_ref().unwrap(), &ids[0], &ids[1]);
                for (src, dst, batch_src, batch_dst) in
                    [(ida, idb, &batch_a, bb), (idb, ida, bb, &batch_a)]
                {
                    let mut t2 = Tape::new();
                    // regenerate fake/recon without tracking generator grads
                    for id in model.systems.keys() {
                        t2.freeze(&format!("{id}.enc."));
                        t2.freeze(&format!("{id}.dec."));
                    }
                    let x = t2.constant(batch_src.dyn6d.clone());
                    let latent = model.encode_on_tape(&mut t2, &model.store, src, x);
                    let (fake, _) = model.decode_on_tape(&mut t2, &model.store, dst, latent);
                    let xb = t2.constant(batch_dst.dyn6d.clone());
                    let latent_b = model.encode_on_tape(&mut t2, &model.store, dst, xb);
                    let (recon, _) = model.decode_on_tape(&mut t2, &model.store, dst, latent_b);
                    let fake_v = t2.value(fake).clone();
                    let recon_v = t2.value(recon).clone();
                    let mut t3 = Tape::new();
                    let closs = model.critic_loss_on_tape(&mut t3, &model.store, dst, &fake_v, &recon_v);
                    let cgrads = t3.backward(closs).params(&model.store);
                    dis_opt.step(&mut model.store, &cgrads);
                }
            }
            epoch_loss.rec += breakdown.rec / steps_per_epoch as f64;
            epoch_loss.lc += breakdown.lc / steps_per_epoch as f64;
            epoch_loss.ee += breakdown.ee / steps_per_epoch as f64;
            epoch_loss.adv += breakdown.adv / steps_per_epoch as f64;
            epoch_loss.total += breakdown.total / steps_per_epoch as f64;
        }
        last_good = model.store.clone();
        let val_rec = eval_val(&model);
        curves.push(EpochStats {
            epoch,
            train: epoch_loss,
            val_rec,
        });
    }

    let final_val_rec = eval_val(&model);
    Ok(TrainReport {
        model,
        curves,
        diverged,
        initial_val_rec,
        final_val_rec,
    })
}

/// Serialize loss curves as CSV.
pub fn curves_to_csv(curves: &[EpochStats]) -> String {
    let mut out = String::from("epoch,rec,lc,ee,adv,total,val_rec\n");
    for c in curves {
        out.push_str(&format!(
            "{},{:.9},{:.9},{:.9},{:.9},{:.9},{:.9}\n",
            c.epoch, c.train.rec, c.train.lc, c.train.ee, c.train.adv, c.train.total, c.val_rec
        ));
    }
    out
}

// ---------------------------------------------------------------------------
// persistence

impl RetargetModel {
    pub fn to_checkpoint(&self, config_hash: &str) -> Result<crate::ckpt::Checkpoint> {
        let skeleton_meta: BTreeMap<String, serde_json::Value> = self
            .systems
            .iter()
            .map(|(id, sys)| {
                (
                    id.clone(),
                    serde_json::json!({
                        "spec": sys.spec,
                        "pooling": sys.pooling,
                    }),
                )
            })
            .collect();
        let meta = serde_json::json!({
            "config": self.config,
            "skeletons": skeleton_meta,
        });
        Ok(
            crate::ckpt::Checkpoint::new("retarget", config_hash, meta, self.store.clone())
                .with_skeletons(self.skeleton_ids()),
        )
    }

    pub fn from_checkpoint(ck: &crate::ckpt::Checkpoint) -> Result<Self> {
        ck.expect_kind("retarget")?;
        let config: RetargetConfig = serde_json::from_value(ck.meta["config"].clone())
            .map_err(|e| Error::Checkpoint(format!("config: {e}")))?;
        let skeletons = ck.meta["skeletons"]
            .as_object()
            .ok_or_else(|| Error::Checkpoint("missing skeletons".into()))?;
        let mut specs = BTreeMap::new();
        for (id, v) in skeletons {
            let spec: SkeletonSpec = serde_json::from_value(v["spec"].clone())
                .map_err(|e| Error::Checkpoint(format!("skeleton {id}: {e}")))?;
            specs.insert(id.clone(), spec);
        }
        let mut model = RetargetModel::new(specs, config)?;
        if model.store.names().count() != ck.params.names().count() {
            return Err(Error::Checkpoint(
                "parameter inventory does not match the architecture".into(),
            ));
        }
        model.store = ck.params.clone();
        Ok(model)
    }
}

/// Per-end-effector normalized velocity RMS gap between two clips (Eq-7-style
/// oracle, computed directly on FK trajectories).
pub fn ee_velocity_rms_gap(
    spec_a: &SkeletonSpec,
    clip_a: &MotionClip,
    spec_b: &SkeletonSpec,
    clip_b: &MotionClip,
) -> Result<f64> {
    let ga = SkeletonGraph::new(spec_a)?;
    let gb = SkeletonGraph::new(spec_b)?;
    let fa = crate::skeleton::forward_kinematics(spec_a, clip_a)?;
    let fb = crate::skeleton::forward_kinematics(spec_b, clip_b)?;
    let t = clip_a.frame_count().min(clip_b.frame_count());
    let mut acc = 0.0;
    let mut count = 0usize;
    for (ea, eb) in ga.end_effectors.iter().zip(gb.end_effectors.iter()) {
        for ti in 0..t - 1 {
            for c in 0..3 {
                let va = (fa[(ti + 1, *ea, c)] - fa[(ti, *ea, c)]) * clip_a.fps / spec_a.height;
                let vb = (fb[(ti + 1, *eb, c)] - fb[(ti, *eb, c)]) * clip_b.fps / spec_b.height;
                acc += (va - vb) * (va - vb);
                count += 1;
            }
        }
    }
    Ok((acc / count as f64).sqrt())
}
