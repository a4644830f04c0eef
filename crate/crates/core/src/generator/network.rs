use rand::Rng;

use super::config::{GeneratorConfig, BRANCH_CHANNELS};
use super::ring::{ring_adjacency, RingGraph};
use crate::error::{Error, Result};
use crate::geometry::{initial_contour, Contour, Point01};
use crate::layers::{Conv, ConvReluCache, Init, Linear, ParamBuilder};
use crate::numerics::{
    bilinear_backward, bilinear_sample, cell, linear_backward, linear_forward, relu, relu_backward, sigmoid,
    sigmoid_backward, Gradients, ParamId, ParamStore, Tensor,
};

/// Mean of each node's ring neighbors, `K×D → K×D`.
fn neighbor_mean(h: &Tensor, g: &RingGraph) -> Tensor {
    let d = h.dim(1);
    let mut out = Tensor::zeros(h.shape());
    let hd = h.data();
    for (i, row) in out.data_mut().chunks_exact_mut(d).enumerate() {
        let nbrs = g.neighbors(i);
        let inv = 1.0 / nbrs.len() as f64;
        for &j in nbrs {
            for (o, v) in row.iter_mut().zip(&hd[j * d..(j + 1) * d]) {
                *o += v;
            }
        }
        row.iter_mut().for_each(|v| *v *= inv);
    }
    out
}

/// Adjoint of [`neighbor_mean`].
fn neighbor_mean_adjoint(dagg: &Tensor, g: &RingGraph) -> Tensor {
    let d = dagg.dim(1);
    let mut out = Tensor::zeros(dagg.shape());
    let src = dagg.data();
    let od = out.data_mut();
    for i in 0..g.len() {
        let nbrs = g.neighbors(i);
        let inv = 1.0 / nbrs.len() as f64;
        for &j in nbrs {
            for (o, v) in od[j * d..(j + 1) * d].iter_mut().zip(&src[i * d..(i + 1) * d]) {
                *o += v * inv;
            }
        }
    }
    out
}

fn gcn_pre(h: &Tensor, agg: &Tensor, w_self: &Tensor, w_neigh: &Tensor, bias: &Tensor) -> Result<Tensor> {
    let mut z = linear_forward(h, w_self, bias)?;
    let zero = Tensor::zeros(bias.shape());
    z.add_assign(&linear_forward(agg, w_neigh, &zero)?)?;
    Ok(z)
}

/// One ring-graph convolution:
/// `h'_i = ReLU(W_self·h_i + W_neigh·mean_{j∈N(i)} h_j + b)`.
pub fn gcn_layer(h: &Tensor, g: &RingGraph, w_self: &Tensor, w_neigh: &Tensor, bias: &Tensor) -> Result<Tensor> {
    h.expect_ndim("gcn_layer", 2)?;
    if h.dim(0) != g.len() {
        return Err(Error::ShapeMismatch {
            op: "gcn_layer",
            left: h.shape().to_vec(),
            right: vec![g.len()],
        });
    }
    let agg = neighbor_mean(h, g);
    Ok(relu(&gcn_pre(h, &agg, w_self, w_neigh, bias)?))
}

/// Gradients of one [`gcn_layer`] call.
#[derive(Debug, Clone)]
pub struct GcnGrads {
    pub dh: Tensor,
    pub dw_self: Tensor,
    pub dw_neigh: Tensor,
    pub db: Tensor,
}

fn gcn_backward_cached(
    input: &Tensor,
    agg: &Tensor,
    pre: &Tensor,
    g: &RingGraph,
    w_self: &Tensor,
    w_neigh: &Tensor,
    dy: &Tensor,
) -> Result<GcnGrads> {
    let dpre = relu_backward(pre, dy)?;
    let gs = linear_backward(input, w_self, &dpre)?;
    let gn = linear_backward(agg, w_neigh, &dpre)?;
    let mut dh = gs.dx;
    dh.add_assign(&neighbor_mean_adjoint(&gn.dx, g))?;
    Ok(GcnGrads {
        dh,
        dw_self: gs.dw,
        dw_neigh: gn.dw,
        db: gs.db,
    })
}

/// Backward pass of [`gcn_layer`] for upstream gradient `dy`.
pub fn gcn_layer_backward(
    h: &Tensor,
    g: &RingGraph,
    w_self: &Tensor,
    w_neigh: &Tensor,
    bias: &Tensor,
    dy: &Tensor,
) -> Result<GcnGrads> {
    let agg = neighbor_mean(h, g);
    let pre = gcn_pre(h, &agg, w_self, w_neigh, bias)?;
    gcn_backward_cached(h, &agg, &pre, g, w_self, w_neigh, dy)
}

#[derive(Debug, Clone, Copy)]
struct GcnParams {
    w_self: ParamId,
    w_neigh: ParamId,
    bias: ParamId,
}

#[derive(Debug, Clone, Copy)]
struct Branch {
    conv: Conv,
    fc: Linear,
}

/// Everything the generator hands downstream.
#[derive(Debug, Clone)]
pub struct GeneratorOutput {
    pub contour: Contour,
    pub backbone_fm: Tensor,
    pub fused_fm: Tensor,
    pub edge_map: Tensor,
    pub vertex_map: Tensor,
}

#[derive(Debug, Clone)]
struct BranchCache {
    conv: ConvReluCache,
    flat: Tensor,
    logits: Tensor,
    out: Tensor,
}

#[derive(Debug, Clone)]
struct GcnCache {
    input: Tensor,
    agg: Tensor,
    pre: Tensor,
}

#[derive(Debug, Clone)]
struct IterationCache {
    points: Vec<Point01>,
    layers: Vec<GcnCache>,
    last_hidden: Tensor,
    unclamped: Vec<[f64; 2]>,
}

/// Intermediate activations recorded by [`Generator::forward`].
#[derive(Debug, Clone)]
pub struct GeneratorTape {
    stages: Vec<ConvReluCache>,
    tail: Vec<ConvReluCache>,
    edge: BranchCache,
    vertex: BranchCache,
    fuse: ConvReluCache,
    iterations: Vec<IterationCache>,
}

impl GeneratorTape {
    /// Pre-sigmoid edge and vertex branch outputs, each `1×G²`.
    pub fn branch_logits(&self) -> (&Tensor, &Tensor) {
        (&self.edge.logits, &self.vertex.logits)
    }
}

/// Upstream gradients entering the generator.
#[derive(Debug, Clone, Default)]
pub struct GeneratorGrads {
    /// d(loss)/d(final contour vertex).
    pub contour: Vec<[f64; 2]>,
    pub backbone_fm: Option<Tensor>,
    pub edge_logits: Option<Tensor>,
    pub vertex_logits: Option<Tensor>,
}

impl GeneratorTape {
    /// Every discrete choice made by the forward pass: ReLU signs, clamped
    /// coordinates and the sampling cells of refined points. Two passes with
    /// equal keys lie on the same smooth piece of the network.
    pub(crate) fn piece_key(&self, grid: usize) -> Vec<u32> {
        let signs = |t: &Tensor| t.data().iter().map(|&v| (v > 0.0) as u32).collect::<Vec<_>>();
        let mut key = Vec::new();
        for c in self.stages.iter().chain(&self.tail).chain([&self.edge.conv, &self.vertex.conv, &self.fuse]) {
            key.extend(signs(&c.pre));
        }
        for it in &self.iterations {
            for l in &it.layers {
                key.extend(signs(&l.pre));
            }
            for &[x, y] in &it.unclamped {
                key.push((0.0..=1.0).contains(&x) as u32);
                key.push((0.0..=1.0).contains(&y) as u32);
            }
            for &p in &it.points {
                let (cx, cy) = cell(p, grid, grid);
                key.push(cx as u32);
                key.push(cy as u32);
            }
        }
        key
    }
}

/// Backbone CNN, edge/vertex branches, feature fusion and the ring GCN that
/// regresses vertex offsets from an initial circle.
#[derive(Debug, Clone)]
pub struct Generator {
    cfg: GeneratorConfig,
    ring: RingGraph,
    initial: Contour,
    stages: Vec<Conv>,
    tail: [Conv; 2],
    edge: Branch,
    vertex: Branch,
    fuse: Conv,
    gcn: Vec<GcnParams>,
    offset: Linear,
}

impl Generator {
    /// Registers freshly initialized parameters in `store`.
    pub fn new<R: Rng>(cfg: GeneratorConfig, store: &mut ParamStore, rng: &mut R) -> Result<Self> {
        Self::build(cfg, ParamBuilder::Create { store, rng })
    }

    /// Binds to parameters already present in `store`.
    pub fn bind(cfg: GeneratorConfig, store: &ParamStore) -> Result<Self> {
        Self::build(cfg, ParamBuilder::<rand::rngs::ThreadRng>::Bind { store })
    }

    fn build<R: Rng>(cfg: GeneratorConfig, mut pb: ParamBuilder<'_, R>) -> Result<Self> {
        cfg.validate()?;
        let mut stages = Vec::new();
        let mut cin = cfg.in_channels;
        for i in 0..cfg.stages() {
            let cout = cfg.stage_channels(i);
            stages.push(pb.conv(&format!("backbone.stage{i}"), cin, cout, 3, 2)?);
            cin = cout;
        }
        let cb = cfg.backbone_channels;
        let tail = [
            pb.conv("backbone.conv0", cin, cb, 3, 1)?,
            pb.conv("backbone.conv1", cb, cb, 3, 1)?,
        ];
        let g2 = cfg.grid_size * cfg.grid_size;
        let mut branch = |name: &str| -> Result<Branch> {
            Ok(Branch {
                conv: pb.conv(&format!("{name}.conv"), cb, BRANCH_CHANNELS, 3, 1)?,
                fc: pb.linear(&format!("{name}.fc"), BRANCH_CHANNELS * g2, g2, false)?,
            })
        };
        let edge = branch("edge")?;
        let vertex = branch("vertex")?;
        let fuse = pb.conv("fuse", cb + 2, cfg.fused_channels, 3, 1)?;
        let mut gcn = Vec::new();
        let mut din = cfg.node_input_dim();
        for l in 0..cfg.gcn_layers {
            let d = cfg.gcn_hidden;
            let glorot = || Init::Glorot { fan_in: din, fan_out: d };
            gcn.push(GcnParams {
                w_self: pb.param(&format!("gcn.{l}.self.weight"), &[d, din], glorot())?,
                w_neigh: pb.param(&format!("gcn.{l}.neigh.weight"), &[d, din], glorot())?,
                bias: pb.param(&format!("gcn.{l}.bias"), &[d], Init::Zeros)?,
            });
            din = d;
        }
        let offset = pb.linear("offset", din, 2, true)?;
        Ok(Self {
            ring: ring_adjacency(cfg.num_vertices)?,
            initial: initial_contour(cfg.num_vertices)?,
            cfg,
            stages,
            tail,
            edge,
            vertex,
            fuse,
            gcn,
            offset,
        })
    }

    pub fn config(&self) -> &GeneratorConfig {
        &self.cfg
    }

    pub fn ring(&self) -> &RingGraph {
        &self.ring
    }

    fn check_image(&self, image: &Tensor) -> Result<()> {
        let s = self.cfg.image_size;
        image.expect_shape("generator input", &[self.cfg.in_channels, s, s])
    }

    fn backbone_tape(&self, p: &ParamStore, image: &Tensor) -> Result<(Tensor, Vec<ConvReluCache>, Vec<ConvReluCache>)> {
        self.check_image(image)?;
        let mut x = image.clone();
        let mut stages = Vec::with_capacity(self.stages.len());
        for conv in &self.stages {
            let (y, cache) = conv.forward_relu(p, x)?;
            stages.push(cache);
            x = y;
        }
        let mut tail = Vec::with_capacity(2);
        for conv in &self.tail {
            let (y, cache) = conv.forward_relu(p, x)?;
            tail.push(cache);
            x = y;
        }
        Ok((x, stages, tail))
    }

    /// `image: C×S×S → C_b×G×G`.
    pub fn backbone_forward(&self, p: &ParamStore, image: &Tensor) -> Result<Tensor> {
        Ok(self.backbone_tape(p, image)?.0)
    }

    fn branch_tape(&self, p: &ParamStore, branch: &Branch, backbone: &Tensor) -> Result<BranchCache> {
        let g = self.cfg.grid_size;
        let (h, conv) = branch.conv.forward_relu(p, backbone.clone())?;
        let flat = h.reshape(&[1, BRANCH_CHANNELS * g * g])?;
        let logits = branch.fc.forward(p, &flat)?;
        let out = sigmoid(&logits);
        Ok(BranchCache { conv, flat, logits, out })
    }

    /// Edge and vertex maps, each `1×G×G` with values in (0, 1).
    pub fn branches_forward(&self, p: &ParamStore, backbone: &Tensor) -> Result<(Tensor, Tensor)> {
        let g = self.cfg.grid_size;
        let e = self.branch_tape(p, &self.edge, backbone)?;
        let v = self.branch_tape(p, &self.vertex, backbone)?;
        Ok((e.out.reshape(&[1, g, g])?, v.out.reshape(&[1, g, g])?))
    }

    fn concat(&self, backbone: &Tensor, edge: &Tensor, vertex: &Tensor) -> Result<Tensor> {
        let g = self.cfg.grid_size;
        let cb = self.cfg.backbone_channels;
        backbone.expect_shape("fuse_features backbone", &[cb, g, g])?;
        if edge.len() != g * g || vertex.len() != g * g {
            return Err(Error::ShapeMismatch {
                op: "fuse_features",
                left: edge.shape().to_vec(),
                right: vec![1, g, g],
            });
        }
        let mut data = Vec::with_capacity((cb + 2) * g * g);
        data.extend_from_slice(backbone.data());
        data.extend_from_slice(edge.data());
        data.extend_from_slice(vertex.data());
        Tensor::from_vec(&[cb + 2, g, g], data)
    }

    /// Channel-concatenates `(C_b + 2)` maps and applies the 3×3 fusion conv + ReLU.
    pub fn fuse_features(&self, p: &ParamStore, backbone: &Tensor, edge: &Tensor, vertex: &Tensor) -> Result<Tensor> {
        let cat = self.concat(backbone, edge, vertex)?;
        Ok(relu(&self.fuse.forward(p, &cat)?))
    }

    fn node_features(&self, points: &[Point01], fused: &Tensor) -> Result<Tensor> {
        let feats = bilinear_sample(fused, points)?;
        let cf = self.cfg.fused_channels;
        let din = self.cfg.node_input_dim();
        let mut data = Vec::with_capacity(points.len() * din);
        for (p, row) in points.iter().zip(feats.data().chunks_exact(cf)) {
            data.push(p.x);
            data.push(p.y);
            data.extend_from_slice(row);
        }
        Tensor::from_vec(&[points.len(), din], data)
    }

    /// Runs the full generator and records what [`Generator::backward`] needs.
    pub fn forward(&self, p: &ParamStore, image: &Tensor) -> Result<(GeneratorOutput, GeneratorTape)> {
        let g = self.cfg.grid_size;
        let (backbone, stages, tail) = self.backbone_tape(p, image)?;
        let edge = self.branch_tape(p, &self.edge, &backbone)?;
        let vertex = self.branch_tape(p, &self.vertex, &backbone)?;
        let cat = self.concat(&backbone, &edge.out, &vertex.out)?;
        let (fused, fuse) = self.fuse.forward_relu(p, cat)?;

        let mut points = self.initial.vertices().to_vec();
        let mut iterations = Vec::with_capacity(self.cfg.refine_iterations);
        for _ in 0..self.cfg.refine_iterations {
            let mut h = self.node_features(&points, &fused)?;
            let mut layers = Vec::with_capacity(self.gcn.len());
            for layer in &self.gcn {
                let agg = neighbor_mean(&h, &self.ring);
                let pre = gcn_pre(&h, &agg, p.value(layer.w_self), p.value(layer.w_neigh), p.value(layer.bias))?;
                let next = relu(&pre);
                layers.push(GcnCache { input: h, agg, pre });
                h = next;
            }
            let delta = self.offset.forward(p, &h)?;
            let unclamped: Vec<[f64; 2]> = points
                .iter()
                .zip(delta.data().chunks_exact(2))
                .map(|(pt, d)| [pt.x + d[0], pt.y + d[1]])
                .collect();
            let next: Vec<Point01> = unclamped.iter().map(|&[x, y]| Point01::new(x, y).clamped()).collect();
            iterations.push(IterationCache {
                points: std::mem::replace(&mut points, next),
                layers,
                last_hidden: h,
                unclamped,
            });
        }
        if points.iter().any(|p| !p.x.is_finite() || !p.y.is_finite()) {
            return Err(Error::NonFinite("predicted contour vertex".into()));
        }
        let contour = Contour::new(points)?;
        let out = GeneratorOutput {
            contour,
            backbone_fm: backbone,
            fused_fm: fused,
            edge_map: edge.out.clone().reshape(&[1, g, g])?,
            vertex_map: vertex.out.clone().reshape(&[1, g, g])?,
        };
        let tape = GeneratorTape {
            stages,
            tail,
            edge,
            vertex,
            fuse,
            iterations,
        };
        Ok((out, tape))
    }

    /// Inference only.
    pub fn predict_contour(&self, p: &ParamStore, image: &Tensor) -> Result<GeneratorOutput> {
        Ok(self.forward(p, image)?.0)
    }

    fn branch_backward(
        &self,
        p: &ParamStore,
        branch: &Branch,
        cache: &BranchCache,
        dmap: &[f64],
        dlogits_extra: Option<&Tensor>,
        grads: &mut Gradients,
    ) -> Result<Tensor> {
        let g = self.cfg.grid_size;
        let dout = Tensor::from_vec(&[1, g * g], dmap.to_vec())?;
        let mut dlogits = sigmoid_backward(&cache.out, &dout)?;
        if let Some(extra) = dlogits_extra {
            dlogits.add_assign(extra)?;
        }
        let dflat = branch.fc.backward(p, &cache.flat, &dlogits, grads)?;
        let dh = dflat.reshape(&[BRANCH_CHANNELS, g, g])?;
        Ok(branch
            .conv
            .backward_relu(p, &cache.conv, &dh, grads, true)?
            .expect("input gradient requested"))
    }

    /// Accumulates parameter gradients for the upstream gradients `up` into `grads`.
    pub fn backward(
        &self,
        p: &ParamStore,
        out: &GeneratorOutput,
        tape: &GeneratorTape,
        up: &GeneratorGrads,
        grads: &mut Gradients,
    ) -> Result<()> {
        let k = self.cfg.num_vertices;
        if up.contour.len() != k {
            return Err(Error::ShapeMismatch {
                op: "generator backward",
                left: vec![k, 2],
                right: vec![up.contour.len(), 2],
            });
        }
        let cf = self.cfg.fused_channels;
        let din = self.cfg.node_input_dim();
        let mut dfused = Tensor::zeros(out.fused_fm.shape());
        let mut dpts = up.contour.clone();
        for (t, it) in tape.iterations.iter().enumerate().rev() {
            // clamp passes gradient only where the unclamped value was in range
            let mut ddelta = Tensor::zeros(&[k, 2]);
            for ((d, &[ux, uy]), dd) in dpts.iter_mut().zip(&it.unclamped).zip(ddelta.data_mut().chunks_exact_mut(2)) {
                if !(0.0..=1.0).contains(&ux) {
                    d[0] = 0.0;
                }
                if !(0.0..=1.0).contains(&uy) {
                    d[1] = 0.0;
                }
                dd[0] = d[0];
                dd[1] = d[1];
            }
            let mut dh = self.offset.backward(p, &it.last_hidden, &ddelta, grads)?;
            for (layer, cache) in self.gcn.iter().zip(&it.layers).rev() {
                let gg = gcn_backward_cached(
                    &cache.input,
                    &cache.agg,
                    &cache.pre,
                    &self.ring,
                    p.value(layer.w_self),
                    p.value(layer.w_neigh),
                    &dh,
                )?;
                grads.accumulate(layer.w_self, &gg.dw_self)?;
                grads.accumulate(layer.w_neigh, &gg.dw_neigh)?;
                grads.accumulate(layer.bias, &gg.db)?;
                dh = gg.dh;
            }
            let mut dfeat = Tensor::zeros(&[k, cf]);
            for ((row, d), dp) in dh.data().chunks_exact(din).zip(dfeat.data_mut().chunks_exact_mut(cf)).zip(dpts.iter_mut()) {
                dp[0] += row[0];
                dp[1] += row[1];
                d.copy_from_slice(&row[2..]);
            }
            let (dfm, dcoord) = bilinear_backward(&out.fused_fm, &it.points, &dfeat)?;
            dfused.add_assign(&dfm)?;
            if t == 0 {
                break;
            }
            for (dp, dc) in dpts.iter_mut().zip(dcoord) {
                dp[0] += dc[0];
                dp[1] += dc[1];
            }
        }

        let dcat = self
            .fuse
            .backward_relu(p, &tape.fuse, &dfused, grads, true)?
            .expect("input gradient requested");
        let g = self.cfg.grid_size;
        let cb = self.cfg.backbone_channels;
        let plane = g * g;
        let (dback_part, dmaps) = dcat.data().split_at(cb * plane);
        let mut dbackbone = Tensor::from_vec(&[cb, g, g], dback_part.to_vec())?;
        if let Some(extra) = &up.backbone_fm {
            dbackbone.add_assign(extra)?;
        }
        let de = self.branch_backward(p, &self.edge, &tape.edge, &dmaps[..plane], up.edge_logits.as_ref(), grads)?;
        let dv = self.branch_backward(p, &self.vertex, &tape.vertex, &dmaps[plane..], up.vertex_logits.as_ref(), grads)?;
        dbackbone.add_assign(&de)?;
        dbackbone.add_assign(&dv)?;

        let mut dx = dbackbone;
        for (conv, cache) in self.tail.iter().zip(&tape.tail).rev() {
            dx = conv.backward_relu(p, cache, &dx, grads, true)?.expect("input gradient requested");
        }
        for (i, (conv, cache)) in self.stages.iter().zip(&tape.stages).enumerate().rev() {
            match conv.backward_relu(p, cache, &dx, grads, i > 0)? {
                Some(d) => dx = d,
                None => break,
            }
        }
        Ok(())
    }
}
