//! A minimal directed-graph model abstraction: parameter nodes, latent nodes,
//! and fixed data nodes, each stochastic node carrying a conditional kernel
//! over its parents. Supports log-density evaluation of partition elements
//! and ancestral simulation of the latent nodes given the parameters.

use std::collections::HashMap;

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::partition::PartitionSpec;

pub const LN_2PI: f64 = 1.8378770664093453;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct NodeId(pub(crate) u32);

impl NodeId {
    #[inline]
    fn idx(self) -> usize {
        self.0 as usize
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NodeRole {
    /// Top-level parameter (conditioned on in every predictive density).
    Param,
    /// Unobserved stochastic node that marginal WAIC integrates out.
    Latent,
    /// Observed node with a fixed value; never simulated over.
    Data,
}

/// Where a kernel argument comes from: a fixed constant or another node.
#[derive(Debug, Clone, Copy)]
pub enum Arg {
    Const(f64),
    Node(NodeId),
}

impl From<f64> for Arg {
    fn from(v: f64) -> Self {
        Arg::Const(v)
    }
}

impl From<NodeId> for Arg {
    fn from(id: NodeId) -> Self {
        Arg::Node(id)
    }
}

/// Conditional distribution of a node given its parents.
#[derive(Debug, Clone)]
pub enum KernelSpec {
    /// `N(mean, sd)` with the second argument a standard deviation.
    Normal { mean: Arg, sd: Arg },
    /// `N(mean, exp(log_var / 2))`: a normal whose log variance is an input.
    NormalLogVar { mean: Arg, log_var: Arg },
    /// Stationary head of an AR(1) path: `N(mean, sd / sqrt(1 - phi^2))`.
    ArStationary { phi: Arg, mean: Arg, sd: Arg },
    /// AR(1) transition: `N(mean + phi * (prev - mean), sd)`.
    ArStep { prev: Arg, phi: Arg, mean: Arg, sd: Arg },
    /// Half-normal on `[0, inf)` with scale `sd`.
    HalfNormal { sd: f64 },
    /// Uniform on `[lo, hi]`.
    Uniform { lo: f64, hi: f64 },
}

impl KernelSpec {
    pub fn normal(mean: impl Into<Arg>, sd: impl Into<Arg>) -> Self {
        KernelSpec::Normal { mean: mean.into(), sd: sd.into() }
    }

    pub fn normal_log_var(mean: impl Into<Arg>, log_var: impl Into<Arg>) -> Self {
        KernelSpec::NormalLogVar { mean: mean.into(), log_var: log_var.into() }
    }

    pub fn ar_stationary(phi: impl Into<Arg>, mean: impl Into<Arg>, sd: impl Into<Arg>) -> Self {
        KernelSpec::ArStationary { phi: phi.into(), mean: mean.into(), sd: sd.into() }
    }

    pub fn ar_step(
        prev: impl Into<Arg>,
        phi: impl Into<Arg>,
        mean: impl Into<Arg>,
        sd: impl Into<Arg>,
    ) -> Self {
        KernelSpec::ArStep {
            prev: prev.into(),
            phi: phi.into(),
            mean: mean.into(),
            sd: sd.into(),
        }
    }

    pub fn half_normal(sd: f64) -> Self {
        KernelSpec::HalfNormal { sd }
    }

    pub fn uniform(lo: f64, hi: f64) -> Self {
        KernelSpec::Uniform { lo, hi }
    }

}

/// Compiled kernel argument: constant or index into the node's parent list.
#[derive(Debug, Clone, Copy)]
enum Input {
    Const(f64),
    Parent(u8),
}

impl Input {
    #[inline(always)]
    fn get(self, parents: &[f64]) -> f64 {
        match self {
            Input::Const(c) => c,
            Input::Parent(i) => parents[i as usize],
        }
    }
}

#[derive(Debug, Clone)]
enum Kernel {
    Normal { mean: Input, sd: Input },
    NormalLogVar { mean: Input, log_var: Input },
    ArStationary { phi: Input, mean: Input, sd: Input },
    ArStep { prev: Input, phi: Input, mean: Input, sd: Input },
    HalfNormal { sd: f64 },
    Uniform { lo: f64, hi: f64 },
}

/// Support of a node's conditional distribution, used by the samplers to pick
/// a proposal transform.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Support {
    Real,
    Positive,
    Interval(f64, f64),
}

impl Kernel {
    #[inline(always)]
    fn log_density(&self, parents: &[f64], x: f64) -> f64 {
        match *self {
            Kernel::Normal { mean, sd } => {
                let m = mean.get(parents);
                let s = sd.get(parents);
                let z = (x - m) / s;
                -0.5 * LN_2PI - s.ln() - 0.5 * z * z
            }
            Kernel::NormalLogVar { mean, log_var } => {
                let m = mean.get(parents);
                let lv = log_var.get(parents);
                let d = x - m;
                -0.5 * LN_2PI - 0.5 * lv - 0.5 * d * d * (-lv).exp()
            }
            Kernel::ArStationary { phi, mean, sd } => {
                let p = phi.get(parents);
                let m = mean.get(parents);
                let s = sd.get(parents) / (1.0 - p * p).sqrt();
                let z = (x - m) / s;
                -0.5 * LN_2PI - s.ln() - 0.5 * z * z
            }
            Kernel::ArStep { prev, phi, mean, sd } => {
                let m0 = mean.get(parents);
                let m = m0 + phi.get(parents) * (prev.get(parents) - m0);
                let s = sd.get(parents);
                let z = (x - m) / s;
                -0.5 * LN_2PI - s.ln() - 0.5 * z * z
            }
            Kernel::HalfNormal { sd } => {
                if x < 0.0 {
                    f64::NEG_INFINITY
                } else {
                    std::f64::consts::LN_2 - 0.5 * LN_2PI - sd.ln() - 0.5 * (x / sd) * (x / sd)
                }
            }
            Kernel::Uniform { lo, hi } => {
                if x < lo || x > hi {
                    f64::NEG_INFINITY
                } else {
                    -(hi - lo).ln()
                }
            }
        }
    }

    fn draw<R: Rng>(&self, parents: &[f64], rng: &mut R) -> f64 {
        let std_normal = |rng: &mut R| -> f64 { StandardNormal.sample(rng) };
        match *self {
            Kernel::Normal { mean, sd } => mean.get(parents) + sd.get(parents) * std_normal(rng),
            Kernel::NormalLogVar { mean, log_var } => {
                mean.get(parents) + (0.5 * log_var.get(parents)).exp() * std_normal(rng)
            }
            Kernel::ArStationary { phi, mean, sd } => {
                let p = phi.get(parents);
                mean.get(parents) + sd.get(parents) / (1.0 - p * p).sqrt() * std_normal(rng)
            }
            Kernel::ArStep { prev, phi, mean, sd } => {
                let m0 = mean.get(parents);
                m0 + phi.get(parents) * (prev.get(parents) - m0)
                    + sd.get(parents) * std_normal(rng)
            }
            Kernel::HalfNormal { sd } => (sd * std_normal(rng)).abs(),
            Kernel::Uniform { lo, hi } => lo + (hi - lo) * rng.random::<f64>(),
        }
    }

    fn support(&self) -> Support {
        match *self {
            Kernel::HalfNormal { .. } => Support::Positive,
            Kernel::Uniform { lo, hi } => Support::Interval(lo, hi),
            _ => Support::Real,
        }
    }

    /// Conditional mean given parents, for the location-scale Gaussian
    /// kernels. `None` for kernels where a joint-Gaussian latent structure
    /// cannot be assumed.
    fn location(&self, parents: &[f64]) -> Option<f64> {
        match *self {
            Kernel::Normal { mean, .. } => Some(mean.get(parents)),
            Kernel::NormalLogVar { mean, .. } => Some(mean.get(parents)),
            Kernel::ArStationary { mean, .. } => Some(mean.get(parents)),
            Kernel::ArStep { prev, phi, mean, .. } => {
                let m0 = mean.get(parents);
                Some(m0 + phi.get(parents) * (prev.get(parents) - m0))
            }
            Kernel::HalfNormal { .. } | Kernel::Uniform { .. } => None,
        }
    }
}

#[derive(Debug, Clone)]
struct Node {
    name: String,
    role: NodeRole,
    observed: f64,
    parents: Vec<NodeId>,
    kernel: Kernel,
}

/// Builds a [`ModelGraph`] node by node. Latent nodes must be declared in an
/// order where each one's latent parents come earlier, which is also the
/// order ancestral simulation follows.
#[derive(Debug, Default)]
pub struct GraphBuilder {
    nodes: Vec<Node>,
    by_name: HashMap<String, NodeId>,
}

impl GraphBuilder {
    pub fn new() -> Self {
        Self::default()
    }

    fn push(&mut self, name: &str, role: NodeRole, observed: f64, spec: KernelSpec) -> Result<NodeId> {
        if self.by_name.contains_key(name) {
            return Err(Error::DuplicateName(name.to_string()));
        }
        let (kernel, parents) = self.compile(spec)?;
        let id = NodeId(self.nodes.len() as u32);
        self.nodes.push(Node { name: name.to_string(), role, observed, parents, kernel });
        self.by_name.insert(name.to_string(), id);
        Ok(id)
    }

    fn compile(&self, spec: KernelSpec) -> Result<(Kernel, Vec<NodeId>)> {
        let mut parents: Vec<NodeId> = Vec::new();
        let index_of = |arg: Arg, parents: &mut Vec<NodeId>| -> Result<Input> {
            match arg {
                Arg::Const(c) => Ok(Input::Const(c)),
                Arg::Node(id) => {
                    if id.idx() >= self.nodes.len() {
                        return Err(Error::InvalidGraph(format!(
                            "kernel references node id {} before it exists",
                            id.0
                        )));
                    }
                    let pos = parents.iter().position(|&p| p == id).unwrap_or_else(|| {
                        parents.push(id);
                        parents.len() - 1
                    });
                    Ok(Input::Parent(pos as u8))
                }
            }
        };
        let kernel = match spec {
            KernelSpec::Normal { mean, sd } => Kernel::Normal {
                mean: index_of(mean, &mut parents)?,
                sd: index_of(sd, &mut parents)?,
            },
            KernelSpec::NormalLogVar { mean, log_var } => Kernel::NormalLogVar {
                mean: index_of(mean, &mut parents)?,
                log_var: index_of(log_var, &mut parents)?,
            },
            KernelSpec::ArStationary { phi, mean, sd } => Kernel::ArStationary {
                phi: index_of(phi, &mut parents)?,
                mean: index_of(mean, &mut parents)?,
                sd: index_of(sd, &mut parents)?,
            },
            KernelSpec::ArStep { prev, phi, mean, sd } => Kernel::ArStep {
                prev: index_of(prev, &mut parents)?,
                phi: index_of(phi, &mut parents)?,
                mean: index_of(mean, &mut parents)?,
                sd: index_of(sd, &mut parents)?,
            },
            KernelSpec::HalfNormal { sd } => {
                if sd <= 0.0 {
                    return Err(Error::Domain(format!("half-normal sd must be positive, got {sd}")));
                }
                Kernel::HalfNormal { sd }
            }
            KernelSpec::Uniform { lo, hi } => {
                if !(lo < hi) {
                    return Err(Error::Domain(format!("uniform bounds out of order: [{lo}, {hi}]")));
                }
                Kernel::Uniform { lo, hi }
            }
        };
        Ok((kernel, parents))
    }

    /// Declare a top-level parameter with its prior.
    pub fn param(&mut self, name: &str, prior: KernelSpec) -> Result<NodeId> {
        self.push(name, NodeRole::Param, 0.0, prior)
    }

    /// Declare a latent (marginalizable) node.
    pub fn latent(&mut self, name: &str, kernel: KernelSpec) -> Result<NodeId> {
        self.push(name, NodeRole::Latent, 0.0, kernel)
    }

    /// Declare an observed data node with its fixed value.
    pub fn data(&mut self, name: &str, value: f64, kernel: KernelSpec) -> Result<NodeId> {
        if !value.is_finite() {
            return Err(Error::Domain(format!("data node `{name}` has non-finite value {value}")));
        }
        self.push(name, NodeRole::Data, value, kernel)
    }

    pub fn build(self) -> Result<ModelGraph> {
        let mut params = Vec::new();
        let mut latents = Vec::new();
        let mut data = Vec::new();
        for (i, node) in self.nodes.iter().enumerate() {
            let id = NodeId(i as u32);
            for &p in &node.parents {
                let parent = &self.nodes[p.idx()];
                match (node.role, parent.role) {
                    (_, NodeRole::Data) => {
                        return Err(Error::InvalidGraph(format!(
                            "node `{}` has data node `{}` as a parent",
                            node.name, parent.name
                        )))
                    }
                    (NodeRole::Latent, NodeRole::Latent) if p.idx() >= i => {
                        return Err(Error::InvalidGraph(format!(
                            "latent `{}` depends on later latent `{}`: declare parents first",
                            node.name, parent.name
                        )))
                    }
                    _ => {}
                }
            }
            match node.role {
                NodeRole::Param => params.push(id),
                NodeRole::Latent => latents.push(id),
                NodeRole::Data => data.push(id),
            }
        }
        if data.is_empty() {
            return Err(Error::InvalidGraph("model has no data nodes".to_string()));
        }
        let mut children: Vec<Vec<NodeId>> = vec![Vec::new(); self.nodes.len()];
        for (i, node) in self.nodes.iter().enumerate() {
            for &p in &node.parents {
                children[p.idx()].push(NodeId(i as u32));
            }
        }
        Ok(ModelGraph { nodes: self.nodes, by_name: self.by_name, params, latents, data, children })
    }
}

/// Immutable compiled model: share it freely, evaluate it against per-thread
/// [`Assignment`]s.
#[derive(Debug, Clone)]
pub struct ModelGraph {
    nodes: Vec<Node>,
    by_name: HashMap<String, NodeId>,
    params: Vec<NodeId>,
    latents: Vec<NodeId>,
    data: Vec<NodeId>,
    children: Vec<Vec<NodeId>>,
}

impl ModelGraph {
    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn params(&self) -> &[NodeId] {
        &self.params
    }

    /// Latent nodes in topological (declaration) order.
    pub fn latents(&self) -> &[NodeId] {
        &self.latents
    }

    pub fn data_nodes(&self) -> &[NodeId] {
        &self.data
    }

    pub fn name(&self, id: NodeId) -> &str {
        &self.nodes[id.idx()].name
    }

    pub fn role(&self, id: NodeId) -> NodeRole {
        self.nodes[id.idx()].role
    }

    pub fn observed(&self, id: NodeId) -> f64 {
        self.nodes[id.idx()].observed
    }

    pub fn lookup(&self, name: &str) -> Option<NodeId> {
        self.by_name.get(name).copied()
    }

    pub fn parents_of(&self, id: NodeId) -> &[NodeId] {
        &self.nodes[id.idx()].parents
    }

    /// Stochastic children (nodes whose kernel reads `id`).
    pub fn children_of(&self, id: NodeId) -> &[NodeId] {
        &self.children[id.idx()]
    }

    pub fn support_of(&self, id: NodeId) -> Support {
        self.nodes[id.idx()].kernel.support()
    }

    /// Names of the data nodes in declaration order, the universe a
    /// [`PartitionSpec`] is built over.
    pub fn data_node_names(&self) -> Vec<String> {
        self.data.iter().map(|&id| self.nodes[id.idx()].name.clone()).collect()
    }

    pub fn assignment(&self) -> Assignment {
        Assignment { vals: vec![0.0; self.nodes.len()], set: vec![false; self.nodes.len()] }
    }

    #[inline(always)]
    fn gather<'b>(
        &self,
        node: &Node,
        asg: &Assignment,
        buf: &'b mut [f64; 4],
    ) -> Result<&'b [f64]> {
        let n = node.parents.len();
        for (slot, &p) in buf.iter_mut().zip(node.parents.iter()) {
            if !asg.set[p.idx()] {
                return Err(Error::MissingAssignment { node: self.nodes[p.idx()].name.clone() });
            }
            *slot = asg.vals[p.idx()];
        }
        Ok(&buf[..n])
    }

    /// Conditional log density of one data node at its observed value.
    #[inline]
    pub fn log_density_at(&self, id: NodeId, asg: &Assignment) -> Result<f64> {
        let node = &self.nodes[id.idx()];
        debug_assert_eq!(node.role, NodeRole::Data);
        let mut buf = [0.0; 4];
        let parents = self.gather(node, asg, &mut buf)?;
        let ld = node.kernel.log_density(parents, node.observed);
        if ld.is_nan() {
            return Err(Error::DensityNan { node: node.name.clone() });
        }
        Ok(ld)
    }

    /// Conditional log density of any stochastic node at value `x` taken from
    /// the assignment's world (used by the samplers).
    #[inline]
    pub fn log_density_value(&self, id: NodeId, asg: &Assignment, x: f64) -> Result<f64> {
        let node = &self.nodes[id.idx()];
        let mut buf = [0.0; 4];
        let parents = self.gather(node, asg, &mut buf)?;
        let ld = node.kernel.log_density(parents, x);
        if ld.is_nan() {
            return Err(Error::DensityNan { node: node.name.clone() });
        }
        Ok(ld)
    }

    /// Joint log density of a partition element: the sum over its data nodes
    /// of their conditional log densities, in element order.
    pub fn log_joint_density(&self, element: &[NodeId], asg: &Assignment) -> Result<f64> {
        let mut total = 0.0;
        for &id in element {
            total += self.log_density_at(id, asg)?;
        }
        Ok(total)
    }

    /// One ancestral draw of every latent node, conditioned on the assigned
    /// parameters, written into `asg` in topological order. Data nodes are
    /// never read or written.
    pub fn simulate_latent<R: Rng>(&self, asg: &mut Assignment, rng: &mut R) -> Result<()> {
        let mut buf = [0.0; 4];
        for &id in &self.latents {
            let node = &self.nodes[id.idx()];
            let parents = self.gather(node, asg, &mut buf)?;
            let draw = node.kernel.draw(parents, rng);
            asg.vals[id.idx()] = draw;
            asg.set[id.idx()] = true;
        }
        Ok(())
    }

    /// Unconditional prior mean of every latent given the assigned
    /// parameters, propagated through the latent chain (exact for the
    /// linear-mean Gaussian latent kernels all built-in models use).
    /// `None` when any latent kernel is not Gaussian.
    pub(crate) fn latent_prior_means(&self, asg: &Assignment) -> Option<Vec<f64>> {
        let mut work = asg.clone();
        let mut out = Vec::with_capacity(self.latents.len());
        let mut buf = [0.0; 4];
        for &id in &self.latents {
            let node = &self.nodes[id.idx()];
            let parents = self.gather(node, &work, &mut buf).ok()?;
            let loc = node.kernel.location(parents)?;
            work.set(id, loc);
            out.push(loc);
        }
        Some(out)
    }

    /// Resolve a name-based partition to data-node ids, checking it covers
    /// exactly this graph's data nodes.
    pub fn resolve_partition(&self, spec: &PartitionSpec) -> Result<ResolvedPartition> {
        if spec.total_nodes() != self.data.len() {
            return Err(Error::LengthMismatch {
                expected: self.data.len(),
                got: spec.total_nodes(),
            });
        }
        let mut groups = Vec::with_capacity(spec.len());
        for group in spec.groups() {
            let mut ids = Vec::with_capacity(group.len());
            for name in group {
                let id = self
                    .lookup(name)
                    .ok_or_else(|| Error::UnknownNode(name.clone()))?;
                if self.role(id) != NodeRole::Data {
                    return Err(Error::UnknownNode(format!("{name} (not a data node)")));
                }
                ids.push(id);
            }
            groups.push(ids);
        }
        Ok(ResolvedPartition { groups, digest: spec.digest() })
    }
}

/// A partition with node names resolved to ids for fast evaluation.
#[derive(Debug, Clone)]
pub struct ResolvedPartition {
    groups: Vec<Vec<NodeId>>,
    digest: u64,
}

impl ResolvedPartition {
    pub fn len(&self) -> usize {
        self.groups.len()
    }

    pub fn is_empty(&self) -> bool {
        self.groups.is_empty()
    }

    pub fn groups(&self) -> &[Vec<NodeId>] {
        &self.groups
    }

    pub fn digest(&self) -> u64 {
        self.digest
    }
}

/// Values for a subset of a graph's nodes (the `theta` of a predictive
/// density). Data-node values live in the graph itself, never here.
#[derive(Debug, Clone)]
pub struct Assignment {
    vals: Vec<f64>,
    set: Vec<bool>,
}

impl Assignment {
    #[inline]
    pub fn set(&mut self, id: NodeId, value: f64) {
        self.vals[id.idx()] = value;
        self.set[id.idx()] = true;
    }

    #[inline]
    pub fn get(&self, id: NodeId) -> Option<f64> {
        self.set[id.idx()].then(|| self.vals[id.idx()])
    }

    #[inline]
    pub fn value(&self, id: NodeId) -> f64 {
        debug_assert!(self.set[id.idx()]);
        self.vals[id.idx()]
    }

    pub fn is_set(&self, id: NodeId) -> bool {
        self.set[id.idx()]
    }

    pub fn set_by_name(&mut self, graph: &ModelGraph, name: &str, value: f64) -> Result<()> {
        let id = graph
            .lookup(name)
            .ok_or_else(|| Error::UnknownNode(name.to_string()))?;
        self.set(id, value);
        Ok(())
    }

    pub fn unset(&mut self, id: NodeId) {
        self.set[id.idx()] = false;
    }
}
