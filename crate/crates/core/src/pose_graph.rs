//! SE3 pose graphs: g2o text I/O, edge residuals and Levenberg-Marquardt
//! optimisation with a fixed anchor node.
//!
//! The edge residual is `r = Log(Z^-1 X_i^-1 X_j)` in se3 coordinates
//! `(rho, phi)`, and the information matrix is ordered the same way
//! (translation first), matching the g2o `EDGE_SE3:QUAT` layout.

use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::fmt::Write as _;
use std::io::BufRead;
use std::ops::Range;
use std::time::Instant;

use nalgebra::{DMatrix, DVector, Matrix6, SymmetricEigen, Vector3, Vector6};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::Serialize;

use crate::diff::ParamSet;
use crate::lie::element::{Element, Tangent};
use crate::lie::jacobians::{se3_adjoint, se3_right_jacobian_inverse};
use crate::lie::so3::quat_norm;
use crate::lie::{Family, Kind, LieBatch};
use crate::optim::{
    Assembly, JacobianBlock, Kernel, LevenbergMarquardt, LinearSolver, LmConfig, Model,
    StopOnPlateau, Strategy, Termination, DENSE_LIMIT,
};
use crate::{Error, Result};

pub type Pose = Element<f64>;

/// Quaternion norm deviation above which loading warns.
const QUAT_WARN_DEVIATION: f64 = 1e-3;
const PSD_TOLERANCE: f64 = 1e-9;

#[derive(Clone, Debug, PartialEq)]
pub struct Edge {
    pub from: usize,
    pub to: usize,
    pub measurement: Pose,
    pub information: Matrix6<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct PoseGraph {
    pub nodes: BTreeMap<usize, Pose>,
    pub edges: Vec<Edge>,
    pub anchor: Option<usize>,
}

impl Default for PoseGraph {
    fn default() -> Self {
        PoseGraph::new()
    }
}

impl PoseGraph {
    pub fn new() -> Self {
        PoseGraph {
            nodes: BTreeMap::new(),
            edges: Vec::new(),
            anchor: None,
        }
    }

    pub fn add_node(&mut self, id: usize, pose: Pose) {
        self.nodes.insert(id, pose);
        if self.anchor.is_none_or(|a| id < a) {
            self.anchor = Some(id);
        }
    }

    pub fn add_edge(&mut self, from: usize, to: usize, measurement: Pose, information: Matrix6<f64>) -> Result<()> {
        for id in [from, to] {
            if !self.nodes.contains_key(&id) {
                return Err(Error::Graph(format!("edge {from} -> {to} references missing vertex {id}")));
            }
        }
        check_information(&information)?;
        self.edges.push(Edge {
            from,
            to,
            measurement,
            information,
        });
        Ok(())
    }

    pub fn set_anchor(&mut self, id: usize) -> Result<()> {
        if !self.nodes.contains_key(&id) {
            return Err(Error::Graph(format!("anchor {id} is not a vertex")));
        }
        self.anchor = Some(id);
        Ok(())
    }

    /// Checks the graph invariants.
    pub fn validate(&self) -> Result<()> {
        for e in &self.edges {
            for id in [e.from, e.to] {
                if !self.nodes.contains_key(&id) {
                    return Err(Error::Graph(format!("edge {} -> {} references missing vertex {id}", e.from, e.to)));
                }
            }
            check_information(&e.information)?;
        }
        match self.anchor {
            Some(a) if !self.nodes.contains_key(&a) => Err(Error::Graph(format!("anchor {a} is not a vertex"))),
            None if !self.nodes.is_empty() => Err(Error::Graph("graph has vertices but no anchor".into())),
            _ => Ok(()),
        }
    }

    /// Nodes not connected to the anchor through any chain of edges.
    pub fn unreached_nodes(&self) -> Vec<usize> {
        let Some(anchor) = self.anchor else {
            return Vec::new();
        };
        let mut adjacency: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
        for e in &self.edges {
            adjacency.entry(e.from).or_default().push(e.to);
            adjacency.entry(e.to).or_default().push(e.from);
        }
        let mut seen = BTreeSet::from([anchor]);
        let mut queue = VecDeque::from([anchor]);
        while let Some(n) = queue.pop_front() {
            for &m in adjacency.get(&n).into_iter().flatten() {
                if seen.insert(m) {
                    queue.push_back(m);
                }
            }
        }
        self.nodes.keys().filter(|id| !seen.contains(id)).copied().collect()
    }

    /// Left-multiplies every node by `g`. Relative measurements are unchanged.
    pub fn transformed(&self, g: &Pose) -> PoseGraph {
        let mut out = self.clone();
        for pose in out.nodes.values_mut() {
            *pose = g.compose(pose);
        }
        out
    }
}

fn check_information(info: &Matrix6<f64>) -> Result<()> {
    let scale = info.abs().max().max(1.0);
    if (info - info.transpose()).abs().max() > PSD_TOLERANCE * scale {
        return Err(Error::Graph("information matrix is not symmetric".into()));
    }
    let eig = SymmetricEigen::new(*info);
    if eig.eigenvalues.min() < -PSD_TOLERANCE * scale {
        return Err(Error::Graph("information matrix is not positive semidefinite".into()));
    }
    Ok(())
}

/// Builds a pose from translation and an `(x, y, z, w)` quaternion,
/// renormalising the quaternion.
pub fn pose(t: [f64; 3], q: [f64; 4]) -> Pose {
    let n = quat_norm(&q);
    Element {
        t: Vector3::from(t),
        q: [q[0] / n, q[1] / n, q[2] / n, q[3] / n],
        s: 1.0,
    }
}

fn parse_numbers(fields: &[&str], line: usize) -> Result<Vec<f64>> {
    fields
        .iter()
        .map(|f| {
            f.parse::<f64>().map_err(|_| Error::Parse {
                line,
                message: format!("invalid number '{f}'"),
            })
        })
        .collect()
}

fn parse_id(field: &str, line: usize) -> Result<usize> {
    field.parse().map_err(|_| Error::Parse {
        line,
        message: format!("invalid vertex id '{field}'"),
    })
}

fn load_pose(v: &[f64], line: usize) -> Result<Pose> {
    let q = [v[3], v[4], v[5], v[6]];
    let n = quat_norm(&q);
    if !(n > 0.0) || !n.is_finite() {
        return Err(Error::Parse {
            line,
            message: "quaternion has zero or non-finite norm".into(),
        });
    }
    if (n - 1.0).abs() > QUAT_WARN_DEVIATION {
        log::warn!("line {line}: quaternion norm {n} renormalised");
    }
    Ok(pose([v[0], v[1], v[2]], q))
}

/// Reads `VERTEX_SE3:QUAT` and `EDGE_SE3:QUAT` records; other record types
/// are skipped with a warning and `#` lines are comments.
pub fn parse_g2o<R: BufRead>(reader: R) -> Result<PoseGraph> {
    let mut graph = PoseGraph::new();
    let mut pending = Vec::new();
    for (index, line) in reader.lines().enumerate() {
        let line_no = index + 1;
        let line = line?;
        let text = line.trim();
        if text.is_empty() || text.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = text.split_whitespace().collect();
        match fields[0] {
            "VERTEX_SE3:QUAT" => {
                if fields.len() != 9 {
                    return Err(Error::Parse {
                        line: line_no,
                        message: format!("VERTEX_SE3:QUAT needs 8 fields, found {}", fields.len() - 1),
                    });
                }
                let id = parse_id(fields[1], line_no)?;
                let v = parse_numbers(&fields[2..], line_no)?;
                graph.add_node(id, load_pose(&v, line_no)?);
            }
            "EDGE_SE3:QUAT" => {
                if fields.len() != 31 {
                    return Err(Error::Parse {
                        line: line_no,
                        message: format!("EDGE_SE3:QUAT needs 30 fields, found {}", fields.len() - 1),
                    });
                }
                let from = parse_id(fields[1], line_no)?;
                let to = parse_id(fields[2], line_no)?;
                let v = parse_numbers(&fields[3..], line_no)?;
                let measurement = load_pose(&v[..7], line_no)?;
                let mut info = Matrix6::zeros();
                let mut k = 7;
                for r in 0..6 {
                    for c in r..6 {
                        info[(r, c)] = v[k];
                        info[(c, r)] = v[k];
                        k += 1;
                    }
                }
                pending.push((line_no, from, to, measurement, info));
            }
            other => log::warn!("line {line_no}: skipping unsupported record '{other}'"),
        }
    }
    for (line_no, from, to, measurement, info) in pending {
        graph.add_edge(from, to, measurement, info).map_err(|e| match e {
            Error::Graph(m) => Error::Graph(format!("line {line_no}: {m}")),
            other => other,
        })?;
    }
    Ok(graph)
}

pub fn parse_g2o_str(text: &str) -> Result<PoseGraph> {
    parse_g2o(text.as_bytes())
}

/// Serialises with 17 significant digits so parsing the output reproduces
/// every value.
pub fn write_g2o(graph: &PoseGraph) -> String {
    fn num(out: &mut String, v: f64) {
        let _ = write!(out, " {v:.16e}");
    }
    fn pose_fields(out: &mut String, p: &Pose) {
        for v in p.t.iter().chain(&p.q) {
            num(out, *v);
        }
    }
    let mut out = String::new();
    for (id, p) in &graph.nodes {
        let _ = write!(out, "VERTEX_SE3:QUAT {id}");
        pose_fields(&mut out, p);
        out.push('\n');
    }
    for e in &graph.edges {
        let _ = write!(out, "EDGE_SE3:QUAT {} {}", e.from, e.to);
        pose_fields(&mut out, &e.measurement);
        for r in 0..6 {
            for c in r..6 {
                num(&mut out, e.information[(r, c)]);
            }
        }
        out.push('\n');
    }
    out
}

/// `Log(Z^-1 X_i^-1 X_j)`.
pub fn edge_residual(xi: &Pose, xj: &Pose, z: &Pose) -> Vector6<f64> {
    let e = z.inverse().compose(&xi.inverse().compose(xj));
    let x = e.log(Family::SE3).expect("the SE3 logarithm is defined everywhere");
    Vector6::new(x.rho.x, x.rho.y, x.rho.z, x.phi.x, x.phi.y, x.phi.z)
}

/// Jacobians of [`edge_residual`] with respect to left perturbations of
/// `X_i` and `X_j`: `-Jr^-1(r) Ad(X_j^-1)` and `Jr^-1(r) Ad(X_j^-1)`.
pub fn edge_jacobians(xi: &Pose, xj: &Pose, z: &Pose) -> (Vector6<f64>, Matrix6<f64>, Matrix6<f64>) {
    let r = edge_residual(xi, xj, z);
    let dj = se3_right_jacobian_inverse(&r) * se3_adjoint(&xj.inverse());
    (r, -dj, dj)
}

pub fn chi2(graph: &PoseGraph) -> f64 {
    graph
        .edges
        .iter()
        .map(|e| {
            let r = edge_residual(&graph.nodes[&e.from], &graph.nodes[&e.to], &e.measurement);
            r.dot(&(e.information * r))
        })
        .sum()
}

/// Where a node's pose comes from during optimisation.
#[derive(Clone, Copy, Debug)]
enum NodeSlot {
    Anchor,
    Free(usize),
}

/// Stacked edge residuals over the free (non-anchor) nodes.
pub struct PgoModel<'g> {
    graph: &'g PoseGraph,
    slots: BTreeMap<usize, NodeSlot>,
    anchor_pose: Pose,
}

impl<'g> PgoModel<'g> {
    pub fn new(graph: &'g PoseGraph) -> Result<Self> {
        graph.validate()?;
        let anchor = graph.anchor.ok_or_else(|| Error::Graph("empty graph has no anchor".into()))?;
        let mut slots = BTreeMap::new();
        let mut free = 0;
        for &id in graph.nodes.keys() {
            if id == anchor {
                slots.insert(id, NodeSlot::Anchor);
            } else {
                slots.insert(id, NodeSlot::Free(free));
                free += 1;
            }
        }
        Ok(PgoModel {
            graph,
            slots,
            anchor_pose: graph.nodes[&anchor],
        })
    }

    /// Free node poses as an SE3 batch, in id order.
    pub fn initial_params(&self) -> Result<ParamSet> {
        let mut data = Vec::new();
        for (id, slot) in &self.slots {
            if let NodeSlot::Free(_) = slot {
                let mut item = [0.0; 7];
                self.graph.nodes[id].store(Family::SE3, &mut item);
                data.extend_from_slice(&item);
            }
        }
        let n = data.len() / 7;
        ParamSet::group(LieBatch::from_vec(Kind::Group(Family::SE3), vec![n], data)?)
    }

    fn pose(&self, params: &ParamSet, id: usize) -> Pose {
        match self.slots[&id] {
            NodeSlot::Anchor => self.anchor_pose,
            NodeSlot::Free(k) => {
                let batch = params.group_param(0).expect("pose graph parameters are one SE3 batch");
                Element::load(Family::SE3, batch.item(k))
            }
        }
    }

    fn column(&self, id: usize) -> Option<usize> {
        match self.slots[&id] {
            NodeSlot::Anchor => None,
            NodeSlot::Free(k) => Some(6 * k),
        }
    }

    /// Writes optimised parameters back into a copy of the graph.
    pub fn apply(&self, params: &ParamSet) -> PoseGraph {
        let mut out = self.graph.clone();
        for (id, slot) in &self.slots {
            if let NodeSlot::Free(_) = slot {
                out.nodes.insert(*id, self.pose(params, *id));
            }
        }
        out
    }
}

impl Model for PgoModel<'_> {
    fn num_items(&self) -> usize {
        self.graph.edges.len()
    }

    fn residual(&self, params: &ParamSet, item: usize) -> Result<DVector<f64>> {
        let e = &self.graph.edges[item];
        let r = edge_residual(&self.pose(params, e.from), &self.pose(params, e.to), &e.measurement);
        Ok(DVector::from_column_slice(r.as_slice()))
    }

    fn weight(&self, item: usize) -> Option<DMatrix<f64>> {
        let info = &self.graph.edges[item].information;
        Some(DMatrix::from_column_slice(6, 6, info.as_slice()))
    }

    fn support(&self, _params: &ParamSet, item: usize) -> Vec<Range<usize>> {
        let e = &self.graph.edges[item];
        let mut cols: Vec<usize> = [e.from, e.to].iter().filter_map(|id| self.column(*id)).collect();
        cols.sort_unstable();
        cols.dedup();
        cols.into_iter().map(|c| c..c + 6).collect()
    }

    fn jacobian(&self, params: &ParamSet, item: usize) -> Option<Result<Vec<JacobianBlock>>> {
        let e = &self.graph.edges[item];
        let (_, ji, jj) = edge_jacobians(&self.pose(params, e.from), &self.pose(params, e.to), &e.measurement);
        let mut blocks: Vec<JacobianBlock> = Vec::with_capacity(2);
        for (id, j) in [(e.from, ji), (e.to, jj)] {
            if let Some(col) = self.column(id) {
                let values = DMatrix::from_column_slice(6, 6, j.as_slice());
                match blocks.iter_mut().find(|b| b.col == col) {
                    // self-loop: both endpoints share the columns
                    Some(b) => b.values += values,
                    None => blocks.push(JacobianBlock { col, values }),
                }
            }
        }
        Some(Ok(blocks))
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct PgoConfig {
    pub kernel: Kernel,
    pub strategy: Strategy,
    /// `None` picks Cholesky for dense systems and PCG above the dense limit.
    pub solver: Option<LinearSolver>,
    pub steps: usize,
    pub patience: usize,
    pub decreasing: f64,
    /// Use central differences instead of the analytic edge Jacobians.
    pub numeric_jacobian: bool,
}

impl Default for PgoConfig {
    fn default() -> Self {
        PgoConfig {
            kernel: Kernel::Trivial,
            strategy: Strategy::trust_region(1e-3),
            solver: None,
            steps: 100,
            patience: 3,
            decreasing: 1e-6,
            numeric_jacobian: false,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PgoStats {
    pub initial_chi2: f64,
    pub final_chi2: f64,
    pub iterations: usize,
    pub accepted: usize,
    pub rejected: usize,
    pub wall_time_s: f64,
    #[serde(skip)]
    pub termination: Termination,
    /// Chi-squared after each iteration.
    #[serde(skip)]
    pub history: Vec<f64>,
}

impl PgoStats {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("stats are plain numbers")
    }
}

/// Numeric-Jacobian wrapper that hides the analytic edge Jacobians.
struct NumericPgo<'a, 'g>(&'a PgoModel<'g>);

impl Model for NumericPgo<'_, '_> {
    fn num_items(&self) -> usize {
        self.0.num_items()
    }
    fn residual(&self, params: &ParamSet, item: usize) -> Result<DVector<f64>> {
        self.0.residual(params, item)
    }
    fn weight(&self, item: usize) -> Option<DMatrix<f64>> {
        self.0.weight(item)
    }
    fn support(&self, params: &ParamSet, item: usize) -> Vec<Range<usize>> {
        self.0.support(params, item)
    }
}

/// Optimises every node except the anchor, which stays bitwise unchanged.
///
/// Linear-solver failures end the run early; the best accepted iterate is
/// returned and the failure is recorded in [`PgoStats::termination`].
pub fn optimize_pgo(graph: &PoseGraph, config: &PgoConfig) -> Result<(PoseGraph, PgoStats)> {
    let start = Instant::now();
    let initial_chi2 = chi2(graph);
    if graph.nodes.len() <= 1 {
        let stats = PgoStats {
            initial_chi2,
            final_chi2: initial_chi2,
            iterations: 0,
            accepted: 0,
            rejected: 0,
            wall_time_s: start.elapsed().as_secs_f64(),
            termination: Termination::Converged,
            history: Vec::new(),
        };
        return Ok((graph.clone(), stats));
    }
    let unreached = graph.unreached_nodes();
    if !unreached.is_empty() {
        log::warn!("{} node(s) not connected to the anchor: {:?}", unreached.len(), unreached);
    }
    let model = PgoModel::new(graph)?;
    let params = model.initial_params()?;
    let n = params.tangent_dim();
    let solver = config.solver.unwrap_or(if n > DENSE_LIMIT {
        LinearSolver::Pcg {
            tol: 1e-10,
            max_iter: 10 * n,
        }
    } else {
        LinearSolver::Cholesky
    });
    let lm = LevenbergMarquardt::new(LmConfig {
        kernel: config.kernel,
        strategy: config.strategy,
        solver,
        assembly: Assembly::Auto(DENSE_LIMIT),
        max_retries: 8,
    });
    let mut scheduler = StopOnPlateau::new(config.steps, config.patience, config.decreasing);
    let mut history = Vec::new();
    let report = if config.numeric_jacobian {
        lm.optimize(&NumericPgo(&model), params, &mut scheduler)?
    } else {
        lm.optimize_with(&model, params, &mut scheduler, |_, state| {
            history.push(chi2(&model.apply(&state.params)));
        })?
    };
    let out = model.apply(&report.params);
    let final_chi2 = chi2(&out);
    if let Termination::Error(msg) = &report.termination {
        log::warn!("optimisation stopped early: {msg}");
    }
    let stats = PgoStats {
        initial_chi2,
        final_chi2,
        iterations: report.iterations,
        accepted: report.accepted,
        rejected: report.rejected,
        wall_time_s: start.elapsed().as_secs_f64(),
        termination: report.termination,
        history,
    };
    Ok((out, stats))
}

/// Synthetic planar circle of `nodes` poses with odometry edges, one loop
/// closure from the last node back to the first, and Gaussian measurement
/// noise. Returns the noisy graph (initialised by chaining the noisy
/// odometry) and the ground truth.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CircleSpec {
    pub nodes: usize,
    pub radius: f64,
    pub sigma_t: f64,
    pub sigma_r: f64,
    pub seed: u64,
}

impl Default for CircleSpec {
    fn default() -> Self {
        CircleSpec {
            nodes: 100,
            radius: 10.0,
            sigma_t: 0.05,
            sigma_r: 0.02,
            seed: 0,
        }
    }
}

pub fn circle_graph(spec: &CircleSpec) -> Result<(PoseGraph, PoseGraph)> {
    if spec.nodes < 2 {
        return Err(Error::Domain(format!("a circle needs at least 2 nodes, got {}", spec.nodes)));
    }
    if !(spec.sigma_t > 0.0 && spec.sigma_r > 0.0) {
        return Err(Error::Domain("noise levels must be positive".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let truth: Vec<Pose> = (0..spec.nodes)
        .map(|k| {
            let a = std::f64::consts::TAU * k as f64 / spec.nodes as f64;
            let yaw = Element::exp(
                Family::SO3,
                &Tangent {
                    rho: Vector3::zeros(),
                    phi: Vector3::new(0.0, 0.0, a + std::f64::consts::FRAC_PI_2),
                    sigma: 0.0,
                },
            );
            Element {
                t: Vector3::new(spec.radius * a.cos(), spec.radius * a.sin(), 0.0),
                q: yaw.q,
                s: 1.0,
            }
        })
        .collect();
    let mut info = Matrix6::zeros();
    for i in 0..3 {
        info[(i, i)] = 1.0 / (spec.sigma_t * spec.sigma_t);
        info[(i + 3, i + 3)] = 1.0 / (spec.sigma_r * spec.sigma_r);
    }
    let mut noisy = |z: Pose| -> Pose {
        let mut n = [0.0; 6];
        for (i, v) in n.iter_mut().enumerate() {
            let sigma = if i < 3 { spec.sigma_t } else { spec.sigma_r };
            let g: f64 = StandardNormal.sample(&mut rng);
            *v = sigma * g;
        }
        z.compose(&Element::exp(Family::SE3, &Tangent::load(Family::SE3, &n)))
    };

    let mut truth_graph = PoseGraph::new();
    for (k, p) in truth.iter().enumerate() {
        truth_graph.add_node(k, *p);
    }
    let mut edges = Vec::new();
    for k in 0..spec.nodes {
        let j = (k + 1) % spec.nodes;
        let z = noisy(truth[k].inverse().compose(&truth[j]));
        edges.push((k, j, z));
    }

    let mut graph = PoseGraph::new();
    let mut current = truth[0];
    graph.add_node(0, current);
    for (k, _, z) in edges.iter().take(spec.nodes - 1) {
        current = current.compose(z);
        graph.add_node(k + 1, current);
    }
    for (i, j, z) in edges {
        graph.add_edge(i, j, z, info)?;
        truth_graph.add_edge(i, j, z, info)?;
    }
    Ok((graph, truth_graph))
}
