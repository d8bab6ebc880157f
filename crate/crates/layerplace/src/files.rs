//! JSON problem files and placement documents.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use layerplace_core::fixtures::{self, builtin_cnn, builtin_device};
use layerplace_core::latency::{check_feasibility, evaluate, EvalConventions, LatencyBreakdown, Violation};
use layerplace_core::model::{
    CnnSpec, DeviceClass, GateProfile, LayerRef, LayerSpec, PlacementProblem, SharingGroup, ValidationError,
};
use layerplace_core::scenario::paper_transmission_profile;
use layerplace_core::solver::{Solution, SolveStats};
use layerplace_core::topology::{Role, Topology, Vertex};
use layerplace_core::Placement;
use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum FileError {
    #[error("cannot read {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("malformed JSON: {0}")]
    Json(#[from] serde_json::Error),
    #[error("{0}")]
    Schema(String),
    #[error(transparent)]
    Validation(#[from] ValidationError),
}

fn schema<T>(msg: impl Into<String>) -> Result<T, FileError> {
    Err(FileError::Schema(msg.into()))
}

pub fn read_text(path: &Path) -> Result<String, FileError> {
    fs::read_to_string(path).map_err(|source| FileError::Io {
        path: path.display().to_string(),
        source,
    })
}

/// On-disk problem description.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemFile {
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub meta: BTreeMap<String, Value>,
    pub cnns: Vec<CnnEntry>,
    pub units: UnitsSection,
    pub topology: TopologySection,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub sharing: Vec<Vec<LayerRef>>,
    pub config: ConfigSection,
}

/// Either `fixture` or the inline fields (`name`, `input_kb`, `layers`, ...).
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CnnEntry {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fixture: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    /// Id of the source vertex feeding this CNN.
    pub source: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub input_kb: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub final_out_kb: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub layers: Option<Vec<LayerSpec>>,
    /// Defaults to all ones (no early exit).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reach_prob: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClassEntry {
    pub mem_cap_kb: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub compute_cap_mmul: Option<f64>,
    pub speed_mmul_per_s: f64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct UnitsSection {
    /// Device classes by name; built-in device names need no entry.
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub classes: BTreeMap<String, ClassEntry>,
    /// Unit vertex id to class name.
    pub assign: BTreeMap<String, String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VertexEntry {
    pub id: String,
    pub role: Role,
    #[serde(default)]
    pub x: f64,
    #[serde(default)]
    pub y: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TopologySection {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub range: Option<f64>,
    pub vertices: Vec<VertexEntry>,
    /// Explicit undirected edges by vertex id; replaces the range model.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub edges: Option<Vec<(String, String)>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigSection {
    #[serde(rename = "L")]
    pub layers_per_unit_cap: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub data_rate_bits_per_s: Option<f64>,
    /// `wifi4` or `halow`, used when no explicit rate is given.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub profile: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub conventions: Option<EvalConventions>,
}

impl TopologySection {
    pub fn from_topology(topology: &Topology) -> Self {
        let vertices = topology
            .vertices()
            .iter()
            .map(|v| VertexEntry {
                id: v.id.clone(),
                role: v.role,
                x: v.x,
                y: v.y,
            })
            .collect();
        let edges = topology.range().is_none().then(|| {
            let adj = topology.adjacency();
            let mut edges = Vec::new();
            for a in 0..topology.len() {
                for b in adj.neighbors(a).filter(|&b| b > a) {
                    edges.push((topology.vertex(a).id.clone(), topology.vertex(b).id.clone()));
                }
            }
            edges
        });
        Self {
            range: topology.range(),
            vertices,
            edges,
        }
    }

    pub fn build(&self) -> Result<Topology, FileError> {
        let vertices: Vec<Vertex> = self
            .vertices
            .iter()
            .map(|v| Vertex::new(v.id.clone(), v.role, v.x, v.y))
            .collect();
        match (&self.edges, self.range) {
            (Some(edges), _) => {
                let index = |id: &str| {
                    vertices
                        .iter()
                        .position(|v| v.id == id)
                        .ok_or_else(|| FileError::Schema(format!("topology.edges: unknown vertex {id:?}")))
                };
                let pairs = edges
                    .iter()
                    .map(|(a, b)| Ok((index(a)?, index(b)?)))
                    .collect::<Result<Vec<_>, FileError>>()?;
                Topology::from_edges(vertices, &pairs).map_err(|e| FileError::Schema(e.to_string()))
            }
            (None, Some(range)) => Ok(Topology::from_geometry(vertices, range)),
            (None, None) => schema("topology needs either range or edges"),
        }
    }
}

impl CnnEntry {
    fn build(&self, at: usize) -> Result<CnnSpec, FileError> {
        let inline =
            self.name.is_some() || self.input_kb.is_some() || self.layers.is_some() || self.final_out_kb.is_some();
        let mut cnn = match &self.fixture {
            Some(name) if inline => {
                return schema(format!(
                    "cnns[{at}]: fixture {name:?} cannot be combined with inline fields"
                ))
            }
            Some(name) => builtin_cnn(name).map_err(|e| FileError::Schema(format!("cnns[{at}]: {e}")))?,
            None => {
                let (Some(name), Some(input_kb), Some(layers)) = (&self.name, self.input_kb, &self.layers) else {
                    return schema(format!("cnns[{at}]: inline CNNs need name, input_kb and layers"));
                };
                let mut cnn = CnnSpec::plain(name.clone(), input_kb, layers.clone());
                if let Some(out) = self.final_out_kb {
                    cnn.final_out_kb = out;
                }
                cnn
            }
        };
        if let Some(reach) = &self.reach_prob {
            cnn.gate = GateProfile::from_reach(reach.clone())
                .map_err(|e| FileError::Schema(format!("cnns[{at}].reach_prob: {e}")))?;
        }
        Ok(cnn)
    }

    pub fn inline(cnn: &CnnSpec, source: &str) -> Self {
        let gated = cnn.gate.reach_prob.iter().any(|&p| p != 1.0);
        Self {
            fixture: None,
            name: Some(cnn.name.clone()),
            source: source.into(),
            input_kb: Some(cnn.input_kb),
            final_out_kb: Some(cnn.final_out_kb),
            layers: Some(cnn.layers.clone()),
            reach_prob: gated.then(|| cnn.gate.reach_prob.clone()),
        }
    }
}

impl ProblemFile {
    /// Resolves ids and fixtures and validates the result.
    pub fn build(&self) -> Result<PlacementProblem, FileError> {
        let topology = self.topology.build()?;
        let index = |id: &str, what: &str| {
            topology
                .index_of(id)
                .ok_or_else(|| FileError::Schema(format!("{what}: unknown vertex {id:?}")))
        };

        let mut cnns = Vec::with_capacity(self.cnns.len());
        let mut sources = Vec::with_capacity(self.cnns.len());
        for (u, entry) in self.cnns.iter().enumerate() {
            cnns.push(entry.build(u)?);
            sources.push(index(&entry.source, &format!("cnns[{u}].source"))?);
        }

        let mut unit_classes = BTreeMap::new();
        for (id, class) in &self.units.assign {
            let v = index(id, "units.assign")?;
            let device = match self.units.classes.get(class) {
                Some(c) => DeviceClass {
                    name: class.clone(),
                    mem_cap_kb: c.mem_cap_kb,
                    compute_cap_mmul: c.compute_cap_mmul,
                    speed_mmul_per_s: c.speed_mmul_per_s,
                },
                None => builtin_device(class)
                    .map_err(|_| FileError::Schema(format!("units.assign.{id}: unknown device class {class:?}")))?,
            };
            unit_classes.insert(v, device);
        }

        let rate = match (self.config.data_rate_bits_per_s, &self.config.profile) {
            (Some(r), None) => r,
            (None, Some(p)) => {
                paper_transmission_profile(p)
                    .map_err(|e| FileError::Schema(format!("config.profile: {e}")))?
                    .rate_bits_per_s
            }
            (Some(_), Some(_)) => return schema("config: give data_rate_bits_per_s or profile, not both"),
            (None, None) => return schema("config: data_rate_bits_per_s or profile is required"),
        };

        let problem = PlacementProblem {
            cnns,
            sources,
            topology,
            unit_classes,
            layers_per_unit_cap: self.config.layers_per_unit_cap,
            data_rate_bits_per_s: rate,
            sharing: self.sharing.iter().map(|m| SharingGroup::new(m.clone())).collect(),
            conventions: self.config.conventions.unwrap_or_default(),
        };
        Ok(problem)
    }

    /// Fully inline description of a problem.
    pub fn from_problem(problem: &PlacementProblem) -> Self {
        let t = &problem.topology;
        let id = |v: usize| t.vertex(v).id.clone();
        let mut classes = BTreeMap::new();
        let mut assign = BTreeMap::new();
        for (&v, class) in &problem.unit_classes {
            classes.insert(
                class.name.clone(),
                ClassEntry {
                    mem_cap_kb: class.mem_cap_kb,
                    compute_cap_mmul: class.compute_cap_mmul,
                    speed_mmul_per_s: class.speed_mmul_per_s,
                },
            );
            assign.insert(id(v), class.name.clone());
        }
        Self {
            meta: BTreeMap::new(),
            cnns: problem
                .cnns
                .iter()
                .zip(&problem.sources)
                .map(|(c, &s)| CnnEntry::inline(c, &t.vertex(s).id))
                .collect(),
            units: UnitsSection { classes, assign },
            topology: TopologySection::from_topology(t),
            sharing: problem.sharing.iter().map(|g| g.members.clone()).collect(),
            config: ConfigSection {
                layers_per_unit_cap: problem.layers_per_unit_cap,
                data_rate_bits_per_s: Some(problem.data_rate_bits_per_s),
                profile: None,
                conventions: Some(problem.conventions),
            },
        }
    }
}

/// Parses a problem file. Validation is left to the caller so that command
/// line overrides can be applied first.
pub fn parse_problem(text: &str) -> Result<(PlacementProblem, BTreeMap<String, Value>), FileError> {
    let file: ProblemFile = serde_json::from_str(text)?;
    Ok((file.build()?, file.meta))
}

pub fn read_problem(path: &Path) -> Result<(PlacementProblem, BTreeMap<String, Value>), FileError> {
    parse_problem(&read_text(path)?)
}

/// Example problems on the eleven-unit example network.
pub fn example_problem(name: &str) -> Option<PlacementProblem> {
    use layerplace_core::model::LayerRef as R;
    let problem = match name {
        "fig1b-cnn5" => fixtures::fig1b_problem(vec![fixtures::cnn5()], 1),
        "fig1b-gc6" => fixtures::fig1b_problem(vec![fixtures::gc6()], 1),
        "fig1b-2cnn5" => fixtures::fig1b_problem(vec![fixtures::cnn5(), fixtures::cnn5()], 1),
        "fig1b-2cnn5-shared" => {
            let mut p = fixtures::fig1b_problem(vec![fixtures::cnn5(), fixtures::cnn5()], 1);
            p.sharing = (0..2)
                .map(|j| SharingGroup::new(vec![R::new(0, j), R::new(1, j)]))
                .collect();
            p
        }
        _ => return None,
    };
    Some(problem)
}

pub const EXAMPLE_NAMES: [&str; 4] = ["fig1b-cnn5", "fig1b-gc6", "fig1b-2cnn5", "fig1b-2cnn5-shared"];

/// Layer-to-unit list of one CNN in a placement document.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CnnPlacement {
    pub cnn: String,
    pub layers: Vec<LayerAssignment>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerAssignment {
    pub layer: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<String>,
    pub unit: String,
}

/// Latency terms in milliseconds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BreakdownMs {
    pub t: f64,
    pub t_t: f64,
    pub t_p: f64,
    pub t_s: f64,
    pub t_inter: f64,
    pub t_f: f64,
    pub t_p_per_unit: BTreeMap<String, f64>,
}

impl BreakdownMs {
    pub fn new(b: &LatencyBreakdown, topology: &Topology) -> Self {
        Self {
            t: b.t * 1e3,
            t_t: b.t_t * 1e3,
            t_p: b.t_p * 1e3,
            t_s: b.t_s * 1e3,
            t_inter: b.t_inter * 1e3,
            t_f: b.t_f * 1e3,
            t_p_per_unit: b
                .t_p_per_unit
                .iter()
                .map(|(&v, &t)| (topology.vertex(v).id.clone(), t * 1e3))
                .collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolutionDoc {
    pub method: String,
    pub seed: u64,
    pub proven_optimal: bool,
    pub objective_ms: f64,
    pub breakdown_ms: BreakdownMs,
    pub placements: Vec<CnnPlacement>,
    pub stats: SolveStats,
}

/// The `placements` part of a document; anything else is ignored.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlacementDoc {
    pub placements: Vec<CnnPlacement>,
}

/// A violation as reported in documents: the snake_case kind plus a message
/// naming vertices by id.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ViolationEntry {
    pub kind: String,
    pub message: String,
}

impl std::fmt::Display for ViolationEntry {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.message)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationDoc {
    pub feasible: bool,
    pub violations: Vec<ViolationEntry>,
    pub objective_ms: f64,
    pub breakdown_ms: BreakdownMs,
    pub placements: Vec<CnnPlacement>,
}

pub fn placement_entries(placement: &Placement, problem: &PlacementProblem) -> Vec<CnnPlacement> {
    placement
        .assign
        .iter()
        .zip(&problem.cnns)
        .map(|(units, cnn)| CnnPlacement {
            cnn: cnn.name.clone(),
            layers: units
                .iter()
                .enumerate()
                .map(|(j, &v)| LayerAssignment {
                    layer: j,
                    label: Some(cnn.layers[j].label.clone()),
                    unit: problem.topology.vertex(v).id.clone(),
                })
                .collect(),
        })
        .collect()
}

pub fn solution_doc(
    solution: &Solution,
    problem: &PlacementProblem,
    method: &str,
    seed: u64,
) -> Result<SolutionDoc, layerplace_core::LatencyError> {
    let b = evaluate(&solution.placement, problem)?;
    Ok(SolutionDoc {
        method: method.into(),
        seed,
        proven_optimal: solution.proven_optimal,
        objective_ms: solution.objective * 1e3,
        breakdown_ms: BreakdownMs::new(&b, &problem.topology),
        placements: placement_entries(&solution.placement, problem),
        stats: solution.stats.clone(),
    })
}

/// Resolves a placement document against a problem. CNNs are matched by
/// position; every layer must be listed exactly once.
pub fn parse_placement(text: &str, problem: &PlacementProblem) -> Result<Placement, FileError> {
    let doc: PlacementDoc = serde_json::from_str(text)?;
    if doc.placements.len() != problem.cnns.len() {
        return schema(format!(
            "placement lists {} CNN(s), problem has {}",
            doc.placements.len(),
            problem.cnns.len()
        ));
    }
    let mut assign = Vec::with_capacity(problem.cnns.len());
    for (u, (entry, cnn)) in doc.placements.iter().zip(&problem.cnns).enumerate() {
        if entry.cnn != cnn.name {
            return schema(format!(
                "placements[{u}]: CNN {:?} does not match problem CNN {:?}",
                entry.cnn, cnn.name
            ));
        }
        let mut units = vec![None; cnn.depth()];
        for a in &entry.layers {
            let Some(slot) = units.get_mut(a.layer) else {
                return schema(format!(
                    "placements[{u}]: layer {} out of range (CNN has {})",
                    a.layer,
                    cnn.depth()
                ));
            };
            if slot.is_some() {
                return schema(format!("placements[{u}]: layer {} listed twice", a.layer));
            }
            let v = problem
                .topology
                .index_of(&a.unit)
                .ok_or_else(|| FileError::Schema(format!("placements[{u}]: unknown vertex {:?}", a.unit)))?;
            *slot = Some(v);
        }
        if let Some(j) = units.iter().position(Option::is_none) {
            return schema(format!("placements[{u}]: layer {j} is not placed"));
        }
        assign.push(units.into_iter().flatten().collect());
    }
    Ok(Placement::new(assign))
}

/// Evaluates a placement and lists its violations with vertex ids.
pub fn evaluation_doc(
    placement: &Placement,
    problem: &PlacementProblem,
) -> Result<EvaluationDoc, layerplace_core::LatencyError> {
    let violations = check_feasibility(placement, problem);
    let b = evaluate(placement, problem)?;
    Ok(EvaluationDoc {
        feasible: violations.is_empty(),
        violations: violations
            .iter()
            .map(|v| ViolationEntry {
                kind: violation_kind(v).into(),
                message: describe_violation(v, problem),
            })
            .collect(),
        objective_ms: b.t * 1e3,
        breakdown_ms: BreakdownMs::new(&b, &problem.topology),
        placements: placement_entries(placement, problem),
    })
}

pub fn violation_kind(v: &Violation) -> &'static str {
    match v {
        Violation::CnnCount { .. } => "cnn_count",
        Violation::LayerCount { .. } => "layer_count",
        Violation::NotAUnit { .. } => "not_a_unit",
        Violation::LayerCap { .. } => "layer_cap",
        Violation::Memory { .. } => "memory",
        Violation::Compute { .. } => "compute",
        Violation::SharingSplit { .. } => "sharing_split",
    }
}

pub fn describe_violation(v: &Violation, problem: &PlacementProblem) -> String {
    let t = &problem.topology;
    let id = |v: usize| {
        if v < t.len() {
            t.vertex(v).id.clone()
        } else {
            format!("#{v}")
        }
    };
    let layer = |u: usize, j: usize| {
        problem
            .cnns
            .get(u)
            .and_then(|c| c.layers.get(j).map(|l| format!("{} layer {j} ({})", c.name, l.label)))
            .unwrap_or_else(|| format!("CNN {u} layer {j}"))
    };
    match v {
        Violation::NotAUnit { cnn, layer: j, vertex } => {
            format!("{}: vertex {} is not a compute unit", layer(*cnn, *j), id(*vertex))
        }
        Violation::LayerCap { unit, count, cap } => format!("unit {}: {count} layers exceed L = {cap}", id(*unit)),
        Violation::Memory { unit, used_kb, cap_kb } => {
            format!("unit {}: memory {used_kb} KB exceeds the cap of {cap_kb} KB", id(*unit))
        }
        Violation::Compute {
            unit,
            used_mmul,
            cap_mmul,
        } => {
            format!(
                "unit {}: compute {used_mmul} Mmul exceeds the cap of {cap_mmul} Mmul",
                id(*unit)
            )
        }
        Violation::SharingSplit { group, units } => format!(
            "sharing group {group} is split across units {}",
            units.iter().map(|&u| id(u)).collect::<Vec<_>>().join(", ")
        ),
        other => other.to_string(),
    }
}
