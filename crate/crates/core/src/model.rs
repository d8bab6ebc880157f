//! Domain types: CNN layer chains, gate-exit profiles, device classes, sharing
//! groups and the placement problem, plus validation.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::latency::EvalConventions;
use crate::topology::{all_pairs_hop_distance, Role, Topology};

/// Tolerance used when checking that exit probabilities sum to one.
pub const PROB_TOLERANCE: f64 = 1e-12;

/// One placeable layer. Pooling sublayers are fused into the convolution that
/// precedes them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerSpec {
    pub label: String,
    /// Parameter memory in KB (1 KB = 1000 bytes).
    pub memory_kb: f64,
    /// Multiplications, in millions.
    pub compute_mmul: f64,
    /// Size of the intermediate representation sent to the next layer, in KB.
    pub out_repr_kb: f64,
}

impl LayerSpec {
    pub fn new(label: impl Into<String>, memory_kb: f64, compute_mmul: f64, out_repr_kb: f64) -> Self {
        Self {
            label: label.into(),
            memory_kb,
            compute_mmul,
            out_repr_kb,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ProfileError {
    #[error("reach_prob is empty")]
    Empty,
    #[error("reach_prob[0] must be 1, got {0}")]
    FirstNotOne(f64),
    #[error("reach_prob[{index}] = {value} is outside [0, 1]")]
    OutOfRange { index: usize, value: f64 },
    #[error("reach_prob not non-increasing at index {index} ({prev} -> {next})")]
    Increasing { index: usize, prev: f64, next: f64 },
    #[error("exit_prob has {got} entries, reach_prob has {expected}")]
    LengthMismatch { expected: usize, got: usize },
    #[error("exit_prob[{index}] = {got} does not match the value {expected} derived from reach_prob")]
    ExitMismatch { index: usize, expected: f64, got: f64 },
}

fn check_reach(reach: &[f64]) -> Result<(), ProfileError> {
    let first = *reach.first().ok_or(ProfileError::Empty)?;
    for (index, &value) in reach.iter().enumerate() {
        if !(0.0..=1.0).contains(&value) {
            return Err(ProfileError::OutOfRange { index, value });
        }
    }
    if first != 1.0 {
        return Err(ProfileError::FirstNotOne(first));
    }
    for (index, pair) in reach.windows(2).enumerate() {
        if pair[1] > pair[0] {
            return Err(ProfileError::Increasing {
                index: index + 1,
                prev: pair[0],
                next: pair[1],
            });
        }
    }
    Ok(())
}

/// Derives the exit probabilities `g` from the reach probabilities `p`:
/// `g[j] = p[j] - p[j+1]` for every layer but the last, which takes the
/// remaining mass `1 - sum(g[..M-1])`. That mass telescopes to `p[M-1]`,
/// which is used directly so that exact inputs give exact outputs.
pub fn derive_exit_probabilities(reach: &[f64]) -> Result<Vec<f64>, ProfileError> {
    check_reach(reach)?;
    let mut exit: Vec<f64> = reach.windows(2).map(|w| w[0] - w[1]).collect();
    exit.push(reach[reach.len() - 1]);
    Ok(exit)
}

/// Probability that each layer runs (`reach_prob`) and that the decision is
/// emitted at each layer (`exit_prob`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GateProfile {
    pub reach_prob: Vec<f64>,
    pub exit_prob: Vec<f64>,
}

impl GateProfile {
    pub fn from_reach(reach_prob: Vec<f64>) -> Result<Self, ProfileError> {
        let exit_prob = derive_exit_probabilities(&reach_prob)?;
        Ok(Self { reach_prob, exit_prob })
    }

    /// Every layer runs; the decision leaves from the last one.
    pub fn plain(layers: usize) -> Self {
        let mut exit_prob = vec![0.0; layers];
        if let Some(last) = exit_prob.last_mut() {
            *last = 1.0;
        }
        Self {
            reach_prob: vec![1.0; layers],
            exit_prob,
        }
    }

    /// A single gate-classification exit at `gate` (zero-based) that emits the
    /// decision with probability `exit_probability`.
    pub fn single_gate(layers: usize, gate: usize, exit_probability: f64) -> Result<Self, ProfileError> {
        let reach = (0..layers)
            .map(|j| if j <= gate { 1.0 } else { 1.0 - exit_probability })
            .collect();
        Self::from_reach(reach)
    }

    pub fn len(&self) -> usize {
        self.reach_prob.len()
    }

    pub fn is_empty(&self) -> bool {
        self.reach_prob.is_empty()
    }

    pub fn check(&self) -> Result<(), ProfileError> {
        let expected = derive_exit_probabilities(&self.reach_prob)?;
        if expected.len() != self.exit_prob.len() {
            return Err(ProfileError::LengthMismatch {
                expected: expected.len(),
                got: self.exit_prob.len(),
            });
        }
        for (index, (&e, &g)) in expected.iter().zip(&self.exit_prob).enumerate() {
            if g.is_nan() || g < 0.0 || (e - g).abs() > PROB_TOLERANCE {
                return Err(ProfileError::ExitMismatch {
                    index,
                    expected: e,
                    got: g,
                });
            }
        }
        Ok(())
    }
}

/// An ordered chain of layers with its input and decision payload sizes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CnnSpec {
    pub name: String,
    /// Size of the source image, in KB.
    pub input_kb: f64,
    pub layers: Vec<LayerSpec>,
    pub gate: GateProfile,
    /// Size of the decision sent to the sink from any exit, in KB.
    pub final_out_kb: f64,
}

impl CnnSpec {
    /// A chain without gate exits; the decision payload is the last layer's output.
    pub fn plain(name: impl Into<String>, input_kb: f64, layers: Vec<LayerSpec>) -> Self {
        let final_out_kb = layers.last().map_or(0.0, |l| l.out_repr_kb);
        Self {
            name: name.into(),
            input_kb,
            gate: GateProfile::plain(layers.len()),
            layers,
            final_out_kb,
        }
    }

    pub fn depth(&self) -> usize {
        self.layers.len()
    }
}

/// Capabilities of one family of compute units.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeviceClass {
    pub name: String,
    pub mem_cap_kb: f64,
    /// Per-decision multiplication budget in millions; `None` means unconstrained.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub compute_cap_mmul: Option<f64>,
    pub speed_mmul_per_s: f64,
}

/// `(cnn, layer)` address of a layer, zero-based.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct LayerRef {
    pub cnn: usize,
    pub layer: usize,
}

impl LayerRef {
    pub fn new(cnn: usize, layer: usize) -> Self {
        Self { cnn, layer }
    }
}

/// Layers of different CNNs that are physically one layer: they are
/// co-located and counted once against unit capacities.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SharingGroup {
    pub members: Vec<LayerRef>,
}

impl SharingGroup {
    pub fn new(members: Vec<LayerRef>) -> Self {
        Self { members }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlacementProblem {
    pub cnns: Vec<CnnSpec>,
    /// Source vertex of each CNN, indexed like `cnns`.
    pub sources: Vec<usize>,
    pub topology: Topology,
    /// Device class of every unit vertex, keyed by vertex index.
    pub unit_classes: BTreeMap<usize, DeviceClass>,
    /// Maximum number of (physical) layers per unit.
    pub layers_per_unit_cap: u32,
    pub data_rate_bits_per_s: f64,
    #[serde(default)]
    pub sharing: Vec<SharingGroup>,
    #[serde(default)]
    pub conventions: EvalConventions,
}

impl PlacementProblem {
    pub fn sink(&self) -> Option<usize> {
        self.topology.sink()
    }

    /// Unit vertices in ascending index order.
    pub fn units(&self) -> Vec<usize> {
        self.topology.units()
    }

    pub fn class_of(&self, unit: usize) -> Option<&DeviceClass> {
        self.unit_classes.get(&unit)
    }

    pub fn total_layers(&self) -> usize {
        self.cnns.iter().map(CnnSpec::depth).sum()
    }

    pub fn with_conventions(mut self, conventions: EvalConventions) -> Self {
        self.conventions = conventions;
        self
    }

    pub fn validate(&self) -> Result<(), ValidationError> {
        let issues = collect_issues(self);
        if issues.is_empty() {
            Ok(())
        } else {
            Err(ValidationError { issues })
        }
    }

    pub fn physical_layers(&self) -> PhysicalLayers {
        PhysicalLayers::new(self)
    }
}

/// Maps every `(cnn, layer)` onto a physical layer: shared layers collapse to
/// one entry. Physical layers are numbered by first appearance in `(cnn, layer)`
/// order.
#[derive(Debug, Clone, PartialEq)]
pub struct PhysicalLayers {
    slot: Vec<Vec<usize>>,
    members: Vec<Vec<LayerRef>>,
    group: Vec<Option<usize>>,
}

impl PhysicalLayers {
    fn new(problem: &PlacementProblem) -> Self {
        let mut group_of: BTreeMap<LayerRef, usize> = BTreeMap::new();
        for (g, group) in problem.sharing.iter().enumerate() {
            for &m in &group.members {
                group_of.entry(m).or_insert(g);
            }
        }
        let mut slot: Vec<Vec<usize>> = problem.cnns.iter().map(|c| vec![usize::MAX; c.depth()]).collect();
        let mut members: Vec<Vec<LayerRef>> = Vec::new();
        let mut group = Vec::new();
        let mut group_slot: BTreeMap<usize, usize> = BTreeMap::new();
        for (u, cnn) in problem.cnns.iter().enumerate() {
            for j in 0..cnn.depth() {
                let r = LayerRef::new(u, j);
                let p = match group_of.get(&r) {
                    Some(&g) => *group_slot.entry(g).or_insert_with(|| {
                        members.push(Vec::new());
                        group.push(Some(g));
                        members.len() - 1
                    }),
                    None => {
                        members.push(Vec::new());
                        group.push(None);
                        members.len() - 1
                    }
                };
                members[p].push(r);
                slot[u][j] = p;
            }
        }
        Self { slot, members, group }
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    pub fn slot(&self, cnn: usize, layer: usize) -> usize {
        self.slot[cnn][layer]
    }

    pub fn members(&self, physical: usize) -> &[LayerRef] {
        &self.members[physical]
    }

    /// Sharing-group index of a physical layer, if it is shared.
    pub fn group(&self, physical: usize) -> Option<usize> {
        self.group[physical]
    }

    /// The member whose footprint represents the physical layer.
    pub fn canonical(&self, physical: usize) -> LayerRef {
        self.members[physical][0]
    }
}

/// One problem-validation diagnostic.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Issue {
    pub field: String,
    pub message: String,
}

impl fmt::Display for Issue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.field, self.message)
    }
}

/// Every invariant violation found in a problem, not just the first.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub struct ValidationError {
    pub issues: Vec<Issue>,
}

impl fmt::Display for ValidationError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "invalid problem ({} issue(s))", self.issues.len())?;
        for issue in &self.issues {
            write!(f, "\n  {issue}")?;
        }
        Ok(())
    }
}

/// Returns the problem unchanged iff it satisfies every model invariant.
pub fn validate_problem(problem: PlacementProblem) -> Result<PlacementProblem, ValidationError> {
    problem.validate()?;
    Ok(problem)
}

struct Issues(Vec<Issue>);

impl Issues {
    fn push(&mut self, field: impl Into<String>, message: impl Into<String>) {
        self.0.push(Issue {
            field: field.into(),
            message: message.into(),
        });
    }

    fn nonneg(&mut self, field: impl FnOnce() -> String, value: f64) {
        if !(value >= 0.0 && value.is_finite()) {
            self.push(field(), format!("must be a finite nonnegative number, got {value}"));
        }
    }

    fn positive(&mut self, field: impl FnOnce() -> String, value: f64) {
        if !(value > 0.0 && value.is_finite()) {
            self.push(field(), format!("must be a finite positive number, got {value}"));
        }
    }
}

fn collect_issues(problem: &PlacementProblem) -> Vec<Issue> {
    let mut issues = Issues(Vec::new());
    let topo = &problem.topology;
    let n = topo.len();

    for (u, cnn) in problem.cnns.iter().enumerate() {
        let at = |field: &str| format!("cnns[{u}].{field}");
        if cnn.layers.is_empty() {
            issues.push(at("layers"), "a CNN needs at least one layer");
        }
        issues.nonneg(|| at("input_kb"), cnn.input_kb);
        issues.nonneg(|| at("final_out_kb"), cnn.final_out_kb);
        for (j, layer) in cnn.layers.iter().enumerate() {
            issues.nonneg(|| format!("cnns[{u}].layers[{j}].memory_kb"), layer.memory_kb);
            issues.nonneg(|| format!("cnns[{u}].layers[{j}].compute_mmul"), layer.compute_mmul);
            issues.nonneg(|| format!("cnns[{u}].layers[{j}].out_repr_kb"), layer.out_repr_kb);
        }
        if cnn.gate.reach_prob.len() != cnn.depth() || cnn.gate.exit_prob.len() != cnn.depth() {
            issues.push(
                at("gate"),
                format!(
                    "gate lists have lengths {}/{}, expected {}",
                    cnn.gate.reach_prob.len(),
                    cnn.gate.exit_prob.len(),
                    cnn.depth()
                ),
            );
        } else if let Err(e) = cnn.gate.check() {
            issues.push(at("gate"), e.to_string());
        }
    }

    // Vertices and topology.
    let mut ids = BTreeSet::new();
    for (v, vertex) in topo.vertices().iter().enumerate() {
        if !ids.insert(vertex.id.as_str()) {
            issues.push(
                format!("topology.vertices[{v}].id"),
                format!("duplicate vertex id {:?}", vertex.id),
            );
        }
        if !(vertex.x.is_finite() && vertex.y.is_finite()) {
            issues.push(format!("topology.vertices[{v}]"), "position must be finite");
        }
    }
    if let Some(range) = topo.range() {
        issues.positive(|| "topology.range".to_string(), range);
    }
    if topo.adjacency().len() != n || topo.hop_matrix().len() != n {
        issues.push("topology", "adjacency or hop matrix does not match the vertex count");
    } else {
        if !topo.adjacency().is_symmetric_irreflexive() {
            issues.push("topology.adjacency", "must be symmetric and irreflexive");
        } else if &all_pairs_hop_distance(topo.adjacency()) != topo.hop_matrix() {
            issues.push("topology.hop_dist", "inconsistent with adjacency");
        }
        if let Err(e) = topo.assert_connected() {
            issues.push("topology", e.to_string());
        }
    }
    let sinks = topo.vertices().iter().filter(|v| v.role == Role::Sink).count();
    if sinks != 1 {
        issues.push("topology", format!("expected exactly one sink vertex, found {sinks}"));
    }
    let source_count = topo.vertices().iter().filter(|v| v.role == Role::Source).count();
    if source_count != problem.cnns.len() {
        issues.push(
            "topology",
            format!("{} source vertices for {} CNNs", source_count, problem.cnns.len()),
        );
    }
    if problem.sources.len() != problem.cnns.len() {
        issues.push(
            "sources",
            format!(
                "{} sources listed for {} CNNs",
                problem.sources.len(),
                problem.cnns.len()
            ),
        );
    }
    let mut seen_sources = BTreeSet::new();
    for (u, &s) in problem.sources.iter().enumerate() {
        if s >= n || topo.vertex(s).role != Role::Source {
            issues.push(format!("sources[{u}]"), format!("vertex {s} is not a source vertex"));
        } else if !seen_sources.insert(s) {
            issues.push(
                format!("sources[{u}]"),
                format!("source vertex {s} already feeds another CNN"),
            );
        }
    }

    // Units and device classes.
    for v in topo.units() {
        match problem.unit_classes.get(&v) {
            None => issues.push(format!("units.{}", topo.vertex(v).id), "unit has no device class"),
            Some(class) => {
                let at = |f: &str| format!("units.{}.{f}", topo.vertex(v).id);
                issues.positive(|| at("mem_cap_kb"), class.mem_cap_kb);
                issues.positive(|| at("speed_mmul_per_s"), class.speed_mmul_per_s);
                if let Some(cap) = class.compute_cap_mmul {
                    issues.positive(|| at("compute_cap_mmul"), cap);
                }
            }
        }
    }
    for &v in problem.unit_classes.keys() {
        if v >= n || topo.vertex(v).role != Role::Unit {
            issues.push(
                format!("units[{v}]"),
                "device class assigned to a vertex that is not a unit",
            );
        }
    }
    if topo.units().is_empty() && problem.total_layers() > 0 {
        issues.push("units", "no compute units to place layers on");
    }

    if problem.layers_per_unit_cap == 0 {
        issues.push("config.L", "layers_per_unit_cap must be at least 1");
    }
    issues.positive(
        || "config.data_rate_bits_per_s".to_string(),
        problem.data_rate_bits_per_s,
    );

    // Sharing groups.
    let mut claimed: BTreeMap<LayerRef, usize> = BTreeMap::new();
    for (g, group) in problem.sharing.iter().enumerate() {
        let at = format!("sharing[{g}]");
        if group.members.len() < 2 {
            issues.push(at.clone(), "a sharing group needs at least two members");
        }
        let mut cnns_in_group = BTreeSet::new();
        let mut footprint: Option<(f64, f64)> = None;
        for m in &group.members {
            let Some(layer) = problem.cnns.get(m.cnn).and_then(|c| c.layers.get(m.layer)) else {
                issues.push(at.clone(), format!("member ({}, {}) is out of range", m.cnn, m.layer));
                continue;
            };
            if let Some(prev) = claimed.insert(*m, g) {
                issues.push(
                    at.clone(),
                    format!("member ({}, {}) already belongs to sharing[{prev}]", m.cnn, m.layer),
                );
            }
            if !cnns_in_group.insert(m.cnn) {
                issues.push(at.clone(), format!("two members come from CNN {}", m.cnn));
            }
            match footprint {
                None => footprint = Some((layer.memory_kb, layer.compute_mmul)),
                Some((mem, comp)) => {
                    if mem != layer.memory_kb {
                        issues.push(
                            at.clone(),
                            format!("members differ in memory_kb ({mem} vs {})", layer.memory_kb),
                        );
                    }
                    if comp != layer.compute_mmul {
                        issues.push(
                            at.clone(),
                            format!("members differ in compute_mmul ({comp} vs {})", layer.compute_mmul),
                        );
                    }
                }
            }
        }
    }

    issues.0
}
