//! Decision-latency objective, its breakdown, and constraint checking.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{CnnSpec, PlacementProblem};
use crate::topology::Role;

/// How layer compute is weighted in the processing term.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProcessingWeight {
    /// Layer `j` weighted by its own reach probability, all layers included.
    #[default]
    AsWritten,
    /// Layer `j` weighted by the reach probability of layer `j + 1`; the last
    /// layer's compute is excluded. Matches the reference latency values.
    NextLayerCompat,
}

/// How payload kilobytes are turned into transmitted bits.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PayloadUnit {
    /// 1 KB = 8000 bits.
    #[default]
    BitsExact,
    /// 1 KB = 1000 "bits", matching the magnitudes of the reference values.
    BytesAsBitsCompat,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct EvalConventions {
    pub processing_weight: ProcessingWeight,
    pub include_processing: bool,
    pub payload_unit: PayloadUnit,
}

impl Default for EvalConventions {
    fn default() -> Self {
        Self {
            processing_weight: ProcessingWeight::AsWritten,
            include_processing: true,
            payload_unit: PayloadUnit::BitsExact,
        }
    }
}

impl EvalConventions {
    pub fn compat() -> Self {
        Self {
            processing_weight: ProcessingWeight::NextLayerCompat,
            include_processing: true,
            payload_unit: PayloadUnit::BytesAsBitsCompat,
        }
    }

    pub fn without_processing(self) -> Self {
        Self {
            include_processing: false,
            ..self
        }
    }
}

impl PayloadUnit {
    pub fn bits_per_kb(self) -> f64 {
        match self {
            PayloadUnit::BitsExact => 8000.0,
            PayloadUnit::BytesAsBitsCompat => 1000.0,
        }
    }
}

/// Unit vertex of every layer of every CNN: `assign[u][j]`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Placement {
    pub assign: Vec<Vec<usize>>,
}

impl Placement {
    pub fn new(assign: Vec<Vec<usize>>) -> Self {
        Self { assign }
    }

    /// Every layer of every CNN on `unit`.
    pub fn single_unit(problem: &PlacementProblem, unit: usize) -> Self {
        Self::new(problem.cnns.iter().map(|c| vec![unit; c.depth()]).collect())
    }

    pub fn unit(&self, cnn: usize, layer: usize) -> usize {
        self.assign[cnn][layer]
    }
}

/// Latency terms in seconds.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct LatencyBreakdown {
    pub t_s: f64,
    pub t_inter: f64,
    pub t_f: f64,
    /// Processing time of every unit that hosts at least one layer.
    pub t_p_per_unit: BTreeMap<usize, f64>,
    pub t_t: f64,
    pub t_p: f64,
    pub t: f64,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum LatencyError {
    #[error("hop count is unreachable")]
    Unreachable,
    #[error("no path between vertex {from} and vertex {to}")]
    UnreachableHop { from: usize, to: usize },
    #[error("vertex {unit} hosts a layer but has no device class")]
    MissingDeviceClass { unit: usize },
    #[error("placement has {got} CNN(s), problem has {expected}")]
    CnnCount { expected: usize, got: usize },
    #[error("placement of CNN {cnn} has {got} layer(s), expected {expected}")]
    LayerCount { cnn: usize, expected: usize, got: usize },
    #[error("placement refers to vertex {vertex}, topology has {len}")]
    UnknownVertex { vertex: usize, len: usize },
    #[error("problem has no sink vertex")]
    NoSink,
}

/// Time to push `payload_kb` over `hops` hops at `rate_bits_per_s`.
pub fn transmission_time(
    payload_kb: f64,
    rate_bits_per_s: f64,
    hops: Option<u32>,
    unit: PayloadUnit,
) -> Result<f64, LatencyError> {
    let hops = hops.ok_or(LatencyError::Unreachable)?;
    Ok(payload_kb * unit.bits_per_kb() / rate_bits_per_s * f64::from(hops))
}

/// Transmission time between two vertices of the problem's topology.
pub(crate) fn hop_time(
    problem: &PlacementProblem,
    payload_kb: f64,
    from: usize,
    to: usize,
) -> Result<f64, LatencyError> {
    transmission_time(
        payload_kb,
        problem.data_rate_bits_per_s,
        problem.topology.hops(from, to),
        problem.conventions.payload_unit,
    )
    .map_err(|_| LatencyError::UnreachableHop { from, to })
}

/// Weight of layer `j`'s compute in the processing term.
pub fn processing_weight(cnn: &CnnSpec, j: usize, conventions: &EvalConventions) -> f64 {
    if !conventions.include_processing {
        return 0.0;
    }
    match conventions.processing_weight {
        ProcessingWeight::AsWritten => cnn.gate.reach_prob[j],
        ProcessingWeight::NextLayerCompat => cnn.gate.reach_prob.get(j + 1).copied().unwrap_or(0.0),
    }
}

fn check_shape(placement: &Placement, problem: &PlacementProblem) -> Result<(), LatencyError> {
    if placement.assign.len() != problem.cnns.len() {
        return Err(LatencyError::CnnCount {
            expected: problem.cnns.len(),
            got: placement.assign.len(),
        });
    }
    let len = problem.topology.len();
    for (cnn, (units, spec)) in placement.assign.iter().zip(&problem.cnns).enumerate() {
        if units.len() != spec.depth() {
            return Err(LatencyError::LayerCount {
                cnn,
                expected: spec.depth(),
                got: units.len(),
            });
        }
        if let Some(&vertex) = units.iter().find(|&&v| v >= len) {
            return Err(LatencyError::UnknownVertex { vertex, len });
        }
    }
    Ok(())
}

pub fn source_time(placement: &Placement, problem: &PlacementProblem) -> Result<f64, LatencyError> {
    check_shape(placement, problem)?;
    source_sum(placement, problem)
}

fn source_sum(placement: &Placement, problem: &PlacementProblem) -> Result<f64, LatencyError> {
    let mut total = 0.0;
    for (u, cnn) in problem.cnns.iter().enumerate() {
        total += cnn.gate.reach_prob[0] * hop_time(problem, cnn.input_kb, problem.sources[u], placement.unit(u, 0))?;
    }
    Ok(total)
}

pub fn inter_layer_time(placement: &Placement, problem: &PlacementProblem) -> Result<f64, LatencyError> {
    check_shape(placement, problem)?;
    inter_sum(placement, problem)
}

fn inter_sum(placement: &Placement, problem: &PlacementProblem) -> Result<f64, LatencyError> {
    let mut total = 0.0;
    for (u, cnn) in problem.cnns.iter().enumerate() {
        for j in 0..cnn.depth().saturating_sub(1) {
            let (a, b) = (placement.unit(u, j), placement.unit(u, j + 1));
            total += cnn.gate.reach_prob[j + 1] * hop_time(problem, cnn.layers[j].out_repr_kb, a, b)?;
        }
    }
    Ok(total)
}

pub fn sink_time(placement: &Placement, problem: &PlacementProblem) -> Result<f64, LatencyError> {
    check_shape(placement, problem)?;
    sink_sum(placement, problem)
}

fn sink_sum(placement: &Placement, problem: &PlacementProblem) -> Result<f64, LatencyError> {
    let sink = problem.sink().ok_or(LatencyError::NoSink)?;
    let mut total = 0.0;
    for (u, cnn) in problem.cnns.iter().enumerate() {
        for j in 0..cnn.depth() {
            total += cnn.gate.exit_prob[j] * hop_time(problem, cnn.final_out_kb, placement.unit(u, j), sink)?;
        }
    }
    Ok(total)
}

/// Per-vertex processing time, indexed by vertex; zero where nothing runs.
fn processing_by_vertex(placement: &Placement, problem: &PlacementProblem) -> Result<Vec<f64>, LatencyError> {
    let mut per_vertex = vec![0.0; problem.topology.len()];
    for (u, cnn) in problem.cnns.iter().enumerate() {
        for (j, layer) in cnn.layers.iter().enumerate() {
            let v = placement.unit(u, j);
            let class = problem
                .class_of(v)
                .ok_or(LatencyError::MissingDeviceClass { unit: v })?;
            let w = processing_weight(cnn, j, &problem.conventions);
            per_vertex[v] += w * layer.compute_mmul / class.speed_mmul_per_s;
        }
    }
    Ok(per_vertex)
}

pub fn processing_time(
    placement: &Placement,
    problem: &PlacementProblem,
) -> Result<BTreeMap<usize, f64>, LatencyError> {
    check_shape(placement, problem)?;
    let per_vertex = processing_by_vertex(placement, problem)?;
    let hosts: BTreeSet<usize> = placement.assign.iter().flatten().copied().collect();
    Ok(hosts.into_iter().map(|v| (v, per_vertex[v])).collect())
}

/// Full breakdown of the objective.
pub fn evaluate(placement: &Placement, problem: &PlacementProblem) -> Result<LatencyBreakdown, LatencyError> {
    check_shape(placement, problem)?;
    let t_s = source_sum(placement, problem)?;
    let t_inter = inter_sum(placement, problem)?;
    let t_f = sink_sum(placement, problem)?;
    let per_vertex = processing_by_vertex(placement, problem)?;
    let hosts: BTreeSet<usize> = placement.assign.iter().flatten().copied().collect();
    let t_p_per_unit: BTreeMap<usize, f64> = hosts.into_iter().map(|v| (v, per_vertex[v])).collect();
    let t_p = t_p_per_unit.values().sum();
    let t_t = t_s + t_inter + t_f;
    Ok(LatencyBreakdown {
        t_s,
        t_inter,
        t_f,
        t_p_per_unit,
        t_t,
        t_p,
        t: t_t + t_p,
    })
}

/// `evaluate(..).t` without building the breakdown; bit-identical to it.
pub fn objective(placement: &Placement, problem: &PlacementProblem) -> Result<f64, LatencyError> {
    check_shape(placement, problem)?;
    let t_t = source_sum(placement, problem)? + inter_sum(placement, problem)? + sink_sum(placement, problem)?;
    // Non-hosting vertices hold exactly 0.0, so summing them changes nothing.
    let t_p: f64 = processing_by_vertex(placement, problem)?.iter().sum();
    Ok(t_t + t_p)
}

/// One broken constraint.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Violation {
    CnnCount { expected: usize, got: usize },
    LayerCount { cnn: usize, expected: usize, got: usize },
    NotAUnit { cnn: usize, layer: usize, vertex: usize },
    LayerCap { unit: usize, count: usize, cap: u32 },
    Memory { unit: usize, used_kb: f64, cap_kb: f64 },
    Compute { unit: usize, used_mmul: f64, cap_mmul: f64 },
    SharingSplit { group: usize, units: Vec<usize> },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::CnnCount { expected, got } => write!(f, "placement covers {got} CNN(s), expected {expected}"),
            Violation::LayerCount { cnn, expected, got } => {
                write!(f, "CNN {cnn}: {got} layer(s) placed, expected {expected}")
            }
            Violation::NotAUnit { cnn, layer, vertex } => {
                write!(f, "CNN {cnn} layer {layer}: vertex {vertex} is not a compute unit")
            }
            Violation::LayerCap { unit, count, cap } => {
                write!(f, "unit {unit}: {count} layers exceed the cap of {cap}")
            }
            Violation::Memory { unit, used_kb, cap_kb } => {
                write!(f, "unit {unit}: memory {used_kb} KB exceeds the cap of {cap_kb} KB")
            }
            Violation::Compute {
                unit,
                used_mmul,
                cap_mmul,
            } => {
                write!(
                    f,
                    "unit {unit}: compute {used_mmul} Mmul exceeds the cap of {cap_mmul} Mmul"
                )
            }
            Violation::SharingSplit { group, units } => {
                write!(f, "sharing group {group} is split across units {units:?}")
            }
        }
    }
}

/// All constraint violations of a placement; empty iff feasible. Shared layers
/// count once against each unit's tallies.
pub fn check_feasibility(placement: &Placement, problem: &PlacementProblem) -> Vec<Violation> {
    let mut out = Vec::new();
    if placement.assign.len() != problem.cnns.len() {
        out.push(Violation::CnnCount {
            expected: problem.cnns.len(),
            got: placement.assign.len(),
        });
    }
    let mut shape_ok = placement.assign.len() == problem.cnns.len();
    for (cnn, (units, spec)) in placement.assign.iter().zip(&problem.cnns).enumerate() {
        if units.len() != spec.depth() {
            shape_ok = false;
            out.push(Violation::LayerCount {
                cnn,
                expected: spec.depth(),
                got: units.len(),
            });
        }
        for (layer, &vertex) in units.iter().enumerate() {
            let is_unit = vertex < problem.topology.len() && problem.topology.vertex(vertex).role == Role::Unit;
            if !is_unit {
                shape_ok = false;
                out.push(Violation::NotAUnit { cnn, layer, vertex });
            }
        }
    }
    if !shape_ok {
        return out;
    }

    let phys = problem.physical_layers();
    // Unit of each physical layer: its first member's unit.
    let mut host = vec![usize::MAX; phys.len()];
    for p in 0..phys.len() {
        let members = phys.members(p);
        let first = members[0];
        host[p] = placement.unit(first.cnn, first.layer);
        if let Some(group) = phys.group(p) {
            let units: BTreeSet<usize> = members.iter().map(|m| placement.unit(m.cnn, m.layer)).collect();
            if units.len() > 1 {
                out.push(Violation::SharingSplit {
                    group,
                    units: units.into_iter().collect(),
                });
            }
        }
    }

    let n = problem.topology.len();
    let mut count = vec![0usize; n];
    let mut mem = vec![0.0f64; n];
    let mut comp = vec![0.0f64; n];
    for p in 0..phys.len() {
        let c = phys.canonical(p);
        let layer = &problem.cnns[c.cnn].layers[c.layer];
        // A split group occupies every unit it touches.
        let mut units: Vec<usize> = phys.members(p).iter().map(|m| placement.unit(m.cnn, m.layer)).collect();
        units.sort_unstable();
        units.dedup();
        debug_assert!(units.contains(&host[p]));
        for v in units {
            count[v] += 1;
            mem[v] += layer.memory_kb;
            comp[v] += layer.compute_mmul;
        }
    }
    for v in 0..n {
        if count[v] == 0 {
            continue;
        }
        if count[v] > problem.layers_per_unit_cap as usize {
            out.push(Violation::LayerCap {
                unit: v,
                count: count[v],
                cap: problem.layers_per_unit_cap,
            });
        }
        if let Some(class) = problem.class_of(v) {
            if mem[v] > class.mem_cap_kb {
                out.push(Violation::Memory {
                    unit: v,
                    used_kb: mem[v],
                    cap_kb: class.mem_cap_kb,
                });
            }
            if let Some(cap) = class.compute_cap_mmul {
                if comp[v] > cap {
                    out.push(Violation::Compute {
                        unit: v,
                        used_mmul: comp[v],
                        cap_mmul: cap,
                    });
                }
            }
        }
    }
    out
}
