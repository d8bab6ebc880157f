//! Exact and heuristic placement search.
//!
//! All methods work on physical layers (shared layers collapsed) in layer
//! order, over units in a seed-shuffled order. Ties are broken by that order:
//! among equal objectives the exact methods keep the lexicographically first
//! placement they meet.

use alloc::boxed::Box;
use alloc::vec;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::latency::{self, processing_weight, transmission_time, LatencyError, Placement};
use crate::model::{PhysicalLayers, PlacementProblem, ValidationError};
use crate::scenario::derive_seed;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Exhaustive,
    #[default]
    BranchAndBound,
    LocalSearch,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolverConfig {
    pub method: Method,
    pub seed: u64,
    /// Wall-clock budget in seconds. Only honored with the `std` feature.
    pub time_budget_s: Option<f64>,
    /// Maximum search nodes for the exact methods.
    pub node_limit: Option<u64>,
    /// Local-search restarts, also used for the branch-and-bound warm start.
    pub restarts: u32,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            method: Method::BranchAndBound,
            seed: 0,
            time_budget_s: None,
            node_limit: None,
            restarts: 16,
        }
    }
}

impl SolverConfig {
    pub fn new(method: Method, seed: u64) -> Self {
        Self {
            method,
            seed,
            ..Self::default()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct SolveStats {
    /// Partial assignments visited (exact methods) or moves evaluated (local search).
    pub nodes: u64,
    /// Complete feasible placements evaluated.
    pub leaves: u64,
    /// Leaves whose objective equaled the incumbent.
    pub ties: u64,
    /// Nodes visited per branching depth (physical layer).
    pub nodes_per_depth: Vec<u64>,
    /// Local-search restarts completed.
    pub restarts: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Solution {
    pub placement: Placement,
    /// Equals `evaluate(&placement, problem).t` exactly.
    pub objective: f64,
    pub proven_optimal: bool,
    pub stats: SolveStats,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SolveError {
    #[error(transparent)]
    Invalid(#[from] ValidationError),
    #[error("invalid solver configuration: {0}")]
    InvalidConfig(&'static str),
    #[error("no placement satisfies the constraints")]
    Infeasible,
    #[error("no placement found (heuristic search; the instance may still be feasible)")]
    NoPlacementFound,
    #[error("search budget exceeded{}", if incumbent.is_some() { "" } else { " without a feasible placement" })]
    BudgetExceeded { incumbent: Option<Box<Solution>> },
    #[error(transparent)]
    Latency(#[from] LatencyError),
}

/// Polled during search; returning `true` stops it.
pub trait StopCondition {
    fn should_stop(&self) -> bool;
}

pub struct NeverStop;

impl StopCondition for NeverStop {
    fn should_stop(&self) -> bool {
        false
    }
}

#[cfg(feature = "std")]
pub struct Deadline(pub std::time::Instant);

#[cfg(feature = "std")]
impl Deadline {
    pub fn after_secs(secs: f64) -> Self {
        Self(std::time::Instant::now() + std::time::Duration::from_secs_f64(secs))
    }
}

#[cfg(feature = "std")]
impl StopCondition for Deadline {
    fn should_stop(&self) -> bool {
        std::time::Instant::now() >= self.0
    }
}

/// Solves with the configured method and time budget.
pub fn solve(problem: &PlacementProblem, config: &SolverConfig) -> Result<Solution, SolveError> {
    #[cfg(feature = "std")]
    if let Some(secs) = config.time_budget_s {
        if secs > 0.0 && secs.is_finite() {
            return solve_with(problem, config, &Deadline::after_secs(secs));
        }
    }
    solve_with(problem, config, &NeverStop)
}

pub fn solve_with(
    problem: &PlacementProblem,
    config: &SolverConfig,
    stop: &dyn StopCondition,
) -> Result<Solution, SolveError> {
    problem.validate()?;
    if config.restarts == 0 {
        return Err(SolveError::InvalidConfig("restarts must be at least 1"));
    }
    if let Some(t) = config.time_budget_s {
        if t.is_nan() || t <= 0.0 {
            return Err(SolveError::InvalidConfig("time budget must be positive"));
        }
    }
    let space = Space::new(problem, config.seed)?;
    match config.method {
        Method::Exhaustive => exact(&space, config, stop, None),
        Method::BranchAndBound => {
            let warm = match local_search(&space, config, stop) {
                Ok(s) => Some(s),
                Err(SolveError::NoPlacementFound | SolveError::BudgetExceeded { .. }) => None,
                Err(e) => return Err(e),
            };
            exact(&space, config, stop, Some(warm))
        }
        Method::LocalSearch => local_search(&space, config, stop),
    }
}

pub fn solve_exhaustive(problem: &PlacementProblem, config: &SolverConfig) -> Result<Solution, SolveError> {
    solve(
        problem,
        &SolverConfig {
            method: Method::Exhaustive,
            ..config.clone()
        },
    )
}

pub fn solve_branch_and_bound(problem: &PlacementProblem, config: &SolverConfig) -> Result<Solution, SolveError> {
    solve(
        problem,
        &SolverConfig {
            method: Method::BranchAndBound,
            ..config.clone()
        },
    )
}

pub fn solve_local_search(problem: &PlacementProblem, config: &SolverConfig) -> Result<Solution, SolveError> {
    solve(
        problem,
        &SolverConfig {
            method: Method::LocalSearch,
            ..config.clone()
        },
    )
}

/// Precomputed costs over physical layers and ranked units.
struct Space<'a> {
    problem: &'a PlacementProblem,
    phys: PhysicalLayers,
    /// Rank to vertex.
    order: Vec<usize>,
    np: usize,
    nu: usize,
    mem: Vec<f64>,
    comp: Vec<f64>,
    mem_cap: Vec<f64>,
    comp_cap: Vec<Option<f64>>,
    cap: usize,
    /// `node_cost[p * nu + r]`: source, processing and sink terms of physical
    /// layer `p` on rank `r`; infinite when the layer alone overflows the unit.
    node_cost: Vec<f64>,
    /// Links closed when `p` is assigned: `(other layer, cost per hop)`, other < p.
    closing: Vec<Vec<(usize, f64)>>,
    /// All links touching `p`.
    links: Vec<Vec<(usize, f64)>>,
    hops: Vec<f64>,
}

impl<'a> Space<'a> {
    fn new(problem: &'a PlacementProblem, seed: u64) -> Result<Self, LatencyError> {
        let phys = problem.physical_layers();
        let mut order = problem.units();
        order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
        let np = phys.len();
        let nu = order.len();
        let conv = &problem.conventions;
        let sink = problem.sink().ok_or(LatencyError::NoSink)?;
        let rate = problem.data_rate_bits_per_s;

        let mut mem = Vec::with_capacity(np);
        let mut comp = Vec::with_capacity(np);
        for p in 0..np {
            let c = phys.canonical(p);
            let layer = &problem.cnns[c.cnn].layers[c.layer];
            mem.push(layer.memory_kb);
            comp.push(layer.compute_mmul);
        }
        let classes: Vec<_> = order
            .iter()
            .map(|&v| problem.class_of(v).ok_or(LatencyError::MissingDeviceClass { unit: v }))
            .collect::<Result<_, _>>()?;
        let mem_cap: Vec<f64> = classes.iter().map(|c| c.mem_cap_kb).collect();
        let comp_cap: Vec<Option<f64>> = classes.iter().map(|c| c.compute_cap_mmul).collect();

        let mut node_cost = vec![0.0; np * nu];
        for p in 0..np {
            for (r, &v) in order.iter().enumerate() {
                let mut cost = 0.0;
                for m in phys.members(p) {
                    let cnn = &problem.cnns[m.cnn];
                    if m.layer == 0 {
                        cost += cnn.gate.reach_prob[0]
                            * latency::hop_time(problem, cnn.input_kb, problem.sources[m.cnn], v)?;
                    }
                    cost += processing_weight(cnn, m.layer, conv) * cnn.layers[m.layer].compute_mmul
                        / classes[r].speed_mmul_per_s;
                    cost += cnn.gate.exit_prob[m.layer] * latency::hop_time(problem, cnn.final_out_kb, v, sink)?;
                }
                let fits = mem[p] <= mem_cap[r] && comp_cap[r].is_none_or(|cap| comp[p] <= cap);
                node_cost[p * nu + r] = if fits { cost } else { f64::INFINITY };
            }
        }

        let mut closing = vec![Vec::new(); np];
        let mut links = vec![Vec::new(); np];
        for (u, cnn) in problem.cnns.iter().enumerate() {
            for j in 0..cnn.depth().saturating_sub(1) {
                let (a, b) = (phys.slot(u, j), phys.slot(u, j + 1));
                let per_hop = cnn.gate.reach_prob[j + 1]
                    * transmission_time(cnn.layers[j].out_repr_kb, rate, Some(1), conv.payload_unit)?;
                closing[a.max(b)].push((a.min(b), per_hop));
                links[a].push((b, per_hop));
                links[b].push((a, per_hop));
            }
        }

        let mut hops = vec![0.0; nu * nu];
        for (r1, &v1) in order.iter().enumerate() {
            for (r2, &v2) in order.iter().enumerate() {
                let h = problem
                    .topology
                    .hops(v1, v2)
                    .ok_or(LatencyError::UnreachableHop { from: v1, to: v2 })?;
                hops[r1 * nu + r2] = f64::from(h);
            }
        }

        Ok(Self {
            problem,
            phys,
            order,
            np,
            nu,
            mem,
            comp,
            mem_cap,
            comp_cap,
            cap: problem.layers_per_unit_cap as usize,
            node_cost,
            closing,
            links,
            hops,
        })
    }

    fn hop(&self, r1: usize, r2: usize) -> f64 {
        self.hops[r1 * self.nu + r2]
    }

    /// Cost of putting `p` on `r` given the ranks of layers before `p`.
    fn incremental(&self, p: usize, r: usize, rank: &[usize]) -> f64 {
        let mut c = self.node_cost[p * self.nu + r];
        for &(q, per_hop) in &self.closing[p] {
            c += per_hop * self.hop(r, rank[q]);
        }
        c
    }

    fn cost(&self, rank: &[usize]) -> f64 {
        (0..self.np).map(|p| self.incremental(p, rank[p], rank)).sum()
    }

    fn placement(&self, rank: &[usize]) -> Placement {
        let assign = self
            .problem
            .cnns
            .iter()
            .enumerate()
            .map(|(u, cnn)| {
                (0..cnn.depth())
                    .map(|j| self.order[rank[self.phys.slot(u, j)]])
                    .collect()
            })
            .collect();
        Placement::new(assign)
    }

    /// Whether unit `r` stays within its caps when it holds exactly the layers
    /// `p` with `holds(p)`. Sums run in layer order, like the feasibility check.
    fn unit_fits(&self, r: usize, holds: impl Fn(usize) -> bool) -> bool {
        let (mut count, mut mem, mut comp) = (0usize, 0.0, 0.0);
        for p in (0..self.np).filter(|&p| holds(p)) {
            count += 1;
            mem += self.mem[p];
            comp += self.comp[p];
        }
        count <= self.cap && mem <= self.mem_cap[r] && self.comp_cap[r].is_none_or(|cap| comp <= cap)
    }
}

/// Running unit loads for in-order construction.
struct Loads {
    count: Vec<usize>,
    mem: Vec<f64>,
    comp: Vec<f64>,
}

impl Loads {
    fn new(nu: usize) -> Self {
        Self {
            count: vec![0; nu],
            mem: vec![0.0; nu],
            comp: vec![0.0; nu],
        }
    }

    fn admits(&self, s: &Space, p: usize, r: usize) -> bool {
        s.node_cost[p * s.nu + r].is_finite()
            && self.count[r] < s.cap
            && self.mem[r] + s.mem[p] <= s.mem_cap[r]
            && s.comp_cap[r].is_none_or(|cap| self.comp[r] + s.comp[p] <= cap)
    }

    fn push(&mut self, s: &Space, p: usize, r: usize) -> (f64, f64) {
        let saved = (self.mem[r], self.comp[r]);
        self.count[r] += 1;
        self.mem[r] += s.mem[p];
        self.comp[r] += s.comp[p];
        saved
    }

    fn pop(&mut self, r: usize, saved: (f64, f64)) {
        self.count[r] -= 1;
        self.mem[r] = saved.0;
        self.comp[r] = saved.1;
    }
}

struct Exact<'s, 'a> {
    space: &'s Space<'a>,
    stop: &'s dyn StopCondition,
    node_limit: Option<u64>,
    rank: Vec<usize>,
    loads: Loads,
    best: Option<(f64, Vec<usize>)>,
    stats: SolveStats,
    stopped: bool,
    /// Branch-and-bound data: suffix sums of per-layer lower bounds and the
    /// warm-start value.
    bound: Option<(Vec<f64>, f64)>,
}

impl Exact<'_, '_> {
    fn threshold(&self) -> f64 {
        let warm = self.bound.as_ref().map_or(f64::INFINITY, |b| b.1);
        let best = self.best.as_ref().map_or(f64::INFINITY, |b| b.0);
        let t = warm.min(best);
        // Slack keeps rounding in the bound from cutting off an equal leaf.
        t + t.abs() * 1e-9
    }

    fn search(&mut self, p: usize, acc: f64) -> Result<(), LatencyError> {
        let s = self.space;
        if p == s.np {
            return self.leaf();
        }
        for r in 0..s.nu {
            if self.stopped {
                return Ok(());
            }
            if !self.loads.admits(s, p, r) {
                continue;
            }
            let next = acc + s.incremental(p, r, &self.rank);
            if let Some((suffix, _)) = &self.bound {
                if next + suffix[p + 1] > self.threshold() {
                    continue;
                }
            }
            self.stats.nodes += 1;
            self.stats.nodes_per_depth[p] += 1;
            if self.stats.nodes.is_multiple_of(256) && self.stop.should_stop()
                || self.node_limit.is_some_and(|n| self.stats.nodes > n)
            {
                self.stopped = true;
                return Ok(());
            }
            self.rank[p] = r;
            let saved = self.loads.push(s, p, r);
            self.search(p + 1, next)?;
            self.loads.pop(r, saved);
        }
        Ok(())
    }

    fn leaf(&mut self) -> Result<(), LatencyError> {
        self.stats.leaves += 1;
        let t = latency::objective(&self.space.placement(&self.rank), self.space.problem)?;
        match &self.best {
            Some((b, _)) if t > *b => {}
            Some((b, _)) if t == *b => self.stats.ties += 1,
            _ => self.best = Some((t, self.rank.clone())),
        }
        Ok(())
    }
}

fn exact(
    space: &Space,
    config: &SolverConfig,
    stop: &dyn StopCondition,
    warm: Option<Option<Solution>>,
) -> Result<Solution, SolveError> {
    let bound = warm.as_ref().map(|w| {
        let l1 = space.cap == 1;
        let mut suffix = vec![0.0; space.np + 1];
        for p in (0..space.np).rev() {
            let min_node = (0..space.nu)
                .map(|r| space.node_cost[p * space.nu + r])
                .fold(f64::INFINITY, f64::min);
            // Two distinct layers can only share a unit when L > 1.
            let links: f64 = if l1 {
                space.closing[p].iter().map(|&(_, c)| c).sum()
            } else {
                0.0
            };
            suffix[p] = suffix[p + 1] + min_node + links;
        }
        let value = w.as_ref().map_or(f64::INFINITY, |s| s.objective);
        (suffix, value)
    });
    let mut ex = Exact {
        space,
        stop,
        node_limit: config.node_limit,
        rank: vec![0; space.np],
        loads: Loads::new(space.nu),
        best: None,
        stats: SolveStats {
            nodes_per_depth: vec![0; space.np],
            ..SolveStats::default()
        },
        stopped: false,
        bound,
    };
    if ex.bound.as_ref().is_none_or(|(suffix, _)| suffix[0] <= ex.threshold()) {
        ex.search(0, 0.0)?;
    }
    let stats = ex.stats;
    let found = ex.best.map(|(objective, rank)| Solution {
        placement: space.placement(&rank),
        objective,
        proven_optimal: !ex.stopped,
        stats: stats.clone(),
    });
    if ex.stopped {
        let incumbent = found.or_else(|| {
            warm.flatten().map(|mut w| {
                w.stats = stats;
                w
            })
        });
        return Err(SolveError::BudgetExceeded {
            incumbent: incumbent.map(Box::new),
        });
    }
    found.ok_or(SolveError::Infeasible)
}

/// Share of the cost range admitted to the randomized greedy candidate list.
const GREEDY_ALPHA: f64 = 0.3;

/// Greedy (or randomized greedy, with `rng`) construction. Layers go in
/// chain order; if that dead-ends, the construction is redone placing the
/// most constrained layer first.
fn construct(space: &Space, mut rng: Option<&mut ChaCha8Rng>) -> Option<Vec<usize>> {
    build(space, rng.as_deref_mut(), false).or_else(|| build(space, rng, true))
}

fn build(space: &Space, rng: Option<&mut ChaCha8Rng>, most_constrained: bool) -> Option<Vec<usize>> {
    let mut rank = vec![0; space.np];
    let mut placed = vec![false; space.np];
    let mut loads = Loads::new(space.nu);
    let mut rng = rng;
    let mut cands: Vec<(usize, f64)> = Vec::with_capacity(space.nu);
    for step in 0..space.np {
        let p = if most_constrained {
            (0..space.np)
                .filter(|&p| !placed[p])
                .min_by_key(|&p| (0..space.nu).filter(|&r| loads.admits(space, p, r)).count())?
        } else {
            step
        };
        cands.clear();
        cands.extend((0..space.nu).filter(|&r| loads.admits(space, p, r)).map(|r| {
            let mut c = space.node_cost[p * space.nu + r];
            for &(q, per_hop) in &space.links[p] {
                if placed[q] {
                    c += per_hop * space.hop(r, rank[q]);
                }
            }
            (r, c)
        }));
        let lo = cands.iter().map(|c| c.1).fold(f64::INFINITY, f64::min);
        let hi = cands.iter().map(|c| c.1).fold(f64::NEG_INFINITY, f64::max);
        let r = match rng.as_deref_mut() {
            None => cands.iter().find(|c| c.1 == lo)?.0,
            Some(rng) => {
                let cut = lo + GREEDY_ALPHA * (hi - lo);
                let rcl: Vec<usize> = cands.iter().filter(|c| c.1 <= cut).map(|c| c.0).collect();
                *rcl.get(rng.gen_range(0..rcl.len().max(1)))?
            }
        };
        rank[p] = r;
        placed[p] = true;
        loads.push(space, p, r);
    }
    // Loads were summed in placement order; confirm in layer order.
    (0..space.nu)
        .all(|r| space.unit_fits(r, |x| rank[x] == r))
        .then_some(rank)
}

/// Best-improvement descent over single reassignments and pairwise swaps.
fn descend(space: &Space, rank: &mut [usize], stats: &mut SolveStats, stop: &dyn StopCondition) {
    let mut cost = space.cost(rank);
    loop {
        let mut best: Option<(f64, usize, usize, bool)> = None;
        let eps = cost.abs() * 1e-12;
        for p in 0..space.np {
            let old = rank[p];
            for r in 0..space.nu {
                if r == old || !space.node_cost[p * space.nu + r].is_finite() {
                    continue;
                }
                stats.nodes += 1;
                let mut delta = space.node_cost[p * space.nu + r] - space.node_cost[p * space.nu + old];
                for &(q, c) in &space.links[p] {
                    delta += c * (space.hop(r, rank[q]) - space.hop(old, rank[q]));
                }
                if delta < -eps && best.is_none_or(|b| delta < b.0) && space.unit_fits(r, |x| x == p || rank[x] == r) {
                    best = Some((delta, p, r, false));
                }
            }
        }
        for p in 0..space.np {
            for q in p + 1..space.np {
                let (rp, rq) = (rank[p], rank[q]);
                if rp == rq
                    || !space.node_cost[p * space.nu + rq].is_finite()
                    || !space.node_cost[q * space.nu + rp].is_finite()
                {
                    continue;
                }
                stats.nodes += 1;
                rank.swap(p, q);
                let delta = space.cost(rank) - cost;
                let ok = delta < -eps
                    && best.is_none_or(|b| delta < b.0)
                    && space.unit_fits(rp, |x| rank[x] == rp)
                    && space.unit_fits(rq, |x| rank[x] == rq);
                rank.swap(p, q);
                if ok {
                    best = Some((delta, p, q, true));
                }
            }
        }
        match best {
            None => return,
            Some((_, p, r, false)) => rank[p] = r,
            Some((_, p, q, true)) => rank.swap(p, q),
        }
        cost = space.cost(rank);
        if stop.should_stop() {
            return;
        }
    }
}

fn local_search(space: &Space, config: &SolverConfig, stop: &dyn StopCondition) -> Result<Solution, SolveError> {
    let mut stats = SolveStats {
        nodes_per_depth: vec![0; space.np],
        ..SolveStats::default()
    };
    let mut best: Option<(f64, Vec<usize>)> = None;
    let mut stopped = false;
    for k in 0..config.restarts {
        if k > 0 && stop.should_stop() {
            stopped = true;
            break;
        }
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(config.seed, u64::from(k)));
        let start = if k == 0 {
            construct(space, None)
        } else {
            construct(space, Some(&mut rng))
        };
        stats.restarts += 1;
        let Some(mut rank) = start else { continue };
        descend(space, &mut rank, &mut stats, stop);
        stats.leaves += 1;
        let t = latency::objective(&space.placement(&rank), space.problem)?;
        match &best {
            Some((b, _)) if t >= *b => {
                if t == *b {
                    stats.ties += 1;
                }
            }
            _ => best = Some((t, rank)),
        }
    }
    match best {
        Some((objective, rank)) => Ok(Solution {
            placement: space.placement(&rank),
            objective,
            proven_optimal: false,
            stats,
        }),
        None if stopped => Err(SolveError::BudgetExceeded { incumbent: None }),
        None => Err(SolveError::NoPlacementFound),
    }
}
