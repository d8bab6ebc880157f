//! Integer linear program equivalent to the quadratic placement objective.
//!
//! Each product of consecutive-layer indicators `a_{u,i,j} * a_{u,k,j+1}` is
//! replaced by a binary `w` with the rows `w <= a`, `w <= b`, `w >= a + b - 1`.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::latency::{hop_time, processing_weight, LatencyError, Placement};
use crate::model::{PlacementProblem, ValidationError};

/// How sharing groups enter the model.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SharingMode {
    /// One variable per group and unit, reused by every member.
    #[default]
    Substitute,
    /// Separate variables per member, tied together by equality rows.
    EqualityRows,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LinearizeOptions {
    pub sharing_mode: SharingMode,
    /// Skip product variables whose objective coefficient is zero.
    pub prune_zero_products: bool,
}

impl Default for LinearizeOptions {
    fn default() -> Self {
        Self {
            sharing_mode: SharingMode::Substitute,
            prune_zero_products: true,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum VarKind {
    /// Layer `layer` of CNN `cnn` runs on vertex `unit`.
    Assign { cnn: usize, layer: usize, unit: usize },
    /// Layer `layer` runs on `from` and layer `layer + 1` on `to`.
    Product {
        cnn: usize,
        layer: usize,
        from: usize,
        to: usize,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Variable {
    pub name: String,
    pub kind: VarKind,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Relation {
    Le,
    Eq,
    Ge,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RowKind {
    Assignment,
    LayerCap,
    Memory,
    Compute,
    Link,
    Sharing,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Row {
    pub name: String,
    pub kind: RowKind,
    pub terms: Vec<(usize, f64)>,
    pub relation: Relation,
    pub rhs: f64,
}

impl Row {
    pub fn lhs(&self, x: &[bool]) -> f64 {
        self.terms.iter().filter(|(v, _)| x[*v]).map(|(_, c)| c).sum()
    }

    pub fn satisfied(&self, x: &[bool]) -> bool {
        let lhs = self.lhs(x);
        match self.relation {
            Relation::Le => lhs <= self.rhs,
            Relation::Eq => lhs == self.rhs,
            Relation::Ge => lhs >= self.rhs,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum IlpError {
    #[error(transparent)]
    Validation(#[from] ValidationError),
    #[error(transparent)]
    Latency(#[from] LatencyError),
    #[error("assignment has {got} value(s), model has {expected} variable(s)")]
    IncompleteAssignment { expected: usize, got: usize },
}

/// Minimize `objective . x` subject to `rows`, `x` binary.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IlpModel {
    pub variables: Vec<Variable>,
    pub objective: Vec<f64>,
    pub rows: Vec<Row>,
    /// `(cnn, layer, unit)` to assignment variable.
    assign: BTreeMap<(usize, usize, usize), usize>,
    /// `(cnn, layer, from, to)` to product variable.
    products: BTreeMap<(usize, usize, usize, usize), usize>,
}

impl IlpModel {
    pub fn num_vars(&self) -> usize {
        self.variables.len()
    }

    pub fn assign_var(&self, cnn: usize, layer: usize, unit: usize) -> Option<usize> {
        self.assign.get(&(cnn, layer, unit)).copied()
    }

    pub fn product_var(&self, cnn: usize, layer: usize, from: usize, to: usize) -> Option<usize> {
        self.products.get(&(cnn, layer, from, to)).copied()
    }

    pub fn count_assign_vars(&self) -> usize {
        self.variables
            .iter()
            .filter(|v| matches!(v.kind, VarKind::Assign { .. }))
            .count()
    }

    pub fn count_product_vars(&self) -> usize {
        self.products.len()
    }

    pub fn rows_of(&self, kind: RowKind) -> impl Iterator<Item = &Row> {
        self.rows.iter().filter(move |r| r.kind == kind)
    }

    /// Linear objective value of a full binary assignment.
    pub fn objective_of_assignment(&self, x: &[bool]) -> Result<f64, IlpError> {
        if x.len() != self.variables.len() {
            return Err(IlpError::IncompleteAssignment {
                expected: self.variables.len(),
                got: x.len(),
            });
        }
        Ok(self.objective.iter().zip(x).filter(|(_, &on)| on).map(|(c, _)| c).sum())
    }

    /// Indices of rows the assignment breaks.
    pub fn violated_rows(&self, x: &[bool]) -> Result<Vec<usize>, IlpError> {
        if x.len() != self.variables.len() {
            return Err(IlpError::IncompleteAssignment {
                expected: self.variables.len(),
                got: x.len(),
            });
        }
        Ok((0..self.rows.len()).filter(|&r| !self.rows[r].satisfied(x)).collect())
    }

    /// Indicator vector of a placement, with products set to the indicator products.
    pub fn assignment_from_placement(&self, placement: &Placement) -> Vec<bool> {
        let mut x = vec![false; self.variables.len()];
        for (var, v) in self.variables.iter().enumerate() {
            let on_unit = |cnn: usize, layer: usize, unit: usize| {
                placement.assign.get(cnn).and_then(|l| l.get(layer)) == Some(&unit)
            };
            x[var] = match v.kind {
                VarKind::Assign { cnn, layer, unit } => on_unit(cnn, layer, unit),
                VarKind::Product { cnn, layer, from, to } => on_unit(cnn, layer, from) && on_unit(cnn, layer + 1, to),
            };
        }
        x
    }

    /// Reads a placement back from the assignment variables; `None` unless
    /// every layer has exactly one unit.
    pub fn placement_from_assignment(&self, x: &[bool], problem: &PlacementProblem) -> Option<Placement> {
        let mut assign: Vec<Vec<Option<usize>>> = problem.cnns.iter().map(|c| vec![None; c.depth()]).collect();
        for (&(cnn, layer, unit), &var) in &self.assign {
            if *x.get(var)? {
                let slot = &mut assign[cnn][layer];
                if slot.is_some() {
                    return None;
                }
                *slot = Some(unit);
            }
        }
        let assign = assign
            .into_iter()
            .map(|l| l.into_iter().collect::<Option<Vec<_>>>())
            .collect::<Option<Vec<_>>>()?;
        Some(Placement::new(assign))
    }
}

pub fn objective_of_assignment(model: &IlpModel, x: &[bool]) -> Result<f64, IlpError> {
    model.objective_of_assignment(x)
}

/// Builds the linear model of a validated problem.
pub fn linearize(problem: &PlacementProblem, options: LinearizeOptions) -> Result<IlpModel, IlpError> {
    problem.validate()?;
    let units = problem.units();
    let phys = problem.physical_layers();
    let sink = problem.sink().expect("validated problem has a sink");
    let id = |v: usize| problem.topology.vertex(v).id.as_str();

    let mut variables = Vec::new();
    let mut assign = BTreeMap::new();
    let mut rows = Vec::new();

    // Assignment variables. In substitution mode members of a group reuse the
    // canonical member's variables.
    for (u, cnn) in problem.cnns.iter().enumerate() {
        for j in 0..cnn.depth() {
            let p = phys.slot(u, j);
            let canonical = phys.canonical(p);
            let reuse = options.sharing_mode == SharingMode::Substitute && (canonical.cnn, canonical.layer) != (u, j);
            for &i in &units {
                let var = if reuse {
                    assign[&(canonical.cnn, canonical.layer, i)]
                } else {
                    variables.push(Variable {
                        name: format!("a_{u}_{j}_{}", id(i)),
                        kind: VarKind::Assign {
                            cnn: u,
                            layer: j,
                            unit: i,
                        },
                    });
                    variables.len() - 1
                };
                assign.insert((u, j, i), var);
            }
        }
    }
    let mut objective = vec![0.0; variables.len()];

    // Source, processing and sink terms are linear in the assignment.
    for (u, cnn) in problem.cnns.iter().enumerate() {
        for j in 0..cnn.depth() {
            for &i in &units {
                let mut c = 0.0;
                if j == 0 {
                    c += cnn.gate.reach_prob[0] * hop_time(problem, cnn.input_kb, problem.sources[u], i)?;
                }
                let w = processing_weight(cnn, j, &problem.conventions);
                let speed = problem.class_of(i).expect("validated unit class").speed_mmul_per_s;
                c += w * cnn.layers[j].compute_mmul / speed;
                c += cnn.gate.exit_prob[j] * hop_time(problem, cnn.final_out_kb, i, sink)?;
                objective[assign[&(u, j, i)]] += c;
            }
        }
    }

    // Products for consecutive layers, over all ordered unit pairs.
    let mut products = BTreeMap::new();
    for (u, cnn) in problem.cnns.iter().enumerate() {
        for j in 0..cnn.depth().saturating_sub(1) {
            for &i in &units {
                for &k in &units {
                    let c = cnn.gate.reach_prob[j + 1] * hop_time(problem, cnn.layers[j].out_repr_kb, i, k)?;
                    if options.prune_zero_products && c == 0.0 {
                        continue;
                    }
                    let w = variables.len();
                    variables.push(Variable {
                        name: format!("w_{u}_{j}_{}_{}", id(i), id(k)),
                        kind: VarKind::Product {
                            cnn: u,
                            layer: j,
                            from: i,
                            to: k,
                        },
                    });
                    objective.push(c);
                    products.insert((u, j, i, k), w);
                    let a = assign[&(u, j, i)];
                    let b = assign[&(u, j + 1, k)];
                    let tag = format!("{u}_{j}_{}_{}", id(i), id(k));
                    rows.push(Row {
                        name: format!("link_a_{tag}"),
                        kind: RowKind::Link,
                        terms: vec![(w, 1.0), (a, -1.0)],
                        relation: Relation::Le,
                        rhs: 0.0,
                    });
                    rows.push(Row {
                        name: format!("link_b_{tag}"),
                        kind: RowKind::Link,
                        terms: vec![(w, 1.0), (b, -1.0)],
                        relation: Relation::Le,
                        rhs: 0.0,
                    });
                    rows.push(Row {
                        name: format!("link_ab_{tag}"),
                        kind: RowKind::Link,
                        terms: vec![(w, 1.0), (a, -1.0), (b, -1.0)],
                        relation: Relation::Ge,
                        rhs: -1.0,
                    });
                }
            }
        }
    }

    // Each layer on exactly one unit. Substituted members share one row.
    for (u, cnn) in problem.cnns.iter().enumerate() {
        for j in 0..cnn.depth() {
            let c = phys.canonical(phys.slot(u, j));
            if options.sharing_mode == SharingMode::Substitute && (c.cnn, c.layer) != (u, j) {
                continue;
            }
            rows.push(Row {
                name: format!("assign_{u}_{j}"),
                kind: RowKind::Assignment,
                terms: units.iter().map(|&i| (assign[&(u, j, i)], 1.0)).collect(),
                relation: Relation::Eq,
                rhs: 1.0,
            });
        }
    }

    if options.sharing_mode == SharingMode::EqualityRows {
        for p in 0..phys.len() {
            let members = phys.members(p);
            let c = members[0];
            for m in &members[1..] {
                for &i in &units {
                    rows.push(Row {
                        name: format!("share_{}_{}_{}_{}_{}", c.cnn, c.layer, m.cnn, m.layer, id(i)),
                        kind: RowKind::Sharing,
                        terms: vec![
                            (assign[&(c.cnn, c.layer, i)], 1.0),
                            (assign[&(m.cnn, m.layer, i)], -1.0),
                        ],
                        relation: Relation::Eq,
                        rhs: 0.0,
                    });
                }
            }
        }
    }

    // Capacity rows count each physical layer once, through its canonical member.
    for &i in &units {
        let class = problem.class_of(i).expect("validated unit class");
        let canon: Vec<_> = (0..phys.len()).map(|p| phys.canonical(p)).collect();
        let var = |c: &crate::model::LayerRef| assign[&(c.cnn, c.layer, i)];
        rows.push(Row {
            name: format!("cap_{}", id(i)),
            kind: RowKind::LayerCap,
            terms: canon.iter().map(|c| (var(c), 1.0)).collect(),
            relation: Relation::Le,
            rhs: f64::from(problem.layers_per_unit_cap),
        });
        rows.push(Row {
            name: format!("mem_{}", id(i)),
            kind: RowKind::Memory,
            terms: canon
                .iter()
                .map(|c| (var(c), problem.cnns[c.cnn].layers[c.layer].memory_kb))
                .collect(),
            relation: Relation::Le,
            rhs: class.mem_cap_kb,
        });
        if let Some(cap) = class.compute_cap_mmul {
            rows.push(Row {
                name: format!("comp_{}", id(i)),
                kind: RowKind::Compute,
                terms: canon
                    .iter()
                    .map(|c| (var(c), problem.cnns[c.cnn].layers[c.layer].compute_mmul))
                    .collect(),
                relation: Relation::Le,
                rhs: cap,
            });
        }
    }

    Ok(IlpModel {
        variables,
        objective,
        rows,
        assign,
        products,
    })
}
