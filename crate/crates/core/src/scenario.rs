//! Seeded random instances: uniform positions in a square, device classes
//! drawn from a mix, whole-layout resampling until the graph is connected.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::fixtures;
use crate::latency::EvalConventions;
use crate::model::{CnnSpec, DeviceClass, PlacementProblem};
use crate::topology::{Role, Topology, Vertex};

/// Layouts drawn before giving up on connectivity.
pub const MAX_ATTEMPTS: u32 = 10_000;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ScenarioError {
    #[error("no connected layout after {attempts} attempts; the parameters are too sparse")]
    GenerationExhausted { attempts: u32 },
    #[error("unknown transmission profile {0:?} (expected wifi4 or halow)")]
    UnknownProfile(String),
    #[error("invalid device mix: {0}")]
    InvalidMix(String),
    #[error("invalid scenario parameters: {0}")]
    InvalidParams(String),
}

/// SplitMix64 finalizer.
pub fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Seed of sub-stream `stream` under `master`.
pub fn derive_seed(master: u64, stream: u64) -> u64 {
    splitmix64(splitmix64(master) ^ stream)
}

/// Data rate and range of a radio technology.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TransmissionProfile {
    pub rate_bits_per_s: f64,
    pub range_m: f64,
}

pub fn paper_transmission_profile(name: &str) -> Result<TransmissionProfile, ScenarioError> {
    match name {
        "wifi4" => Ok(TransmissionProfile {
            rate_bits_per_s: 72.2e6,
            range_m: 7.5,
        }),
        "halow" => Ok(TransmissionProfile {
            rate_bits_per_s: 7.2e6,
            range_m: 7.5,
        }),
        other => Err(ScenarioError::UnknownProfile(other.into())),
    }
}

/// Device classes with their draw probabilities.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeviceMix {
    entries: Vec<(DeviceClass, f64)>,
}

impl DeviceMix {
    pub fn new(entries: Vec<(DeviceClass, f64)>) -> Result<Self, ScenarioError> {
        if entries.is_empty() {
            return Err(ScenarioError::InvalidMix("no device classes".into()));
        }
        if entries.iter().any(|(_, p)| !(*p >= 0.0 && p.is_finite())) {
            return Err(ScenarioError::InvalidMix(
                "probabilities must be finite and nonnegative".into(),
            ));
        }
        let total: f64 = entries.iter().map(|e| e.1).sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(ScenarioError::InvalidMix(format!(
                "probabilities sum to {total}, not 1"
            )));
        }
        Ok(Self { entries })
    }

    /// STM32H7 / Raspberry Pi split, in percent of STM32H7 units.
    pub fn stm_raspberry(stm_percent: u32) -> Result<Self, ScenarioError> {
        if stm_percent > 100 {
            return Err(ScenarioError::InvalidMix(format!("{stm_percent}% is over 100%")));
        }
        let p = f64::from(stm_percent) / 100.0;
        Self::new(alloc::vec![
            (fixtures::stm32h7(), p),
            (fixtures::raspberry_3bp(), 1.0 - p)
        ])
    }

    pub fn entries(&self) -> &[(DeviceClass, f64)] {
        &self.entries
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> &DeviceClass {
        let x: f64 = rng.gen();
        let mut acc = 0.0;
        for (class, p) in &self.entries {
            acc += p;
            if x < acc {
                return class;
            }
        }
        // Rounding left a sliver above the last cumulative value.
        &self
            .entries
            .iter()
            .rev()
            .find(|e| e.1 > 0.0)
            .unwrap_or(&self.entries[0])
            .0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioParams {
    pub n_units: usize,
    /// Side of the square deployment area.
    pub area_side: f64,
    pub range: f64,
    pub device_mix: DeviceMix,
    pub n_sources: usize,
    pub rate_bits_per_s: f64,
}

impl ScenarioParams {
    /// Thirty units in a 30 m square with the given radio profile.
    pub fn standard(device_mix: DeviceMix, profile: TransmissionProfile, n_sources: usize) -> Self {
        Self {
            n_units: 30,
            area_side: 30.0,
            range: profile.range_m,
            device_mix,
            n_sources,
            rate_bits_per_s: profile.rate_bits_per_s,
        }
    }

    fn check(&self, cnns: usize) -> Result<(), ScenarioError> {
        let bad = |m: &str| Err(ScenarioError::InvalidParams(m.into()));
        if self.n_units == 0 {
            return bad("n_units must be positive");
        }
        if !(self.area_side > 0.0 && self.area_side.is_finite()) {
            return bad("area_side must be positive");
        }
        if !(self.range > 0.0 && self.range.is_finite()) {
            return bad("range must be positive");
        }
        if !(self.rate_bits_per_s > 0.0 && self.rate_bits_per_s.is_finite()) {
            return bad("rate must be positive");
        }
        if self.n_sources != cnns {
            return Err(ScenarioError::InvalidParams(format!(
                "{} sources for {} CNNs",
                self.n_sources, cnns
            )));
        }
        Ok(())
    }
}

/// Draws a connected instance. Units are `n01`, `n02`, ..., then sources
/// `s1`, `s2`, ..., then the sink `f`. Sharing is empty and conventions are
/// the defaults; callers set both.
pub fn generate(
    params: &ScenarioParams,
    cnns: &[CnnSpec],
    layers_per_unit_cap: u32,
    seed: u64,
) -> Result<PlacementProblem, ScenarioError> {
    params.check(cnns.len())?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let side = params.area_side;
    let width = digits(params.n_units).max(2);
    for _ in 0..MAX_ATTEMPTS {
        let mut vertices = Vec::with_capacity(params.n_units + params.n_sources + 1);
        let mut classes = BTreeMap::new();
        for i in 0..params.n_units {
            let (x, y) = (rng.gen_range(0.0..=side), rng.gen_range(0.0..=side));
            vertices.push(Vertex::new(format!("n{:0width$}", i + 1), Role::Unit, x, y));
            classes.insert(i, params.device_mix.sample(&mut rng).clone());
        }
        for k in 0..params.n_sources {
            let (x, y) = (rng.gen_range(0.0..=side), rng.gen_range(0.0..=side));
            vertices.push(Vertex::new(format!("s{}", k + 1), Role::Source, x, y));
        }
        let (x, y) = (rng.gen_range(0.0..=side), rng.gen_range(0.0..=side));
        vertices.push(Vertex::new("f", Role::Sink, x, y));
        let topology = Topology::from_geometry(vertices, params.range);
        if topology.assert_connected().is_ok() {
            return Ok(PlacementProblem {
                cnns: cnns.to_vec(),
                sources: topology.sources(),
                topology,
                unit_classes: classes,
                layers_per_unit_cap,
                data_rate_bits_per_s: params.rate_bits_per_s,
                sharing: Vec::new(),
                conventions: EvalConventions::default(),
            });
        }
    }
    Err(ScenarioError::GenerationExhausted { attempts: MAX_ATTEMPTS })
}

/// Bounds for [`random_small_instance`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SmallInstanceParams {
    pub max_units: usize,
    pub max_layers: usize,
    pub max_cnns: usize,
    /// Cap on `units ^ physical layers`, the size of the raw search space.
    pub max_space: u64,
    pub sharing: bool,
    pub gates: bool,
}

impl Default for SmallInstanceParams {
    fn default() -> Self {
        Self {
            max_units: 6,
            max_layers: 4,
            max_cnns: 2,
            max_space: 100_000,
            sharing: true,
            gates: true,
        }
    }
}

fn space_size(units: usize, layers: usize) -> u64 {
    (units as u64).saturating_pow(layers as u32)
}

/// A small random instance on an explicit random connected graph, meant for
/// cross-checking solvers. Footprints, capacities, gate profiles, payloads,
/// data rate and conventions are all drawn from `seed`; with two CNNs and
/// `sharing` set, one layer pair is shared half of the time.
pub fn random_small_instance(params: &SmallInstanceParams, seed: u64) -> PlacementProblem {
    use crate::latency::{PayloadUnit, ProcessingWeight};
    use crate::model::{GateProfile, LayerRef, LayerSpec, SharingGroup};

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut n_units = rng.gen_range(1..=params.max_units.max(1));
    let n_cnns = rng.gen_range(1..=params.max_cnns.max(1));
    let mut depths: Vec<usize> = (0..n_cnns)
        .map(|_| rng.gen_range(1..=params.max_layers.max(1)))
        .collect();
    let share = params.sharing && n_cnns >= 2 && rng.gen_bool(0.5);
    let physical = |d: &[usize]| d.iter().sum::<usize>() - usize::from(share);
    while space_size(n_units, physical(&depths)) > params.max_space {
        let deepest = (0..n_cnns).max_by_key(|&u| depths[u]).unwrap_or(0);
        if depths[deepest] > 1 && (n_units <= 2 || rng.gen_bool(0.5)) {
            depths[deepest] -= 1;
        } else if n_units > 1 {
            n_units -= 1;
        } else {
            break;
        }
    }

    let mut cnns = Vec::with_capacity(n_cnns);
    for (u, &m) in depths.iter().enumerate() {
        let layers: Vec<LayerSpec> = (0..m)
            .map(|j| {
                let payload = if rng.gen_bool(0.15) {
                    0.0
                } else {
                    rng.gen_range(0.1..5.0)
                };
                LayerSpec::new(
                    format!("l{j}"),
                    rng.gen_range(1.0..10.0),
                    rng.gen_range(0.0..50.0),
                    payload,
                )
            })
            .collect();
        let gate = if params.gates && m > 1 && rng.gen_bool(0.5) {
            let mut reach = Vec::with_capacity(m);
            let mut p = 1.0;
            for j in 0..m {
                if j > 0 && rng.gen_bool(0.5) {
                    p *= rng.gen_range(0.0..1.0);
                }
                reach.push(p);
            }
            GateProfile::from_reach(reach).expect("non-increasing by construction")
        } else {
            GateProfile::plain(m)
        };
        cnns.push(CnnSpec {
            name: format!("cnn{u}"),
            input_kb: rng.gen_range(0.0..8.0),
            final_out_kb: rng.gen_range(0.0..1.0),
            layers,
            gate,
        });
    }
    let mut sharing = Vec::new();
    if share {
        let a = LayerRef::new(0, rng.gen_range(0..depths[0]));
        let b = LayerRef::new(1, rng.gen_range(0..depths[1]));
        let src = cnns[0].layers[a.layer].clone();
        let dst = &mut cnns[1].layers[b.layer];
        dst.memory_kb = src.memory_kb;
        dst.compute_mmul = src.compute_mmul;
        sharing.push(SharingGroup::new(alloc::vec![a, b]));
    }

    // Random spanning tree plus a few extra edges over units, sources, sink.
    let n = n_units + n_cnns + 1;
    let mut vertices = Vec::with_capacity(n);
    for i in 0..n {
        let (id, role) = if i < n_units {
            (format!("n{:02}", i + 1), Role::Unit)
        } else if i < n_units + n_cnns {
            (format!("s{}", i - n_units + 1), Role::Source)
        } else {
            (String::from("f"), Role::Sink)
        };
        vertices.push(Vertex::new(
            id,
            role,
            rng.gen_range(0.0..10.0),
            rng.gen_range(0.0..10.0),
        ));
    }
    let mut edges = Vec::new();
    for v in 1..n {
        edges.push((rng.gen_range(0..v), v));
    }
    for _ in 0..rng.gen_range(0..=n) {
        let (a, b) = (rng.gen_range(0..n), rng.gen_range(0..n));
        edges.push((a, b));
    }
    let topology = Topology::from_edges(vertices, &edges).expect("edges in range");

    let mut unit_classes = BTreeMap::new();
    for i in 0..n_units {
        unit_classes.insert(
            i,
            DeviceClass {
                name: format!("class{i}"),
                mem_cap_kb: rng.gen_range(8.0..30.0),
                compute_cap_mmul: if rng.gen_bool(0.3) {
                    Some(rng.gen_range(30.0..120.0))
                } else {
                    None
                },
                speed_mmul_per_s: rng.gen_range(10.0..100.0),
            },
        );
    }
    let total: usize = physical(&depths);
    let min_cap = total.div_ceil(n_units) as u32;
    let layers_per_unit_cap = rng.gen_range(1..=3u32).max(min_cap);
    let conventions = EvalConventions {
        processing_weight: if rng.gen_bool(0.5) {
            ProcessingWeight::AsWritten
        } else {
            ProcessingWeight::NextLayerCompat
        },
        include_processing: rng.gen_bool(0.75),
        payload_unit: if rng.gen_bool(0.5) {
            PayloadUnit::BitsExact
        } else {
            PayloadUnit::BytesAsBitsCompat
        },
    };
    PlacementProblem {
        cnns,
        sources: topology.sources(),
        topology,
        unit_classes,
        layers_per_unit_cap,
        data_rate_bits_per_s: rng.gen_range(1e4..1e6),
        sharing,
        conventions,
    }
}

fn digits(mut n: usize) -> usize {
    let mut d = 1;
    while n >= 10 {
        n /= 10;
        d += 1;
    }
    d
}
