//! Built-in reference networks, device classes and the small example topology.
//!
//! Pooling sublayers are fused into the preceding convolution: compute adds
//! up, and the output size is the post-pooling one. KB = 1000 bytes.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use thiserror::Error;

use crate::latency::{EvalConventions, Placement};
use crate::model::{CnnSpec, DeviceClass, GateProfile, LayerSpec, PlacementProblem};
use crate::topology::{Role, Topology, Vertex};

pub const FIXTURE_NAMES: [&str; 8] = [
    "cnn5",
    "gc6",
    "alexnet",
    "gc-alexnet",
    "stm32h7",
    "raspberry-3bp",
    "odroid-c2",
    "fig1b",
];

/// Exit probability of the gate-classification layer in both gate networks.
pub const GATE_EXIT_PROB: f64 = 0.99;

/// Probability of passing the gate undecided, `1 - GATE_EXIT_PROB` written
/// out so the reach profile holds the exact decimal.
pub const GATE_PASS_PROB: f64 = 0.01;

fn gated(layers: usize, gate: usize) -> GateProfile {
    let reach = (0..layers)
        .map(|j| if j <= gate { 1.0 } else { GATE_PASS_PROB })
        .collect();
    GateProfile::from_reach(reach).expect("valid gate")
}

/// Wi-Fi 4 data rate in bits per second.
pub const WIFI4_RATE: f64 = 72.2e6;

#[derive(Debug, Clone, PartialEq)]
pub enum Fixture {
    Cnn(CnnSpec),
    Device(DeviceClass),
    Topology(Topology),
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("unknown fixture {0:?}")]
pub struct UnknownFixture(pub String);

pub fn builtin_fixture(name: &str) -> Result<Fixture, UnknownFixture> {
    Ok(match name {
        "cnn5" => Fixture::Cnn(cnn5()),
        "gc6" => Fixture::Cnn(gc6()),
        "alexnet" => Fixture::Cnn(alexnet()),
        "gc-alexnet" => Fixture::Cnn(gc_alexnet()),
        "stm32h7" => Fixture::Device(stm32h7()),
        "raspberry-3bp" => Fixture::Device(raspberry_3bp()),
        "odroid-c2" => Fixture::Device(odroid_c2()),
        "fig1b" => Fixture::Topology(fig1b()),
        other => return Err(UnknownFixture(other.into())),
    })
}

pub fn builtin_cnn(name: &str) -> Result<CnnSpec, UnknownFixture> {
    match builtin_fixture(name)? {
        Fixture::Cnn(c) => Ok(c),
        _ => Err(UnknownFixture(name.into())),
    }
}

pub fn builtin_device(name: &str) -> Result<DeviceClass, UnknownFixture> {
    match builtin_fixture(name)? {
        Fixture::Device(d) => Ok(d),
        _ => Err(UnknownFixture(name.into())),
    }
}

fn cnn5_layers() -> Vec<LayerSpec> {
    vec![
        LayerSpec::new("5x5 conv, 64 + 2x2 pool", 19.20, 3.76 + 0.05, 50.18),
        LayerSpec::new("5x5 conv, 64 + 2x2 pool", 409.60, 20.07 + 0.01, 12.54),
        LayerSpec::new("fc 384", 4816.90, 1.20, 1.54),
        LayerSpec::new("fc 192", 294.91, 0.07, 0.77),
        LayerSpec::new("fc 10", 7.68, 0.002, 0.04),
    ]
}

/// Small 28x28x3 image classifier: two conv+pool stages and three dense layers.
pub fn cnn5() -> CnnSpec {
    CnnSpec::plain("cnn5", 9.41, cnn5_layers())
}

/// `cnn5` with a gate-classification exit after the first layer.
pub fn gc6() -> CnnSpec {
    let mut layers = cnn5_layers();
    layers.insert(1, LayerSpec::new("gc1 (fc 384,192,10)", 19570.18, 4.89, 50.18));
    let gate = gated(layers.len(), 1);
    CnnSpec {
        name: "gc6".into(),
        input_kb: 9.41,
        layers,
        gate,
        final_out_kb: 0.04,
    }
}

fn alexnet_layers() -> Vec<LayerSpec> {
    vec![
        LayerSpec::new("11x11 conv, 96, /4 + 3x3 pool", 139.78, 105.42 + 0.31, 279.94),
        LayerSpec::new("5x5 conv, 256 + 3x3 pool", 1229.82, 223.95 + 0.39, 173.06),
        LayerSpec::new("3x3 conv, 384", 3540.48, 149.52, 259.58),
        LayerSpec::new("3x3 conv, 384", 2655.74, 112.14, 259.58),
        LayerSpec::new("3x3 conv, 256 + 3x3 pool", 1770.50, 74.76 + 0.08, 36.86),
        LayerSpec::new("fc 4096", 151011.39, 37.75, 16.38),
        LayerSpec::new("fc 4096, 2", 67158.02, 16.78, 16.38),
    ]
}

/// Two-class AlexNet variant.
pub fn alexnet() -> CnnSpec {
    let mut cnn = CnnSpec::plain("alexnet", 618.35, alexnet_layers());
    cnn.final_out_kb = 16.38;
    cnn
}

/// AlexNet with a gate-classification exit after the second stage.
pub fn gc_alexnet() -> CnnSpec {
    let mut layers = alexnet_layers();
    layers.insert(2, LayerSpec::new("gc1 (fc 128,64,2)", 22185.22, 5.55, 173.06));
    let gate = gated(layers.len(), 2);
    CnnSpec {
        name: "gc-alexnet".into(),
        input_kb: 618.35,
        layers,
        gate,
        final_out_kb: 16.38,
    }
}

pub fn stm32h7() -> DeviceClass {
    DeviceClass {
        name: "stm32h7".into(),
        mem_cap_kb: 512.0,
        compute_cap_mmul: None,
        speed_mmul_per_s: 40.0,
    }
}

pub fn raspberry_3bp() -> DeviceClass {
    DeviceClass {
        name: "raspberry-3bp".into(),
        mem_cap_kb: 512_000.0,
        compute_cap_mmul: None,
        speed_mmul_per_s: 560.0,
    }
}

pub fn odroid_c2() -> DeviceClass {
    DeviceClass {
        name: "odroid-c2".into(),
        mem_cap_kb: 1_000_000.0,
        compute_cap_mmul: None,
        speed_mmul_per_s: 600.0,
    }
}

/// Range of the example topology, in its own abstract length units.
pub const FIG1B_RANGE: f64 = 2.5;

const FIG1B_UNITS: [(&str, f64, f64, bool); 11] = [
    ("n01", 3.0, -2.0, false),
    ("n02", 5.0, -3.0, false),
    ("n03", 3.5, 1.0, true),
    ("n04", 1.0, -2.75, true),
    ("n05", -1.0, -1.5, false),
    ("n06", 2.0, -0.5, false),
    ("n07", -1.0, 0.75, false),
    ("n08", 1.25, 1.55, false),
    ("n09", -2.5, -1.0, false),
    ("n10", -1.3, -3.0, true),
    ("n11", 4.25, -1.0, true),
];

/// Eleven-unit example network with `sources` source vertices and a sink, all
/// at the origin. A single source is named `s`, several are `s1`, `s2`, ...
/// Units come first (indices 0..11), then sources, then the sink.
pub fn fig1b_with_sources(sources: usize) -> Topology {
    let mut vertices: Vec<Vertex> = FIG1B_UNITS
        .iter()
        .map(|&(id, x, y, _)| Vertex::new(id, Role::Unit, x, y))
        .collect();
    for k in 0..sources {
        let id = if sources == 1 {
            String::from("s")
        } else {
            format!("s{}", k + 1)
        };
        vertices.push(Vertex::new(id, Role::Source, 0.0, 0.0));
    }
    vertices.push(Vertex::new("f", Role::Sink, 0.0, 0.0));
    Topology::from_geometry(vertices, FIG1B_RANGE)
}

pub fn fig1b() -> Topology {
    fig1b_with_sources(1)
}

/// Device classes of the example network: four Odroid-C2 units, the rest STM32H7.
pub fn fig1b_unit_classes(topology: &Topology) -> BTreeMap<usize, DeviceClass> {
    FIG1B_UNITS
        .iter()
        .map(|&(id, _, _, odroid)| {
            let v = topology.index_of(id).expect("fixture unit");
            (v, if odroid { odroid_c2() } else { stm32h7() })
        })
        .collect()
}

/// The example network with one source per CNN, Wi-Fi 4 rate and default conventions.
pub fn fig1b_problem(cnns: Vec<CnnSpec>, layers_per_unit_cap: u32) -> PlacementProblem {
    let topology = fig1b_with_sources(cnns.len());
    let unit_classes = fig1b_unit_classes(&topology);
    let sources = topology.sources();
    PlacementProblem {
        cnns,
        sources,
        topology,
        unit_classes,
        layers_per_unit_cap,
        data_rate_bits_per_s: WIFI4_RATE,
        sharing: Vec::new(),
        conventions: EvalConventions::default(),
    }
}

/// One unit of `class` one hop from every source and from the sink.
pub fn single_unit_problem(cnns: Vec<CnnSpec>, class: DeviceClass, layers_per_unit_cap: u32) -> PlacementProblem {
    let mut vertices = vec![Vertex::new("u0", Role::Unit, 0.0, 0.0)];
    for k in 0..cnns.len() {
        vertices.push(Vertex::new(format!("s{}", k + 1), Role::Source, 0.0, 1.0));
    }
    vertices.push(Vertex::new("f", Role::Sink, 1.0, 0.0));
    // Sources and sink only reach the unit.
    let n = vertices.len();
    let edges: Vec<(usize, usize)> = (1..n).map(|v| (0, v)).collect();
    let topology = Topology::from_edges(vertices, &edges).expect("valid edges");
    let mut unit_classes = BTreeMap::new();
    unit_classes.insert(0, class);
    PlacementProblem {
        sources: topology.sources(),
        cnns,
        topology,
        unit_classes,
        layers_per_unit_cap,
        data_rate_bits_per_s: WIFI4_RATE,
        sharing: Vec::new(),
        conventions: EvalConventions::default(),
    }
}

/// Units of the reference five-layer placement on the example network, in layer order.
pub const FIG1C_UNITS: [&str; 5] = ["n05", "n10", "n04", "n01", "n06"];

/// The reference five-layer placement for a `fig1b_problem` holding `cnn5`.
pub fn fig1c_placement(problem: &PlacementProblem) -> Placement {
    let units = FIG1C_UNITS
        .iter()
        .map(|id| problem.topology.index_of(id).expect("fixture unit"))
        .collect();
    Placement::new(vec![units])
}
