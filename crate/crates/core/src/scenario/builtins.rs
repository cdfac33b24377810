//! Built-in experiment suite at desk-scale resolutions.
//!
//! Resolutions are deliberately reduced from production scale so the whole
//! suite runs in seconds to minutes; mesh sizes and material parameters are
//! plain config knobs.

use std::f64::consts::PI;
use std::path::PathBuf;

use nalgebra::Vector3;

use super::{
    MeshSpec, Motion, OutputPlan, RunMode, Scenario, Script, Selector, VertexSet, ZoneSpec,
};
use crate::energy::{MaterialModel, MaterialParams};
use crate::solver::SolverConfig;

const EVERYTHING: f64 = 1e9;

fn face_box(axis: usize, at: f64) -> Selector {
    let mut min = [-EVERYTHING; 3];
    let mut max = [EVERYTHING; 3];
    min[axis] = at - 1e-9;
    max[axis] = at + 1e-9;
    Selector::Box { min, max }
}

fn no_gravity() -> SolverConfig {
    SolverConfig {
        gravity: Vector3::zeros(),
        ..SolverConfig::default()
    }
}

fn base(name: &str, mesh: MeshSpec) -> Scenario {
    Scenario {
        name: name.to_string(),
        mesh,
        material: MaterialParams::default(),
        epidermis: None,
        zones: ZoneSpec::Global,
        mode: RunMode::Static,
        frames: 1,
        duration: 1.0,
        solver: no_gravity(),
        sets: Vec::new(),
        fixed: Vec::new(),
        scripts: Vec::new(),
        output: OutputPlan {
            csv: PathBuf::from(format!("{name}.csv")),
            surface_every: 0,
        },
        seed: None,
    }
}

/// Two joined tets; the first is squashed flat by a scripted scale while a
/// global volume zone makes its twin inflate to twice the rest volume.
pub fn two_tet_cnh() -> Scenario {
    let mut s = base("two_tet_cnh", MeshSpec::TwoTet);
    s.material = MaterialParams {
        mu: 1.0,
        lambda: 10.0,
        beta: 1.0,
        epsilon: 0.1,
        model: MaterialModel::DeviatoricNeoHookean,
    };
    s.frames = 20;
    s.sets.push(VertexSet {
        name: "pressed".to_string(),
        selector: Selector::Indices(vec![0, 1, 2, 3]),
    });
    s.scripts.push(Script {
        set: "pressed".to_string(),
        motion: Motion::Scale,
        origin: Vector3::zeros(),
        keys: vec![(0.0, [1.0, 1.0, 1.0]), (1.0, [1.0, 1.0, 0.0])],
    });
    s
}

/// The same squash with the standard neo-Hookean model and no constraint;
/// the flattened tet stops just short of zero thickness because the log
/// volume term is undefined at J = 0.
pub fn two_tet_unh() -> Scenario {
    let mut s = two_tet_cnh();
    s.name = "two_tet_unh".to_string();
    s.output.csv = PathBuf::from("two_tet_unh.csv");
    // nu = 0.495 with mu normalized to 1.
    s.material = MaterialParams {
        mu: 1.0,
        lambda: 99.0,
        beta: 0.0,
        epsilon: 0.1,
        model: MaterialModel::NeoHookean,
    };
    s.zones = ZoneSpec::None;
    s.scripts[0].keys = vec![(0.0, [1.0, 1.0, 1.0]), (1.0, [1.0, 1.0, 0.01])];
    s
}

/// A cube stretched to eight times its rest length.
pub fn stretch() -> Scenario {
    let mut s = base(
        "stretch",
        MeshSpec::Grid {
            nx: 8,
            ny: 8,
            nz: 8,
            lx: 1.0,
            ly: 1.0,
            lz: 1.0,
        },
    );
    s.material = MaterialParams {
        mu: 1.0,
        lambda: 25.0,
        beta: 1.0,
        epsilon: 0.1,
        model: MaterialModel::DeviatoricNeoHookean,
    };
    s.frames = 24;
    s.sets.push(VertexSet {
        name: "left".to_string(),
        selector: face_box(0, 0.0),
    });
    s.sets.push(VertexSet {
        name: "right".to_string(),
        selector: face_box(0, 1.0),
    });
    s.fixed.push("left".to_string());
    s.scripts.push(Script {
        set: "right".to_string(),
        motion: Motion::Translate,
        origin: Vector3::zeros(),
        keys: vec![(0.0, [0.0, 0.0, 0.0]), (1.0, [7.0, 0.0, 0.0])],
    });
    s
}

/// A cube with both x-faces held; one face twists about the x-axis through
/// three quarter turns.
pub fn twist() -> Scenario {
    let mut s = base(
        "twist",
        MeshSpec::Grid {
            nx: 7,
            ny: 7,
            nz: 7,
            lx: 1.0,
            ly: 1.0,
            lz: 1.0,
        },
    );
    s.material = MaterialParams {
        mu: 4.0,
        lambda: 100.0,
        beta: 6.0,
        epsilon: 0.1,
        model: MaterialModel::DeviatoricNeoHookean,
    };
    s.frames = 36;
    s.sets.push(VertexSet {
        name: "near".to_string(),
        selector: face_box(0, 0.0),
    });
    s.sets.push(VertexSet {
        name: "far".to_string(),
        selector: face_box(0, 1.0),
    });
    s.fixed.push("near".to_string());
    s.scripts.push(Script {
        set: "far".to_string(),
        motion: Motion::Rotate,
        origin: Vector3::new(0.0, 0.5, 0.5),
        keys: vec![(0.0, [0.0, 0.0, 0.0]), (1.0, [1.5 * PI, 0.0, 0.0])],
    });
    s
}

/// A soft cube standing under gravity with the bottom face fixed; a single
/// static solve whose pressure field is the point of interest.
pub fn standing_cube() -> Scenario {
    let mut s = base(
        "standing_cube",
        MeshSpec::Grid {
            nx: 6,
            ny: 6,
            nz: 6,
            lx: 1.0,
            ly: 1.0,
            lz: 1.0,
        },
    );
    s.material = MaterialParams {
        mu: 2.0e4,
        lambda: 2.0e5,
        beta: 1.0,
        epsilon: 0.1,
        model: MaterialModel::DeviatoricNeoHookean,
    };
    s.solver = SolverConfig::default();
    s.sets.push(VertexSet {
        name: "bottom".to_string(),
        selector: face_box(2, 0.0),
    });
    s.fixed.push("bottom".to_string());
    s
}

/// A horizontal beam clamped at one end, sagging under gravity. The zone
/// choice (and with it the amount of locking) is the experiment knob.
pub fn cantilever() -> Scenario {
    let mut s = base(
        "cantilever",
        MeshSpec::Grid {
            nx: 16,
            ny: 4,
            nz: 4,
            lx: 1.5,
            ly: 0.3,
            lz: 0.3,
        },
    );
    s.material = MaterialParams {
        mu: 3.0e4,
        lambda: 0.0,
        beta: 0.0,
        epsilon: 0.1,
        model: MaterialModel::DeviatoricNeoHookean,
    };
    s.solver = SolverConfig::default();
    s.sets.push(VertexSet {
        name: "wall".to_string(),
        selector: face_box(0, 0.0),
    });
    s.fixed.push("wall".to_string());
    s
}

/// Implicit-Euler stability run: a suspended cube under gravity at a
/// moderately large time step.
pub fn suspend_dynamic() -> Scenario {
    let mut s = base(
        "suspend_dynamic",
        MeshSpec::Grid {
            nx: 6,
            ny: 6,
            nz: 6,
            lx: 1.0,
            ly: 1.0,
            lz: 1.0,
        },
    );
    s.material = MaterialParams {
        mu: 5.0e3,
        lambda: 5.0e4,
        beta: 1.0,
        epsilon: 0.1,
        model: MaterialModel::DeviatoricNeoHookean,
    };
    s.mode = RunMode::Dynamic;
    s.frames = 200;
    s.solver = SolverConfig {
        dt: 8e-3,
        ..SolverConfig::default()
    };
    s.sets.push(VertexSet {
        name: "bottom".to_string(),
        selector: face_box(2, 0.0),
    });
    s.fixed.push("bottom".to_string());
    s
}

/// All built-in scenarios.
pub fn builtin_scenarios() -> Vec<Scenario> {
    vec![
        two_tet_unh(),
        two_tet_cnh(),
        stretch(),
        twist(),
        standing_cube(),
        cantilever(),
        suspend_dynamic(),
    ]
}

/// Looks up a built-in scenario by name.
pub fn builtin_scenario(name: &str) -> Option<Scenario> {
    builtin_scenarios().into_iter().find(|s| s.name == name)
}
