//! Flat key-value scenario config format with `[section]` headers.
//!
//! The format is line oriented: `key = value` entries under `[scenario]`,
//! `[mesh]`, `[material]`, `[epidermis]`, `[zones]`, `[solver]`, `[bc]`,
//! and `[output]` headers; `#` starts a comment. Boundary conditions use
//! repeatable entries: `set <name> = box ...` / `set <name> = indices ...`,
//! `fix = <name>`, `script = <name> <motion> [origin x y z]`, and
//! `key = t x y z` rows that attach to the most recent `script`.

use std::fmt::Write as _;
use std::path::PathBuf;

use nalgebra::Vector3;

use super::{
    MeshSpec, Motion, OutputPlan, RunMode, Scenario, Script, Selector, VertexSet, ZoneSpec,
};
use crate::energy::{EpidermisParams, MaterialModel, MaterialParams};
use crate::solver::SolverConfig;

type ParseError = (usize, String);

fn err<T>(line: usize, message: impl Into<String>) -> Result<T, ParseError> {
    Err((line, message.into()))
}

fn parse_f64(line: usize, token: &str, what: &str) -> Result<f64, ParseError> {
    token
        .parse::<f64>()
        .map_err(|_| (line, format!("invalid {what}: \"{token}\"")))
}

fn parse_usize(line: usize, token: &str, what: &str) -> Result<usize, ParseError> {
    token
        .parse::<usize>()
        .map_err(|_| (line, format!("invalid {what}: \"{token}\"")))
}

fn parse_vec3(line: usize, tokens: &[&str], what: &str) -> Result<Vector3<f64>, ParseError> {
    if tokens.len() != 3 {
        return err(line, format!("{what} needs three components"));
    }
    Ok(Vector3::new(
        parse_f64(line, tokens[0], what)?,
        parse_f64(line, tokens[1], what)?,
        parse_f64(line, tokens[2], what)?,
    ))
}

/// Parses the scenario config text. Errors carry the 1-based line number.
pub fn parse_scenario(text: &str) -> Result<Scenario, ParseError> {
    let mut scenario = Scenario {
        name: String::new(),
        mesh: MeshSpec::TwoTet,
        material: MaterialParams::default(),
        epidermis: None,
        zones: ZoneSpec::None,
        mode: RunMode::Static,
        frames: 1,
        duration: 1.0,
        solver: SolverConfig::default(),
        sets: Vec::new(),
        fixed: Vec::new(),
        scripts: Vec::new(),
        output: OutputPlan {
            csv: PathBuf::from("metrics.csv"),
            surface_every: 0,
        },
        seed: None,
    };

    // Mesh fields are gathered and assembled once the section ends.
    let mut mesh_source: Option<String> = None;
    let mut mesh_fields: Vec<(String, f64)> = Vec::new();
    let mut mesh_path: Option<PathBuf> = None;
    let mut zone_kind: Option<String> = None;
    let mut zone_k = 1usize;
    let mut zone_path: Option<PathBuf> = None;
    let mut zone_threshold = 0.5;
    let mut epidermis = EpidermisParams::default();
    let mut section = String::new();

    for (i, raw) in text.lines().enumerate() {
        let line_no = i + 1;
        let line = match raw.find('#') {
            Some(pos) => raw[..pos].trim(),
            None => raw.trim(),
        };
        if line.is_empty() {
            continue;
        }
        if line.starts_with('[') {
            if !line.ends_with(']') {
                return err(line_no, "unterminated section header");
            }
            section = line[1..line.len() - 1].trim().to_string();
            const KNOWN: [&str; 8] = [
                "scenario",
                "mesh",
                "material",
                "epidermis",
                "zones",
                "solver",
                "bc",
                "output",
            ];
            if !KNOWN.contains(&section.as_str()) {
                return err(line_no, format!("unknown section \"{section}\""));
            }
            continue;
        }
        let (key, value) = match line.split_once('=') {
            Some((k, v)) => (k.trim(), v.trim()),
            None => return err(line_no, "expected \"key = value\""),
        };
        if value.is_empty() {
            return err(line_no, format!("missing value for \"{key}\""));
        }

        match section.as_str() {
            "scenario" => match key {
                "name" => scenario.name = value.to_string(),
                "mode" => {
                    scenario.mode = match value {
                        "static" => RunMode::Static,
                        "dynamic" => RunMode::Dynamic,
                        other => return err(line_no, format!("unknown mode \"{other}\"")),
                    }
                }
                "frames" => scenario.frames = parse_usize(line_no, value, "frame count")? as u32,
                "duration" => scenario.duration = parse_f64(line_no, value, "duration")?,
                "seed" => scenario.seed = Some(parse_usize(line_no, value, "seed")? as u64),
                other => return err(line_no, format!("unknown scenario key \"{other}\"")),
            },
            "mesh" => match key {
                "source" => mesh_source = Some(value.to_string()),
                "path" => mesh_path = Some(PathBuf::from(value)),
                "nx" | "ny" | "nz" | "lx" | "ly" | "lz" => {
                    mesh_fields.push((key.to_string(), parse_f64(line_no, value, key)?))
                }
                other => return err(line_no, format!("unknown mesh key \"{other}\"")),
            },
            "material" => match key {
                "model" => {
                    scenario.material.model = match value {
                        "unh" => MaterialModel::NeoHookean,
                        "cnh" => MaterialModel::DeviatoricNeoHookean,
                        other => return err(line_no, format!("unknown material model \"{other}\"")),
                    }
                }
                "mu" => scenario.material.mu = parse_f64(line_no, value, "mu")?,
                "lambda" => scenario.material.lambda = parse_f64(line_no, value, "lambda")?,
                "beta" => scenario.material.beta = parse_f64(line_no, value, "beta")?,
                "epsilon" => scenario.material.epsilon = parse_f64(line_no, value, "epsilon")?,
                other => return err(line_no, format!("unknown material key \"{other}\"")),
            },
            "epidermis" => match key {
                "lambda_e" => epidermis.lambda_e = parse_f64(line_no, value, "lambda_e")?,
                "gamma" => epidermis.gamma = parse_f64(line_no, value, "gamma")?,
                other => return err(line_no, format!("unknown epidermis key \"{other}\"")),
            },
            "zones" => match key {
                "kind" => zone_kind = Some(value.to_string()),
                "k" => zone_k = parse_usize(line_no, value, "ring count")?,
                "path" => zone_path = Some(PathBuf::from(value)),
                "threshold" => zone_threshold = parse_f64(line_no, value, "threshold")?,
                other => return err(line_no, format!("unknown zones key \"{other}\"")),
            },
            "solver" => {
                let cfg = &mut scenario.solver;
                match key {
                    "grad_tol" => cfg.grad_tol = parse_f64(line_no, value, key)?,
                    "constraint_tol" => cfg.constraint_tol = parse_f64(line_no, value, key)?,
                    "max_newton" => cfg.max_newton = parse_usize(line_no, value, key)? as u32,
                    "max_outer" => cfg.max_outer = parse_usize(line_no, value, key)? as u32,
                    "penalty_mu0" => cfg.penalty_mu0 = parse_f64(line_no, value, key)?,
                    "penalty_growth" => cfg.penalty_growth = parse_f64(line_no, value, key)?,
                    "ls_backtrack" => cfg.ls_backtrack = parse_f64(line_no, value, key)?,
                    "ls_armijo" => cfg.ls_armijo = parse_f64(line_no, value, key)?,
                    "dt" => cfg.dt = parse_f64(line_no, value, key)?,
                    "density" => cfg.mass_density = parse_f64(line_no, value, key)?,
                    "gravity" => {
                        let tokens: Vec<&str> = value.split_whitespace().collect();
                        cfg.gravity = parse_vec3(line_no, &tokens, "gravity")?;
                    }
                    other => return err(line_no, format!("unknown solver key \"{other}\"")),
                }
            }
            "bc" => {
                if let Some(rest) = key.strip_prefix("set ") {
                    let name = rest.trim().to_string();
                    let tokens: Vec<&str> = value.split_whitespace().collect();
                    let selector = match tokens.first() {
                        Some(&"box") => {
                            if tokens.len() != 7 {
                                return err(line_no, "box selector needs six bounds");
                            }
                            let mut b = [0.0; 6];
                            for (slot, token) in b.iter_mut().zip(&tokens[1..]) {
                                *slot = parse_f64(line_no, token, "box bound")?;
                            }
                            Selector::Box {
                                min: [b[0], b[1], b[2]],
                                max: [b[3], b[4], b[5]],
                            }
                        }
                        Some(&"indices") => {
                            let idx = tokens[1..]
                                .iter()
                                .map(|t| parse_usize(line_no, t, "vertex index"))
                                .collect::<Result<Vec<_>, _>>()?;
                            if idx.is_empty() {
                                return err(line_no, "indices selector needs at least one vertex");
                            }
                            Selector::Indices(idx)
                        }
                        _ => return err(line_no, "selector must be \"box\" or \"indices\""),
                    };
                    scenario.sets.push(VertexSet { name, selector });
                } else if key == "fix" {
                    scenario.fixed.push(value.to_string());
                } else if key == "script" {
                    let tokens: Vec<&str> = value.split_whitespace().collect();
                    if tokens.len() < 2 {
                        return err(line_no, "script needs \"<set> <motion>\"");
                    }
                    let motion = match tokens[1] {
                        "translate" => Motion::Translate,
                        "scale" => Motion::Scale,
                        "rotate" => Motion::Rotate,
                        other => return err(line_no, format!("unknown motion \"{other}\"")),
                    };
                    let origin = if tokens.len() > 2 {
                        if tokens[2] != "origin" || tokens.len() != 6 {
                            return err(line_no, "expected \"origin x y z\" after the motion");
                        }
                        parse_vec3(line_no, &tokens[3..6], "origin")?
                    } else {
                        Vector3::zeros()
                    };
                    scenario.scripts.push(Script {
                        set: tokens[0].to_string(),
                        motion,
                        origin,
                        keys: Vec::new(),
                    });
                } else if key == "key" {
                    let script = scenario.scripts.last_mut().ok_or((
                        line_no,
                        "keyframe before any script directive".to_string(),
                    ))?;
                    let tokens: Vec<&str> = value.split_whitespace().collect();
                    if tokens.len() != 4 {
                        return err(line_no, "keyframe needs \"t x y z\"");
                    }
                    let t = parse_f64(line_no, tokens[0], "keyframe time")?;
                    let v = parse_vec3(line_no, &tokens[1..4], "keyframe value")?;
                    script.keys.push((t, [v.x, v.y, v.z]));
                } else {
                    return err(line_no, format!("unknown bc directive \"{key}\""));
                }
            }
            "output" => match key {
                "csv" => scenario.output.csv = PathBuf::from(value),
                "surface_every" => {
                    scenario.output.surface_every =
                        parse_usize(line_no, value, "surface cadence")? as u32
                }
                other => return err(line_no, format!("unknown output key \"{other}\"")),
            },
            "" => return err(line_no, "entry before any [section] header"),
            _ => unreachable!("section names validated at the header"),
        }
    }

    scenario.mesh = match mesh_source.as_deref() {
        None | Some("two_tet") => MeshSpec::TwoTet,
        Some("grid") => {
            let field = |name: &str, default: f64| {
                mesh_fields
                    .iter()
                    .rev()
                    .find(|(k, _)| k == name)
                    .map(|(_, v)| *v)
                    .unwrap_or(default)
            };
            MeshSpec::Grid {
                nx: field("nx", 2.0) as usize,
                ny: field("ny", 2.0) as usize,
                nz: field("nz", 2.0) as usize,
                lx: field("lx", 1.0),
                ly: field("ly", 1.0),
                lz: field("lz", 1.0),
            }
        }
        Some("file") => {
            let path = mesh_path.ok_or((0usize, "mesh source \"file\" needs a path".to_string()))?;
            MeshSpec::File(path)
        }
        Some(other) => return err(0, format!("unknown mesh source \"{other}\"")),
    };

    scenario.zones = match zone_kind.as_deref() {
        None | Some("none") => ZoneSpec::None,
        Some("global") => ZoneSpec::Global,
        Some("k_ring") => ZoneSpec::KRing(zone_k),
        Some("per_element") => ZoneSpec::PerElement,
        Some("weights") => ZoneSpec::Weights {
            path: zone_path.ok_or((0usize, "zones kind \"weights\" needs a path".to_string()))?,
            threshold: zone_threshold,
        },
        Some(other) => return err(0, format!("unknown zones kind \"{other}\"")),
    };

    if epidermis.lambda_e > 0.0 {
        scenario.epidermis = Some(epidermis);
    }
    if scenario.name.is_empty() {
        scenario.name = "unnamed".to_string();
    }
    Ok(scenario)
}

/// Serializes a scenario to config text; `parse_scenario` round-trips it.
pub fn write_scenario(scenario: &Scenario) -> String {
    let mut out = String::new();
    let w = &mut out;
    let _ = writeln!(w, "[scenario]");
    let _ = writeln!(w, "name = {}", scenario.name);
    let mode = match scenario.mode {
        RunMode::Static => "static",
        RunMode::Dynamic => "dynamic",
    };
    let _ = writeln!(w, "mode = {mode}");
    let _ = writeln!(w, "frames = {}", scenario.frames);
    let _ = writeln!(w, "duration = {}", scenario.duration);
    if let Some(seed) = scenario.seed {
        let _ = writeln!(w, "seed = {seed}");
    }

    let _ = writeln!(w, "\n[mesh]");
    match &scenario.mesh {
        MeshSpec::TwoTet => {
            let _ = writeln!(w, "source = two_tet");
        }
        MeshSpec::Grid {
            nx,
            ny,
            nz,
            lx,
            ly,
            lz,
        } => {
            let _ = writeln!(w, "source = grid");
            let _ = writeln!(w, "nx = {nx}\nny = {ny}\nnz = {nz}");
            let _ = writeln!(w, "lx = {lx}\nly = {ly}\nlz = {lz}");
        }
        MeshSpec::File(path) => {
            let _ = writeln!(w, "source = file");
            let _ = writeln!(w, "path = {}", path.display());
        }
    }

    let _ = writeln!(w, "\n[material]");
    let model = match scenario.material.model {
        MaterialModel::NeoHookean => "unh",
        MaterialModel::DeviatoricNeoHookean => "cnh",
    };
    let _ = writeln!(w, "model = {model}");
    let _ = writeln!(w, "mu = {}", scenario.material.mu);
    let _ = writeln!(w, "lambda = {}", scenario.material.lambda);
    let _ = writeln!(w, "beta = {}", scenario.material.beta);
    let _ = writeln!(w, "epsilon = {}", scenario.material.epsilon);

    if let Some(epi) = &scenario.epidermis {
        let _ = writeln!(w, "\n[epidermis]");
        let _ = writeln!(w, "lambda_e = {}", epi.lambda_e);
        let _ = writeln!(w, "gamma = {}", epi.gamma);
    }

    let _ = writeln!(w, "\n[zones]");
    match &scenario.zones {
        ZoneSpec::None => {
            let _ = writeln!(w, "kind = none");
        }
        ZoneSpec::Global => {
            let _ = writeln!(w, "kind = global");
        }
        ZoneSpec::KRing(k) => {
            let _ = writeln!(w, "kind = k_ring");
            let _ = writeln!(w, "k = {k}");
        }
        ZoneSpec::PerElement => {
            let _ = writeln!(w, "kind = per_element");
        }
        ZoneSpec::Weights { path, threshold } => {
            let _ = writeln!(w, "kind = weights");
            let _ = writeln!(w, "path = {}", path.display());
            let _ = writeln!(w, "threshold = {threshold}");
        }
    }

    let cfg = &scenario.solver;
    let _ = writeln!(w, "\n[solver]");
    let _ = writeln!(w, "grad_tol = {}", cfg.grad_tol);
    let _ = writeln!(w, "constraint_tol = {}", cfg.constraint_tol);
    let _ = writeln!(w, "max_newton = {}", cfg.max_newton);
    let _ = writeln!(w, "max_outer = {}", cfg.max_outer);
    let _ = writeln!(w, "penalty_mu0 = {}", cfg.penalty_mu0);
    let _ = writeln!(w, "penalty_growth = {}", cfg.penalty_growth);
    let _ = writeln!(w, "ls_backtrack = {}", cfg.ls_backtrack);
    let _ = writeln!(w, "ls_armijo = {}", cfg.ls_armijo);
    let _ = writeln!(w, "dt = {}", cfg.dt);
    let _ = writeln!(w, "density = {}", cfg.mass_density);
    let _ = writeln!(
        w,
        "gravity = {} {} {}",
        cfg.gravity.x, cfg.gravity.y, cfg.gravity.z
    );

    if !scenario.sets.is_empty() || !scenario.fixed.is_empty() || !scenario.scripts.is_empty() {
        let _ = writeln!(w, "\n[bc]");
        for set in &scenario.sets {
            match &set.selector {
                Selector::Box { min, max } => {
                    let _ = writeln!(
                        w,
                        "set {} = box {} {} {} {} {} {}",
                        set.name, min[0], min[1], min[2], max[0], max[1], max[2]
                    );
                }
                Selector::Indices(idx) => {
                    let list: Vec<String> = idx.iter().map(|v| v.to_string()).collect();
                    let _ = writeln!(w, "set {} = indices {}", set.name, list.join(" "));
                }
            }
        }
        for name in &scenario.fixed {
            let _ = writeln!(w, "fix = {name}");
        }
        for script in &scenario.scripts {
            let motion = match script.motion {
                Motion::Translate => "translate",
                Motion::Scale => "scale",
                Motion::Rotate => "rotate",
            };
            let _ = writeln!(
                w,
                "script = {} {} origin {} {} {}",
                script.set, motion, script.origin.x, script.origin.y, script.origin.z
            );
            for (t, v) in &script.keys {
                let _ = writeln!(w, "key = {} {} {} {}", t, v[0], v[1], v[2]);
            }
        }
    }

    let _ = writeln!(w, "\n[output]");
    let _ = writeln!(w, "csv = {}", scenario.output.csv.display());
    let _ = writeln!(w, "surface_every = {}", scenario.output.surface_every);
    out
}
