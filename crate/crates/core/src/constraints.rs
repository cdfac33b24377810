//! Zonal volume constraints over possibly-overlapping element sets:
//! values, sparse Jacobians, and sparse Hessians.
//!
//! Each zone contributes one scalar equality `c_j(x) = sum_{e in zone}
//! V_e(x) - V_j^0 = 0`. The element-sum path is the canonical definition;
//! [`zone_volume_via_boundary`] is an equivalent boundary-face evaluation.

use std::collections::BTreeMap;
use std::path::Path;

use nalgebra::{Matrix3, SMatrix, Vector3};
use thiserror::Error;

use crate::math::skew;
use crate::mesh::{outward_faces, Displacement, TetMesh};

#[derive(Debug, Error)]
pub enum ZoneError {
    #[error("zone \"{label}\" is empty")]
    EmptyZone { label: String },
    #[error("zone \"{label}\" references element {element}, but the mesh has {count} elements")]
    InvalidElement {
        label: String,
        element: usize,
        count: usize,
    },
    #[error("k-ring zones require k >= 1, got {k}")]
    InvalidRing { k: usize },
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// One volume-preservation zone: an element index set and its rest volume.
///
/// The Lagrange multiplier associated with the zone lives in the solver
/// state, indexed by the zone's position in the [`ZoneSet`].
#[derive(Debug, Clone)]
pub struct Zone {
    pub label: String,
    /// Sorted, deduplicated element indices.
    pub elements: Vec<usize>,
    /// Rest volume, the sum of member rest volumes (m^3).
    pub rest_volume: f64,
}

/// Ordered collection of zones; zones may overlap.
#[derive(Debug, Clone, Default)]
pub struct ZoneSet {
    zones: Vec<Zone>,
}

impl ZoneSet {
    pub fn empty() -> Self {
        ZoneSet { zones: Vec::new() }
    }

    /// Builds zones from labeled element sets, computing rest volumes from
    /// the mesh. Rejects empty zones and out-of-range indices.
    pub fn new(
        mesh: &TetMesh,
        labeled: impl IntoIterator<Item = (String, Vec<usize>)>,
    ) -> Result<Self, ZoneError> {
        let mut zones = Vec::new();
        for (label, mut elements) in labeled {
            elements.sort_unstable();
            elements.dedup();
            if elements.is_empty() {
                return Err(ZoneError::EmptyZone { label });
            }
            if let Some(&bad) = elements.iter().find(|&&e| e >= mesh.tet_count()) {
                return Err(ZoneError::InvalidElement {
                    label,
                    element: bad,
                    count: mesh.tet_count(),
                });
            }
            let rest_volume = elements.iter().map(|&e| mesh.rest_volume(e)).sum();
            zones.push(Zone {
                label,
                elements,
                rest_volume,
            });
        }
        Ok(ZoneSet { zones })
    }

    #[inline]
    pub fn zones(&self) -> &[Zone] {
        &self.zones
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.zones.len()
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.zones.is_empty()
    }
}

/// Per-tet volume gradient with respect to its four vertices, with the 1/6
/// convention: entries `(1/6) v2 x v3`, `(1/6) v3 x v1`, `(1/6) v1 x v2`
/// at vertices 1..3 and the negated sum at vertex 0.
#[inline]
pub(crate) fn tet_volume_gradient(
    x0: &Vector3<f64>,
    x1: &Vector3<f64>,
    x2: &Vector3<f64>,
    x3: &Vector3<f64>,
) -> [Vector3<f64>; 4] {
    let v1 = x1 - x0;
    let v2 = x2 - x0;
    let v3 = x3 - x0;
    let g1 = v2.cross(&v3) / 6.0;
    let g2 = v3.cross(&v1) / 6.0;
    let g3 = v1.cross(&v2) / 6.0;
    [-(g1 + g2 + g3), g1, g2, g3]
}

/// Upper-triangle 3x3 blocks of the per-tet volume Hessian, as
/// `(local_i, local_j, block)` with `local_i < local_j`. Every block is
/// skew-symmetric and linear in the positions; diagonal blocks vanish.
pub(crate) fn tet_volume_hessian_blocks(
    x0: &Vector3<f64>,
    x1: &Vector3<f64>,
    x2: &Vector3<f64>,
    x3: &Vector3<f64>,
) -> [(usize, usize, Matrix3<f64>); 6] {
    let v1 = x1 - x0;
    let v2 = x2 - x0;
    let v3 = x3 - x0;
    let b12 = -skew(&v3) / 6.0;
    let b13 = skew(&v2) / 6.0;
    let b23 = -skew(&v1) / 6.0;
    let b01 = skew(&(v2 - v3)) / 6.0;
    let b02 = skew(&(v3 - v1)) / 6.0;
    let b03 = skew(&(v1 - v2)) / 6.0;
    [
        (0, 1, b01),
        (0, 2, b02),
        (0, 3, b03),
        (1, 2, b12),
        (1, 3, b13),
        (2, 3, b23),
    ]
}

/// Per-tet volume Hessian as a dense 12x12 vertex-space stencil.
pub(crate) fn tet_volume_hessian(
    x0: &Vector3<f64>,
    x1: &Vector3<f64>,
    x2: &Vector3<f64>,
    x3: &Vector3<f64>,
) -> SMatrix<f64, 12, 12> {
    let mut h = SMatrix::<f64, 12, 12>::zeros();
    for (i, j, block) in tet_volume_hessian_blocks(x0, x1, x2, x3) {
        h.fixed_view_mut::<3, 3>(3 * i, 3 * j).copy_from(&block);
        h.fixed_view_mut::<3, 3>(3 * j, 3 * i)
            .copy_from(&block.transpose());
    }
    h
}

/// Signed current zone volume minus the zone rest volume (m^3).
pub fn constraint_value(mesh: &TetMesh, x: &Displacement, zone: &Zone) -> f64 {
    let current: f64 = zone.elements.iter().map(|&e| mesh.tet_volume(x, e)).sum();
    current - zone.rest_volume
}

/// Sparse constraint gradient: per-vertex 3-vectors, sorted by vertex.
#[derive(Debug, Clone)]
pub struct ConstraintJacobian {
    pub entries: Vec<(usize, Vector3<f64>)>,
}

impl ConstraintJacobian {
    /// Dot product with a stacked position-space vector.
    pub fn dot(&self, v: &[f64]) -> f64 {
        self.entries
            .iter()
            .map(|(i, g)| g.x * v[3 * i] + g.y * v[3 * i + 1] + g.z * v[3 * i + 2])
            .sum()
    }
}

/// Gradient of the zone constraint, nonzero only at member-tet vertices.
pub fn constraint_jacobian(mesh: &TetMesh, x: &Displacement, zone: &Zone) -> ConstraintJacobian {
    let mut acc: BTreeMap<usize, Vector3<f64>> = BTreeMap::new();
    for &e in &zone.elements {
        let [a, b, c, d] = mesh.tets()[e];
        let g = tet_volume_gradient(&x.vertex(a), &x.vertex(b), &x.vertex(c), &x.vertex(d));
        for (vertex, grad) in [a, b, c, d].into_iter().zip(g) {
            *acc.entry(vertex).or_insert_with(Vector3::zeros) += grad;
        }
    }
    ConstraintJacobian {
        entries: acc.into_iter().collect(),
    }
}

/// Sparse symmetric constraint Hessian as 3x3 vertex-pair blocks.
///
/// Off-diagonal blocks are skew-symmetric, the full matrix is symmetric via
/// `block(j, i) = block(i, j)^T`, and diagonal blocks vanish: volume is
/// trilinear in the positions.
#[derive(Debug, Clone)]
pub struct ConstraintHessian {
    /// Upper blocks `(vertex_i, vertex_j, block)` with `vertex_i < vertex_j`.
    pub blocks: Vec<(usize, usize, Matrix3<f64>)>,
}

pub fn constraint_hessian(mesh: &TetMesh, x: &Displacement, zone: &Zone) -> ConstraintHessian {
    let mut acc: BTreeMap<(usize, usize), Matrix3<f64>> = BTreeMap::new();
    for &e in &zone.elements {
        let tet = mesh.tets()[e];
        let blocks = tet_volume_hessian_blocks(
            &x.vertex(tet[0]),
            &x.vertex(tet[1]),
            &x.vertex(tet[2]),
            &x.vertex(tet[3]),
        );
        for (li, lj, block) in blocks {
            let (gi, gj) = (tet[li], tet[lj]);
            let (key, block) = if gi <= gj {
                ((gi, gj), block)
            } else {
                ((gj, gi), block.transpose())
            };
            *acc.entry(key).or_insert_with(Matrix3::zeros) += block;
        }
    }
    ConstraintHessian {
        blocks: acc.into_iter().map(|((i, j), b)| (i, j, b)).collect(),
    }
}

/// Zone volume via the divergence theorem over the zone's boundary faces.
///
/// Faces interior to the zone cancel in pairs, so this equals the element
/// sum exactly up to round-off; it is an optimization path, not the
/// canonical definition.
pub fn zone_volume_via_boundary(mesh: &TetMesh, x: &Displacement, zone: &Zone) -> f64 {
    let mut faces: BTreeMap<[usize; 3], (usize, [usize; 3])> = BTreeMap::new();
    for &e in &zone.elements {
        for face in outward_faces(&mesh.tets()[e]) {
            let mut key = face;
            key.sort_unstable();
            let entry = faces.entry(key).or_insert((0, face));
            entry.0 += 1;
        }
    }
    faces
        .into_values()
        .filter(|(count, _)| *count == 1)
        .map(|(_, [a, b, c])| {
            let (pa, pb, pc) = (x.vertex(a), x.vertex(b), x.vertex(c));
            pa.dot(&pb.cross(&pc)) / 6.0
        })
        .sum()
}

/// Reads the zone file format: one zone per line, `label: e0 e1 e2 ...`
/// with 0-based element indices, or the keyword `global` for a zone with
/// every element.
pub fn read_zones(mesh: &TetMesh, path: impl AsRef<Path>) -> Result<ZoneSet, ZoneError> {
    let text = std::fs::read_to_string(path)?;
    parse_zones(mesh, &text)
}

pub fn parse_zones(mesh: &TetMesh, text: &str) -> Result<ZoneSet, ZoneError> {
    let mut labeled = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line_no = i + 1;
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        if line == "global" {
            labeled.push(("global".to_string(), (0..mesh.tet_count()).collect()));
            continue;
        }
        let (label, rest) = line.split_once(':').ok_or_else(|| ZoneError::Parse {
            line: line_no,
            message: "expected \"label: e0 e1 ...\" or \"global\"".to_string(),
        })?;
        let elements: Vec<usize> = rest
            .split_whitespace()
            .map(|t| t.parse::<usize>())
            .collect::<Result<_, _>>()
            .map_err(|_| ZoneError::Parse {
                line: line_no,
                message: "invalid element index".to_string(),
            })?;
        labeled.push((label.trim().to_string(), elements));
    }
    ZoneSet::new(mesh, labeled)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::{make_grid, make_two_tet, tet_signed_volume};
    use approx::assert_relative_eq;

    fn global(mesh: &TetMesh) -> Zone {
        Zone {
            label: "global".to_string(),
            elements: (0..mesh.tet_count()).collect(),
            rest_volume: mesh.total_rest_volume(),
        }
    }

    #[test]
    fn zero_at_reference() {
        let mesh = make_two_tet();
        let x = mesh.reference_positions();
        assert_relative_eq!(
            constraint_value(&mesh, &x, &global(&mesh)),
            0.0,
            epsilon = 1e-14
        );
    }

    #[test]
    fn uniform_scaling_value() {
        let mesh = make_grid(3, 3, 3, 1.0, 1.0, 1.0).unwrap();
        let s = 1.3;
        let mut x = mesh.reference_positions();
        for v in x.as_mut_slice() {
            *v *= s;
        }
        let expected = (s * s * s - 1.0) * mesh.total_rest_volume();
        assert_relative_eq!(
            constraint_value(&mesh, &x, &global(&mesh)),
            expected,
            max_relative = 1e-12
        );
    }

    #[test]
    fn flattened_tet_loses_its_volume() {
        let mesh = make_two_tet();
        let mut x = mesh.reference_positions();
        // Project tet 0's apex into the shared-face plane, flattening it
        // while leaving tet 1 at rest.
        let (a, b, c) = (x.vertex(0), x.vertex(1), x.vertex(2));
        let normal = (b - a).cross(&(c - a)).normalize();
        let apex = x.vertex(3);
        x.set_vertex(3, apex - normal * normal.dot(&(apex - a)));
        assert_relative_eq!(
            constraint_value(&mesh, &x, &global(&mesh)),
            -mesh.rest_volume(0),
            max_relative = 1e-12
        );
    }

    #[test]
    fn single_tet_gradient_sums_to_zero() {
        let g = tet_volume_gradient(
            &Vector3::new(0.1, 0.2, 0.3),
            &Vector3::new(1.3, 0.1, 0.0),
            &Vector3::new(0.2, 1.7, 0.4),
            &Vector3::new(0.5, 0.3, 1.9),
        );
        let sum = g[0] + g[1] + g[2] + g[3];
        assert_relative_eq!(sum.norm(), 0.0, epsilon = 1e-14);
    }

    #[test]
    fn unit_tet_gradient_at_vertex_three() {
        let g = tet_volume_gradient(
            &Vector3::zeros(),
            &Vector3::x(),
            &Vector3::y(),
            &Vector3::z(),
        );
        assert_relative_eq!(g[3], Vector3::new(0.0, 0.0, 1.0 / 6.0), epsilon = 1e-15);
    }

    #[test]
    fn hessian_blocks_are_skew_and_linear() {
        let x0 = Vector3::new(0.0, 0.0, 0.0);
        let x1 = Vector3::new(1.1, 0.2, 0.1);
        let x2 = Vector3::new(0.3, 1.4, 0.2);
        let x3 = Vector3::new(0.2, 0.1, 1.6);
        for (_, _, b) in tet_volume_hessian_blocks(&x0, &x1, &x2, &x3) {
            assert_relative_eq!((b + b.transpose()).norm(), 0.0, epsilon = 1e-14);
        }
        // With vertex 0 pinned at the origin, the Hessian is linear in x.
        let h1 = tet_volume_hessian(&x0, &x1, &x2, &x3);
        let h2 = tet_volume_hessian(&x0, &(x1 * 2.0), &(x2 * 2.0), &(x3 * 2.0));
        assert_relative_eq!(h2, h1 * 2.0, epsilon = 1e-13);
    }

    #[test]
    fn hessian_diagonal_blocks_vanish() {
        let mesh = make_two_tet();
        let x = mesh.reference_positions();
        let h = constraint_hessian(&mesh, &x, &global(&mesh));
        for (i, j, b) in &h.blocks {
            assert!(i < j);
            assert_relative_eq!((b + b.transpose()).norm(), 0.0, epsilon = 1e-14);
        }
    }

    #[test]
    fn boundary_volume_matches_element_sum() {
        let mesh = make_grid(3, 3, 2, 1.0, 1.0, 0.5).unwrap();
        let zone = global(&mesh);
        let x = mesh.reference_positions();
        assert_relative_eq!(
            zone_volume_via_boundary(&mesh, &x, &zone),
            0.5,
            max_relative = 1e-10
        );

        // Single-tet zone reduces to the signed tet volume.
        let single = Zone {
            label: "one".to_string(),
            elements: vec![3],
            rest_volume: mesh.rest_volume(3),
        };
        let [a, b, c, d] = mesh.tets()[3];
        let direct = tet_signed_volume(&x.vertex(a), &x.vertex(b), &x.vertex(c), &x.vertex(d));
        assert_relative_eq!(
            zone_volume_via_boundary(&mesh, &x, &single),
            direct,
            max_relative = 1e-12
        );
    }

    #[test]
    fn overlap_consistency() {
        let mesh = make_grid(3, 2, 2, 1.0, 1.0, 1.0).unwrap();
        let mut x = mesh.reference_positions();
        for (i, v) in x.as_mut_slice().iter_mut().enumerate() {
            *v += 0.07 * ((i * 31 + 5) % 13) as f64 / 13.0;
        }
        let n = mesh.tet_count();
        let zones = ZoneSet::new(
            &mesh,
            [
                ("all".to_string(), (0..n).collect::<Vec<_>>()),
                ("left".to_string(), (0..n / 2).collect()),
                ("right".to_string(), (n / 2..n).collect()),
            ],
        )
        .unwrap();
        let c_all = constraint_value(&mesh, &x, &zones.zones()[0]);
        let c_left = constraint_value(&mesh, &x, &zones.zones()[1]);
        let c_right = constraint_value(&mesh, &x, &zones.zones()[2]);
        assert_relative_eq!(c_all, c_left + c_right, epsilon = 1e-12);
    }

    #[test]
    fn translation_invariance() {
        let mesh = make_two_tet();
        let zone = global(&mesh);
        let x = mesh.reference_positions();
        let mut xt = x.clone();
        for i in 0..mesh.vertex_count() {
            xt.set_vertex(i, xt.vertex(i) + Vector3::new(2.2, -1.1, 0.7));
        }
        assert_relative_eq!(
            constraint_value(&mesh, &x, &zone),
            constraint_value(&mesh, &xt, &zone),
            epsilon = 1e-10
        );
    }

    #[test]
    fn disjoint_zones_have_disjoint_support() {
        let mesh = make_grid(3, 2, 2, 1.0, 1.0, 1.0).unwrap();
        let x = mesh.reference_positions();
        // Tets of the two cells do not share elements; their jacobians may
        // share the interface vertices, so pick element-disjoint zones and
        // check vertex support only for tets away from the interface.
        let z0 = Zone {
            label: "a".into(),
            elements: vec![0],
            rest_volume: mesh.rest_volume(0),
        };
        let z1 = Zone {
            label: "b".into(),
            elements: vec![9],
            rest_volume: mesh.rest_volume(9),
        };
        let ja = constraint_jacobian(&mesh, &x, &z0);
        let jb = constraint_jacobian(&mesh, &x, &z1);
        let va: std::collections::BTreeSet<_> = ja.entries.iter().map(|(v, _)| *v).collect();
        let vb: std::collections::BTreeSet<_> = jb.entries.iter().map(|(v, _)| *v).collect();
        let expected_a: std::collections::BTreeSet<_> = mesh.tets()[0].iter().copied().collect();
        let expected_b: std::collections::BTreeSet<_> = mesh.tets()[9].iter().copied().collect();
        assert_eq!(va, expected_a);
        assert_eq!(vb, expected_b);
    }

    #[test]
    fn zone_set_validation() {
        let mesh = make_two_tet();
        assert!(matches!(
            ZoneSet::new(&mesh, [("empty".to_string(), vec![])]),
            Err(ZoneError::EmptyZone { .. })
        ));
        assert!(matches!(
            ZoneSet::new(&mesh, [("bad".to_string(), vec![7])]),
            Err(ZoneError::InvalidElement { .. })
        ));
        let zones = ZoneSet::new(&mesh, [("dup".to_string(), vec![0, 0, 1])]).unwrap();
        assert_eq!(zones.zones()[0].elements, vec![0, 1]);
        assert_relative_eq!(
            zones.zones()[0].rest_volume,
            mesh.total_rest_volume(),
            epsilon = 1e-14
        );
    }

    #[test]
    fn zone_file_parsing() {
        let mesh = make_two_tet();
        let zones = parse_zones(&mesh, "global\nleft: 0\n# comment\nboth: 0 1\n").unwrap();
        assert_eq!(zones.len(), 3);
        assert_eq!(zones.zones()[0].elements, vec![0, 1]);
        assert_eq!(zones.zones()[1].elements, vec![0]);
        assert_eq!(zones.zones()[2].label, "both");

        let err = parse_zones(&mesh, "left 0 1\n").unwrap_err();
        assert!(matches!(err, ZoneError::Parse { line: 1, .. }));
        let err = parse_zones(&mesh, "left: 0 x\n").unwrap_err();
        assert!(matches!(err, ZoneError::Parse { line: 1, .. }));
    }
}
