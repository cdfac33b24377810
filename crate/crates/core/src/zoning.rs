//! Zone-set construction: global, per-element, k-ring, and surface-weight
//! projection zones.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use crate::constraints::{ZoneError, ZoneSet};
use crate::math::{barycentric, closest_point_on_triangle};
use crate::mesh::TetMesh;

/// One zone containing every element.
pub fn global_zone(mesh: &TetMesh) -> ZoneSet {
    ZoneSet::new(
        mesh,
        [("global".to_string(), (0..mesh.tet_count()).collect())],
    )
    .expect("global zone of a valid mesh is non-empty")
}

/// One zone per element: the element-wise incompressible limit.
pub fn per_element_zones(mesh: &TetMesh) -> ZoneSet {
    ZoneSet::new(
        mesh,
        (0..mesh.tet_count()).map(|e| (format!("tet{e}"), vec![e])),
    )
    .expect("per-element zones of a valid mesh are non-empty")
}

/// Per-vertex zones grown by vertex adjacency.
///
/// The zone of vertex `v` starts from the tets incident to `v` and expands
/// `k` times by adding every tet that shares a vertex with the current set.
/// With `k = 1` this is one vertex-sharing hop beyond the incident tets
/// (strict incidence-only rings would stop at the incident set).
pub fn k_ring_zones(mesh: &TetMesh, k: usize) -> Result<ZoneSet, ZoneError> {
    if k == 0 {
        return Err(ZoneError::InvalidRing { k });
    }
    let n_verts = mesh.vertex_count();
    let mut incident: Vec<Vec<usize>> = vec![Vec::new(); n_verts];
    for (e, tet) in mesh.tets().iter().enumerate() {
        for &v in tet {
            incident[v].push(e);
        }
    }

    let mut labeled = Vec::with_capacity(n_verts);
    for v in 0..n_verts {
        let mut zone: BTreeSet<usize> = incident[v].iter().copied().collect();
        for _ in 0..k {
            if zone.len() == mesh.tet_count() {
                break;
            }
            let mut frontier_verts = BTreeSet::new();
            for &e in &zone {
                frontier_verts.extend(mesh.tets()[e].iter().copied());
            }
            let mut grown = zone.clone();
            for &fv in &frontier_verts {
                grown.extend(incident[fv].iter().copied());
            }
            if grown.len() == zone.len() {
                break;
            }
            zone = grown;
        }
        labeled.push((format!("v{v}_ring{k}"), zone.into_iter().collect()));
    }
    ZoneSet::new(mesh, labeled)
}

/// Per-surface-vertex weights for possibly overlapping painted zones.
#[derive(Debug, Clone, Default)]
pub struct SurfaceWeights {
    /// Label -> vertex -> weight; missing vertices weigh zero.
    labels: BTreeMap<String, BTreeMap<usize, f64>>,
}

impl SurfaceWeights {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn set(&mut self, vertex: usize, label: &str, weight: f64) {
        self.labels
            .entry(label.to_string())
            .or_default()
            .insert(vertex, weight);
    }

    pub fn weight(&self, label: &str, vertex: usize) -> f64 {
        self.labels
            .get(label)
            .and_then(|m| m.get(&vertex))
            .copied()
            .unwrap_or(0.0)
    }

    pub fn labels(&self) -> impl Iterator<Item = &str> {
        self.labels.keys().map(String::as_str)
    }

    /// Reads the weight file format: one `vertex_index label weight` per
    /// line; `#` starts a comment.
    pub fn read(path: impl AsRef<Path>) -> Result<Self, ZoneError> {
        let text = std::fs::read_to_string(path)?;
        Self::parse(&text)
    }

    pub fn parse(text: &str) -> Result<Self, ZoneError> {
        let mut weights = SurfaceWeights::new();
        for (i, raw) in text.lines().enumerate() {
            let line_no = i + 1;
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let parts: Vec<&str> = line.split_whitespace().collect();
            if parts.len() != 3 {
                return Err(ZoneError::Parse {
                    line: line_no,
                    message: "expected \"vertex_index label weight\"".to_string(),
                });
            }
            let vertex: usize = parts[0].parse().map_err(|_| ZoneError::Parse {
                line: line_no,
                message: "invalid vertex index".to_string(),
            })?;
            let weight: f64 = parts[2].parse().map_err(|_| ZoneError::Parse {
                line: line_no,
                message: "invalid weight".to_string(),
            })?;
            if !weight.is_finite() {
                return Err(ZoneError::Parse {
                    line: line_no,
                    message: "weight must be finite".to_string(),
                });
            }
            weights.set(vertex, parts[1], weight);
        }
        Ok(weights)
    }
}

/// Builds volumetric zones from painted surface weights.
///
/// Each tet centroid is projected to its nearest point on the boundary
/// surface (ties broken toward the lowest triangle index); the tet joins
/// every zone whose barycentrically interpolated weight at that point
/// exceeds `threshold`. Labels that end up with no members are dropped with
/// a warning, as are zones that are not vertex-connected.
pub fn zones_from_surface_weights(
    mesh: &TetMesh,
    weights: &SurfaceWeights,
    threshold: f64,
) -> Result<ZoneSet, ZoneError> {
    let mut members: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
    for label in weights.labels() {
        members.insert(label, Vec::new());
    }

    for e in 0..mesh.tet_count() {
        let tet = mesh.tets()[e];
        let centroid = tet
            .iter()
            .map(|&v| mesh.vertices()[v])
            .sum::<nalgebra::Vector3<f64>>()
            / 4.0;

        let mut best: Option<(f64, usize, nalgebra::Vector3<f64>)> = None;
        for (t, &[a, b, c]) in mesh.surface().iter().enumerate() {
            let q = closest_point_on_triangle(
                &centroid,
                &mesh.vertices()[a],
                &mesh.vertices()[b],
                &mesh.vertices()[c],
            );
            let d2 = (q - centroid).norm_squared();
            if best.map_or(true, |(bd, _, _)| d2 < bd) {
                best = Some((d2, t, q));
            }
        }
        let (_, t, point) = best.expect("mesh has a boundary surface");
        let [a, b, c] = mesh.surface()[t];
        let bary = barycentric(
            &point,
            &mesh.vertices()[a],
            &mesh.vertices()[b],
            &mesh.vertices()[c],
        );

        for (label, elems) in members.iter_mut() {
            let w = bary[0] * weights.weight(label, a)
                + bary[1] * weights.weight(label, b)
                + bary[2] * weights.weight(label, c);
            if w > threshold {
                elems.push(e);
            }
        }
    }

    let mut labeled = Vec::new();
    for (label, elems) in members {
        if elems.is_empty() {
            log::warn!("surface-weight zone \"{label}\" matched no elements; dropping it");
            continue;
        }
        if !is_vertex_connected(mesh, &elems) {
            log::warn!("surface-weight zone \"{label}\" is not connected");
        }
        labeled.push((label.to_string(), elems));
    }
    ZoneSet::new(mesh, labeled)
}

fn is_vertex_connected(mesh: &TetMesh, elements: &[usize]) -> bool {
    if elements.len() <= 1 {
        return true;
    }
    let set: BTreeSet<usize> = elements.iter().copied().collect();
    let mut vertex_to_elems: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for &e in elements {
        for &v in &mesh.tets()[e] {
            vertex_to_elems.entry(v).or_default().push(e);
        }
    }
    let mut seen = BTreeSet::new();
    let mut stack = vec![elements[0]];
    while let Some(e) = stack.pop() {
        if !seen.insert(e) {
            continue;
        }
        for &v in &mesh.tets()[e] {
            for &ne in &vertex_to_elems[&v] {
                if !seen.contains(&ne) {
                    stack.push(ne);
                }
            }
        }
    }
    seen.len() == set.len()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::{make_grid, make_two_tet};
    use approx::assert_relative_eq;

    #[test]
    fn global_zone_covers_everything() {
        let mesh = make_grid(3, 3, 3, 1.0, 1.0, 1.0).unwrap();
        let zones = global_zone(&mesh);
        assert_eq!(zones.len(), 1);
        assert_eq!(zones.zones()[0].elements.len(), mesh.tet_count());
        assert_relative_eq!(
            zones.zones()[0].rest_volume,
            mesh.total_rest_volume(),
            epsilon = 1e-14
        );

        let two = make_two_tet();
        assert_eq!(global_zone(&two).zones()[0].elements.len(), 2);
    }

    #[test]
    fn per_element_zone_per_tet() {
        let mesh = make_grid(2, 2, 2, 1.0, 1.0, 1.0).unwrap();
        let zones = per_element_zones(&mesh);
        assert_eq!(zones.len(), mesh.tet_count());
        for (e, z) in zones.zones().iter().enumerate() {
            assert_eq!(z.elements, vec![e]);
        }
    }

    #[test]
    fn k_ring_rejects_zero() {
        let mesh = make_two_tet();
        assert!(matches!(
            k_ring_zones(&mesh, 0),
            Err(ZoneError::InvalidRing { k: 0 })
        ));
    }

    #[test]
    fn k_ring_on_two_tet() {
        let mesh = make_two_tet();
        let zones = k_ring_zones(&mesh, 1).unwrap();
        // Shared-face vertices (0..=2) touch both tets directly; the apexes
        // (3, 4) reach the other tet after one vertex-sharing hop.
        for v in 0..5 {
            assert_eq!(
                zones.zones()[v].elements,
                vec![0, 1],
                "vertex {v} zone should cover both tets"
            );
        }
    }

    #[test]
    fn k_ring_zones_are_nested_and_saturate() {
        let mesh = make_grid(4, 3, 3, 1.0, 1.0, 1.0).unwrap();
        let z1 = k_ring_zones(&mesh, 1).unwrap();
        let z2 = k_ring_zones(&mesh, 2).unwrap();
        for v in 0..mesh.vertex_count() {
            let a: BTreeSet<usize> = z1.zones()[v].elements.iter().copied().collect();
            let b: BTreeSet<usize> = z2.zones()[v].elements.iter().copied().collect();
            assert!(a.is_subset(&b), "zone(v, 1) not nested in zone(v, 2)");
        }
        let z_big = k_ring_zones(&mesh, 50).unwrap();
        for z in z_big.zones() {
            assert_eq!(z.elements.len(), mesh.tet_count());
        }
    }

    #[test]
    fn uniform_weights_give_one_global_zone() {
        let mesh = make_grid(3, 3, 3, 1.0, 1.0, 1.0).unwrap();
        let mut weights = SurfaceWeights::new();
        let painted: BTreeSet<usize> = mesh.surface().iter().flatten().copied().collect();
        for v in painted {
            weights.set(v, "all", 1.0);
        }
        let zones = zones_from_surface_weights(&mesh, &weights, 0.5).unwrap();
        assert_eq!(zones.len(), 1);
        assert_eq!(zones.zones()[0].elements.len(), mesh.tet_count());
    }

    #[test]
    fn beam_halves_partition_by_centroid() {
        let lx = 4.0;
        let mesh = make_grid(9, 3, 3, lx, 1.0, 1.0).unwrap();
        let cell = lx / 8.0;
        let mut weights = SurfaceWeights::new();
        let painted: BTreeSet<usize> = mesh.surface().iter().flatten().copied().collect();
        for v in painted {
            let x = mesh.vertices()[v].x;
            if x < lx / 2.0 - 1e-9 {
                weights.set(v, "left", 1.0);
            } else if x > lx / 2.0 + 1e-9 {
                weights.set(v, "right", 1.0);
            } else {
                weights.set(v, "left", 0.5);
                weights.set(v, "right", 0.5);
            }
        }
        let zones = zones_from_surface_weights(&mesh, &weights, 0.5).unwrap();
        assert_eq!(zones.len(), 2);
        let left: BTreeSet<usize> = zones.zones()[0].elements.iter().copied().collect();
        let right: BTreeSet<usize> = zones.zones()[1].elements.iter().copied().collect();
        for e in 0..mesh.tet_count() {
            let cx = mesh.tets()[e]
                .iter()
                .map(|&v| mesh.vertices()[v].x)
                .sum::<f64>()
                / 4.0;
            // Away from the seam the halves must match the centroid side.
            if cx < lx / 2.0 - cell {
                assert!(left.contains(&e) && !right.contains(&e));
            } else if cx > lx / 2.0 + cell {
                assert!(right.contains(&e) && !left.contains(&e));
            }
        }
    }

    #[test]
    fn all_weights_below_threshold_yield_empty_set() {
        let mesh = make_two_tet();
        let mut weights = SurfaceWeights::new();
        for v in 0..mesh.vertex_count() {
            weights.set(v, "faint", 0.2);
        }
        let zones = zones_from_surface_weights(&mesh, &weights, 0.5).unwrap();
        assert!(zones.is_empty());
    }

    #[test]
    fn weight_file_parsing() {
        let w = SurfaceWeights::parse("0 belly 1.0\n1 belly 0.25\n# note\n2 back 0.7\n").unwrap();
        assert_relative_eq!(w.weight("belly", 0), 1.0);
        assert_relative_eq!(w.weight("belly", 1), 0.25);
        assert_relative_eq!(w.weight("back", 2), 0.7);
        assert_relative_eq!(w.weight("back", 0), 0.0);

        assert!(matches!(
            SurfaceWeights::parse("0 belly\n"),
            Err(ZoneError::Parse { line: 1, .. })
        ));
        assert!(matches!(
            SurfaceWeights::parse("x belly 1.0\n"),
            Err(ZoneError::Parse { line: 1, .. })
        ));
    }
}
