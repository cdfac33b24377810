//! Tetrahedral meshes: reference geometry, rest-state precomputation,
//! deformation gradients, boundary surface extraction, and text I/O.
//!
//! A [`TetMesh`] is immutable after construction; every derived quantity
//! (rest volumes, inverse shape matrices, surface basis) is computed once in
//! [`TetMesh::new`]. All per-element evaluations are pure functions of
//! `(mesh, positions, index)`.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use nalgebra::{Matrix2, Matrix3, Matrix3x2, Vector3};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum MeshError {
    #[error("degenerate tetrahedron {index}: rest volume {volume:e} is not positive")]
    DegenerateTet { index: usize, volume: f64 },
    #[error("tetrahedron {index} references vertex {vertex}, but the mesh has {count} vertices")]
    IndexOutOfRange {
        index: usize,
        vertex: usize,
        count: usize,
    },
    #[error("face {face:?} is shared by more than two tetrahedra")]
    NonManifoldFace { face: [usize; 3] },
    #[error("grid needs at least 2 vertices per axis, got {nx}x{ny}x{nz}")]
    InvalidGrid { nx: usize, ny: usize, nz: usize },
    #[error("grid extents must be positive, got {lx} x {ly} x {lz}")]
    InvalidExtent { lx: f64, ly: f64, lz: f64 },
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Stacked vector of per-vertex positions, `[x0 y0 z0 x1 y1 z1 ...]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Displacement {
    data: Vec<f64>,
}

impl Displacement {
    pub fn from_vertices(vertices: &[Vector3<f64>]) -> Self {
        let mut data = Vec::with_capacity(3 * vertices.len());
        for v in vertices {
            data.extend_from_slice(&[v.x, v.y, v.z]);
        }
        Displacement { data }
    }

    pub fn zeros(vertex_count: usize) -> Self {
        Displacement {
            data: vec![0.0; 3 * vertex_count],
        }
    }

    #[inline]
    pub fn vertex(&self, i: usize) -> Vector3<f64> {
        Vector3::new(self.data[3 * i], self.data[3 * i + 1], self.data[3 * i + 2])
    }

    #[inline]
    pub fn set_vertex(&mut self, i: usize, v: Vector3<f64>) {
        self.data[3 * i] = v.x;
        self.data[3 * i + 1] = v.y;
        self.data[3 * i + 2] = v.z;
    }

    #[inline]
    pub fn vertex_count(&self) -> usize {
        self.data.len() / 3
    }

    /// Number of scalar degrees of freedom (3 per vertex).
    #[inline]
    pub fn dof(&self) -> usize {
        self.data.len()
    }

    #[inline]
    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    #[inline]
    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }
}

/// Rest-state tangent frame of a boundary triangle.
#[derive(Debug, Clone)]
pub struct SurfaceBasis {
    /// Orthonormal tangents: first along edge `x1 - x0`, second the
    /// Gram-Schmidt complement of `x2 - x0`.
    pub tangents: Matrix3x2<f64>,
    /// Inverse of the 2x2 rest edge matrix expressed in the tangent frame.
    pub inv_shape: Matrix2<f64>,
    /// Rest area of the triangle (m^2).
    pub rest_area: f64,
}

/// Immutable tetrahedral mesh with precomputed rest-state data.
#[derive(Debug, Clone)]
pub struct TetMesh {
    vertices: Vec<Vector3<f64>>,
    tets: Vec<[usize; 4]>,
    rest_volumes: Vec<f64>,
    rest_inverse_shape: Vec<Matrix3<f64>>,
    surface: Vec<[usize; 3]>,
    surface_rest_basis: Vec<SurfaceBasis>,
    total_rest_volume: f64,
}

/// Signed tetrahedron volume `(1/6) v3 . (v1 x v2)` with `vi = xi - x0`.
///
/// The 1/6 factor keeps constraints and `J = det F` in physical units; it is
/// applied consistently everywhere volumes enter energies or constraints.
/// Inverted tets are allowed and yield a negative result.
#[inline]
pub fn tet_signed_volume(
    x0: &Vector3<f64>,
    x1: &Vector3<f64>,
    x2: &Vector3<f64>,
    x3: &Vector3<f64>,
) -> f64 {
    let v1 = x1 - x0;
    let v2 = x2 - x0;
    let v3 = x3 - x0;
    v3.dot(&v1.cross(&v2)) / 6.0
}

impl TetMesh {
    /// Builds a mesh and precomputes rest-state data.
    ///
    /// Rejects tets with non-positive rest volume and faces shared by more
    /// than two tets.
    pub fn new(vertices: Vec<Vector3<f64>>, tets: Vec<[usize; 4]>) -> Result<Self, MeshError> {
        for (index, tet) in tets.iter().enumerate() {
            for &vertex in tet {
                if vertex >= vertices.len() {
                    return Err(MeshError::IndexOutOfRange {
                        index,
                        vertex,
                        count: vertices.len(),
                    });
                }
            }
        }

        let mut rest_volumes = Vec::with_capacity(tets.len());
        let mut rest_inverse_shape = Vec::with_capacity(tets.len());
        let mut total_rest_volume = 0.0;
        for (index, tet) in tets.iter().enumerate() {
            let [a, b, c, d] = *tet;
            let volume = tet_signed_volume(&vertices[a], &vertices[b], &vertices[c], &vertices[d]);
            if !(volume > 0.0) {
                return Err(MeshError::DegenerateTet { index, volume });
            }
            let dm = shape_matrix(&vertices[a], &vertices[b], &vertices[c], &vertices[d]);
            // Invertible because the volume check passed.
            let inv = dm.try_inverse().expect("positive-volume tet has invertible shape matrix");
            rest_volumes.push(volume);
            rest_inverse_shape.push(inv);
            total_rest_volume += volume;
        }

        let surface = extract_surface(&tets)?;
        let surface_rest_basis = surface
            .iter()
            .map(|&[a, b, c]| surface_basis(&vertices[a], &vertices[b], &vertices[c]))
            .collect();

        Ok(TetMesh {
            vertices,
            tets,
            rest_volumes,
            rest_inverse_shape,
            surface,
            surface_rest_basis,
            total_rest_volume,
        })
    }

    #[inline]
    pub fn vertex_count(&self) -> usize {
        self.vertices.len()
    }

    #[inline]
    pub fn tet_count(&self) -> usize {
        self.tets.len()
    }

    #[inline]
    pub fn vertices(&self) -> &[Vector3<f64>] {
        &self.vertices
    }

    #[inline]
    pub fn tets(&self) -> &[[usize; 4]] {
        &self.tets
    }

    #[inline]
    pub fn rest_volume(&self, e: usize) -> f64 {
        self.rest_volumes[e]
    }

    #[inline]
    pub fn rest_volumes(&self) -> &[f64] {
        &self.rest_volumes
    }

    #[inline]
    pub fn rest_inverse_shape(&self, e: usize) -> &Matrix3<f64> {
        &self.rest_inverse_shape[e]
    }

    #[inline]
    pub fn total_rest_volume(&self) -> f64 {
        self.total_rest_volume
    }

    /// Oriented boundary triangles (outward normals).
    #[inline]
    pub fn surface(&self) -> &[[usize; 3]] {
        &self.surface
    }

    #[inline]
    pub fn surface_rest_basis(&self, t: usize) -> &SurfaceBasis {
        &self.surface_rest_basis[t]
    }

    /// Reference configuration as a stacked position vector.
    pub fn reference_positions(&self) -> Displacement {
        Displacement::from_vertices(&self.vertices)
    }

    /// Current signed volume of tet `e` under positions `x`.
    #[inline]
    pub fn tet_volume(&self, x: &Displacement, e: usize) -> f64 {
        let [a, b, c, d] = self.tets[e];
        tet_signed_volume(&x.vertex(a), &x.vertex(b), &x.vertex(c), &x.vertex(d))
    }

    /// Sum of signed tet volumes under positions `x`.
    pub fn total_volume(&self, x: &Displacement) -> f64 {
        (0..self.tet_count()).map(|e| self.tet_volume(x, e)).sum()
    }
}

fn shape_matrix(
    x0: &Vector3<f64>,
    x1: &Vector3<f64>,
    x2: &Vector3<f64>,
    x3: &Vector3<f64>,
) -> Matrix3<f64> {
    Matrix3::from_columns(&[x1 - x0, x2 - x0, x3 - x0])
}

/// Deformation gradient `F = Ds(x, e) * Dm^-1[e]` of tet `e`.
pub fn deformation_gradient(mesh: &TetMesh, x: &Displacement, e: usize) -> Matrix3<f64> {
    let [a, b, c, d] = mesh.tets[e];
    let ds = shape_matrix(&x.vertex(a), &x.vertex(b), &x.vertex(c), &x.vertex(d));
    ds * mesh.rest_inverse_shape[e]
}

/// Reduced 3x2 deformation gradient of boundary triangle `t`.
///
/// Columns span the deformed tangent plane; `sqrt(det(F~^T F~))` is the
/// deformed-to-rest area ratio.
pub fn reduced_deformation_gradient(mesh: &TetMesh, x: &Displacement, t: usize) -> Matrix3x2<f64> {
    let [a, b, c] = mesh.surface[t];
    let ds = Matrix3x2::from_columns(&[x.vertex(b) - x.vertex(a), x.vertex(c) - x.vertex(a)]);
    ds * mesh.surface_rest_basis[t].inv_shape
}

fn surface_basis(x0: &Vector3<f64>, x1: &Vector3<f64>, x2: &Vector3<f64>) -> SurfaceBasis {
    let e1 = x1 - x0;
    let e2 = x2 - x0;
    let t1 = e1.normalize();
    let t2 = (e2 - t1 * t1.dot(&e2)).normalize();
    let tangents = Matrix3x2::from_columns(&[t1, t2]);
    let shape = Matrix2::new(e1.norm(), t1.dot(&e2), 0.0, t2.dot(&e2));
    let inv_shape = shape
        .try_inverse()
        .expect("boundary triangle of a non-degenerate tet has positive area");
    SurfaceBasis {
        tangents,
        inv_shape,
        rest_area: 0.5 * e1.cross(&e2).norm(),
    }
}

/// Outward-oriented faces of a positively oriented tet.
#[inline]
pub(crate) fn outward_faces(tet: &[usize; 4]) -> [[usize; 3]; 4] {
    let [a, b, c, d] = *tet;
    [[b, c, d], [a, d, c], [a, b, d], [a, c, b]]
}

fn extract_surface(tets: &[[usize; 4]]) -> Result<Vec<[usize; 3]>, MeshError> {
    let mut faces: BTreeMap<[usize; 3], (usize, [usize; 3])> = BTreeMap::new();
    for tet in tets {
        for face in outward_faces(tet) {
            let mut key = face;
            key.sort_unstable();
            let entry = faces.entry(key).or_insert((0, face));
            entry.0 += 1;
            if entry.0 > 2 {
                return Err(MeshError::NonManifoldFace { face: key });
            }
        }
    }
    Ok(faces
        .into_values()
        .filter(|(count, _)| *count == 1)
        .map(|(_, oriented)| oriented)
        .collect())
}

/// Two equal-volume tets sharing a face, for the paired compression setups.
///
/// Vertices 0..=2 form the shared face; vertex 3 is the apex of tet 0 and
/// vertex 4 the apex of tet 1, mirrored through the face plane so both rest
/// volumes match exactly. The shared face is tilted so that squashing tet 0
/// onto the ground plane `z = 0` leaves the face non-degenerate.
pub fn make_two_tet() -> TetMesh {
    let g0 = Vector3::new(0.0, 0.0, 0.0);
    let g1 = Vector3::new(1.0, 0.0, 0.0);
    let s = Vector3::new(0.5, 0.75, 1.0);
    let centroid = (g0 + g1 + s) / 3.0;
    let normal = (g1 - g0).cross(&(s - g0)).normalize();
    let offset = 0.5;
    let apex0 = centroid + normal * offset;
    let apex1 = centroid - normal * offset;
    let vertices = vec![g0, g1, s, apex0, apex1];
    let tets = vec![[0, 1, 2, 3], [0, 2, 1, 4]];
    TetMesh::new(vertices, tets).expect("two-tet reference geometry is valid")
}

/// Regular grid of `nx x ny x nz` vertices spanning `lx x ly x lz` meters,
/// each cell split into five tets with alternating parity so neighbouring
/// cells share conforming diagonal faces.
pub fn make_grid(
    nx: usize,
    ny: usize,
    nz: usize,
    lx: f64,
    ly: f64,
    lz: f64,
) -> Result<TetMesh, MeshError> {
    if nx < 2 || ny < 2 || nz < 2 {
        return Err(MeshError::InvalidGrid { nx, ny, nz });
    }
    if !(lx > 0.0 && ly > 0.0 && lz > 0.0) {
        return Err(MeshError::InvalidExtent { lx, ly, lz });
    }

    let idx = |i: usize, j: usize, k: usize| i + nx * (j + ny * k);
    let mut vertices = Vec::with_capacity(nx * ny * nz);
    for k in 0..nz {
        for j in 0..ny {
            for i in 0..nx {
                vertices.push(Vector3::new(
                    lx * i as f64 / (nx - 1) as f64,
                    ly * j as f64 / (ny - 1) as f64,
                    lz * k as f64 / (nz - 1) as f64,
                ));
            }
        }
    }

    let mut tets = Vec::with_capacity(5 * (nx - 1) * (ny - 1) * (nz - 1));
    for k in 0..nz - 1 {
        for j in 0..ny - 1 {
            for i in 0..nx - 1 {
                // Corner p_xyz of the cell, bits meaning +1 along that axis.
                let p000 = idx(i, j, k);
                let p100 = idx(i + 1, j, k);
                let p010 = idx(i, j + 1, k);
                let p110 = idx(i + 1, j + 1, k);
                let p001 = idx(i, j, k + 1);
                let p101 = idx(i + 1, j, k + 1);
                let p011 = idx(i, j + 1, k + 1);
                let p111 = idx(i + 1, j + 1, k + 1);
                let cell: [[usize; 4]; 5] = if (i + j + k) % 2 == 0 {
                    [
                        [p000, p110, p011, p101],
                        [p100, p000, p110, p101],
                        [p010, p000, p011, p110],
                        [p001, p000, p101, p011],
                        [p111, p110, p101, p011],
                    ]
                } else {
                    [
                        [p100, p010, p001, p111],
                        [p000, p100, p010, p001],
                        [p110, p100, p010, p111],
                        [p101, p100, p001, p111],
                        [p011, p010, p001, p111],
                    ]
                };
                for mut tet in cell {
                    let v = tet_signed_volume(
                        &vertices[tet[0]],
                        &vertices[tet[1]],
                        &vertices[tet[2]],
                        &vertices[tet[3]],
                    );
                    if v < 0.0 {
                        tet.swap(2, 3);
                    }
                    tets.push(tet);
                }
            }
        }
    }

    TetMesh::new(vertices, tets)
}

/// Reads the text tet-mesh format.
///
/// Line 1: `tetmesh 1`; line 2: vertex count; then one `x y z` per vertex;
/// then the tet count and one `i0 i1 i2 i3` per tet (0-based indices).
pub fn import_mesh(path: impl AsRef<Path>) -> Result<TetMesh, MeshError> {
    let text = std::fs::read_to_string(path)?;
    parse_mesh(&text)
}

pub(crate) fn parse_mesh(text: &str) -> Result<TetMesh, MeshError> {
    let parse_err = |line: usize, message: &str| MeshError::Parse {
        line,
        message: message.to_string(),
    };

    let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l.trim()));
    let mut next_content = || lines.by_ref().find(|(_, l)| !l.is_empty());

    let (line, header) = next_content().ok_or_else(|| parse_err(1, "no vertices"))?;
    if header != "tetmesh 1" {
        return Err(parse_err(line, "expected header \"tetmesh 1\""));
    }

    let (line, count_str) = next_content().ok_or_else(|| parse_err(line, "no vertices"))?;
    let vertex_count: usize = count_str
        .parse()
        .map_err(|_| parse_err(line, "invalid vertex count"))?;
    if vertex_count == 0 {
        return Err(parse_err(line, "no vertices"));
    }

    let mut vertices = Vec::with_capacity(vertex_count);
    let mut last_line = line;
    for _ in 0..vertex_count {
        let (line, l) = next_content().ok_or_else(|| parse_err(last_line, "unexpected end of file in vertex list"))?;
        last_line = line;
        let coords: Vec<f64> = l
            .split_whitespace()
            .map(|t| t.parse::<f64>())
            .collect::<Result<_, _>>()
            .map_err(|_| parse_err(line, "invalid vertex coordinate"))?;
        if coords.len() != 3 {
            return Err(parse_err(line, "expected three coordinates"));
        }
        vertices.push(Vector3::new(coords[0], coords[1], coords[2]));
    }

    let (line, count_str) = next_content().ok_or_else(|| parse_err(last_line, "missing tetrahedron count"))?;
    let tet_count: usize = count_str
        .parse()
        .map_err(|_| parse_err(line, "invalid tetrahedron count"))?;
    last_line = line;

    let mut tets = Vec::with_capacity(tet_count);
    for _ in 0..tet_count {
        let (line, l) = next_content().ok_or_else(|| parse_err(last_line, "unexpected end of file in tetrahedron list"))?;
        last_line = line;
        let ids: Vec<usize> = l
            .split_whitespace()
            .map(|t| t.parse::<usize>())
            .collect::<Result<_, _>>()
            .map_err(|_| parse_err(line, "invalid tetrahedron index"))?;
        if ids.len() != 4 {
            return Err(parse_err(line, "expected four vertex indices"));
        }
        for &id in &ids {
            if id >= vertex_count {
                return Err(MeshError::Parse {
                    line,
                    message: format!("vertex index {id} out of range ({vertex_count} vertices)"),
                });
            }
        }
        tets.push([ids[0], ids[1], ids[2], ids[3]]);
    }

    TetMesh::new(vertices, tets)
}

/// Writes the text tet-mesh format; floats use shortest round-trip form.
pub fn export_mesh(mesh: &TetMesh, path: impl AsRef<Path>) -> Result<(), MeshError> {
    let mut out = String::new();
    let _ = writeln!(out, "tetmesh 1");
    let _ = writeln!(out, "{}", mesh.vertex_count());
    for v in mesh.vertices() {
        let _ = writeln!(out, "{} {} {}", v.x, v.y, v.z);
    }
    let _ = writeln!(out, "{}", mesh.tet_count());
    for t in mesh.tets() {
        let _ = writeln!(out, "{} {} {} {}", t[0], t[1], t[2], t[3]);
    }
    std::fs::write(path, out)?;
    Ok(())
}

/// Exports the deformed boundary surface as an OBJ triangle mesh.
pub fn export_surface(
    mesh: &TetMesh,
    x: &Displacement,
    path: impl AsRef<Path>,
) -> Result<(), MeshError> {
    let mut out = String::new();
    for i in 0..mesh.vertex_count() {
        let v = x.vertex(i);
        let _ = writeln!(out, "v {} {} {}", v.x, v.y, v.z);
    }
    for [a, b, c] in mesh.surface() {
        let _ = writeln!(out, "f {} {} {}", a + 1, b + 1, c + 1);
    }
    std::fs::write(path, out)?;
    Ok(())
}
