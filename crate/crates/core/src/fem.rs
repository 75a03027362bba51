//! P1 finite elements on a uniform right-angled triangulation of the unit square.

use crate::linalg::CsrMatrix;
use crate::{Error, Real, Result};

/// Uniform mesh of `[0,1]²` with `n` cells per side, each cell split along its
/// lower-left to upper-right diagonal.
///
/// Vertex `(i, j)` sits at `(i h, j h)` and has index `j (n+1) + i`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct StructuredMesh {
    n: usize,
}

impl StructuredMesh {
    pub fn new(n: usize) -> Result<Self> {
        if n < 2 {
            return Err(Error::InvalidParameter(format!(
                "mesh needs at least 2 cells per side, got {n}"
            )));
        }
        Ok(StructuredMesh { n })
    }

    pub fn cells_per_side(&self) -> usize {
        self.n
    }

    pub fn h(&self) -> f64 {
        1.0 / self.n as f64
    }

    pub fn num_vertices(&self) -> usize {
        (self.n + 1) * (self.n + 1)
    }

    pub fn num_triangles(&self) -> usize {
        2 * self.n * self.n
    }

    pub fn vertex(&self, v: usize) -> (f64, f64) {
        let m = self.n + 1;
        let h = self.h();
        ((v % m) as f64 * h, (v / m) as f64 * h)
    }

    pub fn vertices(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        (0..self.num_vertices()).map(|v| self.vertex(v))
    }

    pub fn is_boundary(&self, v: usize) -> bool {
        let m = self.n + 1;
        let (i, j) = (v % m, v / m);
        i == 0 || j == 0 || i == self.n || j == self.n
    }

    /// Counter-clockwise vertex triples.
    pub fn triangles(&self) -> Vec<[usize; 3]> {
        let m = self.n + 1;
        let mut tris = Vec::with_capacity(self.num_triangles());
        for j in 0..self.n {
            for i in 0..self.n {
                let v00 = j * m + i;
                let v10 = v00 + 1;
                let v01 = v00 + m;
                let v11 = v01 + 1;
                tris.push([v00, v10, v11]);
                tris.push([v00, v11, v01]);
            }
        }
        tris
    }

    /// Signed area of a triangle.
    pub fn signed_area(&self, tri: [usize; 3]) -> f64 {
        let (x0, y0) = self.vertex(tri[0]);
        let (x1, y1) = self.vertex(tri[1]);
        let (x2, y2) = self.vertex(tri[2]);
        0.5 * ((x1 - x0) * (y2 - y0) - (x2 - x0) * (y1 - y0))
    }
}

/// Continuous P1 space with homogeneous Dirichlet conditions.
///
/// Interior vertex `(i, j)` carries dof `(j-1)(n-1) + (i-1)`.
#[derive(Clone, Debug)]
pub struct FeSpace {
    mesh: StructuredMesh,
    vertex_dof: Vec<Option<usize>>,
    dof_vertex: Vec<usize>,
}

impl FeSpace {
    pub fn new(mesh: StructuredMesh) -> Self {
        let mut vertex_dof = vec![None; mesh.num_vertices()];
        let mut dof_vertex = Vec::new();
        for (v, slot) in vertex_dof.iter_mut().enumerate() {
            if !mesh.is_boundary(v) {
                *slot = Some(dof_vertex.len());
                dof_vertex.push(v);
            }
        }
        FeSpace {
            mesh,
            vertex_dof,
            dof_vertex,
        }
    }

    /// Space on the mesh with `n` cells per side.
    pub fn unit_square(n: usize) -> Result<Self> {
        Ok(Self::new(StructuredMesh::new(n)?))
    }

    pub fn mesh(&self) -> &StructuredMesh {
        &self.mesh
    }

    pub fn ndofs(&self) -> usize {
        self.dof_vertex.len()
    }

    pub fn dof_of_vertex(&self, v: usize) -> Option<usize> {
        self.vertex_dof[v]
    }

    pub fn vertex_of_dof(&self, d: usize) -> usize {
        self.dof_vertex[d]
    }

    /// Samples `f` at every mesh vertex.
    pub fn interpolate_vertices<T: Real>(&self, f: impl Fn(f64, f64) -> f64) -> Vec<T> {
        self.mesh.vertices().map(|(x, y)| T::lit(f(x, y))).collect()
    }

    /// Samples `f` at the interior dofs.
    pub fn interpolate<T: Real>(&self, f: impl Fn(f64, f64) -> f64) -> Vec<T> {
        self.dof_vertex
            .iter()
            .map(|&v| {
                let (x, y) = self.mesh.vertex(v);
                T::lit(f(x, y))
            })
            .collect()
    }

    /// Restricts a vertex vector to interior dofs.
    pub fn restrict<T: Real>(&self, vertex_values: &[T]) -> Vec<T> {
        self.dof_vertex.iter().map(|&v| vertex_values[v]).collect()
    }
}

/// Tracking target `sin(πx) sin(πy)` at the interior dofs.
pub fn default_target<T: Real>(space: &FeSpace) -> Vec<T> {
    use std::f64::consts::PI;
    space.interpolate(|x, y| (PI * x).sin() * (PI * y).sin())
}

fn local_mass(area: f64) -> [[f64; 3]; 3] {
    let d = area / 6.0;
    let o = area / 12.0;
    [[d, o, o], [o, d, o], [o, o, d]]
}

fn local_stiffness(mesh: &StructuredMesh, tri: [usize; 3]) -> [[f64; 3]; 3] {
    let p: Vec<(f64, f64)> = tri.iter().map(|&v| mesh.vertex(v)).collect();
    let area = mesh.signed_area(tri);
    let grad = |k: usize| {
        let (_, ya) = p[(k + 1) % 3];
        let (_, yb) = p[(k + 2) % 3];
        let (xa, _) = p[(k + 1) % 3];
        let (xb, _) = p[(k + 2) % 3];
        ((ya - yb) / (2.0 * area), (xb - xa) / (2.0 * area))
    };
    let g = [grad(0), grad(1), grad(2)];
    let mut k = [[0.0; 3]; 3];
    for a in 0..3 {
        for b in 0..3 {
            k[a][b] = area * (g[a].0 * g[b].0 + g[a].1 * g[b].1);
        }
    }
    k
}

fn assemble<T: Real>(
    space: &FeSpace,
    interior_only: bool,
    mut local: impl FnMut(usize, [usize; 3]) -> Result<[[f64; 3]; 3]>,
) -> Result<CsrMatrix<T>> {
    let mesh = space.mesh();
    let index = |v: usize| {
        if interior_only {
            space.dof_of_vertex(v)
        } else {
            Some(v)
        }
    };
    let dim = if interior_only {
        space.ndofs()
    } else {
        mesh.num_vertices()
    };
    let mut trips = Vec::with_capacity(9 * mesh.num_triangles());
    for (t, tri) in mesh.triangles().into_iter().enumerate() {
        let loc = local(t, tri)?;
        for a in 0..3 {
            let Some(r) = index(tri[a]) else { continue };
            for b in 0..3 {
                if let Some(c) = index(tri[b]) {
                    trips.push((r, c, T::lit(loc[a][b])));
                }
            }
        }
    }
    Ok(CsrMatrix::from_triplets(dim, dim, &trips))
}

/// Mass matrix `M_s` over the interior dofs.
pub fn assemble_mass<T: Real>(space: &FeSpace) -> CsrMatrix<T> {
    let mesh = space.mesh();
    assemble(space, true, |_, tri| Ok(local_mass(mesh.signed_area(tri))))
        .expect("mass assembly is total")
}

/// Mass matrix over all mesh vertices, boundary included.
pub fn assemble_mass_full<T: Real>(space: &FeSpace) -> CsrMatrix<T> {
    let mesh = space.mesh();
    assemble(space, false, |_, tri| Ok(local_mass(mesh.signed_area(tri))))
        .expect("mass assembly is total")
}

/// Stiffness matrix of `-div(a ∇·)` over the interior dofs.
///
/// `coeff` holds the coefficient at every mesh vertex; each triangle uses the
/// value at its centroid, i.e. the mean of its three vertex values.
pub fn assemble_stiffness<T: Real>(space: &FeSpace, coeff: &[T]) -> Result<CsrMatrix<T>> {
    let mesh = space.mesh();
    if coeff.len() != mesh.num_vertices() {
        return Err(Error::dim(
            "stiffness coefficient",
            mesh.num_vertices(),
            coeff.len(),
        ));
    }
    assemble(space, true, |t, tri| {
        let c = (coeff[tri[0]] + coeff[tri[1]] + coeff[tri[2]]).as_f64() / 3.0;
        if !(c > 0.0) {
            return Err(Error::NonPositiveCoefficient { index: t, value: c });
        }
        let mut k = local_stiffness(mesh, tri);
        k.iter_mut().flatten().for_each(|x| *x *= c);
        Ok(k)
    })
}

/// Stiffness matrix `K` of the Laplacian over the interior dofs.
pub fn assemble_laplacian<T: Real>(space: &FeSpace) -> CsrMatrix<T> {
    let mesh = space.mesh();
    assemble(space, true, |_, tri| Ok(local_stiffness(mesh, tri))).expect("unit coefficient")
}
