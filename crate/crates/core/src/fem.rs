//! Linear triangle (P1) element operators and degree-of-freedom maps.

use rayon::prelude::*;

use crate::mesh::Mesh;
use crate::sparse::{Csr, Scalar, TripletBuilder};

/// Area and constant shape-function gradients of one triangle.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct P1 {
    pub area: f64,
    pub grad: [[f64; 2]; 3],
}

impl P1 {
    pub fn new(p: [[f64; 2]; 3]) -> Self {
        let det = (p[1][0] - p[0][0]) * (p[2][1] - p[0][1]) - (p[2][0] - p[0][0]) * (p[1][1] - p[0][1]);
        let inv = 1.0 / det;
        let grad = [
            [(p[1][1] - p[2][1]) * inv, (p[2][0] - p[1][0]) * inv],
            [(p[2][1] - p[0][1]) * inv, (p[0][0] - p[2][0]) * inv],
            [(p[0][1] - p[1][1]) * inv, (p[1][0] - p[0][0]) * inv],
        ];
        Self { area: 0.5 * det, grad }
    }

    /// Gradient of a field with nodal values `u`.
    pub fn gradient<T: Scalar>(&self, u: [T; 3]) -> [T; 2] {
        let mut g = [T::default(); 2];
        for (k, uk) in u.iter().enumerate() {
            g[0] += uk.scaled(self.grad[k][0]);
            g[1] += uk.scaled(self.grad[k][1]);
        }
        g
    }
}

pub fn elements(mesh: &Mesh) -> Vec<P1> {
    (0..mesh.triangles.len()).map(|e| P1::new(mesh.triangle_points(e))).collect()
}

fn assemble_scalar(mesh: &Mesh, local: impl Fn(usize, &P1) -> [[f64; 3]; 3] + Sync) -> Csr<f64> {
    let n = mesh.nodes.len();
    let blocks: Vec<[[f64; 3]; 3]> = (0..mesh.triangles.len())
        .into_par_iter()
        .map(|e| local(e, &P1::new(mesh.triangle_points(e))))
        .collect();
    let mut b = TripletBuilder::with_capacity(n, n, 9 * blocks.len());
    for (t, ke) in mesh.triangles.iter().zip(&blocks) {
        for i in 0..3 {
            for j in 0..3 {
                b.push(t[i], t[j], ke[i][j]);
            }
        }
    }
    b.build()
}

/// Consistent mass matrix `∫ μ N_i N_j dA` for areal density `μ`.
pub fn mass(mesh: &Mesh, areal_density: f64) -> Csr<f64> {
    assemble_scalar(mesh, |_, el| {
        let d = areal_density * el.area / 6.0;
        let o = areal_density * el.area / 12.0;
        [[d, o, o], [o, d, o], [o, o, d]]
    })
}

/// Row-sum lumped mass `∫ μ N_i dA`.
pub fn lumped_mass(mesh: &Mesh, areal_density: f64) -> Vec<f64> {
    let mut m = vec![0.0; mesh.nodes.len()];
    for (e, t) in mesh.triangles.iter().enumerate() {
        let w = areal_density * mesh.triangle_area(e) / 3.0;
        for &v in t {
            m[v] += w;
        }
    }
    m
}

/// `∫ ∇N_i · ∇N_j dA`.
pub fn laplace(mesh: &Mesh) -> Csr<f64> {
    assemble_scalar(mesh, |_, el| {
        let mut k = [[0.0; 3]; 3];
        for i in 0..3 {
            for j in 0..3 {
                k[i][j] = el.area * (el.grad[i][0] * el.grad[j][0] + el.grad[i][1] * el.grad[j][1]);
            }
        }
        k
    })
}

/// Membrane tension stiffness `h ∫ ∇N_iᵀ σ ∇N_j dA` with per-element stress
/// `(σxx, σyy, σxy)`.
pub fn tension(mesh: &Mesh, stress: &[[f64; 3]], thickness: f64) -> Csr<f64> {
    assert_eq!(stress.len(), mesh.triangles.len());
    assemble_scalar(mesh, |e, el| {
        let [sxx, syy, sxy] = stress[e];
        let mut k = [[0.0; 3]; 3];
        for i in 0..3 {
            let gi = el.grad[i];
            let sg = [sxx * gi[0] + sxy * gi[1], sxy * gi[0] + syy * gi[1]];
            for j in 0..3 {
                k[i][j] = thickness * el.area * (sg[0] * el.grad[j][0] + sg[1] * el.grad[j][1]);
            }
        }
        k
    })
}

/// Kronecker product with the 2×2 identity: node `i` owns dofs `2i`, `2i+1`.
pub fn expand_vector(a: &Csr<f64>) -> Csr<f64> {
    let mut b = TripletBuilder::with_capacity(2 * a.n_rows, 2 * a.n_cols, 2 * a.nnz());
    for r in 0..a.n_rows {
        for (c, v) in a.row(r) {
            b.push(2 * r, 2 * c, v);
            b.push(2 * r + 1, 2 * c + 1, v);
        }
    }
    b.build()
}

/// Plane-stress constitutive matrix acting on `(εxx, εyy, γxy)`.
pub fn plane_stress_matrix(youngs_modulus: f64, poisson_ratio: f64) -> [[f64; 3]; 3] {
    let c = youngs_modulus / (1.0 - poisson_ratio * poisson_ratio);
    [
        [c, c * poisson_ratio, 0.0],
        [c * poisson_ratio, c, 0.0],
        [0.0, 0.0, c * (1.0 - poisson_ratio) / 2.0],
    ]
}

fn strain_matrix(el: &P1) -> [[f64; 6]; 3] {
    let mut b = [[0.0; 6]; 3];
    for k in 0..3 {
        let [gx, gy] = el.grad[k];
        b[0][2 * k] = gx;
        b[1][2 * k + 1] = gy;
        b[2][2 * k] = gy;
        b[2][2 * k + 1] = gx;
    }
    b
}

/// Plane-stress elastic stiffness `h ∫ Bᵀ D B dA` on interleaved dofs.
pub fn plane_stress(mesh: &Mesh, youngs_modulus: f64, poisson_ratio: f64, thickness: f64) -> Csr<f64> {
    let d = plane_stress_matrix(youngs_modulus, poisson_ratio);
    let n = mesh.nodes.len();
    let blocks: Vec<[[f64; 6]; 6]> = (0..mesh.triangles.len())
        .into_par_iter()
        .map(|e| {
            let el = P1::new(mesh.triangle_points(e));
            let b = strain_matrix(&el);
            let mut db = [[0.0; 6]; 3];
            for r in 0..3 {
                for c in 0..6 {
                    db[r][c] = (0..3).map(|s| d[r][s] * b[s][c]).sum();
                }
            }
            let mut k = [[0.0; 6]; 6];
            for i in 0..6 {
                for j in 0..6 {
                    k[i][j] = thickness * el.area * (0..3).map(|s| b[s][i] * db[s][j]).sum::<f64>();
                }
            }
            k
        })
        .collect();
    let mut tb = TripletBuilder::with_capacity(2 * n, 2 * n, 36 * blocks.len());
    for (t, ke) in mesh.triangles.iter().zip(&blocks) {
        for i in 0..6 {
            for j in 0..6 {
                tb.push(2 * t[i / 2] + i % 2, 2 * t[j / 2] + j % 2, ke[i][j]);
            }
        }
    }
    tb.build()
}

/// Equivalent nodal forces `-h ∫ Bᵀ σ₀ dA` of a homogeneous initial stress.
pub fn initial_stress_load(mesh: &Mesh, sigma0: [f64; 3], thickness: f64) -> Vec<f64> {
    let mut f = vec![0.0; 2 * mesh.nodes.len()];
    for (e, t) in mesh.triangles.iter().enumerate() {
        let el = P1::new(mesh.triangle_points(e));
        let b = strain_matrix(&el);
        for i in 0..6 {
            let bs: f64 = (0..3).map(|s| b[s][i] * sigma0[s]).sum();
            f[2 * t[i / 2] + i % 2] -= thickness * el.area * bs;
        }
    }
    f
}

/// Element stresses `σ₀ + D B u` for interleaved nodal displacements `u`.
pub fn element_stress(mesh: &Mesh, u: &[f64], youngs_modulus: f64, poisson_ratio: f64, sigma0: [f64; 3]) -> Vec<[f64; 3]> {
    let d = plane_stress_matrix(youngs_modulus, poisson_ratio);
    (0..mesh.triangles.len())
        .into_par_iter()
        .map(|e| {
            let t = mesh.triangles[e];
            let el = P1::new(mesh.triangle_points(e));
            let b = strain_matrix(&el);
            let mut eps = [0.0; 3];
            for (s, row) in b.iter().enumerate() {
                eps[s] = (0..6).map(|i| row[i] * u[2 * t[i / 2] + i % 2]).sum();
            }
            let mut sig = sigma0;
            for r in 0..3 {
                sig[r] += (0..3).map(|s| d[r][s] * eps[s]).sum::<f64>();
            }
            sig
        })
        .collect()
}

/// Thin-plate bending stiffness built from the discrete Laplacian
/// `Δu ≈ -diag(m)⁻¹ S u`: `K_b = D Σ_r (S_r)ᴴ S_r / m_r` over rows `r` whose
/// node is not on a physical boundary. `S` and `m` must already be reduced.
pub fn bending<T: Scalar>(laplace: &Csr<T>, lumped: &[f64], row_active: &[bool], rigidity: f64) -> Csr<T> {
    let n = laplace.n_rows;
    let mut b = TripletBuilder::new(n, n);
    for r in 0..n {
        if !row_active[r] {
            continue;
        }
        let w = rigidity / lumped[r];
        let row: Vec<(usize, T)> = laplace.row(r).collect();
        for &(i, a) in &row {
            for &(j, c) in &row {
                b.push(i, j, a.conjugate() * c.scaled(w));
            }
        }
    }
    b.build()
}

/// Map from full nodal dofs to the reduced unknowns left after clamping and
/// periodic identification, with an optional Bloch phase per image.
#[derive(Debug, Clone)]
pub struct DofMap<T> {
    /// `full[i] = Σ w · reduced[j]` over the listed `(j, w)`; empty when clamped.
    pub reduce: Vec<Vec<(usize, T)>>,
    pub n_reduced: usize,
    /// Full dof that each reduced unknown stands for.
    pub owner: Vec<usize>,
    /// Dofs per node (1 for scalar, 2 for interleaved vector fields).
    pub components: usize,
}

impl<T: Scalar> DofMap<T> {
    /// `clamped[node]` removes the node; periodic images of a periodic mesh are
    /// tied to their source with weight `phase(shift)`.
    pub fn new(mesh: &Mesh, clamped: &[bool], components: usize, phase: impl Fn([i32; 2]) -> T) -> Self {
        let n = mesh.nodes.len();
        let mut image_of: Vec<Option<(usize, [i32; 2])>> = vec![None; n];
        for img in &mesh.periodic_images {
            image_of[img.node] = Some((img.source, img.shift));
        }
        let mut node_index: Vec<Option<usize>> = vec![None; n];
        let mut owner = Vec::new();
        let mut count = 0;
        for v in 0..n {
            if clamped[v] || image_of[v].is_some() {
                continue;
            }
            node_index[v] = Some(count);
            for c in 0..components {
                owner.push(components * v + c);
            }
            count += 1;
        }
        let mut reduce = vec![Vec::new(); components * n];
        for v in 0..n {
            let (target, w) = match image_of[v] {
                Some((src, shift)) => (src, phase(shift)),
                None => (v, T::from_f64(1.0)),
            };
            if clamped[target] || clamped[v] {
                continue;
            }
            if let Some(k) = node_index[target] {
                for c in 0..components {
                    reduce[components * v + c].push((components * k + c, w));
                }
            }
        }
        Self {
            reduce,
            n_reduced: components * count,
            owner,
            components,
        }
    }

    pub fn project(&self, a: &Csr<T>) -> Csr<T> {
        a.project(&self.reduce, self.n_reduced)
    }

    /// `Pᴴ f`.
    pub fn restrict(&self, f: &[T]) -> Vec<T> {
        let mut out = vec![T::default(); self.n_reduced];
        for (i, list) in self.reduce.iter().enumerate() {
            for &(j, w) in list {
                out[j] += w.conjugate() * f[i];
            }
        }
        out
    }

    /// `P x`.
    pub fn expand(&self, x: &[T]) -> Vec<T> {
        self.reduce
            .iter()
            .map(|list| list.iter().fold(T::default(), |acc, &(j, w)| acc + w * x[j]))
            .collect()
    }
}

/// Promotes a real matrix to the scalar type `T`.
pub fn promote<T: Scalar>(a: &Csr<f64>) -> Csr<T> {
    Csr {
        n_rows: a.n_rows,
        n_cols: a.n_cols,
        row_ptr: a.row_ptr.clone(),
        col_idx: a.col_idx.clone(),
        values: a.values.iter().map(|v| T::from_f64(*v)).collect(),
    }
}
