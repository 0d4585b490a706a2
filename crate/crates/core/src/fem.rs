//! Galerkin P1 discretization of `-div(a grad u) = f` with homogeneous
//! Dirichlet data, and the H1 Gram-norm machinery used by every error metric.
//!
//! Degrees of freedom include the boundary vertices, so vectors always have
//! length `n^2`. Dirichlet conditions are imposed by replacing boundary rows
//! and columns of the stiffness matrix with identity rows/columns and zeroing
//! the matching load entries.
//!
//! The diffusion coefficient enters as one value per triangle (evaluated at
//! the barycenter). P1 gradients are constant on each triangle, so the
//! element stiffness is exact for that piecewise-constant coefficient. The
//! load uses one-point barycenter quadrature.

use alloc::sync::Arc;
use alloc::vec;
use alloc::vec::Vec;
use core::ops::{Deref, DerefMut};

use crate::error::{invalid, Error, Result};
use crate::mesh::Mesh;
use crate::sparse::{conjugate_gradient, CsrMatrix, EnvelopeCholesky};

/// Largest system solved with the direct factorization; larger ones use CG.
pub const DIRECT_SOLVE_MAX_DOFS: usize = 20_000;
/// Relative residual target for the iterative fallback.
pub const CG_REL_TOL: f64 = 1e-10;

/// Coefficient vector of a finite element function.
#[derive(Debug, Clone, PartialEq)]
pub struct FeVector(pub Vec<f64>);

impl FeVector {
    pub fn zeros(dofs: usize) -> Self {
        Self(vec![0.0; dofs])
    }

    pub fn coeffs(&self) -> &[f64] {
        &self.0
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }
}

impl Deref for FeVector {
    type Target = [f64];
    fn deref(&self) -> &[f64] {
        &self.0
    }
}

impl DerefMut for FeVector {
    fn deref_mut(&mut self) -> &mut [f64] {
        &mut self.0
    }
}

impl From<Vec<f64>> for FeVector {
    fn from(v: Vec<f64>) -> Self {
        Self(v)
    }
}

/// Assembled and constrained linear system for one coefficient.
#[derive(Debug, Clone)]
pub struct FemSystem {
    pub stiffness: CsrMatrix,
    pub load: Vec<f64>,
    pub gram: Arc<CsrMatrix>,
    constrained: Vec<bool>,
}

impl FemSystem {
    pub fn dofs(&self) -> usize {
        self.load.len()
    }

    /// `|B u - f| / |f|` (or `|B u|` when `f = 0`).
    pub fn relative_residual(&self, u: &[f64]) -> f64 {
        let bu = self.stiffness.mul_vec(u);
        let mut num = 0.0;
        let mut den = 0.0;
        for (bi, fi) in bu.iter().zip(&self.load) {
            num += (bi - fi) * (bi - fi);
            den += fi * fi;
        }
        if den == 0.0 {
            libm::sqrt(num)
        } else {
            libm::sqrt(num / den)
        }
    }
}

/// H1 Gram matrix `G_ij = int (phi_i phi_j + grad phi_i . grad phi_j)` on all
/// `n^2` dofs, with the exact P1 element mass matrix.
pub fn assemble_gram(mesh: &Mesh) -> CsrMatrix {
    let mut triplets = Vec::with_capacity(9 * mesh.triangles().len());
    for (t, tri) in mesh.triangles().iter().enumerate() {
        let (grads, area) = mesh.p1_gradients(t);
        for a in 0..3 {
            for b in 0..3 {
                let mass = if a == b { area / 6.0 } else { area / 12.0 };
                let stiff = area * (grads[a][0] * grads[b][0] + grads[a][1] * grads[b][1]);
                triplets.push((tri[a], tri[b], mass + stiff));
            }
        }
    }
    CsrMatrix::from_triplets(mesh.dofs(), mesh.dofs(), &triplets)
}

/// Assembles stiffness and load for a per-triangle coefficient and applies
/// the Dirichlet constraints. Builds a fresh Gram matrix; use
/// [`assemble_system_with_gram`] to share one across many solves.
pub fn assemble_system<F>(mesh: &Mesh, coeff_at_barycenters: &[f64], rhs: F) -> Result<FemSystem>
where
    F: Fn([f64; 2]) -> f64,
{
    let gram = Arc::new(assemble_gram(mesh));
    assemble_system_with_gram(mesh, coeff_at_barycenters, rhs, gram)
}

pub fn assemble_system_with_gram<F>(
    mesh: &Mesh,
    coeff_at_barycenters: &[f64],
    rhs: F,
    gram: Arc<CsrMatrix>,
) -> Result<FemSystem>
where
    F: Fn([f64; 2]) -> f64,
{
    let ntri = mesh.triangles().len();
    if coeff_at_barycenters.len() != ntri {
        return Err(invalid("one coefficient value per triangle expected"));
    }
    if gram.nrows() != mesh.dofs() {
        return Err(invalid("Gram matrix does not match mesh"));
    }
    for (t, &a) in coeff_at_barycenters.iter().enumerate() {
        if !(a > 0.0) || !a.is_finite() {
            return Err(Error::EllipticityViolation { triangle: t, value: a });
        }
    }
    let dofs = mesh.dofs();
    let mut triplets = Vec::with_capacity(9 * ntri);
    let mut load = vec![0.0; dofs];
    for (t, tri) in mesh.triangles().iter().enumerate() {
        let (grads, area) = mesh.p1_gradients(t);
        let a_t = coeff_at_barycenters[t];
        for a in 0..3 {
            for b in 0..3 {
                let k = a_t * area * (grads[a][0] * grads[b][0] + grads[a][1] * grads[b][1]);
                triplets.push((tri[a], tri[b], k));
            }
        }
        let f_share = rhs(mesh.barycenter(t)) * area / 3.0;
        for &v in tri {
            load[v] += f_share;
        }
    }
    let mut stiffness = CsrMatrix::from_triplets(dofs, dofs, &triplets);
    let constrained = mesh.boundary_mask().to_vec();
    stiffness.constrain_identity(&constrained);
    for (l, &c) in load.iter_mut().zip(&constrained) {
        if c {
            *l = 0.0;
        }
    }
    Ok(FemSystem {
        stiffness,
        load,
        gram,
        constrained,
    })
}

/// Solves `B u = f`: envelope Cholesky up to [`DIRECT_SOLVE_MAX_DOFS`] dofs,
/// Jacobi-CG (tolerance [`CG_REL_TOL`], at most `50 sqrt(D)` iterations) beyond.
pub fn solve(system: &FemSystem) -> Result<FeVector> {
    let d = system.dofs();
    let mut u = if d <= DIRECT_SOLVE_MAX_DOFS {
        EnvelopeCholesky::factor(&system.stiffness)?.solve(&system.load)
    } else {
        let cap = libm::ceil(50.0 * libm::sqrt(d as f64)) as usize;
        conjugate_gradient(&system.stiffness, &system.load, CG_REL_TOL, cap)?.x
    };
    for (ui, &c) in u.iter_mut().zip(&system.constrained) {
        if c {
            *ui = 0.0;
        }
    }
    Ok(FeVector(u))
}

/// `sqrt(v^T G v)`, the H1 norm of the FE function with coefficients `v`.
pub fn gram_norm(v: &[f64], gram: &CsrMatrix) -> Result<f64> {
    if v.len() != gram.nrows() || gram.nrows() != gram.ncols() {
        return Err(invalid("vector length does not match Gram matrix"));
    }
    Ok(libm::sqrt(gram.quadratic_form(v).max(0.0)))
}

/// `|x1 - x2|_G / |x2|_G`.
pub fn relative_error(x1: &[f64], x2: &[f64], gram: &CsrMatrix) -> Result<f64> {
    if x1.len() != x2.len() {
        return Err(invalid("vectors differ in length"));
    }
    let reference = gram_norm(x2, gram)?;
    if reference == 0.0 {
        return Err(Error::DivisionByZero);
    }
    let diff: Vec<f64> = x1.iter().zip(x2).map(|(a, b)| a - b).collect();
    Ok(gram_norm(&diff, gram)? / reference)
}

// Degree-5 seven-point rule on the reference triangle (barycentric coords, weights sum to 1).
const QUAD7: [([f64; 3], f64); 7] = [
    ([1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0], 0.225),
    ([0.059715871789770, 0.470142064105115, 0.470142064105115], 0.132394152788506),
    ([0.470142064105115, 0.059715871789770, 0.470142064105115], 0.132394152788506),
    ([0.470142064105115, 0.470142064105115, 0.059715871789770], 0.132394152788506),
    ([0.797426985353087, 0.101286507323456, 0.101286507323456], 0.125939180544827),
    ([0.101286507323456, 0.797426985353087, 0.101286507323456], 0.125939180544827),
    ([0.101286507323456, 0.101286507323456, 0.797426985353087], 0.125939180544827),
];

/// H1 error `||u_h - u||_{H1}` against a known function, integrated with a
/// degree-5 rule per triangle.
pub fn h1_error<U, G>(mesh: &Mesh, u_h: &[f64], exact: U, exact_grad: G) -> Result<f64>
where
    U: Fn([f64; 2]) -> f64,
    G: Fn([f64; 2]) -> [f64; 2],
{
    if u_h.len() != mesh.dofs() {
        return Err(invalid("FE vector does not match mesh"));
    }
    let mut total = 0.0;
    for (t, tri) in mesh.triangles().iter().enumerate() {
        let (grads, area) = mesh.p1_gradients(t);
        let pts = mesh.triangle_coords(t);
        let vals = [u_h[tri[0]], u_h[tri[1]], u_h[tri[2]]];
        let gh = [
            vals[0] * grads[0][0] + vals[1] * grads[1][0] + vals[2] * grads[2][0],
            vals[0] * grads[0][1] + vals[1] * grads[1][1] + vals[2] * grads[2][1],
        ];
        for (lam, w) in QUAD7.iter() {
            let x = [
                lam[0] * pts[0][0] + lam[1] * pts[1][0] + lam[2] * pts[2][0],
                lam[0] * pts[0][1] + lam[1] * pts[1][1] + lam[2] * pts[2][1],
            ];
            let uh = lam[0] * vals[0] + lam[1] * vals[1] + lam[2] * vals[2];
            let e = uh - exact(x);
            let g = exact_grad(x);
            let ex = gh[0] - g[0];
            let ey = gh[1] - g[1];
            total += w * area * (e * e + ex * ex + ey * ey);
        }
    }
    Ok(libm::sqrt(total))
}
