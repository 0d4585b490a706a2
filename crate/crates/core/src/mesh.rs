//! Structured triangulation of the unit square.
//!
//! Vertices are numbered row-major over the `n x n` lattice: vertex
//! `row * n + col` sits at `(col / (n-1), row / (n-1))`. Each lattice cell is
//! cut along its lower-left to upper-right diagonal.

use alloc::vec::Vec;

use crate::error::{invalid, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct Mesh {
    n: usize,
    vertices: Vec<[f64; 2]>,
    triangles: Vec<[usize; 3]>,
    boundary: Vec<bool>,
}

impl Mesh {
    /// Builds the lattice triangulation with `n` points per side.
    pub fn build(n: usize) -> Result<Self> {
        if n < 3 {
            return Err(invalid("mesh needs at least 3 points per side"));
        }
        let h = 1.0 / (n - 1) as f64;
        let mut vertices = Vec::with_capacity(n * n);
        let mut boundary = Vec::with_capacity(n * n);
        for row in 0..n {
            for col in 0..n {
                // Exact endpoints so the boundary test below is not at the mercy of rounding.
                let x = if col == n - 1 { 1.0 } else { col as f64 * h };
                let y = if row == n - 1 { 1.0 } else { row as f64 * h };
                vertices.push([x, y]);
                boundary.push(row == 0 || col == 0 || row == n - 1 || col == n - 1);
            }
        }
        let mut triangles = Vec::with_capacity(2 * (n - 1) * (n - 1));
        for row in 0..n - 1 {
            for col in 0..n - 1 {
                let ll = row * n + col;
                let lr = ll + 1;
                let ul = ll + n;
                let ur = ul + 1;
                // counter-clockwise orientation
                triangles.push([ll, lr, ur]);
                triangles.push([ll, ur, ul]);
            }
        }
        Ok(Self {
            n,
            vertices,
            triangles,
            boundary,
        })
    }

    /// Grid points per side.
    pub fn n(&self) -> usize {
        self.n
    }

    /// Number of degrees of freedom (`n^2`, boundary vertices included).
    pub fn dofs(&self) -> usize {
        self.vertices.len()
    }

    pub fn vertices(&self) -> &[[f64; 2]] {
        &self.vertices
    }

    pub fn triangles(&self) -> &[[usize; 3]] {
        &self.triangles
    }

    pub fn boundary_mask(&self) -> &[bool] {
        &self.boundary
    }

    pub fn is_boundary(&self, vertex: usize) -> bool {
        self.boundary[vertex]
    }

    pub fn triangle_coords(&self, t: usize) -> [[f64; 2]; 3] {
        let [a, b, c] = self.triangles[t];
        [self.vertices[a], self.vertices[b], self.vertices[c]]
    }

    /// Signed area of triangle `t` (positive for counter-clockwise).
    pub fn signed_area(&self, t: usize) -> f64 {
        let [p0, p1, p2] = self.triangle_coords(t);
        0.5 * ((p1[0] - p0[0]) * (p2[1] - p0[1]) - (p2[0] - p0[0]) * (p1[1] - p0[1]))
    }

    pub fn barycenter(&self, t: usize) -> [f64; 2] {
        let [p0, p1, p2] = self.triangle_coords(t);
        [
            (p0[0] + p1[0] + p2[0]) / 3.0,
            (p0[1] + p1[1] + p2[1]) / 3.0,
        ]
    }

    /// Barycenters of all triangles, in triangle order.
    pub fn barycenters(&self) -> Vec<[f64; 2]> {
        (0..self.triangles.len()).map(|t| self.barycenter(t)).collect()
    }

    /// Gradients of the three local P1 basis functions on triangle `t`
    /// together with the triangle area.
    pub fn p1_gradients(&self, t: usize) -> ([[f64; 2]; 3], f64) {
        let [p0, p1, p2] = self.triangle_coords(t);
        let det = (p1[0] - p0[0]) * (p2[1] - p0[1]) - (p2[0] - p0[0]) * (p1[1] - p0[1]);
        let grads = [
            [(p1[1] - p2[1]) / det, (p2[0] - p1[0]) / det],
            [(p2[1] - p0[1]) / det, (p0[0] - p2[0]) / det],
            [(p0[1] - p1[1]) / det, (p1[0] - p0[0]) / det],
        ];
        (grads, 0.5 * det)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_tiny_grids() {
        assert!(Mesh::build(2).is_err());
        assert!(Mesh::build(0).is_err());
    }

    #[test]
    fn smallest_lattice_counts() {
        let m = Mesh::build(3).unwrap();
        assert_eq!(m.dofs(), 9);
        assert_eq!(m.triangles().len(), 8);
        assert_eq!(m.boundary_mask().iter().filter(|&&b| b).count(), 8);
        assert!(!m.is_boundary(4));
    }

    #[test]
    fn paper_grid_dofs() {
        let m = Mesh::build(101).unwrap();
        assert_eq!(m.dofs(), 10201);
        assert_eq!(m.triangles().len(), 2 * 100 * 100);
    }

    #[test]
    fn areas_positive_and_tile_unit_square() {
        let m = Mesh::build(33).unwrap();
        let mut total = 0.0;
        for t in 0..m.triangles().len() {
            // shoelace, computed independently of signed_area
            let [a, b, c] = m.triangle_coords(t);
            let shoelace = 0.5
                * (a[0] * b[1] - b[0] * a[1] + b[0] * c[1] - c[0] * b[1] + c[0] * a[1]
                    - a[0] * c[1]);
            assert!(shoelace > 0.0);
            assert!((shoelace - m.signed_area(t)).abs() < 1e-15);
            total += shoelace;
        }
        assert!((total - 1.0).abs() < 1e-12);
    }

    #[test]
    fn boundary_mask_matches_coordinates() {
        let m = Mesh::build(7).unwrap();
        for (v, p) in m.vertices().iter().enumerate() {
            let on_edge = p.iter().any(|&c| c == 0.0 || c == 1.0);
            assert_eq!(on_edge, m.is_boundary(v));
        }
    }

    #[test]
    fn p1_gradients_sum_to_zero() {
        let m = Mesh::build(5).unwrap();
        for t in 0..m.triangles().len() {
            let (g, area) = m.p1_gradients(t);
            assert!(area > 0.0);
            for d in 0..2 {
                assert!((g[0][d] + g[1][d] + g[2][d]).abs() < 1e-12);
            }
        }
    }
}
