//! Training and test data: pairs of a parameter vector and the FE solution
//! of the corresponding diffusion problem with right-hand side
//! [`crate::default_rhs`].

use alloc::boxed::Box;
use alloc::sync::Arc;
use alloc::vec::Vec;

use crate::coefficients::ParametricFamily;
use crate::error::{invalid, Error, Result};
use crate::fem::{self, FemSystem};
use crate::mesh::Mesh;
use crate::sparse::CsrMatrix;

#[derive(Debug, Clone, PartialEq)]
pub struct Record {
    pub y: Vec<f64>,
    pub u: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub family: ParametricFamily,
    pub mesh_n: usize,
    pub dofs: usize,
    pub seed: u64,
    pub records: Vec<Record>,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// Dataset made of the first `count` records.
    pub fn prefix(&self, count: usize) -> Result<Self> {
        if count == 0 || count > self.len() {
            return Err(invalid("prefix length out of range"));
        }
        Ok(Self {
            records: self.records[..count].to_vec(),
            ..self.clone()
        })
    }
}

/// Solver context shared by every record of one (family, mesh) pair. The
/// Gram matrix is assembled once.
#[derive(Debug, Clone)]
pub struct Generator {
    family: ParametricFamily,
    mesh: Mesh,
    gram: Arc<CsrMatrix>,
}

impl Generator {
    pub fn new(family: ParametricFamily, mesh_n: usize) -> Result<Self> {
        family.validate()?;
        let mesh = Mesh::build(mesh_n)?;
        let gram = Arc::new(fem::assemble_gram(&mesh));
        Ok(Self { family, mesh, gram })
    }

    pub fn family(&self) -> &ParametricFamily {
        &self.family
    }

    pub fn mesh(&self) -> &Mesh {
        &self.mesh
    }

    pub fn gram(&self) -> &Arc<CsrMatrix> {
        &self.gram
    }

    /// Assembled, constrained system for parameter `y`.
    pub fn system(&self, y: &[f64]) -> Result<FemSystem> {
        let coeff = self.family.at_barycenters(y, &self.mesh)?;
        fem::assemble_system_with_gram(&self.mesh, &coeff, crate::default_rhs, self.gram.clone())
    }

    pub fn solve(&self, y: &[f64]) -> Result<Vec<f64>> {
        Ok(fem::solve(&self.system(y)?)?.into_inner())
    }

    /// Record `index` of the stream keyed by `seed`.
    pub fn record(&self, seed: u64, index: usize) -> Result<Record> {
        let y = self.family.sample_at(seed, index as u64);
        self.solve(&y)
            .map(|u| Record { y, u })
            .map_err(|e| Error::Sample {
                index,
                source: Box::new(e),
            })
    }

    /// Solves for explicitly given parameters (no sampling).
    pub fn from_parameters(&self, params: Vec<Vec<f64>>, seed: u64) -> Result<Dataset> {
        let mut records = Vec::with_capacity(params.len());
        for (index, y) in params.into_iter().enumerate() {
            let u = self.solve(&y).map_err(|e| Error::Sample {
                index,
                source: Box::new(e),
            })?;
            records.push(Record { y, u });
        }
        Ok(self.assemble_dataset(seed, records))
    }

    pub fn assemble_dataset(&self, seed: u64, records: Vec<Record>) -> Dataset {
        Dataset {
            family: self.family,
            mesh_n: self.mesh.n(),
            dofs: self.mesh.dofs(),
            seed,
            records,
        }
    }

    /// Sequential generation of `count` records.
    pub fn generate(&self, count: usize, seed: u64) -> Result<Dataset> {
        if count == 0 {
            return Err(invalid("dataset needs at least one record"));
        }
        let records = (0..count)
            .map(|j| self.record(seed, j))
            .collect::<Result<Vec<_>>>()?;
        Ok(self.assemble_dataset(seed, records))
    }
}

/// Samples `count` parameters from `family` and solves each problem on the
/// `mesh_n x mesh_n` grid.
pub fn generate(family: ParametricFamily, mesh_n: usize, count: usize, seed: u64) -> Result<Dataset> {
    Generator::new(family, mesh_n)?.generate(count, seed)
}
