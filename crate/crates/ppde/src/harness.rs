//! Training runs, parameter-dimension and sample-size studies, and their
//! tabular output.

use std::io::Write;
use std::time::Instant;

use ppde_core::dataset::Generator;
use ppde_core::fem::{self, FeVector};
use ppde_core::mesh::Mesh;
use ppde_core::sparse::CsrMatrix;
use ppde_core::stats::{self, ConvergenceSummary, Regression};
use ppde_core::train::{self, EpochReport, TrainHistory};
use ppde_core::{Dataset, FamilyKind, Network};
use rayon::prelude::*;
use serde::Serialize;

use crate::config::ExperimentConfig;
use crate::error::{config, Result};

/// One row of a results table.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ResultRecord {
    pub testcase: String,
    pub p: usize,
    pub sigma: f64,
    pub mu: f64,
    pub r: f64,
    pub s: usize,
    pub k: usize,
    pub n_train: usize,
    /// Training-data seed of the run.
    pub seed: u64,
    pub mean_rel_train: f64,
    #[serde(skip)]
    pub max_rel_train: f64,
    pub mean_rel_test: f64,
    pub max_rel_test: f64,
    pub epochs: usize,
    pub wall_time_s: f64,
}

/// Everything a single run produces.
#[derive(Debug, Clone)]
pub struct RunOutput {
    pub record: ResultRecord,
    pub history: TrainHistory,
    pub summary: ConvergenceSummary,
    pub network: Network,
}

/// Generates `count` records with the sampling stream `seed`, spreading the
/// solves over the rayon pool. The result does not depend on the pool size.
pub fn generate_dataset(generator: &Generator, count: usize, seed: u64) -> Result<Dataset> {
    if count == 0 {
        return Err(config("dataset needs at least one record"));
    }
    let results: Vec<_> = (0..count)
        .into_par_iter()
        .map(|j| generator.record(seed, j))
        .collect();
    let records = results.into_iter().collect::<ppde_core::Result<Vec<_>>>()?;
    Ok(generator.assemble_dataset(seed, records))
}

/// Training and test sets of a configuration (seeds `data.seed` and `data.seed + 1`).
pub fn generate_data(cfg: &ExperimentConfig) -> Result<(Generator, Dataset, Dataset)> {
    let generator = Generator::new(cfg.family()?, cfg.mesh.n)?;
    let train = generate_dataset(&generator, cfg.data.n_train, cfg.data.seed)?;
    let test = generate_dataset(&generator, cfg.data.n_test, cfg.data.seed + 1)?;
    Ok((generator, train, test))
}

/// Trains the configured network on the given data and evaluates it.
pub fn run_with_data<F>(
    cfg: &ExperimentConfig,
    train_set: &Dataset,
    test_set: &Dataset,
    gram: &CsrMatrix,
    observer: F,
) -> Result<RunOutput>
where
    F: FnMut(&EpochReport),
{
    cfg.validate()?;
    let family = cfg.family()?;
    for (name, d) in [("training", train_set), ("test", test_set)] {
        if d.family != family || d.mesh_n != cfg.mesh.n {
            return Err(config(format!(
                "{name} data ({} p={}, n={}) does not match the configuration ({} p={}, n={})",
                d.family.kind.tag(),
                d.family.p,
                d.mesh_n,
                family.kind.tag(),
                family.p,
                cfg.mesh.n
            )));
        }
    }
    let start = Instant::now();
    let tc = cfg.train_config();
    let mut net = Network::init(&cfg.architecture()?, tc.init_std, cfg.network.alpha, cfg.network.seed)?;
    let history = train::train_with(
        &mut net,
        train_set,
        Some(test_set),
        gram,
        &tc,
        cfg.train_error_mode(),
        observer,
    )?;
    let (mean_train, max_train) = train::evaluate(&net, train_set, gram)?;
    let (mean_test, max_test) = train::evaluate(&net, test_set, gram)?;
    let summary = stats::convergence_summary(&history)?;
    let record = ResultRecord {
        testcase: family.kind.tag().to_string(),
        p: family.p,
        sigma: family.sigma,
        mu: family.mu,
        r: family.r,
        s: family.s,
        k: family.k,
        n_train: train_set.len(),
        seed: train_set.seed,
        mean_rel_train: mean_train,
        max_rel_train: max_train,
        mean_rel_test: mean_test,
        max_rel_test: max_test,
        epochs: history.epochs(),
        wall_time_s: start.elapsed().as_secs_f64(),
    };
    Ok(RunOutput {
        record,
        history,
        summary,
        network: net,
    })
}

/// Generates the data of `cfg`, trains and evaluates.
pub fn run_testcase(cfg: &ExperimentConfig) -> Result<RunOutput> {
    let (generator, train_set, test_set) = generate_data(cfg)?;
    run_with_data(cfg, &train_set, &test_set, generator.gram(), |_| {})
}

/// How error is regressed against the parameter dimension.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ScalingFit {
    /// `log err` against `log p`.
    LogLog,
    /// `err` against `log p`.
    SemiLog,
}

impl ScalingFit {
    pub fn for_family(kind: FamilyKind) -> Self {
        if kind == FamilyKind::ClippedPoly {
            ScalingFit::SemiLog
        } else {
            ScalingFit::LogLog
        }
    }
}

#[derive(Debug, Clone)]
pub struct ScalingStudy {
    pub records: Vec<ResultRecord>,
    pub fit_kind: ScalingFit,
    pub fit: Regression,
}

/// One run per parameter dimension. Every run uses the configuration of `cfg`
/// with only the family (hence the input width) changed.
pub fn scaling_study(cfg: &ExperimentConfig, p_values: &[usize]) -> Result<ScalingStudy> {
    if p_values.len() < 2 {
        return Err(config("a scaling study needs at least two p values"));
    }
    let base = cfg.family()?;
    let mut records = Vec::with_capacity(p_values.len());
    for &p in p_values {
        let run_cfg = cfg.with_family(&base.with_dimension(p)?);
        let diff = cfg.protocol_diff(&run_cfg);
        if !diff.is_empty() {
            return Err(config(format!("scaling runs differ in {diff:?}")));
        }
        records.push(run_testcase(&run_cfg)?.record);
    }
    let ps: Vec<f64> = records.iter().map(|r| r.p as f64).collect();
    let errs: Vec<f64> = records.iter().map(|r| r.mean_rel_test).collect();
    let fit_kind = ScalingFit::for_family(base.kind);
    let fit = match fit_kind {
        ScalingFit::LogLog => stats::log_log_fit(&ps, &errs)?,
        ScalingFit::SemiLog => stats::semilog_fit(&ps, &errs)?,
    };
    Ok(ScalingStudy {
        records,
        fit_kind,
        fit,
    })
}

#[derive(Debug, Clone)]
pub struct SampleSizeStudy {
    pub records: Vec<ResultRecord>,
    /// Mean test error against training-set size.
    pub regression: Regression,
}

/// Trains once per size on the leading records of one training set of
/// `cfg.data.n_train` records; the test set is shared.
pub fn sample_size_study(cfg: &ExperimentConfig, sizes: &[usize]) -> Result<SampleSizeStudy> {
    if sizes.len() < 2 {
        return Err(config("a sample-size study needs at least two sizes"));
    }
    if sizes[0] == 0 || sizes.windows(2).any(|w| w[0] >= w[1]) {
        return Err(config("sizes must be positive and strictly increasing"));
    }
    let largest = *sizes.last().expect("nonempty");
    if largest > cfg.data.n_train {
        return Err(config(format!(
            "largest size {largest} exceeds data.n_train = {}",
            cfg.data.n_train
        )));
    }
    let (generator, full, test_set) = generate_data(cfg)?;
    let mut records = Vec::with_capacity(sizes.len());
    for &size in sizes {
        let mut run_cfg = cfg.clone();
        run_cfg.data.n_train = size;
        let prefix = full.prefix(size)?;
        records.push(run_with_data(&run_cfg, &prefix, &test_set, generator.gram(), |_| {})?.record);
    }
    let xs: Vec<f64> = records.iter().map(|r| r.n_train as f64).collect();
    let ys: Vec<f64> = records.iter().map(|r| r.mean_rel_test).collect();
    let regression = stats::linear_regression_r2(&xs, &ys)?;
    Ok(SampleSizeStudy {
        records,
        regression,
    })
}

pub fn write_results_csv<W: Write>(w: W, records: &[ResultRecord]) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    if records.is_empty() {
        out.write_record([
            "testcase",
            "p",
            "sigma",
            "mu",
            "r",
            "s",
            "k",
            "n_train",
            "seed",
            "mean_rel_train",
            "mean_rel_test",
            "max_rel_test",
            "epochs",
            "wall_time_s",
        ])?;
    }
    for r in records {
        out.serialize(r)?;
    }
    out.flush()?;
    Ok(())
}

/// `epoch,mean_rel_train[,mean_rel_test]`; the test column is present when
/// the history has checkpoints and empty between them.
pub fn write_history_csv<W: Write>(w: W, history: &TrainHistory) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    let with_test = !history.test_error.is_empty();
    if with_test {
        out.write_record(["epoch", "mean_rel_train", "mean_rel_test"])?;
    } else {
        out.write_record(["epoch", "mean_rel_train"])?;
    }
    let mut checkpoints = history.test_error.iter().peekable();
    for (i, e) in history.train_error.iter().enumerate() {
        let epoch = i + 1;
        let mut row = vec![epoch.to_string(), e.to_string()];
        if with_test {
            match checkpoints.peek() {
                Some(&&(at, t)) if at == epoch => {
                    row.push(t.to_string());
                    checkpoints.next();
                }
                _ => row.push(String::new()),
            }
        }
        out.write_record(&row)?;
    }
    out.flush()?;
    Ok(())
}

/// History as CSV text plus the overfitting summary.
pub fn convergence_report(history: &TrainHistory) -> Result<(String, ConvergenceSummary)> {
    let summary = stats::convergence_summary(history)?;
    let mut buf = Vec::new();
    write_history_csv(&mut buf, history)?;
    Ok((String::from_utf8(buf).expect("csv output is utf-8"), summary))
}

/// Manufactured-solution check of the finite element solver.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FemVerification {
    pub coarse_n: usize,
    pub fine_n: usize,
    pub coarse_h1_error: f64,
    pub fine_h1_error: f64,
    /// `coarse_h1_error / fine_h1_error`; close to 2 for first-order elements.
    pub ratio: f64,
    /// Largest relative algebraic residual of the two solves.
    pub max_residual: f64,
}

fn manufactured(x: [f64; 2]) -> f64 {
    let pi = std::f64::consts::PI;
    (pi * x[0]).sin() * (pi * x[1]).sin()
}

fn manufactured_grad(x: [f64; 2]) -> [f64; 2] {
    let pi = std::f64::consts::PI;
    [
        pi * (pi * x[0]).cos() * (pi * x[1]).sin(),
        pi * (pi * x[0]).sin() * (pi * x[1]).cos(),
    ]
}

/// H1 error and residual of the solve for `u = sin(pi x1) sin(pi x2)`
/// (`a = 1`, `f = 2 pi^2 u`) on an `n x n` grid.
pub fn manufactured_solve(n: usize) -> Result<(f64, f64)> {
    let mesh = Mesh::build(n)?;
    let coeff = vec![1.0; mesh.triangles().len()];
    let pi2 = std::f64::consts::PI * std::f64::consts::PI;
    let sys = fem::assemble_system(&mesh, &coeff, |x| 2.0 * pi2 * manufactured(x))?;
    let u: FeVector = fem::solve(&sys)?;
    let residual = sys.relative_residual(&u);
    let err = fem::h1_error(&mesh, &u, manufactured, manufactured_grad)?;
    Ok((err, residual))
}

/// Solves on `n` and `2n - 1` (each coarse cell halved).
pub fn verify_fem(n: usize) -> Result<FemVerification> {
    let fine_n = 2 * n - 1;
    let (coarse, r1) = manufactured_solve(n)?;
    let (fine, r2) = manufactured_solve(fine_n)?;
    Ok(FemVerification {
        coarse_n: n,
        fine_n,
        coarse_h1_error: coarse,
        fine_h1_error: fine,
        ratio: coarse / fine,
        max_residual: r1.max(r2),
    })
}

/// Relative residual `|B_y u - f| / |f|` of the stored solutions at
/// `indices`, with the system re-assembled from each record's parameters.
pub fn dataset_residuals(dataset: &Dataset, indices: &[usize]) -> Result<Vec<f64>> {
    let generator = Generator::new(dataset.family, dataset.mesh_n)?;
    indices
        .iter()
        .map(|&i| {
            let rec = dataset
                .records
                .get(i)
                .ok_or_else(|| config(format!("record {i} out of range")))?;
            let sys = generator.system(&rec.y)?;
            Ok(sys.relative_residual(&rec.u))
        })
        .collect()
}
