use std::fs::File;
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use ppde::config::{FamilySpec, FamilyType};
use ppde::harness::{self, ResultRecord};
use ppde::{io, ExperimentConfig};
use ppde_core::dataset::Generator;
use ppde_core::{fem::assemble_gram, mesh::Mesh, train};

#[derive(Parser)]
#[command(name = "ppde", version, about = "Neural surrogates for the parametric diffusion equation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Sample parameters, solve, and write a dataset file.
    Gen(GenArgs),
    /// Print the header of a dataset file.
    Inspect { path: PathBuf },
    /// Train a network on existing dataset files.
    Train(TrainArgs),
    /// Generate data, train and evaluate as described by a config file.
    Run(RunArgs),
    /// Mean and maximum relative error of a checkpoint on a dataset.
    Eval {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        data: PathBuf,
    },
    /// Parameter-dimension or sample-size study.
    Study(StudyArgs),
    #[command(subcommand)]
    Fem(FemCommand),
    #[command(subcommand)]
    Net(NetCommand),
}

#[derive(Args)]
struct GenArgs {
    #[arg(long, value_enum)]
    family: FamilyArg,
    #[arg(long)]
    p: Option<usize>,
    #[arg(long)]
    s: Option<usize>,
    #[arg(long)]
    k: Option<usize>,
    #[arg(long, allow_hyphen_values = true)]
    sigma: Option<f64>,
    #[arg(long)]
    mu: f64,
    #[arg(long)]
    r: Option<f64>,
    #[arg(long, default_value_t = 33)]
    mesh_n: usize,
    #[arg(long)]
    count: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Clone, Copy, ValueEnum)]
enum FamilyArg {
    T1,
    T2,
    T3f,
    T3v,
    T4,
}

impl From<FamilyArg> for FamilyType {
    fn from(f: FamilyArg) -> Self {
        match f {
            FamilyArg::T1 => FamilyType::T1,
            FamilyArg::T2 => FamilyType::T2,
            FamilyArg::T3f => FamilyType::T3f,
            FamilyArg::T3v => FamilyType::T3v,
            FamilyArg::T4 => FamilyType::T4,
        }
    }
}

#[derive(Args)]
struct TrainArgs {
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    test_data: PathBuf,
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    checkpoint: PathBuf,
    /// Per-epoch history CSV.
    #[arg(long)]
    history: Option<PathBuf>,
    /// One-row results CSV.
    #[arg(long)]
    results: Option<PathBuf>,
}

#[derive(Args)]
struct RunArgs {
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    results: Option<PathBuf>,
    #[arg(long)]
    history: Option<PathBuf>,
    #[arg(long)]
    checkpoint: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum StudyKind {
    /// One run per parameter dimension (`study.p_values`).
    Scaling,
    /// One run per training-set size (`study.sizes`).
    Samples,
}

#[derive(Args)]
struct StudyArgs {
    #[arg(value_enum)]
    kind: StudyKind,
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Subcommand)]
enum FemCommand {
    /// Manufactured-solution convergence check on n and 2n - 1.
    Verify {
        #[arg(long, default_value_t = 17)]
        mesh_n: usize,
    },
}

#[derive(Clone, Copy, PartialEq, ValueEnum)]
enum Direction {
    ToRelu,
    ToLrelu,
}

#[derive(Subcommand)]
enum NetCommand {
    /// Rewrite a network for another activation with the same realization.
    Convert {
        #[arg(long = "in")]
        input: PathBuf,
        /// Leaky slope: the target slope for `to-lrelu`; for `to-relu`, if
        /// given, it must equal the slope stored in the checkpoint.
        #[arg(long)]
        alpha: Option<f64>,
        #[arg(long, value_enum)]
        direction: Direction,
        #[arg(long)]
        out: PathBuf,
    },
}

fn main() -> Result<()> {
    match Cli::parse().command {
        Command::Gen(a) => gen(a),
        Command::Inspect { path } => inspect(&path),
        Command::Train(a) => train_cmd(a),
        Command::Run(a) => run_cmd(a),
        Command::Eval { checkpoint, data } => eval(&checkpoint, &data),
        Command::Study(a) => study(a),
        Command::Fem(FemCommand::Verify { mesh_n }) => fem_verify(mesh_n),
        Command::Net(NetCommand::Convert {
            input,
            alpha,
            direction,
            out,
        }) => convert(&input, alpha, direction, &out),
    }
}

fn gen(a: GenArgs) -> Result<()> {
    let spec = FamilySpec {
        kind: a.family.into(),
        p: a.p,
        s: a.s,
        k: a.k,
        sigma: a.sigma,
        mu: Some(a.mu),
        r: a.r,
    };
    let family = spec.build()?;
    let generator = Generator::new(family, a.mesh_n)?;
    let ds = harness::generate_dataset(&generator, a.count, a.seed)?;
    io::save_dataset(&a.out, &ds)?;
    eprintln!(
        "wrote {} records ({} p={}, D={}) to {}",
        ds.len(),
        family.kind.tag(),
        family.p,
        ds.dofs,
        a.out.display()
    );
    Ok(())
}

fn inspect(path: &Path) -> Result<()> {
    let h = io::inspect_dataset(path)?;
    let f = &h.family;
    println!("family  {}", f.kind.tag());
    println!("p       {}", f.p);
    println!("s       {}", f.s);
    println!("k       {}", f.k);
    println!("sigma   {}", f.sigma);
    println!("mu      {}", f.mu);
    println!("r       {}", f.r);
    println!("mesh_n  {}", h.mesh_n);
    println!("dofs    {}", h.dofs);
    println!("count   {}", h.count);
    println!("seed    {}", h.seed);
    Ok(())
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(
        File::create(path).with_context(|| format!("creating {}", path.display()))?,
    ))
}

fn progress(r: &train::EpochReport) {
    if let Some(t) = r.test_error {
        eprintln!("epoch {:>6}  train {:.6}  test {:.6}", r.epoch, r.train_error, t);
    }
}

fn report(out: &harness::RunOutput) {
    let r = &out.record;
    println!(
        "{} p={} train {:.6} test {:.6} (max {:.6}) epochs {} in {:.1}s{}",
        r.testcase,
        r.p,
        r.mean_rel_train,
        r.mean_rel_test,
        r.max_rel_test,
        r.epochs,
        r.wall_time_s,
        if out.summary.overfit { "  [overfit]" } else { "" }
    );
}

fn write_outputs(
    out: &harness::RunOutput,
    results: Option<&Path>,
    history: Option<&Path>,
    checkpoint: Option<&Path>,
) -> Result<()> {
    if let Some(p) = results {
        harness::write_results_csv(create(p)?, std::slice::from_ref(&out.record))?;
    }
    if let Some(p) = history {
        harness::write_history_csv(create(p)?, &out.history)?;
    }
    if let Some(p) = checkpoint {
        io::save_network(p, &out.network)?;
    }
    Ok(())
}

fn train_cmd(a: TrainArgs) -> Result<()> {
    let cfg = ExperimentConfig::load(&a.config)?;
    let train_set = io::load_dataset(&a.data)?;
    let test_set = io::load_dataset(&a.test_data)?;
    let gram = assemble_gram(&Mesh::build(train_set.mesh_n)?);
    let out = harness::run_with_data(&cfg, &train_set, &test_set, &gram, progress)?;
    report(&out);
    write_outputs(&out, a.results.as_deref(), a.history.as_deref(), Some(&a.checkpoint))
}

fn run_cmd(a: RunArgs) -> Result<()> {
    let cfg = ExperimentConfig::load(&a.config)?;
    let (generator, train_set, test_set) = harness::generate_data(&cfg)?;
    let out = harness::run_with_data(&cfg, &train_set, &test_set, generator.gram(), progress)?;
    report(&out);
    write_outputs(&out, a.results.as_deref(), a.history.as_deref(), a.checkpoint.as_deref())
}

fn eval(checkpoint: &Path, data: &Path) -> Result<()> {
    let net = io::load_network(checkpoint)?;
    let ds = io::load_dataset(data)?;
    let gram = assemble_gram(&Mesh::build(ds.mesh_n)?);
    let (mean, max) = train::evaluate(&net, &ds, &gram)?;
    println!("records        {}", ds.len());
    println!("mean_rel_error {mean:.8}");
    println!("max_rel_error  {max:.8}");
    Ok(())
}

fn study(a: StudyArgs) -> Result<()> {
    let cfg = ExperimentConfig::load(&a.config)?;
    let spec = cfg.study.clone().unwrap_or_default();
    let replicates = if spec.replicates.is_empty() {
        vec![0]
    } else {
        spec.replicates.clone()
    };
    let mut rows: Vec<ResultRecord> = Vec::new();
    for rep in replicates {
        let rc = cfg.replicate(rep);
        match a.kind {
            StudyKind::Scaling => {
                if spec.p_values.is_empty() {
                    bail!("study.p_values is empty");
                }
                let s = harness::scaling_study(&rc, &spec.p_values)?;
                for r in &s.records {
                    println!("replicate {rep} p={:<4} test {:.6}", r.p, r.mean_rel_test);
                }
                println!(
                    "replicate {rep} {:?} slope {:.4} (R^2 {:.3})",
                    s.fit_kind, s.fit.slope, s.fit.r2
                );
                rows.extend(s.records);
            }
            StudyKind::Samples => {
                if spec.sizes.is_empty() {
                    bail!("study.sizes is empty");
                }
                let s = harness::sample_size_study(&rc, &spec.sizes)?;
                for r in &s.records {
                    println!("replicate {rep} n={:<6} test {:.6}", r.n_train, r.mean_rel_test);
                }
                println!(
                    "replicate {rep} slope {:.3e} intercept {:.4} R^2 {:.3}",
                    s.regression.slope, s.regression.intercept, s.regression.r2
                );
                rows.extend(s.records);
            }
        }
    }
    harness::write_results_csv(create(&a.out)?, &rows)?;
    Ok(())
}

fn fem_verify(n: usize) -> Result<()> {
    let v = harness::verify_fem(n)?;
    println!("n={:<4} H1 error {:.6e}", v.coarse_n, v.coarse_h1_error);
    println!("n={:<4} H1 error {:.6e}", v.fine_n, v.fine_h1_error);
    println!("ratio        {:.4}", v.ratio);
    println!("max residual {:.3e}", v.max_residual);
    if !(1.7..=2.3).contains(&v.ratio) || v.max_residual > 1e-10 {
        bail!("verification failed");
    }
    Ok(())
}

fn convert(input: &Path, alpha: Option<f64>, direction: Direction, out: &Path) -> Result<()> {
    let net = io::load_network(input)?;
    let converted = match direction {
        Direction::ToRelu => {
            if let Some(a) = alpha {
                if a != net.alpha() {
                    bail!("--alpha {a} does not match the checkpoint slope {}", net.alpha());
                }
            }
            net.to_relu()?
        }
        Direction::ToLrelu => {
            let Some(a) = alpha else {
                bail!("--alpha is required for to-lrelu");
            };
            net.to_lrelu(a)?
        }
    };
    io::save_network(out, &converted)?;
    let (c0, c1) = (net.counts(), converted.counts());
    println!(
        "weights {} -> {}, neurons {} -> {}, layers {}",
        c0.weights, c1.weights, c0.neurons, c1.neurons, c1.layers
    );
    Ok(())
}
