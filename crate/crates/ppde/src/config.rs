//! JSON experiment configuration.
//!
//! ```json
//! {
//!   "family":  { "type": "t2", "s": 3, "mu": 0.1 },
//!   "mesh":    { "n": 33 },
//!   "network": { "widths": [100, 100, 100, 100, 100], "alpha": 0.2, "init_std": 0.1, "seed": 0 },
//!   "train":   { "batch": 256, "lr": 0.0002, "beta1": 0.9, "beta2": 0.999, "eps": 1e-8,
//!                "epochs": 2000, "seed": 0 },
//!   "data":    { "n_train": 2000, "n_test": 500, "seed": 0 }
//! }
//! ```
//!
//! Unknown keys anywhere are rejected. `train.test_every`,
//! `train.train_error` and the `study` section are optional.

use std::path::Path;

use ppde_core::train::TrainErrorMode;
use ppde_core::{FamilyKind, ParametricFamily, TrainConfig};
use serde::{Deserialize, Serialize};

use crate::error::{config, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FamilyType {
    T1,
    T2,
    T3f,
    T3v,
    T4,
}

impl From<FamilyType> for FamilyKind {
    fn from(t: FamilyType) -> Self {
        match t {
            FamilyType::T1 => FamilyKind::TrigPoly,
            FamilyType::T2 => FamilyKind::Chessboard,
            FamilyType::T3f => FamilyKind::CookiesFixed,
            FamilyType::T3v => FamilyKind::CookiesVariable,
            FamilyType::T4 => FamilyKind::ClippedPoly,
        }
    }
}

impl From<FamilyKind> for FamilyType {
    fn from(k: FamilyKind) -> Self {
        match k {
            FamilyKind::TrigPoly => FamilyType::T1,
            FamilyKind::Chessboard => FamilyType::T2,
            FamilyKind::CookiesFixed => FamilyType::T3f,
            FamilyKind::CookiesVariable => FamilyType::T3v,
            FamilyKind::ClippedPoly => FamilyType::T4,
        }
    }
}

/// Family section. Which keys are required depends on `type`:
///
/// | type | keys |
/// |------|------|
/// | t1   | p, sigma, mu |
/// | t2   | s or p (= s^2), mu |
/// | t3f  | s or p (= s^2), r, mu |
/// | t3v  | s or p (= 2 s^2), mu |
/// | t4   | k or p (= (k+1)(k+2)/2), mu |
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FamilySpec {
    #[serde(rename = "type")]
    pub kind: FamilyType,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub p: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub s: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub k: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sigma: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mu: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub r: Option<f64>,
}

impl FamilySpec {
    /// Canonical spec of an existing family (only the keys it uses).
    pub fn of(f: &ParametricFamily) -> Self {
        let mut spec = Self {
            kind: f.kind.into(),
            p: None,
            s: None,
            k: None,
            sigma: None,
            mu: Some(f.mu),
            r: None,
        };
        match f.kind {
            FamilyKind::TrigPoly => {
                spec.p = Some(f.p);
                spec.sigma = Some(f.sigma);
            }
            FamilyKind::Chessboard | FamilyKind::CookiesVariable => spec.s = Some(f.s),
            FamilyKind::CookiesFixed => {
                spec.s = Some(f.s);
                spec.r = Some(f.r);
            }
            FamilyKind::ClippedPoly => spec.k = Some(f.k),
        }
        spec
    }

    pub fn build(&self) -> Result<ParametricFamily> {
        let kind = FamilyKind::from(self.kind);
        let tag = kind.tag();
        let need = |v: Option<f64>, name: &str| {
            v.ok_or_else(|| config(format!("family {tag} needs `{name}`")))
        };
        let reject = |present: bool, name: &str| {
            if present {
                Err(config(format!("`{name}` does not apply to family {tag}")))
            } else {
                Ok(())
            }
        };
        let mu = need(self.mu, "mu")?;
        let family = match kind {
            FamilyKind::TrigPoly => {
                reject(self.s.is_some(), "s")?;
                reject(self.k.is_some(), "k")?;
                reject(self.r.is_some(), "r")?;
                let p = self.p.ok_or_else(|| config("family t1 needs `p`"))?;
                ParametricFamily::trig_poly(p, need(self.sigma, "sigma")?, mu)?
            }
            _ => {
                reject(self.sigma.is_some(), "sigma")?;
                let (side, side_name) = match kind {
                    FamilyKind::ClippedPoly => {
                        reject(self.s.is_some(), "s")?;
                        (self.k, "k")
                    }
                    _ => {
                        reject(self.k.is_some(), "k")?;
                        (self.s, "s")
                    }
                };
                if kind == FamilyKind::CookiesFixed {
                    need(self.r, "r")?;
                } else {
                    reject(self.r.is_some(), "r")?;
                }
                let r = self.r.unwrap_or(0.0);
                let from_side = |n: usize| match kind {
                    FamilyKind::Chessboard => ParametricFamily::chessboard(n, mu),
                    FamilyKind::CookiesFixed => ParametricFamily::cookies_fixed(n, r, mu),
                    FamilyKind::CookiesVariable => ParametricFamily::cookies_variable(n, mu),
                    _ => ParametricFamily::clipped_poly(n, mu),
                };
                let family = match (side, self.p) {
                    (Some(n), _) => from_side(n)?,
                    (None, Some(p)) => {
                        // any valid member carries the hyper-parameters into with_dimension
                        from_side(1)?.with_dimension(p)?
                    }
                    (None, None) => {
                        return Err(config(format!("family {tag} needs `{side_name}` or `p`")))
                    }
                };
                if let Some(p) = self.p {
                    if p != family.p {
                        return Err(config(format!(
                            "`p` = {p} disagrees with `{side_name}` (which gives p = {})",
                            family.p
                        )));
                    }
                }
                family
            }
        };
        Ok(family)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MeshSpec {
    pub n: usize,
}

fn default_alpha() -> f64 {
    0.2
}

fn default_init_std() -> f64 {
    0.1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetworkSpec {
    /// Hidden-layer widths; input and output widths follow from the family and mesh.
    pub widths: Vec<usize>,
    #[serde(default = "default_alpha")]
    pub alpha: f64,
    #[serde(default = "default_init_std")]
    pub init_std: f64,
    #[serde(default)]
    pub seed: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TrainErrorSpec {
    #[default]
    Full,
    Running,
}

impl From<TrainErrorSpec> for TrainErrorMode {
    fn from(s: TrainErrorSpec) -> Self {
        match s {
            TrainErrorSpec::Full => TrainErrorMode::FullPass,
            TrainErrorSpec::Running => TrainErrorMode::Running,
        }
    }
}

fn d_batch() -> usize {
    TrainConfig::default().batch_size
}
fn d_lr() -> f64 {
    TrainConfig::default().lr
}
fn d_beta1() -> f64 {
    TrainConfig::default().beta1
}
fn d_beta2() -> f64 {
    TrainConfig::default().beta2
}
fn d_eps() -> f64 {
    TrainConfig::default().eps
}
fn d_test_every() -> usize {
    TrainConfig::default().test_every
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainSpec {
    #[serde(default = "d_batch")]
    pub batch: usize,
    #[serde(default = "d_lr")]
    pub lr: f64,
    #[serde(default = "d_beta1")]
    pub beta1: f64,
    #[serde(default = "d_beta2")]
    pub beta2: f64,
    #[serde(default = "d_eps")]
    pub eps: f64,
    pub epochs: usize,
    #[serde(default)]
    pub seed: u64,
    /// Test-set checkpoint interval in epochs (the last epoch is always a checkpoint).
    #[serde(default = "d_test_every")]
    pub test_every: usize,
    /// `full`: a separate pass over the training set after every epoch;
    /// `running`: average of the batch losses seen during the epoch.
    #[serde(default)]
    pub train_error: TrainErrorSpec,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataSpec {
    pub n_train: usize,
    pub n_test: usize,
    /// Training records use this seed, test records `seed + 1`.
    #[serde(default)]
    pub seed: u64,
}

/// Sweep values for `ppde study`.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StudySpec {
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub p_values: Vec<usize>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub sizes: Vec<usize>,
    /// Replicate indices; each one shifts every seed (see [`ExperimentConfig::replicate`]).
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub replicates: Vec<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub family: FamilySpec,
    pub mesh: MeshSpec,
    pub network: NetworkSpec,
    pub train: TrainSpec,
    pub data: DataSpec,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub study: Option<StudySpec>,
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(text).map_err(|e| config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::from_json(&text)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    /// Small profile: n = 33, (p, 100 x 5, 1089), 2000/500 samples, 2000 epochs.
    pub fn desk(family: &ParametricFamily) -> Self {
        Self::profile(family, 33, vec![100; 5], 2000, 500, 2000)
    }

    /// Large profile: n = 101, (p, 300 x 10, 10201), 20000/5000 samples, 40000 epochs.
    pub fn full(family: &ParametricFamily) -> Self {
        Self::profile(family, 101, vec![300; 10], 20000, 5000, 40000)
    }

    fn profile(
        family: &ParametricFamily,
        n: usize,
        widths: Vec<usize>,
        n_train: usize,
        n_test: usize,
        epochs: usize,
    ) -> Self {
        let t = TrainConfig::default();
        Self {
            family: FamilySpec::of(family),
            mesh: MeshSpec { n },
            network: NetworkSpec {
                widths,
                alpha: default_alpha(),
                init_std: default_init_std(),
                seed: 0,
            },
            train: TrainSpec {
                batch: t.batch_size,
                lr: t.lr,
                beta1: t.beta1,
                beta2: t.beta2,
                eps: t.eps,
                epochs,
                seed: 0,
                test_every: t.test_every,
                train_error: TrainErrorSpec::Full,
            },
            data: DataSpec {
                n_train,
                n_test,
                seed: 0,
            },
            study: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.family.build()?;
        if self.mesh.n < 3 {
            return Err(config("mesh.n must be at least 3"));
        }
        if self.network.widths.contains(&0) {
            return Err(config("hidden widths must be positive"));
        }
        if !(0.0..1.0).contains(&self.network.alpha) {
            return Err(config("network.alpha must lie in [0, 1)"));
        }
        if !(self.network.init_std >= 0.0 && self.network.init_std.is_finite()) {
            return Err(config("network.init_std must be finite and nonnegative"));
        }
        if self.data.n_train == 0 || self.data.n_test == 0 {
            return Err(config("n_train and n_test must be at least 1"));
        }
        self.train_config().validate()?;
        Ok(())
    }

    pub fn family(&self) -> Result<ParametricFamily> {
        self.family.build()
    }

    pub fn dofs(&self) -> usize {
        self.mesh.n * self.mesh.n
    }

    /// `[p, hidden widths..., n^2]`.
    pub fn architecture(&self) -> Result<Vec<usize>> {
        let mut arch = vec![self.family()?.p];
        arch.extend(&self.network.widths);
        arch.push(self.dofs());
        Ok(arch)
    }

    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            batch_size: self.train.batch,
            lr: self.train.lr,
            beta1: self.train.beta1,
            beta2: self.train.beta2,
            eps: self.train.eps,
            epochs: self.train.epochs,
            seed: self.train.seed,
            init_std: self.network.init_std,
            test_every: self.train.test_every,
        }
    }

    pub fn train_error_mode(&self) -> TrainErrorMode {
        self.train.train_error.into()
    }

    /// Same configuration with another family.
    pub fn with_family(&self, family: &ParametricFamily) -> Self {
        Self {
            family: FamilySpec::of(family),
            ..self.clone()
        }
    }

    /// Independent repetition `index`: data seeds advance by `2 index` (so the
    /// train/test pairs of different replicates never overlap), network and
    /// shuffle seeds by `index`.
    pub fn replicate(&self, index: u64) -> Self {
        let mut c = self.clone();
        c.data.seed = self.data.seed + 2 * index;
        c.network.seed = self.network.seed + index;
        c.train.seed = self.train.seed + index;
        c
    }

    /// Names of the sections, other than `family` and `study`, in which the two
    /// configurations differ. Empty means the runs differ only in the
    /// coefficient family (and hence the input width).
    pub fn protocol_diff(&self, other: &Self) -> Vec<&'static str> {
        let mut diff = Vec::new();
        if self.mesh != other.mesh {
            diff.push("mesh");
        }
        if self.network != other.network {
            diff.push("network");
        }
        if self.train != other.train {
            diff.push("train");
        }
        if self.data != other.data {
            diff.push("data");
        }
        diff
    }
}
