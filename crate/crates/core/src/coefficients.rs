//! Parametrized diffusion-coefficient families.
//!
//! | kind              | coefficient `a_y(x)`                                       | box                         |
//! |-------------------|------------------------------------------------------------|-----------------------------|
//! | `TrigPoly`        | `mu + sum_i y_i i^sigma (1 + a_i(x))`                       | `[0,1]^p`                   |
//! | `Chessboard`      | `mu + y_i` on chessboard cell `i` of an `s x s` partition   | `[0,1]^(s^2)`               |
//! | `CookiesFixed`    | `mu + sum_i y_i 1[x in disk_i]`, radius `r/(2s)`            | `[0,1]^(s^2)`               |
//! | `CookiesVariable` | as above, radius of disk `i` is `y_(i+s^2)/(2s)`            | `[0,1]^(s^2) x [0.5,0.9]^(s^2)` |
//! | `ClippedPoly`     | `max(mu, sum_i y_i m_i(x))`, monomials of degree `<= k`     | `[-1,1]^p`                  |
//!
//! with `a_i(x) = sin(floor((i+2)/2) pi x1) sin(ceil((i+2)/2) pi x2)`.
//!
//! Index conventions (all measure-zero choices): chessboard cells and
//! vertices are row-major with `x1` varying fastest and half-open cells; disk
//! `i = k s + l` (1-based, `k in 0..s`, `l in 1..=s`) is centered at
//! `((2k+1)/(2s), (2l-1)/(2s))` and membership is strict; monomials are in
//! graded-lexicographic order `1, x1, x2, x1^2, x1 x2, x2^2, ...`.

use alloc::vec::Vec;
use core::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{invalid, Result};
use crate::mesh::Mesh;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum FamilyKind {
    TrigPoly,
    Chessboard,
    CookiesFixed,
    CookiesVariable,
    ClippedPoly,
}

impl FamilyKind {
    pub const ALL: [FamilyKind; 5] = [
        FamilyKind::TrigPoly,
        FamilyKind::Chessboard,
        FamilyKind::CookiesFixed,
        FamilyKind::CookiesVariable,
        FamilyKind::ClippedPoly,
    ];

    /// Short tag used on the command line and in result tables.
    pub fn tag(self) -> &'static str {
        match self {
            FamilyKind::TrigPoly => "t1",
            FamilyKind::Chessboard => "t2",
            FamilyKind::CookiesFixed => "t3f",
            FamilyKind::CookiesVariable => "t3v",
            FamilyKind::ClippedPoly => "t4",
        }
    }

    pub fn from_tag(tag: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|k| k.tag() == tag)
    }

    /// Numeric tag stored in binary dataset headers.
    pub fn code(self) -> u8 {
        match self {
            FamilyKind::TrigPoly => 1,
            FamilyKind::Chessboard => 2,
            FamilyKind::CookiesFixed => 3,
            FamilyKind::CookiesVariable => 4,
            FamilyKind::ClippedPoly => 5,
        }
    }

    pub fn from_code(code: u8) -> Option<Self> {
        Self::ALL.into_iter().find(|k| k.code() == code)
    }
}

/// One coefficient set together with its hyper-parameters.
///
/// Fields that do not apply to a kind are zero.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ParametricFamily {
    pub kind: FamilyKind,
    pub p: usize,
    pub sigma: f64,
    pub mu: f64,
    pub r: f64,
    pub s: usize,
    pub k: usize,
}

/// Axis-aligned parameter box.
#[derive(Debug, Clone, PartialEq)]
pub struct ParameterBox {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

impl ParameterBox {
    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    pub fn contains(&self, y: &[f64]) -> bool {
        y.len() == self.dim()
            && y
                .iter()
                .zip(self.lower.iter().zip(&self.upper))
                .all(|(v, (lo, hi))| *v >= *lo && *v <= *hi)
    }
}

fn check_mu(mu: f64) -> Result<()> {
    if mu > 0.0 && mu.is_finite() {
        Ok(())
    } else {
        Err(invalid("shift mu must be positive and finite"))
    }
}

impl ParametricFamily {
    pub fn trig_poly(p: usize, sigma: f64, mu: f64) -> Result<Self> {
        if p == 0 {
            return Err(invalid("trigonometric family needs p >= 1"));
        }
        if !sigma.is_finite() {
            return Err(invalid("sigma must be finite"));
        }
        check_mu(mu)?;
        Ok(Self {
            kind: FamilyKind::TrigPoly,
            p,
            sigma,
            mu,
            r: 0.0,
            s: 0,
            k: 0,
        })
    }

    pub fn chessboard(s: usize, mu: f64) -> Result<Self> {
        if s == 0 {
            return Err(invalid("chessboard needs s >= 1"));
        }
        check_mu(mu)?;
        Ok(Self {
            kind: FamilyKind::Chessboard,
            p: s * s,
            sigma: 0.0,
            mu,
            r: 0.0,
            s,
            k: 0,
        })
    }

    pub fn cookies_fixed(s: usize, r: f64, mu: f64) -> Result<Self> {
        if s == 0 {
            return Err(invalid("cookies need s >= 1"));
        }
        if !(r > 0.0 && r <= 1.0) {
            return Err(invalid("radius factor r must lie in (0, 1]"));
        }
        check_mu(mu)?;
        Ok(Self {
            kind: FamilyKind::CookiesFixed,
            p: s * s,
            sigma: 0.0,
            mu,
            r,
            s,
            k: 0,
        })
    }

    pub fn cookies_variable(s: usize, mu: f64) -> Result<Self> {
        if s == 0 {
            return Err(invalid("cookies need s >= 1"));
        }
        check_mu(mu)?;
        Ok(Self {
            kind: FamilyKind::CookiesVariable,
            p: 2 * s * s,
            sigma: 0.0,
            mu,
            r: 0.0,
            s,
            k: 0,
        })
    }

    pub fn clipped_poly(k: usize, mu: f64) -> Result<Self> {
        check_mu(mu)?;
        Ok(Self {
            kind: FamilyKind::ClippedPoly,
            p: (2 + k) * (1 + k) / 2,
            sigma: 0.0,
            mu,
            r: 0.0,
            s: 0,
            k,
        })
    }

    /// Builds the family of `kind` whose parameter dimension is `p`, keeping
    /// the remaining hyper-parameters of `self`. Used by scaling studies.
    pub fn with_dimension(&self, p: usize) -> Result<Self> {
        let square_side = |p: usize| {
            let s = libm::round(libm::sqrt(p as f64)) as usize;
            (s * s == p && s > 0).then_some(s)
        };
        match self.kind {
            FamilyKind::TrigPoly => Self::trig_poly(p, self.sigma, self.mu),
            FamilyKind::Chessboard => square_side(p)
                .ok_or_else(|| invalid("chessboard dimension must be a perfect square"))
                .and_then(|s| Self::chessboard(s, self.mu)),
            FamilyKind::CookiesFixed => square_side(p)
                .ok_or_else(|| invalid("cookie dimension must be a perfect square"))
                .and_then(|s| Self::cookies_fixed(s, self.r, self.mu)),
            FamilyKind::CookiesVariable => p.is_multiple_of(2)
                .then(|| square_side(p / 2))
                .flatten()
                .ok_or_else(|| invalid("variable-cookie dimension must be 2 s^2"))
                .and_then(|s| Self::cookies_variable(s, self.mu)),
            FamilyKind::ClippedPoly => (0..=p)
                .find(|k| (2 + k) * (1 + k) / 2 == p)
                .ok_or_else(|| invalid("clipped-polynomial dimension must be (k+2)(k+1)/2"))
                .and_then(|k| Self::clipped_poly(k, self.mu)),
        }
    }

    /// Re-checks every invariant (used after deserialization).
    pub fn validate(&self) -> Result<()> {
        let rebuilt = match self.kind {
            FamilyKind::TrigPoly => Self::trig_poly(self.p, self.sigma, self.mu)?,
            FamilyKind::Chessboard => Self::chessboard(self.s, self.mu)?,
            FamilyKind::CookiesFixed => Self::cookies_fixed(self.s, self.r, self.mu)?,
            FamilyKind::CookiesVariable => Self::cookies_variable(self.s, self.mu)?,
            FamilyKind::ClippedPoly => Self::clipped_poly(self.k, self.mu)?,
        };
        if rebuilt == *self {
            Ok(())
        } else {
            Err(invalid("family hyper-parameters are inconsistent"))
        }
    }

    pub fn is_affine(&self) -> bool {
        matches!(
            self.kind,
            FamilyKind::TrigPoly | FamilyKind::Chessboard | FamilyKind::CookiesFixed
        )
    }

    pub fn parameter_box(&self) -> ParameterBox {
        let p = self.p;
        match self.kind {
            FamilyKind::ClippedPoly => ParameterBox {
                lower: alloc::vec![-1.0; p],
                upper: alloc::vec![1.0; p],
            },
            FamilyKind::CookiesVariable => {
                let half = self.s * self.s;
                let mut lower = alloc::vec![0.0; p];
                let mut upper = alloc::vec![1.0; p];
                lower[half..].fill(0.5);
                upper[half..].fill(0.9);
                ParameterBox { lower, upper }
            }
            _ => ParameterBox {
                lower: alloc::vec![0.0; p],
                upper: alloc::vec![1.0; p],
            },
        }
    }

    /// Evaluates `a_y(x)`.
    pub fn eval(&self, y: &[f64], x: [f64; 2]) -> f64 {
        debug_assert_eq!(y.len(), self.p);
        match self.kind {
            FamilyKind::TrigPoly => eval_trig_poly(self, y, x),
            FamilyKind::Chessboard => eval_chessboard(self, y, x),
            FamilyKind::CookiesFixed => eval_cookies_fixed(self, y, x),
            FamilyKind::CookiesVariable => eval_cookies_variable(self, y, x),
            FamilyKind::ClippedPoly => eval_clipped_poly(self, y, x),
        }
    }

    /// Coefficient values at every triangle barycenter of `mesh`.
    pub fn at_barycenters(&self, y: &[f64], mesh: &Mesh) -> Result<Vec<f64>> {
        if y.len() != self.p {
            return Err(invalid("parameter vector has the wrong length"));
        }
        Ok((0..mesh.triangles().len())
            .map(|t| self.eval(y, mesh.barycenter(t)))
            .collect())
    }

    /// Closed-form upper bound of `a_y(x)` over the box and the unit square.
    pub fn upper_bound(&self) -> f64 {
        match self.kind {
            FamilyKind::TrigPoly => {
                self.mu
                    + (1..=self.p)
                        .map(|i| 2.0 * libm::pow(i as f64, self.sigma))
                        .sum::<f64>()
            }
            FamilyKind::Chessboard | FamilyKind::CookiesFixed | FamilyKind::CookiesVariable => {
                self.mu + 1.0
            }
            // |y_i| <= 1 and every monomial lies in [0, 1] on the unit square.
            FamilyKind::ClippedPoly => self.mu.max(self.p as f64),
        }
    }

    /// `count` i.i.d. uniform samples from the parameter box. Sample `j` is
    /// drawn from ChaCha8 stream `j` under key `seed`, so it depends only on
    /// `(seed, j)`.
    pub fn sample_parameters(&self, count: usize, seed: u64) -> Vec<Vec<f64>> {
        let bx = self.parameter_box();
        (0..count).map(|j| sample_one(&bx, seed, j as u64)).collect()
    }

    /// Sample `index` of the stream that [`Self::sample_parameters`] draws from.
    pub fn sample_at(&self, seed: u64, index: u64) -> Vec<f64> {
        sample_one(&self.parameter_box(), seed, index)
    }
}

fn sample_one(bx: &ParameterBox, seed: u64, index: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    bx.lower
        .iter()
        .zip(&bx.upper)
        .map(|(&lo, &hi)| lo + (hi - lo) * rng.random::<f64>())
        .collect()
}

/// `sin(floor((i+2)/2) pi x1) sin(ceil((i+2)/2) pi x2)` for 1-based `i`.
pub fn trig_mode(i: usize, x: [f64; 2]) -> f64 {
    let fx = ((i + 2) / 2) as f64;
    let fy = ((i + 3) / 2) as f64;
    libm::sin(fx * PI * x[0]) * libm::sin(fy * PI * x[1])
}

pub fn eval_trig_poly(family: &ParametricFamily, y: &[f64], x: [f64; 2]) -> f64 {
    let mut acc = family.mu;
    for (idx, &yi) in y.iter().enumerate() {
        let i = idx + 1;
        acc += yi * libm::pow(i as f64, family.sigma) * (1.0 + trig_mode(i, x));
    }
    acc
}

/// 0-based index of the chessboard cell containing `x`.
pub fn chessboard_cell(s: usize, x: [f64; 2]) -> usize {
    let cell = |c: f64| ((c * s as f64) as usize).min(s - 1);
    cell(x[1]) * s + cell(x[0])
}

pub fn eval_chessboard(family: &ParametricFamily, y: &[f64], x: [f64; 2]) -> f64 {
    family.mu + y[chessboard_cell(family.s, x)]
}

/// Center of disk `j` (0-based, `j = k s + (l - 1)`).
pub fn disk_center(s: usize, j: usize) -> [f64; 2] {
    let k = j / s;
    let l = j % s + 1;
    let two_s = 2.0 * s as f64;
    [(2 * k + 1) as f64 / two_s, (2 * l - 1) as f64 / two_s]
}

fn in_disk(center: [f64; 2], radius: f64, x: [f64; 2]) -> bool {
    let dx = x[0] - center[0];
    let dy = x[1] - center[1];
    dx * dx + dy * dy < radius * radius
}

pub fn eval_cookies_fixed(family: &ParametricFamily, y: &[f64], x: [f64; 2]) -> f64 {
    let s = family.s;
    let radius = family.r / (2.0 * s as f64);
    let mut acc = family.mu;
    for (j, &yj) in y.iter().enumerate().take(s * s) {
        if in_disk(disk_center(s, j), radius, x) {
            acc += yj;
        }
    }
    acc
}

pub fn eval_cookies_variable(family: &ParametricFamily, y: &[f64], x: [f64; 2]) -> f64 {
    let s = family.s;
    let half = s * s;
    let mut acc = family.mu;
    for j in 0..half {
        let radius = y[half + j] / (2.0 * s as f64);
        if in_disk(disk_center(s, j), radius, x) {
            acc += y[j];
        }
    }
    acc
}

/// Exponent pairs `(a, b)` of the monomials `x1^a x2^b`, `a + b <= k`, in
/// graded-lexicographic order.
pub fn monomial_exponents(k: usize) -> Vec<(u32, u32)> {
    let mut out = Vec::with_capacity((k + 2) * (k + 1) / 2);
    for deg in 0..=k as u32 {
        for b in 0..=deg {
            out.push((deg - b, b));
        }
    }
    out
}

pub fn eval_clipped_poly(family: &ParametricFamily, y: &[f64], x: [f64; 2]) -> f64 {
    let mut acc = 0.0;
    let mut idx = 0;
    for deg in 0..=family.k as i32 {
        for b in 0..=deg {
            acc += y[idx] * libm::pow(x[0], (deg - b) as f64) * libm::pow(x[1], b as f64);
            idx += 1;
        }
    }
    acc.max(family.mu)
}
