//! Norms, dual pairings, norming elements and deterministic sampling.
//!
//! Vectors are plain `[f64]` slices. A [`NormContext`] fixes the primal norm
//! used on both `X = R^n` and `Y = R^m`; dual vectors are measured with the
//! dual norm. On the product `X x Y` the primal norm is the sum of the
//! component norms and the dual norm is their maximum.

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Errors raised by geometric primitives.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeometryError {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("zero vector has no norming element")]
    ZeroVector,
    #[error("dual vector must have unit norm, got {0}")]
    NotUnit(f64),
    #[error("invalid radii: need 0 <= r_inner < r_outer, got ({0}, {1})")]
    InvalidRadii(f64, f64),
    #[error("invalid scale ladder: {0}")]
    InvalidLadder(String),
}

/// Minkowski norm kinds supported on `R^n`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum NormKind {
    #[default]
    L1,
    L2,
    Linf,
}

impl NormKind {
    /// The dual norm kind.
    pub fn dual(self) -> NormKind {
        match self {
            NormKind::L1 => NormKind::Linf,
            NormKind::L2 => NormKind::L2,
            NormKind::Linf => NormKind::L1,
        }
    }

    /// Evaluates this norm without any dimension check.
    pub fn eval(self, v: &[f64]) -> f64 {
        match self {
            NormKind::L1 => v.iter().map(|a| a.abs()).sum(),
            NormKind::L2 => v.iter().map(|a| a * a).sum::<f64>().sqrt(),
            NormKind::Linf => v.iter().fold(0.0, |m, a| m.max(a.abs())),
        }
    }

    /// Norm of `a - b`.
    pub fn dist(self, a: &[f64], b: &[f64]) -> f64 {
        let d: Vec<f64> = a.iter().zip(b).map(|(p, q)| p - q).collect();
        self.eval(&d)
    }
}

/// Which side of the pairing a vector lives on.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Side {
    Primal,
    Dual,
}

/// Which factor of `X x Y` a vector belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Space {
    X,
    Y,
}

/// Norm configuration for a mapping `R^n => R^m`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NormContext {
    pub primal_kind: NormKind,
    pub dim_x: usize,
    pub dim_y: usize,
}

impl NormContext {
    pub fn new(primal_kind: NormKind, dim_x: usize, dim_y: usize) -> Self {
        Self { primal_kind, dim_x, dim_y }
    }

    /// Norm kind applied on the given side.
    pub fn kind(&self, side: Side) -> NormKind {
        match side {
            Side::Primal => self.primal_kind,
            Side::Dual => self.primal_kind.dual(),
        }
    }

    fn dim(&self, space: Space) -> usize {
        match space {
            Space::X => self.dim_x,
            Space::Y => self.dim_y,
        }
    }

    /// Checked norm of a vector in `X` or `Y`.
    pub fn norm(&self, v: &[f64], space: Space, side: Side) -> Result<f64, GeometryError> {
        check_dim(self.dim(space), v.len())?;
        Ok(self.kind(side).eval(v))
    }

    /// Checked product norm of `(x, y)`: sum on the primal side, max on the dual side.
    pub fn product_norm(&self, x: &[f64], y: &[f64], side: Side) -> Result<f64, GeometryError> {
        check_dim(self.dim_x, x.len())?;
        check_dim(self.dim_y, y.len())?;
        Ok(self.product_norm_unchecked(x, y, side))
    }

    pub fn product_norm_unchecked(&self, x: &[f64], y: &[f64], side: Side) -> f64 {
        let k = self.kind(side);
        match side {
            Side::Primal => k.eval(x) + k.eval(y),
            Side::Dual => k.eval(x).max(k.eval(y)),
        }
    }

    pub fn px(&self, v: &[f64]) -> f64 {
        self.primal_kind.eval(v)
    }

    pub fn dx(&self, v: &[f64]) -> f64 {
        self.primal_kind.dual().eval(v)
    }
}

fn check_dim(expected: usize, got: usize) -> Result<(), GeometryError> {
    if expected == got {
        Ok(())
    } else {
        Err(GeometryError::DimensionMismatch { expected, got })
    }
}

/// Euclidean pairing `<a, b>`.
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(p, q)| p * q).sum()
}

pub fn sub(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(p, q)| p - q).collect()
}

pub fn add(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(p, q)| p + q).collect()
}

pub fn scale(a: &[f64], s: f64) -> Vec<f64> {
    a.iter().map(|p| p * s).collect()
}

/// `a + s * b`.
pub fn axpy(a: &[f64], s: f64, b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(p, q)| p + s * q).collect()
}

/// A dual vector `u*` with `<u*, u> = ||u||` and `||u*||_* = 1`.
///
/// `kind` is the primal norm of `u`. For the Linf primal norm the support
/// index is the lowest one attaining the maximum; for L1 zero coordinates
/// get a zero component.
pub fn norming_functional(u: &[f64], kind: NormKind) -> Result<Vec<f64>, GeometryError> {
    let n = kind.eval(u);
    if n == 0.0 || !n.is_finite() {
        return Err(GeometryError::ZeroVector);
    }
    Ok(match kind {
        NormKind::L2 => u.iter().map(|a| a / n).collect(),
        NormKind::L1 => u.iter().map(|&a| sign(a)).collect(),
        NormKind::Linf => {
            let i = u.iter().position(|a| a.abs() == n).unwrap_or(0);
            let mut out = vec![0.0; u.len()];
            out[i] = sign(u[i]);
            out
        }
    })
}

/// A primal vector `v` with `<y*, v> = 1` and `||v|| = 1`, for `||y*||_* = 1`.
pub fn norming_vector(y_star: &[f64], kind: NormKind) -> Result<Vec<f64>, GeometryError> {
    let n = kind.dual().eval(y_star);
    if (n - 1.0).abs() > 1e-9 {
        return Err(GeometryError::NotUnit(n));
    }
    norming_functional(y_star, kind.dual())
}

fn sign(a: f64) -> f64 {
    if a > 0.0 {
        1.0
    } else if a < 0.0 {
        -1.0
    } else {
        0.0
    }
}

/// Operator norm of `a: (R^n, kind) -> (R^m, kind)`: max column norm for
/// L1, max row sum for Linf, largest singular value for L2.
pub fn operator_norm(a: &DMatrix<f64>, kind: NormKind) -> f64 {
    let (m, n) = a.shape();
    if m == 0 || n == 0 {
        return 0.0;
    }
    match kind {
        NormKind::L1 => (0..n).map(|j| kind.eval(a.column(j).as_slice())).fold(0.0, f64::max),
        NormKind::Linf => (0..m)
            .map(|i| {
                let row: Vec<f64> = a.row(i).iter().copied().collect();
                NormKind::L1.eval(&row)
            })
            .fold(0.0, f64::max),
        NormKind::L2 => a.clone().svd(false, false).singular_values.max(),
    }
}

/// Deterministic low-discrepancy points in `[0, 1)^dims`.
///
/// A Halton sequence with a seeded Cranley-Patterson rotation: each
/// coordinate is shifted by a fixed uniform offset drawn from the seed.
#[derive(Debug, Clone)]
pub struct Halton {
    shift: Vec<f64>,
}

const PRIMES: [u64; 16] = [2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37, 41, 43, 47, 53];

impl Halton {
    pub fn new(dims: usize, seed: u64) -> Self {
        assert!(dims <= PRIMES.len(), "at most {} Halton dimensions", PRIMES.len());
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Self { shift: (0..dims).map(|_| rng.random::<f64>()).collect() }
    }

    pub fn point(&self, index: u64) -> Vec<f64> {
        self.shift
            .iter()
            .zip(PRIMES)
            .map(|(s, p)| {
                let v = radical_inverse(p, index + 1) + s;
                v - v.floor()
            })
            .collect()
    }
}

fn radical_inverse(base: u64, mut i: u64) -> f64 {
    let inv = 1.0 / base as f64;
    let mut f = inv;
    let mut out = 0.0;
    while i > 0 {
        out += f * (i % base) as f64;
        i /= base;
        f *= inv;
    }
    out
}

/// Maps a point of `[0,1)^d` to a direction on the unit sphere of `kind`.
fn cube_to_direction(w: &[f64], kind: NormKind) -> Option<Vec<f64>> {
    let d = w.len();
    let raw: Vec<f64> = match d {
        1 => vec![if w[0] < 0.5 { 1.0 } else { -1.0 }],
        2 => {
            let a = std::f64::consts::TAU * w[0];
            vec![a.cos(), a.sin()]
        }
        _ => w.iter().map(|c| 2.0 * c - 1.0).collect(),
    };
    let n = kind.eval(&raw);
    (n > 1e-12).then(|| raw.iter().map(|c| c / n).collect())
}

/// Seeded low-discrepancy points `p` with `r_inner < ||p - center|| <= r_outer`.
///
/// Radii are log-uniform when `r_inner > 0` (uniform otherwise), so every
/// scale of a geometric ladder is covered evenly.
pub fn sample_annulus(
    center: &[f64],
    r_inner: f64,
    r_outer: f64,
    n: usize,
    seed: u64,
    kind: NormKind,
) -> Result<Vec<Vec<f64>>, GeometryError> {
    if !(r_inner >= 0.0 && r_inner < r_outer && r_outer.is_finite()) {
        return Err(GeometryError::InvalidRadii(r_inner, r_outer));
    }
    let d = center.len();
    let dir_dims = if d == 2 { 1 } else { d };
    let h = Halton::new(dir_dims + 1, seed);
    let mut out = Vec::with_capacity(n);
    let mut i = 0u64;
    while out.len() < n {
        let w = h.point(i);
        i += 1;
        let dir = if d == 2 { cube_to_direction(&[w[0], 0.0], kind) } else { cube_to_direction(&w[..dir_dims], kind) };
        let Some(dir) = dir else { continue };
        let s = w[dir_dims];
        let r = if r_inner > 0.0 { r_outer * (r_inner / r_outer).powf(s) } else { r_outer * (1.0 - s) };
        if !(r > r_inner && r <= r_outer) {
            continue;
        }
        let p = axpy(center, r, &dir);
        let dist = kind.dist(&p, center);
        if dist > r_inner && dist <= r_outer {
            out.push(p);
        }
    }
    Ok(out)
}

/// A deterministic grid of `count` unit vectors for the given norm kind.
///
/// In one dimension this is `{+1, -1}` regardless of `count`.
pub fn sphere_grid(dim: usize, kind: NormKind, count: usize) -> Vec<Vec<f64>> {
    match dim {
        0 => vec![],
        1 => vec![vec![1.0], vec![-1.0]],
        2 => (0..count).filter_map(|i| cube_to_direction(&[i as f64 / count as f64, 0.0], kind)).collect(),
        _ => {
            let h = Halton::new(dim, 0);
            (0..count as u64).filter_map(|i| cube_to_direction(&h.point(i), kind)).collect()
        }
    }
}

/// Geometric radii `r_j = r0 * theta^j`, `j = 0..depth`, discretizing
/// "for all x near x-bar".
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScaleLadder {
    pub r0: f64,
    pub theta: f64,
    pub depth: usize,
    pub samples_per_scale: usize,
    pub seed: u64,
}

impl Default for ScaleLadder {
    fn default() -> Self {
        Self { r0: 1.0, theta: 0.25, depth: 12, samples_per_scale: 2000, seed: 0 }
    }
}

impl ScaleLadder {
    pub fn validate(&self) -> Result<(), GeometryError> {
        if !(self.r0 > 0.0 && self.r0.is_finite()) {
            return Err(GeometryError::InvalidLadder(format!("r0 must be positive, got {}", self.r0)));
        }
        if !(self.theta > 0.0 && self.theta < 1.0) {
            return Err(GeometryError::InvalidLadder(format!("theta must lie in (0,1), got {}", self.theta)));
        }
        if self.depth == 0 || self.samples_per_scale == 0 {
            return Err(GeometryError::InvalidLadder("depth and samples_per_scale must be positive".into()));
        }
        Ok(())
    }

    pub fn radius(&self, j: usize) -> f64 {
        self.r0 * self.theta.powi(j as i32)
    }

    pub fn radii(&self) -> Vec<f64> {
        (0..self.depth).map(|j| self.radius(j)).collect()
    }

    /// Level `j` with `r_{j+1} < t <= r_j`, if `t` falls inside the ladder.
    pub fn level_of(&self, t: f64) -> Option<usize> {
        if !(t > 0.0) || t > self.r0 {
            return None;
        }
        let j = ((t / self.r0).ln() / self.theta.ln()).floor().max(0.0) as usize;
        // Guard against rounding at the annulus boundaries.
        let j = if j > 0 && t > self.radius(j) { j - 1 } else { j };
        let j = if t <= self.radius(j + 1) { j + 1 } else { j };
        (j < self.depth).then_some(j)
    }

    /// Seed for level `j`, derived so different levels never share a stream.
    pub fn level_seed(&self, j: usize) -> u64 {
        self.seed.wrapping_mul(0x9E37_79B9_7F4A_7C15).wrapping_add(j as u64 + 1)
    }
}
