//! Set-valued mappings `F: R^n => R^m` described by oracles, plus the
//! sum-with-a-function and inverse combinators.

mod catalog;

pub use catalog::{
    build_map, catalog, catalog_entry, make_complementarity_angle, make_interval_map, make_linear_map, CatalogEntry,
    ComplAngleMap, IntervalMap, KnownValue, MapError, MapSpec,
};

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::geometry::{self, sample_annulus, sphere_grid, NormKind};

/// Default membership tolerance.
pub const DEFAULT_TOL: f64 = 1e-9;

/// A point `(x, y)` of a graph.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GraphPoint {
    pub x: Vec<f64>,
    pub y: Vec<f64>,
}

impl GraphPoint {
    pub fn new(x: Vec<f64>, y: Vec<f64>) -> Self {
        Self { x, y }
    }
}

/// A single-valued map `R^n -> R^m` with an optional Jacobian.
pub trait Evaluable: Send + Sync {
    fn dim_in(&self) -> usize;
    fn dim_out(&self) -> usize;
    fn eval(&self, x: &[f64]) -> Vec<f64>;
    /// The `m x n` Jacobian where the map is differentiable.
    fn jacobian(&self, _x: &[f64]) -> Option<DMatrix<f64>> {
        None
    }
}

type ValueFn = dyn Fn(&[f64]) -> Vec<f64> + Send + Sync;
type JacFn = dyn Fn(&[f64]) -> Option<DMatrix<f64>> + Send + Sync;

/// An [`Evaluable`] built from closures.
#[derive(Clone)]
pub struct Func {
    dim_in: usize,
    dim_out: usize,
    f: Arc<ValueFn>,
    jac: Option<Arc<JacFn>>,
}

impl Func {
    pub fn new(dim_in: usize, dim_out: usize, f: impl Fn(&[f64]) -> Vec<f64> + Send + Sync + 'static) -> Self {
        Self { dim_in, dim_out, f: Arc::new(f), jac: None }
    }

    pub fn with_jacobian(mut self, jac: impl Fn(&[f64]) -> Option<DMatrix<f64>> + Send + Sync + 'static) -> Self {
        self.jac = Some(Arc::new(jac));
        self
    }
}

impl Evaluable for Func {
    fn dim_in(&self) -> usize {
        self.dim_in
    }
    fn dim_out(&self) -> usize {
        self.dim_out
    }
    fn eval(&self, x: &[f64]) -> Vec<f64> {
        (self.f)(x)
    }
    fn jacobian(&self, x: &[f64]) -> Option<DMatrix<f64>> {
        self.jac.as_ref().and_then(|j| j(x))
    }
}

/// Oracle bundle describing a set-valued mapping.
///
/// Coderivative oracles return a finite list of representatives of the
/// Fréchet coderivative `D*F(x,y)(y*)`. When that set is unbounded the list
/// always contains its minimal-norm element; an empty list means the set is
/// empty, and `None` means no analytic oracle is available.
pub trait SetValuedMap: Send + Sync {
    fn name(&self) -> String;
    fn dim_x(&self) -> usize;
    fn dim_y(&self) -> usize;
    fn contains(&self, x: &[f64], y: &[f64], tol: f64) -> bool;
    /// `d(ybar, F(x))`, `+inf` when `F(x)` is empty.
    fn image_distance(&self, x: &[f64], ybar: &[f64], kind: NormKind) -> f64;
    /// `d(x, F^{-1}(ybar))`, `+inf` when the preimage is empty.
    fn preimage_distance(&self, x: &[f64], ybar: &[f64], kind: NormKind) -> f64;
    /// Up to `n` graph points with `r_inner < ||x - center.x|| <= r_outer`.
    fn sample_graph(
        &self,
        center: &GraphPoint,
        r_inner: f64,
        r_outer: f64,
        n: usize,
        seed: u64,
        kind: NormKind,
    ) -> Vec<GraphPoint>;
    fn coderivative(&self, _x: &[f64], _y: &[f64], _y_star: &[f64]) -> Option<Vec<Vec<f64>>> {
        None
    }
    fn closed_graph(&self) -> bool {
        true
    }
    /// The unique image point when `F` is single-valued.
    fn value(&self, _x: &[f64]) -> Option<Vec<f64>> {
        None
    }
    /// Jacobian of a single-valued `F`, where differentiable.
    fn jacobian(&self, _x: &[f64]) -> Option<DMatrix<f64>> {
        None
    }
    /// Points near `x` where `F` jumps to a larger value. Preimages of sums
    /// can sit on them, and a ray search steps over them.
    fn isolated_points(&self, _x: &[f64]) -> Vec<Vec<f64>> {
        Vec::new()
    }
}

/// `J^T w` for an `m x n` Jacobian.
pub fn jt_mul(j: &DMatrix<f64>, w: &[f64]) -> Vec<f64> {
    (j.transpose() * DVector::from_column_slice(w)).as_slice().to_vec()
}

type PreimageFn = dyn Fn(&[f64], &[f64], NormKind) -> f64 + Send + Sync;
type SpecialFn = dyn Fn(&[f64], f64, f64) -> Vec<Vec<f64>> + Send + Sync;
type CoderivFn = dyn Fn(&[f64], &[f64], &[f64]) -> Option<Vec<Vec<f64>>> + Send + Sync;

/// Graph of a single-valued function.
#[derive(Clone)]
pub struct FunctionMap {
    name: String,
    func: Arc<dyn Evaluable>,
    preimage: Option<Arc<PreimageFn>>,
    special: Option<Arc<SpecialFn>>,
    coderiv: Option<Arc<CoderivFn>>,
}

/// Wraps a function as a set-valued map with membership `||y - f(x)||_inf <= tol`.
pub fn make_function_graph(name: &str, func: Arc<dyn Evaluable>) -> FunctionMap {
    FunctionMap { name: name.to_string(), func, preimage: None, special: None, coderiv: None }
}

impl FunctionMap {
    /// Supplies an exact `d(x, f^{-1}(ybar))`.
    pub fn with_preimage(mut self, p: impl Fn(&[f64], &[f64], NormKind) -> f64 + Send + Sync + 'static) -> Self {
        self.preimage = Some(Arc::new(p));
        self
    }

    /// Supplies structural abscissae (zeros, extrema) that the sampler adds to
    /// every annulus they fall into.
    pub fn with_special_points(
        mut self,
        s: impl Fn(&[f64], f64, f64) -> Vec<Vec<f64>> + Send + Sync + 'static,
    ) -> Self {
        self.special = Some(Arc::new(s));
        self
    }

    /// Overrides the Jacobian-based coderivative (for kinks).
    pub fn with_coderivative(
        mut self,
        c: impl Fn(&[f64], &[f64], &[f64]) -> Option<Vec<Vec<f64>>> + Send + Sync + 'static,
    ) -> Self {
        self.coderiv = Some(Arc::new(c));
        self
    }

    pub fn function(&self) -> Arc<dyn Evaluable> {
        self.func.clone()
    }
}

impl SetValuedMap for FunctionMap {
    fn name(&self) -> String {
        self.name.clone()
    }
    fn dim_x(&self) -> usize {
        self.func.dim_in()
    }
    fn dim_y(&self) -> usize {
        self.func.dim_out()
    }
    fn contains(&self, x: &[f64], y: &[f64], tol: f64) -> bool {
        NormKind::Linf.dist(y, &self.func.eval(x)) <= tol
    }
    fn image_distance(&self, x: &[f64], ybar: &[f64], kind: NormKind) -> f64 {
        kind.dist(ybar, &self.func.eval(x))
    }
    fn preimage_distance(&self, x: &[f64], ybar: &[f64], kind: NormKind) -> f64 {
        match &self.preimage {
            Some(p) => p(x, ybar, kind),
            None => numeric_preimage_distance(self, x, ybar, kind),
        }
    }
    fn sample_graph(
        &self,
        center: &GraphPoint,
        r_inner: f64,
        r_outer: f64,
        n: usize,
        seed: u64,
        kind: NormKind,
    ) -> Vec<GraphPoint> {
        let mut xs = sample_annulus(&center.x, r_inner, r_outer, n, seed, kind).unwrap_or_default();
        if let Some(s) = &self.special {
            xs.extend(s(&center.x, r_inner, r_outer).into_iter().filter(|p| {
                let d = kind.dist(p, &center.x);
                d > r_inner && d <= r_outer
            }));
        }
        xs.into_iter()
            .map(|x| {
                let y = self.func.eval(&x);
                GraphPoint { x, y }
            })
            .collect()
    }
    fn coderivative(&self, x: &[f64], y: &[f64], y_star: &[f64]) -> Option<Vec<Vec<f64>>> {
        if let Some(c) = &self.coderiv {
            return c(x, y, y_star);
        }
        self.func.jacobian(x).map(|j| vec![jt_mul(&j, y_star)])
    }
    fn value(&self, x: &[f64]) -> Option<Vec<f64>> {
        Some(self.func.eval(x))
    }
    fn jacobian(&self, x: &[f64]) -> Option<DMatrix<f64>> {
        self.func.jacobian(x)
    }
}

/// `d(x, F^{-1}(ybar))` by ray search when no exact oracle exists.
///
/// Rays leave `x` along a deterministic direction grid; on each ray the
/// first radius where the residual changes sign (single-valued maps with
/// `m = 1`) or the image distance drops below tolerance is bracketed on a
/// geometric grid and refined by bisection. Only desk-scale dimensions are
/// targeted, and the result is an upper bound when `n > 1`.
pub fn numeric_preimage_distance(map: &dyn SetValuedMap, x: &[f64], ybar: &[f64], kind: NormKind) -> f64 {
    const TOL: f64 = 1e-12;
    if map.image_distance(x, ybar, kind) <= TOL {
        return 0.0;
    }
    let signed = map.dim_y() == 1 && map.value(x).is_some();
    let resid = |p: &[f64]| -> f64 {
        if signed {
            map.value(p).map(|v| v[0] - ybar[0]).unwrap_or(f64::NAN)
        } else {
            map.image_distance(p, ybar, kind)
        }
    };
    let hit = |r0: f64, r1: f64| -> bool {
        if signed {
            r0 == 0.0 || r1 == 0.0 || (r0 < 0.0) != (r1 < 0.0)
        } else {
            r1 <= TOL
        }
    };
    let scale = kind.eval(x).max(1.0);
    let steps = 400;
    let (rmin, rmax) = (1e-12 * scale, 8.0 * scale);
    let ratio = (rmax / rmin).powf(1.0 / steps as f64);
    let dirs = sphere_grid(x.len(), kind, 32);
    let mut best = f64::INFINITY;
    for d in &dirs {
        let at = |r: f64| geometry::axpy(x, r, d);
        let mut prev_r = 0.0;
        let mut prev_v = resid(x);
        let mut r = rmin;
        for _ in 0..=steps {
            if r >= best {
                break;
            }
            let v = resid(&at(r));
            if v.is_finite() && prev_v.is_finite() && hit(prev_v, v) {
                let (mut lo, mut hi) = (prev_r, r);
                let mut vlo = prev_v;
                for _ in 0..80 {
                    let mid = 0.5 * (lo + hi);
                    let vm = resid(&at(mid));
                    if hit(vlo, vm) {
                        hi = mid;
                    } else {
                        lo = mid;
                        vlo = vm;
                    }
                }
                best = best.min(hi);
                break;
            }
            prev_r = r;
            prev_v = v;
            r *= ratio;
        }
    }
    best
}

/// `F + f` for a single-valued `f`.
#[derive(Clone)]
pub struct SumMap {
    inner: Arc<dyn SetValuedMap>,
    add: Arc<dyn Evaluable>,
}

/// Builds `x => F(x) + f(x)`.
pub fn sum_with_function(inner: Arc<dyn SetValuedMap>, add: Arc<dyn Evaluable>) -> Result<SumMap, MapError> {
    if inner.dim_x() != add.dim_in() || inner.dim_y() != add.dim_out() {
        return Err(MapError::Dimension(format!(
            "cannot add {}->{} function to {}=>{} map",
            add.dim_in(),
            add.dim_out(),
            inner.dim_x(),
            inner.dim_y()
        )));
    }
    Ok(SumMap { inner, add })
}

impl SumMap {
    fn shift(&self, x: &[f64], y: &[f64]) -> Vec<f64> {
        geometry::sub(y, &self.add.eval(x))
    }
}

impl SetValuedMap for SumMap {
    fn name(&self) -> String {
        format!("sum({}, f)", self.inner.name())
    }
    fn dim_x(&self) -> usize {
        self.inner.dim_x()
    }
    fn dim_y(&self) -> usize {
        self.inner.dim_y()
    }
    fn contains(&self, x: &[f64], y: &[f64], tol: f64) -> bool {
        self.inner.contains(x, &self.shift(x, y), tol)
    }
    fn image_distance(&self, x: &[f64], ybar: &[f64], kind: NormKind) -> f64 {
        self.inner.image_distance(x, &self.shift(x, ybar), kind)
    }
    fn preimage_distance(&self, x: &[f64], ybar: &[f64], kind: NormKind) -> f64 {
        let isolated = self
            .inner
            .isolated_points(x)
            .into_iter()
            .filter(|p| self.image_distance(p, ybar, kind) <= 1e-12)
            .map(|p| kind.dist(x, &p))
            .fold(f64::INFINITY, f64::min);
        isolated.min(numeric_preimage_distance(self, x, ybar, kind))
    }
    fn isolated_points(&self, x: &[f64]) -> Vec<Vec<f64>> {
        self.inner.isolated_points(x)
    }
    fn sample_graph(
        &self,
        center: &GraphPoint,
        r_inner: f64,
        r_outer: f64,
        n: usize,
        seed: u64,
        kind: NormKind,
    ) -> Vec<GraphPoint> {
        let c = GraphPoint { x: center.x.clone(), y: self.shift(&center.x, &center.y) };
        self.inner
            .sample_graph(&c, r_inner, r_outer, n, seed, kind)
            .into_iter()
            .map(|p| {
                let y = geometry::add(&p.y, &self.add.eval(&p.x));
                GraphPoint { x: p.x, y }
            })
            .collect()
    }
    /// Exact shift: `D*(F+f)(x, y)(y*) = D*F(x, y - f(x))(y*) + grad f(x)^T y*`.
    fn coderivative(&self, x: &[f64], y: &[f64], y_star: &[f64]) -> Option<Vec<Vec<f64>>> {
        let j = self.add.jacobian(x)?;
        let base = self.inner.coderivative(x, &self.shift(x, y), y_star)?;
        let g = jt_mul(&j, y_star);
        Some(base.into_iter().map(|xs| geometry::add(&xs, &g)).collect())
    }
    fn closed_graph(&self) -> bool {
        self.inner.closed_graph()
    }
    fn value(&self, x: &[f64]) -> Option<Vec<f64>> {
        self.inner.value(x).map(|v| geometry::add(&v, &self.add.eval(x)))
    }
    fn jacobian(&self, x: &[f64]) -> Option<DMatrix<f64>> {
        Some(self.inner.jacobian(x)? + self.add.jacobian(x)?)
    }
}

/// `F^{-1}`: graph coordinates swapped.
#[derive(Clone)]
pub struct InverseMap {
    inner: Arc<dyn SetValuedMap>,
}

pub fn inverse(inner: Arc<dyn SetValuedMap>) -> InverseMap {
    InverseMap { inner }
}

impl SetValuedMap for InverseMap {
    fn name(&self) -> String {
        format!("inverse({})", self.inner.name())
    }
    fn dim_x(&self) -> usize {
        self.inner.dim_y()
    }
    fn dim_y(&self) -> usize {
        self.inner.dim_x()
    }
    fn contains(&self, x: &[f64], y: &[f64], tol: f64) -> bool {
        self.inner.contains(y, x, tol)
    }
    fn image_distance(&self, x: &[f64], ybar: &[f64], kind: NormKind) -> f64 {
        self.inner.preimage_distance(ybar, x, kind)
    }
    fn preimage_distance(&self, x: &[f64], ybar: &[f64], kind: NormKind) -> f64 {
        self.inner.image_distance(ybar, x, kind)
    }
    /// Samples the inner graph over a wider ball and keeps swapped points in
    /// the requested annulus. A zero inner radius also keeps points with
    /// `x = center.x`, so vertical pieces of the graph are reachable.
    fn sample_graph(
        &self,
        center: &GraphPoint,
        r_inner: f64,
        r_outer: f64,
        n: usize,
        seed: u64,
        kind: NormKind,
    ) -> Vec<GraphPoint> {
        let c = GraphPoint { x: center.y.clone(), y: center.x.clone() };
        let mut out = Vec::new();
        for widen in [1.0, 4.0, 16.0] {
            let pts = self.inner.sample_graph(&c, 0.0, r_outer * widen, 4 * n, seed, kind);
            out = pts
                .into_iter()
                .filter(|p| {
                    let d = kind.dist(&p.y, &center.x);
                    (d > r_inner || r_inner == 0.0) && d <= r_outer
                })
                .map(|p| GraphPoint { x: p.y, y: p.x })
                .take(n)
                .collect();
            if out.len() >= n / 4 {
                break;
            }
        }
        out
    }
    fn closed_graph(&self) -> bool {
        self.inner.closed_graph()
    }
}
