//! Named example mappings, their base points, and analytically known values.

use std::f64::consts::PI;
use std::sync::Arc;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{inverse, make_function_graph, sum_with_function, Evaluable, Func, FunctionMap, GraphPoint, SetValuedMap};
use crate::geometry::{sample_annulus, NormKind};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MapError {
    #[error("unknown catalog id `{0}`")]
    UnknownId(String),
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("invalid map parameters: {0}")]
    Invalid(String),
}

/// Representatives used when a coderivative value is an unbounded interval.
fn magnitude_reps(sign: f64) -> Vec<f64> {
    let mut v = vec![0.0];
    for i in [-8, -4, -2, -1, 0, 1, 2, 4, 8] {
        let m = 2f64.powi(i);
        if sign >= 0.0 {
            v.push(m);
        }
        if sign <= 0.0 {
            v.push(-m);
        }
    }
    v
}

/// Serializable description of a mapping, addressable from config files.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "id", rename_all = "snake_case", deny_unknown_fields)]
pub enum MapSpec {
    Identity {
        #[serde(default)]
        dim: Option<usize>,
    },
    Zero {
        #[serde(default)]
        dim_x: Option<usize>,
        #[serde(default)]
        dim_y: Option<usize>,
    },
    Scale {
        lambda: f64,
        #[serde(default)]
        dim: Option<usize>,
    },
    Linear {
        a: Vec<Vec<f64>>,
    },
    Square,
    Abs,
    Paraboloid,
    Xsin,
    Logsin,
    Interval,
    ComplAngle,
    /// `F + f` where `add` must describe a single-valued map.
    Sum {
        map: Box<MapSpec>,
        add: Box<MapSpec>,
    },
    Inverse {
        map: Box<MapSpec>,
    },
}

/// Adapts a single-valued [`SetValuedMap`] to [`Evaluable`].
struct ValueOf(Arc<dyn SetValuedMap>);

impl Evaluable for ValueOf {
    fn dim_in(&self) -> usize {
        self.0.dim_x()
    }
    fn dim_out(&self) -> usize {
        self.0.dim_y()
    }
    fn eval(&self, x: &[f64]) -> Vec<f64> {
        self.0.value(x).expect("checked single-valued at construction")
    }
    fn jacobian(&self, x: &[f64]) -> Option<DMatrix<f64>> {
        self.0.jacobian(x)
    }
}

/// Builds the mapping described by `spec`.
pub fn build_map(spec: &MapSpec) -> Result<Arc<dyn SetValuedMap>, MapError> {
    Ok(match spec {
        MapSpec::Identity { dim } => {
            let a = DMatrix::identity(dim.unwrap_or(1), dim.unwrap_or(1));
            Arc::new(linear_graph("identity", a))
        }
        MapSpec::Zero { dim_x, dim_y } => {
            let a = DMatrix::zeros(dim_y.unwrap_or(1), dim_x.unwrap_or(1));
            Arc::new(linear_graph("zero", a))
        }
        MapSpec::Scale { lambda, dim } => {
            if !lambda.is_finite() {
                return Err(MapError::Invalid(format!("scale factor {lambda}")));
            }
            let d = dim.unwrap_or(1);
            Arc::new(linear_graph(&format!("scale({lambda})"), DMatrix::identity(d, d) * *lambda))
        }
        MapSpec::Linear { a } => {
            let rows = a.len();
            let cols = a.first().map_or(0, Vec::len);
            if rows == 0 || cols == 0 || a.iter().any(|r| r.len() != cols) {
                return Err(MapError::Invalid("matrix must be non-empty and rectangular".into()));
            }
            if a.iter().flatten().any(|v| !v.is_finite()) {
                return Err(MapError::Invalid("matrix entries must be finite".into()));
            }
            Arc::new(make_linear_map(DMatrix::from_fn(rows, cols, |i, j| a[i][j])))
        }
        MapSpec::Square => Arc::new(square()),
        MapSpec::Abs => Arc::new(abs()),
        MapSpec::Paraboloid => Arc::new(paraboloid()),
        MapSpec::Xsin => Arc::new(xsin()),
        MapSpec::Logsin => Arc::new(logsin()),
        MapSpec::Interval => Arc::new(make_interval_map()),
        MapSpec::ComplAngle => Arc::new(make_complementarity_angle()),
        MapSpec::Sum { map, add } => {
            let inner = build_map(map)?;
            let f = build_map(add)?;
            let probe = vec![0.0; f.dim_x()];
            if f.value(&probe).is_none() {
                return Err(MapError::Invalid(format!("`{}` is not single-valued", f.name())));
            }
            Arc::new(sum_with_function(inner, Arc::new(ValueOf(f)))?)
        }
        MapSpec::Inverse { map } => Arc::new(inverse(build_map(map)?)),
    })
}

fn linear_graph(name: &str, a: DMatrix<f64>) -> FunctionMap {
    let (m, n) = a.shape();
    let (a1, a2, a3) = (a.clone(), a.clone(), a.clone());
    let func = Func::new(n, m, move |x| (&a1 * nalgebra::DVector::from_column_slice(x)).as_slice().to_vec())
        .with_jacobian(move |_| Some(a2.clone()));
    let map = make_function_graph(name, Arc::new(func));
    // Exact preimage distance when A is invertible, or zero (preimage is
    // everything or nothing).
    if m == n && a3.clone().try_inverse().is_some() {
        let inv = a3.try_inverse().expect("checked");
        map.with_preimage(move |x, ybar, kind| {
            let xp = &inv * nalgebra::DVector::from_column_slice(ybar);
            kind.dist(x, xp.as_slice())
        })
    } else if a3.iter().all(|v| *v == 0.0) {
        map.with_preimage(|_, ybar, kind| if kind.eval(ybar) == 0.0 { 0.0 } else { f64::INFINITY })
    } else {
        map
    }
}

/// Graph of `x -> Ax` with exact gradient `A`.
pub fn make_linear_map(a: DMatrix<f64>) -> FunctionMap {
    linear_graph("linear", a)
}

fn square() -> FunctionMap {
    let f = Func::new(1, 1, |x| vec![x[0] * x[0]]).with_jacobian(|x| Some(DMatrix::from_element(1, 1, 2.0 * x[0])));
    make_function_graph("square", Arc::new(f)).with_preimage(|x, ybar, _| {
        if ybar[0] < 0.0 {
            f64::INFINITY
        } else {
            let r = ybar[0].sqrt();
            (x[0] - r).abs().min((x[0] + r).abs())
        }
    })
}

fn abs() -> FunctionMap {
    let f = Func::new(1, 1, |x| vec![x[0].abs()])
        .with_jacobian(|x| (x[0] != 0.0).then(|| DMatrix::from_element(1, 1, x[0].signum())));
    make_function_graph("abs", Arc::new(f))
        .with_preimage(|x, ybar, _| if ybar[0] < 0.0 { f64::INFINITY } else { (x[0].abs() - ybar[0]).abs() })
        .with_coderivative(|x, _y, ys| {
            if x[0] != 0.0 {
                return Some(vec![vec![x[0].signum() * ys[0]]]);
            }
            // Normals at the kink are (a, b) with |a| <= -b.
            if ys[0] < 0.0 {
                return Some(vec![]);
            }
            let s = ys[0];
            if s == 0.0 {
                return Some(vec![vec![0.0]]);
            }
            Some([0.0, 0.25, -0.25, 0.5, -0.5, 1.0, -1.0].iter().map(|c| vec![c * s]).collect())
        })
}

fn paraboloid() -> FunctionMap {
    let f = Func::new(2, 1, |x| vec![x[0] * x[0] + x[1] * x[1]])
        .with_jacobian(|x| Some(DMatrix::from_row_slice(1, 2, &[2.0 * x[0], 2.0 * x[1]])));
    make_function_graph("paraboloid", Arc::new(f)).with_preimage(|x, ybar, kind| {
        if ybar[0] < 0.0 {
            return f64::INFINITY;
        }
        if ybar[0] == 0.0 {
            return kind.eval(x);
        }
        if (x[0] * x[0] + x[1] * x[1] - ybar[0]).abs() <= 1e-12 {
            return 0.0;
        }
        match kind {
            NormKind::L2 => (NormKind::L2.eval(x) - ybar[0].sqrt()).abs(),
            _ => {
                // Distance to the circle of radius sqrt(ybar) in a polyhedral
                // norm, by dense angular search.
                let r = ybar[0].sqrt();
                (0..4096)
                    .map(|i| {
                        let a = 2.0 * PI * i as f64 / 4096.0;
                        kind.dist(x, &[r * a.cos(), r * a.sin()])
                    })
                    .fold(f64::INFINITY, f64::min)
            }
        }
    })
}

/// Nearest element of `{0} ∪ {sign * c / k}` to `x` (1D).
fn nearest_reciprocal(x: f64, c: f64) -> f64 {
    if x == 0.0 {
        return 0.0;
    }
    let s = x.signum();
    let q = c / x.abs();
    let mut best = x.abs();
    for k in [q.floor(), q.floor() + 1.0] {
        if k >= 1.0 {
            best = best.min((x - s * c / k).abs());
        }
    }
    best
}

fn xsin_value(x: f64) -> f64 {
    if x == 0.0 {
        0.0
    } else {
        x * (1.0 / x).sin()
    }
}

fn xsin() -> FunctionMap {
    let f = Func::new(1, 1, |x| vec![xsin_value(x[0])]).with_jacobian(|x| {
        let t = x[0];
        (t != 0.0).then(|| DMatrix::from_element(1, 1, (1.0 / t).sin() - (1.0 / t).cos() / t))
    });
    let special = |c: &[f64], r_in: f64, r_out: f64| -> Vec<Vec<f64>> {
        let mut out = Vec::new();
        if c[0] != 0.0 {
            return out;
        }
        // Zeros 1/(m pi) and peaks 1/(pi/2 + m pi) with |f(x)| = |x|.
        for offset in [0.0, 0.5] {
            let m_lo = (1.0 / (PI * r_out) - offset).ceil().max(if offset == 0.0 { 1.0 } else { 0.0 });
            let m_hi = if r_in > 0.0 { (1.0 / (PI * r_in) - offset).floor() } else { m_lo + 5.0 };
            let count = ((m_hi - m_lo).max(0.0) as usize + 1).min(6);
            for i in 0..count {
                let m = if count > 1 {
                    (m_lo + ((m_hi - m_lo) * i as f64 / (count - 1) as f64).round()).max(m_lo)
                } else {
                    m_lo
                };
                let x = 1.0 / (PI * (m + offset));
                if x > r_in && x <= r_out {
                    out.push(vec![x]);
                    out.push(vec![-x]);
                }
            }
        }
        out.dedup();
        out
    };
    make_function_graph("xsin", Arc::new(f))
        .with_special_points(special)
        .with_preimage(|x, ybar, kind| {
            if ybar[0] == 0.0 {
                nearest_reciprocal(x[0], 1.0 / PI)
            } else {
                let m = make_function_graph("xsin", Arc::new(Func::new(1, 1, |x| vec![xsin_value(x[0])])));
                super::numeric_preimage_distance(&m, x, ybar, kind)
            }
        })
        .with_coderivative(|x, _y, ys| {
            let t = x[0];
            if t == 0.0 {
                // The graph fills the cone |y| <= |x| near the origin, so the
                // regular normal cone there is trivial.
                return Some(if ys[0] == 0.0 { vec![vec![0.0]] } else { vec![] });
            }
            let d = (1.0 / t).sin() - (1.0 / t).cos() / t;
            Some(vec![vec![d * ys[0]]])
        })
}

fn logsin_value(x: f64) -> f64 {
    if x == 0.0 {
        0.0
    } else {
        x * x.abs().ln().sin()
    }
}

/// `x sin(ln|x|)`: Lipschitz, oscillating at every scale, not semismooth* at 0.
fn logsin() -> FunctionMap {
    let f = Func::new(1, 1, |x| vec![logsin_value(x[0])]).with_jacobian(|x| {
        let t = x[0];
        (t != 0.0).then(|| {
            let l = t.abs().ln();
            DMatrix::from_element(1, 1, l.sin() + l.cos())
        })
    });
    let special = |c: &[f64], r_in: f64, r_out: f64| -> Vec<Vec<f64>> {
        let mut out = Vec::new();
        if c[0] != 0.0 {
            return out;
        }
        let m_lo = (-r_out.ln() / PI).ceil();
        let m_hi = if r_in > 0.0 { (-r_in.ln() / PI).floor() } else { m_lo + 3.0 };
        // Zeros exp(-m pi) and peaks exp(-pi/2 - m pi), where |f(x)| = |x|.
        let mut m = m_lo - 1.0;
        while m <= m_hi && out.len() < 24 {
            for l in [-m * PI, -m * PI - PI / 2.0] {
                let x = l.exp();
                if x > r_in && x <= r_out {
                    out.push(vec![x]);
                    out.push(vec![-x]);
                }
            }
            m += 1.0;
        }
        out
    };
    make_function_graph("logsin", Arc::new(f))
        .with_special_points(special)
        .with_preimage(|x, ybar, kind| {
            if ybar[0] != 0.0 {
                let m = make_function_graph("logsin", Arc::new(Func::new(1, 1, |x| vec![logsin_value(x[0])])));
                return super::numeric_preimage_distance(&m, x, ybar, kind);
            }
            let t = x[0].abs();
            if t == 0.0 {
                return 0.0;
            }
            let q = -t.ln() / PI;
            [q.floor(), q.ceil()].iter().map(|m| (t - (-m * PI).exp()).abs()).fold(t, f64::min)
        })
        .with_coderivative(|x, _y, ys| {
            let t = x[0];
            if t == 0.0 {
                return Some(if ys[0] == 0.0 { vec![vec![0.0]] } else { vec![] });
            }
            let l = t.abs().ln();
            Some(vec![vec![(l.sin() + l.cos()) * ys[0]]])
        })
}

/// `F(x) = [-x, x]` when `x = 1/k` for a positive integer `k`, `{x}` otherwise.
#[derive(Debug, Clone, Copy)]
pub struct IntervalMap;

pub fn make_interval_map() -> IntervalMap {
    IntervalMap
}

impl IntervalMap {
    /// True when `|x - 1/k| <= tol * x` for some positive integer `k`,
    /// tested as `|1/x - round(1/x)| <= tol / x`.
    pub fn is_reciprocal(x: f64, tol: f64) -> bool {
        if !(x > 0.0) || x > 1.0 + tol {
            return false;
        }
        let q = 1.0 / x;
        (q - q.round()).abs() <= tol.max(1e-13) * q && q.round() >= 1.0
    }
}

impl SetValuedMap for IntervalMap {
    fn name(&self) -> String {
        "interval".into()
    }
    fn dim_x(&self) -> usize {
        1
    }
    fn dim_y(&self) -> usize {
        1
    }
    fn contains(&self, x: &[f64], y: &[f64], tol: f64) -> bool {
        (y[0] - x[0]).abs() <= tol || (Self::is_reciprocal(x[0], tol) && y[0].abs() <= x[0] + tol)
    }
    fn image_distance(&self, x: &[f64], ybar: &[f64], _kind: NormKind) -> f64 {
        if Self::is_reciprocal(x[0], 1e-12) {
            (ybar[0].abs() - x[0]).max(0.0)
        } else {
            (ybar[0] - x[0]).abs()
        }
    }
    fn preimage_distance(&self, x: &[f64], ybar: &[f64], _kind: NormKind) -> f64 {
        // F^{-1}(y) = {y} ∪ {1/k : 1/k >= |y|}.
        let mut best = (x[0] - ybar[0]).abs();
        let kmax = if ybar[0] == 0.0 { f64::INFINITY } else { (1.0 / ybar[0].abs()).floor() };
        if kmax >= 1.0 {
            if x[0] > 0.0 {
                let q = 1.0 / x[0];
                for k in [q.floor(), q.floor() + 1.0] {
                    let k = k.clamp(1.0, kmax);
                    best = best.min((x[0] - 1.0 / k).abs());
                }
            } else if kmax.is_finite() {
                best = best.min((x[0] - 1.0 / kmax).abs());
            } else {
                best = best.min(x[0].abs());
            }
        }
        best
    }
    /// The reciprocals bracketing `x`, and the origin.
    fn isolated_points(&self, x: &[f64]) -> Vec<Vec<f64>> {
        let mut out = vec![vec![0.0]];
        if x[0] > 0.0 {
            let q = (1.0 / x[0]).floor();
            for k in [q - 1.0, q, q + 1.0, q + 2.0] {
                if k >= 1.0 {
                    out.push(vec![1.0 / k]);
                }
            }
        } else {
            out.push(vec![1.0]);
        }
        out
    }
    /// Diagonal points from the low-discrepancy sampler plus, for up to eight
    /// reciprocals in the annulus, the segment points `y ∈ {±x, ±x/2, 0}`.
    fn sample_graph(
        &self,
        center: &GraphPoint,
        r_inner: f64,
        r_outer: f64,
        n: usize,
        seed: u64,
        kind: NormKind,
    ) -> Vec<GraphPoint> {
        let mut out: Vec<GraphPoint> = sample_annulus(&center.x, r_inner, r_outer, n, seed, kind)
            .unwrap_or_default()
            .into_iter()
            .map(|x| GraphPoint { y: x.clone(), x })
            .collect();
        let c = center.x[0];
        let (lo, hi) = ((c + r_inner).max(c - r_outer), c + r_outer);
        let lo = lo.max(f64::MIN_POSITIVE);
        if hi > 0.0 {
            let k_lo = (1.0 / hi).ceil().max(1.0);
            let k_hi = (1.0 / lo).floor().min(k_lo + 1e7);
            let count = ((k_hi - k_lo).max(-1.0) + 1.0) as usize;
            let take = count.min(8);
            for i in 0..take {
                let k = if take > 1 {
                    (k_lo + ((k_hi - k_lo) * i as f64 / (take - 1) as f64).round()).min(k_hi)
                } else {
                    k_lo
                };
                let x = 1.0 / k;
                let d = (x - c).abs();
                if d > r_inner && d <= r_outer {
                    for s in [-1.0, -0.5, 0.0, 0.5, 1.0] {
                        out.push(GraphPoint { x: vec![x], y: vec![s * x] });
                    }
                }
            }
        }
        out.dedup();
        out
    }
    fn coderivative(&self, x: &[f64], y: &[f64], ys: &[f64]) -> Option<Vec<Vec<f64>>> {
        let (t, s) = (x[0], y[0]);
        if t == 0.0 {
            return Some(if ys[0] == 0.0 { vec![vec![0.0]] } else { vec![] });
        }
        if !Self::is_reciprocal(t, 1e-12) {
            return Some(vec![vec![ys[0]]]);
        }
        let tol = 1e-12 * t;
        if (s - t).abs() <= tol {
            // Top endpoint, where the segment meets the diagonal.
            Some(if ys[0] <= 0.0 { vec![vec![ys[0]]] } else { vec![] })
        } else if (s + t).abs() <= tol {
            // Bottom endpoint: any x* once y* >= 0.
            Some(if ys[0] >= 0.0 { magnitude_reps(0.0).into_iter().map(|v| vec![v]).collect() } else { vec![] })
        } else {
            Some(if ys[0] == 0.0 { vec![vec![0.0]] } else { vec![] })
        }
    }
}

/// The complementarity angle `{(a, b) : a, b >= 0, ab = 0}` viewed as the
/// graph of `F(a) = {0}` for `a > 0`, `[0, inf)` at `a = 0`, empty for `a < 0`.
#[derive(Debug, Clone, Copy)]
pub struct ComplAngleMap;

pub fn make_complementarity_angle() -> ComplAngleMap {
    ComplAngleMap
}

impl SetValuedMap for ComplAngleMap {
    fn name(&self) -> String {
        "compl_angle".into()
    }
    fn dim_x(&self) -> usize {
        1
    }
    fn dim_y(&self) -> usize {
        1
    }
    fn contains(&self, x: &[f64], y: &[f64], tol: f64) -> bool {
        x[0] >= -tol && y[0] >= -tol && x[0] * y[0] <= tol
    }
    fn image_distance(&self, x: &[f64], ybar: &[f64], _kind: NormKind) -> f64 {
        if x[0] > 0.0 {
            ybar[0].abs()
        } else if x[0] == 0.0 {
            (-ybar[0]).max(0.0)
        } else {
            f64::INFINITY
        }
    }
    fn preimage_distance(&self, x: &[f64], ybar: &[f64], _kind: NormKind) -> f64 {
        if ybar[0] > 0.0 {
            x[0].abs()
        } else if ybar[0] == 0.0 {
            (-x[0]).max(0.0)
        } else {
            f64::INFINITY
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
        let mut out: Vec<GraphPoint> = sample_annulus(&center.x, r_inner, r_outer, n, seed, kind)
            .unwrap_or_default()
            .into_iter()
            .filter(|x| x[0] > 0.0)
            .map(|x| GraphPoint { x, y: vec![0.0] })
            .collect();
        let d = center.x[0].abs();
        if d > r_inner && d <= r_outer {
            for y in [0.0, 0.25, 0.5, 1.0, 2.0] {
                out.push(GraphPoint { x: vec![0.0], y: vec![center.y[0].max(0.0) + y * r_outer] });
            }
        }
        out
    }
    fn coderivative(&self, x: &[f64], y: &[f64], ys: &[f64]) -> Option<Vec<Vec<f64>>> {
        let (a, b) = (x[0], y[0]);
        Some(if a > 0.0 {
            vec![vec![0.0]]
        } else if b > 0.0 {
            if ys[0] == 0.0 {
                vec![vec![0.0]]
            } else {
                vec![]
            }
        } else if ys[0] >= 0.0 {
            // Origin: normal cone is the nonpositive quadrant.
            magnitude_reps(-1.0).into_iter().map(|v| vec![v]).collect()
        } else {
            vec![]
        })
    }
}

/// An analytically known value attached to a catalog entry.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KnownValue {
    pub quantity: String,
    #[serde(with = "crate::xreal")]
    pub value: f64,
    pub note: String,
}

fn kv(quantity: &str, value: f64, note: &str) -> KnownValue {
    KnownValue { quantity: quantity.into(), value, note: note.into() }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CatalogEntry {
    pub id: String,
    pub spec: MapSpec,
    pub base: GraphPoint,
    pub description: String,
    pub known_values: Vec<KnownValue>,
}

impl CatalogEntry {
    pub fn map(&self) -> Arc<dyn SetValuedMap> {
        build_map(&self.spec).expect("catalog specs are valid")
    }
}

fn origin(n: usize, m: usize) -> GraphPoint {
    GraphPoint::new(vec![0.0; n], vec![0.0; m])
}

/// All catalog entries, in a fixed order.
pub fn catalog() -> Vec<CatalogEntry> {
    let e = |id: &str, spec: MapSpec, base: GraphPoint, desc: &str, kv: Vec<KnownValue>| CatalogEntry {
        id: id.into(),
        spec,
        base,
        description: desc.into(),
        known_values: kv,
    };
    let exact = "analytic: closed-form distance ratio";
    vec![
        e(
            "identity",
            MapSpec::Identity { dim: None },
            origin(1, 1),
            "F(x) = x",
            vec![
                kv("rg", 1.0, exact),
                kv("srg", 1.0, exact),
                kv("ssrg", 1.0, exact),
                kv("srg1", 1.0, "analytic: x* = y*, ratio 1"),
                kv("srg2", 1.0, "analytic: ratio 1"),
                kv("srg4", 1.0, "analytic: ratio 1"),
                kv("srg1p", 2.0, "analytic: ratio + |x*| = 2"),
            ],
        ),
        e(
            "zero",
            MapSpec::Zero { dim_x: None, dim_y: None },
            origin(1, 1),
            "F(x) = 0",
            vec![
                kv("srg", f64::INFINITY, "analytic: every x lies in the preimage, inf over the empty set"),
                kv("srg1", 0.0, "analytic: x* = 0 at every point"),
                kv("srg1p", 0.0, "analytic: x* = 0 at every point"),
                kv("srg2", 0.0, "analytic: ratio 0"),
                kv("rad_lip", 0.0, "analytic: destabilized by arbitrarily small Lipschitz terms"),
            ],
        ),
        e(
            "scale",
            MapSpec::Scale { lambda: 2.0, dim: None },
            origin(1, 1),
            "F(x) = 2x",
            vec![kv("rg", 2.0, exact), kv("srg", 2.0, exact), kv("clm", 2.0, "analytic: linear map")],
        ),
        e(
            "linear",
            MapSpec::Linear { a: vec![vec![0.0, 1.0], vec![-2.0, 0.0]] },
            origin(2, 2),
            "F(x) = Ax with singular values {2, 1}",
            vec![kv("rg_l2", 1.0, "analytic: smallest singular value")],
        ),
        e(
            "square",
            MapSpec::Square,
            origin(1, 1),
            "F(x) = x^2",
            vec![kv("clm", 0.0, "analytic: |x^2| / |x| -> 0"), kv("srg1", 0.0, "analytic: x* = 2x y* -> 0")],
        ),
        e(
            "abs",
            MapSpec::Abs,
            origin(1, 1),
            "F(x) = |x|, positively homogeneous",
            vec![kv("clm", 1.0, "analytic: |f(x)| = |x|"), kv("srg", 1.0, exact)],
        ),
        e(
            "paraboloid",
            MapSpec::Paraboloid,
            origin(2, 1),
            "F(x) = x1^2 + x2^2",
            vec![kv("clm", 0.0, "analytic: quadratic")],
        ),
        e(
            "xsin",
            MapSpec::Xsin,
            origin(1, 1),
            "F(x) = x sin(1/x), F(0) = 0",
            vec![
                kv("clm", 1.0, "analytic: |f(x)| <= |x| with equality at 2/((4k+1) pi)"),
                kv("srg2", 0.0, "analytic: zeros at 1/(k pi) carry coderivative elements"),
                kv("srg4", 1.0, "analytic: only peak points pass the semismooth* filter"),
                kv("srg4p", 1.0, "analytic: only peak points pass the semismooth* filter"),
                kv("rad_fclm_ss", 1.0, "analytic: sandwiched between srg4 and srg4p"),
            ],
        ),
        e(
            "logsin",
            MapSpec::Logsin,
            origin(1, 1),
            "F(x) = x sin(ln|x|), not semismooth* at 0",
            vec![kv("ss_quotient_at_zeros", 1.0, "analytic: f(x) = 0, f'(x) = 1 at x = exp(-2 pi k)")],
        ),
        e(
            "interval",
            MapSpec::Interval,
            origin(1, 1),
            "F(x) = [-x, x] at x = 1/k, {x} otherwise",
            vec![
                kv("srg2", 1.0, "analytic: diagonal and segment endpoints have ratio 1"),
                kv("srg2p", 1.0, "analytic: diagonal and segment endpoints have ratio 1"),
                kv("ssrg", 0.0, "analytic: (1/k, 0) lies in the graph"),
                kv("rad_fclm", 1.0, "analytic: equals srg2"),
            ],
        ),
        e(
            "compl_angle",
            MapSpec::ComplAngle,
            origin(1, 1),
            "complementarity angle a, b >= 0, ab = 0",
            vec![kv("semismooth_star", 1.0, "analytic: the set is a union of two rays")],
        ),
    ]
}

pub fn catalog_entry(id: &str) -> Result<CatalogEntry, MapError> {
    catalog().into_iter().find(|e| e.id == id).ok_or_else(|| MapError::UnknownId(id.into()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mappings::DEFAULT_TOL;

    #[test]
    fn interval_examples() {
        let m = make_interval_map();
        assert!(m.contains(&[1.0 / 3.0], &[0.2], DEFAULT_TOL));
        assert!(m.contains(&[0.4], &[0.4], DEFAULT_TOL));
        assert!(!m.contains(&[0.4], &[0.1], DEFAULT_TOL));
        assert_eq!(m.preimage_distance(&[0.3], &[0.0], NormKind::L1), (0.3f64 - 1.0 / 3.0).abs());
    }

    #[test]
    fn compl_angle_examples() {
        let m = make_complementarity_angle();
        assert!(m.contains(&[0.0], &[0.0], DEFAULT_TOL));
        assert!(m.contains(&[1.0], &[0.0], DEFAULT_TOL));
        assert!(!m.contains(&[1.0], &[1.0], DEFAULT_TOL));
        // Interior of the horizontal ray: normals are vertical, so x* = 0.
        assert_eq!(m.coderivative(&[1.0], &[0.0], &[1.0]), Some(vec![vec![0.0]]));
        assert_eq!(m.coderivative(&[1.0], &[0.0], &[-1.0]), Some(vec![vec![0.0]]));
    }

    #[test]
    fn linear_coderivative_is_transpose() {
        let m = make_linear_map(DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 2.0]));
        assert!(m.contains(&[1.0, 2.0], &[1.0, 4.0], DEFAULT_TOL));
        assert_eq!(m.coderivative(&[0.3, 0.1], &[0.3, 0.2], &[1.0, 1.0]), Some(vec![vec![1.0, 2.0]]));
        let id = build_map(&MapSpec::Linear { a: vec![vec![1.0, 0.0], vec![0.0, 1.0]] }).unwrap();
        assert!(id.contains(&[1.0, 2.0], &[1.0, 2.0], DEFAULT_TOL));
    }

    #[test]
    fn catalog_is_complete() {
        let c = catalog();
        assert!(c.len() >= 8);
        for id in ["identity", "zero", "xsin", "interval", "compl_angle"] {
            assert!(catalog_entry(id).is_ok());
        }
        for e in &c {
            assert!(e.known_values.iter().all(|k| !k.note.is_empty()));
            let m = e.map();
            assert!(m.contains(&e.base.x, &e.base.y, DEFAULT_TOL), "{}", e.id);
        }
    }

    #[test]
    fn samplers_stay_on_graph() {
        for e in catalog() {
            let m = e.map();
            let pts = m.sample_graph(&e.base, 0.01, 0.5, 200, 7, NormKind::L1);
            assert!(!pts.is_empty(), "{}", e.id);
            for p in pts {
                assert!(m.contains(&p.x, &p.y, DEFAULT_TOL), "{} {:?}", e.id, p);
                assert_eq!(m.preimage_distance(&p.x, &p.y, NormKind::L1), 0.0, "{} {:?}", e.id, p);
            }
        }
    }

    #[test]
    fn map_spec_parses_nested_toml() {
        let s: MapSpec =
            toml::from_str("id = \"sum\"\n[map]\nid = \"identity\"\n[add]\nid = \"scale\"\nlambda = -1.0\n").unwrap();
        let m = build_map(&s).unwrap();
        assert!(m.contains(&[0.7], &[0.0], DEFAULT_TOL));
        assert!(toml::from_str::<MapSpec>("id = \"nope\"").is_err());
    }
}
