//! Fréchet ε-normals and ε-coderivatives, coderivative shifts, and
//! semismooth* tests.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{self, dot, operator_norm, sample_annulus, sphere_grid, NormKind, ScaleLadder};
use crate::mappings::{Evaluable, GraphPoint, SetValuedMap};
use crate::par;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum VariationalError {
    #[error("no analytic coderivative oracle at this point")]
    Unavailable,
    #[error("missing gradient at x = {0:?}")]
    MissingGradient(Vec<f64>),
    #[error("calmness constant must lie in [0, 1), got {0}")]
    CalmConstant(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ElementSource {
    Analytic,
    Sampled,
}

/// `x* ∈ D*_eps F(x, y)(y*)`, with the scale at which `eps` was certified.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoderivElement {
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    pub y_star: Vec<f64>,
    pub x_star: Vec<f64>,
    pub eps: f64,
    pub source: ElementSource,
    /// Radius of the ball the quotient was sampled on (0 for analytic).
    pub cert_radius: f64,
    pub cert_samples: usize,
}

/// A set in `R^d` known through a sampler.
pub trait SampledSet: Sync {
    fn dim(&self) -> usize;
    fn norm(&self, v: &[f64]) -> f64;
    /// Points of the set in the closed ball of radius `radius` around `center`.
    fn sample_ball(&self, center: &[f64], radius: f64, n: usize, seed: u64) -> Vec<Vec<f64>>;
}

/// The graph of a mapping as a subset of `X × Y` with the sum norm.
pub struct GraphSet<'a> {
    pub map: &'a dyn SetValuedMap,
    pub kind: NormKind,
}

impl SampledSet for GraphSet<'_> {
    fn dim(&self) -> usize {
        self.map.dim_x() + self.map.dim_y()
    }
    fn norm(&self, v: &[f64]) -> f64 {
        let n = self.map.dim_x();
        self.kind.eval(&v[..n]) + self.kind.eval(&v[n..])
    }
    fn sample_ball(&self, center: &[f64], radius: f64, n: usize, seed: u64) -> Vec<Vec<f64>> {
        let nx = self.map.dim_x();
        let c = GraphPoint::new(center[..nx].to_vec(), center[nx..].to_vec());
        self.map
            .sample_graph(&c, 0.0, radius, n, seed, self.kind)
            .into_iter()
            .map(|p| [p.x, p.y].concat())
            .filter(|w| self.norm(&geometry::sub(w, center)) <= radius)
            .collect()
    }
}

/// A set given by a membership-free sampler closure.
pub struct FnSet<F> {
    pub dim: usize,
    pub kind: NormKind,
    pub sampler: F,
}

impl<F> SampledSet for FnSet<F>
where
    F: Fn(&[f64], f64, usize, u64) -> Vec<Vec<f64>> + Sync,
{
    fn dim(&self) -> usize {
        self.dim
    }
    fn norm(&self, v: &[f64]) -> f64 {
        self.kind.eval(v)
    }
    fn sample_ball(&self, center: &[f64], radius: f64, n: usize, seed: u64) -> Vec<Vec<f64>> {
        (self.sampler)(center, radius, n, seed)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NormalQuotient {
    pub value: f64,
    pub isolated: bool,
    pub samples: usize,
}

fn quotient_over(points: &[Vec<f64>], x: &[f64], x_star: &[f64], norm: impl Fn(&[f64]) -> f64) -> NormalQuotient {
    let mut best = f64::NEG_INFINITY;
    let mut used = 0;
    for w in points {
        let d = geometry::sub(w, x);
        let nd = norm(&d);
        if nd > 0.0 {
            used += 1;
            best = best.max(dot(x_star, &d) / nd);
        }
    }
    if used == 0 {
        NormalQuotient { value: 0.0, isolated: true, samples: 0 }
    } else {
        NormalQuotient { value: best, isolated: false, samples: used }
    }
}

/// Finite-scale upper approximation of the ε-normal limsup: the largest
/// `<x*, w - x> / ||w - x||` over sampled `w ∈ Ω ∩ B_radius(x)`, `w ≠ x`.
pub fn eps_normal_quotient(
    omega: &dyn SampledSet,
    x: &[f64],
    x_star: &[f64],
    radius: f64,
    n: usize,
    seed: u64,
) -> NormalQuotient {
    let pts = omega.sample_ball(x, radius, n, seed);
    quotient_over(&pts, x, x_star, |v| omega.norm(v))
}

/// Exact Fréchet coderivative values at `p`.
pub fn analytic_coderivative(
    f: &dyn SetValuedMap,
    p: &GraphPoint,
    y_star: &[f64],
) -> Result<Vec<Vec<f64>>, VariationalError> {
    f.coderivative(&p.x, &p.y, y_star).ok_or(VariationalError::Unavailable)
}

/// Candidate `x*` for the sampled fallback: dual sphere directions times a
/// magnitude ladder `{0} ∪ {2^(i/4) : |i| <= 32}`.
fn fallback_candidates(dim_x: usize, kind: NormKind) -> Vec<Vec<f64>> {
    let mut out = vec![vec![0.0; dim_x]];
    let dirs = sphere_grid(dim_x, kind.dual(), 16);
    for i in -32..=32 {
        let m = 2f64.powf(i as f64 / 4.0);
        for d in &dirs {
            out.push(geometry::scale(d, m));
        }
    }
    out
}

/// Unit dual vectors `y*` used to probe coderivatives.
pub fn unit_dual_grid(dim_y: usize, kind: NormKind) -> Vec<Vec<f64>> {
    sphere_grid(dim_y, kind.dual(), 16)
}

const CERT_SAMPLES: usize = 64;

/// Coderivative elements at one graph point: analytic when an oracle exists,
/// otherwise the fallback candidates whose sampled quotient on the graph
/// ball of radius `cert_radius` is at most `eps`.
pub fn elements_at(
    f: &dyn SetValuedMap,
    p: &GraphPoint,
    eps: f64,
    cert_radius: f64,
    seed: u64,
    kind: NormKind,
) -> Vec<CoderivElement> {
    let mut out = Vec::new();
    let ys_grid = unit_dual_grid(f.dim_y(), kind);
    let mut fallback_pts: Option<Vec<Vec<f64>>> = None;
    let center = [p.x.clone(), p.y.clone()].concat();
    let gs = GraphSet { map: f, kind };
    for ys in &ys_grid {
        match f.coderivative(&p.x, &p.y, ys) {
            Some(reps) => {
                for xs in reps {
                    out.push(CoderivElement {
                        x: p.x.clone(),
                        y: p.y.clone(),
                        y_star: ys.clone(),
                        x_star: xs,
                        eps: 0.0,
                        source: ElementSource::Analytic,
                        cert_radius: 0.0,
                        cert_samples: 0,
                    });
                }
            }
            None => {
                let pts = fallback_pts.get_or_insert_with(|| gs.sample_ball(&center, cert_radius, CERT_SAMPLES, seed));
                for xs in fallback_candidates(f.dim_x(), kind) {
                    let w = [xs.clone(), geometry::scale(ys, -1.0)].concat();
                    let q = quotient_over(pts, &center, &w, |v| gs.norm(v));
                    let e = q.value.max(0.0);
                    if e <= eps {
                        out.push(CoderivElement {
                            x: p.x.clone(),
                            y: p.y.clone(),
                            y_star: ys.clone(),
                            x_star: xs,
                            eps: e,
                            source: ElementSource::Sampled,
                            cert_radius,
                            cert_samples: q.samples,
                        });
                    }
                }
            }
        }
    }
    out
}

/// Coderivative elements at sampled graph points with `0 < ||x - center.x|| <= radius`.
pub fn sample_coderivative_elements(
    f: &dyn SetValuedMap,
    center: &GraphPoint,
    radius: f64,
    eps: f64,
    n: usize,
    seed: u64,
    kind: NormKind,
) -> Vec<CoderivElement> {
    let pts = f.sample_graph(center, 0.0, radius, n, seed, kind);
    par::map_indexed(pts.len(), |i| {
        let t = kind.dist(&pts[i].x, &center.x);
        elements_at(f, &pts[i], eps, 0.1 * t, seed ^ i as u64, kind)
    })
    .into_iter()
    .flatten()
    .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ShiftDirection {
    /// Elements of `F` to elements of `F + f`.
    Forward,
    /// Elements of `F + f` back to elements of `F`.
    Backward,
}

/// Moves coderivative elements across a differentiable perturbation:
/// `x* ± ∇f(x)^T y*`, `y ± f(x)`, `eps' = (||∇f(x)|| + 1) eps`.
pub fn coderivative_shift(
    elements: &[CoderivElement],
    f: &dyn Evaluable,
    direction: ShiftDirection,
    kind: NormKind,
) -> Result<Vec<CoderivElement>, VariationalError> {
    let sign = match direction {
        ShiftDirection::Forward => 1.0,
        ShiftDirection::Backward => -1.0,
    };
    elements
        .iter()
        .map(|e| {
            let j = f.jacobian(&e.x).ok_or_else(|| VariationalError::MissingGradient(e.x.clone()))?;
            let g = crate::mappings::jt_mul(&j, &e.y_star);
            let fx = f.eval(&e.x);
            Ok(CoderivElement {
                x_star: geometry::axpy(&e.x_star, sign, &g),
                y: geometry::axpy(&e.y, sign, &fx),
                eps: (operator_norm(&j, kind) + 1.0) * e.eps,
                ..e.clone()
            })
        })
        .collect()
}

/// `δ = (ε + c||y*||) / (1 - c)` for a perturbation calm with constant `c`.
pub fn calm_shift_bound(c: f64, eps: f64, y_star_norm: f64) -> Result<f64, VariationalError> {
    if !(0.0..1.0).contains(&c) {
        return Err(VariationalError::CalmConstant(c));
    }
    Ok((eps + c * y_star_norm) / (1.0 - c))
}

/// A coderivative element together with the quantities the constants need.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CloudElement {
    pub elem: CoderivElement,
    pub level: usize,
    /// `||x - x̄||`.
    pub t: f64,
    /// `||y - ȳ|| / ||x - x̄||`.
    pub ratio: f64,
    /// `||x*||` (dual).
    pub nx: f64,
    /// The semismooth* quotient against the base point.
    pub ssq: f64,
}

impl CloudElement {
    pub fn new(elem: CoderivElement, base: &GraphPoint, level: usize, kind: NormKind) -> Self {
        let dual = kind.dual();
        let dx = geometry::sub(&elem.x, &base.x);
        let dy = geometry::sub(&elem.y, &base.y);
        let t = kind.eval(&dx);
        let ny = kind.eval(&dy);
        let nx = dual.eval(&elem.x_star);
        let nys = dual.eval(&elem.y_star);
        let num = (dot(&elem.x_star, &dx) - dot(&elem.y_star, &dy)).abs();
        let den = nx.max(nys) * (t + ny);
        let ssq = if den > 0.0 { num / den } else { 0.0 };
        Self { elem, level, t, ratio: ny / t, nx, ssq }
    }
}

/// Graph points and coderivative elements of `F` around a base point,
/// organised by ladder level (level `j` holds `r_{j+1} < ||x - x̄|| <= r_j`).
///
/// Every constant is evaluated on the same cloud so relations between them
/// can be compared element by element.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ElementCloud {
    pub base: GraphPoint,
    pub ladder: ScaleLadder,
    pub kind: NormKind,
    pub levels: Vec<CloudLevel>,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct CloudLevel {
    pub points: Vec<GraphPoint>,
    pub elements: Vec<CloudElement>,
}

/// Fallback certification is expensive, so it runs on at most this many
/// points per level.
const FALLBACK_POINTS: usize = 200;

impl ElementCloud {
    pub fn build(f: &dyn SetValuedMap, base: &GraphPoint, ladder: &ScaleLadder, kind: NormKind) -> Self {
        Self::build_with_extra(f, base, ladder, kind, &[])
    }

    /// Like [`ElementCloud::build`], with `extra` graph points added to the
    /// levels they fall into.
    pub fn build_with_extra(
        f: &dyn SetValuedMap,
        base: &GraphPoint,
        ladder: &ScaleLadder,
        kind: NormKind,
        extra: &[GraphPoint],
    ) -> Self {
        let levels = par::map_indexed(ladder.depth, |j| {
            let (r_out, r_in) = (ladder.radius(j), ladder.radius(j + 1));
            let mut points = f.sample_graph(base, r_in, r_out, ladder.samples_per_scale, ladder.level_seed(j), kind);
            points.extend(extra.iter().filter(|p| ladder.level_of(kind.dist(&p.x, &base.x)) == Some(j)).cloned());
            let analytic = points.first().is_none_or(|p| {
                unit_dual_grid(f.dim_y(), kind).iter().all(|ys| f.coderivative(&p.x, &p.y, ys).is_some())
            });
            let stride = if analytic { 1 } else { points.len().div_ceil(FALLBACK_POINTS).max(1) };
            let chosen: Vec<usize> = (0..points.len())
                .filter(|i| i % stride == 0 || *i >= points.len() - extra.len().min(points.len()))
                .collect();
            let elements = par::map_slice(&chosen, |&i| {
                let p = &points[i];
                let t = kind.dist(&p.x, &base.x);
                elements_at(f, p, r_out, 0.1 * t, ladder.level_seed(j) ^ (i as u64), kind)
                    .into_iter()
                    .map(|e| CloudElement::new(e, base, j, kind))
                    .filter(|c| c.t > 0.0)
                    .collect::<Vec<_>>()
            })
            .into_iter()
            .flatten()
            .collect();
            CloudLevel { points, elements }
        });
        Self { base: base.clone(), ladder: *ladder, kind, levels }
    }

    /// Elements at levels `>= j`, in level then index order.
    pub fn from_level(&self, j: usize) -> impl Iterator<Item = &CloudElement> {
        self.levels.iter().skip(j).flat_map(|l| l.elements.iter())
    }

    pub fn element_count(&self) -> usize {
        self.levels.iter().map(|l| l.elements.len()).sum()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Pass,
    Fail,
    Inconclusive,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SemismoothReport {
    /// `(δ_j, worst quotient)` per scale.
    #[serde(with = "crate::xreal::pairs")]
    pub scales: Vec<(f64, f64)>,
    pub verdict: Verdict,
    pub worst_witness: Option<CoderivElement>,
    pub threshold: f64,
}

pub const SS_THRESHOLD: f64 = 0.05;

/// Pass when the two finest values are below `threshold` and the last three
/// do not increase.
pub fn decay_verdict(values: &[f64], threshold: f64) -> Verdict {
    let n = values.len();
    if n < 2 || values.iter().any(|v| v.is_nan()) {
        return Verdict::Inconclusive;
    }
    let tail = &values[n.saturating_sub(3)..];
    let monotone = tail.windows(2).all(|w| w[1] <= w[0]);
    if values[n - 1] < threshold && values[n - 2] < threshold && monotone {
        Verdict::Pass
    } else {
        Verdict::Fail
    }
}

/// Worst semismooth* quotient per scale over the cloud's elements.
pub fn semismooth_star_from_cloud(cloud: &ElementCloud, threshold: f64) -> SemismoothReport {
    let mut scales = Vec::new();
    let mut worst: Option<&CloudElement> = None;
    let mut any = false;
    for j in 0..cloud.levels.len() {
        let r = cloud.ladder.radius(j);
        let mut best: Option<&CloudElement> = None;
        for e in cloud.from_level(j).filter(|e| e.elem.eps <= r) {
            any = true;
            if best.is_none_or(|b| e.ssq > b.ssq) {
                best = Some(e);
            }
        }
        scales.push((r, best.map_or(0.0, |b| b.ssq)));
        if j + 1 == cloud.levels.len() {
            worst = best;
        }
    }
    let verdict = if any {
        decay_verdict(&scales.iter().map(|s| s.1).collect::<Vec<_>>(), threshold)
    } else {
        Verdict::Inconclusive
    };
    SemismoothReport { scales, verdict, worst_witness: worst.map(|w| w.elem.clone()), threshold }
}

pub fn semismooth_star_test(
    f: &dyn SetValuedMap,
    base: &GraphPoint,
    ladder: &ScaleLadder,
    kind: NormKind,
) -> SemismoothReport {
    semismooth_star_from_cloud(&ElementCloud::build(f, base, ladder, kind), SS_THRESHOLD)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DirectionalReport {
    pub scales: Vec<(f64, f64)>,
    pub verdict: Verdict,
    /// Samples whose one-sided difference quotients did not settle.
    pub excluded: usize,
}

/// One-sided directional derivative `f'(x; d)` by difference quotients at
/// two steps; `None` when they disagree.
pub fn directional_derivative(f: &dyn Evaluable, x: &[f64], d: &[f64], kind: NormKind) -> Option<Vec<f64>> {
    let fx = f.eval(x);
    let q = |s: f64| geometry::scale(&geometry::sub(&f.eval(&geometry::axpy(x, s, d)), &fx), 1.0 / s);
    let (d1, d2) = (q(1e-4), q(1e-5));
    let scale = kind.eval(&d1).max(kind.eval(d)).max(f64::MIN_POSITIVE);
    (kind.dist(&d1, &d2) <= 1e-3 * scale).then_some(d2)
}

/// Directional semismooth* criterion for single-valued `f`: per scale, the
/// worst of the two one-sided remainders over `||(f(x) - f(x̄), x - x̄)||`.
pub fn directional_ss_criterion(
    f: &dyn Evaluable,
    base_x: &[f64],
    ladder: &ScaleLadder,
    kind: NormKind,
    threshold: f64,
) -> DirectionalReport {
    let fb = f.eval(base_x);
    let rows = par::map_indexed(ladder.depth, |j| {
        let xs = sample_annulus(
            base_x,
            ladder.radius(j + 1),
            ladder.radius(j),
            ladder.samples_per_scale,
            ladder.level_seed(j),
            kind,
        )
        .unwrap_or_default();
        let mut worst = 0.0f64;
        let mut excluded = 0;
        for x in xs {
            let d = geometry::sub(&x, base_x);
            let nd = geometry::scale(&d, -1.0);
            let (Some(dp), Some(dm)) =
                (directional_derivative(f, &x, &d, kind), directional_derivative(f, &x, &nd, kind))
            else {
                excluded += 1;
                continue;
            };
            let df = geometry::sub(&f.eval(&x), &fb);
            let r1 = kind.eval(&geometry::sub(&df, &dp));
            let r2 = kind.eval(&geometry::add(&df, &dm));
            let den = kind.eval(&df) + kind.eval(&d);
            worst = worst.max(r1.max(r2) / den);
        }
        (ladder.radius(j), worst, excluded)
    });
    let excluded = rows.iter().map(|r| r.2).sum();
    let scales: Vec<(f64, f64)> = rows.iter().map(|r| (r.0, r.1)).collect();
    let tail: Vec<f64> = (0..scales.len()).map(|j| scales[j..].iter().map(|s| s.1).fold(0.0, f64::max)).collect();
    DirectionalReport { verdict: decay_verdict(&tail, threshold), scales, excluded }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HomogeneityReport {
    pub ok: bool,
    pub max_relerr: f64,
    pub probes: usize,
}

/// Checks `f(x̄ + λh) = f(x̄) + λ(f(x̄ + h) - f(x̄))` on seeded probes
/// `0 < ||h|| <= radius`.
pub fn positive_homogeneity_test(
    f: &dyn Evaluable,
    base_x: &[f64],
    lambdas: &[f64],
    probes: usize,
    radius: f64,
    seed: u64,
    kind: NormKind,
    tol: f64,
) -> HomogeneityReport {
    let zero = vec![0.0; base_x.len()];
    let hs = sample_annulus(&zero, 0.0, radius, probes, seed, kind).unwrap_or_default();
    let fb = f.eval(base_x);
    let errs = par::map_slice(&hs, |h| {
        let fh = geometry::sub(&f.eval(&geometry::add(base_x, h)), &fb);
        lambdas
            .iter()
            .map(|&l| {
                let lhs = geometry::sub(&f.eval(&geometry::axpy(base_x, l, h)), &fb);
                let rhs = geometry::scale(&fh, l);
                let den = kind.eval(&rhs).max(l * kind.eval(h));
                kind.dist(&lhs, &rhs) / den
            })
            .fold(0.0, f64::max)
    });
    let max_relerr = errs.into_iter().fold(0.0, f64::max);
    HomogeneityReport { ok: max_relerr <= tol, max_relerr, probes: hs.len() }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mappings::{build_map, make_complementarity_angle, Func, MapSpec};
    use approx::assert_relative_eq;

    fn line_set() -> FnSet<impl Fn(&[f64], f64, usize, u64) -> Vec<Vec<f64>> + Sync> {
        FnSet {
            dim: 1,
            kind: NormKind::L1,
            sampler: |c: &[f64], r: f64, n: usize, _s: u64| {
                (1..=n)
                    .flat_map(|i| [vec![c[0] + r * i as f64 / n as f64], vec![c[0] - r * i as f64 / n as f64]])
                    .collect()
            },
        }
    }

    #[test]
    fn quotient_examples() {
        let q = eps_normal_quotient(&line_set(), &[0.0], &[1.0], 1.0, 50, 0);
        assert_relative_eq!(q.value, 1.0);
        let iso =
            FnSet { dim: 1, kind: NormKind::L1, sampler: |c: &[f64], _r: f64, _n: usize, _s: u64| vec![c.to_vec()] };
        let q = eps_normal_quotient(&iso, &[0.0], &[1.0], 1.0, 50, 0);
        assert!(q.isolated && q.value == 0.0);
        // Epigraph of |.|, sampled densely on its boundary and inside.
        let epi = FnSet {
            dim: 2,
            kind: NormKind::L2,
            sampler: |_c: &[f64], r: f64, n: usize, _s: u64| {
                let mut v = Vec::new();
                for i in 0..n {
                    let a = -r + 2.0 * r * i as f64 / n as f64;
                    v.push(vec![a, a.abs()]);
                    v.push(vec![a, a.abs() + 0.5 * r]);
                }
                v
            },
        };
        let q = eps_normal_quotient(&epi, &[0.0, 0.0], &[0.0, -1.0], 1.0, 400, 0);
        assert!(q.value <= 0.0);
    }

    #[test]
    fn analytic_examples() {
        let id = build_map(&MapSpec::Identity { dim: None }).unwrap();
        let p = GraphPoint::new(vec![0.3], vec![0.3]);
        assert_eq!(analytic_coderivative(id.as_ref(), &p, &[-1.0]).unwrap(), vec![vec![-1.0]]);
        let sq = build_map(&MapSpec::Square).unwrap();
        let p = GraphPoint::new(vec![0.3], vec![0.09]);
        assert_relative_eq!(analytic_coderivative(sq.as_ref(), &p, &[1.0]).unwrap()[0][0], 0.6);
        // A vertical line (the inverse of a constant) only has horizontal normals.
        let vert = build_map(&MapSpec::Inverse { map: Box::new(MapSpec::Zero { dim_x: None, dim_y: None }) }).unwrap();
        let p = GraphPoint::new(vec![0.0], vec![0.4]);
        let els = elements_at(vert.as_ref(), &p, 1e-3, 0.01, 0, NormKind::L1);
        assert!(els.is_empty(), "{els:?}");
    }

    #[test]
    fn identity_elements_pair_signs() {
        let id = build_map(&MapSpec::Identity { dim: None }).unwrap();
        let els = sample_coderivative_elements(
            id.as_ref(),
            &GraphPoint::new(vec![0.0], vec![0.0]),
            0.5,
            0.0,
            20,
            1,
            NormKind::L1,
        );
        assert!(!els.is_empty());
        for e in els {
            assert_eq!(e.x_star, e.y_star);
            assert_eq!(e.x_star[0].abs(), 1.0);
        }
    }

    #[test]
    fn xsin_elements_match_derivative() {
        let m = build_map(&MapSpec::Xsin).unwrap();
        let x = 0.137;
        let p = GraphPoint::new(vec![x], m.value(&[x]).unwrap());
        let d = (1.0 / x).sin() - (1.0 / x).cos() / x;
        assert_relative_eq!(analytic_coderivative(m.as_ref(), &p, &[-1.0]).unwrap()[0][0], -d);
    }

    #[test]
    fn shift_examples() {
        let e = CoderivElement {
            x: vec![0.2],
            y: vec![0.2],
            y_star: vec![1.0],
            x_star: vec![1.0],
            eps: 0.01,
            source: ElementSource::Analytic,
            cert_radius: 0.0,
            cert_samples: 0,
        };
        let lam = 0.5;
        let f = Func::new(1, 1, move |x| vec![lam * x[0]])
            .with_jacobian(move |_| Some(nalgebra::DMatrix::from_element(1, 1, lam)));
        let s = coderivative_shift(std::slice::from_ref(&e), &f, ShiftDirection::Forward, NormKind::L1).unwrap();
        assert_relative_eq!(s[0].x_star[0], 1.5);
        assert_relative_eq!(s[0].eps, 0.015);
        let zero = Func::new(1, 1, |_| vec![0.0]).with_jacobian(|_| Some(nalgebra::DMatrix::zeros(1, 1)));
        let s0 = coderivative_shift(std::slice::from_ref(&e), &zero, ShiftDirection::Forward, NormKind::L1).unwrap();
        assert_eq!(s0[0], e);
        let none = Func::new(1, 1, |_| vec![0.0]);
        assert!(coderivative_shift(&[e], &none, ShiftDirection::Forward, NormKind::L1).is_err());
    }

    #[test]
    fn calm_shift_examples() {
        assert_eq!(calm_shift_bound(0.0, 0.0, 1.0).unwrap(), 0.0);
        assert_relative_eq!(calm_shift_bound(0.5, 0.0, 1.0).unwrap(), 1.0);
        assert_relative_eq!(calm_shift_bound(0.1, 0.05, 1.0).unwrap(), 1.0 / 6.0, epsilon = 1e-15);
        assert!(calm_shift_bound(1.0, 0.0, 1.0).is_err());
    }

    fn small_ladder() -> ScaleLadder {
        ScaleLadder { depth: 8, samples_per_scale: 300, ..Default::default() }
    }

    #[test]
    fn semismooth_examples() {
        let o = GraphPoint::new(vec![0.0], vec![0.0]);
        let ca = make_complementarity_angle();
        assert_eq!(semismooth_star_test(&ca, &o, &small_ladder(), NormKind::L1).verdict, Verdict::Pass);
        for spec in [MapSpec::Abs, MapSpec::Square] {
            let m = build_map(&spec).unwrap();
            let r = semismooth_star_test(m.as_ref(), &o, &small_ladder(), NormKind::L1);
            assert_eq!(r.verdict, Verdict::Pass, "{spec:?} {:?}", r.scales);
        }
        let ls = build_map(&MapSpec::Logsin).unwrap();
        assert_eq!(semismooth_star_test(ls.as_ref(), &o, &small_ladder(), NormKind::L1).verdict, Verdict::Fail);
    }

    #[test]
    fn directional_examples() {
        let affine = Func::new(1, 1, |x| vec![3.0 * x[0] + 1.0]);
        let r = directional_ss_criterion(&affine, &[0.0], &small_ladder(), NormKind::L1, SS_THRESHOLD);
        assert!(r.scales.iter().all(|s| s.1 < 1e-6), "{:?}", r.scales);
        assert_eq!(r.verdict, Verdict::Pass);
        let abs = Func::new(1, 1, |x| vec![x[0].abs()]);
        let r = directional_ss_criterion(&abs, &[0.0], &small_ladder(), NormKind::L1, SS_THRESHOLD);
        assert!(r.scales.iter().all(|s| s.1 < 1e-6));
        let sq = Func::new(1, 1, |x| vec![x[0] * x[0]]);
        let r = directional_ss_criterion(&sq, &[0.0], &small_ladder(), NormKind::L1, SS_THRESHOLD);
        assert_eq!(r.verdict, Verdict::Pass);
    }

    #[test]
    fn homogeneity_examples() {
        let lin = Func::new(2, 1, |x| vec![x[0] - 2.0 * x[1]]);
        assert!(positive_homogeneity_test(&lin, &[0.0, 0.0], &[0.5, 2.0, 5.0], 200, 1.0, 0, NormKind::L1, 1e-10).ok);
        let sq = Func::new(1, 1, |x| vec![x[0] * x[0]]);
        assert!(!positive_homogeneity_test(&sq, &[0.0], &[2.0], 200, 1.0, 0, NormKind::L1, 1e-10).ok);
    }
}
