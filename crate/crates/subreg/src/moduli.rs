//! Scale-ladder estimators for the moduli and the primal–dual subregularity
//! constants, relation checks, and the Eckart–Young radius.

use std::collections::BTreeMap;
use std::fmt;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{self, operator_norm, sample_annulus, sphere_grid, NormKind, ScaleLadder};
use crate::mappings::{make_linear_map, Evaluable, GraphPoint, SetValuedMap};
use crate::par;
use crate::variational::{CloudElement, ElementCloud};
use crate::xreal;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModuliError {
    #[error("estimates come from different element sets: {0} vs {1}")]
    ProvenanceMismatch(String, String),
    #[error("missing estimate for {0}")]
    Missing(ConstantKind),
    #[error("matrix must be square and nonsingular")]
    Singular,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Trend {
    Increasing,
    Decreasing,
    Flat,
    Oscillating,
}

/// A point realising a per-level value.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Witness {
    pub level: usize,
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    #[serde(with = "xreal")]
    pub value: f64,
}

/// A limit quantity approximated along a scale ladder.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub name: String,
    /// `(r_j, value)` from coarse to fine.
    #[serde(with = "xreal::pairs")]
    pub per_scale: Vec<(f64, f64)>,
    #[serde(with = "xreal")]
    pub reported: f64,
    pub trend: Trend,
    pub converged: bool,
    pub flags: Vec<String>,
    pub witnesses: Vec<Witness>,
    /// Identifies the sample set the estimate was computed on.
    pub provenance: String,
}

fn close(a: f64, b: f64) -> bool {
    if a.is_infinite() || b.is_infinite() {
        return a == b;
    }
    (a - b).abs() <= 1e-3f64.max(0.02 * a.abs())
}

impl Estimate {
    pub fn new(name: &str, per_scale: Vec<(f64, f64)>, provenance: &str) -> Self {
        let v: Vec<f64> = per_scale.iter().map(|p| p.1).collect();
        let reported = v.last().copied().unwrap_or(f64::NAN);
        let converged = v.len() >= 2 && close(v[v.len() - 1], v[v.len() - 2]);
        let tail = &v[v.len().saturating_sub(3)..];
        let trend = if tail.windows(2).all(|w| close(w[0], w[1])) {
            Trend::Flat
        } else if tail.windows(2).all(|w| w[1] >= w[0]) {
            Trend::Increasing
        } else if tail.windows(2).all(|w| w[1] <= w[0]) {
            Trend::Decreasing
        } else {
            Trend::Oscillating
        };
        Self {
            name: name.into(),
            per_scale,
            reported,
            trend,
            converged,
            flags: vec![],
            witnesses: vec![],
            provenance: provenance.into(),
        }
    }

    pub fn values(&self) -> Vec<f64> {
        self.per_scale.iter().map(|p| p.1).collect()
    }

    pub fn has_flag(&self, flag: &str) -> bool {
        self.flags.iter().any(|f| f == flag)
    }
}

/// Suffix minima: the inf over levels `>= j`.
fn suffix_min(levels: &[f64]) -> Vec<f64> {
    let mut out = vec![f64::INFINITY; levels.len()];
    let mut acc = f64::INFINITY;
    for j in (0..levels.len()).rev() {
        acc = acc.min(levels[j]);
        out[j] = acc;
    }
    out
}

/// Window-of-two maxima: `max(q_{j-1}, q_j)`.
fn window_max(levels: &[f64]) -> Vec<f64> {
    (0..levels.len()).map(|j| if j == 0 { levels[0] } else { levels[j - 1].max(levels[j]) }).collect()
}

fn provenance(name: &str, base: &GraphPoint, ladder: &ScaleLadder, kind: NormKind) -> String {
    format!(
        "{name}@x={:?},y={:?};r0={},theta={},depth={},n={},seed={};{kind:?}",
        base.x, base.y, ladder.r0, ladder.theta, ladder.depth, ladder.samples_per_scale, ladder.seed
    )
}

fn fn_provenance(base_x: &[f64], ladder: &ScaleLadder, kind: NormKind) -> String {
    provenance("f", &GraphPoint::new(base_x.to_vec(), vec![]), ladder, kind)
}

fn level_points(base_x: &[f64], ladder: &ScaleLadder, j: usize, kind: NormKind) -> Vec<Vec<f64>> {
    sample_annulus(base_x, ladder.radius(j + 1), ladder.radius(j), ladder.samples_per_scale, ladder.level_seed(j), kind)
        .unwrap_or_default()
}

/// Calmness modulus of `f` at `x̄`, with optional extra probe points.
pub fn estimate_clm_with_probes(
    f: &dyn Evaluable,
    base_x: &[f64],
    ladder: &ScaleLadder,
    kind: NormKind,
    probes: &[Vec<f64>],
) -> Estimate {
    let fb = f.eval(base_x);
    let rows = par::map_indexed(ladder.depth, |j| {
        let mut pts = level_points(base_x, ladder, j, kind);
        pts.extend(probes.iter().filter(|p| ladder.level_of(kind.dist(p, base_x)) == Some(j)).cloned());
        let mut best: (f64, Option<Vec<f64>>) = (0.0, None);
        for x in pts {
            let q = kind.dist(&f.eval(&x), &fb) / kind.dist(&x, base_x);
            if best.1.is_none() || q > best.0 {
                best = (q, Some(x));
            }
        }
        best
    });
    let per_level: Vec<f64> = rows.iter().map(|r| r.0).collect();
    let w = window_max(&per_level);
    let mut est =
        Estimate::new("clm", ladder.radii().into_iter().zip(w).collect(), &fn_provenance(base_x, ladder, kind));
    est.witnesses = rows
        .into_iter()
        .enumerate()
        .filter_map(|(j, (v, x))| x.map(|x| Witness { level: j, y: f.eval(&x), x, value: v }))
        .collect();
    est
}

pub fn estimate_clm(f: &dyn Evaluable, base_x: &[f64], ladder: &ScaleLadder, kind: NormKind) -> Estimate {
    estimate_clm_with_probes(f, base_x, ladder, kind, &[])
}

/// Lipschitz modulus of `f` around `x̄` from close pairs inside each ball.
pub fn estimate_lip_with_probes(
    f: &dyn Evaluable,
    base_x: &[f64],
    ladder: &ScaleLadder,
    kind: NormKind,
    probes: &[Vec<f64>],
) -> Estimate {
    let n = base_x.len();
    let per_level = par::map_indexed(ladder.depth, |j| {
        let r = ladder.radius(j);
        let mut pts = level_points(base_x, ladder, j, kind);
        pts.extend(probes.iter().filter(|p| ladder.level_of(kind.dist(p, base_x)) == Some(j)).cloned());
        let dirs = sample_annulus(&vec![0.0; n], 0.5, 1.0, pts.len().max(1), ladder.level_seed(j) ^ 0x5a5a, kind)
            .unwrap_or_default();
        let mut best = 0.0f64;
        for (i, x) in pts.iter().enumerate() {
            let t = kind.dist(x, base_x);
            let u = geometry::scale(&dirs[i % dirs.len()], 1.0 / kind.eval(&dirs[i % dirs.len()]));
            let fx = f.eval(x);
            for k in [3, 8, 14] {
                let h = t * 2f64.powi(-k);
                for s in [h, -h] {
                    let x2 = geometry::axpy(x, s, &u);
                    if kind.dist(&x2, base_x) <= r {
                        best = best.max(kind.dist(&f.eval(&x2), &fx) / kind.dist(&x2, x));
                        break;
                    }
                }
            }
            if let Some(next) = pts.get(i + 1) {
                let d = kind.dist(next, x);
                if d > 0.0 {
                    best = best.max(kind.dist(&f.eval(next), &fx) / d);
                }
            }
        }
        best
    });
    let w = window_max(&per_level);
    Estimate::new("lip", ladder.radii().into_iter().zip(w).collect(), &fn_provenance(base_x, ladder, kind))
}

pub fn estimate_lip(f: &dyn Evaluable, base_x: &[f64], ladder: &ScaleLadder, kind: NormKind) -> Estimate {
    estimate_lip_with_probes(f, base_x, ladder, kind, &[])
}

fn inf_estimate(name: &str, ladder: &ScaleLadder, rows: Vec<(f64, Option<Witness>)>, prov: String) -> Estimate {
    let per_level: Vec<f64> = rows.iter().map(|r| r.0).collect();
    let s = suffix_min(&per_level);
    let mut est = Estimate::new(name, ladder.radii().into_iter().zip(s).collect(), &prov);
    if est.reported.is_infinite() {
        est.flags.push("inf_empty".into());
    }
    est.witnesses = rows.into_iter().filter_map(|r| r.1).collect();
    est
}

/// Points of the x-annulus at level `j`: low-discrepancy samples plus the
/// abscissae the map's own graph sampler proposes.
fn srg_points(
    f: &dyn SetValuedMap,
    base: &GraphPoint,
    ladder: &ScaleLadder,
    j: usize,
    kind: NormKind,
) -> Vec<Vec<f64>> {
    let mut xs = level_points(&base.x, ladder, j, kind);
    let (r_out, r_in) = (ladder.radius(j), ladder.radius(j + 1));
    let n = (ladder.samples_per_scale / 4).max(1);
    for p in f.sample_graph(base, r_in, r_out, n, ladder.level_seed(j) ^ 0xabc, kind) {
        if xs.last() != Some(&p.x) {
            xs.push(p.x);
        }
    }
    xs
}

/// Subregularity modulus: `inf d(ȳ, F(x)) / d(x, F^{-1}(ȳ))` over
/// `x ∉ F^{-1}(ȳ)` per scale.
pub fn estimate_srg(f: &dyn SetValuedMap, base: &GraphPoint, ladder: &ScaleLadder, kind: NormKind) -> Estimate {
    let rows = par::map_indexed(ladder.depth, |j| {
        let mut best = (f64::INFINITY, None);
        for x in srg_points(f, base, ladder, j, kind) {
            let pre = f.preimage_distance(&x, &base.y, kind);
            if !(pre > 0.0) {
                continue;
            }
            let q = f.image_distance(&x, &base.y, kind) / pre;
            if q < best.0 {
                best = (q, Some(Witness { level: j, y: base.y.clone(), x, value: q }));
            }
        }
        best
    });
    inf_estimate("srg", ladder, rows, provenance(&f.name(), base, ladder, kind))
}

/// Strong subregularity quotient `inf ||y - ȳ|| / ||x - x̄||` over graph points.
pub fn ssrg_from_levels(
    levels: &[Vec<GraphPoint>],
    base: &GraphPoint,
    ladder: &ScaleLadder,
    kind: NormKind,
    prov: String,
) -> Estimate {
    let rows: Vec<(f64, Option<Witness>)> = levels
        .iter()
        .enumerate()
        .map(|(j, pts)| {
            let mut best = (f64::INFINITY, None);
            for p in pts {
                let t = kind.dist(&p.x, &base.x);
                if t == 0.0 {
                    continue;
                }
                let q = kind.dist(&p.y, &base.y) / t;
                if q < best.0 {
                    best = (q, Some(Witness { level: j, x: p.x.clone(), y: p.y.clone(), value: q }));
                }
            }
            best
        })
        .collect();
    inf_estimate("ssrg", ladder, rows, prov)
}

pub fn estimate_ssrg(f: &dyn SetValuedMap, base: &GraphPoint, ladder: &ScaleLadder, kind: NormKind) -> Estimate {
    let levels = par::map_indexed(ladder.depth, |j| {
        f.sample_graph(
            base,
            ladder.radius(j + 1),
            ladder.radius(j),
            ladder.samples_per_scale,
            ladder.level_seed(j),
            kind,
        )
    });
    ssrg_from_levels(&levels, base, ladder, kind, provenance(&f.name(), base, ladder, kind))
}

/// Compass search minimising `q` over `z` with `z` kept inside `feasible`.
fn compass_min(
    q: &dyn Fn(&[f64]) -> f64,
    start: Vec<f64>,
    step0: f64,
    feasible: &dyn Fn(&[f64]) -> bool,
    max_evals: usize,
) -> (f64, Vec<f64>) {
    let mut z = start;
    let mut best = q(&z);
    let mut step = step0;
    let mut evals = 1;
    while step > 1e-10 * step0 && evals < max_evals {
        let mut improved = false;
        for i in 0..z.len() {
            for s in [step, -step] {
                let mut c = z.clone();
                c[i] += s;
                if !feasible(&c) {
                    continue;
                }
                let v = q(&c);
                evals += 1;
                if v < best {
                    best = v;
                    z = c;
                    improved = true;
                }
            }
        }
        if !improved {
            step *= 0.5;
        }
    }
    (best, z)
}

/// Regularity modulus: `inf d(y, F(x)) / d(x, F^{-1}(y))` over pairs near the
/// base point, refined by a compass search from the best few samples.
pub fn estimate_rg(f: &dyn SetValuedMap, base: &GraphPoint, ladder: &ScaleLadder, kind: NormKind) -> Estimate {
    let (n, m) = (f.dim_x(), f.dim_y());
    let quotient = |z: &[f64]| -> f64 {
        let (x, y) = z.split_at(n);
        let pre = f.preimage_distance(x, y, kind);
        if !(pre > 0.0) {
            return f64::INFINITY;
        }
        f.image_distance(x, y, kind) / pre
    };
    let rows = par::map_indexed(ladder.depth, |j| {
        let r = ladder.radius(j);
        let xs = srg_points(f, base, ladder, j, kind);
        let ys = sample_annulus(&base.y, 0.0, r, xs.len(), ladder.level_seed(j) ^ 0x77, kind).unwrap_or_default();
        let mut scored: Vec<(f64, Vec<f64>)> = xs
            .iter()
            .zip(ys.iter())
            .map(|(x, y)| {
                let z = [x.clone(), y.clone()].concat();
                (quotient(&z), z)
            })
            .filter(|(q, _)| q.is_finite())
            .collect();
        scored.sort_by(|a, b| a.0.total_cmp(&b.0));
        let feasible = |z: &[f64]| kind.dist(&z[..n], &base.x) <= r && kind.dist(&z[n..], &base.y) <= r;
        let mut best = scored.first().cloned().unwrap_or((f64::INFINITY, vec![]));
        for (_, z) in scored.iter().take(3) {
            let (v, zz) = compass_min(&quotient, z.clone(), 0.25 * r, &feasible, 400 * (n + m));
            if v < best.0 {
                best = (v, zz);
            }
        }
        let w = (!best.1.is_empty()).then(|| Witness {
            level: j,
            x: best.1[..n].to_vec(),
            y: best.1[n..].to_vec(),
            value: best.0,
        });
        (best.0, w)
    });
    inf_estimate("rg", ladder, rows, provenance(&f.name(), base, ladder, kind))
}

/// The primal–dual subregularity constants.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ConstantKind {
    Srg1,
    Srg2,
    Srg3,
    Srg4,
    Srg1p,
    Srg2p,
    Srg4p,
    Hatsrg,
    Hatsrgp,
}

impl ConstantKind {
    pub const ALL: [ConstantKind; 9] = [
        ConstantKind::Srg1,
        ConstantKind::Srg2,
        ConstantKind::Srg3,
        ConstantKind::Srg4,
        ConstantKind::Srg1p,
        ConstantKind::Srg2p,
        ConstantKind::Srg4p,
        ConstantKind::Hatsrg,
        ConstantKind::Hatsrgp,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ConstantKind::Srg1 => "srg1",
            ConstantKind::Srg2 => "srg2",
            ConstantKind::Srg3 => "srg3",
            ConstantKind::Srg4 => "srg4",
            ConstantKind::Srg1p => "srg1p",
            ConstantKind::Srg2p => "srg2p",
            ConstantKind::Srg4p => "srg4p",
            ConstantKind::Hatsrg => "hatsrg",
            ConstantKind::Hatsrgp => "hatsrgp",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|k| k.name() == s)
    }

    /// Element filter at scale `eps` (the ladder radius).
    pub fn admits(self, e: &CloudElement, eps: f64) -> bool {
        let exact = e.elem.eps == 0.0;
        let guarded = e.elem.eps < eps && e.elem.eps * e.nx < eps;
        match self {
            ConstantKind::Srg1 | ConstantKind::Srg2 | ConstantKind::Hatsrg | ConstantKind::Hatsrgp => exact,
            ConstantKind::Srg3 | ConstantKind::Srg4 => exact && e.ssq <= eps,
            ConstantKind::Srg1p => e.elem.eps <= eps,
            ConstantKind::Srg2p => guarded,
            ConstantKind::Srg4p => guarded && e.ssq <= eps,
        }
    }

    pub fn objective(self, e: &CloudElement) -> f64 {
        match self {
            ConstantKind::Srg1 | ConstantKind::Srg3 | ConstantKind::Hatsrg => e.ratio.max(e.nx),
            ConstantKind::Srg1p | ConstantKind::Hatsrgp => e.ratio + e.nx,
            _ => e.ratio,
        }
    }
}

impl fmt::Display for ConstantKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Provenance string shared by every estimate computed from `cloud`.
pub fn cloud_provenance(name: &str, cloud: &ElementCloud) -> String {
    format!("cloud:{}", provenance(name, &cloud.base, &cloud.ladder, cloud.kind))
}

fn direction_bucket(e: &CloudElement, base: &GraphPoint, mesh: &[Vec<f64>], kind: NormKind) -> usize {
    let u = geometry::scale(&geometry::sub(&e.elem.x, &base.x), 1.0 / e.t);
    (0..mesh.len()).min_by(|&a, &b| kind.dist(&u, &mesh[a]).total_cmp(&kind.dist(&u, &mesh[b]))).unwrap_or(0)
}

/// Direction-clustered form of srg1 / srg1p: elements from levels
/// `j..j+3` are bucketed by `(x - x̄)/||x - x̄||`; each bucket contributes
/// its best value at the deepest level it reaches.
fn hat_value(kind: ConstantKind, cloud: &ElementCloud, j: usize, mesh: &[Vec<f64>]) -> (f64, Option<Witness>) {
    let mut per_bucket: BTreeMap<usize, (usize, f64, Option<&CloudElement>)> = BTreeMap::new();
    let last = (j + 3).min(cloud.levels.len());
    for level in j..last {
        for e in cloud.levels[level].elements.iter().filter(|e| kind.admits(e, cloud.ladder.radius(j))) {
            let b = direction_bucket(e, &cloud.base, mesh, cloud.kind);
            let v = kind.objective(e);
            let slot = per_bucket.entry(b).or_insert((level, f64::INFINITY, None));
            if level > slot.0 {
                *slot = (level, f64::INFINITY, None);
            }
            if level == slot.0 && v < slot.1 {
                *slot = (level, v, Some(e));
            }
        }
    }
    per_bucket.values().fold((f64::INFINITY, None), |acc, s| {
        if s.1 < acc.0 {
            (s.1, s.2.map(|e| Witness { level: s.0, x: e.elem.x.clone(), y: e.elem.y.clone(), value: s.1 }))
        } else {
            acc
        }
    })
}

/// Evaluates one constant on a prebuilt element cloud.
pub fn constant_from_cloud(kind: ConstantKind, cloud: &ElementCloud) -> Estimate {
    let depth = cloud.levels.len();
    let radii: Vec<f64> = (0..depth).map(|j| cloud.ladder.radius(j)).collect();
    let prov = cloud_provenance(&format!("{:?}", cloud.base), cloud);
    let (values, witnesses): (Vec<f64>, Vec<Option<Witness>>) = match kind {
        ConstantKind::Hatsrg | ConstantKind::Hatsrgp => {
            let mesh = sphere_grid(cloud.base.x.len(), cloud.kind, 32);
            par::map_indexed(depth, |j| hat_value(kind, cloud, j, &mesh)).into_iter().unzip()
        }
        _ => {
            let v = par::map_indexed(depth, |j| {
                cloud
                    .from_level(j)
                    .filter(|e| kind.admits(e, radii[j]))
                    .map(|e| kind.objective(e))
                    .fold(f64::INFINITY, f64::min)
            });
            // Per-level minimisers with the level's own threshold.
            let w = par::map_indexed(depth, |j| {
                cloud.levels[j]
                    .elements
                    .iter()
                    .filter(|e| kind.admits(e, radii[j]))
                    .fold(None::<&CloudElement>, |acc, e| match acc {
                        Some(a) if kind.objective(a) <= kind.objective(e) => Some(a),
                        _ => Some(e),
                    })
                    .map(|e| Witness { level: j, x: e.elem.x.clone(), y: e.elem.y.clone(), value: kind.objective(e) })
            });
            (v, w)
        }
    };
    let mut est = Estimate::new(kind.name(), radii.into_iter().zip(values).collect(), &prov);
    if est.reported.is_infinite() {
        est.flags.push("inf_empty".into());
    }
    if cloud.levels.iter().all(|l| l.points.is_empty()) {
        est.flags.push("isolated".into());
    }
    est.witnesses = witnesses.into_iter().flatten().collect();
    est
}

pub fn estimate_constant(
    kind: ConstantKind,
    f: &dyn SetValuedMap,
    base: &GraphPoint,
    ladder: &ScaleLadder,
    norm: NormKind,
) -> Estimate {
    constant_from_cloud(kind, &ElementCloud::build(f, base, ladder, norm))
}

pub fn all_constants(cloud: &ElementCloud) -> BTreeMap<ConstantKind, Estimate> {
    ConstantKind::ALL.iter().map(|&k| (k, constant_from_cloud(k, cloud))).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RelationCheck {
    pub label: String,
    pub holds: bool,
    /// Smallest `rhs - lhs` over scales (or `-|lhs - rhs|` for equalities).
    #[serde(with = "xreal")]
    pub slack: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RelationReport {
    pub checks: Vec<RelationCheck>,
    pub all_hold: bool,
    pub provenance: String,
}

fn le_slack(a: f64, b: f64) -> f64 {
    if a == b {
        0.0
    } else {
        b - a
    }
}

/// Checks chains (i)–(viii) between the constants at every scale.
pub fn check_relations(est: &BTreeMap<ConstantKind, Estimate>) -> Result<RelationReport, ModuliError> {
    let get = |k: ConstantKind| est.get(&k).ok_or(ModuliError::Missing(k));
    let first = get(ConstantKind::Srg1)?;
    for e in est.values() {
        if e.provenance != first.provenance {
            return Err(ModuliError::ProvenanceMismatch(first.provenance.clone(), e.provenance.clone()));
        }
    }
    let mut checks = Vec::new();
    let mut le = |label: &str, a: &Estimate, b: &Estimate, factor: f64| {
        let slack =
            a.values().iter().zip(b.values()).map(|(&x, y)| le_slack(x, factor * y)).fold(f64::INFINITY, f64::min);
        checks.push(RelationCheck { label: label.into(), holds: slack >= 0.0, slack });
    };
    use ConstantKind::*;
    le("(i) srg2 <= srg1", get(Srg2)?, get(Srg1)?, 1.0);
    le("(i) srg1 <= srg3", get(Srg1)?, get(Srg3)?, 1.0);
    le("(ii) srg2 <= srg4", get(Srg2)?, get(Srg4)?, 1.0);
    le("(ii) srg4 <= srg3", get(Srg4)?, get(Srg3)?, 1.0);
    le("(iii) srg2p <= srg4p", get(Srg2p)?, get(Srg4p)?, 1.0);
    le("(iv) srg1 <= srg1p", get(Srg1)?, get(Srg1p)?, 1.0);
    le("(iv) srg1p <= 2 srg1", get(Srg1p)?, get(Srg1)?, 2.0);
    le("(v) srg2 <= srg2p", get(Srg2)?, get(Srg2p)?, 1.0);
    le("(v) srg2p <= srg2", get(Srg2p)?, get(Srg2)?, 1.0);
    le("(vi) srg4 <= srg4p", get(Srg4)?, get(Srg4p)?, 1.0);
    for (label, a, b) in [("(vii) srg1 = hatsrg", Srg1, Hatsrg), ("(viii) srg1p = hatsrgp", Srg1p, Hatsrgp)] {
        let (x, y) = (get(a)?.reported, get(b)?.reported);
        let gap = if x == y { 0.0 } else { (x - y).abs() };
        checks.push(RelationCheck { label: label.into(), holds: gap <= 0.05, slack: 0.05 - gap });
    }
    let all_hold = checks.iter().all(|c| c.holds);
    Ok(RelationReport { checks, all_hold, provenance: first.provenance.clone() })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConsistencyReport {
    #[serde(with = "xreal")]
    pub srg1: f64,
    #[serde(with = "xreal")]
    pub srg: f64,
    pub claim_triggered: bool,
    pub consistent: bool,
}

/// A clearly positive srg1 must come with a positive subregularity modulus.
pub fn subregularity_consistency(srg1: &Estimate, srg: &Estimate) -> ConsistencyReport {
    let claim = srg1.reported > 0.1;
    ConsistencyReport {
        srg1: srg1.reported,
        srg: srg.reported,
        claim_triggered: claim,
        consistent: !claim || srg.reported > 0.01,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EckartYoungReport {
    /// `1 / ||A^{-1}||` in the spectral norm.
    pub radius: f64,
    pub b: Vec<Vec<f64>>,
    pub b_norm: f64,
    pub det_a_plus_b: f64,
    #[serde(with = "xreal")]
    pub rg_estimate: f64,
    pub rg_relerr: f64,
}

/// The rank-one perturbation `B = -σ_min u v^T` of smallest spectral norm
/// making `A + B` singular, plus an rg estimate for `x -> Ax`.
pub fn eckart_young_check(a: &DMatrix<f64>, ladder: &ScaleLadder) -> Result<EckartYoungReport, ModuliError> {
    let n = a.nrows();
    if n != a.ncols() || n == 0 {
        return Err(ModuliError::Singular);
    }
    let inv = a.clone().try_inverse().ok_or(ModuliError::Singular)?;
    let radius = 1.0 / operator_norm(&inv, NormKind::L2);
    let svd = a.clone().svd(true, true);
    let (u, vt) = (svd.u.expect("requested"), svd.v_t.expect("requested"));
    let i = svd.singular_values.imin();
    let sigma = svd.singular_values[i];
    let b = -(u.column(i) * vt.row(i)) * sigma;
    let b_norm = operator_norm(&b, NormKind::L2);
    let det_a_plus_b = (a + &b).determinant();
    let map = make_linear_map(a.clone());
    let base = GraphPoint::new(vec![0.0; n], vec![0.0; n]);
    let rg = estimate_rg(&map, &base, ladder, NormKind::L2).reported;
    Ok(EckartYoungReport {
        radius,
        b: (0..n).map(|r| b.row(r).iter().copied().collect()).collect(),
        b_norm,
        det_a_plus_b,
        rg_estimate: rg,
        rg_relerr: (rg - radius).abs() / radius,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mappings::{build_map, make_interval_map, Func, MapSpec};

    fn o() -> GraphPoint {
        GraphPoint::new(vec![0.0], vec![0.0])
    }

    fn ladder() -> ScaleLadder {
        ScaleLadder { depth: 8, samples_per_scale: 300, ..Default::default() }
    }

    #[test]
    fn clm_lip_examples() {
        let f = Func::new(1, 1, |x| vec![3.0 * x[0]]);
        let (c, l) =
            (estimate_clm(&f, &[0.0], &ladder(), NormKind::L1), estimate_lip(&f, &[0.0], &ladder(), NormKind::L1));
        assert!((c.reported - 3.0).abs() < 1e-12 && (l.reported - 3.0).abs() < 1e-9);
        let sq = Func::new(1, 1, |x| vec![x[0] * x[0]]);
        let full = ScaleLadder { depth: 12, ..ladder() };
        assert!(estimate_clm(&sq, &[0.0], &full, NormKind::L1).reported <= 0.01);
        let xs = Func::new(1, 1, |x| vec![if x[0] == 0.0 { 0.0 } else { x[0] * (1.0 / x[0]).sin() }]);
        let c = estimate_clm(&xs, &[0.0], &ScaleLadder { samples_per_scale: 2000, ..full }, NormKind::L1);
        assert!((c.reported - 1.0).abs() < 0.05, "{}", c.reported);
    }

    #[test]
    fn rg_srg_examples() {
        let id = build_map(&MapSpec::Identity { dim: None }).unwrap();
        for e in [
            estimate_rg(id.as_ref(), &o(), &ladder(), NormKind::L1),
            estimate_srg(id.as_ref(), &o(), &ladder(), NormKind::L1),
            estimate_ssrg(id.as_ref(), &o(), &ladder(), NormKind::L1),
        ] {
            assert!((e.reported - 1.0).abs() < 1e-9, "{e:?}");
        }
        let sc = build_map(&MapSpec::Scale { lambda: -2.0, dim: None }).unwrap();
        assert!((estimate_rg(sc.as_ref(), &o(), &ladder(), NormKind::L1).reported - 2.0).abs() < 1e-9);
        let z = build_map(&MapSpec::Zero { dim_x: None, dim_y: None }).unwrap();
        assert_eq!(estimate_rg(z.as_ref(), &o(), &ladder(), NormKind::L1).reported, 0.0);
        let s = estimate_srg(z.as_ref(), &o(), &ladder(), NormKind::L1);
        assert!(s.reported.is_infinite() && s.has_flag("inf_empty"));
        let iv = make_interval_map();
        let e = estimate_ssrg(&iv, &o(), &ladder(), NormKind::L1);
        assert_eq!(e.reported, 0.0);
        assert!(e.witnesses.iter().all(|w| make_interval_map_is_recip(w.x[0])));
    }

    fn make_interval_map_is_recip(x: f64) -> bool {
        crate::mappings::IntervalMap::is_reciprocal(x, 1e-12)
    }

    #[test]
    fn constants_identity_and_zero() {
        let id = build_map(&MapSpec::Identity { dim: None }).unwrap();
        let cloud = ElementCloud::build(id.as_ref(), &o(), &ladder(), NormKind::L1);
        let c = all_constants(&cloud);
        for k in [ConstantKind::Srg1, ConstantKind::Srg2, ConstantKind::Srg3, ConstantKind::Srg4] {
            assert_eq!(c[&k].reported, 1.0, "{k}");
        }
        assert_eq!(c[&ConstantKind::Srg1p].reported, 2.0);
        assert!(check_relations(&c).unwrap().all_hold);
        let z = build_map(&MapSpec::Zero { dim_x: None, dim_y: None }).unwrap();
        let c = all_constants(&ElementCloud::build(z.as_ref(), &o(), &ladder(), NormKind::L1));
        for k in ConstantKind::ALL {
            assert_eq!(c[&k].reported, 0.0, "{k}");
        }
    }

    #[test]
    fn relations_refuse_mixed_provenance() {
        let id = build_map(&MapSpec::Identity { dim: None }).unwrap();
        let mut c = all_constants(&ElementCloud::build(id.as_ref(), &o(), &ladder(), NormKind::L1));
        let other =
            all_constants(&ElementCloud::build(id.as_ref(), &o(), &ScaleLadder { seed: 9, ..ladder() }, NormKind::L1));
        c.insert(ConstantKind::Srg2, other[&ConstantKind::Srg2].clone());
        assert!(matches!(check_relations(&c), Err(ModuliError::ProvenanceMismatch(..))));
    }

    #[test]
    fn eckart_young_examples() {
        for (a, r) in [
            (DMatrix::identity(2, 2), 1.0),
            (DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 2.0]), 1.0),
            (DMatrix::from_row_slice(2, 2, &[0.0, 1.0, -2.0, 0.0]), 1.0),
        ] {
            let rep = eckart_young_check(&a, &ladder()).unwrap();
            assert!((rep.radius - r).abs() < 1e-12);
            assert!((rep.b_norm - r).abs() < 1e-10);
            assert!(rep.det_a_plus_b.abs() < 1e-10);
            assert!(rep.rg_relerr < 0.05, "{rep:?}");
        }
        assert!(eckart_young_check(&DMatrix::zeros(2, 2), &ladder()).is_err());
    }

    #[test]
    fn estimate_bookkeeping() {
        let e = Estimate::new("x", vec![(1.0, 0.5), (0.5, 0.9), (0.25, 0.905)], "p");
        assert!(e.converged);
        assert_eq!(e.reported, 0.905);
        assert_eq!(e.trend, Trend::Increasing);
        let e = Estimate::new("x", vec![(1.0, 1.0), (0.5, 2.0)], "p");
        assert!(!e.converged);
    }
}
