//! Witness sequences and the destabilizing perturbations built from them.
//!
//! Three bump shapes cover every builder:
//! - `Balls`: radial bumps `s_k(x) g_k(x)` around each witness point (lip, fclm);
//! - `Cones`: positively homogeneous bumps on disjoint direction cones
//!   (ss and ssr with distinct directions);
//! - `Ladder`: log-interpolated bumps along one stationary direction
//!   (ss and ssr with a repeated direction).

use std::collections::BTreeMap;
use std::sync::Arc;

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{
    self, dot, norming_functional, norming_vector, operator_norm, sample_annulus, NormKind, ScaleLadder,
};
use crate::mappings::{make_function_graph, sum_with_function, Evaluable, GraphPoint, MapError, SetValuedMap};
use crate::moduli::{
    constant_from_cloud, estimate_clm_with_probes, estimate_lip_with_probes, ssrg_from_levels, ConstantKind, Estimate,
};
use crate::par;
use crate::variational::{
    directional_ss_criterion, positive_homogeneity_test, semismooth_star_test, unit_dual_grid, CloudElement,
    ElementCloud, Verdict, SS_THRESHOLD,
};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PerturbError {
    #[error("no witness below gamma: {constant} = {value} >= {gamma}")]
    NoWitness { constant: String, value: f64, gamma: f64 },
    #[error("insufficient depth: {found} witness entries survive thinning, {needed} needed")]
    InsufficientDepth { found: usize, needed: usize },
    #[error("witness quality insufficient: {0}")]
    WitnessQuality(String),
    #[error("invalid witness: {0}")]
    Invariant(String),
    #[error("direction mode does not match the witness entries: {0}")]
    ModeMismatch(String),
    #[error(transparent)]
    Map(#[from] MapError),
}

/// Absolute slack when checking that per-scale values do not increase;
/// sampled quotients below this are at the estimator's resolution.
pub const DECAY_SLACK: f64 = 1e-8;
/// Fewest witness entries a build accepts.
pub const MIN_ENTRIES: usize = 4;
/// Directions closer than this are treated as the same direction.
pub const DIRECTION_TOL: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WitnessKind {
    Lip,
    Fclm,
    Ss,
    Ssr,
}

impl WitnessKind {
    /// The constant whose value must lie below `gamma`.
    pub fn constant_name(self) -> &'static str {
        match self {
            WitnessKind::Lip => "srg1p",
            WitnessKind::Fclm => "srg2p",
            WitnessKind::Ss => "srg4p",
            WitnessKind::Ssr => "ssrg",
        }
    }

    pub fn class(self) -> PerturbClass {
        match self {
            WitnessKind::Lip => PerturbClass::Lip,
            WitnessKind::Fclm => PerturbClass::Fclm,
            WitnessKind::Ss => PerturbClass::FclmSs,
            WitnessKind::Ssr => PerturbClass::Ssr,
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "lip" => Some(WitnessKind::Lip),
            "fclm" => Some(WitnessKind::Fclm),
            "ss" | "fclm_ss" => Some(WitnessKind::Ss),
            "ssr" => Some(WitnessKind::Ssr),
            _ => None,
        }
    }

    fn constant_kind(self) -> Option<ConstantKind> {
        match self {
            WitnessKind::Lip => Some(ConstantKind::Srg1p),
            WitnessKind::Fclm => Some(ConstantKind::Srg2p),
            WitnessKind::Ss => Some(ConstantKind::Srg4p),
            WitnessKind::Ssr => None,
        }
    }

    fn uses_index_cut(self) -> bool {
        matches!(self, WitnessKind::Lip | WitnessKind::Fclm)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PerturbClass {
    Lip,
    Fclm,
    FclmSs,
    Ssr,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DirectionMode {
    Distinct,
    Stationary,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WitnessEntry {
    pub level: usize,
    pub t: f64,
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    pub x_star: Vec<f64>,
    pub y_star: Vec<f64>,
    pub eps: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WitnessSequence {
    pub kind: WitnessKind,
    pub base: GraphPoint,
    pub norm: NormKind,
    pub ladder: ScaleLadder,
    pub entries: Vec<WitnessEntry>,
    /// The achieved sup of the kind's objective over the entries.
    pub gamma_prime: f64,
    /// The constant estimate the witness was drawn under.
    pub constant_estimate: f64,
    /// Index of the first entry; bump `k` uses exponent `1 + 1/k`.
    pub k_start: usize,
    pub direction_mode: Option<DirectionMode>,
    pub u: Option<Vec<f64>>,
}

fn objective(kind: WitnessKind, ratio: f64, nx: f64) -> f64 {
    match kind {
        WitnessKind::Lip => ratio + nx,
        _ => ratio,
    }
}

/// Smallest `k >= 1` with `(1 + 1/k)^2 g < gamma`; requires `g < gamma`.
pub fn index_cut(g: f64, gamma: f64) -> usize {
    let mut k = 1usize;
    while (1.0 + 1.0 / k as f64).powi(2) * g >= gamma {
        k += 1;
    }
    k
}

impl WitnessSequence {
    fn entry_quantities(&self, e: &WitnessEntry) -> (f64, f64) {
        let ratio = self.norm.dist(&e.y, &self.base.y) / e.t;
        (ratio, self.norm.dual().eval(&e.x_star))
    }

    pub fn sup_objective(&self) -> f64 {
        self.entries
            .iter()
            .map(|e| {
                let (ratio, nx) = self.entry_quantities(e);
                objective(self.kind, ratio, nx)
            })
            .fold(0.0, f64::max)
    }

    /// The floor radius: the smallest `t_k`.
    pub fn floor(&self) -> f64 {
        self.entries.last().map_or(0.0, |e| e.t)
    }

    /// Checks the invariants every builder relies on.
    pub fn validate(&self) -> Result<(), PerturbError> {
        let bad = |m: String| Err(PerturbError::Invariant(m));
        if self.entries.len() < MIN_ENTRIES {
            return Err(PerturbError::InsufficientDepth { found: self.entries.len(), needed: MIN_ENTRIES });
        }
        let dual = self.norm.dual();
        for (i, e) in self.entries.iter().enumerate() {
            let t = self.norm.dist(&e.x, &self.base.x);
            if !(t > 0.0) || t != e.t {
                return bad(format!("entry {i}: t = {} but ||x - x̄|| = {t}", e.t));
            }
            if i > 0 && !(e.t < self.entries[i - 1].t) {
                return bad(format!("entry {i}: t not strictly decreasing"));
            }
            if (dual.eval(&e.y_star) - 1.0).abs() > 1e-9 {
                return bad(format!("entry {i}: y* is not a unit vector"));
            }
            if !(e.eps >= 0.0) || e.eps > self.ladder.radius(e.level) {
                return Err(PerturbError::WitnessQuality(format!(
                    "entry {i}: eps {} exceeds its scale {}",
                    e.eps,
                    self.ladder.radius(e.level)
                )));
            }
            let nx = dual.eval(&e.x_star);
            if matches!(self.kind, WitnessKind::Fclm | WitnessKind::Ss) && e.eps * nx > self.ladder.radius(e.level) {
                return Err(PerturbError::WitnessQuality(format!(
                    "entry {i}: eps * ||x*|| = {} does not decay",
                    e.eps * nx
                )));
            }
            if i > 0 {
                let prev = self.entries[i - 1].t;
                if self.kind.uses_index_cut() {
                    let k = (self.k_start + i) as f64;
                    if !(e.t < prev / (2.0 * k)) {
                        return bad(format!("entry {i}: thinning t_(k+1) < t_k / (2(k+1)) fails"));
                    }
                } else if self.direction_mode == Some(DirectionMode::Stationary)
                    && !(e.t < (-((i + 1) as f64)).exp() * prev)
                {
                    return bad(format!("entry {i}: thinning t_k < e^-k t_(k-1) fails"));
                }
            }
        }
        if self.kind == WitnessKind::Ss {
            for (i, e) in self.entries.iter().enumerate() {
                let q = ss_quotient(e, &self.base, self.norm);
                if q > e.eps {
                    return bad(format!("entry {i}: semismooth* quotient {q} exceeds eps {}", e.eps));
                }
            }
        }
        let sup = self.sup_objective();
        if sup != self.gamma_prime {
            return bad(format!("gamma' = {} but the entries give {sup}", self.gamma_prime));
        }
        match (self.kind, self.direction_mode) {
            (WitnessKind::Ss | WitnessKind::Ssr, None) => bad("direction mode missing".into()),
            (WitnessKind::Ss | WitnessKind::Ssr, Some(mode)) => self.check_mode(mode),
            _ => Ok(()),
        }
    }

    fn directions(&self) -> Vec<Vec<f64>> {
        self.entries.iter().map(|e| geometry::scale(&geometry::sub(&e.x, &self.base.x), 1.0 / e.t)).collect()
    }

    fn check_mode(&self, mode: DirectionMode) -> Result<(), PerturbError> {
        let dirs = self.directions();
        match mode {
            DirectionMode::Stationary => {
                let u =
                    self.u.as_ref().ok_or_else(|| PerturbError::ModeMismatch("stationary mode without u".into()))?;
                if dirs.iter().any(|d| self.norm.dist(d, u) > DIRECTION_TOL) {
                    return Err(PerturbError::ModeMismatch("entries leave the stationary direction".into()));
                }
            }
            DirectionMode::Distinct => {
                for i in 0..dirs.len() {
                    for j in 0..i {
                        if self.norm.dist(&dirs[i], &dirs[j]) <= DIRECTION_TOL {
                            return Err(PerturbError::ModeMismatch(format!("entries {j} and {i} share a direction")));
                        }
                    }
                }
            }
        }
        Ok(())
    }
}

fn ss_quotient(e: &WitnessEntry, base: &GraphPoint, norm: NormKind) -> f64 {
    let dx = geometry::sub(&e.x, &base.x);
    let dy = geometry::sub(&e.y, &base.y);
    let dual = norm.dual();
    let num = (dot(&e.x_star, &dx) - dot(&e.y_star, &dy)).abs();
    let den = dual.eval(&e.x_star).max(dual.eval(&e.y_star)) * (norm.eval(&dx) + norm.eval(&dy));
    if den > 0.0 {
        num / den
    } else {
        0.0
    }
}

#[derive(Debug, Clone)]
struct Candidate {
    entry: WitnessEntry,
    objective: f64,
    dir: Vec<f64>,
    v: Vec<f64>,
}

fn candidate_from_element(kind: WitnessKind, e: &CloudElement, base: &GraphPoint, norm: NormKind) -> Candidate {
    let eps = if kind == WitnessKind::Ss { e.elem.eps.max(e.ssq) } else { e.elem.eps };
    let entry = WitnessEntry {
        level: e.level,
        t: e.t,
        x: e.elem.x.clone(),
        y: e.elem.y.clone(),
        x_star: e.elem.x_star.clone(),
        y_star: e.elem.y_star.clone(),
        eps,
    };
    candidate(entry, objective(kind, e.ratio, e.nx), base, norm)
}

fn candidate(entry: WitnessEntry, objective: f64, base: &GraphPoint, _norm: NormKind) -> Candidate {
    let dir = geometry::scale(&geometry::sub(&entry.x, &base.x), 1.0 / entry.t);
    let v = geometry::scale(&geometry::sub(&entry.y, &base.y), 1.0 / entry.t);
    Candidate { entry, objective, dir, v }
}

/// Graph points of one level as strong-subregularity candidates.
fn ssr_candidates(level: usize, points: &[GraphPoint], base: &GraphPoint, norm: NormKind) -> Vec<Candidate> {
    let fallback = unit_dual_grid(base.y.len(), norm).into_iter().next().unwrap_or_default();
    points
        .iter()
        .filter_map(|p| {
            let t = norm.dist(&p.x, &base.x);
            if !(t > 0.0) {
                return None;
            }
            let dy = geometry::sub(&p.y, &base.y);
            let y_star = norming_functional(&dy, norm).unwrap_or_else(|_| fallback.clone());
            let entry = WitnessEntry {
                level,
                t,
                x: p.x.clone(),
                y: p.y.clone(),
                x_star: vec![0.0; base.x.len()],
                y_star,
                eps: 0.0,
            };
            Some(candidate(entry, norm.eval(&dy) / t, base, norm))
        })
        .collect()
}

/// Picks within one level: smallest key, then larger `t`, then first.
fn pick<'a>(cands: impl Iterator<Item = &'a Candidate>, key: impl Fn(&Candidate) -> f64) -> Option<&'a Candidate> {
    cands.fold(None, |best: Option<&Candidate>, c| match best {
        Some(b) if (key(b), -b.entry.t) <= (key(c), -c.entry.t) => Some(b),
        _ => Some(c),
    })
}

fn greedy_thinned(levels: &[Vec<&Candidate>], k_start: usize) -> Vec<Candidate> {
    let mut out: Vec<Candidate> = Vec::new();
    for lvl in levels {
        let bound = out.last().map_or(f64::INFINITY, |p| p.entry.t / (2.0 * (k_start + out.len()) as f64));
        if let Some(c) = pick(lvl.iter().copied().filter(|c| c.entry.t < bound), |c| c.objective) {
            out.push(c.clone());
        }
    }
    out
}

fn greedy_stationary(levels: &[Vec<&Candidate>], norm: NormKind) -> Vec<Candidate> {
    let mut out: Vec<Candidate> = Vec::new();
    for lvl in levels {
        let k = out.len() + 1;
        let bound = out.last().map_or(f64::INFINITY, |p| (-(k as f64)).exp() * p.entry.t);
        let prev_v = out.last().map(|p| p.v.clone());
        let chosen = match &prev_v {
            None => pick(lvl.iter().copied().filter(|c| c.entry.t < bound), |c| c.objective),
            Some(pv) => pick(lvl.iter().copied().filter(|c| c.entry.t < bound), |c| norm.dist(&c.v, pv)),
        };
        if let Some(c) = chosen {
            out.push(c.clone());
        }
    }
    out
}

fn greedy_distinct(levels: &[Vec<&Candidate>], norm: NormKind) -> Vec<Candidate> {
    let mut out: Vec<Candidate> = Vec::new();
    for lvl in levels {
        let fresh = lvl.iter().copied().filter(|c| out.iter().all(|p| norm.dist(&p.dir, &c.dir) > DIRECTION_TOL));
        if let Some(c) = pick(fresh, |c| c.objective) {
            out.push(c.clone());
        }
    }
    out
}

fn direction_key(d: &[f64]) -> Vec<i64> {
    d.iter().map(|a| (a / DIRECTION_TOL).round() as i64).collect()
}

/// Draws a witness sequence for `kind` from the graph of `f` near `base`.
pub fn extract_witness(
    f: &dyn SetValuedMap,
    base: &GraphPoint,
    kind: WitnessKind,
    gamma: f64,
    ladder: &ScaleLadder,
    norm: NormKind,
) -> Result<WitnessSequence, PerturbError> {
    let (est, per_level): (f64, Vec<Vec<Candidate>>) = match kind.constant_kind() {
        Some(ck) => {
            let cloud = ElementCloud::build(f, base, ladder, norm);
            let est = constant_from_cloud(ck, &cloud).reported;
            let lv = cloud
                .levels
                .iter()
                .enumerate()
                .map(|(j, l)| {
                    l.elements
                        .iter()
                        .filter(|e| ck.admits(e, ladder.radius(j)))
                        .map(|e| candidate_from_element(kind, e, base, norm))
                        .collect()
                })
                .collect();
            (est, lv)
        }
        None => {
            let levels = par::map_indexed(ladder.depth, |j| {
                f.sample_graph(
                    base,
                    ladder.radius(j + 1),
                    ladder.radius(j),
                    ladder.samples_per_scale,
                    ladder.level_seed(j),
                    norm,
                )
            });
            let est = ssrg_from_levels(&levels, base, ladder, norm, String::new()).reported;
            let lv = levels.iter().enumerate().map(|(j, pts)| ssr_candidates(j, pts, base, norm)).collect();
            (est, lv)
        }
    };
    if !(est < gamma) {
        return Err(PerturbError::NoWitness { constant: kind.constant_name().into(), value: est, gamma });
    }
    let g0 = ((est + gamma) / 2.0).max(gamma / 2.0);
    let levels: Vec<Vec<&Candidate>> = per_level
        .iter()
        .enumerate()
        .map(|(j, l)| {
            let r = ladder.radius(j);
            l.iter().filter(|c| c.objective <= g0 && c.entry.eps * norm.dual().eval(&c.entry.x_star) <= r).collect()
        })
        .collect();
    let (chosen, k_start, mode, u) = if kind.uses_index_cut() {
        let k_start = index_cut(g0, gamma) + 1;
        (greedy_thinned(&levels, k_start), k_start, None, None)
    } else {
        let mut clusters: BTreeMap<Vec<i64>, Vec<Vec<&Candidate>>> = BTreeMap::new();
        for (j, lvl) in levels.iter().enumerate() {
            for c in lvl {
                let slot = clusters.entry(direction_key(&c.dir)).or_insert_with(|| vec![Vec::new(); levels.len()]);
                slot[j].push(c);
            }
        }
        let mut best: Vec<Candidate> = Vec::new();
        for cl in clusters.values() {
            if cl.iter().filter(|l| !l.is_empty()).count() < MIN_ENTRIES {
                continue;
            }
            let run = greedy_stationary(cl, norm);
            if run.len() > best.len() {
                best = run;
            }
        }
        if best.len() >= MIN_ENTRIES {
            let u = best[0].dir.clone();
            // Entries keep their own points; the shared direction is the first one.
            (best, 1, Some(DirectionMode::Stationary), Some(u))
        } else {
            let run = greedy_distinct(&levels, norm);
            if run.len() < MIN_ENTRIES {
                return Err(PerturbError::InsufficientDepth { found: run.len().max(best.len()), needed: MIN_ENTRIES });
            }
            (run, 1, Some(DirectionMode::Distinct), None)
        }
    };
    if chosen.len() < MIN_ENTRIES {
        return Err(PerturbError::InsufficientDepth { found: chosen.len(), needed: MIN_ENTRIES });
    }
    let mut w = WitnessSequence {
        kind,
        base: base.clone(),
        norm,
        ladder: *ladder,
        entries: chosen.into_iter().map(|c| c.entry).collect(),
        gamma_prime: 0.0,
        constant_estimate: est,
        k_start,
        direction_mode: mode,
        u,
    };
    w.gamma_prime = w.sup_objective();
    w.validate()?;
    Ok(w)
}

/// A distinct-direction witness for `F(x) = <a, x>` on `R^2` at the origin,
/// with directions turning by the golden angle.
pub fn spiral_witness(a: [f64; 2], count: usize, t0: f64, norm: NormKind) -> WitnessSequence {
    let base = GraphPoint::new(vec![0.0, 0.0], vec![0.0]);
    let golden = std::f64::consts::PI * (3.0 - 5f64.sqrt());
    let ladder = ScaleLadder { depth: count + 1, r0: t0 * 4.0, ..ScaleLadder::default() };
    let entries: Vec<WitnessEntry> = (0..count)
        .map(|i| {
            let phi = golden * (i + 1) as f64;
            let d = [phi.cos(), phi.sin()];
            let target = t0 * 0.25f64.powi(i as i32);
            let x = geometry::scale(&d, target / norm.eval(&d));
            let y = vec![a[0] * x[0] + a[1] * x[1]];
            let mut e =
                WitnessEntry { level: 0, t: norm.eval(&x), x, y, x_star: a.to_vec(), y_star: vec![1.0], eps: 0.0 };
            e.level = ladder.level_of(e.t).unwrap_or(0);
            e.eps = ss_quotient(&e, &base, norm);
            e
        })
        .collect();
    let mut w = WitnessSequence {
        kind: WitnessKind::Ss,
        base,
        norm,
        ladder,
        entries,
        gamma_prime: 0.0,
        constant_estimate: 0.0,
        k_start: 1,
        direction_mode: Some(DirectionMode::Distinct),
        u: None,
    };
    w.gamma_prime = w.sup_objective();
    w
}

/// `s_k(x) g_k(x)` supported on the ball `B_rho(c)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BallBump {
    pub k: usize,
    pub t: f64,
    pub center: Vec<f64>,
    pub rho: f64,
    /// `y_k - ȳ`.
    pub dy: Vec<f64>,
    pub x_star: Vec<f64>,
    pub v: Vec<f64>,
}

/// `s(z) A(z)` on the cone around direction `u`, in the shifted variable
/// `z = x - x̄`, with `A(z) = (α(z)/t) dy + <x̂*, z> v`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConeBump {
    pub t: f64,
    pub u: Vec<f64>,
    pub u_star: Vec<f64>,
    pub tau: f64,
    pub dy: Vec<f64>,
    pub xhat_star: Vec<f64>,
    pub v: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "shape", rename_all = "snake_case")]
pub enum Shape {
    Balls { bumps: Vec<BallBump> },
    Cones { cones: Vec<ConeBump> },
    Ladder { pieces: Vec<ConeBump> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Perturbation {
    pub class: PerturbClass,
    pub gamma: f64,
    /// The internal modulus target `γ″ < γ`.
    pub gamma_pp: f64,
    /// `γ′` after the floor `γ/2`.
    pub gamma_prime_eff: f64,
    pub witness: WitnessSequence,
    pub shape: Shape,
}

fn outer(a: &[f64], b: &[f64]) -> DMatrix<f64> {
    DMatrix::from_fn(a.len(), b.len(), |i, j| a[i] * b[j])
}

fn grad_norm(z: &[f64], kind: NormKind) -> Vec<f64> {
    norming_functional(z, kind).unwrap_or_else(|_| vec![0.0; z.len()])
}

impl BallBump {
    fn eval(&self, x: &[f64], kind: NormKind, jac: bool) -> Option<(Vec<f64>, Option<DMatrix<f64>>)> {
        let d = kind.dist(x, &self.center);
        if !(d < self.rho) {
            return None;
        }
        let p = 1.0 + 1.0 / self.k as f64;
        let q = d / self.rho;
        let s = 1.0 - q.powf(p);
        let h = geometry::sub(x, &self.center);
        let g = geometry::axpy(&self.dy, dot(&self.x_star, &h), &self.v);
        let val = geometry::scale(&g, -s);
        let j = jac.then(|| {
            let ds = geometry::scale(&grad_norm(&h, kind), -p * q.powf(p - 1.0) / self.rho);
            -(outer(&g, &ds) + outer(&self.v, &self.x_star) * s)
        });
        Some((val, j))
    }
}

impl ConeBump {
    fn s(&self, z: &[f64], kind: NormKind) -> Option<(f64, f64, Vec<f64>)> {
        let alpha = dot(&self.u_star, z);
        if !(alpha > 0.0) {
            return None;
        }
        let r = geometry::axpy(z, -alpha, &self.u);
        let q = kind.eval(&r) / (self.tau * alpha);
        (q < 1.0).then_some((alpha, q, r))
    }

    /// `Â(z)` and its Jacobian; `None` off the cone.
    fn hat(&self, z: &[f64], kind: NormKind, jac: bool) -> Option<(Vec<f64>, Option<DMatrix<f64>>)> {
        let (alpha, q, r) = self.s(z, kind)?;
        let s = 1.0 - q * q;
        let a = geometry::axpy(&geometry::scale(&self.dy, alpha / self.t), dot(&self.xhat_star, z), &self.v);
        let val = geometry::scale(&a, s);
        let j = jac.then(|| {
            let phi = grad_norm(&r, kind);
            let dn = geometry::axpy(&phi, -dot(&phi, &self.u), &self.u_star);
            let nr = q * self.tau * alpha;
            let dq = geometry::scale(&geometry::axpy(&dn, -nr / alpha, &self.u_star), 1.0 / (self.tau * alpha));
            let ds = geometry::scale(&dq, -2.0 * q);
            let da = outer(&self.dy, &self.u_star) / self.t + outer(&self.v, &self.xhat_star);
            outer(&a, &ds) + da * s
        });
        Some((val, j))
    }
}

impl Perturbation {
    pub fn base(&self) -> &GraphPoint {
        &self.witness.base
    }

    pub fn norm(&self) -> NormKind {
        self.witness.norm
    }

    pub fn bump_count(&self) -> usize {
        match &self.shape {
            Shape::Balls { bumps } => bumps.len(),
            Shape::Cones { cones } => cones.len(),
            Shape::Ladder { pieces } => pieces.len(),
        }
    }

    /// Radius below which the finite series stops: the smallest `t_k`.
    pub fn floor(&self) -> f64 {
        self.witness.floor()
    }

    /// The bump active at `x`, found by binary search on the radial ladder
    /// (balls, ladder) or by scanning the cones.
    pub fn active_bump(&self, x: &[f64]) -> Option<usize> {
        let kind = self.norm();
        let z = geometry::sub(x, &self.base().x);
        match &self.shape {
            Shape::Balls { bumps } => {
                let d = kind.eval(&z);
                let i = bumps.partition_point(|b| b.t - b.rho >= d);
                let b = bumps.get(i)?;
                (d < b.t + b.rho && kind.dist(x, &b.center) < b.rho).then_some(i)
            }
            Shape::Cones { cones } => cones.iter().position(|c| c.s(&z, kind).is_some()),
            Shape::Ladder { pieces } => {
                let alpha = dot(&pieces[0].u_star, &z);
                if !(alpha > 0.0) {
                    return None;
                }
                Some(pieces.partition_point(|p| p.t > alpha).min(pieces.len() - 1))
            }
        }
    }

    /// Every bump with a nonzero cut-off at `x`, by exhaustive scan.
    pub fn supporting_bumps(&self, x: &[f64]) -> Vec<usize> {
        let kind = self.norm();
        let z = geometry::sub(x, &self.base().x);
        match &self.shape {
            Shape::Balls { bumps } => {
                (0..bumps.len()).filter(|&i| kind.dist(x, &bumps[i].center) < bumps[i].rho).collect()
            }
            Shape::Cones { cones } => (0..cones.len()).filter(|&i| cones[i].s(&z, kind).is_some()).collect(),
            Shape::Ladder { .. } => self.active_bump(x).into_iter().collect(),
        }
    }

    fn eval_full(&self, x: &[f64], jac: bool) -> (Vec<f64>, Option<DMatrix<f64>>) {
        let kind = self.norm();
        let (n, m) = (x.len(), self.base().y.len());
        let zero = || (vec![0.0; m], jac.then(|| DMatrix::zeros(m, n)));
        let z = geometry::sub(x, &self.base().x);
        match &self.shape {
            Shape::Balls { bumps } => match self.active_bump(x) {
                Some(i) => bumps[i].eval(x, kind, jac).unwrap_or_else(zero),
                None => zero(),
            },
            Shape::Cones { cones } => match self.active_bump(x) {
                Some(i) => {
                    let (v, j) = cones[i].hat(&z, kind, jac).unwrap_or_else(zero);
                    (geometry::scale(&v, -1.0), j.map(|j| -j))
                }
                None => zero(),
            },
            Shape::Ladder { pieces } => {
                let (v, j) = ladder_g(pieces, &z, kind, jac).unwrap_or_else(zero);
                (geometry::scale(&v, -1.0), j.map(|j| -j))
            }
        }
    }
}

/// The log-interpolated map `g` along a stationary direction.
fn ladder_g(pieces: &[ConeBump], z: &[f64], kind: NormKind, jac: bool) -> Option<(Vec<f64>, Option<DMatrix<f64>>)> {
    let (m, n) = (pieces[0].dy.len(), z.len());
    let u_star = &pieces[0].u_star;
    let alpha = dot(u_star, z);
    if !(alpha > 0.0) {
        return None;
    }
    let hat =
        |i: usize| pieces[i].hat(z, kind, jac).unwrap_or_else(|| (vec![0.0; m], jac.then(|| DMatrix::zeros(m, n))));
    let i = pieces.partition_point(|p| p.t > alpha);
    if i == 0 {
        return Some(hat(0));
    }
    if i == pieces.len() {
        return Some(hat(pieces.len() - 1));
    }
    let (tk, tprev) = (pieces[i].t, pieces[i - 1].t);
    let span = (tprev / tk).ln();
    let lam = (alpha / tk).ln() / span;
    let (ak, jk) = hat(i);
    let (ap, jp) = hat(i - 1);
    let diff = geometry::sub(&ap, &ak);
    let val = geometry::axpy(&ak, lam, &diff);
    let j = jac.then(|| {
        let dl = geometry::scale(u_star, 1.0 / (alpha * span));
        jk.unwrap() * (1.0 - lam) + jp.unwrap() * lam + outer(&diff, &dl)
    });
    Some((val, j))
}

impl Evaluable for Perturbation {
    fn dim_in(&self) -> usize {
        self.base().x.len()
    }
    fn dim_out(&self) -> usize {
        self.base().y.len()
    }
    fn eval(&self, x: &[f64]) -> Vec<f64> {
        self.eval_full(x, false).0
    }
    /// One-sided at bump boundaries, so always available.
    fn jacobian(&self, x: &[f64]) -> Option<DMatrix<f64>> {
        self.eval_full(x, true).1
    }
}

fn check_kind(w: &WitnessSequence, want: &[WitnessKind]) -> Result<(), PerturbError> {
    if !want.contains(&w.kind) {
        return Err(PerturbError::Invariant(format!("witness of kind {:?} given to a {:?} builder", w.kind, want)));
    }
    w.validate()
}

fn effective_gamma_prime(w: &WitnessSequence, gamma: f64) -> Result<f64, PerturbError> {
    let g = w.gamma_prime.max(gamma / 2.0);
    if !(g < gamma) {
        return Err(PerturbError::NoWitness { constant: w.kind.constant_name().into(), value: w.gamma_prime, gamma });
    }
    Ok(g)
}

fn build_balls(w: &WitnessSequence, gamma: f64) -> Result<Perturbation, PerturbError> {
    let gp = effective_gamma_prime(w, gamma)?;
    let khat = index_cut(gp, gamma);
    if w.k_start <= khat {
        return Err(PerturbError::Invariant(format!("first index {} does not exceed the cut {khat}", w.k_start)));
    }
    let gamma_pp = (gamma + gp * (1.0 + 1.0 / khat as f64).powi(2)) / 2.0;
    let dual = w.norm.dual();
    let bumps = w
        .entries
        .iter()
        .enumerate()
        .map(|(i, e)| {
            let k = w.k_start + i;
            let kf = k as f64;
            let rho = match w.kind {
                WitnessKind::Lip => kf * e.t / (kf + 1.0),
                _ => (1.0 / (kf + 1.0)).min(gp / ((kf + 1.0) * (1.0 + dual.eval(&e.x_star)))) * e.t,
            };
            Ok(BallBump {
                k,
                t: e.t,
                center: e.x.clone(),
                rho,
                dy: geometry::sub(&e.y, &w.base.y),
                x_star: e.x_star.clone(),
                v: norming_vector(&e.y_star, w.norm).map_err(|err| PerturbError::Invariant(err.to_string()))?,
            })
        })
        .collect::<Result<Vec<_>, PerturbError>>()?;
    Ok(Perturbation {
        class: w.kind.class(),
        gamma,
        gamma_pp,
        gamma_prime_eff: gp,
        witness: w.clone(),
        shape: Shape::Balls { bumps },
    })
}

pub fn build_lip_perturbation(w: &WitnessSequence, gamma: f64) -> Result<Perturbation, PerturbError> {
    check_kind(w, &[WitnessKind::Lip])?;
    build_balls(w, gamma)
}

pub fn build_fclm_perturbation(w: &WitnessSequence, gamma: f64) -> Result<Perturbation, PerturbError> {
    check_kind(w, &[WitnessKind::Fclm])?;
    build_balls(w, gamma)
}

/// Cone or ladder build for `ss` and `ssr` witnesses, dispatched on the
/// direction mode.
pub fn build_ss_perturbation(w: &WitnessSequence, gamma: f64) -> Result<Perturbation, PerturbError> {
    check_kind(w, &[WitnessKind::Ss, WitnessKind::Ssr])?;
    let gp = effective_gamma_prime(w, gamma)?;
    let ssr = w.kind == WitnessKind::Ssr;
    let gamma_pp = if ssr { gp } else { (gp + gamma) / 2.0 };
    let dual = w.norm.dual();
    let mode = w.direction_mode.ok_or_else(|| PerturbError::ModeMismatch("no direction mode".into()))?;
    let dirs = w.directions();
    let stationary_u = w.u.clone();
    let mut pieces = Vec::with_capacity(w.entries.len());
    for (i, e) in w.entries.iter().enumerate() {
        let u = match mode {
            DirectionMode::Stationary => stationary_u.clone().unwrap(),
            DirectionMode::Distinct => dirs[i].clone(),
        };
        let u_star = norming_functional(&u, w.norm).map_err(|err| PerturbError::Invariant(err.to_string()))?;
        let nx = dual.eval(&e.x_star);
        let cap = if nx > 0.0 { (gamma_pp - gp) / (4.0 * nx) } else { f64::INFINITY };
        let tau = match (mode, ssr) {
            (DirectionMode::Stationary, true) => 1.0,
            (DirectionMode::Stationary, false) => 0.5 * cap.min(1.0),
            (DirectionMode::Distinct, _) => {
                let rho = (0..dirs.len())
                    .filter(|&j| j != i)
                    .map(|j| w.norm.dist(&dirs[j], &dirs[i]))
                    .fold(f64::INFINITY, f64::min)
                    / 2.0;
                if ssr {
                    rho / 2.0
                } else {
                    0.5 * (rho / 2.0).min(cap)
                }
            }
        };
        if !(tau > 0.0 && tau.is_finite()) {
            return Err(PerturbError::Invariant(format!("entry {i}: cone width {tau} infeasible")));
        }
        let (xhat_star, v) = if ssr {
            (vec![0.0; u.len()], vec![0.0; e.y.len()])
        } else {
            let xh = geometry::axpy(&e.x_star, -dot(&e.x_star, &u), &u_star);
            let v = norming_vector(&e.y_star, w.norm).map_err(|err| PerturbError::Invariant(err.to_string()))?;
            (xh, v)
        };
        pieces.push(ConeBump { t: e.t, u, u_star, tau, dy: geometry::sub(&e.y, &w.base.y), xhat_star, v });
    }
    let shape = match mode {
        DirectionMode::Distinct => Shape::Cones { cones: pieces },
        DirectionMode::Stationary => Shape::Ladder { pieces },
    };
    Ok(Perturbation { class: w.kind.class(), gamma, gamma_pp, gamma_prime_eff: gp, witness: w.clone(), shape })
}

/// Dispatches on the witness kind.
pub fn build_perturbation(w: &WitnessSequence, gamma: f64) -> Result<Perturbation, PerturbError> {
    match w.kind {
        WitnessKind::Lip => build_lip_perturbation(w, gamma),
        WitnessKind::Fclm => build_fclm_perturbation(w, gamma),
        WitnessKind::Ss | WitnessKind::Ssr => build_ss_perturbation(w, gamma),
    }
}

/// A firmly calm, semismooth* `f` with `clm f(x̄) < gamma` such that `F + f`
/// passes through `ȳ` at every witness point.
pub fn build_ssr_destabilizer(
    f: &dyn SetValuedMap,
    base: &GraphPoint,
    gamma: f64,
    ladder: &ScaleLadder,
    norm: NormKind,
) -> Result<Perturbation, PerturbError> {
    let w = extract_witness(f, base, WitnessKind::Ssr, gamma, ladder, norm)?;
    build_ss_perturbation(&w, gamma)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FirmlyCalmReport {
    pub clm: f64,
    pub clm_bounded: bool,
    /// Largest two-point quotient seen around the mesh points.
    pub local_max: f64,
    pub locally_lipschitz: bool,
    pub verdict: Verdict,
}

/// Growth by at least 1.5x at each of the last four steps.
fn grows(values: &[f64]) -> bool {
    let n = values.len();
    n >= 5 && values[n - 5..].windows(2).all(|w| w[0] > 0.0 && w[1] >= 1.5 * w[0])
}

/// Calm at `x̄` and Lipschitz around every nearby `x ≠ x̄`, judged from
/// sampled quotients: a quotient sequence counts as unbounded when it keeps
/// growing geometrically as the scale shrinks.
pub fn firmly_calm_test(
    f: &dyn Evaluable,
    base_x: &[f64],
    ladder: &ScaleLadder,
    kind: NormKind,
    probes: &[Vec<f64>],
) -> FirmlyCalmReport {
    let clm = estimate_clm_with_probes(f, base_x, ladder, kind, probes);
    let clm_vals = clm.values();
    let clm_bounded = clm.reported.is_finite() && !grows(&clm_vals);
    let n = base_x.len();
    let mesh: Vec<Vec<f64>> = (0..ladder.depth)
        .flat_map(|j| {
            sample_annulus(base_x, ladder.radius(j + 1), ladder.radius(j), 32, ladder.level_seed(j) ^ 0xf1, kind)
                .unwrap_or_default()
        })
        .chain(probes.iter().cloned())
        .collect();
    let rows = par::map_indexed(mesh.len(), |i| {
        let x = &mesh[i];
        let t = kind.dist(x, base_x);
        let mut u = vec![0.0; n];
        u[i % n] = if i % (2 * n) < n { 1.0 } else { -1.0 };
        // Halve the step until `x` or `f` runs out of resolution, so
        // features far below `t` (narrow bumps) are seen.
        let mut qs = Vec::new();
        let mut h = exact_step(t / 4.0, x);
        loop {
            let a = f.eval(&geometry::axpy(x, h, &u));
            let b = f.eval(&geometry::axpy(x, -h, &u));
            let diff = kind.dist(&a, &b);
            qs.push(diff / (2.0 * h));
            let resolved = diff > 64.0 * f64::EPSILON * kind.eval(&a).max(kind.eval(&b));
            let next = exact_step(h / 2.0, x);
            if next >= h || !resolved {
                break;
            }
            h = next;
        }
        let finite = qs.iter().all(|q| q.is_finite());
        (qs.iter().copied().fold(0.0, f64::max), finite && !grows(&qs))
    });
    let local_max = rows.iter().map(|r| r.0).fold(0.0, f64::max);
    let locally_lipschitz = rows.iter().all(|r| r.1);
    let verdict = if clm_bounded && locally_lipschitz { Verdict::Pass } else { Verdict::Fail };
    FirmlyCalmReport { clm: clm.reported, clm_bounded, local_max, locally_lipschitz, verdict }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WitnessRow {
    pub k: usize,
    pub t: f64,
    pub interpolation_err: f64,
    pub gradient_relerr: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BuilderReport {
    pub class: PerturbClass,
    pub gamma: f64,
    pub gamma_pp: f64,
    #[serde(with = "crate::xreal")]
    pub interpolation_max_err: f64,
    pub interpolation_ok: bool,
    /// Largest relative error over the witnesses where the check applies.
    #[serde(with = "crate::xreal")]
    pub gradient_max_relerr: f64,
    pub gradient_checked: bool,
    pub gradient_ok: bool,
    pub modulus_name: String,
    #[serde(with = "crate::xreal")]
    pub modulus_estimate: f64,
    pub modulus_bound: f64,
    pub modulus_ok: bool,
    pub homogeneity_ok: Option<bool>,
    pub homogeneity_relerr: Option<f64>,
    pub semismooth_verdict: Option<Verdict>,
    pub firmly_calm: Option<bool>,
    pub class_ok: bool,
    /// Per-scale `srg1p(F + f)` down to the witness floor.
    #[serde(with = "crate::xreal::pairs")]
    pub destabilization: Vec<(f64, f64)>,
    pub destabilization_ok: bool,
    /// Largest strong-subregularity quotient of `F + f` at the witness points.
    #[serde(with = "crate::xreal")]
    pub ssrg_at_witnesses: f64,
    pub floor: f64,
    pub rows: Vec<WitnessRow>,
    pub all_ok: bool,
}

/// Points inside each bump, used to make sure sampled moduli see them.
pub fn bump_probes(p: &Perturbation, per_bump: usize) -> Vec<Vec<f64>> {
    let kind = p.norm();
    let radii: Vec<f64> = match &p.shape {
        Shape::Balls { bumps } => bumps.iter().map(|b| b.rho).collect(),
        Shape::Cones { cones } => cones.iter().map(|c| 0.5 * c.tau * c.t).collect(),
        Shape::Ladder { pieces } => pieces.iter().map(|c| 0.5 * c.tau.min(1.0) * c.t).collect(),
    };
    p.witness
        .entries
        .iter()
        .zip(radii)
        .enumerate()
        .flat_map(|(i, (e, r))| {
            let mut v = vec![e.x.clone()];
            v.extend(sample_annulus(&e.x, 0.0, r, per_bump, 0x9b ^ i as u64, kind).unwrap_or_default());
            v
        })
        .collect()
}

/// `J^T y*` expected at a witness point, where the shape has one.
fn expected_gradient(p: &Perturbation, i: usize) -> Option<Vec<f64>> {
    let e = &p.witness.entries[i];
    match &p.shape {
        Shape::Balls { .. } => Some(geometry::scale(&e.x_star, -1.0)),
        Shape::Cones { cones } => {
            let c = &cones[i];
            let dy = geometry::sub(&e.y, &p.base().y);
            if p.class == PerturbClass::Ssr {
                Some(geometry::scale(&c.u_star, -dot(&e.y_star, &dy) / e.t))
            } else {
                let dx = geometry::sub(&e.x, &p.base().x);
                let gap = (dot(&e.y_star, &dy) - dot(&e.x_star, &dx)) / e.t;
                Some(geometry::axpy(&geometry::scale(&e.x_star, -1.0), -gap, &c.u_star))
            }
        }
        Shape::Ladder { .. } => None,
    }
}

/// A power of two near `target` that is at least 16 ulps of every
/// coordinate of `x`, so `x ± h e_i` and the differences are exact.
fn exact_step(target: f64, x: &[f64]) -> f64 {
    let top = x.iter().fold(0.0f64, |m, a| m.max(a.abs()));
    let floor = if top > 0.0 { 16.0 * f64::EPSILON * 2f64.powi(top.log2().floor() as i32) } else { f64::MIN_POSITIVE };
    2f64.powi(target.log2().round() as i32).max(floor)
}

fn fd_gradient(p: &Perturbation, x: &[f64], y_star: &[f64], target: f64) -> Vec<f64> {
    let h = exact_step(target, x);
    (0..x.len())
        .map(|i| {
            let mut a = x.to_vec();
            let mut b = x.to_vec();
            a[i] += h;
            b[i] -= h;
            let col = geometry::scale(&geometry::sub(&p.eval(&a), &p.eval(&b)), 1.0 / (2.0 * h));
            dot(&col, y_star)
        })
        .collect()
}

/// Checks a built perturbation against `F` on `ladder`: interpolation,
/// gradient cancellation, sampled modulus, class properties, and the
/// collapse of `srg1p(F + f)` down to the witness floor.
pub fn verify_builder(p: &Perturbation, f: Arc<dyn SetValuedMap>, ladder: &ScaleLadder) -> BuilderReport {
    let kind = p.norm();
    let dual = kind.dual();
    let base = p.base().clone();
    let w = &p.witness;

    let step_scale: Vec<f64> = match &p.shape {
        Shape::Balls { bumps } => bumps.iter().map(|b| 1e-6 * b.rho.min(b.t)).collect(),
        Shape::Cones { cones } => cones.iter().map(|c| 1e-9 * c.tau.min(1.0) * c.t).collect(),
        Shape::Ladder { pieces } => pieces.iter().map(|c| 1e-9 * c.tau.min(1.0) * c.t).collect(),
    };
    let rows: Vec<WitnessRow> = w
        .entries
        .iter()
        .enumerate()
        .map(|(i, e)| {
            let target = geometry::sub(&base.y, &e.y);
            let interpolation_err = kind.dist(&p.eval(&e.x), &target);
            let gradient_relerr = expected_gradient(p, i).map(|exp| {
                let fd = fd_gradient(p, &e.x, &e.y_star, step_scale[i]);
                dual.dist(&fd, &exp) / dual.eval(&exp).max(1.0)
            });
            WitnessRow { k: w.k_start + i, t: e.t, interpolation_err, gradient_relerr }
        })
        .collect();
    let interpolation_max_err = rows.iter().map(|r| r.interpolation_err).fold(0.0, f64::max);
    let interpolation_ok = w.entries.iter().zip(&rows).all(|(e, r)| {
        let scale = kind.dist(&e.y, &base.y).max(e.t * dual.eval(&e.x_star).max(1.0));
        r.interpolation_err <= 64.0 * f64::EPSILON * scale
    });
    let gradient_checked = rows.iter().any(|r| r.gradient_relerr.is_some());
    let gradient_max_relerr = rows.iter().filter_map(|r| r.gradient_relerr).fold(0.0, f64::max);
    let gradient_ok = match p.class {
        PerturbClass::Lip | PerturbClass::Fclm => gradient_max_relerr <= 1e-5,
        _ => true,
    };

    let probes = bump_probes(p, 16);
    let (modulus_name, modulus): (&str, Estimate) = match p.class {
        PerturbClass::Lip => ("lip", estimate_lip_with_probes(p, &base.x, ladder, kind, &probes)),
        _ => ("clm", estimate_clm_with_probes(p, &base.x, ladder, kind, &probes)),
    };
    let modulus_bound = p.gamma - (p.gamma - p.gamma_pp) / 2.0;
    let modulus_ok = modulus.reported <= modulus_bound;

    let mut homogeneity = None;
    let mut semismooth = None;
    let mut firmly_calm = None;
    if p.class != PerturbClass::Lip {
        firmly_calm = Some(firmly_calm_test(p, &base.x, ladder, kind, &probes).verdict == Verdict::Pass);
    }
    match &p.shape {
        Shape::Cones { .. } => {
            homogeneity = Some(positive_homogeneity_test(
                p,
                &base.x,
                &[0.5, 2.0, 5.0],
                1000,
                ladder.r0,
                ladder.seed,
                kind,
                1e-12,
            ));
            let graph = make_function_graph("perturbation", Arc::new(p.clone()));
            semismooth = Some(
                semismooth_star_test(&graph, &GraphPoint::new(base.x.clone(), vec![0.0; base.y.len()]), ladder, kind)
                    .verdict,
            );
        }
        Shape::Ladder { .. } => {
            semismooth = Some(directional_ss_criterion(p, &base.x, ladder, kind, SS_THRESHOLD).verdict);
        }
        Shape::Balls { .. } => {}
    }
    let class_ok = firmly_calm.unwrap_or(true)
        && homogeneity.as_ref().is_none_or(|h| h.ok)
        && semismooth.is_none_or(|v| v == Verdict::Pass);

    let floor = w.floor();
    let floor_level = ladder.level_of(floor).unwrap_or(ladder.depth.saturating_sub(1));
    let (destabilization, ssrg_at_witnesses) = match sum_with_function(f, Arc::new(p.clone())) {
        Ok(sum) => {
            let extra: Vec<GraphPoint> =
                w.entries.iter().map(|e| GraphPoint::new(e.x.clone(), base.y.clone())).collect();
            let cloud = ElementCloud::build_with_extra(&sum, &base, ladder, kind, &extra);
            let est = constant_from_cloud(ConstantKind::Srg1p, &cloud);
            let per: Vec<(f64, f64)> = est.per_scale.iter().take(floor_level + 1).copied().collect();
            let at_w = extra
                .iter()
                .map(|g| sum.image_distance(&g.x, &g.y, kind) / kind.dist(&g.x, &base.x))
                .fold(0.0, f64::max);
            (per, at_w)
        }
        Err(_) => (Vec::new(), f64::INFINITY),
    };
    let vals: Vec<f64> = destabilization.iter().map(|s| s.1).collect();
    let destabilization_ok = if p.class == PerturbClass::Ssr {
        ssrg_at_witnesses <= 1e-12
    } else {
        vals.len() >= 3 && {
            let tail = &vals[vals.len() - 3..];
            tail.windows(2).all(|w| w[1] <= w[0] + DECAY_SLACK) && tail[2] <= 0.05
        }
    };
    let all_ok = interpolation_ok && gradient_ok && modulus_ok && class_ok && destabilization_ok;
    BuilderReport {
        class: p.class,
        gamma: p.gamma,
        gamma_pp: p.gamma_pp,
        interpolation_max_err,
        interpolation_ok,
        gradient_max_relerr,
        gradient_checked,
        gradient_ok,
        modulus_name: modulus_name.into(),
        modulus_estimate: modulus.reported,
        modulus_bound,
        modulus_ok,
        homogeneity_ok: homogeneity.as_ref().map(|h| h.ok),
        homogeneity_relerr: homogeneity.map(|h| h.max_relerr),
        semismooth_verdict: semismooth,
        firmly_calm,
        class_ok,
        destabilization,
        destabilization_ok,
        ssrg_at_witnesses,
        floor,
        rows,
        all_ok,
    }
}

/// `f(x) = A x + c ||x||^2 1 + d sin(ln ||x||) x`, calm at the origin with
/// `clm f(0) <= ||A|| + |d|`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RandomCalm {
    pub a: Vec<Vec<f64>>,
    pub c: f64,
    pub d: f64,
    pub norm: NormKind,
}

impl RandomCalm {
    /// Draws a member with `||A|| + |d| = 0.9 bound`.
    pub fn draw(dim: usize, bound: f64, seed: u64, norm: NormKind) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let raw = DMatrix::from_fn(dim, dim, |_, _| rng.random_range(-1.0..1.0));
        let split: f64 = rng.random_range(0.0..1.0);
        let total = 0.9 * bound;
        let op = operator_norm(&raw, norm);
        let a = if op > 0.0 { raw * (split * total / op) } else { raw };
        let sign = if rng.random_bool(0.5) { 1.0 } else { -1.0 };
        let d = sign * (1.0 - split) * total;
        let c = rng.random_range(-0.5..0.5);
        Self { a: (0..dim).map(|i| (0..dim).map(|j| a[(i, j)]).collect()).collect(), c, d, norm }
    }

    fn matrix(&self) -> DMatrix<f64> {
        let n = self.a.len();
        DMatrix::from_fn(n, n, |i, j| self.a[i][j])
    }

    pub fn calm_bound(&self) -> f64 {
        operator_norm(&self.matrix(), self.norm) + self.d.abs()
    }
}

impl Evaluable for RandomCalm {
    fn dim_in(&self) -> usize {
        self.a.len()
    }
    fn dim_out(&self) -> usize {
        self.a.len()
    }
    fn eval(&self, x: &[f64]) -> Vec<f64> {
        let nx = self.norm.eval(x);
        if nx == 0.0 {
            return vec![0.0; x.len()];
        }
        let ax = self.matrix() * nalgebra::DVector::from_column_slice(x);
        let sl = nx.ln().sin();
        (0..x.len()).map(|i| ax[i] + self.c * nx * nx + self.d * sl * x[i]).collect()
    }
    fn jacobian(&self, x: &[f64]) -> Option<DMatrix<f64>> {
        let n = x.len();
        let nx = self.norm.eval(x);
        if nx == 0.0 {
            return None;
        }
        let g = grad_norm(x, self.norm);
        let l = nx.ln();
        let mut j = self.matrix();
        j += outer(&vec![1.0; n], &g) * (2.0 * self.c * nx);
        j += DMatrix::identity(n, n) * (self.d * l.sin());
        j += outer(x, &g) * (self.d * l.cos() / nx);
        Some(j)
    }
}
