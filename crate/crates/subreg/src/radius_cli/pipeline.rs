//! Task dispatch and the radius verification pipeline.

use std::sync::Arc;
use std::time::Instant;

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::geometry::{operator_norm, NormKind, ScaleLadder};
use crate::mappings::{build_map, catalog, sum_with_function, CatalogEntry, Evaluable, Func, GraphPoint, SetValuedMap};
use crate::moduli::{
    all_constants, check_relations, eckart_young_check, estimate_rg, estimate_srg, estimate_ssrg,
    subregularity_consistency, ConstantKind, Estimate,
};
use crate::perturb::{build_perturbation, extract_witness, verify_builder, PerturbError, RandomCalm, WitnessKind};
use crate::variational::{semismooth_star_test, ElementCloud, Verdict};
use crate::xreal;

use super::config::{ConfigError, ExperimentConfig, Task};
use super::report::{BuildOutcome, BuilderEntry, CheckLine, RunReport, RunStatus, StageTiming};

/// Tolerance for comparing estimates against analytically known values.
pub const KNOWN_TOL: f64 = 0.05;
/// Estimates above this count as a positive modulus.
pub const POSITIVE: f64 = 0.01;

struct Ctx {
    map: Arc<dyn SetValuedMap>,
    base: GraphPoint,
    ladder: ScaleLadder,
    norm: NormKind,
    entry: Option<CatalogEntry>,
}

fn timed<T>(stages: &mut Vec<StageTiming>, stage: &str, f: impl FnOnce() -> T) -> T {
    let start = Instant::now();
    let out = f();
    stages.push(StageTiming { stage: stage.into(), seconds: start.elapsed().as_secs_f64() });
    out
}

/// Runs one experiment. Deterministic given the config, seed included.
pub fn run(cfg: &ExperimentConfig) -> Result<RunReport, ConfigError> {
    cfg.validate()?;
    let mut report = RunReport::new(cfg.clone());
    if cfg.task == Task::EckartYoung {
        eckart_young(cfg, &mut report);
        report.settle();
        return Ok(report);
    }
    let spec = cfg.map.as_ref().expect("validated");
    let ctx = Ctx {
        map: build_map(spec)?,
        base: cfg.base_point()?,
        ladder: cfg.ladder(),
        norm: cfg.norm,
        entry: cfg.catalog_entry(),
    };
    report.map = Some(ctx.entry.as_ref().map_or_else(|| ctx.map.name(), |e| e.id.clone()));
    report.base = Some(ctx.base.clone());
    report.known_values = ctx.entry.as_ref().map(|e| e.known_values.clone()).unwrap_or_default();
    match cfg.task {
        Task::Moduli => {
            let est = timed(&mut report.stages, "moduli", || {
                [estimate_rg, estimate_srg, estimate_ssrg]
                    .map(|f| f(ctx.map.as_ref(), &ctx.base, &ctx.ladder, ctx.norm))
            });
            report.estimates.extend(est);
        }
        Task::Constants => {
            constants(&ctx, &mut report);
        }
        Task::Relations => {
            let all = constants(&ctx, &mut report);
            match check_relations(&all) {
                Ok(rel) => {
                    for c in &rel.checks {
                        report.checks.push(CheckLine::new(c.label.clone(), c.holds, c.slack, "shared element set"));
                    }
                    if !rel.all_hold {
                        report.status = RunStatus::Alarm;
                    }
                    report.relations = Some(rel);
                }
                Err(e) => {
                    report.checks.push(CheckLine::new("relations computable", false, f64::NEG_INFINITY, e.to_string()));
                    report.status = RunStatus::Alarm;
                }
            }
            let srg =
                timed(&mut report.stages, "srg", || estimate_srg(ctx.map.as_ref(), &ctx.base, &ctx.ladder, ctx.norm));
            let cons = subregularity_consistency(&all[&ConstantKind::Srg1], &srg);
            report.checks.push(CheckLine::new(
                "srg1 > 0 implies srg > 0",
                cons.consistent,
                if cons.claim_triggered { srg.reported - POSITIVE } else { f64::INFINITY },
                format!("srg1={} srg={}", xreal::fmt(cons.srg1), xreal::fmt(cons.srg)),
            ));
            if !cons.consistent {
                report.status = RunStatus::Alarm;
            }
            report.consistency = Some(cons);
            report.estimates.push(srg);
        }
        Task::Semismooth => {
            let ss = timed(&mut report.stages, "semismooth", || {
                semismooth_star_test(ctx.map.as_ref(), &ctx.base, &ctx.ladder, ctx.norm)
            });
            if let Some(k) = report.known_values.iter().find(|k| k.quantity == "semismooth_star") {
                let expect = if k.value > 0.5 { Verdict::Pass } else { Verdict::Fail };
                report.checks.push(CheckLine::new(
                    "semismooth* verdict matches the known value",
                    ss.verdict == expect,
                    0.0,
                    format!("{:?}", ss.verdict),
                ));
            }
            report.semismooth = Some(ss);
        }
        Task::BuildPerturbation => {
            let p = cfg.perturbation.as_ref().expect("validated");
            let (kind, gamma) = (p.kind.expect("validated"), p.gamma.expect("validated"));
            let entry = build_and_verify(&ctx, kind, gamma, &mut report);
            let line = match &entry.outcome {
                BuildOutcome::Built { report: r, .. } => CheckLine::new(
                    format!("{kind:?} perturbation with modulus < {gamma} destabilizes"),
                    r.all_ok,
                    r.modulus_bound - r.modulus_estimate,
                    format!("{}={}", r.modulus_name, xreal::fmt(r.modulus_estimate)),
                ),
                BuildOutcome::Refused { error } => CheckLine::new(
                    format!("{kind:?} perturbation with modulus < {gamma} destabilizes"),
                    false,
                    f64::NEG_INFINITY,
                    error.clone(),
                ),
            };
            report.checks.push(line);
            report.builders.push(entry);
        }
        Task::VerifyRadius => verify_radius(cfg, &ctx, &mut report),
        Task::EckartYoung => unreachable!("handled above"),
    }
    known_value_checks(&mut report);
    report.settle();
    Ok(report)
}

/// Runs the sandwich checks of the radius theorem for the configured classes.
pub fn verify_radius_pipeline(cfg: &ExperimentConfig) -> Result<RunReport, ConfigError> {
    if cfg.task != Task::VerifyRadius {
        let mut c = cfg.clone();
        c.task = Task::VerifyRadius;
        c.perturbation = cfg.perturbation.clone().map(|mut p| {
            p.gamma = None;
            p
        });
        return run(&c);
    }
    run(cfg)
}

fn constants(ctx: &Ctx, report: &mut RunReport) -> std::collections::BTreeMap<ConstantKind, Estimate> {
    let cloud = timed(&mut report.stages, "element cloud", || {
        ElementCloud::build(ctx.map.as_ref(), &ctx.base, &ctx.ladder, ctx.norm)
    });
    let all = timed(&mut report.stages, "constants", || all_constants(&cloud));
    report.estimates.extend(ConstantKind::ALL.iter().map(|k| all[k].clone()));
    all
}

fn known_value_checks(report: &mut RunReport) {
    let mut lines = Vec::new();
    for k in &report.known_values {
        let Some(e) = report.estimate(&k.quantity) else { continue };
        let (pass, slack) = if k.value.is_infinite() || e.reported.is_infinite() {
            let same = k.value == e.reported;
            (same, if same { 0.0 } else { f64::NEG_INFINITY })
        } else {
            let gap = (e.reported - k.value).abs();
            (gap <= KNOWN_TOL, KNOWN_TOL - gap)
        };
        lines.push(CheckLine::new(
            format!("{} = {} (known)", k.quantity, xreal::fmt(k.value)),
            pass,
            slack,
            format!("estimate {}", xreal::fmt(e.reported)),
        ));
    }
    report.checks.extend(lines);
}

fn build_and_verify(ctx: &Ctx, kind: WitnessKind, gamma: f64, report: &mut RunReport) -> BuilderEntry {
    let label = format!("build {kind:?} gamma={gamma}");
    let built = timed(&mut report.stages, &label, || {
        extract_witness(ctx.map.as_ref(), &ctx.base, kind, gamma, &ctx.ladder, ctx.norm)
            .and_then(|w| build_perturbation(&w, gamma))
    });
    let outcome = match built {
        Ok(p) => {
            let r = timed(&mut report.stages, &format!("verify {kind:?} gamma={gamma}"), || {
                verify_builder(&p, ctx.map.clone(), &ctx.ladder)
            });
            let bumps = p.bump_count();
            if report.perturbation.is_none() {
                report.perturbation = Some(p);
            }
            BuildOutcome::Built { bumps, report: Box::new(r) }
        }
        Err(e) => BuildOutcome::Refused { error: e.to_string() },
    };
    BuilderEntry { kind, gamma, outcome }
}

/// `x -> m A x` with `A` seeded and normalized to operator norm 1.
fn linear_perturbation(dim_in: usize, dim_out: usize, m: f64, seed: u64, norm: NormKind) -> Func {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let raw = DMatrix::from_fn(dim_out, dim_in, |_, _| rng.random_range(-1.0..1.0));
    let op = operator_norm(&raw, norm);
    let a = if op > 0.0 { raw * (m / op) } else { raw };
    let j = a.clone();
    Func::new(dim_in, dim_out, move |x| (&a * nalgebra::DVector::from_column_slice(x)).iter().copied().collect())
        .with_jacobian(move |_| Some(j.clone()))
}

struct ClassPlan {
    kind: WitnessKind,
    radius: &'static str,
    lower: &'static str,
    upper: &'static str,
    known: &'static str,
}

const PLANS: [ClassPlan; 4] = [
    ClassPlan { kind: WitnessKind::Lip, radius: "rad[SR]_lip", lower: "srg1", upper: "srg1p", known: "rad_lip" },
    ClassPlan { kind: WitnessKind::Fclm, radius: "rad[SR]_fclm", lower: "srg2", upper: "srg2p", known: "rad_fclm" },
    ClassPlan {
        kind: WitnessKind::Ss,
        radius: "rad[SR]_fclm+ss*",
        lower: "srg4",
        upper: "srg4p",
        known: "rad_fclm_ss",
    },
    ClassPlan { kind: WitnessKind::Ssr, radius: "rad[sSR]_clm", lower: "ssrg", upper: "ssrg", known: "ssrg" },
];

fn verify_radius(cfg: &ExperimentConfig, ctx: &Ctx, report: &mut RunReport) {
    let kinds: Vec<WitnessKind> = match cfg.perturbation.as_ref().and_then(|p| p.kind) {
        Some(k) => vec![k],
        None => PLANS.iter().map(|p| p.kind).collect(),
    };
    if kinds.iter().any(|&k| k != WitnessKind::Ssr) {
        constants(ctx, report);
    }
    if kinds.contains(&WitnessKind::Ssr) {
        let e = timed(&mut report.stages, "ssrg", || estimate_ssrg(ctx.map.as_ref(), &ctx.base, &ctx.ladder, ctx.norm));
        report.estimates.push(e);
    }
    let value = |r: &RunReport, name: &str| r.estimate(name).map_or(f64::NAN, |e| e.reported);
    for plan in PLANS.iter().filter(|p| kinds.contains(&p.kind)) {
        let (lower, upper) = (value(report, plan.lower), value(report, plan.upper));
        let ssr = plan.kind == WitnessKind::Ssr;
        if !ssr {
            report.checks.push(CheckLine::new(
                format!("{} <= {}", plan.lower, plan.upper),
                lower <= upper,
                upper - lower,
                String::new(),
            ));
        }
        lower_bound_check(ctx, plan, lower, report);
        if upper.is_finite() {
            let gamma = if plan.kind == WitnessKind::Lip || plan.kind == WitnessKind::Fclm {
                1.25 * upper + 0.01
            } else {
                1.1 * upper + 0.01
            };
            let entry = build_and_verify(ctx, plan.kind, gamma, report);
            let label =
                format!("{} <= {}: a perturbation with modulus < {gamma:.4} destabilizes", plan.radius, plan.upper);
            report.checks.push(match &entry.outcome {
                BuildOutcome::Built { report: r, .. } => CheckLine::new(
                    label,
                    r.all_ok,
                    r.modulus_bound - r.modulus_estimate,
                    format!("{}={}", r.modulus_name, xreal::fmt(r.modulus_estimate)),
                ),
                BuildOutcome::Refused { error } => CheckLine::new(label, false, f64::NEG_INFINITY, error.clone()),
            });
            report.builders.push(entry);
        } else {
            report.checks.push(CheckLine::new(
                format!("{} <= {}", plan.radius, plan.upper),
                true,
                f64::INFINITY,
                "upper constant infinite",
            ));
        }
        if ssr && upper > 2.0 * POSITIVE && upper.is_finite() {
            let gamma = 0.9 * upper;
            let refused = matches!(
                extract_witness(ctx.map.as_ref(), &ctx.base, WitnessKind::Ssr, gamma, &ctx.ladder, ctx.norm),
                Err(PerturbError::NoWitness { .. })
            );
            report.checks.push(CheckLine::new(
                format!("{} >= ssrg: destabilizer refused at gamma = {gamma:.4}", plan.radius),
                refused,
                upper - gamma,
                String::new(),
            ));
        }
        if let Some(k) = report.known_values.iter().find(|k| k.quantity == plan.known && !ssr) {
            let slack = (k.value - lower + KNOWN_TOL).min(upper + KNOWN_TOL - k.value);
            report.checks.push(CheckLine::new(
                format!("{} <= {} = {} (known) <= {}", plan.lower, plan.radius, xreal::fmt(k.value), plan.upper),
                slack >= 0.0,
                slack,
                format!("{}={} {}={}", plan.lower, xreal::fmt(lower), plan.upper, xreal::fmt(upper)),
            ));
        }
    }
}

/// A perturbation of modulus below the lower constant must keep the
/// modulus of `F + f` positive.
fn lower_bound_check(ctx: &Ctx, plan: &ClassPlan, lower: f64, report: &mut RunReport) {
    let label = format!("{} >= {}", plan.radius, plan.lower);
    if !(lower > 2.0 * POSITIVE) {
        report.checks.push(CheckLine::new(label, true, lower, "lower constant ~ 0, nothing to preserve"));
        return;
    }
    let m = 0.5 * lower.min(2.0);
    let (nx, ny) = (ctx.map.dim_x(), ctx.map.dim_y());
    let seed = ctx.ladder.seed ^ 0x5eed;
    let f: Arc<dyn Evaluable> = if plan.kind == WitnessKind::Ssr && nx == ny {
        Arc::new(RandomCalm::draw(nx, m / 0.9, seed, ctx.norm))
    } else {
        Arc::new(linear_perturbation(nx, ny, m, seed, ctx.norm))
    };
    let Ok(sum) = sum_with_function(ctx.map.clone(), f) else {
        report.checks.push(CheckLine::new(label, false, f64::NEG_INFINITY, "dimension mismatch"));
        return;
    };
    let est = timed(&mut report.stages, &format!("lower {:?}", plan.kind), || {
        if plan.kind == WitnessKind::Ssr {
            estimate_ssrg(&sum, &ctx.base, &ctx.ladder, ctx.norm)
        } else {
            estimate_srg(&sum, &ctx.base, &ctx.ladder, ctx.norm)
        }
    });
    report.checks.push(CheckLine::new(
        format!("{label}: modulus {m:.4} perturbation keeps {}(F+f) > 0", est.name),
        est.reported > POSITIVE,
        est.reported - POSITIVE,
        format!("{}(F+f)={}", est.name, xreal::fmt(est.reported)),
    ));
}

fn eckart_young(cfg: &ExperimentConfig, report: &mut RunReport) {
    let ey = cfg.eckart_young.as_ref().expect("validated");
    let ladder = cfg.ladder();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut mats = Vec::with_capacity(ey.count);
    while mats.len() < ey.count {
        let a: DMatrix<f64> = DMatrix::from_fn(ey.dim, ey.dim, |_, _| rng.random_range(-1.0..1.0));
        if a.determinant().abs() > 1e-3 {
            mats.push(a);
        }
    }
    let rows = timed(&mut report.stages, "eckart-young", || {
        mats.iter().filter_map(|a| eckart_young_check(a, &ladder).ok()).collect::<Vec<_>>()
    });
    let worst = |f: &dyn Fn(&crate::moduli::EckartYoungReport) -> f64| rows.iter().map(f).fold(0.0, f64::max);
    let gap = worst(&|r| (r.b_norm - r.radius).abs());
    let det = worst(&|r| r.det_a_plus_b.abs());
    let rel = worst(&|r| r.rg_relerr);
    let n = rows.len();
    report.checks.push(CheckLine::new("matrices analysed", n == ey.count, (n as f64) - ey.count as f64, ""));
    report.checks.push(CheckLine::new("||B|| = 1/||A^-1||", gap <= 1e-10, 1e-10 - gap, format!("worst gap {gap:.3e}")));
    report.checks.push(CheckLine::new("det(A + B) = 0", det <= 1e-10, 1e-10 - det, format!("worst |det| {det:.3e}")));
    report.checks.push(CheckLine::new(
        "rg(A) = 1/||A^-1||",
        rel <= 0.05,
        0.05 - rel,
        format!("worst relerr {rel:.3e}"),
    ));
    report.eckart_young = rows;
}

/// One line per catalog entry: id, dimensions, base point, known values.
pub fn list_catalog() -> String {
    let mut out = Vec::new();
    for e in catalog() {
        let m = e.map();
        out.push(format!(
            "{:<12} {}=>{}  base x={:?} y={:?}  {}",
            e.id,
            m.dim_x(),
            m.dim_y(),
            e.base.x,
            e.base.y,
            e.description
        ));
        for k in &e.known_values {
            out.push(format!("    {:<22} {:<5} [{}]", k.quantity, xreal::fmt(k.value), k.note));
        }
    }
    out.join("\n")
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg(text: &str) -> ExperimentConfig {
        ExperimentConfig::from_toml(text).unwrap()
    }

    #[test]
    fn moduli_identity() {
        let r = run(&cfg("seed = 0\ntask = \"moduli\"\nnorm = \"l1\"\n[map]\nid = \"identity\"\n[ladder]\ndepth = 6\nsamples = 300\n")).unwrap();
        for name in ["rg", "srg", "ssrg"] {
            assert!((r.estimate(name).unwrap().reported - 1.0).abs() < 1e-9);
        }
        assert_eq!(r.status, RunStatus::Ok);
        assert!(r.checks.iter().all(|c| c.pass));
    }

    #[test]
    fn build_zero_lip() {
        let r = run(&cfg(
            "seed = 0\ntask = \"build_perturbation\"\nnorm = \"l1\"\n[map]\nid = \"zero\"\n[perturbation]\nkind = \"lip\"\ngamma = 0.1\n",
        ))
        .unwrap();
        assert_eq!(r.status, RunStatus::Ok, "{}", r.summary());
    }

    #[test]
    fn catalog_listing() {
        let s = list_catalog();
        for id in ["identity", "zero", "xsin", "interval", "compl_angle"] {
            assert!(s.contains(id));
        }
        assert!(catalog().len() >= 8);
    }
}
