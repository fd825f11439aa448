//! End-to-end acceptance suite. Prints one PASS/FAIL line per criterion and
//! exits nonzero if any fails.

use std::collections::BTreeMap;
use std::sync::Arc;

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::{json, Value};

use subreg::geometry::{NormKind, ScaleLadder};
use subreg::mappings::{build_map, catalog, sum_with_function, GraphPoint, IntervalMap, MapSpec, SetValuedMap};
use subreg::moduli::{
    all_constants, check_relations, eckart_young_check, estimate_clm, estimate_rg, estimate_srg, estimate_ssrg,
    ConstantKind, Estimate,
};
use subreg::par;
use subreg::perturb::{
    build_perturbation, build_ss_perturbation, build_ssr_destabilizer, extract_witness, spiral_witness, verify_builder,
    BuilderReport, Perturbation, RandomCalm, Shape, WitnessKind,
};
use subreg::variational::{semismooth_star_test, ElementCloud, Verdict, SS_THRESHOLD};

struct Outcome {
    pass: bool,
    detail: String,
    /// Everything the criterion computed, for the determinism check.
    digest: Value,
}

fn origin(nx: usize, ny: usize) -> GraphPoint {
    GraphPoint::new(vec![0.0; nx], vec![0.0; ny])
}

fn ladder(depth: usize) -> ScaleLadder {
    ScaleLadder { depth, ..Default::default() }
}

fn map(spec: MapSpec) -> Arc<dyn SetValuedMap> {
    build_map(&spec).expect("catalog spec builds")
}

fn near(v: f64, target: f64, tol: f64) -> bool {
    (v - target).abs() <= tol
}

fn constants(f: &dyn SetValuedMap, base: &GraphPoint, l: &ScaleLadder) -> BTreeMap<ConstantKind, Estimate> {
    all_constants(&ElementCloud::build(f, base, l, NormKind::L1))
}

fn build_and_verify(
    f: &Arc<dyn SetValuedMap>,
    base: &GraphPoint,
    kind: WitnessKind,
    gamma: f64,
    depth: usize,
) -> Result<(Perturbation, BuilderReport), String> {
    let l = ladder(depth);
    let w = extract_witness(f.as_ref(), base, kind, gamma, &l, NormKind::L1).map_err(|e| e.to_string())?;
    let p = build_perturbation(&w, gamma).map_err(|e| e.to_string())?;
    let r = verify_builder(&p, f.clone(), &l);
    Ok((p, r))
}

fn criterion_1() -> Outcome {
    let id = map(MapSpec::Identity { dim: None });
    let (base, l) = (origin(1, 1), ladder(12));
    let rg = estimate_rg(id.as_ref(), &base, &l, NormKind::L1);
    let srg = estimate_srg(id.as_ref(), &base, &l, NormKind::L1);
    let ssrg = estimate_ssrg(id.as_ref(), &base, &l, NormKind::L1);
    let c = constants(id.as_ref(), &base, &l);
    let mut vals = vec![("rg", rg.reported), ("srg", srg.reported), ("ssrg", ssrg.reported)];
    for k in [ConstantKind::Srg1, ConstantKind::Srg2, ConstantKind::Srg4] {
        vals.push((k.name(), c[&k].reported));
    }
    let srg1p = c[&ConstantKind::Srg1p].reported;
    let pass = vals.iter().all(|(_, v)| near(*v, 1.0, 0.02)) && near(srg1p, 2.0, 0.04);
    let detail =
        vals.iter().map(|(n, v)| format!("{n}={v:.4}")).chain([format!("srg1p={srg1p:.4}")]).collect::<Vec<_>>();
    Outcome { pass, detail: detail.join(" "), digest: json!([rg, srg, ssrg, c]) }
}

fn criterion_2() -> Outcome {
    let zero = map(MapSpec::Zero { dim_x: None, dim_y: None });
    let (base, l) = (origin(1, 1), ladder(12));
    let srg = estimate_srg(zero.as_ref(), &base, &l, NormKind::L1);
    let c = constants(zero.as_ref(), &base, &l);
    let (s1, s1p, s2) =
        (c[&ConstantKind::Srg1].reported, c[&ConstantKind::Srg1p].reported, c[&ConstantKind::Srg2].reported);
    let mut pass = srg.reported == f64::INFINITY && srg.has_flag("inf_empty");
    pass &= [s1, s1p, s2].iter().all(|v| near(*v, 0.0, 0.01));
    let mut builds = Vec::new();
    let mut ok = 0;
    let gammas = [0.01, 0.05, 0.2, 1.0, 5.0];
    for g in gammas {
        match build_and_verify(&zero, &base, WitnessKind::Lip, g, 12) {
            Ok((_, r)) => {
                ok += usize::from(r.all_ok && r.destabilization_ok);
                builds.push(json!(r));
            }
            Err(e) => builds.push(json!(e)),
        }
    }
    pass &= ok == gammas.len();
    Outcome {
        pass,
        detail: format!(
            "srg={} srg1={s1:.3e} srg1p={s1p:.3e} srg2={s2:.3e} lip builds ok {ok}/{}",
            srg.reported,
            gammas.len()
        ),
        digest: json!([srg, c, builds]),
    }
}

/// `x_k` lies within 5% of some `1/(kπ)`.
fn near_pi_reciprocal(x: f64) -> bool {
    let k = (1.0 / (std::f64::consts::PI * x.abs())).round();
    k >= 1.0 && (x.abs() * k * std::f64::consts::PI - 1.0).abs() <= 0.05
}

fn criterion_3() -> Outcome {
    let xs = map(MapSpec::Xsin);
    let base = origin(1, 1);
    let c = constants(xs.as_ref(), &base, &ladder(9));
    let (s4, s4p, s2) =
        (c[&ConstantKind::Srg4].reported, c[&ConstantKind::Srg4p].reported, c[&ConstantKind::Srg2].reported);
    let w2 = &c[&ConstantKind::Srg2].witnesses;
    let deep: Vec<&f64> = w2.iter().rev().take(3).map(|w| &w.x[0]).collect();
    let witnesses_ok = !deep.is_empty() && deep.iter().all(|x| near_pi_reciprocal(**x));
    let build = build_and_verify(&xs, &base, WitnessKind::Fclm, 0.1, 12);
    let build_ok = build.as_ref().is_ok_and(|(_, r)| r.all_ok);
    let pass = near(s4, 1.0, 0.05) && near(s4p, 1.0, 0.05) && s2 <= 0.02 && witnesses_ok && build_ok;
    Outcome {
        pass,
        detail: format!(
            "srg4={s4:.4} srg4p={s4p:.4} srg2={s2:.3e} witnesses {:?} fclm(0.1) ok={build_ok}",
            deep.iter().map(|x| format!("{x:.3e}")).collect::<Vec<_>>()
        ),
        digest: json!([c, build.map(|b| b.1)]),
    }
}

fn criterion_4() -> Outcome {
    let iv = map(MapSpec::Interval);
    let (base, l) = (origin(1, 1), ladder(12));
    let c = constants(iv.as_ref(), &base, &l);
    let s2 = c[&ConstantKind::Srg2].reported;
    let ssrg = estimate_ssrg(iv.as_ref(), &base, &l, NormKind::L1);
    let recips = ssrg.witnesses.iter().filter(|w| w.value == 0.0 && IntervalMap::is_reciprocal(w.x[0], 1e-9)).count();
    let pass = near(s2, 1.0, 0.02) && ssrg.reported == 0.0 && recips >= 3;
    Outcome {
        pass,
        detail: format!("srg2={s2:.4} ssrg={} reciprocal witnesses={recips}", ssrg.reported),
        digest: json!([c, ssrg]),
    }
}

fn criterion_5() -> Outcome {
    let mut failures = Vec::new();
    let mut digest = Vec::new();
    for e in catalog() {
        // The finest xsin annuli are below the float resolution of its
        // oscillation; depth 9 stays above it.
        let depth = if e.id == "xsin" { 9 } else { 12 };
        let c = constants(e.map().as_ref(), &e.base, &ladder(depth));
        match check_relations(&c) {
            Ok(r) => {
                failures.extend(r.checks.iter().filter(|k| !k.holds).map(|k| format!("{}: {}", e.id, k.label)));
                digest.push(json!(r));
            }
            Err(err) => failures.push(format!("{}: {err}", e.id)),
        }
    }
    let n = digest.len();
    Outcome {
        pass: failures.is_empty(),
        detail: if failures.is_empty() { format!("{n} catalog entries") } else { failures.join("; ") },
        digest: Value::Array(digest),
    }
}

fn criterion_6() -> Outcome {
    let square = map(MapSpec::Square);
    let xsin = map(MapSpec::Xsin);
    let zero = map(MapSpec::Zero { dim_x: None, dim_y: None });
    let id = map(MapSpec::Identity { dim: None });
    let cases: Vec<(&str, &Arc<dyn SetValuedMap>, WitnessKind, f64, usize)> = vec![
        ("square", &square, WitnessKind::Lip, 0.5, 12),
        ("square", &square, WitnessKind::Fclm, 0.5, 12),
        ("square", &square, WitnessKind::Ss, 0.5, 12),
        ("xsin", &xsin, WitnessKind::Fclm, 0.1, 12),
        ("xsin", &xsin, WitnessKind::Ss, 1.1, 9),
        ("zero", &zero, WitnessKind::Lip, 0.5, 12),
        ("zero", &zero, WitnessKind::Fclm, 0.5, 12),
        ("identity", &id, WitnessKind::Lip, 2.51, 14),
        ("identity", &id, WitnessKind::Fclm, 1.26, 14),
        ("identity", &id, WitnessKind::Ss, 1.5, 12),
    ];
    let mut failures = Vec::new();
    let mut digest = Vec::new();
    let mut worst_interp = 0.0f64;
    let mut worst_grad = 0.0f64;
    let mut worst_hom = 0.0f64;
    let mut cones = 0;
    for (name, f, kind, gamma, depth) in cases {
        match build_and_verify(f, &origin(1, 1), kind, gamma, depth) {
            Ok((p, r)) => {
                worst_interp = worst_interp.max(r.interpolation_max_err);
                if r.gradient_checked && matches!(kind, WitnessKind::Lip | WitnessKind::Fclm) {
                    worst_grad = worst_grad.max(r.gradient_max_relerr);
                }
                if let Shape::Cones { .. } = p.shape {
                    cones += 1;
                    worst_hom = worst_hom.max(r.homogeneity_relerr.unwrap_or(f64::INFINITY));
                }
                if !r.all_ok {
                    failures.push(format!("{name} {kind:?} {gamma}"));
                }
                digest.push(json!(r));
            }
            Err(e) => failures.push(format!("{name} {kind:?} {gamma}: {e}")),
        }
    }
    // Case-1 cones in two dimensions, from the paraboloid and a spiral.
    let par_map = map(MapSpec::Paraboloid);
    match build_and_verify(&par_map, &origin(2, 1), WitnessKind::Ss, 0.5, 12) {
        Ok((_, r)) => {
            cones += 1;
            worst_hom = worst_hom.max(r.homogeneity_relerr.unwrap_or(f64::INFINITY));
            if !r.all_ok {
                failures.push("paraboloid Ss".into());
            }
            digest.push(json!(r));
        }
        Err(e) => failures.push(format!("paraboloid Ss: {e}")),
    }
    let lin = map(MapSpec::Linear { a: vec![vec![0.3, -0.2]] });
    let w = spiral_witness([0.3, -0.2], 6, 0.5, NormKind::L1);
    match build_ss_perturbation(&w, 0.5) {
        Ok(p) => {
            let r = verify_builder(&p, lin, &ladder(10));
            cones += 1;
            worst_hom = worst_hom.max(r.homogeneity_relerr.unwrap_or(f64::INFINITY));
            if !r.all_ok {
                failures.push("spiral Ss".into());
            }
            digest.push(json!(r));
        }
        Err(e) => failures.push(format!("spiral Ss: {e}")),
    }
    let pass = failures.is_empty() && worst_grad <= 1e-5 && worst_hom <= 1e-12 && cones >= 2;
    Outcome {
        pass,
        detail: format!(
            "builds={} interp={worst_interp:.1e} grad={worst_grad:.1e} homogeneity={worst_hom:.1e} ({cones} case-1) {}",
            digest.len(),
            failures.join("; ")
        ),
        digest: Value::Array(digest),
    }
}

fn criterion_7() -> Outcome {
    let id = map(MapSpec::Identity { dim: None });
    let base = origin(1, 1);
    let l = ladder(20);
    let mut detail = Vec::new();
    let mut digest = Vec::new();
    let mut pass = true;
    for g in [1.05, 1.2] {
        match build_ssr_destabilizer(id.as_ref(), &base, g, &l, NormKind::L1) {
            Ok(p) => {
                let r = verify_builder(&p, id.clone(), &l);
                let ok = r.all_ok && r.modulus_estimate < g && r.ssrg_at_witnesses == 0.0;
                pass &= ok;
                detail.push(format!("γ={g} clm={:.4} ssrg@w={}", r.modulus_estimate, r.ssrg_at_witnesses));
                digest.push(json!(r));
            }
            Err(e) => {
                pass = false;
                detail.push(format!("γ={g} failed: {e}"));
            }
        }
    }
    for g in [0.5, 0.9] {
        let refused = build_ssr_destabilizer(id.as_ref(), &base, g, &l, NormKind::L1);
        pass &= refused.is_err();
        detail.push(format!("γ={g} refused={}", refused.is_err()));
        digest.push(json!(refused.err().map(|e| e.to_string())));
    }
    let stab = ladder(12);
    let mut min_ssrg = f64::INFINITY;
    let mut stable = 0;
    for seed in 0..20u64 {
        let f = RandomCalm::draw(1, 0.95, seed, NormKind::L1);
        let clm = estimate_clm(&f, &[0.0], &stab, NormKind::L1).reported;
        let sum = sum_with_function(id.clone(), Arc::new(f)).expect("dimensions agree");
        let s = estimate_ssrg(&sum, &base, &stab, NormKind::L1).reported;
        min_ssrg = min_ssrg.min(s);
        stable += usize::from(clm < 0.9 && s >= 0.05);
        digest.push(json!([clm, s]));
    }
    pass &= stable == 20;
    detail.push(format!("random calm stable {stable}/20 min ssrg={min_ssrg:.4}"));
    Outcome { pass, detail: detail.join(" "), digest: Value::Array(digest) }
}

/// Largest semismooth* quotient over a dense grid of graph points of `f` in
/// each annulus, with the normal taken from a central difference. Independent
/// of the library's element clouds.
fn brute_force_ss_quotients(f: impl Fn(f64) -> f64, depth: usize) -> Vec<f64> {
    let l = ladder(depth);
    (0..depth)
        .map(|j| {
            let (lo, hi) = (l.radius(j + 1), l.radius(j));
            (0..20_000)
                .map(|i| {
                    let x: f64 = lo + (hi - lo) * (i as f64 + 0.5) / 20_000.0;
                    let h = 1e-7 * x;
                    let d = (f(x + h) - f(x - h)) / (2.0 * h);
                    let y = f(x);
                    (d * x - y).abs() / ((d * d + 1.0).sqrt() * (x * x + y * y).sqrt())
                })
                .fold(0.0, f64::max)
        })
        .collect()
}

fn criterion_8() -> Outcome {
    let mut detail = Vec::new();
    let mut digest = Vec::new();
    let mut pass = true;
    let l = ladder(12);
    for e in catalog().into_iter().filter(|e| ["compl_angle", "abs", "square"].contains(&e.id.as_str())) {
        let r = semismooth_star_test(e.map().as_ref(), &e.base, &l, NormKind::L2);
        pass &= r.verdict == Verdict::Pass;
        detail.push(format!("{}={:?}", e.id, r.verdict));
        digest.push(json!(r));
    }
    let cases: Vec<(Arc<dyn SetValuedMap>, GraphPoint)> = vec![
        (map(MapSpec::Square), origin(1, 1)),
        (map(MapSpec::Identity { dim: None }), origin(1, 1)),
        (map(MapSpec::Paraboloid), origin(2, 1)),
    ];
    let mut case1 = 0;
    for (f, base) in &cases {
        if let Ok((_, r)) = build_and_verify(f, base, WitnessKind::Ss, 1.5, 12) {
            pass &= r.semismooth_verdict == Some(Verdict::Pass);
            case1 += 1;
            digest.push(json!(r.semismooth_verdict));
        } else {
            pass = false;
        }
    }
    detail.push(format!("case-1 builds pass={case1}/{}", cases.len()));
    // Oscillating counterexamples: the brute-force quotient must stay large
    // at the finest scales before the library verdict counts.
    let xsin = |x: f64| x * (1.0 / x).sin();
    let logsin = |x: f64| x * x.ln().sin();
    for (name, spec, bf) in [
        ("logsin", MapSpec::Logsin, brute_force_ss_quotients(logsin, 12)),
        ("xsin", MapSpec::Xsin, brute_force_ss_quotients(xsin, 9)),
    ] {
        let depth = bf.len();
        let oracle_fails = bf[depth - 3..].iter().all(|q| *q >= 5.0 * SS_THRESHOLD);
        let r = semismooth_star_test(map(spec).as_ref(), &origin(1, 1), &ladder(depth), NormKind::L2);
        pass &= oracle_fails && r.verdict == Verdict::Fail;
        detail.push(format!(
            "{name}: oracle min tail {:.3} verdict {:?}",
            bf[depth - 3..].iter().fold(1.0f64, |a, b| a.min(*b)),
            r.verdict
        ));
        digest.push(json!([bf, r]));
    }
    Outcome { pass, detail: detail.join(" "), digest: Value::Array(digest) }
}

fn criterion_9() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let l = ScaleLadder { depth: 6, samples_per_scale: 500, ..Default::default() };
    let mut rows = Vec::new();
    while rows.len() < 50 {
        let a = DMatrix::<f64>::from_fn(3, 3, |_, _| rng.random_range(-1.0..1.0));
        if a.determinant().abs() > 1e-3 {
            rows.push(eckart_young_check(&a, &l).expect("nonsingular"));
        }
    }
    let gap = rows.iter().map(|r| (r.b_norm - r.radius).abs()).fold(0.0, f64::max);
    let det = rows.iter().map(|r| r.det_a_plus_b.abs()).fold(0.0, f64::max);
    let rel = rows.iter().map(|r| r.rg_relerr).fold(0.0, f64::max);
    Outcome {
        pass: gap <= 1e-10 && det <= 1e-10 && rel <= 0.05,
        detail: format!("50 matrices: gap={gap:.1e} det={det:.1e} rg relerr={rel:.1e}"),
        digest: json!(rows),
    }
}

const CRITERIA: [(&str, fn() -> Outcome); 9] = [
    ("identity map values", criterion_1),
    ("zero map values and lip builds", criterion_2),
    ("x sin(1/x) constants and fclm build", criterion_3),
    ("interval map constants", criterion_4),
    ("relation chains on the catalog", criterion_5),
    ("builder guarantees", criterion_6),
    ("strong subregularity radius equality", criterion_7),
    ("semismooth* suite", criterion_8),
    ("Eckart-Young", criterion_9),
];

fn main() -> std::process::ExitCode {
    let mut lines = Vec::new();
    let mut digests = Vec::new();
    for (i, (name, run)) in CRITERIA.iter().enumerate() {
        let started = std::time::Instant::now();
        let o = run();
        let verdict = if o.pass { "PASS" } else { "FAIL" };
        let line = format!("{verdict} {} {name} ({:.1}s): {}", i + 1, started.elapsed().as_secs_f64(), o.detail);
        println!("{line}");
        lines.push((o.pass, line));
        digests.push(serde_json::to_string(&o.digest).expect("digest serializes"));
    }
    // The repeat runs on the sequential path, so it also checks that the
    // parallel reductions do not depend on scheduling.
    let repeat: Vec<String> = par::sequential(|| {
        CRITERIA.iter().map(|(_, run)| serde_json::to_string(&run().digest).expect("digest serializes")).collect()
    });
    let differing: Vec<usize> = (0..digests.len()).filter(|&i| digests[i] != repeat[i]).map(|i| i + 1).collect();
    let same = differing.is_empty();
    let line = format!(
        "{} 10 determinism: {}",
        if same { "PASS" } else { "FAIL" },
        if same {
            "criteria 1-9 bitwise identical on rerun".to_string()
        } else {
            format!("criteria {differing:?} differ")
        }
    );
    println!("{line}");
    lines.push((same, line));
    let failed = lines.iter().filter(|l| !l.0).count();
    println!("acceptance: {} of {} criteria passed", lines.len() - failed, lines.len());
    if failed == 0 {
        std::process::ExitCode::SUCCESS
    } else {
        std::process::ExitCode::FAILURE
    }
}
