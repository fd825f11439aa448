use std::sync::Arc;

use proptest::prelude::*;

use subreg::geometry::{dot, norming_functional, sample_annulus, NormKind, ScaleLadder};
use subreg::mappings::{build_map, Evaluable, GraphPoint, MapSpec, SetValuedMap};
use subreg::moduli::{all_constants, check_relations, Estimate};
use subreg::par;
use subreg::perturb::{
    build_perturbation, build_ss_perturbation, extract_witness, spiral_witness, RandomCalm, WitnessKind,
};
use subreg::radius_cli::ExperimentConfig;
use subreg::variational::ElementCloud;

fn norm_kind() -> impl Strategy<Value = NormKind> {
    prop_oneof![Just(NormKind::L1), Just(NormKind::L2), Just(NormKind::Linf)]
}

fn nonzero_vec(n: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-10.0f64..10.0, n).prop_filter("nonzero", |v| v.iter().any(|a| a.abs() > 1e-6))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn norming_functional_is_dual_unit_and_attains(v in nonzero_vec(3), kind in norm_kind()) {
        let s = norming_functional(&v, kind).unwrap();
        prop_assert!((kind.dual().eval(&s) - 1.0).abs() <= 1e-12);
        prop_assert!((dot(&s, &v) - kind.eval(&v)).abs() <= 1e-12 * kind.eval(&v).max(1.0));
    }

    #[test]
    fn annulus_samples_stay_in_the_annulus(
        r_in in 1e-6f64..0.5, width in 1.01f64..4.0, seed in any::<u64>(), kind in norm_kind(), dim in 1usize..4,
    ) {
        let center = vec![0.25; dim];
        let r_out = r_in * width;
        let pts = sample_annulus(&center, r_in, r_out, 64, seed, kind).unwrap();
        prop_assert_eq!(pts.len(), 64);
        for p in pts {
            let d = kind.dist(&p, &center);
            prop_assert!(d > r_in && d <= r_out * (1.0 + 1e-12));
        }
    }

    #[test]
    fn ladder_levels_invert_radii(theta in 0.1f64..0.9, depth in 1usize..30, u in 0.0f64..1.0) {
        let l = ScaleLadder { theta, depth, ..Default::default() };
        prop_assert!(l.radii().windows(2).all(|w| w[1] < w[0]));
        let j = ((depth as f64) * u) as usize % depth;
        let t = l.radius(j + 1) + (l.radius(j) - l.radius(j + 1)) * 0.5;
        prop_assert_eq!(l.level_of(t), Some(j));
    }

    #[test]
    fn parallel_and_sequential_maps_agree(n in 0usize..500, k in 1u64..1000) {
        let f = |i: usize| ((i as f64) * k as f64).sin();
        let a = par::map_indexed(n, f);
        let b = par::sequential(|| par::map_indexed(n, f));
        prop_assert_eq!(a.iter().map(|v| v.to_bits()).collect::<Vec<_>>(), b.iter().map(|v| v.to_bits()).collect::<Vec<_>>());
    }

    #[test]
    fn random_calm_draws_respect_their_bound(seed in any::<u64>(), bound in 0.01f64..3.0, dim in 1usize..4) {
        let f = RandomCalm::draw(dim, bound, seed, NormKind::L1);
        prop_assert!(f.calm_bound() <= 0.9 * bound * (1.0 + 1e-12));
        prop_assert_eq!(f.eval(&vec![0.0; dim]), vec![0.0; dim]);
    }

    #[test]
    fn estimates_round_trip_with_infinities(vals in prop::collection::vec(prop_oneof![Just(f64::INFINITY), 0.0f64..5.0], 1..8)) {
        let per: Vec<(f64, f64)> = vals.iter().enumerate().map(|(j, v)| (0.25f64.powi(j as i32), *v)).collect();
        let e = Estimate::new("srg", per, "test");
        let back: Estimate = serde_json::from_str(&serde_json::to_string(&e).unwrap()).unwrap();
        prop_assert_eq!(back, e);
    }

    #[test]
    fn configs_round_trip(seed in any::<u64>(), depth in 1usize..20, kind in norm_kind()) {
        let norm = serde_json::to_value(kind).unwrap();
        let text = format!(
            "seed = {seed}\ntask = \"constants\"\nnorm = {norm}\n[map]\nid = \"square\"\n[ladder]\ndepth = {depth}\n"
        );
        let cfg = ExperimentConfig::from_toml(&text).unwrap();
        let again = ExperimentConfig::from_toml(&toml::to_string(&cfg).unwrap()).unwrap();
        prop_assert_eq!(cfg.hash(), again.hash());
        prop_assert_eq!(cfg, again);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    /// Relations between the primal-dual constants hold at every scale on
    /// one shared element cloud.
    #[test]
    fn constant_relations_hold_for_linear_maps(a in -3.0f64..3.0, b in -3.0f64..3.0, seed in 0u64..100) {
        prop_assume!(a.abs() + b.abs() > 0.05);
        let f = build_map(&MapSpec::Linear { a: vec![vec![a, b]] }).unwrap();
        let l = ScaleLadder { depth: 6, samples_per_scale: 300, seed, ..Default::default() };
        let base = GraphPoint::new(vec![0.0, 0.0], vec![0.0]);
        let c = all_constants(&ElementCloud::build(f.as_ref(), &base, &l, NormKind::L1));
        let r = check_relations(&c).unwrap();
        prop_assert!(r.all_hold, "{:?}", r.checks.iter().filter(|c| !c.holds).collect::<Vec<_>>());
    }

    /// Built perturbations interpolate at the witnesses and never have two
    /// bumps active at the same point.
    #[test]
    fn built_bumps_are_disjoint_and_interpolate(
        gamma in 0.05f64..2.0,
        spec in prop_oneof![Just(MapSpec::Square), Just(MapSpec::Zero { dim_x: None, dim_y: None }), Just(MapSpec::Abs)],
        kind in prop_oneof![Just(WitnessKind::Lip), Just(WitnessKind::Fclm)],
        probes in prop::collection::vec(-1.0f64..1.0, 200),
    ) {
        let f: Arc<dyn SetValuedMap> = build_map(&spec).unwrap();
        let base = GraphPoint::new(vec![0.0], vec![0.0]);
        let l = ScaleLadder { depth: 10, ..Default::default() };
        let w = extract_witness(f.as_ref(), &base, kind, gamma, &l, NormKind::L1);
        prop_assume!(w.is_ok());
        let w = w.unwrap();
        let p = build_perturbation(&w, gamma).unwrap();
        for e in &w.entries {
            let v = p.eval(&e.x);
            prop_assert!((v[0] + e.y[0]).abs() <= 64.0 * f64::EPSILON * e.y[0].abs().max(e.t));
            prop_assert_eq!(p.supporting_bumps(&e.x).len(), 1);
        }
        for x in probes {
            let x = [x * x.abs()];
            let s = p.supporting_bumps(&x);
            prop_assert!(s.len() <= 1);
            prop_assert_eq!(p.active_bump(&x), s.first().copied());
        }
    }

    /// Cone-shaped perturbations are positively homogeneous.
    #[test]
    fn cone_perturbations_are_homogeneous(
        a in -1.0f64..1.0, b in -1.0f64..1.0, lambda in 0.01f64..100.0,
        x in prop::collection::vec(-1.0f64..1.0, 2),
    ) {
        prop_assume!(a.abs() + b.abs() > 0.05);
        let w = spiral_witness([a, b], 6, 0.5, NormKind::L1);
        let p = build_ss_perturbation(&w, 1.25 * (a.abs() + b.abs()) + 0.1).unwrap();
        let fx = p.eval(&x);
        let flx = p.eval(&[lambda * x[0], lambda * x[1]]);
        prop_assert!((flx[0] - lambda * fx[0]).abs() <= 1e-12 * (lambda * fx[0].abs()).max(1e-300) + 1e-300);
    }
}
