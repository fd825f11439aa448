use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};

use subreg::geometry::{NormKind, ScaleLadder};
use subreg::mappings::{build_map, GraphPoint, MapSpec};
use subreg::moduli::{all_constants, estimate_srg};
use subreg::par;
use subreg::variational::ElementCloud;

fn bench(c: &mut Criterion) {
    let ladder = ScaleLadder { depth: 10, samples_per_scale: 1000, ..Default::default() };
    let maps = [
        ("xsin", MapSpec::Xsin, GraphPoint::new(vec![0.0], vec![0.0])),
        ("paraboloid", MapSpec::Paraboloid, GraphPoint::new(vec![0.0, 0.0], vec![0.0])),
    ];
    let mut g = c.benchmark_group("element_cloud");
    g.sample_size(10);
    for (name, spec, base) in &maps {
        let f = build_map(spec).unwrap();
        g.bench_with_input(BenchmarkId::new("parallel", name), &(), |b, _| {
            b.iter(|| all_constants(&ElementCloud::build(f.as_ref(), base, &ladder, NormKind::L1)))
        });
        g.bench_with_input(BenchmarkId::new("sequential", name), &(), |b, _| {
            b.iter(|| par::sequential(|| all_constants(&ElementCloud::build(f.as_ref(), base, &ladder, NormKind::L1))))
        });
    }
    g.finish();

    let mut g = c.benchmark_group("srg");
    g.sample_size(10);
    let f = build_map(&MapSpec::Interval).unwrap();
    let base = GraphPoint::new(vec![0.0], vec![0.0]);
    g.bench_function("parallel", |b| b.iter(|| estimate_srg(f.as_ref(), &base, &ladder, NormKind::L1)));
    g.bench_function("sequential", |b| {
        b.iter(|| par::sequential(|| estimate_srg(f.as_ref(), &base, &ladder, NormKind::L1)))
    });
    g.finish();
}

criterion_group!(benches, bench);
criterion_main!(benches);
