//! Sequential versus parallel execution on the two hot loops: simulating a
//! calibration sample and evaluating a statistic over a grid of nulls.
//!
//! Build with `--no-default-features` to get the sequential-only fallback;
//! both modes then run the same code path.

use std::sync::Arc;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use lf2i::calibration::{mc_statistics, simulate_calibration_sample};
use lf2i::exec::Execution;
use lf2i::odds::{OddsModel, OracleOdds};
use lf2i::rng::SeedStream;
use lf2i::simulators::{GaussianMixture1d, Proposal, Reference, Simulator};
use lf2i::space::Grid;
use lf2i::statistics::Acore;

const MODES: [(&str, Execution); 2] = [("sequential", Execution::Sequential), ("parallel", Execution::Parallel)];

fn setup() -> (Arc<dyn Simulator>, Proposal, Acore) {
    let sim: Arc<dyn Simulator> = Arc::new(GaussianMixture1d::new(0.5, 0.0, 5.0).unwrap());
    let prop = Proposal::uniform(sim.space());
    let odds: Arc<dyn OddsModel> = Arc::new(OracleOdds::new(sim.clone(), prop.clone(), Reference::Marginal, 0.5).unwrap());
    let stat = Acore::new(odds, Grid::lattice(&[0.0], &[5.0], 201)).unwrap();
    (sim, prop, stat)
}

fn calibration_sample(c: &mut Criterion) {
    let (sim, prop, stat) = setup();
    let mut group = c.benchmark_group("calibration_sample");
    group.sample_size(10);
    for (name, exec) in MODES {
        group.bench_with_input(BenchmarkId::new(name, 2000), &exec, |b, exec| {
            b.iter(|| simulate_calibration_sample(sim.as_ref(), &prop, &stat, 2000, 10, SeedStream::new(1), *exec).unwrap())
        });
    }
    group.finish();
}

fn grid_statistics(c: &mut Criterion) {
    let (sim, _, stat) = setup();
    let grid = Grid::lattice(&[0.0], &[5.0], 51);
    let mut group = c.benchmark_group("grid_statistics");
    group.sample_size(10);
    for (name, exec) in MODES {
        group.bench_with_input(BenchmarkId::new(name, "51x100"), &exec, |b, exec| {
            b.iter(|| mc_statistics(sim.as_ref(), &grid, &stat, 100, 10, SeedStream::new(2), *exec).unwrap())
        });
    }
    group.finish();
}

criterion_group!(benches, calibration_sample, grid_statistics);
criterion_main!(benches);
