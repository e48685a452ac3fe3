use std::hint::black_box;

use criterion::{criterion_group, criterion_main, Criterion};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use lgcp_core::domain::count_points;
use lgcp_core::latent::{elliptical_slice_step, EssState, FieldFactor, GridModel};
use lgcp_core::moments::moments_to_mpln;
use lgcp_core::pm::{laplace_fit, log_marginal_estimate};
use lgcp_core::simulate::{simulate_lgcp, LgcpModel};
use lgcp_core::{
    BlockPartition, Covariate, CoxMomentCalculator, Domain, ExponentialKernel, FieldParams, Params, PointPattern,
};

fn setup(coarse: usize, fine: usize) -> (LgcpModel, PointPattern, BlockPartition) {
    let model = LgcpModel {
        covariates: vec![Covariate::AbsOffsetX(0.3), Covariate::AbsOffsetY(0.3)],
        params: Params {
            beta: vec![vec![6.0, 3.0, 3.0]],
            field: FieldParams::Exponential(ExponentialKernel::new(1.0, 1.0).unwrap()),
        },
    };
    let (pattern, _) = simulate_lgcp(&model, &Domain::unit_square(), (40, 40), 1).unwrap();
    let partition = BlockPartition::build(&Domain::unit_square(), (coarse, coarse), (fine, fine)).unwrap();
    (model, pattern, partition)
}

fn kernels(c: &mut Criterion) {
    let (model, pattern, partition) = setup(10, 2);
    let calc = CoxMomentCalculator::new(&partition, &model.covariates).unwrap();
    let counts = count_points(&pattern, &partition).as_f64();
    let counts = nalgebra::DVector::from_vec(counts);

    c.bench_function("cox_moments_M100_NB4", |b| b.iter(|| calc.compute(black_box(&model.params))));

    let mpln = moments_to_mpln(&calc.compute(&model.params)).unwrap();
    c.bench_function("laplace_fit_M100", |b| b.iter(|| laplace_fit(black_box(&counts), &mpln).unwrap()));

    let q = laplace_fit(&counts, &mpln).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    c.bench_function("estimator_M100_Nimp1000", |b| {
        b.iter(|| log_marginal_estimate(&counts, &mpln, &q, 1000, &mut rng))
    });

    let grid = GridModel::new(&partition, &model.covariates, &pattern).unwrap();
    let factor = FieldFactor::new(&model.params.field, &grid.points, 1).unwrap();
    let eta = grid.linear_predictor(&model.params);
    let loglik = |z: &nalgebra::DVector<f64>| grid.loglik(&eta, z.as_slice());
    let map = |v: &nalgebra::DVector<f64>| factor.apply(v);
    let nu = nalgebra::DVector::zeros(grid.n_cells());
    let mut state = EssState { z: map(&nu), loglik: loglik(&map(&nu)), nu };
    c.bench_function("ess_step_K400", |b| {
        b.iter(|| {
            state = elliptical_slice_step(&state, &map, &loglik, &mut rng);
        })
    });
}

criterion_group! {
    name = benches;
    config = Criterion::default().sample_size(20);
    targets = kernels
}
criterion_main!(benches);
