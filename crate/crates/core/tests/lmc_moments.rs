//! Multivariate Cox moments against an independent Monte Carlo: three
//! factor fields simulated on a finer grid, mixed by Γ, then Poisson counts
//! per block and component.

use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson, StandardNormal};

use lgcp_core::covariance::{cholesky, cov_matrix};
use lgcp_core::{BlockPartition, CoxMomentCalculator, Domain, ExponentialKernel, FieldParams, LmcSpec, Params};

#[test]
fn lmc_moments_match_simulated_counts() {
    let beta0 = 3.0;
    let gamma = [0.8, 0.0, 0.0, -0.5, 0.6, 0.0, 0.5, 0.0, 0.6];
    let phis = [3.0, 5.0, 5.0];
    let partition = BlockPartition::build(&Domain::unit_square(), (2, 2), (8, 8)).unwrap();
    let params = Params {
        beta: vec![vec![beta0]],
        field: FieldParams::Lmc(LmcSpec::new(gamma.to_vec(), 3, 3, phis.to_vec()).unwrap()),
    };
    let m = CoxMomentCalculator::new(&partition, &[]).unwrap().compute(&params);
    let n_blocks = partition.n_blocks();
    let dim = 3 * n_blocks;

    let g = 32;
    let h = 1.0 / g as f64;
    let pts: Vec<[f64; 2]> = (0..g * g).map(|k| [((k % g) as f64 + 0.5) * h, ((k / g) as f64 + 0.5) * h]).collect();
    let block: Vec<usize> = pts.iter().map(|p| partition.block_of(p[0], p[1]).unwrap()).collect();
    let chols: Vec<_> = phis
        .iter()
        .map(|&phi| cholesky(&cov_matrix(&ExponentialKernel::new(1.0, phi).unwrap(), &pts)).unwrap())
        .collect();

    let mut rng = ChaCha8Rng::seed_from_u64(31);
    let reps = 10_000;
    let samples: Vec<Vec<f64>> = (0..reps)
        .map(|_| {
            let u: Vec<DVector<f64>> = chols
                .iter()
                .map(|c| c.mul(&DVector::from_fn(g * g, |_, _| rng.sample::<f64, _>(StandardNormal))))
                .collect();
            let mut mass = vec![0.0; dim];
            for k in 0..g * g {
                for l in 0..3 {
                    let z: f64 = (0..3).map(|f| gamma[l * 3 + f] * u[f][k]).sum();
                    mass[l * n_blocks + block[k]] += (beta0 + z).exp() * h * h;
                }
            }
            mass.iter().map(|&lam| Poisson::new(lam).unwrap().sample(&mut rng)).collect()
        })
        .collect();

    let n = reps as f64;
    let mean: Vec<f64> = (0..dim).map(|a| samples.iter().map(|s| s[a]).sum::<f64>() / n).collect();
    let mut worst: f64 = 0.0;
    for a in 0..dim {
        let var = samples.iter().map(|s| (s[a] - mean[a]).powi(2)).sum::<f64>() / (n - 1.0);
        worst = worst.max(((mean[a] - m.alpha[a]) / (var / n).sqrt()).abs());
        for b in a..dim {
            let prods: Vec<f64> = samples.iter().map(|s| (s[a] - mean[a]) * (s[b] - mean[b])).collect();
            let c = prods.iter().sum::<f64>() / (n - 1.0);
            let se = (prods.iter().map(|p| (p - c).powi(2)).sum::<f64>() / (n - 1.0) / n).sqrt();
            let z = (c - m.beta[(a, b)]) / se;
            assert!(z.abs() < 4.0, "beta[{a},{b}] {:.3} vs simulated {c:.3} (z {z:.2})", m.beta[(a, b)]);
        }
    }
    assert!(worst < 4.0, "worst alpha z {worst:.2}");
}
