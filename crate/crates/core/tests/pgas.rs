use std::collections::HashMap;
use std::sync::Arc;

use factor_smc::experiments::stats::integrated_autocorr_time;
use factor_smc::models::gmrf::tree_sampler_kernels;
use factor_smc::models::{two_chain_blocks, AdaptedGaussianProposal, GMRFModel, IsingModel};
use factor_smc::pmcmc::{
    ancestor_log_weights, compute_dependency_sets, partial_blocking_gibbs, pgas_kernel, BlockKernel,
    BlockPartition, PgasBlock, PgasKernel, Scan, SiteGibbs,
};
use factor_smc::rng::RngStreams;
use factor_smc::smc::{Proposal, UniformProposal};
use factor_smc::{Decomposition, Domain, FactorGraph, OrderingStrategy, Potential};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use statrs::distribution::{ChiSquared, ContinuousCDF};

fn binary(n: usize) -> FactorGraph {
    FactorGraph::new(vec![Domain::Discrete { cardinality: 2 }; n]).unwrap()
}

fn table(v: &[f64]) -> Potential {
    Potential::Table { log_values: v.to_vec() }
}

fn uniform() -> Arc<dyn Proposal> {
    Arc::new(UniformProposal)
}

#[test]
fn dependency_sets_on_chain_and_lattice() {
    // chain x0 - x1 - ... - x5, one pair factor per step
    let mut g = binary(6);
    for i in 0..5 {
        g.add_factor(vec![i, i + 1], table(&[0.2, -0.2, -0.2, 0.2])).unwrap();
    }
    let d = Decomposition::from_factor_groups(Arc::new(g), (0..5).map(|f| vec![f]).collect()).unwrap();
    let deps = compute_dependency_sets(&d);
    assert_eq!(deps.len(), 4);
    for k in 2..=5 {
        assert_eq!(deps.get(k), &[k]);
    }
    assert!(deps.get(1).is_empty());

    let mut g = binary(2);
    g.add_factor(vec![0, 1], table(&[0.0; 4])).unwrap();
    let d = Decomposition::from_factor_groups(Arc::new(g), vec![vec![0]]).unwrap();
    assert!(compute_dependency_sets(&d).is_empty());

    let g = Arc::new(IsingModel::random(10, 10, 1.0, 0.5, 1).unwrap().graph().unwrap());
    let d = Decomposition::build(g, &OrderingStrategy::LeftRight).unwrap();
    assert_eq!(compute_dependency_sets(&d).max_len(), 10);
}

#[test]
fn ancestor_weights_without_coupling() {
    // two independent variables: A_2 is empty and only w_1 matters
    let mut g = binary(2);
    g.add_factor(vec![0], table(&[0.4, -0.1])).unwrap();
    g.add_factor(vec![1], table(&[1.0, 0.0])).unwrap();
    let d = Decomposition::from_factor_groups(Arc::new(g), vec![vec![0], vec![1]]).unwrap();
    let deps = compute_dependency_sets(&d);
    assert!(deps.get(2).is_empty());
    let particles = [0.0, f64::NAN, 1.0, f64::NAN, 1.0, f64::NAN];
    let prev = [-0.3, 0.5, 0.1];
    let reference = [1.0, 0.0];
    let lw = ancestor_log_weights(&d, 2, &particles, 2, &prev, &reference, &deps);
    let shift = lw[0] - prev[0];
    for i in 0..3 {
        assert!((lw[i] - prev[i] - shift).abs() < 1e-12);
    }

    // identical histories give identical ancestor weights
    let mut g = binary(3);
    g.add_factor(vec![0, 1], table(&[0.3, -0.3, 0.1, 0.9])).unwrap();
    g.add_factor(vec![1, 2], table(&[0.5, 0.0, -0.5, 0.2])).unwrap();
    let d = Decomposition::from_factor_groups(Arc::new(g), vec![vec![0], vec![1]]).unwrap();
    let deps = compute_dependency_sets(&d);
    let particles = [1.0, 0.0, f64::NAN, 1.0, 0.0, f64::NAN];
    let lw = ancestor_log_weights(&d, 2, &particles, 3, &[0.2, 0.2], &[0.0, 1.0, 1.0], &deps);
    assert!((lw[0] - lw[1]).abs() < 1e-15);
}

/// x0 - x1 with unary fields, added in two steps.
fn two_step_model() -> (Decomposition, [f64; 2], [f64; 4], [f64; 2]) {
    let psi0 = [0.0, 0.9];
    let psi01 = [0.6, -0.6, -0.2, 0.4];
    let psi1 = [-0.3, 0.5];
    let mut g = binary(2);
    g.add_factor(vec![0], table(&psi0)).unwrap();
    g.add_factor(vec![0, 1], table(&psi01)).unwrap();
    g.add_factor(vec![1], table(&psi1)).unwrap();
    let d = Decomposition::from_factor_groups(Arc::new(g), vec![vec![0], vec![1, 2]]).unwrap();
    (d, psi0, psi01, psi1)
}

/// Transition matrix of PGAS with N = 2, uniform proposals and multinomial
/// resampling at every step, by enumerating every random choice.
fn enumerated_transitions(psi0: &[f64; 2], psi01: &[f64; 4], psi1: &[f64; 2]) -> [[f64; 4]; 4] {
    let w1 = |a: usize| psi0[a].exp();
    let w2 = |a: usize, b: usize| (psi01[2 * a + b] + psi1[b]).exp();
    let mut p = [[0.0; 4]; 4];
    for r in 0..4 {
        let (r0, r1) = (r / 2, r % 2);
        for s0 in 0..2 {
            // step 1: free particle draws s0; the reference keeps r0
            let x0 = [s0, r0];
            let p_s0 = 0.5;
            let tot1 = w1(x0[0]) + w1(x0[1]);
            for a0 in 0..2 {
                let p_a0 = w1(x0[a0]) / tot1;
                let anc_tot = w1(x0[0]) * w2(x0[0], r1) + w1(x0[1]) * w2(x0[1], r1);
                for a1 in 0..2 {
                    let p_a1 = w1(x0[a1]) * w2(x0[a1], r1) / anc_tot;
                    for s1 in 0..2 {
                        let paths = [(x0[a0], s1), (x0[a1], r1)];
                        let tot2 = w2(paths[0].0, paths[0].1) + w2(paths[1].0, paths[1].1);
                        for (pick, &(u, v)) in paths.iter().enumerate() {
                            let p_pick = w2(paths[pick].0, paths[pick].1) / tot2;
                            p[r][2 * u + v] += p_s0 * p_a0 * p_a1 * 0.5 * p_pick;
                        }
                    }
                }
            }
        }
    }
    p
}

#[test]
fn two_particle_transitions_match_enumeration() {
    let (d, psi0, psi01, psi1) = two_step_model();
    let want = enumerated_transitions(&psi0, &psi01, &psi1);
    for row in &want {
        assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }
    let mut kernel = PgasKernel::new(Arc::new(d), uniform(), 2).unwrap();
    kernel.exec = factor_smc::par::Exec::Sequential;
    let reps = 20_000;
    let chi2 = ChiSquared::new(3.0).unwrap();
    for r in 0..4 {
        let reference = [(r / 2) as f64, (r % 2) as f64];
        let mut counts = [0usize; 4];
        let master = RngStreams::new(100 + r as u64);
        for t in 0..reps {
            let x = kernel.apply(&reference, &master.child(t)).unwrap();
            counts[2 * x[0] as usize + x[1] as usize] += 1;
        }
        let stat: f64 = (0..4)
            .map(|s| {
                let e = want[r][s] * reps as f64;
                (counts[s] as f64 - e).powi(2) / e
            })
            .sum();
        let p = 1.0 - chi2.cdf(stat);
        assert!(p > 1e-3, "from {r}: counts {counts:?}, expected {:?}, p = {p}", want[r]);
    }
}

#[test]
fn reference_survives_zero_weight_competitors() {
    // only the all-zero state has positive mass
    let mut g = binary(2);
    g.add_factor(vec![0], table(&[0.0, f64::NEG_INFINITY])).unwrap();
    g.add_factor(vec![1], table(&[0.0, f64::NEG_INFINITY])).unwrap();
    let d = Arc::new(Decomposition::from_factor_groups(Arc::new(g), vec![vec![0], vec![1]]).unwrap());
    for seed in 0..200 {
        let x = pgas_kernel(d.clone(), uniform(), &[0.0, 0.0], 2, seed).unwrap();
        assert_eq!(x, vec![0.0, 0.0]);
    }
}

#[test]
fn too_few_particles_is_an_error() {
    let (d, ..) = two_step_model();
    let d = Arc::new(d);
    assert!(PgasKernel::new(d.clone(), uniform(), 1).is_err());
    assert!(pgas_kernel(d.clone(), uniform(), &[0.0, 0.0], 0, 1).is_err());
    assert!(pgas_kernel(d, uniform(), &[0.0], 2, 1).is_err());
}

fn small_gmrf() -> (Arc<FactorGraph>, factor_smc::models::ExactPosterior) {
    let m = GMRFModel::simulate(3, 3, 1.0, 0.5, 2).unwrap();
    (Arc::new(m.graph().unwrap()), m.exact_posterior().unwrap())
}

#[test]
fn kernel_preserves_exact_posterior() {
    // one kernel step applied to exact draws must leave the law unchanged
    let (g, post) = small_gmrf();
    let d = Arc::new(Decomposition::build(g, &OrderingStrategy::LeftRight).unwrap());
    let kernel = PgasKernel::new(d, Arc::new(AdaptedGaussianProposal), 5).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let master = RngStreams::new(12);
    let reps = 10_000;
    let n = post.mean.len();
    let mut sum = vec![0.0; n];
    let mut sq = vec![0.0; n];
    for t in 0..reps {
        let x0 = post.sample(&mut rng);
        let x = kernel.apply(&x0, &master.child(t)).unwrap();
        for v in 0..n {
            sum[v] += x[v];
            sq[v] += x[v] * x[v];
        }
    }
    let var = post.marginal_variances();
    let r = reps as f64;
    for v in 0..n {
        let m = sum[v] / r;
        let s2 = sq[v] / r - m * m;
        let se_m = (var[v] / r).sqrt();
        let se_v = var[v] * (2.0 / r).sqrt();
        assert!((m - post.mean[v]).abs() < 4.0 * se_m, "mean of x{v}: {m} vs {}", post.mean[v]);
        assert!((s2 - var[v]).abs() < 4.0 * se_v, "variance of x{v}: {s2} vs {}", var[v]);
    }
}

#[test]
fn chain_visits_every_state_in_proportion() {
    let g = Arc::new(IsingModel::random(2, 2, 1.0, 0.5, 3).unwrap().graph().unwrap());
    let order: Vec<usize> = (0..4).collect();
    let part = BlockPartition::whole(order);
    let kernels: Vec<Box<dyn BlockKernel>> =
        vec![Box::new(PgasBlock::new(g.clone(), &part, 0, uniform(), 2).unwrap())];
    let iters = 20_000;
    let chain = partial_blocking_gibbs(&g, &part, &kernels, &[0.0; 4], iters, 4, Scan::Systematic, None).unwrap();
    let mut counts: HashMap<usize, usize> = HashMap::new();
    for t in 0..chain.iterations() {
        let s = chain.row(t).iter().fold(0, |acc, &x| 2 * acc + x as usize);
        *counts.entry(s).or_default() += 1;
    }
    assert_eq!(counts.len(), 16);
    let log_z = g.brute_force_log_partition().unwrap();
    let tv: f64 = (0..16usize)
        .map(|s| {
            let x: Vec<f64> = (0..4).map(|i| ((s >> (3 - i)) & 1) as f64).collect();
            let p = (g.log_unnorm_density_unchecked(&x[..]) - log_z).exp();
            (counts.get(&s).copied().unwrap_or(0) as f64 / iters as f64 - p).abs()
        })
        .sum::<f64>()
        / 2.0;
    assert!(tv < 0.03, "total variation {tv}");
}

/// Each tracked mean within four Monte Carlo standard errors of the truth.
fn check_chain_means(chain: &factor_smc::pmcmc::Chain, mean: &[f64], var: &[f64]) {
    for (j, &v) in chain.vars.iter().enumerate() {
        let s = chain.series(j);
        let n = s.len() as f64;
        let m = s.iter().sum::<f64>() / n;
        let tau = integrated_autocorr_time(&s).unwrap();
        let se = (var[v] * tau / n).sqrt();
        assert!((m - mean[v]).abs() < 4.0 * se, "x{v}: {m} vs {} (se {se})", mean[v]);
    }
}

#[test]
fn singleton_gibbs_targets_posterior() {
    let (g, post) = small_gmrf();
    let part = BlockPartition::singletons(9);
    let kernels: Vec<Box<dyn BlockKernel>> = part
        .blocks()
        .iter()
        .map(|b| Box::new(SiteGibbs::new(g.clone(), b.clone())) as Box<dyn BlockKernel>)
        .collect();
    for scan in [Scan::Systematic, Scan::Random] {
        let chain = partial_blocking_gibbs(&g, &part, &kernels, &[0.0; 9], 20_000, 6, scan, None)
            .unwrap()
            .burn_in(0.1);
        check_chain_means(&chain, &post.mean, &post.marginal_variances());
    }
}

#[test]
fn tree_sampler_targets_posterior() {
    let m = GMRFModel::simulate(10, 10, 1.0, 0.5, 5).unwrap();
    let g = Arc::new(m.graph().unwrap());
    let post = m.exact_posterior().unwrap();
    let part = two_chain_blocks(10, 10).unwrap();
    assert_eq!(part.len(), 2);
    let kernels = tree_sampler_kernels(&g, &part).unwrap();
    let track = [0, 11, 44, 55, 99];
    let chain = partial_blocking_gibbs(&g, &part, &kernels, &[0.0; 100], 5_000, 7, Scan::Systematic, Some(&track))
        .unwrap()
        .burn_in(0.1);
    check_chain_means(&chain, &post.mean, &post.marginal_variances());
}

#[test]
fn whole_block_sampler_is_iterated_kernel() {
    let (g, _) = small_gmrf();
    let order: Vec<usize> = (0..9).collect();
    let part = BlockPartition::whole(order.clone());
    let block = PgasBlock::new(g.clone(), &part, 0, Arc::new(AdaptedGaussianProposal), 4).unwrap();
    let kernel = block.kernel().clone();
    let kernels: Vec<Box<dyn BlockKernel>> = vec![Box::new(block)];
    let chain = partial_blocking_gibbs(&g, &part, &kernels, &[0.0; 9], 30, 9, Scan::Systematic, None).unwrap();
    let master = RngStreams::new(9);
    let mut x = vec![0.0; 9];
    for t in 0..30 {
        x = kernel.apply(&x, &master.child(t).child(0)).unwrap();
        assert_eq!(chain.row(t as usize), &x[..]);
    }
}

#[test]
fn partitions_are_validated() {
    assert!(BlockPartition::new(vec![vec![0, 1], vec![1, 2]], 3).is_err());
    assert!(BlockPartition::new(vec![vec![0, 1]], 3).is_err());
    assert!(BlockPartition::new(vec![vec![0, 3]], 3).is_err());
    assert!(BlockPartition::new(vec![vec![], vec![0]], 1).is_err());
    let p = BlockPartition::new(vec![vec![2, 0], vec![1]], 3).unwrap();
    assert_eq!(p.complement(0), vec![1]);

    let (g, _) = small_gmrf();
    let part = BlockPartition::singletons(9);
    let kernels: Vec<Box<dyn BlockKernel>> = vec![Box::new(SiteGibbs::new(g.clone(), vec![0]))];
    assert!(partial_blocking_gibbs(&g, &part, &kernels, &[0.0; 9], 1, 0, Scan::Systematic, None).is_err());
    assert!(two_chain_blocks(1, 5).is_err());
}
