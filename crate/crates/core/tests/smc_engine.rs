use std::sync::Arc;

use factor_smc::logspace::{log_mean_exp, log_sum_exp};
use factor_smc::models::IsingModel;
use factor_smc::par::Exec;
use factor_smc::rng::StreamRng;
use factor_smc::smc::trace::{read_trace, write_summary, write_trace};
use factor_smc::smc::{
    estimate_log_partition, log_weight, run_smc, EnumeratedProposal, ParticleSystem, Proposal, SmcConfig,
    StepRecord, UniformProposal,
};
use factor_smc::{Decomposition, Domain, FactorGraph, OrderingStrategy, Potential};

fn binary(n: usize) -> FactorGraph {
    FactorGraph::new(vec![Domain::Discrete { cardinality: 2 }; n]).unwrap()
}

fn table(v: &[f64]) -> Potential {
    Potential::Table { log_values: v.to_vec() }
}

/// Binary chain `x0 - x1 - x2` with fields on every site.
fn chain3() -> Arc<FactorGraph> {
    let mut g = binary(3);
    g.add_factor(vec![0], table(&[0.3, -0.2])).unwrap();
    g.add_factor(vec![1], table(&[-0.5, 0.1])).unwrap();
    g.add_factor(vec![2], table(&[0.0, 0.7])).unwrap();
    g.add_factor(vec![0, 1], table(&[0.8, -0.8, -0.8, 0.8])).unwrap();
    g.add_factor(vec![1, 2], table(&[-0.4, 0.4, 0.4, -0.4])).unwrap();
    Arc::new(g)
}

fn chain3_decomposition() -> Decomposition {
    Decomposition::from_factor_groups(chain3(), vec![vec![0], vec![1, 3], vec![2, 4]]).unwrap()
}

#[test]
fn single_step_is_importance_sampling() {
    let mut g = binary(2);
    g.add_factor(vec![0, 1], table(&[0.1, 1.2, -0.3, 0.4])).unwrap();
    let d = Decomposition::from_factor_groups(Arc::new(g), vec![vec![0]]).unwrap();
    assert_eq!(d.len(), 1);
    let out = run_smc(&d, &UniformProposal, &SmcConfig::new(50, 4)).unwrap();
    let w = &out.system.steps[0].log_weights;
    // w = ψ(x) / (1/4)
    let table = [0.1, 1.2, -0.3, 0.4];
    for i in 0..50 {
        let x = out.system.particle(i);
        let idx = (x[0] as usize) * 2 + x[1] as usize;
        assert!((w[i] - (table[idx] + 4f64.ln())).abs() < 1e-12);
    }
    assert!((out.z.final_log_z() - log_mean_exp(w)).abs() < 1e-12);
    assert!((estimate_log_partition(&out.system, 1) - log_mean_exp(w)).abs() < 1e-12);
}

#[test]
fn single_particle_matches_path_product() {
    let d = chain3_decomposition();
    let g = chain3();
    for seed in 0..10 {
        // uniform proposal: Ẑ = γ_K(x) / r(x) along the single path
        let out = run_smc(&d, &UniformProposal, &SmcConfig::new(1, seed)).unwrap();
        let x = out.system.particle(0).to_vec();
        let want = g.log_unnorm_density_unchecked(&x[..]) + 3.0 * 2f64.ln();
        assert!((out.z.final_log_z() - want).abs() < 1e-12);

        // adapted proposal: Ẑ = ν_0 ∏_k ν_k(x_{1:k}), each ν a sum over the next variable
        let out = run_smc(&d, &EnumeratedProposal::default(), &SmcConfig::new(1, seed)).unwrap();
        let x = out.system.particle(0).to_vec();
        let mut want = log_sum_exp(&[0.3, -0.2]);
        for k in 1..3 {
            let terms: Vec<f64> = (0..2)
                .map(|s| {
                    let mut y = x.clone();
                    y[k] = s as f64;
                    d.log_gamma_unchecked(k + 1, &y) - d.log_gamma_unchecked(k, &y)
                })
                .collect();
            want += log_sum_exp(&terms);
        }
        assert!((out.z.final_log_z() - want).abs() < 1e-12, "seed {seed}");
    }
}

/// Delegates to the uniform proposal with `ν ≡ 2`.
struct Doubled;

impl Proposal for Doubled {
    fn sample_increment(&self, d: &Decomposition, k: usize, x: &mut [f64], rng: &mut StreamRng) -> factor_smc::Result<f64> {
        UniformProposal.sample_increment(d, k, x, rng)
    }
    fn log_increment_density(&self, d: &Decomposition, k: usize, x: &[f64]) -> f64 {
        UniformProposal.log_increment_density(d, k, x)
    }
    fn log_adjustment(&self, _d: &Decomposition, _k: usize, _x: &[f64]) -> f64 {
        2f64.ln()
    }
}

#[test]
fn log_weight_examples() {
    let mut g = FactorGraph::new(vec![Domain::Discrete { cardinality: 3 }; 2]).unwrap();
    g.add_factor(vec![0], table(&[0.0, 0.5, 1.0])).unwrap();
    g.add_factor(vec![0, 1], table(&[0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9])).unwrap();
    let d = Decomposition::from_factor_groups(Arc::new(g), vec![vec![0], vec![1]]).unwrap();
    let prev = [2.0, f64::NAN];
    let x = [2.0, 1.0];
    let lw = log_weight(&d, &UniformProposal, 2, &prev, &x);
    // Δ log γ = ψ(2, 1) = 0.8; uniform over 3 states
    assert!((lw - (0.8 + 3f64.ln())).abs() < 1e-12);
    let doubled = log_weight(&d, &Doubled, 2, &prev, &x);
    assert!((lw - doubled - 2f64.ln()).abs() < 1e-12);
    // adapted proposal weights vanish
    let ep = EnumeratedProposal::default();
    for a in 0..3 {
        for b in 0..3 {
            let x = [a as f64, b as f64];
            assert!(log_weight(&d, &ep, 2, &[a as f64, f64::NAN], &x).abs() < 1e-12);
        }
    }
}

#[test]
fn estimate_from_stored_weights() {
    let step = |w: Vec<f64>, resampled| StepRecord {
        log_adjustments: vec![0.0; w.len()],
        ancestors: (0..w.len()).collect(),
        resampled,
        ess: 0.0,
        log_z_hat: 0.0,
        log_weights: w,
    };
    let sys = ParticleSystem {
        num_particles: 3,
        width: 0,
        log_initial_adjustment: 0.0,
        steps: vec![step(vec![0.0; 3], false), step(vec![0.0; 3], true)],
        particles: vec![],
    };
    assert_eq!(estimate_log_partition(&sys, 2), 0.0);
    let sys = ParticleSystem {
        steps: vec![step(vec![0.0, 1.0, 2.0], false)],
        ..sys
    };
    let want = ((1.0 + 1f64.exp() + 2f64.exp()) / 3.0).ln();
    assert!((estimate_log_partition(&sys, 1) - want).abs() < 1e-12);
}

#[test]
fn running_estimate_matches_recomputation() {
    let g = Arc::new(IsingModel::random(3, 3, 1.0, 0.5, 2).unwrap().graph().unwrap());
    let d = Decomposition::build(g, &OrderingStrategy::Spiral).unwrap();
    for p in [&UniformProposal as &dyn Proposal, &EnumeratedProposal::default()] {
        let out = run_smc(&d, p, &SmcConfig::new(40, 8)).unwrap();
        for k in 1..=d.len() {
            let a = estimate_log_partition(&out.system, k);
            assert!((a - out.z.log_z[k - 1]).abs() < 1e-10);
            assert_eq!(out.system.steps[k - 1].log_z_hat, out.z.log_z[k - 1]);
        }
    }
}

fn ratio_test(d: &Decomposition, p: &dyn Proposal, exact: f64, runs: u64, n: usize) -> (f64, f64) {
    let r: Vec<f64> = (0..runs)
        .map(|s| (run_smc(d, p, &SmcConfig::new(n, 10_000 + s)).unwrap().z.final_log_z() - exact).exp())
        .collect();
    let m = r.iter().sum::<f64>() / r.len() as f64;
    let v = r.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (r.len() - 1) as f64;
    (m, (v / r.len() as f64).sqrt())
}

#[test]
fn unbiased_on_small_lattice() {
    let g = Arc::new(IsingModel::random(3, 3, 1.0, 0.5, 5).unwrap().graph().unwrap());
    let exact = g.brute_force_log_partition().unwrap();
    for strategy in [OrderingStrategy::LeftRight, OrderingStrategy::Diagonal] {
        let d = Decomposition::build(g.clone(), &strategy).unwrap();
        for p in [&UniformProposal as &dyn Proposal, &EnumeratedProposal::default()] {
            let (m, se) = ratio_test(&d, p, exact, 1000, 20);
            assert!((m - 1.0).abs() <= 3.0 * se, "{strategy:?}: {m} ± {se}");
        }
    }
}

#[test]
fn adapted_proposal_on_chain() {
    // every weight stays at one; Ẑ then only carries the ν noise
    let d = chain3_decomposition();
    let exact = chain3().brute_force_log_partition().unwrap();
    let out = run_smc(&d, &EnumeratedProposal::default(), &SmcConfig::new(1000, 3)).unwrap();
    assert!((out.z.final_log_z() - exact).abs() < 0.05);
    for st in &out.system.steps {
        assert!(st.log_weights.iter().all(|w| w.abs() < 1e-12));
    }
}

#[test]
fn identical_across_schedules() {
    let g = Arc::new(IsingModel::random(4, 4, 1.0, 0.5, 1).unwrap().graph().unwrap());
    let d = Decomposition::build(g, &OrderingStrategy::RandomNeighbour { seed: 3 }).unwrap();
    let run = |exec, threads| {
        let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap();
        let mut cfg = SmcConfig::new(300, 21);
        cfg.exec = exec;
        pool.install(|| run_smc(&d, &EnumeratedProposal::default(), &cfg).unwrap())
    };
    let base = run(Exec::Sequential, 1);
    for (exec, threads) in [(Exec::Parallel, 1), (Exec::Parallel, 4), (Exec::Sequential, 3)] {
        let o = run(exec, threads);
        assert_eq!(o.system, base.system);
        assert_eq!(o.z, base.z);
    }
    let other = {
        let mut cfg = SmcConfig::new(300, 22);
        cfg.exec = Exec::Sequential;
        run_smc(&d, &EnumeratedProposal::default(), &cfg).unwrap()
    };
    assert_ne!(other.system, base.system);
}

#[test]
fn empty_increment_only_reweights() {
    let mut g = FactorGraph::new(vec![Domain::Discrete { cardinality: 3 }; 2]).unwrap();
    g.add_factor(vec![0], table(&[0.0, 0.5, 1.0])).unwrap();
    g.add_factor(vec![1], table(&[0.2, 0.1, 0.0])).unwrap();
    g.add_factor(vec![0, 1], table(&[0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9])).unwrap();
    let g = Arc::new(g);
    let d = Decomposition::from_factor_groups(g.clone(), vec![vec![0], vec![1], vec![2]]).unwrap();
    assert!(d.step(3).new_vars.is_empty());
    let out = run_smc(&d, &UniformProposal, &SmcConfig::new(64, 5)).unwrap();
    let (s2, s3) = (&out.system.steps[1], &out.system.steps[2]);
    assert!(!s3.resampled);
    assert_eq!(s3.ancestors, (0..64).collect::<Vec<_>>());
    for i in 0..64 {
        let x = out.system.particle(i);
        let pair = [0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9][x[0] as usize * 3 + x[1] as usize];
        assert!((s3.log_weights[i] - s2.log_weights[i] - pair).abs() < 1e-12);
    }
    // still unbiased
    let exact = g.brute_force_log_partition().unwrap();
    let (m, se) = ratio_test(&d, &UniformProposal, exact, 1000, 10);
    assert!((m - 1.0).abs() <= 3.0 * se);
}

#[test]
fn degenerate_weights_abort() {
    let mut g = binary(2);
    g.add_factor(vec![0], table(&[f64::NEG_INFINITY, f64::NEG_INFINITY])).unwrap();
    g.add_factor(vec![1], table(&[0.0, 0.0])).unwrap();
    let d = Decomposition::from_factor_groups(Arc::new(g), vec![vec![0], vec![1]]).unwrap();
    assert!(run_smc(&d, &UniformProposal, &SmcConfig::new(8, 1)).is_err());
    assert!(run_smc(&d, &UniformProposal, &SmcConfig::new(0, 1)).is_err());
}

#[test]
fn uniform_proposal_rejects_real_variables() {
    let mut g = FactorGraph::new(vec![Domain::Real]).unwrap();
    g.add_factor(vec![0], Potential::GaussianObs { y: 0.0, sigma: 1.0 }).unwrap();
    let d = Decomposition::from_factor_groups(Arc::new(g), vec![vec![0]]).unwrap();
    assert!(run_smc(&d, &UniformProposal, &SmcConfig::new(4, 1)).is_err());
}

#[test]
fn trace_round_trip() {
    let g = Arc::new(IsingModel::random(3, 3, 1.0, 0.5, 9).unwrap().graph().unwrap());
    let d = Decomposition::build(g, &OrderingStrategy::LeftRight).unwrap();
    let out = run_smc(&d, &EnumeratedProposal::default(), &SmcConfig::new(17, 2)).unwrap();
    let mut buf = Vec::new();
    write_trace(&out.system, &mut buf).unwrap();
    let back = read_trace(&buf[..]).unwrap();
    assert_eq!(back, out.system);
    assert!(read_trace(&buf[..buf.len() - 3]).is_err());
    assert!(read_trace(&b"NOTATRACE"[..]).is_err());

    let mut csv = Vec::new();
    write_summary(&out, &mut csv).unwrap();
    let text = String::from_utf8(csv).unwrap();
    assert_eq!(text.lines().count(), 1 + d.len());
    assert!(text.starts_with("step,ess,log_z_hat,wall_ns\n1,"));
}
