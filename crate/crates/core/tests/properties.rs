use std::sync::Arc;

use factor_smc::annealing::{make_ladder, LadderKind};
use factor_smc::experiments::{ExperimentConfig, ResultTable};
use factor_smc::logspace::{effective_sample_size, log_sum_exp, normalize};
use factor_smc::models::IsingModel;
use factor_smc::{Decomposition, OrderingStrategy};
use proptest::prelude::*;

fn strategy() -> impl Strategy<Value = OrderingStrategy> {
    prop_oneof![
        Just(OrderingStrategy::LeftRight),
        Just(OrderingStrategy::Diagonal),
        Just(OrderingStrategy::Spiral),
        Just(OrderingStrategy::Snake),
        any::<u64>().prop_map(|seed| OrderingStrategy::RandomNeighbour { seed }),
    ]
}

proptest! {
    #[test]
    fn log_sum_exp_matches_direct_sum(xs in prop::collection::vec(-30.0f64..30.0, 1..40), shift in -500.0f64..500.0) {
        let direct = xs.iter().map(|x| x.exp()).sum::<f64>().ln();
        prop_assert!((log_sum_exp(&xs) - direct).abs() < 1e-12 * direct.abs().max(1.0));
        let shifted: Vec<f64> = xs.iter().map(|x| x + shift).collect();
        prop_assert!((log_sum_exp(&shifted) - direct - shift).abs() < 1e-9 * (direct + shift).abs().max(1.0));
    }

    #[test]
    fn ess_within_bounds(xs in prop::collection::vec(-50.0f64..50.0, 1..100)) {
        let n = xs.len() as f64;
        let ess = effective_sample_size(&xs);
        prop_assert!(ess >= 1.0 - 1e-9 && ess <= n + 1e-9);
        let p = normalize(&xs);
        prop_assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn ladders_rise_from_zero_to_one(steps in 1usize..300, ratio in 1.001f64..2.0, geometric: bool) {
        let kind = if geometric { LadderKind::Geometric { ratio } } else { LadderKind::Linear };
        let l = make_ladder(kind, steps).unwrap();
        let b = l.betas();
        prop_assert_eq!(b.len(), steps + 1);
        prop_assert_eq!(b[0], 0.0);
        prop_assert_eq!(b[steps], 1.0);
        prop_assert!(b.windows(2).all(|w| w[0] < w[1]));
    }

    #[test]
    fn decompositions_partition_the_factors(rows in 1usize..6, cols in 1usize..6, seed: u64, s in strategy()) {
        let g = Arc::new(IsingModel::random(rows, cols, 1.0, 1.0, seed).unwrap().graph().unwrap());
        let d = Decomposition::build(g.clone(), &s).unwrap();
        let mut seen = vec![0usize; g.num_factors()];
        let mut introduced = vec![0usize; rows * cols];
        for step in d.steps() {
            step.factor_ids.iter().for_each(|&f| seen[f] += 1);
            step.new_vars.iter().for_each(|&v| introduced[v] += 1);
        }
        prop_assert!(seen.iter().all(|&c| c == 1));
        prop_assert!(introduced.iter().all(|&c| c == 1));
        prop_assert_eq!(d.len(), rows * cols);
    }

    #[test]
    fn result_csv_round_trip(
        rows in prop::collection::vec(
            ("[a-z_]{1,8}", "[a-z0-9]{0,6}", 0usize..10_000, prop::option::of(0usize..1000), any::<f64>()),
            0..30,
        )
    ) {
        let mut t = ResultTable::new();
        for (method, ordering, n, rep, value) in &rows {
            let value = if value.is_nan() { 0.0 } else { *value };
            t.push("xy", method, ordering, *n, *rep, "mse", value);
        }
        let text = t.to_csv_string().unwrap();
        let back = ResultTable::read_csv(text.as_bytes()).unwrap();
        prop_assert_eq!(back, t);
    }
}

#[test]
fn experiment_configs_round_trip_through_toml() {
    let texts = [
        "seed = 1\nexperiment = \"xy\"\nrows = 4\ncols = 4\nbeta = 1.1\norderings = [\"lr\", \"rndn\"]\nparticles = [10]\n\
         reference = { kind = \"value\", log_z = 1.0 }\n",
        "seed = 2\nreplicates = 3\nexperiment = \"gmrf_acf\"\nrows = 4\ncols = 4\niterations = 100\n",
        "seed = 3\nexperiment = \"lda\"\nparticles = [10, 20]\n",
        "seed = 4\nexperiment = \"unbiased\"\nrows = 3\ncols = 3\n",
    ];
    for text in texts {
        let cfg = ExperimentConfig::from_toml(text).unwrap();
        cfg.validate().unwrap();
        let again = ExperimentConfig::from_toml(&cfg.to_toml().unwrap()).unwrap();
        assert_eq!(again, cfg);
    }
    assert!(ExperimentConfig::from_toml("seed = 1\nexperiment = \"nope\"\n").is_err());
    let zero = ExperimentConfig::from_toml("seed = 1\nreplicates = 0\nexperiment = \"lda\"\nparticles = [10]\n").unwrap();
    assert!(zero.validate().is_err());
}
