use chrono::{Duration, NaiveDate, NaiveDateTime};
use proptest::prelude::*;
use stlf_dms::backtest::{run_dms, WindowConfig};
use stlf_dms::metrics::{evaluate, mape};
use stlf_dms::pool::ForecastMatrix;
use stlf_dms::qdms::{
    reward_error_reduction, reward_rank, train_agent, AgentConfig, AgentWindow, MdpSpace, RankVector,
    RewardStrategy,
};

fn ranks(v: &[usize]) -> RankVector {
    RankVector::from_ranks(v.to_vec()).unwrap()
}

fn hours(n: usize) -> Vec<NaiveDateTime> {
    let t0 = NaiveDate::from_ymd_opt(2015, 1, 1).unwrap().and_hms_opt(0, 0, 0).unwrap();
    (0..n).map(|i| t0 + Duration::hours(i as i64)).collect()
}

fn config(alpha: f64, gamma: f64, episodes: usize, seed: u64) -> AgentConfig<f64> {
    AgentConfig {
        alpha,
        gamma,
        episodes,
        reward: RewardStrategy::RankImprovement,
        seed,
    }
}

// Three steps, two candidates, one greedy episode (epsilon is 0 when E = 1).
// Start on candidate 0 (best at step 0). Step 0: all-zero row, tie -> action 0,
// r = rank0(0) - rank1(0) = 1 - 2 = -1. Step 1: row [-1, 0] -> action 1,
// r = rank1(0) - rank2(1) = 2 - 2 = 0.
#[test]
fn greedy_episode_by_hand() {
    let window = AgentWindow::<f64>::from_ranks(vec![ranks(&[1, 2]), ranks(&[2, 1]), ranks(&[1, 2])]).unwrap();
    let space = MdpSpace::indices(2).unwrap();

    let (q, curve) = train_agent(space.clone(), &window, &config(1.0, 0.0, 1, 9)).unwrap();
    assert_eq!(q.values(), &[-1.0, 0.0, 0.0, 0.0]);
    assert_eq!(curve.values(), &[-1.0]);

    // alpha 0.5, gamma 0.5: Q(0,0) = 0.5 * (-1 + 0.5 * 0) = -0.5, then Q(0,1) = 0.5 * (0 + 0.5 * 0) = 0
    let (q, _) = train_agent(space, &window, &config(0.5, 0.5, 1, 9)).unwrap();
    assert_eq!(q.values(), &[-0.5, 0.0, 0.0, 0.0]);
    assert_eq!(q.policy(), vec![1, 0]);
}

fn permutation(n: usize) -> impl Strategy<Value = Vec<usize>> {
    Just((1..=n).collect::<Vec<_>>()).prop_shuffle()
}

fn rank_window() -> impl Strategy<Value = (usize, Vec<Vec<usize>>)> {
    (2usize..6, 2usize..30).prop_flat_map(|(n, len)| (Just(n), prop::collection::vec(permutation(n), len)))
}

fn forecast_matrix(n_models: usize, len: usize) -> impl Strategy<Value = ForecastMatrix<f64>> {
    (
        prop::collection::vec(50.0f64..150.0, len),
        prop::collection::vec(prop::collection::vec(-0.3f64..0.3, n_models), len),
    )
        .prop_map(move |(actuals, rel)| {
            let forecasts = actuals
                .iter()
                .zip(&rel)
                .map(|(a, r)| r.iter().map(|e| a * (1.0 + e)).collect())
                .collect();
            let ids = (1..=n_models).map(|k| format!("M{k}")).collect();
            ForecastMatrix::new(hours(len), actuals, forecasts, ids).unwrap()
        })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn reward_is_antisymmetric(a in 1usize..20, b in 1usize..20, x in 0.0f64..50.0, y in 0.0f64..50.0) {
        prop_assert_eq!(reward_rank::<f64>(a, b), -reward_rank::<f64>(b, a));
        prop_assert_eq!(reward_error_reduction(x, y), -reward_error_reduction(y, x));
    }

    #[test]
    fn q_values_stay_bounded(
        (n, w) in rank_window(),
        alpha in 0.01f64..1.0,
        gamma in 0.0f64..0.95,
        episodes in 1usize..30,
        seed in any::<u64>(),
    ) {
        let window = AgentWindow::<f64>::from_ranks(w.iter().map(|r| ranks(r)).collect()).unwrap();
        let (q, curve) = train_agent(MdpSpace::indices(n).unwrap(), &window, &config(alpha, gamma, episodes, seed)).unwrap();
        let bound = (n - 1) as f64 / (1.0 - gamma) + 1e-9;
        prop_assert!(q.values().iter().all(|v| v.abs() <= bound));
        prop_assert_eq!(curve.len(), episodes);
    }

    #[test]
    fn training_is_deterministic_per_seed((n, w) in rank_window(), seed in any::<u64>()) {
        let window = AgentWindow::<f64>::from_ranks(w.iter().map(|r| ranks(r)).collect()).unwrap();
        let space = MdpSpace::indices(n).unwrap();
        let cfg = config(0.1, 0.8, 20, seed);
        prop_assert_eq!(train_agent(space.clone(), &window, &cfg).unwrap(), train_agent(space, &window, &cfg).unwrap());
    }

    #[test]
    fn selection_covers_the_test_period(
        fm in (4usize..8, 20usize..60).prop_flat_map(|(n, len)| forecast_matrix(n, len)),
        history in 4usize..12,
        horizon in 1usize..6,
        candidates in 2usize..5,
        seed in any::<u64>(),
    ) {
        let test_start = history + 2;
        let wc = WindowConfig { history, horizon, candidates };
        let ac = AgentConfig { episodes: 5, seed, ..Default::default() };
        let out = run_dms(&fm, test_start, &wc, &ac).unwrap();
        let test_len = fm.len() - test_start;
        prop_assert_eq!(out.log.len(), test_len);
        prop_assert_eq!(out.forecasts.len(), test_len);
        prop_assert_eq!(out.agent_count(), test_len.div_ceil(horizon));
        for (i, e) in out.log.entries.iter().enumerate() {
            let t = test_start + i;
            prop_assert_eq!(e.timestamp, fm.timestamps()[t]);
            prop_assert_eq!(e.agent_index, i / horizon);
            prop_assert_eq!(e.candidates.len(), candidates);
            prop_assert!(e.candidates.contains(&e.chosen));
            prop_assert_eq!(e.forecast, fm.forecast(t, e.chosen));
            prop_assert_eq!(e.actual, fm.actuals()[t]);
            let apes = fm.apes(t);
            let better = apes.iter().enumerate().filter(|&(k, &a)| a < apes[e.chosen] || (a == apes[e.chosen] && k < e.chosen)).count();
            prop_assert_eq!(e.realized_rank, better + 1);
        }

        let test = fm.slice(test_start..fm.len());
        let report = evaluate(&test, Some(&out.log), 150.0).unwrap();
        let dms_mape = mape(&out.forecasts, test.actuals()).unwrap();
        prop_assert!((report.row("M_Q").unwrap().mape - dms_mape).abs() <= 1e-12 * dms_mape.max(1.0));
        for row in &report.rank_counts.counts {
            prop_assert_eq!(row.iter().sum::<usize>(), test_len);
        }
    }

    #[test]
    fn selection_ignores_the_future(
        fm in (4usize..8, 30usize..50).prop_flat_map(|(n, len)| forecast_matrix(n, len)),
        scale in 0.5f64..2.0,
        seed in any::<u64>(),
    ) {
        let wc = WindowConfig { history: 8, horizon: 3, candidates: 3 };
        let ac = AgentConfig { episodes: 10, seed, ..Default::default() };
        let test_start = 10;
        let base = run_dms(&fm, test_start, &wc, &ac).unwrap();

        // rescale every forecast from the second block on; the first block must not notice
        let cut = test_start + wc.horizon;
        let forecasts = (0..fm.len())
            .map(|t| fm.row(t).iter().map(|&f| if t >= cut { f * scale } else { f }).collect())
            .collect();
        let changed = ForecastMatrix::new(fm.timestamps().to_vec(), fm.actuals().to_vec(), forecasts, fm.model_ids().to_vec()).unwrap();
        let other = run_dms(&changed, test_start, &wc, &ac).unwrap();
        prop_assert_eq!(&base.log.entries[..wc.horizon], &other.log.entries[..wc.horizon]);
        prop_assert_eq!(&base.curves[0], &other.curves[0]);
    }
}
