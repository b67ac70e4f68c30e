//! End-to-end acceptance checks. Runs as a plain binary so every criterion
//! prints its own PASS/FAIL line under `cargo test`.

use std::fs;
use std::time::{Duration, Instant};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use stlf_dms::backtest::WindowConfig;
use stlf_dms::dataio::FeatureMatrix;
use stlf_dms::metrics::{improvement, mape, nmae, tail_variation, EvalReport, DMS_ID};
use stlf_dms::pool::{check_gradients, Hyperparameters, ModelKind, ModelSpec};
use stlf_dms::qdms::{
    epsilon_at, q_update, train_agent, train_agent_observed, AgentConfig, AgentWindow, MdpSpace, QTable, RankVector,
    RewardStrategy,
};
use stlf_dms_cli::{Overrides, Run, RunConfig, DMS_FORECAST_FILE, SELECTION_LOG_FILE};

struct Verdict {
    pass: bool,
    detail: String,
}

fn verdict(pass: bool, detail: impl Into<String>) -> Verdict {
    Verdict {
        pass,
        detail: detail.into(),
    }
}

fn q_arithmetic() -> Verdict {
    let space = || MdpSpace::indices(4).unwrap();
    let mut q = QTable::<f64>::zeros(space());
    q_update(&mut q, 0, 1, 3.0, 1, 0.1, 0.8).unwrap();
    let v = q.get(0, 1);
    // 0.1 * 3 in double precision is the double just above 0.3
    let ulps = (v.to_bits() as i64 - 0.3f64.to_bits() as i64).abs();
    let first = v == 0.1 * 3.0 && ulps <= 1;

    let mut degenerate = true;
    for r in [3.0, -2.5, 0.1, 7.0 / 3.0, 1e-300] {
        let mut q = QTable::<f64>::zeros(space());
        q.set(2, 0, 123.456);
        q_update(&mut q, 1, 2, r, 2, 1.0, 0.0).unwrap();
        degenerate &= q.get(1, 2) == r;
    }
    verdict(
        first && degenerate,
        format!("Q = {v:?} (= 0.1*3 in f64, {ulps} ulp from 0.3); alpha=1, gamma=0 gives Q = r exactly: {degenerate}"),
    )
}

fn epsilon_schedule() -> Verdict {
    let (a, b, c) = (epsilon_at(30, 100), epsilon_at(0, 100), epsilon_at(100, 100));
    verdict(a == 0.7 && b == 1.0 && c == 0.0, format!("eps(30)={a} eps(0)={b} eps(E)={c}"))
}

fn agent_counts(full: Option<usize>) -> Verdict {
    let wc = WindowConfig::default();
    let (year, month) = (wc.agent_count(8760), wc.agent_count(720));
    let mut pass = year == 2190 && month == 180;
    let mut detail = format!("T=8760,P=4 -> {year}; T=720,P=4 -> {month}");
    if let Some(n) = full {
        pass &= n == 2190;
        detail.push_str(&format!("; full backtest logged {n} agents"));
    }
    verdict(pass, detail)
}

/// Optimal policy of the deterministic MDP where moving from `s` to `a`
/// pays `rank[s] - rank[a]`, by value iteration. Ties go to the lowest index.
fn value_iteration_policy(rank: &[usize], gamma: f64) -> Vec<usize> {
    let n = rank.len();
    let r = |s: usize, a: usize| rank[s] as f64 - rank[a] as f64;
    let mut v = vec![0.0; n];
    loop {
        let next: Vec<f64> = (0..n)
            .map(|s| (0..n).map(|a| r(s, a) + gamma * v[a]).fold(f64::NEG_INFINITY, f64::max))
            .collect();
        let delta = next.iter().zip(&v).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        v = next;
        if delta < 1e-13 {
            break;
        }
    }
    (0..n)
        .map(|s| {
            let q: Vec<f64> = (0..n).map(|a| r(s, a) + gamma * v[a]).collect();
            let best = q.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            q.iter().position(|&x| best - x < 1e-9).unwrap()
        })
        .collect()
}

struct OracleRun {
    matched: usize,
    total: usize,
    updates: usize,
    violations: usize,
    worst_ratio: f64,
}

fn oracle_runs() -> OracleRun {
    let gamma = 0.8;
    let mut out = OracleRun {
        matched: 0,
        total: 0,
        updates: 0,
        violations: 0,
        worst_ratio: 0.0,
    };
    let mut rng = ChaCha8Rng::seed_from_u64(2190);
    for i in 2..=5usize {
        let bound = (i - 1) as f64 / (1.0 - gamma);
        for k in 0..50u64 {
            let mut perm: Vec<usize> = (1..=i).collect();
            perm.shuffle(&mut rng);
            let window = AgentWindow::<f64>::from_ranks(vec![RankVector::from_ranks(perm.clone()).unwrap(); 72]).unwrap();
            let config = AgentConfig {
                alpha: 0.1,
                gamma,
                episodes: 500,
                reward: RewardStrategy::RankImprovement,
                seed: 1000 * i as u64 + k,
            };
            let (q, _) = train_agent_observed(MdpSpace::indices(i).unwrap(), &window, &config, |q| {
                out.updates += 1;
                for &v in q.values() {
                    out.worst_ratio = out.worst_ratio.max(v.abs() / bound);
                    if v.abs() > bound {
                        out.violations += 1;
                    }
                }
            })
            .unwrap();
            out.total += 1;
            if q.policy() == value_iteration_policy(&perm, gamma) {
                out.matched += 1;
            }
        }
    }
    out
}

fn oracle_equivalence(o: &OracleRun, elapsed: Duration) -> Verdict {
    let share = o.matched as f64 / o.total as f64;
    verdict(
        share >= 0.95 && elapsed < Duration::from_secs(30),
        format!(
            "{}/{} policies equal value iteration ({:.1}%), {:.1?}",
            o.matched,
            o.total,
            100.0 * share,
            elapsed
        ),
    )
}

fn q_bounded(o: &OracleRun) -> Verdict {
    verdict(
        o.violations == 0,
        format!(
            "{} violations over {} updates; max |Q| / bound = {:.3}",
            o.violations, o.updates, o.worst_ratio
        ),
    )
}

fn random_rows(n: usize, d: usize, seed: u64) -> FeatureMatrix<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let rows: Vec<Vec<f64>> = (0..n).map(|_| (0..d).map(|_| rng.random_range(-1.5..1.5)).collect()).collect();
    let y = rows.iter().map(|r| 500.0 + 40.0 * r[0] - 25.0 * r[1] * r[2] + rng.random_range(-10.0..10.0)).collect();
    FeatureMatrix::from_rows(&rows, y).unwrap()
}

fn gradient_checks() -> Verdict {
    let rows = random_rows(40, 5, 11);
    let mut hyper = Hyperparameters::standard();
    hyper.mlp.widths = vec![8];
    let mlp = check_gradients(&ModelSpec::new("M3", ModelKind::MlpResilientBp, hyper.clone()), &rows, 1e-5).unwrap();
    let mut pass = mlp.pass && mlp.max_rel_error <= 1e-5;
    let mut detail = format!("MLP max rel {:.1e} over {} params", mlp.max_rel_error, mlp.checked);
    for (id, kind) in [
        ("M7", ModelKind::GbmSquared),
        ("M8", ModelKind::GbmLaplace),
        ("M9", ModelKind::GbmStudentT),
    ] {
        let r = check_gradients(&ModelSpec::new(id, kind, hyper.clone()), &rows, 1e-6).unwrap();
        pass &= r.pass && r.max_abs_error <= 1e-6;
        detail.push_str(&format!("; {id} max abs {:.1e}", r.max_abs_error));
    }
    verdict(pass, detail)
}

/// APE windows whose ordering never changes: candidate k sits in band k.
fn stationary_window(rng: &mut ChaCha8Rng, noise: f64) -> Vec<Vec<f64>> {
    (0..72)
        .map(|_| (0..4).map(|k| (k + 1) as f64 * (1.0 + rng.random_range(-noise..noise))).collect())
        .collect()
}

/// Heavy multiplicative noise, so ranks and error differences jump around.
fn noisy_window(rng: &mut ChaCha8Rng) -> Vec<Vec<f64>> {
    (0..72)
        .map(|_| (0..4).map(|k| (k + 1) as f64 * (rng.random_range(-1.0..1.0f64) * 1.2).exp()).collect())
        .collect()
}

fn convergence() -> Verdict {
    let mut rank_tails = Vec::new();
    let mut err_tails = Vec::new();
    for seed in 0..10u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(700 + seed);
        let cfg = |reward| AgentConfig {
            reward,
            seed,
            ..AgentConfig::<f64>::default()
        };
        let calm = AgentWindow::from_apes(stationary_window(&mut rng, 0.15)).unwrap();
        let (_, c) = train_agent(MdpSpace::indices(4).unwrap(), &calm, &cfg(RewardStrategy::RankImprovement)).unwrap();
        rank_tails.push(tail_variation(&c, 0.2));
        let rough = AgentWindow::from_apes(noisy_window(&mut rng)).unwrap();
        let (_, c) = train_agent(MdpSpace::indices(4).unwrap(), &rough, &cfg(RewardStrategy::ErrorReduction)).unwrap();
        err_tails.push(tail_variation(&c, 0.2));
    }
    let worst_rank = rank_tails.iter().copied().fold(0.0, f64::max);
    let wins = rank_tails.iter().zip(&err_tails).filter(|(r, e)| e > r).count();
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    verdict(
        worst_rank <= 0.05 && wins == rank_tails.len(),
        format!(
            "rank reward tail/range max {:.2}% (mean {:.2}%); error reduction mean {:.2}%, larger in {wins}/{} seeds",
            100.0 * worst_rank,
            100.0 * mean(&rank_tails),
            100.0 * mean(&err_tails),
            rank_tails.len()
        ),
    )
}

/// Regression baseline of the default synthetic run:
/// (DMS MAPE, pool-average MAPE, best single MAPE, top-I share %).
const FROZEN_DEFAULT_RUN: Option<(f64, f64, f64, f64)> =
    Some((0.8687287090336957, 2.2588040827516407, 0.844113681812695, 68.42465753424658));

struct Effectiveness {
    verdict: Verdict,
    agents: usize,
    report: Option<EvalReport>,
}

fn effectiveness(run: &Run) -> Effectiveness {
    let started = Instant::now();
    let report = match run.cmd_report() {
        Ok(r) => r,
        Err(e) => {
            return Effectiveness {
                verdict: verdict(false, format!("pipeline failed: {e}")),
                agents: 0,
                report: None,
            }
        }
    };
    let elapsed = started.elapsed();
    let curves = fs::read_to_string(run.path(stlf_dms_cli::CURVES_FILE)).unwrap_or_default();
    let agents = curves
        .lines()
        .filter_map(|l| l.split(',').next()?.parse::<usize>().ok())
        .max()
        .unwrap_or(0);
    let pool: Vec<f64> = report.rows.iter().filter(|r| r.model != DMS_ID).map(|r| r.mape).collect();
    let avg = pool.iter().sum::<f64>() / pool.len() as f64;
    let best = pool.iter().copied().fold(f64::INFINITY, f64::min);
    let q = report.row(DMS_ID).map_or(f64::NAN, |r| r.mape);
    let k = run.config.window.candidates;
    let share = report.rank_counts.top_share(pool.len(), k);
    let (a, b, c) = (q <= 0.8 * avg, q <= 1.10 * best, share >= 65.0);
    let frozen = FROZEN_DEFAULT_RUN.map_or(true, |(fq, fa, fb, fs)| {
        (q - fq).abs() <= 1e-9 && (avg - fa).abs() <= 1e-9 && (best - fb).abs() <= 1e-9 && (share - fs).abs() <= 1e-9
    });
    let fast = elapsed <= Duration::from_secs(600);
    Effectiveness {
        verdict: verdict(
            a && b && c && frozen && fast,
            format!(
                "M_Q {q:.4}% vs pool avg {avg:.4}% (ratio {:.3}, need <= 0.8: {a}), best {best:.4}% (ratio {:.3}, need <= 1.10: {b}); \
                 rank <= {k} on {share:.2}% of steps (need >= 65: {c}); baseline match {frozen}; {:.0?}",
                q / avg,
                q / best,
                elapsed
            ),
        ),
        agents,
        report: Some(report),
    }
}

fn metric_identities(report: Option<&EvalReport>) -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let y: Vec<f64> = (0..500).map(|_| rng.random_range(400.0..1600.0)).collect();
    let f: Vec<f64> = y.iter().map(|v| v + rng.random_range(-80.0..80.0)).collect();
    let perfect = mape(&y, &y).unwrap() == 0.0 && nmae(&y, &y, 1600.0).unwrap() == 0.0;
    let same = [0.0f64, 1.0, 3.7, 250.0].iter().all(|&x| improvement(x.max(1e-3), x.max(1e-3)).unwrap() == 0.0);

    // k = 0.5 and 2 are exact for any doubles; k = 10 needs exactly representable products
    let scaled = |k: f64, y: &[f64], f: &[f64]| {
        let ky: Vec<f64> = y.iter().map(|v| k * v).collect();
        let kf: Vec<f64> = f.iter().map(|v| k * v).collect();
        mape(&kf, &ky).unwrap()
    };
    let base = mape(&f, &y).unwrap();
    let mut scale = scaled(0.5, &y, &f) == base && scaled(2.0, &y, &f) == base;
    let gy: Vec<f64> = y.iter().map(|v| (v * 8.0).round() / 8.0).collect();
    let gf: Vec<f64> = f.iter().map(|v| (v * 8.0).round() / 8.0).collect();
    let gbase = mape(&gf, &gy).unwrap();
    scale &= [0.5, 2.0, 10.0].iter().all(|&k| scaled(k, &gy, &gf) == gbase);

    let sums = report.map_or(false, |r| r.rank_counts.counts.iter().all(|c| c.iter().sum::<usize>() == r.steps));
    verdict(
        perfect && same && scale && sums,
        format!(
            "perfect -> 0: {perfect}; improvement(x,x) = 0: {same}; scale invariance k in {{0.5,2,10}}: {scale}; rank counts sum to T_test: {sums}"
        ),
    )
}

fn determinism(run: &Run) -> Verdict {
    let read = |name: &str| fs::read(run.path(name)).unwrap_or_default();
    let mut outputs = Vec::new();
    for _ in 0..2 {
        if let Err(e) = run.cmd_dms() {
            return verdict(false, format!("dms failed: {e}"));
        }
        outputs.push((read(SELECTION_LOG_FILE), read(DMS_FORECAST_FILE)));
    }
    let same = !outputs[0].0.is_empty() && outputs[0] == outputs[1];
    verdict(
        same,
        format!(
            "selection log ({} bytes) and forecast ({} bytes) identical across runs: {same}",
            outputs[0].0.len(),
            outputs[0].1.len()
        ),
    )
}

fn main() {
    // `cargo test -- --list` and friends: nothing to enumerate
    if std::env::args().any(|a| a == "--list") {
        return;
    }
    let out = tempfile::tempdir().expect("temp dir");
    let config = RunConfig::parse(
        "[data]\nsource = \"synthetic\"\n",
        &Overrides {
            out: Some(out.path().to_path_buf()),
            ..Default::default()
        },
    )
    .expect("bare config");
    let run = Run::new(config, false);

    let mut results: Vec<(u8, &str, Verdict)> = Vec::new();
    results.push((1, "Q-update arithmetic", q_arithmetic()));
    results.push((2, "epsilon schedule", epsilon_schedule()));
    let started = Instant::now();
    let oracle = oracle_runs();
    let elapsed = started.elapsed();
    results.push((4, "value-iteration oracle", oracle_equivalence(&oracle, elapsed)));
    results.push((5, "Q boundedness", q_bounded(&oracle)));
    results.push((6, "gradient checks", gradient_checks()));
    results.push((7, "convergence behaviour", convergence()));
    let eff = effectiveness(&run);
    results.push((3, "agent count", agent_counts(Some(eff.agents))));
    results.push((9, "metric identities", metric_identities(eff.report.as_ref())));
    results.push((8, "DMS effectiveness", eff.verdict));
    results.push((10, "determinism", determinism(&run)));
    results.sort_by_key(|r| r.0);

    let mut failed = 0;
    for (id, name, v) in &results {
        println!(
            "acceptance {id:>2} {name:<24} {}  {}",
            if v.pass { "PASS" } else { "FAIL" },
            v.detail
        );
        failed += usize::from(!v.pass);
    }
    if failed > 0 {
        println!("{failed} acceptance criteria failed");
        std::process::exit(1);
    }
}
