//! Acceptance run. Prints one PASS/FAIL line per criterion and exits nonzero
//! if any fails. Trains the bundled configs, so build with `--release`:
//!
//!     cargo test -p dsa-core --release --test acceptance

use std::path::PathBuf;
use std::time::{Duration, Instant};

use dsa_core::agents::{myopic_act, Agent, AgentKind};
use dsa_core::channel::{
    achievable_rate, draw_rician, path_loss_db, sigma_squared, FadingField, FadingMode, PropagationParams,
};
use dsa_core::environment::*;
use dsa_core::harness::*;
use dsa_core::neural::{Mlp, MlpConfig};
use dsa_core::reservoir::{readout_gradient, readout_loss, ReadoutSample, ReadoutWeights};
use dsa_core::rng::SimRng;
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};

struct Report {
    failed: usize,
    partition_violations: usize,
    iterations_seen: usize,
}

impl Report {
    fn line(&mut self, id: &str, pass: bool, detail: String) {
        println!("{} {id}: {detail}", if pass { "PASS" } else { "FAIL" });
        if !pass {
            self.failed += 1;
        }
    }

    fn track(&mut self, metrics: &[IterationMetrics]) {
        for m in metrics {
            self.iterations_seen += 1;
            if m
                .per_su
                .iter()
                .chain(std::iter::once(&m.aggregate))
                .any(|r| (r.partition_sum() - 1.0).abs() > 1e-9)
            {
                self.partition_violations += 1;
            }
        }
    }
}

fn config(name: &str) -> ExperimentConfig {
    let path = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../configs").join(name);
    let c = ExperimentConfig::load(&path).unwrap();
    c.validate().unwrap();
    c
}

fn timed(c: &ExperimentConfig) -> (RunResult, Duration) {
    let start = Instant::now();
    let r = run_experiment(c).unwrap();
    (r, start.elapsed())
}

fn tail_mean(metrics: &[IterationMetrics], n: usize, f: impl Fn(&RateSummary) -> f64) -> f64 {
    let tail = &metrics[metrics.len().saturating_sub(n)..];
    tail.iter().map(|m| f(&m.aggregate)).sum::<f64>() / tail.len() as f64
}

fn temporal(report: &mut Report) {
    let c = config("exp3_temporal_1ch.toml");
    let (rc, elapsed) = timed(&c);
    report.track(&rc.metrics);
    let hit = rc
        .metrics
        .iter()
        .find(|m| m.aggregate.success >= 0.60 && m.aggregate.pu_collision <= 0.05)
        .map(|m| m.iteration);
    report.line(
        "C1 dqn_rc success>=0.60 and pu<=0.05 within 200 iterations",
        hit.is_some_and(|i| i < 200),
        format!(
            "first at iteration {hit:?}; last success {:.3} pu {:.3}",
            rc.metrics.last().unwrap().aggregate.success,
            rc.metrics.last().unwrap().aggregate.pu_collision
        ),
    );
    report.line(
        "C1 dqn_rc runtime under 5 minutes",
        elapsed < Duration::from_secs(300),
        format!("{:.1} s", elapsed.as_secs_f64()),
    );

    let mlp = c.with_agent_kind(AgentKind::DqnMlp);
    let (r, _) = timed(&mlp);
    report.track(&r.metrics);
    let success = tail_mean(&r.metrics, 20, |a| a.success);
    let pu = tail_mean(&r.metrics, 20, |a| a.pu_collision);
    report.line(
        "C1 dqn_mlp converges to success 1/3+-0.05 and pu 2/3+-0.05",
        (success - 1.0 / 3.0).abs() <= 0.05 && (pu - 2.0 / 3.0).abs() <= 0.05,
        format!("last-20 mean success {success:.3} pu {pu:.3} (hidden {:?})", mlp.agents[0].hidden_layers),
    );
}

fn coexistence(report: &mut Report) {
    let c = config("exp2_6ch_2su.toml");
    let window = 100;
    let mut runs = Vec::new();
    for kind in [AgentKind::DqnRc, AgentKind::QLearning, AgentKind::Myopic] {
        let (r, elapsed) = timed(&c.with_agent_kind(kind));
        report.track(&r.metrics);
        eprintln!("  {kind}: {:.1} s", elapsed.as_secs_f64());
        runs.push(r.metrics);
    }
    for (kind, m) in [("dqn_rc", &runs[0]), ("q_learning", &runs[1])] {
        let mean = tail_mean(m, window, |a| a.su_collision);
        let max = m[m.len() - window..]
            .iter()
            .map(|x| x.aggregate.su_collision)
            .fold(0.0, f64::max);
        report.line(
            &format!("C2 {kind} su-su collision <= 0.02 after convergence"),
            mean <= 0.02,
            format!("last-{window} mean {mean:.4}, max {max:.4}"),
        );
    }
    let rc_reward = tail_mean(&runs[0], window, |a| a.mean_reward);
    let my_reward = tail_mean(&runs[2], window, |a| a.mean_reward);
    report.line(
        "C2 dqn_rc converged reward exceeds myopic",
        rc_reward > my_reward,
        format!("dqn_rc {rc_reward:.3} vs myopic {my_reward:.3}"),
    );
    let tail: Vec<f64> = runs[2][runs[2].len() - window..]
        .iter()
        .map(|m| m.aggregate.su_collision)
        .collect();
    let mean = tail.iter().sum::<f64>() / tail.len() as f64;
    let std = (tail.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (tail.len() - 1) as f64).sqrt();
    report.line(
        "C2 myopic su-su collision roughly constant (std/mean < 0.3)",
        mean > 0.0 && std / mean < 0.3,
        format!("mean {mean:.4} std {std:.4}"),
    );
}

/// (first iteration reaching 90% of the converged reward, converged reward)
fn convergence(metrics: &[IterationMetrics]) -> (usize, f64) {
    let converged = tail_mean(metrics, (metrics.len() / 10).max(1), |a| a.mean_reward);
    let t90 = metrics
        .iter()
        .position(|m| m.aggregate.mean_reward >= 0.9 * converged)
        .unwrap_or(metrics.len());
    (t90, converged)
}

fn convergence_speed(report: &mut Report) {
    let c = config("exp1_desk_10ch.toml");
    let n_seeds = 5;
    let mut stats = Vec::new();
    for kind in [AgentKind::DqnRc, AgentKind::QLearning, AgentKind::Myopic] {
        let start = Instant::now();
        let runs = sweep(&c.with_agent_kind(kind), n_seeds).unwrap();
        let per_seed: Vec<(usize, f64)> = runs
            .iter()
            .map(|(_, r)| {
                report.track(&r.metrics);
                convergence(&r.metrics)
            })
            .collect();
        let t90 = per_seed.iter().map(|p| p.0 as f64).sum::<f64>() / n_seeds as f64;
        let reward = per_seed.iter().map(|p| p.1).sum::<f64>() / n_seeds as f64;
        eprintln!(
            "  {kind}: t90 {:?} converged {:?} ({:.1} s)",
            per_seed.iter().map(|p| p.0).collect::<Vec<_>>(),
            per_seed.iter().map(|p| (p.1 * 1000.0).round() / 1000.0).collect::<Vec<_>>(),
            start.elapsed().as_secs_f64()
        );
        stats.push((t90, reward));
    }
    let [(rc_t, rc_r), (ql_t, ql_r), (_, my_r)] = [stats[0], stats[1], stats[2]];
    report.line(
        "C3 dqn_rc reaches 90% of converged reward in <= 0.5x q_learning's iterations",
        rc_t <= 0.5 * ql_t,
        format!("mean t90 dqn_rc {rc_t:.1} vs q_learning {ql_t:.1} over {n_seeds} seeds"),
    );
    report.line(
        "C3 converged rewards of dqn_rc and q_learning within 10%",
        (rc_r - ql_r).abs() <= 0.1 * rc_r.abs().max(ql_r.abs()),
        format!("dqn_rc {rc_r:.3} vs q_learning {ql_r:.3}"),
    );
    report.line(
        "C3 both learners exceed myopic converged reward",
        rc_r > my_r && ql_r > my_r,
        format!("dqn_rc {rc_r:.3}, q_learning {ql_r:.3}, myopic {my_r:.3}"),
    );
}

fn properties(report: &mut Report) {
    let p = PropagationParams::default();

    let spots: Vec<f64> = [1.0, 10.0, 100.0].iter().map(|&d| path_loss_db(d, &p).unwrap()).collect();
    report.line(
        "C4a path-loss spot values 41/63.7/86.4 dB",
        spots.iter().zip([41.0, 63.7, 86.4]).all(|(a, b)| (a - b).abs() < 1e-9),
        format!("{spots:?}"),
    );

    let mut rng = SimRng::seed_from_u64(1);
    let n = 1_000_000;
    let mean = (0..n).map(|_| draw_rician(30.0, &p, &mut rng).unwrap().gain()).sum::<f64>() / n as f64;
    let ratio = mean / sigma_squared(30.0, &p).unwrap();
    report.line(
        "C4b Rician mean power within 1% of sigma^2",
        (ratio - 1.0).abs() < 0.01,
        format!("ratio {ratio:.5} over {n} draws"),
    );

    let m = TransitionMatrix::new(0.8, 0.3).unwrap();
    let mut state = ChannelState::Inactive;
    let mut counts = [[0usize; 2]; 2];
    for _ in 0..100_000 {
        let next = m.next(state, &mut rng);
        counts[state.bit() as usize][next.bit() as usize] += 1;
        state = next;
    }
    let f11 = counts[1][1] as f64 / (counts[1][0] + counts[1][1]) as f64;
    let f00 = counts[0][0] as f64 / (counts[0][0] + counts[0][1]) as f64;
    report.line(
        "C4c Markov transition frequencies within 1%",
        (f11 - 0.8).abs() < 0.01 && (f00 - 0.3).abs() < 0.01,
        format!("p11 {f11:.4} (0.8), p00 {f00:.4} (0.3)"),
    );

    let occ = ChannelOccupancy(vec![ChannelState::Inactive, ChannelState::Active]);
    let mut flips = [0usize; 2];
    for _ in 0..100_000 {
        let s = sense_one(&occ, &[0.1, 0.3], &mut rng).unwrap();
        flips[0] += usize::from(s.0[0] != 1);
        flips[1] += usize::from(s.0[1] != 0);
    }
    let (e0, e1) = (flips[0] as f64 / 1e5, flips[1] as f64 / 1e5);
    report.line(
        "C4d sensing flip rates within 1%",
        (e0 - 0.1).abs() < 0.01 && (e1 - 0.3).abs() < 0.01,
        format!("{e0:.4} (0.1), {e1:.4} (0.3)"),
    );

    let mut worst: f64 = 0.0;
    let rel = |fd: f64, an: f64| {
        if (fd - an).abs() < 1e-10 {
            0.0
        } else {
            (fd - an).abs() / fd.abs().max(an.abs())
        }
    };
    for seed in 0..10 {
        let mlp = Mlp::new(&MlpConfig {
            layer_sizes: vec![4, 5, 3],
            seed,
        })
        .unwrap();
        let x: Vec<f64> = (0..4).map(|_| rng.random_range(-1.0..1.0)).collect();
        let (a, target) = (rng.random_range(0..3), rng.random_range(-2.0..2.0));
        let (_, g) = mlp.gradient(&x, a, target).unwrap();
        let h = 1e-6;
        for li in 0..mlp.layers.len() {
            for idx in 0..mlp.layers[li].weights.len() {
                let (mut plus, mut minus) = (mlp.clone(), mlp.clone());
                plus.layers[li].weights[idx] += h;
                minus.layers[li].weights[idx] -= h;
                let fd = (plus.loss(&x, a, target).unwrap() - minus.loss(&x, a, target).unwrap()) / (2.0 * h);
                worst = worst.max(rel(fd, g.layers[li].weights[idx]));
            }
        }
        let batch: Vec<ReadoutSample> = (0..8)
            .map(|_| ReadoutSample {
                features: DVector::from_fn(6, |_, _| rng.random_range(-1.0..1.0)),
                action: rng.random_range(0..3),
                target: rng.random_range(-3.0..3.0),
            })
            .collect();
        let w = ReadoutWeights(DMatrix::from_fn(3, 6, |_, _| rng.random_range(-1.0..1.0)));
        let g = readout_gradient(&batch, &w);
        for i in 0..3 {
            for j in 0..6 {
                let (mut plus, mut minus) = (w.clone(), w.clone());
                plus.0[(i, j)] += 1e-5;
                minus.0[(i, j)] -= 1e-5;
                let fd = (readout_loss(&batch, &plus) - readout_loss(&batch, &minus)) / 2e-5;
                worst = worst.max(rel(fd, g[(i, j)]));
            }
        }
    }
    report.line(
        "C4e MLP and readout gradients match finite differences (rel < 1e-5)",
        worst < 1e-5,
        format!("worst relative error {worst:.2e}"),
    );

    let small = ExperimentConfig::from_toml_str(
        r#"
        seed = 9
        iterations = 3
        slots_per_iteration = 100
        [scenario]
        n_channels = 4
        n_sus = 2
        [[agents]]
        kind = "dqn_rc"
        reservoir = { n_reservoir = 16 }
        "#,
    )
    .unwrap();
    let checksums = |s: &Session| -> Vec<String> {
        s.agents()
            .iter()
            .map(|a| match a {
                Agent::DqnRc(d) => d.pair.eval.reservoir().checksum(),
                _ => unreachable!(),
            })
            .collect()
    };
    let mut session = Session::new(&small).unwrap();
    let before = checksums(&session);
    while !session.is_done() {
        session.step().unwrap();
    }
    report.line(
        "C4f reservoir weights unchanged by training",
        checksums(&session) == before,
        format!("{} agents, {} iterations", before.len(), small.iterations),
    );

    let los = PropagationParams {
        k_factor: f64::INFINITY,
        ..p
    };
    let geom = Geometry {
        su_tx: vec![Point::new(0.0, 0.0), Point::new(60.0, 0.0)],
        su_rx: vec![Point::new(30.0, 0.0), Point::new(60.0, 25.0)],
        pu_tx: vec![Point::new(100.0, 100.0); 2],
        pu_rx: vec![Point::new(120.0, 100.0); 2],
    };
    let occ = ChannelOccupancy(vec![ChannelState::Active, ChannelState::Inactive]);
    let fading = FadingField::new(1, FadingMode::Block);
    let run = |a: [usize; 2]| {
        resolve_actions(&occ, &[Action(a[0]), Action(a[1])], &geom, &los, &TransmitPowers::default(), 2.0, &fading, 0)
            .unwrap()
    };
    let gain = |d: f64| 10f64.powf(-(41.0 + 22.7 * f64::log10(d)) / 10.0);
    let noise = 1e6 * 10f64.powf(-14.7);
    let alone = (1.0 + 20.0 * gain(30.0) / noise).log2();
    let shared = (1.0 + 20.0 * gain(30.0) / (20.0 * gain(30.0) + noise)).log2();
    let (idle, pu, solo, both) = (run([0, 1]), run([1, 0]), run([2, 0]), run([2, 2]));
    let ok = idle[0].reward == 0.0
        && idle[1].reward == -2.0
        && pu[0].warning_received
        && (solo[0].reward - alone).abs() < 1e-9 * alone
        && (both[0].reward - shared).abs() < 1e-9
        && achievable_rate(1.0, &p).unwrap() == 1.0;
    report.line(
        "C4g reward hand cases (idle, PU collision, alone, shared)",
        ok,
        format!("alone {:.4} shared {:.4}", solo[0].reward, both[0].reward),
    );

    let mut mismatches = 0;
    for _ in 0..1000 {
        let n = rng.random_range(1..9);
        let mats: Vec<TransitionMatrix> = (0..n)
            .map(|_| TransitionMatrix::new(rng.random_range(0.0..=1.0), rng.random_range(0.0..=1.0)).unwrap())
            .collect();
        let errs: Vec<f64> = (0..n).map(|_| rng.random_range(0.0..=0.5)).collect();
        let rates: Vec<f64> = (0..n).map(|_| rng.random_range(0.0..10.0)).collect();
        let sensed: Vec<u8> = (0..n).map(|_| rng.random_range(0..2)).collect();
        let scores: Vec<f64> = (0..n)
            .map(|i| {
                let g = if sensed[i] == 1 { 1.0 - errs[i] } else { errs[i] };
                let free = g * mats[i].p11 + (1.0 - g) * mats[i].p01;
                free * rates[i] - (1.0 - free) * 2.0
            })
            .collect();
        let best = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let want = if best <= 1e-12 {
            0
        } else {
            1 + scores.iter().position(|&s| s >= best - 1e-9).unwrap()
        };
        let got = myopic_act(&SensedState(sensed), &mats, &errs, &rates, 2.0, true).unwrap();
        mismatches += usize::from(got.0 != want);
    }
    report.line(
        "C4h myopic choice agrees with brute force on 1000 instances",
        mismatches == 0,
        format!("{mismatches} mismatches"),
    );

    let csv = |c: &ExperimentConfig| {
        let mut buf = Vec::new();
        let mut w = MetricsWriter::new(&mut buf).unwrap();
        for m in run_experiment(c).unwrap().metrics {
            w.write(&m).unwrap();
        }
        w.flush().unwrap();
        drop(w);
        buf
    };
    let identical = [AgentKind::Myopic, AgentKind::QLearning, AgentKind::DqnRc, AgentKind::DqnMlp]
        .iter()
        .all(|&k| {
            let c = small.with_agent_kind(k);
            csv(&c) == csv(&c)
        });
    report.line("C4j bit-identical CSV for repeated seeds", identical, "all four agent kinds".into());
}

fn main() {
    let mut report = Report {
        failed: 0,
        partition_violations: 0,
        iterations_seen: 0,
    };
    let start = Instant::now();
    properties(&mut report);
    temporal(&mut report);
    coexistence(&mut report);
    convergence_speed(&mut report);
    let (violations, seen) = (report.partition_violations, report.iterations_seen);
    report.line(
        "C4i metrics partition holds on every iteration of every run",
        violations == 0 && seen > 0,
        format!("{violations} violations in {seen} iterations"),
    );
    println!(
        "{} criteria failed ({:.0} s total)",
        report.failed,
        start.elapsed().as_secs_f64()
    );
    if report.failed > 0 {
        std::process::exit(1);
    }
}
