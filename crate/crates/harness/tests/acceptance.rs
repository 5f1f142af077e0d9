//! Release acceptance suite. Each numbered criterion prints exactly one
//! PASS/FAIL line on stdout and the process exits non-zero if any fails.
//! Progress chatter goes to stderr.
//!
//! Criteria 4 and 5 train the full benchmark (four learner variants, three
//! seeds each, 500 episodes per run) and take roughly half an hour on one
//! CPU; everything else finishes in about a minute.

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::process::ExitCode;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use flowsafe_core::agents::{gradcheck, FlowPolicy, SquashKind};
use flowsafe_core::diffcore::Activation;
use flowsafe_core::flows::{ConvexRegion, FlowChain, FlowStep, LowerTriangular};
use flowsafe_core::world::{battery_region, obstacle_region, BatteryRule, WorldLayout};
use flowsafe_harness::metrics::{read_metrics, EpisodeRecord};
use flowsafe_harness::{train, ExperimentConfig};

type Outcome = Result<String, String>;

fn run(name: &str, f: impl FnOnce() -> Outcome) -> (String, Outcome) {
    eprintln!("[acceptance] checking {name} ...");
    let started = Instant::now();
    let outcome = match catch_unwind(AssertUnwindSafe(f)) {
        Ok(r) => r,
        Err(p) => {
            let msg = p
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| p.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "panicked".into());
            Err(format!("panicked: {msg}"))
        }
    };
    eprintln!("[acceptance]   done in {:.1}s", started.elapsed().as_secs_f64());
    (name.to_string(), outcome)
}

fn main() -> ExitCode {
    let tmp = tempfile::tempdir().expect("temp dir for training artifacts");
    let mut results = Vec::new();

    results.push(run(
        "criterion 1 (squash correctness: inversion, log-det, membership)",
        criterion_1,
    ));
    results.push(run(
        "criterion 2 (policy density normalization and histogram agreement)",
        criterion_2,
    ));
    results.push(run("criterion 3 (gradient integrity)", criterion_3));

    let bench = catch_unwind(AssertUnwindSafe(|| run_benchmark(tmp.path())))
        .unwrap_or_else(|_| Err("benchmark training panicked".into()));
    results.push(run("criterion 4 (constrained runs never violate)", || {
        criterion_4(&bench)
    }));
    results.push(run("criterion 5 (baseline behavior and return parity)", || {
        criterion_5(&bench)
    }));

    results.push(run(
        "criterion 6 (disjoint regions: last squash wins)",
        criterion_6,
    ));
    results.push(run("criterion 7 (squash order changes outputs)", criterion_7));
    results.push(run("criterion 8 (byte-for-byte run determinism)", || {
        criterion_8(tmp.path())
    }));

    let mut failures = 0;
    for (name, outcome) in &results {
        match outcome {
            Ok(detail) => println!("PASS {name}: {detail}"),
            Err(reason) => {
                failures += 1;
                println!("FAIL {name}: {reason}");
            }
        }
    }
    println!(
        "acceptance: {}/{} criteria passed",
        results.len() - failures,
        results.len()
    );
    if failures == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}

// ---------------------------------------------------------------------------
// Criterion 1: every squash family, 1000 randomized (region, point) pairs:
// forward then inverse returns the point to 1e-9 in max-norm for inputs with
// max-norm at most 4; the analytic log-det matches a central-difference
// Jacobian determinant to 1e-5; the forward image lies strictly inside the
// region.
// ---------------------------------------------------------------------------

fn random_region(kind: usize, rng: &mut ChaCha8Rng) -> ConvexRegion<f64> {
    match kind {
        0 => {
            let low = [rng.random_range(-3.0..0.0), rng.random_range(-3.0..0.0)];
            let high = [
                low[0] + rng.random_range(0.5..4.0),
                low[1] + rng.random_range(0.5..4.0),
            ];
            ConvexRegion::box_region(low.to_vec(), high.to_vec()).unwrap()
        }
        1 => {
            let center = vec![rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0)];
            ConvexRegion::ball(center, rng.random_range(0.3..2.5)).unwrap()
        }
        _ => {
            let center = vec![rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0)];
            let scale = LowerTriangular::new(
                2,
                vec![
                    rng.random_range(0.4..2.0),
                    rng.random_range(-1.0..1.0),
                    rng.random_range(0.4..2.0),
                ],
            )
            .unwrap();
            ConvexRegion::ellipsoid(center, scale).unwrap()
        }
    }
}

fn fd_log_det(step: &FlowStep<f64>, x: &[f64; 2]) -> f64 {
    let h = 1e-6;
    let mut jac = [[0.0f64; 2]; 2];
    for j in 0..2 {
        let mut xp = *x;
        let mut xm = *x;
        xp[j] += h;
        xm[j] -= h;
        let fp = step.forward(&xp).unwrap();
        let fm = step.forward(&xm).unwrap();
        for i in 0..2 {
            jac[i][j] = (fp[i] - fm[i]) / (2.0 * h);
        }
    }
    (jac[0][0] * jac[1][1] - jac[0][1] * jac[1][0]).abs().ln()
}

fn criterion_1() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(0xF10);
    let mut worst_rt = 0.0f64;
    let mut worst_ld = 0.0f64;
    for (kind, name) in [(0, "box"), (1, "ball"), (2, "ellipsoid")] {
        for trial in 0..1000 {
            let region = random_region(kind, &mut rng);
            let step = FlowStep::new(region.clone());
            let u = [rng.random_range(-4.0..4.0), rng.random_range(-4.0..4.0)];

            let y = step
                .forward(&u)
                .map_err(|e| format!("{name} trial {trial}: forward failed: {e}"))?;
            if !region.contains(&y) {
                return Err(format!(
                    "{name} trial {trial}: output {y:?} not strictly inside the region"
                ));
            }

            let back = step
                .inverse(&y)
                .map_err(|e| format!("{name} trial {trial}: inverse failed: {e}"))?;
            let rt = (back[0] - u[0]).abs().max((back[1] - u[1]).abs());
            worst_rt = worst_rt.max(rt);
            if rt > 1e-9 {
                return Err(format!(
                    "{name} trial {trial}: round-trip error {rt:.3e} > 1e-9 at {u:?}"
                ));
            }

            let ld = step.log_det(&u).unwrap();
            let gap = (ld - fd_log_det(&step, &u)).abs();
            worst_ld = worst_ld.max(gap);
            if gap > 1e-5 {
                return Err(format!(
                    "{name} trial {trial}: log-det gap {gap:.3e} > 1e-5 at {u:?}"
                ));
            }
        }
    }
    Ok(format!(
        "3 families x 1000 pairs: worst round-trip {worst_rt:.2e} (<= 1e-9), \
         worst log-det gap {worst_ld:.2e} (<= 1e-5), all outputs interior"
    ))
}

// ---------------------------------------------------------------------------
// Criterion 2: for 20 randomized states, the squash-constrained policy
// density integrates to 1 +/- 0.02 on a 400x400 grid over the final region,
// and a 10^6-sample histogram on 100^2 bins matches the density with total
// variation distance at most 0.02.
// ---------------------------------------------------------------------------

/// Pin the policy's log-sigma outputs to a constant: zero the output rows
/// and set their biases. Keeps the randomized mean head while giving the
/// histogram comparison a known noise floor.
fn pin_sigma(policy: &mut FlowPolicy<f64>, sigma: f64) {
    let mut flat = policy.head().flat_params();
    let n = flat.len();
    // Width-16 head over 5 inputs and 4 outputs: the output layer holds the
    // final 16*4 weights and 4 biases.
    assert_eq!(n, 436, "criterion 2 expects a [5, 16, 16, 4] head");
    let w2 = n - 68;
    for v in &mut flat[w2 + 32..w2 + 64] {
        *v = 0.0;
    }
    flat[n - 2] = sigma.ln();
    flat[n - 1] = sigma.ln();
    policy.head_mut().set_flat_params(&flat).unwrap();
}

fn random_state(rng: &mut ChaCha8Rng, layout: &WorldLayout<f64>, rule: &BatteryRule<f64>) -> [f64; 5] {
    let m = layout.margin;
    let point = |rng: &mut ChaCha8Rng| loop {
        let p = [
            rng.random_range(layout.arena.low[0] + m..layout.arena.high[0] - m),
            rng.random_range(layout.arena.low[1] + m..layout.arena.high[1] - m),
        ];
        if layout.position_ok(&p) {
            return p;
        }
    };
    let p = point(rng);
    let g = point(rng);
    let battery = rng.random_range(0.0..rule.capacity);
    [p[0], p[1], battery, g[0], g[1]]
}

fn criterion_2() -> Outcome {
    const GRID: usize = 400;
    const BINS: usize = 100;
    const SAMPLES: usize = 1_000_000;
    const SUB: usize = GRID / BINS;

    let layout = WorldLayout::<f64>::nav_default();
    let rule = BatteryRule::nav_default();
    let mut rng = ChaCha8Rng::seed_from_u64(0xACC2);
    let mut policy = FlowPolicy::new(
        SquashKind::Constrained,
        layout.clone(),
        rule,
        16,
        Activation::Tanh,
        &mut rng,
    );
    pin_sigma(&mut policy, 0.2);

    let mut worst_integral = 0.0f64;
    let mut worst_tv = 0.0f64;
    for state_idx in 0..20 {
        let obs = random_state(&mut rng, &layout, &rule);
        let chain = policy.chain(&obs);
        let (lo, hi) = chain.final_region().unwrap().bounding_box();
        let (dx, dy) = (
            (hi[0] - lo[0]) / GRID as f64,
            (hi[1] - lo[1]) / GRID as f64,
        );

        let mut dens = vec![0.0f64; GRID * GRID];
        let mut mass = 0.0;
        for iy in 0..GRID {
            let y = lo[1] + (iy as f64 + 0.5) * dy;
            for ix in 0..GRID {
                let x = lo[0] + (ix as f64 + 0.5) * dx;
                let p = policy.density(&obs, &[x, y]);
                dens[iy * GRID + ix] = p;
                mass += p;
            }
        }
        let integral = mass * dx * dy;
        worst_integral = worst_integral.max((integral - 1.0).abs());
        if (integral - 1.0).abs() > 0.02 {
            return Err(format!(
                "state {state_idx}: density integrates to {integral:.4} (off by more than 0.02)"
            ));
        }

        // Bin masses from the same grid: each histogram bin covers a 4x4
        // block of density cells.
        let mut q = vec![0.0f64; BINS * BINS];
        for by in 0..BINS {
            for bx in 0..BINS {
                let mut s = 0.0;
                for sy in 0..SUB {
                    for sx in 0..SUB {
                        s += dens[(by * SUB + sy) * GRID + bx * SUB + sx];
                    }
                }
                q[by * BINS + bx] = s * dx * dy;
            }
        }

        let mut counts = vec![0u32; BINS * BINS];
        for _ in 0..SAMPLES {
            let (a, _) = policy.sample_action(&obs, &mut rng);
            let bx = (((a[0] - lo[0]) / (hi[0] - lo[0])) * BINS as f64) as usize;
            let by = (((a[1] - lo[1]) / (hi[1] - lo[1])) * BINS as f64) as usize;
            counts[by.min(BINS - 1) * BINS + bx.min(BINS - 1)] += 1;
        }
        let tv = 0.5
            * q.iter()
                .zip(&counts)
                .map(|(qi, &c)| (qi - c as f64 / SAMPLES as f64).abs())
                .sum::<f64>();
        worst_tv = worst_tv.max(tv);
        if tv > 0.02 {
            return Err(format!(
                "state {state_idx}: histogram/density total variation {tv:.4} > 0.02"
            ));
        }
    }
    Ok(format!(
        "20 states: worst |integral - 1| {worst_integral:.4} (<= 0.02), \
         worst TV {worst_tv:.4} (<= 0.02)"
    ))
}

// ---------------------------------------------------------------------------
// Criterion 3: actor, critic, and temperature gradients match fourth-order
// central differences to relative error 1e-4 on randomized width-8 networks.
// ---------------------------------------------------------------------------

fn criterion_3() -> Outcome {
    let mut worst = (0.0f64, "");
    for seed in [11, 12, 13] {
        for (err, what) in [
            (gradcheck::critic_gradient_error(seed), "critic"),
            (gradcheck::actor_gradient_error(seed), "actor"),
            (gradcheck::alpha_gradient_error(seed), "temperature"),
        ] {
            if err > worst.0 {
                worst = (err, what);
            }
            if err > 1e-4 {
                return Err(format!(
                    "{what} gradient relative error {err:.3e} > 1e-4 (seed {seed})"
                ));
            }
        }
    }
    Ok(format!(
        "3 seeds: worst relative error {:.2e} ({}) (<= 1e-4)",
        worst.0, worst.1
    ))
}

// ---------------------------------------------------------------------------
// Criteria 4 and 5 share one benchmark: four variants x three seeds x 500
// episodes with the default configuration.
// ---------------------------------------------------------------------------

struct Bench {
    elapsed_secs: f64,
    /// variant name -> per-seed episode records.
    curves: Vec<(&'static str, Vec<Vec<EpisodeRecord>>)>,
}

fn run_benchmark(dir: &Path) -> Result<Bench, String> {
    let t0 = Instant::now();
    let mut curves = Vec::new();
    for variant in ["constrained", "unconstrained", "penalty", "lagrangian"] {
        let config = ExperimentConfig::parse(&format!(
            "[experiment]\nvariant = \"{variant}\"\nout_dir = {:?}\n",
            dir.join(variant)
        ))
        .map_err(|e| e.to_string())?;
        let mut per_seed = Vec::new();
        for &seed in &config.experiment.seeds.clone() {
            eprintln!("[acceptance] training {variant} seed {seed} ...");
            let outcome = train::train(&config, seed).map_err(|e| e.to_string())?;
            eprintln!(
                "[acceptance]   {:.0}s, last-tenth mean return {:.1}, violations {}+{}",
                outcome.wall_seconds,
                outcome.mean_return_last_tenth,
                outcome.total_violations_obstacle,
                outcome.total_violations_battery
            );
            per_seed.push(read_metrics(&outcome.metrics_path).map_err(|e| e.to_string())?);
        }
        curves.push((variant, per_seed));
    }
    Ok(Bench {
        elapsed_secs: t0.elapsed().as_secs_f64(),
        curves,
    })
}

fn variant_curves<'a>(bench: &'a Bench, name: &str) -> &'a [Vec<EpisodeRecord>] {
    &bench
        .curves
        .iter()
        .find(|(n, _)| *n == name)
        .expect("variant trained")
        .1
}

fn mean_return(runs: &[Vec<EpisodeRecord>], range: std::ops::Range<usize>) -> f64 {
    let n = (runs.len() * range.len()) as f64;
    runs.iter()
        .map(|r| r[range.clone()].iter().map(|e| e.ret).sum::<f64>())
        .sum::<f64>()
        / n
}

fn mean_violations(runs: &[Vec<EpisodeRecord>], range: std::ops::Range<usize>) -> f64 {
    let n = (runs.len() * range.len()) as f64;
    runs.iter()
        .map(|r| {
            r[range.clone()]
                .iter()
                .map(|e| (e.violations_obstacle + e.violations_battery) as f64)
                .sum::<f64>()
        })
        .sum::<f64>()
        / n
}

fn criterion_4(bench: &Result<Bench, String>) -> Outcome {
    let bench = bench.as_ref().map_err(|e| format!("benchmark failed: {e}"))?;
    let runs = variant_curves(bench, "constrained");
    let mut episodes = 0usize;
    for (seed, run) in runs.iter().enumerate() {
        for r in run {
            episodes += 1;
            if r.violations_obstacle != 0 || r.violations_battery != 0 {
                return Err(format!(
                    "seed {seed} episode {}: {} obstacle + {} battery violations (must be 0)",
                    r.episode, r.violations_obstacle, r.violations_battery
                ));
            }
        }
    }
    Ok(format!(
        "{} runs, {episodes} episodes: 0 obstacle and 0 battery violations everywhere",
        runs.len()
    ))
}

fn criterion_5(bench: &Result<Bench, String>) -> Outcome {
    let bench = bench.as_ref().map_err(|e| format!("benchmark failed: {e}"))?;
    let episodes = variant_curves(bench, "constrained")[0].len();
    let w = episodes.div_ceil(10);
    let first = 0..w;
    let last = episodes - w..episodes;

    let unc = variant_curves(bench, "unconstrained");
    let unc_first_viol = mean_violations(unc, first.clone());
    if unc_first_viol <= 0.0 {
        return Err(format!(
            "unconstrained agent shows no violations in its first {w} episodes; \
             the benchmark is not exercising the constraints"
        ));
    }

    let mut trend = Vec::new();
    for name in ["penalty", "lagrangian"] {
        let runs = variant_curves(bench, name);
        let f = mean_violations(runs, first.clone());
        let l = mean_violations(runs, last.clone());
        trend.push(format!("{name} {f:.2}->{l:.2}"));
        if l >= f {
            return Err(format!(
                "{name} violations did not fall: first-tenth mean {f:.3}, last-tenth mean {l:.3}"
            ));
        }
    }

    let con_ret = mean_return(variant_curves(bench, "constrained"), last.clone());
    let pen_ret = mean_return(variant_curves(bench, "penalty"), last.clone());
    let unc_ret = mean_return(unc, last);
    if con_ret < pen_ret {
        return Err(format!(
            "constrained last-tenth return {con_ret:.2} below penalty's {pen_ret:.2}"
        ));
    }
    let slack = 0.15 * unc_ret.abs().max(1.0);
    if con_ret < unc_ret - slack {
        return Err(format!(
            "constrained last-tenth return {con_ret:.2} more than 15% below \
             unconstrained's {unc_ret:.2}"
        ));
    }
    if bench.elapsed_secs > 3600.0 {
        return Err(format!(
            "benchmark took {:.0}s (> 3600s budget)",
            bench.elapsed_secs
        ));
    }

    Ok(format!(
        "unconstrained first-tenth violations {unc_first_viol:.2}/ep; {}; \
         returns: constrained {con_ret:.1} >= penalty {pen_ret:.1} and within \
         15% of unconstrained {unc_ret:.1}; total {:.0}s <= 3600s",
        trend.join(", "),
        bench.elapsed_secs
    ))
}

// ---------------------------------------------------------------------------
// Criterion 6: a staged state where the battery ball and the obstacle box
// are disjoint. Every sampled action must satisfy the obstacle constraint
// (the final squash) and violate the battery region.
// ---------------------------------------------------------------------------

/// One distant station east of an agent standing west of the obstacle with a
/// nearly drained battery: the charging pull aims into territory the
/// obstacle squash forbids.
fn staged_disjoint() -> (WorldLayout<f64>, BatteryRule<f64>, [f64; 5]) {
    let layout = WorldLayout {
        stations: vec![[5.0, 0.0]],
        ..WorldLayout::nav_default()
    };
    let rule = BatteryRule::nav_default();
    let obs = [-1.5, 0.0, 20.0, 4.0, 4.0];
    (layout, rule, obs)
}

fn criterion_6() -> Outcome {
    let (layout, rule, obs) = staged_disjoint();
    let p = [obs[0], obs[1]];
    let ball = battery_region(&p, obs[2], &layout, &rule);
    let obox = obstacle_region(&p, &layout);

    // The staging must actually separate the regions; compare bounds.
    let (bl, bh) = ball.bounding_box();
    let (ol, oh) = obox.bounding_box();
    let disjoint = bh[0] < ol[0] || oh[0] < bl[0] || bh[1] < ol[1] || oh[1] < bl[1];
    if !disjoint {
        return Err(format!(
            "staging error: regions overlap (ball x [{:.3}, {:.3}], box x [{:.3}, {:.3}])",
            bl[0], bh[0], ol[0], oh[0]
        ));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(0xD15);
    let policy = FlowPolicy::new(
        SquashKind::Constrained,
        layout.clone(),
        rule,
        16,
        Activation::Tanh,
        &mut rng,
    );
    for trial in 0..10_000 {
        let (a, _) = policy.sample_action(&obs, &mut rng);
        if !obox.contains(&a) {
            return Err(format!(
                "sample {trial}: action {a:?} escaped the obstacle region"
            ));
        }
        if ball.contains(&a) {
            return Err(format!(
                "sample {trial}: action {a:?} landed in the battery region, \
                 which is unreachable past the final squash"
            ));
        }
    }
    Ok(format!(
        "10000 samples: all inside the obstacle box (x <= {:.3}), none inside \
         the battery ball (x >= {:.3})",
        oh[0], bl[0]
    ))
}

// ---------------------------------------------------------------------------
// Criterion 7: squash order is not interchangeable. At the staged state the
// two orderings send the same base point to outputs more than 1e-3 apart.
// ---------------------------------------------------------------------------

fn criterion_7() -> Outcome {
    let (layout, rule, obs) = staged_disjoint();
    let p = [obs[0], obs[1]];
    let u = [2.0, 0.0];

    let chain = |first: FlowStep<f64>, second: FlowStep<f64>| {
        FlowChain::new(vec![first, second]).expect("2d steps chain")
    };
    let battery_then_obstacle = chain(
        FlowStep::new(battery_region(&p, obs[2], &layout, &rule)),
        FlowStep::new(obstacle_region(&p, &layout)),
    );
    let obstacle_then_battery = chain(
        FlowStep::new(obstacle_region(&p, &layout)),
        FlowStep::new(battery_region(&p, obs[2], &layout, &rule)),
    );

    let (y1, _) = battery_then_obstacle.forward(&u).unwrap();
    let (y2, _) = obstacle_then_battery.forward(&u).unwrap();
    let diff = (y1[0] - y2[0]).abs().max((y1[1] - y2[1]).abs());
    if diff <= 1e-3 {
        return Err(format!(
            "orderings agree to {diff:.2e} at u = {u:?}; expected a gap > 1e-3"
        ));
    }
    Ok(format!(
        "u = {u:?}: battery-then-obstacle gives ({:.4}, {:.4}), obstacle-then-battery \
         gives ({:.4}, {:.4}); max-norm gap {diff:.3}",
        y1[0], y1[1], y2[0], y2[1]
    ))
}

// ---------------------------------------------------------------------------
// Criterion 8: identical config and seed reproduce the metrics CSV
// byte-for-byte across two separate training runs.
// ---------------------------------------------------------------------------

fn criterion_8(dir: &Path) -> Outcome {
    let out = dir.join("determinism");
    let config = ExperimentConfig::parse(&format!(
        "[experiment]\nvariant = \"lagrangian\"\nseeds = [0]\nepisodes = 30\nout_dir = {out:?}\n"
    ))
    .map_err(|e| e.to_string())?;
    train::train(&config, 0).map_err(|e| e.to_string())?;
    let path = out.join("lagrangian_seed0.csv");
    let first = std::fs::read(&path).map_err(|e| e.to_string())?;
    train::train(&config, 0).map_err(|e| e.to_string())?;
    let second = std::fs::read(&path).map_err(|e| e.to_string())?;
    if first != second {
        let byte = first
            .iter()
            .zip(&second)
            .position(|(a, b)| a != b)
            .unwrap_or(first.len().min(second.len()));
        return Err(format!(
            "metrics CSVs differ (first mismatch at byte {byte} of {})",
            first.len()
        ));
    }
    Ok(format!(
        "30-episode run reproduced byte-for-byte ({} bytes of metrics)",
        first.len()
    ))
}
