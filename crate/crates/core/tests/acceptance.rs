//! Acceptance suite. Runs without the libtest harness so that every
//! criterion prints exactly one PASS/FAIL line; exits nonzero if any fails.

use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use spanvi::analysis::{
    check_ergodic, corollary_iteration_bound, estimate_rate_with_floor, lock_in_index,
    theorem1_constants, theorem2_constants, verify_lemma2, verify_sandwich, verify_theorem1,
    verify_theorem2, verify_theorem3, wielandt_bound, CheckReport, CheckStatus, TheoremConstants,
};
use spanvi::analysis::rate::NOISE_FLOOR_EPS;
use spanvi::generators::{random_ergodic_instance, round_robin_schedule, tight_gamma_mdp, GeneratorSpec};
use spanvi::oracle::exact_optimal;
use spanvi::solvers::extrapolate_optimal_values;
use spanvi::{
    is_eps_optimal, policy_evaluation_average, stopping_threshold, vi_async_lr, vi_sync,
    vi_sync_lr, DiscountSpec, Mdp, OptimalSolution, SolveTrace, SolverConfig,
};

const GAMMAS: [f64; 3] = [0.9, 0.99, 0.999];
const SEEDS: u64 = 20;
const ALPHAS: [f64; 3] = [0.3, 0.5, 0.8];

struct Fixture {
    label: String,
    mdp: Mdp,
    spec: DiscountSpec,
    optimum: OptimalSolution,
    constants: TheoremConstants,
}

impl Fixture {
    fn new(label: String, gen: &GeneratorSpec, spec: DiscountSpec) -> Fixture {
        let inst = random_ergodic_instance(gen, spec).expect("fixture generation");
        let constants = theorem1_constants(&inst.mdp, spec, &inst.optimum).expect("certificate");
        Fixture {
            label,
            mdp: inst.mdp,
            spec,
            optimum: inst.optimum,
            constants,
        }
    }

    fn sync_to(&self, h: f64) -> SolveTrace {
        let cfg = SolverConfig::sync(self.spec, h)
            .unwrap()
            .with_reference(self.optimum.values.clone());
        vi_sync(&self.mdp, &cfg).unwrap()
    }
}

fn discounted_suite() -> Vec<Fixture> {
    GAMMAS
        .iter()
        .flat_map(|&g| {
            (0..SEEDS).map(move |seed| {
                Fixture::new(
                    format!("gamma={g} seed={seed}"),
                    &GeneratorSpec::new(10, 4, seed),
                    DiscountSpec::discounted(g).unwrap(),
                )
            })
        })
        .collect()
}

fn average_suite() -> Vec<Fixture> {
    (0..SEEDS)
        .map(|seed| {
            let n = 3 + (seed as usize % 4);
            let m = 2 + (seed as usize % 2);
            Fixture::new(
                format!("average n={n} m={m} seed={seed}"),
                &GeneratorSpec::new(n, m, 100 + seed),
                DiscountSpec::Average,
            )
        })
        .collect()
}

/// Outcome of one criterion.
struct Outcome {
    failures: Vec<String>,
    summary: String,
}

impl Outcome {
    fn new() -> Self {
        Outcome { failures: Vec::new(), summary: String::new() }
    }

    fn fail(&mut self, msg: String) {
        self.failures.push(msg);
    }

    fn report(&mut self, label: &str, r: &CheckReport) {
        if !r.ok() {
            self.fail(format!(
                "{label}: {} failed, {} of {} windows, max excess {:e}",
                r.check, r.violations, r.windows, r.max_violation
            ));
        }
    }
}

fn criterion1(suite: &[Fixture], start: Instant) -> Outcome {
    let mut out = Outcome::new();
    let mut worst_margin = f64::INFINITY;
    let mut worst_r2: f64 = 1.0;
    for f in suite {
        let trace = f.sync_to(1e-10);
        let errors = trace.error_spans().unwrap();
        let lock = lock_in_index(&errors, &f.constants).unwrap_or(errors.len());
        let diffs = trace.diff_spans();
        if lock >= diffs.len() {
            out.fail(format!("{}: no post-lock-in steps", f.label));
            continue;
        }
        let scale = diffs[lock].max(f.optimum.values.sup_norm());
        match estimate_rate_with_floor(&diffs[lock..], 0, NOISE_FLOOR_EPS * scale) {
            Ok(est) => {
                let gamma = f.spec.gamma();
                worst_margin = worst_margin.min(gamma - est.rate);
                worst_r2 = worst_r2.min(est.fit_r2);
                if est.fit_r2 < 0.99 || est.rate > gamma - 1e-4 {
                    out.fail(format!(
                        "{}: rate {:.6} r2 {:.5} over {} points",
                        f.label,
                        est.rate,
                        est.fit_r2,
                        est.last + 1
                    ));
                }
            }
            Err(e) => out.fail(format!("{}: {e}", f.label)),
        }
    }
    let elapsed = start.elapsed().as_secs_f64();
    if elapsed > 30.0 {
        out.fail(format!("runtime {elapsed:.1} s exceeds 30 s"));
    }
    out.summary = format!(
        "{} runs; min (gamma - rate) {worst_margin:.4}; min r2 {worst_r2:.5}; {elapsed:.2} s since start",
        suite.len()
    );
    out
}

fn criterion2(suite: &[Fixture]) -> Outcome {
    let mut out = Outcome::new();
    let mut windows = 0;
    for f in suite {
        let trace = f.sync_to(1e-10);
        for r in verify_theorem1(&trace, &f.constants) {
            if r.check == "theorem1_window" {
                windows += r.windows;
                if r.status != CheckStatus::Pass {
                    out.fail(format!("{}: {:?} {}", f.label, r.status, r.detail));
                }
            }
        }
    }
    out.summary = format!("{windows} post-lock-in windows");
    out
}

fn criterion3() -> Outcome {
    let mut out = Outcome::new();
    let mdp = tight_gamma_mdp(4, 0.9).unwrap();
    let spec = mdp.discount();
    let optimum = exact_optimal(&mdp, spec).unwrap();
    // closed form V*(s) = s / (1 - gamma)
    for s in 0..4 {
        if (optimum.values[s] - s as f64 / 0.1).abs() > 1e-12 {
            out.fail(format!("oracle V*({s}) = {}", optimum.values[s]));
        }
    }
    let cfg = SolverConfig::sync(spec, 1e-6).unwrap().with_reference(optimum.values.clone());
    let trace = vi_sync(&mdp, &cfg).unwrap();
    let spans = trace.error_spans().unwrap();
    let mut worst: f64 = 0.0;
    for w in spans.windows(2) {
        worst = worst.max((w[1] / w[0] - 0.9).abs());
    }
    if worst > 1e-6 {
        out.fail(format!("max |ratio - 0.9| = {worst:e}"));
    }
    let cert = spanvi::analysis::certify(&mdp, spec, &optimum);
    if cert.assumptions.ergodic.is_ergodic || cert.constants.is_some() {
        out.fail("certificate should report the ergodicity violation".into());
    }
    out.summary = format!("{} steps; max |ratio - 0.9| = {worst:.2e}", spans.len() - 1);
    out
}

fn criterion4(suite: &[Fixture], average: &[Fixture]) -> Outcome {
    let mut out = Outcome::new();
    let mut steps = 0;
    for f in suite {
        let mut traces = vec![f.sync_to(1e-10)];
        for &alpha in &ALPHAS {
            let cfg = SolverConfig::sync_lr(f.spec, alpha, 1e-10)
                .unwrap()
                .with_reference(f.optimum.values.clone());
            traces.push(vi_sync_lr(&f.mdp, &cfg).unwrap());
        }
        for t in &traces {
            let r = verify_lemma2(t);
            steps += r.windows;
            out.report(&format!("{} {}", f.label, t.variant), &r);
        }
    }
    for f in average {
        let r = verify_lemma2(&f.sync_to(1e-10));
        steps += r.windows;
        out.report(&f.label, &r);
    }
    out.summary = format!("{steps} steps");
    out
}

fn criterion5(suite: &[Fixture], average: &[Fixture]) -> Outcome {
    let mut out = Outcome::new();
    let mut checks = 0;
    for f in suite.iter().chain(average) {
        let r = verify_sandwich(&f.mdp, &f.sync_to(1e-10), &f.optimum);
        checks += r.windows;
        out.report(&f.label, &r);
    }
    out.summary = format!("{checks} elementwise inequalities");
    out
}

fn criterion6(suite: &[Fixture]) -> Outcome {
    let mut out = Outcome::new();
    let mut worst_use: f64 = 0.0;
    for f in suite {
        for eps in [1e-2, 1e-4] {
            let h = stopping_threshold(f.spec, eps).unwrap();
            let trace = f.sync_to(h);
            if !trace.converged() {
                out.fail(format!("{} eps={eps}: did not stop", f.label));
                continue;
            }
            if !is_eps_optimal(&f.mdp, &trace.policy, f.spec, eps, &f.optimum).unwrap() {
                out.fail(format!("{} eps={eps}: policy not eps-optimal", f.label));
            }
            let e0 = trace.error_spans().unwrap()[0];
            let bound = corollary_iteration_bound(f.spec, eps, e0, &f.constants)
                + f.constants.n_mix as f64;
            let used = trace.iterations() as f64;
            worst_use = worst_use.max(used / bound);
            if used > bound {
                out.fail(format!("{} eps={eps}: {used} iterations > bound {bound}", f.label));
            }
        }
    }
    out.summary = format!(
        "{} solves; max iterations / bound = {worst_use:.3}",
        2 * suite.len()
    );
    out
}

fn average_gain_ok(out: &mut Outcome, f: &Fixture, trace: &SolveTrace, eps: f64, tag: &str) {
    let best = f.optimum.gain.unwrap();
    match policy_evaluation_average(&f.mdp, &trace.policy) {
        Ok((gain, _)) if best - gain <= eps => {}
        Ok((gain, _)) => out.fail(format!("{} {tag}: gain {gain} vs optimum {best}", f.label)),
        Err(e) => out.fail(format!("{} {tag}: {e}", f.label)),
    }
}

fn criterion7(average: &[Fixture]) -> Outcome {
    let mut out = Outcome::new();
    for f in average {
        for eps in [1e-2, 1e-3] {
            let h = stopping_threshold(f.spec, eps).unwrap();
            let trace = f.sync_to(h);
            if !trace.converged() {
                out.fail(format!("{} eps={eps}: did not stop", f.label));
                continue;
            }
            average_gain_ok(&mut out, f, &trace, eps, &format!("eps={eps}"));
        }
    }
    out.summary = format!("{} solves", 2 * average.len());
    out
}

fn criterion8(suite: &[Fixture]) -> Outcome {
    let mut out = Outcome::new();
    let (mut windows, mut vacuous, mut checked) = (0, 0, 0);
    for f in suite {
        for &alpha in &ALPHAS {
            let c = theorem2_constants(alpha, &f.constants).unwrap();
            let cfg = SolverConfig::sync_lr(f.spec, alpha, 1e-10)
                .unwrap()
                .with_reference(f.optimum.values.clone());
            let trace = vi_sync_lr(&f.mdp, &cfg).unwrap();
            let r = verify_theorem2(&trace, &c);
            match r.status {
                CheckStatus::Pass => {
                    checked += 1;
                    windows += r.windows;
                }
                CheckStatus::NotApplicable if c.alpha.as_ref().unwrap().vacuous => {
                    vacuous += 1;
                    println!("    vacuous: {} alpha={alpha}: {}", f.label, r.detail);
                }
                _ => out.fail(format!("{} alpha={alpha}: {:?} {}", f.label, r.status, r.detail)),
            }
        }
    }
    out.summary = format!("{checked} certified runs, {windows} windows; {vacuous} vacuous certificates reported");
    out
}

/// Async round-robin run on an average-criterion instance: the Theorem 3
/// report and the output gain shortfall.
fn async_average(mdp: &Mdp, optimum: &OptimalSolution, c: &TheoremConstants, eps: f64) -> Result<(CheckReport, f64), String> {
    let n = mdp.n_states();
    let alpha = c.alpha.as_ref().unwrap().alpha;
    let cfg = SolverConfig::async_lr(DiscountSpec::Average, alpha, eps)
        .unwrap()
        .with_reference(optimum.values.clone());
    let trace = vi_async_lr(mdp, &cfg, &round_robin_schedule(n, n).unwrap()).unwrap();
    if !trace.converged() {
        return Err("did not stop".into());
    }
    let (gain, _) = policy_evaluation_average(mdp, &trace.policy).map_err(|e| e.to_string())?;
    Ok((verify_theorem3(&trace, c, optimum), optimum.gain.unwrap() - gain))
}

/// The same instance with rewards shifted by `-g*`, so that `h*` is a fixed
/// point of the undiscounted backup.
fn gain_centred(f: &Fixture) -> (Mdp, OptimalSolution, TheoremConstants) {
    let g = f.optimum.gain.unwrap();
    let rewards: Vec<Vec<f64>> = f
        .mdp
        .rewards_by_state()
        .into_iter()
        .map(|row| row.into_iter().map(|r| r - g).collect())
        .collect();
    let mdp = Mdp::new(&f.mdp.transitions_by_action(), &rewards, None).unwrap();
    let optimum = exact_optimal(&mdp, DiscountSpec::Average).unwrap();
    let c = theorem1_constants(&mdp, DiscountSpec::Average, &optimum).unwrap();
    (mdp, optimum, c)
}

fn criterion9(average: &[Fixture], discounted: &[Fixture]) -> Outcome {
    let mut out = Outcome::new();
    let alpha = 0.5;
    let (mut periods, mut control_ok, mut control_total) = (0, 0, 0);
    for f in average {
        let c = theorem2_constants(alpha, &f.constants).unwrap();
        for eps in [1e-2, 1e-3] {
            match async_average(&f.mdp, &f.optimum, &c, eps) {
                Ok((r, shortfall)) => {
                    if r.status == CheckStatus::Pass {
                        periods += r.windows;
                    } else {
                        out.fail(format!(
                            "{} eps={eps}: theorem3 {:?}, {} of {} periods, worst ratio {:.3}",
                            f.label,
                            r.status,
                            r.violations,
                            r.windows,
                            r.observed.unwrap_or(f64::NAN)
                        ));
                    }
                    if shortfall > eps {
                        out.fail(format!("{} eps={eps}: gain shortfall {shortfall:.3e}", f.label));
                    }
                }
                Err(e) => out.fail(format!("{} eps={eps}: {e}", f.label)),
            }
        }
        // diagnostic only: does not affect the verdict
        let (mdp, opt, c0) = gain_centred(f);
        let c0 = theorem2_constants(alpha, &c0).unwrap();
        control_total += 1;
        if let Ok((r, shortfall)) = async_average(&mdp, &opt, &c0, 1e-3) {
            if r.status == CheckStatus::Pass && shortfall <= 1e-3 {
                control_ok += 1;
            }
        }
    }
    let (mut soft_pass, mut soft_total) = (0, 0);
    for f in discounted.iter().filter(|f| f.spec.gamma() == 0.9) {
        let n = f.mdp.n_states();
        let c = theorem2_constants(alpha, &f.constants).unwrap();
        let cfg = SolverConfig::async_lr(f.spec, alpha, 1e-8)
            .unwrap()
            .with_reference(f.optimum.values.clone());
        let trace = vi_async_lr(&f.mdp, &cfg, &round_robin_schedule(n, n).unwrap()).unwrap();
        let r = verify_theorem3(&trace, &c, &f.optimum);
        soft_total += 1;
        if r.status == CheckStatus::Pass {
            soft_pass += 1;
        }
    }
    out.summary = format!(
        "{periods} average periods passed; gain-centred control {control_ok}/{control_total}; \
         discounted soft reports {soft_pass}/{soft_total} within bound"
    );
    out
}

/// Independent primitivity oracle: strong connectivity by BFS from state 0
/// on the graph and its reverse, period as the gcd of `level(u) + 1 -
/// level(v)` over all edges.
fn primitive_oracle(adj: &[Vec<bool>]) -> bool {
    let n = adj.len();
    let bfs = |forward: bool| -> Vec<Option<usize>> {
        let mut level = vec![None; n];
        level[0] = Some(0);
        let mut queue = std::collections::VecDeque::from([0]);
        while let Some(u) = queue.pop_front() {
            for v in 0..n {
                let edge = if forward { adj[u][v] } else { adj[v][u] };
                if edge && level[v].is_none() {
                    level[v] = Some(level[u].unwrap() + 1);
                    queue.push_back(v);
                }
            }
        }
        level
    };
    let fwd = bfs(true);
    if fwd.iter().any(Option::is_none) || bfs(false).iter().any(Option::is_none) {
        return false;
    }
    fn gcd(a: i64, b: i64) -> i64 {
        if b == 0 { a.abs() } else { gcd(b, a % b) }
    }
    let mut g = 0;
    for u in 0..n {
        for v in 0..n {
            if adj[u][v] {
                g = gcd(g, fwd[u].unwrap() as i64 + 1 - fwd[v].unwrap() as i64);
            }
        }
    }
    g == 1
}

fn bool_power_all_positive(adj: &[Vec<bool>], k: usize) -> bool {
    let n = adj.len();
    let mut acc = adj.to_vec();
    for _ in 1..k {
        acc = (0..n)
            .map(|i| (0..n).map(|j| (0..n).any(|l| acc[i][l] && adj[l][j])).collect())
            .collect();
    }
    acc.iter().all(|r| r.iter().all(|&x| x))
}

fn check_pattern(out: &mut Outcome, adj: &[Vec<bool>]) -> bool {
    let n = adj.len();
    let rows: Vec<Vec<f64>> = adj
        .iter()
        .map(|r| r.iter().map(|&b| if b { 1.0 } else { 0.0 }).collect())
        .collect();
    let got = check_ergodic(&rows);
    let primitive = primitive_oracle(adj);
    let bound = wielandt_bound(n);
    if got.is_ergodic != primitive {
        out.fail(format!("{adj:?}: check_ergodic {} vs oracle {primitive}", got.is_ergodic));
    }
    if primitive {
        if !bool_power_all_positive(adj, bound) {
            out.fail(format!("{adj:?}: power {bound} not all-positive"));
        }
        match got.n_mix {
            Some(k) if k <= bound && bool_power_all_positive(adj, k) => {}
            other => out.fail(format!("{adj:?}: n_mix {other:?}, bound {bound}")),
        }
    }
    primitive
}

fn criterion10() -> Outcome {
    let mut out = Outcome::new();
    let mut exhaustive = 0;
    for n in 1..=4usize {
        for bits in 0u32..(1 << (n * n)) {
            let adj: Vec<Vec<bool>> = (0..n)
                .map(|i| (0..n).map(|j| bits >> (i * n + j) & 1 == 1).collect())
                .collect();
            if check_pattern(&mut out, &adj) {
                exhaustive += 1;
            }
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut sampled = 0;
    for n in 5..=8usize {
        let mut found = 0;
        while found < 1000 {
            let density = rng.random_range(0.1..0.6);
            let adj: Vec<Vec<bool>> = (0..n)
                .map(|_| (0..n).map(|_| rng.random::<f64>() < density).collect())
                .collect();
            if check_pattern(&mut out, &adj) {
                found += 1;
            }
        }
        sampled += found;
    }
    out.summary = format!("{exhaustive} primitive patterns (n <= 4, exhaustive), {sampled} random (n = 5..8)");
    out
}

fn criterion11(suite: &[Fixture], average: &[Fixture]) -> Outcome {
    let mut out = Outcome::new();
    let (mut worst, mut worst_raw): (f64, f64) = (0.0, 0.0);
    for f in suite {
        let trace = f.sync_to(1e-12);
        if !trace.converged() {
            out.fail(format!("{}: did not reach H = 1e-12", f.label));
            continue;
        }
        let est = extrapolate_optimal_values(&f.mdp, &trace.final_values, f.spec.gamma()).unwrap();
        let err = est.sub(&f.optimum.values).sup_norm();
        worst = worst.max(err);
        worst_raw = worst_raw.max(trace.final_values.sub(&f.optimum.values).sup_norm());
        if err > 1e-8 {
            out.fail(format!("{}: sup-norm error {err:e}", f.label));
        }
    }
    let mut worst_avg: f64 = 0.0;
    for f in average {
        let trace = f.sync_to(1e-12);
        let v = &trace.final_values;
        let shift = v.min();
        let err = v
            .iter()
            .zip(f.optimum.values.iter())
            .map(|(v, h)| (v - shift - h).abs())
            .fold(0.0, f64::max);
        worst_avg = worst_avg.max(err);
        if err > 1e-8 {
            out.fail(format!("{}: relative-value error {err:e}", f.label));
        }
    }
    out.summary = format!(
        "max sup-norm error {worst:.2e} (raw V_T {worst_raw:.2e}); average relative values {worst_avg:.2e}"
    );
    out
}

type Criterion<'a> = Box<dyn Fn() -> Outcome + 'a>;

fn main() {
    let start = Instant::now();
    let suite = discounted_suite();
    let average = average_suite();
    let criteria: Vec<(&str, Criterion)> = vec![
        ("1  geometric traces faster than gamma", Box::new(|| criterion1(&suite, start))),
        ("2  theorem 1 window bound", Box::new(|| criterion2(&suite))),
        ("3  tight gamma baseline", Box::new(criterion3)),
        ("4  lemma 2 span relation", Box::new(|| criterion4(&suite, &average))),
        ("5  error sandwich", Box::new(|| criterion5(&suite, &average))),
        ("6  discounted stopping rule", Box::new(|| criterion6(&suite))),
        ("7  average stopping rule", Box::new(|| criterion7(&average))),
        ("8  theorem 2 learning-rate windows", Box::new(|| criterion8(&suite))),
        ("9  theorem 3 asynchronous windows", Box::new(|| criterion9(&average, &suite))),
        ("10 lemma 1 wielandt bound", Box::new(criterion10)),
        ("11 oracle equivalence", Box::new(|| criterion11(&suite, &average))),
    ];
    let mut failed = 0;
    for (name, run) in &criteria {
        let t = Instant::now();
        let out = run();
        let status = if out.failures.is_empty() { "PASS" } else { "FAIL" };
        println!(
            "criterion {name}: {status} ({}; {:.2} s)",
            out.summary,
            t.elapsed().as_secs_f64()
        );
        for f in out.failures.iter().take(10) {
            println!("    {f}");
        }
        if out.failures.len() > 10 {
            println!("    ... {} more", out.failures.len() - 10);
        }
        if !out.failures.is_empty() {
            failed += 1;
        }
    }
    println!(
        "acceptance: {} of {} criteria passed in {:.2} s",
        criteria.len() - failed,
        criteria.len(),
        start.elapsed().as_secs_f64()
    );
    if failed > 0 {
        std::process::exit(1);
    }
}
