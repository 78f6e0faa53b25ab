//! Acceptance suite: one PASS/FAIL line per criterion.
//!
//! Oracles (quadrature, two-pass variance, closed-form variance laws, pair
//! enumeration) are computed here, independently of the library code paths
//! they check.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;
use std::process::Command;
use std::time::Instant;

use mcvr::attribution::{attribution_against, reference_scores, ExperimentParams, FieldParams, GradientField, Scheme};
use mcvr::cli::{sweep_rows, ExperimentConfig, Method};
use mcvr::efficiency::{ecm, pareto_baseline, relative_efficiency, CostModel};
use mcvr::estimators::{Allocation, Estimator, EstimatorSpec, ProposalBook, TimestepMode};
use mcvr::pairprob::{build_pair_matrix, sinkhorn_optimal, PairFamily, PairInstance, PairKind, SinkhornParams};
use mcvr::rng;
use mcvr::sampling::BaseDistribution;
use mcvr::testbed::{hierarchical_task, oracle_proposal, toy_integrand, ConstantTask, LinearTask, PolynomialTask, Task};
use mcvr::variance_lab::{collect_estimates, run_until_converged, welford_merge, ConvergenceCriterion, WelfordState};

type Outcome = Result<String, String>;

fn check(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

/// Per-coordinate sample mean and unbiased variance.
fn moments(samples: &[Vec<f64>]) -> (Vec<f64>, Vec<f64>) {
    let n = samples.len() as f64;
    let dim = samples[0].len();
    let mut mean = vec![0.0; dim];
    for s in samples {
        for (m, x) in mean.iter_mut().zip(s) {
            *m += x / n;
        }
    }
    let mut var = vec![0.0; dim];
    for s in samples {
        for i in 0..dim {
            var[i] += (s[i] - mean[i]).powi(2) / (n - 1.0);
        }
    }
    (mean, var)
}

fn trace_var(samples: &[Vec<f64>]) -> f64 {
    moments(samples).1.iter().sum()
}

fn draw(task: &dyn Task, book: &ProposalBook, spec: EstimatorSpec, n: u64) -> Vec<Vec<f64>> {
    let est = Estimator::new(task, spec, book).expect("valid estimator");
    collect_estimates(&est, 0..n)
}

/// Mean of g over the uniform base by composite Simpson on 20000 intervals.
fn quadrature_mean(task: &dyn Task) -> Vec<f64> {
    let (a, b) = (task.base().t_min(), task.base().t_max());
    let n = 20_000;
    let h = (b - a) / n as f64;
    let mut acc = vec![0.0; task.dim()];
    let mut g = vec![0.0; task.dim()];
    let eps = vec![0.0; task.noise_dim()];
    let render = Default::default();
    for i in 0..=n {
        let c = if i == 0 || i == n { 1.0 } else if i % 2 == 1 { 4.0 } else { 2.0 };
        task.contribution(&render, a + i as f64 * h, &eps, &mut g);
        for (s, v) in acc.iter_mut().zip(&g) {
            *s += c * v;
        }
    }
    acc.iter().map(|s| s * h / 3.0 / (b - a)).collect()
}

fn c1_ecm_worked_example() -> Outcome {
    let curve = pareto_baseline(&[(270.0, 2.21e6), (540.0, 1.10e6), (1080.0, 0.55e6), (2160.0, 0.28e6)]).unwrap();
    let c = curve.cost_at_variance(1.78e6, false).unwrap();
    let e1 = ecm((340.0, 1.78e6), &curve).unwrap();
    let e2 = ecm((82.0, 2.21e6), &curve).unwrap();
    let re = relative_efficiency(2.31e6, 1.78e6).unwrap();
    check(
        (c - 335.0).abs() <= 3.0 && (e1 - 0.99).abs() <= 0.02 && (e2 - 3.3).abs() <= 0.05 && (re - 1.30).abs() <= 0.01,
        format!("baseline cost {c:.2}, ECM {e1:.4}, ECM(82) {e2:.4}, RE {re:.4}"),
    )
}

fn c2_unbiasedness() -> Outcome {
    let task = PolynomialTask::new(BaseDistribution::uniform(0.02, 0.98).unwrap());
    let book = ProposalBook::for_task(&task).unwrap();
    let truth = quadrature_mean(&task);
    let mut worst: f64 = 0.0;
    let mut cases = 0;
    for mode in [TimestepMode::Base, TimestepMode::Proposal("heuristic".into())] {
        for alloc in [Allocation::Iid, Allocation::StratPerRender, Allocation::StratGlobal] {
            for k in [1, 8] {
                let spec = EstimatorSpec::new(2, k, mode.clone(), alloc, 100 + cases);
                let samples = draw(&task, &book, spec, 100_000);
                let (mean, var) = moments(&samples);
                for i in 0..truth.len() {
                    let se = (var[i] / samples.len() as f64).sqrt();
                    worst = worst.max((mean[i] - truth[i]).abs() / se);
                }
                cases += 1;
            }
        }
    }
    check(worst <= 5.0, format!("{cases} mode/K combinations, worst deviation {worst:.2} SE"))
}

fn c3_hierarchical_law() -> Outcome {
    let task = hierarchical_task(1.0, 4.0, 4).unwrap();
    let book = ProposalBook::new();
    let mut worst: f64 = 0.0;
    let mut detail = Vec::new();
    for (i, (r, k)) in [(1, 1), (2, 1), (1, 4), (4, 8)].into_iter().enumerate() {
        let spec = EstimatorSpec::new(r, k, TimestepMode::Base, Allocation::Iid, 300 + i as u64);
        let v = trace_var(&draw(&task, &book, spec, 100_000));
        let predicted = 1.0 / r as f64 + 4.0 / (r * k) as f64;
        worst = worst.max((v / predicted - 1.0).abs());
        detail.push(format!("({r},{k}) {v:.4}/{predicted:.4}"));
    }
    check(worst <= 0.05, format!("{}; worst rel err {:.2}%", detail.join(", "), worst * 100.0))
}

fn c4_stratification_rate() -> Outcome {
    let task = LinearTask::new(BaseDistribution::unit());
    let book = ProposalBook::new();
    let mut detail = Vec::new();
    let mut ok = true;
    for n in [4usize, 8] {
        let iid = EstimatorSpec::new(1, n, TimestepMode::Base, Allocation::Iid, 40 + n as u64);
        let strat = EstimatorSpec::new(1, n, TimestepMode::Base, Allocation::StratPerRender, 50 + n as u64);
        let v_iid = trace_var(&draw(&task, &book, iid, 1_000_000));
        let v_strat = trace_var(&draw(&task, &book, strat, 1_000_000));
        let expected = 1.0 / (n * n) as f64;
        let ratio = v_strat / v_iid;
        ok &= (ratio / expected - 1.0).abs() <= 0.10;
        detail.push(format!("N={n}: ratio {ratio:.5} vs {expected:.5}"));
    }
    check(ok, detail.join(", "))
}

fn c5_toy_importance() -> Outcome {
    let task = toy_integrand(0.1).unwrap();
    let mut book = ProposalBook::for_task(&task).unwrap();
    book.insert("oracle", oracle_proposal(&task, 64, 10_000, 5).unwrap());
    let var = |mode: TimestepMode, seed| trace_var(&draw(&task, &book, EstimatorSpec::new(1, 1, mode, Allocation::Iid, seed), 100_000));
    let v_uniform = var(TimestepMode::Base, 51);
    let re_oracle = v_uniform / var(TimestepMode::Proposal("oracle".into()), 52);
    let re_heur = v_uniform / var(TimestepMode::Proposal("heuristic".into()), 53);
    check(
        re_oracle >= 2.0 && re_heur >= 0.9 * re_oracle,
        format!("RE oracle {re_oracle:.3}, RE heuristic {re_heur:.3} ({:.1}% of oracle)", 100.0 * re_heur / re_oracle),
    )
}

fn c6_stratified_is() -> Outcome {
    let task = PolynomialTask::new(BaseDistribution::uniform(0.02, 0.98).unwrap());
    let book = ProposalBook::for_task(&task).unwrap();
    let truth = quadrature_mean(&task);
    let mut worst: f64 = 0.0;
    for m in [4usize, 16] {
        let spec = EstimatorSpec::new(1, m, TimestepMode::Proposal("heuristic".into()), Allocation::StratPerRender, 60 + m as u64);
        let samples = draw(&task, &book, spec, 100_000);
        let (mean, var) = moments(&samples);
        for i in 0..truth.len() {
            worst = worst.max((mean[i] - truth[i]).abs() / (var[i] / samples.len() as f64).sqrt());
        }
    }
    check(worst <= 5.0, format!("M in {{4, 16}}, worst deviation {worst:.2} SE"))
}

fn random_instance(seed: u64) -> PairInstance {
    let mut r = rng::stream(seed, &[77]);
    let n = 2 + (rng::uniform(&mut r) * 23.0) as usize;
    let dim = 1 + (rng::uniform(&mut r) * 5.0) as usize;
    let y = (0..n).map(|_| (0..dim).map(|_| rng::normal(&mut r)).collect()).collect();
    let t = (0..n).map(|i| (i as f64 + 0.5) / n as f64).collect();
    let w = (0..n).map(|_| 0.1 + rng::uniform(&mut r)).collect();
    PairInstance::new(y, t, w).unwrap()
}

fn c7_pair_probability() -> Outcome {
    let params = SinkhornParams::default();
    let (mut max_bias, mut max_resid): (f64, f64) = (0.0, 0.0);
    let (mut converged, mut attempted) = (0, 0);
    for s in 0..100 {
        let inst = random_instance(s);
        let n = inst.len();
        let total: Vec<f64> = (0..inst.dim()).map(|d| inst.y.iter().map(|v| v[d]).sum()).collect();
        for kind in PairKind::ALL {
            let q = if kind == PairKind::Sinkhorn {
                attempted += 1;
                match sinkhorn_optimal(&inst, &params) {
                    Ok(q) => {
                        converged += 1;
                        q
                    }
                    Err(_) => continue,
                }
            } else {
                build_pair_matrix(kind, &inst).unwrap()
            };
            let dense = q.dense();
            let pi: Vec<f64> = (0..n).map(|i| dense[i * n..(i + 1) * n].iter().sum()).collect();
            let mut expect = vec![0.0; inst.dim()];
            for i in 0..n {
                for j in i + 1..n {
                    let p = dense[i * n + j];
                    if p > 0.0 {
                        for (d, e) in expect.iter_mut().enumerate() {
                            *e += p * (inst.y[i][d] / pi[i] + inst.y[j][d] / pi[j]);
                        }
                    }
                }
            }
            for d in 0..inst.dim() {
                max_bias = max_bias.max((expect[d] - total[d]).abs());
            }
            // N = 2 has a single pair, π = (1, 1), whatever the targets; no iteration runs there
            if kind == PairKind::Sinkhorn && n > 2 {
                let norms: Vec<f64> = inst.y.iter().map(|v| v.iter().map(|x| x * x).sum::<f64>().sqrt()).collect();
                let sum: f64 = norms.iter().sum();
                for i in 0..n {
                    max_resid = max_resid.max((pi[i] - 2.0 * norms[i] / sum).abs());
                }
            }
        }
    }
    let family = PairFamily::default();
    let mut ordered = 0;
    for i in 0..100 {
        let inst = family.instance(0, i).unwrap();
        let var = |kind: PairKind| {
            let q = if kind == PairKind::Sinkhorn { sinkhorn_optimal(&inst, &params) } else { build_pair_matrix(kind, &inst) };
            q.and_then(|q| mcvr::pairprob::ht_variance(&inst, &q)).ok()
        };
        if let (Some(s), Some(w), Some(d)) = (var(PairKind::Sinkhorn), var(PairKind::IwStrat), var(PairKind::Iid)) {
            if s <= w && w <= d {
                ordered += 1;
            }
        }
    }
    check(
        max_bias <= 1e-10 && max_resid <= 1e-6 && ordered >= 90,
        format!(
            "(a) max |E[mu_hat] - mu_y| {max_bias:.2e}; (b) Sinkhorn converged {converged}/{attempted}, max marginal residual (N > 2) {max_resid:.2e}; (c) ordering on {ordered}/100"
        ),
    )
}

fn c8_welford() -> Outcome {
    let (mut worst_one, mut worst_merge): (f64, f64) = (0.0, 0.0);
    for s in 0..10_000u64 {
        let mut r = rng::stream(s, &[88]);
        let n = 2 + (rng::uniform(&mut r) * 200.0) as usize;
        let dim = 1 + (rng::uniform(&mut r) * 8.0) as usize;
        let offset = 10.0 * rng::normal(&mut r);
        let xs: Vec<Vec<f64>> = (0..n).map(|_| (0..dim).map(|_| offset + rng::normal(&mut r)).collect()).collect();
        let two_pass = trace_var(&xs);
        let mut one = WelfordState::new();
        for x in &xs {
            one.push(x).unwrap();
        }
        let split = (rng::uniform(&mut r) * (n + 1) as f64) as usize;
        let (mut a, mut b) = (WelfordState::new(), WelfordState::new());
        xs[..split].iter().for_each(|x| a.push(x).unwrap());
        xs[split..].iter().for_each(|x| b.push(x).unwrap());
        let merged = welford_merge(&a, &b).unwrap();
        let t1 = one.trace_cov().unwrap();
        worst_one = worst_one.max((t1 - two_pass).abs() / two_pass);
        worst_merge = worst_merge.max((merged.trace_cov().unwrap() - t1).abs() / t1);
    }
    check(
        worst_one <= 1e-12 && worst_merge <= 1e-12,
        format!("10^4 sets: one-pass vs two-pass {worst_one:.2e}, merge vs one-pass {worst_merge:.2e}"),
    )
}

fn c9_convergence() -> Outcome {
    let task = ConstantTask::new(vec![1.5, -2.0]);
    let book = ProposalBook::new();
    let spec = EstimatorSpec::new(2, 3, TimestepMode::Base, Allocation::Iid, 9);
    let crit = ConvergenceCriterion::default();
    let r = run_until_converged(&task, &spec, &book, &crit).unwrap();
    let capped = run_until_converged(&task, &spec, &book, &ConvergenceCriterion { cap: 100, ..crit }).unwrap();
    check(
        r.converged_at == Some(1150) && r.samples == 1150 && r.trace_cov == 0.0 && capped.samples == 100 && capped.converged_at.is_none(),
        format!(
            "stopped at {:?} ({} samples, trace_cov {}); cap 100 -> {} samples, converged_at {:?}",
            r.converged_at, r.samples, r.trace_cov, capped.samples, capped.converged_at
        ),
    )
}

fn c10_cost_sensitivity() -> Outcome {
    let mut best_k = BTreeMap::new();
    for alpha in [0.0, 1.0, 100.0] {
        let cfg = ExperimentConfig {
            task: "hier{sigmaA2=1,sigmaB2=4,dim=4}".into(),
            seed: 10,
            methods: vec![Method::Uniform],
            cost: CostModel::Parametric { alpha },
            extrapolate: true,
            ..ExperimentConfig::default()
        };
        let (rows, _) = sweep_rows(&cfg).unwrap();
        let best = rows
            .iter()
            .filter(|r| r.ecm.is_some())
            .max_by(|a, b| a.ecm.unwrap().total_cmp(&b.ecm.unwrap()))
            .unwrap();
        best_k.insert(alpha as u64, (best.renoise, best.ecm.unwrap()));
    }
    let (k0, k100) = (best_k[&0].0, best_k[&100].0);
    check(
        k0 <= 2 && k100 >= 8,
        format!(
            "K*(0)={} (ECM {:.3}), K*(1)={} (ECM {:.3}), K*(100)={} (ECM {:.3})",
            k0, best_k[&0].1, best_k[&1].0, best_k[&1].1, k100, best_k[&100].1
        ),
    )
}

fn c11_attribution() -> Outcome {
    let budgets = [4usize, 16, 64];
    let mut wins = [0usize; 3];
    let mut self_ref_ok = true;
    for rep in 0..100u64 {
        let field = GradientField::random(&FieldParams::default(), rep).unwrap();
        let params = ExperimentParams { seed: rep, ..Default::default() };
        let reference = reference_scores(&field, &params).unwrap();
        for (i, &b) in budgets.iter().enumerate() {
            let strat = attribution_against(&field, &reference, b, Scheme::StratGlobal, 100, &params).unwrap();
            let iid = attribution_against(&field, &reference, b, Scheme::Iid, 100, &params).unwrap();
            if strat.mean_correlation > iid.mean_correlation {
                wins[i] += 1;
            }
        }
        let top = attribution_against(&field, &reference, params.reference_budget, Scheme::StratGlobal, 1, &params).unwrap();
        self_ref_ok &= top.reports[0].correlation_to_reference == 1.0;
    }
    check(
        wins.iter().all(|&w| w >= 90) && self_ref_ok,
        format!("stratified wins at budgets 4/16/64: {}/{}/{} of 100; reference self-correlation 1.0: {self_ref_ok}", wins[0], wins[1], wins[2]),
    )
}

fn dir_snapshot(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let p = e.unwrap().path();
            (p.file_name().unwrap().to_string_lossy().into_owned(), fs::read(&p).unwrap())
        })
        .collect()
}

fn c12_determinism() -> Outcome {
    let tmp = tempfile::tempdir().unwrap();
    let run_cfg = tmp.path().join("toy.toml");
    fs::write(&run_cfg, "task = \"toy{rho=0.1}\"\nn_gt = 200000\n[run]\nmethod = \"iw+strat\"\nR = 1\nK = 8\n").unwrap();
    let bin = env!("CARGO_BIN_EXE_mcvr");
    let mut detail = Vec::new();
    let mut ok = true;
    let jobs: [(&str, Option<&Path>, &str); 6] = [
        ("run", Some(&run_cfg), "csv"),
        ("sweep", None, "csv"),
        ("sweep", None, "json"),
        ("pairprob", None, "csv"),
        ("pairprob", None, "json"),
        ("attribution", None, "csv"),
    ];
    for (i, (cmd, cfg, format)) in jobs.iter().enumerate() {
        let mut snaps = Vec::new();
        for (j, threads) in ["1", "1", "8"].iter().enumerate() {
            let out = tmp.path().join(format!("{i}_{j}"));
            let mut c = Command::new(bin);
            c.args([cmd, "--seed", "42", "--threads", threads, "--format", format, "--out"]).arg(&out);
            if let Some(cfg) = cfg {
                c.arg("--config").arg(cfg);
            }
            let status = c.env("RUST_LOG", "error").status().unwrap();
            if !status.success() {
                return Err(format!("{cmd} exited with {status}"));
            }
            snaps.push(dir_snapshot(&out));
        }
        let same = snaps[0] == snaps[1] && snaps[1] == snaps[2];
        ok &= same && !snaps[0].is_empty();
        detail.push(format!("{cmd}/{format} {} files {}", snaps[0].len(), if same { "identical" } else { "DIFFER" }));
    }
    check(ok, detail.join("; "))
}

type Criterion = (&'static str, fn() -> Outcome);

fn main() {
    let criteria: [Criterion; 12] = [
        ("ECM worked example", c1_ecm_worked_example),
        ("unbiasedness suite", c2_unbiasedness),
        ("hierarchical variance law", c3_hierarchical_law),
        ("stratification rate", c4_stratification_rate),
        ("toy importance sampling", c5_toy_importance),
        ("stratified-IS unbiasedness", c6_stratified_is),
        ("pair-probability suite", c7_pair_probability),
        ("Welford correctness", c8_welford),
        ("convergence criterion", c9_convergence),
        ("cost sensitivity", c10_cost_sensitivity),
        ("attribution direction", c11_attribution),
        ("CLI determinism", c12_determinism),
    ];
    let filter: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let mut failed = 0;
    for (i, (name, f)) in criteria.iter().enumerate() {
        let id = (i + 1).to_string();
        if !filter.is_empty() && !filter.contains(&id) {
            continue;
        }
        let start = Instant::now();
        let res = f();
        let secs = start.elapsed().as_secs_f64();
        match res {
            Ok(d) => println!("PASS criterion {id:>2} {name}: {d} [{secs:.1}s]"),
            Err(d) => {
                failed += 1;
                println!("FAIL criterion {id:>2} {name}: {d} [{secs:.1}s]");
            }
        }
    }
    if failed > 0 {
        println!("{failed} criteria failed");
        std::process::exit(1);
    }
}
