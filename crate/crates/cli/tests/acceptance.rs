//! End-to-end acceptance run. Prints one PASS/FAIL line per criterion and
//! exits non-zero if any fails.
//!
//! Generates five default-size instances through the `reassembly` binary,
//! so a full run takes a while on a single core.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use reassembly_cli::io::{self, read_instance, read_solution};
use reassembly_cli::pipeline;
use reassembly_core::diagnostics::{decompose, random_baseline, trace_report};
use reassembly_core::generator::{self, gradient_check, TrainConfig};
use reassembly_core::ordering::{bt_fit, bt_order, BtConfig, GapMatrix, Ordering};
use reassembly_core::pairing::{hungarian_assign, Sense};
use reassembly_core::{Matrix, PieceId, Solution, Vector, IN_DIM};

const BIN: &str = env!("CARGO_BIN_EXE_reassembly");
const SEEDS: [u64; 5] = [1, 2, 3, 4, 5];
const PATHS: [(&str, &[&str]); 3] = [
    ("bt", &["--use-bt", "on", "--seed-strategy", "delta-norm"]),
    ("delta-norm", &["--use-bt", "off", "--seed-strategy", "delta-norm"]),
    ("frobenius", &["--use-bt", "off", "--seed-strategy", "frobenius-out"]),
];
const SOLVE_BUDGET: Duration = Duration::from_secs(600);

struct Verdict {
    criterion: usize,
    pass: bool,
    detail: String,
}

fn reassembly(args: &[&str]) -> (Option<i32>, String, String) {
    let out = Command::new(BIN).args(args).output().expect("binary runs");
    (
        out.status.code(),
        String::from_utf8_lossy(&out.stdout).into_owned(),
        String::from_utf8_lossy(&out.stderr).into_owned(),
    )
}

fn generate(dir: &Path, seed: u64) -> Result<(), String> {
    let seed = seed.to_string();
    let (code, _, err) = reassembly(&["--json", "generate", "--out", dir.to_str().unwrap(), "--seed", &seed]);
    if code == Some(0) {
        Ok(())
    } else {
        Err(format!("generate seed {seed} exited {code:?}: {err}"))
    }
}

struct Solved {
    exact: bool,
    matches_sealed: bool,
    elapsed: Duration,
    report: serde_json::Value,
}

fn solve(dir: &Path, out: &Path, flags: &[&str]) -> Result<Solved, String> {
    let mut args = vec!["--json", "solve", "--instance", dir.to_str().unwrap(), "--out", out.to_str().unwrap()];
    args.extend_from_slice(flags);
    let start = Instant::now();
    let (code, stdout, err) = reassembly(&args);
    let elapsed = start.elapsed();
    if !matches!(code, Some(0) | Some(2)) {
        return Err(format!("solve exited {code:?}: {err}"));
    }
    let report: serde_json::Value = serde_json::from_str(&stdout).map_err(|e| e.to_string())?;
    let sealed = read_solution(&dir.join(io::SEALED_FILE)).map_err(|e| e.to_string())?;
    let found = read_solution(out).map_err(|e| e.to_string())?;
    Ok(Solved {
        exact: report["final_mse"].as_f64().is_some_and(|m| m <= pipeline::EXACT_MSE),
        matches_sealed: found.same_assembly(&sealed),
        elapsed,
        report,
    })
}

/// Every repair stage is non-increasing in MSE and ends on a swap-free
/// sweep within 100 rounds.
fn repairs_ok(report: &serde_json::Value) -> Result<usize, String> {
    let stages = report["repairs"].as_array().ok_or("no repair stages")?;
    let mut rounds = 0;
    for s in stages {
        let mut prev = s["initial_mse"].as_f64().ok_or("no initial mse")?;
        let rs = s["rounds"].as_array().ok_or("no rounds")?;
        for r in rs {
            let m = r["mse"].as_f64().ok_or("no mse")?;
            if m > prev {
                return Err(format!("mse rose from {prev:e} to {m:e}"));
            }
            prev = m;
        }
        if s["converged"] != serde_json::Value::Bool(true) || rs.len() > 100 {
            return Err(format!("stage {} did not settle in {} rounds", s["stage"], rs.len()));
        }
        rounds += rs.len();
    }
    Ok(rounds)
}

fn brute_force_best(scores: &Matrix) -> (Vec<usize>, f64) {
    fn go(k: usize, perm: &mut Vec<usize>, scores: &Matrix, best: &mut (Vec<usize>, f64)) {
        let n = perm.len();
        if k == n {
            let total: f64 = (0..n).map(|r| scores[(r, perm[r])]).sum();
            if total > best.1 {
                *best = (perm.clone(), total);
            }
            return;
        }
        for i in k..n {
            perm.swap(k, i);
            go(k + 1, perm, scores, best);
            perm.swap(k, i);
        }
    }
    let n = scores.rows();
    let mut best = (Vec::new(), f64::NEG_INFINITY);
    go(0, &mut (0..n).collect(), scores, &mut best);
    best
}

fn hungarian_vs_brute_force() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut mismatches = 0;
    for _ in 0..1000 {
        let n = rng.random_range(1..=8);
        let scores = Matrix::from_fn(n, n, |_, _| rng.random_range(0.0..1.0));
        let fast = hungarian_assign(&scores, Sense::Maximize).expect("square table");
        let (perm, total) = brute_force_best(&scores);
        if fast.col_of_row != perm || (fast.total_score - total).abs() > 1e-12 {
            mismatches += 1;
        }
    }
    Verdict {
        criterion: 3,
        pass: mismatches == 0,
        detail: format!("{mismatches}/1000 random tables (n <= 8) disagree with brute force"),
    }
}

fn gradient_verdict() -> Verdict {
    let cfg = TrainConfig {
        blocks: 4,
        epochs: 2,
        lr: 1e-3,
        seed: 31,
        ..TrainConfig::default()
    };
    let ds = generator::synthesize_dataset(400, 31).unwrap();
    let net = generator::train_network(&cfg, &ds).unwrap().network;
    let mut rng = ChaCha8Rng::seed_from_u64(32);
    let mut worst: f64 = 0.0;
    for _ in 0..3 {
        let x = Vector::new((0..IN_DIM).map(|_| StandardNormal.sample(&mut rng)).collect()).unwrap();
        let y: f64 = StandardNormal.sample(&mut rng);
        worst = worst.max(gradient_check(&net, &x, y, 1e-5).unwrap().max_relative_error);
    }
    Verdict {
        criterion: 5,
        pass: worst < 1e-5,
        detail: format!("max relative error {worst:.3e} over 3 points (limit 1e-5)"),
    }
}

/// Margins `T·(θ_a − θ_b + noise)` over 48 items with unit-spaced
/// log-strengths; counts exact ranking recoveries.
fn synthetic_bt(trials: usize, seed: u64) -> usize {
    let (n, t) = (48, 1e-3);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let identity = Ordering::identity(n, PieceId(0));
    let mut hits = 0;
    for _ in 0..trials {
        let mut theta: Vec<f64> = (0..n).map(|k| k as f64).collect();
        for i in (1..n).rev() {
            theta.swap(i, rng.random_range(0..=i));
        }
        let mut g = Matrix::zeros(n, n);
        for a in 0..n {
            for b in a + 1..n {
                let e: f64 = StandardNormal.sample(&mut rng);
                g[(a, b)] = t * (theta[a] - theta[b] + 0.25 * e);
                g[(b, a)] = g[(a, b)];
            }
        }
        let gaps = GapMatrix::from_parts(g, &identity, 1, 0.0).unwrap();
        let fit = bt_fit(&gaps, &BtConfig::default()).unwrap();
        let order = bt_order(&fit, &identity).unwrap();
        let mut truth: Vec<usize> = (0..n).collect();
        truth.sort_by(|&a, &b| theta[b].total_cmp(&theta[a]));
        hits += usize::from(order.sequence == truth);
    }
    hits
}

struct InstanceChecks {
    gap: f64,
    pairs_right: usize,
    negative: usize,
    max_identity_error: f64,
}

fn inspect(dir: &Path) -> Result<InstanceChecks, String> {
    let inst = read_instance(dir).map_err(|e| e.to_string())?;
    let sealed: Solution = read_solution(&dir.join(io::SEALED_FILE)).map_err(|e| e.to_string())?;
    let (blocks, rep) = pipeline::pair(&inst.census).map_err(|e| e.to_string())?;
    let pairs_right = blocks
        .iter()
        .filter(|b| sealed.pairs.contains(&(b.input().id(), b.output().id())))
        .count();
    let mut all = inst.census.inputs.clone();
    all.extend(inst.census.outputs.iter().cloned());
    all.push(inst.census.last.clone());
    let net = sealed.assemble(&all).map_err(|e| e.to_string())?;
    let negative = trace_report(net.blocks()).negative;
    let max_identity_error = net
        .blocks()
        .iter()
        .map(|b| decompose(&b.weight_product()).expect("square product").identity_error())
        .fold(0.0, f64::max);
    Ok(InstanceChecks {
        gap: rep.gap,
        pairs_right,
        negative,
        max_identity_error,
    })
}

fn main() {
    let started = Instant::now();
    let root: PathBuf = tempfile::tempdir().expect("temp dir").keep();
    let mut verdicts: Vec<Verdict> = Vec::new();

    let mut exact_runs = 0;
    let mut run_notes: Vec<String> = Vec::new();
    let mut pairing_fail: Vec<String> = Vec::new();
    let mut min_gap = f64::INFINITY;
    let mut min_negative = usize::MAX;
    let mut worst_identity: f64 = 0.0;
    let mut bt_better = 0;
    let mut bt_notes: Vec<String> = Vec::new();
    let mut repair_fail: Vec<String> = Vec::new();
    let mut repair_rounds = 0;
    let mut first_bytes: Option<Vec<u8>> = None;

    for &seed in &SEEDS {
        let dir = root.join(format!("seed{seed}"));
        let t0 = Instant::now();
        if let Err(e) = generate(&dir, seed) {
            run_notes.push(e);
            continue;
        }
        eprintln!("seed {seed}: generated in {:.0?}", t0.elapsed());

        match inspect(&dir) {
            Ok(c) => {
                min_gap = min_gap.min(c.gap);
                min_negative = min_negative.min(c.negative);
                worst_identity = worst_identity.max(c.max_identity_error);
                if c.gap <= 0.3 || c.pairs_right != 48 {
                    pairing_fail.push(format!("seed {seed}: gap {:.3}, {}/48 pairs", c.gap, c.pairs_right));
                }
            }
            Err(e) => pairing_fail.push(format!("seed {seed}: {e}")),
        }

        for (name, flags) in PATHS {
            let out = root.join(format!("seed{seed}-{name}.json"));
            match solve(&dir, &out, flags) {
                Ok(s) => {
                    eprintln!(
                        "seed {seed} {name}: exact {} sealed {} in {:.0?}",
                        s.exact, s.matches_sealed, s.elapsed
                    );
                    if s.exact && s.matches_sealed && s.elapsed <= SOLVE_BUDGET {
                        exact_runs += 1;
                    } else {
                        run_notes.push(format!(
                            "seed {seed} {name}: mse {}, sealed {}, {:.0?}",
                            s.report["final_mse"], s.matches_sealed, s.elapsed
                        ));
                    }
                    match repairs_ok(&s.report) {
                        Ok(r) => repair_rounds += r,
                        Err(e) => repair_fail.push(format!("seed {seed} {name}: {e}")),
                    }
                    if name == "bt" {
                        let seed_mse = s.report["seed_mse"].as_f64().unwrap_or(f64::NAN);
                        let bt_mse = s.report["bt"]["mse"].as_f64().unwrap_or(f64::NAN);
                        if bt_mse < seed_mse {
                            bt_better += 1;
                        } else {
                            bt_notes.push(format!("seed {seed}: bt {bt_mse:e} vs seed {seed_mse:e}"));
                        }
                    }
                    if seed == SEEDS[0] && name == "bt" {
                        first_bytes = fs::read(&out).ok();
                    }
                }
                Err(e) => run_notes.push(format!("seed {seed} {name}: {e}")),
            }
        }
    }

    let total_runs = SEEDS.len() * PATHS.len();
    verdicts.push(Verdict {
        criterion: 1,
        pass: exact_runs == total_runs,
        detail: format!("{exact_runs}/{total_runs} solves exact and sealed-equal within budget {}", notes(&run_notes)),
    });
    verdicts.push(Verdict {
        criterion: 2,
        pass: pairing_fail.is_empty() && min_gap.is_finite(),
        detail: format!("smallest separation gap {min_gap:.3} (need > 0.3) {}", notes(&pairing_fail)),
    });
    verdicts.push(hungarian_vs_brute_force());

    let baseline = random_baseline(48, 96, 1000, 77).expect("baseline");
    verdicts.push(Verdict {
        criterion: 4,
        pass: min_negative != usize::MAX && min_negative >= 46 && (0.09..=0.19).contains(&baseline.mean),
        detail: format!(
            "fewest negative traces {}/48 (need >= 46), random baseline mean {:.4}",
            if min_negative == usize::MAX { 0 } else { min_negative },
            baseline.mean
        ),
    });
    verdicts.push(gradient_verdict());

    let hits = synthetic_bt(100, 99);
    verdicts.push(Verdict {
        criterion: 6,
        pass: hits >= 95 && bt_better == SEEDS.len(),
        detail: format!(
            "synthetic rankings recovered {hits}/100; BT beat its seed on {bt_better}/{} instances {}",
            SEEDS.len(),
            notes(&bt_notes)
        ),
    });
    verdicts.push(Verdict {
        criterion: 7,
        pass: repair_fail.is_empty() && repair_rounds > 0,
        detail: format!("{repair_rounds} repair rounds checked {}", notes(&repair_fail)),
    });
    verdicts.push(Verdict {
        criterion: 8,
        pass: worst_identity < 1e-9 && min_negative != usize::MAX,
        detail: format!("largest |‖M‖² − (ε²d + ‖E‖²)| {worst_identity:.3e}"),
    });

    // Repeat the first seed from scratch and compare solution bytes.
    let again = root.join("repeat");
    let out = root.join("repeat.json");
    let det = generate(&again, SEEDS[0]).and_then(|_| solve(&again, &out, PATHS[0].1)).map(|_| fs::read(&out).ok());
    let (pass, detail) = match (det, &first_bytes) {
        (Ok(Some(b)), Some(a)) => (a == &b, format!("repeat run byte-identical: {}", a == &b)),
        (Err(e), _) => (false, e),
        _ => (false, String::from("missing solution file")),
    };
    verdicts.push(Verdict {
        criterion: 9,
        pass,
        detail,
    });

    println!();
    for v in &verdicts {
        println!(
            "criterion {}: {} ({})",
            v.criterion,
            if v.pass { "PASS" } else { "FAIL" },
            v.detail
        );
    }
    println!("total time {:.0?}", started.elapsed());
    let _ = fs::remove_dir_all(&root);
    if verdicts.iter().any(|v| !v.pass) {
        std::process::exit(1);
    }
}

fn notes(items: &[String]) -> String {
    if items.is_empty() {
        String::new()
    } else {
        format!("[{}]", items.join("; "))
    }
}
