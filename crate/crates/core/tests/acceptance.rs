//! End-to-end acceptance run on the canonical configuration. Prints one
//! PASS/FAIL line per criterion, then fails if any criterion failed.

mod common;

use std::time::Instant;

use tacit::experiment::{run_experiment, validate_cascades};
use tacit::replay::replay_experiment;

struct Report {
    lines: Vec<(bool, String)>,
}

impl Report {
    fn add(&mut self, ok: bool, msg: String) {
        println!("{} {msg}", if ok { "PASS" } else { "FAIL" });
        self.lines.push((ok, msg));
    }
}

#[test]
fn primary_criteria() {
    println!();
    let mut report = Report { lines: Vec::new() };
    let cfg = common::load_canonical();

    let cascades = validate_cascades(&cfg).unwrap();
    let passing = cascades.iter().filter(|c| c.passes()).count();
    let per_check: Vec<usize> = (0..4)
        .map(|i| cascades.iter().filter(|c| c.checks()[i].1).count())
        .collect();
    report.add(
        passing >= 8,
        format!(
            "cascade shape: misinformation deeper, wider, more readers; anti-misinformation holds the largest claim ({passing}/{} seeds, need 8; per check {per_check:?})",
            cascades.len()
        ),
    );

    let dir_a = tempfile::tempdir().unwrap();
    let started = Instant::now();
    let res = run_experiment(&cfg, Some(dir_a.path())).unwrap();
    let elapsed = started.elapsed().as_secs_f64();
    let per_rep = res.ordinal_checks_per_rep().unwrap();
    let reps = per_rep.len();
    let mut all_majority = true;
    let mut parts = Vec::new();
    for (i, (name, pooled)) in res.pooled_ordinal_checks().into_iter().enumerate() {
        let held = per_rep.iter().filter(|r| r[i].1).count();
        all_majority &= 2 * held > reps;
        parts.push(format!(
            "{name}: {held}/{reps} reps, pooled {}",
            if pooled { "holds" } else { "fails" }
        ));
    }
    report.add(
        all_majority && !res.is_partial(),
        format!(
            "treatment-effect orderings, majority of repetitions [{}]",
            parts.join("; ")
        ),
    );

    let paired = res.reps.iter().all(|r| r.pairing_ok());
    let pairs: usize = res.reps.iter().map(|r| r.runs.len()).sum();
    report.add(
        paired,
        format!("counterfactual pairing: {pairs} runs share their repetition's pre-period hash"),
    );

    let belief = common::belief_script_error();
    let softmax = common::softmax_frequency_error();
    let tmp = tempfile::tempdir().unwrap();
    let iw = common::iwcib_csv_error(tmp.path());
    let replay = replay_experiment(dir_a.path()).unwrap();
    let replay_err = replay
        .iter()
        .map(|r| (r.recomputed - r.reported).abs())
        .fold(0.0, f64::max);
    let sv = common::structural_virality_mismatches();
    report.add(
        belief <= 1e-12 && softmax <= 0.01 && iw <= 1e-12 && replay_err <= 1e-12 && sv == 0,
        format!(
            "formula oracles: belief script {belief:e}, selection frequency gap {softmax:.4}, belief change from CSV {iw:e}, ATE replay {replay_err:e}, structural virality mismatches {sv}"
        ),
    );

    let (mut bad, mut blocked) = (0, 0);
    for seed in [1, 2, 3] {
        let p = common::prepare(seed, 12);
        let (b, k) = common::removal_scan(&p, 4, 30);
        bad += b;
        blocked += k;
    }
    report.add(
        bad == 0 && blocked > 0,
        format!("removal soundness: {bad} events reference {blocked} blocked claims after their check step"),
    );

    let dir_b = tempfile::tempdir().unwrap();
    run_experiment(&cfg, Some(dir_b.path())).unwrap();
    let a = std::fs::read(dir_a.path().join("ate.csv")).unwrap();
    let b = std::fs::read(dir_b.path().join("ate.csv")).unwrap();
    report.add(
        a == b,
        format!(
            "determinism: ate.csv identical across two executions ({} bytes)",
            a.len()
        ),
    );

    let increases = common::gbdt_loss_increases();
    let r2 = common::gbdt_heldout_r2();
    report.add(
        increases == 0 && r2 >= 0.9,
        format!("gradient boosting: {increases} loss increases over 5 datasets, held-out R^2 {r2:.4}"),
    );

    println!("info: one canonical grid execution took {elapsed:.1} s");
    let failed: Vec<&String> = report.lines.iter().filter(|l| !l.0).map(|l| &l.1).collect();
    assert!(failed.is_empty(), "{} criteria failed: {failed:#?}", failed.len());
}
