#![allow(dead_code)]

use std::collections::VecDeque;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use tacit::checkworthy::{build_training_set, CheckworthinessModel, ClaimStrategy, LabelStrategy};
use tacit::engine::{self, Snapshot};
use tacit::experiment::ExperimentConfig;
use tacit::features::{tabulate_features, FeatureSpec};
use tacit::gbdt::{self, GbdtParams, Regressor};
use tacit::graph::{approx_betweenness, generate_synthetic_graph, CentralityMap, Graph, NodeId};
use tacit::intervention::{run_mitigation, FactCheckLedger, MitigationConfig};
use tacit::metrics;
use tacit::world::{init_world, ScenarioConfig, Step, Veracity, WorldState};

pub fn canonical_config_path() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs/canonical.json")
}

pub fn small_scenario() -> ScenarioConfig {
    ScenarioConfig {
        claims_per_topic_per_veracity: 15,
        bot_fraction: 0.02,
        ..Default::default()
    }
}

pub fn small_graph(seed: u64) -> Graph {
    generate_synthetic_graph(&[90, 40, 20], 0.1, 0.015, seed).unwrap()
}

/// A small world run to `t_end` with a belief checkpoint at 0 and `t_end`.
pub fn small_run(seed: u64, t_end: Step) -> (Graph, WorldState) {
    let g = small_graph(seed);
    let mut w = init_world(&g, &small_scenario(), seed ^ 0x5eed).unwrap();
    engine::record_checkpoint(&mut w);
    engine::run(&g, &mut w, t_end, None).unwrap();
    (g, w)
}

pub fn random_digraph(n: usize, p: f64, seed: u64) -> Graph {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut edges = Vec::new();
    for a in 0..n as NodeId {
        for b in 0..n as NodeId {
            if a != b && rng.random::<f64>() < p {
                edges.push((a, b));
            }
        }
    }
    Graph::from_edges(vec![0; n], edges).unwrap()
}

fn bfs(g: &Graph, s: NodeId) -> (Vec<i64>, Vec<f64>) {
    let n = g.num_nodes();
    let mut dist = vec![-1i64; n];
    let mut sigma = vec![0.0; n];
    dist[s as usize] = 0;
    sigma[s as usize] = 1.0;
    let mut q = VecDeque::from([s]);
    while let Some(v) = q.pop_front() {
        for &w in g.following(v) {
            if dist[w as usize] < 0 {
                dist[w as usize] = dist[v as usize] + 1;
                q.push_back(w);
            }
            if dist[w as usize] == dist[v as usize] + 1 {
                sigma[w as usize] += sigma[v as usize];
            }
        }
    }
    (dist, sigma)
}

/// Betweenness from pair counts: sum over ordered (s, t) of the share of
/// shortest s-t paths through v.
pub fn brute_betweenness(g: &Graph) -> Vec<f64> {
    let n = g.num_nodes();
    let all: Vec<(Vec<i64>, Vec<f64>)> = (0..n as NodeId).map(|s| bfs(g, s)).collect();
    let mut bc = vec![0.0; n];
    for s in 0..n {
        for t in 0..n {
            if s == t || all[s].0[t] < 0 {
                continue;
            }
            for v in 0..n {
                if v == s || v == t {
                    continue;
                }
                let (dsv, dvt) = (all[s].0[v], all[v].0[t]);
                if dsv >= 0 && dvt >= 0 && dsv + dvt == all[s].0[t] {
                    bc[v] += all[s].1[v] * all[v].1[t] / all[s].1[t];
                }
            }
        }
    }
    bc
}

/// Largest betweenness discrepancy over a handful of random graphs.
pub fn betweenness_error() -> f64 {
    let mut worst = 0f64;
    for (i, &(n, p)) in [(12, 0.2), (25, 0.1), (40, 0.06), (50, 0.08), (50, 0.2)]
        .iter()
        .enumerate()
    {
        let g = random_digraph(n, p, 100 + i as u64);
        let fast = approx_betweenness(&g, n, 0).unwrap();
        assert!(fast.exact);
        for (a, b) in fast.betweenness.iter().zip(brute_betweenness(&g)) {
            worst = worst.max((a - b).abs());
        }
    }
    worst
}

/// Mean pairwise distance of a tree, by BFS from every node.
pub fn brute_structural_virality(parents: &[Option<usize>]) -> f64 {
    let n = parents.len();
    if n < 2 {
        return 0.0;
    }
    let mut adj = vec![Vec::new(); n];
    for (i, p) in parents.iter().enumerate() {
        if let Some(p) = p {
            adj[i].push(*p);
            adj[*p].push(i);
        }
    }
    let mut total = 0u64;
    for s in 0..n {
        let mut d = vec![u64::MAX; n];
        d[s] = 0;
        let mut q = VecDeque::from([s]);
        while let Some(v) = q.pop_front() {
            for &w in &adj[v] {
                if d[w] == u64::MAX {
                    d[w] = d[v] + 1;
                    q.push_back(w);
                }
            }
        }
        total += d[s + 1..].iter().sum::<u64>();
    }
    total as f64 / (n * (n - 1) / 2) as f64
}

/// Every tree on up to 8 nodes whose parents precede their children, plus
/// random ones on 9 and 10 nodes. Returns the number of mismatches.
pub fn structural_virality_mismatches() -> usize {
    let mut bad = 0;
    for n in 1..=8usize {
        let total: usize = (1..n).product();
        for code in 0..total {
            let mut parents = vec![None];
            let mut c = code;
            for i in 1..n {
                parents.push(Some(c % i));
                c /= i;
            }
            if metrics::structural_virality(&parents) != brute_structural_virality(&parents) {
                bad += 1;
            }
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    for _ in 0..2000 {
        let n = rng.random_range(9..=10);
        let mut parents = vec![None];
        for i in 1..n {
            parents.push(Some(rng.random_range(0..i)));
        }
        if metrics::structural_virality(&parents) != brute_structural_virality(&parents) {
            bad += 1;
        }
    }
    bad
}

/// Replay a 100-read script through the engine and by hand; returns the
/// largest belief difference.
pub fn belief_script_error() -> f64 {
    let g = Graph::from_edges(vec![0], Vec::<(NodeId, NodeId)>::new()).unwrap();
    let cfg = ScenarioConfig {
        community_impactedness: vec![vec![0.3, 0.9]],
        community_belief: vec![vec![0.5, 0.5]],
        bot_fraction: 0.0,
        claims_per_topic_per_veracity: 1,
        ..Default::default()
    };
    let mut w = init_world(&g, &cfg, 3).unwrap();
    let alpha = cfg.belief_learning_rate;
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    let mut expect = w.nodes[0].belief.clone();
    let mut count = [0u32; 2];
    let mut worst = 0f64;
    for _ in 0..100 {
        let topic = rng.random_range(0..2usize);
        let (veracity, v) = match rng.random_range(0..3) {
            0 => (Veracity::Anti, -1.0),
            1 => (Veracity::Noise, 0.0),
            _ => (Veracity::Misinfo, 1.0),
        };
        let imp = w.nodes[0].impactedness[topic];
        let step = alpha / (count[topic] as f64 + 1.0) * v * (1.0 + imp);
        expect[topic] = (expect[topic] + step).clamp(0.0, 1.0);
        count[topic] += 1;
        let got = engine::update_belief(&mut w, 0, topic, veracity);
        worst = worst.max((got - expect[topic]).abs());
    }
    worst
}

/// Largest gap between empirical claim-selection frequencies over 10^5
/// draws and the analytic softmax.
pub fn softmax_frequency_error() -> f64 {
    let g = small_graph(1);
    let cfg = ScenarioConfig {
        claims_per_topic_per_veracity: 8,
        ..Default::default()
    };
    let w = init_world(&g, &cfg, 11).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut worst = 0f64;
    for v in [Veracity::Anti, Veracity::Misinfo] {
        let ids: Vec<u32> = w
            .claims
            .iter()
            .filter(|k| k.topic == 0 && k.veracity == v)
            .map(|k| k.id)
            .collect();
        let (r, q) = cfg.virality.selection(v);
        let logits: Vec<f64> = ids.iter().map(|&k| r * w.claims[k as usize].virality.powf(q)).collect();
        let z: f64 = logits.iter().map(|l| l.exp()).sum();
        let analytic: Vec<f64> = logits.iter().map(|l| l.exp() / z).collect();
        let draws = 100_000;
        let mut counts = vec![0u32; ids.len()];
        for _ in 0..draws {
            let k = engine::sample_claim(&w, 0, v, &mut rng).unwrap();
            counts[ids.iter().position(|&i| i == k).unwrap()] += 1;
        }
        for (c, p) in counts.iter().zip(&analytic) {
            worst = worst.max((*c as f64 / draws as f64 - p).abs());
        }
    }
    worst
}

/// Run a small world, export its checkpoints, and compare belief changes
/// computed from the CSV against the in-memory beliefs.
pub fn iwcib_csv_error(dir: &Path) -> f64 {
    let (g, mut w) = small_run(21, 10);
    let start: Vec<Vec<f64>> = w.nodes.iter().map(|n| n.belief.clone()).collect();
    engine::run(&g, &mut w, 25, None).unwrap();
    w.log.write_csv(dir, &w).unwrap();
    let (trace, imp) = engine::read_belief_checkpoints(&dir.join("belief_checkpoints.csv"), g.num_nodes(), 2).unwrap();
    let cp_start = trace.iter().find(|c| c.t == 10).unwrap();
    let cp_end = trace.iter().find(|c| c.t == 25).unwrap();
    let from_csv = metrics::iwcib_all(&cp_start.beliefs, &cp_end.beliefs, &imp).unwrap();
    let mut worst = 0f64;
    for (j, n) in w.nodes.iter().enumerate() {
        let total: f64 = n.impactedness.iter().sum();
        let hand: f64 = (0..2)
            .map(|o| n.impactedness[o] / total * (n.belief[o] - start[j][o]))
            .sum();
        worst = worst.max((hand - from_csv[j]).abs());
    }
    worst
}

/// Pre-period state, features and one model per strategy pair for a small
/// world, ready for post-period mitigations.
pub struct Prepared {
    pub g: Graph,
    pub snap: Snapshot,
    pub centrality: CentralityMap,
    pub spec: FeatureSpec,
    pub models: Vec<CheckworthinessModel>,
    pub t_m: Step,
}

pub fn prepare(seed: u64, t_m: Step) -> Prepared {
    let (g, w) = small_run(seed, t_m);
    let centrality = approx_betweenness(&g, g.num_nodes(), 0).unwrap();
    let spec = FeatureSpec::default();
    let features = tabulate_features(&w.log, &g, &centrality, &vec![None; w.claims.len()], t_m, &spec);
    let params = GbdtParams {
        n_trees: 20,
        ..Default::default()
    };
    let mut models = Vec::new();
    for c in ClaimStrategy::ALL {
        for l in LabelStrategy::ALL {
            let set = build_training_set(&g, &w, &features, t_m, c, l, 30, 6, seed).unwrap();
            models.push(CheckworthinessModel::train(&set, &params, seed).unwrap());
        }
    }
    Prepared {
        snap: engine::snapshot(&w).unwrap(),
        g,
        centrality,
        spec,
        models,
        t_m,
    }
}

/// Events after each misinformation claim's check step that still
/// reference it.
pub fn removal_violations(w: &WorldState, ledger: &FactCheckLedger) -> usize {
    let mut bad = 0;
    for c in ledger.checks.iter().filter(|c| c.blocked) {
        bad += w
            .log
            .utterances
            .iter()
            .filter(|u| u.claim == c.claim && u.created_at >= c.t)
            .count();
        bad += w
            .log
            .reads
            .iter()
            .filter(|r| r.t >= c.t && w.log.utterances[r.utterance as usize].claim == c.claim)
            .count();
    }
    bad
}

/// Run every mitigation of a z-budget grid on a prepared world and count
/// removal violations across all of them, plus the number of blocked claims.
pub fn removal_scan(p: &Prepared, z: usize, t_end: Step) -> (usize, usize) {
    let (mut bad, mut blocked) = (0, 0);
    for m in MitigationConfig::grid(z) {
        let model = p
            .models
            .iter()
            .find(|x| x.claim_strategy == m.claim_strategy && x.label_strategy == m.label_strategy);
        let (w, ledger) = run_mitigation(&p.g, &p.snap, &m, model, &p.centrality, &p.spec, t_end).unwrap();
        bad += removal_violations(&w, &ledger);
        blocked += ledger.checks.iter().filter(|c| c.blocked).count();
    }
    (bad, blocked)
}

pub fn r_squared(pred: &[f64], y: &[f64]) -> f64 {
    let mean = y.iter().sum::<f64>() / y.len() as f64;
    let ss_tot: f64 = y.iter().map(|v| (v - mean).powi(2)).sum();
    let ss_res: f64 = pred.iter().zip(y).map(|(p, v)| (p - v).powi(2)).sum();
    1.0 - ss_res / ss_tot
}

pub fn random_dataset(rows: usize, cols: usize, seed: u64) -> (Vec<Vec<f64>>, Vec<f64>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let x: Vec<Vec<f64>> = (0..rows)
        .map(|_| (0..cols).map(|_| rng.random::<f64>()).collect())
        .collect();
    let y = x
        .iter()
        .map(|r| r.iter().enumerate().map(|(i, v)| (i as f64 + 1.0) * v).sum::<f64>() + rng.random::<f64>())
        .collect();
    (x, y)
}

/// Boosting rounds that increased the training loss, over 5 datasets.
pub fn gbdt_loss_increases() -> usize {
    let mut bad = 0;
    for seed in 0..5 {
        let (x, y) = random_dataset(80 + 20 * seed as usize, 3 + seed as usize, seed);
        let params = GbdtParams {
            n_trees: 60,
            ..Default::default()
        };
        let m = gbdt::fit(&x, &y, &params, seed).unwrap();
        assert_eq!(m.train_loss.len(), m.trees.len() + 1);
        bad += m.train_loss.windows(2).filter(|w| w[1] > w[0]).count();
    }
    bad
}

/// Held-out R^2 on a smooth target of 200 rows (150 train, 50 test).
pub fn gbdt_heldout_r2() -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(42);
    let x: Vec<Vec<f64>> = (0..200)
        .map(|_| vec![rng.random::<f64>(), rng.random::<f64>()])
        .collect();
    let y: Vec<f64> = x.iter().map(|r| (3.0 * r[0]).sin() + r[1] * r[1]).collect();
    let m = gbdt::fit(&x[..150], &y[..150], &GbdtParams::default(), 1).unwrap();
    r_squared(&m.predict(&x[150..]), &y[150..])
}

pub fn load_canonical() -> ExperimentConfig {
    ExperimentConfig::load(&canonical_config_path()).unwrap()
}
