//! Counterfactual experiment harness: for each repetition, sample a graph,
//! run the pre-period once, then replay the post-period under every
//! mitigation from the same snapshot and compare belief changes.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::{Path, PathBuf};

use log::{error, info};
use serde::{Deserialize, Serialize};

use crate::checkworthy::{build_training_set, CheckworthinessModel, ClaimStrategy, LabelStrategy};
use crate::engine::{self, SimLog};
use crate::error::{Error, Result};
use crate::features::{tabulate_features, FeatureSpec};
use crate::gbdt::GbdtParams;
use crate::graph::{
    approx_betweenness, generate_popularity_graph, generate_synthetic_graph, load_graph, sample_subgraph, Graph,
    NodeId, PopularityGraphSpec,
};
use crate::intervention::{run_mitigation, FactCheckLedger, MitigationConfig, Workflow};
use crate::metrics::{self, CascadeComparison, CascadeStats};
use crate::rng::derive_seed;
use crate::world::{init_world, ScenarioConfig, Step, Veracity};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum GraphSource {
    Files {
        edges: PathBuf,
        communities: PathBuf,
    },
    Block {
        community_sizes: Vec<usize>,
        p_in: f64,
        p_out: f64,
    },
    Popularity(PopularityGraphSpec),
}

impl GraphSource {
    pub fn build(&self, seed: u64) -> Result<Graph> {
        match self {
            GraphSource::Files { edges, communities } => load_graph(edges, communities),
            GraphSource::Block {
                community_sizes,
                p_in,
                p_out,
            } => generate_synthetic_graph(community_sizes, *p_in, *p_out, seed),
            GraphSource::Popularity(spec) => generate_popularity_graph(spec, seed),
        }
    }

    /// Resolve relative file paths against `base`.
    pub fn rebase(&mut self, base: &Path) {
        if let GraphSource::Files { edges, communities } = self {
            for p in [edges, communities] {
                if p.is_relative() {
                    *p = base.join(&*p);
                }
            }
        }
    }
}

/// Which simulation logs to export per repetition.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LogExport {
    None,
    Baseline,
    All,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentConfig {
    pub scenario: ScenarioConfig,
    pub graph: GraphSource,
    pub sample_fraction: f64,
    pub repetitions: usize,
    pub t_end: Step,
    pub t_m: Step,
    pub grid: Vec<MitigationConfig>,
    pub master_seed: u64,
    /// Claims per training set.
    pub n_train: usize,
    /// Labelers per claim.
    pub m_labelers: usize,
    pub gbdt: GbdtParams,
    pub features: FeatureSpec,
    pub centrality_pivots: usize,
    pub export_logs: LogExport,
    /// Seeds used by cascade validation.
    pub validation_seeds: usize,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        let mut grid = vec![MitigationConfig::baseline()];
        grid.extend(MitigationConfig::grid(12));
        Self {
            // calibrated so misinformation cascades outgrow anti-misinformation ones
            scenario: ScenarioConfig {
                claims_per_topic_per_veracity: 600,
                bot_fraction: 0.01,
                retweet_scale: 0.35,
                ..ScenarioConfig::default()
            },
            graph: GraphSource::Popularity(PopularityGraphSpec {
                community_sizes: vec![25_000, 6_700, 1_700],
                mean_out_degree: 100.0,
                mixing: 0.1,
                popularity_exponent: 3.5,
                community_popularity: vec![1.0, 1.0, 1.5],
            }),
            sample_fraction: 0.15,
            repetitions: 5,
            t_end: 100,
            t_m: 50,
            grid,
            master_seed: 1,
            n_train: 200,
            m_labelers: 30,
            gbdt: GbdtParams::default(),
            features: FeatureSpec::default(),
            centrality_pivots: 256,
            export_logs: LogExport::Baseline,
            validation_seeds: 10,
        }
    }
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let mut cfg: Self = serde_json::from_str(&text)?;
        if let Some(dir) = path.parent() {
            cfg.graph.rebase(dir);
        }
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        self.scenario.validate()?;
        if self.t_m >= self.t_end {
            return Err(Error::InvalidParam(format!(
                "t_m = {} must precede t_end = {}",
                self.t_m, self.t_end
            )));
        }
        if self.repetitions == 0 {
            return Err(Error::InvalidParam("repetitions must be at least 1".into()));
        }
        if !(self.sample_fraction > 0.0 && self.sample_fraction <= 1.0) {
            return Err(Error::InvalidParam("sample_fraction must lie in (0, 1]".into()));
        }
        let baselines = self.grid.iter().filter(|m| m.is_baseline()).count();
        if baselines != 1 {
            return Err(Error::InvalidParam(format!(
                "grid must hold exactly one baseline, found {baselines}"
            )));
        }
        for m in &self.grid {
            m.validate(self.scenario.num_topics)?;
        }
        Ok(())
    }

    fn baseline_index(&self) -> usize {
        self.grid
            .iter()
            .position(MitigationConfig::is_baseline)
            .expect("validated grid")
    }
}

/// Outcome of one mitigation on one repetition.
#[derive(Debug, Clone)]
pub struct MitigationRun {
    pub cfg: MitigationConfig,
    pub iwcib: Vec<f64>,
    pub checks: FactCheckLedger,
    pub prefix_hash: String,
    pub misinfo_reads_post: u64,
    /// `[community][topic][t]`, cumulative reads per member.
    pub misinfo_series: Vec<Vec<Vec<f64>>>,
}

#[derive(Debug, Clone)]
pub struct RepetitionResult {
    pub rep: usize,
    pub seed: u64,
    pub graph: Graph,
    pub pre_hash: String,
    /// In grid order.
    pub runs: Vec<MitigationRun>,
    pub cascades: Vec<CascadeStats>,
    pub comparison: CascadeComparison,
}

/// Labels of the groups treatment effects are reported for.
pub fn group_labels(num_communities: usize) -> Vec<String> {
    let mut g: Vec<String> = (0..num_communities).map(|c| c.to_string()).collect();
    g.push("minority".into());
    g.push("network".into());
    g
}

fn group_members(g: &Graph) -> Vec<Vec<NodeId>> {
    let mut groups = g.community_members();
    let minority: Vec<NodeId> = (0..g.num_nodes() as NodeId).filter(|&j| g.community(j) != 0).collect();
    groups.push(minority);
    groups.push((0..g.num_nodes() as NodeId).collect());
    groups
}

impl RepetitionResult {
    /// `ates[mitigation][group]` against this repetition's baseline.
    pub fn ates(&self, baseline: usize) -> Result<Vec<Vec<f64>>> {
        let groups = group_members(&self.graph);
        let m0 = &self.runs[baseline].iwcib;
        self.runs
            .iter()
            .map(|r| groups.iter().map(|m| metrics::ate(&r.iwcib, m0, m)).collect())
            .collect()
    }

    pub fn pairing_ok(&self) -> bool {
        self.runs.iter().all(|r| r.prefix_hash == self.pre_hash)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupEffect {
    pub mean: f64,
    pub se: f64,
    pub per_rep: Vec<f64>,
}

impl GroupEffect {
    fn from_reps(per_rep: Vec<f64>) -> Self {
        let (mean, se) = metrics::mean_se(&per_rep);
        Self { mean, se, per_rep }
    }
}

/// A row of the component table: one value of one design dimension,
/// averaged over every mitigation that uses it.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Component {
    Claim(ClaimStrategy),
    Label(LabelStrategy),
    Workflow(Workflow),
}

impl Component {
    pub fn all() -> Vec<Component> {
        let mut v: Vec<Component> = ClaimStrategy::ALL.iter().map(|&c| Component::Claim(c)).collect();
        v.extend(LabelStrategy::ALL.iter().map(|&l| Component::Label(l)));
        v.extend([Workflow::TopPredicted, Workflow::TopPredictedByTopic].map(Component::Workflow));
        v
    }

    pub fn matches(&self, m: &MitigationConfig) -> bool {
        if m.is_baseline() {
            return false;
        }
        match *self {
            Component::Claim(c) => m.claim_strategy == c,
            Component::Label(l) => m.label_strategy == l,
            Component::Workflow(w) => m.workflow == w,
        }
    }

    pub fn dimension(&self) -> &'static str {
        match self {
            Component::Claim(_) => "claim_sampling",
            Component::Label(_) => "labeling",
            Component::Workflow(_) => "workflow",
        }
    }

    pub fn name(&self) -> &'static str {
        match *self {
            Component::Claim(c) => c.name(),
            Component::Label(l) => l.name(),
            Component::Workflow(w) => w.name(),
        }
    }
}

/// Per-repetition component effects `[component][group]`.
pub fn component_effects(grid: &[MitigationConfig], ates: &[Vec<f64>]) -> Vec<(Component, Vec<f64>)> {
    let groups = ates.first().map_or(0, Vec::len);
    Component::all()
        .into_iter()
        .map(|c| {
            let rows: Vec<&Vec<f64>> = grid
                .iter()
                .zip(ates)
                .filter(|(m, _)| c.matches(m))
                .map(|(_, a)| a)
                .collect();
            let avg = (0..groups)
                .map(|gi| {
                    if rows.is_empty() {
                        f64::NAN
                    } else {
                        rows.iter().map(|r| r[gi]).sum::<f64>() / rows.len() as f64
                    }
                })
                .collect();
            (c, avg)
        })
        .collect()
}

/// Ordinal properties of the component table, evaluated on one set of
/// effects `[component][group]` plus the per-mitigation ATEs.
pub fn ordinal_checks(
    grid: &[MitigationConfig],
    ates: &[Vec<f64>],
    components: &[(Component, Vec<f64>)],
    num_communities: usize,
) -> Vec<(&'static str, bool)> {
    let network = num_communities + 1;
    let minority = num_communities;
    let get = |c: Component| components.iter().find(|(k, _)| *k == c).map(|(_, v)| v.clone());
    let net = |c: Component| get(c).map_or(f64::NAN, |v| v[network]);
    let disparity = |c: Component| get(c).map_or(f64::NAN, |v| metrics::disparity_ratio(v[0], v[minority]));

    let all_negative = grid
        .iter()
        .zip(ates)
        .filter(|(m, _)| !m.is_baseline())
        .all(|(_, a)| a[..num_communities].iter().all(|&x| x < 0.0));
    let sv = net(Component::Claim(ClaimStrategy::StratifiedVirality)) < net(Component::Claim(ClaimStrategy::Virality));
    let (r, s, k) = (
        net(Component::Label(LabelStrategy::Random)),
        net(Component::Label(LabelStrategy::Stratified)),
        net(Component::Label(LabelStrategy::KnowledgeableCommunity)),
    );
    let tp = Component::Workflow(Workflow::TopPredicted);
    let tpt = Component::Workflow(Workflow::TopPredictedByTopic);
    vec![
        ("(a) every mitigation helps every community", all_negative),
        ("(b) stratified virality beats virality", sv),
        ("(c) knowledgeable < stratified < random", k < s && s < r),
        (
            "(d) by-topic lowers disparity at a network cost",
            disparity(tpt) < disparity(tp) && net(tpt) > net(tp),
        ),
    ]
}

#[derive(Debug, Clone)]
pub struct ExperimentResult {
    pub config: ExperimentConfig,
    pub reps: Vec<RepetitionResult>,
    pub failed_reps: Vec<(usize, String)>,
    /// `effects[mitigation][group]`
    pub effects: Vec<Vec<GroupEffect>>,
    pub components: Vec<(Component, Vec<GroupEffect>)>,
    pub num_communities: usize,
}

impl ExperimentResult {
    pub fn is_partial(&self) -> bool {
        !self.failed_reps.is_empty()
    }

    /// Ordinal checks for each repetition, then for the pooled means.
    pub fn ordinal_checks_per_rep(&self) -> Result<Vec<Vec<(&'static str, bool)>>> {
        let b = self.config.baseline_index();
        self.reps
            .iter()
            .map(|r| {
                let ates = r.ates(b)?;
                let comps = component_effects(&self.config.grid, &ates);
                Ok(ordinal_checks(&self.config.grid, &ates, &comps, self.num_communities))
            })
            .collect()
    }

    pub fn pooled_ordinal_checks(&self) -> Vec<(&'static str, bool)> {
        let ates: Vec<Vec<f64>> = self
            .effects
            .iter()
            .map(|m| m.iter().map(|g| g.mean).collect())
            .collect();
        let comps: Vec<(Component, Vec<f64>)> = self
            .components
            .iter()
            .map(|(c, g)| (*c, g.iter().map(|e| e.mean).collect()))
            .collect();
        ordinal_checks(&self.config.grid, &ates, &comps, self.num_communities)
    }

    pub fn write(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        std::fs::write(
            dir.join("effective_config.json"),
            serde_json::to_string_pretty(&self.config)?,
        )?;
        let labels = group_labels(self.num_communities);
        let n_reps = self.reps.len();

        let mut f = std::io::BufWriter::new(std::fs::File::create(dir.join("ate.csv"))?);
        writeln!(
            f,
            "mitigation,claim_strategy,label_strategy,workflow,group,ate,se,reps,partial"
        )?;
        for (m, eff) in self.config.grid.iter().zip(&self.effects) {
            for (label, e) in labels.iter().zip(eff) {
                writeln!(
                    f,
                    "{},{},{},{},{label},{:?},{:?},{n_reps},{}",
                    m.name(),
                    m.claim_strategy.name(),
                    m.label_strategy.name(),
                    m.workflow.name(),
                    e.mean,
                    e.se,
                    self.is_partial() as u8
                )?;
            }
        }
        f.flush()?;

        let minority = self.num_communities;
        let mut f = std::io::BufWriter::new(std::fs::File::create(dir.join("disparity.csv"))?);
        let per_minority: Vec<String> = (1..self.num_communities).map(|c| format!("disparity_vs_{c}")).collect();
        writeln!(f, "mitigation,network_ate,disparity_pooled,{}", per_minority.join(","))?;
        for (m, eff) in self.config.grid.iter().zip(&self.effects) {
            let cols: Vec<String> = (1..self.num_communities)
                .map(|c| format!("{:?}", metrics::disparity_ratio(eff[0].mean, eff[c].mean)))
                .collect();
            writeln!(
                f,
                "{},{:?},{:?},{}",
                m.name(),
                eff[minority + 1].mean,
                metrics::disparity_ratio(eff[0].mean, eff[minority].mean),
                cols.join(",")
            )?;
        }
        f.flush()?;

        let mut f = std::io::BufWriter::new(std::fs::File::create(dir.join("components.csv"))?);
        writeln!(f, "dimension,component,group,ate,se,disparity_pooled")?;
        for (c, eff) in &self.components {
            let d = metrics::disparity_ratio(eff[0].mean, eff[minority].mean);
            for (label, e) in labels.iter().zip(eff) {
                writeln!(
                    f,
                    "{},{},{label},{:?},{:?},{d:?}",
                    c.dimension(),
                    c.name(),
                    e.mean,
                    e.se
                )?;
            }
        }
        f.flush()?;

        let mut f = std::io::BufWriter::new(std::fs::File::create(dir.join("iwcib.csv"))?);
        writeln!(f, "rep,mitigation,node,original_id,community,iwcib")?;
        for r in &self.reps {
            for run in &r.runs {
                let name = run.cfg.name();
                for (j, v) in run.iwcib.iter().enumerate() {
                    let node = j as NodeId;
                    writeln!(
                        f,
                        "{},{name},{j},{},{},{v:?}",
                        r.rep,
                        r.graph.original_id(node),
                        r.graph.community(node)
                    )?;
                }
            }
        }
        f.flush()?;

        let mut f = std::io::BufWriter::new(std::fs::File::create(dir.join("factchecks.csv"))?);
        writeln!(f, "rep,mitigation,t,claim_id,score,veracity,blocked,topic")?;
        for r in &self.reps {
            for run in &r.runs {
                for c in &run.checks.checks {
                    writeln!(
                        f,
                        "{},{},{},{},{:?},{},{},{}",
                        r.rep,
                        run.cfg.name(),
                        c.t,
                        c.claim,
                        c.score,
                        c.veracity.value(),
                        c.blocked as u8,
                        c.topic
                    )?;
                }
            }
        }
        f.flush()?;

        let mut f = std::io::BufWriter::new(std::fs::File::create(dir.join("misinfo_read.csv"))?);
        writeln!(f, "rep,mitigation,community,topic,t,reads_per_node")?;
        for r in &self.reps {
            for run in &r.runs {
                for (c, topics) in run.misinfo_series.iter().enumerate() {
                    for (topic, series) in topics.iter().enumerate() {
                        for (t, v) in series.iter().enumerate() {
                            writeln!(f, "{},{},{c},{topic},{t},{v:?}", r.rep, run.cfg.name())?;
                        }
                    }
                }
            }
        }
        f.flush()?;

        let mut f = std::io::BufWriter::new(std::fs::File::create(dir.join("pairing.csv"))?);
        writeln!(f, "rep,mitigation,pre_period_hash,matches_baseline")?;
        for r in &self.reps {
            for run in &r.runs {
                writeln!(
                    f,
                    "{},{},{},{}",
                    r.rep,
                    run.cfg.name(),
                    run.prefix_hash,
                    (run.prefix_hash == r.pre_hash) as u8
                )?;
            }
        }
        f.flush()?;

        let all: Vec<CascadeStats> = self.reps.iter().flat_map(|r| r.cascades.iter().cloned()).collect();
        let mut f = std::io::BufWriter::new(std::fs::File::create(dir.join("cascades.csv"))?);
        writeln!(
            f,
            "rep,root,claim_id,veracity,created_at,depth,max_breadth,size,unique_readers,structural_virality"
        )?;
        for r in &self.reps {
            for s in &r.cascades {
                writeln!(
                    f,
                    "{},{},{},{},{},{},{},{},{},{:?}",
                    r.rep,
                    s.root,
                    s.claim,
                    s.veracity.value(),
                    s.created_at,
                    s.depth,
                    s.max_breadth,
                    s.size,
                    s.unique_readers,
                    s.structural_virality
                )?;
            }
        }
        f.flush()?;
        write_pooled_ccdfs(&all, &self.reps, dir)?;

        if self.is_partial() {
            let mut f = std::fs::File::create(dir.join("failed_reps.csv"))?;
            writeln!(f, "rep,error")?;
            for (r, e) in &self.failed_reps {
                writeln!(f, "{r},\"{}\"", e.replace('"', "'"))?;
            }
        }
        Ok(())
    }
}

fn write_pooled_ccdfs(all: &[CascadeStats], reps: &[RepetitionResult], dir: &Path) -> Result<()> {
    type Metric = fn(&CascadeStats) -> f64;
    let metrics_list: [(&str, Metric); 4] = [
        ("depth", |s| s.depth as f64),
        ("max_breadth", |s| s.max_breadth as f64),
        ("unique_readers", |s| s.unique_readers as f64),
        ("structural_virality", |s| s.structural_virality),
    ];
    type BySign = Vec<(Veracity, Vec<f64>)>;
    let mut series: Vec<(&str, BySign)> = metrics_list
        .iter()
        .map(|(name, f)| {
            let by_v = Veracity::ALL
                .iter()
                .map(|&v| (v, all.iter().filter(|s| s.veracity == v).map(f).collect()))
                .collect();
            (*name, by_v)
        })
        .collect();
    let mut upc: Vec<(Veracity, Vec<f64>)> = Veracity::ALL.iter().map(|&v| (v, Vec::new())).collect();
    for r in reps {
        let mut counts: BTreeMap<u32, (Veracity, u32)> = BTreeMap::new();
        for s in &r.cascades {
            counts.entry(s.claim).or_insert((s.veracity, 0)).1 += 1;
        }
        for (v, c) in counts.values() {
            upc[v.index()].1.push(*c as f64);
        }
    }
    series.push(("utterances_per_claim", upc));
    for (name, by_v) in series {
        let mut f = std::io::BufWriter::new(std::fs::File::create(dir.join(format!("ccdf_{name}.csv")))?);
        writeln!(f, "veracity,x,p")?;
        for (v, vals) in by_v {
            if vals.is_empty() {
                continue;
            }
            for (x, p) in metrics::ccdf(&vals)? {
                writeln!(f, "{},{x:?},{p:?}", v.value())?;
            }
        }
        f.flush()?;
    }
    Ok(())
}

fn misinfo_reads_between(log: &SimLog, from: Step, to: Step) -> u64 {
    let mut total = 0u64;
    for t in from..to {
        for c in 0..log.num_communities() {
            for topic in 0..log.num_topics() {
                total += log.misinfo_reads_at(t, c, topic) as u64;
            }
        }
    }
    total
}

fn strategy_tag(c: ClaimStrategy, l: LabelStrategy) -> String {
    format!("{}_{}", c.name(), l.name())
}

/// Run one repetition. Per-repetition artifacts go under `out` if given.
pub fn run_repetition(
    cfg: &ExperimentConfig,
    base: &Graph,
    rep: usize,
    out: Option<&Path>,
) -> Result<RepetitionResult> {
    let seed = derive_seed(cfg.master_seed, &[rep as u64]);
    let g = sample_subgraph(base, cfg.sample_fraction, derive_seed(seed, &[1]))?;
    let mut w = init_world(&g, &cfg.scenario, derive_seed(seed, &[2]))?;
    engine::record_checkpoint(&mut w);
    engine::run(&g, &mut w, cfg.t_m, None)?;
    let snap = engine::snapshot(&w)?;
    let pre_hash = w.log.prefix_hash(cfg.t_m);
    info!(
        "rep {rep}: {} nodes, {} edges, {} utterances before t = {}",
        g.num_nodes(),
        g.num_edges(),
        w.log.utterances.len(),
        cfg.t_m
    );

    let centrality = approx_betweenness(&g, cfg.centrality_pivots, derive_seed(seed, &[3]))?;
    let features = tabulate_features(
        &w.log,
        &g,
        &centrality,
        &vec![None; w.claims.len()],
        cfg.t_m,
        &cfg.features,
    );

    let rep_dir = out.map(|d| d.join(format!("rep_{rep}")));
    if let Some(d) = &rep_dir {
        std::fs::create_dir_all(d)?;
        g.write_id_map(&d.join("id_remap.csv"))?;
        snap.write_to(&d.join(format!("snapshot_t{}.bin", cfg.t_m)))?;
        features.write_csv(&d.join("features.csv"))?;
        features.write_schema(&d.join("features_schema.json"))?;
    }

    let mut models: BTreeMap<(ClaimStrategy, LabelStrategy), CheckworthinessModel> = BTreeMap::new();
    for m in cfg.grid.iter().filter(|m| !m.is_baseline()) {
        let key = (m.claim_strategy, m.label_strategy);
        if models.contains_key(&key) {
            continue;
        }
        let set = build_training_set(
            &g,
            &w,
            &features,
            cfg.t_m,
            key.0,
            key.1,
            cfg.n_train,
            cfg.m_labelers,
            derive_seed(seed, &[4]),
        )?;
        let model = CheckworthinessModel::train(&set, &cfg.gbdt, derive_seed(seed, &[5, key.0 as u64, key.1 as u64]))?;
        if let Some(d) = &rep_dir {
            let tag = strategy_tag(key.0, key.1);
            set.write_csv(&d.join(format!("training_set_{tag}.csv")))?;
            model.write_json(&d.join(format!("model_{tag}.json")))?;
        }
        models.insert(key, model);
    }
    drop(w);

    let mut runs = Vec::with_capacity(cfg.grid.len());
    let mut cascades = Vec::new();
    let mut comparison = None;
    for (i, m) in cfg.grid.iter().enumerate() {
        let model = models.get(&(m.claim_strategy, m.label_strategy));
        let (wt, ledger) = run_mitigation(&g, &snap, m, model, &centrality, &cfg.features, cfg.t_end)?;
        let start = wt
            .log
            .checkpoint(cfg.t_m)
            .ok_or_else(|| Error::Mismatch("no checkpoint at t_m".into()))?;
        let end = wt
            .log
            .checkpoint(cfg.t_end)
            .ok_or_else(|| Error::Mismatch("no checkpoint at t_end".into()))?;
        let impactedness: Vec<Vec<f64>> = wt.nodes.iter().map(|n| n.impactedness.clone()).collect();
        let iwcib = metrics::iwcib_all(&start.beliefs, &end.beliefs, &impactedness)?;
        if m.is_baseline() {
            cascades = metrics::cascade_stats(&wt.log, &wt.claims);
            comparison = Some(CascadeComparison::new(&cascades, &wt.log, &wt.claims));
        }
        if let Some(d) = &rep_dir {
            let run_dir = d.join(format!("m{i:02}"));
            std::fs::create_dir_all(&run_dir)?;
            let full = match cfg.export_logs {
                LogExport::All => true,
                LogExport::Baseline => m.is_baseline(),
                LogExport::None => false,
            };
            if full {
                wt.log.write_csv(&run_dir, &wt)?;
            } else {
                wt.log
                    .write_belief_checkpoints(&run_dir.join("belief_checkpoints.csv"), &wt)?;
                engine::write_claims(&run_dir.join("claims.csv"), &wt.claims)?;
            }
            ledger.write_csv(&run_dir.join("factchecks.csv"))?;
            std::fs::write(run_dir.join("mitigation.json"), serde_json::to_string_pretty(m)?)?;
        }
        runs.push(MitigationRun {
            cfg: m.clone(),
            iwcib,
            prefix_hash: wt.log.prefix_hash(cfg.t_m),
            misinfo_reads_post: misinfo_reads_between(&wt.log, cfg.t_m, cfg.t_end),
            misinfo_series: metrics::misinfo_read_series(&wt.log, &g),
            checks: ledger,
        });
        info!("rep {rep}: {} done", m.name());
    }
    Ok(RepetitionResult {
        rep,
        seed,
        graph: g,
        pre_hash,
        runs,
        cascades,
        comparison: comparison.expect("validated grid has a baseline"),
    })
}

/// Run the whole grid over every repetition and aggregate.
pub fn run_experiment(cfg: &ExperimentConfig, out: Option<&Path>) -> Result<ExperimentResult> {
    cfg.validate()?;
    let base = cfg.graph.build(derive_seed(cfg.master_seed, &[u64::MAX]))?;
    if base.num_communities() != cfg.scenario.num_communities() {
        return Err(Error::Dimension(format!(
            "graph has {} communities, scenario {}",
            base.num_communities(),
            cfg.scenario.num_communities()
        )));
    }
    let mut reps = Vec::new();
    let mut failed = Vec::new();
    for r in 0..cfg.repetitions {
        match run_repetition(cfg, &base, r, out) {
            Ok(res) => reps.push(res),
            Err(e) => {
                error!("repetition {r} failed: {e}");
                failed.push((r, e.to_string()));
            }
        }
    }
    if reps.is_empty() {
        return Err(Error::Empty("every repetition failed".into()));
    }
    let b = cfg.baseline_index();
    let per_rep: Vec<Vec<Vec<f64>>> = reps.iter().map(|r| r.ates(b)).collect::<Result<_>>()?;
    let groups = per_rep[0][0].len();
    let effects = (0..cfg.grid.len())
        .map(|m| {
            (0..groups)
                .map(|gi| GroupEffect::from_reps(per_rep.iter().map(|a| a[m][gi]).collect()))
                .collect()
        })
        .collect();
    let comp_per_rep: Vec<Vec<(Component, Vec<f64>)>> =
        per_rep.iter().map(|a| component_effects(&cfg.grid, a)).collect();
    let components = Component::all()
        .into_iter()
        .enumerate()
        .map(|(ci, c)| {
            let eff = (0..groups)
                .map(|gi| GroupEffect::from_reps(comp_per_rep.iter().map(|r| r[ci].1[gi]).collect()))
                .collect();
            (c, eff)
        })
        .collect();
    let result = ExperimentResult {
        config: cfg.clone(),
        reps,
        failed_reps: failed,
        effects,
        components,
        num_communities: base.num_communities(),
    };
    if let Some(d) = out {
        result.write(d)?;
    }
    Ok(result)
}

/// Cascade-shape check: run the baseline only, for `validation_seeds` seeds, and
/// compare cascades by veracity.
pub fn validate_cascades(cfg: &ExperimentConfig) -> Result<Vec<CascadeComparison>> {
    cfg.scenario.validate()?;
    let base = cfg.graph.build(derive_seed(cfg.master_seed, &[u64::MAX]))?;
    (0..cfg.validation_seeds)
        .map(|s| {
            let seed = derive_seed(cfg.master_seed, &[0xF163, s as u64]);
            let g = sample_subgraph(&base, cfg.sample_fraction, derive_seed(seed, &[1]))?;
            let mut w = init_world(&g, &cfg.scenario, derive_seed(seed, &[2]))?;
            engine::run(&g, &mut w, cfg.t_end, None)?;
            let stats = metrics::cascade_stats(&w.log, &w.claims);
            Ok(CascadeComparison::new(&stats, &w.log, &w.claims))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny() -> ExperimentConfig {
        ExperimentConfig {
            graph: GraphSource::Block {
                community_sizes: vec![120, 60, 30],
                p_in: 0.08,
                p_out: 0.01,
            },
            sample_fraction: 1.0,
            repetitions: 2,
            t_end: 16,
            t_m: 8,
            n_train: 20,
            m_labelers: 6,
            centrality_pivots: 32,
            scenario: ScenarioConfig {
                claims_per_topic_per_veracity: 10,
                ..Default::default()
            },
            ..Default::default()
        }
    }

    #[test]
    fn config_round_trips_and_validates() {
        let cfg = ExperimentConfig::default();
        cfg.validate().unwrap();
        let back: ExperimentConfig = serde_json::from_str(&serde_json::to_string(&cfg).unwrap()).unwrap();
        assert_eq!(back, cfg);
        let mut bad = cfg.clone();
        bad.t_m = bad.t_end;
        assert!(bad.validate().is_err());
        let mut bad = cfg.clone();
        bad.grid.push(MitigationConfig::baseline());
        assert!(bad.validate().is_err());
    }

    #[test]
    fn baseline_only_grid_has_zero_effects() {
        let mut cfg = tiny();
        cfg.grid = vec![MitigationConfig::baseline()];
        let r = run_experiment(&cfg, None).unwrap();
        for e in &r.effects[0] {
            assert_eq!(e.mean, 0.0);
        }
    }

    #[test]
    fn tiny_grid_pairs_pre_periods() {
        let r = run_experiment(&tiny(), None).unwrap();
        assert_eq!(r.reps.len(), 2);
        assert!(r.reps.iter().all(RepetitionResult::pairing_ok));
        assert_eq!(r.effects.len(), 13);
    }

    #[test]
    fn component_rows_average_matching_mitigations() {
        let grid = {
            let mut g = vec![MitigationConfig::baseline()];
            g.extend(MitigationConfig::grid(2));
            g
        };
        let ates: Vec<Vec<f64>> = (0..grid.len()).map(|i| vec![-(i as f64); 5]).collect();
        let comps = component_effects(&grid, &ates);
        let (_, v) = comps
            .iter()
            .find(|(c, _)| *c == Component::Workflow(Workflow::TopPredicted))
            .unwrap();
        // TopPredicted sits at the odd grid slots 1, 3, ..., 11
        assert_eq!(v[0], -6.0);
    }
}
