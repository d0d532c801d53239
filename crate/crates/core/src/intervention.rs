//! Post-period fact-checking: score circulating claims, pick `z` of them
//! each step and remove the ones that turn out to be misinformation.

use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::checkworthy::{CheckworthinessModel, ClaimStrategy, LabelStrategy};
use crate::engine::{self, Snapshot, StepHook};
use crate::error::{Error, Result};
use crate::features::{FeatureSpec, FeatureTracker};
use crate::graph::{CentralityMap, Graph};
use crate::world::{ClaimId, Step, Veracity, WorldState};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Workflow {
    TopPredicted,
    TopPredictedByTopic,
    None,
}

impl Workflow {
    pub fn name(self) -> &'static str {
        match self {
            Workflow::TopPredicted => "TopPredicted",
            Workflow::TopPredictedByTopic => "TopPredictedByTopic",
            Workflow::None => "None",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct MitigationConfig {
    pub claim_strategy: ClaimStrategy,
    pub label_strategy: LabelStrategy,
    pub workflow: Workflow,
    /// Claims fact-checked per step.
    pub z: usize,
}

impl MitigationConfig {
    /// The no-mitigation baseline.
    pub fn baseline() -> Self {
        Self {
            claim_strategy: ClaimStrategy::Virality,
            label_strategy: LabelStrategy::Random,
            workflow: Workflow::None,
            z: 0,
        }
    }

    pub fn is_baseline(&self) -> bool {
        self.workflow == Workflow::None || self.z == 0
    }

    /// Every combination of claim sampling, labeling and workflow.
    pub fn grid(z: usize) -> Vec<Self> {
        let mut out = Vec::new();
        for c in ClaimStrategy::ALL {
            for l in LabelStrategy::ALL {
                for wf in [Workflow::TopPredicted, Workflow::TopPredictedByTopic] {
                    out.push(Self {
                        claim_strategy: c,
                        label_strategy: l,
                        workflow: wf,
                        z,
                    });
                }
            }
        }
        out
    }

    pub fn name(&self) -> String {
        if self.is_baseline() {
            return "M0".into();
        }
        format!(
            "{}/{}/{}",
            self.claim_strategy.name(),
            self.label_strategy.name(),
            self.workflow.name()
        )
    }

    pub fn validate(&self, num_topics: usize) -> Result<()> {
        if self.workflow == Workflow::TopPredictedByTopic && self.z > 0 && self.z < num_topics {
            return Err(Error::InvalidParam(format!(
                "checking by topic needs z >= {num_topics}, got {}",
                self.z
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FactCheck {
    pub t: Step,
    pub claim: ClaimId,
    pub topic: u32,
    pub score: f64,
    pub veracity: Veracity,
    pub blocked: bool,
}

/// Every claim selected for checking so far, in selection order.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct FactCheckLedger {
    pub checks: Vec<FactCheck>,
    checked_at: Vec<Option<Step>>,
}

impl FactCheckLedger {
    pub fn new(num_claims: usize) -> Self {
        Self {
            checks: Vec::new(),
            checked_at: vec![None; num_claims],
        }
    }

    pub fn contains(&self, claim: ClaimId) -> bool {
        self.checked_at[claim as usize].is_some()
    }

    pub fn checked_at(&self) -> &[Option<Step>] {
        &self.checked_at
    }

    pub fn len(&self) -> usize {
        self.checks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.checks.is_empty()
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
        writeln!(f, "t,claim_id,score,veracity,blocked,topic")?;
        for c in &self.checks {
            writeln!(
                f,
                "{},{},{:?},{},{},{}",
                c.t,
                c.claim,
                c.score,
                c.veracity.value(),
                c.blocked as u8,
                c.topic
            )?;
        }
        f.flush()?;
        Ok(())
    }
}

fn by_score(a: &(ClaimId, f64), b: &(ClaimId, f64)) -> std::cmp::Ordering {
    b.1.total_cmp(&a.1).then(a.0.cmp(&b.0))
}

/// Choose which scored claims to check. Claims already in the ledger are
/// skipped; ties go to the lower claim id.
pub fn select_for_checking(
    scores: &[(ClaimId, f64)],
    workflow: Workflow,
    z: usize,
    topic_of: impl Fn(ClaimId) -> u32,
    num_topics: usize,
    ledger: &FactCheckLedger,
) -> Vec<ClaimId> {
    let mut pool: Vec<(ClaimId, f64)> = scores.iter().copied().filter(|&(k, _)| !ledger.contains(k)).collect();
    pool.sort_by(by_score);
    match workflow {
        Workflow::None => Vec::new(),
        Workflow::TopPredicted => pool.into_iter().take(z).map(|(k, _)| k).collect(),
        Workflow::TopPredictedByTopic => {
            let per = z / num_topics.max(1);
            let mut taken = vec![0usize; num_topics];
            let mut out = Vec::new();
            for (k, _) in pool {
                let t = topic_of(k) as usize;
                if taken[t] < per {
                    taken[t] += 1;
                    out.push(k);
                }
            }
            out
        }
    }
}

/// Send `claim` to a perfect fact-checker. Misinformation is blocked at once.
pub fn fact_check(claim: ClaimId, score: f64, w: &mut WorldState, ledger: &mut FactCheckLedger) -> FactCheck {
    let t = w.clock;
    let c = &mut w.claims[claim as usize];
    c.fact_checked_at = Some(t);
    if c.veracity == Veracity::Misinfo {
        c.blocked = true;
    }
    ledger.checked_at[claim as usize] = Some(t);
    let check = FactCheck {
        t,
        claim,
        topic: c.topic,
        score,
        veracity: c.veracity,
        blocked: c.blocked,
    };
    ledger.checks.push(check.clone());
    check
}

/// Claims with at least one utterance during step `t`.
fn active_during(w: &WorldState, t: Step) -> Vec<ClaimId> {
    let mut seen = vec![false; w.claims.len()];
    for u in w.log.utterances.iter().rev() {
        if u.created_at < t {
            break;
        }
        if u.created_at == t {
            seen[u.claim as usize] = true;
        }
    }
    (0..w.claims.len() as ClaimId).filter(|&k| seen[k as usize]).collect()
}

/// Step hook that scores the claims circulating in the previous step and
/// fact-checks the chosen ones before the next step starts.
pub struct InterventionHook<'a> {
    tracker: FeatureTracker<'a>,
    model: &'a CheckworthinessModel,
    cfg: MitigationConfig,
    pub ledger: FactCheckLedger,
}

impl<'a> InterventionHook<'a> {
    pub fn new(
        g: &'a Graph,
        centrality: &'a CentralityMap,
        spec: FeatureSpec,
        model: &'a CheckworthinessModel,
        cfg: MitigationConfig,
        num_claims: usize,
    ) -> Self {
        Self {
            tracker: FeatureTracker::new(g, centrality, spec, num_claims),
            model,
            cfg,
            ledger: FactCheckLedger::new(num_claims),
        }
    }
}

impl StepHook for InterventionHook<'_> {
    fn before_step(&mut self, _g: &Graph, w: &mut WorldState) -> Result<()> {
        let t = w.clock;
        if t == 0 {
            return Ok(());
        }
        self.tracker.ingest(&w.log, t);
        let mut ids = Vec::new();
        let mut rows = Vec::new();
        for k in active_during(w, t - 1) {
            if self.ledger.contains(k) {
                continue;
            }
            if let Some(r) = self.tracker.row(k) {
                ids.push(k);
                rows.push(r.to_vector());
            }
        }
        let scored: Vec<(ClaimId, f64)> = ids.into_iter().zip(self.model.score(&rows)).collect();
        let claims = &w.claims;
        let picks = select_for_checking(
            &scored,
            self.cfg.workflow,
            self.cfg.z,
            |k| claims[k as usize].topic,
            w.config.num_topics,
            &self.ledger,
        );
        for k in picks {
            let s = scored.iter().find(|p| p.0 == k).map_or(f64::NAN, |p| p.1);
            fact_check(k, s, w, &mut self.ledger);
        }
        Ok(())
    }
}

/// Resume from `snap` and run to `t_end` under `cfg`. The baseline runs
/// with no hook at all.
pub fn run_mitigation(
    g: &Graph,
    snap: &Snapshot,
    cfg: &MitigationConfig,
    model: Option<&CheckworthinessModel>,
    centrality: &CentralityMap,
    spec: &FeatureSpec,
    t_end: Step,
) -> Result<(WorldState, FactCheckLedger)> {
    let mut w = engine::restore(snap)?;
    cfg.validate(w.config.num_topics)?;
    if cfg.is_baseline() {
        engine::run(g, &mut w, t_end, None)?;
        let n = w.claims.len();
        return Ok((w, FactCheckLedger::new(n)));
    }
    let model = model.ok_or_else(|| Error::Mismatch(format!("mitigation {} needs a model", cfg.name())))?;
    if model.claim_strategy != cfg.claim_strategy || model.label_strategy != cfg.label_strategy {
        return Err(Error::Mismatch(format!(
            "model trained for {}/{} used with {}",
            model.claim_strategy.name(),
            model.label_strategy.name(),
            cfg.name()
        )));
    }
    let n = w.claims.len();
    let mut hook = InterventionHook::new(g, centrality, spec.clone(), model, cfg.clone(), n);
    engine::run(g, &mut w, t_end, Some(&mut hook))?;
    Ok((w, hook.ledger))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn topics(k: ClaimId) -> u32 {
        // A=0 and B=1 are topic 0, C=2 is topic 1
        if k < 2 {
            0
        } else {
            1
        }
    }

    #[test]
    fn top_predicted() {
        let l = FactCheckLedger::new(3);
        let s = [(0, 0.9), (1, 0.8), (2, 0.7)];
        assert_eq!(
            select_for_checking(&s, Workflow::TopPredicted, 2, topics, 2, &l),
            vec![0, 1]
        );
        assert_eq!(
            select_for_checking(&s, Workflow::TopPredicted, 9, topics, 2, &l),
            vec![0, 1, 2]
        );
        assert!(select_for_checking(&s, Workflow::None, 2, topics, 2, &l).is_empty());
    }

    #[test]
    fn by_topic_takes_best_of_each_topic() {
        let l = FactCheckLedger::new(3);
        let s = [(0, 0.9), (1, 0.8), (2, 0.7)];
        assert_eq!(
            select_for_checking(&s, Workflow::TopPredictedByTopic, 2, topics, 2, &l),
            vec![0, 2]
        );
    }

    #[test]
    fn ties_go_to_lower_id() {
        let l = FactCheckLedger::new(3);
        let s = [(2, 0.5), (1, 0.5), (0, 0.1)];
        assert_eq!(
            select_for_checking(&s, Workflow::TopPredicted, 1, topics, 2, &l),
            vec![1]
        );
    }

    #[test]
    fn checked_claims_are_never_selected_again() {
        let g = crate::graph::generate_synthetic_graph(&[10, 10, 5], 0.2, 0.05, 1).unwrap();
        let mut w = crate::world::init_world(&g, &Default::default(), 1).unwrap();
        let mut l = FactCheckLedger::new(w.claims.len());
        fact_check(0, 0.9, &mut w, &mut l);
        let s = [(0, 0.9), (1, 0.8)];
        assert_eq!(
            select_for_checking(&s, Workflow::TopPredicted, 1, topics, 2, &l),
            vec![1]
        );
    }

    #[test]
    fn only_misinformation_is_blocked() {
        let g = crate::graph::generate_synthetic_graph(&[10, 10, 5], 0.2, 0.05, 1).unwrap();
        let mut w = crate::world::init_world(&g, &Default::default(), 1).unwrap();
        let mut l = FactCheckLedger::new(w.claims.len());
        for v in Veracity::ALL {
            let k = w.claims.iter().find(|c| c.veracity == v).unwrap().id;
            let c = fact_check(k, 1.0, &mut w, &mut l);
            assert_eq!(c.blocked, v == Veracity::Misinfo);
            assert_eq!(w.claims[k as usize].blocked, v == Veracity::Misinfo);
            assert!(l.contains(k));
        }
    }

    #[test]
    fn grid_and_validation() {
        let g = MitigationConfig::grid(2);
        assert_eq!(g.len(), 12);
        assert!(g.iter().all(|m| !m.is_baseline()));
        let mut m = g[1].clone();
        assert_eq!(m.workflow, Workflow::TopPredictedByTopic);
        m.z = 1;
        assert!(m.validate(2).is_err());
        assert_eq!(MitigationConfig::baseline().name(), "M0");
    }
}
