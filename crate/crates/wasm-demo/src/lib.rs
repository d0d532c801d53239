//! Browser bindings for a few small simulator operations. Every export
//! returns a JSON string; failures come back as `{"error": "..."}`.

use serde_json::{json, Value};
use tacit::engine::{self, belief_after_read};
use tacit::graph::{generate_popularity_graph, generate_synthetic_graph, PopularityGraphSpec};
use tacit::metrics::{self, CascadeComparison, CascadeStats};
use tacit::world::{init_world, ScenarioConfig, Veracity};
use wasm_bindgen::prelude::*;

fn render(r: Result<Value, String>) -> String {
    match r {
        Ok(v) => v.to_string(),
        Err(e) => json!({ "error": e }).to_string(),
    }
}

fn veracity_from(v: i32) -> Result<Veracity, String> {
    Veracity::from_value(v as i8).ok_or_else(|| format!("veracity must be -1, 0 or 1, got {v}"))
}

fn label(v: Veracity) -> &'static str {
    match v {
        Veracity::Anti => "anti",
        Veracity::Noise => "noise",
        Veracity::Misinfo => "misinfo",
    }
}

/// Draw `claims` claims of one veracity and return each claim's virality
/// with its chance of being picked for a tweet.
#[wasm_bindgen]
pub fn claim_selection(claims: u32, veracity: i32, seed: u32) -> String {
    render((|| {
        let v = veracity_from(veracity)?;
        if !(1..=500).contains(&claims) {
            return Err("claims must lie in 1..=500".into());
        }
        let g = generate_synthetic_graph(&[4, 2, 2], 0.5, 0.1, seed as u64).map_err(|e| e.to_string())?;
        let cfg = ScenarioConfig {
            claims_per_topic_per_veracity: claims as usize,
            ..Default::default()
        };
        let w = init_world(&g, &cfg, seed as u64).map_err(|e| e.to_string())?;
        let mut rows: Vec<(f64, f64)> = engine::claim_selection_probabilities(&w, 0, v)
            .into_iter()
            .map(|(k, p)| (w.claim(k).virality, p))
            .collect();
        rows.sort_by(|a, b| b.0.total_cmp(&a.0));
        let (r, q) = cfg.virality.selection(v);
        Ok(json!({
            "r": r,
            "q": q,
            "claims": rows.iter().map(|(f, p)| json!({ "virality": f, "probability": p })).collect::<Vec<_>>(),
        }))
    })())
}

/// Belief after each read of a script: `+` misinformation, `-`
/// anti-misinformation, `0` noise. Other characters are skipped.
#[wasm_bindgen]
pub fn belief_trajectory(start: f64, learning_rate: f64, impactedness: f64, script: &str) -> String {
    render((|| {
        if !(0.0..=1.0).contains(&start) || !(0.0..=1.0).contains(&impactedness) {
            return Err("start belief and impactedness must lie in [0, 1]".into());
        }
        let mut b = start;
        let mut out = vec![b];
        let mut n = 0;
        for c in script.chars() {
            let v = match c {
                '+' => Veracity::Misinfo,
                '-' => Veracity::Anti,
                '0' => Veracity::Noise,
                _ => continue,
            };
            b = belief_after_read(b, learning_rate, n, v, impactedness);
            n += 1;
            out.push(b);
        }
        Ok(json!({ "beliefs": out }))
    })())
}

fn ccdfs(stats: &[CascadeStats], f: fn(&CascadeStats) -> f64) -> Result<Value, String> {
    let mut m = serde_json::Map::new();
    for v in [Veracity::Anti, Veracity::Misinfo] {
        let vals: Vec<f64> = stats.iter().filter(|s| s.veracity == v).map(f).collect();
        let pts = if vals.is_empty() {
            Vec::new()
        } else {
            metrics::ccdf(&vals).map_err(|e| e.to_string())?
        };
        m.insert(label(v).into(), json!(pts));
    }
    Ok(Value::Object(m))
}

/// Run a small three-community world and report cascade CCDFs by veracity,
/// the cascade comparison, and cumulative misinformation reads per member
/// of each community.
#[wasm_bindgen]
pub fn simulate(nodes: u32, bot_fraction: f64, retweet_scale: f64, steps: u32, seed: u32) -> String {
    render((|| {
        if !(60..=5000).contains(&nodes) || !(1..=200).contains(&steps) {
            return Err("nodes must lie in 60..=5000 and steps in 1..=200".into());
        }
        let n = nodes as usize;
        let spec = PopularityGraphSpec {
            community_sizes: vec![n * 25 / 33, n * 7 / 33, n - n * 25 / 33 - n * 7 / 33],
            mean_out_degree: 15.0,
            mixing: 0.1,
            popularity_exponent: 3.5,
            community_popularity: vec![1.0, 1.0, 1.5],
        };
        let g = generate_popularity_graph(&spec, seed as u64).map_err(|e| e.to_string())?;
        let cfg = ScenarioConfig {
            claims_per_topic_per_veracity: 100,
            bot_fraction,
            retweet_scale,
            ..Default::default()
        };
        let mut w = init_world(&g, &cfg, seed as u64 ^ 0x9e37).map_err(|e| e.to_string())?;
        engine::run(&g, &mut w, steps, None).map_err(|e| e.to_string())?;
        let stats = metrics::cascade_stats(&w.log, &w.claims);
        let cmp = CascadeComparison::new(&stats, &w.log, &w.claims);
        let series: Vec<Vec<f64>> = metrics::misinfo_read_series(&w.log, &g)
            .into_iter()
            .map(|topics| {
                let len = topics.first().map_or(0, Vec::len);
                (0..len).map(|t| topics.iter().map(|s| s[t]).sum()).collect()
            })
            .collect();
        Ok(json!({
            "nodes": g.num_nodes(),
            "edges": g.num_edges(),
            "utterances": w.log.utterances.len(),
            "comparison": cmp,
            "checks": cmp.checks().into_iter().map(|(name, ok)| json!({ "name": name, "ok": ok })).collect::<Vec<_>>(),
            "ccdf": {
                "depth": ccdfs(&stats, |s| s.depth as f64)?,
                "unique_readers": ccdfs(&stats, |s| s.unique_readers as f64)?,
            },
            "misinfo_read": series,
        }))
    })())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(s: &str) -> Value {
        serde_json::from_str(s).unwrap()
    }

    #[test]
    fn selection_probabilities_sum_to_one() {
        let v = parse(&claim_selection(20, 1, 3));
        let p: f64 = v["claims"]
            .as_array()
            .unwrap()
            .iter()
            .map(|c| c["probability"].as_f64().unwrap())
            .sum();
        assert!((p - 1.0).abs() < 1e-12);
        assert!(parse(&claim_selection(20, 7, 3))["error"].is_string());
    }

    #[test]
    fn belief_script_moves_the_right_way() {
        let v = parse(&belief_trajectory(0.5, 0.1, 0.5, "+x-0"));
        let b: Vec<f64> = v["beliefs"]
            .as_array()
            .unwrap()
            .iter()
            .map(|x| x.as_f64().unwrap())
            .collect();
        assert_eq!(b.len(), 4);
        assert!((b[1] - 0.65).abs() < 1e-12);
        assert!(b[2] < b[1]);
        assert_eq!(b[3], b[2]);
    }

    #[test]
    fn small_simulation_reports_everything() {
        let v = parse(&simulate(300, 0.01, 0.35, 20, 1));
        assert!(v["error"].is_null(), "{v}");
        assert_eq!(v["misinfo_read"].as_array().unwrap().len(), 3);
        assert!(v["ccdf"]["depth"]["misinfo"].is_array());
        assert!(parse(&simulate(10, 0.0, 0.3, 5, 1))["error"].is_string());
    }
}
