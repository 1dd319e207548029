//! wasm-bindgen entry points for the static page in `www/`.
//!
//! Each export is a thin wrapper over a plain function so the logic can be
//! tested natively.

use sar_core::branching::{simulate_branching, BranchingParams};
use sar_core::graph::regular_graph;
use sar_core::sim::{run_replicas, SimConfig};
use serde::Serialize;
use wasm_bindgen::prelude::*;

const MAX_REPLICAS: u64 = 200_000;
const MAX_NODES: usize = 5_000;

fn err(e: impl std::fmt::Display) -> String {
    e.to_string()
}

/// Extinction probability for `points` evenly spaced p in [0, 1].
pub fn extinction_curve_impl(k: u32, points: u32) -> Result<Vec<f64>, String> {
    if points < 2 {
        return Err("need at least two points".into());
    }
    (0..points)
        .map(|i| {
            let p = f64::from(i) / f64::from(points - 1);
            Ok(BranchingParams::new(p, k).map_err(err)?.extinction_probability(1e-12))
        })
        .collect()
}

#[derive(Debug, Serialize)]
pub struct WaveComparison {
    pub r0: f64,
    pub criticality: String,
    pub extinction: f64,
    pub expected: Vec<f64>,
    pub simulated: Vec<f64>,
    pub std_errors: Vec<f64>,
    pub extinct_fraction: f64,
}

pub fn branching_waves_impl(p: f64, k: u32, waves: u32, replicas: u64, seed: u64) -> Result<WaveComparison, String> {
    if replicas == 0 || replicas > MAX_REPLICAS {
        return Err(format!("replicas must be in 1..={MAX_REPLICAS}"));
    }
    let params = BranchingParams::new(p, k).map_err(err)?;
    let report = simulate_branching(params, waves, replicas, seed).map_err(err)?;
    let len = waves as usize + 1;
    let pad = |mut v: Vec<f64>| {
        v.resize(len, 0.0);
        v
    };
    Ok(WaveComparison {
        r0: params.reproduction_number(),
        criticality: params.classify().to_string(),
        extinction: params.extinction_probability(1e-12),
        expected: (0..=waves).map(|n| params.expected_wave_size(n)).collect(),
        simulated: pad(report.waves),
        std_errors: pad(report.std_errors),
        extinct_fraction: report.extinct_fraction,
    })
}

#[derive(Debug, Serialize)]
pub struct CampusRun {
    pub susceptible: Vec<f64>,
    pub affected: Vec<f64>,
    pub removed: Vec<f64>,
    pub mean_final_removed: f64,
    pub q05: f64,
    pub q50: f64,
    pub q95: f64,
    pub extinct_fraction: f64,
}

#[allow(clippy::too_many_arguments)]
pub fn simulate_regular_impl(
    n: usize,
    k: usize,
    p: f64,
    seeds: usize,
    dwell_t: u32,
    decay: f64,
    horizon: u32,
    replicas: u64,
    seed: u64,
) -> Result<CampusRun, String> {
    if n > MAX_NODES {
        return Err(format!("at most {MAX_NODES} students"));
    }
    if replicas > MAX_REPLICAS {
        return Err(format!("at most {MAX_REPLICAS} replicas"));
    }
    let g = regular_graph(n, k, p, seed).map_err(err)?;
    if seeds == 0 || seeds > g.node_count() {
        return Err("seed count must be between 1 and n".into());
    }
    let seed_ids: Vec<_> = g.nodes()[..seeds].to_vec();
    let cfg = SimConfig { dwell_t, decay, horizon, replicas, seed };
    cfg.validate().map_err(err)?;
    let s = run_replicas(&g, &seed_ids, &cfg).map_err(err)?;
    Ok(CampusRun {
        susceptible: s.mean_weekly.iter().map(|m| m.susceptible).collect(),
        affected: s.mean_weekly.iter().map(|m| m.affected).collect(),
        removed: s.mean_weekly.iter().map(|m| m.removed).collect(),
        mean_final_removed: s.mean_final_removed,
        q05: s.q05,
        q50: s.q50,
        q95: s.q95,
        extinct_fraction: s.extinct_fraction,
    })
}

fn to_json<T: Serialize>(r: Result<T, String>) -> Result<String, JsError> {
    r.and_then(|v| serde_json::to_string(&v).map_err(err)).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen]
pub fn extinction_curve(k: u32, points: u32) -> Result<Vec<f64>, JsError> {
    extinction_curve_impl(k, points).map_err(|e| JsError::new(&e))
}

/// JSON [`WaveComparison`].
#[wasm_bindgen]
pub fn branching_waves(p: f64, k: u32, waves: u32, replicas: u32, seed: u32) -> Result<String, JsError> {
    to_json(branching_waves_impl(p, k, waves, u64::from(replicas), u64::from(seed)))
}

/// JSON [`CampusRun`].
#[wasm_bindgen]
#[allow(clippy::too_many_arguments)]
pub fn simulate_regular(
    n: u32,
    k: u32,
    p: f64,
    seeds: u32,
    dwell_t: u32,
    decay: f64,
    horizon: u32,
    replicas: u32,
    seed: u32,
) -> Result<String, JsError> {
    to_json(simulate_regular_impl(
        n as usize,
        k as usize,
        p,
        seeds as usize,
        dwell_t,
        decay,
        horizon,
        u64::from(replicas),
        u64::from(seed),
    ))
}
