//! Browser demo over the core library. The plain functions return serializable
//! structs; the `#[wasm_bindgen]` wrappers exchange them as JSON strings.

use serde::Serialize;
use volcano::blocks::{BlockParams, Budget, Evaluator};
use volcano::objective::{benchmark, benchmark_names, Objective};
use volcano::plan::{build_plan, execute, PlanShape, PlanSpec};
use volcano::surrogate::{expected_improvement, GpModel};
use wasm_bindgen::prelude::*;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct GpCurve {
    pub x: Vec<f64>,
    pub mean: Vec<f64>,
    pub sd: Vec<f64>,
    pub ei: Vec<f64>,
    pub best: f64,
}

/// Posterior and expected improvement of a 1-D GP on `[0, 1]`, sampled at `grid` points.
pub fn gp_curve(points: &[(f64, f64)], grid: usize) -> Result<GpCurve, String> {
    if points.is_empty() {
        return Err("add at least one observation".into());
    }
    if grid < 2 {
        return Err("grid needs at least 2 points".into());
    }
    let xs: Vec<Vec<f64>> = points.iter().map(|p| vec![p.0]).collect();
    let ys: Vec<f64> = points.iter().map(|p| p.1).collect();
    let gp = GpModel::fit(&xs, &ys, 1e-6).map_err(|e| e.to_string())?;
    let best = ys.iter().copied().fold(f64::INFINITY, f64::min);
    let mut curve = GpCurve {
        x: Vec::with_capacity(grid),
        mean: Vec::with_capacity(grid),
        sd: Vec::with_capacity(grid),
        ei: Vec::with_capacity(grid),
        best,
    };
    for i in 0..grid {
        let x = i as f64 / (grid - 1) as f64;
        let p = gp.predict(&[x]).map_err(|e| e.to_string())?;
        curve.x.push(x);
        curve.mean.push(p.mean);
        curve.sd.push(p.variance.sqrt());
        curve.ei.push(expected_improvement(&p, best));
    }
    Ok(curve)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ArmState {
    pub active: bool,
    pub pulls: usize,
    /// Best loss seen on the arm so far.
    pub best_loss: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BanditTrace {
    pub arms: Vec<String>,
    /// One entry per round, one state per arm.
    pub rounds: Vec<Vec<ArmState>>,
}

/// Runs a conditioning plan round by round and records which arms are still active.
pub fn bandit_trace(name: &str, rounds: usize, seed: u64) -> Result<BanditTrace, String> {
    let obj = benchmark(name).ok_or_else(|| format!("unknown benchmark `{name}`"))?;
    let params = BlockParams::default();
    let mut root = build_plan(&PlanSpec::new(PlanShape::C), obj.space(), params, seed).map_err(|e| e.to_string())?;
    let n_arms = root.children().len();
    let mut env = Evaluator::new(&obj, Budget::Evaluations(rounds * params.rounds * n_arms.max(1)), seed);
    let arms = root.arms().ok_or("benchmark has no conditioning variable")?.1.to_vec();
    let mut trace = BanditTrace { arms, rounds: Vec::new() };
    for _ in 0..rounds {
        if root.do_next(&mut env).is_err() {
            break;
        }
        let active = root.arms().expect("conditioning root").2;
        trace.rounds.push(
            root.children()
                .iter()
                .zip(active)
                .map(|(c, a)| ArmState {
                    active: *a,
                    pulls: c.pull_count(),
                    best_loss: c.best_reward().map(|r| -r),
                })
                .collect(),
        );
    }
    Ok(trace)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PlanTrace {
    pub plan: String,
    pub tree: String,
    pub losses: Vec<Option<f64>>,
    pub incumbent: Vec<f64>,
    pub block_paths: Vec<String>,
    pub best_config: String,
}

/// Runs `plan` on a bundled benchmark and returns the per-evaluation history and the final block tree.
pub fn plan_trace(name: &str, plan: &str, evaluations: usize, seed: u64) -> Result<PlanTrace, String> {
    let obj = benchmark(name).ok_or_else(|| format!("unknown benchmark `{name}`"))?;
    let spec = PlanSpec::from_label(plan).ok_or_else(|| format!("unknown plan `{plan}`"))?;
    let mut root = build_plan(&spec, obj.space(), BlockParams::default(), seed).map_err(|e| e.to_string())?;
    let mut env = Evaluator::new(&obj, Budget::Evaluations(evaluations), seed);
    execute(&mut root, &mut env).map_err(|e| e.to_string())?;
    let best_config = root
        .best_full()
        .map(|(c, _)| serde_json::to_string(&c).expect("configuration serializes"))
        .unwrap_or_default();
    let records = env.into_records();
    let mut best = f64::INFINITY;
    Ok(PlanTrace {
        plan: spec.label().to_string(),
        tree: root.describe(),
        losses: records.iter().map(|r| r.observation.loss).collect(),
        incumbent: records
            .iter()
            .map(|r| {
                best = best.min(r.observation.loss.unwrap_or(f64::INFINITY));
                best
            })
            .collect(),
        block_paths: records.iter().map(|r| r.block_path.join("/")).collect(),
        best_config,
    })
}

/// Benchmarks with a conditioning variable, for the bandit view.
pub fn conditional_benchmarks() -> Vec<&'static str> {
    benchmark_names()
        .into_iter()
        .filter(|n| benchmark(n).is_some_and(|b| b.space().algorithm_variable().is_some()))
        .collect()
}

fn to_js<T: Serialize>(r: Result<T, String>) -> Result<String, JsValue> {
    r.map(|v| serde_json::to_string(&v).expect("serializes")).map_err(|e| JsValue::from_str(&e))
}

/// `points_json`: `[[x, y], ...]` with x in [0, 1].
#[wasm_bindgen(js_name = gpCurve)]
pub fn gp_curve_js(points_json: &str, grid: usize) -> Result<String, JsValue> {
    let points: Vec<(f64, f64)> = serde_json::from_str(points_json).map_err(|e| JsValue::from_str(&e.to_string()))?;
    to_js(gp_curve(&points, grid))
}

#[wasm_bindgen(js_name = banditTrace)]
pub fn bandit_trace_js(name: &str, rounds: usize, seed: u32) -> Result<String, JsValue> {
    to_js(bandit_trace(name, rounds, seed.into()))
}

#[wasm_bindgen(js_name = planTrace)]
pub fn plan_trace_js(name: &str, plan: &str, evaluations: usize, seed: u32) -> Result<String, JsValue> {
    to_js(plan_trace(name, plan, evaluations, seed.into()))
}

#[wasm_bindgen(js_name = benchmarks)]
pub fn benchmarks_js() -> String {
    serde_json::to_string(&benchmark_names()).expect("serializes")
}

#[wasm_bindgen(js_name = conditionalBenchmarks)]
pub fn conditional_benchmarks_js() -> String {
    serde_json::to_string(&conditional_benchmarks()).expect("serializes")
}
