//! JSON sidecar written next to each simulation CSV.

use nalgebra::DMatrix;
use resest::scenario::ScenarioFile;
use resest::sim::{PreparedScenario, TailMetrics, TrajectoryLog};
use serde_json::{json, Value};

fn rows(m: &DMatrix<f64>) -> Value {
    json!((0..m.nrows())
        .map(|i| m.row(i).iter().copied().collect::<Vec<_>>())
        .collect::<Vec<_>>())
}

pub fn metrics_json(m: &TailMetrics<f64>) -> Value {
    json!({
        "window": [m.window.0, m.window.1],
        "samples": m.samples,
        "max_inf_error": m.max_inf_error,
        "max_euclid_error": m.max_euclid_error,
        "per_agent_inf_error": m.per_agent_inf_error,
        "per_agent_euclid_error": m.per_agent_euclid_error,
        "sup_w": m.sup_w,
        "sup_v": m.sup_v,
        "residual_sup": m.residual_sup,
    })
}

/// Scenario echo, seeds, audit, bounds, tail metrics and, per agent, the
/// matrices `V_i` and `V~_i W~_i` with which its own reconstruction
/// `V_i z_i + V~_i W~_i xhat_i` can be formed from the CSV columns.
pub fn sidecar(
    prepared: &PreparedScenario<f64>,
    log: &TrajectoryLog<f64>,
    metrics: &TailMetrics<f64>,
    csv_file: &str,
) -> Value {
    let h = &log.header;
    let audit: Vec<Value> = log
        .audit
        .entries
        .iter()
        .map(|e| json!({ "assumption": e.assumption.label(), "pass": e.pass, "evidence": e.evidence }))
        .collect();
    let agents: Vec<Value> = prepared
        .bank
        .observers()
        .iter()
        .map(|o| {
            let d = &o.decomposition;
            json!({
                "agent": o.bank + 1,
                "observable_dim": o.observable_dim(),
                "v_obs": rows(&d.v_obs),
                "unobservable_projection": rows(&(&d.v_unobs * &d.w_unobs)),
            })
        })
        .collect();
    json!({
        "csv": csv_file,
        "scenario": ScenarioFile::from_spec(&prepared.spec),
        "seed": h.seed,
        "noise_seed": h.noise_seed,
        "dt": h.dt,
        "decimation": h.decimation,
        "assumption_violating": h.assumption_violating,
        "audit": audit,
        "basis": rows(prepared.basis.v()),
        "indicator_counts": prepared.basis.column_counts(),
        "bounds": {
            "lambda2": log.bounds.lambda2,
            "steady_state": log.bounds.steady_state,
            "disagreement": log.bounds.disagreement,
            "scaling_norm": log.bounds.scaling_norm,
        },
        "tail_metrics": metrics_json(metrics),
        "agents": agents,
    })
}
