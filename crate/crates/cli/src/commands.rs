use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::Path;

use nalgebra::DVector;
use rayon::prelude::*;
use resest::estimator::plug_and_play_params;
use resest::fixtures::theta_sum_row;
use resest::graph::algebraic_connectivity;
use resest::median::{run_median_solver_with, MedianOptions, MedianProblem};
use resest::scenario::{bundled_text, ScenarioFile, BUNDLED};
use resest::sim::{
    audit_assumptions, local_reconstruction, run_prepared, scenario_tail_metrics, window_metrics, PreparedScenario,
    SimError, TrajectoryLog, VariantSpec,
};
use resest::{median_tracking_bound, ScenarioSpec64, Topology};

use crate::sidecar::sidecar;
use crate::{CliError, MedianArgs, SweepArgs, TopologyPreset};

fn input<E: std::fmt::Display>(context: &str) -> impl FnOnce(E) -> CliError + '_ {
    move |e| CliError::Input(format!("{context}: {e}"))
}

/// Reads a scenario file, falling back to the bundled scenario of that name.
fn load(scenario: &str) -> Result<ScenarioSpec64, CliError> {
    let path = Path::new(scenario);
    let text = if path.exists() {
        fs::read_to_string(path).map_err(input(scenario))?
    } else {
        bundled_text(scenario)
            .map_err(|_| CliError::Input(format!("{scenario}: no such file or bundled scenario")))?
            .to_string()
    };
    ScenarioFile::parse(&text).map_err(input(scenario))
}

fn sim_error(e: SimError) -> CliError {
    match e {
        SimError::AuditFailure(report) => CliError::Audit(format!(
            "assumption audit failed (use --force to simulate anyway)\n{report}"
        )),
        SimError::NumericalBlowup { .. } => CliError::Numerical(e.to_string()),
        SimError::Observability(_) => CliError::Audit(e.to_string()),
        other => CliError::Input(other.to_string()),
    }
}

fn verdict(ok: bool) -> &'static str {
    if ok {
        "PASS"
    } else {
        "FAIL"
    }
}

pub fn audit(scenario: &str) -> Result<(), CliError> {
    let spec = load(scenario)?;
    let report = audit_assumptions(&spec);
    print!("{report}");
    if report.all_pass() {
        Ok(())
    } else {
        Err(CliError::Audit(format!("{}: assumption audit failed", spec.name)))
    }
}

fn preset(p: TopologyPreset, n: usize) -> Topology {
    match p {
        TopologyPreset::Ring => Topology::ring(n),
        TopologyPreset::Complete => Topology::complete(n),
        TopologyPreset::Path => Topology::path(n),
    }
}

pub fn median(args: &MedianArgs) -> Result<(), CliError> {
    let n = args
        .z
        .as_ref()
        .map(Vec::len)
        .or(args.s.as_ref().map(Vec::len))
        .or(args.n)
        .ok_or_else(|| CliError::Input("give --z, --s or --n".into()))?;
    let z = args.z.clone().unwrap_or_else(|| (0..n).map(|i| i as f64).collect());
    let s = match &args.s {
        Some(s) => s
            .iter()
            .map(|&v| match v {
                0 => Ok(false),
                1 => Ok(true),
                other => Err(CliError::Input(format!("indicators must be 0 or 1, got {other}"))),
            })
            .collect::<Result<Vec<_>, _>>()?,
        None => vec![true; n],
    };
    let problem = MedianProblem::new(z, s, preset(args.topology, n), args.gamma).map_err(input("median problem"))?;
    let x0 = DVector::from_vec(args.x0.clone().unwrap_or_else(|| vec![0.0; n]));
    let horizon = args.horizon.unwrap_or_else(|| problem.default_horizon(&x0));
    let options = MedianOptions {
        record_every: args.decimation.max(1),
        ..MedianOptions::default()
    };
    let run = run_median_solver_with(&problem, &x0, horizon, args.dt, &options).map_err(input("median solver"))?;

    if let Some(path) = &args.out {
        let mut out = BufWriter::new(File::create(path).map_err(input(&path.display().to_string()))?);
        let mut header = vec!["t".to_string()];
        header.extend((1..=n).map(|i| format!("x_{i}")));
        header.push("dist_to_median_set".into());
        let io = |e: std::io::Error| CliError::Input(format!("{}: {e}", path.display()));
        writeln!(out, "{}", header.join(",")).map_err(io)?;
        for ((t, x), d) in run.times.iter().zip(&run.states).zip(&run.distances) {
            let mut row = vec![t.to_string()];
            row.extend(x.iter().map(f64::to_string));
            row.push(d.to_string());
            writeln!(out, "{}", row.join(",")).map_err(io)?;
        }
        out.flush().map_err(io)?;
    }

    let m = run.median;
    println!("median set = [{}, {}]", m.lower, m.upper);
    match run.lambda2 {
        Some(l) => println!("lambda_2 = {l:.7}"),
        None => println!("lambda_2 = n/a (single agent)"),
    }
    println!("horizon = {horizon}, tail window from t = {}", run.tail_start);
    println!("measured tail distance = {:.5}", run.tail_distance);
    match run.bound {
        Some(b) => println!("median tracking bound = {b:.5}: {}", verdict(run.tail_distance <= b)),
        None => println!("median tracking bound = n/a (needs a connected graph of at least two agents)"),
    }
    Ok(())
}

fn write_outputs(
    prepared: &PreparedScenario<f64>,
    log: &TrajectoryLog<f64>,
    out_dir: &Path,
) -> Result<resest::sim::TailMetrics<f64>, CliError> {
    fs::create_dir_all(out_dir).map_err(input(&out_dir.display().to_string()))?;
    let name = &prepared.spec.name;
    let csv_name = format!("{name}.csv");
    let csv_path = out_dir.join(&csv_name);
    let io = |p: &Path| {
        let p = p.display().to_string();
        move |e: std::io::Error| CliError::Input(format!("{p}: {e}"))
    };
    let mut out = BufWriter::new(File::create(&csv_path).map_err(io(&csv_path))?);
    log.write_csv(&mut out).map_err(io(&csv_path))?;
    out.flush().map_err(io(&csv_path))?;
    let metrics = scenario_tail_metrics(&prepared.spec, log);
    let json_path = out_dir.join(format!("{name}.json"));
    let json = serde_json::to_string_pretty(&sidecar(prepared, log, &metrics, &csv_name)).expect("sidecar serializes");
    fs::write(&json_path, json + "\n").map_err(io(&json_path))?;
    println!("wrote {} and {}", csv_path.display(), json_path.display());
    Ok(metrics)
}

fn simulate_spec(spec: &ScenarioSpec64, force: bool) -> Result<(PreparedScenario<f64>, TrajectoryLog<f64>), CliError> {
    spec.validate().map_err(sim_error)?;
    let audit = audit_assumptions(spec);
    if !audit.all_pass() && !force {
        return Err(sim_error(SimError::AuditFailure(Box::new(audit))));
    }
    let prepared = PreparedScenario::new(spec).map_err(sim_error)?;
    let log = run_prepared(&prepared, audit).map_err(sim_error)?;
    Ok((prepared, log))
}

pub fn simulate(scenario: &str, out_dir: &Path, force: bool) -> Result<(), CliError> {
    let spec = load(scenario)?;
    let (prepared, log) = simulate_spec(&spec, force)?;
    if log.header.assumption_violating {
        println!("assumption-violating run:");
        print!("{}", log.audit);
    }
    let m = write_outputs(&prepared, &log, out_dir)?;
    println!("tail window [{}, {}] ({} samples)", m.window.0, m.window.1, m.samples);
    println!("max_i sup ||xhat_i - x||_inf = {:.6e}", m.max_inf_error);
    println!("max_i sup ||xhat_i - x||_2   = {:.6e}", m.max_euclid_error);
    println!("sup W = {:.6e}, sup V = {:.6e}", m.sup_w, m.sup_v);
    let residuals: Vec<String> = m.residual_sup.iter().map(|r| format!("{r:.3e}")).collect();
    println!("residual sup per agent = [{}]", residuals.join(", "));
    let b = &log.bounds;
    match (b.steady_state, log.header.assumption_violating) {
        (Some(bound), false) => {
            println!(
                "steady-state bound = {bound:.6e}: {}",
                verdict(m.max_euclid_error <= bound)
            );
            if let Some(d) = b.disagreement {
                println!("disagreement bound = {d:.6e}: {}", verdict(m.sup_w <= d));
            }
        }
        (Some(_), true) => println!("steady-state bound = n/a (assumption-violating run)"),
        (None, _) => println!("steady-state bound = n/a (needs the Lyapunov variant on a connected graph)"),
    }
    Ok(())
}

pub fn bounds(scenario: &str, plug_and_play: Option<(usize, f64)>) -> Result<(), CliError> {
    let spec = load(scenario)?;
    let agents = spec.agent_count();
    let n = spec.plant.state_dim();
    let lambda2 = if agents >= 2 && spec.topology.is_connected() {
        Some(algebraic_connectivity(&spec.topology.laplacian::<f64>()).map_err(input("topology"))?)
    } else {
        None
    };
    println!(
        "agents N = {agents}, state dimension n = {n}, gamma = {}, kappa = {}",
        spec.gamma, spec.kappa
    );
    match lambda2 {
        Some(l) => {
            println!("lambda_2 = {l:.7}");
            let t1 = median_tracking_bound(agents, spec.gamma, l).map_err(input("median tracking bound"))?;
            println!("median tracking bound 2 sqrt(N)/(gamma lambda_2) = {t1:.7}");
        }
        None => println!("lambda_2 = n/a (graph disconnected or single agent)"),
    }

    let prepared = match &spec.variant {
        VariantSpec::Lyapunov { .. } => Some(PreparedScenario::new(&spec).map_err(sim_error)?),
        VariantSpec::General => None,
    };
    let bounds = prepared.as_ref().map(PreparedScenario::bounds);
    match &bounds {
        Some(b) => {
            if let Some(s) = b.scaling_norm {
                println!("||V sqrt(Pbar^-1)|| = {s:.7}");
            }
            match (b.steady_state, b.disagreement) {
                (Some(t3), Some(d)) => {
                    println!("steady-state bound = {t3:.7}");
                    println!("disagreement bound sqrt(N n)/(gamma lambda_2) = {d:.7}");
                }
                _ => println!("steady-state bound = n/a (graph disconnected)"),
            }
        }
        None => println!(
            "steady-state bound = n/a: it needs the Lyapunov variant (a certificate P > 0 with PA + A^T P <= 0)"
        ),
    }

    if let Some((nbar, sbar)) = plug_and_play {
        match bounds.and_then(|b| b.scaling_norm) {
            Some(scaling) => {
                let (kappa, gamma) =
                    plug_and_play_params(nbar, n, sbar, scaling).map_err(input("plug-and-play gains"))?;
                println!("plug-and-play gains for N <= {nbar}, target {sbar}: gamma = {gamma:.6}, kappa = {kappa:.6e}");
                println!("kappa * gamma = {}", kappa * gamma);
            }
            None => println!(
                "plug-and-play gains = n/a: the formula comes from the steady-state bound, which needs the Lyapunov variant"
            ),
        }
    }
    Ok(())
}

struct SweepRow {
    gamma: f64,
    kappa: f64,
    outcome: Result<(f64, f64, Option<f64>), String>,
}

pub fn sweep(args: &SweepArgs) -> Result<(), CliError> {
    let spec = load(&args.scenario)?;
    if args.gamma.iter().any(|&g| g.is_nan() || g <= 0.0) {
        return Err(CliError::Input("gains must be positive".into()));
    }
    let mut grid = Vec::new();
    for &gamma in &args.gamma {
        match (args.product, &args.kappa) {
            (Some(p), _) => grid.push((gamma, p / gamma)),
            (None, Some(ks)) => grid.extend(ks.iter().map(|&k| (gamma, k))),
            (None, None) => grid.push((gamma, spec.kappa)),
        }
    }
    let audit = audit_assumptions(&spec);
    if !audit.all_pass() && !args.force {
        return Err(sim_error(SimError::AuditFailure(Box::new(audit))));
    }
    let rows: Vec<SweepRow> = grid
        .par_iter()
        .map(|&(gamma, kappa)| {
            let mut s = spec.clone();
            s.gamma = gamma;
            s.kappa = kappa;
            let outcome = PreparedScenario::new(&s)
                .and_then(|p| {
                    let log = run_prepared(&p, audit.clone())?;
                    let m = scenario_tail_metrics(&s, &log);
                    Ok((m.max_inf_error, m.max_euclid_error, log.bounds.steady_state))
                })
                .map_err(|e| e.to_string());
            SweepRow { gamma, kappa, outcome }
        })
        .collect();

    println!("gamma,kappa,tail_inf_error,tail_euclid_error,steady_state_bound");
    for r in &rows {
        match &r.outcome {
            Ok((inf, euclid, bound)) => println!(
                "{},{},{inf:.6e},{euclid:.6e},{}",
                r.gamma,
                r.kappa,
                bound.map_or("n/a".to_string(), |b| format!("{b:.6e}"))
            ),
            Err(e) => println!("{},{},failed: {e},,", r.gamma, r.kappa),
        }
    }
    if let Some(target) = args.target {
        let mut kappas: Vec<f64> = rows.iter().map(|r| r.kappa).collect();
        kappas.sort_by(f64::total_cmp);
        kappas.dedup();
        for kappa in kappas {
            let frontier = rows
                .iter()
                .filter(|r| r.kappa == kappa)
                .filter(|r| matches!(r.outcome, Ok((inf, _, _)) if inf <= target))
                .map(|r| r.gamma)
                .min_by(f64::total_cmp);
            match frontier {
                Some(g) => println!("kappa = {kappa}: smallest gamma meeting {target} is {g}"),
                None => println!("kappa = {kappa}: no gamma in the grid meets {target}"),
            }
        }
    }
    if rows.iter().any(|r| r.outcome.is_err()) {
        return Err(CliError::Numerical("some runs failed".into()));
    }
    Ok(())
}

pub fn reproduce(out_dir: &Path) -> Result<(), CliError> {
    let attacked = load("threeinertia")?;
    let free = load("threeinertia_attack_free")?;
    let (a, f) = rayon::join(|| simulate_spec(&attacked, false), || simulate_spec(&free, false));
    let (prep_a, log_a) = a?;
    let (prep_f, log_f) = f?;
    write_outputs(&prep_a, &log_a, out_dir)?;
    write_outputs(&prep_f, &log_f, out_dir)?;

    let eps0 = window_metrics(&log_f, 35.0, 50.0).max_inf_error;
    let tail = window_metrics(&log_a, 35.0, 50.0);
    let row = theta_sum_row::<f64>();
    let sum = |v: &DVector<f64>| (&row * v)[0];
    let mut naive_min = f64::INFINITY;
    let mut resilient_max: f64 = 0.0;
    for s in log_a.samples.iter().filter(|s| s.t >= 20.0) {
        let truth = sum(&s.x);
        let naive = local_reconstruction(prep_a.bank.observer(0), &s.z[0], &s.xhat[0]);
        naive_min = naive_min.min((sum(&naive) - truth).abs());
        for xh in &s.xhat {
            resilient_max = resilient_max.max((sum(xh) - truth).abs());
        }
    }
    let (mut ratio_min, mut r1_min, mut others_max) = (f64::INFINITY, f64::INFINITY, 0.0f64);
    for s in log_a.samples.iter().filter(|s| s.t >= 20.0 && s.t <= 50.0) {
        let mut others: Vec<f64> = s.residual[1..].to_vec();
        others.sort_by(f64::total_cmp);
        let median = 0.5 * (others[(others.len() - 1) / 2] + others[others.len() / 2]);
        ratio_min = ratio_min.min(s.residual[0] / median);
        r1_min = r1_min.min(s.residual[0]);
        others_max = others_max.max(median);
    }

    println!("attack-free tail error on [35, 50]: eps0 = {eps0:.4e}");
    println!(
        "attacked tail error on [35, 50] = {:.4e} (3 eps0 = {:.4e}): {}",
        tail.max_inf_error,
        3.0 * eps0,
        verdict(tail.max_inf_error <= 3.0 * eps0)
    );
    println!(
        "agent 1 own reconstruction, smallest theta-sum error after t = 20: {naive_min:.4} rad (> 0.5): {}",
        verdict(naive_min > 0.5)
    );
    println!(
        "resilient estimates, largest theta-sum error after t = 20: {resilient_max:.4e} rad (<= 3 eps0): {}",
        verdict(resilient_max <= 3.0 * eps0)
    );
    println!(
        "agent 1 residual on [20, 50]: min {r1_min:.4e}, median of others at most {others_max:.4e}, \
         smallest ratio {ratio_min:.1} (> 5): {}",
        verdict(ratio_min > 5.0)
    );
    println!(
        "reconstructing agent 1's estimate from the CSV: see `agents` in {}",
        out_dir.join(format!("{}.json", prep_a.spec.name)).display()
    );
    Ok(())
}

pub fn scenarios(name: Option<&str>) -> Result<(), CliError> {
    match name {
        Some(n) => print!("{}", bundled_text(n).map_err(input("scenarios"))?),
        None => {
            for (n, _) in BUNDLED {
                println!("{n}");
            }
        }
    }
    Ok(())
}
