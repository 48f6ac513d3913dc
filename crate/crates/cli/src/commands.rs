//! Subcommand handlers. Each returns the artifact text; `lib::run` writes it.

use serde_json::{json, Value};
use ssp_core::divergence::{
    cb_bound, cb_min_exact, cb_min_grid_oracle, clamp_dagger0, default_resolution, BoundVariant, ConfidenceSet,
    DivergenceKind, Modification, ORACLE_MAX_STATES,
};
use ssp_core::duality::{duality_report, sandwich_check};
use ssp_core::evi::{
    apply_dagger0_floored, arrow_field, extended_value_iteration, iterate_dagger0, DaggerFloor, DaggerOptions,
    DEFAULT_DAGGER_MAX_ITER,
};
use ssp_core::learning::{
    run_evi_learner, run_greedy_baseline, sig17, EpsilonSchedule, LearnerConfig, Planner, RegretTrace,
};
use ssp_core::planning::{policy_iteration, proper_policy, value_iteration, DEFAULT_MAX_ITER};
use ssp_core::program::{conjecture_report, grid_program_oracle, is_program_feasible, solve_dagger_program};
use ssp_core::two_state::{contraction_violation, enumerate_pieces, fixed_point_procedure, pair_exclusivity_check, TwoStateParams};
use ssp_core::{gen, Policy, SspInstance};

use crate::presets::{self, DaggerPreset};
use crate::{verify, Cli, CliError, Command, ConfidenceOverride, Format, Global, Output, PlanMethod, Source};

pub fn execute(cli: &Cli) -> Result<Output, CliError> {
    let g = &cli.global;
    if !(g.tol > 0.0) {
        return Err(CliError::Validation(format!("--tol must be positive, got {}", g.tol)));
    }
    match &cli.command {
        Command::Plan { source, method } => plan(g, source, *method),
        Command::Evi { source, confidence } => evi(g, source, confidence),
        Command::Bounds { source, confidence, row, state, action, x, resolution } => {
            bounds(g, source, confidence, row.as_deref(), *state, *action, x, *resolution)
        }
        Command::Dagger { source, confidence, figure, variant, x0, trace, arrow_field, floor } => {
            let req = DaggerRequest {
                figure: figure.as_deref(),
                variant,
                x0: x0.as_deref(),
                trace: *trace,
                arrow_field: arrow_field.as_deref(),
                floor,
            };
            dagger(g, source, confidence, &req)
        }
        Command::TwoState { preset, p, eps, c } => two_state(g, preset.as_deref(), p.as_deref(), eps.as_deref(), c.as_deref()),
        Command::Program { source, conjecture, resolution } => program(g, source, *conjecture, *resolution),
        Command::Learn { source, episodes, greedy, delta, b_star, schedule, planner, modification, kind } => {
            let req = LearnRequest {
                episodes: *episodes,
                greedy: *greedy,
                delta: *delta,
                b_star: *b_star,
                schedule,
                planner,
                modification,
                kind,
            };
            learn(g, source, &req)
        }
        Command::Verify => {
            let checks = verify::run_suite();
            let failed = checks.iter().any(|c| !c.passed);
            let body = match g.format.unwrap_or(Format::Csv) {
                Format::Csv => verify::to_csv(&checks),
                Format::Json => to_json(&serde_json::to_value(&checks).expect("checks serialise")),
            };
            Ok(Output { body, failed })
        }
    }
}

fn invalid(msg: impl Into<String>) -> CliError {
    CliError::Validation(msg.into())
}

fn to_json(v: &Value) -> String {
    let mut s = serde_json::to_string_pretty(v).expect("values serialise");
    s.push('\n');
    s
}

fn csv_text(header: &[&str], rows: &[Vec<String>]) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header).expect("in-memory write");
    for r in rows {
        w.write_record(r).expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("in-memory flush")).expect("csv is utf-8")
}

fn opt17(v: Option<f64>) -> String {
    v.map(sig17).unwrap_or_default()
}

fn load(source: &Source, default_preset: Option<&str>) -> Result<(SspInstance, Option<ConfidenceSet>), CliError> {
    match (&source.file, &source.preset) {
        (Some(path), _) => {
            let text = std::fs::read_to_string(path).map_err(|e| invalid(format!("{}: {e}", path.display())))?;
            crate::codec::decode(&text).map_err(|e| match e {
                CliError::Parse(m) => CliError::Parse(format!("{}: {m}", path.display())),
                CliError::Validation(m) => CliError::Validation(format!("{}: {m}", path.display())),
                other => other,
            })
        }
        (None, Some(name)) => presets::load(name),
        (None, None) => match default_preset {
            Some(name) => presets::load(name),
            None => Err(invalid("an instance FILE or --preset is required")),
        },
    }
}

fn parse_kind(name: &str) -> Result<DivergenceKind, CliError> {
    DivergenceKind::parse(name).ok_or_else(|| invalid(format!("unknown divergence \"{name}\"")))
}

fn parse_variant(name: &str) -> Result<BoundVariant, CliError> {
    BoundVariant::parse(name).ok_or_else(|| invalid(format!("unknown bound variant \"{name}\"")))
}

/// Confidence set after `--kind/--epsilon`; an error when none is available.
fn confidence(inst: &SspInstance, file: Option<ConfidenceSet>, ov: &ConfidenceOverride) -> Result<ConfidenceSet, CliError> {
    let kind = ov.kind.as_deref().map(parse_kind).transpose()?;
    match (file, ov.epsilon) {
        (_, Some(eps)) => {
            if !(eps >= 0.0) {
                return Err(invalid(format!("--epsilon must be nonnegative, got {eps}")));
            }
            Ok(ConfidenceSet::uniform(kind.unwrap_or(DivergenceKind::L1), inst, eps)?)
        }
        (Some(c), None) => Ok(match kind {
            Some(k) => c.with_kind(k),
            None => c,
        }),
        (None, None) => Err(invalid("no confidence set: add a \"confidence\" section or pass --epsilon")),
    }
}

fn action_ids(inst: &SspInstance, policy: &Policy) -> Vec<usize> {
    policy.0.iter().enumerate().map(|(s, &a)| inst.action_id(s, a)).collect()
}

fn plan(g: &Global, source: &Source, method: PlanMethod) -> Result<Output, CliError> {
    let (inst, _) = load(source, None)?;
    let max_iter = g.max_iter.unwrap_or(DEFAULT_MAX_ITER);
    let vi = matches!(method, PlanMethod::Vi | PlanMethod::Both).then(|| value_iteration(&inst, g.tol, max_iter)).transpose()?;
    let pi = match method {
        PlanMethod::Vi => None,
        _ => {
            let start = proper_policy(&inst).ok_or_else(|| invalid("instance has no proper policy"))?;
            Some(policy_iteration(&inst, &start)?)
        }
    };
    let main = pi.as_ref().or(vi.as_ref()).expect("at least one method ran");
    let report = duality_report(&inst, None)?;
    let diff = match (&vi, &pi) {
        (Some(a), Some(b)) => Some(a.values.iter().zip(&b.values).fold(0.0f64, |m, (x, y)| m.max((x - y).abs()))),
        _ => None,
    };
    let body = match g.format.unwrap_or(Format::Json) {
        Format::Json => to_json(&json!({
            "optimal_values": main.values,
            "policy": action_ids(&inst, &main.policy),
            "value_iteration": vi.as_ref().map(|r| json!({"values": r.values, "iterations": r.iterations})),
            "policy_iteration": pi.as_ref().map(|r| json!({"values": r.values, "iterations": r.iterations})),
            "vi_pi_max_difference": diff,
            "duality": {"primal": report.primal, "dual": report.dual, "gap": report.gap, "occupancy": report.occupancy.q},
        })),
        Format::Csv => {
            let ids = action_ids(&inst, &main.policy);
            let rows = (0..inst.num_states()).map(|s| vec![s.to_string(), sig17(main.values[s]), ids[s].to_string()]).collect::<Vec<_>>();
            csv_text(&["state", "value", "action"], &rows)
        }
    };
    Ok(Output::ok(body))
}

fn evi(g: &Global, source: &Source, ov: &ConfidenceOverride) -> Result<Output, CliError> {
    let (inst, file_conf) = load(source, None)?;
    let conf = confidence(&inst, file_conf, ov)?;
    let res = extended_value_iteration(&inst, &conf, g.tol, g.max_iter.unwrap_or(DEFAULT_MAX_ITER))?;
    let ids = action_ids(&inst, &res.policy);
    let sandwich = sandwich_check(&inst, &conf, 1e-9);
    let body = match g.format.unwrap_or(Format::Json) {
        Format::Json => {
            let sandwich = match &sandwich {
                Ok(s) => serde_json::to_value(s).expect("serialise"),
                Err(e) => json!({"error": e.to_string()}),
            };
            let duality = match duality_report(&inst, Some(&conf)) {
                Ok(r) => json!({"primal": r.primal, "dual": r.dual, "gap": r.gap}),
                Err(e) => json!({"error": e.to_string()}),
            };
            to_json(&json!({
                "kind": conf.kind.name(),
                "modification": conf.modification.name(),
                "optimistic_values": res.values,
                "policy": ids,
                "iterations": res.iterations,
                "sandwich": sandwich,
                "duality": duality,
            }))
        }
        Format::Csv => {
            let rows = (0..inst.num_states())
                .map(|s| {
                    let (lower, centre) = match &sandwich {
                        Ok(sw) => (Some(sw.lower[s]), Some(sw.centre[s])),
                        Err(_) => (None, None),
                    };
                    vec![s.to_string(), opt17(lower), sig17(res.values[s]), opt17(centre), ids[s].to_string()]
                })
                .collect::<Vec<_>>();
            csv_text(&["state", "lower", "optimistic", "centre", "action"], &rows)
        }
    };
    Ok(Output::ok(body))
}

#[allow(clippy::too_many_arguments)]
fn bounds(
    g: &Global,
    source: &Source,
    ov: &ConfidenceOverride,
    row: Option<&[f64]>,
    s: usize,
    a: usize,
    x: &[f64],
    resolution: Option<usize>,
) -> Result<Output, CliError> {
    let conf = match row {
        Some(r) => {
            let eps = ov.epsilon.ok_or_else(|| invalid("--row needs --epsilon"))?;
            let kind = parse_kind(ov.kind.as_deref().unwrap_or("l1"))?;
            if s != 0 || a != 0 {
                return Err(invalid("with --row the pair is (0, 0)"));
            }
            let n = r.len();
            let inst = SspInstance::single_action(vec![1.0; n], vec![r.to_vec(); n])?;
            ConfidenceSet::uniform(kind, &inst, eps)?
        }
        None => {
            let (inst, file_conf) = load(source, None)?;
            confidence(&inst, file_conf, ov)?
        }
    };
    let n = conf.center.len();
    if s >= n || a >= conf.center[s].len() {
        return Err(invalid(format!("pair ({s}, {a}) is out of range")));
    }
    if x.len() != n {
        return Err(invalid(format!("--x has {} entries, expected {n}", x.len())));
    }
    let res = resolution.unwrap_or_else(|| default_resolution(n));
    let p_hat = conf.row(s, a).to_vec();
    let mut rows = Vec::new();
    let mut records = Vec::new();
    for variant in BoundVariant::ALL {
        let set = conf.with_kind(variant.divergence());
        let exact = if variant.divergence().has_exact() { cb_min_exact(&set, s, a, x).ok().map(|r| r.0) } else { None };
        let oracle = if n <= ORACLE_MAX_STATES { cb_min_grid_oracle(&set, s, a, x, res).ok() } else { None };
        let (bound, status) = match cb_bound(variant, &set, s, a, x) {
            Ok(b) => (Some(b), "ok".to_string()),
            Err(e) => (None, e.to_string()),
        };
        let clamped = bound.map(|b| clamp_dagger0(b, &p_hat, x));
        rows.push(vec![
            variant.name().to_string(),
            variant.divergence().name().to_string(),
            opt17(exact),
            opt17(oracle),
            opt17(bound),
            opt17(clamped),
            status.clone(),
        ]);
        records.push(json!({
            "variant": variant.name(), "divergence": variant.divergence().name(),
            "exact": exact, "oracle": oracle, "bound": bound, "clamped": clamped, "status": status,
        }));
    }
    let body = match g.format.unwrap_or(Format::Csv) {
        Format::Csv => csv_text(&["variant", "divergence", "exact", "oracle", "bound", "clamped", "status"], &rows),
        Format::Json => to_json(&json!({"state": s, "action": a, "x": x, "centre": p_hat, "radius": conf.eps(s, a), "rows": records})),
    };
    Ok(Output::ok(body))
}

struct DaggerRequest<'a> {
    figure: Option<&'a str>,
    variant: &'a str,
    x0: Option<&'a [f64]>,
    trace: bool,
    arrow_field: Option<&'a str>,
    floor: &'a str,
}

fn parse_grid(text: &str) -> Result<(f64, f64, usize), CliError> {
    let bad = || invalid(format!("--arrow-field expects lo:hi:steps, got \"{text}\""));
    let parts: Vec<&str> = text.split(':').collect();
    if parts.len() != 3 {
        return Err(bad());
    }
    let lo: f64 = parts[0].trim().parse().map_err(|_| bad())?;
    let hi: f64 = parts[1].trim().parse().map_err(|_| bad())?;
    let steps: usize = parts[2].trim().parse().map_err(|_| bad())?;
    if !(lo <= hi) || steps == 0 {
        return Err(bad());
    }
    Ok((lo, hi, steps))
}

fn dagger(g: &Global, source: &Source, ov: &ConfidenceOverride, req: &DaggerRequest) -> Result<Output, CliError> {
    let preset: Option<DaggerPreset> = match req.figure {
        Some(name) => Some(presets::dagger_preset(name).ok_or_else(|| {
            invalid(format!("unknown figure \"{name}\" (known: {})", presets::DAGGER_PRESETS.join(", ")))
        })?),
        None => None,
    };
    let (inst, file_conf) = match &preset {
        Some(p) => presets::load(p.instance)?,
        None => load(source, None)?,
    };
    let conf = confidence(&inst, file_conf, ov)?;
    let variant = parse_variant(req.variant)?;
    let floor = match req.floor {
        "cost" => DaggerFloor::Cost,
        "zero" => DaggerFloor::Zero,
        other => return Err(invalid(format!("--floor must be cost or zero, got \"{other}\""))),
    };
    let x0 = match (req.x0, preset.and_then(|p| p.x0)) {
        (Some(v), _) => Some(v.to_vec()),
        (None, Some(v)) => Some(v.to_vec()),
        (None, None) => None,
    };
    if let Some(v) = &x0 {
        if v.len() != inst.num_states() {
            return Err(invalid(format!("--x0 has {} entries, expected {}", v.len(), inst.num_states())));
        }
    }
    let grid = match (req.arrow_field, preset.and_then(|p| p.arrow_field)) {
        (Some(t), _) => Some(parse_grid(t)?),
        (None, p) => p,
    };
    let keep_trace = req.trace || preset.is_some_and(|p| p.trace);
    let opts = DaggerOptions {
        x0,
        tol: g.tol,
        max_iter: g.max_iter.unwrap_or(DEFAULT_DAGGER_MAX_ITER),
        floor,
        keep_trace,
        ..DaggerOptions::default()
    };
    let mut result = iterate_dagger0(&inst, &conf, variant, &opts)?;
    if let (Some(tail), Some(t)) = (preset.and_then(|p| p.tail), result.trace.as_mut()) {
        let cut = t.len().saturating_sub(tail);
        t.drain(..cut);
    }
    let field = match grid {
        Some((lo, hi, steps)) => Some(match floor {
            DaggerFloor::Cost => arrow_field(&inst, &conf, variant, lo, hi, steps, None)?,
            DaggerFloor::Zero => {
                if inst.num_states() != 2 {
                    return Err(invalid("arrow field needs exactly two states"));
                }
                let coord = |i: usize| if steps <= 1 { lo } else { lo + (hi - lo) * i as f64 / (steps - 1) as f64 };
                let mut out = Vec::with_capacity(steps * steps);
                for i in 0..steps {
                    for j in 0..steps {
                        let x = [coord(i), coord(j)];
                        let y = apply_dagger0_floored(&inst, &conf, variant, &x, None, floor)?;
                        out.push([x[0], x[1], y[0], y[1]]);
                    }
                }
                out
            }
        }),
        None => None,
    };
    let default_format = if field.is_some() { Format::Csv } else { Format::Json };
    let n = inst.num_states();
    let body = match g.format.unwrap_or(default_format) {
        Format::Json => to_json(&json!({
            "variant": variant.name(),
            "result": result,
            "arrow_field": field,
        })),
        Format::Csv => {
            if let Some(f) = field {
                let rows = f.iter().map(|r| r.iter().map(|v| sig17(*v)).collect()).collect::<Vec<_>>();
                csv_text(&["x1", "x2", "y1", "y2"], &rows)
            } else {
                let mut header = vec!["kind".to_string(), "index".to_string()];
                header.extend((1..=n).map(|i| format!("x{i}")));
                let mut rows = Vec::new();
                let mut push = |kind: &str, i: usize, v: &[f64]| {
                    let mut r = vec![kind.to_string(), i.to_string()];
                    r.extend(v.iter().map(|x| sig17(*x)));
                    rows.push(r);
                };
                if let Some(t) = &result.trace {
                    for (i, v) in t.iter().enumerate() {
                        push("trace", i, v);
                    }
                }
                for (i, v) in result.cycle.iter().enumerate() {
                    push("cycle", i, v);
                }
                push("point", result.iterations, &result.point);
                let header: Vec<&str> = header.iter().map(String::as_str).collect();
                csv_text(&header, &rows)
            }
        }
    };
    Ok(Output::ok(body))
}

fn pair(v: Option<&[f64]>, name: &str) -> Result<[f64; 2], CliError> {
    match v {
        Some([a, b]) => Ok([*a, *b]),
        Some(other) => Err(invalid(format!("--{name} expects 2 values, got {}", other.len()))),
        None => Err(invalid(format!("--{name} is required without --preset"))),
    }
}

fn two_state(g: &Global, preset: Option<&str>, p: Option<&[f64]>, eps: Option<&[f64]>, c: Option<&[f64]>) -> Result<Output, CliError> {
    let params = match preset {
        Some(name) => presets::two_state_preset(name).ok_or_else(|| {
            invalid(format!("unknown two-state preset \"{name}\" (known: {})", presets::TWO_STATE_PRESETS.join(", ")))
        })?,
        None => {
            let p = match p {
                Some([a, b, c, d]) => [*a, *b, *c, *d],
                Some(other) => return Err(invalid(format!("--p expects 4 values, got {}", other.len()))),
                None => return Err(invalid("--p is required without --preset")),
            };
            TwoStateParams::new(p[0], p[1], p[2], p[3], pair(eps, "eps")?, pair(c, "c")?)
        }
    };
    params.validate()?;
    let pieces = enumerate_pieces(&params)?;
    let procedure = fixed_point_procedure(&params);
    let inst = params.instance()?;
    let conf = params.confidence()?;
    let opts = DaggerOptions { tol: g.tol, max_iter: g.max_iter.unwrap_or(DEFAULT_DAGGER_MAX_ITER), ..DaggerOptions::default() };
    let iteration = iterate_dagger0(&inst, &conf, BoundVariant::L1Dagger, &opts)?;
    let body = match g.format.unwrap_or(Format::Json) {
        Format::Json => {
            let procedure = match &procedure {
                Ok(o) => serde_json::to_value(o).expect("serialise"),
                Err(e) => json!({"error": e.to_string()}),
            };
            let program = match solve_dagger_program(&inst, &conf) {
                Ok(s) => json!({"x": s.x, "objective": s.objective, "tied": s.tied}),
                Err(e) => json!({"error": e.to_string()}),
            };
            to_json(&json!({
                "params": params,
                "pieces": pieces,
                "main_piece_not_contracting": contraction_violation(params.p, params.eps),
                "pair_exclusivity": pair_exclusivity_check(&params)?,
                "procedure": procedure,
                "iteration": {"status": iteration.status, "point": iteration.point, "cycle": iteration.cycle, "iterations": iteration.iterations},
                "program": program,
            }))
        }
        Format::Csv => {
            let rows = pieces
                .iter()
                .map(|pc| {
                    let m = pc.matrix;
                    vec![
                        pc.label.name().to_string(),
                        sig17(m[0][0]),
                        sig17(m[0][1]),
                        sig17(m[1][0]),
                        sig17(m[1][1]),
                        sig17(pc.eigenvalues[0].0),
                        sig17(pc.eigenvalues[0].1),
                        sig17(pc.eigenvalues[1].0),
                        sig17(pc.eigenvalues[1].1),
                        sig17(pc.spectral_radius),
                        pc.is_contraction.to_string(),
                        opt17(pc.fixed_point.map(|f| f[0])),
                        opt17(pc.fixed_point.map(|f| f[1])),
                        pc.in_argmax_region.to_string(),
                        pc.in_active_region.to_string(),
                    ]
                })
                .collect::<Vec<_>>();
            csv_text(
                &[
                    "piece", "m11", "m12", "m21", "m22", "eig1_re", "eig1_im", "eig2_re", "eig2_im", "spectral_radius",
                    "contraction", "fixed_x1", "fixed_x2", "in_argmax_region", "in_active_region",
                ],
                &rows,
            )
        }
    };
    Ok(Output::ok(body))
}

fn program(g: &Global, source: &Source, conjecture: Option<usize>, resolution: usize) -> Result<Output, CliError> {
    if let Some(count) = conjecture {
        let report = conjecture_report(gen::random_two_state, count, g.seed);
        let failed = !report.disagreements.is_empty();
        return Ok(Output { body: to_json(&serde_json::to_value(&report).expect("serialise")), failed });
    }
    let (inst, file_conf) = load(source, None)?;
    let conf = file_conf.ok_or_else(|| invalid("program needs a confidence section"))?;
    let sol = solve_dagger_program(&inst, &conf)?;
    let feasible = is_program_feasible(&inst, &conf, &sol.x, 1e-8);
    let centre = value_iteration(&conf.center_instance(&inst)?, 1e-12, DEFAULT_MAX_ITER)?.values;
    let floor = inst.min_costs();
    let width = (0..inst.num_states()).map(|s| centre[s] - floor[s]).fold(0.0f64, f64::max).max(1e-12);
    // the grid can miss thin feasible sets, so only "nothing on the grid beats the solution" is checked
    let (oracle, oracle_ok) = if inst.num_states() <= 2 {
        let o = grid_program_oracle(&inst, &conf, resolution)?;
        (Some(o), o <= sol.objective + 1e-8)
    } else {
        (None, true)
    };
    let grid_step = width / resolution as f64;
    let opts = DaggerOptions { tol: g.tol, max_iter: g.max_iter.unwrap_or(DEFAULT_DAGGER_MAX_ITER), ..DaggerOptions::default() };
    let iteration = iterate_dagger0(&inst, &conf, BoundVariant::L1Dagger, &opts)?;
    let body = match g.format.unwrap_or(Format::Json) {
        Format::Json => to_json(&json!({
            "x": sol.x,
            "objective": sol.objective,
            "region": sol.region,
            "tied": sol.tied,
            "feasible": feasible,
            "grid_oracle": oracle,
            "grid_resolution": resolution,
            "grid_step": grid_step,
            "oracle_gap": oracle.map(|o| sol.objective - o),
            "oracle_agrees": oracle_ok,
            "iteration": {"status": iteration.status, "point": iteration.point, "iterations": iteration.iterations},
        })),
        Format::Csv => {
            let rows = vec![vec![sig17(sol.objective), opt17(oracle), feasible.to_string(), oracle_ok.to_string()]];
            csv_text(&["objective", "grid_oracle", "feasible", "oracle_agrees"], &rows)
        }
    };
    Ok(Output { body, failed: !(feasible && oracle_ok) })
}

struct LearnRequest<'a> {
    episodes: usize,
    greedy: Option<f64>,
    delta: f64,
    b_star: f64,
    schedule: &'a str,
    planner: &'a str,
    modification: &'a str,
    kind: &'a str,
}

fn learn(g: &Global, source: &Source, req: &LearnRequest) -> Result<Output, CliError> {
    let (inst, _) = load(source, Some("benchmark"))?;
    if req.episodes == 0 {
        return Err(invalid("--episodes must be at least 1"));
    }
    let (trace, extra) = match req.greedy {
        Some(eps) => (run_greedy_baseline(&inst, eps, req.episodes, g.seed)?, json!({"learner": "greedy", "epsilon_explore": eps})),
        None => {
            let planner = match req.planner {
                "exact" => Planner::Exact,
                other => Planner::Dagger(parse_variant(other)?),
            };
            let mut config = LearnerConfig {
                delta: req.delta,
                b_star: req.b_star,
                num_episodes: req.episodes,
                kind: parse_kind(req.kind)?,
                planner,
                schedule: EpsilonSchedule::parse(req.schedule)
                    .ok_or_else(|| invalid(format!("unknown schedule \"{}\"", req.schedule)))?,
                modification: Modification::parse(req.modification)
                    .ok_or_else(|| invalid(format!("unknown modification \"{}\"", req.modification)))?,
                seed: g.seed,
                ..LearnerConfig::default()
            };
            if let Some(m) = g.max_iter {
                config.plan_max_iter = m;
            }
            let out = run_evi_learner(&inst, &config)?;
            let extra = json!({
                "learner": "evi",
                "planner": req.planner,
                "schedule": config.schedule.name(),
                "modification": config.modification.name(),
                "plans": out.plans,
                "final_policy": action_ids(&inst, &out.policy),
            });
            (out.trace, extra)
        }
    };
    let body = match g.format.unwrap_or(Format::Csv) {
        Format::Csv => {
            let mut buf = Vec::new();
            trace.write_csv(&mut buf)?;
            String::from_utf8(buf).expect("csv is utf-8")
        }
        Format::Json => to_json(&learn_summary(&trace, extra)),
    };
    Ok(Output::ok(body))
}

fn learn_summary(trace: &RegretTrace, extra: Value) -> Value {
    let k = trace.len();
    json!({
        "run": extra,
        "episodes": k,
        "optimal_value": trace.optimal_value,
        "final_cumulative_regret": trace.cumulative_regret.last(),
        "first_half_mean_regret": trace.mean_regret(0..k / 2),
        "second_half_mean_regret": trace.mean_regret(k / 2..k),
        "cap_hits": trace.cap_hits,
        "trace": trace,
    })
}
