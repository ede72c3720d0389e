use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::Serialize;
use serde_json::{json, Value};
use viscolab::barrier::{barrier_constants, verify_barrier_inequality, BarrierParams};
use viscolab::entire::{
    calibrate_abp, check_local_bound, construct_entire, fit_decay_exponent, growth_profile, AbpConstants,
    ExpansionConfig,
};
use viscolab::grid::BallGrid;
use viscolab::operators::check_hamiltonian;
use viscolab::solver::solve_dirichlet;
use viscolab::uniqueness::{delta_s_oracle, separation, two_solution_experiment, SeparationTable};

use crate::config::{CommandKind, ExperimentConfig};
use crate::error::{schema, CliError};

/// Scientific notation with 17 significant digits.
pub fn num(x: f64) -> String {
    format!("{x:.16e}")
}

#[derive(Debug, Default)]
struct Csv {
    text: String,
}

impl Csv {
    fn new(header: &[&str]) -> Self {
        Self {
            text: format!("{}\n", header.join(",")),
        }
    }

    fn row(&mut self, cells: impl IntoIterator<Item = String>) {
        let cells: Vec<String> = cells.into_iter().collect();
        self.text.push_str(&cells.join(","));
        self.text.push('\n');
    }
}

/// What a command produced before anything touches the disk.
#[derive(Debug)]
pub struct Artifacts {
    pub passed: bool,
    pub headline: String,
    pub results: Value,
    pub files: Vec<(String, String)>,
}

#[derive(Debug)]
pub struct Outcome {
    pub passed: bool,
    pub headline: String,
    pub out_dir: PathBuf,
}

fn coords_header(dim: usize) -> Vec<&'static str> {
    ["x1", "x2"].into_iter().take(dim).collect()
}

fn to_json<T: Serialize>(v: &T) -> Value {
    serde_json::to_value(v).expect("results serialize")
}

pub fn execute(command: CommandKind, cfg: &ExperimentConfig) -> Result<Artifacts, CliError> {
    match command {
        CommandKind::VerifyBarrier => verify_barrier(cfg),
        CommandKind::Solve => solve(cfg),
        CommandKind::Entire => entire(cfg),
        CommandKind::Uniqueness => uniqueness(cfg),
        CommandKind::CheckHamiltonian => hamiltonian(cfg),
        CommandKind::Oracle => oracle(cfg),
    }
}

/// Runs `command` and writes `config.toml`, `summary.json` and the command's
/// CSV files into `out_dir`.
pub fn run(command: CommandKind, cfg: &ExperimentConfig, out_dir: &Path) -> Result<Outcome, CliError> {
    if let Some(declared) = cfg.command {
        if declared != command {
            return Err(schema(
                "command",
                format!("configuration is for `{}` but `{}` was requested", declared.name(), command.name()),
            ));
        }
    }
    let artifacts = execute(command, cfg)?;
    let mut resolved = cfg.clone();
    resolved.command = Some(command);
    resolved.out = Some(out_dir.to_path_buf());
    let summary = json!({
        "version": env!("CARGO_PKG_VERSION"),
        "command": command.name(),
        "seed": cfg.seed,
        "passed": artifacts.passed,
        "params": to_json(&resolved),
        "results": artifacts.results,
    });
    let io = |path: &Path| {
        let path = path.display().to_string();
        move |source| CliError::Io { path, source }
    };
    fs::create_dir_all(out_dir).map_err(io(out_dir))?;
    let mut files = artifacts.files;
    files.push(("config.toml".into(), resolved.to_toml()));
    files.push((
        "summary.json".into(),
        format!("{}\n", serde_json::to_string_pretty(&summary).expect("summary serializes")),
    ));
    for (name, contents) in files {
        let path = out_dir.join(name);
        fs::write(&path, contents).map_err(io(&path))?;
    }
    Ok(Outcome {
        passed: artifacts.passed,
        headline: artifacts.headline,
        out_dir: out_dir.to_path_buf(),
    })
}

fn verify_barrier(cfg: &ExperimentConfig) -> Result<Artifacts, CliError> {
    let b = &cfg.barrier;
    let lift = |e: viscolab::Error| match e {
        viscolab::Error::InvalidParameter { name, reason } => schema(format!("barrier.{name}"), reason),
        viscolab::Error::UnsupportedDimension(_) => schema("barrier.n", "must be 1 or 2 for gridded verification"),
        viscolab::Error::GridTooCoarse { .. } => schema("barrier.h", "must not exceed half the radius"),
        other => CliError::Numerical(other),
    };
    if !(b.c_r_scale > 0.0) {
        return Err(schema("barrier.c_r_scale", "must be positive"));
    }
    let spec = barrier_constants(&BarrierParams {
        s: b.s,
        m: b.m,
        n: b.n,
        lambda: b.lambda,
        big_lambda: b.big_lambda,
        gamma1: b.gamma1,
        gamma: b.gamma,
        delta: b.delta,
        radius: b.radius,
    })
    .map_err(lift)?;
    let spec = spec.with_c_r(spec.c_r * b.c_r_scale);
    let grid = BallGrid::new(&vec![0.0; b.n], 0.999 * b.radius, b.h, b.n).map_err(lift)?;
    let check = verify_barrier_inequality(&spec, &grid).map_err(lift)?;
    let max = check.max_residual();
    let mut header = coords_header(b.n);
    header.push("residual");
    let mut csv = Csv::new(&header);
    for (x, r) in &check.residuals {
        csv.row(x.iter().map(|&v| num(v)).chain([num(*r)]));
    }
    let passed = max <= viscolab::VIOLATION_TOL;
    Ok(Artifacts {
        passed,
        headline: format!("max residual {} over {} points", num(max), check.residuals.len()),
        results: json!({
            "mu": spec.mu,
            "c_r": spec.c_r,
            "a": spec.a,
            "b": spec.b,
            "max_residual": max,
            "points": check.residuals.len(),
            "tolerance": viscolab::VIOLATION_TOL,
        }),
        files: vec![("residuals.csv".into(), csv.text)],
    })
}

fn solve(cfg: &ExperimentConfig) -> Result<Artifacts, CliError> {
    cfg.grid.validate()?;
    let problem = cfg.problem.build()?;
    let options = cfg.solver.options()?;
    let g = &cfg.grid;
    let grid = Arc::new(BallGrid::new(&vec![0.0; g.dim], g.radius, g.h, g.dim).map_err(|e| match e {
        viscolab::Error::GridTooCoarse { .. } => schema("grid.h", "must not exceed half the radius"),
        other => CliError::Numerical(other),
    })?);
    let boundary = cfg.boundary.family("boundary", g.dim)?;
    let radius = g.radius;
    let (field, report) = solve_dirichlet(&problem, grid.clone(), &|x| boundary(radius, x), &options)?;
    let mut header = coords_header(g.dim);
    header.extend(["interior", "u"]);
    let mut csv = Csv::new(&header);
    for k in 0..grid.n_total() {
        csv.row(
            grid.position(k)
                .iter()
                .map(|&v| num(v))
                .chain([u8::from(grid.is_interior(k)).to_string(), num(field.value(k))]),
        );
    }
    let mut history = Csv::new(&["iteration", "residual"]);
    for (it, r) in &report.history {
        history.row([it.to_string(), num(*r)]);
    }
    Ok(Artifacts {
        passed: report.converged,
        headline: format!(
            "{} after {} iterations, residual {}",
            if report.converged { "converged" } else { "not converged" },
            report.iterations,
            num(report.final_residual)
        ),
        results: json!({ "report": to_json(&report), "nodes": grid.n_total() }),
        files: vec![("field.csv".into(), csv.text), ("history.csv".into(), history.text)],
    })
}

fn separation_csv(table: &SeparationTable<f64>) -> String {
    let mut csv = Csv::new(&["radius", "sup_inner", "center", "converged"]);
    for r in &table.rows {
        csv.row([num(r.radius), num(r.sup_inner), num(r.center), u8::from(r.converged).to_string()]);
    }
    csv.text
}

fn entire(cfg: &ExperimentConfig) -> Result<Artifacts, CliError> {
    cfg.grid.validate()?;
    let e = &cfg.entire;
    if e.k_max == 0 {
        return Err(schema("entire.k_max", "must be positive"));
    }
    let problem = cfg.problem.build()?;
    problem.require_gap().map_err(|_| schema("problem.s", "s must exceed m"))?;
    let options = cfg.solver.options()?;
    let expansion = ExpansionConfig::integer_radii(e.k_max, cfg.grid.h, cfg.grid.dim);
    let family = e.boundary.family("entire.boundary", cfg.grid.dim)?;
    let run = construct_entire(&problem, &expansion, &family, &options)?;
    let mut passed = !run.flagged;
    let mut results = serde_json::Map::new();
    let mut files = Vec::new();

    let mut stab = Csv::new(&["inner_radius", "radius", "next_radius", "sup_difference"]);
    for r in &run.stabilization {
        stab.row([num(r.inner_radius), num(r.radius), num(r.next_radius), num(r.sup_difference)]);
    }
    files.push(("stabilization.csv".into(), stab.text));
    let mut solves = Csv::new(&["radius", "iterations", "newton_steps", "final_residual", "converged"]);
    for (r, rep) in run.config.radii.iter().zip(&run.reports) {
        solves.row([
            num(*r),
            rep.iterations.to_string(),
            rep.newton_steps.to_string(),
            num(rep.final_residual),
            u8::from(rep.converged).to_string(),
        ]);
    }
    files.push(("solves.csv".into(), solves.text));
    results.insert("flagged".into(), json!(run.flagged));
    results.insert("stabilization".into(), to_json(&run.stabilization));
    if let Some(t) = e.stabilization_threshold {
        let ok = run.stabilized(t);
        passed &= ok;
        results.insert("stabilized".into(), json!(ok));
    }
    let mut headline = format!("{} radii solved", run.fields.len());

    if let Some(reference) = &e.reference_boundary {
        let family = reference.family("entire.reference_boundary", cfg.grid.dim)?;
        let other = construct_entire(&problem, &expansion, &family, &options)?;
        passed &= !other.flagged;
        let table = separation(&run, &other)?;
        let points: Vec<(f64, f64)> = table.rows.iter().map(|r| (r.radius, r.sup_inner)).collect();
        let decreasing = table.non_increasing_after(0);
        let exponent = fit_decay_exponent(&points, 2).ok();
        passed &= decreasing;
        headline = format!(
            "B_1 separation {} at R = {}, decay exponent {}",
            num(points.last().map_or(f64::NAN, |p| p.1)),
            e.k_max,
            exponent.map_or("n/a".into(), num)
        );
        results.insert("separation".into(), to_json(&table));
        results.insert("separation_decreasing".into(), json!(decreasing));
        results.insert("decay_exponent".into(), json!(exponent));
        files.push(("separation.csv".into(), separation_csv(&table)));
    }

    if let Some(lb) = &e.local_bound {
        let center = if lb.center.is_empty() { vec![0.0; cfg.grid.dim] } else { lb.center.clone() };
        if center.len() != cfg.grid.dim {
            return Err(schema("entire.local_bound.center", "length must equal grid.dim"));
        }
        let abp = match lb.abp_c {
            Some(c) => AbpConstants::configured(c, lb.delta_hat, lb.r_max),
            None => calibrate_abp(
                &problem,
                &[0.25, 0.5, 1.0],
                lb.r_max.min(1.0),
                cfg.grid.h,
                cfg.grid.dim,
                lb.delta_hat,
                lb.r_max,
                &options,
            )?,
        };
        let report = check_local_bound(&run, lb.r, &center, &abp, lb.c0_scale)?;
        passed &= report.passed();
        results.insert("abp".into(), to_json(&abp));
        results.insert("local_bound".into(), to_json(&report));
    }

    if let Some(rho) = e.growth_rho {
        let profile = growth_profile(&run, rho)?;
        let mut csv = Csv::new(&["inner", "outer", "max_ratio"]);
        for s in &profile.shells {
            csv.row([num(s.inner), num(s.outer), num(s.max_ratio)]);
        }
        files.push(("growth.csv".into(), csv.text));
        passed &= profile.bounded;
        results.insert("growth".into(), to_json(&profile));
    }

    Ok(Artifacts {
        passed,
        headline,
        results: Value::Object(results),
        files,
    })
}

fn uniqueness(cfg: &ExperimentConfig) -> Result<Artifacts, CliError> {
    cfg.grid.validate()?;
    let u = &cfg.uniqueness;
    if u.k_max == 0 {
        return Err(schema("uniqueness.k_max", "must be positive"));
    }
    let problem = cfg.problem.build()?;
    let options = cfg.solver.options()?;
    let expansion = ExpansionConfig::integer_radii(u.k_max, cfg.grid.h, cfg.grid.dim);
    let a = u.boundary_a.family("uniqueness.boundary_a", cfg.grid.dim)?;
    let b = u.boundary_b.family("uniqueness.boundary_b", cfg.grid.dim)?;
    let (table, _, _) = two_solution_experiment(&problem, (&a, &b), &expansion, &options)?;
    let converged = table.rows.iter().all(|r| r.converged);
    let monotone = table.non_increasing_after(u.skip);
    let min_center = table.min_center();
    let passed = converged
        && if table.gap {
            monotone
        } else {
            u.expected_separation.map_or(true, |d| min_center >= 0.9 * d)
        };
    Ok(Artifacts {
        passed,
        headline: format!(
            "{} regime, min centre separation {}, non-increasing after {}: {}",
            if table.gap { "s > m" } else { "s <= m" },
            num(min_center),
            u.skip,
            monotone
        ),
        results: json!({
            "table": to_json(&table),
            "converged": converged,
            "non_increasing": monotone,
            "min_center": min_center,
        }),
        files: vec![("separation.csv".into(), separation_csv(&table))],
    })
}

fn hamiltonian(cfg: &ExperimentConfig) -> Result<Artifacts, CliError> {
    let c = &cfg.hamiltonian_check;
    if !(1..=3).contains(&c.dim) {
        return Err(schema("hamiltonian_check.dim", "must be 1, 2 or 3"));
    }
    if c.samples == 0 {
        return Err(schema("hamiltonian_check.samples", "must be positive"));
    }
    let h = viscolab::operators::hamiltonian_library(c.family.clone(), c.sigma0).map_err(|e| match e {
        viscolab::Error::InvalidParameter { name, reason } => {
            schema(format!("hamiltonian_check.family.{name}"), reason)
        }
        other => CliError::Numerical(other),
    })?;
    let h = if c.negate { h.negated() } else { h };
    let mut csv = Csv::new(&["condition", "samples", "worst_margin", "passed"]);
    let mut reports = Vec::new();
    let mut passed = true;
    for cond in h.claims() {
        let report = check_hamiltonian(&h, cond, c.dim, c.samples, cfg.seed)?;
        csv.row([
            cond.name().to_string(),
            report.samples.to_string(),
            num(report.worst_margin),
            u8::from(report.passed()).to_string(),
        ]);
        passed &= report.passed();
        reports.push(report);
    }
    Ok(Artifacts {
        passed,
        headline: format!("{} claimed conditions checked", reports.len()),
        results: json!({
            "tilde_gamma": h.tilde_gamma().ok(),
            "lipschitz": to_json(&h.lipschitz()),
            "convexity": to_json(&h.convexity()),
            "reports": to_json(&reports),
        }),
        files: vec![("conditions.csv".into(), csv.text)],
    })
}

fn oracle(cfg: &ExperimentConfig) -> Result<Artifacts, CliError> {
    let o = &cfg.oracle;
    if o.s.is_empty() {
        return Err(schema("oracle.s", "must list at least one exponent"));
    }
    let mut csv = Csv::new(&["s", "delta", "candidate", "abs_difference"]);
    let mut rows = Vec::new();
    let mut worst = 0.0f64;
    for &s in &o.s {
        let d = delta_s_oracle(s, o.samples).map_err(|e| match e {
            viscolab::Error::InvalidParameter { reason, .. } => schema("oracle.s", reason),
            other => CliError::Numerical(other),
        })?;
        let cand = 2f64.powf(1.0 - s);
        worst = worst.max((d - cand).abs());
        csv.row([num(s), num(d), num(cand), num((d - cand).abs())]);
        rows.push(json!({ "s": s, "delta": d, "candidate": cand }));
    }
    Ok(Artifacts {
        passed: worst <= 1e-6,
        headline: format!("largest |delta - 2^(1-s)| = {}", num(worst)),
        results: json!({ "rows": rows, "max_abs_difference": worst }),
        files: vec![("delta_s.csv".into(), csv.text)],
    })
}
