//! Collect, synthesize, verify and report, as driven by the command line.
//!
//! Every command writes `summary.json` into the output directory and
//! returns an exit code: 0 success, 1 usage or validation error, 2
//! synthesis infeasible, 3 verification failure.

use std::path::{Path, PathBuf};
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use serde_json::{json, Value};

use crate::datagen::{check_rank_m0, check_rank_v0, collect_informative, Collected};
use crate::dynamics::{PlantModel, Trajectory};
use crate::error::{Error, Result};
use crate::linalg::Vector;
use crate::polytope::{IntervalBox, PolyhedralSet};
use crate::scenario::{load_scenario, Scenario, X1Spec};
use crate::synthesis::{
    self, BaselineOptions, BaselineResult, ContractionOptions, Controller, Definiteness,
    DisturbanceBudget, ExpansionChoice, K2Grid, Method, MethodSettings, RowNorm, SweepOutcome,
    SynthesisCertificate, SynthesisProblem,
};
use crate::verify::{self, GridConfig, NextState, VerificationReport};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_INFEASIBLE: i32 = 2;
pub const EXIT_VERIFY_FAILED: i32 = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    Collect,
    Synth,
    Verify,
    Simulate,
    SweepLambda,
    Report,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Collect => "collect",
            Command::Synth => "synth",
            Command::Verify => "verify",
            Command::Simulate => "simulate",
            Command::SweepLambda => "sweep-lambda",
            Command::Report => "report",
        }
    }
}

/// Command-line settings that take precedence over the scenario file.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub lambda: Option<f64>,
    pub method: Option<Method>,
    pub grid: Option<Vec<usize>>,
    pub row_norm: Option<RowNorm>,
    pub definiteness: Option<Definiteness>,
}

impl Overrides {
    pub fn apply(&self, s: &mut Scenario) -> Result<()> {
        if let Some(v) = self.seed {
            s.data.seed = v;
        }
        if let Some(v) = self.lambda {
            s.synthesis.lambda = v;
        }
        if let Some(v) = self.method {
            s.synthesis.method = v;
        }
        if let Some(v) = &self.grid {
            s.verify.grid = v.clone();
        }
        if let Some(v) = self.row_norm {
            s.synthesis.row_norm = v;
        }
        if let Some(v) = self.definiteness {
            s.synthesis.definiteness = v;
        }
        s.validate()
    }
}

/// Process exit code for an error.
pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Infeasible { .. }
        | Error::LpUnbounded
        | Error::NoneFeasible
        | Error::ExpansionPointSearchFailed(_)
        | Error::CertificateRejected(_)
        | Error::RankDeficientData(_) => EXIT_INFEASIBLE,
        _ => EXIT_USAGE,
    }
}

/// A scenario with its collected data and derived bounds.
pub struct Context {
    pub scenario: Scenario,
    pub plant: PlantModel,
    pub set: PolyhedralSet,
    pub collected: Collected,
    pub bounds: IntervalBox,
    pub lipschitz: f64,
}

impl Context {
    pub fn new(scenario: Scenario) -> Result<Self> {
        let built = scenario.build()?;
        let bounds = built.set.interval_enclosure()?;
        let lipschitz = built.plant.dictionary.lipschitz_bound(&bounds);
        let collected = collect_informative(&built.plant, &built.collect)?;
        Ok(Self {
            scenario,
            plant: built.plant,
            set: built.set,
            collected,
            bounds,
            lipschitz,
        })
    }

    pub fn problem(&self) -> SynthesisProblem<'_> {
        SynthesisProblem {
            data: &self.collected.data,
            set: &self.set,
            dictionary: &self.plant.dictionary,
        }
    }

    pub fn budget(&self) -> DisturbanceBudget {
        DisturbanceBudget {
            h_w: self.plant.h_w,
            lipschitz: self.lipschitz,
            m_x: self.bounds.m_x(),
            row_norm: self.scenario.synthesis.row_norm,
        }
    }

    pub fn settings(&self) -> Result<MethodSettings> {
        let s = &self.scenario.synthesis;
        let x1 = match &s.x1 {
            X1Spec::Point(p) => ExpansionChoice::Point(Vector::from_column_slice(p)),
            X1Spec::Auto(_) => ExpansionChoice::Auto { seed: s.x1_seed },
        };
        Ok(MethodSettings {
            contraction: ContractionOptions {
                lambda: s.lambda,
                eps_dd: s.eps_dd,
                objective: s.objective,
                definiteness: s.definiteness,
            },
            x1,
            budget: self.budget(),
            baseline: BaselineOptions {
                lambda: s.lambda,
                k2_grid: K2Grid::new(s.baseline.k2_lo, s.baseline.k2_hi, s.baseline.k2_step)?,
                x_grid: s.baseline.x_grid.clone(),
                objective: s.objective,
            },
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Synthesized {
    Contraction {
        controller: Controller,
        certificate: SynthesisCertificate,
    },
    Baseline(BaselineResult),
}

impl Synthesized {
    pub fn controller(&self) -> &Controller {
        match self {
            Synthesized::Contraction { controller, .. } => controller,
            Synthesized::Baseline(b) => &b.controller,
        }
    }

    pub fn lambda(&self) -> f64 {
        match self {
            Synthesized::Contraction { certificate, .. } => certificate.lambda,
            Synthesized::Baseline(b) => b.lambda,
        }
    }
}

pub fn synthesize(ctx: &Context, method: Method, lambda: f64) -> Result<Synthesized> {
    let problem = ctx.problem();
    let mut settings = ctx.settings()?;
    settings.contraction.lambda = lambda;
    settings.baseline.lambda = lambda;
    match method {
        Method::Thm2 => synthesis::synth_thm2(&problem, &settings.contraction, &settings.x1).map(
            |(controller, certificate)| Synthesized::Contraction {
                controller,
                certificate,
            },
        ),
        Method::Cor2 => synthesis::synth_cor2(
            &problem,
            &settings.contraction,
            &settings.x1,
            &settings.budget,
        )
        .map(|(controller, certificate)| Synthesized::Contraction {
            controller,
            certificate,
        }),
        Method::Thm1 => {
            synthesis::synth_thm1_baseline(&problem, &settings.baseline).map(Synthesized::Baseline)
        }
    }
}

/// Grid check on both next-state sources, Monte Carlo, and certificate replay.
pub fn verify_controller(
    ctx: &Context,
    method: Method,
    synth: &Synthesized,
) -> Result<VerificationReport> {
    let start = Instant::now();
    let controller = synth.controller();
    let cfg = GridConfig {
        lambda: synth.lambda(),
        h_w: ctx.plant.h_w,
        resolution: ctx.scenario.verify.grid.clone(),
        row_norm: ctx.scenario.synthesis.row_norm,
    };
    let grid =
        verify::grid_contractivity(NextState::TrueModel(&ctx.plant), controller, &ctx.set, &cfg)?;
    let data_grid = verify::grid_contractivity(
        NextState::DataRep(&ctx.collected.data, &ctx.plant.dictionary),
        controller,
        &ctx.set,
        &cfg,
    )?;
    let v = &ctx.scenario.verify;
    let mc = verify::monte_carlo_ris(
        &ctx.plant,
        &controller.gains(),
        &ctx.set,
        v.mc_trajectories,
        v.horizon,
        v.seed,
    )?;
    let (margins, replay) = match synth {
        Synthesized::Contraction { certificate, .. } => (
            certificate.definiteness_margins.clone(),
            Some(verify::replay_certificate(
                &ctx.problem(),
                controller,
                certificate,
            )),
        ),
        Synthesized::Baseline(_) => (Vec::new(), None),
    };
    let mut report = VerificationReport::new(
        method.name(),
        grid,
        Some(data_grid),
        Some(mc),
        margins,
        replay,
    );
    report.runtime_secs = start.elapsed().as_secs_f64();
    Ok(report)
}

/// Closed-loop runs from every vertex with seeded uniform disturbances.
pub fn simulate(ctx: &Context, controller: &Controller) -> Result<Vec<Trajectory>> {
    let n = ctx.plant.state_dim();
    let h_w = ctx.plant.h_w;
    let v = &ctx.scenario.verify;
    let starts = if n <= 3 {
        ctx.set.enumerate_vertices()?
    } else {
        vec![Vector::from_column_slice(&ctx.scenario.data.x0)]
    };
    let gains = controller.gains();
    starts
        .iter()
        .enumerate()
        .map(|(k, x0)| {
            let mut rng = ChaCha8Rng::seed_from_u64(v.seed);
            rng.set_stream(k as u64);
            let w: Vec<Vector> = (0..v.horizon)
                .map(|_| {
                    Vector::from_fn(n, |_, _| {
                        if h_w > 0.0 {
                            rng.random_range(-h_w..=h_w)
                        } else {
                            0.0
                        }
                    })
                })
                .collect();
            ctx.plant.simulate(&gains, x0, &w)
        })
        .collect()
}

fn write(
    out: &Path,
    name: &str,
    contents: impl AsRef<[u8]>,
    files: &mut Vec<String>,
) -> Result<()> {
    std::fs::write(out.join(name), contents)?;
    files.push(name.to_string());
    Ok(())
}

fn to_json<T: Serialize>(v: &T) -> String {
    let mut s = serde_json::to_string_pretty(v).expect("report serializes");
    s.push('\n');
    s
}

fn write_collect(ctx: &Context, out: &Path, files: &mut Vec<String>) -> Result<Value> {
    let data = &ctx.collected.data;
    let dir = out.join("data");
    data.export_csv(&dir)?;
    for name in ["U0", "X0", "X1", "Q0", "V0"] {
        files.push(format!("data/{name}.csv"));
    }
    if data.w0_true.is_some() {
        files.push("data/W0_true.csv".into());
    }
    let rank = json!({
        "seed_requested": ctx.scenario.data.seed,
        "seed_used": ctx.collected.seed_used,
        "attempts": ctx.collected.attempts,
        "V0": check_rank_v0(data),
        "M0": check_rank_m0(data),
    });
    write(out, "rank.json", to_json(&rank), files)?;
    Ok(rank)
}

fn write_synth(synth: &Synthesized, out: &Path, files: &mut Vec<String>) -> Result<()> {
    write(out, "controller.json", to_json(synth.controller()), files)?;
    write(out, "certificate.json", to_json(synth), files)?;
    let mut text = format!("lambda = {}\n", synth.lambda());
    let c = synth.controller();
    text.push_str(&format!(
        "K1 = {:?}\nK2 = {:?}\n",
        crate::linalg::to_rows(&c.k1),
        crate::linalg::to_rows(&c.k2)
    ));
    match synth {
        Synthesized::Contraction { certificate, .. } => {
            text.push_str(&format!(
                "slack = {:e}\neta = {:e}\n",
                certificate.slack, certificate.eta
            ));
            for (k, v) in &certificate.residuals {
                text.push_str(&format!("residual {k} = {v:e}\n"));
            }
            text.push_str(&format!(
                "definiteness margins = {:?}\n",
                certificate.definiteness_margins
            ));
        }
        Synthesized::Baseline(b) => {
            text.push_str(&format!(
                "l_d = {:?}\nslack = {:e}\n",
                b.l_d.as_slice(),
                b.slack
            ));
            for (k, v) in &b.residuals {
                text.push_str(&format!("residual {k} = {v:e}\n"));
            }
        }
    }
    write(out, "certificate.txt", text, files)
}

fn verification_text(r: &VerificationReport) -> String {
    let mut t = format!(
        "method {}: {}\n",
        r.method,
        if r.pass { "PASS" } else { "FAIL" }
    );
    for g in std::iter::once(&r.grid).chain(r.data_grid.as_ref()) {
        t.push_str(&format!(
            "grid [{}] {:?}: {} samples, worst row margins {:?}, violations {}\n",
            g.source, g.resolution, g.samples, g.row_margins, g.violations
        ));
        t.push_str(&format!(
            "  refinement: cell diagonal {:e}, closed-loop Lipschitz {:e}, margin needed {:e}, met {}\n",
            g.refinement.cell_diagonal, g.refinement.closed_loop_lipschitz, g.refinement.required_margin,
            g.refinement.satisfied
        ));
    }
    if let Some(mc) = &r.monte_carlo {
        t.push_str(&format!(
            "monte carlo: {} trajectories x {} steps, {} exits\n",
            mc.trajectories, mc.horizon, mc.violations
        ));
    }
    if let Some(rep) = &r.replay {
        t.push_str(&format!(
            "certificate replay: {}\n",
            if rep.pass { "pass" } else { "fail" }
        ));
    }
    t
}

fn write_verify(
    ctx: &Context,
    report: &VerificationReport,
    synth: &Synthesized,
    out: &Path,
    files: &mut Vec<String>,
) -> Result<()> {
    write(out, "verification.json", to_json(report), files)?;
    write(out, "verification.txt", verification_text(report), files)?;
    if ctx.set.dim() == 2 {
        let trajs: Vec<Vec<Vector>> = simulate(ctx, synth.controller())?
            .into_iter()
            .map(|t| t.states)
            .collect();
        write(
            out,
            "phase.svg",
            verify::phase_plot_svg(&ctx.set, synth.lambda(), &trajs)?,
            files,
        )?;
    }
    Ok(())
}

fn sweep(ctx: &Context, methods: &[Method]) -> Result<Vec<SweepOutcome>> {
    let settings = ctx.settings()?;
    Ok(synthesis::sweep_lambda(
        &ctx.problem(),
        methods,
        &settings,
        ctx.scenario.synthesis.bisect_tol,
    ))
}

fn sweep_json(outcomes: &[SweepOutcome], tol: f64) -> Value {
    json!({ "bisect_tol": tol, "methods": outcomes })
}

fn log_sweep(outcomes: &[SweepOutcome]) {
    for o in outcomes {
        match (o.lambda_min, &o.error) {
            (Some(l), _) => eprintln!("{}: lambda_min = {l}", o.method.name()),
            (None, Some(e)) => eprintln!("{}: {e}", o.method.name()),
            (None, None) => eprintln!("{}: no feasible level", o.method.name()),
        }
    }
}

struct Run {
    code: i32,
    details: Value,
}

fn run_command(
    command: Command,
    ctx: &Context,
    methods: &[Method],
    out: &Path,
    files: &mut Vec<String>,
) -> Result<Run> {
    let method = ctx.scenario.synthesis.method;
    let lambda = ctx.scenario.synthesis.lambda;
    let tol = ctx.scenario.synthesis.bisect_tol;
    match command {
        Command::Collect => {
            let rank = write_collect(ctx, out, files)?;
            Ok(Run {
                code: EXIT_OK,
                details: json!({ "rank": rank }),
            })
        }
        Command::Synth => {
            let s = synthesize(ctx, method, lambda)?;
            write_synth(&s, out, files)?;
            Ok(Run {
                code: EXIT_OK,
                details: json!({ "status": "feasible", "K1": crate::linalg::to_rows(&s.controller().k1), "K2": crate::linalg::to_rows(&s.controller().k2) }),
            })
        }
        Command::Verify => {
            let s = synthesize(ctx, method, lambda)?;
            write_synth(&s, out, files)?;
            let report = verify_controller(ctx, method, &s)?;
            eprintln!("verification took {:.2} s", report.runtime_secs);
            write_verify(ctx, &report, &s, out, files)?;
            Ok(Run {
                code: if report.pass {
                    EXIT_OK
                } else {
                    EXIT_VERIFY_FAILED
                },
                details: json!({ "status": if report.pass { "verified" } else { "verification-failed" } }),
            })
        }
        Command::Simulate => {
            let s = synthesize(ctx, method, lambda)?;
            let trajs = simulate(ctx, s.controller())?;
            let mut exits = 0;
            for (k, t) in trajs.iter().enumerate() {
                write(out, &format!("trajectory_{k}.csv"), t.to_csv(), files)?;
                exits += usize::from(
                    t.states
                        .iter()
                        .any(|x| ctx.set.max_violation(x) > crate::polytope::TOL_GEOM),
                );
            }
            Ok(Run {
                code: EXIT_OK,
                details: json!({ "trajectories": trajs.len(), "trajectories_leaving_set": exits }),
            })
        }
        Command::SweepLambda => {
            let outcomes = sweep(ctx, methods)?;
            log_sweep(&outcomes);
            write(
                out,
                "lambda_sweep.json",
                to_json(&sweep_json(&outcomes, tol)),
                files,
            )?;
            let target = methods.first().copied().unwrap_or(method);
            let feasible = outcomes
                .iter()
                .any(|o| o.method == target && o.lambda_min.is_some());
            Ok(Run {
                code: if feasible { EXIT_OK } else { EXIT_INFEASIBLE },
                details: sweep_json(&outcomes, tol),
            })
        }
        Command::Report => report(ctx, out, files),
    }
}

fn report(ctx: &Context, out: &Path, files: &mut Vec<String>) -> Result<Run> {
    let method = ctx.scenario.synthesis.method;
    let lambda = ctx.scenario.synthesis.lambda;
    let tol = ctx.scenario.synthesis.bisect_tol;
    write_collect(ctx, out, files)?;

    let at_lambda: Vec<(Method, Result<Synthesized>)> = Method::ALL
        .iter()
        .map(|&m| (m, synthesize(ctx, m, lambda)))
        .collect();
    let outcomes = sweep(ctx, &Method::ALL)?;
    log_sweep(&outcomes);
    write(
        out,
        "lambda_sweep.json",
        to_json(&sweep_json(&outcomes, tol)),
        files,
    )?;

    let primary = at_lambda
        .iter()
        .find(|(m, _)| *m == method)
        .map(|(_, r)| r.clone())
        .expect("all methods run");
    let (chosen, fallback) = match primary {
        Ok(s) => (Some(s), false),
        Err(e) if exit_code(&e) == EXIT_INFEASIBLE => {
            eprintln!("{} infeasible at lambda = {lambda}: {e}", method.name());
            let lmin = outcomes
                .iter()
                .find(|o| o.method == method)
                .and_then(|o| o.lambda_min);
            match lmin {
                Some(l) => (Some(synthesize(ctx, method, l)?), true),
                None => (None, true),
            }
        }
        Err(e) => return Err(e),
    };

    let table_inputs: Vec<(Method, std::result::Result<Controller, String>)> = at_lambda
        .iter()
        .map(|(m, r)| {
            (
                *m,
                r.as_ref()
                    .map(|s| s.controller().clone())
                    .map_err(|e| e.to_string()),
            )
        })
        .collect();
    let table = verify::conservatism_report(
        &ctx.problem(),
        lambda,
        &table_inputs,
        &outcomes,
        &ctx.budget(),
        &ctx.scenario.synthesis.baseline.x_grid,
    )?;
    write(out, "conservatism.json", to_json(&table), files)?;
    write(out, "conservatism.txt", table.to_text(), files)?;

    let Some(synth) = chosen else {
        return Ok(Run {
            code: EXIT_INFEASIBLE,
            details: json!({ "status": "infeasible", "method": method, "lambda": lambda }),
        });
    };
    write_synth(&synth, out, files)?;
    let report = verify_controller(ctx, method, &synth)?;
    eprintln!("verification took {:.2} s", report.runtime_secs);
    write_verify(ctx, &report, &synth, out, files)?;
    let status = match (report.pass, fallback) {
        (true, false) => "verified",
        (true, true) => "verified-at-lambda-min",
        (false, _) => "verification-failed",
    };
    Ok(Run {
        code: if report.pass {
            EXIT_OK
        } else {
            EXIT_VERIFY_FAILED
        },
        details: json!({
            "status": status,
            "verified_lambda": synth.lambda(),
            "grid_worst_margin": report.grid.worst_margin(),
            "monte_carlo_exits": report.monte_carlo.as_ref().map(|m| m.violations),
        }),
    })
}

/// Loads the scenario, runs `command`, writes `summary.json` and returns
/// the exit code. Diagnostics go to standard error.
pub fn execute(command: Command, scenario_path: &Path, overrides: &Overrides, out: &Path) -> i32 {
    let mut files = Vec::new();
    let result = (|| -> Result<(Run, Scenario, Option<u64>)> {
        let mut scenario = load_scenario(scenario_path)?;
        overrides.apply(&mut scenario)?;
        std::fs::create_dir_all(out)?;
        let ctx = Context::new(scenario.clone())?;
        let methods: Vec<Method> = match (command, overrides.method) {
            (Command::SweepLambda, Some(m)) => vec![m],
            (Command::SweepLambda, None) => Method::ALL.to_vec(),
            _ => vec![scenario.synthesis.method],
        };
        let run = run_command(command, &ctx, &methods, out, &mut files)?;
        Ok((run, scenario, Some(ctx.collected.seed_used)))
    })();

    let (code, summary) = match result {
        Ok((run, scenario, seed_used)) => {
            let summary = json!({
                "command": command.name(),
                "scenario": scenario_path.display().to_string(),
                "method": scenario.synthesis.method,
                "lambda": scenario.synthesis.lambda,
                "seed_used": seed_used,
                "exit_code": run.code,
                "details": run.details,
                "files": files,
            });
            (run.code, summary)
        }
        Err(e) => {
            eprintln!("error: {e}");
            let code = exit_code(&e);
            let summary = json!({
                "command": command.name(),
                "scenario": scenario_path.display().to_string(),
                "exit_code": code,
                "error": e.to_string(),
                "files": files,
            });
            (code, summary)
        }
    };
    if std::fs::create_dir_all(out).is_ok() {
        if let Err(e) = std::fs::write(out.join("summary.json"), to_json(&summary)) {
            eprintln!("error: cannot write summary: {e}");
        }
    }
    code
}

/// `RxC` (or any `x`-separated list) to a grid resolution.
pub fn parse_grid(s: &str) -> Result<Vec<usize>> {
    s.split(['x', 'X'])
        .map(|p| {
            p.trim().parse::<usize>().map_err(|_| {
                Error::InvalidArgument(format!("bad grid `{s}`, expected e.g. 201x201"))
            })
        })
        .collect()
}

pub fn default_out_dir() -> PathBuf {
    PathBuf::from("out")
}
