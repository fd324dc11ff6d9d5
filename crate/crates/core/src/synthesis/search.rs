//! Expansion-point selection and contraction-level bisection.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::dynamics::ExpansionPoint;
use crate::error::{Error, Result};
use crate::linalg::Vector;

use super::baseline::{baseline_search, solve_baseline_lp, BaselineOptions, BaselineSearch};
use super::contraction::{solve_at, synth_cor2, synth_thm2};
use super::{
    ContractionOptions, Controller, DisturbanceBudget, ExpansionChoice, Method,
    SynthesisCertificate, SynthesisProblem,
};

const RANDOM_CANDIDATES: usize = 20;

fn candidates(problem: &SynthesisProblem<'_>, seed: u64) -> Result<Vec<Vector>> {
    let set = problem.set;
    let vertices = set.enumerate_vertices()?;
    let mut out: Vec<Vector> = vertices.iter().map(|v| v * 0.25).collect();
    let mean = vertices
        .iter()
        .fold(Vector::zeros(set.dim()), |acc, v| acc + v)
        / vertices.len() as f64;
    out.push(mean * 0.5);

    let bounds = set.interval_enclosure()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut drawn = 0;
    // Rejection sampling; a C-set occupies a fixed fraction of its box.
    for _ in 0..RANDOM_CANDIDATES * 1000 {
        if drawn == RANDOM_CANDIDATES {
            break;
        }
        let x = Vector::from_fn(set.dim(), |k, _| {
            rng.random_range(bounds.lo()[k]..=bounds.hi()[k])
        });
        if set.max_violation(&x) < 0.0 {
            out.push(x);
            drawn += 1;
        }
    }
    out.retain(|x| x.iter().any(|&v| v != 0.0));
    Ok(out)
}

/// Tries the candidate list in parallel and keeps the lowest feasible index.
pub(super) fn search_expansion(
    problem: &SynthesisProblem<'_>,
    opts: &ContractionOptions,
    budget: Option<&DisturbanceBudget>,
    seed: u64,
) -> Result<(Controller, SynthesisCertificate)> {
    let cands = candidates(problem, seed)?;
    let results: Vec<Result<(Controller, SynthesisCertificate)>> = cands
        .par_iter()
        .map(|x1| {
            let e = problem.dictionary.expansion_point(x1, problem.set)?;
            solve_at(problem, &e, opts, budget)
        })
        .collect();
    let mut log = Vec::new();
    for (x1, r) in cands.iter().zip(results) {
        match r {
            Ok(found) => return Ok(found),
            Err(e) => log.push(format!("x1 = {:?}: {e}", x1.as_slice())),
        }
    }
    Err(Error::ExpansionPointSearchFailed(log))
}

/// First candidate expansion point for which the noise-free conditions
/// are feasible. Candidates: a quarter of each vertex, half the vertex
/// mean, then seeded random interior points.
pub fn pick_x1(
    problem: &SynthesisProblem<'_>,
    opts: &ContractionOptions,
    seed: u64,
) -> Result<ExpansionPoint> {
    problem.check_dimensions()?;
    problem.require_v0_rank()?;
    search_expansion(problem, opts, None, seed).map(|(_, c)| c.expansion)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LambdaProbe {
    pub lambda: f64,
    pub feasible: bool,
}

/// Bisection result: the smallest probed feasible level and the trace.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LambdaSweep {
    pub lambda_min: f64,
    pub tol: f64,
    pub probes: Vec<LambdaProbe>,
}

/// Smallest feasible `lambda` in `(0, 1]` up to `tol`, assuming
/// feasibility is monotone in `lambda`. The oracle returns `Ok(false)` for
/// infeasible levels; errors abort the search.
pub fn lambda_bisect<F>(mut oracle: F, tol: f64) -> Result<LambdaSweep>
where
    F: FnMut(f64) -> Result<bool>,
{
    if !(tol >= 1e-3) {
        return Err(Error::InvalidArgument(format!(
            "bisection tolerance {tol} is below 1e-3"
        )));
    }
    let mut probes = Vec::new();
    let feasible_at_one = oracle(1.0)?;
    probes.push(LambdaProbe {
        lambda: 1.0,
        feasible: feasible_at_one,
    });
    if !feasible_at_one {
        return Err(Error::NoneFeasible);
    }
    let (mut lo, mut hi) = (0.0, 1.0);
    while hi - lo > tol {
        let mid = 0.5 * (lo + hi);
        let feasible = oracle(mid)?;
        probes.push(LambdaProbe {
            lambda: mid,
            feasible,
        });
        if feasible {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(LambdaSweep {
        lambda_min: hi,
        tol,
        probes,
    })
}

/// Everything needed to run any of the three methods.
#[derive(Debug, Clone, PartialEq)]
pub struct MethodSettings {
    pub contraction: ContractionOptions,
    pub x1: ExpansionChoice,
    pub budget: DisturbanceBudget,
    pub baseline: BaselineOptions,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepOutcome {
    pub method: Method,
    pub lambda_min: Option<f64>,
    pub probes: Vec<LambdaProbe>,
    /// Why no level was found, when `lambda_min` is absent.
    pub error: Option<String>,
}

/// Errors that mean "not feasible at this level" rather than "cannot run".
fn level_infeasible(e: &Error) -> bool {
    matches!(
        e,
        Error::Infeasible { .. }
            | Error::LpUnbounded
            | Error::CertificateRejected(_)
            | Error::ExpansionPointSearchFailed(_)
    )
}

fn as_probe<T>(r: Result<T>) -> Result<bool> {
    match r {
        Ok(_) => Ok(true),
        Err(e) if level_infeasible(&e) => Ok(false),
        Err(e) => Err(e),
    }
}

/// Bisects one method; the baseline's `K2` search runs once.
pub fn sweep_method(
    problem: &SynthesisProblem<'_>,
    method: Method,
    settings: &MethodSettings,
    tol: f64,
) -> Result<LambdaSweep> {
    let with = |lambda: f64| ContractionOptions {
        lambda,
        ..settings.contraction
    };
    match method {
        Method::Thm2 => lambda_bisect(
            |l| as_probe(synth_thm2(problem, &with(l), &settings.x1)),
            tol,
        ),
        Method::Cor2 => lambda_bisect(
            |l| {
                as_probe(synth_cor2(
                    problem,
                    &with(l),
                    &settings.x1,
                    &settings.budget,
                ))
            },
            tol,
        ),
        Method::Thm1 => {
            let search: BaselineSearch = baseline_search(
                problem,
                &settings.baseline.k2_grid,
                &settings.baseline.x_grid,
            )?;
            lambda_bisect(
                |l| {
                    as_probe(solve_baseline_lp(
                        problem,
                        &search,
                        l,
                        settings.baseline.objective,
                    ))
                },
                tol,
            )
        }
    }
}

/// Bisects every requested method; methods run in parallel.
pub fn sweep_lambda(
    problem: &SynthesisProblem<'_>,
    methods: &[Method],
    settings: &MethodSettings,
    tol: f64,
) -> Vec<SweepOutcome> {
    methods
        .par_iter()
        .map(
            |&method| match sweep_method(problem, method, settings, tol) {
                Ok(s) => SweepOutcome {
                    method,
                    lambda_min: Some(s.lambda_min),
                    probes: s.probes,
                    error: None,
                },
                Err(e) => SweepOutcome {
                    method,
                    lambda_min: None,
                    probes: Vec::new(),
                    error: Some(e.to_string()),
                },
            },
        )
        .collect()
}
