use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::dynamics::{FeedbackGains, PlantModel};
use crate::error::Result;
use crate::linalg::Vector;
use crate::polytope::{PolyhedralSet, TOL_GEOM};

use super::MAX_WITNESSES;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct McWitness {
    pub trajectory: usize,
    /// First step at which the state is outside the set.
    pub step: usize,
    #[serde(serialize_with = "crate::scenario::ser_vec")]
    pub initial: Vector,
    #[serde(serialize_with = "crate::scenario::ser_vec")]
    pub state: Vector,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct McReport {
    pub trajectories: usize,
    pub horizon: usize,
    pub seed: u64,
    pub vertex_starts: usize,
    pub violations: usize,
    pub witnesses: Vec<McWitness>,
    /// Largest `max_i (F_i x - g_i)` seen on any trajectory.
    pub worst_violation: f64,
}

fn uniform_in_set(set: &PolyhedralSet, lo: &Vector, hi: &Vector, rng: &mut ChaCha8Rng) -> Vector {
    loop {
        let x = Vector::from_fn(set.dim(), |k, _| rng.random_range(lo[k]..=hi[k]));
        if set.max_violation(&x) <= 0.0 {
            return x;
        }
    }
}

/// Simulates the ground-truth plant in closed loop from the vertices and
/// then from uniform samples of the set, with uniform disturbances.
///
/// Trajectory `k` draws from stream `k` of a generator seeded with `seed`,
/// so results do not depend on scheduling.
pub fn monte_carlo_ris(
    plant: &PlantModel,
    gains: &FeedbackGains,
    set: &PolyhedralSet,
    n_traj: usize,
    horizon: usize,
    seed: u64,
) -> Result<McReport> {
    let vertices = if set.dim() <= 3 {
        set.enumerate_vertices()?
    } else {
        Vec::new()
    };
    let bounds = set.interval_enclosure()?;
    let (lo, hi) = (bounds.lo().clone(), bounds.hi().clone());
    let n = plant.state_dim();
    let h_w = plant.h_w;

    let run = |k: usize| -> (f64, Option<McWitness>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(k as u64);
        let x0 = match vertices.get(k) {
            Some(v) => v.clone(),
            None => uniform_in_set(set, &lo, &hi, &mut rng),
        };
        let mut x = x0.clone();
        let mut worst = set.max_violation(&x);
        for t in 1..=horizon {
            let w = if h_w > 0.0 {
                Vector::from_fn(n, |_, _| rng.random_range(-h_w..=h_w))
            } else {
                Vector::zeros(n)
            };
            let u = gains.input(&plant.dictionary, &x);
            x = plant.step_unchecked(&x, &u, &w);
            let v = set.max_violation(&x);
            worst = worst.max(v);
            if !(v <= TOL_GEOM) {
                return (
                    worst,
                    Some(McWitness {
                        trajectory: k,
                        step: t,
                        initial: x0,
                        state: x,
                    }),
                );
            }
        }
        (worst, None)
    };
    let results: Vec<(f64, Option<McWitness>)> = (0..n_traj).into_par_iter().map(run).collect();

    let violations = results.iter().filter(|r| r.1.is_some()).count();
    let worst_violation = results
        .iter()
        .map(|r| r.0)
        .fold(f64::NEG_INFINITY, f64::max);
    let witnesses = results
        .into_iter()
        .filter_map(|r| r.1)
        .take(MAX_WITNESSES)
        .collect();
    Ok(McReport {
        trajectories: n_traj,
        horizon,
        seed,
        vertex_starts: vertices.len().min(n_traj),
        violations,
        witnesses,
        worst_violation,
    })
}
