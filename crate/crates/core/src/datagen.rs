//! Excitation experiments and the data matrices built from them.

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::dynamics::{FeedbackGains, PlantModel};
use crate::error::{Error, Result};
use crate::linalg::{self, Mat, Vector};
use crate::polytope::PolyhedralSet;

/// Relative singular-value threshold for the informativity rank checks.
pub const RANK_RTOL: f64 = 1e-8;

/// Maximum number of seeds tried by [`collect_informative`].
pub const MAX_ATTEMPTS: u64 = 10;

/// Input/state data from one trajectory.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentData {
    pub u0: Mat,
    pub x0: Mat,
    pub x1: Mat,
    pub q0: Mat,
    pub v0: Mat,
    /// Ground-truth disturbances, kept for diagnostics only.
    pub w0_true: Option<Mat>,
}

impl ExperimentData {
    /// Assembles the matrices from raw samples, computing `Q0` and `V0`.
    pub fn from_samples(
        dictionary: &crate::dynamics::Dictionary,
        u0: Mat,
        x0: Mat,
        x1: Mat,
        w0_true: Option<Mat>,
    ) -> Result<Self> {
        let t = x0.ncols();
        if u0.ncols() != t || x1.ncols() != t || x1.nrows() != x0.nrows() {
            return Err(Error::DimensionMismatch(
                "U0, X0, X1 must share T columns".into(),
            ));
        }
        let n = x0.nrows();
        let big_n = dictionary.len();
        if t < n + big_n + 1 {
            return Err(Error::TooFewSamples {
                got: t,
                need: n + big_n + 1,
            });
        }
        let q0 = dictionary.remainder_columns(&x0)?;
        let mut v0 = Mat::zeros(n + big_n, t);
        v0.rows_mut(0, n).copy_from(&x0);
        v0.rows_mut(n, big_n).copy_from(&q0);
        Ok(Self {
            u0,
            x0,
            x1,
            q0,
            v0,
            w0_true,
        })
    }

    pub fn samples(&self) -> usize {
        self.x0.ncols()
    }

    pub fn state_dim(&self) -> usize {
        self.x0.nrows()
    }

    pub fn input_dim(&self) -> usize {
        self.u0.nrows()
    }

    pub fn num_terms(&self) -> usize {
        self.q0.nrows()
    }

    /// `M0 = [U0; X0; Q0]`.
    pub fn m0(&self) -> Mat {
        let (m, n, big_n, t) = (
            self.input_dim(),
            self.state_dim(),
            self.num_terms(),
            self.samples(),
        );
        let mut out = Mat::zeros(m + n + big_n, t);
        out.rows_mut(0, m).copy_from(&self.u0);
        out.rows_mut(m, n + big_n).copy_from(&self.v0);
        out
    }

    /// Writes each matrix as row-major CSV with 17 significant digits.
    pub fn export_csv(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        let mut mats = vec![
            ("U0", &self.u0),
            ("X0", &self.x0),
            ("X1", &self.x1),
            ("Q0", &self.q0),
            ("V0", &self.v0),
        ];
        if let Some(w) = &self.w0_true {
            mats.push(("W0_true", w));
        }
        for (name, m) in mats {
            std::fs::write(dir.join(format!("{name}.csv")), matrix_csv(m))?;
        }
        Ok(())
    }
}

pub fn matrix_csv(m: &Mat) -> String {
    let mut out = String::new();
    for row in m.row_iter() {
        let cells: Vec<String> = row.iter().map(|v| crate::scenario::fmt_f64(*v)).collect();
        out.push_str(&cells.join(","));
        out.push('\n');
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RankDiagnostic {
    pub rank: usize,
    pub rows: usize,
    pub full_row_rank: bool,
    pub threshold: f64,
}

fn rank_diagnostic(m: &Mat) -> RankDiagnostic {
    let (rank, threshold) = linalg::numerical_rank(m, RANK_RTOL);
    RankDiagnostic {
        rank,
        rows: m.nrows(),
        full_row_rank: rank == m.nrows(),
        threshold,
    }
}

pub fn check_rank_v0(data: &ExperimentData) -> RankDiagnostic {
    rank_diagnostic(&data.v0)
}

pub fn check_rank_m0(data: &ExperimentData) -> RankDiagnostic {
    rank_diagnostic(&data.m0())
}

/// How inputs are generated during the experiment.
#[derive(Debug, Clone, PartialEq, Default)]
pub enum Excitation {
    /// Uniform in `[-u_max, u_max]^m`.
    #[default]
    Uniform,
    /// `u = K1 x + K2 Q(x)` with no excitation: produces rank-deficient `M0`.
    ClosedLoop(FeedbackGains),
}

#[derive(Debug, Clone, PartialEq)]
pub struct CollectConfig {
    pub samples: usize,
    pub u_max: f64,
    pub x0: Vector,
    pub seed: u64,
    pub with_noise: bool,
    pub excitation: Excitation,
    /// Abort when a state leaves twice the enclosure box of this set.
    pub require_in_set: Option<PolyhedralSet>,
}

/// Runs one experiment. Deterministic for a fixed seed.
///
/// Per step the generator draws `m` input samples, then `n` disturbance
/// samples when noise is enabled.
pub fn collect(plant: &PlantModel, cfg: &CollectConfig) -> Result<ExperimentData> {
    let n = plant.state_dim();
    let m = plant.input_dim();
    let big_n = plant.num_terms();
    let t_len = cfg.samples;
    if t_len < n + big_n + 1 {
        return Err(Error::TooFewSamples {
            got: t_len,
            need: n + big_n + 1,
        });
    }
    if cfg.x0.len() != n {
        return Err(Error::DimensionMismatch(format!(
            "x0 has length {}, expected {n}",
            cfg.x0.len()
        )));
    }
    if !(cfg.u_max > 0.0) {
        return Err(Error::InvalidArgument("u_max must be positive".into()));
    }
    let limit = match &cfg.require_in_set {
        Some(set) => Some(set.interval_enclosure()?.scaled(2.0)),
        None => None,
    };

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut u0 = Mat::zeros(m, t_len);
    let mut x0 = Mat::zeros(n, t_len);
    let mut x1 = Mat::zeros(n, t_len);
    let mut w0 = Mat::zeros(n, t_len);
    let mut x = cfg.x0.clone();
    for t in 0..t_len {
        let u = match &cfg.excitation {
            Excitation::Uniform => {
                Vector::from_fn(m, |_, _| rng.random_range(-cfg.u_max..=cfg.u_max))
            }
            Excitation::ClosedLoop(gains) => gains.input(&plant.dictionary, &x),
        };
        let w = if cfg.with_noise && plant.h_w > 0.0 {
            Vector::from_fn(n, |_, _| rng.random_range(-plant.h_w..=plant.h_w))
        } else {
            Vector::zeros(n)
        };
        let next = plant.step(&x, &u, &w)?;
        if next.iter().any(|v| !v.is_finite()) || limit.as_ref().is_some_and(|b| !b.contains(&next))
        {
            return Err(Error::TrajectoryEscaped { step: t + 1 });
        }
        u0.set_column(t, &u);
        x0.set_column(t, &x);
        x1.set_column(t, &next);
        w0.set_column(t, &w);
        x = next;
    }
    ExperimentData::from_samples(&plant.dictionary, u0, x0, x1, Some(w0))
}

/// Outcome of the reseeding loop.
#[derive(Debug, Clone)]
pub struct Collected {
    pub data: ExperimentData,
    pub seed_used: u64,
    pub attempts: u64,
    pub rank_v0: RankDiagnostic,
}

/// Retries [`collect`] with seeds `seed, seed + 1, ...` until `V0` has full
/// row rank and the trajectory stays admissible, for at most
/// [`MAX_ATTEMPTS`] tries.
///
/// Closed-loop experiments have no randomness to reseed and are returned
/// after one attempt whatever their rank.
pub fn collect_informative(plant: &PlantModel, cfg: &CollectConfig) -> Result<Collected> {
    let deterministic = matches!(cfg.excitation, Excitation::ClosedLoop(_)) && !cfg.with_noise;
    let mut last_err = None;
    let mut last_rank_deficient = None;
    let attempts = if deterministic { 1 } else { MAX_ATTEMPTS };
    for k in 0..attempts {
        let mut attempt = cfg.clone();
        attempt.seed = cfg.seed.wrapping_add(k);
        match collect(plant, &attempt) {
            Ok(data) => {
                let rank_v0 = check_rank_v0(&data);
                if rank_v0.full_row_rank || deterministic {
                    return Ok(Collected {
                        data,
                        seed_used: attempt.seed,
                        attempts: k + 1,
                        rank_v0,
                    });
                }
                last_rank_deficient = Some(rank_v0);
            }
            Err(e @ (Error::TrajectoryEscaped { .. } | Error::DisturbanceOutOfBounds { .. })) => {
                last_err = Some(e)
            }
            Err(e) => return Err(e),
        }
    }
    match (last_rank_deficient, last_err) {
        (Some(r), _) => Err(Error::RankDeficientData(format!(
            "V0 rank {} < {} after {attempts} seeds",
            r.rank, r.rows
        ))),
        (None, Some(e)) => Err(e),
        (None, None) => unreachable!("at least one attempt is made"),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::{Dictionary, DictionaryTerm};

    fn sec_v_plant() -> PlantModel {
        PlantModel::new(
            Mat::from_row_slice(2, 2, &[0.8, 0.5, -0.4, 1.2]),
            Mat::from_row_slice(2, 2, &[0.0, 0.0, 1.0, 1.0]),
            Mat::from_row_slice(2, 1, &[0.0, 1.0]),
            Dictionary::new(
                2,
                vec![
                    DictionaryTerm::monomial(&[2, 0]),
                    DictionaryTerm::monomial(&[0, 2]),
                ],
            )
            .unwrap(),
            0.05,
        )
        .unwrap()
    }

    fn cfg(samples: usize, seed: u64) -> CollectConfig {
        CollectConfig {
            samples,
            u_max: 0.01,
            x0: Vector::zeros(2),
            seed,
            with_noise: false,
            excitation: Excitation::Uniform,
            require_in_set: None,
        }
    }

    #[test]
    fn shapes_and_determinism() {
        let p = sec_v_plant();
        let a = collect(&p, &cfg(40, 7)).unwrap();
        assert_eq!(a.v0.shape(), (4, 40));
        assert_eq!(a.u0.shape(), (1, 40));
        let b = collect(&p, &cfg(40, 7)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn too_few_samples() {
        assert_eq!(
            collect(&sec_v_plant(), &cfg(4, 7)),
            Err(Error::TooFewSamples { got: 4, need: 5 })
        );
    }

    #[test]
    fn noiseless_data_satisfies_plant_equation() {
        let p = sec_v_plant();
        let d = collect(&p, &cfg(40, 7)).unwrap();
        let rhs = p.a1_bar() * &d.x0 + &p.a2 * &d.q0 + &p.b * &d.u0;
        assert!((&d.x1 - rhs).amax() <= 1e-12);
    }

    fn stable_plant() -> PlantModel {
        PlantModel::new(
            Mat::from_row_slice(2, 2, &[0.5, 0.1, 0.0, 0.4]),
            Mat::from_row_slice(2, 2, &[0.1, 0.0, 0.2, -0.1]),
            Mat::from_row_slice(2, 1, &[0.0, 1.0]),
            Dictionary::new(
                2,
                vec![
                    DictionaryTerm::monomial(&[2, 0]),
                    DictionaryTerm::monomial(&[0, 2]),
                ],
            )
            .unwrap(),
            0.05,
        )
        .unwrap()
    }

    #[test]
    fn noisy_data_records_disturbances() {
        let p = stable_plant();
        let mut c = cfg(40, 7);
        c.with_noise = true;
        c.u_max = 0.5;
        let d = collect(&p, &c).unwrap();
        let w = d.w0_true.clone().unwrap();
        assert!(w.amax() <= 0.05);
        let rhs = p.a1_bar() * &d.x0 + &p.a2 * &d.q0 + &p.b * &d.u0 + &w;
        assert!((&d.x1 - rhs).amax() <= 1e-12);
    }

    #[test]
    fn rank_examples() {
        let p = sec_v_plant();
        let c = collect_informative(&p, &cfg(40, 7)).unwrap();
        assert!(c.rank_v0.full_row_rank);
        let m0 = check_rank_m0(&c.data);
        assert_eq!(m0.rows, 5);
        assert!(m0.full_row_rank);

        let zero = ExperimentData::from_samples(
            &p.dictionary,
            Mat::zeros(1, 10),
            Mat::zeros(2, 10),
            Mat::zeros(2, 10),
            None,
        )
        .unwrap();
        let r = check_rank_v0(&zero);
        assert_eq!((r.rank, r.full_row_rank), (0, false));

        let col = Vector::from_column_slice(&[0.3, -0.1]);
        let x0 = Mat::from_fn(2, 10, |i, _| col[i]);
        let dup =
            ExperimentData::from_samples(&p.dictionary, Mat::zeros(1, 10), x0.clone(), x0, None)
                .unwrap();
        let r = check_rank_v0(&dup);
        assert_eq!((r.rank, r.full_row_rank), (1, false));
    }

    #[test]
    fn closed_loop_data_has_deficient_m0() {
        let p = sec_v_plant();
        let mut c = cfg(40, 7);
        c.x0 = Vector::from_column_slice(&[0.5, -0.3]);
        c.excitation = Excitation::ClosedLoop(FeedbackGains {
            k1: Mat::from_row_slice(1, 2, &[0.4, -0.9]),
            k2: Mat::from_row_slice(1, 2, &[-1.0, -1.0]),
        });
        c.with_noise = true;
        let d = collect(&p, &c).unwrap();
        assert!(!check_rank_m0(&d).full_row_rank);
    }

    #[test]
    fn escape_is_reported() {
        let p = sec_v_plant();
        let set = PolyhedralSet::from_rows(
            &[
                vec![0.2, 0.4],
                vec![-0.2, -0.4],
                vec![-0.15, 0.2],
                vec![0.15, -0.2],
            ],
            &[1.0; 4],
        )
        .unwrap();
        let mut c = cfg(40, 7);
        c.u_max = 1.0;
        c.require_in_set = Some(set);
        assert!(matches!(
            collect(&p, &c),
            Err(Error::TrajectoryEscaped { .. })
        ));
    }
}
