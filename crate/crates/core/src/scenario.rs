//! Scenario files: JSON description of a plant, safe set, experiment,
//! synthesis settings and verification budget.

use std::path::Path;

use serde::{Deserialize, Serialize, Serializer};

use crate::datagen::{CollectConfig, Excitation};
use crate::dynamics::{Dictionary, DictionaryTerm, FeedbackGains, PlantModel};
use crate::error::{Error, Result};
use crate::linalg::{self, Mat, Vector};
use crate::polytope::PolyhedralSet;
use crate::synthesis::{Definiteness, K2Grid, Method, Objective, RowNorm};

pub const SCHEMA_VERSION: u32 = 1;

/// 17 significant digits, enough to round-trip any `f64`.
pub fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

pub(crate) fn ser_vec<S: Serializer>(v: &Vector, s: S) -> std::result::Result<S::Ok, S::Error> {
    s.collect_seq(v.iter())
}

pub(crate) fn ser_mat<S: Serializer>(m: &Mat, s: S) -> std::result::Result<S::Ok, S::Error> {
    s.collect_seq(linalg::to_rows(m))
}

pub(crate) fn ser_mats<S: Serializer>(ms: &[Mat], s: S) -> std::result::Result<S::Ok, S::Error> {
    s.collect_seq(ms.iter().map(linalg::to_rows))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub version: u32,
    pub system: SystemSpec,
    pub safe_set: SafeSetSpec,
    pub data: DataSpec,
    pub synthesis: SynthesisSpec,
    pub verify: VerifySpec,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SystemSpec {
    #[serde(rename = "A1")]
    pub a1: Vec<Vec<f64>>,
    #[serde(rename = "A2")]
    pub a2: Vec<Vec<f64>>,
    #[serde(rename = "B")]
    pub b: Vec<Vec<f64>>,
    pub dictionary: Vec<DictionaryTerm>,
    pub h_w: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SafeSetSpec {
    #[serde(rename = "F")]
    pub f: Vec<Vec<f64>>,
    pub g: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GainsSpec {
    #[serde(rename = "K1")]
    pub k1: Vec<Vec<f64>>,
    #[serde(rename = "K2")]
    pub k2: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataSpec {
    #[serde(rename = "T")]
    pub samples: usize,
    pub u_max: f64,
    pub x0: Vec<f64>,
    pub seed: u64,
    pub noise: bool,
    #[serde(default = "default_true")]
    pub require_in_set: bool,
    /// Collect with this feedback instead of random excitation.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub closed_loop: Option<GainsSpec>,
}

fn default_true() -> bool {
    true
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AutoTag {
    Auto,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum X1Spec {
    Auto(AutoTag),
    Point(Vec<f64>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BaselineSpec {
    pub k2_lo: f64,
    pub k2_hi: f64,
    pub k2_step: f64,
    pub x_grid: Vec<usize>,
}

impl Default for BaselineSpec {
    fn default() -> Self {
        Self {
            k2_lo: -2.0,
            k2_hi: 2.0,
            k2_step: 0.1,
            x_grid: vec![101, 101],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SynthesisSpec {
    pub method: Method,
    pub lambda: f64,
    pub x1: X1Spec,
    pub eps_dd: f64,
    pub objective: Objective,
    pub row_norm: RowNorm,
    pub definiteness: Definiteness,
    #[serde(default = "default_bisect_tol")]
    pub bisect_tol: f64,
    /// Seed for random expansion-point candidates.
    #[serde(default)]
    pub x1_seed: u64,
    #[serde(default)]
    pub baseline: BaselineSpec,
}

fn default_bisect_tol() -> f64 {
    1e-3
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VerifySpec {
    pub grid: Vec<usize>,
    pub mc_trajectories: usize,
    pub horizon: usize,
    #[serde(default)]
    pub seed: u64,
}

/// The validated objects a scenario describes.
#[derive(Debug, Clone)]
pub struct Built {
    pub plant: PlantModel,
    pub set: PolyhedralSet,
    pub collect: CollectConfig,
}

fn matrix(rows: &[Vec<f64>], path: &str, shape: Option<(usize, usize)>) -> Result<Mat> {
    let m = linalg::from_rows(rows)
        .ok_or_else(|| Error::validation(path, "rows have different lengths"))?;
    if let Some((r, c)) = shape {
        if m.shape() != (r, c) {
            return Err(Error::validation(
                path,
                format!("expected {r}x{c}, got {}x{}", m.nrows(), m.ncols()),
            ));
        }
    }
    if m.iter().any(|v| !v.is_finite()) {
        return Err(Error::validation(path, "non-finite entry"));
    }
    Ok(m)
}

fn check_grid(grid: &[usize], n: usize, path: &str) -> Result<()> {
    if grid.len() != n {
        return Err(Error::validation(
            path,
            format!("expected {n} entries, got {}", grid.len()),
        ));
    }
    if let Some(k) = grid.iter().position(|&r| r < 2) {
        return Err(Error::validation(
            format!("{path}[{k}]"),
            "resolution must be at least 2",
        ));
    }
    Ok(())
}

impl Scenario {
    pub fn from_json(text: &str) -> Result<Self> {
        let s: Scenario = serde_json::from_str(text).map_err(|e| Error::Parse(e.to_string()))?;
        s.validate()?;
        Ok(s)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("scenario serializes")
    }

    /// Checks the schema version and every cross-field dimension.
    pub fn validate(&self) -> Result<()> {
        self.build().map(|_| ())
    }

    pub fn build(&self) -> Result<Built> {
        if self.version != SCHEMA_VERSION {
            return Err(Error::validation(
                "version",
                format!(
                    "unsupported version {}, expected {SCHEMA_VERSION}",
                    self.version
                ),
            ));
        }
        let sys = &self.system;
        let a1 = matrix(&sys.a1, "system.A1", None)?;
        let n = a1.nrows();
        if a1.ncols() != n || n == 0 {
            return Err(Error::validation(
                "system.A1",
                "must be square and non-empty",
            ));
        }
        for (j, t) in sys.dictionary.iter().enumerate() {
            let path = format!("system.dictionary[{j}]");
            match t {
                DictionaryTerm::Monomial { exponents } if exponents.len() != n => {
                    return Err(Error::validation(
                        format!("{path}.exponents"),
                        format!("length {} does not match n = {n}", exponents.len()),
                    ));
                }
                DictionaryTerm::Sin { coord } | DictionaryTerm::Cosm1 { coord } if *coord >= n => {
                    return Err(Error::validation(
                        format!("{path}.coord"),
                        format!("{coord} >= n = {n}"),
                    ));
                }
                _ => {}
            }
        }
        if sys.dictionary.is_empty() {
            return Err(Error::validation(
                "system.dictionary",
                "needs at least one term",
            ));
        }
        let dictionary = Dictionary::new(n, sys.dictionary.clone())?;
        let big_n = dictionary.len();
        let a2 = matrix(&sys.a2, "system.A2", Some((n, big_n)))?;
        let b = matrix(&sys.b, "system.B", None)?;
        if b.nrows() != n || b.ncols() == 0 {
            return Err(Error::validation(
                "system.B",
                format!("expected {n}xm with m >= 1"),
            ));
        }
        let m = b.ncols();
        if !(sys.h_w >= 0.0) || !sys.h_w.is_finite() {
            return Err(Error::validation(
                "system.h_w",
                "must be a finite non-negative number",
            ));
        }
        let plant = PlantModel::new(a1, a2, b, dictionary, sys.h_w)?;

        let f = matrix(&self.safe_set.f, "safe_set.F", None)?;
        if f.ncols() != n {
            return Err(Error::validation(
                "safe_set.F",
                format!("expected {n} columns, got {}", f.ncols()),
            ));
        }
        if self.safe_set.g.len() != f.nrows() {
            return Err(Error::validation(
                "safe_set.g",
                format!(
                    "expected {} entries, got {}",
                    f.nrows(),
                    self.safe_set.g.len()
                ),
            ));
        }
        if let Some(i) = self.safe_set.g.iter().position(|&v| !(v > 0.0)) {
            return Err(Error::validation(
                format!("safe_set.g[{i}]"),
                "must be strictly positive",
            ));
        }
        let set = PolyhedralSet::new(f, Vector::from_column_slice(&self.safe_set.g))
            .map_err(|e| Error::validation("safe_set", e.to_string()))?;

        let d = &self.data;
        if d.samples < n + big_n + 1 {
            return Err(Error::validation(
                "data.T",
                format!("{} < n + N + 1 = {}", d.samples, n + big_n + 1),
            ));
        }
        if !(d.u_max > 0.0) {
            return Err(Error::validation("data.u_max", "must be positive"));
        }
        if d.x0.len() != n {
            return Err(Error::validation(
                "data.x0",
                format!("expected {n} entries"),
            ));
        }
        let excitation = match &d.closed_loop {
            None => Excitation::Uniform,
            Some(g) => Excitation::ClosedLoop(FeedbackGains {
                k1: matrix(&g.k1, "data.closed_loop.K1", Some((m, n)))?,
                k2: matrix(&g.k2, "data.closed_loop.K2", Some((m, big_n)))?,
            }),
        };

        let s = &self.synthesis;
        if !(s.lambda > 0.0 && s.lambda <= 1.0) {
            return Err(Error::validation("synthesis.lambda", "must lie in (0, 1]"));
        }
        if let X1Spec::Point(p) = &s.x1 {
            if p.len() != n {
                return Err(Error::validation(
                    "synthesis.x1",
                    format!("expected {n} entries"),
                ));
            }
            if p.iter().all(|&v| v == 0.0) {
                return Err(Error::validation(
                    "synthesis.x1",
                    "expansion point must be nonzero",
                ));
            }
        }
        if !(s.eps_dd > 0.0) {
            return Err(Error::validation("synthesis.eps_dd", "must be positive"));
        }
        if !(s.bisect_tol >= 1e-3) {
            return Err(Error::validation(
                "synthesis.bisect_tol",
                "must be at least 1e-3",
            ));
        }
        K2Grid::new(s.baseline.k2_lo, s.baseline.k2_hi, s.baseline.k2_step)
            .map_err(|e| Error::validation("synthesis.baseline", e.to_string()))?;
        check_grid(&s.baseline.x_grid, n, "synthesis.baseline.x_grid")?;

        check_grid(&self.verify.grid, n, "verify.grid")?;
        if self.verify.horizon == 0 {
            return Err(Error::validation("verify.horizon", "must be at least 1"));
        }

        let collect = CollectConfig {
            samples: d.samples,
            u_max: d.u_max,
            x0: Vector::from_column_slice(&d.x0),
            seed: d.seed,
            with_noise: d.noise,
            excitation,
            require_in_set: d.require_in_set.then(|| set.clone()),
        };
        Ok(Built {
            plant,
            set,
            collect,
        })
    }
}

pub fn load_scenario(path: &Path) -> Result<Scenario> {
    let text =
        std::fs::read_to_string(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
    Scenario::from_json(&text)
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) const SEC_V: &str = include_str!("../examples/secV.json");

    #[test]
    fn shipped_scenario_matches_the_reference_system() {
        let s = Scenario::from_json(SEC_V).unwrap();
        let b = s.build().unwrap();
        assert_eq!(
            b.plant.a1,
            Mat::from_row_slice(2, 2, &[0.8, 0.5, -0.4, 1.2])
        );
        assert_eq!(b.plant.a2, Mat::from_row_slice(2, 2, &[0.0, 0.0, 1.0, 1.0]));
        assert_eq!(b.plant.b, Mat::from_row_slice(2, 1, &[0.0, 1.0]));
        assert_eq!(b.plant.h_w, 0.05);
        assert_eq!(b.set.g(), &Vector::from_element(4, 1.0));
        assert_eq!(
            b.set.f(),
            &Mat::from_row_slice(4, 2, &[0.2, 0.4, -0.2, -0.4, -0.15, 0.2, 0.15, -0.2])
        );
        assert_eq!(s.synthesis.lambda, 0.95);
        assert_eq!(s.data.samples, 40);
        assert_eq!(s.data.seed, 7);
    }

    #[test]
    fn zero_offset_is_a_validation_error() {
        let mut s = Scenario::from_json(SEC_V).unwrap();
        s.safe_set.g[2] = 0.0;
        match s.validate() {
            Err(Error::Validation { path, .. }) => assert_eq!(path, "safe_set.g[2]"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn exponent_length_is_checked() {
        let text = SEC_V.replacen("[2, 0]", "[2, 0, 1]", 1);
        match Scenario::from_json(&text) {
            Err(Error::Validation { path, .. }) => {
                assert_eq!(path, "system.dictionary[0].exponents")
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn unknown_term_kind_is_rejected() {
        let text = SEC_V.replacen("\"monomial\"", "\"tanh\"", 1);
        assert!(matches!(Scenario::from_json(&text), Err(Error::Parse(_))));
    }

    #[test]
    fn small_sample_count_is_rejected() {
        let mut s = Scenario::from_json(SEC_V).unwrap();
        s.data.samples = 4;
        assert!(matches!(s.validate(), Err(Error::Validation { path, .. }) if path == "data.T"));
    }

    #[test]
    fn auto_expansion_point_parses() {
        let text = SEC_V.replacen("\"x1\": [0.5, 0.5]", "\"x1\": \"auto\"", 1);
        let s = Scenario::from_json(&text).unwrap();
        assert_eq!(s.synthesis.x1, X1Spec::Auto(AutoTag::Auto));
    }

    #[test]
    fn fmt_round_trips() {
        for v in [0.1, -1.0 / 3.0, 6.02e23, 5e-324, 0.95] {
            assert_eq!(fmt_f64(v).parse::<f64>().unwrap(), v);
        }
    }

    mod roundtrip {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn serialize_then_load_is_identity(
                lambda in 0.01f64..=1.0,
                h_w in 0.0f64..1.0,
                g in prop::collection::vec(0.01f64..10.0, 4),
                a in prop::collection::vec(-2.0f64..2.0, 4),
                seed in any::<u64>(),
            ) {
                let mut s = Scenario::from_json(SEC_V).unwrap();
                s.synthesis.lambda = lambda;
                s.system.h_w = h_w;
                s.safe_set.g = g;
                s.system.a1 = vec![vec![a[0], a[1]], vec![a[2], a[3]]];
                s.data.seed = seed;
                let back = Scenario::from_json(&s.to_json()).unwrap();
                prop_assert_eq!(back, s);
            }
        }
    }
}
