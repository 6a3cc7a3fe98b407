//! Model data for the linear reaction-hyperbolic system `U_t + Λ U_x = (K/ε) U`
//! on the quarter plane, together with the structural checks H1–H5 and a
//! catalog of reference systems.
//!
//! The structural assumptions are
//!
//! * **H1** off-diagonal rates are nonnegative,
//! * **H2** every column of `K` sums to zero (mass conservation),
//! * **H3** the reaction graph is strongly connected (irreducibility),
//! * **H4** not all velocities coincide,
//! * **H5** every velocity is strictly positive.

use std::collections::VecDeque;
use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("rate matrix must be square, got {rows}x{cols}")]
    NotSquare { rows: usize, cols: usize },
    #[error("dimension mismatch: lambda has {lambda} entries but K is {rates}x{rates}")]
    DimensionMismatch { lambda: usize, rates: usize },
    #[error("epsilon must be positive and finite, got {0}")]
    BadEpsilon(f64),
    #[error("non-finite entry in {0}")]
    NonFinite(&'static str),
    #[error("system dimension must be at least 1")]
    Empty,
    #[error("unknown catalog entry `{0}`")]
    UnknownCatalog(String),
    #[error("invalid catalog parameters: {0}")]
    InvalidParams(String),
    #[error("initial data: {0}")]
    InitialData(String),
}

/// Reaction-rate matrix `K`; entry `(i, j)` is the conversion rate from
/// subpopulation `j` into `i`.
#[derive(Debug, Clone, PartialEq)]
pub struct RateMatrix(DMatrix<f64>);

impl RateMatrix {
    pub fn new(k: DMatrix<f64>) -> Result<Self, ModelError> {
        if k.nrows() != k.ncols() {
            return Err(ModelError::NotSquare {
                rows: k.nrows(),
                cols: k.ncols(),
            });
        }
        if k.nrows() == 0 {
            return Err(ModelError::Empty);
        }
        if k.iter().any(|v| !v.is_finite()) {
            return Err(ModelError::NonFinite("K"));
        }
        Ok(Self(k))
    }

    /// Build from row-major nested rows.
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self, ModelError> {
        let r = rows.len();
        if let Some(bad) = rows.iter().find(|row| row.len() != r) {
            return Err(ModelError::NotSquare {
                rows: r,
                cols: bad.len(),
            });
        }
        Self::new(DMatrix::from_fn(r, r, |i, j| rows[i][j]))
    }

    pub fn dim(&self) -> usize {
        self.0.nrows()
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.0
    }

    pub fn into_matrix(self) -> DMatrix<f64> {
        self.0
    }
}

/// Diagonal velocity matrix `Λ = diag(λ_1, …, λ_r)`.
#[derive(Debug, Clone, PartialEq)]
pub struct VelocityMatrix(DVector<f64>);

impl VelocityMatrix {
    pub fn new(diag: DVector<f64>) -> Result<Self, ModelError> {
        if diag.is_empty() {
            return Err(ModelError::Empty);
        }
        if diag.iter().any(|v| !v.is_finite()) {
            return Err(ModelError::NonFinite("lambda"));
        }
        Ok(Self(diag))
    }

    pub fn from_slice(values: &[f64]) -> Result<Self, ModelError> {
        Self::new(DVector::from_column_slice(values))
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn diagonal(&self) -> &DVector<f64> {
        &self.0
    }

    pub fn matrix(&self) -> DMatrix<f64> {
        DMatrix::from_diagonal(&self.0)
    }

    pub fn max_speed(&self) -> f64 {
        self.0.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }
}

/// The model `(Λ, K, ε)`.
///
/// Construction only checks shapes and `ε`; the structural assumptions are
/// reported by [`validate_assumptions`].
#[derive(Debug, Clone, PartialEq)]
pub struct SystemSpec {
    lambda: VelocityMatrix,
    rates: RateMatrix,
    epsilon: f64,
}

impl SystemSpec {
    pub fn new(lambda: VelocityMatrix, rates: RateMatrix, epsilon: f64) -> Result<Self, ModelError> {
        if lambda.dim() != rates.dim() {
            return Err(ModelError::DimensionMismatch {
                lambda: lambda.dim(),
                rates: rates.dim(),
            });
        }
        if !(epsilon > 0.0 && epsilon.is_finite()) {
            return Err(ModelError::BadEpsilon(epsilon));
        }
        Ok(Self {
            lambda,
            rates,
            epsilon,
        })
    }

    /// Convenience constructor from plain slices with `ε = 1`.
    pub fn from_parts(lambda: &[f64], k_rows: &[Vec<f64>]) -> Result<Self, ModelError> {
        Self::new(
            VelocityMatrix::from_slice(lambda)?,
            RateMatrix::from_rows(k_rows)?,
            1.0,
        )
    }

    pub fn with_epsilon(&self, epsilon: f64) -> Result<Self, ModelError> {
        Self::new(self.lambda.clone(), self.rates.clone(), epsilon)
    }

    pub fn dim(&self) -> usize {
        self.rates.dim()
    }

    pub fn lambda(&self) -> &VelocityMatrix {
        &self.lambda
    }

    pub fn rates(&self) -> &RateMatrix {
        &self.rates
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    /// The reaction matrix that actually drives the dynamics, `K/ε`.
    pub fn effective_rates(&self) -> DMatrix<f64> {
        scaled_rates(self).into_matrix()
    }
}

/// `K/ε`. Scaling by a positive constant leaves H1–H3 intact.
pub fn scaled_rates(spec: &SystemSpec) -> RateMatrix {
    RateMatrix(spec.rates.matrix() / spec.epsilon)
}

/// Evidence attached to a failed assumption.
#[derive(Debug, Clone, PartialEq)]
pub enum Witness {
    NegativeOffDiagonal { i: usize, j: usize, value: f64 },
    ColumnSum { column: usize, sum: f64 },
    Unreachable { from: usize, to: usize },
    ConstantVelocity { value: f64 },
    NonPositiveVelocity { index: usize, value: f64 },
}

impl fmt::Display for Witness {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Witness::NegativeOffDiagonal { i, j, value } => {
                write!(f, "k[{i},{j}] = {value} is negative")
            }
            Witness::ColumnSum { column, sum } => write!(f, "column {column} sums to {sum}"),
            Witness::Unreachable { from, to } => {
                write!(f, "no reaction path from {from} to {to}")
            }
            Witness::ConstantVelocity { value } => write!(f, "all velocities equal {value}"),
            Witness::NonPositiveVelocity { index, value } => {
                write!(f, "lambda[{index}] = {value} is not positive")
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Verdict {
    pub passed: bool,
    pub witness: Option<Witness>,
}

impl Verdict {
    fn pass() -> Self {
        Self {
            passed: true,
            witness: None,
        }
    }

    fn fail(w: Witness) -> Self {
        Self {
            passed: false,
            witness: Some(w),
        }
    }
}

/// Per-assumption verdicts for H1–H5.
#[derive(Debug, Clone, PartialEq)]
pub struct AssumptionReport {
    pub h1: Verdict,
    pub h2: Verdict,
    pub h3: Verdict,
    pub h4: Verdict,
    pub h5: Verdict,
}

impl AssumptionReport {
    pub fn verdicts(&self) -> [(&'static str, &Verdict); 5] {
        [
            ("H1", &self.h1),
            ("H2", &self.h2),
            ("H3", &self.h3),
            ("H4", &self.h4),
            ("H5", &self.h5),
        ]
    }

    pub fn passed(&self) -> bool {
        self.verdicts().iter().all(|(_, v)| v.passed)
    }

    pub fn failed(&self) -> Vec<&'static str> {
        self.verdicts()
            .iter()
            .filter(|(_, v)| !v.passed)
            .map(|(name, _)| *name)
            .collect()
    }
}

impl fmt::Display for AssumptionReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (name, v) in self.verdicts() {
            match &v.witness {
                None => writeln!(f, "{name}: pass")?,
                Some(w) => writeln!(f, "{name}: FAIL ({w})")?,
            }
        }
        write!(f, "overall: {}", if self.passed() { "pass" } else { "FAIL" })
    }
}

/// H1–H3 on a bare rate matrix.
pub fn check_rate_assumptions(k: &DMatrix<f64>, tol: f64) -> (Verdict, Verdict, Verdict) {
    let r = k.nrows();

    let mut h1 = Verdict::pass();
    'outer: for i in 0..r {
        for j in 0..r {
            if i != j && k[(i, j)] < 0.0 {
                h1 = Verdict::fail(Witness::NegativeOffDiagonal {
                    i,
                    j,
                    value: k[(i, j)],
                });
                break 'outer;
            }
        }
    }

    let h2 = (0..r)
        .map(|j| (j, k.column(j).sum()))
        .find(|(_, s)| s.abs() > tol)
        .map_or_else(Verdict::pass, |(column, sum)| {
            Verdict::fail(Witness::ColumnSum { column, sum })
        });

    // Edge u -> v whenever k[u,v] > tol; strong connectivity does not depend
    // on the orientation convention.
    let mut h3 = Verdict::pass();
    'search: for start in 0..r {
        let mut seen = vec![false; r];
        seen[start] = true;
        let mut queue = VecDeque::from([start]);
        while let Some(u) = queue.pop_front() {
            for v in 0..r {
                if v != u && !seen[v] && k[(u, v)] > tol {
                    seen[v] = true;
                    queue.push_back(v);
                }
            }
        }
        if let Some(to) = seen.iter().position(|s| !s) {
            h3 = Verdict::fail(Witness::Unreachable { from: start, to });
            break 'search;
        }
    }

    (h1, h2, h3)
}

pub fn validate_assumptions(spec: &SystemSpec, tol: f64) -> AssumptionReport {
    let (h1, h2, h3) = check_rate_assumptions(spec.rates.matrix(), tol);
    let lam = spec.lambda.diagonal();

    let first = lam[0];
    let h4 = if lam.iter().any(|v| (v - first).abs() > tol) {
        Verdict::pass()
    } else {
        Verdict::fail(Witness::ConstantVelocity { value: first })
    };

    let h5 = lam
        .iter()
        .position(|&v| v <= tol)
        .map_or_else(Verdict::pass, |index| {
            Verdict::fail(Witness::NonPositiveVelocity {
                index,
                value: lam[index],
            })
        });

    AssumptionReport { h1, h2, h3, h4, h5 }
}

/// Named reference systems.
#[derive(Debug, Clone, PartialEq)]
pub enum Catalog {
    /// The 4×4 irreducible conservative matrix whose `KD` is not symmetric.
    Counterexample4x4,
    /// `K = [[-a, b], [a, -b]]`, `Λ = diag(1, 2)`.
    TwoState { a: f64, b: f64 },
    /// Off-diagonal rates `[k12, k13, k21, k23, k31, k32]`, `Λ = diag(1, 2, 3)`.
    ThreeState { offdiag: [f64; 6] },
    /// Random irreducible conservative system of dimension `r`.
    RandomValid { r: usize, seed: u64 },
}

impl Catalog {
    /// Parse `name[:p1,p2,...]`; the seed of `random_valid` is passed separately.
    pub fn parse(text: &str, seed: Option<u64>) -> Result<Self, ModelError> {
        let (name, args) = match text.split_once(':') {
            Some((n, a)) => (n, a),
            None => (text, ""),
        };
        let nums = || -> Result<Vec<f64>, ModelError> {
            if args.trim().is_empty() {
                return Ok(Vec::new());
            }
            args.split(',')
                .map(|s| {
                    s.trim()
                        .parse::<f64>()
                        .map_err(|_| ModelError::InvalidParams(format!("bad number `{s}`")))
                })
                .collect()
        };
        match name {
            "counterexample_4x4" => Ok(Catalog::Counterexample4x4),
            "two_state" => match nums()?.as_slice() {
                [a, b] => Ok(Catalog::TwoState { a: *a, b: *b }),
                _ => Err(ModelError::InvalidParams("two_state needs a,b".into())),
            },
            "three_state" => {
                let v = nums()?;
                let offdiag: [f64; 6] = v.try_into().map_err(|_| {
                    ModelError::InvalidParams("three_state needs six off-diagonal rates".into())
                })?;
                Ok(Catalog::ThreeState { offdiag })
            }
            "random_valid" => {
                let v = nums()?;
                let r = match v.as_slice() {
                    [r] if *r >= 0.0 && r.fract() == 0.0 => *r as usize,
                    _ => return Err(ModelError::InvalidParams("random_valid needs r".into())),
                };
                let seed = seed.ok_or_else(|| {
                    ModelError::InvalidParams("random_valid requires an explicit seed".into())
                })?;
                Ok(Catalog::RandomValid { r, seed })
            }
            other => Err(ModelError::UnknownCatalog(other.to_string())),
        }
    }
}

pub fn catalog(entry: &Catalog) -> Result<SystemSpec, ModelError> {
    match entry {
        Catalog::Counterexample4x4 => SystemSpec::from_parts(
            &[1.0, 2.0, 3.0, 4.0],
            &[
                vec![-4.0, 1.0, 1.0, 0.0],
                vec![2.0, -3.0, 0.0, 1.0],
                vec![2.0, 1.0, -2.0, 0.0],
                vec![0.0, 1.0, 1.0, -1.0],
            ],
        ),
        &Catalog::TwoState { a, b } => {
            if !(a > 0.0 && b > 0.0) {
                return Err(ModelError::InvalidParams(format!(
                    "two_state needs a, b > 0 (got {a}, {b})"
                )));
            }
            SystemSpec::from_parts(&[1.0, 2.0], &[vec![-a, b], vec![a, -b]])
        }
        Catalog::ThreeState { offdiag } => {
            if offdiag.iter().any(|v| *v < 0.0 || !v.is_finite()) {
                return Err(ModelError::InvalidParams(
                    "three_state rates must be nonnegative".into(),
                ));
            }
            let [k12, k13, k21, k23, k31, k32] = *offdiag;
            SystemSpec::from_parts(
                &[1.0, 2.0, 3.0],
                &[
                    vec![-(k21 + k31), k12, k13],
                    vec![k21, -(k12 + k32), k23],
                    vec![k31, k32, -(k13 + k23)],
                ],
            )
        }
        &Catalog::RandomValid { r, seed } => random_valid(r, seed),
    }
}

fn random_valid(r: usize, seed: u64) -> Result<SystemSpec, ModelError> {
    if r < 2 {
        return Err(ModelError::InvalidParams(format!(
            "random_valid needs r >= 2 (got {r})"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let k = loop {
        let mut k = DMatrix::<f64>::zeros(r, r);
        for i in 0..r {
            for j in 0..r {
                if i != j && rng.gen_bool(0.6) {
                    k[(i, j)] = rng.gen_range(0.05..2.0);
                }
            }
        }
        for j in 0..r {
            let off: f64 = (0..r).filter(|&i| i != j).map(|i| k[(i, j)]).sum();
            k[(j, j)] = -off;
        }
        let (_, _, h3) = check_rate_assumptions(&k, 0.0);
        if h3.passed {
            break k;
        }
    };
    // Distinct velocities, well separated so H4 is robust.
    let mut lam: Vec<f64> = Vec::with_capacity(r);
    while lam.len() < r {
        let v: f64 = rng.gen_range(0.5..4.0);
        if lam.iter().all(|w| (w - v).abs() > 1e-2) {
            lam.push(v);
        }
    }
    SystemSpec::new(
        VelocityMatrix::from_slice(&lam)?,
        RateMatrix::new(k)?,
        1.0,
    )
}

type VectorFn = Arc<dyn Fn(f64) -> DVector<f64> + Send + Sync>;

/// Initial datum `U_0` on `x ≥ 0`, either in closed form or sampled.
#[derive(Clone)]
pub enum InitialData {
    Closed {
        dim: usize,
        value: VectorFn,
        /// Exact derivative when known.
        slope: Option<VectorFn>,
    },
    Sampled {
        xs: Vec<f64>,
        values: Vec<DVector<f64>>,
    },
}

impl fmt::Debug for InitialData {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            InitialData::Closed { dim, slope, .. } => f
                .debug_struct("Closed")
                .field("dim", dim)
                .field("exact_slope", &slope.is_some())
                .finish(),
            InitialData::Sampled { xs, .. } => f
                .debug_struct("Sampled")
                .field("samples", &xs.len())
                .finish(),
        }
    }
}

impl InitialData {
    pub fn closed(dim: usize, value: impl Fn(f64) -> DVector<f64> + Send + Sync + 'static) -> Self {
        InitialData::Closed {
            dim,
            value: Arc::new(value),
            slope: None,
        }
    }

    pub fn closed_with_slope(
        dim: usize,
        value: impl Fn(f64) -> DVector<f64> + Send + Sync + 'static,
        slope: impl Fn(f64) -> DVector<f64> + Send + Sync + 'static,
    ) -> Self {
        InitialData::Closed {
            dim,
            value: Arc::new(value),
            slope: Some(Arc::new(slope)),
        }
    }

    pub fn constant(c: DVector<f64>) -> Self {
        let r = c.len();
        let zero = DVector::zeros(r);
        Self::closed_with_slope(r, move |_| c.clone(), move |_| zero.clone())
    }

    /// Sampled data; abscissae must start at 0 and increase strictly.
    pub fn sampled(xs: Vec<f64>, values: Vec<DVector<f64>>) -> Result<Self, ModelError> {
        if xs.is_empty() || xs.len() != values.len() {
            return Err(ModelError::InitialData(
                "need matching, nonempty abscissae and values".into(),
            ));
        }
        if xs[0] != 0.0 {
            return Err(ModelError::InitialData(
                "sampled data must be defined at x = 0".into(),
            ));
        }
        if xs.windows(2).any(|w| w[1] <= w[0]) {
            return Err(ModelError::InitialData(
                "abscissae must increase strictly".into(),
            ));
        }
        let r = values[0].len();
        if values.iter().any(|v| v.len() != r) {
            return Err(ModelError::InitialData("inconsistent component count".into()));
        }
        if values.iter().flat_map(|v| v.iter()).any(|v| !v.is_finite()) {
            return Err(ModelError::NonFinite("initial data"));
        }
        Ok(InitialData::Sampled { xs, values })
    }

    pub fn dim(&self) -> usize {
        match self {
            InitialData::Closed { dim, .. } => *dim,
            InitialData::Sampled { values, .. } => values[0].len(),
        }
    }

    /// Largest abscissa covered (infinite for closed forms).
    pub fn extent(&self) -> f64 {
        match self {
            InitialData::Closed { .. } => f64::INFINITY,
            InitialData::Sampled { xs, .. } => *xs.last().unwrap(),
        }
    }

    /// Value at `x`; sampled data is interpolated linearly.
    pub fn eval(&self, x: f64) -> Result<DVector<f64>, ModelError> {
        match self {
            InitialData::Closed { value, .. } => {
                let v = value(x);
                if v.iter().any(|c| !c.is_finite()) {
                    return Err(ModelError::NonFinite("initial data"));
                }
                Ok(v)
            }
            InitialData::Sampled { xs, values } => {
                let last = *xs.last().unwrap();
                if x < 0.0 || x > last * (1.0 + 1e-12) {
                    return Err(ModelError::InitialData(format!(
                        "x = {x} outside sampled range [0, {last}]"
                    )));
                }
                let idx = xs.partition_point(|&s| s <= x);
                if idx == 0 {
                    return Ok(values[0].clone());
                }
                if idx >= xs.len() {
                    return Ok(values[xs.len() - 1].clone());
                }
                let (x0, x1) = (xs[idx - 1], xs[idx]);
                let w = (x - x0) / (x1 - x0);
                Ok(&values[idx - 1] * (1.0 - w) + &values[idx] * w)
            }
        }
    }

    /// `U_0'(0)`: exact when available, otherwise a second-order one-sided difference.
    pub fn slope_at_zero(&self) -> Result<DVector<f64>, ModelError> {
        match self {
            InitialData::Closed {
                slope: Some(slope), ..
            } => Ok(slope(0.0)),
            InitialData::Closed { value, .. } => {
                // Richardson-combined one-sided differences at two step sizes.
                let d = |h: f64| (value(h) * 4.0 - value(2.0 * h) - value(0.0) * 3.0) / (2.0 * h);
                let h = 1e-4;
                Ok((d(h / 2.0) * 4.0 - d(h)) / 3.0)
            }
            InitialData::Sampled { xs, values } => {
                if xs.len() < 3 {
                    return Err(ModelError::InitialData(
                        "need at least 3 samples near x = 0 for a one-sided difference".into(),
                    ));
                }
                let (x0, x1, x2) = (xs[0], xs[1], xs[2]);
                let c0 = (2.0 * x0 - x1 - x2) / ((x0 - x1) * (x0 - x2));
                let c1 = (x0 - x2) / ((x1 - x0) * (x1 - x2));
                let c2 = (x0 - x1) / ((x2 - x0) * (x2 - x1));
                Ok(&values[0] * c0 + &values[1] * c1 + &values[2] * c2)
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CompatibilityReport {
    /// `|Λ U_0'(0) − (K/ε) U_0(0)|_∞`.
    pub residual: f64,
    pub passed: bool,
}

/// First-order compatibility of the initial data with the inflow boundary.
pub fn check_initial_compatibility(
    spec: &SystemSpec,
    u0: &InitialData,
    tol: f64,
) -> Result<CompatibilityReport, ModelError> {
    if u0.dim() != spec.dim() {
        return Err(ModelError::InitialData(format!(
            "initial data has {} components, system has {}",
            u0.dim(),
            spec.dim()
        )));
    }
    let value = u0.eval(0.0)?;
    let slope = u0.slope_at_zero()?;
    let lhs = slope.component_mul(spec.lambda.diagonal());
    let rhs = spec.effective_rates() * value;
    let residual = (lhs - rhs).amax();
    Ok(CompatibilityReport {
        residual,
        passed: residual <= tol,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn counterexample_passes_all_assumptions() {
        let spec = catalog(&Catalog::Counterexample4x4).unwrap();
        let rep = validate_assumptions(&spec, 1e-12);
        assert!(rep.passed(), "{rep}");
    }

    #[test]
    fn zero_matrix_fails_only_irreducibility() {
        let spec = SystemSpec::from_parts(&[1.0, 2.0], &[vec![0.0, 0.0], vec![0.0, 0.0]]).unwrap();
        let rep = validate_assumptions(&spec, 0.0);
        assert_eq!(rep.failed(), vec!["H3"]);
        assert!(matches!(rep.h3.witness, Some(Witness::Unreachable { .. })));
    }

    #[test]
    fn equal_velocities_fail_h4() {
        let spec =
            SystemSpec::from_parts(&[1.0, 1.0], &[vec![-1.0, 1.0], vec![1.0, -1.0]]).unwrap();
        let rep = validate_assumptions(&spec, 0.0);
        assert_eq!(rep.failed(), vec!["H4"]);
        assert_eq!(
            rep.h4.witness.as_ref().unwrap().to_string(),
            "all velocities equal 1"
        );
    }

    #[test]
    fn witnesses_for_h1_h2_h5() {
        let spec =
            SystemSpec::from_parts(&[1.0, -2.0], &[vec![-1.0, -1.0], vec![1.0, 2.0]]).unwrap();
        let rep = validate_assumptions(&spec, 1e-12);
        assert_eq!(rep.failed(), vec!["H1", "H2", "H3", "H5"]);
        assert_eq!(
            rep.h1.witness,
            Some(Witness::NegativeOffDiagonal {
                i: 0,
                j: 1,
                value: -1.0
            })
        );
        assert_eq!(
            rep.h5.witness,
            Some(Witness::NonPositiveVelocity {
                index: 1,
                value: -2.0
            })
        );
    }

    #[test]
    fn scaling_rates() {
        let spec = catalog(&Catalog::TwoState { a: 1.0, b: 1.0 }).unwrap();
        assert_eq!(scaled_rates(&spec), spec.rates().clone());
        let half = spec.with_epsilon(0.5).unwrap();
        let k = scaled_rates(&half);
        assert_eq!(
            k.matrix(),
            &DMatrix::from_row_slice(2, 2, &[-2.0, 2.0, 2.0, -2.0])
        );
        let ce = catalog(&Catalog::Counterexample4x4)
            .unwrap()
            .with_epsilon(2.0)
            .unwrap();
        let k = scaled_rates(&ce);
        for j in 0..4 {
            assert!(k.matrix().column(j).sum().abs() <= 1e-14);
        }
        assert_eq!(k.matrix()[(1, 0)], 1.0);
    }

    #[test]
    fn catalog_rejects_bad_input() {
        assert!(matches!(
            Catalog::parse("nope", None),
            Err(ModelError::UnknownCatalog(_))
        ));
        assert!(catalog(&Catalog::TwoState { a: 0.0, b: 1.0 }).is_err());
        assert!(catalog(&Catalog::RandomValid { r: 1, seed: 3 }).is_err());
        assert!(Catalog::parse("random_valid:4", None).is_err());
        assert_eq!(
            Catalog::parse("random_valid:4", Some(9)).unwrap(),
            Catalog::RandomValid { r: 4, seed: 9 }
        );
        assert_eq!(
            Catalog::parse("two_state:1,2", None).unwrap(),
            Catalog::TwoState { a: 1.0, b: 2.0 }
        );
    }

    #[test]
    fn two_state_layout() {
        let spec = catalog(&Catalog::TwoState { a: 1.0, b: 1.0 }).unwrap();
        assert_eq!(
            spec.rates().matrix(),
            &DMatrix::from_row_slice(2, 2, &[-1.0, 1.0, 1.0, -1.0])
        );
        assert_eq!(spec.lambda().diagonal().as_slice(), &[1.0, 2.0]);
    }

    #[test]
    fn random_valid_seed_seven() {
        let spec = catalog(&Catalog::RandomValid { r: 5, seed: 7 }).unwrap();
        assert!(validate_assumptions(&spec, 1e-12).passed());
        // deterministic
        assert_eq!(spec, catalog(&Catalog::RandomValid { r: 5, seed: 7 }).unwrap());
    }

    #[test]
    fn dimension_mismatch() {
        let err = SystemSpec::from_parts(&[1.0, 2.0, 3.0], &[vec![-1.0, 1.0], vec![1.0, -1.0]]);
        assert!(matches!(err, Err(ModelError::DimensionMismatch { .. })));
    }

    #[test]
    fn constant_data_incompatible() {
        let spec = catalog(&Catalog::TwoState { a: 1.0, b: 1.0 }).unwrap();
        let u0 = InitialData::constant(DVector::from_vec(vec![1.0, 0.0]));
        let rep = check_initial_compatibility(&spec, &u0, 1e-12).unwrap();
        assert!(!rep.passed);
        assert_eq!(rep.residual, 1.0);
    }

    #[test]
    fn sampled_slope_needs_three_points() {
        let spec = catalog(&Catalog::TwoState { a: 1.0, b: 1.0 }).unwrap();
        let u0 = InitialData::sampled(
            vec![0.0, 0.1],
            vec![DVector::zeros(2), DVector::zeros(2)],
        )
        .unwrap();
        assert!(check_initial_compatibility(&spec, &u0, 1e-12).is_err());
    }

    #[test]
    fn sampled_slope_is_second_order() {
        // f(x) = x^2 + 3x; the three-point rule is exact for quadratics.
        let xs = vec![0.0, 0.1, 0.25];
        let values = xs
            .iter()
            .map(|&x| DVector::from_vec(vec![x * x + 3.0 * x]))
            .collect();
        let u0 = InitialData::sampled(xs, values).unwrap();
        assert!((u0.slope_at_zero().unwrap()[0] - 3.0).abs() < 1e-13);
    }
}
