//! Estimators of the outcome probabilities from the stopping point.

use num_bigint::BigInt;
use num_traits::{One, Zero};

use crate::error::{Error, Result};
use crate::lattice::{LatticePoint, OutcomeModel, Region};
use crate::paths::{count_paths, first_passage_pmf, frontier_mass, PathCountTable, PointKind};
use crate::scalar::{format_rational, ratio, rational_from_ints, Rational};

/// The first boundary point hit, which is all an estimator may look at.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct StopObservation {
    y: LatticePoint,
}

impl StopObservation {
    pub fn new(y: LatticePoint) -> Result<Self> {
        if y.order() == 0 {
            return Err(Error::ZeroOrder);
        }
        Ok(Self { y })
    }

    pub fn point(&self) -> &LatticePoint {
        &self.y
    }

    pub fn order(&self) -> usize {
        self.y.order()
    }
}

/// `p̂_i(y) = k*_i(y) / k(y)`.
pub fn unbiased_estimate(table: &PathCountTable, y: &LatticePoint) -> Result<Vec<Rational>> {
    if y.dim() != table.dim() {
        return Err(Error::DimensionMismatch { expected: table.dim(), found: y.dim() });
    }
    let counts = match table.get(y) {
        Some(c) if c.kind == PointKind::Boundary => c,
        None if y.order() > table.horizon() => return Err(Error::UnknownPoint(y.clone())),
        _ => return Err(Error::NotBoundary(y.clone())),
    };
    Ok(counts.from_unit.iter().map(|k| ratio(k, &counts.total)).collect())
}

/// Sample proportions `y_i / N`.
pub fn ml_estimate(y: &LatticePoint) -> Result<Vec<Rational>> {
    let n = y.order();
    if n == 0 {
        return Err(Error::ZeroOrder);
    }
    Ok(y.coords().iter().map(|&c| rational_from_ints(c as i64, n as i64)).collect())
}

/// Walks with closed-form unbiased estimators: level moves +1 on category 1,
/// -1 on category 3, 0 otherwise, stopped on first reaching level `b`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ClosedForm {
    /// Four-direction walk on the plane, stopped when the second
    /// coordinate reaches `b`. Categories: up, right, down, left.
    Lattice2d,
    /// Walk on the integers with steps +1, 0, -1.
    NullStep,
}

impl ClosedForm {
    pub fn dim(self) -> usize {
        match self {
            ClosedForm::Lattice2d => 4,
            ClosedForm::NullStep => 3,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            ClosedForm::Lattice2d => "lattice2d",
            ClosedForm::NullStep => "nullstep",
        }
    }

    pub fn parse(name: &str) -> Result<Self> {
        match name {
            "lattice2d" => Ok(ClosedForm::Lattice2d),
            "nullstep" => Ok(ClosedForm::NullStep),
            other => Err(Error::Parse(format!("unknown closed form {other:?}"))),
        }
    }

    pub fn coeffs(self) -> Vec<i64> {
        match self {
            ClosedForm::Lattice2d => vec![1, 0, -1, 0],
            ClosedForm::NullStep => vec![1, 0, -1],
        }
    }

    /// The level `b` if `region` is exactly this walk's stopping rule.
    pub fn matches(self, region: &Region) -> Option<u32> {
        match region.rule() {
            crate::lattice::RegionRule::Linear { coeffs, target }
                if *coeffs == self.coeffs() && *target >= 1 =>
            {
                u32::try_from(*target).ok()
            }
            _ => None,
        }
    }

    /// Closed form, with one-step absorption (`N = 1`) answered by the
    /// zero-length-path convention.
    pub fn estimate(self, y: &LatticePoint, b: u32) -> Result<Vec<Rational>> {
        if y.dim() != self.dim() {
            return Err(Error::DimensionMismatch { expected: self.dim(), found: y.dim() });
        }
        check_level(y, b)?;
        if y.order() == 1 {
            return Ok(unit_indicator(y));
        }
        match self {
            ClosedForm::Lattice2d => closed_form_lattice2d(y, b),
            ClosedForm::NullStep => closed_form_nullstep(y, b),
        }
    }
}

fn check_level(y: &LatticePoint, b: u32) -> Result<()> {
    if b == 0 {
        return Err(Error::InvalidArgument("level b must be positive".into()));
    }
    let c = y.coords();
    if c.len() < 3 || c[0] as i64 - c[2] as i64 != b as i64 {
        return Err(Error::NotOnBoundary(y.clone()));
    }
    Ok(())
}

fn unit_indicator(y: &LatticePoint) -> Vec<Rational> {
    y.coords()
        .iter()
        .map(|&c| if c == 1 { Rational::one() } else { Rational::zero() })
        .collect()
}

/// Level-walk estimator shared by both closed forms: the up and down
/// components are rescaled by `(b-1)/b` and `(b+1)/b`, the neutral ones are
/// plain `y_i / (N-1)`.
fn level_walk_estimate(y: &LatticePoint, b: u32) -> Vec<Rational> {
    let n1 = BigInt::from(y.order() - 1);
    let b = BigInt::from(b);
    y.coords()
        .iter()
        .enumerate()
        .map(|(i, &c)| {
            let c = BigInt::from(c);
            match i {
                0 => Rational::new((&b - 1) * c, &b * &n1),
                2 => Rational::new((&b + 1) * c, &b * &n1),
                _ => Rational::new(c, n1.clone()),
            }
        })
        .collect()
}

/// `(((b-1)/b) y_1/(N-1), y_2/(N-1), ((b+1)/b) y_3/(N-1), y_4/(N-1))`.
/// One-step absorption (`N = 1`) returns the indicator of the only path.
pub fn closed_form_lattice2d(y: &LatticePoint, b: u32) -> Result<Vec<Rational>> {
    if y.dim() != 4 {
        return Err(Error::DimensionMismatch { expected: 4, found: y.dim() });
    }
    check_level(y, b)?;
    if y.order() == 1 {
        return Ok(unit_indicator(y));
    }
    Ok(level_walk_estimate(y, b))
}

/// `(((b-1)/b) y_1/(N-1), y_2/(N-1), ((b+1)/b) y_3/(N-1))`; requires `N >= 2`.
pub fn closed_form_nullstep(y: &LatticePoint, b: u32) -> Result<Vec<Rational>> {
    if y.dim() != 3 {
        return Err(Error::DimensionMismatch { expected: 3, found: y.dim() });
    }
    check_level(y, b)?;
    if y.order() < 2 {
        return Err(Error::OrderTooSmall(y.order()));
    }
    Ok(level_walk_estimate(y, b))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum EstimateMethod {
    PathCounts,
    ClosedForm(ClosedForm),
}

#[derive(Clone, Debug, PartialEq)]
pub struct EstimateReport {
    pub observation: LatticePoint,
    pub unbiased: Vec<Rational>,
    pub ml: Vec<Rational>,
    pub method: EstimateMethod,
}

pub fn estimate_from_table(table: &PathCountTable, y: &LatticePoint) -> Result<EstimateReport> {
    let obs = StopObservation::new(y.clone())?;
    Ok(EstimateReport {
        unbiased: unbiased_estimate(table, obs.point())?,
        ml: ml_estimate(obs.point())?,
        observation: obs.y,
        method: EstimateMethod::PathCounts,
    })
}

pub fn estimate_closed_form(form: ClosedForm, y: &LatticePoint, b: u32) -> Result<EstimateReport> {
    let obs = StopObservation::new(y.clone())?;
    Ok(EstimateReport {
        unbiased: form.estimate(obs.point(), b)?,
        ml: ml_estimate(obs.point())?,
        observation: obs.y,
        method: EstimateMethod::ClosedForm(form),
    })
}

/// One expectation identity `E[estimate_i] = p_i`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct IdentityCheck {
    pub p: Vec<Rational>,
    pub category: usize,
    pub expected: Rational,
    pub actual: Rational,
}

impl IdentityCheck {
    pub fn holds(&self) -> bool {
        self.expected == self.actual
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct VerificationReport {
    pub horizon: usize,
    pub boundary_points: usize,
    pub checks: Vec<IdentityCheck>,
}

impl VerificationReport {
    pub fn all_hold(&self) -> bool {
        self.checks.iter().all(IdentityCheck::holds)
    }

    /// Grid points, in grid order, at which at least one identity fails.
    pub fn failing_points(&self) -> Vec<Vec<Rational>> {
        let mut out: Vec<Vec<Rational>> = Vec::new();
        for c in self.checks.iter().filter(|c| !c.holds()) {
            if !out.contains(&c.p) {
                out.push(c.p.clone());
            }
        }
        out
    }
}

/// Checks `sum_y p̂_i(y) P(y) = p_i` exactly for every grid point and category.
pub fn verify_unbiasedness(
    region: &Region,
    horizon: usize,
    p_grid: &[Vec<Rational>],
) -> Result<VerificationReport> {
    verify_estimator(region, horizon, p_grid, unbiased_estimate)
}

/// Same as [`verify_unbiasedness`] for an arbitrary estimator of `y`.
pub fn verify_estimator<F>(
    region: &Region,
    horizon: usize,
    p_grid: &[Vec<Rational>],
    estimator: F,
) -> Result<VerificationReport>
where
    F: Fn(&PathCountTable, &LatticePoint) -> Result<Vec<Rational>>,
{
    let table = count_paths(region, horizon)?;
    let estimates: Vec<(LatticePoint, Vec<Rational>)> = table
        .boundary()
        .map(|(y, _)| Ok((y.clone(), estimator(&table, y)?)))
        .collect::<Result<_>>()?;
    let mut checks = Vec::new();
    for p in p_grid {
        let model = OutcomeModel::new(p.clone(), None)?;
        let residual = frontier_mass(&table, &model)?;
        if !residual.is_zero() {
            return Err(Error::NotClosedAtHorizon { horizon, residual: format_rational(&residual) });
        }
        let pmf = first_passage_pmf(&table, &model)?;
        for (category, expected) in p.iter().enumerate() {
            let actual = estimates
                .iter()
                .map(|(y, est)| &est[category] * &pmf[y])
                .fold(Rational::zero(), |a, b| a + b);
            checks.push(IdentityCheck { p: p.clone(), category, expected: expected.clone(), actual });
        }
    }
    Ok(VerificationReport { horizon, boundary_points: estimates.len(), checks })
}
