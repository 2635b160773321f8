//! Exact convex-hull membership for lattice points of a common order.
//!
//! Membership is the feasibility of `sum_j w_j g_j = q, sum_j w_j = 1,
//! w >= 0`, decided by a phase-one simplex over rationals with Bland's rule.
//! When infeasible, the phase-one duals give a Farkas vector, which is turned
//! into an integer separating hyperplane.

use num_bigint::BigInt;
use num_integer::Integer;
use num_traits::{One, Signed, Zero};

use crate::error::{Error, Result};
use crate::lattice::LatticePoint;
use crate::scalar::Rational;

/// Hyperplane `coeffs · x = offset` through the query point, with
/// `coeffs · g >= offset + margin` on every generator.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SeparationCertificate {
    pub coeffs: Vec<Rational>,
    pub offset: Rational,
    pub margin: Rational,
}

impl SeparationCertificate {
    /// Re-checks the certificate by substitution.
    pub fn verify(&self, generators: &[LatticePoint], query: &LatticePoint) -> bool {
        if self.margin <= Rational::zero() {
            return false;
        }
        if eval(&self.coeffs, query) != self.offset {
            return false;
        }
        let floor = &self.offset + &self.margin;
        generators.iter().all(|g| eval(&self.coeffs, g) >= floor)
    }
}

fn eval(coeffs: &[Rational], x: &LatticePoint) -> Rational {
    coeffs
        .iter()
        .zip(x.coords())
        .map(|(m, &c)| m * Rational::from_integer(BigInt::from(c)))
        .fold(Rational::zero(), |a, b| a + b)
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum HullMembership {
    /// Convex weights, indexed like the generator slice; zero weights omitted.
    Contained { weights: Vec<(usize, Rational)> },
    Separated(SeparationCertificate),
}

impl HullMembership {
    pub fn is_contained(&self) -> bool {
        matches!(self, HullMembership::Contained { .. })
    }
}

pub fn hull_contains(generators: &[LatticePoint], query: &LatticePoint) -> Result<HullMembership> {
    let first = generators.first().ok_or(Error::EmptyGenerators)?;
    let dim = first.dim();
    let order = first.order();
    for g in generators.iter().chain(std::iter::once(query)) {
        if g.dim() != dim {
            return Err(Error::DimensionMismatch { expected: dim, found: g.dim() });
        }
        if g.order() != order {
            return Err(Error::MixedOrder);
        }
    }
    if let Some(j) = generators.iter().position(|g| g == query) {
        return Ok(HullMembership::Contained { weights: vec![(j, Rational::one())] });
    }

    let mut lp = PhaseOne::new(generators, query);
    lp.solve();
    if lp.objective().is_zero() {
        return Ok(HullMembership::Contained { weights: lp.weights() });
    }
    let farkas = lp.duals();
    let cert = certificate_from_farkas(&farkas, generators, query);
    debug_assert!(cert.verify(generators, query));
    Ok(HullMembership::Separated(cert))
}

/// Dense phase-one tableau. Rows: one per coordinate plus the weight sum.
/// Columns: generator weights, then one artificial per row, then the rhs.
struct PhaseOne {
    rows: usize,
    gens: usize,
    tab: Vec<Vec<Rational>>,
    /// Reduced costs per column; last entry is minus the objective.
    cost: Vec<Rational>,
    basis: Vec<usize>,
}

impl PhaseOne {
    fn new(generators: &[LatticePoint], query: &LatticePoint) -> Self {
        let dim = query.dim();
        let rows = dim + 1;
        let gens = generators.len();
        let cols = gens + rows + 1;
        let int = |v: u32| Rational::from_integer(BigInt::from(v));
        let mut tab = vec![vec![Rational::zero(); cols]; rows];
        for (j, g) in generators.iter().enumerate() {
            for (i, &c) in g.coords().iter().enumerate() {
                tab[i][j] = int(c);
            }
            tab[dim][j] = Rational::one();
        }
        for (i, row) in tab.iter_mut().enumerate() {
            row[gens + i] = Rational::one();
            row[cols - 1] = if i < dim { int(query.coords()[i]) } else { Rational::one() };
        }
        let mut cost = vec![Rational::zero(); cols];
        for row in &tab {
            for j in 0..gens {
                cost[j] -= &row[j];
            }
            cost[cols - 1] -= &row[cols - 1];
        }
        let basis = (gens..gens + rows).collect();
        Self { rows, gens, tab, cost, basis }
    }

    fn solve(&mut self) {
        let cols = self.cost.len() - 1;
        while let Some(enter) = (0..cols).find(|&j| self.cost[j].is_negative()) {
            let mut leave: Option<(usize, Rational)> = None;
            for i in 0..self.rows {
                let a = &self.tab[i][enter];
                if !a.is_positive() {
                    continue;
                }
                let ratio = &self.tab[i][cols] / a;
                let better = match &leave {
                    None => true,
                    Some((l, best)) => {
                        ratio < *best || (ratio == *best && self.basis[i] < self.basis[*l])
                    }
                };
                if better {
                    leave = Some((i, ratio));
                }
            }
            // Phase one is bounded below by zero, so a pivot row always exists.
            let (row, _) = leave.expect("phase-one objective is bounded");
            self.pivot(row, enter);
        }
    }

    fn pivot(&mut self, row: usize, col: usize) {
        let pivot = self.tab[row][col].clone();
        for v in self.tab[row].iter_mut() {
            *v /= &pivot;
        }
        let pivot_row = self.tab[row].clone();
        for (i, r) in self.tab.iter_mut().enumerate() {
            if i == row || r[col].is_zero() {
                continue;
            }
            let factor = r[col].clone();
            for (v, p) in r.iter_mut().zip(&pivot_row) {
                if !p.is_zero() {
                    *v -= &factor * p;
                }
            }
        }
        let factor = self.cost[col].clone();
        if !factor.is_zero() {
            for (v, p) in self.cost.iter_mut().zip(&pivot_row) {
                if !p.is_zero() {
                    *v -= &factor * p;
                }
            }
        }
        self.basis[row] = col;
    }

    fn objective(&self) -> Rational {
        -self.cost.last().expect("non-empty").clone()
    }

    fn weights(&self) -> Vec<(usize, Rational)> {
        let rhs = self.cost.len() - 1;
        let mut w: Vec<(usize, Rational)> = self
            .basis
            .iter()
            .enumerate()
            .filter(|&(i, &b)| b < self.gens && !self.tab[i][rhs].is_zero())
            .map(|(i, &b)| (b, self.tab[i][rhs].clone()))
            .collect();
        w.sort_by_key(|(j, _)| *j);
        w
    }

    /// Phase-one simplex multipliers `y`, recovered from the reduced costs of
    /// the artificial columns (each has unit cost).
    fn duals(&self) -> Vec<Rational> {
        (0..self.rows)
            .map(|i| Rational::one() - &self.cost[self.gens + i])
            .collect()
    }
}

/// With `y = (w, t)` satisfying `w·g + t <= 0` on generators and
/// `w·q + t > 0`, the direction `m = -w` separates. The result is scaled to
/// integers, shifted along `(1,...,1)` so the smallest coefficient is zero
/// (valid on a fixed-order slice), and reduced by the common divisor.
fn certificate_from_farkas(
    y: &[Rational],
    generators: &[LatticePoint],
    query: &LatticePoint,
) -> SeparationCertificate {
    let dim = query.dim();
    let m: Vec<Rational> = y[..dim].iter().map(|w| -w.clone()).collect();
    let lcm = m
        .iter()
        .fold(BigInt::one(), |acc, v| acc.lcm(v.denom()));
    let mut ints: Vec<BigInt> = m
        .iter()
        .map(|v| (v * Rational::from_integer(lcm.clone())).to_integer())
        .collect();
    let min = ints.iter().min().cloned().unwrap_or_default();
    for v in ints.iter_mut() {
        *v -= &min;
    }
    let gcd = ints.iter().fold(BigInt::zero(), |acc, v| acc.gcd(v));
    if !gcd.is_zero() && !gcd.is_one() {
        for v in ints.iter_mut() {
            *v /= &gcd;
        }
    }
    let coeffs: Vec<Rational> = ints.into_iter().map(Rational::from_integer).collect();
    let offset = eval(&coeffs, query);
    let margin = generators
        .iter()
        .map(|g| eval(&coeffs, g) - &offset)
        .min()
        .expect("generators are non-empty");
    SeparationCertificate { coeffs, offset, margin }
}
