//! Lattice points, outcome models and stopping regions.
//!
//! A region is described by a membership rule (explicit set, linear
//! inequality, or trial design). The accessible set is always the part of
//! that rule reachable from the origin through accessible points, and the
//! boundary is derived from it: every non-accessible point one unit step away
//! from an accessible one.

use std::collections::{BTreeSet, HashMap};
use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use smallvec::SmallVec;

use crate::error::{Error, Result};
use crate::scalar::Probability;
use crate::trial::TrialLayout;

/// Occurrence counts per outcome category. Ordered lexicographically.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct LatticePoint(SmallVec<[u32; 4]>);

impl LatticePoint {
    pub fn new(coords: impl IntoIterator<Item = u32>) -> Self {
        Self(coords.into_iter().collect())
    }

    pub fn origin(dim: usize) -> Self {
        Self(SmallVec::from_elem(0, dim))
    }

    /// The unit vector `e_i`.
    pub fn unit(dim: usize, i: usize) -> Self {
        let mut p = Self::origin(dim);
        p.0[i] = 1;
        p
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    /// Number of trials: the sum of the coordinates.
    pub fn order(&self) -> usize {
        self.0.iter().map(|&c| c as usize).sum()
    }

    pub fn coords(&self) -> &[u32] {
        &self.0
    }

    pub fn is_origin(&self) -> bool {
        self.0.iter().all(|&c| c == 0)
    }

    pub fn step(&self, i: usize) -> Self {
        let mut next = self.clone();
        next.0[i] += 1;
        next
    }

    /// `self - e_i`, if it stays in the positive orthant.
    pub fn predecessor(&self, i: usize) -> Option<Self> {
        if self.0[i] == 0 {
            return None;
        }
        let mut prev = self.clone();
        prev.0[i] -= 1;
        Some(prev)
    }

    pub fn dot(&self, coeffs: &[i64]) -> i64 {
        self.0.iter().zip(coeffs).map(|(&x, &a)| x as i64 * a).sum()
    }
}

impl fmt::Display for LatticePoint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "(")?;
        for (i, c) in self.0.iter().enumerate() {
            if i > 0 {
                write!(f, ",")?;
            }
            write!(f, "{c}")?;
        }
        write!(f, ")")
    }
}

impl FromStr for LatticePoint {
    type Err = Error;

    /// Accepts `3,0,1` or `(3,0,1)`.
    fn from_str(s: &str) -> Result<Self> {
        let body = s.trim().trim_start_matches('(').trim_end_matches(')');
        body.split(',')
            .map(|c| {
                c.trim()
                    .parse::<u32>()
                    .map_err(|_| Error::Parse(format!("bad lattice point {s:?}")))
            })
            .collect::<Result<SmallVec<_>>>()
            .map(Self)
    }
}

impl From<Vec<u32>> for LatticePoint {
    fn from(v: Vec<u32>) -> Self {
        Self(v.into())
    }
}

impl<const N: usize> From<[u32; N]> for LatticePoint {
    fn from(v: [u32; N]) -> Self {
        Self::new(v)
    }
}

/// The `k` points `x + e_i`.
pub fn successors(x: &LatticePoint) -> Vec<LatticePoint> {
    (0..x.dim()).map(|i| x.step(i)).collect()
}

/// All points of the given order in `dim` dimensions, lexicographically.
pub fn simplex_points(dim: usize, order: usize) -> Vec<LatticePoint> {
    fn fill(prefix: &mut Vec<u32>, dim: usize, left: u32, out: &mut Vec<LatticePoint>) {
        if prefix.len() + 1 == dim {
            prefix.push(left);
            out.push(LatticePoint::new(prefix.iter().copied()));
            prefix.pop();
            return;
        }
        for c in 0..=left {
            prefix.push(c);
            fill(prefix, dim, left - c, out);
            prefix.pop();
        }
    }
    let mut out = Vec::new();
    if dim == 0 {
        return out;
    }
    fill(&mut Vec::with_capacity(dim), dim, order as u32, &mut out);
    out
}

/// Number of outcome categories and their probabilities.
#[derive(Clone, Debug, PartialEq)]
pub struct OutcomeModel<P> {
    p: Vec<P>,
    labels: Vec<String>,
}

impl<P: Probability> OutcomeModel<P> {
    /// Zero probabilities are accepted so that deterministic walks can be
    /// modelled; negative entries and sums away from one are not.
    pub fn new(p: Vec<P>, labels: Option<Vec<String>>) -> Result<Self> {
        if p.len() < 2 {
            return Err(Error::DegenerateCategoryCount(p.len()));
        }
        if p.iter().any(|pi| *pi < P::zero()) {
            return Err(Error::InvalidModel("negative probability".into()));
        }
        let total = p.iter().cloned().fold(P::zero(), |a, b| a + b);
        let off = (total - P::one()).to_f64().abs();
        let ok = if P::EXACT { off == 0.0 } else { off <= P::sum_tolerance() };
        if !ok {
            return Err(Error::InvalidModel(format!(
                "probabilities sum to {:.15}, not 1",
                1.0 + off
            )));
        }
        let labels = match labels {
            Some(l) if l.len() != p.len() => {
                return Err(Error::DimensionMismatch { expected: p.len(), found: l.len() })
            }
            Some(l) => l,
            None => (1..=p.len()).map(|i| format!("p{i}")).collect(),
        };
        Ok(Self { p, labels })
    }

    pub fn k(&self) -> usize {
        self.p.len()
    }

    pub fn p(&self) -> &[P] {
        &self.p
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn to_float(&self) -> OutcomeModel<f64> {
        OutcomeModel {
            p: self.p.iter().map(|x| x.to_f64()).collect(),
            labels: self.labels.clone(),
        }
    }

    pub(crate) fn check_dim(&self, dim: usize) -> Result<()> {
        if self.k() != dim {
            return Err(Error::DimensionMismatch { expected: dim, found: self.k() });
        }
        Ok(())
    }
}

/// Membership rule of a region before reachability pruning.
#[derive(Clone, Debug)]
pub enum RegionRule {
    Explicit(BTreeSet<LatticePoint>),
    /// Accessible iff `coeffs · x < target`.
    Linear { coeffs: Vec<i64>, target: i64 },
    Trial(Arc<TrialLayout>),
}

#[derive(Clone, Debug)]
pub struct Region {
    rule: RegionRule,
    dim: usize,
    horizon: usize,
}

impl Region {
    /// Explicit finite region; the horizon is one past the largest order.
    pub fn explicit(points: impl IntoIterator<Item = LatticePoint>) -> Result<Self> {
        let points: BTreeSet<_> = points.into_iter().collect();
        let dim = points.iter().next().map_or(0, |p| p.dim());
        if points.iter().any(|p| p.dim() != dim) {
            return Err(Error::InvalidRegion("points of differing dimension".into()));
        }
        let horizon = points.iter().map(|p| p.order()).max().map_or(0, |m| m + 1);
        Ok(Self { rule: RegionRule::Explicit(points), dim, horizon })
    }

    pub fn linear(coeffs: Vec<i64>, target: i64, horizon: usize) -> Result<Self> {
        let dim = coeffs.len();
        Ok(Self { rule: RegionRule::Linear { coeffs, target }, dim, horizon })
    }

    pub(crate) fn from_trial(layout: Arc<TrialLayout>) -> Self {
        let horizon = layout.max_patients() as usize;
        Self { rule: RegionRule::Trial(layout), dim: 3, horizon }
    }

    /// Same rule, different enumeration horizon.
    pub fn with_horizon(mut self, horizon: usize) -> Self {
        self.horizon = horizon;
        self
    }

    pub fn rule(&self) -> &RegionRule {
        &self.rule
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    /// Whether the rule declares `x` accessible (ignores reachability).
    pub fn declares(&self, x: &LatticePoint) -> bool {
        match &self.rule {
            RegionRule::Explicit(set) => set.contains(x),
            RegionRule::Linear { coeffs, target } => x.dot(coeffs) < *target,
            RegionRule::Trial(layout) => layout.admits(x),
        }
    }

    pub(crate) fn check_horizon(&self, n: usize) -> Result<()> {
        if n > self.horizon {
            return Err(Error::HorizonExceeded { requested: n, horizon: self.horizon });
        }
        Ok(())
    }

    /// Order-by-order walk over `(R_n, B_n)`.
    pub fn frontier(&self) -> Frontier<'_> {
        Frontier { region: self, order: 0, accessible: None }
    }
}

/// Iterator over `(n, R_n, B_n)` for n = 0, 1, 2, ... (unbounded; callers
/// truncate). Both lists are sorted lexicographically.
pub struct Frontier<'a> {
    region: &'a Region,
    order: usize,
    accessible: Option<Vec<LatticePoint>>,
}

pub struct Layer {
    pub order: usize,
    pub accessible: Vec<LatticePoint>,
    pub boundary: Vec<LatticePoint>,
}

impl Iterator for Frontier<'_> {
    type Item = Layer;

    fn next(&mut self) -> Option<Layer> {
        let layer = match self.accessible.take() {
            None => {
                let origin = LatticePoint::origin(self.region.dim);
                let accessible = if self.region.dim > 0 && self.region.declares(&origin) {
                    vec![origin]
                } else {
                    Vec::new()
                };
                Layer { order: 0, accessible, boundary: Vec::new() }
            }
            Some(prev) => {
                let candidates: BTreeSet<LatticePoint> =
                    prev.iter().flat_map(successors).collect();
                let (accessible, boundary) =
                    candidates.into_iter().partition(|y| self.region.declares(y));
                Layer { order: self.order, accessible, boundary }
            }
        };
        self.order += 1;
        self.accessible = Some(layer.accessible.clone());
        Some(layer)
    }
}

/// Accessible, boundary and inaccessible points of one order.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RegionSlice {
    pub order: usize,
    pub accessible: Vec<LatticePoint>,
    pub boundary: Vec<LatticePoint>,
    pub inaccessible: Vec<LatticePoint>,
}

pub fn enumerate_slice(region: &Region, n: usize) -> Result<RegionSlice> {
    region.check_horizon(n)?;
    let layer = region.frontier().nth(n).expect("frontier is unbounded");
    Ok(complete_slice(region.dim, layer))
}

pub(crate) fn complete_slice(dim: usize, layer: Layer) -> RegionSlice {
    let accessible: BTreeSet<&LatticePoint> = layer.accessible.iter().collect();
    let inaccessible = simplex_points(dim, layer.order)
        .into_iter()
        .filter(|x| !accessible.contains(x))
        .collect();
    RegionSlice {
        order: layer.order,
        accessible: layer.accessible,
        boundary: layer.boundary,
        inaccessible,
    }
}

/// Union of `B_n` for `n <= horizon`, ordered by order then lexicographically.
pub fn boundary_points(region: &Region, horizon: usize) -> Result<Vec<LatticePoint>> {
    region.check_horizon(horizon)?;
    Ok(region
        .frontier()
        .take(horizon + 1)
        .flat_map(|layer| layer.boundary)
        .collect())
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ValidationReport {
    pub dim: usize,
    pub horizon: usize,
    /// Declared points that cannot be reached from the origin through
    /// accessible points, up to `pruned_checked_to`.
    pub pruned: usize,
    pub pruned_examples: Vec<LatticePoint>,
    pub pruned_checked_to: usize,
    pub accessible_points: usize,
    pub boundary_points: usize,
    pub warnings: Vec<String>,
}

/// Upper bound on simplex points scanned when counting pruned points of a
/// rule-based region.
const PRUNE_SCAN_LIMIT: usize = 2_000_000;

pub fn validate_region(region: &Region) -> Result<ValidationReport> {
    if let RegionRule::Explicit(set) = &region.rule {
        if set.is_empty() {
            return Err(Error::EmptyRegion);
        }
    }
    if region.dim < 2 {
        return Err(Error::DegenerateCategoryCount(region.dim));
    }
    if !region.declares(&LatticePoint::origin(region.dim)) {
        return Err(Error::OriginNotAccessible);
    }
    let mut warnings = Vec::new();
    if region.horizon == 0 {
        warnings.push("horizon 0 enumerates only the origin".to_string());
    }
    if let RegionRule::Linear { coeffs, .. } = &region.rule {
        if coeffs.iter().any(|a| a.abs() >= 2) {
            warnings.push(
                "linear rule has a coefficient of magnitude >= 2: boundary points may overshoot the target"
                    .to_string(),
            );
        }
        if coeffs.iter().all(|&a| a <= 0) {
            warnings.push("linear rule has no positive coefficient: the walk never stops".to_string());
        }
    }

    let mut reachable: HashMap<usize, BTreeSet<LatticePoint>> = HashMap::new();
    let mut accessible_points = 0;
    let mut boundary_count = 0;
    for layer in region.frontier().take(region.horizon + 1) {
        accessible_points += layer.accessible.len();
        boundary_count += layer.boundary.len();
        reachable.insert(layer.order, layer.accessible.into_iter().collect());
    }

    let mut pruned = Vec::new();
    let mut checked_to = region.horizon;
    match &region.rule {
        RegionRule::Explicit(set) => {
            for x in set {
                let hit = reachable.get(&x.order()).is_some_and(|r| r.contains(x));
                if !hit {
                    pruned.push(x.clone());
                }
            }
        }
        _ => {
            let mut scanned = 0usize;
            for n in 0..=region.horizon {
                let slice = simplex_points(region.dim, n);
                scanned += slice.len();
                if scanned > PRUNE_SCAN_LIMIT {
                    checked_to = n.saturating_sub(1);
                    warnings.push(format!("pruning scan truncated at order {checked_to}"));
                    break;
                }
                let r = reachable.get(&n);
                pruned.extend(
                    slice
                        .into_iter()
                        .filter(|x| region.declares(x) && !r.is_some_and(|r| r.contains(x))),
                );
            }
        }
    }
    Ok(ValidationReport {
        dim: region.dim,
        horizon: region.horizon,
        pruned: pruned.len(),
        pruned_examples: pruned.into_iter().take(10).collect(),
        pruned_checked_to: checked_to,
        accessible_points,
        boundary_points: boundary_count,
        warnings,
    })
}
