//! Closedness and simplicity checks for stopping regions.
//!
//! Both are horizon-limited for infinite regions: reports always carry the
//! horizon they were computed to.

use std::collections::BTreeMap;

use rayon::prelude::*;

use crate::error::Result;
use crate::hull::{hull_contains, HullMembership, SeparationCertificate};
use crate::lattice::{complete_slice, LatticePoint, OutcomeModel, Region, RegionRule};
use crate::scalar::{Probability, Rational};

/// An inaccessible point lying inside the hull of the accessible slice.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SimplicityViolation {
    pub order: usize,
    pub point: LatticePoint,
    /// Convex weights over `R_n`, as `(accessible point, weight)`.
    pub witness: Vec<(LatticePoint, Rational)>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Separation {
    pub order: usize,
    pub point: LatticePoint,
    pub certificate: SeparationCertificate,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SimplicityReport {
    pub horizon: usize,
    /// True when the region is infinite and the verdict only covers orders
    /// up to `horizon`.
    pub horizon_limited: bool,
    pub orders_checked: usize,
    pub violations: Vec<SimplicityViolation>,
    pub separations: Vec<Separation>,
}

impl SimplicityReport {
    pub fn passed(&self) -> bool {
        self.violations.is_empty()
    }

    pub fn certificates_verified(&self, region: &Region) -> bool {
        let mut by_order: BTreeMap<usize, Vec<LatticePoint>> = BTreeMap::new();
        for layer in region.frontier().take(self.horizon + 1) {
            by_order.insert(layer.order, layer.accessible);
        }
        self.separations.iter().all(|s| {
            by_order
                .get(&s.order)
                .is_some_and(|gens| s.certificate.verify(gens, &s.point))
        })
    }
}

pub fn is_simple(region: &Region, horizon: usize) -> Result<SimplicityReport> {
    region.check_horizon(horizon)?;
    let mut violations = Vec::new();
    let mut separations = Vec::new();
    let mut orders_checked = 0;
    for layer in region.frontier().take(horizon + 1) {
        if layer.accessible.is_empty() {
            continue;
        }
        orders_checked += 1;
        let slice = complete_slice(region.dim(), layer);
        let gens = &slice.accessible;
        let verdicts: Vec<HullMembership> = slice
            .inaccessible
            .par_iter()
            .map(|q| hull_contains(gens, q))
            .collect::<Result<_>>()?;
        for (q, verdict) in slice.inaccessible.iter().zip(verdicts) {
            match verdict {
                HullMembership::Contained { weights } => violations.push(SimplicityViolation {
                    order: slice.order,
                    point: q.clone(),
                    witness: weights
                        .into_iter()
                        .map(|(j, w)| (gens[j].clone(), w))
                        .collect(),
                }),
                HullMembership::Separated(certificate) => separations.push(Separation {
                    order: slice.order,
                    point: q.clone(),
                    certificate,
                }),
            }
        }
    }
    // Finite regions have no accessible points at order >= their horizon.
    let horizon_limited = match region.rule() {
        RegionRule::Linear { .. } => true,
        _ => horizon + 1 < region.horizon(),
    };
    Ok(SimplicityReport { horizon, horizon_limited, orders_checked, violations, separations })
}

#[derive(Clone, Debug, PartialEq)]
pub enum ClosureVerdict {
    /// No probability mass remains inside the region.
    ClosedExact,
    ClosedNumerically { threshold: f64 },
    Inconclusive { threshold: f64 },
}

#[derive(Clone, Debug, PartialEq)]
pub struct ClosednessReport<P> {
    pub horizon: usize,
    pub absorbed_mass: P,
    pub residual_mass: P,
    /// Absorbed mass per order `0..=horizon`.
    pub absorbed_by_order: Vec<P>,
    pub verdict: ClosureVerdict,
}

pub const DEFAULT_CLOSURE_THRESHOLD: f64 = 0.05;

/// Pushes mass one step per order; returns absorbed mass per order and the
/// mass still inside after `horizon` steps.
fn propagate<P, K, F>(start: Option<K>, p: &[P], horizon: usize, step: F) -> (Vec<P>, P)
where
    P: Probability,
    K: Ord + Clone,
    F: Fn(&K, usize) -> (K, bool),
{
    let mut frontier: BTreeMap<K, P> = start.into_iter().map(|k| (k, P::one())).collect();
    let mut absorbed_by_order = vec![P::zero()];
    for _ in 0..horizon {
        let mut next: BTreeMap<K, P> = BTreeMap::new();
        let mut absorbed = P::zero();
        for (x, mass) in &frontier {
            for (i, pi) in p.iter().enumerate() {
                if pi.is_zero() {
                    continue;
                }
                let (y, inside) = step(x, i);
                let share = mass.clone() * pi.clone();
                if inside {
                    let slot = next.entry(y).or_insert_with(P::zero);
                    *slot = slot.clone() + share;
                } else {
                    absorbed = absorbed + share;
                }
            }
        }
        absorbed_by_order.push(absorbed);
        frontier = next;
    }
    let residual = frontier.into_values().fold(P::zero(), |a, b| a + b);
    (absorbed_by_order, residual)
}

/// Forward propagation of probability mass through the region.
pub fn is_closed<P: Probability>(
    region: &Region,
    model: &OutcomeModel<P>,
    horizon: usize,
    threshold: f64,
) -> Result<ClosednessReport<P>> {
    model.check_dim(region.dim())?;
    region.check_horizon(horizon)?;
    let origin = LatticePoint::origin(region.dim());
    let start = region.declares(&origin);
    let p = model.p();
    // A linear rule only sees the level a.x, so mass is pooled per level.
    let (absorbed_by_order, residual_mass) = match region.rule() {
        RegionRule::Linear { coeffs, target } => propagate(start.then_some(0i64), p, horizon, |level, i| {
            let next = level + coeffs[i];
            (next, next < *target)
        }),
        _ => propagate(start.then_some(origin), p, horizon, |x, i| {
            let y = x.step(i);
            let inside = region.declares(&y);
            (y, inside)
        }),
    };
    let absorbed_mass = absorbed_by_order.iter().cloned().fold(P::zero(), |a, b| a + b);
    let verdict = if residual_mass.is_zero() {
        ClosureVerdict::ClosedExact
    } else if residual_mass.to_f64() < threshold {
        ClosureVerdict::ClosedNumerically { threshold }
    } else {
        ClosureVerdict::Inconclusive { threshold }
    };
    Ok(ClosednessReport { horizon, absorbed_mass, residual_mass, absorbed_by_order, verdict })
}
