//! Exact path counts through a region.
//!
//! `k(x)` counts unit-step paths from the origin to `x` whose every point
//! before `x` is accessible; `k*_i(x)` counts those whose first step was
//! outcome `i`. By convention `k*_i(e_i) = 1` even when `e_i` is itself a
//! boundary point, so `k(x) = sum_i k*_i(x)` holds for every `x` except the
//! origin.

use std::collections::BTreeMap;

use num_bigint::BigUint;
use num_integer::Integer;
use num_traits::{One, Zero};

use crate::error::{Error, Result};
use crate::lattice::{LatticePoint, OutcomeModel, Region};
use crate::scalar::Probability;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PointKind {
    Accessible,
    Boundary,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PathCounts {
    pub kind: PointKind,
    pub total: BigUint,
    pub from_unit: Vec<BigUint>,
}

/// Which points of the DP to keep in the finished table.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum Retention {
    #[default]
    All,
    /// Boundary points plus the accessible points of the final order.
    BoundaryAndFrontier,
}

#[derive(Clone, Debug)]
pub struct PathCountTable {
    dim: usize,
    horizon: usize,
    entries: BTreeMap<LatticePoint, PathCounts>,
}

impl PathCountTable {
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    pub fn get(&self, x: &LatticePoint) -> Option<&PathCounts> {
        self.entries.get(x)
    }

    pub fn total(&self, x: &LatticePoint) -> BigUint {
        self.entries.get(x).map_or_else(BigUint::zero, |c| c.total.clone())
    }

    pub fn iter(&self) -> impl Iterator<Item = (&LatticePoint, &PathCounts)> {
        self.entries.iter()
    }

    pub fn boundary(&self) -> impl Iterator<Item = (&LatticePoint, &PathCounts)> {
        self.entries.iter().filter(|(_, c)| c.kind == PointKind::Boundary)
    }

    /// Accessible points of the final order `horizon`.
    pub fn frontier(&self) -> impl Iterator<Item = (&LatticePoint, &PathCounts)> {
        let h = self.horizon;
        self.entries
            .iter()
            .filter(move |(x, c)| c.kind == PointKind::Accessible && x.order() == h)
    }

    /// Rebuilds a table from stored entries, checking the first-step identity.
    pub fn from_entries(
        dim: usize,
        horizon: usize,
        entries: impl IntoIterator<Item = (LatticePoint, PathCounts)>,
    ) -> Result<Self> {
        let entries: BTreeMap<_, _> = entries.into_iter().collect();
        for (x, c) in &entries {
            if x.dim() != dim || c.from_unit.len() != dim {
                return Err(Error::DimensionMismatch { expected: dim, found: x.dim() });
            }
            if x.order() > horizon {
                return Err(Error::HorizonExceeded { requested: x.order(), horizon });
            }
            if !x.is_origin() && c.from_unit.iter().sum::<BigUint>() != c.total {
                return Err(Error::Parse(format!("counts at {x} violate k = sum k*")));
            }
        }
        Ok(Self { dim, horizon, entries })
    }
}

pub fn count_paths(region: &Region, horizon: usize) -> Result<PathCountTable> {
    count_paths_with(region, horizon, Retention::All)
}

pub fn count_paths_with(
    region: &Region,
    horizon: usize,
    retention: Retention,
) -> Result<PathCountTable> {
    region.check_horizon(horizon)?;
    let dim = region.dim();
    let origin = LatticePoint::origin(dim);
    let mut entries = BTreeMap::new();
    if dim == 0 || !region.declares(&origin) {
        return Ok(PathCountTable { dim, horizon, entries });
    }
    let mut layer: BTreeMap<LatticePoint, PathCounts> = BTreeMap::new();
    layer.insert(
        origin,
        PathCounts {
            kind: PointKind::Accessible,
            total: BigUint::one(),
            from_unit: vec![BigUint::zero(); dim],
        },
    );
    for _ in 0..horizon {
        let mut next: BTreeMap<LatticePoint, PathCounts> = BTreeMap::new();
        for (x, counts) in &layer {
            if counts.kind != PointKind::Accessible {
                continue;
            }
            for i in 0..dim {
                let y = x.step(i);
                let slot = next.entry(y).or_insert_with_key(|y| PathCounts {
                    kind: if region.declares(y) { PointKind::Accessible } else { PointKind::Boundary },
                    total: BigUint::zero(),
                    from_unit: vec![BigUint::zero(); dim],
                });
                slot.total += &counts.total;
                if x.is_origin() {
                    slot.from_unit[i] += 1u32;
                } else {
                    for (acc, c) in slot.from_unit.iter_mut().zip(&counts.from_unit) {
                        *acc += c;
                    }
                }
            }
        }
        let keep_all = retention == Retention::All;
        for (x, c) in std::mem::replace(&mut layer, next) {
            if keep_all || c.kind == PointKind::Boundary {
                entries.insert(x, c);
            }
        }
    }
    entries.extend(layer);
    Ok(PathCountTable { dim, horizon, entries })
}

/// First-passage probabilities `P(y) = k(y) p^y` over the table's boundary.
pub fn first_passage_pmf<P: Probability>(
    table: &PathCountTable,
    model: &OutcomeModel<P>,
) -> Result<BTreeMap<LatticePoint, P>> {
    model.check_dim(table.dim)?;
    Ok(table
        .boundary()
        .map(|(y, c)| (y.clone(), P::path_weight(&c.total, model.p(), y.coords())))
        .collect())
}

/// Probability still inside the region after `horizon` steps.
pub fn frontier_mass<P: Probability>(table: &PathCountTable, model: &OutcomeModel<P>) -> Result<P> {
    model.check_dim(table.dim)?;
    Ok(table
        .frontier()
        .map(|(x, c)| P::path_weight(&c.total, model.p(), x.coords()))
        .fold(P::zero(), |a, b| a + b))
}

/// `N! / (y_1! ... y_k!)`.
pub fn multinomial(parts: &[u32]) -> BigUint {
    let mut remaining: u64 = parts.iter().map(|&c| c as u64).sum();
    let mut acc = BigUint::one();
    for &c in parts {
        acc *= num_integer::binomial(BigUint::from(remaining), BigUint::from(c));
        remaining -= c as u64;
    }
    acc
}

/// First-passage count to level `b` for a walk whose level moves +1 on
/// `up`, -1 on `down` and 0 on every other category: `(b/N) * N!/prod y_i!`.
pub fn cycle_count_first_passage(
    b: u32,
    y: &LatticePoint,
    up: usize,
    down: usize,
) -> Result<BigUint> {
    if b == 0 {
        return Err(Error::InvalidArgument("level must be positive".into()));
    }
    if up == down || up >= y.dim() || down >= y.dim() {
        return Err(Error::InvalidArgument(format!(
            "bad up/down categories {up}/{down} for dimension {}",
            y.dim()
        )));
    }
    let c = y.coords();
    if c[up] as i64 - c[down] as i64 != b as i64 {
        return Err(Error::NotOnBoundary(y.clone()));
    }
    let n = y.order();
    let (count, rem) = (multinomial(c) * BigUint::from(b)).div_rem(&BigUint::from(n));
    assert!(rem.is_zero(), "cycle lemma count must be integral");
    Ok(count)
}
