//! Multistage phase II trials with three patient outcomes.
//!
//! Patients are responders (`r`), non-responders, or early progressions
//! (`e`). After each stage the cumulative counts are compared against the
//! stage thresholds: the trial stops as promising, stops as ineffective, or
//! enrols the next stage. As a lattice process the state is
//! `(r, j - r - e, e)` after `j` patients.

use std::collections::{BTreeMap, BTreeSet};
use std::sync::Arc;

use num_bigint::BigUint;
use num_traits::{One, Zero};

use crate::error::{Error, Result};
use crate::lattice::{LatticePoint, Region};
use crate::paths::multinomial;
use crate::scalar::{ratio, Probability, Rational};

/// Stop as promising when `r >= r_min` and `e <= e_max`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct PromisingRule {
    pub r_min: i64,
    pub e_max: i64,
}

/// Stop as ineffective when `r <= r_max` and `e >= e_min`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct IneffectiveRule {
    pub r_max: i64,
    pub e_min: i64,
}

impl PromisingRule {
    fn holds(&self, r: u32, e: u32) -> bool {
        r as i64 >= self.r_min && e as i64 <= self.e_max
    }
}

impl IneffectiveRule {
    fn holds(&self, r: u32, e: u32) -> bool {
        r as i64 <= self.r_max && e as i64 >= self.e_min
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum StageRule {
    Interim { promising: PromisingRule, ineffective: IneffectiveRule },
    /// Last stage. Without an ineffective rule, everything not promising is
    /// ineffective.
    Final { promising: PromisingRule, ineffective: Option<IneffectiveRule> },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Stage {
    pub n: u32,
    pub rule: StageRule,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Decision {
    Promising,
    Ineffective,
    Continue,
}

/// Counts after `j` patients.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct TrialState {
    pub j: u32,
    pub r: u32,
    pub e: u32,
}

impl TrialState {
    pub fn new(j: u32, r: u32, e: u32) -> Result<Self> {
        if r as u64 + e as u64 > j as u64 {
            return Err(Error::InvalidArgument(format!("r + e = {} exceeds j = {j}", r + e)));
        }
        Ok(Self { j, r, e })
    }

    pub fn point(&self) -> LatticePoint {
        LatticePoint::new([self.r, self.j - self.r - self.e, self.e])
    }
}

type StateSet = BTreeSet<(u32, u32)>;

#[derive(Clone, Debug, PartialEq)]
pub struct TrialDesign {
    stages: Vec<Stage>,
    cumulative: Vec<u32>,
    /// Reachable `(r, e)` at each decision point.
    reachable: Vec<StateSet>,
    /// Reachable states classified Continue; empty at the last stage.
    continuation: Vec<StateSet>,
}

impl TrialDesign {
    pub fn new(stages: Vec<Stage>) -> Result<Self> {
        let k = stages.len();
        if k == 0 {
            return Err(Error::InvalidDesign("a design needs at least one stage".into()));
        }
        let mut cumulative = Vec::with_capacity(k);
        let mut total = 0u32;
        for (s, stage) in stages.iter().enumerate() {
            if stage.n == 0 {
                return Err(Error::InvalidDesign(format!("stage {} enrols no patients", s + 1)));
            }
            match (stage.rule, s + 1 == k) {
                (StageRule::Interim { promising, ineffective }, false) => {
                    if ineffective.r_max >= promising.r_min || promising.e_max >= ineffective.e_min {
                        return Err(Error::InvalidDesign(format!(
                            "stage {}: thresholds must satisfy r_max < r_min and e_max < e_min",
                            s + 1
                        )));
                    }
                }
                (StageRule::Final { .. }, true) => {}
                (_, true) => {
                    return Err(Error::InvalidDesign("the last stage needs a final rule".into()))
                }
                (_, false) => {
                    return Err(Error::InvalidDesign(format!(
                        "stage {} is not last but has a final rule",
                        s + 1
                    )))
                }
            }
            total = total
                .checked_add(stage.n)
                .ok_or_else(|| Error::InvalidDesign("too many patients".into()))?;
            cumulative.push(total);
        }

        let mut reachable = Vec::with_capacity(k);
        let mut continuation = Vec::with_capacity(k);
        let mut carried: StateSet = [(0, 0)].into_iter().collect();
        for (s, stage) in stages.iter().enumerate() {
            let mut here = StateSet::new();
            for &(r0, e0) in &carried {
                for a in 0..=stage.n {
                    for c in 0..=stage.n - a {
                        here.insert((r0 + a, e0 + c));
                    }
                }
            }
            let mut cont = StateSet::new();
            for &(r, e) in &here {
                match classify(&stage.rule, r, e) {
                    Ok(Decision::Continue) => {
                        cont.insert((r, e));
                    }
                    Ok(_) => {}
                    Err(why) => {
                        return Err(Error::InvalidDesign(format!(
                            "stage {} state (r={r}, e={e}): {why}",
                            s + 1
                        )))
                    }
                }
            }
            reachable.push(here);
            carried = cont.clone();
            continuation.push(cont);
        }
        Ok(Self { stages, cumulative, reachable, continuation })
    }

    pub fn stages(&self) -> &[Stage] {
        &self.stages
    }

    /// Number of stages `K`.
    pub fn max_stages(&self) -> usize {
        self.stages.len()
    }

    /// Patients enrolled after each stage, `N_1 < N_2 < ... < N_K`.
    pub fn cumulative(&self) -> &[u32] {
        &self.cumulative
    }

    pub fn reachable_states(&self, stage: usize) -> &StateSet {
        &self.reachable[stage - 1]
    }

    /// Stages (1-based) that no patient sequence can reach.
    pub fn unreachable_stages(&self) -> Vec<usize> {
        let k = self.stages.len();
        match (1..k).find(|&s| self.continuation[s - 1].is_empty()) {
            Some(dead) => (dead + 1..=k).collect(),
            None => Vec::new(),
        }
    }

    fn stage_at(&self, j: u32) -> Option<usize> {
        self.cumulative.iter().position(|&n| n == j).map(|s| s + 1)
    }
}

fn classify(rule: &StageRule, r: u32, e: u32) -> std::result::Result<Decision, &'static str> {
    match rule {
        StageRule::Interim { promising, ineffective } => {
            match (promising.holds(r, e), ineffective.holds(r, e)) {
                (true, true) => Err("both promising and ineffective"),
                (true, false) => Ok(Decision::Promising),
                (false, true) => Ok(Decision::Ineffective),
                (false, false) => Ok(Decision::Continue),
            }
        }
        StageRule::Final { promising, ineffective } => {
            let p = promising.holds(r, e);
            match ineffective {
                None => Ok(if p { Decision::Promising } else { Decision::Ineffective }),
                Some(rule) => match (p, rule.holds(r, e)) {
                    (true, true) => Err("both promising and ineffective"),
                    (true, false) => Ok(Decision::Promising),
                    (false, true) => Ok(Decision::Ineffective),
                    (false, false) => Err("final stage leaves the state unclassified"),
                },
            }
        }
    }
}

/// Decision at a stage boundary; other patient counts always continue.
pub fn trial_decision(design: &TrialDesign, state: TrialState) -> Result<Decision> {
    let s = design.stage_at(state.j).ok_or(Error::NotDecisionStage(state.j))?;
    let rule = &design.stages[s - 1].rule;
    classify(rule, state.r, state.e).map_err(|why| Error::InvalidDesign(why.into()))
}

/// Continuation sets `R_{N_s}` for `s = 1..K`; the last is always empty.
pub fn continuation_regions(design: &TrialDesign) -> &[StateSet] {
    &design.continuation
}

/// Accessibility rule of the trial as a lattice region.
#[derive(Clone, Debug, PartialEq)]
pub struct TrialLayout {
    cumulative: Vec<u32>,
    continuation: Vec<StateSet>,
}

impl TrialLayout {
    pub(crate) fn admits(&self, x: &LatticePoint) -> bool {
        let c = x.coords();
        if c.len() != 3 {
            return false;
        }
        let j = c[0] + c[1] + c[2];
        if j >= self.max_patients() {
            return false;
        }
        match self.cumulative.iter().position(|&n| n == j) {
            Some(s) => self.continuation[s].contains(&(c[0], c[2])),
            None => true,
        }
    }

    pub(crate) fn max_patients(&self) -> u32 {
        *self.cumulative.last().expect("designs have at least one stage")
    }
}

pub fn trial_region(design: &TrialDesign) -> Region {
    Region::from_trial(Arc::new(TrialLayout {
        cumulative: design.cumulative.clone(),
        continuation: design.continuation.clone(),
    }))
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct StopState {
    pub stage: usize,
    pub state: TrialState,
    pub decision: Decision,
}

/// Every reachable terminal state, by stage then `(r, e)`.
pub fn stop_states(design: &TrialDesign) -> Vec<StopState> {
    let mut out = Vec::new();
    for (s, states) in design.reachable.iter().enumerate() {
        let j = design.cumulative[s];
        for &(r, e) in states {
            if design.continuation[s].contains(&(r, e)) {
                continue;
            }
            let decision = classify(&design.stages[s].rule, r, e).expect("validated design");
            out.push(StopState { stage: s + 1, state: TrialState { j, r, e }, decision });
        }
    }
    out
}

/// Sums of products of per-stage multinomial coefficients over all
/// continuation histories: the plain count, and the counts whose first
/// patient was a responder or an early progression.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
struct HistoryCounts {
    all: BigUint,
    first_responder: BigUint,
    first_progression: BigUint,
}

impl HistoryCounts {
    fn first_stage(n: u32, r: u32, e: u32) -> Self {
        let y = n - r - e;
        Self {
            all: multinomial(&[r, y, e]),
            first_responder: if r > 0 { multinomial(&[r - 1, y, e]) } else { BigUint::zero() },
            first_progression: if e > 0 { multinomial(&[r, y, e - 1]) } else { BigUint::zero() },
        }
    }

    fn add_scaled(&mut self, other: &Self, factor: &BigUint) {
        self.all += &other.all * factor;
        self.first_responder += &other.first_responder * factor;
        self.first_progression += &other.first_progression * factor;
    }
}

/// Stage-wise forward accumulation, equal to the nested sums over
/// continuation regions but polynomial in the stage sizes.
fn history_counts(design: &TrialDesign, stage: usize, r: u32, e: u32) -> HistoryCounts {
    let n1 = design.stages[0].n;
    if stage == 1 {
        return if r + e <= n1 { HistoryCounts::first_stage(n1, r, e) } else { HistoryCounts::default() };
    }
    let mut layer: BTreeMap<(u32, u32), HistoryCounts> = design.continuation[0]
        .iter()
        .map(|&(r, e)| ((r, e), HistoryCounts::first_stage(n1, r, e)))
        .collect();
    for s in 1..stage - 1 {
        let n = design.stages[s].n;
        let mut next: BTreeMap<(u32, u32), HistoryCounts> = BTreeMap::new();
        for (&(r0, e0), counts) in &layer {
            for a in 0..=n {
                for c in 0..=n - a {
                    let key = (r0 + a, e0 + c);
                    if design.continuation[s].contains(&key) {
                        let factor = multinomial(&[a, n - a - c, c]);
                        next.entry(key).or_default().add_scaled(counts, &factor);
                    }
                }
            }
        }
        layer = next;
    }
    let n = design.stages[stage - 1].n;
    let mut out = HistoryCounts::default();
    for (&(r0, e0), counts) in &layer {
        if r0 > r || e0 > e {
            continue;
        }
        let (a, c) = (r - r0, e - e0);
        if a + c <= n {
            out.add_scaled(counts, &multinomial(&[a, n - a - c, c]));
        }
    }
    out
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TrialEstimate {
    pub stage: usize,
    pub terminal: TrialState,
    pub decision: Decision,
    /// Number of patient sequences ending in this stop state.
    pub sequences: BigUint,
    pub response: Rational,
    pub non_response: Rational,
    pub progression: Rational,
}

impl TrialEstimate {
    pub fn as_vec(&self) -> Vec<Rational> {
        vec![self.response.clone(), self.non_response.clone(), self.progression.clone()]
    }
}

pub fn trial_unbiased_estimate(
    design: &TrialDesign,
    r: u32,
    e: u32,
    stage: usize,
) -> Result<TrialEstimate> {
    if stage == 0 || stage > design.max_stages() {
        return Err(Error::NotStopState(format!("stage {stage} outside 1..={}", design.max_stages())));
    }
    let j = design.cumulative[stage - 1];
    let terminal = TrialState::new(j, r, e).map_err(|_| {
        Error::NotStopState(format!("r={r}, e={e} impossible after {j} patients"))
    })?;
    if !design.reachable[stage - 1].contains(&(r, e)) {
        return Err(Error::NotStopState(format!("r={r}, e={e} unreachable at stage {stage}")));
    }
    let decision = classify(&design.stages[stage - 1].rule, r, e).expect("validated design");
    if decision == Decision::Continue {
        return Err(Error::NotStopState(format!("r={r}, e={e} continues at stage {stage}")));
    }
    let counts = history_counts(design, stage, r, e);
    if counts.all.is_zero() {
        return Err(Error::NotStopState(format!("r={r}, e={e} unreachable at stage {stage}")));
    }
    let response = ratio(&counts.first_responder, &counts.all);
    let progression = ratio(&counts.first_progression, &counts.all);
    let non_response = Rational::one() - &response - &progression;
    Ok(TrialEstimate {
        stage,
        terminal,
        decision,
        sequences: counts.all,
        response,
        non_response,
        progression,
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrialVerification<P> {
    pub p: [P; 3],
    /// Total stopping probability; one for every valid design.
    pub mass: P,
    /// Expected estimate per category.
    pub expectation: [P; 3],
    pub stop_states: usize,
}

impl<P: Probability> TrialVerification<P> {
    pub fn holds(&self) -> bool {
        self.mass == P::one() && self.expectation == self.p
    }
}

/// Expected value of the estimator over all stop states at `p`.
pub fn trial_verify<P: Probability>(design: &TrialDesign, p: [P; 3]) -> Result<TrialVerification<P>> {
    let mut mass = P::zero();
    let mut expectation = [P::zero(), P::zero(), P::zero()];
    let stops = stop_states(design);
    for stop in &stops {
        let est = trial_unbiased_estimate(design, stop.state.r, stop.state.e, stop.stage)?;
        let y = stop.state.point();
        let prob = P::path_weight(&est.sequences, &p, y.coords());
        for (slot, value) in expectation.iter_mut().zip(est.as_vec()) {
            *slot = slot.clone() + P::from_rational(&value) * prob.clone();
        }
        mass = mass + prob;
    }
    Ok(TrialVerification { p, mass, expectation, stop_states: stops.len() })
}
