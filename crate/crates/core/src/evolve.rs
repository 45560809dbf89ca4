//! The conditional shift step and the multi-step driver.

use std::fmt;
use std::hash::BuildHasher;
use std::io;
use std::str::FromStr;

use rayon::prelude::*;
use rustc_hash::{FxBuildHasher, FxHashMap};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::coin::coin_times;
use crate::lattice::Lattice;
use crate::observables::{observe, ObservableSpec, TimeSeriesRecord};
use crate::state::{
    Amplitudes, Configuration, GmpState, StateError, Statistics, DEFAULT_PRUNE_EPS, ZERO,
};

/// When a fermion move into an occupied vertex is blocked.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FermionRule {
    /// Blocked iff the destination holds exactly as many fermions as the source.
    #[default]
    Equal,
    /// Blocked iff the destination holds at least as many fermions as the source.
    Geq,
}

impl fmt::Display for FermionRule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            FermionRule::Equal => "equal",
            FermionRule::Geq => "geq",
        })
    }
}

impl FromStr for FermionRule {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "equal" => Ok(FermionRule::Equal),
            "geq" => Ok(FermionRule::Geq),
            other => Err(format!(
                "unknown fermion rule `{other}` (expected equal or geq)"
            )),
        }
    }
}

/// Amplitude factor for moving one particle off a vertex holding `n_source`
/// onto one holding `n_dest`; `None` means the move is forbidden.
///
/// Panics if `n_source` is zero.
#[inline]
pub fn ladder_factor(
    statistics: Statistics,
    rule: FermionRule,
    n_source: usize,
    n_dest: usize,
) -> Option<f64> {
    assert!(n_source >= 1, "cannot move a particle off an empty vertex");
    match statistics {
        Statistics::Boson => Some((n_source as f64).sqrt() * ((n_dest + 1) as f64).sqrt()),
        Statistics::Fermion => {
            let blocked = match rule {
                FermionRule::Equal => n_dest == n_source,
                FermionRule::Geq => n_dest >= n_source,
            };
            (!blocked).then_some(1.0)
        }
    }
}

/// How contributions to the same successor configuration are summed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Reduction {
    /// Single pass in canonical input order; bit-reproducible.
    #[default]
    Canonical,
    /// Fixed-size input chunks expanded on the rayon pool, merged shard by
    /// shard in chunk order. Reproducible for a given chunk size, but the
    /// summation order differs from `Canonical` at the 1e-16 level.
    Sharded,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepOptions {
    pub prune_eps: f64,
    pub fermion_rule: FermionRule,
    pub reduction: Reduction,
}

impl Default for StepOptions {
    fn default() -> Self {
        StepOptions {
            prune_eps: DEFAULT_PRUNE_EPS,
            fermion_rule: FermionRule::Equal,
            reduction: Reduction::Canonical,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepReport {
    pub step: u64,
    /// Norm of the successor before renormalisation (`K_r`).
    pub pre_norm: f64,
    /// Non-zero amplitudes in the input state.
    pub entries_in: usize,
    /// Non-zero amplitudes in the successor.
    pub entries_out: usize,
    pub forbidden_moves: usize,
    pub pruned: usize,
}

#[derive(Debug, Error)]
pub enum EvolveError {
    #[error("cannot step an empty state")]
    EmptyState,
    #[error("state has {state} vertices but the lattice has {lattice}")]
    LatticeMismatch { state: usize, lattice: usize },
    #[error("step {step}: {source}")]
    State { step: u64, source: StateError },
}

type Successors = FxHashMap<Configuration, Amplitudes>;

const CHUNK: usize = 2048;
const SHARDS: usize = 64;

struct Expansion {
    forbidden: usize,
}

/// Adds every successor of `(config, amps)` into `sink`.
#[inline]
fn expand_into(
    config: &Configuration,
    amps: &Amplitudes,
    lattice: &Lattice,
    statistics: Statistics,
    rule: FermionRule,
    mut sink: impl FnMut(Configuration, &Amplitudes),
    stats: &mut Expansion,
) {
    let occ = config.occupations();
    // vertices ascending, then chirality ascending
    for (mu, &n_mu) in occ.iter().enumerate() {
        if n_mu == 0 {
            continue;
        }
        for (k, &amp) in amps.iter().enumerate() {
            if amp == ZERO {
                continue;
            }
            let Some(nu) = lattice.neighbor_index(mu, k) else {
                continue;
            };
            let Some(factor) = ladder_factor(statistics, rule, n_mu as usize, occ[nu] as usize)
            else {
                stats.forbidden += 1;
                continue;
            };
            let carried = amp * factor;
            let mut out = [ZERO; 4];
            for (j, slot) in out.iter_mut().enumerate() {
                *slot = coin_times(j + 1, k + 1, carried);
            }
            sink(config.with_move(mu, nu), &out);
        }
    }
}

#[inline]
fn accumulate(map: &mut Successors, key: Configuration, add: &Amplitudes) {
    let slot = map.entry(key).or_insert([ZERO; 4]);
    for j in 0..4 {
        slot[j] += add[j];
    }
}

fn expand_canonical(state: &GmpState, lattice: &Lattice, rule: FermionRule) -> (Successors, usize) {
    let mut map =
        Successors::with_capacity_and_hasher(state.entries().len() * 2, Default::default());
    let mut stats = Expansion { forbidden: 0 };
    for (config, amps) in state.entries() {
        expand_into(
            config,
            amps,
            lattice,
            state.statistics(),
            rule,
            |key, add| accumulate(&mut map, key, add),
            &mut stats,
        );
    }
    (map, stats.forbidden)
}

fn expand_sharded(
    state: &GmpState,
    lattice: &Lattice,
    rule: FermionRule,
) -> (Vec<Successors>, usize) {
    let hasher = FxBuildHasher;
    let partials: Vec<(Vec<Successors>, usize)> = state
        .entries()
        .par_chunks(CHUNK)
        .map(|chunk| {
            let mut shards: Vec<Successors> = (0..SHARDS).map(|_| Successors::default()).collect();
            let mut stats = Expansion { forbidden: 0 };
            for (config, amps) in chunk {
                expand_into(
                    config,
                    amps,
                    lattice,
                    state.statistics(),
                    rule,
                    |key, add| {
                        let shard = (hasher.hash_one(&key) as usize) % SHARDS;
                        accumulate(&mut shards[shard], key, add)
                    },
                    &mut stats,
                );
            }
            (shards, stats.forbidden)
        })
        .collect();
    let forbidden = partials.iter().map(|p| p.1).sum();
    let mut by_shard: Vec<Vec<Successors>> = (0..SHARDS)
        .map(|_| Vec::with_capacity(partials.len()))
        .collect();
    for (shards, _) in partials {
        for (s, map) in shards.into_iter().enumerate() {
            by_shard[s].push(map);
        }
    }
    let merged = by_shard
        .into_par_iter()
        .map(|maps| {
            let mut iter = maps.into_iter();
            let mut acc = iter.next().unwrap_or_default();
            for map in iter {
                for (key, add) in map {
                    accumulate(&mut acc, key, &add);
                }
            }
            acc
        })
        .collect();
    (merged, forbidden)
}

fn count_nonzero(entries: &[(Configuration, Amplitudes)]) -> usize {
    entries
        .iter()
        .map(|(_, a)| a.iter().filter(|z| **z != ZERO).count())
        .sum()
}

/// Applies one coin-and-shift step, prunes at `opts.prune_eps` and renormalises.
pub fn step(
    state: &GmpState,
    lattice: &Lattice,
    opts: &StepOptions,
) -> Result<(GmpState, StepReport), EvolveError> {
    if state.is_empty() {
        return Err(EvolveError::EmptyState);
    }
    if state.vertex_count() != lattice.vertex_count() {
        return Err(EvolveError::LatticeMismatch {
            state: state.vertex_count(),
            lattice: lattice.vertex_count(),
        });
    }
    let next_step = state.step() + 1;
    let (mut entries, forbidden): (Vec<_>, usize) = match opts.reduction {
        Reduction::Canonical => {
            let (map, forbidden) = expand_canonical(state, lattice, opts.fermion_rule);
            (map.into_iter().collect(), forbidden)
        }
        Reduction::Sharded => {
            let (shards, forbidden) = expand_sharded(state, lattice, opts.fermion_rule);
            (shards.into_iter().flatten().collect(), forbidden)
        }
    };
    entries.par_sort_unstable_by(|a, b| a.0.cmp(&b.0));
    let mut next = GmpState::from_sorted(state, next_step, entries);
    let pruned = next.prune(opts.prune_eps);
    let pre_norm = next.renormalize().map_err(|source| EvolveError::State {
        step: next_step,
        source,
    })?;
    let report = StepReport {
        step: next_step,
        pre_norm,
        entries_in: count_nonzero(state.entries()),
        entries_out: count_nonzero(next.entries()),
        forbidden_moves: forbidden,
        pruned,
    };
    Ok((next, report))
}

/// Receives observations from [`run`].
pub trait Sink {
    fn record(&mut self, record: &TimeSeriesRecord) -> io::Result<()>;

    /// Called after every step, once any record for that step has been emitted.
    fn after_step(&mut self, _state: &GmpState, _report: &StepReport) -> io::Result<()> {
        Ok(())
    }
}

impl Sink for Vec<TimeSeriesRecord> {
    fn record(&mut self, record: &TimeSeriesRecord) -> io::Result<()> {
        self.push(record.clone());
        Ok(())
    }
}

#[derive(Debug, Error)]
pub enum RunError {
    #[error("steps must be at least 1")]
    NoSteps,
    #[error("observe_every must be at least 1")]
    NoObservationInterval,
    #[error(transparent)]
    Evolve(#[from] EvolveError),
    /// The sink failed; `state` is the last state reached, suitable for a checkpoint.
    #[error("output failed at step {}: {source}", state.step())]
    Sink {
        state: Box<GmpState>,
        source: io::Error,
    },
}

#[derive(Debug, Clone)]
pub struct RunPlan<'a> {
    pub lattice: &'a Lattice,
    pub steps: u64,
    pub observe_every: u64,
    pub observables: &'a ObservableSpec,
    pub options: StepOptions,
}

/// Whether absolute step `t` is observed in a run ending at `last`.
pub fn is_observed(t: u64, observe_every: u64, last: u64) -> bool {
    t == 0 || t.is_multiple_of(observe_every) || t == last
}

/// Applies `plan.steps` steps to `state`, emitting a record at step 0, every
/// `observe_every` steps and at the final step (all counted in absolute steps,
/// so a resumed run emits the same rows as an uninterrupted one).
pub fn run(state: GmpState, plan: &RunPlan<'_>, sink: &mut dyn Sink) -> Result<GmpState, RunError> {
    if plan.steps == 0 {
        return Err(RunError::NoSteps);
    }
    if plan.observe_every == 0 {
        return Err(RunError::NoObservationInterval);
    }
    let last = state.step() + plan.steps;
    let mut current = state;
    if is_observed(current.step(), plan.observe_every, last) {
        let rec = observe(&current, plan.observables);
        if let Err(source) = sink.record(&rec) {
            return Err(RunError::Sink {
                state: Box::new(current),
                source,
            });
        }
    }
    while current.step() < last {
        let (next, report) = step(&current, plan.lattice, &plan.options)?;
        current = next;
        let mut result = Ok(());
        if is_observed(current.step(), plan.observe_every, last) {
            result = sink.record(&observe(&current, plan.observables));
        }
        let result = result.and_then(|_| sink.after_step(&current, &report));
        if let Err(source) = result {
            return Err(RunError::Sink {
                state: Box::new(current),
                source,
            });
        }
    }
    Ok(current)
}
