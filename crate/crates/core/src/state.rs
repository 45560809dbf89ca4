//! Occupation-number configurations and the sparse many-particle state.

use std::fmt;
use std::str::FromStr;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use smallvec::SmallVec;
use thiserror::Error;

use crate::lattice::Lattice;

/// Default threshold below which an amplitude counts as zero.
pub const DEFAULT_PRUNE_EPS: f64 = 1e-12;

pub type Amplitudes = [Complex64; 4];

pub(crate) const ZERO: Complex64 = Complex64::new(0.0, 0.0);

#[derive(Debug, Error, PartialEq)]
pub enum StateError {
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("numerical collapse: every amplitude vanished")]
    Collapse,
    #[error("configuration {config} holds {found} particles, expected {expected}")]
    ParticleCount {
        config: Configuration,
        found: usize,
        expected: usize,
    },
    #[error("configuration-space dimension D({particles}, {modes}) does not fit in 64 bits")]
    DimensionOverflow { particles: usize, modes: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Statistics {
    Boson,
    Fermion,
}

impl fmt::Display for Statistics {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Statistics::Boson => "boson",
            Statistics::Fermion => "fermion",
        })
    }
}

impl FromStr for Statistics {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "boson" | "bosons" => Ok(Statistics::Boson),
            "fermion" | "fermions" => Ok(Statistics::Fermion),
            other => Err(format!(
                "unknown statistics `{other}` (expected boson or fermion)"
            )),
        }
    }
}

/// Occupation numbers `n_α` for vertices `α = 1..=M²`, stored 0-based.
///
/// Ordering is lexicographic on the occupation vector; this is the canonical
/// order of the sparse state.
#[derive(Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Configuration(SmallVec<[u8; 32]>);

impl Configuration {
    pub fn new(occupations: &[u8]) -> Configuration {
        Configuration(SmallVec::from_slice(occupations))
    }

    /// All `particles` on one 1-based `vertex`.
    pub fn stacked(vertex_count: usize, vertex: usize, particles: usize) -> Configuration {
        let mut occ = SmallVec::from_elem(0u8, vertex_count);
        occ[vertex - 1] = u8::try_from(particles).expect("at most 255 particles");
        Configuration(occ)
    }

    pub fn occupations(&self) -> &[u8] {
        &self.0
    }

    pub fn vertex_count(&self) -> usize {
        self.0.len()
    }

    /// Occupation of the 1-based vertex `alpha`.
    pub fn occupation(&self, alpha: usize) -> usize {
        self.0[alpha - 1] as usize
    }

    pub fn total(&self) -> usize {
        self.0.iter().map(|&n| n as usize).sum()
    }

    /// Copy with one particle moved between 0-based vertices.
    #[inline]
    pub(crate) fn with_move(&self, from: usize, to: usize) -> Configuration {
        let mut occ = self.0.clone();
        occ[from] -= 1;
        occ[to] += 1;
        Configuration(occ)
    }

    /// Reflects occupations through `map`, a 1-based vertex permutation.
    pub fn relabeled(&self, map: impl Fn(usize) -> usize) -> Configuration {
        let mut occ = SmallVec::from_elem(0u8, self.0.len());
        for (i, &n) in self.0.iter().enumerate() {
            occ[map(i + 1) - 1] = n;
        }
        Configuration(occ)
    }
}

impl fmt::Debug for Configuration {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{self}")
    }
}

impl fmt::Display for Configuration {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("[")?;
        for (i, n) in self.0.iter().enumerate() {
            if i > 0 {
                f.write_str(",")?;
            }
            write!(f, "{n}")?;
        }
        f.write_str("]")
    }
}

/// Sparse superposition over (chirality, configuration) basis vectors.
///
/// Entries are kept sorted by configuration, each carrying the four chirality
/// amplitudes. A configuration whose four amplitudes are all zero is not stored.
#[derive(Debug, Clone)]
pub struct GmpState {
    vertex_count: usize,
    particles: usize,
    statistics: Statistics,
    step: u64,
    norm_constant: f64,
    entries: Vec<(Configuration, Amplitudes)>,
}

impl GmpState {
    /// Every particle on `vertex`, coin amplitudes normalised to unit norm.
    pub fn make_initial(
        lattice: &Lattice,
        particles: usize,
        statistics: Statistics,
        vertex: usize,
        coin_amps: Amplitudes,
    ) -> Result<GmpState, StateError> {
        if particles == 0 || particles > u8::MAX as usize {
            return Err(StateError::InvalidInput(format!(
                "particle count {particles} outside 1..=255"
            )));
        }
        if !(1..=lattice.vertex_count()).contains(&vertex) {
            return Err(StateError::InvalidInput(format!(
                "initial vertex {vertex} outside [1, {}]",
                lattice.vertex_count()
            )));
        }
        if coin_amps
            .iter()
            .any(|z| !z.re.is_finite() || !z.im.is_finite())
        {
            return Err(StateError::InvalidInput(
                "coin amplitudes must be finite".into(),
            ));
        }
        let config = Configuration::stacked(lattice.vertex_count(), vertex, particles);
        let mut state = GmpState {
            vertex_count: lattice.vertex_count(),
            particles,
            statistics,
            step: 0,
            norm_constant: 1.0,
            entries: vec![(config, coin_amps)],
        };
        state.prune(0.0);
        if state.entries.is_empty() {
            return Err(StateError::InvalidInput(
                "coin amplitudes are all zero".into(),
            ));
        }
        state.renormalize()?;
        Ok(state)
    }

    /// Assembles a state from loose `(chirality, configuration, amplitude)`
    /// entries, checking particle conservation. Duplicate keys are summed.
    pub fn from_entries<I>(
        vertex_count: usize,
        particles: usize,
        statistics: Statistics,
        step: u64,
        norm_constant: f64,
        entries: I,
    ) -> Result<GmpState, StateError>
    where
        I: IntoIterator<Item = (usize, Configuration, Complex64)>,
    {
        let mut loose: Vec<(Configuration, usize, Complex64)> = Vec::new();
        for (k, config, amp) in entries {
            if !(1..=4).contains(&k) {
                return Err(StateError::InvalidInput(format!(
                    "chirality {k} outside 1..=4"
                )));
            }
            if config.vertex_count() != vertex_count {
                return Err(StateError::InvalidInput(format!(
                    "configuration {config} has {} vertices, expected {vertex_count}",
                    config.vertex_count()
                )));
            }
            let found = config.total();
            if found != particles {
                return Err(StateError::ParticleCount {
                    config,
                    found,
                    expected: particles,
                });
            }
            loose.push((config, k, amp));
        }
        loose.sort_by(|a, b| a.0.cmp(&b.0));
        let mut grouped: Vec<(Configuration, Amplitudes)> = Vec::new();
        for (config, k, amp) in loose {
            match grouped.last_mut() {
                Some((last, amps)) if *last == config => amps[k - 1] += amp,
                _ => {
                    let mut amps = [ZERO; 4];
                    amps[k - 1] = amp;
                    grouped.push((config, amps));
                }
            }
        }
        let mut state = GmpState {
            vertex_count,
            particles,
            statistics,
            step,
            norm_constant,
            entries: grouped,
        };
        state.prune(0.0);
        Ok(state)
    }

    /// Built by the step kernel from entries already in canonical order.
    pub(crate) fn from_sorted(
        template: &GmpState,
        step: u64,
        entries: Vec<(Configuration, Amplitudes)>,
    ) -> GmpState {
        debug_assert!(entries.windows(2).all(|w| w[0].0 < w[1].0));
        debug_assert!(entries.iter().all(|(c, _)| c.total() == template.particles));
        GmpState {
            vertex_count: template.vertex_count,
            particles: template.particles,
            statistics: template.statistics,
            step,
            norm_constant: template.norm_constant,
            entries,
        }
    }

    pub fn vertex_count(&self) -> usize {
        self.vertex_count
    }

    pub fn particles(&self) -> usize {
        self.particles
    }

    pub fn statistics(&self) -> Statistics {
        self.statistics
    }

    pub fn step(&self) -> u64 {
        self.step
    }

    /// `K_r` recorded by the last [`renormalize`](Self::renormalize).
    pub fn norm_constant(&self) -> f64 {
        self.norm_constant
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Configurations in canonical order with their chirality amplitudes.
    pub fn entries(&self) -> &[(Configuration, Amplitudes)] {
        &self.entries
    }

    /// Non-zero `(chirality, configuration, amplitude)` triples in canonical order.
    pub fn iter_nonzero(&self) -> impl Iterator<Item = (usize, &Configuration, Complex64)> + '_ {
        self.entries.iter().flat_map(|(c, amps)| {
            amps.iter()
                .enumerate()
                .filter(|(_, a)| **a != ZERO)
                .map(move |(k, a)| (k + 1, c, *a))
        })
    }

    pub fn amplitudes(&self, config: &Configuration) -> Option<&Amplitudes> {
        self.entries
            .binary_search_by(|(c, _)| c.cmp(config))
            .ok()
            .map(|i| &self.entries[i].1)
    }

    pub fn norm_squared(&self) -> f64 {
        self.entries
            .iter()
            .flat_map(|(_, a)| a.iter())
            .map(|z| z.norm_sqr())
            .sum()
    }

    /// Divides every amplitude by `K = √norm²` and records `K`.
    pub fn renormalize(&mut self) -> Result<f64, StateError> {
        let norm = self.norm_squared().sqrt();
        if norm.is_nan() || norm <= 0.0 || !norm.is_finite() {
            return Err(StateError::Collapse);
        }
        for (_, amps) in &mut self.entries {
            for z in amps.iter_mut() {
                *z /= norm;
            }
        }
        self.norm_constant = norm;
        Ok(norm)
    }

    /// Zeroes every amplitude with `|C| ≤ eps` and drops configurations left
    /// empty. Returns the number of non-zero amplitudes removed. Does not
    /// renormalise.
    pub fn prune(&mut self, eps: f64) -> usize {
        let mut removed = 0;
        for (_, amps) in &mut self.entries {
            for z in amps.iter_mut() {
                if *z != ZERO && z.norm() <= eps {
                    *z = ZERO;
                    removed += 1;
                }
            }
        }
        self.entries
            .retain(|(_, amps)| amps.iter().any(|z| *z != ZERO));
        removed
    }

    /// Number of distinct configurations with some amplitude `|C| > eps`.
    pub fn effective_dimension(&self, eps: f64) -> usize {
        self.entries
            .iter()
            .filter(|(_, amps)| amps.iter().any(|z| z.norm() > eps))
            .count()
    }

    /// Multiplies every amplitude by `factor`.
    pub fn scale(&mut self, factor: Complex64) {
        for (_, amps) in &mut self.entries {
            for z in amps.iter_mut() {
                *z *= factor;
            }
        }
    }

    /// Maximum amplitude deviation between two states over the union of keys.
    pub fn max_deviation(&self, other: &GmpState) -> f64 {
        let mut worst: f64 = 0.0;
        let (a, b) = (&self.entries, &other.entries);
        let (mut i, mut j) = (0, 0);
        let zero = [ZERO; 4];
        while i < a.len() || j < b.len() {
            let ord = match (a.get(i), b.get(j)) {
                (Some(x), Some(y)) => x.0.cmp(&y.0),
                (Some(_), None) => std::cmp::Ordering::Less,
                _ => std::cmp::Ordering::Greater,
            };
            let (u, v) = match ord {
                std::cmp::Ordering::Less => {
                    i += 1;
                    (&a[i - 1].1, &zero)
                }
                std::cmp::Ordering::Greater => {
                    j += 1;
                    (&zero, &b[j - 1].1)
                }
                std::cmp::Ordering::Equal => {
                    i += 1;
                    j += 1;
                    (&a[i - 1].1, &b[j - 1].1)
                }
            };
            for k in 0..4 {
                worst = worst.max((u[k] - v[k]).norm());
            }
        }
        worst
    }

    /// Equal entry sets within `tol` per amplitude.
    pub fn approx_eq(&self, other: &GmpState, tol: f64) -> bool {
        self.particles == other.particles
            && self.vertex_count == other.vertex_count
            && self.max_deviation(other) <= tol
    }
}

/// `D(particles, modes) = C(modes + particles − 1, particles)`, with `D(0, 0) = 1`.
pub fn multiset_count(particles: usize, modes: usize) -> Result<u64, StateError> {
    if modes == 0 {
        return Ok(u64::from(particles == 0));
    }
    let n = (modes + particles - 1) as u128;
    let k = particles.min(modes - 1) as u128;
    let overflow = || StateError::DimensionOverflow { particles, modes };
    let mut acc: u128 = 1;
    for i in 1..=k {
        // acc = C(n - k + i, i), exact at each step
        acc = acc.checked_mul(n - k + i).ok_or_else(overflow)? / i;
    }
    u64::try_from(acc).map_err(|_| overflow())
}

/// Dimension of the configuration space for `particles` on `modes` vertices.
///
/// Fermions use the multimode model, where a vertex can stack up to N
/// particles and exclusion acts on moves; their count equals the bosonic one.
pub fn config_space_dimension(
    particles: usize,
    modes: usize,
    _statistics: Statistics,
) -> Result<u64, StateError> {
    if modes == 0 {
        return Err(StateError::InvalidInput(
            "a lattice needs at least one vertex".into(),
        ));
    }
    multiset_count(particles, modes)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn h() -> f64 {
        std::f64::consts::FRAC_1_SQRT_2
    }

    #[test]
    fn initial_state() {
        let g = Lattice::full_grid(5);
        let s = GmpState::make_initial(
            &g,
            5,
            Statistics::Boson,
            1,
            [ZERO, c(h(), 0.0), c(h(), 0.0), ZERO],
        )
        .unwrap();
        assert_eq!(s.entries().len(), 1);
        assert_eq!(s.iter_nonzero().count(), 2);
        assert!((s.norm_squared() - 1.0).abs() < 1e-15);
        assert_eq!(s.effective_dimension(DEFAULT_PRUNE_EPS), 1);
        assert_eq!(s.entries()[0].0.occupation(1), 5);

        let one = GmpState::make_initial(
            &g,
            1,
            Statistics::Fermion,
            3,
            [c(1.0, 0.0), ZERO, ZERO, ZERO],
        )
        .unwrap();
        let (k, config, amp) = one.iter_nonzero().next().unwrap();
        assert_eq!((k, config.occupation(3), amp), (1, 1, c(1.0, 0.0)));
    }

    #[test]
    fn initial_normalises_coin() {
        let g = Lattice::full_grid(2);
        let s = GmpState::make_initial(
            &g,
            2,
            Statistics::Boson,
            1,
            [ZERO, c(1.0, 0.0), c(1.0, 0.0), ZERO],
        )
        .unwrap();
        assert!((s.norm_constant() - 2f64.sqrt()).abs() < 1e-15);
        assert!((s.entries()[0].1[1].re - h()).abs() < 1e-15);
    }

    #[test]
    fn initial_rejects_bad_input() {
        let g = Lattice::full_grid(2);
        assert!(matches!(
            GmpState::make_initial(&g, 2, Statistics::Boson, 1, [ZERO; 4]),
            Err(StateError::InvalidInput(_))
        ));
        assert!(GmpState::make_initial(&g, 2, Statistics::Boson, 5, [c(1.0, 0.0); 4]).is_err());
        assert!(GmpState::make_initial(&g, 0, Statistics::Boson, 1, [c(1.0, 0.0); 4]).is_err());
    }

    fn quad_state(amps: Amplitudes) -> GmpState {
        let cfg = Configuration::new(&[1, 0, 0, 0]);
        let entries = amps
            .iter()
            .enumerate()
            .map(|(k, a)| (k + 1, cfg.clone(), *a));
        GmpState::from_entries(4, 1, Statistics::Boson, 0, 1.0, entries).unwrap()
    }

    #[test]
    fn norms_and_renormalize() {
        let s = quad_state([c(0.5, 0.0); 4]);
        assert!((s.norm_squared() - 1.0).abs() < 1e-15);

        let mut big = quad_state([c(1.0, 0.0); 4]);
        assert_eq!(big.norm_squared(), 4.0);
        assert_eq!(big.renormalize().unwrap(), 2.0);
        assert_eq!(big.entries()[0].1, [c(0.5, 0.0); 4]);
        assert_eq!(big.norm_constant(), 2.0);

        let before = big.clone();
        big.renormalize().unwrap();
        assert!(big.max_deviation(&before) <= 1e-15);

        let mut zero = quad_state([c(1.0, 0.0); 4]);
        zero.scale(ZERO);
        assert_eq!(zero.renormalize(), Err(StateError::Collapse));
    }

    #[test]
    fn prune_thresholds() {
        let a = Configuration::new(&[1, 0]);
        let b = Configuration::new(&[0, 1]);
        let mut s = GmpState::from_entries(
            2,
            1,
            Statistics::Boson,
            0,
            1.0,
            [(1, a.clone(), c(1e-15, 0.0)), (1, b.clone(), c(0.9, 0.0))],
        )
        .unwrap();
        let mut exact = s.clone();
        assert_eq!(exact.prune(0.0), 0);
        assert_eq!(exact.entries().len(), 2);
        assert_eq!(s.prune(1e-12), 1);
        assert!(s.amplitudes(&a).is_none());
        assert!(s.amplitudes(&b).is_some());
        let snapshot = s.clone();
        assert_eq!(s.prune(1e-12), 0);
        assert!(s.approx_eq(&snapshot, 0.0));
        // renormalisation is not implicit
        assert!((s.norm_squared() - 0.81).abs() < 1e-15);
    }

    #[test]
    fn conservation_checked_on_insert() {
        let bad = GmpState::from_entries(
            2,
            2,
            Statistics::Boson,
            0,
            1.0,
            [(1, Configuration::new(&[1, 0]), c(1.0, 0.0))],
        );
        assert!(matches!(
            bad,
            Err(StateError::ParticleCount {
                found: 1,
                expected: 2,
                ..
            })
        ));
    }

    #[test]
    fn dimensions() {
        assert_eq!(
            config_space_dimension(5, 25, Statistics::Boson).unwrap(),
            118_755
        );
        assert_eq!(config_space_dimension(2, 4, Statistics::Boson).unwrap(), 10);
        assert_eq!(
            config_space_dimension(0, 7, Statistics::Fermion).unwrap(),
            1
        );
        assert_eq!(
            config_space_dimension(5, 25, Statistics::Fermion).unwrap(),
            118_755
        );
        assert_eq!(
            config_space_dimension(12, 36, Statistics::Boson).unwrap(),
            52_251_400_851
        );
        assert!(config_space_dimension(200, 200, Statistics::Boson).is_err());
        assert_eq!(multiset_count(0, 0).unwrap(), 1);
        assert_eq!(multiset_count(3, 0).unwrap(), 0);
        assert_eq!(multiset_count(3, 1).unwrap(), 1);
    }

    fn brute_count(particles: usize, modes: usize) -> u64 {
        fn go(left: usize, modes: usize) -> u64 {
            if modes == 1 {
                return 1;
            }
            (0..=left).map(|n| go(left - n, modes - 1)).sum()
        }
        go(particles, modes)
    }

    proptest! {
        #[test]
        fn dimension_matches_enumeration(n in 0usize..6, m in 1usize..7) {
            prop_assert_eq!(multiset_count(n, m).unwrap(), brute_count(n, m));
        }

        #[test]
        fn renormalize_gives_unit_norm(parts in proptest::collection::vec(-1e3f64..1e3, 8)) {
            prop_assume!(parts.iter().any(|x| x.abs() > 1e-6));
            let mut s = quad_state([c(parts[0], parts[1]), c(parts[2], parts[3]), c(parts[4], parts[5]), c(parts[6], parts[7])]);
            s.renormalize().unwrap();
            prop_assert!((s.norm_squared() - 1.0).abs() < 1e-12);
        }

        #[test]
        fn insertion_order_irrelevant(seed in proptest::collection::vec((1usize..=4, 0usize..3, -1.0f64..1.0), 1..12)) {
            let configs = [Configuration::new(&[2, 0, 0]), Configuration::new(&[0, 1, 1]), Configuration::new(&[1, 0, 1])];
            let items: Vec<_> = seed.iter().map(|&(k, ci, a)| (k, configs[ci].clone(), c(a, -a))).collect();
            let mut rev = items.clone();
            rev.reverse();
            let s1 = GmpState::from_entries(3, 2, Statistics::Boson, 0, 1.0, items).unwrap();
            let s2 = GmpState::from_entries(3, 2, Statistics::Boson, 0, 1.0, rev).unwrap();
            prop_assert!(s1.approx_eq(&s2, 1e-13));
        }
    }
}
