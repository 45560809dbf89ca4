//! Measurements on a many-particle state.
//!
//! Every observable divides by the state's squared norm, so results do not
//! depend on an overall scale of the stored amplitudes.

use std::f64::consts::PI;

use thiserror::Error;

use crate::state::{multiset_count, Configuration, GmpState, DEFAULT_PRUNE_EPS};

#[derive(Debug, Error, PartialEq)]
pub enum ObservableError {
    #[error("cannot count {n} particles on a vertex when only {particles} exist")]
    TooManyParticles { n: usize, particles: usize },
    #[error("vertex {0} outside the lattice")]
    VertexOutOfRange(usize),
}

/// Fourier modes `φ_η = 2π(η−1)/M²` over vertex coordinates `x_α = α − 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct ModeSet {
    mode_count: usize,
    phases: Vec<f64>,
    /// `cos(2 φ_η x_α)` indexed `[η − 1][α − 1]`.
    cos_table: Vec<Vec<f64>>,
}

impl ModeSet {
    pub fn new(mode_count: usize) -> ModeSet {
        let m = mode_count.max(1);
        let phases = (0..mode_count)
            .map(|e| 2.0 * PI * e as f64 / m as f64)
            .collect();
        // reduce the integer turn count first so large products keep full precision
        let cos_table = (0..mode_count)
            .map(|e| {
                (0..mode_count)
                    .map(|x| (2.0 * PI * ((2 * e * x) % m) as f64 / m as f64).cos())
                    .collect()
            })
            .collect();
        ModeSet {
            mode_count,
            phases,
            cos_table,
        }
    }

    pub fn mode_count(&self) -> usize {
        self.mode_count
    }

    pub fn phases(&self) -> &[f64] {
        &self.phases
    }

    /// `cos(2 φ_η x_α)` for 1-based mode and vertex.
    pub fn cos_term(&self, eta: usize, alpha: usize) -> f64 {
        self.cos_table[eta - 1][alpha - 1]
    }
}

/// Per-step summary of the state.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeSeriesRecord {
    pub step: u64,
    pub norm_constant: f64,
    /// Squared norm of the stored amplitudes.
    pub norm_squared: f64,
    pub effective_dimension: usize,
    pub entropy: f64,
    /// `None` where the tracked configuration has zero entropy.
    pub temperature: Option<f64>,
    pub total_energy: f64,
    /// Total probability weight of the tracked configuration.
    pub tracked_weight: f64,
    /// `⟨n_α⟩` for `α = 1..=M²`.
    pub densities: Vec<f64>,
    /// `(n, P_n per vertex)` for each requested particle number.
    pub counting: Vec<(usize, Vec<f64>)>,
}

/// What [`observe`] measures.
#[derive(Debug, Clone, PartialEq)]
pub struct ObservableSpec {
    pub tracked: Configuration,
    pub counting_n: Vec<usize>,
    pub eps: f64,
    pub modes: ModeSet,
}

impl ObservableSpec {
    /// Tracks the largest-weight configuration of `state` (its only one, for a
    /// freshly initialised state) and counts every `n` from 1 to N.
    pub fn for_state(state: &GmpState) -> ObservableSpec {
        let tracked = state
            .entries()
            .iter()
            .max_by(|a, b| {
                let wa: f64 = a.1.iter().map(|z| z.norm_sqr()).sum();
                let wb: f64 = b.1.iter().map(|z| z.norm_sqr()).sum();
                wa.total_cmp(&wb)
            })
            .map(|(c, _)| c.clone())
            .unwrap_or_else(|| Configuration::new(&vec![0; state.vertex_count()]));
        ObservableSpec {
            tracked,
            counting_n: (1..=state.particles()).collect(),
            eps: DEFAULT_PRUNE_EPS,
            modes: ModeSet::new(state.vertex_count()),
        }
    }
}

fn weight(amps: &[num_complex::Complex64; 4]) -> f64 {
    amps.iter().map(|z| z.norm_sqr()).sum()
}

/// Expected occupation `⟨n_α⟩` of the 1-based vertex `alpha`.
pub fn vertex_density(state: &GmpState, alpha: usize) -> f64 {
    let total = state.norm_squared();
    state
        .entries()
        .iter()
        .map(|(c, a)| weight(a) * c.occupation(alpha) as f64)
        .sum::<f64>()
        / total
}

/// `D(N − n, M² − 1) / (M² · D(N, M²))`, the combinatorial weight of seeing
/// exactly `n` particles on one vertex.
pub fn counting_weight(particles: usize, vertex_count: usize, n: usize) -> f64 {
    let rest = multiset_count(particles - n, vertex_count - 1).expect("dimension fits") as f64;
    let all = multiset_count(particles, vertex_count).expect("dimension fits") as f64;
    rest / (vertex_count as f64 * all)
}

/// Probability mass on configurations with exactly `n` particles at `alpha`.
pub fn occupation_probability(state: &GmpState, n: usize, alpha: usize) -> f64 {
    let total = state.norm_squared();
    state
        .entries()
        .iter()
        .filter(|(c, _)| c.occupation(alpha) == n)
        .map(|(_, a)| weight(a))
        .sum::<f64>()
        / total
}

/// Counting statistics `P^r_{n,α}`.
pub fn counting_statistics(
    state: &GmpState,
    n: usize,
    alpha: usize,
) -> Result<f64, ObservableError> {
    if n > state.particles() {
        return Err(ObservableError::TooManyParticles {
            n,
            particles: state.particles(),
        });
    }
    if !(1..=state.vertex_count()).contains(&alpha) {
        return Err(ObservableError::VertexOutOfRange(alpha));
    }
    Ok(occupation_probability(state, n, alpha)
        * counting_weight(state.particles(), state.vertex_count(), n))
}

/// Von Neumann entropy of the chirality distribution of `config`, with
/// `0·log 0 = 0`. Zero when the configuration is absent.
pub fn configuration_entropy(state: &GmpState, config: &Configuration) -> f64 {
    let total = state.norm_squared();
    let Some(amps) = state.amplitudes(config) else {
        return 0.0;
    };
    entropy_of(amps, total)
}

fn entropy_of(amps: &[num_complex::Complex64; 4], total: f64) -> f64 {
    let s: f64 = amps
        .iter()
        .map(|z| z.norm_sqr() / total)
        .filter(|&p| p > 0.0)
        .map(|p| -p * p.ln())
        .sum();
    s.max(0.0)
}

/// First and second occupation moments `(Σ_α⟨n_α⟩, Σ_α⟨n_α(n_α + ½)⟩)` per vertex.
fn moments(state: &GmpState) -> (Vec<f64>, Vec<f64>) {
    let total = state.norm_squared();
    let mut first = vec![0.0; state.vertex_count()];
    let mut second = vec![0.0; state.vertex_count()];
    for (c, a) in state.entries() {
        let p = weight(a) / total;
        for (i, &n) in c.occupations().iter().enumerate() {
            if n > 0 {
                let n = n as f64;
                first[i] += p * n;
                second[i] += p * n * (n + 0.5);
            }
        }
    }
    (first, second)
}

fn energy_from_moments(
    first: &[f64],
    second: &[f64],
    particles: usize,
    eta: usize,
    modes: &ModeSet,
) -> f64 {
    let n = particles as f64;
    first
        .iter()
        .zip(second)
        .enumerate()
        .map(|(i, (f, s))| (s - f * modes.cos_term(eta, i + 1)) / n)
        .sum()
}

/// Energy of mode `eta` (1-based):
/// `Σ_ℓ Σ_j |C_jℓ|²/K² · Σ_α (n_ℓα/N)(n_ℓα + ½ − cos 2φ_η x_α)`.
///
/// The per-mode occupation in the energy formula is read as the vertex
/// occupation under the vertex sum; all choices of that reading live here.
pub fn mode_energy(state: &GmpState, eta: usize, modes: &ModeSet) -> f64 {
    let (first, second) = moments(state);
    energy_from_moments(&first, &second, state.particles(), eta, modes)
}

/// `Σ_η ⟨E_η⟩`.
pub fn total_energy(state: &GmpState, modes: &ModeSet) -> f64 {
    let (first, second) = moments(state);
    (1..=modes.mode_count())
        .map(|eta| energy_from_moments(&first, &second, state.particles(), eta, modes))
        .sum()
}

/// Total mode energy over the configuration entropy; `None` at zero entropy.
pub fn configuration_temperature(
    state: &GmpState,
    config: &Configuration,
    modes: &ModeSet,
) -> Option<f64> {
    let s = configuration_entropy(state, config);
    (s > 0.0).then(|| total_energy(state, modes) / s)
}

/// Evaluates every observable in `spec` in one pass over the state.
pub fn observe(state: &GmpState, spec: &ObservableSpec) -> TimeSeriesRecord {
    let total = state.norm_squared();
    let vertices = state.vertex_count();
    let particles = state.particles();
    let mut first = vec![0.0; vertices];
    let mut second = vec![0.0; vertices];
    let mut by_count = vec![vec![0.0; vertices]; particles + 1];
    for (c, a) in state.entries() {
        let p = weight(a) / total;
        for (i, &n) in c.occupations().iter().enumerate() {
            by_count[n as usize][i] += p;
            if n > 0 {
                let n = n as f64;
                first[i] += p * n;
                second[i] += p * n * (n + 0.5);
            }
        }
    }
    let total_energy: f64 = (1..=spec.modes.mode_count())
        .map(|eta| energy_from_moments(&first, &second, particles, eta, &spec.modes))
        .sum();
    let tracked = state.amplitudes(&spec.tracked);
    let entropy = tracked.map_or(0.0, |a| entropy_of(a, total));
    let tracked_weight = tracked.map_or(0.0, |a| weight(a) / total);
    let counting = spec
        .counting_n
        .iter()
        .filter(|&&n| n <= particles)
        .map(|&n| {
            let w = counting_weight(particles, vertices, n);
            (n, by_count[n].iter().map(|p| p * w).collect())
        })
        .collect();
    TimeSeriesRecord {
        step: state.step(),
        norm_constant: state.norm_constant(),
        norm_squared: total,
        effective_dimension: state.effective_dimension(spec.eps),
        entropy,
        temperature: (entropy > 0.0).then(|| total_energy / entropy),
        total_energy,
        tracked_weight,
        densities: first,
        counting,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lattice::Lattice;
    use crate::state::Statistics;
    use num_complex::Complex64;
    use proptest::prelude::*;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    const Z: Complex64 = Complex64::new(0.0, 0.0);

    fn initial5() -> GmpState {
        let h = std::f64::consts::FRAC_1_SQRT_2;
        GmpState::make_initial(
            &Lattice::full_grid(5),
            5,
            Statistics::Boson,
            1,
            [Z, c(h, 0.0), c(h, 0.0), Z],
        )
        .unwrap()
    }

    #[test]
    fn initial_densities() {
        let s = initial5();
        assert_eq!(vertex_density(&s, 1), 5.0);
        for a in 2..=25 {
            assert_eq!(vertex_density(&s, a), 0.0);
        }
    }

    #[test]
    fn initial_counting() {
        let s = initial5();
        let p = counting_statistics(&s, 5, 1).unwrap();
        assert!((p - 1.0 / (25.0 * 118_755.0)).abs() < 1e-20);
        assert_eq!(counting_statistics(&s, 5, 2).unwrap(), 0.0);
        assert!(matches!(
            counting_statistics(&s, 6, 1),
            Err(ObservableError::TooManyParticles { .. })
        ));
    }

    #[test]
    fn entropy_cases() {
        let s = initial5();
        let l0 = s.entries()[0].0.clone();
        assert!((configuration_entropy(&s, &l0) - 2f64.ln()).abs() < 1e-15);
        let absent = Configuration::stacked(25, 2, 5);
        assert_eq!(configuration_entropy(&s, &absent), 0.0);
        let pure = GmpState::make_initial(
            &Lattice::full_grid(2),
            1,
            Statistics::Boson,
            1,
            [c(1.0, 0.0), Z, Z, Z],
        )
        .unwrap();
        let cfg = pure.entries()[0].0.clone();
        assert_eq!(configuration_entropy(&pure, &cfg), 0.0);
        assert_eq!(
            configuration_temperature(&pure, &cfg, &ModeSet::new(4)),
            None
        );
    }

    #[test]
    fn single_walker_energy_at_origin() {
        let s = GmpState::make_initial(
            &Lattice::full_grid(3),
            1,
            Statistics::Boson,
            1,
            [c(1.0, 0.0); 4],
        )
        .unwrap();
        let modes = ModeSet::new(9);
        for eta in 1..=9 {
            assert!((mode_energy(&s, eta, &modes) - 0.5).abs() < 1e-15);
        }
    }

    #[test]
    fn half_turn_term() {
        // M² = 4: φ_2 = π/2, x_2 = 1 → cos(2·π/2) = −1
        let modes = ModeSet::new(4);
        assert!((modes.cos_term(2, 2) + 1.0).abs() < 1e-15);
        let s = GmpState::make_initial(
            &Lattice::full_grid(2),
            3,
            Statistics::Boson,
            2,
            [c(1.0, 0.0); 4],
        )
        .unwrap();
        let want = 3.0 * (3.0 + 0.5 + 1.0) / 3.0;
        assert!((mode_energy(&s, 2, &modes) - want).abs() < 1e-14);
    }

    #[test]
    fn phases_increasing() {
        let m = ModeSet::new(25);
        assert!(m.phases().windows(2).all(|w| w[0] < w[1]));
        assert!(m.phases()[0] == 0.0 && *m.phases().last().unwrap() < 2.0 * PI);
    }

    fn arb_state() -> impl Strategy<Value = GmpState> {
        let configs = [
            Configuration::new(&[3, 0, 0, 0]),
            Configuration::new(&[1, 1, 1, 0]),
            Configuration::new(&[0, 2, 0, 1]),
            Configuration::new(&[0, 0, 0, 3]),
            Configuration::new(&[2, 0, 1, 0]),
        ];
        proptest::collection::vec((1usize..=4, 0usize..5, -1.0f64..1.0, -1.0f64..1.0), 1..20)
            .prop_filter_map("non-zero state", move |items| {
                let s = GmpState::from_entries(
                    4,
                    3,
                    Statistics::Boson,
                    0,
                    1.0,
                    items
                        .into_iter()
                        .map(|(k, i, re, im)| (k, configs[i].clone(), c(re, im))),
                )
                .ok()?;
                (s.norm_squared() > 1e-6).then_some(s)
            })
    }

    proptest! {
        #[test]
        fn densities_sum_to_n(s in arb_state()) {
            let sum: f64 = (1..=4).map(|a| vertex_density(&s, a)).sum();
            prop_assert!((sum - 3.0).abs() < 1e-9);
        }

        #[test]
        fn scale_invariance(s in arb_state(), re in -3.0f64..3.0, im in -3.0f64..3.0) {
            prop_assume!(re.abs() + im.abs() > 1e-3);
            let spec = ObservableSpec::for_state(&s);
            let mut scaled = s.clone();
            scaled.scale(c(re, im));
            let (a, b) = (observe(&s, &spec), observe(&scaled, &spec));
            for (x, y) in a.densities.iter().zip(&b.densities) {
                prop_assert!((x - y).abs() < 1e-10);
            }
            prop_assert!((a.entropy - b.entropy).abs() < 1e-10);
            prop_assert!((a.total_energy - b.total_energy).abs() < 1e-9);
            for ((_, pa), (_, pb)) in a.counting.iter().zip(&b.counting) {
                for (x, y) in pa.iter().zip(pb) {
                    prop_assert!((x - y).abs() < 1e-12);
                }
            }
        }

        #[test]
        fn entropy_bounded(s in arb_state()) {
            for (cfg, _) in s.entries() {
                let e = configuration_entropy(&s, cfg);
                prop_assert!(e >= 0.0 && e <= 4f64.ln() + 1e-12);
            }
        }

        #[test]
        fn counting_partitions_unity(s in arb_state()) {
            let sum: f64 = (1..=4)
                .flat_map(|a| (0..=3).map(move |n| (a, n)))
                .map(|(a, n)| occupation_probability(&s, n, a))
                .sum();
            prop_assert!((sum - 4.0).abs() < 1e-9);
        }

        #[test]
        fn observe_agrees_with_single_functions(s in arb_state()) {
            let spec = ObservableSpec::for_state(&s);
            let rec = observe(&s, &spec);
            for a in 1..=4 {
                prop_assert!((rec.densities[a - 1] - vertex_density(&s, a)).abs() < 1e-12);
            }
            for (n, per_vertex) in &rec.counting {
                for a in 1..=4 {
                    prop_assert!((per_vertex[a - 1] - counting_statistics(&s, *n, a).unwrap()).abs() < 1e-14);
                }
            }
            prop_assert!((rec.total_energy - total_energy(&s, &spec.modes)).abs() < 1e-10);
            match (rec.temperature, configuration_temperature(&s, &spec.tracked, &spec.modes)) {
                (Some(a), Some(b)) => prop_assert!((a - b).abs() <= 1e-9 * b.abs().max(1.0)),
                (None, None) => {}
                other => prop_assert!(false, "temperature mismatch {:?}", other),
            }
        }

        #[test]
        fn counting_monotone_in_matching_mass(s in arb_state(), extra in 0.01f64..2.0) {
            let target = Configuration::new(&[3, 0, 0, 0]);
            let before = counting_statistics(&s, 3, 1).unwrap();
            let more = s.iter_nonzero()
                .map(|(k, c, a)| (k, c.clone(), a))
                .chain(std::iter::once((1, target, c(extra, 0.0))));
            let bigger = GmpState::from_entries(4, 3, Statistics::Boson, 0, 1.0, more).unwrap();
            // mass added to a matching configuration, with any existing amplitude kept in phase
            let after = counting_statistics(&bigger, 3, 1).unwrap();
            let aligned = s.amplitudes(&Configuration::new(&[3, 0, 0, 0])).is_none_or(|a| a[0].re >= 0.0);
            if aligned {
                prop_assert!(after >= before - 1e-15);
            }
        }
    }
}
