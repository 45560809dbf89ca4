use manywalk::oracle::{oracle_run, DEFAULT_MATRIX_LIMIT};
use manywalk::{step, Complex64, FermionRule, GmpState, Lattice, Statistics, StepOptions};

const TOL: f64 = 1e-10;

fn initial(lattice: &Lattice, n: usize, stats: Statistics, vertex: usize) -> GmpState {
    let h = std::f64::consts::FRAC_1_SQRT_2;
    let z = Complex64::new(0.0, 0.0);
    GmpState::make_initial(
        lattice,
        n,
        stats,
        vertex,
        [z, Complex64::new(h, 0.0), Complex64::new(h, 0.0), z],
    )
    .unwrap()
}

fn worst_deviation(
    lattice: &Lattice,
    n: usize,
    stats: Statistics,
    rule: FermionRule,
    vertex: usize,
    steps: u64,
) -> f64 {
    let s0 = initial(lattice, n, stats, vertex);
    let opts = StepOptions {
        fermion_rule: rule,
        ..StepOptions::default()
    };
    let (basis, history) = oracle_run(
        &s0,
        lattice,
        steps,
        rule,
        opts.prune_eps,
        DEFAULT_MATRIX_LIMIT,
    )
    .unwrap();
    let mut s = s0;
    let mut worst = basis.deviation(&history[0], &s).unwrap();
    for dense in &history[1..] {
        s = step(&s, lattice, &opts).unwrap().0;
        worst = worst.max(basis.deviation(dense, &s).unwrap());
    }
    worst
}

#[test]
fn sparse_matches_dense_on_small_grids() {
    let variants = [
        (Statistics::Boson, FermionRule::Equal),
        (Statistics::Fermion, FermionRule::Equal),
        (Statistics::Fermion, FermionRule::Geq),
    ];
    for side in [2, 3] {
        let lattice = Lattice::full_grid(side);
        for n in 1..=3 {
            for (stats, rule) in variants {
                let d = worst_deviation(&lattice, n, stats, rule, 1, 20);
                assert!(
                    d <= TOL,
                    "{side}x{side} N={n} {stats} {rule}: deviation {d:e}"
                );
            }
        }
    }
}

#[test]
fn sparse_matches_dense_from_other_starts() {
    let lattice = Lattice::full_grid(3);
    for vertex in [5, 7] {
        for stats in [Statistics::Boson, Statistics::Fermion] {
            let d = worst_deviation(&lattice, 2, stats, FermionRule::Equal, vertex, 20);
            assert!(d <= TOL, "vertex {vertex} {stats}: {d:e}");
        }
    }
}

#[test]
fn sparse_matches_dense_on_a_subgraph() {
    // a 3x3 ring without its centre
    let lattice: Lattice = "M 3\nE 1 2\nE 2 3\nE 3 6\nE 6 9\nE 9 8\nE 8 7\nE 7 4\nE 4 1"
        .parse()
        .unwrap();
    for stats in [Statistics::Boson, Statistics::Fermion] {
        let d = worst_deviation(&lattice, 3, stats, FermionRule::Equal, 1, 20);
        assert!(d <= TOL, "{stats}: {d:e}");
    }
}
