//! Dense brute-force reference simulator for small instances.
//!
//! Everything here is rebuilt from the definitions: the coin from powers of
//! `i`, the ladder factor as `√(n_s(n_d + 1))`, and directions from vertex
//! label arithmetic on the edge list. Nothing is shared with the sparse kernel
//! beyond the lattice's edge set and the state container.

use std::collections::HashMap;

use num_complex::Complex64;
use thiserror::Error;

use crate::evolve::FermionRule;
use crate::lattice::{Lattice, STANDARD_FRAME};
use crate::state::{Configuration, GmpState, Statistics};

/// Hard cap on the basis size handed to [`enumerate_basis`].
pub const BASIS_LIMIT: usize = 1_000_000;
/// Default cap on the dense matrix dimension (`4·D`).
pub const DEFAULT_MATRIX_LIMIT: usize = 2048;

#[derive(Debug, Error, PartialEq)]
pub enum OracleError {
    #[error("dense dimension {dimension} exceeds the limit {limit}; try fewer particles or a smaller lattice")]
    TooLarge { dimension: usize, limit: usize },
    #[error("the oracle only understands the standard chirality frame")]
    NonStandardFrame,
    #[error("state does not match the basis: {0}")]
    Mismatch(String),
    #[error("step {0}: every amplitude vanished")]
    Collapse(u64),
}

/// Every configuration of N particles on M² vertices, in descending
/// lexicographic order: `(N, 0, …, 0)` first and `(0, …, 0, N)` last.
#[derive(Debug, Clone)]
pub struct DenseBasis {
    pub configs: Vec<Configuration>,
    pub index: HashMap<Configuration, usize>,
    pub particles: usize,
    pub statistics: Statistics,
}

impl DenseBasis {
    /// Number of (chirality, configuration) basis vectors.
    pub fn dimension(&self) -> usize {
        4 * self.configs.len()
    }

    /// Position of `|v_k, config⟩` in dense vectors (`k` is 1-based).
    pub fn position(&self, k: usize, config: &Configuration) -> Option<usize> {
        self.index.get(config).map(|&l| 4 * l + (k - 1))
    }

    pub fn to_dense(&self, state: &GmpState) -> Result<Vec<Complex64>, OracleError> {
        let mut v = vec![Complex64::new(0.0, 0.0); self.dimension()];
        for (k, config, amp) in state.iter_nonzero() {
            let pos = self.position(k, config).ok_or_else(|| {
                OracleError::Mismatch(format!("configuration {config} not in basis"))
            })?;
            v[pos] = amp;
        }
        Ok(v)
    }

    /// Largest `|sparse − dense|` over all basis vectors.
    pub fn deviation(&self, dense: &[Complex64], state: &GmpState) -> Result<f64, OracleError> {
        let sparse = self.to_dense(state)?;
        Ok(sparse
            .iter()
            .zip(dense)
            .map(|(a, b)| (a - b).norm())
            .fold(0.0, f64::max))
    }
}

fn count_multisets(n: usize, m: usize) -> usize {
    // small-instance Pascal recursion, independent of the state module's formula
    let mut row = vec![1usize; n + 1];
    for _ in 1..m {
        for i in 1..=n {
            row[i] = row[i].saturating_add(row[i - 1]);
        }
    }
    if m == 0 {
        usize::from(n == 0)
    } else {
        row[n]
    }
}

pub fn enumerate_basis(
    lattice: &Lattice,
    particles: usize,
    statistics: Statistics,
) -> Result<DenseBasis, OracleError> {
    let vertices = lattice.vertex_count();
    let size = count_multisets(particles, vertices);
    let dimension = size.saturating_mul(4);
    if dimension > BASIS_LIMIT {
        return Err(OracleError::TooLarge {
            dimension,
            limit: BASIS_LIMIT,
        });
    }
    let mut configs = Vec::with_capacity(size);
    let mut current = vec![0u8; vertices];
    fn fill(pos: usize, left: usize, current: &mut Vec<u8>, out: &mut Vec<Configuration>) {
        if pos + 1 == current.len() {
            current[pos] = left as u8;
            out.push(Configuration::new(current));
            return;
        }
        for n in (0..=left).rev() {
            current[pos] = n as u8;
            fill(pos + 1, left - n, current, out);
        }
        current[pos] = 0;
    }
    fill(0, particles, &mut current, &mut configs);
    let index = configs
        .iter()
        .enumerate()
        .map(|(i, c)| (c.clone(), i))
        .collect();
    Ok(DenseBasis {
        configs,
        index,
        particles,
        statistics,
    })
}

/// Row-major dense complex matrix.
#[derive(Debug, Clone)]
pub struct DenseMatrix {
    pub dim: usize,
    pub data: Vec<Complex64>,
}

impl DenseMatrix {
    pub fn get(&self, row: usize, col: usize) -> Complex64 {
        self.data[row * self.dim + col]
    }

    pub fn apply(&self, v: &[Complex64]) -> Vec<Complex64> {
        (0..self.dim)
            .map(|r| {
                let row = &self.data[r * self.dim..(r + 1) * self.dim];
                row.iter().zip(v).map(|(a, b)| a * b).sum()
            })
            .collect()
    }

    pub fn nonzeros(&self) -> usize {
        self.data.iter().filter(|z| z.norm() != 0.0).count()
    }
}

fn dft_entry(j: usize, k: usize) -> Complex64 {
    Complex64::i().powu(((j - 1) * (k - 1)) as u32) * 0.5
}

/// `(source, chirality, destination)` for every directed move, 1-based.
fn directed_moves(lattice: &Lattice) -> Vec<(usize, usize, usize)> {
    let m = lattice.side();
    let mut moves = Vec::new();
    for &(a, b) in lattice.edges() {
        if b - a == m {
            moves.push((a, 3, b));
            moves.push((b, 4, a));
        } else {
            moves.push((a, 2, b));
            moves.push((b, 1, a));
        }
    }
    moves
}

fn move_factor(statistics: Statistics, rule: FermionRule, source: u8, dest: u8) -> f64 {
    match statistics {
        Statistics::Boson => ((source as f64) * (dest as f64 + 1.0)).sqrt(),
        Statistics::Fermion => {
            let blocked = match rule {
                FermionRule::Equal => dest == source,
                FermionRule::Geq => dest >= source,
            };
            if blocked {
                0.0
            } else {
                1.0
            }
        }
    }
}

/// The full coin-and-shift operator as a dense matrix.
pub fn build_step_matrix(
    basis: &DenseBasis,
    lattice: &Lattice,
    rule: FermionRule,
    limit: usize,
) -> Result<DenseMatrix, OracleError> {
    if lattice.frame() != STANDARD_FRAME {
        return Err(OracleError::NonStandardFrame);
    }
    let dim = basis.dimension();
    if dim > limit {
        return Err(OracleError::TooLarge {
            dimension: dim,
            limit,
        });
    }
    let moves = directed_moves(lattice);
    let mut data = vec![Complex64::new(0.0, 0.0); dim * dim];
    for (l, config) in basis.configs.iter().enumerate() {
        let occ = config.occupations();
        for &(src, k, dst) in &moves {
            let (ns, nd) = (occ[src - 1], occ[dst - 1]);
            if ns == 0 {
                continue;
            }
            let factor = move_factor(basis.statistics, rule, ns, nd);
            if factor == 0.0 {
                continue;
            }
            let mut target = occ.to_vec();
            target[src - 1] -= 1;
            target[dst - 1] += 1;
            let l2 = basis.index[&Configuration::new(&target)];
            let col = 4 * l + (k - 1);
            for j in 1..=4 {
                let row = 4 * l2 + (j - 1);
                data[row * dim + col] += dft_entry(j, k) * factor;
            }
        }
    }
    Ok(DenseMatrix { dim, data })
}

/// Dense evolution from `initial`, pruning at `eps` and renormalising after
/// each step. Element `r` of the result is the state after `r` steps.
pub fn oracle_run(
    initial: &GmpState,
    lattice: &Lattice,
    steps: u64,
    rule: FermionRule,
    eps: f64,
    limit: usize,
) -> Result<(DenseBasis, Vec<Vec<Complex64>>), OracleError> {
    let basis = enumerate_basis(lattice, initial.particles(), initial.statistics())?;
    let matrix = build_step_matrix(&basis, lattice, rule, limit)?;
    let mut v = basis.to_dense(initial)?;
    let mut history = Vec::with_capacity(steps as usize + 1);
    history.push(v.clone());
    for r in 1..=steps {
        let mut next = matrix.apply(&v);
        for z in next.iter_mut() {
            if z.norm() <= eps {
                *z = Complex64::new(0.0, 0.0);
            }
        }
        let norm = next.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        if norm.is_nan() || norm <= 0.0 {
            return Err(OracleError::Collapse(r));
        }
        for z in next.iter_mut() {
            *z /= norm;
        }
        history.push(next.clone());
        v = next;
    }
    Ok((basis, history))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn basis_sizes_and_order() {
        let b = enumerate_basis(&Lattice::full_grid(2), 2, Statistics::Boson).unwrap();
        assert_eq!(b.configs.len(), 10);
        assert_eq!(b.configs[0].occupations(), &[2, 0, 0, 0]);
        assert_eq!(b.configs.last().unwrap().occupations(), &[0, 0, 0, 2]);
        assert!(b.configs.windows(2).all(|w| w[0] > w[1]));
        let single = enumerate_basis(&Lattice::full_grid(1), 3, Statistics::Boson).unwrap();
        assert_eq!(single.configs.len(), 1);
        assert_eq!(single.configs[0].occupations(), &[3]);
    }

    #[test]
    fn basis_guard() {
        let err = enumerate_basis(&Lattice::full_grid(6), 8, Statistics::Boson).unwrap_err();
        assert!(matches!(err, OracleError::TooLarge { .. }));
        let b = enumerate_basis(&Lattice::full_grid(5), 5, Statistics::Boson).unwrap();
        assert_eq!(b.configs.len(), 118_755);
        assert!(matches!(
            build_step_matrix(
                &b,
                &Lattice::full_grid(5),
                FermionRule::Equal,
                DEFAULT_MATRIX_LIMIT
            ),
            Err(OracleError::TooLarge {
                dimension: 475_020,
                ..
            })
        ));
    }

    #[test]
    fn single_walker_matrix_structure() {
        let lattice = Lattice::full_grid(2);
        let b = enumerate_basis(&lattice, 1, Statistics::Boson).unwrap();
        let m = build_step_matrix(&b, &lattice, FermionRule::Equal, DEFAULT_MATRIX_LIMIT).unwrap();
        assert_eq!(m.dim, 16);
        // 8 directed moves on the 2x2 grid, each filling a 4-entry coin column
        assert_eq!(m.nonzeros(), 32);
        for col in 0..16 {
            let nz = (0..16).filter(|&r| m.get(r, col).norm() != 0.0).count();
            assert!(nz == 0 || nz == 4, "column {col} has {nz} entries");
        }
    }

    #[test]
    fn fermion_blocked_moves_are_zero() {
        let lattice = Lattice::full_grid(2);
        let b = enumerate_basis(&lattice, 2, Statistics::Fermion).unwrap();
        let m = build_step_matrix(&b, &lattice, FermionRule::Equal, DEFAULT_MATRIX_LIMIT).unwrap();
        // [1,1,0,0]: moving right from vertex 1 onto vertex 2 (both hold one)
        let src = b.position(2, &Configuration::new(&[1, 1, 0, 0])).unwrap();
        for j in 1..=4 {
            let dst = b.position(j, &Configuration::new(&[0, 2, 0, 0])).unwrap();
            assert_eq!(m.get(dst, src), Complex64::new(0.0, 0.0));
        }
        let bos = enumerate_basis(&lattice, 2, Statistics::Boson).unwrap();
        let mb =
            build_step_matrix(&bos, &lattice, FermionRule::Equal, DEFAULT_MATRIX_LIMIT).unwrap();
        let src = bos.position(2, &Configuration::new(&[1, 1, 0, 0])).unwrap();
        let dst = bos.position(1, &Configuration::new(&[0, 2, 0, 0])).unwrap();
        assert!((mb.get(dst, src) - Complex64::new(0.5 * 2f64.sqrt(), 0.0)).norm() < 1e-15);
    }

    #[test]
    fn conserves_particles_columnwise() {
        let lattice = Lattice::full_grid(3);
        let b = enumerate_basis(&lattice, 2, Statistics::Boson).unwrap();
        let m = build_step_matrix(&b, &lattice, FermionRule::Equal, DEFAULT_MATRIX_LIMIT).unwrap();
        for col in 0..m.dim {
            for row in 0..m.dim {
                if m.get(row, col).norm() != 0.0 {
                    assert_eq!(b.configs[row / 4].total(), b.configs[col / 4].total());
                }
            }
        }
    }

    #[test]
    fn rejects_mirrored_frame() {
        let lattice = Lattice::full_grid(2).mirrored();
        let b = enumerate_basis(&lattice, 1, Statistics::Boson).unwrap();
        assert_eq!(
            build_step_matrix(&b, &lattice, FermionRule::Equal, DEFAULT_MATRIX_LIMIT).unwrap_err(),
            OracleError::NonStandardFrame
        );
    }
}
