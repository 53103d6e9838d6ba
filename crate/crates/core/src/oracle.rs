//! Density-matrix simulation of the GHZ measurement circuit.
//!
//! Each party i holds a kept qubit and a stored qubit sharing a depolarised
//! Bell pair `F_i |φ⁺⟩⟨φ⁺| + (1−F_i)/3 (𝟙 − |φ⁺⟩⟨φ⁺|)`. The router applies
//! CNOTs from A's stored qubit onto every B_i's stored qubit, a Hadamard on
//! A's stored qubit, and measures all stored qubits in Z. The parties apply
//! `Z^{m_a} ⊗ X^{m_b₁} ⊗ …` to their kept qubits; averaging over outcomes
//! gives the kept N-qubit state. All matrices are real.
//!
//! Index layout: kept qubits occupy the low N bits, stored qubits the high
//! N bits, and within each register party A is the most significant bit, so
//! a kept-register basis index reads `A B₁ … B_{N−1}` in binary.

use crate::error::{Error, Result};
use crate::noise::{Fidelities, GhzDiagonal3, QberSet};

/// Largest party count accepted by the oracle (state dimension 4^N).
pub const ORACLE_MAX_PARTIES: usize = 5;

/// Dense real symmetric matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityMatrix {
    pub dim: usize,
    pub data: Vec<f64>,
}

impl DensityMatrix {
    pub fn zeros(dim: usize) -> Self {
        Self {
            dim,
            data: vec![0.0; dim * dim],
        }
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.dim + c]
    }

    fn at(&mut self, r: usize, c: usize) -> &mut f64 {
        &mut self.data[r * self.dim + c]
    }

    pub fn trace(&self) -> f64 {
        (0..self.dim).map(|i| self.get(i, i)).sum()
    }

    /// `ρ → UρU†` for the permutation flipping `target` when `control` is set.
    fn cnot(&mut self, control: usize, target: usize) {
        let perm = |x: usize| {
            if x >> control & 1 == 1 {
                x ^ 1 << target
            } else {
                x
            }
        };
        let old = self.data.clone();
        let d = self.dim;
        for r in 0..d {
            let pr = perm(r);
            for c in 0..d {
                self.data[r * d + c] = old[pr * d + perm(c)];
            }
        }
    }

    fn hadamard(&mut self, q: usize) {
        let s = std::f64::consts::FRAC_1_SQRT_2;
        let d = self.dim;
        let bit = 1 << q;
        for r in (0..d).filter(|r| r & bit == 0) {
            for c in 0..d {
                let (a, b) = (self.get(r, c), self.get(r | bit, c));
                *self.at(r, c) = s * (a + b);
                *self.at(r | bit, c) = s * (a - b);
            }
        }
        for c in (0..d).filter(|c| c & bit == 0) {
            for r in 0..d {
                let (a, b) = (self.get(r, c), self.get(r, c | bit));
                *self.at(r, c) = s * (a + b);
                *self.at(r, c | bit) = s * (a - b);
            }
        }
    }
}

/// Kept-register bit of party `p` among `n`.
fn party_bit(n: usize, p: usize) -> usize {
    n - 1 - p
}

/// Two-qubit depolarised Bell state on basis `|kept stored⟩`.
fn werner(f: f64) -> [[f64; 4]; 4] {
    let off = (1.0 - f) / 3.0;
    let mut rho = [[0.0; 4]; 4];
    for (i, row) in rho.iter_mut().enumerate() {
        row[i] = off;
    }
    // |φ⁺⟩ = (|00⟩ + |11⟩)/√2 on indices 0 and 3
    let bell = (f - off) / 2.0;
    for &i in &[0, 3] {
        for &j in &[0, 3] {
            rho[i][j] += bell;
        }
    }
    rho
}

/// Product of the parties' Bell pairs on 2N qubits.
fn input_state(f: &[f64]) -> DensityMatrix {
    let n = f.len();
    let pairs: Vec<_> = f.iter().map(|&x| werner(x)).collect();
    let d = 1 << (2 * n);
    let local = |x: usize, p: usize| {
        let b = party_bit(n, p);
        (x >> b & 1) << 1 | (x >> (n + b) & 1)
    };
    let mut rho = DensityMatrix::zeros(d);
    for r in 0..d {
        for c in 0..d {
            rho.data[r * d + c] = (0..n).map(|p| pairs[p][local(r, p)][local(c, p)]).product();
        }
    }
    rho
}

/// Kept N-qubit state after the GHZ measurement and corrections.
pub fn ghz_measurement(f: &Fidelities) -> Result<DensityMatrix> {
    let n = f.f.len();
    if !(2..=ORACLE_MAX_PARTIES).contains(&n) {
        return Err(Error::UnsupportedPartyCount(n));
    }
    Fidelities::new(f.f.clone())?;
    let mut rho = input_state(&f.f);
    let stored = |p: usize| n + party_bit(n, p);
    for p in 1..n {
        rho.cnot(stored(0), stored(p));
    }
    rho.hadamard(stored(0));

    let k = 1 << n;
    let mut out = DensityMatrix::zeros(k);
    let a_bit = 1 << party_bit(n, 0);
    for outcome in 0..k {
        let flip: usize = (1..n)
            .filter(|&p| outcome >> party_bit(n, p) & 1 == 1)
            .map(|p| 1 << party_bit(n, p))
            .sum();
        let phase = outcome & a_bit != 0;
        for r in 0..k {
            for c in 0..k {
                let mut v = rho.get(outcome << n | r, outcome << n | c);
                if phase && ((r ^ c) & a_bit != 0) {
                    v = -v;
                }
                *out.at(r ^ flip, c ^ flip) += v;
            }
        }
    }
    Ok(out)
}

/// Weights of `|GHZ_i^±⟩ = (|i⟩ ± |2^N−1−i⟩)/√2` for `i < 2^{N−1}`, as
/// `(plus, minus)` pairs.
pub fn ghz_weights(rho: &DensityMatrix) -> Vec<(f64, f64)> {
    let k = rho.dim;
    (0..k / 2)
        .map(|i| {
            let j = k - 1 - i;
            let diag = (rho.get(i, i) + rho.get(j, j)) / 2.0;
            let coh = (rho.get(i, j) + rho.get(j, i)) / 2.0;
            (diag + coh, diag - coh)
        })
        .collect()
}

/// Largest off-diagonal element of `ρ` expressed in the GHZ basis.
pub fn ghz_off_diagonal(rho: &DensityMatrix) -> f64 {
    let k = rho.dim;
    let s = std::f64::consts::FRAC_1_SQRT_2;
    // basis vector b = 2i (+) or 2i+1 (−): components at i and k−1−i
    let vec_of = |b: usize| {
        let i = b / 2;
        let sign = if b.is_multiple_of(2) { 1.0 } else { -1.0 };
        [(i, s), (k - 1 - i, sign * s)]
    };
    let mut worst: f64 = 0.0;
    for b1 in 0..k {
        for b2 in 0..k {
            if b1 == b2 {
                continue;
            }
            let v: f64 = vec_of(b1)
                .iter()
                .flat_map(|&(r, x)| vec_of(b2).map(move |(c, y)| x * y * rho.get(r, c)))
                .sum();
            worst = worst.max(v.abs());
        }
    }
    worst
}

/// GHZ-diagonal state with the given `(plus, minus)` weights.
pub fn ghz_diagonal_state(weights: &[(f64, f64)]) -> DensityMatrix {
    let k = 2 * weights.len();
    let mut rho = DensityMatrix::zeros(k);
    for (i, &(plus, minus)) in weights.iter().enumerate() {
        let j = k - 1 - i;
        *rho.at(i, i) += (plus + minus) / 2.0;
        *rho.at(j, j) += (plus + minus) / 2.0;
        *rho.at(i, j) += (plus - minus) / 2.0;
        *rho.at(j, i) += (plus - minus) / 2.0;
    }
    rho
}

/// `⟨X^{⊗N}⟩`: X on every qubit maps `|r⟩` to `|r̄⟩`.
pub fn expect_x_all(rho: &DensityMatrix) -> f64 {
    let k = rho.dim;
    (0..k).map(|r| rho.get(r, k - 1 - r)).sum()
}

/// `⟨Z_A Z_{B_i}⟩` for party index `b ≥ 1`.
pub fn expect_zz(rho: &DensityMatrix, b: usize) -> f64 {
    let n = rho.dim.trailing_zeros() as usize;
    let (ba, bb) = (party_bit(n, 0), party_bit(n, b));
    (0..rho.dim)
        .map(|r| {
            let parity = (r >> ba ^ r >> bb) & 1;
            if parity == 0 {
                rho.get(r, r)
            } else {
                -rho.get(r, r)
            }
        })
        .sum()
}

/// QBERs from expectation values on a kept-register state.
pub fn qbers_of_state(rho: &DensityMatrix) -> QberSet {
    let n = rho.dim.trailing_zeros() as usize;
    QberSet {
        q_x: (1.0 - expect_x_all(rho)) / 2.0,
        q_ab: (1..n).map(|b| (1.0 - expect_zz(rho, b)) / 2.0).collect(),
    }
}

/// QBERs for any party count in `2..=5` straight from the circuit.
pub fn circuit_qbers(f: &Fidelities) -> Result<QberSet> {
    Ok(qbers_of_state(&ghz_measurement(f)?))
}

/// Three-party GHZ-diagonal weights from the circuit.
pub fn circuit_oracle_3(f: &Fidelities) -> Result<GhzDiagonal3> {
    if f.f.len() != 3 {
        return Err(Error::UnsupportedPartyCount(f.f.len()));
    }
    let w = ghz_weights(&ghz_measurement(f)?);
    Ok(GhzDiagonal3 {
        lambda0_plus: w[0].0,
        lambda0_minus: w[0].1,
        lambda1: (w[1].0 + w[1].1) / 2.0,
        lambda2: (w[2].0 + w[2].1) / 2.0,
        lambda3: (w[3].0 + w[3].1) / 2.0,
    })
}
