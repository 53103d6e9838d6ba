//! Memory decoherence, the tripartite post-measurement GHZ-diagonal state,
//! quantum bit error rates and the asymptotic secret fraction.

use serde::Serialize;

use crate::error::{Error, Result};

const RANGE_EPS: f64 = 1e-12;

/// Probability that a qubit stored `delta` rounds is still intact: `e^{−δ/τ}`.
pub fn white_noise_prob(delta: u32, tau: u32) -> f64 {
    (-f64::from(delta) / f64::from(tau)).exp()
}

/// Bell-state fidelity after `delta` rounds of depolarisation.
pub fn fidelity(delta: u32, tau: u32) -> f64 {
    0.25 + 0.75 * white_noise_prob(delta, tau)
}

/// Per-party fidelities `F_i ∈ [1/4, 1]`, party A first.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Fidelities {
    pub f: Vec<f64>,
}

impl Fidelities {
    pub fn new(f: Vec<f64>) -> Result<Self> {
        if let Some(&bad) = f
            .iter()
            .find(|&&x| !(0.25 - RANGE_EPS..=1.0 + RANGE_EPS).contains(&x))
        {
            return Err(Error::FidelityOutOfRange(bad));
        }
        Ok(Self { f })
    }

    pub fn from_ages(ages: &[u32], tau: u32) -> Self {
        Self {
            f: ages.iter().map(|&d| fidelity(d, tau)).collect(),
        }
    }

    /// White-noise parameters `p_i = (4F_i − 1)/3`.
    pub fn noise_params(&self) -> Vec<f64> {
        self.f.iter().map(|&f| (4.0 * f - 1.0) / 3.0).collect()
    }
}

/// GHZ-diagonal weights of the three-party output state. The `±` pairs of
/// indices 1, 2, 3 carry equal weight, so
/// `λ₀⁺ + λ₀⁻ + 2(λ₁ + λ₂ + λ₃) = 1`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GhzDiagonal3 {
    pub lambda0_plus: f64,
    pub lambda0_minus: f64,
    pub lambda1: f64,
    pub lambda2: f64,
    pub lambda3: f64,
}

impl GhzDiagonal3 {
    pub fn trace(&self) -> f64 {
        self.lambda0_plus + self.lambda0_minus + 2.0 * (self.lambda1 + self.lambda2 + self.lambda3)
    }

    /// Fidelity of the output state with `|GHZ₀⁺⟩`.
    pub fn fidelity(&self) -> f64 {
        self.lambda0_plus
    }

    pub fn to_array(&self) -> [f64; 5] {
        [
            self.lambda0_plus,
            self.lambda0_minus,
            self.lambda1,
            self.lambda2,
            self.lambda3,
        ]
    }

    /// All eight weights in `(0⁺, 0⁻, 1⁺, 1⁻, 2⁺, 2⁻, 3⁺, 3⁻)` order.
    pub fn weights(&self) -> [f64; 8] {
        [
            self.lambda0_plus,
            self.lambda0_minus,
            self.lambda1,
            self.lambda1,
            self.lambda2,
            self.lambda2,
            self.lambda3,
            self.lambda3,
        ]
    }
}

/// Closed-form GHZ-diagonal weights for fidelities `(F_A, F_B₁, F_B₂)`.
pub fn ghz_diag_lambdas(f: &Fidelities) -> Result<GhzDiagonal3> {
    let [fa, f1, f2] = f.f[..] else {
        return Err(Error::UnsupportedPartyCount(f.f.len()));
    };
    Fidelities::new(f.f.clone())?;
    Ok(lambdas_unchecked(fa, f1, f2))
}

pub(crate) fn lambdas_unchecked(fa: f64, f1: f64, f2: f64) -> GhzDiagonal3 {
    let (a1, a2, b12) = (fa * f1, fa * f2, f1 * f2);
    let all = fa * f1 * f2;
    GhzDiagonal3 {
        lambda0_plus: (4.0 - fa - f1 - f2 - 2.0 * (a1 + b12 + a2) + 32.0 * all) / 27.0,
        lambda0_minus: (5.0 - 5.0 * (fa + f1 + f2) + 14.0 * (a1 + b12 + a2) - 32.0 * all) / 27.0,
        lambda1: (f2 + 2.0 * a1 - 2.0 * a2 - 2.0 * b12 + 1.0) / 9.0,
        lambda2: (f1 - 2.0 * a1 - 2.0 * b12 + 2.0 * a2 + 1.0) / 9.0,
        lambda3: (fa - 2.0 * a1 - 2.0 * a2 + 2.0 * b12 + 1.0) / 9.0,
    }
}

/// X-basis error rate and one Z-basis error rate per party `B_i`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct QberSet {
    pub q_x: f64,
    pub q_ab: Vec<f64>,
}

impl QberSet {
    pub fn max_q_ab(&self) -> f64 {
        self.q_ab.iter().copied().fold(0.0, f64::max)
    }

    /// `Σ_i c_i · Q_i` over several sets with the same party count.
    pub fn weighted_sum<'a>(
        n_b: usize,
        terms: impl IntoIterator<Item = (f64, &'a QberSet)>,
    ) -> QberSet {
        let mut out = QberSet {
            q_x: 0.0,
            q_ab: vec![0.0; n_b],
        };
        for (c, q) in terms {
            out.q_x += c * q.q_x;
            for (o, v) in out.q_ab.iter_mut().zip(&q.q_ab) {
                *o += c * v;
            }
        }
        out
    }
}

pub fn qbers_3(lam: &GhzDiagonal3) -> QberSet {
    QberSet {
        q_x: (1.0 - (lam.lambda0_plus - lam.lambda0_minus)) / 2.0,
        q_ab: vec![
            2.0 * (lam.lambda2 + lam.lambda3),
            2.0 * (lam.lambda1 + lam.lambda3),
        ],
    }
}

/// Binary Shannon entropy in bits, with `h(0) = h(1) = 0`.
pub fn binary_entropy(p: f64) -> f64 {
    if p <= 0.0 || p >= 1.0 {
        return 0.0;
    }
    -p * p.log2() - (1.0 - p) * (1.0 - p).log2()
}

/// `r_∞ = max(0, 1 − h(Q_X) − max_i h(Q_ABᵢ))`.
pub fn secret_fraction(q: &QberSet) -> f64 {
    let worst = q.q_ab.iter().map(|&x| binary_entropy(x)).fold(0.0, f64::max);
    (1.0 - binary_entropy(q.q_x) - worst).max(0.0)
}

pub fn secret_key_rate(r_inf: f64, router_rate: f64) -> f64 {
    r_inf * router_rate
}
