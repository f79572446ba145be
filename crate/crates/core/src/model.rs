//! Model coefficients, the uniform admissibility assumption, pointwise
//! reaction terms and the closed-form survivor bounds.

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("malformed parameters: {0}")]
    Structure(String),
    #[error("asymmetric interaction: a[{i}][{j}] = {aij} but a[{j}][{i}] = {aji}")]
    AsymmetricInteraction { i: usize, j: usize, aij: f64, aji: f64 },
    #[error("component index {index} out of range for {n} predator groups")]
    IndexOutOfRange { index: usize, n: usize },
    #[error("dimension must be 1 or 2, got {0}")]
    Dimension(usize),
}

/// Coefficients of the stationary predator/prey competition system.
///
/// Configuration files use the short symbolic keys (`D`, `lambda`, `mu`,
/// `d`, `omega`, `k`, `a`, `beta`, `delta`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelParams {
    /// Prey diffusivity `D`.
    #[serde(rename = "D")]
    pub prey_diffusion: f64,
    /// Prey growth rate `λ`.
    #[serde(rename = "lambda")]
    pub prey_growth: f64,
    /// Prey self-limitation `μ`.
    #[serde(rename = "mu")]
    pub prey_limitation: f64,
    /// Predator diffusivities `d_i`.
    #[serde(rename = "d")]
    pub diffusion: Vec<f64>,
    /// Predator mortalities `ω_i`.
    #[serde(rename = "omega")]
    pub mortality: Vec<f64>,
    /// Conversion rates `k_i`.
    #[serde(rename = "k")]
    pub conversion: Vec<f64>,
    /// Symmetric interaction matrix `a_ij`; the diagonal is never read.
    #[serde(rename = "a")]
    pub interaction: Vec<Vec<f64>>,
    /// Competition strength `β`.
    #[serde(rename = "beta")]
    pub competition: f64,
    /// Admissibility constant `δ ∈ (0, 1)`.
    pub delta: f64,
}

impl ModelParams {
    /// Parameters shared by every group: `N` identical predators with
    /// `a_ij = a` off the diagonal.
    #[allow(clippy::too_many_arguments)]
    pub fn homogeneous(
        n: usize,
        prey_diffusion: f64,
        prey_growth: f64,
        prey_limitation: f64,
        diffusion: f64,
        mortality: f64,
        conversion: f64,
        interaction: f64,
        competition: f64,
        delta: f64,
    ) -> Self {
        let interaction = (0..n)
            .map(|i| (0..n).map(|j| if i == j { 0.0 } else { interaction }).collect())
            .collect();
        Self {
            prey_diffusion,
            prey_growth,
            prey_limitation,
            diffusion: vec![diffusion; n],
            mortality: vec![mortality; n],
            conversion: vec![conversion; n],
            interaction,
            competition,
            delta,
        }
    }

    pub fn n_groups(&self) -> usize {
        self.diffusion.len()
    }

    pub fn with_competition(&self, beta: f64) -> Self {
        Self { competition: beta, ..self.clone() }
    }

    /// Net growth margin `λk_i − μω_i` of group `i`.
    pub fn margin(&self, i: usize) -> f64 {
        self.prey_growth * self.conversion[i] - self.prey_limitation * self.mortality[i]
    }

    /// `(λk_i − μω_i)/(d_i μ)`: the eigenvalue cap a surviving group's
    /// support must satisfy in the segregated limit.
    pub fn eigen_cap(&self, i: usize) -> f64 {
        self.margin(i) / (self.diffusion[i] * self.prey_limitation)
    }

    /// Shape and finiteness checks; symmetric interaction is required.
    pub fn check_structure(&self) -> Result<(), ModelError> {
        let n = self.n_groups();
        if n == 0 {
            return Err(ModelError::Structure("at least one predator group is required".into()));
        }
        for (name, v) in [("omega", &self.mortality), ("k", &self.conversion)] {
            if v.len() != n {
                return Err(ModelError::Structure(format!(
                    "{name} has {} entries, expected {n}",
                    v.len()
                )));
            }
        }
        if self.interaction.len() != n || self.interaction.iter().any(|row| row.len() != n) {
            return Err(ModelError::Structure(format!("interaction matrix must be {n}x{n}")));
        }
        let scalars = [
            ("D", self.prey_diffusion),
            ("lambda", self.prey_growth),
            ("mu", self.prey_limitation),
        ];
        for (name, v) in scalars {
            if !(v.is_finite() && v > 0.0) {
                return Err(ModelError::Structure(format!("{name} must be positive and finite, got {v}")));
            }
        }
        for (name, v) in [("d", &self.diffusion), ("omega", &self.mortality), ("k", &self.conversion)] {
            if let Some(x) = v.iter().find(|x| !(x.is_finite() && **x > 0.0)) {
                return Err(ModelError::Structure(format!("{name} entries must be positive and finite, got {x}")));
            }
        }
        if !(self.competition.is_finite() && self.competition >= 0.0) {
            return Err(ModelError::Structure(format!(
                "beta must be nonnegative and finite, got {}",
                self.competition
            )));
        }
        if !(self.delta > 0.0 && self.delta < 1.0) {
            return Err(ModelError::Structure(format!("delta must lie in (0,1), got {}", self.delta)));
        }
        for i in 0..n {
            for j in 0..n {
                if i == j {
                    continue;
                }
                let aij = self.interaction[i][j];
                if !(aij.is_finite() && aij > 0.0) {
                    return Err(ModelError::Structure(format!(
                        "a[{i}][{j}] must be positive and finite, got {aij}"
                    )));
                }
                let aji = self.interaction[j][i];
                if i < j && aij != aji {
                    return Err(ModelError::AsymmetricInteraction { i, j, aij, aji });
                }
            }
        }
        Ok(())
    }

    pub fn derived(&self) -> DerivedConstants {
        let delta = self.delta;
        let ratio_max = (0..self.n_groups())
            .map(|i| self.eigen_cap(i))
            .fold(f64::NEG_INFINITY, f64::max);
        DerivedConstants {
            u_cap: self.prey_growth / self.prey_limitation,
            s_cap: delta.powi(-5),
            wsum_cap: delta.powi(-6),
            eta: delta * delta,
            ratio_max,
        }
    }

    /// Stable 64-bit fingerprint of every coefficient (FNV-1a over the
    /// IEEE bit patterns).
    pub fn fingerprint(&self) -> u64 {
        let mut h: u64 = 0xcbf2_9ce4_8422_2325;
        let mut feed = |x: f64| {
            for b in x.to_bits().to_le_bytes() {
                h ^= u64::from(b);
                h = h.wrapping_mul(0x0100_0000_01b3);
            }
        };
        feed(self.n_groups() as f64);
        feed(self.prey_diffusion);
        feed(self.prey_growth);
        feed(self.prey_limitation);
        for v in [&self.diffusion, &self.mortality, &self.conversion] {
            v.iter().for_each(|&x| feed(x));
        }
        self.interaction.iter().flatten().for_each(|&x| feed(x));
        feed(self.competition);
        feed(self.delta);
        h
    }
}

/// Bounds implied by the admissibility constant.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DerivedConstants {
    /// `λ/μ`, the prey carrying capacity.
    pub u_cap: f64,
    /// `δ^-5`, bound on `D u + Σ d_i w_i`.
    pub s_cap: f64,
    /// `δ^-6`, bound on `Σ w_i`.
    pub wsum_cap: f64,
    /// `δ²`, below which a stationary prey density forces extinction.
    pub eta: f64,
    /// `max_i (λk_i − μω_i)/(d_i μ)`.
    pub ratio_max: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Violation {
    pub coefficient: String,
    pub index: Option<usize>,
    pub value: f64,
    pub message: String,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.message)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Admissibility {
    pub admissible: bool,
    pub violations: Vec<Violation>,
}

/// Checks the uniform assumption: every rate coefficient in `[δ, 1/δ]`
/// and `λk_i − μω_i > δ` for every group.
pub fn validate_uniform(params: &ModelParams) -> Result<Admissibility, ModelError> {
    params.check_structure()?;
    let delta = params.delta;
    let hi = 1.0 / delta;
    let mut violations = Vec::new();
    let mut range = |name: &str, index: Option<usize>, value: f64| {
        let label = match index {
            Some(i) => format!("{name}_{}", i + 1),
            None => name.to_string(),
        };
        if value < delta {
            violations.push(Violation {
                coefficient: name.to_string(),
                index,
                value,
                message: format!("{label}={value} < delta={delta}"),
            });
        } else if value > hi {
            violations.push(Violation {
                coefficient: name.to_string(),
                index,
                value,
                message: format!("{label}={value} > 1/delta={hi}"),
            });
        }
    };
    range("lambda", None, params.prey_growth);
    range("mu", None, params.prey_limitation);
    let n = params.n_groups();
    for i in 0..n {
        range("d", Some(i), params.diffusion[i]);
        range("omega", Some(i), params.mortality[i]);
        range("k", Some(i), params.conversion[i]);
    }
    for i in 0..n {
        for j in (i + 1)..n {
            let aij = params.interaction[i][j];
            let label = format!("a_{}{}", i + 1, j + 1);
            if aij < delta {
                violations.push(Violation {
                    coefficient: "a".into(),
                    index: Some(i * n + j),
                    value: aij,
                    message: format!("{label}={aij} < delta={delta}"),
                });
            } else if aij > hi {
                violations.push(Violation {
                    coefficient: "a".into(),
                    index: Some(i * n + j),
                    value: aij,
                    message: format!("{label}={aij} > 1/delta={hi}"),
                });
            }
        }
    }
    for i in 0..n {
        let m = params.margin(i);
        if m <= delta {
            violations.push(Violation {
                coefficient: "margin".into(),
                index: Some(i),
                value: m,
                message: format!("lambda*k_{0} - mu*omega_{0} = {m} <= delta = {delta}", i + 1),
            });
        }
    }
    Ok(Admissibility { admissible: violations.is_empty(), violations })
}

/// Reaction rate of group `i`: `(−ω_i + k_i u − β Σ_{j≠i} a_ij w_j) w_i`.
pub fn reaction_w(i: usize, u: f64, w: &[f64], params: &ModelParams) -> Result<f64, ModelError> {
    let n = params.n_groups();
    if i >= n || w.len() != n {
        return Err(ModelError::IndexOutOfRange { index: i, n });
    }
    Ok(reaction_w_unchecked(i, u, w, params))
}

#[inline]
pub(crate) fn reaction_w_unchecked(i: usize, u: f64, w: &[f64], params: &ModelParams) -> f64 {
    let rate = -params.mortality[i] + params.conversion[i] * u
        - params.competition * competition_pressure(i, w, params);
    rate * w[i]
}

/// `Σ_{j≠i} a_ij w_j`.
#[inline]
pub(crate) fn competition_pressure(i: usize, w: &[f64], params: &ModelParams) -> f64 {
    let row = &params.interaction[i];
    w.iter()
        .enumerate()
        .filter(|&(j, _)| j != i)
        .map(|(j, &wj)| row[j] * wj)
        .sum()
}

/// Prey reaction rate `(λ − μu − Σ k_i w_i) u`.
pub fn reaction_u(u: f64, w: &[f64], params: &ModelParams) -> f64 {
    let consumption: f64 = w.iter().zip(&params.conversion).map(|(wi, ki)| ki * wi).sum();
    (params.prey_growth - params.prey_limitation * u - consumption) * u
}

/// The positive spatially constant equilibrium with only group `i`
/// present: `u* = ω_i/k_i`, `w_i* = (λk_i − μω_i)/k_i²`.
pub fn constant_single_species_state(
    params: &ModelParams,
    i: usize,
) -> Result<Option<(f64, f64)>, ModelError> {
    let n = params.n_groups();
    if i >= n {
        return Err(ModelError::IndexOutOfRange { index: i, n });
    }
    let margin = params.margin(i);
    if margin <= 0.0 {
        return Ok(None);
    }
    let k = params.conversion[i];
    Ok(Some((params.mortality[i] / k, margin / (k * k))))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "mode")]
pub enum NhatMode {
    /// Relative Faber–Krahn route with a caller-supplied domain constant.
    FaberKrahn { c_omega: f64 },
    /// Weyl-law asymptotics for the Neumann Laplacian.
    Weyl,
}

/// Upper estimate on the number of groups surviving the segregated limit.
pub fn nhat_bound(
    params: &ModelParams,
    domain_measure: f64,
    dim: usize,
    mode: NhatMode,
) -> Result<f64, ModelError> {
    nhat_from_ratio(params.derived().ratio_max, domain_measure, dim, mode)
}

pub fn nhat_from_ratio(
    ratio_max: f64,
    domain_measure: f64,
    dim: usize,
    mode: NhatMode,
) -> Result<f64, ModelError> {
    let half = match dim {
        1 => 0.5,
        2 => 1.0,
        other => return Err(ModelError::Dimension(other)),
    };
    let scale = ratio_max.max(0.0).powf(half);
    Ok(match mode {
        NhatMode::FaberKrahn { c_omega } => c_omega * scale,
        NhatMode::Weyl => {
            // Γ(n/2 + 1) for n = 1, 2.
            let gamma = if dim == 1 { std::f64::consts::PI.sqrt() / 2.0 } else { 1.0 };
            domain_measure * scale / ((std::f64::consts::FRAC_PI_4).powf(half) * gamma)
        }
    })
}
