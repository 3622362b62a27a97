use std::fmt;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Orthonormal basis of L2[0,1] that a coefficient sequence refers to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Basis {
    /// φ_j(x) = √2 cos(πjx), j ≥ 1.
    Cosine,
    /// φ_j(x) = exp(2πijx), j ∈ ℤ.
    ComplexExponential,
    /// Haar wavelets ψ_m, with m = 2^i + j for level i and shift j.
    Haar,
}

impl fmt::Display for Basis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Basis::Cosine => "cosine",
            Basis::ComplexExponential => "complex-exponential",
            Basis::Haar => "haar",
        })
    }
}

/// A finite coefficient sequence θ together with its basis.
///
/// Real bases store θ_1..θ_J. The exponential basis stores θ_0..θ_J, and the
/// negative frequencies are implied by θ_{−j} = conj(θ_j), so the represented
/// function is always real.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "basis", rename_all = "kebab-case")]
pub enum Spectrum {
    Cosine { coeffs: Vec<f64> },
    ComplexExponential { coeffs: Vec<Complex64> },
    Haar { coeffs: Vec<f64> },
}

impl Spectrum {
    pub fn cosine(coeffs: Vec<f64>) -> Result<Self> {
        Spectrum::Cosine { coeffs }.validated()
    }

    pub fn haar(coeffs: Vec<f64>) -> Result<Self> {
        Spectrum::Haar { coeffs }.validated()
    }

    /// `coeffs[j]` holds θ_j for j = 0..=J.
    pub fn complex(coeffs: Vec<Complex64>) -> Result<Self> {
        Spectrum::ComplexExponential { coeffs }.validated()
    }

    /// Real coefficients θ_1..θ_J in a real basis. For the exponential basis
    /// the values become θ_{±j} and θ_0 = 0.
    pub fn from_real(basis: Basis, values: Vec<f64>) -> Result<Self> {
        match basis {
            Basis::Cosine => Spectrum::cosine(values),
            Basis::Haar => Spectrum::haar(values),
            Basis::ComplexExponential => {
                let coeffs = std::iter::once(Complex64::new(0.0, 0.0))
                    .chain(values.into_iter().map(|v| Complex64::new(v, 0.0)))
                    .collect();
                Spectrum::complex(coeffs)
            }
        }
    }

    /// The zero sequence of length J.
    pub fn zeros(basis: Basis, len: usize) -> Result<Self> {
        Spectrum::from_real(basis, vec![0.0; len])
    }

    pub fn validated(self) -> Result<Self> {
        match &self {
            Spectrum::Cosine { coeffs } | Spectrum::Haar { coeffs } => {
                if coeffs.is_empty() {
                    return Err(Error::invalid("spectrum must have at least one coefficient"));
                }
                if coeffs.iter().any(|c| !c.is_finite()) {
                    return Err(Error::invalid("spectrum coefficients must be finite"));
                }
            }
            Spectrum::ComplexExponential { coeffs } => {
                if coeffs.len() < 2 {
                    return Err(Error::invalid("exponential spectrum needs θ_0 and at least θ_1"));
                }
                if coeffs.iter().any(|c| !c.re.is_finite() || !c.im.is_finite()) {
                    return Err(Error::invalid("spectrum coefficients must be finite"));
                }
                if coeffs[0].im != 0.0 {
                    return Err(Error::invalid("θ_0 must be real for a real function"));
                }
            }
        }
        Ok(self)
    }

    pub fn basis(&self) -> Basis {
        match self {
            Spectrum::Cosine { .. } => Basis::Cosine,
            Spectrum::ComplexExponential { .. } => Basis::ComplexExponential,
            Spectrum::Haar { .. } => Basis::Haar,
        }
    }

    /// Truncation J: the largest stored positive frequency.
    pub fn len(&self) -> usize {
        match self {
            Spectrum::Cosine { coeffs } | Spectrum::Haar { coeffs } => coeffs.len(),
            Spectrum::ComplexExponential { coeffs } => coeffs.len() - 1,
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Energy carried by frequency j ≥ 1, counting both ±j in the
    /// exponential basis.
    pub fn energy(&self, j: usize) -> f64 {
        match self {
            Spectrum::Cosine { coeffs } | Spectrum::Haar { coeffs } => coeffs[j - 1].powi(2),
            Spectrum::ComplexExponential { coeffs } => 2.0 * coeffs[j].norm_sqr(),
        }
    }

    /// Per-frequency energies for j = 1..=J.
    pub fn energies(&self) -> Vec<f64> {
        (1..=self.len()).map(|j| self.energy(j)).collect()
    }

    /// ‖θ‖² over the full (two-sided where applicable) sequence.
    pub fn norm_sq(&self) -> f64 {
        let head = match self {
            Spectrum::ComplexExponential { coeffs } => coeffs[0].norm_sqr(),
            _ => 0.0,
        };
        head + self.energies().iter().sum::<f64>()
    }

    pub fn scaled(&self, factor: f64) -> Spectrum {
        match self {
            Spectrum::Cosine { coeffs } => Spectrum::Cosine {
                coeffs: coeffs.iter().map(|c| c * factor).collect(),
            },
            Spectrum::Haar { coeffs } => Spectrum::Haar {
                coeffs: coeffs.iter().map(|c| c * factor).collect(),
            },
            Spectrum::ComplexExponential { coeffs } => Spectrum::ComplexExponential {
                coeffs: coeffs.iter().map(|c| c * factor).collect(),
            },
        }
    }

    /// Coefficient-wise `self − other`; the shorter sequence is zero padded.
    pub fn sub(&self, other: &Spectrum) -> Result<Spectrum> {
        self.zip_with(other, |a, b| a - b, |a, b| a - b)
    }

    /// Coefficient-wise `self + other`; the shorter sequence is zero padded.
    pub fn add(&self, other: &Spectrum) -> Result<Spectrum> {
        self.zip_with(other, |a, b| a + b, |a, b| a + b)
    }

    fn zip_with(
        &self,
        other: &Spectrum,
        real: impl Fn(f64, f64) -> f64,
        complex: impl Fn(Complex64, Complex64) -> Complex64,
    ) -> Result<Spectrum> {
        fn pad<T: Copy + Default>(a: &[T], b: &[T], f: impl Fn(T, T) -> T) -> Vec<T> {
            (0..a.len().max(b.len()))
                .map(|i| {
                    let x = a.get(i).copied().unwrap_or_default();
                    let y = b.get(i).copied().unwrap_or_default();
                    f(x, y)
                })
                .collect()
        }
        match (self, other) {
            (Spectrum::Cosine { coeffs: a }, Spectrum::Cosine { coeffs: b }) => Ok(Spectrum::Cosine {
                coeffs: pad(a, b, real),
            }),
            (Spectrum::Haar { coeffs: a }, Spectrum::Haar { coeffs: b }) => Ok(Spectrum::Haar {
                coeffs: pad(a, b, real),
            }),
            (Spectrum::ComplexExponential { coeffs: a }, Spectrum::ComplexExponential { coeffs: b }) => {
                Ok(Spectrum::ComplexExponential {
                    coeffs: pad(a, b, complex),
                })
            }
            _ => Err(Error::BasisMismatch {
                expected: self.basis(),
                found: other.basis(),
            }),
        }
    }

    /// Extends with zeros (or truncates) to truncation `len`.
    pub fn resized(&self, len: usize) -> Spectrum {
        match self {
            Spectrum::Cosine { coeffs } => {
                let mut c = coeffs.clone();
                c.resize(len, 0.0);
                Spectrum::Cosine { coeffs: c }
            }
            Spectrum::Haar { coeffs } => {
                let mut c = coeffs.clone();
                c.resize(len, 0.0);
                Spectrum::Haar { coeffs: c }
            }
            Spectrum::ComplexExponential { coeffs } => {
                let mut c = coeffs.clone();
                c.resize(len + 1, Complex64::new(0.0, 0.0));
                Spectrum::ComplexExponential { coeffs: c }
            }
        }
    }

    /// Real coefficients of a real basis.
    pub fn real_coeffs(&self) -> Result<&[f64]> {
        match self {
            Spectrum::Cosine { coeffs } | Spectrum::Haar { coeffs } => Ok(coeffs),
            Spectrum::ComplexExponential { .. } => Err(Error::BasisMismatch {
                expected: Basis::Cosine,
                found: Basis::ComplexExponential,
            }),
        }
    }

    /// θ_0..θ_J of the exponential basis.
    pub fn complex_coeffs(&self) -> Result<&[Complex64]> {
        match self {
            Spectrum::ComplexExponential { coeffs } => Ok(coeffs),
            other => Err(Error::BasisMismatch {
                expected: Basis::ComplexExponential,
                found: other.basis(),
            }),
        }
    }

    pub fn require_basis(&self, basis: Basis) -> Result<()> {
        if self.basis() == basis {
            Ok(())
        } else {
            Err(Error::BasisMismatch {
                expected: basis,
                found: self.basis(),
            })
        }
    }

    /// Evaluates f(x) = Σ θ_j φ_j(x).
    pub fn eval(&self, x: f64) -> f64 {
        match self {
            Spectrum::Cosine { coeffs } => {
                // cos((j+1)a) = 2cos(a)cos(ja) − cos((j−1)a)
                let a = std::f64::consts::PI * x;
                let c1 = a.cos();
                let (mut prev, mut cur) = (1.0, c1);
                let mut acc = 0.0;
                for &t in coeffs {
                    acc += t * cur;
                    let next = 2.0 * c1 * cur - prev;
                    prev = cur;
                    cur = next;
                }
                std::f64::consts::SQRT_2 * acc
            }
            Spectrum::ComplexExponential { coeffs } => {
                let step = Complex64::from_polar(1.0, 2.0 * std::f64::consts::PI * x);
                let mut w = step;
                let mut acc = 0.0;
                for t in &coeffs[1..] {
                    acc += (t * w).re;
                    w *= step;
                }
                coeffs[0].re + 2.0 * acc
            }
            Spectrum::Haar { coeffs } => {
                let mut acc = 0.0;
                let mut level_start = 1usize;
                while level_start <= coeffs.len() {
                    let scale = level_start as f64;
                    let pos = x * scale;
                    let shift = (pos.floor() as usize).min(level_start - 1);
                    let m = level_start + shift;
                    if m <= coeffs.len() {
                        let frac = pos - shift as f64;
                        let sign = if frac < 0.5 { 1.0 } else { -1.0 };
                        acc += coeffs[m - 1] * scale.sqrt() * sign;
                    }
                    level_start *= 2;
                }
                acc
            }
        }
    }
}

/// Power-law sequence θ_j = amplitude·j^{−decay}, j = 1..=len.
pub fn power_law(basis: Basis, len: usize, amplitude: f64, decay: f64) -> Result<Spectrum> {
    let values = (1..=len).map(|j| amplitude * (j as f64).powf(-decay)).collect();
    Spectrum::from_real(basis, values)
}
