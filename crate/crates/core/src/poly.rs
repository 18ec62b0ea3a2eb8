//! Real polynomials stored in a shifted power basis.
//!
//! A [`Polynomial`] is `p(x) = Σ c[k] · (x − origin)^k`. Keeping the origin
//! near the data (≈1500 nm, ≈2000 ns) avoids the catastrophic cancellation
//! that plain ascending coefficients suffer at those magnitudes, and makes an
//! argument shift `p(x + δ)` an exact change of origin.

use alloc::vec;
use alloc::vec::Vec;

use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct Polynomial {
    origin: f64,
    coeffs: Vec<f64>,
}

impl Polynomial {
    /// Polynomial from ascending coefficients in plain powers of `x`.
    pub fn from_ascending(coeffs: Vec<f64>) -> Self {
        Self::centered(0.0, coeffs)
    }

    /// Polynomial from ascending coefficients in powers of `x - origin`.
    pub fn centered(origin: f64, mut coeffs: Vec<f64>) -> Self {
        if coeffs.is_empty() {
            coeffs.push(0.0);
        }
        Polynomial { origin, coeffs }
    }

    pub fn origin(&self) -> f64 {
        self.origin
    }

    /// Coefficients in powers of `x - origin`.
    pub fn centered_coefficients(&self) -> &[f64] {
        &self.coeffs
    }

    /// Nominal degree (length of the coefficient list minus one).
    pub fn degree(&self) -> usize {
        self.coeffs.len() - 1
    }

    pub fn eval(&self, x: f64) -> f64 {
        let y = x - self.origin;
        self.coeffs.iter().rev().fold(0.0, |acc, &c| acc * y + c)
    }

    pub fn derivative(&self) -> Polynomial {
        let coeffs = if self.coeffs.len() <= 1 {
            vec![0.0]
        } else {
            self.coeffs
                .iter()
                .enumerate()
                .skip(1)
                .map(|(k, &c)| k as f64 * c)
                .collect()
        };
        Polynomial {
            origin: self.origin,
            coeffs,
        }
    }

    /// Same polynomial expressed around `new_origin` (Taylor shift).
    pub fn recentered(&self, new_origin: f64) -> Polynomial {
        // p(x) = q(x - new_origin) with x - origin = (x - new_origin) + h.
        let h = new_origin - self.origin;
        let mut c = self.coeffs.clone();
        let n = c.len();
        for i in 0..n {
            for j in (i..n - 1).rev() {
                c[j] += h * c[j + 1];
            }
        }
        Polynomial {
            origin: new_origin,
            coeffs: c,
        }
    }

    /// Ascending coefficients in plain powers of `x`.
    pub fn ascending(&self) -> Vec<f64> {
        if self.origin == 0.0 {
            self.coeffs.clone()
        } else {
            self.recentered(0.0).coeffs
        }
    }

    /// `q(x) = p(x + delta)`.
    pub fn with_shifted_argument(&self, delta: f64) -> Polynomial {
        Polynomial {
            origin: self.origin - delta,
            coeffs: self.coeffs.clone(),
        }
    }

    pub fn is_finite(&self) -> bool {
        self.origin.is_finite() && self.coeffs.iter().all(|c| c.is_finite())
    }

    /// True when every coefficient above the constant term is zero.
    pub fn is_constant(&self) -> bool {
        self.coeffs.iter().skip(1).all(|&c| c == 0.0)
    }
}

/// Number of derivative samples used to certify monotonicity on a domain.
pub const MONOTONICITY_SAMPLES: usize = 1000;

/// Sign (`1.0` or `-1.0`) of `derivative` on `[lo, hi]`, certified by sampling
/// [`MONOTONICITY_SAMPLES`] points including both ends. A zero sample or a sign
/// change is reported as [`Error::NonMonotonic`] near the offending abscissa.
pub fn derivative_sign_on(derivative: &Polynomial, lo: f64, hi: f64) -> Result<f64> {
    let n = MONOTONICITY_SAMPLES;
    let mut sign = 0.0;
    for i in 0..n {
        let x = if i == n - 1 {
            hi
        } else {
            lo + (hi - lo) * i as f64 / (n - 1) as f64
        };
        let d = derivative.eval(x);
        if d == 0.0 || !d.is_finite() {
            return Err(Error::NonMonotonic { near: x });
        }
        if sign == 0.0 {
            sign = d.signum();
        } else if d.signum() != sign {
            return Err(Error::NonMonotonic { near: x });
        }
    }
    Ok(sign)
}

/// Least-squares polynomial of the given degree through `(x, y)` samples.
///
/// The abscissae are centred on their mean and scaled by their half-spread
/// before the normal equations are formed; the result is returned as a
/// polynomial centred on that mean, so no precision is lost converting back.
pub fn fit_least_squares(xs: &[f64], ys: &[f64], degree: usize) -> Result<Polynomial> {
    assert_eq!(xs.len(), ys.len(), "abscissa/ordinate length mismatch");
    let n = xs.len();
    let m = degree + 1;
    if n < m {
        return Err(Error::Underdetermined {
            points: n,
            degree,
        });
    }
    let mean = xs.iter().sum::<f64>() / n as f64;
    let half_spread = xs
        .iter()
        .map(|&x| (x - mean).abs())
        .fold(0.0_f64, f64::max);
    let scale = if half_spread > 0.0 { half_spread } else { 1.0 };

    // Normal equations A^T A b = A^T y in the scaled coordinate t.
    let mut ata = vec![0.0; m * m];
    let mut aty = vec![0.0; m];
    let mut powers = vec![0.0; 2 * m - 1];
    for (&x, &y) in xs.iter().zip(ys) {
        let t = (x - mean) / scale;
        let mut p = 1.0;
        for pw in powers.iter_mut() {
            *pw = p;
            p *= t;
        }
        for i in 0..m {
            aty[i] += powers[i] * y;
            for j in 0..m {
                ata[i * m + j] += powers[i + j];
            }
        }
    }
    let b = solve_dense(&mut ata, &mut aty, m)?;

    // Undo the scaling: b_k t^k = (b_k / s^k) (x - mean)^k.
    let mut s_pow = 1.0;
    let coeffs = b
        .iter()
        .map(|&bk| {
            let a = bk / s_pow;
            s_pow *= scale;
            a
        })
        .collect();
    Ok(Polynomial::centered(mean, coeffs))
}

/// Gaussian elimination with partial pivoting on a row-major `m × m` system.
fn solve_dense(a: &mut [f64], b: &mut [f64], m: usize) -> Result<Vec<f64>> {
    let norm = a.iter().fold(0.0_f64, |acc, v| acc.max(v.abs()));
    let tiny = norm * f64::EPSILON * m as f64;
    for col in 0..m {
        let pivot = (col..m)
            .max_by(|&i, &j| a[i * m + col].abs().total_cmp(&a[j * m + col].abs()))
            .unwrap_or(col);
        if a[pivot * m + col].abs() <= tiny {
            return Err(Error::SingularSystem);
        }
        if pivot != col {
            for k in 0..m {
                a.swap(pivot * m + k, col * m + k);
            }
            b.swap(pivot, col);
        }
        for row in col + 1..m {
            let f = a[row * m + col] / a[col * m + col];
            if f == 0.0 {
                continue;
            }
            for k in col..m {
                a[row * m + k] -= f * a[col * m + k];
            }
            b[row] -= f * b[col];
        }
    }
    let mut x = vec![0.0; m];
    for row in (0..m).rev() {
        let mut acc = b[row];
        for k in row + 1..m {
            acc -= a[row * m + k] * x[k];
        }
        x[row] = acc / a[row * m + row];
    }
    Ok(x)
}
