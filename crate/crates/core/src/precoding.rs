//! Transmit weight design.
//!
//! Convention: a user with channel `h` receives `Σ_n h_n w_n` from column `w`
//! (no conjugation on `h`). Conjugate focusing therefore uses `w ∝ conj(h)`,
//! which phase-aligns every element contribution at the focal point.
//!
//! The multi-user design maximizes the sum of Shannon rates with a weighted
//! MMSE alternating scheme. Every optimal column lies in the span of the
//! conjugated user channels, so the iterations run on K-dimensional
//! coordinates and the array size only enters through one Gram-Schmidt pass.

use nalgebra::{DMatrix, SymmetricEigen};
use num_complex::Complex64;

use crate::channel::{farfield_steering, ChannelVector};
use crate::error::{Error, Result};
use crate::geometry::{ArrayGeometry, Vec3};

/// Per-element complex weights, one column per user stream.
#[derive(Debug, Clone, PartialEq)]
pub struct Precoder {
    pub columns: Vec<Vec<Complex64>>,
    pub total_power: f64,
}

impl Precoder {
    /// `streams` all-zero columns of length `elements`.
    pub fn zeros(elements: usize, streams: usize) -> Self {
        Precoder {
            columns: vec![vec![Complex64::new(0.0, 0.0); elements]; streams],
            total_power: 0.0,
        }
    }

    pub fn streams(&self) -> usize {
        self.columns.len()
    }

    pub fn column(&self, k: usize) -> &[Complex64] {
        &self.columns[k]
    }

    /// Radiated power Σ_k ‖w_k‖².
    pub fn power(&self) -> f64 {
        self.columns.iter().map(|c| norm_sqr(c)).sum()
    }

    pub fn column_power(&self, k: usize) -> f64 {
        norm_sqr(&self.columns[k])
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OptimizerReport {
    pub iterations: usize,
    /// Sum spectral efficiency, bits/s/Hz, starting with the initial point.
    pub sum_rate_trace: Vec<f64>,
    pub converged: bool,
    pub tolerance: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OptimizerConfig {
    /// Stop once an iteration improves the sum rate by less than this.
    pub tolerance: f64,
    pub max_iterations: usize,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        OptimizerConfig {
            tolerance: 1e-5,
            max_iterations: 500,
        }
    }
}

fn norm_sqr(v: &[Complex64]) -> f64 {
    v.iter().map(|z| z.norm_sqr()).sum()
}

fn check_power(power: f64) -> Result<()> {
    if power.is_finite() && power > 0.0 {
        Ok(())
    } else {
        Err(Error::invalid(format!("power must be positive, got {power}")))
    }
}

/// Maximum-ratio (conjugate) focusing on a single channel.
///
/// Returns `w = √P · conj(h)/‖h‖`, so that `h·w = √P‖h‖` is real and positive.
pub fn conjugate_focus(channel: &ChannelVector, power: f64) -> Result<Precoder> {
    check_power(power)?;
    let norm = channel.norm_sqr().sqrt();
    if norm == 0.0 || !norm.is_finite() {
        return Err(Error::DegenerateChannel);
    }
    let scale = power.sqrt() / norm;
    Ok(Precoder {
        columns: vec![channel.gains.iter().map(|h| h.conj() * scale).collect()],
        total_power: power,
    })
}

/// Far-field beam steering: conjugate focusing on the plane-wave steering
/// vector, which gives every element amplitude `√(P/N)`.
pub fn steer(
    array: &ArrayGeometry,
    direction: Vec3,
    reference_distance: f64,
    frequency: f64,
    power: f64,
) -> Result<Precoder> {
    let a = farfield_steering(array, direction, reference_distance, frequency)?;
    conjugate_focus(&a, power)
}

/// Frequency-flat focusing for a wideband link: the center-frequency
/// conjugate weights, reused unchanged on every subcarrier.
pub fn frequency_flat_focus(channel_at_center: &ChannelVector, power: f64) -> Result<Precoder> {
    conjugate_focus(channel_at_center, power)
}

/// Multi-user beam steering toward one shared direction.
///
/// Every user gets the same unit steering beam; only the power split differs.
/// The split maximizes the sum rate predicted by the plane-wave model with
/// users at `reference_distances`, searched over a grid on the simplex. When
/// users share a direction the model sees fully collinear channels, and the
/// best split hands all power to the strongest user.
pub fn steer_multiuser(
    array: &ArrayGeometry,
    direction: Vec3,
    reference_distances: &[f64],
    frequency: f64,
    power: f64,
    noise_power: f64,
) -> Result<Precoder> {
    check_power(power)?;
    check_power(noise_power)?;
    if reference_distances.is_empty() {
        return Err(Error::invalid("at least one user is required"));
    }
    let unit = {
        let a = farfield_steering(array, direction, 1.0, frequency)?;
        conjugate_focus(&a, 1.0)?.columns.remove(0)
    };
    // array gain seen by each modeled user when fed the unit beam
    let gains = reference_distances
        .iter()
        .map(|&r| {
            let a = farfield_steering(array, direction, r, frequency)?;
            Ok(a.gains
                .iter()
                .zip(&unit)
                .map(|(h, w)| h * w)
                .sum::<Complex64>()
                .norm_sqr())
        })
        .collect::<Result<Vec<f64>>>()?;

    let k = gains.len();
    let steps = match k {
        1 => 1,
        2 => 1000,
        3 => 200,
        _ => 40,
    };
    let model_rate = |shares: &[usize]| -> f64 {
        let p: Vec<f64> = shares
            .iter()
            .map(|&s| power * s as f64 / steps as f64)
            .collect();
        let total: f64 = p.iter().sum();
        (0..k)
            .map(|i| {
                let sinr = p[i] * gains[i] / ((total - p[i]) * gains[i] + noise_power);
                (1.0 + sinr).log2()
            })
            .sum()
    };

    let mut best = (f64::NEG_INFINITY, vec![0usize; k]);
    let mut shares = vec![0usize; k];
    enumerate_compositions(&mut shares, 0, steps, &mut |s| {
        let r = model_rate(s);
        if r > best.0 {
            best = (r, s.to_vec());
        }
    });

    let columns = best
        .1
        .iter()
        .map(|&s| {
            let amp = (power * s as f64 / steps as f64).sqrt();
            unit.iter().map(|w| w * amp).collect()
        })
        .collect();
    Ok(Precoder {
        columns,
        total_power: power,
    })
}

/// Visits every way of splitting `remaining` units over `shares[idx..]`,
/// largest share for the earliest user first.
fn enumerate_compositions(
    shares: &mut [usize],
    idx: usize,
    remaining: usize,
    visit: &mut dyn FnMut(&[usize]),
) {
    if idx == shares.len() - 1 {
        shares[idx] = remaining;
        visit(shares);
        return;
    }
    for s in (0..=remaining).rev() {
        shares[idx] = s;
        enumerate_compositions(shares, idx + 1, remaining - s, visit);
    }
}

/// Orthonormal basis for the span of `vectors` (modified Gram-Schmidt, two
/// passes). Vectors that add less than `1e-10` of their own norm are dropped.
fn orthonormal_basis(vectors: &[Vec<Complex64>]) -> Vec<Vec<Complex64>> {
    let mut basis: Vec<Vec<Complex64>> = Vec::new();
    for v in vectors {
        let scale = norm_sqr(v).sqrt();
        if scale == 0.0 {
            continue;
        }
        let mut r = v.clone();
        for _ in 0..2 {
            for q in &basis {
                let proj: Complex64 = q.iter().zip(&r).map(|(a, b)| a.conj() * b).sum();
                for (ri, qi) in r.iter_mut().zip(q) {
                    *ri -= qi * proj;
                }
            }
        }
        let n = norm_sqr(&r).sqrt();
        if n > 1e-10 * scale {
            basis.push(r.into_iter().map(|z| z / n).collect());
        }
    }
    basis
}

/// Sum rate and per-user terms for coordinates `x` given effective channels
/// `c` (both as K-vectors in the reduced basis, noise normalized to one).
fn reduced_rates(c: &[Vec<Complex64>], x: &[Vec<Complex64>]) -> f64 {
    (0..c.len())
        .map(|k| {
            let mut signal = 0.0;
            let mut interference = 0.0;
            for (j, xj) in x.iter().enumerate() {
                let g = dot_h(&c[k], xj).norm_sqr();
                if j == k {
                    signal = g;
                } else {
                    interference += g;
                }
            }
            (1.0 + signal / (interference + 1.0)).log2()
        })
        .sum()
}

/// a^H b
fn dot_h(a: &[Complex64], b: &[Complex64]) -> Complex64 {
    a.iter().zip(b).map(|(x, y)| x.conj() * y).sum()
}

fn scale_to_power(x: &mut [Vec<Complex64>], power: f64) -> bool {
    let p: f64 = x.iter().map(|c| norm_sqr(c)).sum();
    if p == 0.0 || !p.is_finite() {
        return false;
    }
    let s = (power / p).sqrt();
    for col in x.iter_mut() {
        for z in col.iter_mut() {
            *z *= s;
        }
    }
    true
}

/// One weighted-MMSE transmit update; returns the new coordinates at full
/// power, or `None` if the update collapsed to zero.
fn wmmse_step(c: &[Vec<Complex64>], x: &[Vec<Complex64>], power: f64) -> Option<Vec<Vec<Complex64>>> {
    let k = c.len();
    let r = c[0].len();
    let mut m = DMatrix::<Complex64>::zeros(r, r);
    let mut rhs: Vec<Vec<Complex64>> = Vec::with_capacity(k);
    for (ck, k_idx) in c.iter().zip(0..) {
        let gains: Vec<Complex64> = x.iter().map(|xj| dot_h(ck, xj)).collect();
        let total: f64 = gains.iter().map(|g| g.norm_sqr()).sum::<f64>() + 1.0;
        let own = gains[k_idx];
        // MMSE receive scalar and the matching MSE weight
        let u = own / total;
        let mse = 1.0 - own.norm_sqr() / total;
        let weight = 1.0 / mse.max(f64::MIN_POSITIVE);
        let coeff = weight * u.norm_sqr();
        for i in 0..r {
            for j in 0..r {
                m[(i, j)] += ck[i] * ck[j].conj() * coeff;
            }
        }
        rhs.push(ck.iter().map(|z| z * u * weight).collect());
    }

    let eig = SymmetricEigen::new(m);
    let lambda_max = eig.eigenvalues.iter().cloned().fold(0.0_f64, f64::max);
    if lambda_max <= 0.0 {
        return None;
    }
    let keep: Vec<bool> = eig
        .eigenvalues
        .iter()
        .map(|&l| l > 1e-12 * lambda_max)
        .collect();
    // coefficients of each right-hand side in the eigenbasis
    let proj: Vec<Vec<Complex64>> = rhs
        .iter()
        .map(|b| {
            (0..r)
                .map(|i| {
                    if keep[i] {
                        (0..r).map(|n| eig.eigenvectors[(n, i)].conj() * b[n]).sum()
                    } else {
                        Complex64::new(0.0, 0.0)
                    }
                })
                .collect()
        })
        .collect();
    let radiated = |mu: f64| -> f64 {
        proj.iter()
            .map(|y| {
                y.iter()
                    .zip(eig.eigenvalues.iter())
                    .filter(|(_, &l)| l > 1e-12 * lambda_max)
                    .map(|(yi, &l)| yi.norm_sqr() / ((l + mu) * (l + mu)))
                    .sum::<f64>()
            })
            .sum()
    };

    let mu = if radiated(0.0) <= power {
        0.0
    } else {
        let total: f64 = proj.iter().map(|y| norm_sqr(y)).sum();
        let (mut lo, mut hi) = (0.0_f64, (total / power).sqrt());
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if radiated(mid) > power {
                lo = mid;
            } else {
                hi = mid;
            }
            if hi - lo <= 1e-15 * hi {
                break;
            }
        }
        hi
    };

    let mut next: Vec<Vec<Complex64>> = proj
        .iter()
        .map(|y| {
            (0..r)
                .map(|n| {
                    (0..r)
                        .filter(|&i| keep[i])
                        .map(|i| eig.eigenvectors[(n, i)] * y[i] / (eig.eigenvalues[i] + mu))
                        .sum()
                })
                .collect()
        })
        .collect();
    if scale_to_power(&mut next, power) {
        Some(next)
    } else {
        None
    }
}

/// Sum-rate maximizing multi-user precoder.
///
/// Starts from equal-power conjugate focusing on every user and alternates
/// MMSE receive scalars, MSE weights, and a power-constrained transmit update
/// (Lagrange multiplier found by bisection). Each accepted iterate is scaled
/// to the full budget, which can only raise every SINR. The recorded sum rate
/// never decreases; the loop stops once the gain per iteration falls below
/// `config.tolerance`.
///
/// Each returned column is rotated so its first nonzero weight is real and
/// positive.
pub fn sum_rate_precoder(
    channels: &[ChannelVector],
    power: f64,
    noise_power: f64,
    config: OptimizerConfig,
) -> Result<(Precoder, OptimizerReport)> {
    check_power(power)?;
    check_power(noise_power)?;
    if channels.is_empty() {
        return Err(Error::invalid("at least one user channel is required"));
    }
    let n = channels[0].len();
    if n == 0 || channels.iter().any(|h| h.len() != n) {
        return Err(Error::invalid("user channels must have equal, nonzero length"));
    }
    if !(config.tolerance.is_finite() && config.tolerance >= 0.0) {
        return Err(Error::invalid("tolerance must be non-negative"));
    }

    let sigma = noise_power.sqrt();
    let effective: Vec<Vec<Complex64>> = channels
        .iter()
        .map(|h| h.gains.iter().map(|g| g.conj() / sigma).collect())
        .collect();
    let basis = orthonormal_basis(&effective);
    if basis.is_empty() {
        return Err(Error::DegenerateChannel);
    }
    let coords: Vec<Vec<Complex64>> = effective
        .iter()
        .map(|a| basis.iter().map(|q| dot_h(q, a)).collect())
        .collect();

    // equal-power conjugate focusing over the users that can be reached
    let mut x: Vec<Vec<Complex64>> = coords
        .iter()
        .map(|c| {
            let nrm = norm_sqr(c).sqrt();
            c.iter()
                .map(|z| if nrm > 0.0 { z / nrm } else { Complex64::new(0.0, 0.0) })
                .collect()
        })
        .collect();
    scale_to_power(&mut x, power);

    let mut rate = reduced_rates(&coords, &x);
    let mut trace = vec![rate];
    let mut converged = false;
    let mut iterations = 0;
    while iterations < config.max_iterations {
        iterations += 1;
        let Some(next) = wmmse_step(&coords, &x, power) else {
            converged = true;
            break;
        };
        let next_rate = reduced_rates(&coords, &next);
        if !(next_rate >= rate) {
            // rounding-level regression: keep the previous point
            converged = true;
            break;
        }
        let gain = next_rate - rate;
        x = next;
        rate = next_rate;
        trace.push(rate);
        if gain < config.tolerance {
            converged = true;
            break;
        }
    }

    let columns = x
        .iter()
        .map(|xk| {
            let mut w: Vec<Complex64> = (0..n)
                .map(|e| basis.iter().zip(xk).map(|(q, c)| q[e] * c).sum())
                .collect();
            fix_global_phase(&mut w);
            w
        })
        .collect();
    let precoder = Precoder {
        columns,
        total_power: power,
    };
    Ok((
        precoder,
        OptimizerReport {
            iterations,
            sum_rate_trace: trace,
            converged,
            tolerance: config.tolerance,
        },
    ))
}

/// Rotates `w` so its first nonzero entry is real and positive.
fn fix_global_phase(w: &mut [Complex64]) {
    if let Some(first) = w.iter().find(|z| z.norm() > 0.0).copied() {
        let rot = first.conj() / first.norm();
        for z in w.iter_mut() {
            *z *= rot;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::nearfield_los;
    use crate::geometry::{build_upa, Carrier};
    use approx::assert_relative_eq;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn chan(gains: Vec<Complex64>) -> ChannelVector {
        ChannelVector {
            gains,
            frequency: 28e9,
            target: Vec3::new(0.0, 0.0, 1.0),
        }
    }

    #[test]
    fn single_element_focus() {
        let phi = 0.7_f64;
        let h = chan(vec![Complex64::from_polar(2e-4, phi)]);
        let p = conjugate_focus(&h, 0.01).unwrap();
        let w = p.columns[0][0];
        assert_relative_eq!(w.norm(), 0.1, max_relative = 1e-12);
        assert_relative_eq!(w.arg(), -phi, epsilon = 1e-12);
        let rx = h.gains[0] * w;
        assert_relative_eq!(rx.re, 0.1 * 2e-4, max_relative = 1e-12);
        assert!(rx.im.abs() < 1e-18);
    }

    #[test]
    fn focus_rejects_zero_channel_and_power() {
        assert!(matches!(
            conjugate_focus(&chan(vec![c(0.0, 0.0); 3]), 1.0),
            Err(Error::DegenerateChannel)
        ));
        assert!(conjugate_focus(&chan(vec![c(1.0, 0.0)]), 0.0).is_err());
    }

    #[test]
    fn boresight_steering_has_equal_phases_and_amplitudes() {
        let carrier = Carrier::new(28e9).unwrap();
        let a = build_upa(0.05, 0.03, 1.0, carrier, Vec3::ORIGIN).unwrap();
        let p = steer(&a, Vec3::new(0.0, 0.0, 1.0), 10.0, 28e9, 0.01).unwrap();
        let w0 = p.columns[0][0];
        let amp = (0.01 / a.len() as f64).sqrt();
        for w in &p.columns[0] {
            assert_relative_eq!(w.norm(), amp, max_relative = 1e-12);
            assert!((w - w0).norm() < 1e-15);
        }
    }

    #[test]
    fn optimizer_rejects_bad_input() {
        let cfg = OptimizerConfig::default();
        assert!(sum_rate_precoder(&[], 1.0, 1.0, cfg).is_err());
        let a = chan(vec![c(1.0, 0.0), c(0.0, 1.0)]);
        let b = chan(vec![c(1.0, 0.0)]);
        assert!(sum_rate_precoder(&[a.clone(), b], 1.0, 1.0, cfg).is_err());
        assert!(sum_rate_precoder(&[a], 1.0, 0.0, cfg).is_err());
        assert!(matches!(
            sum_rate_precoder(&[chan(vec![c(0.0, 0.0); 2])], 1.0, 1.0, cfg),
            Err(Error::DegenerateChannel)
        ));
    }

    #[test]
    fn orthogonal_users_decouple() {
        let h1 = chan(vec![c(1.0, 0.0), c(0.0, 1.0), c(0.0, 0.0)]);
        let h2 = chan(vec![c(0.0, 0.0), c(0.0, 0.0), c(0.5, -0.5)]);
        let (p, rep) = sum_rate_precoder(&[h1.clone(), h2.clone()], 2.0, 0.1, OptimizerConfig::default()).unwrap();
        assert!(rep.converged);
        for (k, h) in [h1, h2].iter().enumerate() {
            // column parallel to conj(h): |<conj h, w>| = ‖h‖‖w‖
            let w = &p.columns[k];
            let inner: Complex64 = h.gains.iter().zip(w).map(|(g, x)| g * x).sum();
            let nw = norm_sqr(w).sqrt();
            assert_relative_eq!(inner.norm(), h.norm_sqr().sqrt() * nw, max_relative = 1e-9);
        }
        let cross: Complex64 = p.columns[1].iter().zip(&[c(1.0, 0.0), c(0.0, 1.0), c(0.0, 0.0)]).map(|(w, g)| g * w).sum();
        assert!(cross.norm() < 1e-12);
        assert_relative_eq!(p.power(), 2.0, max_relative = 1e-9);
    }

    #[test]
    fn identical_users_are_still_served() {
        let h = chan(vec![c(1.0, 0.0), c(0.5, 0.5)]);
        let (p, rep) = sum_rate_precoder(&[h.clone(), h], 1.0, 0.01, OptimizerConfig::default()).unwrap();
        assert_relative_eq!(p.power(), 1.0, max_relative = 1e-9);
        assert!(rep.sum_rate_trace.windows(2).all(|w| w[1] >= w[0] - 1e-6));
    }

    #[test]
    fn columns_start_real_positive() {
        let h1 = chan(vec![c(0.3, 0.4), c(-1.0, 0.2), c(0.1, 0.1)]);
        let h2 = chan(vec![c(0.0, 1.0), c(0.2, 0.2), c(-0.5, 0.3)]);
        let (p, _) = sum_rate_precoder(&[h1, h2], 1.0, 0.05, OptimizerConfig::default()).unwrap();
        for col in &p.columns {
            let first = col.iter().find(|z| z.norm() > 0.0).unwrap();
            assert!(first.re > 0.0 && first.im.abs() < 1e-12);
        }
    }

    #[test]
    fn collinear_steering_gives_all_power_to_nearest_user() {
        let carrier = Carrier::new(28e9).unwrap();
        let a = build_upa(0.05, 0.05, 1.0, carrier, Vec3::ORIGIN).unwrap();
        let p = steer_multiuser(&a, Vec3::new(0.0, 0.0, 1.0), &[8.0, 22.0], 28e9, 0.01, 4e-13).unwrap();
        assert_relative_eq!(p.column_power(0), 0.01, max_relative = 1e-12);
        assert_eq!(p.column_power(1), 0.0);
    }

    #[test]
    fn compositions_cover_simplex() {
        let mut count = 0;
        let mut shares = vec![0; 3];
        enumerate_compositions(&mut shares, 0, 4, &mut |s| {
            assert_eq!(s.iter().sum::<usize>(), 4);
            count += 1;
        });
        assert_eq!(count, 15);
    }

    #[test]
    fn single_user_on_real_array_matches_mrt() {
        let carrier = Carrier::new(28e9).unwrap();
        let a = build_upa(0.1, 0.05, 1.0, carrier, Vec3::ORIGIN).unwrap();
        let h = nearfield_los(&a, Vec3::new(0.1, 0.0, 3.0), 28e9).unwrap();
        let noise = 4e-13;
        let (_, rep) = sum_rate_precoder(std::slice::from_ref(&h), 0.01, noise, OptimizerConfig::default()).unwrap();
        let closed = (1.0 + 0.01 * h.norm_sqr() / noise).log2();
        assert!((rep.sum_rate_trace.last().unwrap() - closed).abs() < 1e-6);
    }
}
