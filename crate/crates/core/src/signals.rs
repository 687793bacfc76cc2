//! Excitation signals and the relative-error metric.
//!
//! Frequencies of the periodic signals are given as multiples of the reduced
//! frequency `f_r = V / c̄`, which follows the speed trajectory; phases are
//! integrated sample by sample so that ramps sweep smoothly.

use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{dim_err, Result, RomError};
use crate::scalar::{to_f64, Scalar};

/// Mean chord used for the reduced frequency, m.
pub const DEFAULT_CHORD: f64 = 0.29;

/// PRBS-9 period.
pub const PRBS9_PERIOD: usize = 511;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SignalSpec {
    Zero,
    /// Unit-shaped impulses, one per channel per segment, channel order
    /// shuffled by `seed` in every segment.
    ImpulseTrain {
        amplitude: f64,
        /// Samples between consecutive impulses.
        spacing: usize,
        seed: u64,
    },
    /// `a_i sin(2π ∫ c_i f_r dt)` on `channels[i]`.
    SineBank {
        channels: Vec<usize>,
        factors: Vec<f64>,
        amplitudes: Vec<f64>,
    },
    /// Linear sweep from `f0_factor·f_r` to `f1_factor·f_r` over the record.
    Chirp {
        channels: Vec<usize>,
        f0_factor: f64,
        f1_factor: f64,
        amplitude: f64,
    },
    /// ±amplitude maximal-length sequence, taps (9, 5), each chip held for
    /// `chip` samples; channels start at seed-dependent register shifts.
    Prbs9 {
        channels: Vec<usize>,
        amplitude: f64,
        chip: usize,
        seed: u64,
    },
    /// `½A(1 − cos(2π(t − t₀)/L))` for `t₀ ≤ t ≤ t₀ + L`.
    GustOneCosine {
        channel: usize,
        length_s: f64,
        amplitude: f64,
        start_s: f64,
    },
    /// Turbulence surrogate: white noise through a first-order low-pass
    /// filter with cut-off `bandwidth_hz`, scaled to standard deviation
    /// `intensity`.
    LowPassNoise {
        channel: usize,
        intensity: f64,
        bandwidth_hz: f64,
        seed: u64,
    },
}

/// Sampling context shared by all generators.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SignalContext {
    pub n_u: usize,
    /// Number of samples to generate.
    pub len: usize,
    pub dt: f64,
    pub chord: f64,
}

fn check_channels(channels: &[usize], n_u: usize) -> Result<()> {
    if let Some(&c) = channels.iter().find(|&&c| c >= n_u) {
        return Err(RomError::Parameter(format!("channel {c} out of range for n_u = {n_u}")));
    }
    Ok(())
}

fn check_positive(v: f64, what: &str) -> Result<()> {
    if !(v.is_finite() && v > 0.0) {
        return Err(RomError::Parameter(format!("{what} must be positive and finite")));
    }
    Ok(())
}

/// Reduced frequency per sample.
fn reduced_frequency(speed: &[f64], chord: f64) -> Result<Vec<f64>> {
    check_positive(chord, "chord")?;
    speed
        .iter()
        .map(|&v| {
            check_positive(v, "speed")?;
            Ok(v / chord)
        })
        .collect()
}

/// Cumulative phase `2π Σ f dt` with phase 0 at the first sample.
fn integrate_phase(freq: impl Iterator<Item = f64>, dt: f64) -> Vec<f64> {
    let mut phase = 0.0;
    freq.map(|f| {
        let p = phase;
        phase += 2.0 * std::f64::consts::PI * f * dt;
        p
    })
    .collect()
}

/// One period of the PRBS-9 sequence as ±1, register seeded with all ones.
pub fn prbs9_period() -> Vec<f64> {
    let mut reg: u16 = 0x1ff;
    (0..PRBS9_PERIOD)
        .map(|_| {
            let out = reg & 1;
            let fb = (reg ^ (reg >> 4)) & 1; // taps 9 and 5
            reg = (reg >> 1) | (fb << 8);
            if out == 1 {
                1.0
            } else {
                -1.0
            }
        })
        .collect()
}

/// One-cosine gust profile.
pub fn gust_one_cosine(length_s: f64, amplitude: f64, start_s: f64, dt: f64, len: usize) -> Result<Vec<f64>> {
    check_positive(length_s, "gust length")?;
    check_positive(dt, "dt")?;
    Ok((0..len)
        .map(|k| {
            let t = k as f64 * dt - start_s;
            if (0.0..=length_s).contains(&t) {
                0.5 * amplitude * (1.0 - (2.0 * std::f64::consts::PI * t / length_s).cos())
            } else {
                0.0
            }
        })
        .collect())
}

/// Generates the `n_u × len` input-deviation sequence for a speed
/// trajectory (one value per sample, or a single constant value).
pub fn generate(spec: &SignalSpec, ctx: &SignalContext, speed: &[f64]) -> Result<DMatrix<f64>> {
    let (n_u, len) = (ctx.n_u, ctx.len);
    check_positive(ctx.dt, "dt")?;
    if speed.len() != len && speed.len() != 1 {
        return dim_err(format!("speed has {} samples, expected 1 or {len}", speed.len()));
    }
    let speed_at = |k: usize| if speed.len() == 1 { speed[0] } else { speed[k] };
    let mut out = DMatrix::zeros(n_u, len);
    match spec {
        SignalSpec::Zero => {}
        SignalSpec::ImpulseTrain {
            amplitude,
            spacing,
            seed,
        } => {
            if *spacing == 0 {
                return Err(RomError::Parameter("impulse spacing must be at least 1".into()));
            }
            let mut rng = ChaCha8Rng::seed_from_u64(*seed);
            let mut order: Vec<usize> = (0..n_u).collect();
            let mut t = 0;
            'outer: loop {
                order.shuffle(&mut rng);
                for &c in &order {
                    if t >= len {
                        break 'outer;
                    }
                    out[(c, t)] = *amplitude;
                    t += spacing;
                }
            }
        }
        SignalSpec::SineBank {
            channels,
            factors,
            amplitudes,
        } => {
            check_channels(channels, n_u)?;
            if factors.len() != channels.len() || amplitudes.len() != channels.len() {
                return dim_err("sine bank: channels, factors and amplitudes must align");
            }
            let fr = reduced_frequency(&(0..len).map(speed_at).collect::<Vec<_>>(), ctx.chord)?;
            for ((&c, &fac), &amp) in channels.iter().zip(factors).zip(amplitudes) {
                check_positive(fac, "sine frequency factor")?;
                let phase = integrate_phase(fr.iter().map(|f| f * fac), ctx.dt);
                for (k, p) in phase.into_iter().enumerate() {
                    out[(c, k)] = amp * p.sin();
                }
            }
        }
        SignalSpec::Chirp {
            channels,
            f0_factor,
            f1_factor,
            amplitude,
        } => {
            check_channels(channels, n_u)?;
            check_positive(*f0_factor, "chirp start factor")?;
            check_positive(*f1_factor, "chirp end factor")?;
            let fr = reduced_frequency(&(0..len).map(speed_at).collect::<Vec<_>>(), ctx.chord)?;
            let span = (len.max(2) - 1) as f64;
            let phase = integrate_phase(
                fr.iter()
                    .enumerate()
                    .map(|(k, f)| f * (f0_factor + (f1_factor - f0_factor) * k as f64 / span)),
                ctx.dt,
            );
            for &c in channels {
                for (k, p) in phase.iter().enumerate() {
                    out[(c, k)] = amplitude * p.sin();
                }
            }
        }
        SignalSpec::Prbs9 {
            channels,
            amplitude,
            chip,
            seed,
        } => {
            check_channels(channels, n_u)?;
            if *chip == 0 || len < *chip {
                return Err(RomError::Parameter(format!(
                    "PRBS chip of {chip} samples does not fit a {len}-sample record"
                )));
            }
            let seq = prbs9_period();
            for (i, &c) in channels.iter().enumerate() {
                let shift = (seed.wrapping_mul(97).wrapping_add(73 * i as u64) % PRBS9_PERIOD as u64) as usize;
                for k in 0..len {
                    out[(c, k)] = amplitude * seq[(k / chip + shift) % PRBS9_PERIOD];
                }
            }
        }
        SignalSpec::GustOneCosine {
            channel,
            length_s,
            amplitude,
            start_s,
        } => {
            check_channels(&[*channel], n_u)?;
            let g = gust_one_cosine(*length_s, *amplitude, *start_s, ctx.dt, len)?;
            out.row_mut(*channel).copy_from_slice(&g);
        }
        SignalSpec::LowPassNoise {
            channel,
            intensity,
            bandwidth_hz,
            seed,
        } => {
            check_channels(&[*channel], n_u)?;
            check_positive(*bandwidth_hz, "noise bandwidth")?;
            let a = (-2.0 * std::f64::consts::PI * bandwidth_hz * ctx.dt).exp();
            let gain = intensity * ((1.0 + a) / (1.0 - a)).sqrt() * (1.0 - a);
            let mut rng = ChaCha8Rng::seed_from_u64(*seed);
            let mut y = 0.0;
            for k in 0..len {
                out[(*channel, k)] = y;
                let w: f64 = StandardNormal.sample(&mut rng);
                y = a * y + gain * w;
            }
        }
    }
    Ok(out)
}

/// `‖predicted − truth‖ / ‖truth‖` (Frobenius over all samples).
pub fn relative_error<T: Scalar>(predicted: &DMatrix<T>, truth: &DMatrix<T>) -> Result<f64> {
    if predicted.shape() != truth.shape() {
        return dim_err("predicted and true signals differ in shape");
    }
    let norm = to_f64(truth.norm());
    if norm == 0.0 {
        return Err(RomError::Numerical("relative error undefined for an all-zero truth".into()));
    }
    Ok(to_f64((predicted - truth).norm()) / norm)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ctx(n_u: usize, len: usize) -> SignalContext {
        SignalContext {
            n_u,
            len,
            dt: 0.006,
            chord: DEFAULT_CHORD,
        }
    }

    #[test]
    fn zero_signal() {
        let u = generate(&SignalSpec::Zero, &ctx(3, 10), &[30.0]).unwrap();
        assert!(u.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn prbs_period_balance_and_autocorrelation() {
        let s = prbs9_period();
        assert_eq!(s.iter().filter(|&&v| v > 0.0).count(), 256);
        assert_eq!(s.iter().filter(|&&v| v < 0.0).count(), 255);
        let r0: f64 = s.iter().map(|v| v * v).sum();
        for lag in [1, 2, 17, 255, 510] {
            let r: f64 = (0..PRBS9_PERIOD).map(|k| s[k] * s[(k + lag) % PRBS9_PERIOD]).sum();
            assert!((r / r0 + 1.0 / 511.0).abs() < 1e-15, "lag {lag}");
        }
    }

    #[test]
    fn prbs_two_level_and_chip_error() {
        for seed in 0..5 {
            let spec = SignalSpec::Prbs9 {
                channels: vec![0, 1],
                amplitude: 0.5,
                chip: 3,
                seed,
            };
            let u = generate(&spec, &ctx(2, 600), &[30.0]).unwrap();
            assert!(u.iter().all(|&v| v == 0.5 || v == -0.5));
            assert_ne!(u.row(0), u.row(1));
        }
        let spec = SignalSpec::Prbs9 {
            channels: vec![0],
            amplitude: 1.0,
            chip: 20,
            seed: 0,
        };
        assert!(matches!(generate(&spec, &ctx(1, 10), &[30.0]), Err(RomError::Parameter(_))));
    }

    #[test]
    fn sine_bank_frequency() {
        let f = (1.0 / (5.0 * std::f64::consts::PI)) * (30.0 / 0.29);
        assert!((f - 6.586).abs() < 1e-3);
        let spec = SignalSpec::SineBank {
            channels: vec![0, 2, 4],
            factors: vec![
                1.0 / (5.0 * std::f64::consts::PI),
                1.0 / (10.0 * std::f64::consts::PI),
                1.0 / (20.0 * std::f64::consts::PI),
            ],
            amplitudes: vec![1.0; 3],
        };
        let u = generate(&spec, &ctx(6, 200), &[30.0]).unwrap();
        for k in 0..200 {
            let t = k as f64 * 0.006;
            assert!((u[(0, k)] - (2.0 * std::f64::consts::PI * f * t).sin()).abs() < 1e-9);
        }
        assert!(u.row(1).iter().all(|&v| v == 0.0));
    }

    #[test]
    fn gust_shape() {
        let g = gust_one_cosine(0.5, 1.0, 0.0, 0.005, 201).unwrap();
        assert_eq!(g[0], 0.0);
        assert!((g[50] - 1.0).abs() < 1e-15);
        assert!(g[100].abs() < 1e-15);
        assert_eq!(g[150], 0.0);
        assert!(gust_one_cosine(0.0, 1.0, 0.0, 0.005, 10).is_err());
    }

    #[test]
    fn impulse_train_is_deterministic_and_complete() {
        let spec = SignalSpec::ImpulseTrain {
            amplitude: 1.0,
            spacing: 10,
            seed: 4,
        };
        let a = generate(&spec, &ctx(6, 120), &[30.0]).unwrap();
        let b = generate(&spec, &ctx(6, 120), &[30.0]).unwrap();
        assert_eq!(a, b);
        // one segment of 60 samples hits every channel once
        for c in 0..6 {
            assert_eq!(a.row(c).columns(0, 60).iter().filter(|&&v| v == 1.0).count(), 1);
        }
        let other = generate(
            &SignalSpec::ImpulseTrain {
                amplitude: 1.0,
                spacing: 10,
                seed: 5,
            },
            &ctx(6, 120),
            &[30.0],
        )
        .unwrap();
        assert_ne!(a, other);
    }

    #[test]
    fn low_pass_noise_is_seeded() {
        let spec = SignalSpec::LowPassNoise {
            channel: 1,
            intensity: 0.2,
            bandwidth_hz: 2.0,
            seed: 1,
        };
        let a = generate(&spec, &ctx(2, 5000), &[30.0]).unwrap();
        assert_eq!(a, generate(&spec, &ctx(2, 5000), &[30.0]).unwrap());
        let std = (a.row(1).iter().map(|v| v * v).sum::<f64>() / 5000.0).sqrt();
        assert!(std > 0.1 && std < 0.3, "std = {std}");
    }

    #[test]
    fn relative_error_cases() {
        let t = DMatrix::from_row_slice(1, 2, &[3.0, 4.0]);
        assert_eq!(relative_error(&t, &t).unwrap(), 0.0);
        assert_eq!(relative_error(&DMatrix::zeros(1, 2), &t).unwrap(), 1.0);
        let p = DMatrix::from_row_slice(1, 2, &[3.0, 1.0]);
        assert!((relative_error(&p, &t).unwrap() - 0.6).abs() < 1e-15);
        assert!(relative_error(&t, &DMatrix::zeros(1, 2)).is_err());
    }
}
