//! Low-pass smoothing and discrete kinetics of daily series.
//!
//! The filter is a second-order Butterworth designed with the bilinear
//! transform and run forward then backward, so the output has no phase lag.
//! Edges are handled with even (mirror) reflection of `3 * ORDER` samples
//! and steady-state initial conditions, so constant input stays exact at the
//! boundaries and a Nyquist-rate oscillation continues into the padding.

use std::f64::consts::{FRAC_1_SQRT_2, PI};

use serde::Serialize;

use crate::corpus::DailySeries;
use crate::error::{Error, Result};

pub const ORDER: usize = 2;
pub const PAD: usize = 3 * ORDER;
/// Shortest series the zero-phase filter accepts; shorter input passes through.
pub const MIN_FILTER_LEN: usize = PAD + 1;
pub const DEFAULT_CUTOFF: f64 = 0.2;

/// Second-order low-pass section, `a[0] == 1`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Butterworth2 {
    pub b: [f64; 3],
    pub a: [f64; 3],
}

impl Butterworth2 {
    /// `cutoff` is a fraction of the Nyquist frequency, in `(0, 1)`.
    pub fn new(cutoff: f64) -> Result<Self> {
        if !(cutoff > 0.0 && cutoff < 1.0) {
            return Err(Error::InvalidInput(format!(
                "cutoff must lie in (0, 1), got {cutoff}"
            )));
        }
        // Prewarped analog cutoff for a sampling rate of 2 (Nyquist = 1).
        let k = (PI * cutoff / 2.0).tan();
        let k2 = k * k;
        let sqrt2 = 2.0 * FRAC_1_SQRT_2;
        let norm = 1.0 / (1.0 + sqrt2 * k + k2);
        let b0 = k2 * norm;
        Ok(Butterworth2 {
            b: [b0, 2.0 * b0, b0],
            a: [1.0, 2.0 * (k2 - 1.0) * norm, (1.0 - sqrt2 * k + k2) * norm],
        })
    }

    /// Initial state that makes a constant unit input produce a constant output.
    fn steady_state(&self) -> [f64; 2] {
        let [b0, b1, b2] = self.b;
        let [_, a1, a2] = self.a;
        let dc = (b0 + b1 + b2) / (1.0 + a1 + a2);
        let z1 = b2 - a2 * dc;
        [b1 - a1 * dc + z1, z1]
    }

    /// Single causal pass (transposed direct form II) starting from `state`.
    fn run(&self, input: &[f64], mut state: [f64; 2]) -> Vec<f64> {
        let [b0, b1, b2] = self.b;
        let [_, a1, a2] = self.a;
        input
            .iter()
            .map(|&x| {
                let y = b0 * x + state[0];
                state[0] = b1 * x - a1 * y + state[1];
                state[1] = b2 * x - a2 * y;
                y
            })
            .collect()
    }

    /// Forward-backward filtering. Requires `input.len() >= MIN_FILTER_LEN`.
    pub fn filtfilt(&self, input: &[f64]) -> Vec<f64> {
        let n = input.len();
        assert!(
            n >= MIN_FILTER_LEN,
            "series too short for zero-phase filtering"
        );
        let mut ext = Vec::with_capacity(n + 2 * PAD);
        ext.extend((1..=PAD).rev().map(|i| input[i]));
        ext.extend_from_slice(input);
        ext.extend((1..=PAD).map(|i| input[n - 1 - i]));

        let zi = self.steady_state();
        let fwd = self.run(&ext, zi.map(|z| z * ext[0]));
        let mut rev: Vec<f64> = fwd.into_iter().rev().collect();
        let y0 = rev[0];
        rev = self.run(&rev, zi.map(|z| z * y0));
        rev.reverse();
        rev[PAD..PAD + n].to_vec()
    }

    /// Magnitude of the single-pass frequency response at `freq`, given as a
    /// fraction of Nyquist.
    pub fn magnitude(&self, freq: f64) -> f64 {
        let w = PI * freq;
        let eval = |c: &[f64; 3]| {
            let re = c[0] + c[1] * w.cos() + c[2] * (2.0 * w).cos();
            let im = -(c[1] * w.sin() + c[2] * (2.0 * w).sin());
            (re * re + im * im).sqrt()
        };
        eval(&self.b) / eval(&self.a)
    }
}

/// Zero-phase second-order Butterworth smoothing of a daily series.
///
/// Series shorter than [`MIN_FILTER_LEN`] are returned unchanged with a warning.
pub fn lowpass(series: &DailySeries, cutoff: f64) -> Result<DailySeries> {
    let filter = Butterworth2::new(cutoff)?;
    if series.len() < MIN_FILTER_LEN {
        log::warn!(
            "series of {} days is too short to smooth (need {MIN_FILTER_LEN}); passing through",
            series.len()
        );
        return Ok(series.clone());
    }
    Ok(DailySeries::new(
        series.start,
        filter.filtfilt(&series.values),
    ))
}

/// First and second daily differences of a volume series.
///
/// `velocity` starts one day after `source`, `acceleration` two days after,
/// so each value is dated to the later of the days it differences.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Kinetics {
    pub source: DailySeries,
    pub velocity: DailySeries,
    pub acceleration: DailySeries,
}

fn diff(values: &[f64]) -> Vec<f64> {
    values.windows(2).map(|w| w[1] - w[0]).collect()
}

pub fn kinetics(series: &DailySeries) -> Result<Kinetics> {
    if series.len() < 3 {
        return Err(Error::InvalidInput(format!(
            "kinetics need at least 3 days, got {}",
            series.len()
        )));
    }
    let velocity = diff(&series.values);
    let acceleration = diff(&velocity);
    Ok(Kinetics {
        velocity: DailySeries::new(series.date_at(1), velocity),
        acceleration: DailySeries::new(series.date_at(2), acceleration),
        source: series.clone(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use chrono::NaiveDate;
    use proptest::prelude::*;

    fn series(values: Vec<f64>) -> DailySeries {
        DailySeries::new(NaiveDate::from_ymd_opt(2020, 1, 1).unwrap(), values)
    }

    #[test]
    fn constant_series_is_preserved() {
        let out = lowpass(&series(vec![5.0; 8]), 0.2).unwrap();
        assert_eq!(out.len(), 8);
        for v in out.values {
            assert!((v - 5.0).abs() < 1e-9, "{v}");
        }
    }

    #[test]
    fn nyquist_is_suppressed() {
        let input: Vec<f64> = (0..60).map(|i| (i % 2) as f64).collect();
        let out = lowpass(&series(input), 0.2).unwrap();
        let mean = out.values.iter().sum::<f64>() / out.len() as f64;
        let amp = out
            .values
            .iter()
            .map(|v| (v - mean).abs())
            .fold(0.0, f64::max);
        assert!(amp < 0.05 * 0.5, "residual amplitude {amp}");
    }

    #[test]
    fn impulse_response_is_symmetric() {
        let mut input = vec![0.0; 101];
        input[50] = 1.0;
        let out = lowpass(&series(input), 0.2).unwrap().values;
        for k in 1..=50 {
            assert!((out[50 - k] - out[50 + k]).abs() < 1e-9, "lag {k}");
        }
    }

    #[test]
    fn short_series_passes_through() {
        let s = series(vec![1.0, 4.0, 2.0, 8.0, 5.0, 7.0]);
        assert_eq!(lowpass(&s, 0.2).unwrap(), s);
    }

    #[test]
    fn cutoff_must_be_fractional() {
        let s = series(vec![1.0; 10]);
        assert!(lowpass(&s, 0.0).is_err());
        assert!(lowpass(&s, 1.0).is_err());
        assert!(lowpass(&s, -0.3).is_err());
    }

    #[test]
    fn magnitude_matches_closed_form() {
        // |H|^2 = 1 / (1 + (tan(pi f / 2) / tan(pi fc / 2))^4) for the bilinear design.
        let f = Butterworth2::new(0.2).unwrap();
        for &freq in &[0.0, 0.1, 0.2, 0.35, 0.6, 0.9] {
            let ratio = (PI * freq / 2.0).tan() / (PI * 0.2 / 2.0).tan();
            let expected = (1.0 / (1.0 + ratio.powi(4))).sqrt();
            assert!((f.magnitude(freq) - expected).abs() < 1e-12, "f = {freq}");
        }
        assert!((f.magnitude(0.2) - FRAC_1_SQRT_2).abs() < 1e-12);
        assert!(f.magnitude(1.0) < 1e-12);
    }

    #[test]
    fn kinetics_of_constant() {
        let k = kinetics(&series(vec![10.0, 10.0, 10.0])).unwrap();
        assert_eq!(k.velocity.values, vec![0.0, 0.0]);
        assert_eq!(k.acceleration.values, vec![0.0]);
    }

    #[test]
    fn kinetics_direct_differences() {
        let k = kinetics(&series(vec![100.0, 374.0, 374.0])).unwrap();
        assert_eq!(k.velocity.values, vec![274.0, 0.0]);
        assert_eq!(k.acceleration.values, vec![-274.0]);
        assert_eq!(
            k.velocity.start,
            NaiveDate::from_ymd_opt(2020, 1, 2).unwrap()
        );
        assert_eq!(
            k.acceleration.start,
            NaiveDate::from_ymd_opt(2020, 1, 3).unwrap()
        );
    }

    #[test]
    fn kinetics_needs_three_days() {
        assert!(kinetics(&series(vec![1.0, 2.0])).is_err());
    }

    proptest! {
        #[test]
        fn kinetics_is_linear(
            xs in prop::collection::vec(-1e3f64..1e3, 3..40),
            a in -5.0f64..5.0,
            b in -5.0f64..5.0,
        ) {
            let ys: Vec<f64> = xs.iter().rev().map(|v| v * 0.5 + 1.0).collect();
            let combo: Vec<f64> = xs.iter().zip(&ys).map(|(x, y)| a * x + b * y).collect();
            let kx = kinetics(&series(xs.clone())).unwrap();
            let ky = kinetics(&series(ys)).unwrap();
            let kc = kinetics(&series(combo)).unwrap();
            for i in 0..kc.velocity.len() {
                let expect = a * kx.velocity.values[i] + b * ky.velocity.values[i];
                prop_assert!((kc.velocity.values[i] - expect).abs() < 1e-9 * (1.0 + expect.abs()));
            }
            for i in 0..kc.acceleration.len() {
                let expect = a * kx.acceleration.values[i] + b * ky.acceleration.values[i];
                prop_assert!((kc.acceleration.values[i] - expect).abs() < 1e-9 * (1.0 + expect.abs()));
            }
        }

        #[test]
        fn velocity_telescopes(xs in prop::collection::vec(-1e4f64..1e4, 3..60)) {
            let k = kinetics(&series(xs.clone())).unwrap();
            let sum: f64 = k.velocity.values.iter().sum();
            prop_assert!((sum - (xs[xs.len() - 1] - xs[0])).abs() < 1e-9 * (1.0 + sum.abs()));
        }

        #[test]
        fn lowpass_keeps_length_and_scales(
            xs in prop::collection::vec(0f64..500.0, 1..80),
            c in 0.1f64..10.0,
        ) {
            let base = lowpass(&series(xs.clone()), 0.2).unwrap();
            let scaled = lowpass(&series(xs.iter().map(|v| v * c).collect()), 0.2).unwrap();
            prop_assert_eq!(base.len(), xs.len());
            for (a, b) in base.values.iter().zip(&scaled.values) {
                prop_assert!((a * c - b).abs() < 1e-9 * (1.0 + b.abs()));
            }
        }

        #[test]
        fn lowpass_is_shift_invariant_in_interior(
            xs in prop::collection::vec(0f64..500.0, 90..140),
            shift in 1usize..6,
        ) {
            // Shifting the input by `shift` days (padding the front with the
            // first value) shifts the output away from the edges.
            let mut shifted = vec![xs[0]; shift];
            shifted.extend_from_slice(&xs[..xs.len() - shift]);
            let a = lowpass(&series(xs.clone()), 0.2).unwrap().values;
            let b = lowpass(&series(shifted), 0.2).unwrap().values;
            let n = xs.len();
            // pole radius is ~0.64 at cutoff 0.2, so edge transients are
            // below 1e-7 of the signal scale after 40 samples
            let settle = 40;
            for i in (shift + settle)..(n - settle) {
                prop_assert!((b[i] - a[i - shift]).abs() < 1e-4,
                    "i = {} diff = {}", i, b[i] - a[i - shift]);
            }
        }
    }
}
