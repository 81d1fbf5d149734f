//! Threshold learning at the anchor date and timeline partitioning.

use chrono::{Duration, NaiveDate};
use serde::{Deserialize, Serialize};

use crate::corpus::{DailySeries, DateRange};
use crate::error::{Error, Result};
use crate::signal::{self, Kinetics};

/// Integer kinetic thresholds learned from the anchor date.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Thresholds {
    pub velocity_threshold: i64,
    pub acceleration_threshold: i64,
    pub anchor_date: NaiveDate,
}

impl Thresholds {
    /// `floor(velocity) + 1` and `floor(acceleration)`.
    pub fn from_anchor_values(velocity: f64, acceleration: f64, anchor_date: NaiveDate) -> Self {
        Thresholds {
            velocity_threshold: velocity.floor() as i64 + 1,
            acceleration_threshold: acceleration.floor() as i64,
            anchor_date,
        }
    }

    /// The joint boundary condition `0 < v < v_thr && a > a_thr`.
    pub fn admits(&self, velocity: f64, acceleration: f64) -> bool {
        velocity > 0.0
            && velocity < self.velocity_threshold as f64
            && acceleration > self.acceleration_threshold as f64
    }
}

/// Contiguous, inclusive span of the study window.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Phase {
    pub index: usize,
    pub start: NaiveDate,
    pub end: NaiveDate,
}

impl Phase {
    pub fn range(&self) -> DateRange {
        DateRange {
            start: self.start,
            end: self.end,
        }
    }

    pub fn days(&self) -> usize {
        self.range().days()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PhaseSet {
    pub window: DateRange,
    pub phases: Vec<Phase>,
}

impl PhaseSet {
    /// Phase containing `date`, if any.
    pub fn phase_of(&self, date: NaiveDate) -> Option<&Phase> {
        // phases are sorted; binary search on start
        let idx = self.phases.partition_point(|p| p.start <= date);
        let p = self.phases.get(idx.checked_sub(1)?)?;
        (date <= p.end).then_some(p)
    }

    pub fn iter(&self) -> impl Iterator<Item = &Phase> {
        self.phases.iter()
    }

    pub fn len(&self) -> usize {
        self.phases.len()
    }

    pub fn is_empty(&self) -> bool {
        self.phases.is_empty()
    }
}

pub fn learn_thresholds(kin: &Kinetics, anchor_date: NaiveDate) -> Result<Thresholds> {
    let (Some(v), Some(a)) = (
        kin.velocity.get(anchor_date),
        kin.acceleration.get(anchor_date),
    ) else {
        return Err(Error::InvalidInput(format!(
            "anchor {anchor_date} has no velocity/acceleration (defined from {} to {})",
            kin.acceleration.start,
            kin.acceleration
                .end()
                .map_or("-".to_string(), |d| d.to_string()),
        )));
    };
    Ok(Thresholds::from_anchor_values(v, a, anchor_date))
}

/// Anchor date followed by the first day of every later run of days that
/// satisfy the joint condition. A run that starts on the anchor itself is
/// absorbed by it.
pub fn detect_boundaries(kin: &Kinetics, thr: &Thresholds) -> Vec<NaiveDate> {
    let anchor = thr.anchor_date;
    let qualifies = |d: NaiveDate| match (kin.velocity.get(d), kin.acceleration.get(d)) {
        (Some(v), Some(a)) => thr.admits(v, a),
        _ => false,
    };
    let mut boundaries = vec![anchor];
    let mut previous = qualifies(anchor);
    for (date, _) in kin.acceleration.iter().filter(|(d, _)| *d > anchor) {
        let current = qualifies(date);
        if current && !previous {
            boundaries.push(date);
        }
        previous = current;
    }
    boundaries
}

/// Partition `window` at `boundaries`; the first boundary is the anchor.
pub fn build_phases(boundaries: &[NaiveDate], window: DateRange) -> Result<PhaseSet> {
    let Some(&anchor) = boundaries.first() else {
        return Err(Error::InvalidInput("no boundaries (anchor missing)".into()));
    };
    if let Some(bad) = boundaries.iter().find(|d| !window.contains(**d)) {
        return Err(Error::InvalidInput(format!(
            "boundary {bad} lies outside {}..{}",
            window.start, window.end
        )));
    }
    if boundaries.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::InvalidInput(
            "boundaries must be strictly increasing".into(),
        ));
    }

    let mut phases = Vec::with_capacity(boundaries.len() + 1);
    if anchor > window.start {
        phases.push(Phase {
            index: 0,
            start: window.start,
            end: anchor - Duration::days(1),
        });
    }
    for (i, &start) in boundaries.iter().enumerate() {
        let end = boundaries
            .get(i + 1)
            .map_or(window.end, |next| *next - Duration::days(1));
        phases.push(Phase {
            index: i + 1,
            start,
            end,
        });
    }
    Ok(PhaseSet { window, phases })
}

/// Everything the phase-detection stage produces for one volume series.
#[derive(Debug, Clone, PartialEq)]
pub struct PhaseDetection {
    pub kinetics: Kinetics,
    pub thresholds: Thresholds,
    pub boundaries: Vec<NaiveDate>,
    pub phases: PhaseSet,
}

/// Smooth (unless `cutoff` is `None`), differentiate, learn thresholds at the
/// anchor, detect boundaries and partition the window covered by `volume`.
pub fn detect_phases(
    volume: &DailySeries,
    anchor_date: NaiveDate,
    cutoff: Option<f64>,
) -> Result<PhaseDetection> {
    let window = DateRange::new(
        volume.start,
        volume
            .end()
            .ok_or_else(|| Error::InvalidInput("empty volume series".into()))?,
    )?;
    if !window.contains(anchor_date) {
        return Err(Error::InvalidInput(format!(
            "anchor {anchor_date} lies outside {}..{}",
            window.start, window.end
        )));
    }
    let smoothed = match cutoff {
        Some(c) => signal::lowpass(volume, c)?,
        None => volume.clone(),
    };
    let kinetics = signal::kinetics(&smoothed)?;
    let thresholds = learn_thresholds(&kinetics, anchor_date)?;
    let boundaries = detect_boundaries(&kinetics, &thresholds);
    let phases = build_phases(&boundaries, window)?;
    Ok(PhaseDetection {
        kinetics,
        thresholds,
        boundaries,
        phases,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn d(m: u32, day: u32) -> NaiveDate {
        NaiveDate::from_ymd_opt(2020, m, day).unwrap()
    }

    fn kin_from(velocity: Vec<f64>, acceleration: Vec<f64>) -> Kinetics {
        // source is irrelevant to threshold/boundary logic
        Kinetics {
            source: DailySeries::new(d(1, 1), vec![0.0; velocity.len() + 1]),
            velocity: DailySeries::new(d(1, 2), velocity),
            acceleration: DailySeries::new(d(1, 3), acceleration),
        }
    }

    #[test]
    fn floor_rules() {
        let t = Thresholds::from_anchor_values(273.6, 109.4, d(1, 20));
        assert_eq!((t.velocity_threshold, t.acceleration_threshold), (274, 109));
        let t = Thresholds::from_anchor_values(0.0, -3.2, d(1, 20));
        assert_eq!((t.velocity_threshold, t.acceleration_threshold), (1, -4));
    }

    #[test]
    fn anchor_must_have_acceleration() {
        let kin = kin_from(vec![1.0; 5], vec![0.0; 4]);
        assert!(learn_thresholds(&kin, d(1, 2)).is_err());
        assert!(learn_thresholds(&kin, d(1, 7)).is_err());
        assert!(learn_thresholds(&kin, d(1, 3)).is_ok());
    }

    #[test]
    fn no_qualifying_dates() {
        let kin = kin_from(vec![5.0; 10], vec![0.0; 9]);
        let thr = learn_thresholds(&kin, d(1, 4)).unwrap();
        assert_eq!(detect_boundaries(&kin, &thr), vec![d(1, 4)]);
    }

    #[test]
    fn consecutive_qualifying_days_collapse() {
        // velocity index i is dated Jan (2 + i); acceleration index i Jan (3 + i)
        let mut vel = vec![50.0; 20];
        let mut acc = vec![0.0; 19];
        // anchor Jan 4: v = 50, a = 10 -> thresholds (51, 10)
        acc[1] = 10.0;
        for day in 10..=12 {
            vel[day - 2] = 20.0;
            acc[day - 3] = 15.0;
        }
        let kin = kin_from(vel, acc);
        let thr = learn_thresholds(&kin, d(1, 4)).unwrap();
        assert_eq!(
            (thr.velocity_threshold, thr.acceleration_threshold),
            (51, 10)
        );
        assert_eq!(detect_boundaries(&kin, &thr), vec![d(1, 4), d(1, 10)]);
    }

    #[test]
    fn korea_partition() {
        let window = DateRange::new(d(1, 1), d(3, 27)).unwrap();
        let set = build_phases(&[d(1, 20), d(2, 13), d(3, 10)], window).unwrap();
        let spans: Vec<_> = set
            .phases
            .iter()
            .map(|p| (p.index, p.start, p.end))
            .collect();
        assert_eq!(
            spans,
            vec![
                (0, d(1, 1), d(1, 19)),
                (1, d(1, 20), d(2, 12)),
                (2, d(2, 13), d(3, 9)),
                (3, d(3, 10), d(3, 27)),
            ]
        );
    }

    #[test]
    fn iran_partition() {
        let window = DateRange::new(d(1, 1), d(3, 30)).unwrap();
        let set = build_phases(&[d(2, 19)], window).unwrap();
        assert_eq!(set.phases[0].end, d(2, 18));
        assert_eq!(
            (set.phases[1].start, set.phases[1].end),
            (d(2, 19), d(3, 30))
        );
    }

    #[test]
    fn anchor_at_window_start_is_single_phase() {
        let window = DateRange::new(d(1, 1), d(3, 30)).unwrap();
        let set = build_phases(&[d(1, 1)], window).unwrap();
        assert_eq!(set.len(), 1);
        assert_eq!(set.phases[0].index, 1);
        assert_eq!(set.phases[0].range(), window);
    }

    #[test]
    fn boundaries_are_validated() {
        let window = DateRange::new(d(1, 1), d(1, 31)).unwrap();
        assert!(build_phases(&[d(2, 1)], window).is_err());
        assert!(build_phases(&[d(1, 5), d(1, 5)], window).is_err());
        assert!(build_phases(&[], window).is_err());
    }

    #[test]
    fn phase_lookup() {
        let window = DateRange::new(d(1, 1), d(3, 27)).unwrap();
        let set = build_phases(&[d(1, 20), d(2, 13)], window).unwrap();
        assert_eq!(set.phase_of(d(1, 19)).unwrap().index, 0);
        assert_eq!(set.phase_of(d(1, 20)).unwrap().index, 1);
        assert_eq!(set.phase_of(d(3, 27)).unwrap().index, 2);
        assert!(set.phase_of(d(3, 28)).is_none());
        assert!(set.phase_of(d(12, 1)).is_none());
    }
}
