//! Sample/frame arithmetic shared by every stage.
//!
//! Timelines are stored as integer sample counts at the clock's sample rate;
//! the token grid runs at `frame_rate` with an integral number of samples
//! per frame. Seconds only appear at reporting boundaries.

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Default token rate of the codec grid.
pub const DEFAULT_FRAME_RATE: f64 = 12.5;
/// Default timeline sample rate.
pub const DEFAULT_SAMPLE_RATE: u32 = 24_000;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ClockError {
    #[error("frame rate must be positive, got {0}")]
    NonPositiveFrameRate(f64),
    #[error("sample rate must be positive")]
    ZeroSampleRate,
    #[error("sample rate {sample_rate} is not an integer multiple of frame rate {frame_rate}")]
    NonIntegralFrame { sample_rate: u32, frame_rate: f64 },
}

/// Bridges the sample-accurate timeline and the frame token grid.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FrameClock {
    frame_rate: f64,
    sample_rate: u32,
    samples_per_frame: u32,
}

impl Default for FrameClock {
    fn default() -> Self {
        Self { frame_rate: DEFAULT_FRAME_RATE, sample_rate: DEFAULT_SAMPLE_RATE, samples_per_frame: 1920 }
    }
}

impl FrameClock {
    pub fn new(frame_rate: f64, sample_rate: u32) -> Result<Self, ClockError> {
        if !frame_rate.is_finite() || frame_rate <= 0.0 {
            return Err(ClockError::NonPositiveFrameRate(frame_rate));
        }
        if sample_rate == 0 {
            return Err(ClockError::ZeroSampleRate);
        }
        let spf = f64::from(sample_rate) / frame_rate;
        let rounded = spf.round();
        if rounded < 1.0 || (rounded * frame_rate - f64::from(sample_rate)).abs() > 1e-9 {
            return Err(ClockError::NonIntegralFrame { sample_rate, frame_rate });
        }
        Ok(Self { frame_rate, sample_rate, samples_per_frame: rounded as u32 })
    }

    pub fn frame_rate(&self) -> f64 {
        self.frame_rate
    }

    pub fn sample_rate(&self) -> u32 {
        self.sample_rate
    }

    pub fn samples_per_frame(&self) -> u64 {
        u64::from(self.samples_per_frame)
    }

    /// Smallest frame range covering every sample of `interval`.
    pub fn to_frames(&self, interval: SampleInterval) -> FrameSpan {
        let spf = self.samples_per_frame();
        FrameSpan { start: (interval.start / spf) as usize, end: interval.end.div_ceil(spf) as usize }
    }

    /// Frame containing `sample`.
    pub fn frame_of(&self, sample: u64) -> usize {
        (sample / self.samples_per_frame()) as usize
    }

    pub fn frame_start_sample(&self, frame: usize) -> u64 {
        frame as u64 * self.samples_per_frame()
    }

    pub fn frame_to_seconds(&self, frame: usize) -> f64 {
        frame as f64 / self.frame_rate
    }

    pub fn samples_to_seconds(&self, samples: u64) -> f64 {
        samples as f64 / f64::from(self.sample_rate)
    }

    /// Rounds to the nearest sample.
    pub fn seconds_to_samples(&self, seconds: f64) -> u64 {
        (seconds * f64::from(self.sample_rate)).round().max(0.0) as u64
    }

    pub fn ms_to_samples(&self, ms: f64) -> u64 {
        self.seconds_to_samples(ms / 1000.0)
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
#[error("interval [{start}, {end}) is empty or reversed")]
pub struct IntervalError {
    pub start: u64,
    pub end: u64,
}

/// Half-open sample range `[start, end)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct SampleInterval {
    pub start: u64,
    pub end: u64,
}

impl SampleInterval {
    pub fn new(start: u64, end: u64) -> Result<Self, IntervalError> {
        if start < end {
            Ok(Self { start, end })
        } else {
            Err(IntervalError { start, end })
        }
    }

    pub fn is_valid(&self) -> bool {
        self.start < self.end
    }

    pub fn len(&self) -> u64 {
        self.end.saturating_sub(self.start)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn contains(&self, other: &SampleInterval) -> bool {
        self.start <= other.start && other.end <= self.end
    }

    pub fn contains_sample(&self, sample: u64) -> bool {
        self.start <= sample && sample < self.end
    }

    pub fn overlap(&self, other: &SampleInterval) -> u64 {
        overlap_duration(*self, *other)
    }

    pub fn shifted(&self, delta: i64) -> SampleInterval {
        SampleInterval { start: self.start.saturating_add_signed(delta), end: self.end.saturating_add_signed(delta) }
    }
}

/// Overlap length in samples; touching intervals do not overlap.
pub fn overlap_duration(a: SampleInterval, b: SampleInterval) -> u64 {
    a.end.min(b.end).saturating_sub(a.start.max(b.start))
}

/// Half-open frame index range.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct FrameSpan {
    pub start: usize,
    pub end: usize,
}

impl FrameSpan {
    pub fn new(start: usize, end: usize) -> Self {
        Self { start, end }
    }

    pub fn len(&self) -> usize {
        self.end.saturating_sub(self.start)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn contains(&self, frame: usize) -> bool {
        self.start <= frame && frame < self.end
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn iv(a: u64, b: u64) -> SampleInterval {
        SampleInterval::new(a, b).unwrap()
    }

    #[test]
    fn default_clock_has_1920_samples_per_frame() {
        let c = FrameClock::default();
        assert_eq!(c.samples_per_frame(), 1920);
        assert_eq!(FrameClock::new(12.5, 24_000).unwrap(), c);
        assert_eq!(c.samples_per_frame() as f64 * c.frame_rate(), 24_000.0);
    }

    #[test]
    fn rejects_bad_clocks() {
        assert!(FrameClock::new(0.0, 24_000).is_err());
        assert!(FrameClock::new(-1.0, 24_000).is_err());
        assert!(FrameClock::new(12.5, 0).is_err());
        assert!(FrameClock::new(7.0, 24_000).is_err());
    }

    #[test]
    fn frame_cover_examples() {
        let c = FrameClock::default();
        assert_eq!(c.to_frames(iv(0, 1920)), FrameSpan::new(0, 1));
        assert_eq!(c.to_frames(iv(0, 24_000)), FrameSpan::new(0, 13));
        assert_eq!(c.to_frames(iv(0, 1)), FrameSpan::new(0, 1));
    }

    #[test]
    fn frame_seconds_examples() {
        let c = FrameClock::default();
        assert_eq!(c.frame_to_seconds(0), 0.0);
        assert!((c.frame_to_seconds(1) - 0.08).abs() < 1e-12);
        assert!((c.frame_to_seconds(25) - 2.0).abs() < 1e-12);
    }

    #[test]
    fn overlap_examples() {
        assert_eq!(overlap_duration(iv(0, 100), iv(100, 200)), 0);
        assert_eq!(overlap_duration(iv(0, 100), iv(50, 200)), 50);
        assert_eq!(overlap_duration(iv(0, 100), iv(0, 100)), 100);
    }

    #[test]
    fn reversed_interval_rejected() {
        assert!(SampleInterval::new(5, 5).is_err());
        assert!(SampleInterval::new(6, 5).is_err());
    }

    proptest! {
        #[test]
        fn frames_cover_interval(start in 0u64..10_000_000, len in 1u64..1_000_000) {
            let c = FrameClock::default();
            let i = iv(start, start + len);
            let f = c.to_frames(i);
            prop_assert!(f.end > f.start);
            prop_assert!(f.start as u64 * 1920 <= i.start);
            prop_assert!(f.end as u64 * 1920 >= i.end);
            // tight: shrinking either side would uncover a sample
            prop_assert!((f.start as u64 + 1) * 1920 > i.start);
            prop_assert!((f.end as u64 - 1) * 1920 < i.end);
        }

        #[test]
        fn overlap_symmetric(a in 0u64..1000, al in 1u64..500, b in 0u64..1000, bl in 1u64..500) {
            let x = iv(a, a + al);
            let y = iv(b, b + bl);
            prop_assert_eq!(overlap_duration(x, y), overlap_duration(y, x));
            let disjoint_or_touching = x.end <= y.start || y.end <= x.start;
            prop_assert_eq!(overlap_duration(x, y) == 0, disjoint_or_touching);
        }
    }
}
