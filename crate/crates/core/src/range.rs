//! Price bars, range decomposition and the up/down market regime rule.
//!
//! A bar's range splits into an upward part (high over open) and a downward
//! part (open over low), both measured in scaled log-price units. The regime
//! for period `t` is decided by counting, over the previous `l` periods, how
//! often the upward part was at least as large as the downward part.

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Default scale: ranges are reported as 100 x natural-log differences.
pub const DEFAULT_SCALE: f64 = 100.0;

/// One trading period's raw prices.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PriceBar {
    pub date: NaiveDate,
    pub open: f64,
    pub high: f64,
    pub low: f64,
    pub close: f64,
}

impl PriceBar {
    /// Checks positivity and the high/low envelope. `index` is only used
    /// for error reporting.
    pub fn validate(&self, index: usize) -> Result<()> {
        for (name, v) in [
            ("open", self.open),
            ("high", self.high),
            ("low", self.low),
            ("close", self.close),
        ] {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::RejectedInput {
                    index,
                    reason: format!("{name} price {v} on {} is not a positive number", self.date),
                });
            }
        }
        if self.high < self.low {
            return Err(Error::Invariant {
                index,
                reason: format!("high {} < low {} on {}", self.high, self.low, self.date),
            });
        }
        if self.low > self.open.min(self.close) || self.high < self.open.max(self.close) {
            return Err(Error::Invariant {
                index,
                reason: format!(
                    "open/close outside [low, high] on {} (o={}, h={}, l={}, c={})",
                    self.date, self.open, self.high, self.low, self.close
                ),
            });
        }
        Ok(())
    }
}

/// Range triple for one period. `r` is always stored as `ru + rd`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RangeObs {
    pub r: f64,
    pub ru: f64,
    pub rd: f64,
}

impl RangeObs {
    /// Builds an observation from its upward and downward components.
    pub fn from_parts(ru: f64, rd: f64) -> Result<Self> {
        if !(ru.is_finite() && rd.is_finite()) {
            return Err(Error::Numeric(format!("non-finite range component ({ru}, {rd})")));
        }
        if ru < 0.0 || rd < 0.0 {
            return Err(Error::Domain(format!("negative range component ({ru}, {rd})")));
        }
        Ok(Self { r: ru + rd, ru, rd })
    }

    /// True when the upward component is at least the downward one.
    #[inline]
    pub fn up_dominant(&self) -> bool {
        self.ru >= self.rd
    }
}

/// Market regime.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Regime {
    Up,
    Down,
}

impl Regime {
    /// Branch index used by the two-branch recursions (Up = 0, Down = 1).
    #[inline]
    pub fn index(self) -> usize {
        match self {
            Regime::Up => 0,
            Regime::Down => 1,
        }
    }

    pub fn from_index(i: usize) -> Self {
        if i == 0 {
            Regime::Up
        } else {
            Regime::Down
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            Regime::Up => "U",
            Regime::Down => "D",
        }
    }
}

/// Up/down dominance counts over a window of `l` periods.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RegimeCounts {
    cu: usize,
    cd: usize,
}

impl RegimeCounts {
    pub fn from_window(window: &[RangeObs]) -> Self {
        let cu = window.iter().filter(|o| o.up_dominant()).count();
        Self {
            cu,
            cd: window.len() - cu,
        }
    }

    pub fn up(&self) -> usize {
        self.cu
    }

    pub fn down(&self) -> usize {
        self.cd
    }

    pub fn window(&self) -> usize {
        self.cu + self.cd
    }

    /// Ties go to `Up`.
    pub fn regime(&self) -> Regime {
        if self.cu >= self.cd {
            Regime::Up
        } else {
            Regime::Down
        }
    }
}

/// Converts bars to scaled log ranges. Order and length are preserved.
pub fn extract_ranges(bars: &[PriceBar], scale: f64) -> Result<Vec<RangeObs>> {
    if !(scale.is_finite() && scale > 0.0) {
        return Err(Error::Argument(format!("scale must be positive, got {scale}")));
    }
    bars.iter()
        .enumerate()
        .map(|(i, bar)| {
            bar.validate(i)?;
            let lo = bar.open.ln();
            let ru = scale * (bar.high.ln() - lo);
            let rd = scale * (lo - bar.low.ln());
            Ok(RangeObs { r: ru + rd, ru, rd })
        })
        .collect()
}

/// Regime for the period following `history`, which must hold exactly `l`
/// observations ordered oldest to newest.
pub fn classify_regime(history: &[RangeObs], l: usize) -> Result<Regime> {
    if l < 1 {
        return Err(Error::Argument("regime window l must be at least 1".into()));
    }
    if history.len() != l {
        return Err(Error::Argument(format!(
            "regime history has {} observations, expected l = {l}",
            history.len()
        )));
    }
    Ok(RegimeCounts::from_window(history).regime())
}

/// Regimes for positions `l..ranges.len()`; element `i` is the regime of
/// period `l + i`, decided by periods `i..l + i`.
pub fn regime_path(ranges: &[RangeObs], l: usize) -> Result<Vec<Regime>> {
    if l < 1 {
        return Err(Error::Argument("regime window l must be at least 1".into()));
    }
    if ranges.len() < l {
        return Err(Error::Argument(format!(
            "series of length {} is shorter than regime window {l}",
            ranges.len()
        )));
    }
    let mut out = Vec::with_capacity(ranges.len() - l);
    let mut cu = ranges[..l].iter().filter(|o| o.up_dominant()).count();
    for t in l..ranges.len() {
        out.push(if 2 * cu >= l { Regime::Up } else { Regime::Down });
        cu += ranges[t].up_dominant() as usize;
        cu -= ranges[t - l].up_dominant() as usize;
    }
    Ok(out)
}

/// Branch indices (Up = 0, Down = 1) for every position `t` in
/// `from..until`, where `until` may be one past the end of `ranges` to get
/// the next-period regime. Requires `from >= l`.
pub(crate) fn regime_indices(ranges: &[RangeObs], l: usize, from: usize, until: usize) -> Vec<usize> {
    debug_assert!(from >= l && until <= ranges.len() + 1);
    let mut out = vec![0usize; until];
    if from >= until {
        return out;
    }
    let mut cu = ranges[from - l..from].iter().filter(|o| o.up_dominant()).count();
    for t in from..until {
        out[t] = if 2 * cu >= l { 0 } else { 1 };
        if t < ranges.len() {
            cu += ranges[t].up_dominant() as usize;
            cu -= ranges[t - l].up_dominant() as usize;
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn bar(open: f64, high: f64, low: f64, close: f64) -> PriceBar {
        PriceBar {
            date: NaiveDate::from_ymd_opt(2020, 1, 2).unwrap(),
            open,
            high,
            low,
            close,
        }
    }

    fn obs(ru: f64, rd: f64) -> RangeObs {
        RangeObs::from_parts(ru, rd).unwrap()
    }

    #[test]
    fn constant_price_has_zero_range() {
        let r = extract_ranges(&[bar(100.0, 100.0, 100.0, 100.0)], DEFAULT_SCALE).unwrap();
        assert_eq!(r[0], RangeObs { r: 0.0, ru: 0.0, rd: 0.0 });
    }

    #[test]
    fn upward_move_in_percent_log_units() {
        let high = 100.0 * 0.02f64.exp();
        let r = extract_ranges(&[bar(100.0, high, 100.0, 100.0)], DEFAULT_SCALE).unwrap();
        assert!((r[0].ru - 2.0).abs() < 1e-12);
        assert_eq!(r[0].rd, 0.0);
        assert!((r[0].r - 2.0).abs() < 1e-12);
    }

    #[test]
    fn rejects_bad_bars() {
        let err = extract_ranges(&[bar(1.0, 1.0, 1.0, 1.0), bar(0.0, 1.0, 1.0, 1.0)], 100.0)
            .unwrap_err();
        assert!(matches!(err, Error::RejectedInput { index: 1, .. }));
        let err = extract_ranges(&[bar(1.0, 0.9, 1.1, 1.0)], 100.0).unwrap_err();
        assert!(matches!(err, Error::Invariant { index: 0, .. }));
        assert!(extract_ranges(&[bar(1.0, 1.0, 1.0, 1.0)], 0.0).is_err());
    }

    #[test]
    fn single_day_window() {
        assert_eq!(classify_regime(&[obs(1.2, 0.4)], 1).unwrap(), Regime::Up);
        assert_eq!(classify_regime(&[obs(0.4, 1.2)], 1).unwrap(), Regime::Down);
    }

    #[test]
    fn three_down_of_five_is_down() {
        let h = [obs(0.1, 0.5), obs(0.9, 0.2), obs(0.1, 0.3), obs(0.4, 0.4), obs(0.0, 0.7)];
        assert_eq!(classify_regime(&h, 5).unwrap(), Regime::Down);
    }

    #[test]
    fn even_window_tie_is_up() {
        assert_eq!(classify_regime(&[obs(1.0, 0.5), obs(0.5, 1.0)], 2).unwrap(), Regime::Up);
        let c = RegimeCounts::from_window(&[obs(1.0, 0.5), obs(0.5, 1.0)]);
        assert_eq!((c.up(), c.down(), c.window()), (1, 1, 2));
    }

    #[test]
    fn classify_argument_errors() {
        assert!(classify_regime(&[], 0).is_err());
        assert!(classify_regime(&[obs(1.0, 0.0)], 2).is_err());
        assert!(regime_path(&[obs(1.0, 0.0)], 2).is_err());
    }

    #[test]
    fn all_up_days() {
        let s: Vec<_> = (0..10).map(|i| obs(1.0 + i as f64, 0.5)).collect();
        assert!(regime_path(&s, 3).unwrap().iter().all(|&r| r == Regime::Up));
    }

    #[test]
    fn alternating_with_unit_window() {
        let s: Vec<_> = (0..8)
            .map(|i| if i % 2 == 0 { obs(1.0, 0.2) } else { obs(0.2, 1.0) })
            .collect();
        let path = regime_path(&s, 1).unwrap();
        assert_eq!(path.len(), 7);
        for (i, r) in path.iter().enumerate() {
            let expect = if i % 2 == 0 { Regime::Up } else { Regime::Down };
            assert_eq!(*r, expect);
        }
    }

    #[test]
    fn regime_indices_include_next_period() {
        let s = [obs(1.0, 0.2), obs(0.2, 1.0), obs(0.1, 1.0)];
        let idx = regime_indices(&s, 1, 1, 4);
        assert_eq!(&idx[1..], &[0, 1, 1]);
    }
}
