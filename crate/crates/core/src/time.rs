//! Calendar months and the time windows events are sliced into.
//!
//! All months are UTC calendar months. Each month also has two half-month
//! windows: days 1-15 and day 16 through the end of the month.

use std::fmt;
use std::str::FromStr;

use chrono::NaiveDate;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::Error;

/// Day of month on which the second half-month window starts.
pub const SECOND_HALF_START_DAY: u32 = 16;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct MonthId {
    year: i32,
    month: u32,
}

impl MonthId {
    pub fn new(year: i32, month: u32) -> Result<Self, Error> {
        if !(1..=12).contains(&month) {
            return Err(Error::InvalidInput(format!("month {month} out of range 1-12")));
        }
        Ok(MonthId { year, month })
    }

    pub fn year(self) -> i32 {
        self.year
    }

    pub fn month(self) -> u32 {
        self.month
    }

    /// Months elapsed since January of year 0.
    fn ordinal(self) -> i64 {
        self.year as i64 * 12 + (self.month as i64 - 1)
    }

    fn from_ordinal(ord: i64) -> Self {
        MonthId {
            year: ord.div_euclid(12) as i32,
            month: ord.rem_euclid(12) as u32 + 1,
        }
    }

    pub fn succ(self) -> Self {
        self.offset(1)
    }

    pub fn pred(self) -> Self {
        self.offset(-1)
    }

    pub fn offset(self, months: i64) -> Self {
        Self::from_ordinal(self.ordinal() + months)
    }

    /// Signed number of months from `self` to `other`.
    pub fn months_until(self, other: MonthId) -> i64 {
        other.ordinal() - self.ordinal()
    }

    fn first_day(self) -> NaiveDate {
        NaiveDate::from_ymd_opt(self.year, self.month, 1).expect("valid month")
    }

    fn day_start_ms(date: NaiveDate) -> i64 {
        date.and_hms_opt(0, 0, 0)
            .expect("midnight")
            .and_utc()
            .timestamp_millis()
    }

    pub fn start_ms(self) -> i64 {
        Self::day_start_ms(self.first_day())
    }

    pub fn end_ms(self) -> i64 {
        self.succ().start_ms()
    }

    pub fn mid_ms(self) -> i64 {
        let mid = NaiveDate::from_ymd_opt(self.year, self.month, SECOND_HALF_START_DAY)
            .expect("every month has a 16th");
        Self::day_start_ms(mid)
    }

    /// The month containing the given epoch-millisecond instant.
    pub fn containing(ts_ms: i64) -> Self {
        let dt = chrono::DateTime::from_timestamp_millis(ts_ms).expect("timestamp in range");
        let d = dt.date_naive();
        MonthId {
            year: chrono::Datelike::year(&d),
            month: chrono::Datelike::month(&d),
        }
    }

    /// Inclusive range `first..=last` of months.
    pub fn range(first: MonthId, last: MonthId) -> impl Iterator<Item = MonthId> {
        (first.ordinal()..=last.ordinal()).map(MonthId::from_ordinal)
    }

    pub fn window(self) -> TimeWindow {
        TimeWindow::month(self)
    }
}

impl fmt::Display for MonthId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:04}-{:02}", self.year, self.month)
    }
}

impl FromStr for MonthId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bad = || Error::InvalidInput(format!("expected YYYY-MM, got {s:?}"));
        let (y, m) = s.split_once('-').ok_or_else(bad)?;
        if y.len() != 4 || m.len() != 2 {
            return Err(bad());
        }
        let year = y.parse().map_err(|_| bad())?;
        let month = m.parse().map_err(|_| bad())?;
        MonthId::new(year, month)
    }
}

impl Serialize for MonthId {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for MonthId {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum WindowKind {
    FullMonth,
    FirstHalf,
    SecondHalf,
    /// Arbitrary span, used for ad-hoc slicing.
    Custom,
}

impl fmt::Display for WindowKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            WindowKind::FullMonth => "full-month",
            WindowKind::FirstHalf => "first-half",
            WindowKind::SecondHalf => "second-half",
            WindowKind::Custom => "custom",
        })
    }
}

/// Half-open interval `[start, end)` in UTC epoch milliseconds.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct TimeWindow {
    pub start: i64,
    pub end: i64,
    pub kind: WindowKind,
}

impl TimeWindow {
    pub fn new(start: i64, end: i64, kind: WindowKind) -> Result<Self, Error> {
        if start >= end {
            return Err(Error::InvalidInput(format!(
                "window start {start} must precede end {end}"
            )));
        }
        Ok(TimeWindow { start, end, kind })
    }

    pub fn month(m: MonthId) -> Self {
        TimeWindow {
            start: m.start_ms(),
            end: m.end_ms(),
            kind: WindowKind::FullMonth,
        }
    }

    pub fn first_half(m: MonthId) -> Self {
        TimeWindow {
            start: m.start_ms(),
            end: m.mid_ms(),
            kind: WindowKind::FirstHalf,
        }
    }

    pub fn second_half(m: MonthId) -> Self {
        TimeWindow {
            start: m.mid_ms(),
            end: m.end_ms(),
            kind: WindowKind::SecondHalf,
        }
    }

    pub fn contains(&self, ts_ms: i64) -> bool {
        self.start <= ts_ms && ts_ms < self.end
    }
}
