use std::fmt;
use std::str::FromStr;

use chrono::{Datelike, NaiveDate};
use serde::{Deserialize, Deserializer, Serialize, Serializer};

/// A Gregorian calendar date, serialized as ISO-8601 `YYYY-MM-DD`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct DateValue(NaiveDate);

const UNIX_EPOCH: NaiveDate = match NaiveDate::from_ymd_opt(1970, 1, 1) {
    Some(d) => d,
    None => unreachable!(),
};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("invalid date `{0}`, expected YYYY-MM-DD")]
pub struct DateParseError(pub String);

impl DateValue {
    pub fn from_ymd(year: i32, month: u32, day: u32) -> Option<Self> {
        NaiveDate::from_ymd_opt(year, month, day).map(DateValue)
    }

    pub fn year(&self) -> i32 {
        self.0.year()
    }

    pub fn month(&self) -> u32 {
        self.0.month()
    }

    pub fn day(&self) -> u32 {
        self.0.day()
    }

    /// Whole days since 1970-01-01 (negative before the epoch).
    pub fn days_since_epoch(&self) -> i64 {
        (self.0 - UNIX_EPOCH).num_days()
    }

    pub fn from_days_since_epoch(days: i64) -> Self {
        DateValue(UNIX_EPOCH + chrono::Duration::days(days))
    }

    pub fn add_days(&self, days: i64) -> Self {
        DateValue(self.0 + chrono::Duration::days(days))
    }
}

/// Whole-day difference `later - earlier`; negative when `later` precedes `earlier`.
pub fn days_between(later: DateValue, earlier: DateValue) -> i64 {
    (later.0 - earlier.0).num_days()
}

impl fmt::Display for DateValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0.format("%Y-%m-%d"))
    }
}

impl FromStr for DateValue {
    type Err = DateParseError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let s = s.trim();
        // chrono's %Y accepts signs and short years; insist on the fixed width form.
        let b = s.as_bytes();
        if b.len() != 10 || b[4] != b'-' || b[7] != b'-' {
            return Err(DateParseError(s.to_string()));
        }
        NaiveDate::parse_from_str(s, "%Y-%m-%d").map(DateValue).map_err(|_| DateParseError(s.to_string()))
    }
}

impl Serialize for DateValue {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for DateValue {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}
