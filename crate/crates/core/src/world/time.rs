use std::fmt;

use chrono::{Datelike, Days, Months, NaiveDate};
use serde::{Deserialize, Serialize};

use super::WorldError;

/// Day-granular calendar stamp encoded as the integer `YYYYMMDD`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "u32", into = "u32")]
pub struct DayStamp(u32);

impl DayStamp {
    pub fn new(raw: u32) -> Result<Self, WorldError> {
        Self::to_date(raw)
            .map(|_| Self(raw))
            .ok_or(WorldError::InvalidTimestamp(raw))
    }

    /// `None` outside the four-digit years the encoding can hold.
    pub fn from_date(date: NaiveDate) -> Option<Self> {
        (1000..=9999)
            .contains(&date.year())
            .then(|| Self(date.year() as u32 * 10_000 + date.month() * 100 + date.day()))
    }

    fn to_date(raw: u32) -> Option<NaiveDate> {
        if !(10_000_101..=99_991_231).contains(&raw) {
            return None;
        }
        NaiveDate::from_ymd_opt((raw / 10_000) as i32, (raw / 100) % 100, raw % 100)
    }

    pub fn date(self) -> NaiveDate {
        Self::to_date(self.0).expect("DayStamp holds a valid date")
    }

    pub fn value(self) -> u32 {
        self.0
    }

    pub fn month(self) -> u8 {
        ((self.0 / 100) % 100) as u8
    }

    pub fn minus_days(self, n: u64) -> Option<Self> {
        self.date().checked_sub_days(Days::new(n)).and_then(Self::from_date)
    }

    /// Calendar month subtraction; day-of-month clamps to the target month's end.
    pub fn minus_months(self, n: u32) -> Option<Self> {
        self.date().checked_sub_months(Months::new(n)).and_then(Self::from_date)
    }
}

impl TryFrom<u32> for DayStamp {
    type Error = WorldError;

    fn try_from(raw: u32) -> Result<Self, Self::Error> {
        Self::new(raw)
    }
}

impl From<DayStamp> for u32 {
    fn from(d: DayStamp) -> u32 {
        d.0
    }
}

impl fmt::Display for DayStamp {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn month_field() {
        assert_eq!(DayStamp::new(20150511).unwrap().month(), 5);
        assert_eq!(DayStamp::new(20151231).unwrap().month(), 12);
    }

    #[test]
    fn rejects_impossible_dates() {
        assert!(DayStamp::new(20151301).is_err());
        assert!(DayStamp::new(20150230).is_err());
        assert!(DayStamp::new(20150000).is_err());
        assert!(DayStamp::new(5).is_err());
        assert!(DayStamp::new(20160229).is_ok());
    }

    #[test]
    fn arithmetic() {
        let d = DayStamp::new(20150516).unwrap();
        assert_eq!(d.minus_days(5).unwrap().value(), 20150511);
        assert_eq!(d.minus_days(16).unwrap().value(), 20150430);
        assert_eq!(DayStamp::new(20150331).unwrap().minus_months(1).unwrap().value(), 20150228);
        assert_eq!(d.minus_months(24).unwrap().value(), 20130516);
    }
}
