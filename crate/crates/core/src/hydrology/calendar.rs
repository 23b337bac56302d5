//! Fixed 365-day calendar slots. Feb 29 shares Feb 28's slot.

use chrono::{DateTime, Datelike, Timelike, Utc};

pub const DAYS_PER_PROFILE: usize = 365;
pub const HOURS_PER_PROFILE: usize = DAYS_PER_PROFILE * 24;

/// 0-based day-of-year in a 365-slot calendar.
pub fn day_slot(ts: DateTime<Utc>) -> usize {
    let ordinal0 = ts.ordinal0() as usize;
    let leap = chrono::NaiveDate::from_ymd_opt(ts.year(), 2, 29).is_some();
    // Feb 29 has ordinal0 59 in a leap year.
    if leap && ordinal0 >= 59 {
        ordinal0 - 1
    } else {
        ordinal0
    }
}

/// 0-based hour-of-year in a 365-slot calendar.
pub fn hour_slot(ts: DateTime<Utc>) -> usize {
    day_slot(ts) * 24 + ts.hour() as usize
}
