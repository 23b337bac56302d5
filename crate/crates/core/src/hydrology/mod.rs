//! Reservoir physics and inflow data.

mod calendar;
mod demand;
mod reservoir;
mod series;

pub use calendar::{day_slot, hour_slot, DAYS_PER_PROFILE, HOURS_PER_PROFILE};
pub use demand::{climatology, DailyProfile, DemandProfile};
pub use reservoir::{
    level_to_volume, step_dynamics, volume_to_level, ReservoirConfig, ReservoirState,
    CONFIG_KEYS,
};
pub use series::{load_inflow_csv, write_inflow_csv, InflowSeries};
pub(crate) use series::format_timestamp;
