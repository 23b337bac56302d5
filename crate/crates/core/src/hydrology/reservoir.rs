use std::io::Write;
use std::path::{Path, PathBuf};

use chrono::{DateTime, Duration, Utc};

use super::demand::DemandProfile;
use crate::error::{ensure_finite, Error, Result};
use crate::kv::KeyValues;
use crate::SECONDS_PER_STEP;

/// Keys every reservoir config file must define.
pub const CONFIG_KEYS: [&str; 9] = [
    "s_min",
    "s_max",
    "u_min",
    "u_max",
    "surface_area",
    "s_ref",
    "h_dry",
    "h_flood",
    "demand_path",
];
const OPTIONAL_KEYS: [&str; 1] = ["h_init"];

/// Physical and regulatory parameters of the regulated lake.
#[derive(Debug, Clone, PartialEq)]
pub struct ReservoirConfig {
    /// Volume lower target used by the controller [m³].
    pub s_min: f64,
    /// Volume upper target used by the controller [m³].
    pub s_max: f64,
    /// Release bounds [m³/s].
    pub u_min: f64,
    pub u_max: f64,
    /// Lake surface [m²]; the level map is affine.
    pub surface_area: f64,
    /// Volume at level zero [m³].
    pub s_ref: f64,
    /// Dry threshold used by the a-posteriori cost [m].
    pub h_dry: f64,
    /// Flood threshold [m].
    pub h_flood: f64,
    /// Level at the start of a simulation [m].
    pub h_init: f64,
    pub demand: DemandProfile,
}

impl ReservoirConfig {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("s_min", self.s_min),
            ("s_max", self.s_max),
            ("u_min", self.u_min),
            ("u_max", self.u_max),
            ("surface_area", self.surface_area),
            ("s_ref", self.s_ref),
            ("h_dry", self.h_dry),
            ("h_flood", self.h_flood),
            ("h_init", self.h_init),
        ] {
            ensure_finite(name, v)?;
        }
        if self.s_min >= self.s_max {
            return Err(Error::Config(format!(
                "s_min ({}) must be below s_max ({})",
                self.s_min, self.s_max
            )));
        }
        if !(0.0 <= self.u_min && self.u_min < self.u_max) {
            return Err(Error::Config(format!(
                "release bounds must satisfy 0 <= u_min < u_max, got [{}, {}]",
                self.u_min, self.u_max
            )));
        }
        if self.surface_area <= 0.0 {
            return Err(Error::Config("surface_area must be positive".into()));
        }
        if self.demand.max() > self.u_max {
            return Err(Error::Config(format!(
                "demand peak {} exceeds u_max {}",
                self.demand.max(),
                self.u_max
            )));
        }
        Ok(())
    }

    /// Vertical-walled lake with level zero at one metre of water, the
    /// controller volume targets on the dry and flood levels, releases in
    /// `[0, u_max]` and the initial level at zero.
    pub fn prismatic(
        surface_area: f64,
        h_dry: f64,
        h_flood: f64,
        u_max: f64,
        demand: DemandProfile,
    ) -> Self {
        let s_ref = surface_area;
        Self {
            s_min: s_ref + h_dry * surface_area,
            s_max: s_ref + h_flood * surface_area,
            u_min: 0.0,
            u_max,
            surface_area,
            s_ref,
            h_dry,
            h_flood,
            h_init: 0.0,
            demand,
        }
    }

    /// Lake-Como-sized defaults: 145 km² surface, dry threshold at −0.20 m,
    /// flood threshold at +1.20 m, releases up to 600 m³/s.
    pub fn lake_como_like(demand: DemandProfile) -> Self {
        Self::prismatic(1.45e8, -0.20, 1.20, 600.0, demand)
    }

    pub fn level(&self, volume: f64) -> f64 {
        volume_to_level(volume, self)
    }

    pub fn volume(&self, level: f64) -> f64 {
        level_to_volume(level, self)
    }

    pub fn initial_state(&self, time: DateTime<Utc>) -> Result<ReservoirState> {
        ReservoirState::new(time, self.volume(self.h_init))
    }

    /// [`step_dynamics`] with the release checked against the box.
    pub fn step(&self, state: &ReservoirState, inflow: f64, release: f64) -> Result<ReservoirState> {
        if !(self.u_min..=self.u_max).contains(&release) {
            return Err(Error::InvalidInput(format!(
                "release {release} outside [{}, {}]",
                self.u_min, self.u_max
            )));
        }
        step_dynamics(state, inflow, release)
    }

    /// Read a flat `key = value` file. `demand_path` is resolved relative to
    /// the config file's directory.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let kv = KeyValues::read(path)?;
        let allowed: Vec<&str> = CONFIG_KEYS.iter().chain(&OPTIONAL_KEYS).copied().collect();
        kv.deny_unknown(&allowed)?;
        for key in CONFIG_KEYS {
            kv.require_str(key)?;
        }
        let demand_path = resolve_relative(path, kv.require_str("demand_path")?);
        let demand = DemandProfile::load_csv(&demand_path)?;
        let cfg = Self {
            s_min: kv.require_f64("s_min")?,
            s_max: kv.require_f64("s_max")?,
            u_min: kv.require_f64("u_min")?,
            u_max: kv.require_f64("u_max")?,
            surface_area: kv.require_f64("surface_area")?,
            s_ref: kv.require_f64("s_ref")?,
            h_dry: kv.require_f64("h_dry")?,
            h_flood: kv.require_f64("h_flood")?,
            h_init: kv.get_f64("h_init")?.unwrap_or(0.0),
            demand,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    /// Write the scalar parameters; `demand_path` is stored verbatim.
    pub fn write(&self, path: impl AsRef<Path>, demand_path: &str) -> Result<()> {
        let path = path.as_ref();
        let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        let mut out = std::io::BufWriter::new(file);
        let io = |e| Error::io(path, e);
        for (k, v) in [
            ("s_min", self.s_min),
            ("s_max", self.s_max),
            ("u_min", self.u_min),
            ("u_max", self.u_max),
            ("surface_area", self.surface_area),
            ("s_ref", self.s_ref),
            ("h_dry", self.h_dry),
            ("h_flood", self.h_flood),
            ("h_init", self.h_init),
        ] {
            writeln!(out, "{k} = {v:?}").map_err(io)?;
        }
        writeln!(out, "demand_path = {demand_path}").map_err(io)?;
        out.flush().map_err(io)
    }
}

fn resolve_relative(config: &Path, target: &str) -> PathBuf {
    let target = Path::new(target);
    if target.is_absolute() {
        return target.to_path_buf();
    }
    config
        .parent()
        .map(|dir| dir.join(target))
        .unwrap_or_else(|| target.to_path_buf())
}

/// Lake volume at a point in time. Negative volumes are representable so that
/// infeasible release sequences show up in simulation output.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReservoirState {
    pub time: DateTime<Utc>,
    pub volume: f64,
}

impl ReservoirState {
    pub fn new(time: DateTime<Utc>, volume: f64) -> Result<Self> {
        ensure_finite("volume", volume)?;
        Ok(Self { time, volume })
    }

    pub fn is_physical(&self) -> bool {
        self.volume >= 0.0
    }
}

/// Hourly mass balance: `s' = s + 3600 (q - u)`. No clipping.
pub fn step_dynamics(state: &ReservoirState, inflow: f64, release: f64) -> Result<ReservoirState> {
    ensure_finite("inflow", inflow)?;
    ensure_finite("release", release)?;
    ensure_finite("volume", state.volume)?;
    if inflow < 0.0 {
        return Err(Error::InvalidInput(format!("inflow {inflow} is negative")));
    }
    Ok(ReservoirState {
        time: state.time + Duration::hours(1),
        volume: state.volume + SECONDS_PER_STEP * (inflow - release),
    })
}

pub fn volume_to_level(volume: f64, cfg: &ReservoirConfig) -> f64 {
    (volume - cfg.s_ref) / cfg.surface_area
}

pub fn level_to_volume(level: f64, cfg: &ReservoirConfig) -> f64 {
    cfg.s_ref + level * cfg.surface_area
}

#[cfg(test)]
mod tests {
    use super::*;
    use chrono::TimeZone;
    use proptest::prelude::*;

    fn cfg() -> ReservoirConfig {
        ReservoirConfig::lake_como_like(DemandProfile::constant(50.0).unwrap())
    }

    fn state(volume: f64) -> ReservoirState {
        ReservoirState::new(Utc.with_ymd_and_hms(2000, 1, 1, 0, 0, 0).unwrap(), volume).unwrap()
    }

    #[test]
    fn dynamics_examples() {
        let s = state(1e8);
        let next = step_dynamics(&s, 100.0, 50.0).unwrap();
        assert_eq!(next.volume, 100_180_000.0);
        assert_eq!(next.time, s.time + Duration::hours(1));
        assert_eq!(step_dynamics(&s, 80.0, 80.0).unwrap().volume, 1e8);
        assert_eq!(step_dynamics(&s, 0.0, 100.0).unwrap().volume, 99_640_000.0);
    }

    #[test]
    fn dynamics_reports_negative_volume() {
        let next = step_dynamics(&state(1000.0), 0.0, 1.0).unwrap();
        assert_eq!(next.volume, -2600.0);
        assert!(!next.is_physical());
    }

    #[test]
    fn dynamics_rejects_bad_input() {
        assert!(step_dynamics(&state(1e8), f64::NAN, 1.0).is_err());
        assert!(step_dynamics(&state(1e8), 1.0, f64::INFINITY).is_err());
        assert!(step_dynamics(&state(1e8), -1.0, 1.0).is_err());
        assert!(cfg().step(&state(1e8), 1.0, 700.0).is_err());
    }

    #[test]
    fn level_examples() {
        let c = cfg();
        assert_eq!(volume_to_level(c.s_ref, &c), 0.0);
        assert!((volume_to_level(c.s_ref + 1.45e6, &c) - 0.01).abs() < 1e-15);
    }

    #[test]
    fn config_validation() {
        let mut c = cfg();
        c.s_min = c.s_max;
        assert!(c.validate().is_err());
        let mut c = cfg();
        c.u_min = -1.0;
        assert!(c.validate().is_err());
        let mut c = cfg();
        c.surface_area = 0.0;
        assert!(c.validate().is_err());
        let mut c = cfg();
        c.demand = DemandProfile::constant(1000.0).unwrap();
        assert!(c.validate().is_err());
        assert!(cfg().validate().is_ok());
    }

    #[test]
    fn config_file_round_trip_and_missing_key() {
        let dir = tempfile::tempdir().unwrap();
        let c = cfg();
        c.demand.write_csv(dir.path().join("demand.csv")).unwrap();
        c.write(dir.path().join("reservoir.cfg"), "demand.csv").unwrap();
        let loaded = ReservoirConfig::load(dir.path().join("reservoir.cfg")).unwrap();
        assert_eq!(loaded, c);

        std::fs::write(
            dir.path().join("bad.cfg"),
            "s_min = 1\ns_max = 2\nu_min = 0\nsurface_area = 1\ns_ref = 0\nh_dry = 0\nh_flood = 1\ndemand_path = demand.csv\n",
        )
        .unwrap();
        match ReservoirConfig::load(dir.path().join("bad.cfg")).unwrap_err() {
            Error::MissingKey { key, .. } => assert_eq!(key, "u_max"),
            other => panic!("unexpected {other:?}"),
        }
    }

    proptest! {
        #[test]
        fn level_map_round_trip(v in -1e10f64..1e10) {
            let c = cfg();
            let back = level_to_volume(volume_to_level(v, &c), &c);
            prop_assert!((back - v).abs() <= 1e-9 * v.abs().max(c.s_ref));
        }

        #[test]
        fn level_map_increasing(a in -1e10f64..1e10, d in 1.0f64..1e9) {
            let c = cfg();
            prop_assert!(volume_to_level(a + d, &c) > volume_to_level(a, &c));
        }

        #[test]
        fn dynamics_linear_in_flows(
            s in 0.0f64..1e9, q1 in 0.0f64..500.0, q2 in 0.0f64..500.0,
            u1 in 0.0f64..300.0, u2 in 0.0f64..300.0,
        ) {
            let st = state(s);
            let d = |q, u| step_dynamics(&st, q, u).unwrap().volume - s;
            let lhs = d(q1 + q2, u1 + u2);
            let rhs = d(q1, u1) + d(q2, u2);
            prop_assert!((lhs - rhs).abs() <= 1e-6 * (1.0 + lhs.abs()));
        }

        #[test]
        fn mass_conservation(
            s0 in 1e7f64..1e9,
            flows in prop::collection::vec((0.0f64..500.0, 0.0f64..500.0), 1..300),
        ) {
            let mut st = state(s0);
            let mut net = 0.0;
            for (q, u) in &flows {
                st = step_dynamics(&st, *q, *u).unwrap();
                net += q - u;
            }
            let resid = st.volume - s0 - SECONDS_PER_STEP * net;
            prop_assert!(resid.abs() <= 1e-6 * s0.abs().max(st.volume.abs()));
        }
    }
}
