//! Unit conventions.
//!
//! Everything inside the crate is strict SI with angular frequencies in
//! rad/s. Human-facing values (config files, CLI output) use the tags below:
//! rates are quoted as `rate / 2π` in MHz, lengths in nm or μm, times in ns or
//! μs, temperatures in μK or mK, powers in pW or μW.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use thiserror::Error;

/// Physical constants (CODATA 2018) and Cs D2 line data.
pub mod consts {
    pub const HBAR: f64 = 1.054_571_817e-34;
    pub const PLANCK: f64 = 6.626_070_15e-34;
    pub const K_B: f64 = 1.380_649e-23;
    pub const C_LIGHT: f64 = 299_792_458.0;
    pub const STANDARD_GRAVITY: f64 = 9.806_65;
    /// Mass of a 133Cs atom.
    pub const CS_MASS: f64 = 2.206_946_95e-25;
    /// Vacuum wavelength of the Cs 6S1/2 -> 6P3/2 transition.
    pub const CS_D2_WAVELENGTH: f64 = 852.347_27e-9;
}

#[derive(Debug, Error, PartialEq)]
#[error("unknown unit tag `{0}`")]
pub struct UnknownUnit(pub String);

/// A human unit with an exact linear map to SI.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Unit {
    /// Angular rate quoted as `rate / 2π` in MHz.
    MHz,
    /// Angular rate quoted as `rate / 2π` in kHz.
    KHz,
    Nanometre,
    Micrometre,
    Nanosecond,
    Microsecond,
    Millisecond,
    Microkelvin,
    Millikelvin,
    Picowatt,
    Microwatt,
    /// CP coefficient quoted as `C3 / h` in kHz·μm³.
    KHzCubicMicrometre,
    /// Energy quoted as a temperature, `U / k_B` in mK.
    MillikelvinEnergy,
    /// Already SI.
    Si,
}

impl Unit {
    /// Multiplier taking a human value to SI.
    pub fn scale(self) -> f64 {
        match self {
            Unit::MHz => 2.0 * PI * 1e6,
            Unit::KHz => 2.0 * PI * 1e3,
            Unit::Nanometre => 1e-9,
            Unit::Micrometre => 1e-6,
            Unit::Nanosecond => 1e-9,
            Unit::Microsecond => 1e-6,
            Unit::Millisecond => 1e-3,
            Unit::Microkelvin => 1e-6,
            Unit::Millikelvin => 1e-3,
            Unit::Picowatt => 1e-12,
            Unit::Microwatt => 1e-6,
            Unit::KHzCubicMicrometre => consts::PLANCK * 1e3 * 1e-18,
            Unit::MillikelvinEnergy => consts::K_B * 1e-3,
            Unit::Si => 1.0,
        }
    }

    pub fn tag(self) -> &'static str {
        match self {
            Unit::MHz => "MHz",
            Unit::KHz => "kHz",
            Unit::Nanometre => "nm",
            Unit::Micrometre => "um",
            Unit::Nanosecond => "ns",
            Unit::Microsecond => "us",
            Unit::Millisecond => "ms",
            Unit::Microkelvin => "uK",
            Unit::Millikelvin => "mK",
            Unit::Picowatt => "pW",
            Unit::Microwatt => "uW",
            Unit::KHzCubicMicrometre => "kHz*um^3",
            Unit::MillikelvinEnergy => "mK*kB",
            Unit::Si => "si",
        }
    }
}

impl fmt::Display for Unit {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.tag())
    }
}

impl FromStr for Unit {
    type Err = UnknownUnit;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let unit = match s.trim() {
            "MHz" | "mhz" => Unit::MHz,
            "kHz" | "khz" => Unit::KHz,
            "nm" => Unit::Nanometre,
            "um" | "μm" => Unit::Micrometre,
            "ns" => Unit::Nanosecond,
            "us" | "μs" => Unit::Microsecond,
            "ms" => Unit::Millisecond,
            "uK" | "μK" => Unit::Microkelvin,
            "mK" => Unit::Millikelvin,
            "pW" => Unit::Picowatt,
            "uW" | "μW" => Unit::Microwatt,
            "kHz*um^3" | "kHz um^3" | "kHz·μm³" => Unit::KHzCubicMicrometre,
            "mK*kB" => Unit::MillikelvinEnergy,
            "si" | "SI" | "" => Unit::Si,
            other => return Err(UnknownUnit(other.to_string())),
        };
        Ok(unit)
    }
}

pub fn to_si(value: f64, unit: Unit) -> f64 {
    value * unit.scale()
}

pub fn to_human(value: f64, unit: Unit) -> f64 {
    value / unit.scale()
}

/// String-tag variants used by the CLI.
pub fn to_si_tagged(value: f64, tag: &str) -> Result<f64, UnknownUnit> {
    Ok(to_si(value, tag.parse()?))
}

pub fn to_human_tagged(value: f64, tag: &str) -> Result<f64, UnknownUnit> {
    Ok(to_human(value, tag.parse()?))
}

/// `2π · f[MHz]` in rad/s.
#[inline]
pub fn mhz(f: f64) -> f64 {
    to_si(f, Unit::MHz)
}

/// Angular rate in rad/s back to `rate / 2π` in MHz.
#[inline]
pub fn as_mhz(omega: f64) -> f64 {
    to_human(omega, Unit::MHz)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn rate_to_mhz() {
        let omega = 2.0 * PI * 1e6 * 40.0;
        assert!((to_human(omega, Unit::MHz) - 40.0).abs() < 1e-12);
    }

    #[test]
    fn nm_to_metre() {
        assert_eq!(to_si(136.0, Unit::Nanometre), 1.36e-7);
    }

    #[test]
    fn microsecond_round_trip() {
        let back = to_human(to_si(0.78, Unit::Microsecond), Unit::Microsecond);
        assert!((back - 0.78).abs() <= 0.78 * 1e-15);
    }

    #[test]
    fn unknown_tag_is_rejected() {
        assert_eq!(
            to_si_tagged(1.0, "furlong"),
            Err(UnknownUnit("furlong".into()))
        );
        assert!(to_human_tagged(1.0, "MHz").is_ok());
    }

    #[test]
    fn tags_parse_back() {
        for u in [
            Unit::MHz,
            Unit::KHz,
            Unit::Nanometre,
            Unit::Micrometre,
            Unit::Nanosecond,
            Unit::Microsecond,
            Unit::Millisecond,
            Unit::Microkelvin,
            Unit::Millikelvin,
            Unit::Picowatt,
            Unit::Microwatt,
            Unit::KHzCubicMicrometre,
            Unit::MillikelvinEnergy,
            Unit::Si,
        ] {
            assert_eq!(u.tag().parse::<Unit>().unwrap(), u);
        }
    }

    proptest! {
        #[test]
        fn round_trip_is_identity(x in -1e9f64..1e9, idx in 0usize..6) {
            let unit = [Unit::MHz, Unit::Nanometre, Unit::Microsecond,
                        Unit::Picowatt, Unit::KHzCubicMicrometre, Unit::Microkelvin][idx];
            let back = to_human(to_si(x, unit), unit);
            prop_assert!((back - x).abs() <= 1e-12 * x.abs().max(1e-300));
        }
    }
}
