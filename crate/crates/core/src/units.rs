//! Unit-suffixed quantities used throughout the configuration.
//!
//! Bandwidth is always stored in bits per second. A lower-case `b` in the
//! suffix means bits (`200Gbps`), an upper-case `B` means bytes (`200GBps`),
//! so the two spellings differ by a factor of eight. Decimal prefixes
//! (K, M, G, T) are powers of 1000; binary prefixes (KiB, MiB, GiB) are
//! powers of 1024.

use std::fmt;
use std::str::FromStr;

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum UnitError {
    #[error("missing number in `{0}`")]
    MissingNumber(String),
    #[error("bad number in `{0}`")]
    BadNumber(String),
    #[error("unknown unit `{unit}` in `{input}` (expected {expected})")]
    UnknownUnit {
        input: String,
        unit: String,
        expected: &'static str,
    },
    #[error("value `{0}` must be a whole, non-negative quantity")]
    NotWhole(String),
}

/// Link bandwidth in bits per second.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Bandwidth(pub u64);

impl Bandwidth {
    pub const fn bps(v: u64) -> Self {
        Bandwidth(v)
    }

    pub const fn gbps(v: u64) -> Self {
        Bandwidth(v * 1_000_000_000)
    }

    /// Gigabytes per second (bytes, not bits).
    pub const fn gbytes_per_sec(v: u64) -> Self {
        Bandwidth(v * 8_000_000_000)
    }

    pub fn as_bps(self) -> u64 {
        self.0
    }

    pub fn bytes_per_ns(self) -> f64 {
        self.0 as f64 / 8e9
    }

    /// Serialization time of `bytes`, rounded up to whole nanoseconds.
    pub fn tx_time_ns(self, bytes: u64) -> u64 {
        let bits = bytes as u128 * 8 * 1_000_000_000;
        bits.div_ceil(self.0 as u128) as u64
    }
}

impl fmt::Display for Bandwidth {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let v = self.0;
        if v.is_multiple_of(8_000_000_000) && !v.is_multiple_of(1_000_000_000_000) && v >= 800_000_000_000 {
            write!(f, "{}GBps", v / 8_000_000_000)
        } else if v.is_multiple_of(1_000_000_000) {
            write!(f, "{}Gbps", v / 1_000_000_000)
        } else if v.is_multiple_of(1_000_000) {
            write!(f, "{}Mbps", v / 1_000_000)
        } else {
            write!(f, "{}bps", v)
        }
    }
}

fn split_number(s: &str) -> Result<(f64, &str), UnitError> {
    let s = s.trim();
    let end = s
        .char_indices()
        .find(|(_, c)| !(c.is_ascii_digit() || *c == '.' || *c == '_'))
        .map(|(i, _)| i)
        .unwrap_or(s.len());
    if end == 0 {
        return Err(UnitError::MissingNumber(s.to_string()));
    }
    let num: String = s[..end].chars().filter(|c| *c != '_').collect();
    let v: f64 = num
        .parse()
        .map_err(|_| UnitError::BadNumber(s.to_string()))?;
    Ok((v, s[end..].trim()))
}

fn whole(v: f64, input: &str) -> Result<u64, UnitError> {
    let r = v.round();
    if !v.is_finite() || v < 0.0 || (v - r).abs() > 1e-6 * r.max(1.0) {
        return Err(UnitError::NotWhole(input.to_string()));
    }
    Ok(r as u64)
}

impl FromStr for Bandwidth {
    type Err = UnitError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let (v, unit) = split_number(s)?;
        let mult: f64 = match unit {
            "bps" => 1.0,
            "Kbps" | "kbps" => 1e3,
            "Mbps" => 1e6,
            "Gbps" => 1e9,
            "Tbps" => 1e12,
            "Bps" => 8.0,
            "KBps" | "kBps" => 8e3,
            "MBps" => 8e6,
            "GBps" => 8e9,
            "TBps" => 8e12,
            _ => {
                return Err(UnitError::UnknownUnit {
                    input: s.to_string(),
                    unit: unit.to_string(),
                    expected: "bps, Kbps, Mbps, Gbps, Tbps, Bps, KBps, MBps, GBps, TBps",
                })
            }
        };
        Ok(Bandwidth(whole(v * mult, s)?))
    }
}

/// Parse a byte quantity such as `32MB`, `1000B`, `1.6MB` or `64KiB`.
pub fn parse_bytes(s: &str) -> Result<u64, UnitError> {
    let (v, unit) = split_number(s)?;
    let mult: f64 = match unit {
        "" | "B" => 1.0,
        "KB" | "kB" => 1e3,
        "MB" => 1e6,
        "GB" => 1e9,
        "KiB" => 1024.0,
        "MiB" => 1024.0 * 1024.0,
        "GiB" => 1024.0 * 1024.0 * 1024.0,
        _ => {
            return Err(UnitError::UnknownUnit {
                input: s.to_string(),
                unit: unit.to_string(),
                expected: "B, KB, MB, GB, KiB, MiB, GiB",
            })
        }
    };
    whole(v * mult, s)
}

/// Parse a duration such as `500ns`, `55us` or `2.5ms` into nanoseconds.
pub fn parse_duration_ns(s: &str) -> Result<u64, UnitError> {
    let (v, unit) = split_number(s)?;
    let mult: f64 = match unit {
        "ns" => 1.0,
        "us" | "µs" => 1e3,
        "ms" => 1e6,
        "s" => 1e9,
        _ => {
            return Err(UnitError::UnknownUnit {
                input: s.to_string(),
                unit: unit.to_string(),
                expected: "ns, us, ms, s",
            })
        }
    };
    whole(v * mult, s)
}

/// Render a byte count using the largest exact decimal unit.
pub fn format_bytes(b: u64) -> String {
    if b >= 1_000_000 && b.is_multiple_of(100_000) {
        let mb = b as f64 / 1e6;
        format!("{mb}MB")
    } else if b >= 1000 && b.is_multiple_of(1000) {
        format!("{}KB", b / 1000)
    } else {
        format!("{b}B")
    }
}

/// Render a duration using the largest exact unit.
pub fn format_duration(ns: u64) -> String {
    if ns >= 1_000_000 && ns.is_multiple_of(1_000_000) {
        format!("{}ms", ns / 1_000_000)
    } else if ns >= 1000 && ns.is_multiple_of(1000) {
        format!("{}us", ns / 1000)
    } else {
        format!("{ns}ns")
    }
}
