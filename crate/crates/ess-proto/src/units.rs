//! Human-friendly unit parsing for CLI flags: sizes ("64GB", "256MiB"),
//! rates ("32Gbit", "50MB/s") and durations ("30s", "7200s", "250ms").
//! Decimal suffixes (KB/MB/GB/TB) are powers of 1000, binary suffixes
//! (KiB/MiB/GiB) powers of 1024, matching cloud-provider conventions.

use std::time::Duration;

use crate::error::Fault;

fn split_magnitude(s: &str) -> Result<(f64, &str), Fault> {
    let s = s.trim();
    let end = s
        .find(|c: char| !(c.is_ascii_digit() || c == '.' || c == '-' || c == '+'))
        .unwrap_or(s.len());
    let (num, suffix) = s.split_at(end);
    let value: f64 = num
        .parse()
        .map_err(|_| Fault::protocol(format!("cannot parse number in {s:?}")))?;
    Ok((value, suffix.trim()))
}

/// Parses a byte size. A bare number is bytes.
pub fn parse_size(s: &str) -> Result<u64, Fault> {
    let (value, suffix) = split_magnitude(s)?;
    let factor: f64 = match suffix {
        "" | "B" => 1.0,
        "KB" | "kB" => 1e3,
        "MB" => 1e6,
        "GB" => 1e9,
        "TB" => 1e12,
        "KiB" => 1024.0,
        "MiB" => 1024.0 * 1024.0,
        "GiB" => 1024.0 * 1024.0 * 1024.0,
        "TiB" => 1024.0f64.powi(4),
        _ => return Err(Fault::protocol(format!("unknown size suffix {suffix:?}"))),
    };
    if value < 0.0 {
        return Err(Fault::protocol("size cannot be negative"));
    }
    Ok((value * factor).round() as u64)
}

/// Parses a bandwidth into bits per second. Bit suffixes ("32Gbit",
/// "1Mbit/s") are taken at face value; byte suffixes ("50MB/s", "50MB")
/// are multiplied by 8. A bare number is bits per second.
pub fn parse_rate_bits(s: &str) -> Result<u64, Fault> {
    let s = s.trim();
    let stripped = s
        .strip_suffix("/s")
        .or_else(|| s.strip_suffix("ps"))
        .unwrap_or(s);
    let (value, suffix) = split_magnitude(stripped)?;
    let bits: f64 = match suffix {
        "" | "bit" | "b" => 1.0,
        "Kbit" | "kbit" => 1e3,
        "Mbit" => 1e6,
        "Gbit" => 1e9,
        "Tbit" => 1e12,
        _ => 8.0 * parse_size(&format!("1{suffix}"))? as f64,
    };
    if value < 0.0 {
        return Err(Fault::protocol("rate cannot be negative"));
    }
    Ok((value * bits).round() as u64)
}

/// Parses a bandwidth into bytes per second.
pub fn parse_rate_bytes(s: &str) -> Result<u64, Fault> {
    Ok(parse_rate_bits(s)? / 8)
}

/// Parses a duration: "30s", "1500ms", "2m", "1h", bare seconds.
pub fn parse_duration(s: &str) -> Result<Duration, Fault> {
    let (value, suffix) = split_magnitude(s)?;
    let secs: f64 = match suffix {
        "" | "s" => 1.0,
        "ms" => 1e-3,
        "us" => 1e-6,
        "m" | "min" => 60.0,
        "h" => 3600.0,
        _ => {
            return Err(Fault::protocol(format!(
                "unknown duration suffix {suffix:?}"
            )))
        }
    };
    if value < 0.0 {
        return Err(Fault::protocol("duration cannot be negative"));
    }
    Ok(Duration::from_secs_f64(value * secs))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sizes() {
        assert_eq!(parse_size("64GB").unwrap(), 64_000_000_000);
        assert_eq!(parse_size("1MiB").unwrap(), 1 << 20);
        assert_eq!(parse_size("512").unwrap(), 512);
        assert_eq!(parse_size("0.5GB").unwrap(), 500_000_000);
        assert!(parse_size("10XB").is_err());
    }

    #[test]
    fn rates() {
        assert_eq!(parse_rate_bits("32Gbit").unwrap(), 32_000_000_000);
        assert_eq!(parse_rate_bits("32Gbit/s").unwrap(), 32_000_000_000);
        assert_eq!(parse_rate_bytes("50MB/s").unwrap(), 50_000_000);
        assert_eq!(parse_rate_bytes("1MiB").unwrap(), 1 << 20);
        assert!(parse_rate_bits("fast").is_err());
    }

    #[test]
    fn durations() {
        assert_eq!(parse_duration("30s").unwrap(), Duration::from_secs(30));
        assert_eq!(parse_duration("250ms").unwrap(), Duration::from_millis(250));
        assert_eq!(parse_duration("2m").unwrap(), Duration::from_secs(120));
        assert_eq!(parse_duration("7200").unwrap(), Duration::from_secs(7200));
    }
}
