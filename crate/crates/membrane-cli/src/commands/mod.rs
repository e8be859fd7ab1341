//! Command implementations behind the CLI surface.

pub mod classify;
pub mod predict;
pub mod simulate;
pub mod verify;

use membrane::asymptotics::ExponentQ;
use membrane::geometry::Point;

/// Process exit codes: 0 success, 1 criterion/runtime failure, 2 usage.
pub const EXIT_OK: i32 = 0;
pub const EXIT_FAIL: i32 = 1;
pub const EXIT_USAGE: i32 = 2;

#[derive(Debug)]
pub struct CliError {
    pub code: i32,
    pub message: String,
}

impl CliError {
    pub fn usage(message: impl Into<String>) -> Self {
        CliError {
            code: EXIT_USAGE,
            message: message.into(),
        }
    }

    pub fn fail(message: impl Into<String>) -> Self {
        CliError {
            code: EXIT_FAIL,
            message: message.into(),
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}", self.message)
    }
}

pub fn parse_exponent(s: &str) -> Result<ExponentQ, CliError> {
    ExponentQ::parse(s).ok_or_else(|| CliError::usage(format!("bad rational exponent {s:?}")))
}

/// "x" or "x,y".
pub fn parse_point(s: &str, dimension: usize) -> Result<Point, CliError> {
    let parts: Vec<&str> = s.split(',').map(str::trim).collect();
    let coords: Vec<f64> = parts
        .iter()
        .map(|p| {
            p.parse::<f64>()
                .map_err(|_| CliError::usage(format!("bad coordinate {p:?} in start {s:?}")))
        })
        .collect::<Result<_, _>>()?;
    if coords.len() != dimension {
        return Err(CliError::usage(format!(
            "start {s:?} has {} coordinates, scene is {dimension}D",
            coords.len()
        )));
    }
    Ok(match dimension {
        1 => Point::d1(coords[0]),
        _ => Point::d2(coords[0], coords[1]),
    })
}

/// Seed precedence: explicit flag, then MEMBRANE_SEED, then 42.
pub fn resolve_seed(flag: Option<u64>) -> u64 {
    flag.or_else(|| {
        std::env::var("MEMBRANE_SEED")
            .ok()
            .and_then(|s| s.parse().ok())
    })
    .unwrap_or(42)
}

pub fn parse_f64_list(s: &str) -> Result<Vec<f64>, CliError> {
    s.split(',')
        .map(str::trim)
        .filter(|p| !p.is_empty())
        .map(|p| {
            p.parse::<f64>()
                .map_err(|_| CliError::usage(format!("bad number {p:?} in list {s:?}")))
        })
        .collect()
}
