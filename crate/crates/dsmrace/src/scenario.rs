//! Scenario files: the on-disk TOML description a run starts from.
//!
//! ```toml
//! version = 1
//! processes = 3
//!
//! [[cells]]
//! process = 1
//! space = "public"
//! offset = 0
//! value = 0
//!
//! [programs]
//! p0 = [{ op = "put", src = "P0.priv[0]", dst = "P1.pub[0]" }]
//! p2 = [{ op = "get", src = "P1.pub[0]", dst = "P2.priv[0]" }]
//!
//! [schedule]
//! explicit = [0, 0, 2, 2]   # or: seed = 42
//! ```
//!
//! Addresses in statements use the printed form `P<k>.<pub|priv>[<offset>]`.
//! Parse errors carry the TOML line/column; shape errors name the offending
//! program and statement.

use crate::memory::{Address, Space};
use crate::sim::{Scenario, Schedule, Statement};
use serde::Deserialize;
use std::path::Path;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ScenarioFileError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("scenario parse error: {0}")]
    Toml(#[from] toml::de::Error),
    #[error("unsupported scenario version {0}; this build reads version 1")]
    Version(u32),
    #[error("program key {0:?} is not of the form p<index> with index < processes")]
    BadProgramKey(String),
    #[error("{at}: {message}")]
    BadStatement { at: String, message: String },
    #[error("schedule must set exactly one of `explicit` or `seed`")]
    ScheduleShape,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct ScenarioFile {
    version: u32,
    processes: usize,
    #[serde(default)]
    cells: Vec<CellFile>,
    #[serde(default)]
    programs: std::collections::BTreeMap<String, Vec<StatementFile>>,
    schedule: ScheduleFile,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct CellFile {
    process: usize,
    space: Space,
    offset: usize,
    value: i64,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct StatementFile {
    op: String,
    #[serde(default)]
    src: Option<String>,
    #[serde(default)]
    dst: Option<String>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct ScheduleFile {
    #[serde(default)]
    explicit: Option<Vec<usize>>,
    #[serde(default)]
    seed: Option<u64>,
}

fn parse_program_key(key: &str, n: usize) -> Result<usize, ScenarioFileError> {
    let bad = || ScenarioFileError::BadProgramKey(key.to_string());
    let index: usize = key
        .strip_prefix('p')
        .ok_or_else(bad)?
        .parse()
        .map_err(|_| bad())?;
    if index >= n {
        return Err(bad());
    }
    Ok(index)
}

fn parse_address(
    at: &str,
    field: &str,
    value: &Option<String>,
) -> Result<Address, ScenarioFileError> {
    let text = value
        .as_ref()
        .ok_or_else(|| ScenarioFileError::BadStatement {
            at: at.to_string(),
            message: format!("missing `{field}`"),
        })?;
    text.parse().map_err(|e| ScenarioFileError::BadStatement {
        at: at.to_string(),
        message: format!("{e}"),
    })
}

fn reject_field(at: &str, field: &str, value: &Option<String>) -> Result<(), ScenarioFileError> {
    if value.is_some() {
        return Err(ScenarioFileError::BadStatement {
            at: at.to_string(),
            message: format!("`{field}` is not allowed here"),
        });
    }
    Ok(())
}

/// Parses scenario text into a runnable [`Scenario`]. Validation of
/// ownership and schedule shape happens separately in [`crate::sim::validate`].
pub fn parse_scenario(text: &str) -> Result<Scenario, ScenarioFileError> {
    let file: ScenarioFile = toml::from_str(text)?;
    if file.version != 1 {
        return Err(ScenarioFileError::Version(file.version));
    }
    let n = file.processes;
    let mut programs = vec![Vec::new(); n];
    for (key, statements) in &file.programs {
        let process = parse_program_key(key, n)?;
        let mut parsed = Vec::with_capacity(statements.len());
        for (idx, stmt) in statements.iter().enumerate() {
            let at = format!("programs.{key}[{idx}]");
            let statement = match stmt.op.as_str() {
                "put" => Statement::Put {
                    src: parse_address(&at, "src", &stmt.src)?,
                    dst: parse_address(&at, "dst", &stmt.dst)?,
                },
                "get" => Statement::Get {
                    src: parse_address(&at, "src", &stmt.src)?,
                    dst: parse_address(&at, "dst", &stmt.dst)?,
                },
                "compute" => {
                    reject_field(&at, "src", &stmt.src)?;
                    reject_field(&at, "dst", &stmt.dst)?;
                    Statement::Compute
                }
                other => {
                    return Err(ScenarioFileError::BadStatement {
                        at,
                        message: format!("unknown op {other:?}; expected put, get, or compute"),
                    })
                }
            };
            parsed.push(statement);
        }
        programs[process] = parsed;
    }
    let schedule = match (file.schedule.explicit, file.schedule.seed) {
        (Some(picks), None) => Schedule::Explicit(picks),
        (None, Some(seed)) => Schedule::Seeded(seed),
        _ => return Err(ScenarioFileError::ScheduleShape),
    };
    Ok(Scenario {
        processes: n,
        cells: file
            .cells
            .iter()
            .map(|c| {
                (
                    Address {
                        process: c.process,
                        space: c.space,
                        offset: c.offset,
                    },
                    c.value,
                )
            })
            .collect(),
        programs,
        schedule,
    })
}

/// Reads and parses a scenario file from disk.
pub fn load_scenario(path: &Path) -> Result<Scenario, ScenarioFileError> {
    let text = std::fs::read_to_string(path).map_err(|source| ScenarioFileError::Io {
        path: path.display().to_string(),
        source,
    })?;
    parse_scenario(&text)
}

#[cfg(test)]
mod tests {
    use super::*;

    const TWO_WRITERS: &str = r#"
version = 1
processes = 3

[[cells]]
process = 1
space = "public"
offset = 0
value = 0

[[cells]]
process = 0
space = "private"
offset = 0
value = 7

[[cells]]
process = 2
space = "private"
offset = 0
value = 9

[programs]
p0 = [{ op = "put", src = "P0.priv[0]", dst = "P1.pub[0]" }]
p2 = [{ op = "put", src = "P2.priv[0]", dst = "P1.pub[0]" }]

[schedule]
explicit = [0, 0, 2, 2]
"#;

    #[test]
    fn parses_a_full_scenario() {
        let scenario = parse_scenario(TWO_WRITERS).unwrap();
        assert_eq!(scenario.processes, 3);
        assert_eq!(scenario.cells.len(), 3);
        assert_eq!(scenario.programs[0].len(), 1);
        assert_eq!(scenario.programs[1].len(), 0);
        assert_eq!(
            scenario.programs[2][0],
            Statement::Put {
                src: Address::private(2, 0),
                dst: Address::public(1, 0)
            }
        );
        assert_eq!(scenario.schedule, Schedule::Explicit(vec![0, 0, 2, 2]));
        assert!(crate::sim::validate(&scenario).is_empty());
    }

    #[test]
    fn rejects_wrong_version() {
        let text = TWO_WRITERS.replace("version = 1", "version = 7");
        assert!(matches!(
            parse_scenario(&text),
            Err(ScenarioFileError::Version(7))
        ));
    }

    #[test]
    fn rejects_bad_program_key() {
        let text = TWO_WRITERS.replace("p2 = ", "p9 = ");
        assert!(matches!(
            parse_scenario(&text),
            Err(ScenarioFileError::BadProgramKey(_))
        ));
    }

    #[test]
    fn rejects_unknown_op_with_location() {
        let text = TWO_WRITERS.replace(
            r#"op = "put", src = "P2.priv[0]""#,
            r#"op = "swap", src = "P2.priv[0]""#,
        );
        match parse_scenario(&text) {
            Err(ScenarioFileError::BadStatement { at, message }) => {
                assert_eq!(at, "programs.p2[0]");
                assert!(message.contains("swap"));
            }
            other => panic!("expected BadStatement, got {other:?}"),
        }
    }

    #[test]
    fn rejects_malformed_address() {
        let text = TWO_WRITERS.replace("P2.priv[0]", "P2.heap[0]");
        assert!(matches!(
            parse_scenario(&text),
            Err(ScenarioFileError::BadStatement { .. })
        ));
    }

    #[test]
    fn toml_errors_carry_position() {
        let err = parse_scenario("version = ").unwrap_err();
        let message = err.to_string();
        assert!(
            message.contains("line"),
            "diagnostic should be line-anchored: {message}"
        );
    }

    #[test]
    fn schedule_must_pick_one_form() {
        let text = TWO_WRITERS.replace(
            "explicit = [0, 0, 2, 2]",
            "explicit = [0, 0, 2, 2]\nseed = 3",
        );
        assert!(matches!(
            parse_scenario(&text),
            Err(ScenarioFileError::ScheduleShape)
        ));
        let text = TWO_WRITERS.replace("explicit = [0, 0, 2, 2]", "");
        assert!(matches!(
            parse_scenario(&text),
            Err(ScenarioFileError::ScheduleShape)
        ));
    }

    #[test]
    fn seeded_schedule_parses() {
        let text = TWO_WRITERS.replace("explicit = [0, 0, 2, 2]", "seed = 42");
        let scenario = parse_scenario(&text).unwrap();
        assert_eq!(scenario.schedule, Schedule::Seeded(42));
    }
}
