//! Files written and read by the commands.
//!
//! JSON is written with `serde_json`, whose float formatting is the shortest
//! string that parses back to the same value, so reruns are byte-identical.

use std::fs;
use std::io::Write;
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use qsplan_core::policy::generate;
use qsplan_core::{ContactRecord, ControlPair, DmpParams, Pose2, Trajectory};

use crate::error::{CliError, CliResult};

pub const POLICY_VERSION: u32 = 1;

/// A trained policy: the movement-primitive parameters plus the start pose
/// its first control was built for.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PolicyFile {
    pub version: u32,
    /// Integration steps `N`.
    pub steps: usize,
    pub start: Pose2,
    /// Hole pose the policy was planned against.
    pub estimated_hole: Pose2,
    pub params: DmpParams,
}

impl PolicyFile {
    pub fn controls(&self) -> Vec<ControlPair> {
        generate(&self.params, self.steps)
    }

    pub fn read(path: &Path) -> CliResult<Self> {
        let text = read_input(path)?;
        let p: PolicyFile =
            serde_json::from_str(&text).map_err(|e| CliError::input(path, e))?;
        if p.version != POLICY_VERSION {
            return Err(CliError::input(path, format!("unsupported policy version {}", p.version)));
        }
        p.params.validate().map_err(|e| CliError::input(path, e))?;
        if p.steps == 0 {
            return Err(CliError::input(path, "steps must be >= 1"));
        }
        Ok(p)
    }
}

/// One line of a trajectory JSON-lines file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StepRecord {
    pub t: f64,
    /// `u1x, u1y, u2x, u2y` [m].
    pub u: [f64; 4],
    /// `x, y, theta` [m, m, rad].
    pub z: [f64; 3],
    /// `f1x, f1y, f2x, f2y` [N].
    pub f: [f64; 4],
    pub friction: [f64; 2],
    pub energy: [f64; 2],
    pub stability: f64,
    pub det_scaled: f64,
    pub slip: [bool; 2],
    pub unstable: bool,
    pub crossed: bool,
    pub converged: bool,
    pub contacts: Vec<ContactRecord>,
}

pub fn step_records(traj: &Trajectory) -> Vec<StepRecord> {
    (0..traj.samples.len())
        .map(|k| {
            let s = &traj.samples[k];
            let z = &traj.states[k];
            StepRecord {
                t: traj.times[k],
                u: traj.controls[k].to_array(),
                z: [z.x, z.y, z.theta],
                f: [s.forces[0].x, s.forces[0].y, s.forces[1].x, s.forces[1].y],
                friction: s.friction_cost,
                energy: s.energy_cost,
                stability: s.stability_cost,
                det_scaled: s.det_scaled,
                slip: s.slip,
                unstable: s.unstable,
                crossed: s.crossed,
                converged: s.converged,
                contacts: traj.equilibria[k].contacts.clone(),
            }
        })
        .collect()
}

pub const CSV_COLUMNS: [&str; 23] = [
    "t", "u1x", "u1y", "u2x", "u2y", "zx", "zy", "ztheta", "f1x", "f1y", "f2x", "f2y",
    "friction1", "friction2", "energy1", "energy2", "stability", "det_scaled", "slip1", "slip2",
    "unstable", "crossed", "converged",
];

fn flag(b: bool) -> String {
    u8::from(b).to_string()
}

/// Flat CSV in [`CSV_COLUMNS`] order; flags are 0/1.
pub fn records_to_csv(records: &[StepRecord]) -> CliResult<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let err = |e: csv::Error| CliError::Config(format!("csv encoding: {e}"));
    w.write_record(CSV_COLUMNS).map_err(err)?;
    for r in records {
        let mut row: Vec<String> = Vec::with_capacity(CSV_COLUMNS.len());
        row.push(r.t.to_string());
        row.extend(r.u.iter().map(f64::to_string));
        row.extend(r.z.iter().map(f64::to_string));
        row.extend(r.f.iter().map(f64::to_string));
        row.extend(r.friction.iter().map(f64::to_string));
        row.extend(r.energy.iter().map(f64::to_string));
        row.push(r.stability.to_string());
        row.push(r.det_scaled.to_string());
        row.extend(r.slip.iter().map(|b| flag(*b)));
        row.push(flag(r.unstable));
        row.push(flag(r.crossed));
        row.push(flag(r.converged));
        w.write_record(&row).map_err(err)?;
    }
    w.into_inner()
        .map_err(|e| CliError::Config(format!("csv encoding: {e}")))
}

pub fn read_input(path: &Path) -> CliResult<String> {
    fs::read_to_string(path).map_err(|e| match e.kind() {
        std::io::ErrorKind::NotFound => CliError::input(path, "file not found"),
        std::io::ErrorKind::InvalidData => CliError::input(path, "not valid UTF-8"),
        _ => CliError::io(path, e),
    })
}

pub fn read_jsonl<T: DeserializeOwned>(path: &Path) -> CliResult<Vec<T>> {
    let text = read_input(path)?;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            serde_json::from_str(l).map_err(|e| CliError::input(path, format!("line {}: {e}", i + 1)))
        })
        .collect()
}

pub fn ensure_dir(dir: &Path) -> CliResult<()> {
    fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))
}

pub fn write_bytes(path: &Path, bytes: &[u8]) -> CliResult<()> {
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            ensure_dir(parent)?;
        }
    }
    let mut f = fs::File::create(path).map_err(|e| CliError::io(path, e))?;
    f.write_all(bytes).map_err(|e| CliError::io(path, e))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> CliResult<()> {
    let mut text = serde_json::to_string_pretty(value).expect("serializable value");
    text.push('\n');
    write_bytes(path, text.as_bytes())
}

pub fn write_jsonl<T: Serialize>(path: &Path, items: &[T]) -> CliResult<()> {
    let mut text = String::new();
    for item in items {
        text.push_str(&serde_json::to_string(item).expect("serializable value"));
        text.push('\n');
    }
    write_bytes(path, text.as_bytes())
}

/// Writes `<stem>.jsonl` and `<stem>.csv` for a trajectory.
pub fn write_trajectory(dir: &Path, stem: &str, traj: &Trajectory) -> CliResult<()> {
    let records = step_records(traj);
    write_jsonl(&dir.join(format!("{stem}.jsonl")), &records)?;
    write_bytes(&dir.join(format!("{stem}.csv")), &records_to_csv(&records)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_trajectory_is_header_only() {
        let csv = String::from_utf8(records_to_csv(&[]).unwrap()).unwrap();
        assert_eq!(csv, CSV_COLUMNS.join(",") + "\n");
    }

    #[test]
    fn csv_floats_round_trip() {
        let r = StepRecord {
            t: 0.1 + 0.2,
            u: [1.0 / 3.0, -2e-17, 0.0375, 5e300],
            z: [f64::MIN_POSITIVE, 1.0, -0.0],
            f: [0.1; 4],
            friction: [1e-9, 2.5],
            energy: [0.0, 7.0],
            stability: 11.11,
            det_scaled: -3.5,
            slip: [true, false],
            unstable: false,
            crossed: true,
            converged: true,
            contacts: vec![],
        };
        let csv = String::from_utf8(records_to_csv(std::slice::from_ref(&r)).unwrap()).unwrap();
        let row: Vec<&str> = csv.lines().nth(1).unwrap().split(',').collect();
        assert_eq!(row.len(), CSV_COLUMNS.len());
        assert_eq!(row[0].parse::<f64>().unwrap(), r.t);
        assert_eq!(row[1].parse::<f64>().unwrap(), r.u[0]);
        assert_eq!(row[4].parse::<f64>().unwrap(), r.u[3]);
        assert_eq!(row[5].parse::<f64>().unwrap(), r.z[0]);
        assert_eq!(&row[18..], ["1", "0", "0", "1", "1"]);
    }
}
