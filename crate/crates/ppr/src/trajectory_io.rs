//! Trajectory CSV output: header `t,x1..xn,u1..um,J`, 17 significant digits.

use std::io::Write;
use std::path::Path;

use ppr_core::Trajectory;

use crate::IoError;

fn num(v: f64) -> String {
    format!("{v:.16e}")
}

pub fn write_trajectory<W: Write>(mut out: W, traj: &Trajectory) -> Result<(), IoError> {
    let n = traj.states.first().map_or(0, |s| s.len());
    let m = traj.inputs.first().map_or(0, |s| s.len());
    let mut header = vec!["t".to_string()];
    header.extend((1..=n).map(|i| format!("x{i}")));
    header.extend((1..=m).map(|i| format!("u{i}")));
    header.push("J".into());
    writeln!(out, "{}", header.join(","))?;
    for i in 0..traj.len() {
        let mut row = Vec::with_capacity(n + m + 2);
        row.push(num(traj.times[i]));
        row.extend(traj.states[i].iter().map(|&v| num(v)));
        row.extend(traj.inputs[i].iter().map(|&v| num(v)));
        row.push(num(traj.accumulated_cost[i]));
        writeln!(out, "{}", row.join(","))?;
    }
    Ok(())
}

pub fn save_trajectory(path: &Path, traj: &Trajectory) -> Result<(), IoError> {
    let file = std::io::BufWriter::new(std::fs::File::create(path)?);
    write_trajectory(file, traj)
}

/// Parses a file written by [`write_trajectory`] into `(header, rows)`.
pub fn read_trajectory_csv(text: &str) -> Result<(Vec<String>, Vec<Vec<f64>>), IoError> {
    let mut lines = text.lines();
    let header: Vec<String> = lines
        .next()
        .ok_or_else(|| IoError::Format("empty trajectory file".into()))?
        .split(',')
        .map(String::from)
        .collect();
    let mut rows = Vec::new();
    for line in lines {
        let row: Result<Vec<f64>, _> = line.split(',').map(str::parse::<f64>).collect();
        let row = row.map_err(|e| IoError::Format(format!("bad number in trajectory: {e}")))?;
        if row.len() != header.len() {
            return Err(IoError::Format("ragged trajectory row".into()));
        }
        rows.push(row);
    }
    Ok((header, rows))
}
