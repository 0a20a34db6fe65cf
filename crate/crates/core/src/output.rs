//! Plot-ready CSV and JSON writers. Every CSV has a header row, `,` as the
//! delimiter and shortest round-trip decimal formatting, so identical data
//! produce identical bytes.

use std::fs;
use std::path::Path;

use serde::Serialize;

use crate::dsmc::MacroField;
use crate::error::{Error, Result};
use crate::hydro::{ClosureTable, HydroState};
use crate::moments::{DiagramRow, LaneMomentState};

fn io_error(path: &Path, source: std::io::Error) -> Error {
    Error::Io {
        path: path.display().to_string(),
        source,
    }
}

/// Writes `header` and numeric `rows` to `path`.
pub fn write_rows<I>(path: &Path, header: &[&str], rows: I) -> Result<()>
where
    I: IntoIterator<Item = Vec<f64>>,
{
    let file = fs::File::create(path).map_err(|e| io_error(path, e))?;
    let mut w = csv::Writer::from_writer(std::io::BufWriter::new(file));
    w.write_record(header)?;
    for row in rows {
        debug_assert_eq!(row.len(), header.len());
        w.write_record(row.iter().map(|v| v.to_string()))?;
    }
    w.flush().map_err(|e| io_error(path, e))?;
    Ok(())
}

/// Pretty-printed JSON with a trailing newline.
pub fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)
        .map_err(|e| Error::Experiment(format!("cannot serialize {}: {e}", path.display())))?;
    text.push('\n');
    fs::write(path, text).map_err(|e| io_error(path, e))
}

/// `t,rho1,rho2,m1,m2,E1,E2`, plus `m1_inf,m2_inf` when asymptotes are given.
pub fn write_trajectory(
    path: &Path,
    states: &[LaneMomentState],
    asymptotes: Option<[f64; 2]>,
) -> Result<()> {
    let mut header = vec!["t", "rho1", "rho2", "m1", "m2", "E1", "E2"];
    if asymptotes.is_some() {
        header.extend(["m1_inf", "m2_inf"]);
    }
    write_rows(
        path,
        &header,
        states.iter().map(|s| {
            let mut row = vec![s.t, s.rho[0], s.rho[1], s.m[0], s.m[1], s.e[0], s.e[1]];
            if let Some(a) = asymptotes {
                row.extend(a);
            }
            row
        }),
    )
}

/// `rho,rho1_inf,rho2_inf,m1_inf,m2_inf,q1,q2`.
pub fn write_diagram(path: &Path, rows: &[DiagramRow]) -> Result<()> {
    write_rows(
        path,
        &[
            "rho", "rho1_inf", "rho2_inf", "m1_inf", "m2_inf", "q1", "q2",
        ],
        rows.iter().map(|r| {
            vec![
                r.rho_total,
                r.rho_inf[0],
                r.rho_inf[1],
                r.m_inf[0],
                r.m_inf[1],
                r.flux[0],
                r.flux[1],
            ]
        }),
    )
}

/// `x,rho1,rho2,m1,m2` at cell centres.
pub fn write_snapshot(path: &Path, field: &MacroField) -> Result<()> {
    write_rows(
        path,
        &["x", "rho1", "rho2", "m1", "m2"],
        field.grid.centers().into_iter().enumerate().map(|(c, x)| {
            vec![
                x,
                field.rho[0][c],
                field.rho[1][c],
                field.m[0][c],
                field.m[1][c],
            ]
        }),
    )
}

/// `x,v,f1,f2` on cell and speed-bin centres. Returns `false` without writing
/// when the field carries no phase histogram.
pub fn write_phase(path: &Path, field: &MacroField) -> Result<bool> {
    let Some(h) = &field.histogram else {
        return Ok(false);
    };
    let nv = field.nv;
    let rows = field
        .grid
        .centers()
        .into_iter()
        .enumerate()
        .flat_map(|(c, x)| {
            (0..nv).map(move |b| {
                let v = (b as f64 + 0.5) / nv as f64;
                vec![x, v, h[0][c * nv + b], h[1][c * nv + b]]
            })
        });
    write_rows(path, &["x", "v", "f1", "f2"], rows)?;
    Ok(true)
}

/// `x,rho1,rho2` for lane states, or `x,rho_bar,rho1,rho2` with lanes
/// recovered from the closure for a total-density state.
pub fn write_hydro(path: &Path, state: &HydroState, closure: Option<&ClosureTable>) -> Result<()> {
    let xs = state.grid.centers();
    match closure {
        None => write_rows(
            path,
            &["x", "rho1", "rho2"],
            xs.into_iter()
                .enumerate()
                .map(|(i, x)| vec![x, state.u[0][i], state.u[1][i]]),
        ),
        Some(table) => write_rows(
            path,
            &["x", "rho_bar", "rho1", "rho2"],
            xs.into_iter().enumerate().map(|(i, x)| {
                let rho_bar = state.u[0][i];
                let lanes = if rho_bar > 0.0 {
                    table.eval(rho_bar).rho
                } else {
                    [0.0; 2]
                };
                vec![x, rho_bar, lanes[0], lanes[1]]
            }),
        ),
    }
}

/// `epsilon,l1_lane1,l1_lane2`.
pub fn write_compare(path: &Path, rows: &[(f64, [f64; 2])]) -> Result<()> {
    write_rows(
        path,
        &["epsilon", "l1_lane1", "l1_lane2"],
        rows.iter().map(|(e, l)| vec![*e, l[0], l[1]]),
    )
}

/// `v,pdf,empirical`.
pub fn write_histogram(path: &Path, table: &[(f64, f64, f64)]) -> Result<()> {
    write_rows(
        path,
        &["v", "pdf", "empirical"],
        table.iter().map(|&(v, p, e)| vec![v, p, e]),
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::MomentSystem;

    #[test]
    fn trajectory_layout() {
        let dir = std::env::temp_dir().join(format!("multilane-out-{}", std::process::id()));
        fs::create_dir_all(&dir).unwrap();
        let path = dir.join("traj.csv");
        let s = LaneMomentState::new([0.8, 0.2], [0.5, 0.5], [0.3, 0.3], MomentSystem::Scaled);
        write_trajectory(&path, &[s], Some([0.25, 0.75])).unwrap();
        let text = fs::read_to_string(&path).unwrap();
        assert_eq!(
            text,
            "t,rho1,rho2,m1,m2,E1,E2,m1_inf,m2_inf\n0,0.8,0.2,0.5,0.5,0.3,0.3,0.25,0.75\n"
        );
        fs::remove_dir_all(&dir).unwrap();
    }
}
