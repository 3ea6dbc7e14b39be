//! CSV and JSON output. Floats are written with 17 significant digits so
//! that every value reads back bit-identical.

use std::fs::File;
use std::io::Write;
use std::path::Path;

use crate::error::{Error, Result};
use crate::grid::{Field, Mesh};
use crate::instability::InstabilitySample;
use crate::model::{Masses, System};
use crate::solver::{Diagnostics, State};

pub fn fmt(x: f64) -> String {
    format!("{x:.16e}")
}

fn create(path: &Path) -> Result<File> {
    if let Some(dir) = path.parent() {
        if !dir.as_os_str().is_empty() {
            std::fs::create_dir_all(dir)?;
        }
    }
    Ok(File::create(path)?)
}

pub fn trajectory_header(system: System) -> Vec<&'static str> {
    let masses: &[&str] = match system {
        System::P1 => &["mass1", "mass2"],
        System::P2 => &["mass_total"],
    };
    let mut h = vec!["t"];
    h.extend_from_slice(masses);
    h.extend_from_slice(&[
        "min_conc",
        "dist_pos_eq",
        "dist_bnd_eq",
        "entropy",
        "dissipation",
        "omega_measure",
    ]);
    h
}

fn trajectory_row(t: f64, d: &Diagnostics) -> Vec<String> {
    let mut row = vec![fmt(t)];
    row.extend(d.masses.values().into_iter().map(fmt));
    row.extend(
        [
            d.min_conc,
            d.dist_pos_eq,
            d.dist_bnd_eq,
            d.entropy,
            d.dissipation,
            d.omega_measure,
        ]
        .into_iter()
        .map(fmt),
    );
    row
}

pub fn write_trajectory_csv<'a>(
    path: &Path,
    system: System,
    rows: impl IntoIterator<Item = (f64, &'a Diagnostics)>,
) -> Result<()> {
    write_trajectory(create(path)?, system, rows)
}

pub fn write_trajectory<'a, W: Write>(
    out: W,
    system: System,
    rows: impl IntoIterator<Item = (f64, &'a Diagnostics)>,
) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(trajectory_header(system))?;
    for (t, d) in rows {
        w.write_record(trajectory_row(t, d))?;
    }
    w.flush()?;
    Ok(())
}

/// Reads a trajectory CSV back as a header and rows of floats.
pub fn read_table(path: &Path) -> Result<(Vec<String>, Vec<Vec<f64>>)> {
    let mut r = csv::Reader::from_path(path)?;
    let header = r.headers()?.iter().map(str::to_string).collect();
    let mut rows = Vec::new();
    for rec in r.records() {
        let rec = rec?;
        let row = rec
            .iter()
            .map(|s| {
                s.parse::<f64>().map_err(|e| {
                    Error::Config(format!("{}: bad number '{s}': {e}", path.display()))
                })
            })
            .collect::<Result<Vec<f64>>>()?;
        rows.push(row);
    }
    Ok((header, rows))
}

pub fn write_states_csv<'a>(
    path: &Path,
    mesh: &Mesh,
    states: impl IntoIterator<Item = &'a State>,
) -> Result<()> {
    let mut w = csv::Writer::from_writer(create(path)?);
    w.write_record(["t", "cell", "x", "a", "b", "c"])?;
    for s in states {
        for i in 0..s.n_cells() {
            w.write_record([
                fmt(s.t),
                i.to_string(),
                fmt(mesh.center(i)),
                fmt(s.a[i]),
                fmt(s.b[i]),
                fmt(s.c[i]),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Groups rows by time, in file order. Cells must be listed `0..n` per time.
pub fn read_states_csv(path: &Path) -> Result<Vec<State>> {
    let mut r = csv::Reader::from_path(path)?;
    let mut states: Vec<State> = Vec::new();
    let mut current: Option<(f64, Vec<f64>, Vec<f64>, Vec<f64>)> = None;
    let bad = |m: String| Error::Config(format!("{}: {m}", path.display()));
    for rec in r.records() {
        let rec = rec?;
        if rec.len() != 6 {
            return Err(bad(format!("expected 6 columns, got {}", rec.len())));
        }
        let num = |i: usize| -> Result<f64> {
            rec[i]
                .parse::<f64>()
                .map_err(|e| bad(format!("bad number '{}': {e}", &rec[i])))
        };
        let t = num(0)?;
        let cell: usize = rec[1]
            .parse()
            .map_err(|e| bad(format!("bad cell index: {e}")))?;
        let same = matches!(&current, Some((t0, ..)) if *t0 == t) && cell != 0;
        if !same {
            if let Some((t0, a, b, c)) = current.take() {
                states.push(State {
                    t: t0,
                    a: Field::new(a),
                    b: Field::new(b),
                    c: Field::new(c),
                });
            }
            current = Some((t, Vec::new(), Vec::new(), Vec::new()));
        }
        let (_, a, b, c) = current.as_mut().expect("set above");
        if cell != a.len() {
            return Err(bad(format!("cells out of order at t = {t}")));
        }
        a.push(num(3)?);
        b.push(num(4)?);
        c.push(num(5)?);
    }
    if let Some((t0, a, b, c)) = current {
        states.push(State {
            t: t0,
            a: Field::new(a),
            b: Field::new(b),
            c: Field::new(c),
        });
    }
    Ok(states)
}

pub fn write_instability_csv(path: &Path, samples: &[InstabilitySample]) -> Result<()> {
    let mut w = csv::Writer::from_writer(create(path)?);
    w.write_record([
        "t",
        "y_low",
        "y_high",
        "avg_deviation",
        "truncation_floor",
        "min_conc",
        "energy_ratio",
        "nonlinear_ratio",
    ])?;
    for s in samples {
        w.write_record(
            [
                s.t,
                s.y_low,
                s.y_high,
                s.avg_deviation,
                s.truncation_floor,
                s.min_conc,
                s.energy_ratio,
                s.nonlinear_ratio,
            ]
            .map(fmt),
        )?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_json(path: &Path, value: &serde_json::Value) -> Result<()> {
    let mut f = create(path)?;
    serde_json::to_writer_pretty(&mut f, value)?;
    f.write_all(b"\n")?;
    Ok(())
}

pub fn masses_json(m: &Masses) -> serde_json::Value {
    serde_json::to_value(m).expect("masses serialize")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn states_round_trip_exactly() {
        let dir = tempfile::tempdir().unwrap();
        let mesh = Mesh::new(5).unwrap();
        let mut s1 = State::new(
            Field::from_fn(&mesh, |x| x.sin() / 3.0),
            Field::from_fn(&mesh, |x| 1.0 / (1.0 + x)),
            Field::constant(&mesh, std::f64::consts::PI),
        );
        let mut s2 = s1.clone();
        s1.t = 0.0;
        s2.t = 0.1 + 0.2;
        s2.a[2] = 1e-300;
        let path = dir.path().join("s.csv");
        write_states_csv(&path, &mesh, [&s1, &s2]).unwrap();
        let back = read_states_csv(&path).unwrap();
        assert_eq!(back, vec![s1, s2]);
    }

    #[test]
    fn float_format_round_trips() {
        for x in [0.1, 1.0 / 3.0, 2.5e-308, f64::MAX, -7.0e22, 0.0] {
            assert_eq!(fmt(x).parse::<f64>().unwrap(), x);
        }
        assert!(fmt(f64::NAN).parse::<f64>().unwrap().is_nan());
    }
}
