//! CSV trajectory files.
//!
//! Every file starts with a fixed header; lines starting with `#` are
//! comments (used for the seed). Floats are written with 17 significant
//! digits so a write / read round trip is exact.

use std::fs::File;
use std::io::{BufWriter, Read, Write};
use std::path::Path;

use csv::{ReaderBuilder, StringRecord};

use crate::error::{Error, Result};
use crate::motion_model::State5;
use crate::policy::PolicyKind;
use crate::scenario::LabeledTrajectory;
use crate::trajectory::{Measurement3, Trajectory};
use crate::ukf::GaussianState;

pub const TRUTH_HEADER: [&str; 7] = ["t", "x", "y", "theta", "v", "w", "label"];
pub const MEASUREMENT_HEADER: [&str; 4] = ["t", "x", "y", "theta"];
pub const STATE_HEADER: [&str; 6] = ["t", "x", "y", "theta", "v", "w"];
pub const ESTIMATE_HEADER: [&str; 11] = [
    "t",
    "x",
    "y",
    "theta",
    "v",
    "w",
    "var_x",
    "var_y",
    "var_theta",
    "var_v",
    "var_w",
];

/// Tolerance on the sampling grid of a file.
const TIME_TOL: f64 = 1e-9;

pub fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

/// A parsed file: its rows plus the `key=value` pairs of its comment lines.
#[derive(Debug, Clone, PartialEq)]
pub struct CsvTable {
    pub comments: Vec<(String, String)>,
    pub rows: Vec<StringRecord>,
}

impl CsvTable {
    pub fn comment(&self, key: &str) -> Option<&str> {
        self.comments.iter().find(|(k, _)| k == key).map(|(_, v)| v.as_str())
    }
}

fn parse_comments(text: &str) -> Vec<(String, String)> {
    text.lines()
        .filter_map(|l| l.strip_prefix('#'))
        .filter_map(|l| l.split_once('='))
        .map(|(k, v)| (k.trim().to_string(), v.trim().to_string()))
        .collect()
}

/// Reads a CSV whose header must equal `header`.
pub fn read_table(text: &str, header: &[&str]) -> Result<CsvTable> {
    let mut rdr = ReaderBuilder::new()
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let got = rdr
        .headers()
        .map_err(|e| parse_error(1, "header", e.to_string()))?
        .clone();
    if got.iter().ne(header.iter().copied()) {
        return Err(parse_error(
            1,
            "header",
            format!(
                "expected `{}`, found `{}`",
                header.join(","),
                got.iter().collect::<Vec<_>>().join(",")
            ),
        ));
    }
    let mut rows = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| {
            let row = e.position().map_or(i + 2, |p| p.line() as usize);
            parse_error(row, "record", e.to_string())
        })?;
        rows.push(rec);
    }
    Ok(CsvTable {
        comments: parse_comments(text),
        rows,
    })
}

fn parse_error(row: usize, column: &str, message: impl Into<String>) -> Error {
    Error::Parse {
        row,
        column: column.to_string(),
        message: message.into(),
    }
}

/// Data row `i` is on line `i + 2` of the file (after the header), not
/// counting comments.
fn field(rec: &StringRecord, i: usize, header: &[&str], col: usize) -> Result<f64> {
    let raw = rec.get(col).unwrap_or("");
    let v: f64 = raw
        .parse()
        .map_err(|_| parse_error(i + 2, header[col], format!("`{raw}` is not a number")))?;
    if !v.is_finite() {
        return Err(parse_error(i + 2, header[col], format!("`{raw}` is not finite")));
    }
    Ok(v)
}

fn heading(rec: &StringRecord, i: usize, header: &[&str], col: usize) -> Result<f64> {
    let v = field(rec, i, header, col)?;
    if !(v > -std::f64::consts::PI && v <= std::f64::consts::PI) {
        return Err(parse_error(
            i + 2,
            header[col],
            format!("heading {v} outside (-pi, pi]"),
        ));
    }
    Ok(v)
}

/// Checks the time column and returns `(t0, dt)`.
fn time_grid(times: &[f64]) -> Result<(f64, f64)> {
    let Some(&t0) = times.first() else {
        return Err(parse_error(2, "t", "file has no data rows"));
    };
    if times.len() < 2 {
        return Err(parse_error(2, "t", "at least two rows are needed to infer dt"));
    }
    let dt = times[1] - t0;
    if !(dt > 0.0) {
        return Err(parse_error(3, "t", "time must be strictly increasing"));
    }
    for (i, &t) in times.iter().enumerate() {
        if (t - (t0 + i as f64 * dt)).abs() > TIME_TOL {
            return Err(parse_error(
                i + 2,
                "t",
                format!("time {t} is off the uniform grid of step {dt}"),
            ));
        }
    }
    Ok((t0, dt))
}

fn write_rows<W: Write>(
    mut out: W,
    comments: &[(String, String)],
    header: &[&str],
    rows: impl Iterator<Item = Vec<String>>,
) -> Result<()> {
    for (k, v) in comments {
        writeln!(out, "# {k}={v}")?;
    }
    writeln!(out, "{}", header.join(","))?;
    for row in rows {
        writeln!(out, "{}", row.join(","))?;
    }
    out.flush()?;
    Ok(())
}

pub fn read_to_string(path: &Path) -> Result<String> {
    let mut s = String::new();
    File::open(path)?.read_to_string(&mut s)?;
    Ok(s)
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(File::create(path)?))
}

pub fn format_truth(truth: &LabeledTrajectory, comments: &[(String, String)]) -> Result<String> {
    let mut buf = Vec::new();
    let rows = truth.states.iter().zip(&truth.labels).enumerate().map(|(i, (s, l))| {
        vec![
            fmt_f64(truth.states.time(i)),
            fmt_f64(s.x),
            fmt_f64(s.y),
            fmt_f64(s.theta),
            fmt_f64(s.v),
            fmt_f64(s.w),
            l.name().to_string(),
        ]
    });
    write_rows(&mut buf, comments, &TRUTH_HEADER, rows)?;
    Ok(String::from_utf8(buf).expect("ascii output"))
}

pub fn parse_truth(text: &str) -> Result<(LabeledTrajectory, CsvTable)> {
    let table = read_table(text, &TRUTH_HEADER)?;
    let h = &TRUTH_HEADER;
    let mut times = Vec::with_capacity(table.rows.len());
    let mut states = Vec::with_capacity(table.rows.len());
    let mut labels = Vec::with_capacity(table.rows.len());
    for (i, r) in table.rows.iter().enumerate() {
        times.push(field(r, i, h, 0)?);
        states.push(State5::new(
            field(r, i, h, 1)?,
            field(r, i, h, 2)?,
            heading(r, i, h, 3)?,
            field(r, i, h, 4)?,
            field(r, i, h, 5)?,
        ));
        let raw = r.get(6).unwrap_or("");
        labels.push(
            raw.parse::<PolicyKind>()
                .map_err(|_| parse_error(i + 2, "label", format!("unknown policy `{raw}`")))?,
        );
    }
    let (t0, dt) = time_grid(&times)?;
    let changepoints = labels
        .windows(2)
        .enumerate()
        .filter(|(_, w)| w[0] != w[1])
        .map(|(i, _)| i)
        .collect();
    Ok((
        LabeledTrajectory {
            states: Trajectory::new(t0, dt, states),
            labels,
            changepoints,
        },
        table,
    ))
}

pub fn format_measurements(z: &Trajectory<Measurement3>, comments: &[(String, String)]) -> Result<String> {
    let mut buf = Vec::new();
    let rows = z
        .iter()
        .enumerate()
        .map(|(i, m)| vec![fmt_f64(z.time(i)), fmt_f64(m.x), fmt_f64(m.y), fmt_f64(m.theta)]);
    write_rows(&mut buf, comments, &MEASUREMENT_HEADER, rows)?;
    Ok(String::from_utf8(buf).expect("ascii output"))
}

pub fn parse_measurements(text: &str) -> Result<(Trajectory<Measurement3>, CsvTable)> {
    let table = read_table(text, &MEASUREMENT_HEADER)?;
    let h = &MEASUREMENT_HEADER;
    let mut times = Vec::with_capacity(table.rows.len());
    let mut obs = Vec::with_capacity(table.rows.len());
    for (i, r) in table.rows.iter().enumerate() {
        times.push(field(r, i, h, 0)?);
        obs.push(Measurement3::new(
            field(r, i, h, 1)?,
            field(r, i, h, 2)?,
            heading(r, i, h, 3)?,
        ));
    }
    let (t0, dt) = time_grid(&times)?;
    Ok((Trajectory::new(t0, dt, obs), table))
}

pub fn format_states(states: &Trajectory<State5>, comments: &[(String, String)]) -> Result<String> {
    let mut buf = Vec::new();
    let rows = states.iter().enumerate().map(|(i, s)| {
        vec![
            fmt_f64(states.time(i)),
            fmt_f64(s.x),
            fmt_f64(s.y),
            fmt_f64(s.theta),
            fmt_f64(s.v),
            fmt_f64(s.w),
        ]
    });
    write_rows(&mut buf, comments, &STATE_HEADER, rows)?;
    Ok(String::from_utf8(buf).expect("ascii output"))
}

pub fn parse_states(text: &str) -> Result<Trajectory<State5>> {
    let table = read_table(text, &STATE_HEADER)?;
    states_from_rows(&table, &STATE_HEADER)
}

fn states_from_rows(table: &CsvTable, h: &[&str]) -> Result<Trajectory<State5>> {
    let mut times = Vec::with_capacity(table.rows.len());
    let mut states = Vec::with_capacity(table.rows.len());
    for (i, r) in table.rows.iter().enumerate() {
        times.push(field(r, i, h, 0)?);
        states.push(State5::new(
            field(r, i, h, 1)?,
            field(r, i, h, 2)?,
            heading(r, i, h, 3)?,
            field(r, i, h, 4)?,
            field(r, i, h, 5)?,
        ));
    }
    let (t0, dt) = time_grid(&times)?;
    Ok(Trajectory::new(t0, dt, states))
}

pub fn format_estimates(beliefs: &Trajectory<GaussianState>, comments: &[(String, String)]) -> Result<String> {
    let mut buf = Vec::new();
    let rows = beliefs.iter().enumerate().map(|(i, g)| {
        let s = g.state();
        let mut row = vec![
            fmt_f64(beliefs.time(i)),
            fmt_f64(s.x),
            fmt_f64(s.y),
            fmt_f64(s.theta),
            fmt_f64(s.v),
            fmt_f64(s.w),
        ];
        row.extend((0..5).map(|k| fmt_f64(g.cov[(k, k)])));
        row
    });
    write_rows(&mut buf, comments, &ESTIMATE_HEADER, rows)?;
    Ok(String::from_utf8(buf).expect("ascii output"))
}

/// Reads the state columns of an estimate file; variances are validated but
/// not returned.
pub fn parse_estimates(text: &str) -> Result<Trajectory<State5>> {
    let table = read_table(text, &ESTIMATE_HEADER)?;
    for (i, r) in table.rows.iter().enumerate() {
        for (col, name) in ESTIMATE_HEADER.iter().enumerate().skip(6) {
            let v = field(r, i, &ESTIMATE_HEADER, col)?;
            if v < 0.0 {
                return Err(parse_error(i + 2, name, "negative variance"));
            }
        }
    }
    states_from_rows(&table, &ESTIMATE_HEADER)
}

/// Reads either a plain state file or an estimate file, by header.
pub fn parse_any_states(text: &str) -> Result<Trajectory<State5>> {
    let first = text.lines().find(|l| !l.starts_with('#')).unwrap_or("");
    if first.split(',').count() == ESTIMATE_HEADER.len() {
        parse_estimates(text)
    } else {
        parse_states(text)
    }
}

pub fn write_file(path: &Path, contents: &str) -> Result<()> {
    let mut f = create(path)?;
    f.write_all(contents.as_bytes())?;
    f.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenario::{build_route_path, RoundaboutGeometry, Route};

    #[test]
    fn truth_round_trip_is_exact() {
        let t = build_route_path(&RoundaboutGeometry::default(), &Route::new(0, 3)).unwrap();
        let text = format_truth(&t, &[("seed".into(), "7".into())]).unwrap();
        let (back, table) = parse_truth(&text).unwrap();
        assert_eq!(table.comment("seed"), Some("7"));
        assert_eq!(back.labels, t.labels);
        assert_eq!(back.changepoints, t.changepoints);
        for (a, b) in back.states.iter().zip(t.states.iter()) {
            assert_eq!(a, b);
        }
        assert!((back.dt() - t.dt()).abs() < 1e-12);
    }

    #[test]
    fn measurement_round_trip_is_exact() {
        let z = Trajectory::new(
            0.0,
            0.1,
            vec![
                Measurement3::new(1.0 / 3.0, -2e-17, std::f64::consts::PI),
                Measurement3::new(1e300, 5.5, -3.0),
            ],
        );
        let (back, _) = parse_measurements(&format_measurements(&z, &[]).unwrap()).unwrap();
        assert_eq!(back.samples, z.samples);
    }

    #[test]
    fn malformed_cell_names_row_and_column() {
        let text = "t,x,y,theta\n0.0,1,2,0.1\n0.1,oops,2,0.1\n";
        match parse_measurements(text) {
            Err(Error::Parse { row, column, .. }) => {
                assert_eq!(row, 3);
                assert_eq!(column, "x");
            }
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn rejects_bad_header_grid_and_heading() {
        assert!(matches!(
            parse_measurements("t,y,x,theta\n0,0,0,0\n0.1,0,0,0\n"),
            Err(Error::Parse { .. })
        ));
        let gap = "t,x,y,theta\n0.0,0,0,0\n0.1,0,0,0\n0.3,0,0,0\n";
        assert!(matches!(parse_measurements(gap), Err(Error::Parse { row: 4, .. })));
        let angle = "t,x,y,theta\n0.0,0,0,0\n0.1,0,0,-3.2\n";
        assert!(matches!(parse_measurements(angle), Err(Error::Parse { row: 3, .. })));
    }

    #[test]
    fn estimate_file_reads_as_states() {
        let g = GaussianState::default_init(&Measurement3::new(1.0, 2.0, 0.5));
        let beliefs = Trajectory::new(0.0, 0.1, vec![g.clone(), g]);
        let text = format_estimates(&beliefs, &[]).unwrap();
        let states = parse_any_states(&text).unwrap();
        assert_eq!(states[1], beliefs[1].state());
    }
}
