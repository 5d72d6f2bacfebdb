//! Text formats read and written by the command-line tool.
//!
//! Point clouds: one `x y z` point per line, separated by whitespace or
//! commas. Depth maps: plain PGM (`P2`, gray values times a scale give
//! meters) or one row of meters per line. Intrinsics and poses: `key = values`
//! lines with keys `fx fy cx cy` and `rotation` (9 values, row-major) /
//! `translation` (3 values). Lines starting with `#` are comments everywhere.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use nalgebra::{Matrix3, Vector3};
use wcl_core::refine::TraceRow;
use wcl_core::{CouplingMatrix, DepthImage, Intrinsics, PointCloud, RigidTransform};

use crate::error::{CliError, CliResult};

pub fn read_text(path: &Path) -> CliResult<String> {
    fs::read_to_string(path).map_err(|e| CliError::io(path, e))
}

pub fn write_text(path: &Path, text: &str) -> CliResult<()> {
    fs::write(path, text).map_err(|e| CliError::io(path, e))
}

/// Non-comment, non-blank lines with their 1-based numbers.
fn content_lines(text: &str) -> impl Iterator<Item = (usize, &str)> {
    text.lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim()))
        .filter(|(_, l)| !l.is_empty() && !l.starts_with('#'))
}

fn fields(line: &str) -> impl Iterator<Item = &str> {
    line.split(|c: char| c == ',' || c.is_whitespace())
        .filter(|s| !s.is_empty())
}

fn parse_number(path: &Path, line: usize, token: &str) -> CliResult<f64> {
    match token.parse::<f64>() {
        Ok(x) if x.is_finite() => Ok(x),
        Ok(_) => Err(CliError::at_line(path, line, format!("non-finite value {token:?}"))),
        Err(_) => Err(CliError::at_line(path, line, format!("not a number: {token:?}"))),
    }
}

pub fn parse_cloud(path: &Path, text: &str) -> CliResult<Vec<Vector3<f64>>> {
    let mut points = Vec::new();
    for (n, line) in content_lines(text) {
        let values = fields(line)
            .map(|t| parse_number(path, n, t))
            .collect::<CliResult<Vec<f64>>>()?;
        if values.len() != 3 {
            return Err(CliError::at_line(
                path,
                n,
                format!("expected 3 coordinates, found {}", values.len()),
            ));
        }
        points.push(Vector3::new(values[0], values[1], values[2]));
    }
    if points.is_empty() {
        return Err(CliError::Input(format!("{}: no points", path.display())));
    }
    Ok(points)
}

pub fn read_cloud(path: &Path, frame: &str) -> CliResult<PointCloud> {
    let points = parse_cloud(path, &read_text(path)?)?;
    Ok(PointCloud::new(frame, frame, points)?)
}

/// Depth from PGM or row-per-line text, chosen by the `P2` magic.
pub fn parse_depth(path: &Path, text: &str, pgm_scale: f64) -> CliResult<DepthImage> {
    if text.trim_start().starts_with("P2") {
        parse_pgm(path, text, pgm_scale)
    } else {
        parse_depth_rows(path, text)
    }
}

pub fn read_depth(path: &Path, pgm_scale: f64) -> CliResult<DepthImage> {
    parse_depth(path, &read_text(path)?, pgm_scale)
}

fn parse_depth_rows(path: &Path, text: &str) -> CliResult<DepthImage> {
    let mut width = None;
    let mut values = Vec::new();
    let mut height = 0;
    for (n, line) in content_lines(text) {
        let row = fields(line)
            .map(|t| parse_number(path, n, t))
            .collect::<CliResult<Vec<f64>>>()?;
        match width {
            None => width = Some(row.len()),
            Some(w) if w != row.len() => {
                return Err(CliError::at_line(
                    path,
                    n,
                    format!("row has {} values, expected {w}", row.len()),
                ))
            }
            _ => {}
        }
        values.extend(row);
        height += 1;
    }
    let width = width.ok_or_else(|| CliError::Input(format!("{}: empty depth map", path.display())))?;
    Ok(DepthImage::new(width, height, values)?)
}

fn parse_pgm(path: &Path, text: &str, scale: f64) -> CliResult<DepthImage> {
    let mut tokens = text.lines().enumerate().flat_map(|(i, line)| {
        let line = line.split('#').next().unwrap_or("");
        line.split_whitespace().map(move |t| (i + 1, t))
    });
    // The magic was checked by the caller.
    tokens.next();
    let mut header = |what: &str| -> CliResult<(usize, usize)> {
        let (n, t) = tokens
            .next()
            .ok_or_else(|| CliError::Input(format!("{}: PGM header ends before {what}", path.display())))?;
        let v = t
            .parse::<usize>()
            .map_err(|_| CliError::at_line(path, n, format!("bad PGM {what}: {t:?}")))?;
        Ok((n, v))
    };
    let (_, width) = header("width")?;
    let (_, height) = header("height")?;
    let (n, maxval) = header("maxval")?;
    if width == 0 || height == 0 || maxval == 0 || maxval > 65535 {
        return Err(CliError::at_line(path, n, "PGM size and maxval must be positive, maxval ≤ 65535"));
    }
    let mut values = Vec::with_capacity(width * height);
    for (n, t) in tokens {
        let g = t
            .parse::<usize>()
            .map_err(|_| CliError::at_line(path, n, format!("bad gray value {t:?}")))?;
        if g > maxval {
            return Err(CliError::at_line(path, n, format!("gray value {g} exceeds maxval {maxval}")));
        }
        values.push(g as f64 * scale);
    }
    if values.len() != width * height {
        return Err(CliError::Input(format!(
            "{}: expected {} gray values, found {}",
            path.display(),
            width * height,
            values.len()
        )));
    }
    Ok(DepthImage::new(width, height, values)?)
}

/// Keys mapped to their values and the line they were defined on.
pub fn parse_key_values(path: &Path, text: &str) -> CliResult<BTreeMap<String, (usize, Vec<f64>)>> {
    let mut out = BTreeMap::new();
    for (n, line) in content_lines(text) {
        let (key, rest) = match line.split_once('=') {
            Some((k, r)) => (k.trim(), r),
            None => line.split_once(char::is_whitespace).unwrap_or((line, "")),
        };
        if key.is_empty() {
            return Err(CliError::at_line(path, n, "missing key"));
        }
        let values = fields(rest)
            .map(|t| parse_number(path, n, t))
            .collect::<CliResult<Vec<f64>>>()?;
        if out.insert(key.to_string(), (n, values)).is_some() {
            return Err(CliError::at_line(path, n, format!("duplicate key {key:?}")));
        }
    }
    Ok(out)
}

fn take<'a>(
    path: &Path,
    map: &'a BTreeMap<String, (usize, Vec<f64>)>,
    key: &str,
    len: usize,
) -> CliResult<&'a [f64]> {
    let (n, values) = map
        .get(key)
        .ok_or_else(|| CliError::Input(format!("{}: missing key {key:?}", path.display())))?;
    if values.len() != len {
        return Err(CliError::at_line(
            path,
            *n,
            format!("{key} needs {len} values, found {}", values.len()),
        ));
    }
    Ok(values)
}

pub fn read_intrinsics(path: &Path) -> CliResult<Intrinsics> {
    let map = parse_key_values(path, &read_text(path)?)?;
    let get = |k| take(path, &map, k, 1).map(|v| v[0]);
    Ok(Intrinsics::new(get("fx")?, get("fy")?, get("cx")?, get("cy")?)?)
}

pub fn read_pose(path: &Path) -> CliResult<RigidTransform> {
    let map = parse_key_values(path, &read_text(path)?)?;
    let r = take(path, &map, "rotation", 9)?;
    let t = take(path, &map, "translation", 3)?;
    Ok(RigidTransform::new(
        Matrix3::from_row_slice(r),
        Vector3::from_column_slice(t),
    )?)
}

fn join(values: impl IntoIterator<Item = f64>, sep: &str) -> String {
    values
        .into_iter()
        .map(|v| v.to_string())
        .collect::<Vec<_>>()
        .join(sep)
}

pub fn format_intrinsics(k: &Intrinsics) -> String {
    format!("fx = {}\nfy = {}\ncx = {}\ncy = {}\n", k.fx, k.fy, k.cx, k.cy)
}

pub fn format_pose(t: &RigidTransform) -> String {
    let r = t.rotation();
    let rows = (0..3).flat_map(|i| (0..3).map(move |j| r[(i, j)]));
    format!(
        "rotation = {}\ntranslation = {}\n",
        join(rows, " "),
        join(t.translation().iter().copied(), " ")
    )
}

pub fn format_depth_rows(d: &DepthImage) -> String {
    let mut out = String::new();
    for row in d.values().chunks(d.width()) {
        out.push_str(&join(row.iter().copied(), ","));
        out.push('\n');
    }
    out
}

/// 16-bit plain PGM; depths are divided by `scale` and rounded.
pub fn format_pgm(d: &DepthImage, scale: f64) -> String {
    let mut out = format!("P2\n{} {}\n65535\n", d.width(), d.height());
    for row in d.values().chunks(d.width()) {
        let gray: Vec<String> = row
            .iter()
            .map(|v| ((v / scale).round().clamp(0.0, 65535.0) as u32).to_string())
            .collect();
        out.push_str(&gray.join(" "));
        out.push('\n');
    }
    out
}

pub fn format_coupling(p: &CouplingMatrix) -> String {
    let mut out = String::new();
    for i in 0..p.rows() {
        out.push_str(&join(p.row(i).iter().copied(), ","));
        out.push('\n');
    }
    out
}

pub fn format_trace(trace: &[TraceRow]) -> String {
    let mut out = String::from("step,loss,grad_norm,pose_error\n");
    for r in trace {
        let _ = writeln!(out, "{},{},{},{}", r.step, r.loss, r.grad_norm, r.pose_error);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn p() -> &'static Path {
        Path::new("f.txt")
    }

    #[test]
    fn clouds_accept_commas_spaces_and_comments() {
        let text = "# header\n1 2 3\n\n4,5,6\n  7, 8\t9  \n";
        let pts = parse_cloud(p(), text).unwrap();
        assert_eq!(pts, vec![Vector3::new(1.0, 2.0, 3.0), Vector3::new(4.0, 5.0, 6.0), Vector3::new(7.0, 8.0, 9.0)]);
    }

    #[test]
    fn malformed_cloud_line_is_named() {
        let err = parse_cloud(p(), "0 0 0\n1 2\n").unwrap_err();
        assert!(err.to_string().starts_with("f.txt:2:"), "{err}");
        assert_eq!(err.exit_code(), 2);
        let err = parse_cloud(p(), "0 0 x\n").unwrap_err();
        assert!(err.to_string().contains("f.txt:1:"));
        assert!(parse_cloud(p(), "nan 0 0\n").is_err());
        assert!(parse_cloud(p(), "# nothing\n").is_err());
    }

    #[test]
    fn depth_rows_and_pgm() {
        let d = parse_depth(p(), "1,2,3\n4 5 6\n", 1.0).unwrap();
        assert_eq!((d.width(), d.height()), (3, 2));
        assert_eq!(d.get(2, 1), 6.0);
        let err = parse_depth(p(), "1 2\n3\n", 1.0).unwrap_err();
        assert!(err.to_string().contains("f.txt:2:"));

        let pgm = "P2\n# comment\n3 2\n1000\n1000 0 500\n250 1000 0\n";
        let d = parse_depth(p(), pgm, 0.001).unwrap();
        assert_eq!(d.values(), &[1.0, 0.0, 0.5, 0.25, 1.0, 0.0]);
        assert!(parse_depth(p(), "P2\n2 2\n10\n1 2 3\n", 1.0).is_err());
        let err = parse_depth(p(), "P2\n2 1\n10\n1 11\n", 1.0).unwrap_err();
        assert!(err.to_string().contains("f.txt:4:"));
    }

    #[test]
    fn depth_round_trips_through_both_formats() {
        let d = DepthImage::from_fn(5, 3, |u, v| 1.0 + 0.25 * u as f64 + 0.5 * v as f64).unwrap();
        assert_eq!(parse_depth(p(), &format_depth_rows(&d), 1.0).unwrap(), d);
        assert_eq!(parse_depth(p(), &format_pgm(&d, 0.001), 0.001).unwrap(), d);
    }

    #[test]
    fn key_value_files() {
        let text = "# camera\nfx = 100\nfy 100\ncx=50, \ncy = 25\n";
        let map = parse_key_values(p(), text).unwrap();
        assert_eq!(map["fy"].1, vec![100.0]);
        assert_eq!(map["cx"], (4, vec![50.0]));
        assert!(parse_key_values(p(), "fx = 1\nfx = 2\n").is_err());
        assert!(parse_key_values(p(), "fx = one\n").is_err());
    }

    #[test]
    fn pose_text_round_trips_exactly() {
        let t = RigidTransform::from_axis_angle(Vector3::new(0.1, -0.2, 0.3), Vector3::new(1.0, 2.0, -0.5));
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("pose.txt");
        write_text(&path, &format_pose(&t)).unwrap();
        assert_eq!(read_pose(&path).unwrap(), t);

        let k = Intrinsics::new(208.0, 208.0, 207.5, 63.5).unwrap();
        let path = dir.path().join("k.txt");
        write_text(&path, &format_intrinsics(&k)).unwrap();
        assert_eq!(read_intrinsics(&path).unwrap(), k);

        write_text(&path, "rotation = 1 0 0 0 1 0 0 0 1\ntranslation = 0 0\n").unwrap();
        let err = read_pose(&path).unwrap_err();
        assert!(err.to_string().contains(":2:"), "{err}");
    }

    #[test]
    fn coupling_and_trace_csv() {
        let p = CouplingMatrix::from_rows(&[vec![0.5, 0.0], vec![0.0, 0.5]]).unwrap();
        assert_eq!(format_coupling(&p), "0.5,0\n0,0.5\n");
        let trace = [TraceRow { step: 0, loss: 1.5, grad_norm: 2.0, pose_error: f64::NAN }];
        assert_eq!(format_trace(&trace), "step,loss,grad_norm,pose_error\n0,1.5,2,NaN\n");
    }
}
