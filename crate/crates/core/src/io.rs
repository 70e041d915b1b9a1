//! Map arguments, output locations and CSV formatting shared by the CLI and
//! the reproduction recipes.

use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::maps::{MapModel, MapSpec, SlopeRule};
use crate::measure::PiecewiseDensity;

/// Environment variable naming the default output directory.
pub const OUT_DIR_ENV: &str = "IVMAPS_OUT_DIR";

/// Resolves a map argument: a JSON file, an inline JSON document, or one of
/// the shorthands `doubling`, `dyadic:M`, `vssv:λ[:K]`, `rychlik[:K]`,
/// `linear-tail:r[:K]`.
pub fn parse_map_arg(arg: &str) -> Result<MapModel> {
    let path = Path::new(arg);
    if path.is_file() {
        return MapModel::from_spec(&MapSpec::load(path)?);
    }
    let trimmed = arg.trim();
    if trimmed.starts_with('{') {
        return MapModel::from_spec(&MapSpec::from_json(trimmed)?);
    }
    let mut parts = trimmed.split(':');
    let name = parts.next().unwrap_or_default();
    let nums: Vec<f64> = parts
        .map(|p| {
            p.parse::<f64>()
                .map_err(|_| Error::Parse(format!("bad number `{p}` in map `{arg}`")))
        })
        .collect::<Result<_>>()?;
    let truncation = |i: usize| nums.get(i).map_or(crate::maps::DEFAULT_TRUNCATION, |&k| k as usize);
    match (name, nums.len()) {
        ("doubling", 0) => Ok(MapModel::doubling()),
        ("dyadic", 1) => MapModel::dyadic(nums[0] as usize),
        ("vssv", 1 | 2) => MapModel::vssv(nums[0], truncation(1)),
        ("rychlik", 0 | 1) => MapModel::geometric_tail(0.5, SlopeRule::Constant(2.0), truncation(0)),
        ("linear-tail", 1 | 2) => MapModel::geometric_tail(nums[0], SlopeRule::Linear, truncation(1)),
        _ => Err(Error::InvalidMap(format!(
            "`{arg}` is neither a map file, a JSON document nor a known shorthand"
        ))),
    }
}

/// `explicit`, else `$IVMAPS_OUT_DIR`, else the working directory.
pub fn out_dir(explicit: Option<&Path>) -> PathBuf {
    explicit
        .map(Path::to_path_buf)
        .or_else(|| std::env::var_os(OUT_DIR_ENV).map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("."))
}

/// Writes `contents`, creating parent directories.
pub fn write_text(path: &Path, contents: &str) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir)?;
    }
    std::fs::write(path, contents)?;
    Ok(())
}

/// Full-precision CSV cell.
pub fn num(x: f64) -> String {
    format!("{x:.16e}")
}

pub fn csv<I, R>(header: &[&str], rows: I) -> String
where
    I: IntoIterator<Item = R>,
    R: IntoIterator<Item = String>,
{
    let mut s = header.join(",");
    s.push('\n');
    for row in rows {
        s.push_str(&row.into_iter().collect::<Vec<_>>().join(","));
        s.push('\n');
    }
    s
}

/// Columns `left, right, value`.
pub fn density_csv(d: &PiecewiseDensity) -> String {
    csv(
        &["left", "right", "value"],
        d.rows().into_iter().map(|(a, b, v)| [num(a), num(b), num(v)]),
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn shorthands() {
        assert_eq!(parse_map_arg("doubling").unwrap().branches().len(), 2);
        assert_eq!(parse_map_arg("vssv:0.4:30").unwrap().branches().len(), 30);
        assert_eq!(parse_map_arg("rychlik:100").unwrap().branches().len(), 100);
        assert!(parse_map_arg("nonsense").is_err());
        let m = parse_map_arg(r#"{"family":"dyadic","params":{"branches":3}}"#).unwrap();
        assert_eq!(m.branches().len(), 3);
    }

    #[test]
    fn map_file_and_csv() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("m.json");
        std::fs::write(&p, r#"{"family":"vssv","params":{"lambda":0.3},"truncation":12}"#).unwrap();
        assert_eq!(parse_map_arg(p.to_str().unwrap()).unwrap().branches().len(), 12);
        let text = density_csv(&PiecewiseDensity::lebesgue());
        assert_eq!(text.lines().count(), 2);
        assert!(text.starts_with("left,right,value\n"));
    }
}
