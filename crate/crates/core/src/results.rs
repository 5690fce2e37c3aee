//! CSV and manifest persistence for quantile curves.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::decision::Rule;
use crate::error::{Error, Result};
use crate::experiment::{CurvePoint, ExperimentConfig, QuantileCurve};

pub const CSV_HEADER: [&str; 8] = [
    "rule",
    "h",
    "n",
    "quantile_level",
    "gap_action_q",
    "gap_regret_q",
    "replications",
    "failures",
];

/// Run metadata written next to the CSV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub config: ExperimentConfig,
    pub seed: u64,
    /// RFC 3339 timestamp supplied by the caller.
    pub started_at: String,
    pub duration_seconds: f64,
    pub tool_version: String,
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

/// One row per `(rule, h, n)`; floats use shortest round-trip formatting.
pub fn render_csv(curves: &[QuantileCurve]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let fmt = |e: csv::Error| Error::Format {
        path: PathBuf::new(),
        detail: e.to_string(),
    };
    w.write_record(CSV_HEADER).map_err(fmt)?;
    for c in curves {
        for p in &c.points {
            w.write_record([
                c.rule.as_str().to_string(),
                c.h.to_string(),
                p.n.to_string(),
                c.quantile_level.to_string(),
                opt(p.gap_action_q),
                opt(p.gap_regret_q),
                p.replications.to_string(),
                p.failures.to_string(),
            ])
            .map_err(fmt)?;
        }
    }
    let bytes = w.into_inner().map_err(|e| Error::Format {
        path: PathBuf::new(),
        detail: e.to_string(),
    })?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

/// Inverse of [`render_csv`]; consecutive rows with equal `(rule, h)` form one curve.
pub fn parse_csv(text: &str, path: &Path) -> Result<Vec<QuantileCurve>> {
    let bad = |detail: String| Error::Format {
        path: path.to_path_buf(),
        detail,
    };
    let mut r = csv::Reader::from_reader(text.as_bytes());
    let header = r.headers().map_err(|e| bad(e.to_string()))?;
    if header.iter().ne(CSV_HEADER) {
        return Err(bad(format!("unexpected header {header:?}")));
    }
    let mut curves: Vec<QuantileCurve> = Vec::new();
    for (line, rec) in r.records().enumerate() {
        let rec = rec.map_err(|e| bad(e.to_string()))?;
        let field = |i: usize| rec.get(i).unwrap_or("");
        let ctx = |i: usize, e: &dyn std::fmt::Display| bad(format!("row {}: column `{}`: {e}", line + 2, CSV_HEADER[i]));
        let float = |i: usize| field(i).parse::<f64>().map_err(|e| ctx(i, &e));
        let count = |i: usize| field(i).parse::<usize>().map_err(|e| ctx(i, &e));
        let maybe = |i: usize| match field(i) {
            "" => Ok(None),
            s => s.parse::<f64>().map(Some).map_err(|e| ctx(i, &e)),
        };
        let rule: Rule = field(0).parse().map_err(|e: Error| ctx(0, &e))?;
        let h = float(1)?;
        let quantile_level = float(3)?;
        let point = CurvePoint {
            n: count(2)?,
            gap_action_q: maybe(4)?,
            gap_regret_q: maybe(5)?,
            replications: count(6)?,
            failures: count(7)?,
        };
        match curves.last_mut() {
            Some(c) if c.rule == rule && c.h == h && c.quantile_level == quantile_level => c.points.push(point),
            _ => curves.push(QuantileCurve {
                rule,
                h,
                quantile_level,
                points: vec![point],
            }),
        }
    }
    Ok(curves)
}

/// Path of the CSV file for an output stem.
pub fn csv_path(stem: &Path) -> PathBuf {
    with_suffix(stem, ".csv")
}

/// Path of the manifest file for an output stem.
pub fn manifest_path(stem: &Path) -> PathBuf {
    with_suffix(stem, ".manifest.json")
}

fn with_suffix(stem: &Path, suffix: &str) -> PathBuf {
    let mut s = stem.as_os_str().to_owned();
    s.push(suffix);
    PathBuf::from(s)
}

fn write_file(path: &Path, contents: &[u8]) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|source| Error::Io {
            path: dir.to_path_buf(),
            source,
        })?;
    }
    fs::write(path, contents).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })
}

/// Write `<stem>.csv` and `<stem>.manifest.json`; returns both paths.
pub fn write_results(curves: &[QuantileCurve], stem: &Path, manifest: &Manifest) -> Result<(PathBuf, PathBuf)> {
    let csv = csv_path(stem);
    let man = manifest_path(stem);
    write_file(&csv, render_csv(curves)?.as_bytes())?;
    let json = serde_json::to_string_pretty(manifest).map_err(|e| Error::Format {
        path: man.clone(),
        detail: e.to_string(),
    })?;
    write_file(&man, json.as_bytes())?;
    Ok((csv, man))
}

pub fn read_csv(path: &Path) -> Result<Vec<QuantileCurve>> {
    let text = fs::read_to_string(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })?;
    parse_csv(&text, path)
}

pub fn read_manifest(path: &Path) -> Result<Manifest> {
    let text = fs::read_to_string(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })?;
    serde_json::from_str(&text).map_err(|e| Error::Format {
        path: path.to_path_buf(),
        detail: e.to_string(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample_curves() -> Vec<QuantileCurve> {
        let pt = |n, a: Option<f64>| CurvePoint {
            n,
            gap_action_q: a,
            gap_regret_q: a.map(|x| x * x / 3.0),
            replications: 5,
            failures: 0,
        };
        vec![
            QuantileCurve {
                rule: Rule::Nvb,
                h: 0.001,
                quantile_level: 0.5,
                points: vec![pt(10, Some(0.1 + 0.2)), pt(50, Some(1e-17))],
            },
            QuantileCurve {
                rule: Rule::Lcvb,
                h: 0.001,
                quantile_level: 0.5,
                points: vec![pt(10, None), pt(50, Some(2.0 / 3.0))],
            },
        ]
    }

    #[test]
    fn csv_round_trips_exactly() {
        let curves = sample_curves();
        let text = render_csv(&curves).unwrap();
        assert!(text.starts_with("rule,h,n,quantile_level,gap_action_q,gap_regret_q,replications,failures\n"));
        assert_eq!(text.lines().count(), 5);
        assert!(text.contains("lcvb,0.001,10,0.5,,,5,0"));
        assert_eq!(parse_csv(&text, Path::new("x.csv")).unwrap(), curves);
    }

    #[test]
    fn malformed_rows_name_the_column() {
        let text = "rule,h,n,quantile_level,gap_action_q,gap_regret_q,replications,failures\nnvb,0.001,ten,0.5,,,1,0\n";
        let err = parse_csv(text, Path::new("bad.csv")).unwrap_err().to_string();
        assert!(err.contains("bad.csv") && err.contains("`n`"), "{err}");
        let err = parse_csv("a,b\n", Path::new("bad.csv")).unwrap_err();
        assert!(matches!(err, Error::Format { .. }));
    }

    #[test]
    fn files_and_manifest() {
        let dir = tempfile::tempdir().unwrap();
        let stem = dir.path().join("sub/run");
        let manifest = Manifest {
            config: ExperimentConfig::reduced_scale(),
            seed: 99,
            started_at: "2026-01-01T00:00:00Z".into(),
            duration_seconds: 1.5,
            tool_version: "0.1.0".into(),
        };
        let (csv, man) = write_results(&sample_curves(), &stem, &manifest).unwrap();
        assert_eq!(csv.file_name().unwrap(), "run.csv");
        assert_eq!(read_csv(&csv).unwrap(), sample_curves());
        let back = read_manifest(&man).unwrap();
        assert_eq!(back.seed, 99);
        assert_eq!(back, manifest);
        let raw: serde_json::Value = serde_json::from_str(&fs::read_to_string(&man).unwrap()).unwrap();
        for key in ["config", "seed", "started_at", "duration_seconds", "tool_version"] {
            assert!(raw.get(key).is_some(), "{key}");
        }
    }

    #[test]
    fn io_errors_carry_the_path() {
        let err = read_csv(Path::new("/nonexistent/dir/r.csv")).unwrap_err();
        assert!(err.to_string().contains("/nonexistent/dir/r.csv"), "{err}");
    }
}
