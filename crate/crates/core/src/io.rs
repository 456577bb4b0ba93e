//! CSV pair format.
//!
//! Units file header: `unit_id,cluster_id,y,<x_1>,...,<x_p>`.
//! Clusters file header: `cluster_id,a,<w_1>,...,<w_q>`, with `a` in {0, 1}.
//! Lines starting with `#` are comments; writers use them to echo the run
//! configuration, readers skip them.

use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use indexmap::IndexMap;

use crate::data::{build_dataset, Cluster, ClusteredDataset, Unit};
use crate::error::{Error, Result};

const UNIT_KEYS: [&str; 3] = ["unit_id", "cluster_id", "y"];
const CLUSTER_KEYS: [&str; 2] = ["cluster_id", "a"];

pub fn read_dataset(units: impl AsRef<Path>, clusters: impl AsRef<Path>) -> Result<ClusteredDataset> {
    let (up, cp) = (units.as_ref(), clusters.as_ref());
    let units = read_units(open(up)?, &up.display().to_string())?;
    let clusters = read_clusters(open(cp)?, &cp.display().to_string())?;
    build_dataset(units, clusters)
}

fn open(path: &Path) -> Result<File> {
    File::open(path).map_err(|e| Error::Io {
        file: path.display().to_string(),
        message: e.to_string(),
    })
}

fn reader<R: Read>(rdr: R) -> csv::Reader<R> {
    csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .from_reader(rdr)
}

fn csv_error(file: &str, e: csv::Error) -> Error {
    let line = e.position().map(|p| p.line()).unwrap_or(0);
    Error::Parse {
        file: file.to_string(),
        line,
        message: e.to_string(),
    }
}

fn check_header(file: &str, header: &csv::StringRecord, keys: &[&str]) -> Result<Vec<String>> {
    let got: Vec<&str> = header.iter().collect();
    if got.len() < keys.len() || got[..keys.len()] != *keys {
        return Err(Error::Parse {
            file: file.to_string(),
            line: 1,
            message: format!("header must start with {}, got {}", keys.join(","), got.join(",")),
        });
    }
    let names: Vec<String> = got[keys.len()..].iter().map(|s| s.to_string()).collect();
    for (k, name) in names.iter().enumerate() {
        if name.is_empty() || keys.contains(&name.as_str()) || names[..k].contains(name) {
            return Err(Error::Parse {
                file: file.to_string(),
                line: 1,
                message: format!("bad or repeated covariate column '{name}'"),
            });
        }
    }
    Ok(names)
}

fn parse_number(file: &str, line: u64, column: &str, cell: &str) -> Result<f64> {
    match cell.parse::<f64>() {
        Ok(v) if v.is_finite() => Ok(v),
        _ => Err(Error::Parse {
            file: file.to_string(),
            line,
            message: format!("column '{column}': '{cell}' is not a finite number"),
        }),
    }
}

pub fn read_units<R: Read>(rdr: R, file: &str) -> Result<Vec<Unit>> {
    let mut rdr = reader(rdr);
    let header = rdr.headers().map_err(|e| csv_error(file, e))?.clone();
    let names = check_header(file, &header, &UNIT_KEYS)?;
    let mut out = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| csv_error(file, e))?;
        let line = rec.position().map(|p| p.line()).unwrap_or(0);
        let outcome = parse_number(file, line, "y", &rec[2])?;
        let mut covariates = IndexMap::with_capacity(names.len());
        for (k, name) in names.iter().enumerate() {
            covariates.insert(name.clone(), parse_number(file, line, name, &rec[3 + k])?);
        }
        out.push(Unit {
            unit_id: rec[0].to_string(),
            cluster_id: rec[1].to_string(),
            outcome,
            covariates,
        });
    }
    Ok(out)
}

pub fn read_clusters<R: Read>(rdr: R, file: &str) -> Result<Vec<Cluster>> {
    let mut rdr = reader(rdr);
    let header = rdr.headers().map_err(|e| csv_error(file, e))?.clone();
    let names = check_header(file, &header, &CLUSTER_KEYS)?;
    let mut out = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| csv_error(file, e))?;
        let line = rec.position().map(|p| p.line()).unwrap_or(0);
        let treated = match parse_number(file, line, "a", &rec[1]) {
            Ok(1.0) => true,
            Ok(0.0) => false,
            _ => {
                return Err(Error::Parse {
                    file: file.to_string(),
                    line,
                    message: format!("column 'a': '{}' is not 0 or 1", &rec[1]),
                })
            }
        };
        let mut covariates = IndexMap::with_capacity(names.len());
        for (k, name) in names.iter().enumerate() {
            covariates.insert(name.clone(), parse_number(file, line, name, &rec[2 + k])?);
        }
        out.push(Cluster {
            cluster_id: rec[0].to_string(),
            treated,
            covariates,
        });
    }
    Ok(out)
}

/// Writes `# `-prefixed comment lines.
pub fn write_comments<W: Write>(out: &mut W, comments: &[String]) -> std::io::Result<()> {
    for c in comments {
        writeln!(out, "# {c}")?;
    }
    Ok(())
}

pub fn write_units<W: Write>(ds: &ClusteredDataset, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let mut header: Vec<&str> = UNIT_KEYS.to_vec();
    header.extend(ds.unit_schema().iter().map(|c| c.name.as_str()));
    let mut rows = || -> csv::Result<()> {
        w.write_record(&header)?;
        let cols = ds.unit_columns();
        for i in 0..ds.n_units() {
            let mut rec = vec![
                ds.unit_ids()[i].to_string(),
                ds.cluster_ids()[ds.unit_cluster()[i]].clone(),
                ds.outcome()[i].to_string(),
            ];
            rec.extend(cols.iter().map(|c| c[i].to_string()));
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    };
    rows().map_err(|e| Error::Io {
        file: "units".into(),
        message: e.to_string(),
    })
}

pub fn write_clusters<W: Write>(ds: &ClusteredDataset, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let mut header: Vec<&str> = CLUSTER_KEYS.to_vec();
    header.extend(ds.cluster_schema().iter().map(|c| c.name.as_str()));
    let mut rows = || -> csv::Result<()> {
        w.write_record(&header)?;
        let cols = ds.cluster_columns();
        for j in 0..ds.n_clusters() {
            let mut rec = vec![
                ds.cluster_ids()[j].clone(),
                if ds.treated()[j] { "1" } else { "0" }.to_string(),
            ];
            rec.extend(cols.iter().map(|c| c[j].to_string()));
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    };
    rows().map_err(|e| Error::Io {
        file: "clusters".into(),
        message: e.to_string(),
    })
}

/// Writes the units and clusters files, each preceded by `comments`.
pub fn write_dataset(
    ds: &ClusteredDataset,
    units: impl AsRef<Path>,
    clusters: impl AsRef<Path>,
    comments: &[String],
) -> Result<()> {
    for (path, which) in [(units.as_ref(), 0), (clusters.as_ref(), 1)] {
        let io_err = |e: std::io::Error| Error::Io {
            file: path.display().to_string(),
            message: e.to_string(),
        };
        let mut f = std::io::BufWriter::new(File::create(path).map_err(io_err)?);
        write_comments(&mut f, comments).map_err(io_err)?;
        if which == 0 {
            write_units(ds, &mut f)?;
        } else {
            write_clusters(ds, &mut f)?;
        }
        f.flush().map_err(io_err)?;
    }
    Ok(())
}
