//! Text persistence for maps and ensemble checkpoints.
//!
//! Maps are stored as `ADAPTMAP v1 <n_lat> <n_lon> <epoch_seconds>` followed
//! by one line per latitude row (southernmost first) with 17-significant-
//! digit decimal values, which round-trip doubles exactly. A checkpoint is
//! a directory with a manifest and one map file per member.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::ensemble::Ensemble;
use crate::error::{Error, Result};
use crate::grid::Grid;
use crate::map::SynopticMap;
use crate::rng::RngCursor;

const MAP_MAGIC: &str = "ADAPTMAP";
const MAP_VERSION: &str = "v1";
const MANIFEST_NAME: &str = "checkpoint.txt";

fn format_err(path: &Path, line: usize, msg: impl Into<String>) -> Error {
    Error::format(path.display().to_string(), line, msg)
}

/// Serialize a map with its epoch time.
pub fn write_map(map: &SynopticMap, epoch_seconds: f64, path: &Path) -> Result<()> {
    let grid = map.grid();
    let mut out = String::new();
    writeln!(
        out,
        "{} {} {} {} {:.16e}",
        MAP_MAGIC,
        MAP_VERSION,
        grid.n_lat(),
        grid.n_lon(),
        epoch_seconds
    )
    .expect("writing to string");
    for i in 0..grid.n_lat() {
        for j in 0..grid.n_lon() {
            if j > 0 {
                out.push(' ');
            }
            write!(out, "{:.16e}", map.get(i, j)).expect("writing to string");
        }
        out.push('\n');
    }
    fs::write(path, out)?;
    Ok(())
}

/// Read a map written by [`write_map`]. Round-trips bit-exactly.
pub fn read_map(path: &Path) -> Result<(SynopticMap, f64)> {
    let text = fs::read_to_string(path)?;
    let mut lines = text.lines().enumerate();
    let (_, header) = lines
        .next()
        .ok_or_else(|| format_err(path, 1, "empty file"))?;
    let fields: Vec<&str> = header.split_whitespace().collect();
    if fields.len() != 5 || fields[0] != MAP_MAGIC || fields[1] != MAP_VERSION {
        return Err(format_err(
            path,
            1,
            format!("expected header `{MAP_MAGIC} {MAP_VERSION} <n_lat> <n_lon> <epoch>`"),
        ));
    }
    let n_lat: usize = fields[2]
        .parse()
        .map_err(|_| format_err(path, 1, "bad n_lat"))?;
    let n_lon: usize = fields[3]
        .parse()
        .map_err(|_| format_err(path, 1, "bad n_lon"))?;
    let epoch: f64 = fields[4]
        .parse()
        .map_err(|_| format_err(path, 1, "bad epoch"))?;
    let grid = Grid::new(n_lat, n_lon)?;

    let mut data = Vec::with_capacity(grid.n_pixels());
    let mut rows = 0usize;
    for (line_idx, line) in lines {
        let line_no = line_idx + 1;
        if line.trim().is_empty() {
            continue;
        }
        let mut count = 0usize;
        for field in line.split_whitespace() {
            let v: f64 = field
                .parse()
                .map_err(|_| format_err(path, line_no, format!("bad value `{field}`")))?;
            if !v.is_finite() {
                return Err(format_err(path, line_no, "non-finite value"));
            }
            data.push(v);
            count += 1;
        }
        if count != n_lon {
            return Err(format_err(
                path,
                line_no,
                format!("expected {n_lon} values in row, found {count}"),
            ));
        }
        rows += 1;
    }
    if rows != n_lat {
        return Err(format_err(
            path,
            1,
            format!("header claims {n_lat} rows, found {rows}"),
        ));
    }
    Ok((SynopticMap::from_data(grid, data)?, epoch))
}

fn member_file_name(index: usize) -> String {
    format!("member_{index:04}.txt")
}

/// Write an ensemble checkpoint: manifest plus one map file per member.
/// The stored RNG cursor lets a resumed run replay the remaining draws
/// exactly.
pub fn write_checkpoint(
    e: &Ensemble,
    epoch_seconds: f64,
    rng: RngCursor,
    dir: &Path,
) -> Result<()> {
    fs::create_dir_all(dir)?;
    let mut manifest = String::new();
    writeln!(manifest, "CHECKPOINT {}", MAP_VERSION).expect("writing to string");
    writeln!(manifest, "epoch_seconds {:.16e}", epoch_seconds).expect("writing to string");
    writeln!(manifest, "k {}", e.k()).expect("writing to string");
    writeln!(manifest, "grid {} {}", e.grid().n_lat(), e.grid().n_lon())
        .expect("writing to string");
    writeln!(manifest, "rng_seed {}", rng.seed).expect("writing to string");
    writeln!(manifest, "rng_step {}", rng.step).expect("writing to string");
    for (idx, member) in e.members().iter().enumerate() {
        let name = member_file_name(idx);
        write_map(member, epoch_seconds, &dir.join(&name))?;
        writeln!(manifest, "member {name}").expect("writing to string");
    }
    fs::write(dir.join(MANIFEST_NAME), manifest)?;
    Ok(())
}

/// Read a checkpoint directory written by [`write_checkpoint`].
pub fn read_checkpoint(dir: &Path) -> Result<(Ensemble, f64, RngCursor)> {
    let manifest_path = dir.join(MANIFEST_NAME);
    let text = fs::read_to_string(&manifest_path)
        .map_err(|e| Error::checkpoint(format!("cannot read {}: {e}", manifest_path.display())))?;

    let mut epoch = None;
    let mut k = None;
    let mut grid_dims = None;
    let mut seed = None;
    let mut step = None;
    let mut member_files = Vec::new();

    for (line_idx, line) in text.lines().enumerate() {
        let fields: Vec<&str> = line.split_whitespace().collect();
        match fields.as_slice() {
            ["CHECKPOINT", MAP_VERSION] => {}
            ["epoch_seconds", v] => {
                epoch = Some(v.parse::<f64>().map_err(|_| {
                    Error::checkpoint(format!("bad epoch on line {}", line_idx + 1))
                })?)
            }
            ["k", v] => {
                k = Some(v.parse::<usize>().map_err(|_| {
                    Error::checkpoint(format!("bad k on line {}", line_idx + 1))
                })?)
            }
            ["grid", a, b] => {
                let n_lat = a.parse::<usize>();
                let n_lon = b.parse::<usize>();
                match (n_lat, n_lon) {
                    (Ok(n_lat), Ok(n_lon)) => grid_dims = Some((n_lat, n_lon)),
                    _ => {
                        return Err(Error::checkpoint(format!(
                            "bad grid on line {}",
                            line_idx + 1
                        )))
                    }
                }
            }
            ["rng_seed", v] => {
                seed = Some(v.parse::<u64>().map_err(|_| {
                    Error::checkpoint(format!("bad rng_seed on line {}", line_idx + 1))
                })?)
            }
            ["rng_step", v] => {
                step = Some(v.parse::<u64>().map_err(|_| {
                    Error::checkpoint(format!("bad rng_step on line {}", line_idx + 1))
                })?)
            }
            ["member", name] => member_files.push(name.to_string()),
            [] => {}
            other => {
                return Err(Error::checkpoint(format!(
                    "unrecognized manifest line {}: {:?}",
                    line_idx + 1,
                    other
                )))
            }
        }
    }

    let epoch = epoch.ok_or_else(|| Error::checkpoint("manifest missing epoch_seconds"))?;
    let k = k.ok_or_else(|| Error::checkpoint("manifest missing k"))?;
    let (n_lat, n_lon) =
        grid_dims.ok_or_else(|| Error::checkpoint("manifest missing grid dimensions"))?;
    let seed = seed.ok_or_else(|| Error::checkpoint("manifest missing rng_seed"))?;
    let step = step.ok_or_else(|| Error::checkpoint("manifest missing rng_step"))?;

    if member_files.len() != k {
        return Err(Error::checkpoint(format!(
            "manifest lists k = {k} but {} member files",
            member_files.len()
        )));
    }

    let mut members = Vec::with_capacity(k);
    for name in &member_files {
        let path = dir.join(name);
        if !path.exists() {
            return Err(Error::checkpoint(format!("missing member file {name}")));
        }
        let (map, _) = read_map(&path)?;
        if map.grid().n_lat() != n_lat || map.grid().n_lon() != n_lon {
            return Err(Error::checkpoint(format!(
                "member file {name} has grid {}x{}, manifest says {n_lat}x{n_lon}",
                map.grid().n_lat(),
                map.grid().n_lon()
            )));
        }
        members.push(map);
    }
    Ok((Ensemble::new(members)?, epoch, RngCursor { seed, step }))
}
