//! On-disk dataset and artifact formats.
//!
//! A data directory holds `fields.csv` (one row per farm plot) plus one
//! `loc_NNNNN/` directory per plot with `optical.csv`, `sar.csv`,
//! `rainfall.csv`, and `meteo.csv`. Engineered features round-trip through
//! `features.csv`, which embeds the configuration hash and the seed as
//! comment lines so artifacts are traceable to the run that produced them.
//! All writes go through a temp file and an atomic rename.

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use chrono::NaiveDate;

use crate::acquisition::{
    AcquisitionTile, Grid, MeteoSample, MeteoSeries, RainfallSeries, SarAcquisition,
};
use crate::error::{Error, Result};
use crate::features::{
    AcquisitionBundle, District, FeatureTable, FieldRecord, Frequency, Season,
    CATEGORICAL_FEATURE_NAMES,
};
use crate::indices::Band;

const DATE_FMT: &str = "%Y-%m-%d";

/// Write `contents` to `path` via a temp file and atomic rename.
pub fn write_atomic(path: &Path, contents: &str) -> Result<()> {
    let tmp = path.with_extension("tmp");
    {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(contents.as_bytes())?;
    }
    fs::rename(&tmp, path)?;
    Ok(())
}

fn parse_err(path: &Path, line: usize, msg: impl Into<String>) -> Error {
    Error::Parse {
        path: path.display().to_string(),
        line,
        msg: msg.into(),
    }
}

fn parse_f64(path: &Path, line: usize, field: &str, s: &str) -> Result<f64> {
    s.trim()
        .parse::<f64>()
        .map_err(|_| parse_err(path, line, format!("bad {field} value '{s}'")))
}

fn parse_date(path: &Path, line: usize, s: &str) -> Result<NaiveDate> {
    NaiveDate::parse_from_str(s.trim(), DATE_FMT)
        .map_err(|_| parse_err(path, line, format!("bad date '{s}' (want YYYY-MM-DD)")))
}

pub const FIELDS_HEADER: &str =
    "district,latitude,longitude,season,frequency,harvest_date,area_ha,yield_kg,yield_rate";

/// Serialize plot records to `fields.csv` format.
pub fn fields_to_csv(records: &[FieldRecord]) -> String {
    let mut out = String::from(FIELDS_HEADER);
    out.push('\n');
    for r in records {
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{},{}\n",
            r.district.name(),
            r.latitude,
            r.longitude,
            r.season.name(),
            r.frequency.name(),
            r.harvest_date.format(DATE_FMT),
            r.area_ha,
            r.yield_kg,
            r.yield_rate,
        ));
    }
    out
}

pub fn write_fields_csv(path: &Path, records: &[FieldRecord]) -> Result<()> {
    write_atomic(path, &fields_to_csv(records))
}

/// Parse `fields.csv`; errors carry the file and 1-based line number.
pub fn read_fields_csv(path: &Path) -> Result<Vec<FieldRecord>> {
    let text = fs::read_to_string(path)?;
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, h)) if h.trim() == FIELDS_HEADER => {}
        Some((_, h)) => return Err(parse_err(path, 1, format!("unexpected header '{h}'"))),
        None => return Err(parse_err(path, 1, "empty file")),
    }
    let mut records = Vec::new();
    for (i, raw) in lines {
        let line = i + 1;
        if raw.trim().is_empty() {
            continue;
        }
        let f: Vec<&str> = raw.split(',').collect();
        if f.len() != 9 {
            return Err(parse_err(path, line, format!("expected 9 fields, got {}", f.len())));
        }
        let record = FieldRecord {
            district: District::parse(f[0].trim())
                .ok_or_else(|| parse_err(path, line, format!("unknown district '{}'", f[0])))?,
            latitude: parse_f64(path, line, "latitude", f[1])?,
            longitude: parse_f64(path, line, "longitude", f[2])?,
            season: Season::parse(f[3].trim())
                .ok_or_else(|| parse_err(path, line, format!("unknown season '{}'", f[3])))?,
            frequency: Frequency::parse(f[4].trim())
                .ok_or_else(|| parse_err(path, line, format!("unknown frequency '{}'", f[4])))?,
            harvest_date: parse_date(path, line, f[5])?,
            area_ha: parse_f64(path, line, "area_ha", f[6])?,
            yield_kg: parse_f64(path, line, "yield_kg", f[7])?,
            yield_rate: parse_f64(path, line, "yield_rate", f[8])?,
        };
        record
            .validate()
            .map_err(|e| parse_err(path, line, e.to_string()))?;
        records.push(record);
    }
    Ok(records)
}

fn grid_cells(g: &Grid) -> String {
    let mut out = format!("{},{}", g.height(), g.width());
    for v in g.values() {
        out.push(',');
        out.push_str(&v.to_string());
    }
    out
}

fn parse_grid(path: &Path, line: usize, fields: &[&str]) -> Result<Grid> {
    if fields.len() < 2 {
        return Err(parse_err(path, line, "missing grid dimensions"));
    }
    let h: usize = fields[0]
        .trim()
        .parse()
        .map_err(|_| parse_err(path, line, "bad grid height"))?;
    let w: usize = fields[1]
        .trim()
        .parse()
        .map_err(|_| parse_err(path, line, "bad grid width"))?;
    if fields.len() != 2 + h * w {
        return Err(parse_err(
            path,
            line,
            format!("grid {h}x{w} needs {} cells, got {}", h * w, fields.len() - 2),
        ));
    }
    let data = fields[2..]
        .iter()
        .map(|s| parse_f64(path, line, "pixel", s))
        .collect::<Result<Vec<_>>>()?;
    Grid::new(h, w, data).map_err(|e| parse_err(path, line, e.to_string()))
}

fn location_dir(data_dir: &Path, index: usize) -> PathBuf {
    data_dir.join(format!("loc_{index:05}"))
}

fn write_bundle(dir: &Path, bundle: &AcquisitionBundle) -> Result<()> {
    fs::create_dir_all(dir)?;

    let mut optical = String::from("date,cloud_fraction,band,height,width,values\n");
    for tile in &bundle.optical {
        for b in Band::ALL {
            optical.push_str(&format!(
                "{},{},{},{}\n",
                tile.timestamp.format(DATE_FMT),
                tile.cloud_fraction,
                b.name(),
                grid_cells(tile.band(b)),
            ));
        }
    }
    write_atomic(&dir.join("optical.csv"), &optical)?;

    let mut sar = String::from("date,channel,height,width,values\n");
    for a in &bundle.sar {
        for (name, g) in [("VV", &a.vv), ("VH", &a.vh)] {
            sar.push_str(&format!(
                "{},{},{}\n",
                a.timestamp.format(DATE_FMT),
                name,
                grid_cells(g),
            ));
        }
    }
    write_atomic(&dir.join("sar.csv"), &sar)?;

    let mut rain = String::from("date,rate\n");
    for (t, r) in bundle.rainfall.samples() {
        rain.push_str(&format!("{},{r}\n", t.format(DATE_FMT)));
    }
    write_atomic(&dir.join("rainfall.csv"), &rain)?;

    let mut meteo =
        String::from("date,air_temperature,land_surface_temperature,solar_radiation,specific_humidity\n");
    for s in bundle.meteo.samples() {
        meteo.push_str(&format!(
            "{},{},{},{},{}\n",
            s.timestamp.format(DATE_FMT),
            s.air_temperature,
            s.land_surface_temperature,
            s.solar_radiation,
            s.specific_humidity,
        ));
    }
    write_atomic(&dir.join("meteo.csv"), &meteo)?;
    Ok(())
}

fn data_lines(text: &str) -> impl Iterator<Item = (usize, &str)> {
    text.lines()
        .enumerate()
        .skip(1)
        .map(|(i, l)| (i + 1, l))
        .filter(|(_, l)| !l.trim().is_empty())
}

fn read_bundle(dir: &Path) -> Result<AcquisitionBundle> {
    let optical_path = dir.join("optical.csv");
    let text = fs::read_to_string(&optical_path)?;
    // group consecutive rows by date; each tile carries one row per band
    let mut optical: Vec<AcquisitionTile> = Vec::new();
    let mut current: Option<(NaiveDate, f64, Vec<Grid>, usize)> = None;
    let flush = |cur: Option<(NaiveDate, f64, Vec<Grid>, usize)>| -> Result<Option<AcquisitionTile>> {
        match cur {
            None => Ok(None),
            Some((date, cloud, grids, line)) => {
                if grids.len() != Band::ALL.len() {
                    return Err(parse_err(
                        &optical_path,
                        line,
                        format!("tile {date} has {} of {} bands", grids.len(), Band::ALL.len()),
                    ));
                }
                AcquisitionTile::new(date, cloud, grids)
                    .map(Some)
                    .map_err(|e| parse_err(&optical_path, line, e.to_string()))
            }
        }
    };
    for (line, raw) in data_lines(&text) {
        let f: Vec<&str> = raw.split(',').collect();
        if f.len() < 5 {
            return Err(parse_err(&optical_path, line, "expected date,cloud,band,grid"));
        }
        let date = parse_date(&optical_path, line, f[0])?;
        let cloud = parse_f64(&optical_path, line, "cloud_fraction", f[1])?;
        let band = Band::parse(f[2].trim())
            .ok_or_else(|| parse_err(&optical_path, line, format!("unknown band '{}'", f[2])))?;
        let grid = parse_grid(&optical_path, line, &f[3..])?;
        let start_new = match &current {
            Some((d, _, _, _)) => *d != date,
            None => true,
        };
        if start_new {
            if let Some(tile) = flush(current.take())? {
                optical.push(tile);
            }
            current = Some((date, cloud, Vec::new(), line));
        }
        let cur = current.as_mut().expect("tile in progress");
        if cur.2.len() != band.index() {
            return Err(parse_err(
                &optical_path,
                line,
                format!("band {} out of order for tile {date}", band.name()),
            ));
        }
        cur.2.push(grid);
    }
    if let Some(tile) = flush(current.take())? {
        optical.push(tile);
    }

    let sar_path = dir.join("sar.csv");
    let text = fs::read_to_string(&sar_path)?;
    let mut sar: Vec<SarAcquisition> = Vec::new();
    let mut pending: Option<(NaiveDate, Grid, usize)> = None;
    for (line, raw) in data_lines(&text) {
        let f: Vec<&str> = raw.split(',').collect();
        if f.len() < 4 {
            return Err(parse_err(&sar_path, line, "expected date,channel,grid"));
        }
        let date = parse_date(&sar_path, line, f[0])?;
        let channel = f[1].trim();
        let grid = parse_grid(&sar_path, line, &f[2..])?;
        match (channel, pending.take()) {
            ("VV", None) => pending = Some((date, grid, line)),
            ("VH", Some((d, vv, _))) if d == date => {
                sar.push(
                    SarAcquisition::new(date, vv, grid)
                        .map_err(|e| parse_err(&sar_path, line, e.to_string()))?,
                );
            }
            _ => {
                return Err(parse_err(
                    &sar_path,
                    line,
                    "SAR rows must alternate VV then VH per date",
                ))
            }
        }
    }
    if let Some((d, _, line)) = pending {
        return Err(parse_err(&sar_path, line, format!("VV row for {d} has no VH row")));
    }

    let rain_path = dir.join("rainfall.csv");
    let text = fs::read_to_string(&rain_path)?;
    let mut rain = Vec::new();
    for (line, raw) in data_lines(&text) {
        let f: Vec<&str> = raw.split(',').collect();
        if f.len() != 2 {
            return Err(parse_err(&rain_path, line, "expected date,rate"));
        }
        rain.push((
            parse_date(&rain_path, line, f[0])?,
            parse_f64(&rain_path, line, "rate", f[1])?,
        ));
    }
    let rainfall =
        RainfallSeries::new(rain).map_err(|e| parse_err(&rain_path, 0, e.to_string()))?;

    let meteo_path = dir.join("meteo.csv");
    let text = fs::read_to_string(&meteo_path)?;
    let mut samples = Vec::new();
    for (line, raw) in data_lines(&text) {
        let f: Vec<&str> = raw.split(',').collect();
        if f.len() != 5 {
            return Err(parse_err(&meteo_path, line, "expected 5 fields"));
        }
        samples.push(MeteoSample {
            timestamp: parse_date(&meteo_path, line, f[0])?,
            air_temperature: parse_f64(&meteo_path, line, "air_temperature", f[1])?,
            land_surface_temperature: parse_f64(&meteo_path, line, "land_surface_temperature", f[2])?,
            solar_radiation: parse_f64(&meteo_path, line, "solar_radiation", f[3])?,
            specific_humidity: parse_f64(&meteo_path, line, "specific_humidity", f[4])?,
        });
    }
    let meteo = MeteoSeries::new(samples).map_err(|e| parse_err(&meteo_path, 0, e.to_string()))?;

    Ok(AcquisitionBundle {
        optical,
        sar,
        rainfall,
        meteo,
    })
}

/// Write a full dataset (plot records plus per-location acquisitions) into
/// `data_dir`.
pub fn write_dataset(
    data_dir: &Path,
    records: &[FieldRecord],
    bundles: &[AcquisitionBundle],
) -> Result<()> {
    if records.len() != bundles.len() {
        return Err(Error::Ingestion(format!(
            "{} records but {} bundles",
            records.len(),
            bundles.len()
        )));
    }
    fs::create_dir_all(data_dir)?;
    write_fields_csv(&data_dir.join("fields.csv"), records)?;
    for (i, bundle) in bundles.iter().enumerate() {
        write_bundle(&location_dir(data_dir, i), bundle)?;
    }
    Ok(())
}

/// Read a dataset written by [`write_dataset`].
pub fn read_dataset(data_dir: &Path) -> Result<(Vec<FieldRecord>, Vec<AcquisitionBundle>)> {
    let records = read_fields_csv(&data_dir.join("fields.csv"))?;
    let mut bundles = Vec::with_capacity(records.len());
    for i in 0..records.len() {
        let dir = location_dir(data_dir, i);
        if !dir.is_dir() {
            return Err(Error::Ingestion(format!(
                "missing acquisition directory {}",
                dir.display()
            )));
        }
        bundles.push(read_bundle(&dir)?);
    }
    Ok((records, bundles))
}

/// Serialize a feature table with run provenance. Missing cells are empty.
pub fn features_to_csv(table: &FeatureTable, config_hash: &str, seed: u64) -> String {
    let mut out = format!("# config_hash={config_hash}\n# seed={seed}\n");
    out.push_str(&table.names().join(","));
    out.push(',');
    out.push_str(table.target_name());
    out.push('\n');
    for r in 0..table.n_rows() {
        for c in 0..table.n_cols() {
            if c > 0 {
                out.push(',');
            }
            if let Some(v) = table.get(r, c) {
                out.push_str(&v.to_string());
            }
        }
        out.push(',');
        out.push_str(&table.target()[r].to_string());
        out.push('\n');
    }
    out
}

pub fn write_features_csv(
    path: &Path,
    table: &FeatureTable,
    config_hash: &str,
    seed: u64,
) -> Result<()> {
    write_atomic(path, &features_to_csv(table, config_hash, seed))
}

/// Parse a features file; returns the table plus the embedded provenance.
pub fn read_features_csv(path: &Path) -> Result<(FeatureTable, String, u64)> {
    let text = fs::read_to_string(path)?;
    let mut lines = text.lines().enumerate().peekable();
    let mut config_hash = None;
    let mut seed = None;
    while let Some((i, l)) = lines.peek() {
        let line = i + 1;
        if let Some(rest) = l.strip_prefix('#') {
            let rest = rest.trim();
            if let Some(v) = rest.strip_prefix("config_hash=") {
                config_hash = Some(v.trim().to_string());
            } else if let Some(v) = rest.strip_prefix("seed=") {
                seed = Some(
                    v.trim()
                        .parse::<u64>()
                        .map_err(|_| parse_err(path, line, format!("bad seed '{v}'")))?,
                );
            }
            lines.next();
        } else {
            break;
        }
    }
    let config_hash =
        config_hash.ok_or_else(|| parse_err(path, 1, "missing '# config_hash=' line"))?;
    let seed = seed.ok_or_else(|| parse_err(path, 1, "missing '# seed=' line"))?;

    let (header_line, header) = lines
        .next()
        .ok_or_else(|| parse_err(path, 1, "missing header"))?;
    let mut cols: Vec<String> = header.split(',').map(|s| s.trim().to_string()).collect();
    let target_name = cols
        .pop()
        .ok_or_else(|| parse_err(path, header_line + 1, "empty header"))?;
    let cats: Vec<bool> = cols
        .iter()
        .map(|n| CATEGORICAL_FEATURE_NAMES.contains(&n.as_str()))
        .collect();
    let mut table = FeatureTable::new(cols.clone(), cats, target_name)?;
    for (i, raw) in lines {
        let line = i + 1;
        if raw.trim().is_empty() {
            continue;
        }
        let f: Vec<&str> = raw.split(',').collect();
        if f.len() != cols.len() + 1 {
            return Err(parse_err(
                path,
                line,
                format!("expected {} cells, got {}", cols.len() + 1, f.len()),
            ));
        }
        let row: Vec<Option<f64>> = f[..cols.len()]
            .iter()
            .map(|s| {
                let s = s.trim();
                if s.is_empty() {
                    Ok(None)
                } else {
                    parse_f64(path, line, "feature", s).map(Some)
                }
            })
            .collect::<Result<_>>()?;
        let target = parse_f64(path, line, "target", f[cols.len()])?;
        table.push_row(&row, target)?;
    }
    Ok((table, config_hash, seed))
}

/// Parse flat `key = value` configuration text. Blank lines and lines
/// starting with `#` are ignored; later keys override earlier ones.
pub fn parse_config_text(text: &str) -> Result<BTreeMap<String, String>> {
    let mut out = BTreeMap::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("line {}: expected key=value, got '{line}'", i + 1)))?;
        let key = k.trim();
        if key.is_empty() {
            return Err(Error::Config(format!("line {}: empty key", i + 1)));
        }
        out.insert(key.to_string(), v.trim().to_string());
    }
    Ok(out)
}

pub fn read_config_file(path: &Path) -> Result<BTreeMap<String, String>> {
    parse_config_text(&fs::read_to_string(path)?)
}
