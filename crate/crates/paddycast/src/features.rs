//! Engineered feature table construction: seven feature sets from SAR,
//! optical, meteorological, and rainfall inputs, plus categorical encodings.
//!
//! Statistics pool the pixels of all retained acquisitions before reduction,
//! and use the population (1/n) variance throughout.

use chrono::NaiveDate;

use crate::acquisition::{
    center_crop_3x3, derive_windows, filter_acquisitions, AcquisitionTile, MeteoSeries,
    RainfallSeries, SarAcquisition, TimeWindow,
};
use crate::error::{Error, Result};
use crate::indices::{
    compute_optical_index, compute_rvi, compute_vv_vh_ratio, Band, BandReflectances, IndexId,
    SarBackscatter,
};

/// Study districts.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum District {
    ChauThanh,
    ThoaiSon,
    ChauPhu,
}

impl District {
    pub const ALL: [District; 3] = [District::ChauThanh, District::ThoaiSon, District::ChauPhu];

    pub fn name(self) -> &'static str {
        match self {
            District::ChauThanh => "ChauThanh",
            District::ThoaiSon => "ThoaiSon",
            District::ChauPhu => "ChauPhu",
        }
    }

    pub fn parse(s: &str) -> Option<District> {
        District::ALL.iter().copied().find(|d| d.name() == s)
    }
}

/// Crop season: WS = Winter-Spring, SA = Summer-Autumn.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Season {
    Ws,
    Sa,
}

impl Season {
    pub fn name(self) -> &'static str {
        match self {
            Season::Ws => "WS",
            Season::Sa => "SA",
        }
    }

    pub fn parse(s: &str) -> Option<Season> {
        match s {
            "WS" => Some(Season::Ws),
            "SA" => Some(Season::Sa),
            _ => None,
        }
    }
}

/// Cropping frequency of the farm: D = twice a year, T = thrice.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Frequency {
    D,
    T,
}

impl Frequency {
    pub fn name(self) -> &'static str {
        match self {
            Frequency::D => "D",
            Frequency::T => "T",
        }
    }

    pub fn parse(s: &str) -> Option<Frequency> {
        match s {
            "D" => Some(Frequency::D),
            "T" => Some(Frequency::T),
            _ => None,
        }
    }
}

/// One farm plot: the primary tabular row.
#[derive(Debug, Clone)]
pub struct FieldRecord {
    pub district: District,
    pub latitude: f64,
    pub longitude: f64,
    pub season: Season,
    pub frequency: Frequency,
    pub harvest_date: NaiveDate,
    pub area_ha: f64,
    pub yield_kg: f64,
    pub yield_rate: f64,
}

impl FieldRecord {
    pub fn validate(&self) -> Result<()> {
        if !self.area_ha.is_finite() || self.area_ha <= 0.0 {
            return Err(Error::InvalidInput(format!(
                "area must be > 0 ha, got {}",
                self.area_ha
            )));
        }
        if !self.yield_rate.is_finite() || self.yield_rate < 0.0 {
            return Err(Error::InvalidInput(format!(
                "yield rate must be finite and >= 0, got {}",
                self.yield_rate
            )));
        }
        if !self.yield_kg.is_finite() || self.yield_kg < 0.0 {
            return Err(Error::InvalidInput(format!(
                "yield must be finite and >= 0 kg, got {}",
                self.yield_kg
            )));
        }
        Ok(())
    }
}

/// Named-column matrix of real values with a missing-value mask and an
/// attached target column. Column names are unique; categorical columns are
/// flagged so the selection stages can treat them separately.
#[derive(Debug, Clone)]
pub struct FeatureTable {
    names: Vec<String>,
    categorical: Vec<bool>,
    rows: usize,
    values: Vec<f64>,
    present: Vec<bool>,
    target_name: String,
    target: Vec<f64>,
}

impl FeatureTable {
    pub fn new(names: Vec<String>, categorical: Vec<bool>, target_name: String) -> Result<Self> {
        let mut seen = std::collections::BTreeSet::new();
        for n in &names {
            if !seen.insert(n.clone()) {
                return Err(Error::InvalidInput(format!("duplicate column name {n}")));
            }
        }
        if categorical.len() != names.len() {
            return Err(Error::Shape("categorical flags must match columns".into()));
        }
        Ok(FeatureTable {
            names,
            categorical,
            rows: 0,
            values: Vec::new(),
            present: Vec::new(),
            target_name,
            target: Vec::new(),
        })
    }

    pub fn push_row(&mut self, row: &[Option<f64>], target: f64) -> Result<()> {
        if row.len() != self.names.len() {
            return Err(Error::Shape(format!(
                "row has {} values, table has {} columns",
                row.len(),
                self.names.len()
            )));
        }
        for v in row {
            self.values.push(v.unwrap_or(f64::NAN));
            self.present.push(v.is_some());
        }
        self.target.push(target);
        self.rows += 1;
        Ok(())
    }

    pub fn n_rows(&self) -> usize {
        self.rows
    }

    pub fn n_cols(&self) -> usize {
        self.names.len()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn target_name(&self) -> &str {
        &self.target_name
    }

    pub fn target(&self) -> &[f64] {
        &self.target
    }

    pub fn is_categorical(&self, col: usize) -> bool {
        self.categorical[col]
    }

    pub fn col_index(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }

    pub fn get(&self, row: usize, col: usize) -> Option<f64> {
        let i = row * self.names.len() + col;
        if self.present[i] {
            Some(self.values[i])
        } else {
            None
        }
    }

    pub fn set(&mut self, row: usize, col: usize, value: Option<f64>) {
        let i = row * self.names.len() + col;
        self.values[i] = value.unwrap_or(f64::NAN);
        self.present[i] = value.is_some();
    }

    /// Present values of one column over the given rows.
    pub fn column_values(&self, col: usize, rows: &[usize]) -> Vec<f64> {
        rows.iter().filter_map(|&r| self.get(r, col)).collect()
    }

    /// New table containing only the named columns (in the given order),
    /// all rows, same target.
    pub fn select_columns(&self, names: &[String]) -> Result<FeatureTable> {
        let cols: Vec<usize> = names
            .iter()
            .map(|n| {
                self.col_index(n)
                    .ok_or_else(|| Error::Selection(format!("unknown column {n}")))
            })
            .collect::<Result<_>>()?;
        let mut out = FeatureTable::new(
            names.to_vec(),
            cols.iter().map(|&c| self.categorical[c]).collect(),
            self.target_name.clone(),
        )?;
        for r in 0..self.rows {
            let row: Vec<Option<f64>> = cols.iter().map(|&c| self.get(r, c)).collect();
            out.push_row(&row, self.target[r])?;
        }
        Ok(out)
    }

    /// Dense row for modeling; errors if any value is still missing.
    pub fn dense_row(&self, row: usize) -> Result<Vec<f64>> {
        (0..self.n_cols())
            .map(|c| {
                self.get(row, c).ok_or_else(|| {
                    Error::InvalidInput(format!(
                        "row {row} column {} is missing; impute before modeling",
                        self.names[c]
                    ))
                })
            })
            .collect()
    }
}

fn mean(values: &[f64]) -> f64 {
    values.iter().sum::<f64>() / values.len() as f64
}

/// Population variance (divide by n).
fn population_variance(values: &[f64]) -> f64 {
    let m = mean(values);
    values.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / values.len() as f64
}

/// Pooled min/max/mean/population-variance bundle.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PooledStats {
    pub min: f64,
    pub max: f64,
    pub mean: f64,
    pub var: f64,
}

fn pooled_stats(values: &[f64]) -> Option<PooledStats> {
    if values.is_empty() {
        return None;
    }
    Some(PooledStats {
        min: values.iter().copied().fold(f64::INFINITY, f64::min),
        max: values.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        mean: mean(values),
        var: population_variance(values),
    })
}

pub const SAR_FEATURE_NAMES: [&str; 4] = ["VV_mean", "VH_mean", "VV_VH_ratio_mean", "RVI_mean"];

/// Set 1: means of VV, VH, VV/VH, and RVI over the pooled pixels of all
/// acquisitions. Empty input yields masked features.
pub fn sar_feature_set(acqs: &[SarAcquisition]) -> [Option<f64>; 4] {
    let mut vv = Vec::new();
    let mut vh = Vec::new();
    let mut ratio = Vec::new();
    let mut rvi = Vec::new();
    for a in acqs {
        for (v, h) in a.vv.values().iter().zip(a.vh.values()) {
            vv.push(*v);
            vh.push(*h);
            let s = SarBackscatter { vv: *v, vh: *h };
            ratio.push(compute_vv_vh_ratio(&s));
            rvi.push(compute_rvi(&s));
        }
    }
    if vv.is_empty() {
        return [None; 4];
    }
    [
        Some(mean(&vv)),
        Some(mean(&vh)),
        Some(mean(&ratio)),
        Some(mean(&rvi)),
    ]
}

/// Set 2: min/max/mean/variance of one band over the pooled 3x3-cropped
/// pixels of all acquisitions.
pub fn band_statistics(tiles: &[&AcquisitionTile], band: Band) -> Option<PooledStats> {
    let mut pool = Vec::new();
    for t in tiles {
        let g = center_crop_3x3(t.band(band)).ok()?;
        pool.extend_from_slice(g.values());
    }
    pooled_stats(&pool)
}

fn tile_reflectances(tile: &AcquisitionTile) -> Result<Vec<BandReflectances>> {
    let grids: Vec<_> = Band::ALL
        .iter()
        .map(|&b| center_crop_3x3(tile.band(b)))
        .collect::<Result<_>>()?;
    (0..9)
        .map(|i| {
            BandReflectances::new(
                grids[0].values()[i],
                grids[1].values()[i],
                grids[2].values()[i],
                grids[3].values()[i],
                grids[4].values()[i],
                grids[5].values()[i],
                grids[6].values()[i],
                grids[7].values()[i],
                grids[8].values()[i],
            )
        })
        .collect()
}

/// Sets 3-5: per-pixel index values pooled across acquisitions (missing
/// pixels skipped), then mean and population variance of the pool.
pub fn index_statistics(tiles: &[&AcquisitionTile], id: IndexId) -> Option<(f64, f64)> {
    let mut pool = Vec::new();
    for t in tiles {
        let pixels = tile_reflectances(t).ok()?;
        pool.extend(pixels.iter().filter_map(|p| compute_optical_index(id, p)));
    }
    pooled_stats(&pool).map(|s| (s.mean, s.var))
}

pub const RAINFALL_FEATURE_NAMES: [&str; 6] = [
    "Rainfall_growth_mean",
    "Rainfall_growth_max",
    "Rainfall_growth_sum",
    "Rainfall_maturity_mean",
    "Rainfall_maturity_max",
    "Rainfall_maturity_sum",
];

/// Set 7: mean/max/sum of rainfall rates in the growth and maturity windows.
pub fn rainfall_features(
    series: &RainfallSeries,
    growth: &TimeWindow,
    maturity: &TimeWindow,
) -> [Option<f64>; 6] {
    let mut out = [None; 6];
    for (slot, window) in [(0usize, growth), (3, maturity)] {
        let rates = series.rates_in(window);
        if let Some(s) = pooled_stats(&rates) {
            out[slot] = Some(s.mean);
            out[slot + 1] = Some(s.max);
            out[slot + 2] = Some(rates.iter().sum());
        }
    }
    out
}

pub const METEO_FEATURE_NAMES: [&str; 8] = [
    "MET_temp_mean",
    "MET_temp_var",
    "LST_mean",
    "LST_var",
    "MET_solrad_mean",
    "MET_solrad_var",
    "MET_sh_mean",
    "MET_sh_var",
];

/// Set 6: mean and population variance of the four meteorological channels
/// over the window.
pub fn meteo_features(series: &MeteoSeries, window: &TimeWindow) -> [Option<f64>; 8] {
    let samples = series.samples_in(window);
    if samples.is_empty() {
        return [None; 8];
    }
    let channels: [Vec<f64>; 4] = [
        samples.iter().map(|s| s.air_temperature).collect(),
        samples.iter().map(|s| s.land_surface_temperature).collect(),
        samples.iter().map(|s| s.solar_radiation).collect(),
        samples.iter().map(|s| s.specific_humidity).collect(),
    ];
    let mut out = [None; 8];
    for (i, ch) in channels.iter().enumerate() {
        out[2 * i] = Some(mean(ch));
        out[2 * i + 1] = Some(population_variance(ch));
    }
    out
}

pub const CATEGORICAL_FEATURE_NAMES: [&str; 4] =
    ["Season_Enc", "Dist_ChauPhu", "Dist_ChauThanh", "Dist_ThoaiSon"];

/// Season indicator (WS=0, SA=1) plus a one-hot district triplet in column
/// order (ChauPhu, ChauThanh, ThoaiSon).
pub fn encode_categoricals(record: &FieldRecord) -> [f64; 4] {
    let season = match record.season {
        Season::Ws => 0.0,
        Season::Sa => 1.0,
    };
    let mut out = [season, 0.0, 0.0, 0.0];
    let slot = match record.district {
        District::ChauPhu => 1,
        District::ChauThanh => 2,
        District::ThoaiSon => 3,
    };
    out[slot] = 1.0;
    out
}

/// The thirteen indices of feature Set 3, in column order.
pub const SET3_INDICES: [IndexId; 13] = [
    IndexId::Ndvi,
    IndexId::Sr,
    IndexId::Evi,
    IndexId::Evi2,
    IndexId::Savi,
    IndexId::Rgvi,
    IndexId::Dvi,
    IndexId::Msr,
    IndexId::Nirv,
    IndexId::Kndvi,
    IndexId::NdviRe,
    IndexId::Ndre1,
    IndexId::Ndre2,
];

/// Set 4 soil/water indices. LSWI22 stays available in the index library but
/// is not a table column, keeping Set 4 at its stated six variables.
pub const SET4_INDICES: [IndexId; 3] = [IndexId::Ndwi, IndexId::Bsi, IndexId::Lswi16];

/// Set 5 plant biochemical indices.
pub const SET5_INDICES: [IndexId; 2] = [IndexId::Cci, IndexId::Gcc];

/// Column carrying the plot-level yield mass; appended after the engineered
/// features because the published selection keeps it as a predictor.
pub const YIELD_KG_COLUMN: &str = "Yield_kg";

pub const TARGET_COLUMN: &str = "Yield_rate";

/// The 94 engineered feature column names, in stable order:
/// Set1 (4) + Set2 (36) + Set3 (26) + Set4 (6) + Set5 (4) + Set6 (8) +
/// Set7 (6) + categorical encodings (4).
pub fn engineered_feature_names() -> Vec<String> {
    let mut names: Vec<String> = SAR_FEATURE_NAMES.iter().map(|s| s.to_string()).collect();
    for b in Band::ALL {
        for stat in ["min", "max", "mean", "var"] {
            names.push(format!("{}_{stat}", b.name()));
        }
    }
    for set in [&SET3_INDICES[..], &SET4_INDICES[..], &SET5_INDICES[..]] {
        for id in set {
            names.push(format!("{}_mean", id.name()));
            names.push(format!("{}_var", id.name()));
        }
    }
    names.extend(METEO_FEATURE_NAMES.iter().map(|s| s.to_string()));
    names.extend(RAINFALL_FEATURE_NAMES.iter().map(|s| s.to_string()));
    names.extend(CATEGORICAL_FEATURE_NAMES.iter().map(|s| s.to_string()));
    names
}

/// All table column names: the 94 engineered features plus Yield_kg.
pub fn table_column_names() -> Vec<String> {
    let mut names = engineered_feature_names();
    names.push(YIELD_KG_COLUMN.to_string());
    names
}

fn categorical_flags(names: &[String]) -> Vec<bool> {
    names
        .iter()
        .map(|n| CATEGORICAL_FEATURE_NAMES.contains(&n.as_str()))
        .collect()
}

/// Raw per-location sensor observations feeding feature extraction.
#[derive(Debug, Clone)]
pub struct AcquisitionBundle {
    pub optical: Vec<AcquisitionTile>,
    pub sar: Vec<SarAcquisition>,
    pub rainfall: RainfallSeries,
    pub meteo: MeteoSeries,
}

/// Extract the full engineered feature row for one record.
pub fn extract_feature_row(
    record: &FieldRecord,
    bundle: &AcquisitionBundle,
    max_cloud: f64,
) -> Vec<Option<f64>> {
    let windows = derive_windows(record.harvest_date);
    let mut row = Vec::with_capacity(95);

    // Set 1: SAR over the growth window.
    let sar: Vec<SarAcquisition> = bundle
        .sar
        .iter()
        .filter(|a| windows.growth.contains(a.timestamp))
        .cloned()
        .collect();
    row.extend(sar_feature_set(&sar));

    // Sets 2-5: optical tiles, cloud-filtered, inside the s2 window.
    let tiles = filter_acquisitions(&bundle.optical, max_cloud, &windows.s2);
    for b in Band::ALL {
        match band_statistics(&tiles, b) {
            Some(s) => row.extend([Some(s.min), Some(s.max), Some(s.mean), Some(s.var)]),
            None => row.extend([None; 4]),
        }
    }
    for set in [&SET3_INDICES[..], &SET4_INDICES[..], &SET5_INDICES[..]] {
        for &id in set {
            match index_statistics(&tiles, id) {
                Some((m, v)) => row.extend([Some(m), Some(v)]),
                None => row.extend([None, None]),
            }
        }
    }

    // Set 6: meteorology over the growth window.
    row.extend(meteo_features(&bundle.meteo, &windows.growth));

    // Set 7: rainfall over growth and maturity.
    row.extend(rainfall_features(
        &bundle.rainfall,
        &windows.growth,
        &windows.maturity,
    ));

    row.extend(encode_categoricals(record).map(Some));
    row.push(Some(record.yield_kg));
    row
}

/// Assemble the engineered feature table: one row per record, 94 engineered
/// columns plus Yield_kg, with Yield_rate as the attached target. Records
/// with no usable acquisitions keep their row with masked satellite features.
pub fn assemble_feature_table(
    records: &[FieldRecord],
    bundles: &[AcquisitionBundle],
    max_cloud: f64,
) -> Result<FeatureTable> {
    if records.len() != bundles.len() {
        return Err(Error::Ingestion(format!(
            "{} records but {} acquisition bundles",
            records.len(),
            bundles.len()
        )));
    }
    let mut keys = std::collections::BTreeSet::new();
    for r in records {
        r.validate()?;
        let key = (
            format!("{:.6}", r.latitude),
            format!("{:.6}", r.longitude),
            r.harvest_date,
        );
        if !keys.insert(key) {
            return Err(Error::Ingestion(format!(
                "duplicate location key ({}, {}, {})",
                r.latitude, r.longitude, r.harvest_date
            )));
        }
    }
    let names = table_column_names();
    let cats = categorical_flags(&names);
    let mut table = FeatureTable::new(names, cats, TARGET_COLUMN.to_string())?;
    for (record, bundle) in records.iter().zip(bundles) {
        let row = extract_feature_row(record, bundle, max_cloud);
        table.push_row(&row, record.yield_rate)?;
    }
    Ok(table)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::acquisition::Grid;

    fn date(d: u32) -> NaiveDate {
        NaiveDate::from_ymd_opt(2022, 6, d).unwrap()
    }

    fn sar_const(day: u32, vv: f64, vh: f64) -> SarAcquisition {
        SarAcquisition::new(
            date(day),
            Grid::constant(3, 3, vv).unwrap(),
            Grid::constant(3, 3, vh).unwrap(),
        )
        .unwrap()
    }

    #[test]
    fn sar_set_constant_field() {
        let out = sar_feature_set(&[sar_const(1, 0.06, 0.02)]);
        assert!((out[0].unwrap() - 0.06).abs() < 1e-12);
        assert!((out[1].unwrap() - 0.02).abs() < 1e-12);
        assert!((out[2].unwrap() - 3.0).abs() < 1e-12);
        assert!((out[3].unwrap() - 0.75).abs() < 1e-12);
    }

    #[test]
    fn sar_set_pools_pixels_across_acquisitions() {
        let out = sar_feature_set(&[sar_const(1, 0.04, 0.02), sar_const(2, 0.08, 0.02)]);
        assert!((out[0].unwrap() - 0.06).abs() < 1e-12);
    }

    #[test]
    fn sar_equal_channels() {
        let out = sar_feature_set(&[sar_const(1, 0.05, 0.05)]);
        assert!((out[2].unwrap() - 1.0).abs() < 1e-12);
        assert!((out[3].unwrap() - 0.5).abs() < 1e-12);
    }

    #[test]
    fn sar_empty_is_masked() {
        assert_eq!(sar_feature_set(&[]), [None; 4]);
    }

    fn tile_const(day: u32, value: f64) -> AcquisitionTile {
        let bands = Band::ALL
            .iter()
            .map(|_| Grid::constant(3, 3, value).unwrap())
            .collect();
        AcquisitionTile::new(date(day), 0.0, bands).unwrap()
    }

    #[test]
    fn band_stats_constant_field() {
        let t = tile_const(1, 0.3);
        let s = band_statistics(&[&t], Band::B04).unwrap();
        assert_eq!(
            s,
            PooledStats {
                min: 0.3,
                max: 0.3,
                mean: 0.3,
                var: 0.0
            }
        );
    }

    #[test]
    fn band_stats_pooled_two_tiles() {
        let a = tile_const(1, 0.1);
        let b = tile_const(2, 0.5);
        let s = band_statistics(&[&a, &b], Band::B08).unwrap();
        assert!((s.min - 0.1).abs() < 1e-12);
        assert!((s.max - 0.5).abs() < 1e-12);
        assert!((s.mean - 0.3).abs() < 1e-12);
        assert!((s.var - 0.04).abs() < 1e-12);
    }

    #[test]
    fn band_stats_hand_population_variance() {
        // pooled {0.1, 0.2, 0.3}: population variance 0.006667
        let g = Grid::new(3, 3, vec![0.1, 0.2, 0.3, 0.1, 0.2, 0.3, 0.1, 0.2, 0.3]).unwrap();
        let bands: Vec<Grid> = Band::ALL.iter().map(|_| g.clone()).collect();
        let t = AcquisitionTile::new(date(1), 0.0, bands).unwrap();
        let s = band_statistics(&[&t], Band::B02).unwrap();
        assert!((s.mean - 0.2).abs() < 1e-12);
        assert!((s.var - 0.006_666_666_666_666_667).abs() < 1e-12);
    }

    fn tile_nir_red(day: u32, nir: f64, red: f64) -> AcquisitionTile {
        let bands = Band::ALL
            .iter()
            .map(|&b| {
                let v = match b {
                    Band::B08 => nir,
                    Band::B04 => red,
                    _ => 0.1,
                };
                Grid::constant(3, 3, v).unwrap()
            })
            .collect();
        AcquisitionTile::new(date(day), 0.0, bands).unwrap()
    }

    #[test]
    fn index_stats_constant_ndvi() {
        let t = tile_nir_red(1, 0.5, 0.1);
        let (m, v) = index_statistics(&[&t], IndexId::Ndvi).unwrap();
        assert!((m - 2.0 / 3.0).abs() < 1e-12);
        assert!(v.abs() < 1e-15);
    }

    #[test]
    fn index_stats_skips_missing_pixels() {
        // SR with red = 0 is missing on every pixel of the first tile.
        let bad = tile_nir_red(1, 0.4, 0.0);
        let good = tile_nir_red(2, 0.4, 0.2);
        let (m, _) = index_statistics(&[&bad, &good], IndexId::Sr).unwrap();
        assert!((m - 2.0).abs() < 1e-12);
        // All pixels missing -> masked.
        assert_eq!(index_statistics(&[&bad], IndexId::Sr), None);
    }

    #[test]
    fn kndvi_zero_field() {
        let t = tile_nir_red(1, 0.3, 0.3);
        let (m, v) = index_statistics(&[&t], IndexId::Kndvi).unwrap();
        assert_eq!(m, 0.0);
        assert_eq!(v, 0.0);
    }

    #[test]
    fn index_stats_permutation_invariant() {
        let a = tile_nir_red(1, 0.5, 0.1);
        let b = tile_nir_red(2, 0.4, 0.2);
        let fwd = index_statistics(&[&a, &b], IndexId::Ndvi).unwrap();
        let rev = index_statistics(&[&b, &a], IndexId::Ndvi).unwrap();
        assert_eq!(fwd, rev);
    }

    fn window(start: u32, end: u32) -> TimeWindow {
        TimeWindow::new(date(start), date(end)).unwrap()
    }

    #[test]
    fn rainfall_hand_values() {
        let series =
            RainfallSeries::new((1..=10).map(|d| (date(d), 2.0)).collect()).unwrap();
        let out = rainfall_features(&series, &window(1, 11), &window(11, 20));
        assert!((out[0].unwrap() - 2.0).abs() < 1e-12);
        assert!((out[1].unwrap() - 2.0).abs() < 1e-12);
        assert!((out[2].unwrap() - 20.0).abs() < 1e-12);
        // maturity window has no samples
        assert_eq!(out[3], None);
    }

    #[test]
    fn rainfall_two_samples_in_maturity() {
        let series = RainfallSeries::new(vec![(date(12), 1.0), (date(14), 3.0)]).unwrap();
        let out = rainfall_features(&series, &window(1, 11), &window(11, 20));
        assert!((out[3].unwrap() - 2.0).abs() < 1e-12);
        assert!((out[4].unwrap() - 3.0).abs() < 1e-12);
        assert!((out[5].unwrap() - 4.0).abs() < 1e-12);
    }

    #[test]
    fn rainfall_all_zero() {
        let series = RainfallSeries::new((1..=5).map(|d| (date(d), 0.0)).collect()).unwrap();
        let out = rainfall_features(&series, &window(1, 6), &window(11, 20));
        assert_eq!(out[0], Some(0.0));
        assert_eq!(out[1], Some(0.0));
        assert_eq!(out[2], Some(0.0));
    }

    fn meteo_sample(day: u32, temp: f64) -> crate::acquisition::MeteoSample {
        crate::acquisition::MeteoSample {
            timestamp: date(day),
            air_temperature: temp,
            land_surface_temperature: temp + 2.0,
            solar_radiation: 200.0,
            specific_humidity: 0.015,
        }
    }

    #[test]
    fn meteo_hand_statistics() {
        let series = MeteoSeries::new(vec![meteo_sample(1, 300.0), meteo_sample(2, 302.0)]).unwrap();
        let out = meteo_features(&series, &window(1, 5));
        assert!((out[0].unwrap() - 301.0).abs() < 1e-12);
        assert!((out[1].unwrap() - 1.0).abs() < 1e-12);
        // constant channels -> zero variance
        assert_eq!(out[5], Some(0.0));
        assert_eq!(out[7], Some(0.0));
    }

    #[test]
    fn meteo_single_sample_zero_variance() {
        let series = MeteoSeries::new(vec![meteo_sample(1, 300.0)]).unwrap();
        let out = meteo_features(&series, &window(1, 5));
        assert_eq!(out[1], Some(0.0));
    }

    fn record(district: District, season: Season) -> FieldRecord {
        FieldRecord {
            district,
            latitude: 10.5,
            longitude: 105.3,
            season,
            frequency: Frequency::D,
            harvest_date: NaiveDate::from_ymd_opt(2022, 8, 9).unwrap(),
            area_ha: 1.5,
            yield_kg: 9000.0,
            yield_rate: 6000.0,
        }
    }

    #[test]
    fn categorical_encoding_rules() {
        let enc = encode_categoricals(&record(District::ChauPhu, Season::Sa));
        assert_eq!(enc, [1.0, 1.0, 0.0, 0.0]);
        let enc = encode_categoricals(&record(District::ThoaiSon, Season::Ws));
        assert_eq!(enc, [0.0, 0.0, 0.0, 1.0]);
        for d in District::ALL {
            let enc = encode_categoricals(&record(d, Season::Ws));
            assert_eq!(enc[1] + enc[2] + enc[3], 1.0);
        }
    }

    #[test]
    fn engineered_column_count_is_94() {
        let names = engineered_feature_names();
        assert_eq!(names.len(), 94);
        // stable and unique
        let set: std::collections::BTreeSet<_> = names.iter().collect();
        assert_eq!(set.len(), 94);
        assert_eq!(names, engineered_feature_names());
    }

    #[test]
    fn assemble_masks_missing_acquisitions() {
        let rec = record(District::ChauThanh, Season::Ws);
        let bundle = AcquisitionBundle {
            optical: vec![],
            sar: vec![],
            rainfall: RainfallSeries::new(vec![]).unwrap(),
            meteo: MeteoSeries::new(vec![]).unwrap(),
        };
        let table = assemble_feature_table(&[rec], &[bundle], 0.6).unwrap();
        assert_eq!(table.n_rows(), 1);
        assert_eq!(table.n_cols(), 95);
        assert_eq!(table.get(0, table.col_index("VV_mean").unwrap()), None);
        assert_eq!(
            table.get(0, table.col_index("Season_Enc").unwrap()),
            Some(0.0)
        );
        assert_eq!(
            table.get(0, table.col_index(YIELD_KG_COLUMN).unwrap()),
            Some(9000.0)
        );
    }

    #[test]
    fn assemble_rejects_duplicate_keys() {
        let rec = record(District::ChauThanh, Season::Ws);
        let bundle = AcquisitionBundle {
            optical: vec![],
            sar: vec![],
            rainfall: RainfallSeries::new(vec![]).unwrap(),
            meteo: MeteoSeries::new(vec![]).unwrap(),
        };
        let err =
            assemble_feature_table(&[rec.clone(), rec], &[bundle.clone(), bundle], 0.6).unwrap_err();
        assert!(matches!(err, Error::Ingestion(_)));
    }
}
