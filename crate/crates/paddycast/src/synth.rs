//! Synthetic dataset generation for desk-scale verification.
//!
//! Each record gets latent field conditions (vigor, moisture, rainfall,
//! temperature, ...), which drive simulated optical tiles, SAR backscatter,
//! rainfall, and meteorology. Features are then extracted through the real
//! extraction code, and the target is an exact linear function of the
//! selected features plus Gaussian noise. Because the plot-level yield mass
//! is derived from the noise-free target, `noise_std * sqrt(2/pi)` is a true
//! lower bound on any model's achievable mean absolute error.

use std::f64::consts::PI;

use chrono::{Duration, NaiveDate};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::acquisition::{
    derive_windows, AcquisitionTile, Grid, MeteoSample, MeteoSeries, RainfallSeries,
    SarAcquisition,
};
use crate::error::{Error, Result};
use crate::features::{
    extract_feature_row, table_column_names, AcquisitionBundle, District, FieldRecord, Frequency,
    Season,
};
use crate::selection::fixed_selected_features;

/// First and last harvest dates of the simulated campaign.
pub const HARVEST_FIRST: (i32, u32, u32) = (2022, 3, 18);
pub const HARVEST_LAST: (i32, u32, u32) = (2022, 8, 9);

/// Published per-district record counts used as sampling proportions.
const DISTRICT_WEIGHTS: [(District, usize); 3] = [
    (District::ChauThanh, 218),
    (District::ThoaiSon, 171),
    (District::ChauPhu, 168),
];

/// Mean absolute value of centered Gaussian noise with the given standard
/// deviation: the floor below which no model's MAE can fall.
pub fn noise_floor_mae(noise_std: f64) -> f64 {
    noise_std * (2.0 / PI).sqrt()
}

/// Controls for the generator. `coefficients` are aligned with
/// [`fixed_selected_features`] order; the Yield_kg entry must be zero because
/// the yield mass is computed from the target and would otherwise leak it.
#[derive(Debug, Clone)]
pub struct SyntheticSpec {
    pub records: usize,
    pub noise_std: f64,
    pub intercept: f64,
    pub coefficients: Vec<f64>,
    pub max_cloud: f64,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        // aligned with fixed_selected_features():
        // Season_Enc, Dist_ChauPhu, Dist_ChauThanh, Dist_ThoaiSon, Yield_kg,
        // Rainfall_growth_max, Rainfall_growth_sum, Rainfall_maturity_max,
        // VV_mean, B08_max, RGVI_mean, kNDVI_mean, GCC_mean, LST_mean,
        // MET_solrad_mean
        SyntheticSpec {
            records: 557,
            noise_std: 300.0,
            intercept: 6500.0,
            coefficients: vec![
                120.0, 60.0, -60.0, 0.0, 0.0, 80.0, 150.0, 80.0, 150.0, 200.0, 150.0, 300.0,
                150.0, -150.0, 130.0,
            ],
            max_cloud: 0.6,
        }
    }
}

impl SyntheticSpec {
    pub fn validate(&self) -> Result<()> {
        if self.records < 20 {
            return Err(Error::InvalidInput(format!(
                "need at least 20 records, got {}",
                self.records
            )));
        }
        if !self.noise_std.is_finite() || self.noise_std < 0.0 {
            return Err(Error::InvalidInput(format!(
                "noise std must be finite and >= 0, got {}",
                self.noise_std
            )));
        }
        if !self.intercept.is_finite() {
            return Err(Error::InvalidInput("intercept must be finite".into()));
        }
        let names = fixed_selected_features();
        if self.coefficients.len() != names.len() {
            return Err(Error::InvalidInput(format!(
                "expected {} coefficients, got {}",
                names.len(),
                self.coefficients.len()
            )));
        }
        if self.coefficients.iter().any(|c| !c.is_finite()) {
            return Err(Error::InvalidInput("coefficients must be finite".into()));
        }
        let yk = names.iter().position(|n| *n == "Yield_kg").unwrap();
        if self.coefficients[yk] != 0.0 {
            return Err(Error::InvalidInput(
                "the Yield_kg coefficient must be zero: the yield mass is derived \
                 from the target and a nonzero weight would leak it"
                    .into(),
            ));
        }
        if !(self.max_cloud > 0.0 && self.max_cloud <= 1.0) {
            return Err(Error::InvalidInput(format!(
                "max cloud fraction must be in (0, 1], got {}",
                self.max_cloud
            )));
        }
        Ok(())
    }
}

/// The generating function: target = intercept + sum of coefficients over
/// standardized selected features (plus noise added by the generator).
#[derive(Debug, Clone)]
pub struct GroundTruth {
    pub feature_names: Vec<String>,
    pub intercept: f64,
    pub coefficients: Vec<f64>,
    pub centers: Vec<f64>,
    pub scales: Vec<f64>,
}

impl GroundTruth {
    /// Evaluate the noise-free target for one feature vector (aligned with
    /// `feature_names`).
    pub fn eval(&self, features: &[f64]) -> Result<f64> {
        if features.len() != self.coefficients.len() {
            return Err(Error::Shape(format!(
                "expected {} features, got {}",
                self.coefficients.len(),
                features.len()
            )));
        }
        let mut y = self.intercept;
        for i in 0..features.len() {
            y += self.coefficients[i] * (features[i] - self.centers[i]) / self.scales[i];
        }
        Ok(y)
    }
}

/// Generator output: aligned records and acquisition bundles, plus the
/// generating function for diagnostics.
#[derive(Debug, Clone)]
pub struct SyntheticDataset {
    pub records: Vec<FieldRecord>,
    pub bundles: Vec<AcquisitionBundle>,
    pub truth: GroundTruth,
}

/// Standard normal draw (Box-Muller).
fn normal(rng: &mut ChaCha8Rng) -> f64 {
    let u1: f64 = rng.gen_range(f64::EPSILON..1.0);
    let u2: f64 = rng.gen_range(0.0..1.0);
    (-2.0 * u1.ln()).sqrt() * (2.0 * PI * u2).cos()
}

/// Latent field conditions driving all sensors of one record.
struct Latents {
    vigor: f64,
    greenness: f64,
    moisture: f64,
    backscatter: f64,
    rain: f64,
    heat: f64,
    solar: f64,
    humidity: f64,
}

impl Latents {
    fn draw(rng: &mut ChaCha8Rng) -> Latents {
        Latents {
            vigor: rng.gen(),
            greenness: rng.gen(),
            moisture: rng.gen(),
            backscatter: rng.gen(),
            rain: rng.gen(),
            heat: rng.gen(),
            solar: rng.gen(),
            humidity: rng.gen(),
        }
    }

    /// Noise-free per-band reflectance, ordered as
    /// B02, B03, B04, B05, B06, B07, B08, B11, B12.
    fn band_levels(&self) -> [f64; 9] {
        [
            0.06 + 0.04 * (1.0 - self.greenness),
            0.08 + 0.06 * self.greenness,
            0.16 - 0.10 * self.vigor,
            0.15 + 0.05 * self.vigor,
            0.20 + 0.10 * self.vigor,
            0.24 + 0.12 * self.vigor,
            0.25 + 0.30 * self.vigor,
            0.20 - 0.08 * self.moisture,
            0.15 - 0.06 * self.moisture,
        ]
    }
}

fn jittered_grid(rng: &mut ChaCha8Rng, level: f64, pixel_sd: f64, floor: f64) -> Grid {
    let data: Vec<f64> = (0..9)
        .map(|_| (level + pixel_sd * normal(rng)).max(floor))
        .collect();
    Grid::new(3, 3, data).expect("finite 3x3 grid")
}

fn optical_tiles(
    rng: &mut ChaCha8Rng,
    latents: &Latents,
    harvest: NaiveDate,
    max_cloud: f64,
) -> Vec<AcquisitionTile> {
    let windows = derive_windows(harvest);
    let levels = latents.band_levels();
    let mut tiles = Vec::new();
    let mut date = windows.s2.start();
    let mut idx = 0usize;
    while date < windows.s2.end() {
        // the first four passes stay usable so every record has coverage
        let cloud = if idx < 4 {
            rng.gen_range(0.0..(0.8 * max_cloud))
        } else {
            rng.gen_range(0.0..1.0)
        };
        let bands: Vec<Grid> = levels
            .iter()
            .map(|&level| {
                let acq_level = level + 0.008 * normal(rng);
                jittered_grid(rng, acq_level, 0.004, 0.005)
            })
            .collect();
        tiles.push(AcquisitionTile::new(date, cloud, bands).expect("valid tile"));
        date += Duration::days(6);
        idx += 1;
    }
    tiles
}

fn sar_acquisitions(
    rng: &mut ChaCha8Rng,
    latents: &Latents,
    harvest: NaiveDate,
) -> Vec<SarAcquisition> {
    let windows = derive_windows(harvest);
    let vv_level = 0.03 + 0.07 * latents.backscatter;
    let vh_level = 0.01 + 0.02 * latents.backscatter;
    let mut out = Vec::new();
    let mut date = windows.growth.start();
    while date < windows.growth.end() {
        let acq = (0.1 * normal(rng)).exp();
        let vv = jittered_grid(rng, vv_level * acq, 0.002, 1e-4);
        let vh = jittered_grid(rng, vh_level * acq, 0.001, 1e-4);
        out.push(SarAcquisition::new(date, vv, vh).expect("valid sar"));
        date += Duration::days(12);
    }
    out
}

fn rainfall_series(rng: &mut ChaCha8Rng, latents: &Latents, harvest: NaiveDate) -> RainfallSeries {
    let start = harvest - Duration::days(100);
    let samples: Vec<(NaiveDate, f64)> = (0..100)
        .map(|d| {
            let rate = latents.rain * 12.0 * rng.gen_range(0.2..1.8);
            (start + Duration::days(d), rate)
        })
        .collect();
    RainfallSeries::new(samples).expect("increasing dates")
}

fn meteo_series(rng: &mut ChaCha8Rng, latents: &Latents, harvest: NaiveDate) -> MeteoSeries {
    let windows = derive_windows(harvest);
    let mut samples = Vec::new();
    let mut date = windows.growth.start();
    while date < windows.maturity.end() {
        let air = 299.0 + 6.0 * latents.heat + 0.8 * normal(rng);
        samples.push(MeteoSample {
            timestamp: date,
            air_temperature: air,
            land_surface_temperature: air + 1.5 + 0.5 * latents.vigor + 0.5 * normal(rng),
            solar_radiation: (160.0 + 80.0 * latents.solar + 8.0 * normal(rng)).max(1.0),
            specific_humidity: (0.012 + 0.008 * latents.humidity + 0.0005 * normal(rng))
                .max(0.001),
        });
        date += Duration::days(1);
    }
    MeteoSeries::new(samples).expect("increasing dates")
}

/// Shuffled district assignments honoring the published proportions via
/// largest-remainder apportionment.
fn district_assignments(rng: &mut ChaCha8Rng, n: usize) -> Vec<District> {
    let total: usize = DISTRICT_WEIGHTS.iter().map(|(_, w)| w).sum();
    let mut counts: Vec<usize> = DISTRICT_WEIGHTS
        .iter()
        .map(|(_, w)| n * w / total)
        .collect();
    let mut remainders: Vec<(usize, usize)> = DISTRICT_WEIGHTS
        .iter()
        .enumerate()
        .map(|(i, (_, w))| (n * w % total, i))
        .collect();
    remainders.sort_by(|a, b| b.0.cmp(&a.0));
    let mut assigned: usize = counts.iter().sum();
    let mut cursor = 0;
    while assigned < n {
        counts[remainders[cursor % 3].1] += 1;
        assigned += 1;
        cursor += 1;
    }
    let mut out = Vec::with_capacity(n);
    for ((d, _), c) in DISTRICT_WEIGHTS.iter().zip(&counts) {
        out.extend(std::iter::repeat(*d).take(*c));
    }
    use rand::seq::SliceRandom;
    out.shuffle(rng);
    out
}

/// Generate a full synthetic dataset. Deterministic for a fixed seed.
pub fn generate_synthetic_dataset(spec: &SyntheticSpec, seed: u64) -> Result<SyntheticDataset> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let first = NaiveDate::from_ymd_opt(HARVEST_FIRST.0, HARVEST_FIRST.1, HARVEST_FIRST.2)
        .expect("valid date");
    let last =
        NaiveDate::from_ymd_opt(HARVEST_LAST.0, HARVEST_LAST.1, HARVEST_LAST.2).expect("valid date");
    let span = (last - first).num_days();
    let season_cut = NaiveDate::from_ymd_opt(2022, 6, 1).expect("valid date");

    let districts = district_assignments(&mut rng, spec.records);
    let mut records = Vec::with_capacity(spec.records);
    let mut bundles = Vec::with_capacity(spec.records);
    for district in districts {
        let harvest = first + Duration::days(rng.gen_range(0..=span));
        let latents = Latents::draw(&mut rng);
        let record = FieldRecord {
            district,
            latitude: rng.gen_range(10.2..10.7),
            longitude: rng.gen_range(105.0..105.6),
            season: if harvest < season_cut { Season::Ws } else { Season::Sa },
            frequency: if rng.gen_bool(0.7) { Frequency::D } else { Frequency::T },
            harvest_date: harvest,
            area_ha: rng.gen_range(0.5..3.0),
            yield_kg: 0.0,
            yield_rate: 0.0,
        };
        let bundle = AcquisitionBundle {
            optical: optical_tiles(&mut rng, &latents, harvest, spec.max_cloud),
            sar: sar_acquisitions(&mut rng, &latents, harvest),
            rainfall: rainfall_series(&mut rng, &latents, harvest),
            meteo: meteo_series(&mut rng, &latents, harvest),
        };
        records.push(record);
        bundles.push(bundle);
    }

    // extract the generating features through the real extraction path
    let names = fixed_selected_features();
    let all_columns = table_column_names();
    let cols: Vec<usize> = names
        .iter()
        .map(|n| all_columns.iter().position(|c| c == n).expect("known column"))
        .collect();
    let mut feature_rows: Vec<Vec<f64>> = Vec::with_capacity(spec.records);
    for (record, bundle) in records.iter().zip(&bundles) {
        let row = extract_feature_row(record, bundle, spec.max_cloud);
        let selected: Vec<f64> = cols
            .iter()
            .enumerate()
            .map(|(k, &c)| {
                row[c].ok_or_else(|| {
                    Error::DegenerateInput(format!(
                        "generated record is missing feature {}",
                        names[k]
                    ))
                })
            })
            .collect::<Result<_>>()?;
        feature_rows.push(selected);
    }

    // empirical standardization so every coefficient acts on a unit scale
    let n = spec.records as f64;
    let p = names.len();
    let centers: Vec<f64> = (0..p)
        .map(|j| feature_rows.iter().map(|r| r[j]).sum::<f64>() / n)
        .collect();
    let scales: Vec<f64> = (0..p)
        .map(|j| {
            let var = feature_rows
                .iter()
                .map(|r| (r[j] - centers[j]) * (r[j] - centers[j]))
                .sum::<f64>()
                / n;
            let sd = var.sqrt();
            if sd > 1e-12 {
                sd
            } else {
                1.0
            }
        })
        .collect();
    let truth = GroundTruth {
        feature_names: names.iter().map(|s| s.to_string()).collect(),
        intercept: spec.intercept,
        coefficients: spec.coefficients.clone(),
        centers,
        scales,
    };

    for (record, row) in records.iter_mut().zip(&feature_rows) {
        let clean = truth.eval(row)?;
        if clean <= 0.0 {
            return Err(Error::DegenerateInput(format!(
                "generating function produced a non-positive yield rate {clean}; \
                 reduce coefficient magnitudes or raise the intercept"
            )));
        }
        record.yield_kg = clean * record.area_ha;
        record.yield_rate = clean + spec.noise_std * normal(&mut rng);
        record.validate()?;
    }

    Ok(SyntheticDataset {
        records,
        bundles,
        truth,
    })
}
