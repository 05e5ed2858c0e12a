//! Time-window derivation, cloud filtering, and tile normalization.

use chrono::{Days, NaiveDate};

use crate::error::{Error, Result};
use crate::indices::Band;

/// Half-open calendar interval `[start, end)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TimeWindow {
    start: NaiveDate,
    end: NaiveDate,
}

impl TimeWindow {
    pub fn new(start: NaiveDate, end: NaiveDate) -> Result<Self> {
        if start >= end {
            return Err(Error::InvalidInput(format!(
                "window start {start} must precede end {end}"
            )));
        }
        Ok(TimeWindow { start, end })
    }

    pub fn start(&self) -> NaiveDate {
        self.start
    }

    pub fn end(&self) -> NaiveDate {
        self.end
    }

    pub fn contains(&self, date: NaiveDate) -> bool {
        date >= self.start && date < self.end
    }

    pub fn days(&self) -> i64 {
        (self.end - self.start).num_days()
    }
}

/// The three aggregation windows derived from a harvest date.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Windows {
    /// `[harvest - 90d, harvest - 30d)`: transplanting through maturity onset.
    pub growth: TimeWindow,
    /// `[harvest - 30d, harvest)`: the ripening period.
    pub maturity: TimeWindow,
    /// `[harvest - 80d, harvest - 30d)`: the 50 days ending at maturity onset,
    /// used for optical acquisitions.
    pub s2: TimeWindow,
}

/// Derive the growth, maturity, and optical collection windows for a harvest
/// date. The growth window is fixed at the wide (90-day) end so that both
/// shorter and longer crop cycles are covered.
pub fn derive_windows(harvest: NaiveDate) -> Windows {
    let back = |days: u64| harvest.checked_sub_days(Days::new(days)).expect("valid date");
    Windows {
        growth: TimeWindow {
            start: back(90),
            end: back(30),
        },
        maturity: TimeWindow {
            start: back(30),
            end: harvest,
        },
        s2: TimeWindow {
            start: back(80),
            end: back(30),
        },
    }
}

/// Row-major H x W grid of pixel values.
#[derive(Debug, Clone, PartialEq)]
pub struct Grid {
    height: usize,
    width: usize,
    data: Vec<f64>,
}

impl Grid {
    pub fn new(height: usize, width: usize, data: Vec<f64>) -> Result<Self> {
        if height == 0 || width == 0 || data.len() != height * width {
            return Err(Error::Shape(format!(
                "grid {height}x{width} requires {} values, got {}",
                height * width,
                data.len()
            )));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("grid contains non-finite values".into()));
        }
        Ok(Grid {
            height,
            width,
            data,
        })
    }

    pub fn constant(height: usize, width: usize, value: f64) -> Result<Self> {
        Grid::new(height, width, vec![value; height * width])
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.data[row * self.width + col]
    }

    pub fn values(&self) -> &[f64] {
        &self.data
    }
}

/// Extract the 3x3 block centered at `(floor(H/2), floor(W/2))`. For even
/// dimensions the block clamps toward the top-left so the crop is always a
/// submatrix of the input.
pub fn center_crop_3x3(grid: &Grid) -> Result<Grid> {
    if grid.height < 3 || grid.width < 3 {
        return Err(Error::Shape(format!(
            "cannot crop 3x3 from {}x{} grid",
            grid.height, grid.width
        )));
    }
    let start = |center: usize, limit: usize| (center.saturating_sub(1)).min(limit - 3);
    let r0 = start(grid.height / 2, grid.height);
    let c0 = start(grid.width / 2, grid.width);
    let mut data = Vec::with_capacity(9);
    for r in r0..r0 + 3 {
        for c in c0..c0 + 3 {
            data.push(grid.get(r, c));
        }
    }
    Grid::new(3, 3, data)
}

/// One optical acquisition: scene-level cloud fraction plus a pixel grid per
/// Sentinel-2 band. Cloud fraction is tile-level scalar metadata, not a
/// per-pixel mask.
#[derive(Debug, Clone)]
pub struct AcquisitionTile {
    pub timestamp: NaiveDate,
    pub cloud_fraction: f64,
    bands: Vec<Grid>,
}

impl AcquisitionTile {
    /// `bands` must hold one grid per [`Band::ALL`] entry, in that order,
    /// each at least 3x3.
    pub fn new(timestamp: NaiveDate, cloud_fraction: f64, bands: Vec<Grid>) -> Result<Self> {
        if !(0.0..=1.0).contains(&cloud_fraction) {
            return Err(Error::InvalidInput(format!(
                "cloud fraction {cloud_fraction} outside [0, 1]"
            )));
        }
        if bands.len() != Band::ALL.len() {
            return Err(Error::Shape(format!(
                "expected {} band grids, got {}",
                Band::ALL.len(),
                bands.len()
            )));
        }
        for g in &bands {
            if g.height() < 3 || g.width() < 3 {
                return Err(Error::Shape("band grids must be at least 3x3".into()));
            }
        }
        Ok(AcquisitionTile {
            timestamp,
            cloud_fraction,
            bands,
        })
    }

    pub fn band(&self, band: Band) -> &Grid {
        &self.bands[band.index()]
    }
}

/// One SAR acquisition: 3x3 grids of linear VV and VH backscatter, all > 0.
#[derive(Debug, Clone)]
pub struct SarAcquisition {
    pub timestamp: NaiveDate,
    pub vv: Grid,
    pub vh: Grid,
}

impl SarAcquisition {
    pub fn new(timestamp: NaiveDate, vv: Grid, vh: Grid) -> Result<Self> {
        for g in [&vv, &vh] {
            if g.height() != 3 || g.width() != 3 {
                return Err(Error::Shape("SAR grids must be 3x3".into()));
            }
            if g.values().iter().any(|v| *v <= 0.0) {
                return Err(Error::InvalidInput(
                    "linear backscatter values must be > 0".into(),
                ));
            }
        }
        Ok(SarAcquisition { timestamp, vv, vh })
    }
}

/// Ordered (timestamp, rate mm/h) rainfall samples.
#[derive(Debug, Clone)]
pub struct RainfallSeries {
    samples: Vec<(NaiveDate, f64)>,
}

impl RainfallSeries {
    pub fn new(samples: Vec<(NaiveDate, f64)>) -> Result<Self> {
        for w in samples.windows(2) {
            if w[1].0 <= w[0].0 {
                return Err(Error::InvalidInput(
                    "rainfall timestamps must be strictly increasing".into(),
                ));
            }
        }
        if samples.iter().any(|(_, r)| !r.is_finite() || *r < 0.0) {
            return Err(Error::InvalidInput("rainfall rates must be >= 0".into()));
        }
        Ok(RainfallSeries { samples })
    }

    pub fn samples(&self) -> &[(NaiveDate, f64)] {
        &self.samples
    }

    pub fn rates_in(&self, window: &TimeWindow) -> Vec<f64> {
        self.samples
            .iter()
            .filter(|(t, _)| window.contains(*t))
            .map(|(_, r)| *r)
            .collect()
    }
}

/// One meteorological sample: temperatures in kelvin, radiation in W/m^2,
/// specific humidity in kg/kg.
#[derive(Debug, Clone, Copy)]
pub struct MeteoSample {
    pub timestamp: NaiveDate,
    pub air_temperature: f64,
    pub land_surface_temperature: f64,
    pub solar_radiation: f64,
    pub specific_humidity: f64,
}

/// Ordered meteorological time series.
#[derive(Debug, Clone)]
pub struct MeteoSeries {
    samples: Vec<MeteoSample>,
}

impl MeteoSeries {
    pub fn new(samples: Vec<MeteoSample>) -> Result<Self> {
        for w in samples.windows(2) {
            if w[1].timestamp <= w[0].timestamp {
                return Err(Error::InvalidInput(
                    "meteo timestamps must be strictly increasing".into(),
                ));
            }
        }
        for s in &samples {
            if s.air_temperature <= 0.0 || s.land_surface_temperature <= 0.0 {
                return Err(Error::InvalidInput("temperatures must be > 0 K".into()));
            }
        }
        Ok(MeteoSeries { samples })
    }

    pub fn samples(&self) -> &[MeteoSample] {
        &self.samples
    }

    pub fn samples_in(&self, window: &TimeWindow) -> Vec<MeteoSample> {
        self.samples
            .iter()
            .copied()
            .filter(|s| window.contains(s.timestamp))
            .collect()
    }
}

/// Keep tiles with `cloud_fraction <= max_cloud` and timestamp inside the
/// window, preserving order. An empty result is valid and signals a
/// data-sparse location.
pub fn filter_acquisitions<'a>(
    tiles: &'a [AcquisitionTile],
    max_cloud: f64,
    window: &TimeWindow,
) -> Vec<&'a AcquisitionTile> {
    tiles
        .iter()
        .filter(|t| t.cloud_fraction <= max_cloud && window.contains(t.timestamp))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn date(y: i32, m: u32, d: u32) -> NaiveDate {
        NaiveDate::from_ymd_opt(y, m, d).unwrap()
    }

    #[test]
    fn windows_for_known_harvest_date() {
        let w = derive_windows(date(2022, 8, 9));
        assert_eq!(w.growth.start(), date(2022, 5, 11));
        assert_eq!(w.growth.end(), date(2022, 7, 10));
        assert_eq!(w.maturity.start(), date(2022, 7, 10));
        assert_eq!(w.maturity.end(), date(2022, 8, 9));
        assert_eq!(w.s2.start(), date(2022, 5, 21));
        assert_eq!(w.s2.end(), date(2022, 7, 10));
    }

    #[test]
    fn window_lengths_hold_for_any_harvest() {
        for offset in 0..400u64 {
            let h = date(2021, 1, 1).checked_add_days(Days::new(offset)).unwrap();
            let w = derive_windows(h);
            assert_eq!(w.growth.days(), 60);
            assert_eq!(w.maturity.days(), 30);
            assert_eq!(w.s2.days(), 50);
        }
    }

    fn tile(day: u32, cloud: f64) -> AcquisitionTile {
        let bands = Band::ALL
            .iter()
            .map(|_| Grid::constant(3, 3, 0.2).unwrap())
            .collect();
        AcquisitionTile::new(date(2022, 6, day), cloud, bands).unwrap()
    }

    #[test]
    fn cloud_filter_keeps_below_threshold() {
        let tiles = vec![tile(1, 0.1), tile(2, 0.7), tile(3, 0.5)];
        let w = TimeWindow::new(date(2022, 5, 1), date(2022, 7, 1)).unwrap();
        let kept = filter_acquisitions(&tiles, 0.6, &w);
        assert_eq!(kept.len(), 2);
        assert_eq!(kept[0].timestamp, date(2022, 6, 1));
        assert_eq!(kept[1].timestamp, date(2022, 6, 3));

        assert_eq!(filter_acquisitions(&tiles, 1.0, &w).len(), 3);

        let disjoint = TimeWindow::new(date(2021, 1, 1), date(2021, 2, 1)).unwrap();
        assert!(filter_acquisitions(&tiles, 1.0, &disjoint).is_empty());
    }

    #[test]
    fn cloud_filter_monotone_in_threshold() {
        let tiles: Vec<_> = (1..=9).map(|d| tile(d, d as f64 / 10.0)).collect();
        let w = TimeWindow::new(date(2022, 5, 1), date(2022, 7, 1)).unwrap();
        let mut prev = 0;
        for t in [0.0, 0.2, 0.4, 0.6, 0.8, 1.0] {
            let n = filter_acquisitions(&tiles, t, &w).len();
            assert!(n >= prev);
            prev = n;
        }
    }

    #[test]
    fn crop_identity_on_3x3() {
        let g = Grid::new(3, 3, (1..=9).map(f64::from).collect()).unwrap();
        assert_eq!(center_crop_3x3(&g).unwrap(), g);
    }

    #[test]
    fn crop_center_of_5x5() {
        let g = Grid::new(5, 5, (1..=25).map(f64::from).collect()).unwrap();
        let c = center_crop_3x3(&g).unwrap();
        assert_eq!(
            c.values(),
            &[7.0, 8.0, 9.0, 12.0, 13.0, 14.0, 17.0, 18.0, 19.0]
        );
    }

    #[test]
    fn crop_clamps_even_dimension() {
        // 4x3: center row floor(4/2)=2, rows 1..=3 after clamping.
        let g = Grid::new(4, 3, (1..=12).map(f64::from).collect()).unwrap();
        let c = center_crop_3x3(&g).unwrap();
        assert_eq!(
            c.values(),
            &[4.0, 5.0, 6.0, 7.0, 8.0, 9.0, 10.0, 11.0, 12.0]
        );
    }

    #[test]
    fn crop_rejects_small_grids() {
        let g = Grid::new(2, 5, vec![0.0; 10]).unwrap();
        assert!(center_crop_3x3(&g).is_err());
    }

    #[test]
    fn series_validation() {
        let d = date(2022, 1, 1);
        assert!(RainfallSeries::new(vec![(d, 1.0), (d, 2.0)]).is_err());
        assert!(RainfallSeries::new(vec![(d, -1.0)]).is_err());
        assert!(RainfallSeries::new(vec![(d, 0.0), (date(2022, 1, 2), 3.0)]).is_ok());
    }
}
