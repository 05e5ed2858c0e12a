//! Optical spectral indices and SAR-derived quantities.
//!
//! All functions here are pure. Optical indices return `None` (a missing
//! marker) when a denominator is exactly zero or a radicand is negative,
//! so that temporal statistics downstream can skip the sample instead of
//! aborting on cloud-edge pixels.

use crate::error::{Error, Result};

/// Sentinel-2 band identifiers used for per-band statistics.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Band {
    B02,
    B03,
    B04,
    B05,
    B06,
    B07,
    B08,
    B11,
    B12,
}

impl Band {
    pub const ALL: [Band; 9] = [
        Band::B02,
        Band::B03,
        Band::B04,
        Band::B05,
        Band::B06,
        Band::B07,
        Band::B08,
        Band::B11,
        Band::B12,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Band::B02 => "B02",
            Band::B03 => "B03",
            Band::B04 => "B04",
            Band::B05 => "B05",
            Band::B06 => "B06",
            Band::B07 => "B07",
            Band::B08 => "B08",
            Band::B11 => "B11",
            Band::B12 => "B12",
        }
    }

    pub fn index(self) -> usize {
        Band::ALL.iter().position(|b| *b == self).unwrap()
    }

    pub fn parse(s: &str) -> Option<Band> {
        Band::ALL.iter().copied().find(|b| b.name() == s)
    }
}

/// Surface reflectances for one pixel, unitless, each finite and >= 0.
/// Values nominally lie in [0, 1.2]; sensor overshoot above 1 is admitted.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BandReflectances {
    pub blue: f64,
    pub green: f64,
    pub red: f64,
    pub red_edge1: f64,
    pub red_edge2: f64,
    pub red_edge3: f64,
    pub nir: f64,
    pub swir1: f64,
    pub swir2: f64,
}

impl BandReflectances {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        blue: f64,
        green: f64,
        red: f64,
        red_edge1: f64,
        red_edge2: f64,
        red_edge3: f64,
        nir: f64,
        swir1: f64,
        swir2: f64,
    ) -> Result<Self> {
        let r = BandReflectances {
            blue,
            green,
            red,
            red_edge1,
            red_edge2,
            red_edge3,
            nir,
            swir1,
            swir2,
        };
        for (name, v) in r.iter_named() {
            if !v.is_finite() || v < 0.0 {
                return Err(Error::InvalidInput(format!(
                    "reflectance {name} must be finite and >= 0, got {v}"
                )));
            }
        }
        Ok(r)
    }

    /// Reflectance for a Sentinel-2 band id.
    pub fn band(&self, band: Band) -> f64 {
        match band {
            Band::B02 => self.blue,
            Band::B03 => self.green,
            Band::B04 => self.red,
            Band::B05 => self.red_edge1,
            Band::B06 => self.red_edge2,
            Band::B07 => self.red_edge3,
            Band::B08 => self.nir,
            Band::B11 => self.swir1,
            Band::B12 => self.swir2,
        }
    }

    fn iter_named(&self) -> [(&'static str, f64); 9] {
        [
            ("blue", self.blue),
            ("green", self.green),
            ("red", self.red),
            ("red_edge1", self.red_edge1),
            ("red_edge2", self.red_edge2),
            ("red_edge3", self.red_edge3),
            ("nir", self.nir),
            ("swir1", self.swir1),
            ("swir2", self.swir2),
        ]
    }
}

/// Linear backscatter power for one SAR pixel; both channels finite and > 0.
/// Ratios and the radar vegetation index are computed in the linear domain,
/// not in decibels.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SarBackscatter {
    pub vv: f64,
    pub vh: f64,
}

impl SarBackscatter {
    pub fn new(vv: f64, vh: f64) -> Result<Self> {
        if !vv.is_finite() || !vh.is_finite() {
            return Err(Error::InvalidInput(format!(
                "backscatter must be finite, got vv={vv} vh={vh}"
            )));
        }
        if vv <= 0.0 || vh <= 0.0 {
            return Err(Error::DegenerateInput(format!(
                "linear backscatter must be > 0, got vv={vv} vh={vh}"
            )));
        }
        Ok(SarBackscatter { vv, vh })
    }
}

/// The twenty optical index definitions computed from [`BandReflectances`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum IndexId {
    Ndvi,
    Tvi,
    Sr,
    Evi,
    Evi2,
    Savi,
    Rgvi,
    Dvi,
    Msr,
    Nirv,
    Kndvi,
    NdviRe,
    Ndre1,
    Ndre2,
    Ndwi,
    Bsi,
    Lswi16,
    Lswi22,
    Cci,
    Gcc,
}

impl IndexId {
    pub const ALL: [IndexId; 20] = [
        IndexId::Ndvi,
        IndexId::Tvi,
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
        IndexId::Ndwi,
        IndexId::Bsi,
        IndexId::Lswi16,
        IndexId::Lswi22,
        IndexId::Cci,
        IndexId::Gcc,
    ];

    pub fn name(self) -> &'static str {
        match self {
            IndexId::Ndvi => "NDVI",
            IndexId::Tvi => "TVI",
            IndexId::Sr => "SR",
            IndexId::Evi => "EVI",
            IndexId::Evi2 => "EVI2",
            IndexId::Savi => "SAVI",
            IndexId::Rgvi => "RGVI",
            IndexId::Dvi => "DVI",
            IndexId::Msr => "MSR",
            IndexId::Nirv => "NIRv",
            IndexId::Kndvi => "kNDVI",
            IndexId::NdviRe => "NDVIre",
            IndexId::Ndre1 => "NDRE1",
            IndexId::Ndre2 => "NDRE2",
            IndexId::Ndwi => "NDWI",
            IndexId::Bsi => "BSI",
            IndexId::Lswi16 => "LSWI16",
            IndexId::Lswi22 => "LSWI22",
            IndexId::Cci => "CCI",
            IndexId::Gcc => "GCC",
        }
    }
}

/// Normalized difference (a - b) / (a + b); `None` when a + b == 0.
pub fn normalized_difference(a: f64, b: f64) -> Option<f64> {
    let denom = a + b;
    if denom == 0.0 {
        None
    } else {
        Some((a - b) / denom)
    }
}

fn ratio(num: f64, denom: f64) -> Option<f64> {
    if denom == 0.0 {
        None
    } else {
        Some(num / denom)
    }
}

/// Compute one optical index for a pixel. `None` marks a degenerate pixel
/// (zero denominator or negative TVI radicand), not an error.
pub fn compute_optical_index(id: IndexId, bands: &BandReflectances) -> Option<f64> {
    let b = bands;
    match id {
        IndexId::Ndvi => normalized_difference(b.nir, b.red),
        IndexId::Tvi => {
            let radicand = compute_optical_index(IndexId::Ndvi, b)? + 0.5;
            if radicand < 0.0 {
                None
            } else {
                Some(radicand.sqrt())
            }
        }
        IndexId::Sr => ratio(b.nir, b.red),
        IndexId::Evi => ratio(
            2.5 * (b.nir - b.red),
            b.nir + 6.0 * b.red - 7.5 * b.blue + 1.0,
        ),
        IndexId::Evi2 => ratio(2.5 * (b.nir - b.red), b.nir + 2.4 * b.red + 1.0),
        IndexId::Savi => ratio(1.5 * (b.nir - b.red), b.nir + b.red + 0.5),
        IndexId::Rgvi => ratio(b.blue + b.red, b.nir + b.swir1 + b.swir2).map(|r| 1.0 - r),
        IndexId::Dvi => Some(b.nir - b.red),
        IndexId::Msr => {
            let sr = compute_optical_index(IndexId::Sr, b)?;
            Some((sr - 1.0) / (sr + 1.0).sqrt())
        }
        IndexId::Nirv => compute_optical_index(IndexId::Ndvi, b).map(|ndvi| ndvi * b.nir),
        IndexId::Kndvi => compute_optical_index(IndexId::Ndvi, b).map(|ndvi| (ndvi * ndvi).tanh()),
        IndexId::NdviRe => normalized_difference(b.nir, b.red_edge1),
        IndexId::Ndre1 => normalized_difference(b.red_edge2, b.red_edge1),
        IndexId::Ndre2 => normalized_difference(b.red_edge3, b.red_edge1),
        IndexId::Ndwi => normalized_difference(b.green, b.nir),
        IndexId::Bsi => normalized_difference(b.red + b.swir1, b.nir + b.blue),
        IndexId::Lswi16 => normalized_difference(b.nir, b.swir1),
        IndexId::Lswi22 => normalized_difference(b.nir, b.swir2),
        IndexId::Cci => normalized_difference(b.green, b.red),
        IndexId::Gcc => ratio(b.green, b.red + b.green + b.blue),
    }
}

/// Radar vegetation index VV / (VV + VH), in (0, 1) for valid backscatter.
pub fn compute_rvi(sar: &SarBackscatter) -> f64 {
    sar.vv / (sar.vv + sar.vh)
}

/// Co- over cross-polarization ratio VV / VH.
pub fn compute_vv_vh_ratio(sar: &SarBackscatter) -> f64 {
    sar.vv / sar.vh
}

#[cfg(test)]
mod tests {
    use super::*;

    fn bands(nir: f64, red: f64) -> BandReflectances {
        BandReflectances::new(0.05, 0.08, red, 0.1, 0.2, 0.25, nir, 0.15, 0.1).unwrap()
    }

    #[test]
    fn ndvi_hand_values() {
        let v = compute_optical_index(IndexId::Ndvi, &bands(0.5, 0.1)).unwrap();
        assert!((v - 0.666_667).abs() < 1e-6);
        let v = compute_optical_index(IndexId::Ndvi, &bands(0.3, 0.3)).unwrap();
        assert_eq!(v, 0.0);
    }

    #[test]
    fn kndvi_is_tanh_of_ndvi_squared() {
        let v = compute_optical_index(IndexId::Kndvi, &bands(0.5, 0.1)).unwrap();
        // tanh((2/3)^2) = tanh(0.444444)
        assert!((v - 0.417_323).abs() < 1e-5);
        assert!((v - (4.0f64 / 9.0).tanh()).abs() < 1e-12);
    }

    #[test]
    fn sr_zero_denominator_is_missing() {
        assert_eq!(compute_optical_index(IndexId::Sr, &bands(0.4, 0.0)), None);
        assert_eq!(compute_optical_index(IndexId::Msr, &bands(0.4, 0.0)), None);
    }

    #[test]
    fn tvi_negative_radicand_is_missing() {
        // NDVI = (0.1 - 0.9)/(0.1 + 0.9) = -0.8 < -0.5
        assert_eq!(compute_optical_index(IndexId::Tvi, &bands(0.1, 0.9)), None);
    }

    #[test]
    fn rvi_hand_values() {
        let s = SarBackscatter::new(1.0, 1.0).unwrap();
        assert_eq!(compute_rvi(&s), 0.5);
        let s = SarBackscatter::new(0.06, 0.02).unwrap();
        assert!((compute_rvi(&s) - 0.75).abs() < 1e-12);
        let s = SarBackscatter::new(0.02, 0.06).unwrap();
        assert!((compute_rvi(&s) - 0.25).abs() < 1e-12);
    }

    #[test]
    fn vv_vh_ratio_hand_values() {
        let s = SarBackscatter::new(0.05, 0.05).unwrap();
        assert_eq!(compute_vv_vh_ratio(&s), 1.0);
        let s = SarBackscatter::new(0.06, 0.02).unwrap();
        assert!((compute_vv_vh_ratio(&s) - 3.0).abs() < 1e-12);
        let s = SarBackscatter::new(0.01, 0.04).unwrap();
        assert!((compute_vv_vh_ratio(&s) - 0.25).abs() < 1e-12);
    }

    #[test]
    fn rvi_and_complement_sum_to_one() {
        let s = SarBackscatter::new(0.037, 0.011).unwrap();
        let rvi = compute_rvi(&s);
        assert!(rvi > 0.0 && rvi < 1.0);
        assert!((rvi + s.vh / (s.vv + s.vh) - 1.0).abs() < 1e-15);
    }

    #[test]
    fn invalid_inputs_rejected() {
        assert!(BandReflectances::new(-0.1, 0.1, 0.1, 0.1, 0.1, 0.1, 0.1, 0.1, 0.1).is_err());
        assert!(BandReflectances::new(f64::NAN, 0.1, 0.1, 0.1, 0.1, 0.1, 0.1, 0.1, 0.1).is_err());
        assert!(SarBackscatter::new(0.0, 0.1).is_err());
        assert!(SarBackscatter::new(0.1, -0.2).is_err());
    }

    #[test]
    fn dvi_sign_follows_nir_minus_red() {
        assert!(compute_optical_index(IndexId::Dvi, &bands(0.5, 0.1)).unwrap() > 0.0);
        assert!(compute_optical_index(IndexId::Dvi, &bands(0.1, 0.5)).unwrap() < 0.0);
    }

    #[test]
    fn gcc_in_unit_interval() {
        let b = bands(0.5, 0.1);
        let gcc = compute_optical_index(IndexId::Gcc, &b).unwrap();
        assert!((0.0..=1.0).contains(&gcc));
    }
}
