//! Derive acquisition windows from a harvest date and filter cloudy tiles.

use chrono::NaiveDate;
use paddycast::acquisition::{derive_windows, filter_acquisitions, AcquisitionTile, Grid};
use paddycast::indices::Band;

fn main() -> paddycast::Result<()> {
    let harvest = NaiveDate::from_ymd_opt(2022, 6, 15).unwrap();
    let w = derive_windows(harvest);
    println!("growth:   [{}, {})", w.growth.start(), w.growth.end());
    println!("maturity: [{}, {})", w.maturity.start(), w.maturity.end());
    println!("optical:  [{}, {})", w.s2.start(), w.s2.end());

    // six tiles, every 12 days, with varying cloud cover
    let mut tiles = Vec::new();
    for (i, cloud) in [0.1, 0.9, 0.3, 0.7, 0.05, 0.5].into_iter().enumerate() {
        let date = harvest
            .checked_sub_days(chrono::Days::new(78 - 12 * i as u64))
            .unwrap();
        let grids = Band::ALL
            .iter()
            .map(|_| Grid::constant(3, 3, 0.2))
            .collect::<Result<_, _>>()?;
        tiles.push(AcquisitionTile::new(date, cloud, grids)?);
    }

    let usable = filter_acquisitions(&tiles, 0.6, &w.s2);
    println!(
        "{} of {} tiles usable at max cloud 0.6:",
        usable.len(),
        tiles.len()
    );
    for t in usable {
        println!("  {} (cloud {:.2})", t.timestamp, t.cloud_fraction);
    }
    Ok(())
}
