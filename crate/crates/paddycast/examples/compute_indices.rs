//! Compute every optical index plus the SAR ratios for one pixel.

use paddycast::indices::{
    compute_optical_index, compute_rvi, compute_vv_vh_ratio, BandReflectances, IndexId,
    SarBackscatter,
};

fn main() -> paddycast::Result<()> {
    // typical mid-season paddy reflectances
    let bands = BandReflectances::new(0.04, 0.07, 0.05, 0.12, 0.25, 0.32, 0.38, 0.20, 0.12)?;

    println!("{:<8} value", "index");
    for id in IndexId::ALL {
        match compute_optical_index(id, &bands) {
            Some(v) => println!("{:<8} {v:.6}", id.name()),
            None => println!("{:<8} undefined", id.name()),
        }
    }

    let sar = SarBackscatter::new(0.05, 0.012)?;
    println!("{:<8} {:.6}", "RVI", compute_rvi(&sar));
    println!("{:<8} {:.6}", "VV/VH", compute_vv_vh_ratio(&sar));
    Ok(())
}
