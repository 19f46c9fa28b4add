//! Pad, feather, threshold and composite a small mask, printing ASCII art.

use perturbex::maskops;
use perturbex::types::{BinaryMask, RasterImage};

fn show(label: &str, w: u32, h: u32, cell: impl Fn(u32, u32) -> char) {
    println!("{label}:");
    for y in 0..h {
        println!("  {}", (0..w).map(|x| cell(x, y)).collect::<String>());
    }
}

fn main() -> perturbex::Result<()> {
    let (w, h) = (16, 9);
    let raw = BinaryMask::from_fn(w, h, |x, y| (6..10).contains(&x) && (3..6).contains(&y));
    let padded = maskops::pad(&raw, 2);
    let soft = maskops::feather(&padded, 1.0);
    let shades = [' ', '.', ':', '-', '=', '+', '*', '#', '%', '@'];

    show("raw", w, h, |x, y| if raw.get(x, y) { '#' } else { '.' });
    show("pad 2", w, h, |x, y| if padded.get(x, y) { '#' } else { '.' });
    show("feather 1.0", w, h, |x, y| shades[(soft.get(x, y) * 9.0).round() as usize]);
    let core = maskops::threshold(&soft, 1.0)?;
    show("alpha == 1", w, h, |x, y| if core.get(x, y) { '#' } else { '.' });

    let fg = RasterImage::filled(w, h, [200, 40, 40])?;
    let bg = RasterImage::filled(w, h, [40, 90, 200])?;
    let out = maskops::composite(&fg, &soft, &bg)?;
    println!("row 4 red channel: {:?}", (0..w).map(|x| out.pixel(x, 4)[0]).collect::<Vec<_>>());
    Ok(())
}
