//! Equal-probability intensity quantization.

use ndarray::Array2;

use crate::error::{Error, Result};
use crate::image::GrayImage;

/// Result of equal-probability quantization: per-pixel level indices in
/// `[0, levels-1]` plus a degeneracy flag for single-level images.
#[derive(Debug, Clone)]
pub struct QuantizedImage {
    pub levels: Array2<u8>,
    pub level_count: u8,
    pub degenerate: bool,
}

/// Quantizes a grayscale image so each level holds as close to `N/K` pixels
/// as the tie structure permits.
///
/// Cut positions are the `k*N/K` ranks of the sorted pixel values; a cut that
/// falls inside a run of equal intensities snaps to the nearest run boundary
/// (downward on ties) so equal intensities always share a level. Coincident
/// and vacuous cuts collapse.
pub fn equal_probability_quantize(img: &GrayImage, k: u8) -> Result<QuantizedImage> {
    if k < 2 {
        return Err(Error::InvalidInput(format!("need at least 2 levels, got {k}")));
    }
    let n = (img.rows() * img.cols()) as u64;
    let mut hist = [0u64; 256];
    for &v in img.pixels.iter() {
        hist[v as usize] += 1;
    }
    // run_start[v] = number of pixels with value < v
    let mut run_start = [0u64; 256];
    let mut acc = 0u64;
    for v in 0..256 {
        run_start[v] = acc;
        acc += hist[v];
    }
    // snap each cut to the nearest boundary of the run containing it
    let snap = |pos: u64| -> u64 {
        // the run containing rank `pos` belongs to the largest value whose
        // run start is at or below it
        let mut v = 255usize;
        while run_start[v] > pos || hist[v] == 0 {
            v -= 1;
        }
        let a = run_start[v];
        let b = a + hist[v];
        if pos - a <= b - pos {
            a
        } else {
            b
        }
    };
    let mut cuts: Vec<u64> = (1..k as u64)
        .map(|j| snap(j * n / k as u64))
        .filter(|&c| c > 0 && c < n)
        .collect();
    cuts.sort_unstable();
    cuts.dedup();

    // level of an intensity = number of cuts at or below its run start
    let mut level_of = [0u8; 256];
    for v in 0..256 {
        let a = run_start[v];
        level_of[v] = cuts.iter().take_while(|&&c| c <= a).count() as u8;
    }
    let levels = img.pixels.mapv(|v| level_of[v as usize]);
    let occupied = {
        let mut seen = [false; 256];
        for &l in levels.iter() {
            seen[l as usize] = true;
        }
        seen.iter().filter(|&&s| s).count()
    };
    Ok(QuantizedImage {
        levels,
        level_count: k,
        degenerate: occupied < 2,
    })
}
