//! Stochastic phantom generators with channel-separable ground truth.

pub mod cobalt;
pub mod wonost;

pub use cobalt::{
    ablate_spines, generate_cobalt, lumpy_background, shuffle_background, CobaltConfig,
    CobaltMasks, CobaltRealization,
};
pub use wonost::{
    detect_blue_cell_centers, generate_wonost, perturb_blue, perturb_green, perturb_red,
    worley_f1, PerturbReport, SeedSet, WonostConfig,
};

/// Derives an independent 64-bit stream seed from a master seed and a stream
/// tag (splitmix64 finalizer).
pub fn derive_seed(master: u64, tag: u64) -> u64 {
    let mut z = master
        .wrapping_add(0x9e3779b97f4a7c15u64.wrapping_mul(tag.wrapping_add(1)));
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58476d1ce4e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d049bb133111eb);
    z ^ (z >> 31)
}
