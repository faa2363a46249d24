use crate::so3::Vec3;

pub const DISTOGRAM_BINS: usize = 22;
/// Lower edge of the first bin, Å.
pub const DISTOGRAM_MIN: f64 = 1e-5;
/// Lower edge of the open-ended last bin, Å.
pub const DISTOGRAM_MAX: f64 = 20.0;

/// Lower bin edges, linearly spaced from [`DISTOGRAM_MIN`] to [`DISTOGRAM_MAX`].
pub fn distogram_lower_bounds() -> [f64; DISTOGRAM_BINS] {
    let width = (DISTOGRAM_MAX - DISTOGRAM_MIN) / (DISTOGRAM_BINS - 1) as f64;
    let mut edges = [0.0; DISTOGRAM_BINS];
    for (k, e) in edges.iter_mut().enumerate() {
        *e = DISTOGRAM_MIN + k as f64 * width;
    }
    edges[DISTOGRAM_BINS - 1] = DISTOGRAM_MAX;
    edges
}

/// Bin index of a distance; values below the first edge fall in bin 0 and
/// everything from [`DISTOGRAM_MAX`] upward in the last bin.
pub fn distogram_bin(d: f64) -> usize {
    distogram_lower_bounds()
        .partition_point(|&lower| lower <= d)
        .saturating_sub(1)
}

/// Pairwise CA–CA distance bins.
pub fn distogram(positions: &[Vec3]) -> Vec<Vec<u8>> {
    positions
        .iter()
        .map(|a| {
            positions
                .iter()
                .map(|b| distogram_bin((a - b).norm()) as u8)
                .collect()
        })
        .collect()
}
