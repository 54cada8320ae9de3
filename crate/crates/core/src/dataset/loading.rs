//! Channel-loading generators: the fixed family, uniform random loads and
//! three-band "goalpost" loads.

use rand::seq::index::sample;
use rand::Rng;

use crate::domain::{ChannelMask, N_CHANNELS};

/// Goalpost bands as zero-based half-open ranges: channels 1-32, 33-64, 65-95.
pub const GOALPOST_BANDS: [(usize, usize); 3] = [(0, 32), (32, 64), (64, 95)];

/// Full, lower half (1-47), upper half (48-95), even, odd, every single
/// channel and every adjacent pair: 194 masks.
pub fn gen_fixed_configs() -> Vec<ChannelMask> {
    let mut out = Vec::with_capacity(194);
    out.push(ChannelMask::full());
    out.push(ChannelMask::from_indices(0..47));
    out.push(ChannelMask::from_indices(47..N_CHANNELS));
    // Channel numbers are 1-based, so "even" channels sit at odd indices.
    out.push(ChannelMask::from_indices((1..N_CHANNELS).step_by(2)));
    out.push(ChannelMask::from_indices((0..N_CHANNELS).step_by(2)));
    out.extend((0..N_CHANNELS).map(|i| ChannelMask::from_indices([i])));
    out.extend((0..N_CHANNELS - 1).map(|i| ChannelMask::from_indices([i, i + 1])));
    out
}

/// `n` masks whose channel count is uniform on 1..=95, channels uniform
/// without replacement.
pub fn gen_random_configs<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Vec<ChannelMask> {
    (0..n)
        .map(|_| {
            let k = rng.random_range(1..=N_CHANNELS);
            ChannelMask::from_indices(sample(rng, N_CHANNELS, k).into_iter())
        })
        .collect()
}

/// Activates `counts[b]` contiguous channels in band `b`, starting from the
/// band's lower edge, or its upper edge when `from_upper[b]` is set.
pub fn goalpost_mask(counts: [usize; 3], from_upper: [bool; 3]) -> ChannelMask {
    let mut mask = ChannelMask::empty();
    for (b, &(lo, hi)) in GOALPOST_BANDS.iter().enumerate() {
        let k = counts[b].min(hi - lo);
        let range = if from_upper[b] { hi - k..hi } else { lo..lo + k };
        for i in range {
            mask.set(i, true);
        }
    }
    mask
}

/// `n` goalpost masks, half balanced (same count in each band) and half
/// unbalanced (at least two band counts differ) on average.
pub fn gen_goalpost_configs<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Vec<ChannelMask> {
    let smallest = GOALPOST_BANDS.iter().map(|(lo, hi)| hi - lo).min().unwrap_or(0);
    (0..n)
        .map(|_| {
            let balanced: bool = rng.random();
            let counts = if balanced {
                let k = rng.random_range(1..=smallest);
                [k, k, k]
            } else {
                loop {
                    let c = [
                        rng.random_range(0..=smallest),
                        rng.random_range(0..=smallest),
                        rng.random_range(0..=smallest),
                    ];
                    let distinct = c[0] != c[1] || c[1] != c[2];
                    if distinct && c.iter().any(|k| *k > 0) {
                        break c;
                    }
                }
            };
            let from_upper = [rng.random(), rng.random(), rng.random()];
            goalpost_mask(counts, from_upper)
        })
        .collect()
}
