//! Exact squared Euclidean distance transform.
//!
//! Separable lower-envelope-of-parabolas formulation (Meijster et al.) in
//! integer arithmetic: a column pass computes vertical distances to the nearest
//! seed, then each row takes the lower envelope of the parabolas
//! `(x - i)^2 + g(i)^2`. All intermediate values are exact.

use super::{Mask, Raster};
use crate::error::{Error, Result};

/// What to do when the seed set is empty.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EmptySeeds {
    /// Return [`Error::EmptySeeds`].
    Reject,
    /// Fill with `u64::MAX` (distance to the empty set is infinite).
    Infinite,
}

/// Squared distance from every pixel to the nearest set pixel of `seeds`.
pub fn squared_edt(seeds: &Mask, on_empty: EmptySeeds) -> Result<Raster<u64>> {
    let (h, w) = (seeds.height(), seeds.width());
    if seeds.count_set() == 0 {
        return match on_empty {
            EmptySeeds::Reject => Err(Error::EmptySeeds),
            EmptySeeds::Infinite => Raster::filled(h, w, u64::MAX),
        };
    }

    // Larger than any in-raster distance; its square dominates every real candidate.
    let inf = (h + w) as i64;

    let mut g = vec![inf; h * w];
    for x in 0..w {
        if seeds.is_set(0, x) {
            g[x] = 0;
        }
        for y in 1..h {
            g[y * w + x] = if seeds.is_set(y, x) {
                0
            } else {
                (g[(y - 1) * w + x] + 1).min(inf)
            };
        }
        for y in (0..h.saturating_sub(1)).rev() {
            let below = g[(y + 1) * w + x] + 1;
            if below < g[y * w + x] {
                g[y * w + x] = below;
            }
        }
    }

    let mut out = vec![0u64; h * w];
    let mut s = vec![0usize; w];
    let mut t = vec![0i64; w];
    for y in 0..h {
        let row = &g[y * w..(y + 1) * w];
        let f = |x: i64, i: usize| -> i64 {
            let d = x - i as i64;
            d * d + row[i] * row[i]
        };
        let sep = |i: usize, u: usize| -> i64 {
            let (ii, uu) = (i as i64, u as i64);
            (uu * uu - ii * ii + row[u] * row[u] - row[i] * row[i]).div_euclid(2 * (uu - ii))
        };

        let mut q: isize = 0;
        s[0] = 0;
        t[0] = 0;
        for u in 1..w {
            while q >= 0 && f(t[q as usize], s[q as usize]) > f(t[q as usize], u) {
                q -= 1;
            }
            if q < 0 {
                q = 0;
                s[0] = u;
            } else {
                let boundary = 1 + sep(s[q as usize], u);
                if boundary < w as i64 {
                    q += 1;
                    s[q as usize] = u;
                    t[q as usize] = boundary;
                }
            }
        }
        for u in (0..w).rev() {
            out[y * w + u] = f(u as i64, s[q as usize]) as u64;
            if u as i64 == t[q as usize] {
                q -= 1;
            }
        }
    }
    Raster::new(h, w, out)
}
