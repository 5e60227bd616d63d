//! Uniform-grid neighbour search on a periodic square domain.

use crate::scalar::Scalar;

/// Particles bucketed into square bins no smaller than the search radius,
/// so a radius query only has to scan the 3 x 3 surrounding bins.
/// Bins are stored as a counting sort: `order[start[b]..start[b + 1]]` are
/// the particles in bin `b`, in ascending index order.
#[derive(Clone, Debug)]
pub struct SpatialHash {
    side: f64,
    radius: f64,
    bins: usize,
    bin_size: f64,
    start: Vec<usize>,
    order: Vec<usize>,
}

impl SpatialHash {
    pub fn build<S: Scalar>(xs: &[S], ys: &[S], side: f64, radius: f64) -> Self {
        let bins = ((side / radius).floor() as usize).max(1);
        let bin_size = side / bins as f64;
        let bin_of = |v: f64| ((v / bin_size) as usize).min(bins - 1);
        let keys: Vec<usize> = xs
            .iter()
            .zip(ys)
            .map(|(x, y)| bin_of(y.wide()) * bins + bin_of(x.wide()))
            .collect();
        let mut start = vec![0usize; bins * bins + 1];
        for &k in &keys {
            start[k + 1] += 1;
        }
        for b in 0..bins * bins {
            start[b + 1] += start[b];
        }
        let mut fill = start.clone();
        let mut order = vec![0usize; keys.len()];
        for (i, &k) in keys.iter().enumerate() {
            order[fill[k]] = i;
            fill[k] += 1;
        }
        Self {
            side,
            radius,
            bins,
            bin_size,
            start,
            order,
        }
    }

    /// Squared periodic distance.
    #[inline]
    pub fn dist2(&self, ax: f64, ay: f64, bx: f64, by: f64) -> f64 {
        let wrap = |d: f64| {
            let d = d.abs();
            d.min(self.side - d)
        };
        let (dx, dy) = (wrap(ax - bx), wrap(ay - by));
        dx * dx + dy * dy
    }

    /// Indices of particles within the radius of particle `i` (excluding
    /// `i`), ascending.
    pub fn neighbors<S: Scalar>(&self, i: usize, xs: &[S], ys: &[S], out: &mut Vec<usize>) {
        out.clear();
        let (x, y) = (xs[i].wide(), ys[i].wide());
        let r2 = self.radius * self.radius;
        let mut consider = |j: usize| {
            if j != i && self.dist2(x, y, xs[j].wide(), ys[j].wide()) <= r2 {
                out.push(j);
            }
        };
        if self.bins < 3 {
            (0..xs.len()).for_each(&mut consider);
            return;
        }
        let nb = self.bins as isize;
        let by = ((y / self.bin_size) as isize).min(nb - 1);
        let bx = ((x / self.bin_size) as isize).min(nb - 1);
        for dy in -1..=1 {
            for dx in -1..=1 {
                let b = ((by + dy).rem_euclid(nb) * nb + (bx + dx).rem_euclid(nb)) as usize;
                for &j in &self.order[self.start[b]..self.start[b + 1]] {
                    consider(j);
                }
            }
        }
        out.sort_unstable();
    }
}
