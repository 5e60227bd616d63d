//! Four information grids, one travelling in each lattice direction.
//!
//! Each layer holds an `n_s`-vector per cell. Every step the layers move one
//! cell in their direction (toroidally), then cells with enough energy
//! overwrite their own location in all four layers with
//! `[h[..n_sig_h], energy, chem, enz]`. A cell's network input is the
//! concatenation of the four layer vectors at its location.

use rayon::prelude::*;

use crate::scalar::Scalar;
use crate::world::{Direction, World};

#[derive(Clone, Debug, PartialEq)]
pub struct SignalState<S> {
    pub m: usize,
    pub n_s: usize,
    /// Indexed by `Direction::index()`: right, up, left, down.
    pub layers: [Vec<S>; 4],
}

impl<S: Scalar> SignalState<S> {
    pub fn new(m: usize, n_s: usize) -> Self {
        let layer = || vec![S::zero(); m * m * n_s];
        Self {
            m,
            n_s,
            layers: [layer(), layer(), layer(), layer()],
        }
    }

    pub fn layer(&self, dir: Direction) -> &[S] {
        &self.layers[dir.index()]
    }

    pub fn at(&self, dir: Direction, cell: usize) -> &[S] {
        &self.layers[dir.index()][cell * self.n_s..(cell + 1) * self.n_s]
    }

    /// Moves every layer one cell in its direction.
    pub fn shift(&mut self) {
        let (m, n_s) = (self.m, self.n_s);
        let row = m * n_s;
        let [right, up, left, down] = &mut self.layers;
        right
            .par_chunks_mut(row)
            .for_each(|r| r.rotate_right(n_s));
        left.par_chunks_mut(row).for_each(|r| r.rotate_left(n_s));
        // up: row i receives row i + 1
        up.rotate_left(row);
        down.rotate_right(row);
    }

    /// Input vector of `cell`: right, up, left, down layer vectors in order.
    pub fn read_input(&self, cell: usize, x: &mut [S]) {
        let n_s = self.n_s;
        debug_assert_eq!(x.len(), 4 * n_s);
        for (d, chunk) in x.chunks_mut(n_s).enumerate() {
            chunk.copy_from_slice(&self.layers[d][cell * n_s..(cell + 1) * n_s]);
        }
    }

    pub fn all_finite(&self) -> bool {
        self.layers.iter().all(|l| l.iter().all(|v| v.is_finite()))
    }
}

/// Writes the broadcast payload of every cell whose energy exceeds
/// `theta_sig` into all four layers. Other locations keep the content that
/// was shifted in.
pub fn write_signals<S: Scalar>(world: &mut World<S>) {
    let l = &world.layout;
    let (n_s, n_h, n_c, n_sig) = (l.n_s, l.n_h, l.n_c, l.n_sig_h);
    let threshold = S::of(world.config.theta_sig);
    let (h, energy, chem, enz) = (&world.h, &world.energy, &world.chem, &world.enz);
    let fill = |cell: usize, out: &mut [S]| {
        out[..n_sig].copy_from_slice(&h[cell * n_h..cell * n_h + n_sig]);
        out[n_sig] = energy[cell];
        out[n_sig + 1..n_sig + 1 + n_c].copy_from_slice(&chem[cell * n_c..(cell + 1) * n_c]);
        out[n_sig + 1 + n_c..].copy_from_slice(&enz[cell * n_c..(cell + 1) * n_c]);
    };
    for layer in world.signals.layers.iter_mut() {
        layer
            .par_chunks_mut(n_s)
            .enumerate()
            .with_min_len(256)
            .for_each(|(cell, out)| {
                if energy[cell] > threshold {
                    fill(cell, out);
                }
            });
    }
}
