//! Reduced systems: the pure-energy lattice and free-moving particles.

mod particles;
mod spatial;

pub use particles::{
    particle_copy_overwrite, particle_step, ParticleCopyOutcome, ParticleLayout,
    ParticleStepOutcome, ParticleWorld,
};
pub use spatial::SpatialHash;

use rayon::prelude::*;

use crate::scalar::{ordered_sum, Scalar};

/// `field <- min(field + rate, cap)` at every site. Returns the energy added.
pub fn regen_field<S: Scalar>(field: &mut [S], m: usize, rate: f64, cap: f64) -> f64 {
    let rate = S::of(rate);
    let cap = S::of(cap);
    let rows: Vec<f64> = field
        .par_chunks_mut(m)
        .map(|row| {
            let mut added = 0.0;
            for e in row.iter_mut() {
                let next = (*e + rate).min(cap).max(*e);
                added += (next - *e).wide();
                *e = next;
            }
            added
        })
        .collect();
    ordered_sum(&rows)
}

/// Pure-energy lattice: site energy regrows by `regen_rate` up to
/// `regen_cap` every step in place of chemistry.
pub fn pure_energy_regen<S: Scalar>(world: &mut crate::world::World<S>) -> f64 {
    let (m, rate, cap) = (world.layout.m, world.config.regen_rate, world.config.regen_cap);
    regen_field(&mut world.energy, m, rate, cap)
}
