//! Energy and chemical transport, metabolism, and mortality.

use rayon::prelude::*;

use crate::scalar::{ordered_sum, Scalar};
use crate::world::{Direction, World};

/// Quantity moved by a flow pass.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Quantity {
    Energy,
    /// Zero-based chemical species.
    Chem(usize),
}

impl Quantity {
    /// Index of the quantity's four flow actions in `Layout::flow`.
    pub fn flow_index(self) -> usize {
        match self {
            Quantity::Energy => 0,
            Quantity::Chem(k) => 1 + k,
        }
    }
}

/// Sets enzyme levels from this step's production actions.
///
/// Levels are replaced, not accumulated; a production vector summing above
/// one is rescaled to sum to exactly one. The producer pays
/// `lambda_enz * sum(enz)`, never dropping below `theta_death` because of it.
/// Returns the energy spent.
pub fn produce_enzymes<S: Scalar>(world: &mut World<S>) -> f64 {
    let n_c = world.layout.n_c;
    let m = world.layout.m;
    let lambda = S::of(world.config.lambda_enz);
    let floor = S::of(world.config.theta_death);
    let alive = &world.alive;
    let prod = &world.decisions.enz_prod;

    let rows: Vec<f64> = world
        .enz
        .par_chunks_mut(m * n_c)
        .zip(world.energy.par_chunks_mut(m))
        .enumerate()
        .map(|(r, (enz_row, e_row))| {
            let mut spent = 0.0;
            for j in 0..m {
                let cell = r * m + j;
                if !alive[cell] {
                    continue;
                }
                let p = &prod[cell * n_c..(cell + 1) * n_c];
                let z = &mut enz_row[j * n_c..(j + 1) * n_c];
                let total: S = p.iter().copied().sum();
                if total > S::one() {
                    for (zi, pi) in z.iter_mut().zip(p) {
                        *zi = *pi / total;
                    }
                } else {
                    z.copy_from_slice(p);
                }
                let cost = lambda * z.iter().copied().sum::<S>();
                let pay = cost.min((e_row[j] - floor).max(S::zero()));
                e_row[j] -= pay;
                spent += pay.wide();
            }
            spent
        })
        .collect();
    ordered_sum(&rows)
}

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct ReactionOutcome {
    pub released: f64,
    /// Released energy lost to the `e_max` cap.
    pub dissipated: f64,
}

/// Cyclic reactions `C_i -> C_(i+1 mod n_c)` catalysed by `Z_i`.
///
/// All conversions of a cell are computed from its chemical levels before
/// the update: `r_i = kappa_r * enz_i * chem_i`. Every conversion except the
/// last releases `e_release * r_i` energy into the cell.
pub fn apply_reactions<S: Scalar>(world: &mut World<S>) -> ReactionOutcome {
    let n_c = world.layout.n_c;
    let m = world.layout.m;
    let kappa = S::of(world.config.kappa_r);
    let e_release = S::of(world.config.e_release);
    let e_max = S::of(world.config.e_max);
    let fixed = world.config.fixed_release;
    let enz = &world.enz;

    let rows: Vec<(f64, f64)> = world
        .chem
        .par_chunks_mut(m * n_c)
        .zip(world.energy.par_chunks_mut(m))
        .enumerate()
        .map(|(r, (chem_row, e_row))| {
            let mut released = 0.0;
            let mut dissipated = 0.0;
            let mut conv = [S::zero(); 16];
            let mut conv_heap;
            let conv: &mut [S] = if n_c <= 16 {
                &mut conv[..n_c]
            } else {
                conv_heap = vec![S::zero(); n_c];
                &mut conv_heap
            };
            for j in 0..m {
                let cell = r * m + j;
                let z = &enz[cell * n_c..(cell + 1) * n_c];
                let c = &mut chem_row[j * n_c..(j + 1) * n_c];
                if z.iter().all(|v| *v == S::zero()) {
                    continue;
                }
                let mut gain = S::zero();
                for i in 0..n_c {
                    conv[i] = kappa * z[i] * c[i];
                    if i + 1 < n_c {
                        gain += if fixed {
                            if c[i] > S::zero() {
                                e_release * kappa * z[i]
                            } else {
                                S::zero()
                            }
                        } else {
                            e_release * conv[i]
                        };
                    }
                }
                for i in 0..n_c {
                    c[i] -= conv[i];
                    c[(i + 1) % n_c] += conv[i];
                }
                let room = (e_max - e_row[j]).max(S::zero());
                let kept = gain.min(room);
                e_row[j] += kept;
                released += gain.wide();
                dissipated += (gain - kept).wide();
            }
            (released, dissipated)
        })
        .collect();
    ReactionOutcome {
        released: rows.iter().map(|r| r.0).fold(0.0, |a, b| a + b),
        dissipated: rows.iter().map(|r| r.1).fold(0.0, |a, b| a + b),
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct FlowOutcome {
    /// Energy paid for flow actions.
    pub cost: f64,
    /// Victim energy beyond the killer's cap.
    pub dissipated: f64,
    pub kills: usize,
}

/// Resolves one quantity's flows over every lattice edge.
///
/// First every alive cell pays `lambda_flow * sum |a_d|` for its four flow
/// actions on this quantity, whatever the outcome. Then each edge `(A, B)`,
/// with `B` the right or lower neighbour of `A`, is processed once:
/// horizontal edges in raster order, then vertical edges in raster order.
/// The net pull `a_A[d] - a_B[opposite d]` moves
/// `kappa * |net| * donor_stock` toward the puller, clamped so the donor
/// stays at or above its floor and recipient energy stays at or below
/// `e_max`. For energy, a pull of at least `theta_kill` on an alive
/// neighbour takes all of its energy and kills it instead.
///
/// A cell that dies during the pass stops acting for its remaining edges.
pub fn resolve_flows<S: Scalar>(world: &mut World<S>, quantity: Quantity) -> FlowOutcome {
    let l = world.layout.clone();
    let (m, n, n_f, n_c) = (l.m, l.cells, l.n_flow(), l.n_c);
    let q = quantity.flow_index();
    let kappa = S::of(match quantity {
        Quantity::Energy => world.config.kappa_e,
        Quantity::Chem(_) => world.config.kappa_c,
    });
    let lambda = S::of(world.config.lambda_flow);
    let theta_death = S::of(world.config.theta_death);
    let theta_kill = S::of(world.config.theta_kill);
    let e_max = S::of(world.config.e_max);
    let mut out = FlowOutcome::default();

    // action costs, charged in energy
    {
        let alive = &world.alive;
        let flow = &world.decisions.flow;
        let rows: Vec<f64> = world
            .energy
            .par_chunks_mut(m)
            .enumerate()
            .map(|(r, e_row)| {
                let mut spent = 0.0;
                for j in 0..m {
                    let cell = r * m + j;
                    if !alive[cell] {
                        continue;
                    }
                    let a = &flow[cell * n_f + 4 * q..cell * n_f + 4 * q + 4];
                    let cost = lambda * a.iter().map(|v| v.abs()).sum::<S>();
                    let pay = cost.min((e_row[j] - theta_death).max(S::zero()));
                    e_row[j] -= pay;
                    spent += pay.wide();
                }
                spent
            })
            .collect();
        out.cost = ordered_sum(&rows);
    }

    let action = |w: &World<S>, cell: usize, d: Direction| -> S {
        if w.alive[cell] {
            w.decisions.flow[cell * n_f + 4 * q + d.index()]
        } else {
            S::zero()
        }
    };

    let mut killed = Vec::new();
    for (dir, axis) in [(Direction::Right, 0), (Direction::Down, 1)] {
        for a in 0..n {
            let b = if axis == 0 {
                (a / m) * m + (a % m + 1) % m
            } else {
                (a + m) % n
            };
            let pull_a = action(world, a, dir);
            let pull_b = action(world, b, dir.opposite());

            if quantity == Quantity::Energy && world.alive[a] && world.alive[b] {
                let victim = if pull_a >= theta_kill {
                    Some((a, b))
                } else if pull_b >= theta_kill {
                    Some((b, a))
                } else {
                    None
                };
                if let Some((killer, prey)) = victim {
                    let gain = world.energy[prey];
                    let kept = gain.min((e_max - world.energy[killer]).max(S::zero()));
                    world.energy[killer] += kept;
                    world.energy[prey] = S::zero();
                    out.dissipated += (gain - kept).wide();
                    world.alive[prey] = false;
                    killed.push(prey);
                    out.kills += 1;
                    continue;
                }
            }

            let net = pull_a - pull_b;
            if net == S::zero() {
                continue;
            }
            // positive net: A pulls from B
            let (donor, recipient) = if net > S::zero() { (b, a) } else { (a, b) };
            let stock = |w: &World<S>, c: usize| -> S {
                match quantity {
                    Quantity::Energy => w.energy[c],
                    Quantity::Chem(k) => w.chem[c * n_c + k],
                }
            };
            let d_stock = stock(world, donor);
            let floor = match quantity {
                Quantity::Energy if world.alive[donor] => theta_death,
                _ => S::zero(),
            };
            let mut t = kappa * net.abs() * d_stock;
            t = t.min((d_stock - floor).max(S::zero()));
            if quantity == Quantity::Energy {
                t = t.min((e_max - world.energy[recipient]).max(S::zero()));
            }
            if t <= S::zero() {
                continue;
            }
            match quantity {
                Quantity::Energy => {
                    world.energy[donor] -= t;
                    world.energy[recipient] += t;
                }
                Quantity::Chem(k) => {
                    world.chem[donor * n_c + k] -= t;
                    world.chem[recipient * n_c + k] += t;
                }
            }
        }
    }
    for prey in killed {
        world.erase(prey);
    }
    out
}

/// `chem <- (1 - d) * chem + d * mean(4 neighbours)` on the torus.
pub fn diffuse_chemicals<S: Scalar>(world: &mut World<S>) {
    let l = &world.layout;
    let (m, n_c) = (l.m, l.n_c);
    let d = S::of(world.config.d_chem);
    let keep = S::one() - d;
    let quarter = S::of(0.25);
    let src = world.chem.clone();
    world
        .chem
        .par_chunks_mut(m * n_c)
        .enumerate()
        .for_each(|(r, row)| {
            let up = (r + m - 1) % m;
            let down = (r + 1) % m;
            for j in 0..m {
                let left = (j + m - 1) % m;
                let right = (j + 1) % m;
                let at = |rr: usize, jj: usize, k: usize| src[(rr * m + jj) * n_c + k];
                for k in 0..n_c {
                    let sum = at(r, right, k) + at(up, j, k) + at(r, left, k) + at(down, j, k);
                    row[j * n_c + k] = keep * at(r, j, k) + d * (quarter * sum);
                }
            }
        });
}

/// Ages every alive cell by one step and kills cells whose energy dropped
/// below `theta_death` or whose age exceeds `l_max`. Returns the number of
/// deaths.
pub fn apply_death_and_aging<S: Scalar>(world: &mut World<S>) -> usize {
    let theta = S::of(world.config.theta_death);
    let l_max = world.config.l_max;
    let mut dead = Vec::new();
    for cell in 0..world.cells() {
        if !world.alive[cell] {
            continue;
        }
        world.age[cell] += 1;
        if world.energy[cell] < theta || world.age[cell] > l_max {
            dead.push(cell);
        }
    }
    let g = world.layout.genome_len;
    let n_h = world.layout.n_h;
    let mut flag = vec![false; world.cells()];
    for &c in &dead {
        flag[c] = true;
        world.alive[c] = false;
        world.age[c] = 0;
    }
    world
        .genome
        .par_chunks_mut(g)
        .zip(world.h.par_chunks_mut(n_h))
        .enumerate()
        .with_min_len(64)
        .filter(|(c, _)| flag[*c])
        .for_each(|(_, (genome, h))| {
            genome.fill(S::zero());
            h.fill(S::zero());
        });
    dead.len()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::WorldConfig;
    use crate::rng::Phase;

    fn world(m: usize) -> World<f64> {
        World::new(WorldConfig {
            m,
            n_h: 2,
            n_c: 4,
            n_sig_h: 1,
            p_init: 0.0,
            seed: 2,
            ..Default::default()
        })
        .unwrap()
    }

    fn revive(w: &mut World<f64>, cell: usize, energy: f64) {
        w.spawn(&[cell], 0, Phase::InitGenome);
        w.energy[cell] = energy;
    }

    fn set_flow(w: &mut World<f64>, cell: usize, q: usize, d: Direction, v: f64) {
        let n_f = w.layout.n_flow();
        w.decisions.flow[cell * n_f + 4 * q + d.index()] = v;
    }

    #[test]
    fn oversubscribed_production_is_rescaled() {
        let mut w = world(2);
        revive(&mut w, 0, 5.0);
        w.decisions.enz_prod[..4].copy_from_slice(&[0.5; 4]);
        let spent = produce_enzymes(&mut w);
        assert_eq!(w.enz_of(0), &[0.25; 4]);
        assert!((spent - 0.01).abs() < 1e-15);
        assert!((w.energy[0] - 4.99).abs() < 1e-15);
    }

    #[test]
    fn no_production_no_cost() {
        let mut w = world(2);
        revive(&mut w, 0, 5.0);
        w.enz[..4].copy_from_slice(&[0.1; 4]);
        assert_eq!(produce_enzymes(&mut w), 0.0);
        assert_eq!(w.enz_of(0), &[0.0; 4]);
        assert_eq!(w.energy[0], 5.0);
    }

    #[test]
    fn dead_cells_do_not_produce() {
        let mut w = world(2);
        w.enz[4..8].copy_from_slice(&[0.1, 0.2, 0.0, 0.0]);
        w.decisions.enz_prod[4..8].copy_from_slice(&[1.0; 4]);
        produce_enzymes(&mut w);
        assert_eq!(w.enz_of(1), &[0.1, 0.2, 0.0, 0.0]);
    }

    #[test]
    fn enzyme_cost_respects_floor() {
        let mut w = world(2);
        revive(&mut w, 0, 0.105);
        w.decisions.enz_prod[..4].copy_from_slice(&[1.0, 0.0, 0.0, 0.0]);
        let spent = produce_enzymes(&mut w);
        assert!((w.energy[0] - 0.1).abs() < 1e-15);
        assert!((spent - 0.005).abs() < 1e-15);
    }

    #[test]
    fn first_reaction_releases() {
        let mut w = world(2);
        w.chem.fill(0.0);
        w.chem[..4].copy_from_slice(&[1.0, 0.0, 0.0, 0.0]);
        w.enz[..4].copy_from_slice(&[1.0, 0.0, 0.0, 0.0]);
        let out = apply_reactions(&mut w);
        assert_eq!(w.chem_of(0), &[0.9, 0.1, 0.0, 0.0]);
        assert!((w.energy[0] - 0.1).abs() < 1e-15);
        assert!((out.released - 0.1).abs() < 1e-15);
    }

    #[test]
    fn last_reaction_closes_cycle_without_energy() {
        let mut w = world(2);
        w.chem.fill(0.0);
        w.chem[..4].copy_from_slice(&[0.0, 0.0, 0.0, 1.0]);
        w.enz[..4].copy_from_slice(&[0.0, 0.0, 0.0, 1.0]);
        let out = apply_reactions(&mut w);
        assert_eq!(w.chem_of(0), &[0.1, 0.0, 0.0, 0.9]);
        assert_eq!(w.energy[0], 0.0);
        assert_eq!(out.released, 0.0);
    }

    #[test]
    fn no_enzyme_no_reaction() {
        let mut w = world(2);
        let before = w.chem.clone();
        assert_eq!(apply_reactions(&mut w), ReactionOutcome::default());
        assert_eq!(w.chem, before);
    }

    #[test]
    fn reaction_release_capped() {
        let mut w = world(2);
        w.energy[0] = 9.95;
        w.enz[..4].copy_from_slice(&[1.0, 0.0, 0.0, 0.0]);
        let out = apply_reactions(&mut w);
        assert_eq!(w.energy[0], 10.0);
        assert!((out.dissipated - 0.05).abs() < 1e-12);
    }

    #[test]
    fn symmetric_pulls_cancel() {
        let mut w = world(3);
        revive(&mut w, 4, 1.0);
        revive(&mut w, 5, 1.0);
        set_flow(&mut w, 4, 0, Direction::Right, 0.5);
        set_flow(&mut w, 5, 0, Direction::Left, 0.5);
        let out = resolve_flows(&mut w, Quantity::Energy);
        assert!((w.energy[4] - 0.995).abs() < 1e-15);
        assert!((w.energy[5] - 0.995).abs() < 1e-15);
        assert!((out.cost - 0.01).abs() < 1e-15);
    }

    #[test]
    fn one_sided_pull() {
        let mut w = world(3);
        revive(&mut w, 4, 1.0);
        revive(&mut w, 5, 1.0);
        set_flow(&mut w, 4, 0, Direction::Right, 0.4);
        w.config.lambda_flow = 0.0;
        resolve_flows(&mut w, Quantity::Energy);
        assert!((w.energy[4] - 1.1).abs() < 1e-15);
        assert!((w.energy[5] - 0.9).abs() < 1e-15);
    }

    #[test]
    fn strong_pull_kills() {
        let mut w = world(3);
        revive(&mut w, 4, 1.0);
        revive(&mut w, 5, 3.0);
        set_flow(&mut w, 4, 0, Direction::Right, 0.95);
        w.config.lambda_flow = 0.0;
        let out = resolve_flows(&mut w, Quantity::Energy);
        assert_eq!(out.kills, 1);
        assert_eq!(w.energy[4], 4.0);
        assert_eq!(w.energy[5], 0.0);
        assert!(!w.alive[5]);
        assert!(w.genome_of(5).iter().all(|v| *v == 0.0));
    }

    #[test]
    fn kill_from_the_other_side() {
        let mut w = world(3);
        revive(&mut w, 4, 2.0);
        revive(&mut w, 5, 9.0);
        set_flow(&mut w, 5, 0, Direction::Left, 0.95);
        w.config.lambda_flow = 0.0;
        let out = resolve_flows(&mut w, Quantity::Energy);
        assert!(!w.alive[4]);
        assert_eq!(w.energy[5], 10.0);
        assert_eq!(out.dissipated, 1.0);
    }

    #[test]
    fn protective_floor_holds() {
        let mut w = world(3);
        revive(&mut w, 4, 1.0);
        revive(&mut w, 5, 0.12);
        set_flow(&mut w, 4, 0, Direction::Right, 0.8);
        w.config.lambda_flow = 0.0;
        resolve_flows(&mut w, Quantity::Energy);
        assert!((w.energy[5] - 0.1).abs() < 1e-15);
        assert!((w.energy[4] - 1.02).abs() < 1e-15);
    }

    #[test]
    fn chemical_flow_moves_mass() {
        let mut w = world(3);
        revive(&mut w, 4, 1.0);
        set_flow(&mut w, 4, 2, Direction::Down, 0.5);
        let total: f64 = w.chem.iter().sum();
        resolve_flows(&mut w, Quantity::Chem(1));
        let below = w.layout.neighbor(4, Direction::Down);
        assert!((w.chem_of(4)[1] - 1.125).abs() < 1e-15);
        assert!((w.chem_of(below)[1] - 0.875).abs() < 1e-15);
        assert!((w.chem.iter().sum::<f64>() - total).abs() < 1e-12);
    }

    #[test]
    fn uniform_field_is_diffusion_fixed_point() {
        let mut w = world(4);
        w.config.d_chem = 0.7;
        let before = w.chem.clone();
        diffuse_chemicals(&mut w);
        assert_eq!(w.chem, before);
    }

    #[test]
    fn full_diffusion_of_spike() {
        let mut w = world(4);
        w.config.d_chem = 1.0;
        w.chem.fill(0.0);
        w.chem[5 * 4] = 1.0;
        diffuse_chemicals(&mut w);
        assert_eq!(w.chem_of(5)[0], 0.0);
        for d in Direction::ALL {
            assert_eq!(w.chem_of(w.layout.neighbor(5, d))[0], 0.25);
        }
    }

    #[test]
    fn starvation_kills() {
        let mut w = world(2);
        revive(&mut w, 0, 0.05);
        assert_eq!(apply_death_and_aging(&mut w), 1);
        assert!(!w.alive[0]);
        assert!(w.genome_of(0).iter().all(|v| *v == 0.0));
        assert_eq!(w.energy[0], 0.05);
    }

    #[test]
    fn old_age_kills() {
        let mut w = world(2);
        revive(&mut w, 0, 5.0);
        w.age[0] = w.config.l_max;
        apply_death_and_aging(&mut w);
        assert!(!w.alive[0]);
        assert_eq!(w.age[0], 0);
    }

    #[test]
    fn healthy_cell_ages() {
        let mut w = world(2);
        revive(&mut w, 0, 5.0);
        w.age[0] = 10;
        let genome = w.genome_of(0).to_vec();
        assert_eq!(apply_death_and_aging(&mut w), 0);
        assert_eq!(w.age[0], 11);
        assert_eq!(w.genome_of(0), genome.as_slice());
    }
}
