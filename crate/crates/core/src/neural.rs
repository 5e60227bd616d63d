//! Per-cell recurrent networks: activation update, action decoding, and the
//! two actions that rewrite the lattice (copy with mutation, move/swap).

use rayon::prelude::*;

use crate::error::{Result, SimError};
use crate::rng::{argmax, Phase};
use crate::scalar::{dot, Scalar};
use crate::world::{Direction, Layout, World};

pub use crate::world::Decisions;

/// One cell's forward pass: `h' = tanh(W_x x + W_h h + b_h)`,
/// `a = W_a h' + b_a`. `h` is updated in place.
#[inline]
pub fn cell_forward<S: Scalar>(layout: &Layout, genome: &[S], x: &[S], h: &mut [S], actions: &mut [S]) {
    let (n_h, n_in) = (layout.n_h, layout.n_in);
    let w_x = &genome[layout.w_x()];
    let w_h = &genome[layout.w_h()];
    let b_h = &genome[layout.b_h()];
    let w_a = &genome[layout.w_a()];
    let b_a = &genome[layout.b_a()];

    let mut pre = [S::zero(); 64];
    let mut pre_heap;
    let pre: &mut [S] = if n_h <= pre.len() {
        &mut pre[..n_h]
    } else {
        pre_heap = vec![S::zero(); n_h];
        &mut pre_heap
    };
    for (j, p) in pre.iter_mut().enumerate() {
        *p = dot(&w_x[j * n_in..(j + 1) * n_in], x) + dot(&w_h[j * n_h..(j + 1) * n_h], h) + b_h[j];
    }
    for (hj, p) in h.iter_mut().zip(pre.iter()) {
        *hj = p.tanh();
    }
    for (k, a) in actions.iter_mut().enumerate() {
        *a = dot(&w_a[k * n_h..(k + 1) * n_h], h) + b_a[k];
    }
}

/// Runs the recurrent update for every alive cell, reading inputs from the
/// signal layers. Dead cells keep zero activations and get zero actions.
/// Weights are never modified here.
pub fn rnn_step<S: Scalar>(world: &mut World<S>) -> Result<()> {
    let layout = &world.layout;
    let (g, n_h, n_a, n_in) = (layout.genome_len, layout.n_h, layout.n_a, layout.n_in);
    let signals = &world.signals;
    let genome = &world.genome;
    let alive = &world.alive;

    world
        .h
        .par_chunks_mut(n_h)
        .zip(world.actions.par_chunks_mut(n_a))
        .enumerate()
        .with_min_len(32)
        .for_each_init(
            || vec![S::zero(); n_in],
            |x, (cell, (h, a))| {
                if !alive[cell] {
                    a.fill(S::zero());
                    return;
                }
                signals.read_input(cell, x);
                cell_forward(layout, &genome[cell * g..(cell + 1) * g], x, h, a);
            },
        );

    let bad = world
        .actions
        .par_chunks(n_a)
        .position_first(|a| a.iter().any(|v| !v.is_finite()));
    if let Some(cell) = bad {
        return Err(SimError::NumericFault {
            step: world.step,
            phase: "rnn_step",
            cell,
            what: "action pre-activation",
        });
    }
    Ok(())
}

/// Enzyme production squashing: `max(0, tanh(x))`, so a silent output
/// produces nothing.
#[inline]
pub fn squash_production<S: Scalar>(x: S) -> S {
    x.tanh().max(S::zero())
}

/// Turns raw actions into copy/move choices, squashed flows, and enzyme
/// production. Choices are sampled from the softmax of their five logits
/// (or argmaxed with `copy_argmax`) using the cell's own substream.
pub fn decode_actions<S: Scalar>(world: &mut World<S>) {
    let layout = &world.layout;
    let (n_a, n_f, n_c) = (layout.n_a, layout.n_flow(), layout.n_c);
    let rng = world.rng;
    let step = world.step;
    let argmax_mode = world.config.copy_argmax;
    let alive = &world.alive;
    let actions = &world.actions;
    let copy_r = layout.copy_logits();
    let move_r = layout.move_logits();
    let flow_start = layout.flow(0).start;
    let enz_r = layout.enz_prod();
    let d = &mut world.decisions;

    d.copy
        .par_iter_mut()
        .zip(d.mv.par_iter_mut())
        .zip(d.flow.par_chunks_mut(n_f))
        .zip(d.enz_prod.par_chunks_mut(n_c))
        .enumerate()
        .with_min_len(256)
        .for_each(|(cell, (((copy, mv), flow), enz))| {
            if !alive[cell] {
                *copy = 0;
                *mv = 0;
                flow.fill(S::zero());
                enz.fill(S::zero());
                return;
            }
            let a = &actions[cell * n_a..(cell + 1) * n_a];
            let mut s = rng.stream(step, Phase::Decode, cell as u64);
            let choose = |logits: &[S], s: &mut crate::rng::Substream| -> u8 {
                if argmax_mode {
                    argmax(logits) as u8
                } else {
                    s.softmax_choice(logits) as u8
                }
            };
            *copy = choose(&a[copy_r.clone()], &mut s);
            *mv = match &move_r {
                Some(r) => choose(&a[r.clone()], &mut s),
                None => 0,
            };
            for (f, raw) in flow.iter_mut().zip(&a[flow_start..flow_start + n_f]) {
                *f = raw.tanh();
            }
            for (z, raw) in enz.iter_mut().zip(&a[enz_r.clone()]) {
                *z = squash_production(*raw);
            }
        });
}

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct CopyOutcome {
    pub copies: usize,
    /// Energy moved from sources to targets.
    pub transferred: f64,
}

/// Copy with mutation.
///
/// Sources are visited in raster order. A copy succeeds when the source is
/// alive, holds at least `theta_copy` energy, and its chosen neighbour is
/// dead; the first source to claim a target wins. The target receives the
/// source genome plus `Normal(0, sigma_mut^2)` noise, zero activations and
/// age, and `e_copy` energy taken from the source, less whatever would push
/// the target above `e_max`.
pub fn apply_copy<S: Scalar>(world: &mut World<S>) -> CopyOutcome {
    let n = world.cells();
    let theta = S::of(world.config.theta_copy);
    let e_copy = S::of(world.config.e_copy);
    let e_max = S::of(world.config.e_max);
    let n_h = world.layout.n_h;
    let mut out = CopyOutcome::default();
    let mut plan: Vec<(usize, usize)> = Vec::new();

    for src in 0..n {
        let Some(dir) = Direction::from_choice(world.decisions.copy[src]) else {
            continue;
        };
        if !world.alive[src] || world.energy[src] < theta {
            continue;
        }
        let tgt = world.layout.neighbor(src, dir);
        if world.alive[tgt] {
            continue;
        }
        world.alive[tgt] = true;
        world.age[tgt] = 0;
        world.h[tgt * n_h..(tgt + 1) * n_h].fill(S::zero());
        let room = (e_max - world.energy[tgt]).max(S::zero());
        let delivered = e_copy.min(room);
        world.energy[src] -= delivered;
        world.energy[tgt] += delivered;
        out.transferred += delivered.wide();
        plan.push((tgt, src));
    }
    out.copies = plan.len();
    if plan.is_empty() {
        return out;
    }

    // sources are alive and targets were dead, so no genome is both read and
    // written; stage the sources and scatter them with noise in parallel
    let g = world.layout.genome_len;
    let mut staged = vec![S::zero(); plan.len() * g];
    staged
        .par_chunks_mut(g)
        .zip(plan.par_iter())
        .for_each(|(buf, &(_, src))| buf.copy_from_slice(&world.genome[src * g..(src + 1) * g]));

    let mut slot = vec![usize::MAX; n];
    for (i, &(tgt, _)) in plan.iter().enumerate() {
        slot[tgt] = i;
    }
    let sigma = world.config.effective_sigma_mut();
    let rng = world.rng;
    let step = world.step;
    world
        .genome
        .par_chunks_mut(g)
        .enumerate()
        .with_min_len(64)
        .filter(|(c, _)| slot[*c] != usize::MAX)
        .for_each(|(tgt, genome)| {
            let i = slot[tgt];
            genome.copy_from_slice(&staged[i * g..(i + 1) * g]);
            if sigma > 0.0 {
                let mut s = rng.stream(step, Phase::CopyMutation, plan[i].1 as u64);
                for w in genome.iter_mut() {
                    *w += s.normal::<S>(sigma);
                }
            }
        });
    out
}

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct MoveOutcome {
    pub swaps: usize,
    pub cost: f64,
}

/// Swaps the full content of two cells.
fn swap_cells<S: Scalar>(world: &mut World<S>, a: usize, b: usize, with_fields: bool) {
    fn swap_block<T>(v: &mut [T], a: usize, b: usize, len: usize) {
        let (lo, hi) = if a < b { (a, b) } else { (b, a) };
        let (left, right) = v.split_at_mut(hi * len);
        left[lo * len..(lo + 1) * len].swap_with_slice(&mut right[..len]);
    }
    let l = &world.layout;
    let (g, n_h, n_c) = (l.genome_len, l.n_h, l.n_c);
    swap_block(&mut world.genome, a, b, g);
    swap_block(&mut world.h, a, b, n_h);
    world.age.swap(a, b);
    world.alive.swap(a, b);
    if with_fields {
        world.energy.swap(a, b);
        swap_block(&mut world.chem, a, b, n_c);
        swap_block(&mut world.enz, a, b, n_c);
    }
}

/// Move action: a mover with at least `theta_move` energy swaps places with
/// its chosen neighbour, then pays `e_move` at its new location (not below
/// the protective floor). Raster order decides conflicts and every location
/// takes part in at most one swap per step.
pub fn apply_move<S: Scalar>(world: &mut World<S>) -> MoveOutcome {
    let mut out = MoveOutcome::default();
    if !world.config.move_enabled {
        return out;
    }
    let n = world.cells();
    let theta = S::of(world.config.theta_move);
    let e_move = S::of(world.config.e_move);
    let floor = S::of(world.config.theta_death);
    let with_fields = world.config.move_fields;
    let mut used = vec![false; n];

    for src in 0..n {
        let Some(dir) = Direction::from_choice(world.decisions.mv[src]) else {
            continue;
        };
        if used[src] || !world.alive[src] || world.energy[src] < theta {
            continue;
        }
        let tgt = world.layout.neighbor(src, dir);
        if used[tgt] {
            continue;
        }
        swap_cells(world, src, tgt, with_fields);
        used[src] = true;
        used[tgt] = true;
        let pay = e_move.min((world.energy[tgt] - floor).max(S::zero()));
        world.energy[tgt] -= pay;
        out.cost += pay.wide();
        out.swaps += 1;
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::WorldConfig;

    fn cfg(m: usize) -> WorldConfig {
        WorldConfig {
            m,
            n_h: 3,
            n_c: 2,
            n_sig_h: 2,
            p_init: 0.0,
            seed: 9,
            ..Default::default()
        }
    }

    fn revive(w: &mut World<f64>, cell: usize, energy: f64) {
        w.spawn(&[cell], 0, Phase::InitGenome);
        w.energy[cell] = energy;
    }

    #[test]
    fn zero_genome_zero_output() {
        let mut w = World::<f64>::new(cfg(3)).unwrap();
        w.alive[4] = true;
        w.energy[4] = 1.0;
        rnn_step(&mut w).unwrap();
        assert!(w.h.iter().all(|v| *v == 0.0));
        assert!(w.actions.iter().all(|v| *v == 0.0));
    }

    #[test]
    fn saturated_bias() {
        let c = WorldConfig {
            n_h: 1,
            n_sig_h: 1,
            ..cfg(2)
        };
        let mut w = World::<f64>::new(c).unwrap();
        w.alive[0] = true;
        let g = w.layout.genome_len;
        let b = w.layout.b_h().start;
        w.genome[b] = 10.0;
        // nonzero signals must not matter with zero input weights
        w.signals.layers[0].fill(3.0);
        rnn_step(&mut w).unwrap();
        assert_eq!(w.h[0], 10f64.tanh());
        assert!((w.h[0] - 0.99999999).abs() < 1e-8);
        assert!(w.genome[g..].iter().all(|v| *v == 0.0));
    }

    #[test]
    fn dead_cells_get_zero_actions() {
        let mut w = World::<f64>::new(cfg(3)).unwrap();
        w.actions.fill(5.0);
        rnn_step(&mut w).unwrap();
        assert!(w.actions.iter().all(|v| *v == 0.0));
    }

    #[test]
    fn weights_untouched_and_h_bounded() {
        let mut w = World::<f64>::new(WorldConfig {
            p_init: 1.0,
            sigma_init: 3.0,
            ..cfg(4)
        })
        .unwrap();
        for l in w.signals.layers.iter_mut() {
            for (i, v) in l.iter_mut().enumerate() {
                *v = ((i * 37) % 11) as f64 - 5.0;
            }
        }
        let genome = w.genome.clone();
        for _ in 0..5 {
            rnn_step(&mut w).unwrap();
        }
        assert_eq!(genome, w.genome);
        assert!(w.h.iter().all(|v| v.abs() <= 1.0));
    }

    #[test]
    fn non_finite_actions_fault() {
        let mut w = World::<f64>::new(cfg(2)).unwrap();
        w.alive[3] = true;
        let b_a = w.layout.b_a().start;
        let g = w.layout.genome_len;
        w.genome[3 * g + b_a] = f64::INFINITY;
        match rnn_step(&mut w) {
            Err(SimError::NumericFault { cell, .. }) => assert_eq!(cell, 3),
            other => panic!("expected fault, got {other:?}"),
        }
    }

    #[test]
    fn uniform_copy_logits() {
        // zero genome: all five outcomes equally likely
        let mut w = World::<f64>::new(WorldConfig {
            m: 100,
            ..cfg(100)
        })
        .unwrap();
        w.alive.fill(true);
        let mut counts = [0usize; 5];
        for step in 0..10 {
            w.step = step;
            decode_actions(&mut w);
            for c in &w.decisions.copy {
                counts[*c as usize] += 1;
            }
        }
        let total: usize = counts.iter().sum();
        assert_eq!(total, 100_000);
        for c in counts {
            assert!((c as f64 / total as f64 - 0.2).abs() < 0.01, "{counts:?}");
        }
    }

    #[test]
    fn saturated_copy_logits() {
        let mut w = World::<f64>::new(cfg(10)).unwrap();
        w.alive.fill(true);
        let n_a = w.layout.n_a;
        for c in 0..w.cells() {
            let a = &mut w.actions[c * n_a..c * n_a + 5];
            a.copy_from_slice(&[-1e6, 1e6, -1e6, -1e6, -1e6]);
        }
        decode_actions(&mut w);
        assert!(w.decisions.copy.iter().all(|c| *c == 1));
    }

    #[test]
    fn zero_raw_flow_is_zero() {
        let mut w = World::<f64>::new(cfg(3)).unwrap();
        w.alive.fill(true);
        decode_actions(&mut w);
        assert!(w.decisions.flow.iter().all(|f| *f == 0.0));
        assert!(w.decisions.enz_prod.iter().all(|z| *z == 0.0));
    }

    #[test]
    fn argmax_mode() {
        let mut w = World::<f64>::new(WorldConfig {
            copy_argmax: true,
            ..cfg(3)
        })
        .unwrap();
        w.alive.fill(true);
        let n_a = w.layout.n_a;
        w.actions[4 * n_a + 3] = 0.5;
        decode_actions(&mut w);
        assert_eq!(w.decisions.copy[4], 3);
        assert_eq!(w.decisions.copy[0], 0);
    }

    #[test]
    fn copy_below_threshold_is_noop() {
        let mut w = World::<f64>::new(cfg(3)).unwrap();
        revive(&mut w, 4, 1.0);
        w.decisions.copy[4] = 1;
        let before = w.clone();
        assert_eq!(apply_copy(&mut w).copies, 0);
        assert_eq!(w.genome, before.genome);
        assert_eq!(w.energy, before.energy);
        assert_eq!(w.alive, before.alive);
    }

    #[test]
    fn copy_onto_alive_is_noop() {
        let mut w = World::<f64>::new(cfg(3)).unwrap();
        revive(&mut w, 4, 5.0);
        revive(&mut w, 5, 5.0);
        w.decisions.copy[4] = 1;
        let before = w.clone();
        assert_eq!(apply_copy(&mut w).copies, 0);
        assert_eq!(w.genome, before.genome);
        assert_eq!(w.energy, before.energy);
    }

    #[test]
    fn exact_copy_without_noise() {
        let mut w = World::<f64>::new(WorldConfig {
            sigma_mut: 0.0,
            ..cfg(3)
        })
        .unwrap();
        revive(&mut w, 4, 5.0);
        w.decisions.copy[4] = 1;
        let out = apply_copy(&mut w);
        assert_eq!(out.copies, 1);
        assert_eq!(w.genome_of(5), w.genome_of(4));
        assert_eq!(w.energy[4], 4.0);
        assert_eq!(w.energy[5], 1.0);
        assert!(w.alive[5]);
        assert_eq!(w.age[5], 0);
    }

    #[test]
    fn evolution_off_forces_exact_copies() {
        let mut w = World::<f64>::new(WorldConfig {
            evolution_enabled: false,
            sigma_mut: 0.5,
            ..cfg(3)
        })
        .unwrap();
        revive(&mut w, 4, 5.0);
        w.decisions.copy[4] = 4;
        apply_copy(&mut w);
        assert_eq!(w.genome_of(7), w.genome_of(4));
    }

    #[test]
    fn mutation_perturbs_every_entry() {
        let mut w = World::<f64>::new(cfg(3)).unwrap();
        revive(&mut w, 4, 5.0);
        w.decisions.copy[4] = 1;
        apply_copy(&mut w);
        let diffs = w
            .genome_of(4)
            .iter()
            .zip(w.genome_of(5))
            .filter(|(a, b)| a != b)
            .count();
        assert_eq!(diffs, w.layout.genome_len);
    }

    #[test]
    fn copy_conflict_goes_to_raster_first() {
        // cells 3 and 5 both target 4 in a 3x3 lattice
        let mut w = World::<f64>::new(WorldConfig {
            sigma_mut: 0.0,
            ..cfg(3)
        })
        .unwrap();
        revive(&mut w, 3, 5.0);
        revive(&mut w, 5, 5.0);
        w.decisions.copy[3] = 1;
        w.decisions.copy[5] = 3;
        let out = apply_copy(&mut w);
        assert_eq!(out.copies, 1);
        assert_eq!(w.genome_of(4), w.genome_of(3));
        assert_eq!(w.energy[5], 5.0);
    }

    #[test]
    fn copy_into_capped_target_transfers_room_only() {
        let mut w = World::<f64>::new(WorldConfig {
            sigma_mut: 0.0,
            ..cfg(3)
        })
        .unwrap();
        revive(&mut w, 4, 5.0);
        w.energy[5] = 9.5;
        w.decisions.copy[4] = 1;
        let out = apply_copy(&mut w);
        assert_eq!(w.energy[5], 10.0);
        assert_eq!(w.energy[4], 4.5);
        assert_eq!(out.transferred, 0.5);
    }

    #[test]
    fn move_disabled_is_identity() {
        let mut w = World::<f64>::new(cfg(3)).unwrap();
        revive(&mut w, 4, 5.0);
        w.decisions.mv[4] = 1;
        let before = w.clone();
        assert_eq!(apply_move(&mut w), MoveOutcome::default());
        assert_eq!(w.genome, before.genome);
        assert_eq!(w.alive, before.alive);
    }

    fn moving(m: usize) -> World<f64> {
        World::<f64>::new(WorldConfig {
            move_enabled: true,
            ..cfg(m)
        })
        .unwrap()
    }

    #[test]
    fn single_mover_into_empty() {
        let mut w = moving(3);
        revive(&mut w, 4, 5.0);
        w.chem[4 * 2] = 0.7;
        w.chem[5 * 2] = 0.2;
        let genome = w.genome_of(4).to_vec();
        w.decisions.mv[4] = 1;
        let out = apply_move(&mut w);
        assert_eq!(out.swaps, 1);
        assert_eq!(w.genome_of(5), genome.as_slice());
        assert!(w.alive[5] && !w.alive[4]);
        assert!(w.genome_of(4).iter().all(|v| *v == 0.0));
        assert_eq!(w.energy[5], 5.0 - 0.1);
        assert_eq!(w.energy[4], 0.0);
        assert_eq!(w.chem[5 * 2], 0.7);
        assert_eq!(w.chem[4 * 2], 0.2);
    }

    #[test]
    fn mutual_swap_happens_once() {
        // enumerate both orders of the 2-cell case
        for (first, second, d1, d2) in [(3usize, 4usize, 1u8, 3u8), (4, 5, 1, 3)] {
            let mut w = moving(3);
            revive(&mut w, first, 5.0);
            revive(&mut w, second, 4.0);
            let (ga, gb) = (w.genome_of(first).to_vec(), w.genome_of(second).to_vec());
            w.decisions.mv[first] = d1;
            w.decisions.mv[second] = d2;
            let out = apply_move(&mut w);
            assert_eq!(out.swaps, 1);
            assert_eq!(w.genome_of(second), ga.as_slice());
            assert_eq!(w.genome_of(first), gb.as_slice());
            // the raster-first mover pays at its new site
            assert_eq!(w.energy[second], 4.9);
            assert_eq!(w.energy[first], 4.0);
        }
    }

    #[test]
    fn move_without_fields_leaves_fields() {
        let mut w = World::<f64>::new(WorldConfig {
            move_enabled: true,
            move_fields: false,
            ..cfg(3)
        })
        .unwrap();
        revive(&mut w, 4, 5.0);
        w.energy[5] = 3.0;
        w.decisions.mv[4] = 1;
        apply_move(&mut w);
        assert!(w.alive[5]);
        assert_eq!(w.energy[4], 5.0);
        assert!((w.energy[5] - 2.9).abs() < 1e-15);
    }
}
