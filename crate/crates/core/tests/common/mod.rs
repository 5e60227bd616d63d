//! Scalar reference implementations used as oracles, written from the rules
//! with plain coordinate loops and no shared code with the engine kernels.

#![allow(dead_code)]

use simm_core::{World64, WorldConfig};

pub fn small_config(m: usize, seed: u64) -> WorldConfig {
    WorldConfig {
        m,
        n_h: 6,
        n_c: 3,
        n_sig_h: 3,
        seed,
        ..Default::default()
    }
}

/// Lively small worlds: low kill threshold, moving cells, diffusion.
pub fn busy_config(m: usize, seed: u64) -> WorldConfig {
    WorldConfig {
        theta_kill: 0.6,
        move_enabled: seed.is_multiple_of(2),
        diffusion_enabled: seed.is_multiple_of(3),
        p_init: 0.6,
        ..small_config(m, seed)
    }
}

/// Signal layers after one shift: right/left move along rows, up/down along
/// columns, toroidally.
pub fn shift_oracle(layers: &[Vec<f64>; 4], m: usize, n_s: usize) -> [Vec<f64>; 4] {
    let mut out = [
        vec![0.0; m * m * n_s],
        vec![0.0; m * m * n_s],
        vec![0.0; m * m * n_s],
        vec![0.0; m * m * n_s],
    ];
    for r in 0..m {
        for c in 0..m {
            let dests = [
                (r, (c + 1) % m),
                ((r + m - 1) % m, c),
                (r, (c + m - 1) % m),
                ((r + 1) % m, c),
            ];
            for (d, &(rr, cc)) in dests.iter().enumerate() {
                for k in 0..n_s {
                    out[d][(rr * m + cc) * n_s + k] = layers[d][(r * m + c) * n_s + k];
                }
            }
        }
    }
    out
}

/// Hidden state and raw actions of every cell after one recurrent update,
/// computed with sequential sums. Dead cells keep their state and get zero
/// actions.
pub fn rnn_oracle(w: &World64) -> (Vec<f64>, Vec<f64>) {
    let cfg = &w.config;
    let (n_h, n_c) = (cfg.n_h, cfg.n_c);
    let n_s = cfg.n_sig_h + 1 + 2 * n_c;
    let n_in = 4 * n_s;
    let n_a = 5 + if cfg.move_enabled { 5 } else { 0 } + 4 + 4 * n_c + n_c;
    let g = n_h * n_in + n_h * n_h + n_h + n_a * n_h + n_a;
    let cells = cfg.m * cfg.m;
    let mut h_out = w.h.clone();
    let mut a_out = vec![0.0; cells * n_a];
    for cell in 0..cells {
        if !w.alive[cell] {
            continue;
        }
        let genome = &w.genome[cell * g..(cell + 1) * g];
        let mut x = Vec::with_capacity(n_in);
        for d in 0..4 {
            x.extend_from_slice(&w.signals.layers[d][cell * n_s..(cell + 1) * n_s]);
        }
        let h = &w.h[cell * n_h..(cell + 1) * n_h];
        let w_x = 0;
        let w_h = w_x + n_h * n_in;
        let b_h = w_h + n_h * n_h;
        let w_a = b_h + n_h;
        let b_a = w_a + n_a * n_h;
        let mut h_new = vec![0.0; n_h];
        for j in 0..n_h {
            let mut s = 0.0;
            for i in 0..n_in {
                s += genome[w_x + j * n_in + i] * x[i];
            }
            for i in 0..n_h {
                s += genome[w_h + j * n_h + i] * h[i];
            }
            h_new[j] = (s + genome[b_h + j]).tanh();
        }
        for k in 0..n_a {
            let mut s = 0.0;
            for i in 0..n_h {
                s += genome[w_a + k * n_h + i] * h_new[i];
            }
            a_out[cell * n_a + k] = s + genome[b_a + k];
        }
        h_out[cell * n_h..(cell + 1) * n_h].copy_from_slice(&h_new);
    }
    (h_out, a_out)
}

/// Result of resolving one quantity's flows.
#[derive(Debug, Clone)]
pub struct FlowResult {
    pub energy: Vec<f64>,
    pub chem: Vec<f64>,
    pub alive: Vec<bool>,
    pub killed: Vec<usize>,
}

/// Flow resolution for energy (`species = None`) or one chemical, from the
/// rule: per-action costs first, then every horizontal edge in raster
/// order, then every vertical edge, with kills for energy pulls at or above
/// the kill threshold between two alive cells.
pub fn flow_oracle(w: &World64, species: Option<usize>) -> FlowResult {
    let cfg = &w.config;
    let (m, n_c) = (cfg.m, cfg.n_c);
    let n_f = 4 * (1 + n_c);
    let q = species.map_or(0, |k| 1 + k);
    let kappa = if species.is_none() { cfg.kappa_e } else { cfg.kappa_c };
    let mut energy = w.energy.clone();
    let mut chem = w.chem.clone();
    let mut alive = w.alive.clone();
    let mut killed = Vec::new();
    let act = |alive: &[bool], cell: usize, d: usize| {
        if alive[cell] {
            w.decisions.flow[cell * n_f + 4 * q + d]
        } else {
            0.0
        }
    };

    for cell in 0..m * m {
        if !alive[cell] {
            continue;
        }
        let mut cost = 0.0;
        for d in 0..4 {
            cost += cfg.lambda_flow * act(&alive, cell, d).abs();
        }
        let pay = cost.min((energy[cell] - cfg.theta_death).max(0.0));
        energy[cell] -= pay;
    }

    // (dA, dB): Right/Left for horizontal edges, Down/Up for vertical ones
    for pass in 0..2 {
        for r in 0..m {
            for c in 0..m {
                let a = r * m + c;
                let (b, da, db) = if pass == 0 {
                    (r * m + (c + 1) % m, 0, 2)
                } else {
                    (((r + 1) % m) * m + c, 3, 1)
                };
                let pa = act(&alive, a, da);
                let pb = act(&alive, b, db);
                if species.is_none() && alive[a] && alive[b] {
                    let pair = if pa >= cfg.theta_kill {
                        Some((a, b))
                    } else if pb >= cfg.theta_kill {
                        Some((b, a))
                    } else {
                        None
                    };
                    if let Some((killer, victim)) = pair {
                        let gain = energy[victim].min((cfg.e_max - energy[killer]).max(0.0));
                        energy[killer] += gain;
                        energy[victim] = 0.0;
                        alive[victim] = false;
                        killed.push(victim);
                        continue;
                    }
                }
                let net = pa - pb;
                if net == 0.0 {
                    continue;
                }
                let (donor, to) = if net > 0.0 { (b, a) } else { (a, b) };
                let stock = match species {
                    None => energy[donor],
                    Some(k) => chem[donor * n_c + k],
                };
                let floor = if species.is_none() && alive[donor] {
                    cfg.theta_death
                } else {
                    0.0
                };
                let mut t = kappa * net.abs() * stock;
                t = t.min((stock - floor).max(0.0));
                if species.is_none() {
                    t = t.min((cfg.e_max - energy[to]).max(0.0));
                }
                if t <= 0.0 {
                    continue;
                }
                match species {
                    None => {
                        energy[donor] -= t;
                        energy[to] += t;
                    }
                    Some(k) => {
                        chem[donor * n_c + k] -= t;
                        chem[to * n_c + k] += t;
                    }
                }
            }
        }
    }
    FlowResult {
        energy,
        chem,
        alive,
        killed,
    }
}

pub fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

/// Field invariants of a finished step; returns the first violation.
pub fn field_violation(w: &World64) -> Option<String> {
    let cfg = &w.config;
    let (n_h, n_c) = (cfg.n_h, cfg.n_c);
    let g = w.genome.len() / w.alive.len();
    for cell in 0..w.alive.len() {
        let e = w.energy[cell];
        if !(0.0..=cfg.e_max).contains(&e) {
            return Some(format!("energy {e} at cell {cell}"));
        }
        let chem = &w.chem[cell * n_c..(cell + 1) * n_c];
        if let Some(c) = chem.iter().find(|c| !(**c >= 0.0)) {
            return Some(format!("chemical {c} at cell {cell}"));
        }
        let enz = &w.enz[cell * n_c..(cell + 1) * n_c];
        if enz.iter().any(|z| !(*z >= 0.0)) || enz.iter().sum::<f64>() > 1.0 + 1e-9 {
            return Some(format!("enzymes {enz:?} at cell {cell}"));
        }
        if w.alive[cell] {
            if e < cfg.theta_death {
                return Some(format!("alive cell {cell} below the death threshold"));
            }
        } else {
            if w.age[cell] != 0 {
                return Some(format!("dead cell {cell} has age {}", w.age[cell]));
            }
            if w.h[cell * n_h..(cell + 1) * n_h].iter().any(|v| *v != 0.0) {
                return Some(format!("dead cell {cell} has activations"));
            }
            if w.genome[cell * g..(cell + 1) * g].iter().any(|v| *v != 0.0) {
                return Some(format!("dead cell {cell} has a genome"));
            }
        }
    }
    if !w.signals.all_finite() {
        return Some("non-finite signal".into());
    }
    None
}

/// Worst deviations of the engine kernels from the oracles over a run.
#[derive(Debug, Default, Clone, Copy)]
pub struct OracleReport {
    pub shift_mismatches: usize,
    pub rnn_max: f64,
    pub flow_max: f64,
    pub kills: usize,
    pub steps: usize,
}

/// Steps `world`, checking the signal shift, the recurrent update and both
/// flow passes of every step against the oracles.
pub fn oracle_run(world: &mut World64, steps: usize) -> OracleReport {
    use simm_core::{grid_step, Stage};
    let mut rep = OracleReport::default();
    for _ in 0..steps {
        let mut prev = world.clone();
        let (m, n_s) = (world.config.m, world.signals.n_s);
        grid_step(world, &mut |stage, w: &World64| match stage {
            Stage::ShiftSignals => {
                let expect = shift_oracle(&prev.signals.layers, m, n_s);
                if expect != w.signals.layers {
                    rep.shift_mismatches += 1;
                }
            }
            Stage::WriteSignals => prev = w.clone(),
            Stage::RnnStep => {
                let (h, a) = rnn_oracle(&prev);
                rep.rnn_max = rep.rnn_max.max(max_abs_diff(&h, &w.h));
                rep.rnn_max = rep.rnn_max.max(max_abs_diff(&a, &w.actions));
            }
            Stage::ApplyReactions | Stage::Regen => prev = w.clone(),
            Stage::DecodeActions if !w.config.chemistry() => prev = w.clone(),
            Stage::FlowEnergy => {
                let r = flow_oracle(&prev, None);
                rep.kills += r.killed.len();
                rep.flow_max = rep.flow_max.max(max_abs_diff(&r.energy, &w.energy));
                if r.alive != w.alive {
                    rep.flow_max = f64::INFINITY;
                }
                prev = w.clone();
            }
            Stage::FlowChemicals => {
                let mut s = prev.clone();
                for k in 0..s.config.n_c {
                    let r = flow_oracle(&s, Some(k));
                    s.energy = r.energy;
                    s.chem = r.chem;
                }
                rep.flow_max = rep.flow_max.max(max_abs_diff(&s.energy, &w.energy));
                rep.flow_max = rep.flow_max.max(max_abs_diff(&s.chem, &w.chem));
            }
            _ => {}
        })
        .expect("step");
        rep.steps += 1;
    }
    rep
}
