//! Free-moving elements that read each other through attention.
//!
//! Particles live on a periodic `m x m` plane above a background energy
//! field. Each step a particle attends over the particles within `radius`,
//! updates its recurrent state, moves, and absorbs the background energy of
//! the site it lands on. Particles never die; a particle that chooses to
//! copy overwrites the genome of a lower-energy neighbour.

use rayon::prelude::*;

use super::spatial::SpatialHash;
use super::regen_field;
use crate::config::WorldConfig;
use crate::error::Result;
use crate::rng::{Phase, RngState};
use crate::scalar::{dot, Scalar};
use crate::world::random_genome;

/// Genome segments of a particle network. Raw actions are two velocity
/// components followed by two copy logits (stay, copy).
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ParticleLayout {
    pub n_h: usize,
    /// Attention width; also the network input width.
    pub d_a: usize,
    pub n_a: usize,
    pub genome_len: usize,
}

impl ParticleLayout {
    pub fn new(cfg: &WorldConfig) -> Self {
        let (n_h, d_a, n_a) = (cfg.n_h, cfg.attn_dim, 4);
        let genome_len = n_h * d_a + n_h * n_h + n_h + n_a * n_h + n_a + 3 * d_a * n_h;
        Self {
            n_h,
            d_a,
            n_a,
            genome_len,
        }
    }

    pub fn w_x(&self) -> std::ops::Range<usize> {
        0..self.n_h * self.d_a
    }
    pub fn w_h(&self) -> std::ops::Range<usize> {
        let s = self.w_x().end;
        s..s + self.n_h * self.n_h
    }
    pub fn b_h(&self) -> std::ops::Range<usize> {
        let s = self.w_h().end;
        s..s + self.n_h
    }
    pub fn w_a(&self) -> std::ops::Range<usize> {
        let s = self.b_h().end;
        s..s + self.n_a * self.n_h
    }
    pub fn b_a(&self) -> std::ops::Range<usize> {
        let s = self.w_a().end;
        s..s + self.n_a
    }
    /// Query projection, `d_a x n_h`.
    pub fn q(&self) -> std::ops::Range<usize> {
        let s = self.b_a().end;
        s..s + self.d_a * self.n_h
    }
    pub fn k(&self) -> std::ops::Range<usize> {
        let s = self.q().end;
        s..s + self.d_a * self.n_h
    }
    pub fn v(&self) -> std::ops::Range<usize> {
        let s = self.k().end;
        s..s + self.d_a * self.n_h
    }
}

#[derive(Clone, Debug)]
pub struct ParticleWorld<S> {
    pub config: WorldConfig,
    pub layout: ParticleLayout,
    pub rng: RngState,
    pub step: u64,
    /// Column coordinate in `[0, m)`.
    pub xs: Vec<S>,
    /// Row coordinate in `[0, m)`.
    pub ys: Vec<S>,
    pub energy: Vec<S>,
    pub genome: Vec<S>,
    pub h: Vec<S>,
    /// Background energy, `m * m`, row-major.
    pub background: Vec<S>,
    pub designated: [usize; 3],
    pub(crate) intent: Vec<bool>,
}

fn mat_vec<S: Scalar>(w: &[S], v: &[S], out: &mut [S]) {
    let cols = v.len();
    for (r, o) in out.iter_mut().enumerate() {
        *o = dot(&w[r * cols..(r + 1) * cols], v);
    }
}

/// Wraps a coordinate into `[0, side)`.
#[inline]
pub(crate) fn wrap_coord<S: Scalar>(v: S, side: S) -> S {
    let w = v - (v / side).floor() * side;
    if w >= side || w < S::zero() {
        S::zero()
    } else {
        w
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct ParticleStepOutcome {
    pub absorbed: f64,
    pub regen: f64,
}

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct ParticleCopyOutcome {
    pub copies: usize,
    pub cost: f64,
}

impl<S: Scalar> ParticleWorld<S> {
    /// Particles start uniformly placed with Gaussian genomes, zero state and
    /// `particle_energy_init` energy; the background starts full.
    pub fn new(config: WorldConfig) -> Result<Self> {
        config.validate()?;
        let layout = ParticleLayout::new(&config);
        let rng = RngState::new(config.seed);
        let n = config.particles;
        let side = config.m as f64;
        let mut xs = vec![S::zero(); n];
        let mut ys = vec![S::zero(); n];
        let mut genome = vec![S::zero(); n * layout.genome_len];
        genome
            .par_chunks_mut(layout.genome_len)
            .zip(xs.par_iter_mut().zip(ys.par_iter_mut()))
            .enumerate()
            .for_each(|(i, (g, (x, y)))| {
                let mut s = rng.stream(0, Phase::ParticleInit, i as u64);
                *x = wrap_coord(S::of(s.uniform() * side), S::of(side));
                *y = wrap_coord(S::of(s.uniform() * side), S::of(side));
                random_genome(g, config.sigma_init, &mut s);
            });
        Ok(Self {
            designated: crate::world::designate(&rng, layout.genome_len),
            energy: vec![S::of(config.particle_energy_init); n],
            h: vec![S::zero(); n * layout.n_h],
            background: vec![S::of(config.regen_cap); config.m * config.m],
            intent: vec![false; n],
            xs,
            ys,
            genome,
            step: 0,
            rng,
            layout,
            config,
        })
    }

    pub fn len(&self) -> usize {
        self.xs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.xs.is_empty()
    }

    pub fn genome_of(&self, i: usize) -> &[S] {
        let g = self.layout.genome_len;
        &self.genome[i * g..(i + 1) * g]
    }

    pub fn genome_of_mut(&mut self, i: usize) -> &mut [S] {
        let g = self.layout.genome_len;
        &mut self.genome[i * g..(i + 1) * g]
    }

    pub fn h_of(&self, i: usize) -> &[S] {
        let n_h = self.layout.n_h;
        &self.h[i * n_h..(i + 1) * n_h]
    }

    pub fn particle_energy(&self) -> f64 {
        self.energy.iter().fold(0.0, |a, e| a + e.wide())
    }

    pub fn background_energy(&self) -> f64 {
        self.background.iter().fold(0.0, |a, e| a + e.wide())
    }

    pub fn mean_energy(&self) -> f64 {
        if self.is_empty() {
            0.0
        } else {
            self.particle_energy() / self.len() as f64
        }
    }

    pub fn spatial_hash(&self) -> SpatialHash {
        SpatialHash::build(&self.xs, &self.ys, self.config.m as f64, self.config.radius)
    }

    /// Background site under particle `i`.
    pub fn site_of(&self, i: usize) -> usize {
        let m = self.config.m;
        let r = (self.ys[i].wide() as usize).min(m - 1);
        let c = (self.xs[i].wide() as usize).min(m - 1);
        r * m + c
    }

    fn projections(&self) -> (Vec<S>, Vec<S>, Vec<S>) {
        let l = &self.layout;
        let (g, n_h, d_a) = (l.genome_len, l.n_h, l.d_a);
        let n = self.len();
        let mut q = vec![S::zero(); n * d_a];
        let mut k = vec![S::zero(); n * d_a];
        let mut v = vec![S::zero(); n * d_a];
        q.par_chunks_mut(d_a)
            .zip(k.par_chunks_mut(d_a))
            .zip(v.par_chunks_mut(d_a))
            .enumerate()
            .for_each(|(i, ((qi, ki), vi))| {
                let genome = &self.genome[i * g..(i + 1) * g];
                let h = &self.h[i * n_h..(i + 1) * n_h];
                mat_vec(&genome[l.q()], h, qi);
                mat_vec(&genome[l.k()], h, ki);
                mat_vec(&genome[l.v()], h, vi);
            });
        (q, k, v)
    }

    /// Attention read of particle `i` over `neighbors`: returns the softmax
    /// weights (in neighbour order) and writes `x = sum_j w_j V h_j`.
    fn attend(
        &self,
        i: usize,
        neighbors: &[usize],
        proj: &(Vec<S>, Vec<S>, Vec<S>),
        x: &mut [S],
        weights: &mut Vec<S>,
    ) {
        let d_a = self.layout.d_a;
        x.fill(S::zero());
        weights.clear();
        if neighbors.is_empty() {
            return;
        }
        let (q, k, v) = proj;
        let qi = &q[i * d_a..(i + 1) * d_a];
        let scale = S::one() / S::of(d_a as f64).sqrt();
        weights.extend(
            neighbors
                .iter()
                .map(|&j| dot(qi, &k[j * d_a..(j + 1) * d_a]) * scale),
        );
        let max = weights.iter().copied().fold(S::neg_infinity(), S::max);
        let mut total = S::zero();
        for w in weights.iter_mut() {
            *w = (*w - max).exp();
            total += *w;
        }
        for w in weights.iter_mut() {
            *w /= total;
        }
        for (w, &j) in weights.iter().zip(neighbors) {
            for (xi, vj) in x.iter_mut().zip(&v[j * d_a..(j + 1) * d_a]) {
                *xi += *w * *vj;
            }
        }
    }

    /// Attention input of particle `i` at the current positions and states,
    /// together with the attention weight of each neighbour.
    pub fn attention_read(&self, i: usize) -> (Vec<S>, Vec<(usize, S)>) {
        let hash = self.spatial_hash();
        let mut nb = Vec::new();
        hash.neighbors(i, &self.xs, &self.ys, &mut nb);
        let proj = self.projections();
        let mut x = vec![S::zero(); self.layout.d_a];
        let mut w = Vec::new();
        self.attend(i, &nb, &proj, &mut x, &mut w);
        (x, nb.into_iter().zip(w).collect())
    }
}

/// One particle step: attention read, recurrent update, movement with
/// toroidal wrap, absorption of the landing site's energy (in particle index
/// order), and background regrowth.
pub fn particle_step<S: Scalar>(pw: &mut ParticleWorld<S>) -> ParticleStepOutcome {
    let n = pw.len();
    let l = pw.layout.clone();
    let (g, n_h, d_a, n_a) = (l.genome_len, l.n_h, l.d_a, l.n_a);
    let side = S::of(pw.config.m as f64);
    let v_max = S::of(pw.config.v_max);
    let hash = pw.spatial_hash();
    let proj = pw.projections();
    let rng = pw.rng;
    let step = pw.step;

    let mut new_h = pw.h.clone();
    let mut velocity = vec![[S::zero(); 2]; n];
    let mut intent = vec![false; n];
    {
        let pw_ref = &*pw;
        new_h
            .par_chunks_mut(n_h)
            .zip(velocity.par_iter_mut())
            .zip(intent.par_iter_mut())
            .enumerate()
            .for_each_init(
                || (Vec::new(), vec![S::zero(); d_a], Vec::new(), vec![S::zero(); n_h], vec![S::zero(); n_a]),
                |(nb, x, weights, pre, a), (i, ((h, vel), wants_copy))| {
                    hash.neighbors(i, &pw_ref.xs, &pw_ref.ys, nb);
                    pw_ref.attend(i, nb, &proj, x, weights);
                    let genome = &pw_ref.genome[i * g..(i + 1) * g];
                    let (w_x, w_h, b_h) = (&genome[l.w_x()], &genome[l.w_h()], &genome[l.b_h()]);
                    for (j, p) in pre.iter_mut().enumerate() {
                        *p = dot(&w_x[j * d_a..(j + 1) * d_a], x)
                            + dot(&w_h[j * n_h..(j + 1) * n_h], h)
                            + b_h[j];
                    }
                    for (hj, p) in h.iter_mut().zip(pre.iter()) {
                        *hj = p.tanh();
                    }
                    let (w_a, b_a) = (&genome[l.w_a()], &genome[l.b_a()]);
                    for (k, ak) in a.iter_mut().enumerate() {
                        *ak = dot(&w_a[k * n_h..(k + 1) * n_h], h) + b_a[k];
                    }
                    *vel = [v_max * a[0].tanh(), v_max * a[1].tanh()];
                    let mut s = rng.stream(step, Phase::ParticleIntent, i as u64);
                    *wants_copy = s.softmax_choice(&a[2..4]) == 1;
                },
            );
    }
    pw.h = new_h;
    pw.intent = intent;

    for (i, vel) in velocity.iter().enumerate() {
        pw.xs[i] = wrap_coord(pw.xs[i] + vel[0], side);
        pw.ys[i] = wrap_coord(pw.ys[i] + vel[1], side);
    }

    let mut absorbed = 0.0;
    for i in 0..n {
        let site = pw.site_of(i);
        let take = pw.background[site];
        pw.energy[i] += take;
        pw.background[site] = S::zero();
        absorbed += take.wide();
    }

    let (m, rate, cap) = (pw.config.m, pw.config.regen_rate, pw.config.regen_cap);
    let regen = regen_field(&mut pw.background, m, rate, cap);
    ParticleStepOutcome { absorbed, regen }
}

/// Copy overwrite. Each particle that chose to copy (in index order) picks
/// its lowest-energy neighbour (ties to the lower index), or every
/// lower-energy neighbour with `copy_all_lower`. A target with less energy
/// than the copier, not yet overwritten this step, receives the copier's
/// genome plus mutation noise and zero activations; the copier pays
/// `e_copy_particle` per copy, never going below zero.
///
/// Energy comparisons and copied genomes use the state at phase start.
pub fn particle_copy_overwrite<S: Scalar>(pw: &mut ParticleWorld<S>) -> ParticleCopyOutcome {
    let n = pw.len();
    let hash = pw.spatial_hash();
    let e0 = pw.energy.clone();
    let cost = S::of(pw.config.e_copy_particle);
    let all = pw.config.copy_all_lower;
    let mut claimed = vec![false; n];
    let mut plan: Vec<(usize, usize)> = Vec::new();
    let mut out = ParticleCopyOutcome::default();
    let mut nb = Vec::new();

    for i in 0..n {
        if !pw.intent[i] {
            continue;
        }
        hash.neighbors(i, &pw.xs, &pw.ys, &mut nb);
        let mut targets: Vec<usize> = if all {
            nb.iter().copied().filter(|&j| e0[j] < e0[i]).collect()
        } else {
            let lowest = nb
                .iter()
                .copied()
                .fold(None, |best: Option<usize>, j| match best {
                    Some(b) if e0[b] <= e0[j] => Some(b),
                    _ => Some(j),
                });
            lowest.filter(|&j| e0[j] < e0[i]).into_iter().collect()
        };
        targets.retain(|&j| !claimed[j]);
        for j in targets {
            claimed[j] = true;
            plan.push((j, i));
            let pay = cost.min(pw.energy[i]);
            pw.energy[i] -= pay;
            out.cost += pay.wide();
            out.copies += 1;
        }
    }
    if plan.is_empty() {
        return out;
    }

    let g = pw.layout.genome_len;
    let n_h = pw.layout.n_h;
    let staged: Vec<S> = plan
        .iter()
        .flat_map(|&(_, src)| pw.genome[src * g..(src + 1) * g].iter().copied())
        .collect();
    let sigma = pw.config.effective_sigma_mut();
    for (slot, &(tgt, _)) in plan.iter().enumerate() {
        let mut s = pw.rng.stream(pw.step, Phase::ParticleMutation, tgt as u64);
        let genome = &mut pw.genome[tgt * g..(tgt + 1) * g];
        genome.copy_from_slice(&staged[slot * g..(slot + 1) * g]);
        if sigma > 0.0 {
            for w in genome.iter_mut() {
                *w += s.normal::<S>(sigma);
            }
        }
        pw.h[tgt * n_h..(tgt + 1) * n_h].fill(S::zero());
    }
    out
}
