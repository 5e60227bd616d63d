//! Lattice data model.
//!
//! Every per-cell quantity lives in its own flat, row-major array indexed by
//! `cell = row * m + col`; per-cell vectors (genome, activations, chemicals,
//! enzymes) are stored cell-major so one cell's values are contiguous.

use std::ops::Range;

use rayon::prelude::*;

use crate::config::WorldConfig;
use crate::error::Result;
use crate::rng::{sample_without_replacement, Phase, RngState, Substream};
use crate::scalar::{ordered_sum, Scalar};
use crate::signals::SignalState;

/// Lattice direction. `Up` decreases the row index.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Direction {
    Right = 0,
    Up = 1,
    Left = 2,
    Down = 3,
}

impl Direction {
    pub const ALL: [Direction; 4] = [
        Direction::Right,
        Direction::Up,
        Direction::Left,
        Direction::Down,
    ];

    pub fn opposite(self) -> Self {
        match self {
            Direction::Right => Direction::Left,
            Direction::Up => Direction::Down,
            Direction::Left => Direction::Right,
            Direction::Down => Direction::Up,
        }
    }

    pub fn index(self) -> usize {
        self as usize
    }

    /// Direction for a copy/move choice, where choice 0 means "stay".
    pub fn from_choice(choice: u8) -> Option<Self> {
        match choice {
            1 => Some(Direction::Right),
            2 => Some(Direction::Up),
            3 => Some(Direction::Left),
            4 => Some(Direction::Down),
            _ => None,
        }
    }
}

/// Derived sizes and index arithmetic of a run.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Layout {
    pub m: usize,
    pub cells: usize,
    pub n_h: usize,
    pub n_c: usize,
    pub n_sig_h: usize,
    /// Values per signal layer per cell: hidden slice, energy, chemicals, enzymes.
    pub n_s: usize,
    /// Network input width: four concatenated signal vectors.
    pub n_in: usize,
    /// Raw action outputs per cell.
    pub n_a: usize,
    pub genome_len: usize,
    pub move_enabled: bool,
}

impl Layout {
    pub fn new(cfg: &WorldConfig) -> Self {
        let n_s = cfg.n_sig_h + 1 + 2 * cfg.n_c;
        let n_in = 4 * n_s;
        let n_a = 5 + if cfg.move_enabled { 5 } else { 0 } + 4 + 4 * cfg.n_c + cfg.n_c;
        let genome_len = cfg.n_h * n_in + cfg.n_h * cfg.n_h + cfg.n_h + n_a * cfg.n_h + n_a;
        Self {
            m: cfg.m,
            cells: cfg.m * cfg.m,
            n_h: cfg.n_h,
            n_c: cfg.n_c,
            n_sig_h: cfg.n_sig_h,
            n_s,
            n_in,
            n_a,
            genome_len,
            move_enabled: cfg.move_enabled,
        }
    }

    // Genome segments, in storage order.

    pub fn w_x(&self) -> Range<usize> {
        0..self.n_h * self.n_in
    }

    pub fn w_h(&self) -> Range<usize> {
        let s = self.w_x().end;
        s..s + self.n_h * self.n_h
    }

    pub fn b_h(&self) -> Range<usize> {
        let s = self.w_h().end;
        s..s + self.n_h
    }

    pub fn w_a(&self) -> Range<usize> {
        let s = self.b_h().end;
        s..s + self.n_a * self.n_h
    }

    pub fn b_a(&self) -> Range<usize> {
        let s = self.w_a().end;
        s..s + self.n_a
    }

    // Raw action segments.

    pub fn copy_logits(&self) -> Range<usize> {
        0..5
    }

    pub fn move_logits(&self) -> Option<Range<usize>> {
        self.move_enabled.then_some(5..10)
    }

    /// Four signed flow actions (one per direction) for quantity `q`:
    /// `q = 0` is energy, `q = 1 + k` is chemical `k`.
    pub fn flow(&self, q: usize) -> Range<usize> {
        let s = if self.move_enabled { 10 } else { 5 } + 4 * q;
        s..s + 4
    }

    pub fn enz_prod(&self) -> Range<usize> {
        let s = self.flow(self.n_c).end;
        s..s + self.n_c
    }

    /// Decoded flow values per cell: `4 * (1 + n_c)`.
    pub fn n_flow(&self) -> usize {
        4 * (1 + self.n_c)
    }

    #[inline]
    pub fn neighbor(&self, cell: usize, dir: Direction) -> usize {
        let m = self.m;
        let (r, c) = (cell / m, cell % m);
        match dir {
            Direction::Right => r * m + (c + 1) % m,
            Direction::Left => r * m + (c + m - 1) % m,
            Direction::Up => ((r + m - 1) % m) * m + c,
            Direction::Down => ((r + 1) % m) * m + c,
        }
    }
}

/// Decoded per-cell actions of the current step, structure-of-arrays.
#[derive(Clone, Debug, Default)]
pub struct Decisions<S> {
    /// 0 = no copy, `1 + direction` otherwise.
    pub copy: Vec<u8>,
    /// Same encoding as `copy`; all zero when moving is disabled.
    pub mv: Vec<u8>,
    /// tanh-squashed flow actions, `Layout::n_flow` per cell.
    pub flow: Vec<S>,
    /// Enzyme production in `[0, 1]`, `n_c` per cell.
    pub enz_prod: Vec<S>,
}

/// Full lattice state plus per-step scratch buffers.
#[derive(Clone, Debug)]
pub struct World<S> {
    pub config: WorldConfig,
    pub layout: Layout,
    pub rng: RngState,
    /// Number of completed steps.
    pub step: u64,

    pub genome: Vec<S>,
    pub h: Vec<S>,
    pub age: Vec<u64>,
    pub alive: Vec<bool>,

    pub energy: Vec<S>,
    pub chem: Vec<S>,
    pub enz: Vec<S>,

    pub signals: SignalState<S>,

    /// Genome coordinates used for weight-colour frames and the species proxy.
    pub designated: [usize; 3],

    /// Raw network outputs of the current step, `n_a` per cell.
    pub actions: Vec<S>,
    pub decisions: Decisions<S>,
}

/// Fills a genome with i.i.d. `Normal(0, sigma^2)` entries.
pub(crate) fn random_genome<S: Scalar>(genome: &mut [S], sigma: f64, rng: &mut Substream) {
    for w in genome.iter_mut() {
        *w = rng.normal(sigma);
    }
}

/// Number of cells the alive floor requires: `ceil(f_min * cells)`, with
/// products that are integral up to rounding treated as integral.
pub fn floor_count(f_min: f64, cells: usize) -> usize {
    let t = f_min * cells as f64;
    let r = t.round();
    if (t - r).abs() <= 1e-9 * t.max(1.0) {
        r as usize
    } else {
        t.ceil() as usize
    }
}

/// Three distinct genome coordinates drawn from the run seed.
pub(crate) fn designate(rng: &RngState, genome_len: usize) -> [usize; 3] {
    let mut s = rng.stream(0, Phase::Designate, 0);
    let mut pool: Vec<usize> = (0..genome_len).collect();
    let k = genome_len.min(3);
    for i in 0..k {
        let j = i + s.below((pool.len() - i) as u64) as usize;
        pool.swap(i, j);
    }
    // genomes always have more than three entries; the fallback keeps the
    // indices valid for degenerate layouts
    [pool[0], pool[1.min(k - 1)], pool[2.min(k - 1)]]
}

impl<S: Scalar> World<S> {
    /// Builds the initial lattice.
    ///
    /// `round(p_init * cells)` uniformly chosen cells start alive with
    /// Gaussian genomes and `e_init` energy. Chemicals start at `chem_init`
    /// everywhere; enzymes and signals start at zero.
    pub fn new(config: WorldConfig) -> Result<Self> {
        let mut world = Self::blank(config)?;
        let n = world.cells();
        let n_alive = (world.config.p_init * n as f64).round() as usize;
        let mut pool: Vec<usize> = (0..n).collect();
        let mut select = world.rng.stream(0, Phase::InitSelect, 0);
        let chosen = sample_without_replacement(&mut pool, n_alive, &mut select);
        world.spawn(&chosen, 0, Phase::InitGenome);
        Ok(world)
    }

    /// Allocated lattice with every cell dead; fields at their initial levels.
    pub(crate) fn blank(config: WorldConfig) -> Result<Self> {
        config.validate()?;
        let layout = Layout::new(&config);
        let rng = RngState::new(config.seed);
        let n = layout.cells;

        Ok(World {
            genome: vec![S::zero(); n * layout.genome_len],
            h: vec![S::zero(); n * layout.n_h],
            age: vec![0; n],
            alive: vec![false; n],
            energy: vec![S::zero(); n],
            chem: vec![S::of(config.chem_init); n * layout.n_c],
            enz: vec![S::zero(); n * layout.n_c],
            signals: SignalState::new(layout.m, layout.n_s),
            designated: designate(&rng, layout.genome_len),
            actions: vec![S::zero(); n * layout.n_a],
            decisions: Decisions {
                copy: vec![0; n],
                mv: vec![0; n],
                flow: vec![S::zero(); n * layout.n_flow()],
                enz_prod: vec![S::zero(); n * layout.n_c],
            },
            step: 0,
            rng,
            layout,
            config,
        })
    }

    pub fn cells(&self) -> usize {
        self.layout.cells
    }

    pub fn alive_count(&self) -> usize {
        self.alive.iter().filter(|a| **a).count()
    }

    /// Fraction of lattice cells that are alive.
    pub fn alive_fraction(&self) -> f64 {
        self.alive_count() as f64 / self.cells() as f64
    }

    pub fn total_energy(&self) -> f64 {
        let m = self.layout.m;
        let rows: Vec<f64> = self
            .energy
            .par_chunks(m)
            .map(|row| row.iter().map(|e| e.wide()).sum::<f64>())
            .collect();
        ordered_sum(&rows)
    }

    /// Total of each chemical species over the lattice.
    pub fn chem_totals(&self) -> Vec<f64> {
        let n_c = self.layout.n_c;
        let mut totals = vec![0.0; n_c];
        for cell in self.chem.chunks(n_c) {
            for (t, c) in totals.iter_mut().zip(cell) {
                *t += c.wide();
            }
        }
        totals
    }

    pub fn genome_of(&self, cell: usize) -> &[S] {
        let g = self.layout.genome_len;
        &self.genome[cell * g..(cell + 1) * g]
    }

    pub fn h_of(&self, cell: usize) -> &[S] {
        let n_h = self.layout.n_h;
        &self.h[cell * n_h..(cell + 1) * n_h]
    }

    pub fn chem_of(&self, cell: usize) -> &[S] {
        let n_c = self.layout.n_c;
        &self.chem[cell * n_c..(cell + 1) * n_c]
    }

    pub fn enz_of(&self, cell: usize) -> &[S] {
        let n_c = self.layout.n_c;
        &self.enz[cell * n_c..(cell + 1) * n_c]
    }

    /// Kills a cell: genome, activations and age are zeroed. Field content
    /// (energy, chemicals, enzymes) stays in place.
    pub fn erase(&mut self, cell: usize) {
        let g = self.layout.genome_len;
        let n_h = self.layout.n_h;
        self.alive[cell] = false;
        self.age[cell] = 0;
        self.genome[cell * g..(cell + 1) * g].fill(S::zero());
        self.h[cell * n_h..(cell + 1) * n_h].fill(S::zero());
    }

    /// Brings `cells` (sorted, currently dead) to life with fresh random
    /// genomes and `e_init` energy. Returns the net energy injected.
    pub(crate) fn spawn(&mut self, cells: &[usize], step: u64, phase: Phase) -> f64 {
        if cells.is_empty() {
            return 0.0;
        }
        let g = self.layout.genome_len;
        let n_h = self.layout.n_h;
        let sigma = self.config.sigma_init;
        let rng = self.rng;
        let e_init = S::of(self.config.e_init);
        let mut injected = 0.0;
        for &c in cells {
            debug_assert!(!self.alive[c]);
            self.alive[c] = true;
            self.age[c] = 0;
            injected += e_init.wide() - self.energy[c].wide();
            self.energy[c] = e_init;
            self.h[c * n_h..(c + 1) * n_h].fill(S::zero());
        }
        let alive = &self.alive;
        let fresh: Vec<bool> = {
            let mut f = vec![false; self.layout.cells];
            for &c in cells {
                f[c] = true;
            }
            f
        };
        self.genome
            .par_chunks_mut(g)
            .enumerate()
            .with_min_len(64)
            .filter(|(c, _)| fresh[*c])
            .for_each(|(c, genome)| {
                debug_assert!(alive[c]);
                let mut s = rng.stream(step, phase, c as u64);
                random_genome(genome, sigma, &mut s);
            });
        injected
    }

    /// Tops the population up to the alive floor when it has dropped below.
    ///
    /// Spawns `ceil(f_min * cells) - n_alive` cells at uniformly sampled dead
    /// sites. Returns `(spawned, energy injected)`.
    pub fn reawaken(&mut self) -> (usize, f64) {
        let n_alive = self.alive_count();
        let target = floor_count(self.config.f_min, self.cells());
        if n_alive >= target {
            return (0, 0.0);
        }
        let k = target - n_alive;
        let mut dead: Vec<usize> = (0..self.cells()).filter(|c| !self.alive[*c]).collect();
        let mut select = self.rng.stream(self.step, Phase::ReawakenSelect, 0);
        let chosen = sample_without_replacement(&mut dead, k, &mut select);
        let injected = self.spawn(&chosen, self.step, Phase::ReawakenGenome);
        (chosen.len(), injected)
    }
}
