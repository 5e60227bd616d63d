//! The step pipeline, run loop, and per-step records.

use std::collections::HashSet;
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;
use std::time::Instant;

use rayon::prelude::*;

use crate::config::{Variant, WorldConfig};
use crate::error::{Result, SimError};
use crate::fields::{
    apply_death_and_aging, apply_reactions, diffuse_chemicals, produce_enzymes, resolve_flows,
    Quantity,
};
use crate::ledger::StepLedger;
use crate::neural::{apply_copy, apply_move, decode_actions, rnn_step};
use crate::scalar::Scalar;
use crate::signals::write_signals;
use crate::variants::{particle_copy_overwrite, particle_step, pure_energy_regen, ParticleWorld};
use crate::world::World;

/// Lattice phases, in execution order.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Stage {
    ShiftSignals,
    WriteSignals,
    RnnStep,
    DecodeActions,
    ProduceEnzymes,
    ApplyReactions,
    /// Pure-energy variant, in place of enzymes and reactions.
    Regen,
    FlowEnergy,
    FlowChemicals,
    DiffuseChemicals,
    ApplyCopy,
    ApplyMove,
    DeathAndAging,
    Reawaken,
}

/// State of any variant.
#[derive(Clone, Debug)]
pub enum State<S> {
    Grid(World<S>),
    Particles(ParticleWorld<S>),
}

impl<S: Scalar> State<S> {
    pub fn new(config: WorldConfig) -> Result<Self> {
        Ok(match config.variant {
            Variant::Particles => State::Particles(ParticleWorld::new(config)?),
            Variant::Grid | Variant::PureEnergy => State::Grid(World::new(config)?),
        })
    }

    pub fn config(&self) -> &WorldConfig {
        match self {
            State::Grid(w) => &w.config,
            State::Particles(p) => &p.config,
        }
    }

    pub fn step(&self) -> u64 {
        match self {
            State::Grid(w) => w.step,
            State::Particles(p) => p.step,
        }
    }

    pub fn designated(&self) -> [usize; 3] {
        match self {
            State::Grid(w) => w.designated,
            State::Particles(p) => p.designated,
        }
    }

    pub fn as_grid(&self) -> Option<&World<S>> {
        match self {
            State::Grid(w) => Some(w),
            State::Particles(_) => None,
        }
    }

    pub fn as_particles(&self) -> Option<&ParticleWorld<S>> {
        match self {
            State::Particles(p) => Some(p),
            State::Grid(_) => None,
        }
    }

    /// Energy held by the system: lattice total, or particles plus background.
    pub fn system_energy(&self) -> f64 {
        match self {
            State::Grid(w) => w.total_energy(),
            State::Particles(p) => p.particle_energy() + p.background_energy(),
        }
    }

    /// Snapshot of the observables at the current step.
    pub fn metrics(&self, ms_per_step: f64) -> MetricsRecord {
        match self {
            State::Grid(w) => {
                let alive = w.alive_count();
                let total = w.total_energy();
                let alive_energy: f64 = w
                    .energy
                    .iter()
                    .zip(&w.alive)
                    .filter(|(_, a)| **a)
                    .fold(0.0, |acc, (e, _)| acc + e.wide());
                MetricsRecord {
                    step: w.step,
                    alive_fraction: alive as f64 / w.cells() as f64,
                    total_energy: total,
                    mean_energy: if alive == 0 { 0.0 } else { alive_energy / alive as f64 },
                    chem_totals: w.chem_totals(),
                    species_proxy: species_proxy(
                        (0..w.cells()).filter(|c| w.alive[*c]).map(|c| w.genome_of(c)),
                        w.designated,
                    ),
                    ms_per_step,
                }
            }
            State::Particles(p) => MetricsRecord {
                step: p.step,
                alive_fraction: 1.0,
                total_energy: p.particle_energy(),
                mean_energy: p.mean_energy(),
                chem_totals: Vec::new(),
                species_proxy: species_proxy((0..p.len()).map(|i| p.genome_of(i)), p.designated),
                ms_per_step,
            },
        }
    }
}

/// One row of the metrics series.
#[derive(Clone, Debug, PartialEq)]
pub struct MetricsRecord {
    pub step: u64,
    pub alive_fraction: f64,
    /// Lattice energy (all cells), or summed particle energy.
    pub total_energy: f64,
    /// Mean energy of alive cells, or of particles.
    pub mean_energy: f64,
    /// Per-species chemical totals; empty for particles.
    pub chem_totals: Vec<f64>,
    pub species_proxy: usize,
    /// Mean wall time of the steps since the previous record.
    pub ms_per_step: f64,
}

/// Number of distinct clusters among `genomes`, keyed by the designated
/// coordinates rounded to one decimal.
pub fn species_proxy<'a, S: Scalar>(
    genomes: impl Iterator<Item = &'a [S]>,
    designated: [usize; 3],
) -> usize {
    let key = |w: S| (w.wide() * 10.0).round() as i64;
    genomes
        .map(|g| (key(g[designated[0]]), key(g[designated[1]]), key(g[designated[2]])))
        .collect::<HashSet<_>>()
        .len()
}

fn check_finite<S: Scalar>(world: &World<S>) -> Result<()> {
    let fault = |what: &'static str, cell: usize| SimError::NumericFault {
        step: world.step,
        phase: "end_of_step",
        cell,
        what,
    };
    if let Some(c) = world.energy.par_iter().position_first(|v| !v.is_finite()) {
        return Err(fault("energy", c));
    }
    let n_c = world.layout.n_c;
    if let Some(c) = world
        .chem
        .par_chunks(n_c)
        .position_first(|v| v.iter().any(|x| !x.is_finite()))
    {
        return Err(fault("chemical", c));
    }
    Ok(())
}

fn chem_total<S: Scalar>(world: &World<S>) -> f64 {
    world.chem_totals().iter().sum()
}

/// One lattice step. `probe` sees the world after every phase.
pub fn grid_step<S: Scalar>(
    world: &mut World<S>,
    probe: &mut (dyn FnMut(Stage, &World<S>) + Send),
) -> Result<StepLedger> {
    let mut l = StepLedger {
        before: world.total_energy(),
        chem_before: chem_total(world),
        ..Default::default()
    };

    world.signals.shift();
    probe(Stage::ShiftSignals, world);
    write_signals(world);
    probe(Stage::WriteSignals, world);
    rnn_step(world)?;
    probe(Stage::RnnStep, world);
    decode_actions(world);
    probe(Stage::DecodeActions, world);

    let chemistry = world.config.chemistry();
    if chemistry {
        l.cost_enzyme = produce_enzymes(world);
        probe(Stage::ProduceEnzymes, world);
        let r = apply_reactions(world);
        l.released = r.released;
        l.dissipated_cap = r.dissipated;
        probe(Stage::ApplyReactions, world);
    } else if world.config.variant == Variant::PureEnergy {
        l.regen = pure_energy_regen(world);
        probe(Stage::Regen, world);
    }

    let f = resolve_flows(world, Quantity::Energy);
    l.cost_flow += f.cost;
    l.dissipated_kill += f.dissipated;
    probe(Stage::FlowEnergy, world);
    if chemistry {
        for k in 0..world.layout.n_c {
            let f = resolve_flows(world, Quantity::Chem(k));
            l.cost_flow += f.cost;
        }
        probe(Stage::FlowChemicals, world);
        if world.config.diffusion_enabled {
            diffuse_chemicals(world);
            probe(Stage::DiffuseChemicals, world);
        }
    }

    apply_copy(world);
    probe(Stage::ApplyCopy, world);
    l.cost_move = apply_move(world).cost;
    probe(Stage::ApplyMove, world);
    apply_death_and_aging(world);
    probe(Stage::DeathAndAging, world);
    l.injected = world.reawaken().1;
    probe(Stage::Reawaken, world);

    world.step += 1;
    check_finite(world)?;
    l.step = world.step;
    l.after = world.total_energy();
    l.chem_after = chem_total(world);
    Ok(l)
}

/// One particle step: perception, movement and absorption, then copying.
pub fn particles_step<S: Scalar>(pw: &mut ParticleWorld<S>) -> Result<StepLedger> {
    let mut l = StepLedger {
        before: pw.particle_energy() + pw.background_energy(),
        ..Default::default()
    };
    let s = particle_step(pw);
    l.regen = s.regen;
    l.cost_copy = particle_copy_overwrite(pw).cost;
    pw.step += 1;
    if let Some(i) = pw.energy.iter().position(|e| !e.is_finite()) {
        return Err(SimError::NumericFault {
            step: pw.step,
            phase: "particle_step",
            cell: i,
            what: "particle energy",
        });
    }
    l.step = pw.step;
    l.after = pw.particle_energy() + pw.background_energy();
    Ok(l)
}

/// Cadences and stop control of [`Simulation::run`]. Cadences are counted
/// in absolute steps, so a resumed run keeps the original schedule.
#[derive(Clone, Debug)]
pub struct RunOptions {
    pub steps: u64,
    pub metrics_every: u64,
    pub frames_every: Option<u64>,
    pub checkpoint_every: Option<u64>,
    /// Also checkpoint at the end of the run if the last step was off-cadence.
    pub final_checkpoint: bool,
    /// Polled before every step; when set, the run stops and checkpoints.
    pub stop: Option<Arc<AtomicBool>>,
}

impl Default for RunOptions {
    fn default() -> Self {
        Self {
            steps: 0,
            metrics_every: 1,
            frames_every: None,
            checkpoint_every: None,
            final_checkpoint: false,
            stop: None,
        }
    }
}

/// Run callbacks. Each receives the state after a completed step.
pub trait Observer<S> {
    fn on_ledger(&mut self, _ledger: &StepLedger) -> Result<()> {
        Ok(())
    }
    fn on_metrics(&mut self, _record: &MetricsRecord) -> Result<()> {
        Ok(())
    }
    fn on_frame(&mut self, _state: &State<S>) -> Result<()> {
        Ok(())
    }
    fn on_checkpoint(&mut self, _state: &State<S>) -> Result<()> {
        Ok(())
    }
}

impl<S> Observer<S> for () {}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RunSummary {
    pub steps_run: u64,
    pub stopped: bool,
    pub elapsed_ms: f64,
}

/// Owns the state and the worker pool.
pub struct Simulation<S> {
    pub state: State<S>,
    pool: Option<Arc<rayon::ThreadPool>>,
}

impl<S: Scalar> Simulation<S> {
    pub fn new(config: WorldConfig) -> Result<Self> {
        Ok(Self::from_state(State::new(config)?))
    }

    pub fn from_state(state: State<S>) -> Self {
        Self { state, pool: None }
    }

    /// Runs every phase on a dedicated pool of `threads` workers instead of
    /// the global pool.
    pub fn with_threads(mut self, threads: usize) -> Result<Self> {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .map_err(|e| SimError::Threads(e.to_string()))?;
        self.pool = Some(Arc::new(pool));
        Ok(self)
    }

    pub fn config(&self) -> &WorldConfig {
        self.state.config()
    }

    pub fn step_index(&self) -> u64 {
        self.state.step()
    }

    pub fn hash(&self) -> u64 {
        crate::io::world_hash(&self.state)
    }

    pub fn step(&mut self) -> Result<StepLedger> {
        self.step_probed(&mut |_, _| {})
    }

    /// Advances one step; on the lattice, `probe` sees the world after every
    /// phase. Particle runs never call it.
    pub fn step_probed(
        &mut self,
        probe: &mut (dyn FnMut(Stage, &World<S>) + Send),
    ) -> Result<StepLedger> {
        let state = &mut self.state;
        let mut go = move || match state {
            State::Grid(w) => grid_step(w, probe),
            State::Particles(p) => particles_step(p),
        };
        match &self.pool {
            Some(pool) => pool.install(go),
            None => go(),
        }
    }

    /// Runs `opts.steps` steps, firing `observer` on the configured
    /// cadences. A run of zero steps records the initial state once.
    pub fn run(&mut self, opts: &RunOptions, observer: &mut dyn Observer<S>) -> Result<RunSummary> {
        let start = Instant::now();
        if opts.steps == 0 {
            observer.on_metrics(&self.state.metrics(0.0))?;
            return Ok(RunSummary {
                steps_run: 0,
                stopped: false,
                elapsed_ms: 0.0,
            });
        }
        let due = |every: Option<u64>, step: u64| every.is_some_and(|k| k > 0 && step.is_multiple_of(k));
        let mut window_ms = 0.0;
        let mut window_steps = 0u64;
        let mut last_checkpoint = None;
        let mut summary = RunSummary {
            steps_run: 0,
            stopped: false,
            elapsed_ms: 0.0,
        };

        while summary.steps_run < opts.steps {
            if opts.stop.as_ref().is_some_and(|s| s.load(Ordering::SeqCst)) {
                summary.stopped = true;
                break;
            }
            let t0 = Instant::now();
            let ledger = self.step()?;
            window_ms += t0.elapsed().as_secs_f64() * 1e3;
            window_steps += 1;
            summary.steps_run += 1;
            let step = self.state.step();

            observer.on_ledger(&ledger)?;
            if due(Some(opts.metrics_every), step) {
                let rec = self.state.metrics(window_ms / window_steps as f64);
                observer.on_metrics(&rec)?;
                window_ms = 0.0;
                window_steps = 0;
            }
            if due(opts.frames_every, step) {
                observer.on_frame(&self.state)?;
            }
            if due(opts.checkpoint_every, step) {
                observer.on_checkpoint(&self.state)?;
                last_checkpoint = Some(step);
            }
        }

        let step = self.state.step();
        if (summary.stopped || opts.final_checkpoint) && last_checkpoint != Some(step) {
            observer.on_checkpoint(&self.state)?;
        }
        summary.elapsed_ms = start.elapsed().as_secs_f64() * 1e3;
        Ok(summary)
    }
}
