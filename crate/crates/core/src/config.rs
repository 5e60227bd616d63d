//! Run configuration: every size, rate, threshold and feature switch.

use std::fmt;
use std::str::FromStr;

use crate::error::ConfigError;

/// Which system a run simulates.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Default)]
pub enum Variant {
    /// Recurrent cells on the lattice with chemistry.
    #[default]
    Grid,
    /// Lattice pipeline with chemistry removed and regenerating site energy.
    PureEnergy,
    /// Free-moving elements talking through radius-limited attention.
    Particles,
}

impl Variant {
    pub fn as_str(self) -> &'static str {
        match self {
            Variant::Grid => "grid",
            Variant::PureEnergy => "pure_energy",
            Variant::Particles => "particles",
        }
    }
}

impl FromStr for Variant {
    type Err = ();
    fn from_str(s: &str) -> Result<Self, ()> {
        match s {
            "grid" => Ok(Variant::Grid),
            "pure_energy" => Ok(Variant::PureEnergy),
            "particles" => Ok(Variant::Particles),
            _ => Err(()),
        }
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Scalar width of the state arrays.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Default)]
pub enum Precision {
    #[default]
    F64,
    F32,
}

impl FromStr for Precision {
    type Err = ();
    fn from_str(s: &str) -> Result<Self, ()> {
        match s {
            "f64" => Ok(Precision::F64),
            "f32" => Ok(Precision::F32),
            _ => Err(()),
        }
    }
}

impl fmt::Display for Precision {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Precision::F64 => "f64",
            Precision::F32 => "f32",
        })
    }
}

/// All hyperparameters of a run.
///
/// `theta_sig` and `theta_move` default to `theta_death` and `theta_copy / 2`.
/// The text parser resolves them after all keys are read; code that builds a
/// config by hand and changes `theta_death` or `theta_copy` should set them too.
#[derive(Clone, Debug, PartialEq)]
pub struct WorldConfig {
    /// Lattice side; the lattice has `m * m` cells.
    pub m: usize,
    pub n_h: usize,
    /// Number of chemical (and enzyme) species.
    pub n_c: usize,
    /// Leading hidden components broadcast into the signal layers.
    pub n_sig_h: usize,

    pub e_max: f64,
    pub e_init: f64,
    pub chem_init: f64,
    pub theta_death: f64,
    /// Energy above which a cell overwrites the signal layers.
    pub theta_sig: f64,
    pub theta_copy: f64,
    pub e_copy: f64,
    pub theta_kill: f64,
    pub kappa_e: f64,
    pub kappa_c: f64,
    pub kappa_r: f64,
    pub lambda_flow: f64,
    pub lambda_enz: f64,
    pub e_release: f64,
    /// Reactions release `e_release * kappa_r * enz` regardless of the
    /// converted amount instead of `e_release * converted`.
    pub fixed_release: bool,
    pub sigma_mut: f64,
    pub sigma_init: f64,
    pub l_max: u64,
    pub p_init: f64,
    pub f_min: f64,

    pub move_enabled: bool,
    pub theta_move: f64,
    pub e_move: f64,
    /// Moving swaps energy, chemicals and enzymes along with the network.
    pub move_fields: bool,
    pub diffusion_enabled: bool,
    pub d_chem: f64,
    pub evolution_enabled: bool,
    pub copy_argmax: bool,

    pub variant: Variant,
    pub precision: Precision,
    pub seed: u64,

    /// Pure-energy and particle variants: per-step site energy regrowth.
    pub regen_rate: f64,
    pub regen_cap: f64,

    pub particles: usize,
    pub attn_dim: usize,
    pub radius: f64,
    pub v_max: f64,
    pub e_copy_particle: f64,
    pub particle_energy_init: f64,
    pub copy_all_lower: bool,
}

impl Default for WorldConfig {
    fn default() -> Self {
        Self {
            m: 100,
            n_h: 16,
            n_c: 4,
            n_sig_h: 4,
            e_max: 10.0,
            e_init: 2.0,
            chem_init: 1.0,
            theta_death: 0.1,
            theta_sig: 0.1,
            theta_copy: 2.0,
            e_copy: 1.0,
            theta_kill: 0.9,
            kappa_e: 0.25,
            kappa_c: 0.25,
            kappa_r: 0.1,
            lambda_flow: 0.01,
            lambda_enz: 0.01,
            e_release: 1.0,
            fixed_release: false,
            sigma_mut: 0.05,
            sigma_init: 0.3,
            l_max: 2000,
            p_init: 1.0,
            f_min: 0.1,
            move_enabled: false,
            theta_move: 1.0,
            e_move: 0.1,
            move_fields: true,
            diffusion_enabled: false,
            d_chem: 0.5,
            evolution_enabled: true,
            copy_argmax: false,
            variant: Variant::Grid,
            precision: Precision::F64,
            seed: 0,
            regen_rate: 0.05,
            regen_cap: 10.0,
            particles: 1600,
            attn_dim: 8,
            radius: 10.0,
            v_max: 1.0,
            e_copy_particle: 0.1,
            particle_energy_init: 1.0,
            copy_all_lower: false,
        }
    }
}

/// Named starting points selectable with `preset = NAME` in a config file.
pub const PRESETS: &[&str] = &["default", "oscillation", "pure_energy", "particles"];

/// Fixed phase order of one lattice step; echoed into every artifact header.
pub const PHASE_ORDER: &str = "shift_signals,write_signals,rnn_step,decode_actions,\
produce_enzymes,apply_reactions,flow_energy,flow_chemicals,diffuse_chemicals,\
apply_copy,apply_move,death_and_aging,reawaken";

impl WorldConfig {
    /// Small lattice with fast chemical mixing, no mutation, and random
    /// reseeding below the alive floor. Its alive fraction oscillates.
    pub fn oscillation() -> Self {
        Self {
            diffusion_enabled: true,
            d_chem: 0.5,
            evolution_enabled: false,
            ..Self::default()
        }
    }

    pub fn pure_energy() -> Self {
        Self {
            variant: Variant::PureEnergy,
            ..Self::default()
        }
    }

    /// 1600 elements on a 200 x 200 field.
    pub fn particles() -> Self {
        Self {
            variant: Variant::Particles,
            m: 200,
            particles: 1600,
            regen_rate: 0.01,
            regen_cap: 1.0,
            ..Self::default()
        }
    }

    pub fn preset(name: &str) -> Option<Self> {
        match name {
            "default" => Some(Self::default()),
            "oscillation" => Some(Self::oscillation()),
            "pure_energy" => Some(Self::pure_energy()),
            "particles" => Some(Self::particles()),
            _ => None,
        }
    }

    pub fn cells(&self) -> usize {
        self.m * self.m
    }

    /// Chemistry phases (enzymes, reactions, chemical flow, diffusion) run.
    pub fn chemistry(&self) -> bool {
        self.variant == Variant::Grid
    }

    /// Mutation noise actually applied on copy.
    pub fn effective_sigma_mut(&self) -> f64 {
        if self.evolution_enabled {
            self.sigma_mut
        } else {
            0.0
        }
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        fn bound(key: &'static str, reason: impl Into<String>) -> ConfigError {
            ConfigError::Bound {
                key,
                reason: reason.into(),
                line: None,
            }
        }
        if self.m < 2 {
            return Err(bound("m", format!("must be >= 2, got {}", self.m)));
        }
        if self.n_h < 1 {
            return Err(bound("n_h", "must be >= 1"));
        }
        if self.n_c < 1 {
            return Err(bound("n_c", "must be >= 1"));
        }
        if self.n_sig_h > self.n_h {
            return Err(bound(
                "n_sig_h",
                format!("must be <= n_h ({}), got {}", self.n_h, self.n_sig_h),
            ));
        }
        let nonneg: [(&'static str, f64); 24] = [
            ("e_max", self.e_max),
            ("e_init", self.e_init),
            ("chem_init", self.chem_init),
            ("theta_death", self.theta_death),
            ("theta_sig", self.theta_sig),
            ("theta_copy", self.theta_copy),
            ("e_copy", self.e_copy),
            ("theta_kill", self.theta_kill),
            ("kappa_e", self.kappa_e),
            ("kappa_c", self.kappa_c),
            ("kappa_r", self.kappa_r),
            ("lambda_flow", self.lambda_flow),
            ("lambda_enz", self.lambda_enz),
            ("e_release", self.e_release),
            ("sigma_mut", self.sigma_mut),
            ("sigma_init", self.sigma_init),
            ("theta_move", self.theta_move),
            ("e_move", self.e_move),
            ("d_chem", self.d_chem),
            ("regen_rate", self.regen_rate),
            ("v_max", self.v_max),
            ("e_copy_particle", self.e_copy_particle),
            ("particle_energy_init", self.particle_energy_init),
            ("regen_cap", self.regen_cap),
        ];
        for (key, v) in nonneg {
            if !v.is_finite() || v < 0.0 {
                return Err(bound(key, format!("must be finite and >= 0, got {v}")));
            }
        }
        if !(0.0..=1.0).contains(&self.p_init) {
            return Err(bound("p_init", format!("must lie in [0, 1], got {}", self.p_init)));
        }
        if !(self.f_min > 0.0 && self.f_min < 1.0) {
            return Err(bound("f_min", format!("must lie in (0, 1), got {}", self.f_min)));
        }
        if self.e_copy > self.theta_copy {
            return Err(bound(
                "e_copy",
                format!("must be <= theta_copy ({}), got {}", self.theta_copy, self.e_copy),
            ));
        }
        if self.e_init > self.e_max {
            return Err(bound("e_init", format!("must be <= e_max ({})", self.e_max)));
        }
        if self.kappa_r > 1.0 {
            return Err(bound("kappa_r", "must be <= 1 so reactions cannot overdraw"));
        }
        if self.d_chem > 1.0 {
            return Err(bound("d_chem", "must be <= 1"));
        }
        if self.regen_cap <= 0.0 {
            return Err(bound("regen_cap", "must be > 0"));
        }
        if self.variant == Variant::PureEnergy && self.regen_cap > self.e_max {
            return Err(bound("regen_cap", format!("must be <= e_max ({})", self.e_max)));
        }
        if self.variant == Variant::Particles {
            if self.attn_dim < 1 {
                return Err(bound("attn_dim", "must be >= 1"));
            }
            if !(self.radius.is_finite() && self.radius > 0.0) {
                return Err(bound("radius", "must be finite and > 0"));
            }
        }
        Ok(())
    }
}
