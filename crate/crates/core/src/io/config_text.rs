//! `key = value` config files.
//!
//! Lines are `key = value`; `#` starts a comment. `preset = NAME` selects the
//! starting values and is applied before every other key wherever it
//! appears. Omitted keys keep the preset's value, except `theta_sig` and
//! `theta_move`, which follow `theta_death` and `theta_copy / 2`.

use std::collections::HashMap;
use std::fmt::Write;

use crate::config::{Precision, Variant, WorldConfig, PHASE_ORDER};
use crate::error::ConfigError;

trait Value: Sized {
    const EXPECTED: &'static str;
    fn parse(s: &str) -> Option<Self>;
    fn show(&self) -> String;
}

impl Value for usize {
    const EXPECTED: &'static str = "a non-negative integer";
    fn parse(s: &str) -> Option<Self> {
        s.parse().ok()
    }
    fn show(&self) -> String {
        self.to_string()
    }
}

impl Value for u64 {
    const EXPECTED: &'static str = "a non-negative integer";
    fn parse(s: &str) -> Option<Self> {
        s.parse().ok()
    }
    fn show(&self) -> String {
        self.to_string()
    }
}

impl Value for f64 {
    const EXPECTED: &'static str = "a number";
    fn parse(s: &str) -> Option<Self> {
        s.parse().ok()
    }
    fn show(&self) -> String {
        // Debug formatting round-trips exactly
        format!("{self:?}")
    }
}

impl Value for bool {
    const EXPECTED: &'static str = "true or false";
    fn parse(s: &str) -> Option<Self> {
        s.parse().ok()
    }
    fn show(&self) -> String {
        self.to_string()
    }
}

impl Value for Variant {
    const EXPECTED: &'static str = "grid, pure_energy or particles";
    fn parse(s: &str) -> Option<Self> {
        s.parse().ok()
    }
    fn show(&self) -> String {
        self.to_string()
    }
}

impl Value for Precision {
    const EXPECTED: &'static str = "f64 or f32";
    fn parse(s: &str) -> Option<Self> {
        s.parse().ok()
    }
    fn show(&self) -> String {
        self.to_string()
    }
}

macro_rules! keys {
    ($($name:ident : $ty:ty),* $(,)?) => {
        fn set_field(cfg: &mut WorldConfig, key: &str, value: &str) -> Option<Result<(), &'static str>> {
            match key {
                $(stringify!($name) => Some(
                    <$ty as Value>::parse(value)
                        .map(|v| cfg.$name = v)
                        .ok_or(<$ty as Value>::EXPECTED),
                ),)*
                _ => None,
            }
        }

        fn field_lines(cfg: &WorldConfig) -> Vec<(&'static str, String)> {
            vec![$((stringify!($name), Value::show(&cfg.$name))),*]
        }
    };
}

keys! {
    variant: Variant,
    precision: Precision,
    seed: u64,
    m: usize,
    n_h: usize,
    n_c: usize,
    n_sig_h: usize,
    e_max: f64,
    e_init: f64,
    chem_init: f64,
    theta_death: f64,
    theta_sig: f64,
    theta_copy: f64,
    e_copy: f64,
    theta_kill: f64,
    kappa_e: f64,
    kappa_c: f64,
    kappa_r: f64,
    lambda_flow: f64,
    lambda_enz: f64,
    e_release: f64,
    fixed_release: bool,
    sigma_mut: f64,
    sigma_init: f64,
    l_max: u64,
    p_init: f64,
    f_min: f64,
    move_enabled: bool,
    theta_move: f64,
    e_move: f64,
    move_fields: bool,
    diffusion_enabled: bool,
    d_chem: f64,
    evolution_enabled: bool,
    copy_argmax: bool,
    regen_rate: f64,
    regen_cap: f64,
    particles: usize,
    attn_dim: usize,
    radius: f64,
    v_max: f64,
    e_copy_particle: f64,
    particle_energy_init: f64,
    copy_all_lower: bool,
}

fn split_line(raw: &str) -> Option<&str> {
    let body = raw.split('#').next().unwrap_or("").trim();
    (!body.is_empty()).then_some(body)
}

/// Parses config text into a validated config.
pub fn parse_config(text: &str) -> Result<WorldConfig, ConfigError> {
    let mut entries = Vec::new();
    let mut preset = None;
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let Some(body) = split_line(raw) else {
            continue;
        };
        let Some((k, v)) = body.split_once('=') else {
            return Err(ConfigError::Syntax {
                line,
                text: body.to_string(),
            });
        };
        let (k, v) = (k.trim(), v.trim());
        if k.is_empty() || v.is_empty() {
            return Err(ConfigError::Syntax {
                line,
                text: body.to_string(),
            });
        }
        if k == "preset" {
            preset = Some((v.to_string(), line));
        } else {
            entries.push((k.to_string(), v.to_string(), line));
        }
    }

    let mut cfg = match &preset {
        None => WorldConfig::default(),
        Some((name, line)) => {
            WorldConfig::preset(name).ok_or_else(|| ConfigError::TypeMismatch {
                key: "preset".into(),
                line: *line,
                expected: "default, oscillation, pure_energy or particles",
                value: name.clone(),
            })?
        }
    };

    let mut lines: HashMap<String, usize> = HashMap::new();
    for (k, v, line) in &entries {
        match set_field(&mut cfg, k, v) {
            None => {
                return Err(ConfigError::UnknownKey {
                    key: k.clone(),
                    line: *line,
                })
            }
            Some(Err(expected)) => {
                return Err(ConfigError::TypeMismatch {
                    key: k.clone(),
                    line: *line,
                    expected,
                    value: v.clone(),
                })
            }
            Some(Ok(())) => {
                lines.insert(k.clone(), *line);
            }
        }
    }
    if !lines.contains_key("theta_sig") {
        cfg.theta_sig = cfg.theta_death;
    }
    if !lines.contains_key("theta_move") {
        cfg.theta_move = cfg.theta_copy / 2.0;
    }

    cfg.validate().map_err(|e| match e {
        ConfigError::Bound { key, reason, .. } => ConfigError::Bound {
            key,
            reason,
            line: lines.get(key).copied(),
        },
        other => other,
    })?;
    Ok(cfg)
}

/// Every key of `cfg`, one per line, headed by the phase order. Parsing the
/// result gives back `cfg`.
pub fn config_to_text(cfg: &WorldConfig) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "# phase order: {PHASE_ORDER}");
    for (k, v) in field_lines(cfg) {
        let _ = writeln!(out, "{k} = {v}");
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_is_default() {
        assert_eq!(parse_config("").unwrap(), WorldConfig::default());
        assert_eq!(parse_config("# nothing\n\n").unwrap().m, 100);
    }

    #[test]
    fn largest_setting() {
        let c = parse_config("m = 400\nn_h = 16").unwrap();
        assert_eq!((c.m, c.n_h), (400, 16));
    }

    #[test]
    fn bound_error_names_key_and_line() {
        let err = parse_config("m = 10\nn_c = 0\n").unwrap_err();
        assert_eq!(
            err,
            ConfigError::Bound {
                key: "n_c",
                reason: "must be >= 1".into(),
                line: Some(2)
            }
        );
        assert!(err.to_string().contains("line 2"));
    }

    #[test]
    fn unknown_and_mistyped_keys() {
        assert_eq!(
            parse_config("m = 10\nfoo = 1").unwrap_err(),
            ConfigError::UnknownKey {
                key: "foo".into(),
                line: 2
            }
        );
        assert!(matches!(
            parse_config("m = ten").unwrap_err(),
            ConfigError::TypeMismatch { line: 1, .. }
        ));
        assert!(matches!(
            parse_config("m 10").unwrap_err(),
            ConfigError::Syntax { line: 1, .. }
        ));
    }

    #[test]
    fn preset_applies_first() {
        let c = parse_config("d_chem = 0.25\npreset = oscillation\n").unwrap();
        assert!(c.diffusion_enabled && !c.evolution_enabled);
        assert_eq!(c.d_chem, 0.25);
    }

    #[test]
    fn derived_thresholds_follow() {
        let c = parse_config("theta_death = 0.3\ntheta_copy = 3.0\ne_copy = 1.0").unwrap();
        assert_eq!(c.theta_sig, 0.3);
        assert_eq!(c.theta_move, 1.5);
        let c = parse_config("theta_death = 0.3\ntheta_sig = 0.5").unwrap();
        assert_eq!(c.theta_sig, 0.5);
    }

    #[test]
    fn echo_round_trips() {
        for name in crate::config::PRESETS {
            let mut c = WorldConfig::preset(name).unwrap();
            c.sigma_mut = 0.1 + 0.2;
            c.seed = u64::MAX;
            let text = config_to_text(&c);
            assert!(text.starts_with("# phase order"));
            assert_eq!(parse_config(&text).unwrap(), c);
        }
    }
}
