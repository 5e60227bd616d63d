//! m x m RGB frames.

use std::path::Path;
use std::str::FromStr;

use super::atomic_write;
use super::config_text::config_to_text;
use crate::engine::State;
use crate::error::{Result, SimError};
use crate::scalar::Scalar;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum FrameMode {
    /// Three designated genome coordinates as RGB; dead cells black.
    WeightsRgb,
    /// First three chemicals as RGB.
    ChemRgb,
    EnergyGray,
    AliveMask,
}

impl FrameMode {
    pub const ALL: [FrameMode; 4] = [
        FrameMode::WeightsRgb,
        FrameMode::ChemRgb,
        FrameMode::EnergyGray,
        FrameMode::AliveMask,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            FrameMode::WeightsRgb => "weights-rgb",
            FrameMode::ChemRgb => "chem-rgb",
            FrameMode::EnergyGray => "energy-gray",
            FrameMode::AliveMask => "alive-mask",
        }
    }
}

impl FromStr for FrameMode {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        FrameMode::ALL
            .into_iter()
            .find(|m| m.as_str() == s)
            .ok_or_else(|| format!("unknown frame mode `{s}`"))
    }
}

impl std::fmt::Display for FrameMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Mode plus the value window mapped onto `[0, 255]`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FrameSpec {
    pub mode: FrameMode,
    pub lo: f64,
    pub hi: f64,
}

impl FrameSpec {
    /// Default window: weights `[-1, 1]`, chemicals `[0, 2 chem_init]`,
    /// energy `[0, e_max]` (`[0, regen_cap]` for the particle background).
    pub fn for_state<S: Scalar>(mode: FrameMode, state: &State<S>) -> Self {
        let cfg = state.config();
        let (lo, hi) = match mode {
            FrameMode::WeightsRgb => (-1.0, 1.0),
            FrameMode::ChemRgb => (0.0, (2.0 * cfg.chem_init).max(1e-9)),
            FrameMode::EnergyGray => match state {
                State::Grid(_) => (0.0, cfg.e_max.max(1e-9)),
                State::Particles(_) => (0.0, cfg.regen_cap),
            },
            FrameMode::AliveMask => (0.0, 1.0),
        };
        Self { mode, lo, hi }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.lo < self.hi) {
            return Err(SimError::Encode(format!(
                "frame window needs lo < hi, got [{}, {}]",
                self.lo, self.hi
            )));
        }
        Ok(())
    }
}

/// `clamp(round(255 (v - lo) / (hi - lo)), 0, 255)`; NaN maps to 0.
#[inline]
fn channel(v: f64, lo: f64, hi: f64) -> u8 {
    let x = (255.0 * (v - lo) / (hi - lo)).round();
    if x.is_nan() {
        0
    } else {
        x.clamp(0.0, 255.0) as u8
    }
}

/// Row-major RGB bytes, `3 m^2` long. Particles are drawn at the site they
/// occupy, higher indices on top.
pub fn render_frame<S: Scalar>(state: &State<S>, spec: &FrameSpec) -> Vec<u8> {
    let m = state.config().m;
    let mut px = vec![0u8; 3 * m * m];
    let (lo, hi) = (spec.lo, spec.hi);
    let d = state.designated();
    match state {
        State::Grid(w) => {
            let n_c = w.layout.n_c;
            for (cell, p) in px.chunks_exact_mut(3).enumerate() {
                match spec.mode {
                    FrameMode::WeightsRgb => {
                        if w.alive[cell] {
                            let g = w.genome_of(cell);
                            for (c, &k) in p.iter_mut().zip(&d) {
                                *c = channel(g[k].wide(), lo, hi);
                            }
                        }
                    }
                    FrameMode::ChemRgb => {
                        let chem = &w.chem[cell * n_c..(cell + 1) * n_c];
                        for (c, v) in p.iter_mut().zip(chem) {
                            *c = channel(v.wide(), lo, hi);
                        }
                    }
                    FrameMode::EnergyGray => p.fill(channel(w.energy[cell].wide(), lo, hi)),
                    FrameMode::AliveMask => p.fill(if w.alive[cell] { 255 } else { 0 }),
                }
            }
        }
        State::Particles(pw) => match spec.mode {
            FrameMode::EnergyGray => {
                for (p, e) in px.chunks_exact_mut(3).zip(&pw.background) {
                    p.fill(channel(e.wide(), lo, hi));
                }
            }
            FrameMode::ChemRgb => {}
            FrameMode::WeightsRgb | FrameMode::AliveMask => {
                for i in 0..pw.len() {
                    let site = pw.site_of(i);
                    let p = &mut px[3 * site..3 * site + 3];
                    if spec.mode == FrameMode::AliveMask {
                        p.fill(255);
                    } else {
                        let g = pw.genome_of(i);
                        for (c, &k) in p.iter_mut().zip(&d) {
                            *c = channel(g[k].wide(), lo, hi);
                        }
                    }
                }
            }
        },
    }
    px
}

/// PNG of an `m x m` RGB buffer with the config in a text chunk.
pub fn encode_png(rgb: &[u8], m: usize, config_text: &str) -> Result<Vec<u8>> {
    let mut out = Vec::new();
    {
        let mut enc = png::Encoder::new(&mut out, m as u32, m as u32);
        enc.set_color(png::ColorType::Rgb);
        enc.set_depth(png::BitDepth::Eight);
        enc.add_text_chunk("config".to_string(), config_text.to_string())
            .map_err(|e| SimError::Encode(e.to_string()))?;
        let mut w = enc
            .write_header()
            .map_err(|e| SimError::Encode(e.to_string()))?;
        w.write_image_data(rgb)
            .map_err(|e| SimError::Encode(e.to_string()))?;
    }
    Ok(out)
}

pub fn write_frame<S: Scalar>(state: &State<S>, spec: &FrameSpec, path: &Path) -> Result<()> {
    spec.validate()?;
    let rgb = render_frame(state, spec);
    let bytes = encode_png(&rgb, state.config().m, &config_to_text(state.config()))?;
    atomic_write(path, &bytes, Some(state.step()))
}
