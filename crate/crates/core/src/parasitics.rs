// SPDX-License-Identifier: Apache-2.0

//! Interconnect parasitics for crossbar wiring.
//!
//! Thin-wire resistivity combines Fuchs-Sondheimer surface scattering and
//! Mayadas-Shatzkes grain-boundary scattering through Matthiessen's rule.
//! Line capacitance uses the Sakurai-Tamaru closed form. Both are reduced to
//! a per-bitcell [`ParasiticSegment`] that the crossbar network and the
//! Elmore delay estimate consume.

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Vacuum permittivity in F/m.
pub const EPSILON_0: f64 = 8.854_187_812_8e-12;

/// Default inter-metal dielectric permittivity, 20 ε₀.
pub const DEFAULT_EPSILON: f64 = 20.0 * EPSILON_0;

/// Layout unit λ of the reference technology, in metres.
pub const LAMBDA: f64 = 9e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ParasiticError {
    #[error("domain error: {param} = {value:e} ({reason})")]
    Domain {
        param: &'static str,
        value: f64,
        reason: &'static str,
    },
}

fn domain(param: &'static str, value: f64, reason: &'static str) -> ParasiticError {
    ParasiticError::Domain {
        param,
        value,
        reason,
    }
}

/// Average grain size used by the grain-boundary scattering term.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GrainSize {
    /// Grain size tracks the wire width.
    EqualToWidth,
    /// Fixed grain size in metres.
    Fixed(f64),
}

/// Scattering constants of the interconnect metal.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MaterialParams {
    /// Bulk resistivity, Ω·m.
    pub rho_bulk: f64,
    /// Electron mean free path, m.
    pub mfp_l0: f64,
    /// Specular surface scattering fraction.
    pub specular_p: f64,
    /// Grain-boundary reflection probability.
    pub grain_reflect_r: f64,
    pub grain_size: GrainSize,
}

impl Default for MaterialParams {
    fn default() -> Self {
        Self::copper()
    }
}

impl MaterialParams {
    /// Copper with ρ = 1.9e-9 Ω·m, l₀ = 39 nm, p = 0.25, R = 0.3, d = W.
    pub fn copper() -> Self {
        Self {
            rho_bulk: 1.9e-9,
            mfp_l0: 39e-9,
            specular_p: 0.25,
            grain_reflect_r: 0.3,
            grain_size: GrainSize::EqualToWidth,
        }
    }

    /// Same scattering constants with the textbook bulk copper resistivity.
    pub fn copper_textbook_bulk() -> Self {
        Self {
            rho_bulk: 1.7e-8,
            ..Self::copper()
        }
    }

    pub fn validate(&self) -> Result<(), ParasiticError> {
        if !(self.rho_bulk > 0.0 && self.rho_bulk.is_finite()) {
            return Err(domain("rho_bulk", self.rho_bulk, "must be positive"));
        }
        if !(self.mfp_l0 > 0.0 && self.mfp_l0.is_finite()) {
            return Err(domain("mfp_l0", self.mfp_l0, "must be positive"));
        }
        if !(0.0..=1.0).contains(&self.specular_p) {
            return Err(domain("specular_p", self.specular_p, "must lie in [0, 1]"));
        }
        if !(self.grain_reflect_r > 0.0 && self.grain_reflect_r < 1.0) {
            return Err(domain(
                "grain_reflect_r",
                self.grain_reflect_r,
                "must lie in (0, 1)",
            ));
        }
        if let GrainSize::Fixed(d) = self.grain_size {
            if !(d > 0.0 && d.is_finite()) {
                return Err(domain("grain_size", d, "must be positive"));
            }
        }
        Ok(())
    }
}

/// Physical dimensions of one interconnect line. All lengths in metres.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WireGeometry {
    pub length: f64,
    pub width: f64,
    pub thickness: f64,
    /// Spacing to the neighbouring wire on the same layer.
    pub spacing: f64,
    /// Gap to the adjacent metal layer.
    pub layer_gap: f64,
}

impl Default for WireGeometry {
    /// 4λ wide, 4λ spaced, 22 nm thick wire with a 20 nm layer gap and a
    /// length of one ideal bitcell pitch.
    fn default() -> Self {
        Self {
            length: 40.0 * LAMBDA,
            width: 4.0 * LAMBDA,
            thickness: 22e-9,
            spacing: 4.0 * LAMBDA,
            layer_gap: 20e-9,
        }
    }
}

impl WireGeometry {
    pub fn with_length(self, length: f64) -> Self {
        Self { length, ..self }
    }

    pub fn validate(&self) -> Result<(), ParasiticError> {
        let fields = [
            ("length", self.length),
            ("width", self.width),
            ("thickness", self.thickness),
            ("spacing", self.spacing),
            ("layer_gap", self.layer_gap),
        ];
        for (name, v) in fields {
            if !(v > 0.0 && v.is_finite()) {
                return Err(domain(name, v, "must be positive"));
            }
        }
        Ok(())
    }
}

/// Scattering-corrected resistivity and its components.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Resistivity {
    pub rho_eff: f64,
    pub ratio_fs: f64,
    pub ratio_ms: f64,
    pub alpha: f64,
}

/// Series resistance and shunt capacitance of one bitcell pitch of wire.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ParasiticSegment {
    pub r_seg: f64,
    pub c_seg: f64,
    pub rho_eff: f64,
    pub ratio_fs: f64,
    pub ratio_ms: f64,
    pub alpha: f64,
}

impl ParasiticSegment {
    /// A segment with no resistance or capacitance.
    pub fn ideal() -> Self {
        Self {
            r_seg: 0.0,
            c_seg: 0.0,
            rho_eff: 0.0,
            ratio_fs: 1.0,
            ratio_ms: 1.0,
            alpha: 0.0,
        }
    }

    /// Same diagnostics with resistance and capacitance multiplied by `factor`.
    pub fn scaled(&self, factor: f64) -> Self {
        Self {
            r_seg: self.r_seg * factor,
            c_seg: self.c_seg * factor,
            ..*self
        }
    }
}

/// `ln(1 + 1/alpha)` without losing digits when alpha is small or large.
fn ln_one_plus_inv(alpha: f64) -> f64 {
    if alpha < 1.0 {
        alpha.ln_1p() - alpha.ln()
    } else {
        (1.0 / alpha).ln_1p()
    }
}

/// Fuchs-Sondheimer surface-scattering ratio ρ_FS/ρ_bulk.
pub fn surface_scattering_ratio(width: f64, mat: &MaterialParams) -> f64 {
    1.0 + (1.0 - mat.specular_p) * mat.mfp_l0 / width
}

/// Mayadas-Shatzkes grain-boundary ratio ρ_MS/ρ_bulk as a function of α.
pub fn grain_boundary_ratio(alpha: f64) -> Result<f64, ParasiticError> {
    if !(alpha > 0.0 && alpha.is_finite()) {
        return Err(domain("alpha", alpha, "must be positive and finite"));
    }
    let bracket = 1.0 - 1.5 * alpha + 3.0 * alpha * alpha
        - 3.0 * alpha.powi(3) * ln_one_plus_inv(alpha);
    if !(bracket > 0.0 && bracket.is_finite()) {
        return Err(domain("alpha", alpha, "grain-boundary bracket is not positive"));
    }
    Ok(1.0 / bracket)
}

pub fn effective_resistivity(
    geom: &WireGeometry,
    mat: &MaterialParams,
) -> Result<Resistivity, ParasiticError> {
    mat.validate()?;
    if !(geom.width > 0.0 && geom.width.is_finite()) {
        return Err(domain("width", geom.width, "must be positive"));
    }
    let grain = match mat.grain_size {
        GrainSize::EqualToWidth => geom.width,
        GrainSize::Fixed(d) => d,
    };
    let ratio_fs = surface_scattering_ratio(geom.width, mat);
    let alpha = (mat.mfp_l0 / grain) * mat.grain_reflect_r / (1.0 - mat.grain_reflect_r);
    let ratio_ms = grain_boundary_ratio(alpha)?;
    // Matthiessen's rule: excess resistivities add.
    let rho_eff = mat.rho_bulk * (1.0 + (ratio_fs - 1.0) + (ratio_ms - 1.0));
    if !rho_eff.is_finite() {
        return Err(domain("rho_eff", rho_eff, "non-finite resistivity"));
    }
    Ok(Resistivity {
        rho_eff,
        ratio_fs,
        ratio_ms,
        alpha,
    })
}

/// R = ρ·L/(W·T).
pub fn wire_resistance(geom: &WireGeometry, rho_eff: f64) -> f64 {
    rho_eff * geom.length / (geom.width * geom.thickness)
}

/// Sakurai-Tamaru line capacitance per unit length, F/m.
pub fn capacitance_per_length(geom: &WireGeometry, epsilon: f64) -> Result<f64, ParasiticError> {
    if !(geom.layer_gap > 0.0) {
        return Err(domain("layer_gap", geom.layer_gap, "must be positive"));
    }
    if !(geom.spacing > 0.0) {
        return Err(domain("spacing", geom.spacing, "must be positive"));
    }
    let w_h = geom.width / geom.layer_gap;
    let t_h = geom.thickness / geom.layer_gap;
    let s_h = geom.spacing / geom.layer_gap;
    let ground = 0.5 * (1.15 * w_h + 2.8 * w_h.powf(0.222));
    let coupling = 2.0 * (0.03 * w_h + 0.83 * t_h - 0.07 * t_h.powf(0.222)) * s_h.powf(-1.34);
    Ok(epsilon * (ground + coupling))
}

/// Parasitics of one wire pitch. `geom.length` is ignored in favour of `pitch`.
pub fn segment_parasitics(
    pitch: f64,
    geom: &WireGeometry,
    mat: &MaterialParams,
    epsilon: f64,
) -> Result<ParasiticSegment, ParasiticError> {
    if !(pitch > 0.0 && pitch.is_finite()) {
        return Err(domain("pitch", pitch, "must be positive"));
    }
    let geom = geom.with_length(pitch);
    geom.validate()?;
    let rho = effective_resistivity(&geom, mat)?;
    Ok(ParasiticSegment {
        r_seg: wire_resistance(&geom, rho.rho_eff),
        c_seg: capacitance_per_length(&geom, epsilon)? * pitch,
        rho_eff: rho.rho_eff,
        ratio_fs: rho.ratio_fs,
        ratio_ms: rho.ratio_ms,
        alpha: rho.alpha,
    })
}

/// Elmore delay of a uniform RC ladder of `n_segments` sections driving `c_load`.
///
/// Node `i` (1-based from the driver) sees `i·r_seg` of upstream resistance.
pub fn elmore_delay(n_segments: usize, r_seg: f64, c_seg: f64, c_load: f64) -> f64 {
    let n = n_segments as f64;
    r_seg * c_seg * n * (n + 1.0) / 2.0 + n * r_seg * c_load
}
