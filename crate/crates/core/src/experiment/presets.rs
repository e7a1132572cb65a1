use serde::{Deserialize, Serialize};

use crate::couplings::InteractionLaw;
use crate::geometry::{CloudGeometry, CloudShape};

/// One of the three experimental parameter sets.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PresetName {
    Weak,
    Strong,
    Vdw,
}

impl PresetName {
    pub const ALL: [PresetName; 3] = [PresetName::Weak, PresetName::Strong, PresetName::Vdw];

    pub fn preset(self) -> &'static Preset {
        match self {
            PresetName::Weak => &PRESETS[0],
            PresetName::Strong => &PRESETS[1],
            PresetName::Vdw => &PRESETS[2],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Preset {
    pub name: PresetName,
    pub label: &'static str,
    pub n: usize,
    pub r_bl_um: f64,
    /// Cloud radii in um as tabulated.
    pub radii_um: [f64; 3],
    pub law: &'static str,
    pub a0_um: f64,
    pub j_median_mhz: f64,
    /// Factor applied to the radii to obtain box half-extents that reproduce
    /// `j_median_mhz` under random sequential adsorption.
    pub box_scale: f64,
}

pub const PRESETS: [Preset; 3] = [
    Preset {
        name: PresetName::Weak,
        label: "weak disorder",
        n: 6895,
        r_bl_um: 4.6,
        radii_um: [59.0, 44.0, 36.0],
        law: "dipolar-48S48P",
        a0_um: 6.8,
        j_median_mhz: 2.8,
        box_scale: 2.34,
    },
    Preset {
        name: PresetName::Strong,
        label: "strong disorder",
        n: 775,
        r_bl_um: 5.0,
        radii_um: [59.0, 34.0, 30.0],
        law: "dipolar-48S48P",
        a0_um: 11.2,
        j_median_mhz: 1.1,
        box_scale: 1.83,
    },
    Preset {
        name: PresetName::Vdw,
        label: "van der Waals",
        n: 2907,
        r_bl_um: 5.7,
        radii_um: [69.0, 43.0, 37.0],
        law: "vdw-61S62S",
        a0_um: 7.8,
        j_median_mhz: 0.5,
        box_scale: 2.55,
    },
];

impl Preset {
    pub fn interaction(&self) -> InteractionLaw {
        InteractionLaw::preset(self.law).expect("preset law names are valid")
    }

    /// Box cloud at the preset size.
    pub fn geometry(&self) -> CloudGeometry {
        CloudGeometry {
            shape: CloudShape::Box,
            radii: self.radii_um.map(|r| r * self.box_scale),
        }
    }

    /// Box holding `n` spins at the preset density.
    pub fn geometry_for(&self, n: usize) -> CloudGeometry {
        self.geometry().scaled((n as f64 / self.n as f64).cbrt())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn density_is_kept_at_desk_scale() {
        let p = PresetName::Strong.preset();
        let full = p.geometry().density(p.n);
        let small = p.geometry_for(100).density(100);
        assert!((full - small).abs() < 1e-12 * full);
    }

    #[test]
    fn laws_resolve() {
        for name in PresetName::ALL {
            let p = name.preset();
            assert_eq!(p.name, name);
            let _ = p.interaction();
        }
        assert_eq!(PresetName::Vdw.preset().interaction().exponent, 6);
    }
}
