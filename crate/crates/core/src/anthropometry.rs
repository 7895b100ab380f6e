//! Segment parameters of the human lower extremity from stature and body weight.
//!
//! All regressions take height in inches and weight in pounds and produce
//! imperial quantities; [`SegmentSet::to_si`] converts once for the dynamics.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const KG_PER_LB: f64 = 0.45359237;
pub const M_PER_IN: f64 = 0.0254;
pub const KG_M2_PER_LB_IN2: f64 = KG_PER_LB * M_PER_IN * M_PER_IN;

/// Standard gravity used by every model built here, m/s².
pub const GRAVITY: f64 = 9.81;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Subject {
    /// Stature, inches.
    pub height: f64,
    /// Body weight, pounds.
    pub weight: f64,
}

impl Subject {
    pub fn new(height: f64, weight: f64) -> Result<Self> {
        let s = Subject { height, weight };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.height.is_finite() && self.height > 0.0) {
            return Err(Error::domain(format!("subject height must be positive, got {}", self.height)));
        }
        if !(self.weight.is_finite() && self.weight > 0.0) {
            return Err(Error::domain(format!("subject weight must be positive, got {}", self.weight)));
        }
        Ok(())
    }

    /// Stature-to-weight ratio `H * W^(-1/3)`.
    pub fn stature_ratio(&self) -> f64 {
        self.height * self.weight.powf(-1.0 / 3.0)
    }
}

/// One body segment in imperial units.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Segment {
    /// lb/ft³
    pub density: f64,
    /// ft³
    pub volume: f64,
    /// lb
    pub mass: f64,
    /// in
    pub length: f64,
    /// Distance of the center of mass from the proximal joint, in.
    pub com: f64,
    /// Principal moments about the center of mass, lb·in².
    pub inertia: [f64; 3],
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SegmentSet {
    pub subject: Subject,
    pub stature_ratio: f64,
    pub body_density: f64,
    pub body_volume: f64,
    pub thigh: Segment,
    pub shank: Segment,
    pub foot: Segment,
    /// Ankle to sole of the foot, in.
    pub ankle_height: f64,
}

/// One body segment in SI units (kg, m, kg·m²).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SegmentSi {
    pub mass: f64,
    pub length: f64,
    pub com: f64,
    pub inertia: [f64; 3],
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SegmentSetSi {
    pub thigh: SegmentSi,
    pub shank: SegmentSi,
    pub foot: SegmentSi,
    pub ankle_height: f64,
}

pub fn body_density(subject: &Subject) -> Result<f64> {
    subject.validate()?;
    Ok(0.6905 + 0.0297 * subject.stature_ratio())
}

fn segment(density: f64, volume: f64, length: f64, com_fraction: f64, gyration: [f64; 3]) -> Segment {
    let mass = volume * density;
    Segment {
        density,
        volume,
        mass,
        length,
        com: com_fraction * length,
        inertia: gyration.map(|k| mass * (k * length).powi(2)),
    }
}

pub fn segment_parameters(subject: &Subject) -> Result<SegmentSet> {
    let body_density = body_density(subject)?;
    let h = subject.height;
    let body_volume = subject.weight / body_density;

    let thigh = segment(1.035 + 0.814 * body_density, 0.0922 * body_volume, 0.245 * h, 0.41, [0.124, 0.267, 0.267]);
    let shank = segment(1.065 + body_density, 0.0464 * body_volume, 0.285 * h, 0.393, [0.281, 0.114, 0.275]);
    let foot = segment(1.071 + body_density, 0.0124 * body_volume, 0.152 * h, 0.445, [0.124, 0.245, 0.257]);

    Ok(SegmentSet {
        subject: *subject,
        stature_ratio: subject.stature_ratio(),
        body_density,
        body_volume,
        thigh,
        shank,
        foot,
        ankle_height: 0.043 * h,
    })
}

impl Segment {
    pub fn to_si(&self) -> SegmentSi {
        SegmentSi {
            mass: self.mass * KG_PER_LB,
            length: self.length * M_PER_IN,
            com: self.com * M_PER_IN,
            inertia: self.inertia.map(|i| i * KG_M2_PER_LB_IN2),
        }
    }
}

impl SegmentSi {
    /// Inverse of [`Segment::to_si`] for the fields that have an SI counterpart.
    pub fn to_imperial(&self) -> (f64, f64, f64, [f64; 3]) {
        (self.mass / KG_PER_LB, self.length / M_PER_IN, self.com / M_PER_IN, self.inertia.map(|i| i / KG_M2_PER_LB_IN2))
    }
}

impl SegmentSet {
    pub fn to_si(&self) -> SegmentSetSi {
        SegmentSetSi {
            thigh: self.thigh.to_si(),
            shank: self.shank.to_si(),
            foot: self.foot.to_si(),
            ankle_height: self.ankle_height * M_PER_IN,
        }
    }

    /// Checks positivity and ordering constraints on every segment.
    pub fn check_invariants(&self) -> Result<()> {
        let scalars = [self.body_density, self.body_volume, self.ankle_height];
        if scalars.iter().any(|v| !(v.is_finite() && *v > 0.0)) {
            return Err(Error::domain("body density, volume and ankle height must be positive"));
        }
        for (name, s) in [("thigh", &self.thigh), ("shank", &self.shank), ("foot", &self.foot)] {
            let positive = [s.density, s.volume, s.mass, s.length, s.com];
            if positive.iter().any(|v| !(v.is_finite() && *v > 0.0)) {
                return Err(Error::domain(format!("{name}: nonpositive parameter")));
            }
            if s.com >= s.length {
                return Err(Error::domain(format!("{name}: center of mass beyond segment length")));
            }
            if s.inertia.iter().any(|i| *i < 0.0) {
                return Err(Error::domain(format!("{name}: negative principal inertia")));
            }
        }
        Ok(())
    }
}
