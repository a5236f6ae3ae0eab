use alloc::vec::Vec;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::math::{cos, sin};
use crate::mesh::Mesh;
use crate::mesh::{cylinder, icosphere};
use crate::rng::seeded;

/// Base mesh that every family member deforms.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Template {
    Cylinder {
        rings: usize,
        segments: usize,
        radius: f64,
        half_length: f64,
    },
    Icosphere {
        level: usize,
    },
}

impl Template {
    pub fn build(&self) -> Result<Mesh> {
        match *self {
            Template::Cylinder {
                rings,
                segments,
                radius,
                half_length,
            } => {
                if rings < 2 || segments < 3 || !(radius > 0.0) || !(half_length > 0.0) {
                    return Err(Error::InvalidConfig(
                        "cylinder template needs rings >= 2, segments >= 3 and positive size".into(),
                    ));
                }
                Ok(cylinder(rings, segments, radius, half_length))
            }
            Template::Icosphere { level } => {
                if level > 6 {
                    return Err(Error::InvalidConfig("icosphere level above 6".into()));
                }
                Ok(icosphere(level))
            }
        }
    }
}

/// Deformation parameters of one family member. The bends, twist and bulge
/// are pose parameters; the two scales are subject parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ShapeParams {
    /// Arc bend of the `z > 0` half in the y–z plane, total angle in radians.
    pub bend_top: f64,
    /// Arc bend of the `z < 0` half, independent of the top half.
    pub bend_bottom: f64,
    /// Rotation about z per unit length, radians.
    pub twist: f64,
    /// Relative radial swelling at `z = 0`, fading to zero at the ends.
    pub bulge: f64,
    pub radius_scale: f64,
    pub length_scale: f64,
}

impl ShapeParams {
    pub const NEUTRAL: ShapeParams = ShapeParams {
        bend_top: 0.0,
        bend_bottom: 0.0,
        twist: 0.0,
        bulge: 0.0,
        radius_scale: 1.0,
        length_scale: 1.0,
    };

    pub fn get(&self, param: Param) -> f64 {
        match param {
            Param::BendTop => self.bend_top,
            Param::BendBottom => self.bend_bottom,
            Param::Twist => self.twist,
            Param::Bulge => self.bulge,
            Param::RadiusScale => self.radius_scale,
            Param::LengthScale => self.length_scale,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Param {
    BendTop,
    BendBottom,
    Twist,
    Bulge,
    RadiusScale,
    LengthScale,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Range {
    pub min: f64,
    pub max: f64,
}

impl Range {
    pub const fn new(min: f64, max: f64) -> Self {
        Self { min, max }
    }

    pub fn contains(&self, x: f64) -> bool {
        self.min <= x && x <= self.max
    }

    fn sample(&self, rng: &mut impl Rng) -> f64 {
        if self.max > self.min {
            rng.random_range(self.min..self.max)
        } else {
            self.min
        }
    }

    fn valid(&self) -> bool {
        self.min.is_finite() && self.max.is_finite() && self.min <= self.max
    }
}

/// Parameter interval reserved for the test split.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HoldoutBand {
    pub param: Param,
    pub range: Range,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ShapeFamilyConfig {
    pub template: Template,
    pub bend_top: Range,
    pub bend_bottom: Range,
    pub twist: Range,
    pub bulge: Range,
    pub radius_scale: Range,
    pub length_scale: Range,
    pub samples: usize,
    pub holdout: Vec<HoldoutBand>,
    pub seed: u64,
}

impl Default for ShapeFamilyConfig {
    fn default() -> Self {
        Self {
            template: Template::Cylinder {
                rings: 19,
                segments: 16,
                radius: 0.3,
                half_length: 1.0,
            },
            bend_top: Range::new(-0.9, 0.9),
            bend_bottom: Range::new(-0.9, 0.9),
            twist: Range::new(-0.5, 0.5),
            bulge: Range::new(-0.2, 0.2),
            radius_scale: Range::new(0.8, 1.2),
            length_scale: Range::new(0.9, 1.1),
            samples: 300,
            holdout: alloc::vec![
                HoldoutBand {
                    param: Param::BendTop,
                    range: Range::new(0.2, 0.4),
                },
                HoldoutBand {
                    param: Param::RadiusScale,
                    range: Range::new(0.95, 1.0),
                },
            ],
            seed: 0,
        }
    }
}

impl ShapeFamilyConfig {
    pub fn validate(&self) -> Result<()> {
        let ranges = [
            self.bend_top,
            self.bend_bottom,
            self.twist,
            self.bulge,
            self.radius_scale,
            self.length_scale,
        ];
        if ranges.iter().any(|r| !r.valid()) || self.holdout.iter().any(|b| !b.range.valid()) {
            return Err(Error::InvalidConfig(
                "parameter ranges must be finite with min <= max".into(),
            ));
        }
        if self.radius_scale.min <= 0.0 || self.length_scale.min <= 0.0 {
            return Err(Error::InvalidConfig("scales must be positive".into()));
        }
        if self.bulge.min <= -1.0 {
            return Err(Error::InvalidConfig("bulge must stay above -1".into()));
        }
        Ok(())
    }

    pub fn is_held_out(&self, params: &ShapeParams) -> bool {
        self.holdout.iter().any(|b| b.range.contains(params.get(b.param)))
    }
}

#[derive(Debug, Clone)]
pub struct FamilyMember {
    pub mesh: Mesh,
    pub params: ShapeParams,
}

#[derive(Debug, Clone)]
pub struct Family {
    pub template: Mesh,
    pub train: Vec<FamilyMember>,
    pub test: Vec<FamilyMember>,
}

/// Deforms `template` by `params`. The template is read in its own frame:
/// z is the long axis, bends act in the y–z plane. Neutral parameters return
/// the template unchanged.
pub fn deform(template: &Mesh, params: &ShapeParams) -> Result<Mesh> {
    let half = template
        .vertices()
        .iter()
        .map(|v| v[2].abs())
        .fold(0.0_f64, f64::max)
        .max(f64::MIN_POSITIVE);
    template.map_vertices(|v| deform_point(*v, params, half))
}

fn deform_point(v: [f64; 3], p: &ShapeParams, half: f64) -> [f64; 3] {
    let t = v[2] / half;
    let swell = p.radius_scale * (1.0 + p.bulge * cos(core::f64::consts::FRAC_PI_2 * t));
    let (x, y) = (v[0] * swell, v[1] * swell);
    let angle = p.twist * v[2];
    let (ca, sa) = (cos(angle), sin(angle));
    let (x, y) = (ca * x - sa * y, sa * x + ca * y);
    let z = v[2] * p.length_scale;
    let bend = if z >= 0.0 { p.bend_top } else { p.bend_bottom };
    let kappa = bend / (half * p.length_scale);
    if kappa == 0.0 {
        return [x, y, z];
    }
    let r = 1.0 / kappa;
    let theta = kappa * z;
    [x, r - (r - y) * cos(theta), (r - y) * sin(theta)]
}

pub fn sample_params(config: &ShapeFamilyConfig, rng: &mut impl Rng) -> ShapeParams {
    ShapeParams {
        bend_top: config.bend_top.sample(rng),
        bend_bottom: config.bend_bottom.sample(rng),
        twist: config.twist.sample(rng),
        bulge: config.bulge.sample(rng),
        radius_scale: config.radius_scale.sample(rng),
        length_scale: config.length_scale.sample(rng),
    }
}

/// `config.samples` members drawn from the seeded parameter ranges. Members
/// whose parameters fall into any holdout band form the test split.
pub fn generate_family(config: &ShapeFamilyConfig) -> Result<Family> {
    config.validate()?;
    let template = config.template.build()?;
    let mut rng = seeded(config.seed);
    let mut train = Vec::new();
    let mut test = Vec::new();
    for _ in 0..config.samples {
        let params = sample_params(config, &mut rng);
        let member = FamilyMember {
            mesh: deform(&template, &params)?,
            params,
        };
        if config.is_held_out(&params) {
            test.push(member);
        } else {
            train.push(member);
        }
    }
    Ok(Family { template, train, test })
}
