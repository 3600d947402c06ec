use serde::{Deserialize, Serialize};

use super::{ConvexKind, ConvexSpec};
use crate::error::{Error, Result};

/// The `[convex]` block of a run configuration: a catalog name plus its
/// parameters. Parameters that do not belong to the chosen kind are
/// rejected.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConvexConfig {
    pub kind: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub dim: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub lambda: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub center: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub linear: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub lower: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub upper: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub radius: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub normal: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub offset: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub normals: Option<Vec<Vec<f64>>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub offsets: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub scale: Option<f64>,
    /// u0
    #[serde(skip_serializing_if = "Option::is_none")]
    pub anchor: Option<Vec<f64>>,
    /// û0
    #[serde(skip_serializing_if = "Option::is_none")]
    pub anchor_slope: Option<Vec<f64>>,
    /// r0
    #[serde(skip_serializing_if = "Option::is_none")]
    pub interior_radius: Option<f64>,
    /// c0
    #[serde(skip_serializing_if = "Option::is_none")]
    pub interior_bound: Option<f64>,
}

macro_rules! take {
    ($cfg:expr, $field:ident) => {
        $cfg.$field.clone().ok_or_else(|| {
            Error::config(format!(
                "convex.{} is required for kind = \"{}\"",
                stringify!($field),
                $cfg.kind
            ))
        })?
    };
}

impl ConvexConfig {
    pub fn build(&self) -> Result<ConvexSpec> {
        let allowed: &[&str] = match self.kind.as_str() {
            "zero" => &["dim"],
            "quadratic" => &["lambda", "center", "linear", "dim"],
            "box" => &["lower", "upper"],
            "ball" => &["center", "radius"],
            "halfspace" => &["normal", "offset"],
            "polyhedron" => &["normals", "offsets"],
            "scaled_norm" => &["scale", "dim"],
            other => {
                return Err(Error::config(format!(
                    "convex.kind = \"{other}\" is not in the catalog (zero, quadratic, box, ball, halfspace, polyhedron, scaled_norm)"
                )))
            }
        };
        for (name, present) in self.parameter_presence() {
            if present && !allowed.contains(&name) {
                return Err(Error::config(format!(
                    "convex.{name} is not a parameter of kind = \"{}\"",
                    self.kind
                )));
            }
        }
        let kind = match self.kind.as_str() {
            "zero" => ConvexKind::Zero { dim: self.dim.unwrap_or(1) },
            "quadratic" => {
                let lambda = take!(self, lambda);
                let center = match (&self.center, self.dim) {
                    (Some(c), _) => c.clone(),
                    (None, d) => vec![0.0; d.unwrap_or(1)],
                };
                ConvexKind::Quadratic { lambda, center, linear: self.linear.clone().unwrap_or_default() }
            }
            "box" => ConvexKind::Box { lower: take!(self, lower), upper: take!(self, upper) },
            "ball" => ConvexKind::Ball { center: take!(self, center), radius: take!(self, radius) },
            "halfspace" => ConvexKind::Halfspace { normal: take!(self, normal), offset: take!(self, offset) },
            "polyhedron" => ConvexKind::Polyhedron { normals: take!(self, normals), offsets: take!(self, offsets) },
            "scaled_norm" => ConvexKind::ScaledNorm { scale: take!(self, scale), dim: self.dim.unwrap_or(1) },
            _ => unreachable!(),
        };
        let mut spec = ConvexSpec::new(kind)?;
        match (&self.anchor, &self.anchor_slope) {
            (None, None) => {}
            (Some(u0), slope) => {
                let slope = slope.clone().unwrap_or_else(|| vec![0.0; u0.len()]);
                spec = spec.with_anchor(u0.clone(), slope)?;
            }
            (None, Some(_)) => return Err(Error::config("convex.anchor_slope given without convex.anchor")),
        }
        match (self.interior_radius, self.interior_bound) {
            (None, None) => {}
            (Some(r0), c0) => {
                let c0 = match c0 {
                    Some(c) => c,
                    None if spec.is_indicator() => 0.0,
                    None => return Err(Error::config("convex.interior_bound is required when interior_radius is set")),
                };
                spec = spec.with_interior(r0, c0)?;
            }
            (None, Some(_)) => return Err(Error::config("convex.interior_bound given without convex.interior_radius")),
        }
        Ok(spec)
    }

    /// The same block with anchor and interior ball made explicit.
    pub fn resolved(&self, spec: &ConvexSpec) -> Self {
        let mut out = self.clone();
        out.anchor = Some(spec.anchor().point.clone());
        out.anchor_slope = Some(spec.anchor().slope.clone());
        if let Some(b) = spec.interior() {
            out.interior_radius = Some(b.radius);
            out.interior_bound = Some(b.bound);
        }
        out
    }

    fn parameter_presence(&self) -> [(&'static str, bool); 12] {
        [
            ("dim", self.dim.is_some()),
            ("lambda", self.lambda.is_some()),
            ("center", self.center.is_some()),
            ("linear", self.linear.is_some()),
            ("lower", self.lower.is_some()),
            ("upper", self.upper.is_some()),
            ("radius", self.radius.is_some()),
            ("normal", self.normal.is_some()),
            ("offset", self.offset.is_some()),
            ("normals", self.normals.is_some()),
            ("offsets", self.offsets.is_some()),
            ("scale", self.scale.is_some()),
        ]
    }
}

/// The shipped catalog, one representative per family plus a few
/// variations (infinite bounds, a non-normalized anchor, a tilted box).
pub fn catalog() -> Vec<(&'static str, ConvexSpec)> {
    let inf = f64::INFINITY;
    let mk = |k| ConvexSpec::new(k).expect("catalog entries are valid");
    vec![
        ("zero", mk(ConvexKind::Zero { dim: 2 })),
        ("quadratic", mk(ConvexKind::Quadratic { lambda: 1.0, center: vec![0.0], linear: vec![] })),
        (
            "quadratic_linear",
            mk(ConvexKind::Quadratic { lambda: 2.5, center: vec![0.5, -1.0], linear: vec![1.0, 0.25] })
                .with_anchor(vec![0.0, 0.0], vec![-0.25, 2.75])
                .expect("anchor on the graph"),
        ),
        ("box", mk(ConvexKind::Box { lower: vec![-1.0], upper: vec![1.0] })),
        ("half_line", mk(ConvexKind::Box { lower: vec![0.0], upper: vec![inf] })),
        ("box_2d", mk(ConvexKind::Box { lower: vec![-1.0, -inf], upper: vec![2.0, 0.5] })),
        (
            "box_tilted",
            mk(ConvexKind::Box { lower: vec![-1.0], upper: vec![1.0] })
                .with_anchor(vec![1.0], vec![0.75])
                .expect("boundary anchor"),
        ),
        ("ball", mk(ConvexKind::Ball { center: vec![0.0, 0.0], radius: 1.0 })),
        ("halfspace", mk(ConvexKind::Halfspace { normal: vec![1.0, 2.0], offset: 1.0 })),
        (
            "polyhedron",
            mk(ConvexKind::Polyhedron {
                normals: vec![vec![-1.0, 0.0], vec![0.0, -1.0], vec![1.0, 1.0]],
                offsets: vec![0.0, 0.0, 1.0],
            }),
        ),
        ("scaled_norm", mk(ConvexKind::ScaledNorm { scale: 0.7, dim: 2 })),
    ]
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(src: &str) -> Result<ConvexSpec> {
        let cfg: ConvexConfig = toml::from_str(src).map_err(Error::from)?;
        cfg.build()
    }

    #[test]
    fn box_from_toml_with_infinite_bound() {
        let spec = parse("kind = \"box\"\nlower = [0.0]\nupper = [inf]\n").unwrap();
        assert_eq!(spec.prox(&[-2.0], 1.0), vec![0.0]);
        assert_eq!(spec.prox(&[7.0], 1.0), vec![7.0]);
    }

    #[test]
    fn foreign_parameter_is_named() {
        let err = parse("kind = \"box\"\nlower = [0.0]\nupper = [1.0]\nradius = 2.0\n").unwrap_err();
        assert!(err.to_string().contains("convex.radius"), "{err}");
    }

    #[test]
    fn missing_parameter_is_named() {
        let err = parse("kind = \"ball\"\ncenter = [0.0]\n").unwrap_err();
        assert!(err.to_string().contains("convex.radius"), "{err}");
    }

    #[test]
    fn unknown_key_is_rejected() {
        assert!(parse("kind = \"zero\"\nfoo = 1\n").is_err());
    }

    #[test]
    fn catalog_is_well_formed() {
        for (name, spec) in catalog() {
            let u0 = &spec.anchor().point;
            assert!(spec.value(u0).is_finite(), "{name}");
            assert!(spec.subgrad_at(u0).is_some(), "{name}");
        }
    }
}
