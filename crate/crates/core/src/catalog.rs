//! Built-in reference densities.
//!
//! ```text
//! uniform         1
//! tent            4|x - 1/2|                       zero of order 1 at 1/2
//! quadratic-zero  ∝ |x - 1/2|²                     zero of order 2 at 1/2
//! inverse-sqrt    ∝ x^{-1/2}                       singular at 0, λ = 1/2
//! mixed           ∝ x^{-1/2} on (0, 1/2),
//!                   8|x - 3/4| on [1/2, 1)         singular at 0, zero at 3/4
//! gap             3/2 off [1/3, 2/3], 0 on it      vanishes on an interval
//! ```
//!
//! The same models ship as TOML files under `data/models/`.

use crate::density::{DensityModel, DensitySpec, Form, Piece, SingularPoint, ZeroPoint};
use crate::error::{Error, Result};

/// Names accepted by [`spec`] and [`model`].
pub const NAMES: [&str; 6] = [
    "uniform",
    "tent",
    "quadratic-zero",
    "inverse-sqrt",
    "mixed",
    "gap",
];

fn piece(a: f64, b: f64, form: Form) -> Piece {
    Piece {
        interval: [a, b],
        form,
    }
}

fn power(coefficient: f64, center: f64, exponent: f64) -> Form {
    Form::Power {
        coefficient,
        center,
        exponent,
    }
}

/// Unnormalized description of a built-in model.
pub fn spec(name: &str) -> Result<DensitySpec> {
    let (pieces, zeros, singulars) = match name {
        "uniform" => (
            vec![piece(0.0, 1.0, Form::Constant { value: 1.0 })],
            vec![],
            vec![],
        ),
        "tent" => (
            vec![piece(0.0, 1.0, power(4.0, 0.5, 1.0))],
            vec![ZeroPoint {
                location: 0.5,
                order: 1,
                lower: 4.0,
                upper: 4.0,
                radius: 0.25,
            }],
            vec![],
        ),
        "quadratic-zero" => (
            vec![piece(0.0, 1.0, power(1.0, 0.5, 2.0))],
            vec![ZeroPoint {
                location: 0.5,
                order: 2,
                lower: 1.0,
                upper: 1.0,
                radius: 0.25,
            }],
            vec![],
        ),
        "inverse-sqrt" => (
            vec![piece(0.0, 1.0, power(1.0, 0.0, -0.5))],
            vec![],
            vec![SingularPoint {
                location: 0.0,
                exponent: -0.5,
                coefficient: 1.0,
            }],
        ),
        "mixed" => (
            vec![
                piece(0.0, 0.5, power(1.0, 0.0, -0.5)),
                piece(0.5, 1.0, power(8.0, 0.75, 1.0)),
            ],
            vec![ZeroPoint {
                location: 0.75,
                order: 1,
                lower: 8.0,
                upper: 8.0,
                radius: 0.2,
            }],
            vec![SingularPoint {
                location: 0.0,
                exponent: -0.5,
                coefficient: 1.0,
            }],
        ),
        "gap" => (
            vec![
                piece(0.0, 1.0 / 3.0, Form::Constant { value: 1.5 }),
                piece(1.0 / 3.0, 2.0 / 3.0, Form::Constant { value: 0.0 }),
                piece(2.0 / 3.0, 1.0, Form::Constant { value: 1.5 }),
            ],
            vec![],
            vec![],
        ),
        other => {
            return Err(Error::domain(format!(
                "unknown built-in model `{other}` (known: {})",
                NAMES.join(", ")
            )))
        }
    };
    Ok(DensitySpec {
        id: name.to_string(),
        description: None,
        pieces,
        zeros,
        singulars,
    })
}

/// Normalized built-in model.
pub fn model(name: &str) -> Result<DensityModel> {
    DensityModel::from_spec(&spec(name)?)
}

fn builtin(name: &str) -> DensityModel {
    model(name).expect("built-in models are well formed")
}

pub fn uniform() -> DensityModel {
    builtin("uniform")
}

pub fn tent() -> DensityModel {
    builtin("tent")
}

pub fn quadratic_zero() -> DensityModel {
    builtin("quadratic-zero")
}

pub fn inverse_sqrt() -> DensityModel {
    builtin("inverse-sqrt")
}

pub fn mixed() -> DensityModel {
    builtin("mixed")
}

pub fn gap() -> DensityModel {
    builtin("gap")
}
