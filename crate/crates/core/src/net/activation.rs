use serde::{Deserialize, Serialize};

/// Hidden-state nonlinearity. The bias enters inside the nonlinearity.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    /// `sign(z)·max(|z| + b, 0)`.
    #[serde(alias = "modReLU")]
    Modrelu,
    /// `max(z + b, 0)`.
    Relu,
    /// `z + b`.
    Linear,
}

impl Activation {
    pub fn apply(self, z: f64, b: f64) -> f64 {
        match self {
            Activation::Modrelu => modrelu_scalar(z, b),
            Activation::Relu => (z + b).max(0.0),
            Activation::Linear => z + b,
        }
    }

    /// Partial derivatives `(∂h/∂z, ∂h/∂b)`; zero at the kinks.
    pub fn derivatives(self, z: f64, b: f64) -> (f64, f64) {
        match self {
            Activation::Modrelu => {
                if z != 0.0 && z.abs() + b > 0.0 {
                    (1.0, z.signum())
                } else {
                    (0.0, 0.0)
                }
            }
            Activation::Relu => {
                if z + b > 0.0 {
                    (1.0, 1.0)
                } else {
                    (0.0, 0.0)
                }
            }
            Activation::Linear => (1.0, 1.0),
        }
    }
}

impl std::str::FromStr for Activation {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s.to_ascii_lowercase().as_str() {
            "modrelu" => Ok(Activation::Modrelu),
            "relu" => Ok(Activation::Relu),
            "linear" => Ok(Activation::Linear),
            other => Err(format!("unknown activation `{other}` (expected modrelu, relu or linear)")),
        }
    }
}

fn modrelu_scalar(z: f64, b: f64) -> f64 {
    if z == 0.0 {
        return 0.0;
    }
    z.signum() * (z.abs() + b).max(0.0)
}

/// Elementwise modReLU.
pub fn modrelu(z: &[f64], b: &[f64]) -> Vec<f64> {
    assert_eq!(z.len(), b.len(), "modrelu: length mismatch");
    z.iter().zip(b).map(|(&zi, &bi)| modrelu_scalar(zi, bi)).collect()
}
