//! Single-neuron harness comparing how a dynamic input `x` and a static
//! input `x'` reach the weight gradient under additive, concatenating and
//! multiplicative fusion.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FusionMode {
    /// `N(x + x') = ω·x + ω·x' + b`
    Add,
    /// `N([x, x']) = ω·x + ω'·x' + b`
    Concat,
    /// `N(x ⊙ x') = ω·(x ⊙ x') + b`
    Multiply,
}

/// Linear neuron `out = Σ ω_k f_k + b` over the fused features.
#[derive(Debug, Clone, PartialEq)]
pub struct FusionNeuron {
    pub weight: Vec<f64>,
    /// Weights applied to `x'` in concat mode.
    pub weight_static: Vec<f64>,
    pub bias: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FusionGradient {
    pub mode: FusionMode,
    pub output: f64,
    /// `∂out/∂ω`.
    pub grad_weight: Vec<f64>,
    /// `∂out/∂ω'` (concat mode only).
    pub grad_weight_static: Option<Vec<f64>>,
    /// `∂out/∂x`.
    pub grad_dynamic: Vec<f64>,
}

impl FusionNeuron {
    pub fn unit(len: usize) -> Self {
        FusionNeuron {
            weight: vec![1.0; len],
            weight_static: vec![1.0; len],
            bias: 0.0,
        }
    }

    pub fn output(&self, mode: FusionMode, x: &[f64], x_pi: &[f64]) -> f64 {
        let dot = |w: &[f64], v: &[f64]| w.iter().zip(v).map(|(a, b)| a * b).sum::<f64>();
        let fused: f64 = match mode {
            FusionMode::Add => self
                .weight
                .iter()
                .zip(x.iter().zip(x_pi))
                .map(|(w, (a, b))| w * (a + b))
                .sum(),
            FusionMode::Concat => dot(&self.weight, x) + dot(&self.weight_static, x_pi),
            FusionMode::Multiply => self
                .weight
                .iter()
                .zip(x.iter().zip(x_pi))
                .map(|(w, (a, b))| w * a * b)
                .sum(),
        };
        fused + self.bias
    }

    /// Analytic gradients of the neuron output.
    pub fn probe(&self, mode: FusionMode, x: &[f64], x_pi: &[f64]) -> FusionGradient {
        assert_eq!(x.len(), x_pi.len(), "dynamic and static inputs must match");
        assert_eq!(x.len(), self.weight.len(), "weight length");
        let (grad_weight, grad_weight_static, grad_dynamic) = match mode {
            FusionMode::Add => (
                x.iter().zip(x_pi).map(|(a, b)| a + b).collect(),
                None,
                self.weight.clone(),
            ),
            FusionMode::Concat => (x.to_vec(), Some(x_pi.to_vec()), self.weight.clone()),
            FusionMode::Multiply => (
                x.iter().zip(x_pi).map(|(a, b)| a * b).collect(),
                None,
                self.weight.iter().zip(x_pi).map(|(w, b)| w * b).collect(),
            ),
        };
        FusionGradient {
            mode,
            output: self.output(mode, x, x_pi),
            grad_weight,
            grad_weight_static,
            grad_dynamic,
        }
    }
}

/// Probe with unit weights and zero bias.
pub fn fusion_gradient_probe(mode: FusionMode, x: &[f64], x_pi: &[f64]) -> FusionGradient {
    FusionNeuron::unit(x.len()).probe(mode, x, x_pi)
}
