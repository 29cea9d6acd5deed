//! Analytical per-batch FLOP model for the four training regimes, plus the
//! activation-memory proxy. The backbone's measured single-forward cost is an
//! input constant; everything else is closed-form in the model dimensions.

use serde::{Deserialize, Serialize};

use crate::continual::{ComponentOpt, MethodVariant};
use crate::error::{Error, Result};

/// Training-cost regime.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Regime {
    /// Full first-order training: one forward plus a backward (~2 forwards).
    Fo,
    /// Pure ZO with Q queries: 2q probe forwards plus the evaluation forward.
    Zo,
    /// Hybrid early phase (head still training): ZO forwards plus one extra
    /// head-only forward and the head backward.
    ZofcEarly,
    /// Hybrid late phase (head frozen): ZO forwards only.
    ZofcLate,
}

/// Model dimensions for the cost formulas.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FlopsModel {
    pub batch: u64,
    pub height: u64,
    pub width: u64,
    /// Feature width D.
    pub hidden: u64,
    pub classes: u64,
    /// Number of adapted blocks L_a.
    pub adapter_blocks: u64,
    pub rank: u64,
    pub queries: u64,
    /// Backward-to-forward cost multiplier for the head.
    pub alpha_fc: f64,
    /// Measured cost of one full-model forward over a batch, in FLOPs.
    pub backbone_forward_flops: f64,
}

impl FlopsModel {
    /// Reference constants: batch 48, 224x224 inputs (197 tokens), D=768,
    /// C=5, 5 adapted blocks of rank 5, alpha 2, measured batch forward
    /// 8.484e11 FLOPs.
    pub fn reference(queries: u64) -> Self {
        FlopsModel {
            batch: 48,
            height: 224,
            width: 224,
            hidden: 768,
            classes: 5,
            adapter_blocks: 5,
            rank: 5,
            queries,
            alpha_fc: 2.0,
            backbone_forward_flops: 8.484e11,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let counts = [
            self.batch,
            self.height,
            self.width,
            self.hidden,
            self.classes,
            self.adapter_blocks,
            self.rank,
            self.queries,
        ];
        if counts.contains(&0) {
            return Err(Error::InvalidParameter {
                context: "flops model",
                message: "all counts must be positive".into(),
            });
        }
        if !self.height.is_multiple_of(16) || !self.width.is_multiple_of(16) {
            return Err(Error::InvalidParameter {
                context: "flops model",
                message: "input resolution must be a multiple of the 16-pixel patch".into(),
            });
        }
        if !(self.alpha_fc > 0.0) || !(self.backbone_forward_flops > 0.0) {
            return Err(Error::InvalidParameter {
                context: "flops model",
                message: "alpha and the measured forward cost must be positive".into(),
            });
        }
        Ok(())
    }

    /// Token count N = 1 + (H/16)(W/16) (class token plus 16x16 patches).
    pub fn tokens(&self) -> u64 {
        1 + (self.height / 16) * (self.width / 16)
    }

    /// Adapter overhead per image: L_a * N * 4Dr.
    pub fn adapter_flops_per_image(&self) -> u64 {
        self.adapter_blocks * self.tokens() * 4 * self.hidden * self.rank
    }

    /// Head forward per image: 5CD + 3D + C.
    pub fn head_flops_per_image(&self) -> u64 {
        5 * self.classes * self.hidden + 3 * self.hidden + self.classes
    }
}

/// Per-batch cost breakdown for one regime.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CostReport {
    pub regime: Regime,
    pub queries: u64,
    pub forwards_per_batch: u64,
    pub forward_flops: f64,
    pub backward_flops: f64,
    pub total_flops: f64,
    pub ratio_vs_fo: f64,
    pub adapter_flops_per_image: u64,
    pub head_flops_per_image: u64,
}

pub fn flops_estimate(model: &FlopsModel, regime: Regime) -> Result<CostReport> {
    model.validate()?;
    let f_batch = model.backbone_forward_flops;
    let f_cls_batch = model.batch as f64 * model.head_flops_per_image() as f64;
    let q = model.queries;
    let (forwards, forward_flops, backward_flops) = match regime {
        Regime::Fo => (1, f_batch, 2.0 * f_batch),
        Regime::Zo | Regime::ZofcLate => (2 * q + 1, (2 * q + 1) as f64 * f_batch, 0.0),
        Regime::ZofcEarly => (
            // The extra head forward reuses the evaluation forward's
            // features, so it only adds the head's own cost.
            2 * q + 2,
            (2 * q + 1) as f64 * f_batch + f_cls_batch,
            model.alpha_fc * f_cls_batch,
        ),
    };
    let total = forward_flops + backward_flops;
    Ok(CostReport {
        regime,
        queries: q,
        forwards_per_batch: forwards,
        forward_flops,
        backward_flops,
        total_flops: total,
        ratio_vs_fo: total / (3.0 * f_batch),
        adapter_flops_per_image: model.adapter_flops_per_image(),
        head_flops_per_image: model.head_flops_per_image(),
    })
}

/// Count of scalars that must persist for the backward pass under a method
/// variant: an FO adapter forces storing the backbone/adapter intermediates;
/// an FO (or ZO-probed-only FO-free) head needs only its input features; pure
/// ZO stores nothing.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ActivationDims {
    /// Per-example widths of the backbone's stored intermediate activations.
    pub backbone_width_sum: u64,
    /// Feature width D.
    pub feature_dim: u64,
    pub adapter_rank: u64,
}

pub fn activation_memory_proxy(variant: &MethodVariant, dims: &ActivationDims, batch: u64) -> u64 {
    if variant.adapter == ComponentOpt::Fo {
        // Backpropagating into the adapter keeps the backbone intermediates,
        // the adapter's input/output features, and the bottleneck.
        return batch * (dims.backbone_width_sum + 2 * dims.feature_dim + dims.adapter_rank);
    }
    if variant.head == ComponentOpt::Fo {
        // Only the head's input features are needed.
        return batch * dims.feature_dim;
    }
    0
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::HeadFamily;

    #[test]
    fn token_and_component_formulas() {
        let m = FlopsModel::reference(4);
        assert_eq!(m.tokens(), 197);
        assert_eq!(m.adapter_flops_per_image(), 15_129_600);
        assert_eq!(m.head_flops_per_image(), 19_200 + 2_304 + 5);
        assert_eq!(m.head_flops_per_image(), 21_509);
    }

    #[test]
    fn fo_regime_costs() {
        let r = flops_estimate(&FlopsModel::reference(1), Regime::Fo).unwrap();
        assert_eq!(r.forwards_per_batch, 1);
        assert_eq!(r.forward_flops, 8.484e11);
        assert_eq!(r.backward_flops, 2.0 * 8.484e11);
        assert_eq!(r.total_flops, 3.0 * 8.484e11);
        assert_eq!(r.ratio_vs_fo, 1.0);
    }

    #[test]
    fn zo_regime_costs() {
        let r1 = flops_estimate(&FlopsModel::reference(1), Regime::Zo).unwrap();
        assert_eq!(r1.forwards_per_batch, 3);
        assert_eq!(r1.total_flops, 3.0 * 8.484e11);
        assert!((r1.ratio_vs_fo - 1.0).abs() < 1e-12);

        let r4 = flops_estimate(&FlopsModel::reference(4), Regime::Zo).unwrap();
        assert_eq!(r4.forwards_per_batch, 9);
        assert_eq!(r4.total_flops, 9.0 * 8.484e11);
        assert!((r4.total_flops - 7.6356e12).abs() < 1e6);
        assert!((r4.ratio_vs_fo - 3.0).abs() < 1e-12);
        assert_eq!(r4.backward_flops, 0.0);
    }

    #[test]
    fn hybrid_regime_costs() {
        let e = flops_estimate(&FlopsModel::reference(4), Regime::ZofcEarly).unwrap();
        assert_eq!(e.forwards_per_batch, 10);
        assert_eq!(e.backward_flops, 2.0 * 48.0 * 21_509.0);
        assert_eq!(e.backward_flops, 2_064_864.0);
        // The head's extra forward is invisible at the printed precision.
        assert!((e.forward_flops - 9.0 * 8.484e11).abs() < 2e6);

        let l = flops_estimate(&FlopsModel::reference(4), Regime::ZofcLate).unwrap();
        assert_eq!(l.forwards_per_batch, 9);
        assert_eq!(l.backward_flops, 0.0);
        assert_eq!(l.total_flops, 9.0 * 8.484e11);
    }

    #[test]
    fn invalid_models_rejected() {
        let mut m = FlopsModel::reference(4);
        m.rank = 0;
        assert!(flops_estimate(&m, Regime::Fo).is_err());
        let mut m = FlopsModel::reference(4);
        m.height = 100; // not a multiple of 16
        assert!(flops_estimate(&m, Regime::Fo).is_err());
        let mut m = FlopsModel::reference(4);
        m.backbone_forward_flops = 0.0;
        assert!(flops_estimate(&m, Regime::Fo).is_err());
    }

    fn variant(adapter: ComponentOpt, head: ComponentOpt) -> MethodVariant {
        MethodVariant {
            adapter,
            head_family: HeadFamily::Cosine,
            head,
        }
    }

    #[test]
    fn memory_proxy_rules() {
        let dims = ActivationDims {
            backbone_width_sum: 3_000,
            feature_dim: 768,
            adapter_rank: 5,
        };
        // Pure ZO stores nothing.
        assert_eq!(
            activation_memory_proxy(&variant(ComponentOpt::Zo, ComponentOpt::Zo), &dims, 48),
            0
        );
        assert_eq!(
            activation_memory_proxy(&variant(ComponentOpt::None, ComponentOpt::None), &dims, 48),
            0
        );
        // Hybrid and head-only FO: just the head-input features.
        assert_eq!(
            activation_memory_proxy(&variant(ComponentOpt::Zo, ComponentOpt::Fo), &dims, 48),
            48 * 768
        );
        assert_eq!(
            activation_memory_proxy(&variant(ComponentOpt::None, ComponentOpt::Fo), &dims, 48),
            36_864
        );
        // FO adapter keeps the full activation set, whatever the head does.
        let fo = activation_memory_proxy(&variant(ComponentOpt::Fo, ComponentOpt::Zo), &dims, 48);
        assert_eq!(fo, 48 * (3_000 + 2 * 768 + 5));
    }

    #[test]
    fn memory_ordering_holds_for_many_configurations() {
        for widths in [0u64, 768, 5_000, 50_000] {
            for d in [16u64, 768] {
                for b in [1u64, 48, 256] {
                    let dims = ActivationDims {
                        backbone_width_sum: widths,
                        feature_dim: d,
                        adapter_rank: 5,
                    };
                    let pure = activation_memory_proxy(
                        &variant(ComponentOpt::Zo, ComponentOpt::Zo),
                        &dims,
                        b,
                    );
                    let hybrid = activation_memory_proxy(
                        &variant(ComponentOpt::Zo, ComponentOpt::Fo),
                        &dims,
                        b,
                    );
                    let full = activation_memory_proxy(
                        &variant(ComponentOpt::Fo, ComponentOpt::Fo),
                        &dims,
                        b,
                    );
                    assert!(pure < hybrid && hybrid < full, "{widths} {d} {b}");
                }
            }
        }
    }
}
