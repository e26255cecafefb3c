//! Analytic throughput of each scheme from per-component costs.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Per-invocation cost of each component, in any common time unit.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CostModel {
    pub feature: f64,
    pub warp: f64,
    pub task: f64,
    /// Optical-flow estimation, for the flow-based propagation reference.
    pub flow: f64,
    pub fusion: f64,
}

impl CostModel {
    fn validate(&self) -> Result<()> {
        let all = [self.feature, self.warp, self.task, self.flow, self.fusion];
        if all.iter().any(|c| !c.is_finite() || *c < 0.0) || self.feature + self.task <= 0.0 {
            return Err(Error::InvalidArgument(format!(
                "costs must be finite and non-negative with a positive keyframe cost: {self:?}"
            )));
        }
        Ok(())
    }

    pub fn keyframe(&self) -> f64 {
        self.feature + self.task
    }

    pub fn prop_bmv_intermediate(&self) -> f64 {
        self.warp + self.task
    }

    pub fn prop_flow_intermediate(&self) -> f64 {
        self.flow + self.warp + self.task
    }

    /// Two warps, one fusion and the task network.
    pub fn inter_bmv_intermediate(&self) -> f64 {
        2.0 * self.warp + self.fusion + self.task
    }
}

/// Frames per time unit.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PredictedThroughput {
    pub interval: usize,
    pub baseline: f64,
    pub prop_bmv: f64,
    pub prop_flow: f64,
    pub inter_bmv: f64,
}

impl PredictedThroughput {
    pub fn prop_bmv_speedup(&self) -> f64 {
        self.prop_bmv / self.baseline
    }

    pub fn inter_bmv_speedup(&self) -> f64 {
        self.inter_bmv / self.baseline
    }
}

/// Throughput over one keyframe interval: a keyframe then `n - 1`
/// intermediate frames. The inter scheme runs the feature network once per
/// interval as well, since the next keyframe's features are reused.
pub fn throughput_model(costs: &CostModel, interval: usize) -> Result<PredictedThroughput> {
    costs.validate()?;
    if interval == 0 {
        return Err(Error::InvalidArgument(
            "keyframe interval must be at least 1".into(),
        ));
    }
    let n = interval as f64;
    let k = costs.keyframe();
    let per = |intermediate: f64| n / (k + (n - 1.0) * intermediate);
    Ok(PredictedThroughput {
        interval,
        baseline: 1.0 / k,
        prop_bmv: per(costs.prop_bmv_intermediate()),
        prop_flow: per(costs.prop_flow_intermediate()),
        inter_bmv: per(costs.inter_bmv_intermediate()),
    })
}

/// Fractional saving per intermediate frame of block-motion propagation
/// over flow-based propagation.
pub fn intermediate_cost_reduction(costs: &CostModel) -> Result<f64> {
    costs.validate()?;
    let flow = costs.prop_flow_intermediate();
    if flow <= 0.0 {
        return Err(Error::InvalidArgument(
            "flow-based intermediate cost is zero".into(),
        ));
    }
    Ok(1.0 - costs.prop_bmv_intermediate() / flow)
}
