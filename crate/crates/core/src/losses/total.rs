use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const DEFAULT_LAMBDA_NSE: f64 = 10.0;

/// Component values of one training step.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LossParts {
    pub adv_d: f64,
    pub adv_g: f64,
    pub pcl_src: f64,
    pub pcl_tgt: f64,
    pub nse: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LossReport {
    pub adv_d: f64,
    pub adv_g: f64,
    pub pcl_src: f64,
    pub pcl_tgt: f64,
    pub nse: f64,
    pub total: f64,
    pub lambda_nse: f64,
}

/// `total = adv_g + pcl_src + pcl_tgt + lambda * nse`. A non-finite
/// component aborts with the component name and `step`.
pub fn total_loss(parts: LossParts, lambda_nse: f64, step: u64) -> Result<LossReport> {
    let named = [
        ("adv_d", parts.adv_d),
        ("adv_g", parts.adv_g),
        ("pcl_src", parts.pcl_src),
        ("pcl_tgt", parts.pcl_tgt),
        ("nse", parts.nse),
    ];
    if let Some((name, _)) = named.iter().find(|(_, v)| !v.is_finite()) {
        return Err(Error::Divergence {
            component: name.to_string(),
            step,
        });
    }
    let total = parts.adv_g + parts.pcl_src + parts.pcl_tgt + lambda_nse * parts.nse;
    if !total.is_finite() {
        return Err(Error::Divergence {
            component: "total".into(),
            step,
        });
    }
    Ok(LossReport {
        adv_d: parts.adv_d,
        adv_g: parts.adv_g,
        pcl_src: parts.pcl_src,
        pcl_tgt: parts.pcl_tgt,
        nse: parts.nse,
        total,
        lambda_nse,
    })
}
