//! Adversarial, contrastive and embedding-reconstruction losses and their
//! composition into the generator objective.

mod adv;
mod nse;
mod pcl;
mod total;

pub use adv::{adv_d_loss, adv_g_loss, adv_loss, AdvForm, LOG_EPS};
pub use nse::{nse_loss, nse_loss_from_output};
pub use pcl::{pcl_loss, pcl_loss_with_positions, sample_positions, NegativeSource, PatchProjector, PclConfig};
pub use total::{total_loss, LossParts, LossReport, DEFAULT_LAMBDA_NSE};
