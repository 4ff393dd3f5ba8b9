use noisesim_autodiff::{Real, Var};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Floor inside every logarithm.
pub const LOG_EPS: f64 = 1e-7;

/// Generator-side adversarial objective.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AdvForm {
    /// Minimise `mean log(1 - D(G))`, the minimax objective as written.
    Saturating,
    /// Minimise `-mean log D(G)`.
    #[default]
    NonSaturating,
}

fn check_scores<T: Real>(what: &str, v: &Var<'_, T>) -> Result<()> {
    let t = v.value();
    if let Some(x) = t.data().iter().find(|x| !(**x >= T::zero() && **x <= T::one())) {
        return Err(Error::NumericalDomain(format!("{what} contains {}", x.as_f64())));
    }
    Ok(())
}

fn clamped<'g, T: Real>(v: &Var<'g, T>) -> Var<'g, T> {
    let eps = T::from_f64_lossy(LOG_EPS);
    v.clamp(eps, T::one() - eps)
}

/// `-mean log D(x) - mean log(1 - D(G))`.
pub fn adv_d_loss<'g, T: Real>(d_real: &Var<'g, T>, d_fake: &Var<'g, T>) -> Result<Var<'g, T>> {
    check_scores("real scores", d_real)?;
    check_scores("fake scores", d_fake)?;
    let real = clamped(d_real).ln().mean_all();
    let fake = clamped(d_fake).neg().add_scalar(T::one()).ln().mean_all();
    Ok(real.add(&fake)?.neg())
}

pub fn adv_g_loss<'g, T: Real>(d_fake: &Var<'g, T>, form: AdvForm) -> Result<Var<'g, T>> {
    check_scores("fake scores", d_fake)?;
    let f = clamped(d_fake);
    Ok(match form {
        AdvForm::NonSaturating => f.ln().mean_all().neg(),
        AdvForm::Saturating => f.neg().add_scalar(T::one()).ln().mean_all(),
    })
}

/// `(adv_d, adv_g)` for post-sigmoid score maps.
pub fn adv_loss<'g, T: Real>(
    d_real: &Var<'g, T>,
    d_fake: &Var<'g, T>,
    form: AdvForm,
) -> Result<(Var<'g, T>, Var<'g, T>)> {
    Ok((adv_d_loss(d_real, d_fake)?, adv_g_loss(d_fake, form)?))
}
