//! Central finite-difference verification of tape gradients.

use crate::error::{Error, Result};
use crate::tape::{Tape, Var};
use crate::tensor::ParamStore;

#[derive(Debug, Clone, Copy)]
pub struct GradCheckConfig {
    /// Perturbation, restricted to `[1e-6, 1e-4]`.
    pub eps: f64,
    pub tol: f64,
    /// Lower bound on the relative-error denominator. Gradients below this
    /// magnitude are compared absolutely.
    pub floor: f64,
}

impl Default for GradCheckConfig {
    fn default() -> Self {
        GradCheckConfig {
            eps: 1e-5,
            tol: 1e-4,
            floor: 1e-4,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    /// Parameter name and flat index of the worst coordinate.
    pub worst: Option<(String, usize)>,
    pub coordinates: usize,
    pub tol: f64,
}

impl GradCheckReport {
    pub fn passed(&self) -> bool {
        self.max_rel_error < self.tol
    }
}

pub fn relative_error(analytic: f64, numeric: f64, floor: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(floor)
}

/// Compares the tape gradient of the scalar returned by `f` against central
/// differences on every coordinate of every parameter in `store`.
pub fn finite_diff_check<F>(store: &ParamStore, f: F, cfg: GradCheckConfig) -> Result<GradCheckReport>
where
    F: Fn(&ParamStore, &mut Tape) -> Result<Var>,
{
    if !(1e-6..=1e-4).contains(&cfg.eps) {
        return Err(Error::Config(format!("finite-difference eps {} outside [1e-6, 1e-4]", cfg.eps)));
    }
    let eval = |s: &ParamStore| -> Result<f64> {
        let mut tape = Tape::new();
        let out = f(s, &mut tape)?;
        let v = tape.scalar(out);
        if !v.is_finite() {
            return Err(Error::NonFinite(format!("loss during gradient check ({v})")));
        }
        Ok(v)
    };

    let mut analytic = store.clone();
    analytic.zero_grad();
    let mut tape = Tape::new();
    let out = f(&analytic, &mut tape)?;
    if !tape.scalar(out).is_finite() {
        return Err(Error::NonFinite(format!("loss during gradient check ({})", tape.scalar(out))));
    }
    tape.backward(out, &mut analytic)?;

    let mut probe = store.clone();
    let mut report = GradCheckReport {
        max_rel_error: 0.0,
        worst: None,
        coordinates: 0,
        tol: cfg.tol,
    };
    for pid in 0..store.len() {
        for i in 0..store.get(pid).value.len() {
            let orig = store.get(pid).value.data()[i];
            probe.get_mut(pid).value.data_mut()[i] = orig + cfg.eps;
            let plus = eval(&probe)?;
            probe.get_mut(pid).value.data_mut()[i] = orig - cfg.eps;
            let minus = eval(&probe)?;
            probe.get_mut(pid).value.data_mut()[i] = orig;

            let numeric = (plus - minus) / (2.0 * cfg.eps);
            let err = relative_error(analytic.get(pid).grad[i], numeric, cfg.floor);
            report.coordinates += 1;
            if err > report.max_rel_error || report.worst.is_none() {
                report.max_rel_error = err;
                report.worst = Some((store.get(pid).name.clone(), i));
            }
        }
    }
    Ok(report)
}
