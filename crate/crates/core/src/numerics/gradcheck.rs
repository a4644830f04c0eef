//! Central-difference gradient verification.

use super::ParamStore;
use crate::error::{Error, Result};

pub const DEFAULT_STEP: f64 = 1e-4;

/// `|a − n| / max(1e-8, |a| + |n|)`.
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / (analytic.abs() + numeric.abs()).max(1e-8)
}

#[derive(Debug, Clone, PartialEq)]
pub struct GroupCheck {
    pub name: String,
    pub checked: usize,
    /// Probes measured with a one-sided difference because the other side
    /// of the stencil crossed a kink.
    pub one_sided: usize,
    /// Probes with kinks on both sides, left out of `max_rel_err`.
    pub skipped: usize,
    pub max_rel_err: f64,
    pub worst_index: usize,
    pub analytic: f64,
    pub numeric: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct GradCheckReport {
    pub groups: Vec<GroupCheck>,
}

impl GradCheckReport {
    pub fn max_rel_err(&self) -> f64 {
        self.groups.iter().map(|g| g.max_rel_err).fold(0.0, f64::max)
    }

    pub fn worst(&self) -> Option<&GroupCheck> {
        self.groups
            .iter()
            .max_by(|a, b| a.max_rel_err.total_cmp(&b.max_rel_err))
    }

    pub fn probes(&self) -> usize {
        self.groups.iter().map(|g| g.checked + g.skipped).sum()
    }

    pub fn one_sided(&self) -> usize {
        self.groups.iter().map(|g| g.one_sided).sum()
    }

    pub fn skipped(&self) -> usize {
        self.groups.iter().map(|g| g.skipped).sum()
    }
}

/// Compares the analytic gradients stored in `params` against central
/// differences of `f` for every parameter named in `names`.
///
/// `max_entries` caps how many scalars per parameter are probed; the probed
/// indices are spread evenly across the tensor. Parameter values are
/// restored bit-exactly after each probe.
pub fn finite_diff_gradcheck<F>(
    params: &mut ParamStore,
    names: &[&str],
    h: f64,
    max_entries: Option<usize>,
    mut f: F,
) -> Result<GradCheckReport>
where
    F: FnMut(&ParamStore) -> Result<f64>,
{
    piecewise_gradcheck(params, names, h, max_entries, |p| Ok((f(p)?, ())))
}

/// [`finite_diff_gradcheck`] for a piecewise-smooth `f` that also reports a
/// key naming its active piece. When one end of the stencil lands on a
/// different piece than the unperturbed point, the one-sided difference on
/// the matching side is used; when both do, the probe is skipped.
pub fn piecewise_gradcheck<F, K>(
    params: &mut ParamStore,
    names: &[&str],
    h: f64,
    max_entries: Option<usize>,
    mut f: F,
) -> Result<GradCheckReport>
where
    F: FnMut(&ParamStore) -> Result<(f64, K)>,
    K: PartialEq,
{
    let (base, base_key) = f(params)?;
    let mut report = GradCheckReport::default();
    for &name in names {
        let id = params
            .id(name)
            .ok_or_else(|| Error::invalid(format!("gradcheck: unknown parameter `{name}`")))?;
        let len = params.value(id).len();
        let count = max_entries.map_or(len, |m| m.min(len));
        let mut group = GroupCheck {
            name: name.to_string(),
            checked: 0,
            one_sided: 0,
            skipped: 0,
            max_rel_err: 0.0,
            worst_index: 0,
            analytic: 0.0,
            numeric: 0.0,
        };
        for k in 0..count {
            let index = if count == len { k } else { k * len / count };
            let original = params.value(id).data()[index];
            params.value_mut(id).data_mut()[index] = original + h;
            let (plus, plus_key) = f(params)?;
            params.value_mut(id).data_mut()[index] = original - h;
            let (minus, minus_key) = f(params)?;
            params.value_mut(id).data_mut()[index] = original;
            if !plus.is_finite() || !minus.is_finite() {
                return Err(Error::NonFinite(format!("gradcheck objective at {name}[{index}]")));
            }
            let numeric = match (plus_key == base_key, minus_key == base_key) {
                (true, true) => (plus - minus) / (2.0 * h),
                (true, false) => {
                    group.one_sided += 1;
                    (plus - base) / h
                }
                (false, true) => {
                    group.one_sided += 1;
                    (base - minus) / h
                }
                (false, false) => {
                    group.skipped += 1;
                    continue;
                }
            };
            let analytic = params.grad(id).data()[index];
            let err = relative_error(analytic, numeric);
            if err > group.max_rel_err || group.checked == 0 {
                group.max_rel_err = err;
                group.worst_index = index;
                group.analytic = analytic;
                group.numeric = numeric;
            }
            group.checked += 1;
        }
        report.groups.push(group);
    }
    Ok(report)
}
