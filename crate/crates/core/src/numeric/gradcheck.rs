use alloc::string::String;
use alloc::vec::Vec;

use super::array::Array;

/// One evaluation of the checked objective.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Probe {
    pub value: f64,
    /// ReLU sign signature of the evaluation (see [`super::Graph::kink_signature`]).
    /// Objectives without kinks return a constant.
    pub kink: u64,
}

impl Probe {
    pub fn smooth(value: f64) -> Self {
        Probe { value, kink: 0 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ParamCheck {
    pub name: String,
    pub max_rel_err: f64,
    pub worst_index: usize,
    pub analytic_at_worst: f64,
    pub numeric_at_worst: f64,
    pub checked: usize,
    /// Elements whose `±ε` probes straddle a ReLU kink.
    pub kink_skipped: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    pub eps: f64,
    pub tol: f64,
    pub params: Vec<ParamCheck>,
}

impl GradCheckReport {
    pub fn passed(&self) -> bool {
        self.params.iter().all(|p| p.max_rel_err < self.tol)
    }

    pub fn max_rel_err(&self) -> f64 {
        self.params.iter().map(|p| p.max_rel_err).fold(0.0, f64::max)
    }

    pub fn kink_skipped(&self) -> usize {
        self.params.iter().map(|p| p.kink_skipped).sum()
    }

    /// Parameters sorted by decreasing error.
    pub fn worst(&self, count: usize) -> Vec<&ParamCheck> {
        let mut v: Vec<&ParamCheck> = self.params.iter().collect();
        v.sort_by(|a, b| b.max_rel_err.total_cmp(&a.max_rel_err));
        v.truncate(count);
        v
    }
}

/// `|a − n| / max(1e-8, |a| + |n|)`
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / f64::max(1e-8, analytic.abs() + numeric.abs())
}

/// Compares `analytic` gradients against central differences
/// `(f(p+ε) − f(p−ε)) / 2ε` for every element of every parameter.
///
/// `params` is perturbed in place and restored exactly after each probe.
/// Elements whose two probes report different kink signatures are skipped,
/// since the difference quotient is meaningless across a ReLU kink.
pub fn grad_check<F>(
    names: &[&str],
    params: &mut [Array],
    analytic: &[Array],
    eps: f64,
    tol: f64,
    mut f: F,
) -> GradCheckReport
where
    F: FnMut(&[Array]) -> Probe,
{
    assert_eq!(names.len(), params.len());
    assert_eq!(analytic.len(), params.len());
    let mut report = GradCheckReport {
        eps,
        tol,
        params: Vec::with_capacity(params.len()),
    };
    for p in 0..params.len() {
        assert_eq!(params[p].shape(), analytic[p].shape(), "gradient shape for {}", names[p]);
        let mut check = ParamCheck {
            name: names[p].into(),
            max_rel_err: 0.0,
            worst_index: 0,
            analytic_at_worst: 0.0,
            numeric_at_worst: 0.0,
            checked: 0,
            kink_skipped: 0,
        };
        for i in 0..params[p].numel() {
            let orig = params[p].data()[i];
            params[p].data_mut()[i] = orig + eps;
            let plus = f(params);
            params[p].data_mut()[i] = orig - eps;
            let minus = f(params);
            params[p].data_mut()[i] = orig;
            if plus.kink != minus.kink {
                check.kink_skipped += 1;
                continue;
            }
            let numeric = (plus.value - minus.value) / (2.0 * eps);
            let a = analytic[p].data()[i];
            let err = relative_error(a, numeric);
            check.checked += 1;
            if err > check.max_rel_err || !err.is_finite() {
                check.max_rel_err = if err.is_finite() { err } else { f64::INFINITY };
                check.worst_index = i;
                check.analytic_at_worst = a;
                check.numeric_at_worst = numeric;
            }
        }
        report.params.push(check);
    }
    report
}
