//! Central finite-difference checks for analytic gradients.

use crate::error::Result;
use crate::nn::params::{GradStore, ParamStore};

pub const DEFAULT_STEP: f64 = 1e-5;

/// Magnitudes below this are compared absolutely rather than relatively, so
/// entries that are zero up to round-off do not blow up the ratio.
pub const RELATIVE_FLOOR: f64 = 1e-6;

#[derive(Clone, Debug, PartialEq)]
pub struct GradCheckReport {
    pub max_relative_error: f64,
    pub worst_param: String,
    pub worst_index: usize,
    pub analytic: f64,
    pub numeric: f64,
    pub checked: usize,
}

pub fn relative_error(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(RELATIVE_FLOOR)
}

/// Numeric gradient of `loss` with respect to every scalar in `params`.
pub fn numeric_gradient<F>(params: &ParamStore, step: f64, mut loss: F) -> Result<GradStore>
where
    F: FnMut(&ParamStore) -> Result<f64>,
{
    let mut probe = params.clone();
    let mut out = params.zeros_like();
    let names: Vec<String> = params.names().map(str::to_string).collect();
    for name in &names {
        let n = params.expect(name)?.len();
        for k in 0..n {
            let orig = params
                .expect(name)?
                .iter()
                .nth(k)
                .copied()
                .unwrap_or_default();
            set_at(&mut probe, name, k, orig + step)?;
            let plus = loss(&probe)?;
            set_at(&mut probe, name, k, orig - step)?;
            let minus = loss(&probe)?;
            set_at(&mut probe, name, k, orig)?;
            set_at(&mut out, name, k, (plus - minus) / (2.0 * step))?;
        }
    }
    Ok(out)
}

fn set_at(store: &mut ParamStore, name: &str, k: usize, value: f64) -> Result<()> {
    let a = store.expect_mut(name)?;
    if let Some(v) = a.iter_mut().nth(k) {
        *v = value;
    }
    Ok(())
}

/// Compares an analytic gradient with central differences of `loss`.
pub fn check_gradients<F>(
    params: &ParamStore,
    analytic: &GradStore,
    step: f64,
    loss: F,
) -> Result<GradCheckReport>
where
    F: FnMut(&ParamStore) -> Result<f64>,
{
    params.check_layout(analytic, "gradient check")?;
    let numeric = numeric_gradient(params, step, loss)?;
    let mut report = GradCheckReport {
        max_relative_error: 0.0,
        worst_param: String::new(),
        worst_index: 0,
        analytic: 0.0,
        numeric: 0.0,
        checked: 0,
    };
    for (name, a) in analytic.iter() {
        let n = numeric.expect(name)?;
        for (k, (&x, &y)) in a.iter().zip(n.iter()).enumerate() {
            report.checked += 1;
            let e = relative_error(x, y);
            if e > report.max_relative_error || report.worst_param.is_empty() {
                report.max_relative_error = e;
                report.worst_param = name.to_string();
                report.worst_index = k;
                report.analytic = x;
                report.numeric = y;
            }
        }
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn quadratic_gradient_is_exact() {
        let mut p = ParamStore::new();
        p.insert("w", array![[1.0, -2.0], [0.5, 3.0]]).unwrap();
        let loss = |s: &ParamStore| Ok(s.expect("w")?.mapv(|v| v * v).sum());
        let analytic = {
            let mut g = p.clone();
            g.scale(2.0);
            g
        };
        let r = check_gradients(&p, &analytic, DEFAULT_STEP, loss).unwrap();
        assert_eq!(r.checked, 4);
        assert!(r.max_relative_error < 1e-9, "{r:?}");
    }

    #[test]
    fn wrong_gradient_is_caught() {
        let mut p = ParamStore::new();
        p.insert("w", array![[1.0]]).unwrap();
        let r =
            check_gradients(&p, &p, DEFAULT_STEP, |s| Ok(s.expect("w")?[[0, 0]].powi(3))).unwrap();
        assert!(r.max_relative_error > 0.5);
        assert_eq!(r.worst_param, "w");
    }
}
