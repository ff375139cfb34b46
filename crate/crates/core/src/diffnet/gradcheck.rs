use rand::seq::index::sample;

use crate::rng;

#[derive(Clone, Debug, PartialEq)]
pub struct GradCheckReport {
    pub max_rel_err: f64,
    pub max_abs_err: f64,
    /// Coordinate with the largest relative error.
    pub worst_index: usize,
    pub checked: usize,
    pub pass: bool,
}

const STEP: f64 = 1e-5;
// Relative errors are taken against max(|analytic|, |numeric|, SCALE_FLOOR).
const SCALE_FLOOR: f64 = 1e-6;

/// Compares the analytic gradient returned by `loss` with central finite
/// differences. With `max_coords = Some(k)` and more than `k` parameters, a
/// seeded random subset of `k` coordinates is checked.
pub fn grad_check<F>(
    params: &[f64],
    tol: f64,
    max_coords: Option<usize>,
    seed: u64,
    mut loss: F,
) -> GradCheckReport
where
    F: FnMut(&[f64]) -> (f64, Vec<f64>),
{
    let (_, analytic) = loss(params);
    let coords: Vec<usize> = match max_coords {
        Some(k) if k < params.len() => {
            let mut r = rng::stream(seed, &[]);
            let mut idx = sample(&mut r, params.len(), k).into_vec();
            idx.sort_unstable();
            idx
        }
        _ => (0..params.len()).collect(),
    };
    let mut p = params.to_vec();
    let mut report = GradCheckReport {
        max_rel_err: 0.0,
        max_abs_err: 0.0,
        worst_index: 0,
        checked: coords.len(),
        pass: true,
    };
    for &i in &coords {
        let orig = p[i];
        p[i] = orig + STEP;
        let (up, _) = loss(&p);
        p[i] = orig - STEP;
        let (down, _) = loss(&p);
        p[i] = orig;
        let numeric = (up - down) / (2.0 * STEP);
        let abs = (analytic[i] - numeric).abs();
        let rel = abs / analytic[i].abs().max(numeric.abs()).max(SCALE_FLOOR);
        if !rel.is_finite() || rel > report.max_rel_err {
            report.max_rel_err = rel;
            report.worst_index = i;
        }
        report.max_abs_err = report.max_abs_err.max(abs);
    }
    report.pass = report.max_rel_err.is_finite() && report.max_rel_err < tol;
    report
}
