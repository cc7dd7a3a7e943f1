//! Central finite-difference check of analytic gradients.

use crate::model::ModelParams;

/// Largest relative error seen inside one parameter group.
#[derive(Debug, Clone, PartialEq)]
pub struct GroupError {
    pub group: String,
    pub max_rel_error: f64,
    /// Flat parameter index where the maximum occurred.
    pub worst_index: usize,
    pub analytic: f64,
    pub numeric: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    pub tolerance: f64,
    pub groups: Vec<GroupError>,
}

impl GradCheckReport {
    pub fn max_rel_error(&self) -> f64 {
        self.groups.iter().map(|g| g.max_rel_error).fold(0.0, f64::max)
    }

    pub fn passed(&self) -> bool {
        self.groups.iter().all(|g| g.max_rel_error < self.tolerance)
    }

    /// Worst offending group, if the check failed.
    pub fn failure(&self) -> Option<&GroupError> {
        self.groups
            .iter()
            .filter(|g| g.max_rel_error >= self.tolerance)
            .max_by(|a, b| a.max_rel_error.total_cmp(&b.max_rel_error))
    }
}

/// `|a - b| / max(|a|, |b|, 1e-8)`
pub fn relative_error(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-8)
}

/// Analytic gradient and `(L(θ + ε) - L(θ - ε)) / 2ε` for every parameter.
///
/// `loss_and_grad(params, grads)` must return the loss and accumulate its
/// gradient into the zeroed `grads` slice. `params` is restored on return.
pub fn gradients<F>(params: &mut ModelParams, mut loss_and_grad: F, epsilon: f64) -> (Vec<f64>, Vec<f64>)
where
    F: FnMut(&ModelParams, &mut [f64]) -> f64,
{
    let mut analytic = vec![0.0; params.len()];
    loss_and_grad(params, &mut analytic);
    let mut scratch = vec![0.0; params.len()];
    let mut numeric = vec![0.0; params.len()];
    for (k, out) in numeric.iter_mut().enumerate() {
        let orig = params.values()[k];
        params.values_mut()[k] = orig + epsilon;
        scratch.fill(0.0);
        let up = loss_and_grad(params, &mut scratch);
        params.values_mut()[k] = orig - epsilon;
        scratch.fill(0.0);
        let down = loss_and_grad(params, &mut scratch);
        params.values_mut()[k] = orig;
        *out = (up - down) / (2.0 * epsilon);
    }
    (analytic, numeric)
}

/// Per-group maximum relative error between analytic and numeric gradients.
pub fn compare(params: &ModelParams, analytic: &[f64], numeric: &[f64], tolerance: f64) -> GradCheckReport {
    let groups = params
        .groups()
        .iter()
        .map(|group| {
            let mut worst = GroupError {
                group: group.name.clone(),
                max_rel_error: 0.0,
                worst_index: group.offset,
                analytic: analytic[group.offset],
                numeric: numeric[group.offset],
            };
            for k in group.range() {
                let err = relative_error(analytic[k], numeric[k]);
                if err > worst.max_rel_error {
                    worst = GroupError {
                        group: group.name.clone(),
                        max_rel_error: err,
                        worst_index: k,
                        analytic: analytic[k],
                        numeric: numeric[k],
                    };
                }
            }
            worst
        })
        .collect();
    GradCheckReport { tolerance, groups }
}

/// Central-difference check of every parameter, summarised per group.
pub fn finite_difference_check<F>(params: &mut ModelParams, loss_and_grad: F, epsilon: f64, tolerance: f64) -> GradCheckReport
where
    F: FnMut(&ModelParams, &mut [f64]) -> f64,
{
    let (analytic, numeric) = gradients(params, loss_and_grad, epsilon);
    compare(params, &analytic, &numeric, tolerance)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::GridGeometry;
    use crate::model::ModelConfig;

    fn tiny() -> ModelParams {
        let cfg = ModelConfig {
            geometry: GridGeometry::new(2, 2, 20, 20).unwrap(),
            hidden: 3,
            refiner_depth: 1,
            refiner_filters: 1,
        };
        ModelParams::init(cfg, 5).unwrap()
    }

    #[test]
    fn linear_loss_is_exact() {
        let mut p = tiny();
        let coeffs: Vec<f64> = (0..p.len()).map(|k| (k as f64 * 0.37).sin()).collect();
        let report = finite_difference_check(
            &mut p,
            |p, g| {
                g.copy_from_slice(&coeffs);
                p.values().iter().zip(&coeffs).map(|(v, c)| v * c).sum()
            },
            1e-5,
            1e-8,
        );
        assert!(report.max_rel_error() < 1e-8, "{report:?}");
        assert!(report.passed());
    }

    #[test]
    fn wrong_gradient_is_reported() {
        let mut p = tiny();
        let before = p.values().to_vec();
        let report = finite_difference_check(
            &mut p,
            |p, g| {
                g.fill(0.0);
                // claims zero gradient for a quadratic loss
                p.values().iter().map(|v| v * v + v).sum()
            },
            1e-5,
            1e-4,
        );
        assert!(!report.passed());
        let worst = report.failure().unwrap();
        assert!(worst.max_rel_error >= 1e-4);
        assert!(worst.worst_index < p.len());
        assert_eq!(p.values(), before.as_slice());
    }
}
