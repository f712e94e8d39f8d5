//! Central finite-difference verification of analytic gradients.

/// Worst-case agreement between an analytic gradient and central differences.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradCheck {
    pub max_rel_error: f64,
    pub max_abs_error: f64,
    pub worst_index: usize,
}

/// Relative error `|a - n| / max(|a| + |n|, floor)`. The floor keeps entries
/// whose true gradient is ~0 from dominating through rounding noise.
pub fn relative_error(analytic: f64, numeric: f64, floor: f64) -> f64 {
    (analytic - numeric).abs() / (analytic.abs() + numeric.abs()).max(floor)
}

/// Compares `analytic` against `(f(p + h e_i) - f(p - h e_i)) / 2h` for every
/// coordinate `i` of `params`.
pub fn check_gradient<F>(params: &[f64], analytic: &[f64], h: f64, floor: f64, mut loss: F) -> GradCheck
where
    F: FnMut(&[f64]) -> f64,
{
    assert_eq!(params.len(), analytic.len());
    let mut probe = params.to_vec();
    let mut out = GradCheck {
        max_rel_error: 0.0,
        max_abs_error: 0.0,
        worst_index: 0,
    };
    for i in 0..params.len() {
        probe[i] = params[i] + h;
        let up = loss(&probe);
        probe[i] = params[i] - h;
        let down = loss(&probe);
        probe[i] = params[i];
        let numeric = (up - down) / (2.0 * h);
        let rel = relative_error(analytic[i], numeric, floor);
        out.max_abs_error = out.max_abs_error.max((analytic[i] - numeric).abs());
        if rel > out.max_rel_error {
            out.max_rel_error = rel;
            out.worst_index = i;
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quadratic_is_exact() {
        let p = [1.0, -2.0, 0.5];
        let grad: Vec<f64> = p.iter().map(|x| 2.0 * x).collect();
        let res = check_gradient(&p, &grad, 1e-5, 1e-8, |q| q.iter().map(|x| x * x).sum());
        assert!(res.max_rel_error < 1e-9);
    }

    #[test]
    fn flags_a_wrong_gradient() {
        let p = [1.0, 2.0];
        let res = check_gradient(&p, &[2.0, 0.0], 1e-5, 1e-8, |q| q[0] * q[0] + q[1] * q[1]);
        assert_eq!(res.worst_index, 1);
        assert!(res.max_rel_error > 0.5);
    }
}
