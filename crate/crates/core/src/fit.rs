//! Levenberg-Marquardt least squares with Marquardt diagonal scaling.

use nalgebra::{DMatrix, DVector};

/// A least-squares problem: minimise Σ rᵢ(p)².
pub trait Residuals {
    fn n_residuals(&self) -> usize;

    fn residuals(&self, p: &DVector<f64>, out: &mut DVector<f64>);

    /// Central-difference Jacobian unless overridden.
    fn jacobian(&self, p: &DVector<f64>, jac: &mut DMatrix<f64>) {
        let m = self.n_residuals();
        let mut plus = DVector::zeros(m);
        let mut minus = DVector::zeros(m);
        let mut q = p.clone();
        for j in 0..p.len() {
            let h = 1e-6 * p[j].abs().max(1e-3);
            q[j] = p[j] + h;
            self.residuals(&q, &mut plus);
            q[j] = p[j] - h;
            self.residuals(&q, &mut minus);
            q[j] = p[j];
            for i in 0..m {
                jac[(i, j)] = (plus[i] - minus[i]) / (2.0 * h);
            }
        }
    }

    /// Maps a trial point back into the feasible set (bounds).
    fn project(&self, _p: &mut DVector<f64>) {}
}

#[derive(Debug, Clone, Copy)]
pub struct LmOptions {
    pub max_iter: usize,
    pub ftol: f64,
    pub xtol: f64,
    pub gtol: f64,
    pub lambda: f64,
}

impl Default for LmOptions {
    fn default() -> Self {
        Self {
            max_iter: 200,
            ftol: 1e-14,
            xtol: 1e-12,
            gtol: 1e-14,
            lambda: 1e-3,
        }
    }
}

#[derive(Debug, Clone)]
pub struct LmReport {
    pub params: DVector<f64>,
    /// Residual sum of squares at `params`.
    pub cost: f64,
    pub converged: bool,
    pub iterations: usize,
    pub jacobian: DMatrix<f64>,
}

impl LmReport {
    pub fn dof(&self) -> usize {
        self.jacobian.nrows().saturating_sub(self.jacobian.ncols())
    }

    /// `s²·(JᵀJ)⁻¹` with `s² = RSS/(m − n)`; `None` if singular or no dof.
    pub fn covariance(&self) -> Option<DMatrix<f64>> {
        let dof = self.dof();
        if dof == 0 {
            return None;
        }
        let jtj = self.jacobian.transpose() * &self.jacobian;
        let inv = jtj.try_inverse()?;
        Some(inv * (self.cost / dof as f64))
    }

    /// Heteroscedasticity-consistent covariance
    /// `(JᵀJ)⁻¹·Jᵀdiag(r²)J·(JᵀJ)⁻¹·m/(m − n)` for per-point spreads `r`.
    pub fn robust_covariance(&self, spread: &DVector<f64>) -> Option<DMatrix<f64>> {
        let (m, dof) = (self.jacobian.nrows(), self.dof());
        if dof == 0 || spread.len() != m {
            return None;
        }
        let inv = (self.jacobian.transpose() * &self.jacobian).try_inverse()?;
        let mut weighted = self.jacobian.clone();
        for (mut row, r) in weighted.row_iter_mut().zip(spread.iter()) {
            row *= r * r;
        }
        let meat = self.jacobian.transpose() * weighted;
        Some(&inv * meat * &inv * (m as f64 / dof as f64))
    }

    pub fn std_errors(&self) -> Option<Vec<f64>> {
        let cov = self.covariance()?;
        (0..cov.nrows())
            .map(|i| (cov[(i, i)] >= 0.0).then(|| cov[(i, i)].sqrt()))
            .collect()
    }
}

pub fn levenberg_marquardt<P: Residuals + ?Sized>(
    problem: &P,
    start: &DVector<f64>,
    opts: &LmOptions,
) -> LmReport {
    let m = problem.n_residuals();
    let n = start.len();
    let mut p = start.clone();
    problem.project(&mut p);
    let mut r = DVector::zeros(m);
    let mut jac = DMatrix::zeros(m, n);
    problem.residuals(&p, &mut r);
    let mut cost = r.norm_squared();
    let mut lambda = opts.lambda;
    let mut converged = false;
    let mut iterations = 0;
    let mut trial_r = DVector::zeros(m);

    if !cost.is_finite() {
        problem.jacobian(&p, &mut jac);
        return LmReport {
            params: p,
            cost,
            converged,
            iterations,
            jacobian: jac,
        };
    }

    'outer: while iterations < opts.max_iter {
        iterations += 1;
        problem.jacobian(&p, &mut jac);
        let jt = jac.transpose();
        let g = &jt * &r;
        if g.amax() <= opts.gtol {
            converged = true;
            break;
        }
        let jtj = &jt * &jac;
        loop {
            let mut a = jtj.clone();
            for i in 0..n {
                a[(i, i)] += lambda * jtj[(i, i)].max(1e-12);
            }
            let step = match a.cholesky() {
                Some(ch) => ch.solve(&(-&g)),
                None => {
                    lambda *= 10.0;
                    if lambda > 1e16 {
                        break 'outer;
                    }
                    continue;
                }
            };
            let mut trial = &p + &step;
            problem.project(&mut trial);
            problem.residuals(&trial, &mut trial_r);
            let trial_cost = trial_r.norm_squared();
            if trial_cost.is_finite() && trial_cost <= cost {
                let moved = (&trial - &p).norm();
                let decrease = cost - trial_cost;
                p = trial;
                std::mem::swap(&mut r, &mut trial_r);
                cost = trial_cost;
                lambda = (lambda / 10.0).max(1e-15);
                if decrease <= opts.ftol * cost.max(f64::MIN_POSITIVE)
                    || moved <= opts.xtol * (p.norm() + opts.xtol)
                {
                    converged = true;
                    break 'outer;
                }
                break;
            }
            lambda *= 10.0;
            if lambda > 1e16 {
                // no downhill step left: a minimum within numerical precision
                converged = g.amax() <= 1e-6 * (1.0 + cost);
                break 'outer;
            }
        }
    }
    problem.jacobian(&p, &mut jac);
    LmReport {
        params: p,
        cost,
        converged,
        iterations,
        jacobian: jac,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    struct ExpDecay {
        t: Vec<f64>,
        y: Vec<f64>,
    }

    impl Residuals for ExpDecay {
        fn n_residuals(&self) -> usize {
            self.t.len()
        }

        fn residuals(&self, p: &DVector<f64>, out: &mut DVector<f64>) {
            for (i, (&t, &y)) in self.t.iter().zip(&self.y).enumerate() {
                out[i] = p[0] * (-p[1] * t).exp() + p[2] - y;
            }
        }
    }

    struct Rosenbrock;

    impl Residuals for Rosenbrock {
        fn n_residuals(&self) -> usize {
            2
        }

        fn residuals(&self, p: &DVector<f64>, out: &mut DVector<f64>) {
            out[0] = 10.0 * (p[1] - p[0] * p[0]);
            out[1] = 1.0 - p[0];
        }

        fn jacobian(&self, p: &DVector<f64>, jac: &mut DMatrix<f64>) {
            jac[(0, 0)] = -20.0 * p[0];
            jac[(0, 1)] = 10.0;
            jac[(1, 0)] = -1.0;
            jac[(1, 1)] = 0.0;
        }
    }

    #[test]
    fn recovers_exact_exponential() {
        let t: Vec<f64> = (0..40).map(|i| i as f64 * 0.1).collect();
        let y = t.iter().map(|&t| 2.5 * (-1.3 * t).exp() + 0.4).collect();
        let problem = ExpDecay { t, y };
        let rep = levenberg_marquardt(
            &problem,
            &DVector::from_vec(vec![1.0, 0.5, 0.0]),
            &LmOptions::default(),
        );
        assert!(rep.converged);
        for (got, want) in rep.params.iter().zip([2.5, 1.3, 0.4]) {
            assert!((got - want).abs() < 1e-8, "{got} vs {want}");
        }
        assert!(rep.cost < 1e-20);
    }

    #[test]
    fn rosenbrock_valley() {
        let rep = levenberg_marquardt(
            &Rosenbrock,
            &DVector::from_vec(vec![-1.2, 1.0]),
            &LmOptions::default(),
        );
        assert!(rep.converged);
        assert!((rep.params[0] - 1.0).abs() < 1e-8 && (rep.params[1] - 1.0).abs() < 1e-8);
    }

    #[test]
    fn covariance_matches_linear_regression() {
        // straight line: the LM covariance equals the closed-form OLS one
        let x: Vec<f64> = (0..20).map(|i| i as f64).collect();
        let noise = [
            0.3, -0.1, 0.2, -0.4, 0.1, 0.0, 0.25, -0.2, 0.05, -0.3, 0.15, 0.1, -0.05, 0.2, -0.15,
            0.3, -0.25, 0.0, 0.1, -0.1,
        ];
        let y: Vec<f64> = x
            .iter()
            .zip(noise)
            .map(|(x, e)| 1.0 + 0.5 * x + e)
            .collect();
        struct Line<'a>(&'a [f64], &'a [f64]);
        impl Residuals for Line<'_> {
            fn n_residuals(&self) -> usize {
                self.0.len()
            }
            fn residuals(&self, p: &DVector<f64>, out: &mut DVector<f64>) {
                for i in 0..self.0.len() {
                    out[i] = p[0] + p[1] * self.0[i] - self.1[i];
                }
            }
        }
        let rep = levenberg_marquardt(
            &Line(&x, &y),
            &DVector::from_vec(vec![0.0, 0.0]),
            &LmOptions::default(),
        );
        let n = x.len() as f64;
        let xm = x.iter().sum::<f64>() / n;
        let sxx: f64 = x.iter().map(|v| (v - xm).powi(2)).sum();
        let s2 = rep.cost / (n - 2.0);
        let se_slope = (s2 / sxx).sqrt();
        let got = rep.std_errors().unwrap();
        assert!((got[1] / se_slope - 1.0).abs() < 1e-6);

        // equal spreads reduce the sandwich to the pooled form
        let s = (rep.cost / n).sqrt();
        let robust = rep
            .robust_covariance(&DVector::from_element(x.len(), s))
            .unwrap();
        let pooled = rep.covariance().unwrap();
        assert!((robust - &pooled).amax() < 1e-9 * pooled.amax());
        assert!(rep.robust_covariance(&DVector::zeros(3)).is_none());
    }

    #[test]
    fn projection_enforces_bounds() {
        struct Bounded;
        impl Residuals for Bounded {
            fn n_residuals(&self) -> usize {
                1
            }
            fn residuals(&self, p: &DVector<f64>, out: &mut DVector<f64>) {
                out[0] = p[0] + 1.0;
            }
            fn project(&self, p: &mut DVector<f64>) {
                p[0] = p[0].max(0.0);
            }
        }
        let rep = levenberg_marquardt(
            &Bounded,
            &DVector::from_vec(vec![3.0]),
            &LmOptions::default(),
        );
        assert_eq!(rep.params[0], 0.0);
    }
}
