use super::matrix::Matrix;
use crate::error::{Error, Result};

/// Adaptive-moment optimizer with bias correction.
#[derive(Debug, Clone)]
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    step: u64,
    first: Vec<Matrix>,
    second: Vec<Matrix>,
}

impl Adam {
    pub fn new(shapes: &[(usize, usize)], lr: f64) -> Self {
        Adam {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            step: 0,
            first: shapes.iter().map(|&(r, c)| Matrix::zeros(r, c)).collect(),
            second: shapes.iter().map(|&(r, c)| Matrix::zeros(r, c)).collect(),
        }
    }

    pub fn for_params(params: &[&Matrix], lr: f64) -> Self {
        let shapes: Vec<_> = params.iter().map(|p| p.shape()).collect();
        Adam::new(&shapes, lr)
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    /// Applies one update. Nothing is modified if any gradient is
    /// non-finite or mis-shaped.
    pub fn step(&mut self, params: &mut [&mut Matrix], grads: &[Matrix]) -> Result<()> {
        if params.len() != self.first.len() || grads.len() != self.first.len() {
            return Err(Error::DimensionMismatch {
                expected: self.first.len(),
                actual: grads.len().min(params.len()),
                context: "optimizer parameter count",
            });
        }
        for (i, (p, g)) in params.iter().zip(grads).enumerate() {
            if p.shape() != self.first[i].shape() || g.shape() != self.first[i].shape() {
                return Err(Error::DimensionMismatch {
                    expected: self.first[i].len(),
                    actual: g.len(),
                    context: "optimizer parameter shape",
                });
            }
            if let Some(pos) = g.data().iter().position(|x| !x.is_finite()) {
                return Err(Error::NonFinite(format!(
                    "gradient of parameter {i} at flat index {pos} ({})",
                    g.data()[pos]
                )));
            }
        }
        self.step += 1;
        let bc1 = 1.0 - self.beta1.powi(self.step as i32);
        let bc2 = 1.0 - self.beta2.powi(self.step as i32);
        for ((p, g), (m, v)) in params
            .iter_mut()
            .zip(grads)
            .zip(self.first.iter_mut().zip(self.second.iter_mut()))
        {
            for (((x, &gi), mi), vi) in p
                .data_mut()
                .iter_mut()
                .zip(g.data())
                .zip(m.data_mut())
                .zip(v.data_mut())
            {
                *mi = self.beta1 * *mi + (1.0 - self.beta1) * gi;
                *vi = self.beta2 * *vi + (1.0 - self.beta2) * gi * gi;
                let m_hat = *mi / bc1;
                let v_hat = *vi / bc2;
                *x -= self.lr * m_hat / (v_hat.sqrt() + self.eps);
            }
        }
        Ok(())
    }
}

/// Rescales `grads` in place so their joint L2 norm is at most `max_norm`;
/// returns the norm before clipping.
pub fn clip_grad_norm(grads: &mut [Matrix], max_norm: f64) -> f64 {
    let norm = grads.iter().map(Matrix::sq_norm).sum::<f64>().sqrt();
    if norm > max_norm && norm.is_finite() {
        let k = max_norm / norm;
        grads.iter_mut().for_each(|g| g.scale_assign(k));
    }
    norm
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_gradient_leaves_params() {
        let mut p = Matrix::from_vec(1, 2, vec![0.5, -1.0]);
        let mut opt = Adam::new(&[(1, 2)], 0.1);
        opt.step(&mut [&mut p], &[Matrix::zeros(1, 2)]).unwrap();
        assert_eq!(p.data(), &[0.5, -1.0]);
    }

    #[test]
    fn first_step_moves_by_lr() {
        for g in [3.0, -0.02] {
            let mut p = Matrix::from_vec(1, 1, vec![1.0]);
            let mut opt = Adam::new(&[(1, 1)], 0.01);
            opt.step(&mut [&mut p], &[Matrix::filled(1, 1, g)]).unwrap();
            let moved = p.get(0, 0) - 1.0;
            assert!((moved + 0.01 * g.signum()).abs() < 1e-6, "{moved}");
        }
    }

    #[test]
    fn quadratic_bowl_converges() {
        let target = [1.5, -0.75, 0.2];
        let mut p = Matrix::zeros(1, 3);
        let mut opt = Adam::new(&[(1, 3)], 0.01);
        let loss = |p: &Matrix| -> f64 {
            p.data()
                .iter()
                .zip(&target)
                .map(|(x, t)| (x - t).powi(2))
                .sum()
        };
        let mut steps = 0;
        while loss(&p) >= 1e-6 && steps < 1000 {
            let g = Matrix::from_vec(
                1,
                3,
                p.data()
                    .iter()
                    .zip(&target)
                    .map(|(x, t)| 2.0 * (x - t))
                    .collect(),
            );
            opt.step(&mut [&mut p], &[g]).unwrap();
            steps += 1;
        }
        assert!(loss(&p) < 1e-6, "loss {} after {steps} steps", loss(&p));
        assert_eq!(opt.step_count(), steps);
    }

    #[test]
    fn non_finite_gradient_rejected() {
        let mut p = Matrix::zeros(1, 2);
        let mut opt = Adam::new(&[(1, 2)], 0.01);
        let err = opt
            .step(
                &mut [&mut p],
                &[Matrix::from_vec(1, 2, vec![0.0, f64::NAN])],
            )
            .unwrap_err();
        assert!(matches!(err, Error::NonFinite(_)));
        assert_eq!(p, Matrix::zeros(1, 2));
        assert_eq!(opt.step_count(), 0);
    }

    #[test]
    fn clipping() {
        let mut g = vec![Matrix::from_vec(1, 2, vec![3.0, 4.0])];
        let norm = clip_grad_norm(&mut g, 1.0);
        assert_eq!(norm, 5.0);
        assert!((g[0].sq_norm() - 1.0).abs() < 1e-12);
    }
}
