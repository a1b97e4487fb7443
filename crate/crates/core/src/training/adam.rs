use crate::numeric::Tensor;

use super::TrainError;

pub const BETA1: f64 = 0.9;
pub const BETA2: f64 = 0.999;
pub const EPSILON: f64 = 1e-8;

/// Adam with bias correction over a fixed list of parameter tensors.
#[derive(Clone, Debug, PartialEq)]
pub struct Adam {
    m: Vec<Tensor>,
    v: Vec<Tensor>,
    t: u64,
}

impl Adam {
    /// Zeroed moments shaped like `params`.
    pub fn new<'a>(params: impl IntoIterator<Item = &'a Tensor>) -> Self {
        let m: Vec<Tensor> = params
            .into_iter()
            .map(|p| Tensor::zeros(p.rows(), p.cols()))
            .collect();
        Self {
            v: m.clone(),
            m,
            t: 0,
        }
    }

    pub fn timestep(&self) -> u64 {
        self.t
    }

    /// One update. `term` names the loss in the error if anything becomes
    /// non-finite.
    pub fn step(
        &mut self,
        params: Vec<&mut Tensor>,
        grads: &[Tensor],
        lr: f64,
        term: &'static str,
    ) -> Result<(), TrainError> {
        if params.len() != self.m.len() || grads.len() != self.m.len() {
            return Err(TrainError::Config(format!(
                "adam: {} moments, {} params, {} grads",
                self.m.len(),
                params.len(),
                grads.len()
            )));
        }
        let t = self.t + 1;
        let bc1 = 1.0 - BETA1.powi(t as i32);
        let bc2 = 1.0 - BETA2.powi(t as i32);
        let mut updated = Vec::with_capacity(params.len());
        for (i, (p, g)) in params.iter().zip(grads).enumerate() {
            if p.shape() != g.shape() || p.shape() != self.m[i].shape() {
                return Err(TrainError::Config(format!(
                    "adam: parameter {i} is {:?}, gradient {:?}",
                    p.shape(),
                    g.shape()
                )));
            }
            if g.data().iter().any(|v| !v.is_finite()) {
                return Err(TrainError::NonFinite { term });
            }
            let m = self.m[i]
                .zip_map("adam_m", g, |m, g| BETA1 * m + (1.0 - BETA1) * g)
                .map_err(|_| TrainError::NonFinite { term })?;
            let v = self.v[i]
                .zip_map("adam_v", g, |v, g| BETA2 * v + (1.0 - BETA2) * g * g)
                .map_err(|_| TrainError::NonFinite { term })?;
            let step = m
                .zip_map("adam_step", &v, |m, v| {
                    lr * (m / bc1) / ((v / bc2).sqrt() + EPSILON)
                })
                .map_err(|_| TrainError::NonFinite { term })?;
            let new_p = p
                .zip_map("adam_apply", &step, |p, s| p - s)
                .map_err(|_| TrainError::NonFinite { term })?;
            updated.push((m, v, new_p));
        }
        // commit only after every tensor succeeded
        for ((p, (m, v, new_p)), i) in params.into_iter().zip(updated).zip(0..) {
            *p = new_p;
            self.m[i] = m;
            self.v[i] = v;
        }
        self.t = t;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_gradient_leaves_params_and_counts_step() {
        let mut p = Tensor::from_rows(&[[1.0, -2.0]]).unwrap();
        let before = p.clone();
        let mut opt = Adam::new([&p]);
        opt.step(vec![&mut p], &[Tensor::zeros(1, 2)], 0.1, "test").unwrap();
        assert_eq!(p, before);
        assert_eq!(opt.timestep(), 1);
    }

    #[test]
    fn first_step_moves_by_lr_times_sign() {
        for g in [3.0, -0.25] {
            let mut p = Tensor::scalar(0.0).unwrap();
            let mut opt = Adam::new([&p]);
            opt.step(vec![&mut p], &[Tensor::scalar(g).unwrap()], 1e-3, "t").unwrap();
            let expected = -1e-3 * g.signum();
            assert!((p.item().unwrap() - expected).abs() < 1e-9, "{g}");
        }
    }

    #[test]
    fn quadratic_bowl_converges() {
        // f(x) = Σ (x_i - c_i)², gradient 2(x - c)
        let target = [3.0, -1.5, 0.25];
        let mut p = Tensor::zeros(1, 3);
        let mut opt = Adam::new([&p]);
        let mut steps = 0;
        for _ in 0..2000 {
            let g = Tensor::new(
                1,
                3,
                p.data().iter().zip(target).map(|(x, c)| 2.0 * (x - c)).collect(),
            )
            .unwrap();
            opt.step(vec![&mut p], &[g], 0.05, "bowl").unwrap();
            steps += 1;
            if p.data().iter().zip(target).all(|(x, c)| (x - c).abs() < 1e-6) {
                break;
            }
        }
        assert!(
            p.data().iter().zip(target).all(|(x, c)| (x - c).abs() < 1e-6),
            "{p:?} after {steps}"
        );
    }

    #[test]
    fn non_finite_update_names_the_term() {
        let mut p = Tensor::scalar(f64::MAX).unwrap();
        let mut opt = Adam::new([&p]);
        let err = opt
            .step(vec![&mut p], &[Tensor::scalar(-1.0).unwrap()], f64::MAX, "task_loss")
            .unwrap_err();
        assert!(matches!(err, TrainError::NonFinite { term: "task_loss" }));
        assert_eq!(opt.timestep(), 0);
    }

    #[test]
    fn shape_mismatch_is_rejected() {
        let mut p = Tensor::zeros(2, 2);
        let mut opt = Adam::new([&p]);
        assert!(opt.step(vec![&mut p], &[Tensor::zeros(1, 2)], 0.1, "x").is_err());
    }
}
