//! Dense 2-D tensors and a reverse-mode gradient tape.
//!
//! Only the handful of primitives the models need are provided: matrix
//! product, broadcast bias, ReLU, sigmoid, log-softmax, and the scalar
//! plumbing used by the losses. Every primitive's backward rule is checked
//! against central finite differences with [`grad_check`].

mod tape;
mod tensor;

pub use tape::{Gradients, Tape, Var};
pub use tensor::Tensor;

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum NumericError {
    #[error("{op}: incompatible shapes {}x{} and {}x{}", left.0, left.1, right.0, right.1)]
    Shape {
        op: &'static str,
        left: (usize, usize),
        right: (usize, usize),
    },
    #[error("{rows}x{cols} tensor needs {} values, got {len}", rows * cols)]
    Length { rows: usize, cols: usize, len: usize },
    #[error("{op}: produced a non-finite value")]
    NonFinite { op: &'static str },
    #[error("expected a 1x1 tensor, got {}x{}", shape.0, shape.1)]
    NotScalar { shape: (usize, usize) },
    #[error("label {label} out of range for {num_classes} classes")]
    Label { label: usize, num_classes: usize },
    #[error("finite-difference step must be positive, got {0}")]
    Step(f64),
}

/// Agreement between a tape gradient and central differences.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GradCheck {
    /// Largest entrywise `|a - n| / max(1e-8, |a| + |n|)`.
    pub max_entry_rel: f64,
    /// `‖a - n‖ / max(1e-12, ‖a‖ + ‖n‖)` over the whole gradient tensor.
    pub norm_rel: f64,
    /// Largest entrywise `|a - n|`.
    pub max_abs: f64,
}

/// Compares the tape gradient of a scalar function against central
/// differences and returns the largest entrywise relative error
/// `|a - n| / max(1e-8, |a| + |n|)`.
///
/// `f` records its computation on the provided tape, starting from the leaf
/// holding the probe point, and returns the scalar output.
pub fn grad_check<F>(f: F, point: &Tensor, step: f64) -> Result<f64, NumericError>
where
    F: Fn(&mut Tape, Var) -> Result<Var, NumericError>,
{
    grad_check_report(f, point, step).map(|r| r.max_entry_rel)
}

/// Like [`grad_check`], reporting entrywise, tensor-wise, and absolute
/// errors.
pub fn grad_check_report<F>(f: F, point: &Tensor, step: f64) -> Result<GradCheck, NumericError>
where
    F: Fn(&mut Tape, Var) -> Result<Var, NumericError>,
{
    if !(step > 0.0) {
        return Err(NumericError::Step(step));
    }
    let eval = |p: Tensor| -> Result<f64, NumericError> {
        let mut tape = Tape::new();
        let x = tape.leaf(p);
        let out = f(&mut tape, x)?;
        tape.value(out).item()
    };

    let mut tape = Tape::new();
    let x = tape.leaf(point.clone());
    let out = f(&mut tape, x)?;
    let analytic = tape.backward(out)?.wrt(x);

    let mut report = GradCheck {
        max_entry_rel: 0.0,
        norm_rel: 0.0,
        max_abs: 0.0,
    };
    let (mut diff_sq, mut a_sq, mut n_sq) = (0.0, 0.0, 0.0);
    for r in 0..point.rows() {
        for c in 0..point.cols() {
            let base = point.get(r, c);
            let mut plus = point.clone();
            plus.set(r, c, base + step)?;
            let mut minus = point.clone();
            minus.set(r, c, base - step)?;
            let numeric = (eval(plus)? - eval(minus)?) / (2.0 * step);
            if !numeric.is_finite() {
                return Err(NumericError::NonFinite { op: "grad_check" });
            }
            let a = analytic.get(r, c);
            let abs = (a - numeric).abs();
            report.max_abs = report.max_abs.max(abs);
            report.max_entry_rel = report
                .max_entry_rel
                .max(abs / (a.abs() + numeric.abs()).max(1e-8));
            diff_sq += abs * abs;
            a_sq += a * a;
            n_sq += numeric * numeric;
        }
    }
    report.norm_rel = diff_sq.sqrt() / (a_sq.sqrt() + n_sq.sqrt()).max(1e-12);
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    const H: f64 = 1e-5;

    fn random_tensor(rng: &mut ChaCha8Rng, rows: usize, cols: usize, scale: f64) -> Tensor {
        Tensor::new(
            rows,
            cols,
            (0..rows * cols).map(|_| rng.gen_range(-scale..scale)).collect(),
        )
        .unwrap()
    }

    /// Random linear functional so that every output entry matters.
    fn project(tape: &mut Tape, y: Var, rng_seed: u64) -> Result<Var, NumericError> {
        let cols = tape.value(y).cols();
        let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
        let w = tape.leaf(random_tensor(&mut rng, cols, 1, 1.0));
        let z = tape.matmul(y, w)?;
        Ok(tape.mean(z))
    }

    #[test]
    fn sum_of_squares_gradient_is_exact() {
        let p = Tensor::from_rows(&[[1.0, 2.0]]).unwrap();
        let sum_sq = |t: &mut Tape, x: Var| {
            let sq = t.mul(x, x)?;
            let m = t.mean(sq);
            t.scale(m, 2.0)
        };
        let mut tape = Tape::new();
        let x = tape.leaf(p.clone());
        let out = sum_sq(&mut tape, x).unwrap();
        assert_eq!(tape.value(out).item().unwrap(), 5.0);
        assert_eq!(tape.backward(out).unwrap().wrt(x).data(), &[2.0, 4.0]);

        let err = grad_check(sum_sq, &p, H).unwrap();
        assert!(err < 1e-8, "err = {err}");
    }

    #[test]
    fn report_separates_tiny_entries_from_the_tensor_error() {
        // softmax saturated on the first row: its off-class gradients are ~1e-9
        let p = Tensor::from_rows(&[[20.0, 0.0], [0.3, -0.2]]).unwrap();
        let lse = |t: &mut Tape, x: Var| {
            let lp = t.log_softmax(x);
            let w = t.leaf(Tensor::from_rows(&[[0.0, 1.0], [1.0, 0.0]])?);
            let picked = t.mul(lp, w)?;
            let m = t.mean(picked);
            t.scale(m, -1.0)
        };
        let r = grad_check_report(lse, &p, H).unwrap();
        assert!(r.norm_rel < 1e-9, "{r:?}");
        assert!(r.max_abs < 1e-9, "{r:?}");
        assert_eq!(r.max_entry_rel, grad_check(lse, &p, H).unwrap());
    }

    #[test]
    fn rejects_bad_step() {
        let p = Tensor::zeros(1, 1);
        assert!(matches!(
            grad_check(|t, x| Ok(t.mean(x)), &p, 0.0),
            Err(NumericError::Step(_))
        ));
    }

    #[test]
    fn reports_non_finite_probe() {
        let p = Tensor::from_rows(&[[1e-6]]).unwrap();
        // log of a point that the probe pushes negative
        let res = grad_check(
            |t, x| {
                let l = t.log(x)?;
                Ok(t.mean(l))
            },
            &p,
            1e-5,
        );
        assert!(matches!(res, Err(NumericError::NonFinite { .. })));
    }

    #[test]
    fn matmul_gradients_match_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let a = random_tensor(&mut rng, 3, 4, 1.0);
        let b = random_tensor(&mut rng, 4, 2, 1.0);
        let b2 = b.clone();
        let err_a = grad_check(
            |t, x| {
                let bb = t.leaf(b2.clone());
                let y = t.matmul(x, bb)?;
                project(t, y, 1)
            },
            &a,
            H,
        )
        .unwrap();
        let a2 = a.clone();
        let err_b = grad_check(
            |t, x| {
                let aa = t.leaf(a2.clone());
                let y = t.matmul(aa, x)?;
                project(t, y, 2)
            },
            &b,
            H,
        )
        .unwrap();
        assert!(err_a < 1e-6 && err_b < 1e-6, "{err_a} {err_b}");
    }

    #[test]
    fn sigmoid_gradient_at_fixed_points() {
        for x in [-2.0, -0.5, 1.3] {
            let p = Tensor::scalar(x).unwrap();
            let err = grad_check(
                |t, x| {
                    let s = t.sigmoid(x);
                    Ok(t.mean(s))
                },
                &p,
                H,
            )
            .unwrap();
            assert!(err < 1e-8, "x = {x}: {err}");
        }
    }

    #[test]
    fn log_softmax_gradient_random() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let p = random_tensor(&mut rng, 2, 5, 3.0);
        let err = grad_check(
            |t, x| {
                let l = t.log_softmax(x);
                project(t, l, 3)
            },
            &p,
            H,
        )
        .unwrap();
        assert!(err < 1e-6, "{err}");
    }

    /// All primitives, 100 randomized trials each.
    #[test]
    fn primitive_gradients_randomized() {
        let mut rng = ChaCha8Rng::seed_from_u64(2024);
        for trial in 0..100u64 {
            let rows = rng.gen_range(1..5);
            let cols = rng.gen_range(1..5);
            let x = random_tensor(&mut rng, rows, cols, 2.0);
            // keep relu probes away from the kink
            let x_relu = x.map("shift", |v| if v.abs() < 1e-3 { v + 0.01 } else { v }).unwrap();
            let other = random_tensor(&mut rng, cols, 3, 1.0);
            let bias = random_tensor(&mut rng, 1, cols, 1.0);
            let positive = x.map("abs", |v| v.abs() + 0.5).unwrap();

            let checks: Vec<(&str, f64)> = vec![
                (
                    "matmul",
                    grad_check(
                        |t, x| {
                            let o = t.leaf(other.clone());
                            let y = t.matmul(x, o)?;
                            project(t, y, trial)
                        },
                        &x,
                        H,
                    )
                    .unwrap(),
                ),
                (
                    "add_rowvec",
                    grad_check(
                        |t, b| {
                            let xx = t.leaf(x.clone());
                            let y = t.add_rowvec(xx, b)?;
                            project(t, y, trial)
                        },
                        &bias,
                        H,
                    )
                    .unwrap(),
                ),
                (
                    "relu",
                    grad_check(
                        |t, x| {
                            let y = t.relu(x);
                            project(t, y, trial)
                        },
                        &x_relu,
                        H,
                    )
                    .unwrap(),
                ),
                (
                    "sigmoid",
                    grad_check(
                        |t, x| {
                            let y = t.sigmoid(x);
                            project(t, y, trial)
                        },
                        &x,
                        H,
                    )
                    .unwrap(),
                ),
                (
                    "log_softmax",
                    grad_check(
                        |t, x| {
                            let y = t.log_softmax(x);
                            project(t, y, trial)
                        },
                        &x,
                        H,
                    )
                    .unwrap(),
                ),
                (
                    "log",
                    grad_check(
                        |t, x| {
                            let y = t.log(x)?;
                            project(t, y, trial)
                        },
                        &positive,
                        H,
                    )
                    .unwrap(),
                ),
            ];
            for (name, err) in checks {
                // A tiny analytic gradient can leave the ratio dominated by
                // cancellation noise; guard with the absolute floor in grad_check.
                assert!(err < 1e-4, "{name} trial {trial}: {err}");
            }
        }
    }

    #[test]
    fn composed_pipeline_gradient() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let x = random_tensor(&mut rng, 4, 3, 1.0);
        let w1 = random_tensor(&mut rng, 3, 6, 1.0);
        let b1 = random_tensor(&mut rng, 1, 6, 0.5);
        let w2 = random_tensor(&mut rng, 6, 4, 1.0);
        let err = grad_check(
            |t, w| {
                let xx = t.leaf(x.clone());
                let bb = t.leaf(b1.clone());
                let w2v = t.leaf(w2.clone());
                let h = t.matmul(xx, w)?;
                let h = t.add_rowvec(h, bb)?;
                let h = t.relu(h);
                let o = t.matmul(h, w2v)?;
                let lp = t.log_softmax(o);
                t.weighted_nll(lp, &[0, 1, 2, 3], &[1.0, 0.5, 0.25, 1.0], 4.0)
            },
            &w1,
            H,
        )
        .unwrap();
        assert!(err < 1e-4, "{err}");
    }

    proptest! {
        #[test]
        fn log_softmax_rows_normalize(row in prop::collection::vec(-1000.0f64..1000.0, 1..8)) {
            let t = Tensor::from_rows(&[row]).unwrap().log_softmax();
            let s: f64 = t.data().iter().map(|v| v.exp()).sum();
            prop_assert!((s - 1.0).abs() < 1e-9);
        }

        #[test]
        fn sigmoid_is_antisymmetric(x in -800.0f64..800.0) {
            let p = Tensor::scalar(x).unwrap().sigmoid().item().unwrap();
            let n = Tensor::scalar(-x).unwrap().sigmoid().item().unwrap();
            prop_assert!((p + n - 1.0).abs() < 1e-12);
        }
    }
}
