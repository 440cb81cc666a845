//! Finite-difference gradient oracle and the comparison harness used to
//! validate the tape's reverse-mode gradients.

use super::scalar::Scalar;
use super::tensor::Tensor;

/// Central differences `(f(x+hᵢeᵢ) − f(x−hᵢeᵢ)) / 2hᵢ` per element, with
/// the per-element step `hᵢ = h·max(1, |xᵢ|)`.
pub fn finite_diff_grad<T: Scalar>(
    mut f: impl FnMut(&Tensor<T>) -> T,
    x: &Tensor<T>,
    h: f64,
) -> Tensor<T> {
    let mut probe = x.clone();
    let mut grad = Tensor::zeros(x.shape().to_vec());
    for i in 0..x.len() {
        let orig = x.data()[i];
        let hi = T::from_f64(h) * T::one().max(orig.abs());
        probe.data_mut()[i] = orig + hi;
        let plus = f(&probe);
        probe.data_mut()[i] = orig - hi;
        let minus = f(&probe);
        probe.data_mut()[i] = orig;
        grad.data_mut()[i] = (plus - minus) / (hi + hi);
    }
    grad
}

/// Worst relative error between an analytic and a numeric gradient, with
/// the numeric tensor's own magnitude as the scale. Near-zero gradients
/// are compared against the floor rather than blowing up the ratio.
pub fn worst_relative_error<T: Scalar>(analytic: &Tensor<T>, numeric: &Tensor<T>) -> f64 {
    const FLOOR: f64 = 1e-6;
    debug_assert_eq!(analytic.shape(), numeric.shape());
    let scale = numeric
        .data()
        .iter()
        .map(|v| v.as_f64().abs())
        .fold(FLOOR, f64::max);
    analytic
        .data()
        .iter()
        .zip(numeric.data())
        .map(|(a, n)| (a.as_f64() - n.as_f64()).abs() / scale)
        .fold(0.0, f64::max)
}

/// Compare named analytic gradients against their numeric counterparts.
/// Inputs must share names and order.
pub fn compare_gradients<T: Scalar>(
    analytic: &[(String, Tensor<T>)],
    numeric: &[(String, Tensor<T>)],
    tolerance: f64,
) -> GradCheckReport {
    assert_eq!(analytic.len(), numeric.len(), "gradient list length mismatch");
    let checks = analytic
        .iter()
        .zip(numeric)
        .map(|((name, a), (n_name, n))| {
            assert_eq!(name, n_name, "gradient name mismatch");
            TensorCheck {
                name: name.clone(),
                worst_rel_error: worst_relative_error(a, n),
                elements: a.len(),
            }
        })
        .collect();
    GradCheckReport { checks, tolerance }
}

/// One tensor's entry in a gradient-check report.
#[derive(Debug, Clone)]
pub struct TensorCheck {
    pub name: String,
    pub worst_rel_error: f64,
    pub elements: usize,
}

/// Outcome of checking every parameter tensor against finite differences.
#[derive(Debug, Clone)]
pub struct GradCheckReport {
    pub checks: Vec<TensorCheck>,
    pub tolerance: f64,
}

impl GradCheckReport {
    pub fn worst(&self) -> f64 {
        self.checks
            .iter()
            .map(|c| c.worst_rel_error)
            .fold(0.0, f64::max)
    }

    pub fn passed(&self) -> bool {
        self.worst() < self.tolerance
    }
}

impl std::fmt::Display for GradCheckReport {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let name_w = self
            .checks
            .iter()
            .map(|c| c.name.len())
            .max()
            .unwrap_or(4)
            .max(6);
        writeln!(f, "{:<name_w$}  {:>8}  {:>12}", "tensor", "elems", "worst rel")?;
        for c in &self.checks {
            writeln!(
                f,
                "{:<name_w$}  {:>8}  {:>12.3e}",
                c.name, c.elements, c.worst_rel_error
            )?;
        }
        writeln!(
            f,
            "worst {:.3e} vs tolerance {:.1e}: {}",
            self.worst(),
            self.tolerance,
            if self.passed() { "PASS" } else { "FAIL" }
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::tape::Tape;

    #[test]
    fn sum_of_squares_matches_closed_form() {
        let x = Tensor::<f64>::vector(vec![1.0, 2.0]);
        let g = finite_diff_grad(
            |t| t.data().iter().map(|v| v * v).sum(),
            &x,
            1e-5,
        );
        assert!((g.data()[0] - 2.0).abs() < 1e-8);
        assert!((g.data()[1] - 4.0).abs() < 1e-8);
    }

    #[test]
    fn linear_function_is_exact_for_any_step() {
        let x = Tensor::<f64>::vector(vec![0.3, -1.7, 4.0]);
        for &h in &[1e-4, 1e-2, 0.5, 3.0] {
            let g = finite_diff_grad(
                |t| 2.0 * t.data()[0] - 3.0 * t.data()[1] + 0.5 * t.data()[2],
                &x,
                h,
            );
            assert!((g.data()[0] - 2.0).abs() < 1e-9, "h={h}");
            assert!((g.data()[1] + 3.0).abs() < 1e-9, "h={h}");
            assert!((g.data()[2] - 0.5).abs() < 1e-9, "h={h}");
        }
    }

    #[test]
    fn gelu_gradient_matches_finite_differences() {
        use rand::Rng;
        use rand::SeedableRng;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        // Magnitudes where the derivative is O(1); high-precision check.
        let x = Tensor::<f64>::vector((0..16).map(|_| rng.random_range(0.5..2.5)).collect());
        let mut tape = Tape::<f64>::new();
        let v = tape.param(x.clone());
        let y = tape.gelu(v);
        let loss = tape.sum(y);
        let analytic = tape.backward(loss).unwrap().grad(v);
        let numeric = finite_diff_grad(
            |t| {
                let mut tp = Tape::<f64>::new();
                let v = tp.leaf(t.clone());
                let y = tp.gelu(v);
                let s = tp.sum(y);
                tp.value(s).item()
            },
            &x,
            1e-5,
        );
        assert!(worst_relative_error(&analytic, &numeric) < 1e-6);
    }

    #[test]
    fn every_tape_op_matches_finite_differences() {
        // A composite touching matmul, add_row, layer_norm, softmax, gelu,
        // slice, concat, row, sigmoid and bce, over many seeds.
        use rand::Rng;
        use rand::SeedableRng;
        for seed in 0..20 {
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let w = Tensor::<f64>::matrix(
                3,
                4,
                (0..12).map(|_| rng.random_range(-1.0..1.0)).collect(),
            )
            .unwrap();
            let x = Tensor::<f64>::matrix(
                2,
                3,
                (0..6).map(|_| rng.random_range(-1.0..1.0)).collect(),
            )
            .unwrap();
            let run = |wt: &Tensor<f64>, xt: &Tensor<f64>, grad_w: bool| -> (f64, Option<Tensor<f64>>) {
                let mut tape = Tape::<f64>::new();
                let wv = if grad_w { tape.param(wt.clone()) } else { tape.leaf(wt.clone()) };
                let xv = tape.leaf(xt.clone());
                let gain = tape.leaf(Tensor::filled(vec![4], 1.2));
                let bias = tape.leaf(Tensor::filled(vec![4], -0.1));
                let h = tape.matmul(xv, wv).unwrap();
                let hb = tape.add_row(h, bias).unwrap();
                let ln = tape.layer_norm(hb, gain, bias, 1e-5).unwrap();
                let sm = tape.softmax(ln, 1).unwrap();
                let ge = tape.gelu(sm);
                let left = tape.slice_cols(ge, 0, 2).unwrap();
                let right = tape.slice_cols(ge, 2, 2).unwrap();
                let cat = tape.concat(&[left, right], 1).unwrap();
                let r0 = tape.row(cat, 0).unwrap();
                let r1 = tape.row(cat, 1).unwrap();
                let both = tape.concat(&[r0, r1], 0).unwrap();
                let s = tape.sum(both);
                let p = tape.sigmoid(s);
                let loss = tape.bce(p, true).unwrap();
                let val = tape.value(loss).item();
                if grad_w {
                    let grads = tape.backward(loss).unwrap();
                    (val, Some(grads.grad(wv)))
                } else {
                    (val, None)
                }
            };
            let (_, analytic) = run(&w, &x, true);
            let analytic = analytic.unwrap();
            let numeric = finite_diff_grad(|wt| run(wt, &x, false).0, &w, 1e-5);
            let err = worst_relative_error(&analytic, &numeric);
            assert!(err < 1e-4, "seed {seed}: rel err {err}");
        }
    }
}
