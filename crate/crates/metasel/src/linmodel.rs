//! Robust feature scaling and L1-regularized, class-weighted logistic
//! regression. Both standard classifiers (morphological and texture) and the
//! descriptor selector backend are instances of this model.
//!
//! The solver is proximal gradient (ISTA) with backtracking line search on
//! the smooth part, zero initialization, and an objective-decrease stopping
//! rule, so fits are deterministic and the objective trace is non-increasing
//! by construction.

use ndarray::{Array2, ArrayView2};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Median / interquartile-range scaler, fitted per feature.
///
/// Median uses the lower of the two middle order statistics for even n;
/// quartiles use linear interpolation of order statistics (index `(n-1)*p`).
/// A zero IQR is replaced by 1.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RobustScaler {
    pub medians: Vec<f64>,
    pub iqrs: Vec<f64>,
}

impl RobustScaler {
    pub fn fit(x: &ArrayView2<f64>) -> Result<RobustScaler> {
        let (n, d) = x.dim();
        if n == 0 {
            return Err(Error::Model("cannot fit scaler on 0 samples".into()));
        }
        let mut medians = Vec::with_capacity(d);
        let mut iqrs = Vec::with_capacity(d);
        let mut column = vec![0.0; n];
        for j in 0..d {
            for i in 0..n {
                column[i] = x[(i, j)];
            }
            column.sort_by(|a, b| a.partial_cmp(b).expect("finite features"));
            medians.push(column[(n - 1) / 2]);
            let q1 = interpolate_order_stat(&column, 0.25);
            let q3 = interpolate_order_stat(&column, 0.75);
            let iqr = q3 - q1;
            iqrs.push(if iqr > 0.0 { iqr } else { 1.0 });
        }
        Ok(RobustScaler { medians, iqrs })
    }

    /// Identity scaler of the given dimension.
    pub fn identity(dim: usize) -> RobustScaler {
        RobustScaler {
            medians: vec![0.0; dim],
            iqrs: vec![1.0; dim],
        }
    }

    pub fn dim(&self) -> usize {
        self.medians.len()
    }

    pub fn transform_row(&self, row: &[f64]) -> Vec<f64> {
        row.iter()
            .zip(self.medians.iter().zip(&self.iqrs))
            .map(|(v, (m, q))| (v - m) / q)
            .collect()
    }

    pub fn transform(&self, x: &ArrayView2<f64>) -> Array2<f64> {
        let (n, d) = x.dim();
        Array2::from_shape_fn((n, d), |(i, j)| {
            (x[(i, j)] - self.medians[j]) / self.iqrs[j]
        })
    }
}

fn interpolate_order_stat(sorted: &[f64], p: f64) -> f64 {
    let n = sorted.len();
    if n == 1 {
        return sorted[0];
    }
    let idx = (n - 1) as f64 * p;
    let lo = idx.floor() as usize;
    let hi = idx.ceil() as usize;
    let frac = idx - lo as f64;
    sorted[lo] + (sorted[hi] - sorted[lo]) * frac
}

/// Class weights inversely proportional to class frequency, normalized so
/// the mean weight is 1: `w_c = n / (2 * n_c)`.
pub fn class_weights_from(y: &[u8]) -> Result<(f64, f64)> {
    let n1 = y.iter().filter(|&&v| v == 1).count();
    let n0 = y.len() - n1;
    if n0 == 0 || n1 == 0 {
        return Err(Error::Model(format!(
            "both classes must be present (n0={n0}, n1={n1})"
        )));
    }
    let n = y.len() as f64;
    Ok((n / (2.0 * n0 as f64), n / (2.0 * n1 as f64)))
}

/// Solver options. `lambda` is the L1 strength; the bias is unpenalized.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct FitOptions {
    pub lambda: f64,
    pub max_iter: usize,
    pub tol: f64,
}

impl Default for FitOptions {
    fn default() -> Self {
        FitOptions {
            lambda: 0.01,
            max_iter: 10_000,
            tol: 1e-8,
        }
    }
}

impl FitOptions {
    pub fn with_lambda(lambda: f64) -> FitOptions {
        FitOptions {
            lambda,
            ..Default::default()
        }
    }
}

/// Solver diagnostics; the objective trace includes the initial objective
/// and is non-increasing.
#[derive(Debug, Clone)]
pub struct FitDiagnostics {
    pub objective_trace: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
}

/// Stable softplus: `ln(1 + exp(z))`.
fn softplus(z: f64) -> f64 {
    z.max(0.0) + (-z.abs()).exp().ln_1p()
}

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// Weighted mean binary cross-entropy of the linear model `(w, b)` on
/// already-scaled features: `(1/n) sum_i w_{y_i} (softplus(z_i) - y_i z_i)`.
pub fn weighted_bce(
    x: &ArrayView2<f64>,
    y: &[u8],
    class_weights: (f64, f64),
    w: &[f64],
    b: f64,
) -> f64 {
    let n = x.nrows();
    let mut total = 0.0;
    for i in 0..n {
        let z: f64 = x.row(i).iter().zip(w).map(|(xv, wv)| xv * wv).sum::<f64>() + b;
        let yi = y[i] as f64;
        let omega = if y[i] == 1 { class_weights.1 } else { class_weights.0 };
        total += omega * (softplus(z) - yi * z);
    }
    total / n as f64
}

/// Gradient of [`weighted_bce`] in `(w, b)`.
pub fn weighted_bce_grad(
    x: &ArrayView2<f64>,
    y: &[u8],
    class_weights: (f64, f64),
    w: &[f64],
    b: f64,
) -> (Vec<f64>, f64) {
    let (n, d) = x.dim();
    let mut gw = vec![0.0; d];
    let mut gb = 0.0;
    for i in 0..n {
        let z: f64 = x.row(i).iter().zip(w).map(|(xv, wv)| xv * wv).sum::<f64>() + b;
        let omega = if y[i] == 1 { class_weights.1 } else { class_weights.0 };
        let delta = omega * (sigmoid(z) - y[i] as f64) / n as f64;
        for (g, xv) in gw.iter_mut().zip(x.row(i)) {
            *g += delta * xv;
        }
        gb += delta;
    }
    (gw, gb)
}

/// Full objective: weighted BCE + lambda * ||w||_1 (bias unpenalized).
pub fn l1_objective(
    x: &ArrayView2<f64>,
    y: &[u8],
    class_weights: (f64, f64),
    lambda: f64,
    w: &[f64],
    b: f64,
) -> f64 {
    weighted_bce(x, y, class_weights, w, b) + lambda * w.iter().map(|v| v.abs()).sum::<f64>()
}

fn soft_threshold(v: f64, t: f64) -> f64 {
    if v > t {
        v - t
    } else if v < -t {
        v + t
    } else {
        0.0
    }
}

/// Proximal-gradient (ISTA) solver with backtracking, zero initialization.
/// `x` must already be scaled. Returns weights, bias, and diagnostics.
pub fn fit_logistic(
    x: &ArrayView2<f64>,
    y: &[u8],
    class_weights: (f64, f64),
    opts: &FitOptions,
) -> Result<(Vec<f64>, f64, FitDiagnostics)> {
    let (n, d) = x.dim();
    if n != y.len() {
        return Err(Error::Model(format!(
            "feature rows ({n}) and labels ({}) differ",
            y.len()
        )));
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::Model("non-finite feature value".into()));
    }
    if y.iter().all(|&v| v == 0) || y.iter().all(|&v| v == 1) {
        return Err(Error::Model("training labels contain a single class".into()));
    }

    let mut w = vec![0.0; d];
    let mut b = 0.0;
    let mut smooth = weighted_bce(x, y, class_weights, &w, b);
    let mut objective = smooth; // ||0||_1 = 0
    let mut trace = vec![objective];
    let mut step = 1.0f64;
    let mut converged = false;
    let mut iterations = 0;

    for iter in 0..opts.max_iter {
        iterations = iter + 1;
        let (gw, gb) = weighted_bce_grad(x, y, class_weights, &w, b);

        // backtracking on the smooth majorization
        let (w_new, b_new, smooth_new) = loop {
            let w_cand: Vec<f64> = w
                .iter()
                .zip(&gw)
                .map(|(wv, gv)| soft_threshold(wv - step * gv, step * opts.lambda))
                .collect();
            let b_cand = b - step * gb;
            let smooth_cand = weighted_bce(x, y, class_weights, &w_cand, b_cand);
            let mut linear = 0.0;
            let mut sq = 0.0;
            for ((wc, wv), gv) in w_cand.iter().zip(&w).zip(&gw) {
                let delta = wc - wv;
                linear += gv * delta;
                sq += delta * delta;
            }
            let db = b_cand - b;
            linear += gb * db;
            sq += db * db;
            let bound = smooth + linear + sq / (2.0 * step) + 1e-14 * smooth.abs().max(1.0);
            if smooth_cand <= bound || step < 1e-18 {
                break (w_cand, b_cand, smooth_cand);
            }
            step *= 0.5;
        };

        w = w_new;
        b = b_new;
        smooth = smooth_new;
        let new_objective =
            smooth + opts.lambda * w.iter().map(|v| v.abs()).sum::<f64>();
        trace.push(new_objective);
        let decrease = objective - new_objective;
        objective = new_objective;
        if decrease >= 0.0 && decrease < opts.tol {
            converged = true;
            break;
        }
        step = (step * 1.25).min(1e6);
    }

    Ok((
        w,
        b,
        FitDiagnostics {
            objective_trace: trace,
            iterations,
            converged,
        },
    ))
}

/// A fitted L1 logistic classifier with its scaler and feature names.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LinearModel {
    pub feature_names: Vec<String>,
    pub weights: Vec<f64>,
    pub bias: f64,
    pub lambda: f64,
    pub class_weights: (f64, f64),
    pub scaler: RobustScaler,
}

impl LinearModel {
    /// Fit scaler + class weights + logistic weights on raw features.
    pub fn fit(
        x_raw: &ArrayView2<f64>,
        y: &[u8],
        feature_names: Vec<String>,
        opts: &FitOptions,
    ) -> Result<LinearModel> {
        Ok(Self::fit_with_diagnostics(x_raw, y, feature_names, opts)?.0)
    }

    pub fn fit_with_diagnostics(
        x_raw: &ArrayView2<f64>,
        y: &[u8],
        feature_names: Vec<String>,
        opts: &FitOptions,
    ) -> Result<(LinearModel, FitDiagnostics)> {
        if feature_names.len() != x_raw.ncols() {
            return Err(Error::Model(format!(
                "feature_names ({}) and columns ({}) differ",
                feature_names.len(),
                x_raw.ncols()
            )));
        }
        if x_raw.iter().any(|v| !v.is_finite()) {
            return Err(Error::Model("non-finite feature value".into()));
        }
        let class_weights = class_weights_from(y)?;
        let scaler = RobustScaler::fit(x_raw)?;
        let x_scaled = scaler.transform(x_raw);
        let (weights, bias, diagnostics) =
            fit_logistic(&x_scaled.view(), y, class_weights, opts)?;
        Ok((
            LinearModel {
                feature_names,
                weights,
                bias,
                lambda: opts.lambda,
                class_weights,
                scaler,
            },
            diagnostics,
        ))
    }

    /// Predicted malignancy probability for a raw feature vector, clamped
    /// to (1e-9, 1 - 1e-9).
    pub fn predict(&self, x_raw: &[f64]) -> Result<f64> {
        if x_raw.len() != self.weights.len() {
            return Err(Error::Model(format!(
                "feature vector has {} values, model expects {}",
                x_raw.len(),
                self.weights.len()
            )));
        }
        let scaled = self.scaler.transform_row(x_raw);
        let z: f64 = scaled
            .iter()
            .zip(&self.weights)
            .map(|(xv, wv)| xv * wv)
            .sum::<f64>()
            + self.bias;
        Ok(sigmoid(z).clamp(1e-9, 1.0 - 1e-9))
    }

    pub fn zero_weight_count(&self) -> usize {
        self.weights.iter().filter(|&&w| w == 0.0).count()
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<LinearModel> {
        Ok(serde_json::from_str(text)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn column(values: &[f64]) -> Array2<f64> {
        Array2::from_shape_vec((values.len(), 1), values.to_vec()).unwrap()
    }

    #[test]
    fn scaler_on_simple_column() {
        let x = column(&[1.0, 2.0, 3.0, 4.0, 5.0]);
        let s = RobustScaler::fit(&x.view()).unwrap();
        assert_eq!(s.medians, vec![3.0]);
        assert_eq!(s.iqrs, vec![2.0]);
        assert_eq!(s.transform_row(&[3.0]), vec![0.0]);
        assert_eq!(s.transform_row(&[5.0]), vec![1.0]);
    }

    #[test]
    fn scaler_constant_column_gets_unit_iqr() {
        let x = column(&[7.0, 7.0, 7.0]);
        let s = RobustScaler::fit(&x.view()).unwrap();
        assert_eq!(s.iqrs, vec![1.0]);
        assert_eq!(s.transform_row(&[7.0]), vec![0.0]);
    }

    #[test]
    fn scaler_is_robust_to_outliers() {
        let x = column(&[1.0, 2.0, 3.0, 1000.0]);
        let s = RobustScaler::fit(&x.view()).unwrap();
        // lower middle of 4 values
        assert_eq!(s.medians, vec![2.0]);
        // Q1 = 1.75, Q3 = 252.25 by linear interpolation
        assert!((s.iqrs[0] - 250.5).abs() < 1e-12, "iqr {}", s.iqrs[0]);
        let t = s.transform_row(&[3.0])[0];
        assert!(t.abs() <= 2.0, "robust transform {t}");
    }

    #[test]
    fn scaler_even_n_uses_lower_middle() {
        let x = column(&[1.0, 2.0, 3.0, 4.0]);
        let s = RobustScaler::fit(&x.view()).unwrap();
        assert_eq!(s.medians, vec![2.0]);
    }

    #[test]
    fn class_weights_match_inverse_frequency() {
        let mut y = vec![0u8; 444];
        y.extend(vec![1u8; 302]);
        let (w0, w1) = class_weights_from(&y).unwrap();
        assert!((w0 - 746.0 / 888.0).abs() < 1e-12);
        assert!((w1 - 746.0 / 604.0).abs() < 1e-12);

        assert_eq!(class_weights_from(&[0, 1, 0, 1]).unwrap(), (1.0, 1.0));
        let (a, b) = class_weights_from(&[0, 0, 0, 1]).unwrap();
        assert!((a - 2.0 / 3.0).abs() < 1e-12);
        assert!((b - 2.0).abs() < 1e-12);

        assert!(class_weights_from(&[0, 0]).is_err());
    }

    #[test]
    fn huge_lambda_shrinks_to_the_prior() {
        let x = array![[0.5, -1.0], [1.0, 0.3], [-0.2, 0.8], [-1.0, -0.5]];
        let y = [0u8, 1, 0, 1];
        let opts = FitOptions::with_lambda(1e6);
        let (w, b, _) = fit_logistic(&x.view(), &y, (1.0, 1.0), &opts).unwrap();
        assert!(w.iter().all(|&v| v == 0.0), "{w:?}");
        assert!(b.abs() < 1e-6, "bias {b}");

        let model = LinearModel {
            feature_names: vec!["a".into(), "b".into()],
            weights: w,
            bias: b,
            lambda: 1e6,
            class_weights: (1.0, 1.0),
            scaler: RobustScaler::identity(2),
        };
        let p = model.predict(&[3.0, -2.0]).unwrap();
        assert!((p - 0.5).abs() < 1e-6);
    }

    #[test]
    fn separable_data_gets_positive_weight() {
        let x = column(&[-2.0, -1.0, -0.5, 0.5, 1.0, 2.0]);
        let y = [0u8, 0, 0, 1, 1, 1];
        let opts = FitOptions::with_lambda(1e-4);
        let (w, _, _) = fit_logistic(&x.view(), &y, (1.0, 1.0), &opts).unwrap();
        assert!(w[0] > 0.0, "w = {w:?}");
    }

    #[test]
    fn predict_checks_dimension_and_limits() {
        let model = LinearModel {
            feature_names: vec!["a".into()],
            weights: vec![1.0],
            bias: 0.0,
            lambda: 0.0,
            class_weights: (1.0, 1.0),
            scaler: RobustScaler::identity(1),
        };
        assert!((model.predict(&[0.0]).unwrap() - 0.5).abs() < 1e-12);
        assert!(model.predict(&[1e9]).unwrap() >= 1.0 - 1e-8);
        assert!(model.predict(&[1.0, 2.0]).is_err());
    }

    #[test]
    fn objective_trace_is_monotone() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let x = Array2::from_shape_fn((40, 6), |_| rng.gen_range(-1.0..1.0));
        let y: Vec<u8> = (0..40).map(|_| rng.gen_range(0..2) as u8).collect();
        let (_, _, diag) =
            fit_logistic(&x.view(), &y, (1.0, 1.0), &FitOptions::with_lambda(0.05)).unwrap();
        for pair in diag.objective_trace.windows(2) {
            assert!(
                pair[1] <= pair[0] + 1e-12,
                "objective increased: {} -> {}",
                pair[0],
                pair[1]
            );
        }
        assert!(diag.converged);
    }

    #[test]
    fn smooth_gradient_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let x = Array2::from_shape_fn((15, 4), |_| rng.gen_range(-2.0..2.0));
        let y: Vec<u8> = (0..15).map(|i| (i % 2) as u8).collect();
        let cw = class_weights_from(&y).unwrap();

        for trial in 0..10 {
            let mut rng = ChaCha8Rng::seed_from_u64(100 + trial);
            let w: Vec<f64> = (0..4).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let b: f64 = rng.gen_range(-1.0..1.0);
            let (gw, gb) = weighted_bce_grad(&x.view(), &y, cw, &w, b);
            let eps = 1e-6;
            for j in 0..4 {
                let mut wp = w.clone();
                let mut wm = w.clone();
                wp[j] += eps;
                wm[j] -= eps;
                let fd = (weighted_bce(&x.view(), &y, cw, &wp, b)
                    - weighted_bce(&x.view(), &y, cw, &wm, b))
                    / (2.0 * eps);
                let rel = (gw[j] - fd).abs() / fd.abs().max(1e-8);
                assert!(rel < 1e-5, "w[{j}]: analytic {} vs fd {fd}", gw[j]);
            }
            let fd_b = (weighted_bce(&x.view(), &y, cw, &w, b + eps)
                - weighted_bce(&x.view(), &y, cw, &w, b - eps))
                / (2.0 * eps);
            let rel = (gb - fd_b).abs() / fd_b.abs().max(1e-8);
            assert!(rel < 1e-5, "bias: analytic {gb} vs fd {fd_b}");
        }
    }

    #[test]
    fn sparsity_grows_with_lambda() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let x = Array2::from_shape_fn((60, 10), |_| rng.gen_range(-1.0..1.0));
        let y: Vec<u8> = (0..60)
            .map(|i| u8::from(x[(i, 0)] + 0.5 * x[(i, 3)] + 0.1 * rng.gen_range(-1.0..1.0) > 0.0))
            .collect();
        let mut zeros_prev = 0;
        for lambda in [0.001, 0.01, 0.05, 0.2, 1.0] {
            let (w, _, _) =
                fit_logistic(&x.view(), &y, (1.0, 1.0), &FitOptions::with_lambda(lambda))
                    .unwrap();
            let zeros = w.iter().filter(|&&v| v == 0.0).count();
            assert!(
                zeros >= zeros_prev,
                "lambda {lambda}: zeros {zeros} < previous {zeros_prev}"
            );
            zeros_prev = zeros;
        }
    }

    #[test]
    fn scaler_idempotent_on_its_medians() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let x = Array2::from_shape_fn((17, 5), |_| rng.gen_range(-10.0..10.0));
        let s = RobustScaler::fit(&x.view()).unwrap();
        let t = s.transform_row(&s.medians.clone());
        assert!(t.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn prescaled_fit_equals_internal_scaling() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let x = Array2::from_shape_fn((30, 4), |_| rng.gen_range(-5.0..15.0));
        let y: Vec<u8> = (0..30).map(|i| (i % 2) as u8).collect();
        let names: Vec<String> = (0..4).map(|i| format!("f{i}")).collect();
        let opts = FitOptions::with_lambda(0.02);

        let with_scaler = LinearModel::fit(&x.view(), &y, names.clone(), &opts).unwrap();

        let pre = with_scaler.scaler.transform(&x.view());
        let (w, b, _) =
            fit_logistic(&pre.view(), &y, class_weights_from(&y).unwrap(), &opts).unwrap();
        let manual = LinearModel {
            feature_names: names,
            weights: w,
            bias: b,
            lambda: opts.lambda,
            class_weights: with_scaler.class_weights,
            scaler: RobustScaler::identity(4),
        };

        for i in 0..30 {
            let raw: Vec<f64> = x.row(i).to_vec();
            let scaled: Vec<f64> = pre.row(i).to_vec();
            let p1 = with_scaler.predict(&raw).unwrap();
            let p2 = manual.predict(&scaled).unwrap();
            assert!((p1 - p2).abs() < 1e-8, "{p1} vs {p2}");
        }
    }

    #[test]
    fn json_round_trip_preserves_model() {
        let model = LinearModel {
            feature_names: vec!["a".into(), "b".into()],
            weights: vec![0.25, -1.5],
            bias: 0.125,
            lambda: 0.01,
            class_weights: (0.8, 1.2),
            scaler: RobustScaler {
                medians: vec![1.0, 2.0],
                iqrs: vec![0.5, 3.0],
            },
        };
        let text = model.to_json().unwrap();
        assert!(text.contains("feature_names"));
        assert!(text.contains("scaler"));
        let back = LinearModel::from_json(&text).unwrap();
        assert_eq!(back.weights, model.weights);
        assert_eq!(back.scaler, model.scaler);
    }

    #[test]
    fn single_class_labels_rejected() {
        let x = column(&[1.0, 2.0, 3.0]);
        let err = fit_logistic(&x.view(), &[1, 1, 1], (1.0, 1.0), &FitOptions::default())
            .unwrap_err();
        assert!(err.to_string().contains("single class"));
    }

    #[test]
    fn non_finite_features_rejected() {
        let x = column(&[1.0, f64::NAN, 3.0]);
        assert!(fit_logistic(&x.view(), &[0, 1, 0], (1.0, 1.0), &FitOptions::default()).is_err());
    }
}
