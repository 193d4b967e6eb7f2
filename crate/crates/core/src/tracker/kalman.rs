//! Constant-velocity Kalman filter over a face box.
//!
//! State layout: (u, v, s, r, du, dv, ds) — center in pixels, scale
//! s = area in px², aspect r = w/h (modeled constant), then the center and
//! scale velocities. Measurements are (u, v, s, r) from a detection box.

use crate::geometry::BoundingBox;
use crate::num::{real, Real};

use super::{NoiseConfig, TrackerError};

pub(crate) const DIM: usize = 7;
const MEAS: usize = 4;

/// Lower bound applied to scale and aspect so boxes stay well-formed.
const EXTENT_EPS: f64 = 1e-6;

type Mat7<F> = [[F; DIM]; DIM];

/// Box-tracking Kalman filter plus the SORT lifecycle counters.
#[derive(Debug, Clone)]
pub struct KalmanBox<F> {
    x: [F; DIM],
    p: Mat7<F>,
    /// Frames since creation.
    pub age: u64,
    /// Frames since the last measurement update.
    pub time_since_update: u64,
    /// Total measurement updates received.
    pub hits: u64,
}

impl<F: Real> KalmanBox<F> {
    /// Start a track at a measured box: measurement becomes the mean, with
    /// the configured initial covariance (velocities unknown, hence large).
    pub fn new(bbox: &BoundingBox<F>, noise: &NoiseConfig<F>) -> Self {
        let z = box_to_measurement(bbox);
        let mut x = [F::zero(); DIM];
        x[..MEAS].copy_from_slice(&z);
        let mut p = [[F::zero(); DIM]; DIM];
        for i in 0..DIM {
            p[i][i] = noise.initial_covariance[i];
        }
        Self { x, p, age: 0, time_since_update: 0, hits: 1 }
    }

    /// Time update: advance the mean by one frame of constant velocity and
    /// propagate the covariance (`P = F P Fᵀ + Q`). Returns the predicted
    /// box. Scale is floored at a small ε; when that floor engages, the
    /// scale velocity is zeroed so the track does not keep shrinking.
    pub fn predict(&mut self, noise: &NoiseConfig<F>) -> BoundingBox<F> {
        let f = transition::<F>();
        self.x = mat_vec(&f, &self.x);
        let eps = real::<F>(EXTENT_EPS);
        if self.x[2] < eps {
            self.x[2] = eps;
            self.x[6] = F::zero();
        }
        if self.x[3] < eps {
            self.x[3] = eps;
        }
        let fp = mat_mul(&f, &self.p);
        let mut p = mat_mul_transpose(&fp, &f);
        for i in 0..DIM {
            p[i][i] += noise.process_noise[i];
        }
        self.p = p;
        self.age += 1;
        self.time_since_update += 1;
        self.bbox()
    }

    /// Measurement update with a detected box (Joseph-form covariance, so
    /// the result stays symmetric positive semi-definite).
    pub fn update(&mut self, bbox: &BoundingBox<F>, noise: &NoiseConfig<F>) -> Result<(), TrackerError> {
        let z = box_to_measurement(bbox);
        // Innovation y = z - Hx; H picks the first four state entries.
        let mut y = [F::zero(); MEAS];
        for i in 0..MEAS {
            y[i] = z[i] - self.x[i];
        }
        // S = H P Hᵀ + R is the top-left 4x4 block of P plus R.
        let mut s = [[F::zero(); MEAS]; MEAS];
        for i in 0..MEAS {
            for j in 0..MEAS {
                s[i][j] = self.p[i][j];
            }
            s[i][i] += noise.measurement_noise[i];
        }
        let s_inv = invert4(&s).ok_or(TrackerError::NumericalFailure)?;
        // K = P Hᵀ S⁻¹ is (7x4): columns of P restricted to measured rows.
        let mut k = [[F::zero(); MEAS]; DIM];
        for i in 0..DIM {
            for j in 0..MEAS {
                let mut acc = F::zero();
                for m in 0..MEAS {
                    acc += self.p[i][m] * s_inv[m][j];
                }
                k[i][j] = acc;
            }
        }
        for i in 0..DIM {
            let mut acc = F::zero();
            for j in 0..MEAS {
                acc += k[i][j] * y[j];
            }
            self.x[i] += acc;
        }
        let eps = real::<F>(EXTENT_EPS);
        self.x[2] = self.x[2].max(eps);
        self.x[3] = self.x[3].max(eps);
        // Joseph form: P = (I-KH) P (I-KH)ᵀ + K R Kᵀ.
        let mut ikh = [[F::zero(); DIM]; DIM];
        for i in 0..DIM {
            ikh[i][i] = F::one();
            for j in 0..MEAS {
                ikh[i][j] -= k[i][j];
            }
        }
        let ikh_p = mat_mul(&ikh, &self.p);
        let mut p = mat_mul_transpose(&ikh_p, &ikh);
        for i in 0..DIM {
            for j in 0..DIM {
                let mut acc = F::zero();
                for m in 0..MEAS {
                    acc += k[i][m] * noise.measurement_noise[m] * k[j][m];
                }
                p[i][j] += acc;
            }
        }
        // Enforce exact symmetry so rounding never accumulates skew.
        let half = real::<F>(0.5);
        for i in 0..DIM {
            for j in (i + 1)..DIM {
                let m = (p[i][j] + p[j][i]) * half;
                p[i][j] = m;
                p[j][i] = m;
            }
        }
        self.p = p;
        self.time_since_update = 0;
        self.hits += 1;
        Ok(())
    }

    /// Current mean as a corner-form box.
    pub fn bbox(&self) -> BoundingBox<F> {
        let eps = real::<F>(EXTENT_EPS);
        let s = self.x[2].max(eps);
        let r = self.x[3].max(eps);
        let w = (s * r).sqrt();
        let h = (s / r).sqrt();
        let half = real::<F>(0.5);
        BoundingBox::new(
            self.x[0] - half * w,
            self.x[1] - half * h,
            self.x[0] + half * w,
            self.x[1] + half * h,
        )
    }

    pub fn state(&self) -> &[F; DIM] {
        &self.x
    }

    pub fn covariance(&self) -> &[[F; DIM]; DIM] {
        &self.p
    }
}

pub(crate) fn box_to_measurement<F: Real>(bbox: &BoundingBox<F>) -> [F; MEAS] {
    let w = bbox.width();
    let h = bbox.height();
    let c = bbox.center();
    [c.x, c.y, w * h, w / h]
}

fn transition<F: Real>() -> Mat7<F> {
    let mut f = [[F::zero(); DIM]; DIM];
    for i in 0..DIM {
        f[i][i] = F::one();
    }
    f[0][4] = F::one();
    f[1][5] = F::one();
    f[2][6] = F::one();
    f
}

fn mat_vec<F: Real>(a: &Mat7<F>, x: &[F; DIM]) -> [F; DIM] {
    let mut out = [F::zero(); DIM];
    for i in 0..DIM {
        for j in 0..DIM {
            out[i] += a[i][j] * x[j];
        }
    }
    out
}

fn mat_mul<F: Real>(a: &Mat7<F>, b: &Mat7<F>) -> Mat7<F> {
    let mut out = [[F::zero(); DIM]; DIM];
    for i in 0..DIM {
        for j in 0..DIM {
            let mut acc = F::zero();
            for m in 0..DIM {
                acc += a[i][m] * b[m][j];
            }
            out[i][j] = acc;
        }
    }
    out
}

/// `A Bᵀ`.
fn mat_mul_transpose<F: Real>(a: &Mat7<F>, b: &Mat7<F>) -> Mat7<F> {
    let mut out = [[F::zero(); DIM]; DIM];
    for i in 0..DIM {
        for j in 0..DIM {
            let mut acc = F::zero();
            for m in 0..DIM {
                acc += a[i][m] * b[j][m];
            }
            out[i][j] = acc;
        }
    }
    out
}

/// Gauss-Jordan inverse with partial pivoting; None when singular.
fn invert4<F: Real>(m: &[[F; MEAS]; MEAS]) -> Option<[[F; MEAS]; MEAS]> {
    let mut a = *m;
    let mut inv = [[F::zero(); MEAS]; MEAS];
    for i in 0..MEAS {
        inv[i][i] = F::one();
    }
    for col in 0..MEAS {
        let pivot_row = (col..MEAS)
            .max_by(|&i, &j| a[i][col].abs().partial_cmp(&a[j][col].abs()).unwrap())?;
        if a[pivot_row][col].abs() <= real(1e-300) {
            return None;
        }
        a.swap(col, pivot_row);
        inv.swap(col, pivot_row);
        let pivot = a[col][col];
        for j in 0..MEAS {
            a[col][j] /= pivot;
            inv[col][j] /= pivot;
        }
        for row in 0..MEAS {
            if row != col {
                let factor = a[row][col];
                for j in 0..MEAS {
                    a[row][j] -= factor * a[col][j];
                    inv[row][j] -= factor * inv[col][j];
                }
            }
        }
    }
    Some(inv)
}

#[cfg(test)]
mod tests {
    use super::super::NoiseConfig;
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn noise() -> NoiseConfig<f64> {
        NoiseConfig::default()
    }

    fn square(cx: f64, cy: f64, side: f64) -> BoundingBox<f64> {
        BoundingBox::new(cx - side / 2.0, cy - side / 2.0, cx + side / 2.0, cy + side / 2.0)
    }

    fn trace(p: &[[f64; DIM]; DIM]) -> f64 {
        (0..DIM).map(|i| p[i][i]).sum()
    }

    /// Cholesky-based positive-semi-definiteness check.
    fn assert_symmetric_psd(p: &[[f64; DIM]; DIM]) {
        for i in 0..DIM {
            for j in 0..DIM {
                assert!((p[i][j] - p[j][i]).abs() < 1e-9, "asymmetry at ({i},{j})");
            }
        }
        let mut l = [[0.0f64; DIM]; DIM];
        for i in 0..DIM {
            for j in 0..=i {
                let mut sum = p[i][j];
                for m in 0..j {
                    sum -= l[i][m] * l[j][m];
                }
                if i == j {
                    assert!(sum > -1e-9, "negative pivot {sum} at {i}");
                    l[i][j] = sum.max(0.0).sqrt();
                } else {
                    l[i][j] = if l[j][j] > 0.0 { sum / l[j][j] } else { 0.0 };
                }
            }
        }
    }

    #[test]
    fn measurement_roundtrip() {
        let b = BoundingBox::new(10.0, 20.0, 110.0, 70.0);
        let k = KalmanBox::new(&b, &noise());
        let back = k.bbox();
        assert!((back.x1 - 10.0).abs() < 1e-9);
        assert!((back.y2 - 70.0).abs() < 1e-9);
    }

    #[test]
    fn zero_velocity_predict_is_identity_on_box() {
        let b = square(50.0, 50.0, 100.0);
        let mut k = KalmanBox::new(&b, &noise());
        let pred = k.predict(&noise());
        assert!((pred.x1 - b.x1).abs() < 1e-9 && (pred.y2 - b.y2).abs() < 1e-9);
        assert_eq!(k.time_since_update, 1);
        assert_eq!(k.age, 1);
    }

    #[test]
    fn velocity_shifts_center_linearly() {
        let mut k = KalmanBox::new(&square(50.0, 50.0, 10.0), &noise());
        // Inject a known velocity and coast two frames.
        let mut x = *k.state();
        x[4] = 2.0;
        k.x = x;
        k.predict(&noise());
        let pred = k.predict(&noise());
        assert!((pred.center().x - 54.0).abs() < 1e-9);
        assert!((pred.center().y - 50.0).abs() < 1e-9);
    }

    #[test]
    fn zero_innovation_keeps_mean() {
        let b = square(40.0, 60.0, 20.0);
        let mut k = KalmanBox::new(&b, &noise());
        let before = *k.state();
        k.update(&b, &noise()).unwrap();
        for (a, e) in k.state().iter().zip(&before) {
            assert!((a - e).abs() < 1e-9);
        }
        assert_eq!(k.hits, 2);
        assert_eq!(k.time_since_update, 0);
    }

    #[test]
    fn predict_covariance_matches_direct_formula_and_grows() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut k = KalmanBox::new(&square(50.0, 50.0, 30.0), &noise());
        for frame in 0..50 {
            let before = *k.covariance();
            let t_before = trace(&before);
            k.predict(&noise());
            // Direct oracle: P' = F P Fᵀ + Q computed element-wise from the
            // known sparsity of F (rows i couple to i and i+4).
            let couple = |i: usize| if i < 3 { Some(i + 4) } else { None };
            for i in 0..DIM {
                for j in 0..DIM {
                    let mut expect = before[i][j];
                    if let Some(iv) = couple(i) {
                        expect += before[iv][j];
                    }
                    if let Some(jv) = couple(j) {
                        expect += before[i][jv];
                    }
                    if let (Some(iv), Some(jv)) = (couple(i), couple(j)) {
                        expect += before[iv][jv];
                    }
                    if i == j {
                        expect += noise().process_noise[i];
                    }
                    let tol = 1e-9 * expect.abs().max(1.0);
                    assert!((k.covariance()[i][j] - expect).abs() < tol, "({i},{j})");
                }
            }
            assert!(trace(k.covariance()) >= t_before, "trace shrank at frame {frame}");
            assert_symmetric_psd(k.covariance());
            // Feed a noisy measurement so later predicts start from
            // realistic correlated covariances.
            let z = square(50.0 + rng.gen_range(-1.0..1.0), 50.0 + rng.gen_range(-1.0..1.0), 30.0);
            let t_pre_update = trace(k.covariance());
            k.update(&z, &noise()).unwrap();
            assert!(trace(k.covariance()) < t_pre_update, "update must contract");
            assert_symmetric_psd(k.covariance());
        }
    }

    #[test]
    fn repeated_measurements_converge() {
        let target = square(80.0, 40.0, 25.0);
        let mut k = KalmanBox::new(&square(50.0, 50.0, 30.0), &noise());
        for _ in 0..20 {
            k.predict(&noise());
            k.update(&target, &noise()).unwrap();
        }
        let got = k.bbox().center();
        let want = target.center();
        assert!((got.x - want.x).hypot(got.y - want.y) < 0.5, "center off: {got:?}");
    }

    /// Exact decoupled oracle: with diagonal noise, the 7-dim filter splits
    /// into independent (position, velocity) pairs and a scalar aspect
    /// filter. Simulate the (u, du) pair with a hand-rolled 2-state filter
    /// and demand agreement to near machine precision.
    #[test]
    fn matches_two_state_scalar_oracle() {
        let n = noise();
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let mut k = KalmanBox::new(&square(10.0, 10.0, 16.0), &n);

        let mut x = [10.0f64, 0.0];
        let mut p = [[n.initial_covariance[0], 0.0], [0.0, n.initial_covariance[4]]];
        let (qp, qv, r) = (n.process_noise[0], n.process_noise[4], n.measurement_noise[0]);

        for _ in 0..40 {
            k.predict(&n);
            // oracle predict
            x = [x[0] + x[1], x[1]];
            p = [
                [p[0][0] + p[1][0] + p[0][1] + p[1][1] + qp, p[0][1] + p[1][1]],
                [p[1][0] + p[1][1], p[1][1] + qv],
            ];
            let zu = 10.0 + rng.gen_range(-2.0..2.0);
            k.update(&square(zu, 10.0, 16.0), &n).unwrap();
            // oracle update
            let s = p[0][0] + r;
            let kg = [p[0][0] / s, p[1][0] / s];
            let y = zu - x[0];
            x = [x[0] + kg[0] * y, x[1] + kg[1] * y];
            // Joseph form with A = I - K H, H = [1 0]:
            // P' = A P Aᵀ + K r Kᵀ, expanded by hand.
            let a = 1.0 - kg[0];
            let p00 = a * a * p[0][0] + kg[0] * kg[0] * r;
            let p01 = a * (p[0][1] - kg[1] * p[0][0]) + kg[0] * kg[1] * r;
            let p11 =
                kg[1] * kg[1] * p[0][0] - kg[1] * (p[0][1] + p[1][0]) + p[1][1] + kg[1] * kg[1] * r;
            p = [[p00, p01], [p01, p11]];

            // Tolerances are relative: early covariances are O(1e4), where
            // reassociated float sums differ at ~1e-9 absolute.
            let close = |a: f64, b: f64| (a - b).abs() <= 1e-9 * b.abs().max(1.0);
            assert!(close(k.state()[0], x[0]), "u diverged");
            assert!(close(k.state()[4], x[1]), "du diverged");
            assert!(close(k.covariance()[0][0], p[0][0]));
            assert!(close(k.covariance()[0][4], p[0][1]));
            assert!(close(k.covariance()[4][4], p[1][1]));
        }
    }

    #[test]
    fn invert4_on_known_matrix() {
        let m: [[f64; 4]; 4] = [
            [4.0, 0.0, 0.0, 0.0],
            [0.0, 2.0, 0.0, 0.0],
            [0.0, 0.0, 5.0, 1.0],
            [0.0, 0.0, 1.0, 3.0],
        ];
        let inv = invert4(&m).unwrap();
        // Multiply back and compare with identity.
        for i in 0..4 {
            for j in 0..4 {
                let mut acc = 0.0;
                for k in 0..4 {
                    acc += m[i][k] * inv[k][j];
                }
                let expect = if i == j { 1.0 } else { 0.0 };
                assert!((acc - expect).abs() < 1e-12);
            }
        }
        let singular = [[1.0, 2.0, 0.0, 0.0], [2.0, 4.0, 0.0, 0.0], [0.0; 4], [0.0; 4]];
        assert!(invert4(&singular).is_none());
    }
}
