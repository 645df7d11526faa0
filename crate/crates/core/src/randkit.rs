//! Distribution primitives used by the samplers.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::{Distribution, Gamma, StandardNormal};
use statrs::function::gamma::ln_gamma;

use crate::error::{Error, Result};
use crate::model::NodeId;

/// Default lower clamp on |Cζ| before forming IG(1/|Cζ|, 1).
pub const LAMBDA_CLAMP: f64 = 1e-8;

/// Floor applied to probabilities inside logarithms.
pub const LOG_FLOOR: f64 = 1e-12;

pub fn ln_floor(p: f64) -> f64 {
    p.max(LOG_FLOOR).ln()
}

/// Gaussian in canonical form: density ∝ exp(νᵀx − ½xᵀΛx).
#[derive(Debug, Clone, PartialEq)]
pub struct CanonicalGaussian {
    pub potential: DVector<f64>,
    pub precision: DMatrix<f64>,
}

impl CanonicalGaussian {
    pub fn new(potential: DVector<f64>, precision: DMatrix<f64>) -> Result<Self> {
        if precision.nrows() != potential.len() || precision.ncols() != potential.len() {
            return Err(Error::Param(
                "canonical gaussian dimensions disagree".into(),
            ));
        }
        Ok(Self {
            potential,
            precision,
        })
    }

    fn factor(&self, node: Option<NodeId>) -> Result<nalgebra::Cholesky<f64, nalgebra::Dyn>> {
        if let Some(c) = self.precision.clone().cholesky() {
            return Ok(c);
        }
        let d = self.precision.nrows();
        let scale = self
            .precision
            .diagonal()
            .iter()
            .fold(0.0f64, |m, v| m.max(v.abs()))
            .max(1.0);
        let mut jitter = 1e-10 * scale;
        for _ in 0..3 {
            let m = &self.precision + DMatrix::identity(d, d) * jitter;
            if let Some(c) = m.cholesky() {
                return Ok(c);
            }
            jitter *= 100.0;
        }
        Err(Error::NotSpd {
            node,
            what: "margin precision".into(),
        })
    }

    /// Moment form (Λ⁻¹ν, Λ⁻¹).
    pub fn moments(&self, node: Option<NodeId>) -> Result<(DVector<f64>, DMatrix<f64>)> {
        let c = self.factor(node)?;
        Ok((c.solve(&self.potential), c.inverse()))
    }

    /// Log density of the normalised Gaussian at `x`.
    pub fn log_density(&self, x: &DVector<f64>, node: Option<NodeId>) -> Result<f64> {
        let c = self.factor(node)?;
        let mean = c.solve(&self.potential);
        let diff = x - mean;
        let q = diff.dot(&(&self.precision * &diff));
        let log_det_prec = 2.0 * c.l().diagonal().iter().map(|v| v.ln()).sum::<f64>();
        Ok(-0.5 * diff.len() as f64 * crate::gauss::LN_2PI + 0.5 * log_det_prec - 0.5 * q)
    }
}

/// Draw from N(Λ⁻¹ν, Λ⁻¹) through the Cholesky factor of Λ.
pub fn sample_canonical_gaussian<R: Rng + ?Sized>(
    g: &CanonicalGaussian,
    node: Option<NodeId>,
    rng: &mut R,
) -> Result<DVector<f64>> {
    let c = g.factor(node)?;
    let mean = c.solve(&g.potential);
    let eps = DVector::from_fn(mean.len(), |_, _| rng.sample::<f64, _>(StandardNormal));
    let dev = c
        .l()
        .tr_solve_lower_triangular(&eps)
        .ok_or_else(|| Error::Numerical("triangular solve failed".into()))?;
    Ok(mean + dev)
}

/// Generalised inverse Gaussian parameters, density ∝ x^{ρ-1} exp{-(ax + b/x)/2}.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GigParams {
    pub rho: f64,
    pub a: f64,
    pub b: f64,
}

impl GigParams {
    /// `b = 0` is admitted: it is the Gamma(ρ, a/2) limit reached when ζ = 0.
    pub fn new(rho: f64, a: f64, b: f64) -> Result<Self> {
        if !(a > 0.0) || !(b >= 0.0) || !rho.is_finite() {
            return Err(Error::Param(format!(
                "gig parameters need a > 0, b >= 0 (got a={a}, b={b})"
            )));
        }
        Ok(Self { rho, a, b })
    }

    /// The augmentation law of λ given ζ: GIG(½, 1, C²ζ²).
    pub fn augmentation(c: f64, zeta: f64) -> Result<Self> {
        Self::new(0.5, 1.0, (c * zeta).powi(2))
    }
}

/// Unnormalised GIG density.
pub fn gig_density(x: f64, p: &GigParams) -> Result<f64> {
    if !(x > 0.0) {
        return Err(Error::Domain(format!("gig density needs x > 0 (got {x})")));
    }
    Ok(x.powf(p.rho - 1.0) * (-(p.a * x + p.b / x) / 2.0).exp())
}

/// Inverse Gaussian IG(μ, shape) by the Michael–Schucany–Haas transformation.
///
/// The root of the quadratic is written as 4μw/(w+√(w²+4w))² with w = μv²/shape,
/// which avoids the cancellation of the textbook form when μ is huge.
pub fn sample_inverse_gaussian<R: Rng + ?Sized>(mu: f64, shape: f64, rng: &mut R) -> Result<f64> {
    if !(mu > 0.0) || !(shape > 0.0) || !mu.is_finite() || !shape.is_finite() {
        return Err(Error::Param(format!(
            "inverse gaussian needs finite mu > 0 and shape > 0 (got {mu}, {shape})"
        )));
    }
    let v: f64 = rng.sample(StandardNormal);
    let w = mu * v * v / shape;
    let x = if w > 1.0 {
        let t = 1.0 + (1.0 + 4.0 / w).sqrt();
        mu * 4.0 / (w * t * t)
    } else {
        let t = w + (w * w + 4.0 * w).sqrt();
        if t == 0.0 {
            mu
        } else {
            mu * 4.0 * w / (t * t)
        }
    };
    let u: f64 = rng.random();
    let out = if u <= mu / (mu + x) { x } else { mu * (mu / x) };
    if out > 0.0 && out.is_finite() {
        Ok(out)
    } else {
        Err(Error::Numerical(format!(
            "inverse gaussian draw {out} for mu={mu}, shape={shape}"
        )))
    }
}

/// λ ~ GIG(½, 1, C²ζ²), drawn as the reciprocal of IG(1/max(|Cζ|, clamp), 1).
pub fn sample_lambda<R: Rng + ?Sized>(c: f64, zeta: f64, clamp: f64, rng: &mut R) -> Result<f64> {
    if !(c > 0.0) {
        return Err(Error::Param(format!(
            "margin cost must be positive (got {c})"
        )));
    }
    if !(clamp > 0.0) {
        return Err(Error::Param(format!(
            "lambda clamp must be positive (got {clamp})"
        )));
    }
    if !zeta.is_finite() {
        return Err(Error::Numerical(format!("non-finite violation {zeta}")));
    }
    let m = (c * zeta).abs().max(clamp);
    Ok(1.0 / sample_inverse_gaussian(1.0 / m, 1.0, rng)?)
}

/// log Gamma(a, 1) draw, exact in log space for small shapes.
fn sample_log_gamma<R: Rng + ?Sized>(a: f64, rng: &mut R) -> f64 {
    if a >= 1.0 {
        let g: f64 = Gamma::new(a, 1.0).expect("shape checked").sample(rng);
        g.ln()
    } else {
        let g: f64 = Gamma::new(a + 1.0, 1.0).expect("shape checked").sample(rng);
        let u: f64 = 1.0 - rng.random::<f64>();
        g.ln() + u.ln() / a
    }
}

/// Dirichlet draw by normalised Gamma variates. Zero concentrations give exactly zero.
pub fn sample_dirichlet<R: Rng + ?Sized>(conc: &[f64], rng: &mut R) -> Result<Vec<f64>> {
    if conc.iter().any(|a| !(*a >= 0.0) || !a.is_finite()) {
        return Err(Error::Param(
            "dirichlet concentrations must be finite and non-negative".into(),
        ));
    }
    if !conc.iter().any(|a| *a > 0.0) {
        return Err(Error::Param("dirichlet concentrations are all zero".into()));
    }
    let logs: Vec<f64> = conc
        .iter()
        .map(|&a| {
            if a > 0.0 {
                sample_log_gamma(a, rng)
            } else {
                f64::NEG_INFINITY
            }
        })
        .collect();
    let mut out = crate::gauss::normalise_log(&logs);
    // renormalise so the simplex closes to rounding
    let s: f64 = out.iter().sum();
    out.iter_mut().for_each(|v| *v /= s);
    Ok(out)
}

/// Beta(a, b) draw.
pub fn sample_beta<R: Rng + ?Sized>(a: f64, b: f64, rng: &mut R) -> Result<f64> {
    if !(a > 0.0) || !(b > 0.0) {
        return Err(Error::Param(format!(
            "beta parameters must be positive (got {a}, {b})"
        )));
    }
    Ok(sample_dirichlet(&[a, b], rng)?[0])
}

/// Log Dirichlet density over the support of `conc`. Entries with zero
/// concentration must be zero in `x`, otherwise the density is -∞. Positive
/// entries use their exact log however small; only entries that underflowed
/// to zero are floored.
pub fn log_dirichlet_density(x: &[f64], conc: &[f64]) -> f64 {
    let mut total = 0.0;
    let mut sum_a = 0.0;
    for (&xi, &a) in x.iter().zip(conc) {
        if a > 0.0 {
            total += (a - 1.0) * if xi > 0.0 { xi.ln() } else { LOG_FLOOR.ln() } - ln_gamma(a);
            sum_a += a;
        } else if xi > 0.0 {
            return f64::NEG_INFINITY;
        }
    }
    total + ln_gamma(sum_a)
}

pub fn log_beta_density(x: f64, a: f64, b: f64) -> f64 {
    log_dirichlet_density(&[x, 1.0 - x], &[a, b])
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn rng() -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(17)
    }

    fn mean_var(v: &[f64]) -> (f64, f64) {
        let n = v.len() as f64;
        let m = v.iter().sum::<f64>() / n;
        let s = v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0);
        (m, s)
    }

    #[test]
    fn gig_plug_in() {
        let p = GigParams::new(0.5, 1.0, 1.0).unwrap();
        assert!((gig_density(1.0, &p).unwrap() - (-1.0f64).exp()).abs() < 1e-15);
        assert!(gig_density(0.0, &p).is_err());
        assert!(gig_density(-1.0, &p).is_err());
    }

    #[test]
    fn gig_ratio_hand_expansion() {
        // rho=1/2, a=1, b=4: f(2x)/f(x) = 2^{-1/2} exp{-(x - 1/x)/2 ... } expanded by hand
        let p = GigParams::new(0.5, 1.0, 4.0).unwrap();
        for &x in &[0.3, 1.0, 2.5, 7.0] {
            let r = gig_density(2.0 * x, &p).unwrap() / gig_density(x, &p).unwrap();
            let hand = (0.5f64).sqrt() * (-(2.0 * x + 2.0 / x) / 2.0 + (x + 4.0 / x) / 2.0).exp();
            assert!((r - hand).abs() < 1e-12 * hand.max(1.0));
        }
    }

    #[test]
    fn ig_rejects_bad_params() {
        let mut r = rng();
        assert!(sample_inverse_gaussian(0.0, 1.0, &mut r).is_err());
        assert!(sample_inverse_gaussian(1.0, -1.0, &mut r).is_err());
    }

    #[test]
    fn ig_moments() {
        let mut r = rng();
        let v: Vec<f64> = (0..100_000)
            .map(|_| sample_inverse_gaussian(2.0, 1.0, &mut r).unwrap())
            .collect();
        assert!(v.iter().all(|x| *x > 0.0));
        let (m, _) = mean_var(&v);
        let se = (8.0f64 / 1e5).sqrt();
        assert!((m - 2.0).abs() < 3.0 * se, "mean {m}");
    }

    #[test]
    fn ig_tight_variance() {
        let mut r = rng();
        let v: Vec<f64> = (0..100_000)
            .map(|_| sample_inverse_gaussian(1.0, 1e6, &mut r).unwrap())
            .collect();
        let (_, s) = mean_var(&v);
        assert!((s / 1e-6 - 1.0).abs() < 0.03, "var {s}");
    }

    #[test]
    fn ig_huge_mean_is_stable() {
        // mu = 1e8 is the clamp limit; reciprocal draws follow chi-square(1)
        let mut r = rng();
        let v: Vec<f64> = (0..100_000)
            .map(|_| 1.0 / sample_inverse_gaussian(1e8, 1.0, &mut r).unwrap())
            .collect();
        let (m, s) = mean_var(&v);
        assert!((m - 1.0).abs() < 3.0 * (2.0f64 / 1e5).sqrt(), "mean {m}");
        assert!((s - 2.0).abs() < 0.15, "var {s}");
    }

    #[test]
    fn lambda_clamped_reciprocal_mean() {
        let mut r = rng();
        let clamp = 1e-3;
        let v: Vec<f64> = (0..100_000)
            .map(|_| 1.0 / sample_lambda(1.0, 0.0, clamp, &mut r).unwrap())
            .collect();
        let (m, _) = mean_var(&v);
        // IG(1/clamp, 1) has mean 1/clamp and sd (1/clamp)^{3/2}
        let se = (1.0f64 / clamp).powf(1.5) / (1e5f64).sqrt();
        assert!((m - 1.0 / clamp).abs() < 3.0 * se, "mean {m}");
    }

    #[test]
    fn lambda_is_positive_and_finite() {
        let mut r = rng();
        for &z in &[-3.0, -1e-12, 0.0, 1e-30, 2.0, 50.0] {
            for _ in 0..1000 {
                let l = sample_lambda(1e-4, z, LAMBDA_CLAMP, &mut r).unwrap();
                assert!(l > 0.0 && l.is_finite());
            }
        }
        assert!(sample_lambda(0.0, 1.0, LAMBDA_CLAMP, &mut r).is_err());
    }

    #[test]
    fn canonical_gaussian_trivial_mean() {
        let g =
            CanonicalGaussian::new(DVector::from_element(3, 4.0), DMatrix::identity(3, 3) * 4.0)
                .unwrap();
        let (m, c) = g.moments(None).unwrap();
        assert!((m - DVector::from_element(3, 1.0)).norm() < 1e-15);
        assert!((c - DMatrix::identity(3, 3) * 0.25).norm() < 1e-15);
    }

    #[test]
    fn canonical_gaussian_moments() {
        let mut r = rng();
        let g = CanonicalGaussian::new(DVector::zeros(2), DMatrix::identity(2, 2)).unwrap();
        let n = 100_000;
        let draws: Vec<DVector<f64>> = (0..n)
            .map(|_| sample_canonical_gaussian(&g, None, &mut r).unwrap())
            .collect();
        for d in 0..2 {
            let v: Vec<f64> = draws.iter().map(|x| x[d]).collect();
            let (m, s) = mean_var(&v);
            assert!(m.abs() < 3.0 / (n as f64).sqrt());
            assert!((s - 1.0).abs() < 0.02);
        }
        let cross = draws.iter().map(|x| x[0] * x[1]).sum::<f64>() / n as f64;
        assert!(cross.abs() < 3.0 / (n as f64).sqrt());
    }

    #[test]
    fn canonical_gaussian_correlated_moments() {
        let mut r = rng();
        let prec = DMatrix::from_row_slice(2, 2, &[2.0, 0.8, 0.8, 1.0]);
        let g = CanonicalGaussian::new(DVector::from_vec(vec![1.0, -1.0]), prec.clone()).unwrap();
        let (mean, cov) = g.moments(None).unwrap();
        let n = 200_000;
        let mut m = DVector::zeros(2);
        let mut s = DMatrix::zeros(2, 2);
        let draws: Vec<_> = (0..n)
            .map(|_| sample_canonical_gaussian(&g, None, &mut r).unwrap())
            .collect();
        for x in &draws {
            m += x;
        }
        m /= n as f64;
        for x in &draws {
            let d = x - &m;
            s += &d * d.transpose();
        }
        s /= (n - 1) as f64;
        for i in 0..2 {
            assert!((m[i] - mean[i]).abs() < 3.0 * (cov[(i, i)] / n as f64).sqrt());
            for j in 0..2 {
                assert!((s[(i, j)] - cov[(i, j)]).abs() < 0.02);
            }
        }
    }

    #[test]
    fn canonical_gaussian_error_names_node() {
        let mut r = rng();
        let g = CanonicalGaussian::new(
            DVector::zeros(2),
            DMatrix::from_row_slice(2, 2, &[1.0, 3.0, 3.0, 1.0]),
        )
        .unwrap();
        let e = sample_canonical_gaussian(&g, Some(42), &mut r).unwrap_err();
        assert!(e.to_string().contains("42"));
    }

    #[test]
    fn dirichlet_degenerate_and_errors() {
        let mut r = rng();
        assert_eq!(
            sample_dirichlet(&[3.0, 0.0], &mut r).unwrap(),
            vec![1.0, 0.0]
        );
        assert!(sample_dirichlet(&[0.0, 0.0], &mut r).is_err());
        assert!(sample_dirichlet(&[1.0, -1.0], &mut r).is_err());
    }

    #[test]
    fn dirichlet_moments() {
        let mut r = rng();
        let n = 100_000;
        let mut sums = [0.0; 3];
        for _ in 0..n {
            let d = sample_dirichlet(&[1.0, 1.0, 1.0], &mut r).unwrap();
            assert!((d.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            for k in 0..3 {
                sums[k] += d[k];
            }
        }
        // marginal Beta(1, 2): var = 2/36
        let se = (2.0f64 / 36.0 / n as f64).sqrt();
        for s in sums {
            assert!((s / n as f64 - 1.0 / 3.0).abs() < 3.0 * se);
        }
    }

    #[test]
    fn dirichlet_concentrated() {
        let mut r = rng();
        for _ in 0..100 {
            let d = sample_dirichlet(&[1e6, 1e6], &mut r).unwrap();
            assert!((d[0] - 0.5).abs() < 1e-2);
        }
    }

    #[test]
    fn dirichlet_tiny_concentrations_stay_on_simplex() {
        let mut r = rng();
        for _ in 0..1000 {
            let d = sample_dirichlet(&[1e-8, 1e-300, 2e-5], &mut r).unwrap();
            assert!((d.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            assert!(d.iter().all(|v| *v >= 0.0));
        }
    }

    #[test]
    fn dirichlet_density_normalises_in_two_dims() {
        // ∫ Beta(x; 2.5, 0.7) dx = 1 by midpoint rule away from the endpoint singularity
        let n = 200_000;
        let h = 1.0 / n as f64;
        let s: f64 = (0..n)
            .map(|i| log_beta_density((i as f64 + 0.5) * h, 2.5, 1.7).exp() * h)
            .sum();
        assert!((s - 1.0).abs() < 1e-6);
        assert_eq!(
            log_dirichlet_density(&[0.5, 0.5], &[1.0, 0.0]),
            f64::NEG_INFINITY
        );
    }
}
