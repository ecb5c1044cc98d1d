use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::vecops::{axpy, dist2_sq, dot, norm2_sq};

use super::data::Dataset;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ObjectiveKind {
    Quadratic,
    RidgeLogistic,
    NonconvexLogistic,
}

impl ObjectiveKind {
    pub fn name(self) -> &'static str {
        match self {
            ObjectiveKind::Quadratic => "quadratic",
            ObjectiveKind::RidgeLogistic => "ridge_logistic",
            ObjectiveKind::NonconvexLogistic => "nonconvex_logistic",
        }
    }

    pub fn is_strongly_convex(self) -> bool {
        !matches!(self, ObjectiveKind::NonconvexLogistic)
    }
}

impl fmt::Display for ObjectiveKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ObjectiveKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "quadratic" => Ok(Self::Quadratic),
            "ridge_logistic" => Ok(Self::RidgeLogistic),
            "nonconvex_logistic" => Ok(Self::NonconvexLogistic),
            other => Err(Error::Config(format!("unknown problem kind `{other}`"))),
        }
    }
}

/// How the data term aggregates over a shard.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Normalization {
    /// `(1/m_i) Σ loss`: each node holds its local empirical risk.
    Mean,
    /// `Σ loss`: the global objective is the sum over all samples.
    Sum,
}

impl FromStr for Normalization {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "mean" => Ok(Self::Mean),
            "sum" => Ok(Self::Sum),
            other => Err(Error::Config(format!("unknown normalization `{other}`"))),
        }
    }
}

impl fmt::Display for Normalization {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Mean => "mean",
            Self::Sum => "sum",
        })
    }
}

/// One node's smooth local objective f_i.
///
/// * quadratic: `½‖x − c‖²`
/// * ridge logistic: `Σ log(1 + exp(−y⟨x, φ⟩)) + (λ/2)‖x‖²`
/// * nonconvex logistic: the same data term plus `λ Σ_j x_j² / (1 + x_j²)`
///
/// The logistic data term is averaged over the shard under [`Normalization::Mean`].
#[derive(Debug, Clone, PartialEq)]
pub struct LocalObjective {
    pub kind: ObjectiveKind,
    pub center: Vec<f64>,
    pub shard: Dataset,
    pub lambda: f64,
    pub normalization: Normalization,
}

#[inline]
fn softplus(t: f64) -> f64 {
    // log(1 + e^t) without overflow
    if t > 0.0 {
        t + (-t).exp().ln_1p()
    } else {
        t.exp().ln_1p()
    }
}

#[inline]
fn sigmoid(t: f64) -> f64 {
    if t >= 0.0 {
        1.0 / (1.0 + (-t).exp())
    } else {
        let e = t.exp();
        e / (1.0 + e)
    }
}

impl LocalObjective {
    pub fn quadratic(center: Vec<f64>) -> Self {
        Self {
            kind: ObjectiveKind::Quadratic,
            center,
            shard: Dataset::default(),
            lambda: 0.0,
            normalization: Normalization::Mean,
        }
    }

    pub fn logistic(
        kind: ObjectiveKind,
        shard: Dataset,
        lambda: f64,
        normalization: Normalization,
    ) -> Result<Self> {
        if kind == ObjectiveKind::Quadratic {
            return Err(Error::Config(
                "logistic constructor given quadratic kind".into(),
            ));
        }
        if !(lambda >= 0.0) {
            return Err(Error::Config(format!(
                "lambda must be nonnegative, got {lambda}"
            )));
        }
        if shard.is_empty() {
            return Err(Error::InvalidPartition(
                "a logistic node needs a nonempty shard".into(),
            ));
        }
        Ok(Self {
            kind,
            center: Vec::new(),
            shard,
            lambda,
            normalization,
        })
    }

    pub fn dim(&self) -> usize {
        match self.kind {
            ObjectiveKind::Quadratic => self.center.len(),
            _ => self.shard.dim(),
        }
    }

    pub fn num_samples(&self) -> usize {
        self.shard.len()
    }

    /// Multiplier applied to per-sample losses.
    pub fn data_scale(&self) -> f64 {
        match self.normalization {
            Normalization::Mean if !self.shard.is_empty() => 1.0 / self.shard.len() as f64,
            _ => 1.0,
        }
    }

    fn check(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.dim() {
            return Err(Error::InvalidSize(format!(
                "point has dimension {} but objective has {}",
                x.len(),
                self.dim()
            )));
        }
        if !x.iter().all(|v| v.is_finite()) {
            return Err(Error::NumericDomain("non-finite evaluation point".into()));
        }
        Ok(())
    }

    pub fn value(&self, x: &[f64]) -> Result<f64> {
        self.check(x)?;
        Ok(match self.kind {
            ObjectiveKind::Quadratic => 0.5 * dist2_sq(x, &self.center),
            _ => {
                let data: f64 = (0..self.shard.len())
                    .map(|s| self.sample_loss(x, s))
                    .sum::<f64>()
                    * self.data_scale();
                data + self.reg_value(x)
            }
        })
    }

    fn sample_loss(&self, x: &[f64], s: usize) -> f64 {
        let y = self.shard.labels[s];
        softplus(-y * dot(x, &self.shard.features[s]))
    }

    /// Adds `scale · ∇loss_s(x)` into `g`.
    pub(crate) fn add_sample_grad(&self, x: &[f64], s: usize, scale: f64, g: &mut [f64]) {
        let phi = &self.shard.features[s];
        let y = self.shard.labels[s];
        // d/dx log(1+exp(-y<x,φ>)) = -y σ(-y<x,φ>) φ
        let coef = -y * sigmoid(-y * dot(x, phi));
        axpy(g, scale * coef, phi);
    }

    fn reg_value(&self, x: &[f64]) -> f64 {
        match self.kind {
            ObjectiveKind::Quadratic => 0.0,
            ObjectiveKind::RidgeLogistic => 0.5 * self.lambda * norm2_sq(x),
            ObjectiveKind::NonconvexLogistic => {
                self.lambda * x.iter().map(|v| v * v / (1.0 + v * v)).sum::<f64>()
            }
        }
    }

    pub(crate) fn add_reg_grad(&self, x: &[f64], g: &mut [f64]) {
        match self.kind {
            ObjectiveKind::Quadratic => {}
            ObjectiveKind::RidgeLogistic => axpy(g, self.lambda, x),
            ObjectiveKind::NonconvexLogistic => {
                for (gi, &v) in g.iter_mut().zip(x) {
                    let d = 1.0 + v * v;
                    *gi += self.lambda * 2.0 * v / (d * d);
                }
            }
        }
    }

    /// Exact local gradient ∇f_i(x).
    pub fn grad(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.check(x)?;
        let mut g = vec![0.0; x.len()];
        match self.kind {
            ObjectiveKind::Quadratic => {
                for ((gi, xi), ci) in g.iter_mut().zip(x).zip(&self.center) {
                    *gi = xi - ci;
                }
            }
            _ => {
                let scale = self.data_scale();
                for s in 0..self.shard.len() {
                    self.add_sample_grad(x, s, scale, &mut g);
                }
                self.add_reg_grad(x, &mut g);
            }
        }
        Ok(g)
    }

    /// Hessian, used by the Newton solver for the reference optimum.
    pub(crate) fn hessian(&self, x: &[f64]) -> Vec<Vec<f64>> {
        let p = self.dim();
        let mut h = vec![vec![0.0; p]; p];
        match self.kind {
            ObjectiveKind::Quadratic => {
                for (i, row) in h.iter_mut().enumerate() {
                    row[i] = 1.0;
                }
            }
            _ => {
                let scale = self.data_scale();
                for s in 0..self.shard.len() {
                    let phi = &self.shard.features[s];
                    let sg = sigmoid(dot(x, phi));
                    let wgt = scale * sg * (1.0 - sg);
                    for a in 0..p {
                        for b in 0..p {
                            h[a][b] += wgt * phi[a] * phi[b];
                        }
                    }
                }
                match self.kind {
                    ObjectiveKind::RidgeLogistic => {
                        for (a, row) in h.iter_mut().enumerate() {
                            row[a] += self.lambda;
                        }
                    }
                    ObjectiveKind::NonconvexLogistic => {
                        for (a, row) in h.iter_mut().enumerate() {
                            let v2 = x[a] * x[a];
                            row[a] += self.lambda * (2.0 - 6.0 * v2) / (1.0 + v2).powi(3);
                        }
                    }
                    ObjectiveKind::Quadratic => unreachable!(),
                }
            }
        }
        h
    }

    /// Upper bound on the Lipschitz constant of ∇f_i.
    ///
    /// The logistic data term has Hessian `scale · Σ σ(1−σ) φφᵀ ⪯ (scale/4) Σ φφᵀ`,
    /// bounded in spectral norm by `(scale/4) Σ ‖φ‖²`.
    pub fn smoothness(&self) -> f64 {
        match self.kind {
            ObjectiveKind::Quadratic => 1.0,
            _ => {
                let data = 0.25
                    * self.data_scale()
                    * self.shard.features.iter().map(|f| norm2_sq(f)).sum::<f64>();
                let reg = match self.kind {
                    ObjectiveKind::RidgeLogistic => self.lambda,
                    // |d²/dv² v²/(1+v²)| = |2 − 6v²| / (1+v²)³ ≤ 2
                    _ => 2.0 * self.lambda,
                };
                data + reg
            }
        }
    }
}

/// Σ_i f_i(x).
pub fn global_value(objs: &[LocalObjective], x: &[f64]) -> Result<f64> {
    objs.iter().map(|o| o.value(x)).sum()
}

/// Σ_i ∇f_i(x).
pub fn global_grad(objs: &[LocalObjective], x: &[f64]) -> Result<Vec<f64>> {
    let mut g = vec![0.0; x.len()];
    for o in objs {
        crate::vecops::add_assign(&mut g, &o.grad(x)?);
    }
    Ok(g)
}

/// C_L = max_i L_i.
pub fn max_smoothness(objs: &[LocalObjective]) -> f64 {
    objs.iter().map(|o| o.smoothness()).fold(0.0, f64::max)
}

/// Minimizer of F = Σ f_i for strongly convex problems. Quadratics use the
/// closed form (mean of centers); ridge logistic uses damped Newton until
/// ‖∇F‖ ≤ 1e−12.
pub fn global_optimum(objs: &[LocalObjective]) -> Result<(Vec<f64>, f64)> {
    let first = objs
        .first()
        .ok_or_else(|| Error::InvalidSize("no local objectives".into()))?;
    let p = first.dim();
    match first.kind {
        ObjectiveKind::Quadratic => {
            let centers: Vec<Vec<f64>> = objs.iter().map(|o| o.center.clone()).collect();
            let x = crate::vecops::mean_rows(&centers, p);
            let f = global_value(objs, &x)?;
            Ok((x, f))
        }
        ObjectiveKind::RidgeLogistic => {
            if !objs.iter().any(|o| o.lambda > 0.0) {
                return Err(Error::Unsupported(
                    "ridge logistic optimum needs lambda > 0 for a unique minimizer".into(),
                ));
            }
            newton(objs, p)
        }
        ObjectiveKind::NonconvexLogistic => Err(Error::Unsupported(
            "nonconvex objective has no unique global optimum".into(),
        )),
    }
}

const OPT_TOL: f64 = 1e-12;

fn newton(objs: &[LocalObjective], p: usize) -> Result<(Vec<f64>, f64)> {
    let mut x = vec![0.0; p];
    let mut fx = global_value(objs, &x)?;
    for _ in 0..200 {
        let g = global_grad(objs, &x)?;
        if norm2_sq(&g).sqrt() <= OPT_TOL {
            return Ok((x, fx));
        }
        let mut h = vec![vec![0.0; p]; p];
        for o in objs {
            for (hr, or) in h.iter_mut().zip(o.hessian(&x)) {
                for (a, b) in hr.iter_mut().zip(or) {
                    *a += b;
                }
            }
        }
        let dir = cholesky_solve(h, &g)
            .ok_or_else(|| Error::NumericDomain("Hessian is not positive definite".into()))?;
        // backtracking on F; accept full steps once the decrease is below roundoff
        let mut step = 1.0;
        loop {
            let mut cand = x.clone();
            axpy(&mut cand, -step, &dir);
            let fc = global_value(objs, &cand)?;
            let armijo = fc <= fx - 1e-4 * step * dot(&g, &dir);
            let roundoff = (fc - fx).abs() <= 1e-14 * fx.abs().max(1.0);
            if armijo || roundoff || step < 1e-10 {
                x = cand;
                fx = fc;
                break;
            }
            step *= 0.5;
        }
    }
    let g = global_grad(objs, &x)?;
    let res = norm2_sq(&g).sqrt();
    if res <= OPT_TOL {
        Ok((x, fx))
    } else {
        Err(Error::NumericDomain(format!(
            "Newton did not reach ‖∇F‖ ≤ {OPT_TOL:e} (residual {res:e})"
        )))
    }
}

/// Solves `h d = g` for symmetric positive definite `h`.
fn cholesky_solve(mut h: Vec<Vec<f64>>, g: &[f64]) -> Option<Vec<f64>> {
    let p = g.len();
    for j in 0..p {
        let mut d = h[j][j];
        for k in 0..j {
            d -= h[j][k] * h[j][k];
        }
        if !(d > 0.0) {
            return None;
        }
        let d = d.sqrt();
        h[j][j] = d;
        for i in j + 1..p {
            let mut s = h[i][j];
            for k in 0..j {
                s -= h[i][k] * h[j][k];
            }
            h[i][j] = s / d;
        }
    }
    let mut y = g.to_vec();
    for i in 0..p {
        for k in 0..i {
            y[i] -= h[i][k] * y[k];
        }
        y[i] /= h[i][i];
    }
    for i in (0..p).rev() {
        for k in i + 1..p {
            y[i] -= h[k][i] * y[k];
        }
        y[i] /= h[i][i];
    }
    Some(y)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problems::data::{synthesize, SyntheticSpec};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn central_diff(o: &LocalObjective, x: &[f64], h: f64) -> Vec<f64> {
        (0..x.len())
            .map(|i| {
                let mut a = x.to_vec();
                let mut b = x.to_vec();
                a[i] += h;
                b[i] -= h;
                (o.value(&a).unwrap() - o.value(&b).unwrap()) / (2.0 * h)
            })
            .collect()
    }

    fn shard(n: usize, seed: u64) -> Dataset {
        synthesize(&SyntheticSpec {
            samples: n,
            dim: 5,
            separation: 2.0,
            seed,
        })
        .unwrap()
    }

    #[test]
    fn quadratic_gradient() {
        let o = LocalObjective::quadratic(vec![1.0, 2.0]);
        assert_eq!(o.grad(&[0.0, 0.0]).unwrap(), vec![-1.0, -2.0]);
    }

    #[test]
    fn non_finite_point_is_a_domain_error() {
        let o = LocalObjective::quadratic(vec![1.0]);
        assert!(matches!(o.grad(&[f64::NAN]), Err(Error::NumericDomain(_))));
    }

    #[test]
    fn gradients_match_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let objs = [
            LocalObjective::quadratic(vec![0.3, -1.0, 2.0, 0.0, 5.0]),
            LocalObjective::logistic(
                ObjectiveKind::RidgeLogistic,
                shard(30, 1),
                1e-2,
                Normalization::Mean,
            )
            .unwrap(),
            LocalObjective::logistic(
                ObjectiveKind::RidgeLogistic,
                shard(30, 2),
                0.5,
                Normalization::Sum,
            )
            .unwrap(),
            LocalObjective::logistic(
                ObjectiveKind::NonconvexLogistic,
                shard(30, 3),
                0.3,
                Normalization::Mean,
            )
            .unwrap(),
        ];
        for o in &objs {
            for _ in 0..100 {
                let x: Vec<f64> = (0..5).map(|_| rng.random_range(-3.0..3.0)).collect();
                let g = o.grad(&x).unwrap();
                let fd = central_diff(o, &x, 1e-6);
                let diff = crate::vecops::max_abs_diff(&g, &fd);
                assert!(diff <= 1e-5, "{:?}: diff {diff}", o.kind);
            }
        }
    }

    #[test]
    fn smoothness_bounds_observed_ratios() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for kind in [
            ObjectiveKind::RidgeLogistic,
            ObjectiveKind::NonconvexLogistic,
        ] {
            let o = LocalObjective::logistic(kind, shard(40, 9), 0.7, Normalization::Mean).unwrap();
            let l = o.smoothness();
            for _ in 0..200 {
                let x: Vec<f64> = (0..5).map(|_| rng.random_range(-2.0..2.0)).collect();
                let y: Vec<f64> = (0..5).map(|_| rng.random_range(-2.0..2.0)).collect();
                let gx = o.grad(&x).unwrap();
                let gy = o.grad(&y).unwrap();
                let ratio = dist2_sq(&gx, &gy).sqrt() / dist2_sq(&x, &y).sqrt();
                assert!(ratio <= l * (1.0 + 1e-12), "{kind}: ratio {ratio} > L {l}");
            }
        }
    }

    #[test]
    fn quadratic_optimum_is_mean_of_centers() {
        let objs = vec![
            LocalObjective::quadratic(vec![0.0, 0.0]),
            LocalObjective::quadratic(vec![3.0, 0.0]),
            LocalObjective::quadratic(vec![0.0, 3.0]),
        ];
        let (x, _) = global_optimum(&objs).unwrap();
        assert_eq!(x, vec![1.0, 1.0]);

        let single = vec![LocalObjective::quadratic(vec![5.0])];
        assert_eq!(global_optimum(&single).unwrap(), (vec![5.0], 0.0));
    }

    #[test]
    fn ridge_optimum_certifies_its_residual() {
        let data = shard(20, 4);
        let objs: Vec<_> = data
            .split_even(4)
            .into_iter()
            .map(|s| {
                LocalObjective::logistic(ObjectiveKind::RidgeLogistic, s, 1e-2, Normalization::Mean)
                    .unwrap()
            })
            .collect();
        let (x, _) = global_optimum(&objs).unwrap();
        let res = norm2_sq(&global_grad(&objs, &x).unwrap()).sqrt();
        assert!(res <= 1e-12, "residual {res}");
    }

    #[test]
    fn nonconvex_optimum_unsupported() {
        let o = LocalObjective::logistic(
            ObjectiveKind::NonconvexLogistic,
            shard(10, 1),
            0.1,
            Normalization::Mean,
        )
        .unwrap();
        assert!(matches!(global_optimum(&[o]), Err(Error::Unsupported(_))));
    }

    #[test]
    fn nonconvex_regularizer_has_negative_curvature() {
        let o = LocalObjective {
            kind: ObjectiveKind::NonconvexLogistic,
            center: vec![],
            shard: Dataset {
                features: vec![vec![0.0]],
                labels: vec![1.0],
            },
            lambda: 1.0,
            normalization: Normalization::Mean,
        };
        // second derivative of v²/(1+v²) at v=1 is (2−6)/8 < 0
        assert!(o.hessian(&[1.0])[0][0] < 0.0);
    }
}
