//! Quadratic matrix inequality (QMI) set descriptions.
//!
//! A [`Qmi`] with parameters `(p, n)` and symmetric matrix `Π` of size
//! `(p+n) × (p+n)` describes a set of parameter matrices `θ ∈ R^{p×n}`
//! through the quadratic form `[θ; I_n]ᵀ Π [θ; I_n]`:
//!
//! * `Primal` orientation: `{θ : [θ; I]ᵀ Π [θ; I] ⪰ 0}` — the closed set used
//!   for membership tests, combination and synthesis.
//! * `Dual` orientation: `{ψ : [ψ; I]ᵀ Π [ψ; I] ≻ 0}` — the strict form
//!   produced and consumed by [`Qmi::dualize`]; its members are the
//!   transposes of the matching primal members.
//!
//! Both orientations store the member-leading layout, so one evaluation path
//! serves both. Written with the identity block leading, a dual description
//! is the familiar `[I; ψᵀ]ᵀ Π̃ [I; ψᵀ] ≺ 0` form with `Π̃` the block-swapped
//! negation of the stored matrix.

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::matops;
use crate::scalar::{cast, fabs, fmax, Scalar};

/// Whether the quadratic form is taken in `θ` (rows leading) or in `θᵀ`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Orientation {
    Primal,
    Dual,
}

impl Orientation {
    fn flipped(self) -> Self {
        match self {
            Orientation::Primal => Orientation::Dual,
            Orientation::Dual => Orientation::Primal,
        }
    }
}

impl std::fmt::Display for Orientation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Orientation::Primal => write!(f, "primal"),
            Orientation::Dual => write!(f, "dual"),
        }
    }
}

/// Ellipsoidal set description `{θ ∈ R^{p×n} : [θ; I]ᵀ Π [θ; I] ⪰ 0}` (or the
/// strict dual variant).
#[derive(Debug, Clone, PartialEq)]
pub struct Qmi<S: Scalar> {
    p: usize,
    n: usize,
    pi: DMatrix<S>,
    orientation: Orientation,
}

/// Nonnegative combination weights: `taus` for prior descriptions, `lambdas`
/// for per-sample descriptions.
#[derive(Debug, Clone, PartialEq)]
pub struct MultiplierVector<S: Scalar> {
    taus: Vec<S>,
    lambdas: Vec<S>,
}

impl<S: Scalar> MultiplierVector<S> {
    pub fn new(taus: Vec<S>, lambdas: Vec<S>) -> Result<Self> {
        if taus.iter().chain(lambdas.iter()).any(|&v| v < S::zero()) {
            return Err(Error::NegativeMultiplier);
        }
        Ok(Self { taus, lambdas })
    }

    pub fn taus(&self) -> &[S] {
        &self.taus
    }

    pub fn lambdas(&self) -> &[S] {
        &self.lambdas
    }
}

impl<S: Scalar> Qmi<S> {
    /// Builds a description from its partitioned matrix. `pi` must be
    /// `(p+n) × (p+n)` and symmetric; it is stored exactly symmetrized.
    pub fn new(p: usize, n: usize, pi: DMatrix<S>, orientation: Orientation) -> Result<Self> {
        if pi.nrows() != p + n || pi.ncols() != p + n {
            return Err(Error::DimensionMismatch(format!(
                "set matrix must be {0}x{0}, got {1}x{2}",
                p + n,
                pi.nrows(),
                pi.ncols()
            )));
        }
        let pi = matops::require_symmetric(&pi)?;
        Ok(Self {
            p,
            n,
            pi,
            orientation,
        })
    }

    pub fn primal(p: usize, n: usize, pi: DMatrix<S>) -> Result<Self> {
        Self::new(p, n, pi, Orientation::Primal)
    }

    pub fn dual(p: usize, n: usize, pi: DMatrix<S>) -> Result<Self> {
        Self::new(p, n, pi, Orientation::Dual)
    }

    /// Centered form `{θ : S − (θ − θ̂)ᵀ Q (θ − θ̂) ⪰ 0}` with weight `Q ⪰ 0`
    /// and shape `S`, stored as
    /// `Π = [[−Q, Qθ̂], [θ̂ᵀQ, S − θ̂ᵀQθ̂]]`.
    pub fn from_center_shape(
        q: &DMatrix<S>,
        shape: &DMatrix<S>,
        center: &DMatrix<S>,
    ) -> Result<Self> {
        let p = center.nrows();
        let n = center.ncols();
        let q = matops::require_symmetric(q)?;
        let shape = matops::require_symmetric(shape)?;
        if q.nrows() != p {
            return Err(Error::DimensionMismatch(format!(
                "weight must be {p}x{p}, got {}x{}",
                q.nrows(),
                q.ncols()
            )));
        }
        if shape.nrows() != n {
            return Err(Error::DimensionMismatch(format!(
                "shape must be {n}x{n}, got {}x{}",
                shape.nrows(),
                shape.ncols()
            )));
        }
        let scale = fmax(S::one(), matops::max_abs(&q));
        let min_eig = matops::min_eig_sym(&q)?;
        if min_eig < -cast::<S>(1e-9) * scale {
            return Err(Error::NotPsd(format!(
                "weight has eigenvalue {:.3e}",
                crate::scalar::to_f64(min_eig)
            )));
        }
        let qc = &q * center;
        let mut pi = DMatrix::zeros(p + n, p + n);
        pi.view_mut((0, 0), (p, p)).copy_from(&(-&q));
        pi.view_mut((0, p), (p, n)).copy_from(&qc);
        pi.view_mut((p, 0), (n, p)).copy_from(&qc.transpose());
        pi.view_mut((p, p), (n, n))
            .copy_from(&(shape - center.transpose() * &qc));
        Self::primal(p, n, pi)
    }

    /// Operator-norm ball `{θ : σ_max(θ − center) ≤ radius}`.
    pub fn ball_prior(center: &DMatrix<S>, radius: S) -> Result<Self> {
        if radius <= S::zero() {
            return Err(Error::InvalidConfig("ball radius must be positive".into()));
        }
        let p = center.nrows();
        let n = center.ncols();
        let q = DMatrix::identity(p, p);
        let shape = DMatrix::identity(n, n) * (radius * radius);
        Self::from_center_shape(&q, &shape, center)
    }

    pub fn p(&self) -> usize {
        self.p
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn orientation(&self) -> Orientation {
        self.orientation
    }

    pub fn pi(&self) -> &DMatrix<S> {
        &self.pi
    }

    /// Leading `p×p` block.
    pub fn pi11(&self) -> DMatrix<S> {
        self.pi.view((0, 0), (self.p, self.p)).into_owned()
    }

    /// Off-diagonal `p×n` block.
    pub fn pi12(&self) -> DMatrix<S> {
        self.pi.view((0, self.p), (self.p, self.n)).into_owned()
    }

    /// Trailing `n×n` block.
    pub fn pi22(&self) -> DMatrix<S> {
        self.pi.view((self.p, self.p), (self.n, self.n)).into_owned()
    }

    /// Quadratic form value `[θ; I]ᵀ Π [θ; I]`, an `n×n` symmetric matrix.
    pub fn evaluate(&self, theta: &DMatrix<S>) -> Result<DMatrix<S>> {
        if theta.nrows() != self.p || theta.ncols() != self.n {
            return Err(Error::DimensionMismatch(format!(
                "member must be {}x{}, got {}x{}",
                self.p,
                self.n,
                theta.nrows(),
                theta.ncols()
            )));
        }
        let pi11 = self.pi.view((0, 0), (self.p, self.p));
        let pi12 = self.pi.view((0, self.p), (self.p, self.n));
        let pi22 = self.pi.view((self.p, self.p), (self.n, self.n));
        let cross = theta.transpose() * pi12;
        let value = theta.transpose() * pi11 * theta + &cross + cross.transpose() + pi22;
        Ok(matops::symmetrize(&value))
    }

    /// Closed membership `evaluate(θ) ⪰ −tol·I` (primal descriptions only).
    pub fn contains(&self, theta: &DMatrix<S>, tol: S) -> Result<bool> {
        if self.orientation != Orientation::Primal {
            return Err(Error::WrongOrientation("primal"));
        }
        let value = self.evaluate(theta)?;
        Ok(matops::min_eig_sym(&value)? >= -tol)
    }

    /// Strict membership `evaluate(θ) ⪰ margin·I`; meaningful for both
    /// orientations (dual sets are strict by definition).
    pub fn contains_strict(&self, theta: &DMatrix<S>, margin: S) -> Result<bool> {
        let value = self.evaluate(theta)?;
        Ok(matops::min_eig_sym(&value)? > margin)
    }

    /// Adds `delta·I` to the trailing block, inflating the set so boundary
    /// members become strict ones.
    pub fn inflated(&self, delta: S) -> Self {
        let mut pi = self.pi.clone();
        for i in self.p..self.p + self.n {
            pi[(i, i)] += delta;
        }
        Self {
            p: self.p,
            n: self.n,
            pi,
            orientation: self.orientation,
        }
    }

    /// Exchanges the description for the equivalent one in `θᵀ`.
    ///
    /// Requires `Π` invertible with inertia `(p, 0, n)`.  The result stores
    /// `−J̃ Π⁻¹ J̃ᵀ` with `J̃ = [[0, −I_n], [I_p, 0]]` (a signed block swap),
    /// has `(p, n)` swapped, and flips orientation.  Strict membership of `θ`
    /// in the input is equivalent to strict membership of `θᵀ` in the output;
    /// for block-diagonal `Π` the stored matrix coincides with the unsigned
    /// swap `−JΠ⁻¹Jᵀ`.
    pub fn dualize(&self) -> Result<Self> {
        let (p, n) = (self.p, self.n);
        let scale = fmax(S::one(), matops::max_abs(&self.pi));
        let eps100 = <S as num_traits::Float>::epsilon() * cast::<S>(100.0);
        let tol = fmax(cast::<S>(1e-12), eps100) * scale;
        let eig = self.pi.clone().symmetric_eigen();
        let mut neg = 0usize;
        let mut pos = 0usize;
        for &v in eig.eigenvalues.iter() {
            if fabs(v) <= tol {
                return Err(Error::Singular(format!(
                    "eigenvalue {:.3e} within +/-{:.3e}",
                    crate::scalar::to_f64(v),
                    crate::scalar::to_f64(tol)
                )));
            }
            if v < S::zero() {
                neg += 1;
            } else {
                pos += 1;
            }
        }
        if neg != p || pos != n {
            return Err(Error::WrongInertia(format!(
                "need ({p} negative, {n} positive), found ({neg}, {pos})"
            )));
        }
        // Π⁻¹ from the eigendecomposition keeps the result exactly symmetric.
        let d = p + n;
        let mut scaled = eig.eigenvectors.clone();
        for j in 0..d {
            let inv = S::one() / eig.eigenvalues[j];
            for i in 0..d {
                scaled[(i, j)] *= inv;
            }
        }
        let pi_inv = matops::symmetrize(&(scaled * eig.eigenvectors.transpose()));

        // J̃ = [[0, −I_n], [I_p, 0]] maps [a_p; b_n] to [−b_n; a_p].
        let mut swap = DMatrix::zeros(d, d);
        for i in 0..n {
            swap[(i, p + i)] = -S::one();
        }
        for i in 0..p {
            swap[(n + i, i)] = S::one();
        }
        let out = matops::symmetrize(&(-(&swap * pi_inv * swap.transpose())));
        Ok(Self {
            p: n,
            n: p,
            pi: out,
            orientation: self.orientation.flipped(),
        })
    }

    /// Nonnegative combination `Σ τ_i Π_prior,i + Σ λ_k Π_sample,k` of
    /// descriptions sharing `(p, n)` and orientation.
    pub fn nonneg_combination(
        priors: &[Qmi<S>],
        samples: &[Qmi<S>],
        mult: &MultiplierVector<S>,
    ) -> Result<Self> {
        if priors.len() != mult.taus.len() || samples.len() != mult.lambdas.len() {
            return Err(Error::DimensionMismatch(format!(
                "{} priors with {} taus, {} samples with {} lambdas",
                priors.len(),
                mult.taus.len(),
                samples.len(),
                mult.lambdas.len()
            )));
        }
        let first = priors
            .first()
            .or_else(|| samples.first())
            .ok_or_else(|| Error::InvalidConfig("no descriptions to combine".into()))?;
        let (p, n, orientation) = (first.p, first.n, first.orientation);
        let mut pi = DMatrix::zeros(p + n, p + n);
        for (q, &w) in priors.iter().zip(&mult.taus).chain(samples.iter().zip(&mult.lambdas)) {
            if q.p != p || q.n != n || q.orientation != orientation {
                return Err(Error::DimensionMismatch(
                    "combined descriptions must share size and orientation".into(),
                ));
            }
            pi += &q.pi * w;
        }
        Ok(Self {
            p,
            n,
            pi,
            orientation,
        })
    }

    /// Center `−Π₁₁⁻¹Π₁₂` of a bounded description (`Π₁₁ ≺ 0`), or `None`
    /// when the set is unbounded.
    pub fn bounded_center(&self) -> Option<DMatrix<S>> {
        let neg11 = -self.pi11();
        let chol = neg11.cholesky()?;
        Some(chol.solve(&self.pi12()))
    }

    /// Center, negated leading block and Schur-complement shape of a bounded
    /// description: members satisfy `(θ−c)ᵀ(−Π₁₁)(θ−c) ⪯ T`.
    pub fn bounded_geometry(&self) -> Option<(DMatrix<S>, DMatrix<S>, DMatrix<S>)> {
        let neg11 = -self.pi11();
        let chol = neg11.clone().cholesky()?;
        let center = chol.solve(&self.pi12());
        let t = matops::symmetrize(&(self.pi22() + self.pi12().transpose() * &center));
        Some((center, neg11, t))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn dm(rows: usize, cols: usize, v: &[f64]) -> DMatrix<f64> {
        DMatrix::from_row_slice(rows, cols, v)
    }

    fn scalar_qmi(pi11: f64, pi12: f64, pi22: f64) -> Qmi<f64> {
        Qmi::primal(1, 1, dm(2, 2, &[pi11, pi12, pi12, pi22])).unwrap()
    }

    #[test]
    fn evaluate_scalar_forms() {
        let q = scalar_qmi(-1.0, 0.0, 1.0);
        let v = q.evaluate(&dm(1, 1, &[0.5])).unwrap();
        assert_relative_eq!(v[(0, 0)], 0.75, max_relative = 1e-12);

        let beta = 2.0f64;
        let q = Qmi::primal(
            2,
            2,
            DMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![
                -1.0,
                -1.0,
                beta * beta,
                beta * beta,
            ])),
        )
        .unwrap();
        let v = q.evaluate(&DMatrix::zeros(2, 2)).unwrap();
        assert!(matops::max_abs(&(v - DMatrix::identity(2, 2) * 4.0)) < 1e-12);

        let q = Qmi::from_center_shape(&dm(1, 1, &[1.0]), &dm(1, 1, &[3.0]), &dm(1, 1, &[2.0]))
            .unwrap();
        let v = q.evaluate(&dm(1, 1, &[2.0])).unwrap();
        assert_relative_eq!(v[(0, 0)], 3.0, max_relative = 1e-12);
    }

    #[test]
    fn contains_ball() {
        let q = Qmi::ball_prior(&dm(1, 1, &[0.0]), 2.0).unwrap();
        assert!(q.contains(&dm(1, 1, &[1.9]), 1e-12).unwrap());
        assert!(!q.contains(&dm(1, 1, &[2.1]), 1e-12).unwrap());
    }

    #[test]
    fn from_center_shape_examples() {
        let q = Qmi::from_center_shape(&dm(1, 1, &[1.0]), &dm(1, 1, &[1.0]), &dm(1, 1, &[0.0]))
            .unwrap();
        assert!(matops::max_abs(&(q.pi() - dm(2, 2, &[-1.0, 0.0, 0.0, 1.0]))) < 1e-12);

        let q = Qmi::from_center_shape(&dm(1, 1, &[1.0]), &dm(1, 1, &[3.0]), &dm(1, 1, &[2.0]))
            .unwrap();
        assert!(matops::max_abs(&(q.pi() - dm(2, 2, &[-1.0, 2.0, 2.0, -1.0]))) < 1e-12);

        // Degenerate weight: all members iff shape is PSD.
        let q = Qmi::from_center_shape(&dm(1, 1, &[0.0]), &dm(1, 1, &[5.0]), &dm(1, 1, &[7.0]))
            .unwrap();
        assert!(q.contains(&dm(1, 1, &[1234.0]), 0.0).unwrap());
    }

    #[test]
    fn ball_prior_singular_direction() {
        let q = Qmi::ball_prior(&DMatrix::zeros(1, 2), 1.0).unwrap();
        assert!(q.contains(&dm(1, 2, &[0.99, 0.0]), 1e-12).unwrap());
        // sigma_max([0.8, 0.8]) = 0.8*sqrt(2) > 1
        assert!(!q.contains(&dm(1, 2, &[0.8, 0.8]), 1e-12).unwrap());
    }

    #[test]
    fn dualize_scalar_example() {
        // {d : 8 - 2 d^2 > 0}  <->  {d : d^2/8 < 1/2}
        let q = Qmi::primal(1, 1, dm(2, 2, &[-2.0, 0.0, 0.0, 8.0])).unwrap();
        let d = q.dualize().unwrap();
        assert_eq!(d.orientation(), Orientation::Dual);
        assert!(matops::max_abs(&(d.pi() - dm(2, 2, &[-0.125, 0.0, 0.0, 0.5]))) < 1e-12);
        for (theta, member) in [(1.9, true), (2.1, false)] {
            let m = dm(1, 1, &[theta]);
            assert_eq!(q.contains_strict(&m, 0.0).unwrap(), member);
            assert_eq!(d.contains_strict(&m.transpose(), 0.0).unwrap(), member);
        }
    }

    #[test]
    fn dualize_unit_ball_self_dual() {
        let q = Qmi::primal(1, 1, dm(2, 2, &[-1.0, 0.0, 0.0, 1.0])).unwrap();
        let d = q.dualize().unwrap();
        assert!(matops::max_abs(&(d.pi() - q.pi())) < 1e-12);
    }

    #[test]
    fn dualize_rejects_wrong_inertia() {
        let q = Qmi::primal(1, 1, dm(2, 2, &[1.0, 0.0, 0.0, 1.0])).unwrap();
        assert!(matches!(q.dualize(), Err(Error::WrongInertia(_))));
        let q = Qmi::primal(1, 1, dm(2, 2, &[0.0, 1.0, 1.0, 0.0])).unwrap();
        // invertible with inertia (1,1) -> fine; singular case:
        assert!(q.dualize().is_ok());
        let q = Qmi::primal(1, 1, dm(2, 2, &[-1.0, 1.0, 1.0, -1.0])).unwrap();
        assert!(matches!(q.dualize(), Err(Error::Singular(_))));
    }

    fn random_dualizable(rng: &mut ChaCha8Rng, p: usize, n: usize) -> Qmi<f64> {
        // Congruence transform of diag(-I_p, I_n) has inertia (p, 0, n).
        loop {
            let d = p + n;
            let t = DMatrix::from_fn(d, d, |_, _| rng.random::<f64>() * 2.0 - 1.0);
            let mut j0 = DMatrix::zeros(d, d);
            for i in 0..p {
                j0[(i, i)] = -1.0;
            }
            for i in p..d {
                j0[(i, i)] = 1.0;
            }
            let pi = matops::symmetrize(&(t.transpose() * j0 * &t));
            let scale = matops::max_abs(&pi).max(1.0);
            let ev = matops::sym_eigenvalues(&pi).unwrap();
            if ev.iter().all(|v| v.abs() > 1e-4 * scale) {
                return Qmi::primal(p, n, pi).unwrap();
            }
        }
    }

    #[test]
    fn dualize_involution_random() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..1000 {
            let p = rng.random_range(1..=3usize);
            let n = rng.random_range(1..=3usize);
            let q = random_dualizable(&mut rng, p, n);
            let round = q.dualize().unwrap().dualize().unwrap();
            let err = matops::max_abs(&(round.pi() - q.pi()));
            let scale = matops::max_abs(q.pi()).max(1.0);
            assert!(err <= 1e-10 * scale, "involution error {err}");
            assert_eq!(round.orientation(), q.orientation());
        }
    }

    #[test]
    fn dualize_strict_membership_equivalence_general() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let mut checked = 0usize;
        for _ in 0..500 {
            let p = rng.random_range(1..=3usize);
            let n = rng.random_range(1..=3usize);
            let q = random_dualizable(&mut rng, p, n);
            let d = q.dualize().unwrap();
            let theta = DMatrix::from_fn(p, n, |_, _| rng.random::<f64>() * 4.0 - 2.0);
            let e_primal = matops::min_eig_sym(&q.evaluate(&theta).unwrap()).unwrap();
            let e_dual = matops::min_eig_sym(&d.evaluate(&theta.transpose()).unwrap()).unwrap();
            if e_primal.abs() > 1e-9 && e_dual.abs() > 1e-9 {
                assert_eq!(e_primal > 0.0, e_dual > 0.0);
                checked += 1;
            }
        }
        assert!(checked > 100);
    }

    #[test]
    fn contains_invariant_under_positive_scaling() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..200 {
            let q = random_dualizable(&mut rng, 2, 2);
            let alpha = rng.random::<f64>() * 10.0 + 0.01;
            let scaled = Qmi::primal(2, 2, q.pi() * alpha).unwrap();
            let theta = DMatrix::from_fn(2, 2, |_, _| rng.random::<f64>() * 4.0 - 2.0);
            let e = matops::min_eig_sym(&q.evaluate(&theta).unwrap()).unwrap();
            if e.abs() < 1e-9 {
                continue;
            }
            assert_eq!(
                q.contains(&theta, 0.0).unwrap(),
                scaled.contains(&theta, 0.0).unwrap()
            );
        }
    }

    #[test]
    fn combination_examples() {
        let a = Qmi::ball_prior(&dm(1, 1, &[0.0]), 1.0).unwrap();
        let b = Qmi::ball_prior(&dm(1, 1, &[0.5]), 2.0).unwrap();
        let m = MultiplierVector::new(vec![1.0, 0.0], vec![]).unwrap();
        let c = Qmi::nonneg_combination(&[a.clone(), b.clone()], &[], &m).unwrap();
        assert!(matops::max_abs(&(c.pi() - a.pi())) < 1e-12);

        let m = MultiplierVector::new(vec![0.0, 0.0], vec![]).unwrap();
        let c = Qmi::nonneg_combination(&[a.clone(), b.clone()], &[], &m).unwrap();
        assert!(matops::max_abs(c.pi()) < 1e-12);
        assert!(c.contains(&dm(1, 1, &[1e6]), 0.0).unwrap());

        assert!(MultiplierVector::<f64>::new(vec![-0.1], vec![]).is_err());
    }

    #[test]
    fn combination_superset_property() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        for _ in 0..200 {
            let c1 = DMatrix::from_fn(1, 2, |_, _| rng.random::<f64>() - 0.5);
            let c2 = DMatrix::from_fn(1, 2, |_, _| rng.random::<f64>() - 0.5);
            let q1 = Qmi::ball_prior(&c1, 1.0 + rng.random::<f64>()).unwrap();
            let q2 = Qmi::ball_prior(&c2, 1.0 + rng.random::<f64>()).unwrap();
            let m = MultiplierVector::new(
                vec![rng.random::<f64>() * 3.0],
                vec![rng.random::<f64>() * 3.0],
            )
            .unwrap();
            let comb = Qmi::nonneg_combination(std::slice::from_ref(&q1), std::slice::from_ref(&q2), &m).unwrap();
            // A point in both constituents stays in the combination.
            let theta = DMatrix::from_fn(1, 2, |_, _| rng.random::<f64>() - 0.5);
            if q1.contains(&theta, 0.0).unwrap() && q2.contains(&theta, 0.0).unwrap() {
                assert!(comb.contains(&theta, 1e-9).unwrap());
            }
        }
    }

    #[test]
    fn bounded_center_examples() {
        let center = dm(2, 1, &[0.3, -0.7]);
        let q = Qmi::from_center_shape(
            &dm(2, 2, &[2.0, 0.2, 0.2, 1.0]),
            &dm(1, 1, &[1.0]),
            &center,
        )
        .unwrap();
        let c = q.bounded_center().unwrap();
        assert!(matops::max_abs(&(c - center)) < 1e-10);

        let q = Qmi::primal(1, 1, dm(2, 2, &[0.0, 0.0, 0.0, 1.0])).unwrap();
        assert!(q.bounded_center().is_none());

        let q = Qmi::primal(1, 1, dm(2, 2, &[-2.0, 4.0, 4.0, -1.0])).unwrap();
        let c = q.bounded_center().unwrap();
        assert_relative_eq!(c[(0, 0)], 2.0, max_relative = 1e-12);
    }

    #[test]
    fn inflation_makes_boundary_strict() {
        let q = Qmi::ball_prior(&dm(1, 1, &[0.0]), 1.0).unwrap();
        let boundary = dm(1, 1, &[1.0]);
        assert!(!q.contains_strict(&boundary, 0.0).unwrap());
        assert!(q.inflated(1e-6).contains_strict(&boundary, 0.0).unwrap());
    }
}
