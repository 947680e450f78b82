//! Subjective-logic algebra for a single binary (defective / non-defective) head.
//!
//! A head is described equivalently by its evidence pair, its Beta (binary
//! Dirichlet) parameters, or its opinion `(b, u, a)`. The mappings are
//!
//! ```text
//! alpha_i = e_i + a_i * W
//! S       = W + e_pos + e_neg        (= alpha_pos + alpha_neg)
//! b_i     = e_i / S,   u = W / S
//! p_i     = b_i + a_i * u            (= alpha_i / S)
//! ```
//!
//! With `a = (1/2, 1/2)` and `W = 2` these reduce to the familiar
//! `alpha = e + 1`, `u = 2 / S`.

use crate::error::{Error, Result};

/// Upper bound applied to evidence values at construction.
pub const EVIDENCE_CAP: f64 = 1e9;

/// Tolerance used when validating that a pair of masses sums to one.
pub const SUM_TOLERANCE: f64 = 1e-12;

/// Prior probability of the defective (`pos`) and non-defective (`neg`) outcome.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BaseRatePair {
    pos: f64,
    neg: f64,
}

impl BaseRatePair {
    pub fn new(pos: f64, neg: f64) -> Result<Self> {
        let in_unit = |x: f64| x.is_finite() && (0.0..=1.0).contains(&x);
        if !in_unit(pos) || !in_unit(neg) {
            return Err(Error::invalid(format!(
                "base rates must lie in [0, 1], got ({pos}, {neg})"
            )));
        }
        if (pos + neg - 1.0).abs() > SUM_TOLERANCE {
            return Err(Error::invalid(format!(
                "base rates must sum to 1, got {pos} + {neg}"
            )));
        }
        Ok(Self { pos, neg })
    }

    /// Pair `(a, 1 - a)`.
    pub fn from_positive(pos: f64) -> Result<Self> {
        Self::new(pos, 1.0 - pos)
    }

    pub const fn uniform() -> Self {
        Self { pos: 0.5, neg: 0.5 }
    }

    pub fn pos(&self) -> f64 {
        self.pos
    }

    pub fn neg(&self) -> f64 {
        self.neg
    }
}

impl Default for BaseRatePair {
    fn default() -> Self {
        Self::uniform()
    }
}

/// Non-negative evidence for the defective and non-defective outcome.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EvidencePair {
    pos: f64,
    neg: f64,
}

impl EvidencePair {
    /// Validates and clamps to [`EVIDENCE_CAP`].
    pub fn new(pos: f64, neg: f64) -> Result<Self> {
        let check = |x: f64, side: &str| {
            if !x.is_finite() || x < 0.0 {
                Err(Error::invalid(format!(
                    "{side} evidence must be finite and non-negative, got {x}"
                )))
            } else {
                Ok(x.min(EVIDENCE_CAP))
            }
        };
        Ok(Self {
            pos: check(pos, "defective")?,
            neg: check(neg, "non-defective")?,
        })
    }

    pub const fn zero() -> Self {
        Self { pos: 0.0, neg: 0.0 }
    }

    pub fn pos(&self) -> f64 {
        self.pos
    }

    pub fn neg(&self) -> f64 {
        self.neg
    }

    pub fn total(&self) -> f64 {
        self.pos + self.neg
    }
}

/// Weight of uncertain evidence, `W > 0`.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd)]
pub struct EvidenceWeight(f64);

impl EvidenceWeight {
    pub fn new(w: f64) -> Result<Self> {
        if w.is_finite() && w > 0.0 {
            Ok(Self(w))
        } else {
            Err(Error::invalid(format!(
                "evidence weight must be positive and finite, got {w}"
            )))
        }
    }

    pub fn get(self) -> f64 {
        self.0
    }
}

impl Default for EvidenceWeight {
    fn default() -> Self {
        Self(2.0)
    }
}

/// Parameters of the Beta distribution over the defective probability.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DirichletPair {
    pub alpha_pos: f64,
    pub alpha_neg: f64,
    pub strength: f64,
}

impl DirichletPair {
    pub fn new(alpha_pos: f64, alpha_neg: f64) -> Result<Self> {
        if !(alpha_pos.is_finite() && alpha_neg.is_finite() && alpha_pos > 0.0 && alpha_neg > 0.0)
        {
            return Err(Error::invalid(format!(
                "Beta parameters must be positive and finite, got ({alpha_pos}, {alpha_neg})"
            )));
        }
        Ok(Self {
            alpha_pos,
            alpha_neg,
            strength: alpha_pos + alpha_neg,
        })
    }
}

/// Binomial opinion `(b_pos, b_neg, u, a)` with `u + b_pos + b_neg = 1`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Opinion {
    pub b_pos: f64,
    pub b_neg: f64,
    pub u: f64,
    pub base: BaseRatePair,
}

impl Opinion {
    pub fn new(b_pos: f64, b_neg: f64, u: f64, base: BaseRatePair) -> Result<Self> {
        let in_unit = |x: f64| x.is_finite() && (0.0..=1.0).contains(&x);
        if !(in_unit(b_pos) && in_unit(b_neg) && in_unit(u)) {
            return Err(Error::invalid(format!(
                "opinion masses must lie in [0, 1], got b=({b_pos}, {b_neg}) u={u}"
            )));
        }
        if (b_pos + b_neg + u - 1.0).abs() > SUM_TOLERANCE {
            return Err(Error::invalid(format!(
                "opinion masses must sum to 1, got {}",
                b_pos + b_neg + u
            )));
        }
        Ok(Self {
            b_pos,
            b_neg,
            u,
            base,
        })
    }

    /// Projected probability `p_i = b_i + a_i u`.
    pub fn probability(&self) -> (f64, f64) {
        (
            self.b_pos + self.base.pos * self.u,
            self.b_neg + self.base.neg * self.u,
        )
    }
}

pub fn dirichlet_from_evidence(
    e: EvidencePair,
    a: BaseRatePair,
    w: EvidenceWeight,
) -> DirichletPair {
    let alpha_pos = e.pos + a.pos * w.0;
    let alpha_neg = e.neg + a.neg * w.0;
    DirichletPair {
        alpha_pos,
        alpha_neg,
        strength: alpha_pos + alpha_neg,
    }
}

pub fn opinion_from_evidence(e: EvidencePair, a: BaseRatePair, w: EvidenceWeight) -> Opinion {
    // W + e_pos + e_neg rather than alpha_pos + alpha_neg so that zero
    // evidence gives u = 1 exactly for any base rate.
    let s = w.0 + e.pos + e.neg;
    Opinion {
        b_pos: e.pos / s,
        b_neg: e.neg / s,
        u: w.0 / s,
        base: a,
    }
}

pub fn probability_from_opinion(o: &Opinion) -> (f64, f64) {
    o.probability()
}

/// Mean of the Beta distribution, `alpha_i / S`.
pub fn expected_probability(d: &DirichletPair) -> Result<(f64, f64)> {
    if d.strength.is_nan() || d.strength <= 0.0 {
        return Err(Error::invalid(format!(
            "Dirichlet strength must be positive, got {}",
            d.strength
        )));
    }
    Ok((d.alpha_pos / d.strength, d.alpha_neg / d.strength))
}

/// Log of the Beta(alpha_pos, alpha_neg) density at `p`.
pub fn beta_log_density(p: f64, d: &DirichletPair) -> Result<f64> {
    if !(p > 0.0 && p < 1.0) {
        return Err(Error::Domain(format!(
            "Beta density is evaluated on the open interval (0, 1), got {p}"
        )));
    }
    if !(d.alpha_pos > 0.0 && d.alpha_neg > 0.0) {
        return Err(Error::invalid(format!(
            "Beta parameters must be positive, got ({}, {})",
            d.alpha_pos, d.alpha_neg
        )));
    }
    let ln_beta = libm::lgamma(d.alpha_pos) + libm::lgamma(d.alpha_neg)
        - libm::lgamma(d.alpha_pos + d.alpha_neg);
    Ok((d.alpha_pos - 1.0) * p.ln() + (d.alpha_neg - 1.0) * (-p).ln_1p() - ln_beta)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn ev(p: f64, n: f64) -> EvidencePair {
        EvidencePair::new(p, n).unwrap()
    }

    const HALF: BaseRatePair = BaseRatePair::uniform();

    #[test]
    fn dirichlet_examples() {
        let d = dirichlet_from_evidence(ev(0.0, 0.0), HALF, EvidenceWeight::default());
        assert_eq!((d.alpha_pos, d.alpha_neg, d.strength), (1.0, 1.0, 2.0));

        let d = dirichlet_from_evidence(ev(2.0, 0.0), HALF, EvidenceWeight::default());
        assert_eq!((d.alpha_pos, d.alpha_neg, d.strength), (3.0, 1.0, 4.0));

        // a = 1/K with W = K collapses to alpha = e + 1.
        let w = EvidenceWeight::new(2.0).unwrap();
        let d = dirichlet_from_evidence(ev(3.0, 0.0), HALF, w);
        assert_eq!(d.alpha_pos, 4.0);
    }

    #[test]
    fn evidence_rejects_bad_values() {
        assert!(EvidencePair::new(-1e-3, 0.0).is_err());
        assert!(EvidencePair::new(0.0, f64::NAN).is_err());
        assert!(EvidencePair::new(f64::INFINITY, 0.0).is_err());
        assert_eq!(EvidencePair::new(1e12, 0.0).unwrap().pos(), EVIDENCE_CAP);
    }

    #[test]
    fn base_rate_validation() {
        assert!(BaseRatePair::new(0.6, 0.5).is_err());
        assert!(BaseRatePair::new(-0.1, 1.1).is_err());
        assert!(BaseRatePair::new(1.0, 0.0).is_ok());
        assert!(EvidenceWeight::new(0.0).is_err());
    }

    #[test]
    fn opinion_examples() {
        let o = opinion_from_evidence(ev(0.0, 0.0), HALF, EvidenceWeight::default());
        assert_eq!((o.u, o.b_pos, o.b_neg), (1.0, 0.0, 0.0));
        assert_eq!(o.probability(), (0.5, 0.5));

        let o = opinion_from_evidence(ev(2.0, 0.0), HALF, EvidenceWeight::default());
        assert_eq!((o.u, o.b_pos, o.b_neg), (0.5, 0.5, 0.0));
        assert_eq!(probability_from_opinion(&o), (0.75, 0.25));

        for k in [0.0, 0.3, 7.0, 1e6] {
            let o = opinion_from_evidence(ev(k, k), HALF, EvidenceWeight::default());
            assert_eq!(o.b_pos, o.b_neg);
        }
    }

    #[test]
    fn dogmatic_opinion_projects_to_belief() {
        let base = BaseRatePair::new(0.3, 0.7).unwrap();
        let o = Opinion::new(0.4, 0.6, 0.0, base).unwrap();
        assert_eq!(o.probability(), (0.4, 0.6));
        assert!(Opinion::new(0.4, 0.4, 0.4, base).is_err());
    }

    #[test]
    fn expectation_examples() {
        let d = DirichletPair::new(1.0, 1.0).unwrap();
        assert_eq!(expected_probability(&d).unwrap(), (0.5, 0.5));
        let d = DirichletPair::new(3.0, 1.0).unwrap();
        assert_eq!(expected_probability(&d).unwrap(), (0.75, 0.25));
        let bad = DirichletPair {
            alpha_pos: 0.0,
            alpha_neg: 0.0,
            strength: 0.0,
        };
        assert!(expected_probability(&bad).is_err());
    }

    #[test]
    fn beta_density_examples() {
        let uniform = DirichletPair::new(1.0, 1.0).unwrap();
        for p in [1e-9, 0.1, 0.5, 0.999] {
            assert_eq!(beta_log_density(p, &uniform).unwrap(), 0.0);
        }
        let d = DirichletPair::new(2.0, 1.0).unwrap();
        assert!(beta_log_density(0.5, &d).unwrap().abs() < 1e-15);
        assert!(matches!(beta_log_density(0.0, &d), Err(Error::Domain(_))));
        assert!(matches!(beta_log_density(1.0, &d), Err(Error::Domain(_))));
    }

    /// Tanh-sinh quadrature of the density over (0, 1); handles the endpoint
    /// singularities that appear when an alpha is below one.
    fn integrate_density(d: &DirichletPair) -> f64 {
        let h = 1.0 / 64.0;
        let mut total = 0.0;
        for i in -(8 * 64)..=(8 * 64) {
            let t = i as f64 * h;
            let s = std::f64::consts::FRAC_PI_2 * t.sinh();
            let x = 0.5 + 0.5 * s.tanh();
            let weight = 0.5 * std::f64::consts::FRAC_PI_2 * t.cosh() / s.cosh().powi(2);
            if x <= 0.0 || x >= 1.0 || weight == 0.0 {
                continue;
            }
            total += h * weight * beta_log_density(x, d).unwrap().exp();
        }
        total
    }

    #[test]
    fn beta_density_integrates_to_one() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        for _ in 0..200 {
            let d = DirichletPair::new(rng.random_range(0.5..=50.0), rng.random_range(0.5..=50.0))
                .unwrap();
            let mass = integrate_density(&d);
            assert!((mass - 1.0).abs() < 1e-6, "{d:?} integrates to {mass}");
        }
    }

    fn base_strategy() -> impl Strategy<Value = BaseRatePair> {
        (0.001f64..0.999).prop_map(|a| BaseRatePair::from_positive(a).unwrap())
    }

    proptest! {
        #[test]
        fn opinion_masses_sum_to_one(
            pos in 0.0f64..1e6, neg in 0.0f64..1e6, a in base_strategy(), w in 0.1f64..20.0,
        ) {
            let w = EvidenceWeight::new(w).unwrap();
            let e = ev(pos, neg);
            let o = opinion_from_evidence(e, a, w);
            prop_assert!((o.u + o.b_pos + o.b_neg - 1.0).abs() < 1e-12);

            let (p_op, n_op) = o.probability();
            let (p_dir, n_dir) = expected_probability(&dirichlet_from_evidence(e, a, w)).unwrap();
            prop_assert!((p_op - p_dir).abs() < 1e-12);
            prop_assert!((n_op - n_dir).abs() < 1e-12);
            prop_assert!((p_op + n_op - 1.0).abs() < 1e-12);
            prop_assert!((p_dir + n_dir - 1.0).abs() < 1e-12);
        }

        #[test]
        fn probability_increases_with_positive_evidence(
            pos in 0.0f64..1e3, delta in 1e-3f64..1e3, neg in 0.0f64..1e3,
            a in base_strategy(), w in 0.1f64..20.0,
        ) {
            let w = EvidenceWeight::new(w).unwrap();
            let lo = opinion_from_evidence(ev(pos, neg), a, w);
            let hi = opinion_from_evidence(ev(pos + delta, neg), a, w);
            prop_assert!(hi.probability().0 > lo.probability().0);
            prop_assert!(hi.u < lo.u);
        }

        #[test]
        fn vacuous_opinion_returns_base_rate(a in base_strategy(), w in 0.1f64..20.0) {
            let o = opinion_from_evidence(EvidencePair::zero(), a, EvidenceWeight::new(w).unwrap());
            prop_assert_eq!(o.u, 1.0);
            prop_assert_eq!(o.probability(), (a.pos(), a.neg()));
        }
    }
}
