//! Basic semialgebraic sets `{g_j >= 0, h_i = 0}` with optional redundant
//! ball constraints.

use crate::poly::{Context, Monomial, PolyError, Polynomial};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SetError {
    #[error("expected {expected} coordinates, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("box bound lo[{index}] = {lo} exceeds hi[{index}] = {hi}")]
    InvertedBox { index: usize, lo: f64, hi: f64 },
    #[error("radius must be nonnegative and finite, got {0}")]
    BadRadius(f64),
    #[error(transparent)]
    Poly(#[from] PolyError),
}

/// A ball `{ |x - center| <= radius }` used as a redundant constraint.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Ball {
    pub center: Vec<f64>,
    pub radius: f64,
}

impl Ball {
    /// `radius^2 - sum (x_i - c_i)^2` over the given coordinates of `ctx`.
    pub fn polynomial(&self, ctx: &Context, coords: &[usize]) -> Result<Polynomial, SetError> {
        if coords.len() != self.center.len() {
            return Err(SetError::DimensionMismatch { expected: coords.len(), got: self.center.len() });
        }
        let mut p = Polynomial::constant(ctx, self.radius * self.radius);
        for (&i, &c) in coords.iter().zip(&self.center) {
            let d = Polynomial::var(ctx, i)?.sub(&Polynomial::constant(ctx, c))?;
            p = p.sub(&d.mul(&d)?)?;
        }
        Ok(p)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SemialgebraicSet {
    ctx: Context,
    inequalities: Vec<Polynomial>,
    equalities: Vec<Polynomial>,
    bounds: Option<(Vec<f64>, Vec<f64>)>,
}

fn check_bounds(ctx: &Context, lo: &[f64], hi: &[f64]) -> Result<(), SetError> {
    for len in [lo.len(), hi.len()] {
        if len != ctx.len() {
            return Err(SetError::DimensionMismatch { expected: ctx.len(), got: len });
        }
    }
    for (index, (&l, &h)) in lo.iter().zip(hi).enumerate() {
        if !(l <= h) {
            return Err(SetError::InvertedBox { index, lo: l, hi: h });
        }
    }
    Ok(())
}

impl SemialgebraicSet {
    /// General constructor. `bounds` is an optional bounding box that the
    /// caller asserts contains the set; it drives gridding and the default
    /// ball but is not itself added as a constraint.
    pub fn new(
        ctx: &Context,
        inequalities: Vec<Polynomial>,
        equalities: Vec<Polynomial>,
        bounds: Option<(Vec<f64>, Vec<f64>)>,
    ) -> Result<Self, SetError> {
        for p in inequalities.iter().chain(&equalities) {
            if p.context() != ctx {
                return Err(PolyError::ContextMismatch.into());
            }
        }
        if let Some((lo, hi)) = &bounds {
            check_bounds(ctx, lo, hi)?;
        }
        Ok(SemialgebraicSet { ctx: ctx.clone(), inequalities, equalities, bounds })
    }

    /// The box `prod [lo_i, hi_i]`, one product constraint per coordinate.
    pub fn boxed(ctx: &Context, lo: &[f64], hi: &[f64]) -> Result<Self, SetError> {
        check_bounds(ctx, lo, hi)?;
        let mut ineqs = Vec::with_capacity(lo.len());
        for i in 0..lo.len() {
            let x = Polynomial::var(ctx, i)?;
            let below = x.sub(&Polynomial::constant(ctx, lo[i]))?;
            let above = Polynomial::constant(ctx, hi[i]).sub(&x)?;
            ineqs.push(below.mul(&above)?);
        }
        Ok(SemialgebraicSet {
            ctx: ctx.clone(),
            inequalities: ineqs,
            equalities: Vec::new(),
            bounds: Some((lo.to_vec(), hi.to_vec())),
        })
    }

    pub fn disc(ctx: &Context, center: &[f64], radius: f64) -> Result<Self, SetError> {
        if !(radius >= 0.0 && radius.is_finite()) {
            return Err(SetError::BadRadius(radius));
        }
        if center.len() != ctx.len() {
            return Err(SetError::DimensionMismatch { expected: ctx.len(), got: center.len() });
        }
        let ball = Ball { center: center.to_vec(), radius };
        let coords: Vec<usize> = (0..ctx.len()).collect();
        let g = ball.polynomial(ctx, &coords)?;
        let lo = center.iter().map(|c| c - radius).collect();
        let hi = center.iter().map(|c| c + radius).collect();
        Ok(SemialgebraicSet { ctx: ctx.clone(), inequalities: vec![g], equalities: Vec::new(), bounds: Some((lo, hi)) })
    }

    /// Appends the redundant constraint `R^2 - |x - c|^2 >= 0`. The caller
    /// is responsible for the ball actually containing the set.
    pub fn with_ball(&self, ball: &Ball) -> Result<Self, SetError> {
        if !(ball.radius >= 0.0 && ball.radius.is_finite()) {
            return Err(SetError::BadRadius(ball.radius));
        }
        let coords: Vec<usize> = (0..self.ctx.len()).collect();
        let mut out = self.clone();
        out.inequalities.push(ball.polynomial(&self.ctx, &coords)?);
        Ok(out)
    }

    pub fn context(&self) -> &Context {
        &self.ctx
    }

    pub fn dim(&self) -> usize {
        self.ctx.len()
    }

    pub fn inequalities(&self) -> &[Polynomial] {
        &self.inequalities
    }

    pub fn equalities(&self) -> &[Polynomial] {
        &self.equalities
    }

    pub fn bounds(&self) -> Option<(&[f64], &[f64])> {
        self.bounds.as_ref().map(|(l, h)| (l.as_slice(), h.as_slice()))
    }

    /// Smallest ball containing the bounding box.
    pub fn circumball(&self) -> Option<Ball> {
        let (lo, hi) = self.bounds()?;
        let center: Vec<f64> = lo.iter().zip(hi).map(|(l, h)| 0.5 * (l + h)).collect();
        let radius = lo.iter().zip(hi).map(|(l, h)| 0.25 * (h - l) * (h - l)).sum::<f64>().sqrt();
        Some(Ball { center, radius })
    }

    pub fn contains(&self, point: &[f64], tol: f64) -> Result<bool, SetError> {
        if point.len() != self.ctx.len() {
            return Err(SetError::DimensionMismatch { expected: self.ctx.len(), got: point.len() });
        }
        for g in &self.inequalities {
            if !(g.evaluate(point)? >= -tol) {
                return Ok(false);
            }
        }
        for h in &self.equalities {
            if !(h.evaluate(point)?.abs() <= tol) {
                return Ok(false);
            }
        }
        Ok(true)
    }

    /// Coordinates pinned either by a degenerate bound (`lo == hi`) or by an
    /// equality of the form `a*x_i + b = 0`.
    pub fn fixed_coordinates(&self) -> Vec<Option<f64>> {
        let n = self.ctx.len();
        let mut fixed = vec![None; n];
        if let Some((lo, hi)) = self.bounds() {
            for i in 0..n {
                if lo[i] == hi[i] {
                    fixed[i] = Some(lo[i]);
                }
            }
        }
        for h in &self.equalities {
            if h.degree() != 1 {
                continue;
            }
            let linear: Vec<(usize, f64)> = h
                .terms()
                .filter(|(m, _)| m.degree() == 1)
                .map(|(m, c)| (m.exponents().iter().position(|&e| e == 1).unwrap_or(0), c))
                .collect();
            if let [(i, a)] = linear[..] {
                let b = h.coefficient(&Monomial::one(n));
                fixed[i] = Some(-b / a);
            }
        }
        fixed
    }

    /// Re-expresses every constraint in `target` (matching names).
    pub fn embed_into(&self, target: &Context) -> Result<Self, SetError> {
        let map = |ps: &[Polynomial]| -> Result<Vec<Polynomial>, SetError> {
            ps.iter().map(|p| p.embed_into(target).map_err(SetError::from)).collect()
        };
        Ok(SemialgebraicSet {
            ctx: target.clone(),
            inequalities: map(&self.inequalities)?,
            equalities: map(&self.equalities)?,
            bounds: None,
        })
    }

    /// `[0, T] x self` over a context whose index 0 is time.
    pub fn times_interval(&self, target: &Context, horizon: f64) -> Result<Self, SetError> {
        let mut out = self.embed_into(target)?;
        let t = Polynomial::var(target, 0)?;
        out.inequalities.insert(0, t.mul(&Polynomial::constant(target, horizon).sub(&t)?)?);
        Ok(out)
    }

    /// Adds constraints; contexts must match.
    pub fn with_constraints(
        &self,
        inequalities: impl IntoIterator<Item = Polynomial>,
        equalities: impl IntoIterator<Item = Polynomial>,
    ) -> Result<Self, SetError> {
        let mut out = self.clone();
        for p in inequalities {
            if p.context() != &self.ctx {
                return Err(PolyError::ContextMismatch.into());
            }
            out.inequalities.push(p);
        }
        for p in equalities {
            if p.context() != &self.ctx {
                return Err(PolyError::ContextMismatch.into());
            }
            out.equalities.push(p);
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expr::parse_polynomial;
    use crate::poly::VariableContext;

    #[test]
    fn box_membership() {
        let c = VariableContext::new(["x1", "x2"]).unwrap();
        let b = SemialgebraicSet::boxed(&c, &[0.0, 0.0], &[1.0, 1.0]).unwrap();
        assert_eq!(b.inequalities().len(), 2);
        assert!(b.contains(&[0.5, 0.5], 1e-9).unwrap());
        assert!(!b.contains(&[1.1, 0.0], 1e-9).unwrap());
        let c3 = VariableContext::new(["x1", "x2", "x3"]).unwrap();
        let b3 = SemialgebraicSet::boxed(&c3, &[-1.0; 3], &[1.0; 3]).unwrap();
        assert!(b3.contains(&[0.0; 3], 0.0).unwrap());
        assert!(SemialgebraicSet::boxed(&c, &[0.0], &[1.0]).is_err());
        assert!(SemialgebraicSet::boxed(&c, &[0.0, 2.0], &[1.0, 1.0]).is_err());
    }

    #[test]
    fn degenerate_box_is_a_point() {
        let c = VariableContext::new(["x1"]).unwrap();
        let b = SemialgebraicSet::boxed(&c, &[0.25], &[0.25]).unwrap();
        assert!(b.contains(&[0.25], 1e-12).unwrap());
        assert!(!b.contains(&[0.26], 1e-12).unwrap());
        assert_eq!(b.fixed_coordinates(), vec![Some(0.25)]);
    }

    #[test]
    fn disc_membership() {
        let c = VariableContext::new(["x1", "x2"]).unwrap();
        let d = SemialgebraicSet::disc(&c, &[0.3, 0.3], 0.3).unwrap();
        assert!(d.contains(&[0.3, 0.3], 0.0).unwrap());
        assert!(!d.contains(&[0.7, 0.7], 1e-9).unwrap());
        let u = SemialgebraicSet::disc(&c, &[0.0, 0.0], 1.0).unwrap();
        assert!(u.contains(&[0.6, 0.6], 0.0).unwrap());
        let z = SemialgebraicSet::disc(&c, &[0.0, 0.0], 0.0).unwrap();
        assert!(z.contains(&[0.0, 0.0], 0.0).unwrap());
        assert!(!z.contains(&[1e-3, 0.0], 1e-9).unwrap());
        assert!(SemialgebraicSet::disc(&c, &[0.0, 0.0], -1.0).is_err());
    }

    #[test]
    fn ball_augmentation() {
        let c = VariableContext::new(["x1", "x2", "x3"]).unwrap();
        let b = SemialgebraicSet::boxed(&c, &[-1.0; 3], &[1.0; 3]).unwrap();
        let ball = b.circumball().unwrap();
        assert!((ball.radius - 3f64.sqrt()).abs() < 1e-15);
        let bb = b.with_ball(&ball).unwrap();
        assert_eq!(bb.inequalities().len(), 4);
        let expected = parse_polynomial("3 - x1^2 - x2^2 - x3^2", &c).unwrap();
        let got = &bb.inequalities()[3];
        assert!(got.sub(&expected).unwrap().max_abs_coefficient() < 1e-14);
        let twice = bb.with_ball(&ball).unwrap();
        assert_eq!(twice.inequalities()[3], twice.inequalities()[4]);

        let c1 = VariableContext::new(["x"]).unwrap();
        let unit = SemialgebraicSet::boxed(&c1, &[0.0], &[1.0]).unwrap();
        let r = unit.with_ball(&Ball { center: vec![0.5], radius: 1.0 }).unwrap();
        assert_eq!(r.inequalities().len(), 2);
    }

    #[test]
    fn slice_set_with_equality() {
        let c = VariableContext::new(["x1", "x2", "x3"]).unwrap();
        let b = SemialgebraicSet::boxed(&c, &[-1.0; 3], &[1.0; 3]).unwrap();
        let s = b.with_constraints([], [Polynomial::var(&c, 2).unwrap()]).unwrap();
        assert!(s.contains(&[0.2, -0.4, 1e-12], 1e-9).unwrap());
        assert!(!s.contains(&[0.2, -0.4, 1e-3], 1e-9).unwrap());
        assert_eq!(s.fixed_coordinates(), vec![None, None, Some(0.0)]);
        let shifted = b.with_constraints([], [parse_polynomial("2*x1 - 1", &c).unwrap()]).unwrap();
        assert_eq!(shifted.fixed_coordinates()[0], Some(0.5));
    }

    #[test]
    fn time_product() {
        let s = VariableContext::new(["x1"]).unwrap();
        let tx = VariableContext::with_time("t", &["x1"]).unwrap();
        let b = SemialgebraicSet::boxed(&s, &[0.0], &[1.0]).unwrap();
        let p = b.times_interval(&tx, 6.0).unwrap();
        assert_eq!(p.inequalities().len(), 2);
        assert!(p.contains(&[3.0, 0.5], 0.0).unwrap());
        assert!(!p.contains(&[6.5, 0.5], 1e-9).unwrap());
    }
}
