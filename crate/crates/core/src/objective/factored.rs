use std::cell::OnceCell;

use nalgebra::{DMatrix, DVectorView};

use super::instance::SmoothLoss;
use super::point::FactorPoint;
use crate::error::{dim_err, Result};

/// The factored objective built on a loss `phi`:
/// `phi(U V^T) + lambda (||U||^2 + ||V||^2) / 2`, or `phi(U U^T) + lambda ||U||^2`
/// for symmetric points.
pub struct Factored<'a, L: SmoothLoss> {
    pub loss: &'a L,
    pub lambda: f64,
}

impl<L: SmoothLoss> Clone for Factored<'_, L> {
    fn clone(&self) -> Self {
        *self
    }
}

impl<L: SmoothLoss> Copy for Factored<'_, L> {}

impl<'a, L: SmoothLoss> Factored<'a, L> {
    pub fn new(loss: &'a L, lambda: f64) -> Self {
        Self { loss, lambda }
    }

    fn check(&self, p: &FactorPoint) -> Result<()> {
        let (d1, d2) = self.loss.domain_shape();
        if p.is_symmetric() != self.loss.symmetric() {
            return Err(dim_err(format!(
                "point is {} but the loss is {}",
                mode_name(p.is_symmetric()),
                mode_name(self.loss.symmetric())
            )));
        }
        if p.u.nrows() != d1 || p.v_or_u().nrows() != d2 {
            return Err(dim_err(format!(
                "factors have {} and {} rows, domain is {d1}x{d2}",
                p.u.nrows(),
                p.v_or_u().nrows()
            )));
        }
        Ok(())
    }

    fn penalty(&self, p: &FactorPoint) -> f64 {
        match &p.v {
            Some(v) => 0.5 * self.lambda * (p.u.norm_squared() + v.norm_squared()),
            None => self.lambda * p.u.norm_squared(),
        }
    }

    pub fn value(&self, p: &FactorPoint) -> Result<f64> {
        self.check(p)?;
        Ok(self.loss.value(&p.product())? + self.penalty(p))
    }

    pub fn grad(&self, p: &FactorPoint) -> Result<FactorPoint> {
        Ok(self.linearize(p)?.grad)
    }

    pub fn value_grad(&self, p: &FactorPoint) -> Result<(f64, FactorPoint)> {
        let lin = self.linearize(p)?;
        Ok((lin.value, lin.grad))
    }

    /// Value, gradient and cached `grad phi(M)` at `p`, for repeated
    /// Hessian-vector products.
    pub fn linearize<'p>(&self, p: &'p FactorPoint) -> Result<Linearization<'a, 'p, L>> {
        self.check(p)?;
        let m = p.product();
        let (phi, gphi) = self.loss.value_grad(&m)?;
        let grad = match &p.v {
            Some(v) => FactorPoint {
                u: &gphi * v + &p.u * self.lambda,
                v: Some(gphi.tr_mul(&p.u) + v * self.lambda),
            },
            None => FactorPoint::symmetric((&gphi * &p.u + &p.u * self.lambda) * 2.0),
        };
        Ok(Linearization {
            f: *self,
            point: p,
            m,
            value: phi + self.penalty(p),
            grad,
            grad_phi: gphi,
            tangent: OnceCell::new(),
        })
    }
}

fn mode_name(symmetric: bool) -> &'static str {
    if symmetric {
        "symmetric"
    } else {
        "asymmetric"
    }
}

pub struct Linearization<'a, 'p, L: SmoothLoss> {
    f: Factored<'a, L>,
    point: &'p FactorPoint,
    pub m: DMatrix<f64>,
    pub value: f64,
    pub grad: FactorPoint,
    pub grad_phi: DMatrix<f64>,
    tangent: OnceCell<Option<TangentProducts>>,
}

type TangentProducts = (DMatrix<f64>, Option<DMatrix<f64>>);

fn vec_of(m: &DMatrix<f64>) -> DVectorView<'_, f64> {
    DVectorView::from_slice(m.as_slice(), m.len())
}

impl<L: SmoothLoss> Linearization<'_, '_, L> {
    pub fn point(&self) -> &FactorPoint {
        self.point
    }

    fn tangent(&self) -> Option<&TangentProducts> {
        self.tangent
            .get_or_init(|| self.f.loss.tangent_products(&self.point.u, self.point.v.as_ref()))
            .as_ref()
    }

    /// Hessian of the factored objective applied to `d`.
    pub fn hvp(&self, d: &FactorPoint) -> Result<FactorPoint> {
        self.point.check_same_shape(d)?;
        let p = self.point;
        let lambda = self.f.lambda;
        let g = &self.grad_phi;
        let (d1, r) = p.u.shape();
        match (self.tangent(), &d.v) {
            (Some((y, Some(z))), Some(dv)) => {
                let w = y * vec_of(&d.u) + z * vec_of(dv);
                let su = DMatrix::from_column_slice(d1, r, y.tr_mul(&w).as_slice());
                let sv = DMatrix::from_column_slice(dv.nrows(), r, z.tr_mul(&w).as_slice());
                return Ok(FactorPoint { u: su + g * dv + &d.u * lambda, v: Some(sv + g.tr_mul(&d.u) + dv * lambda) });
            }
            (Some((y, None)), None) => {
                let w = y * vec_of(&d.u) * 2.0;
                let su = DMatrix::from_column_slice(d1, r, y.tr_mul(&w).as_slice());
                return Ok(FactorPoint::symmetric((su + g * &d.u + &d.u * lambda) * 2.0));
            }
            _ => {}
        }
        match (&p.v, &d.v) {
            (Some(v), Some(dv)) => {
                let m_dot = &d.u * v.transpose() + &p.u * dv.transpose();
                let s = self.f.loss.hess_apply(&self.m, &m_dot)?;
                Ok(FactorPoint {
                    u: &s * v + g * dv + &d.u * lambda,
                    v: Some(s.tr_mul(&p.u) + g.tr_mul(&d.u) + dv * lambda),
                })
            }
            _ => {
                let m_dot = &p.u * d.u.transpose() + &d.u * p.u.transpose();
                let s = self.f.loss.hess_apply(&self.m, &m_dot)?;
                Ok(FactorPoint::symmetric((&s * &p.u + g * &d.u + &d.u * lambda) * 2.0))
            }
        }
    }

    pub fn quadform(&self, d: &FactorPoint) -> Result<f64> {
        Ok(self.hvp(d)?.dot(d))
    }
}
