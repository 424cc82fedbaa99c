use crate::error::{Error, Result};
use crate::field::{dist2, GridFunction};

/// `max(1, ε)`, the spectral shift applied by [`shifted_solution`].
pub fn shift_amount(eps: f64) -> Result<f64> {
    if !(eps > 0.0 && eps.is_finite()) {
        return Err(Error::InvalidArgument(format!("shift needs eps > 0, got {eps}")));
    }
    Ok(eps.max(1.0))
}

fn add_paraboloid(u: &GridFunction, coef: f64) -> Result<GridFunction> {
    let c = u.grid().center().to_vec();
    u.map(|x, v| v + 0.5 * coef * dist2(x, &c))
}

/// `ũ = u + ½ max(1, ε) |x - c|^2`; every Hessian eigenvalue moves up by `max(1, ε)`.
pub fn shifted_solution(u: &GridFunction, eps: f64) -> Result<GridFunction> {
    add_paraboloid(u, shift_amount(eps)?)
}

/// Inverse of [`shifted_solution`] up to one rounding per node.
pub fn unshifted_solution(u: &GridFunction, eps: f64) -> Result<GridFunction> {
    add_paraboloid(u, -shift_amount(eps)?)
}
