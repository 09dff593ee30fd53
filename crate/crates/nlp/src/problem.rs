/// A smooth nonlinear program with sparse first and second derivatives.
///
/// Equality constraints use `c_l[j] == c_u[j]`. Infinite bounds are written as
/// `f64::INFINITY` / `f64::NEG_INFINITY`.
pub trait NlpProblem {
    fn num_vars(&self) -> usize;
    fn num_cons(&self) -> usize;
    fn var_bounds(&self) -> (Vec<f64>, Vec<f64>);
    fn con_bounds(&self) -> (Vec<f64>, Vec<f64>);
    fn initial_point(&self) -> Vec<f64>;

    fn objective(&self, x: &[f64]) -> f64;
    fn gradient(&self, x: &[f64], grad: &mut [f64]);
    fn constraints(&self, x: &[f64], c: &mut [f64]);

    /// (row, col) pairs of the constraint Jacobian. Duplicates are summed.
    fn jacobian_structure(&self) -> Vec<(usize, usize)>;
    fn jacobian_values(&self, x: &[f64], vals: &mut [f64]);

    /// (row, col) pairs with row >= col of the Lagrangian Hessian. Duplicates
    /// are summed.
    fn hessian_structure(&self) -> Vec<(usize, usize)>;
    /// Values of `obj_factor * ∇²f + Σ lambda_j ∇²c_j`.
    fn hessian_values(&self, x: &[f64], obj_factor: f64, lambda: &[f64], vals: &mut [f64]);
}
