use num_dual::DualNum;
use pem_nlp::model::{element_gradient, element_hessian};
use pem_nlp::{solve, Element, Model, NlpProblem, SolverOptions, Status};
use proptest::prelude::*;

#[derive(Debug, Clone)]
enum E {
    /// x0 * x3 * (x0 + x1 + x2) + x2
    Hs071Obj([usize; 4]),
    Product([usize; 4]),
    SumSquares([usize; 4]),
    /// (1 - x)^2 + 100 (y - x^2)^2
    Rosen([usize; 2]),
    Square([usize; 1], f64),
    /// exp(a x) * ln(1 + y^2) + asinh(x y)
    Mixed([usize; 2], f64),
}

impl Element for E {
    fn vars(&self) -> &[usize] {
        match self {
            E::Hs071Obj(v) | E::Product(v) | E::SumSquares(v) => v,
            E::Rosen(v) | E::Mixed(v, _) => v,
            E::Square(v, _) => v,
        }
    }

    fn eval<D: DualNum<Primitive = f64> + Copy>(&self, x: &[D]) -> D {
        match self {
            E::Hs071Obj(_) => x[0] * x[3] * (x[0] + x[1] + x[2]) + x[2],
            E::Product(_) => x[0] * x[1] * x[2] * x[3],
            E::SumSquares(_) => x.iter().map(|v| *v * *v).sum(),
            E::Rosen(_) => {
                let a = -x[0] + 1.0;
                let b = x[1] - x[0] * x[0];
                a * a + b * b * 100.0
            }
            E::Square(_, c) => (x[0] - *c).powi(2),
            E::Mixed(_, a) => (x[0] * *a).exp() * (x[1] * x[1] + 1.0).ln() + (x[0] * x[1]).asinh(),
        }
    }
}

fn opts() -> SolverOptions {
    SolverOptions::default()
}

#[test]
fn hs071() {
    let mut m = Model::new();
    let init = [1.0, 5.0, 5.0, 1.0];
    let v: Vec<usize> = init.iter().map(|&x0| m.add_var(1.0, 5.0, x0)).collect();
    let vv = [v[0], v[1], v[2], v[3]];
    m.add_objective_element(E::Hs071Obj(vv));
    m.add_constraint(vec![], vec![E::Product(vv)], 25.0, f64::INFINITY);
    m.add_constraint(vec![], vec![E::SumSquares(vv)], 40.0, 40.0);
    let p = m.compile();
    let r = solve(&p, &opts());
    assert_eq!(r.status, Status::Optimal, "{}", r.message);
    let expect = [1.0, 4.742_999_64, 3.821_149_98, 1.379_408_29];
    for (a, b) in r.x.iter().zip(expect) {
        assert!((a - b).abs() < 1e-6, "{:?}", r.x);
    }
    assert!((r.objective - 17.014_017_29).abs() < 1e-6);
    assert!(r.constraint_violation <= 1e-8);
    // Multipliers in the convention ∇f + Σ λ ∇c - z_l + z_u = 0.
    assert!((r.lambda[0] + 0.552_293_66).abs() < 1e-5, "{:?}", r.lambda);
    assert!((r.lambda[1] - 0.161_468_56).abs() < 1e-5, "{:?}", r.lambda);
    assert!((r.z_lower[0] - 1.087_871).abs() < 1e-4, "{:?}", r.z_lower);
}

#[test]
fn rosenbrock_unconstrained_and_bounded() {
    let mut m = Model::new();
    let x = m.add_var(f64::NEG_INFINITY, f64::INFINITY, -1.2);
    let y = m.add_var(f64::NEG_INFINITY, f64::INFINITY, 1.0);
    m.add_objective_element(E::Rosen([x, y]));
    let r = solve(&m.compile(), &opts());
    assert_eq!(r.status, Status::Optimal);
    assert!((r.x[0] - 1.0).abs() < 1e-5 && (r.x[1] - 1.0).abs() < 1e-5);

    let mut m = Model::new();
    let x = m.add_var(f64::NEG_INFINITY, 0.5, -1.2);
    let y = m.add_var(f64::NEG_INFINITY, f64::INFINITY, 1.0);
    m.add_objective_element(E::Rosen([x, y]));
    let r = solve(&m.compile(), &opts());
    assert_eq!(r.status, Status::Optimal);
    assert!((r.x[0] - 0.5).abs() < 1e-6 && (r.x[1] - 0.25).abs() < 1e-6);
}

#[test]
fn linear_program_with_equalities() {
    // min -x - 2y  s.t. x + y <= 4, x + 3y <= 6, x - y = 0.5, x, y >= 0
    let mut m: Model<E> = Model::new();
    let x = m.add_var(0.0, f64::INFINITY, 0.0);
    let y = m.add_var(0.0, f64::INFINITY, 0.0);
    m.add_objective_linear(x, -1.0);
    m.add_objective_linear(y, -2.0);
    m.add_constraint(vec![(x, 1.0), (y, 1.0)], vec![], f64::NEG_INFINITY, 4.0);
    m.add_constraint(vec![(x, 1.0), (y, 3.0)], vec![], f64::NEG_INFINITY, 6.0);
    m.add_constraint(vec![(x, 1.0), (y, -1.0)], vec![], 0.5, 0.5);
    let r = solve(&m.compile(), &opts());
    assert_eq!(r.status, Status::Optimal);
    // Optimum at x + 3y = 6, x - y = 0.5 -> y = 1.375, x = 1.875.
    assert!((r.x[0] - 1.875).abs() < 1e-6 && (r.x[1] - 1.375).abs() < 1e-6, "{:?}", r.x);
}

#[test]
fn degenerate_redundant_equalities() {
    // Duplicate equality rows make the Jacobian rank deficient.
    let mut m = Model::new();
    let x = m.add_var(-10.0, 10.0, 3.0);
    let y = m.add_var(-10.0, 10.0, -2.0);
    m.add_objective_element(E::Square([x], 2.0));
    m.add_objective_element(E::Square([y], -1.0));
    m.add_constraint(vec![(x, 1.0), (y, 1.0)], vec![], 0.0, 0.0);
    m.add_constraint(vec![(x, 2.0), (y, 2.0)], vec![], 0.0, 0.0);
    let r = solve(&m.compile(), &opts());
    assert!(r.status.is_success(), "{:?} {}", r.status, r.message);
    assert!((r.x[0] - 1.5).abs() < 1e-5 && (r.x[1] + 1.5).abs() < 1e-5, "{:?}", r.x);
}

#[test]
fn infeasible_problem_is_not_reported_optimal() {
    let mut m: Model<E> = Model::new();
    let x = m.add_var(0.0, 1.0, 0.5);
    m.add_objective_linear(x, 1.0);
    m.add_constraint(vec![], vec![E::Square([x], 0.0)], 4.0, 4.0);
    let mut o = opts();
    o.max_iter = 300;
    let r = solve(&m.compile(), &o);
    assert!(!r.status.is_success());
}

fn finite_diff_grad(e: &E, x: &[f64]) -> Vec<f64> {
    let h = 1e-6;
    e.vars()
        .iter()
        .map(|&i| {
            let mut xp = x.to_vec();
            let mut xm = x.to_vec();
            xp[i] += h;
            xm[i] -= h;
            let f = |z: &[f64]| {
                let loc: Vec<f64> = e.vars().iter().map(|&k| z[k]).collect();
                e.eval::<f64>(&loc)
            };
            (f(&xp) - f(&xm)) / (2.0 * h)
        })
        .collect()
}

proptest! {
    #[test]
    fn element_derivatives_match_finite_differences(
        a in -1.0f64..1.0, x0 in -2.0f64..2.0, y0 in -2.0f64..2.0
    ) {
        let e = E::Mixed([1, 0], a);
        let x = vec![y0, x0];
        let mut g = [0.0; 12];
        element_gradient(&e, &x, &mut g);
        let fd = finite_diff_grad(&e, &x);
        for k in 0..2 {
            prop_assert!((g[k] - fd[k]).abs() < 1e-5 * (1.0 + fd[k].abs()));
        }
        // Hessian by differencing the analytic gradient.
        let mut h = [0.0; 78];
        element_hessian(&e, &x, &mut h);
        let step = 1e-6;
        for (col, &gi) in e.vars().iter().enumerate() {
            let mut xp = x.clone();
            let mut xm = x.clone();
            xp[gi] += step;
            xm[gi] -= step;
            let mut gp = [0.0; 12];
            let mut gm = [0.0; 12];
            element_gradient(&e, &xp, &mut gp);
            element_gradient(&e, &xm, &mut gm);
            for row in col..2 {
                let fd = (gp[row] - gm[row]) / (2.0 * step);
                let idx = row * (row + 1) / 2 + col;
                prop_assert!((h[idx] - fd).abs() < 1e-4 * (1.0 + fd.abs()));
            }
        }
    }

    #[test]
    fn bound_constrained_quadratic_is_projected(
        c in proptest::collection::vec(-3.0f64..3.0, 1..6),
        lo in -1.0f64..0.0, width in 0.1f64..2.0,
    ) {
        let mut m = Model::new();
        let hi = lo + width;
        for &ci in &c {
            let v = m.add_var(lo, hi, 0.5 * (lo + hi));
            m.add_objective_element(E::Square([v], ci));
        }
        let p = m.compile();
        let r = solve(&p, &SolverOptions::default());
        prop_assert_eq!(r.status, Status::Optimal);
        // Complementarity tolerance bounds the objective gap, not the
        // distance to the bound.
        let best: f64 = c.iter().map(|&ci| (ci.clamp(lo, hi) - ci).powi(2)).sum();
        prop_assert!(r.objective - best < 1e-5);
        for (xi, &ci) in r.x.iter().zip(&c) {
            prop_assert!((xi - ci.clamp(lo, hi)).abs() < 1e-3);
        }
        prop_assert_eq!(p.num_vars(), c.len());
    }
}
