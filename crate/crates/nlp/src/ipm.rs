//! Primal-dual interior-point method with a filter line search.
//!
//! Inequality constraints receive internal slacks, so the barrier problem is
//! posed over `w = (x, s)` with equality constraints `g(w) = 0` only.

use std::time::{Duration, Instant};

use log::{debug, trace};

use crate::problem::NlpProblem;
use crate::sparse::{LdlFactor, SymmetricPattern};
use crate::NlpError;

#[derive(Debug, Clone)]
pub struct SolverOptions {
    /// Tolerance on the scaled optimality error.
    pub tol: f64,
    /// Tolerance on the unscaled constraint violation.
    pub constr_viol_tol: f64,
    /// Tolerance on the unscaled complementarity.
    pub compl_inf_tol: f64,
    pub acceptable_tol: f64,
    pub acceptable_constr_viol_tol: f64,
    pub acceptable_iter: usize,
    pub max_iter: usize,
    pub time_limit: Option<Duration>,
    pub mu_init: f64,
    pub bound_push: f64,
    pub bound_relax_factor: f64,
    /// Largest gradient norm allowed after scaling.
    pub nlp_scaling_max_gradient: f64,
    pub kappa_sigma: f64,
    pub max_refinement_steps: usize,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            tol: 1e-6,
            constr_viol_tol: 1e-8,
            compl_inf_tol: 1e-4,
            acceptable_tol: 1e-4,
            acceptable_constr_viol_tol: 1e-6,
            acceptable_iter: 15,
            max_iter: 3000,
            time_limit: None,
            mu_init: 0.1,
            bound_push: 1e-2,
            bound_relax_factor: 1e-10,
            nlp_scaling_max_gradient: 100.0,
            kappa_sigma: 1e10,
            max_refinement_steps: 6,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Status {
    Optimal,
    /// Tolerances were not met but the iterate satisfied the looser
    /// acceptable tolerances for several consecutive iterations.
    Acceptable,
    MaxIterations,
    TimeLimit,
    LocallyInfeasible,
    Failed,
}

impl Status {
    pub fn is_success(self) -> bool {
        matches!(self, Status::Optimal | Status::Acceptable)
    }
}

#[derive(Debug, Clone)]
pub struct SolveResult {
    pub status: Status,
    pub x: Vec<f64>,
    pub objective: f64,
    /// Constraint multipliers for `∇f + Σ λ_j ∇c_j - z_l + z_u = 0`.
    pub lambda: Vec<f64>,
    pub z_lower: Vec<f64>,
    pub z_upper: Vec<f64>,
    pub constraint_violation: f64,
    pub dual_infeasibility: f64,
    pub iterations: usize,
    pub message: String,
}

struct Layout {
    n: usize,
    m: usize,
    /// Constraint index of each slack.
    slack_con: Vec<usize>,
    /// Slack index of each constraint (if it is an inequality).
    con_slack: Vec<Option<usize>>,
    jac_struct: Vec<(usize, usize)>,
    hess_struct: Vec<(usize, usize)>,
}

impl Layout {
    fn nw(&self) -> usize {
        self.n + self.slack_con.len()
    }
}

struct Kkt {
    pattern: SymmetricPattern,
    factor: LdlFactor,
    diag_w: Vec<usize>,
    diag_c: Vec<usize>,
    hess: Vec<usize>,
    jac: Vec<usize>,
    slack: Vec<usize>,
    values: Vec<f64>,
    exact: Vec<f64>,
}

impl Kkt {
    fn new(layout: &Layout) -> Self {
        let nw = layout.nw();
        let m = layout.m;
        let mut pattern = SymmetricPattern::new(nw + m);
        let diag_w = (0..nw).map(|i| pattern.push(i, i)).collect();
        let diag_c = (0..m).map(|j| pattern.push(nw + j, nw + j)).collect();
        let hess = layout
            .hess_struct
            .iter()
            .map(|&(r, c)| pattern.push(r, c))
            .collect();
        let jac = layout
            .jac_struct
            .iter()
            .map(|&(r, c)| pattern.push(nw + r, c))
            .collect();
        let slack = layout
            .slack_con
            .iter()
            .enumerate()
            .map(|(k, &j)| pattern.push(nw + j, layout.n + k))
            .collect();
        let factor = LdlFactor::analyze(&pattern);
        debug!(
            "KKT dimension {} with {} entries, factor fill {}",
            pattern.dim(),
            pattern.len(),
            factor.factor_nnz()
        );
        let len = pattern.len();
        Self {
            pattern,
            factor,
            diag_w,
            diag_c,
            hess,
            jac,
            slack,
            values: vec![0.0; len],
            exact: vec![0.0; len],
        }
    }
}

const GAMMA_THETA: f64 = 1e-5;
const GAMMA_PHI: f64 = 1e-8;
const GAMMA_ALPHA: f64 = 0.05;
const DELTA: f64 = 1.0;
const S_THETA: f64 = 1.1;
const S_PHI: f64 = 2.3;
const ETA: f64 = 1e-4;

fn inf_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0_f64, |a, &b| a.max(b.abs()))
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Bounded variables of w in compact form.
struct Bounds {
    lower_idx: Vec<usize>,
    lower_val: Vec<f64>,
    upper_idx: Vec<usize>,
    upper_val: Vec<f64>,
}

struct Evaluator<'a, P: NlpProblem + ?Sized> {
    prob: &'a P,
    layout: &'a Layout,
    df: f64,
    dc: Vec<f64>,
    /// Right-hand side for equality rows, unused for inequalities.
    c_eq: Vec<f64>,
}

impl<P: NlpProblem + ?Sized> Evaluator<'_, P> {
    fn objective(&self, w: &[f64]) -> f64 {
        self.df * self.prob.objective(&w[..self.layout.n])
    }

    /// Scaled residuals g(w) and the raw constraint values c(x).
    fn residual(&self, w: &[f64], g: &mut [f64], c: &mut [f64]) {
        let n = self.layout.n;
        self.prob.constraints(&w[..n], c);
        for j in 0..self.layout.m {
            let target = match self.layout.con_slack[j] {
                Some(k) => w[n + k],
                None => self.c_eq[j],
            };
            g[j] = self.dc[j] * (c[j] - target);
        }
    }
}

struct Iterate {
    w: Vec<f64>,
    y: Vec<f64>,
    zl: Vec<f64>,
    zu: Vec<f64>,
}

fn barrier_value(w: &[f64], b: &Bounds, mu: f64) -> f64 {
    let mut v = 0.0;
    for (&i, &l) in b.lower_idx.iter().zip(&b.lower_val) {
        v -= mu * (w[i] - l).ln();
    }
    for (&i, &u) in b.upper_idx.iter().zip(&b.upper_val) {
        v -= mu * (u - w[i]).ln();
    }
    v
}

fn frac_to_boundary(w: &[f64], dw: &[f64], b: &Bounds, tau: f64) -> f64 {
    let mut alpha = 1.0_f64;
    for (&i, &l) in b.lower_idx.iter().zip(&b.lower_val) {
        if dw[i] < 0.0 {
            alpha = alpha.min(-tau * (w[i] - l) / dw[i]);
        }
    }
    for (&i, &u) in b.upper_idx.iter().zip(&b.upper_val) {
        if dw[i] > 0.0 {
            alpha = alpha.min(tau * (u - w[i]) / dw[i]);
        }
    }
    alpha
}

fn frac_to_boundary_dual(z: &[f64], dz: &[f64], tau: f64) -> f64 {
    let mut alpha = 1.0_f64;
    for (&zi, &di) in z.iter().zip(dz) {
        if di < 0.0 {
            alpha = alpha.min(-tau * zi / di);
        }
    }
    alpha
}

/// Solves the program with the given options.
pub fn solve<P: NlpProblem + ?Sized>(prob: &P, opts: &SolverOptions) -> SolveResult {
    match solve_inner(prob, opts) {
        Ok(r) => r,
        Err(e) => {
            let n = prob.num_vars();
            let m = prob.num_cons();
            SolveResult {
                status: Status::Failed,
                x: prob.initial_point(),
                objective: f64::NAN,
                lambda: vec![0.0; m],
                z_lower: vec![0.0; n],
                z_upper: vec![0.0; n],
                constraint_violation: f64::INFINITY,
                dual_infeasibility: f64::INFINITY,
                iterations: 0,
                message: e.to_string(),
            }
        }
    }
}

fn solve_inner<P: NlpProblem + ?Sized>(
    prob: &P,
    opts: &SolverOptions,
) -> Result<SolveResult, NlpError> {
    let start = Instant::now();
    let n = prob.num_vars();
    let m = prob.num_cons();
    let (xl, xu) = prob.var_bounds();
    let (cl, cu) = prob.con_bounds();
    if xl.len() != n || xu.len() != n || cl.len() != m || cu.len() != m {
        return Err(NlpError::Dimension("bound vectors".into()));
    }
    let mut slack_con = Vec::new();
    let mut con_slack = vec![None; m];
    let mut c_eq = vec![0.0; m];
    for j in 0..m {
        if cl[j] > cu[j] {
            return Err(NlpError::Dimension(format!("constraint {j} has c_l > c_u")));
        }
        if cl[j] == cu[j] {
            c_eq[j] = cl[j];
        } else {
            con_slack[j] = Some(slack_con.len());
            slack_con.push(j);
        }
    }
    let layout = Layout {
        n,
        m,
        slack_con,
        con_slack,
        jac_struct: prob.jacobian_structure(),
        hess_struct: prob.hessian_structure(),
    };
    for &(r, c) in &layout.jac_struct {
        if r >= m || c >= n {
            return Err(NlpError::Dimension("jacobian entry out of range".into()));
        }
    }
    for &(r, c) in &layout.hess_struct {
        if r >= n || c > r {
            return Err(NlpError::Dimension(
                "hessian entries must lie in the lower triangle".into(),
            ));
        }
    }
    let nw = layout.nw();

    // Bounds on w with a small relaxation.
    let relax = |v: f64| opts.bound_relax_factor * v.abs().max(1.0);
    let mut wl = vec![f64::NEG_INFINITY; nw];
    let mut wu = vec![f64::INFINITY; nw];
    for i in 0..n {
        wl[i] = xl[i];
        wu[i] = xu[i];
    }
    for (k, &j) in layout.slack_con.iter().enumerate() {
        wl[n + k] = cl[j];
        wu[n + k] = cu[j];
    }
    for i in 0..nw {
        if wl[i].is_finite() {
            wl[i] -= relax(wl[i]);
        }
        if wu[i].is_finite() {
            wu[i] += relax(wu[i]);
        }
    }
    let bounds = Bounds {
        lower_idx: (0..nw).filter(|&i| wl[i].is_finite()).collect(),
        lower_val: wl.iter().copied().filter(|v| v.is_finite()).collect(),
        upper_idx: (0..nw).filter(|&i| wu[i].is_finite()).collect(),
        upper_val: wu.iter().copied().filter(|v| v.is_finite()).collect(),
    };

    // Initial primal point pushed into the interior.
    let mut x0 = prob.initial_point();
    if x0.len() != n {
        return Err(NlpError::Dimension("initial point".into()));
    }
    let push = |v: f64, l: f64, u: f64| -> f64 {
        let kb = opts.bound_push;
        let mut v = v;
        if l.is_finite() && u.is_finite() {
            let pl = (kb * l.abs().max(1.0)).min(kb * (u - l));
            let pu = (kb * u.abs().max(1.0)).min(kb * (u - l));
            v = v.max(l + pl).min(u - pu);
        } else if l.is_finite() {
            v = v.max(l + kb * l.abs().max(1.0));
        } else if u.is_finite() {
            v = v.min(u - kb * u.abs().max(1.0));
        }
        v
    };
    for i in 0..n {
        x0[i] = push(x0[i], wl[i], wu[i]);
    }
    let mut c_raw = vec![0.0; m];
    prob.constraints(&x0, &mut c_raw);
    if c_raw.iter().any(|v| !v.is_finite()) {
        return Err(NlpError::NonFinite);
    }
    let mut w = x0.clone();
    w.resize(nw, 0.0);
    for (k, &j) in layout.slack_con.iter().enumerate() {
        w[n + k] = push(c_raw[j], wl[n + k], wu[n + k]);
    }

    // Gradient-based scaling at the initial point.
    let mut grad_x = vec![0.0; n];
    prob.gradient(&x0, &mut grad_x);
    let gmax = opts.nlp_scaling_max_gradient;
    let gnorm = inf_norm(&grad_x);
    let df = if gnorm > gmax { gmax / gnorm } else { 1.0 };
    let mut jac_vals = vec![0.0; layout.jac_struct.len()];
    prob.jacobian_values(&x0, &mut jac_vals);
    let mut row_max = vec![0.0_f64; m];
    for (&(r, _), &v) in layout.jac_struct.iter().zip(&jac_vals) {
        row_max[r] = row_max[r].max(v.abs());
    }
    let dc: Vec<f64> = row_max
        .iter()
        .map(|&r| if r > gmax { gmax / r } else { 1.0 })
        .collect();
    let ev = Evaluator {
        prob,
        layout: &layout,
        df,
        dc,
        c_eq,
    };

    let mut kkt = Kkt::new(&layout);
    let nk = nw + m;

    let mut it = Iterate {
        w,
        y: vec![0.0; m],
        zl: vec![1.0; bounds.lower_idx.len()],
        zu: vec![1.0; bounds.upper_idx.len()],
    };

    let mut mu = opts.mu_init;
    let mut tau = (1.0 - mu).max(0.99);
    let mut filter: Vec<(f64, f64)> = Vec::new();
    let mut filter_mu = f64::NAN;
    let mut theta_max = f64::NAN;
    let mut theta_min = f64::NAN;
    let mut delta_w_last = 0.0_f64;
    let mut accept_count = 0usize;
    let mut consecutive_ls_fail = 0usize;

    let mut g = vec![0.0; m];
    let mut hess_vals = vec![0.0; layout.hess_struct.len()];
    let mut grad_w = vec![0.0; nw];
    let status;
    let mut iter = 0usize;
    let mut message = String::new();
    let mut last_errors = (f64::INFINITY, f64::INFINITY);

    loop {
        let x = &it.w[..n];
        // Evaluate derivatives at the current point.
        ev.residual(&it.w, &mut g, &mut c_raw);
        prob.gradient(x, &mut grad_x);
        prob.jacobian_values(x, &mut jac_vals);
        if g.iter().chain(&grad_x).chain(&jac_vals).any(|v| !v.is_finite()) {
            status = Status::Failed;
            message = "non-finite function values at the current iterate".into();
            break;
        }
        grad_w.iter_mut().for_each(|v| *v = 0.0);
        for i in 0..n {
            grad_w[i] = df * grad_x[i];
        }

        // Dual residual ∇f + Jᵀy - zl + zu in scaled terms.
        let mut dual = grad_w.clone();
        for (k, &(r, c)) in layout.jac_struct.iter().enumerate() {
            dual[c] += ev.dc[r] * jac_vals[k] * it.y[r];
        }
        for (k, &j) in layout.slack_con.iter().enumerate() {
            dual[n + k] -= ev.dc[j] * it.y[j];
        }
        for (p, &i) in bounds.lower_idx.iter().enumerate() {
            dual[i] -= it.zl[p];
        }
        for (p, &i) in bounds.upper_idx.iter().enumerate() {
            dual[i] += it.zu[p];
        }

        let s_max = 100.0;
        let zsum: f64 = it.zl.iter().chain(&it.zu).map(|v| v.abs()).sum();
        let ysum: f64 = it.y.iter().map(|v| v.abs()).sum();
        let nz = (bounds.lower_idx.len() + bounds.upper_idx.len()).max(1) as f64;
        let s_d = ((ysum + zsum) / (m as f64 + nz)).max(s_max) / s_max;
        let s_c = (zsum / nz).max(s_max) / s_max;
        let compl = |mu_t: f64| -> f64 {
            let mut e = 0.0_f64;
            for (p, (&i, &l)) in bounds.lower_idx.iter().zip(&bounds.lower_val).enumerate() {
                e = e.max(((it.w[i] - l) * it.zl[p] - mu_t).abs());
            }
            for (p, (&i, &u)) in bounds.upper_idx.iter().zip(&bounds.upper_val).enumerate() {
                e = e.max(((u - it.w[i]) * it.zu[p] - mu_t).abs());
            }
            e
        };
        let dual_inf = inf_norm(&dual);
        let primal_inf = inf_norm(&g);
        let unscaled_viol = unscaled_violation(&c_raw, &cl, &cu);
        let unscaled_dual = dual_inf / df;
        let e0 = (dual_inf / s_d).max(primal_inf).max(compl(0.0) / s_c);
        last_errors = (unscaled_viol, unscaled_dual);
        trace!(
            "iter {iter:4} f={:.8e} inf_pr={primal_inf:.2e} inf_du={dual_inf:.2e} mu={mu:.2e}",
            ev.objective(&it.w)
        );

        if e0 <= opts.tol
            && unscaled_viol <= opts.constr_viol_tol
            && compl(0.0) <= opts.compl_inf_tol
        {
            status = Status::Optimal;
            break;
        }
        if e0 <= opts.acceptable_tol && unscaled_viol <= opts.acceptable_constr_viol_tol {
            accept_count += 1;
            if accept_count >= opts.acceptable_iter {
                status = Status::Acceptable;
                break;
            }
        } else {
            accept_count = 0;
        }
        if iter >= opts.max_iter {
            status = Status::MaxIterations;
            break;
        }
        if let Some(limit) = opts.time_limit {
            if start.elapsed() > limit {
                status = Status::TimeLimit;
                break;
            }
        }

        // Barrier parameter update.
        let mu_min = opts.tol / 10.0;
        loop {
            let e_mu = (dual_inf / s_d).max(primal_inf).max(compl(mu) / s_c);
            if e_mu > 10.0 * mu || mu <= mu_min {
                break;
            }
            mu = (0.2 * mu).min(mu.powf(1.5)).max(mu_min);
            tau = (1.0 - mu).max(0.99);
        }
        if consecutive_ls_fail >= 3 && mu > mu_min {
            mu = (0.2 * mu).max(mu_min);
            tau = (1.0 - mu).max(0.99);
        }

        // Hessian of the Lagrangian.
        let lam_scaled: Vec<f64> = (0..m).map(|j| it.y[j] * ev.dc[j]).collect();
        prob.hessian_values(&it.w[..n], df, &lam_scaled, &mut hess_vals);
        if hess_vals.iter().any(|v| !v.is_finite()) {
            status = Status::Failed;
            message = "non-finite Hessian".into();
            break;
        }

        let mut sigma = vec![0.0; nw];
        for (p, (&i, &l)) in bounds.lower_idx.iter().zip(&bounds.lower_val).enumerate() {
            sigma[i] += it.zl[p] / (it.w[i] - l);
        }
        for (p, (&i, &u)) in bounds.upper_idx.iter().zip(&bounds.upper_val).enumerate() {
            sigma[i] += it.zu[p] / (u - it.w[i]);
        }

        // Right-hand side.
        let mut grad_phi = grad_w.clone();
        for (&i, &l) in bounds.lower_idx.iter().zip(&bounds.lower_val) {
            grad_phi[i] -= mu / (it.w[i] - l);
        }
        for (&i, &u) in bounds.upper_idx.iter().zip(&bounds.upper_val) {
            grad_phi[i] += mu / (u - it.w[i]);
        }
        let mut rhs = vec![0.0; nk];
        {
            let mut r1 = grad_phi.clone();
            for (k, &(r, c)) in layout.jac_struct.iter().enumerate() {
                r1[c] += ev.dc[r] * jac_vals[k] * it.y[r];
            }
            for (k, &j) in layout.slack_con.iter().enumerate() {
                r1[n + k] -= ev.dc[j] * it.y[j];
            }
            for i in 0..nw {
                rhs[i] = -r1[i];
            }
            for j in 0..m {
                rhs[nw + j] = -g[j];
            }
        }

        // Fill the constant part of the KKT values.
        for (k, &slot) in kkt.hess.iter().enumerate() {
            kkt.values[slot] = hess_vals[k];
        }
        for (k, &slot) in kkt.jac.iter().enumerate() {
            let r = layout.jac_struct[k].0;
            kkt.values[slot] = ev.dc[r] * jac_vals[k];
        }
        for (k, &slot) in kkt.slack.iter().enumerate() {
            kkt.values[slot] = -ev.dc[layout.slack_con[k]];
        }

        // Inertia correction.
        let mut delta_w = 0.0_f64;
        let mut delta_c = 1e-9_f64;
        let mut attempts = 0;
        let factored = loop {
            attempts += 1;
            for i in 0..nw {
                kkt.values[kkt.diag_w[i]] = sigma[i] + delta_w;
            }
            for j in 0..m {
                kkt.values[kkt.diag_c[j]] = -delta_c;
            }
            let ok = match kkt.factor.factor(&kkt.values) {
                Ok(pos) => pos == nw,
                Err(_) => {
                    delta_c = delta_c.max(1e-8 * mu.powf(0.25));
                    false
                }
            };
            if ok {
                break true;
            }
            if attempts > 60 {
                break false;
            }
            delta_w = if delta_w == 0.0 {
                if delta_w_last == 0.0 {
                    1e-4
                } else {
                    (delta_w_last / 3.0).max(1e-20)
                }
            } else if delta_w_last == 0.0 {
                delta_w * 100.0
            } else {
                delta_w * 8.0
            };
            if delta_w > 1e40 {
                break false;
            }
        };
        if !factored {
            status = Status::Failed;
            message = "could not obtain a KKT matrix with correct inertia".into();
            break;
        }
        if delta_w > 0.0 {
            delta_w_last = delta_w;
        }
        kkt.exact.copy_from_slice(&kkt.values);
        for j in 0..m {
            kkt.exact[kkt.diag_c[j]] = 0.0;
        }

        let step = solve_refined(&kkt, &rhs, opts.max_refinement_steps);
        let dw = step[..nw].to_vec();
        let dy = step[nw..].to_vec();

        // Bound multiplier steps.
        let mut dzl = vec![0.0; it.zl.len()];
        for (p, (&i, &l)) in bounds.lower_idx.iter().zip(&bounds.lower_val).enumerate() {
            let s = it.w[i] - l;
            dzl[p] = (mu - s * it.zl[p] - it.zl[p] * dw[i]) / s;
        }
        let mut dzu = vec![0.0; it.zu.len()];
        for (p, (&i, &u)) in bounds.upper_idx.iter().zip(&bounds.upper_val).enumerate() {
            let s = u - it.w[i];
            dzu[p] = (mu - s * it.zu[p] + it.zu[p] * dw[i]) / s;
        }

        let alpha_max = frac_to_boundary(&it.w, &dw, &bounds, tau);
        let alpha_z = frac_to_boundary_dual(&it.zl, &dzl, tau)
            .min(frac_to_boundary_dual(&it.zu, &dzu, tau));

        // Filter line search on (θ, φ): constraint violation and barrier objective.
        if mu != filter_mu {
            filter.clear();
            filter_mu = mu;
        }
        let theta = g.iter().map(|v| v.abs()).sum::<f64>();
        if theta_max.is_nan() {
            theta_max = 1e4 * theta.max(1.0);
            theta_min = 1e-4 * theta.max(1.0);
        }
        let dphi = dot(&grad_phi, &dw);
        let mut g_trial = vec![0.0; m];
        let mut c_trial = vec![0.0; m];
        let measure = |w: &[f64], g_buf: &mut [f64], c_buf: &mut [f64]| -> (f64, f64) {
            ev.residual(w, g_buf, c_buf);
            let th = g_buf.iter().map(|v| v.abs()).sum::<f64>();
            let ph = ev.objective(w) + barrier_value(w, &bounds, mu);
            if th.is_finite() && ph.is_finite() {
                (th, ph)
            } else {
                (f64::INFINITY, f64::INFINITY)
            }
        };
        let phi = ev.objective(&it.w) + barrier_value(&it.w, &bounds, mu);
        let in_filter = |th: f64, ph: f64, f: &[(f64, f64)]| f.iter().any(|&(a, b)| th >= a && ph >= b);
        let switching = |alpha: f64| -> bool { dphi < 0.0 && alpha * (-dphi).powf(S_PHI) > DELTA * theta.powf(S_THETA) };
        let alpha_min = if dphi < 0.0 {
            GAMMA_ALPHA
                * GAMMA_THETA
                    .min(GAMMA_PHI * theta / -dphi)
                    .min(DELTA * theta.powf(S_THETA) / (-dphi).powf(S_PHI))
        } else {
            GAMMA_ALPHA * GAMMA_THETA
        };
        let tiny_step = dw
            .iter()
            .zip(&it.w)
            .all(|(d, w)| d.abs() <= 10.0 * f64::EPSILON * (1.0 + w.abs()));

        // Returns Some(augment_filter) when the trial is acceptable.
        let acceptable = |alpha: f64, th: f64, ph: f64, f: &[(f64, f64)]| -> Option<bool> {
            if !th.is_finite() || th > theta_max || in_filter(th, ph, f) {
                return None;
            }
            if theta <= theta_min && switching(alpha) {
                return (ph <= phi + ETA * alpha * dphi).then_some(false);
            }
            if th <= (1.0 - GAMMA_THETA) * theta || ph <= phi - GAMMA_PHI * theta {
                let f_type = switching(alpha) && ph <= phi + ETA * alpha * dphi;
                return Some(!f_type);
            }
            None
        };

        let mut alpha = alpha_max;
        let mut accepted: Option<(Vec<f64>, f64, bool)> = None;
        if tiny_step {
            let trial: Vec<f64> = it.w.iter().zip(&dw).map(|(w, d)| w + alpha * d).collect();
            accepted = Some((trial, alpha, false));
        }
        let mut first = true;
        while accepted.is_none() && alpha >= alpha_min.min(1e-12).max(1e-16) {
            let trial: Vec<f64> = it.w.iter().zip(&dw).map(|(w, d)| w + alpha * d).collect();
            let (th, ph) = measure(&trial, &mut g_trial, &mut c_trial);
            if let Some(aug) = acceptable(alpha, th, ph, &filter) {
                accepted = Some((trial, alpha, aug));
                break;
            }
            if first && th >= theta && th.is_finite() {
                // Second-order corrections.
                let mut c_soc: Vec<f64> = g.iter().zip(&g_trial).map(|(a, b)| alpha * a + b).collect();
                let mut theta_old = th;
                for _ in 0..4 {
                    let mut rhs_soc = rhs.clone();
                    for j in 0..m {
                        rhs_soc[nw + j] = -c_soc[j];
                    }
                    let d_soc = solve_refined(&kkt, &rhs_soc, opts.max_refinement_steps);
                    let a_soc = frac_to_boundary(&it.w, &d_soc[..nw], &bounds, tau);
                    let trial: Vec<f64> = it.w.iter().zip(&d_soc[..nw]).map(|(w, d)| w + a_soc * d).collect();
                    let (ths, phs) = measure(&trial, &mut g_trial, &mut c_trial);
                    if let Some(aug) = acceptable(alpha, ths, phs, &filter) {
                        accepted = Some((trial, alpha, aug));
                        break;
                    }
                    if !(ths <= 0.99 * theta_old) {
                        break;
                    }
                    theta_old = ths;
                    for j in 0..m {
                        c_soc[j] = a_soc * c_soc[j] + g_trial[j];
                    }
                }
                if accepted.is_some() {
                    break;
                }
            }
            first = false;
            alpha *= 0.5;
        }
        let (new_w, alpha) = match accepted {
            Some((w_new, a, aug)) => {
                if aug {
                    filter.push(((1.0 - GAMMA_THETA) * theta, phi - GAMMA_PHI * theta));
                }
                consecutive_ls_fail = 0;
                (w_new, a)
            }
            None => {
                // Feasibility restoration: least-change step onto the
                // linearized constraints, backtracking on θ alone.
                consecutive_ls_fail += 1;
                if consecutive_ls_fail > 25 || theta <= 1e-14 {
                    status = if theta > opts.constr_viol_tol {
                        Status::LocallyInfeasible
                    } else {
                        Status::Failed
                    };
                    message = "line search failed and restoration made no progress".into();
                    break;
                }
                filter.push(((1.0 - GAMMA_THETA) * theta, phi - GAMMA_PHI * theta));
                for &slot in &kkt.hess {
                    kkt.values[slot] = 0.0;
                }
                let reg = 1e-8_f64.max(delta_w);
                for i in 0..nw {
                    kkt.values[kkt.diag_w[i]] = sigma[i] + reg;
                }
                for j in 0..m {
                    kkt.values[kkt.diag_c[j]] = -1e-12;
                }
                let restored = match kkt.factor.factor(&kkt.values) {
                    Ok(_) => {
                        kkt.exact.copy_from_slice(&kkt.values);
                        let mut rr = vec![0.0; nk];
                        for j in 0..m {
                            rr[nw + j] = -g[j];
                        }
                        let d = solve_refined(&kkt, &rr, opts.max_refinement_steps);
                        let a_max = frac_to_boundary(&it.w, &d[..nw], &bounds, tau);
                        let mut a = a_max;
                        let mut found = None;
                        while a > 1e-10 {
                            let trial: Vec<f64> = it.w.iter().zip(&d[..nw]).map(|(w, s)| w + a * s).collect();
                            let (th, _) = measure(&trial, &mut g_trial, &mut c_trial);
                            if th <= (1.0 - 1e-4 * a) * theta {
                                found = Some(trial);
                                break;
                            }
                            a *= 0.5;
                        }
                        found
                    }
                    Err(_) => None,
                };
                match restored {
                    Some(w_new) => {
                        trace!("  restoration step");
                        (w_new, 0.0)
                    }
                    None => {
                        filter.clear();
                        let a = alpha_max * 1e-2;
                        (it.w.iter().zip(&dw).map(|(w, d)| w + a * d).collect(), a)
                    }
                }
            }
        };
        trace!("  alpha={alpha:.2e} alpha_max={alpha_max:.2e} theta={theta:.2e} filter={} delta_w={delta_w:.2e}", filter.len());
        it.w = new_w;
        for j in 0..m {
            it.y[j] += alpha * dy[j];
        }
        for p in 0..it.zl.len() {
            it.zl[p] += alpha_z * dzl[p];
        }
        for p in 0..it.zu.len() {
            it.zu[p] += alpha_z * dzu[p];
        }
        let ks = opts.kappa_sigma;
        for (p, (&i, &l)) in bounds.lower_idx.iter().zip(&bounds.lower_val).enumerate() {
            let s = it.w[i] - l;
            it.zl[p] = it.zl[p].clamp(mu / (ks * s), ks * mu / s);
        }
        for (p, (&i, &u)) in bounds.upper_idx.iter().zip(&bounds.upper_val).enumerate() {
            let s = u - it.w[i];
            it.zu[p] = it.zu[p].clamp(mu / (ks * s), ks * mu / s);
        }
        iter += 1;
    }

    let x = it.w[..n].to_vec();
    let objective = prob.objective(&x);
    let lambda: Vec<f64> = (0..m).map(|j| it.y[j] * ev.dc[j] / df).collect();
    let mut z_lower = vec![0.0; n];
    let mut z_upper = vec![0.0; n];
    for (p, &i) in bounds.lower_idx.iter().enumerate() {
        if i < n {
            z_lower[i] = it.zl[p] / df;
        }
    }
    for (p, &i) in bounds.upper_idx.iter().enumerate() {
        if i < n {
            z_upper[i] = it.zu[p] / df;
        }
    }
    prob.constraints(&x, &mut c_raw);
    let viol = unscaled_violation(&c_raw, &cl, &cu);
    debug!(
        "solver finished: {status:?} after {iter} iterations, f = {objective:.8e}, viol = {viol:.2e}, {:.2?}",
        start.elapsed()
    );
    Ok(SolveResult {
        status,
        x,
        objective,
        lambda,
        z_lower,
        z_upper,
        constraint_violation: viol,
        dual_infeasibility: last_errors.1,
        iterations: iter,
        message,
    })
}

/// Largest violation of `c_l <= c <= c_u`, relative to the bound magnitude
/// when that exceeds one.
fn unscaled_violation(c: &[f64], cl: &[f64], cu: &[f64]) -> f64 {
    let mut v = 0.0_f64;
    for j in 0..c.len() {
        if cl[j].is_finite() {
            v = v.max((cl[j] - c[j]) / cl[j].abs().max(1.0));
        }
        if cu[j].is_finite() {
            v = v.max((c[j] - cu[j]) / cu[j].abs().max(1.0));
        }
    }
    v
}

/// Solves with the regularized factor and refines against the unregularized
/// matrix, keeping the iterate with the smallest residual.
fn solve_refined(kkt: &Kkt, rhs: &[f64], max_steps: usize) -> Vec<f64> {
    let mut x = rhs.to_vec();
    kkt.factor.solve_in_place(&mut x);
    let nk = rhs.len();
    let mut r = vec![0.0; nk];
    let residual = |x: &[f64], r: &mut [f64]| -> f64 {
        kkt.pattern.mul_vec(&kkt.exact, x, r);
        for i in 0..nk {
            r[i] = rhs[i] - r[i];
        }
        inf_norm(r)
    };
    let scale = inf_norm(rhs).max(1e-300);
    let mut best = residual(&x, &mut r);
    for _ in 0..max_steps {
        if best <= 1e-14 * scale {
            break;
        }
        let mut d = r.clone();
        kkt.factor.solve_in_place(&mut d);
        let cand: Vec<f64> = x.iter().zip(&d).map(|(a, b)| a + b).collect();
        let mut rc = vec![0.0; nk];
        let res = residual(&cand, &mut rc);
        if !(res < 0.5 * best) {
            if res < best {
                x = cand;
            }
            break;
        }
        x = cand;
        r = rc;
        best = res;
    }
    x
}
