//! Algebraic modelling layer: problems are assembled from linear terms and
//! small nonlinear elements whose derivatives come from forward-mode dual
//! numbers.

use std::collections::HashMap;

use nalgebra::SVector;
use num_dual::{gradient, hessian, Dual2SVec64, DualNum, DualSVec64};

use crate::problem::NlpProblem;

/// Largest number of variables a single element may depend on.
pub const MAX_ELEMENT_VARS: usize = 12;

/// A smooth scalar function of a few model variables.
pub trait Element: Sync {
    /// Global indices of the variables this element reads, all distinct.
    fn vars(&self) -> &[usize];
    /// Value for the local variable values `x`, ordered like [`Element::vars`].
    fn eval<D: DualNum<Primitive = f64> + Copy>(&self, x: &[D]) -> D;
}

#[derive(Debug, Clone)]
struct Row<E> {
    linear: Vec<(usize, f64)>,
    elements: Vec<E>,
    lo: f64,
    hi: f64,
}

/// Builder for a nonlinear program.
#[derive(Debug, Clone)]
pub struct Model<E> {
    xl: Vec<f64>,
    xu: Vec<f64>,
    x0: Vec<f64>,
    obj_linear: Vec<(usize, f64)>,
    obj_constant: f64,
    obj_elements: Vec<E>,
    rows: Vec<Row<E>>,
}

impl<E: Element> Default for Model<E> {
    fn default() -> Self {
        Self::new()
    }
}

impl<E: Element> Model<E> {
    pub fn new() -> Self {
        Self {
            xl: Vec::new(),
            xu: Vec::new(),
            x0: Vec::new(),
            obj_linear: Vec::new(),
            obj_constant: 0.0,
            obj_elements: Vec::new(),
            rows: Vec::new(),
        }
    }

    pub fn num_vars(&self) -> usize {
        self.x0.len()
    }

    pub fn num_cons(&self) -> usize {
        self.rows.len()
    }

    pub fn add_var(&mut self, lo: f64, hi: f64, init: f64) -> usize {
        assert!(lo <= hi, "variable bounds are reversed");
        self.xl.push(lo);
        self.xu.push(hi);
        self.x0.push(init);
        self.x0.len() - 1
    }

    pub fn add_objective_linear(&mut self, var: usize, coef: f64) {
        self.obj_linear.push((var, coef));
    }

    pub fn add_objective_constant(&mut self, value: f64) {
        self.obj_constant += value;
    }

    pub fn add_objective_element(&mut self, e: E) {
        self.obj_elements.push(e);
    }

    /// Adds `lo <= Σ a_i x_i + Σ e_k(x) <= hi` and returns its row index.
    pub fn add_constraint(
        &mut self,
        linear: Vec<(usize, f64)>,
        elements: Vec<E>,
        lo: f64,
        hi: f64,
    ) -> usize {
        self.rows.push(Row {
            linear,
            elements,
            lo,
            hi,
        });
        self.rows.len() - 1
    }

    pub fn set_initial_point(&mut self, x0: &[f64]) {
        assert_eq!(x0.len(), self.x0.len());
        self.x0.copy_from_slice(x0);
    }

    pub fn initial_point(&self) -> &[f64] {
        &self.x0
    }

    /// Computes the sparsity structure and returns a solvable problem.
    pub fn compile(self) -> CompiledModel<E> {
        let n = self.num_vars();
        let check = |e: &E| {
            let v = e.vars();
            assert!(
                !v.is_empty() && v.len() <= MAX_ELEMENT_VARS,
                "element must read between 1 and {MAX_ELEMENT_VARS} variables"
            );
            for (a, &i) in v.iter().enumerate() {
                assert!(i < n, "element variable out of range");
                assert!(!v[..a].contains(&i), "element variables must be distinct");
            }
        };
        self.obj_elements.iter().for_each(check);
        for r in &self.rows {
            r.elements.iter().for_each(check);
            for &(i, _) in &r.linear {
                assert!(i < n, "linear term out of range");
            }
        }

        let mut jac_struct = Vec::new();
        let mut row_linear_slots = Vec::with_capacity(self.rows.len());
        let mut row_element_slots = Vec::with_capacity(self.rows.len());
        for (j, r) in self.rows.iter().enumerate() {
            let mut cols: Vec<usize> = r.linear.iter().map(|&(i, _)| i).collect();
            for e in &r.elements {
                cols.extend_from_slice(e.vars());
            }
            cols.sort_unstable();
            cols.dedup();
            let base = jac_struct.len();
            jac_struct.extend(cols.iter().map(|&c| (j, c)));
            let slot = |i: usize| base + cols.binary_search(&i).expect("column registered");
            row_linear_slots.push(r.linear.iter().map(|&(i, _)| slot(i)).collect::<Vec<_>>());
            row_element_slots.push(
                r.elements
                    .iter()
                    .map(|e| e.vars().iter().map(|&i| slot(i)).collect::<Vec<_>>())
                    .collect::<Vec<_>>(),
            );
        }

        let mut hess_map: HashMap<(usize, usize), usize> = HashMap::new();
        let mut hess_struct = Vec::new();
        let mut local_slots = |e: &E| -> Vec<usize> {
            let v = e.vars();
            let mut out = Vec::with_capacity(v.len() * (v.len() + 1) / 2);
            for a in 0..v.len() {
                for b in 0..=a {
                    let key = if v[a] >= v[b] { (v[a], v[b]) } else { (v[b], v[a]) };
                    let next = hess_struct.len();
                    let s = *hess_map.entry(key).or_insert_with(|| {
                        hess_struct.push(key);
                        next
                    });
                    out.push(s);
                }
            }
            out
        };
        let obj_hess_slots: Vec<Vec<usize>> = self.obj_elements.iter().map(&mut local_slots).collect();
        let row_hess_slots: Vec<Vec<Vec<usize>>> = self
            .rows
            .iter()
            .map(|r| r.elements.iter().map(&mut local_slots).collect())
            .collect();

        CompiledModel {
            model: self,
            jac_struct,
            row_linear_slots,
            row_element_slots,
            hess_struct,
            obj_hess_slots,
            row_hess_slots,
        }
    }
}

/// A [`Model`] with precomputed derivative structure.
#[derive(Debug, Clone)]
pub struct CompiledModel<E> {
    model: Model<E>,
    jac_struct: Vec<(usize, usize)>,
    row_linear_slots: Vec<Vec<usize>>,
    row_element_slots: Vec<Vec<Vec<usize>>>,
    hess_struct: Vec<(usize, usize)>,
    obj_hess_slots: Vec<Vec<usize>>,
    row_hess_slots: Vec<Vec<Vec<usize>>>,
}

fn gather(e: &impl Element, x: &[f64], buf: &mut [f64; MAX_ELEMENT_VARS]) -> usize {
    let v = e.vars();
    for (k, &i) in v.iter().enumerate() {
        buf[k] = x[i];
    }
    v.len()
}

fn value_of<E: Element>(e: &E, x: &[f64]) -> f64 {
    let mut buf = [0.0; MAX_ELEMENT_VARS];
    let len = gather(e, x, &mut buf);
    e.eval::<f64>(&buf[..len])
}

fn grad_n<E: Element, const N: usize>(e: &E, local: &[f64], out: &mut [f64]) -> f64 {
    let x = SVector::<f64, N>::from_column_slice(local);
    let (f, g) = gradient(|v: SVector<DualSVec64<N>, N>| e.eval(v.as_slice()), &x);
    out[..N].copy_from_slice(g.as_slice());
    f
}

fn hess_n<E: Element, const N: usize>(e: &E, local: &[f64], out: &mut [f64]) {
    let x = SVector::<f64, N>::from_column_slice(local);
    let (_, _, h) = hessian(|v: SVector<Dual2SVec64<N>, N>| e.eval(v.as_slice()), &x);
    let mut k = 0;
    for a in 0..N {
        for b in 0..=a {
            out[k] = h[(a, b)];
            k += 1;
        }
    }
}

macro_rules! by_size {
    ($len:expr, $f:ident, $e:expr, $($args:expr),*) => {
        match $len {
            1 => $f::<_, 1>($e, $($args),*),
            2 => $f::<_, 2>($e, $($args),*),
            3 => $f::<_, 3>($e, $($args),*),
            4 => $f::<_, 4>($e, $($args),*),
            5 => $f::<_, 5>($e, $($args),*),
            6 => $f::<_, 6>($e, $($args),*),
            7 => $f::<_, 7>($e, $($args),*),
            8 => $f::<_, 8>($e, $($args),*),
            9 => $f::<_, 9>($e, $($args),*),
            10 => $f::<_, 10>($e, $($args),*),
            11 => $f::<_, 11>($e, $($args),*),
            12 => $f::<_, 12>($e, $($args),*),
            n => unreachable!("element size {n}"),
        }
    };
}

/// Value and local gradient of an element at the global point `x`.
pub fn element_gradient<E: Element>(e: &E, x: &[f64], grad: &mut [f64]) -> f64 {
    let mut buf = [0.0; MAX_ELEMENT_VARS];
    let len = gather(e, x, &mut buf);
    by_size!(len, grad_n, e, &buf[..len], grad)
}

/// Lower triangle (row-major) of the local Hessian of an element.
pub fn element_hessian<E: Element>(e: &E, x: &[f64], out: &mut [f64]) {
    let mut buf = [0.0; MAX_ELEMENT_VARS];
    let len = gather(e, x, &mut buf);
    by_size!(len, hess_n, e, &buf[..len], out)
}

const TRI: usize = MAX_ELEMENT_VARS * (MAX_ELEMENT_VARS + 1) / 2;

impl<E: Element> CompiledModel<E> {
    pub fn model(&self) -> &Model<E> {
        &self.model
    }

    pub fn set_initial_point(&mut self, x0: &[f64]) {
        self.model.set_initial_point(x0);
    }

    /// Values of every constraint body at `x`.
    pub fn constraint_values(&self, x: &[f64]) -> Vec<f64> {
        let mut c = vec![0.0; self.model.rows.len()];
        self.constraints(x, &mut c);
        c
    }

    /// Contribution of each objective element, in insertion order.
    pub fn objective_elements(&self, x: &[f64]) -> Vec<f64> {
        self.model.obj_elements.iter().map(|e| value_of(e, x)).collect()
    }
}

impl<E: Element> NlpProblem for CompiledModel<E> {
    fn num_vars(&self) -> usize {
        self.model.num_vars()
    }

    fn num_cons(&self) -> usize {
        self.model.num_cons()
    }

    fn var_bounds(&self) -> (Vec<f64>, Vec<f64>) {
        (self.model.xl.clone(), self.model.xu.clone())
    }

    fn con_bounds(&self) -> (Vec<f64>, Vec<f64>) {
        (
            self.model.rows.iter().map(|r| r.lo).collect(),
            self.model.rows.iter().map(|r| r.hi).collect(),
        )
    }

    fn initial_point(&self) -> Vec<f64> {
        self.model.x0.clone()
    }

    fn objective(&self, x: &[f64]) -> f64 {
        let m = &self.model;
        let lin: f64 = m.obj_linear.iter().map(|&(i, a)| a * x[i]).sum();
        let nl: f64 = m.obj_elements.iter().map(|e| value_of(e, x)).sum();
        m.obj_constant + lin + nl
    }

    fn gradient(&self, x: &[f64], grad: &mut [f64]) {
        grad.iter_mut().for_each(|g| *g = 0.0);
        let m = &self.model;
        for &(i, a) in &m.obj_linear {
            grad[i] += a;
        }
        let mut local = [0.0; MAX_ELEMENT_VARS];
        for e in &m.obj_elements {
            element_gradient(e, x, &mut local);
            for (k, &i) in e.vars().iter().enumerate() {
                grad[i] += local[k];
            }
        }
    }

    fn constraints(&self, x: &[f64], c: &mut [f64]) {
        for (j, r) in self.model.rows.iter().enumerate() {
            let lin: f64 = r.linear.iter().map(|&(i, a)| a * x[i]).sum();
            let nl: f64 = r.elements.iter().map(|e| value_of(e, x)).sum();
            c[j] = lin + nl;
        }
    }

    fn jacobian_structure(&self) -> Vec<(usize, usize)> {
        self.jac_struct.clone()
    }

    fn jacobian_values(&self, x: &[f64], vals: &mut [f64]) {
        vals.iter_mut().for_each(|v| *v = 0.0);
        let mut local = [0.0; MAX_ELEMENT_VARS];
        for (j, r) in self.model.rows.iter().enumerate() {
            for (k, &(_, a)) in r.linear.iter().enumerate() {
                vals[self.row_linear_slots[j][k]] += a;
            }
            for (q, e) in r.elements.iter().enumerate() {
                element_gradient(e, x, &mut local);
                for (k, &s) in self.row_element_slots[j][q].iter().enumerate() {
                    vals[s] += local[k];
                }
            }
        }
    }

    fn hessian_structure(&self) -> Vec<(usize, usize)> {
        self.hess_struct.clone()
    }

    fn hessian_values(&self, x: &[f64], obj_factor: f64, lambda: &[f64], vals: &mut [f64]) {
        vals.iter_mut().for_each(|v| *v = 0.0);
        let mut local = [0.0; TRI];
        if obj_factor != 0.0 {
            for (e, slots) in self.model.obj_elements.iter().zip(&self.obj_hess_slots) {
                element_hessian(e, x, &mut local);
                for (k, &s) in slots.iter().enumerate() {
                    vals[s] += obj_factor * local[k];
                }
            }
        }
        for (j, r) in self.model.rows.iter().enumerate() {
            if lambda[j] == 0.0 {
                continue;
            }
            for (e, slots) in r.elements.iter().zip(&self.row_hess_slots[j]) {
                element_hessian(e, x, &mut local);
                for (k, &s) in slots.iter().enumerate() {
                    vals[s] += lambda[j] * local[k];
                }
            }
        }
    }
}
