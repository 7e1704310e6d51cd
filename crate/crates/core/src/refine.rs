//! Physicality as polynomial inequalities, a constrained refinement of the
//! closed-form estimate, and export of the full polynomial program.
//!
//! A Hermitian unit-trace `ρ` is PSD iff the coefficients `k_p` of its
//! characteristic polynomial are all non-negative. They follow from the power
//! sums by Newton's identities,
//! `p·k_p = Σ_{f=1..p} (−1)^{f−1} Tr(ρ^f) k_{p−f}` with `k₀ = 1`.

use crate::basis::{OperatorBasis, HERMITIAN_TOL};
use crate::error::{Error, Result, Stage};
use crate::estimator::{build_targets_v1, correct_povm, correct_state, EstimateResult};
use crate::linalg::{self, c, CMat, RMat, RVec};
use crate::measurement::MeasurementDataset;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

/// Largest dimension for which the polynomial program is expanded.
pub const MAX_EXPORT_DIM: usize = 3;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SemialgebraicCert {
    /// `[k₀, k₁, …, k_d]`
    pub k: Vec<f64>,
}

impl SemialgebraicCert {
    /// `k_p ≥ −tol` for `p = 2..d`.
    pub fn is_nonnegative(&self, tol: f64) -> bool {
        self.k.iter().skip(2).all(|&k| k >= -tol)
    }
}

/// Newton recursion on the given power sums `t[f−1] = Tr(ρ^f)`.
fn newton<T>(t: &[T], one: T) -> Vec<T>
where
    T: Clone
        + std::ops::Add<Output = T>
        + std::ops::Sub<Output = T>
        + std::ops::Mul<Output = T>
        + ScaleBy,
{
    let d = t.len();
    let mut k = vec![one];
    for p in 1..=d {
        let mut acc: Option<T> = None;
        for f in 1..=p {
            let term = t[f - 1].clone() * k[p - f].clone();
            acc = Some(match acc {
                None => term,
                Some(a) if f % 2 == 1 => a + term,
                Some(a) => a - term,
            });
        }
        k.push(acc.expect("p ≥ 1").scale_by(1.0 / p as f64));
    }
    k
}

trait ScaleBy {
    fn scale_by(self, s: f64) -> Self;
}

impl ScaleBy for f64 {
    fn scale_by(self, s: f64) -> Self {
        self * s
    }
}

pub fn k_coefficients(rho: &CMat) -> Result<SemialgebraicCert> {
    let dev = linalg::hermiticity_error(rho);
    if dev > HERMITIAN_TOL {
        return Err(Error::NotHermitian(dev));
    }
    let d = rho.nrows();
    let rho = linalg::hermitian_part(rho);
    let mut power = rho.clone();
    let mut t = Vec::with_capacity(d);
    for f in 1..=d {
        if f > 1 {
            power = &power * &rho;
        }
        t.push(linalg::trace(&power).re);
    }
    Ok(SemialgebraicCert { k: newton(&t, 1.0) })
}

/// Whether `h(x)` is PSD, decided by the signs of `k_2..k_d`.
pub fn in_physical_set(x: &RVec, basis: &OperatorBasis, tol: f64) -> bool {
    if x.len() != basis.n_params() || x.iter().any(|v| !v.is_finite()) {
        return false;
    }
    k_coefficients(&basis.state_from_x(x))
        .map(|cert| cert.is_nonnegative(tol))
        .unwrap_or(false)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PovmMembership {
    pub member: bool,
    /// The element is (numerically) zero, which is accepted by convention.
    pub zero_element: bool,
}

/// PSD test of the POVM element with coordinates `(c0, c)` through its trace-normalized form.
pub fn povm_membership(c0: f64, cvec: &RVec, basis: &OperatorBasis, tol: f64) -> PovmMembership {
    if c0 <= tol {
        let zero = c0.abs() <= tol && cvec.norm() <= tol;
        return PovmMembership {
            member: zero,
            zero_element: zero,
        };
    }
    let scale = 1.0 / ((basis.dim() as f64).sqrt() * c0);
    PovmMembership {
        member: in_physical_set(&(cvec * scale), basis, tol),
        zero_element: false,
    }
}

/// Sparse multivariate polynomial with complex coefficients.
#[derive(Debug, Clone, PartialEq)]
pub struct Polynomial {
    nvars: usize,
    terms: BTreeMap<Vec<u32>, Complex64>,
}

impl Polynomial {
    pub fn zero(nvars: usize) -> Self {
        Self {
            nvars,
            terms: BTreeMap::new(),
        }
    }

    pub fn constant(nvars: usize, value: Complex64) -> Self {
        let mut p = Self::zero(nvars);
        p.add_term(vec![0; nvars], value);
        p
    }

    /// `coef · v_i`
    pub fn var(nvars: usize, i: usize, coef: Complex64) -> Self {
        let mut e = vec![0; nvars];
        e[i] = 1;
        let mut p = Self::zero(nvars);
        p.add_term(e, coef);
        p
    }

    pub fn nvars(&self) -> usize {
        self.nvars
    }

    pub fn n_terms(&self) -> usize {
        self.terms.len()
    }

    pub fn terms(&self) -> impl Iterator<Item = (&Vec<u32>, &Complex64)> {
        self.terms.iter()
    }

    pub fn degree(&self) -> u32 {
        self.terms.keys().map(|e| e.iter().sum()).max().unwrap_or(0)
    }

    pub fn add_term(&mut self, exps: Vec<u32>, coef: Complex64) {
        assert_eq!(exps.len(), self.nvars, "exponent vector length");
        if coef == Complex64::new(0.0, 0.0) {
            return;
        }
        use std::collections::btree_map::Entry;
        match self.terms.entry(exps) {
            Entry::Vacant(v) => {
                v.insert(coef);
            }
            Entry::Occupied(mut o) => {
                *o.get_mut() += coef;
                if *o.get() == Complex64::new(0.0, 0.0) {
                    o.remove();
                }
            }
        }
    }

    pub fn scale(&self, s: Complex64) -> Self {
        let mut out = Self::zero(self.nvars);
        for (e, v) in &self.terms {
            out.add_term(e.clone(), v * s);
        }
        out
    }

    /// Drops terms with `|coef| ≤ tol` (exact zeros always go).
    pub fn pruned(mut self, tol: f64) -> Self {
        self.terms.retain(|_, v| v.norm() > tol);
        self
    }

    pub fn real_part(&self) -> Self {
        let mut out = Self::zero(self.nvars);
        for (e, v) in &self.terms {
            out.add_term(e.clone(), c(v.re, 0.0));
        }
        out
    }

    pub fn max_imaginary(&self) -> f64 {
        self.terms.values().map(|v| v.im.abs()).fold(0.0, f64::max)
    }

    pub fn eval(&self, point: &[f64]) -> Complex64 {
        assert_eq!(point.len(), self.nvars, "evaluation point length");
        self.terms
            .iter()
            .map(|(e, v)| {
                let m: f64 = e
                    .iter()
                    .zip(point)
                    .filter(|(&k, _)| k > 0)
                    .map(|(&k, &x)| x.powi(k as i32))
                    .product();
                v * m
            })
            .sum()
    }

    pub fn eval_real(&self, point: &[f64]) -> f64 {
        self.eval(point).re
    }
}

impl std::ops::Add for Polynomial {
    type Output = Polynomial;
    fn add(mut self, rhs: Polynomial) -> Polynomial {
        for (e, v) in rhs.terms {
            self.add_term(e, v);
        }
        self
    }
}

impl std::ops::Sub for Polynomial {
    type Output = Polynomial;
    fn sub(mut self, rhs: Polynomial) -> Polynomial {
        for (e, v) in rhs.terms {
            self.add_term(e, -v);
        }
        self
    }
}

impl std::ops::Mul for Polynomial {
    type Output = Polynomial;
    fn mul(self, rhs: Polynomial) -> Polynomial {
        &self * &rhs
    }
}

impl std::ops::Mul<&Polynomial> for &Polynomial {
    type Output = Polynomial;
    fn mul(self, rhs: &Polynomial) -> Polynomial {
        let mut out = Polynomial::zero(self.nvars);
        for (ea, va) in &self.terms {
            for (eb, vb) in &rhs.terms {
                let e = ea.iter().zip(eb).map(|(a, b)| a + b).collect();
                out.add_term(e, va * vb);
            }
        }
        out
    }
}

impl ScaleBy for Polynomial {
    fn scale_by(self, s: f64) -> Self {
        self.scale(c(s, 0.0))
    }
}

/// Square matrix of polynomials, row-major.
type PolyMatrix = Vec<Vec<Polynomial>>;

fn poly_matmul(a: &PolyMatrix, b: &PolyMatrix, nvars: usize) -> PolyMatrix {
    let d = a.len();
    (0..d)
        .map(|i| {
            (0..d)
                .map(|j| {
                    let mut acc = Polynomial::zero(nvars);
                    for k in 0..d {
                        acc = acc + &a[i][k] * &b[k][j];
                    }
                    acc
                })
                .collect()
        })
        .collect()
}

/// `[k₀, …, k_d]` of a symbolic Hermitian matrix, real parts only.
fn k_polynomials(m: &PolyMatrix, nvars: usize) -> Vec<Polynomial> {
    let d = m.len();
    let mut power = m.clone();
    let mut t = Vec::with_capacity(d);
    for f in 1..=d {
        if f > 1 {
            power = poly_matmul(&power, m, nvars);
        }
        let mut tr = Polynomial::zero(nvars);
        for (i, row) in power.iter().enumerate() {
            tr = tr + row[i].clone();
        }
        t.push(tr);
    }
    newton(&t, Polynomial::constant(nvars, c(1.0, 0.0)))
        .into_iter()
        .map(|p| p.real_part().pruned(1e-14))
        .collect()
}

/// `c0·Ω₀ + Σ_k scale·v_{offset+k}·Ω_k` as a symbolic matrix.
fn symbolic_coords_matrix(
    basis: &OperatorBasis,
    c0: f64,
    offset: usize,
    scale: f64,
    nvars: usize,
) -> PolyMatrix {
    let d = basis.dim();
    (0..d)
        .map(|a| {
            (0..d)
                .map(|b| {
                    let mut p = Polynomial::constant(nvars, basis.omega(0)[(a, b)] * c0);
                    for k in 0..basis.n_params() {
                        let w = basis.omega(k + 1)[(a, b)];
                        if w.norm() > 0.0 {
                            p = p + Polynomial::var(nvars, offset + k, w * scale);
                        }
                    }
                    p
                })
                .collect()
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SosMode {
    General,
    Pure,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Constraint {
    pub label: String,
    pub poly: Polynomial,
}

/// Polynomial program: minimize `objective` subject to `equalities = 0` and
/// `inequalities ≥ 0`, posed as maximizing `γ` with `objective − γ` SOS.
#[derive(Debug, Clone, PartialEq)]
pub struct SosProblem {
    pub mode: SosMode,
    pub dim: usize,
    pub m: usize,
    pub vars: Vec<String>,
    pub objective: Polynomial,
    pub equalities: Vec<Constraint>,
    pub inequalities: Vec<Constraint>,
}

const HEADER: &str = "\
# Polynomial program for joint state and detector estimation.
# Convention: maximize gamma subject to OBJECTIVE - gamma being a sum of squares
# on the set {EQ = 0, INEQ >= 0}; the optimal gamma lower-bounds the objective.
# Each polynomial is 'POLY <label> <nterms>' followed by lines '<coeff> <exponents...>'
# with one exponent per variable in the order listed on the 'vars' line.";

fn fmt_coef(v: f64) -> String {
    format!("{v:.16e}")
}

impl SosProblem {
    pub fn nvars(&self) -> usize {
        self.vars.len()
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "{HEADER}");
        let mode = match self.mode {
            SosMode::General => "general",
            SosMode::Pure => "pure",
        };
        let _ = writeln!(s, "mode {mode}");
        let _ = writeln!(s, "dim {}", self.dim);
        let _ = writeln!(s, "M {}", self.m);
        let _ = writeln!(s, "vars {} {}", self.vars.len(), self.vars.join(" "));
        let _ = writeln!(s, "OBJECTIVE");
        write_poly(&mut s, "objective", &self.objective);
        let _ = writeln!(s, "EQ {}", self.equalities.len());
        for cns in &self.equalities {
            write_poly(&mut s, &cns.label, &cns.poly);
        }
        let _ = writeln!(s, "INEQ {}", self.inequalities.len());
        for cns in &self.inequalities {
            write_poly(&mut s, &cns.label, &cns.poly);
        }
        s
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        crate::io::write_text(path, &self.to_text())
    }

    pub fn inequality(&self, label: &str) -> Option<&Constraint> {
        self.inequalities.iter().find(|cns| cns.label == label)
    }
}

fn write_poly(s: &mut String, label: &str, p: &Polynomial) {
    let _ = writeln!(s, "POLY {label} {}", p.n_terms());
    for (e, v) in p.terms() {
        let exps: Vec<String> = e.iter().map(|k| k.to_string()).collect();
        let _ = writeln!(s, "{} {}", fmt_coef(v.re), exps.join(" "));
    }
}

struct Cursor<'a> {
    lines: Vec<(usize, &'a str)>,
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn next(&mut self, what: &str) -> Result<(usize, &'a str)> {
        let item = self.lines.get(self.pos).copied().ok_or_else(|| {
            Error::Validation(format!("unexpected end of SOS file, expected {what}"))
        })?;
        self.pos += 1;
        Ok(item)
    }

    fn header_num(&mut self, key: &str) -> Result<usize> {
        let (ln, l) = self.next(key)?;
        l.strip_prefix(key)
            .and_then(|r| r.trim().parse().ok())
            .ok_or_else(|| bad_line(ln, &format!("expected '{key} <n>'")))
    }

    fn section(&mut self, name: &str) -> Result<usize> {
        let (ln, l) = self.next(name)?;
        let mut t = l.split_whitespace();
        if t.next() != Some(name) {
            return Err(bad_line(ln, &format!("expected section {name}")));
        }
        Ok(t.next().and_then(|v| v.parse().ok()).unwrap_or(0))
    }

    fn poly(&mut self, nv: usize, expected_label: Option<&str>) -> Result<Constraint> {
        let (ln, l) = self.next("POLY")?;
        let parts: Vec<&str> = l.split_whitespace().collect();
        if parts.len() != 3 || parts[0] != "POLY" {
            return Err(bad_line(ln, "expected 'POLY <label> <nterms>'"));
        }
        if let Some(lbl) = expected_label {
            if parts[1] != lbl {
                return Err(bad_line(ln, &format!("expected polynomial '{lbl}'")));
            }
        }
        let nterms: usize = parts[2]
            .parse()
            .map_err(|_| bad_line(ln, "bad term count"))?;
        let mut poly = Polynomial::zero(nv);
        for _ in 0..nterms {
            let (ln, l) = self.next("term")?;
            let mut toks = l.split_whitespace();
            let coef: f64 = toks
                .next()
                .and_then(|t| t.parse().ok())
                .ok_or_else(|| bad_line(ln, "bad coefficient"))?;
            let exps: Vec<u32> = toks
                .map(|t| t.parse().map_err(|_| bad_line(ln, "bad exponent")))
                .collect::<Result<_>>()?;
            if exps.len() != nv {
                return Err(bad_line(ln, "exponent vector has the wrong length"));
            }
            poly.add_term(exps, c(coef, 0.0));
        }
        Ok(Constraint {
            label: parts[1].to_string(),
            poly,
        })
    }
}

fn bad_line(line: usize, msg: &str) -> Error {
    Error::Validation(format!("SOS file line {line}: {msg}"))
}

pub fn parse_sos_problem(text: &str) -> Result<SosProblem> {
    let mut cur = Cursor {
        lines: text
            .lines()
            .enumerate()
            .map(|(i, l)| (i + 1, l.trim()))
            .filter(|(_, l)| !l.is_empty() && !l.starts_with('#'))
            .collect(),
        pos: 0,
    };
    let (ln, l) = cur.next("mode")?;
    let mode = match l.strip_prefix("mode ") {
        Some("general") => SosMode::General,
        Some("pure") => SosMode::Pure,
        _ => return Err(bad_line(ln, "expected 'mode general|pure'")),
    };
    let dim = cur.header_num("dim")?;
    let m = cur.header_num("M")?;
    let (ln, l) = cur.next("vars")?;
    let mut it = l.split_whitespace();
    if it.next() != Some("vars") {
        return Err(bad_line(ln, "expected 'vars <n> <names...>'"));
    }
    let nv: usize = it
        .next()
        .and_then(|v| v.parse().ok())
        .ok_or_else(|| bad_line(ln, "bad variable count"))?;
    let vars: Vec<String> = it.map(str::to_string).collect();
    if vars.len() != nv {
        return Err(bad_line(ln, "variable count does not match the names"));
    }
    cur.section("OBJECTIVE")?;
    let objective = cur.poly(nv, Some("objective"))?.poly;
    let neq = cur.section("EQ")?;
    let equalities = (0..neq)
        .map(|_| cur.poly(nv, None))
        .collect::<Result<Vec<_>>>()?;
    let nineq = cur.section("INEQ")?;
    let inequalities = (0..nineq)
        .map(|_| cur.poly(nv, None))
        .collect::<Result<Vec<_>>>()?;
    Ok(SosProblem {
        mode,
        dim,
        m,
        vars,
        objective,
        equalities,
        inequalities,
    })
}

fn check_export_dim(d: usize) -> Result<()> {
    if d > MAX_EXPORT_DIM {
        return Err(Error::Validation(format!(
            "polynomial expansion is limited to d ≤ {MAX_EXPORT_DIM} (got d = {d})"
        )));
    }
    Ok(())
}

/// Variable vector `(x₀, C₁, …, C_M)` used by the general-mode program.
pub fn stack_variables(x: &RVec, cs: &[RVec]) -> Vec<f64> {
    x.iter()
        .chain(cs.iter().flat_map(|cj| cj.iter()))
        .cloned()
        .collect()
}

/// `Σ_j ‖Ŷ_j − B(x ⊗ C_j)‖²`
pub fn objective_value(targets: &RMat, b: &RMat, x: &RVec, cs: &[RVec]) -> f64 {
    cs.iter()
        .enumerate()
        .map(|(j, cj)| (targets.column(j) - b * linalg::kron_vec(x, cj)).norm_squared())
        .sum()
}

pub fn build_sos_problem(
    ds: &MeasurementDataset,
    b: &RMat,
    basis: &OperatorBasis,
) -> Result<SosProblem> {
    let d = basis.dim();
    check_export_dim(d)?;
    let n = basis.n_params();
    if b.ncols() != n * n || b.nrows() != ds.n_processes() {
        return Err(Error::Shape(format!(
            "regression matrix is {}x{}, expected {}x{}",
            b.nrows(),
            b.ncols(),
            ds.n_processes(),
            n * n
        )));
    }
    let targets = build_targets_v1(ds, basis)?;
    let m = targets.ncols();
    let nv = n * (m + 1);
    let cvar = |j: usize, k: usize| n + j * n + k;
    let mut vars: Vec<String> = (1..=n).map(|i| format!("x{i}")).collect();
    for j in 1..=m {
        vars.extend((1..=n).map(|k| format!("C{j}_{k}")));
    }

    let gram = b.transpose() * b;
    let mut objective = Polynomial::zero(nv);
    for j in 0..m {
        let y = targets.column(j);
        let r = b.transpose() * y;
        objective.add_term(vec![0; nv], c(y.norm_squared(), 0.0));
        for p in 0..n * n {
            let (i, k) = (p / n, p % n);
            let mut e = vec![0u32; nv];
            e[i] += 1;
            e[cvar(j, k)] += 1;
            objective.add_term(e, c(-2.0 * r[p], 0.0));
            for q in 0..n * n {
                let g = gram[(p, q)];
                if g == 0.0 {
                    continue;
                }
                let (i2, k2) = (q / n, q % n);
                let mut e = vec![0u32; nv];
                e[i] += 1;
                e[i2] += 1;
                e[cvar(j, k)] += 1;
                e[cvar(j, k2)] += 1;
                objective.add_term(e, c(g, 0.0));
            }
        }
    }
    let objective = objective.pruned(0.0);

    let mut equalities = Vec::new();
    for k in 0..n {
        let mut p = Polynomial::zero(nv);
        for j in 0..m {
            p = p + Polynomial::var(nv, cvar(j, k), c(1.0, 0.0));
        }
        equalities.push(Constraint {
            label: format!("completeness_{}", k + 1),
            poly: p,
        });
    }
    equalities.push(Constraint {
        label: format!("anchor_x{}", ds.anchor + 1),
        poly: Polynomial::var(nv, ds.anchor, c(1.0, 0.0))
            - Polynomial::constant(nv, c(ds.x01_bar, 0.0)),
    });

    let mut inequalities = Vec::new();
    let state = symbolic_coords_matrix(basis, 1.0 / (d as f64).sqrt(), 0, 1.0, nv);
    for (p, k) in k_polynomials(&state, nv).into_iter().enumerate().skip(2) {
        inequalities.push(Constraint {
            label: format!("state_k{p}"),
            poly: k,
        });
    }
    let sqrt_d = (d as f64).sqrt();
    for (j, &c0) in ds.c_j0_hat.iter().enumerate() {
        if c0 <= 0.0 {
            return Err(Error::Degenerate(format!(
                "detector trace estimate for outcome {} is {c0}; cannot normalize",
                j + 1
            )));
        }
        let mat = symbolic_coords_matrix(basis, 1.0 / sqrt_d, cvar(j, 0), 1.0 / (sqrt_d * c0), nv);
        for (p, k) in k_polynomials(&mat, nv).into_iter().enumerate().skip(2) {
            inequalities.push(Constraint {
                label: format!("povm{}_k{p}", j + 1),
                poly: k,
            });
        }
    }
    Ok(SosProblem {
        mode: SosMode::General,
        dim: d,
        m,
        vars,
        objective,
        equalities,
        inequalities,
    })
}

/// Layout of the pure-state program: `Re ψ`, `Im ψ`, then a real Hermitian
/// parameterization of each `P_j` (diagonal, then `Re`/`Im` of the upper triangle).
pub struct PureLayout {
    pub d: usize,
    pub m: usize,
}

impl PureLayout {
    pub fn nvars(&self) -> usize {
        2 * self.d + self.m * self.d * self.d
    }

    fn p_offset(&self, j: usize) -> usize {
        2 * self.d + j * self.d * self.d
    }

    fn pairs(&self) -> Vec<(usize, usize)> {
        let d = self.d;
        (0..d)
            .flat_map(|a| (a + 1..d).map(move |b| (a, b)))
            .collect()
    }

    pub fn names(&self) -> Vec<String> {
        let mut v: Vec<String> = (1..=self.d).map(|r| format!("psi_re{r}")).collect();
        v.extend((1..=self.d).map(|r| format!("psi_im{r}")));
        for j in 1..=self.m {
            v.extend((1..=self.d).map(|a| format!("P{j}_d{a}")));
            for (a, b) in self.pairs() {
                v.push(format!("P{j}_re{}{}", a + 1, b + 1));
                v.push(format!("P{j}_im{}{}", a + 1, b + 1));
            }
        }
        v
    }

    /// Variable values for a given state vector and detector.
    pub fn variables(&self, psi: &crate::linalg::CVec, povm: &[CMat]) -> Vec<f64> {
        let mut v: Vec<f64> = psi.iter().map(|z| z.re).collect();
        v.extend(psi.iter().map(|z| z.im));
        for p in povm {
            v.extend((0..self.d).map(|a| p[(a, a)].re));
            for (a, b) in self.pairs() {
                v.push(p[(a, b)].re);
                v.push(p[(a, b)].im);
            }
        }
        v
    }

    fn povm_matrix(&self, j: usize) -> PolyMatrix {
        let nv = self.nvars();
        let d = self.d;
        let off = self.p_offset(j);
        let mut m: PolyMatrix = vec![vec![Polynomial::zero(nv); d]; d];
        for a in 0..d {
            m[a][a] = Polynomial::var(nv, off + a, c(1.0, 0.0));
        }
        for (idx, (a, b)) in self.pairs().into_iter().enumerate() {
            let re = off + d + 2 * idx;
            m[a][b] =
                Polynomial::var(nv, re, c(1.0, 0.0)) + Polynomial::var(nv, re + 1, c(0.0, 1.0));
            m[b][a] =
                Polynomial::var(nv, re, c(1.0, 0.0)) + Polynomial::var(nv, re + 1, c(0.0, -1.0));
        }
        m
    }

    fn psi(&self, r: usize) -> Polynomial {
        let nv = self.nvars();
        Polynomial::var(nv, r, c(1.0, 0.0)) + Polynomial::var(nv, self.d + r, c(0.0, 1.0))
    }

    fn psi_conj(&self, r: usize) -> Polynomial {
        let nv = self.nvars();
        Polynomial::var(nv, r, c(1.0, 0.0)) + Polynomial::var(nv, self.d + r, c(0.0, -1.0))
    }
}

/// Pure-state program on raw frequencies `ŷ` with the natural-basis matrix `𝓑`.
pub fn build_sos_problem_pure(
    ds: &MeasurementDataset,
    b_natural: &CMat,
    d: usize,
) -> Result<SosProblem> {
    check_export_dim(d)?;
    ds.validate()?;
    let d2 = d * d;
    if b_natural.ncols() != d2 * d2 || b_natural.nrows() != ds.n_processes() {
        return Err(Error::Shape(
            "natural regression matrix does not match the dataset".into(),
        ));
    }
    let m = ds.n_outcomes();
    let lay = PureLayout { d, m };
    let nv = lay.nvars();

    // vec(ψψ†), column-major
    let vec_rho: Vec<Polynomial> = (0..d2)
        .map(|idx| {
            let (r, s) = (idx % d, idx / d);
            &lay.psi(r) * &lay.psi_conj(s)
        })
        .collect();
    // vec(P_jᵀ)[r + d·s] = P_j[s][r]
    let vec_pt: Vec<Vec<Polynomial>> = (0..m)
        .map(|j| {
            let pm = lay.povm_matrix(j);
            (0..d2).map(|idx| pm[idx / d][idx % d].clone()).collect()
        })
        .collect();

    let mut objective = Polynomial::zero(nv);
    for a in 0..ds.n_processes() {
        let u: Vec<Polynomial> = (0..d2)
            .map(|row| {
                let mut acc = Polynomial::zero(nv);
                for (col, vr) in vec_rho.iter().enumerate() {
                    let w = b_natural[(a, row + d2 * col)];
                    if w.norm() > 0.0 {
                        acc = acc + vr.scale(w);
                    }
                }
                acc
            })
            .collect();
        for j in 0..m {
            let mut model = Polynomial::zero(nv);
            for (mrow, um) in u.iter().enumerate() {
                model = model + &vec_pt[j][mrow] * um;
            }
            let resid = Polynomial::constant(nv, c(ds.y_hat[a][j], 0.0)) - model.real_part();
            objective = objective + &resid * &resid;
        }
    }
    let objective = objective.real_part().pruned(0.0);

    let mut equalities = Vec::new();
    let mut norm = Polynomial::constant(nv, c(-1.0, 0.0));
    for r in 0..d {
        norm = norm + &lay.psi(r) * &lay.psi_conj(r);
    }
    equalities.push(Constraint {
        label: "state_norm".into(),
        poly: norm.real_part().pruned(1e-15),
    });
    for a in 0..d {
        let mut p = Polynomial::constant(nv, c(-1.0, 0.0));
        for j in 0..m {
            p = p + Polynomial::var(nv, lay.p_offset(j) + a, c(1.0, 0.0));
        }
        equalities.push(Constraint {
            label: format!("completeness_d{}", a + 1),
            poly: p,
        });
    }
    for (idx, (a, b)) in lay.pairs().into_iter().enumerate() {
        for (part, shift) in [("re", 0), ("im", 1)] {
            let mut p = Polynomial::zero(nv);
            for j in 0..m {
                p = p + Polynomial::var(nv, lay.p_offset(j) + d + 2 * idx + shift, c(1.0, 0.0));
            }
            equalities.push(Constraint {
                label: format!("completeness_{part}{}{}", a + 1, b + 1),
                poly: p,
            });
        }
    }

    let mut inequalities = Vec::new();
    for j in 0..m {
        for (p, k) in k_polynomials(&lay.povm_matrix(j), nv)
            .into_iter()
            .enumerate()
            .skip(1)
        {
            inequalities.push(Constraint {
                label: format!("povm{}_k{p}", j + 1),
                poly: k,
            });
        }
    }
    Ok(SosProblem {
        mode: SosMode::Pure,
        dim: d,
        m,
        vars: lay.names(),
        objective,
        equalities,
        inequalities,
    })
}

pub fn export_sos_problem(
    ds: &MeasurementDataset,
    b: &RMat,
    basis: &OperatorBasis,
    path: &Path,
) -> Result<SosProblem> {
    let problem = build_sos_problem(ds, b, basis)?;
    problem.write(path)?;
    Ok(problem)
}

pub fn export_sos_problem_pure(
    ds: &MeasurementDataset,
    b_natural: &CMat,
    d: usize,
    path: &Path,
) -> Result<SosProblem> {
    let problem = build_sos_problem_pure(ds, b_natural, d)?;
    problem.write(path)?;
    Ok(problem)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RefineOptions {
    pub max_iters: usize,
    /// Stop once the relative objective improvement falls below this.
    pub rel_tol: f64,
}

impl Default for RefineOptions {
    fn default() -> Self {
        Self {
            max_iters: 200,
            rel_tol: 1e-10,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RefineOutcome {
    pub estimate: EstimateResult,
    /// Objective at the initial point followed by every accepted iterate.
    pub history: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
    /// Objective of the returned (fully corrected) estimate.
    pub final_objective: f64,
    /// False when the corrected iterate was worse than the initial estimate,
    /// which is then returned unchanged.
    pub improved: bool,
}

fn project_state_coords(x: &RVec, basis: &OperatorBasis) -> Result<RVec> {
    let rho = correct_state(&basis.state_from_x(x))?;
    Ok(basis
        .coordinates_unchecked(rho.matrix())
        .rows(1, basis.n_params())
        .into_owned())
}

fn project_povm_coords(cj: &RVec, c0: f64, basis: &OperatorBasis) -> Result<RVec> {
    if c0 <= 0.0 {
        return Ok(RVec::zeros(cj.len()));
    }
    let norm = (basis.dim() as f64).sqrt() * c0;
    let projected = project_state_coords(&(cj / norm), basis)?;
    Ok(projected * norm)
}

fn pinv(a: &RMat) -> RMat {
    linalg::pinv(a, linalg::RANK_RTOL).unwrap_or_else(|_| RMat::zeros(a.ncols(), a.nrows()))
}

/// `B(x ⊗ I)`: column `k` is `Σ_i x_i B[:, i·n + k]`.
fn design_for_c(b: &RMat, x: &RVec, n: usize) -> RMat {
    RMat::from_fn(b.nrows(), n, |a, k| {
        (0..n).map(|i| x[i] * b[(a, i * n + k)]).sum()
    })
}

/// `B(I ⊗ C)`: column `i` is `Σ_k C_k B[:, i·n + k]`.
fn design_for_x(b: &RMat, cj: &RVec, n: usize) -> RMat {
    RMat::from_fn(b.nrows(), n, |a, i| {
        (0..n).map(|k| cj[k] * b[(a, i * n + k)]).sum()
    })
}

fn c_step(
    b: &RMat,
    targets: &RMat,
    x: &RVec,
    cs: &[RVec],
    basis: &OperatorBasis,
    c0: &[f64],
) -> Result<Vec<RVec>> {
    let n = basis.n_params();
    let ax = pinv(&design_for_c(b, x, n));
    let free: Vec<RVec> = (0..cs.len()).map(|j| &ax * targets.column(j)).collect();
    let mut mean = RVec::zeros(n);
    for cj in &free {
        mean += cj;
    }
    mean /= cs.len() as f64;
    free.iter()
        .zip(c0)
        .map(|(cj, &c0)| project_povm_coords(&(cj - &mean), c0, basis))
        .collect()
}

fn x_step(b: &RMat, targets: &RMat, cs: &[RVec], basis: &OperatorBasis) -> Result<RVec> {
    let n = basis.n_params();
    let l = b.nrows();
    let mut a = RMat::zeros(l * cs.len(), n);
    let mut y = RVec::zeros(l * cs.len());
    for (j, cj) in cs.iter().enumerate() {
        a.rows_mut(j * l, l).copy_from(&design_for_x(b, cj, n));
        y.rows_mut(j * l, l).copy_from(&targets.column(j));
    }
    project_state_coords(&(pinv(&a) * y), basis)
}

/// Block-coordinate descent on `Σ_j ‖Ŷ_j − B(x⊗C_j)‖²` with physicality projections,
/// started from a closed-form estimate. Only non-increasing steps are accepted.
pub fn refine_alternating(
    ds: &MeasurementDataset,
    b: &RMat,
    basis: &OperatorBasis,
    init: &EstimateResult,
    opts: &RefineOptions,
) -> Result<RefineOutcome> {
    let at = Error::at(Stage::Refinement);
    let n = basis.n_params();
    if b.ncols() != n * n {
        return Err(at(Error::DimensionMismatch {
            expected: n * n,
            got: b.ncols(),
        }));
    }
    if ds.anchor >= n {
        return Err(at(Error::Validation(format!(
            "anchor index {} out of range",
            ds.anchor
        ))));
    }
    let targets = build_targets_v1(ds, basis).map_err(Error::at(Stage::Refinement))?;
    let c0 = &ds.c_j0_hat;
    let coords = |m: &CMat| basis.coordinates_unchecked(m).rows(1, n).into_owned();
    let mut x = coords(init.rho_hat.matrix());
    let mut cs: Vec<RVec> = init.povm_hat.elements().iter().map(coords).collect();
    if cs.len() != targets.ncols() {
        return Err(at(Error::DimensionMismatch {
            expected: targets.ncols(),
            got: cs.len(),
        }));
    }
    let f_init = objective_value(&targets, b, &x, &cs);
    if !f_init.is_finite() {
        return Err(at(Error::Numerical(
            "objective is not finite at the initial point".into(),
        )));
    }
    let mut f = f_init;
    let mut history = vec![f];
    let mut iterations = 0;
    let mut converged = false;
    while iterations < opts.max_iters {
        if f <= f64::MIN_POSITIVE {
            converged = true;
            break;
        }
        iterations += 1;
        let f_start = f;
        let new_cs =
            c_step(b, &targets, &x, &cs, basis, c0).map_err(Error::at(Stage::Refinement))?;
        let f_c = objective_value(&targets, b, &x, &new_cs);
        if !f_c.is_finite() {
            return Err(at(Error::Numerical("objective became non-finite".into())));
        }
        if f_c <= f {
            cs = new_cs;
            f = f_c;
        }
        let new_x = x_step(b, &targets, &cs, basis).map_err(Error::at(Stage::Refinement))?;
        let f_x = objective_value(&targets, b, &new_x, &cs);
        if !f_x.is_finite() {
            return Err(at(Error::Numerical("objective became non-finite".into())));
        }
        if f_x <= f {
            x = new_x;
            f = f_x;
        }
        if f < f_start {
            history.push(f);
        }
        if (f_start - f) <= opts.rel_tol * f_start {
            converged = true;
            break;
        }
    }

    let rho_bar = basis.state_from_x(&x);
    let povm_bar: Vec<CMat> = cs
        .iter()
        .zip(c0)
        .map(|(cj, &c0)| basis.matrix_from_coordinates(c0, cj))
        .collect();
    let rho_hat = correct_state(&rho_bar).map_err(Error::at(Stage::Refinement))?;
    let corr = correct_povm(&povm_bar).map_err(Error::at(Stage::Refinement))?;
    let fx = coords(rho_hat.matrix());
    let fcs: Vec<RVec> = corr.povm.elements().iter().map(coords).collect();
    let f_final = objective_value(&targets, b, &fx, &fcs);

    if !(f_final <= f_init) {
        return Ok(RefineOutcome {
            estimate: init.clone(),
            history,
            iterations,
            converged,
            final_objective: f_init,
            improved: false,
        });
    }
    let mut diagnostics = init.diagnostics.clone();
    diagnostics.state_correction_distance = (rho_hat.matrix() - &rho_bar).norm();
    diagnostics.povm_correction_distance = corr
        .povm
        .elements()
        .iter()
        .zip(&povm_bar)
        .map(|(a, b)| (a - b).norm())
        .sum();
    diagnostics.povm_epsilon = corr.epsilon;
    Ok(RefineOutcome {
        estimate: EstimateResult {
            rho_hat,
            povm_hat: corr.povm,
            rho_bar,
            povm_bar,
            diagnostics,
        },
        history,
        iterations,
        converged,
        final_objective: f_final,
        improved: true,
    })
}
