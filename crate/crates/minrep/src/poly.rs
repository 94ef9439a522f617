//! Sparse multivariate polynomials over the Gaussian rationals, rational
//! functions with a power of the quadratic form in the denominator, and
//! exact linear solving.
//!
//! Provides:
//! - [`Monomial`], [`MultiPoly`]: the universal carrier, canonical graded-lex form
//! - calculus: [`MultiPoly::partial_derivative`], [`MultiPoly::laplacian`],
//!   [`MultiPoly::euler`], [`MultiPoly::substitute`]
//! - [`MultiPoly::exact_divide`] for the only cancellation the library needs
//! - [`DeltaRationalFn`]: numerator / Delta(z)^k with calculus and the
//!   inversion substitution z -> -z/Delta(z)
//! - [`linear_solve`], [`kernel_basis`], [`SpanSolver`]: exact Gaussian
//!   elimination (no-division forward pass, exact back substitution)

use crate::scalar::{GaussianRational, ScalarError};
use num_traits::Zero;
use std::collections::BTreeMap;
use std::fmt;

/// Exponent vector; total degree is the sum of entries.
///
/// Ordered graded-lexicographically: total degree first, then lexicographic.
#[derive(Clone, PartialEq, Eq, Hash, Debug)]
pub struct Monomial(pub Vec<u16>);

impl Monomial {
    pub fn constant(nvars: usize) -> Self {
        Monomial(vec![0; nvars])
    }

    pub fn var(nvars: usize, idx: usize) -> Self {
        let mut e = vec![0u16; nvars];
        e[idx] = 1;
        Monomial(e)
    }

    pub fn total_degree(&self) -> u32 {
        self.0.iter().map(|&e| e as u32).sum()
    }

    pub fn mul(&self, other: &Monomial) -> Monomial {
        Monomial(
            self.0
                .iter()
                .zip(&other.0)
                .map(|(a, b)| a + b)
                .collect(),
        )
    }

    /// Componentwise quotient, or None when some exponent would go negative.
    pub fn checked_div(&self, other: &Monomial) -> Option<Monomial> {
        self.0
            .iter()
            .zip(&other.0)
            .map(|(a, b)| a.checked_sub(*b))
            .collect::<Option<Vec<_>>>()
            .map(Monomial)
    }
}

impl PartialOrd for Monomial {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Monomial {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        self.total_degree()
            .cmp(&other.total_degree())
            .then_with(|| self.0.cmp(&other.0))
    }
}

/// Errors from polynomial-level operations.
#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum PolyError {
    #[error("variable count mismatch: {0} vs {1}")]
    NvarsMismatch(usize, usize),
    #[error("variable index {0} out of range for {1} variables")]
    IndexOutOfRange(usize, usize),
    #[error("substitution expects {0} images, got {1}")]
    ArityMismatch(usize, usize),
    #[error("polynomial is not homogeneous")]
    NotHomogeneous,
    #[error("exact division failed")]
    NotDivisible,
    #[error("denominator power did not clear; remainder has Delta-power {0}")]
    ResidualDenominator(usize),
    #[error("scalar error: {0}")]
    Scalar(#[from] ScalarError),
    #[error("parse error: {0}")]
    Parse(String),
}

/// Sparse multivariate polynomial over [`GaussianRational`].
///
/// Canonical form: no zero coefficients are stored, terms are keyed by
/// graded-lex monomial order, so equality is plain term-map equality.
#[derive(Clone, PartialEq, Eq)]
pub struct MultiPoly {
    pub nvars: usize,
    pub terms: BTreeMap<Monomial, GaussianRational>,
}

impl MultiPoly {
    pub fn zero(nvars: usize) -> Self {
        MultiPoly {
            nvars,
            terms: BTreeMap::new(),
        }
    }

    pub fn constant(nvars: usize, c: GaussianRational) -> Self {
        let mut p = MultiPoly::zero(nvars);
        if !c.is_zero() {
            p.terms.insert(Monomial::constant(nvars), c);
        }
        p
    }

    pub fn one(nvars: usize) -> Self {
        MultiPoly::constant(nvars, GaussianRational::one())
    }

    pub fn variable(nvars: usize, idx: usize) -> Self {
        let mut p = MultiPoly::zero(nvars);
        p.terms.insert(Monomial::var(nvars, idx), GaussianRational::one());
        p
    }

    pub fn monomial(nvars: usize, m: Monomial, c: GaussianRational) -> Self {
        let mut p = MultiPoly::zero(nvars);
        if !c.is_zero() {
            assert_eq!(m.0.len(), nvars);
            p.terms.insert(m, c);
        }
        p
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    /// Total degree; zero polynomial reports 0.
    pub fn degree(&self) -> u32 {
        self.terms
            .keys()
            .map(|m| m.total_degree())
            .max()
            .unwrap_or(0)
    }

    pub fn is_homogeneous(&self) -> bool {
        let mut degs = self.terms.keys().map(|m| m.total_degree());
        match degs.next() {
            None => true,
            Some(d) => degs.all(|e| e == d),
        }
    }

    fn insert_term(&mut self, m: Monomial, c: GaussianRational) {
        if c.is_zero() {
            return;
        }
        match self.terms.entry(m) {
            std::collections::btree_map::Entry::Vacant(v) => {
                v.insert(c);
            }
            std::collections::btree_map::Entry::Occupied(mut o) => {
                let s = o.get() + &c;
                if s.is_zero() {
                    o.remove();
                } else {
                    *o.get_mut() = s;
                }
            }
        }
    }

    pub fn add(&self, rhs: &MultiPoly) -> Result<MultiPoly, PolyError> {
        self.check_nvars(rhs)?;
        let mut out = self.clone();
        for (m, c) in &rhs.terms {
            out.insert_term(m.clone(), c.clone());
        }
        Ok(out)
    }

    pub fn sub(&self, rhs: &MultiPoly) -> Result<MultiPoly, PolyError> {
        self.check_nvars(rhs)?;
        let mut out = self.clone();
        for (m, c) in &rhs.terms {
            out.insert_term(m.clone(), -c);
        }
        Ok(out)
    }

    pub fn neg(&self) -> MultiPoly {
        MultiPoly {
            nvars: self.nvars,
            terms: self.terms.iter().map(|(m, c)| (m.clone(), -c)).collect(),
        }
    }

    pub fn scale(&self, c: &GaussianRational) -> MultiPoly {
        if c.is_zero() {
            return MultiPoly::zero(self.nvars);
        }
        MultiPoly {
            nvars: self.nvars,
            terms: self.terms.iter().map(|(m, k)| (m.clone(), k * c)).collect(),
        }
    }

    pub fn mul(&self, rhs: &MultiPoly) -> Result<MultiPoly, PolyError> {
        self.check_nvars(rhs)?;
        let mut out = MultiPoly::zero(self.nvars);
        for (ma, ca) in &self.terms {
            for (mb, cb) in &rhs.terms {
                out.insert_term(ma.mul(mb), ca * cb);
            }
        }
        Ok(out)
    }

    pub fn pow(&self, e: u32) -> MultiPoly {
        let mut acc = MultiPoly::one(self.nvars);
        for _ in 0..e {
            acc = acc.mul(self).expect("same nvars");
        }
        acc
    }

    /// Formal partial derivative with respect to variable `idx` (0-based).
    pub fn partial_derivative(&self, idx: usize) -> Result<MultiPoly, PolyError> {
        if idx >= self.nvars {
            return Err(PolyError::IndexOutOfRange(idx, self.nvars));
        }
        let mut out = MultiPoly::zero(self.nvars);
        for (m, c) in &self.terms {
            let e = m.0[idx];
            if e == 0 {
                continue;
            }
            let mut me = m.clone();
            me.0[idx] -= 1;
            out.insert_term(me, c.scale(&crate::scalar::rint(e as i64)));
        }
        Ok(out)
    }

    /// Laplacian: sum of second partials over all variables.
    pub fn laplacian(&self) -> MultiPoly {
        let mut out = MultiPoly::zero(self.nvars);
        for idx in 0..self.nvars {
            let d2 = self
                .partial_derivative(idx)
                .and_then(|d| d.partial_derivative(idx))
                .expect("index in range");
            out = out.add(&d2).expect("same nvars");
        }
        out
    }

    /// Euler operator: sum_j x_j dP/dx_j (degree * P on homogeneous P).
    pub fn euler(&self) -> MultiPoly {
        let mut out = MultiPoly::zero(self.nvars);
        for (m, c) in &self.terms {
            let d = m.total_degree();
            if d > 0 {
                out.insert_term(m.clone(), c.scale(&crate::scalar::rint(d as i64)));
            }
        }
        out
    }

    /// Exact polynomial composition: substitute `images[j]` for variable j.
    pub fn substitute(&self, images: &[MultiPoly]) -> Result<MultiPoly, PolyError> {
        if images.len() != self.nvars {
            return Err(PolyError::ArityMismatch(self.nvars, images.len()));
        }
        let out_nvars = match images.first() {
            Some(p) => p.nvars,
            None => return Ok(MultiPoly::constant(0, self.constant_coefficient())),
        };
        for im in images {
            if im.nvars != out_nvars {
                return Err(PolyError::NvarsMismatch(im.nvars, out_nvars));
            }
        }
        // memoized image powers
        let mut powers: Vec<Vec<MultiPoly>> =
            images.iter().map(|im| vec![MultiPoly::one(out_nvars), im.clone()]).collect();
        let mut power = |var: usize, e: usize, powers: &mut Vec<Vec<MultiPoly>>| {
            while powers[var].len() <= e {
                let next = powers[var]
                    .last()
                    .unwrap()
                    .mul(&powers[var][1])
                    .expect("same nvars");
                powers[var].push(next);
            }
            powers[var][e].clone()
        };
        let mut out = MultiPoly::zero(out_nvars);
        for (m, c) in &self.terms {
            let mut term = MultiPoly::constant(out_nvars, c.clone());
            for (var, &e) in m.0.iter().enumerate() {
                if e > 0 {
                    term = term.mul(&power(var, e as usize, &mut powers))?;
                }
            }
            out = out.add(&term)?;
        }
        Ok(out)
    }

    /// Evaluate at a point.
    pub fn eval(&self, point: &[GaussianRational]) -> Result<GaussianRational, PolyError> {
        if point.len() != self.nvars {
            return Err(PolyError::ArityMismatch(self.nvars, point.len()));
        }
        let mut acc = GaussianRational::zero();
        for (m, c) in &self.terms {
            let mut t = c.clone();
            for (var, &e) in m.0.iter().enumerate() {
                for _ in 0..e {
                    t = &t * &point[var];
                }
            }
            acc = &acc + &t;
        }
        Ok(acc)
    }

    pub fn constant_coefficient(&self) -> GaussianRational {
        self.terms
            .get(&Monomial::constant(self.nvars))
            .cloned()
            .unwrap_or_else(GaussianRational::zero)
    }

    /// Split into homogeneous components, keyed by degree.
    pub fn homogeneous_components(&self) -> BTreeMap<u32, MultiPoly> {
        let mut out: BTreeMap<u32, MultiPoly> = BTreeMap::new();
        for (m, c) in &self.terms {
            out.entry(m.total_degree())
                .or_insert_with(|| MultiPoly::zero(self.nvars))
                .insert_term(m.clone(), c.clone());
        }
        out
    }

    /// Leading term in graded-lex order.
    fn leading(&self) -> Option<(&Monomial, &GaussianRational)> {
        self.terms.iter().next_back()
    }

    /// Exact division: returns R with self = divisor * R, or NotDivisible.
    pub fn exact_divide(&self, divisor: &MultiPoly) -> Result<MultiPoly, PolyError> {
        self.check_nvars(divisor)?;
        if divisor.is_zero() {
            return Err(PolyError::NotDivisible);
        }
        let (dm, dc) = {
            let (m, c) = divisor.leading().unwrap();
            (m.clone(), c.clone())
        };
        let mut rem = self.clone();
        let mut quot = MultiPoly::zero(self.nvars);
        while let Some((rm, rc)) = rem.leading() {
            let qm = match rm.checked_div(&dm) {
                Some(q) => q,
                None => return Err(PolyError::NotDivisible),
            };
            let qc = rc.checked_div(&dc)?;
            let piece = MultiPoly::monomial(self.nvars, qm, qc);
            rem = rem.sub(&piece.mul(divisor)?)?;
            quot = quot.add(&piece)?;
        }
        Ok(quot)
    }

    fn check_nvars(&self, rhs: &MultiPoly) -> Result<(), PolyError> {
        if self.nvars != rhs.nvars {
            return Err(PolyError::NvarsMismatch(self.nvars, rhs.nvars));
        }
        Ok(())
    }

    /// One term per line: "re_num/re_den,im_num/im_den : e1 e2 ... en",
    /// preceded by a "nvars n" header. '#' starts a comment line.
    pub fn to_text(&self) -> String {
        let mut s = format!("nvars {}\n", self.nvars);
        for (m, c) in &self.terms {
            s.push_str(&c.to_text());
            s.push_str(" : ");
            let exps: Vec<String> = m.0.iter().map(|e| e.to_string()).collect();
            s.push_str(&exps.join(" "));
            s.push('\n');
        }
        s
    }

    pub fn from_text(text: &str) -> Result<MultiPoly, PolyError> {
        let mut nvars: Option<usize> = None;
        let mut poly: Option<MultiPoly> = None;
        for line in text.lines() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            if let Some(rest) = line.strip_prefix("nvars") {
                let n: usize = rest
                    .trim()
                    .parse()
                    .map_err(|_| PolyError::Parse(format!("bad nvars line: {line}")))?;
                nvars = Some(n);
                poly = Some(MultiPoly::zero(n));
                continue;
            }
            let n = nvars.ok_or_else(|| PolyError::Parse("missing nvars header".into()))?;
            let (coeff, exps) = line
                .split_once(':')
                .ok_or_else(|| PolyError::Parse(format!("missing ':' in term: {line}")))?;
            let c = GaussianRational::from_text(coeff.trim())?;
            let e: Vec<u16> = exps
                .split_whitespace()
                .map(|t| t.parse::<u16>())
                .collect::<Result<_, _>>()
                .map_err(|_| PolyError::Parse(format!("bad exponents: {line}")))?;
            if e.len() != n {
                return Err(PolyError::Parse(format!(
                    "expected {n} exponents, got {}: {line}",
                    e.len()
                )));
            }
            poly.as_mut().unwrap().insert_term(Monomial(e), c);
        }
        poly.ok_or_else(|| PolyError::Parse("empty polynomial text".into()))
    }
}

impl fmt::Debug for MultiPoly {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_zero() {
            return write!(f, "0");
        }
        let mut first = true;
        for (m, c) in self.terms.iter().rev() {
            if !first {
                write!(f, " + ")?;
            }
            first = false;
            write!(f, "({c})")?;
            for (v, &e) in m.0.iter().enumerate() {
                if e == 1 {
                    write!(f, "*x{}", v + 1)?;
                } else if e > 1 {
                    write!(f, "*x{}^{}", v + 1, e)?;
                }
            }
        }
        Ok(())
    }
}

/// Delta(z) = z_1^2 + ... + z_p^2 in p variables.
pub fn delta_poly(p: usize) -> MultiPoly {
    let mut out = MultiPoly::zero(p);
    for j in 0..p {
        let mut e = vec![0u16; p];
        e[j] = 2;
        out.insert_term(Monomial(e), GaussianRational::one());
    }
    out
}

/// Bi-Laplacian (Sum_j d^2/dz_j^2)^2, the fourth-order constant-coefficient
/// operator of the Fock-model lowering.
pub fn delta2_partial_apply(psi: &MultiPoly) -> MultiPoly {
    psi.laplacian().laplacian()
}

/// Rational function numerator / Delta(z)^denom_power.
///
/// Canonical: numerator not divisible by Delta unless the power is zero.
#[derive(Clone, PartialEq, Eq, Debug)]
pub struct DeltaRationalFn {
    pub numerator: MultiPoly,
    pub denom_power: usize,
}

impl DeltaRationalFn {
    pub fn from_poly(p: MultiPoly) -> Self {
        DeltaRationalFn {
            numerator: p,
            denom_power: 0,
        }
        .canonicalize()
    }

    pub fn nvars(&self) -> usize {
        self.numerator.nvars
    }

    pub fn is_zero(&self) -> bool {
        self.numerator.is_zero()
    }

    /// Divide out every full Delta factor from the numerator.
    pub fn canonicalize(mut self) -> Self {
        if self.numerator.is_zero() {
            self.denom_power = 0;
            return self;
        }
        let delta = delta_poly(self.nvars());
        while self.denom_power > 0 {
            match self.numerator.exact_divide(&delta) {
                Ok(q) => {
                    self.numerator = q;
                    self.denom_power -= 1;
                }
                Err(_) => break,
            }
        }
        self
    }

    pub fn add(&self, rhs: &DeltaRationalFn) -> Result<DeltaRationalFn, PolyError> {
        let delta = delta_poly(self.nvars());
        let k = self.denom_power.max(rhs.denom_power);
        let a = self
            .numerator
            .mul(&delta.pow((k - self.denom_power) as u32))?;
        let b = rhs
            .numerator
            .mul(&delta.pow((k - rhs.denom_power) as u32))?;
        Ok(DeltaRationalFn {
            numerator: a.add(&b)?,
            denom_power: k,
        }
        .canonicalize())
    }

    pub fn mul_poly(&self, p: &MultiPoly) -> Result<DeltaRationalFn, PolyError> {
        Ok(DeltaRationalFn {
            numerator: self.numerator.mul(p)?,
            denom_power: self.denom_power,
        }
        .canonicalize())
    }

    pub fn scale(&self, c: &GaussianRational) -> DeltaRationalFn {
        DeltaRationalFn {
            numerator: self.numerator.scale(c),
            denom_power: if self.numerator.is_zero() || c.is_zero() {
                0
            } else {
                self.denom_power
            },
        }
    }

    /// Multiply by Delta^t for any integer t.
    pub fn mul_delta_power(&self, t: i64) -> Result<DeltaRationalFn, PolyError> {
        if t >= 0 {
            let delta = delta_poly(self.nvars());
            Ok(DeltaRationalFn {
                numerator: self.numerator.mul(&delta.pow(t as u32))?,
                denom_power: self.denom_power,
            }
            .canonicalize())
        } else {
            Ok(DeltaRationalFn {
                numerator: self.numerator.clone(),
                denom_power: self.denom_power + (-t) as usize,
            }
            .canonicalize())
        }
    }

    /// d/dz_j of N/Delta^k = (dN Delta - 2 k z_j N) / Delta^(k+1).
    pub fn partial_derivative(&self, idx: usize) -> Result<DeltaRationalFn, PolyError> {
        let dn = self.numerator.partial_derivative(idx)?;
        if self.denom_power == 0 {
            return Ok(DeltaRationalFn::from_poly(dn));
        }
        let delta = delta_poly(self.nvars());
        let zj = MultiPoly::variable(self.nvars(), idx);
        let k = crate::scalar::rint(self.denom_power as i64);
        let num = dn.mul(&delta)?.sub(
            &zj.mul(&self.numerator)?
                .scale(&GaussianRational::from_rational(k * crate::scalar::rint(2))),
        )?;
        Ok(DeltaRationalFn {
            numerator: num,
            denom_power: self.denom_power + 1,
        }
        .canonicalize())
    }

    /// Laplacian over all variables, staying in the Delta-power class.
    pub fn laplacian(&self) -> Result<DeltaRationalFn, PolyError> {
        let mut acc = DeltaRationalFn::from_poly(MultiPoly::zero(self.nvars()));
        for idx in 0..self.nvars() {
            let d2 = self.partial_derivative(idx)?.partial_derivative(idx)?;
            acc = acc.add(&d2)?;
        }
        Ok(acc)
    }

    /// The inversion J: f(z) -> f(-z / Delta(z)).
    ///
    /// For a homogeneous piece N_e of degree e, N_e(-z/Delta) = (-1)^e N_e / Delta^e,
    /// and J(Delta^-k) = Delta^k; the result stays in the Delta-power class.
    pub fn inversion(&self) -> Result<DeltaRationalFn, PolyError> {
        if self.numerator.is_zero() {
            return Ok(self.clone());
        }
        let delta = delta_poly(self.nvars());
        let comps = self.numerator.homogeneous_components();
        let emax = *comps.keys().last().unwrap();
        let mut num = MultiPoly::zero(self.nvars());
        for (e, part) in &comps {
            let mut piece = part.mul(&delta.pow(emax - e))?;
            if e % 2 == 1 {
                piece = piece.neg();
            }
            num = num.add(&piece)?;
        }
        // total: num / Delta^emax * Delta^denom_power
        let dd = emax as i64 - self.denom_power as i64;
        let out = if dd >= 0 {
            DeltaRationalFn {
                numerator: num,
                denom_power: dd as usize,
            }
        } else {
            DeltaRationalFn {
                numerator: num.mul(&delta.pow((-dd) as u32))?,
                denom_power: 0,
            }
        };
        Ok(out.canonicalize())
    }

    /// Extract a polynomial; error carries the residual Delta power.
    pub fn to_poly(&self) -> Result<MultiPoly, PolyError> {
        let c = self.clone().canonicalize();
        if c.denom_power == 0 {
            Ok(c.numerator)
        } else {
            Err(PolyError::ResidualDenominator(c.denom_power))
        }
    }
}

/// P(-z/Delta(z)) as a canonical [`DeltaRationalFn`].
pub fn inversion_substitute(p: &MultiPoly) -> Result<DeltaRationalFn, PolyError> {
    DeltaRationalFn::from_poly(p.clone()).inversion()
}

/// Outcome of an exact linear solve.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum LinearSolveOutcome {
    Unique(Vec<GaussianRational>),
    NoSolution,
    /// Consistent but under-determined; carries one particular solution.
    NonUnique(Vec<GaussianRational>),
}

/// Exact Gaussian elimination for A x = b over Q(i).
///
/// No-division forward elimination (cross-multiplication), pivot = first
/// nonzero entry in column order, then exact back substitution.
pub fn linear_solve(
    matrix: &[Vec<GaussianRational>],
    rhs: &[GaussianRational],
) -> LinearSolveOutcome {
    let nrows = matrix.len();
    assert_eq!(nrows, rhs.len(), "inconsistent dimensions");
    let ncols = matrix.first().map_or(0, |r| r.len());
    let mut a: Vec<Vec<GaussianRational>> = matrix
        .iter()
        .zip(rhs)
        .map(|(row, b)| {
            assert_eq!(row.len(), ncols, "ragged matrix");
            let mut r = row.clone();
            r.push(b.clone());
            r
        })
        .collect();

    let mut pivots: Vec<(usize, usize)> = Vec::new(); // (row, col)
    let mut prow = 0usize;
    for col in 0..ncols {
        let Some(sel) = (prow..nrows).find(|&r| !a[r][col].is_zero()) else {
            continue;
        };
        a.swap(prow, sel);
        let pval = a[prow][col].clone();
        for r in (prow + 1)..nrows {
            if a[r][col].is_zero() {
                continue;
            }
            let f = a[r][col].clone();
            for c in col..=ncols {
                a[r][c] = &(&a[r][c] * &pval) - &(&a[prow][c] * &f);
            }
        }
        pivots.push((prow, col));
        prow += 1;
        if prow == nrows {
            break;
        }
    }
    // consistency: zero rows must have zero rhs
    for r in prow..nrows {
        if !a[r][ncols].is_zero() {
            return LinearSolveOutcome::NoSolution;
        }
    }
    // exact back substitution
    let mut x = vec![GaussianRational::zero(); ncols];
    for &(r, c) in pivots.iter().rev() {
        let mut acc = a[r][ncols].clone();
        for cc in (c + 1)..ncols {
            acc = &acc - &(&a[r][cc] * &x[cc]);
        }
        x[c] = acc.checked_div(&a[r][c]).expect("pivot nonzero");
    }
    if pivots.len() == ncols {
        LinearSolveOutcome::Unique(x)
    } else {
        LinearSolveOutcome::NonUnique(x)
    }
}

/// Exact kernel basis of A x = 0, deterministic given the column order.
pub fn kernel_basis(matrix: &[Vec<GaussianRational>]) -> Vec<Vec<GaussianRational>> {
    let nrows = matrix.len();
    let ncols = matrix.first().map_or(0, |r| r.len());
    let mut a: Vec<Vec<GaussianRational>> = matrix.to_vec();
    let mut pivots: Vec<(usize, usize)> = Vec::new();
    let mut prow = 0usize;
    for col in 0..ncols {
        let Some(sel) = (prow..nrows).find(|&r| !a[r][col].is_zero()) else {
            continue;
        };
        a.swap(prow, sel);
        let pval = a[prow][col].clone();
        for r in 0..nrows {
            if r == prow || a[r][col].is_zero() {
                continue;
            }
            let f = a[r][col].clone();
            for c in 0..ncols {
                a[r][c] = &(&a[r][c] * &pval) - &(&a[prow][c] * &f);
            }
        }
        pivots.push((prow, col));
        prow += 1;
        if prow == nrows {
            break;
        }
    }
    let pivot_cols: Vec<usize> = pivots.iter().map(|&(_, c)| c).collect();
    let mut basis = Vec::new();
    for free in 0..ncols {
        if pivot_cols.contains(&free) {
            continue;
        }
        let mut v = vec![GaussianRational::zero(); ncols];
        v[free] = GaussianRational::one();
        for &(r, c) in &pivots {
            // a[r][c] * v[c] + a[r][free] = 0
            v[c] = (-&a[r][free]).checked_div(&a[r][c]).expect("pivot nonzero");
        }
        basis.push(v);
    }
    basis
}

/// Reusable exact solver for "is y in the span of b_1..b_k, and with which
/// coefficients" queries. Elimination happens once; each query is a sparse
/// reduction pass.
pub struct SpanSolver {
    /// reduced vectors, sparse over row index, with recorded pivot
    reduced: Vec<(usize, BTreeMap<usize, GaussianRational>)>,
    /// expression of each reduced vector over the original basis
    combo: Vec<Vec<GaussianRational>>,
    pub nbasis: usize,
}

impl SpanSolver {
    pub fn new(basis: Vec<BTreeMap<usize, GaussianRational>>) -> Self {
        let nbasis = basis.len();
        let mut solver = SpanSolver {
            reduced: Vec::new(),
            combo: Vec::new(),
            nbasis,
        };
        for (i, b) in basis.into_iter().enumerate() {
            let mut e = vec![GaussianRational::zero(); nbasis];
            e[i] = GaussianRational::one();
            if let Some((pivot, vec, combo)) = solver.reduce(b, e) {
                solver.reduced.push((pivot, vec));
                solver.combo.push(combo);
            }
            // dependent basis vectors are silently dropped; callers pass
            // independent bases and assert via rank()
        }
        solver
    }

    pub fn rank(&self) -> usize {
        self.reduced.len()
    }

    fn reduce(
        &self,
        mut v: BTreeMap<usize, GaussianRational>,
        mut combo: Vec<GaussianRational>,
    ) -> Option<(usize, BTreeMap<usize, GaussianRational>, Vec<GaussianRational>)> {
        loop {
            let Some((&lead, _)) = v.iter().next() else {
                return None;
            };
            let Some(ridx) = self.reduced.iter().position(|(p, _)| *p == lead) else {
                // normalize pivot to 1
                let pval = v.get(&lead).unwrap().clone();
                let inv = pval.inv().expect("nonzero lead");
                for c in v.values_mut() {
                    *c = &*c * &inv;
                }
                for c in combo.iter_mut() {
                    *c = &*c * &inv;
                }
                return Some((lead, v, combo));
            };
            let f = v.get(&lead).unwrap().clone();
            let (_, rvec) = &self.reduced[ridx];
            for (row, c) in rvec {
                let cur = v.remove(row).unwrap_or_else(GaussianRational::zero);
                let nv = &cur - &(c * &f);
                if !nv.is_zero() {
                    v.insert(*row, nv);
                }
            }
            let rc = &self.combo[ridx];
            for (a, b) in combo.iter_mut().zip(rc) {
                *a = &*a - &(b * &f);
            }
        }
    }

    /// Solve sum c_i b_i = y; None when y is not in the span.
    pub fn solve(&self, y: BTreeMap<usize, GaussianRational>) -> Option<Vec<GaussianRational>> {
        let mut v = y;
        let mut coeffs = vec![GaussianRational::zero(); self.nbasis];
        loop {
            let Some((&lead, _)) = v.iter().next() else {
                return Some(coeffs);
            };
            let ridx = self.reduced.iter().position(|(p, _)| *p == lead)?;
            let f = v.get(&lead).unwrap().clone();
            let (_, rvec) = &self.reduced[ridx];
            for (row, c) in rvec {
                let cur = v.remove(row).unwrap_or_else(GaussianRational::zero);
                let nv = &cur - &(c * &f);
                if !nv.is_zero() {
                    v.insert(*row, nv);
                }
            }
            for (a, b) in coeffs.iter_mut().zip(&self.combo[ridx]) {
                *a = &*a + &(b * &f);
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scalar::{rat, rint, GaussianRational as G};

    fn var(n: usize, i: usize) -> MultiPoly {
        MultiPoly::variable(n, i)
    }

    #[test]
    fn square_of_sum() {
        let z1 = var(2, 0);
        let z2 = var(2, 1);
        let s = z1.add(&z2).unwrap();
        let sq = s.pow(2);
        let expect = z1
            .pow(2)
            .add(&z1.mul(&z2).unwrap().scale(&G::from_int(2)))
            .unwrap()
            .add(&z2.pow(2))
            .unwrap();
        assert_eq!(sq, expect);
    }

    #[test]
    fn mul_by_zero_empties_term_map() {
        let p = var(3, 0).add(&MultiPoly::one(3)).unwrap();
        let z = p.mul(&MultiPoly::zero(3)).unwrap();
        assert!(z.terms.is_empty());
    }

    #[test]
    fn delta_squared_expansion_p3() {
        // brute-force expansion oracle for Delta(z)^2, p = 3
        let d = delta_poly(3);
        let d2 = d.pow(2);
        let mut expect = MultiPoly::zero(3);
        for j in 0..3 {
            let mut e = vec![0u16; 3];
            e[j] = 4;
            expect.insert_term(Monomial(e), G::one());
        }
        for j in 0..3 {
            for k in (j + 1)..3 {
                let mut e = vec![0u16; 3];
                e[j] = 2;
                e[k] = 2;
                expect.insert_term(Monomial(e), G::from_int(2));
            }
        }
        assert_eq!(d2, expect);
    }

    #[test]
    fn partial_derivative_examples() {
        let z1 = var(2, 0);
        assert_eq!(
            z1.pow(3).partial_derivative(0).unwrap(),
            z1.pow(2).scale(&G::from_int(3))
        );
        assert!(var(2, 0).partial_derivative(1).unwrap().is_zero());
        // chain-rule oracle: d/dz1 Delta(z)^2 = 2 Delta * 2 z1, p = 2
        let d = delta_poly(2);
        let got = d.pow(2).partial_derivative(0).unwrap();
        let expect = d.mul(&var(2, 0)).unwrap().scale(&G::from_int(4));
        assert_eq!(got, expect);
        assert!(var(2, 0).partial_derivative(5).is_err());
    }

    #[test]
    fn laplacian_examples() {
        for n in 2..5 {
            let r2 = delta_poly(n);
            assert_eq!(
                r2.laplacian(),
                MultiPoly::constant(n, G::from_int(2 * n as i64))
            );
        }
        let xy = var(4, 0).mul(&var(4, 1)).unwrap();
        assert!(xy.laplacian().is_zero());
        // holomorphic pair (x1 + i x2)^m is harmonic
        let hol = var(4, 0).add(&var(4, 1).scale(&G::i())).unwrap();
        for m in 0..7 {
            assert!(hol.pow(m).laplacian().is_zero());
        }
    }

    #[test]
    fn substitute_examples() {
        // P = x1^2 under x1 -> z1 + 1
        let p = var(1, 0).pow(2);
        let img = var(1, 0).add(&MultiPoly::one(1)).unwrap();
        let got = p.substitute(&[img.clone()]).unwrap();
        let expect = img.pow(2);
        assert_eq!(got, expect);
        // identity images
        let q = var(3, 0)
            .mul(&var(3, 2))
            .unwrap()
            .add(&var(3, 1).pow(2))
            .unwrap();
        let ids: Vec<MultiPoly> = (0..3).map(|i| var(3, i)).collect();
        assert_eq!(q.substitute(&ids).unwrap(), q);
        assert!(q.substitute(&ids[..2]).is_err());
    }

    #[test]
    fn substitute_composition_property() {
        // substitute(substitute(P, A), B) = substitute(P, A after B)
        let p = var(2, 0)
            .pow(2)
            .add(&var(2, 0).mul(&var(2, 1)).unwrap())
            .unwrap();
        let a = vec![
            var(2, 0).add(&var(2, 1)).unwrap(),
            var(2, 0).sub(&var(2, 1)).unwrap(),
        ];
        let b = vec![var(2, 1).pow(2), var(2, 0).add(&MultiPoly::one(2)).unwrap()];
        let lhs = p.substitute(&a).unwrap().substitute(&b).unwrap();
        let ab: Vec<MultiPoly> = a.iter().map(|ai| ai.substitute(&b).unwrap()).collect();
        let rhs = p.substitute(&ab).unwrap();
        assert_eq!(lhs, rhs);
    }

    #[test]
    fn leibniz_property_for_laplacian() {
        // Lap(PQ) = P LapQ + Q LapP + 2 sum_i dP dQ
        let p = var(3, 0)
            .pow(2)
            .mul(&var(3, 1))
            .unwrap()
            .add(&var(3, 2).pow(3))
            .unwrap();
        let q = var(3, 1)
            .mul(&var(3, 2))
            .unwrap()
            .add(&MultiPoly::one(3).scale(&G::from_int(5)))
            .unwrap();
        let lhs = p.mul(&q).unwrap().laplacian();
        let mut rhs = p
            .mul(&q.laplacian())
            .unwrap()
            .add(&q.mul(&p.laplacian()).unwrap())
            .unwrap();
        for i in 0..3 {
            rhs = rhs
                .add(
                    &p.partial_derivative(i)
                        .unwrap()
                        .mul(&q.partial_derivative(i).unwrap())
                        .unwrap()
                        .scale(&G::from_int(2)),
                )
                .unwrap();
        }
        assert_eq!(lhs, rhs);
    }

    #[test]
    fn delta2_partial_examples() {
        // order-4 operator kills degree <= 3
        let psi = var(3, 0)
            .pow(3)
            .add(&var(3, 1).mul(&var(3, 2)).unwrap())
            .unwrap();
        assert!(delta2_partial_apply(&psi).is_zero());
        // z1^4 -> 24
        assert_eq!(
            delta2_partial_apply(&var(3, 0).pow(4)),
            MultiPoly::constant(3, G::from_int(24))
        );
        // term-by-term oracle for Delta(z)^2 at p = 3: value 8 p (p+2) = 120,
        // and it must equal laplacian(laplacian(Delta^2))
        let d2 = delta_poly(3).pow(2);
        let got = delta2_partial_apply(&d2);
        assert_eq!(got, d2.laplacian().laplacian());
        assert_eq!(got, MultiPoly::constant(3, G::from_int(120)));
    }

    #[test]
    fn inversion_examples() {
        let one = MultiPoly::one(3);
        let j1 = inversion_substitute(&one).unwrap();
        assert_eq!(j1.denom_power, 0);
        assert_eq!(j1.numerator, one);

        let z1 = var(3, 0);
        let jz = inversion_substitute(&z1).unwrap();
        assert_eq!(jz.denom_power, 1);
        assert_eq!(jz.numerator, z1.neg());

        // Delta(-z/Delta) = 1/Delta
        let jd = inversion_substitute(&delta_poly(3)).unwrap();
        assert_eq!(jd.denom_power, 1);
        assert_eq!(jd.numerator, MultiPoly::one(3));
    }

    #[test]
    fn inversion_is_involution_on_homogeneous() {
        let samples = [
            var(3, 0).mul(&var(3, 1)).unwrap(),
            delta_poly(3),
            var(3, 2).pow(3),
            delta_poly(3).mul(&var(3, 0)).unwrap(),
        ];
        for p in &samples {
            let jj = inversion_substitute(p).unwrap().inversion().unwrap();
            assert_eq!(jj.denom_power, 0);
            assert_eq!(&jj.numerator, p);
        }
    }

    #[test]
    fn drf_laplacian_matches_quotient_rule_at_a_point() {
        // Laplacian of z1/Delta through the class vs hand quotient rule,
        // both evaluated exactly at z = (1,2,3) where Delta = 14.
        let f = DeltaRationalFn {
            numerator: var(3, 0),
            denom_power: 1,
        };
        let lap = f.laplacian().unwrap();
        let pt = [G::from_int(1), G::from_int(2), G::from_int(3)];
        let dval = rat(14, 1);
        let mut denom = rint(1);
        for _ in 0..lap.denom_power {
            denom *= &dval;
        }
        let got = lap
            .numerator
            .eval(&pt)
            .unwrap()
            .checked_div(&G::from_rational(denom))
            .unwrap();
        // d2/dzj2 (z1/Delta) = -4 kron_j1 zj/Delta^2 - 2 z1/Delta^2 + 8 z1 zj^2/Delta^3
        let z = [rint(1), rint(2), rint(3)];
        let d2 = &dval * &dval;
        let d3 = &d2 * &dval;
        let mut acc = rat(0, 1);
        for j in 0..3 {
            let kron = if j == 0 { rint(1) } else { rint(0) };
            acc += -rint(4) * &kron * &z[j] / &d2 - rint(2) * &z[0] / &d2
                + rint(8) * &z[0] * &z[j] * &z[j] / &d3;
        }
        assert_eq!(got, G::from_rational(acc));
    }

    #[test]
    fn exact_divide_examples() {
        let d = delta_poly(3);
        let z1 = var(3, 0);
        let p = d.mul(&z1).unwrap();
        assert_eq!(p.exact_divide(&d).unwrap(), z1);
        assert!(z1.exact_divide(&d).is_err());
        // (z1^2 - z2^2) / (z1 - z2) = z1 + z2
        let z2 = var(3, 1);
        let num = z1.pow(2).sub(&z2.pow(2)).unwrap();
        let den = z1.sub(&z2).unwrap();
        assert_eq!(num.exact_divide(&den).unwrap(), z1.add(&z2).unwrap());
    }

    #[test]
    fn linear_solve_examples() {
        let id = vec![
            vec![G::one(), G::zero()],
            vec![G::zero(), G::one()],
        ];
        let v = vec![G::from_int(7), G::from_int(-3)];
        assert_eq!(linear_solve(&id, &v), LinearSolveOutcome::Unique(v.clone()));

        let sing = vec![
            vec![G::one(), G::one()],
            vec![G::one(), G::one()],
        ];
        assert_eq!(
            linear_solve(&sing, &[G::from_int(1), G::from_int(2)]),
            LinearSolveOutcome::NoSolution
        );

        let diag = vec![
            vec![G::from_int(2), G::zero()],
            vec![G::zero(), G::from_int(4)],
        ];
        assert_eq!(
            linear_solve(&diag, &[G::one(), G::one()]),
            LinearSolveOutcome::Unique(vec![
                G::from_rational(rat(1, 2)),
                G::from_rational(rat(1, 4))
            ])
        );
    }

    #[test]
    fn kernel_basis_dimension() {
        // x + y + z = 0 has a 2-dimensional kernel
        let m = vec![vec![G::one(), G::one(), G::one()]];
        let k = kernel_basis(&m);
        assert_eq!(k.len(), 2);
        for v in &k {
            let s = v.iter().fold(G::zero(), |a, b| &a + b);
            assert!(s.is_zero());
        }
    }

    #[test]
    fn span_solver_round_trip() {
        let mut b1 = BTreeMap::new();
        b1.insert(0, G::one());
        b1.insert(2, G::from_int(2));
        let mut b2 = BTreeMap::new();
        b2.insert(1, G::from_int(3));
        b2.insert(2, G::from_int(-1));
        let solver = SpanSolver::new(vec![b1, b2]);
        assert_eq!(solver.rank(), 2);
        // y = 2 b1 - b2
        let mut y = BTreeMap::new();
        y.insert(0, G::from_int(2));
        y.insert(1, G::from_int(-3));
        y.insert(2, G::from_int(5));
        let c = solver.solve(y).unwrap();
        assert_eq!(c, vec![G::from_int(2), G::from_int(-1)]);
        // not in span
        let mut bad = BTreeMap::new();
        bad.insert(3, G::one());
        assert!(solver.solve(bad).is_none());
    }

    #[test]
    fn text_format_round_trip_bit_exact() {
        let p = var(3, 0)
            .pow(2)
            .scale(&G::new(rat(-3, 7), rat(1, 2)))
            .add(&var(3, 2).scale(&G::i()))
            .unwrap()
            .add(&MultiPoly::constant(3, G::from_rational(rat(22, 5))))
            .unwrap();
        let text = p.to_text();
        let q = MultiPoly::from_text(&text).unwrap();
        assert_eq!(p, q);
        assert_eq!(text, q.to_text());
        // comments and blank lines are tolerated
        let with_comments = format!("# header\n\n{text}# trailing\n");
        assert_eq!(MultiPoly::from_text(&with_comments).unwrap(), p);
    }

    #[test]
    fn ring_axioms_on_deterministic_samples() {
        // small deterministic sweep stands in for randomized ring-axiom checks
        let polys = [
            MultiPoly::one(2),
            var(2, 0),
            var(2, 1).pow(2),
            var(2, 0).add(&var(2, 1)).unwrap(),
            delta_poly(2),
            var(2, 0).mul(&var(2, 1)).unwrap().scale(&G::i()),
        ];
        for a in &polys {
            for b in &polys {
                for c in &polys {
                    let ab_c = a.mul(b).unwrap().mul(c).unwrap();
                    let a_bc = a.mul(&b.mul(c).unwrap()).unwrap();
                    assert_eq!(ab_c, a_bc);
                    let lhs = a.mul(&b.add(c).unwrap()).unwrap();
                    let rhs = a.mul(b).unwrap().add(&a.mul(c).unwrap()).unwrap();
                    assert_eq!(lhs, rhs);
                }
            }
        }
    }
}
