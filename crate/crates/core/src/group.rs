//! Finite matrix groups acting linearly on `R^d`.
//!
//! Groups are stored extensionally: every element matrix is kept together
//! with a Cayley table and an inverse table, so axiom checks, orbit averages
//! and Haar sampling are exact table lookups.

use std::collections::HashMap;
use std::f64::consts::PI;
use std::fmt;

use nalgebra::DMatrix;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Entrywise tolerance used for matrix equality, closure and deduplication.
pub const MATRIX_TOL: f64 = 1e-9;

/// Closure by repeated multiplication stops with an error past this order.
pub const MAX_ORDER: usize = 10_000;

/// Sentinel stored in the Cayley table when a product is not in the set.
pub const MISSING: usize = usize::MAX;

#[derive(Debug, Clone, PartialEq)]
pub struct GroupElement {
    matrix: DMatrix<f64>,
    label: String,
}

impl GroupElement {
    /// Wraps a square matrix. Rejects singular matrices and matrices whose
    /// operator norm exceeds `1 + 1e-9`, i.e. actions that are not 1-Lipschitz.
    pub fn new(matrix: DMatrix<f64>, label: impl Into<String>) -> Result<Self> {
        if matrix.nrows() != matrix.ncols() || matrix.nrows() == 0 {
            return Err(Error::invalid(format!(
                "group element must be a non-empty square matrix, got {}x{}",
                matrix.nrows(),
                matrix.ncols()
            )));
        }
        if matrix.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("group element has non-finite entries"));
        }
        let sv = matrix.clone().singular_values();
        let max_sv = sv.max();
        let min_sv = sv.min();
        if max_sv > 1.0 + MATRIX_TOL {
            return Err(Error::invalid(format!(
                "action is not 1-Lipschitz: operator norm {max_sv}"
            )));
        }
        if min_sv <= 1e-12 {
            return Err(Error::invalid("group element matrix is singular"));
        }
        Ok(GroupElement {
            matrix,
            label: label.into(),
        })
    }

    pub fn identity(dim: usize) -> Self {
        GroupElement {
            matrix: DMatrix::identity(dim, dim),
            label: "id".to_string(),
        }
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    /// Matrix-vector product `W_sigma x`.
    pub fn apply(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.dim() {
            return Err(Error::invalid(format!(
                "point has dimension {}, group acts on dimension {}",
                x.len(),
                self.dim()
            )));
        }
        let mut out = vec![0.0; x.len()];
        self.apply_into(x, &mut out);
        Ok(out)
    }

    /// Unchecked `out = W x`; both slices must have length `dim`.
    pub fn apply_into(&self, x: &[f64], out: &mut [f64]) {
        let d = self.dim();
        debug_assert_eq!(x.len(), d);
        debug_assert_eq!(out.len(), d);
        for (r, o) in out.iter_mut().enumerate() {
            let mut acc = 0.0;
            for (c, xc) in x.iter().enumerate() {
                acc += self.matrix[(r, c)] * xc;
            }
            *o = acc;
        }
    }

    /// Unchecked `out = W^T v`, used to pull gradients back through the action.
    pub fn transpose_apply_into(&self, v: &[f64], out: &mut [f64]) {
        let d = self.dim();
        debug_assert_eq!(v.len(), d);
        for (c, o) in out.iter_mut().enumerate() {
            let mut acc = 0.0;
            for (r, vr) in v.iter().enumerate() {
                acc += self.matrix[(r, c)] * vr;
            }
            *o = acc;
        }
    }

    pub fn operator_norm(&self) -> f64 {
        self.matrix.clone().singular_values().max()
    }

    pub fn is_orthogonal(&self) -> bool {
        let d = self.dim();
        let gram = self.matrix.transpose() * &self.matrix;
        max_abs_diff(&gram, &DMatrix::identity(d, d)) <= MATRIX_TOL
    }
}

pub(crate) fn max_abs_diff(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    a.iter()
        .zip(b.iter())
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max)
}

fn rotation_matrix(dim: usize, plane: (usize, usize), angle: f64) -> DMatrix<f64> {
    let (a, b) = plane;
    let mut m = DMatrix::identity(dim, dim);
    let (s, c) = angle.sin_cos();
    m[(a, a)] = c;
    m[(a, b)] = -s;
    m[(b, a)] = s;
    m[(b, b)] = c;
    m
}

/// Serializable recipe for one of the shipped group families.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum GroupDescriptor {
    Trivial {
        dim: usize,
    },
    Cyclic {
        k: usize,
        dim: usize,
        plane: (usize, usize),
    },
    Reflection {
        axis: usize,
        dim: usize,
    },
    Product {
        left: Box<GroupDescriptor>,
        right: Box<GroupDescriptor>,
    },
    /// Hand-built element list; cannot be rebuilt from the descriptor alone.
    Custom {
        dim: usize,
        order: usize,
    },
}

impl GroupDescriptor {
    pub fn build(&self) -> Result<FiniteGroup> {
        match self {
            GroupDescriptor::Trivial { dim } => FiniteGroup::trivial(*dim),
            GroupDescriptor::Cyclic { k, dim, plane } => make_cyclic_rotation_group(*k, *dim, *plane),
            GroupDescriptor::Reflection { axis, dim } => make_reflection_group(*axis, *dim),
            GroupDescriptor::Product { left, right } => make_product_group(&left.build()?, &right.build()?),
            GroupDescriptor::Custom { .. } => Err(Error::invalid(
                "custom groups cannot be rebuilt from their descriptor",
            )),
        }
    }

    pub fn dim(&self) -> usize {
        match self {
            GroupDescriptor::Trivial { dim }
            | GroupDescriptor::Cyclic { dim, .. }
            | GroupDescriptor::Reflection { dim, .. }
            | GroupDescriptor::Custom { dim, .. } => *dim,
            GroupDescriptor::Product { left, .. } => left.dim(),
        }
    }
}

impl fmt::Display for GroupDescriptor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            GroupDescriptor::Trivial { .. } => write!(f, "trivial"),
            GroupDescriptor::Cyclic { k, .. } => write!(f, "C{k}"),
            GroupDescriptor::Reflection { axis, .. } => write!(f, "mirror{axis}"),
            GroupDescriptor::Product { left, right } => write!(f, "{left}x{right}"),
            GroupDescriptor::Custom { order, .. } => write!(f, "custom{order}"),
        }
    }
}

#[derive(Debug, Clone)]
pub struct FiniteGroup {
    dim: usize,
    elements: Vec<GroupElement>,
    identity: usize,
    cayley: Vec<usize>,
    inverse: Vec<usize>,
    descriptor: GroupDescriptor,
}

/// Lookup of matrices up to `MATRIX_TOL`: hashed on rounded entries with a
/// linear-scan fallback for matrices that straddle a rounding boundary.
struct MatrixIndex {
    buckets: HashMap<Vec<i64>, Vec<usize>>,
}

impl MatrixIndex {
    fn key(m: &DMatrix<f64>) -> Vec<i64> {
        m.iter().map(|v| (v * 1e6).round() as i64).collect()
    }

    fn new() -> Self {
        MatrixIndex {
            buckets: HashMap::new(),
        }
    }

    fn insert(&mut self, m: &DMatrix<f64>, idx: usize) {
        self.buckets.entry(Self::key(m)).or_default().push(idx);
    }

    fn find(&self, m: &DMatrix<f64>, elements: &[GroupElement]) -> Option<usize> {
        if let Some(cands) = self.buckets.get(&Self::key(m)) {
            if let Some(&i) = cands
                .iter()
                .find(|&&i| max_abs_diff(&elements[i].matrix, m) <= MATRIX_TOL)
            {
                return Some(i);
            }
        }
        elements
            .iter()
            .position(|e| max_abs_diff(&e.matrix, m) <= MATRIX_TOL)
    }
}

impl FiniteGroup {
    pub fn trivial(dim: usize) -> Result<Self> {
        if dim == 0 {
            return Err(Error::invalid("ambient dimension must be positive"));
        }
        Self::from_elements(vec![GroupElement::identity(dim)], GroupDescriptor::Trivial { dim })
    }

    /// Closes a set of generators under multiplication (breadth first,
    /// capped at `MAX_ORDER` elements).
    pub fn generate(dim: usize, generators: &[GroupElement]) -> Result<Self> {
        if generators.iter().any(|g| g.dim() != dim) {
            return Err(Error::invalid("generator dimension mismatch"));
        }
        let mut elements = vec![GroupElement::identity(dim)];
        let mut index = MatrixIndex::new();
        index.insert(&elements[0].matrix, 0);
        let mut frontier = 0;
        while frontier < elements.len() {
            for g in generators {
                let prod = &elements[frontier].matrix * &g.matrix;
                if index.find(&prod, &elements).is_none() {
                    if elements.len() >= MAX_ORDER {
                        return Err(Error::NotAGroup(format!(
                            "closure exceeded {MAX_ORDER} elements"
                        )));
                    }
                    let label = if elements[frontier].label == "id" {
                        g.label.clone()
                    } else {
                        format!("{}*{}", elements[frontier].label, g.label)
                    };
                    index.insert(&prod, elements.len());
                    elements.push(GroupElement { matrix: prod, label });
                }
            }
            frontier += 1;
        }
        let order = elements.len();
        Self::from_elements(elements, GroupDescriptor::Custom { dim, order })
    }

    /// Builds tables for an explicit element list and rejects it unless it is
    /// closed, contains the identity and contains all inverses.
    pub fn from_elements(elements: Vec<GroupElement>, descriptor: GroupDescriptor) -> Result<Self> {
        let g = Self::from_elements_unchecked(elements, descriptor)?;
        if g.identity == MISSING {
            return Err(Error::NotAGroup("identity matrix not in the set".into()));
        }
        if g.cayley.contains(&MISSING) {
            return Err(Error::NotAGroup("set is not closed under multiplication".into()));
        }
        if g.inverse.contains(&MISSING) {
            return Err(Error::NotAGroup("set is not closed under inversion".into()));
        }
        Ok(g)
    }

    /// Builds tables without rejecting anything; missing products, identity or
    /// inverses are recorded as `MISSING`. Useful for feeding hand-built sets
    /// into [`verify_group_axioms`].
    pub fn from_elements_unchecked(
        elements: Vec<GroupElement>,
        descriptor: GroupDescriptor,
    ) -> Result<Self> {
        let Some(first) = elements.first() else {
            return Err(Error::invalid("a group needs at least one element"));
        };
        let dim = first.dim();
        if elements.iter().any(|e| e.dim() != dim) {
            return Err(Error::invalid("elements act on different dimensions"));
        }
        if elements.len() > MAX_ORDER {
            return Err(Error::NotAGroup(format!("more than {MAX_ORDER} elements")));
        }
        let mut index = MatrixIndex::new();
        for (i, e) in elements.iter().enumerate() {
            index.insert(&e.matrix, i);
        }
        let n = elements.len();
        let id = DMatrix::identity(dim, dim);
        let identity = index.find(&id, &elements).unwrap_or(MISSING);
        let mut cayley = vec![MISSING; n * n];
        for i in 0..n {
            for j in 0..n {
                let prod = &elements[i].matrix * &elements[j].matrix;
                cayley[i * n + j] = index.find(&prod, &elements).unwrap_or(MISSING);
            }
        }
        let inverse = (0..n)
            .map(|i| {
                if identity == MISSING {
                    return MISSING;
                }
                (0..n)
                    .find(|&j| cayley[i * n + j] == identity)
                    .unwrap_or(MISSING)
            })
            .collect();
        Ok(FiniteGroup {
            dim,
            elements,
            identity,
            cayley,
            inverse,
            descriptor,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn order(&self) -> usize {
        self.elements.len()
    }

    pub fn elements(&self) -> &[GroupElement] {
        &self.elements
    }

    pub fn element(&self, i: usize) -> &GroupElement {
        &self.elements[i]
    }

    pub fn identity_index(&self) -> usize {
        self.identity
    }

    /// Index of `elements[i] * elements[j]`.
    pub fn product(&self, i: usize, j: usize) -> usize {
        self.cayley[i * self.order() + j]
    }

    pub fn inverse_index(&self, i: usize) -> usize {
        self.inverse[i]
    }

    pub fn descriptor(&self) -> &GroupDescriptor {
        &self.descriptor
    }

    pub fn is_trivial(&self) -> bool {
        self.order() == 1
    }

    pub fn is_orthogonal(&self) -> bool {
        self.elements.iter().all(GroupElement::is_orthogonal)
    }

    /// Overwrites one Cayley entry without any checking. Exists so the
    /// verification harness can inject faults.
    #[doc(hidden)]
    pub fn corrupt_cayley_entry(&mut self, i: usize, j: usize, value: usize) {
        let n = self.order();
        self.cayley[i * n + j] = value;
    }

    pub fn haar_index<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        if self.order() == 1 {
            return 0;
        }
        rng.random_range(0..self.order())
    }

    /// Draws an element uniformly (the Haar measure of a finite group).
    pub fn haar_sample<R: Rng + ?Sized>(&self, rng: &mut R) -> &GroupElement {
        &self.elements[self.haar_index(rng)]
    }

    /// All images `sigma_i x`, in element order, duplicates kept.
    pub fn orbit(&self, x: &[f64]) -> Result<Vec<Vec<f64>>> {
        self.elements.iter().map(|e| e.apply(x)).collect()
    }

    /// The averaged matrix `(1/|G|) sum_i W_i`. Entries that cancel up to
    /// rounding are snapped to zero, so e.g. the rotation mean is exactly 0.
    pub fn mean_matrix(&self) -> DMatrix<f64> {
        let mut acc = DMatrix::zeros(self.dim, self.dim);
        for e in &self.elements {
            acc += &e.matrix;
        }
        (acc / self.order() as f64).map(|v| if v.abs() <= 1e-12 { 0.0 } else { v })
    }
}

/// The cyclic group of planar rotations by `2 pi j / k` in the `plane`
/// coordinate pair, embedded in `R^dim`.
pub fn make_cyclic_rotation_group(k: usize, dim: usize, plane: (usize, usize)) -> Result<FiniteGroup> {
    if k == 0 {
        return Err(Error::invalid("cyclic group order must be at least 1"));
    }
    if dim < 2 || plane.0 == plane.1 || plane.0 >= dim || plane.1 >= dim {
        return Err(Error::invalid(format!(
            "invalid rotation plane {plane:?} for dimension {dim}"
        )));
    }
    let elements = (0..k)
        .map(|j| {
            let m = rotation_matrix(dim, plane, 2.0 * PI * j as f64 / k as f64);
            let label = if j == 0 { "id".to_string() } else { format!("rot{j}/{k}") };
            GroupElement { matrix: m, label }
        })
        .collect();
    FiniteGroup::from_elements(elements, GroupDescriptor::Cyclic { k, dim, plane })
}

/// `{I, diag(.., -1 at axis, ..)}`.
pub fn make_reflection_group(axis: usize, dim: usize) -> Result<FiniteGroup> {
    if axis >= dim {
        return Err(Error::invalid(format!("reflection axis {axis} out of range for dimension {dim}")));
    }
    let mut m = DMatrix::identity(dim, dim);
    m[(axis, axis)] = -1.0;
    let elements = vec![
        GroupElement::identity(dim),
        GroupElement {
            matrix: m,
            label: format!("mirror{axis}"),
        },
    ];
    FiniteGroup::from_elements(elements, GroupDescriptor::Reflection { axis, dim })
}

/// All pairwise products `g h`, deduplicated. Fails with `NotAGroup` when the
/// product set is not closed (e.g. non-commuting factors).
pub fn make_product_group(g: &FiniteGroup, h: &FiniteGroup) -> Result<FiniteGroup> {
    if g.dim() != h.dim() {
        return Err(Error::invalid(format!(
            "factors act on different dimensions ({} vs {})",
            g.dim(),
            h.dim()
        )));
    }
    let mut elements: Vec<GroupElement> = Vec::with_capacity(g.order() * h.order());
    let mut index = MatrixIndex::new();
    for a in g.elements() {
        for b in h.elements() {
            let prod = &a.matrix * &b.matrix;
            if index.find(&prod, &elements).is_some() {
                continue;
            }
            let label = match (a.label.as_str(), b.label.as_str()) {
                ("id", l) | (l, "id") => l.to_string(),
                (la, lb) => format!("{la}*{lb}"),
            };
            index.insert(&prod, elements.len());
            elements.push(GroupElement { matrix: prod, label });
        }
    }
    // identity first keeps element order stable for downstream indexing
    if let Some(pos) = elements.iter().position(|e| e.label == "id") {
        elements.swap(0, pos);
    }
    FiniteGroup::from_elements(
        elements,
        GroupDescriptor::Product {
            left: Box::new(g.descriptor().clone()),
            right: Box::new(h.descriptor().clone()),
        },
    )
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Axiom {
    Closure,
    Identity,
    Inverse,
    Associativity,
    Lipschitz,
}

#[derive(Debug, Clone, Serialize)]
pub struct AxiomViolation {
    pub axiom: Axiom,
    pub worst_error: f64,
    pub detail: String,
}

#[derive(Debug, Clone, Serialize)]
pub struct AxiomReport {
    pub order: usize,
    pub violations: Vec<AxiomViolation>,
    /// Worst entrywise error seen per checked axiom, violated or not.
    pub worst_errors: Vec<(Axiom, f64)>,
    /// Elements that are 1-Lipschitz but not orthogonal.
    pub non_orthogonal: Vec<usize>,
    pub triples_checked: usize,
}

impl AxiomReport {
    pub fn passed(&self) -> bool {
        self.violations.is_empty()
    }

    pub fn violated(&self, axiom: Axiom) -> bool {
        self.violations.iter().any(|v| v.axiom == axiom)
    }
}

/// Checks closure, identity, inverses, associativity and the 1-Lipschitz
/// bound directly on the element matrices, comparing against the tables.
pub fn verify_group_axioms(g: &FiniteGroup) -> AxiomReport {
    let n = g.order();
    let d = g.dim();
    let id = DMatrix::<f64>::identity(d, d);
    let mut violations = Vec::new();
    let mut worst_errors = Vec::new();

    let nearest = |m: &DMatrix<f64>| {
        g.elements
            .iter()
            .map(|e| max_abs_diff(&e.matrix, m))
            .fold(f64::INFINITY, f64::min)
    };

    // closure
    let mut worst = 0.0f64;
    let mut first_bad = None;
    for i in 0..n {
        for j in 0..n {
            let prod = &g.elements[i].matrix * &g.elements[j].matrix;
            let k = g.cayley[i * n + j];
            let err = if k == MISSING || k >= n {
                nearest(&prod).max(f64::MIN_POSITIVE)
            } else {
                max_abs_diff(&prod, &g.elements[k].matrix)
            };
            if err > MATRIX_TOL && first_bad.is_none() {
                first_bad = Some((i, j));
            }
            worst = worst.max(err);
        }
    }
    worst_errors.push((Axiom::Closure, worst));
    if let Some((i, j)) = first_bad {
        violations.push(AxiomViolation {
            axiom: Axiom::Closure,
            worst_error: worst,
            detail: format!(
                "product {}*{} does not match its table entry",
                g.elements[i].label, g.elements[j].label
            ),
        });
    }

    // identity
    let e = g.identity;
    if e == MISSING || e >= n {
        violations.push(AxiomViolation {
            axiom: Axiom::Identity,
            worst_error: f64::INFINITY,
            detail: "no identity element".into(),
        });
        worst_errors.push((Axiom::Identity, f64::INFINITY));
    } else {
        let mut worst = max_abs_diff(&g.elements[e].matrix, &id);
        let mut table_ok = true;
        for i in 0..n {
            table_ok &= g.cayley[e * n + i] == i && g.cayley[i * n + e] == i;
            let left = &g.elements[e].matrix * &g.elements[i].matrix;
            worst = worst.max(max_abs_diff(&left, &g.elements[i].matrix));
        }
        worst_errors.push((Axiom::Identity, worst));
        if worst > MATRIX_TOL || !table_ok {
            violations.push(AxiomViolation {
                axiom: Axiom::Identity,
                worst_error: worst,
                detail: if table_ok { "identity matrix mismatch".into() } else { "identity row/column of the table is wrong".into() },
            });
        }
    }

    // inverses
    let mut worst = 0.0f64;
    let mut missing = 0;
    for i in 0..n {
        let inv = g.inverse[i];
        if inv == MISSING || inv >= n {
            missing += 1;
            continue;
        }
        let prod = &g.elements[i].matrix * &g.elements[inv].matrix;
        worst = worst.max(max_abs_diff(&prod, &id));
    }
    worst_errors.push((Axiom::Inverse, worst));
    if missing > 0 || worst > MATRIX_TOL {
        violations.push(AxiomViolation {
            axiom: Axiom::Inverse,
            worst_error: if missing > 0 { f64::INFINITY } else { worst },
            detail: format!("{missing} elements without an inverse in the set"),
        });
    }

    // associativity: every triple for small groups, a deterministic stride otherwise
    let total = n * n * n;
    let stride = if n <= 64 { 1 } else { (total / 100_000).max(1) | 1 };
    let mut worst = 0.0f64;
    let mut table_breaks = 0usize;
    let mut checked = 0usize;
    let mut t = 0usize;
    while t < total {
        let (i, j, k) = (t / (n * n), (t / n) % n, t % n);
        let lhs = (&g.elements[i].matrix * &g.elements[j].matrix) * &g.elements[k].matrix;
        let rhs = &g.elements[i].matrix * (&g.elements[j].matrix * &g.elements[k].matrix);
        worst = worst.max(max_abs_diff(&lhs, &rhs));
        let ij = g.cayley[i * n + j];
        let jk = g.cayley[j * n + k];
        if ij != MISSING && jk != MISSING && ij < n && jk < n && g.cayley[ij * n + k] != g.cayley[i * n + jk] {
            table_breaks += 1;
        }
        checked += 1;
        t += stride;
    }
    worst_errors.push((Axiom::Associativity, worst));
    if worst > MATRIX_TOL || table_breaks > 0 {
        violations.push(AxiomViolation {
            axiom: Axiom::Associativity,
            worst_error: worst,
            detail: format!("{table_breaks} triples where the table is not associative"),
        });
    }

    // 1-Lipschitz action
    let mut worst = 0.0f64;
    let mut non_orthogonal = Vec::new();
    for (i, el) in g.elements.iter().enumerate() {
        worst = worst.max(el.operator_norm() - 1.0);
        if !el.is_orthogonal() {
            non_orthogonal.push(i);
        }
    }
    worst_errors.push((Axiom::Lipschitz, worst.max(0.0)));
    if worst > MATRIX_TOL {
        violations.push(AxiomViolation {
            axiom: Axiom::Lipschitz,
            worst_error: worst,
            detail: "operator norm above 1".into(),
        });
    }

    AxiomReport {
        order: n,
        violations,
        worst_errors,
        non_orthogonal,
        triples_checked: checked,
    }
}
