//! Invariants σ_λ of tuples of square matrices.
//!
//! σ_λ(A₁,…,A_k) is the coefficient of t₁^λ₁⋯t_k^λ_k in det(I + t₁A₁ + … + t_kA_k).
//! The direct evaluator sums signed minors over row subsets; [`det_expand`] expands the
//! whole determinant over polynomial entries and serves as the reference.

use crate::error::{Error, Result};
use crate::matrix::SquareMatrix;
use crate::scalar::Scalar;
use std::collections::BTreeMap;
use std::fmt;

/// Exponent tuple λ = (λ₁,…,λ_k).
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct MultiIndex {
    entries: Vec<usize>,
}

impl MultiIndex {
    pub fn new(entries: Vec<usize>) -> Self {
        MultiIndex { entries }
    }

    pub fn single(k: usize) -> Self {
        MultiIndex { entries: vec![k] }
    }

    /// Parses "1,0,2".
    pub fn parse(s: &str) -> Result<Self> {
        let entries = s
            .split(',')
            .map(|p| p.trim().parse::<usize>().map_err(|e| Error::OutOfRange(format!("multi-index entry `{p}`: {e}"))))
            .collect::<Result<Vec<_>>>()?;
        Ok(MultiIndex { entries })
    }

    pub fn entries(&self) -> &[usize] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// |λ| = Σ λ_i.
    pub fn total(&self) -> usize {
        self.entries.iter().sum()
    }

    /// ‖λ‖ = Σ i·λ_i with 1-based i.
    pub fn weighted(&self) -> usize {
        self.entries.iter().enumerate().map(|(i, l)| (i + 1) * l).sum()
    }

    /// All λ of length `k` with ‖λ‖ = `w`.
    pub fn with_weight(k: usize, w: usize) -> Vec<MultiIndex> {
        fn rec(i: usize, k: usize, left: usize, cur: &mut Vec<usize>, out: &mut Vec<MultiIndex>) {
            if i == k {
                if left == 0 {
                    out.push(MultiIndex::new(cur.clone()));
                }
                return;
            }
            let step = i + 1;
            for l in 0..=left / step {
                cur.push(l);
                rec(i + 1, k, left - l * step, cur, out);
                cur.pop();
            }
        }
        let mut out = Vec::new();
        rec(0, k, w, &mut Vec::with_capacity(k), &mut out);
        out
    }
}

impl fmt::Display for MultiIndex {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s: Vec<String> = self.entries.iter().map(|e| e.to_string()).collect();
        write!(f, "({})", s.join(","))
    }
}

/// Polynomial in t₁..t_k keyed by exponent vectors.
#[derive(Clone, Debug, PartialEq)]
pub struct MultiPolynomial<T> {
    nvars: usize,
    terms: BTreeMap<Vec<usize>, T>,
}

impl<T: Scalar> MultiPolynomial<T> {
    pub fn zero(nvars: usize) -> Self {
        MultiPolynomial { nvars, terms: BTreeMap::new() }
    }

    pub fn constant(nvars: usize, c: T) -> Self {
        let mut p = Self::zero(nvars);
        p.add_term(vec![0; nvars], c);
        p
    }

    /// c·t_i.
    pub fn linear(nvars: usize, i: usize, c: T) -> Self {
        let mut e = vec![0; nvars];
        e[i] = 1;
        let mut p = Self::zero(nvars);
        p.add_term(e, c);
        p
    }

    pub fn nvars(&self) -> usize {
        self.nvars
    }

    fn add_term(&mut self, exp: Vec<usize>, c: T) {
        if c.is_zero() {
            return;
        }
        let v = match self.terms.remove(&exp) {
            Some(old) => old + c,
            None => c,
        };
        if !v.is_zero() {
            self.terms.insert(exp, v);
        }
    }

    pub fn add(&self, other: &Self) -> Self {
        let mut out = self.clone();
        for (e, c) in &other.terms {
            out.add_term(e.clone(), c.clone());
        }
        out
    }

    pub fn scale(&self, s: &T) -> Self {
        let mut out = Self::zero(self.nvars);
        for (e, c) in &self.terms {
            out.add_term(e.clone(), c.clone() * s.clone());
        }
        out
    }

    pub fn mul(&self, other: &Self) -> Self {
        let mut out = Self::zero(self.nvars);
        for (e1, c1) in &self.terms {
            for (e2, c2) in &other.terms {
                let e: Vec<usize> = e1.iter().zip(e2).map(|(a, b)| a + b).collect();
                out.add_term(e, c1.clone() * c2.clone());
            }
        }
        out
    }

    /// Coefficient at t^λ; a shorter λ is padded with zeros, a longer one must end in zeros.
    pub fn coefficient(&self, lambda: &MultiIndex) -> T {
        let mut e = lambda.entries().to_vec();
        if e.len() > self.nvars {
            if e[self.nvars..].iter().any(|&x| x != 0) {
                return T::zero();
            }
            e.truncate(self.nvars);
        }
        e.resize(self.nvars, 0);
        self.terms.get(&e).cloned().unwrap_or_else(T::zero)
    }

    pub fn terms(&self) -> impl Iterator<Item = (MultiIndex, &T)> {
        self.terms.iter().map(|(e, c)| (MultiIndex::new(e.clone()), c))
    }

    pub fn total_degree(&self) -> usize {
        self.terms.keys().map(|e| e.iter().sum()).max().unwrap_or(0)
    }
}

impl<T: Scalar> fmt::Display for MultiPolynomial<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.terms.is_empty() {
            return write!(f, "0");
        }
        let mut first = true;
        for (e, c) in &self.terms {
            if !first {
                write!(f, " + ")?;
            }
            first = false;
            write!(f, "{}", c.render())?;
            for (i, p) in e.iter().enumerate() {
                match p {
                    0 => {}
                    1 => write!(f, "*t{}", i + 1)?,
                    _ => write!(f, "*t{}^{p}", i + 1)?,
                }
            }
        }
        Ok(())
    }
}

fn common_dim<T: Scalar>(mats: &[&SquareMatrix<T>]) -> Result<usize> {
    let m = mats.first().map(|a| a.dim()).ok_or_else(|| Error::DimensionMismatch("empty matrix tuple".into()))?;
    if let Some(bad) = mats.iter().find(|a| a.dim() != m) {
        return Err(Error::DimensionMismatch(format!("tuple mixes {m}x{m} and {0}x{0}", bad.dim())));
    }
    Ok(m)
}

/// Full expansion of det(I + t₁A₁ + … + t_kA_k) over polynomial entries (k ≤ 4, m ≤ 8).
pub fn det_expand<T: Scalar>(mats: &[SquareMatrix<T>]) -> Result<MultiPolynomial<T>> {
    let refs: Vec<&SquareMatrix<T>> = mats.iter().collect();
    let m = common_dim(&refs)?;
    let k = mats.len();
    if k > 4 || m > 8 {
        return Err(Error::ScaleLimit(format!("det_expand supports k <= 4 and m <= 8, got k = {k}, m = {m}")));
    }
    let entry = |i: usize, j: usize| {
        let mut p = if i == j { MultiPolynomial::constant(k, T::one()) } else { MultiPolynomial::zero(k) };
        for (v, a) in mats.iter().enumerate() {
            p = p.add(&MultiPolynomial::linear(k, v, a.get(i, j).clone()));
        }
        p
    };
    let cells: Vec<Vec<MultiPolynomial<T>>> = (0..m).map(|i| (0..m).map(|j| entry(i, j)).collect()).collect();
    // Laplace expansion over column subsets: minor[S] is the determinant of rows 0..|S| on columns S.
    let mut minor: Vec<MultiPolynomial<T>> = vec![MultiPolynomial::zero(k); 1 << m];
    minor[0] = MultiPolynomial::constant(k, T::one());
    for s in 1usize..(1 << m) {
        let r = s.count_ones() as usize - 1;
        let mut acc = MultiPolynomial::zero(k);
        for j in 0..m {
            if s & (1 << j) == 0 {
                continue;
            }
            let rest = s & !(1 << j);
            let higher = (s >> (j + 1)).count_ones();
            let term = cells[r][j].mul(&minor[rest]);
            acc = if higher % 2 == 0 { acc.add(&term) } else { acc.add(&term.scale(&-T::one())) };
        }
        minor[s] = acc;
    }
    Ok(minor.pop().expect("nonempty"))
}

fn combinations(n: usize, r: usize) -> Vec<Vec<usize>> {
    fn rec(start: usize, n: usize, r: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if cur.len() == r {
            out.push(cur.clone());
            return;
        }
        for i in start..n {
            if n - i < r - cur.len() {
                break;
            }
            cur.push(i);
            rec(i + 1, n, r, cur, out);
            cur.pop();
        }
    }
    let mut out = Vec::new();
    rec(0, n, r, &mut Vec::with_capacity(r), &mut out);
    out
}

/// σ_λ(A₁,…,A_k) by summing, over row subsets S with |S| = |λ| and assignments of the rows of S
/// to the matrices with multiplicities λ, the principal minor built from the assigned rows.
pub fn sigma<T: Scalar>(mats: &[SquareMatrix<T>], lambda: &MultiIndex) -> Result<T> {
    let refs: Vec<&SquareMatrix<T>> = mats.iter().collect();
    sigma_refs(&refs, lambda)
}

fn sigma_refs<T: Scalar>(mats: &[&SquareMatrix<T>], lambda: &MultiIndex) -> Result<T> {
    let m = common_dim(mats)?;
    if lambda.len() != mats.len() {
        return Err(Error::DimensionMismatch(format!(
            "multi-index {lambda} has length {} for {} matrices",
            lambda.len(),
            mats.len()
        )));
    }
    let s = lambda.total();
    if s > m {
        return Ok(T::zero());
    }
    if s == 0 {
        return Ok(T::one());
    }
    let mut counts = lambda.entries().to_vec();
    if counts.iter().zip(mats).any(|(&c, a)| c > 0 && a.is_zero()) {
        return Ok(T::zero());
    }
    let mut total = T::zero();
    let mut assign = vec![0usize; s];
    for rows in combinations(m, s) {
        assign_rows(mats, &rows, 0, &mut counts, &mut assign, &mut total);
    }
    Ok(total)
}

fn assign_rows<T: Scalar>(
    mats: &[&SquareMatrix<T>],
    rows: &[usize],
    pos: usize,
    counts: &mut [usize],
    assign: &mut [usize],
    total: &mut T,
) {
    if pos == rows.len() {
        let s = rows.len();
        let minor = SquareMatrix::from_fn(s, |p, q| mats[assign[p]].get(rows[p], rows[q]).clone());
        let d = minor.det();
        *total = total.clone() + d;
        return;
    }
    for i in 0..counts.len() {
        if counts[i] == 0 {
            continue;
        }
        counts[i] -= 1;
        assign[pos] = i;
        assign_rows(mats, rows, pos + 1, counts, assign, total);
        counts[i] += 1;
    }
}

/// σ_k(A) of a single matrix.
pub fn sigma_k<T: Scalar>(a: &SquareMatrix<T>, k: usize) -> T {
    sigma_refs(&[a], &MultiIndex::single(k)).expect("single matrix")
}

/// Newton transformation T_k(A) by the recursion T_k = σ_k(A) I − A T_{k−1}.
pub fn newton_transform<T: Scalar>(a: &SquareMatrix<T>, k: usize) -> Result<SquareMatrix<T>> {
    let m = a.dim();
    if k > m {
        return Err(Error::OutOfRange(format!("Newton transform T_{k} of a {m}x{m} matrix")));
    }
    let id = SquareMatrix::identity(m);
    let mut t = id.clone();
    for j in 1..=k {
        t = id.scale(&sigma_k(a, j)).sub(&a.mul(&t)?)?;
    }
    Ok(t)
}

/// Newton transformation by the alternating sum Σ_j (−1)^j σ_{k−j}(A) A^j.
pub fn newton_transform_explicit<T: Scalar>(a: &SquareMatrix<T>, k: usize) -> Result<SquareMatrix<T>> {
    let m = a.dim();
    if k > m {
        return Err(Error::OutOfRange(format!("Newton transform T_{k} of a {m}x{m} matrix")));
    }
    let mut out = SquareMatrix::zeros(m);
    let mut power = SquareMatrix::identity(m);
    for j in 0..=k {
        let mut c = sigma_k(a, k - j);
        if j % 2 == 1 {
            c = -c;
        }
        out = out.add(&power.scale(&c))?;
        power = power.mul(a)?;
    }
    Ok(out)
}

/// σ_{k,l}(B, C) through σ_k(B)σ_l(C) − Σ_{i≥1} σ_{k−i,l−i,i}(B, C, BC).
pub fn sigma_pair<T: Scalar>(b: &SquareMatrix<T>, c: &SquareMatrix<T>, k: usize, l: usize) -> Result<T> {
    common_dim(&[b, c])?;
    if k + l > b.dim() {
        return Ok(T::zero());
    }
    if k == 0 {
        return Ok(sigma_k(c, l));
    }
    if l == 0 {
        return Ok(sigma_k(b, k));
    }
    let bc = b.mul(c)?;
    let mut v = sigma_k(b, k) * sigma_k(c, l);
    for i in 1..=k.min(l) {
        v = v - sigma_refs(&[b, c, &bc], &MultiIndex::new(vec![k - i, l - i, i]))?;
    }
    Ok(v)
}

/// tr(T_k(B) C), the l = 1 case of [`sigma_pair`].
pub fn newton_trace<T: Scalar>(b: &SquareMatrix<T>, c: &SquareMatrix<T>, k: usize) -> Result<T> {
    common_dim(&[b, c])?;
    if k >= b.dim() {
        return Ok(T::zero());
    }
    Ok(newton_transform(b, k)?.mul(c)?.trace())
}

/// Alternating trace sum Σ_i (−1)^i σ_{k−i}(B) tr(B^i C).
pub fn newton_trace_sum<T: Scalar>(b: &SquareMatrix<T>, c: &SquareMatrix<T>, k: usize) -> Result<T> {
    common_dim(&[b, c])?;
    let mut acc = T::zero();
    let mut bic = c.clone();
    for i in 0..=k {
        let term = sigma_k(b, k - i) * bic.trace();
        acc = if i % 2 == 0 { acc + term } else { acc - term };
        bic = b.mul(&bic)?;
    }
    Ok(acc)
}

fn check_rank_one<T: Scalar>(a: &SquareMatrix<T>, what: &str) -> Result<()> {
    if a.has_rank_at_most_one(1e-12) {
        Ok(())
    } else {
        Err(Error::RankViolation(format!("{what} has rank > 1")))
    }
}

/// σ_k(C + A) for rank A ≤ 1 as σ_k(C) + tr(T_{k−1}(C) A).
pub fn sigma_rank_one_update<T: Scalar>(c: &SquareMatrix<T>, a: &SquareMatrix<T>, k: usize) -> Result<T> {
    common_dim(&[c, a])?;
    check_rank_one(a, "update matrix")?;
    let m = c.dim();
    if k == 0 {
        return Ok(T::one());
    }
    if k > m {
        return Ok(T::zero());
    }
    Ok(sigma_k(c, k) + newton_transform(c, k - 1)?.mul(a)?.trace())
}

/// σ_k(C + D + A₁ + … + A_s) by the telescoping formula with rank-one A_i.
pub fn sigma_sum_decomposition<T: Scalar>(
    c: &SquareMatrix<T>,
    d: &SquareMatrix<T>,
    rank_ones: &[SquareMatrix<T>],
    k: usize,
) -> Result<T> {
    let mut all = vec![c, d];
    all.extend(rank_ones.iter());
    common_dim(&all)?;
    for (i, a) in rank_ones.iter().enumerate() {
        check_rank_one(a, &format!("rank-one term {i}"))?;
    }
    let m = c.dim();
    if k == 0 {
        return Ok(T::one());
    }
    if k > m {
        return Ok(T::zero());
    }
    let mut v = sigma_k(c, k);
    for j in 1..=k {
        v = v + sigma_refs(&[c, d], &MultiIndex::new(vec![k - j, j]))?;
    }
    let mut base = c.add(d)?;
    for a in rank_ones {
        v = v + newton_transform(&base, k - 1)?.mul(a)?.trace();
        base = base.add(a)?;
    }
    Ok(v)
}

/// First K+1 Taylor coefficients of det(I + tB₁ + t²B₂ + …); missing B_i are zero.
pub fn det_series_coefficients<T: Scalar>(bs: &[SquareMatrix<T>], kmax: usize) -> Result<Vec<T>> {
    let refs: Vec<&SquareMatrix<T>> = bs.iter().collect();
    let m = common_dim(&refs)?;
    let zero = SquareMatrix::zeros(m);
    let mut out = vec![T::one()];
    for k in 1..=kmax {
        let tuple: Vec<&SquareMatrix<T>> = (0..k).map(|i| bs.get(i).unwrap_or(&zero)).collect();
        let mut acc = T::zero();
        for lambda in MultiIndex::with_weight(k, k) {
            if lambda.total() > m {
                continue;
            }
            acc = acc + sigma_refs(&tuple, &lambda)?;
        }
        out.push(acc);
    }
    Ok(out)
}

/// det(I_m + Σ C_i P_iᵗ) through the k×k determinant det(I_k + G), G_ij = C_iᵗ P_j.
pub fn det_rank_one_sum<T: Scalar>(cs: &[Vec<T>], ps: &[Vec<T>]) -> Result<T> {
    if cs.len() != ps.len() {
        return Err(Error::DimensionMismatch(format!("{} column vectors vs {} row vectors", cs.len(), ps.len())));
    }
    let k = cs.len();
    if k == 0 {
        return Ok(T::one());
    }
    if k > 4 {
        return Err(Error::ScaleLimit(format!("at most 4 rank-one terms, got {k}")));
    }
    let m = cs[0].len();
    if cs.iter().chain(ps).any(|v| v.len() != m) {
        return Err(Error::DimensionMismatch("vectors of unequal length".into()));
    }
    let dot = |u: &[T], v: &[T]| u.iter().zip(v).fold(T::zero(), |s, (a, b)| s + a.clone() * b.clone());
    let g = SquareMatrix::from_fn(k, |i, j| dot(&cs[i], &ps[j]) + if i == j { T::one() } else { T::zero() });
    Ok(g.det())
}

/// det(I_m + Σ C_i P_iᵗ) formed directly.
pub fn det_rank_one_sum_direct<T: Scalar>(cs: &[Vec<T>], ps: &[Vec<T>]) -> Result<T> {
    if cs.len() != ps.len() {
        return Err(Error::DimensionMismatch(format!("{} column vectors vs {} row vectors", cs.len(), ps.len())));
    }
    let Some(m) = cs.first().map(|c| c.len()) else { return Ok(T::one()) };
    let mut acc = SquareMatrix::identity(m);
    for (c, p) in cs.iter().zip(ps) {
        acc = acc.add(&SquareMatrix::outer(c, p)?)?;
    }
    Ok(acc.det())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scalar::{ratio, Rational};

    fn q(rows: &[&[i64]]) -> SquareMatrix<Rational> {
        SquareMatrix::from_rows(rows.iter().map(|r| r.iter().map(|&v| ratio(v, 1)).collect()).collect()).unwrap()
    }

    fn diag(d: &[i64]) -> SquareMatrix<Rational> {
        SquareMatrix::diag(&d.iter().map(|&v| ratio(v, 1)).collect::<Vec<_>>())
    }

    #[test]
    fn expansion_of_identity_is_binomial() {
        let p = det_expand(&[SquareMatrix::<Rational>::identity(3)]).unwrap();
        for (k, c) in [1, 3, 3, 1].iter().enumerate() {
            assert_eq!(p.coefficient(&MultiIndex::single(k)), ratio(*c, 1));
        }
        assert_eq!(p.total_degree(), 3);
    }

    #[test]
    fn expansion_of_diagonal() {
        let p = det_expand(&[diag(&[1, 2])]).unwrap();
        assert_eq!(p.to_string(), "1 + 3*t1 + 2*t1^2");
    }

    #[test]
    fn mixed_coefficient_of_two_diagonals() {
        let p = det_expand(&[SquareMatrix::identity(3), diag(&[1, 2, 0])]).unwrap();
        assert_eq!(p.coefficient(&MultiIndex::new(vec![1, 1])), ratio(6, 1));
    }

    #[test]
    fn frozen_sigma_values() {
        assert_eq!(sigma(&[SquareMatrix::<Rational>::identity(3)], &MultiIndex::single(1)).unwrap(), ratio(3, 1));
        let b = diag(&[1, 2]);
        let c = q(&[&[1, 1], &[0, 1]]);
        assert_eq!(sigma(&[b, c], &MultiIndex::new(vec![1, 1])).unwrap(), ratio(3, 1));
        let v = sigma(&[SquareMatrix::identity(3), diag(&[1, 2, 0])], &MultiIndex::new(vec![1, 1])).unwrap();
        assert_eq!(v, ratio(6, 1));
    }

    #[test]
    fn degree_above_dimension_is_zero() {
        assert_eq!(sigma_k(&diag(&[1, 2]), 3), ratio(0, 1));
    }

    #[test]
    fn index_length_must_match_tuple() {
        assert!(sigma(&[diag(&[1, 2])], &MultiIndex::new(vec![1, 0])).is_err());
        assert!(sigma(&[diag(&[1, 2]), diag(&[1, 2, 3])], &MultiIndex::new(vec![1, 0])).is_err());
    }

    #[test]
    fn newton_examples() {
        let a = diag(&[1, 2]);
        assert_eq!(newton_transform(&a, 0).unwrap(), SquareMatrix::identity(2));
        assert_eq!(newton_transform(&a, 1).unwrap(), diag(&[2, 1]));
        assert!(newton_transform(&a, 2).unwrap().is_zero());
        assert!(newton_transform(&a, 3).is_err());
    }

    #[test]
    fn rank_one_update_off_diagonal() {
        let c = diag(&[1, 2, 3]);
        let mut a = SquareMatrix::zeros(3);
        a.set(0, 1, ratio(1, 1));
        assert_eq!(sigma_rank_one_update(&c, &a, 2).unwrap(), ratio(11, 1));
        assert!(sigma_rank_one_update(&c, &SquareMatrix::identity(3), 2).is_err());
    }

    #[test]
    fn rank_one_sum_displayed_forms() {
        let c1 = vec![ratio(1, 1), ratio(2, 1), ratio(0, 1)];
        let p1 = vec![ratio(3, 1), ratio(-1, 1), ratio(1, 2)];
        let c2 = vec![ratio(0, 1), ratio(1, 3), ratio(1, 1)];
        let p2 = vec![ratio(2, 1), ratio(1, 1), ratio(-1, 1)];
        let dot = |u: &[Rational], v: &[Rational]| u.iter().zip(v).fold(ratio(0, 1), |s, (a, b)| s + a * b);
        let one = det_rank_one_sum(&[c1.clone()], &[p1.clone()]).unwrap();
        assert_eq!(one, ratio(1, 1) + dot(&c1, &p1));
        let two = det_rank_one_sum(&[c1.clone(), c2.clone()], &[p1.clone(), p2.clone()]).unwrap();
        let expected = ratio(1, 1) + dot(&c1, &p1) + dot(&c2, &p2) + dot(&c1, &p1) * dot(&c2, &p2)
            - dot(&c1, &p2) * dot(&c2, &p1);
        assert_eq!(two, expected);
        assert_eq!(two, det_rank_one_sum_direct(&[c1, c2], &[p1, p2]).unwrap());
    }

    #[test]
    fn weight_enumeration() {
        let w3 = MultiIndex::with_weight(3, 3);
        let got: Vec<Vec<usize>> = w3.iter().map(|l| l.entries().to_vec()).collect();
        assert_eq!(got, vec![vec![0, 0, 1], vec![1, 1, 0], vec![3, 0, 0]]);
        assert!(w3.iter().all(|l| l.weighted() == 3));
    }

    #[test]
    fn oracle_limits() {
        let big = SquareMatrix::<Rational>::identity(9);
        assert!(matches!(det_expand(&[big]), Err(Error::ScaleLimit(_))));
    }
}
