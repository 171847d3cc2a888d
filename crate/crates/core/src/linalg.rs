//! Dense linear-algebra helpers shared by the analytic modules.

use nalgebra::{Complex, DMatrix, DVector};

use crate::scalar::Real;

/// Largest singular value. Zero for empty matrices.
pub fn spectral_norm<T: Real>(m: &DMatrix<T>) -> T {
    if m.is_empty() {
        return T::zero();
    }
    m.singular_values().iter().fold(T::zero(), |acc, &s| acc.max(s))
}

/// Singular values in descending order.
pub fn singular_values_desc<T: Real>(m: &DMatrix<T>) -> Vec<T> {
    if m.is_empty() {
        return Vec::new();
    }
    let mut sv: Vec<T> = m.singular_values().iter().copied().collect();
    sv.sort_by(|a, b| b.partial_cmp(a).expect("finite singular values"));
    sv
}

/// Number of entries of a descending sequence strictly above `rel * max`.
pub fn numerical_rank<T: Real>(sv_desc: &[T], rel: T) -> usize {
    let Some(&top) = sv_desc.first() else {
        return 0;
    };
    if top <= T::zero() {
        return 0;
    }
    let cut = rel * top;
    sv_desc.iter().filter(|&&s| s > cut).count()
}

/// Thin SVD split of the left singular vectors at a relative threshold.
pub struct LeftSplit<T: Real> {
    /// Orthonormal basis of the numerical column space.
    pub range: DMatrix<T>,
    /// Orthonormal basis of the numerical left null space.
    pub null: DMatrix<T>,
    pub singular_values: Vec<T>,
}

/// Splits `R^{nrows}` into the column space of `m` and its orthogonal
/// complement, counting singular values above `rel * sigma_max` as nonzero.
pub fn left_split<T: Real>(m: &DMatrix<T>, rel: T) -> LeftSplit<T> {
    let n = m.nrows();
    if m.ncols() == 0 || n == 0 {
        return LeftSplit {
            range: DMatrix::zeros(n, 0),
            null: DMatrix::identity(n, n),
            singular_values: Vec::new(),
        };
    }
    // Pad to square so that U spans all of R^n.
    let square = if m.ncols() < n {
        let mut p = DMatrix::zeros(n, n);
        p.view_mut((0, 0), (n, m.ncols())).copy_from(m);
        p
    } else {
        m.clone()
    };
    let svd = square.svd(true, false);
    let u = svd.u.expect("left singular vectors requested");
    let mut order: Vec<usize> = (0..svd.singular_values.len()).collect();
    order.sort_by(|&a, &b| {
        svd.singular_values[b]
            .partial_cmp(&svd.singular_values[a])
            .expect("finite singular values")
    });
    let mut sv: Vec<T> = order.iter().map(|&k| svd.singular_values[k]).collect();
    sv.truncate(m.ncols().min(n));
    let rank = numerical_rank(&sv, rel);
    let mut range = DMatrix::zeros(n, rank);
    for (dst, &src) in order.iter().take(rank).enumerate() {
        range.set_column(dst, &u.column(src));
    }
    // U may have fewer than n columns only if the input had fewer rows; the
    // padding above rules that out.
    let null_cols: Vec<usize> = order.iter().skip(rank).copied().collect();
    let mut null = DMatrix::zeros(n, null_cols.len());
    for (dst, &src) in null_cols.iter().enumerate() {
        null.set_column(dst, &u.column(src));
    }
    LeftSplit {
        range,
        null,
        singular_values: sv,
    }
}

/// Symmetric eigendecomposition with eigenvalues sorted in descending order.
pub fn symmetric_eigen_desc<T: Real>(m: &DMatrix<T>) -> (Vec<T>, DMatrix<T>) {
    let n = m.nrows();
    if n == 0 {
        return (Vec::new(), DMatrix::zeros(0, 0));
    }
    let eig = symmetrize(m).symmetric_eigen();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| {
        eig.eigenvalues[b]
            .partial_cmp(&eig.eigenvalues[a])
            .expect("finite eigenvalues")
    });
    let values = order.iter().map(|&k| eig.eigenvalues[k]).collect();
    let mut vectors = DMatrix::zeros(n, n);
    for (dst, &src) in order.iter().enumerate() {
        vectors.set_column(dst, &eig.eigenvectors.column(src));
    }
    (values, vectors)
}

/// Eigenvalues of a symmetric matrix, descending.
pub fn symmetric_eigenvalues_desc<T: Real>(m: &DMatrix<T>) -> Vec<T> {
    if m.nrows() == 0 {
        return Vec::new();
    }
    let mut v: Vec<T> = symmetrize(m).symmetric_eigenvalues().iter().copied().collect();
    v.sort_by(|a, b| b.partial_cmp(a).expect("finite eigenvalues"));
    v
}

pub fn symmetrize<T: Real>(m: &DMatrix<T>) -> DMatrix<T> {
    (m + m.transpose()) * T::lit(0.5)
}

/// `lambda_max / lambda_min` of a symmetric matrix; infinite when the
/// smallest eigenvalue is not positive.
pub fn spd_condition_number<T: Real>(m: &DMatrix<T>) -> T {
    let ev = symmetric_eigenvalues_desc(m);
    match (ev.first(), ev.last()) {
        (Some(&hi), Some(&lo)) if lo > T::zero() => hi / lo,
        (None, _) => T::one(),
        _ => T::max_value().unwrap_or_else(|| T::lit(f64::MAX)),
    }
}

/// Square root and inverse square root of a symmetric positive semi-definite
/// matrix computed by orthogonal diagonalization.
pub struct SymmetricRoots<T: Real> {
    pub sqrt: DMatrix<T>,
    pub inv_sqrt: Option<DMatrix<T>>,
    pub eigenvalues: Vec<T>,
}

/// Eigenvalues below `clamp_rel * lambda_max` are raised to that floor
/// before rooting. The inverse root is only formed when every eigenvalue
/// exceeds `inv_rel * lambda_max`.
pub fn symmetric_roots<T: Real>(m: &DMatrix<T>, clamp_rel: T, inv_rel: T) -> SymmetricRoots<T> {
    let n = m.nrows();
    let (values, vectors) = symmetric_eigen_desc(m);
    let top = values.first().copied().unwrap_or_else(T::zero).max(T::zero());
    let floor = clamp_rel * top;
    let roots: Vec<T> = values.iter().map(|&l| l.max(floor).sqrt()).collect();
    let sqrt = scale_columns_outer(&vectors, &roots);
    let invertible = n > 0 && values.iter().all(|&l| l > inv_rel * top) && top > T::zero();
    let inv_sqrt = invertible.then(|| {
        let inv: Vec<T> = roots.iter().map(|&r| T::one() / r).collect();
        scale_columns_outer(&vectors, &inv)
    });
    SymmetricRoots {
        sqrt,
        inv_sqrt,
        eigenvalues: values,
    }
}

/// `V diag(d) V^T`.
fn scale_columns_outer<T: Real>(v: &DMatrix<T>, d: &[T]) -> DMatrix<T> {
    let mut scaled = v.clone();
    for (j, &dj) in d.iter().enumerate() {
        scaled.column_mut(j).scale_mut(dj);
    }
    symmetrize(&(scaled * v.transpose()))
}

/// Columns `c, Ac, ..., A^{count-1} c`.
pub fn krylov_matrix<T: Real>(a: &DMatrix<T>, c: &DVector<T>, count: usize) -> DMatrix<T> {
    let n = c.len();
    let mut out = DMatrix::zeros(n, count);
    if count == 0 {
        return out;
    }
    out.set_column(0, c);
    let mut v = c.clone();
    for k in 1..count {
        v = a * &v;
        out.set_column(k, &v);
    }
    out
}

/// Sine of the largest principal angle between the spans of two matrices with
/// orthonormal columns and equal column counts.
pub fn max_principal_angle_sin<T: Real>(q1: &DMatrix<T>, q2: &DMatrix<T>) -> T {
    if q2.ncols() == 0 {
        return T::zero();
    }
    let residual = q2 - q1 * (q1.transpose() * q2);
    spectral_norm(&residual).min(T::one())
}

/// Eigenvalues of a general real square matrix.
pub fn complex_eigenvalues<T: Real>(a: &DMatrix<T>) -> Vec<Complex<T>> {
    if a.nrows() == 0 {
        return Vec::new();
    }
    a.complex_eigenvalues().iter().copied().collect()
}

pub fn modulus<T: Real>(z: Complex<T>) -> T {
    z.re.hypot(z.im)
}

/// Largest eigenvalue modulus.
pub fn spectral_radius<T: Real>(a: &DMatrix<T>) -> T {
    complex_eigenvalues(a)
        .iter()
        .fold(T::zero(), |acc, &z| acc.max(modulus(z)))
}

/// Entrywise max-norm.
pub fn max_abs<T: Real>(m: &DMatrix<T>) -> T {
    m.iter().fold(T::zero(), |acc, &x| acc.max(x.abs()))
}
