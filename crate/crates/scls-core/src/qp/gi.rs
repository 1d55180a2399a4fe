//! Dual active-set solver core for strictly convex quadratic programs,
//! after Goldfarb and Idnani (1983).
//!
//! Internal form:
//!
//! ```text
//!     minimize     1/2 x' Q x + c' x
//!     subject to   A x  = b   (first meq rows)
//!                  A x <= b   (remaining rows)
//! ```
//!
//! Matrices are dense slices: `qmat` is n*n (symmetric, so storage order is
//! immaterial), `amat` holds one constraint per chunk of n coefficients.
//! The triangular workspace uses column-major storage, column j at
//! `mat[j*n..(j+1)*n]`.

/// Cholesky pivot floor; diagonals at or below it are treated as a failed
/// factorization.
pub const PIVOT_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GiError {
    NotPositiveDefinite,
    Infeasible,
}

#[derive(Debug, Clone)]
pub struct GiSolution {
    pub x: Vec<f64>,
    pub objective: f64,
    pub lagrange: Vec<f64>,
    pub active: Vec<usize>,
    pub iterations: usize,
}

fn axpy(a: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += a * xi;
    }
}

fn dot(x: &[f64], y: &[f64]) -> f64 {
    x.iter().zip(y).map(|(a, b)| a * b).sum()
}

/// In-place upper Cholesky: writes R with Q = R'R into the upper triangle.
fn cholesky(mat: &mut [f64], n: usize) -> Result<(), GiError> {
    for j in 0..n {
        for k in 0..j {
            mat[k + j * n] = (mat[k + j * n] - dot(&mat[k * n..k * n + k], &mat[j * n..j * n + k]))
                / mat[k + k * n];
        }
        let s = mat[j + j * n] - dot(&mat[j * n..j * n + j], &mat[j * n..j * n + j]);
        if s <= PIVOT_FLOOR {
            return Err(GiError::NotPositiveDefinite);
        }
        mat[j + j * n] = s.sqrt();
    }
    Ok(())
}

/// Solve R x = b for upper triangular R, in place.
fn solve_upper(mat: &[f64], vec: &mut [f64]) {
    let n = vec.len();
    for k in (0..n).rev() {
        vec[k] /= mat[k + k * n];
        let vk = vec[k];
        axpy(-vk, &mat[k * n..k * n + k], &mut vec[..k]);
    }
}

/// Solve R' x = b for upper triangular R, in place.
fn solve_upper_transpose(mat: &[f64], vec: &mut [f64]) {
    let n = vec.len();
    for k in 0..n {
        vec[k] -= dot(&mat[k * n..k * n + k], &vec[..k]);
        vec[k] /= mat[k + k * n];
    }
}

/// Invert an upper triangular matrix in place.
fn invert_upper(mat: &mut [f64], n: usize) {
    for k in 0..n {
        mat[k + k * n] = 1.0 / mat[k + k * n];
        let scale = -mat[k + k * n];
        for v in &mut mat[k * n..k * n + k] {
            *v *= scale;
        }
        let (left, right) = mat.split_at_mut(n + k * n);
        for j in 0..n - k - 1 {
            axpy(
                right[k + j * n],
                &left[k * n..k * n + k],
                &mut right[j * n..j * n + k],
            );
            right[k + j * n] *= left[k + k * n];
        }
    }
}

fn hypot(a: f64, b: f64) -> f64 {
    let (lo, hi) = if a < b { (a, b) } else { (b, a) };
    let r = lo / hi;
    hi * (1.0 + r * r).sqrt()
}

fn adjacent_columns(slice: &mut [f64], split: usize, len: usize) -> (&mut [f64], &mut [f64]) {
    let (left, right) = slice.split_at_mut(split);
    (&mut left[split - len..], &mut right[..len])
}

/// Givens-rotate `vec` so its entries past index `r` vanish, applying the
/// same rotations to the columns of `mat`.
fn qr_insert(r: usize, vec: &mut [f64], mat: &mut [f64]) {
    let n = vec.len();
    for i in (r..n).rev() {
        if vec[i] == 0.0 {
            continue;
        }
        let (left, right) = adjacent_columns(mat, i * n, n);
        if vec[i - 1] == 0.0 {
            vec[i - 1] = vec[i];
            left.swap_with_slice(right);
        } else {
            let h = hypot(vec[i - 1].abs(), vec[i].abs()).copysign(vec[i - 1]);
            let gc = vec[i - 1] / h;
            let gs = vec[i] / h;
            let nu = vec[i] / (vec[i - 1] + h);
            vec[i - 1] = h;
            for (li, ri) in left.iter_mut().zip(right.iter_mut()) {
                let t = gc * *li + gs * *ri;
                *ri = nu * (*li + t) - *ri;
                *li = t;
            }
        }
    }
}

/// Drop column `col` (1-based) of the packed upper triangular R and restore
/// triangularity, applying the rotations to the columns of `qmat`.
fn qr_delete(col: usize, qmat: &mut [f64], rmat: &mut [f64], n: usize, r: usize) {
    for i in col..r {
        let di = i * (i + 1) / 2;
        let l = di + i;
        if rmat[l] == 0.0 {
            continue;
        }
        let (left, right) = adjacent_columns(qmat, i * n, n);
        if rmat[l - 1] == 0.0 {
            let mut ind = l;
            for j in i + 1..=r {
                rmat.swap(ind - 1, ind);
                ind += j;
            }
            left.swap_with_slice(right);
        } else {
            let h = hypot(rmat[l - 1].abs(), rmat[l].abs()).copysign(rmat[l - 1]);
            let gc = rmat[l - 1] / h;
            let gs = rmat[l] / h;
            let nu = rmat[l] / (rmat[l - 1] + h);
            let mut ind = l;
            for j in i + 1..=r {
                let t = gc * rmat[ind - 1] + gs * rmat[ind];
                rmat[ind] = nu * (rmat[ind - 1] + t) - rmat[ind];
                rmat[ind - 1] = t;
                ind += j;
            }
            for (li, ri) in left.iter_mut().zip(right.iter_mut()) {
                let t = gc * *li + gs * *ri;
                *ri = nu * (*li + t) - *ri;
                *li = t;
            }
        }
        let (left, right) = adjacent_columns(rmat, di, i);
        left.swap_with_slice(right);
    }
}

/// Solve with `qmat` holding the quadratic term; it is factorized here.
pub fn solve(
    qmat: &mut [f64],
    cvec: &[f64],
    amat: &[f64],
    bvec: &[f64],
    meq: usize,
) -> Result<GiSolution, GiError> {
    let n = cvec.len();
    cholesky(qmat, n)?;
    let mut sol = cvec.to_vec();
    for v in sol.iter_mut() {
        *v = -*v;
    }
    solve_upper_transpose(qmat, &mut sol);
    solve_upper(qmat, &mut sol);
    invert_upper(qmat, n);
    solve_prepared(qmat, sol, cvec, amat, bvec, meq)
}

/// Solve with `jmat` already holding the inverse Cholesky factor L^-T
/// (upper triangular, n*n, column-major, lower triangle zero). Used by the
/// fast permutation path where the quadratic term is factorized once.
pub fn solve_factorized(
    jmat: &mut [f64],
    cvec: &[f64],
    amat: &[f64],
    bvec: &[f64],
    meq: usize,
) -> Result<GiSolution, GiError> {
    let n = cvec.len();
    // unconstrained minimum: x = -Q^-1 c = -J J' c
    let mut sol = cvec.to_vec();
    for v in sol.iter_mut() {
        *v = -*v;
    }
    // Q^-1 = J J', so apply J' then J
    let mut tmp = vec![0.0; n];
    for j in 0..n {
        tmp[j] = dot(&jmat[j * n..j * n + j + 1], &sol[..j + 1]);
    }
    let mut out = vec![0.0; n];
    for i in 0..n {
        let mut acc = 0.0;
        for j in i..n {
            acc += jmat[i + j * n] * tmp[j];
        }
        out[i] = acc;
    }
    solve_prepared(jmat, out, cvec, amat, bvec, meq)
}

/// Core iteration. `jmat` holds J = L^-T on entry (it is rotated in place),
/// `sol` the unconstrained minimum.
fn solve_prepared(
    jmat: &mut [f64],
    mut sol: Vec<f64>,
    cvec: &[f64],
    amat: &[f64],
    bvec: &[f64],
    meq: usize,
) -> Result<GiSolution, GiError> {
    let n = cvec.len();
    let q = bvec.len();
    let r_cap = n.min(q);

    // zero the lower triangle of J
    for j in 0..n {
        for i in j + 1..n {
            jmat[i + j * n] = 0.0;
        }
    }

    let mut obj = dot(cvec, &sol) / 2.0;

    // constraint norms for the pivoting rule
    let norms: Vec<f64> = amat.chunks_exact(n).map(|a| dot(a, a).sqrt()).collect();

    let mut dv = vec![0.0; n];
    let mut zv = vec![0.0; n];
    let mut rv_mem = vec![0.0; r_cap];
    let mut rmat = vec![0.0; r_cap * (r_cap + 1) / 2];
    let mut slacks = vec![0.0; q];
    let mut active: Vec<usize> = Vec::with_capacity(r_cap);
    let mut multipliers: Vec<f64> = Vec::with_capacity(r_cap);
    let mut iterations = 0usize;

    loop {
        for ((arow, bi), s) in amat.chunks_exact(n).zip(bvec).zip(slacks.iter_mut()) {
            *s = bi - dot(&sol, arow);
        }
        for &i in &active {
            slacks[i] = 0.0;
        }

        // most violated constraint; ties broken by lowest index
        let mut iadd = q;
        let mut worst = 0.0;
        for (i, (&s, &norm)) in slacks.iter().zip(&norms).enumerate() {
            if s < -worst * norm - f64::EPSILON {
                iadd = i;
                worst = -s / norm;
            } else if i < meq && s > worst * norm + f64::EPSILON {
                iadd = i;
                worst = s / norm;
            }
        }
        if iadd == q {
            break;
        }
        iterations += 1;

        let arow = &amat[iadd * n..(iadd + 1) * n];
        let mut slack = slacks[iadd];
        let mut u = 0.0;
        let direction = slack.signum();

        loop {
            // dv = J' a
            for (j, d) in dv.iter_mut().enumerate() {
                *d = direction * dot(&jmat[j * n..(j + 1) * n], arow);
            }
            // zv = J2 d2: primal step direction
            zv.fill(0.0);
            for (j, &d) in dv.iter().enumerate().skip(active.len()) {
                axpy(d, &jmat[j * n..(j + 1) * n], &mut zv);
            }
            // rv = R^-1 d1: negative dual step direction
            let k = active.len();
            let rv = &mut rv_mem[..k];
            rv.copy_from_slice(&dv[..k]);
            for i in (0..k).rev() {
                let start = i * (i + 1) / 2;
                rv[i] /= rmat[start + i];
                let ri = rv[i];
                axpy(-ri, &rmat[start..start + i], &mut rv[..i]);
            }

            // largest dual step before a multiplier hits zero
            let mut idel = r_cap;
            let mut t1 = f64::INFINITY;
            for (i, ((&ui, &ri), &act)) in multipliers
                .iter()
                .zip(rv.iter())
                .zip(active.iter())
                .enumerate()
            {
                if act >= meq && ri > 0.0 {
                    let step = ui / ri;
                    if step < t1 {
                        t1 = step;
                        idel = i;
                    }
                }
            }

            // primal step that zeroes the new constraint's slack
            let (rate, t2) = if dot(&zv, &zv).abs() <= f64::EPSILON {
                (0.0, f64::INFINITY)
            } else {
                let zta = dot(&zv, arow);
                (zta.abs(), slack / zta)
            };
            if t1 == f64::INFINITY && t2 == f64::INFINITY {
                return Err(GiError::Infeasible);
            }

            let partial = t2 > t1;
            let step = if partial { t1 } else { t2 };

            axpy(step, &zv, &mut sol);
            obj += step * rate * (step / 2.0 + u);
            for (ui, &ri) in multipliers.iter_mut().zip(rv.iter()) {
                *ui -= step * ri;
            }
            u += step;

            if !partial {
                break;
            }

            // drop constraint idel from the active set
            qr_delete(
                idel + 1,
                jmat,
                &mut rmat[..active.len() * (active.len() + 1) / 2],
                n,
                active.len(),
            );
            multipliers.remove(idel);
            active.remove(idel);
            slack = bvec[iadd] - dot(&sol, arow);
        }

        multipliers.push(u);
        active.push(iadd);
        qr_insert(active.len(), &mut dv, jmat);
        let start = active.len() * (active.len() - 1) / 2;
        rmat[start..start + active.len()].copy_from_slice(&dv[..active.len()]);
    }

    let mut lagrange = vec![0.0; q];
    for (&i, &u) in active.iter().zip(&multipliers) {
        lagrange[i] = u;
    }

    Ok(GiSolution {
        x: sol,
        objective: obj,
        lagrange,
        active,
        iterations,
    })
}

/// Factorize a symmetric positive definite matrix, returning J = L^-T in
/// the column-major layout expected by [`solve_factorized`].
pub fn factorize(qmat: &mut [f64], n: usize) -> Result<(), GiError> {
    cholesky(qmat, n)?;
    invert_upper(qmat, n);
    for j in 0..n {
        for i in j + 1..n {
            qmat[i + j * n] = 0.0;
        }
    }
    Ok(())
}
