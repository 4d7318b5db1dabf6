//! Quasi-linear attention: unnormalized linear attention with activations
//! wrapping Q and K (and optionally the KᵀV product), plus a diagonal
//! self-term for the targets.
//!
//! Forward, with φ1 the inner and φ2 the outer activation:
//!
//! ```text
//! O[S] = φ1(Q[S]) φ2(φ1(K[S])ᵀ V[S])
//! O[T] = φ1(Q[T]) φ2(φ1(K[S])ᵀ V[S]) + Δ(φ1(Q[T]), φ1(K[T])) V[T]
//! ```
//!
//! Cost is Θ((n+m)d²); no n+m square buffer is ever allocated. The analytic
//! backward implements the derived gradient set for φ2 = Identity;
//! [`qla_backward_general`] extends it to any φ2 by chaining through the
//! d×d product and is validated against finite differences only.

use super::KernelError;
use crate::numerics::activation::{activation, activation_prime};
use crate::numerics::matrix::Matrix;
use crate::numerics::ActivationKind;
use rayon::prelude::*;

/// Q/K/V decomposed into source (user history, length n) and target
/// (candidate, length m) blocks sharing the embedding width d.
#[derive(Debug, Clone)]
pub struct SourceTargetSplit {
    pub qs: Matrix,
    pub qt: Matrix,
    pub ks: Matrix,
    pub kt: Matrix,
    pub vs: Matrix,
    pub vt: Matrix,
}

impl SourceTargetSplit {
    pub fn new(
        qs: Matrix,
        qt: Matrix,
        ks: Matrix,
        kt: Matrix,
        vs: Matrix,
        vt: Matrix,
    ) -> Result<Self, KernelError> {
        let d = qs.cols();
        let n = qs.rows();
        let m = qt.rows();
        for (name, mat, rows) in [
            ("qt", &qt, m),
            ("ks", &ks, n),
            ("kt", &kt, m),
            ("vs", &vs, n),
            ("vt", &vt, m),
        ] {
            if mat.cols() != d || mat.rows() != rows {
                return Err(KernelError::ShapeMismatch {
                    context: "SourceTargetSplit",
                    expected: format!("{name} as {rows}x{d}"),
                    found: mat.shape_str(),
                });
            }
        }
        Ok(Self { qs, qt, ks, kt, vs, vt })
    }

    /// Sources-only split (summarization layers have no targets).
    pub fn sources_only(qs: Matrix, ks: Matrix, vs: Matrix) -> Result<Self, KernelError> {
        let d = qs.cols();
        Self::new(qs, Matrix::zeros(0, d), ks, Matrix::zeros(0, d), vs, Matrix::zeros(0, d))
    }

    pub fn source_len(&self) -> usize {
        self.qs.rows()
    }

    pub fn target_len(&self) -> usize {
        self.qt.rows()
    }

    pub fn dim(&self) -> usize {
        self.qs.cols()
    }
}

/// Intermediates saved by the forward pass for the analytic backward.
///
/// `z_s` holds φ1(K[S])ᵀV[S] with φ2 already applied — the d×d orientation
/// that the forward multiplies against, which is the transpose of the usual
/// V[S]ᵀK[S] convention. `z_pre` keeps the pre-φ2 product when a non-identity
/// outer activation needs chaining.
#[derive(Debug, Clone)]
pub struct QlaSaved {
    pub z_s: Matrix,
    pub z_pre: Option<Matrix>,
    /// Diagonal of Δ(φ1(Q[T]), φ1(K[T])), length m.
    pub u_t: Vec<f64>,
    pub aq_s: Matrix,
    pub aq_t: Matrix,
    pub ak_s: Matrix,
    pub ak_t: Matrix,
    pub phi1: ActivationKind,
    pub phi2: ActivationKind,
}

/// Gradients with respect to the six split inputs.
#[derive(Debug, Clone)]
pub struct QlaGrads {
    pub d_qs: Matrix,
    pub d_qt: Matrix,
    pub d_ks: Matrix,
    pub d_kt: Matrix,
    pub d_vs: Matrix,
    pub d_vt: Matrix,
}

pub fn qla_forward(
    split: &SourceTargetSplit,
    phi1: ActivationKind,
    phi2: ActivationKind,
) -> (Matrix, Matrix, QlaSaved) {
    let aq_s = activation(phi1, &split.qs);
    let aq_t = activation(phi1, &split.qt);
    let ak_s = activation(phi1, &split.ks);
    let ak_t = activation(phi1, &split.kt);

    let z_pre = ak_s.matmul_ta(&split.vs);
    let z_s = activation(phi2, &z_pre);

    let o_s = aq_s.matmul(&z_s);
    let u_t = super::delta_diag(&aq_t, &ak_t).expect("target shapes validated");
    let o_t = aq_t.matmul(&z_s).add(&split.vt.scale_rows(&u_t));

    let saved = QlaSaved {
        z_s,
        z_pre: (phi2 != ActivationKind::Identity).then_some(z_pre),
        u_t,
        aq_s,
        aq_t,
        ak_s,
        ak_t,
        phi1,
        phi2,
    };
    (o_s, o_t, saved)
}

/// Analytic backward for the φ2 = Identity forward. Returns
/// `UnsupportedOuterActivation` when the saved pass used a non-identity
/// outer activation; use [`qla_backward_general`] for that case.
pub fn qla_backward(
    saved: &QlaSaved,
    split: &SourceTargetSplit,
    d_os: &Matrix,
    d_ot: &Matrix,
) -> Result<QlaGrads, KernelError> {
    if saved.phi2 != ActivationKind::Identity {
        return Err(KernelError::UnsupportedOuterActivation { phi2: saved.phi2 });
    }
    backward_impl(saved, split, d_os, d_ot)
}

/// Backward for any outer activation, chaining through the d×d product.
/// With an identity φ2 this coincides with [`qla_backward`].
pub fn qla_backward_general(
    saved: &QlaSaved,
    split: &SourceTargetSplit,
    d_os: &Matrix,
    d_ot: &Matrix,
) -> Result<QlaGrads, KernelError> {
    backward_impl(saved, split, d_os, d_ot)
}

fn backward_impl(
    saved: &QlaSaved,
    split: &SourceTargetSplit,
    d_os: &Matrix,
    d_ot: &Matrix,
) -> Result<QlaGrads, KernelError> {
    let (n, m, d) = (split.source_len(), split.target_len(), split.dim());
    if d_os.rows() != n || d_os.cols() != d {
        return Err(KernelError::ShapeMismatch {
            context: "qla_backward d_os",
            expected: format!("{n}x{d}"),
            found: d_os.shape_str(),
        });
    }
    if d_ot.rows() != m || d_ot.cols() != d {
        return Err(KernelError::ShapeMismatch {
            context: "qla_backward d_ot",
            expected: format!("{m}x{d}"),
            found: d_ot.shape_str(),
        });
    }

    let phi1 = saved.phi1;
    // x_t[i] = row-dot of dO[T] and V[T]: the target-diagonal chain weight.
    let x_t = super::delta_diag(d_ot, &split.vt)?;

    // Queries: dQ[S] = (dO[S] V[S]ᵀ φ(K[S])) ⊙ φ'(Q[S]). The stored z_s is
    // φ(K[S])ᵀV[S], so V[S]ᵀφ(K[S]) is its transpose.
    let d_qs = d_os.matmul_tb(&saved.z_s).hadamard(&activation_prime(phi1, &split.qs));
    let d_qt = d_ot
        .matmul_tb(&saved.z_s)
        .add(&saved.ak_t.scale_rows(&x_t))
        .hadamard(&activation_prime(phi1, &split.qt));

    // W := φ(Q)ᵀ dO over the concatenated sequence, d×d.
    let aq = Matrix::concat_rows(&[&saved.aq_s, &saved.aq_t]);
    let d_o = Matrix::concat_rows(&[d_os, d_ot]);
    let w = aq.matmul_ta(&d_o);

    // Chain through φ2 when the forward applied one; identity passes W as is.
    let d_z = match &saved.z_pre {
        None => w,
        Some(z_pre) => w.hadamard(&activation_prime(saved.phi2, z_pre)),
    };

    let d_ks = split.vs.matmul_tb(&d_z).hadamard(&activation_prime(phi1, &split.ks));
    let d_kt = saved
        .aq_t
        .hadamard(&activation_prime(phi1, &split.kt))
        .scale_rows(&x_t);
    let d_vs = saved.ak_s.matmul(&d_z);
    let d_vt = d_ot.scale_rows(&saved.u_t);

    Ok(QlaGrads { d_qs, d_qt, d_ks, d_kt, d_vs, d_vt })
}

/// Blockwise forward: accumulates φ1(K[S])ᵀV[S] over source tiles of
/// `block` rows in ascending tile order, then streams the query tiles.
/// For a fixed block size the result is reproducible bit for bit; across
/// block sizes it differs from the naive forward only by floating-point
/// summation reordering.
pub fn qla_forward_blockwise(
    split: &SourceTargetSplit,
    phi1: ActivationKind,
    phi2: ActivationKind,
    block: usize,
) -> (Matrix, Matrix, QlaSaved) {
    assert!(block >= 1, "block size must be >= 1");
    let (n, d) = (split.source_len(), split.dim());

    let ak_s = activation(phi1, &split.ks);

    // Tile partial sums are independent; compute them in parallel but fold
    // in ascending tile index so the reduction order is fixed.
    let tile_starts: Vec<usize> = (0..n).step_by(block).collect();
    let partials: Vec<Matrix> = tile_starts
        .par_iter()
        .map(|&start| {
            let end = (start + block).min(n);
            ak_s.slice_rows(start, end).matmul_ta(&split.vs.slice_rows(start, end))
        })
        .collect();
    let mut z_pre = Matrix::zeros(d, d);
    for p in &partials {
        z_pre.add_assign(p);
    }
    let z_s = activation(phi2, &z_pre);

    let aq_s = activation(phi1, &split.qs);
    let aq_t = activation(phi1, &split.qt);
    let ak_t = activation(phi1, &split.kt);

    // Query tiles: each output row depends only on its own query row, so
    // tiling the stream cannot change any bit of the result.
    let mut o_s = Matrix::zeros(n, d);
    for &start in &tile_starts {
        let end = (start + block).min(n);
        let tile = aq_s.slice_rows(start, end).matmul(&z_s);
        o_s.data_mut()[start * d..end * d].copy_from_slice(tile.data());
    }

    let u_t = super::delta_diag(&aq_t, &ak_t).expect("target shapes validated");
    let m = split.target_len();
    let mut o_t = Matrix::zeros(m, d);
    for start in (0..m).step_by(block) {
        let end = (start + block).min(m);
        let tile = aq_t.slice_rows(start, end).matmul(&z_s);
        o_t.data_mut()[start * d..end * d].copy_from_slice(tile.data());
    }
    o_t.add_assign(&split.vt.scale_rows(&u_t));

    let saved = QlaSaved {
        z_s,
        z_pre: (phi2 != ActivationKind::Identity).then_some(z_pre),
        u_t,
        aq_s,
        aq_t,
        ak_s,
        ak_t,
        phi1,
        phi2,
    };
    (o_s, o_t, saved)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::attention::mixed_masked_attn;
    use crate::numerics::finite_diff_grad;
    use rand::rngs::StdRng;
    use rand::{Rng, SeedableRng};

    fn random_matrix(rng: &mut StdRng, rows: usize, cols: usize) -> Matrix {
        Matrix::from_raw(rows, cols, (0..rows * cols).map(|_| rng.gen_range(-1.0..1.0)).collect())
    }

    /// Random matrix with entries kept away from the ShiftedElu knee at 1.
    pub(crate) fn random_matrix_smooth(rng: &mut StdRng, rows: usize, cols: usize) -> Matrix {
        Matrix::from_raw(
            rows,
            cols,
            (0..rows * cols)
                .map(|_| {
                    let v: f64 = rng.gen_range(-1.5..1.5);
                    if (v - 1.0).abs() < 0.05 {
                        v - 0.1
                    } else {
                        v
                    }
                })
                .collect(),
        )
    }

    pub(crate) fn random_split(rng: &mut StdRng, n: usize, m: usize, d: usize) -> SourceTargetSplit {
        SourceTargetSplit::new(
            random_matrix_smooth(rng, n, d),
            random_matrix_smooth(rng, m, d),
            random_matrix_smooth(rng, n, d),
            random_matrix_smooth(rng, m, d),
            random_matrix_smooth(rng, n, d),
            random_matrix_smooth(rng, m, d),
        )
        .unwrap()
    }

    /// Dense masked oracle with φ applied entrywise to Q and K.
    fn dense_masked_oracle(split: &SourceTargetSplit, phi: ActivationKind) -> (Matrix, Matrix) {
        let act = |m: &Matrix| activation(phi, m);
        let phi_split = SourceTargetSplit::new(
            act(&split.qs),
            act(&split.qt),
            act(&split.ks),
            act(&split.kt),
            split.vs.clone(),
            split.vt.clone(),
        )
        .unwrap();
        let dense = mixed_masked_attn(&phi_split, 1.0);
        let n = split.source_len();
        (dense.slice_rows(0, n), dense.slice_rows(n, dense.rows()))
    }

    #[test]
    fn identity_reduces_to_plain_linear_attention() {
        let mut rng = StdRng::seed_from_u64(41);
        let split = random_split(&mut rng, 8, 3, 4);
        let (o_s, o_t, _) = qla_forward(&split, ActivationKind::Identity, ActivationKind::Identity);
        let want_s = split.qs.matmul(&split.ks.matmul_ta(&split.vs));
        assert!(o_s.max_abs_diff(&want_s) < 1e-12);
        let diag = crate::attention::delta_diag(&split.qt, &split.kt).unwrap();
        let want_t = split
            .qt
            .matmul(&split.ks.matmul_ta(&split.vs))
            .add(&split.vt.scale_rows(&diag));
        assert!(o_t.max_abs_diff(&want_t) < 1e-12);
    }

    #[test]
    fn zero_values_with_identity_outer() {
        let mut rng = StdRng::seed_from_u64(43);
        let mut split = random_split(&mut rng, 5, 2, 3);
        split.vs = Matrix::zeros(5, 3);
        split.vt = Matrix::zeros(2, 3);
        let (o_s, o_t, _) = qla_forward(&split, ActivationKind::ShiftedElu, ActivationKind::Identity);
        assert_eq!(o_s.max_abs(), 0.0);
        assert_eq!(o_t.max_abs(), 0.0);
        // Non-identity outer activation turns the zero product into a
        // constant matrix, so the output becomes φ1(Q)·φ2(0).
        let (o_s2, _, _) = qla_forward(&split, ActivationKind::ShiftedElu, ActivationKind::ShiftedElu);
        let want = activation(ActivationKind::ShiftedElu, &split.qs)
            .matmul(&Matrix::filled(3, 3, (-1.0f64).exp()));
        assert!(o_s2.max_abs_diff(&want) < 1e-12);
    }

    #[test]
    fn matches_dense_masked_oracle_with_shifted_elu() {
        let mut rng = StdRng::seed_from_u64(47);
        let split = random_split(&mut rng, 8, 3, 4);
        let (o_s, o_t, _) = qla_forward(&split, ActivationKind::ShiftedElu, ActivationKind::Identity);
        let (want_s, want_t) = dense_masked_oracle(&split, ActivationKind::ShiftedElu);
        assert!(o_s.max_abs_diff(&want_s) < 1e-12);
        assert!(o_t.max_abs_diff(&want_t) < 1e-12);
    }

    #[test]
    fn target_rows_invariant_to_other_targets() {
        let mut rng = StdRng::seed_from_u64(53);
        let split = random_split(&mut rng, 6, 4, 5);
        let (_, o_t, _) = qla_forward(&split, ActivationKind::Silu, ActivationKind::Identity);
        // Remove target 1: rows 0, 2, 3 must be bitwise unchanged.
        let keep = [0usize, 2, 3];
        let pick = |m: &Matrix| {
            Matrix::from_rows(&keep.iter().map(|&i| m.row(i).to_vec()).collect::<Vec<_>>()).unwrap()
        };
        let reduced = SourceTargetSplit::new(
            split.qs.clone(),
            pick(&split.qt),
            split.ks.clone(),
            pick(&split.kt),
            split.vs.clone(),
            pick(&split.vt),
        )
        .unwrap();
        let (_, o_t_red, _) = qla_forward(&reduced, ActivationKind::Silu, ActivationKind::Identity);
        for (out_row, &orig) in keep.iter().enumerate().map(|(r, i)| (r, i)) {
            assert_eq!(o_t_red.row(out_row), o_t.row(orig), "row {orig} changed");
        }
    }

    #[test]
    fn backward_scalar_hand_case() {
        // n=1, m=1, d=1 identity case evaluated by hand.
        let split = SourceTargetSplit::new(
            Matrix::from_vec(1, 1, vec![2.0]).unwrap(),
            Matrix::from_vec(1, 1, vec![7.0]).unwrap(),
            Matrix::from_vec(1, 1, vec![3.0]).unwrap(),
            Matrix::from_vec(1, 1, vec![11.0]).unwrap(),
            Matrix::from_vec(1, 1, vec![5.0]).unwrap(),
            Matrix::from_vec(1, 1, vec![13.0]).unwrap(),
        )
        .unwrap();
        let (_, _, saved) = qla_forward(&split, ActivationKind::Identity, ActivationKind::Identity);
        let ones = Matrix::filled(1, 1, 1.0);
        let g = qla_backward(&saved, &split, &ones, &ones).unwrap();
        assert_eq!(g.d_vs.get(0, 0), 27.0);
        assert_eq!(g.d_vt.get(0, 0), 77.0);
        assert_eq!(g.d_kt.get(0, 0), 91.0);
        assert_eq!(g.d_qt.get(0, 0), 158.0);
        assert_eq!(g.d_ks.get(0, 0), 45.0);
        assert_eq!(g.d_qs.get(0, 0), 15.0);
    }

    #[test]
    fn backward_zero_output_grads_give_zero_input_grads() {
        let mut rng = StdRng::seed_from_u64(59);
        let split = random_split(&mut rng, 4, 2, 3);
        let (_, _, saved) = qla_forward(&split, ActivationKind::ShiftedElu, ActivationKind::Identity);
        let g = qla_backward(&saved, &split, &Matrix::zeros(4, 3), &Matrix::zeros(2, 3)).unwrap();
        for m in [&g.d_qs, &g.d_qt, &g.d_ks, &g.d_kt, &g.d_vs, &g.d_vt] {
            assert_eq!(m.max_abs(), 0.0);
        }
    }

    #[test]
    fn backward_rejects_non_identity_outer() {
        let mut rng = StdRng::seed_from_u64(61);
        let split = random_split(&mut rng, 4, 2, 3);
        let (_, _, saved) = qla_forward(&split, ActivationKind::Silu, ActivationKind::Silu);
        let err = qla_backward(&saved, &split, &Matrix::zeros(4, 3), &Matrix::zeros(2, 3));
        assert!(matches!(err, Err(KernelError::UnsupportedOuterActivation { .. })));
    }

    /// Checks every gradient entry against central differences of a random
    /// linear functional of (o_s, o_t).
    pub(crate) fn fd_check(
        seed: u64,
        n: usize,
        m: usize,
        d: usize,
        phi1: ActivationKind,
        phi2: ActivationKind,
        tol: f64,
    ) -> f64 {
        let mut rng = StdRng::seed_from_u64(seed);
        let split = random_split(&mut rng, n, m, d);
        let g_s = random_matrix(&mut rng, n, d);
        let g_t = random_matrix(&mut rng, m, d);

        let (_, _, saved) = qla_forward(&split, phi1, phi2);
        let grads = qla_backward_general(&saved, &split, &g_s, &g_t).unwrap();

        let loss_with = |field: usize, x: &Matrix| -> f64 {
            let mut s = split.clone();
            match field {
                0 => s.qs = x.clone(),
                1 => s.qt = x.clone(),
                2 => s.ks = x.clone(),
                3 => s.kt = x.clone(),
                4 => s.vs = x.clone(),
                _ => s.vt = x.clone(),
            }
            let (o_s, o_t, _) = qla_forward(&s, phi1, phi2);
            o_s.frob_dot(&g_s) + o_t.frob_dot(&g_t)
        };

        let inputs = [&split.qs, &split.qt, &split.ks, &split.kt, &split.vs, &split.vt];
        let analytic = [&grads.d_qs, &grads.d_qt, &grads.d_ks, &grads.d_kt, &grads.d_vs, &grads.d_vt];
        let mut worst = 0.0f64;
        for (field, (x, a)) in inputs.iter().zip(analytic.iter()).enumerate() {
            let fd = finite_diff_grad(|xm| loss_with(field, xm), x, 1e-5).unwrap();
            for (av, fv) in a.data().iter().zip(fd.data()) {
                let rel = (av - fv).abs() / (av.abs() + fv.abs()).max(1e-6);
                worst = worst.max(rel);
            }
        }
        assert!(worst < tol, "worst rel err {worst} for {phi1:?}/{phi2:?} at ({n},{m},{d})");
        worst
    }

    #[test]
    fn backward_matches_finite_differences() {
        for (i, phi1) in [ActivationKind::Identity, ActivationKind::ShiftedElu, ActivationKind::Silu]
            .into_iter()
            .enumerate()
        {
            fd_check(100 + i as u64, 16, 4, 8, phi1, ActivationKind::Identity, 1e-6);
        }
    }

    #[test]
    fn general_backward_matches_finite_differences_nonidentity_outer() {
        fd_check(200, 12, 3, 6, ActivationKind::Silu, ActivationKind::Silu, 1e-6);
        fd_check(201, 12, 3, 6, ActivationKind::ShiftedElu, ActivationKind::ShiftedElu, 1e-6);
    }

    #[test]
    fn blockwise_single_tile_is_identical() {
        let mut rng = StdRng::seed_from_u64(67);
        let split = random_split(&mut rng, 9, 4, 5);
        let (o_s, o_t, _) = qla_forward(&split, ActivationKind::ShiftedElu, ActivationKind::Identity);
        let (b_s, b_t, _) =
            qla_forward_blockwise(&split, ActivationKind::ShiftedElu, ActivationKind::Identity, 16);
        assert_eq!(o_s, b_s);
        assert_eq!(o_t, b_t);
    }

    #[test]
    fn blockwise_tilings_agree() {
        let mut rng = StdRng::seed_from_u64(71);
        let split = random_split(&mut rng, 257, 17, 16);
        let scale = 0.25; // keep magnitudes small so reordering noise stays tiny
        let scaled = SourceTargetSplit::new(
            split.qs.scale(scale),
            split.qt.scale(scale),
            split.ks.scale(scale),
            split.kt.scale(scale),
            split.vs.scale(scale),
            split.vt.scale(scale),
        )
        .unwrap();
        let (a_s, a_t, _) =
            qla_forward_blockwise(&scaled, ActivationKind::Silu, ActivationKind::Identity, 1);
        let (b_s, b_t, _) =
            qla_forward_blockwise(&scaled, ActivationKind::Silu, ActivationKind::Identity, 64);
        assert!(a_s.max_abs_diff(&b_s) < 1e-12);
        assert!(a_t.max_abs_diff(&b_t) < 1e-12);
    }

    #[test]
    fn blockwise_is_deterministic_for_fixed_block() {
        let mut rng = StdRng::seed_from_u64(73);
        let split = random_split(&mut rng, 100, 5, 8);
        let (a_s, a_t, _) = qla_forward_blockwise(&split, ActivationKind::Silu, ActivationKind::Identity, 7);
        let (b_s, b_t, _) = qla_forward_blockwise(&split, ActivationKind::Silu, ActivationKind::Identity, 7);
        assert_eq!(a_s, b_s);
        assert_eq!(a_t, b_t);
    }
}
