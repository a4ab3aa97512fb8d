//! Numerical evaluation of the closed-form generalization-bound constants,
//! plus empirical verifiers for the inequalities behind them.
//!
//! All order constants are set to one (exposed as multipliers); every
//! formula is evaluated exactly as printed, with the two documented
//! formula variants selectable by flag.

pub mod eigen;
pub mod transfer;
pub mod verify;

pub use transfer::{transferability_probe, TransferProbeConfig, TransferProbeResult};
pub use verify::{verify_norm_growth, verify_sa_contraction, SweepReport};

use crate::error::{Error, Result};
use crate::matrix::DenseMatrix;
use eigen::{sym_eigenvalues, symmetrize, trace_product};

/// Everything the bound evaluators need, as plain numbers. Sample counts
/// and dimensions are kept real-valued: they only enter the formulas
/// through products and logarithms.
#[derive(Debug, Clone, PartialEq)]
pub struct BoundParams {
    /// Per-layer spectral norm caps W(l). For the MLP case the last entry
    /// is the decoder layer.
    pub w_caps: Vec<f64>,
    /// Per-layer (2,1) norm caps B(l), same length as `w_caps`.
    pub b_caps: Vec<f64>,
    /// Spectral norm of the stacked pre-training data.
    pub z_norm: f64,
    /// Sum over downstream samples of the squared sample norm.
    pub x_sq_sum: f64,
    /// Largest single-sample norm over the pre-training set (patch tasks).
    pub x_star: f64,
    /// Ambient/patch dimension d.
    pub dim: f64,
    /// Hidden width m.
    pub width: f64,
    /// Patch count K.
    pub patches: f64,
    /// Attention dimension d_K.
    pub attn_dim: f64,
    pub alpha1: f64,
    pub alpha2: f64,
    /// Downstream sample count n.
    pub n: f64,
    /// Pre-training sample count N.
    pub big_n: f64,
    /// Confidence level nu in (0, 1].
    pub confidence: f64,
    /// Smoothness constant H of the pre-training loss.
    pub smoothness: f64,
    /// Bound b on the pre-training loss values.
    pub loss_bound_pre: f64,
    /// Lipschitz constant of the downstream loss.
    pub lipschitz: f64,
    /// Bound on the downstream loss values.
    pub loss_bound_down: f64,
    /// Head-ball radius R.
    pub head_radius: f64,
    /// Supplied total-variation estimate between the two data
    /// distributions.
    pub tv: f64,
    /// Multiplier standing in for the transferability constant.
    pub transfer_coeff: f64,
    /// Multiplier on the covering coefficient fed to the fixed point.
    pub covering_mult: f64,
}

impl BoundParams {
    pub fn validate(&self) -> Result<()> {
        if self.w_caps.is_empty() || self.w_caps.len() != self.b_caps.len() {
            return Err(Error::validation("need matching nonempty norm-cap lists"));
        }
        for (name, v) in [
            ("z_norm", self.z_norm),
            ("x_sq_sum", self.x_sq_sum),
            ("x_star", self.x_star),
            ("dim", self.dim),
            ("width", self.width),
            ("patches", self.patches),
            ("attn_dim", self.attn_dim),
            ("n", self.n),
            ("big_n", self.big_n),
            ("smoothness", self.smoothness),
            ("loss_bound_pre", self.loss_bound_pre),
            ("lipschitz", self.lipschitz),
            ("loss_bound_down", self.loss_bound_down),
            ("head_radius", self.head_radius),
            ("transfer_coeff", self.transfer_coeff),
            ("covering_mult", self.covering_mult),
        ] {
            if v <= 0.0 {
                return Err(Error::validation(format!("{name} must be positive")));
            }
        }
        if self.w_caps.iter().chain(&self.b_caps).any(|&v| v <= 0.0) {
            return Err(Error::validation("norm caps must be positive"));
        }
        if self.alpha1 < 0.0 || self.alpha2 < 0.0 {
            return Err(Error::validation("residual scalings must be nonnegative"));
        }
        if !(self.confidence > 0.0 && self.confidence <= 1.0) {
            return Err(Error::validation("confidence must lie in (0, 1]"));
        }
        if self.tv < 0.0 {
            return Err(Error::validation("tv must be nonnegative"));
        }
        Ok(())
    }
}

/// Which printed form of the per-layer attention covering price to use.
/// The two differ in the power on W(l) inside the attention-score term and
/// in the width-log coefficient.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum RhoVariant {
    /// Derivation form: `alpha1 W^2 (s_{l-1} |X*|)^2 / d_K` score term,
    /// `(W^2 + alpha1^2 K^2 W^2)` width-log coefficient.
    #[default]
    Appendix,
    /// Statement form: `alpha1 W^4 (s_{l-1} |X*|)^4 / d_K` score term,
    /// `(1 + alpha1^2 K^2 W^2)` width-log coefficient.
    MainText,
}

/// Which exponent form to use for the MLP covering coefficient.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum CeSumVariant {
    /// `(sum_l (B(l)/W(l))^{2/3})^3`, matching the covering lemma.
    #[default]
    Appendix,
    /// `(sum_l B(l)/W(l))^3` as printed in the statement.
    MainText,
}

/// Log covering number bound for the MLP encoder-decoder class:
/// `(|Z|^2 ln(2 m^2) / eps^2) * prod_l W(l)^2 * (sum_l (B/W)^{2/3})^3`.
pub fn nn_covering_ln(p: &BoundParams, eps: f64) -> Result<f64> {
    p.validate()?;
    if eps <= 0.0 {
        return Err(Error::validation("eps must be positive"));
    }
    let prod_w_sq: f64 = p.w_caps.iter().map(|w| w * w).product();
    let sum: f64 = p
        .w_caps
        .iter()
        .zip(&p.b_caps)
        .map(|(w, b)| (b / w).powf(2.0 / 3.0))
        .sum();
    Ok(p.z_norm * p.z_norm * (2.0 * p.width * p.width).ln() / (eps * eps)
        * prod_w_sq
        * sum.powi(3))
}

/// Norm-growth factors `s_l` and per-layer covering prices `rho_l` for the
/// attention stack. `s_l = prod_{j<=l} (a2 W(j)^2 + 1)(W(j)^2 a1 K + 1)`.
pub fn transformer_constants(
    p: &BoundParams,
    variant: RhoVariant,
) -> Result<(Vec<f64>, Vec<f64>)> {
    p.validate()?;
    let ln_2d2 = (2.0 * p.dim * p.dim).ln();
    let ln_2dm = (2.0 * p.dim * p.width).ln();
    let k = p.patches;
    let mut s = Vec::with_capacity(p.w_caps.len());
    let mut rho = Vec::with_capacity(p.w_caps.len());
    let mut s_prev = 1.0f64;
    for (w, b) in p.w_caps.iter().zip(&p.b_caps) {
        let w2 = w * w;
        let front = (p.alpha1 * p.alpha2 * w2 + p.alpha1).powi(2) * b * b * ln_2d2;
        let reach = s_prev * p.x_star;
        let (score_term, fc_coeff) = match variant {
            RhoVariant::Appendix => (
                p.alpha1 * w2 * reach * reach / p.attn_dim,
                w2 + p.alpha1 * p.alpha1 * k * k * w2,
            ),
            RhoVariant::MainText => (
                p.alpha1 * w2 * w2 * reach.powi(4) / p.attn_dim,
                1.0 + p.alpha1 * p.alpha1 * k * k * w2,
            ),
        };
        let rho_l = front * (k * k + score_term)
            + p.alpha2 * p.alpha2 * w2 * b * b * fc_coeff * ln_2dm;
        let s_l = s_prev * (p.alpha2 * w2 + 1.0) * (w2 * p.alpha1 * k + 1.0);
        s.push(s_l);
        rho.push(rho_l);
        s_prev = s_l;
    }
    Ok((s, rho))
}

/// Largest solution of `phi(r) = r` for
/// `phi(r) = 10 sqrt(H c r / N) max{1, ln((2/5) sqrt(b N / (H c)))}`,
/// which is `r* = 100 (H c / N) max{...}^2`. The residual `phi(r*)` is
/// recomputed so the identity can be checked by callers.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FixedPoint {
    pub r_star: f64,
    pub phi_at_r_star: f64,
}

pub fn local_rad_fixed_point(h: f64, c: f64, b: f64, n: f64) -> Result<FixedPoint> {
    for (name, v) in [("h", h), ("c", c), ("b", b), ("n", n)] {
        if v <= 0.0 {
            return Err(Error::validation(format!("{name} must be positive")));
        }
    }
    let hc_over_n = h * c / n;
    let log_arg = 0.4 * (b * n / (h * c)).sqrt();
    let m = log_arg.ln().max(1.0);
    let r_star = 100.0 * hc_over_n * m * m;
    let phi = 10.0 * (hc_over_n * r_star).sqrt() * m;
    Ok(FixedPoint {
        r_star,
        phi_at_r_star: phi,
    })
}

/// Additive pieces of the downstream excess-risk bound.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundDecomposition {
    /// Head-complexity term `R G sqrt(. ) / n`.
    pub complexity: f64,
    /// Pre-training excess-risk value (the fixed point r*).
    pub pretrain_excess: f64,
    /// Transferred term `C sqrt(r*)`.
    pub pretrain: f64,
    /// `4 B sqrt(ln(1/nu) / n)`.
    pub confidence: f64,
    /// `4 B tv`.
    pub tv: f64,
    pub total: f64,
}

impl BoundDecomposition {
    fn assemble(
        complexity: f64,
        fixed_point: FixedPoint,
        transfer_coeff: f64,
        p: &BoundParams,
    ) -> Self {
        let pretrain = transfer_coeff * fixed_point.r_star.sqrt();
        let confidence =
            4.0 * p.loss_bound_down * ((1.0 / p.confidence).ln() / p.n).sqrt();
        let tv = 4.0 * p.loss_bound_down * p.tv;
        BoundDecomposition {
            complexity,
            pretrain_excess: fixed_point.r_star,
            pretrain,
            confidence,
            tv,
            total: complexity + pretrain + confidence + tv,
        }
    }
}

/// Bound decomposition for reconstruction pre-training with the MLP
/// encoder class.
pub fn ce_bound(p: &BoundParams, variant: CeSumVariant) -> Result<BoundDecomposition> {
    p.validate()?;
    let prod_w_sq: f64 = p.w_caps.iter().map(|w| w * w).product();
    let complexity =
        p.head_radius * p.lipschitz * (prod_w_sq * p.x_sq_sum).sqrt() / p.n;
    let ratio_sum: f64 = match variant {
        CeSumVariant::Appendix => p
            .w_caps
            .iter()
            .zip(&p.b_caps)
            .map(|(w, b)| (b / w).powf(2.0 / 3.0))
            .sum(),
        CeSumVariant::MainText => p.w_caps.iter().zip(&p.b_caps).map(|(w, b)| b / w).sum(),
    };
    let c = p.covering_mult
        * 12.0
        * p.z_norm
        * p.z_norm
        * (2.0 * p.width * p.width).ln()
        * prod_w_sq
        * ratio_sum.powi(3);
    let fp = local_rad_fixed_point(p.smoothness, c, p.loss_bound_pre, p.big_n)?;
    Ok(BoundDecomposition::assemble(
        complexity,
        fp,
        p.transfer_coeff,
        p,
    ))
}

/// Bound decomposition for masked-patch pre-training with the attention
/// encoder class.
pub fn mae_bound(p: &BoundParams, variant: RhoVariant) -> Result<BoundDecomposition> {
    p.validate()?;
    let (s, rho) = transformer_constants(p, variant)?;
    let s_last = s.last().copied().unwrap_or(1.0);
    let complexity = p.head_radius
        * p.lipschitz
        * (p.patches * s_last * s_last * p.x_sq_sum).sqrt()
        / p.n;
    let c = p.covering_mult
        * 12.0
        * s_last
        * s_last
        * p.z_norm
        * p.z_norm
        * rho.iter().sum::<f64>();
    // With both residual branches off the covering price vanishes and the
    // fixed point degenerates to zero.
    let fp = if c > 0.0 {
        local_rad_fixed_point(p.smoothness, c, p.loss_bound_pre, p.big_n)?
    } else {
        FixedPoint {
            r_star: 0.0,
            phi_at_r_star: 0.0,
        }
    };
    Ok(BoundDecomposition::assemble(
        complexity,
        fp,
        p.transfer_coeff,
        p,
    ))
}

/// Half the L1 distance between two discrete distributions on the same
/// support.
pub fn tv_distance(p: &[f64], q: &[f64]) -> Result<f64> {
    if p.len() != q.len() || p.is_empty() {
        return Err(Error::validation("distributions need a common support"));
    }
    for dist in [p, q] {
        if dist.iter().any(|&v| v < 0.0) {
            return Err(Error::validation("probabilities must be nonnegative"));
        }
        let sum: f64 = dist.iter().sum();
        if (sum - 1.0).abs() > 1e-9 {
            return Err(Error::validation(format!(
                "distribution sums to {sum}, not 1"
            )));
        }
    }
    Ok(0.5 * p.iter().zip(q).map(|(a, b)| (a - b).abs()).sum::<f64>())
}

/// Two-sided eigenvalue bounds on tr(AB) for symmetric PSD matrices:
/// `sum_i a_i b_{n-i+1} <= tr(AB) <= sum_i a_i b_i` with both spectra
/// sorted descending.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RuheReport {
    pub lower: f64,
    pub upper: f64,
    pub trace_ab: f64,
    pub ok: bool,
}

pub fn ruhe_check(a: &DenseMatrix, b: &DenseMatrix) -> Result<RuheReport> {
    if a.rows() != a.cols() || b.rows() != b.cols() || a.rows() != b.rows() {
        return Err(Error::validation("need square matrices of equal size"));
    }
    let a_sym = symmetrize(a);
    let b_sym = symmetrize(b);
    let mut ea = sym_eigenvalues(&a_sym)?;
    let mut eb = sym_eigenvalues(&b_sym)?;
    let scale_a = ea.first().map_or(1.0, |v| v.abs()).max(1.0);
    let scale_b = eb.first().map_or(1.0, |v| v.abs()).max(1.0);
    for (vals, scale) in [(&mut ea, scale_a), (&mut eb, scale_b)] {
        for v in vals.iter_mut() {
            if *v < -1e-10 * scale {
                return Err(Error::validation(format!(
                    "matrix is not positive semidefinite (eigenvalue {v})"
                )));
            }
            *v = v.max(0.0);
        }
    }
    let n = ea.len();
    let lower: f64 = (0..n).map(|i| ea[i] * eb[n - 1 - i]).sum();
    let upper: f64 = (0..n).map(|i| ea[i] * eb[i]).sum();
    let trace_ab = trace_product(&a_sym, &b_sym)?;
    let slack = 1e-9 * upper.abs().max(1.0);
    let ok = lower - slack <= trace_ab && trace_ab <= upper + slack;
    Ok(RuheReport {
        lower,
        upper,
        trace_ab,
        ok,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::matrix::matmul_at;
    use crate::models::init::standard_normal;
    use crate::rng::{stream_rng, Stream};

    pub(crate) fn unit_params(layers: usize) -> BoundParams {
        BoundParams {
            w_caps: vec![1.0; layers],
            b_caps: vec![1.0; layers],
            z_norm: 1.0,
            x_sq_sum: 1.0,
            x_star: 1.0,
            dim: 4.0,
            width: 8.0,
            patches: 4.0,
            attn_dim: 2.0,
            alpha1: 0.1,
            alpha2: 0.1,
            n: 32.0,
            big_n: 200.0,
            confidence: 0.05,
            smoothness: 1.0,
            loss_bound_pre: 1.0,
            lipschitz: 1.0,
            loss_bound_down: 1.0,
            head_radius: 1.0,
            tv: 0.0,
            transfer_coeff: 1.0,
            covering_mult: 1.0,
        }
    }

    #[test]
    fn covering_hand_case() {
        // Single unit layer, |Z| = 1, width chosen so ln(2 m^2) = 1.
        let mut p = unit_params(1);
        p.width = (std::f64::consts::E / 2.0).sqrt();
        let v = nn_covering_ln(&p, 1.0).unwrap();
        assert!((v - 1.0).abs() < 1e-12, "{v}");
    }

    #[test]
    fn covering_scales_inverse_quadratically_in_eps() {
        let p = unit_params(2);
        let a = nn_covering_ln(&p, 1.0).unwrap();
        let b = nn_covering_ln(&p, 2.0).unwrap();
        assert!((a / b - 4.0).abs() < 1e-12);
    }

    #[test]
    fn covering_extra_unit_layer_multiplies_sum_cubed() {
        let mut p1 = unit_params(1);
        p1.width = (std::f64::consts::E / 2.0).sqrt();
        let mut p2 = unit_params(2);
        p2.width = p1.width;
        let one = nn_covering_ln(&p1, 1.0).unwrap();
        let two = nn_covering_ln(&p2, 1.0).unwrap();
        assert!((two / one - 8.0).abs() < 1e-12, "two unit terms cube to 8");
    }

    #[test]
    fn growth_constants_collapse_without_residual_branches() {
        let mut p = unit_params(3);
        p.alpha1 = 0.0;
        p.alpha2 = 0.0;
        let (s, _) = transformer_constants(&p, RhoVariant::Appendix).unwrap();
        assert!(s.iter().all(|&v| v == 1.0));
    }

    #[test]
    fn growth_constant_hand_case() {
        let mut p = unit_params(1);
        p.w_caps = vec![2.0];
        p.b_caps = vec![2.0];
        p.alpha1 = 0.1;
        p.alpha2 = 0.1;
        p.patches = 4.0;
        let (s, _) = transformer_constants(&p, RhoVariant::Appendix).unwrap();
        assert!((s[0] - 3.64).abs() < 1e-12, "{}", s[0]);
    }

    #[test]
    fn growth_constants_never_decrease_with_depth() {
        let p = unit_params(4);
        let (s, _) = transformer_constants(&p, RhoVariant::Appendix).unwrap();
        for w in s.windows(2) {
            assert!(w[1] >= w[0]);
        }
    }

    #[test]
    fn rho_variants_differ_on_nonunit_instances() {
        let mut p = unit_params(2);
        p.w_caps = vec![1.5, 2.0];
        p.b_caps = vec![2.0, 3.0];
        p.x_star = 1.7;
        let (_, ra) = transformer_constants(&p, RhoVariant::Appendix).unwrap();
        let (_, rm) = transformer_constants(&p, RhoVariant::MainText).unwrap();
        assert!(ra.iter().zip(&rm).any(|(a, b)| (a - b).abs() > 1e-9));
    }

    #[test]
    fn fixed_point_hand_case() {
        // H = c = b = 1, N = 100: ln(0.4 * 10) = ln 4, r* = ln(4)^2 / 1.
        let fp = local_rad_fixed_point(1.0, 1.0, 1.0, 100.0).unwrap();
        let want = 4.0f64.ln().powi(2);
        assert!((fp.r_star - want).abs() < 1e-12, "{}", fp.r_star);
        assert!((fp.r_star - 1.92181).abs() < 1e-4);
        let residual = (fp.phi_at_r_star - fp.r_star).abs() / fp.r_star;
        assert!(residual < 1e-10);
    }

    #[test]
    fn fixed_point_clamp_branch_is_linear_in_inverse_n() {
        // b N / (H c) small enough that the log term clamps at 1.
        let fp1 = local_rad_fixed_point(1.0, 1.0, 1e-6, 10.0).unwrap();
        assert!((fp1.r_star - 100.0 * 1.0 / 10.0).abs() < 1e-12);
        let fp2 = local_rad_fixed_point(1.0, 1.0, 1e-6, 20.0).unwrap();
        assert!((fp1.r_star / fp2.r_star - 2.0).abs() < 1e-12);
    }

    #[test]
    fn ce_bound_confidence_vanishes_at_full_confidence() {
        let mut p = unit_params(2);
        p.confidence = 1.0;
        let d = ce_bound(&p, CeSumVariant::Appendix).unwrap();
        assert_eq!(d.confidence, 0.0);
    }

    #[test]
    fn ce_bound_pretrain_excess_scales_with_big_n_in_clamp_branch() {
        let mut p = unit_params(2);
        p.loss_bound_pre = 1e-9; // clamp the log branch
        let a = ce_bound(&p, CeSumVariant::Appendix).unwrap();
        let mut p10 = p.clone();
        p10.big_n *= 10.0;
        let b = ce_bound(&p10, CeSumVariant::Appendix).unwrap();
        assert!((a.pretrain_excess / b.pretrain_excess - 10.0).abs() < 1e-9);
    }

    #[test]
    fn ce_bound_all_unit_hand_values() {
        let p = unit_params(1);
        let d = ce_bound(&p, CeSumVariant::Appendix).unwrap();
        // complexity = 1 * 1 * sqrt(1 * 1) / 32
        assert!((d.complexity - 1.0 / 32.0).abs() < 1e-15);
        // c = 12 ln(128), log arg = 0.4 sqrt(200 / (12 ln 128))
        let c = 12.0 * 128.0f64.ln();
        let m = (0.4 * (200.0 / c).sqrt()).ln().max(1.0);
        let want_r = 100.0 * c / 200.0 * m * m;
        assert!((d.pretrain_excess - want_r).abs() < 1e-12);
        assert!((d.pretrain - want_r.sqrt()).abs() < 1e-12);
        let want_conf = 4.0 * (20.0f64.ln() / 32.0).sqrt();
        assert!((d.confidence - want_conf).abs() < 1e-12);
        assert_eq!(d.tv, 0.0);
        assert!((d.total - (d.complexity + d.pretrain + d.confidence)).abs() < 1e-12);
    }

    #[test]
    fn mae_bound_collapses_to_residual_baseline_without_attention() {
        let mut p = unit_params(2);
        p.alpha1 = 0.0;
        p.alpha2 = 0.0;
        let d = mae_bound(&p, RhoVariant::Appendix).unwrap();
        // s_L = 1, rho_l = 0, so c -> 0 is invalid; complexity term only.
        // With rho = 0 the covering coefficient is 0 and the fixed point
        // rejects it, or complexity = R G sqrt(K x_sq)/n otherwise.
        assert!((d.complexity - (4.0f64).sqrt() / 32.0).abs() < 1e-12);
    }

    #[test]
    fn mae_bound_monotone_in_every_cap() {
        let base = unit_params(2);
        let d0 = mae_bound(&base, RhoVariant::Appendix).unwrap();
        for l in 0..2 {
            let mut p = base.clone();
            p.w_caps[l] *= 1.3;
            let d = mae_bound(&p, RhoVariant::Appendix).unwrap();
            assert!(d.total >= d0.total, "layer {l} cap increase lowered the bound");
        }
    }

    #[test]
    fn mae_variants_disagree_on_nonunit_instance() {
        let mut p = unit_params(2);
        p.w_caps = vec![1.4, 1.8];
        p.b_caps = vec![2.0, 2.5];
        p.x_star = 2.0;
        let a = mae_bound(&p, RhoVariant::Appendix).unwrap();
        let b = mae_bound(&p, RhoVariant::MainText).unwrap();
        assert!((a.total - b.total).abs() > 1e-9);
    }

    #[test]
    fn tv_basic_cases() {
        assert_eq!(tv_distance(&[0.5, 0.5], &[0.5, 0.5]).unwrap(), 0.0);
        assert_eq!(tv_distance(&[1.0, 0.0], &[0.0, 1.0]).unwrap(), 1.0);
        assert_eq!(tv_distance(&[0.5, 0.5], &[1.0, 0.0]).unwrap(), 0.5);
        assert!(tv_distance(&[0.5, 0.4], &[1.0, 0.0]).is_err());
    }

    #[test]
    fn tv_is_a_metric_on_random_triples() {
        let mut rng = stream_rng(3, Stream::Probe);
        for _ in 0..100 {
            let draw = |rng: &mut rand_chacha::ChaCha8Rng| {
                let raw: Vec<f64> = (0..4)
                    .map(|_| rand::Rng::random_range(rng, 0.01..1.0))
                    .collect();
                let sum: f64 = raw.iter().sum();
                raw.into_iter().map(|v| v / sum).collect::<Vec<f64>>()
            };
            let (p, q, r) = (draw(&mut rng), draw(&mut rng), draw(&mut rng));
            let pq = tv_distance(&p, &q).unwrap();
            let qp = tv_distance(&q, &p).unwrap();
            let pr = tv_distance(&p, &r).unwrap();
            let rq = tv_distance(&r, &q).unwrap();
            assert!((pq - qp).abs() < 1e-15);
            assert!((0.0..=1.0 + 1e-12).contains(&pq));
            assert!(pq <= pr + rq + 1e-12);
        }
    }

    #[test]
    fn ruhe_identity_case() {
        let id = DenseMatrix::identity(2);
        let rep = ruhe_check(&id, &id).unwrap();
        assert!(rep.ok);
        assert!((rep.lower - 2.0).abs() < 1e-12);
        assert!((rep.upper - 2.0).abs() < 1e-12);
        assert!((rep.trace_ab - 2.0).abs() < 1e-12);
    }

    #[test]
    fn ruhe_diagonal_hand_case() {
        let a = DenseMatrix::from_rows(&[vec![2.0, 0.0], vec![0.0, 1.0]]).unwrap();
        let b = DenseMatrix::from_rows(&[vec![3.0, 0.0], vec![0.0, 1.0]]).unwrap();
        let rep = ruhe_check(&a, &b).unwrap();
        assert!((rep.lower - 5.0).abs() < 1e-12);
        assert!((rep.upper - 7.0).abs() < 1e-12);
        assert!((rep.trace_ab - 7.0).abs() < 1e-12);
        assert!(rep.ok);
    }

    #[test]
    fn ruhe_holds_on_random_psd_pairs() {
        let mut rng = stream_rng(4, Stream::Probe);
        for trial in 0..100 {
            let ma = standard_normal(4, 4, &mut rng);
            let mb = standard_normal(4, 4, &mut rng);
            let a = matmul_at(&ma, &ma).unwrap();
            let b = matmul_at(&mb, &mb).unwrap();
            let rep = ruhe_check(&a, &b).unwrap();
            assert!(rep.ok, "trial {trial}: {rep:?}");
        }
    }

    #[test]
    fn ruhe_rejects_indefinite_input() {
        let a = DenseMatrix::from_rows(&[vec![1.0, 0.0], vec![0.0, -1.0]]).unwrap();
        assert!(ruhe_check(&a, &DenseMatrix::identity(2)).is_err());
    }
}
