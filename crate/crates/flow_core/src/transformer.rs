//! Per-coordinate invertible transformers.
//!
//! Each flow coordinate is pushed through a scalar monotone map whose
//! parameters come from that coordinate's conditioner: either an affine map
//! u = (x - m) e^{-a}, or a monotone rational-quadratic spline on [-bound,
//! bound] with identity tails. Raw parameters are unconstrained; zero
//! parameters give the identity map in both cases, which is what freshly
//! initialized conditioners emit.

use serde::{Deserialize, Serialize};

use crate::tape::{Tape, Var};

/// Which transformer a masked layer applies.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LayerSpec {
    Affine,
    RationalQuadraticSpline { bins: usize, bound: f64 },
}

/// Smallest fraction of the box a single bin may occupy.
const MIN_BIN_FRACTION: f64 = 1e-3;

/// Offset making softplus(raw + OFFSET) = 1 at raw = 0, so derivatives
/// initialize to the identity slope.
fn derivative_offset() -> f64 {
    (std::f64::consts::E - 1.0).ln()
}

/// One transformer evaluation with every partial the training loop needs:
/// output, log-derivative, and their gradients with respect to the input
/// point and the raw parameter vector.
#[derive(Debug, Clone)]
pub struct TransformerEval {
    pub out: f64,
    pub log_deriv: f64,
    pub d_out_d_in: f64,
    pub d_logd_d_in: f64,
    pub d_out_d_p: Vec<f64>,
    pub d_logd_d_p: Vec<f64>,
}

impl LayerSpec {
    /// Length of the raw parameter vector the conditioner must emit per
    /// coordinate.
    pub fn param_count(&self) -> usize {
        match self {
            LayerSpec::Affine => 2,
            LayerSpec::RationalQuadraticSpline { bins, .. } => 3 * bins - 1,
        }
    }

    /// x -> (u, log |du/dx|).
    pub fn forward_scalar(&self, x: f64, p: &[f64]) -> (f64, f64) {
        match self {
            LayerSpec::Affine => {
                let (a, m) = (p[0], p[1]);
                ((x - m) * (-a).exp(), -a)
            }
            LayerSpec::RationalQuadraticSpline { bins, bound } => {
                if x.abs() >= *bound {
                    return (x, 0.0);
                }
                let knots = SplineKnots::from_raw(*bins, *bound, p);
                knots.forward(x)
            }
        }
    }

    /// u -> x, the exact inverse of [`forward_scalar`].
    pub fn inverse_scalar(&self, u: f64, p: &[f64]) -> f64 {
        match self {
            LayerSpec::Affine => {
                let (a, m) = (p[0], p[1]);
                u * a.exp() + m
            }
            LayerSpec::RationalQuadraticSpline { bins, bound } => {
                if u.abs() >= *bound {
                    return u;
                }
                let knots = SplineKnots::from_raw(*bins, *bound, p);
                knots.inverse(u)
            }
        }
    }

    /// Forward evaluation carrying all partial derivatives. `tape` is a
    /// scratch buffer reused across calls.
    pub fn forward_scalar_full(&self, x: f64, p: &[f64], tape: &mut Tape) -> TransformerEval {
        match self {
            LayerSpec::Affine => {
                let (a, m) = (p[0], p[1]);
                let scale = (-a).exp();
                let out = (x - m) * scale;
                TransformerEval {
                    out,
                    log_deriv: -a,
                    d_out_d_in: scale,
                    d_logd_d_in: 0.0,
                    d_out_d_p: vec![-out, -scale],
                    d_logd_d_p: vec![-1.0, 0.0],
                }
            }
            LayerSpec::RationalQuadraticSpline { bins, bound } => {
                if x.abs() >= *bound {
                    let n = self.param_count();
                    return TransformerEval {
                        out: x,
                        log_deriv: 0.0,
                        d_out_d_in: 1.0,
                        d_logd_d_in: 0.0,
                        d_out_d_p: vec![0.0; n],
                        d_logd_d_p: vec![0.0; n],
                    };
                }
                spline_full(*bins, *bound, x, p, tape)
            }
        }
    }
}

/// Knot positions, heights, and derivatives of one spline, already
/// constrained to be monotone.
struct SplineKnots {
    xs: Vec<f64>,
    ys: Vec<f64>,
    derivs: Vec<f64>,
}

fn constrained_fractions(raw: &[f64]) -> Vec<f64> {
    let k = raw.len();
    let max = raw.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = raw.iter().map(|r| (r - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.iter()
        .map(|e| MIN_BIN_FRACTION + (1.0 - k as f64 * MIN_BIN_FRACTION) * e / sum)
        .collect()
}

impl SplineKnots {
    fn from_raw(bins: usize, bound: f64, p: &[f64]) -> Self {
        debug_assert_eq!(p.len(), 3 * bins - 1);
        let span = 2.0 * bound;
        let widths = constrained_fractions(&p[..bins]);
        let heights = constrained_fractions(&p[bins..2 * bins]);
        let mut xs = Vec::with_capacity(bins + 1);
        let mut ys = Vec::with_capacity(bins + 1);
        let mut cx = -bound;
        let mut cy = -bound;
        xs.push(cx);
        ys.push(cy);
        for i in 0..bins {
            cx += widths[i] * span;
            cy += heights[i] * span;
            xs.push(cx);
            ys.push(cy);
        }
        // Guard against drift so boundary tests land inside the box.
        xs[bins] = bound;
        ys[bins] = bound;
        let offset = derivative_offset();
        let mut derivs = Vec::with_capacity(bins + 1);
        derivs.push(1.0);
        for r in &p[2 * bins..] {
            derivs.push(softplus(r + offset));
        }
        derivs.push(1.0);
        Self { xs, ys, derivs }
    }

    fn bin_of(points: &[f64], v: f64) -> usize {
        let n_bins = points.len() - 1;
        match points[1..n_bins].binary_search_by(|a| a.total_cmp(&v)) {
            Ok(i) => i + 1,
            Err(i) => i,
        }
    }

    fn forward(&self, x: f64) -> (f64, f64) {
        let k = Self::bin_of(&self.xs, x);
        let (xk, xk1) = (self.xs[k], self.xs[k + 1]);
        let (yk, yk1) = (self.ys[k], self.ys[k + 1]);
        let (dk, dk1) = (self.derivs[k], self.derivs[k + 1]);
        let w = xk1 - xk;
        let h = yk1 - yk;
        let s = h / w;
        let xi = (x - xk) / w;
        let omx = 1.0 - xi;
        let den = s + (dk1 + dk - 2.0 * s) * xi * omx;
        let u = yk + h * (s * xi * xi + dk * xi * omx) / den;
        let deriv = s * s * (dk1 * xi * xi + 2.0 * s * xi * omx + dk * omx * omx) / (den * den);
        (u, deriv.ln())
    }

    fn inverse(&self, u: f64) -> f64 {
        let k = Self::bin_of(&self.ys, u);
        let (xk, xk1) = (self.xs[k], self.xs[k + 1]);
        let (yk, yk1) = (self.ys[k], self.ys[k + 1]);
        let (dk, dk1) = (self.derivs[k], self.derivs[k + 1]);
        let w = xk1 - xk;
        let h = yk1 - yk;
        let s = h / w;
        let dy = u - yk;
        let term = dy * (dk1 + dk - 2.0 * s);
        let a = h * (s - dk) + term;
        let b = h * dk - term;
        let c = -s * dy;
        let disc = b * b - 4.0 * a * c;
        assert!(disc >= 0.0, "spline inversion discriminant went negative");
        let xi = 2.0 * c / (-b - disc.sqrt());
        xk + xi * w
    }
}

fn softplus(x: f64) -> f64 {
    if x > 30.0 {
        x
    } else {
        x.exp().ln_1p()
    }
}

/// Spline forward with partials, recorded on the tape. Two backward sweeps
/// (one from the output, one from the log-derivative) fill the four gradient
/// slots.
fn spline_full(bins: usize, bound: f64, x: f64, p: &[f64], tape: &mut Tape) -> TransformerEval {
    tape.reset();
    let n = 3 * bins - 1;
    let x_var = tape.leaf(x);
    let p_vars: Vec<Var> = p.iter().map(|&r| tape.leaf(r)).collect();

    let span = 2.0 * bound;
    let fractions = |tape: &mut Tape, raw: &[Var]| -> Vec<Var> {
        let exps: Vec<Var> = raw.iter().map(|&r| tape.exp(r)).collect();
        let mut sum = exps[0];
        for &e in &exps[1..] {
            sum = tape.add(sum, e);
        }
        let scale = 1.0 - bins as f64 * MIN_BIN_FRACTION;
        exps.iter()
            .map(|&e| {
                let frac = tape.div(e, sum);
                let scaled = tape.scale(frac, scale);
                tape.add_const(scaled, MIN_BIN_FRACTION)
            })
            .collect()
    };
    let widths = fractions(tape, &p_vars[..bins]);
    let heights = fractions(tape, &p_vars[bins..2 * bins]);

    let mut xs = Vec::with_capacity(bins + 1);
    let mut ys = Vec::with_capacity(bins + 1);
    let mut cx = tape.leaf(-bound);
    let mut cy = tape.leaf(-bound);
    xs.push(cx);
    ys.push(cy);
    for i in 0..bins {
        let wi = tape.scale(widths[i], span);
        let hi = tape.scale(heights[i], span);
        cx = tape.add(cx, wi);
        cy = tape.add(cy, hi);
        xs.push(cx);
        ys.push(cy);
    }

    let xs_vals: Vec<f64> = xs.iter().map(|&v| tape.value(v)).collect();
    let k = SplineKnots::bin_of(&xs_vals, x);

    let offset = derivative_offset();
    let one = tape.leaf(1.0);
    let deriv_at = |tape: &mut Tape, knot: usize| -> Var {
        if knot == 0 || knot == bins {
            one
        } else {
            let raw = tape.add_const(p_vars[2 * bins + knot - 1], offset);
            tape.softplus(raw)
        }
    };
    let dk = deriv_at(tape, k);
    let dk1 = deriv_at(tape, k + 1);

    let w = tape.sub(xs[k + 1], xs[k]);
    let h = tape.sub(ys[k + 1], ys[k]);
    let s = tape.div(h, w);
    let x_off = tape.sub(x_var, xs[k]);
    let xi = tape.div(x_off, w);
    let neg_xi = tape.scale(xi, -1.0);
    let omx = tape.add_const(neg_xi, 1.0);
    let xi_omx = tape.mul(xi, omx);
    let xi2 = tape.square(xi);
    let omx2 = tape.square(omx);

    let dsum = tape.add(dk1, dk);
    let two_s = tape.scale(s, 2.0);
    let dsum_m2s = tape.sub(dsum, two_s);
    let den_term = tape.mul(dsum_m2s, xi_omx);
    let den = tape.add(s, den_term);

    let s_xi2 = tape.mul(s, xi2);
    let dk_xiomx = tape.mul(dk, xi_omx);
    let num_inner = tape.add(s_xi2, dk_xiomx);
    let num = tape.mul(h, num_inner);
    let ratio = tape.div(num, den);
    let out = tape.add(ys[k], ratio);

    let s2 = tape.square(s);
    let dk1_xi2 = tape.mul(dk1, xi2);
    let two_s_xiomx = tape.mul(two_s, xi_omx);
    let dk_omx2 = tape.mul(dk, omx2);
    let dnum_a = tape.add(dk1_xi2, two_s_xiomx);
    let dnum = tape.add(dnum_a, dk_omx2);
    let deriv_num = tape.mul(s2, dnum);
    let den2 = tape.square(den);
    let deriv = tape.div(deriv_num, den2);
    let log_deriv = tape.ln(deriv);

    tape.backward(out);
    let d_out_d_in = tape.grad(x_var);
    let d_out_d_p: Vec<f64> = p_vars.iter().map(|&v| tape.grad(v)).collect();
    tape.backward(log_deriv);
    let d_logd_d_in = tape.grad(x_var);
    let d_logd_d_p: Vec<f64> = p_vars.iter().map(|&v| tape.grad(v)).collect();

    debug_assert_eq!(d_out_d_p.len(), n);
    TransformerEval {
        out: tape.value(out),
        log_deriv: tape.value(log_deriv),
        d_out_d_in,
        d_logd_d_in,
        d_out_d_p,
        d_logd_d_p,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const SPEC: LayerSpec = LayerSpec::RationalQuadraticSpline {
        bins: 8,
        bound: 5.0,
    };

    fn raw_params(seed: f64) -> Vec<f64> {
        (0..SPEC.param_count())
            .map(|i| ((i as f64 * 0.7 + seed).sin()) * 0.8)
            .collect()
    }

    #[test]
    fn affine_matches_the_closed_form() {
        let p = [std::f64::consts::LN_2, 1.0];
        let (u, logdet) = LayerSpec::Affine.forward_scalar(3.0, &p);
        assert!((u - 1.0).abs() < 1e-15);
        assert!((logdet + std::f64::consts::LN_2).abs() < 1e-15);
        let x = LayerSpec::Affine.inverse_scalar(u, &p);
        assert!((x - 3.0).abs() < 1e-15);
    }

    #[test]
    fn zero_parameters_give_the_identity() {
        for spec in [LayerSpec::Affine, SPEC] {
            let p = vec![0.0; spec.param_count()];
            for x in [-4.9, -1.0, 0.0, 0.3, 4.9, 7.0] {
                let (u, logdet) = spec.forward_scalar(x, &p);
                assert!((u - x).abs() < 1e-9, "{spec:?} not identity at {x}: {u}");
                assert!(logdet.abs() < 1e-9);
            }
        }
    }

    #[test]
    fn spline_round_trips() {
        let p = raw_params(0.37);
        for i in 0..200 {
            let x = -6.0 + 12.0 * i as f64 / 199.0;
            let (u, _) = SPEC.forward_scalar(x, &p);
            let back = SPEC.inverse_scalar(u, &p);
            assert!((back - x).abs() < 1e-10, "round trip failed at {x}: {back}");
        }
    }

    #[test]
    fn spline_is_monotone_and_continuous_at_the_boundary() {
        let p = raw_params(1.61);
        let mut prev = f64::NEG_INFINITY;
        for i in 0..=1000 {
            let x = -5.5 + 11.0 * i as f64 / 1000.0;
            let (u, _) = SPEC.forward_scalar(x, &p);
            assert!(u > prev, "not monotone at {x}");
            prev = u;
        }
        let eps = 1e-9;
        let (inside, _) = SPEC.forward_scalar(5.0 - eps, &p);
        assert!((inside - 5.0).abs() < 1e-6, "boundary jump: {inside}");
    }

    #[test]
    fn log_derivative_matches_finite_differences() {
        let p = raw_params(2.9);
        let h = 1e-6;
        for x in [-4.2, -0.8, 0.0, 1.3, 3.7] {
            let (_, logdet) = SPEC.forward_scalar(x, &p);
            let (up, _) = SPEC.forward_scalar(x + h, &p);
            let (um, _) = SPEC.forward_scalar(x - h, &p);
            let fd = ((up - um) / (2.0 * h)).ln();
            assert!(
                (logdet - fd).abs() < 1e-6,
                "logdet mismatch at {x}: {logdet} vs {fd}"
            );
        }
    }

    #[test]
    fn full_evaluation_agrees_with_plain_forward() {
        let p = raw_params(0.11);
        let mut tape = Tape::new();
        for x in [-4.5, -2.0, 0.4, 2.2, 4.99, 6.0] {
            let (u, logdet) = SPEC.forward_scalar(x, &p);
            let full = SPEC.forward_scalar_full(x, &p, &mut tape);
            assert!((full.out - u).abs() < 1e-12);
            assert!((full.log_deriv - logdet).abs() < 1e-12);
            assert!((full.d_out_d_in - full.log_deriv.exp()).abs() < 1e-9);
        }
    }

    #[test]
    fn full_evaluation_partials_match_finite_differences() {
        let p = raw_params(4.2);
        let mut tape = Tape::new();
        let h = 1e-6;
        for spec in [SPEC, LayerSpec::Affine] {
            let p = &p[..spec.param_count()];
            for x in [-3.3, 0.6, 2.8] {
                let full = spec.forward_scalar_full(x, p, &mut tape);
                let (up, lp) = spec.forward_scalar(x + h, p);
                let (um, lm) = spec.forward_scalar(x - h, p);
                assert!((full.d_out_d_in - (up - um) / (2.0 * h)).abs() < 1e-5);
                assert!((full.d_logd_d_in - (lp - lm) / (2.0 * h)).abs() < 1e-5);
                for j in 0..p.len() {
                    let mut pp = p.to_vec();
                    pp[j] += h;
                    let (upj, lpj) = spec.forward_scalar(x, &pp);
                    pp[j] -= 2.0 * h;
                    let (umj, lmj) = spec.forward_scalar(x, &pp);
                    let fd_u = (upj - umj) / (2.0 * h);
                    let fd_l = (lpj - lmj) / (2.0 * h);
                    assert!(
                        (full.d_out_d_p[j] - fd_u).abs() < 1e-5,
                        "d_out/d_p[{j}] at {x}: {} vs {fd_u}",
                        full.d_out_d_p[j]
                    );
                    assert!(
                        (full.d_logd_d_p[j] - fd_l).abs() < 1e-5,
                        "d_logd/d_p[{j}] at {x}: {} vs {fd_l}",
                        full.d_logd_d_p[j]
                    );
                }
            }
        }
    }
}
