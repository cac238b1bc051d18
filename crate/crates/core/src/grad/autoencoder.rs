//! Loss and exact gradient of the embedding autoencoder.

use crate::embed::{AutoencoderParams, EmbeddingBatch};
use crate::linalg::{self, Mat};

/// Pearson correlation and its gradient with respect to `x`. `None` when
/// either side has zero variance.
pub fn pearson_with_grad(x: &[f64], y: &[f64]) -> Option<(f64, Vec<f64>)> {
    let n = x.len() as f64;
    if x.len() < 2 {
        return None;
    }
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let xc: Vec<f64> = x.iter().map(|v| v - mx).collect();
    let yc: Vec<f64> = y.iter().map(|v| v - my).collect();
    let sxx = linalg::norm_sq(&xc);
    let syy = linalg::norm_sq(&yc);
    if sxx <= 0.0 || syy <= 0.0 {
        return None;
    }
    let sxy = linalg::dot(&xc, &yc);
    let denom = (sxx * syy).sqrt();
    let r = sxy / denom;
    // dR/dx_i = yc_i / sqrt(Sxx Syy) - R xc_i / Sxx (centering terms vanish)
    let g = xc
        .iter()
        .zip(&yc)
        .map(|(&a, &b)| b / denom - r * a / sxx)
        .collect();
    Some((r, g))
}

pub fn pearson(x: &[f64], y: &[f64]) -> Option<f64> {
    pearson_with_grad(x, y).map(|p| p.0)
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct AeLoss {
    pub total: f64,
    /// `||A - A~||_F^2 / n`.
    pub reconstruction: f64,
    /// `-(R(C1, coh_prim) + R(C2, coh_sec))`.
    pub alignment: f64,
    pub r_primary: f64,
    pub r_secondary: f64,
    /// A correlation was undefined and its term was set to 0.
    pub degenerate: bool,
}

/// Activations of one forward pass over a batch, row-major.
pub struct AeForward {
    pub u1: Vec<f64>,
    pub codes: Vec<f64>,
    pub u3: Vec<f64>,
    pub recon: Vec<f64>,
}

fn affine_rows(x: &[f64], rows: usize, w: &Mat, b: &Mat, out: &mut Vec<f64>) {
    let (o, i) = (w.rows, w.cols);
    out.clear();
    out.resize(rows * o, 0.0);
    for r in 0..rows {
        let dst = &mut out[r * o..(r + 1) * o];
        w.matvec_into(&x[r * i..(r + 1) * i], dst);
        for (d, bv) in dst.iter_mut().zip(&b.data) {
            *d += bv;
        }
    }
}

pub fn forward(p: &AutoencoderParams, activity: &[f64], rows: usize) -> AeForward {
    let mut u1 = Vec::new();
    affine_rows(activity, rows, &p.w1, &p.b1, &mut u1);
    u1.iter_mut().for_each(|v| *v = v.tanh());
    let mut codes = Vec::new();
    affine_rows(&u1, rows, &p.w2, &p.b2, &mut codes);
    let mut u3 = Vec::new();
    affine_rows(&codes, rows, &p.w3, &p.b3, &mut u3);
    u3.iter_mut().for_each(|v| *v = v.tanh());
    let mut recon = Vec::new();
    affine_rows(&u3, rows, &p.w4, &p.b4, &mut recon);
    AeForward {
        u1,
        codes,
        u3,
        recon,
    }
}

/// Alignment over the masked rows: value, and gradient with respect to the
/// first two code columns (zero on unmasked rows).
fn alignment(codes: &[f64], batch: &EmbeddingBatch, d: usize) -> (AeLoss, Vec<f64>) {
    let rows: Vec<usize> = (0..batch.len()).filter(|&r| batch.align_mask[r]).collect();
    let mut loss = AeLoss::default();
    let mut g = vec![0.0; batch.len() * d];
    let targets: [&[f64]; 2] = [&batch.coh_prim, &batch.coh_sec];
    for (k, target) in targets.iter().enumerate() {
        let x: Vec<f64> = rows.iter().map(|&r| codes[r * d + k]).collect();
        let y: Vec<f64> = rows.iter().map(|&r| target[r]).collect();
        match pearson_with_grad(&x, &y) {
            Some((r, gr)) => {
                if k == 0 {
                    loss.r_primary = r;
                } else {
                    loss.r_secondary = r;
                }
                loss.alignment -= r;
                for (j, &row) in rows.iter().enumerate() {
                    g[row * d + k] = -gr[j];
                }
            }
            None => loss.degenerate = true,
        }
    }
    (loss, g)
}

pub fn ae_loss(p: &AutoencoderParams, batch: &EmbeddingBatch, lambda: f64) -> AeLoss {
    let n = batch.len();
    let f = forward(p, &batch.activity, n);
    let recon = squared_error(&f.recon, &batch.activity) / n as f64;
    let mut loss = if lambda != 0.0 {
        alignment(&f.codes, batch, p.code_dim()).0
    } else {
        AeLoss::default()
    };
    loss.reconstruction = recon;
    loss.total = recon + lambda * loss.alignment;
    loss
}

fn squared_error(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Backpropagates one layer `out = W x + b` for all rows.
fn affine_backward(
    x: &[f64],
    dout: &[f64],
    rows: usize,
    w: &Mat,
    gw: &mut Mat,
    gb: &mut Mat,
    dx: Option<&mut Vec<f64>>,
) {
    let (o, i) = (w.rows, w.cols);
    for r in 0..rows {
        let d = &dout[r * o..(r + 1) * o];
        gw.rank1_acc(1.0, d, &x[r * i..(r + 1) * i]);
        linalg::axpy(1.0, d, &mut gb.data);
    }
    if let Some(dx) = dx {
        dx.clear();
        dx.resize(rows * i, 0.0);
        for r in 0..rows {
            w.matvec_t_acc(&dout[r * o..(r + 1) * o], &mut dx[r * i..(r + 1) * i]);
        }
    }
}

/// Loss and gradient over the whole batch.
pub fn ae_loss_grad(
    p: &AutoencoderParams,
    batch: &EmbeddingBatch,
    lambda: f64,
) -> (AeLoss, AutoencoderParams) {
    let n = batch.len();
    let d = p.code_dim();
    let f = forward(p, &batch.activity, n);
    let mut g = AutoencoderParams::zeros_like(p);

    let scale = 2.0 / n as f64;
    let drecon: Vec<f64> = f
        .recon
        .iter()
        .zip(&batch.activity)
        .map(|(r, a)| scale * (r - a))
        .collect();
    let mut loss = AeLoss::default();
    let mut dcode_align = vec![0.0; n * d];
    if lambda != 0.0 {
        let (l, ga) = alignment(&f.codes, batch, d);
        loss = l;
        dcode_align = ga.into_iter().map(|v| lambda * v).collect();
    }
    loss.reconstruction = squared_error(&f.recon, &batch.activity) / n as f64;
    loss.total = loss.reconstruction + lambda * loss.alignment;

    let mut du3 = Vec::new();
    affine_backward(&f.u3, &drecon, n, &p.w4, &mut g.w4, &mut g.b4, Some(&mut du3));
    for (dv, u) in du3.iter_mut().zip(&f.u3) {
        *dv *= 1.0 - u * u;
    }
    let mut dcode = Vec::new();
    affine_backward(&f.codes, &du3, n, &p.w3, &mut g.w3, &mut g.b3, Some(&mut dcode));
    for (dv, a) in dcode.iter_mut().zip(&dcode_align) {
        *dv += a;
    }
    let mut du1 = Vec::new();
    affine_backward(&f.u1, &dcode, n, &p.w2, &mut g.w2, &mut g.b2, Some(&mut du1));
    for (dv, u) in du1.iter_mut().zip(&f.u1) {
        *dv *= 1.0 - u * u;
    }
    affine_backward(&batch.activity, &du1, n, &p.w1, &mut g.w1, &mut g.b1, None);
    (loss, g)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pearson_identities() {
        let x = [1.0, 4.0, 2.0, 8.0, 5.0];
        let neg: Vec<f64> = x.iter().map(|v| -v).collect();
        let aff: Vec<f64> = x.iter().map(|v| 3.0 * v - 2.0).collect();
        let y = [0.3, 0.1, 0.9, 0.4, 0.2];
        assert!((pearson(&x, &x).unwrap() - 1.0).abs() < 1e-15);
        assert!((pearson(&x, &neg).unwrap() + 1.0).abs() < 1e-15);
        assert!((pearson(&aff, &y).unwrap() - pearson(&x, &y).unwrap()).abs() < 1e-14);
        assert!(pearson(&[1.0; 5], &y).is_none());
    }

    #[test]
    fn pearson_gradient_matches_differences() {
        let x = [0.2, -1.0, 0.7, 1.5, -0.3, 0.9];
        let y = [1.0, 0.0, 2.0, 0.5, -1.0, 0.3];
        let (_, g) = pearson_with_grad(&x, &y).unwrap();
        for i in 0..x.len() {
            let mut a = x;
            a[i] += 1e-6;
            let mut b = x;
            b[i] -= 1e-6;
            let fd = (pearson(&a, &y).unwrap() - pearson(&b, &y).unwrap()) / 2e-6;
            assert!((fd - g[i]).abs() < 1e-8);
        }
    }
}
