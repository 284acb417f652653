//! Forward pass and hand-written reverse pass of the spotting network.
//!
//! Frames go through a two-layer MLP, a four-branch temporal pyramid and a
//! width-3 convolution giving `C` feature vectors of size `f` per frame. The
//! segmentation module standardizes those features over the chunk, squashes
//! them with a sigmoid and scores each vector by its distance to the centre
//! of the unit hypercube. The spotting module pools the class features and
//! scores three times, flattens, and emits `N_pred` rows of
//! (confidence, location, class distribution).

use ndarray::{s, Array1, Array2, ArrayView2, Axis};

use super::layers::{
    affine, affine_backward, col2im, hstack, im2col, maxpool, maxpool_backward, relu_backward,
    relu_inplace, sigmoid,
};
use super::{ModelParams, Scalar};
use crate::error::{Error, Result};

/// Variance floor of the per-chunk standardization.
pub const NORM_EPS: f64 = 1e-5;

/// `1 - 2 ||v - 0.5|| / sqrt(f)` for a vector `v` in `(0, 1)^f`.
pub fn seg_score_head(v: &[f64]) -> Result<f64> {
    if v.is_empty() {
        return Err(Error::InvalidInput("empty class feature vector".into()));
    }
    if let Some(x) = v.iter().find(|&&x| !(x > 0.0 && x < 1.0)) {
        return Err(Error::InvalidInput(format!("class feature {x} outside (0, 1)")));
    }
    let d = v.iter().map(|&x| (x - 0.5) * (x - 0.5)).sum::<f64>().sqrt();
    Ok((1.0 - 2.0 * d / (v.len() as f64).sqrt()).clamp(0.0, 1.0))
}

/// Activations cached by [`forward`] for [`backward`], plus the outputs.
#[derive(Clone, Debug)]
pub struct ForwardTrace<T> {
    generation: u64,
    x: Array2<T>,
    h1: Array2<T>,
    h2: Array2<T>,
    pyr_cols: Vec<Array2<T>>,
    pyr_out: Vec<Array2<T>>,
    cat_col: Array2<T>,
    tcnn: Array2<T>,
    z: Array2<T>,
    inv_std: Array1<T>,
    v: Array2<T>,
    dist: Array2<T>,
    spot_in_len: usize,
    pool1_idx: Array2<usize>,
    col1: Array2<T>,
    s1: Array2<T>,
    pool2_idx: Array2<usize>,
    col2: Array2<T>,
    s2: Array2<T>,
    pool3_idx: Array2<usize>,
    flat: Array2<T>,
    loc_out: Array2<T>,
    cls_out: Array2<T>,
    /// Segmentation scores, `N_F x C`.
    pub seg_scores: Array2<f64>,
    /// Spotting predictions, `N_pred x (2 + C)`.
    pub predictions: Array2<f64>,
}

fn check_finite<T: Scalar>(a: &Array2<T>, layer: &str) -> Result<()> {
    if a.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFinite(format!("activation of layer {layer}")))
    }
}

pub fn forward<T: Scalar>(features: ArrayView2<T>, params: &ModelParams<T>) -> Result<ForwardTrace<T>> {
    let l = &params.layout;
    if features.dim() != (l.chunk_frames, l.feature_dim) {
        return Err(Error::ShapeMismatch(format!(
            "chunk is {:?}, network expects {}x{}",
            features.dim(),
            l.chunk_frames,
            l.feature_dim
        )));
    }
    let n = l.chunk_frames;
    let (c, f) = (l.num_classes, l.class_features);

    let mut h1 = affine(features, &params.mlp1);
    relu_inplace(&mut h1);
    let mut h2 = affine(h1.view(), &params.mlp2);
    relu_inplace(&mut h2);
    check_finite(&h2, "mlp")?;

    let mut pyr_cols = Vec::with_capacity(4);
    let mut pyr_out = Vec::with_capacity(4);
    for (p, &k) in params.pyramid.iter().zip(&l.pyramid_kernels) {
        let col = im2col(h2.view(), k);
        let mut out = affine(col.view(), p);
        relu_inplace(&mut out);
        pyr_cols.push(col);
        pyr_out.push(out);
    }
    let mut blocks = vec![h2.view()];
    blocks.extend(pyr_out.iter().map(|o| o.view()));
    let cat = hstack(&blocks);
    check_finite(&cat, "pyramid")?;
    let cat_col = im2col(cat.view(), 3);
    let tcnn = affine(cat_col.view(), &params.tcnn);
    check_finite(&tcnn, "tcnn")?;

    // segmentation module
    let nf = T::cast(n as f64);
    let mean = tcnn.sum_axis(Axis(0)) / nf;
    let centered = &tcnn - &mean.view().insert_axis(Axis(0));
    let var = centered.mapv(|x| x * x).sum_axis(Axis(0)) / nf;
    let inv_std = var.mapv(|v| T::one() / (v + T::cast(NORM_EPS)).sqrt());
    let z = &centered * &inv_std.view().insert_axis(Axis(0));
    let mut u = &z * &params.seg_gamma;
    u += &params.seg_beta;
    let v = u.mapv(sigmoid);
    let half = T::cast(0.5);
    let scale = T::cast(2.0 / (f as f64).sqrt());
    let mut dist = Array2::zeros((n, c));
    let mut seg = Array2::zeros((n, c));
    for i in 0..n {
        for k in 0..c {
            let d = v
                .slice(s![i, k * f..(k + 1) * f])
                .iter()
                .fold(T::zero(), |acc, &x| acc + (x - half) * (x - half))
                .sqrt();
            dist[[i, k]] = d;
            seg[[i, k]] = (T::one() - scale * d).max(T::zero()).min(T::one());
        }
    }
    check_finite(&seg, "segmentation")?;

    // spotting module
    let mut relu_tcnn = tcnn.clone();
    relu_inplace(&mut relu_tcnn);
    let spot_in = hstack(&[relu_tcnn.view(), seg.view()]);
    let (p1, pool1_idx) = maxpool(spot_in.view());
    let col1 = im2col(p1.view(), 3);
    let mut s1 = affine(col1.view(), &params.spot1);
    relu_inplace(&mut s1);
    let (p2, pool2_idx) = maxpool(s1.view());
    let col2 = im2col(p2.view(), 3);
    let mut s2 = affine(col2.view(), &params.spot2);
    relu_inplace(&mut s2);
    let (p3, pool3_idx) = maxpool(s2.view());
    let flat = p3
        .as_standard_layout()
        .into_owned()
        .into_shape_with_order((1, l.flat_features()))
        .expect("pooled size matches layout");
    let loc_out = affine(flat.view(), &params.head_loc).mapv(sigmoid);
    let logits = affine(flat.view(), &params.head_cls);
    check_finite(&loc_out, "spotting head")?;
    check_finite(&logits, "class head")?;

    let np = l.num_predictions;
    let mut cls_out = Array2::zeros((np, c));
    let mut predictions = Array2::zeros((np, 2 + c));
    for r in 0..np {
        let row = logits.slice(s![0, r * c..(r + 1) * c]);
        let m = row.fold(T::neg_infinity(), |a, &b| a.max(b));
        let e: Vec<T> = row.iter().map(|&x| (x - m).exp()).collect();
        let total = e.iter().fold(T::zero(), |a, &b| a + b);
        predictions[[r, 0]] = loc_out[[0, 2 * r]].as_f64();
        predictions[[r, 1]] = loc_out[[0, 2 * r + 1]].as_f64();
        for k in 0..c {
            cls_out[[r, k]] = e[k] / total;
            predictions[[r, 2 + k]] = cls_out[[r, k]].as_f64();
        }
    }

    Ok(ForwardTrace {
        generation: params.generation,
        x: features.to_owned(),
        h1,
        h2,
        pyr_cols,
        pyr_out,
        cat_col,
        seg_scores: seg.mapv(|x| x.as_f64()),
        tcnn,
        z,
        inv_std,
        v,
        dist,
        spot_in_len: spot_in.nrows(),
        pool1_idx,
        col1,
        s1,
        pool2_idx,
        col2,
        s2,
        pool3_idx,
        flat,
        loc_out,
        cls_out,
        predictions,
    })
}

/// Gradient of the loss with respect to every parameter, given the loss
/// gradients on the segmentation scores (`N_F x C`) and on the predictions
/// (`N_pred x (2 + C)`).
pub fn backward<T: Scalar>(
    trace: &ForwardTrace<T>,
    d_seg: ArrayView2<f64>,
    d_pred: ArrayView2<f64>,
    params: &ModelParams<T>,
) -> Result<ModelParams<T>> {
    if trace.generation != params.generation {
        return Err(Error::StaleTrace);
    }
    let l = &params.layout;
    let n = l.chunk_frames;
    let (c, f) = (l.num_classes, l.class_features);
    let np = l.num_predictions;
    if d_seg.dim() != (n, c) || d_pred.dim() != (np, 2 + c) {
        return Err(Error::ShapeMismatch(format!(
            "loss gradients {:?} and {:?}, expected {n}x{c} and {np}x{}",
            d_seg.dim(),
            d_pred.dim(),
            2 + c
        )));
    }
    let mut g = params.zeros_like();

    // heads
    let mut d_loc = Array2::zeros((1, 2 * np));
    let mut d_logits = Array2::zeros((1, c * np));
    for r in 0..np {
        for j in 0..2 {
            let y = trace.loc_out[[0, 2 * r + j]];
            d_loc[[0, 2 * r + j]] = T::cast(d_pred[[r, j]]) * y * (T::one() - y);
        }
        let dot = (0..c).fold(T::zero(), |a, k| a + T::cast(d_pred[[r, 2 + k]]) * trace.cls_out[[r, k]]);
        for k in 0..c {
            let sk = trace.cls_out[[r, k]];
            d_logits[[0, r * c + k]] = sk * (T::cast(d_pred[[r, 2 + k]]) - dot);
        }
    }
    let mut d_flat =
        affine_backward(trace.flat.view(), &params.head_loc, d_loc.view(), &mut g.head_loc, true).unwrap();
    d_flat += &affine_backward(trace.flat.view(), &params.head_cls, d_logits.view(), &mut g.head_cls, true)
        .unwrap();

    // spotting convolutions
    let [t1, t2, t3] = l.pooled_frames();
    let d_p3 = d_flat
        .into_shape_with_order((t3, l.spot_channels[1]))
        .expect("flat size matches layout");
    let mut d_s2 = maxpool_backward(d_p3.view(), &trace.pool3_idx, t2);
    relu_backward(&mut d_s2, trace.s2.view());
    let d_col2 = affine_backward(trace.col2.view(), &params.spot2, d_s2.view(), &mut g.spot2, true).unwrap();
    let d_p2 = col2im(d_col2.view(), 3, l.spot_channels[0]);
    let mut d_s1 = maxpool_backward(d_p2.view(), &trace.pool2_idx, t1);
    relu_backward(&mut d_s1, trace.s1.view());
    let d_col1 = affine_backward(trace.col1.view(), &params.spot1, d_s1.view(), &mut g.spot1, true).unwrap();
    let cf = l.class_channels();
    let d_p1 = col2im(d_col1.view(), 3, cf + c);
    let d_spot_in = maxpool_backward(d_p1.view(), &trace.pool1_idx, trace.spot_in_len);

    let mut d_tcnn = d_spot_in.slice(s![.., ..cf]).to_owned();
    relu_backward(&mut d_tcnn, trace.tcnn.view());
    let mut d_score = d_spot_in.slice(s![.., cf..]).to_owned();
    d_score.zip_mut_with(&d_seg, |a, &b| *a += T::cast(b));

    // segmentation module
    let half = T::cast(0.5);
    let scale = T::cast(2.0 / (f as f64).sqrt());
    let mut d_u = Array2::zeros((n, cf));
    for i in 0..n {
        for k in 0..c {
            let d = trace.dist[[i, k]];
            if d <= T::zero() {
                continue;
            }
            let coef = -scale * d_score[[i, k]] / d;
            for j in k * f..(k + 1) * f {
                let vj = trace.v[[i, j]];
                d_u[[i, j]] = coef * (vj - half) * vj * (T::one() - vj);
            }
        }
    }
    g.seg_gamma = (&d_u * &trace.z).sum_axis(Axis(0)).insert_axis(Axis(0));
    g.seg_beta = d_u.sum_axis(Axis(0)).insert_axis(Axis(0));
    let d_z = &d_u * &params.seg_gamma;
    let nf = T::cast(n as f64);
    let sum_dz = d_z.sum_axis(Axis(0));
    let sum_dz_z = (&d_z * &trace.z).sum_axis(Axis(0));
    for ((i, j), dz) in d_z.indexed_iter() {
        let term = nf * *dz - sum_dz[j] - trace.z[[i, j]] * sum_dz_z[j];
        d_tcnn[[i, j]] += trace.inv_std[j] / nf * term;
    }

    // temporal CNN
    let d_cat_col = affine_backward(trace.cat_col.view(), &params.tcnn, d_tcnn.view(), &mut g.tcnn, true).unwrap();
    let d_cat = col2im(d_cat_col.view(), 3, l.concat_channels());
    let mut d_h2 = d_cat.slice(s![.., ..l.mlp_out]).to_owned();
    let mut at = l.mlp_out;
    for (b, (&k, &ch)) in l.pyramid_kernels.iter().zip(&l.pyramid_channels).enumerate() {
        let mut d_out = d_cat.slice(s![.., at..at + ch]).to_owned();
        at += ch;
        relu_backward(&mut d_out, trace.pyr_out[b].view());
        let d_col =
            affine_backward(trace.pyr_cols[b].view(), &params.pyramid[b], d_out.view(), &mut g.pyramid[b], true)
                .unwrap();
        d_h2 += &col2im(d_col.view(), k, l.mlp_out);
    }
    relu_backward(&mut d_h2, trace.h2.view());
    let mut d_h1 = affine_backward(trace.h1.view(), &params.mlp2, d_h2.view(), &mut g.mlp2, true).unwrap();
    relu_backward(&mut d_h1, trace.h1.view());
    affine_backward(trace.x.view(), &params.mlp1, d_h1.view(), &mut g.mlp1, false);
    Ok(g)
}
