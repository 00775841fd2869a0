//! Scale-variant feature pyramid. Each level refines its feature map with
//! a chain of progressive transfer layers (offset-guided deformable
//! convolution, a spatial attention mask, and a residual merge), then the
//! levels are fused coarse-to-fine by upscaling and a 1x1 merge
//! convolution. All convolutions keep spatial dims; the level schedule is
//! a stride-2 halving per level.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::{bilinear_resize, bilinear_sample, conv2d, softmax, Tensor};

/// Kernel side length shared by every convolution in the transfer layer.
pub const KERNEL: usize = 3;

/// Weights of one progressive feature transfer layer.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(try_from = "RawPftlParams")]
pub struct PftlParams {
    pub c: usize,
    /// Offset branch over the channel concatenation of both inputs:
    /// 2C -> 2*KERNEL*KERNEL channels, one (dy, dx) pair per kernel tap.
    pub offset_w: Tensor,
    pub offset_b: Tensor,
    /// Mask branch convolutions, one per input; the mask is a spatial
    /// softmax of their difference.
    pub mask_w0: Tensor,
    pub mask_b0: Tensor,
    pub mask_w1: Tensor,
    pub mask_b1: Tensor,
    /// Deformable kernel applied to the second input at offset taps.
    pub deform_w: Tensor,
    pub deform_b: Tensor,
    /// Residual merge over concat(masked deformable output, first input).
    pub residual_w: Tensor,
    pub residual_b: Tensor,
}

#[derive(Deserialize)]
struct RawPftlParams {
    c: usize,
    offset_w: Tensor,
    offset_b: Tensor,
    mask_w0: Tensor,
    mask_b0: Tensor,
    mask_w1: Tensor,
    mask_b1: Tensor,
    deform_w: Tensor,
    deform_b: Tensor,
    residual_w: Tensor,
    residual_b: Tensor,
}

impl TryFrom<RawPftlParams> for PftlParams {
    type Error = Error;

    fn try_from(r: RawPftlParams) -> Result<Self> {
        PftlParams::new(
            r.c, r.offset_w, r.offset_b, r.mask_w0, r.mask_b0, r.mask_w1, r.mask_b1, r.deform_w,
            r.deform_b, r.residual_w, r.residual_b,
        )
    }
}

fn check_conv(name: &str, w: &Tensor, b: &Tensor, k_out: usize, c_in: usize, k: usize) -> Result<()> {
    if w.shape() != [k_out, c_in, k, k] {
        return Err(Error::shape(format!(
            "{} weights must be [{}, {}, {}, {}], got {:?}",
            name,
            k_out,
            c_in,
            k,
            k,
            w.shape()
        )));
    }
    if b.shape() != [k_out] {
        return Err(Error::shape(format!(
            "{} bias must be [{}], got {:?}",
            name,
            k_out,
            b.shape()
        )));
    }
    Ok(())
}

impl PftlParams {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        c: usize,
        offset_w: Tensor,
        offset_b: Tensor,
        mask_w0: Tensor,
        mask_b0: Tensor,
        mask_w1: Tensor,
        mask_b1: Tensor,
        deform_w: Tensor,
        deform_b: Tensor,
        residual_w: Tensor,
        residual_b: Tensor,
    ) -> Result<Self> {
        if c == 0 {
            return Err(Error::arg("feature width must be positive"));
        }
        check_conv("offset", &offset_w, &offset_b, 2 * KERNEL * KERNEL, 2 * c, KERNEL)?;
        check_conv("mask (first input)", &mask_w0, &mask_b0, c, c, KERNEL)?;
        check_conv("mask (second input)", &mask_w1, &mask_b1, c, c, KERNEL)?;
        check_conv("deformable", &deform_w, &deform_b, c, c, KERNEL)?;
        check_conv("residual", &residual_w, &residual_b, c, 2 * c, KERNEL)?;
        Ok(PftlParams {
            c,
            offset_w,
            offset_b,
            mask_w0,
            mask_b0,
            mask_w1,
            mask_b1,
            deform_w,
            deform_b,
            residual_w,
            residual_b,
        })
    }

    pub fn seeded(c: usize, std: f64, rng: &mut impl Rng) -> Result<Self> {
        PftlParams::new(
            c,
            random_conv(2 * KERNEL * KERNEL, 2 * c, KERNEL, std, rng),
            Tensor::zeros(vec![2 * KERNEL * KERNEL]),
            random_conv(c, c, KERNEL, std, rng),
            Tensor::zeros(vec![c]),
            random_conv(c, c, KERNEL, std, rng),
            Tensor::zeros(vec![c]),
            random_conv(c, c, KERNEL, std, rng),
            Tensor::zeros(vec![c]),
            random_conv(c, 2 * c, KERNEL, std, rng),
            Tensor::zeros(vec![c]),
        )
    }

    /// Zero residual weights make the layer an exact identity on its first
    /// input.
    pub fn identity(c: usize, std: f64, rng: &mut impl Rng) -> Result<Self> {
        let mut p = PftlParams::seeded(c, std, rng)?;
        p.residual_w = Tensor::zeros(vec![c, 2 * c, KERNEL, KERNEL]);
        p.residual_b = Tensor::zeros(vec![c]);
        Ok(p)
    }
}

/// Parameters of the whole pyramid.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(try_from = "RawSvpParams")]
pub struct SvpParams {
    pub c: usize,
    pub m: usize,
    pub n: usize,
    /// Transfer layers, indexed [level][position in chain].
    pub pftl: Vec<Vec<PftlParams>>,
    /// Stride-2 convolutions building levels 1..M-1.
    pub down_w: Vec<Tensor>,
    pub down_b: Vec<Tensor>,
    /// 1x1 merge convolutions fusing concat(upscaled upper, own) per
    /// non-top level.
    pub merge_w: Vec<Tensor>,
    pub merge_b: Vec<Tensor>,
    /// Upscale factor applied to the upper level before merging. The
    /// stride-2 schedule makes 2 the only factor whose resized dims match.
    pub eps_up: f64,
}

#[derive(Deserialize)]
struct RawSvpParams {
    c: usize,
    m: usize,
    n: usize,
    pftl: Vec<Vec<PftlParams>>,
    down_w: Vec<Tensor>,
    down_b: Vec<Tensor>,
    merge_w: Vec<Tensor>,
    merge_b: Vec<Tensor>,
    eps_up: f64,
}

impl TryFrom<RawSvpParams> for SvpParams {
    type Error = Error;

    fn try_from(r: RawSvpParams) -> Result<Self> {
        SvpParams::new(r.c, r.m, r.n, r.pftl, r.down_w, r.down_b, r.merge_w, r.merge_b, r.eps_up)
    }
}

impl SvpParams {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        c: usize,
        m: usize,
        n: usize,
        pftl: Vec<Vec<PftlParams>>,
        down_w: Vec<Tensor>,
        down_b: Vec<Tensor>,
        merge_w: Vec<Tensor>,
        merge_b: Vec<Tensor>,
        eps_up: f64,
    ) -> Result<Self> {
        if m == 0 || n == 0 {
            return Err(Error::arg("pyramid needs m >= 1 levels and n >= 1 layers per level"));
        }
        if pftl.len() != m || pftl.iter().any(|level| level.len() != n) {
            return Err(Error::shape(format!(
                "expected {} levels of {} transfer layers",
                m, n
            )));
        }
        for level in &pftl {
            for p in level {
                if p.c != c {
                    return Err(Error::shape(format!(
                        "transfer layer width {} differs from pyramid width {}",
                        p.c, c
                    )));
                }
            }
        }
        if down_w.len() != m - 1 || down_b.len() != m - 1 {
            return Err(Error::shape(format!("expected {} downscale convolutions", m - 1)));
        }
        for (w, b) in down_w.iter().zip(&down_b) {
            check_conv("downscale", w, b, c, c, KERNEL)?;
        }
        if merge_w.len() != m - 1 || merge_b.len() != m - 1 {
            return Err(Error::shape(format!("expected {} merge convolutions", m - 1)));
        }
        for (w, b) in merge_w.iter().zip(&merge_b) {
            check_conv("merge", w, b, c, 2 * c, 1)?;
        }
        if !(eps_up > 0.0) || !eps_up.is_finite() {
            return Err(Error::arg("upscale factor must be a positive real"));
        }
        Ok(SvpParams { c, m, n, pftl, down_w, down_b, merge_w, merge_b, eps_up })
    }

    pub fn seeded(c: usize, m: usize, n: usize, std: f64, rng: &mut impl Rng) -> Result<Self> {
        let mut pftl = Vec::with_capacity(m);
        for _ in 0..m {
            let mut level = Vec::with_capacity(n);
            for _ in 0..n {
                level.push(PftlParams::seeded(c, std, rng)?);
            }
            pftl.push(level);
        }
        let mut down_w = Vec::new();
        let mut down_b = Vec::new();
        let mut merge_w = Vec::new();
        let mut merge_b = Vec::new();
        for _ in 1..m {
            down_w.push(random_conv(c, c, KERNEL, std, rng));
            down_b.push(Tensor::zeros(vec![c]));
            merge_w.push(random_conv(c, 2 * c, 1, std, rng));
            merge_b.push(Tensor::zeros(vec![c]));
        }
        SvpParams::new(c, m, n, pftl, down_w, down_b, merge_w, merge_b, 2.0)
    }
}

fn random_conv(k_out: usize, c_in: usize, k: usize, std: f64, rng: &mut impl Rng) -> Tensor {
    crate::attention::random_matrix(k_out, c_in * k * k, std, rng)
        .reshape(vec![k_out, c_in, k, k])
        .unwrap()
}

fn check_pair(x0: &Tensor, xprev: &Tensor, c: usize) -> Result<(usize, usize)> {
    if x0.rank() != 3 || x0.shape() != xprev.shape() {
        return Err(Error::arg(format!(
            "transfer layer inputs must be equal-shaped [C,H,W], got {:?} and {:?}",
            x0.shape(),
            xprev.shape()
        )));
    }
    if x0.shape()[0] != c {
        return Err(Error::shape(format!(
            "input has {} channels, parameters expect {}",
            x0.shape()[0],
            c
        )));
    }
    Ok((x0.shape()[1], x0.shape()[2]))
}

/// Per-position, per-tap sampling offsets from both inputs.
pub fn pftl_offsets(x0: &Tensor, xprev: &Tensor, params: &PftlParams) -> Result<Tensor> {
    check_pair(x0, xprev, params.c)?;
    let cat = Tensor::concat(x0, xprev, 0)?;
    conv2d(&cat, &params.offset_w, &params.offset_b, 1, 1)
}

/// Spatial attention mask: per channel, a softmax over all positions of
/// the difference between the two convolved inputs.
pub fn pftl_mask(x0: &Tensor, xprev: &Tensor, params: &PftlParams) -> Result<Tensor> {
    let (h, w) = check_pair(x0, xprev, params.c)?;
    let a = conv2d(x0, &params.mask_w0, &params.mask_b0, 1, 1)?;
    let b = conv2d(xprev, &params.mask_w1, &params.mask_b1, 1, 1)?;
    let diff = a.add(&b.scale(-1.0))?.reshape(vec![params.c, h * w])?;
    softmax(&diff, 1)?.reshape(vec![params.c, h, w])
}

/// Deformable convolution: every kernel tap samples the input bilinearly
/// at its grid position displaced by the learned offset. Taps landing
/// outside the input contribute zero, matching the zero padding of the
/// plain convolution this reduces to at zero offsets.
pub fn deformable_conv(x: &Tensor, offsets: &Tensor, w: &Tensor, b: &Tensor) -> Result<Tensor> {
    if x.rank() != 3 {
        return Err(Error::shape(format!("deformable input must be [C,H,W], got {:?}", x.shape())));
    }
    let (c, h, wd) = (x.shape()[0], x.shape()[1], x.shape()[2]);
    if offsets.shape() != [2 * KERNEL * KERNEL, h, wd] {
        return Err(Error::shape(format!(
            "offsets must be [{}, {}, {}], got {:?}",
            2 * KERNEL * KERNEL,
            h,
            wd,
            offsets.shape()
        )));
    }
    check_conv("deformable", w, b, c, c, KERNEL)?;
    let mut out = Tensor::zeros(vec![c, h, wd]);
    for k in 0..c {
        let bias = b.data()[k];
        for y in 0..h {
            for x_ in 0..wd {
                out.set3(k, y, x_, bias);
            }
        }
    }
    let half = (KERNEL / 2) as f64;
    for ky in 0..KERNEL {
        for kx in 0..KERNEL {
            let tap = ky * KERNEL + kx;
            let mut points = Vec::with_capacity(h * wd);
            for y in 0..h {
                for x_ in 0..wd {
                    let dy = offsets.get3(2 * tap, y, x_);
                    let dx = offsets.get3(2 * tap + 1, y, x_);
                    points.push((y as f64 + ky as f64 - half + dy, x_ as f64 + kx as f64 - half + dx));
                }
            }
            let sampled = bilinear_sample(x, &points)?;
            for k in 0..c {
                for cin in 0..c {
                    let wt = w.get4(k, cin, ky, kx);
                    if wt == 0.0 {
                        continue;
                    }
                    let mut p = 0usize;
                    for y in 0..h {
                        for x_ in 0..wd {
                            let v = out.get3(k, y, x_) + wt * sampled.get2(cin, p);
                            out.set3(k, y, x_, v);
                            p += 1;
                        }
                    }
                }
            }
        }
    }
    Ok(out)
}

/// One transfer layer: sample the second input deformably, gate it with
/// the spatial mask, merge with the first input, and add the merge back
/// onto the first input.
pub fn pftl_forward(x0: &Tensor, xprev: &Tensor, params: &PftlParams) -> Result<Tensor> {
    check_pair(x0, xprev, params.c)?;
    let offsets = pftl_offsets(x0, xprev, params)?;
    let mask = pftl_mask(x0, xprev, params)?;
    let deform = deformable_conv(xprev, &offsets, &params.deform_w, &params.deform_b)?;
    let mut gated = deform;
    for (g, m) in gated.data_mut().iter_mut().zip(mask.data()) {
        *g *= m;
    }
    let cat = Tensor::concat(&gated, x0, 0)?;
    let residual = conv2d(&cat, &params.residual_w, &params.residual_b, 1, 1)?;
    x0.add(&residual)
}

fn pftl_chain(level_input: &Tensor, layers: &[PftlParams]) -> Result<Tensor> {
    let mut xprev = level_input.clone();
    for p in layers {
        xprev = pftl_forward(level_input, &xprev, p)?;
    }
    Ok(xprev)
}

/// Full pyramid pass. The input list is the temporal feature stack with
/// the current frame at index 0; the refinement chain is self-scale, so
/// later entries are shape-checked and otherwise unused. Returns one
/// fused map per level, spatial dims halving per level.
pub fn svp_forward(x: &[Tensor], params: &SvpParams) -> Result<Vec<Tensor>> {
    let first = x.first().ok_or_else(|| Error::arg("pyramid input list is empty"))?;
    if first.rank() != 3 || first.shape()[0] != params.c {
        return Err(Error::shape(format!(
            "pyramid input must be [{}, H, W], got {:?}",
            params.c,
            first.shape()
        )));
    }
    for t in &x[1..] {
        if t.shape() != first.shape() {
            return Err(Error::arg(format!(
                "temporal stack entries must share shape {:?}, got {:?}",
                first.shape(),
                t.shape()
            )));
        }
    }
    let (h, w) = (first.shape()[1], first.shape()[2]);
    let div = 1usize << (params.m - 1);
    if h % div != 0 || w % div != 0 {
        return Err(Error::arg(format!(
            "spatial dims {}x{} must be divisible by {} for {} levels",
            h, w, div, params.m
        )));
    }

    let mut level_inputs = vec![first.clone()];
    for m in 1..params.m {
        let prev = &level_inputs[m - 1];
        level_inputs.push(conv2d(prev, &params.down_w[m - 1], &params.down_b[m - 1], 2, 1)?);
    }
    let mut refined = Vec::with_capacity(params.m);
    for m in 0..params.m {
        refined.push(pftl_chain(&level_inputs[m], &params.pftl[m])?);
    }

    let mut outputs: Vec<Option<Tensor>> = vec![None; params.m];
    outputs[params.m - 1] = Some(refined[params.m - 1].clone());
    for m in (0..params.m.saturating_sub(1)).rev() {
        let upper = outputs[m + 1].as_ref().unwrap();
        let up = bilinear_resize(upper, params.eps_up)?;
        if up.shape()[1..] != refined[m].shape()[1..] {
            return Err(Error::shape(format!(
                "upscale factor {} resizes level {} to {:?}, level {} needs {:?}",
                params.eps_up,
                m + 1,
                &up.shape()[1..],
                m,
                &refined[m].shape()[1..]
            )));
        }
        let cat = Tensor::concat(&up, &refined[m], 0)?;
        outputs[m] = Some(conv2d(&cat, &params.merge_w[m], &params.merge_b[m], 1, 0)?);
    }
    Ok(outputs.into_iter().map(|o| o.unwrap()).collect())
}
