//! Straight-line re-derivation of the reward from raw pixels, weights and
//! the random stream. Shares nothing with the library beyond its data types.

use rand::Rng;
use rand_distr::{Beta, Distribution};
use selectaugment::augment::{AugOp, LabeledBatch};
use selectaugment::rng;
use selectaugment::tensorcore::Mlp;

type Img = Vec<f64>;

enum Draw {
    Mix(usize, f64),
    Paste(usize, [usize; 4]),
    Erase([usize; 4]),
    Compose(Vec<Step>),
}

enum Step {
    Flip,
    Quarter,
    Shift(i64, i64),
    Erase([usize; 4]),
}

fn clipped_box(cy: usize, cx: usize, side_h: usize, side_w: usize, n: usize) -> [usize; 4] {
    let lo = |c: usize, s: usize| (c as i64 - (s / 2) as i64).clamp(0, n as i64) as usize;
    let hi =
        |c: usize, s: usize| (c as i64 - (s / 2) as i64 + s as i64).clamp(0, n as i64) as usize;
    [
        lo(cy, side_h),
        hi(cy, side_h),
        lo(cx, side_w),
        hi(cx, side_w),
    ]
}

fn draw_one(op: &AugOp, b: usize, n: usize, r: &mut rng::Rng) -> Draw {
    match *op {
        AugOp::Mixup { alpha } => {
            let j = r.random_range(0..b);
            Draw::Mix(j, Beta::new(alpha, alpha).unwrap().sample(r))
        }
        AugOp::CutMix { alpha } => {
            let j = r.random_range(0..b);
            let lam: f64 = Beta::new(alpha, alpha).unwrap().sample(r);
            let side = (n as f64 * (1.0 - lam).sqrt()).floor() as usize;
            let cy = r.random_range(0..n);
            let cx = r.random_range(0..n);
            Draw::Paste(j, clipped_box(cy, cx, side, side, n))
        }
        AugOp::Cutout { hole } => {
            let cy = r.random_range(0..n);
            let cx = r.random_range(0..n);
            Draw::Erase(clipped_box(cy, cx, hole, hole, n))
        }
        AugOp::RandTransform(m) => {
            let mut steps = Vec::new();
            for _ in 0..2 {
                steps.push(match r.random_range(0..4u8) {
                    0 => Step::Flip,
                    1 => Step::Quarter,
                    2 => {
                        let s = m.shift as i64;
                        let dy = r.random_range(-s..=s);
                        let dx = r.random_range(-s..=s);
                        Step::Shift(dy, dx)
                    }
                    _ => {
                        let cy = r.random_range(0..n);
                        let cx = r.random_range(0..n);
                        Step::Erase(clipped_box(cy, cx, m.erase, m.erase, n))
                    }
                });
            }
            Draw::Compose(steps)
        }
    }
}

fn blend(a: &[f64], b: &[f64], lam: f64) -> Vec<f64> {
    a.iter()
        .zip(b)
        .map(|(p, q)| (lam * p + (1.0 - lam) * q).clamp(0.0, 1.0))
        .collect()
}

fn fill(img: &Img, bx: [usize; 4], n: usize, value: Option<&Img>) -> Img {
    let mut out = img.clone();
    for y in bx[0]..bx[1] {
        for x in bx[2]..bx[3] {
            out[y * n + x] = value.map_or(0.5, |v| v[y * n + x]);
        }
    }
    out
}

fn step(img: &Img, s: &Step, n: usize) -> Img {
    let mut out = vec![0.0; n * n];
    match *s {
        Step::Flip => {
            for y in 0..n {
                for x in 0..n {
                    out[y * n + x] = img[y * n + n - 1 - x];
                }
            }
        }
        Step::Quarter => {
            for y in 0..n {
                for x in 0..n {
                    out[y * n + x] = img[x * n + n - 1 - y];
                }
            }
        }
        Step::Shift(dy, dx) => {
            for y in 0..n as i64 {
                for x in 0..n as i64 {
                    let (sy, sx) = (y - dy, x - dx);
                    if sy >= 0 && sy < n as i64 && sx >= 0 && sx < n as i64 {
                        out[(y * n as i64 + x) as usize] = img[(sy * n as i64 + sx) as usize];
                    }
                }
            }
        }
        Step::Erase(bx) => return fill(img, bx, n, None),
    }
    out
}

fn augment(
    xs: &[Img],
    ys: &[Vec<f64>],
    draws: &[Draw],
    sel: &[bool],
    n: usize,
) -> (Vec<Img>, Vec<Vec<f64>>) {
    let mut ox = xs.to_vec();
    let mut oy = ys.to_vec();
    for i in 0..xs.len() {
        if !sel[i] {
            continue;
        }
        match &draws[i] {
            Draw::Mix(j, lam) => {
                ox[i] = blend(&xs[i], &xs[*j], *lam);
                oy[i] = blend(&ys[i], &ys[*j], *lam);
            }
            Draw::Paste(j, bx) => {
                ox[i] = fill(&xs[i], *bx, n, Some(&xs[*j]));
                let area = (bx[1] - bx[0]) * (bx[3] - bx[2]);
                let lam = 1.0 - area as f64 / (n * n) as f64;
                oy[i] = blend(&ys[i], &ys[*j], lam);
            }
            Draw::Erase(bx) => ox[i] = fill(&xs[i], *bx, n, None),
            Draw::Compose(steps) => {
                let mut img = xs[i].clone();
                for s in steps {
                    img = step(&img, s, n);
                }
                ox[i] = img;
            }
        }
    }
    (ox, oy)
}

fn mean_loss(net: &Mlp, xs: &[Img], ys: &[Vec<f64>]) -> f64 {
    let mut total = 0.0;
    for (x, y) in xs.iter().zip(ys) {
        let mut a = x.clone();
        for (li, layer) in net.layers.iter().enumerate() {
            let (rows, cols) = (layer.weight.rows(), layer.weight.cols());
            let w = layer.weight.data();
            let mut z = vec![0.0; cols];
            for j in 0..cols {
                let mut s = 0.0;
                for p in 0..rows {
                    s += a[p] * w[p * cols + j];
                }
                z[j] = s + layer.bias[j];
            }
            if li + 1 < net.layers.len() {
                for v in &mut z {
                    *v = v.max(0.0);
                }
            }
            a = z;
        }
        let m = a.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mut se = 0.0;
        for v in &a {
            se += (v - m).exp();
        }
        let lse = m + se.ln();
        let mut l = 0.0;
        for (yj, zj) in y.iter().zip(&a) {
            l += yj * (zj - lse);
        }
        total += -l;
    }
    total / xs.len() as f64
}

pub fn oracle_reward(
    net: &Mlp,
    batch: &LabeledBatch,
    mask: &[bool],
    op: &AugOp,
    seed: u64,
) -> [f64; 4] {
    let n = batch.images[0].height;
    let xs: Vec<Img> = batch.images.iter().map(|im| im.pixels.clone()).collect();
    let ys = batch.labels.clone();
    let mut r = rng::seeded(seed);
    let draws: Vec<Draw> = (0..xs.len())
        .map(|_| draw_one(op, xs.len(), n, &mut r))
        .collect();
    let (sx, sy) = augment(&xs, &ys, &draws, mask, n);
    let (fx, fy) = augment(&xs, &ys, &draws, &vec![true; xs.len()], n);
    let lo = mean_loss(net, &xs, &ys);
    let ls = mean_loss(net, &sx, &sy);
    let lf = mean_loss(net, &fx, &fy);
    [lo, ls, lf, (lo - ls) + (lf - ls)]
}
