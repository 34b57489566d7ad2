//! Metric values against independent oracles.
//!
//! The 4×4 reference values were produced by `oracles/metrics_oracle.py`
//! (explicit 2-D kernels, scipy filtering and component labelling). The random
//! checks compare against straightforward re-implementations kept here.

use mattelab_core::eval::{conn_error, grad_error, mse, sad, EvalRegion, GRAD_SIGMA};
use mattelab_core::raster::AlphaMatte;
use mattelab_core::{Label, Trimap};
use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};

const STEP_PRED: [f64; 16] = [
    1.0, 1.0, 0.0, 0.0, 1.0, 1.0, 0.0, 0.0, 1.0, 1.0, 0.0, 0.0, 1.0, 1.0, 0.0, 0.0,
];
const STEP_GT: [f64; 16] = [
    1.0, 0.75, 0.25, 0.0, 1.0, 0.8, 0.3, 0.0, 1.0, 0.7, 0.2, 0.0, 0.9, 0.6, 0.1, 0.0,
];
const BLOB_GT: [f64; 16] = [
    1.0, 0.9, 0.0, 0.0, 0.8, 0.6, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0,
];
const BLOB_PRED: [f64; 16] = [
    1.0, 0.7, 0.0, 0.0, 0.9, 0.5, 0.0, 0.0, 0.0, 0.0, 0.0, 0.45, 0.0, 0.0, 0.3, 0.95,
];

fn m4(v: &[f64; 16]) -> AlphaMatte<f64> {
    AlphaMatte::new(4, 4, v.to_vec()).unwrap()
}

fn band() -> Trimap {
    Trimap::from_fn(4, 4, |x, _| {
        if (1..3).contains(&x) {
            Label::Unknown
        } else {
            Label::Background
        }
    })
    .unwrap()
}

fn assert_rel(got: f64, want: f64, tol: f64) {
    let rel = (got - want).abs() / want.abs().max(f64::MIN_POSITIVE);
    assert!(rel <= tol, "got {got:e}, want {want:e}, relative error {rel:e}");
}

#[test]
fn grad_step_edge_matches_reference() {
    let (p, g) = (m4(&STEP_PRED), m4(&STEP_GT));
    assert_rel(
        grad_error(&p, &g, EvalRegion::WholeImage).unwrap(),
        0.001588078104054351,
        1e-9,
    );
    assert_rel(
        grad_error(&p, &g, EvalRegion::UnknownOf(&band())).unwrap(),
        0.001434878785202212,
        1e-9,
    );
    assert_rel(
        grad_error(&m4(&BLOB_PRED), &m4(&BLOB_GT), EvalRegion::WholeImage).unwrap(),
        0.003487885020565537,
        1e-9,
    );
}

#[test]
fn conn_detached_blob_matches_reference() {
    let (p, g) = (m4(&BLOB_PRED), m4(&BLOB_GT));
    assert_rel(conn_error(&p, &g, EvalRegion::WholeImage).unwrap(), 0.0019, 1e-9);
    assert_rel(
        conn_error(&p, &g, EvalRegion::UnknownOf(&band())).unwrap(),
        0.0005000000000000001,
        1e-9,
    );
    assert_rel(
        conn_error(&m4(&STEP_PRED), &m4(&STEP_GT), EvalRegion::WholeImage).unwrap(),
        0.0019500000000000001,
        1e-9,
    );
}

fn random_pair(rng: &mut StdRng) -> (usize, usize, Vec<f64>, Vec<f64>) {
    let w = rng.random_range(1..=16);
    let h = rng.random_range(1..=16);
    let a = (0..w * h).map(|_| rng.random::<f64>()).collect();
    let b = (0..w * h).map(|_| rng.random::<f64>()).collect();
    (w, h, a, b)
}

#[test]
fn sad_and_mse_match_direct_summation() {
    let mut rng = StdRng::seed_from_u64(11);
    for _ in 0..100 {
        let (w, h, a, b) = random_pair(&mut rng);
        let (pa, pb) = (
            AlphaMatte::new(w, h, a.clone()).unwrap(),
            AlphaMatte::new(w, h, b.clone()).unwrap(),
        );
        let mut abs = 0.0;
        let mut sq = 0.0;
        for i in 0..w * h {
            abs += (a[i] - b[i]).abs();
            sq += (a[i] - b[i]) * (a[i] - b[i]);
        }
        assert_rel(sad(&pa, &pb, EvalRegion::WholeImage).unwrap(), abs / 1000.0, 1e-12);
        assert_rel(
            mse(&pa, &pb, EvalRegion::WholeImage).unwrap(),
            1000.0 * sq / (w * h) as f64,
            1e-12,
        );
    }
}

/// Direct 2-D convolution with the explicit outer-product kernel.
fn oracle_gradient(v: &[f64], w: usize, h: usize) -> Vec<f64> {
    let s = GRAD_SIGMA;
    let gauss = |x: f64| (-x * x / (2.0 * s * s)).exp() / (s * (2.0 * std::f64::consts::PI).sqrt());
    let dgauss = |x: f64| -x * gauss(x) / (s * s);
    let half = (s * (-2.0 * ((2.0 * std::f64::consts::PI).sqrt() * s * 0.01).ln()).sqrt()).ceil() as i64;
    let size = (2 * half + 1) as usize;
    let mut hx = vec![0.0; size * size];
    for i in 0..size {
        for j in 0..size {
            hx[i * size + j] = gauss(i as f64 - half as f64) * dgauss(j as f64 - half as f64);
        }
    }
    let norm = hx.iter().map(|k| k * k).sum::<f64>().sqrt();
    hx.iter_mut().for_each(|k| *k /= norm);
    // Mirror-extend explicitly by walking back and forth, one step at a time.
    let mirror = |mut i: i64, n: i64| loop {
        if i < 0 {
            i = -i - 1;
        } else if i >= n {
            i = 2 * n - i - 1;
        } else {
            return i as usize;
        }
    };
    let mut out = vec![0.0; w * h];
    for y in 0..h as i64 {
        for x in 0..w as i64 {
            let (mut gx, mut gy) = (0.0, 0.0);
            for i in 0..size as i64 {
                for j in 0..size as i64 {
                    let sy = mirror(y - (i - half), h as i64);
                    let sx = mirror(x - (j - half), w as i64);
                    let val = v[sy * w + sx];
                    gx += hx[(i * size as i64 + j) as usize] * val;
                    // The y kernel is the transpose of the x kernel.
                    gy += hx[(j * size as i64 + i) as usize] * val;
                }
            }
            out[(y * w as i64 + x) as usize] = (gx * gx + gy * gy).sqrt();
        }
    }
    out
}

/// Connectivity via union-find labelling and an explicit per-level sweep.
fn oracle_conn(p: &[f64], g: &[f64], w: usize, h: usize) -> f64 {
    fn find(parent: &mut [usize], mut i: usize) -> usize {
        while parent[i] != i {
            parent[i] = parent[parent[i]];
            i = parent[i];
        }
        i
    }
    let n = w * h;
    let mut level: Vec<f64> = vec![-1.0; n];
    for k in 1..10 {
        let t = k as f64 / 10.0;
        let on: Vec<bool> = (0..n).map(|i| p[i] >= t && g[i] >= t).collect();
        let mut parent: Vec<usize> = (0..n).collect();
        for i in 0..n {
            if !on[i] {
                continue;
            }
            if i % w + 1 < w && on[i + 1] {
                let (a, b) = (find(&mut parent, i), find(&mut parent, i + 1));
                parent[a.max(b)] = a.min(b);
            }
            if i + w < n && on[i + w] {
                let (a, b) = (find(&mut parent, i), find(&mut parent, i + w));
                parent[a.max(b)] = a.min(b);
            }
        }
        let mut size = vec![0usize; n];
        for (i, _) in on.iter().enumerate().filter(|(_, &set)| set) {
            let r = find(&mut parent, i);
            size[r] += 1;
        }
        // Roots are the smallest index of each component, i.e. its first pixel in row-major order.
        let mut best = None;
        for r in 0..n {
            if size[r] > 0 && best.is_none_or(|b: usize| size[r] > size[b]) {
                best = Some(r);
            }
        }
        for i in 0..n {
            let inside = on[i] && Some(find(&mut parent, i)) == best;
            if level[i] < 0.0 && !inside {
                level[i] = (k - 1) as f64 / 10.0;
            }
        }
    }
    let phi = |a: f64, l: f64| if a - l >= 0.15 { 1.0 - (a - l) } else { 1.0 };
    (0..n)
        .map(|i| {
            let l = if level[i] < 0.0 { 1.0 } else { level[i] };
            (phi(p[i], l) - phi(g[i], l)).abs()
        })
        .sum::<f64>()
        / 1000.0
}

#[test]
fn grad_and_conn_match_direct_oracles_on_random_pairs() {
    let mut rng = StdRng::seed_from_u64(12);
    for case in 0..100 {
        let (w, h, a, mut b) = random_pair(&mut rng);
        // Quantise half of the cases so thresholds are hit exactly and large components form.
        if case % 2 == 0 {
            b.iter_mut().for_each(|v| *v = (*v * 4.0).round() / 4.0);
        }
        let (pa, pb) = (
            AlphaMatte::new(w, h, a.clone()).unwrap(),
            AlphaMatte::new(w, h, b.clone()).unwrap(),
        );
        let (ga, gb) = (oracle_gradient(&a, w, h), oracle_gradient(&b, w, h));
        let want_grad = ga.iter().zip(&gb).map(|(x, y)| (x - y).powi(2)).sum::<f64>() / 1000.0;
        let got_grad = grad_error(&pa, &pb, EvalRegion::WholeImage).unwrap();
        assert!(
            (got_grad - want_grad).abs() <= 1e-9 * want_grad.abs().max(1e-12),
            "case {case}: {got_grad} vs {want_grad}"
        );
        let want_conn = oracle_conn(&a, &b, w, h);
        let got_conn = conn_error(&pa, &pb, EvalRegion::WholeImage).unwrap();
        assert!(
            (got_conn - want_conn).abs() <= 1e-9 * want_conn.abs().max(1e-12),
            "case {case}: {got_conn} vs {want_conn}"
        );
    }
}

#[test]
fn identity_symmetry_and_region_monotonicity() {
    let mut rng = StdRng::seed_from_u64(13);
    for _ in 0..50 {
        let (w, h, a, b) = random_pair(&mut rng);
        let (pa, pb) = (AlphaMatte::new(w, h, a).unwrap(), AlphaMatte::new(w, h, b).unwrap());
        let labels: Vec<Label> = (0..w * h)
            .map(|_| {
                if rng.random_bool(0.5) {
                    Label::Unknown
                } else {
                    Label::Foreground
                }
            })
            .collect();
        let mut small = Trimap::new(w, h, labels).unwrap();
        small.set(0, 0, Label::Unknown);
        for r in [EvalRegion::WholeImage, EvalRegion::UnknownOf(&small)] {
            assert_eq!(sad(&pa, &pa, r).unwrap(), 0.0);
            assert_eq!(mse(&pa, &pa, r).unwrap(), 0.0);
            assert_eq!(grad_error(&pa, &pa, r).unwrap(), 0.0);
            assert_eq!(conn_error(&pa, &pa, r).unwrap(), 0.0);
            assert_eq!(sad(&pa, &pb, r).unwrap(), sad(&pb, &pa, r).unwrap());
            assert_eq!(mse(&pa, &pb, r).unwrap(), mse(&pb, &pa, r).unwrap());
        }
        assert!(
            sad(&pa, &pb, EvalRegion::WholeImage).unwrap() >= sad(&pa, &pb, EvalRegion::UnknownOf(&small)).unwrap()
        );
    }
}
