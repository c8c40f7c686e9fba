#![allow(clippy::needless_range_loop)]

//! Fixtures and independent reference implementations shared by the
//! integration tests. The oracles are written as plain loops over the
//! method definitions and deliberately share no code with the library.
#![allow(dead_code)]

use std::path::Path;

use merge_spectrum::store::{write_checkpoint, WriterOptions};
use merge_spectrum::{Checkpoint, DType, TensorBuffer};

pub fn write_f32(dir: &Path, tensors: &[(&str, Vec<usize>, Vec<f32>)]) -> Checkpoint {
    let bufs = tensors
        .iter()
        .map(|(n, s, v)| TensorBuffer::new(*n, DType::F32, s.clone(), v.clone()).unwrap());
    write_checkpoint(bufs, dir, WriterOptions::default()).unwrap()
}

/// Two-layer direct/think/base triple under `root`.
pub fn toy_parents(root: &Path) {
    let w = |f: fn(usize) -> f32| (0..12).map(f).collect::<Vec<_>>();
    let b = |f: fn(usize) -> f32| (0..4).map(f).collect::<Vec<_>>();
    write_f32(
        &root.join("base"),
        &[
            (
                "layers.0.weight",
                vec![3, 4],
                w(|i| (i as f32 - 6.0) * 0.125),
            ),
            ("layers.1.bias", vec![4], b(|i| i as f32 * 0.5)),
        ],
    );
    write_f32(
        &root.join("direct"),
        &[
            (
                "layers.0.weight",
                vec![3, 4],
                w(|i| (i as f32 - 6.0) * 0.125 + 0.01 * (i % 3) as f32),
            ),
            ("layers.1.bias", vec![4], b(|i| i as f32 * 0.5 - 0.03)),
        ],
    );
    write_f32(
        &root.join("think"),
        &[
            (
                "layers.1.bias",
                vec![4],
                b(|i| i as f32 * 0.5 + 0.07 * i as f32),
            ),
            (
                "layers.0.weight",
                vec![3, 4],
                w(|i| (i as f32 - 6.0) * 0.125 - 0.02 * (i % 5) as f32 + 0.005),
            ),
        ],
    );
    std::fs::write(
        root.join("think/config.json"),
        br#"{"model_type":"toy","think_tags":true}"#,
    )
    .unwrap();
}

pub mod oracle {
    /// ⌈fraction·n⌉, ignoring float noise right at an integer.
    pub fn count(fraction: f64, n: usize) -> usize {
        ((fraction * n as f64 - 1e-9).ceil().max(0.0) as usize).min(n)
    }

    /// Indices of the `m` largest scores; equal scores favour the lower
    /// index.
    pub fn top_indices(scores: &[f64], m: usize) -> Vec<usize> {
        let mut idx: Vec<usize> = (0..scores.len()).collect();
        // stable sort keeps index order among equal scores
        idx.sort_by(|&a, &b| scores[b].partial_cmp(&scores[a]).unwrap());
        idx.truncate(m);
        idx
    }

    fn trim(v: &[f64], fraction: f64) -> Vec<f64> {
        let mags: Vec<f64> = v.iter().map(|x| x.abs()).collect();
        let keep = top_indices(&mags, count(fraction, v.len()));
        let mut out = vec![0.0; v.len()];
        for i in keep {
            out[i] = v[i];
        }
        out
    }

    fn sgn(x: f64) -> i32 {
        if x > 0.0 {
            1
        } else if x < 0.0 {
            -1
        } else {
            0
        }
    }

    fn wide(v: &[f32]) -> Vec<f64> {
        v.iter().map(|&x| f64::from(x)).collect()
    }

    fn sub(a: &[f32], b: &[f32]) -> Vec<f64> {
        a.iter()
            .zip(b)
            .map(|(&x, &y)| f64::from(x) - f64::from(y))
            .collect()
    }

    fn narrow(v: Vec<f64>) -> Vec<f32> {
        v.into_iter().map(|x| x as f32).collect()
    }

    pub fn weighted_average(d: &[f32], t: &[f32], lambda: f64) -> Vec<f32> {
        narrow(
            d.iter()
                .zip(t)
                .map(|(&a, &b)| f64::from(a) + lambda * (f64::from(b) - f64::from(a)))
                .collect(),
        )
    }

    /// Trim each delta to its largest entries, elect the sign of the
    /// weighted sum, average the entries that agree with it.
    pub fn ties(d: &[f32], t: &[f32], base: &[f32], lambda: f64, density: f64) -> Vec<f32> {
        let dd = trim(&sub(d, base), density);
        let dt = trim(&sub(t, base), density);
        let mut out = Vec::new();
        for i in 0..d.len() {
            let s = sgn((1.0 - lambda) * dd[i] + lambda * dt[i]);
            let mut num = 0.0;
            let mut den = 0.0;
            for (w, v) in [(1.0 - lambda, dd[i]), (lambda, dt[i])] {
                if s != 0 && sgn(v) == s {
                    num += w * v;
                    den += w;
                }
            }
            let delta = if den > 0.0 { num / den } else { 0.0 };
            out.push(f64::from(base[i]) + delta);
        }
        narrow(out)
    }

    /// Elect the sign of the mean delta, build the unified vector, mask it
    /// per task and rescale to each task's mean magnitude.
    pub fn emr(d: &[f32], t: &[f32], base: &[f32], lambda: f64) -> Vec<f32> {
        let tasks = [sub(d, base), sub(t, base)];
        let n = d.len();
        let mut s = vec![0; n];
        let mut unified = vec![0.0; n];
        for i in 0..n {
            s[i] = sgn((tasks[0][i] + tasks[1][i]) / 2.0);
            let mut best: f64 = 0.0;
            for task in &tasks {
                best = best.max(s[i] as f64 * task[i]);
            }
            unified[i] = s[i] as f64 * best;
        }
        let mut recon = Vec::new();
        for task in &tasks {
            let mut masked = vec![0.0; n];
            let mut num = 0.0;
            let mut den = 0.0;
            for i in 0..n {
                if s[i] != 0 && sgn(task[i]) == s[i] {
                    masked[i] = unified[i];
                }
                num += task[i].abs();
                den += masked[i].abs();
            }
            let rho = if den > 0.0 { num / den } else { 0.0 };
            recon.push(masked.iter().map(|m| rho * m).collect::<Vec<f64>>());
        }
        narrow(
            (0..n)
                .map(|i| f64::from(base[i]) + (1.0 - lambda) * recon[0][i] + lambda * recon[1][i])
                .collect(),
        )
    }

    /// Shared part is the base plus the mean delta; each parent keeps the
    /// largest entries of its own exclusive remainder.
    pub fn twin(d: &[f32], t: &[f32], base: &[f32], lambda: f64, mask_rate: f64) -> Vec<f32> {
        let n = d.len();
        let shared: Vec<f64> = (0..n)
            .map(|i| {
                let b = f64::from(base[i]);
                b + ((f64::from(d[i]) - b) + (f64::from(t[i]) - b)) / 2.0
            })
            .collect();
        let excl = |theta: &[f32]| -> Vec<f64> {
            trim(
                &(0..n)
                    .map(|i| f64::from(theta[i]) - shared[i])
                    .collect::<Vec<_>>(),
                1.0 - mask_rate,
            )
        };
        let (vd, vt) = (excl(d), excl(t));
        narrow(
            (0..n)
                .map(|i| shared[i] + (1.0 - lambda) * vd[i] + lambda * vt[i])
                .collect(),
        )
    }

    fn selected(d: &[f32], t: &[f32], k: f64) -> Vec<bool> {
        let diffs: Vec<f64> = sub(t, d).iter().map(|x| x.abs()).collect();
        let mut sel = vec![false; d.len()];
        for i in top_indices(&diffs, count(k, d.len())) {
            sel[i] = true;
        }
        sel
    }

    fn mid(a: f32, b: f32) -> f32 {
        ((f64::from(a) + f64::from(b)) * 0.5) as f32
    }

    pub fn topk_replace(d: &[f32], t: &[f32], k: f64) -> Vec<f32> {
        let sel = selected(d, t, k);
        (0..d.len())
            .map(|i| if sel[i] { t[i] } else { d[i] })
            .collect()
    }

    pub fn topk_diff_average(d: &[f32], t: &[f32], k: f64) -> Vec<f32> {
        let sel = selected(d, t, k);
        (0..d.len())
            .map(|i| if sel[i] { mid(d[i], t[i]) } else { d[i] })
            .collect()
    }

    pub fn global_avg_topk_override(d: &[f32], t: &[f32], k: f64) -> Vec<f32> {
        let sel = selected(d, t, k);
        (0..d.len())
            .map(|i| if sel[i] { t[i] } else { mid(d[i], t[i]) })
            .collect()
    }

    /// Row-major dense matrix.
    #[derive(Clone, Debug)]
    pub struct Mat {
        pub rows: usize,
        pub cols: usize,
        pub a: Vec<f64>,
    }

    impl Mat {
        fn at(&self, r: usize, c: usize) -> f64 {
            self.a[r * self.cols + c]
        }
    }

    /// One-sided Jacobi SVD: rotates column pairs until all columns are
    /// orthogonal. Returns (U·Σ as columns, Σ, V).
    fn jacobi_svd(m: &Mat) -> (Vec<Vec<f64>>, Vec<f64>, Vec<Vec<f64>>) {
        let (r, c) = (m.rows, m.cols);
        let mut cols: Vec<Vec<f64>> = (0..c)
            .map(|j| (0..r).map(|i| m.at(i, j)).collect())
            .collect();
        let mut v: Vec<Vec<f64>> = (0..c)
            .map(|j| (0..c).map(|i| f64::from(u8::from(i == j))).collect())
            .collect();
        for _sweep in 0..100 {
            let mut off = 0.0f64;
            for p in 0..c {
                for q in p + 1..c {
                    let alpha: f64 = cols[p].iter().map(|x| x * x).sum();
                    let beta: f64 = cols[q].iter().map(|x| x * x).sum();
                    let gamma: f64 = cols[p].iter().zip(&cols[q]).map(|(x, y)| x * y).sum();
                    if gamma == 0.0 {
                        continue;
                    }
                    off = off.max(gamma.abs() / (alpha * beta).sqrt());
                    let zeta = (beta - alpha) / (2.0 * gamma);
                    let tan = zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
                    let cos = 1.0 / (1.0 + tan * tan).sqrt();
                    let sin = cos * tan;
                    for k in 0..r {
                        let (x, y) = (cols[p][k], cols[q][k]);
                        cols[p][k] = cos * x - sin * y;
                        cols[q][k] = sin * x + cos * y;
                    }
                    for k in 0..c {
                        let (x, y) = (v[p][k], v[q][k]);
                        v[p][k] = cos * x - sin * y;
                        v[q][k] = sin * x + cos * y;
                    }
                }
            }
            if off < 1e-15 {
                break;
            }
        }
        let sigma = cols
            .iter()
            .map(|col| col.iter().map(|x| x * x).sum::<f64>().sqrt())
            .collect();
        (cols, sigma, v)
    }

    /// Zeroes singular values below `tau·σ_max` and recomposes.
    pub fn svt(m: &Mat, tau: f64) -> Mat {
        // work on the wide orientation so there are at most min(r, c) columns
        let transpose = m.cols > m.rows;
        let work = if transpose {
            Mat {
                rows: m.cols,
                cols: m.rows,
                a: (0..m.cols * m.rows)
                    .map(|k| m.at(k % m.rows, k / m.rows))
                    .collect(),
            }
        } else {
            m.clone()
        };
        let (us, sigma, v) = jacobi_svd(&work);
        let smax = sigma.iter().copied().fold(0.0, f64::max);
        let mut out = vec![0.0; work.rows * work.cols];
        for j in 0..work.cols {
            if smax == 0.0 || sigma[j] < tau * smax {
                continue;
            }
            // (U·Σ)_j ⊗ V_j; v[j] holds the j-th column of V
            for r in 0..work.rows {
                for c in 0..work.cols {
                    out[r * work.cols + c] += us[j][r] * v[j][c];
                }
            }
        }
        if transpose {
            Mat {
                rows: m.rows,
                cols: m.cols,
                a: (0..m.rows * m.cols)
                    .map(|k| out[(k % m.cols) * work.cols + k / m.cols])
                    .collect(),
            }
        } else {
            Mat {
                rows: work.rows,
                cols: work.cols,
                a: out,
            }
        }
    }

    pub fn lore(
        d: &[f32],
        t: &[f32],
        shape: &[usize],
        lambda: f64,
        tau: f64,
        iters: usize,
    ) -> Vec<f64> {
        let (dw, tw) = (wide(d), wide(t));
        let n = d.len();
        let mut center: Vec<f64> = (0..n).map(|i| (dw[i] + tw[i]) / 2.0).collect();
        if shape.len() < 2 {
            return (0..n)
                .map(|i| {
                    center[i] + (1.0 - lambda) * (dw[i] - center[i]) + lambda * (tw[i] - center[i])
                })
                .collect();
        }
        let rows = shape[0];
        let cols = n / rows;
        let mut delta_d = vec![0.0; n];
        let mut delta_t = vec![0.0; n];
        for _ in 0..iters {
            let diff = |theta: &[f64]| Mat {
                rows,
                cols,
                a: (0..n).map(|i| theta[i] - center[i]).collect(),
            };
            delta_d = svt(&diff(&dw), tau).a;
            delta_t = svt(&diff(&tw), tau).a;
            center = (0..n)
                .map(|i| ((dw[i] - delta_d[i]) + (tw[i] - delta_t[i])) / 2.0)
                .collect();
        }
        (0..n)
            .map(|i| center[i] + (1.0 - lambda) * delta_d[i] + lambda * delta_t[i])
            .collect()
    }

    /// Non-dominated subset by checking every pair.
    pub fn pareto_front_ids(points: &[(String, f64, f64)]) -> Vec<String> {
        let mut ids: Vec<String> = points
            .iter()
            .filter(|(_, tok, acc)| {
                !points
                    .iter()
                    .any(|(_, t2, a2)| a2 >= acc && t2 <= tok && (a2 > acc || t2 < tok))
            })
            .map(|(id, ..)| id.clone())
            .collect();
        ids.sort();
        ids
    }
}
