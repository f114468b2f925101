//! Independent oracles shared by the integration tests and the acceptance
//! harness. Nothing here calls the library to compute an expected value.

#![allow(dead_code)]

use std::collections::VecDeque;

use asymseg::autodiff::{field_to_tensor, logits_to_field, Architecture, Layer, Tensor, TinyNet};
use asymseg::losses::{self, LossConfig, LossKind};
use asymseg::metrics::{hausdorff95, largest_component, Connectivity, Mask};
use asymseg::regularizers::{asym_mixup_label, MixupChoice};
use asymseg::{LabelField, LogitField, Rarity};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn lse(z: &[f64]) -> f64 {
    let m = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    m + z.iter().map(|v| (v - m).exp()).sum::<f64>().ln()
}

fn one_hot(c: usize, t: usize) -> Vec<f64> {
    (0..c).map(|j| if j == t { 1.0 } else { 0.0 }).collect()
}

/// `w · (p - y)` with the true-class entry written as `-w Σ_{k≠t} p_k`.
fn scaled_residual(z: &[f64], t: usize, w: f64) -> Vec<f64> {
    let l = lse(z);
    let p: Vec<f64> = z.iter().map(|v| (v - l).exp()).collect();
    let others: f64 = (0..z.len()).filter(|&k| k != t).map(|k| p[k]).sum();
    (0..z.len())
        .map(|k| if k == t { -w * others } else { w * p[k] })
        .collect()
}

fn max_rel(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).abs() / y.abs().max(f64::MIN_POSITIVE))
        .fold(0.0, f64::max)
}

pub struct IdentityReport {
    pub draws: usize,
    pub margin_max_rel: f64,
    pub focal_max_rel: f64,
}

/// Single-pixel margin and focal gradients against `w (p - y)` with both
/// weights evaluated from their closed forms.
pub fn gradient_identities(draws: usize, seed: u64) -> IdentityReport {
    let mut r = rng(seed);
    let mut report = IdentityReport {
        draws,
        margin_max_rel: 0.0,
        focal_max_rel: 0.0,
    };
    for _ in 0..draws {
        let c = [2, 3, 5][r.random_range(0..3)];
        let z: Vec<f64> = (0..c).map(|_| r.random_range(-10.0..=10.0)).collect();
        let t = r.random_range(0..c);
        let m = r.random_range(0.0..=5.0);
        let gamma = r.random_range(0.0..=6.0);
        let y = one_hot(c, t);
        let ones = Rarity::ones(c);
        let zf = LogitField::new(c, z.clone()).unwrap();
        let yf = LabelField::from_classes(c, &[t]).unwrap();

        let shifted: Vec<f64> = z.iter().zip(&y).map(|(a, b)| a - b * m).collect();
        let w_m = (lse(&z) - lse(&shifted)).exp();
        let (_, g) = losses::margin_ce_loss(&zf, &yf, m, &ones, false).unwrap();
        let expect = scaled_residual(&z, t, w_m);
        let lib_w = losses::margin_weight(&z, &y, m).unwrap();
        report.margin_max_rel = report
            .margin_max_rel
            .max(max_rel(g.values(), &expect))
            .max(max_rel(&[lib_w], &[w_m]));

        let log_p = z[t] - lse(&z);
        let p = log_p.exp();
        let q: f64 = (0..c).filter(|&k| k != t).map(|k| (z[k] - lse(&z)).exp()).sum();
        let w_f = q.powf(gamma) - gamma * p * log_p * q.powf(gamma - 1.0);
        let (_, g) = losses::focal_ce_loss(&zf, &yf, gamma, &ones, false).unwrap();
        let expect = scaled_residual(&z, t, w_f);
        report.focal_max_rel = report.focal_max_rel.max(max_rel(g.values(), &expect));
        if p < 1.0 - 1e-12 {
            // focal_weight only sees the rounded p, so compare it against the
            // closed form at that same p rather than at the exact 1 - p
            let q = 1.0 - p;
            let w_p = q.powf(gamma) - gamma * p * p.ln() * q.powf(gamma - 1.0);
            let lib_w = losses::focal_weight(p, gamma).unwrap();
            report.focal_max_rel = report.focal_max_rel.max(max_rel(&[lib_w], &[w_p]));
        }
    }
    report
}

pub fn random_field(r: &mut ChaCha8Rng, c: usize, n: usize, scale: f64) -> (LogitField, LabelField) {
    let z = (0..c * n).map(|_| r.random_range(-scale..=scale)).collect();
    let labels: Vec<usize> = (0..n).map(|_| r.random_range(0..c)).collect();
    (
        LogitField::new(c, z).unwrap(),
        LabelField::from_classes(c, &labels).unwrap(),
    )
}

/// Soft targets with some all-zero (skipped) rows.
pub fn random_soft_labels(r: &mut ChaCha8Rng, c: usize, n: usize) -> LabelField {
    let mut t = vec![0.0; c * n];
    for row in t.chunks_exact_mut(c) {
        if r.random_bool(0.2) {
            continue;
        }
        let w: Vec<f64> = (0..c).map(|_| r.random_range(0.0..1.0)).collect();
        let s: f64 = w.iter().sum();
        for (o, v) in row.iter_mut().zip(w) {
            *o = v / s;
        }
    }
    LabelField::from_soft(c, t).unwrap()
}

fn eval(cfg: &LossConfig, z: &LogitField, y: &LabelField) -> (f64, Vec<f64>) {
    let (v, g) = losses::evaluate(cfg, z, y).unwrap();
    (v.total, g.into_values())
}

fn max_abs_diff(a: &(f64, Vec<f64>), b: &(f64, Vec<f64>)) -> f64 {
    a.1.iter()
        .zip(&b.1)
        .map(|(x, y)| (x - y).abs())
        .fold((a.0 - b.0).abs(), f64::max)
}

/// Each reduction of the loss family with the largest deviation, in value
/// or gradient, seen over a few random fields.
pub fn reduction_lattice(seed: u64) -> Vec<(&'static str, f64)> {
    let mut r = rng(seed);
    let mut worst: Vec<(&'static str, f64)> = Vec::new();
    let mut record = |name: &'static str, d: f64| match worst.iter_mut().find(|(n, _)| *n == name) {
        Some(e) => e.1 = e.1.max(d),
        None => worst.push((name, d)),
    };
    for _ in 0..20 {
        let c = r.random_range(2..=4);
        let (z, y) = random_field(&mut r, c, 24, 5.0);
        let m = r.random_range(0.1..3.0);
        let g = r.random_range(0.5..4.0);
        let rare = Rarity::indicator(c, &[c - 1]);
        let ones = Rarity::ones(c);
        let zeros = Rarity::zeros(c);
        let cfg = |kind, rarity: &Rarity| LossConfig::new(kind, rarity.clone());
        let ce = eval(&cfg(LossKind::Ce, &rare), &z, &y);
        let dsc = eval(&cfg(LossKind::Dsc, &rare), &z, &y);
        for asym in [false, true] {
            let d = eval(&cfg(LossKind::MarginCe, &rare).asymmetric(asym), &z, &y);
            record("margin_ce at m=0 is ce", max_abs_diff(&d, &ce));
            let d = eval(&cfg(LossKind::MarginDsc, &rare).asymmetric(asym), &z, &y);
            record("margin_dsc at m=0 is dsc", max_abs_diff(&d, &dsc));
            let d = eval(&cfg(LossKind::FocalCe, &rare).asymmetric(asym), &z, &y);
            record("focal_ce at gamma=0 is ce", max_abs_diff(&d, &ce));
            let d = eval(&cfg(LossKind::FocalDsc, &rare).asymmetric(asym), &z, &y);
            record("focal_dsc at gamma=0 is dsc", max_abs_diff(&d, &dsc));
        }
        let sym_mce = eval(&cfg(LossKind::MarginCe, &rare).with_margin(m), &z, &y);
        let d = eval(&cfg(LossKind::MarginCe, &ones).with_margin(m).asymmetric(true), &z, &y);
        record("asym margin_ce at r=1 is margin_ce", max_abs_diff(&d, &sym_mce));
        let sym_mdsc = eval(&cfg(LossKind::MarginDsc, &rare).with_margin(m), &z, &y);
        let d = eval(&cfg(LossKind::MarginDsc, &ones).with_margin(m).asymmetric(true), &z, &y);
        record("asym margin_dsc at r=1 is margin_dsc", max_abs_diff(&d, &sym_mdsc));
        let d = eval(&cfg(LossKind::MarginCe, &zeros).with_margin(m).asymmetric(true), &z, &y);
        record("asym margin_ce at r=0 is ce", max_abs_diff(&d, &ce));
        let d = eval(&cfg(LossKind::MarginDsc, &zeros).with_margin(m).asymmetric(true), &z, &y);
        record("asym margin_dsc at r=0 is dsc", max_abs_diff(&d, &dsc));

        // rare classes escape attenuation, so an all-rare vector removes it
        let d = eval(&cfg(LossKind::FocalCe, &ones).with_gamma(g).asymmetric(true), &z, &y);
        record("asym focal_ce at r=1 is ce", max_abs_diff(&d, &ce));
        let d = eval(&cfg(LossKind::FocalDsc, &ones).with_gamma(g).asymmetric(true), &z, &y);
        record("asym focal_dsc at r=1 is dsc", max_abs_diff(&d, &dsc));
        let sym_fce = eval(&cfg(LossKind::FocalCe, &rare).with_gamma(g), &z, &y);
        let d = eval(&cfg(LossKind::FocalCe, &zeros).with_gamma(g).asymmetric(true), &z, &y);
        record("asym focal_ce at r=0 is focal_ce", max_abs_diff(&d, &sym_fce));
        let sym_fdsc = eval(&cfg(LossKind::FocalDsc, &rare).with_gamma(g), &z, &y);
        let d = eval(&cfg(LossKind::FocalDsc, &zeros).with_gamma(g).asymmetric(true), &z, &y);
        record("asym focal_dsc at r=0 is focal_dsc", max_abs_diff(&d, &sym_fdsc));

        let comb = |mm: f64, gg: f64| cfg(LossKind::CombinedCe, &rare).with_margin(mm).with_gamma(gg).asymmetric(true);
        let d = eval(&comb(0.0, 0.0), &z, &y);
        record("combined at m=0, gamma=0 is ce", max_abs_diff(&d, &ce));
        let afce = eval(&cfg(LossKind::FocalCe, &rare).with_gamma(g).asymmetric(true), &z, &y);
        let d = eval(&comb(0.0, g), &z, &y);
        record("combined at m=0 is asym focal_ce", max_abs_diff(&d, &afce));
        let amce = eval(&cfg(LossKind::MarginCe, &rare).with_margin(m).asymmetric(true), &z, &y);
        let d = eval(&comb(m, 0.0), &z, &y);
        record("combined at gamma=0 is asym margin_ce", max_abs_diff(&d, &amce));
        let d = eval(&cfg(LossKind::CombinedDsc, &rare).asymmetric(true), &z, &y);
        record("combined_dsc at m=0, gamma=0 is dsc", max_abs_diff(&d, &dsc));
        let d = eval(&cfg(LossKind::Fbeta, &rare), &z, &y);
        record("fbeta at beta=1 is dsc", max_abs_diff(&d, &dsc));
    }
    worst
}

/// Every configurable loss kind, with and without asymmetry where relevant.
pub fn loss_menu(c: usize) -> Vec<LossConfig> {
    let r = Rarity::indicator(c, &[c - 1]);
    let base = |k| LossConfig::new(k, r.clone());
    vec![
        base(LossKind::Ce),
        base(LossKind::Dsc),
        base(LossKind::MarginCe).with_margin(1.5),
        base(LossKind::MarginCe).with_margin(1.5).asymmetric(true),
        base(LossKind::MarginDsc).with_margin(1.5),
        base(LossKind::MarginDsc).with_margin(1.5).asymmetric(true),
        base(LossKind::FocalCe).with_gamma(2.0),
        base(LossKind::FocalCe).with_gamma(2.0).asymmetric(true),
        base(LossKind::FocalDsc).with_gamma(2.0),
        base(LossKind::FocalDsc).with_gamma(2.0).asymmetric(true),
        base(LossKind::Fbeta).with_beta(2.0),
        base(LossKind::CombinedCe).with_margin(1.0).with_gamma(2.0).asymmetric(true),
        base(LossKind::CombinedDsc).with_margin(1.0).with_gamma(2.0).asymmetric(true),
        LossConfig {
            add_dsc: true,
            ..base(LossKind::CombinedCe).with_margin(1.0).with_gamma(2.0).asymmetric(true)
        },
    ]
}

/// Largest `max |analytic - fd| / max |fd|` over the loss menu, using
/// central differences on the logits.
pub fn loss_finite_differences(seed: u64, h: f64) -> Vec<(String, f64)> {
    let mut r = rng(seed);
    let mut out: Vec<(String, f64)> = Vec::new();
    for trial in 0..6 {
        let c = [2, 3][trial % 2];
        let (z, hard) = random_field(&mut r, c, 10, 3.0);
        let y = if trial >= 4 { random_soft_labels(&mut r, c, 10) } else { hard };
        for cfg in loss_menu(c) {
            let (_, g) = losses::evaluate(&cfg, &z, &y).unwrap();
            let mut fd = vec![0.0; z.values().len()];
            for (i, slot) in fd.iter_mut().enumerate() {
                let bump = |d: f64| {
                    let mut v = z.values().to_vec();
                    v[i] += d;
                    let zf = LogitField::new(c, v).unwrap();
                    losses::evaluate(&cfg, &zf, &y).unwrap().0.total
                };
                *slot = (bump(h) - bump(-h)) / (2.0 * h);
            }
            let err = norm_rel(g.values(), &fd);
            let name = cfg.label();
            match out.iter_mut().find(|(n, _)| *n == name) {
                Some(e) => e.1 = e.1.max(err),
                None => out.push((name, err)),
            }
        }
    }
    out
}

pub fn norm_rel(a: &[f64], b: &[f64]) -> f64 {
    let scale = b.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let diff = a.iter().zip(b).fold(0.0f64, |m, (x, y)| m.max((x - y).abs()));
    diff / scale.max(f64::MIN_POSITIVE)
}

/// Gradient check of one tensor of a freshly initialized network.
pub struct NetCheck {
    pub name: String,
    /// Max-abs relative error over the coordinates that were checked.
    pub rel_err: f64,
    /// Same error over every coordinate, kinks included.
    pub raw_rel_err: f64,
    pub checked: usize,
    /// Coordinates whose `±h` stencil flips a ReLU, where central
    /// differences do not estimate the derivative.
    pub kinked: usize,
}

/// Signs of every ReLU pre-activation, read off prefix networks.
fn relu_pattern(net: &TinyNet<f64>, x: &Tensor<f64>) -> Vec<bool> {
    let arch = net.architecture();
    let mut pattern = Vec::new();
    let mut n_params = 0;
    for (i, layer) in arch.layers.iter().enumerate() {
        match layer {
            Layer::Relu => {
                let prefix = Architecture {
                    in_channels: arch.in_channels,
                    layers: arch.layers[..i].to_vec(),
                };
                let sub = TinyNet::from_params(prefix, net.params()[..n_params].to_vec()).unwrap();
                pattern.extend(sub.forward(x).unwrap().data().iter().map(|&v| v > 0.0));
            }
            _ => n_params += 2,
        }
    }
    pattern
}

/// Central-difference check of every parameter tensor and of the input
/// under CE on a random image. Coordinates whose stencil crosses a ReLU
/// kink are counted and left out of the error.
pub fn net_finite_differences(seed: u64, size: usize, h: f64) -> Vec<NetCheck> {
    let mut r = rng(seed);
    let arch = Architecture::default_for(1, 2);
    let net = TinyNet::<f64>::init(arch.clone(), &mut r).unwrap();
    let img: Vec<f64> = (0..size * size).map(|_| r.random_range(-1.0..1.0)).collect();
    let labels: Vec<usize> = (0..size * size).map(|_| usize::from(r.random_bool(0.3))).collect();
    let y = LabelField::from_classes(2, &labels).unwrap();
    let cfg = LossConfig::new(LossKind::Ce, Rarity::indicator(2, &[1]));
    let shape = vec![1, size, size, 1];
    let probe = |net: &TinyNet<f64>, x: &[f64]| {
        let x = Tensor::from_f64(shape.clone(), x).unwrap();
        let out = net.forward(&x).unwrap();
        let l = losses::evaluate(&cfg, &logits_to_field(&out).unwrap(), &y).unwrap().0.total;
        (l, relu_pattern(net, &x))
    };
    let check = |name: String, analytic: &[f64], bumped: &dyn Fn(usize, f64) -> (f64, Vec<bool>)| {
        let (mut diff, mut scale, mut kinked) = (0.0f64, 0.0f64, 0);
        let (mut raw_diff, mut raw_scale) = (0.0f64, 0.0f64);
        for (k, &g) in analytic.iter().enumerate() {
            let ((up, pu), (down, pd)) = (bumped(k, h), bumped(k, -h));
            let fd = (up - down) / (2.0 * h);
            raw_diff = raw_diff.max((g - fd).abs());
            raw_scale = raw_scale.max(fd.abs());
            if pu != pd {
                kinked += 1;
                continue;
            }
            diff = diff.max((g - fd).abs());
            scale = scale.max(fd.abs());
        }
        NetCheck {
            name,
            rel_err: diff / scale.max(f64::MIN_POSITIVE),
            raw_rel_err: raw_diff / raw_scale.max(f64::MIN_POSITIVE),
            checked: analytic.len() - kinked,
            kinked,
        }
    };

    let x = Tensor::from_f64(shape.clone(), &img).unwrap();
    let rec = net.record(&x).unwrap();
    let (_, dz) = losses::evaluate(&cfg, &logits_to_field(rec.output()).unwrap(), &y).unwrap();
    let grads = rec
        .backward(field_to_tensor::<f64>(&dz, rec.output().shape()).unwrap())
        .unwrap();

    let mut out = Vec::new();
    for (pi, g) in grads.params.iter().enumerate() {
        let bumped = |k: usize, d: f64| {
            let mut params = net.params().to_vec();
            params[pi].data_mut()[k] += d;
            probe(&TinyNet::from_params(arch.clone(), params).unwrap(), &img)
        };
        out.push(check(format!("param {pi}"), g.data(), &bumped));
    }
    let bumped = |k: usize, d: f64| {
        let mut v = img.clone();
        v[k] += d;
        probe(&net, &v)
    };
    out.push(check("input".into(), grads.input.data(), &bumped));
    out
}

/// Expected mixup label per λ index `0..=10`: `F` keeps the first label,
/// `S` the second, `-` skips the pixel. Rows are (y_i, y_k) pairs with
/// 1 for the rare foreground class.
pub const MIXUP_TABLE: [(f64, [(usize, usize, &str); 4]); 3] = [
    (0.0, [(1, 1, "FFFFFFFFFFF"), (0, 0, "FFFFFFFFFFF"), (1, 0, "-FFFFFFFFFF"), (0, 1, "SSSSSSSSSS-")]),
    (0.2, [(1, 1, "FFFFFFFFFFF"), (0, 0, "FFFFFFFFFFF"), (1, 0, "---FFFFFFFF"), (0, 1, "SSSSSSSS---")]),
    (0.6, [(1, 1, "FFFFFFFFFFF"), (0, 0, "FFFFFFFFFFF"), (1, 0, "-------FFFF"), (0, 1, "SSSS-------")]),
];

/// Number of disagreements between the library rule and the table, out of
/// the number of cases checked.
pub fn mixup_truth_table() -> (usize, usize) {
    let r = Rarity::indicator(2, &[1]);
    let (mut bad, mut total) = (0, 0);
    for (m, rows) in MIXUP_TABLE {
        for (i, k, expect) in rows {
            for (li, ch) in expect.chars().enumerate() {
                let lambda = li as f64 / 10.0;
                let want = match ch {
                    'F' => MixupChoice::First,
                    'S' => MixupChoice::Second,
                    _ => MixupChoice::Skip,
                };
                let got = asym_mixup_label(&one_hot(2, i), &one_hot(2, k), lambda, m, &r);
                total += 1;
                bad += usize::from(got != want);
            }
        }
    }
    (bad, total)
}

pub fn random_mask(r: &mut ChaCha8Rng, h: usize, w: usize) -> Mask {
    let density = [0.02, 0.1, 0.3, 0.6][r.random_range(0..4)];
    let mut data: Vec<bool> = (0..h * w).map(|_| r.random_bool(density)).collect();
    if !data.iter().any(|&b| b) {
        data[r.random_range(0..h * w)] = true;
    }
    Mask::new(h, w, data).unwrap()
}

fn boundary(m: &Mask) -> Vec<(i64, i64)> {
    let (h, w) = (m.height() as i64, m.width() as i64);
    let on = |y: i64, x: i64| y >= 0 && x >= 0 && y < h && x < w && m.get(y as usize, x as usize);
    let mut out = Vec::new();
    for y in 0..h {
        for x in 0..w {
            if on(y, x) && !(on(y - 1, x) && on(y + 1, x) && on(y, x - 1) && on(y, x + 1)) {
                out.push((y, x));
            }
        }
    }
    out
}

/// All-pairs pooled 95th percentile surface distance.
pub fn brute_force_hd95(a: &Mask, b: &Mask) -> f64 {
    let (sa, sb) = (boundary(a), boundary(b));
    let nearest = |p: &(i64, i64), set: &[(i64, i64)]| {
        set.iter()
            .map(|q| (p.0 - q.0).pow(2) + (p.1 - q.1).pow(2))
            .min()
            .unwrap() as f64
    };
    let mut d: Vec<f64> = sa.iter().map(|p| nearest(p, &sb).sqrt()).collect();
    d.extend(sb.iter().map(|p| nearest(p, &sa).sqrt()));
    d.sort_by(f64::total_cmp);
    let pos = 0.95 * (d.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = (lo + 1).min(d.len() - 1);
    d[lo] + (pos - lo as f64) * (d[hi] - d[lo])
}

/// Breadth-first flood fill keeping the largest component, earliest seed
/// pixel on ties.
pub fn flood_fill_largest(m: &Mask, conn: Connectivity) -> Mask {
    let (h, w) = (m.height(), m.width());
    let mut seen = vec![false; h * w];
    let mut best: Vec<usize> = Vec::new();
    let steps: &[(i64, i64)] = match conn {
        Connectivity::Four => &[(-1, 0), (1, 0), (0, -1), (0, 1)],
        Connectivity::Eight => &[(-1, -1), (-1, 0), (-1, 1), (0, -1), (0, 1), (1, -1), (1, 0), (1, 1)],
    };
    for start in 0..h * w {
        if !m.data()[start] || seen[start] {
            continue;
        }
        seen[start] = true;
        let mut comp = vec![start];
        let mut queue = VecDeque::from([start]);
        while let Some(i) = queue.pop_front() {
            let (y, x) = ((i / w) as i64, (i % w) as i64);
            for (dy, dx) in steps {
                let (ny, nx) = (y + dy, x + dx);
                if ny < 0 || nx < 0 || ny >= h as i64 || nx >= w as i64 {
                    continue;
                }
                let j = ny as usize * w + nx as usize;
                if m.data()[j] && !seen[j] {
                    seen[j] = true;
                    comp.push(j);
                    queue.push_back(j);
                }
            }
        }
        if comp.len() > best.len() {
            best = comp;
        }
    }
    let mut data = vec![false; h * w];
    for i in best {
        data[i] = true;
    }
    Mask::new(h, w, data).unwrap()
}

pub struct MetricOracleReport {
    pub hd95_mismatches: usize,
    pub hd95_pairs: usize,
    pub component_mismatches: usize,
    pub component_cases: usize,
}

pub fn metric_oracles(seed: u64, pairs: usize) -> MetricOracleReport {
    let mut r = rng(seed);
    let mut rep = MetricOracleReport {
        hd95_mismatches: 0,
        hd95_pairs: pairs,
        component_mismatches: 0,
        component_cases: 0,
    };
    for _ in 0..pairs {
        let a = random_mask(&mut r, 32, 32);
        let b = random_mask(&mut r, 32, 32);
        let lib = hausdorff95(&a, &b).unwrap();
        rep.hd95_mismatches += usize::from(lib != brute_force_hd95(&a, &b));
        for m in [&a, &b] {
            for conn in [Connectivity::Four, Connectivity::Eight] {
                rep.component_cases += 1;
                rep.component_mismatches +=
                    usize::from(largest_component(m, conn) != flood_fill_largest(m, conn));
            }
        }
    }
    rep
}

/// Random confusion counts checked against exact rational arithmetic:
/// `DSC = 2 SEN PRC / (SEN + PRC)` must hold exactly for the rationals, and
/// every library rate must be the correctly rounded rational.
pub fn score_identities(seed: u64, cases: usize) -> usize {
    use asymseg::metrics::{scores, ConfusionCounts};
    use num_rational::Ratio;
    let mut r = rng(seed);
    let mut bad = 0;
    let nearest = |q: Ratio<i64>| *q.numer() as f64 / *q.denom() as f64;
    for i in 0..cases {
        let draw = |r: &mut ChaCha8Rng| if r.random_bool(0.15) { 0 } else { r.random_range(1..5000i64) };
        let (tp, fp, fn_) = (draw(&mut r), draw(&mut r), draw(&mut r));
        let tn = r.random_range(0..100_000i64);
        let c = ConfusionCounts { tp: tp as u64, fp: fp as u64, fn_: fn_ as u64, tn: tn as u64 };
        let s = scores(&c, 1.0);
        if tp + fp + fn_ == 0 {
            bad += usize::from(s.dsc != 1.0 || s.sensitivity != 1.0 || s.precision != 1.0);
            continue;
        }
        let rate = |n: i64, d: i64| if d == 0 { Ratio::from_integer(0) } else { Ratio::new(n, d) };
        let dsc = rate(2 * tp, 2 * tp + fp + fn_);
        let sen = rate(tp, tp + fn_);
        let prc = rate(tp, tp + fp);
        if sen + prc != Ratio::from_integer(0) && dsc != Ratio::from_integer(2) * sen * prc / (sen + prc) {
            bad += 1;
        }
        bad += usize::from(s.dsc != nearest(dsc) || s.sensitivity != nearest(sen) || s.precision != nearest(prc));
        bad += usize::from(s.fbeta != s.dsc);
        let _ = i;
    }
    bad
}
