//! Small numeric helpers for experiment summaries.

pub fn mean(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        return 0.0;
    }
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Sample standard deviation (n - 1 denominator); 0 for fewer than two values.
pub fn sample_sd(xs: &[f64]) -> f64 {
    if xs.len() < 2 {
        return 0.0;
    }
    let m = mean(xs);
    let ss: f64 = xs.iter().map(|x| (x - m) * (x - m)).sum();
    (ss / (xs.len() - 1) as f64).sqrt()
}

pub fn median(xs: &[f64]) -> Option<f64> {
    if xs.is_empty() {
        return None;
    }
    let mut v = xs.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    Some(if n % 2 == 1 {
        v[n / 2]
    } else {
        (v[n / 2 - 1] + v[n / 2]) / 2.0
    })
}

/// 1-based ranks with ties given their average rank.
pub fn ranks(xs: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..xs.len()).collect();
    idx.sort_by(|&a, &b| xs[a].total_cmp(&xs[b]));
    let mut r = vec![0.0; xs.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && xs[idx[j + 1]] == xs[idx[i]] {
            j += 1;
        }
        let avg = (i + j) as f64 / 2.0 + 1.0;
        for &k in &idx[i..=j] {
            r[k] = avg;
        }
        i = j + 1;
    }
    r
}

pub fn pearson(a: &[f64], b: &[f64]) -> Option<f64> {
    assert_eq!(a.len(), b.len());
    let (ma, mb) = (mean(a), mean(b));
    let mut cov = 0.0;
    let mut va = 0.0;
    let mut vb = 0.0;
    for (x, y) in a.iter().zip(b) {
        cov += (x - ma) * (y - mb);
        va += (x - ma) * (x - ma);
        vb += (y - mb) * (y - mb);
    }
    if va == 0.0 || vb == 0.0 {
        return None;
    }
    Some(cov / (va * vb).sqrt())
}

/// Spearman rank correlation (Pearson on tie-averaged ranks). `None` when
/// either side is constant.
pub fn spearman(a: &[f64], b: &[f64]) -> Option<f64> {
    pearson(&ranks(a), &ranks(b))
}

/// Normalised cross-correlation of two equally long series for lags
/// `-max_lag..=max_lag`. A positive lag compares `a[t]` with `b[t + lag]`,
/// so a peak at positive lag means `b` follows `a`.
pub fn cross_correlation(a: &[f64], b: &[f64], max_lag: usize) -> Vec<(i64, f64)> {
    assert_eq!(a.len(), b.len());
    let n = a.len();
    let (ma, mb) = (mean(a), mean(b));
    let sa: f64 = a.iter().map(|x| (x - ma) * (x - ma)).sum::<f64>().sqrt();
    let sb: f64 = b.iter().map(|x| (x - mb) * (x - mb)).sum::<f64>().sqrt();
    let mut out = Vec::new();
    for lag in -(max_lag as i64)..=max_lag as i64 {
        let mut s = 0.0;
        for t in 0..n as i64 {
            let u = t + lag;
            if u >= 0 && u < n as i64 {
                s += (a[t as usize] - ma) * (b[u as usize] - mb);
            }
        }
        let c = if sa == 0.0 || sb == 0.0 { 0.0 } else { s / (sa * sb) };
        out.push((lag, c));
    }
    out
}

/// Lag of the largest correlation; the smallest such lag on ties.
pub fn peak_lag(xc: &[(i64, f64)]) -> Option<i64> {
    let mut best: Option<(i64, f64)> = None;
    for &(lag, c) in xc {
        if best.is_none_or(|(_, b)| c > b) {
            best = Some((lag, c));
        }
    }
    best.map(|b| b.0)
}

/// Counts timestamps into `n` buckets of `width_us`; later ones are dropped.
pub fn bucket_counts(times_us: impl IntoIterator<Item = u64>, width_us: u64, n: usize) -> Vec<f64> {
    let mut out = vec![0.0; n];
    for t in times_us {
        let b = (t / width_us) as usize;
        if b < n {
            out[b] += 1.0;
        }
    }
    out
}

/// Index of the first maximum.
pub fn argmax(xs: &[f64]) -> Option<usize> {
    let mut best: Option<usize> = None;
    for (i, &x) in xs.iter().enumerate() {
        if best.is_none_or(|b| x > xs[b]) {
            best = Some(i);
        }
    }
    best
}

/// Rounds to two decimals, the precision summary tables are printed at.
pub fn round2(x: f64) -> f64 {
    (x * 100.0).round() / 100.0
}

/// Coefficient of variation in percent, computed from the two-decimal
/// values a table shows and truncated to an integer. `None` when the mean
/// rounds to zero.
pub fn cv_percent(mean: f64, sd: f64) -> Option<u32> {
    let (m, s) = (round2(mean), round2(sd));
    if m <= 0.0 {
        return None;
    }
    // Work in hundredths to keep the truncation exact.
    let (m, s) = ((m * 100.0).round() as u64, (s * 100.0).round() as u64);
    Some((100 * s / m) as u32)
}
