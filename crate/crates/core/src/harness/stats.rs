//! Small statistics over `(t, value)` series.

/// Mean of the values with `lo * horizon < t <= hi * horizon`.
pub fn window_mean(series: &[(u64, f64)], horizon: u64, lo: f64, hi: f64) -> Option<f64> {
    let h = horizon as f64;
    let picked: Vec<f64> =
        series.iter().filter(|(t, _)| *t as f64 > lo * h && *t as f64 <= hi * h).map(|(_, v)| *v).collect();
    mean(&picked)
}

pub fn first_decile(series: &[(u64, f64)], horizon: u64) -> Option<f64> {
    window_mean(series, horizon, 0.0, 0.1)
}

pub fn middle_decile(series: &[(u64, f64)], horizon: u64) -> Option<f64> {
    window_mean(series, horizon, 0.45, 0.55)
}

pub fn final_decile(series: &[(u64, f64)], horizon: u64) -> Option<f64> {
    window_mean(series, horizon, 0.9, 1.0)
}

/// Least-squares slope of the points with `t > horizon / 2`.
pub fn final_half_slope(series: &[(u64, f64)], horizon: u64) -> Option<f64> {
    let half: Vec<(f64, f64)> =
        series.iter().filter(|(t, _)| 2 * *t > horizon).map(|(t, v)| (*t as f64, *v)).collect();
    ls_slope(&half)
}

pub fn ls_slope(points: &[(f64, f64)]) -> Option<f64> {
    if points.len() < 2 {
        return None;
    }
    let n = points.len() as f64;
    let mx = points.iter().map(|p| p.0).sum::<f64>() / n;
    let my = points.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = points.iter().map(|p| (p.0 - mx).powi(2)).sum();
    if sxx == 0.0 {
        return None;
    }
    let sxy: f64 = points.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    Some(sxy / sxx)
}

pub fn mean(values: &[f64]) -> Option<f64> {
    (!values.is_empty()).then(|| values.iter().sum::<f64>() / values.len() as f64)
}

/// Sample standard deviation, 0 for fewer than two values.
pub fn std_dev(values: &[f64]) -> f64 {
    if values.len() < 2 {
        return 0.0;
    }
    let m = values.iter().sum::<f64>() / values.len() as f64;
    (values.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (values.len() - 1) as f64).sqrt()
}
