//! Simple (one-regressor) ordinary least squares.

#[derive(Debug, Clone, Copy, PartialEq, thiserror::Error)]
pub enum OlsError {
    #[error("need at least 2 observations, got {0}")]
    TooFew(usize),
    #[error("regressor is constant; slope is not identified")]
    Degenerate,
    #[error("x and y lengths differ ({0} vs {1})")]
    Length(usize, usize),
}

#[derive(Debug, Clone, PartialEq)]
pub struct OlsFit {
    pub intercept: f64,
    pub slope: f64,
    /// Residual standard deviation with an `n - 2` divisor (0 when `n == 2`).
    pub sigma: f64,
    pub residuals: Vec<f64>,
}

/// Fits `y = intercept + slope * x` by centered sums of squares.
pub fn fit(x: &[f64], y: &[f64]) -> Result<OlsFit, OlsError> {
    if x.len() != y.len() {
        return Err(OlsError::Length(x.len(), y.len()));
    }
    let n = x.len();
    if n < 2 {
        return Err(OlsError::TooFew(n));
    }
    let nf = n as f64;
    let mx = x.iter().sum::<f64>() / nf;
    let my = y.iter().sum::<f64>() / nf;
    let (mut sxx, mut sxy) = (0.0, 0.0);
    for (xi, yi) in x.iter().zip(y) {
        sxx += (xi - mx) * (xi - mx);
        sxy += (xi - mx) * (yi - my);
    }
    let scale = x.iter().map(|v| v * v).sum::<f64>();
    if sxx <= 1e-14 * scale || sxx == 0.0 {
        return Err(OlsError::Degenerate);
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let residuals: Vec<f64> = x
        .iter()
        .zip(y)
        .map(|(xi, yi)| yi - intercept - slope * xi)
        .collect();
    let sigma = if n > 2 {
        (residuals.iter().map(|r| r * r).sum::<f64>() / (nf - 2.0)).sqrt()
    } else {
        0.0
    };
    Ok(OlsFit {
        intercept,
        slope,
        sigma,
        residuals,
    })
}
