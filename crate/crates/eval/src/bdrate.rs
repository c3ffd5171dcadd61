//! Bjontegaard rate difference via monotone piecewise-cubic (PCHIP)
//! interpolation of log2(bpp) against quality, integrated exactly over
//! the shared quality interval.

use crate::error::{EvalError, Result};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RdPoint {
    pub bpp: f64,
    pub quality: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RdCurve {
    pub label: String,
    pub metric: String,
    pub points: Vec<RdPoint>,
}

impl RdCurve {
    pub fn new(label: impl Into<String>, metric: impl Into<String>, points: Vec<RdPoint>) -> Self {
        Self {
            label: label.into(),
            metric: metric.into(),
            points,
        }
    }

    /// Structural checks for BD-rate use. Returns warnings for
    /// non-fatal oddities (quality dipping while bpp grows).
    pub fn validate_for_bd(&self) -> Result<Vec<String>> {
        if self.points.len() < 4 {
            return Err(EvalError::Input(format!(
                "curve {:?} has {} points; piecewise-cubic interpolation needs at least 4",
                self.label,
                self.points.len()
            )));
        }
        let mut warnings = Vec::new();
        for w in self.points.windows(2) {
            if w[1].bpp <= w[0].bpp {
                return Err(EvalError::Input(format!(
                    "curve {:?}: bpp must be strictly increasing ({} then {})",
                    self.label, w[0].bpp, w[1].bpp
                )));
            }
            if w[1].quality < w[0].quality {
                // tolerated (interpolation re-sorts by quality), but worth
                // flagging: more bits bought less quality
                warnings.push(format!(
                    "curve {:?}: quality drops from {} to {} as bpp grows",
                    self.label, w[0].quality, w[1].quality
                ));
            } else if w[1].quality == w[0].quality {
                // equal quality breaks interpolation on the quality axis
                return Err(EvalError::Input(format!(
                    "curve {:?}: duplicate quality value {}",
                    self.label, w[0].quality
                )));
            }
        }
        for p in &self.points {
            if p.bpp <= 0.0 || !p.bpp.is_finite() || !p.quality.is_finite() {
                return Err(EvalError::Input(format!(
                    "curve {:?} has a non-finite or non-positive point",
                    self.label
                )));
            }
        }
        Ok(warnings)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("label,metric,bpp,quality\n");
        for p in &self.points {
            out.push_str(&format!(
                "{},{},{},{}\n",
                self.label, self.metric, p.bpp, p.quality
            ));
        }
        out
    }

    /// Parse a single-curve CSV (all rows must share label and metric).
    pub fn from_csv(text: &str) -> Result<Self> {
        let mut lines = text.lines();
        let header = lines
            .next()
            .ok_or_else(|| EvalError::Input("empty CSV".into()))?;
        if header.trim() != "label,metric,bpp,quality" {
            return Err(EvalError::Input(format!(
                "unexpected CSV header {header:?}"
            )));
        }
        let mut label: Option<String> = None;
        let mut metric: Option<String> = None;
        let mut points = Vec::new();
        for (i, line) in lines.enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let parts: Vec<&str> = line.split(',').collect();
            if parts.len() != 4 {
                return Err(EvalError::Input(format!("row {}: expected 4 columns", i + 2)));
            }
            match &label {
                None => label = Some(parts[0].to_string()),
                Some(l) if l != parts[0] => {
                    return Err(EvalError::Input(format!(
                        "row {}: mixed labels {l:?} and {:?} in one curve file",
                        i + 2,
                        parts[0]
                    )))
                }
                _ => {}
            }
            match &metric {
                None => metric = Some(parts[1].to_string()),
                Some(m) if m != parts[1] => {
                    return Err(EvalError::Input(format!("row {}: mixed metrics", i + 2)))
                }
                _ => {}
            }
            let bpp: f64 = parts[2]
                .parse()
                .map_err(|_| EvalError::Input(format!("row {}: bad bpp {:?}", i + 2, parts[2])))?;
            let quality: f64 = parts[3]
                .parse()
                .map_err(|_| EvalError::Input(format!("row {}: bad quality {:?}", i + 2, parts[3])))?;
            points.push(RdPoint { bpp, quality });
        }
        Ok(Self {
            label: label.unwrap_or_default(),
            metric: metric.unwrap_or_default(),
            points,
        })
    }
}

/// Monotonicity-preserving cubic Hermite slopes (Fritsch-Carlson, with the
/// one-sided three-point endpoint rule).
fn pchip_slopes(x: &[f64], y: &[f64]) -> Vec<f64> {
    let n = x.len();
    debug_assert!(n >= 2);
    let h: Vec<f64> = x.windows(2).map(|w| w[1] - w[0]).collect();
    let delta: Vec<f64> = (0..n - 1).map(|i| (y[i + 1] - y[i]) / h[i]).collect();
    let mut d = vec![0.0; n];

    for i in 1..n - 1 {
        if delta[i - 1] * delta[i] <= 0.0 {
            d[i] = 0.0;
        } else {
            let w1 = 2.0 * h[i] + h[i - 1];
            let w2 = h[i] + 2.0 * h[i - 1];
            d[i] = (w1 + w2) / (w1 / delta[i - 1] + w2 / delta[i]);
        }
    }
    let endpoint = |h0: f64, h1: f64, d0: f64, d1: f64| -> f64 {
        let mut s = ((2.0 * h0 + h1) * d0 - h0 * d1) / (h0 + h1);
        if s.signum() != d0.signum() {
            s = 0.0;
        } else if d0.signum() != d1.signum() && s.abs() > 3.0 * d0.abs() {
            s = 3.0 * d0;
        }
        s
    };
    if n == 2 {
        d[0] = delta[0];
        d[1] = delta[0];
    } else {
        d[0] = endpoint(h[0], h[1], delta[0], delta[1]);
        d[n - 1] = endpoint(h[n - 2], h[n - 3], delta[n - 2], delta[n - 3]);
    }
    d
}

/// Exact integral of the PCHIP interpolant of (x, y) over [a, b], with
/// [a, b] inside [x_first, x_last].
fn pchip_integral(x: &[f64], y: &[f64], a: f64, b: f64) -> f64 {
    let d = pchip_slopes(x, y);
    let mut total = 0.0;
    for i in 0..x.len() - 1 {
        let (x0, x1) = (x[i], x[i + 1]);
        let lo = a.max(x0);
        let hi = b.min(x1);
        if lo >= hi {
            continue;
        }
        let h = x1 - x0;
        // cubic coefficients in t = (x - x0)/h
        let (y0, y1, d0, d1) = (y[i], y[i + 1], d[i], d[i + 1]);
        let a3 = 2.0 * y0 + h * d0 - 2.0 * y1 + h * d1;
        let a2 = -3.0 * y0 - 2.0 * h * d0 + 3.0 * y1 - h * d1;
        let a1 = h * d0;
        let a0 = y0;
        let anti = |t: f64| a3 * t.powi(4) / 4.0 + a2 * t.powi(3) / 3.0 + a1 * t * t / 2.0 + a0 * t;
        let ta = (lo - x0) / h;
        let tb = (hi - x0) / h;
        total += h * (anti(tb) - anti(ta));
    }
    total
}

/// Evaluate the PCHIP interpolant at a point inside the data range.
pub fn pchip_eval(x: &[f64], y: &[f64], q: f64) -> f64 {
    let d = pchip_slopes(x, y);
    let i = match x.iter().position(|&xi| q <= xi) {
        Some(0) => 0,
        Some(j) => j - 1,
        None => x.len() - 2,
    };
    let h = x[i + 1] - x[i];
    let t = (q - x[i]) / h;
    let (y0, y1, d0, d1) = (y[i], y[i + 1], d[i], d[i + 1]);
    let h00 = 2.0 * t.powi(3) - 3.0 * t * t + 1.0;
    let h10 = t.powi(3) - 2.0 * t * t + t;
    let h01 = -2.0 * t.powi(3) + 3.0 * t * t;
    let h11 = t.powi(3) - t * t;
    h00 * y0 + h10 * h * d0 + h01 * y1 + h11 * h * d1
}

/// Average percentage rate difference of `test` against `anchor` over
/// their common quality interval. Negative means the test codec spends
/// fewer bits at equal quality.
pub fn bd_rate(anchor: &RdCurve, test: &RdCurve) -> Result<f64> {
    anchor.validate_for_bd()?;
    test.validate_for_bd()?;
    let sorted = |c: &RdCurve| -> (Vec<f64>, Vec<f64>) {
        let mut pts: Vec<RdPoint> = c.points.clone();
        pts.sort_by(|a, b| a.quality.partial_cmp(&b.quality).unwrap());
        (
            pts.iter().map(|p| p.quality).collect(),
            pts.iter().map(|p| p.bpp.log2()).collect(),
        )
    };
    let (qa, ra) = sorted(anchor);
    let (qt, rt) = sorted(test);

    let lo = qa.first().unwrap().max(*qt.first().unwrap());
    let hi = qa.last().unwrap().min(*qt.last().unwrap());
    if lo >= hi {
        return Err(EvalError::Input(format!(
            "no quality overlap: anchor [{:.4}, {:.4}] vs test [{:.4}, {:.4}]",
            qa.first().unwrap(),
            qa.last().unwrap(),
            qt.first().unwrap(),
            qt.last().unwrap()
        )));
    }

    let int_a = pchip_integral(&qa, &ra, lo, hi);
    let int_t = pchip_integral(&qt, &rt, lo, hi);
    let avg_diff = (int_t - int_a) / (hi - lo);
    Ok((2.0f64.powf(avg_diff) - 1.0) * 100.0)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn curve(label: &str, points: &[(f64, f64)]) -> RdCurve {
        RdCurve::new(
            label,
            "psnr",
            points
                .iter()
                .map(|&(bpp, quality)| RdPoint { bpp, quality })
                .collect(),
        )
    }

    fn anchor() -> RdCurve {
        curve(
            "anchor",
            &[(0.25, 30.0), (0.5, 33.5), (1.0, 36.5), (2.0, 39.0), (4.0, 41.0)],
        )
    }

    #[test]
    fn identical_curves_give_exactly_zero() {
        let a = anchor();
        assert_eq!(bd_rate(&a, &a).unwrap(), 0.0);
    }

    #[test]
    fn uniform_rate_scale_gives_exact_percentage() {
        let a = anchor();
        let t = curve(
            "test",
            &a.points
                .iter()
                .map(|p| (p.bpp * 0.9, p.quality))
                .collect::<Vec<_>>(),
        );
        let bd = bd_rate(&a, &t).unwrap();
        assert!((bd - -10.0).abs() < 1e-6, "{bd}");
        let bd_up = bd_rate(&t, &a).unwrap();
        assert!((bd_up - (1.0 / 0.9 - 1.0) * 100.0).abs() < 1e-6);
    }

    #[test]
    fn antisymmetry_of_sign() {
        let a = anchor();
        let t = curve(
            "test",
            &[(0.22, 30.0), (0.44, 33.5), (0.9, 36.5), (1.9, 39.0), (3.9, 41.0)],
        );
        let ab = bd_rate(&a, &t).unwrap();
        let ba = bd_rate(&t, &a).unwrap();
        assert!(ab < 0.0 && ba > 0.0);
    }

    /// quality = alpha + beta*log2(bpp) has a closed-form BD-rate:
    /// log2 r(q) is affine in q, so the average log-rate difference is the
    /// difference of the affine functions at the interval midpoint.
    #[test]
    fn analytic_log_linear_curves_match_closed_form() {
        let make = |alpha: f64, beta: f64, bpps: &[f64]| -> RdCurve {
            curve(
                "c",
                &bpps
                    .iter()
                    .map(|&b| (b, alpha + beta * b.log2()))
                    .collect::<Vec<_>>(),
            )
        };
        let a = make(36.0, 4.0, &[0.25, 0.5, 1.0, 2.0, 4.0]);
        let t = make(36.8, 4.2, &[0.25, 0.5, 1.0, 2.0, 4.0]);

        // overlap interval in quality
        let qa: (f64, f64) = (36.0 - 8.0, 36.0 + 8.0);
        let qt: (f64, f64) = (36.8 - 8.4, 36.8 + 8.4);
        let lo = qa.0.max(qt.0);
        let hi = qa.1.min(qt.1);
        // r_a(q) = (q-36)/4, r_t(q) = (q-36.8)/4.2; integrate difference
        let mid = 0.5 * (lo + hi);
        let avg_diff = (mid - 36.8) / 4.2 - (mid - 36.0) / 4.0;
        let want = (2.0f64.powf(avg_diff) - 1.0) * 100.0;

        let got = bd_rate(&a, &t).unwrap();
        let rel = (got - want).abs() / want.abs().max(1e-9);
        assert!(rel < 1e-3, "got {got}, want {want}");

        // dense trapezoid oracle over the same interval
        let n = 20_000;
        let mut acc = 0.0;
        for i in 0..=n {
            let q = lo + (hi - lo) * i as f64 / n as f64;
            let diff = (q - 36.8) / 4.2 - (q - 36.0) / 4.0;
            let w = if i == 0 || i == n { 0.5 } else { 1.0 };
            acc += w * diff;
        }
        let avg_trap = acc / n as f64;
        let want_trap = (2.0f64.powf(avg_trap) - 1.0) * 100.0;
        let rel_trap = (got - want_trap).abs() / want_trap.abs().max(1e-9);
        assert!(rel_trap < 5e-4, "got {got}, trapezoid {want_trap}");
    }

    #[test]
    fn disjoint_quality_ranges_error_names_both() {
        let a = curve("a", &[(0.1, 10.0), (0.2, 11.0), (0.4, 12.0), (0.8, 13.0)]);
        let t = curve("t", &[(0.1, 20.0), (0.2, 21.0), (0.4, 22.0), (0.8, 23.0)]);
        let err = bd_rate(&a, &t).unwrap_err().to_string();
        assert!(err.contains("overlap"), "{err}");
        assert!(err.contains("13") && err.contains("20"), "{err}");
    }

    #[test]
    fn too_few_points_rejected() {
        let a = curve("a", &[(0.1, 10.0), (0.2, 11.0), (0.4, 12.0)]);
        assert!(bd_rate(&a, &a).is_err());
    }

    #[test]
    fn csv_round_trips() {
        let a = anchor();
        let parsed = RdCurve::from_csv(&a.to_csv()).unwrap();
        assert_eq!(parsed, a);
    }

    #[test]
    fn pchip_is_monotone_on_monotone_data() {
        let x = [1.0, 2.0, 3.0, 5.0, 8.0];
        let y = [0.0, 0.5, 0.6, 2.5, 2.6];
        let mut prev = f64::NEG_INFINITY;
        for i in 0..=1000 {
            let q = 1.0 + 7.0 * i as f64 / 1000.0;
            let v = pchip_eval(&x, &y, q);
            assert!(v >= prev - 1e-12, "dip at {q}: {v} < {prev}");
            prev = v;
        }
    }
}
