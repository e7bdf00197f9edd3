//! Central finite differences against [`forward`](super::forward).
//!
//! The scalar probed is `L = sum(forward(p, x) * G)` for a fixed upstream
//! tensor `G`, so `dL/d out = G` and the analytic side is `backward(p, x, G)`.

use rand::Rng as _;
use rand_distr::{Distribution, StandardNormal};

use super::{backward, forward, FeatureMap, GateSource, RecalibError, RecalibGrads, RecalibParams};
use crate::rng::Rng;

/// Denominator floor for the relative error, so entries whose true value is
/// zero are judged on absolute error instead.
pub const REL_FLOOR: f64 = 1e-6;

fn loss(params: &RecalibParams<f64>, x: &FeatureMap<f64>, upstream: &FeatureMap<f64>) -> f64 {
    let out = forward(params, x).expect("shapes checked by caller");
    out.data.iter().zip(&upstream.data).map(|(a, b)| a * b).sum()
}

/// Numeric gradient of every input and parameter entry (and alpha).
pub fn finite_difference(
    params: &RecalibParams<f64>,
    x: &FeatureMap<f64>,
    upstream: &FeatureMap<f64>,
    h: f64,
) -> RecalibGrads {
    let central = |f_plus: f64, f_minus: f64| (f_plus - f_minus) / (2.0 * h);

    let mut gx = FeatureMap::zeros(x.channels, x.height, x.width);
    let mut xp = x.clone();
    for i in 0..x.data.len() {
        let orig = xp.data[i];
        xp.data[i] = orig + h;
        let fp = loss(params, &xp, upstream);
        xp.data[i] = orig - h;
        let fm = loss(params, &xp, upstream);
        xp.data[i] = orig;
        gx.data[i] = central(fp, fm);
    }

    let mut gp = RecalibParams::zeros(params.channels, params.gate_source).expect("valid params");
    let mut pp = params.clone();
    for t in 0..8 {
        let len = pp.tensors()[t].1.len();
        for i in 0..len {
            let orig = pp.tensors()[t].1[i];
            pp.tensors_mut()[t].1[i] = orig + h;
            let fp = loss(&pp, x, upstream);
            pp.tensors_mut()[t].1[i] = orig - h;
            let fm = loss(&pp, x, upstream);
            pp.tensors_mut()[t].1[i] = orig;
            gp.tensors_mut()[t].1[i] = central(fp, fm);
        }
    }
    let orig = pp.alpha;
    pp.alpha = orig + h;
    let fp = loss(&pp, x, upstream);
    pp.alpha = orig - h;
    let fm = loss(&pp, x, upstream);
    gp.alpha = central(fp, fm);

    RecalibGrads { x: gx, params: gp }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradError {
    pub max_rel: f64,
    pub max_abs: f64,
    /// Name and index of the entry with the largest relative error.
    pub worst: String,
    pub entries: usize,
}

pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(REL_FLOOR)
}

pub fn compare(analytic: &RecalibGrads, numeric: &RecalibGrads) -> GradError {
    let mut err = GradError {
        max_rel: 0.0,
        max_abs: 0.0,
        worst: String::new(),
        entries: 0,
    };
    let mut visit = |name: &str, a: &[f64], n: &[f64]| {
        for (i, (&av, &nv)) in a.iter().zip(n).enumerate() {
            let rel = relative_error(av, nv);
            err.entries += 1;
            err.max_abs = err.max_abs.max((av - nv).abs());
            if rel > err.max_rel || err.worst.is_empty() {
                err.max_rel = err.max_rel.max(rel);
                err.worst = format!("{name}[{i}]");
            }
        }
    };
    visit("x", &analytic.x.data, &numeric.x.data);
    for ((name, a), (_, n)) in analytic.params.tensors().into_iter().zip(numeric.params.tensors()) {
        visit(name, a, n);
    }
    visit("alpha", &[analytic.params.alpha], &[numeric.params.alpha]);
    err
}

/// Parameters with every tensor populated, for exercising all gradient paths.
pub fn random_params(channels: usize, gate_source: GateSource, rng: &mut Rng) -> Result<RecalibParams<f64>, RecalibError> {
    let mut p = RecalibParams::zeros(channels, gate_source)?;
    p.alpha = rng.random_range(0.5..3.0);
    for (_, t) in p.tensors_mut() {
        for v in t.iter_mut() {
            *v = rng.random_range(-0.6..0.6);
        }
    }
    Ok(p)
}

pub fn random_map(channels: usize, height: usize, width: usize, rng: &mut Rng) -> FeatureMap<f64> {
    let data = (0..channels * height * width)
        .map(|_| StandardNormal.sample(rng))
        .collect();
    FeatureMap {
        channels,
        height,
        width,
        data,
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SuiteReport {
    pub trials: usize,
    pub max_rel: f64,
    pub max_abs: f64,
    pub worst: String,
}

/// Random instances of size `channels x size x size`, all checked at step `h`.
pub fn gradient_suite(
    channels: usize,
    size: usize,
    trials: usize,
    h: f64,
    seed: u64,
    gate_source: GateSource,
) -> Result<SuiteReport, RecalibError> {
    let mut report = SuiteReport {
        trials,
        max_rel: 0.0,
        max_abs: 0.0,
        worst: String::new(),
    };
    for trial in 0..trials {
        let mut rng = Rng::new(seed, trial as u64);
        let params = random_params(channels, gate_source, &mut rng)?;
        let x = random_map(channels, size, size, &mut rng);
        let upstream = random_map(channels, size, size, &mut rng);
        let analytic = backward(&params, &x, &upstream)?;
        let numeric = finite_difference(&params, &x, &upstream, h);
        let err = compare(&analytic, &numeric);
        report.max_abs = report.max_abs.max(err.max_abs);
        if err.max_rel >= report.max_rel {
            report.max_rel = err.max_rel;
            report.worst = format!("trial {trial}: {}", err.worst);
        }
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn relative_error_floor() {
        assert_eq!(relative_error(0.0, 0.0), 0.0);
        assert!((relative_error(2.0, 1.0) - 0.5).abs() < 1e-15);
        assert!((relative_error(0.0, 1e-9) - 1e-3).abs() < 1e-12);
    }

    #[test]
    fn bottleneck_gate_gradients() {
        let r = gradient_suite(8, 3, 3, 1e-5, 1, GateSource::Bottleneck).unwrap();
        assert!(r.max_rel < 1e-4, "{r:?}");
    }

    #[test]
    fn input_gate_gradients() {
        let r = gradient_suite(8, 3, 3, 1e-5, 2, GateSource::Input).unwrap();
        assert!(r.max_rel < 1e-4, "{r:?}");
    }

    #[test]
    fn single_pixel_and_wide_maps() {
        let r = gradient_suite(4, 1, 2, 1e-5, 3, GateSource::Bottleneck).unwrap();
        assert!(r.max_rel < 1e-4, "{r:?}");
        let r = gradient_suite(12, 4, 1, 1e-5, 4, GateSource::Bottleneck).unwrap();
        assert!(r.max_rel < 1e-4, "{r:?}");
    }

    #[test]
    fn detects_a_wrong_gradient() {
        let mut rng = Rng::new(5, 5);
        let p = random_params(8, GateSource::Bottleneck, &mut rng).unwrap();
        let x = random_map(8, 3, 3, &mut rng);
        let up = random_map(8, 3, 3, &mut rng);
        let mut analytic = backward(&p, &x, &up).unwrap();
        analytic.params.dw_w[4] *= 1.01;
        let err = compare(&analytic, &finite_difference(&p, &x, &up, 1e-5));
        assert!(err.max_rel > 1e-3);
        assert_eq!(err.worst, "dwconv.weight[4]");
    }
}
