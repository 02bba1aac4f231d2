use serde::{Deserialize, Serialize};
use statrs::function::gamma::{digamma, ln_gamma};

use crate::{Error, Result};

pub const P_FLOOR: f64 = 1e-6;
pub const N_FLOOR: f64 = 1e-6;
/// CDF scans stop once the remaining tail mass falls below this.
pub const TAIL_MASS: f64 = 1e-12;

/// Zero-inflated negative binomial with `P(Y=y>0) = (1-pi) C(y+n-1, y) p^y (1-p)^n`.
/// `p` is the per-event probability, so the NB mean is `n p / (1-p)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Zinb {
    pub n: f64,
    pub p: f64,
    pub pi: f64,
}

impl Zinb {
    pub fn new(n: f64, p: f64, pi: f64) -> Result<Self> {
        if !(n > 0.0 && n.is_finite()) || !(p > 0.0 && p < 1.0) || !(0.0..=1.0).contains(&pi) {
            return Err(Error::InvalidParameter(format!(
                "invalid ZINB parameters n={n}, p={p}, pi={pi}"
            )));
        }
        Ok(Self { n, p, pi })
    }

    /// Applies the numerical floors used before every likelihood evaluation.
    pub fn floored(n: f64, p: f64, pi: f64) -> Self {
        Self {
            n: n.max(N_FLOOR),
            p: p.clamp(P_FLOOR, 1.0 - P_FLOOR),
            pi: pi.clamp(P_FLOOR, 1.0 - P_FLOOR),
        }
    }

    pub fn ln_pmf(&self, y: u64) -> f64 {
        let Zinb { n, p, pi } = *self;
        let ln_nb0 = n * (-p).ln_1p();
        if y == 0 {
            if pi >= 1.0 {
                return 0.0;
            }
            if pi <= 0.0 {
                return ln_nb0;
            }
            return log_add(pi.ln(), (-pi).ln_1p() + ln_nb0);
        }
        if pi >= 1.0 {
            return f64::NEG_INFINITY;
        }
        let y = y as f64;
        (-pi).ln_1p() + ln_gamma(y + n) - ln_gamma(y + 1.0) - ln_gamma(n) + y * p.ln() + ln_nb0
    }

    pub fn pmf(&self, y: u64) -> f64 {
        self.ln_pmf(y).exp()
    }

    pub fn nll(&self, y: u64) -> f64 {
        -self.ln_pmf(y)
    }

    /// Gradient of the negative log-likelihood with respect to `(n, p, pi)`.
    pub fn nll_grad(&self, y: u64) -> [f64; 3] {
        let Zinb { n, p, pi } = *self;
        let ln1mp = (-p).ln_1p();
        if y == 0 {
            let q = (n * ln1mp).exp();
            let f0 = pi + (1.0 - pi) * q;
            let w = (1.0 - pi) * q / f0;
            [-w * ln1mp, w * n / (1.0 - p), -(1.0 - q) / f0]
        } else {
            let yf = y as f64;
            [
                -(digamma(yf + n) - digamma(n) + ln1mp),
                -(yf / p - n / (1.0 - p)),
                1.0 / (1.0 - pi),
            ]
        }
    }

    pub fn mean(&self) -> f64 {
        (1.0 - self.pi) * self.n * self.p / (1.0 - self.p)
    }

    pub fn variance(&self) -> f64 {
        let nb_mean = self.n * self.p / (1.0 - self.p);
        let nb_var = nb_mean / (1.0 - self.p);
        (1.0 - self.pi) * (nb_var + nb_mean * nb_mean) - self.mean().powi(2)
    }

    /// Smallest `y` with `CDF(y) >= q`, scanning the pmf. The scan is cut
    /// off once the remaining tail mass drops below [`TAIL_MASS`].
    pub fn quantile(&self, q: f64) -> u64 {
        let q = q.clamp(0.0, 1.0);
        let mut cdf = 0.0;
        let mut y = 0u64;
        loop {
            cdf += self.pmf(y);
            if cdf >= q || 1.0 - cdf < TAIL_MASS {
                return y;
            }
            if y > 10_000_000 {
                return y;
            }
            y += 1;
        }
    }
}

/// Grid-search maximum-likelihood ZINB for a sample of counts. Used to
/// start training from the marginal distribution of the targets.
pub fn fit_marginal(counts: impl Iterator<Item = u64>) -> Zinb {
    let mut hist: std::collections::BTreeMap<u64, f64> = std::collections::BTreeMap::new();
    let mut total = 0.0;
    let mut sum = 0.0;
    for y in counts {
        *hist.entry(y).or_default() += 1.0;
        total += 1.0;
        sum += y as f64;
    }
    let fallback = Zinb::floored(1.0, 0.5, 0.5);
    if total == 0.0 || sum == 0.0 {
        return Zinb::floored(1.0, P_FLOOR, 1.0 - P_FLOOR);
    }
    let mean = sum / total;
    let mut best = (f64::NEG_INFINITY, fallback);
    for pi_i in 0..20 {
        let pi = 0.01 + 0.049 * pi_i as f64;
        let nb_mean = mean / (1.0 - pi);
        for n_i in 0..30 {
            let n = 0.1 * 1.3f64.powi(n_i);
            // NB mean n p / (1 - p) fixes p given n.
            let p = nb_mean / (n + nb_mean);
            let d = Zinb::floored(n, p, pi);
            let ll: f64 = hist.iter().map(|(y, c)| c * d.ln_pmf(*y)).sum();
            if ll > best.0 {
                best = (ll, d);
            }
        }
    }
    best.1
}

fn log_add(a: f64, b: f64) -> f64 {
    let m = a.max(b);
    if m == f64::NEG_INFINITY {
        return m;
    }
    m + ((a - m).exp() + (b - m).exp()).ln()
}
