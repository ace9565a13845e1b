use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use super::{Formula, StlError};

/// Named channels sampled every `h` seconds from `start`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampledSignal {
    pub h: f64,
    pub start: f64,
    channels: BTreeMap<String, Vec<f64>>,
}

impl SampledSignal {
    pub fn new(h: f64) -> Result<Self, StlError> {
        if !(h > 0.0 && h.is_finite()) {
            return Err(StlError::InvalidPeriod);
        }
        Ok(Self {
            h,
            start: 0.0,
            channels: BTreeMap::new(),
        })
    }

    /// Adds or replaces a channel; every channel must have the same length.
    pub fn with_channel(mut self, name: &str, samples: Vec<f64>) -> Result<Self, StlError> {
        if let Some((_, other)) = self.channels.iter().find(|(k, _)| k.as_str() != name) {
            if other.len() != samples.len() {
                return Err(StlError::ChannelLength {
                    channel: name.to_string(),
                    found: samples.len(),
                    expected: other.len(),
                });
            }
        }
        self.channels.insert(name.to_string(), samples);
        Ok(self)
    }

    pub fn len(&self) -> usize {
        self.channels.values().next().map_or(0, Vec::len)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn channel(&self, name: &str) -> Option<&[f64]> {
        self.channels.get(name).map(Vec::as_slice)
    }
}

struct Monitor<'a> {
    signal: &'a SampledSignal,
    eps: f64,
    missing: BTreeSet<usize>,
}

impl Monitor<'_> {
    fn eval(&mut self, f: &Formula, t: usize) -> Result<f64, StlError> {
        let h = self.signal.h;
        Ok(match f {
            Formula::Pred(p) => {
                let mut lhs = 0.0;
                for (coef, ch) in &p.terms {
                    let data = self
                        .signal
                        .channel(ch)
                        .ok_or_else(|| StlError::UnknownChannel(ch.clone()))?;
                    match data.get(t) {
                        Some(v) => lhs += coef * v,
                        None => {
                            self.missing.insert(t);
                            return Ok(0.0);
                        }
                    }
                }
                let m = p.margin(lhs);
                if p.relation.is_strict() {
                    m - self.eps
                } else {
                    m
                }
            }
            Formula::Not(a) => -self.eval(a, t)?,
            Formula::And(a, b) => self.eval(a, t)?.min(self.eval(b, t)?),
            Formula::Or(a, b) => self.eval(a, t)?.max(self.eval(b, t)?),
            Formula::Always(i, a) => {
                let (lo, hi) = i.steps(h)?;
                let mut acc = f64::INFINITY;
                for s in t + lo..=t + hi {
                    acc = acc.min(self.eval(a, s)?);
                }
                acc
            }
            Formula::Eventually(i, a) => {
                let (lo, hi) = i.steps(h)?;
                let mut acc = f64::NEG_INFINITY;
                for s in t + lo..=t + hi {
                    acc = acc.max(self.eval(a, s)?);
                }
                acc
            }
            Formula::Until(i, a, b) => {
                let (lo, hi) = i.steps(h)?;
                let mut acc = f64::NEG_INFINITY;
                for tp in t + lo..=t + hi {
                    let mut v = self.eval(b, tp)?;
                    for tpp in t..tp {
                        v = v.min(self.eval(a, tpp)?);
                    }
                    acc = acc.max(v);
                }
                acc
            }
        })
    }
}

fn run(f: &Formula, s: &SampledSignal, t: usize, eps: f64) -> Result<f64, StlError> {
    let mut m = Monitor {
        signal: s,
        eps,
        missing: BTreeSet::new(),
    };
    let v = m.eval(f, t)?;
    if !m.missing.is_empty() {
        return Err(StlError::MissingSamples(m.missing.into_iter().collect()));
    }
    Ok(v)
}

/// Quantitative robustness of `f` at sample index `t`.
pub fn robustness(f: &Formula, s: &SampledSignal, t: usize) -> Result<f64, StlError> {
    run(f, s, t, 0.0)
}

/// Robustness with every strict predicate's margin reduced by `eps`
/// (after conversion to negation normal form). Non-negative exactly when the
/// mixed-integer encoding with the same `eps` is feasible.
pub fn robustness_eps(f: &Formula, s: &SampledSignal, t: usize, eps: f64) -> Result<f64, StlError> {
    run(&f.nnf()?, s, t, eps)
}

#[cfg(test)]
mod tests {
    use super::super::parse;
    use super::*;

    fn sig(name: &str, v: &[f64]) -> SampledSignal {
        SampledSignal::new(60.0)
            .unwrap()
            .with_channel(name, v.to_vec())
            .unwrap()
    }

    #[test]
    fn window_min_and_max() {
        let s = sig("y", &[41.0, 42.0, 43.0]);
        let f = parse("alw_[0,120] (y >= 40)").unwrap();
        assert_eq!(robustness(&f, &s, 0).unwrap(), 1.0);
        let s = sig("y", &[38.0, 39.0, 41.0]);
        let g = parse("ev_[0,120] (y >= 40)").unwrap();
        assert_eq!(robustness(&g, &s, 0).unwrap(), 1.0);
    }

    #[test]
    fn input_band_at_running_sample() {
        let f = parse(super::super::INPUT_SPEC)
            .unwrap()
            .resolve_end(0.0);
        let s = sig("u", &[23.0]);
        let r = robustness_eps(&f, &s, 0, 1e-6).unwrap();
        assert!((r - 1.8).abs() < 1e-12);
    }

    #[test]
    fn missing_samples_are_listed() {
        let f = parse("alw_[60,180] (y >= 0)").unwrap();
        let s = sig("y", &[1.0, 1.0, 1.0]);
        assert_eq!(robustness(&f, &s, 0), Err(StlError::MissingSamples(vec![3])));
        let g = parse("alw_[0,0] (z >= 0)").unwrap();
        assert_eq!(
            robustness(&g, &s, 0),
            Err(StlError::UnknownChannel("z".into()))
        );
    }

    #[test]
    fn until_uses_prefix_minimum() {
        // a holds at 0,1 and fails at 2; b holds only at 2.
        let s = SampledSignal::new(1.0)
            .unwrap()
            .with_channel("a", vec![1.0, 2.0, -1.0])
            .unwrap()
            .with_channel("b", vec![-5.0, -5.0, 3.0])
            .unwrap();
        let f = parse("(a >= 0) until_[0,2] (b >= 0)").unwrap();
        // t' = 2: min(3, 1, 2) = 1
        assert_eq!(robustness(&f, &s, 0).unwrap(), 1.0);
    }

    #[test]
    fn channel_lengths_must_match() {
        let r = SampledSignal::new(1.0)
            .unwrap()
            .with_channel("a", vec![1.0])
            .unwrap()
            .with_channel("b", vec![1.0, 2.0]);
        assert!(matches!(r, Err(StlError::ChannelLength { .. })));
    }
}
