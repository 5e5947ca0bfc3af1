use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{ConfigError, ScenarioConfig, ScenarioKind};

/// Arrival offsets in nanoseconds from the run origin, one per query.
///
/// Offline issues everything at once (all zeros). Server draws i.i.d.
/// exponential gaps with mean `1 / target_qps` by inverse CDF on a
/// ChaCha8 stream seeded from `rng_seed`, and returns their running sum.
pub fn schedule_arrivals(config: &ScenarioConfig, n: usize) -> Result<Vec<u64>, ConfigError> {
    if n == 0 {
        return Err(ConfigError::EmptySchedule);
    }
    match config.scenario {
        ScenarioKind::Offline => Ok(vec![0; n]),
        ScenarioKind::Server => {
            if config.target_qps.is_nan() || config.target_qps <= 0.0 {
                return Err(ConfigError::NonPositiveQps(config.target_qps));
            }
            let mut rng = ChaCha8Rng::seed_from_u64(config.rng_seed);
            let mean_gap_s = 1.0 / config.target_qps;
            let mut t = 0.0_f64;
            Ok((0..n)
                .map(|_| {
                    // u in [0, 1) so 1 - u in (0, 1] and ln never sees zero.
                    let u: f64 = rng.random();
                    t += -(1.0 - u).ln() * mean_gap_s;
                    (t * 1e9).round() as u64
                })
                .collect())
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn gaps_ms(offsets: &[u64]) -> Vec<f64> {
        let mut prev = 0u64;
        offsets
            .iter()
            .map(|&t| {
                let g = (t - prev) as f64 / 1e6;
                prev = t;
                g
            })
            .collect()
    }

    #[test]
    fn offline_is_all_zero() {
        let cfg = ScenarioConfig::offline();
        assert_eq!(schedule_arrivals(&cfg, 5).unwrap(), vec![0; 5]);
    }

    #[test]
    fn server_is_seeded() {
        let cfg = ScenarioConfig {
            rng_seed: 42,
            ..ScenarioConfig::server(10.0)
        };
        let a = schedule_arrivals(&cfg, 10).unwrap();
        let b = schedule_arrivals(&cfg, 10).unwrap();
        assert_eq!(a, b);
        assert!(a.windows(2).all(|w| w[0] <= w[1]));
        let other = ScenarioConfig {
            rng_seed: 43,
            ..cfg
        };
        assert_ne!(a, schedule_arrivals(&other, 10).unwrap());
    }

    #[test]
    fn server_mean_gap_tracks_rate() {
        let cfg = ScenarioConfig {
            rng_seed: 42,
            ..ScenarioConfig::server(10.0)
        };
        let gaps = gaps_ms(&schedule_arrivals(&cfg, 10_000).unwrap());
        let mean = gaps.iter().sum::<f64>() / gaps.len() as f64;
        assert!((mean - 100.0).abs() / 100.0 < 0.03, "mean gap {mean}");
    }

    #[test]
    fn server_rejects_bad_rate() {
        let cfg = ScenarioConfig::server(-1.0);
        assert_eq!(
            schedule_arrivals(&cfg, 3),
            Err(ConfigError::NonPositiveQps(-1.0))
        );
        assert_eq!(
            schedule_arrivals(&ScenarioConfig::offline(), 0),
            Err(ConfigError::EmptySchedule)
        );
    }
}
