//! Population sampling with purpose-keyed streams.
//!
//! A replicate's profiles are a pure function of `(seed, replicate)`;
//! informed flags come from a separate stream so that changing the informed
//! ratio never changes anyone's parameters, and raising the ratio only ever
//! adds users to the informed set.

use rand::Rng;

use crate::experiments::config::ExperimentConfig;
use crate::rng;
use crate::user::UserProfile;

/// Draw one replicate's population, everyone informed.
pub fn sample_population(cfg: &ExperimentConfig, replicate: u64) -> Vec<UserProfile> {
    let mut stream = rng::stream(cfg.seed, replicate, "population");
    let data: Vec<f64> = (0..cfg.users).map(|_| cfg.data_per_user.sample(&mut stream)).collect();
    let privacy: Vec<f64> =
        (0..cfg.users).map(|_| cfg.privacy_value.sample(&mut stream)).collect();
    let sense: Vec<f64> = (0..cfg.users).map(|_| cfg.accuracy_sense.sample(&mut stream)).collect();
    (0..cfg.users)
        .map(|i| {
            UserProfile::new(
                data[i].max(0.0),
                privacy[i].max(0.0),
                cfg.privacy_elasticity,
                sense[i].max(0.0),
                true,
            )
            .expect("sampled parameters are valid")
        })
        .collect()
}

/// Mark the first `ceil(rho * n)` users of a seeded shuffle as informed.
/// The shuffle does not depend on `rho`, so informed sets nest as the ratio
/// grows.
pub fn assign_informed(users: &mut [UserProfile], rho: f64, seed: u64, replicate: u64) {
    let n = users.len();
    let mut stream = rng::stream(seed, replicate, "informed");
    let mut order: Vec<usize> = (0..n).collect();
    for i in (1..n).rev() {
        let j = stream.gen_range(0..=i);
        order.swap(i, j);
    }
    let count = ((rho * n as f64).ceil() as usize).min(n);
    for u in users.iter_mut() {
        u.informed = false;
    }
    for &i in order.iter().take(count) {
        users[i].informed = true;
    }
}
