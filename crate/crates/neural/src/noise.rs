//! Start-state randomization: Gaussian-mixture noise on the decision
//! variables only. Known variables are never touched, so every randomized
//! start still satisfies the case data exactly.

use gridflow_autodiff::Dtype;
use gridflow_core::GridState;
use rand::RngCore;

use crate::model::NoiseSpec;

pub fn randomize_start<T: Dtype>(
    state: &GridState<T>,
    noise: &NoiseSpec,
    rng: &mut impl RngCore,
) -> GridState<T> {
    let mut out = state.clone();
    for i in 0..out.len() {
        let k = out.known[i];
        if !k.p {
            out.p[i] += T::from_f64(noise.sample(rng));
        }
        if !k.q {
            out.q[i] += T::from_f64(noise.sample(rng));
        }
        if !k.vm {
            out.vm[i] += T::from_f64(noise.sample(rng));
        }
        if !k.va {
            out.va[i] += T::from_f64(noise.sample(rng));
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use gridflow_core::network::{Bus, BusType, Network};
    use gridflow_core::state::flat_state;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn three_bus() -> Network<f64> {
        let mk = |id, bus_type| Bus { id, bus_type, p: 0.2, q: 0.1, vm: 1.02, va: 0.01, base_kv: 20.0 };
        Network {
            base_mva: 10.0,
            buses: vec![mk(0, BusType::Slack), mk(1, BusType::Pq), mk(2, BusType::Pv)],
            branches: vec![],
        }
    }

    #[test]
    fn zero_noise_is_identity() {
        let net = three_bus();
        let flat = flat_state(&net);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let out = randomize_start(&flat, &NoiseSpec::zero(), &mut rng);
        assert_eq!(out, flat);
    }

    #[test]
    fn known_variables_untouched_under_any_noise() {
        let net = three_bus();
        let flat = flat_state(&net);
        let noise = NoiseSpec { weights: vec![1.0], means: vec![5.0], std_devs: vec![2.0] };
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let out = randomize_start(&flat, &noise, &mut rng);
        // slack vm/va fixed
        assert_eq!(out.vm[0], flat.vm[0]);
        assert_eq!(out.va[0], flat.va[0]);
        // PQ p/q fixed
        assert_eq!(out.p[1], flat.p[1]);
        assert_eq!(out.q[1], flat.q[1]);
        // PV p/vm fixed
        assert_eq!(out.p[2], flat.p[2]);
        assert_eq!(out.vm[2], flat.vm[2]);
        // and the unknowns all moved
        assert_ne!(out.p[0], flat.p[0]);
        assert_ne!(out.vm[1], flat.vm[1]);
        assert_ne!(out.q[2], flat.q[2]);
    }

    #[test]
    fn same_seed_same_noise() {
        let net = three_bus();
        let flat = flat_state(&net);
        let noise = NoiseSpec::default();
        let a = randomize_start(&flat, &noise, &mut ChaCha8Rng::seed_from_u64(9));
        let b = randomize_start(&flat, &noise, &mut ChaCha8Rng::seed_from_u64(9));
        assert_eq!(a, b);
    }
}
