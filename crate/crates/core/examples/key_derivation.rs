//! Derive a session key from a PUF response, then rebuild it from a noisy
//! copy and the public helper data.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use secucode::bits::Bits;
use secucode::fuzzy::{fe_gen, fe_rec, key_failure_prob, residual_min_entropy, FeConfig};

fn main() {
    let cfg = FeConfig::default_config();
    let mut rng = ChaCha8Rng::seed_from_u64(42);
    let r = Bits::from_bools((0..cfg.response_bits()).map(|_| rng.random()).collect());
    let (key, helper) = fe_gen(&r, &cfg).unwrap();
    println!(
        "{} response bits -> {} key bits, {} helper bits",
        cfg.response_bits(),
        cfg.key_bits(),
        helper.syndromes.len()
    );

    for ber in [0.005, 0.0094, 0.03] {
        let mut ok = 0;
        let trials = 2000;
        for _ in 0..trials {
            let noisy = Bits::from_bools(r.iter().map(|b| b ^ rng.random_bool(ber)).collect());
            if fe_rec(&noisy, &helper, &cfg).is_ok_and(|k| k == key) {
                ok += 1;
            }
        }
        println!(
            "ber {ber}: recovered {ok}/{trials}, analytic failure rate {:.3e}",
            key_failure_prob(ber, &cfg)
        );
    }
    println!("residual min-entropy at bias 0.499: {:.2} bits", residual_min_entropy(0.499, &cfg));
}
