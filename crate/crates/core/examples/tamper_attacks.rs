//! An active adversary on the reader link. A modification either stalls
//! the session, gets the update rejected, or changes nothing that matters
//! (a challenge that maps back to the same CRP block commits the genuine
//! image).

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use secucode::enroll::EnrollConfig;
use secucode::fuzzy::FeConfig;
use secucode::protocol::{
    demo_image, frames_per_attempt, provision, prover_update, Channel, ProverConfig, ProverDb, TamperPolicy, TokenSim,
};
use secucode::puf::{synth_device_with, SynthParams};

fn main() {
    let dev = synth_device_with(&SynthParams::with_seed(11)).unwrap();
    let (record, nvm) = provision(&dev, &EnrollConfig::default(), 11).unwrap();
    let mut db = ProverDb::default();
    db.enroll(record).unwrap();
    let fe = FeConfig::default_config();
    let cfg = ProverConfig::default();
    let image = demo_image("gln").unwrap();
    let frames = frames_per_attempt(&image, &cfg);

    let mut clean = TokenSim::new(dev.clone(), fe.clone(), nvm.clone(), 25.0, 0);
    let recorded = prover_update(&db, dev.device_id, &image, &mut clean, &cfg).unwrap().transcript;

    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for policy in TamperPolicy::ACTIVE {
        let tamper = policy.draw(&mut rng, &fe.code, fe.blocks, frames, &recorded);
        let token = TokenSim::new(dev.clone(), fe.clone(), nvm.clone(), 25.0, 1);
        let mut link = Channel::new(token, tamper, fe.code.clone());
        let rep = prover_update(&db, dev.device_id, &image, &mut link, &cfg).unwrap();
        println!(
            "{:<10} -> {:<18} commits={}",
            policy.name(),
            rep.outcome.name(),
            link.inner.commits.len()
        );
    }
}
