//! A complete wireless firmware update against a simulated token.

use secucode::enroll::EnrollConfig;
use secucode::fuzzy::FeConfig;
use secucode::protocol::{demo_image, provision, prover_update, PowerEnv, ProverConfig, ProverDb, TokenSim};
use secucode::puf::{synth_device_with, SynthParams};

fn main() {
    let dev = synth_device_with(&SynthParams::with_seed(3)).unwrap();
    let (record, nvm) = provision(&dev, &EnrollConfig::default(), 3).unwrap();
    let mut db = ProverDb::default();
    db.enroll(record).unwrap();

    let image = demo_image("accelerometer").unwrap();
    let mut token = TokenSim::new(dev.clone(), FeConfig::default_config(), nvm, 25.0, 99)
        .with_power(PowerEnv::new(30.0, 30.0), 99);
    let report = prover_update(&db, dev.device_id, &image, &mut token, &ProverConfig::default()).unwrap();

    println!(
        "outcome {} after {} attempt(s), {} frames, {:.1} ms",
        report.outcome.name(),
        report.attempts,
        report.transcript.len(),
        token.elapsed_ms()
    );
    for e in &token.events {
        println!("  {e:?}");
    }
    let applied = token.state.nvm.app_slice(0, image.total_bytes()) == image.flatten().as_slice();
    println!("application area matches image: {applied}");
}
