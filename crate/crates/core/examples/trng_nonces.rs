//! Nonces and challenge seeds from SRAM power-up noise.

use secucode::puf::{synth_device_with, trng_next, SynthParams};

fn main() {
    let dev = synth_device_with(&SynthParams::with_seed(5)).unwrap();
    for boot in 0..4 {
        let nonce = trng_next(&dev, 128, boot).unwrap();
        let challenge = trng_next(&dev, 8, 1000 + boot).unwrap();
        println!(
            "boot {boot}: nonce {} challenge {}",
            hex::encode(nonce.to_bytes()),
            challenge.to_u64()
        );
    }
    let ones: usize = (0..2000).map(|i| trng_next(&dev, 64, i).unwrap().bits.count_ones()).sum();
    println!("monobit over 128000 bits: {:.4}", ones as f64 / 128000.0);
}
