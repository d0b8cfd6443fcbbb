//! Enroll a simulated SRAM PUF and check key-material reliability across
//! the operating temperature range.

use secucode::enroll::{enroll_device, enrolled_ber, EnrollConfig};
use secucode::puf::{readout, synth_device_with, SynthParams};

fn main() {
    let dev = synth_device_with(&SynthParams::with_seed(7)).unwrap();
    let record = enroll_device(&dev, &EnrollConfig::default(), 7).unwrap();
    println!(
        "device {}: {} stable bytes, {} balanced, {} CRP blocks, efficiency {:.2}%",
        record.device_id,
        record.meta.stable_bytes,
        record.meta.balanced_bytes,
        record.map.len(),
        100.0 * record.efficiency()
    );
    println!("temperature_C,enrolled_ber");
    for t in [0.0, 10.0, 25.0, 40.0, 60.0] {
        let readouts: Vec<_> = (0..20).map(|i| readout(&dev, t, 1000 + i).unwrap().bits).collect();
        println!("{t},{:.5}", enrolled_ber(&record, &readouts));
    }
}
