//! Record readouts to the binary dump format and enroll from the file.

use secucode::enroll::{enroll_dumps, EnrollConfig};
use secucode::puf::{synth_device_with, DumpSet, SynthParams};

fn main() {
    let dev = synth_device_with(&SynthParams::with_seed(21)).unwrap();
    let dump = DumpSet::capture(&dev, &[0.0, 25.0, 40.0], 10, 21).unwrap();
    let mut file = Vec::new();
    dump.write_to(&mut file).unwrap();
    println!("{} readouts of {} cells -> {} bytes", dump.readouts.len(), dump.cell_count(), file.len());

    let back = DumpSet::read_from(file.as_slice()).unwrap();
    assert_eq!(back, dump);
    let record = enroll_dumps(back.device_id, &back, &back, &EnrollConfig::default()).unwrap();
    println!("enrolled from file: {} CRP blocks", record.map.len());
}
