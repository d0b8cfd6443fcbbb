//! Cold-start key generation under harvested power, with and without
//! sleeps between subtasks. Prints a voltage trace as CSV.

use secucode::powersim::{cold_start_success_rate, cold_start_traced, CostTable, PowerModel, Trace};

fn main() {
    let model = PowerModel::default();
    let costs = CostTable::default();
    println!("distance_cm,sleep_ms,success_rate");
    for d in [20.0, 40.0, 60.0] {
        for sleep in [0.0, 10.0, 30.0] {
            let rate = cold_start_success_rate(&model, &costs, d, sleep, 200, 5);
            println!("{d},{sleep},{rate:.3}");
        }
    }

    let mut trace = Trace::default();
    let r = cold_start_traced(&model, &costs, 40.0, 10.0, 5, &mut trace);
    println!("\n# 40 cm, 10 ms sleep: success={} latency={:?} ms", r.success, r.latency_ms);
    print!("{}", trace.to_csv());
}
