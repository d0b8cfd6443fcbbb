//! Encode, corrupt and decode words with the BCH codes used for key derivation.

use secucode::bch::make_code;

fn main() {
    let code = make_code(31, 16, 3).expect("standard code");
    println!("BCH(31,16,3) generator polynomial: {:#x}", code.generator_poly);

    let message = 0xBEEF;
    let word = code.encode_word(message);
    println!("message {message:#06x} -> codeword {word:#010x}");

    // three errors are within reach, four are not guaranteed
    for errors in [0b1, 0b1_0000_0001, 0b100_0000_0100_0001, 0b1_0000_0010_0000_1001] {
        let received = word ^ errors;
        match code.correct_word(received, 0) {
            Ok(fixed) => println!(
                "{} flips: corrected={} message={:#06x}",
                errors.count_ones(),
                fixed == word,
                code.info_bits_word(fixed)
            ),
            Err(e) => println!("{} flips: {e}", errors.count_ones()),
        }
    }

    let toy = make_code(7, 4, 1).unwrap();
    for s in 0..(1 << toy.parity_len()) {
        println!("toy syndrome {s:03b}: {} words", toy.coset_members(s).len());
    }
}
