//! AES-CMAC over a firmware image, bound to a session nonce.

use secucode::bits::Bits;
use secucode::fuzzy::SessionKey;
use secucode::mac::{cmac, mac_firmware, sc_decrypt, sc_encrypt};
use secucode::protocol::demo_image;

fn main() {
    let key: [u8; 16] = hex::decode("2b7e151628aed2a6abf7158809cf4f3c").unwrap().try_into().unwrap();
    println!("CMAC(empty) = {}", cmac(&key, b"").to_hex());

    let sk = SessionKey {
        bits: Bits::from_bytes_lsb(&key),
    };
    let fw = demo_image("thermometer").unwrap().flatten();
    let a = mac_firmware(&fw, 1, &sk).unwrap();
    let b = mac_firmware(&fw, 2, &sk).unwrap();
    println!("{} bytes, nonce 1: {}", fw.len(), a.to_hex());
    println!("{} bytes, nonce 2: {}", fw.len(), b.to_hex());

    let ct = sc_encrypt(a.0, &sk).unwrap();
    println!("SecureComm payload {}", hex::encode(ct));
    assert_eq!(sc_decrypt(ct, &sk).unwrap(), a.0);
}
