//! Build, print and parse the air-interface frames of an update session.

use secucode::gen2::{self, CommandView, UpdateSetup};

fn main() {
    let cmds = [
        CommandView::TagPrivilege,
        CommandView::Authenticate {
            csi: 1,
            setup: Some(UpdateSetup {
                size: 399,
                start_block: 0,
                mac_method: gen2::MAC_METHOD_CMAC,
            }),
        },
        CommandView::BlockWrite {
            membank: gen2::MEMBANK_USER,
            wordptr: 0,
            words: vec![0x4031, 0x0024, 0xB240],
        },
        CommandView::SecureComm {
            inner_wordptr: 0,
            ciphertext: [0xA5; 16],
        },
    ];
    for cmd in &cmds {
        let frame = gen2::encode(cmd, 0x1234).unwrap();
        let (back, rn) = gen2::decode(&frame).unwrap();
        assert_eq!(&back, cmd);
        println!(
            "{:>3} bits  residue_ok={}  rn={rn:#06x}  {}",
            frame.len(),
            gen2::residue_ok(&frame.bits),
            frame.to_hex()
        );
    }

    // a reader that only issues single-word writes
    let big = &cmds[2];
    for part in gen2::reader_split(big) {
        println!("split: {part:?}");
    }

    let mut bad = gen2::encode(&cmds[0], 0).unwrap();
    bad.bits.flip(5);
    println!("corrupted frame: {:?}", gen2::decode(&bad).unwrap_err());
}
