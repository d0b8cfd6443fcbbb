//! Acceptance checks. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any fails.

use std::collections::HashSet;
use std::time::Instant;

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use secucode::bch::make_code;
use secucode::enroll::{efficiency, CrpBlock, CrpBlockMap, EnrollConfig, BLOCK_BYTES};
use secucode::fuzzy::{binomial_cdf, fe_gen_words, fe_rec, fe_rec_words, key_failure_prob, residual_min_entropy, FeConfig};
use secucode::gen2::{self, CommandView, Gen2Frame, UpdateSetup};
use secucode::layout;
use secucode::mac;
use secucode::powersim::{cold_start_session, sample_budgets, CostTable, IemPlan, PowerModel};
use secucode::protocol::{
    demo_image, frames_per_attempt, provision, prover_update, Channel, Endpoint, FirmwareImage, LinkFault, Nvm,
    ProverConfig, ProverDb, Reply, TamperPolicy, TokenSim, UpdateOutcome,
};
use secucode::puf::{readout, synth_device_with, PufDevice, SynthParams};

fn mix(a: u64, b: u64) -> u64 {
    let mut z = a.rotate_left(29) ^ b.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 31)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z ^ (z >> 29)
}

struct Verdict {
    pass: bool,
    detail: String,
}

fn verdict(pass: bool, detail: impl Into<String>) -> Verdict {
    Verdict {
        pass,
        detail: detail.into(),
    }
}

fn c1_analytic() -> Verdict {
    let a = key_failure_prob(0.0094, &FeConfig::default_config());
    let wide = FeConfig::new(make_code(63, 24, 7).unwrap(), 5);
    let b = key_failure_prob(0.0094, &wide);
    let ok = (a - 0.0016).abs() <= 5e-5 && ((b - 7.45e-7) / 7.45e-7).abs() <= 0.02;
    verdict(ok, format!("8x(31,16,3)={a:.7} 5x(63,24,7)={b:.4e}"))
}

/// Errors in one block: binomial count by inverse CDF, then distinct positions.
fn error_pattern(rng: &mut impl Rng, n: usize, cdf: &[f64]) -> u64 {
    let u: f64 = rng.random();
    let count = cdf.iter().position(|&c| u < c).unwrap_or(n);
    sample(rng, n, count).iter().fold(0u64, |e, i| e | 1 << i)
}

fn c2_monte_carlo() -> Verdict {
    const SESSIONS: u64 = 1_000_000;
    const CHUNK: u64 = 10_000;
    let ber = 0.0094;
    let cfg = FeConfig::default_config();
    let code = &cfg.code;
    let cdf: Vec<f64> = (0..=code.n).map(|t| binomial_cdf(t, code.n, ber)).collect();
    let failures: u64 = (0..SESSIONS / CHUNK)
        .into_par_iter()
        .map(|chunk| {
            let mut rng = ChaCha8Rng::seed_from_u64(mix(0xC2, chunk));
            let mut fails = 0;
            for _ in 0..CHUNK {
                let r: Vec<u64> = (0..cfg.blocks).map(|_| rng.random_range(0..1u64 << code.n)).collect();
                let (key, helper) = fe_gen_words(&r, code);
                let noisy: Vec<u64> = r.iter().map(|w| w ^ error_pattern(&mut rng, code.n, &cdf)).collect();
                if fe_rec_words(&noisy, &helper, code).map_or(true, |k| k != key) {
                    fails += 1;
                }
            }
            fails
        })
        .sum();
    let p = key_failure_prob(ber, &cfg);
    let emp = failures as f64 / SESSIONS as f64;
    let se = (p * (1.0 - p) / SESSIONS as f64).sqrt();
    let z = (emp - p) / se;
    verdict(
        z.abs() <= 3.0,
        format!("{SESSIONS} sessions, empirical {emp:.6} vs analytic {p:.6}, z={z:+.2}"),
    )
}

fn c3_toy_bch() -> Verdict {
    let code = make_code(7, 4, 1).unwrap();
    let mut decoded = 0;
    let mut ok = true;
    for m in 0..16u64 {
        let word = code.encode_word(m);
        for e in std::iter::once(0).chain((0..7).map(|i| 1u64 << i)) {
            let fixed = code.correct_word(word ^ e, 0);
            ok &= fixed == Ok(word) && code.info_bits_word(word) == m;
            decoded += 1;
        }
    }
    let sizes: Vec<usize> = (0..8).map(|s| code.coset_members(s).len()).collect();
    ok &= sizes.iter().all(|&s| s == 16);
    verdict(ok, format!("{decoded} decodes exact, coset sizes {sizes:?}"))
}

fn c4_cmac() -> Verdict {
    let key: [u8; 16] = hex::decode("2b7e151628aed2a6abf7158809cf4f3c").unwrap().try_into().unwrap();
    let msg = hex::decode(
        "6bc1bee22e409f96e93d7e117393172aae2d8a571e03ac9c9eb76fac45af8e51\
         30c81c46a35ce411e5fbc1191a0a52eff69f2445df4f9b17ad2b417be66c3710",
    )
    .unwrap();
    let vectors = [
        (0, "bb1d6929e95937287fa37d129b756746"),
        (16, "070a16b46b4d4144f79bdd9dd04a287c"),
        (40, "dfa66747de9ae63030ca32611497c827"),
        (64, "51f0bebf7e3b9d92fc49741779363cfe"),
    ];
    let matched = vectors
        .iter()
        .filter(|(len, tag)| mac::cmac(&key, &msg[..*len]).to_hex() == *tag)
        .count();
    verdict(matched == 4, format!("{matched}/4 vectors match"))
}

fn c5_enrollment() -> Verdict {
    let devices = 20;
    let temps = [0.0, 10.0, 20.0, 25.0, 30.0, 40.0];
    let per_dev: Vec<(Vec<(usize, usize)>, usize, usize)> = (0..devices)
        .into_par_iter()
        .map(|i| {
            let dev = synth_device_with(&SynthParams::with_seed(mix(0xC5, i))).unwrap();
            let rec = secucode::enroll::enroll_device(&dev, &EnrollConfig::default(), mix(0xC5E, i)).unwrap();
            let mut per_temp = Vec::new();
            let (mut ones, mut bits) = (0, 0);
            for (ti, &t) in temps.iter().enumerate() {
                let (mut flips, mut total) = (0, 0);
                for j in 0..10 {
                    let r = readout(&dev, t, mix(i, 1000 * ti as u64 + j)).unwrap().bits;
                    for c in 0..rec.map.len() {
                        let resp = secucode::enroll::challenge_to_response(&rec.map, c as u8, &r);
                        flips += resp.hamming_distance(&rec.references[c]);
                        total += resp.len();
                        ones += resp.count_ones();
                        bits += resp.len();
                    }
                }
                per_temp.push((flips, total));
            }
            (per_temp, ones, bits)
        })
        .collect();
    let worst = (0..temps.len())
        .map(|ti| {
            let (f, t) = per_dev
                .iter()
                .fold((0, 0), |(f, t), d| (f + d.0[ti].0, t + d.0[ti].1));
            f as f64 / t as f64
        })
        .fold(0.0, f64::max);
    let (ones, bits) = per_dev.iter().fold((0, 0), |(o, b), d| (o + d.1, b + d.2));
    let bias = ones as f64 / bits as f64;

    let map = |blocks: usize| CrpBlockMap {
        blocks: (0..blocks)
            .map(|b| CrpBlock {
                start_address: layout::PUF_START + b * BLOCK_BYTES,
                offsets: (0..BLOCK_BYTES as u16).collect(),
            })
            .collect(),
        block_bytes: BLOCK_BYTES,
    };
    let rows: Vec<String> = [4, 8, 2]
        .iter()
        .map(|&b| secucode::cli::sig3(100.0 * efficiency(&map(b), layout::ELIGIBLE_PUF_BITS)))
        .collect();
    let ok = worst <= 0.0094 && (bias - 0.499).abs() <= 0.005 && rows == ["11.2", "22.3", "5.58"];
    verdict(
        ok,
        format!(
            "{devices} devices, worst BER 0-40C {worst:.5}, pooled bias {bias:.4}, efficiency {}",
            rows.join("/")
        ),
    )
}

fn c6_entropy() -> Verdict {
    let cfg = FeConfig::default_config();
    let at_half = residual_min_entropy(0.5, &cfg);
    let mut monotone = true;
    let mut prev = at_half;
    for i in 1..500 {
        let d = i as f64 * 0.001;
        let (lo, hi) = (residual_min_entropy(0.5 - d, &cfg), residual_min_entropy(0.5 + d, &cfg));
        monotone &= lo < prev && (lo - hi).abs() < 1e-9;
        prev = lo;
    }
    verdict(
        at_half == 128.0 && monotone,
        format!("H(0.5)={at_half}, strictly decreasing over |b-0.5| in (0,0.5)"),
    )
}

struct Fleet {
    devices: Vec<(PufDevice, Nvm)>,
    db: ProverDb,
}

fn fleet(n: u64) -> Fleet {
    let mut db = ProverDb::default();
    let mut devices = Vec::new();
    for i in 0..n {
        let dev = synth_device_with(&SynthParams {
            device_id: i as u32,
            ..SynthParams::with_seed(mix(0xF1EE7, i))
        })
        .unwrap();
        let (rec, nvm) = provision(&dev, &EnrollConfig::default(), mix(0xF1EE7, 100 + i)).unwrap();
        db.enroll(rec).unwrap();
        devices.push((dev, nvm));
    }
    Fleet { devices, db }
}

fn random_image(rng: &mut impl Rng) -> FirmwareImage {
    let len = rng.random_range(1..=1200);
    FirmwareImage::from_bytes((0..len).map(|_| rng.random()).collect())
}

#[derive(Default)]
struct FuzzStats {
    sessions: usize,
    outcomes: [usize; 5],
    foreign: usize,
    brownouts: usize,
    clean_sessions: usize,
    clean_failures: usize,
}

fn c7_fuzz(fl: &Fleet) -> (Verdict, usize) {
    const TAMPERED: u64 = 12_000;
    const CLEAN: u64 = 1_000;
    let fe = FeConfig::default_config();
    let cfg = ProverConfig::default();
    let stats = (0..TAMPERED + CLEAN)
        .into_par_iter()
        .map(|s| {
            let mut rng = ChaCha8Rng::seed_from_u64(mix(0xC7, s));
            let (dev, nvm) = &fl.devices[rng.random_range(0..fl.devices.len())];
            let image = if rng.random_bool(0.5) {
                demo_image(["accelerometer", "thermometer", "gln"][rng.random_range(0..3)]).unwrap()
            } else {
                random_image(&mut rng)
            };
            let flat = image.flatten();
            let clean = s >= TAMPERED;
            let frames = frames_per_attempt(&image, &cfg);

            // an earlier session of a different image, for replays and injections
            let old = random_image(&mut rng);
            let mut rec_token = TokenSim::new(dev.clone(), fe.clone(), nvm.clone(), 25.0, mix(s, 1));
            let recorded = prover_update(&fl.db, dev.device_id, &old, &mut rec_token, &cfg)
                .unwrap()
                .transcript;

            let policy = if clean { TamperPolicy::None } else { TamperPolicy::Random };
            let tamper = policy.draw(&mut rng, &fe.code, fe.blocks, frames, &recorded);
            let temperature = rng.random_range(0.0..=40.0);
            let mut token = TokenSim::new(dev.clone(), fe.clone(), nvm.clone(), temperature, mix(s, 2));
            if !clean && rng.random_bool(0.3) {
                token.brownouts.at_deliveries = vec![rng.random_range(1..=frames + 2)];
            }
            if !clean && rng.random_bool(0.1) {
                token.brownouts.during_commit_after = Some(rng.random_range(0..flat.len()));
            }
            let mut ch = Channel::new(token, tamper, fe.code.clone());
            let rep = prover_update(&fl.db, dev.device_id, &image, &mut ch, &cfg).unwrap();
            let mut st = FuzzStats {
                sessions: 1,
                ..Default::default()
            };
            st.outcomes[UpdateOutcome::ALL.iter().position(|o| *o == rep.outcome).unwrap()] += 1;
            st.foreign = ch.inner.commits.iter().any(|c| !flat.starts_with(&c.bytes)) as usize;
            // a committed session must leave exactly the image in place
            if rep.outcome == UpdateOutcome::Committed {
                st.foreign |= (ch.inner.state.nvm.app_slice(0, flat.len()) != flat.as_slice()) as usize;
            }
            st.brownouts = ch
                .inner
                .events
                .iter()
                .filter(|e| matches!(e, secucode::protocol::SimEvent::Brownout { .. }))
                .count();
            if clean {
                st.clean_sessions = 1;
                st.clean_failures = (rep.outcome != UpdateOutcome::Committed) as usize;
            }
            st
        })
        .reduce(FuzzStats::default, |mut a, b| {
            a.sessions += b.sessions;
            for i in 0..5 {
                a.outcomes[i] += b.outcomes[i];
            }
            a.foreign += b.foreign;
            a.brownouts += b.brownouts;
            a.clean_sessions += b.clean_sessions;
            a.clean_failures += b.clean_failures;
            a
        });
    let breakdown: Vec<String> = UpdateOutcome::ALL
        .iter()
        .zip(stats.outcomes)
        .map(|(o, c)| format!("{}={c}", o.name()))
        .collect();
    (
        verdict(
            stats.foreign == 0 && stats.clean_failures == 0 && stats.sessions as u64 >= 10_000 + CLEAN,
            format!(
                "{} tampered sessions, foreign commits {}, clean {}/{} committed [{}]",
                TAMPERED,
                stats.foreign,
                stats.clean_sessions - stats.clean_failures,
                stats.clean_sessions,
                breakdown.join(" ")
            ),
        ),
        stats.brownouts,
    )
}

fn send(t: &mut TokenSim, cmd: &CommandView) -> Result<Reply, LinkFault> {
    t.transact(&gen2::encode(cmd, 0).unwrap())
}

fn write_chunks(t: &mut TokenSim, image: &FirmwareImage) -> Vec<Result<Reply, LinkFault>> {
    image
        .chunks(32)
        .into_iter()
        .map(|c| {
            send(
                t,
                &CommandView::BlockWrite {
                    membank: gen2::MEMBANK_USER,
                    wordptr: c.wordptr,
                    words: c.words,
                },
            )
        })
        .collect()
}

/// One interrupted session followed by every stale continuation we can
/// think of. True when the token never commits.
fn stale_session(fl: &Fleet, s: u64) -> Result<bool, String> {
    let mut rng = ChaCha8Rng::seed_from_u64(mix(0xC10, s));
    let (dev, nvm) = &fl.devices[rng.random_range(0..fl.devices.len())];
    let fe = FeConfig::default_config();
    let image = random_image(&mut rng);
    let flat = image.flatten();
    let mut t = TokenSim::new(dev.clone(), fe.clone(), nvm.clone(), 25.0, mix(s, 3));
    send(&mut t, &CommandView::TagPrivilege).map_err(|e| format!("{e:?}"))?;
    let setup = UpdateSetup {
        size: flat.len() as u32,
        start_block: 0,
        mac_method: gen2::MAC_METHOD_CMAC,
    };
    let auth = CommandView::Authenticate {
        csi: 1,
        setup: Some(setup),
    };
    let Ok(Reply::AuthData { nonce, challenge, helper }) = send(&mut t, &auth) else {
        return Err("no auth data".into());
    };
    let record = fl.db.get(dev.device_id).unwrap();
    let reference = fe.fit_response(record.reference(challenge)).unwrap();
    let Ok(sk) = fe_rec(&reference, &helper, &fe) else {
        return Ok(true);
    };
    let n_chunks = image.chunks(32).len();
    // power fails somewhere between the first chunk and the SecureComm
    let k = 3 + rng.random_range(0..=n_chunks);
    t.brownouts.at_deliveries = vec![k];
    let stale_sc = CommandView::SecureComm {
        inner_wordptr: 0,
        ciphertext: mac::sc_encrypt(mac::mac_firmware(&flat, nonce, &sk).unwrap().0, &sk).unwrap(),
    };
    write_chunks(&mut t, &image);
    let _ = send(&mut t, &stale_sc);
    if !t.events.iter().any(|e| matches!(e, secucode::protocol::SimEvent::Brownout { .. })) {
        return Err("brownout not injected".into());
    }
    if !t.commits.is_empty() {
        return Ok(false);
    }
    // the interrupted attempt's material, resent in every order that matters
    let _ = send(&mut t, &stale_sc);
    write_chunks(&mut t, &image);
    let _ = send(&mut t, &stale_sc);
    let _ = send(&mut t, &auth);
    write_chunks(&mut t, &image);
    let _ = send(&mut t, &stale_sc);
    let _ = send(&mut t, &CommandView::TagPrivilege);
    let _ = send(&mut t, &auth);
    write_chunks(&mut t, &image);
    let _ = send(&mut t, &stale_sc);
    Ok(t.commits.is_empty())
}

fn c10_volatility(fl: &Fleet, fuzz_brownouts: usize) -> Verdict {
    const SESSIONS: u64 = 2_000;
    // TokenSim asserts that volatile state is zero after every reset; a
    // violation panics the session and is caught here.
    let results: Vec<Result<bool, String>> = (0..SESSIONS)
        .into_par_iter()
        .map(|s| {
            std::panic::catch_unwind(|| stale_session(fl, s)).unwrap_or_else(|_| Err("volatile state survived".into()))
        })
        .collect();
    let errors: HashSet<String> = results.iter().filter_map(|r| r.clone().err()).collect();
    let completed = results.iter().filter(|r| matches!(r, Ok(false))).count();
    verdict(
        errors.is_empty() && completed == 0,
        format!(
            "{SESSIONS} interrupted sessions with stale continuations, {completed} completed, {} fuzz brownouts checked{}",
            fuzz_brownouts,
            if errors.is_empty() {
                String::new()
            } else {
                format!(", errors {errors:?}")
            }
        ),
    )
}

fn random_command(rng: &mut impl Rng) -> CommandView {
    match rng.random_range(0..6) {
        0 => CommandView::TagPrivilege,
        5 => CommandView::BlockWrite {
            membank: rng.random_range(1..=2),
            wordptr: rng.random_range(0..0x70),
            words: (0..rng.random_range(1..=8)).map(|_| rng.random()).collect(),
        },
        1 => CommandView::Authenticate {
            csi: rng.random(),
            setup: None,
        },
        2 => CommandView::Authenticate {
            csi: rng.random(),
            setup: Some(UpdateSetup {
                size: rng.random_range(0..1 << 16),
                start_block: rng.random_range(0..256),
                mac_method: rng.random_range(0..256),
            }),
        },
        3 => CommandView::SecureComm {
            inner_wordptr: rng.random_range(0..=(layout::DOWNLOAD_WORDS - 8) as u32),
            ciphertext: rng.random(),
        },
        _ => {
            let count = rng.random_range(1..=gen2::MAX_WORDS);
            CommandView::BlockWrite {
                membank: gen2::MEMBANK_USER,
                wordptr: rng.random_range(0..(layout::DOWNLOAD_WORDS - count) as u32),
                words: (0..count).map(|_| rng.random()).collect(),
            }
        }
    }
}

fn c8_gen2() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(0xC8);
    let frames = 3_000;
    let mut round_trip = 0;
    let mut residue = 0;
    let mut flips = 0;
    let mut detected = 0;
    for _ in 0..frames {
        let cmd = random_command(&mut rng);
        let rn = rng.random();
        let frame = gen2::encode(&cmd, rn).unwrap();
        round_trip += (gen2::decode(&frame) == Ok((cmd.clone(), rn))
            && Gen2Frame::from_hex(&frame.to_hex()).as_ref() == Ok(&frame)) as usize;
        residue += gen2::residue_ok(&frame.bits) as usize;
        for b in 0..frame.len() {
            let mut bad = frame.clone();
            bad.bits.flip(b);
            flips += 1;
            detected += (!gen2::residue_ok(&bad.bits) && gen2::decode(&bad).is_err()) as usize;
        }
    }
    let field = |cmd: &CommandView| {
        let f = gen2::encode(cmd, 0).unwrap();
        let (wordptr, _) = gen2::ebv_decode(&f.bits, 10).unwrap();
        (f.bits.uint_msb(0, 8), f.bits.uint_msb(8, 2), wordptr)
    };
    let auth = field(&CommandView::Authenticate { csi: 1, setup: None });
    let privilege = field(&CommandView::TagPrivilege);
    let discriminators = auth == (0xC7, 0, 3) && privilege == (0xC7, 0, 0x7E);
    let ok = round_trip == frames && residue == frames && detected == flips && discriminators;
    verdict(
        ok,
        format!(
            "{round_trip}/{frames} round trips, {residue} residues 0x{:04X}, {detected}/{flips} single-bit flips caught, \
             Authenticate (membank {}, wordptr {}) TagPrivilege (membank {}, wordptr {:#x})",
            gen2::CRC_RESIDUE,
            auth.1,
            auth.2,
            privilege.1,
            privilege.2
        ),
    )
}

fn c9_power() -> Verdict {
    let model = PowerModel::default();
    let costs = CostTable::default();
    let trials = 2_000u64;
    let distances: Vec<f64> = (1..=10).map(|i| i as f64 * 10.0).collect();
    let sleeps = [0.0, 5.0, 10.0, 20.0, 30.0, 50.0];
    let grid: Vec<(usize, usize)> = (0..distances.len())
        .flat_map(|d| (0..sleeps.len()).map(move |s| (d, s)))
        .collect();
    let runs: Vec<Vec<(bool, Option<f64>)>> = grid
        .par_iter()
        .map(|&(d, s)| {
            (0..trials)
                .map(|i| {
                    let r = cold_start_session(&model, &costs, distances[d], sleeps[s], mix(0xC9, i));
                    (r.success, r.latency_ms)
                })
                .collect()
        })
        .collect();
    let at = |d: usize, s: usize| &runs[d * sleeps.len() + s];
    let rate = |d: usize, s: usize| at(d, s).iter().filter(|r| r.0).count() as f64 / trials as f64;

    let mut a = true;
    let mut b = true;
    for s in 0..sleeps.len() {
        for d in 1..distances.len() {
            a &= rate(d, s) <= rate(d - 1, s);
        }
    }
    for d in 0..distances.len() {
        for s in 1..sleeps.len() {
            b &= rate(d, s) >= rate(d, s - 1);
        }
    }

    let gaps = IemPlan::fe_gen(&costs, 8, 1.0).subtasks.len() - 1;
    let mut pairs = 0;
    let mut worst = 0.0f64;
    for d in 0..distances.len() {
        for s in 1..sleeps.len() {
            for (base, slept) in at(d, 0).iter().zip(at(d, s)) {
                if let ((true, Some(l0)), (true, Some(l1))) = (base, slept) {
                    pairs += 1;
                    worst = worst.max((l1 - l0 - gaps as f64 * sleeps[s]).abs());
                }
            }
        }
    }
    let c = pairs > 0 && worst < 1e-6;

    let budgets = sample_budgets(&model, 50.0, 10_000, 0xC9D);
    let lo = budgets.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = budgets.iter().cloned().fold(0.0, f64::max);
    let d = lo <= 600_000.0 && hi >= 300_000.0;

    let row = |s: usize| {
        (0..distances.len())
            .map(|d| format!("{:.2}", rate(d, s)))
            .collect::<Vec<_>>()
            .join(" ")
    };
    verdict(
        a && b && c && d,
        format!(
            "(a) {a} (b) {b} (c) {c}: {pairs} paired sessions, max deviation {worst:.1e} ms from {gaps}*sleep \
             (d) {d}: 50 cm budgets [{:.0}k, {:.0}k]; success at sleep 0: {} | sleep 10: {}",
            lo / 1e3,
            hi / 1e3,
            row(0),
            row(2)
        ),
    )
}

fn main() {
    let start = Instant::now();
    let fl = fleet(6);
    let fuzz_brownouts = std::cell::Cell::new(0);
    let checks: Vec<(usize, &str, Box<dyn FnOnce() -> Verdict>)> = vec![
        (1, "analytic key-failure rate", Box::new(c1_analytic)),
        (2, "Monte-Carlo agrees with analytic rate", Box::new(c2_monte_carlo)),
        (3, "exhaustive toy BCH decoding and cosets", Box::new(c3_toy_bch)),
        (4, "AES-CMAC known answers", Box::new(c4_cmac)),
        (5, "enrollment reliability, bias and efficiency", Box::new(c5_enrollment)),
        (6, "residual min-entropy", Box::new(c6_entropy)),
        (7, "security fuzzing", Box::new(|| {
            let (v, b) = c7_fuzz(&fl);
            fuzz_brownouts.set(b);
            v
        })),
        (8, "Gen2 codec", Box::new(c8_gen2)),
        (9, "intermittent-power trends", Box::new(c9_power)),
        (10, "volatility after brownout", Box::new(|| c10_volatility(&fl, fuzz_brownouts.get()))),
    ];
    let mut failed = 0;
    for (n, name, check) in checks {
        let t = Instant::now();
        let v = check();
        if !v.pass {
            failed += 1;
        }
        println!(
            "{} criterion {n:>2}: {name}: {} ({:.1}s)",
            if v.pass { "PASS" } else { "FAIL" },
            v.detail,
            t.elapsed().as_secs_f64()
        );
    }
    println!("{} of 10 criteria passed in {:.1}s", 10 - failed, start.elapsed().as_secs_f64());
    if failed > 0 {
        std::process::exit(1);
    }
}
