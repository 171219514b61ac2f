//! Seeded synthetic stand-ins for the two dataset families: CAN flag logs
//! with injection attacks and CICIDS-style flow records.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::ingest::{frames_to_dataset, parse_flow_cell, sanitize, CanFrame, LabeledDataset};
use crate::matrix::Matrix;

/// Identifiers seen in regular traffic of the reference vehicle.
const NORMAL_IDS: [u16; 26] = [
    0x002, 0x0a0, 0x0a1, 0x130, 0x131, 0x140, 0x153, 0x18f, 0x1f1, 0x260, 0x2a0, 0x2b0, 0x316,
    0x329, 0x350, 0x370, 0x430, 0x43f, 0x440, 0x4b1, 0x4f0, 0x545, 0x5a0, 0x5a2, 0x5f0, 0x690,
];

pub const RPM_ID: u16 = 0x316;
pub const GEAR_ID: u16 = 0x43f;
const RPM_PAYLOAD: [u8; 8] = [0x05, 0x21, 0x68, 0x09, 0x21, 0x21, 0x00, 0x6f];
const GEAR_PAYLOAD: [u8; 8] = [0x01, 0x45, 0x60, 0xff, 0x6b, 0x00, 0x00, 0x00];

/// Class shares of the public CAN log (normal, DoS, fuzzy, RPM, gear).
const CAN_SHARES: [(&str, f64); 5] = [
    ("Normal", 14_037_293.0),
    ("DoS", 587_521.0),
    ("Fuzzy", 491_847.0),
    ("RPM", 654_897.0),
    ("Gear", 597_252.0),
];

/// Per-identifier payload template: fixed bytes plus a mask of bytes that
/// vary (counters or sensor readings).
fn template(id: u16) -> ([u8; 8], u8) {
    let mut rng = ChaCha8Rng::seed_from_u64(0xCA11_0000 + u64::from(id));
    let mut fixed = [0u8; 8];
    rng.fill(&mut fixed[..]);
    let varying: u8 = rng.gen::<u8>() & 0b0111_1110 | 0b0000_0100;
    (fixed, varying)
}

fn normal_frame<R: Rng>(rng: &mut R, t: f64) -> CanFrame {
    let id = *NORMAL_IDS.choose(rng).expect("ids");
    let (mut data, varying) = template(id);
    for (b, slot) in data.iter_mut().enumerate() {
        if varying & (1 << b) != 0 {
            let center = *slot as i32;
            *slot = (center + rng.gen_range(-24..=24)).clamp(0, 255) as u8;
        }
    }
    // gauge signals carried by the spoofing targets
    match id {
        RPM_ID => {
            let rpm: u16 = rng.gen_range(700..6500);
            data[2] = (rpm & 0xff) as u8;
            data[3] = (rpm >> 8) as u8;
        }
        GEAR_ID => data[0] = rng.gen_range(0..7),
        _ => {}
    }
    CanFrame {
        timestamp: t,
        can_id: id,
        dlc: 8,
        data,
        label: "Normal".into(),
    }
}

fn attack_frame<R: Rng>(rng: &mut R, class: &str, t: f64) -> CanFrame {
    let (can_id, data) = match class {
        "DoS" => (0x000, [0u8; 8]),
        "Fuzzy" => {
            let mut d = [0u8; 8];
            rng.fill(&mut d[..]);
            (rng.gen_range(0..=0x7ff), d)
        }
        "RPM" => (RPM_ID, RPM_PAYLOAD),
        _ => (GEAR_ID, GEAR_PAYLOAD),
    };
    CanFrame {
        timestamp: t,
        can_id,
        dlc: 8,
        data,
        label: class.into(),
    }
}

/// Row counts per class: shares scaled to `rows`, each at least `floor`.
fn allocate(shares: &[(&str, f64)], rows: usize, floor: usize) -> Vec<usize> {
    let total: f64 = shares.iter().map(|s| s.1).sum();
    shares
        .iter()
        .map(|(_, s)| ((s / total * rows as f64).round() as usize).max(floor))
        .collect()
}

/// Frames with their injection flag, in time order. Attacks arrive in
/// bursts, as in the public logs.
pub fn synth_can_frames(rows: usize, seed: u64) -> Vec<(CanFrame, bool)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let counts = allocate(&CAN_SHARES, rows, 1);
    let mut plan: Vec<usize> = Vec::new();
    for (class, &n) in counts.iter().enumerate().skip(1) {
        let mut left = n;
        while left > 0 {
            let burst = left.min(rng.gen_range(20..200));
            plan.push(class * 1_000_000 + burst);
            left -= burst;
        }
    }
    let normal_total = counts[0];
    let bursts = plan.len();
    plan.shuffle(&mut rng);
    let gap = normal_total / (bursts + 1);
    let mut out = Vec::with_capacity(counts.iter().sum());
    let mut t = 1_478_198_376.0_f64;
    let mut normal_left = normal_total;
    let push_normals = |n: usize, out: &mut Vec<(CanFrame, bool)>, t: &mut f64, rng: &mut ChaCha8Rng| {
        for _ in 0..n {
            *t += rng.gen_range(0.0002..0.0006);
            out.push((normal_frame(rng, *t), false));
        }
    };
    for p in plan {
        let class = CAN_SHARES[p / 1_000_000].0;
        let burst = p % 1_000_000;
        let n = gap.min(normal_left);
        push_normals(n, &mut out, &mut t, &mut rng);
        normal_left -= n;
        for _ in 0..burst {
            t += 0.0003;
            out.push((attack_frame(&mut rng, class, t), true));
            // regular traffic keeps flowing during an injection
            if normal_left > 0 && rng.gen_bool(0.5) {
                t += 0.0002;
                out.push((normal_frame(&mut rng, t), false));
                normal_left -= 1;
            }
        }
    }
    push_normals(normal_left, &mut out, &mut t, &mut rng);
    out
}

/// A labeled CAN dataset of about `rows` frames with class shares of the
/// public log.
pub fn synth_can(rows: usize, seed: u64) -> Result<LabeledDataset> {
    let frames: Vec<CanFrame> = synth_can_frames(rows, seed).into_iter().map(|f| f.0).collect();
    frames_to_dataset(&frames)
}

pub const FLOW_COLUMNS: [&str; 78] = [
    "Destination Port", "Flow Duration", "Total Fwd Packets", "Total Backward Packets",
    "Total Length of Fwd Packets", "Total Length of Bwd Packets", "Fwd Packet Length Max",
    "Fwd Packet Length Min", "Fwd Packet Length Mean", "Fwd Packet Length Std",
    "Bwd Packet Length Max", "Bwd Packet Length Min", "Bwd Packet Length Mean",
    "Bwd Packet Length Std", "Flow Bytes/s", "Flow Packets/s", "Flow IAT Mean", "Flow IAT Std",
    "Flow IAT Max", "Flow IAT Min", "Fwd IAT Total", "Fwd IAT Mean", "Fwd IAT Std", "Fwd IAT Max",
    "Fwd IAT Min", "Bwd IAT Total", "Bwd IAT Mean", "Bwd IAT Std", "Bwd IAT Max", "Bwd IAT Min",
    "Fwd PSH Flags", "Bwd PSH Flags", "Fwd URG Flags", "Bwd URG Flags", "Fwd Header Length",
    "Bwd Header Length", "Fwd Packets/s", "Bwd Packets/s", "Min Packet Length",
    "Max Packet Length", "Packet Length Mean", "Packet Length Std", "Packet Length Variance",
    "FIN Flag Count", "SYN Flag Count", "RST Flag Count", "PSH Flag Count", "ACK Flag Count",
    "URG Flag Count", "CWE Flag Count", "ECE Flag Count", "Down/Up Ratio", "Average Packet Size",
    "Avg Fwd Segment Size", "Avg Bwd Segment Size", "Fwd Header Length.1", "Fwd Avg Bytes/Bulk",
    "Fwd Avg Packets/Bulk", "Fwd Avg Bulk Rate", "Bwd Avg Bytes/Bulk", "Bwd Avg Packets/Bulk",
    "Bwd Avg Bulk Rate", "Subflow Fwd Packets", "Subflow Fwd Bytes", "Subflow Bwd Packets",
    "Subflow Bwd Bytes", "Init_Win_bytes_forward", "Init_Win_bytes_backward", "act_data_pkt_fwd",
    "min_seg_size_forward", "Active Mean", "Active Std", "Active Max", "Active Min", "Idle Mean",
    "Idle Std", "Idle Max", "Idle Min",
];

/// Traffic profile of one flow population. Pairs are (mean, sd) of the
/// natural logarithm unless noted.
#[derive(Clone, Copy)]
struct Profile {
    ports: &'static [u16],
    duration: (f64, f64),
    fwd_pkts: (f64, f64),
    bwd_pkts: (f64, f64),
    /// Plain (mean, sd) of per-packet payload bytes.
    fwd_len: (f64, f64),
    bwd_len: (f64, f64),
    /// Probability of each flag: FIN, SYN, RST, PSH, ACK, URG.
    flags: [f64; 6],
    win_fwd: &'static [f64],
    win_bwd: &'static [f64],
    zero_duration: f64,
    idle: (f64, f64),
}

const WEB: &[u16] = &[80];
const WINS: &[f64] = &[29200.0, 8192.0, 65535.0, 256.0, 237.0];

fn p(
    ports: &'static [u16],
    duration: (f64, f64),
    fwd_pkts: (f64, f64),
    bwd_pkts: (f64, f64),
    fwd_len: (f64, f64),
    bwd_len: (f64, f64),
    flags: [f64; 6],
    win_fwd: &'static [f64],
    win_bwd: &'static [f64],
) -> Profile {
    Profile {
        ports,
        duration,
        fwd_pkts,
        bwd_pkts,
        fwd_len,
        bwd_len,
        flags,
        win_fwd,
        win_bwd,
        zero_duration: 0.0,
        idle: (0.0, 0.0),
    }
}

/// Benign traffic mixes several populations.
fn benign_modes() -> Vec<(f64, Profile)> {
    vec![
        (0.35, Profile { zero_duration: 0.002, idle: (15.0, 1.5), ..p(&[443], (13.0, 2.5), (2.2, 1.2), (2.3, 1.3), (180.0, 120.0), (900.0, 500.0), [0.4, 0.3, 0.1, 0.5, 0.6, 0.05], WINS, WINS) }),
        (0.20, Profile { zero_duration: 0.002, idle: (14.0, 1.5), ..p(WEB, (12.5, 2.5), (2.0, 1.1), (2.0, 1.2), (260.0, 150.0), (1100.0, 600.0), [0.4, 0.3, 0.1, 0.5, 0.6, 0.1], WINS, WINS) }),
        (0.30, Profile { zero_duration: 0.01, ..p(&[53], (10.0, 1.5), (0.4, 0.4), (0.4, 0.4), (40.0, 10.0), (120.0, 60.0), [0.0, 0.0, 0.0, 0.0, 0.0, 0.0], &[-1.0], &[-1.0]) }),
        (0.15, Profile { zero_duration: 0.005, idle: (16.0, 1.0), ..p(&[123, 137, 8080, 3268, 389, 445, 139], (14.0, 3.0), (1.5, 1.2), (1.3, 1.2), (90.0, 80.0), (200.0, 180.0), [0.3, 0.3, 0.2, 0.3, 0.5, 0.0], WINS, WINS) }),
    ]
}

/// Flow class shares of the public capture, with the profile of each class.
fn flow_classes() -> Vec<(&'static str, f64, Profile)> {
    let none: &[f64] = &[-1.0];
    vec![
        ("Bot", 1_966.0, p(&[8080], (11.0, 1.0), (1.2, 0.3), (0.9, 0.3), (160.0, 20.0), (130.0, 20.0), [0.5, 0.2, 0.0, 0.6, 0.4, 0.0], &[8192.0], &[237.0])),
        ("DDoS", 128_027.0, p(WEB, (14.5, 0.8), (1.3, 0.3), (1.4, 0.4), (7.0, 3.0), (1900.0, 300.0), [0.0, 0.0, 0.0, 0.0, 1.0, 0.0], &[256.0], &[229.0])),
        ("DoS GoldenEye", 10_293.0, p(WEB, (16.0, 0.6), (2.0, 0.3), (1.8, 0.3), (55.0, 15.0), (1600.0, 250.0), [0.7, 0.0, 0.0, 1.0, 0.2, 0.0], &[29200.0], &[235.0])),
        ("DoS Hulk", 231_073.0, p(WEB, (11.0, 1.5), (1.6, 0.4), (1.0, 0.9), (60.0, 25.0), (700.0, 500.0), [0.5, 0.0, 0.0, 0.4, 0.1, 0.0], &[29200.0, 251.0], &[235.0])),
        ("DoS Slowhttptest", 5_499.0, Profile { idle: (18.0, 0.3), ..p(WEB, (18.0, 0.4), (1.5, 0.3), (0.3, 0.3), (2.0, 2.0), (0.0, 0.0), [0.0, 0.0, 0.0, 0.0, 1.0, 0.0], &[29200.0], none) }),
        ("DoS slowloris", 5_796.0, Profile { idle: (17.5, 0.3), ..p(WEB, (17.8, 0.4), (1.9, 0.2), (0.8, 0.4), (30.0, 6.0), (0.0, 0.0), [0.0, 0.0, 0.0, 0.0, 1.0, 0.0], &[29200.0], &[235.0]) }),
        ("Heartbleed", 11.0, p(&[444], (18.6, 0.1), (7.8, 0.2), (8.3, 0.2), (12.0, 4.0), (7300.0, 400.0), [0.0, 0.0, 0.0, 1.0, 1.0, 0.0], &[229.0], &[235.0])),
        ("PortScan", 158_930.0, Profile { zero_duration: 0.02, ..p(&[0], (3.8, 0.9), (0.1, 0.2), (0.1, 0.2), (0.5, 0.8), (1.0, 2.0), [0.0, 1.0, 0.6, 0.0, 0.0, 0.0], &[1024.0, 29200.0], &[0.0]) }),
        ("SSH-Patator", 5_897.0, p(&[22], (15.5, 0.5), (3.0, 0.2), (3.3, 0.2), (70.0, 12.0), (85.0, 10.0), [0.6, 0.0, 0.0, 1.0, 0.4, 0.0], &[29200.0], &[247.0])),
        ("FTP-Patator", 7_938.0, p(&[21], (15.0, 0.6), (2.3, 0.2), (2.7, 0.2), (9.0, 3.0), (20.0, 4.0), [0.5, 0.0, 0.0, 1.0, 0.3, 0.0], &[29200.0], &[227.0])),
        ("Infiltration", 36.0, Profile { idle: (15.5, 1.5), ..p(&[444], (14.5, 2.0), (2.5, 1.2), (2.6, 1.2), (220.0, 130.0), (1000.0, 600.0), [0.4, 0.3, 0.1, 0.5, 0.6, 0.0], &[1024.0], &[2053.0]) }),
        ("Web Attack Brute Force", 1_507.0, p(WEB, (15.6, 0.4), (1.4, 0.2), (1.1, 0.2), (95.0, 25.0), (500.0, 80.0), [0.3, 0.0, 0.0, 0.5, 0.5, 0.0], &[29200.0], &[235.0])),
        ("Web Attack Sql Injection", 21.0, p(WEB, (15.0, 0.4), (1.6, 0.2), (1.3, 0.2), (140.0, 20.0), (420.0, 60.0), [0.3, 0.0, 0.0, 0.5, 0.5, 0.0], &[29200.0], &[235.0])),
        ("Web Attack XSS", 652.0, p(WEB, (15.4, 0.6), (1.5, 0.3), (1.2, 0.3), (130.0, 50.0), (620.0, 200.0), [0.35, 0.05, 0.0, 0.5, 0.55, 0.05], &[29200.0, 8192.0], &[235.0])),
    ]
}

const BENIGN_COUNT: f64 = 2_273_097.0;

fn lognormal<R: Rng>(rng: &mut R, (mu, sd): (f64, f64)) -> f64 {
    if sd <= 0.0 {
        return mu.exp();
    }
    (mu + sd * Normal::new(0.0, 1.0).expect("unit normal").sample(rng)).exp()
}

fn gauss<R: Rng>(rng: &mut R, (mu, sd): (f64, f64)) -> f64 {
    if sd <= 0.0 {
        return mu;
    }
    Normal::new(mu, sd).expect("finite parameters").sample(rng)
}

/// Sample statistics (min, max, mean, std) of `n` per-packet lengths.
fn lengths<R: Rng>(rng: &mut R, n: usize, dist: (f64, f64)) -> (f64, f64, f64, f64) {
    if n == 0 {
        return (0.0, 0.0, 0.0, 0.0);
    }
    let draws = n.min(64);
    let v: Vec<f64> = (0..draws).map(|_| gauss(rng, dist).max(0.0).round()).collect();
    let mean = v.iter().sum::<f64>() / draws as f64;
    let var = v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (draws.max(2) - 1) as f64;
    let min = v.iter().copied().fold(f64::INFINITY, f64::min);
    let max = v.iter().copied().fold(0.0, f64::max);
    (min, max, mean, if draws > 1 { var.sqrt() } else { 0.0 })
}

/// One flow record rendered as CSV cells (78 features).
fn flow_record<R: Rng>(rng: &mut R, pr: &Profile) -> Vec<String> {
    let port = match pr.ports {
        [0] => rng.gen_range(1..=65535) as f64,
        ports => *ports.choose(rng).expect("ports") as f64,
    };
    let fwd = lognormal(rng, pr.fwd_pkts).round().max(1.0);
    let bwd = (lognormal(rng, pr.bwd_pkts) - 1.0).round().max(0.0);
    let zero = rng.gen_bool(pr.zero_duration);
    let duration = if zero { 0.0 } else { lognormal(rng, pr.duration).round().max(1.0) };
    let (fmin, fmax, fmean, fstd) = lengths(rng, fwd as usize, pr.fwd_len);
    let (bmin, bmax, bmean, bstd) = lengths(rng, bwd as usize, pr.bwd_len);
    let ftot = (fmean * fwd).round();
    let btot = (bmean * bwd).round();
    let pkts = fwd + bwd;
    let gaps = (pkts - 1.0).max(1.0);
    let iat_mean = duration / gaps;
    let jitter: f64 = rng.gen_range(0.2..1.5);
    let iat_std = iat_mean * jitter;
    let iat_max = (iat_mean + 2.0 * iat_std).min(duration);
    let iat_min = (iat_mean * rng.gen_range(0.0..0.3)).round();
    let fwd_iat_total = (duration * rng.gen_range(0.6..1.0)).round();
    let fwd_iat_mean = fwd_iat_total / (fwd - 1.0).max(1.0);
    let bwd_iat_total = if bwd > 1.0 { (duration * rng.gen_range(0.3..0.9)).round() } else { 0.0 };
    let bwd_iat_mean = bwd_iat_total / (bwd - 1.0).max(1.0);
    let secs = duration / 1e6;
    let rate = |x: f64| -> String {
        // zero-duration flows yield the textual Infinity / NaN of the capture
        if secs == 0.0 {
            if x == 0.0 { "NaN".into() } else { "Infinity".into() }
        } else {
            format!("{}", x / secs)
        }
    };
    let all_min = if bwd > 0.0 { fmin.min(bmin) } else { fmin };
    let all_max = fmax.max(bmax);
    let all_mean = (ftot + btot) / pkts;
    let all_std = ((fstd * fstd * fwd + bstd * bstd * bwd) / pkts + ((fmean - all_mean).powi(2) * fwd + (bmean - all_mean).powi(2) * bwd) / pkts).sqrt();
    let flag = |i: usize, rng: &mut R| f64::from(u8::from(rng.gen_bool(pr.flags[i])));
    let fin = flag(0, rng);
    let syn = flag(1, rng);
    let rst = flag(2, rng);
    let psh = flag(3, rng);
    let ack = flag(4, rng);
    let urg = flag(5, rng);
    let header = 20.0 + 12.0 * f64::from(u8::from(rng.gen_bool(0.7)));
    let fwd_header = fwd * header;
    let bwd_header = bwd * header;
    let win_f = *pr.win_fwd.choose(rng).expect("windows");
    let win_b = *pr.win_bwd.choose(rng).expect("windows");
    let act_data = (fwd * rng.gen_range(0.0..1.0)).floor().min((fwd - 1.0).max(0.0));
    let active = if duration > 1e6 { lognormal(rng, (12.0, 1.0)) } else { 0.0 };
    let active_std = active * rng.gen_range(0.0..0.3);
    let idle = if pr.idle.0 > 0.0 && duration > 5e6 { lognormal(rng, pr.idle) } else { 0.0 };
    let idle_std = idle * rng.gen_range(0.0..0.2);
    let avg_size = (ftot + btot) / (pkts - 1.0).max(1.0);
    let values: Vec<f64> = vec![
        port, duration, fwd, bwd, ftot, btot, fmax, fmin, fmean, fstd, bmax, bmin, bmean, bstd,
    ];
    let mut cells: Vec<String> = values.iter().map(|v| format!("{v}")).collect();
    cells.push(rate(ftot + btot));
    cells.push(rate(pkts));
    let tail: Vec<f64> = vec![
        iat_mean.round(), iat_std.round(), iat_max.round(), iat_min,
        fwd_iat_total, fwd_iat_mean.round(), (fwd_iat_mean * jitter).round(), fwd_iat_total.min(iat_max).round(), iat_min,
        bwd_iat_total, bwd_iat_mean.round(), (bwd_iat_mean * jitter).round(), bwd_iat_total.min(iat_max).round(), if bwd > 1.0 { iat_min } else { 0.0 },
        psh, 0.0, urg, 0.0, fwd_header, bwd_header,
    ];
    cells.extend(tail.iter().map(|v| format!("{v}")));
    cells.push(if secs == 0.0 { "Infinity".into() } else { format!("{}", fwd / secs) });
    cells.push(if secs == 0.0 { if bwd == 0.0 { "NaN".into() } else { "Infinity".into() } } else { format!("{}", bwd / secs) });
    let rest: Vec<f64> = vec![
        all_min, all_max, all_mean, all_std, all_std * all_std,
        fin, syn, rst, psh, ack, urg, 0.0, 0.0,
        (bwd / fwd).floor(), avg_size, fmean, bmean, fwd_header,
        0.0, 0.0, 0.0, 0.0, 0.0, 0.0,
        fwd, ftot, bwd, btot,
        win_f, win_b, act_data, header,
        active.round(), active_std.round(), (active + active_std).round(), (active - active_std).max(0.0).round(),
        idle.round(), idle_std.round(), (idle + idle_std).round(), (idle - idle_std).max(0.0).round(),
    ];
    cells.extend(rest.iter().map(|v| format!("{v}")));
    debug_assert_eq!(cells.len(), FLOW_COLUMNS.len());
    cells
}

/// Header and string rows of a flow capture with about `rows` records.
/// Class shares follow the public capture; every class gets at least
/// `min_per_class` rows. The label is the last cell.
pub fn synth_flow_rows(rows: usize, min_per_class: usize, seed: u64) -> (Vec<String>, Vec<Vec<String>>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let classes = flow_classes();
    let mut shares: Vec<(&str, f64)> = vec![("BENIGN", BENIGN_COUNT)];
    shares.extend(classes.iter().map(|c| (c.0, c.1)));
    let counts = allocate(&shares, rows, min_per_class);
    let modes = benign_modes();
    let mut out = Vec::with_capacity(counts.iter().sum());
    for _ in 0..counts[0] {
        let u: f64 = rng.gen();
        let mut acc = 0.0;
        let mut mode = &modes[modes.len() - 1].1;
        for (w, m) in &modes {
            acc += w;
            if u < acc {
                mode = m;
                break;
            }
        }
        let mut r = flow_record(&mut rng, mode);
        r.push("BENIGN".into());
        out.push(r);
    }
    for ((name, _, profile), &n) in classes.iter().zip(&counts[1..]) {
        for _ in 0..n {
            let mut r = flow_record(&mut rng, profile);
            r.push((*name).into());
            out.push(r);
        }
    }
    out.shuffle(&mut rng);
    let mut header: Vec<String> = FLOW_COLUMNS.iter().map(|s| s.to_string()).collect();
    header.push(crate::ingest::LABEL_COLUMN.into());
    (header, out)
}

/// Parsed and sanitized flow dataset built from [`synth_flow_rows`].
pub fn synth_flows(rows: usize, min_per_class: usize, seed: u64) -> Result<LabeledDataset> {
    let (header, records) = synth_flow_rows(rows, min_per_class, seed);
    let f = header.len() - 1;
    let mut data = Vec::with_capacity(records.len() * f);
    let mut labels = Vec::with_capacity(records.len());
    for r in &records {
        for cell in &r[..f] {
            data.push(parse_flow_cell(cell).ok_or_else(|| Error::Invariant(format!("bad cell {cell}")))?);
        }
        labels.push(r[f].clone());
    }
    let d = LabeledDataset::from_string_labels(
        Matrix::from_vec(records.len(), f, data)?,
        &labels,
        header[..f].to_vec(),
    )?;
    Ok(sanitize(&d)?.0)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn can_shares_and_patterns() {
        let d = synth_can(20_000, 1).unwrap();
        assert_eq!(d.class_names, ["DoS", "Fuzzy", "Gear", "Normal", "RPM"]);
        let counts = d.class_counts();
        let normal = counts[d.class_index("Normal").unwrap()] as f64 / d.n_rows() as f64;
        assert!((normal - 0.858).abs() < 0.01, "{normal}");
        let dos = d.class_index("DoS").unwrap();
        for (row, &l) in d.features.iter_rows().zip(&d.labels) {
            if l == dos {
                assert!(row.iter().enumerate().all(|(j, &v)| if j == 1 { v == 8.0 } else { v == 0.0 }));
            }
        }
        // the spoofed payloads never occur in regular traffic
        let normal_c = d.class_index("Normal").unwrap();
        for (row, &l) in d.features.iter_rows().zip(&d.labels) {
            if l == normal_c && row[0] == f64::from(RPM_ID) {
                assert_ne!(row[2..], RPM_PAYLOAD.map(f64::from));
            }
        }
    }

    #[test]
    fn flows_have_every_class_and_nonfinite_cells() {
        let (header, rows) = synth_flow_rows(5_000, 20, 3);
        assert_eq!(header.len(), 79);
        assert!(rows.iter().all(|r| r.len() == 79));
        assert!(rows.iter().any(|r| r.iter().any(|c| c == "Infinity")));
        let d = synth_flows(5_000, 20, 3).unwrap();
        assert_eq!(d.n_classes(), 15);
        assert!(d.class_counts().iter().all(|&c| c >= 20));
        assert!(d.features.all_finite());
        assert_eq!(d.attack_classes.len(), 14);
    }

    #[test]
    fn generation_is_deterministic() {
        assert_eq!(synth_can(3000, 9).unwrap(), synth_can(3000, 9).unwrap());
        assert_eq!(synth_flow_rows(500, 5, 2), synth_flow_rows(500, 5, 2));
    }
}
