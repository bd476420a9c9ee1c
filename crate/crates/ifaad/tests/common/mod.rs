#![allow(dead_code)]

//! Stand-ins for the raw UCI files: same layout and class histogram as the
//! published files, random feature values.

use std::fmt::Write;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// `(class, count)` pairs of each raw file.
pub fn class_histogram(preset: &str) -> &'static [(&'static str, usize)] {
    match preset {
        // Rings values outside the preset mapping are represented by 5 and 7.
        "abalone" => &[("3", 15), ("5", 115), ("7", 391), ("8", 568), ("9", 689), ("10", 634), ("21", 14)],
        "ann-thyroid-1v3" => &[("1", 73), ("2", 177), ("3", 3178)],
        "cardiotocography" => &[("1", 1655), ("2", 295), ("3", 176)],
        "mammography" => &[("-1", 10923), ("1", 260)],
        "shuttle" => &[("1", 11478), ("2", 13), ("3", 39), ("4", 2155), ("5", 809), ("6", 4), ("7", 2)],
        "yeast" => &[
            ("CYT", 463), ("NUC", 429), ("MIT", 244), ("ME3", 163), ("ME2", 51), ("ME1", 44),
            ("EXC", 35), ("VAC", 30), ("POX", 20), ("ERL", 5),
        ],
        _ => &[],
    }
}

fn labels(preset: &str, rng: &mut ChaCha8Rng) -> Vec<&'static str> {
    let mut out: Vec<&str> = class_histogram(preset)
        .iter()
        .flat_map(|&(class, n)| std::iter::repeat_n(class, n))
        .collect();
    out.shuffle(rng);
    out
}

fn numbers(rng: &mut ChaCha8Rng, n: usize, sep: &str) -> String {
    (0..n).map(|_| format!("{:.4}", rng.gen_range(0.0..1.0))).collect::<Vec<_>>().join(sep)
}

/// Raw text for a preset, or `None` when there is no fixture for it.
pub fn raw_fixture(preset: &str, seed: u64) -> Option<String> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let classes = labels(preset, &mut rng);
    let mut out = String::new();
    match preset {
        "abalone" => {
            for class in classes {
                let sex = ["M", "F", "I"][rng.gen_range(0..3)];
                writeln!(out, "{sex},{},{class}", numbers(&mut rng, 7, ",")).unwrap();
            }
        }
        "ann-thyroid-1v3" => {
            for class in classes {
                writeln!(out, "{} {class}", numbers(&mut rng, 21, " ")).unwrap();
            }
        }
        "cardiotocography" => {
            let mut header: Vec<String> = (1..=21).map(|i| format!("v{i}")).collect();
            header.extend(["CLASS".into(), "NSP".into()]);
            writeln!(out, "{}", header.join(",")).unwrap();
            for class in classes {
                writeln!(out, "{},{},{class}", numbers(&mut rng, 21, ","), rng.gen_range(1..=10)).unwrap();
            }
        }
        "mammography" => {
            writeln!(out, "a1,a2,a3,a4,a5,a6,class").unwrap();
            for class in classes {
                writeln!(out, "{},'{class}'", numbers(&mut rng, 6, ",")).unwrap();
            }
        }
        "shuttle" => {
            for class in classes {
                writeln!(out, "{} {class}", numbers(&mut rng, 9, " ")).unwrap();
            }
        }
        "yeast" => {
            for (i, class) in classes.into_iter().enumerate() {
                writeln!(out, "SEQ{i:05}_YEAST  {}  {class}", numbers(&mut rng, 8, "  ")).unwrap();
            }
        }
        _ => return None,
    }
    Some(out)
}
