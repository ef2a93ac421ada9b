//! Synthetic OLID-style tweets whose labels are fixed by trigger words.
//!
//! A tweet is offensive exactly when it contains an insult word. Offensive
//! tweets are targeted when they also contain a target word, and the kind of
//! target word decides the task-C class.

use std::io::Write;

use rand::seq::IndexedRandom;
use rand::Rng as _;

use crate::corpus::{LabelA, LabelB, LabelC, TweetRecord};
use crate::error::{Error, Result};
use crate::rng;

pub const INSULTS: [&str; 5] = ["idiot", "garbage", "pathetic", "disgusting", "moron"];
pub const INDIVIDUAL: [&str; 3] = ["you", "yourself", "ur"];
pub const GROUP: [&str; 3] = ["gang", "crew", "clubbers"];
pub const OTHER: [&str; 3] = ["company", "network", "show"];

const ONSETS: [&str; 12] = ["b", "d", "f", "g", "k", "l", "m", "n", "p", "r", "s", "t"];
const NUCLEI: [&str; 5] = ["a", "e", "i", "o", "u"];

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SyntheticConfig {
    pub n: usize,
    pub offensive_fraction: f64,
    /// Probability that an offensive tweet has a target.
    pub targeted_fraction: f64,
    pub min_words: usize,
    pub max_words: usize,
    pub filler_vocab: usize,
    pub seed: u64,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        SyntheticConfig {
            n: 2000,
            offensive_fraction: 0.5,
            targeted_fraction: 0.7,
            min_words: 5,
            max_words: 14,
            filler_vocab: 300,
            seed: 0,
        }
    }
}

/// Pronounceable filler words, none of which collide with trigger words.
pub fn filler_words(n: usize) -> Vec<String> {
    let syllables: Vec<String> = ONSETS.iter().flat_map(|o| NUCLEI.iter().map(move |v| format!("{o}{v}"))).collect();
    let mut out = Vec::with_capacity(n);
    'outer: for a in &syllables {
        for b in &syllables {
            for c in ["", "n", "r", "s"] {
                if out.len() == n {
                    break 'outer;
                }
                out.push(format!("{a}{b}{c}"));
            }
        }
    }
    out
}

pub fn generate(cfg: &SyntheticConfig) -> Result<Vec<TweetRecord>> {
    if cfg.min_words == 0 || cfg.min_words > cfg.max_words || cfg.filler_vocab == 0 {
        return Err(Error::InvalidArgument("invalid synthetic tweet length or vocabulary".into()));
    }
    let fillers = filler_words(cfg.filler_vocab);
    let mut rng = rng::seeded(cfg.seed);
    let mut out = Vec::with_capacity(cfg.n);
    for i in 0..cfg.n {
        let len = rng.random_range(cfg.min_words..=cfg.max_words);
        let mut words: Vec<String> = (0..len).map(|_| fillers.choose(&mut rng).expect("fillers").clone()).collect();
        let offensive = rng.random::<f64>() < cfg.offensive_fraction;
        let mut labels = (LabelA::Not, None, None);
        if offensive {
            let at = rng.random_range(0..=words.len());
            words.insert(at, INSULTS.choose(&mut rng).expect("insults").to_string());
            labels.0 = LabelA::Off;
            labels.1 = Some(LabelB::Unt);
            if rng.random::<f64>() < cfg.targeted_fraction {
                let (class, pool) = match rng.random_range(0..3) {
                    0 => (LabelC::Ind, &INDIVIDUAL),
                    1 => (LabelC::Grp, &GROUP),
                    _ => (LabelC::Oth, &OTHER),
                };
                let at = rng.random_range(0..=words.len());
                words.insert(at, pool.choose(&mut rng).expect("targets").to_string());
                labels.1 = Some(LabelB::Tin);
                labels.2 = Some(class);
            }
        }
        if rng.random::<f64>() < 0.3 {
            words.insert(0, "@USER".into());
        }
        if rng.random::<f64>() < 0.2 {
            words.push(format!("#{}", fillers.choose(&mut rng).expect("fillers")));
        }
        let mut text = words.join(" ");
        if rng.random::<f64>() < 0.5 {
            text.push('!');
        }
        let mut rec = TweetRecord::new(format!("{}", 10_000 + i), text);
        rec.label_a = Some(labels.0);
        rec.label_b = labels.1;
        rec.label_c = labels.2;
        out.push(rec);
    }
    Ok(out)
}

/// Write records as OLID TSV (`id tweet subtask_a subtask_b subtask_c`).
pub fn write_olid<W: Write>(records: &[TweetRecord], mut w: W) -> Result<()> {
    writeln!(w, "id\ttweet\tsubtask_a\tsubtask_b\tsubtask_c")?;
    for r in records {
        writeln!(
            w,
            "{}\t{}\t{}\t{}\t{}",
            r.id,
            r.raw_text,
            r.label_a.map_or("NULL", LabelA::as_str),
            r.label_b.map_or("NULL", LabelB::as_str),
            r.label_c.map_or("NULL", LabelC::as_str)
        )?;
    }
    Ok(())
}
