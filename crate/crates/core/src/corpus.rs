//! OLID ingestion, tweet cleaning, vocabulary and sequence encoding.

use std::collections::HashMap;
use std::fmt;
use std::io::{BufRead, Write};
use std::str::FromStr;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hash;
use crate::rng;

/// Default encoded sequence length.
pub const DEFAULT_SEQ_LEN: usize = 63;

pub const PAD: &str = "<pad>";
pub const UNK: &str = "<unk>";
pub const PAD_INDEX: usize = 0;
pub const UNK_INDEX: usize = 1;

const USER_TOKEN: &str = "@USER";
const PUNCTUATION: [char; 10] = ['.', ',', '!', '?', ';', ':', '(', ')', '"', '\''];

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum LabelA {
    Off,
    Not,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum LabelB {
    Tin,
    Unt,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum LabelC {
    Ind,
    Grp,
    Oth,
}

impl FromStr for LabelA {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "OFF" => Ok(LabelA::Off),
            "NOT" => Ok(LabelA::Not),
            _ => Err(Error::UnknownLabel(s.to_string())),
        }
    }
}

impl FromStr for LabelB {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "TIN" => Ok(LabelB::Tin),
            "UNT" => Ok(LabelB::Unt),
            _ => Err(Error::UnknownLabel(s.to_string())),
        }
    }
}

impl FromStr for LabelC {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "IND" => Ok(LabelC::Ind),
            "GRP" => Ok(LabelC::Grp),
            "OTH" => Ok(LabelC::Oth),
            _ => Err(Error::UnknownLabel(s.to_string())),
        }
    }
}

impl LabelA {
    pub fn as_str(self) -> &'static str {
        match self {
            LabelA::Off => "OFF",
            LabelA::Not => "NOT",
        }
    }
}

impl LabelB {
    pub fn as_str(self) -> &'static str {
        match self {
            LabelB::Tin => "TIN",
            LabelB::Unt => "UNT",
        }
    }
}

impl LabelC {
    pub fn as_str(self) -> &'static str {
        match self {
            LabelC::Ind => "IND",
            LabelC::Grp => "GRP",
            LabelC::Oth => "OTH",
        }
    }
}

/// One of the three OLID subtasks.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Task {
    A,
    B,
    C,
}

impl Task {
    /// Class names in class-index order. For the binary tasks index 1 is the
    /// positive class of the sigmoid output.
    pub fn class_names(self) -> &'static [&'static str] {
        match self {
            Task::A => &["NOT", "OFF"],
            Task::B => &["UNT", "TIN"],
            Task::C => &["IND", "GRP", "OTH"],
        }
    }

    pub fn num_classes(self) -> usize {
        self.class_names().len()
    }

    /// Output units of the network head: one sigmoid unit for binary tasks.
    pub fn output_units(self) -> usize {
        match self {
            Task::A | Task::B => 1,
            Task::C => 3,
        }
    }

    pub fn class_index(self, name: &str) -> Option<usize> {
        self.class_names().iter().position(|c| *c == name)
    }
}

impl FromStr for Task {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "a" => Ok(Task::A),
            "b" => Ok(Task::B),
            "c" => Ok(Task::C),
            _ => Err(Error::InvalidArgument(format!("unknown task `{s}`"))),
        }
    }
}

impl fmt::Display for Task {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Task::A => "A",
            Task::B => "B",
            Task::C => "C",
        };
        f.write_str(s)
    }
}

/// A raw tweet together with its cleaned form and OLID labels.
#[derive(Clone, Debug, PartialEq)]
pub struct TweetRecord {
    pub id: String,
    pub raw_text: String,
    pub clean_text: String,
    pub user_count: usize,
    pub label_a: Option<LabelA>,
    pub label_b: Option<LabelB>,
    pub label_c: Option<LabelC>,
}

impl TweetRecord {
    /// Build a record from raw text, running [`clean`].
    pub fn new(id: impl Into<String>, raw_text: impl Into<String>) -> Self {
        let raw_text = raw_text.into();
        let (clean_text, user_count) = clean(&raw_text);
        TweetRecord {
            id: id.into(),
            raw_text,
            clean_text,
            user_count,
            label_a: None,
            label_b: None,
            label_c: None,
        }
    }

    /// Class index for `task`, if the record carries that label.
    pub fn class_for(&self, task: Task) -> Option<usize> {
        let name = match task {
            Task::A => self.label_a.map(LabelA::as_str),
            Task::B => self.label_b.map(LabelB::as_str),
            Task::C => self.label_c.map(LabelC::as_str),
        }?;
        task.class_index(name)
    }
}

/// Clean a tweet. Returns the cleaned text and the number of `@USER` mentions
/// in the raw text.
///
/// Steps, in order: count `@USER`; collapse runs of consecutive `@USER` tokens
/// into one; lowercase; drop `#` and `@`; split punctuation into separate
/// tokens; normalise whitespace.
pub fn clean(raw_text: &str) -> (String, usize) {
    let user_count = raw_text.matches(USER_TOKEN).count();

    let mut collapsed: Vec<&str> = Vec::new();
    for tok in raw_text.split_whitespace() {
        if tok == USER_TOKEN && collapsed.last() == Some(&USER_TOKEN) {
            continue;
        }
        collapsed.push(tok);
    }
    let lowered = collapsed.join(" ").to_lowercase();

    let mut spaced = String::with_capacity(lowered.len() + 16);
    for ch in lowered.chars() {
        match ch {
            '#' | '@' => {}
            c if PUNCTUATION.contains(&c) => {
                spaced.push(' ');
                spaced.push(c);
                spaced.push(' ');
            }
            c => spaced.push(c),
        }
    }

    let text = spaced.split_whitespace().collect::<Vec<_>>().join(" ");
    (text, user_count)
}

pub fn tokenize(clean_text: &str) -> Vec<String> {
    clean_text.split_whitespace().map(str::to_string).collect()
}

fn parse_opt<T: FromStr<Err = Error>>(field: &str) -> Result<Option<T>> {
    if field == "NULL" || field.is_empty() {
        Ok(None)
    } else {
        field.parse().map(Some)
    }
}

/// Parse an OLID-format TSV stream.
///
/// The header must start with `id` and `tweet`; up to three label columns
/// (`subtask_a`, `subtask_b`, `subtask_c`) may follow. Every data row must have
/// as many columns as the header. `NULL` marks an absent label.
pub fn parse_olid<R: BufRead>(reader: R) -> Result<Vec<TweetRecord>> {
    let mut lines = reader.lines();
    let header = match lines.next() {
        Some(h) => h?,
        None => return Err(Error::Parse { line: 1, msg: "missing header row".into() }),
    };
    let columns: Vec<&str> = header.trim_end_matches('\r').split('\t').collect();
    let expected = ["id", "tweet", "subtask_a", "subtask_b", "subtask_c"];
    if columns.len() < 2 || columns.len() > 5 || columns[..] != expected[..columns.len()] {
        return Err(Error::Parse {
            line: 1,
            msg: format!("unexpected header `{}`", header.trim_end()),
        });
    }
    let ncols = columns.len();

    let mut records = Vec::new();
    for (i, line) in lines.enumerate() {
        let line_no = i + 2;
        let line = line?;
        let line = line.trim_end_matches('\r');
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() != ncols {
            return Err(Error::Parse {
                line: line_no,
                msg: format!("expected {ncols} columns, found {}", fields.len()),
            });
        }
        let mut rec = TweetRecord::new(fields[0], fields[1]);
        if ncols > 2 {
            rec.label_a = parse_opt(fields[2])?;
        }
        if ncols > 3 {
            rec.label_b = parse_opt(fields[3])?;
        }
        if ncols > 4 {
            rec.label_c = parse_opt(fields[4])?;
        }
        check_hierarchy(&rec).map_err(|msg| Error::Hierarchy { line: line_no, msg })?;
        records.push(rec);
    }
    Ok(records)
}

fn check_hierarchy(rec: &TweetRecord) -> std::result::Result<(), String> {
    if rec.label_b.is_some() && rec.label_a != Some(LabelA::Off) {
        return Err(format!("tweet {} has a subtask_b label but is not OFF", rec.id));
    }
    if rec.label_c.is_some() && rec.label_b != Some(LabelB::Tin) {
        return Err(format!("tweet {} has a subtask_c label but is not TIN", rec.id));
    }
    Ok(())
}

/// Write the cleaned corpus as TSV: `id, clean_text, user_count, label_a, label_b, label_c`.
pub fn write_clean_tsv<W: Write>(records: &[TweetRecord], mut w: W) -> Result<()> {
    writeln!(w, "id\tclean_text\tuser_count\tlabel_a\tlabel_b\tlabel_c")?;
    for r in records {
        writeln!(
            w,
            "{}\t{}\t{}\t{}\t{}\t{}",
            r.id,
            r.clean_text,
            r.user_count,
            r.label_a.map_or("NULL", LabelA::as_str),
            r.label_b.map_or("NULL", LabelB::as_str),
            r.label_c.map_or("NULL", LabelC::as_str),
        )?;
    }
    Ok(())
}

/// Records labelled for `task`.
pub fn filter_task(records: &[TweetRecord], task: Task) -> Vec<TweetRecord> {
    records.iter().filter(|r| r.class_for(task).is_some()).cloned().collect()
}

/// Per-class user-count statistics.
#[derive(Clone, Debug, PartialEq)]
pub struct UserCountStats {
    pub class: String,
    pub count: usize,
    pub mean: f64,
    /// Population standard deviation.
    pub std: f64,
}

/// Mean and population standard deviation of `user_count` per class of `task`.
/// Every class must have at least one record.
pub fn user_count_stats(records: &[TweetRecord], task: Task) -> Result<Vec<UserCountStats>> {
    let mut buckets: Vec<Vec<f64>> = vec![Vec::new(); task.num_classes()];
    for r in records {
        if let Some(c) = r.class_for(task) {
            buckets[c].push(r.user_count as f64);
        }
    }
    task.class_names()
        .iter()
        .zip(buckets)
        .map(|(name, xs)| {
            if xs.is_empty() {
                return Err(Error::EmptyClass((*name).to_string()));
            }
            let n = xs.len() as f64;
            let mean = xs.iter().sum::<f64>() / n;
            let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
            Ok(UserCountStats { class: (*name).to_string(), count: xs.len(), mean, std: var.sqrt() })
        })
        .collect()
}

/// Token/index mapping. Index 0 is padding, index 1 the unknown token.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Vocabulary {
    token_to_index: HashMap<String, usize>,
    index_to_token: Vec<String>,
}

impl Vocabulary {
    /// Build from training token lists: PAD, UNK, then distinct tokens in
    /// first-occurrence order.
    pub fn build<S: AsRef<str>>(token_lists: &[Vec<S>]) -> Self {
        let mut vocab = Self::empty();
        for tokens in token_lists {
            for t in tokens {
                vocab.insert(t.as_ref());
            }
        }
        vocab
    }

    fn empty() -> Self {
        let mut v = Vocabulary { token_to_index: HashMap::new(), index_to_token: Vec::new() };
        v.insert(PAD);
        v.insert(UNK);
        v
    }

    fn insert(&mut self, token: &str) -> usize {
        if let Some(&i) = self.token_to_index.get(token) {
            return i;
        }
        let i = self.index_to_token.len();
        self.token_to_index.insert(token.to_string(), i);
        self.index_to_token.push(token.to_string());
        i
    }

    pub fn len(&self) -> usize {
        self.index_to_token.len()
    }

    pub fn is_empty(&self) -> bool {
        self.index_to_token.is_empty()
    }

    pub fn index(&self, token: &str) -> Option<usize> {
        self.token_to_index.get(token).copied()
    }

    pub fn token(&self, index: usize) -> Option<&str> {
        self.index_to_token.get(index).map(String::as_str)
    }

    pub fn tokens(&self) -> &[String] {
        &self.index_to_token
    }

    /// 64-bit FNV-1a over the tokens in index order, as 16 hex digits.
    pub fn content_hash(&self) -> String {
        let mut h = hash::FNV64_INIT;
        for t in &self.index_to_token {
            h = hash::fnv1a64_extend(h, t.as_bytes());
            h = hash::fnv1a64_extend(h, b"\n");
        }
        format!("{h:016x}")
    }

    /// One token per line; the line number (from 0) is the index.
    pub fn write<W: Write>(&self, mut w: W) -> Result<()> {
        for t in &self.index_to_token {
            writeln!(w, "{t}")?;
        }
        Ok(())
    }

    pub fn read<R: BufRead>(reader: R) -> Result<Self> {
        let mut v = Vocabulary { token_to_index: HashMap::new(), index_to_token: Vec::new() };
        for (i, line) in reader.lines().enumerate() {
            let line = line?;
            if v.token_to_index.contains_key(&line) {
                return Err(Error::Parse { line: i + 1, msg: format!("duplicate token `{line}`") });
            }
            v.insert(&line);
        }
        if v.token(PAD_INDEX) != Some(PAD) || v.token(UNK_INDEX) != Some(UNK) {
            return Err(Error::Parse { line: 1, msg: "vocabulary must start with <pad>, <unk>".into() });
        }
        Ok(v)
    }
}

/// Map tokens to indices: unknown tokens become UNK, long sequences keep their
/// last `len` tokens, short ones are padded at the front.
pub fn encode<S: AsRef<str>>(tokens: &[S], vocab: &Vocabulary, len: usize) -> Vec<usize> {
    let start = tokens.len().saturating_sub(len);
    let kept = &tokens[start..];
    let mut out = vec![PAD_INDEX; len - kept.len()];
    out.extend(kept.iter().map(|t| vocab.index(t.as_ref()).unwrap_or(UNK_INDEX)));
    out
}

/// A fixed-length index sequence ready for the network.
#[derive(Clone, Debug, PartialEq)]
pub struct EncodedExample {
    pub indices: Vec<usize>,
    pub user_count: usize,
    pub label: usize,
}

/// Encode every record labelled for `task`.
pub fn encode_records(
    records: &[TweetRecord],
    task: Task,
    vocab: &Vocabulary,
    len: usize,
) -> Vec<EncodedExample> {
    records
        .iter()
        .filter_map(|r| {
            let label = r.class_for(task)?;
            Some(EncodedExample {
                indices: encode(&tokenize(&r.clean_text), vocab, len),
                user_count: r.user_count,
                label,
            })
        })
        .collect()
}

/// Encode records regardless of labels (label set to 0), e.g. for prediction.
pub fn encode_unlabeled(records: &[TweetRecord], vocab: &Vocabulary, len: usize) -> Vec<EncodedExample> {
    records
        .iter()
        .map(|r| EncodedExample {
            indices: encode(&tokenize(&r.clean_text), vocab, len),
            user_count: r.user_count,
            label: 0,
        })
        .collect()
}

/// Seeded stratified split of `labels` into (train, validation) index lists.
/// Each class contributes `round(n_c * val_fraction)` examples to validation,
/// at least one when the class has two or more examples.
pub fn stratified_split(labels: &[usize], val_fraction: f64, seed: u64) -> Result<(Vec<usize>, Vec<usize>)> {
    if !(val_fraction > 0.0 && val_fraction < 1.0) {
        return Err(Error::InvalidArgument(format!("val_fraction {val_fraction} not in (0, 1)")));
    }
    let k = labels.iter().copied().max().map_or(0, |m| m + 1);
    let mut by_class: Vec<Vec<usize>> = vec![Vec::new(); k];
    for (i, &l) in labels.iter().enumerate() {
        by_class[l].push(i);
    }
    let mut rng = rng::seeded(seed);
    let mut train = Vec::new();
    let mut val = Vec::new();
    for mut members in by_class {
        members.shuffle(&mut rng);
        let n = members.len();
        let mut n_val = (n as f64 * val_fraction).round() as usize;
        if n >= 2 {
            n_val = n_val.clamp(1, n - 1);
        } else {
            n_val = 0;
        }
        val.extend_from_slice(&members[..n_val]);
        train.extend_from_slice(&members[n_val..]);
    }
    train.sort_unstable();
    val.sort_unstable();
    Ok((train, val))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn clean_worked_example() {
        let raw = "@USER @USER @USER It should scare every American!  She is playing Hockey with a warped puck!";
        let (text, users) = clean(raw);
        assert_eq!(text, "user it should scare every american ! she is playing hockey with a warped puck !");
        assert_eq!(users, 3);
    }

    #[test]
    fn clean_edge_cases() {
        assert_eq!(clean(""), (String::new(), 0));
        assert_eq!(clean("#MAGA @USER @USER ok!"), ("maga user ok !".to_string(), 2));
        assert_eq!(clean("Check URL now"), ("check url now".to_string(), 0));
        assert_eq!(clean("@USER hi @USER"), ("user hi user".to_string(), 2));
        assert_eq!(clean("he said \"no\"(really);ok:"), ("he said \" no \" ( really ) ; ok :".to_string(), 0));
    }

    #[test]
    fn tokenize_cases() {
        assert_eq!(tokenize("user ok !"), vec!["user", "ok", "!"]);
        assert!(tokenize("").is_empty());
        assert_eq!(tokenize("a  b"), vec!["a", "b"]);
    }

    #[test]
    fn parse_rows() {
        let data = "id\ttweet\tsubtask_a\tsubtask_b\tsubtask_c\n\
                    86426\t@USER She should ask a few native Americans...\tOFF\tUNT\tNULL\n";
        let recs = parse_olid(data.as_bytes()).unwrap();
        assert_eq!(recs.len(), 1);
        assert_eq!(recs[0].id, "86426");
        assert_eq!(recs[0].label_a, Some(LabelA::Off));
        assert_eq!(recs[0].label_b, Some(LabelB::Unt));
        assert_eq!(recs[0].label_c, None);
        assert_eq!(recs[0].user_count, 1);
    }

    #[test]
    fn parse_empty_and_errors() {
        let header = "id\ttweet\tsubtask_a\tsubtask_b\tsubtask_c\n";
        assert!(parse_olid(header.as_bytes()).unwrap().is_empty());

        let bad = format!("{header}1\tok\tNOT\tNULL\tNULL\n2\ttoo short\tNOT\tNULL\n");
        match parse_olid(bad.as_bytes()) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 3),
            other => panic!("unexpected {other:?}"),
        }

        let unknown = format!("{header}1\tok\tMEAN\tNULL\tNULL\n");
        match parse_olid(unknown.as_bytes()) {
            Err(Error::UnknownLabel(v)) => assert_eq!(v, "MEAN"),
            other => panic!("unexpected {other:?}"),
        }

        let broken = format!("{header}1\tok\tNOT\tTIN\tNULL\n");
        assert!(matches!(parse_olid(broken.as_bytes()), Err(Error::Hierarchy { line: 2, .. })));
    }

    #[test]
    fn parse_unlabelled_test_file() {
        let data = "id\ttweet\n15923\t#WhoIsQ @USER thanks\n";
        let recs = parse_olid(data.as_bytes()).unwrap();
        assert_eq!(recs[0].clean_text, "whoisq user thanks");
        assert_eq!(recs[0].label_a, None);
    }

    #[test]
    fn vocab_building() {
        let v = Vocabulary::build(&[vec!["a", "b"], vec!["a"]]);
        assert_eq!(v.len(), 4);
        assert_eq!(v.index(PAD), Some(0));
        assert_eq!(v.index(UNK), Some(1));
        assert_eq!(v.index("a"), Some(2));
        assert_eq!(v.index("b"), Some(3));
        let empty: Vec<Vec<&str>> = vec![];
        assert_eq!(Vocabulary::build(&empty).len(), 2);
    }

    #[test]
    fn vocab_file_round_trip() {
        let v = Vocabulary::build(&[vec!["x", "y", "z"]]);
        let mut buf = Vec::new();
        v.write(&mut buf).unwrap();
        let back = Vocabulary::read(buf.as_slice()).unwrap();
        assert_eq!(v, back);
        assert_eq!(v.content_hash(), back.content_hash());
        assert_ne!(v.content_hash(), Vocabulary::build(&[vec!["x", "y"]]).content_hash());
    }

    #[test]
    fn encode_rules() {
        let v = Vocabulary::build(&[vec!["a", "b"]]);
        assert_eq!(encode(&["a", "b"], &v, 5), vec![0, 0, 0, 2, 3]);
        assert_eq!(encode(&["zzz", "a"], &v, 2), vec![1, 2]);

        let long: Vec<String> = (0..70).map(|i| format!("t{i}")).collect();
        let v2 = Vocabulary::build(std::slice::from_ref(&long));
        let enc = encode(&long, &v2, 63);
        assert_eq!(enc.len(), 63);
        assert_eq!(enc[0], v2.index("t7").unwrap());
        assert_eq!(enc[62], v2.index("t69").unwrap());
    }

    fn rec(a: Option<&str>, b: Option<&str>, c: Option<&str>, users: usize) -> TweetRecord {
        let mut r = TweetRecord::new("x", "@USER ".repeat(users));
        r.label_a = a.map(|s| s.parse().unwrap());
        r.label_b = b.map(|s| s.parse().unwrap());
        r.label_c = c.map(|s| s.parse().unwrap());
        r
    }

    #[test]
    fn filter_by_task() {
        let only_a = rec(Some("OFF"), None, None, 0);
        let all = rec(Some("OFF"), Some("TIN"), Some("IND"), 0);
        assert!(filter_task(std::slice::from_ref(&only_a), Task::B).is_empty());
        assert_eq!(filter_task(std::slice::from_ref(&all), Task::C).len(), 1);
        assert_eq!(filter_task(&[only_a, all], Task::A).len(), 2);
    }

    #[test]
    fn user_stats() {
        let recs = vec![
            rec(Some("OFF"), None, None, 1),
            rec(Some("OFF"), None, None, 3),
            rec(Some("NOT"), None, None, 5),
        ];
        let stats = user_count_stats(&recs, Task::A).unwrap();
        let not = stats.iter().find(|s| s.class == "NOT").unwrap();
        let off = stats.iter().find(|s| s.class == "OFF").unwrap();
        assert_eq!((off.mean, off.std), (2.0, 1.0));
        assert_eq!((not.mean, not.std), (5.0, 0.0));

        let err = user_count_stats(&recs[..2], Task::A).unwrap_err();
        assert!(matches!(err, Error::EmptyClass(c) if c == "NOT"));
    }

    #[test]
    fn split_is_stratified_and_disjoint() {
        let labels: Vec<usize> = (0..100).map(|i| usize::from(i % 5 == 0)).collect();
        let (tr, va) = stratified_split(&labels, 0.2, 7).unwrap();
        assert_eq!(tr.len() + va.len(), 100);
        assert_eq!(va.iter().filter(|&&i| labels[i] == 1).count(), 4);
        assert_eq!(va.iter().filter(|&&i| labels[i] == 0).count(), 16);
        assert!(tr.iter().all(|i| !va.contains(i)));
        assert_eq!(stratified_split(&labels, 0.2, 7).unwrap(), (tr, va));
        assert!(stratified_split(&labels, 1.0, 7).is_err());
    }

    proptest! {
        #[test]
        fn clean_is_idempotent(s in "[ -~\\t\\n]{0,80}") {
            let (once, _) = clean(&s);
            let (twice, users) = clean(&once);
            prop_assert_eq!(&twice, &once);
            prop_assert_eq!(users, 0);
            prop_assert!(!once.contains('#') && !once.contains('@'));
            prop_assert!(!once.chars().any(char::is_uppercase));
        }

        #[test]
        fn user_count_matches_mentions(n in 0usize..6, words in proptest::collection::vec("[a-z]{1,5}", 0..5)) {
            let mut raw = "@USER ".repeat(n);
            raw.push_str(&words.join(" "));
            prop_assert_eq!(clean(&raw).1, n);
        }

        #[test]
        fn encoded_length_and_range(s in "[ -~]{0,200}", len in 1usize..70) {
            let vocab = Vocabulary::build(&[tokenize(&clean("some words here !").0)]);
            let enc = encode(&tokenize(&clean(&s).0), &vocab, len);
            prop_assert_eq!(enc.len(), len);
            prop_assert!(enc.iter().all(|&i| i < vocab.len()));
        }
    }
}
