//! Headline ingestion and alignment to trading days.
//!
//! Timestamps are converted to New York wall-clock time and bucketed
//! relative to the 09:30-16:00 session. Pre-market and in-session news stays
//! on its own trading day; after-market, weekend and holiday news moves to
//! the next trading day.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::io::{BufRead, BufReader, Read};

use chrono::{DateTime, Datelike, Duration, FixedOffset, NaiveDate, NaiveDateTime, NaiveTime, Weekday};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum CorpusError {
    #[error("line {line}: {reason}")]
    Parse { line: usize, reason: String },
    #[error("surface forms for {0:?} are empty")]
    EmptySurfaceForms(String),
    #[error("invalid encoding size: l_n = {l_n}, l_s = {l_s}")]
    InvalidShape { l_n: usize, l_s: usize },
    #[error("io error: {0}")]
    Io(String),
}

pub type Result<T> = std::result::Result<T, CorpusError>;

/// A raw headline tagged with the stock it concerns.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct HeadlineRecord {
    pub stock_id: String,
    pub timestamp: DateTime<FixedOffset>,
    pub text: String,
    pub id: String,
}

impl HeadlineRecord {
    pub fn new(stock_id: impl Into<String>, timestamp: &str, text: impl Into<String>) -> Result<Self> {
        let text = text.into();
        if text.trim().is_empty() {
            return Err(CorpusError::Parse {
                line: 0,
                reason: "empty headline text".into(),
            });
        }
        let timestamp = DateTime::parse_from_rfc3339(timestamp).map_err(|e| CorpusError::Parse {
            line: 0,
            reason: format!("bad timestamp {timestamp:?}: {e}"),
        })?;
        let stock_id = stock_id.into();
        let id = content_id(&stock_id, &timestamp, &text);
        Ok(HeadlineRecord {
            stock_id,
            timestamp,
            text,
            id,
        })
    }

    pub fn with_id(mut self, id: impl Into<String>) -> Self {
        self.id = id.into();
        self
    }

    pub fn new_york_time(&self) -> NaiveDateTime {
        to_new_york(&self.timestamp)
    }
}

/// 16 hex chars of SHA-256 over stock, instant and text.
pub fn content_id(stock_id: &str, timestamp: &DateTime<FixedOffset>, text: &str) -> String {
    let mut h = Sha256::new();
    h.update(stock_id.as_bytes());
    h.update(b"\t");
    h.update(timestamp.to_rfc3339().as_bytes());
    h.update(b"\t");
    h.update(text.as_bytes());
    hex::encode(&h.finalize()[..8])
}

#[derive(Deserialize)]
struct RawHeadline {
    stock: String,
    utc: String,
    text: String,
    id: Option<String>,
}

/// A record the parser refused, with its 1-based line number.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Rejection {
    pub line: usize,
    pub reason: String,
}

/// Parses headline JSONL. Bad lines are rejected individually; blank lines are skipped.
pub fn parse_headlines_jsonl<R: Read>(reader: R) -> Result<(Vec<HeadlineRecord>, Vec<Rejection>)> {
    let mut records = Vec::new();
    let mut rejected = Vec::new();
    for (i, line) in BufReader::new(reader).lines().enumerate() {
        let line_no = i + 1;
        let line = line.map_err(|e| CorpusError::Io(e.to_string()))?;
        if line.trim().is_empty() {
            continue;
        }
        let raw: RawHeadline = match serde_json::from_str(&line) {
            Ok(r) => r,
            Err(e) => {
                rejected.push(Rejection {
                    line: line_no,
                    reason: e.to_string(),
                });
                continue;
            }
        };
        match HeadlineRecord::new(raw.stock, &raw.utc, raw.text) {
            Ok(r) => records.push(match raw.id {
                Some(id) => r.with_id(id),
                None => r,
            }),
            Err(CorpusError::Parse { reason, .. }) => rejected.push(Rejection { line: line_no, reason }),
            Err(e) => return Err(e),
        }
    }
    Ok((records, rejected))
}

pub fn headline_to_json(rec: &HeadlineRecord) -> String {
    serde_json::json!({
        "stock": rec.stock_id,
        "utc": rec.timestamp.to_rfc3339(),
        "text": rec.text,
        "id": rec.id,
    })
    .to_string()
}

fn nth_weekday(year: i32, month: u32, weekday: Weekday, n: u8) -> NaiveDate {
    NaiveDate::from_weekday_of_month_opt(year, month, weekday, n).expect("valid nth weekday")
}

fn last_weekday(year: i32, month: u32, weekday: Weekday) -> NaiveDate {
    let mut d = NaiveDate::from_ymd_opt(year, month + 1, 1).expect("valid month") - Duration::days(1);
    while d.weekday() != weekday {
        d -= Duration::days(1);
    }
    d
}

/// US Eastern daylight-saving window for `year` as UTC instants `[start, end)`.
///
/// Rules: 2007 onward, second Sunday of March to first Sunday of November;
/// 1987-2006, first Sunday of April to last Sunday of October; earlier years
/// use the 1976-1986 rule (last Sunday of April to last Sunday of October).
/// Transitions happen at 02:00 local time.
fn dst_window_utc(year: i32) -> (NaiveDateTime, NaiveDateTime) {
    let (start, end) = if year >= 2007 {
        (
            nth_weekday(year, 3, Weekday::Sun, 2),
            nth_weekday(year, 11, Weekday::Sun, 1),
        )
    } else if year >= 1987 {
        (
            nth_weekday(year, 4, Weekday::Sun, 1),
            last_weekday(year, 10, Weekday::Sun),
        )
    } else {
        (
            last_weekday(year, 4, Weekday::Sun),
            last_weekday(year, 10, Weekday::Sun),
        )
    };
    // 02:00 EST = 07:00 UTC; 02:00 EDT = 06:00 UTC.
    let seven = NaiveTime::from_hms_opt(7, 0, 0).unwrap();
    let six = NaiveTime::from_hms_opt(6, 0, 0).unwrap();
    (start.and_time(seven), end.and_time(six))
}

/// Wall-clock time in New York for an instant with any UTC offset.
pub fn to_new_york(ts: &DateTime<FixedOffset>) -> NaiveDateTime {
    let utc = ts.naive_utc();
    let (start, end) = dst_window_utc(utc.year());
    let offset_hours = if utc >= start && utc < end { 4 } else { 5 };
    utc - Duration::hours(offset_hours)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TimeCategory {
    BeforeMarket,
    DuringMarket,
    AfterMarket,
    Holiday,
    Weekend,
}

impl TimeCategory {
    pub const ALL: [TimeCategory; 5] = [
        TimeCategory::BeforeMarket,
        TimeCategory::DuringMarket,
        TimeCategory::AfterMarket,
        TimeCategory::Holiday,
        TimeCategory::Weekend,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            TimeCategory::BeforeMarket => "before_market",
            TimeCategory::DuringMarket => "during_market",
            TimeCategory::AfterMarket => "after_market",
            TimeCategory::Holiday => "holiday",
            TimeCategory::Weekend => "weekend",
        }
    }
}

/// Weekends plus an explicit holiday list.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TradingCalendar {
    holidays: BTreeSet<NaiveDate>,
}

impl TradingCalendar {
    pub fn new(holidays: impl IntoIterator<Item = NaiveDate>) -> Self {
        TradingCalendar {
            holidays: holidays.into_iter().collect(),
        }
    }

    /// One ISO date per line; blank lines and `#` comments are ignored.
    pub fn from_reader<R: Read>(reader: R) -> Result<Self> {
        let mut holidays = BTreeSet::new();
        for (i, line) in BufReader::new(reader).lines().enumerate() {
            let line = line.map_err(|e| CorpusError::Io(e.to_string()))?;
            let t = line.trim();
            if t.is_empty() || t.starts_with('#') {
                continue;
            }
            let d = NaiveDate::parse_from_str(t, "%Y-%m-%d").map_err(|e| CorpusError::Parse {
                line: i + 1,
                reason: format!("bad holiday date {t:?}: {e}"),
            })?;
            holidays.insert(d);
        }
        Ok(TradingCalendar { holidays })
    }

    pub fn holidays(&self) -> impl Iterator<Item = &NaiveDate> {
        self.holidays.iter()
    }

    pub fn is_weekend(&self, d: NaiveDate) -> bool {
        matches!(d.weekday(), Weekday::Sat | Weekday::Sun)
    }

    pub fn is_holiday(&self, d: NaiveDate) -> bool {
        self.holidays.contains(&d)
    }

    pub fn is_trading_day(&self, d: NaiveDate) -> bool {
        !self.is_weekend(d) && !self.is_holiday(d)
    }

    /// First trading day strictly after `d`.
    pub fn next_trading_day(&self, d: NaiveDate) -> NaiveDate {
        let mut n = d + Duration::days(1);
        while !self.is_trading_day(n) {
            n += Duration::days(1);
        }
        n
    }

    /// Trading days in `[from, to]`.
    pub fn trading_days(&self, from: NaiveDate, to: NaiveDate) -> Vec<NaiveDate> {
        from.iter_days()
            .take_while(|d| *d <= to)
            .filter(|d| self.is_trading_day(*d))
            .collect()
    }
}

fn session_open() -> NaiveTime {
    NaiveTime::from_hms_opt(9, 30, 0).unwrap()
}

fn session_close() -> NaiveTime {
    NaiveTime::from_hms_opt(16, 0, 0).unwrap()
}

/// Buckets a New York wall-clock time. Both session boundaries count as in-session.
pub fn categorize(local: NaiveDateTime, calendar: &TradingCalendar) -> TimeCategory {
    let d = local.date();
    if calendar.is_weekend(d) {
        return TimeCategory::Weekend;
    }
    if calendar.is_holiday(d) {
        return TimeCategory::Holiday;
    }
    let t = local.time();
    if t < session_open() {
        TimeCategory::BeforeMarket
    } else if t <= session_close() {
        TimeCategory::DuringMarket
    } else {
        TimeCategory::AfterMarket
    }
}

/// The trading day whose session a headline can influence.
pub fn aligned_date(local: NaiveDateTime, calendar: &TradingCalendar) -> NaiveDate {
    match categorize(local, calendar) {
        TimeCategory::BeforeMarket | TimeCategory::DuringMarket => local.date(),
        TimeCategory::AfterMarket | TimeCategory::Holiday | TimeCategory::Weekend => {
            calendar.next_trading_day(local.date())
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlignedHeadline {
    pub id: String,
    pub local_time: NaiveDateTime,
    pub category: TimeCategory,
    pub tokens: Vec<String>,
}

/// Every headline that can influence one stock on one trading day.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlignedDay {
    pub stock_id: String,
    pub trading_date: NaiveDate,
    /// Chronological.
    pub headlines: Vec<AlignedHeadline>,
    pub has_news: bool,
}

impl AlignedDay {
    pub fn empty(stock_id: &str, trading_date: NaiveDate) -> Self {
        AlignedDay {
            stock_id: stock_id.to_string(),
            trading_date,
            headlines: Vec::new(),
            has_news: false,
        }
    }
}

/// Per-stock, date-ordered aligned days covering every trading day between a
/// stock's first and last aligned headline.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct AlignedCorpus {
    pub stocks: BTreeMap<String, Vec<AlignedDay>>,
}

impl AlignedCorpus {
    pub fn day(&self, stock_id: &str, date: NaiveDate) -> Option<&AlignedDay> {
        let days = self.stocks.get(stock_id)?;
        days.binary_search_by_key(&date, |d| d.trading_date)
            .ok()
            .map(|i| &days[i])
    }

    pub fn all_days(&self) -> impl Iterator<Item = &AlignedDay> {
        self.stocks.values().flatten()
    }

    pub fn headline_count(&self) -> usize {
        self.all_days().map(|d| d.headlines.len()).sum()
    }
}

type Buckets = BTreeMap<String, BTreeMap<NaiveDate, Vec<(DateTime<FixedOffset>, AlignedHeadline)>>>;

/// Groups headlines into trading days per stock.
pub fn align(records: &[HeadlineRecord], calendar: &TradingCalendar) -> AlignedCorpus {
    let mut buckets: Buckets = BTreeMap::new();
    for rec in records {
        let local = rec.new_york_time();
        let category = categorize(local, calendar);
        let date = aligned_date(local, calendar);
        buckets
            .entry(rec.stock_id.clone())
            .or_default()
            .entry(date)
            .or_default()
            .push((
                rec.timestamp,
                AlignedHeadline {
                    id: rec.id.clone(),
                    local_time: local,
                    category,
                    tokens: tokenize(&rec.text),
                },
            ));
    }
    let mut stocks = BTreeMap::new();
    for (stock, by_date) in buckets {
        let (first, last) = match (by_date.keys().next(), by_date.keys().next_back()) {
            (Some(f), Some(l)) => (*f, *l),
            _ => continue,
        };
        let mut by_date = by_date;
        let days = calendar
            .trading_days(first, last)
            .into_iter()
            .map(|date| match by_date.remove(&date) {
                Some(mut hs) => {
                    // Stable sort keeps input order among equal instants.
                    hs.sort_by_key(|(ts, _)| *ts);
                    AlignedDay {
                        stock_id: stock.clone(),
                        trading_date: date,
                        headlines: hs.into_iter().map(|(_, h)| h).collect(),
                        has_news: true,
                    }
                }
                None => AlignedDay::empty(&stock, date),
            })
            .collect();
        stocks.insert(stock, days);
    }
    AlignedCorpus { stocks }
}

/// Count of records per category, every category present.
pub fn category_histogram(records: &[HeadlineRecord], calendar: &TradingCalendar) -> BTreeMap<TimeCategory, usize> {
    let mut hist: BTreeMap<TimeCategory, usize> = TimeCategory::ALL.iter().map(|c| (*c, 0)).collect();
    for rec in records {
        *hist.entry(categorize(rec.new_york_time(), calendar)).or_default() += 1;
    }
    hist
}

/// `category<TAB>count` lines in declaration order.
pub fn histogram_tsv(hist: &BTreeMap<TimeCategory, usize>) -> String {
    let mut out = String::from("category\tcount\n");
    for c in TimeCategory::ALL {
        out.push_str(&format!("{}\t{}\n", c.as_str(), hist.get(&c).copied().unwrap_or(0)));
    }
    out
}

/// Lowercases, splits on whitespace and trims non-alphanumeric characters
/// from both ends of each token. Inner symbols survive (`p&g`, `merck's`).
pub fn tokenize(text: &str) -> Vec<String> {
    text.split_whitespace()
        .map(|raw| raw.trim_matches(|c: char| !c.is_alphanumeric()).to_lowercase())
        .filter(|t| !t.is_empty())
        .collect()
}

/// Stock id to the strings that identify it in a headline.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct SurfaceForms {
    forms: BTreeMap<String, Vec<String>>,
}

impl SurfaceForms {
    pub fn new(forms: BTreeMap<String, Vec<String>>) -> Result<Self> {
        for (k, v) in &forms {
            if v.iter().all(|f| tokenize(f).is_empty()) {
                return Err(CorpusError::EmptySurfaceForms(k.clone()));
            }
        }
        Ok(SurfaceForms { forms })
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let forms: BTreeMap<String, Vec<String>> = serde_json::from_str(text).map_err(|e| CorpusError::Parse {
            line: e.line(),
            reason: e.to_string(),
        })?;
        Self::new(forms)
    }

    pub fn stocks(&self) -> impl Iterator<Item = &String> {
        self.forms.keys()
    }
}

fn contains_run(hay: &[String], needle: &[String]) -> bool {
    !needle.is_empty() && hay.windows(needle.len()).any(|w| w == needle)
}

/// Stocks whose surface forms appear as whole-token runs in `text`, case-insensitively.
pub fn match_stock(text: &str, forms: &SurfaceForms) -> BTreeSet<String> {
    let tokens = tokenize(text);
    forms
        .forms
        .iter()
        .filter(|(_, fs)| fs.iter().any(|f| contains_run(&tokens, &tokenize(f))))
        .map(|(k, _)| k.clone())
        .collect()
}

/// Keeps records whose text mentions their own stock. Records with an empty
/// stock id are fanned out to every stock they mention.
pub fn filter_by_surface_forms(records: Vec<HeadlineRecord>, forms: &SurfaceForms) -> Vec<HeadlineRecord> {
    let mut out = Vec::new();
    for rec in records {
        let matched = match_stock(&rec.text, forms);
        if rec.stock_id.is_empty() {
            for stock in matched {
                out.push(HeadlineRecord {
                    stock_id: stock,
                    ..rec.clone()
                });
            }
        } else if matched.contains(&rec.stock_id) {
            out.push(rec);
        }
    }
    out
}

/// Pretrained word vectors read from whitespace-separated text.
#[derive(Debug, Clone, PartialEq)]
pub struct Embeddings {
    pub dim: usize,
    vectors: HashMap<String, Vec<f64>>,
}

impl Embeddings {
    pub fn new(dim: usize, vectors: HashMap<String, Vec<f64>>) -> Self {
        Embeddings { dim, vectors }
    }

    /// `token v1 ... v_d` per line; `d` comes from the first line. The first
    /// occurrence of a duplicated token wins.
    pub fn from_reader<R: Read>(reader: R) -> Result<Self> {
        let mut dim = None;
        let mut vectors = HashMap::new();
        for (i, line) in BufReader::new(reader).lines().enumerate() {
            let line_no = i + 1;
            let line = line.map_err(|e| CorpusError::Io(e.to_string()))?;
            let mut parts = line.split_whitespace();
            let Some(token) = parts.next() else {
                continue;
            };
            let values = parts
                .map(|p| {
                    p.parse::<f64>().map_err(|e| CorpusError::Parse {
                        line: line_no,
                        reason: format!("bad value {p:?}: {e}"),
                    })
                })
                .collect::<Result<Vec<f64>>>()?;
            let d = *dim.get_or_insert(values.len());
            if d == 0 || values.len() != d {
                return Err(CorpusError::Parse {
                    line: line_no,
                    reason: format!("expected {d} values, found {}", values.len()),
                });
            }
            vectors.entry(token.to_string()).or_insert(values);
        }
        Ok(Embeddings {
            dim: dim.unwrap_or(0),
            vectors,
        })
    }

    pub fn get(&self, token: &str) -> Option<&[f64]> {
        self.vectors.get(token).map(|v| v.as_slice())
    }

    /// The text format read by [`Embeddings::from_reader`], tokens sorted.
    pub fn to_text(&self) -> String {
        let mut tokens: Vec<&String> = self.vectors.keys().collect();
        tokens.sort();
        let mut out = String::new();
        for t in tokens {
            out.push_str(t);
            for v in &self.vectors[t] {
                out.push(' ');
                out.push_str(&v.to_string());
            }
            out.push('\n');
        }
        out
    }

    pub fn len(&self) -> usize {
        self.vectors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vectors.is_empty()
    }
}

pub const PAD_TOKEN: &str = "<pad>";

/// Index 0 is padding with an all-zero embedding row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Vocabulary {
    pub dim: usize,
    tokens: Vec<String>,
    /// Row-major `(tokens.len()) x dim`.
    embeddings: Vec<f64>,
    #[serde(skip)]
    index: HashMap<String, u32>,
}

impl Vocabulary {
    fn from_parts(dim: usize, tokens: Vec<String>, embeddings: Vec<f64>) -> Self {
        let index = tokens
            .iter()
            .enumerate()
            .skip(1)
            .map(|(i, t)| (t.clone(), i as u32))
            .collect();
        Vocabulary {
            dim,
            tokens,
            embeddings,
            index,
        }
    }

    /// Restores the lookup table after deserialization.
    pub fn reindex(self) -> Self {
        Self::from_parts(self.dim, self.tokens, self.embeddings)
    }

    /// Number of real tokens, excluding padding.
    pub fn len(&self) -> usize {
        self.tokens.len() - 1
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn index_of(&self, token: &str) -> Option<u32> {
        self.index.get(token).copied()
    }

    pub fn token(&self, index: u32) -> Option<&str> {
        self.tokens.get(index as usize).map(|s| s.as_str())
    }

    pub fn row(&self, index: u32) -> &[f64] {
        let i = index as usize * self.dim;
        &self.embeddings[i..i + self.dim]
    }

    /// The full `(len + 1) x dim` matrix, padding row first.
    pub fn matrix(&self) -> &[f64] {
        &self.embeddings
    }
}

/// Corpus tokens that have a pretrained vector, sorted; everything else is dropped.
pub fn build_vocab<'a>(days: impl IntoIterator<Item = &'a AlignedDay>, embeddings: &Embeddings) -> Vocabulary {
    let mut present = BTreeSet::new();
    for day in days {
        for h in &day.headlines {
            for t in &h.tokens {
                if embeddings.get(t).is_some() {
                    present.insert(t.clone());
                }
            }
        }
    }
    let mut tokens = vec![PAD_TOKEN.to_string()];
    let mut matrix = vec![0.0; embeddings.dim];
    for t in present {
        matrix.extend_from_slice(embeddings.get(&t).expect("filtered above"));
        tokens.push(t);
    }
    Vocabulary::from_parts(embeddings.dim, tokens, matrix)
}

/// The headlines that occupy a day's slots, in slot order, with their in-vocabulary ids.
///
/// Out-of-vocabulary tokens are dropped first; headlines left without any
/// token do not occupy a slot. The earliest `l_n` remaining headlines are kept.
pub fn slot_headlines<'a>(day: &'a AlignedDay, vocab: &Vocabulary, l_n: usize) -> Vec<(&'a AlignedHeadline, Vec<u32>)> {
    day.headlines
        .iter()
        .map(|h| {
            (
                h,
                h.tokens.iter().filter_map(|t| vocab.index_of(t)).collect::<Vec<u32>>(),
            )
        })
        .filter(|(_, ids)| !ids.is_empty())
        .take(l_n)
        .collect()
}

/// Row-major `l_n x l_s` token indices for one day, each slot from
/// [`slot_headlines`] truncated or zero-padded to `l_s`.
pub fn encode_day(day: &AlignedDay, vocab: &Vocabulary, l_n: usize, l_s: usize) -> Result<Vec<u32>> {
    if l_n == 0 || l_s == 0 {
        return Err(CorpusError::InvalidShape { l_n, l_s });
    }
    let mut out = vec![0u32; l_n * l_s];
    for (r, (_, ids)) in slot_headlines(day, vocab, l_n).into_iter().enumerate() {
        for (c, id) in ids.into_iter().take(l_s).enumerate() {
            out[r * l_s + c] = id;
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ny(s: &str) -> NaiveDateTime {
        NaiveDateTime::parse_from_str(s, "%Y-%m-%d %H:%M:%S").unwrap()
    }

    fn date(s: &str) -> NaiveDate {
        NaiveDate::parse_from_str(s, "%Y-%m-%d").unwrap()
    }

    #[test]
    fn categorize_examples() {
        let cal = TradingCalendar::default();
        assert_eq!(categorize(ny("2007-04-17 08:54:27"), &cal), TimeCategory::BeforeMarket);
        assert_eq!(categorize(ny("2016-09-22 15:32:13"), &cal), TimeCategory::DuringMarket);
        assert_eq!(categorize(ny("2016-09-24 10:00:00"), &cal), TimeCategory::Weekend);
        assert_eq!(categorize(ny("2016-09-22 09:30:00"), &cal), TimeCategory::DuringMarket);
        assert_eq!(categorize(ny("2016-09-22 16:00:00"), &cal), TimeCategory::DuringMarket);
        assert_eq!(categorize(ny("2016-09-22 16:00:01"), &cal), TimeCategory::AfterMarket);
        assert_eq!(categorize(ny("2016-09-22 09:29:59"), &cal), TimeCategory::BeforeMarket);
        let hol = TradingCalendar::new([date("2016-12-26")]);
        assert_eq!(categorize(ny("2016-12-26 11:00:00"), &hol), TimeCategory::Holiday);
    }

    #[test]
    fn new_york_conversion_tracks_dst() {
        let summer = DateTime::parse_from_rfc3339("2016-09-22T19:32:13+00:00").unwrap();
        assert_eq!(to_new_york(&summer), ny("2016-09-22 15:32:13"));
        let winter = DateTime::parse_from_rfc3339("2016-12-16T17:26:00+00:00").unwrap();
        assert_eq!(to_new_york(&winter), ny("2016-12-16 12:26:00"));
        // 2016 spring forward: 2016-03-13 07:00 UTC.
        let before = DateTime::parse_from_rfc3339("2016-03-13T06:59:59Z").unwrap();
        let after = DateTime::parse_from_rfc3339("2016-03-13T07:00:00Z").unwrap();
        assert_eq!(to_new_york(&before), ny("2016-03-13 01:59:59"));
        assert_eq!(to_new_york(&after), ny("2016-03-13 03:00:00"));
        // Pre-2007 rules: 2006 DST began on April 2.
        let old = DateTime::parse_from_rfc3339("2006-03-20T14:00:00Z").unwrap();
        assert_eq!(to_new_york(&old), ny("2006-03-20 09:00:00"));
        let offset = DateTime::parse_from_rfc3339("2007-04-17T08:54:27-04:00").unwrap();
        assert_eq!(to_new_york(&offset), ny("2007-04-17 08:54:27"));
    }

    fn rec(stock: &str, utc: &str, text: &str) -> HeadlineRecord {
        HeadlineRecord::new(stock, utc, text).unwrap()
    }

    #[test]
    fn alignment_examples() {
        let cal = TradingCalendar::default();
        let records = vec![
            // Tuesday 16:05 EDT
            rec("WFC", "2016-09-20T20:05:00+00:00", "after the bell"),
            // Friday 17:00 EDT
            rec("WFC", "2016-09-23T21:00:00+00:00", "friday evening"),
            // Tuesday 10:00 EDT
            rec("WFC", "2016-09-20T14:00:00+00:00", "in session"),
        ];
        let corpus = align(&records, &cal);
        let tue = corpus.day("WFC", date("2016-09-20")).unwrap();
        assert_eq!(tue.headlines.len(), 1);
        assert_eq!(tue.headlines[0].tokens, vec!["in", "session"]);
        let wed = corpus.day("WFC", date("2016-09-21")).unwrap();
        assert_eq!(wed.headlines[0].tokens, vec!["after", "the", "bell"]);
        assert_eq!(wed.headlines[0].category, TimeCategory::AfterMarket);
        let mon = corpus.day("WFC", date("2016-09-26")).unwrap();
        assert_eq!(mon.headlines[0].tokens, vec!["friday", "evening"]);
        let thu = corpus.day("WFC", date("2016-09-22")).unwrap();
        assert!(!thu.has_news && thu.headlines.is_empty());
        assert!(corpus.day("WFC", date("2016-09-24")).is_none());
        assert_eq!(corpus.headline_count(), 3);
    }

    #[test]
    fn holidays_push_news_forward() {
        let cal = TradingCalendar::new([date("2016-12-26")]);
        let records = vec![rec("X", "2016-12-26T15:00:00Z", "boxing day")];
        let corpus = align(&records, &cal);
        let days = &corpus.stocks["X"];
        assert_eq!(days.len(), 1);
        assert_eq!(days[0].trading_date, date("2016-12-27"));
    }

    #[test]
    fn headlines_keep_chronological_order() {
        let cal = TradingCalendar::default();
        let records = vec![
            rec("X", "2016-09-20T13:00:00Z", "second"),
            rec("X", "2016-09-19T22:00:00Z", "first"),
        ];
        let corpus = align(&records, &cal);
        let d = corpus.day("X", date("2016-09-20")).unwrap();
        let order: Vec<&str> = d.headlines.iter().map(|h| h.tokens[0].as_str()).collect();
        assert_eq!(order, vec!["first", "second"]);
    }

    #[test]
    fn tokenize_examples() {
        assert_eq!(
            tokenize("Wells Fargo profit rises 11 pct"),
            vec!["wells", "fargo", "profit", "rises", "11", "pct"]
        );
        assert!(tokenize("").is_empty());
        assert_eq!(tokenize("P&G raises forecast."), vec!["p&g", "raises", "forecast"]);
        assert_eq!(
            tokenize("Texas regulators express ``deep concern'' over NextEra deal"),
            vec![
                "texas",
                "regulators",
                "express",
                "deep",
                "concern",
                "over",
                "nextera",
                "deal"
            ]
        );
    }

    fn pg_forms() -> SurfaceForms {
        let mut m = BTreeMap::new();
        m.insert(
            "PG".to_string(),
            vec!["Procter & Gamble".to_string(), "P&G".to_string()],
        );
        m.insert("AAPL".to_string(), vec!["Apple".to_string()]);
        SurfaceForms::new(m).unwrap()
    }

    #[test]
    fn surface_form_matching() {
        let forms = pg_forms();
        let hit = match_stock("Procter & Gamble appoints Nelson Peltz to board", &forms);
        assert_eq!(hit, BTreeSet::from(["PG".to_string()]));
        let mut only_pg = BTreeMap::new();
        only_pg.insert(
            "PG".to_string(),
            vec!["Procter & Gamble".to_string(), "P&G".to_string()],
        );
        let only_pg = SurfaceForms::new(only_pg).unwrap();
        assert!(match_stock("Apple sues Qualcomm", &only_pg).is_empty());
        let both = match_stock("apple and p&g sign deal", &forms);
        assert_eq!(both.len(), 2);
        // Whole tokens only.
        assert!(match_stock("Pineapple prices climb", &forms).is_empty());
        let mut bad = BTreeMap::new();
        bad.insert("X".to_string(), vec![]);
        assert!(SurfaceForms::new(bad).is_err());
    }

    #[test]
    fn surface_form_filter_fans_out() {
        let forms = pg_forms();
        let recs = vec![
            rec("", "2016-09-20T13:00:00Z", "Apple and P&G team up"),
            rec("PG", "2016-09-20T13:00:00Z", "Unrelated headline"),
            rec("PG", "2016-09-20T13:00:00Z", "P&G beats estimates"),
        ];
        let out = filter_by_surface_forms(recs, &forms);
        let stocks: Vec<&str> = out.iter().map(|r| r.stock_id.as_str()).collect();
        assert_eq!(stocks, vec!["AAPL", "PG", "PG"]);
    }

    #[test]
    fn jsonl_rejections_carry_lines() {
        let text = r#"{"stock": "PG", "utc": "2016-12-16T17:26:00+00:00", "text": "P&G appoints Peltz"}
{"stock": "PG", "utc": "not a time", "text": "bad"}

{"stock": "PG", "utc": "2016-12-16T17:26:00+00:00", "text": "  "}
{"stock": "PG"}
"#;
        let (ok, rej) = parse_headlines_jsonl(text.as_bytes()).unwrap();
        assert_eq!(ok.len(), 1);
        let lines: Vec<usize> = rej.iter().map(|r| r.line).collect();
        assert_eq!(lines, vec![2, 4, 5]);
        let again = headline_to_json(&ok[0]);
        let (back, _) = parse_headlines_jsonl(again.as_bytes()).unwrap();
        assert_eq!(back[0], ok[0]);
        assert_eq!(ok[0].id.len(), 16);
        let named = r#"{"stock": "PG", "utc": "2016-12-16T17:26:00Z", "text": "x", "id": "h1"}"#;
        let (named, _) = parse_headlines_jsonl(named.as_bytes()).unwrap();
        assert_eq!(named[0].id, "h1");
    }

    fn embeddings() -> Embeddings {
        let text = "wells 0.1 0.2\nfargo 0.3 0.4\nprofit -1 1\nrises 0 0.5\n";
        Embeddings::from_reader(text.as_bytes()).unwrap()
    }

    #[test]
    fn embeddings_enforce_dimension() {
        let e = embeddings();
        assert_eq!(e.dim, 2);
        assert_eq!(e.len(), 4);
        let err = Embeddings::from_reader("a 1 2\nb 1 2 3\n".as_bytes()).unwrap_err();
        assert_eq!(
            err,
            CorpusError::Parse {
                line: 2,
                reason: "expected 2 values, found 3".into()
            }
        );
        assert!(matches!(
            Embeddings::from_reader("a 1 x\n".as_bytes()),
            Err(CorpusError::Parse { line: 1, .. })
        ));
    }

    #[test]
    fn embeddings_text_reloads() {
        let e = embeddings();
        assert_eq!(Embeddings::from_reader(e.to_text().as_bytes()).unwrap(), e);
    }

    fn day(headlines: &[&str]) -> AlignedDay {
        AlignedDay {
            stock_id: "WFC".into(),
            trading_date: date("2007-04-17"),
            headlines: headlines
                .iter()
                .map(|t| AlignedHeadline {
                    id: t.to_string(),
                    local_time: ny("2007-04-17 08:54:27"),
                    category: TimeCategory::BeforeMarket,
                    tokens: tokenize(t),
                })
                .collect(),
            has_news: !headlines.is_empty(),
        }
    }

    #[test]
    fn vocabulary_drops_unknown_tokens() {
        let d = day(&["Wells Fargo profit rises 11 pct"]);
        let v = build_vocab([&d], &embeddings());
        assert_eq!(v.len(), 4);
        assert!(v.index_of("pct").is_none());
        assert_eq!(v.token(0), Some(PAD_TOKEN));
        assert!(v.row(0).iter().all(|x| *x == 0.0));
        for i in 1..=v.len() as u32 {
            assert_eq!(v.row(i).len(), 2);
            assert_eq!(v.row(i), embeddings().get(v.token(i).unwrap()).unwrap());
        }
        let empty = build_vocab(std::iter::empty(), &embeddings());
        assert_eq!(empty.len(), 0);
        assert_eq!(empty.matrix().len(), 2);
    }

    #[test]
    fn encode_day_examples() {
        let emb = embeddings();
        let d = day(&["wells fargo profit"]);
        let v = build_vocab([&d], &emb);
        assert_eq!(
            encode_day(&AlignedDay::empty("WFC", date("2007-04-17")), &v, 3, 4).unwrap(),
            vec![0; 12]
        );
        let enc = encode_day(&d, &v, 2, 5).unwrap();
        let (w, f, p) = (
            v.index_of("wells").unwrap(),
            v.index_of("fargo").unwrap(),
            v.index_of("profit").unwrap(),
        );
        assert_eq!(enc, vec![w, f, p, 0, 0, 0, 0, 0, 0, 0]);
        let three = day(&["wells", "fargo", "profit"]);
        let v3 = build_vocab([&three], &emb);
        assert_eq!(
            encode_day(&three, &v3, 1, 2).unwrap(),
            vec![v3.index_of("wells").unwrap(), 0]
        );
        assert!(encode_day(&d, &v, 0, 2).is_err());
    }

    #[test]
    fn encode_round_trips_known_tokens() {
        let emb = embeddings();
        let d = day(&["Wells Fargo profit rises 11 pct", "pct only", "rises rises"]);
        let v = build_vocab([&d], &emb);
        let enc = encode_day(&d, &v, 3, 8).unwrap();
        let rows: Vec<Vec<&str>> = enc
            .chunks(8)
            .map(|r| r.iter().filter(|&&i| i != 0).map(|&i| v.token(i).unwrap()).collect())
            .collect();
        assert_eq!(rows[0], vec!["wells", "fargo", "profit", "rises"]);
        assert_eq!(rows[1], vec!["rises", "rises"]);
        assert!(rows[2].is_empty());
    }

    #[test]
    fn vocabulary_survives_serde() {
        let d = day(&["wells fargo"]);
        let v = build_vocab([&d], &embeddings());
        let json = serde_json::to_string(&v).unwrap();
        let back: Vocabulary = serde_json::from_str::<Vocabulary>(&json).unwrap().reindex();
        assert_eq!(back.index_of("fargo"), v.index_of("fargo"));
        assert_eq!(back.matrix(), v.matrix());
    }

    #[test]
    fn holiday_file_parsing() {
        let cal = TradingCalendar::from_reader("# US\n2016-12-26\n\n2017-01-02\n".as_bytes()).unwrap();
        assert!(cal.is_holiday(date("2017-01-02")));
        assert_eq!(cal.next_trading_day(date("2016-12-23")), date("2016-12-27"));
        assert!(matches!(
            TradingCalendar::from_reader("2016-13-01\n".as_bytes()),
            Err(CorpusError::Parse { line: 1, .. })
        ));
    }
}
