//! The "source code" abstraction: query-metered samplers built from an
//! explicit pmf, a string oracle, or channel post-processing of another code.
//!
//! Cost model: one use of the code is one forward sample for classical draws;
//! mean-estimation backends charge the same ledger by their declared cost
//! formula. Post-processed codes surface the ledger of the innermost code, so
//! one draw of a composed code always costs exactly one use of the base code.

use std::collections::BTreeMap;
use std::io::{BufRead, Write};
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dist::Pmf;
use crate::error::{Error, Result};

/// Counter-based derivation of independent RNG streams.
///
/// A master seed plus a path of child indices/labels pins every stream in an
/// experiment, so trials can run concurrently and still replay bit-for-bit.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct StreamKey(u64);

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E3779B97F4A7C15);
    x = (x ^ (x >> 30)).wrapping_mul(0xBF58476D1CE4E5B9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94D049BB133111EB);
    x ^ (x >> 31)
}

fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xCBF29CE484222325;
    for &b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(0x100000001B3);
    }
    h
}

impl StreamKey {
    pub fn new(master_seed: u64) -> Self {
        StreamKey(splitmix64(master_seed))
    }

    pub fn child(&self, index: u64) -> Self {
        StreamKey(splitmix64(self.0 ^ splitmix64(index.wrapping_add(1))))
    }

    pub fn child_label(&self, label: &str) -> Self {
        self.child(fnv1a(label.as_bytes()))
    }

    pub fn rng(&self) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(self.0)
    }
}

impl From<u64> for StreamKey {
    fn from(seed: u64) -> Self {
        StreamKey::new(seed)
    }
}

/// Exact accounting of "uses of the code", broken down by phase label.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct QueryLedger {
    code_uses: u64,
    breakdown: BTreeMap<String, u64>,
}

impl QueryLedger {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn charge(&mut self, label: &str, uses: u64) {
        self.code_uses += uses;
        *self.breakdown.entry(label.to_string()).or_insert(0) += uses;
    }

    pub fn code_uses(&self) -> u64 {
        self.code_uses
    }

    pub fn breakdown(&self) -> &BTreeMap<String, u64> {
        &self.breakdown
    }

    /// Conservation: the total equals the sum of the per-phase entries.
    pub fn conserved(&self) -> bool {
        self.code_uses == self.breakdown.values().sum::<u64>()
    }

    pub fn merge(&mut self, other: &QueryLedger) {
        for (label, uses) in &other.breakdown {
            self.charge(label, *uses);
        }
    }
}

/// A string oracle: the distribution is the empirical frequency vector of an
/// explicit symbol string, so every probability is an integer multiple of `1/m`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct StringOracle {
    k: usize,
    symbols: Vec<u32>,
}

impl StringOracle {
    /// Symbols are 0-based and must lie in `[k]`.
    pub fn new(k: usize, symbols: Vec<u32>) -> Result<Self> {
        if symbols.is_empty() {
            return Err(Error::EmptyString);
        }
        if let Some(&bad) = symbols.iter().find(|&&s| s as usize >= k) {
            return Err(Error::InvalidParameter(format!(
                "string symbol {bad} outside domain of size {k}"
            )));
        }
        Ok(Self { k, symbols })
    }

    /// The string induced by an r-to-1 map on `[k]`: symbol `j / r` at
    /// position `j`, so each of the first `k/r` symbols appears `r` times.
    pub fn r_to_1(k: usize, r: usize) -> Result<Self> {
        if r < 2 || !k.is_multiple_of(r) {
            return Err(Error::InvalidParameter(format!(
                "multiplicity {r} must be >= 2 and divide k = {k}"
            )));
        }
        let symbols = (0..k).map(|j| (j / r) as u32).collect();
        Self::new(k, symbols)
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn m(&self) -> usize {
        self.symbols.len()
    }

    pub fn symbols(&self) -> &[u32] {
        &self.symbols
    }

    /// The induced pmf: `p_i = |{j : x_j = i}| / m`.
    pub fn induced_pmf(&self) -> Pmf<f64> {
        let mut counts = vec![0u64; self.k];
        for &s in &self.symbols {
            counts[s as usize] += 1;
        }
        let m = self.symbols.len() as f64;
        Pmf::new(counts.into_iter().map(|c| c as f64 / m).collect())
            .expect("frequency vector is a pmf")
    }

    /// Read the interchange format: first line `k m`, then `m` lines of
    /// 1-based symbols.
    pub fn read<R: BufRead>(reader: R) -> Result<Self> {
        let mut lines = reader.lines();
        let header = lines
            .next()
            .ok_or(Error::EmptyString)?
            .map_err(Error::Io)?;
        let mut parts = header.split_whitespace();
        let parse = |s: Option<&str>| -> Result<usize> {
            s.and_then(|t| t.parse().ok())
                .ok_or_else(|| Error::Config("string oracle header must be 'k m'".into()))
        };
        let k = parse(parts.next())?;
        let m = parse(parts.next())?;
        let mut symbols = Vec::with_capacity(m);
        for line in lines {
            let line = line.map_err(Error::Io)?;
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            let sym: usize = line
                .parse()
                .map_err(|_| Error::Config(format!("bad symbol line '{line}'")))?;
            if sym == 0 {
                return Err(Error::Config("symbols are 1-based".into()));
            }
            symbols.push((sym - 1) as u32);
        }
        if symbols.len() != m {
            return Err(Error::Config(format!(
                "header promised {m} symbols, found {}",
                symbols.len()
            )));
        }
        Self::new(k, symbols)
    }

    pub fn write<W: Write>(&self, mut writer: W) -> Result<()> {
        writeln!(writer, "{} {}", self.k, self.symbols.len())?;
        for &s in &self.symbols {
            writeln!(writer, "{}", s + 1)?;
        }
        Ok(())
    }
}

/// Precomputed inverse-CDF table, shareable across trials.
#[derive(Clone, Debug)]
pub struct SamplerTable {
    truth: Pmf<f64>,
    cdf: Vec<f64>,
}

impl SamplerTable {
    pub fn from_pmf(p: &Pmf<f64>) -> Arc<Self> {
        let mut cdf = Vec::with_capacity(p.k());
        let mut acc = 0.0f64;
        for &q in p.probs() {
            acc += q;
            cdf.push(acc);
        }
        // Force the final entry so u in [0,1) always lands inside the domain.
        *cdf.last_mut().unwrap() = 1.0;
        Arc::new(Self {
            truth: p.clone(),
            cdf,
        })
    }

    pub fn truth(&self) -> &Pmf<f64> {
        &self.truth
    }

    fn sample(&self, u: f64) -> usize {
        self.cdf.partition_point(|&c| c <= u).min(self.cdf.len() - 1)
    }
}

/// A row-stochastic map `[k_in] -> distributions over [k_out]`.
#[derive(Clone, Debug)]
pub struct Channel {
    k_in: usize,
    k_out: usize,
    rows: Vec<Vec<f64>>,
}

impl Channel {
    pub fn new(k_in: usize, k_out: usize, rows: Vec<Vec<f64>>) -> Result<Self> {
        if rows.len() != k_in {
            return Err(Error::InvalidChannel(format!(
                "expected {k_in} rows, found {}",
                rows.len()
            )));
        }
        for (i, row) in rows.iter().enumerate() {
            if row.len() != k_out {
                return Err(Error::InvalidChannel(format!(
                    "row {i} has {} entries, expected {k_out}",
                    row.len()
                )));
            }
            if row.iter().any(|&x| x.is_nan() || x < 0.0) {
                return Err(Error::InvalidChannel(format!("row {i} has a negative entry")));
            }
            let total: f64 = crate::scalar::Scalar::sum_probs(row.as_slice());
            if (total - 1.0).abs() > 1e-12 {
                return Err(Error::InvalidChannel(format!(
                    "row {i} sums to {total}, not 1"
                )));
            }
        }
        Ok(Self { k_in, k_out, rows })
    }

    pub fn identity(k: usize) -> Self {
        let rows = (0..k)
            .map(|i| {
                let mut row = vec![0.0; k];
                row[i] = 1.0;
                row
            })
            .collect();
        Self {
            k_in: k,
            k_out: k,
            rows,
        }
    }

    pub fn k_in(&self) -> usize {
        self.k_in
    }

    pub fn k_out(&self) -> usize {
        self.k_out
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.rows[i]
    }

    /// Exact matrix pushforward of a pmf through the channel.
    pub fn pushforward(&self, p: &Pmf<f64>) -> Result<Pmf<f64>> {
        if p.k() != self.k_in {
            return Err(Error::DimensionMismatch(p.k(), self.k_in));
        }
        let mut out = vec![0.0f64; self.k_out];
        for (i, row) in self.rows.iter().enumerate() {
            let pi = *p.prob(i);
            if pi == 0.0 {
                continue;
            }
            for (j, &m) in row.iter().enumerate() {
                out[j] += pi * m;
            }
        }
        // Mass is conserved up to rounding; nudge so construction passes.
        let drift = 1.0 - crate::scalar::Scalar::sum_probs(out.as_slice());
        if let Some(argmax) = out
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.partial_cmp(b.1).unwrap())
            .map(|(j, _)| j)
        {
            out[argmax] += drift;
        }
        Pmf::new(out)
    }

    fn sample_row(&self, i: usize, rng: &mut ChaCha8Rng) -> usize {
        let row = &self.rows[i];
        let u: f64 = rng.gen();
        let mut acc = 0.0;
        for (j, &m) in row.iter().enumerate() {
            acc += m;
            if u < acc {
                return j;
            }
        }
        row.len() - 1
    }
}

type ExternalSampler = Box<dyn FnMut(&mut ChaCha8Rng) -> usize + Send>;

enum BaseSampler {
    InverseCdf(Arc<SamplerTable>),
    StringTable(Arc<Vec<u32>>),
    External(ExternalSampler),
}

enum CodeImpl {
    Base {
        sampler: BaseSampler,
        ledger: QueryLedger,
    },
    Post {
        parent: Box<SourceCode>,
        map: PostMap,
    },
}

pub(crate) enum PostMap {
    Channel(Channel),
    /// Fair coin: keep the parent draw or emit a uniform symbol.
    MixUniform,
    /// Keep symbol `i` with probability `keep[i]`, else emit the extra symbol `k_in`.
    RoundDown { keep: Vec<f64> },
    /// Spread symbol `i` uniformly over its partition cell.
    Spread(crate::reduce::GrainedPartition),
}

/// A query-metered sampler handle.
///
/// The draw procedure is a deterministic function of the embedded RNG stream;
/// every draw charges the base ledger by exactly one. The optional `truth`
/// pmf is privileged scaffolding for oracle backends and validators; codes
/// wrapped around external samplers do not carry it.
///
/// An instance is confined to a single trial; concurrent trials construct
/// their own codes from `(pmf, derived stream)`.
pub struct SourceCode {
    domain: usize,
    truth: Option<Pmf<f64>>,
    rng: ChaCha8Rng,
    imp: CodeImpl,
}

/// Build a code that samples i.i.d. from `p` by inverse-CDF lookup.
pub fn code_from_pmf(p: &Pmf<f64>, key: StreamKey) -> SourceCode {
    SourceCode::from_table(SamplerTable::from_pmf(p), key)
}

/// Build a code that outputs `x_j` for a uniformly random position `j`.
pub fn code_from_string(x: &StringOracle, key: StreamKey) -> SourceCode {
    SourceCode {
        domain: x.k(),
        truth: Some(x.induced_pmf()),
        rng: key.rng(),
        imp: CodeImpl::Base {
            sampler: BaseSampler::StringTable(Arc::new(x.symbols().to_vec())),
            ledger: QueryLedger::new(),
        },
    }
}

impl SourceCode {
    pub fn from_table(table: Arc<SamplerTable>, key: StreamKey) -> Self {
        SourceCode {
            domain: table.truth().k(),
            truth: Some(table.truth().clone()),
            rng: key.rng(),
            imp: CodeImpl::Base {
                sampler: BaseSampler::InverseCdf(table),
                ledger: QueryLedger::new(),
            },
        }
    }

    /// Wrap an external sampler. No truth is attached, so oracle-style
    /// backends will refuse this code.
    pub fn from_external<F>(domain: usize, sampler: F, key: StreamKey) -> Self
    where
        F: FnMut(&mut ChaCha8Rng) -> usize + Send + 'static,
    {
        SourceCode {
            domain,
            truth: None,
            rng: key.rng(),
            imp: CodeImpl::Base {
                sampler: BaseSampler::External(Box::new(sampler)),
                ledger: QueryLedger::new(),
            },
        }
    }

    pub(crate) fn wrap(self, map: PostMap, key: StreamKey) -> Result<SourceCode> {
        let (domain, truth) = match &map {
            PostMap::Channel(ch) => {
                if ch.k_in() != self.domain {
                    return Err(Error::DimensionMismatch(self.domain, ch.k_in()));
                }
                let truth = match &self.truth {
                    Some(t) => Some(ch.pushforward(t)?),
                    None => None,
                };
                (ch.k_out(), truth)
            }
            PostMap::MixUniform => {
                let truth = self.truth.as_ref().map(crate::reduce::phi3_pmf);
                (self.domain, truth)
            }
            PostMap::RoundDown { keep } => {
                if keep.len() != self.domain {
                    return Err(Error::DimensionMismatch(self.domain, keep.len()));
                }
                let truth = match &self.truth {
                    Some(t) => Some(crate::reduce::phi2_pmf(keep, t)?),
                    None => None,
                };
                (self.domain + 1, truth)
            }
            PostMap::Spread(part) => {
                if part.cells() != self.domain {
                    return Err(Error::DimensionMismatch(self.domain, part.cells()));
                }
                let truth = match &self.truth {
                    Some(t) => Some(crate::reduce::phi1_pmf(part, t)?),
                    None => None,
                };
                (part.total() as usize, truth)
            }
        };
        Ok(SourceCode {
            domain,
            truth,
            rng: key.rng(),
            imp: CodeImpl::Post {
                parent: Box::new(self),
                map,
            },
        })
    }

    pub fn domain_size(&self) -> usize {
        self.domain
    }

    pub fn truth(&self) -> Option<&Pmf<f64>> {
        self.truth.as_ref()
    }

    /// The ledger of the innermost (base) code.
    pub fn ledger(&self) -> &QueryLedger {
        match &self.imp {
            CodeImpl::Base { ledger, .. } => ledger,
            CodeImpl::Post { parent, .. } => parent.ledger(),
        }
    }

    /// Charge simulated uses (mean-estimation backends) against the base ledger.
    pub fn charge(&mut self, label: &str, uses: u64) {
        match &mut self.imp {
            CodeImpl::Base { ledger, .. } => ledger.charge(label, uses),
            CodeImpl::Post { parent, .. } => parent.charge(label, uses),
        }
    }

    /// One draw, charged to the base ledger under `label`.
    pub fn draw_one(&mut self, label: &str) -> usize {
        match &mut self.imp {
            CodeImpl::Base { sampler, ledger } => {
                ledger.charge(label, 1);
                match sampler {
                    BaseSampler::InverseCdf(table) => table.sample(self.rng.gen()),
                    BaseSampler::StringTable(symbols) => {
                        let j = self.rng.gen_range(0..symbols.len());
                        symbols[j] as usize
                    }
                    BaseSampler::External(f) => {
                        let v = f(&mut self.rng);
                        assert!(v < self.domain, "external sampler left the domain");
                        v
                    }
                }
            }
            CodeImpl::Post { parent, map } => {
                let v = parent.draw_one(label);
                match map {
                    PostMap::Channel(ch) => ch.sample_row(v, &mut self.rng),
                    PostMap::MixUniform => {
                        // The parent is always invoked: a composed circuit
                        // costs one base use per output draw regardless of
                        // which branch the coin takes.
                        if self.rng.gen::<bool>() {
                            v
                        } else {
                            self.rng.gen_range(0..self.domain)
                        }
                    }
                    PostMap::RoundDown { keep } => {
                        if self.rng.gen::<f64>() < keep[v] {
                            v
                        } else {
                            self.domain - 1
                        }
                    }
                    PostMap::Spread(part) => {
                        let cell = part.cell(v);
                        assert!(
                            !cell.is_empty(),
                            "draw landed in an empty partition cell"
                        );
                        self.rng.gen_range(cell.start..cell.end) as usize
                    }
                }
            }
        }
    }

    /// `n` draws under `label`.
    pub fn draw_n(&mut self, n: usize, label: &str) -> Vec<usize> {
        (0..n).map(|_| self.draw_one(label)).collect()
    }
}

/// `n` draws charged under the generic label.
pub fn draw(code: &mut SourceCode, n_draws: usize) -> Vec<usize> {
    code.draw_n(n_draws, "draw")
}

/// Post-process a code through a row-stochastic channel.
///
/// One draw of the result performs one draw of the inner code followed by a
/// channel sample; the inner ledger is surfaced through the wrapper.
pub fn postprocess(code: SourceCode, channel: Channel, key: StreamKey) -> Result<SourceCode> {
    code.wrap(PostMap::Channel(channel), key)
}
