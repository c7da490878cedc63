//! Versioned text serialization for models and banks. Every float is written
//! as the 16-digit hex of its IEEE-754 bits so a save/load cycle is exact.
//!
//! ```text
//! stresshmm-bank 1
//! conditions stress neutral,shouted,slow,loud,soft,fast
//! kind hmm
//! model neutral
//! hmm
//! chain 9 left-to-right 2
//! initial 3ff0000000000000 0000000000000000 ...
//! trans ...
//! gmm 10 24
//! weights ...
//! means ...
//! variances ...
//! ...
//! ```

use std::fmt::Write as _;
use std::fs;
use std::io::Write as _;
use std::path::Path;

use crate::chmm2::{Chmm2Model, DiscreteChmm2Model, SecondOrderChain};
use crate::classify::{ConditionModel, ModelBank, ModelKind};
use crate::corpus::ConditionSet;
use crate::error::{Error, Result};
use crate::gmm::GmmEmission;
use crate::hmm::{DiscreteHmm1Model, Hmm1Model, MarkovChain, Topology};
use crate::sphmm::SphmmModel;

pub const MODEL_MAGIC: &str = "stresshmm-model";
pub const BANK_MAGIC: &str = "stresshmm-bank";
const VERSION: u32 = 1;

/// Line-oriented writer.
#[derive(Default)]
pub struct TextWriter {
    out: String,
}

impl TextWriter {
    fn line(&mut self, key: &str, fields: &[String]) {
        self.out.push_str(key);
        for f in fields {
            self.out.push(' ');
            self.out.push_str(f);
        }
        self.out.push('\n');
    }

    fn floats(&mut self, key: &str, xs: &[f64]) {
        self.out.push_str(key);
        for x in xs {
            let _ = write!(self.out, " {:016x}", x.to_bits());
        }
        self.out.push('\n');
    }
}

/// Line-oriented reader that tracks line numbers for diagnostics.
pub struct TextReader<'a> {
    source: String,
    lines: std::iter::Peekable<std::iter::Enumerate<std::str::Lines<'a>>>,
    line: usize,
}

impl<'a> TextReader<'a> {
    fn new(text: &'a str, source: &str) -> Self {
        TextReader {
            source: source.to_string(),
            lines: text.lines().enumerate().peekable(),
            line: 0,
        }
    }

    fn err(&self, msg: impl Into<String>) -> Error {
        Error::Parse {
            path: self.source.clone(),
            line: self.line,
            msg: msg.into(),
        }
    }

    /// Fields of the next non-blank line, which must start with `key`.
    fn expect(&mut self, key: &str) -> Result<Vec<&'a str>> {
        loop {
            let Some((n, l)) = self.lines.next() else {
                return Err(self.err(format!("unexpected end of input, expected `{key}`")));
            };
            self.line = n + 1;
            let mut fields = l.split_whitespace();
            match fields.next() {
                None => continue,
                Some(k) if k == key => return Ok(fields.collect()),
                Some(k) => return Err(self.err(format!("expected `{key}`, found `{k}`"))),
            }
        }
    }

    fn expect_n(&mut self, key: &str, n: usize) -> Result<Vec<&'a str>> {
        let f = self.expect(key)?;
        if f.len() != n {
            return Err(self.err(format!("`{key}` takes {n} fields, found {}", f.len())));
        }
        Ok(f)
    }

    fn usize(&self, s: &str) -> Result<usize> {
        s.parse().map_err(|_| self.err(format!("bad integer {s:?}")))
    }

    fn hex(&self, s: &str) -> Result<f64> {
        if s.len() != 16 {
            return Err(self.err(format!("bad float {s:?}")));
        }
        u64::from_str_radix(s, 16)
            .map(f64::from_bits)
            .map_err(|_| self.err(format!("bad float {s:?}")))
    }

    fn floats(&mut self, key: &str, n: usize) -> Result<Vec<f64>> {
        let f = self.expect_n(key, n)?;
        f.iter().map(|s| self.hex(s)).collect()
    }

    fn finish(&mut self) -> Result<()> {
        for (n, l) in self.lines.by_ref() {
            if !l.trim().is_empty() {
                self.line = n + 1;
                return Err(Error::Parse {
                    path: self.source.clone(),
                    line: self.line,
                    msg: "trailing content".into(),
                });
            }
        }
        Ok(())
    }

    fn wrap<T>(&self, r: Result<T>) -> Result<T> {
        r.map_err(|e| match e {
            e @ Error::Parse { .. } => e,
            e => self.err(e.to_string()),
        })
    }
}

/// A model with a text form.
pub trait TextModel: Sized {
    const TAG: &'static str;
    fn write_body(&self, w: &mut TextWriter);
    fn read_body(r: &mut TextReader<'_>, fields: &[&str]) -> Result<Self>;
}

fn write_tagged<M: TextModel>(m: &M, w: &mut TextWriter, fields: Vec<String>) {
    w.line(M::TAG, &fields);
    m.write_body(w);
}

fn read_tagged<M: TextModel>(r: &mut TextReader<'_>) -> Result<M> {
    let fields = r.expect(M::TAG)?;
    M::read_body(r, &fields)
}

fn write_chain(c: &MarkovChain, w: &mut TextWriter) {
    let topo = match c.topology() {
        Topology::LeftToRight { max_jump } => vec!["left-to-right".to_string(), max_jump.to_string()],
        Topology::Circular => vec!["circular".to_string()],
        Topology::Ergodic => vec!["ergodic".to_string()],
    };
    let mut fields = vec![c.n_states().to_string()];
    fields.extend(topo);
    w.line("chain", &fields);
    w.floats("initial", c.initial());
    w.floats("trans", c.trans());
}

fn read_chain(r: &mut TextReader<'_>) -> Result<MarkovChain> {
    let f = r.expect("chain")?;
    let n = r.usize(f.first().ok_or_else(|| r.err("missing state count"))?)?;
    let topology = match f.get(1..) {
        Some(["left-to-right", j]) => Topology::LeftToRight { max_jump: r.usize(j)? },
        Some(["circular"]) => Topology::Circular,
        Some(["ergodic"]) => Topology::Ergodic,
        _ => return Err(r.err("bad topology")),
    };
    let initial = r.floats("initial", n)?;
    let trans = r.floats("trans", n * n)?;
    r.wrap(MarkovChain::new(initial, trans, topology))
}

fn write_gmm(g: &GmmEmission, w: &mut TextWriter) {
    w.line("gmm", &[g.n_mix().to_string(), g.dim().to_string()]);
    w.floats("weights", g.weights());
    w.floats("means", g.means());
    w.floats("variances", g.variances());
}

fn read_gmm(r: &mut TextReader<'_>) -> Result<GmmEmission> {
    let f = r.expect_n("gmm", 2)?;
    let (m, d) = (r.usize(f[0])?, r.usize(f[1])?);
    let weights = r.floats("weights", m)?;
    let means = r.floats("means", m * d)?;
    let variances = r.floats("variances", m * d)?;
    r.wrap(GmmEmission::new(weights, means, variances, d))
}

impl TextModel for Hmm1Model {
    const TAG: &'static str = "hmm";

    fn write_body(&self, w: &mut TextWriter) {
        write_chain(self.chain(), w);
        for g in self.emissions() {
            write_gmm(g, w);
        }
    }

    fn read_body(r: &mut TextReader<'_>, _: &[&str]) -> Result<Self> {
        let chain = read_chain(r)?;
        let emissions = (0..chain.n_states()).map(|_| read_gmm(r)).collect::<Result<_>>()?;
        r.wrap(Hmm1Model::new(chain, emissions))
    }
}

fn write_pair_chain(c: &SecondOrderChain, w: &mut TextWriter) {
    w.line("pair-chain", &[c.n_states().to_string()]);
    w.floats("initial-pair", c.initial_pair());
    w.floats("trans2", c.trans2());
}

fn read_pair_chain(r: &mut TextReader<'_>) -> Result<SecondOrderChain> {
    let f = r.expect_n("pair-chain", 1)?;
    let n = r.usize(f[0])?;
    let pair = r.floats("initial-pair", n * n)?;
    let trans2 = r.floats("trans2", n * n * n)?;
    r.wrap(SecondOrderChain::new(n, pair, trans2))
}

impl TextModel for Chmm2Model {
    const TAG: &'static str = "chmm2";

    fn write_body(&self, w: &mut TextWriter) {
        write_pair_chain(self.chain(), w);
        for g in self.emissions() {
            write_gmm(g, w);
        }
    }

    fn read_body(r: &mut TextReader<'_>, _: &[&str]) -> Result<Self> {
        let chain = read_pair_chain(r)?;
        let emissions = (0..chain.n_states()).map(|_| read_gmm(r)).collect::<Result<_>>()?;
        r.wrap(Chmm2Model::new(chain, emissions))
    }
}

impl TextModel for SphmmModel {
    const TAG: &'static str = "sphmm";

    fn write_body(&self, w: &mut TextWriter) {
        w.floats("alpha", &[self.alpha()]);
        w.line("grouping", &[self.grouping().to_string()]);
        write_tagged(self.acoustic(), w, vec![]);
        write_tagged(self.prosodic(), w, vec![]);
    }

    fn read_body(r: &mut TextReader<'_>, _: &[&str]) -> Result<Self> {
        let alpha = r.floats("alpha", 1)?[0];
        let g = r.expect_n("grouping", 1)?;
        let grouping = r.usize(g[0])?;
        let acoustic = read_tagged(r)?;
        let prosodic = read_tagged(r)?;
        r.wrap(SphmmModel::new(acoustic, prosodic, alpha, grouping))
    }
}

impl TextModel for DiscreteHmm1Model {
    const TAG: &'static str = "discrete-hmm";

    fn write_body(&self, w: &mut TextWriter) {
        w.line("symbols", &[self.n_symbols().to_string()]);
        write_chain(self.chain(), w);
        w.floats("emissions", self.emissions());
    }

    fn read_body(r: &mut TextReader<'_>, _: &[&str]) -> Result<Self> {
        let s = r.expect_n("symbols", 1)?;
        let m = r.usize(s[0])?;
        let chain = read_chain(r)?;
        let emissions = r.floats("emissions", chain.n_states() * m)?;
        r.wrap(DiscreteHmm1Model::new(chain, emissions, m))
    }
}

impl TextModel for DiscreteChmm2Model {
    const TAG: &'static str = "discrete-chmm2";

    fn write_body(&self, w: &mut TextWriter) {
        w.line("symbols", &[self.n_symbols().to_string()]);
        write_pair_chain(self.chain(), w);
        w.floats("first-emission", self.first_emission());
        w.floats("pair-emission", self.pair_emission());
    }

    fn read_body(r: &mut TextReader<'_>, _: &[&str]) -> Result<Self> {
        let s = r.expect_n("symbols", 1)?;
        let m = r.usize(s[0])?;
        let chain = read_pair_chain(r)?;
        let n = chain.n_states();
        let first = r.floats("first-emission", n * m)?;
        let pair = r.floats("pair-emission", n * n * m)?;
        r.wrap(DiscreteChmm2Model::new(chain, first, pair, m))
    }
}

fn write_condition_model(m: &ConditionModel, w: &mut TextWriter) {
    match m {
        ConditionModel::Hmm(x) => write_tagged(x, w, vec![]),
        ConditionModel::Chmm2(x) => write_tagged(x, w, vec![]),
        ConditionModel::Sphmm(x) => write_tagged(x, w, vec![]),
    }
}

fn read_condition_model(r: &mut TextReader<'_>, kind: ModelKind) -> Result<ConditionModel> {
    Ok(match kind {
        ModelKind::Hmm => ConditionModel::Hmm(read_tagged(r)?),
        ModelKind::Chmm2 => ConditionModel::Chmm2(read_tagged(r)?),
        ModelKind::Sphmm => ConditionModel::Sphmm(read_tagged(r)?),
    })
}

/// Serializes a single model with a versioned header.
pub fn model_to_string<M: TextModel>(m: &M) -> String {
    let mut w = TextWriter::default();
    w.line(MODEL_MAGIC, &[VERSION.to_string()]);
    write_tagged(m, &mut w, vec![]);
    w.out
}

pub fn model_from_str<M: TextModel>(text: &str) -> Result<M> {
    let mut r = TextReader::new(text, "<model>");
    check_version(&mut r, MODEL_MAGIC)?;
    let m = read_tagged(&mut r)?;
    r.finish()?;
    Ok(m)
}

fn check_version(r: &mut TextReader<'_>, magic: &str) -> Result<()> {
    let f = r.expect_n(magic, 1)?;
    if r.usize(f[0])? != VERSION as usize {
        return Err(r.err(format!("unsupported version {}", f[0])));
    }
    Ok(())
}

pub fn bank_to_string(bank: &ModelBank) -> String {
    let mut w = TextWriter::default();
    w.line(BANK_MAGIC, &[VERSION.to_string()]);
    let c = bank.conditions();
    w.line("conditions", &[c.name().to_string(), c.labels().join(",")]);
    w.line("kind", &[bank.kind().to_string()]);
    for (label, m) in c.labels().iter().zip(bank.models()) {
        w.line("model", std::slice::from_ref(label));
        write_condition_model(m, &mut w);
    }
    w.out
}

fn parse_bank(text: &str, source: &str) -> Result<ModelBank> {
    let mut r = TextReader::new(text, source);
    check_version(&mut r, BANK_MAGIC)?;
    let c = r.expect_n("conditions", 2)?;
    let conditions = r.wrap(ConditionSet::new(c[0], c[1].split(',').map(str::to_string).collect()))?;
    let k = r.expect_n("kind", 1)?;
    let kind: ModelKind = r.wrap(k[0].parse())?;
    let mut models = Vec::with_capacity(conditions.len());
    for label in conditions.labels() {
        let f = r.expect_n("model", 1)?;
        if f[0] != label {
            return Err(r.err(format!("expected model for {label:?}, found {:?}", f[0])));
        }
        models.push(read_condition_model(&mut r, kind)?);
    }
    r.finish()?;
    ModelBank::new(conditions, models)
}

pub fn bank_from_str(text: &str) -> Result<ModelBank> {
    parse_bank(text, "<bank>")
}

/// Writes to a sibling temporary file and renames it into place, so a failed
/// write never leaves a partial bank behind.
pub fn save_bank(bank: &ModelBank, path: impl AsRef<Path>) -> Result<()> {
    write_atomic(path.as_ref(), bank_to_string(bank).as_bytes())
}

pub fn load_bank(path: impl AsRef<Path>) -> Result<ModelBank> {
    let path = path.as_ref();
    parse_bank(&fs::read_to_string(path)?, &path.display().to_string())
}

pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let name = path
        .file_name()
        .ok_or_else(|| Error::invalid(format!("{} is not a file path", path.display())))?;
    let tmp = path.with_file_name(format!(".{}.tmp", name.to_string_lossy()));
    let result = (|| {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
        fs::rename(&tmp, path)
    })();
    if result.is_err() {
        let _ = fs::remove_file(&tmp);
    }
    Ok(result?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::chmm2::init_chmm2;
    use crate::features::{FeatureKind, FeatureSequence};
    use crate::hmm::init_hmm;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn data(seed: u64, dim: usize) -> Vec<FeatureSequence> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..3)
            .map(|_| {
                FeatureSequence::new(
                    (0..20)
                        .map(|_| (0..dim).map(|_| rng.random_range(-1.0..1.0)).collect())
                        .collect(),
                    0.01,
                    FeatureKind::Acoustic,
                )
                .unwrap()
            })
            .collect()
    }

    #[test]
    fn hmm_round_trip_is_exact() {
        let d = data(1, 3);
        let m = init_hmm(4, 3, 2, &d, 5, 2).unwrap();
        let back: Hmm1Model = model_from_str(&model_to_string(&m)).unwrap();
        assert_eq!(back, m);
        assert_eq!(
            back.log_likelihood(&d[0]).unwrap().to_bits(),
            m.log_likelihood(&d[0]).unwrap().to_bits()
        );
    }

    #[test]
    fn chmm2_and_sphmm_round_trip() {
        let d = data(2, 2);
        let c = init_chmm2(5, 2, 2, &d, 1).unwrap();
        assert_eq!(model_from_str::<Chmm2Model>(&model_to_string(&c)).unwrap(), c);
        let a = init_hmm(6, 2, 1, &d, 0, 2).unwrap();
        let p = init_hmm(2, 2, 1, &d, 0, 2).unwrap();
        let s = SphmmModel::new(a, p, 0.3, 3).unwrap();
        assert_eq!(model_from_str::<SphmmModel>(&model_to_string(&s)).unwrap(), s);
    }

    #[test]
    fn discrete_round_trip() {
        let h = DiscreteHmm1Model::new(
            MarkovChain::uniform(3, Topology::Circular).unwrap(),
            vec![0.5, 0.5, 0.25, 0.75, 1.0, 0.0],
            2,
        )
        .unwrap();
        assert_eq!(model_from_str::<DiscreteHmm1Model>(&model_to_string(&h)).unwrap(), h);
        let c = DiscreteChmm2Model::uniform(3, 4).unwrap();
        assert_eq!(model_from_str::<DiscreteChmm2Model>(&model_to_string(&c)).unwrap(), c);
    }

    #[test]
    fn corrupt_input_reports_line() {
        let d = data(1, 2);
        let text = model_to_string(&init_hmm(2, 2, 1, &d, 0, 1).unwrap());
        let broken = text.replacen("trans ", "trans zz ", 1);
        match model_from_str::<Hmm1Model>(&broken) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 5),
            other => panic!("{other:?}"),
        }
        assert!(model_from_str::<Hmm1Model>(&text.replace("stresshmm-model 1", "stresshmm-model 9")).is_err());
        assert!(model_from_str::<Chmm2Model>(&text).is_err());
        assert!(model_from_str::<Hmm1Model>(&format!("{text}extra\n")).is_err());
    }

    #[test]
    fn bank_file_round_trip() {
        let d = data(3, 2);
        let set = ConditionSet::new("pair", vec!["a".into(), "b".into()]).unwrap();
        let models = (0..2)
            .map(|s| ConditionModel::Hmm(init_hmm(3, 2, 1, &d, s, 2).unwrap()))
            .collect();
        let bank = ModelBank::new(set, models).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bank.txt");
        save_bank(&bank, &path).unwrap();
        assert_eq!(load_bank(&path).unwrap(), bank);
        assert_eq!(fs::read_dir(dir.path()).unwrap().count(), 1);
        assert!(save_bank(&bank, dir.path().join("missing/bank.txt")).is_err());
    }
}
