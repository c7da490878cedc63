//! Manifest text format.
//!
//! ```text
//! stresshmm-manifest 1
//! conditions <set-name> <label>,<label>,...
//! sample_rate <hz>
//! audio_path  speaker_id  gender  sentence_id  condition  repetition
//! wav/s01_1_neutral_1.wav  s01  male  1  neutral  1
//! ...
//! ```
//!
//! Records are tab-separated. Blank lines and lines starting with `#` are
//! ignored. Relative audio paths resolve against the manifest's directory.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use super::{ConditionSet, CorpusManifest, Gender, Utterance};
use crate::error::{Error, Result};

pub const MANIFEST_MAGIC: &str = "stresshmm-manifest";
const VERSION: u32 = 1;
const COLUMNS: [&str; 6] = [
    "audio_path",
    "speaker_id",
    "gender",
    "sentence_id",
    "condition",
    "repetition",
];

/// Reads, validates, and checks that every referenced audio file exists.
pub fn load_manifest(path: impl AsRef<Path>) -> Result<CorpusManifest> {
    let path = path.as_ref();
    let text = fs::read_to_string(path)?;
    let root = path.parent().map(Path::to_path_buf).unwrap_or_default();
    let manifest = parse(&text, &path.display().to_string(), root)?;
    for u in manifest.utterances() {
        let p = manifest.resolve(u);
        if !p.is_file() {
            return Err(Error::MissingAudio(p));
        }
    }
    Ok(manifest)
}

pub fn save_manifest(manifest: &CorpusManifest, path: impl AsRef<Path>) -> Result<()> {
    fs::write(path, render(manifest))?;
    Ok(())
}

pub(crate) fn render(m: &CorpusManifest) -> String {
    let mut out = String::new();
    let cs = m.condition_set();
    let _ = writeln!(out, "{MANIFEST_MAGIC} {VERSION}");
    let _ = writeln!(out, "conditions {} {}", cs.name(), cs.labels().join(","));
    let _ = writeln!(out, "sample_rate {}", m.sample_rate_hz());
    let _ = writeln!(out, "{}", COLUMNS.join("\t"));
    for u in m.utterances() {
        let _ = writeln!(
            out,
            "{}\t{}\t{}\t{}\t{}\t{}",
            u.audio_path.display(),
            u.speaker_id,
            u.gender,
            u.sentence_id,
            u.condition,
            u.repetition
        );
    }
    out
}

impl CorpusManifest {
    /// Parses manifest text without touching the filesystem.
    pub fn parse(text: &str, root: impl Into<PathBuf>) -> Result<Self> {
        parse(text, "<manifest>", root.into())
    }
}

fn parse(text: &str, origin: &str, root: PathBuf) -> Result<CorpusManifest> {
    let err = |line: usize, msg: String| Error::Parse {
        path: origin.to_string(),
        line,
        msg,
    };
    let mut lines = text
        .lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim_end_matches('\r')))
        .filter(|(_, l)| !l.trim().is_empty() && !l.starts_with('#'));

    let (ln, magic) = lines.next().ok_or_else(|| err(1, "empty manifest".into()))?;
    let mut parts = magic.split_whitespace();
    if parts.next() != Some(MANIFEST_MAGIC) {
        return Err(err(ln, format!("expected `{MANIFEST_MAGIC} {VERSION}` header")));
    }
    match parts.next().map(str::parse::<u32>) {
        Some(Ok(VERSION)) => {}
        _ => return Err(err(ln, format!("unsupported manifest version (want {VERSION})"))),
    }

    let (ln, cond_line) = lines
        .next()
        .ok_or_else(|| err(ln + 1, "missing conditions line".into()))?;
    let fields: Vec<&str> = cond_line.split_whitespace().collect();
    if fields.len() != 3 || fields[0] != "conditions" {
        return Err(err(ln, "expected `conditions <name> <label,...>`".into()));
    }
    let labels = fields[2].split(',').map(str::to_string).collect();
    let condition_set = ConditionSet::new(fields[1], labels).map_err(|e| err(ln, e.to_string()))?;

    let (ln, rate_line) = lines
        .next()
        .ok_or_else(|| err(ln + 1, "missing sample_rate line".into()))?;
    let fields: Vec<&str> = rate_line.split_whitespace().collect();
    let sample_rate_hz = match fields.as_slice() {
        ["sample_rate", hz] => hz
            .parse::<u32>()
            .map_err(|e| err(ln, format!("bad sample rate: {e}")))?,
        _ => return Err(err(ln, "expected `sample_rate <hz>`".into())),
    };

    let (ln, header) = lines
        .next()
        .ok_or_else(|| err(ln + 1, "missing column header".into()))?;
    let cols: Vec<&str> = header.split('\t').map(str::trim).collect();
    if cols != COLUMNS {
        return Err(err(ln, format!("column header must be `{}`", COLUMNS.join("<TAB>"))));
    }

    let mut utterances = Vec::new();
    for (ln, line) in lines {
        let f: Vec<&str> = line.split('\t').collect();
        if f.len() != COLUMNS.len() {
            return Err(err(
                ln,
                format!("expected {} tab-separated fields, got {}", COLUMNS.len(), f.len()),
            ));
        }
        let sentence_id = f[3]
            .trim()
            .parse::<u32>()
            .map_err(|e| err(ln, format!("bad sentence_id `{}`: {e}", f[3])))?;
        let repetition = f[5]
            .trim()
            .parse::<u32>()
            .map_err(|e| err(ln, format!("bad repetition `{}`: {e}", f[5])))?;
        let gender = f[2].trim().parse::<Gender>().map_err(|e| err(ln, e.to_string()))?;
        utterances.push(Utterance {
            audio_path: PathBuf::from(f[0]),
            speaker_id: f[1].trim().to_string(),
            gender,
            sentence_id,
            condition: f[4].trim().to_string(),
            repetition,
        });
    }
    CorpusManifest::new(condition_set, utterances, sample_rate_hz, root)
}
