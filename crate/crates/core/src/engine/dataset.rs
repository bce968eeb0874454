//! Game datasets and their line-oriented text format.
//!
//! One game per line, uppercase tile labels separated by single spaces. A
//! `#` starts a comment that runs to the end of the line; lines that are
//! blank once comments are stripped are skipped. The writer emits a leading
//! `# source=<tag> seed=<n>` comment so the metadata survives a round trip.

use std::fmt;
use std::fs;
use std::io::{self, BufRead, BufWriter, Write};
use std::path::Path;
use std::str::FromStr;

use sha2::{Digest, Sha256};

use super::game::{GameRecord, Outcome};
use super::tile::Tile;
use super::EngineError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub enum SourceTag {
    Synthetic,
    Championship,
    #[default]
    Other,
}

impl fmt::Display for SourceTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SourceTag::Synthetic => "synthetic",
            SourceTag::Championship => "championship",
            SourceTag::Other => "other",
        })
    }
}

impl FromStr for SourceTag {
    type Err = EngineError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "synthetic" => Ok(SourceTag::Synthetic),
            "championship" => Ok(SourceTag::Championship),
            "other" => Ok(SourceTag::Other),
            _ => Err(EngineError::BadLabel(s.to_string())),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Dataset {
    pub games: Vec<GameRecord>,
    pub source_tag: SourceTag,
    pub seed: Option<u64>,
}

/// Train / validation / test partition of a dataset, in file order.
#[derive(Debug, Clone)]
pub struct Split {
    pub train: Dataset,
    pub val: Dataset,
    pub test: Dataset,
}

impl Dataset {
    pub fn new(games: Vec<GameRecord>, source_tag: SourceTag) -> Self {
        Dataset { games, source_tag, seed: None }
    }

    pub fn len(&self) -> usize {
        self.games.len()
    }

    pub fn is_empty(&self) -> bool {
        self.games.is_empty()
    }

    pub fn subset(&self, range: std::ops::Range<usize>) -> Dataset {
        Dataset {
            games: self.games[range].to_vec(),
            source_tag: self.source_tag,
            seed: self.seed,
        }
    }

    /// Serialized text form.
    pub fn to_text(&self) -> String {
        let mut out = String::with_capacity(self.games.len() * 180 + 64);
        out.push_str(&format!("# source={}", self.source_tag));
        if let Some(seed) = self.seed {
            out.push_str(&format!(" seed={seed}"));
        }
        out.push('\n');
        for g in &self.games {
            out.push_str(&g.labels());
            out.push('\n');
        }
        out
    }

    /// Hex SHA-256 of the serialized text.
    pub fn content_hash(&self) -> String {
        hex_digest(self.to_text().as_bytes())
    }

    /// Held-out split: the last 20,000 games become validation and test
    /// (10,000 each) when the dataset has at least 40,000 games; smaller
    /// datasets split 80/10/10 in order.
    pub fn split(&self) -> Split {
        let n = self.games.len();
        let (train_end, val_end) = if n >= 40_000 {
            (n - 20_000, n - 10_000)
        } else {
            let train = n * 8 / 10;
            let val = (n - train) / 2;
            (train, train + val)
        };
        Split {
            train: self.subset(0..train_end),
            val: self.subset(train_end..val_end),
            test: self.subset(val_end..n),
        }
    }

    pub fn parse(text: &str) -> Result<Dataset, EngineError> {
        Dataset::from_reader(text.as_bytes())
    }

    pub fn from_reader<R: BufRead>(reader: R) -> Result<Dataset, EngineError> {
        let mut ds = Dataset::default();
        let mut saw_content = false;
        for (idx, line) in reader.lines().enumerate() {
            let line = line?;
            let line_no = idx + 1;
            let (body, comment) = match line.find('#') {
                Some(pos) => (&line[..pos], Some(&line[pos + 1..])),
                None => (line.as_str(), None),
            };
            if body.trim().is_empty() {
                if let (false, Some(c)) = (saw_content, comment) {
                    parse_header(c, &mut ds);
                }
                continue;
            }
            saw_content = true;
            let mut moves = Vec::new();
            for (t_idx, token) in body.split_whitespace().enumerate() {
                let tile: Tile = token.parse().map_err(|_| EngineError::Parse {
                    line: line_no,
                    token: t_idx + 1,
                    text: token.to_string(),
                })?;
                moves.push(tile);
            }
            let mut game = GameRecord::new(moves);
            let end = game.replay().map_err(|e| match e {
                EngineError::IllegalPly { ply, tile } => EngineError::IllegalGame { line: line_no, ply: ply + 1, tile },
                EngineError::TooLong(len) => EngineError::IllegalGameLength { line: line_no, len },
                other => other,
            })?;
            if game.len() < 4 {
                log::warn!("line {line_no}: game has only {} moves", game.len());
            }
            if end.is_terminal() {
                game.outcome = Some(Outcome::of(&end));
            }
            ds.games.push(game);
        }
        Ok(ds)
    }
}

fn parse_header(comment: &str, ds: &mut Dataset) {
    for field in comment.split_whitespace() {
        if let Some(v) = field.strip_prefix("source=") {
            if let Ok(tag) = v.parse() {
                ds.source_tag = tag;
            }
        } else if let Some(v) = field.strip_prefix("seed=") {
            if let Ok(seed) = v.parse() {
                ds.seed = Some(seed);
            }
        }
    }
}

pub(crate) fn hex_digest(bytes: &[u8]) -> String {
    let digest = Sha256::digest(bytes);
    digest.iter().map(|b| format!("{b:02x}")).collect()
}

pub fn write_dataset(dataset: &Dataset, path: impl AsRef<Path>) -> Result<(), EngineError> {
    let file = fs::File::create(path)?;
    let mut w = BufWriter::new(file);
    w.write_all(dataset.to_text().as_bytes())?;
    w.flush()?;
    Ok(())
}

pub fn read_dataset(path: impl AsRef<Path>) -> Result<Dataset, EngineError> {
    let file = fs::File::open(path)?;
    Dataset::from_reader(io::BufReader::new(file))
}
