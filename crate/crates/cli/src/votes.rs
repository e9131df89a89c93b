//! Voting-space dumps: score matrix CSV, 8-bit PGM heatmap and an argmax
//! sidecar. Rows run over ascending y bins, columns over ascending x bins, in
//! both the CSV and the image.

use std::path::{Path, PathBuf};

use pillarvote_core::{argmax_translation, VotingSpace};

use crate::error::{CliError, CliResult};

/// Score matrix, one line per row. Values use the shortest exact repr.
pub fn votes_csv(space: &VotingSpace) -> String {
    let mut s = String::new();
    for r in 0..space.rows() {
        let row: Vec<String> = (0..space.cols()).map(|c| space.get(r, c).to_string()).collect();
        s.push_str(&row.join(","));
        s.push('\n');
    }
    s
}

pub fn parse_votes_csv(text: &str) -> Result<Vec<Vec<f64>>, String> {
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .enumerate()
        .map(|(i, l)| {
            l.split(',')
                .map(|v| v.trim().parse::<f64>().map_err(|_| format!("row {i}: bad value {v:?}")))
                .collect()
        })
        .collect()
}

/// Binary PGM, min-max scaled to 0..=255. A flat space is mid gray.
pub fn votes_pgm(space: &VotingSpace) -> Vec<u8> {
    let s = space.scores();
    let lo = s.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = s.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut out = format!("P5\n{} {}\n255\n", space.cols(), space.rows()).into_bytes();
    out.extend(s.iter().map(|v| {
        if hi > lo {
            ((v - lo) / (hi - lo) * 255.0).round() as u8
        } else {
            128
        }
    }));
    out
}

pub fn argmax_line(space: &VotingSpace) -> String {
    let t = argmax_translation(space);
    // Avoid printing "-0.000".
    let f = |v: f64| {
        let s = format!("{v:.3}");
        if s == "-0.000" {
            "0.000".to_string()
        } else {
            s
        }
    };
    format!("{},{}\n", f(t[0]), f(t[1]))
}

/// Writes `<stem>.csv`, `<stem>.pgm` and `<stem>.argmax.txt`.
pub fn dump_votes(space: &VotingSpace, stem: &Path) -> CliResult<Vec<PathBuf>> {
    let with = |ext: &str| {
        let mut p = stem.as_os_str().to_owned();
        p.push(ext);
        PathBuf::from(p)
    };
    let files = [
        (with(".csv"), votes_csv(space).into_bytes()),
        (with(".pgm"), votes_pgm(space)),
        (with(".argmax.txt"), argmax_line(space).into_bytes()),
    ];
    let mut written = Vec::new();
    for (path, bytes) in files {
        std::fs::write(&path, bytes).map_err(|e| CliError::io(&path, e))?;
        written.push(path);
    }
    Ok(written)
}

#[cfg(test)]
mod tests {
    use super::*;
    use pillarvote_core::VoteConfig;

    fn space(scores: impl Fn(usize) -> f64) -> VotingSpace {
        let g = VoteConfig::new([0.2, 0.2]).geometry().unwrap();
        VotingSpace::from_scores(g, (0..g.rows() * g.cols()).map(scores).collect()).unwrap()
    }

    #[test]
    fn flat_space_is_gray() {
        let s = space(|_| 0.0);
        let pgm = votes_pgm(&s);
        let header = b"P5\n21 21\n255\n";
        assert_eq!(&pgm[..header.len()], header);
        assert!(pgm[header.len()..].iter().all(|p| *p == 128));
        assert_eq!(argmax_line(&s), "0.000,0.000\n");
    }

    #[test]
    fn one_vote_is_one_white_pixel() {
        let s = space(|i| if i == 7 { 0.5 } else { 0.0 });
        let pix = &votes_pgm(&s)[13..];
        assert_eq!(pix.len(), 441);
        assert_eq!(pix[7], 255);
        assert_eq!(pix.iter().filter(|p| **p == 0).count(), 440);
        // Row 0 is y = -2, column 7 is x = -0.6.
        assert_eq!(argmax_line(&s), "-0.600,-2.000\n");
    }

    #[test]
    fn csv_round_trips() {
        let s = space(|i| (i as f64 * 0.37).sin());
        let back = parse_votes_csv(&votes_csv(&s)).unwrap();
        assert_eq!(back.len(), 21);
        for (r, row) in back.iter().enumerate() {
            for (c, v) in row.iter().enumerate() {
                assert_eq!(*v, s.get(r, c));
            }
        }
    }
}
