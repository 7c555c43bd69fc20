//! Terminal annotation of pending landmarks. State is handed to `persist`
//! after every labeled entry, so an interrupted session resumes where it
//! stopped.

use std::io::{BufRead, Write};

use synthlabel_core::catalog::LabelCatalog;
use synthlabel_core::corpus::LabelScheme;
use synthlabel_core::landmark::{parse_label_input, LandmarkSet};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct AnnotateSummary {
    pub labeled: usize,
    pub skipped: usize,
    pub remaining: usize,
    /// The annotator quit or input ended before every entry was seen.
    pub stopped_early: bool,
}

/// Walks the pending entries in slot order. An empty line or `s` skips an
/// entry, `q` stops; anything else is a comma-separated label list that must
/// validate against the catalog, otherwise the entry is asked again.
#[allow(clippy::too_many_arguments)]
pub fn annotate_interactive<R, W, T, P>(
    set: &mut LandmarkSet,
    text_of: T,
    catalog: &LabelCatalog,
    scheme: LabelScheme,
    annotator: &str,
    mut input: R,
    mut out: W,
    mut persist: P,
) -> anyhow::Result<AnnotateSummary>
where
    R: BufRead,
    W: Write,
    T: Fn(&str) -> Option<String>,
    P: FnMut(&LandmarkSet) -> anyhow::Result<()>,
{
    let pending: Vec<usize> = set.pending().map(|(s, _)| s).collect();
    let total = set.len();
    let mut summary = AnnotateSummary::default();
    writeln!(out, "Available labels:\n{}\n", catalog.prompt_listing())?;
    writeln!(
        out,
        "{} of {total} landmarks pending. Type labels separated by commas; empty line or `s` skips, `q` quits.",
        pending.len()
    )?;
    'entries: for (n, slot) in pending.iter().enumerate() {
        let entry = set.entries[slot].clone();
        let text = text_of(&entry.doc_id).unwrap_or_else(|| "<text unavailable>".into());
        writeln!(out, "\n[{}/{}] cluster {} document {}\n{text}", n + 1, pending.len(), entry.cluster, entry.doc_id)?;
        loop {
            write!(out, "labels> ")?;
            out.flush()?;
            let mut line = String::new();
            if input.read_line(&mut line)? == 0 {
                summary.stopped_early = true;
                break 'entries;
            }
            let line = line.trim();
            match line {
                "" | "s" => {
                    summary.skipped += 1;
                    continue 'entries;
                }
                "q" => {
                    summary.stopped_early = true;
                    break 'entries;
                }
                _ => {}
            }
            let labels = parse_label_input(line);
            match set.label(*slot, &labels, catalog, scheme, annotator) {
                Ok(()) => {
                    persist(set)?;
                    summary.labeled += 1;
                    continue 'entries;
                }
                Err(e) => writeln!(out, "rejected: {e}")?,
            }
        }
    }
    summary.remaining = set.pending().count();
    writeln!(out, "\n{} labeled, {} skipped, {} still pending.", summary.labeled, summary.skipped, summary.remaining)?;
    Ok(summary)
}
