use std::io::Write;

use serde::Serialize;

use crate::error::Result;

/// Metrics for one player after one round. Round 0 is the initial state.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HistoryRow {
    pub round: u64,
    pub player: usize,
    /// `KL(learned || equilibrium)`, nats; `inf` on support mismatch.
    pub kl_to_eq: f64,
    pub l1_to_eq: f64,
    /// `sum_x pi_i(x) log p_i(x)`; NaN for players without data.
    pub own_loglik: f64,
    pub utility: f64,
}

impl HistoryRow {
    pub const CSV_HEADER: &'static str = "round,player,kl_to_eq,l1_to_eq,own_loglik,utility";

    pub fn csv_line(&self) -> String {
        format!(
            "{},{},{},{},{},{}",
            self.round, self.player, self.kl_to_eq, self.l1_to_eq, self.own_loglik, self.utility
        )
    }
}

/// Agreement of two players' marginals on their shared variables.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OverlapRow {
    pub round: u64,
    pub player_a: usize,
    pub player_b: usize,
    pub overlap_l1: f64,
}

impl OverlapRow {
    pub const CSV_HEADER: &'static str = "round,player_a,player_b,overlap_l1";

    pub fn csv_line(&self) -> String {
        format!(
            "{},{},{},{}",
            self.round, self.player_a, self.player_b, self.overlap_l1
        )
    }
}

/// Receives history rows as they are produced.
pub trait HistorySink {
    fn record(&mut self, row: &HistoryRow) -> Result<()>;

    fn record_overlap(&mut self, _row: &OverlapRow) -> Result<()> {
        Ok(())
    }
}

/// Streams rows as CSV.
pub struct CsvSink<W: Write, O: Write> {
    history: W,
    overlap: Option<O>,
}

impl<W: Write, O: Write> CsvSink<W, O> {
    pub fn new(mut history: W, mut overlap: Option<O>) -> Result<Self> {
        writeln!(history, "{}", HistoryRow::CSV_HEADER)?;
        if let Some(o) = overlap.as_mut() {
            writeln!(o, "{}", OverlapRow::CSV_HEADER)?;
        }
        Ok(Self { history, overlap })
    }

    pub fn finish(mut self) -> Result<()> {
        self.history.flush()?;
        if let Some(o) = self.overlap.as_mut() {
            o.flush()?;
        }
        Ok(())
    }
}

impl<W: Write, O: Write> HistorySink for CsvSink<W, O> {
    fn record(&mut self, row: &HistoryRow) -> Result<()> {
        writeln!(self.history, "{}", row.csv_line())?;
        Ok(())
    }

    fn record_overlap(&mut self, row: &OverlapRow) -> Result<()> {
        if let Some(o) = self.overlap.as_mut() {
            writeln!(o, "{}", row.csv_line())?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Default, Serialize)]
pub struct RunHistory {
    pub rows: Vec<HistoryRow>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub overlap_rows: Vec<OverlapRow>,
    /// Player chosen in each round (1-based round order).
    pub selections: Vec<Vec<usize>>,
    /// Partial observations that had zero marginal probability.
    pub completion_fallbacks: usize,
    pub messages: u64,
}

impl RunHistory {
    pub fn player_rows(&self, player: usize) -> impl Iterator<Item = &HistoryRow> {
        self.rows.iter().filter(move |r| r.player == player)
    }

    pub fn last_row(&self, player: usize) -> Option<&HistoryRow> {
        self.rows.iter().rev().find(|r| r.player == player)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from(HistoryRow::CSV_HEADER);
        out.push('\n');
        for r in &self.rows {
            out.push_str(&r.csv_line());
            out.push('\n');
        }
        out
    }

    pub fn overlap_csv(&self) -> String {
        let mut out = String::from(OverlapRow::CSV_HEADER);
        out.push('\n');
        for r in &self.overlap_rows {
            out.push_str(&r.csv_line());
            out.push('\n');
        }
        out
    }
}
