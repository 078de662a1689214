//! Tables, plots, trend checks, and loss-smoothness diagnostics.

mod plots;
mod svg;
mod tables;
mod trends;

pub use plots::{emit_loss_plots, emit_plots, line_chart, strip_chart, LineSeries};
pub use tables::{
    emit_tables, parse_table_csv, render_table_csv, sort_rows, TableRow, VertexGroup,
    TABLE_CSV_HEADER,
};
pub use trends::{
    pearson_corr, smoothness, trend_checks, SmoothnessSummary, TrendCheckResult, TrendDetail,
};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum ReportError {
    #[error("undefined correlation: {0}")]
    UndefinedCorrelation(String),
    #[error("series too short: {0}")]
    TooShort(String),
    #[error("undefined smoothness: series is identically zero")]
    UndefinedSmoothness,
    #[error("bad table data: {0}")]
    BadTable(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
