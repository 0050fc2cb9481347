//! Plain-text, delimited and JSON renderings of the metrics table and the per-k
//! qualitative table.

use qcluster_core::agent::StrategyKnowledge;
use qcluster_core::cluster::{CellResult, MetricsRow};

pub fn format_silhouette(x: f64) -> String {
    format!("{x:.6}")
}

/// Six decimals, or scientific notation for tiny nonzero values (`1.111477e-8`).
pub fn format_davies_bouldin(x: f64) -> String {
    if x != 0.0 && x.abs() < 1e-6 {
        format!("{x:.6e}")
    } else {
        format!("{x:.6}")
    }
}

/// Rounded to an integer with thousands separators; `inf` for the zero-scatter sentinel.
pub fn format_calinski_harabasz(x: f64) -> String {
    if x.is_nan() {
        return "nan".into();
    }
    if x.is_infinite() {
        return if x > 0.0 { "inf" } else { "-inf" }.into();
    }
    let digits = format!("{:.0}", x.abs());
    let mut out = String::with_capacity(digits.len() + digits.len() / 3);
    for (i, ch) in digits.chars().enumerate() {
        if i > 0 && (digits.len() - i) % 3 == 0 {
            out.push(',');
        }
        out.push(ch);
    }
    if x < 0.0 && digits != "0" {
        out.insert(0, '-');
    }
    out
}

fn opt(v: Option<usize>) -> String {
    v.map_or_else(|| "-".into(), |v| v.to_string())
}

/// One table line: `2 | QNN | 2 | 1 | 0.999777 | 1.111477e-8 | 15,833,657,123,341`.
pub fn render_row(r: &MetricsRow) -> String {
    [
        r.k.to_string(),
        r.method.label().to_string(),
        opt(r.depth),
        opt(r.epoch),
        format_silhouette(r.silhouette),
        format_davies_bouldin(r.davies_bouldin),
        format_calinski_harabasz(r.calinski_harabasz),
    ]
    .join(" | ")
}

/// Rows grouped by k, blank line between groups, methods in worst/average/best/QNN order.
pub fn metrics_text(rows: &[MetricsRow]) -> String {
    let mut sorted: Vec<&MetricsRow> = rows.iter().collect();
    sorted.sort_by_key(|r| (r.k, r.method));
    let mut out = MetricsRow::HEADERS.join(" | ");
    out.push('\n');
    let mut last_k = None;
    for r in sorted {
        if last_k.is_some_and(|k| k != r.k) {
            out.push('\n');
        }
        last_k = Some(r.k);
        out.push_str(&render_row(r));
        out.push('\n');
    }
    out
}

fn float_field(x: f64) -> String {
    if x.is_finite() {
        x.to_string()
    } else if x.is_nan() {
        "nan".into()
    } else if x > 0.0 {
        "inf".into()
    } else {
        "-inf".into()
    }
}

fn to_csv_string(headers: &[&str], records: impl Iterator<Item = Vec<String>>) -> Result<String, csv::Error> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(headers)?;
    for r in records {
        w.write_record(&r)?;
    }
    let bytes = w.into_inner().map_err(|e| e.into_error())?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

/// Full-precision delimited table with the same headers as the text rendering.
pub fn metrics_csv(rows: &[MetricsRow]) -> Result<String, csv::Error> {
    to_csv_string(
        &MetricsRow::HEADERS,
        rows.iter().map(|r| {
            vec![
                r.k.to_string(),
                r.method.label().to_string(),
                r.depth.map(|d| d.to_string()).unwrap_or_default(),
                r.epoch.map(|e| e.to_string()).unwrap_or_default(),
                float_field(r.silhouette),
                float_field(r.davies_bouldin),
                float_field(r.calinski_harabasz),
            ]
        }),
    )
}

pub fn metrics_json(rows: &[MetricsRow]) -> String {
    let mut s = serde_json::to_string_pretty(rows).expect("rows serialize");
    s.push('\n');
    s
}

/// Every evaluated (k, feature set) cell, one line each.
pub fn cells_csv(cells: &[CellResult]) -> Result<String, csv::Error> {
    to_csv_string(
        &[
            "K",
            "Strategy",
            "Depth",
            "Epoch",
            "Prototypes",
            "Silhouette Score",
            "Davies-Bouldin",
            "Calinski-Harabasz",
        ],
        cells.iter().map(|c| {
            vec![
                c.k.to_string(),
                c.provenance.strategy.to_string(),
                c.provenance.depth.to_string(),
                c.provenance.epoch.to_string(),
                c.provenance.num_prototypes.map(|p| p.to_string()).unwrap_or_default(),
                float_field(c.scores.silhouette),
                float_field(c.scores.davies_bouldin),
                float_field(c.scores.calinski_harabasz),
            ]
        }),
    )
}

pub const STRATEGY_HEADERS: [&str; 4] = [
    "K",
    "QNN Key Characteristics",
    "QF Key Characteristics",
    "Overall Recommendation",
];

pub fn strategy_text(knowledge: &StrategyKnowledge) -> String {
    let mut out = STRATEGY_HEADERS.join(" | ");
    out.push('\n');
    for r in &knowledge.records {
        out.push_str(&format!(
            "{} | {} | {} | {}\n",
            r.k, r.qnn_characteristics, r.qf_characteristics, r.recommendation
        ));
    }
    out.push_str(&format!(
        "\nRecommended K: {}\n{}\n",
        knowledge.global.recommended_k, knowledge.global.text
    ));
    out
}

pub fn strategy_csv(knowledge: &StrategyKnowledge) -> Result<String, csv::Error> {
    to_csv_string(
        &STRATEGY_HEADERS,
        knowledge.records.iter().map(|r| {
            vec![
                r.k.to_string(),
                r.qnn_characteristics.clone(),
                r.qf_characteristics.clone(),
                r.recommendation.clone(),
            ]
        }),
    )
}
