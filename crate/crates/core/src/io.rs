//! Flat-file formats. Numbers are written in their shortest round-trip form,
//! so reading a file and writing it back reproduces it byte for byte.

use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::bandit::{PeriodRecord, RegretTrace};
use crate::error::{Error, Result};
use crate::estimation::Observation;
use crate::harness::{RhoRow, SweepRow};
use crate::solver::dp::ValueTable;
use crate::solver::policy::{PiecewiseLinearPolicy, PolicyForm};

/// A header plus string cells.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Table {
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new(header: &[&str]) -> Self {
        Table {
            header: header.iter().map(|h| h.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    pub fn column(&self, name: &str) -> Option<usize> {
        self.header.iter().position(|h| h == name)
    }

    pub fn to_csv(&self) -> String {
        let mut w = csv::WriterBuilder::new()
            .terminator(csv::Terminator::Any(b'\n'))
            .from_writer(Vec::new());
        w.write_record(&self.header).expect("in-memory write");
        for r in &self.rows {
            w.write_record(r).expect("in-memory write");
        }
        String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8 cells")
    }

    pub fn from_csv(text: &str, origin: &Path) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new()
            .has_headers(true)
            .from_reader(text.as_bytes());
        let header = rdr
            .headers()
            .map_err(|e| Error::format(origin, e))?
            .iter()
            .map(str::to_string)
            .collect();
        let rows = rdr
            .records()
            .map(|r| r.map(|r| r.iter().map(str::to_string).collect()))
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| Error::format(origin, e))?;
        Ok(Table { header, rows })
    }

    pub fn read(path: &Path) -> Result<Self> {
        Self::from_csv(&read_text(path)?, path)
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        write_text(path, &self.to_csv())
    }

    /// Cell `(row, col)` parsed as a float.
    pub fn number(&self, row: usize, col: usize, origin: &Path) -> Result<f64> {
        let cell = &self.rows[row][col];
        cell.parse().map_err(|_| {
            Error::format(
                origin,
                format!(
                    "row {}: column {} is not a number: {cell:?}",
                    row + 1,
                    self.header[col]
                ),
            )
        })
    }

    fn require(&self, names: &[&str], origin: &Path) -> Result<Vec<usize>> {
        names
            .iter()
            .map(|n| {
                self.column(n)
                    .ok_or_else(|| Error::format(origin, format!("missing column {n:?}")))
            })
            .collect()
    }
}

pub fn read_text(path: &Path) -> Result<String> {
    let mut s = String::new();
    File::open(path)
        .and_then(|mut f| f.read_to_string(&mut s))
        .map_err(|e| Error::io(path, e))?;
    Ok(s)
}

pub fn write_text(path: &Path, text: &str) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    File::create(path)
        .and_then(|mut f| f.write_all(text.as_bytes()))
        .map_err(|e| Error::io(path, e))
}

pub fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    serde_json::from_str(&read_text(path)?).map_err(|e| Error::format(path, e))
}

pub fn to_json<T: Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("serializable value");
    s.push('\n');
    s
}

fn num(v: f64) -> String {
    format!("{v}")
}

// --- policies ------------------------------------------------------------

/// JSON sidecar of a policy CSV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicyMeta {
    pub delta0: f64,
    pub form: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pi0: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub slope: Option<f64>,
    pub price_min: f64,
    pub price_max: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub expected_revenue: Option<f64>,
}

pub fn policy_table(policy: &PiecewiseLinearPolicy) -> Table {
    let mut t = Table::new(&["u", "price"]);
    for (u, p) in policy.knots.iter().zip(&policy.prices) {
        t.rows.push(vec![num(*u), num(*p)]);
    }
    t
}

pub fn policy_meta(policy: &PiecewiseLinearPolicy, expected_revenue: Option<f64>) -> PolicyMeta {
    let (form, pi0, slope) = match policy.form {
        PolicyForm::Interpolated => ("interpolated", None, None),
        PolicyForm::Linear { pi0, slope } => ("linear", Some(pi0), Some(slope)),
    };
    PolicyMeta {
        delta0: policy.delta0,
        form: form.to_string(),
        pi0,
        slope,
        price_min: policy.price_min,
        price_max: policy.price_max,
        expected_revenue,
    }
}

pub fn read_policy(csv_path: &Path, meta: &PolicyMeta) -> Result<PiecewiseLinearPolicy> {
    let t = Table::read(csv_path)?;
    let cols = t.require(&["u", "price"], csv_path)?;
    let mut knots = Vec::with_capacity(t.rows.len());
    let mut prices = Vec::with_capacity(t.rows.len());
    for r in 0..t.rows.len() {
        knots.push(t.number(r, cols[0], csv_path)?);
        prices.push(t.number(r, cols[1], csv_path)?);
    }
    let mut policy = match (meta.form.as_str(), meta.pi0, meta.slope) {
        ("linear", Some(pi0), Some(slope)) => PiecewiseLinearPolicy::linear(
            pi0,
            slope,
            meta.delta0,
            knots,
            meta.price_min,
            meta.price_max,
        )?,
        ("interpolated", _, _) => {
            PiecewiseLinearPolicy::interpolated(knots, prices.clone(), meta.delta0)?
        }
        (other, _, _) => {
            return Err(Error::format(
                csv_path,
                format!("unsupported policy form {other:?}"),
            ))
        }
    };
    policy.prices = prices;
    policy.price_min = meta.price_min;
    policy.price_max = meta.price_max;
    Ok(policy)
}

pub fn value_table_csv(table: &ValueTable, utility: &[f64], prices: &[f64]) -> Table {
    let mut t = Table::new(&["k", "u", "j", "price", "value"]);
    for k in 0..table.rows {
        for j in 0..table.cols {
            t.rows.push(vec![
                k.to_string(),
                num(utility[k]),
                j.to_string(),
                num(prices[j]),
                num(table.get(k, j)),
            ]);
        }
    }
    t
}

// --- curves --------------------------------------------------------------

pub fn rho_table(rows: &[RhoRow]) -> Table {
    let mut t = Table::new(&["delta0", "rho"]);
    for r in rows {
        t.rows.push(vec![num(r.delta0), num(r.rho)]);
    }
    t
}

pub fn read_rho(path: &Path) -> Result<Vec<RhoRow>> {
    let t = Table::read(path)?;
    let c = t.require(&["delta0", "rho"], path)?;
    (0..t.rows.len())
        .map(|r| {
            Ok(RhoRow {
                delta0: t.number(r, c[0], path)?,
                rho: t.number(r, c[1], path)?,
            })
        })
        .collect()
}

pub fn sweep_table(rows: &[SweepRow]) -> Table {
    let mut t = Table::new(&["T", "mean_rel_regret", "sd_rel_regret", "n_trials"]);
    for r in rows {
        t.rows.push(vec![
            r.horizon.to_string(),
            num(r.mean_rel_regret),
            num(r.sd_rel_regret),
            r.n_trials.to_string(),
        ]);
    }
    t
}

fn parse_int(t: &Table, row: usize, col: usize, origin: &Path) -> Result<usize> {
    let cell = &t.rows[row][col];
    cell.parse().map_err(|_| {
        Error::format(
            origin,
            format!("row {}: {:?} is not an integer", row + 1, cell),
        )
    })
}

pub fn read_sweep(path: &Path) -> Result<Vec<SweepRow>> {
    let t = Table::read(path)?;
    let c = t.require(&["T", "mean_rel_regret", "sd_rel_regret", "n_trials"], path)?;
    (0..t.rows.len())
        .map(|r| {
            Ok(SweepRow {
                horizon: parse_int(&t, r, c[0], path)?,
                mean_rel_regret: t.number(r, c[1], path)?,
                sd_rel_regret: t.number(r, c[2], path)?,
                n_trials: parse_int(&t, r, c[3], path)?,
            })
        })
        .collect()
}

// --- traces --------------------------------------------------------------

pub const TRACE_HEADER: [&str; 6] = ["t", "arm", "price", "y", "instant_regret", "cum_regret"];

/// Trace rows; the arm column is empty during experimentation and 1-based
/// afterwards.
pub fn trace_table(trace: &RegretTrace) -> Table {
    records_table(&trace.records)
}

/// Reads trace rows back (contexts are not stored in the CSV).
pub fn read_trace(path: &Path) -> Result<Vec<PeriodRecord>> {
    let t = Table::read(path)?;
    let c = t.require(&TRACE_HEADER, path)?;
    (0..t.rows.len())
        .map(|r| {
            let arm_cell = &t.rows[r][c[1]];
            let arm = if arm_cell.is_empty() {
                None
            } else {
                Some(
                    parse_int(&t, r, c[1], path)?
                        .checked_sub(1)
                        .ok_or_else(|| {
                            Error::format(path, format!("row {}: arms are numbered from 1", r + 1))
                        })?,
                )
            };
            Ok(PeriodRecord {
                t: parse_int(&t, r, c[0], path)?,
                x: Vec::new(),
                arm,
                price: t.number(r, c[2], path)?,
                y: t.number(r, c[3], path)?,
                instant_regret: t.number(r, c[4], path)?,
                cum_regret: t.number(r, c[5], path)?,
            })
        })
        .collect()
}

pub fn records_table(records: &[PeriodRecord]) -> Table {
    let mut t = Table::new(&TRACE_HEADER);
    for r in records {
        t.rows.push(vec![
            r.t.to_string(),
            r.arm.map(|a| (a + 1).to_string()).unwrap_or_default(),
            num(r.price),
            num(r.y),
            num(r.instant_regret),
            num(r.cum_regret),
        ]);
    }
    t
}

// --- observations --------------------------------------------------------

/// Observations from `x1,...,xd,p,y`.
pub fn read_observations(path: &Path) -> Result<Vec<Observation>> {
    let t = Table::read(path)?;
    let d = t
        .header
        .len()
        .checked_sub(2)
        .filter(|d| *d >= 1)
        .ok_or_else(|| Error::format(path, "expected columns x1,...,xd,p,y"))?;
    let expected: Vec<String> = (1..=d)
        .map(|i| format!("x{i}"))
        .chain(["p".to_string(), "y".to_string()])
        .collect();
    if t.header != expected {
        return Err(Error::format(
            path,
            format!("expected header {}", expected.join(",")),
        ));
    }
    (0..t.rows.len())
        .map(|r| {
            let x = (0..d)
                .map(|j| t.number(r, j, path))
                .collect::<Result<Vec<_>>>()?;
            Ok(Observation {
                x,
                p: t.number(r, d, path)?,
                y: t.number(r, d + 1, path)?,
            })
        })
        .collect()
}

pub fn observations_table(data: &[Observation]) -> Table {
    let d = data.first().map_or(1, |o| o.x.len());
    let header: Vec<String> = (1..=d)
        .map(|i| format!("x{i}"))
        .chain(["p".to_string(), "y".to_string()])
        .collect();
    let rows = data
        .iter()
        .map(|o| o.x.iter().copied().chain([o.p, o.y]).map(num).collect())
        .collect();
    Table { header, rows }
}

// --- charts --------------------------------------------------------------

#[derive(Debug, Clone, PartialEq)]
pub struct Series {
    pub name: String,
    pub points: Vec<(f64, f64)>,
}

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 400.0;
const MARGIN: f64 = 56.0;
const COLORS: [&str; 6] = [
    "#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#17becf",
];

fn axis_range(values: impl Iterator<Item = f64>) -> (f64, f64) {
    let (lo, hi) = values.fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| {
        (a.min(v), b.max(v))
    });
    if !lo.is_finite() {
        return (0.0, 1.0);
    }
    if hi - lo < 1e-12 {
        return (lo - 0.5, hi + 0.5);
    }
    (lo, hi)
}

/// Line chart as a standalone SVG document; `log_x` plots the x axis in
/// base 2 logarithm.
pub fn svg_line_chart(
    series: &[Series],
    title: &str,
    x_label: &str,
    y_label: &str,
    log_x: bool,
) -> String {
    let tx = |x: f64| if log_x { x.log2() } else { x };
    let (x0, x1) = axis_range(series.iter().flat_map(|s| s.points.iter().map(|p| tx(p.0))));
    let (y0, y1) = axis_range(series.iter().flat_map(|s| s.points.iter().map(|p| p.1)));
    let sx = |x: f64| MARGIN + (tx(x) - x0) / (x1 - x0) * (WIDTH - 2.0 * MARGIN);
    let sy = |y: f64| HEIGHT - MARGIN - (y - y0) / (y1 - y0) * (HEIGHT - 2.0 * MARGIN);
    let mut out = String::new();
    out.push_str(&format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{WIDTH}\" height=\"{HEIGHT}\" viewBox=\"0 0 {WIDTH} {HEIGHT}\">\n"
    ));
    out.push_str("<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n");
    out.push_str(&format!(
        "<text x=\"{}\" y=\"24\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"15\">{}</text>\n",
        WIDTH / 2.0,
        escape(title)
    ));
    let (left, right, top, bottom) = (MARGIN, WIDTH - MARGIN, MARGIN, HEIGHT - MARGIN);
    out.push_str(&format!(
        "<path d=\"M{left} {top} L{left} {bottom} L{right} {bottom}\" stroke=\"black\" fill=\"none\"/>\n"
    ));
    for i in 0..=4 {
        let f = i as f64 / 4.0;
        let xv = x0 + f * (x1 - x0);
        let yv = y0 + f * (y1 - y0);
        let px = left + f * (right - left);
        let py = bottom - f * (bottom - top);
        let xtext = if log_x {
            format!("2^{:.1}", xv)
        } else {
            format!("{:.3}", xv)
        };
        out.push_str(&format!(
            "<text x=\"{px:.2}\" y=\"{:.2}\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"11\">{xtext}</text>\n",
            bottom + 16.0
        ));
        out.push_str(&format!(
            "<text x=\"{:.2}\" y=\"{py:.2}\" text-anchor=\"end\" font-family=\"sans-serif\" font-size=\"11\">{yv:.4}</text>\n",
            left - 6.0
        ));
    }
    out.push_str(&format!(
        "<text x=\"{}\" y=\"{}\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"12\">{}</text>\n",
        WIDTH / 2.0,
        HEIGHT - 12.0,
        escape(x_label)
    ));
    out.push_str(&format!(
        "<text x=\"14\" y=\"{}\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"12\" transform=\"rotate(-90 14 {})\">{}</text>\n",
        HEIGHT / 2.0,
        HEIGHT / 2.0,
        escape(y_label)
    ));
    for (i, s) in series.iter().enumerate() {
        let color = COLORS[i % COLORS.len()];
        let path: Vec<String> = s
            .points
            .iter()
            .enumerate()
            .map(|(k, p)| {
                format!(
                    "{}{:.2} {:.2}",
                    if k == 0 { "M" } else { "L" },
                    sx(p.0),
                    sy(p.1)
                )
            })
            .collect();
        out.push_str(&format!(
            "<path d=\"{}\" stroke=\"{color}\" stroke-width=\"2\" fill=\"none\"/>\n",
            path.join(" ")
        ));
        out.push_str(&format!(
            "<text x=\"{:.2}\" y=\"{:.2}\" font-family=\"sans-serif\" font-size=\"11\" fill=\"{color}\">{}</text>\n",
            right - 120.0,
            top + 14.0 * (i as f64 + 1.0),
            escape(&s.name)
        ));
    }
    out.push_str("</svg>\n");
    out
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
        .replace('"', "&quot;")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn table_round_trip_is_byte_identical() {
        let rows = vec![
            RhoRow {
                delta0: 0.1,
                rho: 0.7975000000000001,
            },
            RhoRow {
                delta0: 0.30000000000000004,
                rho: 1.0,
            },
        ];
        let text = rho_table(&rows).to_csv();
        assert_eq!(
            text,
            "delta0,rho\n0.1,0.7975000000000001\n0.30000000000000004,1\n"
        );
        let again = Table::from_csv(&text, Path::new("mem")).unwrap().to_csv();
        assert_eq!(text, again);
    }

    #[test]
    fn observations_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("obs.csv");
        let data = vec![
            Observation {
                x: vec![0.25, 1.0],
                p: 0.5,
                y: 1.0,
            },
            Observation {
                x: vec![-0.125, 3.5],
                p: 2.0,
                y: 0.0,
            },
        ];
        observations_table(&data).write(&path).unwrap();
        assert_eq!(read_observations(&path).unwrap(), data);
        std::fs::write(&path, "a,b\n1,2\n").unwrap();
        assert!(read_observations(&path).is_err());
    }

    #[test]
    fn policy_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("p.csv");
        let policy =
            PiecewiseLinearPolicy::linear(0.2, 0.5, 0.5, vec![0.0, 0.5, 1.0], 0.0, 1.0).unwrap();
        policy_table(&policy).write(&path).unwrap();
        let back = read_policy(&path, &policy_meta(&policy, None)).unwrap();
        assert_eq!(back, policy);
    }

    #[test]
    fn svg_is_deterministic() {
        let s = vec![Series {
            name: "a<b".into(),
            points: vec![(1024.0, 0.1), (2048.0, 0.08)],
        }];
        let a = svg_line_chart(&s, "t", "x", "y", true);
        assert_eq!(a, svg_line_chart(&s, "t", "x", "y", true));
        assert!(a.starts_with("<svg") && a.contains("a&lt;b"));
    }
}
