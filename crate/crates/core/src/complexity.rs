//! Parameter and multiply-accumulate accounting for a resolved layer graph.
//!
//! Counting convention: one MAC is one multiply-accumulate inside a
//! convolution kernel, i.e. `out_positions * kh * kw * in_ch / groups` per
//! output channel. Batch norm is assumed folded into the preceding
//! convolution, and pooling, ReLU, dropout and softmax are free. MACs are
//! reported per reference window (1.28 s by default) and per second.

use std::fmt::Write as _;

use crate::builder::{build, ConvType, LayerGraph, LayerSpec, NetworkConfig, Stage, WidthMultiplier};
use crate::error::Result;

pub const REFERENCE_WINDOW_SECONDS: f64 = 1.28;

pub const MAC_CONVENTION: &str = "1 MAC = 1 multiply-accumulate in a conv kernel; BN folded; pool/ReLU/softmax free; \
MMACS per 1.28 s reference window";

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LayerCost {
    /// Architecture-level layer name, e.g. `Conv4` (covers its BN/ReLU nodes).
    pub name: String,
    pub stage: Stage,
    pub params: u64,
    pub macs: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ComplexityReport {
    pub config: NetworkConfig,
    pub window_seconds: f64,
    pub input_len: usize,
    pub rows: Vec<LayerCost>,
}

impl ComplexityReport {
    fn sum(&self, stage: Option<Stage>, f: impl Fn(&LayerCost) -> u64) -> u64 {
        self.rows
            .iter()
            .filter(|r| stage.is_none_or(|s| r.stage == s))
            .map(f)
            .sum()
    }

    pub fn llf_params(&self) -> u64 {
        self.sum(Some(Stage::Llf), |r| r.params)
    }

    pub fn hlf_params(&self) -> u64 {
        self.sum(Some(Stage::Hlf), |r| r.params)
    }

    pub fn total_params(&self) -> u64 {
        self.sum(None, |r| r.params)
    }

    pub fn llf_macs(&self) -> u64 {
        self.sum(Some(Stage::Llf), |r| r.macs)
    }

    pub fn hlf_macs(&self) -> u64 {
        self.sum(Some(Stage::Hlf), |r| r.macs)
    }

    pub fn total_macs(&self) -> u64 {
        self.sum(None, |r| r.macs)
    }

    /// Millions of MACs per reference window.
    pub fn mmacs(macs: u64) -> f64 {
        macs as f64 / 1e6
    }

    pub fn total_mmacs_per_second(&self) -> f64 {
        Self::mmacs(self.total_macs()) / self.window_seconds
    }
}

fn node_params(spec: &LayerSpec) -> u64 {
    match spec {
        LayerSpec::Conv1d(s) => s.param_count() as u64,
        LayerSpec::Conv2d(s) => s.param_count() as u64,
        LayerSpec::BatchNorm(s) => s.param_count() as u64,
        _ => 0,
    }
}

fn node_macs(spec: &LayerSpec, out_dims: &[usize]) -> u64 {
    let positions = |d: &[usize]| (d[1] * d[2]) as u64;
    match spec {
        LayerSpec::Conv1d(s) => {
            positions(out_dims) * s.out_ch as u64 * s.kernel as u64 * (s.in_ch / s.groups) as u64
        }
        LayerSpec::Conv2d(s) => {
            positions(out_dims)
                * s.out_ch as u64
                * (s.kernel_h * s.kernel_w) as u64
                * (s.in_ch / s.groups) as u64
        }
        _ => 0,
    }
}

/// Per-layer parameter counts (graph order) and their total.
pub fn count_params(graph: &LayerGraph) -> (Vec<(String, u64)>, u64) {
    let rows = group(graph, |n| node_params(&n.spec));
    let total = rows.iter().map(|r| r.1).sum();
    (rows, total)
}

/// Per-layer MACs for the graph's input length, and their total.
pub fn count_macs(graph: &LayerGraph) -> (Vec<(String, u64)>, u64) {
    let rows = group(graph, |n| node_macs(&n.spec, n.output.dims()));
    let total = rows.iter().map(|r| r.1).sum();
    (rows, total)
}

fn group(graph: &LayerGraph, f: impl Fn(&crate::builder::LayerNode) -> u64) -> Vec<(String, u64)> {
    let mut rows: Vec<(String, u64)> = Vec::new();
    for n in &graph.nodes {
        let v = f(n);
        match rows.last_mut() {
            Some((name, acc)) if name == n.layer_name() => *acc += v,
            _ => rows.push((n.layer_name().to_string(), v)),
        }
    }
    rows
}

pub fn analyze(config: &NetworkConfig, window_seconds: f64) -> Result<ComplexityReport> {
    let input_len = (config.sample_rate as f64 * window_seconds).round() as usize;
    let graph = build(config, input_len)?;
    let mut rows: Vec<LayerCost> = Vec::new();
    for n in &graph.nodes {
        let (p, m) = (node_params(&n.spec), node_macs(&n.spec, n.output.dims()));
        match rows.last_mut() {
            Some(r) if r.name == n.layer_name() => {
                r.params += p;
                r.macs += m;
            }
            _ => rows.push(LayerCost {
                name: n.layer_name().to_string(),
                stage: n.stage,
                params: p,
                macs: m,
            }),
        }
    }
    Ok(ComplexityReport {
        config: config.clone(),
        window_seconds,
        input_len,
        rows,
    })
}

pub fn sweep(configs: &[NetworkConfig], window_seconds: f64) -> Result<Vec<ComplexityReport>> {
    configs.iter().map(|c| analyze(c, window_seconds)).collect()
}

/// Width multipliers of the accuracy-versus-complexity sweep.
pub const SWEEP_WIDTHS: [(u32, u32); 9] = [
    (1, 32),
    (1, 16),
    (1, 8),
    (1, 4),
    (1, 2),
    (3, 4),
    (1, 1),
    (3, 2),
    (2, 1),
];

/// Configuration families of the sweep: (rate, block form).
pub const SWEEP_FAMILIES: [(u32, ConvType); 3] = [
    (16_000, ConvType::Separable),
    (44_100, ConvType::Separable),
    (44_100, ConvType::Standard),
];

pub fn sweep_grid() -> Vec<NetworkConfig> {
    SWEEP_FAMILIES
        .iter()
        .flat_map(|&(rate, ct)| {
            SWEEP_WIDTHS.iter().map(move |&(n, d)| {
                NetworkConfig::new(rate, ct, WidthMultiplier::new(n, d).expect("nonzero"))
            })
        })
        .collect()
}

/// One published complexity row. Values are kept as printed so their
/// precision (decimal places) is known.
#[derive(Debug, Clone, Copy)]
pub struct PublishedRow {
    pub sample_rate: u32,
    pub conv_type: ConvType,
    pub width: (u32, u32),
    pub llf_params_k: &'static str,
    pub llf_mmacs: f64,
    pub hlf_params_k: &'static str,
    pub hlf_mmacs: f64,
    pub total_params_k: &'static str,
    pub total_mmacs: f64,
}

impl PublishedRow {
    pub fn config(&self) -> NetworkConfig {
        NetworkConfig::new(
            self.sample_rate,
            self.conv_type,
            WidthMultiplier::new(self.width.0, self.width.1).expect("nonzero"),
        )
    }
}

const fn row(
    sample_rate: u32,
    conv_type: ConvType,
    width: (u32, u32),
    p: [&'static str; 3],
    m: [f64; 3],
) -> PublishedRow {
    PublishedRow {
        sample_rate,
        conv_type,
        width,
        llf_params_k: p[0],
        llf_mmacs: m[0],
        hlf_params_k: p[1],
        hlf_mmacs: m[1],
        total_params_k: p[2],
        total_mmacs: m[2],
    }
}

use ConvType::{Separable as DW, Standard as SC};

/// Reference parameter counts (thousands) and MMACS of ten configurations.
pub const PUBLISHED: [PublishedRow; 10] = [
    row(16_000, DW, (1, 8), ["1.44", "13.91", "15.35"], [4.35, 2.93, 7.28]),
    row(16_000, DW, (1, 2), ["1.44", "153.43", "154.87"], [4.35, 31.07, 35.42]),
    row(16_000, DW, (1, 1), ["1.44", "567.92", "569.4"], [4.35, 113.7, 118.1]),
    row(44_100, DW, (1, 8), ["1.81", "13.91", "15.72"], [17.98, 2.96, 20.94]),
    row(44_100, DW, (1, 2), ["1.81", "153.43", "155.23"], [17.98, 31.33, 49.31]),
    row(44_100, DW, (1, 1), ["1.81", "567.92", "569.73"], [17.98, 114.6, 132.59]),
    row(44_100, SC, (1, 8), ["6.99", "77.21", "84.21"], [80.9, 8.88, 131.17]),
    row(44_100, SC, (1, 2), ["6.99", "1190.0", "1197.0"], [80.9, 132.72, 255.01]),
    row(44_100, SC, (1, 1), ["6.99", "4730.0", "4737.0"], [80.9, 524.67, 646.97]),
    row(44_100, SC, (3, 2), ["6.99", "10620", "10627"], [80.9, 786.56, 867.45]),
];

/// Whether `count` parameters round to the printed thousands value at the
/// printed precision.
pub fn matches_printed_k(count: u64, printed: &str) -> bool {
    let decimals = printed.split_once('.').map_or(0, |(_, f)| f.len());
    let want: f64 = printed.parse().expect("published values parse");
    let ours = format!("{:.*}", decimals, count as f64 / 1000.0);
    ours.parse::<f64>().expect("formatted float parses") == want
}

#[derive(Debug, Clone)]
pub struct PublishedComparison {
    pub row: PublishedRow,
    pub report: ComplexityReport,
    pub params_match: [bool; 3],
    /// ours / published for LLF, HLF, total MMACS.
    pub mmacs_ratio: [f64; 3],
}

impl PublishedComparison {
    pub fn params_ok(&self) -> bool {
        self.params_match.iter().all(|&b| b)
    }

    /// Largest factor by which any MMACS column deviates, `max(r, 1/r)`.
    pub fn worst_mmacs_factor(&self) -> f64 {
        self.mmacs_ratio
            .iter()
            .map(|&r| r.max(1.0 / r))
            .fold(1.0, f64::max)
    }
}

pub fn compare_published() -> Result<Vec<PublishedComparison>> {
    PUBLISHED
        .iter()
        .map(|row| {
            let report = analyze(&row.config(), REFERENCE_WINDOW_SECONDS)?;
            let params_match = [
                matches_printed_k(report.llf_params(), row.llf_params_k),
                matches_printed_k(report.hlf_params(), row.hlf_params_k),
                matches_printed_k(report.total_params(), row.total_params_k),
            ];
            let mmacs_ratio = [
                ComplexityReport::mmacs(report.llf_macs()) / row.llf_mmacs,
                ComplexityReport::mmacs(report.hlf_macs()) / row.hlf_mmacs,
                ComplexityReport::mmacs(report.total_macs()) / row.total_mmacs,
            ];
            Ok(PublishedComparison {
                row: *row,
                report,
                params_match,
                mmacs_ratio,
            })
        })
        .collect()
}

pub const CSV_HEADER: &str =
    "config,llf_params,llf_mmacs,hlf_params,hlf_mmacs,total_params,total_mmacs,width_multiplier";

pub fn to_csv(reports: &[ComplexityReport]) -> String {
    let mut out = String::from(CSV_HEADER);
    out.push('\n');
    for r in reports {
        let _ = writeln!(
            out,
            "{},{},{:.2},{},{:.2},{},{:.2},{}",
            r.config.label(),
            r.llf_params(),
            ComplexityReport::mmacs(r.llf_macs()),
            r.hlf_params(),
            ComplexityReport::mmacs(r.hlf_macs()),
            r.total_params(),
            ComplexityReport::mmacs(r.total_macs()),
            r.config.width_multiplier,
        );
    }
    out
}

pub fn to_table(reports: &[ComplexityReport]) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "# {MAC_CONVENTION}");
    let _ = writeln!(
        out,
        "{:<10} {:>8} {:>11} {:>10} {:>11} {:>10} {:>11} {:>11} {:>10}",
        "config", "wm", "llf_params", "llf_mmacs", "hlf_params", "hlf_mmacs", "total_params", "total_mmacs", "mmacs/s"
    );
    for r in reports {
        let _ = writeln!(
            out,
            "{:<10} {:>8} {:>11} {:>10.2} {:>11} {:>10.2} {:>11} {:>11.2} {:>10.2}",
            r.config.label(),
            r.config.width_multiplier.to_string(),
            r.llf_params(),
            ComplexityReport::mmacs(r.llf_macs()),
            r.hlf_params(),
            ComplexityReport::mmacs(r.hlf_macs()),
            r.total_params(),
            ComplexityReport::mmacs(r.total_macs()),
            r.total_mmacs_per_second(),
        );
    }
    out
}

/// Side-by-side view of computed and published values with per-row
/// deviation flags.
pub fn published_table(rows: &[PublishedComparison]) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "# {MAC_CONVENTION}");
    let _ = writeln!(
        out,
        "{:<10} {:>6} {:>16} {:>18} {:>18} {:>22} {:>6}",
        "config", "wm", "llf_k ours/pub", "hlf_k ours/pub", "total_k ours/pub", "mmacs ratio l/h/t", "flag"
    );
    for c in rows {
        let r = &c.report;
        let k = |v: u64| format!("{:.2}", v as f64 / 1000.0);
        let flag = if !c.params_ok() {
            "PARAMS"
        } else if c.worst_mmacs_factor() > 2.0 {
            ">2x"
        } else if c.worst_mmacs_factor() > 1.25 {
            "~"
        } else {
            "ok"
        };
        let _ = writeln!(
            out,
            "{:<10} {:>6} {:>16} {:>18} {:>18} {:>22} {:>6}",
            r.config.label(),
            r.config.width_multiplier.to_string(),
            format!("{}/{}", k(r.llf_params()), c.row.llf_params_k),
            format!("{}/{}", k(r.hlf_params()), c.row.hlf_params_k),
            format!("{}/{}", k(r.total_params()), c.row.total_params_k),
            format!(
                "{:.2}/{:.2}/{:.2}",
                c.mmacs_ratio[0], c.mmacs_ratio[1], c.mmacs_ratio[2]
            ),
            flag,
        );
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::builder::{init_weights, WeightSet};
    use proptest::prelude::*;

    fn cfg(rate: u32, ct: ConvType, wm: &str) -> NetworkConfig {
        NetworkConfig::new(rate, ct, wm.parse().unwrap())
    }

    #[test]
    fn llf_16k_dwsc_params_breakdown() {
        let g = build(&cfg(16_000, DW, "1"), 20_480).unwrap();
        let (rows, _) = count_params(&g);
        let get = |n: &str| rows.iter().find(|r| r.0 == n).unwrap().1;
        assert_eq!(get("Conv1"), 144 + 32);
        assert_eq!(get("Conv2"), 80 + 32 + 1024 + 128);
        let r = analyze(&cfg(16_000, DW, "1"), REFERENCE_WINDOW_SECONDS).unwrap();
        assert_eq!(r.llf_params(), 1440);
    }

    /// Independent hand sum of the 2-D stack: standard blocks cost
    /// `9*cin*cout + 2*cout`, separable `9*cin + 2*cin + cin*cout + 2*cout`.
    fn hand_hlf_params(wm: &str, form: ConvType) -> u64 {
        let w: WidthMultiplier = wm.parse().unwrap();
        let ch: Vec<u64> = [32u64, 64, 64, 128, 128, 256, 256, 512, 512]
            .iter()
            .map(|&c| w.apply(c as usize) as u64)
            .collect();
        let mut total = 9 * ch[0] + 2 * ch[0];
        for i in 1..9 {
            let (cin, cout) = (ch[i - 1], ch[i]);
            total += match form {
                SC => 9 * cin * cout + 2 * cout,
                DW => 9 * cin + 2 * cin + cin * cout + 2 * cout,
            };
        }
        total + ch[8] * 50 + 50
    }

    #[test]
    fn hlf_params_match_hand_sums() {
        for (wm, form, want) in [
            ("0.125", DW, 13_914),
            ("1", DW, 567_922),
            ("1", SC, 4_730_002),
            ("0.125", SC, 77_214),
        ] {
            let r = analyze(&cfg(44_100, form, wm), REFERENCE_WINDOW_SECONDS).unwrap();
            assert_eq!(hand_hlf_params(wm, form), want);
            assert_eq!(r.hlf_params(), want, "{wm} {form}");
        }
    }

    #[test]
    fn llf_44k_params() {
        let r = analyze(&cfg(44_100, DW, "1"), REFERENCE_WINDOW_SECONDS).unwrap();
        assert_eq!(r.llf_params(), 1808);
        let r = analyze(&cfg(44_100, SC, "1"), REFERENCE_WINDOW_SECONDS).unwrap();
        assert_eq!(r.llf_params(), 8 * 24 + 16 + 8 * 64 * 13 + 128);
        assert_eq!(r.llf_params(), 6992);
    }

    #[test]
    fn llf_16k_dwsc_macs() {
        let g = build(&cfg(16_000, DW, "1"), 20_480).unwrap();
        let (rows, _) = count_macs(&g);
        let get = |n: &str| rows.iter().find(|r| r.0 == n).unwrap().1;
        assert_eq!(get("Conv1"), 1_474_560);
        assert_eq!(get("Conv2"), 204_800 + 2_621_440);
        let r = analyze(&cfg(16_000, DW, "1"), REFERENCE_WINDOW_SECONDS).unwrap();
        assert_eq!(r.llf_macs(), 4_300_800);
    }

    #[test]
    fn single_pointwise_macs() {
        let spec = crate::layers::Conv2dSpec::pointwise(2, 3);
        assert_eq!(node_macs(&LayerSpec::Conv2d(spec), &[3, 2, 2]), 24);
    }

    #[test]
    fn hlf_sc_macs_hand_sum() {
        // Table-2 output sizes at 128 frames, 9 MACs per tap
        let hw = [64 * 128u64, 32 * 64, 32 * 64, 16 * 32, 16 * 32, 8 * 16, 8 * 16, 4 * 8, 4 * 8];
        let ch = [1u64, 32, 64, 64, 128, 128, 256, 256, 512, 512];
        let mut want: u64 = (0..9).map(|i| hw[i] * ch[i] * ch[i + 1] * 9).sum();
        want += 2 * 4 * 512 * 50;
        assert_eq!(want, 455_548_928);
        let r = analyze(&cfg(44_100, SC, "1"), REFERENCE_WINDOW_SECONDS).unwrap();
        assert_eq!(r.hlf_macs(), want);
    }

    #[test]
    fn published_params_reproduce() {
        for c in compare_published().unwrap() {
            assert!(c.params_ok(), "{:?} {:?}", c.row, c.params_match);
        }
    }

    #[test]
    fn sweep_rows_and_csv() {
        let grid = sweep_grid();
        assert_eq!(grid.len(), 27);
        assert!(sweep(&[], 1.28).unwrap().is_empty());
        let reports = sweep(&grid[..2], REFERENCE_WINDOW_SECONDS).unwrap();
        let csv = to_csv(&reports);
        let mut lines = csv.lines();
        assert_eq!(lines.next(), Some(CSV_HEADER));
        assert!(lines.next().unwrap().starts_with("16k-dwsc,1440,4.30,"));
        assert!(csv.lines().nth(1).unwrap().ends_with(",0.03125"));
    }

    #[test]
    fn row_specific_totals() {
        let r = analyze(&cfg(44_100, DW, "0.5"), REFERENCE_WINDOW_SECONDS).unwrap();
        assert!(matches_printed_k(r.total_params(), "155.23"));
        let r = analyze(&cfg(44_100, SC, "1.5"), REFERENCE_WINDOW_SECONDS).unwrap();
        assert!(matches_printed_k(r.total_params(), "10627"));
    }

    #[test]
    fn params_equal_flat_weight_length() {
        for c in sweep_grid().into_iter().step_by(4) {
            let g = build(&c, 44_100).unwrap();
            let w: WeightSet<f32> = init_weights(&g, 0);
            assert_eq!(count_params(&g).1, w.flat_len() as u64);
        }
    }

    #[test]
    fn separable_cheaper_per_layer() {
        let sc = analyze(&cfg(16_000, SC, "1"), 1.28).unwrap();
        let dw = analyze(&cfg(16_000, DW, "1"), 1.28).unwrap();
        for i in 4..=11 {
            let name = format!("Conv{i}");
            let m = |r: &ComplexityReport| r.rows.iter().find(|x| x.name == name).unwrap().macs;
            assert!(m(&dw) < m(&sc), "{name}");
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]
        #[test]
        fn params_independent_of_length_and_macs_scale(secs in 1u32..8, dw in any::<bool>(), rate44 in any::<bool>()) {
            let c = cfg(if rate44 { 44_100 } else { 16_000 }, if dw { DW } else { SC }, "0.25");
            let spf = build(&c, 20_000).unwrap().llf.samples_per_frame();
            // whole multiples of 64 frames so every pool divides evenly
            let len = spf * 64 * secs as usize;
            let a = build(&c, len).unwrap();
            let b = build(&c, 2 * len).unwrap();
            prop_assert_eq!(count_params(&a).1, count_params(&b).1);
            prop_assert_eq!(2 * count_macs(&a).1, count_macs(&b).1);
        }
    }
}
