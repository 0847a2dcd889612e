//! CSV and SVG rendering.
//!
//! Every CSV has a header row and uses Rust's shortest round-trip float
//! formatting, so identical results always produce identical bytes.
//! Values that do not apply to a row are left empty.

use std::fmt::Write as _;

use serde::Serialize;

use super::{ConvergenceTrace, EveSweepPoint, PmaxSweepPoint, ScenarioReport, SpectrumMap};
use crate::numerics::ComplexMatrix;
use crate::stage1::BcdTracePoint;
use crate::stage2::HybridResult;

fn opt(value: f64) -> String {
    if value.is_nan() {
        String::new()
    } else {
        value.to_string()
    }
}

/// Row-major `row,col,re,im` listing of a complex matrix.
pub fn matrix_csv(m: &ComplexMatrix) -> String {
    let mut out = String::from("row,col,re,im\n");
    for r in 0..m.nrows() {
        for c in 0..m.ncols() {
            let z = m[(r, c)];
            writeln!(out, "{r},{c},{},{}", z.re, z.im).unwrap();
        }
    }
    out
}

/// Columns: `iteration,c_s_bits,surrogate_nats,mu,power_watts`.
pub fn bcd_trace_csv(trace: &[BcdTracePoint]) -> String {
    let mut out = String::from("iteration,c_s_bits,surrogate_nats,mu,power_watts\n");
    for t in trace {
        writeln!(out, "{},{},{},{},{}", t.iteration, t.c_s, t.surrogate, opt(t.mu), t.power).unwrap();
    }
    out
}

#[derive(Serialize)]
struct BeamformerMetadata {
    tx_antennas: usize,
    rf_chains: usize,
    streams: usize,
    residual: f64,
    iterations: usize,
    converged: bool,
    rescale_factor: f64,
}

/// JSON record describing a hybrid design.
pub fn hybrid_metadata_json(result: &HybridResult) -> String {
    let p = &result.beamformer.p;
    let meta = BeamformerMetadata {
        tx_antennas: p.nrows(),
        rf_chains: p.ncols(),
        streams: result.beamformer.w.ncols(),
        residual: result.residual(),
        iterations: result.iterations(),
        converged: result.converged,
        rescale_factor: result.rescale_factor,
    };
    let mut text = serde_json::to_string_pretty(&meta).expect("metadata serializes");
    text.push('\n');
    text
}

/// Columns: `variant,mean_c_s_bits,std_c_s_bits,mean_c_u_bits,mean_c_e_bits,max_power_watts,nonconverged,trials`.
pub fn scenario_summary_csv(report: &ScenarioReport) -> String {
    let mut out = String::from(
        "variant,mean_c_s_bits,std_c_s_bits,mean_c_u_bits,mean_c_e_bits,max_power_watts,nonconverged,trials\n",
    );
    for (name, s) in [("fully_digital", &report.fully_digital), ("hybrid", &report.hybrid)] {
        writeln!(
            out,
            "{name},{},{},{},{},{},{},{}",
            s.mean_c_s,
            s.std_c_s,
            s.mean_c_u,
            s.mean_c_e,
            s.max_power,
            s.nonconverged,
            report.trials.len()
        )
        .unwrap();
    }
    out
}

/// One row per trial. Columns:
/// `trial,fd_c_u_bits,fd_c_e_bits,fd_c_s_bits,fd_power_watts,bcd_iterations,bcd_converged,hybrid_c_u_bits,hybrid_c_e_bits,hybrid_c_s_bits,hybrid_power_watts,ao_iterations,ao_converged,beam_similarity`.
pub fn scenario_trials_csv(report: &ScenarioReport) -> String {
    let mut out = String::from(
        "trial,fd_c_u_bits,fd_c_e_bits,fd_c_s_bits,fd_power_watts,bcd_iterations,bcd_converged,\
         hybrid_c_u_bits,hybrid_c_e_bits,hybrid_c_s_bits,hybrid_power_watts,ao_iterations,ao_converged,beam_similarity\n",
    );
    for t in &report.trials {
        writeln!(
            out,
            "{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
            t.trial,
            t.fully_digital.c_u,
            t.fully_digital.c_e,
            t.fully_digital.c_s,
            t.fully_digital.transmit_power,
            t.fd.iterations(),
            t.fd.converged,
            t.hybrid.c_u,
            t.hybrid.c_e,
            t.hybrid.c_s,
            t.hybrid.transmit_power,
            t.ao.iterations(),
            t.ao.converged,
            t.ao.residual(),
        )
        .unwrap();
    }
    out
}

/// Columns: `p_max_dbm,fd_mean_c_s_bits,fd_std_c_s_bits,hybrid_mean_c_s_bits,hybrid_std_c_s_bits`.
pub fn pmax_sweep_csv(points: &[PmaxSweepPoint]) -> String {
    let mut out =
        String::from("p_max_dbm,fd_mean_c_s_bits,fd_std_c_s_bits,hybrid_mean_c_s_bits,hybrid_std_c_s_bits\n");
    for p in points {
        let r = &p.report;
        writeln!(
            out,
            "{},{},{},{},{}",
            p.p_max_dbm, r.fully_digital.mean_c_s, r.fully_digital.std_c_s, r.hybrid.mean_c_s, r.hybrid.std_c_s
        )
        .unwrap();
    }
    out
}

/// Columns: `model,e_distance_m,e_angle_deg,fd_mean_c_s_bits,fd_std_c_s_bits,hybrid_mean_c_s_bits,hybrid_std_c_s_bits`.
pub fn eve_sweep_csv(points: &[EveSweepPoint]) -> String {
    let mut out = String::from(
        "model,e_distance_m,e_angle_deg,fd_mean_c_s_bits,fd_std_c_s_bits,hybrid_mean_c_s_bits,hybrid_std_c_s_bits\n",
    );
    for p in points {
        let r = &p.report;
        let model = match p.model {
            crate::channel::ChannelModel::Near => "near",
            crate::channel::ChannelModel::Far => "far",
        };
        writeln!(
            out,
            "{model},{},{},{},{},{},{}",
            p.location.distance,
            p.location.azimuth.to_degrees(),
            r.fully_digital.mean_c_s,
            r.fully_digital.std_c_s,
            r.hybrid.mean_c_s,
            r.hybrid.std_c_s
        )
        .unwrap();
    }
    out
}

/// Columns: `distance_m,angle_deg,normalized_power`, distance-major.
pub fn spectrum_csv(map: &SpectrumMap) -> String {
    let mut out = String::from("distance_m,angle_deg,normalized_power\n");
    for p in &map.points {
        writeln!(out, "{},{},{}", p.location.distance, p.location.azimuth.to_degrees(), p.power).unwrap();
    }
    out
}

/// Columns: `stage,iteration,c_s_bits,beam_similarity`. BCD rows have no
/// beam similarity; AO rows have no secrecy value in residual mode.
pub fn convergence_csv(trace: &ConvergenceTrace) -> String {
    let mut out = String::from("stage,iteration,c_s_bits,beam_similarity\n");
    for t in &trace.fd.trace {
        writeln!(out, "bcd,{},{},", t.iteration, t.c_s).unwrap();
    }
    for t in &trace.ao.trace {
        writeln!(out, "ao,{},{},{}", t.iteration, opt(t.c_s), t.residual).unwrap();
    }
    out
}

/// Maps `t ∈ [0, 1]` to a dark-blue → yellow ramp.
fn heat_color(t: f64) -> String {
    let t = t.clamp(0.0, 1.0);
    let stops = [(0.0, [13, 8, 135]), (0.5, [204, 71, 120]), (1.0, [240, 249, 33])];
    let (lo, hi) = if t <= 0.5 { (stops[0], stops[1]) } else { (stops[1], stops[2]) };
    let u = (t - lo.0) / (hi.0 - lo.0);
    let c: Vec<u8> = (0..3)
        .map(|k| (lo.1[k] as f64 + u * (hi.1[k] as f64 - lo.1[k] as f64)).round() as u8)
        .collect();
    format!("#{:02x}{:02x}{:02x}", c[0], c[1], c[2])
}

/// Heatmap of the spectrum in dB (floor −40 dB), angle on x, distance on y.
pub fn spectrum_svg(map: &SpectrumMap) -> String {
    const CELL: f64 = 6.0;
    const MARGIN: f64 = 50.0;
    const FLOOR_DB: f64 = -40.0;
    let (nd, na) = (map.distances.len(), map.angles_deg.len());
    let width = MARGIN * 2.0 + CELL * na as f64;
    let height = MARGIN * 2.0 + CELL * nd as f64;
    let mut svg = String::new();
    writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" viewBox="0 0 {width} {height}">"#
    )
    .unwrap();
    writeln!(svg, r#"<rect width="100%" height="100%" fill="white"/>"#).unwrap();
    for (di, _) in map.distances.iter().enumerate() {
        for (ai, _) in map.angles_deg.iter().enumerate() {
            let power = map.points[di * na + ai].power;
            let db = if power > 0.0 { 10.0 * power.log10() } else { FLOOR_DB };
            let t = (db.max(FLOOR_DB) - FLOOR_DB) / -FLOOR_DB;
            // largest distance at the top
            let y = MARGIN + CELL * (nd - 1 - di) as f64;
            let x = MARGIN + CELL * ai as f64;
            writeln!(
                svg,
                r#"<rect x="{x}" y="{y}" width="{CELL}" height="{CELL}" fill="{}"/>"#,
                heat_color(t)
            )
            .unwrap();
        }
    }
    let axis = |v: &[f64]| (v.first().copied().unwrap_or(0.0), v.last().copied().unwrap_or(0.0));
    let (a0, a1) = axis(&map.angles_deg);
    let (d0, d1) = axis(&map.distances);
    writeln!(
        svg,
        r#"<text x="{}" y="{}" font-size="12" text-anchor="middle">angle {a0}° to {a1}°</text>"#,
        width / 2.0,
        height - MARGIN / 3.0
    )
    .unwrap();
    writeln!(
        svg,
        r#"<text x="12" y="{}" font-size="12" transform="rotate(-90 12 {})" text-anchor="middle">distance {d0} m to {d1} m</text>"#,
        height / 2.0,
        height / 2.0
    )
    .unwrap();
    svg.push_str("</svg>\n");
    svg
}

/// Line plot of one or more series sharing an x axis.
pub fn line_svg(title: &str, x_label: &str, y_label: &str, x: &[f64], series: &[(&str, Vec<f64>)]) -> String {
    const W: f64 = 480.0;
    const H: f64 = 320.0;
    const M: f64 = 50.0;
    const COLORS: [&str; 4] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd"];
    let finite = |v: &f64| v.is_finite();
    let (x0, x1) = bounds(x.iter().copied().filter(finite));
    let (y0, y1) = bounds(series.iter().flat_map(|(_, ys)| ys.iter().copied().filter(finite)));
    let sx = |v: f64| M + (v - x0) / (x1 - x0) * (W - 2.0 * M);
    let sy = |v: f64| H - M - (v - y0) / (y1 - y0) * (H - 2.0 * M);
    let mut svg = String::new();
    writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}">"#
    )
    .unwrap();
    writeln!(svg, r#"<rect width="100%" height="100%" fill="white"/>"#).unwrap();
    writeln!(
        svg,
        r#"<path d="M{M} {} H{} M{M} {} V{M}" stroke="black" fill="none"/>"#,
        H - M,
        W - M,
        H - M
    )
    .unwrap();
    writeln!(svg, r#"<text x="{}" y="20" font-size="14" text-anchor="middle">{title}</text>"#, W / 2.0).unwrap();
    writeln!(
        svg,
        r#"<text x="{}" y="{}" font-size="12" text-anchor="middle">{x_label} [{x0}, {x1}]</text>"#,
        W / 2.0,
        H - 12.0
    )
    .unwrap();
    writeln!(
        svg,
        r#"<text x="14" y="{}" font-size="12" transform="rotate(-90 14 {})" text-anchor="middle">{y_label} [{y0:.3}, {y1:.3}]</text>"#,
        H / 2.0,
        H / 2.0
    )
    .unwrap();
    for (k, (name, ys)) in series.iter().enumerate() {
        let color = COLORS[k % COLORS.len()];
        let points: Vec<String> = x
            .iter()
            .zip(ys)
            .filter(|(a, b)| a.is_finite() && b.is_finite())
            .map(|(&a, &b)| format!("{:.2},{:.2}", sx(a), sy(b)))
            .collect();
        writeln!(
            svg,
            r#"<polyline points="{}" stroke="{color}" fill="none" stroke-width="1.5"/>"#,
            points.join(" ")
        )
        .unwrap();
        writeln!(
            svg,
            r#"<text x="{}" y="{}" font-size="11" fill="{color}">{name}</text>"#,
            W - M - 90.0,
            M + 14.0 * k as f64
        )
        .unwrap();
    }
    svg.push_str("</svg>\n");
    svg
}

fn bounds(values: impl Iterator<Item = f64>) -> (f64, f64) {
    let (lo, hi) = values.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v), hi.max(v)));
    if !lo.is_finite() {
        (0.0, 1.0)
    } else if hi - lo <= 0.0 {
        (lo - 0.5, hi + 0.5)
    } else {
        (lo, hi)
    }
}
