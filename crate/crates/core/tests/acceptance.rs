//! Acceptance run: one PASS/FAIL line per property, then a non-zero exit
//! if any failed. Values the library computes are compared against oracles
//! written here where one exists.

use std::f64::consts::TAU;
use std::process::ExitCode;
use std::time::Instant;

use num_complex::Complex64;
use ruelle::escape::{EscapeFunction, OrderParams};
use ruelle::harness::campaign::{default_campaign, Campaign, CheckId, CheckOutcome};
use ruelle::model::{CatMap, MappingTorusFlow, TimeChange};
use ruelle::operator::{apply_weight, neutral_generator, sector_spectrum};

struct Line {
    label: &'static str,
    ok: bool,
    seconds: f64,
    detail: String,
}

fn from_outcome(label: &'static str, o: &CheckOutcome, limit: Option<f64>) -> Line {
    let mut ok = o.passed;
    let mut detail = o.details().trim_start().to_string();
    if let Some(l) = limit {
        if o.seconds >= l {
            ok = false;
            detail.push_str(&format!(" [runtime {:.1} s over {l} s]", o.seconds));
        }
    }
    Line {
        label,
        ok,
        seconds: o.seconds,
        detail,
    }
}

/// Sorted neutral eigenvalues (with multiplicity) for `c`, weights from
/// `params`.
fn neutral_values(tc: TimeChange, params: OrderParams, j_max: u32) -> Vec<Complex64> {
    let flow = MappingTorusFlow::new(CatMap::standard(), tc).unwrap();
    let base = flow.point([0.3, 0.6], 0.25);
    let e = EscapeFunction::new(flow.clone(), params).unwrap();
    let w = apply_weight(&neutral_generator(&flow, j_max), &e, 0.1, &base).unwrap();
    let mut v: Vec<Complex64> = sector_spectrum(&w)
        .unwrap()
        .iter()
        .flat_map(|s| std::iter::repeat_n(s.value, s.multiplicity))
        .collect();
    v.sort_by(|a, b| a.re.total_cmp(&b.re));
    v
}

fn algebraic_oracle() -> Line {
    let t0 = Instant::now();
    let j = 40u32;
    let mut worst: f64 = 0.0;
    let sets = [
        OrderParams::default(),
        OrderParams {
            u: -6.0,
            s: 12.0,
            t_avg: 5.0,
            aperture: 0.2,
            ..OrderParams::default()
        },
        OrderParams {
            u: -20.0,
            n0: 1.0,
            s: 3.0,
            symmetric: false,
            ..OrderParams::default()
        },
    ];
    for p in sets {
        let v = neutral_values(TimeChange::constant(1.0), p, j);
        assert_eq!(v.len(), 2 * j as usize + 1);
        for (k, x) in (-(j as i64)..=j as i64).zip(&v) {
            worst = worst.max((x - TAU * k as f64).norm());
        }
    }
    let seconds = t0.elapsed().as_secs_f64();
    Line {
        label: "neutral spectrum with c = 1 equals 2 pi j",
        ok: worst < 1e-8 && seconds < 5.0,
        seconds,
        detail: format!("max error {worst:.3e} over three weight sets"),
    }
}

fn time_change_oracle() -> Line {
    let t0 = Instant::now();
    // Trapezoid rule on a periodic analytic integrand converges
    // geometrically; 4096 nodes are far past machine precision.
    let n = 4096;
    let period: f64 = (0..n)
        .map(|i| 1.0 / (1.0 + 0.2 * (TAU * i as f64 / n as f64).cos()))
        .sum::<f64>()
        / n as f64;
    let closed = 1.0 / 0.96f64.sqrt();
    let j = 48u32;
    let v = neutral_values(TimeChange::cosine(1.0, 0.2), OrderParams::default(), j);
    let mut worst: f64 = 0.0;
    for k in -(j as i64 / 2)..=(j as i64 / 2) {
        let target = TAU * k as f64 / period;
        let d = v.iter().map(|x| (x - target).norm()).fold(f64::INFINITY, f64::min);
        worst = worst.max(d);
    }
    Line {
        label: "time-changed neutral spectrum equals 2 pi j / T",
        ok: worst < 1e-7 && (period - closed).abs() < 1e-14,
        seconds: t0.elapsed().as_secs_f64(),
        detail: format!("T = {period:.15} (closed form {closed:.15}), max error {worst:.3e} for |j| <= {}", j / 2),
    }
}

fn main() -> ExitCode {
    let c: Campaign = default_campaign();
    let lines = vec![
        from_outcome("escape estimates", &c.check(CheckId::EscapeEstimates), Some(60.0)),
        algebraic_oracle(),
        time_change_oracle(),
        from_outcome("no resonances in the upper half-plane", &c.check(CheckId::UpperHalfPlane), None),
        from_outcome("spectrum symmetric under l -> -conj(l)", &c.check(CheckId::Symmetry), None),
        from_outcome("spectrum independent of the escape function", &c.check(CheckId::IntrinsicSpectrum), None),
        from_outcome("Weyl inequalities", &c.check(CheckId::WeylInequalities), None),
        from_outcome("IMS residual scales like h^2", &c.check(CheckId::ImsScaling), None),
        from_outcome("coherent-state symbol error vanishes with h", &c.check(CheckId::CoherentSymbol), None),
        from_outcome("counting exponent", &c.check(CheckId::CountingStudy), Some(1800.0)),
    ];

    let mut failed = 0;
    for (i, l) in lines.iter().enumerate() {
        println!(
            "{} {:>2} {} ({:.2} s): {}",
            if l.ok { "PASS" } else { "FAIL" },
            i + 1,
            l.label,
            l.seconds,
            l.detail
        );
        failed += usize::from(!l.ok);
    }
    println!("{} of {} passed", lines.len() - failed, lines.len());
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
