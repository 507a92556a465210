//! End-to-end acceptance checks. Prints one PASS/FAIL line per criterion and
//! exits non-zero if any fails.

use std::fs;
use std::process::ExitCode;
use std::time::{Duration, Instant};

use dsbic_core::channel::{apply_cd, photodetect, FiberConfig};
use dsbic_core::dsbic::{
    cancel, evaluate_candidate, grid_search_tone, guard_band_kernel, multiplication_count, reference_scoring_pass,
    Correction, DsbicConfig, Objective, Reference, Scorer, ToneGrid,
};
use dsbic_core::experiment::{run_scenario, run_sweep, write_run, write_sweep, Scenario, SweepAxis, SweepOptions, SweepSpec};
use dsbic_core::kk::{estimate_carrier, kk_reconstruct, CarrierEstimate, KkConfig, KkReceiver};
use dsbic_core::metrics::Crossing;
use dsbic_core::sigproc::ComplexSignal;
use dsbic_core::txchain::{build_frame, DitherTone, OfdmConfig};
use dsbic_core::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Outcome = Result<String, String>;

const FS: f64 = 64e9;

fn random_field(n: usize, seed: u64, scale: f64) -> ComplexSignal {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let s = (0..n)
        .map(|_| Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)) * scale)
        .collect();
    ComplexSignal::new(s, FS).unwrap()
}

fn err<E: std::fmt::Display>(e: E) -> String {
    e.to_string()
}

fn detection_expansion() -> Outcome {
    let n = 10_000;
    let e0 = 1.0;
    let es = random_field(n, 1, 0.4);
    let tone = DitherTone::new(0.08, 1.7e8, 0.9);
    let d: Vec<f64> = tone.carrier_wave(n, FS).map(|c| tone.amplitude * e0 * c).collect();
    let field = ComplexSignal::new(es.samples().iter().zip(&d).map(|(s, d)| s + e0 + d).collect(), FS).map_err(err)?;
    let i = photodetect(&field);
    let mut worst: f64 = 0.0;
    for k in 0..n {
        let s = es.samples()[k];
        let terms = e0 * e0 + s.norm_sqr() + 2.0 * e0 * s.re + 2.0 * d[k] * s.re + 2.0 * d[k] * e0 + d[k] * d[k];
        worst = worst.max((i.samples()[k] - terms).abs());
    }
    let detail = format!("max |I - six-term sum| = {worst:.2e} over {n} samples");
    if worst <= 1e-12 {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn oracle_cancellation() -> Outcome {
    let n = 10_000;
    let e0 = 1.0;
    let es = random_field(n, 2, 0.4);
    let tone = DitherTone::new(0.06, 2.9e8, 2.2);
    let m = tone.amplitude * e0;
    let d: Vec<f64> = tone.carrier_wave(n, FS).map(|c| m * c).collect();
    let ideal = photodetect(&ComplexSignal::new(es.samples().iter().map(|s| s + e0).collect(), FS).map_err(err)?);
    let dithered = photodetect(
        &ComplexSignal::new(es.samples().iter().zip(&d).map(|(s, d)| s + e0 + d).collect(), FS).map_err(err)?,
    );
    let corrected = cancel(&dithered, &es, CarrierEstimate { amplitude: e0 }, &[Correction { tone, alpha: 1.0 }])
        .map_err(err)?;
    let worst = corrected
        .samples()
        .iter()
        .zip(ideal.samples())
        .map(|(c, i)| (c - i).abs())
        .fold(0.0, f64::max);
    let detail = format!("max |corrected - ideal| = {worst:.3e}, bound m^2 = {:.3e}", m * m);
    if worst <= m * m + 1e-12 {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn kk_fidelity() -> Outcome {
    let s = Scenario {
        tones: vec![],
        dsbic: None,
        frames: 3,
        ..Scenario::default()
    };
    let r = run_scenario(&s).map_err(err)?;
    let p = r.plain_kk;
    let detail = format!(
        "CSPR {} dB: EVM {:.2} dB, {} errors in {} bits",
        s.cspr_db, p.evm.evm_db, p.ber.bit_errors, p.ber.bits_total
    );
    if p.evm.evm_db < -30.0 && p.ber.bit_errors == 0 && p.ber.bits_total >= 40_000 {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn iteration_saturation() -> Outcome {
    let mut s = Scenario::default();
    s.frames = 6;
    s.noise.snr_db = Some(31.0);
    s.dsbic.as_mut().unwrap().iterations = 4;
    let r = run_scenario(&s).map_err(err)?;
    let e: Vec<u64> = r.iteration_ber.iter().map(|b| b.bit_errors).collect();
    let bits = r.iteration_ber[0].bits_total;
    // two-sigma band for the difference of two binomial counts
    let band = 2.0 * ((e[2] + e[3]) as f64).max(1.0).sqrt();
    let detail = format!(
        "m = 5%, SNR 31 dB, {bits} bits: errors per iteration {e:?} (plain KK {}), |e4 - e3| band {band:.1}",
        r.plain_kk.ber.bit_errors
    );
    if e[0] > e[2] && (e[3] as f64 - e[2] as f64).abs() <= band {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn crossing_text(c: &Crossing) -> String {
    match c {
        Crossing::At(v) => format!("{v:.4}"),
        Crossing::BeforeFirst => "before first".into(),
        Crossing::NotReached => "not reached".into(),
    }
}

fn dither_tolerance() -> Outcome {
    let mut base = Scenario::default();
    base.noise.snr_db = Some(34.0);
    let values = vec![0.02, 0.04, 0.06, 0.08, 0.10, 0.12];
    let last = *values.last().unwrap();
    let spec = SweepSpec {
        base,
        axis: SweepAxis::DitherAmplitude,
        values,
    };
    let out = run_sweep(&spec, SweepOptions::default()).map_err(err)?;
    let c = out.summary.crossings.ok_or("no crossings")?;
    let dsbic = c.dsbic.ok_or("no dsbic curve")?;
    let plain = c.plain_kk.value().ok_or_else(|| format!("plain KK crossing {}", crossing_text(&c.plain_kk)))?;
    // a curve that never crosses tolerates at least the largest amplitude
    let with = match dsbic {
        Crossing::At(v) => v,
        Crossing::NotReached => last,
        Crossing::BeforeFirst => 0.0,
    };
    let bers: Vec<String> = out
        .summary
        .points
        .iter()
        .map(|p| format!("{}:{:.1e}/{:.1e}", p.value, p.plain_kk.ber, p.dsbic.map_or(f64::NAN, |d| d.ber)))
        .collect();
    let detail = format!(
        "SNR 34 dB, HD-FEC tolerance plain KK {plain:.4} vs DSBIC {} [{}]",
        crossing_text(&dsbic),
        bers.join(" ")
    );
    if with >= plain + 0.02 {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn sensitivity(fiber: Option<FiberConfig>) -> Result<(f64, f64), String> {
    let spec = SweepSpec {
        base: Scenario {
            fiber,
            ..Scenario::default()
        },
        axis: SweepAxis::SnrDb,
        values: vec![28.0, 30.0, 32.0, 34.0, 36.0],
    };
    let out = run_sweep(&spec, SweepOptions::default()).map_err(err)?;
    let c = out.summary.crossings.ok_or("no crossings")?;
    let plain = c.plain_kk.value().ok_or_else(|| format!("plain KK crossing {}", crossing_text(&c.plain_kk)))?;
    let d = c.dsbic.ok_or("no dsbic curve")?;
    let with = d.value().ok_or_else(|| format!("DSBIC crossing {}", crossing_text(&d)))?;
    Ok((plain, with))
}

fn sensitivity_gain() -> Outcome {
    let (p0, d0) = sensitivity(None)?;
    let (p80, d80) = sensitivity(Some(FiberConfig::default()))?;
    let detail = format!(
        "m = 5%: BtB {p0:.2} -> {d0:.2} dB SNR (gain {:.2}), 80 km {p80:.2} -> {d80:.2} dB SNR (gain {:.2})",
        p0 - d0,
        p80 - d80
    );
    if p0 - d0 >= 1.0 && p80 - d80 >= 1.0 {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn short_frame() -> OfdmConfig {
    OfdmConfig {
        fft_size: 512,
        start_bin: 8,
        n_bins: 158,
        cp_len: 16,
        training_symbols: 1,
        data_symbols: 1,
        ..OfdmConfig::default()
    }
}

fn planted_solution() -> Outcome {
    let cfg = short_frame();
    let n = cfg.frame_len();
    let f = 4.0 * FS / n as f64;
    let (m, th) = (0.1, 5.2);
    let tx = build_frame(&cfg, 9.0, &[DitherTone::new(m, f, th)], 1.0, &mut ChaCha8Rng::seed_from_u64(3))
        .map_err(err)?;
    let current = photodetect(&tx.field);
    let kk = KkConfig::default();
    let reference = Reference {
        symbols: tx.tx_symbols,
        bits: tx.tx_bits,
    };
    let scorer = Scorer::new(&cfg, &kk, Objective::TrainingError, Some(&reference));
    let carrier = estimate_carrier(&current).map_err(err)?;
    let es = kk_reconstruct(&current, &kk, carrier);
    let grid = ToneGrid::default();
    let found = grid_search_tone(&current, carrier, &es, f, &grid, &scorer).map_err(err)?;
    let mut rx = KkReceiver::new(n, &kk);
    let mut global = true;
    for i in 0..grid.len() {
        let (a, p) = grid.candidate(i);
        let v = evaluate_candidate(&mut rx, &current, carrier, &es, &DitherTone::new(a, f, p), &scorer).map_err(err)?;
        global &= found.objective <= v;
    }
    let detail = format!(
        "n = {n}: planted ({m}, {th}) found ({}, {}), global argmin on re-scan: {global}",
        found.amplitude, found.phase_rad
    );
    if (found.amplitude, found.phase_rad) == (m, th) && global {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn complexity() -> Outcome {
    let cfg = short_frame();
    let n = cfg.frame_len();
    let f = 4.0 * FS / n as f64;
    let es = random_field(n, 4, 0.3);
    let current = photodetect(&ComplexSignal::new(es.samples().iter().map(|s| s + 1.0).collect(), FS).map_err(err)?);
    let kernel = guard_band_kernel(n, FS, cfg.start_bin as f64 * cfg.bin_spacing());
    let grid = ToneGrid::default();
    let (_, tally) =
        reference_scoring_pass(&current, CarrierEstimate { amplitude: 1.0 }, &es, f, &grid, &kernel).map_err(err)?;
    let dcfg = DsbicConfig {
        iterations: 1,
        tone_frequencies: vec![f],
        ..DsbicConfig::default()
    };
    let formula = multiplication_count(&dcfg, n);
    let detail = format!(
        "n = {n}, 25x12: counted {} (construction {}, error {}), formula {formula}",
        tally.total(),
        tally.construction,
        tally.error
    );
    if tally.total() as u128 == formula && formula == 335_808_000 {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn cd_round_trip() -> Outcome {
    let x = random_field(1 << 14, 5, 1.0);
    let fiber = FiberConfig::default();
    let y = apply_cd(&x, &fiber, false);
    let back = apply_cd(&y, &fiber, true);
    let round = x
        .samples()
        .iter()
        .zip(back.samples())
        .map(|(a, b)| (a - b).norm())
        .fold(0.0, f64::max);
    let e_in: f64 = x.samples().iter().map(|v| v.norm_sqr()).sum();
    let e_out: f64 = y.samples().iter().map(|v| v.norm_sqr()).sum();
    let rel = (e_out - e_in).abs() / e_in;
    let detail = format!("80 km: round-trip max error {round:.2e}, relative energy change {rel:.2e}");
    if round < 1e-9 && rel < 1e-12 {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn determinism() -> Outcome {
    let mut s = Scenario::default();
    s.frames = 2;
    s.noise.snr_db = Some(31.0);
    s.dsbic.as_mut().unwrap().iterations = 1;
    let spec = SweepSpec {
        base: s.clone(),
        axis: SweepAxis::DitherAmplitude,
        values: vec![0.04, 0.08],
    };
    let mut files = Vec::new();
    for _ in 0..2 {
        let tmp = tempfile::tempdir().map_err(err)?;
        let run = write_run(tmp.path(), &s, &run_scenario(&s).map_err(err)?).map_err(err)?;
        let sweep = write_sweep(tmp.path(), &spec, &run_sweep(&spec, SweepOptions::default()).map_err(err)?).map_err(err)?;
        let mut bytes = Vec::new();
        for dir in [&run, &sweep] {
            for f in ["curve.csv", "summary.json"] {
                bytes.push(fs::read(dir.join(f)).map_err(err)?);
            }
        }
        files.push(bytes);
    }
    let total: usize = files[0].iter().map(Vec::len).sum();
    let detail = format!("scenario and sweep outputs, {total} bytes compared");
    if files[0] == files[1] {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn main() -> ExitCode {
    let criteria: [(&str, fn() -> Outcome, Duration); 10] = [
        ("photodetection expansion", detection_expansion, Duration::from_secs(1)),
        ("oracle distortion cancellation", oracle_cancellation, Duration::from_secs(1)),
        ("KK fidelity", kk_fidelity, Duration::from_secs(10)),
        ("iteration saturation", iteration_saturation, Duration::from_secs(300)),
        ("dither tolerance ordering", dither_tolerance, Duration::from_secs(900)),
        ("sensitivity gain", sensitivity_gain, Duration::from_secs(900)),
        ("planted grid solution", planted_solution, Duration::from_secs(120)),
        ("complexity accounting", complexity, Duration::from_secs(1)),
        ("CD round trip", cd_round_trip, Duration::from_secs(1)),
        ("determinism", determinism, Duration::from_secs(600)),
    ];
    let filter: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let mut failed = 0;
    for (i, (name, check, budget)) in criteria.iter().enumerate() {
        let id = (i + 1).to_string();
        if !filter.is_empty() && !filter.iter().any(|f| f == &id) {
            continue;
        }
        let t = Instant::now();
        let outcome = check();
        let elapsed = t.elapsed();
        let (ok, detail) = match outcome {
            Ok(d) if elapsed <= *budget => (true, d),
            Ok(d) => (false, format!("{d}; over the {budget:?} budget")),
            Err(d) => (false, d),
        };
        failed += usize::from(!ok);
        println!(
            "criterion {id:>2} {} {name}: {detail} ({:.2} s)",
            if ok { "PASS" } else { "FAIL" },
            elapsed.as_secs_f64()
        );
    }
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        println!("{failed} criteria failed");
        ExitCode::FAILURE
    }
}
