use std::fmt::Write as _;
use std::path::Path;

use serde::Serialize;
use serde_json::json;

use isospec::billiards::{enumerate_orbits, length_spectrum, polygon_length_spectrum, render_svg, SearchConfig};
use isospec::eigensolver::{compute_spectrum_with, SpectrumOptions};
use isospec::heat_trace::{fit_invariants, fit_invariants_widened};
use isospec::inverse::{check_isospectral_consistency, scan_and_reconstruct, scan_sigma, ReconstructConfig};
use isospec::wave_trace::{default_k_window, estimate_orders, scan_peaks};
use isospec::{run_suite, BoundaryCondition, Domain, Spectrum, Trapezoid};

use crate::{usage, Bc, Command, Failure, Format, RunConfig};

type Result<T> = std::result::Result<T, Failure>;

pub fn run(cfg: &RunConfig, out: Option<&Path>) -> Result<()> {
    let header = serde_json::to_value(cfg).expect("config serializes");
    let text = match cfg.command {
        Command::Spectrum { domain, n, bc, mesh_size, levels } => {
            spectrum(&header, cfg.format, domain, *n, *bc, *mesh_size, *levels)?
        }
        Command::Invariants { spectrum, bc, window, widened, grid } => {
            let s = read_spectrum(spectrum, *bc)?;
            let window = window.as_ref().map(|w| (w[0], w[1]));
            let inv = if *widened { fit_invariants_widened(&s, *grid) } else { fit_invariants(&s, window, *grid) }
                .map_err(|e| Failure::new("heat", e))?;
            match cfg.format {
                Format::Json => pretty(&json!({ "config": header, "invariants": inv })),
                Format::Csv => {
                    let v = serde_json::to_value(&inv).expect("invariants serialize");
                    let mut s = csv_header(&header) + "name,value\n";
                    for (k, v) in v.as_object().expect("struct") {
                        let _ = writeln!(s, "{k},{}", v.to_string().replace(',', ";"));
                    }
                    s
                }
            }
        }
        Command::Orbits { domain, lmax, svg } => orbits(&header, cfg.format, domain, *lmax, svg.as_deref())?,
        Command::Wavetrace { spectrum, bc, t_range, sigma, k_ref, threshold, candidates } => {
            let s = read_spectrum(spectrum, *bc)?;
            let (t_lo, t_hi) = (t_range[0], t_range[1]);
            if !(t_lo < t_hi) {
                usage(format!("--t-range needs T_LO < T_HI, got {t_lo} {t_hi}"));
            }
            let top = s.eigenvalues.last().copied().unwrap_or(0.0).max(0.0).sqrt();
            let k_ref = k_ref.unwrap_or(0.5 * top);
            let sigma = sigma.unwrap_or_else(|| scan_sigma(k_ref));
            let mut scan = scan_peaks(&s, (t_lo, t_hi), sigma, k_ref, *threshold).map_err(|e| Failure::new("wave", e))?;
            estimate_orders(&s, &mut scan, default_k_window(&s));
            let found = pretty(&json!({
                "config": header,
                "sigma": scan.sigma,
                "k_ref": scan.k_ref,
                "threshold": scan.threshold,
                "median": scan.median,
                "candidates": scan.candidates,
            }));
            if let Some(path) = candidates {
                write(path, &found)?;
            }
            match cfg.format {
                Format::Csv => csv_header(&header) + &scan.to_csv(),
                Format::Json => found,
            }
        }
        Command::Reconstruct { spectrum, bc, sigma, significance, min_count } => {
            let s = read_spectrum(spectrum, *bc)?;
            let rc = ReconstructConfig { sigma: *sigma, significance: *significance, min_count: *min_count, ..Default::default() };
            let report = scan_and_reconstruct(&s, &rc).map_err(|e| Failure::new("inverse", e))?;
            match cfg.format {
                Format::Json => pretty(&json!({ "config": header, "report": report })),
                Format::Csv => {
                    let mut s = csv_header(&header) + "branch,B,h,alpha,beta,area,perimeter,q\n";
                    for b in &report.branches {
                        let t = &b.trapezoid;
                        let _ = writeln!(
                            s,
                            "{},{},{},{},{},{},{},{}",
                            serde_json::to_value(b.branch).expect("enum").as_str().unwrap_or_default(),
                            t.base(),
                            t.height(),
                            t.alpha(),
                            t.beta(),
                            t.area(),
                            t.perimeter(),
                            t.angle_invariant().q
                        );
                    }
                    s
                }
            }
        }
        Command::Compare { first, second } => {
            let (a, b) = (read_trapezoid(first)?, read_trapezoid(second)?);
            let verdict = check_isospectral_consistency(&a, &b);
            match cfg.format {
                Format::Json => pretty(&json!({ "config": header, "first": a, "second": b, "consistency": verdict })),
                Format::Csv => {
                    let v = serde_json::to_value(&verdict).expect("verdict serializes");
                    let field = |k: &str| v.get(k).map_or(String::new(), |x| x.to_string().trim_matches('"').to_string());
                    csv_header(&header)
                        + "verdict,invariant,first,second\n"
                        + &format!("{},{},{},{}\n", field("verdict"), field("invariant"), field("first"), field("second"))
                }
            }
        }
        Command::Props { suite, n } => {
            let report = run_suite(suite, *n, cfg.seed).unwrap_or_else(|e| usage(e));
            let text = match cfg.format {
                Format::Json => pretty(&json!({ "config": header, "report": report })),
                Format::Csv => {
                    let mut s = csv_header(&header) + "case,B,h,alpha,beta,message\n";
                    for f in &report.failures {
                        let t = &f.trapezoid;
                        let msg = f.message.replace(['"', '\n'], " ");
                        let _ = writeln!(s, "{},{},{},{},{},\"{msg}\"", f.case, t.base(), t.height(), t.alpha(), t.beta());
                    }
                    s
                }
            };
            emit(out, &text)?;
            if !report.passed() {
                return Err(Failure::new(
                    "property",
                    format!("{} of {} checks failed in suite {suite}", report.failures.len(), report.checks),
                ));
            }
            return Ok(());
        }
    };
    emit(out, &text)
}

fn pretty(v: &impl Serialize) -> String {
    serde_json::to_string_pretty(v).expect("values serialize") + "\n"
}

fn csv_header(config: &serde_json::Value) -> String {
    format!("# config: {config}\n")
}

fn emit(out: Option<&Path>, text: &str) -> Result<()> {
    match out {
        Some(p) => write(p, text),
        None => {
            use std::io::Write;
            std::io::stdout().write_all(text.as_bytes()).map_err(|e| Failure::new("io", e))
        }
    }
}

fn write(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| Failure::new("io", format!("{}: {e}", path.display())))
}

fn read(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| Failure::new("io", format!("{}: {e}", path.display())))
}

fn read_domain(path: &Path) -> Result<Domain> {
    Domain::from_json(&read(path)?).map_err(|e| Failure::new("input", format!("{}: {e}", path.display())))
}

fn read_trapezoid(path: &Path) -> Result<Trapezoid> {
    read_domain(path)?
        .trapezoid()
        .ok_or_else(|| Failure::new("input", format!("{}: not a non-obtuse trapezoid", path.display())))
}

/// A spectrum as JSON (bare or under `"spectrum"`) or CSV.
fn read_spectrum(path: &Path, bc: Option<Bc>) -> Result<Spectrum> {
    let text = read(path)?;
    let bad = |e: String| Failure::new("input", format!("{}: {e}", path.display()));
    let mut s = if text.trim_start().starts_with('{') {
        let mut v: serde_json::Value = serde_json::from_str(&text).map_err(|e| bad(e.to_string()))?;
        if let Some(inner) = v.get_mut("spectrum") {
            v = inner.take();
        }
        serde_json::from_value::<Spectrum>(v).map_err(|e| bad(e.to_string()))?
    } else {
        let default = bc.map_or(BoundaryCondition::Dirichlet, Into::into);
        Spectrum::from_csv(&text, default).map_err(|e| bad(e.to_string()))?
    };
    if let Some(b) = bc {
        s.boundary_condition = b.into();
    }
    Ok(s)
}

fn spectrum(
    header: &serde_json::Value,
    format: Format,
    domain: &Path,
    n: usize,
    bc: Bc,
    mesh_size: Option<f64>,
    levels: usize,
) -> Result<String> {
    let d = read_domain(domain)?;
    let poly = d.polygon();
    let mut opts = SpectrumOptions::for_count(&poly, n);
    if let Some(h) = mesh_size {
        opts.mesh_size = h;
    }
    opts.levels = levels;
    let run = compute_spectrum_with(&poly, bc.into(), n, &opts).map_err(|e| Failure::new("eigen", e))?;
    let mut s = run.spectrum;
    s.source_domain = Some(d);
    Ok(match format {
        Format::Json => pretty(&json!({
            "config": header,
            "mesh_sizes": run.mesh_sizes,
            "unknowns": run.unknowns,
            "spectrum": s,
        })),
        Format::Csv => csv_header(header) + &s.to_csv(),
    })
}

fn orbits(header: &serde_json::Value, format: Format, domain: &Path, lmax: f64, svg: Option<&Path>) -> Result<String> {
    if !(lmax > 0.0 && lmax.is_finite()) {
        usage(format!("--lmax must be positive, got {lmax}"));
    }
    let d = read_domain(domain)?;
    let poly = d.polygon();
    let spec = match d.trapezoid() {
        Some(t) => length_spectrum(&t, lmax),
        None => polygon_length_spectrum(&poly, &SearchConfig::new(lmax)),
    }
    .map_err(|e| Failure::new("billiards", e))?;
    if let Some(path) = svg {
        let found = enumerate_orbits(&poly, lmax, SearchConfig::new(lmax).period_max).map_err(|e| Failure::new("billiards", e))?;
        let drawn: Vec<_> = found.orbits.into_iter().filter(|o| !o.conical && o.multiple == 1).collect();
        let body = render_svg(&poly, &drawn);
        let comment = format!("<!-- config: {} -->\n", header.to_string().replace("--", "- -"));
        write(path, &(comment + &body))?;
    }
    Ok(match format {
        Format::Json => {
            let mut s = serde_json::to_string(&json!({ "config": header, "lmax": spec.lmax, "complete": spec.complete }))
                .expect("header serializes")
                + "\n";
            for line in &spec.lines {
                s += &serde_json::to_string(line).expect("line serializes");
                s.push('\n');
            }
            s
        }
        Format::Csv => {
            let mut s = csv_header(header) + "length,labels,regular,diffractive\n";
            for l in &spec.lines {
                let _ = writeln!(s, "{},{},{},{}", l.length, l.labels.join(";"), l.regular, l.diffractive);
            }
            s
        }
    })
}
