//! The `vehpred` command line.

use std::ffi::OsString;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use crate::changepoint::segment_series;
use crate::error::{Error, Result};
use crate::harness::config::ExperimentConfig;
use crate::harness::io::{self, fmt_f64, write_file};
use crate::harness::metrics::{compute_metrics, MetricsReport};
use crate::pipeline::predict_trajectory;
use crate::policy::{PolicyKind, PolicyParams};
use crate::scenario::{build_route_path, simulate_route, LabeledTrajectory, Route};
use crate::trajectory::{Measurement3, Trajectory};
use crate::ukf::{belief_poses, belief_states, filter_trajectory, GaussianState};

#[derive(Debug, Parser)]
#[command(
    name = "vehpred",
    version,
    about = "Roundabout vehicle tracking, policy segmentation and prediction"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct Common {
    /// Flat key=value configuration file.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Directory for per-figure CSV traces.
    #[arg(long, value_name = "DIR")]
    pub emit_plot_data: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Simulate a route: writes ground truth and noisy measurements.
    Generate {
        /// Entry and exit legs, e.g. `0:2`.
        #[arg(long, value_parser = parse_route)]
        route: (usize, usize),
        #[arg(long)]
        seed: u64,
        #[arg(long, default_value = "truth.csv")]
        truth: PathBuf,
        #[arg(long, default_value = "measurements.csv")]
        measurements: PathBuf,
        #[command(flatten)]
        common: Common,
    },
    /// Run the UKF over a measurement file.
    Filter {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        output: PathBuf,
        /// Initial speed guess (m/s).
        #[arg(long)]
        init_speed: Option<f64>,
        #[command(flatten)]
        common: Common,
    },
    /// Segment a measurement file into policies; writes a JSON-lines report.
    Segment {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        output: PathBuf,
        /// Segment the raw measurements instead of the filtered poses.
        #[arg(long)]
        raw: bool,
        #[command(flatten)]
        common: Common,
    },
    /// Predict the trajectory after a sample of a measurement file.
    Predict {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        output: PathBuf,
        /// Last observed sample; defaults to the end of the file.
        #[arg(long)]
        at: Option<usize>,
        #[arg(long)]
        raw: bool,
        #[command(flatten)]
        common: Common,
    },
    /// Tracking-error metrics, from files or from a seeded benchmark.
    Evaluate {
        #[arg(long, requires = "estimate", conflicts_with = "seed")]
        truth: Option<PathBuf>,
        /// Estimate or state CSV aligned with the truth.
        #[arg(long, requires = "truth")]
        estimate: Option<PathBuf>,
        /// Base seed of the benchmark; trial `i` uses `seed + i`.
        #[arg(long, required_unless_present = "truth")]
        seed: Option<u64>,
        #[arg(long, default_value_t = 3)]
        trials: usize,
        /// Route of every trial; cycles through all leg pairs when omitted.
        #[arg(long, value_parser = parse_route)]
        route: Option<(usize, usize)>,
        #[arg(long)]
        burn_in: Option<usize>,
        /// key=value metrics file.
        #[arg(long)]
        output: Option<PathBuf>,
        #[command(flatten)]
        common: Common,
    },
}

fn parse_route(s: &str) -> std::result::Result<(usize, usize), String> {
    let (a, b) = s.split_once(':').ok_or("expected ENTRY:EXIT")?;
    let leg = |x: &str| {
        x.trim()
            .parse::<usize>()
            .map_err(|_| format!("`{x}` is not a leg index"))
    };
    Ok((leg(a)?, leg(b)?))
}

/// Parses `args` (program name first), runs the command and returns the exit
/// status: 0 success, 1 usage, 2 data, 3 numerical.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match execute(cli) {
        Ok(report) => {
            print!("{report}");
            0
        }
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

fn load_config(common: &Common) -> Result<ExperimentConfig> {
    match &common.config {
        Some(p) => ExperimentConfig::from_file(p),
        None => Ok(ExperimentConfig::default()),
    }
}

fn route(cfg: &ExperimentConfig, (a, b): (usize, usize)) -> Route {
    Route {
        cruise_speed: cfg.cruise_speed,
        dt: cfg.dt,
        ..Route::new(a, b)
    }
}

fn read_measurements(path: &Path) -> Result<Trajectory<Measurement3>> {
    Ok(io::parse_measurements(&io::read_to_string(path)?)?.0)
}

fn plot_dir(common: &Common) -> Result<Option<&Path>> {
    match &common.emit_plot_data {
        Some(d) => {
            std::fs::create_dir_all(d)?;
            Ok(Some(d.as_path()))
        }
        None => Ok(None),
    }
}

/// Writes a plain CSV of formatted floats (and preformatted text cells).
fn write_plot(path: &Path, header: &str, rows: impl Iterator<Item = Vec<String>>) -> Result<()> {
    let mut out = String::new();
    out.push_str(header);
    out.push('\n');
    for r in rows {
        out.push_str(&r.join(","));
        out.push('\n');
    }
    write_file(path, &out)
}

fn initial_belief(
    cfg: &ExperimentConfig,
    z: &Trajectory<Measurement3>,
    init_speed: Option<f64>,
) -> Result<GaussianState> {
    let first = z
        .samples
        .first()
        .ok_or_else(|| Error::Domain("measurement file is empty".into()))?;
    Ok(match init_speed.or(cfg.init_speed) {
        Some(v) => GaussianState::init_with_speed(first, v),
        None => GaussianState::default_init(first),
    })
}

#[derive(Serialize)]
struct SegmentRecord {
    /// Index of the last sample of the segment.
    tau: usize,
    start: usize,
    policy: PolicyKind,
    bic: f64,
    log_likelihood: f64,
    params: PolicyParams,
}

#[derive(Serialize)]
struct PredictionHeader {
    at: usize,
    policy: PolicyKind,
    params: PolicyParams,
}

fn execute(cli: Cli) -> Result<String> {
    match cli.command {
        Command::Generate {
            route: legs,
            seed,
            truth,
            measurements,
            common,
        } => {
            let cfg = load_config(&common)?;
            let r = route(&cfg, legs);
            let (t, z) = simulate_route(&cfg.geometry, &r, &cfg.process, &cfg.measurement, seed)?;
            let comments = vec![
                ("seed".to_string(), seed.to_string()),
                ("route".to_string(), format!("{}:{}", legs.0, legs.1)),
            ];
            write_file(&truth, &io::format_truth(&t, &comments)?)?;
            write_file(&measurements, &io::format_measurements(&z, &comments)?)?;
            if let Some(dir) = plot_dir(&common)? {
                let clean = build_route_path(&cfg.geometry, &r)?;
                write_plot(
                    &dir.join("trajectories.csv"),
                    "t,clean_x,clean_y,truth_x,truth_y,meas_x,meas_y,label",
                    (0..t.len()).map(|i| {
                        let (c, s, m) = (clean.states[i], t.states[i], z[i]);
                        vec![
                            fmt_f64(t.states.time(i)),
                            fmt_f64(c.x),
                            fmt_f64(c.y),
                            fmt_f64(s.x),
                            fmt_f64(s.y),
                            fmt_f64(m.x),
                            fmt_f64(m.y),
                            t.labels[i].name().to_string(),
                        ]
                    }),
                )?;
            }
            Ok(format!(
                "generated {} samples with {} changepoints\n",
                t.len(),
                t.changepoints.len()
            ))
        }
        Command::Filter {
            input,
            output,
            init_speed,
            common,
        } => {
            let cfg = load_config(&common)?;
            let z = read_measurements(&input)?;
            let beliefs = filter_trajectory(&z, &initial_belief(&cfg, &z, init_speed)?, &cfg.filter())?;
            write_file(&output, &io::format_estimates(&beliefs, &[])?)?;
            if let Some(dir) = plot_dir(&common)? {
                write_plot(
                    &dir.join("filter_traces.csv"),
                    "t,meas_x,meas_y,filt_x,filt_y",
                    beliefs.iter().enumerate().map(|(i, g)| {
                        let s = g.state();
                        vec![
                            fmt_f64(z.time(i)),
                            fmt_f64(z[i].x),
                            fmt_f64(z[i].y),
                            fmt_f64(s.x),
                            fmt_f64(s.y),
                        ]
                    }),
                )?;
                write_plot(
                    &dir.join("hidden_states.csv"),
                    "t,v,w,sd_v,sd_w",
                    beliefs.iter().enumerate().map(|(i, g)| {
                        let s = g.state();
                        vec![
                            fmt_f64(z.time(i)),
                            fmt_f64(s.v),
                            fmt_f64(s.w),
                            fmt_f64(g.cov[(3, 3)].max(0.0).sqrt()),
                            fmt_f64(g.cov[(4, 4)].max(0.0).sqrt()),
                        ]
                    }),
                )?;
            }
            Ok(format!("filtered {} samples\n", z.len()))
        }
        Command::Segment {
            input,
            output,
            raw,
            common,
        } => {
            let cfg = load_config(&common)?;
            let z = read_measurements(&input)?;
            let series = if raw {
                z.clone()
            } else {
                belief_poses(&filter_trajectory(&z, &initial_belief(&cfg, &z, None)?, &cfg.filter())?)
            };
            let path = segment_series(&series, &cfg.champ)?;
            let mut out = String::new();
            for ((start, end), fit) in path.segments(series.len()).into_iter().zip(&path.segment_fits) {
                let rec = SegmentRecord {
                    tau: end - 1,
                    start,
                    policy: fit.policy,
                    bic: fit.bic_evidence,
                    log_likelihood: fit.log_likelihood,
                    params: fit.params,
                };
                out.push_str(&serde_json::to_string(&rec).expect("plain record"));
                out.push('\n');
            }
            write_file(&output, &out)?;
            if let Some(dir) = plot_dir(&common)? {
                let labels = path.labels(series.len());
                let mut seg_of = Vec::with_capacity(series.len());
                for (k, (a, b)) in path.segments(series.len()).into_iter().enumerate() {
                    seg_of.extend(std::iter::repeat_n(k, b - a));
                }
                write_plot(
                    &dir.join("segments.csv"),
                    "t,x,y,label,segment",
                    series.iter().enumerate().map(|(i, o)| {
                        vec![
                            fmt_f64(series.time(i)),
                            fmt_f64(o.x),
                            fmt_f64(o.y),
                            labels[i].name().to_string(),
                            seg_of[i].to_string(),
                        ]
                    }),
                )?;
            }
            Ok(format!(
                "{} segments, changepoints {:?}\n",
                path.segment_policies.len(),
                path.changepoints
            ))
        }
        Command::Predict {
            input,
            output,
            at,
            raw,
            common,
        } => {
            let cfg = load_config(&common)?;
            let z = read_measurements(&input)?;
            let at = at.unwrap_or(z.len().saturating_sub(1));
            if at >= z.len() {
                return Err(Error::Range(format!(
                    "--at {at} is past the last sample {}",
                    z.len() - 1
                )));
            }
            let mut pcfg = cfg.pipeline();
            pcfg.prediction.dt = z.dt;
            if raw {
                pcfg.prediction.use_filter = false;
            }
            let res = predict_trajectory(&z.slice(0, at + 1), &pcfg)?;
            let predicted = Trajectory::new(z.time(at) + z.dt, z.dt, res.predicted.samples.clone());
            let header = PredictionHeader {
                at,
                policy: res.current_policy,
                params: res.current_fit.params,
            };
            let comments = vec![(
                "prediction".to_string(),
                serde_json::to_string(&header).expect("plain record"),
            )];
            write_file(&output, &io::format_states(&predicted, &comments)?)?;
            if let Some(dir) = plot_dir(&common)? {
                let observed = (0..=at).map(|i| {
                    vec![
                        "observed".to_string(),
                        fmt_f64(z.time(i)),
                        fmt_f64(z[i].x),
                        fmt_f64(z[i].y),
                    ]
                });
                let ahead = predicted.iter().enumerate().map(|(i, s)| {
                    vec![
                        "predicted".to_string(),
                        fmt_f64(predicted.time(i)),
                        fmt_f64(s.x),
                        fmt_f64(s.y),
                    ]
                });
                write_plot(&dir.join("prediction.csv"), "kind,t,x,y", observed.chain(ahead))?;
            }
            Ok(format!(
                "policy {} ({} predicted states)\n",
                res.current_policy,
                predicted.len()
            ))
        }
        Command::Evaluate {
            truth,
            estimate,
            seed,
            trials,
            route: fixed_route,
            burn_in,
            output,
            common,
        } => {
            let cfg = load_config(&common)?;
            let burn_in = burn_in.unwrap_or(cfg.burn_in);
            let mut pairs: Vec<(String, LabeledTrajectory, Trajectory<crate::motion_model::State5>)> = Vec::new();
            if let (Some(tp), Some(ep)) = (truth, estimate) {
                let (t, _) = io::parse_truth(&io::read_to_string(&tp)?)?;
                let e = io::parse_any_states(&io::read_to_string(&ep)?)?;
                pairs.push((tp.display().to_string(), t, e));
            } else {
                let seed = seed.ok_or_else(|| Error::Usage("--seed is required for the benchmark".into()))?;
                if trials == 0 {
                    return Err(Error::Usage("--trials must be at least 1".into()));
                }
                let legs = cfg.geometry.leg_angles.len();
                let all: Vec<(usize, usize)> = (0..legs)
                    .flat_map(|a| (0..legs).filter(move |&b| b != a).map(move |b| (a, b)))
                    .collect();
                for i in 0..trials {
                    let legs = fixed_route.unwrap_or(all[i % all.len()]);
                    let s = seed.wrapping_add(i as u64);
                    let (t, z) = simulate_route(&cfg.geometry, &route(&cfg, legs), &cfg.process, &cfg.measurement, s)?;
                    let beliefs = filter_trajectory(&z, &initial_belief(&cfg, &z, None)?, &cfg.filter())?;
                    pairs.push((
                        format!("route {}:{} seed {s}", legs.0, legs.1),
                        t,
                        belief_states(&beliefs),
                    ));
                }
            }
            let mut text = String::new();
            let mut kv = String::new();
            let mut with = Vec::new();
            let mut without = Vec::new();
            for (name, t, e) in &pairs {
                let r = compute_metrics(t, e, burn_in)?;
                let r0 = compute_metrics(t, e, 0)?;
                if pairs.len() > 1 {
                    writeln!(
                        text,
                        "{name}: avg_euclid {:.6} max_euclid {:.6}",
                        r.avg_euclid, r.max_euclid
                    )
                    .unwrap();
                }
                with.push(r);
                without.push(r0);
            }
            let agg = MetricsReport::aggregate(&with)?;
            let agg0 = MetricsReport::aggregate(&without)?;
            writeln!(text, "{agg}").unwrap();
            writeln!(text, "\nwithout burn-in:\n{agg0}").unwrap();
            kv.push_str(&agg.to_key_values(""));
            kv.push_str(&agg0.to_key_values("raw."));
            kv.push_str(&format!("trials={}\n", pairs.len()));
            if let Some(p) = output {
                write_file(&p, &kv)?;
            }
            if let Some(dir) = plot_dir(&common)? {
                let (_, t, e) = &pairs[0];
                write_plot(
                    &dir.join("errors.csv"),
                    "t,lat_err,lon_err,euclid",
                    t.states.iter().zip(e.iter()).enumerate().map(|(i, (a, b))| {
                        let (lat, lon) = ((b.y - a.y).abs(), (b.x - a.x).abs());
                        vec![
                            fmt_f64(t.states.time(i)),
                            fmt_f64(lat),
                            fmt_f64(lon),
                            fmt_f64(lat.hypot(lon)),
                        ]
                    }),
                )?;
            }
            Ok(text)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn route_flag_parses() {
        assert_eq!(parse_route("0:2"), Ok((0, 2)));
        assert!(parse_route("0-2").is_err());
        assert!(parse_route("a:1").is_err());
    }

    #[test]
    fn missing_seed_is_usage_error() {
        assert_eq!(run(["vehpred", "generate", "--route", "0:2"]), 1);
        assert_eq!(run(["vehpred", "evaluate"]), 1);
        assert_eq!(run(["vehpred", "bogus"]), 1);
    }

    #[test]
    fn missing_input_is_data_error() {
        let dir = tempfile::tempdir().unwrap();
        let out = dir.path().join("e.csv");
        let missing = dir.path().join("nope.csv");
        assert_eq!(
            run([
                "vehpred".into(),
                "filter".into(),
                OsString::from("--input"),
                missing.into_os_string(),
                "--output".into(),
                out.into_os_string(),
            ]),
            2
        );
    }
}
