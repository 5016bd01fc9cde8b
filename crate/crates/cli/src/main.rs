use std::path::PathBuf;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};

use uwb_fusion::config::ChannelKind;
use uwb_fusion::experiments::{
    run_fusion_tracking, run_multipath, run_ned_sweep, run_pdp_estimate, run_static_mse,
};
use uwb_fusion::report::{
    pdp_rows, write_csv, write_manifest, NED_HEADER, PDP_HEADER, STATIC_HEADER, STEADY_HEADER,
    TRACK_HEADER,
};
use uwb_fusion::ExperimentConfig;

#[derive(Parser)]
#[command(name = "uwb-fusion", version, about = "UWB TOA estimation experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// TOA MSE against SNR for each detector, with the CRLB.
    StaticMse(Common),
    /// Kalman fusion of energy-detector banks tracking a TOA ramp.
    FusionTrack(Common),
    /// Detector count needed to match the matched filter, per SNR.
    NedSweep(Common),
    /// MES, WMESS and matched filter on a multipath channel.
    Multipath(Common),
    /// Averaged power-delay profile of the configured channel.
    PdpEstimate(Common),
}

#[derive(Args)]
struct Common {
    /// TOML configuration file.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    trials: Option<usize>,
    /// Comma-separated SNR values in dB.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    snr: Option<Vec<f64>>,
}

impl Common {
    fn resolve(&self) -> Result<ExperimentConfig> {
        let mut cfg = match &self.config {
            Some(path) => ExperimentConfig::load(path)
                .with_context(|| format!("loading {}", path.display()))?,
            None => ExperimentConfig::default(),
        };
        if let Some(seed) = self.seed {
            cfg.seed = seed;
        }
        if let Some(out) = &self.out {
            cfg.output_dir = out.clone();
        }
        if let Some(trials) = self.trials {
            cfg.trials = trials;
        }
        if let Some(snr) = &self.snr {
            cfg.snr_db = snr.clone();
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

fn snr_dir_name(snr_db: f64) -> String {
    format!("snr_{snr_db}dB")
}

fn run(cli: Cli) -> Result<Vec<PathBuf>> {
    let (name, common) = match &cli.command {
        Command::StaticMse(c) => ("static-mse", c),
        Command::FusionTrack(c) => ("fusion-track", c),
        Command::NedSweep(c) => ("ned-sweep", c),
        Command::Multipath(c) => ("multipath", c),
        Command::PdpEstimate(c) => ("pdp-estimate", c),
    };
    let mut cfg = common.resolve()?;
    if matches!(cli.command, Command::Multipath(_)) && cfg.channel.kind == ChannelKind::Awgn {
        cfg.channel.kind = ChannelKind::Cm1;
    }
    if matches!(cli.command, Command::PdpEstimate(_)) && cfg.channel.kind == ChannelKind::Awgn {
        cfg.channel.kind = ChannelKind::Cm1;
    }
    let out = cfg.output_dir.clone();
    let mut files = Vec::new();
    match cli.command {
        Command::StaticMse(_) => {
            let report = run_static_mse(&cfg)?;
            let path = out.join("static_mse.csv");
            write_csv(&path, &STATIC_HEADER, &report.static_rows)?;
            files.push(path);
        }
        Command::FusionTrack(_) => {
            let (results, report) = run_fusion_tracking(&cfg)?;
            for r in &results {
                let dir = if results.len() == 1 {
                    out.clone()
                } else {
                    out.join(snr_dir_name(r.snr_db))
                };
                let path = dir.join("fusion.csv");
                write_csv(&path, &TRACK_HEADER, &r.track_rows())?;
                files.push(path);
            }
            let path = out.join("fusion_steady.csv");
            write_csv(&path, &STEADY_HEADER, &report.steady_rows)?;
            files.push(path);
        }
        Command::NedSweep(_) => {
            let report = run_ned_sweep(&cfg)?;
            let path = out.join("ned.csv");
            write_csv(&path, &NED_HEADER, &report.ned_rows)?;
            files.push(path);
            let path = out.join("ned_steady.csv");
            write_csv(&path, &STEADY_HEADER, &report.steady_rows)?;
            files.push(path);
        }
        Command::Multipath(_) => {
            let report = run_multipath(&cfg)?;
            let path = out.join("static_mse.csv");
            write_csv(&path, &STATIC_HEADER, &report.static_rows)?;
            files.push(path);
            let path = out.join("multipath_steady.csv");
            write_csv(&path, &STEADY_HEADER, &report.steady_rows)?;
            files.push(path);
            let path = out.join("pdp.csv");
            write_csv(&path, &PDP_HEADER, &pdp_rows(&report.profile))?;
            files.push(path);
        }
        Command::PdpEstimate(_) => {
            let profile = run_pdp_estimate(&cfg)?;
            let path = out.join("pdp.csv");
            write_csv(&path, &PDP_HEADER, &pdp_rows(&profile))?;
            files.push(path);
        }
    }
    write_manifest(&out, name, &cfg, &files)?;
    Ok(files)
}

fn main() -> Result<()> {
    let files = run(Cli::parse())?;
    for f in files {
        println!("{}", f.display());
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn run_args(args: &[&str]) -> Result<Vec<PathBuf>> {
        run(Cli::try_parse_from(args)?)
    }

    #[test]
    fn static_mse_writes_csv_and_manifest() {
        let dir = tempfile::tempdir().unwrap();
        let out = dir.path().to_str().unwrap();
        let args = [
            "uwb-fusion", "static-mse", "--seed", "3", "--trials", "5", "--snr", "-2,10", "--out", out,
        ];
        let files = run_args(&args).unwrap();
        assert_eq!(files, vec![dir.path().join("static_mse.csv")]);
        let first = std::fs::read_to_string(&files[0]).unwrap();
        assert!(first.starts_with("snr_db,detector,mse_ns2,crlb_ns2,trials,seed\n-2.0,"));
        assert_eq!(first.lines().count(), 7);
        let manifest = std::fs::read_to_string(dir.path().join("manifest.toml")).unwrap();
        assert!(manifest.contains("command = \"static-mse\""));
        assert!(manifest.contains("config_hash"));

        run_args(&args).unwrap();
        assert_eq!(first, std::fs::read_to_string(&files[0]).unwrap());
    }

    #[test]
    fn fusion_track_splits_snrs_into_directories() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = dir.path().join("run.toml");
        std::fs::write(&cfg, "[trajectory]\nsteps = 20\n[detectors]\ncount = 2\n").unwrap();
        let files = run_args(&[
            "uwb-fusion",
            "fusion-track",
            "--config",
            cfg.to_str().unwrap(),
            "--trials",
            "3",
            "--snr",
            "10,20",
            "--out",
            dir.path().to_str().unwrap(),
        ])
        .unwrap();
        assert!(files.contains(&dir.path().join("snr_10dB").join("fusion.csv")));
        assert!(files.contains(&dir.path().join("snr_20dB").join("fusion.csv")));
        let text = std::fs::read_to_string(&files[0]).unwrap();
        assert!(text.starts_with("step,true_toa_ns,fused_toa_ns,mse_ns2,n_detectors\n"));
        assert_eq!(text.lines().count(), 1 + 2 * 20);
    }

    #[test]
    fn pdp_estimate_defaults_to_multipath() {
        let dir = tempfile::tempdir().unwrap();
        let files = run_args(&["uwb-fusion", "pdp-estimate", "--out", dir.path().to_str().unwrap()]).unwrap();
        let text = std::fs::read_to_string(&files[0]).unwrap();
        assert!(text.starts_with("block,energy_fraction\n1,"));
        assert!(text.lines().count() > 2);
    }

    #[test]
    fn bad_input_is_rejected() {
        assert!(Cli::try_parse_from(["uwb-fusion", "static-mse", "--snr", "x"]).is_err());
        assert!(run_args(&["uwb-fusion", "static-mse", "--trials", "0", "--out", "/nonexistent"]).is_err());
        assert!(run_args(&["uwb-fusion", "static-mse", "--config", "/nonexistent.toml"]).is_err());
    }
}
