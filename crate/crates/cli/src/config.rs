use std::fs;
use std::path::PathBuf;

use cnl::harness::ExperimentConfig;

use crate::args::RunArgs;
use crate::failure::Failure;

/// Overrides the config's `output_dir` when `--out` is absent.
pub const OUTPUT_DIR_ENV: &str = "CNL_OUTPUT_DIR";

/// Reads the TOML config and applies command-line and environment overrides.
/// The result is what every output file echoes.
pub fn resolve(args: &RunArgs) -> Result<ExperimentConfig, Failure> {
    let text = fs::read_to_string(&args.config)
        .map_err(|e| Failure::Config(format!("cannot read config {}: {e}", args.config.display())))?;
    let mut config: ExperimentConfig = toml::from_str(&text)
        .map_err(|e| Failure::Config(format!("invalid config {}: {e}", args.config.display())))?;
    if let Some(seed) = args.seed_override {
        config.seeds = vec![seed];
    }
    if let Some(out) = &args.out {
        config.output_dir = out.clone();
    } else if let Some(env) = std::env::var_os(OUTPUT_DIR_ENV).filter(|v| !v.is_empty()) {
        config.output_dir = PathBuf::from(env);
    }
    config
        .validate()
        .map_err(|e| Failure::from_lib(&args.config.display().to_string(), e))?;
    Ok(config)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn write_config(dir: &std::path::Path, body: &str) -> PathBuf {
        let path = dir.join("exp.toml");
        fs::write(&path, body).unwrap();
        path
    }

    const MINIMAL: &str = r#"
seeds = [1, 2]
output_dir = "from-config"

[task]
generator = "gaussian_mixture"
n_samples = 60
input_dim = 2
classes = 3
cluster_overlap = 0.3

[arch]
input_dim = 2
hidden = [4]
classes = 3
"#;

    #[test]
    fn flags_override_the_file() {
        let dir = tempfile::tempdir().unwrap();
        let args = RunArgs {
            config: write_config(dir.path(), MINIMAL),
            out: Some(PathBuf::from("elsewhere")),
            seed_override: Some(9),
        };
        let config = resolve(&args).unwrap();
        assert_eq!(config.seeds, vec![9]);
        assert_eq!(config.output_dir, PathBuf::from("elsewhere"));
        assert_eq!(config.epochs, 25);
    }

    #[test]
    fn unknown_keys_are_config_errors() {
        let dir = tempfile::tempdir().unwrap();
        let args = RunArgs {
            config: write_config(dir.path(), &format!("colour = 3\n{MINIMAL}")),
            out: None,
            seed_override: None,
        };
        assert_eq!(resolve(&args).unwrap_err().exit_code(), 2);
    }

    #[test]
    fn missing_file_is_a_config_error() {
        let args = RunArgs {
            config: PathBuf::from("/nonexistent/exp.toml"),
            out: None,
            seed_override: None,
        };
        assert_eq!(resolve(&args).unwrap_err().exit_code(), 2);
    }
}
