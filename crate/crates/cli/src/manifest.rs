use std::fmt::Write as _;
use std::path::{Path, PathBuf};

/// Record of one invocation, written as `run_manifest.txt` beside its
/// outputs.
#[derive(Debug, Default)]
pub struct RunManifest {
    pub subcommand: String,
    pub config: Option<PathBuf>,
    pub seed: u64,
    pub threads: Option<usize>,
    pub variant: String,
    pub grayscale: bool,
    pub inputs: Vec<PathBuf>,
    pub outputs: Vec<PathBuf>,
}

impl RunManifest {
    pub fn render(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "tool = moire {}", env!("CARGO_PKG_VERSION"));
        let _ = writeln!(s, "subcommand = {}", self.subcommand);
        let _ = writeln!(
            s,
            "config = {}",
            self.config.as_ref().map_or("-".into(), |p| p.display().to_string())
        );
        let _ = writeln!(s, "seed = {}", self.seed);
        let _ = writeln!(s, "threads = {}", self.threads.map_or("auto".into(), |t| t.to_string()));
        let _ = writeln!(s, "variant = {}", self.variant);
        let _ = writeln!(s, "grayscale = {}", self.grayscale);
        for p in &self.inputs {
            let _ = writeln!(s, "input = {}", p.display());
        }
        for p in &self.outputs {
            let _ = writeln!(s, "output = {}", p.display());
        }
        s
    }

    pub fn write(&self, dir: &Path) -> std::io::Result<()> {
        std::fs::create_dir_all(dir)?;
        std::fs::write(dir.join("run_manifest.txt"), self.render())
    }
}
