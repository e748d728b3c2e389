//! On-disk fixtures for driving the `miafex` binary.
#![allow(dead_code)]

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use image::{Rgb, RgbImage};

use miafex::dataset::{ImageSample, Split};
use miafex::synthetic::grating_images;

/// A dataset directory with PNG images, a manifest and a config file.
pub struct Fixture {
    pub dir: tempfile::TempDir,
    pub config: PathBuf,
}

/// Small transformer and search budgets so end-to-end runs stay quick.
pub const SMALL_SECTIONS: &str = "\
[model]
patch_size = 8
embed_dim = 16
num_layers = 1
num_heads = 2

[train]
epochs = 3
batch_size = 4

[nadam]
learning_rate = 1e-3

[selection]
population = 6
iterations = 8
";

fn save_png(sample: &ImageSample<f64>, path: &Path) {
    let s = sample.pixels.shape();
    let (h, w) = (s[0], s[1]);
    let data = sample.pixels.data();
    let img = RgbImage::from_fn(w as u32, h as u32, |x, y| {
        let px = |c: usize| {
            let v = data[(y as usize * w + x as usize) * 3 + c];
            (v.clamp(0.0, 1.0) * 255.0).round() as u8
        };
        Rgb([px(0), px(1), px(2)])
    });
    img.save(path).unwrap();
}

impl Fixture {
    /// Grating images (one orientation per class) written at `size`, with
    /// explicit train/test splits. `sections` is appended to a config that
    /// sets `seed = 7` and points at the manifest.
    pub fn new(classes: usize, train_per: usize, test_per: usize, size: (usize, usize), sections: &str) -> Self {
        let dir = tempfile::tempdir().unwrap();
        let img_dir = dir.path().join("img");
        fs::create_dir(&img_dir).unwrap();
        let mut manifest = format!("#manifest\t1\n#name\tgratings\n#num_classes\t{classes}\n#classes");
        for c in 0..classes {
            manifest.push_str(&format!("\tc{c}"));
        }
        manifest.push('\n');
        for (split, per, seed) in [(Split::Train, train_per, 1), (Split::Test, test_per, 2)] {
            for s in grating_images::<f64>(classes, per, size, 0.05, split, seed) {
                let name = format!("{}.png", s.id);
                save_png(&s, &img_dir.join(&name));
                manifest.push_str(&format!("img/{name}\t{}\t{split}\n", s.label));
            }
        }
        fs::write(dir.path().join("manifest.tsv"), manifest).unwrap();
        let config = dir.path().join("config.toml");
        fs::write(
            &config,
            format!(
                "version = 1\nseed = 7\n\n[dataset]\nmanifest = \"manifest.tsv\"\nimage_size = [{}, {}]\n\n{sections}",
                size.0, size.1
            ),
        )
        .unwrap();
        Fixture { dir, config }
    }

    pub fn out(&self) -> PathBuf {
        self.dir.path().join("out")
    }

    pub fn run(&self, args: &[&str]) -> Output {
        miafex(&self.config, args)
    }

    /// Runs and asserts success, returning stdout.
    pub fn ok(&self, args: &[&str]) -> String {
        let o = self.run(args);
        assert!(
            o.status.success(),
            "{args:?} failed: {}",
            String::from_utf8_lossy(&o.stderr)
        );
        String::from_utf8(o.stdout).unwrap()
    }
}

/// `miafex <cmd> --config <config> <rest...>`.
pub fn miafex(config: &Path, args: &[&str]) -> Output {
    let (cmd, rest) = args.split_first().expect("a subcommand");
    Command::new(env!("CARGO_BIN_EXE_miafex"))
        .arg(cmd)
        .arg("--config")
        .arg(config)
        .args(rest)
        .output()
        .unwrap()
}

/// Every regular file under `dir` with its bytes, sorted by name.
pub fn snapshot(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut files: Vec<_> = fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.is_file())
        .map(|p| {
            (
                p.file_name().unwrap().to_string_lossy().into_owned(),
                fs::read(&p).unwrap(),
            )
        })
        .collect();
    files.sort();
    files
}
