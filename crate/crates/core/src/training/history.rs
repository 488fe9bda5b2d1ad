use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: u64,
    /// Mean over the epoch's critic updates.
    pub critic_loss: f64,
    pub generator_loss: f64,
    pub gradient_penalty: f64,
    pub score_real: f64,
    pub score_fake: f64,
    /// Wall-clock since the start of the run.
    pub seconds: f64,
}

impl EpochRecord {
    pub fn is_finite(&self) -> bool {
        [self.critic_loss, self.generator_loss, self.gradient_penalty, self.score_real, self.score_fake]
            .iter()
            .all(|v| v.is_finite())
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrainHistory {
    pub records: Vec<EpochRecord>,
}

impl TrainHistory {
    pub const HEADER: [&'static str; 7] = ["epoch", "c_loss", "g_loss", "gp", "score_real", "score_fake", "seconds"];

    pub fn write_csv_to<W: Write>(&self, w: W, header: bool) -> Result<(), csv::Error> {
        let mut out = csv::Writer::from_writer(w);
        if header {
            out.write_record(Self::HEADER)?;
        }
        for r in &self.records {
            out.write_record([
                r.epoch.to_string(),
                r.critic_loss.to_string(),
                r.generator_loss.to_string(),
                r.gradient_penalty.to_string(),
                r.score_real.to_string(),
                r.score_fake.to_string(),
                format!("{:.3}", r.seconds),
            ])?;
        }
        out.flush()?;
        Ok(())
    }

    /// Writes the history, appending without a header when `append` is set
    /// and the file already exists.
    pub fn write_csv(&self, path: &Path, append: bool) -> Result<(), csv::Error> {
        let exists = path.exists();
        let file = std::fs::OpenOptions::new()
            .create(true)
            .write(true)
            .append(append)
            .truncate(!append)
            .open(path)?;
        self.write_csv_to(file, !(append && exists))
    }
}
