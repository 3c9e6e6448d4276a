//! Waveform interchange: CSV edge list plus a JSON sidecar carrying the
//! timebase.

use serde::{Deserialize, Serialize};

use super::{EdgeWaveform, WaveformError};

/// Sidecar metadata stored next to the CSV edge list.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct WaveformSidecar {
    pub resolution_fs: u64,
    pub initial_level: bool,
    pub duration_ticks: u64,
}

impl From<&EdgeWaveform> for WaveformSidecar {
    fn from(w: &EdgeWaveform) -> Self {
        WaveformSidecar {
            resolution_fs: w.resolution_fs(),
            initial_level: w.initial_level(),
            duration_ticks: w.duration(),
        }
    }
}

/// CSV edge list: header `time_ticks,new_level`, one row per transition.
pub fn waveform_to_csv(w: &EdgeWaveform) -> String {
    let mut out = String::from("time_ticks,new_level\n");
    for (t, level) in w.edges() {
        out.push_str(&format!("{t},{}\n", level as u8));
    }
    out
}

/// JSON sidecar for the CSV edge list.
pub fn sidecar_json(w: &EdgeWaveform) -> String {
    serde_json::to_string(&WaveformSidecar::from(w)).expect("sidecar serializes")
}

/// Rebuild a waveform from its CSV edge list and JSON sidecar.
pub fn waveform_from_csv(csv: &str, sidecar: &str) -> Result<EdgeWaveform, WaveformError> {
    let meta: WaveformSidecar =
        serde_json::from_str(sidecar).map_err(|e| WaveformError::Parse(e.to_string()))?;
    let mut edges = Vec::new();
    let mut expected_level: Option<bool> = None;
    for (lineno, line) in csv.lines().enumerate() {
        if lineno == 0 {
            if line.trim() != "time_ticks,new_level" {
                return Err(WaveformError::Parse(format!("bad header: {line}")));
            }
            continue;
        }
        if line.trim().is_empty() {
            continue;
        }
        let (t, level) = line
            .split_once(',')
            .ok_or_else(|| WaveformError::Parse(format!("line {lineno}: missing comma")))?;
        let t: u64 = t
            .trim()
            .parse()
            .map_err(|e| WaveformError::Parse(format!("line {lineno}: {e}")))?;
        let level = match level.trim() {
            "0" => false,
            "1" => true,
            other => {
                return Err(WaveformError::Parse(format!("line {lineno}: bad level {other}")))
            }
        };
        let want = expected_level.unwrap_or(!meta.initial_level);
        if level != want {
            return Err(WaveformError::Parse(format!(
                "line {lineno}: level {} breaks alternation",
                level as u8
            )));
        }
        expected_level = Some(!want);
        edges.push(t);
    }
    EdgeWaveform::new(meta.initial_level, edges, meta.duration_ticks, meta.resolution_fs)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_roundtrip() {
        let w = EdgeWaveform::new(true, vec![100, 250, 400], 1000, 5).unwrap();
        let csv = waveform_to_csv(&w);
        let side = sidecar_json(&w);
        assert!(csv.starts_with("time_ticks,new_level\n100,0\n250,1\n"));
        let back = waveform_from_csv(&csv, &side).unwrap();
        assert_eq!(back, w);
    }

    #[test]
    fn csv_rejects_broken_alternation() {
        let w = EdgeWaveform::new(false, vec![10, 20], 100, 1).unwrap();
        let side = sidecar_json(&w);
        let bad = "time_ticks,new_level\n10,1\n20,1\n";
        assert!(matches!(waveform_from_csv(bad, &side), Err(WaveformError::Parse(_))));
    }
}
