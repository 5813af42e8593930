use serde::{Deserialize, Serialize};

/// Number of fNIRS channels every session must carry before pruning.
pub const FNIRS_CHANNELS: usize = 8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Phase {
    #[serde(rename = "alert")]
    AlertBaseline,
    #[serde(rename = "induction")]
    Induction,
    #[serde(rename = "post")]
    PostTask,
}

impl Phase {
    pub fn as_str(self) -> &'static str {
        match self {
            Phase::AlertBaseline => "alert",
            Phase::Induction => "induction",
            Phase::PostTask => "post",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "alert" => Some(Phase::AlertBaseline),
            "induction" => Some(Phase::Induction),
            "post" => Some(Phase::PostTask),
            _ => None,
        }
    }

    /// Binary class label carried by windows of this phase. Induction has none.
    pub fn label(self) -> Option<u8> {
        match self {
            Phase::AlertBaseline => Some(0),
            Phase::PostTask => Some(1),
            Phase::Induction => None,
        }
    }

    pub fn from_label(label: u8) -> Self {
        if label == 0 {
            Phase::AlertBaseline
        } else {
            Phase::PostTask
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhaseMark {
    pub start: f64,
    pub end: f64,
    pub phase: Phase,
}

impl PhaseMark {
    pub fn duration(&self) -> f64 {
        self.end - self.start
    }

    pub fn contains(&self, t: f64) -> bool {
        t >= self.start && t < self.end
    }
}

/// Eye tracker samples stored column-wise.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct EyeStream {
    pub t: Vec<f64>,
    pub gaze_x: Vec<f64>,
    pub gaze_y: Vec<f64>,
    pub pupil: Vec<f64>,
    pub valid: Vec<bool>,
}

impl EyeStream {
    pub fn len(&self) -> usize {
        self.t.len()
    }

    pub fn is_empty(&self) -> bool {
        self.t.is_empty()
    }

    pub fn push(&mut self, t: f64, gx: f64, gy: f64, pupil: f64, valid: bool) {
        self.t.push(t);
        self.gaze_x.push(gx);
        self.gaze_y.push(gy);
        self.pupil.push(pupil);
        self.valid.push(valid);
    }

    /// Nominal sampling rate from the median inter-sample interval.
    pub fn rate_hz(&self) -> f64 {
        1.0 / median_period(&self.t)
    }
}

/// fNIRS samples: one timestamp column and `FNIRS_CHANNELS` value columns.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct FnirsStream {
    pub t: Vec<f64>,
    pub channels: Vec<Vec<f64>>,
}

impl FnirsStream {
    pub fn with_channels(n: usize) -> Self {
        Self { t: Vec::new(), channels: vec![Vec::new(); n] }
    }

    pub fn len(&self) -> usize {
        self.t.len()
    }

    pub fn is_empty(&self) -> bool {
        self.t.is_empty()
    }

    pub fn rate_hz(&self) -> f64 {
        1.0 / median_period(&self.t)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecordingSession {
    pub participant_id: String,
    pub eye: EyeStream,
    pub fnirs: FnirsStream,
    pub phases: Vec<PhaseMark>,
}

impl RecordingSession {
    pub fn phase_at(&self, t: f64) -> Option<Phase> {
        self.phases.iter().find(|m| m.contains(t)).map(|m| m.phase)
    }
}

pub fn median_period(t: &[f64]) -> f64 {
    if t.len() < 2 {
        return 1.0;
    }
    let mut d: Vec<f64> = t.windows(2).map(|w| w[1] - w[0]).collect();
    d.sort_by(|a, b| a.total_cmp(b));
    d[d.len() / 2]
}
