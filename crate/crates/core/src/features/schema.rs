//! The fixed 90-entry feature layout. Its order defines feature-vector indexing
//! everywhere in the library.

use std::sync::OnceLock;

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum FeatureGroup {
    Pupil,
    Oculomotor,
    Eyelid,
    Fnirs,
}

pub const N_PUPIL: usize = 16;
pub const N_OCULOMOTOR: usize = 18;
pub const N_EYELID: usize = 8;
pub const N_FNIRS: usize = 48;
pub const N_EYE: usize = N_PUPIL + N_OCULOMOTOR + N_EYELID;
pub const N_FEATURES: usize = N_EYE + N_FNIRS;

pub const PUPIL_NAMES: [&str; N_PUPIL] = [
    "pupil_mean",
    "pupil_std",
    "pupil_range",
    "pupil_skew",
    "pupil_kurtosis",
    "pupil_d1_mean",
    "pupil_d1_std",
    "pupil_d1_max",
    "pupil_d2_mean",
    "pupil_d2_std",
    "pupil_d2_max",
    "pupil_lf_power",
    "pupil_hf_power",
    "pupil_lf_hf_ratio",
    "pupil_sampen",
    "pupil_cv",
];

pub const OCULOMOTOR_NAMES: [&str; N_OCULOMOTOR] = [
    "gaze_std_x",
    "gaze_std_y",
    "gaze_corr_xy",
    "gaze_spatial_entropy",
    "gaze_vel_mean",
    "gaze_vel_std",
    "gaze_vel_max",
    "gaze_vel_p90",
    "gaze_acc_mean",
    "gaze_acc_std",
    "gaze_acc_max",
    "saccade_rate",
    "fixation_prop",
    "gaze_slope_x",
    "gaze_slope_y",
    "gaze_angle_change_mean",
    "gaze_angle_change_std",
    "gaze_speed_sampen",
];

pub const EYELID_NAMES: [&str; N_EYELID] = [
    "blink_rate",
    "blink_dur_mean",
    "blink_dur_std",
    "ibi_mean",
    "ibi_std",
    "perclos_total",
    "perclos_weighted",
    "blink_dur_max",
];

fn fnirs_names() -> Vec<String> {
    let mut v: Vec<String> = [
        "fnirs_mean",
        "fnirs_std",
        "fnirs_skew",
        "fnirs_range",
        "fnirs_d1_mean",
        "fnirs_d1_std",
        "fnirs_d1_skew",
        "fnirs_d1_range",
        "fnirs_vlf_power",
        "fnirs_lf_power",
        "fnirs_hf_power",
        "fnirs_lf_hf_ratio",
        "fnirs_vlf_lf_ratio",
    ]
    .iter()
    .map(|s| s.to_string())
    .collect();
    for roi in 1..=8 {
        v.push(format!("fnirs_roi{roi}_mean"));
        v.push(format!("fnirs_roi{roi}_std"));
        v.push(format!("fnirs_roi{roi}_sampen"));
    }
    v.extend(
        [
            "fnirs_lr_diff_mean",
            "fnirs_lr_diff_std",
            "fnirs_lr_diff_slope",
            "fnirs_lr_corr",
            "fnirs_ap_diff_mean",
            "fnirs_ap_diff_std",
            "fnirs_ap_diff_slope",
            "fnirs_ap_corr",
            "fnirs_sampen",
            "fnirs_hurst",
            "fnirs_outlier_prop",
        ]
        .iter()
        .map(|s| s.to_string()),
    );
    v
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct FeatureEntry {
    pub name: String,
    pub group: FeatureGroup,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct FeatureSchema {
    pub entries: Vec<FeatureEntry>,
}

impl FeatureSchema {
    /// The library-wide schema.
    pub fn get() -> &'static FeatureSchema {
        static SCHEMA: OnceLock<FeatureSchema> = OnceLock::new();
        SCHEMA.get_or_init(|| {
            let mut entries = Vec::with_capacity(N_FEATURES);
            let mut add = |names: Vec<String>, group| {
                entries.extend(names.into_iter().map(|name| FeatureEntry { name, group }));
            };
            add(PUPIL_NAMES.iter().map(|s| s.to_string()).collect(), FeatureGroup::Pupil);
            add(OCULOMOTOR_NAMES.iter().map(|s| s.to_string()).collect(), FeatureGroup::Oculomotor);
            add(EYELID_NAMES.iter().map(|s| s.to_string()).collect(), FeatureGroup::Eyelid);
            add(fnirs_names(), FeatureGroup::Fnirs);
            FeatureSchema { entries }
        })
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.entries.iter().map(|e| e.name.as_str())
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.entries.iter().position(|e| e.name == name)
    }

    pub fn group_count(&self, group: FeatureGroup) -> usize {
        self.entries.iter().filter(|e| e.group == group).count()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::HashSet;

    #[test]
    fn cardinalities_and_uniqueness() {
        let s = FeatureSchema::get();
        assert_eq!(s.len(), 90);
        assert_eq!(s.group_count(FeatureGroup::Pupil), 16);
        assert_eq!(s.group_count(FeatureGroup::Oculomotor), 18);
        assert_eq!(s.group_count(FeatureGroup::Eyelid), 8);
        assert_eq!(s.group_count(FeatureGroup::Fnirs), 48);
        let unique: HashSet<_> = s.names().collect();
        assert_eq!(unique.len(), 90);
    }

    #[test]
    fn eye_block_precedes_fnirs_block() {
        let s = FeatureSchema::get();
        assert!(s.entries[..N_EYE].iter().all(|e| e.group != FeatureGroup::Fnirs));
        assert!(s.entries[N_EYE..].iter().all(|e| e.group == FeatureGroup::Fnirs));
        assert_eq!(s.index_of("fnirs_mean"), Some(42));
    }
}
