//! Synthetic cohorts drawn from published marginals.
//!
//! Continuous variables come from truncated normals whose location and scale
//! are solved so that the *truncated* distribution reproduces the requested
//! mean and standard deviation. An optional point mass at the lower bound
//! models variables such as supplemental oxygen that are zero for most
//! patients.
//!
//! Labels come from a latent acuity score: a weighted sum of standardized
//! vital-sign deviations, a recourse offset, comorbidity bonuses and Gaussian
//! noise. The score is cut into slices whose widths equal the class
//! prevalences; cut points are estimated once per spec from a fixed-seed
//! calibration sample, so each record is still drawn independently.

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};
use statrs::function::erf::erfc;

use super::{
    AdmissionWindow, Cohort, CohortError, GemsaCode, PatientRecord, Provenance, Recourse, Result,
    Sex, TriageLevel, Vitals, N_CLASSES,
};

const CALIBRATION_DRAWS: usize = 20_000;
const CALIBRATION_SEED: u64 = 0x7a1_a9e;

/// Categorical proportions in enum declaration order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Proportions(pub Vec<f64>);

impl Proportions {
    pub fn from_counts(counts: &[u32]) -> Self {
        let total: u32 = counts.iter().sum();
        Proportions(counts.iter().map(|&c| c as f64 / total as f64).collect())
    }

    fn validate(&self, name: &str, expected_len: usize) -> Result<()> {
        if self.0.len() != expected_len {
            return Err(CohortError::InvalidSpec(format!(
                "{name}: expected {expected_len} proportions, got {}",
                self.0.len()
            )));
        }
        if self.0.iter().any(|p| !p.is_finite() || *p < 0.0) {
            return Err(CohortError::InvalidSpec(format!("{name}: negative or non-finite proportion")));
        }
        let sum: f64 = self.0.iter().sum();
        if (sum - 1.0).abs() > 1e-9 {
            return Err(CohortError::InvalidSpec(format!("{name}: proportions sum to {sum}, not 1")));
        }
        Ok(())
    }
}

/// Marginal of one continuous variable. `mean` and `sd` describe the whole
/// variable including any point mass at `min`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContinuousMarginal {
    pub mean: f64,
    pub sd: f64,
    pub min: f64,
    pub max: f64,
    /// Probability that the value equals `min` exactly.
    #[serde(default)]
    pub point_mass_at_min: f64,
    /// Decimal places kept after sampling.
    #[serde(default)]
    pub decimals: u32,
}

impl ContinuousMarginal {
    pub const fn new(mean: f64, sd: f64, min: f64, max: f64, decimals: u32) -> Self {
        Self { mean, sd, min, max, point_mass_at_min: 0.0, decimals }
    }

    fn validate(&self, name: &str) -> Result<()> {
        let bad = |why: &str| Err(CohortError::InvalidSpec(format!("{name}: {why}")));
        if ![self.mean, self.sd, self.min, self.max, self.point_mass_at_min]
            .iter()
            .all(|v| v.is_finite())
        {
            return bad("non-finite parameter");
        }
        if self.sd <= 0.0 {
            return bad("sd must be positive");
        }
        if self.min >= self.max {
            return bad("min must be below max");
        }
        if !(self.min < self.mean && self.mean < self.max) {
            return bad("mean must lie strictly inside [min, max]");
        }
        if !(0.0..1.0).contains(&self.point_mass_at_min) {
            return bad("point mass must lie in [0, 1)");
        }
        Ok(())
    }
}

/// Coefficients of the latent acuity score; larger scores are more acute.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AcuityLink {
    /// Weight on |z(SBP)|.
    pub sbp_abs: f64,
    /// Weight on |z(HR)|.
    pub hr_abs: f64,
    /// Weight on |z(temperature)|.
    pub temp_abs: f64,
    /// Weight on max(0, -z(SpO2)).
    pub spo2_low: f64,
    /// Weight on z(pain).
    pub eva: f64,
    /// Weight on z(O2 flow).
    pub o2: f64,
    /// Weight on z(age).
    pub age: f64,
    /// Per-recourse offsets, in `Recourse::ALL` order.
    pub recourse_offsets: Vec<f64>,
    pub comorbidity_bonus: f64,
    pub vascular_bonus: f64,
    /// Standard deviation of the noise in the gold latent score.
    pub noise_sd: f64,
    /// Extra noise separating the nurse's label from the gold label.
    pub nurse_noise_sd: f64,
    /// Extra noise separating the GEMSA disposition from the gold acuity.
    pub gemsa_noise_sd: f64,
    /// Extra noise in the severity conveyed by the history narrative.
    pub narrative_noise_sd: f64,
}

impl AcuityLink {
    fn validate(&self) -> Result<()> {
        if self.recourse_offsets.len() != Recourse::ALL.len() {
            return Err(CohortError::InvalidSpec("link: need one offset per recourse".into()));
        }
        let sds = [self.noise_sd, self.nurse_noise_sd, self.gemsa_noise_sd, self.narrative_noise_sd];
        if sds.iter().any(|s| !s.is_finite() || *s < 0.0) {
            return Err(CohortError::InvalidSpec("link: noise sds must be finite and >= 0".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MarginalSpec {
    pub sex: Proportions,
    pub admission_window: Proportions,
    pub recourse: Proportions,
    pub comorbidity_any: f64,
    /// P(vascular comorbidity | any comorbidity).
    pub vascular_given_any: f64,
    /// Prevalence of each triage level, most acute first.
    pub triage: Proportions,
    /// GEMSA codes 1..6 followed by `Unspecified`.
    pub gemsa: Proportions,
    pub age: ContinuousMarginal,
    pub sbp: ContinuousMarginal,
    pub dbp: ContinuousMarginal,
    pub hr: ContinuousMarginal,
    pub temp: ContinuousMarginal,
    pub eva: ContinuousMarginal,
    pub spo2: ContinuousMarginal,
    pub o2: ContinuousMarginal,
    pub link: AcuityLink,
}

impl MarginalSpec {
    /// Marginals of the 657-patient Lille cohort. Categorical proportions are
    /// exact count ratios. DBP is truncated at 30 mmHg instead of the listed 0.
    pub fn table1() -> Self {
        let mut eva = ContinuousMarginal::new(4.0, 3.64, 0.0, 10.0, 0);
        eva.point_mass_at_min = 0.4;
        let mut o2 = ContinuousMarginal::new(0.04, 0.39, 0.0, 6.0, 0);
        o2.point_mass_at_min = 0.9867;
        MarginalSpec {
            sex: Proportions::from_counts(&[330, 327]),
            admission_window: Proportions::from_counts(&[211, 241, 205]),
            recourse: Proportions::from_counts(&[
                102, 86, 31, 34, 2, 8, 6, 69, 4, 62, 40, 24, 26, 36, 127,
            ]),
            comorbidity_any: 161.0 / 657.0,
            vascular_given_any: 75.0 / 161.0,
            triage: Proportions::from_counts(&[4, 86, 0, 354, 118, 95]),
            gemsa: Proportions::from_counts(&[0, 509, 18, 102, 10, 0, 18]),
            age: ContinuousMarginal::new(42.6, 19.71, 18.0, 105.0, 0),
            sbp: ContinuousMarginal::new(143.0, 23.67, 84.0, 234.0, 0),
            dbp: ContinuousMarginal::new(83.0, 16.15, 30.0, 148.0, 0),
            hr: ContinuousMarginal::new(89.0, 17.56, 43.0, 187.0, 0),
            temp: ContinuousMarginal::new(37.5, 0.58, 34.9, 40.0, 1),
            eva,
            spo2: ContinuousMarginal::new(97.0, 1.67, 84.0, 100.0, 0),
            o2,
            link: AcuityLink {
                sbp_abs: 0.5,
                hr_abs: 0.7,
                temp_abs: 0.4,
                spo2_low: 0.9,
                eva: 0.5,
                o2: 0.6,
                age: 0.3,
                recourse_offsets: vec![
                    0.2,  // ABDO
                    0.8,  // CARDIO
                    -0.2, // VARIOUS
                    0.0,  // GU
                    0.3,  // GYN_OB
                    0.3,  // INFECT
                    0.9,  // POISON
                    0.7,  // NEURO
                    -0.3, // OPHTH
                    -0.6, // ENT_STOMA
                    -0.8, // DERM
                    0.1,  // PSY
                    0.6,  // PULM
                    -0.4, // RHEUM
                    -0.3, // TRAUMA
                ],
                comorbidity_bonus: 0.3,
                vascular_bonus: 0.3,
                noise_sd: 0.5,
                nurse_noise_sd: 1.5,
                gemsa_noise_sd: 0.8,
                narrative_noise_sd: 1.0,
            },
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.sex.validate("sex", Sex::ALL.len())?;
        self.admission_window.validate("admission_window", AdmissionWindow::ALL.len())?;
        self.recourse.validate("recourse", Recourse::ALL.len())?;
        self.triage.validate("triage", N_CLASSES)?;
        self.gemsa.validate("gemsa", N_CLASSES + 1)?;
        for (name, p) in [
            ("comorbidity_any", self.comorbidity_any),
            ("vascular_given_any", self.vascular_given_any),
        ] {
            if !(0.0..=1.0).contains(&p) {
                return Err(CohortError::InvalidSpec(format!("{name}: probability {p} outside [0, 1]")));
            }
        }
        if self.gemsa.0[N_CLASSES] >= 1.0 {
            return Err(CohortError::InvalidSpec("gemsa: every code unspecified".into()));
        }
        for (name, m) in self.continuous() {
            m.validate(name)?;
        }
        if self.age.min < super::MIN_ADULT_AGE as f64 {
            return Err(CohortError::InvalidSpec("age: minimum below adult threshold".into()));
        }
        if self.spo2.min < 0.0 || self.spo2.max > 100.0 || self.eva.min < 0.0 || self.eva.max > 10.0 || self.o2.min < 0.0 {
            return Err(CohortError::InvalidSpec("vital bounds outside physical range".into()));
        }
        self.link.validate()
    }

    fn continuous(&self) -> [(&'static str, &ContinuousMarginal); 8] {
        [
            ("age", &self.age),
            ("sbp", &self.sbp),
            ("dbp", &self.dbp),
            ("hr", &self.hr),
            ("temp", &self.temp),
            ("eva", &self.eva),
            ("spo2", &self.spo2),
            ("o2", &self.o2),
        ]
    }
}

/// Standard normal tail probability P(Z > x), accurate far into the tail.
fn upper_tail(x: f64) -> f64 {
    0.5 * erfc(x / std::f64::consts::SQRT_2)
}

fn std_pdf(x: f64) -> f64 {
    (-0.5 * x * x).exp() / (2.0 * std::f64::consts::PI).sqrt()
}

/// Mean and standard deviation of N(loc, scale^2) truncated to [lo, hi].
pub(crate) fn truncated_moments(loc: f64, scale: f64, lo: f64, hi: f64) -> (f64, f64) {
    let a = (lo - loc) / scale;
    let b = (hi - loc) / scale;
    // Use whichever tail keeps the mass difference well conditioned.
    let z = if a > 0.0 {
        upper_tail(a) - upper_tail(b)
    } else if b < 0.0 {
        upper_tail(-b) - upper_tail(-a)
    } else {
        1.0 - upper_tail(-a) - upper_tail(b)
    };
    if !(z > 1e-300) {
        let edge = if a > 0.0 { lo } else { hi };
        return (edge, 0.0);
    }
    let (pa, pb) = (std_pdf(a), std_pdf(b));
    let r = (pa - pb) / z;
    let mean = loc + scale * r;
    let var = scale * scale * (1.0 + (a * pa - b * pb) / z - r * r);
    (mean.clamp(lo, hi), var.max(0.0).sqrt())
}

/// Truncated normal with an optional point mass at the lower bound.
#[derive(Debug, Clone)]
pub(crate) struct TruncatedSampler {
    loc: f64,
    scale: f64,
    lo: f64,
    hi: f64,
    point_mass: f64,
    factor: f64,
    cdf_lo: f64,
    cdf_hi: f64,
}

fn bisect(mut lo: f64, mut hi: f64, f: impl Fn(f64) -> f64) -> f64 {
    // f increasing, root bracketed
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if f(mid) < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= 1e-12 * (1.0 + mid.abs()) {
            break;
        }
    }
    0.5 * (lo + hi)
}

impl TruncatedSampler {
    /// Solves for the latent normal whose truncation matches the marginal.
    pub(crate) fn fit(m: &ContinuousMarginal, name: &str) -> Result<Self> {
        let range = m.max - m.min;
        let keep = 1.0 - m.point_mass_at_min;
        let mean = m.min + (m.mean - m.min) / keep;
        let second = (m.sd * m.sd + (m.mean - m.min).powi(2)) / keep;
        let var = second - (mean - m.min).powi(2);
        if !(mean < m.max) || !(var > 0.0) {
            return Err(CohortError::InvalidSpec(format!(
                "{name}: moments unattainable with point mass {}",
                m.point_mass_at_min
            )));
        }
        let target_sd = var.sqrt();

        let loc_for = |scale: f64| {
            bisect(m.min - 20.0 * range, m.max + 20.0 * range, |loc| {
                truncated_moments(loc, scale, m.min, m.max).0 - mean
            })
        };
        let sd_for = |scale: f64| truncated_moments(loc_for(scale), scale, m.min, m.max).1;
        let (smin, smax) = (1e-4 * range, 10.0 * range);
        if target_sd >= sd_for(smax) {
            return Err(CohortError::InvalidSpec(format!(
                "{name}: sd {} unattainable on [{}, {}]",
                m.sd, m.min, m.max
            )));
        }
        let scale = bisect(smin, smax, |s| sd_for(s) - target_sd);
        let loc = loc_for(scale);

        let normal = Normal::new(loc, scale).map_err(|e| CohortError::InvalidSpec(format!("{name}: {e}")))?;
        Ok(Self {
            loc,
            scale,
            lo: m.min,
            hi: m.max,
            point_mass: m.point_mass_at_min,
            factor: 10f64.powi(m.decimals as i32),
            cdf_lo: normal.cdf(m.min),
            cdf_hi: normal.cdf(m.max),
        })
    }

    pub(crate) fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let u: f64 = rng.random();
        let v: f64 = rng.random();
        if self.point_mass > 0.0 && u < self.point_mass {
            return self.lo;
        }
        let x = if self.cdf_hi - self.cdf_lo > 1e-9 {
            let normal = Normal::new(self.loc, self.scale).expect("validated at fit");
            normal.inverse_cdf(self.cdf_lo + v * (self.cdf_hi - self.cdf_lo))
        } else {
            self.lo + v * (self.hi - self.lo)
        };
        ((x * self.factor).round() / self.factor).clamp(self.lo, self.hi)
    }
}

struct Samplers {
    age: TruncatedSampler,
    sbp: TruncatedSampler,
    dbp: TruncatedSampler,
    hr: TruncatedSampler,
    temp: TruncatedSampler,
    eva: TruncatedSampler,
    spo2: TruncatedSampler,
    o2: TruncatedSampler,
    sex: WeightedIndex<f64>,
    window: WeightedIndex<f64>,
    recourse: WeightedIndex<f64>,
}

fn weighted(p: &Proportions, name: &str) -> Result<WeightedIndex<f64>> {
    WeightedIndex::new(&p.0).map_err(|e| CohortError::InvalidSpec(format!("{name}: {e}")))
}

impl Samplers {
    fn new(spec: &MarginalSpec) -> Result<Self> {
        Ok(Self {
            age: TruncatedSampler::fit(&spec.age, "age")?,
            sbp: TruncatedSampler::fit(&spec.sbp, "sbp")?,
            dbp: TruncatedSampler::fit(&spec.dbp, "dbp")?,
            hr: TruncatedSampler::fit(&spec.hr, "hr")?,
            temp: TruncatedSampler::fit(&spec.temp, "temp")?,
            eva: TruncatedSampler::fit(&spec.eva, "eva")?,
            spo2: TruncatedSampler::fit(&spec.spo2, "spo2")?,
            o2: TruncatedSampler::fit(&spec.o2, "o2")?,
            sex: weighted(&spec.sex, "sex")?,
            window: weighted(&spec.admission_window, "admission_window")?,
            recourse: weighted(&spec.recourse, "recourse")?,
        })
    }
}

/// Features of one draw before labels are attached.
struct Draw {
    age: u32,
    sex: Sex,
    window: AdmissionWindow,
    recourse: Recourse,
    any: bool,
    vascular: bool,
    vitals: Vitals,
    latent: f64,
    nurse_latent: f64,
    gemsa_latent: f64,
    narrative_latent: f64,
    gemsa_unspecified: bool,
}

fn z(x: f64, m: &ContinuousMarginal) -> f64 {
    (x - m.mean) / m.sd
}

fn draw<R: Rng>(spec: &MarginalSpec, s: &Samplers, rng: &mut R) -> Draw {
    let sex = Sex::ALL[s.sex.sample(rng)];
    let window = AdmissionWindow::ALL[s.window.sample(rng)];
    let recourse_idx = s.recourse.sample(rng);
    let age = s.age.sample(rng);
    let any = rng.random::<f64>() < spec.comorbidity_any;
    let vascular = any && rng.random::<f64>() < spec.vascular_given_any;
    let vitals = Vitals {
        sbp: s.sbp.sample(rng),
        dbp: s.dbp.sample(rng),
        hr: s.hr.sample(rng),
        temp: s.temp.sample(rng),
        eva: s.eva.sample(rng),
        spo2: s.spo2.sample(rng),
        o2: s.o2.sample(rng),
    };

    let l = &spec.link;
    let signal = l.sbp_abs * z(vitals.sbp, &spec.sbp).abs()
        + l.hr_abs * z(vitals.hr, &spec.hr).abs()
        + l.temp_abs * z(vitals.temp, &spec.temp).abs()
        + l.spo2_low * (-z(vitals.spo2, &spec.spo2)).max(0.0)
        + l.eva * z(vitals.eva, &spec.eva)
        + l.o2 * z(vitals.o2, &spec.o2)
        + l.age * z(age, &spec.age)
        + l.recourse_offsets[recourse_idx]
        + if any { l.comorbidity_bonus } else { 0.0 }
        + if vascular { l.vascular_bonus } else { 0.0 };
    let e0: f64 = rng.sample(StandardNormal);
    let e1: f64 = rng.sample(StandardNormal);
    let e2: f64 = rng.sample(StandardNormal);
    let e3: f64 = rng.sample(StandardNormal);
    let latent = signal + l.noise_sd * e0;
    let unspecified = rng.random::<f64>() < spec.gemsa.0[N_CLASSES];

    Draw {
        age: age as u32,
        sex,
        window,
        recourse: Recourse::ALL[recourse_idx],
        any,
        vascular,
        vitals,
        latent,
        nurse_latent: latent + l.nurse_noise_sd * e1,
        gemsa_latent: latent + l.gemsa_noise_sd * e2,
        narrative_latent: latent + l.narrative_noise_sd * e3,
        gemsa_unspecified: unspecified,
    }
}

/// Thresholds slicing a latent score into classes, most acute first.
/// Class k receives scores in [cuts[k], cuts[k-1]).
#[derive(Debug, Clone)]
struct Slicer {
    cuts: Vec<f64>,
}

impl Slicer {
    fn fit(mut scores: Vec<f64>, proportions: &[f64]) -> Self {
        scores.sort_by(|a, b| b.total_cmp(a));
        let n = scores.len();
        let mut cum = 0.0;
        let mut cuts = Vec::with_capacity(proportions.len());
        for p in &proportions[..proportions.len() - 1] {
            cum += p;
            let k = (cum * n as f64).round() as usize;
            cuts.push(if k == 0 { f64::INFINITY } else { scores[(k - 1).min(n - 1)] });
        }
        cuts.push(f64::NEG_INFINITY);
        Self { cuts }
    }

    fn classify(&self, score: f64) -> usize {
        self.cuts.iter().position(|&c| score >= c).unwrap_or(self.cuts.len() - 1)
    }
}

const TEMPLATES: [&[&str]; 15] = [
    &["douleur abdominale", "vomissements", "douleur épigastrique", "diarrhée"],
    &["douleur thoracique", "palpitations", "oppression thoracique", "malaise avec sueurs"],
    &["altération de l'état général", "chute à domicile", "asthénie", "fatigue"],
    &["douleur lombaire", "brûlures mictionnelles", "rétention urinaire", "hématurie"],
    &["saignement vaginal", "douleur pelvienne", "grossesse et douleurs"],
    &["fièvre", "frissons", "syndrome grippal", "toux fébrile"],
    &["intoxication médicamenteuse", "ingestion volontaire", "alcoolisation aiguë"],
    &["céphalées", "déficit moteur", "vertiges", "trouble de la parole"],
    &["oeil rouge", "baisse de vision", "corps étranger oculaire"],
    &["mal de gorge", "otalgie", "épistaxis", "douleur dentaire"],
    &["éruption cutanée", "prurit", "plaie infectée", "abcès"],
    &["anxiété", "idées suicidaires", "agitation", "crise d'angoisse"],
    &["dyspnée", "toux", "essoufflement", "crachats"],
    &["douleur du genou", "lombalgie", "douleur articulaire", "gonflement de la cheville"],
    &["chute avec traumatisme", "entorse", "plaie de la main", "traumatisme crânien"],
];

fn history_text<R: Rng>(recourse: Recourse, level: TriageLevel, rng: &mut R) -> String {
    let phrases = TEMPLATES[Recourse::ALL.iter().position(|r| *r == recourse).unwrap()];
    let complaint = phrases[rng.random_range(0..phrases.len())];
    let severity: &[&str] = match level {
        TriageLevel::T1 => &["brutale intense", "avec détresse", "très sévère"],
        TriageLevel::T2 => &["intense", "brutale", "sévère"],
        TriageLevel::T3A | TriageLevel::T3B => &["modérée", "persistante", "gênante"],
        TriageLevel::T4 => &["légère", "supportable", "stable"],
        TriageLevel::T5 => &["ancienne", "minime", "chronique"],
    };
    let (amount, unit) = match level {
        TriageLevel::T1 | TriageLevel::T2 => (rng.random_range(1..=6), "heures"),
        TriageLevel::T3A | TriageLevel::T3B => (rng.random_range(6..=48), "heures"),
        _ => (rng.random_range(2..=15), "jours"),
    };
    let sev = severity[rng.random_range(0..severity.len())];
    format!("{complaint} {sev} depuis {amount} {unit}")
}

/// Latent slicers estimated from the spec alone (fixed calibration seed).
fn fit_slicers(spec: &MarginalSpec, samplers: &Samplers) -> (Slicer, Slicer, Slicer) {
    let mut rng = ChaCha8Rng::seed_from_u64(CALIBRATION_SEED);
    let draws: Vec<Draw> = (0..CALIBRATION_DRAWS).map(|_| draw(spec, samplers, &mut rng)).collect();
    let gold = Slicer::fit(draws.iter().map(|d| d.latent).collect(), &spec.triage.0);
    let nurse = Slicer::fit(draws.iter().map(|d| d.nurse_latent).collect(), &spec.triage.0);
    // More acute dispositions carry higher GEMSA codes, so slice from G6 down.
    let coded = &spec.gemsa.0[..N_CLASSES];
    let total: f64 = coded.iter().sum();
    let descending: Vec<f64> = coded.iter().rev().map(|p| p / total).collect();
    let gemsa = Slicer::fit(draws.iter().map(|d| d.gemsa_latent).collect(), &descending);
    (gold, nurse, gemsa)
}

/// Draws `n` independent synthetic patients. Identical `(spec, n, seed)`
/// always yield an identical cohort.
pub fn synthesize_cohort(spec: &MarginalSpec, n: usize, seed: u64) -> Result<Cohort> {
    if n == 0 {
        return Err(CohortError::InvalidSpec("n must be at least 1".into()));
    }
    spec.validate()?;
    let samplers = Samplers::new(spec)?;
    let (gold, nurse, gemsa) = fit_slicers(spec, &samplers);

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let records = (0..n)
        .map(|i| {
            let d = draw(spec, &samplers, &mut rng);
            let gold_level = TriageLevel::ALL[gold.classify(d.latent)];
            let code = if d.gemsa_unspecified {
                GemsaCode::Unspecified
            } else {
                GemsaCode::CODED[N_CLASSES - 1 - gemsa.classify(d.gemsa_latent)]
            };
            PatientRecord {
                case_id: format!("S{:05}", i + 1),
                age: d.age,
                sex: d.sex,
                admission_window: d.window,
                recourse: d.recourse,
                comorbidity_any: d.any,
                comorbidity_vascular: d.vascular,
                vitals: d.vitals,
                history_text: Some(history_text(d.recourse, TriageLevel::ALL[gold.classify(d.narrative_latent)], &mut rng)),
                nurse_triage: Some(TriageLevel::ALL[nurse.classify(d.nurse_latent)]),
                gold_triage: Some(gold_level),
                gemsa: code,
            }
        })
        .collect();
    Ok(Cohort { records, provenance: Provenance::Synthetic })
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Midpoint-rule quadrature of the truncated density; independent of the
    /// closed form.
    fn quadrature_moments(loc: f64, scale: f64, lo: f64, hi: f64) -> (f64, f64) {
        let steps = 200_000;
        let h = (hi - lo) / steps as f64;
        let (mut m0, mut m1, mut m2) = (0.0, 0.0, 0.0);
        for i in 0..steps {
            let x = lo + (i as f64 + 0.5) * h;
            let w = (-0.5 * ((x - loc) / scale).powi(2)).exp();
            m0 += w;
            m1 += w * x;
            m2 += w * x * x;
        }
        let mean = m1 / m0;
        (mean, (m2 / m0 - mean * mean).sqrt())
    }

    #[test]
    fn closed_form_moments_match_quadrature() {
        for (loc, scale, lo, hi) in [
            (42.6, 19.71, 18.0, 105.0),
            (0.0, 1.0, -1.0, 2.0),
            (-5.0, 3.0, 0.0, 10.0),
            (37.5, 0.6, 34.9, 40.0),
        ] {
            let (m, s) = truncated_moments(loc, scale, lo, hi);
            let (mq, sq) = quadrature_moments(loc, scale, lo, hi);
            assert!((m - mq).abs() < 1e-6, "{m} vs {mq}");
            assert!((s - sq).abs() < 1e-6, "{s} vs {sq}");
        }
    }

    #[test]
    fn fitted_sampler_reproduces_moments() {
        let spec = MarginalSpec::table1();
        for (name, m) in spec.continuous() {
            let s = TruncatedSampler::fit(m, name).unwrap();
            let keep = 1.0 - m.point_mass_at_min;
            let (cm, csd) = truncated_moments(s.loc, s.scale, m.min, m.max);
            let mean = m.min * m.point_mass_at_min + keep * cm;
            let second = m.min * m.min * m.point_mass_at_min + keep * (csd * csd + cm * cm);
            let sd = (second - mean * mean).sqrt();
            assert!((mean - m.mean).abs() < 1e-6, "{name}: mean {mean}");
            assert!((sd - m.sd).abs() < 1e-6, "{name}: sd {sd}");
        }
    }

    #[test]
    fn unattainable_sd_rejected() {
        // a uniform on [0, 10] has sd 2.89; nothing truncated can exceed it
        let m = ContinuousMarginal::new(4.0, 3.64, 0.0, 10.0, 0);
        assert!(matches!(TruncatedSampler::fit(&m, "eva"), Err(CohortError::InvalidSpec(_))));
    }

    #[test]
    fn table1_spec_is_valid() {
        MarginalSpec::table1().validate().unwrap();
    }

    #[test]
    fn invalid_specs() {
        let mut s = MarginalSpec::table1();
        s.sex = Proportions(vec![0.6, 0.6]);
        assert!(matches!(s.validate(), Err(CohortError::InvalidSpec(_))));
        let mut s = MarginalSpec::table1();
        s.sbp.sd = 0.0;
        assert!(s.validate().is_err());
        let mut s = MarginalSpec::table1();
        s.hr.min = 200.0;
        assert!(s.validate().is_err());
        assert!(synthesize_cohort(&MarginalSpec::table1(), 0, 1).is_err());
    }

    #[test]
    fn slicer_respects_proportions() {
        let scores: Vec<f64> = (0..1000).map(|i| i as f64).collect();
        let s = Slicer::fit(scores.clone(), &[0.1, 0.2, 0.0, 0.4, 0.2, 0.1]);
        let mut counts = [0usize; 6];
        for x in scores {
            counts[s.classify(x)] += 1;
        }
        assert_eq!(counts, [100, 200, 0, 400, 200, 100]);
    }

    #[test]
    fn history_text_mentions_complaint() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let t = history_text(Recourse::Cardio, TriageLevel::T2, &mut rng);
        assert!(t.contains("depuis"));
        assert!(TEMPLATES[1].iter().any(|p| t.starts_with(p)));
    }
}
