//! Label catalogs: the closed set of labels a dataset may use.
//!
//! Labels are matched on their canonical form (see
//! [`normalize_label`](crate::text::normalize_label)) but the catalog keeps the
//! display casing so emitted training targets read like the source catalog
//! (`CS`, `Machine learning`).

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::corpus::LabelScheme;
use crate::text::normalize_label;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum CatalogError {
    #[error("label catalog is empty")]
    Empty,
    #[error("label `{0}` is empty after normalization")]
    EmptyLabel(String),
    #[error("label `{0}` is not in the catalog")]
    Unknown(String),
    #[error("hierarchical labels need a domain and an area, got {0:?}")]
    BadHierarchy(Vec<String>),
    #[error("`{area}` is not an area of domain `{domain}`")]
    AreaOutsideDomain { domain: String, area: String },
    #[error("no labels given")]
    NoLabels,
}

/// One level-1 entry of a two-level catalog with its level-2 areas, in
/// catalog order.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Domain {
    pub name: String,
    pub areas: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabelCatalog {
    /// canonical form -> display form, in insertion order via `order`
    display: BTreeMap<String, String>,
    order: Vec<String>,
    hierarchy: Option<Vec<Domain>>,
}

impl LabelCatalog {
    /// Flat catalog. Duplicates (after normalization) keep their first display form.
    pub fn from_labels<I, S>(labels: I) -> Result<Self, CatalogError>
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        let mut cat = LabelCatalog {
            display: BTreeMap::new(),
            order: Vec::new(),
            hierarchy: None,
        };
        for l in labels {
            cat.insert(l.as_ref())?;
        }
        if cat.order.is_empty() {
            return Err(CatalogError::Empty);
        }
        Ok(cat)
    }

    /// Two-level catalog. The label set is the union of domains and areas.
    pub fn from_hierarchy(domains: Vec<Domain>) -> Result<Self, CatalogError> {
        let mut cat = LabelCatalog {
            display: BTreeMap::new(),
            order: Vec::new(),
            hierarchy: None,
        };
        for d in &domains {
            cat.insert(&d.name)?;
            for a in &d.areas {
                cat.insert(a)?;
            }
        }
        if cat.order.is_empty() {
            return Err(CatalogError::Empty);
        }
        cat.hierarchy = Some(domains);
        Ok(cat)
    }

    fn insert(&mut self, raw: &str) -> Result<(), CatalogError> {
        let canon = normalize_label(raw);
        if canon.is_empty() {
            return Err(CatalogError::EmptyLabel(raw.to_string()));
        }
        if !self.display.contains_key(&canon) {
            self.display.insert(canon.clone(), raw.trim().to_string());
            self.order.push(canon);
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.order.len()
    }

    pub fn is_empty(&self) -> bool {
        self.order.is_empty()
    }

    pub fn contains(&self, label: &str) -> bool {
        self.display.contains_key(&normalize_label(label))
    }

    /// Catalog casing for a label, if known.
    pub fn display(&self, label: &str) -> Option<&str> {
        self.display.get(&normalize_label(label)).map(String::as_str)
    }

    /// Canonical labels in catalog order.
    pub fn canonical_labels(&self) -> impl Iterator<Item = &str> {
        self.order.iter().map(String::as_str)
    }

    pub fn canonical_set(&self) -> BTreeSet<String> {
        self.order.iter().cloned().collect()
    }

    pub fn hierarchy(&self) -> Option<&[Domain]> {
        self.hierarchy.as_deref()
    }

    pub fn is_domain(&self, label: &str) -> bool {
        let canon = normalize_label(label);
        self.hierarchy
            .as_ref()
            .is_some_and(|h| h.iter().any(|d| normalize_label(&d.name) == canon))
    }

    fn domain(&self, label: &str) -> Option<&Domain> {
        let canon = normalize_label(label);
        self.hierarchy
            .as_ref()?
            .iter()
            .find(|d| normalize_label(&d.name) == canon)
    }

    /// Checks that every label is known and, for the two-level scheme, that the
    /// labels form a `[domain, area]` pair with the area under that domain.
    pub fn validate(&self, labels: &[String], scheme: LabelScheme) -> Result<(), CatalogError> {
        if labels.is_empty() {
            return Err(CatalogError::NoLabels);
        }
        for l in labels {
            if !self.contains(l) {
                return Err(CatalogError::Unknown(l.clone()));
            }
        }
        if scheme == LabelScheme::Hierarchical2 && self.hierarchy.is_some() {
            if labels.len() != 2 {
                return Err(CatalogError::BadHierarchy(labels.to_vec()));
            }
            let domain = self
                .domain(&labels[0])
                .ok_or_else(|| CatalogError::BadHierarchy(labels.to_vec()))?;
            let area = normalize_label(&labels[1]);
            if !domain.areas.iter().any(|a| normalize_label(a) == area) {
                return Err(CatalogError::AreaOutsideDomain {
                    domain: domain.name.clone(),
                    area: labels[1].clone(),
                });
            }
        }
        Ok(())
    }

    /// Text used for the "available labels" block of generation prompts: a
    /// comma-separated list, or one `Domain:`/`Area:` block per domain for a
    /// two-level catalog.
    pub fn prompt_listing(&self) -> String {
        match &self.hierarchy {
            None => {
                let shown: Vec<&str> = self
                    .order
                    .iter()
                    .map(|c| self.display[c].as_str())
                    .collect();
                shown.join(", ")
            }
            Some(domains) => {
                let blocks: Vec<String> = domains
                    .iter()
                    .map(|d| {
                        let mut s = String::from("Domain: ");
                        s.push_str(&d.name);
                        s.push_str("\nArea: ");
                        s.push_str(&d.areas.join(", "));
                        s
                    })
                    .collect();
                blocks.join("\n\n")
            }
        }
    }

    /// Display-form labels in catalog order, as written to catalog files.
    pub fn display_labels(&self) -> Vec<String> {
        self.order.iter().map(|c| self.display[c].clone()).collect()
    }

    /// The bundled 90-topic Reuters-21578 ApteMod catalog.
    pub fn reuters() -> Self {
        Self::from_labels(REUTERS_TOPICS).expect("bundled catalog is valid")
    }

    /// The bundled Web of Science catalog (7 domains with their areas).
    pub fn wos() -> Self {
        let domains = WOS_DOMAINS
            .iter()
            .map(|(name, areas)| Domain {
                name: (*name).to_string(),
                areas: areas.iter().map(|a| (*a).to_string()).collect(),
            })
            .collect();
        Self::from_hierarchy(domains).expect("bundled catalog is valid")
    }
}

pub const REUTERS_TOPICS: [&str; 90] = [
    "acq", "alum", "barley", "bop", "carcass", "castor-oil", "cocoa", "coconut", "coconut-oil",
    "coffee", "copper", "copra-cake", "corn", "cotton", "cotton-oil", "cpi", "cpu", "crude", "dfl",
    "dlr", "dmk", "earn", "fuel", "gas", "gnp", "gold", "grain", "groundnut", "groundnut-oil",
    "heat", "hog", "housing", "income", "instal-debt", "interest", "ipi", "iron-steel", "jet",
    "jobs", "l-cattle", "lead", "lei", "lin-oil", "livestock", "lumber", "meal-feed", "money-fx",
    "money-supply", "naphtha", "nat-gas", "nickel", "nkr", "nzdlr", "oat", "oilseed", "orange",
    "palladium", "palm-oil", "palmkernel", "pet-chem", "platinum", "potato", "propane", "rand",
    "rape-oil", "rapeseed", "reserves", "retail", "rice", "rubber", "rye", "ship", "silver",
    "sorghum", "soy-meal", "soy-oil", "soybean", "strategic-metal", "sugar", "sun-meal", "sun-oil",
    "sunseed", "tea", "tin", "trade", "veg-oil", "wheat", "wpi", "yen", "zinc",
];

pub const WOS_DOMAINS: [(&str, &[&str]); 7] = [
    (
        "CS",
        &[
            "Algorithm design", "Bioinformatics", "Computer graphics", "Computer programming",
            "Computer vision", "Cryptography", "Data structures", "Distributed computing",
            "Image processing", "Machine learning", "Operating systems", "Parallel computing",
            "Relational databases", "Software engineering", "Structured Storage",
            "Symbolic computation", "network security",
        ],
    ),
    (
        "Civil",
        &[
            "Ambient Intelligence", "Bamboo as a Building Material", "Construction Management",
            "Geotextile", "Green Building", "Highway Network System", "Nano Concrete",
            "Rainwater Harvesting", "Remote Sensing", "Smart Material", "Solar Energy",
            "Stealth Technology", "Suspension Bridge", "Transparent Concrete",
            "Underwater Windmill", "Water Pollution",
        ],
    ),
    (
        "ECE",
        &[
            "Analog signal processing", "Control engineering", "Digital control",
            "Electric motor", "Electrical circuits", "Electrical generator", "Electrical network",
            "Electricity", "Lorentz force law", "Microcontroller", "Operational amplifier",
            "PID controller", "Satellite radio", "Signal-flow graph", "Single-phase electric power",
            "State space representation", "System identification", "Voltage law",
        ],
    ),
    (
        "MAE",
        &[
            "Fluid mechanics", "Hydraulics", "Internal combustion engine", "Machine design",
            "Manufacturing engineering", "Materials Engineering", "Strength of materials",
            "Thermodynamics", "computer-aided design",
        ],
    ),
    (
        "Medical",
        &[
            "Addiction", "Allergies", "Alzheimer's Disease", "Ankylosing Spondylitis", "Anxiety",
            "Asthma", "Atopic Dermatitis", "Atrial Fibrillation", "Autism", "Bipolar Disorder",
            "Birth Control", "Cancer", "Children's Health", "Crohn's Disease", "Dementia",
            "Depression", "Diabetes", "Digestive Health", "Emergency Contraception",
            "Fungal Infection", "HIV/AIDS", "Headache", "Healthy Sleep", "Heart Disease",
            "Hepatitis C", "Hereditary Angioedema", "Hypothyroidism",
            "Idiopathic Pulmonary Fibrosis", "Irritable Bowel Syndrome", "Kidney Health",
            "Low Testosterone", "Lymphoma", "Medicare", "Menopause", "Mental Health", "Migraine",
            "Multiple Sclerosis", "Myelofibrosis", "Osteoarthritis", "Osteoporosis",
            "Outdoor Health", "Overactive Bladder", "Parenting", "Parkinson's Disease",
            "Polycythemia Vera", "Psoriasis", "Psoriatic Arthritis", "Rheumatoid Arthritis",
            "Schizophrenia", "Senior Health", "Skin Care", "Smoking Cessation", "Sports Injuries",
            "Sprains and Strains", "Stress Management", "Weight Loss",
        ],
    ),
    (
        "Psychology",
        &[
            "Antisocial personality disorder", "Attention", "Borderline personality disorder",
            "Child abuse", "Depression", "Eating disorders", "False memories", "Gender roles",
            "Leadership", "Media violence", "Nonverbal communication", "Person perception",
            "Prejudice", "Prenatal development", "Problem-solving", "Prosocial behavior",
            "Schizophrenia", "Seasonal affective disorder", "Social cognition",
        ],
    ),
    (
        "Biochemistry",
        &[
            "Cell biology", "DNA/RNA sequencing", "Enzymology", "Genetics", "Human Metabolism",
            "Immunology", "Molecular biology", "Northern blotting", "Polymerase chain reaction",
            "Southern blotting",
        ],
    ),
];
