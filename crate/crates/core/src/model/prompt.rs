//! Deterministic text prompts for each (modality, task) pair.
//!
//! A template is lowercased, split on non-alphanumeric characters, and each
//! word is hashed with 64-bit FNV-1a into the vocabulary. Sequences are padded
//! with id 0 or truncated to the prompt length.

use crate::error::{Error, Result};
use crate::taxonomy::{Modality, Task};

pub const PAD_ID: usize = 0;

const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;

pub fn fnv1a64(bytes: &[u8]) -> u64 {
    bytes.iter().fold(FNV_OFFSET, |h, &b| (h ^ u64::from(b)).wrapping_mul(FNV_PRIME))
}

const TEMPLATES: &[((Modality, Task), &str)] = &[
    ((Modality::Microscopy, Task::Edd), "a cell region pasted from another microscopy image into this one"),
    ((Modality::Microscopy, Task::Idd), "duplicate the highlighted cell region within the same microscopy image"),
    ((Modality::Microscopy, Task::Cstd), "a sharp cut and spliced transition across the microscopy field"),
    ((Modality::Microscopy, Task::Removal), "cells erased and smoothly filled in the microscopy image"),
    ((Modality::Blot, Task::Edd), "a band pasted from a different western blot into this blot"),
    ((Modality::Blot, Task::Idd), "duplicate the highlighted band within the same western blot"),
    ((Modality::Blot, Task::Cstd), "a sharp cut and spliced transition between blot lanes"),
    ((Modality::Blot, Task::Removal), "a band erased and smoothly filled in the western blot"),
    ((Modality::Macroscopy, Task::Edd), "a tissue region pasted from another macroscopy photograph"),
    ((Modality::Macroscopy, Task::Idd), "duplicate the highlighted tissue region within the same macroscopy photograph"),
    ((Modality::Macroscopy, Task::Cstd), "a sharp cut and spliced transition across the macroscopy photograph"),
    ((Modality::Macroscopy, Task::Removal), "a tissue feature erased and smoothly filled in the macroscopy photograph"),
    ((Modality::Facs, Task::Edd), "a cluster of events pasted from another flow cytometry plot"),
    ((Modality::Facs, Task::Idd), "duplicate the highlighted event cluster within the same flow cytometry plot"),
    ((Modality::Facs, Task::Cstd), "a sharp cut and spliced transition across the flow cytometry plot"),
    ((Modality::Facs, Task::Removal), "an event cluster erased and smoothly filled in the flow cytometry plot"),
];

/// Template text registered for `(modality, task)`.
pub fn template(modality: Modality, task: Task) -> Result<&'static str> {
    TEMPLATES
        .iter()
        .find(|(k, _)| *k == (modality, task))
        .map(|(_, t)| *t)
        .ok_or_else(|| {
            let keys: Vec<String> = TEMPLATES.iter().map(|((m, t), _)| format!("({m}, {t})")).collect();
            Error::Lookup(format!("no prompt template for ({modality}, {task}); available: {}", keys.join(", ")))
        })
}

/// Lowercased words of `text`, split on anything that is not alphanumeric.
pub fn words(text: &str) -> Vec<String> {
    text.to_lowercase()
        .split(|c: char| !c.is_alphanumeric())
        .filter(|w| !w.is_empty())
        .map(str::to_owned)
        .collect()
}

/// Hashes words into `[0, vocab)` and pads or truncates to `len`.
pub fn tokenize(text: &str, vocab: usize, len: usize) -> Vec<usize> {
    let mut ids: Vec<usize> = words(text).iter().map(|w| (fnv1a64(w.as_bytes()) % vocab as u64) as usize).collect();
    ids.resize(len, PAD_ID);
    ids
}

/// Token ids of a registered prompt.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PromptTokens {
    pub ids: Vec<usize>,
    pub source_template: (Modality, Task),
}

impl PromptTokens {
    pub fn new(modality: Modality, task: Task, vocab: usize, len: usize) -> Result<Self> {
        let text = template(modality, task)?;
        Ok(Self {
            ids: tokenize(text, vocab, len),
            source_template: (modality, task),
        })
    }
}
