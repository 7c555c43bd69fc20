//! Prompt templates for fine-tuning, prediction, rewriting, RAG generation,
//! landmark choice and chain-of-thought labeling.
//!
//! The section headers (`*Primary Document for Augmentation:` and friends) are
//! part of the contract with the mock server and the extraction code, so keep
//! them stable.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

pub const REWRITE_ORIGINAL: &str = "*Original Text:";
pub const REWRITE_TAIL: &str = "Rewritten Text:";
pub const RAG_PRIMARY: &str = "*Primary Document for Augmentation:";
pub const RAG_LABELED: &str = "*Reference Labeled Documents:";
pub const RAG_UNLABELED: &str = "*Reference Unlabeled Documents:";
pub const RAG_LABELS: &str = "*List of Available Labels:";
pub const RAG_TASK: &str = "*Task:";
pub const SELECT_HEADER: &str = "Documents in the cluster:";
pub const COT_TARGET: &str = "*Target Document for Prediction:";
pub const TAGS_HEADER: &str = "Assign tags for the following";

/// A labeled reference shown to the generator.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledRef<'a> {
    pub text: &'a str,
    pub labels: &'a [String],
}

/// Fine-tuning / prediction prompt. Ends at `Answer:`; the training target
/// is the bracketed label list.
pub fn tagging_prompt(subject: &str, document: &str) -> String {
    format!("{TAGS_HEADER} {subject} Document:\n\n{document}\n\nAnswer:")
}

pub fn rewrite_prompt(document: &str) -> String {
    format!(
        "*Task Description: Rewrite the following text in English, maintaing the original meaning but using different words and sentence structures. The new version should be clear and concise, and it should not alter the core message of the original text.\n\n\
         {REWRITE_ORIGINAL}\n{document}\n\n{REWRITE_TAIL}"
    )
}

/// `Content: ...` / `Label: [...]` block, the document format the generator
/// is asked to follow.
pub fn format_document(content: &str, labels: &[String]) -> String {
    format!("Content: {content}\nLabel: [{}]", labels.join(", "))
}

pub fn rag_prompt(
    label_listing: &str,
    labeled: &[LabeledRef<'_>],
    unlabeled: &[&str],
    primary: &str,
) -> String {
    let labeled_block: Vec<String> = labeled
        .iter()
        .map(|r| format_document(r.text, r.labels))
        .collect();
    let unlabeled_block: Vec<String> = unlabeled.iter().map(|t| format!("Content: {t}")).collect();
    format!(
        "*Task Description:\nYou are provided with a set of similar documents, some of which are labeled and others are not. Your task is to generate a sample document based on the primary document, using both the labeled and unlabeled documents as references.\n\n\
         {RAG_LABELS}\n{label_listing}\n\n\
         {RAG_LABELED}\n{}\n\n\
         {RAG_UNLABELED}\n{}\n\n\
         {RAG_PRIMARY}\n{primary}\n\n\
         {RAG_TASK}\nUsing the labeled and unlabeled documents as a guide, create a new document based on the primary document and assign it the appropriate labels from the available list.\n\n\
         *Document Format:\nContent:\nLabel: [Your assigned label]\n\n\
         *Generated Example:",
        labeled_block.join("\n\n"),
        unlabeled_block.join("\n\n"),
    )
}

/// Representative-choice prompt; documents are numbered from 1.
pub fn select_prompt(documents: &[&str]) -> String {
    let listed: Vec<String> = documents
        .iter()
        .enumerate()
        .map(|(i, d)| format!("{}-. {d}", i + 1))
        .collect();
    format!(
        "You have been provided with a set of similar documents, each indexed by a number. Your task is to identify the most representative example from this cluster of documents. Please carefully analyze the given documents and select one document that best captures the common essence and characteristics of the samples. The selection should emphasize the representativeness and relevance of the chosen sample to the category, so that it can serve as a reference for labeling the entire cluster.\n\n\
         {SELECT_HEADER}\n\n{}\n\n\
         Please choose one document that could best serve as a reference for labeling the entire cluster, and return only the index number of your selection, in format such as [0], [1], etc.\n\n\
         Answer:",
        listed.join("\n\n")
    )
}

pub fn cot_prompt(label_listing: &str, labeled: &[LabeledRef<'_>], target: &str) -> String {
    let labeled_block: Vec<String> = labeled
        .iter()
        .map(|r| format_document(r.text, r.labels))
        .collect();
    format!(
        "*Task Description: You are provided with a set of similar documents. Your task is to predict the label for the target document, using the labeled document examples as references.\n\n\
         {RAG_LABELS}\n{label_listing}\n\n\
         {RAG_LABELED}\n{}\n\
         {COT_TARGET}\n{target}\n\n\
         {RAG_TASK}\nPredict the label for the target document. Please provide your reasoning before asssigning the label.\n\n\
         *Format:\nThought: [Your thoughts]\nLabel: [Your assigned label]\n\n\
         Answer:",
        labeled_block.join("\n\n"),
    )
}

/// Text between `header` (on its own line) and the next blank-line-separated
/// `*Section:` header or `end` marker. Used by mocks and tests to read back
/// prompt sections.
pub fn section<'a>(prompt: &'a str, header: &str, end: &[&str]) -> Option<&'a str> {
    let start = prompt.find(header)? + header.len();
    let rest = &prompt[start..];
    let stop = end
        .iter()
        .filter_map(|e| rest.find(e))
        .min()
        .unwrap_or(rest.len());
    Some(rest[..stop].trim())
}
