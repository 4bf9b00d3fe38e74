use std::io::Write;

use serde::{Deserialize, Serialize};

use super::EvalError;
use crate::kb::KnowledgeBase;
use crate::prompt::PromptKit;
use crate::relation::Relation;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Turn {
    pub role: String,
    pub text: String,
}

/// A post's training conversation: one question/answer pair per relation.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct InstructionPair {
    pub post_id: String,
    pub turns: Vec<Turn>,
}

/// Builds the conversation for one post from its stored artifacts.
///
/// Each question is the intention prompt for that relation; each answer is
/// the distilled intention sentence. Turns follow taxonomy order.
pub fn instruction_pair(kb: &KnowledgeBase, kit: &PromptKit, post_id: &str) -> Result<InstructionPair, EvalError> {
    let post = kb.post(post_id)?;
    let keyinfo = kb.keyinfo(post_id)?;
    let records = kb.intentions_for(post_id)?;
    let mut missing: Vec<String> = Vec::new();
    if post.is_none() {
        missing.push("post".into());
    }
    if keyinfo.is_none() {
        missing.push("keyinfo".into());
    }
    missing.extend(
        Relation::ALL
            .iter()
            .filter(|r| !records.iter().any(|rec| rec.relation == **r))
            .map(|r| r.code().to_string()),
    );
    let (Some(post), Some(keyinfo), true) = (post, keyinfo, missing.is_empty()) else {
        return Err(EvalError::IncompletePost {
            post_id: post_id.to_string(),
            missing,
        });
    };
    let desc = kb.description(post_id)?;
    let mut turns = Vec::with_capacity(2 * Relation::ALL.len());
    for rec in records {
        let question = kit.render_intention_prompt(&post.text, desc.as_ref().map(|d| d.text.as_str()), &keyinfo, rec.relation)?;
        turns.push(Turn {
            role: "user".into(),
            text: question,
        });
        turns.push(Turn {
            role: "assistant".into(),
            text: rec.text,
        });
    }
    Ok(InstructionPair {
        post_id: post_id.to_string(),
        turns,
    })
}

/// Writes one conversation per line for `post_ids`. Nothing is written if any post is incomplete.
pub fn export_instructions(
    kb: &KnowledgeBase,
    kit: &PromptKit,
    post_ids: &[String],
    mut out: impl Write,
) -> Result<usize, EvalError> {
    let pairs = post_ids
        .iter()
        .map(|id| instruction_pair(kb, kit, id))
        .collect::<Result<Vec<_>, _>>()?;
    for pair in &pairs {
        serde_json::to_writer(&mut out, pair).map_err(std::io::Error::other)?;
        out.write_all(b"\n")?;
    }
    out.flush()?;
    Ok(pairs.len())
}
